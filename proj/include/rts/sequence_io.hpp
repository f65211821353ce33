#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rts/features.hpp"
#include "rts/geometry.hpp"
#include "rts/tracker.hpp"

namespace rts::io {

namespace fs = std::filesystem;

/// Directory layout read by `load_sequence`:
///   frames: numbered images (e.g. 00000.png) sorted by their numeric stem
///   init.txt ("x,y,w,h") or init_mask.png (nonzero = target)
///   groundtruth.txt (optional, one box line per frame)
///   masks/ (optional, one 0/255 PNG per frame with the frame's stem)
///   suppress_seg.txt (optional, frame indices with a simulated decoder failure)
struct SequenceData {
    std::string name;
    std::vector<Frame> frames;
    std::vector<std::string> stems;
    InitTarget init;
    std::vector<OptBox> groundtruth;  // empty when absent
    std::vector<Tensor> gt_masks;     // empty when absent
    std::set<int> suppress_seg;
};

Frame read_frame(const fs::path& path, int frame_index);
void write_frame(const fs::path& path, const Frame& frame);

/// [H, W] mask with values in {0, 1}; any nonzero pixel is foreground.
Tensor read_mask(const fs::path& path);
/// Writes {probs >= threshold} as 0/255.
void write_mask(const fs::path& path, const Tensor& probs, double threshold = 0.5);

/// One "x,y,w,h" line per entry, "nan,nan,nan,nan" for none.
std::vector<OptBox> read_boxes(const fs::path& path);
void write_boxes(const fs::path& path, const std::vector<OptBox>& boxes);
std::string format_box(const OptBox& box);
OptBox parse_box(const std::string& line);

/// Throws MissingInput when the directory, frames or init target are absent.
SequenceData load_sequence(const fs::path& dir);

/// Writes frames, init.txt, groundtruth.txt and masks/ in the layout above.
void save_sequence(const fs::path& dir, const std::vector<Frame>& frames, const std::vector<Tensor>& masks,
                   const std::vector<OptBox>& boxes, const std::set<int>& suppress_seg = {});

}  // namespace rts::io
