#include "rts/sequence_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "rts/errors.hpp"

namespace rts::io {

namespace {

bool is_image(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

bool numeric_stem(const fs::path& p) {
    const std::string s = p.stem().string();
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::string frame_stem(std::size_t i) {
    std::ostringstream s;
    s << std::setw(5) << std::setfill('0') << i;
    return s.str();
}

}  // namespace

Frame read_frame(const fs::path& path, int frame_index) {
    cv::Mat img = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (img.empty()) throw MissingInput("cannot read image " + path.string());
    Frame f{Tensor({3, img.rows, img.cols}), frame_index};
    for (int r = 0; r < img.rows; ++r) {
        const auto* row = img.ptr<cv::Vec3b>(r);
        for (int c = 0; c < img.cols; ++c)
            for (int ch = 0; ch < 3; ++ch) f.pixels.at(ch, r, c) = row[c][2 - ch] / 255.0;  // BGR -> RGB
    }
    return f;
}

void write_frame(const fs::path& path, const Frame& frame) {
    cv::Mat img(frame.height(), frame.width(), CV_8UC3);
    for (int r = 0; r < img.rows; ++r) {
        auto* row = img.ptr<cv::Vec3b>(r);
        for (int c = 0; c < img.cols; ++c)
            for (int ch = 0; ch < 3; ++ch)
                row[c][2 - ch] = cv::saturate_cast<uchar>(std::lround(frame.pixels.at(ch, r, c) * 255.0));
    }
    if (!cv::imwrite(path.string(), img)) throw Error("cannot write image " + path.string());
}

Tensor read_mask(const fs::path& path) {
    cv::Mat img = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
    if (img.empty()) throw MissingInput("cannot read mask " + path.string());
    Tensor m({img.rows, img.cols});
    for (int r = 0; r < img.rows; ++r) {
        const auto* row = img.ptr<uchar>(r);
        for (int c = 0; c < img.cols; ++c) m.at(r, c) = row[c] ? 1.0 : 0.0;
    }
    return m;
}

void write_mask(const fs::path& path, const Tensor& probs, double threshold) {
    cv::Mat img(probs.dim(0), probs.dim(1), CV_8UC1);
    for (int r = 0; r < img.rows; ++r) {
        auto* row = img.ptr<uchar>(r);
        for (int c = 0; c < img.cols; ++c) row[c] = probs.at(r, c) >= threshold ? 255 : 0;
    }
    if (!cv::imwrite(path.string(), img)) throw Error("cannot write mask " + path.string());
}

std::string format_box(const OptBox& box) {
    if (!box) return "nan,nan,nan,nan";
    std::ostringstream s;
    s << std::setprecision(10) << box->x << ',' << box->y << ',' << box->w << ',' << box->h;
    return s.str();
}

OptBox parse_box(const std::string& line) {
    std::string t = trim(line);
    std::replace(t.begin(), t.end(), '\t', ',');
    std::replace(t.begin(), t.end(), ' ', ',');
    std::stringstream ss(t);
    std::string tok;
    std::vector<double> v;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        std::string low = tok;
        std::transform(low.begin(), low.end(), low.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (low == "nan") {
            v.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        try {
            std::size_t used = 0;
            v.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw ConfigError("malformed box line '" + line + "'");
        }
    }
    if (v.size() != 4) throw ConfigError("box line needs 4 values: '" + line + "'");
    if (std::any_of(v.begin(), v.end(), [](double x) { return std::isnan(x); })) return std::nullopt;
    if (v[2] <= 0.0 || v[3] <= 0.0) return std::nullopt;
    return BBox{v[0], v[1], v[2], v[3]};
}

std::vector<OptBox> read_boxes(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingInput("cannot read box file " + path.string());
    std::vector<OptBox> out;
    std::string line;
    while (std::getline(in, line))
        if (!trim(line).empty()) out.push_back(parse_box(line));
    return out;
}

void write_boxes(const fs::path& path, const std::vector<OptBox>& boxes) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write box file " + path.string());
    for (const auto& b : boxes) out << format_box(b) << '\n';
}

SequenceData load_sequence(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw MissingInput("sequence directory " + dir.string() + " does not exist");
    std::vector<fs::path> images;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && is_image(e.path()) && numeric_stem(e.path())) images.push_back(e.path());
    if (images.empty()) throw MissingInput("no numbered frames in " + dir.string());
    std::sort(images.begin(), images.end(),
              [](const fs::path& a, const fs::path& b) { return std::stoull(a.stem().string()) < std::stoull(b.stem().string()); });

    SequenceData seq;
    seq.name = dir.filename().string();
    if (seq.name.empty()) seq.name = dir.parent_path().filename().string();
    for (std::size_t i = 0; i < images.size(); ++i) {
        seq.frames.push_back(read_frame(images[i], static_cast<int>(i)));
        seq.stems.push_back(images[i].stem().string());
    }

    if (fs::exists(dir / "init_mask.png")) {
        seq.init.mask = read_mask(dir / "init_mask.png");
    } else if (fs::exists(dir / "init.txt")) {
        const auto boxes = read_boxes(dir / "init.txt");
        if (boxes.empty() || !boxes.front()) throw InvalidInit("init.txt must hold one valid x,y,w,h line");
        seq.init.box = boxes.front();
    } else {
        throw MissingInput("no init.txt or init_mask.png in " + dir.string());
    }

    if (fs::exists(dir / "groundtruth.txt")) {
        seq.groundtruth = read_boxes(dir / "groundtruth.txt");
        if (seq.groundtruth.size() != seq.frames.size())
            throw InvalidSequence("groundtruth.txt has " + std::to_string(seq.groundtruth.size()) + " lines for " +
                                  std::to_string(seq.frames.size()) + " frames");
    }
    if (fs::is_directory(dir / "masks")) {
        for (const auto& stem : seq.stems) seq.gt_masks.push_back(read_mask(dir / "masks" / (stem + ".png")));
    }
    if (fs::exists(dir / "suppress_seg.txt")) {
        std::ifstream in(dir / "suppress_seg.txt");
        int idx = 0;
        while (in >> idx) seq.suppress_seg.insert(idx);
    }
    return seq;
}

void save_sequence(const fs::path& dir, const std::vector<Frame>& frames, const std::vector<Tensor>& masks,
                   const std::vector<OptBox>& boxes, const std::set<int>& suppress_seg) {
    if (frames.empty() || boxes.size() != frames.size() || (!masks.empty() && masks.size() != frames.size()))
        throw InvalidSequence("frames, masks and boxes must have matching lengths");
    fs::create_directories(dir);
    for (std::size_t i = 0; i < frames.size(); ++i) write_frame(dir / (frame_stem(i) + ".png"), frames[i]);
    if (!masks.empty()) {
        fs::create_directories(dir / "masks");
        for (std::size_t i = 0; i < masks.size(); ++i) write_mask(dir / "masks" / (frame_stem(i) + ".png"), masks[i]);
    }
    if (!boxes.front()) throw InvalidInit("first frame has no target box");
    write_boxes(dir / "init.txt", {boxes.front()});
    write_boxes(dir / "groundtruth.txt", boxes);
    if (!suppress_seg.empty()) {
        std::ofstream out(dir / "suppress_seg.txt");
        for (int i : suppress_seg) out << i << '\n';
    }
}

}  // namespace rts::io
