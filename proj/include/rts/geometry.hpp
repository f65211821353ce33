#pragma once

#include <cmath>
#include <optional>

namespace rts {

/// Continuous pixel coordinates; integer values are pixel centers.
struct Point {
    double row = 0.0;
    double col = 0.0;
};

struct Size2 {
    double h = 0.0;
    double w = 0.0;
};

struct Resolution {
    int h = 0;
    int w = 0;
};

/// Axis-aligned box: (x, y) is the top-left corner in pixels, w/h its extent.
struct BBox {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    Point center() const { return {y + h / 2.0 - 0.5, x + w / 2.0 - 0.5}; }
    double area() const { return w * h; }
};

using OptBox = std::optional<BBox>;

inline bool finite(Point p) { return std::isfinite(p.row) && std::isfinite(p.col); }
inline bool finite(Size2 s) { return std::isfinite(s.h) && std::isfinite(s.w); }

}  // namespace rts
