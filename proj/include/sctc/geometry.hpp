#pragma once

#include <array>

namespace sctc {

// Axis-aligned box in pixels, (x1,y1) top-left, (x2,y2) bottom-right.
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
  bool valid() const { return x1 < x2 && y1 < y2; }

  bool operator==(const Box&) const = default;
};

double intersection_area(const Box& a, const Box& b);
double iou(const Box& a, const Box& b);
Box union_box(const Box& a, const Box& b);

// [dx, dy, ds, angle, A_h, A_o, A_I, A_U]: center offsets normalized by image
// width/height, their Euclidean norm, atan2(dy, dx), and areas normalized by
// image area.
struct SpatialFeature {
  static constexpr std::size_t kDim = 8;
  std::array<double, kDim> values{};

  double dx() const { return values[0]; }
  double dy() const { return values[1]; }
  double ds() const { return values[2]; }
  double angle() const { return values[3]; }
  double area_h() const { return values[4]; }
  double area_o() const { return values[5]; }
  double area_i() const { return values[6]; }
  double area_u() const { return values[7]; }
};

SpatialFeature spatial_feature(const Box& human, const Box& object, double image_w,
                               double image_h);

}  // namespace sctc
