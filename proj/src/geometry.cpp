#include "sctc/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace sctc {

double intersection_area(const Box& a, const Box& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  return (w > 0.0 && h > 0.0) ? w * h : 0.0;
}

double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

Box union_box(const Box& a, const Box& b) {
  return {std::min(a.x1, b.x1), std::min(a.y1, b.y1), std::max(a.x2, b.x2),
          std::max(a.y2, b.y2)};
}

SpatialFeature spatial_feature(const Box& human, const Box& object, double image_w,
                               double image_h) {
  const double image_area = image_w * image_h;
  const double dx = (object.cx() - human.cx()) / image_w;
  const double dy = (object.cy() - human.cy()) / image_h;
  const double inter = intersection_area(human, object);
  SpatialFeature f;
  f.values = {dx,
              dy,
              std::sqrt(dx * dx + dy * dy),
              (dx == 0.0 && dy == 0.0) ? 0.0 : std::atan2(dy, dx),
              human.area() / image_area,
              object.area() / image_area,
              inter / image_area,
              (human.area() + object.area() - inter) / image_area};
  return f;
}

}  // namespace sctc
