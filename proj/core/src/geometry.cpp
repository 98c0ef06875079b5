#include "pointdet/geometry.hpp"

#include <algorithm>

namespace pointdet {

double area(const BBox& b) {
  const double w = std::max(0.0, b.x2 - b.x1);
  const double h = std::max(0.0, b.y2 - b.y1);
  return w * h;
}

double intersection_area(const BBox& a, const BBox& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

double iou(const BBox& a, const BBox& b) {
  const double inter = intersection_area(a, b);
  const double uni = area(a) + area(b) - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

bool contains(const BBox& b, const Point2D& p) {
  return p.x >= b.x1 && p.x <= b.x2 && p.y >= b.y1 && p.y <= b.y2;
}

BBox clip(const BBox& b, double image_w, double image_h) {
  BBox r;
  r.x1 = std::clamp(b.x1, 0.0, image_w);
  r.y1 = std::clamp(b.y1, 0.0, image_h);
  r.x2 = std::clamp(b.x2, 0.0, image_w);
  r.y2 = std::clamp(b.y2, 0.0, image_h);
  // Clamping preserves x1 <= x2 because clamp is monotone.
  return r;
}

}  // namespace pointdet
