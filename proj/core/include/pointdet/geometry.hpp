#pragma once

#include <cstdint>
#include <vector>

namespace pointdet {

// Axis-aligned box in corner form. Coordinates are continuous image
// coordinates with x2 >= x1 and y2 >= y1; a degenerate box (zero width or
// height) is legal and has zero area.
struct BBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
};

struct Point2D {
  double x = 0.0;
  double y = 0.0;
};

// Box paired with a class label and a confidence score. `label` indexes the
// foreground classes [0, C); background is never stored as a LabeledBox.
struct LabeledBox {
  BBox box;
  int label = 0;
  double score = 1.0;
};

// Single point annotation: a click location plus its class label.
struct PointAnnotation {
  Point2D p;
  int label = 0;
};

double area(const BBox& b);

double intersection_area(const BBox& a, const BBox& b);

// Intersection-over-union. Zero when the union is empty (two degenerate
// boxes), otherwise inter / (areaA + areaB - inter).
double iou(const BBox& a, const BBox& b);

// Boundary-inclusive containment test: points on the box edge count as
// inside. This mirrors the >=/<= convention used when converting clicks to
// box membership, so a click on a shared edge belongs to both boxes.
bool contains(const BBox& b, const Point2D& p);

// Clamp the box to [0, w] x [0, h]. The result may be degenerate if the box
// lies entirely outside the image.
BBox clip(const BBox& b, double image_w, double image_h);

}  // namespace pointdet
