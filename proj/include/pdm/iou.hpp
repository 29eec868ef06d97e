#pragma once

#include "pdm/types.hpp"

namespace pdm {

enum class IouMode { Bev, Full3d };

// Rotated-rectangle polygon-clip intersection over union (bev); 3d adds the
// z-overlap. Degenerate boxes give 0.
double iou(const Box3D& a, const Box3D& b, IouMode mode);

struct Detection {
  Box3D box;        // box.label/box.score mirror the winning class
  Vec class_scores; // per-class sigmoid scores
};

// Drop below score_thr, greedy keep by descending score, suppress same-class
// overlap above iou_thr (3d IoU).
std::vector<Detection> nms(std::vector<Detection> dets, double iou_thr,
                           double score_thr);

}  // namespace pdm
