#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "partforge/common.hpp"

namespace partforge {

// Axis-aligned rectangle in continuous pixel coordinates, origin top-left.
// Half-open on both axes: area = (x_max - x_min) * (y_max - y_min).
struct BBox {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double area() const { return width() * height(); }

    bool valid() const {
        return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) &&
               std::isfinite(y_max) && x_min < x_max && y_min < y_max;
    }

    bool contains(const BBox& other, double slack = 1e-9) const {
        return other.x_min >= x_min - slack && other.y_min >= y_min - slack &&
               other.x_max <= x_max + slack && other.y_max <= y_max + slack;
    }

    bool operator==(const BBox& other) const = default;
};

// Same rectangle expressed in a viewpoint's common frame of reference.
struct NormalizedBox {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    double area() const { return (x_max - x_min) * (y_max - y_min); }

    bool operator==(const NormalizedBox& other) const = default;
};

namespace detail {

template <typename Box>
double iou_impl(const Box& a, const Box& b) {
    const double ix = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double iy = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    if (ix <= 0.0 || iy <= 0.0) return 0.0;
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    return uni <= 0.0 ? 0.0 : inter / uni;
}

}  // namespace detail

inline double iou(const BBox& a, const BBox& b) { return detail::iou_impl(a, b); }
inline double iou(const NormalizedBox& a, const NormalizedBox& b) { return detail::iou_impl(a, b); }

// D(w', w) = 1 - IoU. Both boxes must already live in the same frame.
inline double proposal_distance(const NormalizedBox& a, const NormalizedBox& b) {
    return 1.0 - iou(a, b);
}

struct Size {
    double width = 0.0;
    double height = 0.0;
};

// Rescale a box from its image into the viewpoint frame. X scales by
// frame.width / image.width, Y by frame.height / image.height.
inline NormalizedBox normalize_box(const BBox& b, const Size& image, const Size& frame) {
    require(image.width > 0.0 && image.height > 0.0 && frame.width > 0.0 && frame.height > 0.0,
            errc::invalid_argument, "normalize_box: non-positive dimensions");
    const double sx = frame.width / image.width;
    const double sy = frame.height / image.height;
    return NormalizedBox{b.x_min * sx, b.y_min * sy, b.x_max * sx, b.y_max * sy};
}

inline BBox denormalize_box(const NormalizedBox& b, const Size& image, const Size& frame) {
    require(image.width > 0.0 && image.height > 0.0 && frame.width > 0.0 && frame.height > 0.0,
            errc::invalid_argument, "denormalize_box: non-positive dimensions");
    const double sx = image.width / frame.width;
    const double sy = image.height / frame.height;
    return BBox{b.x_min * sx, b.y_min * sy, b.x_max * sx, b.y_max * sy};
}

struct Detection {
    BBox box;
    double score = 0.0;
    int part_id = 0;
};

// Greedy non-maximum suppression. Sort by descending score (ties keep input
// order), keep a detection iff its IoU with every kept one is < threshold.
inline std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold) {
    require(iou_threshold >= 0.0 && iou_threshold <= 1.0, errc::invalid_argument,
            "nms: threshold outside [0,1]");
    std::vector<std::size_t> order(dets.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
    std::vector<Detection> kept;
    for (const std::size_t idx : order) {
        bool suppressed = false;
        for (const Detection& k : kept) {
            if (iou(dets[idx].box, k.box) >= iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(dets[idx]);
    }
    return kept;
}

// Indices of the highest-scoring mutually non-overlapping boxes: drop scores
// below min_score, suppress greedily at iou_threshold, return at most
// max_keep survivors in descending score order (ties keep input order).
inline std::vector<int> select_top_boxes(const std::vector<BBox>& boxes,
                                         const std::vector<double>& scores, double iou_threshold,
                                         int max_keep, double min_score) {
    require(boxes.size() == scores.size(), errc::invalid_argument,
            "select_top_boxes: size mismatch");
    require(max_keep >= 0, errc::invalid_argument, "select_top_boxes: negative max_keep");
    std::vector<int> order;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        if (scores[i] >= min_score) order.push_back(static_cast<int>(i));
    }
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
    });
    std::vector<int> kept;
    for (const int idx : order) {
        if (static_cast<int>(kept.size()) >= max_keep) break;
        bool suppressed = false;
        for (const int k : kept) {
            if (iou(boxes[static_cast<std::size_t>(idx)], boxes[static_cast<std::size_t>(k)]) >=
                iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(idx);
    }
    return kept;
}

}  // namespace partforge
