#pragma once

#include <cstddef>
#include <vector>

#include "deepmark/tensor.hpp"

namespace deepmark {

class Schema;

struct Point {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Point&, const Point&) = default;
};

/// Axis-aligned box, top-left corner plus size.
struct Box {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;
    friend bool operator==(const Box&, const Box&) = default;
};

struct Peak {
    std::size_t channel = 0;
    std::size_t row = 0;
    std::size_t col = 0;
    float score = 0.0f;
    friend bool operator==(const Peak&, const Peak&) = default;
};

enum class PeakMode {
    Joint,       // top_k across all channels together (center heatmap)
    PerChannel,  // top_k within each channel (keypoint heatmap)
};

enum class KeypointSource { Refined, CoarseFallback };

/// One decoded object. Coordinates are input-image pixels.
struct Detection {
    int class_id = 0;
    double score_bbox = 0.0;
    double score_kps = 0.0;
    double final_score = 0.0;
    Box box;
    std::vector<Point> coarse_kps;
    std::vector<Point> refined_kps;
    std::vector<Point> final_kps;
    std::vector<double> kp_scores;
    std::vector<KeypointSource> kp_source;
};

struct DecodeParams {
    std::size_t top_k = 100;
    float center_score_threshold = 0.05f;
    float kp_score_threshold = 0.1f;
};

/// How a coarse keypoint picks its heatmap candidate.
enum class RefinementMode {
    /// Closest qualifying local maximum of the keypoint heatmap.
    ClosestPeak,
    /// Highest-scoring local maximum of the keypoint heatmap after the
    /// distance mask around the coarse position is applied.
    MaskedMaximum,
};

/// Wall time spent per decode stage, in seconds. Accumulates across calls.
struct StageTimes {
    double smooth = 0.0;
    double peaks = 0.0;
    double refine = 0.0;
    double nms = 0.0;
    double other = 0.0;

    double total() const { return smooth + peaks + refine + nms + other; }
};

/// Cells that are >= all of their 3×3 neighbours, sorted by score descending,
/// ties by flat (channel, row, col) index ascending. Joint mode keeps the best
/// top_k overall; per-channel mode keeps top_k of each channel, channels in
/// ascending order.
std::vector<Peak> extract_peaks(const Tensor& heatmap, std::size_t top_k,
                                PeakMode mode = PeakMode::Joint);

/// Heatmap coordinates to input-image pixels.
constexpr Point to_image_coords(Point p, int stride) {
    return {p.x * stride, p.y * stride};
}

/// Decodes detections in center-peak order. Refined candidates must lie inside
/// the detection box; keypoints without one fall back to the regressed point.
std::vector<Detection> decode(const RawOutputs& raw, const Schema& schema,
                              const DecodeParams& params = {},
                              RefinementMode mode = RefinementMode::ClosestPeak,
                              StageTimes* times = nullptr);

}  // namespace deepmark
