#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "deepmark/decoder.hpp"

namespace deepmark {

class Schema;

struct AnnotatedKeypoint {
    double x = 0.0;
    double y = 0.0;
    int v = 0;  // 0 absent, 1 occluded, 2 visible
};

struct Annotation {
    long long image_id = 0;
    int class_id = 0;
    Box box;
    std::vector<AnnotatedKeypoint> keypoints;

    double area() const { return box.w * box.h; }
};

struct ScoredKeypoint {
    double x = 0.0;
    double y = 0.0;
    double s = 0.0;
};

struct Prediction {
    long long image_id = 0;
    int class_id = 0;
    Box box;
    double score = 0.0;
    std::vector<ScoredKeypoint> keypoints;
};

/// Intersection over union; 0 when the union is empty.
double iou(const Box& a, const Box& b);

enum class VisibilityMode {
    Labeled,      // v >= 1
    VisibleOnly,  // v == 2
};

/// Mean over counted ground-truth keypoints of exp(-d^2 / (2 * area * k^2)).
/// Returns 0 when no keypoint is counted. Throws LengthMismatch.
double oks(const std::vector<ScoredKeypoint>& pred, const Annotation& gt,
           const std::vector<double>& constants, VisibilityMode mode = VisibilityMode::Labeled);

enum class Similarity { Iou, Oks };

struct MeanApResult {
    double map = 0.0;
    /// AP per class id, averaged over thresholds.
    std::map<int, double> per_class;
    /// mAP at each threshold.
    std::vector<double> per_threshold;
};

/// 0.50, 0.55, ..., 0.95
std::vector<double> coco_thresholds();

/// COCO-style mean AP. Predictions are matched greedily in score order (ties
/// by input index) to the unmatched same-image, same-class ground truth of
/// highest similarity >= threshold. AP uses 101-point interpolation and is
/// averaged over classes present in the ground truth. For OKS, ground truths
/// without counted keypoints do not count as positives.
MeanApResult mean_ap(const std::vector<Prediction>& preds, const std::vector<Annotation>& gts,
                     Similarity similarity, const Schema& schema,
                     const std::vector<double>& thresholds = coco_thresholds(),
                     VisibilityMode mode = VisibilityMode::Labeled);

/// AP of one precision/recall sweep using 101 recall points.
double interpolated_ap(const std::vector<double>& precision, const std::vector<double>& recall);

Prediction to_prediction(const Detection& d, long long image_id);

// JSON I/O, COCO results conventions: category_id, bbox [x,y,w,h], flat
// keypoint triplets.
std::string predictions_to_json(const std::vector<Prediction>& preds);
std::vector<Prediction> predictions_from_json(std::string_view text);
std::string annotations_to_json(const std::vector<Annotation>& gts);
std::vector<Annotation> annotations_from_json(std::string_view text);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace deepmark
