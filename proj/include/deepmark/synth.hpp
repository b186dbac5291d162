#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "deepmark/decoder.hpp"
#include "deepmark/eval.hpp"
#include "deepmark/tensor.hpp"

namespace deepmark {

class Schema;

/// Deterministic generator used for everything seeded in this library.
/// SplitMix64 (Steele, Lea & Flood 2014): state += 0x9E3779B97F4A7C15, then
/// z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9; z = (z ^ (z >> 27)) * 0x94D049BB133111EB;
/// z ^ (z >> 31). Uniform doubles take the top 53 bits; normals use Box-Muller.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next();
    /// [0, 1)
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// [0, n)
    std::uint64_t below(std::uint64_t n);
    double normal();

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

struct SceneKeypoint {
    double x = 0.0;
    double y = 0.0;
    int visibility = 2;  // 0 absent, 1 occluded, 2 visible
};

struct SceneObject {
    int class_id = 1;
    Box box;  // pixels
    std::vector<SceneKeypoint> keypoints;
};

struct Scene {
    ImageSize image_size;
    std::vector<SceneObject> objects;
};

inline constexpr int kMaxObjectsPerImage = 5;

/// Random scene: classes uniform over the schema's classes, boxes at least
/// 16 px on each side and pairwise disjoint, keypoints inside their box.
///
/// Keypoints are redrawn until no two in the scene share a `cell` x `cell`
/// heatmap cell, since one kp_offset cell can hold only one remainder. Boxes
/// are made large enough for that when the image allows it; otherwise the
/// last draw is kept.
/// Throws TooManyObjects unless 1 <= n_objects <= 5.
Scene generate_scene(std::uint64_t seed, ImageSize image_size, int n_objects,
                     const Schema& schema, int cell = 4);

/// sigma = max(1, min(w, h) / (6 * stride)) for a box in pixels.
double render_sigma(const Box& box, int stride);

/// Renders the training targets of a scene into the six heads.
///
/// Center and keypoint splats are Gaussians with apex 1.0 centered on the
/// nearest cell, combined by elementwise max. Offsets hold the signed
/// remainder (position - cell) in [-0.5, 0.5]; kp_regression at the center cell
/// holds keypoint minus center cell. Absent keypoints (visibility 0) get a
/// regression vector but no heatmap splat.
RawOutputs render_outputs(const Scene& scene, const Schema& schema, int stride = 4);

/// Adds N(0, sigma) noise to every head; heatmaps are clamped to [0, 1].
RawOutputs perturb(const RawOutputs& raw, double sigma, std::uint64_t seed);

std::vector<Annotation> scene_to_annotations(const Scene& scene, long long image_id);

/// Detection records that reproduce the scene exactly (for evaluator checks).
std::vector<Prediction> scene_to_predictions(const Scene& scene, long long image_id);

}  // namespace deepmark
