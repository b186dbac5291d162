#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "deepmark/decoder.hpp"
#include "deepmark/tensor.hpp"

namespace deepmark {

class Schema;

enum class Technique : unsigned {
    Rescore = 1u << 0,
    SmoothCenter = 1u << 1,
    SmoothKp = 1u << 2,
    Blend = 1u << 3,
    KpMask = 1u << 4,
    Nms = 1u << 5,
};

std::string_view to_string(Technique t);
/// Throws InvalidArgument on an unknown name.
Technique technique_from_string(std::string_view name);

class TechniqueSet {
public:
    constexpr TechniqueSet() = default;
    constexpr TechniqueSet(std::initializer_list<Technique> ts) {
        for (Technique t : ts) bits_ |= static_cast<unsigned>(t);
    }
    static constexpr TechniqueSet all() {
        return {Technique::Rescore, Technique::SmoothCenter, Technique::SmoothKp,
                Technique::Blend,   Technique::KpMask,       Technique::Nms};
    }

    constexpr bool has(Technique t) const { return (bits_ & static_cast<unsigned>(t)) != 0; }
    constexpr void set(Technique t, bool on = true) {
        bits_ = on ? (bits_ | static_cast<unsigned>(t)) : (bits_ & ~static_cast<unsigned>(t));
    }
    constexpr bool empty() const { return bits_ == 0; }
    friend constexpr bool operator==(TechniqueSet, TechniqueSet) = default;

private:
    unsigned bits_ = 0;
};

inline constexpr std::array<Technique, 6> kAllTechniques = {
    Technique::Rescore, Technique::SmoothCenter, Technique::SmoothKp,
    Technique::Blend,   Technique::KpMask,       Technique::Nms};

struct PostprocParams {
    double alpha = 0.8;
    double sigma_center = 0.45;
    double sigma_kp = 0.90;
    double gamma = 0.75;
    double nms_iou = 0.5;
    TechniqueSet enabled;

    /// Throws InvalidArgument when a value is outside its range.
    void validate() const;
};

std::string postproc_params_to_json(const PostprocParams& p);
PostprocParams postproc_params_from_json(std::string_view json_text);

/// final_score = alpha * score_bbox + (1 - alpha) * score_kps.
Detection rescore(Detection d, double alpha);

struct GaussianKernel3x3 {
    /// weights[dy + 1][dx + 1]
    std::array<std::array<double, 3>, 3> weights{};
};

/// Normalized 3×3 Gaussian. Throws SigmaNonPositive for sigma <= 0.
GaussianKernel3x3 make_kernel(double sigma);

/// Per-channel 3×3 convolution with zero padding; same output size.
Tensor smooth(const Tensor& heatmap, double sigma);

/// gamma * refined + (1 - gamma) * coarse.
constexpr Point blend_keypoint(Point refined, Point coarse, double gamma) {
    return {gamma * refined.x + (1.0 - gamma) * coarse.x,
            gamma * refined.y + (1.0 - gamma) * coarse.y};
}

/// Sigma of the keypoint distance mask for a box given in heatmap cells.
double kp_mask_sigma(double box_w, double box_h);

/// exp(-|p - coarse|^2 / (2 sigma^2)); 1 at the coarse point.
double kp_mask_weight(Point p, Point coarse, double sigma);

/// One keypoint heatmap channel [H, W] (or [1, H, W]) multiplied by the
/// distance mask centered on `coarse`. All quantities are in heatmap cells.
Tensor kp_mask_rescore(const Tensor& kp_heatmap_channel, Point coarse, double box_w,
                       double box_h);

/// Greedy per-class suppression by final_score; ties keep input order.
std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold);

/// smooth -> decode (masked refinement) -> blend -> rescore -> nms, each stage
/// only when enabled. A smoothing sigma of 0 leaves that heatmap untouched.
std::vector<Detection> run_pipeline(const RawOutputs& raw, const Schema& schema,
                                    const DecodeParams& dparams, const PostprocParams& pparams,
                                    StageTimes* times = nullptr);

}  // namespace deepmark
