#include "deepmark/postproc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "deepmark/error.hpp"
#include "deepmark/eval.hpp"
#include "deepmark/schema.hpp"

namespace deepmark {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void require_unit(double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument,
                    std::string(name) + " = " + std::to_string(v) + " is outside [0, 1]");
    }
}

}  // namespace

std::string_view to_string(Technique t) {
    switch (t) {
        case Technique::Rescore: return "rescore";
        case Technique::SmoothCenter: return "smooth_center";
        case Technique::SmoothKp: return "smooth_kp";
        case Technique::Blend: return "blend";
        case Technique::KpMask: return "kp_mask";
        case Technique::Nms: return "nms";
    }
    return "unknown";
}

Technique technique_from_string(std::string_view name) {
    for (Technique t : kAllTechniques) {
        if (to_string(t) == name) return t;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown technique \"" + std::string(name) + "\"");
}

void PostprocParams::validate() const {
    require_unit(alpha, "alpha");
    require_unit(gamma, "gamma");
    require_unit(nms_iou, "nms_iou");
    if (!(sigma_center >= 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma_center must be >= 0");
    if (!(sigma_kp >= 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma_kp must be >= 0");
}

std::string postproc_params_to_json(const PostprocParams& p) {
    nlohmann::ordered_json doc;
    doc["alpha"] = p.alpha;
    doc["sigma_center"] = p.sigma_center;
    doc["sigma_kp"] = p.sigma_kp;
    doc["gamma"] = p.gamma;
    doc["nms_iou"] = p.nms_iou;
    doc["enabled"] = nlohmann::json::array();
    for (Technique t : kAllTechniques) {
        if (p.enabled.has(t)) doc["enabled"].push_back(std::string(to_string(t)));
    }
    return doc.dump() + "\n";
}

PostprocParams postproc_params_from_json(std::string_view json_text) {
    PostprocParams p;
    try {
        const auto doc = nlohmann::json::parse(json_text);
        p.alpha = doc.value("alpha", p.alpha);
        p.sigma_center = doc.value("sigma_center", p.sigma_center);
        p.sigma_kp = doc.value("sigma_kp", p.sigma_kp);
        p.gamma = doc.value("gamma", p.gamma);
        p.nms_iou = doc.value("nms_iou", p.nms_iou);
        if (doc.contains("enabled")) {
            for (const auto& name : doc["enabled"]) {
                p.enabled.set(technique_from_string(name.get<std::string>()));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("params JSON: ") + e.what());
    }
    p.validate();
    return p;
}

Detection rescore(Detection d, double alpha) {
    d.final_score = alpha * d.score_bbox + (1.0 - alpha) * d.score_kps;
    return d;
}

GaussianKernel3x3 make_kernel(double sigma) {
    if (!(sigma > 0.0)) {
        throw Error(ErrorCode::SigmaNonPositive, "sigma = " + std::to_string(sigma));
    }
    GaussianKernel3x3 k;
    double sum = 0.0;
    for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
            const double v = std::exp(-static_cast<double>(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            k.weights[dy + 1][dx + 1] = v;
            sum += v;
        }
    }
    for (auto& row : k.weights) {
        for (double& v : row) v /= sum;
    }
    return k;
}

Tensor smooth(const Tensor& heatmap, double sigma) {
    const auto k = make_kernel(sigma);
    if (heatmap.rank() != 3) throw Error(ErrorCode::ShapeMismatch, "smooth expects [C, H, W]");
    const std::size_t h = heatmap.height();
    const std::size_t w = heatmap.width();
    Tensor out(heatmap.dims());
    for (std::size_t ch = 0; ch < heatmap.channels(); ++ch) {
        const auto src = heatmap.channel(ch);
        auto dst = out.channel(ch);
        for (std::size_t r = 0; r < h; ++r) {
            for (std::size_t c = 0; c < w; ++c) {
                double acc = 0.0;
                for (int dy = -1; dy <= 1; ++dy) {
                    const auto rr = static_cast<long long>(r) + dy;
                    if (rr < 0 || rr >= static_cast<long long>(h)) continue;
                    for (int dx = -1; dx <= 1; ++dx) {
                        const auto cc = static_cast<long long>(c) + dx;
                        if (cc < 0 || cc >= static_cast<long long>(w)) continue;
                        acc += k.weights[dy + 1][dx + 1] *
                               src[static_cast<std::size_t>(rr) * w + static_cast<std::size_t>(cc)];
                    }
                }
                dst[r * w + c] = static_cast<float>(acc);
            }
        }
    }
    return out;
}

double kp_mask_sigma(double box_w, double box_h) { return std::min(box_w, box_h) / 9.0; }

double kp_mask_weight(Point p, Point coarse, double sigma) {
    const double dx = p.x - coarse.x;
    const double dy = p.y - coarse.y;
    return std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
}

Tensor kp_mask_rescore(const Tensor& kp_heatmap_channel, Point coarse, double box_w,
                       double box_h) {
    if (!(box_w > 0.0) || !(box_h > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "box size must be positive");
    }
    const auto& dims = kp_heatmap_channel.dims();
    const bool plane = dims.size() == 2;
    if (!plane && !(dims.size() == 3 && dims[0] == 1)) {
        throw Error(ErrorCode::ShapeMismatch, "kp_mask_rescore expects [H, W] or [1, H, W]");
    }
    const std::size_t h = plane ? dims[0] : dims[1];
    const std::size_t w = plane ? dims[1] : dims[2];
    const double sigma = kp_mask_sigma(box_w, box_h);
    Tensor out(dims);
    const auto src = kp_heatmap_channel.data();
    auto dst = out.data();
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            const double m =
                kp_mask_weight({static_cast<double>(c), static_cast<double>(r)}, coarse, sigma);
            dst[r * w + c] = static_cast<float>(src[r * w + c] * m);
        }
    }
    return out;
}

std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold) {
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return dets[a].final_score > dets[b].final_score;
    });
    std::vector<bool> suppressed(dets.size(), false);
    std::vector<Detection> kept;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const std::size_t a = order[i];
        if (suppressed[a]) continue;
        kept.push_back(dets[a]);
        for (std::size_t j = i + 1; j < order.size(); ++j) {
            const std::size_t b = order[j];
            if (!suppressed[b] && dets[b].class_id == dets[a].class_id &&
                iou(dets[a].box, dets[b].box) > iou_threshold) {
                suppressed[b] = true;
            }
        }
    }
    return kept;
}

std::vector<Detection> run_pipeline(const RawOutputs& raw, const Schema& schema,
                                    const DecodeParams& dparams, const PostprocParams& pparams,
                                    StageTimes* times) {
    pparams.validate();
    const auto& on = pparams.enabled;
    const bool smooth_center = on.has(Technique::SmoothCenter) && pparams.sigma_center > 0.0;
    const bool smooth_kp = on.has(Technique::SmoothKp) && pparams.sigma_kp > 0.0;

    std::vector<Detection> dets;
    const auto mode =
        on.has(Technique::KpMask) ? RefinementMode::MaskedMaximum : RefinementMode::ClosestPeak;
    if (smooth_center || smooth_kp) {
        const auto t0 = Clock::now();
        RawOutputs smoothed = raw;
        if (smooth_center) smoothed.center_heatmap = smooth(raw.center_heatmap, pparams.sigma_center);
        if (smooth_kp) smoothed.kp_heatmap = smooth(raw.kp_heatmap, pparams.sigma_kp);
        if (times) times->smooth += seconds_since(t0);
        dets = decode(smoothed, schema, dparams, mode, times);
    } else {
        dets = decode(raw, schema, dparams, mode, times);
    }

    auto t0 = Clock::now();
    if (on.has(Technique::Blend)) {
        for (auto& d : dets) {
            for (std::size_t i = 0; i < d.final_kps.size(); ++i) {
                d.final_kps[i] = blend_keypoint(d.refined_kps[i], d.coarse_kps[i], pparams.gamma);
            }
        }
    }
    if (on.has(Technique::Rescore)) {
        for (auto& d : dets) d = rescore(std::move(d), pparams.alpha);
    }
    if (times) times->other += seconds_since(t0);

    if (on.has(Technique::Nms)) {
        t0 = Clock::now();
        dets = nms(dets, pparams.nms_iou);
        if (times) times->nms += seconds_since(t0);
    }
    return dets;
}

}  // namespace deepmark
