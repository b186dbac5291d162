#include "deepmark/fusion.hpp"

#include "deepmark/error.hpp"
#include "deepmark/postproc.hpp"

namespace deepmark {

namespace {

/// Mirrors each plane left-right; output channel c takes input channel src[c],
/// negated when negate[c] is set.
Tensor mirror_channels(const Tensor& t, const std::vector<std::size_t>& src,
                       const std::vector<bool>& negate) {
    const std::size_t h = t.height();
    const std::size_t w = t.width();
    Tensor out(t.dims());
    for (std::size_t c = 0; c < t.channels(); ++c) {
        const auto in = t.channel(src[c]);
        auto dst = out.channel(c);
        const float sign = negate[c] ? -1.0f : 1.0f;
        for (std::size_t r = 0; r < h; ++r) {
            for (std::size_t col = 0; col < w; ++col) {
                dst[r * w + col] = sign * in[r * w + (w - 1 - col)];
            }
        }
    }
    return out;
}

Tensor mirror_plain(const Tensor& t, bool negate_x) {
    std::vector<std::size_t> src(t.channels());
    std::vector<bool> negate(t.channels(), false);
    for (std::size_t c = 0; c < src.size(); ++c) src[c] = c;
    if (negate_x) negate[0] = true;
    return mirror_channels(t, src, negate);
}

Tensor mean(const Tensor& a, const Tensor& b) {
    Tensor out(a.dims());
    const auto x = a.data();
    const auto y = b.data();
    auto o = out.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = 0.5f * (x[i] + y[i]);
    return out;
}

Detection rescale(Detection d, double multiplier) {
    const double s = 1.0 / multiplier;
    d.box = {d.box.x * s, d.box.y * s, d.box.w * s, d.box.h * s};
    for (auto* kps : {&d.coarse_kps, &d.refined_kps, &d.final_kps}) {
        for (Point& p : *kps) p = {p.x * s, p.y * s};
    }
    return d;
}

}  // namespace

RawOutputs mirror_raw(const RawOutputs& raw, const FlipSpec& flip_spec) {
    const std::size_t groups = raw.group_count();
    const auto perm = flip_spec.permutation(groups);

    RawOutputs out;
    out.stride = raw.stride;
    out.input_size = raw.input_size;
    out.center_heatmap = mirror_plain(raw.center_heatmap, false);
    out.center_offset = mirror_plain(raw.center_offset, true);
    out.object_size = mirror_plain(raw.object_size, false);
    out.kp_offset = mirror_plain(raw.kp_offset, true);
    out.kp_heatmap = mirror_channels(raw.kp_heatmap, perm, std::vector<bool>(groups, false));

    std::vector<std::size_t> reg_src(2 * groups);
    std::vector<bool> reg_negate(2 * groups, false);
    for (std::size_t g = 0; g < groups; ++g) {
        reg_src[2 * g] = 2 * perm[g];
        reg_src[2 * g + 1] = 2 * perm[g] + 1;
        reg_negate[2 * g] = true;
    }
    out.kp_regression = mirror_channels(raw.kp_regression, reg_src, reg_negate);
    return out;
}

RawOutputs flip_fuse(const RawOutputs& raw, const RawOutputs& raw_from_flipped_input,
                     const FlipSpec& flip_spec) {
    const RawOutputs& other = raw_from_flipped_input;
    if (raw.center_heatmap.dims() != other.center_heatmap.dims() ||
        raw.kp_heatmap.dims() != other.kp_heatmap.dims() ||
        raw.kp_regression.dims() != other.kp_regression.dims() ||
        raw.center_offset.dims() != other.center_offset.dims() ||
        raw.object_size.dims() != other.object_size.dims() ||
        raw.kp_offset.dims() != other.kp_offset.dims()) {
        throw Error(ErrorCode::ShapeMismatch, "flip_fuse inputs have different head shapes");
    }
    const RawOutputs unflipped = mirror_raw(other, flip_spec);
    RawOutputs out;
    out.stride = raw.stride;
    out.input_size = raw.input_size;
    out.center_heatmap = mean(raw.center_heatmap, unflipped.center_heatmap);
    out.center_offset = mean(raw.center_offset, unflipped.center_offset);
    out.object_size = mean(raw.object_size, unflipped.object_size);
    out.kp_regression = mean(raw.kp_regression, unflipped.kp_regression);
    out.kp_heatmap = mean(raw.kp_heatmap, unflipped.kp_heatmap);
    out.kp_offset = mean(raw.kp_offset, unflipped.kp_offset);
    return out;
}

std::vector<Detection> multiscale_fuse(const std::vector<ScaleRun>& runs, double nms_iou) {
    if (runs.empty()) throw Error(ErrorCode::InvalidArgument, "multiscale_fuse needs a run");
    std::vector<Detection> all;
    for (const auto& run : runs) {
        if (!(run.multiplier > 0.0)) {
            throw Error(ErrorCode::InvalidArgument, "scale multiplier must be positive");
        }
        for (const auto& d : run.detections) all.push_back(rescale(d, run.multiplier));
    }
    if (runs.size() == 1) return all;
    return nms(all, nms_iou);
}

}  // namespace deepmark
