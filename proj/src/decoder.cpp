#include "deepmark/decoder.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <tuple>

#include "deepmark/error.hpp"
#include "deepmark/postproc.hpp"
#include "deepmark/schema.hpp"

namespace deepmark {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool is_local_max(std::span<const float> plane, std::size_t h, std::size_t w, std::size_t r,
                  std::size_t c) {
    const float v = plane[r * w + c];
    const std::size_t r0 = r > 0 ? r - 1 : 0;
    const std::size_t r1 = std::min(r + 1, h - 1);
    const std::size_t c0 = c > 0 ? c - 1 : 0;
    const std::size_t c1 = std::min(c + 1, w - 1);
    for (std::size_t rr = r0; rr <= r1; ++rr) {
        for (std::size_t cc = c0; cc <= c1; ++cc) {
            if (plane[rr * w + cc] > v) return false;
        }
    }
    return true;
}

bool peak_order(const Peak& a, const Peak& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.channel, a.row, a.col) < std::tie(b.channel, b.row, b.col);
}

void keep_top(std::vector<Peak>& peaks, std::size_t top_k) {
    if (peaks.size() > top_k) {
        std::partial_sort(peaks.begin(), peaks.begin() + static_cast<std::ptrdiff_t>(top_k),
                          peaks.end(), peak_order);
        peaks.resize(top_k);
    } else {
        std::sort(peaks.begin(), peaks.end(), peak_order);
    }
}

void channel_peaks(const Tensor& heatmap, std::size_t ch, float min_score,
                   std::vector<Peak>& out) {
    const std::size_t h = heatmap.height();
    const std::size_t w = heatmap.width();
    const auto plane = heatmap.channel(ch);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            const float v = plane[r * w + c];
            if (v >= min_score && is_local_max(plane, h, w, r, c)) out.push_back({ch, r, c, v});
        }
    }
}

/// Same as extract_peaks, restricted to peaks scoring at least min_score.
/// Filtering before truncation is equivalent because truncation keeps the best.
std::vector<Peak> peaks_above(const Tensor& heatmap, std::size_t top_k, PeakMode mode,
                              float min_score) {
    std::vector<Peak> out;
    if (top_k == 0) return out;
    if (mode == PeakMode::Joint) {
        for (std::size_t ch = 0; ch < heatmap.channels(); ++ch) channel_peaks(heatmap, ch, min_score, out);
        keep_top(out, top_k);
        return out;
    }
    std::vector<Peak> one;
    for (std::size_t ch = 0; ch < heatmap.channels(); ++ch) {
        one.clear();
        channel_peaks(heatmap, ch, min_score, one);
        keep_top(one, top_k);
        out.insert(out.end(), one.begin(), one.end());
    }
    return out;
}

struct HeatmapBox {
    double x0, y0, x1, y1;
    bool contains(Point p) const { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; }
};

struct Candidate {
    Point position;  // offset-corrected, heatmap cells
    double score = 0.0;
};

Point corrected(const RawOutputs& raw, std::size_t r, std::size_t c) {
    return {static_cast<double>(c) + raw.kp_offset.at(0, r, c),
            static_cast<double>(r) + raw.kp_offset.at(1, r, c)};
}

std::optional<Candidate> closest_peak(const RawOutputs& raw, const std::vector<Peak>& peaks,
                                      Point coarse, const HeatmapBox& box) {
    std::optional<Candidate> best;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (const Peak& p : peaks) {
        const Point pos = corrected(raw, p.row, p.col);
        if (!box.contains(pos)) continue;
        const double dx = static_cast<double>(p.col) - coarse.x;
        const double dy = static_cast<double>(p.row) - coarse.y;
        const double d2 = dx * dx + dy * dy;
        if (d2 < best_d2) {
            best_d2 = d2;
            best = Candidate{pos, p.score};
        }
    }
    return best;
}

std::optional<Candidate> masked_maximum(const RawOutputs& raw, std::size_t group, Point coarse,
                                        const HeatmapBox& box, double sigma, float min_score) {
    const Tensor& hm = raw.kp_heatmap;
    const auto h = static_cast<long long>(hm.height());
    const auto w = static_cast<long long>(hm.width());
    auto masked = [&](long long r, long long c) {
        return static_cast<double>(hm.at(group, static_cast<std::size_t>(r), static_cast<std::size_t>(c))) *
               kp_mask_weight({static_cast<double>(c), static_cast<double>(r)}, coarse, sigma);
    };
    // Cells whose corrected position (cell +- 0.5) can fall inside the box.
    const long long r0 = std::max(0LL, static_cast<long long>(std::floor(box.y0 - 1.0)));
    const long long r1 = std::min(h - 1, static_cast<long long>(std::ceil(box.y1 + 1.0)));
    const long long c0 = std::max(0LL, static_cast<long long>(std::floor(box.x0 - 1.0)));
    const long long c1 = std::min(w - 1, static_cast<long long>(std::ceil(box.x1 + 1.0)));

    std::optional<Candidate> best;
    double best_d2 = 0.0;
    for (long long r = r0; r <= r1; ++r) {
        for (long long c = c0; c <= c1; ++c) {
            const double v = masked(r, c);
            if (v < min_score) continue;
            if (best && v < best->score) continue;
            bool is_max = true;
            for (long long rr = std::max(0LL, r - 1); is_max && rr <= std::min(h - 1, r + 1); ++rr) {
                for (long long cc = std::max(0LL, c - 1); cc <= std::min(w - 1, c + 1); ++cc) {
                    if (masked(rr, cc) > v) {
                        is_max = false;
                        break;
                    }
                }
            }
            if (!is_max) continue;
            const Point pos = corrected(raw, static_cast<std::size_t>(r), static_cast<std::size_t>(c));
            if (!box.contains(pos)) continue;
            const double dx = static_cast<double>(c) - coarse.x;
            const double dy = static_cast<double>(r) - coarse.y;
            const double d2 = dx * dx + dy * dy;
            if (!best || v > best->score || d2 < best_d2) {
                best = Candidate{pos, v};
                best_d2 = d2;
            }
        }
    }
    return best;
}

}  // namespace

std::vector<Peak> extract_peaks(const Tensor& heatmap, std::size_t top_k, PeakMode mode) {
    if (heatmap.rank() != 3) {
        throw Error(ErrorCode::ShapeMismatch, "extract_peaks expects a [C, H, W] map");
    }
    return peaks_above(heatmap, top_k, mode, -std::numeric_limits<float>::infinity());
}

std::vector<Detection> decode(const RawOutputs& raw, const Schema& schema,
                              const DecodeParams& params, RefinementMode mode,
                              StageTimes* times) {
    const std::size_t groups = schema.group_count();
    if (raw.kp_heatmap.rank() != 3 || raw.kp_heatmap.channels() != groups ||
        raw.kp_regression.channels() != 2 * groups) {
        throw Error(ErrorCode::ShapeMismatch, "keypoint heads do not match G = " +
                                                  std::to_string(groups));
    }
    const std::size_t h = raw.height();
    const std::size_t w = raw.width();
    const int stride = raw.stride;

    auto t0 = Clock::now();
    const auto centers =
        peaks_above(raw.center_heatmap, params.top_k, PeakMode::Joint, params.center_score_threshold);
    std::vector<std::vector<Peak>> kp_peaks;
    if (mode == RefinementMode::ClosestPeak && !centers.empty()) {
        kp_peaks.resize(groups);
        for (const Peak& p : peaks_above(raw.kp_heatmap, params.top_k, PeakMode::PerChannel,
                                         params.kp_score_threshold)) {
            kp_peaks[p.channel].push_back(p);
        }
    }
    if (times) times->peaks += seconds_since(t0);

    t0 = Clock::now();
    std::vector<Detection> dets;
    for (const Peak& cp : centers) {
        const int class_id = static_cast<int>(cp.channel) + 1;
        if (!schema.has_class(class_id)) continue;
        const std::size_t r = cp.row;
        const std::size_t c = cp.col;
        const double cx = static_cast<double>(c) + raw.center_offset.at(0, r, c);
        const double cy = static_cast<double>(r) + raw.center_offset.at(1, r, c);
        const double bw = raw.object_size.at(0, r, c);
        const double bh = raw.object_size.at(1, r, c);
        if (!(bw > 0.0) || !(bh > 0.0)) continue;
        const HeatmapBox box{cx - bw / 2, cy - bh / 2, cx + bw / 2, cy + bh / 2};
        const double mask_sigma = kp_mask_sigma(bw, bh);

        Detection d;
        d.class_id = class_id;
        d.score_bbox = cp.score;
        d.box = {box.x0 * stride, box.y0 * stride, bw * stride, bh * stride};
        const auto& class_groups = schema.class_groups(class_id);
        double score_sum = 0.0;
        for (std::size_t g : class_groups) {
            const Point coarse{static_cast<double>(c) + raw.kp_regression.at(2 * g, r, c),
                               static_cast<double>(r) + raw.kp_regression.at(2 * g + 1, r, c)};
            const auto found =
                mode == RefinementMode::ClosestPeak
                    ? closest_peak(raw, kp_peaks[g], coarse, box)
                    : masked_maximum(raw, g, coarse, box, mask_sigma, params.kp_score_threshold);
            Point refined = coarse;
            double score = 0.0;
            if (found) {
                refined = found->position;
                score = found->score;
                d.kp_source.push_back(KeypointSource::Refined);
            } else {
                const auto rr = static_cast<std::size_t>(
                    std::clamp(std::round(coarse.y), 0.0, static_cast<double>(h - 1)));
                const auto cc = static_cast<std::size_t>(
                    std::clamp(std::round(coarse.x), 0.0, static_cast<double>(w - 1)));
                score = raw.kp_heatmap.at(g, rr, cc);
                d.kp_source.push_back(KeypointSource::CoarseFallback);
            }
            d.coarse_kps.push_back(to_image_coords(coarse, stride));
            d.refined_kps.push_back(to_image_coords(refined, stride));
            d.kp_scores.push_back(score);
            score_sum += score;
        }
        d.final_kps = d.refined_kps;
        d.score_kps = class_groups.empty() ? 0.0 : score_sum / static_cast<double>(class_groups.size());
        d.final_score = d.score_bbox;
        dets.push_back(std::move(d));
    }
    if (times) times->refine += seconds_since(t0);
    return dets;
}

}  // namespace deepmark
