#pragma once

// Independent reference implementations used by the tests. Written for
// clarity, not speed, and deliberately share no code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "deepmark/decoder.hpp"
#include "deepmark/tensor.hpp"

namespace oracle {

/// Every cell that no 8-neighbour exceeds, ordered by score then flat index.
inline std::vector<deepmark::Peak> peaks(const deepmark::Tensor& t) {
    std::vector<deepmark::Peak> out;
    const long long C = static_cast<long long>(t.channels());
    const long long H = static_cast<long long>(t.height());
    const long long W = static_cast<long long>(t.width());
    for (long long c = 0; c < C; ++c) {
        for (long long r = 0; r < H; ++r) {
            for (long long x = 0; x < W; ++x) {
                const float v = t.at(c, r, x);
                bool ok = true;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const long long rr = r + dy, xx = x + dx;
                        if (rr < 0 || xx < 0 || rr >= H || xx >= W) continue;
                        if (t.at(c, rr, xx) > v) ok = false;
                    }
                }
                if (ok) out.push_back({static_cast<std::size_t>(c), static_cast<std::size_t>(r),
                                       static_cast<std::size_t>(x), v});
            }
        }
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& a, const auto& b) { return a.score > b.score; });
    return out;
}

/// 3x3 Gaussian weights straight from the closed form, normalized.
inline double kernel_weight(double sigma, int dx, int dy) {
    const double s2 = 2.0 * sigma * sigma;
    const double e1 = std::exp(-1.0 / s2);
    const double e2 = std::exp(-2.0 / s2);
    const double z = 1.0 + 4.0 * e1 + 4.0 * e2;
    const int n = dx * dx + dy * dy;
    return (n == 0 ? 1.0 : n == 1 ? e1 : e2) / z;
}

/// Zero-padded nested-loop convolution.
inline std::vector<double> convolve(const deepmark::Tensor& t, std::size_t c, double sigma) {
    const long long H = static_cast<long long>(t.height());
    const long long W = static_cast<long long>(t.width());
    std::vector<double> out(static_cast<std::size_t>(H * W), 0.0);
    for (long long r = 0; r < H; ++r) {
        for (long long x = 0; x < W; ++x) {
            double acc = 0.0;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const long long rr = r + dy, xx = x + dx;
                    if (rr < 0 || xx < 0 || rr >= H || xx >= W) continue;
                    acc += kernel_weight(sigma, dx, dy) * t.at(c, rr, xx);
                }
            }
            out[static_cast<std::size_t>(r * W + x)] = acc;
        }
    }
    return out;
}

inline double box_iou(const deepmark::Box& a, const deepmark::Box& b) {
    const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
    const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
    const double inter = ix * iy;
    const double uni = a.w * a.h + b.w * b.h - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

/// Indices of greedy NMS survivors: repeatedly take the best remaining
/// detection and drop same-class boxes overlapping it.
inline std::vector<std::size_t> nms(const std::vector<deepmark::Detection>& d, double thr) {
    std::vector<bool> alive(d.size(), true);
    std::vector<std::size_t> keep;
    while (true) {
        long long best = -1;
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (alive[i] && (best < 0 || d[i].final_score > d[static_cast<std::size_t>(best)].final_score)) {
                best = static_cast<long long>(i);
            }
        }
        if (best < 0) break;
        const auto b = static_cast<std::size_t>(best);
        keep.push_back(b);
        alive[b] = false;
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (alive[i] && d[i].class_id == d[b].class_id && box_iou(d[i].box, d[b].box) > thr) {
                alive[i] = false;
            }
        }
    }
    return keep;
}

inline deepmark::Tensor random_tensor(std::mt19937_64& rng, std::vector<std::size_t> dims,
                                      float lo = 0.0f, float hi = 1.0f) {
    deepmark::Tensor t(std::move(dims));
    std::uniform_real_distribution<float> u(lo, hi);
    for (float& v : t.data()) v = u(rng);
    return t;
}

/// Values drawn from a handful of levels so ties and plateaus are common.
inline deepmark::Tensor plateau_tensor(std::mt19937_64& rng, std::vector<std::size_t> dims) {
    deepmark::Tensor t(std::move(dims));
    std::uniform_int_distribution<int> u(0, 4);
    for (float& v : t.data()) v = static_cast<float>(u(rng)) / 4.0f;
    return t;
}

}  // namespace oracle
