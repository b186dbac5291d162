#include "deepmark/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "deepmark/error.hpp"
#include "deepmark/schema.hpp"

namespace deepmark {

double iou(const Box& a, const Box& b) {
    const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
    const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
    const double inter = ix * iy;
    const double uni = a.w * a.h + b.w * b.h - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

namespace {

bool counted(int v, VisibilityMode mode) {
    return mode == VisibilityMode::VisibleOnly ? v == 2 : v >= 1;
}

std::size_t counted_keypoints(const Annotation& gt, VisibilityMode mode) {
    return static_cast<std::size_t>(std::count_if(gt.keypoints.begin(), gt.keypoints.end(),
                                                  [&](const auto& k) { return counted(k.v, mode); }));
}

}  // namespace

double oks(const std::vector<ScoredKeypoint>& pred, const Annotation& gt,
           const std::vector<double>& constants, VisibilityMode mode) {
    if (pred.size() != gt.keypoints.size() || constants.size() != gt.keypoints.size()) {
        throw Error(ErrorCode::LengthMismatch,
                    "oks: " + std::to_string(pred.size()) + " predicted, " +
                        std::to_string(gt.keypoints.size()) + " ground-truth, " +
                        std::to_string(constants.size()) + " constants");
    }
    const double area = gt.area();
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const auto& g = gt.keypoints[i];
        if (!counted(g.v, mode)) continue;
        const double dx = pred[i].x - g.x;
        const double dy = pred[i].y - g.y;
        const double d2 = dx * dx + dy * dy;
        const double denom = 2.0 * area * constants[i] * constants[i];
        sum += denom > 0.0 ? std::exp(-d2 / denom) : (d2 == 0.0 ? 1.0 : 0.0);
        ++n;
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

std::vector<double> coco_thresholds() {
    std::vector<double> t;
    for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
    return t;
}

double interpolated_ap(const std::vector<double>& precision, const std::vector<double>& recall) {
    std::vector<double> p = precision;
    for (std::size_t i = p.size(); i-- > 1;) p[i - 1] = std::max(p[i - 1], p[i]);
    double sum = 0.0;
    for (int k = 0; k <= 100; ++k) {
        const double r = k / 100.0;
        const auto it = std::lower_bound(recall.begin(), recall.end(), r);
        if (it != recall.end()) sum += p[static_cast<std::size_t>(it - recall.begin())];
    }
    return sum / 101.0;
}

MeanApResult mean_ap(const std::vector<Prediction>& preds, const std::vector<Annotation>& gts,
                     Similarity similarity, const Schema& schema,
                     const std::vector<double>& thresholds, VisibilityMode mode) {
    MeanApResult result;
    result.per_threshold.assign(thresholds.size(), 0.0);

    std::set<int> classes;
    std::vector<bool> usable(gts.size(), true);
    for (std::size_t i = 0; i < gts.size(); ++i) {
        if (similarity == Similarity::Oks && counted_keypoints(gts[i], mode) == 0) usable[i] = false;
        if (usable[i]) classes.insert(gts[i].class_id);
    }
    if (classes.empty()) return result;

    for (int cls : classes) {
        std::vector<std::size_t> g_idx;
        for (std::size_t i = 0; i < gts.size(); ++i) {
            if (usable[i] && gts[i].class_id == cls) g_idx.push_back(i);
        }
        std::vector<std::size_t> p_idx;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            if (preds[i].class_id == cls) p_idx.push_back(i);
        }
        std::stable_sort(p_idx.begin(), p_idx.end(), [&](std::size_t a, std::size_t b) {
            return preds[a].score > preds[b].score;
        });
        const auto constants =
            similarity == Similarity::Oks ? schema.class_oks_constants(cls) : std::vector<double>{};

        // sim[p][g], -1 for different images.
        std::vector<std::vector<double>> sim(p_idx.size(), std::vector<double>(g_idx.size(), -1.0));
        for (std::size_t p = 0; p < p_idx.size(); ++p) {
            const auto& pr = preds[p_idx[p]];
            for (std::size_t g = 0; g < g_idx.size(); ++g) {
                const auto& gt = gts[g_idx[g]];
                if (gt.image_id != pr.image_id) continue;
                sim[p][g] = similarity == Similarity::Iou ? iou(pr.box, gt.box)
                                                          : oks(pr.keypoints, gt, constants, mode);
            }
        }

        double class_sum = 0.0;
        for (std::size_t t = 0; t < thresholds.size(); ++t) {
            std::vector<bool> matched(g_idx.size(), false);
            std::vector<double> precision;
            std::vector<double> recall;
            std::size_t tp = 0;
            for (std::size_t p = 0; p < p_idx.size(); ++p) {
                std::ptrdiff_t best = -1;
                double best_sim = thresholds[t];
                for (std::size_t g = 0; g < g_idx.size(); ++g) {
                    if (matched[g] || sim[p][g] < best_sim) continue;
                    if (best < 0 || sim[p][g] > best_sim) {
                        best = static_cast<std::ptrdiff_t>(g);
                        best_sim = sim[p][g];
                    }
                }
                if (best >= 0) {
                    matched[static_cast<std::size_t>(best)] = true;
                    ++tp;
                }
                precision.push_back(static_cast<double>(tp) / static_cast<double>(p + 1));
                recall.push_back(static_cast<double>(tp) / static_cast<double>(g_idx.size()));
            }
            const double ap = interpolated_ap(precision, recall);
            class_sum += ap;
            result.per_threshold[t] += ap / static_cast<double>(classes.size());
        }
        result.per_class[cls] = thresholds.empty() ? 0.0 : class_sum / static_cast<double>(thresholds.size());
    }
    double total = 0.0;
    for (const auto& [cls, ap] : result.per_class) total += ap;
    result.map = total / static_cast<double>(classes.size());
    return result;
}

Prediction to_prediction(const Detection& d, long long image_id) {
    Prediction p;
    p.image_id = image_id;
    p.class_id = d.class_id;
    p.box = d.box;
    p.score = d.final_score;
    for (std::size_t i = 0; i < d.final_kps.size(); ++i) {
        p.keypoints.push_back({d.final_kps[i].x, d.final_kps[i].y, d.kp_scores[i]});
    }
    return p;
}

namespace {

int category_of(const nlohmann::json& j) {
    if (j.contains("category_id")) return j["category_id"].get<int>();
    return j.at("class_id").get<int>();
}

Box box_of(const nlohmann::json& j) {
    const auto b = j.at("bbox").get<std::vector<double>>();
    if (b.size() != 4) throw Error(ErrorCode::LengthMismatch, "bbox needs 4 numbers");
    return {b[0], b[1], b[2], b[3]};
}

std::vector<double> triplets(const nlohmann::json& j) {
    auto v = j.value("keypoints", std::vector<double>{});
    if (v.size() % 3 != 0) throw Error(ErrorCode::LengthMismatch, "keypoints must be triplets");
    return v;
}

nlohmann::json parse_array(std::string_view text, const char* what) {
    try {
        auto doc = nlohmann::json::parse(text);
        if (!doc.is_array()) throw Error(ErrorCode::InvalidArgument, std::string(what) + " must be a JSON array");
        return doc;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string(what) + ": " + e.what());
    }
}

}  // namespace

std::string predictions_to_json(const std::vector<Prediction>& preds) {
    nlohmann::ordered_json doc = nlohmann::ordered_json::array();
    for (const auto& p : preds) {
        nlohmann::ordered_json r;
        r["image_id"] = p.image_id;
        r["category_id"] = p.class_id;
        r["bbox"] = {p.box.x, p.box.y, p.box.w, p.box.h};
        r["score"] = p.score;
        std::vector<double> kps;
        for (const auto& k : p.keypoints) kps.insert(kps.end(), {k.x, k.y, k.s});
        r["keypoints"] = kps;
        doc.push_back(std::move(r));
    }
    return doc.dump() + "\n";
}

std::vector<Prediction> predictions_from_json(std::string_view text) {
    std::vector<Prediction> out;
    try {
        for (const auto& j : parse_array(text, "predictions")) {
            Prediction p;
            p.image_id = j.at("image_id").get<long long>();
            p.class_id = category_of(j);
            p.box = box_of(j);
            p.score = j.at("score").get<double>();
            const auto v = triplets(j);
            for (std::size_t i = 0; i < v.size(); i += 3) p.keypoints.push_back({v[i], v[i + 1], v[i + 2]});
            out.push_back(std::move(p));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("predictions: ") + e.what());
    }
    return out;
}

std::string annotations_to_json(const std::vector<Annotation>& gts) {
    nlohmann::ordered_json doc = nlohmann::ordered_json::array();
    for (const auto& a : gts) {
        nlohmann::ordered_json r;
        r["image_id"] = a.image_id;
        r["category_id"] = a.class_id;
        r["bbox"] = {a.box.x, a.box.y, a.box.w, a.box.h};
        r["area"] = a.area();
        std::vector<double> kps;
        for (const auto& k : a.keypoints) kps.insert(kps.end(), {k.x, k.y, static_cast<double>(k.v)});
        r["keypoints"] = kps;
        doc.push_back(std::move(r));
    }
    return doc.dump() + "\n";
}

std::vector<Annotation> annotations_from_json(std::string_view text) {
    std::vector<Annotation> out;
    try {
        for (const auto& j : parse_array(text, "annotations")) {
            Annotation a;
            a.image_id = j.at("image_id").get<long long>();
            a.class_id = category_of(j);
            a.box = box_of(j);
            const auto v = triplets(j);
            for (std::size_t i = 0; i < v.size(); i += 3) {
                a.keypoints.push_back({v[i], v[i + 1], static_cast<int>(v[i + 2])});
            }
            out.push_back(std::move(a));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("annotations: ") + e.what());
    }
    return out;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

}  // namespace deepmark
