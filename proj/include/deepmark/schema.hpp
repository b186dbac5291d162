#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace deepmark {

namespace detail {
[[noreturn]] void throw_length_mismatch(std::size_t got, std::size_t expected);
}

struct ClassDef {
    int id = 0;
    std::string name;
    std::vector<std::string> keypoint_names;

    std::size_t keypoint_count() const { return keypoint_names.size(); }
};

/// Horizontal-flip correspondence between group channels. `pairs` and
/// `fixed` partition [0, G).
struct FlipSpec {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<std::size_t> fixed;

    /// permutation()[g] is the group that g becomes after a horizontal flip.
    /// Throws FlipSpecIncomplete unless pairs and fixed partition [0, groups).
    std::vector<std::size_t> permutation(std::size_t groups) const;
};

/// Clothing classes, the (class, keypoint) -> group table, flip pairs and the
/// per-group OKS constants. Immutable after construction.
class Schema {
public:
    /// Validates and builds. `members[g]` lists the (class_id, local index)
    /// pairs of group g.
    Schema(std::vector<ClassDef> classes,
           std::vector<std::vector<std::pair<int, std::size_t>>> members,
           std::vector<std::pair<std::size_t, std::size_t>> flip_pairs,
           std::vector<double> oks_constants);

    const std::vector<ClassDef>& classes() const noexcept { return classes_; }
    std::size_t group_count() const noexcept { return group_count_; }
    std::size_t total_keypoints() const noexcept;
    const FlipSpec& flip_spec() const noexcept { return flip_; }
    const std::vector<double>& oks_constants() const noexcept { return oks_; }
    std::size_t head_channels() const noexcept { return 3 * group_count_ + 19; }

    bool has_class(int class_id) const noexcept;
    /// Throws UnknownClass.
    const ClassDef& class_def(int class_id) const;
    std::size_t keypoint_count(int class_id) const { return class_def(class_id).keypoint_count(); }

    /// Group channel of a class keypoint. Throws UnknownClass or
    /// KeypointIndexOutOfRange.
    std::size_t project_to_group(int class_id, std::size_t local_kp) const;
    /// Group channels of every keypoint of the class, in local order.
    const std::vector<std::size_t>& class_groups(int class_id) const;
    /// Local keypoint that mirrors `local_kp` under a horizontal flip.
    std::size_t flipped_keypoint(int class_id, std::size_t local_kp) const;
    /// Per-keypoint OKS constants of a class, in local order.
    std::vector<double> class_oks_constants(int class_id) const;

    /// Gathers per-class keypoint values from per-group values.
    template <typename T>
    std::vector<T> expand_from_groups(int class_id, const std::vector<T>& group_values) const;

    /// Ungrouped layout: every (class, keypoint) gets its own channel, numbered
    /// class-major. Flip pairs and OKS constants carry over from `base`.
    static Schema identity_from(const Schema& base);

private:
    std::vector<ClassDef> classes_;
    std::vector<std::vector<std::size_t>> table_;  // indexed by class_id - 1
    std::vector<std::vector<std::size_t>> flipped_kp_;
    std::size_t group_count_ = 0;
    FlipSpec flip_;
    std::vector<double> oks_;
};

Schema load_schema(std::string_view json_text);
Schema load_schema_file(const std::string& path);
std::string schema_to_json(const Schema& schema);

/// The bundled DeepFashion2 table (13 classes, 294 keypoints, 62 groups).
const std::string& bundled_schema_json();
const Schema& bundled_schema();

template <typename T>
std::vector<T> Schema::expand_from_groups(int class_id, const std::vector<T>& group_values) const {
    const auto& groups = class_groups(class_id);
    if (group_values.size() != group_count_) {
        detail::throw_length_mismatch(group_values.size(), group_count_);
    }
    std::vector<T> out;
    out.reserve(groups.size());
    for (std::size_t g : groups) out.push_back(group_values[g]);
    return out;
}

}  // namespace deepmark
