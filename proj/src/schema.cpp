#include "deepmark/schema.hpp"

#include <algorithm>
#include <limits>

#include <json.hpp>

#include "bundled_schema_data.hpp"
#include "deepmark/error.hpp"
#include "deepmark/eval.hpp"

namespace deepmark {

namespace detail {
void throw_length_mismatch(std::size_t got, std::size_t expected) {
    throw Error(ErrorCode::LengthMismatch, "got " + std::to_string(got) + " values, expected " +
                                               std::to_string(expected));
}
}  // namespace detail

namespace {

constexpr std::size_t kUnset = std::numeric_limits<std::size_t>::max();
constexpr double kDefaultOksConstant = 0.05;

std::string entry_name(int class_id, std::size_t kp) {
    return "(class " + std::to_string(class_id) + ", keypoint " + std::to_string(kp) + ")";
}

}  // namespace

std::vector<std::size_t> FlipSpec::permutation(std::size_t groups) const {
    std::vector<std::size_t> perm(groups, kUnset);
    auto claim = [&](std::size_t g, std::size_t to) {
        if (g >= groups) {
            throw Error(ErrorCode::FlipSpecIncomplete,
                        "flip entry references group " + std::to_string(g) + " but G = " +
                            std::to_string(groups));
        }
        if (perm[g] != kUnset) {
            throw Error(ErrorCode::FlipSpecIncomplete,
                        "group " + std::to_string(g) + " appears twice in the flip spec");
        }
        perm[g] = to;
    };
    for (auto [a, b] : pairs) {
        claim(a, b);
        claim(b, a);
    }
    for (std::size_t g : fixed) claim(g, g);
    for (std::size_t g = 0; g < groups; ++g) {
        if (perm[g] == kUnset) {
            throw Error(ErrorCode::FlipSpecIncomplete,
                        "group " + std::to_string(g) + " is missing from the flip spec");
        }
    }
    return perm;
}

Schema::Schema(std::vector<ClassDef> classes,
               std::vector<std::vector<std::pair<int, std::size_t>>> members,
               std::vector<std::pair<std::size_t, std::size_t>> flip_pairs,
               std::vector<double> oks_constants)
    : classes_(std::move(classes)), group_count_(members.size()), oks_(std::move(oks_constants)) {
    std::sort(classes_.begin(), classes_.end(),
              [](const ClassDef& a, const ClassDef& b) { return a.id < b.id; });
    table_.assign(kNumClasses, {});
    for (const auto& c : classes_) {
        if (c.id < 1 || c.id > static_cast<int>(kNumClasses)) {
            throw Error(ErrorCode::UnknownClass, "class id " + std::to_string(c.id) +
                                                     " outside [1, 13]");
        }
        auto& row = table_[static_cast<std::size_t>(c.id - 1)];
        if (!row.empty()) {
            throw Error(ErrorCode::DuplicateMapping, "class " + std::to_string(c.id) +
                                                         " defined twice");
        }
        if (c.keypoint_names.empty()) {
            throw Error(ErrorCode::InvalidArgument, "class " + std::to_string(c.id) +
                                                        " has no keypoints");
        }
        row.assign(c.keypoint_count(), kUnset);
    }
    if (group_count_ == 0) throw Error(ErrorCode::InvalidArgument, "schema has no groups");

    for (std::size_t g = 0; g < group_count_; ++g) {
        if (members[g].empty()) {
            throw Error(ErrorCode::GroupIndexOutOfRange,
                        "group " + std::to_string(g) + " has no members");
        }
        for (auto [cid, kp] : members[g]) {
            if (!has_class(cid)) {
                throw Error(ErrorCode::UnknownClass, "group " + std::to_string(g) +
                                                         " member " + entry_name(cid, kp));
            }
            auto& row = table_[static_cast<std::size_t>(cid - 1)];
            if (kp >= row.size()) {
                throw Error(ErrorCode::KeypointIndexOutOfRange,
                            "group " + std::to_string(g) + " member " + entry_name(cid, kp));
            }
            if (row[kp] != kUnset) {
                throw Error(ErrorCode::DuplicateMapping,
                            entry_name(cid, kp) + " mapped to groups " + std::to_string(row[kp]) +
                                " and " + std::to_string(g));
            }
            if (std::find(row.begin(), row.end(), g) != row.end()) {
                throw Error(ErrorCode::DuplicateMapping,
                            "group " + std::to_string(g) + " holds two keypoints of class " +
                                std::to_string(cid));
            }
            row[kp] = g;
        }
    }
    for (const auto& c : classes_) {
        const auto& row = table_[static_cast<std::size_t>(c.id - 1)];
        for (std::size_t kp = 0; kp < row.size(); ++kp) {
            if (row[kp] == kUnset) {
                throw Error(ErrorCode::UnmappedKeypoint, entry_name(c.id, kp) + " \"" +
                                                             c.keypoint_names[kp] +
                                                             "\" has no group");
            }
        }
    }

    flip_.pairs = std::move(flip_pairs);
    std::vector<bool> paired(group_count_, false);
    for (auto [a, b] : flip_.pairs) {
        for (std::size_t g : {a, b}) {
            if (g >= group_count_) {
                throw Error(ErrorCode::FlipPartitionInvalid,
                            "flip pair [" + std::to_string(a) + ", " + std::to_string(b) +
                                "] references a group outside [0, " +
                                std::to_string(group_count_) + ")");
            }
            if (paired[g] || a == b) {
                throw Error(ErrorCode::FlipPartitionInvalid,
                            "group " + std::to_string(g) + " appears twice in flip pairs");
            }
            paired[g] = true;
        }
    }
    for (std::size_t g = 0; g < group_count_; ++g) {
        if (!paired[g]) flip_.fixed.push_back(g);
    }
    const auto perm = flip_.permutation(group_count_);

    flipped_kp_.assign(kNumClasses, {});
    for (const auto& c : classes_) {
        const auto& row = table_[static_cast<std::size_t>(c.id - 1)];
        auto& flipped = flipped_kp_[static_cast<std::size_t>(c.id - 1)];
        for (std::size_t kp = 0; kp < row.size(); ++kp) {
            const auto it = std::find(row.begin(), row.end(), perm[row[kp]]);
            if (it == row.end()) {
                throw Error(ErrorCode::FlipPartitionInvalid,
                            entry_name(c.id, kp) + " has no flip partner within its class");
            }
            flipped.push_back(static_cast<std::size_t>(it - row.begin()));
        }
    }

    if (oks_.empty()) oks_.assign(group_count_, kDefaultOksConstant);
    if (oks_.size() != group_count_) {
        throw Error(ErrorCode::LengthMismatch, "oks_constants has " + std::to_string(oks_.size()) +
                                                   " entries, expected " +
                                                   std::to_string(group_count_));
    }
    for (double k : oks_) {
        if (!(k > 0.0)) throw Error(ErrorCode::InvalidArgument, "oks constants must be positive");
    }
}

std::size_t Schema::total_keypoints() const noexcept {
    std::size_t n = 0;
    for (const auto& c : classes_) n += c.keypoint_count();
    return n;
}

bool Schema::has_class(int class_id) const noexcept {
    return class_id >= 1 && class_id <= static_cast<int>(kNumClasses) &&
           !table_[static_cast<std::size_t>(class_id - 1)].empty();
}

const ClassDef& Schema::class_def(int class_id) const {
    if (!has_class(class_id)) {
        throw Error(ErrorCode::UnknownClass, "class " + std::to_string(class_id));
    }
    return *std::find_if(classes_.begin(), classes_.end(),
                         [&](const ClassDef& c) { return c.id == class_id; });
}

const std::vector<std::size_t>& Schema::class_groups(int class_id) const {
    if (!has_class(class_id)) {
        throw Error(ErrorCode::UnknownClass, "class " + std::to_string(class_id));
    }
    return table_[static_cast<std::size_t>(class_id - 1)];
}

std::size_t Schema::project_to_group(int class_id, std::size_t local_kp) const {
    const auto& row = class_groups(class_id);
    if (local_kp >= row.size()) {
        throw Error(ErrorCode::KeypointIndexOutOfRange, entry_name(class_id, local_kp));
    }
    return row[local_kp];
}

std::size_t Schema::flipped_keypoint(int class_id, std::size_t local_kp) const {
    const auto& row = class_groups(class_id);
    if (local_kp >= row.size()) {
        throw Error(ErrorCode::KeypointIndexOutOfRange, entry_name(class_id, local_kp));
    }
    return flipped_kp_[static_cast<std::size_t>(class_id - 1)][local_kp];
}

std::vector<double> Schema::class_oks_constants(int class_id) const {
    std::vector<double> out;
    for (std::size_t g : class_groups(class_id)) out.push_back(oks_[g]);
    return out;
}

Schema Schema::identity_from(const Schema& base) {
    std::vector<std::vector<std::pair<int, std::size_t>>> members;
    std::vector<double> oks;
    std::vector<std::vector<std::size_t>> ids(kNumClasses);
    for (const auto& c : base.classes()) {
        for (std::size_t kp = 0; kp < c.keypoint_count(); ++kp) {
            ids[static_cast<std::size_t>(c.id - 1)].push_back(members.size());
            members.push_back({{c.id, kp}});
            oks.push_back(base.oks_constants()[base.project_to_group(c.id, kp)]);
        }
    }
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (const auto& c : base.classes()) {
        const auto& row = ids[static_cast<std::size_t>(c.id - 1)];
        for (std::size_t kp = 0; kp < c.keypoint_count(); ++kp) {
            const std::size_t partner = base.flipped_keypoint(c.id, kp);
            if (partner > kp) pairs.emplace_back(row[kp], row[partner]);
        }
    }
    return Schema(base.classes(), std::move(members), std::move(pairs), std::move(oks));
}

Schema load_schema(std::string_view json_text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("schema JSON: ") + e.what());
    }
    try {
        std::vector<ClassDef> classes;
        for (const auto& c : doc.at("classes")) {
            classes.push_back({c.at("id").get<int>(), c.value("name", std::string{}),
                               c.at("keypoints").get<std::vector<std::string>>()});
        }
        const auto& groups = doc.at("groups");
        std::vector<std::vector<std::pair<int, std::size_t>>> members(groups.size());
        std::vector<bool> seen(groups.size(), false);
        for (const auto& g : groups) {
            const long long index = g.at("group").get<long long>();
            if (index < 0 || index >= static_cast<long long>(groups.size())) {
                throw Error(ErrorCode::GroupIndexOutOfRange,
                            "group index " + std::to_string(index) + " outside [0, " +
                                std::to_string(groups.size()) + ")");
            }
            const auto gi = static_cast<std::size_t>(index);
            if (seen[gi]) {
                throw Error(ErrorCode::DuplicateMapping,
                            "group " + std::to_string(index) + " listed twice");
            }
            seen[gi] = true;
            for (const auto& m : g.at("members")) {
                const long long kp = m.at(1).get<long long>();
                if (kp < 0) {
                    throw Error(ErrorCode::KeypointIndexOutOfRange,
                                "negative keypoint index in group " + std::to_string(index));
                }
                members[gi].emplace_back(m.at(0).get<int>(), static_cast<std::size_t>(kp));
            }
        }
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        for (const auto& p : doc.value("flip_pairs", nlohmann::json::array())) {
            const long long a = p.at(0).get<long long>();
            const long long b = p.at(1).get<long long>();
            if (a < 0 || b < 0) {
                throw Error(ErrorCode::FlipPartitionInvalid, "negative group in flip pair");
            }
            pairs.emplace_back(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
        }
        std::vector<double> oks;
        if (doc.contains("oks_constants")) oks = doc["oks_constants"].get<std::vector<double>>();
        return Schema(std::move(classes), std::move(members), std::move(pairs), std::move(oks));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("schema JSON: ") + e.what());
    }
}

Schema load_schema_file(const std::string& path) { return load_schema(read_text_file(path)); }

std::string schema_to_json(const Schema& schema) {
    nlohmann::ordered_json doc;
    doc["classes"] = nlohmann::json::array();
    std::vector<std::vector<std::pair<int, std::size_t>>> members(schema.group_count());
    for (const auto& c : schema.classes()) {
        doc["classes"].push_back({{"id", c.id}, {"name", c.name}, {"keypoints", c.keypoint_names}});
        for (std::size_t kp = 0; kp < c.keypoint_count(); ++kp) {
            members[schema.project_to_group(c.id, kp)].emplace_back(c.id, kp);
        }
    }
    doc["groups"] = nlohmann::json::array();
    for (std::size_t g = 0; g < members.size(); ++g) {
        nlohmann::json list = nlohmann::json::array();
        for (auto [cid, kp] : members[g]) list.push_back({cid, kp});
        doc["groups"].push_back({{"group", g}, {"members", list}});
    }
    doc["flip_pairs"] = nlohmann::json::array();
    for (auto [a, b] : schema.flip_spec().pairs) doc["flip_pairs"].push_back({a, b});
    doc["oks_constants"] = schema.oks_constants();
    return doc.dump(1) + "\n";
}

const std::string& bundled_schema_json() {
    static const std::string text(detail::kBundledSchemaJson);
    return text;
}

const Schema& bundled_schema() {
    static const Schema schema = load_schema(bundled_schema_json());
    return schema;
}

}  // namespace deepmark
