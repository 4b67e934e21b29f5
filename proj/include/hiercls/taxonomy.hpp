#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hiercls/error.hpp"

namespace hiercls {

/// A coarse-to-fine label hierarchy. Levels are indexed 0..K-1, coarse to
/// fine. Every category at level k >= 1 has exactly one parent at level k-1.
/// Immutable after construction; safe to share across threads.
struct Taxonomy {
    /// Per-level category names; level_names[k][i] names category i of level k.
    std::vector<std::vector<std::string>> level_names;
    /// parent[k][i] is the parent index at level k-1; parent[0] is empty.
    std::vector<std::vector<int>> parent;

    std::size_t levels() const { return level_names.size(); }
    std::size_t level_size(std::size_t k) const { return level_names[k].size(); }

    std::vector<std::size_t> level_sizes() const {
        std::vector<std::size_t> s;
        s.reserve(levels());
        for (const auto& names : level_names) s.push_back(names.size());
        return s;
    }

    /// Index of `name` at level k, or -1.
    int index_of(std::size_t k, std::string_view name) const {
        const auto& names = level_names[k];
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return static_cast<int>(i);
        return -1;
    }
};

/// One category index per level for a sample, coarse to fine.
struct LabelChain {
    std::vector<int> indices;

    bool operator==(const LabelChain&) const = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r'))
        --e;
    return s.substr(b, e - b);
}

inline std::vector<std::string_view> split_fields(std::string_view line,
                                                  char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == sep) {
            out.push_back(line.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

} // namespace detail

/// Parses the taxonomy file format: first line "levels=K", then one line per
/// finest category listing its chain of K comma-separated names, coarse to
/// fine. '#' lines are comments. Names are trimmed and case-sensitive;
/// category indices are assigned by first appearance.
inline Taxonomy parse_taxonomy(const std::string& text) {
    Taxonomy tax;
    std::vector<std::map<std::string, int, std::less<>>> lookup;
    std::size_t k_levels = 0;
    bool have_header = false;
    std::size_t line_no = 0;
    std::size_t data_lines = 0;

    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        std::string_view line =
            detail::trim(std::string_view(text).substr(pos, nl - pos));
        pos = nl + 1;
        ++line_no;
        if (line.empty() || line[0] == '#') continue;

        if (!have_header) {
            if (line.substr(0, 7) != "levels=")
                throw error("taxonomy line " + std::to_string(line_no) +
                            ": expected 'levels=K' header");
            std::string digits(line.substr(7));
            k_levels = 0;
            for (char c : digits) {
                if (c < '0' || c > '9')
                    throw error("taxonomy line " + std::to_string(line_no) +
                                ": bad level count '" + digits + "'");
                k_levels = k_levels * 10 + static_cast<std::size_t>(c - '0');
            }
            if (k_levels < 1)
                throw error("taxonomy: level count must be >= 1");
            tax.level_names.resize(k_levels);
            tax.parent.resize(k_levels);
            lookup.resize(k_levels);
            have_header = true;
            continue;
        }

        auto fields = detail::split_fields(line, ',');
        if (fields.size() != k_levels)
            throw error("taxonomy line " + std::to_string(line_no) +
                        ": expected " + std::to_string(k_levels) +
                        " comma-separated names, got " +
                        std::to_string(fields.size()));
        ++data_lines;

        int parent_idx = -1;
        for (std::size_t k = 0; k < k_levels; ++k) {
            std::string name(detail::trim(fields[k]));
            if (name.empty())
                throw error("taxonomy line " + std::to_string(line_no) +
                            ": empty name at level " + std::to_string(k));
            auto it = lookup[k].find(name);
            if (it != lookup[k].end()) {
                const int idx = it->second;
                const int recorded = k > 0 ? tax.parent[k][idx] : -1;
                if (recorded != parent_idx)
                    throw error("taxonomy line " + std::to_string(line_no) +
                                ": inconsistent parent for '" + name +
                                "' at level " + std::to_string(k));
                if (k == k_levels - 1)
                    throw error("taxonomy line " + std::to_string(line_no) +
                                ": duplicate finest category '" + name + "'");
                parent_idx = idx;
            } else {
                const int idx = static_cast<int>(tax.level_names[k].size());
                tax.level_names[k].push_back(name);
                if (k > 0) tax.parent[k].push_back(parent_idx);
                lookup[k].emplace(std::move(name), idx);
                parent_idx = idx;
            }
        }
    }

    if (!have_header) throw error("taxonomy: empty input");
    if (data_lines == 0) throw error("taxonomy: no category lines");
    return tax;
}

/// Canonical serialization; parse_taxonomy(to_text(t)) reproduces t, and
/// files written in this form round-trip byte-identically.
inline std::string to_text(const Taxonomy& tax);

/// Returns the first violated invariant, or nullopt when the taxonomy is
/// well formed. Violations are named, not thrown.
inline std::optional<std::string> validate(const Taxonomy& tax) {
    const std::size_t k_levels = tax.levels();
    if (k_levels < 1) return "empty taxonomy: no levels";
    if (tax.parent.size() != k_levels) return "malformed: parent map level count";
    for (std::size_t k = 0; k < k_levels; ++k) {
        if (tax.level_names[k].empty())
            return "empty level " + std::to_string(k);
        if (k > 0 && tax.parent[k].size() != tax.level_names[k].size())
            return "malformed: parent map size at level " + std::to_string(k);
    }
    for (std::size_t k = 1; k < k_levels; ++k) {
        const int up = static_cast<int>(tax.level_size(k - 1));
        for (int p : tax.parent[k])
            if (p < 0 || p >= up)
                return "parent index out of range at level " + std::to_string(k);
    }
    // Duplicate names within a level. Two entries sharing a name are the
    // same category written twice; if their parents differ the category
    // effectively has multiple parents.
    for (std::size_t k = 0; k < k_levels; ++k) {
        std::map<std::string_view, std::size_t> seen;
        for (std::size_t i = 0; i < tax.level_size(k); ++i) {
            auto [it, inserted] = seen.emplace(tax.level_names[k][i], i);
            if (!inserted) {
                if (k > 0 && tax.parent[k][it->second] != tax.parent[k][i])
                    return "multiple parents for '" + tax.level_names[k][i] +
                           "' at level " + std::to_string(k);
                return "duplicate category name '" + tax.level_names[k][i] +
                       "' at level " + std::to_string(k);
            }
        }
    }
    for (std::size_t k = 0; k + 1 < k_levels; ++k) {
        std::vector<bool> has_child(tax.level_size(k), false);
        for (int p : tax.parent[k + 1]) has_child[static_cast<std::size_t>(p)] = true;
        for (std::size_t i = 0; i < has_child.size(); ++i)
            if (!has_child[i])
                return "empty internal node '" + tax.level_names[k][i] +
                       "' at level " + std::to_string(k);
    }
    return std::nullopt;
}

/// Ancestor of category `idx` (at level `level`) at `target_level` <= level.
/// Levels are 0-based; ancestor(t, k, i, k) == i.
inline int ancestor(const Taxonomy& tax, std::size_t level, int idx,
                    std::size_t target_level) {
    if (level >= tax.levels())
        throw error("ancestor: level " + std::to_string(level) +
                    " out of range");
    if (target_level > level)
        throw error("ancestor: target level " + std::to_string(target_level) +
                    " is finer than level " + std::to_string(level));
    if (idx < 0 || static_cast<std::size_t>(idx) >= tax.level_size(level))
        throw error("ancestor: index " + std::to_string(idx) +
                    " out of range at level " + std::to_string(level));
    int cur = idx;
    for (std::size_t k = level; k > target_level; --k)
        cur = tax.parent[k][static_cast<std::size_t>(cur)];
    return cur;
}

/// Full chain for a finest-level category, derived by walking parents.
inline LabelChain label_chain(const Taxonomy& tax, int fine_idx) {
    const std::size_t k_levels = tax.levels();
    if (fine_idx < 0 ||
        static_cast<std::size_t>(fine_idx) >= tax.level_size(k_levels - 1))
        throw error("label_chain: fine index " + std::to_string(fine_idx) +
                    " out of range");
    LabelChain chain;
    chain.indices.assign(k_levels, 0);
    int cur = fine_idx;
    for (std::size_t k = k_levels; k-- > 0;) {
        chain.indices[k] = cur;
        if (k > 0) cur = tax.parent[k][static_cast<std::size_t>(cur)];
    }
    return chain;
}

/// True when every adjacent pair in the chain respects the parent maps.
inline bool chain_consistent(const Taxonomy& tax, const LabelChain& chain) {
    if (chain.indices.size() != tax.levels()) return false;
    for (std::size_t k = 0; k < tax.levels(); ++k) {
        const int idx = chain.indices[k];
        if (idx < 0 || static_cast<std::size_t>(idx) >= tax.level_size(k))
            return false;
        if (k > 0 && tax.parent[k][static_cast<std::size_t>(idx)] !=
                         chain.indices[k - 1])
            return false;
    }
    return true;
}

inline std::string to_text(const Taxonomy& tax) {
    std::string out = "levels=" + std::to_string(tax.levels()) + "\n";
    const std::size_t fine = tax.level_size(tax.levels() - 1);
    for (std::size_t i = 0; i < fine; ++i) {
        const LabelChain chain = label_chain(tax, static_cast<int>(i));
        for (std::size_t k = 0; k < tax.levels(); ++k) {
            if (k) out += ",";
            out += tax.level_names[k][static_cast<std::size_t>(chain.indices[k])];
        }
        out += "\n";
    }
    return out;
}

} // namespace hiercls
