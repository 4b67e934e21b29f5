#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "hiercls/dataset.hpp"
#include "hiercls/error.hpp"
#include "hiercls/model.hpp"
#include "hiercls/taxonomy.hpp"
#include "hiercls/tensor.hpp"

namespace hiercls {

/// Mean feature vector per finest category, either over raw features or over
/// a trained backbone's embedding.
struct ClassCentroids {
    Tensor centroids; // [C_K x dim]
    std::vector<std::string> names;

    std::size_t count() const { return centroids.rows(); }
    std::size_t dim() const { return centroids.cols(); }
};

namespace detail {

inline ClassCentroids centroids_of(const Tensor& features,
                                   const std::vector<int>& labels,
                                   const std::vector<std::string>& names) {
    const std::size_t classes = names.size();
    const std::size_t d = features.cols();
    ClassCentroids out;
    out.names = names;
    out.centroids = Tensor({classes, d});
    std::vector<std::size_t> counts(classes, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto c = static_cast<std::size_t>(labels[i]);
        ++counts[c];
        for (std::size_t j = 0; j < d; ++j)
            out.centroids.data[c * d + j] += features.data[i * d + j];
    }
    for (std::size_t c = 0; c < classes; ++c) {
        if (counts[c] == 0)
            throw error("centroids: category '" + names[c] + "' has no samples");
        for (std::size_t j = 0; j < d; ++j)
            out.centroids.data[c * d + j] /= static_cast<double>(counts[c]);
    }
    return out;
}

} // namespace detail

/// Per-category means of the raw features.
inline ClassCentroids centroids(const Dataset& ds) {
    return detail::centroids_of(ds.features, ds.fine_labels,
                                ds.taxonomy->level_names.back());
}

/// Per-category means of the backbone embedding f; features are passed
/// through the checkpoint's standardizer first, matching training.
inline ClassCentroids centroids(const Dataset& ds, const ModelSpec& spec,
                                const ParamSet& params,
                                const Standardizer& stats) {
    Tape tape;
    BoundModel bm = bind_params(tape, spec, params);
    Var f = backbone_forward(tape, bm, tape.leaf(stats.apply(ds.features)));
    return detail::centroids_of(f.value(), ds.fine_labels,
                                ds.taxonomy->level_names.back());
}

/// Average-linkage agglomerative clustering (UPGMA) with Euclidean distance.
/// Merging starts from one cluster per finest category; each time the active
/// cluster count reaches a requested level size, the partition is snapshotted
/// as one hierarchy level. Ties are broken toward the lexicographically
/// smallest pair of cluster indices, so the output is fully deterministic.
/// `level_sizes` are the target sizes of the induced levels 1..K-1, strictly
/// increasing and all smaller than the number of categories.
inline Taxonomy build_hierarchy(const ClassCentroids& classes,
                                const std::vector<std::size_t>& level_sizes) {
    const std::size_t n = classes.count();
    if (n < 1) throw error("build_hierarchy: no centroids");
    if (level_sizes.empty())
        throw error("build_hierarchy: no target level sizes");
    for (std::size_t i = 0; i < level_sizes.size(); ++i) {
        if (level_sizes[i] < 1)
            throw error("build_hierarchy: level sizes must be >= 1");
        if (i > 0 && level_sizes[i] <= level_sizes[i - 1])
            throw error("build_hierarchy: level sizes must be strictly "
                        "increasing");
    }
    if (level_sizes.back() >= n)
        throw error("build_hierarchy: requested level size " +
                    std::to_string(level_sizes.back()) +
                    " must be smaller than the " + std::to_string(n) +
                    " finest categories");
    if (!classes.centroids.all_finite())
        throw error("build_hierarchy: non-finite centroid");

    const std::size_t d = classes.dim();
    // Pairwise Euclidean distances; merged clusters are updated in place via
    // the Lance-Williams rule for average linkage:
    //   d(k, i+j) = (|i| d(k,i) + |j| d(k,j)) / (|i| + |j|)
    std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                const double diff = classes.centroids.data[i * d + c] -
                                    classes.centroids.data[j * d + c];
                s += diff * diff;
            }
            dist[i][j] = dist[j][i] = std::sqrt(s);
        }

    std::vector<bool> active(n, true);
    std::vector<std::size_t> cluster_size(n, 1);
    std::vector<std::size_t> assign(n); // finest category -> active cluster
    for (std::size_t i = 0; i < n; ++i) assign[i] = i;

    // Snapshots are taken finest-first while merging coarsens the partition.
    std::vector<std::size_t> wanted(level_sizes.rbegin(), level_sizes.rend());
    std::vector<std::vector<std::size_t>> snapshots;

    std::size_t active_count = n;
    std::size_t next_wanted = 0;
    while (next_wanted < wanted.size()) {
        // Closest active pair, smallest (i, j) on ties.
        std::size_t bi = n, bj = n;
        double best = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!active[i]) continue;
            for (std::size_t j = i + 1; j < n; ++j) {
                if (!active[j]) continue;
                if (bi == n || dist[i][j] < best) {
                    best = dist[i][j];
                    bi = i;
                    bj = j;
                }
            }
        }
        // Merge bj into bi (bi < bj keeps indices stable and ties ordered).
        for (std::size_t k = 0; k < n; ++k) {
            if (!active[k] || k == bi || k == bj) continue;
            dist[bi][k] = dist[k][bi] =
                (static_cast<double>(cluster_size[bi]) * dist[bi][k] +
                 static_cast<double>(cluster_size[bj]) * dist[bj][k]) /
                static_cast<double>(cluster_size[bi] + cluster_size[bj]);
        }
        cluster_size[bi] += cluster_size[bj];
        active[bj] = false;
        for (std::size_t c = 0; c < n; ++c)
            if (assign[c] == bj) assign[c] = bi;
        --active_count;

        if (active_count == wanted[next_wanted]) {
            snapshots.push_back(assign);
            ++next_wanted;
        }
    }

    // Relabel each snapshot's cluster ids 0..size-1 by first appearance over
    // category order, then assemble levels coarse -> fine.
    const std::size_t k_levels = level_sizes.size() + 1;
    Taxonomy tax;
    tax.level_names.resize(k_levels);
    tax.parent.resize(k_levels);

    std::vector<std::vector<int>> level_of(k_levels,
                                           std::vector<int>(n)); // category -> idx
    for (std::size_t s = 0; s < snapshots.size(); ++s) {
        const std::size_t k = level_sizes.size() - 1 - s; // coarse level index
        std::vector<int> relabel(n, -1);
        int next = 0;
        for (std::size_t c = 0; c < n; ++c) {
            if (relabel[snapshots[s][c]] < 0) relabel[snapshots[s][c]] = next++;
            level_of[k][c] = relabel[snapshots[s][c]];
        }
        if (static_cast<std::size_t>(next) != level_sizes[k])
            throw error("build_hierarchy: internal snapshot size mismatch");
        for (int i = 0; i < next; ++i)
            tax.level_names[k].push_back("L" + std::to_string(k + 1) + "_" +
                                         std::to_string(i));
    }
    for (std::size_t c = 0; c < n; ++c)
        level_of[k_levels - 1][c] = static_cast<int>(c);
    tax.level_names[k_levels - 1] = classes.names;

    for (std::size_t k = 1; k < k_levels; ++k) {
        tax.parent[k].assign(tax.level_names[k].size(), -1);
        for (std::size_t c = 0; c < n; ++c) {
            const auto child = static_cast<std::size_t>(level_of[k][c]);
            tax.parent[k][child] = level_of[k - 1][c];
        }
    }
    if (auto violation = validate(tax))
        throw error("build_hierarchy: produced an invalid taxonomy: " +
                    *violation);
    return tax;
}

} // namespace hiercls
