#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hiercls/error.hpp"
#include "hiercls/rng.hpp"
#include "hiercls/taxonomy.hpp"
#include "hiercls/tensor.hpp"

namespace hiercls {

/// Feature matrix plus finest-level labels. Coarser labels are never stored;
/// they are always derived through the taxonomy, which keeps annotations
/// consistent by construction.
struct Dataset {
    Tensor features; // [N x d]
    std::vector<int> fine_labels;
    std::shared_ptr<const Taxonomy> taxonomy;
    std::string split; // "train" | "test"

    std::size_t size() const { return fine_labels.size(); }
    std::size_t dim() const { return features.cols(); }
};

/// Controls the synthetic generator: a balanced taxonomy of the given shape,
/// Gaussian clusters per finest category nested inside coarser clusters.
struct SynthConfig {
    std::vector<std::size_t> level_sizes = {4, 16};
    std::size_t train_per_class = 50;
    std::size_t test_per_class = 20;
    std::size_t dim = 20;
    double coarse_scale = 10.0; // norm of coarsest cluster centers
    double fine_scale = 3.0;    // norm of child-center offsets, halved per level
    double noise = 1.5;         // isotropic sample noise sigma
    std::uint64_t seed = 0;

    void validate() const {
        if (level_sizes.empty()) throw error("synth: no taxonomy shape given");
        for (std::size_t c : level_sizes)
            if (c < 1) throw error("synth: level sizes must be >= 1");
        for (std::size_t k = 1; k < level_sizes.size(); ++k)
            if (level_sizes[k] % level_sizes[k - 1] != 0)
                throw error("synth: level size " +
                            std::to_string(level_sizes[k]) +
                            " is not divisible by parent level size " +
                            std::to_string(level_sizes[k - 1]) +
                            " (balanced tree required)");
        if (dim < 1) throw error("synth: dim must be >= 1");
        if (coarse_scale <= 0.0 || fine_scale <= 0.0)
            throw error("synth: scales must be > 0");
        if (noise < 0.0) throw error("synth: noise must be >= 0");
        if (train_per_class < 1) throw error("synth: train_per_class must be >= 1");
    }

    /// Advisory only; the config is still usable.
    std::optional<std::string> warning() const {
        if (coarse_scale <= fine_scale)
            return "coarse_scale <= fine_scale: coarse clusters will not "
                   "dominate fine structure";
        return std::nullopt;
    }
};

struct SynthData {
    Dataset train;
    Dataset test;
    std::shared_ptr<const Taxonomy> taxonomy;
    Tensor fine_centers; // [C_K x d], the exact generating centers
};

namespace detail {

inline Taxonomy balanced_taxonomy(const std::vector<std::size_t>& sizes) {
    Taxonomy tax;
    tax.level_names.resize(sizes.size());
    tax.parent.resize(sizes.size());
    for (std::size_t k = 0; k < sizes.size(); ++k) {
        for (std::size_t i = 0; i < sizes[k]; ++i)
            tax.level_names[k].push_back("L" + std::to_string(k + 1) + "_" +
                                         std::to_string(i));
        if (k > 0) {
            const std::size_t fanout = sizes[k] / sizes[k - 1];
            for (std::size_t i = 0; i < sizes[k]; ++i)
                tax.parent[k].push_back(static_cast<int>(i / fanout));
        }
    }
    return tax;
}

/// Random direction scaled to exactly `norm`.
inline std::vector<double> scaled_direction(Rng& rng, std::size_t dim,
                                            double norm) {
    std::vector<double> v(dim);
    double len2 = 0.0;
    do {
        len2 = 0.0;
        for (double& x : v) {
            x = rng.normal();
            len2 += x * x;
        }
    } while (len2 == 0.0);
    const double s = norm / std::sqrt(len2);
    for (double& x : v) x *= s;
    return v;
}

} // namespace detail

/// Deterministic per seed: builds the balanced taxonomy, draws one center per
/// coarsest category at norm coarse_scale, recursively offsets child centers
/// (offset norm fine_scale, halved per extra level), then samples points with
/// isotropic Gaussian noise. Train and test are drawn independently.
inline SynthData gen_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    auto tax = std::make_shared<Taxonomy>(
        detail::balanced_taxonomy(cfg.level_sizes));
    const std::size_t k_levels = cfg.level_sizes.size();
    const std::size_t d = cfg.dim;

    Rng center_rng(derive_seed(cfg.seed, "centers"));
    // centers[k][i] is the center of category i at level k.
    std::vector<std::vector<std::vector<double>>> centers(k_levels);
    centers[0].reserve(cfg.level_sizes[0]);
    for (std::size_t i = 0; i < cfg.level_sizes[0]; ++i)
        centers[0].push_back(
            detail::scaled_direction(center_rng, d, cfg.coarse_scale));
    for (std::size_t k = 1; k < k_levels; ++k) {
        const double offset_norm =
            cfg.fine_scale * std::pow(0.5, static_cast<double>(k - 1));
        centers[k].reserve(cfg.level_sizes[k]);
        for (std::size_t i = 0; i < cfg.level_sizes[k]; ++i) {
            const auto& base =
                centers[k - 1][static_cast<std::size_t>(tax->parent[k][i])];
            auto off = detail::scaled_direction(center_rng, d, offset_norm);
            for (std::size_t j = 0; j < d; ++j) off[j] += base[j];
            centers[k].push_back(std::move(off));
        }
    }

    const std::size_t fine = cfg.level_sizes[k_levels - 1];
    Tensor fine_centers({fine, d});
    for (std::size_t c = 0; c < fine; ++c)
        for (std::size_t j = 0; j < d; ++j)
            fine_centers.data[c * d + j] = centers[k_levels - 1][c][j];

    auto draw_split = [&](std::string_view name, std::size_t per_class) {
        Dataset ds;
        ds.taxonomy = tax;
        ds.split = std::string(name);
        ds.features = Tensor({fine * per_class, d});
        ds.fine_labels.reserve(fine * per_class);
        Rng rng(derive_seed(cfg.seed, name));
        std::size_t row = 0;
        for (std::size_t c = 0; c < fine; ++c) {
            for (std::size_t s = 0; s < per_class; ++s, ++row) {
                for (std::size_t j = 0; j < d; ++j)
                    ds.features.data[row * d + j] =
                        fine_centers.data[c * d + j] + cfg.noise * rng.normal();
                ds.fine_labels.push_back(static_cast<int>(c));
            }
        }
        return ds;
    };

    SynthData out;
    out.taxonomy = tax;
    out.train = draw_split("train", cfg.train_per_class);
    out.test = draw_split("test", cfg.test_per_class);
    out.fine_centers = std::move(fine_centers);
    return out;
}

namespace detail {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_double(std::string_view field, std::size_t line_no) {
    std::string s(trim(field));
    if (s.empty())
        throw error("csv line " + std::to_string(line_no) + ": empty field");
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size())
        throw error("csv line " + std::to_string(line_no) +
                    ": non-numeric feature '" + s + "'");
    return v;
}

} // namespace detail

/// Header "f0,...,f{d-1},label"; one row per sample; label is the finest
/// category name. Doubles are written with %.17g so a round trip is exact.
inline std::string to_csv(const Dataset& ds) {
    const std::size_t d = ds.dim();
    std::string out;
    for (std::size_t j = 0; j < d; ++j) out += "f" + std::to_string(j) + ",";
    out += "label\n";
    const auto& fine_names = ds.taxonomy->level_names.back();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            out += detail::format_double(ds.features.data[i * d + j]);
            out += ",";
        }
        out += fine_names[static_cast<std::size_t>(ds.fine_labels[i])];
        out += "\n";
    }
    return out;
}

inline Dataset load_csv(const std::string& text,
                        std::shared_ptr<const Taxonomy> tax,
                        std::string split = "train") {
    const std::size_t fine_level = tax->levels() - 1;
    Dataset ds;
    ds.taxonomy = tax;
    ds.split = std::move(split);

    std::vector<double> values;
    std::size_t d = 0;
    bool have_header = false;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        std::string_view line =
            detail::trim(std::string_view(text).substr(pos, nl - pos));
        pos = nl + 1;
        ++line_no;
        if (line.empty()) continue;
        auto fields = detail::split_fields(line, ',');
        if (!have_header) {
            if (fields.size() < 2 || detail::trim(fields.back()) != "label")
                throw error("csv line 1: expected header f0,...,label");
            d = fields.size() - 1;
            for (std::size_t j = 0; j < d; ++j)
                if (detail::trim(fields[j]) != "f" + std::to_string(j))
                    throw error("csv line 1: bad header field '" +
                                std::string(detail::trim(fields[j])) + "'");
            have_header = true;
            continue;
        }
        if (fields.size() != d + 1)
            throw error("csv line " + std::to_string(line_no) + ": expected " +
                        std::to_string(d + 1) + " fields, got " +
                        std::to_string(fields.size()));
        for (std::size_t j = 0; j < d; ++j)
            values.push_back(detail::parse_double(fields[j], line_no));
        const std::string name(detail::trim(fields.back()));
        const int idx = tax->index_of(fine_level, name);
        if (idx < 0)
            throw error("csv line " + std::to_string(line_no) +
                        ": unknown label '" + name + "'");
        ds.fine_labels.push_back(idx);
    }
    if (!have_header) throw error("csv: empty input");
    if (ds.fine_labels.empty()) throw error("csv: no data rows");

    ds.features.shape = {ds.fine_labels.size(), d};
    ds.features.data = std::move(values);
    if (!ds.features.all_finite())
        throw error("csv: non-finite feature value");
    return ds;
}

/// Per-dimension shift/scale fitted on training features; test data reuses
/// the training statistics.
struct Standardizer {
    Tensor mean;  // [d]
    Tensor scale; // [d], standard deviation (1 where degenerate)

    static Standardizer fit(const Tensor& features) {
        const std::size_t n = features.rows(), d = features.cols();
        if (n == 0) throw error("standardizer: empty feature matrix");
        Standardizer st;
        st.mean = Tensor({d});
        st.scale = Tensor({d});
        for (std::size_t j = 0; j < d; ++j) {
            double m = 0.0;
            for (std::size_t i = 0; i < n; ++i) m += features.data[i * d + j];
            m /= static_cast<double>(n);
            double var = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double c = features.data[i * d + j] - m;
                var += c * c;
            }
            var /= static_cast<double>(n);
            st.mean.data[j] = m;
            st.scale.data[j] = var > 0.0 ? std::sqrt(var) : 1.0;
        }
        return st;
    }

    Tensor apply(const Tensor& features) const {
        const std::size_t n = features.rows(), d = features.cols();
        if (d != mean.size())
            throw error("standardizer: dimension mismatch, fitted on " +
                        std::to_string(mean.size()) + " features, got " +
                        std::to_string(d));
        Tensor out = features;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j)
                out.data[i * d + j] =
                    (out.data[i * d + j] - mean.data[j]) / scale.data[j];
        return out;
    }
};

struct Batch {
    Tensor features; // [b x d]
    std::vector<LabelChain> chains;

    std::vector<int> targets_at_level(std::size_t k) const {
        std::vector<int> t;
        t.reserve(chains.size());
        for (const auto& c : chains) t.push_back(c.indices[k]);
        return t;
    }
};

/// Splits a dataset into batches, deriving each sample's label chain through
/// the taxonomy. With shuffle off the order is dataset order; otherwise the
/// permutation is deterministic per seed. The last batch may be smaller.
inline std::vector<Batch> batches(const Dataset& ds, std::size_t batch_size,
                                  bool shuffle, std::uint64_t seed = 0) {
    if (batch_size < 1) throw error("batches: batch size must be >= 1");
    if (ds.size() == 0) throw error("batches: empty dataset");
    const std::size_t n = ds.size(), d = ds.dim();

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    if (shuffle) {
        Rng rng(seed);
        order = rng.permutation(n);
    }

    std::vector<LabelChain> chains(ds.taxonomy->level_size(ds.taxonomy->levels() - 1));
    std::vector<bool> chain_ready(chains.size(), false);

    std::vector<Batch> out;
    out.reserve((n + batch_size - 1) / batch_size);
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t b = std::min(batch_size, n - start);
        Batch batch;
        batch.features = Tensor({b, d});
        batch.chains.reserve(b);
        for (std::size_t r = 0; r < b; ++r) {
            const std::size_t src = order[start + r];
            for (std::size_t j = 0; j < d; ++j)
                batch.features.data[r * d + j] = ds.features.data[src * d + j];
            const auto label = static_cast<std::size_t>(ds.fine_labels[src]);
            if (!chain_ready[label]) {
                chains[label] = label_chain(*ds.taxonomy, static_cast<int>(label));
                chain_ready[label] = true;
            }
            batch.chains.push_back(chains[label]);
        }
        out.push_back(std::move(batch));
    }
    return out;
}

} // namespace hiercls
