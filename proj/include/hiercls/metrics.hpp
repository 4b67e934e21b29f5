#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "hiercls/autodiff.hpp"
#include "hiercls/error.hpp"
#include "hiercls/model.hpp"
#include "hiercls/taxonomy.hpp"

namespace hiercls {

/// Per-level accuracy, its arithmetic mean, and the fraction of samples whose
/// independently predicted labels form a valid chain under the taxonomy.
/// Rates are fractions in [0, 1]; percentages are display-only.
struct Metrics {
    std::vector<double> per_level_acc;
    double avg_acc = 0.0;
    double consistency_rate = 0.0;
    std::size_t evaluated = 0;
};

/// Arithmetic mean of per-level accuracies. A single definition so reported
/// numbers and tests cannot drift apart.
inline double average_accuracy(const std::vector<double>& per_level) {
    if (per_level.empty()) throw error("average_accuracy: no levels");
    double s = 0.0;
    for (double a : per_level) s += a;
    return s / static_cast<double>(per_level.size());
}

/// Row-wise argmax; ties break toward the lowest index.
inline std::vector<int> argmax_rows(const Tensor& logits) {
    std::vector<int> out(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < logits.cols(); ++j)
            if (logits.at(i, j) > logits.at(i, best)) best = j;
        out[i] = static_cast<int>(best);
    }
    return out;
}

/// Label of every level is the argmax of its own head; no consistency is
/// enforced across levels, so predicted chains may be invalid (that is what
/// consistency_rate measures).
inline std::vector<LabelChain> predict(const ModelSpec& spec,
                                       const ParamSet& params,
                                       const Tensor& x) {
    Tape tape;
    BoundModel bm = bind_params(tape, spec, params);
    ForwardTrace trace = forward(tape, bm, tape.leaf(x));
    const std::size_t n = x.rows();
    std::vector<LabelChain> preds(n);
    for (auto& p : preds) p.indices.resize(spec.levels());
    for (std::size_t k = 0; k < spec.levels(); ++k) {
        const std::vector<int> arg = argmax_rows(trace.logits[k].value());
        for (std::size_t i = 0; i < n; ++i) preds[i].indices[k] = arg[i];
    }
    return preds;
}

/// Fraction of predicted chains that respect the taxonomy's parent maps.
/// A K=1 chain is vacuously consistent.
inline double consistency_rate(const std::vector<LabelChain>& preds,
                               const Taxonomy& tax) {
    if (preds.empty()) throw error("consistency_rate: no predictions");
    std::size_t ok = 0;
    for (const auto& p : preds) {
        if (p.indices.size() != tax.levels())
            throw error("consistency_rate: chain length mismatch");
        for (std::size_t k = 0; k < tax.levels(); ++k) {
            const int idx = p.indices[k];
            if (idx < 0 || static_cast<std::size_t>(idx) >= tax.level_size(k))
                throw error("consistency_rate: index out of range at level " +
                            std::to_string(k));
        }
        if (chain_consistent(tax, p)) ++ok;
    }
    return static_cast<double>(ok) / static_cast<double>(preds.size());
}

inline Metrics accuracy(const std::vector<LabelChain>& preds,
                        const std::vector<LabelChain>& truth,
                        const Taxonomy& tax) {
    if (preds.size() != truth.size())
        throw error("accuracy: " + std::to_string(preds.size()) +
                    " predictions vs " + std::to_string(truth.size()) +
                    " ground-truth chains");
    if (preds.empty()) throw error("accuracy: empty input");
    const std::size_t k_levels = tax.levels();
    for (const auto& c : truth)
        if (c.indices.size() != k_levels)
            throw error("accuracy: ground-truth chain length mismatch");

    Metrics m;
    m.evaluated = preds.size();
    m.per_level_acc.assign(k_levels, 0.0);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i].indices.size() != k_levels)
            throw error("accuracy: prediction chain length mismatch");
        for (std::size_t k = 0; k < k_levels; ++k)
            if (preds[i].indices[k] == truth[i].indices[k])
                m.per_level_acc[k] += 1.0;
    }
    for (double& a : m.per_level_acc) a /= static_cast<double>(preds.size());
    m.avg_acc = average_accuracy(m.per_level_acc);
    m.consistency_rate = consistency_rate(preds, tax);
    return m;
}

namespace detail {

inline std::string format_rate(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

} // namespace detail

inline std::string metrics_csv(const Metrics& m) {
    std::string out = "level,acc\n";
    for (std::size_t k = 0; k < m.per_level_acc.size(); ++k)
        out += std::to_string(k + 1) + "," +
               detail::format_rate(m.per_level_acc[k]) + "\n";
    out += "avg_acc," + detail::format_rate(m.avg_acc) + "\n";
    out += "consistency_rate," + detail::format_rate(m.consistency_rate) + "\n";
    return out;
}

/// Human-readable report; rates are shown as percentages here and only here.
inline std::string metrics_text(const Metrics& m) {
    std::string out;
    char buf[96];
    for (std::size_t k = 0; k < m.per_level_acc.size(); ++k) {
        std::snprintf(buf, sizeof buf, "level %zu acc: %.2f%%\n", k + 1,
                      100.0 * m.per_level_acc[k]);
        out += buf;
    }
    std::snprintf(buf, sizeof buf, "avg_acc: %.2f%%\n", 100.0 * m.avg_acc);
    out += buf;
    std::snprintf(buf, sizeof buf, "consistency_rate: %.2f%%\n",
                  100.0 * m.consistency_rate);
    out += buf;
    std::snprintf(buf, sizeof buf, "samples: %zu\n", m.evaluated);
    out += buf;
    return out;
}

} // namespace hiercls
