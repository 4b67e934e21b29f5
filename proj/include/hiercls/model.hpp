#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hiercls/autodiff.hpp"
#include "hiercls/error.hpp"
#include "hiercls/rng.hpp"
#include "hiercls/taxonomy.hpp"
#include "hiercls/tensor.hpp"

namespace hiercls {

/// The four architectures under study.
///   vanilla_single: one shared backbone, every head reads the full feature f.
///   vanilla_multi:  one independent backbone per level.
///   ours_single:    shared backbone, f split into K segments, head k reads
///                   only segment k.
///   ours:           like ours_single, but head k additionally reads the
///                   finer segments k+1..K through a gradient gate, so the
///                   extra information flows forward without coarse losses
///                   reshaping fine segments.
enum class Variant { vanilla_single, vanilla_multi, ours_single, ours };

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::vanilla_single: return "vanilla_single";
        case Variant::vanilla_multi: return "vanilla_multi";
        case Variant::ours_single: return "ours_single";
        case Variant::ours: return "ours";
    }
    throw error("unknown variant");
}

inline Variant variant_from_name(const std::string& name) {
    for (Variant v : {Variant::vanilla_single, Variant::vanilla_multi,
                      Variant::ours_single, Variant::ours})
        if (name == variant_name(v)) return v;
    throw error("unknown variant '" + name + "'");
}

/// Architecture descriptor. The backbone is an MLP: for each entry of
/// `hidden` a linear layer followed by relu, then a final linear layer to
/// `feature_width`. An empty `hidden` means an identity backbone (no
/// parameters), which requires input_dim == feature_width.
struct ModelSpec {
    Variant variant = Variant::ours;
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden = {64, 64};
    std::size_t feature_width = 64;
    std::vector<std::size_t> level_sizes;
    std::uint64_t seed = 0;

    std::size_t levels() const { return level_sizes.size(); }

    /// Hidden width conventions for the feature embedding: 512 when a model
    /// predicts a single label, 600 when adapted for multiple labels.
    static std::size_t default_feature_width(std::size_t levels) {
        return levels > 1 ? 600 : 512;
    }

    std::size_t segment_width() const { return feature_width / levels(); }

    /// Input width of head k (0-based level).
    std::size_t head_input_width(std::size_t k) const {
        switch (variant) {
            case Variant::vanilla_single:
            case Variant::vanilla_multi: return feature_width;
            case Variant::ours_single: return segment_width();
            case Variant::ours: return (levels() - k) * segment_width();
        }
        throw error("unknown variant");
    }

    void validate() const {
        if (input_dim < 1) throw error("model spec: input_dim must be >= 1");
        if (feature_width < 1)
            throw error("model spec: feature_width must be >= 1");
        if (level_sizes.empty())
            throw error("model spec: level_sizes must be non-empty");
        for (std::size_t c : level_sizes)
            if (c < 1) throw error("model spec: level sizes must be >= 1");
        if ((variant == Variant::ours || variant == Variant::ours_single) &&
            feature_width % levels() != 0)
            throw error("model spec: feature width " +
                        std::to_string(feature_width) +
                        " is not divisible by " + std::to_string(levels()) +
                        " levels (equal split required)");
        if (hidden.empty() && input_dim != feature_width)
            throw error("model spec: identity backbone (no hidden layers) "
                        "requires input_dim == feature_width");
    }
};

struct Param {
    enum class Role { backbone, head };

    std::string name;
    Tensor value;
    bool is_bias = false;
    Role role = Role::backbone;
    int level = -1; // 0-based head level; -1 for backbone parameters

    bool is_backbone() const { return role == Role::backbone; }
};

/// Named trainable tensors in a fixed order shared by initialization,
/// binding, gradient extraction and checkpoints.
struct ParamSet {
    std::vector<Param> params;

    const Param* find(std::string_view name) const {
        for (const auto& p : params)
            if (p.name == name) return &p;
        return nullptr;
    }

    std::size_t total_values() const {
        std::size_t n = 0;
        for (const auto& p : params) n += p.value.size();
        return n;
    }
};

namespace detail {

struct LinearLayout {
    std::string name; // parameter name prefix; ".w" / ".b" appended
    std::size_t in = 0;
    std::size_t out = 0;
    Param::Role role = Param::Role::backbone;
    int level = -1;
};

/// The ordered list of linear layers a variant instantiates. Everything that
/// walks parameters derives its structure from this single function.
inline std::vector<LinearLayout> linear_layout(const ModelSpec& spec) {
    std::vector<LinearLayout> out;
    auto add_backbone = [&](const std::string& prefix) {
        std::size_t w = spec.input_dim;
        for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
            out.push_back({prefix + ".l" + std::to_string(i), w, spec.hidden[i],
                           Param::Role::backbone, -1});
            w = spec.hidden[i];
        }
        if (!spec.hidden.empty())
            out.push_back({prefix + ".l" + std::to_string(spec.hidden.size()),
                           w, spec.feature_width, Param::Role::backbone, -1});
    };
    if (spec.variant == Variant::vanilla_multi) {
        for (std::size_t k = 0; k < spec.levels(); ++k)
            add_backbone("backbone" + std::to_string(k + 1));
    } else {
        add_backbone("backbone");
    }
    for (std::size_t k = 0; k < spec.levels(); ++k)
        out.push_back({"head" + std::to_string(k + 1),
                       spec.head_input_width(k), spec.level_sizes[k],
                       Param::Role::head, static_cast<int>(k)});
    return out;
}

} // namespace detail

/// Glorot-uniform weights, zero biases; bit-identical given the same seed.
inline ParamSet init_params(const ModelSpec& spec) {
    spec.validate();
    Rng rng(derive_seed(spec.seed, "init"));
    ParamSet ps;
    for (const auto& l : detail::linear_layout(spec)) {
        const double bound =
            std::sqrt(6.0 / static_cast<double>(l.in + l.out));
        Param w;
        w.name = l.name + ".w";
        w.value = Tensor({l.in, l.out});
        for (double& v : w.value.data) v = rng.uniform(-bound, bound);
        w.role = l.role;
        w.level = l.level;
        ps.params.push_back(std::move(w));

        Param b;
        b.name = l.name + ".b";
        b.value = Tensor({l.out});
        b.is_bias = true;
        b.role = l.role;
        b.level = l.level;
        ps.params.push_back(std::move(b));
    }
    return ps;
}

/// Parameters placed on a tape as leaves, plus the index structure needed to
/// run the forward pass. `vars[i]` corresponds to `ParamSet.params[i]`.
struct BoundModel {
    ModelSpec spec;
    std::vector<Var> vars;
    // (weight var index, bias var index) per linear, grouped per backbone.
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> backbones;
    std::vector<std::pair<std::size_t, std::size_t>> heads; // per level
};

inline BoundModel bind_params(Tape& tape, const ModelSpec& spec,
                              const ParamSet& params) {
    const auto layout = detail::linear_layout(spec);
    if (params.params.size() != layout.size() * 2)
        throw error("bind_params: parameter set does not match the spec (" +
                    std::to_string(params.params.size()) + " tensors, expected " +
                    std::to_string(layout.size() * 2) + ")");
    BoundModel bm;
    bm.spec = spec;
    bm.vars.reserve(params.params.size());
    const std::size_t n_backbones =
        spec.variant == Variant::vanilla_multi ? spec.levels() : 1;
    bm.backbones.resize(n_backbones);

    std::size_t backbone_seen = 0;
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const auto& l = layout[i];
        const Param& w = params.params[2 * i];
        const Param& b = params.params[2 * i + 1];
        if (w.name != l.name + ".w" || b.name != l.name + ".b")
            throw error("bind_params: parameter order mismatch at '" + w.name +
                        "'");
        if (w.value.shape != std::vector<std::size_t>{l.in, l.out} ||
            b.value.shape != std::vector<std::size_t>{l.out})
            throw error("bind_params: shape mismatch for '" + l.name + "'");
        const std::size_t wi = bm.vars.size();
        bm.vars.push_back(tape.leaf(w.value));
        bm.vars.push_back(tape.leaf(b.value));
        if (l.role == Param::Role::backbone) {
            const std::size_t per =
                spec.hidden.empty() ? 0 : spec.hidden.size() + 1;
            bm.backbones[per == 0 ? 0 : backbone_seen / per].emplace_back(wi,
                                                                          wi + 1);
            ++backbone_seen;
        } else {
            bm.heads.emplace_back(wi, wi + 1);
        }
    }
    return bm;
}

/// Everything a forward pass produced, kept around so tests and diagnostics
/// can inspect gradients of intermediate tensors.
struct ForwardTrace {
    std::vector<Var> features; // f per backbone (1, or K for vanilla_multi)
    std::vector<Var> segments; // split of f (ours / ours_single only)
    std::vector<Var> logits;   // one per level, width C_k
};

namespace detail {

inline Var mlp_forward(Tape& tape,
                       const std::vector<std::pair<std::size_t, std::size_t>>& layers,
                       const std::vector<Var>& vars, Var x) {
    if (layers.empty()) return x; // identity backbone
    Var h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = tape.add_bias(tape.matmul(h, vars[layers[i].first]),
                          vars[layers[i].second]);
        if (i + 1 < layers.size()) h = tape.relu(h);
    }
    return h;
}

} // namespace detail

/// Backbone embedding f = F(x) for the (single) shared backbone.
inline Var backbone_forward(Tape& tape, const BoundModel& bm, Var x) {
    if (x.value().rank() != 2 || x.value().cols() != bm.spec.input_dim)
        throw error("backbone_forward: input is " + x.value().shape_str() +
                    ", expected [m x " + std::to_string(bm.spec.input_dim) +
                    "]");
    return detail::mlp_forward(tape, bm.backbones[0], bm.vars, x);
}

/// Runs the variant's forward pass and returns per-level logits.
///
/// Under `ours`, head k consumes concat(f_k, gate(f_{k+1}), ..., gate(f_K)):
/// its own segment plus every finer segment passed through stop_gradient, so
/// in the backward pass the loss at level k reaches only segment k of f while
/// the head weights over the gated columns still train.
inline ForwardTrace forward(Tape& tape, const BoundModel& bm, Var x) {
    const ModelSpec& spec = bm.spec;
    if (x.value().rank() != 2 || x.value().cols() != spec.input_dim)
        throw error("forward: input is " + x.value().shape_str() +
                    ", expected [m x " + std::to_string(spec.input_dim) + "]");
    const std::size_t k_levels = spec.levels();
    ForwardTrace trace;

    auto head = [&](std::size_t k, Var input) {
        return tape.add_bias(tape.matmul(input, bm.vars[bm.heads[k].first]),
                             bm.vars[bm.heads[k].second]);
    };

    switch (spec.variant) {
        case Variant::vanilla_single: {
            Var f = detail::mlp_forward(tape, bm.backbones[0], bm.vars, x);
            trace.features.push_back(f);
            for (std::size_t k = 0; k < k_levels; ++k)
                trace.logits.push_back(head(k, f));
            break;
        }
        case Variant::vanilla_multi: {
            for (std::size_t k = 0; k < k_levels; ++k) {
                Var f = detail::mlp_forward(tape, bm.backbones[k], bm.vars, x);
                trace.features.push_back(f);
                trace.logits.push_back(head(k, f));
            }
            break;
        }
        case Variant::ours_single: {
            Var f = detail::mlp_forward(tape, bm.backbones[0], bm.vars, x);
            trace.features.push_back(f);
            trace.segments = tape.split(f, k_levels);
            for (std::size_t k = 0; k < k_levels; ++k)
                trace.logits.push_back(head(k, trace.segments[k]));
            break;
        }
        case Variant::ours: {
            Var f = detail::mlp_forward(tape, bm.backbones[0], bm.vars, x);
            trace.features.push_back(f);
            trace.segments = tape.split(f, k_levels);
            for (std::size_t k = 0; k < k_levels; ++k) {
                std::vector<Var> parts;
                parts.reserve(k_levels - k);
                parts.push_back(trace.segments[k]);
                for (std::size_t j = k + 1; j < k_levels; ++j)
                    parts.push_back(tape.stop_gradient(trace.segments[j]));
                trace.logits.push_back(head(k, tape.concat(parts)));
            }
            break;
        }
    }
    return trace;
}

/// Per-level loss weights; generalizes the two-task (alpha, beta) weighting
/// to K levels. All-ones reproduces the plain unweighted sum.
struct LossWeights {
    std::vector<double> w;

    static LossWeights ones(std::size_t k_levels) {
        LossWeights lw;
        lw.w.assign(k_levels, 1.0);
        return lw;
    }

    void validate(std::size_t k_levels) const {
        if (w.size() != k_levels)
            throw error("loss weights: " + std::to_string(w.size()) +
                        " weights for " + std::to_string(k_levels) + " levels");
        bool any = false;
        for (double x : w) {
            if (!std::isfinite(x) || x < 0.0)
                throw error("loss weights must be finite and >= 0");
            if (x > 0.0) any = true;
        }
        if (!any) throw error("loss weights must not be all zero");
    }
};

/// Sum over levels of w_k * cross_entropy(logits_k, targets_k).
inline Var total_loss(Tape& tape, const std::vector<Var>& logits,
                      const std::vector<LabelChain>& chains,
                      const LossWeights& weights) {
    weights.validate(logits.size());
    if (chains.empty()) throw error("total_loss: empty batch");
    for (const auto& c : chains)
        if (c.indices.size() != logits.size())
            throw error("total_loss: chain length " +
                        std::to_string(c.indices.size()) + " for " +
                        std::to_string(logits.size()) + " levels");
    Var total;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        std::vector<int> targets;
        targets.reserve(chains.size());
        for (const auto& c : chains) targets.push_back(c.indices[k]);
        Var term = tape.scale(
            tape.softmax_cross_entropy(logits[k], std::move(targets)),
            weights.w[k]);
        total = k == 0 ? term : tape.add(total, term);
    }
    return total;
}

/// Gradients of the bound parameters after backward(), aligned with ParamSet.
inline std::vector<Tensor> parameter_gradients(const Tape& tape,
                                               const BoundModel& bm) {
    std::vector<Tensor> grads;
    grads.reserve(bm.vars.size());
    for (Var v : bm.vars) grads.push_back(tape.grad(v));
    return grads;
}

} // namespace hiercls
