#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hiercls/autodiff.hpp"
#include "hiercls/dataset.hpp"
#include "hiercls/error.hpp"
#include "hiercls/metrics.hpp"
#include "hiercls/model.hpp"
#include "hiercls/rng.hpp"

namespace hiercls {

/// Optimizer and schedule settings. Defaults: 100 epochs, batch 64, dual
/// learning rates 0.01 (backbone) / 0.1 (heads), momentum 0.9, weight decay
/// 5e-4. Rates are constant over training; no decay schedule is applied.
struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 64;
    double lr_backbone = 0.01;
    double lr_heads = 0.1;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::vector<double> loss_weights; // empty -> all ones
    std::uint64_t seed = 0;
    std::size_t eval_every = 10; // 0 -> evaluate only after the last epoch

    void validate(std::size_t k_levels) const {
        if (epochs < 1) throw error("train config: epochs must be >= 1");
        if (batch_size < 1) throw error("train config: batch_size must be >= 1");
        if (!(lr_backbone > 0.0) || !(lr_heads > 0.0))
            throw error("train config: learning rates must be > 0");
        if (!(momentum >= 0.0) || momentum >= 1.0)
            throw error("train config: momentum must be in [0, 1)");
        if (!(weight_decay >= 0.0))
            throw error("train config: weight_decay must be >= 0");
        if (!loss_weights.empty()) weights(k_levels).validate(k_levels);
    }

    LossWeights weights(std::size_t k_levels) const {
        if (loss_weights.empty()) return LossWeights::ones(k_levels);
        LossWeights lw;
        lw.w = loss_weights;
        lw.validate(k_levels);
        return lw;
    }
};

namespace detail {

inline double parse_config_double(const std::string& key,
                                  const std::string& value) {
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (value.empty() || end != value.c_str() + value.size())
        throw error("config: bad numeric value '" + value + "' for key '" +
                    key + "'");
    return v;
}

inline std::uint64_t parse_config_uint(const std::string& key,
                                       const std::string& value) {
    if (value.empty()) throw error("config: empty value for key '" + key + "'");
    std::uint64_t v = 0;
    for (char c : value) {
        if (c < '0' || c > '9')
            throw error("config: bad integer value '" + value + "' for key '" +
                        key + "'");
        v = v * 10 + static_cast<std::uint64_t>(c - '0');
    }
    return v;
}

inline std::vector<double> parse_config_list(const std::string& key,
                                             const std::string& value) {
    std::vector<double> out;
    for (auto field : split_fields(value, ','))
        out.push_back(parse_config_double(key, std::string(trim(field))));
    return out;
}

} // namespace detail

/// key=value lines; '#' comments and blank lines allowed; unknown keys are
/// errors. Keys mirror the TrainConfig fields.
inline TrainConfig parse_train_config(const std::string& text) {
    TrainConfig cfg;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        std::string_view line =
            detail::trim(std::string_view(text).substr(pos, nl - pos));
        pos = nl + 1;
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string_view::npos)
            throw error("config line " + std::to_string(line_no) +
                        ": expected key=value");
        const std::string key(detail::trim(line.substr(0, eq)));
        const std::string value(detail::trim(line.substr(eq + 1)));
        if (key == "epochs")
            cfg.epochs = static_cast<std::size_t>(
                detail::parse_config_uint(key, value));
        else if (key == "batch_size")
            cfg.batch_size = static_cast<std::size_t>(
                detail::parse_config_uint(key, value));
        else if (key == "lr_backbone")
            cfg.lr_backbone = detail::parse_config_double(key, value);
        else if (key == "lr_heads")
            cfg.lr_heads = detail::parse_config_double(key, value);
        else if (key == "momentum")
            cfg.momentum = detail::parse_config_double(key, value);
        else if (key == "weight_decay")
            cfg.weight_decay = detail::parse_config_double(key, value);
        else if (key == "loss_weights")
            cfg.loss_weights = detail::parse_config_list(key, value);
        else if (key == "seed")
            cfg.seed = detail::parse_config_uint(key, value);
        else if (key == "eval_every")
            cfg.eval_every = static_cast<std::size_t>(
                detail::parse_config_uint(key, value));
        else
            throw error("config line " + std::to_string(line_no) +
                        ": unknown key '" + key + "'");
    }
    return cfg;
}

/// Per-parameter momentum buffers, aligned with the ParamSet.
struct SgdState {
    std::vector<Tensor> velocity;

    explicit SgdState(const ParamSet& ps) {
        velocity.reserve(ps.params.size());
        for (const auto& p : ps.params) velocity.emplace_back(p.value.shape);
    }
};

/// One SGD-with-momentum update:
///   v <- momentum * v + g + weight_decay * param
///   param <- param - lr * v
/// The learning rate is lr_backbone or lr_heads by parameter role; weight
/// decay applies to weights only, never to biases.
inline void sgd_step(ParamSet& params, const std::vector<Tensor>& grads,
                     const TrainConfig& cfg, SgdState& state) {
    if (grads.size() != params.params.size() ||
        state.velocity.size() != params.params.size())
        throw error("sgd_step: gradient/state count mismatch");
    for (std::size_t i = 0; i < params.params.size(); ++i) {
        Param& p = params.params[i];
        const Tensor& g = grads[i];
        Tensor& v = state.velocity[i];
        if (!g.same_shape(p.value))
            throw error("sgd_step: gradient shape " + g.shape_str() +
                        " for parameter '" + p.name + "' " +
                        p.value.shape_str());
        const double lr = p.is_backbone() ? cfg.lr_backbone : cfg.lr_heads;
        const double wd = p.is_bias ? 0.0 : cfg.weight_decay;
        for (std::size_t j = 0; j < g.size(); ++j) {
            if (!std::isfinite(g.data[j]))
                throw error("sgd_step: non-finite gradient for parameter '" +
                            p.name + "'");
            const double vel =
                cfg.momentum * v.data[j] + g.data[j] + wd * p.value.data[j];
            v.data[j] = vel;
            p.value.data[j] -= lr * vel;
        }
    }
}

struct EpochRecord {
    std::size_t epoch = 0;    // 1-based
    double train_loss = 0.0;  // mean batch loss over the epoch
    std::optional<Metrics> test;
};

struct TrainResult {
    ParamSet params;
    Standardizer stats;
    std::vector<EpochRecord> history;
    Metrics final_test;
};

namespace detail {

inline std::vector<LabelChain> truth_chains(const Dataset& ds) {
    std::vector<LabelChain> out;
    out.reserve(ds.size());
    for (int fine : ds.fine_labels)
        out.push_back(label_chain(*ds.taxonomy, fine));
    return out;
}

} // namespace detail

/// Full training loop: standardize on train statistics, then epochs of
/// shuffled minibatches of forward / weighted loss / backward / sgd_step.
/// Deterministic per seed. Aborts with divergence_error if the loss goes
/// non-finite or above 1e6.
inline TrainResult train(const ModelSpec& spec, const Dataset& train_ds,
                         const Dataset& test_ds, const TrainConfig& cfg) {
    spec.validate();
    cfg.validate(spec.levels());
    const Taxonomy& tax = *train_ds.taxonomy;
    if (tax.levels() != spec.levels())
        throw error("train: model has " + std::to_string(spec.levels()) +
                    " levels but taxonomy has " + std::to_string(tax.levels()));
    for (std::size_t k = 0; k < spec.levels(); ++k)
        if (tax.level_size(k) != spec.level_sizes[k])
            throw error("train: level " + std::to_string(k + 1) + " has " +
                        std::to_string(tax.level_size(k)) +
                        " categories but the model expects " +
                        std::to_string(spec.level_sizes[k]));
    if (train_ds.dim() != spec.input_dim)
        throw error("train: dataset dimension " +
                    std::to_string(train_ds.dim()) +
                    " does not match model input_dim " +
                    std::to_string(spec.input_dim));

    TrainResult result;
    result.stats = Standardizer::fit(train_ds.features);

    Dataset train_std = train_ds;
    train_std.features = result.stats.apply(train_ds.features);
    const Tensor test_x = result.stats.apply(test_ds.features);
    const std::vector<LabelChain> test_truth = detail::truth_chains(test_ds);

    result.params = init_params(spec);
    SgdState state(result.params);
    const LossWeights weights = cfg.weights(spec.levels());

    auto evaluate_test = [&]() {
        const auto preds = predict(spec, result.params, test_x);
        return accuracy(preds, test_truth, tax);
    };

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto epoch_batches =
            batches(train_std, cfg.batch_size, /*shuffle=*/true,
                    derive_seed(cfg.seed, "shuffle", epoch));
        double loss_sum = 0.0;
        for (const Batch& batch : epoch_batches) {
            Tape tape;
            BoundModel bm = bind_params(tape, spec, result.params);
            Var x = tape.leaf(batch.features);
            ForwardTrace trace = forward(tape, bm, x);
            Var loss = total_loss(tape, trace.logits, batch.chains, weights);
            const double lv = loss.value().data[0];
            if (!std::isfinite(lv) || lv > 1e6)
                throw divergence_error(
                    "training diverged at epoch " + std::to_string(epoch + 1) +
                    ": loss = " + std::to_string(lv));
            tape.backward(loss);
            sgd_step(result.params, parameter_gradients(tape, bm), cfg, state);
            loss_sum += lv;
        }
        EpochRecord rec;
        rec.epoch = epoch + 1;
        rec.train_loss = loss_sum / static_cast<double>(epoch_batches.size());
        const bool last = epoch + 1 == cfg.epochs;
        if (last || (cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0))
            rec.test = evaluate_test();
        result.history.push_back(std::move(rec));
    }
    result.final_test = *result.history.back().test;
    return result;
}

} // namespace hiercls
