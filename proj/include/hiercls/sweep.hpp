#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include "hiercls/dataset.hpp"
#include "hiercls/error.hpp"
#include "hiercls/train.hpp"

namespace hiercls {

/// The two-granularity weighting experiment: train one model per
/// (alpha, beta, seed) cell with per-level loss weights (alpha, beta) and
/// record final-epoch test accuracy at both levels.
struct SweepCell {
    double alpha = 0.0;
    double beta = 0.0;
    std::uint64_t seed = 0;
    double coarse_acc = 0.0;
    double fine_acc = 0.0;
};

struct SweepAggregate {
    double alpha = 0.0;
    double beta = 0.0;
    double coarse_mean = 0.0;
    double coarse_std = 0.0;
    double fine_mean = 0.0;
    double fine_std = 0.0;
};

struct SweepResult {
    std::vector<double> alphas;
    std::vector<double> betas;
    std::vector<std::uint64_t> seeds;
    std::vector<SweepCell> cells; // ordered by (alpha, beta, seed)

    /// Mean and standard deviation over seeds per (alpha, beta) cell.
    std::vector<SweepAggregate> aggregates() const {
        std::vector<SweepAggregate> out;
        const std::size_t s = seeds.size();
        for (std::size_t a = 0; a < alphas.size(); ++a)
            for (std::size_t b = 0; b < betas.size(); ++b) {
                SweepAggregate agg;
                agg.alpha = alphas[a];
                agg.beta = betas[b];
                const std::size_t base = (a * betas.size() + b) * s;
                for (std::size_t i = 0; i < s; ++i) {
                    agg.coarse_mean += cells[base + i].coarse_acc;
                    agg.fine_mean += cells[base + i].fine_acc;
                }
                agg.coarse_mean /= static_cast<double>(s);
                agg.fine_mean /= static_cast<double>(s);
                for (std::size_t i = 0; i < s; ++i) {
                    const double dc = cells[base + i].coarse_acc - agg.coarse_mean;
                    const double df = cells[base + i].fine_acc - agg.fine_mean;
                    agg.coarse_std += dc * dc;
                    agg.fine_std += df * df;
                }
                agg.coarse_std = std::sqrt(agg.coarse_std / static_cast<double>(s));
                agg.fine_std = std::sqrt(agg.fine_std / static_cast<double>(s));
                out.push_back(agg);
            }
        return out;
    }

    std::string to_csv() const {
        std::string out = "alpha,beta,seed,coarse_acc,fine_acc\n";
        char buf[160];
        for (const auto& c : cells) {
            std::snprintf(buf, sizeof buf, "%g,%g,%llu,%.6f,%.6f\n", c.alpha,
                          c.beta, static_cast<unsigned long long>(c.seed),
                          c.coarse_acc, c.fine_acc);
            out += buf;
        }
        return out;
    }
};

/// Runs the full (alphas x betas x seeds) grid. Cells are independent pure
/// functions of their coordinates, so they may run in parallel (`jobs`) and
/// the result is identical regardless of scheduling. Requires K == 2.
inline SweepResult sweep_alpha_beta(const ModelSpec& spec,
                                    const Dataset& train_ds,
                                    const Dataset& test_ds,
                                    const TrainConfig& cfg,
                                    const std::vector<double>& alphas,
                                    const std::vector<double>& betas,
                                    const std::vector<std::uint64_t>& seeds,
                                    std::size_t jobs = 1) {
    if (spec.levels() != 2)
        throw error("sweep: the alpha/beta experiment needs a 2-level model, "
                    "got " + std::to_string(spec.levels()) + " levels");
    if (alphas.empty() || betas.empty() || seeds.empty())
        throw error("sweep: empty alpha/beta/seed lists");

    SweepResult result;
    result.alphas = alphas;
    result.betas = betas;
    result.seeds = seeds;
    result.cells.resize(alphas.size() * betas.size() * seeds.size());

    auto run_cell = [&](std::size_t idx) {
        const std::size_t s = idx % seeds.size();
        const std::size_t b = (idx / seeds.size()) % betas.size();
        const std::size_t a = idx / (seeds.size() * betas.size());
        ModelSpec cell_spec = spec;
        cell_spec.seed = seeds[s];
        TrainConfig cell_cfg = cfg;
        cell_cfg.seed = seeds[s];
        cell_cfg.loss_weights = {alphas[a], betas[b]};
        cell_cfg.eval_every = 0; // final-epoch metric only
        const TrainResult r = train(cell_spec, train_ds, test_ds, cell_cfg);
        SweepCell& cell = result.cells[idx];
        cell.alpha = alphas[a];
        cell.beta = betas[b];
        cell.seed = seeds[s];
        cell.coarse_acc = r.final_test.per_level_acc[0];
        cell.fine_acc = r.final_test.per_level_acc[1];
    };

    const std::size_t total = result.cells.size();
    if (jobs <= 1) {
        for (std::size_t i = 0; i < total; ++i) run_cell(i);
        return result;
    }
    std::atomic<std::size_t> next{0};
    const std::size_t n_workers = std::min(jobs, total);
    std::vector<std::exception_ptr> failures(n_workers);
    std::vector<std::thread> workers;
    workers.reserve(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w)
        workers.emplace_back([&, w]() {
            try {
                for (std::size_t i = next.fetch_add(1); i < total;
                     i = next.fetch_add(1))
                    run_cell(i);
            } catch (...) {
                failures[w] = std::current_exception();
            }
        });
    for (auto& t : workers) t.join();
    for (auto& f : failures)
        if (f) std::rethrow_exception(f);
    return result;
}

} // namespace hiercls
