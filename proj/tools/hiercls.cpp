// hiercls: multi-granularity classification toolkit.
//
// Subcommands: gen-data, train, eval, sweep, build-hierarchy, validate-tax.
// Exit codes: 0 success, 1 usage error, 2 data/config error, 3 divergence.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hiercls/checkpoint.hpp"
#include "hiercls/dataset.hpp"
#include "hiercls/hierarchy.hpp"
#include "hiercls/metrics.hpp"
#include "hiercls/model.hpp"
#include "hiercls/sweep.hpp"
#include "hiercls/taxonomy.hpp"
#include "hiercls/train.hpp"

namespace fs = std::filesystem;
using namespace hiercls;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error("cannot read file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw error("cannot write file: " + path.string());
    out << content;
    if (!out) throw error("write failed: " + path.string());
}

std::vector<std::size_t> parse_size_list(const std::string& text,
                                         const std::string& what) {
    std::vector<std::size_t> out;
    for (auto field : detail::split_fields(text, ',')) {
        const std::string s(detail::trim(field));
        if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
            throw error(what + ": bad value '" + s + "'");
        out.push_back(std::stoull(s));
    }
    if (out.empty()) throw error(what + ": empty list");
    return out;
}

std::vector<double> parse_double_list(const std::string& text,
                                      const std::string& what) {
    std::vector<double> out;
    for (auto field : detail::split_fields(text, ','))
        out.push_back(detail::parse_config_double(what, std::string(detail::trim(field))));
    if (out.empty()) throw error(what + ": empty list");
    return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> out;
    for (auto field : detail::split_fields(text, ','))
        out.push_back(detail::parse_config_uint("seeds", std::string(detail::trim(field))));
    if (out.empty()) throw error("seeds: empty list");
    return out;
}

struct LoadedData {
    std::shared_ptr<const Taxonomy> taxonomy;
    Dataset train;
    Dataset test;
};

LoadedData load_data_dir(const fs::path& dir, bool need_test = true) {
    const fs::path tax_path = dir / "taxonomy.txt";
    if (!fs::exists(tax_path))
        throw error("missing taxonomy file: " + tax_path.string());
    LoadedData d;
    d.taxonomy = std::make_shared<Taxonomy>(parse_taxonomy(read_file(tax_path)));
    if (auto violation = validate(*d.taxonomy))
        throw error("invalid taxonomy " + tax_path.string() + ": " + *violation);

    const fs::path train_path = dir / "train.csv";
    if (!fs::exists(train_path))
        throw error("missing dataset file: " + train_path.string());
    d.train = load_csv(read_file(train_path), d.taxonomy, "train");

    if (need_test) {
        const fs::path test_path = dir / "test.csv";
        if (!fs::exists(test_path))
            throw error("missing dataset file: " + test_path.string());
        d.test = load_csv(read_file(test_path), d.taxonomy, "test");
    }
    return d;
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
    std::string tax_shape;
    std::string out_dir;
    std::uint64_t seed = 0;
    std::size_t train_per_class = 50;
    std::size_t test_per_class = 20;
    std::size_t dim = 20;
    double coarse_scale = 10.0;
    double fine_scale = 3.0;
    double noise = 1.5;
};

int run_gen_data(const GenDataArgs& a) {
    SynthConfig cfg;
    cfg.level_sizes = parse_size_list(a.tax_shape, "--tax-shape");
    cfg.train_per_class = a.train_per_class;
    cfg.test_per_class = a.test_per_class;
    cfg.dim = a.dim;
    cfg.coarse_scale = a.coarse_scale;
    cfg.fine_scale = a.fine_scale;
    cfg.noise = a.noise;
    cfg.seed = a.seed;
    cfg.validate();
    if (auto warn = cfg.warning())
        std::cerr << "warning: " << *warn << "\n";

    const SynthData data = gen_synthetic(cfg);
    fs::create_directories(a.out_dir);
    write_file(fs::path(a.out_dir) / "taxonomy.txt", to_text(*data.taxonomy));
    write_file(fs::path(a.out_dir) / "train.csv", to_csv(data.train));
    write_file(fs::path(a.out_dir) / "test.csv", to_csv(data.test));

    std::string shape;
    for (std::size_t c : cfg.level_sizes)
        shape += (shape.empty() ? "" : "/") + std::to_string(c);
    std::cout << "wrote " << a.out_dir << ": taxonomy " << shape << ", "
              << data.train.size() << " train and " << data.test.size()
              << " test samples, dim " << cfg.dim << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct TrainFlags {
    std::string data_dir;
    std::string variant = "ours";
    std::string config_path;
    std::string out = "checkpoint.txt";
    std::string metrics_out = "metrics.csv";
    std::string hidden = "64,64";
    std::size_t feature_width = 0; // 0 -> per-level-count default
    // Overrides; applied over the config file only when set on the command line.
    std::size_t epochs = 0;
    std::size_t batch_size = 0;
    double lr_backbone = 0.0;
    double lr_heads = 0.0;
    double momentum = 0.0;
    double weight_decay = 0.0;
    std::string loss_weights;
    std::uint64_t seed = 0;
    std::size_t eval_every = 0;
};

TrainConfig resolve_train_config(const TrainFlags& f, const CLI::App* cmd) {
    TrainConfig cfg;
    if (!f.config_path.empty())
        cfg = parse_train_config(read_file(f.config_path));
    if (cmd->count("--epochs")) cfg.epochs = f.epochs;
    if (cmd->count("--batch-size")) cfg.batch_size = f.batch_size;
    if (cmd->count("--lr-backbone")) cfg.lr_backbone = f.lr_backbone;
    if (cmd->count("--lr-heads")) cfg.lr_heads = f.lr_heads;
    if (cmd->count("--momentum")) cfg.momentum = f.momentum;
    if (cmd->count("--weight-decay")) cfg.weight_decay = f.weight_decay;
    if (cmd->count("--loss-weights"))
        cfg.loss_weights = parse_double_list(f.loss_weights, "--loss-weights");
    if (cmd->count("--seed")) cfg.seed = f.seed;
    if (cmd->count("--eval-every")) cfg.eval_every = f.eval_every;
    return cfg;
}

ModelSpec resolve_model_spec(const TrainFlags& f, const LoadedData& data,
                             std::uint64_t seed) {
    ModelSpec spec;
    spec.variant = variant_from_name(f.variant);
    spec.input_dim = data.train.dim();
    spec.hidden = parse_size_list(f.hidden, "--hidden");
    spec.level_sizes = data.taxonomy->level_sizes();
    spec.feature_width = f.feature_width
                             ? f.feature_width
                             : ModelSpec::default_feature_width(spec.levels());
    spec.seed = seed;
    return spec;
}

int run_train(const TrainFlags& f, const CLI::App* cmd) {
    const LoadedData data = load_data_dir(f.data_dir);
    const TrainConfig cfg = resolve_train_config(f, cmd);
    const ModelSpec spec = resolve_model_spec(f, data, cfg.seed);

    const TrainResult result = train(spec, data.train, data.test, cfg);
    for (const auto& rec : result.history)
        if (rec.test)
            std::printf("epoch %3zu  train_loss %.4f  test avg_acc %.4f\n",
                        rec.epoch, rec.train_loss, rec.test->avg_acc);

    write_file(f.out, to_checkpoint_text(
                          {spec, result.params, result.stats}));
    write_file(f.metrics_out, metrics_csv(result.final_test));
    std::cout << metrics_text(result.final_test);
    std::cout << "checkpoint: " << f.out << "\nmetrics: " << f.metrics_out
              << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string checkpoint;
    std::string data_dir;
    std::string split = "test";
    std::string out;
};

int run_eval(const EvalArgs& a) {
    if (a.split != "test" && a.split != "train")
        throw error("--split must be 'test' or 'train'");
    const Checkpoint ckpt = from_checkpoint_text(read_file(a.checkpoint));
    const LoadedData data = load_data_dir(a.data_dir, a.split == "test");
    const Dataset& ds = a.split == "test" ? data.test : data.train;
    if (data.taxonomy->level_sizes() != ckpt.spec.level_sizes)
        throw error("taxonomy in " + a.data_dir +
                    " does not match the checkpoint's level sizes");

    const Tensor x = ckpt.stats.apply(ds.features);
    const auto preds = predict(ckpt.spec, ckpt.params, x);
    std::vector<LabelChain> truth;
    truth.reserve(ds.size());
    for (int fine : ds.fine_labels)
        truth.push_back(label_chain(*data.taxonomy, fine));
    const Metrics m = accuracy(preds, truth, *data.taxonomy);
    std::cout << metrics_text(m);
    if (!a.out.empty()) write_file(a.out, metrics_csv(m));
    return 0;
}

// ---------------------------------------------------------------------------

struct SweepArgs {
    TrainFlags train_flags;
    std::string alphas;
    std::string betas;
    std::string seeds = "0,1,2";
    std::string out = "sweep.csv";
    std::size_t jobs = 1;
};

int run_sweep(const SweepArgs& a, const CLI::App* cmd) {
    const LoadedData data = load_data_dir(a.train_flags.data_dir);
    if (data.taxonomy->levels() != 2)
        throw error("sweep needs a 2-level taxonomy, got " +
                    std::to_string(data.taxonomy->levels()) + " levels");
    const TrainConfig cfg = resolve_train_config(a.train_flags, cmd);
    const ModelSpec spec = resolve_model_spec(a.train_flags, data, cfg.seed);

    const SweepResult result = sweep_alpha_beta(
        spec, data.train, data.test, cfg,
        parse_double_list(a.alphas, "--alphas"),
        parse_double_list(a.betas, "--betas"), parse_seed_list(a.seeds),
        a.jobs);
    write_file(a.out, result.to_csv());

    std::printf("%8s %8s %14s %14s\n", "alpha", "beta", "coarse_acc",
                "fine_acc");
    for (const auto& agg : result.aggregates())
        std::printf("%8g %8g %7.4f +-%.4f %7.4f +-%.4f\n", agg.alpha, agg.beta,
                    agg.coarse_mean, agg.coarse_std, agg.fine_mean,
                    agg.fine_std);
    std::cout << "sweep results: " << a.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct BuildHierArgs {
    std::string data_dir;
    std::string levels;
    std::string out = "induced_taxonomy.txt";
    std::string checkpoint;
};

int run_build_hierarchy(const BuildHierArgs& a) {
    const LoadedData data = load_data_dir(a.data_dir, /*need_test=*/false);
    ClassCentroids cents;
    if (a.checkpoint.empty()) {
        cents = centroids(data.train);
    } else {
        const Checkpoint ckpt = from_checkpoint_text(read_file(a.checkpoint));
        cents = centroids(data.train, ckpt.spec, ckpt.params, ckpt.stats);
    }
    const Taxonomy tax =
        build_hierarchy(cents, parse_size_list(a.levels, "--levels"));
    write_file(a.out, to_text(tax));

    std::string shape;
    for (std::size_t c : tax.level_sizes())
        shape += (shape.empty() ? "" : "/") + std::to_string(c);
    std::cout << "induced " << shape << " hierarchy over " << cents.count()
              << " categories -> " << a.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

int run_validate_tax(const std::string& path) {
    const Taxonomy tax = parse_taxonomy(read_file(path));
    if (auto violation = validate(tax)) {
        std::cout << "violation: " << *violation << "\n";
        return 2;
    }
    std::string shape;
    for (std::size_t c : tax.level_sizes())
        shape += (shape.empty() ? "" : "/") + std::to_string(c);
    std::cout << "ok: " << tax.levels() << " levels, shape " << shape << "\n";
    return 0;
}

void add_train_flags(CLI::App* cmd, TrainFlags& f, bool with_variant = true) {
    cmd->add_option("--data-dir", f.data_dir,
                    "directory with taxonomy.txt, train.csv, test.csv")
        ->required();
    if (with_variant)
        cmd->add_option("--variant", f.variant,
                        "vanilla_single | vanilla_multi | ours_single | ours");
    cmd->add_option("--config", f.config_path, "key=value training config file");
    cmd->add_option("--hidden", f.hidden, "backbone hidden widths (comma list)");
    cmd->add_option("--feature-width", f.feature_width,
                    "embedding width (default 600 multi-level, 512 single)");
    cmd->add_option("--epochs", f.epochs);
    cmd->add_option("--batch-size", f.batch_size);
    cmd->add_option("--lr-backbone", f.lr_backbone);
    cmd->add_option("--lr-heads", f.lr_heads);
    cmd->add_option("--momentum", f.momentum);
    cmd->add_option("--weight-decay", f.weight_decay);
    cmd->add_option("--loss-weights", f.loss_weights,
                    "per-level loss weights (comma list)");
    cmd->add_option("--seed", f.seed);
    cmd->add_option("--eval-every", f.eval_every);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-granularity classification toolkit"};
    app.require_subcommand(1);

    GenDataArgs gen;
    CLI::App* gen_cmd =
        app.add_subcommand("gen-data", "generate a synthetic dataset");
    gen_cmd->add_option("--tax-shape", gen.tax_shape,
                        "level sizes, e.g. 4,16 (balanced tree)")
        ->required();
    gen_cmd->add_option("--out-dir", gen.out_dir)->required();
    gen_cmd->add_option("--seed", gen.seed);
    gen_cmd->add_option("--train-per-class", gen.train_per_class);
    gen_cmd->add_option("--test-per-class", gen.test_per_class);
    gen_cmd->add_option("--dim", gen.dim);
    gen_cmd->add_option("--coarse-scale", gen.coarse_scale);
    gen_cmd->add_option("--fine-scale", gen.fine_scale);
    gen_cmd->add_option("--noise", gen.noise);

    TrainFlags train_flags;
    CLI::App* train_cmd = app.add_subcommand("train", "train one model");
    add_train_flags(train_cmd, train_flags);
    train_cmd->add_option("--out", train_flags.out, "checkpoint output path");
    train_cmd->add_option("--metrics-out", train_flags.metrics_out,
                          "metrics CSV output path");

    EvalArgs eval_args;
    CLI::App* eval_cmd =
        app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint)->required();
    eval_cmd->add_option("--data-dir", eval_args.data_dir)->required();
    eval_cmd->add_option("--split", eval_args.split, "test | train");
    eval_cmd->add_option("--out", eval_args.out, "metrics CSV output path");

    SweepArgs sweep_args;
    CLI::App* sweep_cmd = app.add_subcommand(
        "sweep", "alpha/beta loss-weight grid over a 2-level dataset");
    add_train_flags(sweep_cmd, sweep_args.train_flags);
    sweep_cmd->add_option("--alphas", sweep_args.alphas, "comma list")
        ->required();
    sweep_cmd->add_option("--betas", sweep_args.betas, "comma list")
        ->required();
    sweep_cmd->add_option("--seeds", sweep_args.seeds, "comma list");
    sweep_cmd->add_option("--out", sweep_args.out, "sweep CSV output path");
    sweep_cmd->add_option("--jobs", sweep_args.jobs, "parallel cells");

    BuildHierArgs hier_args;
    CLI::App* hier_cmd = app.add_subcommand(
        "build-hierarchy", "induce a taxonomy by clustering class centroids");
    hier_cmd->add_option("--data-dir", hier_args.data_dir)->required();
    hier_cmd->add_option("--levels", hier_args.levels,
                         "target sizes of induced levels, e.g. 4 or 4,8")
        ->required();
    hier_cmd->add_option("--out", hier_args.out);
    hier_cmd->add_option("--checkpoint", hier_args.checkpoint,
                         "cluster backbone embeddings instead of raw features");

    std::string tax_path;
    CLI::App* validate_cmd =
        app.add_subcommand("validate-tax", "check a taxonomy file");
    validate_cmd->add_option("--tax", tax_path)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (gen_cmd->parsed()) return run_gen_data(gen);
        if (train_cmd->parsed()) return run_train(train_flags, train_cmd);
        if (eval_cmd->parsed()) return run_eval(eval_args);
        if (sweep_cmd->parsed()) return run_sweep(sweep_args, sweep_cmd);
        if (hier_cmd->parsed()) return run_build_hierarchy(hier_args);
        if (validate_cmd->parsed()) return run_validate_tax(tax_path);
    } catch (const divergence_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
