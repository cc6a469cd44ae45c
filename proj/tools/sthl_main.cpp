#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "sthl/autograd.hpp"
#include "sthl/dataset.hpp"
#include "sthl/errors.hpp"
#include "sthl/model.hpp"
#include "sthl/run_config.hpp"
#include "sthl/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitGradcheck = 4;

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

struct CommonFlags {
    std::string config_path;
    std::string out;
    std::string data_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 0;
    std::string ablation;
    bool dump_incidence = false;
    bool dump_attention = false;
};

// Flags win over config-file values.
void apply_overrides(sthl::RunConfig& cfg, const CommonFlags& flags, bool seed_is_data) {
    if (flags.seed_set) {
        if (seed_is_data) {
            cfg.data.spec.rng_seed = flags.seed;
        } else {
            cfg.model.rng_seed = flags.seed;
            cfg.train.shuffle_seed = flags.seed;
        }
    }
    if (flags.threads > 0) cfg.train.threads = flags.threads;
    if (!flags.ablation.empty()) cfg.train.ablation = sthl::parse_ablation(flags.ablation);
    if (!flags.data_path.empty()) {
        cfg.data.path = flags.data_path;
        cfg.data.synthetic = false;
    }
}

sthl::WindowedDataset resolve_dataset(const sthl::RunConfig& cfg) {
    if (!cfg.data.path.empty()) {
        return sthl::load_dataset(cfg.data.path, cfg.data.format);
    }
    if (cfg.data.synthetic) {
        return sthl::generate_synthetic(cfg.data.spec);
    }
    throw sthl::ConfigError("config provides neither data.path nor data.synthetic=true");
}

sthl::ModelConfig bind_model_config(const sthl::RunConfig& cfg,
                                    const sthl::WindowedDataset& ds) {
    sthl::ModelConfig mc = cfg.model;
    mc.channels = static_cast<int>(ds.channels());
    mc.feature_dim = static_cast<int>(ds.feature_dim());
    mc.num_classes = ds.num_classes;
    mc.ablation = cfg.train.ablation;
    return mc;
}

void print_dataset_summary(const sthl::WindowedDataset& ds) {
    std::cout << "dataset: T=" << ds.timestamps() << " N=" << ds.channels()
              << " d=" << ds.feature_dim() << " C=" << ds.num_classes << "\n";
    std::vector<int> histogram(ds.num_classes, 0);
    for (int label : ds.labels) histogram[label] += 1;
    std::cout << "labels:";
    for (int c = 0; c < ds.num_classes; ++c) {
        std::cout << " class" << c << "=" << histogram[c];
    }
    std::cout << "\n";
}

json metrics_to_json(const sthl::MetricsReport& report) {
    json per_class = json::array();
    for (const auto& cm : report.per_class) {
        per_class.push_back({{"precision", cm.precision},
                             {"recall", cm.recall},
                             {"f1", cm.f1},
                             {"support", cm.support}});
    }
    return {{"accuracy", report.accuracy},
            {"weighted_f1", report.weighted_f1},
            {"mean_loss", report.mean_loss},
            {"per_class", per_class},
            {"confusion", report.confusion}};
}

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw sthl::DataError("cannot open " + path.string() + " for writing");
    f << content;
}

void dump_debug_artifacts(const sthl::SthlModel& model, const sthl::WindowedDataset& ds,
                          const fs::path& outdir, const CommonFlags& flags) {
    if (!flags.dump_incidence && !flags.dump_attention) return;
    const auto pairs = sthl::make_pairs(ds);
    if (flags.dump_incidence) {
        if (model.config.ablation == sthl::Ablation::no_hyperedge) {
            std::cerr << "note: no_hyperedge variant builds no incidence matrix, skipping dump\n";
        } else {
            const auto result = sthl::forward(model, pairs.front());
            sthl::dump_incidence_csv(*result.snapshot, outdir / "incidence_pair0.csv");
        }
    }
    if (flags.dump_attention) {
        if (model.config.ablation != sthl::Ablation::none) {
            std::cerr << "note: ablated variant has no attention weights, skipping dump\n";
        } else {
            sthl::dump_attention_csv(model, pairs.front(), outdir / "attention_pair0.csv");
        }
    }
}

int cmd_generate(const CommonFlags& flags) {
    sthl::RunConfig cfg = sthl::load_run_config(flags.config_path);
    apply_overrides(cfg, flags, /*seed_is_data=*/true);
    if (!cfg.data.synthetic) {
        throw sthl::ConfigError("generate needs data.synthetic = true");
    }
    for (const char* key : {"data.classes", "data.timestamps", "data.channels",
                            "data.features"}) {
        cfg.require(key);
    }
    const sthl::WindowedDataset ds = sthl::generate_synthetic(cfg.data.spec);
    sthl::save_dataset(ds, flags.out, cfg.data.format);
    std::cout << "wrote " << flags.out << " (config " << hash_hex(sthl::config_hash(cfg))
              << ")\n";
    print_dataset_summary(ds);
    return kExitOk;
}

int cmd_train(const CommonFlags& flags) {
    sthl::RunConfig cfg = sthl::load_run_config(flags.config_path);
    apply_overrides(cfg, flags, /*seed_is_data=*/false);
    const std::uint64_t hash = sthl::config_hash(cfg);

    const sthl::WindowedDataset ds = resolve_dataset(cfg);
    print_dataset_summary(ds);

    sthl::SthlModel model = sthl::init_model(bind_model_config(cfg, ds));
    const sthl::TrainResult result = sthl::train(model, ds, cfg.train);

    const fs::path outdir = flags.out;
    fs::create_directories(outdir);
    sthl::save_checkpoint(model, outdir / "checkpoint.sthl", hash);
    sthl::write_metrics_csv(outdir / "metrics.csv", result.history, hash);

    json summary = {{"config_hash", hash_hex(hash)},
                    {"ablation", sthl::ablation_name(cfg.train.ablation)},
                    {"dataset",
                     {{"timestamps", ds.timestamps()},
                      {"channels", ds.channels()},
                      {"features", ds.feature_dim()},
                      {"classes", ds.num_classes}}},
                    {"epochs", cfg.train.epochs},
                    {"best_epoch", result.best_epoch},
                    {"train", metrics_to_json(result.train)},
                    {"validation", metrics_to_json(result.validation)}};
    write_text_file(outdir / "summary.json", summary.dump(2) + "\n");

    dump_debug_artifacts(model, ds, outdir, flags);

    std::cout << "best epoch " << result.best_epoch << ": val weighted_f1="
              << result.validation.weighted_f1 << " acc=" << result.validation.accuracy
              << "\n"
              << "wrote " << (outdir / "checkpoint.sthl").string() << ", metrics.csv, summary.json\n";
    return kExitOk;
}

int cmd_eval(const CommonFlags& flags, const std::string& checkpoint_path,
             const std::string& format_name) {
    sthl::SthlModel model = sthl::load_checkpoint(checkpoint_path);
    const sthl::WindowedDataset ds =
        sthl::load_dataset(flags.data_path, sthl::parse_dataset_format(format_name));
    if (static_cast<int>(ds.feature_dim()) != model.config.feature_dim ||
        static_cast<int>(ds.channels()) != model.config.channels ||
        ds.num_classes != model.config.num_classes) {
        throw sthl::ConfigError(
            "checkpoint/dataset mismatch: checkpoint expects (N=" +
            std::to_string(model.config.channels) + ", d=" +
            std::to_string(model.config.feature_dim) + ", C=" +
            std::to_string(model.config.num_classes) + "), dataset provides (N=" +
            std::to_string(ds.channels()) + ", d=" + std::to_string(ds.feature_dim()) +
            ", C=" + std::to_string(ds.num_classes) + ")");
    }
    const auto pairs = sthl::make_pairs(ds);
    const int threads = flags.threads > 0 ? flags.threads : 1;
    const sthl::MetricsReport report = sthl::evaluate(model, pairs, threads);

    json out = metrics_to_json(report);
    out["checkpoint"] = checkpoint_path;
    out["pairs"] = pairs.size();
    const std::string text = out.dump(2) + "\n";
    std::cout << text;
    if (!flags.out.empty()) write_text_file(flags.out, text);

    if (flags.dump_incidence || flags.dump_attention) {
        const fs::path outdir =
            flags.out.empty() ? fs::path(".") : fs::path(flags.out).parent_path();
        dump_debug_artifacts(model, ds, outdir.empty() ? fs::path(".") : outdir, flags);
    }
    return kExitOk;
}

int cmd_gradcheck(const CommonFlags& flags, double epsilon, double tolerance,
                  bool corrupt_backward) {
    sthl::RunConfig cfg = sthl::load_run_config(flags.config_path);
    apply_overrides(cfg, flags, /*seed_is_data=*/false);

    const sthl::WindowedDataset ds = resolve_dataset(cfg);
    const auto pairs = sthl::make_pairs(ds);
    sthl::SthlModel model = sthl::init_model(bind_model_config(cfg, ds));
    const double alpha = model.config.alpha;

    sthl::GradCheckReport report;
    if (corrupt_backward) {
        // negative-control fixture: inject a broken analytic gradient
        auto loss_fn = [&]() {
            const auto r = sthl::forward(model, pairs.front());
            return sthl::total_loss(r.logits, pairs.front().label, r.recon_loss, alpha);
        };
        auto grad_fn = [&]() {
            model.store.zero_grads();
            sthl::backward(model, pairs.front(), alpha, 1.0);
            model.store[0].grad.flat()[0] += 0.5;
        };
        report = sthl::gradcheck_custom(model.store, loss_fn, grad_fn, epsilon, tolerance);
    } else {
        report = sthl::gradcheck(model, pairs.front(), alpha, epsilon, tolerance);
    }

    std::cout << report.to_text();
    if (const sthl::SlotCheck* worst = report.worst()) {
        std::cout << "worst slot: " << worst->name << " (max relative error "
                  << worst->max_rel_err << ")\n";
    }
    if (!flags.out.empty()) write_text_file(flags.out, report.to_csv());
    return report.pass ? kExitOk : kExitGradcheck;
}

int cmd_ablate(const CommonFlags& flags, int seeds) {
    sthl::RunConfig cfg = sthl::load_run_config(flags.config_path);
    apply_overrides(cfg, flags, /*seed_is_data=*/false);
    const std::uint64_t hash = sthl::config_hash(cfg);

    const sthl::WindowedDataset ds = resolve_dataset(cfg);
    print_dataset_summary(ds);

    const auto runs =
        sthl::run_ablation_study(ds, bind_model_config(cfg, ds), cfg.train, seeds);

    json variants;
    for (const auto& run : runs) {
        variants[sthl::ablation_name(run.variant)] = {{"val_f1", run.val_f1},
                                                      {"mean_val_f1", run.mean_val_f1}};
        std::cout << sthl::ablation_name(run.variant) << ": mean val weighted_f1 = "
                  << run.mean_val_f1 << "\n";
    }
    const double f_default = runs[0].mean_val_f1;
    const double f_no_att = runs[1].mean_val_f1;
    const double f_no_hyp = runs[2].mean_val_f1;
    json out = {{"config_hash", hash_hex(hash)},
                {"seeds", seeds},
                {"variants", variants},
                {"ordering",
                 {{"default_beats_no_attention", f_default > f_no_att},
                  {"no_attention_beats_no_hyperedge", f_no_att > f_no_hyp}}}};

    const fs::path outdir = flags.out;
    fs::create_directories(outdir);
    write_text_file(outdir / "ablation.json", out.dump(2) + "\n");
    std::cout << "wrote " << (outdir / "ablation.json").string() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"STHL: spatial-temporal hypergraph learning on multichannel time series"};
    app.require_subcommand(1);

    CommonFlags flags;
    double epsilon = 1e-5;
    double tolerance = 1e-4;
    bool corrupt_backward = false;
    int seeds = 5;
    std::string checkpoint_path;
    std::string eval_format = "dense-binary";

    auto add_common = [&](CLI::App* sub, bool with_config) {
        if (with_config) {
            sub->add_option("--config", flags.config_path, "run configuration file")
                ->required();
        }
        sub->add_option("--seed", flags.seed, "seed override")->each([&](const std::string&) {
            flags.seed_set = true;
        });
        sub->add_option("--threads", flags.threads, "worker threads (default 1)");
        sub->add_flag("--dump-incidence", flags.dump_incidence,
                      "write the first pair's incidence matrix as CSV");
        sub->add_flag("--dump-attention", flags.dump_attention,
                      "write the first pair's attention weights as CSV");
    };

    CLI::App* generate = app.add_subcommand("generate", "write a synthetic dataset");
    add_common(generate, true);
    generate->add_option("--out", flags.out, "output dataset path")->required();

    CLI::App* train = app.add_subcommand("train", "train a model and write artifacts");
    add_common(train, true);
    train->add_option("--out", flags.out, "output directory")->required();
    train->add_option("--data", flags.data_path, "dataset path (overrides config)");
    train->add_option("--ablation", flags.ablation, "none | no_hyperedge | no_attention");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    eval->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
    eval->add_option("--data", flags.data_path, "dataset path")->required();
    eval->add_option("--format", eval_format, "dense-binary | csv-manifest");
    eval->add_option("--out", flags.out, "metrics JSON output path");
    eval->add_option("--threads", flags.threads, "worker threads (default 1)");
    eval->add_flag("--dump-incidence", flags.dump_incidence,
                   "write the first pair's incidence matrix as CSV");
    eval->add_flag("--dump-attention", flags.dump_attention,
                   "write the first pair's attention weights as CSV");

    CLI::App* gradcheck = app.add_subcommand(
        "gradcheck", "compare analytic gradients against central differences");
    add_common(gradcheck, true);
    gradcheck->add_option("--out", flags.out, "report CSV output path");
    gradcheck->add_option("--ablation", flags.ablation, "none | no_hyperedge | no_attention");
    gradcheck->add_option("--epsilon", epsilon, "finite-difference step (default 1e-5)");
    gradcheck->add_option("--tolerance", tolerance, "max relative error (default 1e-4)");
    gradcheck
        ->add_flag("--corrupt-backward", corrupt_backward,
                   "negative-control fixture: inject a wrong gradient")
        ->group("");  // hidden

    CLI::App* ablate =
        app.add_subcommand("ablate", "train default and ablated variants, compare");
    add_common(ablate, true);
    ablate->add_option("--out", flags.out, "output directory")->required();
    ablate->add_option("--data", flags.data_path, "dataset path (overrides config)");
    ablate->add_option("--seeds", seeds, "number of seeds per variant (default 5)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (generate->parsed()) return cmd_generate(flags);
        if (train->parsed()) return cmd_train(flags);
        if (eval->parsed()) return cmd_eval(flags, checkpoint_path, eval_format);
        if (gradcheck->parsed()) return cmd_gradcheck(flags, epsilon, tolerance, corrupt_backward);
        if (ablate->parsed()) return cmd_ablate(flags, seeds);
    } catch (const sthl::DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const sthl::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const sthl::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const sthl::DimensionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
