// dermbench command line: stage subcommands plus `run` for the whole pipeline.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <memory>

#include "dermbench/fixture.hpp"
#include "dermbench/parallel.hpp"
#include "dermbench/runner.hpp"

namespace fs = std::filesystem;
using namespace dermbench;
using nlohmann::json;

namespace {

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string output;
    std::optional<std::size_t> threads;
    std::string webhook;
    std::vector<std::string> backends;  // restrict stage commands to these
};

void add_common(CLI::App* cmd, Overrides& o) {
    cmd->add_option("-c,--config", o.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "Override the configured seed");
    cmd->add_option("-o,--output", o.output, "Override the output directory");
    cmd->add_option("--threads", o.threads, "Worker threads (0 = hardware concurrency)");
    cmd->add_option("--webhook", o.webhook, "Override the tracker webhook URL");
}

// Overrides are applied to the document before parsing so derived values
// (backend seeds, default directories) follow them.
RunConfig load_config(const Overrides& o) {
    json j;
    try {
        j = json::parse(read_text_file(o.config));
    } catch (const json::exception& ex) {
        throw Error("config " + o.config + ": " + ex.what());
    }
    if (o.seed) j["seed"] = *o.seed;
    if (!o.output.empty()) j["output_dir"] = fs::absolute(o.output).string();
    if (o.threads) j["threads"] = *o.threads;
    if (!o.webhook.empty()) j["tracker"]["webhook"] = o.webhook;
    RunConfig cfg = parse_run_config(j, fs::path(o.config).parent_path().string());
    validate(cfg);
    worker_threads() = cfg.threads;
    return cfg;
}

std::vector<const BackendConfig*> selected_backends(const RunConfig& cfg, const Overrides& o) {
    std::vector<const BackendConfig*> out;
    if (o.backends.empty()) {
        for (const auto& b : cfg.backends) out.push_back(&b);
    } else {
        for (const auto& name : o.backends) out.push_back(&find_backend(cfg, name));
    }
    return out;
}

std::string design_path(const RunConfig& cfg, const std::string& backend) {
    return (fs::path(cfg.resolved_design_dir()) / (backend + ".dmat")).string();
}

std::string model_path(const RunConfig& cfg, const std::string& backend, ClassifierKind kind) {
    return (fs::path(cfg.backend_dir(backend)) / "models" / (std::string(to_string(kind)) + ".modl")).string();
}

std::unique_ptr<Tracker> make_tracker(const RunConfig& cfg) {
    fs::create_directories(cfg.output_dir);
    return std::make_unique<Tracker>(run_id(cfg), TrackerOptions{cfg.resolved_event_log(), cfg.webhook_url});
}

void print_coverage(const std::string& backend, const CacheCoverage& c) {
    std::cout << backend << ": " << c.present.size() << " cached, " << c.missing.size() << " missing, "
              << c.orphaned.size() << " orphaned\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Slide-level skin lesion classification benchmark over foundation-model embeddings"};
    app.require_subcommand(1);
    Overrides o;

    auto* ingest = app.add_subcommand("ingest", "Validate the manifest and write ingest.json");
    auto* extract_cmd = app.add_subcommand("extract", "Write per-slide embedding caches");
    auto* aggregate = app.add_subcommand("aggregate", "Mean-pool caches into design matrices");
    auto* train_cmd = app.add_subcommand("train", "Cross-validate and fit every configured classifier");
    auto* evaluate = app.add_subcommand("evaluate", "Score the test split; write reports, predictions and tables");
    auto* compare = app.add_subcommand("compare", "Paired AUROC comparison between two backends");
    auto* curve = app.add_subcommand("learning-curve", "Accuracy against training-set size");
    auto* plot = app.add_subcommand("plot", "Re-render SVG plots from saved predictions and curves");
    auto* run = app.add_subcommand("run", "Run every stage end to end");
    for (auto* cmd : {ingest, extract_cmd, aggregate, train_cmd, evaluate, curve, plot, run}) add_common(cmd, o);
    for (auto* cmd : {extract_cmd, aggregate, train_cmd, evaluate, curve, plot}) {
        cmd->add_option("-b,--backend", o.backends, "Restrict to these backends");
    }

    std::string dir_a, dir_b, compare_out, classifier_name = "logistic_regression";
    std::size_t permutations = kDefaultPermutations;
    std::uint64_t compare_seed = 0;
    compare->add_option("--config,-c", o.config, "Run configuration; compares its two configured backends");
    compare->add_option("--a", dir_a, "Output directory of backend A");
    compare->add_option("--b", dir_b, "Output directory of backend B");
    compare->add_option("--classifier", classifier_name, "Classifier whose probabilities are compared");
    compare->add_option("--permutations", permutations, "Venkatraman permutations");
    compare->add_option("--seed", compare_seed, "Permutation seed");
    compare->add_option("--out", compare_out, "Write the comparison document here");

    auto* fixture = app.add_subcommand("make-fixture", "Write a synthetic cohort manifest and a matching config");
    std::string fixture_dir;
    std::uint64_t fixture_seed = 20240601;
    double separation = 6.0;
    std::size_t patches = 1;
    fixture->add_option("dir", fixture_dir, "Destination directory")->required();
    fixture->add_option("--seed", fixture_seed, "Seed for the manifest and the run");
    fixture->add_option("--separation", separation, "Class separation of the synthetic backends");
    fixture->add_option("--patches", patches, "Patches per slide")->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    std::string stage = app.get_subcommands().front()->get_name();
    try {
        if (*fixture) {
            fs::create_directories(fixture_dir);
            const Manifest m = make_fixture_manifest(fixture_seed);
            write_text_file((fs::path(fixture_dir) / "manifest.csv").string(), serialize_manifest(m));
            nlohmann::ordered_json cfg;
            cfg["seed"] = fixture_seed;
            cfg["manifest"] = "manifest.csv";
            cfg["output_dir"] = "out";
            cfg["backends"] = {{{"name", "uni"}, {"kind", "synthetic"}, {"dim", 1024}, {"class_separation", separation},
                                {"patches_per_slide", patches}},
                               {{"name", "virchow2"}, {"kind", "synthetic"}, {"dim", 1280},
                                {"class_separation", separation}, {"patches_per_slide", patches}}};
            cfg["comparison"] = {{"backend_a", "virchow2"}, {"backend_b", "uni"}};
            write_json((fs::path(fixture_dir) / "config.json").string(), cfg);
            std::cout << "wrote " << m.size() << " slides to " << fixture_dir << "\n";
            return 0;
        }

        if (*compare) {
            stage = "compare";
            const auto kind = parse_classifier_kind(classifier_name);
            if (!kind) throw Error("unknown classifier '" + classifier_name + "'");
            std::uint64_t seed = compare_seed;
            if (!o.config.empty()) {
                RunConfig cfg = load_config(o);
                if (cfg.backends.size() < 2) throw Error("the configuration has fewer than two backends");
                const auto a = cfg.comparison.backend_a.empty() ? cfg.backends[0].spec.name : cfg.comparison.backend_a;
                const auto b = cfg.comparison.backend_b.empty() ? cfg.backends[1].spec.name : cfg.comparison.backend_b;
                if (dir_a.empty()) dir_a = cfg.backend_dir(a);
                if (dir_b.empty()) dir_b = cfg.backend_dir(b);
                if (!compare->count("--seed")) seed = derive_seed(*cfg.seed, "comparison");
                if (!compare->count("--permutations")) permutations = cfg.comparison.permutations;
                if (compare_out.empty()) compare_out = (fs::path(cfg.output_dir) / "comparison.json").string();
            }
            if (dir_a.empty() || dir_b.empty()) throw Error("give --config or both --a and --b");
            const auto result = compare_models(dir_a, dir_b, *kind, permutations, seed);
            const auto doc = to_json(result);
            if (compare_out.empty()) {
                std::cout << doc.dump(2) << "\n";
            } else {
                write_json(compare_out, doc);
            }
            for (const auto& c : result.per_category) {
                std::printf("%-12s AUC %.4f vs %.4f  DeLong z=%.3f p=%.4g  Venkatraman p=%.4g\n",
                            std::string(to_string(c.category)).c_str(), c.delong.auc_a, c.delong.auc_b, c.delong.z,
                            c.delong.p, c.venkatraman.p);
            }
            return 0;
        }

        const RunConfig cfg = load_config(o);

        if (*run) {
            const auto summary = run_pipeline(cfg);
            for (const auto& b : summary.backends) {
                for (auto kind : kAllClassifiers) {
                    if (auto it = b.classifiers.find(kind); it != b.classifiers.end()) {
                        std::printf("%-10s %-22s accuracy %.4f\n", b.backend.c_str(),
                                    std::string(display_name(kind)).c_str(), it->second.report.accuracy);
                    }
                }
            }
            std::cout << "outputs in " << summary.output_dir << "\n";
            return 0;
        }

        if (*ingest) {
            const auto split = ingest_stage(cfg);
            std::cout << split.records.size() << " slides: " << split.train_count << " train, " << split.test_count
                      << " test\n";
            return 0;
        }

        const auto backends = selected_backends(cfg, o);

        if (*extract_cmd) {
            const auto split = ingest_stage(cfg);
            auto tracker = make_tracker(cfg);
            for (const auto* b : backends) print_coverage(b->spec.name, extract_stage(cfg, split, *b, tracker.get()));
            return 0;
        }
        if (*aggregate) {
            const auto split = ingest_stage(cfg);
            for (const auto* b : backends) {
                const auto dm = aggregate_stage(cfg, split, b->spec.name);
                std::cout << b->spec.name << ": " << dm.n << " x " << dm.d << "\n";
            }
            return 0;
        }
        if (*train_cmd) {
            auto tracker = make_tracker(cfg);
            for (const auto* b : backends) {
                const auto dm = read_design(design_path(cfg, b->spec.name));
                for (const auto& [kind, result] : train_stage(cfg, dm, b->spec.name, tracker.get())) {
                    std::printf("%-10s %-22s cv accuracy %.4f  %s\n", b->spec.name.c_str(),
                                std::string(display_name(kind)).c_str(), result.first.mean_accuracy[result.first.best_index],
                                result.first.best.id().c_str());
                }
            }
            return 0;
        }
        if (*evaluate) {
            auto tracker = make_tracker(cfg);
            std::vector<BackendOutcome> outcomes;
            for (const auto* b : backends) {
                const auto dm = read_design(design_path(cfg, b->spec.name));
                std::map<ClassifierKind, TrainedModel> models;
                for (auto kind : cfg.classifiers) models.emplace(kind, load_model(model_path(cfg, b->spec.name, kind)));
                outcomes.push_back(evaluate_stage(cfg, dm, b->spec.name, models, tracker.get()));
            }
            write_json((fs::path(cfg.output_dir) / "table2_accuracy.json").string(), accuracy_table(outcomes));
            write_json((fs::path(cfg.output_dir) / "table3_f1.json").string(), f1_table(outcomes));
            std::cout << accuracy_table(outcomes).dump(2) << "\n";
            return 0;
        }
        if (*curve) {
            for (const auto* b : backends) {
                const auto dm = read_design(design_path(cfg, b->spec.name));
                const auto [train, test] = split_design(dm);
                const auto spec = load_model(model_path(cfg, b->spec.name, cfg.learning_curve.classifier)).spec();
                const auto lc = learning_curve(train, test, spec, cfg.learning_curve.sizes, cfg.learning_curve.repeats,
                                               derive_seed(*cfg.seed, "learning-curve"));
                write_json((fs::path(cfg.backend_dir(b->spec.name)) / "learning_curve.json").string(), to_json(lc));
                emit_plots(lc, cfg.backend_dir(b->spec.name));
                for (std::size_t i = 0; i < lc.sizes.size(); ++i) {
                    std::printf("%-10s n=%-4zu train %.4f test %.4f\n", b->spec.name.c_str(), lc.sizes[i],
                                lc.train_accuracy[i], lc.test_accuracy[i]);
                }
            }
            return 0;
        }
        if (*plot) {
            std::size_t written = 0;
            for (const auto* b : backends) {
                const fs::path dir = cfg.backend_dir(b->spec.name);
                for (auto kind : cfg.classifiers) {
                    const std::string key(to_string(kind));
                    const auto csv = dir / "predictions" / (key + ".csv");
                    if (!fs::exists(csv)) continue;
                    const auto p = read_predictions(csv.string());
                    const auto report = classification_report(p.labels, p.proba, key, b->spec.name);
                    emit_plots(report, (dir / "plots" / key).string());
                    written += 2;
                }
                const auto lc_path = dir / "learning_curve.json";
                if (fs::exists(lc_path)) {
                    emit_plots(learning_curve_from_json(json::parse(read_text_file(lc_path.string()))), dir.string());
                    ++written;
                }
            }
            std::cout << written << " plots written\n";
            return 0;
        }
    } catch (const StageError& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 2;
    } catch (const std::exception& ex) {
        std::cerr << "error: [" << stage << "] " << ex.what() << "\n";
        return 2;
    }
    return 0;
}
