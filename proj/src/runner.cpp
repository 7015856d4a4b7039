#include "dermbench/runner.hpp"

#include "dermbench/parallel.hpp"
#include "dermbench/plots.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace dermbench {

namespace {

std::string join(const std::string& a, const std::string& b) { return (fs::path(a) / b).string(); }

std::string resolve(const std::string& base, const std::string& p) {
    if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
    return (fs::path(base) / p).lexically_normal().string();
}

template <typename Fn>
auto in_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& ex) {
        throw StageError(stage, ex.what());
    }
}

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
    if (!j.is_object()) throw Error("config: " + where + " must be an object");
    for (const auto& [key, value] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw Error("config: unknown key '" + key + "' in " + where);
        }
    }
}

ClassifierKind kind_or_throw(const std::string& name) {
    const auto k = parse_classifier_kind(name);
    if (!k) throw Error("config: unknown classifier '" + name + "'");
    return *k;
}

std::size_t positive_size(const json& j, const std::string& what) {
    if (!j.is_number_integer() && !j.is_number_unsigned()) throw Error("config: " + what + " must be an integer");
    const auto v = j.get<long long>();
    if (v < 1) throw Error("config: " + what + " must be >= 1");
    return static_cast<std::size_t>(v);
}

// Largest-remainder allocation, at least one row per class when size allows.
std::array<std::size_t, kNumClasses> stratified_allocation(std::size_t size,
                                                           const std::array<std::size_t, kNumClasses>& available) {
    const std::size_t total = std::accumulate(available.begin(), available.end(), std::size_t{0});
    std::array<std::size_t, kNumClasses> out{};
    std::array<std::pair<std::size_t, std::size_t>, kNumClasses> rem{};
    std::size_t given = 0;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
        out[k] = size * available[k] / total;
        rem[k] = {size * available[k] % total, k};
        given += out[k];
    }
    std::stable_sort(rem.begin(), rem.end(), [](auto a, auto b) { return a.first > b.first; });
    for (std::size_t i = 0; given < size; i = (i + 1) % kNumClasses) {
        const auto k = rem[i].second;
        if (out[k] < available[k]) {
            ++out[k];
            ++given;
        }
    }
    for (std::size_t k = 0; k < kNumClasses; ++k) {
        if (out[k] == 0 && available[k] > 0) {
            const auto donor = static_cast<std::size_t>(std::max_element(out.begin(), out.end()) - out.begin());
            if (out[donor] > 1) {
                --out[donor];
                ++out[k];
            }
        }
    }
    return out;
}

double accuracy_of(const std::vector<int>& pred, std::span<const int> truth) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == truth[i] ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(pred.size());
}

ordered_json cv_json(const CvResult& cv, std::span<const ClassifierSpec> grid) {
    ordered_json j;
    j["selected"] = cv.best.id();
    j["best_index"] = cv.best_index;
    ordered_json entries = ordered_json::array();
    for (std::size_t g = 0; g < grid.size(); ++g) {
        entries.push_back({{"spec", grid[g].id()},
                           {"params", grid[g].params},
                           {"mean_accuracy", cv.mean_accuracy[g]},
                           {"fold_accuracy", cv.fold_accuracy[g]}});
    }
    j["grid"] = entries;
    return j;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

std::string RunConfig::resolved_cache_dir() const { return cache_dir.empty() ? join(output_dir, "cache") : cache_dir; }
std::string RunConfig::resolved_design_dir() const { return design_dir.empty() ? join(output_dir, "design") : design_dir; }
std::string RunConfig::resolved_event_log() const { return event_log.empty() ? join(output_dir, "events.jsonl") : event_log; }
std::string RunConfig::backend_dir(const std::string& backend) const { return join(output_dir, backend); }

RunConfig parse_run_config(const json& j, const std::string& base_dir) {
    check_keys(j,
               {"seed", "manifest", "delimiter", "output_dir", "cache_dir", "design_dir", "backends", "keep_categories",
                "classifiers", "grids", "cv", "preprocess", "learning_curve", "comparison", "tracker", "threads"},
               "configuration");
    RunConfig cfg;
    try {
        if (j.contains("seed")) {
            if (!j["seed"].is_number_integer() && !j["seed"].is_number_unsigned()) {
                throw Error("config: seed must be a non-negative integer");
            }
            if (j["seed"].is_number_integer() && j["seed"].get<long long>() < 0) {
                throw Error("config: seed must be a non-negative integer");
            }
            cfg.seed = j["seed"].get<std::uint64_t>();
        }
        if (j.contains("manifest")) cfg.manifest = resolve(base_dir, j["manifest"].get<std::string>());
        if (j.contains("delimiter")) {
            const auto d = j["delimiter"].get<std::string>();
            if (d == "tab" || d == "\t") {
                cfg.delimiter = '\t';
            } else if (d.size() == 1) {
                cfg.delimiter = d[0];
            } else {
                throw Error("config: delimiter must be a single character or \"tab\"");
            }
        }
        if (j.contains("output_dir")) cfg.output_dir = j["output_dir"].get<std::string>();
        cfg.output_dir = resolve(base_dir, cfg.output_dir);
        if (j.contains("cache_dir")) cfg.cache_dir = resolve(base_dir, j["cache_dir"].get<std::string>());
        if (j.contains("design_dir")) cfg.design_dir = resolve(base_dir, j["design_dir"].get<std::string>());

        if (j.contains("backends")) {
            for (const auto& b : j["backends"]) {
                check_keys(b, {"name", "kind", "dim", "seed", "class_separation", "source_dir", "patches_per_slide"},
                           "backend");
                BackendConfig bc;
                bc.spec.name = b.at("name").get<std::string>();
                const auto kind = lowercase(b.value("kind", std::string("synthetic")));
                if (kind == "synthetic") {
                    bc.spec.kind = BackendKind::Synthetic;
                } else if (kind == "precomputed") {
                    bc.spec.kind = BackendKind::Precomputed;
                } else {
                    throw Error("config: backend kind must be synthetic or precomputed");
                }
                if (b.contains("dim")) bc.spec.dim = positive_size(b["dim"], "backend dim");
                if (b.contains("seed")) {
                    bc.spec.seed = b["seed"].get<std::uint64_t>();
                } else if (cfg.seed) {
                    bc.spec.seed = derive_seed(*cfg.seed, "backend:" + bc.spec.name);
                }
                if (b.contains("class_separation")) bc.spec.class_separation = b["class_separation"].get<double>();
                if (b.contains("source_dir")) bc.spec.source_dir = resolve(base_dir, b["source_dir"].get<std::string>());
                if (b.contains("patches_per_slide")) {
                    const auto& p = b["patches_per_slide"];
                    if (p.is_array()) {
                        if (p.size() != 2) throw Error("config: patches_per_slide range must be [min, max]");
                        bc.patches_min = positive_size(p[0], "patches_per_slide min");
                        bc.patches_max = positive_size(p[1], "patches_per_slide max");
                    } else {
                        bc.patches_min = bc.patches_max = positive_size(p, "patches_per_slide");
                    }
                    if (bc.patches_min > bc.patches_max) throw Error("config: patches_per_slide min exceeds max");
                }
                validate(bc.spec);
                cfg.backends.push_back(std::move(bc));
            }
        }
        if (j.contains("keep_categories")) {
            cfg.keep.clear();
            for (const auto& c : j["keep_categories"]) {
                const auto cat = parse_category(c.get<std::string>());
                if (!cat) throw Error("config: unknown category '" + c.get<std::string>() + "'");
                cfg.keep.insert(*cat);
            }
        }
        if (j.contains("classifiers")) {
            cfg.classifiers.clear();
            for (const auto& c : j["classifiers"]) {
                const auto k = kind_or_throw(c.get<std::string>());
                if (std::find(cfg.classifiers.begin(), cfg.classifiers.end(), k) != cfg.classifiers.end()) {
                    throw Error("config: classifier listed twice: " + c.get<std::string>());
                }
                cfg.classifiers.push_back(k);
            }
            // Keep report order regardless of listing order.
            std::vector<ClassifierKind> ordered;
            for (auto k : kAllClassifiers) {
                if (std::find(cfg.classifiers.begin(), cfg.classifiers.end(), k) != cfg.classifiers.end()) ordered.push_back(k);
            }
            cfg.classifiers = ordered;
        }
        if (j.contains("grids")) {
            for (const auto& [name, entries] : j["grids"].items()) {
                const auto k = kind_or_throw(name);
                auto& grid = cfg.grids[k];
                for (const auto& e : entries) {
                    std::map<std::string, double> params;
                    for (const auto& [pn, pv] : e.items()) params[pn] = pv.get<double>();
                    grid.push_back(std::move(params));
                }
                if (grid.empty()) throw Error("config: empty grid for " + name);
            }
        }
        if (j.contains("cv")) {
            check_keys(j["cv"], {"folds", "stratified"}, "cv");
            if (j["cv"].contains("folds")) cfg.cv_folds = positive_size(j["cv"]["folds"], "cv.folds");
            cfg.cv_stratified = j["cv"].value("stratified", true);
        }
        if (j.contains("preprocess")) {
            const auto& p = j["preprocess"];
            check_keys(p, {"enabled", "tile_size", "stride", "background_filter", "max_mean_luminance", "mean", "std"},
                       "preprocess");
            cfg.preprocess.enabled = p.value("enabled", false);
            if (p.contains("tile_size")) cfg.preprocess.tile_size = positive_size(p["tile_size"], "tile_size");
            if (p.contains("stride")) cfg.preprocess.stride = p["stride"].get<std::size_t>();
            cfg.preprocess.background.enabled = p.value("background_filter", false);
            cfg.preprocess.background.max_mean_luminance = p.value("max_mean_luminance", 0.92);
            if (p.contains("mean")) cfg.preprocess.normalization.mean = p["mean"].get<std::array<double, 3>>();
            if (p.contains("std")) cfg.preprocess.normalization.stddev = p["std"].get<std::array<double, 3>>();
        }
        if (j.contains("learning_curve")) {
            const auto& l = j["learning_curve"];
            check_keys(l, {"enabled", "classifier", "sizes", "repeats"}, "learning_curve");
            cfg.learning_curve.enabled = l.value("enabled", true);
            if (l.contains("classifier")) cfg.learning_curve.classifier = kind_or_throw(l["classifier"].get<std::string>());
            if (l.contains("sizes")) {
                for (const auto& s : l["sizes"]) cfg.learning_curve.sizes.push_back(positive_size(s, "learning_curve size"));
            }
            if (l.contains("repeats")) cfg.learning_curve.repeats = positive_size(l["repeats"], "learning_curve.repeats");
        }
        if (j.contains("comparison")) {
            const auto& c = j["comparison"];
            check_keys(c, {"enabled", "backend_a", "backend_b", "classifier", "permutations"}, "comparison");
            cfg.comparison.enabled = c.value("enabled", true);
            cfg.comparison.backend_a = c.value("backend_a", std::string());
            cfg.comparison.backend_b = c.value("backend_b", std::string());
            if (c.contains("classifier")) cfg.comparison.classifier = kind_or_throw(c["classifier"].get<std::string>());
            if (c.contains("permutations")) cfg.comparison.permutations = positive_size(c["permutations"], "permutations");
        }
        if (j.contains("tracker")) {
            check_keys(j["tracker"], {"event_log", "webhook"}, "tracker");
            if (j["tracker"].contains("event_log")) {
                cfg.event_log = resolve(base_dir, j["tracker"]["event_log"].get<std::string>());
            }
            if (j["tracker"].contains("webhook") && !j["tracker"]["webhook"].is_null()) {
                cfg.webhook_url = j["tracker"]["webhook"].get<std::string>();
            }
        }
        if (j.contains("threads")) cfg.threads = j["threads"].get<std::size_t>();
    } catch (const json::exception& ex) {
        throw Error(std::string("config: ") + ex.what());
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& ex) {
        throw Error("config " + path + ": " + ex.what());
    }
    return parse_run_config(j, fs::path(path).parent_path().string());
}

ordered_json to_json(const RunConfig& cfg) {
    ordered_json j;
    j["seed"] = cfg.seed ? ordered_json(*cfg.seed) : ordered_json(nullptr);
    j["manifest"] = cfg.manifest;
    j["delimiter"] = cfg.delimiter == '\t' ? std::string("tab") : std::string(1, cfg.delimiter);
    j["output_dir"] = cfg.output_dir;
    j["cache_dir"] = cfg.resolved_cache_dir();
    j["design_dir"] = cfg.resolved_design_dir();
    ordered_json backends = ordered_json::array();
    for (const auto& b : cfg.backends) {
        ordered_json e;
        e["name"] = b.spec.name;
        e["kind"] = b.spec.kind == BackendKind::Synthetic ? "synthetic" : "precomputed";
        e["dim"] = b.spec.dim;
        e["seed"] = b.spec.seed;
        e["class_separation"] = b.spec.class_separation;
        e["source_dir"] = b.spec.source_dir;
        e["patches_per_slide"] = {b.patches_min, b.patches_max};
        backends.push_back(e);
    }
    j["backends"] = backends;
    j["keep_categories"] = ordered_json::array();
    for (auto c : cfg.keep) j["keep_categories"].push_back(std::string(to_string(c)));
    j["classifiers"] = ordered_json::array();
    for (auto k : cfg.classifiers) j["classifiers"].push_back(std::string(to_string(k)));
    ordered_json grids = ordered_json::object();
    for (const auto& [k, g] : cfg.grids) grids[std::string(to_string(k))] = g;
    j["grids"] = grids;
    j["cv"] = {{"folds", cfg.cv_folds}, {"stratified", cfg.cv_stratified}};
    j["preprocess"] = {{"enabled", cfg.preprocess.enabled},
                       {"tile_size", cfg.preprocess.tile_size},
                       {"stride", cfg.preprocess.stride},
                       {"background_filter", cfg.preprocess.background.enabled},
                       {"max_mean_luminance", cfg.preprocess.background.max_mean_luminance},
                       {"mean", cfg.preprocess.normalization.mean},
                       {"std", cfg.preprocess.normalization.stddev}};
    j["learning_curve"] = {{"enabled", cfg.learning_curve.enabled},
                           {"classifier", std::string(to_string(cfg.learning_curve.classifier))},
                           {"sizes", cfg.learning_curve.sizes},
                           {"repeats", cfg.learning_curve.repeats}};
    j["comparison"] = {{"enabled", cfg.comparison.enabled},
                       {"backend_a", cfg.comparison.backend_a},
                       {"backend_b", cfg.comparison.backend_b},
                       {"classifier", std::string(to_string(cfg.comparison.classifier))},
                       {"permutations", cfg.comparison.permutations}};
    j["tracker"] = {{"event_log", cfg.resolved_event_log()}, {"webhook", cfg.webhook_url}};
    return j;
}

void validate(const RunConfig& cfg) {
    if (!cfg.seed) throw Error("config: seed is mandatory");
    if (cfg.manifest.empty()) throw Error("config: no manifest given");
    if (!fs::is_regular_file(cfg.manifest)) throw Error("config: manifest not found: " + cfg.manifest);
    if (cfg.backends.empty()) throw Error("config: no backends configured");
    std::set<std::string> names;
    for (const auto& b : cfg.backends) {
        validate(b.spec);
        if (!names.insert(b.spec.name).second) throw Error("config: duplicate backend name '" + b.spec.name + "'");
        if (b.patches_min == 0 || b.patches_min > b.patches_max) throw Error("config: bad patches_per_slide range");
    }
    if (cfg.keep.empty()) throw Error("config: keep_categories is empty");
    if (cfg.keep.contains(Category::Other)) throw Error("config: the other category cannot be classified");
    if (cfg.classifiers.empty()) throw Error("config: no classifiers configured");
    if (cfg.cv_folds < 2) throw Error("config: cv.folds must be >= 2");
    for (const auto& [k, grid] : cfg.grids) {
        for (const auto& p : grid) validate(ClassifierSpec{k, p, 0});
    }
    const auto& sizes = cfg.learning_curve.sizes;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        if (sizes[i] < kNumClasses) throw Error("config: learning-curve sizes must be >= 3");
        if (i > 0 && sizes[i] <= sizes[i - 1]) throw Error("config: learning-curve sizes must be strictly increasing");
    }
    if (cfg.comparison.enabled && cfg.backends.size() >= 2) {
        for (const auto* name : {&cfg.comparison.backend_a, &cfg.comparison.backend_b}) {
            if (!name->empty()) find_backend(cfg, *name);
        }
    }
}

std::string run_id(const RunConfig& cfg) {
    const std::string text = to_json(cfg).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[24];
    std::snprintf(buf, sizeof buf, "run-%016llx", static_cast<unsigned long long>(splitmix64(h)));
    return buf;
}

const BackendConfig& find_backend(const RunConfig& cfg, const std::string& name) {
    for (const auto& b : cfg.backends) {
        if (b.spec.name == name) return b;
    }
    throw Error("unknown backend '" + name + "'");
}

std::vector<ClassifierSpec> grid_for(const RunConfig& cfg, ClassifierKind kind) {
    const std::uint64_t seed = derive_seed(cfg.seed.value_or(0), "classifier:" + std::string(to_string(kind)));
    if (auto it = cfg.grids.find(kind); it != cfg.grids.end()) {
        std::vector<ClassifierSpec> grid;
        for (const auto& p : it->second) grid.push_back({kind, p, seed});
        return grid;
    }
    return default_grid(kind, seed);
}

void write_json(const std::string& path, const ordered_json& j) { write_text_file(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// Stages

EffectiveSplit ingest_stage(const RunConfig& cfg) {
    return in_stage("ingest", [&] {
        const Manifest all = load_manifest(cfg.manifest, ManifestFormat{cfg.delimiter});
        const Manifest kept = filter_categories(all, cfg.keep);
        EffectiveSplit split = effective_split(kept);
        ordered_json j;
        j["manifest"] = cfg.manifest;
        j["rows"] = all.size();
        ordered_json by_cat = ordered_json::object();
        for (auto c : {Category::Basaloid, Category::Melanocytic, Category::Squamous, Category::Other}) {
            by_cat[std::string(to_string(c))] = all.count(c);
        }
        j["categories"] = by_cat;
        j["kept"] = kept.size();
        ordered_json by_subset = ordered_json::object();
        for (auto s : {Subset::Train, Subset::Validation, Subset::Test}) by_subset[std::string(to_string(s))] = kept.count(s);
        j["subsets"] = by_subset;
        j["effective"] = {{"train", split.train_count}, {"test", split.test_count}};
        fs::create_directories(cfg.output_dir);
        write_json(join(cfg.output_dir, "ingest.json"), j);
        return split;
    });
}

CacheCoverage extract_stage(const RunConfig& cfg, const EffectiveSplit& split, const BackendConfig& backend,
                            Tracker* tracker) {
    return in_stage("extract", [&] {
        const std::string dir = join(cfg.resolved_cache_dir(), backend.spec.name);
        fs::create_directories(dir);
        const std::string manifest_dir = fs::path(cfg.manifest).parent_path().string();
        std::vector<std::size_t> patch_counts(split.records.size(), 0);
        parallel_for(split.records.size(), [&](std::size_t i) {
            const auto& r = split.records[i];
            EmbeddingMatrix e;
            if (cfg.preprocess.enabled && backend.spec.kind == BackendKind::Synthetic) {
                const auto image = read_image(resolve(manifest_dir, r.fullpath));
                std::vector<NormalizedPatch> patches;
                for (const auto& t : tile(image, cfg.preprocess.tile_size, cfg.preprocess.stride, cfg.preprocess.background)) {
                    patches.push_back(normalize(resize(t), cfg.preprocess.normalization));
                }
                e = extract(r.file, patches, backend.spec, r.category, split.subsets[i]);
            } else {
                std::size_t m = backend.patches_min;
                if (backend.patches_max > backend.patches_min) {
                    Rng rng(derive_seed(backend.spec.seed, "patch-count:" + r.file));
                    m += rng.below(backend.patches_max - backend.patches_min + 1);
                }
                e = extract(r.file, m, backend.spec, r.category, split.subsets[i]);
            }
            patch_counts[i] = e.m;
            write_cache(e, dir);
        });
        Manifest m;
        m.records = split.records;
        auto coverage = scan_cache(dir, m);
        if (tracker) {
            tracker->log("extract", backend.spec.name + "/slides", static_cast<double>(coverage.present.size()));
            tracker->log("extract", backend.spec.name + "/patches",
                         static_cast<double>(std::accumulate(patch_counts.begin(), patch_counts.end(), std::size_t{0})));
        }
        return coverage;
    });
}

DesignMatrix aggregate_stage(const RunConfig& cfg, const EffectiveSplit& split, const std::string& backend) {
    return in_stage("aggregate", [&] {
        Manifest m;
        m.records = split.records;
        DesignMatrix dm = build_design(m, cfg.resolved_cache_dir(), backend);
        // The manifest subset may be Validation; the design matrix stores the effective split.
        dm.subsets = split.subsets;
        write_design(dm, join(cfg.resolved_design_dir(), backend + ".dmat"));
        return dm;
    });
}

std::map<ClassifierKind, std::pair<CvResult, TrainedModel>> train_stage(const RunConfig& cfg, const DesignMatrix& design,
                                                                        const std::string& backend, Tracker* tracker) {
    return in_stage("train", [&] {
        const auto [train, test] = split_design(design);
        const Matrix x = train.features();
        const auto y = train.class_indices();
        const CvPlan plan{cfg.cv_folds, cfg.cv_stratified, derive_seed(*cfg.seed, "cv")};
        const std::string dir = cfg.backend_dir(backend);
        fs::create_directories(join(dir, "models"));
        fs::create_directories(join(dir, "cv"));
        std::map<ClassifierKind, std::pair<CvResult, TrainedModel>> out;
        for (auto kind : cfg.classifiers) {
            const auto grid = grid_for(cfg, kind);
            CvResult cv = cross_validate(grid, x, y, plan);
            TrainedModel model = dermbench::train(cv.best, x, y);
            const std::string key(to_string(kind));
            save_model(model, join(join(dir, "models"), key + ".modl"));
            write_json(join(join(dir, "cv"), key + ".json"), cv_json(cv, grid));
            if (tracker) tracker->log("train", backend + "/" + key + "/cv_accuracy", cv.mean_accuracy[cv.best_index]);
            out.emplace(kind, std::make_pair(std::move(cv), std::move(model)));
        }
        return out;
    });
}

BackendOutcome evaluate_stage(const RunConfig& cfg, const DesignMatrix& design, const std::string& backend,
                              const std::map<ClassifierKind, TrainedModel>& models, Tracker* tracker) {
    return in_stage("evaluate", [&] {
        const auto [train, test] = split_design(design);
        const Matrix x = test.features();
        BackendOutcome outcome;
        outcome.backend = backend;
        outcome.test_ids = test.slide_ids;
        outcome.test_labels = test.class_indices();
        const std::string dir = cfg.backend_dir(backend);
        for (const char* sub : {"reports", "predictions", "plots"}) fs::create_directories(join(dir, sub));
        for (auto kind : cfg.classifiers) {
            const auto it = models.find(kind);
            if (it == models.end()) throw Error("no trained model for " + std::string(to_string(kind)));
            const std::string key(to_string(kind));
            ClassifierOutcome co{it->second.spec(), {}, {}, it->second.predict_proba(x)};
            co.report = classification_report(outcome.test_labels, co.test_proba, it->second.spec().id(), backend);
            write_json(join(join(dir, "reports"), key + ".json"), to_json(co.report));
            write_predictions(join(join(dir, "predictions"), key + ".csv"),
                              {outcome.test_ids, outcome.test_labels, co.test_proba});
            emit_plots(co.report, join(join(dir, "plots"), key));
            if (tracker) {
                tracker->log("evaluate", backend + "/" + key + "/accuracy", co.report.accuracy);
                if (co.report.macro_auroc) tracker->log("evaluate", backend + "/" + key + "/macro_auroc", *co.report.macro_auroc);
            }
            outcome.classifiers.emplace(kind, std::move(co));
        }
        return outcome;
    });
}

ordered_json accuracy_table(const std::vector<BackendOutcome>& outcomes) {
    ordered_json j;
    j["metric"] = "accuracy";
    j["backends"] = ordered_json::array();
    for (const auto& o : outcomes) j["backends"].push_back(o.backend);
    ordered_json rows = ordered_json::array();
    for (auto kind : kAllClassifiers) {
        ordered_json row;
        row["classifier"] = std::string(display_name(kind));
        row["key"] = std::string(to_string(kind));
        bool any = false;
        for (const auto& o : outcomes) {
            if (auto it = o.classifiers.find(kind); it != o.classifiers.end()) {
                row[o.backend] = it->second.report.accuracy;
                any = true;
            }
        }
        if (any) rows.push_back(row);
    }
    j["rows"] = rows;
    return j;
}

ordered_json f1_table(const std::vector<BackendOutcome>& outcomes) {
    ordered_json j;
    j["metric"] = "f1";
    ordered_json per_backend = ordered_json::object();
    for (const auto& o : outcomes) {
        ordered_json rows = ordered_json::array();
        for (auto kind : kAllClassifiers) {
            const auto it = o.classifiers.find(kind);
            if (it == o.classifiers.end()) continue;
            ordered_json row;
            row["classifier"] = std::string(display_name(kind));
            row["key"] = std::string(to_string(kind));
            for (std::size_t k = 0; k < kNumClasses; ++k) {
                row[std::string(to_string(kClassOrder[k]))] = it->second.report.per_class[k].f1;
            }
            rows.push_back(row);
        }
        per_backend[o.backend] = rows;
    }
    j["backends"] = per_backend;
    return j;
}

void write_predictions(const std::string& path, const Predictions& p) {
    if (p.slide_ids.size() != p.labels.size() || p.proba.rows != p.labels.size()) {
        throw Error("predictions: misaligned columns");
    }
    std::ostringstream s;
    s << "slide_id,label";
    for (auto c : kClassOrder) s << ',' << to_string(c);
    s << '\n';
    for (std::size_t i = 0; i < p.labels.size(); ++i) {
        if (p.slide_ids[i].find_first_of(",\"\n") != std::string::npos) {
            throw Error("predictions: slide id '" + p.slide_ids[i] + "' cannot be written unquoted");
        }
        s << p.slide_ids[i] << ',' << to_string(kClassOrder[static_cast<std::size_t>(p.labels[i])]);
        for (std::size_t k = 0; k < kNumClasses; ++k) s << ',' << format_double(p.proba(i, k));
        s << '\n';
    }
    write_text_file(path, s.str());
}

Predictions read_predictions(const std::string& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line)) throw Error(path + ": empty predictions file");
    Predictions p;
    std::vector<double> values;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ls(line);
        std::string f;
        while (std::getline(ls, f, ',')) fields.push_back(f);
        if (fields.size() != 2 + kNumClasses) throw Error(path + ":" + std::to_string(line_no) + ": expected 5 fields");
        const auto cat = parse_category(fields[1]);
        if (!cat || *cat == Category::Other) throw Error(path + ":" + std::to_string(line_no) + ": bad label");
        p.slide_ids.push_back(fields[0]);
        p.labels.push_back(static_cast<int>(class_index(*cat)));
        for (std::size_t k = 0; k < kNumClasses; ++k) {
            const auto& t = fields[2 + k];
            double v = 0.0;
            const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
            if (res.ec != std::errc() || res.ptr != t.data() + t.size()) {
                throw Error(path + ":" + std::to_string(line_no) + ": bad probability '" + t + "'");
            }
            values.push_back(v);
        }
    }
    p.proba = Matrix(p.labels.size(), kNumClasses);
    p.proba.data = std::move(values);
    return p;
}

ComparisonResult compare_models(const std::string& dir_a, const std::string& dir_b, ClassifierKind classifier,
                                std::size_t permutations, std::uint64_t seed) {
    const std::string key(to_string(classifier));
    const auto pa = read_predictions(join(join(dir_a, "predictions"), key + ".csv"));
    const auto pb = read_predictions(join(join(dir_b, "predictions"), key + ".csv"));
    if (pa.slide_ids != pb.slide_ids || pa.labels != pb.labels) {
        throw Error("unpaired test sets: the two runs did not score the same slides in the same order");
    }
    ComparisonResult r = compare_probabilities(pa.labels, pa.proba, pb.proba, permutations, seed);
    r.backend_a = fs::path(dir_a).filename().string();
    r.backend_b = fs::path(dir_b).filename().string();
    r.classifier = key;
    for (auto kind : kAllClassifiers) {
        const std::string k(to_string(kind));
        const auto ra = join(join(dir_a, "reports"), k + ".json");
        const auto rb = join(join(dir_b, "reports"), k + ".json");
        if (!fs::exists(ra) || !fs::exists(rb)) continue;
        r.accuracy_classifiers.push_back(k);
        r.accuracy_a.push_back(json::parse(read_text_file(ra)).at("accuracy").get<double>());
        r.accuracy_b.push_back(json::parse(read_text_file(rb)).at("accuracy").get<double>());
    }
    if (r.accuracy_a.size() >= 2) r.ttest = paired_ttest(r.accuracy_a, r.accuracy_b);
    return r;
}

// ---------------------------------------------------------------------------
// Learning curves

std::vector<std::size_t> default_learning_curve_sizes(std::size_t n_train) {
    std::vector<std::size_t> sizes;
    for (std::size_t s : {20, 40, 60, 80, 100, 140, 200, 300, 400}) {
        if (s < n_train) sizes.push_back(s);
    }
    sizes.push_back(n_train);
    return sizes;
}

LearningCurve learning_curve(const DesignMatrix& train, const DesignMatrix& test, const ClassifierSpec& spec,
                             std::vector<std::size_t> sizes, std::size_t repeats, std::uint64_t seed) {
    if (repeats == 0) throw Error("learning curve: repeats must be >= 1");
    if (sizes.empty()) sizes = default_learning_curve_sizes(train.n);
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        if (i > 0 && sizes[i] <= sizes[i - 1]) throw Error("learning curve: sizes must be strictly increasing");
        if (sizes[i] < kNumClasses) throw Error("learning curve: sizes must be >= 3");
        if (sizes[i] > train.n) {
            throw Error("learning curve: size " + std::to_string(sizes[i]) + " exceeds the " + std::to_string(train.n) +
                        " training slides");
        }
    }
    if (sizes.back() != train.n) sizes.push_back(train.n);

    const auto y = train.class_indices();
    std::array<std::vector<std::size_t>, kNumClasses> members;
    for (std::size_t i = 0; i < y.size(); ++i) members[static_cast<std::size_t>(y[i])].push_back(i);
    std::array<std::size_t, kNumClasses> available{};
    for (std::size_t k = 0; k < kNumClasses; ++k) available[k] = members[k].size();

    const Matrix x_test = test.features();
    const auto y_test = test.class_indices();

    LearningCurve lc;
    lc.spec_id = spec.id();
    lc.sizes = sizes;
    lc.repeats = repeats;
    lc.train_runs.assign(sizes.size(), std::vector<double>(repeats));
    lc.test_runs.assign(sizes.size(), std::vector<double>(repeats));
    parallel_for(sizes.size() * repeats, [&](std::size_t job) {
        const std::size_t si = job / repeats, rep = job % repeats;
        const std::size_t s = sizes[si];
        std::vector<std::size_t> rows;
        if (s == train.n) {
            rows.resize(train.n);
            std::iota(rows.begin(), rows.end(), std::size_t{0});
        } else {
            Rng rng(derive_seed(seed, "learning-curve:" + std::to_string(s), rep));
            const auto alloc = stratified_allocation(s, available);
            for (std::size_t k = 0; k < kNumClasses; ++k) {
                auto pool = members[k];
                rng.shuffle(pool);
                rows.insert(rows.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(alloc[k]));
            }
            std::sort(rows.begin(), rows.end());
        }
        const DesignMatrix sub = train.select(rows);
        const auto y_sub = sub.class_indices();
        const Matrix x_sub = sub.features();
        const TrainedModel model = dermbench::train(spec, x_sub, y_sub);
        lc.train_runs[si][rep] = accuracy_of(model.predict(x_sub), y_sub);
        lc.test_runs[si][rep] = accuracy_of(model.predict(x_test), y_test);
    });
    for (std::size_t si = 0; si < sizes.size(); ++si) {
        lc.train_accuracy.push_back(std::accumulate(lc.train_runs[si].begin(), lc.train_runs[si].end(), 0.0) /
                                    static_cast<double>(repeats));
        lc.test_accuracy.push_back(std::accumulate(lc.test_runs[si].begin(), lc.test_runs[si].end(), 0.0) /
                                   static_cast<double>(repeats));
    }
    return lc;
}

ordered_json to_json(const LearningCurve& lc) {
    ordered_json j;
    j["classifier"] = lc.spec_id;
    j["sizes"] = lc.sizes;
    j["repeats"] = lc.repeats;
    j["train_accuracy"] = lc.train_accuracy;
    j["test_accuracy"] = lc.test_accuracy;
    j["train_runs"] = lc.train_runs;
    j["test_runs"] = lc.test_runs;
    return j;
}

LearningCurve learning_curve_from_json(const json& j) {
    LearningCurve lc;
    lc.spec_id = j.at("classifier").get<std::string>();
    lc.sizes = j.at("sizes").get<std::vector<std::size_t>>();
    lc.repeats = j.at("repeats").get<std::size_t>();
    lc.train_accuracy = j.at("train_accuracy").get<std::vector<double>>();
    lc.test_accuracy = j.at("test_accuracy").get<std::vector<double>>();
    lc.train_runs = j.value("train_runs", std::vector<std::vector<double>>{});
    lc.test_runs = j.value("test_runs", std::vector<std::vector<double>>{});
    if (lc.sizes.size() != lc.train_accuracy.size() || lc.sizes.size() != lc.test_accuracy.size()) {
        throw Error("learning curve: misaligned arrays");
    }
    return lc;
}

void emit_plots(const EvaluationReport& report, const std::string& dir) { emit_report_plots(report, dir); }

void emit_plots(const LearningCurve& curve, const std::string& dir) {
    fs::create_directories(dir);
    std::vector<double> sizes(curve.sizes.begin(), curve.sizes.end());
    write_text_file(join(dir, "learning_curve.svg"),
                    render_learning_curve_svg("Learning curve: " + curve.spec_id, sizes, curve.train_accuracy,
                                              curve.test_accuracy));
}

// ---------------------------------------------------------------------------

RunSummary run_pipeline(const RunConfig& cfg) {
    in_stage("config", [&] { validate(cfg); });
    worker_threads() = cfg.threads;

    RunSummary summary;
    summary.run_id = run_id(cfg);
    summary.output_dir = cfg.output_dir;
    const std::string marker = join(cfg.output_dir, "INCOMPLETE");
    in_stage("setup", [&] {
        fs::create_directories(cfg.output_dir);
        write_text_file(marker, "run " + summary.run_id + " in progress\n");
    });

    try {
        Tracker tracker(summary.run_id, {cfg.resolved_event_log(), cfg.webhook_url});
        const EffectiveSplit split = ingest_stage(cfg);
        tracker.log("ingest", "slides", static_cast<double>(split.records.size()));

        std::map<std::string, std::pair<DesignMatrix, ClassifierSpec>> curve_inputs;
        for (const auto& backend : cfg.backends) {
            const auto coverage = extract_stage(cfg, split, backend, &tracker);
            if (!coverage.missing.empty()) {
                throw StageError("extract", std::to_string(coverage.missing.size()) + " slides have no cache for " +
                                                backend.spec.name);
            }
            const DesignMatrix design = aggregate_stage(cfg, split, backend.spec.name);
            auto trained = train_stage(cfg, design, backend.spec.name, &tracker);
            std::map<ClassifierKind, TrainedModel> models;
            for (const auto& [k, v] : trained) models.emplace(k, v.second);
            BackendOutcome outcome = evaluate_stage(cfg, design, backend.spec.name, models, &tracker);
            for (auto& [k, co] : outcome.classifiers) co.cv = trained.at(k).first;
            if (cfg.learning_curve.enabled) {
                if (auto it = trained.find(cfg.learning_curve.classifier); it != trained.end()) {
                    curve_inputs.emplace(backend.spec.name, std::make_pair(design, it->second.first.best));
                }
            }
            summary.backends.push_back(std::move(outcome));
        }

        in_stage("report", [&] {
            write_json(join(cfg.output_dir, "table2_accuracy.json"), accuracy_table(summary.backends));
            write_json(join(cfg.output_dir, "table3_f1.json"), f1_table(summary.backends));
        });

        if (cfg.comparison.enabled && cfg.backends.size() >= 2) {
            in_stage("compare", [&] {
                const std::string a = cfg.comparison.backend_a.empty() ? cfg.backends[0].spec.name : cfg.comparison.backend_a;
                const std::string b = cfg.comparison.backend_b.empty() ? cfg.backends[1].spec.name : cfg.comparison.backend_b;
                summary.comparison = compare_models(cfg.backend_dir(a), cfg.backend_dir(b), cfg.comparison.classifier,
                                                    cfg.comparison.permutations, derive_seed(*cfg.seed, "comparison"));
                summary.comparison->backend_a = a;
                summary.comparison->backend_b = b;
                write_json(join(cfg.output_dir, "comparison.json"), to_json(*summary.comparison));
                for (const auto& c : summary.comparison->per_category) {
                    tracker.log("compare", std::string(to_string(c.category)) + "/delong_p", c.delong.p);
                    tracker.log("compare", std::string(to_string(c.category)) + "/venkatraman_p", c.venkatraman.p);
                }
            });
        }

        for (const auto& [name, input] : curve_inputs) {
            in_stage("learning-curve", [&] {
                const auto [train, test] = split_design(input.first);
                LearningCurve lc = learning_curve(train, test, input.second, cfg.learning_curve.sizes,
                                                  cfg.learning_curve.repeats, derive_seed(*cfg.seed, "learning-curve"));
                write_json(join(cfg.backend_dir(name), "learning_curve.json"), to_json(lc));
                emit_plots(lc, cfg.backend_dir(name));
                for (std::size_t i = 0; i < lc.sizes.size(); ++i) {
                    tracker.track({{}, {}, "learning-curve", name + "/test_accuracy", lc.test_accuracy[i], lc.sizes[i]});
                }
                summary.learning_curves.emplace(name, std::move(lc));
            });
        }

        in_stage("report", [&] {
            ordered_json run;
            run["run_id"] = summary.run_id;
            run["status"] = "complete";
            run["config"] = to_json(cfg);
            ordered_json outputs = ordered_json::object();
            for (const auto& o : summary.backends) {
                ordered_json b;
                b["test_slides"] = o.test_ids.size();
                ordered_json sel = ordered_json::object();
                for (const auto& [k, co] : o.classifiers) sel[std::string(to_string(k))] = co.selected.id();
                b["selected"] = sel;
                outputs[o.backend] = b;
            }
            run["backends"] = outputs;
            run["webhook_failures"] = tracker.webhook_failures();
            write_json(join(cfg.output_dir, "run.json"), run);
        });
    } catch (const std::exception& ex) {
        try {
            write_text_file(marker, std::string("run failed: ") + ex.what() + "\n");
        } catch (...) {
        }
        throw;
    }
    fs::remove(marker);
    return summary;
}

}  // namespace dermbench
