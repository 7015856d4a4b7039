#pragma once

// Experiment orchestration: configuration, the stage functions behind the CLI
// subcommands, learning curves, cross-backend comparison and output layout.
//
// Output directory layout:
//   run.json, ingest.json, table2_accuracy.json, table3_f1.json, comparison.json,
//   events.jsonl, cache/<backend>/<slide>.embc, design/<backend>.dmat,
//   <backend>/{models,cv,reports,predictions}/<classifier>.*,
//   <backend>/plots/<classifier>/{roc,pr}.svg,
//   <backend>/learning_curve.json, <backend>/learning_curve.svg
// An INCOMPLETE marker exists while a run is in progress or after it failed.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dermbench/aggregator.hpp"
#include "dermbench/embedder.hpp"
#include "dermbench/evalmetrics.hpp"
#include "dermbench/learners.hpp"
#include "dermbench/manifest.hpp"
#include "dermbench/patchworks.hpp"
#include "dermbench/rocstats.hpp"
#include "dermbench/tracker.hpp"

namespace dermbench {

/// Error tagged with the pipeline stage that raised it.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& message)
        : Error("[" + stage + "] " + message), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

struct BackendConfig {
    BackendSpec spec;
    /// Synthetic slides draw their patch count uniformly from this range.
    std::size_t patches_min = 1;
    std::size_t patches_max = 1;
};

struct PreprocessConfig {
    bool enabled = false;  // read images at `fullpath`, tile, resize and normalize
    std::size_t tile_size = kDefaultTileSize;
    std::size_t stride = 0;
    BackgroundPolicy background;
    NormalizationParams normalization;
};

struct LearningCurveConfig {
    bool enabled = true;
    ClassifierKind classifier = ClassifierKind::LogisticRegression;
    std::vector<std::size_t> sizes;  // empty: default grid ending at the training-set size
    std::size_t repeats = 5;
};

struct ComparisonConfig {
    bool enabled = true;
    std::string backend_a;  // empty: first and second configured backends
    std::string backend_b;
    ClassifierKind classifier = ClassifierKind::LogisticRegression;
    std::size_t permutations = kDefaultPermutations;
};

struct RunConfig {
    std::optional<std::uint64_t> seed;  // mandatory
    std::string manifest;
    char delimiter = ',';
    std::string output_dir = "out";
    std::string cache_dir;   // default <output_dir>/cache
    std::string design_dir;  // default <output_dir>/design
    std::vector<BackendConfig> backends;
    std::set<Category> keep{Category::Basaloid, Category::Melanocytic, Category::Squamous};
    std::vector<ClassifierKind> classifiers{kAllClassifiers.begin(), kAllClassifiers.end()};
    /// Per-kind grid override; kinds absent here use default_grid.
    std::map<ClassifierKind, std::vector<std::map<std::string, double>>> grids;
    std::size_t cv_folds = 5;
    bool cv_stratified = true;
    PreprocessConfig preprocess;
    LearningCurveConfig learning_curve;
    ComparisonConfig comparison;
    std::string event_log;  // default <output_dir>/events.jsonl
    std::string webhook_url;
    std::size_t threads = 0;

    std::string resolved_cache_dir() const;
    std::string resolved_design_dir() const;
    std::string resolved_event_log() const;
    std::string backend_dir(const std::string& backend) const;
};

/// Relative paths are resolved against `base_dir`. Unknown keys are errors.
RunConfig parse_run_config(const nlohmann::json& j, const std::string& base_dir = {});
RunConfig load_run_config(const std::string& path);
nlohmann::ordered_json to_json(const RunConfig& cfg);
/// Seed present, backends non-empty with unique names, learning-curve sizes
/// strictly increasing, manifest readable.
void validate(const RunConfig& cfg);
/// Stable hex digest of the resolved configuration.
std::string run_id(const RunConfig& cfg);

const BackendConfig& find_backend(const RunConfig& cfg, const std::string& name);
std::vector<ClassifierSpec> grid_for(const RunConfig& cfg, ClassifierKind kind);

// Stages. Each writes its outputs under the configured directories.

/// Loads, filters and splits the manifest; writes ingest.json.
EffectiveSplit ingest_stage(const RunConfig& cfg);
/// Writes one cache file per slide for `backend`; returns the coverage afterwards.
CacheCoverage extract_stage(const RunConfig& cfg, const EffectiveSplit& split, const BackendConfig& backend,
                            Tracker* tracker = nullptr);
/// Builds and writes design/<backend>.dmat.
DesignMatrix aggregate_stage(const RunConfig& cfg, const EffectiveSplit& split, const std::string& backend);

struct ClassifierOutcome {
    ClassifierSpec selected;
    CvResult cv;
    EvaluationReport report;
    Matrix test_proba;
};

struct BackendOutcome {
    std::string backend;
    std::vector<std::string> test_ids;
    std::vector<int> test_labels;
    std::map<ClassifierKind, ClassifierOutcome> classifiers;
};

/// Cross-validates every configured classifier on the train part, refits the
/// winner, saves models/<kind>.modl and cv/<kind>.json.
std::map<ClassifierKind, std::pair<CvResult, TrainedModel>> train_stage(const RunConfig& cfg, const DesignMatrix& design,
                                                                        const std::string& backend,
                                                                        Tracker* tracker = nullptr);
/// Scores the test part; writes reports/, predictions/ and plots/.
BackendOutcome evaluate_stage(const RunConfig& cfg, const DesignMatrix& design, const std::string& backend,
                              const std::map<ClassifierKind, TrainedModel>& models, Tracker* tracker = nullptr);

/// Accuracy (Table 2 layout) and per-category F1 (Table 3 layout) documents.
nlohmann::ordered_json accuracy_table(const std::vector<BackendOutcome>& outcomes);
nlohmann::ordered_json f1_table(const std::vector<BackendOutcome>& outcomes);

struct Predictions {
    std::vector<std::string> slide_ids;
    std::vector<int> labels;
    Matrix proba;
};
void write_predictions(const std::string& path, const Predictions& p);
Predictions read_predictions(const std::string& path);

/// Reads predictions/ and reports/ under two backend output directories.
/// Throws "unpaired test sets" unless both list the same slides in the same order.
ComparisonResult compare_models(const std::string& dir_a, const std::string& dir_b, ClassifierKind classifier,
                                std::size_t permutations, std::uint64_t seed);

struct LearningCurve {
    std::string spec_id;
    std::vector<std::size_t> sizes;
    std::size_t repeats = 0;
    std::vector<double> train_accuracy;  // mean over repeats
    std::vector<double> test_accuracy;
    std::vector<std::vector<double>> train_runs;  // [size][repeat]
    std::vector<std::vector<double>> test_runs;
};

std::vector<std::size_t> default_learning_curve_sizes(std::size_t n_train);

/// Stratified subsamples of the train part; the full-size point trains on the
/// whole train part, exactly as the main pipeline does.
LearningCurve learning_curve(const DesignMatrix& train, const DesignMatrix& test, const ClassifierSpec& spec,
                             std::vector<std::size_t> sizes, std::size_t repeats, std::uint64_t seed);

nlohmann::ordered_json to_json(const LearningCurve& lc);
LearningCurve learning_curve_from_json(const nlohmann::json& j);

/// Writes roc.svg/pr.svg for a report or learning_curve.svg for a curve.
void emit_plots(const EvaluationReport& report, const std::string& dir);
void emit_plots(const LearningCurve& curve, const std::string& dir);

struct RunSummary {
    std::string run_id;
    std::string output_dir;
    std::vector<BackendOutcome> backends;
    std::optional<ComparisonResult> comparison;
    std::map<std::string, LearningCurve> learning_curves;
};

/// ingest -> extract -> aggregate -> train -> evaluate -> compare -> learning curves -> plots.
RunSummary run_pipeline(const RunConfig& cfg);

/// Compact JSON writer used for every report document: 2-space indent, trailing newline.
void write_json(const std::string& path, const nlohmann::ordered_json& j);

}  // namespace dermbench
