#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "dermbench/fixture.hpp"
#include "dermbench/plots.hpp"
#include "dermbench/runner.hpp"
#include "support.hpp"

using namespace dermbench;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// 66 classification slides (40 train, 8 validation, 18 test) plus 10 others.
Manifest small_manifest(std::uint64_t seed) {
    FixtureShape shape;
    shape.category_counts = {14, 22, 30, 10};
    shape.train = 40;
    shape.validation = 8;
    shape.test = 18;
    return make_fixture_manifest(seed, shape);
}

json small_config(const testing::TempDir& dir) {
    write_text_file(dir / "manifest.csv", serialize_manifest(small_manifest(4)));
    return json{{"seed", 11},
                {"manifest", dir / "manifest.csv"},
                {"output_dir", dir / "out"},
                {"backends", json::array({json{{"name", "alpha"}, {"dim", 24}, {"class_separation", 6.0}},
                                          json{{"name", "beta"}, {"dim", 32}, {"class_separation", 1.0},
                                               {"patches_per_slide", json::array({1, 3})}}})},
                {"classifiers", json::array({"naive_bayes", "logistic_regression", "k_nearest_neighbor"})},
                {"grids", json{{"k_nearest_neighbor", json::array({json{{"k", 1}}, json{{"k", 3}}})}}},
                {"cv", json{{"folds", 3}}},
                {"learning_curve", json{{"sizes", json::array({12, 24})}, {"repeats", 2}}},
                {"comparison", json{{"permutations", 200}}}};
}

std::string config_error(const json& j) {
    try {
        validate(parse_run_config(j));
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

Matrix onehot(const std::vector<int>& y, double confidence) {
    Matrix p(y.size(), 3, (1.0 - confidence) / 2.0);
    for (std::size_t i = 0; i < y.size(); ++i) p(i, static_cast<std::size_t>(y[i])) = confidence;
    return p;
}

// Every file under `root` except the event log, which carries wall-clock timestamps.
std::map<std::string, std::vector<std::uint8_t>> snapshot(const std::string& root) {
    std::map<std::string, std::vector<std::uint8_t>> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file() || e.path().filename() == "events.jsonl") continue;
        files[fs::relative(e.path(), root).string()] = read_file_bytes(e.path().string());
    }
    return files;
}

std::vector<std::pair<double, double>> polyline_points(const std::string& svg, const std::string& label) {
    const std::regex re("<polyline[^>]*data-label=\"" + label + "\"[^>]*points=\"([^\"]*)\"");
    std::smatch m;
    std::vector<std::pair<double, double>> pts;
    if (!std::regex_search(svg, m, re)) return pts;
    std::istringstream in(m[1].str());
    std::string pair;
    while (in >> pair) {
        const auto comma = pair.find(',');
        pts.emplace_back(std::stod(pair.substr(0, comma)), std::stod(pair.substr(comma + 1)));
    }
    return pts;
}

}  // namespace

TEST_SUITE("runner") {
    TEST_CASE("configuration parsing and validation") {
        testing::TempDir dir("cfg");
        const auto base = small_config(dir);
        const auto cfg = parse_run_config(base);
        CHECK_NOTHROW(validate(cfg));
        CHECK(cfg.backends.size() == 2);
        CHECK(cfg.backends[1].patches_min == 1);
        CHECK(cfg.backends[1].patches_max == 3);
        CHECK(cfg.classifiers == std::vector<ClassifierKind>{ClassifierKind::KNearestNeighbor,
                                                             ClassifierKind::LogisticRegression, ClassifierKind::NaiveBayes});
        CHECK(grid_for(cfg, ClassifierKind::KNearestNeighbor).size() == 2);
        CHECK(grid_for(cfg, ClassifierKind::NaiveBayes) == default_grid(ClassifierKind::NaiveBayes, grid_for(cfg, ClassifierKind::NaiveBayes)[0].seed));
        CHECK(find_backend(cfg, "beta").spec.dim == 32);
        CHECK_THROWS_AS(find_backend(cfg, "gamma"), Error);

        CHECK(run_id(cfg) == run_id(parse_run_config(base)));
        CHECK(run_id(parse_run_config(json::parse(to_json(cfg).dump()))) == run_id(cfg));
        auto reseeded = base;
        reseeded["seed"] = 12;
        CHECK(run_id(parse_run_config(reseeded)) != run_id(cfg));

        const auto expect = [&](const std::function<void(json&)>& edit, const std::string& fragment) {
            auto j = base;
            edit(j);
            std::string message;
            try {
                validate(parse_run_config(j));
            } catch (const Error& e) {
                message = e.what();
            }
            CAPTURE(fragment);
            CHECK(message.find(fragment) != std::string::npos);
        };
        expect([](json& j) { j.erase("seed"); }, "seed is mandatory");
        expect([](json& j) { j["seed"] = -3; }, "seed must be");
        expect([](json& j) { j["bogus"] = 1; }, "unknown key 'bogus'");
        expect([](json& j) { j["manifest"] = "/nonexistent/manifest.csv"; }, "manifest not found");
        expect([](json& j) { j["backends"] = json::array(); }, "no backends");
        expect([](json& j) { j["backends"][1]["name"] = "alpha"; }, "duplicate backend name");
        expect([](json& j) { j["classifiers"] = json::array({"knn", "knn"}); }, "listed twice");
        expect([](json& j) { j["classifiers"] = json::array({"svm"}); }, "unknown classifier");
        expect([](json& j) { j["learning_curve"]["sizes"] = json::array({24, 12}); }, "strictly increasing");
        expect([](json& j) { j["learning_curve"]["sizes"] = json::array({2}); }, ">= 3");
        expect([](json& j) { j["cv"]["folds"] = 1; }, "cv.folds");
        expect([](json& j) { j["keep_categories"] = json::array({"other"}); }, "cannot be classified");
        expect([](json& j) { j["comparison"]["backend_a"] = "gamma"; }, "gamma");
        expect([](json& j) { j["delimiter"] = "ab"; }, "delimiter");
        expect([](json& j) { j["grids"]["k_nearest_neighbor"] = json::array({json{{"k", 0}}}); }, "k");
        CHECK(config_error(base).empty());
    }

    TEST_CASE("a missing manifest fails before any output is written") {
        testing::TempDir dir("nomanifest");
        auto j = small_config(dir);
        j["manifest"] = dir / "absent.csv";
        try {
            run_pipeline(parse_run_config(j));
            FAIL("run_pipeline accepted a missing manifest");
        } catch (const StageError& e) {
            CHECK(e.stage() == "config");
        }
        CHECK_FALSE(fs::exists(dir / "out"));
    }

    TEST_CASE("relative paths resolve against the configuration file") {
        testing::TempDir dir("relcfg");
        auto j = small_config(dir);
        j["manifest"] = "manifest.csv";
        j["output_dir"] = "results";
        write_text_file(dir / "config.json", j.dump());
        const auto cfg = load_run_config(dir / "config.json");
        CHECK(fs::path(cfg.manifest) == fs::path(dir / "manifest.csv"));
        CHECK(fs::path(cfg.output_dir) == fs::path(dir / "results"));
        CHECK(fs::path(cfg.resolved_cache_dir()) == fs::path(dir / "results") / "cache");
        CHECK_NOTHROW(validate(cfg));
    }

    TEST_CASE("predictions round trip and reject malformed files") {
        testing::TempDir dir("pred");
        Predictions p{{"s1", "s2", "s3"}, {0, 2, 1}, Matrix(3, 3)};
        p.proba(0, 0) = 0.7;
        p.proba(0, 1) = 0.2;
        p.proba(0, 2) = 0.1;
        p.proba(1, 2) = 1.0;
        p.proba(2, 0) = 1.0 / 3.0;
        p.proba(2, 1) = 1.0 / 3.0;
        p.proba(2, 2) = 1.0 / 3.0;
        write_predictions(dir / "p.csv", p);
        const auto back = read_predictions(dir / "p.csv");
        CHECK(back.slide_ids == p.slide_ids);
        CHECK(back.labels == p.labels);
        CHECK(back.proba == p.proba);

        write_text_file(dir / "bad.csv", "slide_id,label,basaloid,melanocytic,squamous\ns1,other,0,0,1\n");
        CHECK_THROWS_AS(read_predictions(dir / "bad.csv"), Error);
        write_text_file(dir / "short.csv", "slide_id,label,basaloid,melanocytic,squamous\ns1,basaloid,0,1\n");
        CHECK_THROWS_AS(read_predictions(dir / "short.csv"), Error);
        CHECK_THROWS_AS(read_predictions(dir / "missing.csv"), Error);
    }

    TEST_CASE("compare_models requires paired test sets") {
        testing::TempDir dir("cmp");
        const std::vector<int> y{0, 1, 2, 0, 1, 2, 0, 1, 2};
        std::vector<std::string> ids;
        for (std::size_t i = 0; i < y.size(); ++i) ids.push_back("slide" + std::to_string(i));
        fs::create_directories(dir / "a/predictions");
        fs::create_directories(dir / "b/predictions");
        Predictions a{ids, y, onehot(y, 0.8)};
        a.proba(0, 0) = 0.3;
        a.proba(0, 1) = 0.4;
        a.proba(0, 2) = 0.3;
        write_predictions(dir / "a/predictions/logistic_regression.csv", a);
        write_predictions(dir / "b/predictions/logistic_regression.csv", a);

        const auto self = compare_models(dir / "a", dir / "b", ClassifierKind::LogisticRegression, 100, 1);
        REQUIRE(self.per_category.size() == 3);
        for (const auto& c : self.per_category) {
            CHECK(c.delong.z == 0.0);
            CHECK(c.delong.p == 1.0);
            CHECK(c.venkatraman.statistic == 0.0);
            CHECK(c.venkatraman.p == 1.0);
        }
        CHECK(self.backend_a == "a");
        CHECK(self.backend_b == "b");

        auto shuffled = a;
        std::swap(shuffled.slide_ids[0], shuffled.slide_ids[1]);
        std::swap(shuffled.labels[0], shuffled.labels[1]);
        write_predictions(dir / "b/predictions/logistic_regression.csv", shuffled);
        CHECK_THROWS_WITH_AS(compare_models(dir / "a", dir / "b", ClassifierKind::LogisticRegression, 100, 1),
                             doctest::Contains("unpaired test sets"), Error);
        CHECK_THROWS_AS(compare_models(dir / "a", dir / "b", ClassifierKind::NaiveBayes, 100, 1), Error);
    }

    TEST_CASE("learning curves") {
        CHECK(default_learning_curve_sizes(498) == std::vector<std::size_t>{20, 40, 60, 80, 100, 140, 200, 300, 400, 498});
        CHECK(default_learning_curve_sizes(50) == std::vector<std::size_t>{20, 40, 50});

        const auto blobs = testing::make_blobs({20, 20, 20}, 4, 4.0, 5);
        const auto probe = testing::make_blobs({10, 10, 10}, 4, 4.0, 6);
        const auto to_design = [](const testing::Blobs& b, EffectiveSubset s) {
            DesignMatrix dm;
            dm.n = b.x.rows;
            dm.d = b.x.cols;
            for (double v : b.x.data) dm.rows.push_back(static_cast<float>(v));
            for (std::size_t i = 0; i < dm.n; ++i) {
                dm.labels.push_back(kClassOrder[static_cast<std::size_t>(b.y[i])]);
                dm.subsets.push_back(s);
                dm.slide_ids.push_back((s == EffectiveSubset::Train ? "tr" : "te") + std::to_string(i));
            }
            return dm;
        };
        const auto train = to_design(blobs, EffectiveSubset::Train);
        const auto test = to_design(probe, EffectiveSubset::Test);
        const ClassifierSpec spec{ClassifierKind::LogisticRegression, {}, 3};

        const auto full = learning_curve(train, test, spec, {60}, 3, 9);
        REQUIRE(full.sizes == std::vector<std::size_t>{60});
        const auto model = dermbench::train(spec, train);
        const auto pred = model.predict(test.features());
        const auto labels = test.class_indices();
        std::size_t ok = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) ok += pred[i] == labels[i] ? 1 : 0;
        CHECK(full.test_accuracy[0] == static_cast<double>(ok) / static_cast<double>(labels.size()));
        for (double v : full.test_runs[0]) CHECK(v == full.test_accuracy[0]);

        const auto curve = learning_curve(train, test, spec, {6, 30}, 2, 9);
        CHECK(curve.sizes == std::vector<std::size_t>{6, 30, 60});
        CHECK(curve.test_runs[0].size() == 2);
        CHECK(learning_curve(train, test, spec, {6, 30}, 2, 9).test_runs == curve.test_runs);
        const auto back = learning_curve_from_json(json::parse(to_json(curve).dump()));
        CHECK(back.sizes == curve.sizes);
        CHECK(back.test_accuracy == curve.test_accuracy);

        CHECK_THROWS_AS(learning_curve(train, test, spec, {30, 6}, 2, 9), Error);
        CHECK_THROWS_AS(learning_curve(train, test, spec, {2}, 2, 9), Error);
        CHECK_THROWS_AS(learning_curve(train, test, spec, {61}, 2, 9), Error);
        CHECK_THROWS_AS(learning_curve(train, test, spec, {30}, 0, 9), Error);

        testing::TempDir dir("lc");
        CHECK_NOTHROW(emit_plots(full, dir.str()));
        const auto svg = read_text_file(dir / "learning_curve.svg");
        CHECK(svg.find("<svg") != std::string::npos);
        CHECK(polyline_points(svg, "test").size() == 1);
    }
}

TEST_SUITE("tracker") {
    TEST_CASE("events round trip through the JSONL log") {
        testing::TempDir dir("events");
        {
            TrackerOptions opts;
            opts.log_path = dir / "events.jsonl";
            Tracker t("run-1", opts);
            for (int i = 0; i < 1000; ++i) t.log("train", i % 2 == 0 ? "loss" : "accuracy", i * 0.5);
            CHECK_THROWS_AS(t.track({"", "", "train", "loss", 0.0, 3}), Error);
            CHECK(t.webhook_failures() == 0);
        }
        const auto events = read_events(dir / "events.jsonl");
        REQUIRE(events.size() == 1000);
        std::map<std::string, std::uint64_t> last;
        for (std::size_t i = 0; i < events.size(); ++i) {
            const auto& e = events[i];
            CHECK(e.run_id == "run-1");
            CHECK(e.value == i * 0.5);
            CHECK(std::regex_match(e.ts, std::regex(R"(\d{4}-\d\d-\d\dT\d\d:\d\d:\d\d\.\d{3}Z)")));
            if (last.contains(e.metric)) CHECK(e.step == last[e.metric] + 1);
            last[e.metric] = e.step;
            CHECK(event_from_json(to_json(e)) == e);
        }
        std::ifstream in(dir / "events.jsonl");
        std::size_t lines = 0;
        for (std::string line; std::getline(in, line);) ++lines;
        CHECK(lines == 1000);

        write_text_file(dir / "bad.jsonl", "{\"run_id\": 1}\n");
        CHECK_THROWS_AS(read_events(dir / "bad.jsonl"), Error);
    }

    TEST_CASE("a failing webhook only warns") {
        httplib::Server server;
        std::atomic<int> hits{0};
        server.Post("/hook", [&](const httplib::Request&, httplib::Response& res) {
            ++hits;
            res.status = 500;
        });
        const int port = server.bind_to_any_port("127.0.0.1");
        REQUIRE(port > 0);
        std::thread th([&] { server.listen_after_bind(); });
        server.wait_until_ready();

        testing::TempDir dir("hook");
        std::vector<std::string> warnings;
        set_warning_sink([&](std::string_view w) { warnings.emplace_back(w); });
        {
            TrackerOptions opts{dir / "events.jsonl", "http://127.0.0.1:" + std::to_string(port) + "/hook"};
            opts.base_delay = std::chrono::milliseconds(1);
            Tracker t("run-2", opts);
            CHECK_NOTHROW(t.log("train", "accuracy", 0.5));
            CHECK_NOTHROW(t.log("train", "accuracy", 0.6));
            CHECK(t.webhook_failures() == 2);
            CHECK(t.warnings().size() == 2);
        }
        set_warning_sink(nullptr);
        server.stop();
        th.join();
        CHECK(hits == 6);  // three attempts per event
        CHECK(warnings.size() == 2);
        CHECK(read_events(dir / "events.jsonl").size() == 2);
    }

    TEST_CASE("a reachable webhook receives every event") {
        httplib::Server server;
        std::mutex m;
        std::vector<std::string> bodies;
        server.Post("/hook", [&](const httplib::Request& req, httplib::Response& res) {
            std::lock_guard lock(m);
            bodies.push_back(req.body);
            res.status = 200;
        });
        const int port = server.bind_to_any_port("127.0.0.1");
        std::thread th([&] { server.listen_after_bind(); });
        server.wait_until_ready();
        testing::TempDir dir("hook-ok");
        {
            Tracker t("run-3", {dir / "events.jsonl", "http://127.0.0.1:" + std::to_string(port) + "/hook"});
            t.log("eval", "auroc", 0.9);
            CHECK(t.webhook_failures() == 0);
        }
        server.stop();
        th.join();
        REQUIRE(bodies.size() == 1);
        CHECK(event_from_json(json::parse(bodies[0])).metric == "auroc");
    }
}

TEST_SUITE("plots") {
    TEST_CASE("a perfect ROC passes through the top-left corner") {
        const std::vector<int> y{0, 1, 2, 0, 1, 2};
        const auto report = classification_report(y, onehot(y, 0.9));
        const auto svg = render_roc_svg(report);
        CHECK(svg.find("<svg") != std::string::npos);
        CHECK(svg.find("</svg>") != std::string::npos);
        const PlotFrame frame;
        for (const char* label : {"basaloid", "melanocytic", "squamous"}) {
            const auto pts = polyline_points(svg, std::string(label) + "[^\"]*");
            REQUIRE_FALSE(pts.empty());
            bool corner = false;
            for (const auto& [x, yy] : pts) corner = corner || (std::abs(x - frame.px(0.0)) < 1e-3 && std::abs(yy - frame.py(1.0)) < 1e-3);
            CHECK(corner);
        }
        const auto pr = render_pr_svg(report);
        CHECK(pr.find("<polyline") != std::string::npos);
    }

    TEST_CASE("labels are escaped and degenerate inputs still render") {
        LinePlot plot;
        plot.title = "a < b & c";
        plot.series.push_back({"x\"y", {0.5}, {0.5}, true, false});
        const auto svg = render_svg(plot);
        CHECK(svg.find("a &lt; b &amp; c") != std::string::npos);
        CHECK(svg.find("x\"y") == std::string::npos);
        const auto single = render_learning_curve_svg("lc", {498}, {1.0}, {0.9});
        CHECK(single.find("<svg") != std::string::npos);
    }
}

TEST_SUITE("pipeline") {
    TEST_CASE("a small end-to-end run is complete and reproducible") {
        testing::TempDir dir("e2e");
        const auto cfg = parse_run_config(small_config(dir));
        const auto summary = run_pipeline(cfg);
        const std::string out = dir / "out";
        CHECK_FALSE(fs::exists(out + "/INCOMPLETE"));
        REQUIRE(summary.backends.size() == 2);
        for (const auto& b : summary.backends) {
            CHECK(b.test_ids.size() == 26);
            CHECK(b.classifiers.size() == 3);
            for (const char* kind : {"naive_bayes", "logistic_regression", "k_nearest_neighbor"}) {
                for (const char* sub : {"/models/", "/cv/", "/reports/", "/predictions/"}) {
                    const std::string ext = std::string(sub) == "/models/" ? ".modl" : std::string(sub) == "/predictions/" ? ".csv" : ".json";
                    CHECK(fs::exists(out + "/" + b.backend + sub + kind + ext));
                }
                CHECK(fs::exists(out + "/" + b.backend + "/plots/" + kind + "/roc.svg"));
            }
            CHECK(fs::exists(out + "/" + b.backend + "/learning_curve.svg"));
            CHECK(fs::exists(out + "/design/" + b.backend + ".dmat"));
        }
        const auto run = json::parse(read_text_file(out + "/run.json"));
        CHECK(run["status"] == "complete");
        CHECK(run["run_id"] == run_id(cfg));

        const auto table2 = json::parse(read_text_file(out + "/table2_accuracy.json"));
        CHECK(table2["rows"].size() == 3);
        CHECK(table2["rows"][0]["key"] == "k_nearest_neighbor");
        const auto table3 = json::parse(read_text_file(out + "/table3_f1.json"));
        CHECK(table3["backends"]["alpha"].size() == 3);

        // Separable backend against a near-chance one.
        REQUIRE(summary.comparison.has_value());
        const auto& cmp = *summary.comparison;
        CHECK(cmp.backend_a == "alpha");
        for (const auto& c : cmp.per_category) CHECK(c.delong.auc_a > c.delong.auc_b);
        const auto& lr = summary.backends[0].classifiers.at(ClassifierKind::LogisticRegression);
        CHECK(lr.report.accuracy > 0.9);

        // The learning-curve point at the full training size is the pipeline's own model.
        const auto& lc = summary.learning_curves.at("alpha");
        CHECK(lc.sizes.back() == 40);
        CHECK(lc.test_accuracy.back() == lr.report.accuracy);

        const auto events = read_events(out + "/events.jsonl");
        CHECK_FALSE(events.empty());

        const auto first = snapshot(out);
        fs::remove_all(out);
        run_pipeline(cfg);
        const auto second = snapshot(out);
        CHECK(first.size() == second.size());
        for (const auto& [name, bytes] : first) {
            CAPTURE(name);
            REQUIRE(second.contains(name));
            CHECK(second.at(name) == bytes);
        }

        // A rerun over existing outputs reuses the cache and reproduces the reports.
        run_pipeline(cfg);
        CHECK(snapshot(out) == second);
    }

    TEST_CASE("thread count does not change results") {
        testing::TempDir dir("threads");
        auto j = small_config(dir);
        j["threads"] = 1;
        j["learning_curve"]["enabled"] = false;
        run_pipeline(parse_run_config(j));
        const auto one = snapshot(dir / "out");
        fs::remove_all(dir / "out");
        j["threads"] = 4;
        run_pipeline(parse_run_config(j));
        auto four = snapshot(dir / "out");
        CHECK(one.size() == four.size());
        for (const auto& [name, bytes] : one) {
            if (name == "run.json") continue;  // records the configured thread count
            CAPTURE(name);
            CHECK(four[name] == bytes);
        }
    }
}
