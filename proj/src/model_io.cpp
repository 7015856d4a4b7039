#include "dermbench/learners.hpp"

namespace dermbench {

namespace {

void put_matrix(ByteWriter& w, const Matrix& m) {
    w.u32(static_cast<std::uint32_t>(m.rows));
    w.u32(static_cast<std::uint32_t>(m.cols));
    for (double v : m.data) w.f64(v);
}

Matrix get_matrix(ByteReader& r) {
    const std::size_t rows = r.u32();
    const std::size_t cols = r.u32();
    if (cols != 0 && rows > r.remaining() / 8 / cols) throw FormatError("truncated payload");
    Matrix m(rows, cols);
    for (auto& v : m.data) v = r.f64();
    return m;
}

void put_doubles(ByteWriter& w, std::span<const double> v) {
    w.u32(static_cast<std::uint32_t>(v.size()));
    for (double x : v) w.f64(x);
}

std::vector<double> get_doubles(ByteReader& r) {
    const std::size_t n = r.u32();
    if (n > r.remaining() / 8) throw FormatError("truncated payload");
    std::vector<double> v(n);
    for (auto& x : v) x = r.f64();
    return v;
}

template <std::size_t N>
void put_array(ByteWriter& w, const std::array<double, N>& a) {
    for (double x : a) w.f64(x);
}

template <std::size_t N>
std::array<double, N> get_array(ByteReader& r) {
    std::array<double, N> a{};
    for (auto& x : a) x = r.f64();
    return a;
}

void put_tree(ByteWriter& w, const Tree& t) {
    w.u32(static_cast<std::uint32_t>(t.nodes.size()));
    for (const auto& n : t.nodes) {
        w.u32(static_cast<std::uint32_t>(n.feature));
        w.f64(n.threshold);
        w.u32(static_cast<std::uint32_t>(n.left));
        w.u32(static_cast<std::uint32_t>(n.right));
        put_array(w, n.value);
    }
}

Tree get_tree(ByteReader& r, std::size_t dim) {
    constexpr std::size_t kNodeBytes = 4 + 8 + 4 + 4 + 8 * kNumClasses;
    const std::size_t count = r.u32();
    if (count == 0) throw FormatError("empty tree");
    if (count > r.remaining() / kNodeBytes) throw FormatError("truncated payload");
    Tree t;
    t.nodes.resize(count);
    for (auto& n : t.nodes) {
        n.feature = static_cast<std::int32_t>(r.u32());
        n.threshold = r.f64();
        n.left = static_cast<std::int32_t>(r.u32());
        n.right = static_cast<std::int32_t>(r.u32());
        n.value = get_array<kNumClasses>(r);
    }
    // Children must point forward so traversal always terminates.
    for (std::size_t i = 0; i < count; ++i) {
        const auto& n = t.nodes[i];
        if (n.is_leaf()) continue;
        const auto in_range = [&](std::int32_t c) { return c > static_cast<std::int32_t>(i) && static_cast<std::size_t>(c) < count; };
        if (static_cast<std::size_t>(n.feature) >= dim || !in_range(n.left) || !in_range(n.right)) {
            throw FormatError("malformed tree node");
        }
    }
    return t;
}

}  // namespace

std::vector<std::uint8_t> encode_model(const TrainedModel& model) {
    ByteWriter w;
    w.raw("MODL");
    w.u32(kModelVersion);
    const auto& spec = model.spec();
    w.u8(static_cast<std::uint8_t>(spec.kind));
    w.u64(spec.seed);
    w.u32(static_cast<std::uint32_t>(model.dim()));
    w.u32(static_cast<std::uint32_t>(spec.params.size()));
    for (const auto& [name, value] : spec.params) {
        w.str16(name);
        w.f64(value);
    }
    struct Visitor {
        ByteWriter& w;
        void operator()(const LogisticParams& p) const {
            put_doubles(w, p.feature_mean);
            put_doubles(w, p.feature_scale);
            put_matrix(w, p.weights);
            put_doubles(w, p.intercept);
            w.u64(p.iterations);
            w.u8(p.converged ? 1 : 0);
        }
        void operator()(const TreeParamsModel& p) const { put_tree(w, p.tree); }
        void operator()(const ForestParams& p) const {
            w.u32(static_cast<std::uint32_t>(p.trees.size()));
            for (const auto& t : p.trees) put_tree(w, t);
        }
        void operator()(const BoostingParams& p) const {
            w.f64(p.learning_rate);
            put_array(w, p.init);
            w.u32(static_cast<std::uint32_t>(p.stages.size()));
            for (const auto& stage : p.stages) {
                for (const auto& t : stage) put_tree(w, t);
            }
            put_doubles(w, p.training_loss);
        }
        void operator()(const AdaBoostParams& p) const {
            w.u32(static_cast<std::uint32_t>(p.learners.size()));
            for (const auto& t : p.learners) put_tree(w, t);
            put_doubles(w, p.alphas);
            put_array(w, p.prior);
            put_doubles(w, p.weighted_errors);
        }
        void operator()(const NaiveBayesParams& p) const {
            put_array(w, p.log_prior);
            put_matrix(w, p.means);
            put_matrix(w, p.variances);
        }
        void operator()(const KnnParams& p) const {
            w.u64(p.k);
            put_matrix(w, p.x);
            w.u32(static_cast<std::uint32_t>(p.y.size()));
            for (int label : p.y) w.u8(static_cast<std::uint8_t>(label));
        }
    };
    std::visit(Visitor{w}, model.params());
    w.crc_since(0);
    return w.take();
}

TrainedModel decode_model(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.expect_magic("MODL");
    const auto version = r.u32();
    if (version != kModelVersion) throw FormatError("version mismatch: model file version " + std::to_string(version));
    ClassifierSpec spec;
    const auto code = r.u8();
    if (code > static_cast<std::uint8_t>(ClassifierKind::NaiveBayes)) throw FormatError("unknown classifier code");
    spec.kind = static_cast<ClassifierKind>(code);
    spec.seed = r.u64();
    const std::size_t dim = r.u32();
    const std::size_t n_params = r.u32();
    for (std::size_t i = 0; i < n_params; ++i) {
        auto name = r.str16();
        spec.params[name] = r.f64();
    }

    ModelParams params;
    switch (spec.kind) {
        case ClassifierKind::LogisticRegression: {
            LogisticParams p;
            p.feature_mean = get_doubles(r);
            p.feature_scale = get_doubles(r);
            p.weights = get_matrix(r);
            p.intercept = get_doubles(r);
            p.iterations = r.u64();
            p.converged = r.u8() != 0;
            if (p.feature_mean.size() != dim || p.feature_scale.size() != dim || p.weights.rows != dim ||
                p.weights.cols != kNumClasses || p.intercept.size() != kNumClasses) {
                throw FormatError("logistic model shape mismatch");
            }
            params = std::move(p);
            break;
        }
        case ClassifierKind::DecisionTree:
            params = TreeParamsModel{get_tree(r, dim)};
            break;
        case ClassifierKind::RandomForest: {
            ForestParams p;
            const std::size_t n = r.u32();
            if (n == 0) throw FormatError("empty forest");
            for (std::size_t i = 0; i < n; ++i) p.trees.push_back(get_tree(r, dim));
            params = std::move(p);
            break;
        }
        case ClassifierKind::GradientBoosting: {
            BoostingParams p;
            p.learning_rate = r.f64();
            p.init = get_array<kNumClasses>(r);
            const std::size_t n = r.u32();
            for (std::size_t i = 0; i < n; ++i) {
                std::array<Tree, kNumClasses> stage;
                for (auto& t : stage) t = get_tree(r, dim);
                p.stages.push_back(std::move(stage));
            }
            p.training_loss = get_doubles(r);
            params = std::move(p);
            break;
        }
        case ClassifierKind::AdaBoost: {
            AdaBoostParams p;
            const std::size_t n = r.u32();
            for (std::size_t i = 0; i < n; ++i) p.learners.push_back(get_tree(r, dim));
            p.alphas = get_doubles(r);
            p.prior = get_array<kNumClasses>(r);
            p.weighted_errors = get_doubles(r);
            if (p.alphas.size() != p.learners.size()) throw FormatError("AdaBoost weight count mismatch");
            params = std::move(p);
            break;
        }
        case ClassifierKind::NaiveBayes: {
            NaiveBayesParams p;
            p.log_prior = get_array<kNumClasses>(r);
            p.means = get_matrix(r);
            p.variances = get_matrix(r);
            if (p.means.rows != kNumClasses || p.means.cols != dim || p.variances.rows != kNumClasses ||
                p.variances.cols != dim) {
                throw FormatError("naive Bayes shape mismatch");
            }
            params = std::move(p);
            break;
        }
        case ClassifierKind::KNearestNeighbor: {
            KnnParams p;
            p.k = r.u64();
            p.x = get_matrix(r);
            const std::size_t n = r.u32();
            if (n != p.x.rows || p.x.cols != dim || p.k == 0) throw FormatError("kNN shape mismatch");
            p.y.resize(n);
            for (auto& label : p.y) {
                label = r.u8();
                if (label >= static_cast<int>(kNumClasses)) throw FormatError("kNN label out of range");
            }
            params = std::move(p);
            break;
        }
    }
    r.check_crc_since(0);
    if (r.remaining() != 0) throw FormatError("trailing bytes after model payload");
    return TrainedModel(std::move(spec), dim, std::move(params));
}

void save_model(const TrainedModel& model, const std::string& path) { write_file_bytes(path, encode_model(model)); }

TrainedModel load_model(const std::string& path) { return decode_model(read_file_bytes(path)); }

}  // namespace dermbench
