#include "dermbench/fixture.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

namespace dermbench {

namespace {

// Largest-remainder apportionment of `total` in proportion to `weights`.
std::vector<std::size_t> apportion(std::size_t total, const std::vector<std::size_t>& weights) {
    const std::size_t sum = std::accumulate(weights.begin(), weights.end(), std::size_t{0});
    std::vector<std::size_t> out(weights.size());
    std::vector<std::pair<std::size_t, std::size_t>> remainders;  // (remainder numerator, index)
    std::size_t given = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        out[i] = total * weights[i] / sum;
        given += out[i];
        remainders.push_back({total * weights[i] % sum, i});
    }
    std::stable_sort(remainders.begin(), remainders.end(), [](auto a, auto b) { return a.first > b.first; });
    for (std::size_t i = 0; given < total; ++i, ++given) ++out[remainders[i].second];
    return out;
}

const std::array<std::vector<const char*>, 4> kDiagTypes{{
    {"basal cell carcinoma, nodular", "basal cell carcinoma, superficial", "basal cell carcinoma, infiltrative"},
    {"compound nevus", "dysplastic nevus", "melanoma in situ", "intradermal nevus"},
    {"squamous cell carcinoma in situ", "invasive squamous cell carcinoma", "actinic keratosis"},
    {"seborrheic keratosis", "dermatitis", "scar"},
}};

}  // namespace

Manifest make_fixture_manifest(std::uint64_t seed, const FixtureShape& shape) {
    const std::size_t n_cls = shape.category_counts[0] + shape.category_counts[1] + shape.category_counts[2];
    if (shape.train + shape.validation + shape.test != n_cls) {
        throw Error("fixture: subset sizes must add up to the classification slide count");
    }
    const std::vector<std::size_t> cls(shape.category_counts.begin(), shape.category_counts.begin() + 3);
    const auto train = apportion(shape.train, cls);
    std::vector<std::size_t> held(3);
    for (std::size_t k = 0; k < 3; ++k) held[k] = cls[k] - train[k];
    const auto validation = apportion(shape.validation, held);

    Rng rng(derive_seed(seed, "fixture.manifest"));
    Manifest m;
    for (std::size_t c = 0; c < 4; ++c) {
        for (std::size_t i = 0; i < shape.category_counts[c]; ++i) {
            SlideMeta s;
            s.category = static_cast<Category>(c);
            if (c < 3) {
                s.subset = i < train[c] ? Subset::Train : i < train[c] + validation[c] ? Subset::Validation : Subset::Test;
            } else {
                s.subset = i % 10 < 7 ? Subset::Train : i % 10 < 8 ? Subset::Validation : Subset::Test;
            }
            const auto& types = kDiagTypes[c];
            s.diag_type = types[rng.below(types.size())];
            s.diag_score = 100;
            s.staining = rng.uniform() < 0.9 ? "H&E" : (rng.uniform() < 0.5 ? "H&E recuts" : "H&E C-G");
            m.records.push_back(std::move(s));
        }
    }
    rng.shuffle(m.records);
    for (std::size_t i = 0; i < m.records.size(); ++i) {
        auto& s = m.records[i];
        char buf[32];
        std::snprintf(buf, sizeof buf, "WSI_%04zu", i + 1);
        s.file = std::string(buf) + ".tiff";
        std::snprintf(buf, sizeof buf, "C%04zu", i / 2 + 1);
        s.case_id = buf;
        s.block = std::string(1, static_cast<char>('A' + i % 4));
        s.sub_block = s.block + std::to_string(1 + i % 3);
        s.fullpath = "slides/" + s.file;
        s.line = i + 2;
    }
    return m;
}

}  // namespace dermbench
