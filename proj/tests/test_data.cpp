#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "comet/dataset.hpp"
#include "comet/error.hpp"
#include "comet/synthetic.hpp"
#include "test_util.hpp"

using namespace comet;
using comet::testing::read_file;
using comet::testing::temp_dir;
using comet::testing::write_file;

namespace {

Dataset tiny_dataset() {
    Dataset ds;
    ds.features = Matrix::from_rows({{1, 2}, {3, 4}, {5, 6}, {7, 8}, {9, 10}, {11, 12}});
    ds.labels = {0, 1, 2, 0, 1, 2};
    ds.class_names = {"A", "B", "C"};
    ds.feature_names = {"f_0", "f_1"};
    ds.row_ids = {0, 1, 2, 3, 4, 5};
    return ds;
}

}  // namespace

TEST_CASE("minimal CSV loads with classes from sorted names") {
    const auto dir = temp_dir("data_minimal");
    write_file(dir / "f.csv", "g0,g1,g2\n1,2,3\n4.5,-6,7e-1\n");
    write_file(dir / "l.csv", "B\nA\n");
    const Dataset ds = load_dataset(dir / "f.csv", dir / "l.csv");
    CHECK(ds.size() == 2);
    CHECK(ds.dim() == 3);
    CHECK(ds.num_classes() == 2);
    CHECK(ds.class_names == std::vector<std::string>{"A", "B"});
    CHECK(ds.labels == std::vector<ClassId>{1, 0});
    CHECK(ds.feature_names == std::vector<std::string>{"g0", "g1", "g2"});
    CHECK(ds.features(1, 2) == 0.7);
    CHECK(ds.class_id("B") == 1);
    CHECK_THROWS_AS(ds.class_id("Z"), ValidationError);
}

TEST_CASE("bad cells and ragged rows are parse errors citing the line") {
    const auto dir = temp_dir("data_bad");
    write_file(dir / "l.csv", "A\nB\n");
    auto message_for = [&](const std::string& csv) -> std::string {
        write_file(dir / "f.csv", csv);
        try {
            load_dataset(dir / "f.csv", dir / "l.csv");
        } catch (const ParseError& e) {
            return e.what();
        }
        return "";
    };
    CHECK(message_for("a,b\n1,2\n3,NaN\n").find(":3:") != std::string::npos);
    CHECK(message_for("a,b\n1,2\n3,inf\n").find(":3:") != std::string::npos);
    CHECK(message_for("a,b\n1,2,3\n4,5\n").find(":2:") != std::string::npos);
    CHECK(message_for("a,b\n1,x\n3,4\n").find(":2:") != std::string::npos);
    write_file(dir / "f.csv", "a,b\n1,2\n");
    CHECK_THROWS_AS(load_dataset(dir / "f.csv", dir / "l.csv"), ParseError);
    CHECK_THROWS_AS(load_dataset(dir / "missing.csv", dir / "l.csv"), IoError);
}

TEST_CASE("write then load reproduces features and labels exactly") {
    RngStream rng(1);
    SyntheticSpec spec;
    spec.n_classes = 4;
    spec.per_class = 7;
    const Dataset ds = make_synthetic(spec).dataset;
    Dataset odd = ds;
    for (double& v : odd.features.values()) v = v * rng.normal() * 1e-7 + rng.uniform();
    const auto dir = temp_dir("data_roundtrip");
    for (const Dataset* d : std::vector<const Dataset*>{&ds, &odd}) {
        write_dataset(*d, dir / "f.csv", dir / "l.csv");
        const Dataset back = load_dataset(dir / "f.csv", dir / "l.csv");
        CHECK(back.features == d->features);
        CHECK(back.labels == d->labels);
        CHECK(back.class_names == d->class_names);
        CHECK(back.feature_names == d->feature_names);
    }
}

TEST_CASE("split_dataset partitions rows and re-indexes classes") {
    const Dataset ds = tiny_dataset();
    const SplitDatasets s = split_dataset(ds, SplitSpec{{0}, {1}, {2}});
    CHECK(s.train.class_names == std::vector<std::string>{"A"});
    CHECK(s.val.row_ids == std::vector<std::size_t>{1, 4});
    CHECK(s.test.features == Matrix::from_rows({{5, 6}, {11, 12}}));
    CHECK(s.test.labels == std::vector<ClassId>{0, 0});
    CHECK_THROWS_AS(split_dataset(ds, SplitSpec{{0, 1}, {1}, {2}}), ValidationError);
    CHECK_THROWS_AS(split_dataset(ds, SplitSpec{{0}, {}, {2}}), ValidationError);
    CHECK_THROWS_AS(split_dataset(ds, SplitSpec{{0}, {1}, {5}}), ValidationError);
}

TEST_CASE("random class partitions conserve every row") {
    SyntheticSpec spec;
    spec.n_classes = 12;
    spec.per_class = 5;
    const Dataset ds = make_synthetic(spec).dataset;
    RngStream rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<ClassId> ids(12);
        for (ClassId k = 0; k < 12; ++k) ids[k] = k;
        rng.shuffle(ids);
        const std::size_t a = 1 + rng.index(9), b = 1 + rng.index(10 - a);
        SplitSpec spec_split{{ids.begin(), ids.begin() + a},
                             {ids.begin() + a, ids.begin() + a + b},
                             {ids.begin() + a + b, ids.end()}};
        const SplitDatasets s = split_dataset(ds, spec_split);
        CHECK(s.train.size() + s.val.size() + s.test.size() == ds.size());
        std::multiset<std::pair<std::size_t, std::string>> seen;
        for (const Dataset* part : std::vector<const Dataset*>{&s.train, &s.val, &s.test}) {
            for (std::size_t r = 0; r < part->size(); ++r) {
                const std::size_t src = part->row_ids[r];
                CHECK(part->features.row(r)[0] == ds.features.row(src)[0]);
                seen.insert({src, part->class_names[part->labels[r]]});
            }
        }
        std::multiset<std::pair<std::size_t, std::string>> want;
        for (std::size_t r = 0; r < ds.size(); ++r) want.insert({r, ds.class_names[ds.labels[r]]});
        CHECK(seen == want);
    }
}

TEST_CASE("split spec files round-trip and reject unknown names") {
    const Dataset ds = tiny_dataset();
    const auto dir = temp_dir("data_splits");
    write_split_spec(SplitSpec{{2}, {0}, {1}}, ds, dir / "s.json");
    const SplitSpec back = load_split_spec(dir / "s.json", ds);
    CHECK(back.train == std::vector<ClassId>{2});
    CHECK(back.test == std::vector<ClassId>{1});
    write_file(dir / "bad.json", R"({"train": ["A"], "val": ["B"], "test": ["Q"]})");
    CHECK_THROWS_AS(load_split_spec(dir / "bad.json", ds), ValidationError);
    write_file(dir / "nokey.json", R"({"train": ["A"], "val": ["B"]})");
    CHECK_THROWS_AS(load_split_spec(dir / "nokey.json", ds), ParseError);
}

TEST_CASE("standardizer fitted on one split zero-centres it") {
    Dataset ds = tiny_dataset();
    const Standardizer st = Standardizer::fit(ds);
    st.apply(ds);
    for (std::size_t c = 0; c < ds.dim(); ++c) {
        double mean = 0.0, var = 0.0;
        for (std::size_t r = 0; r < ds.size(); ++r) mean += ds.features(r, c) / 6.0;
        for (std::size_t r = 0; r < ds.size(); ++r) var += ds.features(r, c) * ds.features(r, c) / 6.0;
        CHECK(std::abs(mean) < 1e-12);
        CHECK(var == doctest::Approx(1.0));
    }
    Dataset constant = tiny_dataset();
    for (std::size_t r = 0; r < constant.size(); ++r) constant.features(r, 1) = 3.0;
    const Standardizer c = Standardizer::fit(constant);
    CHECK(c.scale[1] == 1.0);
}

TEST_CASE("synthetic data has the requested shape and is seed-deterministic") {
    const SyntheticSpec spec;
    const SyntheticData a = make_synthetic(spec);
    const SyntheticData b = make_synthetic(spec);
    CHECK(a.dataset.size() == spec.n_classes * spec.per_class);
    CHECK(a.dataset.dim() == 64);
    CHECK(a.concepts.size() == spec.n_blocks);
    CHECK(a.dataset.features == b.dataset.features);
    CHECK(a.dataset.labels == b.dataset.labels);
    for (std::size_t j = 0; j < spec.n_blocks; ++j) {
        CHECK(a.concepts[j].popcount() == spec.block_size);
        CHECK(a.concepts[j].indices().front() == j * spec.block_size);
    }
    SyntheticSpec other = spec;
    other.seed = 8;
    CHECK(!(make_synthetic(other).dataset.features == a.dataset.features));
}

TEST_CASE("synthetic class means are ±signal on the designated blocks only") {
    for (std::size_t bpc : {1, 2}) {
        SyntheticSpec spec;
        spec.blocks_per_class = bpc;
        const SyntheticData d = make_synthetic(spec);
        for (std::size_t k = 0; k < spec.n_classes; ++k) {
            CHECK(d.truth.class_blocks[k].size() == bpc);
            const std::set<std::size_t> own(d.truth.class_blocks[k].begin(), d.truth.class_blocks[k].end());
            for (std::size_t f = 0; f < spec.dim(); ++f) {
                const std::size_t block = f / spec.block_size;
                const bool signal = f < spec.n_blocks * spec.block_size && own.count(block);
                CHECK(std::abs(d.class_means(k, f)) == (signal ? spec.signal_strength : 0.0));
            }
        }
        // Separating blocks are exactly the blocks where the two means differ.
        for (std::size_t a = 0; a < spec.n_classes; ++a) {
            for (std::size_t b = 0; b < spec.n_classes; ++b) {
                std::vector<std::size_t> want;
                for (std::size_t blk = 0; blk < spec.n_blocks; ++blk) {
                    bool differ = false;
                    for (std::size_t i = 0; i < spec.block_size; ++i) {
                        const std::size_t f = blk * spec.block_size + i;
                        differ |= d.class_means(a, f) != d.class_means(b, f);
                    }
                    if (differ) want.push_back(blk);
                }
                CHECK(d.truth.separating[a][b] == want);
            }
        }
    }
}

TEST_CASE("zero noise: rows equal their class mean") {
    SyntheticSpec spec;
    spec.noise_sd = 0.0;
    spec.n_classes = 4;
    const SyntheticData d = make_synthetic(spec);
    for (std::size_t r = 0; r < d.dataset.size(); ++r) {
        for (std::size_t f = 0; f < spec.dim(); ++f) {
            CHECK(d.dataset.features(r, f) == d.class_means(d.dataset.labels[r], f));
        }
    }
}

TEST_CASE("designated-block nearest class mean is above 99% accurate") {
    SyntheticSpec spec;
    spec.per_class = 50;  // 20 × 50 = 1000 samples
    const SyntheticData d = make_synthetic(spec);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < d.dataset.size(); ++r) {
        const ClassId y = d.dataset.labels[r];
        const std::size_t blk = d.truth.class_blocks[y][0];
        double best = INFINITY;
        ClassId arg = 0;
        for (ClassId k = 0; k < spec.n_classes; ++k) {
            double dist = 0.0;
            for (std::size_t i = 0; i < spec.block_size; ++i) {
                const std::size_t f = blk * spec.block_size + i;
                dist += std::pow(d.dataset.features(r, f) - d.class_means(k, f), 2);
            }
            if (dist < best) {
                best = dist;
                arg = k;
            }
        }
        correct += arg == y;
    }
    CHECK(static_cast<double>(correct) / static_cast<double>(d.dataset.size()) > 0.99);
}

TEST_CASE("noise columns carry no class signal") {
    SyntheticSpec spec;
    spec.n_classes = 2;
    spec.per_class = 1000;
    const SyntheticData d = make_synthetic(spec);
    const std::size_t first_noise = spec.n_blocks * spec.block_size;
    for (std::size_t f = first_noise; f < spec.dim(); ++f) {
        double m[2] = {0, 0}, v[2] = {0, 0};
        for (std::size_t r = 0; r < d.dataset.size(); ++r) m[d.dataset.labels[r]] += d.dataset.features(r, f) / 1000.0;
        for (std::size_t r = 0; r < d.dataset.size(); ++r) {
            const ClassId y = d.dataset.labels[r];
            v[y] += std::pow(d.dataset.features(r, f) - m[y], 2) / 999.0;
        }
        const double t = (m[0] - m[1]) / std::sqrt(v[0] / 1000.0 + v[1] / 1000.0);
        CHECK(std::abs(t) < 5.0);
    }
}

TEST_CASE("synthetic spec validation and default split") {
    SyntheticSpec bad;
    bad.n_classes = 1;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = SyntheticSpec{};
    bad.signal_strength = 0.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = SyntheticSpec{};
    bad.blocks_per_class = 3;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = SyntheticSpec{};
    bad.noise_sd = -1.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);

    const SplitSpec s = default_synthetic_split(20);
    CHECK(s.train.size() == 10);
    CHECK(s.val.size() == 5);
    CHECK(s.test == std::vector<ClassId>{15, 16, 17, 18, 19});
    CHECK_NOTHROW(s.validate(20));

    const SyntheticData d = make_synthetic(SyntheticSpec{});
    const GroundTruthConcepts truth = synthetic_ground_truth_concepts(d);
    CHECK(truth.size() == 20);
    CHECK(truth.at("class_05") == std::set<std::string>{"block_1"});
}
