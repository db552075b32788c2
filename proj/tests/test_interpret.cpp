#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "comet/error.hpp"
#include "comet/interpret.hpp"
#include "comet/synthetic.hpp"
#include "test_util.hpp"

using namespace comet;
using comet::testing::random_matrix;
using comet::testing::random_params;

namespace {

CometModel random_model(const ConceptSet& cs, std::size_t hidden, std::size_t embed, std::uint64_t seed) {
    ModelConfig cfg;
    cfg.hidden = hidden;
    cfg.embed = embed;
    cfg.dropout = 0.0;
    CometModel m = CometModel::create(cs, cfg, RngStream(seed));
    RngStream rng(seed + 1);
    for (auto& net : m.nets()) net = random_params(net.dims(), 0.0, rng);
    return m;
}

ConceptSet block_concepts(std::size_t blocks, std::size_t width) {
    std::vector<ConceptMask> masks;
    for (std::size_t b = 0; b < blocks; ++b) {
        std::vector<std::size_t> idx(width);
        std::iota(idx.begin(), idx.end(), b * width);
        masks.push_back(ConceptMask::from_indices("block" + std::to_string(b), blocks * width, idx));
    }
    return ConceptSet(std::move(masks), blocks * width);
}

Matrix rows_of(const Matrix& m, std::vector<std::size_t> rows) {
    return m.gather_rows(rows);
}

double loop_distance(const CometModel& m, std::span<const double> x, std::span<const double> proto, std::size_t j) {
    const std::vector<double> masked = apply_mask(x, m.concepts()[j]);
    const Matrix e = mlp_embed(m.net_for(j), Matrix(1, masked.size(), masked));
    double d = 0.0;
    for (std::size_t c = 0; c < proto.size(); ++c) d += (e(0, c) - proto[c]) * (e(0, c) - proto[c]);
    return d;
}

/// Bank whose single class is the 1-shot prototype of `row`.
PrototypeBank one_shot_bank(const CometModel& m, const Matrix& x, std::size_t row) {
    const ConceptEmbeddings emb = embed_concepts(m, rows_of(x, {row}));
    const std::vector<std::size_t> counts = {1};
    return prototypes_from_embeddings(emb, counts, {0});
}

}  // namespace

TEST_CASE("importance transforms") {
    CHECK(importance_score(2.0, ScoreTransform::Negate) == -2.0);
    CHECK(importance_score(3.0, ScoreTransform::Reciprocal) == 0.25);
    CHECK(importance_score(0.0, ScoreTransform::Reciprocal) == 1.0);
    CHECK(rank_by_score(std::vector<double>{0.1, 0.9, 0.5, 0.9}) == std::vector<std::size_t>{1, 3, 2, 0});
}

TEST_CASE("local importance of a support point against its own prototype is zero everywhere") {
    RngStream rng(1);
    const Matrix x = random_matrix(4, 9, rng);
    const CometModel m = random_model(block_concepts(3, 3), 6, 4, 2);
    const PrototypeBank bank = one_shot_bank(m, x, 2);
    const LocalImportance li = local_importance(m, bank, x.row(2), 0);
    for (double s : li.scores) CHECK(s == 0.0);
    CHECK(li.ranking == std::vector<std::size_t>{0, 1, 2});
    CHECK_THROWS_AS(local_importance(m, bank, x.row(2), 1), IndexError);

    const CometModel single = random_model(ConceptSet({ConceptMask::all_ones(9)}, 9), 6, 4, 3);
    const PrototypeBank b1 = one_shot_bank(single, x, 0);
    CHECK(local_importance(single, b1, x.row(1), 0).ranking == std::vector<std::size_t>{0});
}

TEST_CASE("negation and reciprocal give the same local ranking") {
    RngStream rng(4);
    const CometModel m = random_model(random_masks(12, 10, 4, 5), 8, 5, 6);
    for (int t = 0; t < 50; ++t) {
        const Matrix x = random_matrix(3, 12, rng);
        const PrototypeBank bank = one_shot_bank(m, x, 0);
        const LocalImportance neg = local_importance(m, bank, x.row(1), 0, ScoreTransform::Negate);
        const LocalImportance rec = local_importance(m, bank, x.row(1), 0, ScoreTransform::Reciprocal);
        CHECK(neg.ranking == rec.ranking);
        CHECK(neg.distances == rec.distances);
        for (std::size_t j = 0; j < 10; ++j) {
            CHECK(rec.scores[j] == doctest::Approx(1.0 / (1.0 + neg.distances[j])).epsilon(1e-14));
        }
    }
}

TEST_CASE("global importance: singleton equals local, duplicates change nothing, loop oracle") {
    RngStream rng(7);
    const CometModel m = random_model(random_masks(10, 6, 3, 8), 7, 5, 9);
    const Matrix support = random_matrix(6, 10, rng);
    const ConceptEmbeddings emb = embed_concepts(m, support);
    const std::vector<std::size_t> counts = {3, 3};
    const PrototypeBank bank = prototypes_from_embeddings(emb, counts, {0, 1});
    const Matrix queries = random_matrix(7, 10, rng);

    const GlobalImportance one = global_importance(m, bank, rows_of(queries, {4}), 1);
    const LocalImportance local = local_importance(m, bank, queries.row(4), 1);
    CHECK(one.scores == local.scores);
    CHECK(one.ranking == local.ranking);
    CHECK(one.num_queries == 1);

    const GlobalImportance base = global_importance(m, bank, rows_of(queries, {0, 1, 2}), 0);
    const GlobalImportance dup = global_importance(m, bank, rows_of(queries, {0, 1, 2, 0, 1, 2}), 0);
    for (std::size_t j = 0; j < 6; ++j) CHECK(dup.scores[j] == doctest::Approx(base.scores[j]).epsilon(1e-12));
    CHECK(dup.ranking == base.ranking);

    const GlobalImportance all = global_importance(m, bank, queries, 1);
    for (std::size_t j = 0; j < 6; ++j) {
        double mean = 0.0;
        for (std::size_t q = 0; q < queries.rows(); ++q) mean += loop_distance(m, queries.row(q), bank.prototype(1, j), j);
        mean /= static_cast<double>(queries.rows());
        CHECK(std::abs(all.mean_distances[j] - mean) < 1e-8);
        CHECK(std::abs(all.scores[j] + mean) < 1e-8);
    }
    CHECK_THROWS_AS(global_importance(m, bank, Matrix(0, 10), 0), ValidationError);
    CHECK_THROWS_AS(global_importance(m, bank, queries, 2), IndexError);
}

TEST_CASE("rank_examples_by_concept: exact match first, permutation, sort oracle") {
    RngStream rng(10);
    const CometModel m = random_model(block_concepts(4, 3), 6, 4, 11);
    for (int t = 0; t < 20; ++t) {
        const Matrix x = random_matrix(15, 12, rng);
        const PrototypeBank bank = one_shot_bank(m, x, 9);
        const std::size_t j = static_cast<std::size_t>(t) % 4;
        const auto ranked = rank_examples_by_concept(m, bank.prototype(0, j), x, j);
        REQUIRE(ranked.size() == 15);
        CHECK(ranked[0].distance == 0.0);
        std::vector<std::size_t> order;
        for (const auto& r : ranked) order.push_back(r.index);
        std::vector<std::size_t> sorted = order;
        std::sort(sorted.begin(), sorted.end());
        std::vector<std::size_t> iota(15);
        std::iota(iota.begin(), iota.end(), 0);
        CHECK(sorted == iota);

        std::vector<std::pair<double, std::size_t>> oracle;
        for (std::size_t i = 0; i < 15; ++i) oracle.emplace_back(loop_distance(m, x.row(i), bank.prototype(0, j), j), i);
        std::sort(oracle.begin(), oracle.end());
        for (std::size_t i = 0; i < 15; ++i) {
            CHECK(std::abs(ranked[i].distance - oracle[i].first) < 1e-10);
            CHECK(std::abs(ranked[i].distance - loop_distance(m, x.row(ranked[i].index), bank.prototype(0, j), j)) <
                  1e-10);
            if (i > 0) CHECK(ranked[i - 1].distance <= ranked[i].distance);
        }
    }
    const Matrix x = random_matrix(1, 12, rng);
    const PrototypeBank bank = one_shot_bank(m, x, 0);
    CHECK(rank_examples_by_concept(m, bank.prototype(0, 1), x, 1).size() == 1);
    CHECK_THROWS_AS(rank_examples_by_concept(m, bank.prototype(0, 1), Matrix(0, 12), 1), ValidationError);
    CHECK_THROWS_AS(rank_examples_by_concept(m, bank.prototype(0, 1), x, 4), IndexError);
    CHECK_THROWS_AS(rank_examples_by_concept(m, std::vector<double>(3, 0.0), x, 1), DimensionError);
}

TEST_CASE("recall_at_k") {
    GlobalImportance gi;
    gi.ranking = {2, 0, 3, 1, 4};
    CHECK(recall_at_k(gi, {2, 0}, 2) == 1.0);
    CHECK(recall_at_k(gi, {2, 1}, 2) == 0.5);
    const std::set<std::size_t> truth = {1, 4, 3};
    double prev = 0.0;
    for (std::size_t k = 1; k <= 5; ++k) {
        const double r = recall_at_k(gi, truth, k);
        CHECK(r >= prev);
        prev = r;
    }
    CHECK(prev == 1.0);
    CHECK_THROWS_AS(recall_at_k(gi, {}, 2), ValidationError);
    CHECK_THROWS_AS(recall_at_k(gi, {1}, 0), ValidationError);
    CHECK_THROWS_AS(recall_at_k(gi, {1}, 6), ValidationError);
}

TEST_CASE("zero noise: the separating block has the largest local score gap") {
    SyntheticSpec spec;
    spec.noise_sd = 0.0;
    const SyntheticData data = make_synthetic(spec);
    const CometModel m = CometModel::create(data.concepts, ModelConfig{}, RngStream(12));
    const auto by_class = data.dataset.rows_by_class();
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < spec.n_classes; ++a) {
        for (std::size_t b = 0; b < spec.n_classes; ++b) {
            const auto& sep = data.truth.separating[a][b];
            if (a == b || sep.size() != 1) continue;
            ++pairs;
            const ConceptEmbeddings emb = embed_concepts(m, rows_of(data.dataset.features, {by_class[a][0], by_class[b][0]}));
            const std::vector<std::size_t> counts = {1, 1};
            const PrototypeBank bank = prototypes_from_embeddings(emb, counts, {0, 1});
            const auto query = data.dataset.features.row(by_class[a][1]);
            const LocalImportance la = local_importance(m, bank, query, 0);
            const LocalImportance lb = local_importance(m, bank, query, 1);
            std::vector<double> gap(m.num_concepts());
            for (std::size_t j = 0; j < gap.size(); ++j) gap[j] = la.scores[j] - lb.scores[j];
            CHECK(argmax(gap) == sep[0]);
            for (std::size_t j = 0; j < gap.size(); ++j) {
                if (j != sep[0]) CHECK(gap[j] == 0.0);
            }
        }
    }
    CHECK(pairs > 0);
}

TEST_CASE("class-level importance and one-class prototypes are deterministic") {
    const SyntheticData data = make_synthetic(SyntheticSpec{});
    const CometModel m = CometModel::create(with_whole_input(data.concepts), ModelConfig{}, RngStream(13));
    ClassImportanceOptions opts;
    opts.rounds = 3;
    const GlobalImportance a = class_global_importance(m, data.dataset, 2, opts);
    const GlobalImportance b = class_global_importance(m, data.dataset, 2, opts);
    CHECK(a.scores == b.scores);
    CHECK(a.num_queries == 3 * (60 - 5));
    opts.query_per_class = 4;
    CHECK(class_global_importance(m, data.dataset, 2, opts).num_queries == 12);

    const auto rows = class_support_rows(data.dataset, 3, 5, 14);
    CHECK(rows.size() == 5);
    for (std::size_t r : rows) CHECK(data.dataset.labels[r] == 3);
    CHECK(rows == class_support_rows(data.dataset, 3, 5, 14));
    const PrototypeBank bank = class_prototype(m, data.dataset, 3, 5, 14);
    CHECK(bank.way() == 1);
    CHECK(bank.classes[0] == 3);
}
