#include "comet/interpret.hpp"

#include <algorithm>
#include <numeric>

#include "comet/error.hpp"
#include "comet/rng.hpp"

namespace comet {

double importance_score(double distance, ScoreTransform transform) {
    return transform == ScoreTransform::Negate ? -distance : 1.0 / (1.0 + distance);
}

std::vector<std::size_t> rank_by_score(std::span<const double> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return order;
}

namespace {

void check_class(const PrototypeBank& bank, std::size_t class_pos) {
    if (class_pos >= bank.way()) {
        throw IndexError("class position " + std::to_string(class_pos) + " not in a bank of " +
                         std::to_string(bank.way()) + " classes");
    }
}

void fill_scores(const std::vector<double>& distances, ScoreTransform transform, std::vector<double>& scores,
                 std::vector<std::size_t>& ranking) {
    scores.resize(distances.size());
    for (std::size_t j = 0; j < distances.size(); ++j) {
        scores[j] = importance_score(distances[j], transform);
    }
    ranking = rank_by_score(scores);
}

}  // namespace

LocalImportance local_importance(const CometModel& model, const PrototypeBank& bank, std::span<const double> query,
                                 std::size_t class_pos, ScoreTransform transform) {
    check_class(bank, class_pos);
    Matrix x(1, query.size(), std::vector<double>(query.begin(), query.end()));
    const ConceptEmbeddings emb = embed_concepts(model, x);
    LocalImportance out;
    out.class_pos = class_pos;
    for (std::size_t j = 0; j < emb.size(); ++j) {
        out.distances.push_back(distance(model.distance_kind(), emb[j].row(0), bank.prototype(class_pos, j)));
    }
    fill_scores(out.distances, transform, out.scores, out.ranking);
    return out;
}

GlobalImportance global_importance(const CometModel& model, const PrototypeBank& bank, const Matrix& queries,
                                   std::size_t class_pos, ScoreTransform transform) {
    check_class(bank, class_pos);
    if (queries.rows() == 0) {
        throw ValidationError("global importance needs at least one query");
    }
    const ConceptEmbeddings emb = embed_concepts(model, queries);
    GlobalImportance out;
    out.class_pos = class_pos;
    out.num_queries = queries.rows();
    out.mean_distances.assign(emb.size(), 0.0);
    for (std::size_t j = 0; j < emb.size(); ++j) {
        for (std::size_t i = 0; i < queries.rows(); ++i) {
            out.mean_distances[j] += distance(model.distance_kind(), emb[j].row(i), bank.prototype(class_pos, j));
        }
        out.mean_distances[j] /= static_cast<double>(queries.rows());
    }
    fill_scores(out.mean_distances, transform, out.scores, out.ranking);
    return out;
}

std::vector<RankedExample> rank_examples_by_concept(const CometModel& model, std::span<const double> prototype,
                                                    const Matrix& examples, std::size_t concept_id) {
    if (examples.rows() == 0) {
        throw ValidationError("nothing to rank: empty example list");
    }
    if (concept_id >= model.num_concepts()) {
        throw IndexError("concept " + std::to_string(concept_id) + " out of range for " +
                         std::to_string(model.num_concepts()) + " concepts");
    }
    if (prototype.size() != model.embed_dim()) {
        throw DimensionError("prototype length " + std::to_string(prototype.size()) + " differs from embedding width " +
                             std::to_string(model.embed_dim()));
    }
    const Matrix emb = mlp_embed(model.net_for(concept_id), apply_mask(examples, model.concepts()[concept_id]));
    std::vector<RankedExample> out;
    out.reserve(examples.rows());
    for (std::size_t i = 0; i < examples.rows(); ++i) {
        out.push_back({i, distance(model.distance_kind(), emb.row(i), prototype)});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const RankedExample& a, const RankedExample& b) { return a.distance < b.distance; });
    return out;
}

double recall_at_k(const GlobalImportance& importance, const std::set<std::size_t>& truth, std::size_t k) {
    if (truth.empty()) {
        throw ValidationError("recall@k needs a non-empty ground-truth set");
    }
    if (k < 1 || k > importance.ranking.size()) {
        throw ValidationError("k must lie in [1, " + std::to_string(importance.ranking.size()) + "], got " +
                              std::to_string(k));
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < k; ++i) {
        hits += truth.count(importance.ranking[i]);
    }
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

std::vector<std::size_t> class_support_rows(const Dataset& ds, ClassId cls, std::size_t shot, std::uint64_t seed) {
    if (cls >= ds.num_classes()) {
        throw IndexError("class id " + std::to_string(cls) + " out of range");
    }
    if (shot < 1) {
        throw ValidationError("support size must be at least 1");
    }
    std::vector<std::size_t> rows = ds.rows_by_class()[cls];
    RngStream rng = RngStream(seed).split("class-prototype").split(cls);
    rng.shuffle(rows);
    rows.resize(std::min(shot, rows.size()));
    return rows;
}

PrototypeBank class_prototype(const CometModel& model, const Dataset& ds, ClassId cls, std::size_t shot,
                              std::uint64_t seed) {
    const auto rows = class_support_rows(ds, cls, shot, seed);
    const std::size_t count = rows.size();
    return prototypes_from_embeddings(embed_concepts(model, ds.features.gather_rows(rows)),
                                      std::span<const std::size_t>(&count, 1), {cls});
}

GlobalImportance class_global_importance(const CometModel& model, const Dataset& ds, ClassId cls,
                                         const ClassImportanceOptions& options) {
    if (cls >= ds.num_classes()) {
        throw IndexError("class id " + std::to_string(cls) + " out of range");
    }
    if (options.shot < 1 || options.rounds < 1) {
        throw ValidationError("class importance needs shot and rounds >= 1");
    }
    const std::vector<std::size_t> all_rows = ds.rows_by_class()[cls];
    const RngStream root = RngStream(options.seed).split("class-importance").split(cls);

    std::vector<double> total(model.num_concepts(), 0.0);
    std::size_t count = 0;
    for (std::size_t r = 0; r < options.rounds; ++r) {
        std::vector<std::size_t> rows = all_rows;
        RngStream rng = root.split(r);
        rng.shuffle(rows);
        // Keep at least one row for the queries; a singleton class is its own query.
        const std::size_t n_support = rows.size() > 1 ? std::min(options.shot, rows.size() - 1) : 1;
        std::vector<std::size_t> support(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_support));
        std::vector<std::size_t> queries;
        if (rows.size() > 1) {
            const std::size_t end = options.query_per_class == 0
                                        ? rows.size()
                                        : std::min(rows.size(), n_support + options.query_per_class);
            queries.assign(rows.begin() + static_cast<std::ptrdiff_t>(n_support),
                           rows.begin() + static_cast<std::ptrdiff_t>(end));
        } else {
            queries = support;
        }
        const PrototypeBank bank = prototypes_from_embeddings(
            embed_concepts(model, ds.features.gather_rows(support)), std::span<const std::size_t>(&n_support, 1),
            {cls});
        const GlobalImportance gi = global_importance(model, bank, ds.features.gather_rows(queries), 0);
        for (std::size_t j = 0; j < total.size(); ++j) {
            total[j] += gi.mean_distances[j] * static_cast<double>(queries.size());
        }
        count += queries.size();
    }

    GlobalImportance out;
    out.class_pos = cls;
    out.num_queries = count;
    out.mean_distances.resize(total.size());
    for (std::size_t j = 0; j < total.size(); ++j) {
        out.mean_distances[j] = total[j] / static_cast<double>(count);
    }
    fill_scores(out.mean_distances, options.transform, out.scores, out.ranking);
    return out;
}

}  // namespace comet
