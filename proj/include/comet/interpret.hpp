#ifndef COMET_INTERPRET_HPP
#define COMET_INTERPRET_HPP

#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <vector>

#include "comet/model.hpp"

namespace comet {

/**
 * How a concept distance becomes an importance score. Both are strictly
 * decreasing in the distance, so they induce the same ranking; Negate
 * (score = −d) is the default, Reciprocal (1/(1+d)) reads more easily in
 * reports.
 */
enum class ScoreTransform { Negate, Reciprocal };

double importance_score(double distance, ScoreTransform transform);

/// Concept ids by descending score, lower id first on ties.
std::vector<std::size_t> rank_by_score(std::span<const double> scores);

struct LocalImportance {
    std::size_t class_pos = 0;
    std::vector<double> distances;
    std::vector<double> scores;
    std::vector<std::size_t> ranking;
};

struct GlobalImportance {
    std::size_t class_pos = 0;
    std::vector<double> mean_distances;
    std::vector<double> scores;
    std::vector<std::size_t> ranking;
    std::size_t num_queries = 0;
};

/// Per-concept importance of one query for class `class_pos` of the bank.
LocalImportance local_importance(const CometModel& model, const PrototypeBank& bank, std::span<const double> query,
                                 std::size_t class_pos, ScoreTransform transform = ScoreTransform::Negate);

/// Importance from the mean concept distance of a set of queries to one class's prototypes.
GlobalImportance global_importance(const CometModel& model, const PrototypeBank& bank, const Matrix& queries,
                                   std::size_t class_pos, ScoreTransform transform = ScoreTransform::Negate);

struct RankedExample {
    std::size_t index = 0;  // row in the examples matrix
    double distance = 0.0;
};

/// Examples by ascending concept-`concept_id` distance to `prototype`, lower index first on ties.
std::vector<RankedExample> rank_examples_by_concept(const CometModel& model, std::span<const double> prototype,
                                                    const Matrix& examples, std::size_t concept_id);

/// |truth ∩ top-k| / |truth|.
double recall_at_k(const GlobalImportance& importance, const std::set<std::size_t>& truth, std::size_t k);

/// Support sample of a single class: up to `shot` of its rows, drawn deterministically from the seed.
std::vector<std::size_t> class_support_rows(const Dataset& ds, ClassId cls, std::size_t shot, std::uint64_t seed);

/// One-class bank built from class_support_rows.
PrototypeBank class_prototype(const CometModel& model, const Dataset& ds, ClassId cls, std::size_t shot,
                              std::uint64_t seed);

struct ClassImportanceOptions {
    std::size_t shot = 5;
    std::size_t query_per_class = 0;  // 0: every row not in the support set
    std::size_t rounds = 50;
    std::uint64_t seed = 7;
    ScoreTransform transform = ScoreTransform::Negate;
};

/**
 * Global importance for a whole class. Each round draws a support set of the
 * class, builds its prototypes, and uses the other rows of the class (at
 * most query_per_class of them, when non-zero) as queries. Distances are
 * averaged over every (round, query) pair.
 */
GlobalImportance class_global_importance(const CometModel& model, const Dataset& ds, ClassId cls,
                                         const ClassImportanceOptions& options);

}  // namespace comet

#endif
