#ifndef COMET_MODEL_HPP
#define COMET_MODEL_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "comet/concepts.hpp"
#include "comet/dataset.hpp"
#include "comet/episodes.hpp"
#include "comet/nn.hpp"

namespace comet {

enum class WeightMode { SharedAcrossConcepts, PerConcept };

std::string to_string(WeightMode mode);
WeightMode weight_mode_from_string(std::string_view name);

struct ModelConfig {
    std::size_t hidden = 64;
    std::size_t embed = 64;
    double dropout = 0.2;
    WeightMode weight_mode = WeightMode::PerConcept;
    DistanceKind distance = DistanceKind::SquaredEuclidean;
};

/**
 * Concept learners over a fixed concept set.
 *
 * Concept j embeds x ∘ c_j with its own network (PerConcept) or with the
 * single network shared by all concepts (SharedAcrossConcepts). Masking is
 * applied at the input.
 */
class CometModel {
public:
    CometModel(ConceptSet concepts, ModelConfig config, std::vector<MlpParams> nets);

    /// Fresh parameters; network i is initialised from init_rng.split(i).
    static CometModel create(ConceptSet concepts, const ModelConfig& config, const RngStream& init_rng);

    const ConceptSet& concepts() const { return concepts_; }
    const ModelConfig& config() const { return config_; }
    std::size_t num_concepts() const { return concepts_.size(); }
    std::size_t input_dim() const { return concepts_.dim(); }
    std::size_t embed_dim() const { return config_.embed; }
    DistanceKind distance_kind() const { return config_.distance; }
    bool shared() const { return config_.weight_mode == WeightMode::SharedAcrossConcepts; }

    std::vector<MlpParams>& nets() { return nets_; }
    const std::vector<MlpParams>& nets() const { return nets_; }
    std::size_t net_index(std::size_t concept_id) const { return shared() ? 0 : concept_id; }
    const MlpParams& net_for(std::size_t concept_id) const { return nets_.at(net_index(concept_id)); }

private:
    ConceptSet concepts_;
    ModelConfig config_;
    std::vector<MlpParams> nets_;
};

/// ProtoNet as the single whole-input concept special case.
CometModel protonet(std::size_t input_dim, const ModelConfig& config, const RngStream& init_rng);

/// embeddings[j] is the n×M matrix of concept-j embeddings of the batch rows.
using ConceptEmbeddings = std::vector<Matrix>;

/// Concept-j caches, or a single cache in shared mode.
using ConceptCaches = std::vector<ForwardCache>;

ConceptEmbeddings embed_concepts(const CometModel& model, const Matrix& x, ForwardMode mode, RngStream& rng,
                                 ConceptCaches* caches = nullptr);

/// Eval-mode embeddings.
ConceptEmbeddings embed_concepts(const CometModel& model, const Matrix& x);

/**
 * Per-example concept visibility, indexed by source row id (Dataset::row_ids)
 * then concept position. A zero means the concept is missing for that example.
 */
using Visibility = std::vector<std::vector<std::uint8_t>>;

/// visibility rows for a batch of dataset rows.
Visibility gather_visibility(const Visibility& table, const Dataset& ds, std::span<const std::size_t> rows);

/**
 * Replaces the embedding of every missing (example, concept) pair with that
 * example's whole-input embedding. `rows` aligns with the embedding rows.
 */
void substitute_missing_concepts(const ConceptSet& concepts, ConceptEmbeddings& embeddings, const Visibility& rows);

struct PrototypeBank {
    std::vector<ClassId> classes;
    /// per_concept[j] is way×M; row p is the concept-j prototype of classes[p].
    std::vector<Matrix> per_concept;

    std::size_t way() const { return classes.size(); }
    std::span<const double> prototype(std::size_t class_pos, std::size_t concept_id) const {
        return per_concept.at(concept_id).row(class_pos);
    }
};

/// Means of support embeddings. Rows of `embeddings` are the support rows class by class.
PrototypeBank prototypes_from_embeddings(const ConceptEmbeddings& embeddings, std::span<const std::size_t> counts,
                                         std::vector<ClassId> classes);

PrototypeBank compute_prototypes(const CometModel& model, const Dataset& ds, const Episode& episode,
                                 ForwardMode mode = ForwardMode::Eval, RngStream* rng = nullptr,
                                 const Visibility* visibility = nullptr);

/// nq×way matrix of −Σ_j d(concept-j embedding, concept-j prototype).
Matrix neg_scores_from_embeddings(DistanceKind kind, const PrototypeBank& bank, const ConceptEmbeddings& query);

/// Batch of queries, Eval mode.
Matrix class_neg_scores(const CometModel& model, const PrototypeBank& bank, const Matrix& queries);

std::vector<double> class_neg_scores(const CometModel& model, const PrototypeBank& bank,
                                     std::span<const double> query);

std::vector<double> predict_proba(const CometModel& model, const PrototypeBank& bank, std::span<const double> query);

/// Class position with the highest probability, lowest position on ties.
std::size_t predict(const CometModel& model, const PrototypeBank& bank, std::span<const double> query);

struct EpisodeOutcome {
    double loss = 0.0;      // mean NLL over queries
    double accuracy = 0.0;  // fraction of queries whose argmax is the true class
    std::vector<ParamGrads> grads;  // one per network; empty unless requested
    ConceptCaches caches;           // Train mode only
};

/**
 * Embeds support and query rows as one batch, builds prototypes from the
 * support part, and scores the queries. With `with_grads`, the loss is
 * backpropagated through both query embeddings and prototypes.
 */
EpisodeOutcome run_episode(const CometModel& model, const Dataset& ds, const Episode& episode, ForwardMode mode,
                           RngStream& rng, bool with_grads, const Visibility* visibility = nullptr);

struct EpisodeScore {
    double loss = 0.0;
    double accuracy = 0.0;
};

EpisodeScore episode_loss(const CometModel& model, const Dataset& ds, const Episode& episode,
                          ForwardMode mode = ForwardMode::Eval);

/**
 * Plurality vote over per-member class distributions. Ties go to the tied
 * class with the largest summed probability, then to the lowest position.
 */
std::size_t majority_vote(const std::vector<std::vector<double>>& member_probs);

std::size_t ensemble_predict(std::span<const CometModel> models, std::span<const PrototypeBank> banks,
                             std::span<const double> query);

}  // namespace comet

#endif
