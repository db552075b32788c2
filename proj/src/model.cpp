#include "comet/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "comet/error.hpp"

namespace comet {

std::string to_string(WeightMode mode) {
    return mode == WeightMode::SharedAcrossConcepts ? "shared" : "per_concept";
}

WeightMode weight_mode_from_string(std::string_view name) {
    if (name == "shared") {
        return WeightMode::SharedAcrossConcepts;
    }
    if (name == "per_concept") {
        return WeightMode::PerConcept;
    }
    throw ValidationError("unknown weight mode '" + std::string(name) + "' (expected shared or per_concept)");
}

CometModel::CometModel(ConceptSet concepts, ModelConfig config, std::vector<MlpParams> nets)
    : concepts_(std::move(concepts)), config_(config), nets_(std::move(nets)) {
    const std::size_t expected = shared() ? 1 : concepts_.size();
    if (nets_.size() != expected) {
        throw ValidationError("model needs " + std::to_string(expected) + " networks, got " +
                              std::to_string(nets_.size()));
    }
    for (const auto& net : nets_) {
        net.validate();
        const MlpDims d = net.dims();
        if (d.input != concepts_.dim() || d.hidden != config_.hidden || d.embed != config_.embed) {
            throw DimensionError("network shape does not match the model configuration");
        }
    }
}

CometModel CometModel::create(ConceptSet concepts, const ModelConfig& config, const RngStream& init_rng) {
    if (config.hidden == 0 || config.embed == 0) {
        throw ValidationError("hidden and embedding widths must be positive");
    }
    const std::size_t count = config.weight_mode == WeightMode::SharedAcrossConcepts ? 1 : concepts.size();
    const MlpDims dims{concepts.dim(), config.hidden, config.embed};
    std::vector<MlpParams> nets;
    nets.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        RngStream rng = init_rng.split(i);
        nets.push_back(MlpParams::init(dims, config.dropout, rng));
    }
    return CometModel(std::move(concepts), config, std::move(nets));
}

CometModel protonet(std::size_t input_dim, const ModelConfig& config, const RngStream& init_rng) {
    ConceptSet whole({ConceptMask::all_ones(input_dim)}, input_dim);
    return CometModel::create(std::move(whole), config, init_rng);
}

ConceptEmbeddings embed_concepts(const CometModel& model, const Matrix& x, ForwardMode mode, RngStream& rng,
                                 ConceptCaches* caches) {
    if (x.cols() != model.input_dim()) {
        throw DimensionError("input has " + std::to_string(x.cols()) + " features, model expects " +
                             std::to_string(model.input_dim()));
    }
    const std::size_t n_concepts = model.num_concepts();
    const std::size_t n = x.rows();
    ConceptEmbeddings out;
    out.reserve(n_concepts);
    if (caches) {
        caches->clear();
    }

    if (!model.shared()) {
        for (std::size_t j = 0; j < n_concepts; ++j) {
            RngStream dropout_rng = rng.split(j);
            ForwardResult res = mlp_forward(model.nets()[j], apply_mask(x, model.concepts()[j]), mode, dropout_rng);
            out.push_back(std::move(res.output));
            if (caches) {
                caches->push_back(std::move(res.cache));
            }
        }
        return out;
    }

    // Shared weights: all masked copies go through the network as one batch.
    Matrix stacked(n * n_concepts, x.cols());
    for (std::size_t j = 0; j < n_concepts; ++j) {
        const Matrix masked = apply_mask(x, model.concepts()[j]);
        std::copy(masked.values().begin(), masked.values().end(),
                  stacked.values().begin() + static_cast<std::ptrdiff_t>(j * n * x.cols()));
    }
    RngStream dropout_rng = rng.split(std::uint64_t{0});
    ForwardResult res = mlp_forward(model.nets()[0], stacked, mode, dropout_rng);
    const std::size_t m = model.embed_dim();
    for (std::size_t j = 0; j < n_concepts; ++j) {
        auto begin = res.output.values().begin() + static_cast<std::ptrdiff_t>(j * n * m);
        out.emplace_back(n, m, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(n * m)));
    }
    if (caches) {
        caches->push_back(std::move(res.cache));
    }
    return out;
}

ConceptEmbeddings embed_concepts(const CometModel& model, const Matrix& x) {
    RngStream unused(0);
    return embed_concepts(model, x, ForwardMode::Eval, unused, nullptr);
}

Visibility gather_visibility(const Visibility& table, const Dataset& ds, std::span<const std::size_t> rows) {
    Visibility out;
    out.reserve(rows.size());
    for (std::size_t r : rows) {
        const std::size_t source = ds.row_ids.at(r);
        if (source >= table.size()) {
            throw IndexError("no visibility entry for source row " + std::to_string(source));
        }
        out.push_back(table[source]);
    }
    return out;
}

void substitute_missing_concepts(const ConceptSet& concepts, ConceptEmbeddings& embeddings, const Visibility& rows) {
    const std::size_t whole = concepts.whole_input_index();
    if (whole >= concepts.size()) {
        throw ValidationError("concept visibility needs the whole-input concept in the concept set");
    }
    if (embeddings.size() != concepts.size()) {
        throw DimensionError("embedding count does not match the concept count");
    }
    const std::size_t n = embeddings[whole].rows();
    if (rows.size() != n) {
        throw DimensionError("visibility has " + std::to_string(rows.size()) + " rows for " + std::to_string(n) +
                             " examples");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (rows[i].size() != concepts.size()) {
            throw DimensionError("visibility row " + std::to_string(i) + " has " + std::to_string(rows[i].size()) +
                                 " entries for " + std::to_string(concepts.size()) + " concepts");
        }
        for (std::size_t j = 0; j < concepts.size(); ++j) {
            if (j != whole && rows[i][j] == 0) {
                auto src = embeddings[whole].row(i);
                std::copy(src.begin(), src.end(), embeddings[j].row(i).begin());
            }
        }
    }
}

PrototypeBank prototypes_from_embeddings(const ConceptEmbeddings& embeddings, std::span<const std::size_t> counts,
                                         std::vector<ClassId> classes) {
    if (counts.size() != classes.size()) {
        throw DimensionError("one support count per class required");
    }
    std::size_t total = 0;
    for (std::size_t c : counts) {
        if (c == 0) {
            throw ValidationError("every class needs at least one support example");
        }
        total += c;
    }
    PrototypeBank bank;
    bank.classes = std::move(classes);
    for (const Matrix& emb : embeddings) {
        if (emb.rows() < total) {
            throw DimensionError("fewer support embeddings than support counts");
        }
        Matrix protos(counts.size(), emb.cols());
        std::size_t r = 0;
        for (std::size_t p = 0; p < counts.size(); ++p) {
            auto dst = protos.row(p);
            for (std::size_t i = 0; i < counts[p]; ++i, ++r) {
                auto src = emb.row(r);
                for (std::size_t c = 0; c < dst.size(); ++c) {
                    dst[c] += src[c];
                }
            }
            for (double& v : dst) {
                v /= static_cast<double>(counts[p]);
            }
        }
        bank.per_concept.push_back(std::move(protos));
    }
    return bank;
}

namespace {

std::vector<std::size_t> support_counts(const Episode& episode) {
    std::vector<std::size_t> counts;
    counts.reserve(episode.support.size());
    for (const auto& rows : episode.support) {
        counts.push_back(rows.size());
    }
    return counts;
}

}  // namespace

PrototypeBank compute_prototypes(const CometModel& model, const Dataset& ds, const Episode& episode, ForwardMode mode,
                                 RngStream* rng, const Visibility* visibility) {
    const auto counts = support_counts(episode);
    for (std::size_t p = 0; p < counts.size(); ++p) {
        if (counts[p] == 0) {
            throw ValidationError("class position " + std::to_string(p) + " has an empty support set");
        }
    }
    const auto rows = episode.support_rows();
    RngStream fallback(0);
    ConceptEmbeddings emb = embed_concepts(model, ds.features.gather_rows(rows), mode, rng ? *rng : fallback);
    if (visibility) {
        substitute_missing_concepts(model.concepts(), emb, gather_visibility(*visibility, ds, rows));
    }
    return prototypes_from_embeddings(emb, counts, episode.classes);
}

Matrix neg_scores_from_embeddings(DistanceKind kind, const PrototypeBank& bank, const ConceptEmbeddings& query) {
    if (query.size() != bank.per_concept.size()) {
        throw DimensionError("query has " + std::to_string(query.size()) + " concept embeddings, bank has " +
                             std::to_string(bank.per_concept.size()));
    }
    const std::size_t nq = query.empty() ? 0 : query[0].rows();
    Matrix scores(nq, bank.way());
    for (std::size_t j = 0; j < query.size(); ++j) {
        if (query[j].cols() != bank.per_concept[j].cols()) {
            throw DimensionError("query embedding width differs from prototype width");
        }
        for (std::size_t i = 0; i < nq; ++i) {
            for (std::size_t k = 0; k < bank.way(); ++k) {
                scores(i, k) -= distance(kind, query[j].row(i), bank.prototype(k, j));
            }
        }
    }
    return scores;
}

Matrix class_neg_scores(const CometModel& model, const PrototypeBank& bank, const Matrix& queries) {
    return neg_scores_from_embeddings(model.distance_kind(), bank, embed_concepts(model, queries));
}

std::vector<double> class_neg_scores(const CometModel& model, const PrototypeBank& bank,
                                     std::span<const double> query) {
    Matrix x(1, query.size(), std::vector<double>(query.begin(), query.end()));
    Matrix s = class_neg_scores(model, bank, x);
    return {s.row(0).begin(), s.row(0).end()};
}

std::vector<double> predict_proba(const CometModel& model, const PrototypeBank& bank, std::span<const double> query) {
    return softmax(class_neg_scores(model, bank, query));
}

std::size_t predict(const CometModel& model, const PrototypeBank& bank, std::span<const double> query) {
    return argmax(predict_proba(model, bank, query));
}

EpisodeOutcome run_episode(const CometModel& model, const Dataset& ds, const Episode& episode, ForwardMode mode,
                           RngStream& rng, bool with_grads, const Visibility* visibility) {
    const auto counts = support_counts(episode);
    std::vector<std::size_t> rows = episode.support_rows();
    const std::size_t n_support = rows.size();
    for (const auto& q : episode.query) {
        rows.push_back(q.row);
    }
    const std::size_t nq = episode.query.size();
    if (nq == 0) {
        throw ValidationError("episode has no query examples");
    }

    EpisodeOutcome out;
    ConceptEmbeddings emb = embed_concepts(model, ds.features.gather_rows(rows), mode, rng, &out.caches);
    Visibility vis_rows;
    if (visibility) {
        vis_rows = gather_visibility(*visibility, ds, rows);
        substitute_missing_concepts(model.concepts(), emb, vis_rows);
    }

    const std::size_t n_concepts = model.num_concepts();
    const std::size_t m = model.embed_dim();
    ConceptEmbeddings query(n_concepts);
    for (std::size_t j = 0; j < n_concepts; ++j) {
        auto begin = emb[j].values().begin() + static_cast<std::ptrdiff_t>(n_support * m);
        query[j] = Matrix(nq, m, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(nq * m)));
    }
    const PrototypeBank bank = prototypes_from_embeddings(emb, counts, episode.classes);
    const Matrix scores = neg_scores_from_embeddings(model.distance_kind(), bank, query);

    // ∂loss/∂score, with the loss averaged over queries.
    Matrix score_grad(nq, bank.way());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < nq; ++i) {
        const std::size_t truth = episode.query[i].class_pos;
        SoftmaxNll res = softmax_nll(scores.row(i), truth);
        out.loss += res.loss;
        if (argmax(scores.row(i)) == truth) {
            ++correct;
        }
        for (std::size_t k = 0; k < bank.way(); ++k) {
            score_grad(i, k) = (res.probs[k] - (k == truth ? 1.0 : 0.0)) / static_cast<double>(nq);
        }
    }
    out.loss /= static_cast<double>(nq);
    out.accuracy = static_cast<double>(correct) / static_cast<double>(nq);
    if (!with_grads) {
        return out;
    }

    // score = −Σ_j d(query_j, proto_j), so ∂loss/∂d = −∂loss/∂score.
    ConceptEmbeddings emb_grad;
    emb_grad.reserve(n_concepts);
    for (std::size_t j = 0; j < n_concepts; ++j) {
        Matrix grad(rows.size(), m);
        Matrix proto_grad(bank.way(), m);
        for (std::size_t i = 0; i < nq; ++i) {
            for (std::size_t k = 0; k < bank.way(); ++k) {
                accumulate_distance_grad(model.distance_kind(), query[j].row(i), bank.prototype(k, j),
                                         -score_grad(i, k), grad.row(n_support + i), proto_grad.row(k));
            }
        }
        std::size_t r = 0;
        for (std::size_t p = 0; p < counts.size(); ++p) {
            const double share = 1.0 / static_cast<double>(counts[p]);
            auto pg = proto_grad.row(p);
            for (std::size_t s = 0; s < counts[p]; ++s, ++r) {
                auto g = grad.row(r);
                for (std::size_t c = 0; c < m; ++c) {
                    g[c] += pg[c] * share;
                }
            }
        }
        emb_grad.push_back(std::move(grad));
    }

    if (visibility) {
        const std::size_t whole = model.concepts().whole_input_index();
        for (std::size_t i = 0; i < rows.size(); ++i) {
            for (std::size_t j = 0; j < n_concepts; ++j) {
                if (j != whole && vis_rows[i][j] == 0) {
                    auto g = emb_grad[j].row(i);
                    auto dst = emb_grad[whole].row(i);
                    for (std::size_t c = 0; c < m; ++c) {
                        dst[c] += g[c];
                        g[c] = 0.0;
                    }
                }
            }
        }
    }

    if (model.shared()) {
        const std::size_t n = rows.size();
        Matrix stacked(n * n_concepts, m);
        for (std::size_t j = 0; j < n_concepts; ++j) {
            std::copy(emb_grad[j].values().begin(), emb_grad[j].values().end(),
                      stacked.values().begin() + static_cast<std::ptrdiff_t>(j * n * m));
        }
        out.grads.push_back(mlp_backward(model.nets()[0], out.caches[0], stacked));
    } else {
        for (std::size_t j = 0; j < n_concepts; ++j) {
            out.grads.push_back(mlp_backward(model.nets()[j], out.caches[j], emb_grad[j]));
        }
    }
    return out;
}

EpisodeScore episode_loss(const CometModel& model, const Dataset& ds, const Episode& episode, ForwardMode mode) {
    RngStream rng(0);
    EpisodeOutcome res = run_episode(model, ds, episode, mode, rng, false);
    return {res.loss, res.accuracy};
}

std::size_t majority_vote(const std::vector<std::vector<double>>& member_probs) {
    if (member_probs.empty()) {
        throw ValidationError("an ensemble needs at least one member");
    }
    const std::size_t way = member_probs[0].size();
    std::vector<std::size_t> votes(way, 0);
    std::vector<double> mass(way, 0.0);
    for (const auto& probs : member_probs) {
        if (probs.size() != way) {
            throw DimensionError("ensemble members disagree on the number of classes");
        }
        ++votes[argmax(probs)];
        for (std::size_t k = 0; k < way; ++k) {
            mass[k] += probs[k];
        }
    }
    std::size_t best = 0;
    for (std::size_t k = 1; k < way; ++k) {
        if (votes[k] > votes[best] || (votes[k] == votes[best] && mass[k] > mass[best])) {
            best = k;
        }
    }
    return best;
}

std::size_t ensemble_predict(std::span<const CometModel> models, std::span<const PrototypeBank> banks,
                             std::span<const double> query) {
    if (models.empty()) {
        throw ValidationError("an ensemble needs at least one member");
    }
    if (models.size() != banks.size()) {
        throw DimensionError("one prototype bank per ensemble member required");
    }
    std::vector<std::vector<double>> probs;
    probs.reserve(models.size());
    for (std::size_t i = 0; i < models.size(); ++i) {
        if (banks[i].classes != banks[0].classes) {
            throw ValidationError("ensemble members must share the episode classes");
        }
        probs.push_back(predict_proba(models[i], banks[i], query));
    }
    return majority_vote(probs);
}

}  // namespace comet
