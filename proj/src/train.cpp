#include "comet/train.hpp"

#include <cmath>
#include <sstream>

#include "comet/error.hpp"

namespace comet {

void TrainConfig::validate() const {
    if (!(lr > 0.0) || !(weight_decay >= 0.0)) {
        throw ValidationError("training needs lr > 0 and weight_decay >= 0");
    }
    if (eval_episodes < 1 || val_episodes < 1 || val_every < 1 || log_every < 1) {
        throw ValidationError("eval_episodes, val_episodes, val_every and log_every must be at least 1");
    }
}

RngStream eval_episode_rng(std::uint64_t seed, std::size_t index) {
    return RngStream(seed).split("eval").split(index);
}

EvalResult summarize_accuracies(std::vector<double> per_episode) {
    EvalResult r;
    r.per_episode_accuracy = std::move(per_episode);
    const double n = static_cast<double>(r.per_episode_accuracy.size());
    if (r.per_episode_accuracy.empty()) {
        return r;
    }
    double sum = 0.0;
    for (double a : r.per_episode_accuracy) {
        sum += a;
    }
    r.mean_accuracy = sum / n;
    double ss = 0.0;
    for (double a : r.per_episode_accuracy) {
        ss += (a - r.mean_accuracy) * (a - r.mean_accuracy);
    }
    r.ci95_halfwidth = 1.96 * std::sqrt(ss / n) / std::sqrt(n);
    return r;
}

EvalResult evaluate(const CometModel& model, const Dataset& ds, const EpisodeSpec& spec, std::size_t episodes,
                    std::uint64_t seed, const Visibility* visibility) {
    if (episodes < 1) {
        throw ValidationError("evaluation needs at least one episode");
    }
    EpisodeSampler sampler(ds, spec);
    std::vector<double> acc;
    acc.reserve(episodes);
    for (std::size_t i = 0; i < episodes; ++i) {
        RngStream rng = eval_episode_rng(seed, i);
        const Episode ep = sampler.sample(rng);
        acc.push_back(run_episode(model, ds, ep, ForwardMode::Eval, rng, false, visibility).accuracy);
    }
    return summarize_accuracies(std::move(acc));
}

EvalResult evaluate_ensemble(std::span<const CometModel> models, const Dataset& ds, const EpisodeSpec& spec,
                             std::size_t episodes, std::uint64_t seed) {
    if (models.empty()) {
        throw ValidationError("an ensemble needs at least one member");
    }
    if (episodes < 1) {
        throw ValidationError("evaluation needs at least one episode");
    }
    EpisodeSampler sampler(ds, spec);
    std::vector<double> acc;
    acc.reserve(episodes);
    for (std::size_t i = 0; i < episodes; ++i) {
        RngStream rng = eval_episode_rng(seed, i);
        const Episode ep = sampler.sample(rng);
        const Matrix queries = ds.features.gather_rows(ep.query_rows());
        std::vector<Matrix> member_probs;
        for (const auto& model : models) {
            const PrototypeBank bank = compute_prototypes(model, ds, ep);
            Matrix scores = class_neg_scores(model, bank, queries);
            for (std::size_t q = 0; q < scores.rows(); ++q) {
                auto probs = softmax(scores.row(q));
                std::copy(probs.begin(), probs.end(), scores.row(q).begin());
            }
            member_probs.push_back(std::move(scores));
        }
        std::size_t correct = 0;
        for (std::size_t q = 0; q < ep.query.size(); ++q) {
            std::vector<std::vector<double>> votes;
            for (const auto& probs : member_probs) {
                votes.emplace_back(probs.row(q).begin(), probs.row(q).end());
            }
            if (majority_vote(votes) == ep.query[q].class_pos) {
                ++correct;
            }
        }
        acc.push_back(static_cast<double>(correct) / static_cast<double>(ep.query.size()));
    }
    return summarize_accuracies(std::move(acc));
}

TrainResult train(CometModel model, const Dataset& train_ds, const Dataset& val_ds, const EpisodeSpec& spec,
                  const TrainConfig& cfg, const Visibility* visibility) {
    cfg.validate();
    TrainResult result{model, {}};
    if (cfg.episodes == 0) {
        return result;
    }

    const EpisodeSampler sampler(train_ds, spec);
    {
        // Fail before any work if validation cannot produce an episode.
        RngStream probe(cfg.seed);
        EpisodeSampler(val_ds, spec).sample(probe);
    }
    const RngStream root(cfg.seed);
    const RngStream sample_root = root.split("train-episodes");
    const RngStream dropout_root = root.split("dropout");
    const std::uint64_t val_seed = root.split("val").seed();

    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.lr;
    adam_cfg.weight_decay = cfg.weight_decay;
    std::vector<AdamState> adam;
    for (const auto& net : model.nets()) {
        adam.push_back(AdamState::for_params(net, adam_cfg));
    }

    std::vector<double> recent_losses;
    double window_loss = 0.0;
    double window_acc = 0.0;
    std::size_t window = 0;

    for (std::size_t ep_index = 1; ep_index <= cfg.episodes; ++ep_index) {
        RngStream sample_rng = sample_root.split(ep_index);
        RngStream dropout_rng = dropout_root.split(ep_index);
        const Episode ep = sampler.sample(sample_rng);
        EpisodeOutcome out = run_episode(model, train_ds, ep, ForwardMode::Train, dropout_rng, true, visibility);

        recent_losses.push_back(out.loss);
        if (recent_losses.size() > 10) {
            recent_losses.erase(recent_losses.begin());
        }
        if (!std::isfinite(out.loss)) {
            std::ostringstream msg;
            msg << "non-finite training loss at episode " << ep_index << " (seed " << cfg.seed
                << ", episode stream " << sample_rng.seed() << "); recent losses:";
            for (double l : recent_losses) {
                msg << ' ' << l;
            }
            throw NumericError(msg.str());
        }

        for (std::size_t i = 0; i < model.nets().size(); ++i) {
            adam_step(model.nets()[i], out.grads[i], adam[i]);
            update_running_stats(model.nets()[i], out.caches[i]);
        }

        window_loss += out.loss;
        window_acc += out.accuracy;
        ++window;

        const bool last = ep_index == cfg.episodes;
        std::optional<double> val_acc;
        if (ep_index % cfg.val_every == 0 || last) {
            val_acc = evaluate(model, val_ds, spec, cfg.val_episodes, val_seed, visibility).mean_accuracy;
            if (!result.log.best_val_acc || *val_acc >= *result.log.best_val_acc) {
                result.log.best_val_acc = val_acc;
                result.log.best_episode = ep_index;
                result.model = model;
            }
        }
        if (ep_index % cfg.log_every == 0 || last) {
            result.log.records.push_back({ep_index, window_loss / static_cast<double>(window),
                                          window_acc / static_cast<double>(window), val_acc});
            window_loss = 0.0;
            window_acc = 0.0;
            window = 0;
        }
    }
    return result;
}

}  // namespace comet
