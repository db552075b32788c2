#ifndef COMET_TRAIN_HPP
#define COMET_TRAIN_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "comet/dataset.hpp"
#include "comet/episodes.hpp"
#include "comet/model.hpp"

namespace comet {

struct TrainConfig {
    std::size_t episodes = 1000;
    double lr = 1e-3;
    double weight_decay = 0.0;
    std::size_t eval_episodes = 600;
    std::size_t val_episodes = 100;
    std::size_t val_every = 100;
    std::size_t log_every = 100;
    std::uint64_t seed = 7;

    void validate() const;
};

/// One line of the training log. Loss and accuracy are window means.
struct TrainRecord {
    std::size_t episode = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    std::optional<double> val_acc;

    friend bool operator==(const TrainRecord&, const TrainRecord&) = default;
};

struct TrainLog {
    std::vector<TrainRecord> records;
    std::size_t best_episode = 0;
    std::optional<double> best_val_acc;
};

struct TrainResult {
    CometModel model;  // best-validation snapshot
    TrainLog log;
};

/**
 * Episodic training with Adam. Each episode is sampled from train_ds, run in
 * Train mode, and backpropagated through both query and support embeddings.
 * Validation accuracy is measured every val_every episodes and at the end on
 * a fixed set of validation episodes; the best snapshot is kept, with ties
 * going to the later one.
 */
TrainResult train(CometModel model, const Dataset& train_ds, const Dataset& val_ds, const EpisodeSpec& spec,
                  const TrainConfig& cfg, const Visibility* visibility = nullptr);

struct EvalResult {
    double mean_accuracy = 0.0;
    double ci95_halfwidth = 0.0;
    std::vector<double> per_episode_accuracy;

    friend bool operator==(const EvalResult&, const EvalResult&) = default;
};

/// Mean and 1.96·sd/√n over per-episode accuracies (population sd).
EvalResult summarize_accuracies(std::vector<double> per_episode);

/// Episode i is sampled from RngStream(seed).split("eval").split(i); Eval mode throughout.
EvalResult evaluate(const CometModel& model, const Dataset& ds, const EpisodeSpec& spec, std::size_t episodes,
                    std::uint64_t seed, const Visibility* visibility = nullptr);

/// Same episodes as evaluate(); each query is labelled by majority_vote over the members.
EvalResult evaluate_ensemble(std::span<const CometModel> models, const Dataset& ds, const EpisodeSpec& spec,
                             std::size_t episodes, std::uint64_t seed);

/// Stream that evaluate() uses for episode i.
RngStream eval_episode_rng(std::uint64_t seed, std::size_t index);

}  // namespace comet

#endif
