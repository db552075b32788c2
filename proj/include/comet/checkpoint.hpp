#ifndef COMET_CHECKPOINT_HPP
#define COMET_CHECKPOINT_HPP

#include <filesystem>
#include <optional>
#include <string>

#include "comet/model.hpp"

namespace comet {

inline constexpr int kCheckpointVersion = 1;

/**
 * Checkpoints are JSON documents holding a version, the architecture, the
 * concept set and its hash, and every parameter tensor including batch-norm
 * running statistics. Doubles are written with round-trip precision, so a
 * save/load cycle reproduces the model exactly.
 */
void save_checkpoint(const CometModel& model, const std::filesystem::path& path,
                     const Standardizer* standardizer = nullptr);

CometModel load_checkpoint(const std::filesystem::path& path);

/// Feature scaling saved with the model, if training used one.
std::optional<Standardizer> load_checkpoint_standardizer(const std::filesystem::path& path);

/// The concept-set hash recorded in a checkpoint, without loading the parameters.
std::string checkpoint_concept_hash(const std::filesystem::path& path);

}  // namespace comet

#endif
