#ifndef COMET_SYNTHETIC_HPP
#define COMET_SYNTHETIC_HPP

#include <cstddef>
#include <cstdint>
#include <vector>

#include "comet/concepts.hpp"
#include "comet/dataset.hpp"

namespace comet {

/**
 * Planted-concept dataset description.
 *
 * Features are laid out as n_blocks contiguous blocks of block_size features
 * followed by n_noise_features pure-noise columns. Each class has a mean
 * that is ±signal_strength on its designated block(s) and zero elsewhere.
 */
struct SyntheticSpec {
    std::size_t n_classes = 20;
    std::size_t per_class = 60;
    std::size_t n_blocks = 4;
    std::size_t block_size = 8;
    std::size_t n_noise_features = 32;
    std::size_t blocks_per_class = 1;  // 1 or 2
    double signal_strength = 5.0;
    double noise_sd = 1.0;  // 0 gives the noiseless limit
    std::uint64_t seed = 7;

    std::size_t dim() const { return n_blocks * block_size + n_noise_features; }

    void validate() const;
};

/// Which blocks carry each class's signal, and which blocks tell two classes apart.
struct GroundTruth {
    std::vector<std::vector<std::size_t>> class_blocks;
    /// separating[a][b]: blocks in which the means of classes a and b differ.
    std::vector<std::vector<std::vector<std::size_t>>> separating;
};

struct SyntheticData {
    Dataset dataset;
    ConceptSet concepts;  // one mask per block, noise columns uncovered
    GroundTruth truth;
    Matrix class_means;   // n_classes × D
};

SyntheticData make_synthetic(const SyntheticSpec& spec);

/// Class split used by the generator: the last quarter of classes for test, the quarter before for val.
SplitSpec default_synthetic_split(std::size_t n_classes);

/// Ground-truth concept file contents: each class mapped to its designated block names.
GroundTruthConcepts synthetic_ground_truth_concepts(const SyntheticData& data);

}  // namespace comet

#endif
