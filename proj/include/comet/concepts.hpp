#ifndef COMET_CONCEPTS_HPP
#define COMET_CONCEPTS_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "comet/matrix.hpp"

namespace comet {

inline constexpr const char* kWholeInputName = "whole_input";

/// A named subset of input features, stored as a 0/1 vector over all D features.
struct ConceptMask {
    std::size_t id = 0;
    std::string name;
    std::vector<std::uint8_t> bits;

    std::size_t popcount() const;
    bool is_all_ones() const;
    std::vector<std::size_t> indices() const;

    static ConceptMask from_indices(std::string name, std::size_t dim, std::span<const std::size_t> indices);
    static ConceptMask all_ones(std::size_t dim, std::string name = kWholeInputName);

    friend bool operator==(const ConceptMask&, const ConceptMask&) = default;
};

/**
 * Ordered collection of concept masks over a common feature space.
 *
 * Ids are reassigned to positions on construction. Overlapping, redundant
 * and incomplete masks are all accepted; only empty masks and length
 * mismatches are rejected.
 */
class ConceptSet {
public:
    ConceptSet(std::vector<ConceptMask> masks, std::size_t dim);

    std::size_t size() const { return masks_.size(); }
    std::size_t dim() const { return dim_; }
    const ConceptMask& operator[](std::size_t j) const { return masks_.at(j); }
    const std::vector<ConceptMask>& masks() const { return masks_; }

    /// Position of the first all-ones mask, or size() when there is none.
    std::size_t whole_input_index() const;
    bool has_whole_input() const { return whole_input_index() < size(); }

    /// Position of the named mask; throws ValidationError when absent.
    std::size_t index_of(const std::string& name) const;

    /// Stable content hash over dimension, names and bits (16 hex digits).
    std::string hash() const;

    friend bool operator==(const ConceptSet&, const ConceptSet&) = default;

private:
    std::vector<ConceptMask> masks_;
    std::size_t dim_;
};

/// Hadamard product x ∘ c.
std::vector<double> apply_mask(std::span<const double> x, const ConceptMask& mask);

/// Row-wise x ∘ c for a whole batch.
Matrix apply_mask(const Matrix& x, const ConceptMask& mask);

/// Appends an all-ones "whole_input" mask unless one is already present.
ConceptSet with_whole_input(const ConceptSet& cs);

/// n_masks masks of exactly bits_per_mask distinct features each, deterministic in seed.
ConceptSet random_masks(std::size_t dim, std::size_t n_masks, std::size_t bits_per_mask, std::uint64_t seed);

/// The `keep` highest-scoring masks in their original order; ties go to the lower id.
ConceptSet select_top_masks(const ConceptSet& cs, std::span<const double> scores, std::size_t keep);

/// Keeps the masks at the given positions, in the given order.
ConceptSet subset_concepts(const ConceptSet& cs, std::span<const std::size_t> positions);

/// Reads lines of the form `name: i1 i2 i3` (0-based feature indices).
ConceptSet load_concepts(const std::filesystem::path& path, std::size_t dim);

void write_concepts(const ConceptSet& cs, const std::filesystem::path& path);

/// class name -> ground-truth concept names, from lines `class_name: concept concept ...`.
using GroundTruthConcepts = std::map<std::string, std::set<std::string>>;

GroundTruthConcepts load_ground_truth_concepts(const std::filesystem::path& path);

void write_ground_truth_concepts(const GroundTruthConcepts& truth, const std::filesystem::path& path);

}  // namespace comet

#endif
