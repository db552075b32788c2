#ifndef COMET_EPISODES_HPP
#define COMET_EPISODES_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "comet/dataset.hpp"
#include "comet/rng.hpp"

namespace comet {

struct EpisodeSpec {
    std::size_t way = 5;
    std::size_t shot = 5;
    std::size_t query_per_class = 16;

    void validate() const;
    std::size_t per_class() const { return shot + query_per_class; }

    friend bool operator==(const EpisodeSpec&, const EpisodeSpec&) = default;
};

struct QueryItem {
    std::size_t row = 0;        // row in the sampled dataset
    std::size_t class_pos = 0;  // position of its class in Episode::classes

    friend bool operator==(const QueryItem&, const QueryItem&) = default;
};

/**
 * One N-way k-shot task. `support[p]` holds the rows of class `classes[p]`;
 * queries are grouped by class position in the same order.
 */
struct Episode {
    std::vector<ClassId> classes;
    std::vector<std::vector<std::size_t>> support;
    std::vector<QueryItem> query;

    std::size_t way() const { return classes.size(); }
    /// Support rows flattened class by class.
    std::vector<std::size_t> support_rows() const;
    std::vector<std::size_t> query_rows() const;

    friend bool operator==(const Episode&, const Episode&) = default;
};

/// Precomputes per-class row lists so repeated sampling does not rescan the dataset.
class EpisodeSampler {
public:
    EpisodeSampler(const Dataset& ds, const EpisodeSpec& spec);

    /// Throws SamplingError when fewer than `way` classes have shot + query examples.
    Episode sample(RngStream& rng) const;

    const std::vector<ClassId>& qualifying_classes() const { return qualifying_; }

private:
    EpisodeSpec spec_;
    std::vector<std::vector<std::size_t>> rows_by_class_;
    std::vector<ClassId> qualifying_;
    std::size_t num_classes_ = 0;
};

Episode sample_episode(const Dataset& ds, const EpisodeSpec& spec, RngStream& rng);

/// Regression record: the seed and spec that produced an episode, plus the episode itself.
struct GoldenEpisode {
    std::uint64_t seed = 0;
    EpisodeSpec spec;
    Episode episode;
};

void write_golden_episode(const GoldenEpisode& golden, const std::filesystem::path& path);
GoldenEpisode load_golden_episode(const std::filesystem::path& path);

}  // namespace comet

#endif
