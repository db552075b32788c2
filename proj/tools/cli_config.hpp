#ifndef COMET_TOOLS_CLI_CONFIG_HPP
#define COMET_TOOLS_CLI_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include <CLI11.hpp>

#include "comet/episodes.hpp"
#include "comet/model.hpp"
#include "comet/synthetic.hpp"
#include "comet/train.hpp"

namespace comet::cli {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitData = 3, kExitNumeric = 4 };

/// Bad flags, bad config file, missing files. Maps to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DataPaths {
    std::filesystem::path features;
    std::filesystem::path labels;
    std::filesystem::path splits;
};

struct RunConfig {
    std::optional<DataPaths> data;
    std::optional<SyntheticSpec> synthetic;
    std::optional<std::filesystem::path> concepts;
    bool include_whole_input = true;
    bool standardize = false;
    EpisodeSpec episode;
    TrainConfig train;
    ModelConfig model;
    std::filesystem::path out_dir = "comet_out";
    std::uint64_t seed = 7;

    /// Exactly one data source, referenced files present, every sub-config valid.
    void validate() const;
};

/// Reads a JSON config. Keys mirror the long flag names with '-' replaced by '_'.
RunConfig load_run_config(const std::filesystem::path& path);

/// Flag values that, when given, override the config file.
struct RunOverrides {
    std::optional<std::string> config;
    std::optional<std::string> features;
    std::optional<std::string> labels;
    std::optional<std::string> splits;
    std::optional<std::string> concepts;
    bool synthetic = false;
    std::optional<std::size_t> way;
    std::optional<std::size_t> shot;
    std::optional<std::size_t> query;
    std::optional<std::size_t> episodes;
    std::optional<double> lr;
    std::optional<double> weight_decay;
    std::optional<std::size_t> eval_episodes;
    std::optional<std::size_t> val_episodes;
    std::optional<std::size_t> val_every;
    std::optional<std::size_t> log_every;
    std::optional<std::size_t> hidden;
    std::optional<std::size_t> embed;
    std::optional<double> dropout;
    std::optional<std::string> weight_mode;
    std::optional<std::string> distance;
    bool no_whole_input = false;
    bool standardize = false;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
};

/// Registers the shared run flags on a subcommand; help text shows the built-in defaults.
void add_run_options(CLI::App& app, RunOverrides& overrides);

/// Config file (if any), then flags. Validates the result.
RunConfig resolve_run_config(const RunOverrides& overrides);

}  // namespace comet::cli

#endif
