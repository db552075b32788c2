#include "cli_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "comet/error.hpp"

namespace comet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void require_file(const fs::path& path, const char* what) {
    if (!fs::is_regular_file(path)) {
        throw ConfigError(std::string(what) + " file not found: " + path.string());
    }
}

template <typename T>
std::string with_default(const std::string& text, const T& value) {
    std::ostringstream s;
    s << text << " (default: " << value << ")";
    return s.str();
}

SyntheticSpec synthetic_from_json(const json& j) {
    static const std::set<std::string> known = {"n_classes",        "per_class",       "n_blocks",
                                                "block_size",       "n_noise_features", "blocks_per_class",
                                                "signal_strength",  "noise_sd",         "seed"};
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) {
            throw ConfigError("unknown key in \"synthetic\": " + key);
        }
    }
    SyntheticSpec s;
    s.n_classes = j.value("n_classes", s.n_classes);
    s.per_class = j.value("per_class", s.per_class);
    s.n_blocks = j.value("n_blocks", s.n_blocks);
    s.block_size = j.value("block_size", s.block_size);
    s.n_noise_features = j.value("n_noise_features", s.n_noise_features);
    s.blocks_per_class = j.value("blocks_per_class", s.blocks_per_class);
    s.signal_strength = j.value("signal_strength", s.signal_strength);
    s.noise_sd = j.value("noise_sd", s.noise_sd);
    s.seed = j.value("seed", s.seed);
    return s;
}

}  // namespace

void RunConfig::validate() const {
    if (data.has_value() == synthetic.has_value()) {
        throw ConfigError("give exactly one data source: --features/--labels/--splits or --synthetic");
    }
    if (data) {
        require_file(data->features, "features");
        require_file(data->labels, "labels");
        require_file(data->splits, "splits");
    }
    if (concepts) {
        require_file(*concepts, "concepts");
    }
    try {
        if (synthetic) {
            synthetic->validate();
        }
        episode.validate();
        train.validate();
        if (model.hidden < 1 || model.embed < 1) {
            throw ValidationError("hidden and embed sizes must be at least 1");
        }
        if (!(model.dropout >= 0.0 && model.dropout < 1.0)) {
            throw ValidationError("dropout must lie in [0, 1)");
        }
    } catch (const ValidationError& e) {
        throw ConfigError(e.what());
    }
}

RunConfig load_run_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file " + path.string());
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    if (!j.is_object()) {
        throw ConfigError(path.string() + ": expected a JSON object");
    }
    static const std::set<std::string> known = {
        "features",   "labels",         "splits",       "concepts",      "synthetic", "way",
        "shot",       "query",          "episodes",     "lr",            "weight_decay",
        "eval_episodes", "val_episodes", "val_every",   "log_every",     "hidden",    "embed",
        "dropout",    "weight_mode",    "distance",     "include_whole_input", "standardize",
        "out",        "seed"};
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) {
            throw ConfigError(path.string() + ": unknown key " + key);
        }
    }

    // Relative paths in a config file are taken relative to the file itself.
    const fs::path base = path.parent_path();
    auto path_of = [&](const char* key) { return base / fs::path(j.at(key).get<std::string>()); };

    RunConfig cfg;
    try {
        if (j.contains("features") || j.contains("labels") || j.contains("splits")) {
            if (!(j.contains("features") && j.contains("labels") && j.contains("splits"))) {
                throw ConfigError(path.string() + ": features, labels and splits must be given together");
            }
            cfg.data = DataPaths{path_of("features"), path_of("labels"), path_of("splits")};
        }
        if (j.contains("concepts")) {
            cfg.concepts = path_of("concepts");
        }
        if (j.contains("synthetic")) {
            cfg.synthetic = synthetic_from_json(j.at("synthetic"));
        }
        cfg.episode.way = j.value("way", cfg.episode.way);
        cfg.episode.shot = j.value("shot", cfg.episode.shot);
        cfg.episode.query_per_class = j.value("query", cfg.episode.query_per_class);
        cfg.train.episodes = j.value("episodes", cfg.train.episodes);
        cfg.train.lr = j.value("lr", cfg.train.lr);
        cfg.train.weight_decay = j.value("weight_decay", cfg.train.weight_decay);
        cfg.train.eval_episodes = j.value("eval_episodes", cfg.train.eval_episodes);
        cfg.train.val_episodes = j.value("val_episodes", cfg.train.val_episodes);
        cfg.train.val_every = j.value("val_every", cfg.train.val_every);
        cfg.train.log_every = j.value("log_every", cfg.train.log_every);
        cfg.model.hidden = j.value("hidden", cfg.model.hidden);
        cfg.model.embed = j.value("embed", cfg.model.embed);
        cfg.model.dropout = j.value("dropout", cfg.model.dropout);
        if (j.contains("weight_mode")) {
            cfg.model.weight_mode = weight_mode_from_string(j.at("weight_mode").get<std::string>());
        }
        if (j.contains("distance")) {
            cfg.model.distance = distance_kind_from_string(j.at("distance").get<std::string>());
        }
        cfg.include_whole_input = j.value("include_whole_input", cfg.include_whole_input);
        cfg.standardize = j.value("standardize", cfg.standardize);
        if (j.contains("out")) {
            cfg.out_dir = path_of("out");
        }
        cfg.seed = j.value("seed", cfg.seed);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    } catch (const ValidationError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    cfg.train.seed = cfg.seed;
    return cfg;
}

void add_run_options(CLI::App& app, RunOverrides& o) {
    const RunConfig d;
    app.add_option("--config", o.config, "JSON config file; flags override its values");
    app.add_option("--features", o.features, "features CSV (header row, one example per line)");
    app.add_option("--labels", o.labels, "labels file, one class name per line");
    app.add_option("--splits", o.splits, "JSON file with train/val/test class-name arrays");
    app.add_option("--concepts", o.concepts, "concept file, lines of 'name: i j k'");
    app.add_flag("--synthetic", o.synthetic, "use the built-in planted-concept dataset instead of files");
    app.add_option("--way", o.way, with_default("classes per episode", d.episode.way));
    app.add_option("--shot", o.shot, with_default("support examples per class", d.episode.shot));
    app.add_option("--query", o.query, with_default("query examples per class", d.episode.query_per_class));
    app.add_option("--episodes", o.episodes, with_default("training episodes", d.train.episodes));
    app.add_option("--lr", o.lr, with_default("Adam learning rate", d.train.lr));
    app.add_option("--weight-decay", o.weight_decay, with_default("L2 weight decay", d.train.weight_decay));
    app.add_option("--eval-episodes", o.eval_episodes,
                   with_default("test episodes for evaluation", d.train.eval_episodes));
    app.add_option("--val-episodes", o.val_episodes,
                   with_default("validation episodes per check", d.train.val_episodes));
    app.add_option("--val-every", o.val_every, with_default("episodes between validation checks", d.train.val_every));
    app.add_option("--log-every", o.log_every, with_default("episodes per training-log record", d.train.log_every));
    app.add_option("--hidden", o.hidden, with_default("hidden width", d.model.hidden));
    app.add_option("--embed", o.embed, with_default("embedding width", d.model.embed));
    app.add_option("--dropout", o.dropout, with_default("dropout rate", d.model.dropout));
    app.add_option("--weight-mode", o.weight_mode, "per_concept or shared (default: per_concept)");
    app.add_option("--distance", o.distance, "euclidean (squared) or cosine (default: euclidean)");
    app.add_flag("--no-whole-input", o.no_whole_input, "do not add the all-features concept");
    app.add_flag("--standardize", o.standardize, "z-score features with train-split statistics");
    app.add_option("--out", o.out, with_default("output directory", d.out_dir.string()));
    app.add_option("--seed", o.seed, with_default("root seed", d.seed));
}

RunConfig resolve_run_config(const RunOverrides& o) {
    RunConfig cfg = o.config ? load_run_config(*o.config) : RunConfig{};
    if (o.features || o.labels || o.splits) {
        if (!(o.features && o.labels && o.splits)) {
            throw ConfigError("--features, --labels and --splits must be given together");
        }
        cfg.data = DataPaths{*o.features, *o.labels, *o.splits};
        cfg.synthetic.reset();
    }
    if (o.synthetic) {
        if (o.features) {
            throw ConfigError("--synthetic conflicts with --features/--labels/--splits");
        }
        cfg.data.reset();
        if (!cfg.synthetic) {
            cfg.synthetic = SyntheticSpec{};
        }
    }
    if (o.concepts) cfg.concepts = fs::path(*o.concepts);
    if (o.way) cfg.episode.way = *o.way;
    if (o.shot) cfg.episode.shot = *o.shot;
    if (o.query) cfg.episode.query_per_class = *o.query;
    if (o.episodes) cfg.train.episodes = *o.episodes;
    if (o.lr) cfg.train.lr = *o.lr;
    if (o.weight_decay) cfg.train.weight_decay = *o.weight_decay;
    if (o.eval_episodes) cfg.train.eval_episodes = *o.eval_episodes;
    if (o.val_episodes) cfg.train.val_episodes = *o.val_episodes;
    if (o.val_every) cfg.train.val_every = *o.val_every;
    if (o.log_every) cfg.train.log_every = *o.log_every;
    if (o.hidden) cfg.model.hidden = *o.hidden;
    if (o.embed) cfg.model.embed = *o.embed;
    if (o.dropout) cfg.model.dropout = *o.dropout;
    try {
        if (o.weight_mode) cfg.model.weight_mode = weight_mode_from_string(*o.weight_mode);
        if (o.distance) cfg.model.distance = distance_kind_from_string(*o.distance);
    } catch (const ValidationError& e) {
        throw ConfigError(e.what());
    }
    if (o.no_whole_input) cfg.include_whole_input = false;
    if (o.standardize) cfg.standardize = true;
    if (o.out) cfg.out_dir = fs::path(*o.out);
    if (o.seed) cfg.seed = *o.seed;
    cfg.train.seed = cfg.seed;
    cfg.validate();
    return cfg;
}

}  // namespace comet::cli
