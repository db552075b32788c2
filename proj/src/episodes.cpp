#include "comet/episodes.hpp"

#include <fstream>

#include <json.hpp>

#include "comet/error.hpp"

namespace comet {

void EpisodeSpec::validate() const {
    if (way < 2) {
        throw ValidationError("episodes need way >= 2");
    }
    if (shot < 1) {
        throw ValidationError("episodes need shot >= 1");
    }
    if (query_per_class < 1) {
        throw ValidationError("episodes need query_per_class >= 1");
    }
}

std::vector<std::size_t> Episode::support_rows() const {
    std::vector<std::size_t> out;
    for (const auto& rows : support) {
        out.insert(out.end(), rows.begin(), rows.end());
    }
    return out;
}

std::vector<std::size_t> Episode::query_rows() const {
    std::vector<std::size_t> out;
    out.reserve(query.size());
    for (const auto& q : query) {
        out.push_back(q.row);
    }
    return out;
}

EpisodeSampler::EpisodeSampler(const Dataset& ds, const EpisodeSpec& spec)
    : spec_(spec), rows_by_class_(ds.rows_by_class()), num_classes_(ds.num_classes()) {
    spec_.validate();
    for (ClassId k = 0; k < rows_by_class_.size(); ++k) {
        if (rows_by_class_[k].size() >= spec_.per_class()) {
            qualifying_.push_back(k);
        }
    }
}

Episode EpisodeSampler::sample(RngStream& rng) const {
    if (qualifying_.size() < spec_.way) {
        throw SamplingError("a " + std::to_string(spec_.way) + "-way episode needs " + std::to_string(spec_.way) +
                            " classes with at least " + std::to_string(spec_.per_class()) + " examples; only " +
                            std::to_string(qualifying_.size()) + " of " + std::to_string(num_classes_) +
                            " classes qualify");
    }
    std::vector<ClassId> classes = qualifying_;
    rng.shuffle(classes);
    classes.resize(spec_.way);

    Episode ep;
    ep.classes = classes;
    ep.support.resize(spec_.way);
    ep.query.reserve(spec_.way * spec_.query_per_class);
    for (std::size_t p = 0; p < spec_.way; ++p) {
        std::vector<std::size_t> rows = rows_by_class_[classes[p]];
        rng.shuffle(rows);
        ep.support[p].assign(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(spec_.shot));
        for (std::size_t i = spec_.shot; i < spec_.per_class(); ++i) {
            ep.query.push_back({rows[i], p});
        }
    }
    return ep;
}

Episode sample_episode(const Dataset& ds, const EpisodeSpec& spec, RngStream& rng) {
    return EpisodeSampler(ds, spec).sample(rng);
}

void write_golden_episode(const GoldenEpisode& golden, const std::filesystem::path& path) {
    nlohmann::json j;
    j["seed"] = golden.seed;
    j["way"] = golden.spec.way;
    j["shot"] = golden.spec.shot;
    j["query_per_class"] = golden.spec.query_per_class;
    j["classes"] = golden.episode.classes;
    j["support"] = golden.episode.support;
    nlohmann::json q = nlohmann::json::array();
    for (const auto& item : golden.episode.query) {
        q.push_back({item.row, item.class_pos});
    }
    j["query"] = q;
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << j.dump() << '\n';
}

GoldenEpisode load_golden_episode(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    try {
        nlohmann::json j;
        in >> j;
        GoldenEpisode g;
        g.seed = j.at("seed").get<std::uint64_t>();
        g.spec.way = j.at("way").get<std::size_t>();
        g.spec.shot = j.at("shot").get<std::size_t>();
        g.spec.query_per_class = j.at("query_per_class").get<std::size_t>();
        g.episode.classes = j.at("classes").get<std::vector<ClassId>>();
        g.episode.support = j.at("support").get<std::vector<std::vector<std::size_t>>>();
        for (const auto& item : j.at("query")) {
            g.episode.query.push_back({item.at(0).get<std::size_t>(), item.at(1).get<std::size_t>()});
        }
        return g;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

}  // namespace comet
