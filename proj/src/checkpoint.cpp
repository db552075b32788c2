#include "comet/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "comet/error.hpp"

namespace comet {

namespace {

using nlohmann::json;

json net_to_json(const MlpParams& p) {
    json j;
    j["w1"] = std::vector<double>(p.w1.values().begin(), p.w1.values().end());
    j["b1"] = p.b1;
    j["bn_gamma"] = p.bn_gamma;
    j["bn_beta"] = p.bn_beta;
    j["bn_running_mean"] = p.bn_running_mean;
    j["bn_running_var"] = p.bn_running_var;
    j["w2"] = std::vector<double>(p.w2.values().begin(), p.w2.values().end());
    j["b2"] = p.b2;
    j["dropout_rate"] = p.dropout_rate;
    j["bn_eps"] = p.bn_eps;
    j["bn_momentum"] = p.bn_momentum;
    return j;
}

MlpParams net_from_json(const json& j, const MlpDims& dims) {
    MlpParams p;
    p.w1 = Matrix(dims.input, dims.hidden, j.at("w1").get<std::vector<double>>());
    p.b1 = j.at("b1").get<std::vector<double>>();
    p.bn_gamma = j.at("bn_gamma").get<std::vector<double>>();
    p.bn_beta = j.at("bn_beta").get<std::vector<double>>();
    p.bn_running_mean = j.at("bn_running_mean").get<std::vector<double>>();
    p.bn_running_var = j.at("bn_running_var").get<std::vector<double>>();
    p.w2 = Matrix(dims.hidden, dims.embed, j.at("w2").get<std::vector<double>>());
    p.b2 = j.at("b2").get<std::vector<double>>();
    p.dropout_rate = j.at("dropout_rate").get<double>();
    p.bn_eps = j.at("bn_eps").get<double>();
    p.bn_momentum = j.at("bn_momentum").get<double>();
    p.validate();
    return p;
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open checkpoint " + path.string());
    }
    try {
        json j;
        in >> j;
        if (j.value("format", "") != "comet-checkpoint") {
            throw ParseError(path.string() + ": not a checkpoint file");
        }
        if (j.at("version").get<int>() != kCheckpointVersion) {
            throw ParseError(path.string() + ": unsupported checkpoint version " +
                             std::to_string(j.at("version").get<int>()));
        }
        return j;
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

}  // namespace

void save_checkpoint(const CometModel& model, const std::filesystem::path& path, const Standardizer* standardizer) {
    json j;
    j["format"] = "comet-checkpoint";
    j["version"] = kCheckpointVersion;
    j["input_dim"] = model.input_dim();
    j["hidden"] = model.config().hidden;
    j["embed"] = model.config().embed;
    j["dropout"] = model.config().dropout;
    j["weight_mode"] = to_string(model.config().weight_mode);
    j["distance"] = to_string(model.config().distance);
    j["concept_hash"] = model.concepts().hash();
    json concepts = json::array();
    for (const auto& m : model.concepts().masks()) {
        concepts.push_back({{"name", m.name}, {"indices", m.indices()}});
    }
    j["concepts"] = concepts;
    json nets = json::array();
    for (const auto& net : model.nets()) {
        nets.push_back(net_to_json(net));
    }
    j["nets"] = nets;
    if (standardizer != nullptr) {
        j["standardizer"] = {{"mean", standardizer->mean}, {"scale", standardizer->scale}};
    }

    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write checkpoint " + path.string());
    }
    out << j.dump() << '\n';
    if (!out) {
        throw IoError("write failed for checkpoint " + path.string());
    }
}

CometModel load_checkpoint(const std::filesystem::path& path) {
    const json j = read_json(path);
    try {
        const auto dim = j.at("input_dim").get<std::size_t>();
        ModelConfig cfg;
        cfg.hidden = j.at("hidden").get<std::size_t>();
        cfg.embed = j.at("embed").get<std::size_t>();
        cfg.dropout = j.at("dropout").get<double>();
        cfg.weight_mode = weight_mode_from_string(j.at("weight_mode").get<std::string>());
        cfg.distance = distance_kind_from_string(j.at("distance").get<std::string>());

        std::vector<ConceptMask> masks;
        for (const auto& c : j.at("concepts")) {
            const auto idx = c.at("indices").get<std::vector<std::size_t>>();
            masks.push_back(ConceptMask::from_indices(c.at("name").get<std::string>(), dim, idx));
        }
        ConceptSet concepts(std::move(masks), dim);
        if (concepts.hash() != j.at("concept_hash").get<std::string>()) {
            throw ParseError(path.string() + ": stored concept hash does not match the stored concepts");
        }
        std::vector<MlpParams> nets;
        for (const auto& n : j.at("nets")) {
            nets.push_back(net_from_json(n, {dim, cfg.hidden, cfg.embed}));
        }
        return CometModel(std::move(concepts), cfg, std::move(nets));
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

std::optional<Standardizer> load_checkpoint_standardizer(const std::filesystem::path& path) {
    const json j = read_json(path);
    if (!j.contains("standardizer")) {
        return std::nullopt;
    }
    try {
        Standardizer s;
        s.mean = j["standardizer"].at("mean").get<std::vector<double>>();
        s.scale = j["standardizer"].at("scale").get<std::vector<double>>();
        if (s.mean.size() != j.at("input_dim").get<std::size_t>() || s.scale.size() != s.mean.size()) {
            throw ParseError(path.string() + ": standardizer length does not match the input dimension");
        }
        return s;
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

std::string checkpoint_concept_hash(const std::filesystem::path& path) {
    return read_json(path).at("concept_hash").get<std::string>();
}

}  // namespace comet
