#include "comet/concepts.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "comet/error.hpp"
#include "comet/rng.hpp"

namespace comet {

std::size_t ConceptMask::popcount() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

bool ConceptMask::is_all_ones() const {
    return !bits.empty() && popcount() == bits.size();
}

std::vector<std::size_t> ConceptMask::indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i]) {
            out.push_back(i);
        }
    }
    return out;
}

ConceptMask ConceptMask::from_indices(std::string name, std::size_t dim, std::span<const std::size_t> indices) {
    ConceptMask m;
    m.name = std::move(name);
    m.bits.assign(dim, 0);
    for (std::size_t i : indices) {
        if (i >= dim) {
            throw ValidationError("concept '" + m.name + "': feature index " + std::to_string(i) +
                                  " out of range for " + std::to_string(dim) + " features");
        }
        if (m.bits[i]) {
            throw ValidationError("concept '" + m.name + "': duplicate feature index " + std::to_string(i));
        }
        m.bits[i] = 1;
    }
    return m;
}

ConceptMask ConceptMask::all_ones(std::size_t dim, std::string name) {
    ConceptMask m;
    m.name = std::move(name);
    m.bits.assign(dim, 1);
    return m;
}

ConceptSet::ConceptSet(std::vector<ConceptMask> masks, std::size_t dim) : masks_(std::move(masks)), dim_(dim) {
    if (masks_.empty()) {
        throw ValidationError("a concept set needs at least one mask");
    }
    if (dim_ == 0) {
        throw ValidationError("concept masks need a positive feature dimension");
    }
    for (std::size_t j = 0; j < masks_.size(); ++j) {
        ConceptMask& m = masks_[j];
        m.id = j;
        if (m.bits.size() != dim_) {
            throw DimensionError("concept '" + m.name + "' has length " + std::to_string(m.bits.size()) +
                                 ", expected " + std::to_string(dim_));
        }
        for (auto b : m.bits) {
            if (b > 1) {
                throw ValidationError("concept '" + m.name + "' has a non-binary entry");
            }
        }
        if (m.popcount() == 0) {
            throw ValidationError("concept '" + m.name + "' selects no features");
        }
    }
}

std::size_t ConceptSet::whole_input_index() const {
    for (std::size_t j = 0; j < masks_.size(); ++j) {
        if (masks_[j].is_all_ones()) {
            return j;
        }
    }
    return masks_.size();
}

std::size_t ConceptSet::index_of(const std::string& name) const {
    for (std::size_t j = 0; j < masks_.size(); ++j) {
        if (masks_[j].name == name) {
            return j;
        }
    }
    throw ValidationError("unknown concept '" + name + "'");
}

std::string ConceptSet::hash() const {
    std::uint64_t h = fnv1a64(std::to_string(dim_));
    for (const auto& m : masks_) {
        h = fnv1a64("|" + m.name + ":", h);
        h = fnv1a64(std::string_view(reinterpret_cast<const char*>(m.bits.data()), m.bits.size()), h);
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<double> apply_mask(std::span<const double> x, const ConceptMask& mask) {
    if (x.size() != mask.bits.size()) {
        throw DimensionError("mask length " + std::to_string(mask.bits.size()) + " does not match input length " +
                             std::to_string(x.size()));
    }
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = mask.bits[i] ? x[i] : 0.0;
    }
    return out;
}

Matrix apply_mask(const Matrix& x, const ConceptMask& mask) {
    if (x.cols() != mask.bits.size()) {
        throw DimensionError("mask length " + std::to_string(mask.bits.size()) + " does not match input width " +
                             std::to_string(x.cols()));
    }
    Matrix out = x;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (!mask.bits[i]) {
                row[i] = 0.0;
            }
        }
    }
    return out;
}

ConceptSet with_whole_input(const ConceptSet& cs) {
    if (cs.has_whole_input()) {
        return cs;
    }
    auto masks = cs.masks();
    masks.push_back(ConceptMask::all_ones(cs.dim()));
    return ConceptSet(std::move(masks), cs.dim());
}

ConceptSet random_masks(std::size_t dim, std::size_t n_masks, std::size_t bits_per_mask, std::uint64_t seed) {
    if (bits_per_mask < 1 || bits_per_mask > dim) {
        throw ValidationError("bits per mask must lie in [1, " + std::to_string(dim) + "], got " +
                              std::to_string(bits_per_mask));
    }
    if (n_masks == 0) {
        throw ValidationError("need at least one random mask");
    }
    RngStream rng = RngStream(seed).split("random-masks");
    std::vector<std::size_t> features(dim);
    std::vector<ConceptMask> masks;
    for (std::size_t m = 0; m < n_masks; ++m) {
        std::iota(features.begin(), features.end(), std::size_t{0});
        rng.shuffle(features);
        std::vector<std::size_t> chosen(features.begin(), features.begin() + static_cast<std::ptrdiff_t>(bits_per_mask));
        std::sort(chosen.begin(), chosen.end());
        masks.push_back(ConceptMask::from_indices("random_" + std::to_string(m), dim, chosen));
    }
    return ConceptSet(std::move(masks), dim);
}

ConceptSet select_top_masks(const ConceptSet& cs, std::span<const double> scores, std::size_t keep) {
    if (scores.size() != cs.size()) {
        throw DimensionError("got " + std::to_string(scores.size()) + " scores for " + std::to_string(cs.size()) +
                             " masks");
    }
    if (keep < 1 || keep > cs.size()) {
        throw ValidationError("keep must lie in [1, " + std::to_string(cs.size()) + "], got " + std::to_string(keep));
    }
    std::vector<std::size_t> order(cs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    order.resize(keep);
    std::sort(order.begin(), order.end());
    return subset_concepts(cs, order);
}

ConceptSet subset_concepts(const ConceptSet& cs, std::span<const std::size_t> positions) {
    std::vector<ConceptMask> masks;
    for (std::size_t p : positions) {
        masks.push_back(cs[p]);
    }
    return ConceptSet(std::move(masks), cs.dim());
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

/// Splits `name: rest`; returns false for blank and comment lines. Names may contain colons
/// (GO:0008150), so the separator is the first colon followed by whitespace or end of line.
bool split_record(const std::string& raw, const std::filesystem::path& path, std::size_t line_no, std::string& name,
                  std::string& rest) {
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') {
        return false;
    }
    auto colon = line.find(':');
    for (auto c = colon; c != std::string::npos; c = line.find(':', c + 1)) {
        if (c + 1 == line.size() || std::isspace(static_cast<unsigned char>(line[c + 1]))) {
            colon = c;
            break;
        }
    }
    if (colon == std::string::npos) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected 'name: ...'");
    }
    name = trim(line.substr(0, colon));
    rest = line.substr(colon + 1);
    if (name.empty()) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) + ": empty name");
    }
    return true;
}

}  // namespace

ConceptSet load_concepts(const std::filesystem::path& path, std::size_t dim) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::vector<ConceptMask> masks;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string name;
        std::string rest;
        if (!split_record(raw, path, line_no, name, rest)) {
            continue;
        }
        std::vector<std::size_t> idx;
        std::istringstream tokens(rest);
        std::string tok;
        while (tokens >> tok) {
            std::size_t v = 0;
            auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
                throw ParseError(path.string() + ":" + std::to_string(line_no) + ": bad feature index '" + tok + "'");
            }
            idx.push_back(v);
        }
        try {
            masks.push_back(ConceptMask::from_indices(name, dim, idx));
        } catch (const ValidationError& e) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (idx.empty()) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": concept '" + name +
                             "' lists no features");
        }
    }
    if (masks.empty()) {
        throw ParseError(path.string() + ": no concepts defined");
    }
    return ConceptSet(std::move(masks), dim);
}

void write_concepts(const ConceptSet& cs, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    for (const auto& m : cs.masks()) {
        out << m.name << ':';
        for (std::size_t i : m.indices()) {
            out << ' ' << i;
        }
        out << '\n';
    }
}

GroundTruthConcepts load_ground_truth_concepts(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    GroundTruthConcepts truth;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string name;
        std::string rest;
        if (!split_record(raw, path, line_no, name, rest)) {
            continue;
        }
        std::istringstream tokens(rest);
        std::string tok;
        auto& set = truth[name];
        while (tokens >> tok) {
            set.insert(tok);
        }
    }
    return truth;
}

void write_ground_truth_concepts(const GroundTruthConcepts& truth, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    for (const auto& [cls, concepts] : truth) {
        out << cls << ':';
        for (const auto& c : concepts) {
            out << ' ' << c;
        }
        out << '\n';
    }
}

}  // namespace comet
