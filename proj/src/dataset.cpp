#include "comet/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "comet/error.hpp"

namespace comet {

namespace {

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) {
        cells.push_back(trim(cell));
    }
    if (!line.empty() && line.back() == ',') {
        cells.emplace_back();
    }
    return cells;
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string where(const std::filesystem::path& path, std::size_t line) {
    return path.string() + ":" + std::to_string(line) + ": ";
}

}  // namespace

std::vector<std::vector<std::size_t>> Dataset::rows_by_class() const {
    std::vector<std::vector<std::size_t>> out(num_classes());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out[labels[i]].push_back(i);
    }
    return out;
}

void Dataset::validate() const {
    if (dim() == 0) {
        throw ValidationError("dataset needs at least one feature");
    }
    if (labels.size() != size() || row_ids.size() != size()) {
        throw ValidationError("dataset labels/row ids do not match the number of rows");
    }
    if (feature_names.size() != dim()) {
        throw ValidationError("dataset has " + std::to_string(feature_names.size()) + " feature names for " +
                              std::to_string(dim()) + " columns");
    }
    std::vector<std::size_t> counts(num_classes(), 0);
    for (ClassId y : labels) {
        if (y >= num_classes()) {
            throw ValidationError("label id " + std::to_string(y) + " has no class name");
        }
        ++counts[y];
    }
    for (std::size_t k = 0; k < counts.size(); ++k) {
        if (counts[k] == 0) {
            throw ValidationError("class '" + class_names[k] + "' has no examples");
        }
    }
    if (!features.all_finite()) {
        throw ValidationError("dataset contains non-finite feature values");
    }
}

ClassId Dataset::class_id(const std::string& name) const {
    auto it = std::find(class_names.begin(), class_names.end(), name);
    if (it == class_names.end()) {
        std::string known;
        for (const auto& n : class_names) {
            known += (known.empty() ? "" : ", ") + n;
        }
        throw ValidationError("unknown class '" + name + "'; available: " + known);
    }
    return static_cast<ClassId>(it - class_names.begin());
}

Dataset load_dataset(const std::filesystem::path& features_path, const std::filesystem::path& labels_path) {
    std::ifstream fin(features_path);
    if (!fin) {
        throw IoError("cannot open " + features_path.string());
    }
    Dataset ds;
    std::string line;
    if (!std::getline(fin, line)) {
        throw ParseError(where(features_path, 1) + "missing header row");
    }
    ds.feature_names = split_csv_line(line);
    const std::size_t d = ds.feature_names.size();
    if (d == 0 || (d == 1 && ds.feature_names[0].empty())) {
        throw ParseError(where(features_path, 1) + "empty header");
    }

    std::vector<double> values;
    std::size_t n = 0;
    std::size_t line_no = 1;
    while (std::getline(fin, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        auto cells = split_csv_line(line);
        if (cells.size() != d) {
            throw ParseError(where(features_path, line_no) + "row has " + std::to_string(cells.size()) +
                             " cells, header has " + std::to_string(d));
        }
        for (const auto& cell : cells) {
            double v = 0.0;
            auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() || !std::isfinite(v)) {
                throw ParseError(where(features_path, line_no) + "invalid or non-finite value '" + cell + "'");
            }
            values.push_back(v);
        }
        ++n;
    }
    ds.features = Matrix(n, d, std::move(values));

    std::ifstream lin(labels_path);
    if (!lin) {
        throw IoError("cannot open " + labels_path.string());
    }
    std::vector<std::string> names;
    line_no = 0;
    while (std::getline(lin, line)) {
        ++line_no;
        std::string name = trim(line);
        if (name.empty()) {
            if (names.size() == n) {
                continue;  // trailing blank line
            }
            throw ParseError(where(labels_path, line_no) + "empty label");
        }
        names.push_back(std::move(name));
    }
    if (names.size() != n) {
        throw ParseError(labels_path.string() + ": " + std::to_string(names.size()) + " labels for " +
                         std::to_string(n) + " feature rows");
    }

    std::set<std::string> unique(names.begin(), names.end());
    ds.class_names.assign(unique.begin(), unique.end());
    std::map<std::string, ClassId> ids;
    for (std::size_t k = 0; k < ds.class_names.size(); ++k) {
        ids[ds.class_names[k]] = k;
    }
    ds.labels.reserve(n);
    for (const auto& name : names) {
        ds.labels.push_back(ids.at(name));
    }
    ds.row_ids.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        ds.row_ids[i] = i;
    }
    ds.validate();
    return ds;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& features_path,
                   const std::filesystem::path& labels_path) {
    std::ofstream fout(features_path);
    if (!fout) {
        throw IoError("cannot write " + features_path.string());
    }
    for (std::size_t c = 0; c < ds.feature_names.size(); ++c) {
        fout << (c ? "," : "") << ds.feature_names[c];
    }
    fout << '\n';
    for (std::size_t r = 0; r < ds.size(); ++r) {
        auto row = ds.features.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            fout << (c ? "," : "") << format_double(row[c]);
        }
        fout << '\n';
    }
    std::ofstream lout(labels_path);
    if (!lout) {
        throw IoError("cannot write " + labels_path.string());
    }
    for (ClassId y : ds.labels) {
        lout << ds.class_names[y] << '\n';
    }
    if (!fout || !lout) {
        throw IoError("write failed for " + features_path.string());
    }
}

void SplitSpec::validate(std::size_t num_classes) const {
    const std::vector<const std::vector<ClassId>*> parts = {&train, &val, &test};
    const char* names[] = {"train", "val", "test"};
    std::set<ClassId> seen;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        if (parts[p]->empty()) {
            throw ValidationError(std::string("split '") + names[p] + "' has no classes");
        }
        for (ClassId k : *parts[p]) {
            if (k >= num_classes) {
                throw ValidationError("split references unknown class id " + std::to_string(k));
            }
            if (!seen.insert(k).second) {
                throw ValidationError("class id " + std::to_string(k) + " appears in more than one split");
            }
        }
    }
}

SplitSpec load_split_spec(const std::filesystem::path& path, const Dataset& ds) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    SplitSpec spec;
    auto read = [&](const char* key, std::vector<ClassId>& out) {
        if (!j.contains(key) || !j[key].is_array()) {
            throw ParseError(path.string() + ": missing array '" + key + "'");
        }
        for (const auto& name : j[key]) {
            if (!name.is_string()) {
                throw ParseError(path.string() + ": class names under '" + key + "' must be strings");
            }
            out.push_back(ds.class_id(name.get<std::string>()));
        }
    };
    read("train", spec.train);
    read("val", spec.val);
    read("test", spec.test);
    spec.validate(ds.num_classes());
    return spec;
}

void write_split_spec(const SplitSpec& spec, const Dataset& ds, const std::filesystem::path& path) {
    auto names = [&](const std::vector<ClassId>& ids) {
        nlohmann::json arr = nlohmann::json::array();
        for (ClassId k : ids) {
            arr.push_back(ds.class_names.at(k));
        }
        return arr;
    };
    nlohmann::json j;
    j["train"] = names(spec.train);
    j["val"] = names(spec.val);
    j["test"] = names(spec.test);
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << j.dump(2) << '\n';
}

Dataset subset_classes(const Dataset& ds, const std::vector<ClassId>& classes) {
    std::vector<ClassId> sorted = classes;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::ptrdiff_t> remap(ds.num_classes(), -1);
    Dataset out;
    out.feature_names = ds.feature_names;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        remap.at(sorted[i]) = static_cast<std::ptrdiff_t>(i);
        out.class_names.push_back(ds.class_names[sorted[i]]);
    }
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < ds.size(); ++r) {
        if (remap[ds.labels[r]] >= 0) {
            rows.push_back(r);
            out.labels.push_back(static_cast<ClassId>(remap[ds.labels[r]]));
            out.row_ids.push_back(ds.row_ids[r]);
        }
    }
    out.features = ds.features.gather_rows(rows);
    return out;
}

SplitDatasets split_dataset(const Dataset& ds, const SplitSpec& spec) {
    spec.validate(ds.num_classes());
    return {subset_classes(ds, spec.train), subset_classes(ds, spec.val), subset_classes(ds, spec.test)};
}

Standardizer Standardizer::fit(const Dataset& ds) {
    Standardizer s;
    const std::size_t n = ds.size();
    s.mean = column_sums(ds.features);
    for (double& m : s.mean) {
        m /= static_cast<double>(n);
    }
    s.scale.assign(ds.dim(), 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        auto row = ds.features.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            const double d = row[c] - s.mean[c];
            s.scale[c] += d * d;
        }
    }
    for (double& v : s.scale) {
        v = std::sqrt(v / static_cast<double>(n));
        if (v == 0.0) {
            v = 1.0;
        }
    }
    return s;
}

void Standardizer::apply(Dataset& ds) const {
    if (ds.dim() != mean.size()) {
        throw DimensionError("standardizer fitted on a different feature count");
    }
    for (std::size_t r = 0; r < ds.size(); ++r) {
        auto row = ds.features.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            row[c] = (row[c] - mean[c]) / scale[c];
        }
    }
}

}  // namespace comet
