#ifndef COMET_DATASET_HPP
#define COMET_DATASET_HPP

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "comet/matrix.hpp"

namespace comet {

using ClassId = std::size_t;

/**
 * Labelled feature matrix.
 *
 * Class ids are dense in [0, class_names.size()). `row_ids` records the row
 * each example had in the file it was loaded from, so that per-split datasets
 * can still be traced back to source rows.
 */
struct Dataset {
    Matrix features;
    std::vector<ClassId> labels;
    std::vector<std::string> class_names;
    std::vector<std::string> feature_names;
    std::vector<std::size_t> row_ids;

    std::size_t size() const { return features.rows(); }
    std::size_t dim() const { return features.cols(); }
    std::size_t num_classes() const { return class_names.size(); }

    /// Row indices of each class, ascending.
    std::vector<std::vector<std::size_t>> rows_by_class() const;

    /// Throws ValidationError if the invariants do not hold.
    void validate() const;

    /// Index of the named class; throws ValidationError listing the available names.
    ClassId class_id(const std::string& name) const;
};

/// Reads features.csv (header + one row per example) and labels.csv (one class name per line).
Dataset load_dataset(const std::filesystem::path& features_path, const std::filesystem::path& labels_path);

/// Writes the two files read by load_dataset. Values use shortest round-trip formatting.
void write_dataset(const Dataset& ds, const std::filesystem::path& features_path,
                   const std::filesystem::path& labels_path);

struct SplitSpec {
    std::vector<ClassId> train;
    std::vector<ClassId> val;
    std::vector<ClassId> test;

    void validate(std::size_t num_classes) const;
};

struct SplitDatasets {
    Dataset train;
    Dataset val;
    Dataset test;
};

/// Parses {"train": [...], "val": [...], "test": [...]} with class names, resolved against ds.
SplitSpec load_split_spec(const std::filesystem::path& path, const Dataset& ds);

void write_split_spec(const SplitSpec& spec, const Dataset& ds, const std::filesystem::path& path);

SplitDatasets split_dataset(const Dataset& ds, const SplitSpec& spec);

/// Keeps only the rows of the given classes, re-indexed densely in ascending original-id order.
Dataset subset_classes(const Dataset& ds, const std::vector<ClassId>& classes);

/// Per-feature z-scoring fitted on one split and applied to others.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> scale;

    static Standardizer fit(const Dataset& ds);
    void apply(Dataset& ds) const;
};

}  // namespace comet

#endif
