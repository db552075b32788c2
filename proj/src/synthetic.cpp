#include "comet/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "comet/error.hpp"
#include "comet/rng.hpp"

namespace comet {

void SyntheticSpec::validate() const {
    if (n_classes < 2) {
        throw ValidationError("synthetic data needs at least 2 classes");
    }
    if (per_class < 1) {
        throw ValidationError("synthetic data needs at least 1 example per class");
    }
    if (n_blocks < 1 || block_size < 1) {
        throw ValidationError("synthetic data needs at least one non-empty block");
    }
    if (blocks_per_class < 1 || blocks_per_class > 2 || blocks_per_class > n_blocks) {
        throw ValidationError("blocks_per_class must be 1 or 2 and at most n_blocks");
    }
    if (!(signal_strength > 0.0) || !std::isfinite(signal_strength)) {
        throw ValidationError("signal_strength must be positive");
    }
    if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) {
        throw ValidationError("noise_sd must be non-negative");
    }
    // Classes sharing a block set need distinct sign patterns.
    const std::size_t sharing = (n_classes + n_blocks - 1) / n_blocks;
    if (block_size < 63 && (std::size_t{1} << block_size) < sharing) {
        throw ValidationError("block_size too small to give every class a distinct sign pattern");
    }
}

SyntheticData make_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    const std::size_t dim = spec.dim();
    RngStream root(spec.seed);
    RngStream pattern_rng = root.split("patterns");
    RngStream sample_rng = root.split("samples");

    GroundTruth truth;
    truth.class_blocks.resize(spec.n_classes);
    Matrix means(spec.n_classes, dim);
    // Patterns already used per block, so classes sharing a block stay distinguishable.
    std::vector<std::set<std::vector<int>>> used(spec.n_blocks);
    for (std::size_t k = 0; k < spec.n_classes; ++k) {
        auto& blocks = truth.class_blocks[k];
        blocks.push_back(k % spec.n_blocks);
        if (spec.blocks_per_class == 2) {
            blocks.push_back((k + 1) % spec.n_blocks);
            std::sort(blocks.begin(), blocks.end());
        }
        for (std::size_t b : blocks) {
            std::vector<int> signs(spec.block_size);
            do {
                for (int& s : signs) {
                    s = pattern_rng.bernoulli(0.5) ? 1 : -1;
                }
            } while (!used[b].insert(signs).second);
            for (std::size_t i = 0; i < spec.block_size; ++i) {
                means(k, b * spec.block_size + i) = spec.signal_strength * signs[i];
            }
        }
    }

    truth.separating.assign(spec.n_classes, std::vector<std::vector<std::size_t>>(spec.n_classes));
    for (std::size_t a = 0; a < spec.n_classes; ++a) {
        for (std::size_t c = 0; c < spec.n_classes; ++c) {
            for (std::size_t b = 0; b < spec.n_blocks; ++b) {
                bool differs = false;
                for (std::size_t i = 0; i < spec.block_size && !differs; ++i) {
                    const std::size_t f = b * spec.block_size + i;
                    differs = means(a, f) != means(c, f);
                }
                if (differs) {
                    truth.separating[a][c].push_back(b);
                }
            }
        }
    }

    Dataset ds;
    ds.feature_names.reserve(dim);
    for (std::size_t f = 0; f < dim; ++f) {
        ds.feature_names.push_back("f_" + std::to_string(f));
    }
    const std::size_t width = std::to_string(spec.n_classes - 1).size();
    for (std::size_t k = 0; k < spec.n_classes; ++k) {
        std::string digits = std::to_string(k);
        ds.class_names.push_back("class_" + std::string(width - digits.size(), '0') + digits);
    }
    const std::size_t n = spec.n_classes * spec.per_class;
    ds.features = Matrix(n, dim);
    ds.labels.resize(n);
    ds.row_ids.resize(n);
    for (std::size_t k = 0; k < spec.n_classes; ++k) {
        for (std::size_t i = 0; i < spec.per_class; ++i) {
            const std::size_t r = k * spec.per_class + i;
            ds.labels[r] = k;
            ds.row_ids[r] = r;
            for (std::size_t f = 0; f < dim; ++f) {
                const double noise = spec.noise_sd > 0.0 ? sample_rng.normal(0.0, spec.noise_sd) : 0.0;
                ds.features(r, f) = means(k, f) + noise;
            }
        }
    }
    ds.validate();

    std::vector<ConceptMask> masks;
    for (std::size_t b = 0; b < spec.n_blocks; ++b) {
        std::vector<std::size_t> idx(spec.block_size);
        for (std::size_t i = 0; i < spec.block_size; ++i) {
            idx[i] = b * spec.block_size + i;
        }
        masks.push_back(ConceptMask::from_indices("block_" + std::to_string(b), dim, idx));
    }
    return {std::move(ds), ConceptSet(std::move(masks), dim), std::move(truth), std::move(means)};
}

SplitSpec default_synthetic_split(std::size_t n_classes) {
    if (n_classes < 3) {
        throw ValidationError("need at least 3 classes for a train/val/test split");
    }
    const std::size_t held_out = std::max<std::size_t>(1, n_classes / 4);
    if (2 * held_out >= n_classes) {
        throw ValidationError("too few classes to leave any for training");
    }
    SplitSpec spec;
    const std::size_t n_train = n_classes - 2 * held_out;
    for (std::size_t k = 0; k < n_classes; ++k) {
        if (k < n_train) {
            spec.train.push_back(k);
        } else if (k < n_train + held_out) {
            spec.val.push_back(k);
        } else {
            spec.test.push_back(k);
        }
    }
    return spec;
}

GroundTruthConcepts synthetic_ground_truth_concepts(const SyntheticData& data) {
    GroundTruthConcepts out;
    for (std::size_t k = 0; k < data.truth.class_blocks.size(); ++k) {
        auto& set = out[data.dataset.class_names[k]];
        for (std::size_t b : data.truth.class_blocks[k]) {
            set.insert(data.concepts[b].name);
        }
    }
    return out;
}

}  // namespace comet
