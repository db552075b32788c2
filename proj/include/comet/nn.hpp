#ifndef COMET_NN_HPP
#define COMET_NN_HPP

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "comet/matrix.hpp"
#include "comet/rng.hpp"

namespace comet {

/**
 * @file nn.hpp
 *
 * Two-layer embedding network with hand-written gradients:
 *
 *     linear(D→H) → batch norm → ReLU → dropout → linear(H→M)
 *
 * plus the distance kernels, softmax/NLL and Adam used by the episodic
 * trainer. There is no autodiff graph; every backward pass is explicit.
 */

enum class ForwardMode { Train, Eval };

enum class DistanceKind { SquaredEuclidean, Cosine };

std::string to_string(DistanceKind kind);
DistanceKind distance_kind_from_string(std::string_view name);

struct MlpDims {
    std::size_t input = 0;
    std::size_t hidden = 64;
    std::size_t embed = 64;
};

/// Parameters of one concept learner.
struct MlpParams {
    Matrix w1;  // input × hidden
    std::vector<double> b1;
    std::vector<double> bn_gamma;
    std::vector<double> bn_beta;
    std::vector<double> bn_running_mean;
    std::vector<double> bn_running_var;
    Matrix w2;  // hidden × embed
    std::vector<double> b2;
    double dropout_rate = 0.2;
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;

    MlpDims dims() const { return {w1.rows(), w1.cols(), w2.cols()}; }

    /// Throws DimensionError / ValidationError when shapes or ranges are inconsistent.
    void validate() const;

    /**
     * Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases, unit
     * gamma, zero beta, running statistics at mean 0 / variance 1.
     */
    static MlpParams init(const MlpDims& dims, double dropout_rate, RngStream& rng);

    friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

/// Gradients for the trainable fields of MlpParams. Running statistics are not trained.
struct ParamGrads {
    Matrix w1;
    std::vector<double> b1;
    std::vector<double> bn_gamma;
    std::vector<double> bn_beta;
    Matrix w2;
    std::vector<double> b2;

    static ParamGrads zeros_like(const MlpParams& params);

    ParamGrads& operator+=(const ParamGrads& other);
};

struct NamedTensor {
    std::string_view name;
    std::span<double> values;
};

struct ConstNamedTensor {
    std::string_view name;
    std::span<const double> values;
};

inline constexpr std::size_t kTrainableTensors = 6;

std::array<NamedTensor, kTrainableTensors> trainable_tensors(MlpParams& params);
std::array<ConstNamedTensor, kTrainableTensors> trainable_tensors(const MlpParams& params);
std::array<NamedTensor, kTrainableTensors> grad_tensors(ParamGrads& grads);
std::array<ConstNamedTensor, kTrainableTensors> grad_tensors(const ParamGrads& grads);

/// Intermediates kept by mlp_forward for the backward pass.
struct ForwardCache {
    ForwardMode mode = ForwardMode::Eval;
    Matrix input;
    Matrix normalized;        // x̂ after mean/variance normalization
    Matrix activated;         // gamma * x̂ + beta, before ReLU
    Matrix dropout_scale;     // 0 or 1/(1-p) per entry; empty when no dropout was applied
    Matrix hidden;            // input to the second linear layer
    std::vector<double> inv_std;
    std::vector<double> batch_mean;  // Train mode only
    std::vector<double> batch_var;   // Train mode only, biased
};

struct ForwardResult {
    Matrix output;
    ForwardCache cache;
};

ForwardResult mlp_forward(const MlpParams& params, const Matrix& x, ForwardMode mode, RngStream& rng);

/// Eval-mode forward pass. Deterministic, no cache kept.
Matrix mlp_embed(const MlpParams& params, const Matrix& x);

ParamGrads mlp_backward(const MlpParams& params, const ForwardCache& cache, const Matrix& grad_out);

/// Folds the batch statistics of a Train-mode forward pass into the running estimates.
void update_running_stats(MlpParams& params, const ForwardCache& cache);

struct AdamConfig {
    double lr = 1e-3;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamConfig config;
    ParamGrads first_moment;
    ParamGrads second_moment;
    std::size_t step = 0;

    static AdamState for_params(const MlpParams& params, const AdamConfig& config = {});
};

/// One bias-corrected Adam update. Weight decay is added to the gradient (L2 form).
void adam_step(MlpParams& params, const ParamGrads& grads, AdamState& state);

double distance(DistanceKind kind, std::span<const double> a, std::span<const double> b);

/// Accumulates scale * ∂d/∂a into grad_a and scale * ∂d/∂b into grad_b.
void accumulate_distance_grad(DistanceKind kind, std::span<const double> a, std::span<const double> b,
                              double scale, std::span<double> grad_a, std::span<double> grad_b);

struct SoftmaxNll {
    std::vector<double> probs;
    double loss = 0.0;
};

std::vector<double> softmax(std::span<const double> scores);

SoftmaxNll softmax_nll(std::span<const double> neg_scores, std::size_t true_class);

/// Index of the largest entry, lowest index on ties.
std::size_t argmax(std::span<const double> values);

}  // namespace comet

#endif
