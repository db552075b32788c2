#include "comet/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "comet/error.hpp"

namespace comet {

std::string to_string(DistanceKind kind) {
    return kind == DistanceKind::Cosine ? "cosine" : "euclidean";
}

DistanceKind distance_kind_from_string(std::string_view name) {
    if (name == "euclidean" || name == "squared_euclidean") {
        return DistanceKind::SquaredEuclidean;
    }
    if (name == "cosine") {
        return DistanceKind::Cosine;
    }
    throw ValidationError("unknown distance '" + std::string(name) + "' (expected euclidean or cosine)");
}

namespace {

void require_len(std::size_t got, std::size_t want, const char* what) {
    if (got != want) {
        throw DimensionError(std::string(what) + ": length " + std::to_string(got) + ", expected " +
                             std::to_string(want));
    }
}

}  // namespace

void MlpParams::validate() const {
    const std::size_t h = w1.cols();
    require_len(b1.size(), h, "b1");
    require_len(bn_gamma.size(), h, "bn_gamma");
    require_len(bn_beta.size(), h, "bn_beta");
    require_len(bn_running_mean.size(), h, "bn_running_mean");
    require_len(bn_running_var.size(), h, "bn_running_var");
    require_len(w2.rows(), h, "w2 rows");
    require_len(b2.size(), w2.cols(), "b2");
    if (w1.rows() == 0 || h == 0 || w2.cols() == 0) {
        throw DimensionError("network dimensions must be positive");
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
        throw ValidationError("dropout rate must lie in [0, 1)");
    }
    for (double v : bn_running_var) {
        if (!(v >= 0.0)) {
            throw ValidationError("batch-norm running variance must be non-negative");
        }
    }
}

MlpParams MlpParams::init(const MlpDims& dims, double dropout_rate, RngStream& rng) {
    MlpParams p;
    const double bound1 = 1.0 / std::sqrt(static_cast<double>(dims.input));
    const double bound2 = 1.0 / std::sqrt(static_cast<double>(dims.hidden));
    p.w1 = Matrix(dims.input, dims.hidden);
    for (double& v : p.w1.values()) {
        v = rng.uniform(-bound1, bound1);
    }
    p.b1.resize(dims.hidden);
    for (double& v : p.b1) {
        v = rng.uniform(-bound1, bound1);
    }
    p.bn_gamma.assign(dims.hidden, 1.0);
    p.bn_beta.assign(dims.hidden, 0.0);
    p.bn_running_mean.assign(dims.hidden, 0.0);
    p.bn_running_var.assign(dims.hidden, 1.0);
    p.w2 = Matrix(dims.hidden, dims.embed);
    for (double& v : p.w2.values()) {
        v = rng.uniform(-bound2, bound2);
    }
    p.b2.resize(dims.embed);
    for (double& v : p.b2) {
        v = rng.uniform(-bound2, bound2);
    }
    p.dropout_rate = dropout_rate;
    p.validate();
    return p;
}

ParamGrads ParamGrads::zeros_like(const MlpParams& params) {
    ParamGrads g;
    g.w1 = Matrix(params.w1.rows(), params.w1.cols());
    g.b1.assign(params.b1.size(), 0.0);
    g.bn_gamma.assign(params.bn_gamma.size(), 0.0);
    g.bn_beta.assign(params.bn_beta.size(), 0.0);
    g.w2 = Matrix(params.w2.rows(), params.w2.cols());
    g.b2.assign(params.b2.size(), 0.0);
    return g;
}

ParamGrads& ParamGrads::operator+=(const ParamGrads& other) {
    auto mine = grad_tensors(*this);
    auto theirs = grad_tensors(other);
    for (std::size_t t = 0; t < kTrainableTensors; ++t) {
        require_len(theirs[t].values.size(), mine[t].values.size(), "gradient accumulation");
        for (std::size_t i = 0; i < mine[t].values.size(); ++i) {
            mine[t].values[i] += theirs[t].values[i];
        }
    }
    return *this;
}

std::array<NamedTensor, kTrainableTensors> trainable_tensors(MlpParams& p) {
    return {{{"w1", p.w1.values()},
             {"b1", p.b1},
             {"bn_gamma", p.bn_gamma},
             {"bn_beta", p.bn_beta},
             {"w2", p.w2.values()},
             {"b2", p.b2}}};
}

std::array<ConstNamedTensor, kTrainableTensors> trainable_tensors(const MlpParams& p) {
    return {{{"w1", p.w1.values()},
             {"b1", p.b1},
             {"bn_gamma", p.bn_gamma},
             {"bn_beta", p.bn_beta},
             {"w2", p.w2.values()},
             {"b2", p.b2}}};
}

std::array<NamedTensor, kTrainableTensors> grad_tensors(ParamGrads& g) {
    return {{{"w1", g.w1.values()},
             {"b1", g.b1},
             {"bn_gamma", g.bn_gamma},
             {"bn_beta", g.bn_beta},
             {"w2", g.w2.values()},
             {"b2", g.b2}}};
}

std::array<ConstNamedTensor, kTrainableTensors> grad_tensors(const ParamGrads& g) {
    return {{{"w1", g.w1.values()},
             {"b1", g.b1},
             {"bn_gamma", g.bn_gamma},
             {"bn_beta", g.bn_beta},
             {"w2", g.w2.values()},
             {"b2", g.b2}}};
}

ForwardResult mlp_forward(const MlpParams& params, const Matrix& x, ForwardMode mode, RngStream& rng) {
    const MlpDims dims = params.dims();
    if (x.cols() != dims.input) {
        throw DimensionError("input has " + std::to_string(x.cols()) + " features, network expects " +
                             std::to_string(dims.input));
    }
    const std::size_t n = x.rows();
    if (n == 0) {
        throw DimensionError("empty input batch");
    }
    if (mode == ForwardMode::Train && n < 2) {
        throw BatchSizeError("Train-mode batch normalization needs at least 2 rows, got " + std::to_string(n));
    }

    ForwardResult result;
    ForwardCache& cache = result.cache;
    cache.mode = mode;
    cache.input = x;

    Matrix z = matmul(x, params.w1);
    for (std::size_t r = 0; r < n; ++r) {
        auto row = z.row(r);
        for (std::size_t c = 0; c < dims.hidden; ++c) {
            row[c] += params.b1[c];
        }
    }

    std::vector<double> mean(dims.hidden);
    std::vector<double> var(dims.hidden);
    if (mode == ForwardMode::Train) {
        mean = column_sums(z);
        for (double& m : mean) {
            m /= static_cast<double>(n);
        }
        std::fill(var.begin(), var.end(), 0.0);
        for (std::size_t r = 0; r < n; ++r) {
            auto row = z.row(r);
            for (std::size_t c = 0; c < dims.hidden; ++c) {
                const double d = row[c] - mean[c];
                var[c] += d * d;
            }
        }
        for (double& v : var) {
            v /= static_cast<double>(n);
        }
        cache.batch_mean = mean;
        cache.batch_var = var;
    } else {
        mean = params.bn_running_mean;
        var = params.bn_running_var;
    }

    cache.inv_std.resize(dims.hidden);
    for (std::size_t c = 0; c < dims.hidden; ++c) {
        cache.inv_std[c] = 1.0 / std::sqrt(var[c] + params.bn_eps);
    }

    cache.normalized = Matrix(n, dims.hidden);
    cache.activated = Matrix(n, dims.hidden);
    cache.hidden = Matrix(n, dims.hidden);
    const bool drop = mode == ForwardMode::Train && params.dropout_rate > 0.0;
    if (drop) {
        cache.dropout_scale = Matrix(n, dims.hidden);
    }
    const double keep_scale = 1.0 / (1.0 - params.dropout_rate);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < dims.hidden; ++c) {
            const double xhat = (z(r, c) - mean[c]) * cache.inv_std[c];
            const double a = params.bn_gamma[c] * xhat + params.bn_beta[c];
            cache.normalized(r, c) = xhat;
            cache.activated(r, c) = a;
            double h = a > 0.0 ? a : 0.0;
            if (drop) {
                const double s = rng.bernoulli(params.dropout_rate) ? 0.0 : keep_scale;
                cache.dropout_scale(r, c) = s;
                h *= s;
            }
            cache.hidden(r, c) = h;
        }
    }

    result.output = matmul(cache.hidden, params.w2);
    for (std::size_t r = 0; r < n; ++r) {
        auto row = result.output.row(r);
        for (std::size_t c = 0; c < dims.embed; ++c) {
            row[c] += params.b2[c];
        }
    }
    return result;
}

Matrix mlp_embed(const MlpParams& params, const Matrix& x) {
    RngStream unused(0);
    return mlp_forward(params, x, ForwardMode::Eval, unused).output;
}

ParamGrads mlp_backward(const MlpParams& params, const ForwardCache& cache, const Matrix& grad_out) {
    const MlpDims dims = params.dims();
    const std::size_t n = cache.input.rows();
    if (grad_out.rows() != n || grad_out.cols() != dims.embed) {
        throw DimensionError("upstream gradient is " + std::to_string(grad_out.rows()) + "x" +
                             std::to_string(grad_out.cols()) + ", expected " + std::to_string(n) + "x" +
                             std::to_string(dims.embed));
    }
    if (cache.hidden.rows() != n || cache.hidden.cols() != dims.hidden || cache.input.cols() != dims.input) {
        throw DimensionError("forward cache does not match the network shape");
    }

    ParamGrads g;
    g.w2 = matmul_transpose_a(cache.hidden, grad_out);
    g.b2 = column_sums(grad_out);

    Matrix d = matmul_transpose_b(grad_out, params.w2);  // ∂/∂hidden
    const bool dropped = !cache.dropout_scale.empty();
    g.bn_gamma.assign(dims.hidden, 0.0);
    g.bn_beta.assign(dims.hidden, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < dims.hidden; ++c) {
            double v = d(r, c);
            if (dropped) {
                v *= cache.dropout_scale(r, c);
            }
            if (cache.activated(r, c) <= 0.0) {
                v = 0.0;
            }
            g.bn_gamma[c] += v * cache.normalized(r, c);
            g.bn_beta[c] += v;
            d(r, c) = v * params.bn_gamma[c];  // now ∂/∂x̂
        }
    }

    if (cache.mode == ForwardMode::Train) {
        std::vector<double> sum_d(dims.hidden, 0.0);
        std::vector<double> sum_dx(dims.hidden, 0.0);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < dims.hidden; ++c) {
                sum_d[c] += d(r, c);
                sum_dx[c] += d(r, c) * cache.normalized(r, c);
            }
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < dims.hidden; ++c) {
                d(r, c) = cache.inv_std[c] * inv_n *
                          (static_cast<double>(n) * d(r, c) - sum_d[c] - cache.normalized(r, c) * sum_dx[c]);
            }
        }
    } else {
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < dims.hidden; ++c) {
                d(r, c) *= cache.inv_std[c];
            }
        }
    }

    g.w1 = matmul_transpose_a(cache.input, d);
    g.b1 = column_sums(d);
    return g;
}

void update_running_stats(MlpParams& params, const ForwardCache& cache) {
    if (cache.mode != ForwardMode::Train) {
        return;
    }
    const double m = params.bn_momentum;
    const double n = static_cast<double>(cache.input.rows());
    for (std::size_t c = 0; c < params.bn_running_mean.size(); ++c) {
        const double unbiased = cache.batch_var[c] * n / (n - 1.0);
        params.bn_running_mean[c] = (1.0 - m) * params.bn_running_mean[c] + m * cache.batch_mean[c];
        params.bn_running_var[c] = (1.0 - m) * params.bn_running_var[c] + m * unbiased;
    }
}

AdamState AdamState::for_params(const MlpParams& params, const AdamConfig& config) {
    if (!(config.lr > 0.0) || !(config.weight_decay >= 0.0)) {
        throw ValidationError("Adam needs lr > 0 and weight_decay >= 0");
    }
    return AdamState{config, ParamGrads::zeros_like(params), ParamGrads::zeros_like(params), 0};
}

void adam_step(MlpParams& params, const ParamGrads& grads, AdamState& state) {
    auto p = trainable_tensors(params);
    auto g = grad_tensors(grads);
    auto m = grad_tensors(state.first_moment);
    auto v = grad_tensors(state.second_moment);
    for (std::size_t t = 0; t < kTrainableTensors; ++t) {
        if (g[t].values.size() != p[t].values.size() || m[t].values.size() != p[t].values.size()) {
            throw DimensionError(std::string("Adam: shape mismatch for ") + std::string(p[t].name));
        }
        for (std::size_t i = 0; i < g[t].values.size(); ++i) {
            if (!std::isfinite(g[t].values[i])) {
                throw NumericError("non-finite gradient in " + std::string(g[t].name) + "[" + std::to_string(i) +
                                   "]");
            }
        }
    }

    const AdamConfig& cfg = state.config;
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bias1 = 1.0 - std::pow(cfg.beta1, t);
    const double bias2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t k = 0; k < kTrainableTensors; ++k) {
        for (std::size_t i = 0; i < p[k].values.size(); ++i) {
            const double grad = g[k].values[i] + cfg.weight_decay * p[k].values[i];
            double& mi = m[k].values[i];
            double& vi = v[k].values[i];
            mi = cfg.beta1 * mi + (1.0 - cfg.beta1) * grad;
            vi = cfg.beta2 * vi + (1.0 - cfg.beta2) * grad * grad;
            p[k].values[i] -= cfg.lr * (mi / bias1) / (std::sqrt(vi / bias2) + cfg.eps);
        }
    }
}

double distance(DistanceKind kind, std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw DimensionError("distance: lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
    }
    if (kind == DistanceKind::SquaredEuclidean) {
        double acc = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = a[i] - b[i];
            acc += d * d;
        }
        return acc;
    }
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        return 1.0;
    }
    return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

void accumulate_distance_grad(DistanceKind kind, std::span<const double> a, std::span<const double> b,
                              double scale, std::span<double> grad_a, std::span<double> grad_b) {
    if (a.size() != b.size() || grad_a.size() != a.size() || grad_b.size() != b.size()) {
        throw DimensionError("distance gradient: length mismatch");
    }
    if (kind == DistanceKind::SquaredEuclidean) {
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = 2.0 * scale * (a[i] - b[i]);
            grad_a[i] += d;
            grad_b[i] -= d;
        }
        return;
    }
    double dot = 0.0;
    double na2 = 0.0;
    double nb2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na2 += a[i] * a[i];
        nb2 += b[i] * b[i];
    }
    if (na2 == 0.0 || nb2 == 0.0) {
        return;
    }
    const double na = std::sqrt(na2);
    const double nb = std::sqrt(nb2);
    const double s = dot / (na * nb);
    for (std::size_t i = 0; i < a.size(); ++i) {
        grad_a[i] -= scale * (b[i] / (na * nb) - s * a[i] / na2);
        grad_b[i] -= scale * (a[i] / (na * nb) - s * b[i] / nb2);
    }
}

std::vector<double> softmax(std::span<const double> scores) {
    std::vector<double> out(scores.size());
    if (scores.empty()) {
        return out;
    }
    const double top = *std::max_element(scores.begin(), scores.end());
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp(scores[i] - top);
        total += out[i];
    }
    for (double& p : out) {
        p /= total;
    }
    return out;
}

SoftmaxNll softmax_nll(std::span<const double> neg_scores, std::size_t true_class) {
    if (neg_scores.size() < 2) {
        throw ValidationError("softmax_nll needs at least two classes");
    }
    if (true_class >= neg_scores.size()) {
        throw IndexError("true class " + std::to_string(true_class) + " out of range for " +
                         std::to_string(neg_scores.size()) + " classes");
    }
    SoftmaxNll out;
    const double top = *std::max_element(neg_scores.begin(), neg_scores.end());
    double total = 0.0;
    out.probs.resize(neg_scores.size());
    for (std::size_t i = 0; i < neg_scores.size(); ++i) {
        out.probs[i] = std::exp(neg_scores[i] - top);
        total += out.probs[i];
    }
    for (double& p : out.probs) {
        p /= total;
    }
    out.loss = std::log(total) + top - neg_scores[true_class];
    return out;
}

std::size_t argmax(std::span<const double> values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) {
            best = i;
        }
    }
    return best;
}

}  // namespace comet
