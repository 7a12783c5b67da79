#pragma once

// Dense-layer primitives shared by every network in the pipeline:
// activations, softmax/cross-entropy, inverted dropout, L1 penalty and
// the bias-corrected ADAM update.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "logbal/matrix.hpp"
#include "logbal/rng.hpp"

namespace logbal {

template <class T>
T sigmoid_scalar(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

template <class T>
Matrix<T> sigmoid(const Matrix<T>& x) {
    Matrix<T> out(x.rows, x.cols);
    for (size_t i = 0; i < x.size(); ++i) out.values[i] = sigmoid_scalar(x.values[i]);
    return out;
}

template <class T>
Matrix<T> tanh_act(const Matrix<T>& x) {
    Matrix<T> out(x.rows, x.cols);
    for (size_t i = 0; i < x.size(); ++i) out.values[i] = std::tanh(x.values[i]);
    return out;
}

/// Max-shifted softmax over a vector of logits.
template <class T>
std::vector<T> softmax(const std::vector<T>& logits) {
    if (logits.empty()) throw std::invalid_argument("softmax: empty input");
    T mx = *std::max_element(logits.begin(), logits.end());
    std::vector<T> out(logits.size());
    T sum = T(0);
    for (size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (auto& v : out) v /= sum;
    return out;
}

template <class T>
std::vector<T> log_softmax(const std::vector<T>& logits) {
    if (logits.empty()) throw std::invalid_argument("log_softmax: empty input");
    T mx = *std::max_element(logits.begin(), logits.end());
    T sum = T(0);
    for (auto v : logits) sum += std::exp(v - mx);
    T lse = mx + std::log(sum);
    std::vector<T> out(logits.size());
    for (size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
    return out;
}

/// In-place row-wise softmax of a batch of logits.
template <class T>
void softmax_rows(Matrix<T>& m) {
    for (uint32_t i = 0; i < m.rows; ++i) {
        T* row = m.row(i);
        T mx = row[0];
        for (uint32_t j = 1; j < m.cols; ++j) mx = std::max(mx, row[j]);
        T sum = T(0);
        for (uint32_t j = 0; j < m.cols; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (uint32_t j = 0; j < m.cols; ++j) row[j] /= sum;
    }
}

inline constexpr double kCrossEntropyClip = 1e-12;

/// -sum target[i] * log(pred[i]) with predictions clipped at 1e-12.
template <class T>
double cross_entropy(const std::vector<T>& pred, const std::vector<T>& target) {
    if (pred.size() != target.size())
        throw ShapeError("cross_entropy: length " + std::to_string(pred.size()) + " vs " +
                         std::to_string(target.size()));
    double loss = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        double p = std::max(static_cast<double>(pred[i]), kCrossEntropyClip);
        loss -= static_cast<double>(target[i]) * std::log(p);
    }
    return loss;
}

/// Row-wise cross entropy, averaged over rows.
template <class T>
double cross_entropy_rows(const Matrix<T>& pred, const Matrix<T>& target) {
    if (!pred.same_shape(target))
        throw ShapeError("cross_entropy: " + pred.shape_str() + " vs " + target.shape_str());
    double loss = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        double p = std::max(static_cast<double>(pred.values[i]), kCrossEntropyClip);
        loss -= static_cast<double>(target.values[i]) * std::log(p);
    }
    return loss / pred.rows;
}

// --- trainable parameter + ADAM -------------------------------------------

struct ParamTensor {
    Matf value;
    Matf grad;

    ParamTensor() = default;
    ParamTensor(uint32_t r, uint32_t c) : value(r, c), grad(r, c) {}
    explicit ParamTensor(Matf v) : value(std::move(v)) { grad = Matf(value.rows, value.cols); }

    void zero_grad() { grad.zero(); }
};

struct AdamConfig {
    float alpha = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float epsilon = 1e-8f;
};

struct AdamState {
    Matf m;
    Matf v;
    int64_t t = 0;
    float alpha = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float epsilon = 1e-8f;

    AdamState() = default;
    AdamState(uint32_t rows, uint32_t cols, AdamConfig cfg = {})
        : m(rows, cols), v(rows, cols), alpha(cfg.alpha), beta1(cfg.beta1), beta2(cfg.beta2),
          epsilon(cfg.epsilon) {}
};

/// One bias-corrected ADAM step. Leaves param.grad untouched (caller resets).
inline void adam_step(ParamTensor& param, AdamState& state) {
    if (!param.value.same_shape(state.m))
        throw ShapeError("adam_step: param " + param.value.shape_str() + " vs state " +
                         state.m.shape_str());
    if (!param.value.same_shape(param.grad))
        throw ShapeError("adam_step: value " + param.value.shape_str() + " vs grad " +
                         param.grad.shape_str());
    state.t += 1;
    const float b1 = state.beta1, b2 = state.beta2;
    const float bc1 = 1.0f - std::pow(b1, static_cast<float>(state.t));
    const float bc2 = 1.0f - std::pow(b2, static_cast<float>(state.t));
    for (size_t i = 0; i < param.value.size(); ++i) {
        const float g = param.grad.values[i];
        float& m = state.m.values[i];
        float& v = state.v.values[i];
        m = b1 * m + (1.0f - b1) * g;
        v = b2 * v + (1.0f - b2) * g * g;
        const float mhat = m / bc1;
        const float vhat = v / bc2;
        param.value.values[i] -= state.alpha * mhat / (std::sqrt(vhat) + state.epsilon);
    }
}

/// Owns one AdamState per registered tensor; steps them together.
class AdamOptimizer {
public:
    explicit AdamOptimizer(AdamConfig cfg = {}) : cfg_(cfg) {}

    void attach(std::vector<ParamTensor*> params) {
        params_ = std::move(params);
        states_.clear();
        states_.reserve(params_.size());
        for (auto* p : params_) states_.emplace_back(p->value.rows, p->value.cols, cfg_);
    }

    void step() {
        for (size_t i = 0; i < params_.size(); ++i) adam_step(*params_[i], states_[i]);
    }

    void zero_grad() {
        for (auto* p : params_) p->zero_grad();
    }

private:
    AdamConfig cfg_;
    std::vector<ParamTensor*> params_;
    std::vector<AdamState> states_;
};

// --- regularizers ----------------------------------------------------------

/// Inverted-dropout mask: 1/keep_prob with probability keep_prob, else 0.
inline std::vector<float> dropout_mask(size_t length, double keep_prob, Rng& rng) {
    if (!(keep_prob > 0.0 && keep_prob <= 1.0))
        throw std::invalid_argument("dropout_mask: keep_prob must lie in (0,1]");
    std::vector<float> mask(length);
    const float scale = static_cast<float>(1.0 / keep_prob);
    for (auto& m : mask) m = (rng.uniform() < keep_prob) ? scale : 0.0f;
    return mask;
}

/// L1 loss lambda*sum|w| and its (sub)gradient lambda*sign(w), sign(0)=0.
template <class T>
std::pair<double, Matrix<T>> l1_penalty(const Matrix<T>& w, double lambda) {
    if (lambda < 0.0) throw std::invalid_argument("l1_penalty: lambda must be >= 0");
    Matrix<T> grad(w.rows, w.cols);
    double loss = 0.0;
    for (size_t i = 0; i < w.size(); ++i) {
        const double v = static_cast<double>(w.values[i]);
        loss += std::abs(v);
        grad.values[i] = v > 0.0 ? T(lambda) : (v < 0.0 ? T(-lambda) : T(0));
    }
    return {lambda * loss, std::move(grad)};
}

// --- init & clipping -------------------------------------------------------

/// Uniform in [-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))].
inline void glorot_init(Matf& w, uint32_t fan_in, uint32_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / (static_cast<double>(fan_in) + fan_out));
    for (auto& v : w.values) v = static_cast<float>(rng.uniform(-limit, limit));
}

inline void glorot_init(Matf& w, Rng& rng) { glorot_init(w, w.rows, w.cols, rng); }

/// Scales all grads so their joint L2 norm is at most max_norm.
inline double clip_global_norm(const std::vector<ParamTensor*>& params, double max_norm) {
    double sq = 0.0;
    for (auto* p : params)
        for (float g : p->grad.values) sq += static_cast<double>(g) * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const float s = static_cast<float>(max_norm / norm);
        for (auto* p : params)
            for (auto& g : p->grad.values) g *= s;
    }
    return norm;
}

inline std::vector<float> one_hot(uint32_t index, uint32_t size) {
    std::vector<float> v(size, 0.0f);
    v[index] = 1.0f;
    return v;
}

} // namespace logbal
