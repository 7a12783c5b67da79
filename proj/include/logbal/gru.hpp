#pragma once

// GRU cell with the printed gate convention
//
//   r_t = sigmoid(x_t W_r + h_{t-1} U_r + b_r)
//   z_t = sigmoid(x_t W_z + h_{t-1} U_z + b_z)
//   h_t = z_t (.) h_{t-1} + (1 - z_t) (.) tanh(x_t W_h + U_h-term + b_h)
//
// where the update gate z multiplies the PREVIOUS state (the mirror of the
// more common convention; a unit test pins this so it cannot silently flip).
// Rows are batch entries, so a 1-row matrix is the single-sequence case.
// Forward paths are templated on the scalar for the double-precision
// finite-difference oracle; training runs in float.

#include <array>
#include <cstdint>
#include <vector>

#include "logbal/matrix.hpp"
#include "logbal/nn.hpp"
#include "logbal/rng.hpp"

namespace logbal {

template <class T>
struct GruWeights {
    Matrix<T> W_r, W_z, W_h; // [d x H]
    Matrix<T> U_r, U_z, U_h; // [H x H]
    Matrix<T> b_r, b_z, b_h; // [1 x H]
};

struct GruParams {
    uint32_t input_dim = 0;
    uint32_t hidden_dim = 0;
    ParamTensor W_r, W_z, W_h;
    ParamTensor U_r, U_z, U_h;
    ParamTensor b_r, b_z, b_h;

    GruParams() = default;
    GruParams(uint32_t d, uint32_t h)
        : input_dim(d), hidden_dim(h), W_r(d, h), W_z(d, h), W_h(d, h), U_r(h, h), U_z(h, h),
          U_h(h, h), b_r(1, h), b_z(1, h), b_h(1, h) {}

    void init(Rng& rng) {
        glorot_init(W_r.value, rng);
        glorot_init(W_z.value, rng);
        glorot_init(W_h.value, rng);
        glorot_init(U_r.value, rng);
        glorot_init(U_z.value, rng);
        glorot_init(U_h.value, rng);
        // biases stay zero
    }

    std::array<ParamTensor*, 9> tensors() {
        return {&W_r, &W_z, &W_h, &U_r, &U_z, &U_h, &b_r, &b_z, &b_h};
    }
    std::array<const ParamTensor*, 9> tensors() const {
        return {&W_r, &W_z, &W_h, &U_r, &U_z, &U_h, &b_r, &b_z, &b_h};
    }

    void zero_grad() {
        for (auto* p : tensors()) p->zero_grad();
    }

    template <class T>
    GruWeights<T> weights() const {
        return {cast<T>(W_r.value), cast<T>(W_z.value), cast<T>(W_h.value),
                cast<T>(U_r.value), cast<T>(U_z.value), cast<T>(U_h.value),
                cast<T>(b_r.value), cast<T>(b_z.value), cast<T>(b_h.value)};
    }
};

/// Per-step cache for BPTT: inputs, gate activations, candidate and state.
template <class T>
struct GruStep {
    Matrix<T> x;      // [B x d]
    Matrix<T> h_prev; // [B x H]
    Matrix<T> r, z;   // gates, entries in (0,1)
    Matrix<T> cand;   // tanh candidate, entries in (-1,1)
    Matrix<T> h;      // new state
};

template <class T>
struct GruTrace {
    std::vector<GruStep<T>> steps;
};

template <class T>
GruStep<T> cell_forward(const Matrix<T>& x, const Matrix<T>& h_prev, const GruWeights<T>& w) {
    if (x.cols != w.W_r.rows)
        throw ShapeError("cell_forward: input " + x.shape_str() + " vs W_r " + w.W_r.shape_str());
    if (h_prev.cols != w.U_r.rows || h_prev.rows != x.rows)
        throw ShapeError("cell_forward: state " + h_prev.shape_str() + " vs U_r " +
                         w.U_r.shape_str());

    GruStep<T> step;
    step.x = x;
    step.h_prev = h_prev;

    Matrix<T> ar = affine(x, w.W_r, w.b_r);
    add_matmul(ar, h_prev, w.U_r);
    step.r = sigmoid(ar);

    Matrix<T> az = affine(x, w.W_z, w.b_z);
    add_matmul(az, h_prev, w.U_z);
    step.z = sigmoid(az);

    Matrix<T> ah = affine(x, w.W_h, w.b_h);
    Matrix<T> gated = hadamard(step.r, h_prev);
    add_matmul(ah, gated, w.U_h);
    step.cand = tanh_act(ah);

    step.h = Matrix<T>(h_prev.rows, h_prev.cols);
    for (size_t i = 0; i < step.h.size(); ++i) {
        const T z = step.z.values[i];
        step.h.values[i] = z * h_prev.values[i] + (T(1) - z) * step.cand.values[i];
    }
    return step;
}

/// Unrolls the cell over a sequence of [B x d] inputs. h0 defaults to zero.
template <class T>
GruTrace<T> seq_forward(const std::vector<Matrix<T>>& xs, const GruWeights<T>& w,
                        const Matrix<T>* h0 = nullptr) {
    if (xs.empty()) throw std::invalid_argument("seq_forward: empty sequence");
    GruTrace<T> trace;
    trace.steps.reserve(xs.size());
    Matrix<T> h = h0 ? *h0 : Matrix<T>(xs[0].rows, w.U_r.rows);
    for (const auto& x : xs) {
        trace.steps.push_back(cell_forward(x, h, w));
        h = trace.steps.back().h;
    }
    return trace;
}

template <class T>
const Matrix<T>& final_state(const GruTrace<T>& trace) {
    return trace.steps.back().h;
}

struct BpttResult {
    std::vector<Matf> dxs; // dL/dx_t per step
    Matf dh0;
};

/// Exact reverse-mode of the unrolled forward with an upstream gradient at
/// every step ("none" entries may be empty matrices). Gradients accumulate
/// into the params' grad fields; returns per-step input gradients and dL/dh0.
inline BpttResult bptt_per_step(const GruTrace<float>& trace, const std::vector<Matf>& d_h_steps,
                                GruParams& params) {
    if (trace.steps.empty()) throw std::invalid_argument("bptt: empty trace");
    const auto& last = trace.steps.back();
    if (last.h.cols != params.hidden_dim || last.x.cols != params.input_dim)
        throw ShapeError("bptt: trace dims " + last.x.shape_str() + "/" + last.h.shape_str() +
                         " do not match params (d=" + std::to_string(params.input_dim) +
                         ", H=" + std::to_string(params.hidden_dim) + ")");
    if (d_h_steps.size() != trace.steps.size())
        throw ShapeError("bptt: " + std::to_string(d_h_steps.size()) + " upstream grads for " +
                         std::to_string(trace.steps.size()) + " steps");

    BpttResult out;
    out.dxs.resize(trace.steps.size());
    Matf dh(last.h.rows, last.h.cols);

    for (size_t s = trace.steps.size(); s-- > 0;) {
        if (d_h_steps[s].size() > 0) {
            if (!d_h_steps[s].same_shape(dh))
                throw ShapeError("bptt: upstream " + d_h_steps[s].shape_str() + " vs state " +
                                 dh.shape_str());
            add_inplace(dh, d_h_steps[s]);
        }
        const auto& st = trace.steps[s];
        const uint32_t B = st.h.rows, H = st.h.cols;

        Matf dz(B, H), dc(B, H), dh_prev(B, H);
        for (size_t i = 0; i < dh.size(); ++i) {
            const float g = dh.values[i];
            dz.values[i] = g * (st.h_prev.values[i] - st.cand.values[i]);
            dc.values[i] = g * (1.0f - st.z.values[i]);
            dh_prev.values[i] = g * st.z.values[i];
        }

        // candidate branch
        Matf da_c(B, H);
        for (size_t i = 0; i < da_c.size(); ++i)
            da_c.values[i] = dc.values[i] * (1.0f - st.cand.values[i] * st.cand.values[i]);
        add_matmul_tn(params.W_h.grad, st.x, da_c);
        Matf gated = hadamard(st.r, st.h_prev);
        add_matmul_tn(params.U_h.grad, gated, da_c);
        add_inplace(params.b_h.grad, col_sums(da_c));
        Matf dx = matmul_nt(da_c, params.W_h.value);
        Matf dq = matmul_nt(da_c, params.U_h.value);
        Matf dr(B, H);
        for (size_t i = 0; i < dq.size(); ++i) {
            dr.values[i] = dq.values[i] * st.h_prev.values[i];
            dh_prev.values[i] += dq.values[i] * st.r.values[i];
        }

        // reset gate
        Matf da_r(B, H);
        for (size_t i = 0; i < da_r.size(); ++i)
            da_r.values[i] = dr.values[i] * st.r.values[i] * (1.0f - st.r.values[i]);
        add_matmul_tn(params.W_r.grad, st.x, da_r);
        add_matmul_tn(params.U_r.grad, st.h_prev, da_r);
        add_inplace(params.b_r.grad, col_sums(da_r));
        add_inplace(dx, matmul_nt(da_r, params.W_r.value));
        add_inplace(dh_prev, matmul_nt(da_r, params.U_r.value));

        // update gate
        Matf da_z(B, H);
        for (size_t i = 0; i < da_z.size(); ++i)
            da_z.values[i] = dz.values[i] * st.z.values[i] * (1.0f - st.z.values[i]);
        add_matmul_tn(params.W_z.grad, st.x, da_z);
        add_matmul_tn(params.U_z.grad, st.h_prev, da_z);
        add_inplace(params.b_z.grad, col_sums(da_z));
        add_inplace(dx, matmul_nt(da_z, params.W_z.value));
        add_inplace(dh_prev, matmul_nt(da_z, params.U_z.value));

        out.dxs[s] = std::move(dx);
        dh = std::move(dh_prev);
    }
    out.dh0 = std::move(dh);
    return out;
}

/// Reverse-mode with upstream gradient only at the final state.
inline BpttResult bptt(const GruTrace<float>& trace, const Matf& d_hT, GruParams& params) {
    std::vector<Matf> steps(trace.steps.size());
    steps.back() = d_hT;
    return bptt_per_step(trace, steps, params);
}

// --- two-class softmax head --------------------------------------------------

struct ClassifierHead {
    ParamTensor W_out; // [H x 2]
    ParamTensor b_out; // [1 x 2]

    ClassifierHead() = default;
    explicit ClassifierHead(uint32_t hidden) : W_out(hidden, 2), b_out(1, 2) {}

    void init(Rng& rng) { glorot_init(W_out.value, rng); }

    std::array<ParamTensor*, 2> tensors() { return {&W_out, &b_out}; }
};

/// softmax(h_T W_out + b_out) for a batch of sequences; rows sum to 1.
template <class T>
Matrix<T> classify(const std::vector<Matrix<T>>& xs, const GruWeights<T>& w,
                   const Matrix<T>& w_out, const Matrix<T>& b_out) {
    const auto trace = seq_forward(xs, w);
    Matrix<T> logits = affine(final_state(trace), w_out, b_out);
    softmax_rows(logits);
    return logits;
}

inline Matf classify(const std::vector<Matf>& xs, const GruParams& params,
                     const ClassifierHead& head) {
    return classify<float>(xs, params.weights<float>(), head.W_out.value, head.b_out.value);
}

} // namespace logbal
