#pragma once

// SeqGAN oversampler: GRU generator over token ids, CNN discriminator
// (parallel conv widths, max-over-time pooling, sigmoid head), Monte Carlo
// rollout rewards for intermediate states, policy-gradient ascent for the
// generator, MLE/discriminator pretraining, the adversarial loop, and the
// chunked oversampling of the negative record set.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <string>
#include <unordered_set>
#include <vector>

#include "logbal/corpus.hpp"
#include "logbal/gru.hpp"
#include "logbal/matrix.hpp"
#include "logbal/nn.hpp"
#include "logbal/rng.hpp"

namespace logbal {

// --- generator ---------------------------------------------------------------

template <class T>
struct GenWeights {
    Matrix<T> embedding; // [V x E]
    GruWeights<T> gru;
    Matrix<T> proj_w; // [H x V]
    Matrix<T> proj_b; // [1 x V]
};

struct GeneratorParams {
    uint32_t vocab_size = 0;
    uint32_t embed_dim = 30;
    ParamTensor embedding;
    GruParams gru; // d = embed_dim, H = 30 by default
    ParamTensor proj_w;
    ParamTensor proj_b;

    GeneratorParams() = default;
    GeneratorParams(uint32_t vocab, uint32_t embed, uint32_t hidden)
        : vocab_size(vocab), embed_dim(embed), embedding(vocab, embed), gru(embed, hidden),
          proj_w(hidden, vocab), proj_b(1, vocab) {}

    void init(Rng& rng) {
        glorot_init(embedding.value, rng);
        gru.init(rng);
        glorot_init(proj_w.value, rng);
    }

    std::vector<ParamTensor*> tensors() {
        std::vector<ParamTensor*> out{&embedding};
        for (auto* p : gru.tensors()) out.push_back(p);
        out.push_back(&proj_w);
        out.push_back(&proj_b);
        return out;
    }

    void zero_grad() {
        for (auto* p : tensors()) p->zero_grad();
    }

    template <class T>
    GenWeights<T> weights() const {
        return {cast<T>(embedding.value), gru.weights<T>(), cast<T>(proj_w.value),
                cast<T>(proj_b.value)};
    }
};

namespace detail {

/// Embedding rows for one step's tokens, as a [B x E] step input.
template <class T>
Matrix<T> embed_tokens(const Matrix<T>& embedding, const std::vector<uint32_t>& tokens) {
    Matrix<T> x(static_cast<uint32_t>(tokens.size()), embedding.cols);
    for (uint32_t b = 0; b < tokens.size(); ++b) {
        if (tokens[b] >= embedding.rows)
            throw std::invalid_argument("token id " + std::to_string(tokens[b]) +
                                        " out of range for vocab " +
                                        std::to_string(embedding.rows));
        std::copy(embedding.row(tokens[b]), embedding.row(tokens[b]) + embedding.cols, x.row(b));
    }
    return x;
}

inline uint32_t sample_row(const float* probs, uint32_t v, Rng& rng) {
    double u = rng.uniform();
    double acc = 0.0;
    for (uint32_t i = 0; i < v; ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    return v - 1;
}

} // namespace detail

/// Autoregressive batch sampling: step-0 input is the PAD token, then each
/// step feeds the previous token's embedding and draws the next token from
/// the softmax over the projection. A shared prefix is reproduced verbatim
/// before sampling resumes; a full-length prefix is returned unchanged.
inline std::vector<std::vector<uint32_t>> sample_batch(const GeneratorParams& gen, uint32_t seq_len,
                                                       uint32_t batch, Rng& rng,
                                                       const std::vector<uint32_t>& prefix = {}) {
    if (seq_len == 0) throw std::invalid_argument("sample_batch: sequence length must be positive");
    if (prefix.size() > seq_len)
        throw std::invalid_argument("sample_batch: prefix longer than sequence");
    std::vector<std::vector<uint32_t>> out(batch, std::vector<uint32_t>(seq_len));
    if (prefix.size() == seq_len) {
        for (auto& seq : out) seq = prefix;
        return out;
    }

    const auto w = gen.weights<float>();
    Matf h(batch, gen.gru.hidden_dim);
    std::vector<uint32_t> prev(batch, Vocabulary::kPad);
    for (uint32_t t = 0; t < seq_len; ++t) {
        const Matf x = detail::embed_tokens(w.embedding, prev);
        const auto step = cell_forward(x, h, w.gru);
        h = step.h;
        if (t < prefix.size()) {
            for (uint32_t b = 0; b < batch; ++b) out[b][t] = prefix[t];
        } else {
            Matf probs = affine(h, w.proj_w, w.proj_b);
            softmax_rows(probs);
            for (uint32_t b = 0; b < batch; ++b)
                out[b][t] = detail::sample_row(probs.row(b), gen.vocab_size, rng);
        }
        for (uint32_t b = 0; b < batch; ++b) prev[b] = out[b][t];
    }
    return out;
}

inline std::vector<uint32_t> sample_sequence(const GeneratorParams& gen, uint32_t seq_len, Rng& rng,
                                             const std::vector<uint32_t>& prefix = {}) {
    return sample_batch(gen, seq_len, 1, rng, prefix)[0];
}

template <class T>
struct GenForward {
    std::vector<std::vector<uint32_t>> inputs; // per step, token fed at that step
    GruTrace<T> trace;
    std::vector<Matrix<T>> probs; // per step [B x V]
};

/// Teacher-forced forward over whole sequences (input = PAD + shifted tokens).
template <class T>
GenForward<T> gen_forward(const std::vector<std::vector<uint32_t>>& seqs, const GenWeights<T>& w) {
    if (seqs.empty()) throw std::invalid_argument("gen_forward: empty batch");
    const size_t seq_len = seqs[0].size();
    const uint32_t batch = static_cast<uint32_t>(seqs.size());

    GenForward<T> fwd;
    fwd.inputs.assign(seq_len, std::vector<uint32_t>(batch));
    std::vector<Matrix<T>> xs(seq_len);
    for (size_t t = 0; t < seq_len; ++t) {
        for (uint32_t b = 0; b < batch; ++b)
            fwd.inputs[t][b] = t == 0 ? Vocabulary::kPad : seqs[b][t - 1];
        xs[t] = detail::embed_tokens(w.embedding, fwd.inputs[t]);
    }
    fwd.trace = seq_forward(xs, w.gru);
    fwd.probs.resize(seq_len);
    for (size_t t = 0; t < seq_len; ++t) {
        Matrix<T> p = affine(fwd.trace.steps[t].h, w.proj_w, w.proj_b);
        softmax_rows(p);
        fwd.probs[t] = std::move(p);
    }
    return fwd;
}

/// Mean negative log-likelihood per token under teacher forcing.
template <class T>
double teacher_forcing_nll(const std::vector<std::vector<uint32_t>>& seqs, const GenWeights<T>& w) {
    const auto fwd = gen_forward(seqs, w);
    double nll = 0.0;
    size_t tokens = 0;
    for (size_t t = 0; t < fwd.probs.size(); ++t) {
        for (uint32_t b = 0; b < seqs.size(); ++b) {
            const double p =
                std::max(static_cast<double>(fwd.probs[t](b, seqs[b][t])), kCrossEntropyClip);
            nll -= std::log(p);
            ++tokens;
        }
    }
    return nll / static_cast<double>(tokens);
}

/// Backward through projection, GRU and embedding given per-step gradients
/// w.r.t. the (pre-softmax composition's) logits. Accumulates into grads.
inline void gen_backward(GeneratorParams& gen, const GenForward<float>& fwd,
                         const std::vector<Matf>& dlogits) {
    const size_t seq_len = fwd.probs.size();
    std::vector<Matf> dh(seq_len);
    for (size_t t = 0; t < seq_len; ++t) {
        add_matmul_tn(gen.proj_w.grad, fwd.trace.steps[t].h, dlogits[t]);
        add_inplace(gen.proj_b.grad, col_sums(dlogits[t]));
        dh[t] = matmul_nt(dlogits[t], gen.proj_w.value);
    }
    const auto back = bptt_per_step(fwd.trace, dh, gen.gru);
    for (size_t t = 0; t < seq_len; ++t) {
        const Matf& dx = back.dxs[t];
        for (uint32_t b = 0; b < dx.rows; ++b) {
            float* grow = gen.embedding.grad.row(fwd.inputs[t][b]);
            const float* drow = dx.row(b);
            for (uint32_t e = 0; e < dx.cols; ++e) grow[e] += drow[e];
        }
    }
}

/// Teacher-forcing cross-entropy backward (to be minimized); returns the
/// batch mean NLL per token.
inline double teacher_forcing_backward(GeneratorParams& gen,
                                       const std::vector<std::vector<uint32_t>>& seqs) {
    const auto fwd = gen_forward<float>(seqs, gen.weights<float>());
    const size_t seq_len = fwd.probs.size();
    const uint32_t batch = static_cast<uint32_t>(seqs.size());
    const float scale = 1.0f / (static_cast<float>(seq_len) * batch);

    double nll = 0.0;
    std::vector<Matf> dlogits(seq_len);
    for (size_t t = 0; t < seq_len; ++t) {
        Matf d = fwd.probs[t];
        for (uint32_t b = 0; b < batch; ++b) {
            const uint32_t y = seqs[b][t];
            const double p = std::max(static_cast<double>(fwd.probs[t](b, y)), kCrossEntropyClip);
            nll -= std::log(p);
            d(b, y) -= 1.0f;
        }
        for (auto& v : d.values) v *= scale;
        dlogits[t] = std::move(d);
    }
    gen_backward(gen, fwd, dlogits);
    return nll / (static_cast<double>(seq_len) * batch);
}

/// log G(Y) = sum_t log G(y_t | Y_{1:t-1}) and its gradient, accumulated
/// into the generator's grad fields (ascent direction).
inline double accumulate_logprob_grad(GeneratorParams& gen, const std::vector<uint32_t>& seq,
                                      double weight = 1.0) {
    const auto fwd = gen_forward<float>({seq}, gen.weights<float>());
    double logp = 0.0;
    std::vector<Matf> dlogits(seq.size());
    for (size_t t = 0; t < seq.size(); ++t) {
        Matf d = fwd.probs[t];
        for (auto& v : d.values) v = -v * static_cast<float>(weight);
        d(0, seq[t]) += static_cast<float>(weight);
        logp += std::log(std::max(static_cast<double>(fwd.probs[t](0, seq[t])), kCrossEntropyClip));
        dlogits[t] = std::move(d);
    }
    gen_backward(gen, fwd, dlogits);
    return logp;
}

// --- discriminator -------------------------------------------------------------

inline const std::vector<uint32_t>& default_conv_widths() {
    static const std::vector<uint32_t> widths{1, 2, 3, 4};
    return widths;
}

template <class T>
struct DiscWeights {
    Matrix<T> embedding;
    std::vector<Matrix<T>> conv_w; // per width: [filters x width*E]
    std::vector<Matrix<T>> conv_b; // per width: [1 x filters]
    Matrix<T> head_w;              // [n_widths*filters x 1]
    Matrix<T> head_b;              // [1 x 1]
    std::vector<uint32_t> widths;
};

struct DiscriminatorParams {
    uint32_t vocab_size = 0;
    uint32_t embed_dim = 32;
    uint32_t filters_per_width = 25;
    std::vector<uint32_t> widths = default_conv_widths();
    ParamTensor embedding;
    std::vector<ParamTensor> conv_w;
    std::vector<ParamTensor> conv_b;
    ParamTensor head_w;
    ParamTensor head_b;
    float keep_prob = 0.8f;

    DiscriminatorParams() = default;
    DiscriminatorParams(uint32_t vocab, uint32_t embed, uint32_t filters,
                        std::vector<uint32_t> conv_widths = default_conv_widths())
        : vocab_size(vocab), embed_dim(embed), filters_per_width(filters),
          widths(std::move(conv_widths)), embedding(vocab, embed) {
        for (uint32_t w : widths) {
            conv_w.emplace_back(filters, w * embed);
            conv_b.emplace_back(1, filters);
        }
        const uint32_t total = static_cast<uint32_t>(widths.size()) * filters;
        head_w = ParamTensor(total, 1);
        head_b = ParamTensor(1, 1);
    }

    void init(Rng& rng) {
        glorot_init(embedding.value, rng);
        for (auto& k : conv_w) glorot_init(k.value, rng);
        glorot_init(head_w.value, rng);
    }

    std::vector<ParamTensor*> tensors() {
        std::vector<ParamTensor*> out{&embedding};
        for (auto& k : conv_w) out.push_back(&k);
        for (auto& b : conv_b) out.push_back(&b);
        out.push_back(&head_w);
        out.push_back(&head_b);
        return out;
    }

    void zero_grad() {
        for (auto* p : tensors()) p->zero_grad();
    }

    template <class T>
    DiscWeights<T> weights() const {
        DiscWeights<T> w;
        w.embedding = cast<T>(embedding.value);
        for (const auto& k : conv_w) w.conv_w.push_back(cast<T>(k.value));
        for (const auto& b : conv_b) w.conv_b.push_back(cast<T>(b.value));
        w.head_w = cast<T>(head_w.value);
        w.head_b = cast<T>(head_b.value);
        w.widths = widths;
        return w;
    }
};

template <class T>
struct DiscTrace {
    Matrix<T> embedded;                  // [T x E]
    std::vector<Matrix<T>> activations;  // per width: relu conv outputs [P x F]
    std::vector<std::vector<int>> argmax; // per width: winning position per filter
    Matrix<T> pooled;                    // [1 x n_widths*F], pre-dropout
    std::vector<float> mask;             // dropout mask (train mode)
    T logit = T(0);
    T score = T(0);
};

/// embed -> parallel convs (ReLU) -> max-over-time pool -> concat -> affine
/// -> sigmoid. Widths longer than the sequence contribute zero pooled units.
template <class T>
DiscTrace<T> disc_forward_trace(const std::vector<uint32_t>& seq, const DiscWeights<T>& w,
                                double keep_prob = 1.0, Rng* rng = nullptr) {
    if (seq.empty()) throw std::invalid_argument("disc_forward: empty sequence");
    DiscTrace<T> trace;
    trace.embedded = detail::embed_tokens(w.embedding, seq);
    const uint32_t seq_len = static_cast<uint32_t>(seq.size());
    const uint32_t embed = trace.embedded.cols;
    const uint32_t filters = w.conv_b.empty() ? 0 : w.conv_b[0].cols;
    trace.pooled = Matrix<T>(1, static_cast<uint32_t>(w.widths.size()) * filters);

    for (size_t wi = 0; wi < w.widths.size(); ++wi) {
        const uint32_t width = w.widths[wi];
        const uint32_t positions = seq_len >= width ? seq_len - width + 1 : 0;
        Matrix<T> act(positions, filters);
        std::vector<int> arg(filters, -1);
        if (positions > 0) {
            Matrix<T> windows(positions, width * embed);
            for (uint32_t p = 0; p < positions; ++p)
                std::copy(trace.embedded.row(p), trace.embedded.row(p) + width * embed,
                          windows.row(p));
            act = matmul_nt(windows, w.conv_w[wi]);
            for (uint32_t p = 0; p < positions; ++p)
                for (uint32_t f = 0; f < filters; ++f) {
                    act(p, f) += w.conv_b[wi].values[f];
                    if (act(p, f) < T(0)) act(p, f) = T(0); // ReLU
                }
            for (uint32_t f = 0; f < filters; ++f) {
                T best = act(0, f);
                int best_p = 0;
                for (uint32_t p = 1; p < positions; ++p)
                    if (act(p, f) > best) {
                        best = act(p, f);
                        best_p = static_cast<int>(p);
                    }
                trace.pooled.values[wi * filters + f] = best;
                arg[f] = best_p;
            }
        }
        trace.activations.push_back(std::move(act));
        trace.argmax.push_back(std::move(arg));
    }

    Matrix<T> feat = trace.pooled;
    if (rng) {
        trace.mask = dropout_mask(feat.size(), keep_prob, *rng);
        for (size_t i = 0; i < feat.size(); ++i) feat.values[i] *= static_cast<T>(trace.mask[i]);
    }
    T logit = w.head_b.values[0];
    for (size_t i = 0; i < feat.size(); ++i) logit += feat.values[i] * w.head_w.values[i];
    trace.logit = logit;
    trace.score = sigmoid_scalar(logit);
    return trace;
}

/// Probability of the sequence being real, in (0,1). Inference mode.
template <class T>
T disc_forward(const std::vector<uint32_t>& seq, const DiscWeights<T>& w) {
    return disc_forward_trace(seq, w).score;
}

inline float disc_forward(const std::vector<uint32_t>& seq, const DiscriminatorParams& disc) {
    return disc_forward(seq, disc.weights<float>());
}

/// Backward for one sequence given dL/dlogit. Gradient flows to the argmax
/// position of each pooled filter (where the ReLU was active).
inline void disc_backward(DiscriminatorParams& disc, const std::vector<uint32_t>& seq,
                          const DiscTrace<float>& trace, float dlogit) {
    const uint32_t filters = disc.filters_per_width;
    const uint32_t embed = disc.embed_dim;

    Matf feat = trace.pooled;
    if (!trace.mask.empty())
        for (size_t i = 0; i < feat.size(); ++i) feat.values[i] *= trace.mask[i];

    for (size_t i = 0; i < feat.size(); ++i)
        disc.head_w.grad.values[i] += feat.values[i] * dlogit;
    disc.head_b.grad.values[0] += dlogit;

    Matf d_embedded(trace.embedded.rows, trace.embedded.cols);
    for (size_t wi = 0; wi < disc.widths.size(); ++wi) {
        const uint32_t width = disc.widths[wi];
        for (uint32_t f = 0; f < filters; ++f) {
            const int p = trace.argmax[wi][f];
            if (p < 0) continue;
            if (trace.activations[wi](static_cast<uint32_t>(p), f) <= 0.0f) continue;
            float g = dlogit * disc.head_w.value.values[wi * filters + f];
            if (!trace.mask.empty()) g *= trace.mask[wi * filters + f];
            disc.conv_b[wi].grad.values[f] += g;
            float* krow_grad = disc.conv_w[wi].grad.row(f);
            const float* krow = disc.conv_w[wi].value.row(f);
            const float* window = trace.embedded.row(static_cast<uint32_t>(p));
            float* dwindow = d_embedded.row(static_cast<uint32_t>(p));
            for (uint32_t i = 0; i < width * embed; ++i) {
                krow_grad[i] += g * window[i];
                dwindow[i] += g * krow[i];
            }
        }
    }
    for (uint32_t t = 0; t < seq.size(); ++t) {
        float* grow = disc.embedding.grad.row(seq[t]);
        const float* drow = d_embedded.row(t);
        for (uint32_t e = 0; e < embed; ++e) grow[e] += drow[e];
    }
}

/// Mean binary cross entropy of the discriminator on labeled sequences
/// (1 = real, 0 = generated). Inference mode; used by the gradient oracle.
template <class T>
double disc_loss(const std::vector<std::vector<uint32_t>>& seqs, const std::vector<int>& labels,
                 const DiscWeights<T>& w) {
    double loss = 0.0;
    for (size_t i = 0; i < seqs.size(); ++i) {
        const double s = static_cast<double>(disc_forward(seqs[i], w));
        const double p = labels[i] == 1 ? s : 1.0 - s;
        loss -= std::log(std::max(p, kCrossEntropyClip));
    }
    return loss / static_cast<double>(seqs.size());
}

/// Train-mode forward/backward over a batch; accumulates grads, returns loss.
inline double disc_backward_batch(DiscriminatorParams& disc,
                                  const std::vector<std::vector<uint32_t>>& seqs,
                                  const std::vector<int>& labels, Rng* rng) {
    const auto w = disc.weights<float>();
    double loss = 0.0;
    const float scale = 1.0f / static_cast<float>(seqs.size());
    for (size_t i = 0; i < seqs.size(); ++i) {
        const auto trace = disc_forward_trace(seqs[i], w, disc.keep_prob, rng);
        const double s = trace.score;
        const double p = labels[i] == 1 ? s : 1.0 - s;
        loss -= std::log(std::max(p, kCrossEntropyClip));
        const float dlogit = (trace.score - static_cast<float>(labels[i])) * scale;
        disc_backward(disc, seqs[i], trace, dlogit);
    }
    return loss / static_cast<double>(seqs.size());
}

// --- rewards -------------------------------------------------------------------

/// MC search state: N rollouts drawn from a frozen copy of the generator.
struct RolloutConfig {
    uint32_t n_rollouts = 16;
    uint32_t seq_len = kDefaultMessageLength;
    GeneratorParams beta; // refreshed from the live generator between rounds

    void refresh(const GeneratorParams& gen) { beta = gen; }
};

/// Action value of a partial sequence: the discriminator score itself at
/// t = T (exact, no sampling), otherwise the mean score of N completions
/// drawn from the frozen rollout generator.
inline double mc_reward(const std::vector<uint32_t>& prefix, const RolloutConfig& rollout,
                        const DiscriminatorParams& disc, Rng& rng) {
    if (prefix.empty() || prefix.size() > rollout.seq_len)
        throw std::invalid_argument("mc_reward: prefix length " + std::to_string(prefix.size()) +
                                    " outside [1, " + std::to_string(rollout.seq_len) + "]");
    const auto dw = disc.weights<float>();
    if (prefix.size() == rollout.seq_len)
        return static_cast<double>(disc_forward(prefix, dw));

    const auto completions = sample_batch(rollout.beta, rollout.seq_len, rollout.n_rollouts, rng,
                                          prefix);
    double sum = 0.0;
    for (const auto& seq : completions) sum += static_cast<double>(disc_forward(seq, dw));
    return sum / static_cast<double>(rollout.n_rollouts);
}

struct ExhaustiveReward {
    double expectation = 0.0;
    double probability_mass = 0.0; // completions' total probability (self-check)
};

/// Exact expected discriminator score over all completions of the prefix,
/// weighting each completion by its chained-softmax probability under the
/// generator. Enumeration is capped at 1e5 completions.
inline ExhaustiveReward exhaustive_reward(const std::vector<uint32_t>& prefix,
                                          const GeneratorParams& gen,
                                          const DiscriminatorParams& disc, uint32_t seq_len) {
    if (prefix.empty() || prefix.size() > seq_len)
        throw std::invalid_argument("exhaustive_reward: bad prefix length");
    const auto dw = disc.weights<float>();
    ExhaustiveReward result;
    if (prefix.size() == seq_len) {
        result.expectation = static_cast<double>(disc_forward(prefix, dw));
        result.probability_mass = 1.0;
        return result;
    }

    const uint32_t remaining = seq_len - static_cast<uint32_t>(prefix.size());
    double space = 1.0;
    for (uint32_t i = 0; i < remaining; ++i) {
        space *= gen.vocab_size;
        if (space > 1e5)
            throw CapacityError("exhaustive_reward: " + std::to_string(gen.vocab_size) + "^" +
                                std::to_string(remaining) + " completions exceed 1e5");
    }

    const auto gw = gen.weights<float>();

    // state after consuming the prefix
    Matf h(1, gen.gru.hidden_dim);
    uint32_t prev = Vocabulary::kPad;
    for (uint32_t t = 0; t < prefix.size(); ++t) {
        const Matf x = detail::embed_tokens(gw.embedding, {prev});
        h = cell_forward(x, h, gw.gru).h;
        prev = prefix[t];
    }

    std::vector<uint32_t> seq = prefix;
    seq.resize(seq_len);

    // depth-first over completions; one cell step per interior node
    auto recurse = [&](auto&& self, const Matf& state, uint32_t prev_token, uint32_t pos,
                       double prob) -> void {
        const Matf x = detail::embed_tokens(gw.embedding, {prev_token});
        const Matf next = cell_forward(x, state, gw.gru).h;
        Matf probs = affine(next, gw.proj_w, gw.proj_b);
        softmax_rows(probs);
        for (uint32_t v = 0; v < gen.vocab_size; ++v) {
            const double branch = prob * static_cast<double>(probs(0, v));
            seq[pos] = v;
            if (pos + 1 == seq_len) {
                result.expectation += branch * static_cast<double>(disc_forward(seq, dw));
                result.probability_mass += branch;
            } else {
                self(self, next, v, pos + 1, branch);
            }
        }
    };
    recurse(recurse, h, prev, static_cast<uint32_t>(prefix.size()), 1.0);
    return result;
}

// --- policy gradient -------------------------------------------------------------

/// One ascent step theta += alpha * grad J, where grad J averages
/// grad log G(y_t | Y_{1:t-1}) * Q_t over steps (1/T) and batch (1/B).
/// Aborts without touching parameters if the gradient is non-finite.
inline void policy_gradient_step(GeneratorParams& gen,
                                 const std::vector<std::vector<uint32_t>>& seqs,
                                 const std::vector<std::vector<double>>& q_values, float alpha) {
    if (seqs.empty()) throw std::invalid_argument("policy_gradient_step: empty batch");
    if (seqs.size() != q_values.size())
        throw std::invalid_argument("policy_gradient_step: batch/Q size mismatch");

    const auto fwd = gen_forward<float>(seqs, gen.weights<float>());
    const size_t seq_len = seqs[0].size();
    const uint32_t batch = static_cast<uint32_t>(seqs.size());
    const float scale = 1.0f / (static_cast<float>(seq_len) * batch);

    gen.zero_grad();
    std::vector<Matf> dlogits(seq_len);
    for (size_t t = 0; t < seq_len; ++t) {
        Matf d(batch, gen.vocab_size);
        for (uint32_t b = 0; b < batch; ++b) {
            const float q = static_cast<float>(q_values[b][t]) * scale;
            const float* p = fwd.probs[t].row(b);
            float* drow = d.row(b);
            for (uint32_t v = 0; v < gen.vocab_size; ++v) drow[v] = -p[v] * q;
            drow[seqs[b][t]] += q;
        }
        dlogits[t] = std::move(d);
    }
    gen_backward(gen, fwd, dlogits);

    for (auto* p : gen.tensors())
        if (!p->grad.all_finite()) {
            gen.zero_grad();
            throw NumericError("policy_gradient_step: non-finite gradient, update aborted");
        }
    for (auto* p : gen.tensors()) axpy(p->value, alpha, p->grad);
    gen.zero_grad();
}

// --- training schedules ------------------------------------------------------------

struct GanSchedule {
    uint32_t pretrain_gen_epochs = 20;
    uint32_t pretrain_disc_epochs = 3;
    uint32_t adversarial_rounds = 10;
    uint32_t g_steps_per_round = 1;
    uint32_t d_steps_per_round = 1;
    float policy_lr = 0.01f;
    uint32_t batch_size = 128;
    uint32_t rollouts = 16; // N in the MC search
    uint32_t patience = 3;  // adversarial rounds of NLL degradation before stop
    AdamConfig adam{};
};

struct PretrainResult {
    std::vector<double> epoch_nll; // held-out NLL per token after each epoch
    uint32_t best_epoch = 0;
};

/// Teacher-forced MLE pretraining; returns the best epoch's parameters by
/// held-out NLL.
inline PretrainResult pretrain_generator(GeneratorParams& gen,
                                         const std::vector<std::vector<uint32_t>>& corpus,
                                         const GanSchedule& schedule, Rng rng) {
    if (corpus.empty()) throw std::invalid_argument("pretrain_generator: empty corpus");
    PretrainResult result;

    std::vector<uint32_t> order(corpus.size());
    for (uint32_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    uint32_t n_val = 0;
    if (corpus.size() >= 2)
        n_val = std::clamp<uint32_t>(static_cast<uint32_t>(corpus.size() / 10), 1,
                                     static_cast<uint32_t>(corpus.size()) - 1);
    std::vector<std::vector<uint32_t>> holdout, train;
    for (uint32_t i = 0; i < order.size(); ++i)
        (i < n_val ? holdout : train).push_back(corpus[order[i]]);
    if (holdout.empty()) holdout = train;

    AdamOptimizer opt(schedule.adam);
    opt.attach(gen.tensors());

    GeneratorParams best = gen;
    double best_nll = std::numeric_limits<double>::infinity();

    std::vector<uint32_t> batch_order(train.size());
    for (uint32_t i = 0; i < batch_order.size(); ++i) batch_order[i] = i;

    for (uint32_t epoch = 1; epoch <= schedule.pretrain_gen_epochs; ++epoch) {
        rng.shuffle(batch_order);
        for (uint32_t start = 0; start < batch_order.size(); start += schedule.batch_size) {
            const uint32_t end =
                std::min<uint32_t>(batch_order.size(), start + schedule.batch_size);
            std::vector<std::vector<uint32_t>> batch;
            batch.reserve(end - start);
            for (uint32_t i = start; i < end; ++i) batch.push_back(train[batch_order[i]]);
            teacher_forcing_backward(gen, batch);
            opt.step();
            gen.zero_grad();
        }
        const double nll = teacher_forcing_nll(holdout, gen.weights<float>());
        result.epoch_nll.push_back(nll);
        if (nll < best_nll) {
            best_nll = nll;
            best = gen;
            result.best_epoch = epoch;
        }
    }
    gen = best;
    return result;
}

/// Binary CE training on balanced real/generated batches.
inline std::vector<double> train_discriminator(DiscriminatorParams& disc,
                                               const std::vector<std::vector<uint32_t>>& real,
                                               const std::vector<std::vector<uint32_t>>& generated,
                                               uint32_t epochs, uint32_t batch_size,
                                               const AdamConfig& adam, Rng rng) {
    if (real.empty() || generated.empty())
        throw std::invalid_argument("train_discriminator: both batches must be non-empty");
    AdamOptimizer opt(adam);
    opt.attach(disc.tensors());

    std::vector<double> epoch_losses;
    const uint32_t half = std::max<uint32_t>(1, batch_size / 2);
    std::vector<uint32_t> real_order(real.size()), gen_order(generated.size());
    for (uint32_t i = 0; i < real_order.size(); ++i) real_order[i] = i;
    for (uint32_t i = 0; i < gen_order.size(); ++i) gen_order[i] = i;

    for (uint32_t epoch = 1; epoch <= epochs; ++epoch) {
        rng.shuffle(real_order);
        rng.shuffle(gen_order);
        const uint32_t pairs = static_cast<uint32_t>(std::min(real.size(), generated.size()));
        double loss_sum = 0.0;
        uint32_t steps = 0;
        for (uint32_t start = 0; start < pairs; start += half) {
            const uint32_t end = std::min(pairs, start + half);
            std::vector<std::vector<uint32_t>> batch;
            std::vector<int> labels;
            for (uint32_t i = start; i < end; ++i) {
                batch.push_back(real[real_order[i]]);
                labels.push_back(1);
                batch.push_back(generated[gen_order[i]]);
                labels.push_back(0);
            }
            loss_sum += disc_backward_batch(disc, batch, labels, &rng);
            opt.step();
            disc.zero_grad();
            ++steps;
        }
        epoch_losses.push_back(loss_sum / std::max<uint32_t>(steps, 1));
    }
    return epoch_losses;
}

/// Fraction of correct real-vs-generated calls at threshold 0.5.
inline double disc_accuracy(const DiscriminatorParams& disc,
                            const std::vector<std::vector<uint32_t>>& real,
                            const std::vector<std::vector<uint32_t>>& generated) {
    const auto w = disc.weights<float>();
    uint64_t correct = 0;
    for (const auto& s : real)
        if (disc_forward(s, w) > 0.5f) ++correct;
    for (const auto& s : generated)
        if (disc_forward(s, w) <= 0.5f) ++correct;
    return static_cast<double>(correct) / static_cast<double>(real.size() + generated.size());
}

struct GanDiagnosticsRow {
    uint32_t chunk = 0;
    std::string round; // "1".."R" for adversarial rounds, "G" for the sampling phase
    double gen_nll = 0.0;
    double mean_reward = 0.0;
    double disc_acc = 0.0;
    double unique_fraction = 0.0;
};

/// Alternating policy-gradient and discriminator updates. The rollout
/// parameters are refreshed from the generator after each round's G steps.
/// Stops after the configured rounds or once held-out NLL has degraded for
/// `patience` consecutive rounds.
inline void adversarial_train(GeneratorParams& gen, DiscriminatorParams& disc,
                              const std::vector<std::vector<uint32_t>>& real,
                              const GanSchedule& schedule, RolloutConfig& rollout, Rng rng,
                              std::vector<GanDiagnosticsRow>* diagnostics = nullptr,
                              uint32_t chunk_id = 0) {
    if (real.empty()) throw std::invalid_argument("adversarial_train: empty real corpus");
    const uint32_t seq_len = rollout.seq_len;

    std::vector<uint32_t> order(real.size());
    for (uint32_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    uint32_t n_val = 0;
    if (real.size() >= 2)
        n_val = std::clamp<uint32_t>(static_cast<uint32_t>(real.size() / 10), 1,
                                     static_cast<uint32_t>(real.size()) - 1);
    std::vector<std::vector<uint32_t>> holdout, train;
    for (uint32_t i = 0; i < order.size(); ++i)
        (i < n_val ? holdout : train).push_back(real[order[i]]);
    if (holdout.empty()) holdout = train;

    rollout.refresh(gen);
    double best_nll = teacher_forcing_nll(holdout, gen.weights<float>());
    uint32_t degraded = 0;

    for (uint32_t round = 1; round <= schedule.adversarial_rounds; ++round) {
        Rng round_rng = rng.substream("adv.round", round);
        double mean_reward = 0.0;
        uint64_t reward_count = 0;

        for (uint32_t g = 0; g < schedule.g_steps_per_round; ++g) {
            Rng g_rng = round_rng.substream("g", g);
            const auto batch = sample_batch(gen, seq_len, schedule.batch_size, g_rng);
            std::vector<std::vector<double>> q(batch.size(), std::vector<double>(seq_len));
            for (size_t b = 0; b < batch.size(); ++b) {
                std::vector<uint32_t> prefix;
                prefix.reserve(seq_len);
                for (uint32_t t = 0; t < seq_len; ++t) {
                    prefix.push_back(batch[b][t]);
                    q[b][t] = mc_reward(prefix, rollout, disc, g_rng);
                }
                mean_reward += q[b][seq_len - 1]; // terminal = exact disc score
                ++reward_count;
            }
            try {
                policy_gradient_step(gen, batch, q, schedule.policy_lr);
            } catch (const NumericError& e) {
                throw NumericError(std::string(e.what()) + " (adversarial round " +
                                   std::to_string(round) + ")");
            }
        }
        rollout.refresh(gen);

        Rng d_rng = round_rng.substream("d");
        std::vector<std::vector<uint32_t>> fakes;
        for (uint32_t d = 0; d < schedule.d_steps_per_round; ++d) {
            fakes = sample_batch(gen, seq_len, static_cast<uint32_t>(train.size()), d_rng);
            train_discriminator(disc, train, fakes, 1, schedule.batch_size, schedule.adam,
                                d_rng.substream("train", d));
        }

        const double nll = teacher_forcing_nll(holdout, gen.weights<float>());
        if (diagnostics) {
            GanDiagnosticsRow row;
            row.chunk = chunk_id;
            row.round = std::to_string(round);
            row.gen_nll = nll;
            row.mean_reward = reward_count > 0 ? mean_reward / reward_count : 0.0;
            Rng eval_rng = round_rng.substream("eval");
            const auto eval_fakes =
                sample_batch(gen, seq_len, static_cast<uint32_t>(holdout.size()), eval_rng);
            row.disc_acc = disc_accuracy(disc, holdout, eval_fakes);
            std::unordered_set<std::string> unique;
            const auto& pool = fakes.empty() ? eval_fakes : fakes;
            for (const auto& s : pool)
                unique.insert(std::string(reinterpret_cast<const char*>(s.data()),
                                          s.size() * sizeof(uint32_t)));
            row.unique_fraction = static_cast<double>(unique.size()) / pool.size();
            diagnostics->push_back(row);
        }

        if (nll < best_nll) {
            best_nll = nll;
            degraded = 0;
        } else if (++degraded >= schedule.patience) {
            break;
        }
    }
}

// --- chunked oversampling ------------------------------------------------------------

struct OversampleConfig {
    uint32_t vocab_size = 0;
    uint32_t seq_len = kDefaultMessageLength;
    uint32_t gen_embed_dim = 30;
    uint32_t gen_hidden = 30; // GRU hidden layer of size 30
    uint32_t disc_embed_dim = 32;
    uint32_t disc_filters = 25;
    float disc_keep_prob = 0.8f;
    GanSchedule schedule;
    double budget_factor = 50.0; // sampling attempts allowed per needed record
};

struct OversampleResult {
    std::vector<EncodedLog> records; // originals first, then accepted generated
    size_t original_count = 0;
    size_t generated_attempts = 0;
    size_t generated_unique = 0;
    std::vector<GeneratorParams> generators;
    std::vector<DiscriminatorParams> discriminators;
    std::vector<GanDiagnosticsRow> diagnostics;
};

/// Generation budget ran out before reaching the target; carries what was
/// achieved so far.
class OversampleBudgetError : public std::runtime_error {
public:
    OversampleBudgetError(std::string msg, OversampleResult partial_result)
        : std::runtime_error(std::move(msg)), partial(std::move(partial_result)) {}
    OversampleResult partial;
};

namespace detail {

struct ChunkOutcome {
    GeneratorParams gen;
    DiscriminatorParams disc;
    std::vector<GanDiagnosticsRow> diagnostics;
};

inline ChunkOutcome train_chunk(const std::vector<std::vector<uint32_t>>& chunk,
                                const OversampleConfig& cfg, uint32_t chunk_id, Rng rng) {
    ChunkOutcome out;
    Rng init_rng = rng.substream("init");
    out.gen = GeneratorParams(cfg.vocab_size, cfg.gen_embed_dim, cfg.gen_hidden);
    out.gen.init(init_rng);
    out.disc = DiscriminatorParams(cfg.vocab_size, cfg.disc_embed_dim, cfg.disc_filters);
    out.disc.keep_prob = cfg.disc_keep_prob;
    out.disc.init(init_rng);

    pretrain_generator(out.gen, chunk, cfg.schedule, rng.substream("pretrain.gen"));

    Rng fake_rng = rng.substream("pretrain.fakes");
    const auto fakes =
        sample_batch(out.gen, cfg.seq_len, static_cast<uint32_t>(chunk.size()), fake_rng);
    train_discriminator(out.disc, chunk, fakes, cfg.schedule.pretrain_disc_epochs,
                        cfg.schedule.batch_size, cfg.schedule.adam, rng.substream("pretrain.disc"));

    RolloutConfig rollout;
    rollout.n_rollouts = cfg.schedule.rollouts;
    rollout.seq_len = cfg.seq_len;
    adversarial_train(out.gen, out.disc, chunk, cfg.schedule, rollout, rng.substream("adv"),
                      &out.diagnostics, chunk_id);
    return out;
}

} // namespace detail

/// Splits the negatives into near-equal chunks, trains one SeqGAN per chunk,
/// then samples round-robin from the trained generators until originals plus
/// unique new messages reach target_count. Originals are kept verbatim; a
/// generated message is accepted only if its (ids, label) has not been seen.
inline OversampleResult oversample(const std::vector<EncodedLog>& neg_records,
                                   uint32_t chunk_count, size_t target_count,
                                   const OversampleConfig& cfg, Rng rng) {
    if (neg_records.empty()) throw std::invalid_argument("oversample: no negative records");
    if (chunk_count == 0) throw std::invalid_argument("oversample: chunk_count must be >= 1");
    if (target_count < neg_records.size())
        throw std::invalid_argument("oversample: target below the original count");

    OversampleResult result;
    result.records = neg_records;
    result.original_count = neg_records.size();
    if (target_count == neg_records.size()) return result; // nothing to generate

    chunk_count = std::min<uint32_t>(chunk_count, static_cast<uint32_t>(neg_records.size()));

    // near-equal contiguous chunks after a seeded shuffle
    std::vector<uint32_t> order(neg_records.size());
    for (uint32_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.substream("chunks").shuffle(order);
    std::vector<std::vector<std::vector<uint32_t>>> chunks(chunk_count);
    for (uint32_t i = 0; i < order.size(); ++i)
        chunks[i % chunk_count].push_back(neg_records[order[i]].ids);

    // per-chunk GAN trainings are independent; run them concurrently
    std::vector<std::future<detail::ChunkOutcome>> futures;
    futures.reserve(chunk_count);
    for (uint32_t c = 0; c < chunk_count; ++c) {
        Rng chunk_rng = rng.substream("gan.chunk", c);
        futures.push_back(std::async(std::launch::async, [&cfg, c, chunk_rng,
                                                          chunk = std::move(chunks[c])]() {
            return detail::train_chunk(chunk, cfg, c, chunk_rng);
        }));
    }
    std::vector<detail::ChunkOutcome> outcomes;
    outcomes.reserve(chunk_count);
    for (auto& f : futures) outcomes.push_back(f.get());
    for (auto& o : outcomes) {
        result.generators.push_back(std::move(o.gen));
        result.discriminators.push_back(std::move(o.disc));
        for (auto& row : o.diagnostics) result.diagnostics.push_back(row);
    }

    std::unordered_set<std::string> seen;
    for (const auto& rec : neg_records) seen.insert(detail::dedup_key(rec));

    const size_t needed = target_count - neg_records.size();
    const size_t budget = static_cast<size_t>(
        std::max(1024.0, cfg.budget_factor * static_cast<double>(needed)));
    std::vector<Rng> sample_rngs;
    for (uint32_t c = 0; c < chunk_count; ++c)
        sample_rngs.push_back(rng.substream("gan.sample", c));

    std::vector<size_t> chunk_attempts(chunk_count, 0), chunk_unique(chunk_count, 0);
    const uint32_t sample_batch_size = 64;
    uint32_t turn = 0;
    while (result.records.size() < target_count && result.generated_attempts < budget) {
        const uint32_t c = turn % chunk_count;
        ++turn;
        const auto batch = sample_batch(result.generators[c], cfg.seq_len, sample_batch_size,
                                        sample_rngs[c]);
        for (const auto& ids : batch) {
            ++result.generated_attempts;
            ++chunk_attempts[c];
            EncodedLog rec;
            rec.ids = ids;
            rec.label = Label::negative;
            if (seen.insert(detail::dedup_key(rec)).second) {
                ++chunk_unique[c];
                ++result.generated_unique;
                result.records.push_back(std::move(rec));
                if (result.records.size() >= target_count) break;
            }
        }
    }

    for (uint32_t c = 0; c < chunk_count; ++c) {
        GanDiagnosticsRow row;
        row.chunk = c;
        row.round = "G";
        row.unique_fraction = chunk_attempts[c] > 0
                                  ? static_cast<double>(chunk_unique[c]) / chunk_attempts[c]
                                  : 0.0;
        result.diagnostics.push_back(row);
    }

    if (result.records.size() < target_count)
        throw OversampleBudgetError(
            "oversample: budget of " + std::to_string(budget) + " samples exhausted at " +
                std::to_string(result.records.size()) + "/" + std::to_string(target_count),
            std::move(result));
    return result;
}

} // namespace logbal
