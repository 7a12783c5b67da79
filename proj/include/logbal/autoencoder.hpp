#pragma once

// Dual per-class autoencoders: 40-400(L1)-200-200-40 with tanh hidden
// layers, inverted dropout between layers at train time, softmax output
// reconstructing the (probability-vector) input under categorical cross
// entropy. Feature extraction takes the softmax output as the 40-dim
// feature. Smaller layer plans are allowed so tests can gradient-check a
// shrunken replica of the identical code path.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <future>
#include <string>
#include <vector>

#include "logbal/corpus.hpp"
#include "logbal/matrix.hpp"
#include "logbal/nn.hpp"
#include "logbal/rng.hpp"

namespace logbal {

struct AeDims {
    uint32_t input = 40;
    uint32_t enc1 = 400;
    uint32_t enc2 = 200;
    uint32_t dec1 = 200;
};

template <class T>
struct AeWeights {
    Matrix<T> W1, b1; // encoder 1 (L1-regularized)
    Matrix<T> W2, b2; // encoder 2
    Matrix<T> W3, b3; // decoder
    Matrix<T> W4, b4; // output projection, softmax
};

struct AeParams {
    AeDims dims;
    ParamTensor enc1_w, enc1_b;
    ParamTensor enc2_w, enc2_b;
    ParamTensor dec1_w, dec1_b;
    ParamTensor out_w, out_b;

    AeParams() : AeParams(AeDims{}) {}
    explicit AeParams(AeDims d)
        : dims(d), enc1_w(d.input, d.enc1), enc1_b(1, d.enc1), enc2_w(d.enc1, d.enc2),
          enc2_b(1, d.enc2), dec1_w(d.enc2, d.dec1), dec1_b(1, d.dec1), out_w(d.dec1, d.input),
          out_b(1, d.input) {}

    void init(Rng& rng) {
        glorot_init(enc1_w.value, rng);
        glorot_init(enc2_w.value, rng);
        glorot_init(dec1_w.value, rng);
        glorot_init(out_w.value, rng);
    }

    std::array<ParamTensor*, 8> tensors() {
        return {&enc1_w, &enc1_b, &enc2_w, &enc2_b, &dec1_w, &dec1_b, &out_w, &out_b};
    }

    void zero_grad() {
        for (auto* p : tensors()) p->zero_grad();
    }

    template <class T>
    AeWeights<T> weights() const {
        return {cast<T>(enc1_w.value), cast<T>(enc1_b.value), cast<T>(enc2_w.value),
                cast<T>(enc2_b.value), cast<T>(dec1_w.value), cast<T>(dec1_b.value),
                cast<T>(out_w.value),  cast<T>(out_b.value)};
    }
};

/// Normalized shifted token-id vector: x[i] = (ids[i]+1) / sum_j (ids[j]+1).
/// Positive entries summing to 1, so categorical cross entropy against the
/// softmax reconstruction is well defined. An all-PAD message maps to the
/// uniform vector.
inline std::vector<double> ae_input(const EncodedLog& log, uint32_t vocab_size) {
    double denom = 0.0;
    for (uint32_t id : log.ids) {
        if (id >= vocab_size)
            throw std::invalid_argument("ae_input: token id " + std::to_string(id) +
                                        " out of range for vocab size " +
                                        std::to_string(vocab_size));
        denom += static_cast<double>(id) + 1.0;
    }
    std::vector<double> x(log.ids.size());
    for (size_t i = 0; i < x.size(); ++i) x[i] = (static_cast<double>(log.ids[i]) + 1.0) / denom;
    return x;
}

/// Rows = ae_input of each record, as the float training matrix.
inline Matf ae_input_matrix(const std::vector<EncodedLog>& records, uint32_t vocab_size) {
    if (records.empty()) throw std::invalid_argument("ae_input_matrix: no records");
    const uint32_t dim = static_cast<uint32_t>(records[0].ids.size());
    Matf x(static_cast<uint32_t>(records.size()), dim);
    for (uint32_t i = 0; i < records.size(); ++i) {
        const auto row = ae_input(records[i], vocab_size);
        for (uint32_t j = 0; j < dim; ++j) x(i, j) = static_cast<float>(row[j]);
    }
    return x;
}

template <class T>
struct AeTrace {
    Matrix<T> x;
    Matrix<T> a1, a2, a3;       // post-activation (and post-dropout) hidden layers
    std::vector<float> m1, m2, m3; // dropout masks (train mode only)
    Matrix<T> recon;            // softmax output
};

/// Forward pass. Pass rng to enable train-mode dropout at keep_prob; with
/// rng == nullptr the pass is the deterministic inference path.
template <class T>
AeTrace<T> ae_forward(const Matrix<T>& x, const AeWeights<T>& w, double keep_prob, Rng* rng) {
    AeTrace<T> trace;
    trace.x = x;

    auto dropped = [&](Matrix<T>& a, std::vector<float>& mask) {
        if (!rng) return;
        mask = dropout_mask(a.size(), keep_prob, *rng);
        for (size_t i = 0; i < a.size(); ++i) a.values[i] *= static_cast<T>(mask[i]);
    };

    trace.a1 = tanh_act(affine(x, w.W1, w.b1));
    dropped(trace.a1, trace.m1);
    trace.a2 = tanh_act(affine(trace.a1, w.W2, w.b2));
    dropped(trace.a2, trace.m2);
    trace.a3 = tanh_act(affine(trace.a2, w.W3, w.b3));
    dropped(trace.a3, trace.m3);
    trace.recon = affine(trace.a3, w.W4, w.b4);
    softmax_rows(trace.recon);
    return trace;
}

/// Mean reconstruction cross entropy plus the L1 term on the first encoder.
template <class T>
double ae_loss(const Matrix<T>& x, const AeWeights<T>& w, double l1_lambda) {
    const auto trace = ae_forward<T>(x, w, 1.0, nullptr);
    double loss = cross_entropy_rows(trace.recon, x);
    for (const auto v : w.W1.values) loss += l1_lambda * std::abs(static_cast<double>(v));
    return loss;
}

/// One train-mode forward/backward over a batch; accumulates grads and
/// returns the batch loss (CE + L1).
inline double ae_backward(const Matf& x, AeParams& params, double keep_prob, double l1_lambda,
                          Rng* rng) {
    const auto w = params.weights<float>();
    const auto trace = ae_forward<float>(x, w, keep_prob, rng);
    const uint32_t B = x.rows;

    double loss = cross_entropy_rows(trace.recon, x);

    // softmax + CE against the input: dlogits = (recon - x) / B
    Matf dlogits(B, x.cols);
    for (size_t i = 0; i < dlogits.size(); ++i)
        dlogits.values[i] = (trace.recon.values[i] - x.values[i]) / B;

    add_matmul_tn(params.out_w.grad, trace.a3, dlogits);
    add_inplace(params.out_b.grad, col_sums(dlogits));
    Matf da3 = matmul_nt(dlogits, params.out_w.value);

    auto tanh_back = [](Matf& da, const Matf& a, const std::vector<float>& mask) {
        for (size_t i = 0; i < da.size(); ++i) {
            float post = a.values[i]; // post-dropout activation
            if (!mask.empty()) {
                da.values[i] *= mask[i];
                post = mask[i] > 0.0f ? a.values[i] / mask[i] : 0.0f;
            }
            da.values[i] *= 1.0f - post * post;
        }
    };

    tanh_back(da3, trace.a3, trace.m3);
    add_matmul_tn(params.dec1_w.grad, trace.a2, da3);
    add_inplace(params.dec1_b.grad, col_sums(da3));
    Matf da2 = matmul_nt(da3, params.dec1_w.value);

    tanh_back(da2, trace.a2, trace.m2);
    add_matmul_tn(params.enc2_w.grad, trace.a1, da2);
    add_inplace(params.enc2_b.grad, col_sums(da2));
    Matf da1 = matmul_nt(da2, params.enc2_w.value);

    tanh_back(da1, trace.a1, trace.m1);
    add_matmul_tn(params.enc1_w.grad, trace.x, da1);
    add_inplace(params.enc1_b.grad, col_sums(da1));

    if (l1_lambda > 0.0) {
        auto [l1_loss, l1_grad] = l1_penalty(params.enc1_w.value, l1_lambda);
        loss += l1_loss;
        add_inplace(params.enc1_w.grad, l1_grad);
    }
    return loss;
}

struct AeTrainConfig {
    uint32_t max_epochs = 100;
    uint32_t batch_size = 128;
    double keep_prob = 0.8;
    uint32_t patience = 5;
    double l1_lambda = 1e-5;
    double holdout_fraction = 0.1;
    AdamConfig adam{};
    AeDims dims{};
};

struct AeTrainResult {
    AeParams params;
    std::vector<double> train_loss; // per epoch (CE + L1, train batches)
    std::vector<double> val_loss;   // per epoch (CE on held-out rows)
    uint32_t best_epoch = 0;
};

/// Inference reconstruction CE, averaged over rows.
inline double ae_reconstruction_loss(const Matf& x, const AeParams& params) {
    const auto trace = ae_forward<float>(x, params.weights<float>(), 1.0, nullptr);
    return cross_entropy_rows(trace.recon, x);
}

namespace detail {
inline Matf gather_rows(const Matf& x, const std::vector<uint32_t>& idx) {
    Matf out(static_cast<uint32_t>(idx.size()), x.cols);
    for (uint32_t i = 0; i < idx.size(); ++i)
        std::copy(x.row(idx[i]), x.row(idx[i]) + x.cols, out.row(i));
    return out;
}
} // namespace detail

/// Trains one autoencoder on single-label inputs. Holds out a fraction of
/// rows for early stopping on reconstruction loss; returns the best epoch's
/// parameters.
inline AeTrainResult ae_train_matrix(const Matf& inputs, const AeTrainConfig& cfg, Rng rng) {
    if (inputs.rows == 0) throw std::invalid_argument("ae_train: no records");
    if (inputs.cols != cfg.dims.input)
        throw ShapeError("ae_train: input " + inputs.shape_str() + " vs configured dim " +
                         std::to_string(cfg.dims.input));

    AeTrainResult result;
    result.params = AeParams(cfg.dims);
    result.params.init(rng);

    std::vector<uint32_t> order(inputs.rows);
    for (uint32_t i = 0; i < inputs.rows; ++i) order[i] = i;
    rng.shuffle(order);

    uint32_t n_val = 0;
    if (inputs.rows >= 2) {
        n_val = static_cast<uint32_t>(static_cast<double>(inputs.rows) * cfg.holdout_fraction);
        n_val = std::clamp<uint32_t>(n_val, 1, inputs.rows - 1);
    }
    const std::vector<uint32_t> val_idx(order.begin(), order.begin() + n_val);
    std::vector<uint32_t> train_idx(order.begin() + n_val, order.end());
    const Matf val_rows = n_val > 0 ? detail::gather_rows(inputs, val_idx) : Matf();
    const Matf train_rows = detail::gather_rows(inputs, train_idx);

    AdamOptimizer opt(cfg.adam);
    {
        std::vector<ParamTensor*> ps;
        for (auto* p : result.params.tensors()) ps.push_back(p);
        opt.attach(ps);
    }

    AeParams best = result.params;
    double best_val = std::numeric_limits<double>::infinity();
    uint32_t since_best = 0;

    std::vector<uint32_t> batch_order(train_rows.rows);
    for (uint32_t i = 0; i < train_rows.rows; ++i) batch_order[i] = i;

    for (uint32_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        rng.shuffle(batch_order);
        double epoch_loss = 0.0;
        uint32_t batches = 0;
        for (uint32_t start = 0; start < batch_order.size(); start += cfg.batch_size) {
            const uint32_t end = std::min<uint32_t>(batch_order.size(), start + cfg.batch_size);
            const std::vector<uint32_t> idx(batch_order.begin() + start,
                                            batch_order.begin() + end);
            const Matf batch = detail::gather_rows(train_rows, idx);
            epoch_loss += ae_backward(batch, result.params, cfg.keep_prob, cfg.l1_lambda, &rng);
            opt.step();
            result.params.zero_grad();
            ++batches;
        }
        result.train_loss.push_back(epoch_loss / std::max<uint32_t>(batches, 1));

        const double val =
            ae_reconstruction_loss(n_val > 0 ? val_rows : train_rows, result.params);
        result.val_loss.push_back(val);

        if (val < best_val) {
            best_val = val;
            best = result.params;
            result.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }

    result.params = best;
    return result;
}

/// Spec'd entry point: all records must share one label.
inline AeTrainResult ae_train(const std::vector<EncodedLog>& records, uint32_t vocab_size,
                              const AeTrainConfig& cfg, Rng rng) {
    if (records.empty()) throw std::invalid_argument("ae_train: no records");
    for (const auto& rec : records)
        if (rec.label != records[0].label)
            throw std::invalid_argument("ae_train: records must share a single label");
    return ae_train_matrix(ae_input_matrix(records, vocab_size), cfg, rng);
}

// --- feature extraction -------------------------------------------------------

enum class Origin : uint8_t { real = 0, generated = 1 };

struct FeatureRecord {
    std::vector<float> features; // softmax output, sums to 1 before noise
    Label label = Label::positive;
    Origin origin = Origin::real;
};

/// Inference-mode softmax outputs, tagged with the given label.
inline std::vector<FeatureRecord> extract(const std::vector<EncodedLog>& records,
                                          uint32_t vocab_size, const AeParams& params, Label label,
                                          size_t real_count = SIZE_MAX) {
    std::vector<FeatureRecord> out;
    if (records.empty()) return out;
    const Matf x = ae_input_matrix(records, vocab_size);
    const auto trace = ae_forward<float>(x, params.weights<float>(), 1.0, nullptr);
    out.reserve(records.size());
    for (uint32_t i = 0; i < records.size(); ++i) {
        FeatureRecord rec;
        rec.features.assign(trace.recon.row(i), trace.recon.row(i) + trace.recon.cols);
        rec.label = label;
        rec.origin = i < real_count ? Origin::real : Origin::generated;
        out.push_back(std::move(rec));
    }
    return out;
}

inline constexpr double kFeatureNoiseVariance = 0.1;

struct DualPipelineResult {
    std::vector<FeatureRecord> features;
    AeTrainResult positive;
    AeTrainResult negative;
    size_t duplicates_removed = 0;
};

/// Trains the positive AE on positives and the negative AE on the
/// (oversampled) negatives, extracts and labels both outputs, concatenates,
/// removes duplicate feature rows (exact match after rounding to 6 decimals),
/// then adds zero-mean variance-0.1 Gaussian noise and shuffles.
/// Records at index >= neg_real_count on the negative side are tagged as
/// generated.
inline DualPipelineResult dual_pipeline(const std::vector<EncodedLog>& positives,
                                        const std::vector<EncodedLog>& negatives,
                                        uint32_t vocab_size, const AeTrainConfig& cfg, Rng rng,
                                        size_t neg_real_count = SIZE_MAX) {
    if (positives.empty() || negatives.empty())
        throw std::invalid_argument("dual_pipeline: both label sets must be non-empty");
    for (const auto& r : positives)
        if (r.label != Label::positive)
            throw std::invalid_argument("dual_pipeline: positive set contains a negative record");
    for (const auto& r : negatives)
        if (r.label != Label::negative)
            throw std::invalid_argument("dual_pipeline: negative set contains a positive record");

    DualPipelineResult result;
    Rng pos_rng = rng.substream("ae.pos");
    Rng neg_rng = rng.substream("ae.neg");

    // the two trainings are independent; run them on separate threads
    auto pos_future = std::async(std::launch::async, [&] {
        return ae_train(positives, vocab_size, cfg, pos_rng);
    });
    result.negative = ae_train(negatives, vocab_size, cfg, neg_rng);
    result.positive = pos_future.get();

    auto features = extract(positives, vocab_size, result.positive.params, Label::positive);
    auto neg_features =
        extract(negatives, vocab_size, result.negative.params, Label::negative, neg_real_count);
    features.insert(features.end(), std::make_move_iterator(neg_features.begin()),
                    std::make_move_iterator(neg_features.end()));

    // dedup before noise (noise would make every row unique)
    std::unordered_set<std::string> seen;
    std::vector<FeatureRecord> unique;
    unique.reserve(features.size());
    for (auto& rec : features) {
        std::string key(1, static_cast<char>(rec.label));
        key.reserve(1 + rec.features.size() * 8);
        for (float v : rec.features) {
            const int64_t rounded = std::llround(static_cast<double>(v) * 1e6);
            key.append(reinterpret_cast<const char*>(&rounded), sizeof(rounded));
        }
        if (seen.insert(key).second) unique.push_back(std::move(rec));
    }
    result.duplicates_removed = features.size() - unique.size();

    Rng noise_rng = rng.substream("noise");
    const double sigma = std::sqrt(kFeatureNoiseVariance);
    for (auto& rec : unique)
        for (auto& v : rec.features) v += static_cast<float>(noise_rng.gaussian(0.0, sigma));

    Rng shuffle_rng = rng.substream("shuffle");
    shuffle_rng.shuffle(unique);
    result.features = std::move(unique);
    return result;
}

// --- feature cache file ---------------------------------------------------------
// Header: magic "LBFT", count, dim (u32 LE); per record: label byte,
// origin byte, dim little-endian 32-bit reals.

inline constexpr char kFeatureMagic[5] = "LBFT";

inline void write_features(std::ostream& os, const std::vector<FeatureRecord>& records,
                           uint32_t dim = kDefaultMessageLength) {
    os.write(kFeatureMagic, 4);
    detail::write_u32(os, static_cast<uint32_t>(records.size()));
    detail::write_u32(os, dim);
    for (const auto& rec : records) {
        const char label = static_cast<char>(rec.label);
        const char origin = static_cast<char>(rec.origin);
        os.write(&label, 1);
        os.write(&origin, 1);
        for (float v : rec.features) detail::write_f32(os, v);
    }
}

inline std::vector<FeatureRecord> read_features(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string_view(magic, 4) != std::string_view(kFeatureMagic, 4))
        throw IoError("feature cache: bad magic");
    const uint32_t count = detail::read_u32(is);
    const uint32_t dim = detail::read_u32(is);
    std::vector<FeatureRecord> records;
    records.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        FeatureRecord rec;
        char label, origin;
        is.read(&label, 1);
        is.read(&origin, 1);
        if (!is) throw IoError("feature cache: truncated record");
        rec.label = label == 0 ? Label::negative : Label::positive;
        rec.origin = origin == 0 ? Origin::real : Origin::generated;
        rec.features.resize(dim);
        for (auto& v : rec.features) v = detail::read_f32(is);
        records.push_back(std::move(rec));
    }
    return records;
}

inline void write_features_file(const std::string& path, const std::vector<FeatureRecord>& records,
                                uint32_t dim = kDefaultMessageLength) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open feature cache for writing: " + path);
    write_features(out, records, dim);
}

inline std::vector<FeatureRecord> read_features_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open feature cache: " + path);
    return read_features(in);
}

} // namespace logbal
