#pragma once

// Two-class GRU classifier on top of gru.hpp: feature vectors enter as a
// length-T sequence of scalar inputs (d = 1), the final state goes through
// inverted dropout and a softmax head. Training uses ADAM, global-norm
// gradient clipping and early stopping on a validation set.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "logbal/gru.hpp"
#include "logbal/matrix.hpp"
#include "logbal/nn.hpp"
#include "logbal/rng.hpp"

namespace logbal {

struct ClassifierConfig {
    uint32_t hidden = 100;
    uint32_t max_epochs = 100;
    uint32_t batch_size = 128;
    float keep_prob = 0.8f;
    uint32_t patience = 5;
    float clip_norm = 5.0f;
    AdamConfig adam{};
};

struct TrainedClassifier {
    GruParams gru;
    ClassifierHead head;
};

struct EpochStats {
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
};

struct ClassifierTrainResult {
    TrainedClassifier model;
    std::vector<EpochStats> history;
    uint32_t best_epoch = 0; // 1-based epoch whose val loss was lowest
};

namespace detail {

/// Column t of the feature rows selected by `idx`, as a [B x 1] step input.
inline std::vector<Matf> feature_sequence(const Matf& features,
                                          const std::vector<uint32_t>& idx) {
    std::vector<Matf> xs(features.cols, Matf(static_cast<uint32_t>(idx.size()), 1));
    for (uint32_t t = 0; t < features.cols; ++t)
        for (uint32_t b = 0; b < idx.size(); ++b) xs[t](b, 0) = features(idx[b], t);
    return xs;
}

inline Matf one_hot_rows(const std::vector<int>& labels, const std::vector<uint32_t>& idx) {
    Matf target(static_cast<uint32_t>(idx.size()), 2);
    for (uint32_t b = 0; b < idx.size(); ++b) target(b, labels[idx[b]]) = 1.0f;
    return target;
}

} // namespace detail

inline Matf classifier_probs(const Matf& features, const TrainedClassifier& model,
                             uint32_t batch_size = 128) {
    Matf probs(features.rows, 2);
    const auto w = model.gru.weights<float>();
    for (uint32_t start = 0; start < features.rows; start += batch_size) {
        const uint32_t end = std::min(features.rows, start + batch_size);
        std::vector<uint32_t> idx(end - start);
        for (uint32_t i = start; i < end; ++i) idx[i - start] = i;
        const auto xs = detail::feature_sequence(features, idx);
        Matf p = classify<float>(xs, w, model.head.W_out.value, model.head.b_out.value);
        for (uint32_t b = 0; b < idx.size(); ++b)
            for (uint32_t j = 0; j < 2; ++j) probs(idx[b], j) = p(b, j);
    }
    return probs;
}

inline std::vector<int> classifier_predict(const Matf& features, const TrainedClassifier& model,
                                           uint32_t batch_size = 128) {
    const Matf probs = classifier_probs(features, model, batch_size);
    std::vector<int> out(features.rows);
    for (uint32_t i = 0; i < features.rows; ++i) out[i] = probs(i, 0) >= probs(i, 1) ? 0 : 1;
    return out;
}

struct LossAcc {
    double loss = 0.0;
    double acc = 0.0;
};

inline LossAcc classifier_eval(const Matf& features, const std::vector<int>& labels,
                               const TrainedClassifier& model, uint32_t batch_size = 128) {
    const Matf probs = classifier_probs(features, model, batch_size);
    LossAcc out;
    uint64_t correct = 0;
    for (uint32_t i = 0; i < features.rows; ++i) {
        const double p = std::max(static_cast<double>(probs(i, labels[i])), kCrossEntropyClip);
        out.loss -= std::log(p);
        const int pred = probs(i, 0) >= probs(i, 1) ? 0 : 1;
        if (pred == labels[i]) ++correct;
    }
    out.loss /= features.rows;
    out.acc = static_cast<double>(correct) / features.rows;
    return out;
}

/// Trains a fresh classifier. With a non-empty validation set, early-stops
/// after `patience` epochs without val-loss improvement and returns the best
/// epoch's parameters. With fixed_epochs > 0, runs exactly that many epochs
/// and keeps the final parameters (used for the retrain-on-pool final model).
inline ClassifierTrainResult train_classifier(const Matf& train_x, const std::vector<int>& train_y,
                                              const Matf& val_x, const std::vector<int>& val_y,
                                              const ClassifierConfig& cfg, Rng rng,
                                              uint32_t fixed_epochs = 0) {
    if (train_x.rows == 0) throw std::invalid_argument("train_classifier: empty training set");
    if (train_x.rows != train_y.size())
        throw std::invalid_argument("train_classifier: features/labels size mismatch");

    ClassifierTrainResult result;
    result.model.gru = GruParams(1, cfg.hidden);
    result.model.gru.init(rng);
    result.model.head = ClassifierHead(cfg.hidden);
    result.model.head.init(rng);

    auto& model = result.model;
    std::vector<ParamTensor*> all_params;
    for (auto* p : model.gru.tensors()) all_params.push_back(p);
    for (auto* p : model.head.tensors()) all_params.push_back(p);

    AdamOptimizer opt(cfg.adam);
    opt.attach(all_params);

    const bool early_stop = fixed_epochs == 0 && val_x.rows > 0;
    const uint32_t epochs = fixed_epochs > 0 ? fixed_epochs : cfg.max_epochs;

    TrainedClassifier best = model;
    double best_val_loss = std::numeric_limits<double>::infinity();
    uint32_t best_epoch = 0;
    uint32_t since_best = 0;

    std::vector<uint32_t> order(train_x.rows);
    for (uint32_t i = 0; i < train_x.rows; ++i) order[i] = i;

    for (uint32_t epoch = 1; epoch <= epochs; ++epoch) {
        rng.shuffle(order);
        for (uint32_t start = 0; start < order.size(); start += cfg.batch_size) {
            const uint32_t end = std::min<uint32_t>(order.size(), start + cfg.batch_size);
            const std::vector<uint32_t> idx(order.begin() + start, order.begin() + end);
            const uint32_t B = static_cast<uint32_t>(idx.size());

            const auto xs = detail::feature_sequence(train_x, idx);
            const auto trace = seq_forward<float>(xs, model.gru.weights<float>());
            const Matf& h_last = final_state(trace);

            const auto mask = dropout_mask(static_cast<size_t>(B) * cfg.hidden,
                                           cfg.keep_prob, rng);
            Matf h_drop = h_last;
            for (size_t i = 0; i < h_drop.size(); ++i) h_drop.values[i] *= mask[i];

            Matf probs = affine(h_drop, model.head.W_out.value, model.head.b_out.value);
            softmax_rows(probs);
            const Matf target = detail::one_hot_rows(train_y, idx);

            // dlogits = (probs - target) / B
            Matf dlogits(B, 2);
            for (size_t i = 0; i < dlogits.size(); ++i)
                dlogits.values[i] = (probs.values[i] - target.values[i]) / B;

            add_matmul_tn(model.head.W_out.grad, h_drop, dlogits);
            add_inplace(model.head.b_out.grad, col_sums(dlogits));
            Matf dh = matmul_nt(dlogits, model.head.W_out.value);
            for (size_t i = 0; i < dh.size(); ++i) dh.values[i] *= mask[i];

            bptt(trace, dh, model.gru);
            clip_global_norm(all_params, cfg.clip_norm);
            opt.step();
            opt.zero_grad();
        }

        EpochStats stats;
        const LossAcc train_eval = classifier_eval(train_x, train_y, model, cfg.batch_size);
        stats.train_loss = train_eval.loss;
        stats.train_acc = train_eval.acc;
        if (val_x.rows > 0) {
            const LossAcc val_eval = classifier_eval(val_x, val_y, model, cfg.batch_size);
            stats.val_loss = val_eval.loss;
            stats.val_acc = val_eval.acc;
        }
        result.history.push_back(stats);

        if (early_stop) {
            if (stats.val_loss < best_val_loss) {
                best_val_loss = stats.val_loss;
                best = model;
                best_epoch = epoch;
                since_best = 0;
            } else if (++since_best >= cfg.patience) {
                break;
            }
        }
    }

    if (early_stop) {
        result.model = best;
        result.best_epoch = best_epoch;
    } else {
        result.best_epoch = epochs;
    }
    return result;
}

} // namespace logbal
