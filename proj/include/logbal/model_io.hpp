#pragma once

// Mapping between parameter structs and named checkpoint sections.

#include <string>

#include "logbal/autoencoder.hpp"
#include "logbal/checkpoint.hpp"
#include "logbal/classifier.hpp"
#include "logbal/gru.hpp"
#include "logbal/seqgan.hpp"

namespace logbal {

inline void save_gru(CheckpointContainer& c, const std::string& prefix, const GruParams& p) {
    c.put(prefix + ".W_r", p.W_r.value);
    c.put(prefix + ".W_z", p.W_z.value);
    c.put(prefix + ".W_h", p.W_h.value);
    c.put(prefix + ".U_r", p.U_r.value);
    c.put(prefix + ".U_z", p.U_z.value);
    c.put(prefix + ".U_h", p.U_h.value);
    c.put(prefix + ".b_r", p.b_r.value);
    c.put(prefix + ".b_z", p.b_z.value);
    c.put(prefix + ".b_h", p.b_h.value);
}

inline GruParams load_gru(const CheckpointContainer& c, const std::string& prefix) {
    const Matf& w_r = c.get(prefix + ".W_r");
    GruParams p(w_r.rows, w_r.cols);
    p.W_r.value = w_r;
    p.W_z.value = c.get(prefix + ".W_z");
    p.W_h.value = c.get(prefix + ".W_h");
    p.U_r.value = c.get(prefix + ".U_r");
    p.U_z.value = c.get(prefix + ".U_z");
    p.U_h.value = c.get(prefix + ".U_h");
    p.b_r.value = c.get(prefix + ".b_r");
    p.b_z.value = c.get(prefix + ".b_z");
    p.b_h.value = c.get(prefix + ".b_h");
    return p;
}

inline void save_classifier(CheckpointContainer& c, const TrainedClassifier& model) {
    save_gru(c, "gru", model.gru);
    c.put("head.W_out", model.head.W_out.value);
    c.put("head.b_out", model.head.b_out.value);
}

inline TrainedClassifier load_classifier(const CheckpointContainer& c) {
    TrainedClassifier model;
    model.gru = load_gru(c, "gru");
    model.head = ClassifierHead(model.gru.hidden_dim);
    model.head.W_out.value = c.get("head.W_out");
    model.head.b_out.value = c.get("head.b_out");
    return model;
}

inline void save_autoencoder(CheckpointContainer& c, const AeParams& p) {
    c.put("enc1.W", p.enc1_w.value);
    c.put("enc1.b", p.enc1_b.value);
    c.put("enc2.W", p.enc2_w.value);
    c.put("enc2.b", p.enc2_b.value);
    c.put("dec1.W", p.dec1_w.value);
    c.put("dec1.b", p.dec1_b.value);
    c.put("out.W", p.out_w.value);
    c.put("out.b", p.out_b.value);
}

inline AeParams load_autoencoder(const CheckpointContainer& c) {
    AeDims dims;
    dims.input = c.get("enc1.W").rows;
    dims.enc1 = c.get("enc1.W").cols;
    dims.enc2 = c.get("enc2.W").cols;
    dims.dec1 = c.get("dec1.W").cols;
    AeParams p(dims);
    p.enc1_w.value = c.get("enc1.W");
    p.enc1_b.value = c.get("enc1.b");
    p.enc2_w.value = c.get("enc2.W");
    p.enc2_b.value = c.get("enc2.b");
    p.dec1_w.value = c.get("dec1.W");
    p.dec1_b.value = c.get("dec1.b");
    p.out_w.value = c.get("out.W");
    p.out_b.value = c.get("out.b");
    return p;
}

inline void save_generator(CheckpointContainer& c, const GeneratorParams& p) {
    c.put("embedding", p.embedding.value);
    save_gru(c, "gru", p.gru);
    c.put("proj.W", p.proj_w.value);
    c.put("proj.b", p.proj_b.value);
}

inline GeneratorParams load_generator(const CheckpointContainer& c) {
    const Matf& emb = c.get("embedding");
    const Matf& u = c.get("gru.U_r");
    GeneratorParams p(emb.rows, emb.cols, u.rows);
    p.embedding.value = emb;
    p.gru = load_gru(c, "gru");
    p.proj_w.value = c.get("proj.W");
    p.proj_b.value = c.get("proj.b");
    return p;
}

inline void save_discriminator(CheckpointContainer& c, const DiscriminatorParams& p) {
    c.put("embedding", p.embedding.value);
    for (size_t i = 0; i < p.widths.size(); ++i) {
        const std::string name = "conv" + std::to_string(p.widths[i]);
        c.put(name + ".K", p.conv_w[i].value);
        c.put(name + ".b", p.conv_b[i].value);
    }
    c.put("head.W", p.head_w.value);
    c.put("head.b", p.head_b.value);
}

inline DiscriminatorParams load_discriminator(const CheckpointContainer& c) {
    const Matf& emb = c.get("embedding");
    std::vector<uint32_t> widths;
    for (uint32_t w : default_conv_widths())
        if (c.has("conv" + std::to_string(w) + ".K")) widths.push_back(w);
    const Matf& k0 = c.get("conv" + std::to_string(widths[0]) + ".K");
    DiscriminatorParams p(emb.rows, emb.cols, k0.rows, widths);
    p.embedding.value = emb;
    for (size_t i = 0; i < widths.size(); ++i) {
        const std::string name = "conv" + std::to_string(widths[i]);
        p.conv_w[i].value = c.get(name + ".K");
        p.conv_b[i].value = c.get(name + ".b");
    }
    p.head_w.value = c.get("head.W");
    p.head_b.value = c.get("head.b");
    return p;
}

} // namespace logbal
