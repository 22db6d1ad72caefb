// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "avsv/eval.hpp"
#include "avsv/model.hpp"

namespace avsv {

// --- Adam with decoupled weight decay ---

struct AdamState {
    std::map<std::string, Matrix> m;  // first moments
    std::map<std::string, Matrix> v;  // second moments
    int t = 0;
};

// p <- p - lr*wd*p (decoupled decay), then the standard bias-corrected
// Adam update. t is incremented once per call.
inline void adam_step(ParamMap& params, const ParamMap& grads, AdamState& state, double lr,
                      double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
                      double eps = 1e-8) {
    state.t += 1;
    double bc1 = 1.0 - std::pow(beta1, state.t);
    double bc2 = 1.0 - std::pow(beta2, state.t);
    for (auto& [name, p] : params) {
        auto git = grads.find(name);
        if (git == grads.end()) throw ContractError("adam_step: missing gradient for " + name);
        const Matrix& g = git->second;
        if (!p.same_shape(g))
            throw ContractError("adam_step: gradient shape " + g.shape() + " != parameter " +
                                p.shape() + " for " + name);
        Matrix& m = state.m.try_emplace(name, Matrix::zeros(p.rows(), p.cols())).first->second;
        Matrix& v = state.v.try_emplace(name, Matrix::zeros(p.rows(), p.cols())).first->second;
        for (size_t i = 0; i < p.size(); ++i) {
            p[i] -= lr * weight_decay * p[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            double m_hat = m[i] / bc1;
            double v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

// Inverted dropout: surviving entries scaled by 1/(1-p).
inline Matrix dropout_mask(int rows, int cols, double p, Rng& rng) {
    Matrix m(rows, cols);
    double keep_scale = 1.0 / (1.0 - p);
    for (size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform() < p ? 0.0 : keep_scale;
    return m;
}

// --- training loop ---

struct EpochStats {
    int epoch = 0;
    double loss = 0.0;
    double val_eer = 0.0;
};

struct FitResult {
    ModelCheckpoint best;
    std::vector<EpochStats> history;
};

namespace train_detail {

struct Sample {
    const UtteranceFeatures* audio;
    const UtteranceFeatures* visual;
    int label;  // speaker class index
};

inline std::map<std::string, std::string> config_snapshot(const TrainConfig& cfg) {
    auto fmt = [](double x) {
        std::ostringstream os;
        os.precision(17);
        os << x;
        return os.str();
    };
    std::map<std::string, std::string> snap;
    snap["mode"] = mode_name(cfg.mode);
    snap["lr"] = fmt(cfg.lr);
    snap["batch"] = std::to_string(cfg.batch);
    snap["epochs"] = std::to_string(cfg.epochs);
    snap["patience"] = std::to_string(cfg.patience);
    snap["dropout"] = fmt(cfg.dropout);
    snap["wd"] = fmt(cfg.wd);
    snap["s"] = fmt(cfg.aam_s);
    snap["m"] = fmt(cfg.aam_m);
    snap["seed"] = std::to_string(cfg.seed);
    snap["L"] = std::to_string(cfg.L);
    snap["d_h"] = std::to_string(cfg.d_h);
    snap["embed_dim"] = std::to_string(cfg.embed_dim);
    snap["fusion_weight"] = fmt(cfg.fusion_weight);
    return snap;
}

}  // namespace train_detail

// Trains the configured fusion stack on aligned audio/visual records.
// Per epoch: seeded shuffle, mini-batch forward + AAM loss, backward,
// Adam; validation EER on the supplied trials drives early stopping
// (lowest validation EER wins, stop after `patience` epochs without
// improvement). Deterministic for a fixed config and inputs.
inline FitResult fit(std::span<const UtteranceFeatures> audio,
                     std::span<const UtteranceFeatures> visual, std::span<const Trial> val_trials,
                     const TrainConfig& cfg) {
    cfg.validate();
    if (audio.empty()) throw ContractError("fit: no training records");
    std::map<std::string, const UtteranceFeatures*> visual_by_id;
    for (const auto& v : visual) visual_by_id[v.id] = &v;

    // Speaker classes in sorted order.
    std::set<std::string> speakers;
    for (const auto& a : audio) speakers.insert(a.speaker);
    if (speakers.size() < 2)
        throw ContractError("fit: need at least 2 speakers, got " +
                            std::to_string(speakers.size()));
    std::map<std::string, int> class_of;
    for (const auto& s : speakers) class_of[s] = static_cast<int>(class_of.size());

    int d_a = audio.front().d();
    int d_v = 0;
    std::vector<train_detail::Sample> samples;
    for (const auto& a : audio) {
        auto it = visual_by_id.find(a.id);
        if (it == visual_by_id.end())
            throw ContractError("fit: no visual record for utterance " + a.id);
        if (a.d() != d_a) throw ContractError("fit: inconsistent audio dim in record " + a.id);
        if (d_v == 0)
            d_v = it->second->d();
        else if (it->second->d() != d_v)
            throw ContractError("fit: inconsistent visual dim in record " + a.id);
        if (a.L() != it->second->L())
            throw ContractError("fit: audio/visual segment count mismatch for " + a.id);
        samples.push_back({&a, it->second, class_of.at(a.speaker)});
    }

    int n_classes = static_cast<int>(speakers.size());
    ParamMap params = init_parameters(cfg.mode, d_a, d_v, cfg.d_h, cfg.embed_dim, n_classes,
                                      cfg.seed);

    auto snapshot = [&](int epoch, double eer) {
        ModelCheckpoint ckpt;
        ckpt.mode = cfg.mode;
        ckpt.tensors = params;
        ckpt.config = train_detail::config_snapshot(cfg);
        ckpt.config["d_a"] = std::to_string(d_a);
        ckpt.config["d_v"] = std::to_string(d_v);
        ckpt.config["n_classes"] = std::to_string(n_classes);
        ckpt.config["best_epoch"] = std::to_string(epoch);
        {
            std::ostringstream os;
            os.precision(17);
            os << eer;
            ckpt.config["val_eer"] = os.str();
        }
        ckpt.epoch = epoch;
        ckpt.val_eer = eer;
        return ckpt;
    };

    FitResult result;
    result.best = snapshot(0, 1.0);
    if (cfg.epochs == 0) return result;

    AdamState adam;
    Rng rng(cfg.seed ^ 0x5eed5eed5eed5eedULL);  // shuffle + dropout stream
    std::vector<size_t> order(samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    double best_eer = 2.0;  // above any valid EER
    int epochs_since_improvement = 0;
    const int d_fused = d_a + d_v;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        // Fisher-Yates with the portable stream.
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.below(i)]);

        double epoch_loss = 0.0;
        int n_batches = 0;
        for (size_t start = 0; start < order.size(); start += cfg.batch) {
            size_t end = std::min(order.size(), start + cfg.batch);
            Graph g;
            auto p = model_detail::register_params(g, params);
            std::vector<Graph::NodeId> embeddings;
            std::vector<int> labels;
            Graph::NodeId loss;
            if (cfg.mode == FusionMode::Score) {
                std::vector<Graph::NodeId> emb_a, emb_v;
                for (size_t i = start; i < end; ++i) {
                    const auto& s = samples[order[i]];
                    int L = s.audio->L();
                    Graph::NodeId mask_a = -1, mask_v = -1;
                    if (cfg.dropout > 0.0) {
                        mask_a = g.input(dropout_mask(d_a, L, cfg.dropout, rng));
                        mask_v = g.input(dropout_mask(d_v, L, cfg.dropout, rng));
                    }
                    emb_a.push_back(forward_unimodal_embedding(g, p, "a.",
                                                               g.input(s.audio->values), mask_a));
                    emb_v.push_back(forward_unimodal_embedding(g, p, "v.",
                                                               g.input(s.visual->values), mask_v));
                    labels.push_back(s.label);
                }
                Graph::NodeId loss_a =
                    aam_softmax_loss(g, emb_a, labels, p.at("a.head.cls"), cfg.aam_m, cfg.aam_s);
                Graph::NodeId loss_v =
                    aam_softmax_loss(g, emb_v, labels, p.at("v.head.cls"), cfg.aam_m, cfg.aam_s);
                loss = g.add(loss_a, loss_v);
            } else {
                for (size_t i = start; i < end; ++i) {
                    const auto& s = samples[order[i]];
                    int L = s.audio->L();
                    Graph::NodeId mask = -1;
                    if (cfg.dropout > 0.0)
                        mask = g.input(dropout_mask(d_fused, L, cfg.dropout, rng));
                    embeddings.push_back(forward_fused_embedding(
                        g, p, cfg.mode, g.input(s.audio->values), g.input(s.visual->values), mask));
                    labels.push_back(s.label);
                }
                loss = aam_softmax_loss(g, embeddings, labels, p.at("head.cls"), cfg.aam_m,
                                        cfg.aam_s);
            }
            epoch_loss += g.value(loss).at(0, 0);
            ++n_batches;
            auto grads = g.backward(loss);
            adam_step(params, grads, adam, cfg.lr, cfg.wd);
        }
        epoch_loss /= n_batches;

        ModelCheckpoint current = snapshot(epoch, 0.0);
        double val_eer =
            val_trials.empty()
                ? 0.0
                : evaluate_pipeline(current, audio, visual, val_trials, cfg.fusion_weight).eer;
        result.history.push_back({epoch, epoch_loss, val_eer});

        if (val_eer < best_eer) {
            best_eer = val_eer;
            result.best = snapshot(epoch, val_eer);
            epochs_since_improvement = 0;
        } else {
            ++epochs_since_improvement;
            if (epochs_since_improvement >= cfg.patience) break;
        }
    }
    return result;
}

}  // namespace avsv
