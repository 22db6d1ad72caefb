// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "avsv/graph.hpp"

namespace avsv {

// Attentive statistics pooling parameters: W (d_h x d), b (d_h x 1),
// v (d_h x 1), k (1 x 1).
struct AspNodes {
    Graph::NodeId W, b, v, k;
};

// e_l = v^T tanh(W x_l + b) + k, alpha = softmax(e),
// mu = sum alpha_l x_l, sigma = sqrt(max(sum alpha_l x_l^2 - mu^2, eps)),
// output [mu; sigma] (2d x 1). eps = 1e-12.
inline Graph::NodeId attentive_stats_pool(Graph& g, Graph::NodeId x, const AspNodes& p) {
    const Matrix& xv = g.value(x);
    if (xv.cols() < 1) throw ContractError("attentive_stats_pool: L must be >= 1");
    Graph::NodeId hidden = g.tanh_op(g.add_colvec(g.matmul(p.W, x), p.b));
    // softmax(e + k) == softmax(e) exactly, so the scalar offset k is folded
    // out of the graph: same pooled output, and its gradient is exactly zero
    // instead of roundoff noise.
    Graph::NodeId logits = g.matmul(g.transpose_op(p.v), hidden);  // 1 x L
    Graph::NodeId alpha = g.softmax_row(logits);
    Graph::NodeId alpha_col = g.transpose_op(alpha);  // L x 1
    Graph::NodeId mean = g.matmul(x, alpha_col);      // d x 1
    Graph::NodeId second = g.matmul(g.hadamard(x, x), alpha_col);
    Graph::NodeId var = g.add(second, g.scale(g.hadamard(mean, mean), -1.0));
    Graph::NodeId stddev = g.sqrt_clamp(var, 1e-12);
    return g.concat_rows(mean, stddev);
}

// Linear projection to the embedding space, no activation.
inline Graph::NodeId embed(Graph& g, Graph::NodeId pooled, Graph::NodeId projection) {
    return g.matmul(projection, pooled);
}

// Mean AAM-softmax cross-entropy over a batch of embedding nodes (e x 1
// columns). class_weights is N_classes x e; rows and embeddings are
// L2-normalized before the cosine logits.
inline Graph::NodeId aam_softmax_loss(Graph& g, std::span<const Graph::NodeId> embeddings,
                                      std::span<const int> labels, Graph::NodeId class_weights,
                                      double margin, double s) {
    if (embeddings.empty()) throw ContractError("aam_softmax_loss: empty batch");
    if (embeddings.size() != labels.size())
        throw ContractError("aam_softmax_loss: batch/label size mismatch");
    if (s <= 0.0) throw ContractError("aam_softmax_loss: scale s must be positive");
    if (!(margin >= 0.0 && margin < M_PI / 2))
        throw ContractError("aam_softmax_loss: margin must be in [0, pi/2)");
    int n_classes = g.value(class_weights).rows();
    Graph::NodeId w_norm = g.normalize_rows(class_weights);
    Graph::NodeId total = g.input(Matrix::zeros(1, 1));
    for (size_t i = 0; i < embeddings.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= n_classes)
            throw ContractError("aam_softmax_loss: label " + std::to_string(labels[i]) +
                                " out of range");
        Graph::NodeId e_norm = g.l2_normalize(embeddings[i]);
        Graph::NodeId cosines = g.matmul(w_norm, e_norm);  // N x 1
        Graph::NodeId logits = g.aam_margin(cosines, labels[i], margin, s);
        total = g.add(total, g.softmax_xent(logits, labels[i]));
    }
    return g.scale(total, 1.0 / static_cast<double>(embeddings.size()));
}

// --- value-level scoring ---

struct Embedding {
    std::string id;
    std::vector<double> values;
};

inline double cosine_score(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw DimensionError("cosine_score: dim mismatch " + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()));
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (na <= 1e-12 || nb <= 1e-12) throw ContractError("cosine_score: zero-norm embedding");
    return dot / (na * nb);
}

inline double cosine_score(const Embedding& a, const Embedding& b) {
    return cosine_score(std::span<const double>(a.values), std::span<const double>(b.values));
}

}  // namespace avsv
