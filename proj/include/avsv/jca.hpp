// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

#include "avsv/graph.hpp"
#include "avsv/matrix.hpp"

namespace avsv {

// Joint cross-attentional fusion. Weight shapes: W_jm is d_m x d,
// W_cm and W_hm are d_m x d_m, with d = d_a + d_v.
struct JcaNodes {
    Graph::NodeId W_ja, W_jv;  // d_a x d, d_v x d
    Graph::NodeId W_ca, W_cv;  // d_a x d_a, d_v x d_v
    Graph::NodeId W_ha, W_hv;  // d_a x d_a, d_v x d_v
};

// J = [X_a; X_v], audio rows first.
inline Graph::NodeId joint_representation(Graph& g, Graph::NodeId x_a, Graph::NodeId x_v) {
    if (g.value(x_a).cols() != g.value(x_v).cols())
        throw ContractError("joint_representation: segment count mismatch (" +
                            g.value(x_a).shape() + " vs " + g.value(x_v).shape() + ")");
    return g.concat_rows(x_a, x_v);
}

// C_m = tanh(X_m^T W_jm J / sqrt(d)).
inline Graph::NodeId joint_correlation(Graph& g, Graph::NodeId x_m, Graph::NodeId j,
                                       Graph::NodeId w_jm) {
    int d = g.value(j).rows();
    Graph::NodeId prod = g.matmul(g.matmul(g.transpose_op(x_m), w_jm), j);
    return g.tanh_op(g.scale(prod, 1.0 / std::sqrt(static_cast<double>(d))));
}

// H_m = ReLU(W_cm X_m C_m), entrywise nonnegative.
inline Graph::NodeId attention_maps(Graph& g, Graph::NodeId x_m, Graph::NodeId c_m,
                                    Graph::NodeId w_cm) {
    return g.relu(g.matmul(g.matmul(w_cm, x_m), c_m));
}

// X_att,m = W_hm H_m + X_m (residual).
inline Graph::NodeId attended_features(Graph& g, Graph::NodeId x_m, Graph::NodeId h_m,
                                       Graph::NodeId w_hm) {
    return g.add(g.matmul(w_hm, h_m), x_m);
}

// Full fusion: X_hat = [X_att,v ; X_att,a], visual-attended rows first.
inline Graph::NodeId jca_forward(Graph& g, Graph::NodeId x_a, Graph::NodeId x_v,
                                 const JcaNodes& w) {
    Graph::NodeId j = joint_representation(g, x_a, x_v);
    Graph::NodeId c_a = joint_correlation(g, x_a, j, w.W_ja);
    Graph::NodeId c_v = joint_correlation(g, x_v, j, w.W_jv);
    Graph::NodeId h_a = attention_maps(g, x_a, c_a, w.W_ca);
    Graph::NodeId h_v = attention_maps(g, x_v, c_v, w.W_cv);
    Graph::NodeId att_a = attended_features(g, x_a, h_a, w.W_ha);
    Graph::NodeId att_v = attended_features(g, x_v, h_v, w.W_hv);
    return g.concat_rows(att_v, att_a);
}

// Plain concatenation baseline (no attention stack).
inline Graph::NodeId early_fusion(Graph& g, Graph::NodeId x_a, Graph::NodeId x_v) {
    return joint_representation(g, x_a, x_v);
}

// Audio-guided reduction of a c x p spatial map to a single c-vector.
// Logits e = (W_s^T a)^T F / sqrt(c), alpha = softmax(e), out = F alpha.
// Forward-only: belongs to the (out-of-scope) backbone side of the pipeline.
inline Matrix spatial_reduce_visual(const Matrix& spatial, const Matrix& audio,
                                    const Matrix& w_s) {
    int c = spatial.rows();
    int p = spatial.cols();
    if (w_s.rows() != audio.rows() || w_s.cols() != c)
        throw DimensionError("spatial_reduce_visual: W_s " + w_s.shape() +
                             " incompatible with audio " + audio.shape() + " and map " +
                             spatial.shape());
    if (audio.cols() != 1) throw DimensionError("spatial_reduce_visual: audio must be a column");
    Matrix q = matmul(transpose(w_s), audio);  // c x 1
    std::vector<double> logits(p, 0.0);
    double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(c));
    for (int j = 0; j < p; ++j) {
        double e = 0.0;
        for (int i = 0; i < c; ++i) e += q.at(i, 0) * spatial.at(i, j);
        logits[j] = e * inv_sqrt_c;
    }
    double mx = logits[0];
    for (double e : logits) mx = std::max(mx, e);
    double z = 0.0;
    for (double& e : logits) {
        e = std::exp(e - mx);
        z += e;
    }
    Matrix out(c, 1);
    for (int j = 0; j < p; ++j) {
        double alpha = logits[j] / z;
        for (int i = 0; i < c; ++i) out.at(i, 0) += alpha * spatial.at(i, j);
    }
    return out;
}

// Decision-level fusion: w*s_a + (1-w)*s_v.
inline double score_fusion(double s_a, double s_v, double w) {
    if (!(w >= 0.0 && w <= 1.0))
        throw ContractError("score_fusion: weight must be in [0,1], got " + std::to_string(w));
    return w * s_a + (1.0 - w) * s_v;
}

}  // namespace avsv
