// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <utility>
#include <vector>

#include "avsv/graph.hpp"

namespace avsv {

// One LSTM direction: four gates (input, forget, cell, output), each with
// input weights W (h x d_in), recurrent weights U (h x h), bias b (h x 1).
struct LstmDirNodes {
    Graph::NodeId Wi, Ui, bi;
    Graph::NodeId Wf, Uf, bf;
    Graph::NodeId Wg, Ug, bg;
    Graph::NodeId Wo, Uo, bo;
};

struct BlstmNodes {
    LstmDirNodes fwd;
    LstmDirNodes bwd;
};

// Standard LSTM cell:
//   i = sig(Wi x + Ui h + bi)   f = sig(Wf x + Uf h + bf)
//   g = tanh(Wg x + Ug h + bg)  o = sig(Wo x + Uo h + bo)
//   c' = f.c + i.g              h' = o.tanh(c')
inline std::pair<Graph::NodeId, Graph::NodeId> lstm_step(Graph& g, Graph::NodeId x,
                                                         Graph::NodeId h, Graph::NodeId c,
                                                         const LstmDirNodes& p) {
    auto gate = [&](Graph::NodeId W, Graph::NodeId U, Graph::NodeId b) {
        return g.add(g.add(g.matmul(W, x), g.matmul(U, h)), b);
    };
    Graph::NodeId i = g.sigmoid(gate(p.Wi, p.Ui, p.bi));
    Graph::NodeId f = g.sigmoid(gate(p.Wf, p.Uf, p.bf));
    Graph::NodeId cand = g.tanh_op(gate(p.Wg, p.Ug, p.bg));
    Graph::NodeId o = g.sigmoid(gate(p.Wo, p.Uo, p.bo));
    Graph::NodeId c_new = g.add(g.hadamard(f, c), g.hadamard(i, cand));
    Graph::NodeId h_new = g.hadamard(o, g.tanh_op(c_new));
    return {h_new, c_new};
}

// Bidirectional LSTM over the columns of X (d x L) with residual add.
// Per-direction hidden size d/2 so [h_fwd; h_bwd] matches the input dim.
// Initial states are zero.
inline Graph::NodeId blstm_residual(Graph& g, Graph::NodeId x, const BlstmNodes& p) {
    const Matrix& xv = g.value(x);
    int d = xv.rows();
    int L = xv.cols();
    if (d % 2 != 0)
        throw ContractError("blstm_residual: input dim must be even, got " + std::to_string(d));
    int h_dim = d / 2;

    auto run_dir = [&](const LstmDirNodes& dir, bool reverse) {
        std::vector<Graph::NodeId> hs(L);
        Graph::NodeId h = g.input(Matrix::zeros(h_dim, 1));
        Graph::NodeId c = g.input(Matrix::zeros(h_dim, 1));
        for (int step = 0; step < L; ++step) {
            int l = reverse ? L - 1 - step : step;
            Graph::NodeId col = g.slice_col(x, l);
            auto [h2, c2] = lstm_step(g, col, h, c, dir);
            h = h2;
            c = c2;
            hs[l] = h;
        }
        return hs;
    };

    auto h_fwd = run_dir(p.fwd, false);
    auto h_bwd = run_dir(p.bwd, true);
    std::vector<Graph::NodeId> cols(L);
    for (int l = 0; l < L; ++l) cols[l] = g.concat_rows(h_fwd[l], h_bwd[l]);
    Graph::NodeId stacked = g.concat_cols(cols);
    return g.add(stacked, x);
}

}  // namespace avsv
