// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "avsv/errors.hpp"
#include "avsv/matrix.hpp"

namespace avsv {

// Define-by-run reverse-mode tape over dense matrices. A Graph is built
// fresh per forward pass; insertion order is topological order. Node
// values are immutable once produced.
class Graph {
public:
    using NodeId = int;

    // --- leaves ---

    NodeId input(Matrix value) { return push(std::move(value), {}, nullptr); }

    NodeId parameter(Matrix value, std::string name) {
        NodeId id = push(std::move(value), {}, nullptr);
        nodes_[id].name = std::move(name);
        nodes_[id].is_param = true;
        params_.push_back(id);
        return id;
    }

    const Matrix& value(NodeId id) const { return nodes_[id].value; }

    // --- ops ---

    NodeId matmul(NodeId a, NodeId b) {
        Matrix c = avsv::matmul(value(a), value(b));
        return push(std::move(c), {a, b}, [](Graph& g, NodeId id) {
            const Matrix& dc = g.grad_[id];
            NodeId a = g.nodes_[id].inputs[0], b = g.nodes_[id].inputs[1];
            add_inplace(g.grad_[a], avsv::matmul(dc, transpose(g.value(b))));
            add_inplace(g.grad_[b], avsv::matmul(transpose(g.value(a)), dc));
        });
    }

    NodeId add(NodeId a, NodeId b) {
        Matrix c = avsv::add(value(a), value(b));
        return push(std::move(c), {a, b}, [](Graph& g, NodeId id) {
            add_inplace(g.grad_[g.nodes_[id].inputs[0]], g.grad_[id]);
            add_inplace(g.grad_[g.nodes_[id].inputs[1]], g.grad_[id]);
        });
    }

    NodeId scale(NodeId a, double s) {
        if (!std::isfinite(s)) throw ContractError("scale factor must be finite");
        Matrix c = avsv::scale(value(a), s);
        return push(std::move(c), {a}, [s](Graph& g, NodeId id) {
            add_inplace(g.grad_[g.nodes_[id].inputs[0]], avsv::scale(g.grad_[id], s));
        });
    }

    NodeId hadamard(NodeId a, NodeId b) {
        Matrix c = avsv::hadamard(value(a), value(b));
        return push(std::move(c), {a, b}, [](Graph& g, NodeId id) {
            const Matrix& dc = g.grad_[id];
            NodeId a = g.nodes_[id].inputs[0], b = g.nodes_[id].inputs[1];
            add_inplace(g.grad_[a], avsv::hadamard(dc, g.value(b)));
            add_inplace(g.grad_[b], avsv::hadamard(dc, g.value(a)));
        });
    }

    NodeId tanh_op(NodeId a) {
        Matrix c = value(a);
        for (size_t i = 0; i < c.size(); ++i) c[i] = std::tanh(c[i]);
        return push(std::move(c), {a}, [](Graph& g, NodeId id) {
            const Matrix& y = g.value(id);
            const Matrix& dy = g.grad_[id];
            Matrix& dx = g.grad_[g.nodes_[id].inputs[0]];
            for (size_t i = 0; i < y.size(); ++i) dx[i] += dy[i] * (1.0 - y[i] * y[i]);
        });
    }

    // relu'(0) = 0.
    NodeId relu(NodeId a) {
        Matrix c = value(a);
        for (size_t i = 0; i < c.size(); ++i) c[i] = c[i] > 0.0 ? c[i] : 0.0;
        return push(std::move(c), {a}, [](Graph& g, NodeId id) {
            const Matrix& x = g.value(g.nodes_[id].inputs[0]);
            const Matrix& dy = g.grad_[id];
            Matrix& dx = g.grad_[g.nodes_[id].inputs[0]];
            for (size_t i = 0; i < x.size(); ++i)
                if (x[i] > 0.0) dx[i] += dy[i];
        });
    }

    NodeId sigmoid(NodeId a) {
        Matrix c = value(a);
        for (size_t i = 0; i < c.size(); ++i) c[i] = 1.0 / (1.0 + std::exp(-c[i]));
        return push(std::move(c), {a}, [](Graph& g, NodeId id) {
            const Matrix& y = g.value(id);
            const Matrix& dy = g.grad_[id];
            Matrix& dx = g.grad_[g.nodes_[id].inputs[0]];
            for (size_t i = 0; i < y.size(); ++i) dx[i] += dy[i] * y[i] * (1.0 - y[i]);
        });
    }

    NodeId transpose_op(NodeId a) {
        Matrix c = avsv::transpose(value(a));
        return push(std::move(c), {a}, [](Graph& g, NodeId id) {
            add_inplace(g.grad_[g.nodes_[id].inputs[0]], avsv::transpose(g.grad_[id]));
        });
    }

    NodeId concat_rows(NodeId top, NodeId bottom) {
        const Matrix& t = value(top);
        const Matrix& b = value(bottom);
        if (t.cols() != b.cols())
            throw DimensionError("concat_rows column mismatch: " + t.shape() + " vs " + b.shape());
        Matrix c(t.rows() + b.rows(), t.cols());
        for (int i = 0; i < t.rows(); ++i)
            for (int j = 0; j < t.cols(); ++j) c.at(i, j) = t.at(i, j);
        for (int i = 0; i < b.rows(); ++i)
            for (int j = 0; j < b.cols(); ++j) c.at(t.rows() + i, j) = b.at(i, j);
        return push(std::move(c), {top, bottom}, [](Graph& g, NodeId id) {
            const Matrix& dc = g.grad_[id];
            NodeId top = g.nodes_[id].inputs[0], bottom = g.nodes_[id].inputs[1];
            Matrix& dt = g.grad_[top];
            Matrix& db = g.grad_[bottom];
            int tr = dt.rows();
            for (int i = 0; i < dt.rows(); ++i)
                for (int j = 0; j < dc.cols(); ++j) dt.at(i, j) += dc.at(i, j);
            for (int i = 0; i < db.rows(); ++i)
                for (int j = 0; j < dc.cols(); ++j) db.at(i, j) += dc.at(tr + i, j);
        });
    }

    NodeId slice_col(NodeId a, int j) {
        const Matrix& x = value(a);
        if (j < 0 || j >= x.cols())
            throw ContractError("slice_col index " + std::to_string(j) + " out of range for " +
                                x.shape());
        Matrix c(x.rows(), 1);
        for (int i = 0; i < x.rows(); ++i) c.at(i, 0) = x.at(i, j);
        return push(std::move(c), {a}, [j](Graph& g, NodeId id) {
            const Matrix& dy = g.grad_[id];
            Matrix& dx = g.grad_[g.nodes_[id].inputs[0]];
            for (int i = 0; i < dy.rows(); ++i) dx.at(i, j) += dy.at(i, 0);
        });
    }

    NodeId concat_cols(std::span<const NodeId> cols) {
        if (cols.empty()) throw ContractError("concat_cols needs at least one column");
        int rows = value(cols[0]).rows();
        int total = 0;
        for (NodeId c : cols) {
            if (value(c).rows() != rows)
                throw DimensionError("concat_cols row mismatch");
            total += value(c).cols();
        }
        Matrix out(rows, total);
        int off = 0;
        std::vector<NodeId> ins(cols.begin(), cols.end());
        for (NodeId c : cols) {
            const Matrix& v = value(c);
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < v.cols(); ++j) out.at(i, off + j) = v.at(i, j);
            off += v.cols();
        }
        return push(std::move(out), std::move(ins), [](Graph& g, NodeId id) {
            const Matrix& dc = g.grad_[id];
            int off = 0;
            for (NodeId in : g.nodes_[id].inputs) {
                Matrix& di = g.grad_[in];
                for (int i = 0; i < di.rows(); ++i)
                    for (int j = 0; j < di.cols(); ++j) di.at(i, j) += dc.at(i, off + j);
                off += di.cols();
            }
        });
    }

    // M (r x c) + column vector v (r x 1) broadcast across columns.
    NodeId add_colvec(NodeId m, NodeId v) {
        const Matrix& mm = value(m);
        const Matrix& vv = value(v);
        if (vv.cols() != 1 || vv.rows() != mm.rows())
            throw DimensionError("add_colvec shape mismatch: " + mm.shape() + " + " + vv.shape());
        Matrix c = mm;
        for (int i = 0; i < c.rows(); ++i)
            for (int j = 0; j < c.cols(); ++j) c.at(i, j) += vv.at(i, 0);
        return push(std::move(c), {m, v}, [](Graph& g, NodeId id) {
            const Matrix& dc = g.grad_[id];
            Matrix& dm = g.grad_[g.nodes_[id].inputs[0]];
            Matrix& dv = g.grad_[g.nodes_[id].inputs[1]];
            add_inplace(dm, dc);
            for (int i = 0; i < dc.rows(); ++i)
                for (int j = 0; j < dc.cols(); ++j) dv.at(i, 0) += dc.at(i, j);
        });
    }

    // M + scalar node (1x1) broadcast.
    NodeId add_scalar(NodeId m, NodeId s) {
        const Matrix& ss = value(s);
        if (ss.rows() != 1 || ss.cols() != 1)
            throw DimensionError("add_scalar second operand must be 1x1, got " + ss.shape());
        Matrix c = value(m);
        double k = ss.at(0, 0);
        for (size_t i = 0; i < c.size(); ++i) c[i] += k;
        return push(std::move(c), {m, s}, [](Graph& g, NodeId id) {
            const Matrix& dc = g.grad_[id];
            Matrix& dm = g.grad_[g.nodes_[id].inputs[0]];
            Matrix& ds = g.grad_[g.nodes_[id].inputs[1]];
            add_inplace(dm, dc);
            for (size_t i = 0; i < dc.size(); ++i) ds[0] += dc[i];
        });
    }

    // Softmax over a 1xL row.
    NodeId softmax_row(NodeId a) {
        const Matrix& x = value(a);
        if (x.rows() != 1) throw DimensionError("softmax_row needs a 1xL row, got " + x.shape());
        Matrix y = x;
        double mx = y[0];
        for (size_t i = 0; i < y.size(); ++i) mx = std::max(mx, y[i]);
        double z = 0.0;
        for (size_t i = 0; i < y.size(); ++i) {
            y[i] = std::exp(y[i] - mx);
            z += y[i];
        }
        for (size_t i = 0; i < y.size(); ++i) y[i] /= z;
        return push(std::move(y), {a}, [](Graph& g, NodeId id) {
            const Matrix& y = g.value(id);
            const Matrix& dy = g.grad_[id];
            Matrix& dx = g.grad_[g.nodes_[id].inputs[0]];
            double dot = 0.0;
            for (size_t i = 0; i < y.size(); ++i) dot += dy[i] * y[i];
            for (size_t i = 0; i < y.size(); ++i) dx[i] += y[i] * (dy[i] - dot);
        });
    }

    // sqrt(max(x, eps)) entrywise; zero gradient on the clamped branch.
    NodeId sqrt_clamp(NodeId a, double eps) {
        const Matrix& x = value(a);
        Matrix y = x;
        for (size_t i = 0; i < y.size(); ++i) y[i] = std::sqrt(std::max(y[i], eps));
        return push(std::move(y), {a}, [eps](Graph& g, NodeId id) {
            const Matrix& x = g.value(g.nodes_[id].inputs[0]);
            const Matrix& y = g.value(id);
            const Matrix& dy = g.grad_[id];
            Matrix& dx = g.grad_[g.nodes_[id].inputs[0]];
            for (size_t i = 0; i < x.size(); ++i)
                if (x[i] > eps) dx[i] += dy[i] * 0.5 / y[i];
        });
    }

    // Sum of all entries -> 1x1.
    NodeId sum(NodeId a) {
        const Matrix& x = value(a);
        double s = 0.0;
        for (size_t i = 0; i < x.size(); ++i) s += x[i];
        Matrix y(1, 1);
        y[0] = s;
        return push(std::move(y), {a}, [](Graph& g, NodeId id) {
            double dy = g.grad_[id][0];
            Matrix& dx = g.grad_[g.nodes_[id].inputs[0]];
            for (size_t i = 0; i < dx.size(); ++i) dx[i] += dy;
        });
    }

    // Whole matrix treated as a vector, scaled to unit L2 norm.
    NodeId l2_normalize(NodeId a) {
        const Matrix& x = value(a);
        double n2 = 0.0;
        for (size_t i = 0; i < x.size(); ++i) n2 += x[i] * x[i];
        double n = std::sqrt(n2);
        if (n <= 1e-12) throw ContractError("l2_normalize: zero-norm input");
        Matrix y = avsv::scale(x, 1.0 / n);
        return push(std::move(y), {a}, [n](Graph& g, NodeId id) {
            const Matrix& x = g.value(g.nodes_[id].inputs[0]);
            const Matrix& dy = g.grad_[id];
            Matrix& dx = g.grad_[g.nodes_[id].inputs[0]];
            double dot = 0.0;
            for (size_t i = 0; i < x.size(); ++i) dot += x[i] * dy[i];
            double n3 = n * n * n;
            for (size_t i = 0; i < x.size(); ++i) dx[i] += dy[i] / n - x[i] * dot / n3;
        });
    }

    // Each row scaled to unit L2 norm.
    NodeId normalize_rows(NodeId a) {
        const Matrix& x = value(a);
        Matrix y = x;
        std::vector<double> norms(x.rows());
        for (int i = 0; i < x.rows(); ++i) {
            double n2 = 0.0;
            for (int j = 0; j < x.cols(); ++j) n2 += x.at(i, j) * x.at(i, j);
            norms[i] = std::sqrt(n2);
            if (norms[i] <= 1e-12)
                throw ContractError("normalize_rows: zero-norm row " + std::to_string(i));
            for (int j = 0; j < x.cols(); ++j) y.at(i, j) /= norms[i];
        }
        return push(std::move(y), {a}, [norms](Graph& g, NodeId id) {
            const Matrix& x = g.value(g.nodes_[id].inputs[0]);
            const Matrix& dy = g.grad_[id];
            Matrix& dx = g.grad_[g.nodes_[id].inputs[0]];
            for (int i = 0; i < x.rows(); ++i) {
                double n = norms[i];
                double dot = 0.0;
                for (int j = 0; j < x.cols(); ++j) dot += x.at(i, j) * dy.at(i, j);
                double n3 = n * n * n;
                for (int j = 0; j < x.cols(); ++j)
                    dx.at(i, j) += dy.at(i, j) / n - x.at(i, j) * dot / n3;
            }
        });
    }

    // Additive-angular-margin logits over a column of cosines (Nx1).
    // Target row gets s*cos(theta+m) via the stable expansion; the
    // fallback s*(c - m*sin m) applies when c <= cos(pi - m).
    NodeId aam_margin(NodeId cosines, int label, double margin, double s) {
        const Matrix& c = value(cosines);
        if (c.cols() != 1) throw DimensionError("aam_margin expects Nx1 cosines, got " + c.shape());
        if (label < 0 || label >= c.rows())
            throw ContractError("aam_margin label " + std::to_string(label) + " out of range");
        double cm = std::cos(margin), sm = std::sin(margin);
        Matrix y = c;
        double cy = c.at(label, 0);
        bool fallback = cy <= std::cos(M_PI - margin);
        for (int i = 0; i < c.rows(); ++i) y.at(i, 0) = s * c.at(i, 0);
        if (fallback) {
            y.at(label, 0) = s * (cy - margin * sm);
        } else {
            double sin_y = std::sqrt(std::max(1.0 - cy * cy, 1e-12));
            y.at(label, 0) = s * (cy * cm - sin_y * sm);
        }
        return push(std::move(y), {cosines},
                    [label, cm, sm, s, margin, fallback](Graph& g, NodeId id) {
            const Matrix& c = g.value(g.nodes_[id].inputs[0]);
            const Matrix& dy = g.grad_[id];
            Matrix& dc = g.grad_[g.nodes_[id].inputs[0]];
            for (int i = 0; i < c.rows(); ++i) {
                if (i == label) {
                    double cy = c.at(label, 0);
                    double d;
                    if (fallback) {
                        d = s;
                    } else {
                        double sin_y = std::sqrt(std::max(1.0 - cy * cy, 1e-12));
                        d = s * (cm + sm * cy / sin_y);
                    }
                    dc.at(i, 0) += d * dy.at(i, 0);
                } else {
                    dc.at(i, 0) += s * dy.at(i, 0);
                }
            }
            (void)margin;
        });
    }

    // Softmax cross-entropy of an Nx1 logit column against a class index -> 1x1.
    NodeId softmax_xent(NodeId logits, int label) {
        const Matrix& l = value(logits);
        if (l.cols() != 1) throw DimensionError("softmax_xent expects Nx1 logits, got " + l.shape());
        if (label < 0 || label >= l.rows())
            throw ContractError("softmax_xent label " + std::to_string(label) + " out of range");
        double mx = l[0];
        for (size_t i = 0; i < l.size(); ++i) mx = std::max(mx, l[i]);
        double z = 0.0;
        for (size_t i = 0; i < l.size(); ++i) z += std::exp(l[i] - mx);
        Matrix y(1, 1);
        y[0] = std::log(z) + mx - l.at(label, 0);
        return push(std::move(y), {logits}, [label, mx, z](Graph& g, NodeId id) {
            const Matrix& l = g.value(g.nodes_[id].inputs[0]);
            double dloss = g.grad_[id][0];
            Matrix& dl = g.grad_[g.nodes_[id].inputs[0]];
            for (int i = 0; i < l.rows(); ++i) {
                double p = std::exp(l.at(i, 0) - mx) / z;
                dl.at(i, 0) += dloss * (p - (i == label ? 1.0 : 0.0));
            }
        });
    }

    // Escape hatch for custom elementwise-style ops (used by tests).
    // dfn(x, y, dy) -> dx.
    NodeId unary_custom(NodeId a, const std::function<Matrix(const Matrix&)>& fn,
                        std::function<Matrix(const Matrix&, const Matrix&, const Matrix&)> dfn) {
        Matrix y = fn(value(a));
        return push(std::move(y), {a}, [dfn = std::move(dfn)](Graph& g, NodeId id) {
            NodeId a = g.nodes_[id].inputs[0];
            add_inplace(g.grad_[a], dfn(g.value(a), g.value(id), g.grad_[id]));
        });
    }

    // --- backward ---

    // Reverse sweep from a scalar loss. Returns gradients for every
    // registered parameter node, keyed by name; parameters the loss does
    // not depend on get zero matrices.
    std::map<std::string, Matrix> backward(NodeId loss) {
        const Matrix& lv = value(loss);
        if (lv.rows() != 1 || lv.cols() != 1)
            throw ContractError("backward: loss must be scalar (1x1), got " + lv.shape());
        grad_.clear();
        grad_.reserve(nodes_.size());
        for (const auto& n : nodes_) grad_.push_back(Matrix::zeros(n.value.rows(), n.value.cols()));
        grad_[loss][0] = 1.0;
        for (NodeId id = loss; id >= 0; --id) {
            if (nodes_[id].backprop) nodes_[id].backprop(*this, id);
        }
        std::map<std::string, Matrix> out;
        for (NodeId p : params_) out[nodes_[p].name] = grad_[p];
        return out;
    }

    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        std::vector<NodeId> inputs;
        std::function<void(Graph&, NodeId)> backprop;
        std::string name;
        bool is_param = false;
    };

    NodeId push(Matrix value, std::vector<NodeId> inputs,
                std::function<void(Graph&, NodeId)> backprop) {
        nodes_.push_back(Node{std::move(value), std::move(inputs), std::move(backprop), {}, false});
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    std::vector<Node> nodes_;
    std::vector<Matrix> grad_;
    std::vector<NodeId> params_;
};

// --- gradient checking ---

struct GradientReport {
    std::map<std::string, double> max_rel_err;  // per parameter tensor
    double tolerance = 0.0;
    double worst = 0.0;
    bool pass = false;
};

using ParamMap = std::map<std::string, Matrix>;
// Builder receives a graph with parameter nodes pre-registered and must
// return a scalar loss node.
using LossBuilder = std::function<Graph::NodeId(Graph&, const std::map<std::string, Graph::NodeId>&)>;

namespace detail {
inline double eval_loss(const ParamMap& params, const LossBuilder& build) {
    Graph g;
    std::map<std::string, Graph::NodeId> ids;
    for (const auto& [name, m] : params) ids[name] = g.parameter(m, name);
    Graph::NodeId loss = build(g, ids);
    return g.value(loss).at(0, 0);
}
}  // namespace detail

// Central differences with step h per scalar entry; relative error
// |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
inline GradientReport check_gradients(const ParamMap& params, const LossBuilder& build,
                                      double tolerance, double h = 1e-5) {
    GradientReport report;
    report.tolerance = tolerance;

    Graph g;
    std::map<std::string, Graph::NodeId> ids;
    for (const auto& [name, m] : params) ids[name] = g.parameter(m, name);
    Graph::NodeId loss = build(g, ids);
    auto analytic = g.backward(loss);

    ParamMap work = params;
    for (auto& [name, m] : work) {
        double worst = 0.0;
        const Matrix& a = analytic.at(name);
        for (size_t i = 0; i < m.size(); ++i) {
            double orig = m[i];
            m[i] = orig + h;
            double up = detail::eval_loss(work, build);
            m[i] = orig - h;
            double down = detail::eval_loss(work, build);
            m[i] = orig;
            double numeric = (up - down) / (2.0 * h);
            double rel = std::fabs(a[i] - numeric) /
                         std::max(1e-8, std::fabs(a[i]) + std::fabs(numeric));
            worst = std::max(worst, rel);
        }
        report.max_rel_err[name] = worst;
        report.worst = std::max(report.worst, worst);
    }
    report.pass = report.worst < tolerance;
    return report;
}

}  // namespace avsv
