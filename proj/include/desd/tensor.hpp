#pragma once

// Minimal define-by-run reverse-mode autodiff over dense row-major f64
// matrices. Every operation evaluates eagerly, records its parents and a
// backprop closure, and validates that its output is finite (NaN/Inf is a
// hard error). Gradients flow only into subgraphs that reach a parameter
// leaf, so "this loss cannot touch those parameters" is a graph property.
//
// Shapes are 2-D throughout; batches are folded into rows (a batch of B
// per-vertex feature maps over N vertices is a [B*N, C] matrix).

#include <cstring>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include <desd/common.hpp>
#include <desd/hierarchy.hpp>
#include <desd/spiral.hpp>

namespace desd::nn {

struct Node {
    int rows = 0, cols = 0;
    std::vector<double> value;
    std::vector<double> grad; // allocated lazily during backward
    bool is_param = false;
    bool needs_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;

    size_t size() const { return value.size(); }
};

using NodeRef = std::shared_ptr<Node>;

inline std::vector<double>& grad_buf(Node& n) {
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    return n.grad;
}

inline void check_finite(const Node& n) {
    for (double x : n.value)
        if (!std::isfinite(x))
            throw NumericError(std::string("op '") + n.op + "' produced a non-finite value");
}

class Var {
public:
    Var() = default;
    explicit Var(NodeRef n) : n_(std::move(n)) {}

    static Var leaf(int rows, int cols, std::vector<double> data, bool requires_grad = false) {
        if (int64_t(rows) * cols != int64_t(data.size()))
            throw ContractError("leaf: shape [" + std::to_string(rows) + "," + std::to_string(cols) +
                                "] does not match data length " + std::to_string(data.size()));
        auto n = std::make_shared<Node>();
        n->rows = rows;
        n->cols = cols;
        n->value = std::move(data);
        n->is_param = requires_grad;
        n->needs_grad = requires_grad;
        check_finite(*n);
        return Var(n);
    }

    static Var zeros(int rows, int cols, bool requires_grad = false) {
        return leaf(rows, cols, std::vector<double>(size_t(rows) * cols, 0.0), requires_grad);
    }

    static Var scalar(double v) { return leaf(1, 1, {v}); }

    bool valid() const { return n_ != nullptr; }
    int rows() const { return n_->rows; }
    int cols() const { return n_->cols; }
    size_t size() const { return n_->size(); }
    const std::vector<double>& value() const { return n_->value; }
    std::vector<double>& mutable_value() { return n_->value; }
    const std::vector<double>& grad() const { return n_->grad; }
    bool has_grad() const { return !n_->grad.empty(); }
    bool needs_grad() const { return n_->needs_grad; }
    double item() const {
        if (n_->size() != 1) throw ContractError("item: tensor is not scalar");
        return n_->value[0];
    }
    NodeRef node() const { return n_; }

    void clear_grad() { n_->grad.clear(); }

    // Reverse pass from a scalar output. Gradients accumulate into every
    // parameter leaf reachable from this node.
    void backward() const {
        if (n_->size() != 1) throw ContractError("backward: output is not scalar");
        if (!n_->needs_grad) return;
        std::vector<Node*> order;
        topo_order(order);
        grad_buf(*n_)[0] = 1.0;
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node* nd = *it;
            if (nd->backprop && !nd->grad.empty()) nd->backprop(*nd);
        }
    }

    // True when `leaf` participates in this node's computation graph.
    bool depends_on(const Var& leaf) const {
        std::unordered_set<const Node*> seen;
        std::vector<const Node*> stack = {n_.get()};
        while (!stack.empty()) {
            const Node* nd = stack.back();
            stack.pop_back();
            if (nd == leaf.n_.get()) return true;
            if (!seen.insert(nd).second) continue;
            for (const auto& p : nd->parents) stack.push_back(p.get());
        }
        return false;
    }

private:
    void topo_order(std::vector<Node*>& order) const {
        // iterative post-order over needs_grad subgraph
        std::unordered_set<Node*> done;
        std::vector<std::pair<Node*, size_t>> stack;
        stack.push_back({n_.get(), 0});
        while (!stack.empty()) {
            auto& [nd, next] = stack.back();
            if (done.count(nd)) {
                stack.pop_back();
                continue;
            }
            bool descended = false;
            while (next < nd->parents.size()) {
                Node* p = nd->parents[next++].get();
                if (p->needs_grad && !done.count(p)) {
                    stack.push_back({p, 0});
                    descended = true;
                    break;
                }
            }
            if (descended) continue;
            done.insert(nd);
            order.push_back(nd);
            stack.pop_back();
        }
    }

    NodeRef n_;
};

namespace detail {

inline NodeRef make_op(const char* op, int rows, int cols, std::vector<NodeRef> parents) {
    auto n = std::make_shared<Node>();
    n->rows = rows;
    n->cols = cols;
    n->value.resize(size_t(rows) * cols);
    n->op = op;
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->needs_grad) n->needs_grad = true;
    return n;
}

// C[M,N] += or = A[M,K] * B[K,N]
inline void gemm(const double* a, int m, int k_dim, const double* b, int n, double* c,
                 bool accumulate) {
    for (int i = 0; i < m; ++i) {
        double* cr = c + size_t(i) * n;
        if (!accumulate) std::fill(cr, cr + n, 0.0);
        const double* ar = a + size_t(i) * k_dim;
        for (int k = 0; k < k_dim; ++k) {
            double av = ar[k];
            if (av == 0.0) continue;
            const double* br = b + size_t(k) * n;
            for (int j = 0; j < n; ++j) cr[j] += av * br[j];
        }
    }
}

// C[M,N] += A[K,M]^T * B[K,N]
inline void gemm_tn_add(const double* a, int k_dim, int m, const double* b, int n, double* c) {
    for (int k = 0; k < k_dim; ++k) {
        const double* ar = a + size_t(k) * m;
        const double* br = b + size_t(k) * n;
        for (int i = 0; i < m; ++i) {
            double av = ar[i];
            if (av == 0.0) continue;
            double* cr = c + size_t(i) * n;
            for (int j = 0; j < n; ++j) cr[j] += av * br[j];
        }
    }
}

// C[M,K] += A[M,N] * B[K,N]^T
inline void gemm_nt_add(const double* a, int m, int n, const double* b, int k_dim, double* c) {
    for (int i = 0; i < m; ++i) {
        const double* ar = a + size_t(i) * n;
        double* cr = c + size_t(i) * k_dim;
        for (int k = 0; k < k_dim; ++k) {
            const double* br = b + size_t(k) * n;
            double s = 0;
            for (int j = 0; j < n; ++j) s += ar[j] * br[j];
            cr[k] += s;
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and affine ops.

inline Var add(const Var& a, const Var& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ContractError("add: shape mismatch [" + std::to_string(a.rows()) + "," +
                            std::to_string(a.cols()) + "] vs [" + std::to_string(b.rows()) + "," +
                            std::to_string(b.cols()) + "]");
    auto n = detail::make_op("add", a.rows(), a.cols(), {a.node(), b.node()});
    for (size_t i = 0; i < n->size(); ++i) n->value[i] = a.value()[i] + b.value()[i];
    n->backprop = [](Node& self) {
        for (int p = 0; p < 2; ++p)
            if (self.parents[p]->needs_grad) {
                auto& g = grad_buf(*self.parents[p]);
                for (size_t i = 0; i < self.size(); ++i) g[i] += self.grad[i];
            }
    };
    check_finite(*n);
    return Var(n);
}

inline Var sub(const Var& a, const Var& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ContractError("sub: shape mismatch");
    auto n = detail::make_op("sub", a.rows(), a.cols(), {a.node(), b.node()});
    for (size_t i = 0; i < n->size(); ++i) n->value[i] = a.value()[i] - b.value()[i];
    n->backprop = [](Node& self) {
        if (self.parents[0]->needs_grad) {
            auto& g = grad_buf(*self.parents[0]);
            for (size_t i = 0; i < self.size(); ++i) g[i] += self.grad[i];
        }
        if (self.parents[1]->needs_grad) {
            auto& g = grad_buf(*self.parents[1]);
            for (size_t i = 0; i < self.size(); ++i) g[i] -= self.grad[i];
        }
    };
    check_finite(*n);
    return Var(n);
}

inline Var mul(const Var& a, const Var& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ContractError("mul: shape mismatch");
    auto n = detail::make_op("mul", a.rows(), a.cols(), {a.node(), b.node()});
    for (size_t i = 0; i < n->size(); ++i) n->value[i] = a.value()[i] * b.value()[i];
    n->backprop = [](Node& self) {
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        if (self.parents[0]->needs_grad) {
            auto& g = grad_buf(*self.parents[0]);
            for (size_t i = 0; i < self.size(); ++i) g[i] += self.grad[i] * bv[i];
        }
        if (self.parents[1]->needs_grad) {
            auto& g = grad_buf(*self.parents[1]);
            for (size_t i = 0; i < self.size(); ++i) g[i] += self.grad[i] * av[i];
        }
    };
    check_finite(*n);
    return Var(n);
}

inline Var scale(const Var& a, double s) {
    auto n = detail::make_op("scale", a.rows(), a.cols(), {a.node()});
    for (size_t i = 0; i < n->size(); ++i) n->value[i] = a.value()[i] * s;
    n->backprop = [s](Node& self) {
        if (!self.parents[0]->needs_grad) return;
        auto& g = grad_buf(*self.parents[0]);
        for (size_t i = 0; i < self.size(); ++i) g[i] += self.grad[i] * s;
    };
    check_finite(*n);
    return Var(n);
}

inline Var add_scalar(const Var& a, double s) {
    auto n = detail::make_op("add_scalar", a.rows(), a.cols(), {a.node()});
    for (size_t i = 0; i < n->size(); ++i) n->value[i] = a.value()[i] + s;
    n->backprop = [](Node& self) {
        if (!self.parents[0]->needs_grad) return;
        auto& g = grad_buf(*self.parents[0]);
        for (size_t i = 0; i < self.size(); ++i) g[i] += self.grad[i];
    };
    check_finite(*n);
    return Var(n);
}

// broadcast a [1,C] bias across the rows of a [R,C] matrix
inline Var add_rowvec(const Var& a, const Var& bias) {
    if (bias.rows() != 1 || bias.cols() != a.cols())
        throw ContractError("add_rowvec: bias shape [" + std::to_string(bias.rows()) + "," +
                            std::to_string(bias.cols()) + "] does not broadcast over [" +
                            std::to_string(a.rows()) + "," + std::to_string(a.cols()) + "]");
    auto n = detail::make_op("add_rowvec", a.rows(), a.cols(), {a.node(), bias.node()});
    const int c = a.cols();
    for (int r = 0; r < a.rows(); ++r)
        for (int j = 0; j < c; ++j)
            n->value[size_t(r) * c + j] = a.value()[size_t(r) * c + j] + bias.value()[j];
    n->backprop = [](Node& self) {
        const int c = self.cols;
        if (self.parents[0]->needs_grad) {
            auto& g = grad_buf(*self.parents[0]);
            for (size_t i = 0; i < self.size(); ++i) g[i] += self.grad[i];
        }
        if (self.parents[1]->needs_grad) {
            auto& g = grad_buf(*self.parents[1]);
            for (int r = 0; r < self.rows; ++r)
                for (int j = 0; j < c; ++j) g[j] += self.grad[size_t(r) * c + j];
        }
    };
    check_finite(*n);
    return Var(n);
}

inline Var matmul(const Var& a, const Var& b) {
    if (a.cols() != b.rows())
        throw ContractError("matmul: inner dimensions differ, [" + std::to_string(a.rows()) + "," +
                            std::to_string(a.cols()) + "] * [" + std::to_string(b.rows()) + "," +
                            std::to_string(b.cols()) + "]");
    auto n = detail::make_op("matmul", a.rows(), b.cols(), {a.node(), b.node()});
    detail::gemm(a.value().data(), a.rows(), a.cols(), b.value().data(), b.cols(), n->value.data(),
                 false);
    n->backprop = [](Node& self) {
        Node& a = *self.parents[0];
        Node& b = *self.parents[1];
        if (a.needs_grad)
            detail::gemm_nt_add(self.grad.data(), self.rows, self.cols, b.value.data(), b.rows,
                                grad_buf(a).data());
        if (b.needs_grad)
            detail::gemm_tn_add(a.value.data(), a.rows, a.cols, self.grad.data(), self.cols,
                                grad_buf(b).data());
    };
    check_finite(*n);
    return Var(n);
}

inline Var concat_cols(const Var& a, const Var& b) {
    if (a.rows() != b.rows()) throw ContractError("concat_cols: row counts differ");
    const int ca = a.cols(), cb = b.cols();
    auto n = detail::make_op("concat_cols", a.rows(), ca + cb, {a.node(), b.node()});
    for (int r = 0; r < a.rows(); ++r) {
        std::memcpy(&n->value[size_t(r) * (ca + cb)], &a.value()[size_t(r) * ca], ca * sizeof(double));
        std::memcpy(&n->value[size_t(r) * (ca + cb) + ca], &b.value()[size_t(r) * cb],
                    cb * sizeof(double));
    }
    n->backprop = [ca, cb](Node& self) {
        for (int r = 0; r < self.rows; ++r) {
            const double* g = &self.grad[size_t(r) * (ca + cb)];
            if (self.parents[0]->needs_grad) {
                auto& ga = grad_buf(*self.parents[0]);
                for (int j = 0; j < ca; ++j) ga[size_t(r) * ca + j] += g[j];
            }
            if (self.parents[1]->needs_grad) {
                auto& gb = grad_buf(*self.parents[1]);
                for (int j = 0; j < cb; ++j) gb[size_t(r) * cb + j] += g[ca + j];
            }
        }
    };
    return Var(n);
}

// stack equal-width rows of several [r_i, C] nodes into one matrix
inline Var stack_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ContractError("stack_rows: empty input");
    const int c = parts[0].cols();
    int rows = 0;
    std::vector<NodeRef> parents;
    for (const auto& p : parts) {
        if (p.cols() != c) throw ContractError("stack_rows: column widths differ");
        rows += p.rows();
        parents.push_back(p.node());
    }
    auto n = detail::make_op("stack_rows", rows, c, std::move(parents));
    size_t off = 0;
    for (const auto& p : parts) {
        std::memcpy(&n->value[off], p.value().data(), p.size() * sizeof(double));
        off += p.size();
    }
    n->backprop = [](Node& self) {
        size_t off = 0;
        for (auto& p : self.parents) {
            if (p->needs_grad) {
                auto& g = grad_buf(*p);
                for (size_t i = 0; i < p->value.size(); ++i) g[i] += self.grad[off + i];
            }
            off += p->value.size();
        }
    };
    return Var(n);
}

// free reshape (row-major layout is shared)
inline Var reshape(const Var& a, int rows, int cols) {
    if (int64_t(rows) * cols != int64_t(a.size()))
        throw ContractError("reshape: element count mismatch");
    auto n = detail::make_op("reshape", rows, cols, {a.node()});
    n->value = a.value();
    n->backprop = [](Node& self) {
        if (!self.parents[0]->needs_grad) return;
        auto& g = grad_buf(*self.parents[0]);
        for (size_t i = 0; i < self.size(); ++i) g[i] += self.grad[i];
    };
    return Var(n);
}

// ---------------------------------------------------------------------------
// Activations.

inline Var elu(const Var& a) {
    auto n = detail::make_op("elu", a.rows(), a.cols(), {a.node()});
    for (size_t i = 0; i < n->size(); ++i) {
        double x = a.value()[i];
        n->value[i] = x > 0 ? x : std::expm1(x);
    }
    n->backprop = [](Node& self) {
        if (!self.parents[0]->needs_grad) return;
        auto& g = grad_buf(*self.parents[0]);
        const auto& x = self.parents[0]->value;
        for (size_t i = 0; i < self.size(); ++i)
            g[i] += self.grad[i] * (x[i] > 0 ? 1.0 : std::exp(x[i]));
    };
    check_finite(*n);
    return Var(n);
}

inline Var sigmoid(const Var& a) {
    auto n = detail::make_op("sigmoid", a.rows(), a.cols(), {a.node()});
    for (size_t i = 0; i < n->size(); ++i) n->value[i] = 1.0 / (1.0 + std::exp(-a.value()[i]));
    n->backprop = [](Node& self) {
        if (!self.parents[0]->needs_grad) return;
        auto& g = grad_buf(*self.parents[0]);
        for (size_t i = 0; i < self.size(); ++i) {
            double y = self.value[i];
            g[i] += self.grad[i] * y * (1.0 - y);
        }
    };
    check_finite(*n);
    return Var(n);
}

inline Var tanh_op(const Var& a) {
    auto n = detail::make_op("tanh", a.rows(), a.cols(), {a.node()});
    for (size_t i = 0; i < n->size(); ++i) n->value[i] = std::tanh(a.value()[i]);
    n->backprop = [](Node& self) {
        if (!self.parents[0]->needs_grad) return;
        auto& g = grad_buf(*self.parents[0]);
        for (size_t i = 0; i < self.size(); ++i) {
            double y = self.value[i];
            g[i] += self.grad[i] * (1.0 - y * y);
        }
    };
    check_finite(*n);
    return Var(n);
}

// ---------------------------------------------------------------------------
// Mesh-structured ops. The table/map pointers must outlive the graph (they
// are owned by the model, graphs are per-step).

// x: [B*N, C] -> [B*N, L*C]; spiral slot-major, channel-minor; sentinel -> 0
inline Var gather_spiral(const Var& x, const SpiralTable& table) {
    if (x.rows() % table.vertex_count != 0)
        throw ContractError("gather_spiral: rows " + std::to_string(x.rows()) +
                            " not a multiple of vertex count " + std::to_string(table.vertex_count));
    const int n_verts = table.vertex_count;
    const int batch = x.rows() / n_verts;
    const int c = x.cols();
    const int l = table.spiral_length;
    auto n = detail::make_op("gather_spiral", x.rows(), l * c, {x.node()});
    const SpiralTable* tab = &table;
    for (int b = 0; b < batch; ++b)
        for (int v = 0; v < n_verts; ++v) {
            double* dst = &n->value[(size_t(b) * n_verts + v) * (l * c)];
            for (int s = 0; s < l; ++s) {
                int src = tab->at(v, s);
                if (src < 0)
                    std::fill(dst + s * c, dst + (s + 1) * c, 0.0);
                else
                    std::memcpy(dst + s * c, &x.value()[(size_t(b) * n_verts + src) * c],
                                c * sizeof(double));
            }
        }
    n->backprop = [tab, batch, n_verts, c, l](Node& self) {
        if (!self.parents[0]->needs_grad) return;
        auto& g = grad_buf(*self.parents[0]);
        for (int b = 0; b < batch; ++b)
            for (int v = 0; v < n_verts; ++v) {
                const double* src = &self.grad[(size_t(b) * n_verts + v) * (l * c)];
                for (int s = 0; s < l; ++s) {
                    int dst = tab->at(v, s);
                    if (dst < 0) continue;
                    double* gd = &g[(size_t(b) * n_verts + dst) * c];
                    for (int j = 0; j < c; ++j) gd[j] += src[s * c + j];
                }
            }
    };
    return Var(n);
}

// x: [B*Nin, C] -> [B*Nout, C] through a sparse row-stochastic map
inline Var sparse_apply(const Var& x, const SparseMat& m) {
    if (x.rows() % m.cols != 0)
        throw ContractError("sparse_apply: rows " + std::to_string(x.rows()) +
                            " not a multiple of map width " + std::to_string(m.cols));
    const int batch = x.rows() / m.cols;
    const int c = x.cols();
    auto n = detail::make_op("sparse_apply", batch * m.rows, c, {x.node()});
    const SparseMat* mp = &m;
    for (int b = 0; b < batch; ++b)
        mp->apply(&x.value()[size_t(b) * m.cols * c], c, &n->value[size_t(b) * m.rows * c]);
    n->backprop = [mp, batch, c](Node& self) {
        if (!self.parents[0]->needs_grad) return;
        auto& g = grad_buf(*self.parents[0]);
        for (int b = 0; b < batch; ++b)
            mp->apply_transposed_add(&self.grad[size_t(b) * mp->rows * c], c,
                                     &g[size_t(b) * mp->cols * c]);
    };
    check_finite(*n);
    return Var(n);
}

// ---------------------------------------------------------------------------
// Reductions and losses.

inline Var sum_all(const Var& a) {
    auto n = detail::make_op("sum", 1, 1, {a.node()});
    double s = 0;
    for (double x : a.value()) s += x;
    n->value[0] = s;
    n->backprop = [](Node& self) {
        if (!self.parents[0]->needs_grad) return;
        auto& g = grad_buf(*self.parents[0]);
        for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
    };
    check_finite(*n);
    return Var(n);
}

// Mean over rows of w_r * ||pred_r - target_r||_2. Weights may be empty
// (uniform 1) or one per row. The norm's subgradient at a zero residual is 0.
inline Var weighted_row_l2(const Var& pred, const Var& target, std::vector<double> row_weights = {}) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw ContractError("weighted_row_l2: shape mismatch [" + std::to_string(pred.rows()) + "," +
                            std::to_string(pred.cols()) + "] vs [" + std::to_string(target.rows()) +
                            "," + std::to_string(target.cols()) + "]");
    if (!row_weights.empty() && int(row_weights.size()) != pred.rows())
        throw ContractError("weighted_row_l2: weight count does not match rows");
    const int rows = pred.rows(), c = pred.cols();
    auto n = detail::make_op("weighted_row_l2", 1, 1, {pred.node(), target.node()});
    auto norms = std::make_shared<std::vector<double>>(rows);
    double acc = 0;
    for (int r = 0; r < rows; ++r) {
        double s = 0;
        for (int j = 0; j < c; ++j) {
            double d = pred.value()[size_t(r) * c + j] - target.value()[size_t(r) * c + j];
            s += d * d;
        }
        double nr = std::sqrt(s);
        (*norms)[r] = nr;
        acc += (row_weights.empty() ? 1.0 : row_weights[r]) * nr;
    }
    n->value[0] = acc / rows;
    auto w = std::make_shared<std::vector<double>>(std::move(row_weights));
    n->backprop = [norms, w, rows, c](Node& self) {
        double gscale = self.grad[0] / rows;
        const auto& pv = self.parents[0]->value;
        const auto& tv = self.parents[1]->value;
        for (int p = 0; p < 2; ++p) {
            if (!self.parents[p]->needs_grad) continue;
            auto& g = grad_buf(*self.parents[p]);
            double sign = p == 0 ? 1.0 : -1.0;
            for (int r = 0; r < rows; ++r) {
                double nr = (*norms)[r];
                if (nr == 0.0) continue; // subgradient choice at the kink
                double k = sign * gscale * (w->empty() ? 1.0 : (*w)[r]) / nr;
                for (int j = 0; j < c; ++j)
                    g[size_t(r) * c + j] += k * (pv[size_t(r) * c + j] - tv[size_t(r) * c + j]);
            }
        }
    };
    check_finite(*n);
    return Var(n);
}

// Mean cross-entropy of row-wise softmax against integer labels.
inline Var softmax_cross_entropy(const Var& logits, const std::vector<int>& labels) {
    if (int(labels.size()) != logits.rows())
        throw ContractError("softmax_cross_entropy: label count does not match rows");
    const int rows = logits.rows(), k = logits.cols();
    for (int lab : labels)
        if (lab < 0 || lab >= k) throw ContractError("softmax_cross_entropy: label out of range");
    auto n = detail::make_op("softmax_xent", 1, 1, {logits.node()});
    auto probs = std::make_shared<std::vector<double>>(size_t(rows) * k);
    double loss = 0;
    for (int r = 0; r < rows; ++r) {
        const double* lr = &logits.value()[size_t(r) * k];
        double m = lr[0];
        for (int j = 1; j < k; ++j) m = std::max(m, lr[j]);
        double z = 0;
        for (int j = 0; j < k; ++j) z += std::exp(lr[j] - m);
        for (int j = 0; j < k; ++j) (*probs)[size_t(r) * k + j] = std::exp(lr[j] - m) / z;
        loss -= std::log(std::max((*probs)[size_t(r) * k + labels[r]], 1e-300));
    }
    n->value[0] = loss / rows;
    auto labs = std::make_shared<std::vector<int>>(labels);
    n->backprop = [probs, labs, rows, k](Node& self) {
        if (!self.parents[0]->needs_grad) return;
        auto& g = grad_buf(*self.parents[0]);
        double gscale = self.grad[0] / rows;
        for (int r = 0; r < rows; ++r)
            for (int j = 0; j < k; ++j)
                g[size_t(r) * k + j] +=
                    gscale * ((*probs)[size_t(r) * k + j] - (j == (*labs)[r] ? 1.0 : 0.0));
    };
    check_finite(*n);
    return Var(n);
}

}  // namespace desd::nn
