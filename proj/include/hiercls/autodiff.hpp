#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "hiercls/error.hpp"
#include "hiercls/tensor.hpp"

namespace hiercls {

class Tape;

/// Handle to a tensor recorded on a Tape. Cheap to copy; valid for the
/// lifetime of the owning tape.
class Var {
public:
    Var() = default;

    const Tensor& value() const;
    const Tensor& grad() const;
    Tape* tape() const { return tape_; }
    std::size_t index() const { return index_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* t, std::size_t i) : tape_(t), index_(i) {}

    Tape* tape_ = nullptr;
    std::size_t index_ = 0;
};

/// Define-by-run reverse-mode tape. Every op appends one node, so node order
/// is a topological order of the computation and backward() is a single
/// reverse sweep. Gradients accumulate; a tensor used twice receives both
/// contributions. Tapes are single-threaded and usually built fresh per
/// forward pass.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    std::size_t size() const { return nodes_.size(); }

    const Tensor& value(Var v) const { return node(v).value; }
    const Tensor& grad(Var v) const { return node(v).grad; }

    /// Record an input tensor (parameter or data).
    Var leaf(Tensor value) { return push(std::move(value)); }

    /// [m x n] * [n x p] -> [m x p].
    Var matmul(Var a, Var b) {
        const Tensor& A = value(a);
        const Tensor& B = value(b);
        require(A.rank() == 2 && B.rank() == 2,
                "matmul: operands must be matrices, got " + A.shape_str() +
                    " and " + B.shape_str());
        require(A.cols() == B.rows(), "matmul: inner dimensions disagree, " +
                                          A.shape_str() + " vs " + B.shape_str());
        const std::size_t m = A.rows(), n = A.cols(), p = B.cols();
        Tensor out({m, p});
        for (std::size_t i = 0; i < m; ++i) {
            const double* arow = &A.data[i * n];
            double* orow = &out.data[i * p];
            for (std::size_t k = 0; k < n; ++k) {
                const double aik = arow[k];
                if (aik == 0.0) continue;
                const double* brow = &B.data[k * p];
                for (std::size_t j = 0; j < p; ++j) orow[j] += aik * brow[j];
            }
        }
        Var o = push(std::move(out));
        set_backward(o, [oi = o.index(), ai = a.index(), bi = b.index(), m, n,
                         p](Tape& t) {
            const Tensor& g = t.nodes_[oi].grad;
            const Tensor& A = t.nodes_[ai].value;
            const Tensor& B = t.nodes_[bi].value;
            Tensor& Ag = t.nodes_[ai].grad;
            Tensor& Bg = t.nodes_[bi].grad;
            // Ag += g * B^T
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < p; ++j) {
                    const double gij = g.data[i * p + j];
                    if (gij == 0.0) continue;
                    for (std::size_t k = 0; k < n; ++k)
                        Ag.data[i * n + k] += gij * B.data[k * p + j];
                }
            // Bg += A^T * g
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t k = 0; k < n; ++k) {
                    const double aik = A.data[i * n + k];
                    if (aik == 0.0) continue;
                    for (std::size_t j = 0; j < p; ++j)
                        Bg.data[k * p + j] += aik * g.data[i * p + j];
                }
        });
        return o;
    }

    /// Row-broadcast add of a length-n bias to an [m x n] matrix.
    Var add_bias(Var x, Var b) {
        const Tensor& X = value(x);
        const Tensor& B = value(b);
        require(X.rank() == 2 && B.rank() == 1 && B.shape[0] == X.cols(),
                "add_bias: widths disagree, " + X.shape_str() + " vs " +
                    B.shape_str());
        Tensor out = X;
        const std::size_t m = X.rows(), n = X.cols();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] += B.data[j];
        Var o = push(std::move(out));
        set_backward(o, [oi = o.index(), xi = x.index(), bi = b.index(), m,
                         n](Tape& t) {
            const Tensor& g = t.nodes_[oi].grad;
            Tensor& Xg = t.nodes_[xi].grad;
            Tensor& Bg = t.nodes_[bi].grad;
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    Xg.data[i * n + j] += g.data[i * n + j];
                    Bg.data[j] += g.data[i * n + j];
                }
        });
        return o;
    }

    /// Elementwise max(0, x). Subgradient at exactly 0 is 0.
    Var relu(Var x) {
        const Tensor& X = value(x);
        Tensor out = X;
        for (double& v : out.data) v = v > 0.0 ? v : 0.0;
        Var o = push(std::move(out));
        set_backward(o, [oi = o.index(), xi = x.index()](Tape& t) {
            const Tensor& g = t.nodes_[oi].grad;
            const Tensor& X = t.nodes_[xi].value;
            Tensor& Xg = t.nodes_[xi].grad;
            for (std::size_t i = 0; i < X.size(); ++i)
                if (X.data[i] > 0.0) Xg.data[i] += g.data[i];
        });
        return o;
    }

    /// Split an [m x D] matrix into `parts` contiguous column blocks of equal
    /// width. D must be divisible by `parts`; uneven blocks are refused.
    std::vector<Var> split(Var x, std::size_t parts) {
        const Tensor& X = value(x);
        require(X.rank() == 2, "split: expected a matrix, got " + X.shape_str());
        require(parts >= 1, "split: parts must be >= 1");
        const std::size_t m = X.rows(), d = X.cols();
        require(d % parts == 0, "split: width " + std::to_string(d) +
                                    " is not divisible by " +
                                    std::to_string(parts) + " parts");
        const std::size_t w = d / parts;
        // Copy the blocks out before pushing: push() may reallocate the node
        // storage, invalidating X.
        std::vector<Tensor> blocks;
        blocks.reserve(parts);
        for (std::size_t s = 0; s < parts; ++s) {
            Tensor seg({m, w});
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < w; ++j)
                    seg.data[i * w + j] = X.data[i * d + s * w + j];
            blocks.push_back(std::move(seg));
        }
        std::vector<Var> out;
        out.reserve(parts);
        for (std::size_t s = 0; s < parts; ++s) {
            Var o = push(std::move(blocks[s]));
            set_backward(o, [oi = o.index(), xi = x.index(), m, d, w, s](Tape& t) {
                const Tensor& g = t.nodes_[oi].grad;
                Tensor& Xg = t.nodes_[xi].grad;
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < w; ++j)
                        Xg.data[i * d + s * w + j] += g.data[i * w + j];
            });
            out.push_back(o);
        }
        return out;
    }

    /// Column-wise concatenation of matrices with equal row counts.
    Var concat(const std::vector<Var>& parts) {
        require(!parts.empty(), "concat: no parts given");
        const std::size_t m = value(parts[0]).rows();
        std::size_t total = 0;
        for (Var p : parts) {
            const Tensor& P = value(p);
            require(P.rank() == 2 && P.rows() == m,
                    "concat: row counts disagree, " +
                        value(parts[0]).shape_str() + " vs " + P.shape_str());
            total += P.cols();
        }
        Tensor out({m, total});
        std::size_t off = 0;
        std::vector<std::pair<std::size_t, std::size_t>> layout; // (index, width)
        for (Var p : parts) {
            const Tensor& P = value(p);
            const std::size_t w = P.cols();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < w; ++j)
                    out.data[i * total + off + j] = P.data[i * w + j];
            layout.emplace_back(p.index(), w);
            off += w;
        }
        Var o = push(std::move(out));
        set_backward(o, [oi = o.index(), layout = std::move(layout), m,
                         total](Tape& t) {
            const Tensor& g = t.nodes_[oi].grad;
            std::size_t off = 0;
            for (auto [pi, w] : layout) {
                Tensor& Pg = t.nodes_[pi].grad;
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < w; ++j)
                        Pg.data[i * w + j] += g.data[i * total + off + j];
                off += w;
            }
        });
        return o;
    }

    /// Gradient gate: forward pass is the identity (bit-equal values), the
    /// backward pass contributes exactly zero to x. The node has no backward
    /// rule at all, so x's gradient slot is never touched from this branch.
    Var stop_gradient(Var x) {
        check_owned(x);
        return push(Tensor(value(x)));
    }

    /// Numerically stable softmax + NLL, averaged over rows. Backward is
    /// (softmax - onehot) / m.
    Var softmax_cross_entropy(Var logits, std::vector<int> targets) {
        const Tensor& Z = value(logits);
        require(Z.rank() == 2, "softmax_cross_entropy: logits must be a matrix");
        const std::size_t m = Z.rows(), c = Z.cols();
        require(m >= 1, "softmax_cross_entropy: empty batch");
        require(targets.size() == m,
                "softmax_cross_entropy: " + std::to_string(targets.size()) +
                    " targets for " + std::to_string(m) + " rows");
        Tensor probs({m, c});
        double total = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const int ti = targets[i];
            require(ti >= 0 && static_cast<std::size_t>(ti) < c,
                    "softmax_cross_entropy: target " + std::to_string(ti) +
                        " out of range for " + std::to_string(c) + " classes");
            const double* row = &Z.data[i * c];
            double mx = row[0];
            for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
            double sum = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
                const double e = std::exp(row[j] - mx);
                probs.data[i * c + j] = e;
                sum += e;
            }
            for (std::size_t j = 0; j < c; ++j) probs.data[i * c + j] /= sum;
            total += std::log(sum) - (row[ti] - mx);
        }
        Var o = push(Tensor::scalar(total / static_cast<double>(m)));
        set_backward(o, [oi = o.index(), zi = logits.index(),
                         probs = std::move(probs), targets = std::move(targets),
                         m, c](Tape& t) {
            const double g = t.nodes_[oi].grad.data[0];
            Tensor& Zg = t.nodes_[zi].grad;
            const double inv_m = 1.0 / static_cast<double>(m);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < c; ++j) {
                    const double onehot =
                        (static_cast<std::size_t>(targets[i]) == j) ? 1.0 : 0.0;
                    Zg.data[i * c + j] +=
                        g * (probs.data[i * c + j] - onehot) * inv_m;
                }
        });
        return o;
    }

    /// Elementwise add of same-shape tensors (no broadcasting).
    Var add(Var a, Var b) {
        const Tensor& A = value(a);
        const Tensor& B = value(b);
        require(A.same_shape(B), "add: shapes disagree, " + A.shape_str() +
                                     " vs " + B.shape_str());
        Tensor out = A;
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += B.data[i];
        Var o = push(std::move(out));
        set_backward(o, [oi = o.index(), ai = a.index(), bi = b.index()](Tape& t) {
            const Tensor& g = t.nodes_[oi].grad;
            Tensor& Ag = t.nodes_[ai].grad;
            Tensor& Bg = t.nodes_[bi].grad;
            for (std::size_t i = 0; i < g.size(); ++i) {
                Ag.data[i] += g.data[i];
                Bg.data[i] += g.data[i];
            }
        });
        return o;
    }

    Var scale(Var x, double factor) {
        Tensor out = value(x);
        for (double& v : out.data) v *= factor;
        Var o = push(std::move(out));
        set_backward(o, [oi = o.index(), xi = x.index(), factor](Tape& t) {
            const Tensor& g = t.nodes_[oi].grad;
            Tensor& Xg = t.nodes_[xi].grad;
            for (std::size_t i = 0; i < g.size(); ++i)
                Xg.data[i] += factor * g.data[i];
        });
        return o;
    }

    /// Sum of all elements -> scalar.
    Var sum(Var x) {
        const Tensor& X = value(x);
        double s = 0.0;
        for (double v : X.data) s += v;
        Var o = push(Tensor::scalar(s));
        set_backward(o, [oi = o.index(), xi = x.index()](Tape& t) {
            const double g = t.nodes_[oi].grad.data[0];
            Tensor& Xg = t.nodes_[xi].grad;
            for (double& v : Xg.data) v += g;
        });
        return o;
    }

    /// Reverse sweep from a scalar loss. All gradient slots are zeroed first,
    /// so a tape can be replayed from different losses.
    void backward(Var loss) {
        check_owned(loss);
        require(value(loss).is_scalar(),
                "backward: loss must be a scalar, got " +
                    value(loss).shape_str());
        for (Node& n : nodes_)
            std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
        nodes_[loss.index()].grad.data[0] = 1.0;
        for (std::size_t i = loss.index() + 1; i-- > 0;)
            if (nodes_[i].back) nodes_[i].back(*this);
    }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Tape&)> back;
    };

    std::vector<Node> nodes_;

    static void require(bool ok, const std::string& msg) {
        if (!ok) throw error(msg);
    }

    const Node& node(Var v) const {
        check_owned(v);
        return nodes_[v.index_];
    }

    void check_owned(Var v) const {
        require(v.tape_ == this && v.index_ < nodes_.size(),
                "Var does not belong to this tape");
    }

    Var push(Tensor value) {
#ifndef NDEBUG
        require(value.all_finite(), "non-finite value produced by a forward op");
#endif
        Node n;
        n.grad = Tensor(value.shape);
        n.value = std::move(value);
        nodes_.push_back(std::move(n));
        return Var(this, nodes_.size() - 1);
    }

    void set_backward(Var v, std::function<void(Tape&)> fn) {
        nodes_[v.index_].back = std::move(fn);
    }
};

inline const Tensor& Var::value() const { return tape_->value(*this); }
inline const Tensor& Var::grad() const { return tape_->grad(*this); }

} // namespace hiercls
