#pragma once

#include <cblas.h>

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "semo/tensor.hpp"

namespace semo {

template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;

    Parameter() = default;
    Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)) {
        grad = Tensor<T>(value.shape);
    }
    void zero_grad() { grad.fill(T(0)); }
};

namespace detail {

inline void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda,
                 const float* b, int ldb, float beta, float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m,
                n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}
inline void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda,
                 const double* b, int ldb, double beta, double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m,
                n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace detail

// C = op(A)·op(B), row-major. A is [m,k] after op, B is [k,n] after op.
template <typename T>
void matmul_into(const Tensor<T>& a, bool ta, const Tensor<T>& b, bool tb, Tensor<T>& c,
                 T alpha = T(1), T beta = T(0)) {
    int am = a.rows(), an = a.cols();
    int bm = b.rows(), bn = b.cols();
    int m = ta ? an : am, k = ta ? am : an;
    int k2 = tb ? bn : bm, n = tb ? bm : bn;
    if (k != k2) throw std::invalid_argument("matmul: inner dimension mismatch");
    if (c.rows() != m || c.cols() != n) throw std::invalid_argument("matmul: output shape");
    detail::gemm(ta, tb, m, n, k, alpha, a.data.data(), a.cols(), b.data.data(), b.cols(), beta,
                 c.data.data(), c.cols());
}

// Captured attention weights: one [q_rows, k_rows] softmax matrix per
// (layer, head) call site, in call order.
template <typename T>
struct AttentionCapture {
    std::vector<Tensor<T>> maps;
};

// Reverse-mode tape over dense 2D tensors. A graph is built per forward
// pass; parameters persist outside and receive accumulated gradients on
// backward(). Not copyable; node handles are indices into the tape.
template <typename T>
class Graph {
public:
    using Ref = int;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // ---- inputs -------------------------------------------------------

    Ref constant(Tensor<T> v) { return push(std::move(v), {}, nullptr, nullptr); }

    // Leaf whose gradient is retained (readable via grad()) but not
    // routed to any parameter.
    Ref input(Tensor<T> v) {
        Ref r = push(std::move(v), {}, nullptr, nullptr);
        nodes_[r].needs_grad = true;
        return r;
    }

    Ref param(Parameter<T>& p) {
        Ref r = push(p.value, {}, nullptr, &p);
        nodes_[r].needs_grad = true;
        return r;
    }

    // ---- elementwise --------------------------------------------------

    Ref add(Ref a, Ref b) {
        check_same(a, b, "add");
        Tensor<T> out = val(a);
        for (std::int64_t i = 0; i < out.size(); ++i) out.data[i] += val(b).data[i];
        return push(std::move(out), {a, b}, [](Graph& g, Node& n) {
            g.accum(n.parents[0], n.grad);
            g.accum(n.parents[1], n.grad);
        });
    }

    Ref sub(Ref a, Ref b) {
        check_same(a, b, "sub");
        Tensor<T> out = val(a);
        for (std::int64_t i = 0; i < out.size(); ++i) out.data[i] -= val(b).data[i];
        return push(std::move(out), {a, b}, [](Graph& g, Node& n) {
            g.accum(n.parents[0], n.grad);
            Tensor<T> neg = n.grad;
            for (auto& x : neg.data) x = -x;
            g.accum(n.parents[1], neg);
        });
    }

    Ref mul(Ref a, Ref b) {
        check_same(a, b, "mul");
        Tensor<T> out = val(a);
        for (std::int64_t i = 0; i < out.size(); ++i) out.data[i] *= val(b).data[i];
        return push(std::move(out), {a, b}, [](Graph& g, Node& n) {
            Tensor<T> da = n.grad, db = n.grad;
            const auto& va = g.val(n.parents[0]);
            const auto& vb = g.val(n.parents[1]);
            for (std::int64_t i = 0; i < da.size(); ++i) {
                da.data[i] *= vb.data[i];
                db.data[i] *= va.data[i];
            }
            g.accum(n.parents[0], da);
            g.accum(n.parents[1], db);
        });
    }

    Ref scale(Ref a, T c) {
        Tensor<T> out = val(a);
        for (auto& x : out.data) x *= c;
        return push(std::move(out), {a}, [c](Graph& g, Node& n) {
            Tensor<T> da = n.grad;
            for (auto& x : da.data) x *= c;
            g.accum(n.parents[0], da);
        });
    }

    // x [n,d] + b [1,d], broadcast over rows.
    Ref add_row(Ref x, Ref b) {
        check_rowvec(x, b, "add_row");
        Tensor<T> out = val(x);
        const auto& vb = val(b);
        int n = out.rows(), d = out.cols();
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < d; ++c) out.at(r, c) += vb.data[static_cast<std::size_t>(c)];
        return push(std::move(out), {x, b}, [](Graph& g, Node& n_) {
            g.accum(n_.parents[0], n_.grad);
            Tensor<T> db({1, n_.grad.cols()});
            for (int r = 0; r < n_.grad.rows(); ++r)
                for (int c = 0; c < n_.grad.cols(); ++c) db.data[static_cast<std::size_t>(c)] += n_.grad.at(r, c);
            g.accum(n_.parents[1], db);
        });
    }

    // x [n,d] ⊙ s [1,d], broadcast over rows.
    Ref mul_row(Ref x, Ref s) {
        check_rowvec(x, s, "mul_row");
        Tensor<T> out = val(x);
        const auto& vs = val(s);
        for (int r = 0; r < out.rows(); ++r)
            for (int c = 0; c < out.cols(); ++c) out.at(r, c) *= vs.data[static_cast<std::size_t>(c)];
        return push(std::move(out), {x, s}, [](Graph& g, Node& n_) {
            const auto& vx = g.val(n_.parents[0]);
            const auto& vs2 = g.val(n_.parents[1]);
            Tensor<T> dx = n_.grad;
            Tensor<T> ds({1, n_.grad.cols()});
            for (int r = 0; r < n_.grad.rows(); ++r)
                for (int c = 0; c < n_.grad.cols(); ++c) {
                    ds.data[static_cast<std::size_t>(c)] += n_.grad.at(r, c) * vx.at(r, c);
                    dx.at(r, c) *= vs2.data[static_cast<std::size_t>(c)];
                }
            g.accum(n_.parents[0], dx);
            g.accum(n_.parents[1], ds);
        });
    }

    // ---- linear algebra ----------------------------------------------

    Ref matmul(Ref a, Ref b) { return matmul_impl(a, b, false); }
    // a·bᵀ (used for attention scores).
    Ref matmul_nt(Ref a, Ref b) { return matmul_impl(a, b, true); }

    // ---- nonlinearities ----------------------------------------------

    Ref gelu(Ref a) {
        const T c0 = T(0.7978845608028654);  // sqrt(2/pi)
        const T c1 = T(0.044715);
        Tensor<T> out = val(a);
        for (auto& x : out.data) {
            T u = c0 * (x + c1 * x * x * x);
            x = T(0.5) * x * (T(1) + std::tanh(u));
        }
        return push(std::move(out), {a}, [c0, c1](Graph& g, Node& n) {
            const auto& vx = g.val(n.parents[0]);
            Tensor<T> dx = n.grad;
            for (std::int64_t i = 0; i < dx.size(); ++i) {
                T x = vx.data[i];
                T u = c0 * (x + c1 * x * x * x);
                T t = std::tanh(u);
                T du = c0 * (T(1) + T(3) * c1 * x * x);
                dx.data[i] *= T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * du;
            }
            g.accum(n.parents[0], dx);
        });
    }

    Ref silu(Ref a) {
        Tensor<T> out = val(a);
        for (auto& x : out.data) x = x / (T(1) + std::exp(-x));
        return push(std::move(out), {a}, [](Graph& g, Node& n) {
            const auto& vx = g.val(n.parents[0]);
            Tensor<T> dx = n.grad;
            for (std::int64_t i = 0; i < dx.size(); ++i) {
                T x = vx.data[i];
                T s = T(1) / (T(1) + std::exp(-x));
                dx.data[i] *= s * (T(1) + x * (T(1) - s));
            }
            g.accum(n.parents[0], dx);
        });
    }

    Ref softmax_rows(Ref a) {
        Tensor<T> out = val(a);
        softmax_rows_inplace(out);
        Ref r = push(std::move(out), {a}, [](Graph& g, Node& n) {
            const auto& y = n.value;
            Tensor<T> dx = n.grad;
            for (int i = 0; i < y.rows(); ++i) {
                T dot = 0;
                for (int j = 0; j < y.cols(); ++j) dot += dx.at(i, j) * y.at(i, j);
                for (int j = 0; j < y.cols(); ++j) dx.at(i, j) = y.at(i, j) * (dx.at(i, j) - dot);
            }
            g.accum(n.parents[0], dx);
        });
        return r;
    }

    // Pre-norm LayerNorm over the last dimension, with affine gain/bias.
    Ref layernorm(Ref x, Ref gain, Ref bias, T eps = T(1e-5)) {
        Ref h = layernorm_plain(x, eps);
        return add_row(mul_row(h, gain), bias);
    }

    // LayerNorm without affine parameters (modulated externally).
    Ref layernorm_plain(Ref x, T eps = T(1e-5)) {
        const auto& vx = val(x);
        int n = vx.rows(), d = vx.cols();
        Tensor<T> out({n, d});
        Tensor<T> inv_sigma({n, 1});
        for (int i = 0; i < n; ++i) {
            T mu = 0;
            for (int j = 0; j < d; ++j) mu += vx.at(i, j);
            mu /= T(d);
            T var = 0;
            for (int j = 0; j < d; ++j) {
                T c = vx.at(i, j) - mu;
                var += c * c;
            }
            var /= T(d);
            T is = T(1) / std::sqrt(var + eps);
            inv_sigma.data[static_cast<std::size_t>(i)] = is;
            for (int j = 0; j < d; ++j) out.at(i, j) = (vx.at(i, j) - mu) * is;
        }
        return push(std::move(out), {x}, [inv_sigma](Graph& g, Node& n_) {
            const auto& xhat = n_.value;
            int n = xhat.rows(), d = xhat.cols();
            Tensor<T> dx({n, d});
            for (int i = 0; i < n; ++i) {
                T m1 = 0, m2 = 0;
                for (int j = 0; j < d; ++j) {
                    m1 += n_.grad.at(i, j);
                    m2 += n_.grad.at(i, j) * xhat.at(i, j);
                }
                m1 /= T(d);
                m2 /= T(d);
                T is = inv_sigma.data[static_cast<std::size_t>(i)];
                for (int j = 0; j < d; ++j)
                    dx.at(i, j) = is * (n_.grad.at(i, j) - m1 - xhat.at(i, j) * m2);
            }
            g.accum(n_.parents[0], dx);
        });
    }

    // ---- shape ops ----------------------------------------------------

    Ref concat_rows(const std::vector<Ref>& parts) {
        if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
        int d = val(parts[0]).cols();
        int n = 0;
        for (Ref p : parts) {
            if (val(p).cols() != d) throw std::invalid_argument("concat_rows: column mismatch");
            n += val(p).rows();
        }
        Tensor<T> out({n, d});
        int at = 0;
        for (Ref p : parts) {
            const auto& v = val(p);
            std::copy(v.data.begin(), v.data.end(), out.data.begin() + static_cast<std::int64_t>(at) * d);
            at += v.rows();
        }
        return push(std::move(out), parts, [](Graph& g, Node& n_) {
            int d2 = n_.grad.cols();
            int at2 = 0;
            for (Ref p : n_.parents) {
                int r = g.val(p).rows();
                Tensor<T> part({r, d2});
                std::copy(n_.grad.data.begin() + static_cast<std::int64_t>(at2) * d2,
                          n_.grad.data.begin() + static_cast<std::int64_t>(at2 + r) * d2,
                          part.data.begin());
                g.accum(p, part);
                at2 += r;
            }
        });
    }

    Ref slice_rows(Ref a, int begin, int count) {
        const auto& v = val(a);
        if (begin < 0 || count < 0 || begin + count > v.rows())
            throw std::invalid_argument("slice_rows: out of range");
        int d = v.cols();
        Tensor<T> out({count, d});
        std::copy(v.data.begin() + static_cast<std::int64_t>(begin) * d,
                  v.data.begin() + static_cast<std::int64_t>(begin + count) * d, out.data.begin());
        return push(std::move(out), {a}, [begin](Graph& g, Node& n_) {
            int d2 = n_.grad.cols();
            Tensor<T> full(g.val(n_.parents[0]).shape);
            std::copy(n_.grad.data.begin(), n_.grad.data.end(),
                      full.data.begin() + static_cast<std::int64_t>(begin) * d2);
            g.accum(n_.parents[0], full);
        });
    }

    Ref slice_cols(Ref a, int begin, int count) {
        const auto& v = val(a);
        if (begin < 0 || count < 0 || begin + count > v.cols())
            throw std::invalid_argument("slice_cols: out of range");
        Tensor<T> out({v.rows(), count});
        for (int r = 0; r < v.rows(); ++r)
            std::copy(v.row_ptr(r) + begin, v.row_ptr(r) + begin + count, out.row_ptr(r));
        return push(std::move(out), {a}, [begin](Graph& g, Node& n_) {
            Tensor<T> full(g.val(n_.parents[0]).shape);
            for (int r = 0; r < n_.grad.rows(); ++r)
                std::copy(n_.grad.row_ptr(r), n_.grad.row_ptr(r) + n_.grad.cols(),
                          full.row_ptr(r) + begin);
            g.accum(n_.parents[0], full);
        });
    }

    // Gather rows by index (no duplicates required; duplicates accumulate).
    Ref gather_rows(Ref a, std::vector<int> idx) {
        const auto& v = val(a);
        int d = v.cols();
        Tensor<T> out({static_cast<int>(idx.size()), d});
        for (std::size_t i = 0; i < idx.size(); ++i)
            std::copy(v.row_ptr(idx[i]), v.row_ptr(idx[i]) + d, out.row_ptr(static_cast<int>(i)));
        return push(std::move(out), {a}, [idx](Graph& g, Node& n_) {
            Tensor<T> full(g.val(n_.parents[0]).shape);
            int d2 = n_.grad.cols();
            for (std::size_t i = 0; i < idx.size(); ++i)
                for (int c = 0; c < d2; ++c)
                    full.at(idx[i], c) += n_.grad.at(static_cast<int>(i), c);
            g.accum(n_.parents[0], full);
        });
    }

    Ref reshape(Ref a, std::vector<int> shape) {
        Tensor<T> out = val(a);
        if (Tensor<T>::count(shape) != out.size())
            throw std::invalid_argument("reshape: element count mismatch");
        out.shape = std::move(shape);
        return push(std::move(out), {a}, [](Graph& g, Node& n_) {
            Tensor<T> da = n_.grad;
            da.shape = g.val(n_.parents[0]).shape;
            g.accum(n_.parents[0], da);
        });
    }

    // ---- reductions ---------------------------------------------------

    Ref sum_all(Ref a) {
        T s = 0;
        for (T x : val(a).data) s += x;
        Tensor<T> out({1, 1});
        out.data[0] = s;
        return push(std::move(out), {a}, [](Graph& g, Node& n_) {
            Tensor<T> da(g.val(n_.parents[0]).shape);
            da.fill(n_.grad.data[0]);
            g.accum(n_.parents[0], da);
        });
    }

    Ref mean_all(Ref a) {
        auto n = static_cast<T>(val(a).size());
        return scale(sum_all(a), T(1) / n);
    }

    // Mean of squared elementwise difference; the training loss core.
    Ref mse(Ref a, Ref b) {
        check_same(a, b, "mse");
        const auto& va = val(a);
        const auto& vb = val(b);
        T s = 0;
        for (std::int64_t i = 0; i < va.size(); ++i) {
            T d = va.data[i] - vb.data[i];
            s += d * d;
        }
        auto n = static_cast<T>(va.size());
        Tensor<T> out({1, 1});
        out.data[0] = s / n;
        return push(std::move(out), {a, b}, [n](Graph& g, Node& n_) {
            const auto& va2 = g.val(n_.parents[0]);
            const auto& vb2 = g.val(n_.parents[1]);
            T go = n_.grad.data[0] * T(2) / n;
            Tensor<T> da(va2.shape), db(va2.shape);
            for (std::int64_t i = 0; i < va2.size(); ++i) {
                T d = go * (va2.data[i] - vb2.data[i]);
                da.data[i] = d;
                db.data[i] = -d;
            }
            g.accum(n_.parents[0], da);
            g.accum(n_.parents[1], db);
        });
    }

    // ---- fused multi-head attention ----------------------------------
    // q [n,d], k [m,d], v [m,d], d divisible by heads. Softmax over keys
    // per query row. If capture is non-null the per-head softmax weights
    // are appended to it in head order.
    Ref attention(Ref q, Ref k, Ref v, int heads, AttentionCapture<T>* capture = nullptr) {
        const auto& vq = val(q);
        const auto& vk = val(k);
        const auto& vv = val(v);
        int n = vq.rows(), m = vk.rows(), d = vq.cols();
        if (vk.cols() != d || vv.cols() != d || vv.rows() != m)
            throw std::invalid_argument("attention: shape mismatch");
        if (d % heads != 0) throw std::invalid_argument("attention: heads must divide dim");
        int dh = d / heads;
        T scale_f = T(1) / std::sqrt(static_cast<T>(dh));

        Tensor<T> out({n, d});
        auto weights = std::make_shared<std::vector<Tensor<T>>>();
        weights->reserve(static_cast<std::size_t>(heads));
        Tensor<T> qh({n, dh}), kh({m, dh}), vh({m, dh}), oh({n, dh});
        for (int h = 0; h < heads; ++h) {
            split_head(vq, h, dh, qh);
            split_head(vk, h, dh, kh);
            split_head(vv, h, dh, vh);
            Tensor<T> s({n, m});
            matmul_into(qh, false, kh, true, s, scale_f);
            softmax_rows_inplace(s);
            matmul_into(s, false, vh, false, oh);
            merge_head(oh, h, dh, out);
            if (capture) capture->maps.push_back(s);
            weights->push_back(std::move(s));
        }
        flops_ += static_cast<std::int64_t>(4) * n * m * d;

        return push(std::move(out), {q, k, v},
                    [heads, dh, scale_f, weights](Graph& g, Node& n_) {
                        const auto& vq2 = g.val(n_.parents[0]);
                        const auto& vk2 = g.val(n_.parents[1]);
                        const auto& vv2 = g.val(n_.parents[2]);
                        int n = vq2.rows(), m = vk2.rows(), d = vq2.cols();
                        Tensor<T> dq(vq2.shape), dk(vk2.shape), dv(vv2.shape);
                        Tensor<T> qh({n, dh}), kh({m, dh}), vh({m, dh});
                        Tensor<T> doh({n, dh}), dqh({n, dh}), dkh({m, dh}), dvh({m, dh});
                        for (int h = 0; h < heads; ++h) {
                            split_head(vq2, h, dh, qh);
                            split_head(vk2, h, dh, kh);
                            split_head(vv2, h, dh, vh);
                            split_head(n_.grad, h, dh, doh);
                            const Tensor<T>& a = (*weights)[static_cast<std::size_t>(h)];
                            Tensor<T> da({n, m});
                            matmul_into(doh, false, vh, true, da);
                            matmul_into(a, true, doh, false, dvh);
                            // softmax backward in place on da
                            for (int i = 0; i < n; ++i) {
                                T dot = 0;
                                for (int j = 0; j < m; ++j) dot += da.at(i, j) * a.at(i, j);
                                for (int j = 0; j < m; ++j)
                                    da.at(i, j) = a.at(i, j) * (da.at(i, j) - dot);
                            }
                            matmul_into(da, false, kh, false, dqh, scale_f);
                            matmul_into(da, true, qh, false, dkh, scale_f);
                            merge_head(dqh, h, dh, dq);
                            merge_head(dkh, h, dh, dk);
                            merge_head(dvh, h, dh, dv);
                        }
                        g.flops_ += static_cast<std::int64_t>(8) * n * m * d;
                        g.accum(n_.parents[0], dq);
                        g.accum(n_.parents[1], dk);
                        g.accum(n_.parents[2], dv);
                    });
    }

    // ---- access -------------------------------------------------------

    const Tensor<T>& val(Ref r) const { return nodes_[static_cast<std::size_t>(r)].value; }
    const Tensor<T>& grad(Ref r) const { return nodes_[static_cast<std::size_t>(r)].grad; }
    std::int64_t flops() const { return flops_; }

    // Seed the given scalar node with gradient 1 and sweep the tape in
    // reverse. Parameter leaves accumulate into Parameter::grad.
    void backward(Ref loss) {
        Node& top = nodes_[static_cast<std::size_t>(loss)];
        if (top.value.size() != 1) throw std::invalid_argument("backward: loss must be scalar");
        for (auto& n : nodes_) {
            n.grad = Tensor<T>(n.value.shape);
            n.grad.fill(T(0));
        }
        top.grad.data[0] = T(1);
        for (int i = loss; i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (n.backward) n.backward(*this, n);
            if (n.param) {
                for (std::int64_t j = 0; j < n.grad.size(); ++j)
                    n.param->grad.data[j] += n.grad.data[j];
            }
        }
    }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        std::vector<Ref> parents;
        std::function<void(Graph&, Node&)> backward;
        Parameter<T>* param = nullptr;
        bool needs_grad = false;
    };

    Ref push(Tensor<T> v, std::vector<Ref> parents, std::function<void(Graph&, Node&)> bw,
             Parameter<T>* p = nullptr) {
        Node n;
        n.value = std::move(v);
        n.parents = std::move(parents);
        n.backward = std::move(bw);
        n.param = p;
        nodes_.push_back(std::move(n));
        return static_cast<Ref>(nodes_.size() - 1);
    }

    void accum(Ref r, const Tensor<T>& g) {
        Node& n = nodes_[static_cast<std::size_t>(r)];
        for (std::int64_t i = 0; i < g.size(); ++i) n.grad.data[i] += g.data[i];
    }

    void check_same(Ref a, Ref b, const char* op) const {
        if (!val(a).same_shape(val(b)))
            throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(val(a)) +
                                        " vs " + shape_str(val(b)));
    }
    void check_rowvec(Ref x, Ref b, const char* op) const {
        if (val(b).rows() != 1 || val(b).cols() != val(x).cols())
            throw std::invalid_argument(std::string(op) + ": expected [1," +
                                        std::to_string(val(x).cols()) + "] row vector");
    }

    Ref matmul_impl(Ref a, Ref b, bool nt) {
        const auto& va = val(a);
        const auto& vb = val(b);
        int m = va.rows();
        int k = va.cols();
        int n = nt ? vb.rows() : vb.cols();
        Tensor<T> out({m, n});
        matmul_into(va, false, vb, nt, out);
        flops_ += static_cast<std::int64_t>(2) * m * n * k;
        return push(std::move(out), {a, b}, [nt](Graph& g, Node& n_) {
            const auto& va2 = g.val(n_.parents[0]);
            const auto& vb2 = g.val(n_.parents[1]);
            Tensor<T> da(va2.shape), db(vb2.shape);
            if (!nt) {
                matmul_into(n_.grad, false, vb2, true, da);   // dA = dC·Bᵀ
                matmul_into(va2, true, n_.grad, false, db);   // dB = Aᵀ·dC
            } else {
                matmul_into(n_.grad, false, vb2, false, da);  // dA = dC·B
                matmul_into(n_.grad, true, va2, false, db);   // dB = dCᵀ·A
            }
            g.flops_ += static_cast<std::int64_t>(4) * va2.rows() * va2.cols() * db.rows();
            g.accum(n_.parents[0], da);
            g.accum(n_.parents[1], db);
        });
    }

    static void softmax_rows_inplace(Tensor<T>& t) {
        for (int i = 0; i < t.rows(); ++i) {
            T mx = t.at(i, 0);
            for (int j = 1; j < t.cols(); ++j) mx = std::max(mx, t.at(i, j));
            T s = 0;
            for (int j = 0; j < t.cols(); ++j) {
                T e = std::exp(t.at(i, j) - mx);
                t.at(i, j) = e;
                s += e;
            }
            for (int j = 0; j < t.cols(); ++j) t.at(i, j) /= s;
        }
    }

    static void split_head(const Tensor<T>& x, int h, int dh, Tensor<T>& out) {
        for (int r = 0; r < x.rows(); ++r) {
            const T* src = x.row_ptr(r) + h * dh;
            std::copy(src, src + dh, out.row_ptr(r));
        }
    }
    static void merge_head(const Tensor<T>& hpart, int h, int dh, Tensor<T>& out) {
        for (int r = 0; r < hpart.rows(); ++r) {
            T* dst = out.row_ptr(r) + h * dh;
            std::copy(hpart.row_ptr(r), hpart.row_ptr(r) + dh, dst);
        }
    }

    std::vector<Node> nodes_;
    std::int64_t flops_ = 0;
};

}  // namespace semo
