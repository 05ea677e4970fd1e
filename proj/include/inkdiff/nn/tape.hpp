#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "inkdiff/errors.hpp"
#include "inkdiff/tensor.hpp"

namespace inkdiff::nn {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using EMap = Eigen::Map<EMat<T>>;
template <typename T>
using ECMap = Eigen::Map<const EMat<T>>;

template <typename T>
inline EMap<T> as_mat(Tensor<T>& t, int rows, int cols) {
    return EMap<T>(t.data(), rows, cols);
}
template <typename T>
inline ECMap<T> as_mat(const Tensor<T>& t, int rows, int cols) {
    return ECMap<T>(t.data(), rows, cols);
}

// Reverse-mode tape. Nodes are appended in evaluation order, so running the
// stored callbacks backwards is a valid topological sweep. The tape must not
// move once ops have been recorded (callbacks capture its address).
template <typename T>
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    int leaf(Tensor<T> v) { return push(std::move(v), true); }
    int constant(Tensor<T> v) { return push(std::move(v), false); }

    const Tensor<T>& val(int id) const { return nodes_[static_cast<size_t>(id)].val; }
    Tensor<T>& grad(int id) { return nodes_[static_cast<size_t>(id)].grad; }
    bool wants_grad(int id) const { return nodes_[static_cast<size_t>(id)].wants_grad; }
    size_t size() const { return nodes_.size(); }

    int push(Tensor<T> v, bool wants_grad) {
        nodes_.push_back(Node{std::move(v), Tensor<T>{}, nullptr, wants_grad});
        return static_cast<int>(nodes_.size()) - 1;
    }

    void set_back(int id, std::function<void()> fn) {
        nodes_[static_cast<size_t>(id)].back = std::move(fn);
    }

    // Seed d(root)/d(root) = 1 and sweep. root must be a scalar node.
    void backward(int root) {
        if (val(root).numel() != 1) throw NumericError("backward root must be scalar");
        for (auto& n : nodes_) {
            n.grad = Tensor<T>(n.val.shape());
        }
        nodes_[static_cast<size_t>(root)].grad[0] = T(1);
        for (int i = root; i >= 0; --i) {
            auto& n = nodes_[static_cast<size_t>(i)];
            if (n.back) n.back();
        }
    }

private:
    struct Node {
        Tensor<T> val;
        Tensor<T> grad;
        std::function<void()> back;
        bool wants_grad;
    };
    std::vector<Node> nodes_;
};

namespace detail {
template <typename T>
inline void axpy(Tensor<T>& dst, const Tensor<T>& src) {
    for (int64_t i = 0; i < dst.numel(); ++i) dst[i] += src[i];
}
inline void require(bool cond, const char* msg) {
    if (!cond) throw DataError(msg);
}
}  // namespace detail

// ---- elementwise -------------------------------------------------------

template <typename T>
int add(Tape<T>& tp, int a, int b) {
    const auto &A = tp.val(a), &B = tp.val(b);
    detail::require(A.same_shape(B), "add: shape mismatch");
    Tensor<T> out = A;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += B[i];
    const int id = tp.push(std::move(out), true);
    tp.set_back(id, [&tp, id, a, b] {
        if (tp.wants_grad(a)) detail::axpy(tp.grad(a), tp.grad(id));
        if (tp.wants_grad(b)) detail::axpy(tp.grad(b), tp.grad(id));
    });
    return id;
}

template <typename T>
int scale(Tape<T>& tp, int a, double c) {
    Tensor<T> out = tp.val(a);
    const T cc = static_cast<T>(c);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= cc;
    const int id = tp.push(std::move(out), true);
    tp.set_back(id, [&tp, id, a, cc] {
        if (!tp.wants_grad(a)) return;
        auto& ga = tp.grad(a);
        const auto& g = tp.grad(id);
        for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += cc * g[i];
    });
    return id;
}

// out = a + c, c a plain tensor (no gradient), e.g. positional encodings
template <typename T>
int add_const(Tape<T>& tp, int a, const Tensor<T>& c) {
    const auto& A = tp.val(a);
    detail::require(A.same_shape(c), "add_const: shape mismatch");
    Tensor<T> out = A;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += c[i];
    const int id = tp.push(std::move(out), true);
    tp.set_back(id, [&tp, id, a] {
        if (tp.wants_grad(a)) detail::axpy(tp.grad(a), tp.grad(id));
    });
    return id;
}

template <typename T>
int sigmoid(Tape<T>& tp, int a) {
    Tensor<T> out = tp.val(a);
    for (int64_t i = 0; i < out.numel(); ++i) {
        const double x = static_cast<double>(out[i]);
        out[i] = static_cast<T>(x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                                       : std::exp(x) / (1.0 + std::exp(x)));
    }
    const int id = tp.push(std::move(out), true);
    tp.set_back(id, [&tp, id, a] {
        if (!tp.wants_grad(a)) return;
        auto& ga = tp.grad(a);
        const auto &g = tp.grad(id), &y = tp.val(id);
        for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += g[i] * y[i] * (T(1) - y[i]);
    });
    return id;
}

// x * sigmoid(x)
template <typename T>
int silu(Tape<T>& tp, int a) {
    const auto& A = tp.val(a);
    Tensor<T> out(A.shape());
    for (int64_t i = 0; i < A.numel(); ++i) {
        const double x = static_cast<double>(A[i]);
        const double s = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        out[i] = static_cast<T>(x * s);
    }
    const int id = tp.push(std::move(out), true);
    tp.set_back(id, [&tp, id, a] {
        if (!tp.wants_grad(a)) return;
        auto& ga = tp.grad(a);
        const auto &g = tp.grad(id), &x = tp.val(a);
        for (int64_t i = 0; i < ga.numel(); ++i) {
            const double xv = static_cast<double>(x[i]);
            const double s =
                xv >= 0 ? 1.0 / (1.0 + std::exp(-xv)) : std::exp(xv) / (1.0 + std::exp(xv));
            ga[i] += g[i] * static_cast<T>(s * (1.0 + xv * (1.0 - s)));
        }
    });
    return id;
}

template <typename T>
int clamp(Tape<T>& tp, int a, double lo, double hi) {
    const auto& A = tp.val(a);
    Tensor<T> out(A.shape());
    for (int64_t i = 0; i < A.numel(); ++i)
        out[i] = std::min(static_cast<T>(hi), std::max(static_cast<T>(lo), A[i]));
    const int id = tp.push(std::move(out), true);
    tp.set_back(id, [&tp, id, a, lo, hi] {
        if (!tp.wants_grad(a)) return;
        auto& ga = tp.grad(a);
        const auto &g = tp.grad(id), &x = tp.val(a);
        for (int64_t i = 0; i < ga.numel(); ++i)
            if (static_cast<double>(x[i]) > lo && static_cast<double>(x[i]) < hi)
                ga[i] += g[i];
    });
    return id;
}

// ---- shape plumbing ----------------------------------------------------

template <typename T>
int reshape(Tape<T>& tp, int a, std::vector<int> shape) {
    const auto& A = tp.val(a);
    detail::require(Tensor<T>::numel_of(shape) == A.numel(), "reshape: numel mismatch");
    Tensor<T> out(std::move(shape), A.vec());
    const int id = tp.push(std::move(out), true);
    tp.set_back(id, [&tp, id, a] {
        if (!tp.wants_grad(a)) return;
        auto& ga = tp.grad(a);
        const auto& g = tp.grad(id);
        for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += g[i];
    });
    return id;
}

template <typename T>
int slice_cols(Tape<T>& tp, int a, int c0, int c1) {
    const auto& A = tp.val(a);
    detail::require(A.rank() == 2 && c0 >= 0 && c1 <= A.cols() && c0 < c1,
                    "slice_cols: bad range");
    const int n = A.rows(), w = c1 - c0;
    Tensor<T> out({n, w});
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < w; ++c) out(r, c) = A(r, c0 + c);
    const int id = tp.push(std::move(out), true);
    tp.set_back(id, [&tp, id, a, c0, w, n] {
        if (!tp.wants_grad(a)) return;
        auto& ga = tp.grad(a);
        const auto& g = tp.grad(id);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < w; ++c) ga(r, c0 + c) += g(r, c);
    });
    return id;
}

template <typename T>
int concat_cols(Tape<T>& tp, const std::vector<int>& parts) {
    detail::require(!parts.empty(), "concat_cols: empty");
    const int n = tp.val(parts[0]).rows();
    int total = 0;
    for (int p : parts) {
        detail::require(tp.val(p).rank() == 2 && tp.val(p).rows() == n, "concat_cols: rows differ");
        total += tp.val(p).cols();
    }
    Tensor<T> out({n, total});
    int off = 0;
    for (int p : parts) {
        const auto& P = tp.val(p);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < P.cols(); ++c) out(r, off + c) = P(r, c);
        off += P.cols();
    }
    const int id = tp.push(std::move(out), true);
    tp.set_back(id, [&tp, id, parts, n] {
        const auto& g = tp.grad(id);
        int off2 = 0;
        for (int p : parts) {
            const int w = tp.val(p).cols();
            if (tp.wants_grad(p)) {
                auto& gp = tp.grad(p);
                for (int r = 0; r < n; ++r)
                    for (int c = 0; c < w; ++c) gp(r, c) += g(r, off2 + c);
            }
            off2 += w;
        }
    });
    return id;
}

// keep rows where mask==1, zero the rest
template <typename T>
int zero_rows(Tape<T>& tp, int a, std::vector<uint8_t> keep) {
    const auto& A = tp.val(a);
    detail::require(A.rank() == 2 && static_cast<int>(keep.size()) == A.rows(),
                    "zero_rows: mask length");
    Tensor<T> out = A;
    for (int r = 0; r < A.rows(); ++r)
        if (!keep[static_cast<size_t>(r)])
            for (int c = 0; c < A.cols(); ++c) out(r, c) = T(0);
    const int id = tp.push(std::move(out), true);
    tp.set_back(id, [&tp, id, a, keep = std::move(keep)] {
        if (!tp.wants_grad(a)) return;
        auto& ga = tp.grad(a);
        const auto& g = tp.grad(id);
        for (int r = 0; r < ga.rows(); ++r)
            if (keep[static_cast<size_t>(r)])
                for (int c = 0; c < ga.cols(); ++c) ga(r, c) += g(r, c);
    });
    return id;
}

// rows duplicated: [N x C] -> [2N x C]
template <typename T>
int upsample2_rows(Tape<T>& tp, int a) {
    const auto& A = tp.val(a);
    detail::require(A.rank() == 2, "upsample2_rows: rank");
    const int n = A.rows(), c = A.cols();
    Tensor<T> out({2 * n, c});
    for (int r = 0; r < n; ++r)
        for (int k = 0; k < c; ++k) {
            out(2 * r, k) = A(r, k);
            out(2 * r + 1, k) = A(r, k);
        }
    const int id = tp.push(std::move(out), true);
    tp.set_back(id, [&tp, id, a, n, c] {
        if (!tp.wants_grad(a)) return;
        auto& ga = tp.grad(a);
        const auto& g = tp.grad(id);
        for (int r = 0; r < n; ++r)
            for (int k = 0; k < c; ++k) ga(r, k) += g(2 * r, k) + g(2 * r + 1, k);
    });
    return id;
}

template <typename T>
int crop_rows(Tape<T>& tp, int a, int keep_n) {
    const auto& A = tp.val(a);
    detail::require(A.rank() == 2 && keep_n >= 1 && keep_n <= A.rows(), "crop_rows: bad length");
    const int c = A.cols();
    Tensor<T> out({keep_n, c});
    for (int r = 0; r < keep_n; ++r)
        for (int k = 0; k < c; ++k) out(r, k) = A(r, k);
    const int id = tp.push(std::move(out), true);
    tp.set_back(id, [&tp, id, a, keep_n, c] {
        if (!tp.wants_grad(a)) return;
        auto& ga = tp.grad(a);
        const auto& g = tp.grad(id);
        for (int r = 0; r < keep_n; ++r)
            for (int k = 0; k < c; ++k) ga(r, k) += g(r, k);
    });
    return id;
}

// ---- linear algebra ----------------------------------------------------

// x [N x K] * W [K x M] (+ bias [1 x M])
template <typename T>
int linear(Tape<T>& tp, int x, int w, int b = -1) {
    const auto &X = tp.val(x), &W = tp.val(w);
    detail::require(X.rank() == 2 && W.rank() == 2 && X.cols() == W.rows(), "linear: dims");
    const int n = X.rows(), k = X.cols(), m = W.cols();
    Tensor<T> out({n, m});
    as_mat(out, n, m).noalias() = as_mat(X, n, k) * as_mat(W, k, m);
    if (b >= 0) {
        const auto& B = tp.val(b);
        detail::require(B.numel() == m, "linear: bias length");
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < m; ++c) out(r, c) += B[c];
    }
    const int id = tp.push(std::move(out), true);
    tp.set_back(id, [&tp, id, x, w, b, n, k, m] {
        const auto& g = tp.grad(id);
        auto G = as_mat(g, n, m);
        if (tp.wants_grad(x))
            as_mat(tp.grad(x), n, k).noalias() += G * as_mat(tp.val(w), k, m).transpose();
        if (tp.wants_grad(w))
            as_mat(tp.grad(w), k, m).noalias() += as_mat(tp.val(x), n, k).transpose() * G;
        if (b >= 0 && tp.wants_grad(b)) {
            auto& gb = tp.grad(b);
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < m; ++c) gb[c] += g(r, c);
        }
    });
    return id;
}

// A [N x d] * B^T where B is [M x d]  ->  [N x M]
template <typename T>
int matmul_nt(Tape<T>& tp, int a, int b) {
    const auto &A = tp.val(a), &B = tp.val(b);
    detail::require(A.rank() == 2 && B.rank() == 2 && A.cols() == B.cols(), "matmul_nt: dims");
    const int n = A.rows(), d = A.cols(), m = B.rows();
    Tensor<T> out({n, m});
    as_mat(out, n, m).noalias() = as_mat(A, n, d) * as_mat(B, m, d).transpose();
    const int id = tp.push(std::move(out), true);
    tp.set_back(id, [&tp, id, a, b, n, d, m] {
        const auto& g = tp.grad(id);
        auto G = as_mat(g, n, m);
        if (tp.wants_grad(a))
            as_mat(tp.grad(a), n, d).noalias() += G * as_mat(tp.val(b), m, d);
        if (tp.wants_grad(b))
            as_mat(tp.grad(b), m, d).noalias() += G.transpose() * as_mat(tp.val(a), n, d);
    });
    return id;
}

// A [N x M] * B [M x d]  ->  [N x d]
template <typename T>
int matmul_nn(Tape<T>& tp, int a, int b) {
    const auto &A = tp.val(a), &B = tp.val(b);
    detail::require(A.rank() == 2 && B.rank() == 2 && A.cols() == B.rows(), "matmul_nn: dims");
    const int n = A.rows(), m = A.cols(), d = B.cols();
    Tensor<T> out({n, d});
    as_mat(out, n, d).noalias() = as_mat(A, n, m) * as_mat(B, m, d);
    const int id = tp.push(std::move(out), true);
    tp.set_back(id, [&tp, id, a, b, n, m, d] {
        const auto& g = tp.grad(id);
        auto G = as_mat(g, n, d);
        if (tp.wants_grad(a))
            as_mat(tp.grad(a), n, m).noalias() += G * as_mat(tp.val(b), m, d).transpose();
        if (tp.wants_grad(b))
            as_mat(tp.grad(b), m, d).noalias() += as_mat(tp.val(a), n, m).transpose() * G;
    });
    return id;
}

// per-channel x*s + b with s, b given as [1 x C] rows
template <typename T>
int rowwise_affine(Tape<T>& tp, int x, int s, int b) {
    const auto &X = tp.val(x), &S = tp.val(s), &B = tp.val(b);
    const int n = X.rows(), c = X.cols();
    detail::require(S.numel() == c && B.numel() == c, "rowwise_affine: channel mismatch");
    Tensor<T> out({n, c});
    for (int r = 0; r < n; ++r)
        for (int k = 0; k < c; ++k) out(r, k) = X(r, k) * S[k] + B[k];
    const int id = tp.push(std::move(out), true);
    tp.set_back(id, [&tp, id, x, s, b, n, c] {
        const auto& g = tp.grad(id);
        if (tp.wants_grad(x)) {
            auto& gx = tp.grad(x);
            const auto& S2 = tp.val(s);
            for (int r = 0; r < n; ++r)
                for (int k = 0; k < c; ++k) gx(r, k) += g(r, k) * S2[k];
        }
        if (tp.wants_grad(s)) {
            auto& gs = tp.grad(s);
            const auto& X2 = tp.val(x);
            for (int r = 0; r < n; ++r)
                for (int k = 0; k < c; ++k) gs[k] += g(r, k) * X2(r, k);
        }
        if (tp.wants_grad(b)) {
            auto& gb = tp.grad(b);
            for (int r = 0; r < n; ++r)
                for (int k = 0; k < c; ++k) gb[k] += g(r, k);
        }
    });
    return id;
}

// ---- normalization and attention ---------------------------------------

template <typename T>
int layer_norm_rows(Tape<T>& tp, int x, double eps = 1e-5) {
    const auto& X = tp.val(x);
    detail::require(X.rank() == 2, "layer_norm_rows: rank");
    const int n = X.rows(), c = X.cols();
    Tensor<T> out({n, c});
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(n));
    for (int r = 0; r < n; ++r) {
        double mu = 0;
        for (int k = 0; k < c; ++k) mu += static_cast<double>(X(r, k));
        mu /= c;
        double var = 0;
        for (int k = 0; k < c; ++k) {
            const double d = static_cast<double>(X(r, k)) - mu;
            var += d * d;
        }
        var /= c;
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[static_cast<size_t>(r)] = is;
        for (int k = 0; k < c; ++k)
            out(r, k) = static_cast<T>((static_cast<double>(X(r, k)) - mu) * is);
    }
    const int id = tp.push(std::move(out), true);
    tp.set_back(id, [&tp, id, x, n, c, inv_std] {
        if (!tp.wants_grad(x)) return;
        auto& gx = tp.grad(x);
        const auto &g = tp.grad(id), &y = tp.val(id);
        for (int r = 0; r < n; ++r) {
            double gmean = 0, gymean = 0;
            for (int k = 0; k < c; ++k) {
                gmean += static_cast<double>(g(r, k));
                gymean += static_cast<double>(g(r, k)) * static_cast<double>(y(r, k));
            }
            gmean /= c;
            gymean /= c;
            const double is = (*inv_std)[static_cast<size_t>(r)];
            for (int k = 0; k < c; ++k)
                gx(r, k) += static_cast<T>(
                    is * (static_cast<double>(g(r, k)) - gmean -
                          static_cast<double>(y(r, k)) * gymean));
        }
    });
    return id;
}

// Row softmax with an optional key mask (1 = attend). Masked keys get
// exactly zero weight. A row with no unmasked key is an error.
template <typename T>
int softmax_rows_masked(Tape<T>& tp, int logits, const std::vector<uint8_t>* key_mask) {
    const auto& X = tp.val(logits);
    detail::require(X.rank() == 2, "softmax: rank");
    const int n = X.rows(), m = X.cols();
    if (key_mask) {
        detail::require(static_cast<int>(key_mask->size()) == m, "softmax: mask length");
        bool any = false;
        for (uint8_t v : *key_mask) any = any || v;
        if (!any) throw DataError("attention: all keys masked");
    }
    Tensor<T> out({n, m});
    for (int r = 0; r < n; ++r) {
        double mx = -1e300;
        for (int k = 0; k < m; ++k)
            if (!key_mask || (*key_mask)[static_cast<size_t>(k)])
                mx = std::max(mx, static_cast<double>(X(r, k)));
        double z = 0;
        for (int k = 0; k < m; ++k) {
            if (!key_mask || (*key_mask)[static_cast<size_t>(k)]) {
                const double e = std::exp(static_cast<double>(X(r, k)) - mx);
                out(r, k) = static_cast<T>(e);
                z += e;
            } else {
                out(r, k) = T(0);
            }
        }
        for (int k = 0; k < m; ++k) out(r, k) = static_cast<T>(static_cast<double>(out(r, k)) / z);
    }
    const int id = tp.push(std::move(out), true);
    tp.set_back(id, [&tp, id, logits, n, m] {
        if (!tp.wants_grad(logits)) return;
        auto& gx = tp.grad(logits);
        const auto &g = tp.grad(id), &p = tp.val(id);
        for (int r = 0; r < n; ++r) {
            double dot = 0;
            for (int k = 0; k < m; ++k)
                dot += static_cast<double>(g(r, k)) * static_cast<double>(p(r, k));
            for (int k = 0; k < m; ++k)
                gx(r, k) += static_cast<T>(static_cast<double>(p(r, k)) *
                                           (static_cast<double>(g(r, k)) - dot));
        }
    });
    return id;
}

// ---- convolutions (im2col + GEMM) ---------------------------------------

// x [N x Cin], w [(K*Cin) x Cout], bias [Cout]; zero 'same' padding, odd K.
// out length = floor((N + 2*(K/2) - K)/stride) + 1.
template <typename T>
int conv1d(Tape<T>& tp, int x, int w, int b, int K, int stride) {
    const auto &X = tp.val(x), &W = tp.val(w);
    detail::require(X.rank() == 2 && K % 2 == 1 && stride >= 1, "conv1d: params");
    const int n = X.rows(), cin = X.cols();
    detail::require(W.rows() == K * cin, "conv1d: weight rows");
    const int cout = W.cols();
    const int pad = K / 2;
    const int out_n = (n + 2 * pad - K) / stride + 1;
    detail::require(out_n >= 1, "conv1d: empty output");

    auto col = std::make_shared<Tensor<T>>(std::vector<int>{out_n, K * cin});
    for (int o = 0; o < out_n; ++o) {
        const int start = o * stride - pad;
        for (int k = 0; k < K; ++k) {
            const int src = start + k;
            if (src < 0 || src >= n) continue;
            for (int c = 0; c < cin; ++c) (*col)(o, k * cin + c) = X(src, c);
        }
    }
    Tensor<T> out({out_n, cout});
    as_mat(out, out_n, cout).noalias() =
        as_mat(*col, out_n, K * cin) * as_mat(W, K * cin, cout);
    if (b >= 0) {
        const auto& B = tp.val(b);
        for (int o = 0; o < out_n; ++o)
            for (int c = 0; c < cout; ++c) out(o, c) += B[c];
    }
    const int id = tp.push(std::move(out), true);
    tp.set_back(id, [&tp, id, x, w, b, K, stride, n, cin, cout, out_n, pad, col] {
        const auto& g = tp.grad(id);
        auto G = as_mat(g, out_n, cout);
        if (tp.wants_grad(w))
            as_mat(tp.grad(w), K * cin, cout).noalias() +=
                as_mat(*col, out_n, K * cin).transpose() * G;
        if (b >= 0 && tp.wants_grad(b)) {
            auto& gb = tp.grad(b);
            for (int o = 0; o < out_n; ++o)
                for (int c = 0; c < cout; ++c) gb[c] += g(o, c);
        }
        if (tp.wants_grad(x)) {
            Tensor<T> dcol({out_n, K * cin});
            as_mat(dcol, out_n, K * cin).noalias() =
                G * as_mat(tp.val(w), K * cin, cout).transpose();
            auto& gx = tp.grad(x);
            for (int o = 0; o < out_n; ++o) {
                const int start = o * stride - pad;
                for (int k = 0; k < K; ++k) {
                    const int src = start + k;
                    if (src < 0 || src >= n) continue;
                    for (int c = 0; c < cin; ++c) gx(src, c) += dcol(o, k * cin + c);
                }
            }
        }
    });
    return id;
}

// img [H x W x Cin], w [(KH*KW*Cin) x Cout]; stride s, 'same'-style padding.
template <typename T>
int conv2d(Tape<T>& tp, int x, int w, int b, int KH, int KW, int stride) {
    const auto &X = tp.val(x), &W = tp.val(w);
    detail::require(X.rank() == 3 && KH % 2 == 1 && KW % 2 == 1 && stride >= 1, "conv2d: params");
    const int h = X.dim(0), wd = X.dim(1), cin = X.dim(2);
    detail::require(W.rows() == KH * KW * cin, "conv2d: weight rows");
    const int cout = W.cols();
    const int ph = KH / 2, pw = KW / 2;
    const int oh = (h + 2 * ph - KH) / stride + 1;
    const int ow = (wd + 2 * pw - KW) / stride + 1;
    detail::require(oh >= 1 && ow >= 1, "conv2d: empty output");

    auto col = std::make_shared<Tensor<T>>(std::vector<int>{oh * ow, KH * KW * cin});
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
            const int row = oy * ow + ox;
            const int sy = oy * stride - ph, sx = ox * stride - pw;
            for (int ky = 0; ky < KH; ++ky) {
                const int yy = sy + ky;
                if (yy < 0 || yy >= h) continue;
                for (int kx = 0; kx < KW; ++kx) {
                    const int xx = sx + kx;
                    if (xx < 0 || xx >= wd) continue;
                    for (int c = 0; c < cin; ++c)
                        (*col)(row, (ky * KW + kx) * cin + c) = X(yy, xx, c);
                }
            }
        }
    Tensor<T> out({oh, ow, cout});
    as_mat(out, oh * ow, cout).noalias() =
        as_mat(*col, oh * ow, KH * KW * cin) * as_mat(W, KH * KW * cin, cout);
    if (b >= 0) {
        const auto& B = tp.val(b);
        for (int r = 0; r < oh * ow; ++r)
            for (int c = 0; c < cout; ++c) out[static_cast<int64_t>(r) * cout + c] += B[c];
    }
    const int id = tp.push(std::move(out), true);
    tp.set_back(id, [&tp, id, x, w, b, KH, KW, stride, h, wd, cin, cout, oh, ow, ph, pw, col] {
        const auto& g = tp.grad(id);
        auto G = as_mat(g, oh * ow, cout);
        if (tp.wants_grad(w))
            as_mat(tp.grad(w), KH * KW * cin, cout).noalias() +=
                as_mat(*col, oh * ow, KH * KW * cin).transpose() * G;
        if (b >= 0 && tp.wants_grad(b)) {
            auto& gb = tp.grad(b);
            for (int r = 0; r < oh * ow; ++r)
                for (int c = 0; c < cout; ++c) gb[c] += g[static_cast<int64_t>(r) * cout + c];
        }
        if (tp.wants_grad(x)) {
            Tensor<T> dcol({oh * ow, KH * KW * cin});
            as_mat(dcol, oh * ow, KH * KW * cin).noalias() =
                G * as_mat(tp.val(w), KH * KW * cin, cout).transpose();
            auto& gx = tp.grad(x);
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    const int row = oy * ow + ox;
                    const int sy = oy * stride - ph, sx = ox * stride - pw;
                    for (int ky = 0; ky < KH; ++ky) {
                        const int yy = sy + ky;
                        if (yy < 0 || yy >= h) continue;
                        for (int kx = 0; kx < KW; ++kx) {
                            const int xx = sx + kx;
                            if (xx < 0 || xx >= wd) continue;
                            for (int c = 0; c < cin; ++c)
                                gx(yy, xx, c) += dcol(row, (ky * KW + kx) * cin + c);
                        }
                    }
                }
        }
    });
    return id;
}

// ---- embeddings and losses ----------------------------------------------

template <typename T>
int embedding(Tape<T>& tp, int table, const std::vector<int>& ids) {
    const auto& E = tp.val(table);
    detail::require(E.rank() == 2 && !ids.empty(), "embedding: args");
    const int d = E.cols(), L = static_cast<int>(ids.size());
    Tensor<T> out({L, d});
    for (int i = 0; i < L; ++i) {
        detail::require(ids[static_cast<size_t>(i)] >= 0 && ids[static_cast<size_t>(i)] < E.rows(),
                        "embedding: id out of range");
        for (int c = 0; c < d; ++c) out(i, c) = E(ids[static_cast<size_t>(i)], c);
    }
    const int id = tp.push(std::move(out), true);
    tp.set_back(id, [&tp, id, table, ids, d, L] {
        if (!tp.wants_grad(table)) return;
        auto& gt = tp.grad(table);
        const auto& g = tp.grad(id);
        for (int i = 0; i < L; ++i)
            for (int c = 0; c < d; ++c) gt(ids[static_cast<size_t>(i)], c) += g(i, c);
    });
    return id;
}

// mean over unmasked rows of the rowwise squared L2 error
template <typename T>
int mse_masked(Tape<T>& tp, int pred, Tensor<T> target, std::vector<uint8_t> mask) {
    const auto& P = tp.val(pred);
    detail::require(P.same_shape(target), "mse_masked: shape");
    detail::require(static_cast<int>(mask.size()) == P.rows(), "mse_masked: mask length");
    int kept = 0;
    for (uint8_t v : mask) kept += v;
    detail::require(kept > 0, "mse_masked: empty mask");
    double acc = 0;
    for (int r = 0; r < P.rows(); ++r) {
        if (!mask[static_cast<size_t>(r)]) continue;
        for (int c = 0; c < P.cols(); ++c) {
            const double d = static_cast<double>(P(r, c)) - static_cast<double>(target(r, c));
            acc += d * d;
        }
    }
    Tensor<T> out({1});
    out[0] = static_cast<T>(acc / kept);
    const int id = tp.push(std::move(out), true);
    tp.set_back(id, [&tp, id, pred, target = std::move(target), mask = std::move(mask), kept] {
        if (!tp.wants_grad(pred)) return;
        auto& gp = tp.grad(pred);
        const auto& P2 = tp.val(pred);
        const T g0 = tp.grad(id)[0];
        const T s = static_cast<T>(2.0 / kept) * g0;
        for (int r = 0; r < P2.rows(); ++r) {
            if (!mask[static_cast<size_t>(r)]) continue;
            for (int c = 0; c < P2.cols(); ++c) gp(r, c) += s * (P2(r, c) - target(r, c));
        }
    });
    return id;
}

// mean over unmasked rows of -y log p - (1-y) log(1-p); p must be in (0,1)
template <typename T>
int bce_masked(Tape<T>& tp, int probs, Tensor<T> targets, std::vector<uint8_t> mask) {
    const auto& P = tp.val(probs);
    detail::require(P.numel() == targets.numel(), "bce_masked: shape");
    detail::require(static_cast<int64_t>(mask.size()) == P.numel(), "bce_masked: mask length");
    int kept = 0;
    for (uint8_t v : mask) kept += v;
    detail::require(kept > 0, "bce_masked: empty mask");
    double acc = 0;
    for (int64_t i = 0; i < P.numel(); ++i) {
        if (!mask[static_cast<size_t>(i)]) continue;
        const double p = static_cast<double>(P[i]), y = static_cast<double>(targets[i]);
        acc += -y * std::log(p) - (1.0 - y) * std::log1p(-p);
    }
    Tensor<T> out({1});
    out[0] = static_cast<T>(acc / kept);
    const int id = tp.push(std::move(out), true);
    tp.set_back(id, [&tp, id, probs, targets = std::move(targets), mask = std::move(mask), kept] {
        if (!tp.wants_grad(probs)) return;
        auto& gp = tp.grad(probs);
        const auto& P2 = tp.val(probs);
        const double g0 = static_cast<double>(tp.grad(id)[0]);
        for (int64_t i = 0; i < P2.numel(); ++i) {
            if (!mask[static_cast<size_t>(i)]) continue;
            const double p = static_cast<double>(P2[i]), y = static_cast<double>(targets[i]);
            gp[i] += static_cast<T>(g0 * (p - y) / (p * (1.0 - p)) / kept);
        }
    });
    return id;
}

// sum of w_i * scalar_i
template <typename T>
int weighted_sum(Tape<T>& tp, const std::vector<std::pair<int, double>>& terms) {
    double acc = 0;
    for (const auto& [id, w] : terms) {
        detail::require(tp.val(id).numel() == 1, "weighted_sum: scalar terms only");
        acc += w * static_cast<double>(tp.val(id)[0]);
    }
    Tensor<T> out({1});
    out[0] = static_cast<T>(acc);
    const int id = tp.push(std::move(out), true);
    tp.set_back(id, [&tp, id, terms] {
        const T g0 = tp.grad(id)[0];
        for (const auto& [tid, w] : terms)
            if (tp.wants_grad(tid)) tp.grad(tid)[0] += static_cast<T>(w) * g0;
    });
    return id;
}

}  // namespace inkdiff::nn
