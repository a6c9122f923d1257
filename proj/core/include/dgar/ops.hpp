#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <vector>

#include "dgar/autodiff.hpp"

// The differentiable primitive set. Every op builds a graph node whose
// backprop closure scatters the output gradient into the op's inputs.
// Heavy inner products (conv1d, linear, matmul) go through Eigen GEMM;
// Eigen is single-threaded here, so results are reproducible for a fixed
// seed.

namespace dgar {

namespace detail {

template <class S>
using EMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using EMap = Eigen::Map<EMat<S>>;
template <class S>
using ECMap = Eigen::Map<const EMat<S>>;

// C(M x N) (+)= op(A) * op(B), row-major storage, K inner extent.
template <class S>
void gemm(S* c, int64_t m, int64_t n, int64_t k, const S* a, bool ta, const S* b, bool tb,
          bool accumulate) {
    EMap<S> C(c, m, n);
    ECMap<S> A(a, ta ? k : m, ta ? m : k);
    ECMap<S> B(b, tb ? n : k, tb ? k : n);
    if (!ta && !tb) {
        if (accumulate) C.noalias() += A * B; else C.noalias() = A * B;
    } else if (ta && !tb) {
        if (accumulate) C.noalias() += A.transpose() * B; else C.noalias() = A.transpose() * B;
    } else if (!ta && tb) {
        if (accumulate) C.noalias() += A * B.transpose(); else C.noalias() = A * B.transpose();
    } else {
        if (accumulate) C.noalias() += A.transpose() * B.transpose();
        else C.noalias() = A.transpose() * B.transpose();
    }
}

template <class S>
Var<S> make_unary(const char* op, const Var<S>& a, Tensor<S> value,
                  std::function<void(Node<S>*, Node<S>*)> back) {
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(value);
    n->op = op;
    n->parents = {a.node()};
    n->requires_grad = a.node()->requires_grad;
    if (n->requires_grad) {
        Node<S>* self = n.get();
        Node<S>* pa = a.node().get();
        n->backprop = [self, pa, back = std::move(back)]() { back(self, pa); };
    }
    return Var<S>(n);
}

template <class S>
Var<S> make_binary(const char* op, const Var<S>& a, const Var<S>& b, Tensor<S> value,
                   std::function<void(Node<S>*, Node<S>*, Node<S>*)> back) {
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(value);
    n->op = op;
    n->parents = {a.node(), b.node()};
    n->requires_grad = a.node()->requires_grad || b.node()->requires_grad;
    if (n->requires_grad) {
        Node<S>* self = n.get();
        Node<S>* pa = a.node().get();
        Node<S>* pb = b.node().get();
        n->backprop = [self, pa, pb, back = std::move(back)]() { back(self, pa, pb); };
    }
    return Var<S>(n);
}

template <class S>
void require_same_shape(const char* op, const Tensor<S>& a, const Tensor<S>& b) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
}

template <class S>
void require_rank(const char* op, const Tensor<S>& t, int rank) {
    if (t.rank() != rank)
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + t.shape_str());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <class S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
    detail::require_same_shape("add", a.value(), b.value());
    Tensor<S> out(a.value().shape());
    const S* pa = a.value().data();
    const S* pb = b.value().data();
    S* po = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] + pb[i];
    return detail::make_binary<S>("add", a, b, std::move(out), [](auto* self, auto* x, auto* y) {
        const auto& g = self->grad;
        if (x->requires_grad) {
            auto& gx = x->grad_buffer();
            for (int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
        }
        if (y->requires_grad) {
            auto& gy = y->grad_buffer();
            for (int64_t i = 0; i < g.numel(); ++i) gy[i] += g[i];
        }
    });
}

template <class S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
    detail::require_same_shape("sub", a.value(), b.value());
    Tensor<S> out(a.value().shape());
    const S* pa = a.value().data();
    const S* pb = b.value().data();
    S* po = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] - pb[i];
    return detail::make_binary<S>("sub", a, b, std::move(out), [](auto* self, auto* x, auto* y) {
        const auto& g = self->grad;
        if (x->requires_grad) {
            auto& gx = x->grad_buffer();
            for (int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
        }
        if (y->requires_grad) {
            auto& gy = y->grad_buffer();
            for (int64_t i = 0; i < g.numel(); ++i) gy[i] -= g[i];
        }
    });
}

template <class S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
    detail::require_same_shape("mul", a.value(), b.value());
    Tensor<S> out(a.value().shape());
    const S* pa = a.value().data();
    const S* pb = b.value().data();
    S* po = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] * pb[i];
    return detail::make_binary<S>("mul", a, b, std::move(out), [](auto* self, auto* x, auto* y) {
        const auto& g = self->grad;
        if (x->requires_grad) {
            auto& gx = x->grad_buffer();
            for (int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * y->value[i];
        }
        if (y->requires_grad) {
            auto& gy = y->grad_buffer();
            for (int64_t i = 0; i < g.numel(); ++i) gy[i] += g[i] * x->value[i];
        }
    });
}

template <class S>
Var<S> scale(const Var<S>& a, S c) {
    Tensor<S> out(a.value().shape());
    const S* pa = a.value().data();
    S* po = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] * c;
    return detail::make_unary<S>("scale", a, std::move(out), [c](auto* self, auto* x) {
        const auto& g = self->grad;
        auto& gx = x->grad_buffer();
        for (int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * c;
    });
}

template <class S>
Var<S> relu(const Var<S>& a) {
    Tensor<S> out(a.value().shape());
    const S* pa = a.value().data();
    S* po = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] > S(0) ? pa[i] : S(0);
    return detail::make_unary<S>("relu", a, std::move(out), [](auto* self, auto* x) {
        const auto& g = self->grad;
        auto& gx = x->grad_buffer();
        for (int64_t i = 0; i < g.numel(); ++i)
            if (x->value[i] > S(0)) gx[i] += g[i];
    });
}

template <class S>
Var<S> leaky_relu(const Var<S>& a, S slope = S(0.01)) {
    Tensor<S> out(a.value().shape());
    const S* pa = a.value().data();
    S* po = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] > S(0) ? pa[i] : slope * pa[i];
    return detail::make_unary<S>("leaky_relu", a, std::move(out), [slope](auto* self, auto* x) {
        const auto& g = self->grad;
        auto& gx = x->grad_buffer();
        for (int64_t i = 0; i < g.numel(); ++i) gx[i] += x->value[i] > S(0) ? g[i] : slope * g[i];
    });
}

template <class S>
Var<S> sigmoid(const Var<S>& a) {
    Tensor<S> out(a.value().shape());
    const S* pa = a.value().data();
    S* po = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) {
        S v = pa[i];
        po[i] = v >= S(0) ? S(1) / (S(1) + std::exp(-v)) : std::exp(v) / (S(1) + std::exp(v));
    }
    return detail::make_unary<S>("sigmoid", a, std::move(out), [](auto* self, auto* x) {
        const auto& g = self->grad;
        auto& gx = x->grad_buffer();
        for (int64_t i = 0; i < g.numel(); ++i) {
            S s = self->value[i];
            gx[i] += g[i] * s * (S(1) - s);
        }
    });
}

template <class S>
Var<S> tanh_op(const Var<S>& a) {
    Tensor<S> out(a.value().shape());
    const S* pa = a.value().data();
    S* po = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) po[i] = std::tanh(pa[i]);
    return detail::make_unary<S>("tanh", a, std::move(out), [](auto* self, auto* x) {
        const auto& g = self->grad;
        auto& gx = x->grad_buffer();
        for (int64_t i = 0; i < g.numel(); ++i) {
            S t = self->value[i];
            gx[i] += g[i] * (S(1) - t * t);
        }
    });
}

template <class S>
Var<S> exp_op(const Var<S>& a) {
    Tensor<S> out(a.value().shape());
    const S* pa = a.value().data();
    S* po = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) po[i] = std::exp(pa[i]);
    return detail::make_unary<S>("exp", a, std::move(out), [](auto* self, auto* x) {
        const auto& g = self->grad;
        auto& gx = x->grad_buffer();
        for (int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * self->value[i];
    });
}

template <class S>
Var<S> sqrt_op(const Var<S>& a) {
    Tensor<S> out(a.value().shape());
    const S* pa = a.value().data();
    S* po = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) po[i] = std::sqrt(pa[i]);
    return detail::make_unary<S>("sqrt", a, std::move(out), [](auto* self, auto* x) {
        const auto& g = self->grad;
        auto& gx = x->grad_buffer();
        // guarded at 0 so identical distributions do not emit NaN
        for (int64_t i = 0; i < g.numel(); ++i)
            gx[i] += g[i] / (S(2) * std::max(self->value[i], S(1e-12)));
    });
}

template <class S>
Var<S> softplus(const Var<S>& a) {
    Tensor<S> out(a.value().shape());
    const S* pa = a.value().data();
    S* po = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) {
        S v = pa[i];
        po[i] = v > S(30) ? v : std::log1p(std::exp(v));
    }
    return detail::make_unary<S>("softplus", a, std::move(out), [](auto* self, auto* x) {
        const auto& g = self->grad;
        auto& gx = x->grad_buffer();
        for (int64_t i = 0; i < g.numel(); ++i) {
            S v = x->value[i];
            S s = v >= S(0) ? S(1) / (S(1) + std::exp(-v)) : std::exp(v) / (S(1) + std::exp(v));
            gx[i] += g[i] * s;
        }
    });
}

template <class S>
Var<S> powi(const Var<S>& a, int n) {
    if (n < 1) throw NumericError("powi: exponent must be >= 1");
    Tensor<S> out(a.value().shape());
    const S* pa = a.value().data();
    S* po = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) {
        S v = pa[i], r = v;
        for (int j = 1; j < n; ++j) r *= v;
        po[i] = r;
    }
    return detail::make_unary<S>("powi", a, std::move(out), [n](auto* self, auto* x) {
        const auto& g = self->grad;
        auto& gx = x->grad_buffer();
        for (int64_t i = 0; i < g.numel(); ++i) {
            S v = x->value[i], r = S(1);
            for (int j = 1; j < n; ++j) r *= v;
            gx[i] += g[i] * S(n) * r;
        }
    });
}

template <class S>
Var<S> reshape(const Var<S>& a, std::vector<int64_t> shape) {
    Tensor<S> out = Tensor<S>::from(std::move(shape), a.value().vec());
    if (out.numel() != a.value().numel())
        throw ShapeError("reshape: numel mismatch " + a.value().shape_str() + " -> " +
                         out.shape_str());
    return detail::make_unary<S>("reshape", a, std::move(out), [](auto* self, auto* x) {
        const auto& g = self->grad;
        auto& gx = x->grad_buffer();
        for (int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
    });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <class S>
Var<S> sum_all(const Var<S>& a) {
    S acc = 0;
    for (int64_t i = 0; i < a.value().numel(); ++i) acc += a.value()[i];
    return detail::make_unary<S>("sum_all", a, Tensor<S>::scalar(acc), [](auto* self, auto* x) {
        S g = self->grad[0];
        auto& gx = x->grad_buffer();
        for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
    });
}

template <class S>
Var<S> mean_all(const Var<S>& a) {
    int64_t n = a.value().numel();
    if (n == 0) throw ShapeError("mean_all: empty tensor");
    S acc = 0;
    for (int64_t i = 0; i < n; ++i) acc += a.value()[i];
    acc /= S(n);
    return detail::make_unary<S>("mean_all", a, Tensor<S>::scalar(acc), [n](auto* self, auto* x) {
        S g = self->grad[0] / S(n);
        auto& gx = x->grad_buffer();
        for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
    });
}

// Sum of squares of all entries: squared Frobenius norm for matrices,
// squared L2 norm for vectors.
template <class S>
Var<S> sumsq(const Var<S>& a) {
    S acc = 0;
    for (int64_t i = 0; i < a.value().numel(); ++i) acc += a.value()[i] * a.value()[i];
    return detail::make_unary<S>("sumsq", a, Tensor<S>::scalar(acc), [](auto* self, auto* x) {
        S g = self->grad[0];
        auto& gx = x->grad_buffer();
        for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += S(2) * x->value[i] * g;
    });
}

// Sum/mean over one axis of a 2-D tensor.
template <class S>
Var<S> sum_axis(const Var<S>& a, int axis) {
    detail::require_rank("sum_axis", a.value(), 2);
    int64_t r = a.value().dim(0), c = a.value().dim(1);
    if (axis == 0) {
        Tensor<S> out({c});
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j) out[j] += a.value().at(i, j);
        return detail::make_unary<S>("sum_axis0", a, std::move(out), [r, c](auto* self, auto* x) {
            auto& gx = x->grad_buffer();
            for (int64_t i = 0; i < r; ++i)
                for (int64_t j = 0; j < c; ++j) gx[i * c + j] += self->grad[j];
        });
    }
    if (axis == 1) {
        Tensor<S> out({r});
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j) out[i] += a.value().at(i, j);
        return detail::make_unary<S>("sum_axis1", a, std::move(out), [r, c](auto* self, auto* x) {
            auto& gx = x->grad_buffer();
            for (int64_t i = 0; i < r; ++i)
                for (int64_t j = 0; j < c; ++j) gx[i * c + j] += self->grad[i];
        });
    }
    throw ShapeError("sum_axis: axis must be 0 or 1");
}

template <class S>
Var<S> mean_axis(const Var<S>& a, int axis) {
    int64_t n = a.value().dim(axis);
    if (n == 0) throw ShapeError("mean_axis: empty axis");
    return scale(sum_axis(a, axis), S(1) / S(n));
}

// Mean over rows: B x d -> d.
template <class S>
Var<S> mean_rows(const Var<S>& a) {
    return mean_axis(a, 0);
}

// ---------------------------------------------------------------------------
// matrix / broadcast ops
// ---------------------------------------------------------------------------

template <class S>
Var<S> matmul(const Var<S>& a, const Var<S>& b, bool ta = false, bool tb = false) {
    detail::require_rank("matmul", a.value(), 2);
    detail::require_rank("matmul", b.value(), 2);
    int64_t m = ta ? a.value().dim(1) : a.value().dim(0);
    int64_t ka = ta ? a.value().dim(0) : a.value().dim(1);
    int64_t kb = tb ? b.value().dim(1) : b.value().dim(0);
    int64_t n = tb ? b.value().dim(0) : b.value().dim(1);
    if (ka != kb)
        throw ShapeError("matmul: inner extents differ, " + a.value().shape_str() + " vs " +
                         b.value().shape_str());
    Tensor<S> out({m, n});
    detail::gemm(out.data(), m, n, ka, a.value().data(), ta, b.value().data(), tb, false);
    return detail::make_binary<S>(
        "matmul", a, b, std::move(out), [m, n, k = ka, ta, tb](auto* self, auto* x, auto* y) {
            const S* g = self->grad.data();
            if (x->requires_grad) {
                auto& gx = x->grad_buffer();
                if (!ta)
                    detail::gemm(gx.data(), m, k, n, g, false, y->value.data(), !tb, true);
                else
                    detail::gemm(gx.data(), k, m, n, y->value.data(), tb, g, true, true);
            }
            if (y->requires_grad) {
                auto& gy = y->grad_buffer();
                if (!tb)
                    detail::gemm(gy.data(), k, n, m, x->value.data(), !ta, g, false, true);
                else
                    detail::gemm(gy.data(), n, k, m, g, true, x->value.data(), ta, true);
            }
        });
}

// Affine map: x (B x in) * w^T (in x out) + bias. Weight stored out x in.
template <class S>
Var<S> linear(const Var<S>& x, const Var<S>& w, const Var<S>& b) {
    detail::require_rank("linear", x.value(), 2);
    detail::require_rank("linear", w.value(), 2);
    int64_t bs = x.value().dim(0), in = x.value().dim(1);
    int64_t out_dim = w.value().dim(0);
    if (w.value().dim(1) != in)
        throw ShapeError("linear: weight " + w.value().shape_str() + " does not match input " +
                         x.value().shape_str());
    if (b.value().numel() != out_dim)
        throw ShapeError("linear: bias " + b.value().shape_str() + " does not match out dim " +
                         std::to_string(out_dim));
    Tensor<S> out({bs, out_dim});
    detail::gemm(out.data(), bs, out_dim, in, x.value().data(), false, w.value().data(), true,
                 false);
    for (int64_t i = 0; i < bs; ++i)
        for (int64_t j = 0; j < out_dim; ++j) out.at(i, j) += b.value()[j];

    auto n = std::make_shared<Node<S>>();
    n->value = std::move(out);
    n->op = "linear";
    n->parents = {x.node(), w.node(), b.node()};
    n->requires_grad =
        x.node()->requires_grad || w.node()->requires_grad || b.node()->requires_grad;
    if (n->requires_grad) {
        Node<S>* self = n.get();
        Node<S>* px = x.node().get();
        Node<S>* pw = w.node().get();
        Node<S>* pb = b.node().get();
        n->backprop = [self, px, pw, pb, bs, in, out_dim]() {
            const S* g = self->grad.data();
            if (px->requires_grad)
                detail::gemm(px->grad_buffer().data(), bs, in, out_dim, g, false,
                             pw->value.data(), false, true);
            if (pw->requires_grad)
                detail::gemm(pw->grad_buffer().data(), out_dim, in, bs, g, true,
                             px->value.data(), false, true);
            if (pb->requires_grad) {
                auto& gb = pb->grad_buffer();
                for (int64_t i = 0; i < bs; ++i)
                    for (int64_t j = 0; j < out_dim; ++j) gb[j] += g[i * out_dim + j];
            }
        };
    }
    return Var<S>(n);
}

// x (B x d) - v (d), broadcast over rows.
template <class S>
Var<S> sub_rowvec(const Var<S>& x, const Var<S>& v) {
    detail::require_rank("sub_rowvec", x.value(), 2);
    int64_t bs = x.value().dim(0), d = x.value().dim(1);
    if (v.value().numel() != d)
        throw ShapeError("sub_rowvec: vector " + v.value().shape_str() + " vs matrix " +
                         x.value().shape_str());
    Tensor<S> out({bs, d});
    for (int64_t i = 0; i < bs; ++i)
        for (int64_t j = 0; j < d; ++j) out.at(i, j) = x.value().at(i, j) - v.value()[j];
    return detail::make_binary<S>("sub_rowvec", x, v, std::move(out),
                                  [bs, d](auto* self, auto* px, auto* pv) {
                                      const S* g = self->grad.data();
                                      if (px->requires_grad) {
                                          auto& gx = px->grad_buffer();
                                          for (int64_t i = 0; i < bs * d; ++i) gx[i] += g[i];
                                      }
                                      if (pv->requires_grad) {
                                          auto& gv = pv->grad_buffer();
                                          for (int64_t i = 0; i < bs; ++i)
                                              for (int64_t j = 0; j < d; ++j) gv[j] -= g[i * d + j];
                                      }
                                  });
}

// Row-wise scaling: y[i, :] = x[i, :] * s[i], s of shape (B) or (B x 1).
template <class S>
Var<S> scale_rows(const Var<S>& x, const Var<S>& s) {
    detail::require_rank("scale_rows", x.value(), 2);
    int64_t bs = x.value().dim(0), d = x.value().dim(1);
    if (s.value().numel() != bs)
        throw ShapeError("scale_rows: scale " + s.value().shape_str() + " vs matrix " +
                         x.value().shape_str());
    Tensor<S> out({bs, d});
    for (int64_t i = 0; i < bs; ++i)
        for (int64_t j = 0; j < d; ++j) out.at(i, j) = x.value().at(i, j) * s.value()[i];
    return detail::make_binary<S>(
        "scale_rows", x, s, std::move(out), [bs, d](auto* self, auto* px, auto* ps) {
            const S* g = self->grad.data();
            if (px->requires_grad) {
                auto& gx = px->grad_buffer();
                for (int64_t i = 0; i < bs; ++i)
                    for (int64_t j = 0; j < d; ++j) gx[i * d + j] += g[i * d + j] * ps->value[i];
            }
            if (ps->requires_grad) {
                auto& gs = ps->grad_buffer();
                for (int64_t i = 0; i < bs; ++i) {
                    S acc = 0;
                    for (int64_t j = 0; j < d; ++j) acc += g[i * d + j] * px->value[i * d + j];
                    gs[i] += acc;
                }
            }
        });
}

// Channel gating: u (B x C x L) * g (B x C), broadcast over L.
template <class S>
Var<S> channel_scale(const Var<S>& u, const Var<S>& gate) {
    detail::require_rank("channel_scale", u.value(), 3);
    detail::require_rank("channel_scale", gate.value(), 2);
    int64_t bs = u.value().dim(0), ch = u.value().dim(1), len = u.value().dim(2);
    if (gate.value().dim(0) != bs || gate.value().dim(1) != ch)
        throw ShapeError("channel_scale: gate " + gate.value().shape_str() + " vs input " +
                         u.value().shape_str());
    Tensor<S> out({bs, ch, len});
    for (int64_t b = 0; b < bs; ++b)
        for (int64_t c = 0; c < ch; ++c) {
            S gv = gate.value().at(b, c);
            for (int64_t l = 0; l < len; ++l) out.at(b, c, l) = u.value().at(b, c, l) * gv;
        }
    return detail::make_binary<S>(
        "channel_scale", u, gate, std::move(out), [bs, ch, len](auto* self, auto* pu, auto* pg) {
            const auto& g = self->grad;
            if (pu->requires_grad) {
                auto& gu = pu->grad_buffer();
                for (int64_t b = 0; b < bs; ++b)
                    for (int64_t c = 0; c < ch; ++c) {
                        S gv = pg->value[b * ch + c];
                        for (int64_t l = 0; l < len; ++l) {
                            int64_t idx = (b * ch + c) * len + l;
                            gu[idx] += g[idx] * gv;
                        }
                    }
            }
            if (pg->requires_grad) {
                auto& gg = pg->grad_buffer();
                for (int64_t b = 0; b < bs; ++b)
                    for (int64_t c = 0; c < ch; ++c) {
                        S acc = 0;
                        for (int64_t l = 0; l < len; ++l) {
                            int64_t idx = (b * ch + c) * len + l;
                            acc += g[idx] * pu->value[idx];
                        }
                        gg[b * ch + c] += acc;
                    }
            }
        });
}

// Column j of a 2-D tensor as a vector of length B.
template <class S>
Var<S> slice_col(const Var<S>& x, int64_t j) {
    detail::require_rank("slice_col", x.value(), 2);
    int64_t bs = x.value().dim(0), d = x.value().dim(1);
    if (j < 0 || j >= d)
        throw ShapeError("slice_col: column " + std::to_string(j) + " out of " +
                         std::to_string(d));
    Tensor<S> out({bs});
    for (int64_t i = 0; i < bs; ++i) out[i] = x.value().at(i, j);
    return detail::make_unary<S>("slice_col", x, std::move(out), [j, d](auto* self, auto* px) {
        const auto& g = self->grad;
        auto& gx = px->grad_buffer();
        for (int64_t i = 0; i < g.numel(); ++i) gx[i * d + j] += g[i];
    });
}

// Contiguous row range [r0, r1) of a 2-D tensor.
template <class S>
Var<S> slice_rows(const Var<S>& x, int64_t r0, int64_t r1) {
    detail::require_rank("slice_rows", x.value(), 2);
    int64_t bs = x.value().dim(0), d = x.value().dim(1);
    if (r0 < 0 || r1 > bs || r0 >= r1)
        throw ShapeError("slice_rows: range [" + std::to_string(r0) + ", " + std::to_string(r1) +
                         ") out of " + std::to_string(bs) + " rows");
    Tensor<S> out({r1 - r0, d});
    std::copy(x.value().data() + r0 * d, x.value().data() + r1 * d, out.data());
    return detail::make_unary<S>("slice_rows", x, std::move(out), [r0, d](auto* self, auto* px) {
        const auto& g = self->grad;
        auto& gx = px->grad_buffer();
        for (int64_t i = 0; i < g.numel(); ++i) gx[r0 * d + i] += g[i];
    });
}

// Horizontal concatenation of K column vectors (B x 1) into B x K.
template <class S>
Var<S> concat_cols(const std::vector<Var<S>>& cols) {
    if (cols.empty()) throw ShapeError("concat_cols: no inputs");
    int64_t bs = cols[0].value().dim(0);
    int64_t k = static_cast<int64_t>(cols.size());
    for (const auto& c : cols)
        if (c.value().rank() != 2 || c.value().dim(1) != 1 || c.value().dim(0) != bs)
            throw ShapeError("concat_cols: expected B x 1 columns, got " + c.value().shape_str());
    Tensor<S> out({bs, k});
    for (int64_t j = 0; j < k; ++j)
        for (int64_t i = 0; i < bs; ++i) out.at(i, j) = cols[static_cast<size_t>(j)].value()[i];

    auto n = std::make_shared<Node<S>>();
    n->value = std::move(out);
    n->op = "concat_cols";
    n->requires_grad = false;
    for (const auto& c : cols) {
        n->parents.push_back(c.node());
        n->requires_grad = n->requires_grad || c.node()->requires_grad;
    }
    if (n->requires_grad) {
        Node<S>* self = n.get();
        std::vector<Node<S>*> ps;
        for (const auto& c : cols) ps.push_back(c.node().get());
        n->backprop = [self, ps, bs, k]() {
            const auto& g = self->grad;
            for (int64_t j = 0; j < k; ++j) {
                Node<S>* p = ps[static_cast<size_t>(j)];
                if (!p->requires_grad) continue;
                auto& gp = p->grad_buffer();
                for (int64_t i = 0; i < bs; ++i) gp[i] += g[i * k + j];
            }
        };
    }
    return Var<S>(n);
}

// ---------------------------------------------------------------------------
// neural-net ops
// ---------------------------------------------------------------------------

// 1-D convolution, stride 1. x: B x Cin x L, w: Cout x Cin x k, bias
// optional (undefined Var skips it). Uses im2col + one GEMM per call.
template <class S>
Var<S> conv1d(const Var<S>& x, const Var<S>& w, const Var<S>& bias, int64_t pad) {
    detail::require_rank("conv1d", x.value(), 3);
    detail::require_rank("conv1d", w.value(), 3);
    int64_t bs = x.value().dim(0), cin = x.value().dim(1), len = x.value().dim(2);
    int64_t cout = w.value().dim(0), k = w.value().dim(2);
    if (w.value().dim(1) != cin)
        throw ShapeError("conv1d: weight " + w.value().shape_str() + " does not match input " +
                         x.value().shape_str());
    int64_t lout = len + 2 * pad - k + 1;
    if (lout < 1) throw ShapeError("conv1d: output length would be " + std::to_string(lout));
    bool has_bias = bias.defined();
    if (has_bias && bias.value().numel() != cout)
        throw ShapeError("conv1d: bias " + bias.value().shape_str() + " vs Cout " +
                         std::to_string(cout));

    // col: (Cin*k) x (B*Lout), columns grouped per sample
    auto col = std::make_shared<Tensor<S>>(std::vector<int64_t>{cin * k, bs * lout});
    {
        S* pc = col->data();
        const S* px = x.value().data();
        for (int64_t ci = 0; ci < cin; ++ci)
            for (int64_t kk = 0; kk < k; ++kk) {
                S* row = pc + (ci * k + kk) * (bs * lout);
                for (int64_t b = 0; b < bs; ++b) {
                    const S* xrow = px + (b * cin + ci) * len;
                    S* dst = row + b * lout;
                    for (int64_t l = 0; l < lout; ++l) {
                        int64_t src = l + kk - pad;
                        dst[l] = (src >= 0 && src < len) ? xrow[src] : S(0);
                    }
                }
            }
    }
    Tensor<S> flat({cout, bs * lout});
    detail::gemm(flat.data(), cout, bs * lout, cin * k, w.value().data(), false, col->data(),
                 false, false);
    Tensor<S> out({bs, cout, lout});
    for (int64_t co = 0; co < cout; ++co) {
        S b_add = has_bias ? bias.value()[co] : S(0);
        for (int64_t b = 0; b < bs; ++b) {
            const S* src = flat.data() + co * (bs * lout) + b * lout;
            S* dst = out.data() + (b * cout + co) * lout;
            for (int64_t l = 0; l < lout; ++l) dst[l] = src[l] + b_add;
        }
    }

    auto n = std::make_shared<Node<S>>();
    n->value = std::move(out);
    n->op = "conv1d";
    n->parents = {x.node(), w.node()};
    if (has_bias) n->parents.push_back(bias.node());
    n->requires_grad = x.node()->requires_grad || w.node()->requires_grad ||
                       (has_bias && bias.node()->requires_grad);
    if (n->requires_grad) {
        Node<S>* self = n.get();
        Node<S>* px = x.node().get();
        Node<S>* pw = w.node().get();
        Node<S>* pb = has_bias ? bias.node().get() : nullptr;
        n->backprop = [self, px, pw, pb, col, bs, cin, len, cout, k, lout, pad]() {
            // regroup grad into (Cout x B*Lout)
            Tensor<S> gflat({cout, bs * lout});
            for (int64_t co = 0; co < cout; ++co)
                for (int64_t b = 0; b < bs; ++b) {
                    const S* src = self->grad.data() + (b * cout + co) * lout;
                    S* dst = gflat.data() + co * (bs * lout) + b * lout;
                    std::copy(src, src + lout, dst);
                }
            if (pw->requires_grad)
                detail::gemm(pw->grad_buffer().data(), cout, cin * k, bs * lout, gflat.data(),
                             false, col->data(), true, true);
            if (pb && pb->requires_grad) {
                auto& gb = pb->grad_buffer();
                for (int64_t co = 0; co < cout; ++co) {
                    S acc = 0;
                    const S* row = gflat.data() + co * (bs * lout);
                    for (int64_t i = 0; i < bs * lout; ++i) acc += row[i];
                    gb[co] += acc;
                }
            }
            if (px->requires_grad) {
                Tensor<S> gcol({cin * k, bs * lout});
                detail::gemm(gcol.data(), cin * k, bs * lout, cout, pw->value.data(), true,
                             gflat.data(), false, false);
                auto& gx = px->grad_buffer();
                for (int64_t ci = 0; ci < cin; ++ci)
                    for (int64_t kk = 0; kk < k; ++kk) {
                        const S* row = gcol.data() + (ci * k + kk) * (bs * lout);
                        for (int64_t b = 0; b < bs; ++b) {
                            S* xrow = gx.data() + (b * cin + ci) * len;
                            const S* src = row + b * lout;
                            for (int64_t l = 0; l < lout; ++l) {
                                int64_t dst = l + kk - pad;
                                if (dst >= 0 && dst < len) xrow[dst] += src[l];
                            }
                        }
                    }
            }
        };
    }
    return Var<S>(n);
}

// Running statistics owned by a batch-norm layer.
template <class S>
struct BatchNormBuffers {
    Tensor<S> running_mean;
    Tensor<S> running_var;

    explicit BatchNormBuffers(int64_t channels = 0)
        : running_mean({channels}), running_var({channels}) {
        running_var.fill(S(1));
    }
};

// Batch normalization over (B, L) per channel of a B x C x L tensor.
// Train mode normalizes by batch statistics and updates the running
// buffers; eval mode is a deterministic affine map of the running stats.
template <class S>
Var<S> batchnorm1d(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta,
                   BatchNormBuffers<S>& buffers, bool train, S momentum = S(0.1),
                   S eps = S(1e-5)) {
    detail::require_rank("batchnorm1d", x.value(), 3);
    int64_t bs = x.value().dim(0), ch = x.value().dim(1), len = x.value().dim(2);
    if (gamma.value().numel() != ch || beta.value().numel() != ch ||
        buffers.running_mean.numel() != ch)
        throw ShapeError("batchnorm1d: parameter size does not match " +
                         std::to_string(ch) + " channels");
    int64_t n_per_ch = bs * len;
    if (train && n_per_ch < 2) throw ShapeError("batchnorm1d: need >= 2 values per channel");

    auto xhat = std::make_shared<Tensor<S>>(std::vector<int64_t>{bs, ch, len});
    auto invstd = std::make_shared<Tensor<S>>(std::vector<int64_t>{ch});
    Tensor<S> out({bs, ch, len});

    for (int64_t c = 0; c < ch; ++c) {
        S mean, var;
        if (train) {
            S acc = 0;
            for (int64_t b = 0; b < bs; ++b) {
                const S* row = x.value().data() + (b * ch + c) * len;
                for (int64_t l = 0; l < len; ++l) acc += row[l];
            }
            mean = acc / S(n_per_ch);
            S vacc = 0;
            for (int64_t b = 0; b < bs; ++b) {
                const S* row = x.value().data() + (b * ch + c) * len;
                for (int64_t l = 0; l < len; ++l) {
                    S d = row[l] - mean;
                    vacc += d * d;
                }
            }
            var = vacc / S(n_per_ch);  // biased, used for normalization
            S var_unbiased = vacc / S(n_per_ch - 1);
            buffers.running_mean[c] = (S(1) - momentum) * buffers.running_mean[c] + momentum * mean;
            buffers.running_var[c] =
                (S(1) - momentum) * buffers.running_var[c] + momentum * var_unbiased;
        } else {
            mean = buffers.running_mean[c];
            var = buffers.running_var[c];
        }
        S is = S(1) / std::sqrt(var + eps);
        (*invstd)[c] = is;
        S g = gamma.value()[c], b_ = beta.value()[c];
        for (int64_t b = 0; b < bs; ++b) {
            const S* row = x.value().data() + (b * ch + c) * len;
            S* xh = xhat->data() + (b * ch + c) * len;
            S* o = out.data() + (b * ch + c) * len;
            for (int64_t l = 0; l < len; ++l) {
                xh[l] = (row[l] - mean) * is;
                o[l] = g * xh[l] + b_;
            }
        }
    }

    auto n = std::make_shared<Node<S>>();
    n->value = std::move(out);
    n->op = "batchnorm1d";
    n->parents = {x.node(), gamma.node(), beta.node()};
    n->requires_grad =
        x.node()->requires_grad || gamma.node()->requires_grad || beta.node()->requires_grad;
    if (n->requires_grad) {
        Node<S>* self = n.get();
        Node<S>* px = x.node().get();
        Node<S>* pg = gamma.node().get();
        Node<S>* pbta = beta.node().get();
        n->backprop = [self, px, pg, pbta, xhat, invstd, bs, ch, len, n_per_ch, train]() {
            const auto& g = self->grad;
            for (int64_t c = 0; c < ch; ++c) {
                S gam = pg->value[c];
                S is = (*invstd)[c];
                S sum_g = 0, sum_gx = 0;
                for (int64_t b = 0; b < bs; ++b) {
                    const S* gr = g.data() + (b * ch + c) * len;
                    const S* xh = xhat->data() + (b * ch + c) * len;
                    for (int64_t l = 0; l < len; ++l) {
                        sum_g += gr[l];
                        sum_gx += gr[l] * xh[l];
                    }
                }
                if (pg->requires_grad) pg->grad_buffer()[c] += sum_gx;
                if (pbta->requires_grad) pbta->grad_buffer()[c] += sum_g;
                if (px->requires_grad) {
                    auto& gx = px->grad_buffer();
                    if (train) {
                        S inv_n = S(1) / S(n_per_ch);
                        for (int64_t b = 0; b < bs; ++b) {
                            const S* gr = g.data() + (b * ch + c) * len;
                            const S* xh = xhat->data() + (b * ch + c) * len;
                            S* gxr = gx.data() + (b * ch + c) * len;
                            for (int64_t l = 0; l < len; ++l)
                                gxr[l] += gam * is * (gr[l] - inv_n * sum_g - xh[l] * inv_n * sum_gx);
                        }
                    } else {
                        for (int64_t b = 0; b < bs; ++b) {
                            const S* gr = g.data() + (b * ch + c) * len;
                            S* gxr = gx.data() + (b * ch + c) * len;
                            for (int64_t l = 0; l < len; ++l) gxr[l] += gam * is * gr[l];
                        }
                    }
                }
            }
        };
    }
    return Var<S>(n);
}

// Max pooling, window 2, stride 2. Requires even L.
template <class S>
Var<S> maxpool1d(const Var<S>& x) {
    detail::require_rank("maxpool1d", x.value(), 3);
    int64_t bs = x.value().dim(0), ch = x.value().dim(1), len = x.value().dim(2);
    if (len % 2 != 0)
        throw ShapeError("maxpool1d: length " + std::to_string(len) + " not divisible by 2");
    int64_t lout = len / 2;
    Tensor<S> out({bs, ch, lout});
    auto arg = std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(bs * ch * lout));
    for (int64_t bc = 0; bc < bs * ch; ++bc) {
        const S* row = x.value().data() + bc * len;
        S* o = out.data() + bc * lout;
        uint8_t* am = arg->data() + bc * lout;
        for (int64_t l = 0; l < lout; ++l) {
            S a = row[2 * l], b = row[2 * l + 1];
            if (a >= b) {
                o[l] = a;
                am[l] = 0;
            } else {
                o[l] = b;
                am[l] = 1;
            }
        }
    }
    return detail::make_unary<S>("maxpool1d", x, std::move(out),
                                 [arg, bs, ch, len, lout](auto* self, auto* px) {
                                     const auto& g = self->grad;
                                     auto& gx = px->grad_buffer();
                                     for (int64_t bc = 0; bc < bs * ch; ++bc) {
                                         S* gxr = gx.data() + bc * len;
                                         const S* gr = g.data() + bc * lout;
                                         const uint8_t* am = arg->data() + bc * lout;
                                         for (int64_t l = 0; l < lout; ++l)
                                             gxr[2 * l + am[l]] += gr[l];
                                     }
                                 });
}

// Global average pooling: B x C x L -> B x C.
template <class S>
Var<S> global_avg_pool(const Var<S>& x) {
    detail::require_rank("global_avg_pool", x.value(), 3);
    int64_t bs = x.value().dim(0), ch = x.value().dim(1), len = x.value().dim(2);
    Tensor<S> out({bs, ch});
    for (int64_t bc = 0; bc < bs * ch; ++bc) {
        const S* row = x.value().data() + bc * len;
        S acc = 0;
        for (int64_t l = 0; l < len; ++l) acc += row[l];
        out[bc] = acc / S(len);
    }
    return detail::make_unary<S>("global_avg_pool", x, std::move(out),
                                 [len](auto* self, auto* px) {
                                     const auto& g = self->grad;
                                     auto& gx = px->grad_buffer();
                                     for (int64_t bc = 0; bc < g.numel(); ++bc) {
                                         S gv = g[bc] / S(len);
                                         S* gxr = gx.data() + bc * len;
                                         for (int64_t l = 0; l < len; ++l) gxr[l] += gv;
                                     }
                                 });
}

// Softmax over the last axis.
template <class S>
Var<S> softmax(const Var<S>& x) {
    if (x.value().rank() < 1) throw ShapeError("softmax: rank-0 input");
    int64_t d = x.value().dim(x.value().rank() - 1);
    int64_t rows = x.value().numel() / d;
    Tensor<S> out(x.value().shape());
    for (int64_t r = 0; r < rows; ++r) {
        const S* xi = x.value().data() + r * d;
        S* o = out.data() + r * d;
        S mx = xi[0];
        for (int64_t j = 1; j < d; ++j) mx = std::max(mx, xi[j]);
        S sum = 0;
        for (int64_t j = 0; j < d; ++j) {
            o[j] = std::exp(xi[j] - mx);
            sum += o[j];
        }
        for (int64_t j = 0; j < d; ++j) o[j] /= sum;
    }
    return detail::make_unary<S>("softmax", x, std::move(out), [d, rows](auto* self, auto* px) {
        const auto& g = self->grad;
        auto& gx = px->grad_buffer();
        for (int64_t r = 0; r < rows; ++r) {
            const S* y = self->value.data() + r * d;
            const S* gr = g.data() + r * d;
            S dot = 0;
            for (int64_t j = 0; j < d; ++j) dot += gr[j] * y[j];
            S* gxr = gx.data() + r * d;
            for (int64_t j = 0; j < d; ++j) gxr[j] += y[j] * (gr[j] - dot);
        }
    });
}

// Mean cross-entropy from logits. Labels are 0-based class indices.
template <class S>
Var<S> cross_entropy_logits(const Var<S>& logits, std::vector<int> labels) {
    detail::require_rank("cross_entropy", logits.value(), 2);
    int64_t bs = logits.value().dim(0), c = logits.value().dim(1);
    if (static_cast<int64_t>(labels.size()) != bs)
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                         std::to_string(bs));
    for (int y : labels)
        if (y < 0 || y >= c)
            throw DataError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                            std::to_string(c) + ")");
    auto probs = std::make_shared<Tensor<S>>(std::vector<int64_t>{bs, c});
    S loss = 0;
    for (int64_t i = 0; i < bs; ++i) {
        const S* row = logits.value().data() + i * c;
        S mx = row[0];
        for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        S sum = 0;
        for (int64_t j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
        S lse = mx + std::log(sum);
        loss += lse - row[labels[static_cast<size_t>(i)]];
        S* p = probs->data() + i * c;
        for (int64_t j = 0; j < c; ++j) p[j] = std::exp(row[j] - lse);
    }
    loss /= S(bs);
    return detail::make_unary<S>(
        "cross_entropy", logits, Tensor<S>::scalar(loss),
        [probs, labels = std::move(labels), bs, c](auto* self, auto* px) {
            S g = self->grad[0] / S(bs);
            auto& gx = px->grad_buffer();
            for (int64_t i = 0; i < bs; ++i) {
                const S* p = probs->data() + i * c;
                S* gxr = gx.data() + i * c;
                for (int64_t j = 0; j < c; ++j) gxr[j] += g * p[j];
                gxr[labels[static_cast<size_t>(i)]] -= g;
            }
        });
}

// ---------------------------------------------------------------------------
// statistics ops
// ---------------------------------------------------------------------------

// Squared L2 distance between same-shaped tensors.
template <class S>
Var<S> sqdist(const Var<S>& a, const Var<S>& b) {
    return sumsq(sub(a, b));
}

// Unbiased sample covariance of row-major features h (n x d) -> d x d.
template <class S>
Var<S> batch_covariance(const Var<S>& h) {
    detail::require_rank("batch_covariance", h.value(), 2);
    int64_t n = h.value().dim(0);
    if (n < 2)
        throw ShapeError("batch_covariance: need >= 2 samples, got " + std::to_string(n));
    Var<S> centered = sub_rowvec(h, mean_rows(h));
    return scale(matmul(centered, centered, true, false), S(1) / S(n - 1));
}

// Pairwise squared distances: a (n x d), b (m x d) -> n x m.
template <class S>
Var<S> pairwise_sqdist(const Var<S>& a, const Var<S>& b) {
    detail::require_rank("pairwise_sqdist", a.value(), 2);
    detail::require_rank("pairwise_sqdist", b.value(), 2);
    int64_t n = a.value().dim(0), d = a.value().dim(1), m = b.value().dim(0);
    if (b.value().dim(1) != d)
        throw ShapeError("pairwise_sqdist: feature dims differ, " + a.value().shape_str() +
                         " vs " + b.value().shape_str());
    Tensor<S> out({n, m});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < m; ++j) {
            const S* ai = a.value().data() + i * d;
            const S* bj = b.value().data() + j * d;
            S acc = 0;
            for (int64_t t = 0; t < d; ++t) {
                S df = ai[t] - bj[t];
                acc += df * df;
            }
            out.at(i, j) = acc;
        }
    return detail::make_binary<S>(
        "pairwise_sqdist", a, b, std::move(out), [n, m, d](auto* self, auto* pa, auto* pb) {
            const auto& g = self->grad;
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < m; ++j) {
                    S gv = S(2) * g[i * m + j];
                    if (gv == S(0)) continue;
                    const S* ai = pa->value.data() + i * d;
                    const S* bj = pb->value.data() + j * d;
                    if (pa->requires_grad) {
                        S* ga = pa->grad_buffer().data() + i * d;
                        for (int64_t t = 0; t < d; ++t) ga[t] += gv * (ai[t] - bj[t]);
                    }
                    if (pb->requires_grad) {
                        S* gb = pb->grad_buffer().data() + j * d;
                        for (int64_t t = 0; t < d; ++t) gb[t] -= gv * (ai[t] - bj[t]);
                    }
                }
        });
}

// Exact squared 2-Wasserstein distance between 1-D empirical distributions
// (step-function quantile integral; handles unequal sample counts).
template <class S>
Var<S> wasserstein2_sq_1d(const Var<S>& x, const Var<S>& y) {
    if (x.value().rank() != 1 || y.value().rank() != 1)
        throw ShapeError("wasserstein2_sq_1d: expected vectors, got " + x.value().shape_str() +
                         " and " + y.value().shape_str());
    int64_t n = x.value().numel(), m = y.value().numel();
    if (n == 0 || m == 0) throw ShapeError("wasserstein2_sq_1d: empty input");
    auto order_of = [](const Tensor<S>& t) {
        std::vector<int64_t> idx(static_cast<size_t>(t.numel()));
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(),
                         [&](int64_t a, int64_t b) { return t[a] < t[b]; });
        return idx;
    };
    auto ox = std::make_shared<std::vector<int64_t>>(order_of(x.value()));
    auto oy = std::make_shared<std::vector<int64_t>>(order_of(y.value()));

    // walk the merged quantile grid
    auto segments = [&](auto&& emit) {
        double u = 0.0;
        int64_t ix = 0, iy = 0;
        while (ix < n && iy < m) {
            double nx = static_cast<double>(ix + 1) / static_cast<double>(n);
            double ny = static_cast<double>(iy + 1) / static_cast<double>(m);
            double nu = std::min(nx, ny);
            emit(ix, iy, nu - u);
            u = nu;
            if (nx <= nu + 1e-18) ++ix;
            if (ny <= nu + 1e-18) ++iy;
        }
    };
    S total = 0;
    segments([&](int64_t ix, int64_t iy, double w) {
        S dv = x.value()[(*ox)[static_cast<size_t>(ix)]] - y.value()[(*oy)[static_cast<size_t>(iy)]];
        total += S(w) * dv * dv;
    });
    return detail::make_binary<S>(
        "wasserstein2_sq_1d", x, y, Tensor<S>::scalar(total),
        [ox, oy, n, m](auto* self, auto* px, auto* py) {
            S g = self->grad[0];
            double u = 0.0;
            int64_t ix = 0, iy = 0;
            while (ix < n && iy < m) {
                double nx = static_cast<double>(ix + 1) / static_cast<double>(n);
                double ny = static_cast<double>(iy + 1) / static_cast<double>(m);
                double nu = std::min(nx, ny);
                double w = nu - u;
                int64_t xi = (*ox)[static_cast<size_t>(ix)];
                int64_t yj = (*oy)[static_cast<size_t>(iy)];
                S dv = px->value[xi] - py->value[yj];
                if (px->requires_grad) px->grad_buffer()[xi] += g * S(2 * w) * dv;
                if (py->requires_grad) py->grad_buffer()[yj] -= g * S(2 * w) * dv;
                u = nu;
                if (nx <= nu + 1e-18) ++ix;
                if (ny <= nu + 1e-18) ++iy;
            }
        });
}

}  // namespace dgar
