#pragma once

// Reverse-mode autodiff over Tensor. Each op records one tape node with a
// hand-written backward, so graphs stay small (hundreds of nodes per sample)
// and the inner loops stay flat. Gradients are accumulated into an external
// GradMap instead of onto the nodes, which keeps shared parameters safe when
// several worker threads run backward on their own per-sample graphs.

#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hocslm/tensor.hpp"

namespace hocslm {

struct Node;
using Var = std::shared_ptr<Node>;
using GradMap = std::unordered_map<const Node*, Tensor>;

struct Node {
    Tensor value;
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(const Tensor& grad, GradMap& sink)> backward;  // null for leaves
};

// When false, ops compute values but record no tape (inference mode).
inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
    ~NoGradGuard() { grad_mode() = prev; }
};

inline Var make_leaf(Tensor value, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad && grad_mode();
    return n;
}

inline Var constant(Tensor value) { return make_leaf(std::move(value), false); }

namespace detail {

inline void accum(GradMap& sink, const Node* node, Tensor&& g) {
    auto it = sink.find(node);
    if (it == sink.end())
        sink.emplace(node, std::move(g));
    else
        it->second.add_(g);
}

template <typename F>
Var make_op(Tensor value, std::vector<Var> parents, F&& back) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    bool need = false;
    if (grad_mode())
        for (const auto& p : parents) need = need || p->requires_grad;
    n->requires_grad = need;
    if (need) {
        n->parents = std::move(parents);
        n->backward = std::forward<F>(back);
    }
    return n;
}

}  // namespace detail

// Runs reverse-mode accumulation from `root` (scalar) into `sink`. Parameter
// leaves end up as entries of `sink`; intermediate grads are dropped.
inline void backward(const Var& root, GradMap& sink) {
    if (root->value.size() != 1)
        throw ShapeMismatch("backward: root must be scalar, got " + shape_str(root->value.shape()));
    if (!root->requires_grad) return;

    // iterative post-order topo sort
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx].get();
            ++idx;
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    detail::accum(sink, root.get(), Tensor::full(root->value.shape(), 1.0));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (!n->backward) continue;
        auto g = sink.find(n);
        if (g == sink.end()) continue;
        n->backward(g->second, sink);
        sink.erase(n);  // keep only leaves in the sink
    }
}

namespace ag {

using detail::accum;
using detail::make_op;

// ---------------------------------------------------------------- arithmetic

inline Var add(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value))
        throw ShapeMismatch("add: " + shape_str(a->value.shape()) + " vs " + shape_str(b->value.shape()));
    Tensor out = a->value;
    out.add_(b->value);
    return make_op(std::move(out), {a, b}, [a, b](const Tensor& g, GradMap& sink) {
        if (a->requires_grad) accum(sink, a.get(), Tensor(g));
        if (b->requires_grad) accum(sink, b.get(), Tensor(g));
    });
}

inline Var sub(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw ShapeMismatch("sub: shape mismatch");
    Tensor out = a->value;
    out.axpy_(-1.0, b->value);
    return make_op(std::move(out), {a, b}, [a, b](const Tensor& g, GradMap& sink) {
        if (a->requires_grad) accum(sink, a.get(), Tensor(g));
        if (b->requires_grad) {
            Tensor gb = g;
            gb.scale_(-1.0);
            accum(sink, b.get(), std::move(gb));
        }
    });
}

inline Var mul(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw ShapeMismatch("mul: shape mismatch");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
    return make_op(std::move(out), {a, b}, [a, b](const Tensor& g, GradMap& sink) {
        if (a->requires_grad) {
            Tensor ga = g;
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= b->value[i];
            accum(sink, a.get(), std::move(ga));
        }
        if (b->requires_grad) {
            Tensor gb = g;
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= a->value[i];
            accum(sink, b.get(), std::move(gb));
        }
    });
}

inline Var scale(const Var& a, double c) {
    Tensor out = a->value;
    out.scale_(c);
    return make_op(std::move(out), {a}, [a, c](const Tensor& g, GradMap& sink) {
        if (!a->requires_grad) return;
        Tensor ga = g;
        ga.scale_(c);
        accum(sink, a.get(), std::move(ga));
    });
}

inline Var add_const(const Var& a, double c) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c;
    return make_op(std::move(out), {a}, [a](const Tensor& g, GradMap& sink) {
        if (a->requires_grad) accum(sink, a.get(), Tensor(g));
    });
}

// y = a * s where s is a 0-d tensor (learnable scalar gain)
inline Var smul(const Var& a, const Var& s) {
    if (s->value.size() != 1) throw ShapeMismatch("smul: gain must be scalar");
    const double sv = s->value[0];
    Tensor out = a->value;
    out.scale_(sv);
    return make_op(std::move(out), {a, s}, [a, s, sv](const Tensor& g, GradMap& sink) {
        if (a->requires_grad) {
            Tensor ga = g;
            ga.scale_(sv);
            accum(sink, a.get(), std::move(ga));
        }
        if (s->requires_grad) {
            double acc = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * a->value[i];
            accum(sink, s.get(), Tensor::scalar(acc));
        }
    });
}

// picks v[i] as a 0-d value out of a rank-1 tensor
inline Var index0d(const Var& v, int i) {
    if (v->value.rank() != 1) throw ShapeMismatch("index0d: rank-1 expected");
    Tensor out = Tensor::scalar(v->value.at(i));
    return make_op(std::move(out), {v}, [v, i](const Tensor& g, GradMap& sink) {
        if (!v->requires_grad) return;
        Tensor gv(v->value.shape());
        gv.at(i) = g[0];
        accum(sink, v.get(), std::move(gv));
    });
}

// -------------------------------------------------------------- elementwise

namespace detail_unary {
template <typename Fwd, typename Bwd>
Var unary(const Var& a, Fwd f, Bwd dfdx_from_xy) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(out[i]);
    Tensor saved = out;
    return make_op(std::move(out), {a}, [a, saved, dfdx_from_xy](const Tensor& g, GradMap& sink) {
        if (!a->requires_grad) return;
        Tensor ga = g;
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= dfdx_from_xy(a->value[i], saved[i]);
        accum(sink, a.get(), std::move(ga));
    });
}
}  // namespace detail_unary

inline Var relu(const Var& a) {
    return detail_unary::unary(
        a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Var gelu(const Var& a) {
    // exact erf form
    return detail_unary::unary(
        a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); },
        [](double x, double) {
            const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
            const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
            return cdf + x * pdf;
        });
}

inline Var sigmoid(const Var& a) {
    return detail_unary::unary(
        a,
        [](double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
        [](double, double y) { return y * (1.0 - y); });
}

inline Var tanh_(const Var& a) {
    return detail_unary::unary(
        a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

// ------------------------------------------------------------------- linear

// y = x W + b, x is [k] or [L,k], W is [k,n], b is [n] (optional)
inline Var linear(const Var& x, const Var& w, const Var& b = nullptr) {
    const bool vec = x->value.rank() == 1;
    const int L = vec ? 1 : x->value.dim(0);
    const int K = vec ? x->value.dim(0) : x->value.dim(1);
    if (w->value.rank() != 2 || w->value.dim(0) != K)
        throw ShapeMismatch("linear: W " + shape_str(w->value.shape()) + " vs x " + shape_str(x->value.shape()));
    const int N = w->value.dim(1);
    Tensor out(vec ? Shape{N} : Shape{L, N});
    const double* xd = x->value.data();
    const double* wd = w->value.data();
    for (int l = 0; l < L; ++l) {
        double* orow = out.data() + static_cast<std::size_t>(l) * N;
        if (b) {
            for (int n = 0; n < N; ++n) orow[n] = b->value.at(n);
        }
        const double* xrow = xd + static_cast<std::size_t>(l) * K;
        for (int k = 0; k < K; ++k) {
            const double xv = xrow[k];
            if (xv == 0.0) continue;
            const double* wrow = wd + static_cast<std::size_t>(k) * N;
            for (int n = 0; n < N; ++n) orow[n] += xv * wrow[n];
        }
    }
    std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return make_op(std::move(out), std::move(parents), [x, w, b, L, K, N](const Tensor& g, GradMap& sink) {
        const double* gd = g.data();
        if (x->requires_grad) {
            Tensor gx(x->value.shape());
            for (int l = 0; l < L; ++l) {
                double* gxrow = gx.data() + static_cast<std::size_t>(l) * K;
                const double* grow = gd + static_cast<std::size_t>(l) * N;
                for (int k = 0; k < K; ++k) {
                    const double* wrow = w->value.data() + static_cast<std::size_t>(k) * N;
                    double acc = 0.0;
                    for (int n = 0; n < N; ++n) acc += grow[n] * wrow[n];
                    gxrow[k] = acc;
                }
            }
            accum(sink, x.get(), std::move(gx));
        }
        if (w->requires_grad) {
            Tensor gw(w->value.shape());
            for (int l = 0; l < L; ++l) {
                const double* xrow = x->value.data() + static_cast<std::size_t>(l) * K;
                const double* grow = gd + static_cast<std::size_t>(l) * N;
                for (int k = 0; k < K; ++k) {
                    const double xv = xrow[k];
                    if (xv == 0.0) continue;
                    double* gwrow = gw.data() + static_cast<std::size_t>(k) * N;
                    for (int n = 0; n < N; ++n) gwrow[n] += xv * grow[n];
                }
            }
            accum(sink, w.get(), std::move(gw));
        }
        if (b && b->requires_grad) {
            Tensor gb(b->value.shape());
            for (int l = 0; l < L; ++l)
                for (int n = 0; n < N; ++n) gb.at(n) += gd[static_cast<std::size_t>(l) * N + n];
            accum(sink, b.get(), std::move(gb));
        }
    });
}

// A [m,k] x B [k,n] -> [m,n]
inline Var matmul(const Var& a, const Var& b) {
    if (a->value.rank() != 2 || b->value.rank() != 2 || a->value.dim(1) != b->value.dim(0))
        throw ShapeMismatch("matmul: " + shape_str(a->value.shape()) + " x " + shape_str(b->value.shape()));
    const int M = a->value.dim(0), K = a->value.dim(1), N = b->value.dim(1);
    Tensor out(Shape{M, N});
    for (int m = 0; m < M; ++m) {
        double* orow = out.data() + static_cast<std::size_t>(m) * N;
        const double* arow = a->value.data() + static_cast<std::size_t>(m) * K;
        for (int k = 0; k < K; ++k) {
            const double av = arow[k];
            if (av == 0.0) continue;
            const double* brow = b->value.data() + static_cast<std::size_t>(k) * N;
            for (int n = 0; n < N; ++n) orow[n] += av * brow[n];
        }
    }
    return make_op(std::move(out), {a, b}, [a, b, M, K, N](const Tensor& g, GradMap& sink) {
        if (a->requires_grad) {  // gA = g B^T
            Tensor ga(Shape{M, K});
            for (int m = 0; m < M; ++m) {
                const double* grow = g.data() + static_cast<std::size_t>(m) * N;
                double* garow = ga.data() + static_cast<std::size_t>(m) * K;
                for (int k = 0; k < K; ++k) {
                    const double* brow = b->value.data() + static_cast<std::size_t>(k) * N;
                    double acc = 0.0;
                    for (int n = 0; n < N; ++n) acc += grow[n] * brow[n];
                    garow[k] = acc;
                }
            }
            accum(sink, a.get(), std::move(ga));
        }
        if (b->requires_grad) {  // gB = A^T g
            Tensor gb(Shape{K, N});
            for (int m = 0; m < M; ++m) {
                const double* arow = a->value.data() + static_cast<std::size_t>(m) * K;
                const double* grow = g.data() + static_cast<std::size_t>(m) * N;
                for (int k = 0; k < K; ++k) {
                    const double av = arow[k];
                    if (av == 0.0) continue;
                    double* gbrow = gb.data() + static_cast<std::size_t>(k) * N;
                    for (int n = 0; n < N; ++n) gbrow[n] += av * grow[n];
                }
            }
            accum(sink, b.get(), std::move(gb));
        }
    });
}

// A [m,k] x B^T where B is [n,k] -> [m,n]
inline Var matmul_nt(const Var& a, const Var& b) {
    if (a->value.rank() != 2 || b->value.rank() != 2 || a->value.dim(1) != b->value.dim(1))
        throw ShapeMismatch("matmul_nt: " + shape_str(a->value.shape()) + " x " + shape_str(b->value.shape()) + "^T");
    const int M = a->value.dim(0), K = a->value.dim(1), N = b->value.dim(0);
    Tensor out(Shape{M, N});
    for (int m = 0; m < M; ++m) {
        const double* arow = a->value.data() + static_cast<std::size_t>(m) * K;
        double* orow = out.data() + static_cast<std::size_t>(m) * N;
        for (int n = 0; n < N; ++n) {
            const double* brow = b->value.data() + static_cast<std::size_t>(n) * K;
            double acc = 0.0;
            for (int k = 0; k < K; ++k) acc += arow[k] * brow[k];
            orow[n] = acc;
        }
    }
    return make_op(std::move(out), {a, b}, [a, b, M, K, N](const Tensor& g, GradMap& sink) {
        if (a->requires_grad) {  // gA = g B
            Tensor ga(Shape{M, K});
            for (int m = 0; m < M; ++m) {
                const double* grow = g.data() + static_cast<std::size_t>(m) * N;
                double* garow = ga.data() + static_cast<std::size_t>(m) * K;
                for (int n = 0; n < N; ++n) {
                    const double gv = grow[n];
                    if (gv == 0.0) continue;
                    const double* brow = b->value.data() + static_cast<std::size_t>(n) * K;
                    for (int k = 0; k < K; ++k) garow[k] += gv * brow[k];
                }
            }
            accum(sink, a.get(), std::move(ga));
        }
        if (b->requires_grad) {  // gB = g^T A
            Tensor gb(Shape{N, K});
            for (int m = 0; m < M; ++m) {
                const double* grow = g.data() + static_cast<std::size_t>(m) * N;
                const double* arow = a->value.data() + static_cast<std::size_t>(m) * K;
                for (int n = 0; n < N; ++n) {
                    const double gv = grow[n];
                    if (gv == 0.0) continue;
                    double* gbrow = gb.data() + static_cast<std::size_t>(n) * K;
                    for (int k = 0; k < K; ++k) gbrow[k] += gv * arow[k];
                }
            }
            accum(sink, b.get(), std::move(gb));
        }
    });
}

// channel map: X [C_in, ...spatial] -> [C_out, ...spatial], W [C_out, C_in]
inline Var channel_map(const Var& x, const Var& w, const Var& b = nullptr) {
    if (x->value.rank() < 2 || w->value.rank() != 2 || w->value.dim(1) != x->value.dim(0))
        throw ShapeMismatch("channel_map: W " + shape_str(w->value.shape()) + " vs X " + shape_str(x->value.shape()));
    const int Ci = x->value.dim(0);
    const int Co = w->value.dim(0);
    const std::size_t S = x->value.size() / static_cast<std::size_t>(Ci);
    Shape oshape = x->value.shape();
    oshape[0] = Co;
    Tensor out(oshape);
    for (int o = 0; o < Co; ++o) {
        double* orow = out.data() + static_cast<std::size_t>(o) * S;
        if (b) {
            const double bv = b->value.at(o);
            for (std::size_t s = 0; s < S; ++s) orow[s] = bv;
        }
        for (int c = 0; c < Ci; ++c) {
            const double wv = w->value.at(o, c);
            if (wv == 0.0) continue;
            const double* xrow = x->value.data() + static_cast<std::size_t>(c) * S;
            for (std::size_t s = 0; s < S; ++s) orow[s] += wv * xrow[s];
        }
    }
    std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return make_op(std::move(out), std::move(parents), [x, w, b, Ci, Co, S](const Tensor& g, GradMap& sink) {
        if (x->requires_grad) {
            Tensor gx(x->value.shape());
            for (int o = 0; o < Co; ++o) {
                const double* grow = g.data() + static_cast<std::size_t>(o) * S;
                for (int c = 0; c < Ci; ++c) {
                    const double wv = w->value.at(o, c);
                    if (wv == 0.0) continue;
                    double* gxrow = gx.data() + static_cast<std::size_t>(c) * S;
                    for (std::size_t s = 0; s < S; ++s) gxrow[s] += wv * grow[s];
                }
            }
            accum(sink, x.get(), std::move(gx));
        }
        if (w->requires_grad) {
            Tensor gw(w->value.shape());
            for (int o = 0; o < Co; ++o) {
                const double* grow = g.data() + static_cast<std::size_t>(o) * S;
                for (int c = 0; c < Ci; ++c) {
                    const double* xrow = x->value.data() + static_cast<std::size_t>(c) * S;
                    double acc = 0.0;
                    for (std::size_t s = 0; s < S; ++s) acc += grow[s] * xrow[s];
                    gw.at(o, c) = acc;
                }
            }
            accum(sink, w.get(), std::move(gw));
        }
        if (b && b->requires_grad) {
            Tensor gb(b->value.shape());
            for (int o = 0; o < Co; ++o) {
                const double* grow = g.data() + static_cast<std::size_t>(o) * S;
                double acc = 0.0;
                for (std::size_t s = 0; s < S; ++s) acc += grow[s];
                gb.at(o) = acc;
            }
            accum(sink, b.get(), std::move(gb));
        }
    });
}

// --------------------------------------------------------------- reductions

// mean over axis 1 of [C,T,N] -> [C,N]
inline Var mean_time(const Var& x) {
    if (x->value.rank() != 3) throw ShapeMismatch("mean_time: [C,T,N] expected");
    const int C = x->value.dim(0), T = x->value.dim(1), N = x->value.dim(2);
    Tensor out(Shape{C, N});
    for (int c = 0; c < C; ++c)
        for (int t = 0; t < T; ++t)
            for (int n = 0; n < N; ++n) out.at(c, n) += x->value.at(c, t, n);
    out.scale_(1.0 / T);
    return make_op(std::move(out), {x}, [x, C, T, N](const Tensor& g, GradMap& sink) {
        if (!x->requires_grad) return;
        Tensor gx(x->value.shape());
        const double inv = 1.0 / T;
        for (int c = 0; c < C; ++c)
            for (int t = 0; t < T; ++t)
                for (int n = 0; n < N; ++n) gx.at(c, t, n) = g.at(c, n) * inv;
        accum(sink, x.get(), std::move(gx));
    });
}

// mean over axes (1,2) of [C,T,N] -> [C]
inline Var global_avg_pool(const Var& x) {
    if (x->value.rank() != 3) throw ShapeMismatch("global_avg_pool: [C,T,N] expected");
    const int C = x->value.dim(0), T = x->value.dim(1), N = x->value.dim(2);
    const double inv = 1.0 / (static_cast<double>(T) * N);
    Tensor out(Shape{C});
    for (int c = 0; c < C; ++c) {
        const double* p = x->value.data() + static_cast<std::size_t>(c) * T * N;
        double acc = 0.0;
        for (int i = 0; i < T * N; ++i) acc += p[i];
        out.at(c) = acc * inv;
    }
    return make_op(std::move(out), {x}, [x, C, T, N, inv](const Tensor& g, GradMap& sink) {
        if (!x->requires_grad) return;
        Tensor gx(x->value.shape());
        for (int c = 0; c < C; ++c) {
            const double gv = g.at(c) * inv;
            double* p = gx.data() + static_cast<std::size_t>(c) * T * N;
            for (int i = 0; i < T * N; ++i) p[i] = gv;
        }
        accum(sink, x.get(), std::move(gx));
    });
}

inline Var sum_all(const Var& x) {
    Tensor out = Tensor::scalar(x->value.sum());
    return make_op(std::move(out), {x}, [x](const Tensor& g, GradMap& sink) {
        if (!x->requires_grad) return;
        accum(sink, x.get(), Tensor::full(x->value.shape(), g[0]));
    });
}

// <x, c> with a constant probe tensor; used by tests to build scalar losses
inline Var dot_const(const Var& x, const Tensor& probe) {
    if (!x->value.same_shape(probe)) throw ShapeMismatch("dot_const: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < probe.size(); ++i) acc += x->value[i] * probe[i];
    Tensor probe_copy = probe;
    return make_op(Tensor::scalar(acc), {x}, [x, probe_copy](const Tensor& g, GradMap& sink) {
        if (!x->requires_grad) return;
        Tensor gx = probe_copy;
        gx.scale_(g[0]);
        accum(sink, x.get(), std::move(gx));
    });
}

// ----------------------------------------------------------- shape plumbing

inline Var reshape(const Var& x, Shape s) {
    Tensor out = x->value.reshaped(std::move(s));
    return make_op(std::move(out), {x}, [x](const Tensor& g, GradMap& sink) {
        if (x->requires_grad) accum(sink, x.get(), g.reshaped(x->value.shape()));
    });
}

inline Var slice0(const Var& x, int i) {  // x[i, ...] dropping axis 0
    Shape s(x->value.shape().begin() + 1, x->value.shape().end());
    const std::size_t stride = Tensor::count(s);
    Tensor out(s);
    std::copy_n(x->value.data() + static_cast<std::size_t>(i) * stride, stride, out.data());
    return make_op(std::move(out), {x}, [x, i, stride](const Tensor& g, GradMap& sink) {
        if (!x->requires_grad) return;
        Tensor gx(x->value.shape());
        std::copy_n(g.data(), stride, gx.data() + static_cast<std::size_t>(i) * stride);
        accum(sink, x.get(), std::move(gx));
    });
}

inline Var slice_rows(const Var& x, int start, int len) {  // keeps axis 0
    Shape s = x->value.shape();
    if (start < 0 || start + len > s[0]) throw ShapeMismatch("slice_rows: out of range");
    s[0] = len;
    const std::size_t stride = x->value.size() / static_cast<std::size_t>(x->value.dim(0));
    Tensor out(s);
    std::copy_n(x->value.data() + static_cast<std::size_t>(start) * stride, static_cast<std::size_t>(len) * stride,
                out.data());
    return make_op(std::move(out), {x}, [x, start, len, stride](const Tensor& g, GradMap& sink) {
        if (!x->requires_grad) return;
        Tensor gx(x->value.shape());
        std::copy_n(g.data(), static_cast<std::size_t>(len) * stride,
                    gx.data() + static_cast<std::size_t>(start) * stride);
        accum(sink, x.get(), std::move(gx));
    });
}

inline Var stack0(const std::vector<Var>& xs) {  // new leading axis
    Shape inner = xs.front()->value.shape();
    Shape s;
    s.push_back(static_cast<int>(xs.size()));
    s.insert(s.end(), inner.begin(), inner.end());
    const std::size_t stride = Tensor::count(inner);
    Tensor out(s);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!xs[i]->value.same_shape(xs.front()->value)) throw ShapeMismatch("stack0: ragged input");
        std::copy_n(xs[i]->value.data(), stride, out.data() + i * stride);
    }
    std::vector<Var> parents = xs;
    return make_op(std::move(out), std::move(parents), [xs, stride](const Tensor& g, GradMap& sink) {
        for (std::size_t i = 0; i < xs.size(); ++i) {
            if (!xs[i]->requires_grad) continue;
            Tensor gx(xs[i]->value.shape());
            std::copy_n(g.data() + i * stride, stride, gx.data());
            accum(sink, xs[i].get(), std::move(gx));
        }
    });
}

inline Var concat0(const std::vector<Var>& xs) {  // concat along existing axis 0
    Shape s = xs.front()->value.shape();
    int total = 0;
    for (const auto& x : xs) total += x->value.dim(0);
    s[0] = total;
    Tensor out(s);
    std::size_t off = 0;
    for (const auto& x : xs) {
        std::copy_n(x->value.data(), x->value.size(), out.data() + off);
        off += x->value.size();
    }
    std::vector<Var> parents = xs;
    return make_op(std::move(out), std::move(parents), [xs](const Tensor& g, GradMap& sink) {
        std::size_t off = 0;
        for (const auto& x : xs) {
            if (x->requires_grad) {
                Tensor gx(x->value.shape());
                std::copy_n(g.data() + off, x->value.size(), gx.data());
                accum(sink, x.get(), std::move(gx));
            }
            off += x->value.size();
        }
    });
}

// tile x along a new leading axis of length c
inline Var broadcast0(const Var& x, int c) {
    Shape s;
    s.push_back(c);
    for (int d : x->value.shape()) s.push_back(d);
    const std::size_t stride = x->value.size();
    Tensor out(s);
    for (int i = 0; i < c; ++i) std::copy_n(x->value.data(), stride, out.data() + i * stride);
    return make_op(std::move(out), {x}, [x, c, stride](const Tensor& g, GradMap& sink) {
        if (!x->requires_grad) return;
        Tensor gx(x->value.shape());
        for (int i = 0; i < c; ++i)
            for (std::size_t j = 0; j < stride; ++j) gx[j] += g[i * stride + j];
        accum(sink, x.get(), std::move(gx));
    });
}

// [C,T,N] -> [T, C*N]; lets frame-to-frame attention use flat matmuls
inline Var frames_flatten(const Var& x) {
    if (x->value.rank() != 3) throw ShapeMismatch("frames_flatten: [C,T,N] expected");
    const int C = x->value.dim(0), T = x->value.dim(1), N = x->value.dim(2);
    Tensor out(Shape{T, C * N});
    for (int c = 0; c < C; ++c)
        for (int t = 0; t < T; ++t)
            for (int n = 0; n < N; ++n) out.at(t, c * N + n) = x->value.at(c, t, n);
    return make_op(std::move(out), {x}, [x, C, T, N](const Tensor& g, GradMap& sink) {
        if (!x->requires_grad) return;
        Tensor gx(x->value.shape());
        for (int c = 0; c < C; ++c)
            for (int t = 0; t < T; ++t)
                for (int n = 0; n < N; ++n) gx.at(c, t, n) = g.at(t, c * N + n);
        accum(sink, x.get(), std::move(gx));
    });
}

// ------------------------------------------------------------ soft/norm ops

// softmax over the last axis
inline Var softmax_lastdim(const Var& x) {
    const int D = x->value.dim(x->value.rank() - 1);
    const std::size_t rows = x->value.size() / static_cast<std::size_t>(D);
    Tensor out = x->value;
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = out.data() + r * D;
        double mx = row[0];
        for (int i = 1; i < D; ++i) mx = std::max(mx, row[i]);
        double z = 0.0;
        for (int i = 0; i < D; ++i) {
            row[i] = std::exp(row[i] - mx);
            z += row[i];
        }
        const double inv = 1.0 / z;
        for (int i = 0; i < D; ++i) row[i] *= inv;
    }
    Tensor saved = out;
    return make_op(std::move(out), {x}, [x, saved, D, rows](const Tensor& g, GradMap& sink) {
        if (!x->requires_grad) return;
        Tensor gx(x->value.shape());
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = saved.data() + r * D;
            const double* gr = g.data() + r * D;
            double dot = 0.0;
            for (int i = 0; i < D; ++i) dot += y[i] * gr[i];
            double* gros = gx.data() + r * D;
            for (int i = 0; i < D; ++i) gros[i] = y[i] * (gr[i] - dot);
        }
        accum(sink, x.get(), std::move(gx));
    });
}

// LayerNorm over the last axis with learned affine
inline Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5) {
    const int D = x->value.dim(x->value.rank() - 1);
    if (gain->value.size() != static_cast<std::size_t>(D) || bias->value.size() != static_cast<std::size_t>(D))
        throw ShapeMismatch("layer_norm: affine shape mismatch");
    const std::size_t rows = x->value.size() / static_cast<std::size_t>(D);
    Tensor out(x->value.shape());
    Tensor xhat(x->value.shape());
    std::vector<double> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = x->value.data() + r * D;
        double mu = 0.0;
        for (int i = 0; i < D; ++i) mu += row[i];
        mu /= D;
        double var = 0.0;
        for (int i = 0; i < D; ++i) var += (row[i] - mu) * (row[i] - mu);
        var /= D;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        double* hrow = xhat.data() + r * D;
        double* orow = out.data() + r * D;
        for (int i = 0; i < D; ++i) {
            hrow[i] = (row[i] - mu) * is;
            orow[i] = hrow[i] * gain->value.at(i) + bias->value.at(i);
        }
    }
    return make_op(std::move(out), {x, gain, bias},
                   [x, gain, bias, xhat, inv_std, D, rows](const Tensor& g, GradMap& sink) {
                       if (x->requires_grad) {
                           Tensor gx(x->value.shape());
                           for (std::size_t r = 0; r < rows; ++r) {
                               const double* gr = g.data() + r * D;
                               const double* h = xhat.data() + r * D;
                               double* gxr = gx.data() + r * D;
                               double sum_dh = 0.0, sum_dh_h = 0.0;
                               for (int i = 0; i < D; ++i) {
                                   const double dh = gr[i] * gain->value.at(i);
                                   sum_dh += dh;
                                   sum_dh_h += dh * h[i];
                               }
                               for (int i = 0; i < D; ++i) {
                                   const double dh = gr[i] * gain->value.at(i);
                                   gxr[i] = inv_std[r] * (dh - sum_dh / D - h[i] * sum_dh_h / D);
                               }
                           }
                           accum(sink, x.get(), std::move(gx));
                       }
                       if (gain->requires_grad) {
                           Tensor gg(gain->value.shape());
                           for (std::size_t r = 0; r < rows; ++r)
                               for (int i = 0; i < D; ++i) gg.at(i) += g[r * D + i] * xhat[r * D + i];
                           accum(sink, gain.get(), std::move(gg));
                       }
                       if (bias->requires_grad) {
                           Tensor gb(bias->value.shape());
                           for (std::size_t r = 0; r < rows; ++r)
                               for (int i = 0; i < D; ++i) gb.at(i) += g[r * D + i];
                           accum(sink, bias.get(), std::move(gb));
                       }
                   });
}

// per-channel normalization over (T,N) with affine; X [C,T,N]
inline Var instance_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5) {
    if (x->value.rank() != 3) throw ShapeMismatch("instance_norm: [C,T,N] expected");
    const int C = x->value.dim(0);
    const std::size_t S = x->value.size() / static_cast<std::size_t>(C);
    Tensor out(x->value.shape());
    Tensor xhat(x->value.shape());
    std::vector<double> inv_std(C);
    for (int c = 0; c < C; ++c) {
        const double* row = x->value.data() + c * S;
        double mu = 0.0;
        for (std::size_t i = 0; i < S; ++i) mu += row[i];
        mu /= static_cast<double>(S);
        double var = 0.0;
        for (std::size_t i = 0; i < S; ++i) var += (row[i] - mu) * (row[i] - mu);
        var /= static_cast<double>(S);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[c] = is;
        double* h = xhat.data() + c * S;
        double* o = out.data() + c * S;
        const double gc = gain->value.at(c), bc = bias->value.at(c);
        for (std::size_t i = 0; i < S; ++i) {
            h[i] = (row[i] - mu) * is;
            o[i] = h[i] * gc + bc;
        }
    }
    return make_op(std::move(out), {x, gain, bias},
                   [x, gain, bias, xhat, inv_std, C, S](const Tensor& g, GradMap& sink) {
                       if (x->requires_grad) {
                           Tensor gx(x->value.shape());
                           const double invS = 1.0 / static_cast<double>(S);
                           for (int c = 0; c < C; ++c) {
                               const double* gr = g.data() + c * S;
                               const double* h = xhat.data() + c * S;
                               double* gxr = gx.data() + c * S;
                               const double gc = gain->value.at(c);
                               double sum_dh = 0.0, sum_dh_h = 0.0;
                               for (std::size_t i = 0; i < S; ++i) {
                                   const double dh = gr[i] * gc;
                                   sum_dh += dh;
                                   sum_dh_h += dh * h[i];
                               }
                               for (std::size_t i = 0; i < S; ++i) {
                                   const double dh = gr[i] * gc;
                                   gxr[i] = inv_std[c] * (dh - sum_dh * invS - h[i] * sum_dh_h * invS);
                               }
                           }
                           accum(sink, x.get(), std::move(gx));
                       }
                       if (gain->requires_grad) {
                           Tensor gg(gain->value.shape());
                           for (int c = 0; c < C; ++c) {
                               double acc = 0.0;
                               for (std::size_t i = 0; i < S; ++i) acc += g[c * S + i] * xhat[c * S + i];
                               gg.at(c) = acc;
                           }
                           accum(sink, gain.get(), std::move(gg));
                       }
                       if (bias->requires_grad) {
                           Tensor gb(bias->value.shape());
                           for (int c = 0; c < C; ++c) {
                               double acc = 0.0;
                               for (std::size_t i = 0; i < S; ++i) acc += g[c * S + i];
                               gb.at(c) = acc;
                           }
                           accum(sink, bias.get(), std::move(gb));
                       }
                   });
}

// ------------------------------------------------------- similarity kernels

// cosine similarity between rows of Q and rows of K; Q,K [N,M] -> [N,N]
inline Var cosine_rows(const Var& q, const Var& k, double eps = 1e-12) {
    if (!q->value.same_shape(k->value) || q->value.rank() != 2)
        throw ShapeMismatch("cosine_rows: two equal [N,M] expected");
    const int N = q->value.dim(0), M = q->value.dim(1);
    std::vector<double> qn(N), kn(N);
    for (int a = 0; a < N; ++a) {
        double sq = 0.0, sk = 0.0;
        for (int m = 0; m < M; ++m) {
            sq += q->value.at(a, m) * q->value.at(a, m);
            sk += k->value.at(a, m) * k->value.at(a, m);
        }
        qn[a] = std::max(std::sqrt(sq), eps);
        kn[a] = std::max(std::sqrt(sk), eps);
    }
    Tensor out(Shape{N, N});
    for (int a = 0; a < N; ++a)
        for (int b = 0; b < N; ++b) {
            double dot = 0.0;
            for (int m = 0; m < M; ++m) dot += q->value.at(a, m) * k->value.at(b, m);
            out.at(a, b) = dot / (qn[a] * kn[b]);
        }
    Tensor saved = out;
    return make_op(std::move(out), {q, k}, [q, k, saved, qn, kn, N, M](const Tensor& g, GradMap& sink) {
        Tensor gq(q->value.shape()), gk(k->value.shape());
        for (int a = 0; a < N; ++a)
            for (int b = 0; b < N; ++b) {
                const double gv = g.at(a, b);
                if (gv == 0.0) continue;
                const double c = saved.at(a, b);
                const double inv = 1.0 / (qn[a] * kn[b]);
                for (int m = 0; m < M; ++m) {
                    gq.at(a, m) += gv * (k->value.at(b, m) * inv - c * q->value.at(a, m) / (qn[a] * qn[a]));
                    gk.at(b, m) += gv * (q->value.at(a, m) * inv - c * k->value.at(b, m) / (kn[b] * kn[b]));
                }
            }
        if (q->requires_grad) accum(sink, q.get(), std::move(gq));
        if (k->requires_grad) accum(sink, k.get(), std::move(gk));
    });
}

// pairwise L2 distance between rows of Q and rows of K -> [N,N]
inline Var l2dist_rows(const Var& q, const Var& k) {
    if (!q->value.same_shape(k->value) || q->value.rank() != 2)
        throw ShapeMismatch("l2dist_rows: two equal [N,M] expected");
    const int N = q->value.dim(0), M = q->value.dim(1);
    Tensor out(Shape{N, N});
    for (int a = 0; a < N; ++a)
        for (int b = 0; b < N; ++b) {
            double s = 0.0;
            for (int m = 0; m < M; ++m) {
                const double d = q->value.at(a, m) - k->value.at(b, m);
                s += d * d;
            }
            out.at(a, b) = std::sqrt(s);
        }
    Tensor saved = out;
    return make_op(std::move(out), {q, k}, [q, k, saved, N, M](const Tensor& g, GradMap& sink) {
        Tensor gq(q->value.shape()), gk(k->value.shape());
        for (int a = 0; a < N; ++a)
            for (int b = 0; b < N; ++b) {
                const double d = saved.at(a, b);
                const double gv = g.at(a, b);
                if (gv == 0.0 || d == 0.0) continue;  // subgradient 0 at coincident rows
                const double s = gv / d;
                for (int m = 0; m < M; ++m) {
                    const double diff = q->value.at(a, m) - k->value.at(b, m);
                    gq.at(a, m) += s * diff;
                    gk.at(b, m) -= s * diff;
                }
            }
        if (q->requires_grad) accum(sink, q.get(), std::move(gq));
        if (k->requires_grad) accum(sink, k.get(), std::move(gk));
    });
}

// Gram energy X^T X for X [C,N] -> [N,N]
inline Var gram(const Var& x) {
    if (x->value.rank() != 2) throw ShapeMismatch("gram: [C,N] expected");
    const int C = x->value.dim(0), N = x->value.dim(1);
    Tensor out(Shape{N, N});
    for (int a = 0; a < N; ++a)
        for (int b = 0; b < N; ++b) {
            double s = 0.0;
            for (int c = 0; c < C; ++c) s += x->value.at(c, a) * x->value.at(c, b);
            out.at(a, b) = s;
        }
    return make_op(std::move(out), {x}, [x, C, N](const Tensor& g, GradMap& sink) {
        if (!x->requires_grad) return;
        Tensor gx(x->value.shape());  // gX = X (U + U^T)
        for (int c = 0; c < C; ++c)
            for (int a = 0; a < N; ++a) {
                double s = 0.0;
                for (int b = 0; b < N; ++b) s += x->value.at(c, b) * (g.at(a, b) + g.at(b, a));
                gx.at(c, a) = s;
            }
        accum(sink, x.get(), std::move(gx));
    });
}

// ------------------------------------------------------------ topology ops

// per-channel topology apply: y[c,t,a] = sum_b A[c,a,b] X[c,t,b]
inline Var topology_apply(const Var& a, const Var& x) {
    if (a->value.rank() != 3 || x->value.rank() != 3 || a->value.dim(0) != x->value.dim(0) ||
        a->value.dim(1) != a->value.dim(2) || a->value.dim(1) != x->value.dim(2))
        throw ShapeMismatch("topology_apply: A " + shape_str(a->value.shape()) + " X " + shape_str(x->value.shape()));
    const int C = a->value.dim(0), N = a->value.dim(1), T = x->value.dim(1);
    Tensor out(Shape{C, T, N});
    for (int c = 0; c < C; ++c)
        for (int t = 0; t < T; ++t)
            for (int aa = 0; aa < N; ++aa) {
                double s = 0.0;
                for (int b = 0; b < N; ++b) s += a->value.at(c, aa, b) * x->value.at(c, t, b);
                out.at(c, t, aa) = s;
            }
    return make_op(std::move(out), {a, x}, [a, x, C, N, T](const Tensor& g, GradMap& sink) {
        if (a->requires_grad) {
            Tensor ga(a->value.shape());
            for (int c = 0; c < C; ++c)
                for (int aa = 0; aa < N; ++aa)
                    for (int b = 0; b < N; ++b) {
                        double s = 0.0;
                        for (int t = 0; t < T; ++t) s += g.at(c, t, aa) * x->value.at(c, t, b);
                        ga.at(c, aa, b) = s;
                    }
            accum(sink, a.get(), std::move(ga));
        }
        if (x->requires_grad) {
            Tensor gx(x->value.shape());
            for (int c = 0; c < C; ++c)
                for (int t = 0; t < T; ++t)
                    for (int b = 0; b < N; ++b) {
                        double s = 0.0;
                        for (int aa = 0; aa < N; ++aa) s += a->value.at(c, aa, b) * g.at(c, t, aa);
                        gx.at(c, t, b) = s;
                    }
            accum(sink, x.get(), std::move(gx));
        }
    });
}

// channel mixing of stacked matrices: y[o] = sum_i W[i,o] S[i]; S [Ci,N,N]
inline Var mix_channels(const Var& s, const Var& w) {
    if (s->value.rank() != 3 || w->value.rank() != 2 || w->value.dim(0) != s->value.dim(0))
        throw ShapeMismatch("mix_channels: S " + shape_str(s->value.shape()) + " W " + shape_str(w->value.shape()));
    const int Ci = s->value.dim(0), Co = w->value.dim(1);
    const std::size_t P = s->value.size() / static_cast<std::size_t>(Ci);
    Shape oshape = s->value.shape();
    oshape[0] = Co;
    Tensor out(oshape);
    for (int o = 0; o < Co; ++o) {
        double* orow = out.data() + o * P;
        for (int i = 0; i < Ci; ++i) {
            const double wv = w->value.at(i, o);
            if (wv == 0.0) continue;
            const double* srow = s->value.data() + i * P;
            for (std::size_t p = 0; p < P; ++p) orow[p] += wv * srow[p];
        }
    }
    return make_op(std::move(out), {s, w}, [s, w, Ci, Co, P](const Tensor& g, GradMap& sink) {
        if (s->requires_grad) {
            Tensor gs(s->value.shape());
            for (int i = 0; i < Ci; ++i) {
                double* gsrow = gs.data() + i * P;
                for (int o = 0; o < Co; ++o) {
                    const double wv = w->value.at(i, o);
                    if (wv == 0.0) continue;
                    const double* grow = g.data() + o * P;
                    for (std::size_t p = 0; p < P; ++p) gsrow[p] += wv * grow[p];
                }
            }
            accum(sink, s.get(), std::move(gs));
        }
        if (w->requires_grad) {
            Tensor gw(w->value.shape());
            for (int i = 0; i < Ci; ++i)
                for (int o = 0; o < Co; ++o) {
                    const double* srow = s->value.data() + i * P;
                    const double* grow = g.data() + o * P;
                    double acc = 0.0;
                    for (std::size_t p = 0; p < P; ++p) acc += srow[p] * grow[p];
                    gw.at(i, o) = acc;
                }
            accum(sink, w.get(), std::move(gw));
        }
    });
}

// frame mixing: y[c,i,n] = sum_j S[i,j] V[c,j,n]; S [T,T], V [C,T,N]
inline Var time_attention_apply(const Var& s, const Var& v) {
    if (s->value.rank() != 2 || v->value.rank() != 3 || s->value.dim(0) != s->value.dim(1) ||
        s->value.dim(1) != v->value.dim(1))
        throw ShapeMismatch("time_attention_apply: S " + shape_str(s->value.shape()) + " V " +
                            shape_str(v->value.shape()));
    const int T = s->value.dim(0), C = v->value.dim(0), N = v->value.dim(2);
    Tensor out(Shape{C, T, N});
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < T; ++i)
            for (int j = 0; j < T; ++j) {
                const double sv = s->value.at(i, j);
                if (sv == 0.0) continue;
                for (int n = 0; n < N; ++n) out.at(c, i, n) += sv * v->value.at(c, j, n);
            }
    return make_op(std::move(out), {s, v}, [s, v, T, C, N](const Tensor& g, GradMap& sink) {
        if (s->requires_grad) {
            Tensor gs(s->value.shape());
            for (int i = 0; i < T; ++i)
                for (int j = 0; j < T; ++j) {
                    double acc = 0.0;
                    for (int c = 0; c < C; ++c)
                        for (int n = 0; n < N; ++n) acc += g.at(c, i, n) * v->value.at(c, j, n);
                    gs.at(i, j) = acc;
                }
            accum(sink, s.get(), std::move(gs));
        }
        if (v->requires_grad) {
            Tensor gv(v->value.shape());
            for (int c = 0; c < C; ++c)
                for (int j = 0; j < T; ++j)
                    for (int i = 0; i < T; ++i) {
                        const double sv = s->value.at(i, j);
                        if (sv == 0.0) continue;
                        for (int n = 0; n < N; ++n) gv.at(c, j, n) += sv * g.at(c, i, n);
                    }
            accum(sink, v.get(), std::move(gv));
        }
    });
}

// ------------------------------------------------------------- temporal ops

// temporal conv with "same" zero padding, stride 1; X [Ci,T,N], W [Co,Ci,K]
inline Var conv_time(const Var& x, const Var& w, const Var& b, int dilation) {
    if (x->value.rank() != 3 || w->value.rank() != 3 || w->value.dim(1) != x->value.dim(0))
        throw ShapeMismatch("conv_time: X " + shape_str(x->value.shape()) + " W " + shape_str(w->value.shape()));
    const int Ci = x->value.dim(0), T = x->value.dim(1), N = x->value.dim(2);
    const int Co = w->value.dim(0), K = w->value.dim(2);
    const int half = (K - 1) / 2;
    Tensor out(Shape{Co, T, N});
    for (int o = 0; o < Co; ++o) {
        const double bv = b ? b->value.at(o) : 0.0;
        for (int t = 0; t < T; ++t)
            for (int n = 0; n < N; ++n) out.at(o, t, n) = bv;
        for (int c = 0; c < Ci; ++c)
            for (int k = 0; k < K; ++k) {
                const double wv = w->value.at(o, c, k);
                if (wv == 0.0) continue;
                const int off = (k - half) * dilation;
                const int t0 = std::max(0, -off), t1 = std::min(T, T - off);
                for (int t = t0; t < t1; ++t)
                    for (int n = 0; n < N; ++n) out.at(o, t, n) += wv * x->value.at(c, t + off, n);
            }
    }
    std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return make_op(std::move(out), std::move(parents),
                   [x, w, b, Ci, T, N, Co, K, half, dilation](const Tensor& g, GradMap& sink) {
                       if (x->requires_grad) {
                           Tensor gx(x->value.shape());
                           for (int o = 0; o < Co; ++o)
                               for (int c = 0; c < Ci; ++c)
                                   for (int k = 0; k < K; ++k) {
                                       const double wv = w->value.at(o, c, k);
                                       if (wv == 0.0) continue;
                                       const int off = (k - half) * dilation;
                                       const int t0 = std::max(0, -off), t1 = std::min(T, T - off);
                                       for (int t = t0; t < t1; ++t)
                                           for (int n = 0; n < N; ++n)
                                               gx.at(c, t + off, n) += wv * g.at(o, t, n);
                                   }
                           accum(sink, x.get(), std::move(gx));
                       }
                       if (w->requires_grad) {
                           Tensor gw(w->value.shape());
                           for (int o = 0; o < Co; ++o)
                               for (int c = 0; c < Ci; ++c)
                                   for (int k = 0; k < K; ++k) {
                                       const int off = (k - half) * dilation;
                                       const int t0 = std::max(0, -off), t1 = std::min(T, T - off);
                                       double acc = 0.0;
                                       for (int t = t0; t < t1; ++t)
                                           for (int n = 0; n < N; ++n)
                                               acc += g.at(o, t, n) * x->value.at(c, t + off, n);
                                       gw.at(o, c, k) = acc;
                                   }
                           accum(sink, w.get(), std::move(gw));
                       }
                       if (b && b->requires_grad) {
                           Tensor gb(b->value.shape());
                           for (int o = 0; o < Co; ++o) {
                               double acc = 0.0;
                               for (int t = 0; t < T; ++t)
                                   for (int n = 0; n < N; ++n) acc += g.at(o, t, n);
                               gb.at(o) = acc;
                           }
                           accum(sink, b.get(), std::move(gb));
                       }
                   });
}

// temporal max pool, window K (odd), stride 1, "same" extent; X [C,T,N]
inline Var maxpool_time(const Var& x, int k) {
    if (x->value.rank() != 3) throw ShapeMismatch("maxpool_time: [C,T,N] expected");
    const int C = x->value.dim(0), T = x->value.dim(1), N = x->value.dim(2);
    const int half = (k - 1) / 2;
    Tensor out(Shape{C, T, N});
    std::vector<int> arg(out.size());
    for (int c = 0; c < C; ++c)
        for (int t = 0; t < T; ++t)
            for (int n = 0; n < N; ++n) {
                int best_t = std::max(0, t - half);
                double best = x->value.at(c, best_t, n);
                for (int dt = best_t + 1; dt <= std::min(T - 1, t + half); ++dt) {
                    const double v = x->value.at(c, dt, n);
                    if (v > best) {
                        best = v;
                        best_t = dt;
                    }
                }
                out.at(c, t, n) = best;
                arg[(static_cast<std::size_t>(c) * T + t) * N + n] = best_t;
            }
    return make_op(std::move(out), {x}, [x, arg, C, T, N](const Tensor& g, GradMap& sink) {
        if (!x->requires_grad) return;
        Tensor gx(x->value.shape());
        for (int c = 0; c < C; ++c)
            for (int t = 0; t < T; ++t)
                for (int n = 0; n < N; ++n)
                    gx.at(c, arg[(static_cast<std::size_t>(c) * T + t) * N + n], n) += g.at(c, t, n);
        accum(sink, x.get(), std::move(gx));
    });
}

// frame decimation: y[c,i,n] = x[c, i*stride, n]
inline Var subsample_time(const Var& x, int stride) {
    if (stride == 1) return x;
    const int C = x->value.dim(0), T = x->value.dim(1), N = x->value.dim(2);
    const int To = (T + stride - 1) / stride;
    Tensor out(Shape{C, To, N});
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < To; ++i)
            for (int n = 0; n < N; ++n) out.at(c, i, n) = x->value.at(c, i * stride, n);
    return make_op(std::move(out), {x}, [x, C, To, N, stride](const Tensor& g, GradMap& sink) {
        if (!x->requires_grad) return;
        Tensor gx(x->value.shape());
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < To; ++i)
                for (int n = 0; n < N; ++n) gx.at(c, i * stride, n) = g.at(c, i, n);
        accum(sink, x.get(), std::move(gx));
    });
}

// ------------------------------------------------------------ token ops

// gather rows of an embedding table; ids must be in range
inline Var embed_rows(const Var& table, const std::vector<int>& ids) {
    if (table->value.rank() != 2) throw ShapeMismatch("embed_rows: [V,D] expected");
    const int D = table->value.dim(1);
    Tensor out(Shape{static_cast<int>(ids.size()), D});
    for (std::size_t l = 0; l < ids.size(); ++l)
        std::copy_n(table->value.data() + static_cast<std::size_t>(ids[l]) * D, D,
                    out.data() + l * D);
    return make_op(std::move(out), {table}, [table, ids, D](const Tensor& g, GradMap& sink) {
        if (!table->requires_grad) return;
        Tensor gt(table->value.shape());
        for (std::size_t l = 0; l < ids.size(); ++l) {
            double* row = gt.data() + static_cast<std::size_t>(ids[l]) * D;
            const double* gr = g.data() + l * D;
            for (int d = 0; d < D; ++d) row[d] += gr[d];
        }
        accum(sink, table.get(), std::move(gt));
    });
}

// additive causal mask: entries with col > row become -1e30
inline Var causal_mask(const Var& x) {
    if (x->value.rank() != 2 || x->value.dim(0) != x->value.dim(1))
        throw ShapeMismatch("causal_mask: square matrix expected");
    const int T = x->value.dim(0);
    Tensor out = x->value;
    for (int i = 0; i < T; ++i)
        for (int j = i + 1; j < T; ++j) out.at(i, j) = -1e30;
    return make_op(std::move(out), {x}, [x, T](const Tensor& g, GradMap& sink) {
        if (!x->requires_grad) return;
        Tensor gx(x->value.shape());
        for (int i = 0; i < T; ++i)
            for (int j = 0; j <= i; ++j) gx.at(i, j) = g.at(i, j);
        accum(sink, x.get(), std::move(gx));
    });
}

// sum of -log softmax(logits[row])[label[row]] over rows with label >= 0.
// labels use -100 (any negative) as the ignore marker.
inline Var masked_nll(const Var& logits, const std::vector<int>& labels) {
    if (logits->value.rank() != 2 || static_cast<std::size_t>(logits->value.dim(0)) != labels.size())
        throw ShapeMismatch("masked_nll: [L,V] logits with L labels expected");
    const int L = logits->value.dim(0), V = logits->value.dim(1);
    Tensor probs(Shape{L, V});
    double loss = 0.0;
    for (int l = 0; l < L; ++l) {
        const double* row = logits->value.data() + static_cast<std::size_t>(l) * V;
        double mx = row[0];
        for (int v = 1; v < V; ++v) mx = std::max(mx, row[v]);
        double z = 0.0;
        double* prow = probs.data() + static_cast<std::size_t>(l) * V;
        for (int v = 0; v < V; ++v) {
            prow[v] = std::exp(row[v] - mx);
            z += prow[v];
        }
        const double inv = 1.0 / z;
        for (int v = 0; v < V; ++v) prow[v] *= inv;
        if (labels[l] >= 0) loss -= std::log(std::max(prow[labels[l]], 1e-300));
    }
    return make_op(Tensor::scalar(loss), {logits}, [logits, probs, labels, L, V](const Tensor& g, GradMap& sink) {
        if (!logits->requires_grad) return;
        Tensor gx(logits->value.shape());
        for (int l = 0; l < L; ++l) {
            if (labels[l] < 0) continue;
            const double* prow = probs.data() + static_cast<std::size_t>(l) * V;
            double* gr = gx.data() + static_cast<std::size_t>(l) * V;
            for (int v = 0; v < V; ++v) gr[v] = g[0] * prow[v];
            gr[labels[l]] -= g[0];
        }
        accum(sink, logits.get(), std::move(gx));
    });
}

}  // namespace ag
}  // namespace hocslm
