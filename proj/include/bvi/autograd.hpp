#pragma once

#include <functional>
#include <vector>

#include "bvi/tensor.hpp"

namespace bvi {

// ---------------------------------------------------------------------------
// Direct convolution kernels ('same' zero padding, stride 1, square kernels).
// The hot loops of the whole toolkit; laid out so the innermost loop is a
// contiguous axpy/dot the compiler can vectorize. OpenMP splits planes across
// threads with no shared accumulators, so results are bitwise reproducible.

inline void conv2d_forward(const Tensor& x, const ConvParam& p, Tensor& y) {
    if (x.c != p.in_c) throw config_error("conv2d: input channel mismatch for " + p.name);
    const int pad = p.k / 2;
    const int ph = x.h + 2 * pad, pw = x.w + 2 * pad;
    std::vector<double> xp(static_cast<size_t>(x.c) * ph * pw, 0.0);
    for (int ci = 0; ci < x.c; ++ci)
        for (int yy = 0; yy < x.h; ++yy)
            std::memcpy(xp.data() + (static_cast<size_t>(ci) * ph + yy + pad) * pw + pad,
                        x.plane(ci) + static_cast<size_t>(yy) * x.w,
                        static_cast<size_t>(x.w) * sizeof(double));

    y = Tensor(p.out_c, x.h, x.w);
    const long long work =
        static_cast<long long>(p.out_c) * p.in_c * p.k * p.k * x.h * x.w;
#pragma omp parallel for schedule(static) if (work > 200000)
    for (int oc = 0; oc < p.out_c; ++oc) {
        double* yp = y.plane(oc);
        const size_t n = static_cast<size_t>(x.h) * x.w;
        for (size_t i = 0; i < n; ++i) yp[i] = p.b[oc];
        for (int ic = 0; ic < p.in_c; ++ic) {
            const double* xpp = xp.data() + static_cast<size_t>(ic) * ph * pw;
            const double* wk = &p.w[(static_cast<size_t>(oc) * p.in_c + ic) * p.k * p.k];
            for (int ky = 0; ky < p.k; ++ky)
                for (int kx = 0; kx < p.k; ++kx) {
                    const double wv = wk[ky * p.k + kx];
                    for (int yy = 0; yy < x.h; ++yy) {
                        const double* src = xpp + static_cast<size_t>(yy + ky) * pw + kx;
                        double* dst = yp + static_cast<size_t>(yy) * x.w;
                        for (int xx = 0; xx < x.w; ++xx) dst[xx] += wv * src[xx];
                    }
                }
        }
    }
}

// Accumulates into p.gw/p.gb and (if gx != nullptr) into *gx.
inline void conv2d_backward(const Tensor& x, ConvParam& p, const Tensor& gy, Tensor* gx) {
    const int pad = p.k / 2;
    const int ph = x.h + 2 * pad, pw = x.w + 2 * pad;
    std::vector<double> xp(static_cast<size_t>(x.c) * ph * pw, 0.0);
    for (int ci = 0; ci < x.c; ++ci)
        for (int yy = 0; yy < x.h; ++yy)
            std::memcpy(xp.data() + (static_cast<size_t>(ci) * ph + yy + pad) * pw + pad,
                        x.plane(ci) + static_cast<size_t>(yy) * x.w,
                        static_cast<size_t>(x.w) * sizeof(double));

    const long long work =
        static_cast<long long>(p.out_c) * p.in_c * p.k * p.k * x.h * x.w;
#pragma omp parallel for schedule(static) if (work > 200000)
    for (int oc = 0; oc < p.out_c; ++oc) {
        const double* gyp = gy.plane(oc);
        const size_t n = static_cast<size_t>(x.h) * x.w;
        double s = 0.0;
        for (size_t i = 0; i < n; ++i) s += gyp[i];
        p.gb[oc] += s;
        for (int ic = 0; ic < p.in_c; ++ic) {
            const double* xpp = xp.data() + static_cast<size_t>(ic) * ph * pw;
            double* gwk = &p.gw[(static_cast<size_t>(oc) * p.in_c + ic) * p.k * p.k];
            for (int ky = 0; ky < p.k; ++ky)
                for (int kx = 0; kx < p.k; ++kx) {
                    double acc = 0.0;
                    for (int yy = 0; yy < x.h; ++yy) {
                        const double* src = xpp + static_cast<size_t>(yy + ky) * pw + kx;
                        const double* g = gyp + static_cast<size_t>(yy) * x.w;
                        for (int xx = 0; xx < x.w; ++xx) acc += src[xx] * g[xx];
                    }
                    gwk[ky * p.k + kx] += acc;
                }
        }
    }

    if (!gx) return;
    std::vector<double> gxp(static_cast<size_t>(x.c) * ph * pw, 0.0);
#pragma omp parallel for schedule(static) if (work > 200000)
    for (int ic = 0; ic < p.in_c; ++ic) {
        double* gxpp = gxp.data() + static_cast<size_t>(ic) * ph * pw;
        for (int oc = 0; oc < p.out_c; ++oc) {
            const double* gyp = gy.plane(oc);
            const double* wk = &p.w[(static_cast<size_t>(oc) * p.in_c + ic) * p.k * p.k];
            for (int ky = 0; ky < p.k; ++ky)
                for (int kx = 0; kx < p.k; ++kx) {
                    const double wv = wk[ky * p.k + kx];
                    for (int yy = 0; yy < x.h; ++yy) {
                        double* dst = gxpp + static_cast<size_t>(yy + ky) * pw + kx;
                        const double* g = gyp + static_cast<size_t>(yy) * x.w;
                        for (int xx = 0; xx < x.w; ++xx) dst[xx] += wv * g[xx];
                    }
                }
        }
    }
    for (int ci = 0; ci < x.c; ++ci)
        for (int yy = 0; yy < x.h; ++yy) {
            const double* src = gxp.data() + (static_cast<size_t>(ci) * ph + yy + pad) * pw + pad;
            double* dst = gx->plane(ci) + static_cast<size_t>(yy) * x.w;
            for (int xx = 0; xx < x.w; ++xx) dst[xx] += src[xx];
        }
}

// ---------------------------------------------------------------------------
// Reverse-mode tape. Nodes are created in topological order; backward() walks
// them in reverse, accumulating into node grads and directly into ConvParam
// gradient buffers (which is what makes weight sharing across applications
// work with no extra bookkeeping).

class Graph {
public:
    struct Node {
        Tensor val;
        Tensor grad;
        std::vector<int> parents;
        std::function<void(Graph&, int)> back;  // empty for leaves
    };

    std::vector<Node> nodes;

    const Tensor& value(int id) const { return nodes[static_cast<size_t>(id)].val; }
    Tensor& grad(int id) { return nodes[static_cast<size_t>(id)].grad; }
    double scalar(int id) const { return nodes[static_cast<size_t>(id)].val.v.at(0); }

    int leaf(Tensor t) {
        Node n;
        n.val = std::move(t);
        nodes.push_back(std::move(n));
        return static_cast<int>(nodes.size()) - 1;
    }

    int conv(int x, ConvParam& p) {
        Node n;
        conv2d_forward(value(x), p, n.val);
        n.parents = {x};
        ConvParam* pp = &p;
        n.back = [x, pp](Graph& g, int self) {
            conv2d_backward(g.value(x), *pp, g.grad(self), &g.grad(x));
        };
        nodes.push_back(std::move(n));
        return static_cast<int>(nodes.size()) - 1;
    }

    int relu(int x) {
        Node n;
        n.val = value(x);
        for (double& v : n.val.v) v = v > 0 ? v : 0.0;
        n.parents = {x};
        n.back = [x](Graph& g, int self) {
            const Tensor& xv = g.value(x);
            const Tensor& gy = g.grad(self);
            Tensor& gx = g.grad(x);
            for (size_t i = 0; i < gx.size(); ++i)
                if (xv.v[i] > 0) gx.v[i] += gy.v[i];
        };
        nodes.push_back(std::move(n));
        return static_cast<int>(nodes.size()) - 1;
    }

    int sigmoid(int x) {
        Node n;
        n.val = value(x);
        for (double& v : n.val.v) v = 1.0 / (1.0 + std::exp(-v));
        n.parents = {x};
        n.back = [x](Graph& g, int self) {
            const Tensor& y = g.value(self);
            const Tensor& gy = g.grad(self);
            Tensor& gx = g.grad(x);
            for (size_t i = 0; i < gx.size(); ++i) gx.v[i] += gy.v[i] * y.v[i] * (1.0 - y.v[i]);
        };
        nodes.push_back(std::move(n));
        return static_cast<int>(nodes.size()) - 1;
    }

    int tanh_(int x) {
        Node n;
        n.val = value(x);
        for (double& v : n.val.v) v = std::tanh(v);
        n.parents = {x};
        n.back = [x](Graph& g, int self) {
            const Tensor& y = g.value(self);
            const Tensor& gy = g.grad(self);
            Tensor& gx = g.grad(x);
            for (size_t i = 0; i < gx.size(); ++i) gx.v[i] += gy.v[i] * (1.0 - y.v[i] * y.v[i]);
        };
        nodes.push_back(std::move(n));
        return static_cast<int>(nodes.size()) - 1;
    }

    int mul(int a, int b) {
        if (!value(a).same_shape(value(b))) throw config_error("mul: shape mismatch");
        Node n;
        n.val = value(a);
        for (size_t i = 0; i < n.val.size(); ++i) n.val.v[i] *= value(b).v[i];
        n.parents = {a, b};
        n.back = [a, b](Graph& g, int self) {
            const Tensor& gy = g.grad(self);
            const Tensor& av = g.value(a);
            const Tensor& bv = g.value(b);
            Tensor& ga = g.grad(a);
            Tensor& gb = g.grad(b);
            for (size_t i = 0; i < gy.size(); ++i) {
                ga.v[i] += gy.v[i] * bv.v[i];
                gb.v[i] += gy.v[i] * av.v[i];
            }
        };
        nodes.push_back(std::move(n));
        return static_cast<int>(nodes.size()) - 1;
    }

    // elementwise sum_i coef_i * x_i over same-shape tensors
    int linear_comb(const std::vector<int>& xs, const std::vector<double>& coefs) {
        if (xs.empty() || xs.size() != coefs.size()) throw config_error("linear_comb: bad args");
        Node n;
        n.val = value(xs[0]);
        n.val.fill(0.0);
        for (size_t j = 0; j < xs.size(); ++j) {
            const Tensor& xv = value(xs[j]);
            if (!xv.same_shape(n.val)) throw config_error("linear_comb: shape mismatch");
            for (size_t i = 0; i < n.val.size(); ++i) n.val.v[i] += coefs[j] * xv.v[i];
        }
        n.parents = xs;
        std::vector<double> cs = coefs;
        std::vector<int> xs2 = xs;
        n.back = [xs2, cs](Graph& g, int self) {
            const Tensor& gy = g.grad(self);
            for (size_t j = 0; j < xs2.size(); ++j) {
                Tensor& gx = g.grad(xs2[j]);
                for (size_t i = 0; i < gy.size(); ++i) gx.v[i] += cs[j] * gy.v[i];
            }
        };
        nodes.push_back(std::move(n));
        return static_cast<int>(nodes.size()) - 1;
    }

    int add(int a, int b) { return linear_comb({a, b}, {1.0, 1.0}); }
    int sub(int a, int b) { return linear_comb({a, b}, {1.0, -1.0}); }
    int scale(int a, double s) { return linear_comb({a}, {s}); }

    int concat(const std::vector<int>& xs) {
        if (xs.empty()) throw config_error("concat: no inputs");
        const Tensor& t0 = value(xs[0]);
        int total_c = 0;
        for (int id : xs) {
            const Tensor& t = value(id);
            if (t.h != t0.h || t.w != t0.w) throw config_error("concat: spatial mismatch");
            total_c += t.c;
        }
        Node n;
        n.val = Tensor(total_c, t0.h, t0.w);
        size_t off = 0;
        for (int id : xs) {
            const Tensor& t = value(id);
            std::memcpy(n.val.v.data() + off, t.v.data(), t.size() * sizeof(double));
            off += t.size();
        }
        n.parents = xs;
        std::vector<int> xs2 = xs;
        n.back = [xs2](Graph& g, int self) {
            const Tensor& gy = g.grad(self);
            size_t off = 0;
            for (int id : xs2) {
                Tensor& gx = g.grad(id);
                for (size_t i = 0; i < gx.size(); ++i) gx.v[i] += gy.v[off + i];
                off += gx.size();
            }
        };
        nodes.push_back(std::move(n));
        return static_cast<int>(nodes.size()) - 1;
    }

    int slice_channels(int x, int c0, int c1) {
        const Tensor& xv = value(x);
        if (c0 < 0 || c1 > xv.c || c0 >= c1) throw config_error("slice_channels: bad range");
        Node n;
        n.val = Tensor(c1 - c0, xv.h, xv.w);
        const size_t plane = static_cast<size_t>(xv.h) * xv.w;
        std::memcpy(n.val.v.data(), xv.v.data() + c0 * plane, n.val.size() * sizeof(double));
        n.parents = {x};
        n.back = [x, c0, plane](Graph& g, int self) {
            const Tensor& gy = g.grad(self);
            Tensor& gx = g.grad(x);
            for (size_t i = 0; i < gy.size(); ++i) gx.v[c0 * plane + i] += gy.v[i];
        };
        nodes.push_back(std::move(n));
        return static_cast<int>(nodes.size()) - 1;
    }

    // space-to-channel: (C,H,W) -> (C*r^2, H/r, W/r)
    int down_shuffle(int x, int r) {
        const Tensor& xv = value(x);
        if (r < 1 || xv.h % r != 0 || xv.w % r != 0)
            throw invalid_input("down_shuffle: dims not divisible by factor");
        Node n;
        n.val = Tensor(xv.c * r * r, xv.h / r, xv.w / r);
        shuffle_down(xv, n.val, r);
        n.parents = {x};
        n.back = [x, r](Graph& g, int self) {
            Tensor tmp(g.value(x).c, g.value(x).h, g.value(x).w);
            shuffle_up(g.grad(self), tmp, r);
            Tensor& gx = g.grad(x);
            for (size_t i = 0; i < gx.size(); ++i) gx.v[i] += tmp.v[i];
        };
        nodes.push_back(std::move(n));
        return static_cast<int>(nodes.size()) - 1;
    }

    // channel-to-space: (C*r^2, h, w) -> (C, h*r, w*r); exact inverse of down_shuffle
    int up_shuffle(int x, int r) {
        const Tensor& xv = value(x);
        if (r < 1 || xv.c % (r * r) != 0) throw invalid_input("up_shuffle: channels not divisible by factor^2");
        Node n;
        n.val = Tensor(xv.c / (r * r), xv.h * r, xv.w * r);
        shuffle_up(xv, n.val, r);
        n.parents = {x};
        n.back = [x, r](Graph& g, int self) {
            Tensor tmp(g.value(x).c, g.value(x).h, g.value(x).w);
            shuffle_down(g.grad(self), tmp, r);
            Tensor& gx = g.grad(x);
            for (size_t i = 0; i < gx.size(); ++i) gx.v[i] += tmp.v[i];
        };
        nodes.push_back(std::move(n));
        return static_cast<int>(nodes.size()) - 1;
    }

    // mean over all elements of sqrt(v^2 + eps^2); returns a 1x1x1 scalar node
    int charbonnier_mean(int x, double eps) {
        if (eps <= 0) throw config_error("charbonnier: epsilon must be positive");
        const Tensor& xv = value(x);
        Node n;
        n.val = Tensor(1, 1, 1);
        double s = 0.0;
        for (double v : xv.v) s += std::sqrt(v * v + eps * eps);
        n.val.v[0] = s / static_cast<double>(xv.size());
        n.parents = {x};
        n.back = [x, eps](Graph& g, int self) {
            const Tensor& xv2 = g.value(x);
            const double gy = g.grad(self).v[0];
            const double inv_n = 1.0 / static_cast<double>(xv2.size());
            Tensor& gx = g.grad(x);
            for (size_t i = 0; i < gx.size(); ++i) {
                double v = xv2.v[i];
                gx.v[i] += gy * inv_n * v / std::sqrt(v * v + eps * eps);
            }
        };
        nodes.push_back(std::move(n));
        return static_cast<int>(nodes.size()) - 1;
    }

    int sum_all(int x) {
        Node n;
        n.val = Tensor(1, 1, 1);
        double s = 0.0;
        for (double v : value(x).v) s += v;
        n.val.v[0] = s;
        n.parents = {x};
        n.back = [x](Graph& g, int self) {
            const double gy = g.grad(self).v[0];
            Tensor& gx = g.grad(x);
            for (double& v : gx.v) v += gy;
        };
        nodes.push_back(std::move(n));
        return static_cast<int>(nodes.size()) - 1;
    }

    // weighted sum of 1x1x1 scalar nodes
    int sum_scalars(const std::vector<int>& xs, const std::vector<double>& coefs) {
        return linear_comb(xs, coefs);
    }

    // Seeds d(out)=1 and accumulates gradients in reverse topological order.
    // Call at most once per graph.
    void backward(int out) {
        std::vector<char> need(nodes.size(), 0);
        std::vector<int> stack{out};
        need[static_cast<size_t>(out)] = 1;
        while (!stack.empty()) {
            int i = stack.back();
            stack.pop_back();
            for (int p : nodes[static_cast<size_t>(i)].parents)
                if (!need[static_cast<size_t>(p)]) {
                    need[static_cast<size_t>(p)] = 1;
                    stack.push_back(p);
                }
        }
        for (size_t i = 0; i < nodes.size(); ++i)
            if (need[i])
                nodes[i].grad =
                    Tensor(nodes[i].val.c, nodes[i].val.h, nodes[i].val.w);
        nodes[static_cast<size_t>(out)].grad.fill(1.0);
        for (int i = out; i >= 0; --i)
            if (need[static_cast<size_t>(i)] && nodes[static_cast<size_t>(i)].back)
                nodes[static_cast<size_t>(i)].back(*this, i);
    }

private:
    static void shuffle_down(const Tensor& x, Tensor& y, int r) {
        const int oh = x.h / r, ow = x.w / r;
        for (int ci = 0; ci < x.c; ++ci)
            for (int dy = 0; dy < r; ++dy)
                for (int dx = 0; dx < r; ++dx) {
                    double* dst = y.plane((ci * r + dy) * r + dx);
                    for (int yy = 0; yy < oh; ++yy)
                        for (int xx = 0; xx < ow; ++xx)
                            dst[static_cast<size_t>(yy) * ow + xx] =
                                x.at(ci, yy * r + dy, xx * r + dx);
                }
    }

    static void shuffle_up(const Tensor& x, Tensor& y, int r) {
        const int ih = x.h, iw = x.w;
        for (int ci = 0; ci < y.c; ++ci)
            for (int dy = 0; dy < r; ++dy)
                for (int dx = 0; dx < r; ++dx) {
                    const double* src = x.plane((ci * r + dy) * r + dx);
                    for (int yy = 0; yy < ih; ++yy)
                        for (int xx = 0; xx < iw; ++xx)
                            y.at(ci, yy * r + dy, xx * r + dx) =
                                src[static_cast<size_t>(yy) * iw + xx];
                }
    }
};

}  // namespace bvi
