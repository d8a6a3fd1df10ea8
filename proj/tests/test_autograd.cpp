#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bvi/autograd.hpp"
#include "fd_check.hpp"

using namespace bvi;

namespace {

Tensor random_tensor(Rng& rng, int c, int h, int w, double lo = -1, double hi = 1) {
    Tensor t(c, h, w);
    for (double& v : t.v) v = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("conv forward matches a naive per-pixel reference") {
    Rng rng(1);
    Tensor x = random_tensor(rng, 3, 5, 6);
    ConvParam p;
    p.init_shape("c", 2, 3, 3);
    init_conv(p, rng);
    Tensor y;
    conv2d_forward(x, p, y);
    REQUIRE(y.c == 2);
    REQUIRE(y.h == 5);
    REQUIRE(y.w == 6);
    for (int oc = 0; oc < 2; ++oc)
        for (int yy = 0; yy < 5; ++yy)
            for (int xx = 0; xx < 6; ++xx) {
                double want = p.b[static_cast<size_t>(oc)];
                for (int ic = 0; ic < 3; ++ic)
                    for (int ky = -1; ky <= 1; ++ky)
                        for (int kx = -1; kx <= 1; ++kx) {
                            int sy = yy + ky, sx = xx + kx;
                            if (sy < 0 || sy >= 5 || sx < 0 || sx >= 6) continue;
                            want += p.wat(oc, ic, ky + 1, kx + 1) * x.at(ic, sy, sx);
                        }
                CHECK(y.at(oc, yy, xx) == doctest::Approx(want).epsilon(1e-12));
            }
}

TEST_CASE("conv gradients match finite differences") {
    Rng rng(2);
    Tensor x = random_tensor(rng, 2, 4, 4);
    ParameterSet ps;
    ps.group_id = "t";
    ConvParam p;
    p.init_shape("conv", 3, 2, 3);
    init_conv(p, rng);
    for (double& b : p.b) b = rng.uniform(-0.1, 0.1);
    ps.convs.push_back(p);

    auto eval = [&]() {
        Graph g;
        int xi = g.leaf(x);
        int y = g.conv(xi, ps.convs[0]);
        Graph g2;  // weight the output so gradients are not uniform
        (void)g2;
        int s = g.charbonnier_mean(y, 1e-2);
        return g.scalar(s);
    };
    ps.zero_grad();
    {
        Graph g;
        int xi = g.leaf(x);
        int s = g.charbonnier_mean(g.conv(xi, ps.convs[0]), 1e-2);
        g.backward(s);
    }
    auto rep = bvi_test::finite_diff_check({&ps}, eval);
    CHECK(rep.max_rel < 1e-4);
    CHECK(rep.checked == ps.convs[0].count());
}

TEST_CASE("conv input gradient matches finite differences") {
    Rng rng(3);
    Tensor x = random_tensor(rng, 2, 4, 5);
    ConvParam p;
    p.init_shape("conv", 2, 2, 3);
    init_conv(p, rng);

    Graph g;
    int xi = g.leaf(x);
    int s = g.charbonnier_mean(g.conv(xi, p), 1e-2);
    g.backward(s);
    const Tensor gx = g.grad(xi);

    const double h = 1e-6;
    double max_rel = 0;
    for (size_t i = 0; i < x.size(); i += 7) {  // sample every 7th element
        Tensor xp = x, xm = x;
        xp.v[i] += h;
        xm.v[i] -= h;
        Graph gp, gm;
        double lp = gp.scalar(gp.charbonnier_mean(gp.conv(gp.leaf(xp), p), 1e-2));
        double lm = gm.scalar(gm.charbonnier_mean(gm.conv(gm.leaf(xm), p), 1e-2));
        double fd = (lp - lm) / (2 * h);
        max_rel = std::max(max_rel, std::abs(fd - gx.v[i]) /
                                        std::max({std::abs(fd), std::abs(gx.v[i]), 1e-4}));
    }
    CHECK(max_rel < 1e-4);
}

TEST_CASE("elementwise ops backprop correctly through a mixed expression") {
    Rng rng(4);
    Tensor a = random_tensor(rng, 2, 3, 3);
    Tensor b = random_tensor(rng, 2, 3, 3);
    ParameterSet ps;
    ConvParam p;
    p.init_shape("mix", 2, 2, 1);
    init_conv(p, rng);
    ps.convs.push_back(p);

    auto build = [&](Graph& g) {
        int ai = g.leaf(a), bi = g.leaf(b);
        int t = g.mul(g.sigmoid(g.conv(ai, ps.convs[0])), g.tanh_(bi));
        t = g.add(t, g.relu(ai));
        t = g.linear_comb({t, bi}, {0.7, -0.3});
        return g.charbonnier_mean(t, 1e-3);
    };
    ps.zero_grad();
    {
        Graph g;
        g.backward(build(g));
    }
    auto rep = bvi_test::finite_diff_check({&ps}, [&]() {
        Graph g;
        return g.scalar(build(g));
    });
    CHECK(rep.max_rel < 1e-4);
}

TEST_CASE("concat and slice are exact inverses in forward and backward") {
    Rng rng(5);
    Tensor a = random_tensor(rng, 2, 3, 4);
    Tensor b = random_tensor(rng, 3, 3, 4);
    Graph g;
    int ai = g.leaf(a), bi = g.leaf(b);
    int cat = g.concat({ai, bi});
    REQUIRE(g.value(cat).c == 5);
    int sa = g.slice_channels(cat, 0, 2);
    int sb = g.slice_channels(cat, 2, 5);
    CHECK(g.value(sa).v == a.v);
    CHECK(g.value(sb).v == b.v);
    int s = g.sum_all(g.mul(sb, sb));
    g.backward(s);
    // d(sum b^2)/da = 0, /db = 2b
    for (double v : g.grad(ai).v) CHECK(v == 0.0);
    for (size_t i = 0; i < b.size(); ++i)
        CHECK(g.grad(bi).v[i] == doctest::Approx(2 * b.v[i]).epsilon(1e-12));
}

TEST_CASE("up_shuffle is the exact inverse of down_shuffle") {
    Rng rng(6);
    Tensor x = random_tensor(rng, 3, 6, 8);
    Graph g;
    int xi = g.leaf(x);
    int rt = g.up_shuffle(g.down_shuffle(xi, 2), 2);
    CHECK(g.value(rt).v == x.v);
    // and the other order, starting from channel-rich input
    Tensor z = random_tensor(rng, 12, 3, 4);
    int zi = g.leaf(z);
    int rt2 = g.down_shuffle(g.up_shuffle(zi, 2), 2);
    CHECK(g.value(rt2).v == z.v);
}

TEST_CASE("down_shuffle rejects non-divisible dims") {
    Graph g;
    int x = g.leaf(Tensor(3, 5, 6));
    CHECK_THROWS_AS(g.down_shuffle(x, 2), invalid_input);
}

TEST_CASE("shuffle pair backward is the inverse permutation") {
    Rng rng(7);
    Tensor x = random_tensor(rng, 2, 4, 4);
    Graph g;
    int xi = g.leaf(x);
    int y = g.down_shuffle(xi, 2);
    int s = g.sum_all(g.mul(y, y));
    g.backward(s);
    for (size_t i = 0; i < x.size(); ++i)
        CHECK(g.grad(xi).v[i] == doctest::Approx(2 * x.v[i]).epsilon(1e-12));
}

TEST_CASE("charbonnier_mean value and gradient") {
    Graph g;
    Tensor x(1, 1, 2);
    x.v = {0.0, 3e-3};
    int s = g.charbonnier_mean(g.leaf(x), 1e-3);
    // mean of rho(0)=1e-3 and rho(3e-3)=sqrt(1e-5)
    double want = 0.5 * (1e-3 + std::sqrt(1e-5));
    CHECK(g.scalar(s) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("gradient accumulates when a node feeds two consumers") {
    Rng rng(8);
    Tensor x = random_tensor(rng, 1, 2, 2);
    Graph g;
    int xi = g.leaf(x);
    int y = g.add(g.mul(xi, xi), g.scale(xi, 3.0));  // x^2 + 3x
    g.backward(g.sum_all(y));
    for (size_t i = 0; i < x.size(); ++i)
        CHECK(g.grad(xi).v[i] == doctest::Approx(2 * x.v[i] + 3).epsilon(1e-12));
}
