#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bvi/backbone.hpp"
#include "fd_check.hpp"

using namespace bvi;

namespace {

Tensor random_tensor(Rng& rng, int c, int h, int w, double lo = -1, double hi = 1) {
    Tensor t(c, h, w);
    for (double& v : t.v) v = rng.uniform(lo, hi);
    return t;
}

// 5-conv parameter block for a standalone residual dense block test
ParameterSet make_rdb_params(int channels, int growth, Rng& rng, bool zero = false) {
    ParameterSet ps;
    ps.group_id = "rdb_test";
    for (int j = 0; j < 4; ++j) {
        ConvParam p;
        p.init_shape("dense" + std::to_string(j), growth, channels + j * growth, 3);
        if (!zero) init_conv(p, rng);
        ps.convs.push_back(std::move(p));
    }
    ConvParam fuse;
    fuse.init_shape("fuse", channels, channels + 4 * growth, 1);
    if (!zero) init_conv(fuse, rng);
    ps.convs.push_back(std::move(fuse));
    return ps;
}

}  // namespace

TEST_CASE("rdb with all-zero parameters is the identity") {
    Rng rng(1);
    ParameterSet ps = make_rdb_params(4, 2, rng, /*zero=*/true);
    Tensor x = random_tensor(rng, 4, 5, 5);
    Graph g;
    int out = residual_dense_block(g, ps, 0, g.leaf(x));
    CHECK(g.value(out).v == x.v);
}

TEST_CASE("rdb propagates a bias set only on the 1x1 fusion") {
    Rng rng(2);
    ParameterSet ps = make_rdb_params(4, 2, rng, /*zero=*/true);
    for (double& b : ps.convs[4].b) b = 0.125;
    Tensor x(4, 3, 3);  // zero input
    Graph g;
    int out = residual_dense_block(g, ps, 0, g.leaf(x));
    for (double v : g.value(out).v) CHECK(v == doctest::Approx(0.125).epsilon(1e-12));
}

TEST_CASE("rdb gradients match finite differences") {
    Rng rng(3);
    ParameterSet ps = make_rdb_params(4, 2, rng);
    Tensor x = random_tensor(rng, 4, 5, 5);
    auto build = [&](Graph& g) {
        return g.charbonnier_mean(residual_dense_block(g, ps, 0, g.leaf(x)), 1e-2);
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
    INFO("worst: ", rep.worst);
    CHECK(rep.max_rel < 1e-4);
}

TEST_CASE("backbone maps two frames to one frame of the same shape") {
    Rng rng(4);
    BackboneConfig cfg;  // toy defaults: base 16, growth 8, 6 rdbs
    ParameterSet ps = make_backbone_params(cfg, "level1", rng);
    Graph g;
    int f0 = g.leaf(random_tensor(rng, 3, 64, 64, 0, 1));
    int f1 = g.leaf(random_tensor(rng, 3, 64, 64, 0, 1));
    int out = backbone_forward(g, cfg, ps, {f0, f1}, {}, -1);
    CHECK(g.value(out).c == 3);
    CHECK(g.value(out).h == 64);
    CHECK(g.value(out).w == 64);
}

TEST_CASE("zero-parameter backbone is the input-average predictor") {
    Rng rng(5);
    BackboneConfig cfg;
    cfg.base_channels = 8;
    cfg.rdb_growth = 4;
    cfg.num_rdbs = 2;
    ParameterSet ps = make_backbone_params(cfg, "level1", rng);
    for (auto& c : ps.convs) {
        std::fill(c.w.begin(), c.w.end(), 0.0);
        std::fill(c.b.begin(), c.b.end(), 0.0);
    }
    Tensor a = random_tensor(rng, 3, 8, 8, 0, 1);
    Tensor b = random_tensor(rng, 3, 8, 8, 0, 1);
    Graph g;
    int out = backbone_forward(g, cfg, ps, {g.leaf(a), g.leaf(b)}, {}, -1);
    for (size_t i = 0; i < a.size(); ++i)
        CHECK(g.value(out).v[i] == doctest::Approx(0.5 * (a.v[i] + b.v[i])).epsilon(1e-12));
}

TEST_CASE("backbone rejects non-divisible spatial dims") {
    Rng rng(6);
    BackboneConfig cfg;
    cfg.base_channels = 4;
    cfg.rdb_growth = 2;
    cfg.num_rdbs = 1;
    ParameterSet ps = make_backbone_params(cfg, "level1", rng);
    Graph g;
    int f0 = g.leaf(Tensor(3, 7, 8));
    int f1 = g.leaf(Tensor(3, 7, 8));
    CHECK_THROWS_AS(backbone_forward(g, cfg, ps, {f0, f1}, {}, -1), invalid_input);
}

TEST_CASE("backbone gradients match finite differences on a tiny config") {
    Rng rng(7);
    BackboneConfig cfg;
    cfg.base_channels = 4;
    cfg.rdb_growth = 2;
    cfg.num_rdbs = 1;
    ParameterSet ps = make_backbone_params(cfg, "level1", rng);
    Tensor a = random_tensor(rng, 3, 6, 6, 0, 1);
    Tensor b = random_tensor(rng, 3, 6, 6, 0, 1);
    Tensor target = random_tensor(rng, 3, 6, 6, 0, 1);
    auto build = [&](Graph& g) {
        int out = backbone_forward(g, cfg, ps, {g.leaf(a), g.leaf(b)}, {}, -1);
        return g.charbonnier_mean(g.sub(out, g.leaf(target)), 1e-3);
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
    INFO("worst: ", rep.worst, " over ", rep.checked, " params");
    CHECK(rep.max_rel < 1e-4);
}

TEST_CASE("backbone with aux input consumes the hidden state") {
    Rng rng(8);
    BackboneConfig cfg;
    cfg.base_channels = 4;
    cfg.rdb_growth = 2;
    cfg.num_rdbs = 1;
    cfg.aux_channels = 2;
    ParameterSet ps = make_backbone_params(cfg, "level2", rng);
    Graph g;
    int f0 = g.leaf(random_tensor(rng, 3, 6, 6, 0, 1));
    int f1 = g.leaf(random_tensor(rng, 3, 6, 6, 0, 1));
    CHECK_THROWS_AS(backbone_forward(g, cfg, ps, {f0, f1}, {}, -1), config_error);
    int aux = g.leaf(random_tensor(rng, 2, 3, 3));
    int out = backbone_forward(g, cfg, ps, {f0, f1}, {}, aux);
    CHECK(g.value(out).c == 3);

    // a different hidden state must change the output
    Graph g2;
    int a0 = g2.leaf(g.value(f0)), a1 = g2.leaf(g.value(f1));
    int aux2 = g2.leaf(random_tensor(rng, 2, 3, 3));
    int out2 = backbone_forward(g2, cfg, ps, {a0, a1}, {}, aux2);
    CHECK(g.value(out).v != g2.value(out2).v);
}

// ---------------------------------------------------------------------------

TEST_CASE("convlstm zero fixed point") {
    ConvLSTMConfig cfg{4, 3, 3};
    Rng rng(9);
    ParameterSet ps = make_convlstm_params(cfg, "lstm", rng);
    std::fill(ps.convs[0].w.begin(), ps.convs[0].w.end(), 0.0);
    std::fill(ps.convs[0].b.begin(), ps.convs[0].b.end(), 0.0);
    Graph g;
    int x = g.leaf(Tensor(4, 5, 5));
    int h = g.leaf(Tensor(3, 5, 5));
    int c = g.leaf(Tensor(3, 5, 5));
    auto out = convlstm_step(g, cfg, ps, x, h, c);
    for (double v : g.value(out.hidden).v) CHECK(v == 0.0);
    for (double v : g.value(out.cell).v) CHECK(v == 0.0);
}

TEST_CASE("saturated gates preserve the cell state") {
    ConvLSTMConfig cfg{2, 2, 3};
    Rng rng(10);
    ParameterSet ps = make_convlstm_params(cfg, "lstm", rng);
    std::fill(ps.convs[0].w.begin(), ps.convs[0].w.end(), 0.0);
    std::fill(ps.convs[0].b.begin(), ps.convs[0].b.end(), 0.0);
    const int H = cfg.hidden_channels;
    for (int j = 0; j < H; ++j) {
        ps.convs[0].b[static_cast<size_t>(j)] = -30.0;      // input gate shut
        ps.convs[0].b[static_cast<size_t>(H + j)] = 30.0;   // forget gate open
    }
    Rng rng2(11);
    Tensor c0 = random_tensor(rng2, 2, 4, 4, -0.5, 0.5);
    Graph g;
    auto out = convlstm_step(g, cfg, ps, g.leaf(random_tensor(rng2, 2, 4, 4)),
                             g.leaf(random_tensor(rng2, 2, 4, 4)), g.leaf(c0));
    for (size_t i = 0; i < c0.size(); ++i)
        CHECK(g.value(out.cell).v[i] == doctest::Approx(c0.v[i]).epsilon(1e-4));
}

TEST_CASE("1x1-kernel convlstm on a single pixel equals a scalar LSTM") {
    ConvLSTMConfig cfg{3, 2, 1};
    Rng rng(12);
    ParameterSet ps = make_convlstm_params(cfg, "lstm", rng);
    for (double& b : ps.convs[0].b) b = rng.uniform(-0.5, 0.5);
    Tensor x = random_tensor(rng, 3, 1, 1);
    Tensor h0 = random_tensor(rng, 2, 1, 1);
    Tensor c0 = random_tensor(rng, 2, 1, 1);

    Graph g;
    auto out = convlstm_step(g, cfg, ps, g.leaf(x), g.leaf(h0), g.leaf(c0));

    // independent scalar oracle using the same packed parameters
    auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    ConvParam& p = ps.convs[0];
    const int H = 2, X = 3;
    auto gate = [&](int row) {
        double acc = p.b[static_cast<size_t>(row)];
        for (int k = 0; k < X; ++k) acc += p.wat(row, k, 0, 0) * x.v[static_cast<size_t>(k)];
        for (int k = 0; k < H; ++k) acc += p.wat(row, X + k, 0, 0) * h0.v[static_cast<size_t>(k)];
        return acc;
    };
    for (int j = 0; j < H; ++j) {
        double gi = sigmoid(gate(j));
        double gf = sigmoid(gate(H + j));
        double gc = std::tanh(gate(2 * H + j));
        double go = sigmoid(gate(3 * H + j));
        double cc = gf * c0.v[static_cast<size_t>(j)] + gi * gc;
        double hh = go * std::tanh(cc);
        CHECK(g.value(out.cell).v[static_cast<size_t>(j)] == doctest::Approx(cc).epsilon(1e-12));
        CHECK(g.value(out.hidden).v[static_cast<size_t>(j)] == doctest::Approx(hh).epsilon(1e-12));
    }
}

TEST_CASE("convlstm state stays inside tanh bounds") {
    ConvLSTMConfig cfg{3, 2, 3};
    Rng rng(13);
    ParameterSet ps = make_convlstm_params(cfg, "lstm", rng);
    for (double& w : ps.convs[0].w) w = rng.uniform(-3, 3);
    Graph g;
    auto out = convlstm_step(g, cfg, ps, g.leaf(random_tensor(rng, 3, 6, 6, -5, 5)),
                             g.leaf(random_tensor(rng, 2, 6, 6, -1, 1)),
                             g.leaf(random_tensor(rng, 2, 6, 6, -9, 9)));
    for (double v : g.value(out.hidden).v) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
    }
    Graph g2;
    int squash = g2.tanh_(g2.leaf(g.value(out.cell)));
    for (double v : g2.value(squash).v) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("convlstm gradients match finite differences") {
    ConvLSTMConfig cfg{2, 2, 3};
    Rng rng(14);
    ParameterSet ps = make_convlstm_params(cfg, "lstm", rng);
    for (double& b : ps.convs[0].b) b = rng.uniform(-0.2, 0.2);
    Tensor x = random_tensor(rng, 2, 4, 4);
    Tensor h0 = random_tensor(rng, 2, 4, 4, -0.5, 0.5);
    Tensor c0 = random_tensor(rng, 2, 4, 4, -0.5, 0.5);
    auto build = [&](Graph& g) {
        auto out = convlstm_step(g, cfg, ps, g.leaf(x), g.leaf(h0), g.leaf(c0));
        return g.sum_scalars({g.charbonnier_mean(out.hidden, 1e-3),
                              g.charbonnier_mean(out.cell, 1e-3)},
                             {1.0, 1.0});
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
    INFO("worst: ", rep.worst);
    CHECK(rep.max_rel < 1e-4);
}
