// Composite-topology spatial layer against loop oracles, plus its invariants.

#include <catch2/catch_amalgamated.hpp>

#include "hocslm/cts.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace hocslm;
using testutil::rand_tensor;

namespace {

struct Fixture {
    ParamRegistry reg;
    std::unique_ptr<CtsLayer> layer;
    PhysicalMask mask;

    Fixture(CtsConfig cfg, int seed, const EdgeList& edges) {
        Rng rng(seed);
        layer = std::make_unique<CtsLayer>(cfg, reg, "cts.0.", rng);
        mask = PhysicalMask::from_edges(edges, cfg.joints);
    }

    void randomize_gains(int seed) {
        Rng rng(seed);
        for (const auto& name : {"cts.0.sim_gain", "cts.0.diff_gain", "cts.0.res_gain"}) {
            Tensor& t = reg.find(name)->value;
            for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.5 * rng.gauss();
        }
        reg.find("cts.0.prior_gain")->value[0] = 0.3 * rng.gauss();
        reg.find("cts.0.fuse_global")->value[0] = 1.0 + 0.2 * rng.gauss();
        reg.find("cts.0.fuse_local")->value[0] = 0.4 + 0.2 * rng.gauss();
    }
};

EdgeList chain_edges(int joints) {
    EdgeList e;
    for (int j = 1; j < joints; ++j) e.emplace_back(j - 1, j);
    return e;
}

CtsConfig small_cfg(int cin = 4, int cout = 4, int joints = 4, int reduction = 2) {
    CtsConfig cfg;
    cfg.in_channels = cin;
    cfg.out_channels = cout;
    cfg.joints = joints;
    cfg.reduction = reduction;
    return cfg;
}

}  // namespace

TEST_CASE("preprocess: zero input with zero pooling bias gives bias-only pairwise maps") {
    Fixture fx(small_cfg(), 1, chain_edges(4));
    Tensor& lift_b = fx.reg.find("cts.0.lift_b")->value;
    for (std::size_t i = 0; i < lift_b.size(); ++i) lift_b[i] = 0.1 * static_cast<double>(i);
    auto [pooled, pairwise] = fx.layer->preprocess(constant(Tensor(Shape{4, 3, 4})));
    CHECK(pooled->value.sq_norm() == 0.0);
    for (int c = 0; c < 2; ++c)
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b) CHECK(pairwise->value.at(c, a, b) == lift_b[a * 4 + b]);
}

TEST_CASE("preprocess: single-frame temporal mean is the frame itself") {
    Fixture fx(small_cfg(), 2, chain_edges(4));
    Rng rng(5);
    Tensor frame = rand_tensor({4, 1, 4}, rng);
    auto [pooled1, pw1] = fx.layer->preprocess(constant(frame));
    // same content repeated over four frames gives the same mean
    Tensor repeated(Shape{4, 4, 4});
    for (int c = 0; c < 4; ++c)
        for (int t = 0; t < 4; ++t)
            for (int n = 0; n < 4; ++n) repeated.at(c, t, n) = frame.at(c, 0, n);
    auto [pooled4, pw4] = fx.layer->preprocess(constant(repeated));
    CHECK(max_abs_diff(pooled1->value, pooled4->value) < 1e-15);
}

TEST_CASE("preprocess matches the nested-loop oracle") {
    CtsConfig cfg = small_cfg(8, 8, 5, 2);
    Fixture fx(cfg, 3, chain_edges(5));
    Rng rng(7);
    Tensor x = rand_tensor({8, 4, 5}, rng);
    auto [pooled, pairwise] = fx.layer->preprocess(constant(x));
    auto snap = fx.reg.snapshot();
    auto [opooled, opairwise] =
        oracle::cts_preprocess(x, snap, "cts.0.", {8, 8, 5, 2, true, true});
    CHECK(max_abs_diff(pooled->value, opooled) < 1e-6);
    CHECK(max_abs_diff(pairwise->value, opairwise) < 1e-6);
}

TEST_CASE("gsm with modulation disabled reduces to mixed plain attention") {
    Fixture fx(small_cfg(), 4, chain_edges(4));
    // sim/diff/res gains are zero-initialized already
    Rng rng(11);
    Tensor x = rand_tensor({4, 3, 4}, rng);
    auto [pooled, pairwise] = fx.layer->preprocess(constant(x));
    Var ag_out = fx.layer->gsm(pairwise);

    // oracle: stack per-channel plain attention topologies, mix with W0
    auto snap = fx.reg.snapshot();
    const Tensor& wq = snap.at("cts.0.query_w");
    const Tensor& wk = snap.at("cts.0.key_w");
    const Tensor& wv = snap.at("cts.0.value_w");
    const Tensor& mix = snap.at("cts.0.mix_w");
    const int n = 4, cr = 2;
    Tensor expected(Shape{4, n, n});
    for (int i = 0; i < cr; ++i) {
        Tensor xt(Shape{n, n});
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) xt.at(a, b) = pairwise->value.at(i, a, b);
        Tensor base = oracle::attention_topology(oracle::matmul(wq, xt), oracle::matmul(wk, xt),
                                                 oracle::matmul(wv, xt));
        for (int o = 0; o < 4; ++o)
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) expected.at(o, a, b) += mix.at(i, o) * base.at(a, b);
    }
    CHECK(max_abs_diff(ag_out->value, expected) < 1e-9);
}

TEST_CASE("identical pairwise rows with identity projections: similarity one, distinctness half") {
    CtsConfig cfg = small_cfg();
    Fixture fx(cfg, 6, chain_edges(4));
    // force Q = K = pairwise rows
    Tensor identity(Shape{4, 4});
    for (int i = 0; i < 4; ++i) identity.at(i, i) = 1.0;
    fx.reg.find("cts.0.query_w")->value = identity;
    fx.reg.find("cts.0.key_w")->value = identity;
    // craft pairwise maps whose rows are all identical
    Tensor pw(Shape{2, 4, 4});
    Rng rng(13);
    for (int c = 0; c < 2; ++c) {
        std::vector<double> row(4);
        for (auto& v : row) v = rng.gauss() + 2.0;
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b) pw.at(c, a, b) = row[b];
    }
    CtsLayer::Activation act;
    fx.layer->gsm(constant(pw), &act);
    REQUIRE(act.similarity.size() == 2);
    for (int c = 0; c < 2; ++c)
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b) {
                CHECK(act.similarity[c]->value.at(a, b) == Catch::Approx(1.0).margin(1e-9));
                CHECK(act.distinctness[c]->value.at(a, b) == Catch::Approx(0.5).margin(1e-9));
            }
}

TEST_CASE("gsm attention topology matches the brute-force oracle per channel") {
    Fixture fx(small_cfg(4, 4, 4, 2), 8, chain_edges(4));
    fx.randomize_gains(9);
    Rng rng(15);
    Tensor pw = rand_tensor({2, 4, 4}, rng);
    CtsLayer::Activation act;
    Var out = fx.layer->gsm(constant(pw), &act);
    auto snap = fx.reg.snapshot();
    Tensor expected = oracle::cts_global_topology(pw, snap, "cts.0.", {4, 4, 4, 2, true, true});
    CHECK(max_abs_diff(out->value, expected) < 1e-6);
    // row-softmax weights are stochastic
    for (const auto& w : act.attn_rows)
        for (int a = 0; a < 4; ++a) {
            double sum = 0.0;
            for (int b = 0; b < 4; ++b) sum += w->value.at(a, b);
            CHECK(sum == Catch::Approx(1.0).margin(1e-6));
        }
}

TEST_CASE("lse: saturated gate and zero prior reduce to masked rectified energy") {
    Fixture fx(small_cfg(4, 4, 6, 2), 10, chain_edges(6));
    fx.reg.find("cts.0.gate_h_w")->value.fill_(0.0);
    fx.reg.find("cts.0.gate_h_b")->value.fill_(0.0);
    fx.reg.find("cts.0.gate_o_w")->value.fill_(0.0);
    fx.reg.find("cts.0.gate_o_b")->value.fill_(1000.0);  // sigmoid saturates to exactly 1
    fx.reg.find("cts.0.prior_gain")->value[0] = 0.0;
    Rng rng(17);
    Tensor pooled = rand_tensor({2, 6}, rng);
    Var out = fx.layer->lse(constant(pooled), fx.mask);
    Tensor energy = oracle::gram(pooled);
    for (int a = 0; a < 6; ++a)
        for (int b = 0; b < 6; ++b)
            CHECK(out->value.at(a, b) ==
                  Catch::Approx(fx.mask.mask.at(a, b) * std::max(0.0, energy.at(a, b))).margin(1e-12));
}

TEST_CASE("lse: zero energy with unit prior returns the mask") {
    Fixture fx(small_cfg(4, 4, 6, 2), 12, chain_edges(6));
    fx.reg.find("cts.0.prior_gain")->value[0] = 1.0;
    Var out = fx.layer->lse(constant(Tensor(Shape{2, 6})), fx.mask);
    CHECK(max_abs_diff(out->value, fx.mask.mask) == 0.0);
}

TEST_CASE("lse energy matches the explicit gram oracle") {
    Fixture fx(small_cfg(4, 4, 6, 2), 14, chain_edges(6));
    Rng rng(19);
    Tensor pooled = rand_tensor({2, 6}, rng);
    Var energy = ag::gram(constant(pooled));
    CHECK(max_abs_diff(energy->value, oracle::gram(pooled)) < 1e-6);
}

TEST_CASE("mask locality: local topology vanishes off the physical mask") {
    for (int draw = 0; draw < 50; ++draw) {
        Fixture fx(small_cfg(4, 4, 6, 2), 100 + draw, chain_edges(6));
        fx.randomize_gains(200 + draw);
        Rng rng(300 + draw);
        Var out = fx.layer->lse(make_leaf(rand_tensor({2, 6}, rng, 2.0)), fx.mask);
        for (int a = 0; a < 6; ++a)
            for (int b = 0; b < 6; ++b)
                if (fx.mask.mask.at(a, b) == 0.0) CHECK(out->value.at(a, b) == 0.0);
    }
}

TEST_CASE("dead local branch: gate parameters cannot influence the output") {
    Fixture fx(small_cfg(), 16, chain_edges(4));
    fx.reg.find("cts.0.fuse_local")->value[0] = 0.0;
    Rng rng(21);
    Tensor x = rand_tensor({4, 3, 4}, rng);
    Var before = fx.layer->forward(constant(x), fx.mask);
    fx.reg.find("cts.0.gate_h_w")->value.fill_(7.7);
    fx.reg.find("cts.0.gate_o_b")->value.fill_(-3.0);
    fx.reg.find("cts.0.prior_gain")->value[0] = 42.0;
    Var after = fx.layer->forward(constant(x), fx.mask);
    CHECK(max_abs_diff(before->value, after->value) == 0.0);
}

TEST_CASE("identity topology leaves transformed features unchanged") {
    Rng rng(23);
    Tensor ident(Shape{3, 4, 4});
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 4; ++i) ident.at(c, i, i) = 1.0;
    Tensor feats = rand_tensor({3, 5, 4}, rng);
    Var out = ag::topology_apply(constant(ident), constant(feats));
    CHECK(max_abs_diff(out->value, feats) == 0.0);
}

TEST_CASE("cts forward matches the full nested-loop oracle") {
    for (int trial = 0; trial < 5; ++trial) {
        CtsConfig cfg = small_cfg(4, 4, 4, 2);
        Fixture fx(cfg, 30 + trial, chain_edges(4));
        fx.randomize_gains(40 + trial);
        Rng rng(50 + trial);
        Tensor x = rand_tensor({4, 2, 4}, rng);
        Var out = fx.layer->forward(constant(x), fx.mask);
        auto snap = fx.reg.snapshot();
        Tensor expected = oracle::cts_forward(x, fx.mask.mask, snap, "cts.0.", {4, 4, 4, 2, true, true});
        CHECK(max_abs_diff(out->value, expected) < 1e-5);
    }
}

TEST_CASE("ablation reduction: no modulation and no local branch is plain attention") {
    CtsConfig cfg = small_cfg(4, 4, 4, 2);
    Fixture fx(cfg, 60, chain_edges(4));
    // lambda_sim = lambda_diff = lambda_res = 0 (init), local branch off
    fx.reg.find("cts.0.fuse_local")->value[0] = 0.0;
    fx.reg.find("cts.0.fuse_global")->value[0] = 1.0;
    Rng rng(61);
    Tensor x = rand_tensor({4, 3, 4}, rng);
    Var out = fx.layer->forward(constant(x), fx.mask);

    auto snap = fx.reg.snapshot();
    auto [opooled, opairwise] = oracle::cts_preprocess(x, snap, "cts.0.", {4, 4, 4, 2, true, true});
    const int n = 4;
    Tensor topo(Shape{4, n, n});
    for (int i = 0; i < 2; ++i) {
        Tensor xt(Shape{n, n});
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) xt.at(a, b) = opairwise.at(i, a, b);
        Tensor base = oracle::attention_topology(oracle::matmul(snap.at("cts.0.query_w"), xt),
                                                 oracle::matmul(snap.at("cts.0.key_w"), xt),
                                                 oracle::matmul(snap.at("cts.0.value_w"), xt));
        for (int o = 0; o < 4; ++o)
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) topo.at(o, a, b) += snap.at("cts.0.mix_w").at(i, o) * base.at(a, b);
    }
    Tensor xp = oracle::channel_map(x, snap.at("cts.0.feat_w"), &snap.at("cts.0.feat_b"));
    Tensor expected(Shape{4, 3, n});
    for (int o = 0; o < 4; ++o)
        for (int t = 0; t < 3; ++t)
            for (int a = 0; a < n; ++a) {
                double acc = 0.0;
                for (int b = 0; b < n; ++b) acc += topo.at(o, a, b) * xp.at(o, t, b);
                expected.at(o, t, a) = acc;
            }
    CHECK(max_abs_diff(out->value, expected) < 1e-9);
}

TEST_CASE("gradients of every cts parameter match central finite differences") {
    CtsConfig cfg = small_cfg(4, 4, 4, 2);
    Fixture fx(cfg, 70, chain_edges(4));
    fx.randomize_gains(71);
    Rng rng(72);
    Tensor x = rand_tensor({4, 2, 4}, rng);
    Tensor probe = rand_tensor({4, 2, 4}, rng);
    std::vector<ParamEntry> params(fx.reg.entries().begin(), fx.reg.entries().end());
    auto report = testutil::check_gradients(
        params, [&] { return ag::dot_const(fx.layer->forward(constant(x), fx.mask), probe); });
    INFO("worst " << report.worst_param << " over " << report.checked << " entries");
    CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("joint permutation equivariance at permutation-shared initialization") {
    const int n = 5;
    CtsConfig cfg = small_cfg(4, 3, n, 2);
    Fixture fx(cfg, 80, chain_edges(n));
    // W_Q/W_K/W_V = a I + b 11^T commute with joint permutations
    Rng rng(81);
    auto shared = [&](const std::string& name) {
        const double a = rng.gauss(), b = 0.3 * rng.gauss();
        Tensor w(Shape{n, n}, b);
        for (int i = 0; i < n; ++i) w.at(i, i) += a;
        fx.reg.find(name)->value = w;
    };
    shared("cts.0.query_w");
    shared("cts.0.key_w");
    shared("cts.0.value_w");
    // lift: f(x)[a,b] = x[a] + x[b] + const, also equivariant
    Tensor lift(Shape{n, n * n});
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
            lift.at(a, a * n + b) += 1.0;
            lift.at(b, a * n + b) += 1.0;
        }
    fx.reg.find("cts.0.lift_w")->value = lift;
    fx.reg.find("cts.0.lift_b")->value.fill_(0.2);
    // neutral gate: all weights zero so G is the constant half matrix
    fx.reg.find("cts.0.gate_h_w")->value.fill_(0.0);
    fx.reg.find("cts.0.gate_h_b")->value.fill_(0.0);
    fx.reg.find("cts.0.gate_o_w")->value.fill_(0.0);
    fx.reg.find("cts.0.gate_o_b")->value.fill_(0.0);
    fx.randomize_gains(82);

    Rng drng(83);
    Tensor x = rand_tensor({4, 3, n}, drng);
    const std::vector<int> perm = {2, 0, 4, 1, 3};

    Tensor xp(Shape{4, 3, n});
    for (int c = 0; c < 4; ++c)
        for (int t = 0; t < 3; ++t)
            for (int j = 0; j < n; ++j) xp.at(c, t, perm[j]) = x.at(c, t, j);
    PhysicalMask mp;
    mp.mask = Tensor(Shape{n, n});
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) mp.mask.at(perm[a], perm[b]) = fx.mask.mask.at(a, b);

    Var base = fx.layer->forward(constant(x), fx.mask);
    Var permuted = fx.layer->forward(constant(xp), mp);
    for (int c = 0; c < 3; ++c)
        for (int t = 0; t < 3; ++t)
            for (int j = 0; j < n; ++j)
                CHECK(permuted->value.at(c, t, perm[j]) == Catch::Approx(base->value.at(c, t, j)).margin(1e-9));
}

TEST_CASE("reduction must divide input channels") {
    ParamRegistry reg;
    Rng rng(1);
    CtsConfig cfg = small_cfg(6, 4, 4, 4);
    CHECK_THROWS_AS(CtsLayer(cfg, reg, "cts.0.", rng), ShapeMismatch);
}

TEST_CASE("shape mismatch raises") {
    Fixture fx(small_cfg(), 90, chain_edges(4));
    CHECK_THROWS_AS(fx.layer->preprocess(constant(Tensor(Shape{5, 3, 4}))), ShapeMismatch);
}
