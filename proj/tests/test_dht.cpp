// Dual-path temporal layer against loop oracles.

#include <catch2/catch_amalgamated.hpp>

#include "hocslm/dht.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace hocslm;
using testutil::rand_tensor;

namespace {

struct Fixture {
    ParamRegistry reg;
    std::unique_ptr<DhtLayer> layer;

    explicit Fixture(DhtConfig cfg, int seed) {
        Rng rng(seed);
        layer = std::make_unique<DhtLayer>(cfg, reg, "dht.0.", rng);
    }
};

DhtConfig cfg_of(int channels, int out_channels) {
    DhtConfig cfg;
    cfg.channels = channels;
    cfg.out_channels = out_channels;
    return cfg;
}

}  // namespace

TEST_CASE("single frame attention is the value path itself") {
    Fixture fx(cfg_of(4, 8), 1);
    Rng rng(2);
    Tensor x = rand_tensor({4, 1, 3}, rng);
    DhtLayer::Activation act;
    Var out = fx.layer->gta(constant(x), &act);
    CHECK(act.frame_weights->value.size() == 1);
    CHECK(act.frame_weights->value[0] == Catch::Approx(1.0));
    auto snap = fx.reg.snapshot();
    Tensor v = oracle::channel_map(x, snap.at("dht.0.v_w"), &snap.at("dht.0.v_b"));
    CHECK(max_abs_diff(out->value, v) < 1e-12);
}

TEST_CASE("time-constant input yields uniform attention rows") {
    Fixture fx(cfg_of(4, 8), 3);
    Rng rng(4);
    Tensor frame = rand_tensor({4, 1, 3}, rng);
    const int T = 6;
    Tensor x(Shape{4, T, 3});
    for (int c = 0; c < 4; ++c)
        for (int t = 0; t < T; ++t)
            for (int n = 0; n < 3; ++n) x.at(c, t, n) = frame.at(c, 0, n);
    DhtLayer::Activation act;
    fx.layer->gta(constant(x), &act);
    for (int i = 0; i < T; ++i)
        for (int j = 0; j < T; ++j)
            CHECK(act.frame_weights->value.at(i, j) == Catch::Approx(1.0 / T).margin(1e-9));
}

TEST_CASE("frame attention matches the triple-loop oracle") {
    Fixture fx(cfg_of(4, 8), 5);
    Rng rng(6);
    Tensor x = rand_tensor({4, 5, 3}, rng);
    DhtLayer::Activation act;
    Var out = fx.layer->gta(constant(x), &act);
    auto snap = fx.reg.snapshot();
    Tensor q = oracle::channel_map(x, snap.at("dht.0.q_w"), &snap.at("dht.0.q_b"));
    Tensor k = oracle::channel_map(x, snap.at("dht.0.k_w"), &snap.at("dht.0.k_b"));
    Tensor s = oracle::gta_weights(q, k);
    CHECK(max_abs_diff(act.frame_weights->value, s) < 1e-6);
    CHECK(max_abs_diff(out->value, oracle::gta_forward(x, snap, "dht.0.")) < 1e-6);
}

TEST_CASE("attention rows stay stochastic over random inputs") {
    Fixture fx(cfg_of(4, 8), 7);
    Rng rng(8);
    for (int trial = 0; trial < 40; ++trial) {
        Tensor x = rand_tensor({4, 6, 3}, rng, 2.0);
        DhtLayer::Activation act;
        fx.layer->gta(constant(x), &act);
        for (int i = 0; i < 6; ++i) {
            double sum = 0.0;
            for (int j = 0; j < 6; ++j) {
                CHECK(act.frame_weights->value.at(i, j) >= 0.0);
                sum += act.frame_weights->value.at(i, j);
            }
            CHECK(sum == Catch::Approx(1.0).margin(1e-6));
        }
    }
}

TEST_CASE("max-pool branch spreads an impulse across its window") {
    Fixture fx(cfg_of(2, 8), 9);
    // identity 1x1 into the pooling branch
    Tensor ident(Shape{2, 2});
    ident.at(0, 0) = ident.at(1, 1) = 1.0;
    fx.reg.find("dht.0.b3_in_w")->value = ident;
    fx.reg.find("dht.0.b3_in_b")->value.fill_(0.0);
    Tensor x(Shape{2, 6, 1});
    x.at(0, 2, 0) = 1.0;  // impulse at t=2
    Var pooled = ag::maxpool_time(ag::channel_map(constant(x), fx.reg.find("dht.0.b3_in_w"),
                                                  fx.reg.find("dht.0.b3_in_b")),
                                  3);
    for (int t = 0; t < 6; ++t)
        CHECK(pooled->value.at(0, t, 0) == ((t >= 1 && t <= 3) ? 1.0 : 0.0));
}

TEST_CASE("1x1 branch with identity weights passes its slice through") {
    Fixture fx(cfg_of(2, 8), 10);
    Tensor ident(Shape{2, 2});
    ident.at(0, 0) = ident.at(1, 1) = 1.0;
    fx.reg.find("dht.0.b4_w")->value = ident;
    fx.reg.find("dht.0.b4_b")->value.fill_(0.0);
    Rng rng(11);
    Tensor x = rand_tensor({2, 5, 3}, rng);
    Var out = fx.layer->ltc(constant(x));
    // branch 4 occupies the last C_out/4 = 2 channels
    for (int c = 0; c < 2; ++c)
        for (int t = 0; t < 5; ++t)
            for (int n = 0; n < 3; ++n) CHECK(out->value.at(6 + c, t, n) == x.at(c, t, n));
}

TEST_CASE("dilated branch matches the explicit dilated convolution oracle") {
    Fixture fx(cfg_of(4, 8), 12);
    Rng rng(13);
    Tensor x = rand_tensor({4, 9, 3}, rng);
    auto snap = fx.reg.snapshot();
    Var branch = ag::conv_time(ag::channel_map(constant(x), fx.reg.find("dht.0.b2_in_w"),
                                               fx.reg.find("dht.0.b2_in_b")),
                               fx.reg.find("dht.0.b2_conv_w"), fx.reg.find("dht.0.b2_conv_b"), 2);
    Tensor expected = oracle::conv_time(
        oracle::channel_map(x, snap.at("dht.0.b2_in_w"), &snap.at("dht.0.b2_in_b")),
        snap.at("dht.0.b2_conv_w"), snap.at("dht.0.b2_conv_b"), 2);
    CHECK(max_abs_diff(branch->value, expected) < 1e-6);
}

TEST_CASE("full ltc output matches the oracle and keeps the channel budget") {
    Fixture fx(cfg_of(4, 8), 14);
    Rng rng(15);
    Tensor x = rand_tensor({4, 7, 3}, rng);
    Var out = fx.layer->ltc(constant(x));
    REQUIRE(out->value.dim(0) == 8);
    CHECK(fx.layer->branch_channels() == 2);
    CHECK(max_abs_diff(out->value, oracle::ltc_forward(x, fx.reg.snapshot(), "dht.0.")) < 1e-6);
}

TEST_CASE("dead global branch: attention parameters cannot influence the output") {
    DhtConfig cfg = cfg_of(4, 8);
    Fixture fx(cfg, 16);
    fx.reg.find("dht.0.fuse_global")->value[0] = 0.0;
    Rng rng(17);
    Tensor x = rand_tensor({4, 5, 3}, rng);
    Var before = fx.layer->forward(constant(x));
    fx.reg.find("dht.0.q_w")->value.fill_(9.0);
    fx.reg.find("dht.0.k_b")->value.fill_(-2.0);
    Var after = fx.layer->forward(constant(x));
    CHECK(max_abs_diff(before->value, after->value) == 0.0);
}

TEST_CASE("zero fusion weights produce a zero output") {
    Fixture fx(cfg_of(4, 8), 18);
    fx.reg.find("dht.0.fuse_global")->value[0] = 0.0;
    fx.reg.find("dht.0.fuse_local")->value[0] = 0.0;
    Rng rng(19);
    Var out = fx.layer->forward(constant(rand_tensor({4, 5, 3}, rng)));
    CHECK(out->value.sq_norm() == 0.0);
}

TEST_CASE("fusion is the weighted sum of the oracle branch outputs") {
    Fixture fx(cfg_of(4, 8), 20);
    fx.reg.find("dht.0.fuse_global")->value[0] = 1.0;
    fx.reg.find("dht.0.fuse_local")->value[0] = 1.0;
    Rng rng(21);
    Tensor x = rand_tensor({4, 5, 3}, rng);
    Var out = fx.layer->forward(constant(x));
    auto snap = fx.reg.snapshot();
    Tensor gta_path = oracle::channel_map(oracle::gta_forward(x, snap, "dht.0."), snap.at("dht.0.gta_proj_w"),
                                          &snap.at("dht.0.gta_proj_b"));
    Tensor ltc_path = oracle::ltc_forward(x, snap, "dht.0.");
    Tensor expected(gta_path.shape());
    for (std::size_t i = 0; i < expected.size(); ++i) expected[i] = gta_path[i] + ltc_path[i];
    CHECK(max_abs_diff(out->value, expected) < 1e-6);
}

TEST_CASE("interior temporal shift covariance of conv branches") {
    Fixture fx(cfg_of(2, 8), 22);
    Rng rng(23);
    const int T = 12;
    Tensor x(Shape{2, T, 2});
    // place energy away from both boundaries, then shift by one frame
    for (int c = 0; c < 2; ++c)
        for (int t = 4; t < 8; ++t)
            for (int n = 0; n < 2; ++n) x.at(c, t, n) = rng.gauss();
    Tensor xs(Shape{2, T, 2});
    for (int c = 0; c < 2; ++c)
        for (int t = 0; t + 1 < T; ++t)
            for (int n = 0; n < 2; ++n) xs.at(c, t + 1, n) = x.at(c, t, n);
    auto snap = fx.reg.snapshot();
    for (const char* branch : {"b1", "b2"}) {
        const int d = branch[1] == '2' ? 2 : 1;
        Tensor y = oracle::conv_time(
            oracle::channel_map(x, snap.at(std::string("dht.0.") + branch + "_in_w"),
                                &snap.at(std::string("dht.0.") + branch + "_in_b")),
            snap.at(std::string("dht.0.") + branch + "_conv_w"),
            snap.at(std::string("dht.0.") + branch + "_conv_b"), d);
        Tensor ys = oracle::conv_time(
            oracle::channel_map(xs, snap.at(std::string("dht.0.") + branch + "_in_w"),
                                &snap.at(std::string("dht.0.") + branch + "_in_b")),
            snap.at(std::string("dht.0.") + branch + "_conv_w"),
            snap.at(std::string("dht.0.") + branch + "_conv_b"), d);
        // compare interior frames only (padding shadow reaches 4 frames for d=2)
        for (int c = 0; c < 2; ++c)
            for (int t = 5; t < T - 5; ++t)
                for (int n = 0; n < 2; ++n)
                    CHECK(ys.at(c, t + 1, n) == Catch::Approx(y.at(c, t, n)).margin(1e-9));
    }
}

TEST_CASE("gradients of every dht parameter match central finite differences") {
    Fixture fx(cfg_of(4, 8), 24);
    Rng rng(25);
    Tensor x = rand_tensor({4, 6, 4}, rng);
    Tensor probe = rand_tensor({8, 6, 4}, rng);
    std::vector<ParamEntry> params(fx.reg.entries().begin(), fx.reg.entries().end());
    auto report = testutil::check_gradients(
        params, [&] { return ag::dot_const(fx.layer->forward(constant(x)), probe); });
    INFO("worst " << report.worst_param << " over " << report.checked << " entries");
    CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("output width must split across the four branches") {
    ParamRegistry reg;
    Rng rng(1);
    CHECK_THROWS_AS(DhtLayer(cfg_of(4, 6), reg, "dht.0.", rng), ShapeMismatch);
}
