// Gradient and shape checks for the autodiff primitives.

#include <catch2/catch_amalgamated.hpp>

#include "hocslm/autograd.hpp"
#include "testutil.hpp"

using namespace hocslm;
using testutil::check_gradients;
using testutil::rand_tensor;

namespace {

// FD-checks d(probe . f(x)) / dx for every element of every input
void check_op(const std::string& what, std::vector<Var> inputs, const std::function<Var()>& fwd,
              double tol = 1e-6) {
    Rng rng(42);
    Tensor probe = rand_tensor(fwd()->value.shape(), rng);
    std::vector<ParamEntry> entries;
    for (std::size_t i = 0; i < inputs.size(); ++i) entries.push_back({what + std::to_string(i), inputs[i]});
    auto report = check_gradients(entries, [&]() { return ag::dot_const(fwd(), probe); });
    INFO(what << " worst=" << report.worst_param);
    CHECK(report.max_rel_err < tol);
}

Var leaf(Shape s, Rng& rng, double scale = 1.0) { return make_leaf(rand_tensor(std::move(s), rng, scale), true); }

}  // namespace

TEST_CASE("tensor basics") {
    Tensor t(Shape{2, 3}, 1.5);
    CHECK(t.size() == 6);
    CHECK(t.at(1, 2) == 1.5);
    t.at(0, 1) = -2.0;
    CHECK(t.sum() == Catch::Approx(1.5 * 5 - 2.0));
    CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeMismatch);
    CHECK(t.reshaped({3, 2}).at(2, 1) == 1.5);
    CHECK(Tensor::scalar(3.0).item() == 3.0);
}

TEST_CASE("elementwise and scalar op gradients") {
    Rng rng(7);
    Var a = leaf({3, 4}, rng);
    Var b = leaf({3, 4}, rng);
    Var s = leaf({}, rng);
    check_op("add", {a, b}, [&] { return ag::add(a, b); });
    check_op("sub", {a, b}, [&] { return ag::sub(a, b); });
    check_op("mul", {a, b}, [&] { return ag::mul(a, b); });
    check_op("scale", {a}, [&] { return ag::scale(a, -1.7); });
    check_op("add_const", {a}, [&] { return ag::add_const(a, 0.3); });
    check_op("smul", {a, s}, [&] { return ag::smul(a, s); });
    check_op("relu", {a}, [&] { return ag::relu(a); });
    check_op("gelu", {a}, [&] { return ag::gelu(a); });
    check_op("sigmoid", {a}, [&] { return ag::sigmoid(a); });
    check_op("tanh", {a}, [&] { return ag::tanh_(a); });
}

TEST_CASE("linear algebra op gradients") {
    Rng rng(11);
    Var a = leaf({3, 4}, rng);
    Var b = leaf({4, 5}, rng);
    Var bt = leaf({5, 4}, rng);
    Var x1 = leaf({4}, rng);
    Var w = leaf({4, 3}, rng);
    Var bias = leaf({3}, rng);
    check_op("matmul", {a, b}, [&] { return ag::matmul(a, b); });
    check_op("matmul_nt", {a, bt}, [&] { return ag::matmul_nt(a, bt); });
    check_op("linear_vec", {x1, w, bias}, [&] { return ag::linear(x1, w, bias); });
    Var rows = leaf({6, 4}, rng);
    check_op("linear_rows", {rows, w, bias}, [&] { return ag::linear(rows, w, bias); });
    Var x3 = leaf({3, 5, 4}, rng);
    Var cw = leaf({6, 3}, rng);
    Var cb = leaf({6}, rng);
    check_op("channel_map", {x3, cw, cb}, [&] { return ag::channel_map(x3, cw, cb); });
}

TEST_CASE("reduction, shape and softmax gradients") {
    Rng rng(13);
    Var x = leaf({3, 5, 4}, rng);
    check_op("mean_time", {x}, [&] { return ag::mean_time(x); });
    check_op("global_avg_pool", {x}, [&] { return ag::global_avg_pool(x); });
    check_op("frames_flatten", {x}, [&] { return ag::frames_flatten(x); });
    check_op("subsample", {x}, [&] { return ag::subsample_time(x, 2); });
    check_op("softmax", {x}, [&] { return ag::softmax_lastdim(x); });
    check_op("reshape", {x}, [&] { return ag::reshape(x, {15, 4}); });
    check_op("slice0", {x}, [&] { return ag::slice0(x, 1); });
    check_op("slice_rows", {x}, [&] { return ag::slice_rows(x, 1, 2); });
    check_op("broadcast0", {x}, [&] { return ag::broadcast0(x, 3); });
    Var y = leaf({2, 5, 4}, rng);
    check_op("concat0", {x, y}, [&] { return ag::concat0({x, y}); });
    Var m1 = leaf({5, 4}, rng);
    Var m2 = leaf({5, 4}, rng);
    check_op("stack0", {m1, m2}, [&] { return ag::stack0({m1, m2}); });
    Var v = leaf({6}, rng);
    check_op("index0d", {v}, [&] { return ag::index0d(v, 3); });
    check_op("sum_all", {x}, [&] { return ag::sum_all(x); });
}

TEST_CASE("normalization gradients") {
    Rng rng(17);
    Var x = leaf({4, 6}, rng);
    Var g = leaf({6}, rng);
    Var b = leaf({6}, rng);
    check_op("layer_norm", {x, g, b}, [&] { return ag::layer_norm(x, g, b); }, 5e-6);
    Var x3 = leaf({3, 4, 5}, rng);
    Var g3 = leaf({3}, rng);
    Var b3 = leaf({3}, rng);
    check_op("instance_norm", {x3, g3, b3}, [&] { return ag::instance_norm(x3, g3, b3); }, 5e-6);
}

TEST_CASE("similarity and topology gradients") {
    Rng rng(19);
    Var q = leaf({4, 5}, rng);
    Var k = leaf({4, 5}, rng);
    check_op("cosine_rows", {q, k}, [&] { return ag::cosine_rows(q, k); }, 5e-6);
    check_op("l2dist_rows", {q, k}, [&] { return ag::l2dist_rows(q, k); }, 5e-6);
    Var xg = leaf({3, 5}, rng);
    check_op("gram", {xg}, [&] { return ag::gram(xg); });
    Var topo = leaf({3, 4, 4}, rng);
    Var feat = leaf({3, 6, 4}, rng);
    check_op("topology_apply", {topo, feat}, [&] { return ag::topology_apply(topo, feat); });
    Var stacked = leaf({2, 4, 4}, rng);
    Var mixw = leaf({2, 5}, rng);
    check_op("mix_channels", {stacked, mixw}, [&] { return ag::mix_channels(stacked, mixw); });
    Var attn = leaf({6, 6}, rng);
    Var vals = leaf({3, 6, 4}, rng);
    check_op("time_attention_apply", {attn, vals}, [&] { return ag::time_attention_apply(attn, vals); });
}

TEST_CASE("temporal op gradients") {
    Rng rng(23);
    Var x = leaf({3, 8, 4}, rng);
    Var w = leaf({2, 3, 5}, rng);
    Var b = leaf({2}, rng);
    check_op("conv_time_d1", {x, w, b}, [&] { return ag::conv_time(x, w, b, 1); });
    check_op("conv_time_d2", {x, w, b}, [&] { return ag::conv_time(x, w, b, 2); });
    check_op("maxpool_time", {x}, [&] { return ag::maxpool_time(x, 3); });
}

TEST_CASE("token op gradients") {
    Rng rng(29);
    Var table = leaf({7, 4}, rng);
    check_op("embed_rows", {table}, [&] { return ag::embed_rows(table, {1, 5, 5, 0}); });
    Var logits = leaf({5, 6}, rng);
    std::vector<int> labels = {2, -100, 0, 5, -100};
    check_op("masked_nll", {logits}, [&] { return ag::masked_nll(logits, labels); });
    Var sq = leaf({4, 4}, rng);
    check_op("causal_mask", {sq}, [&] { return ag::softmax_lastdim(ag::causal_mask(sq)); });
}

TEST_CASE("backward only reaches requested leaves") {
    Rng rng(31);
    Var a = make_leaf(rand_tensor({3}, rng), true);
    Var frozen = make_leaf(rand_tensor({3}, rng), false);
    Var loss = ag::sum_all(ag::mul(a, frozen));
    GradMap sink;
    backward(loss, sink);
    CHECK(sink.count(a.get()) == 1);
    CHECK(sink.count(frozen.get()) == 0);
    // grad wrt a is exactly the frozen values
    CHECK(max_abs_diff(sink[a.get()], frozen->value) == 0.0);
}

TEST_CASE("no-grad mode records no tape") {
    Rng rng(37);
    Var a = make_leaf(rand_tensor({3}, rng), true);
    NoGradGuard ng;
    Var y = ag::scale(a, 2.0);
    CHECK_FALSE(y->requires_grad);
    CHECK(y->parents.empty());
}

TEST_CASE("softmax rows are stochastic") {
    Rng rng(41);
    for (int trial = 0; trial < 50; ++trial) {
        Var x = make_leaf(rand_tensor({5, 7}, rng, 3.0), false);
        Var y = ag::softmax_lastdim(x);
        for (int r = 0; r < 5; ++r) {
            double sum = 0.0;
            for (int c = 0; c < 7; ++c) {
                CHECK(y->value.at(r, c) >= 0.0);
                sum += y->value.at(r, c);
            }
            CHECK(sum == Catch::Approx(1.0).margin(1e-6));
        }
    }
}
