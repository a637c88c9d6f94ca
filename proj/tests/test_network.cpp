#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include <doctest.h>

#include "ctdl/io.hpp"
#include "ctdl/network.hpp"
#include "ctdl/optim.hpp"

using namespace ctdl;

namespace {

void fill_random(std::vector<double>& v, std::mt19937_64& rng, double lo = -1.0,
                 double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& x : v) x = u(rng);
}

double weighted_sum(const Tensor& t, const Tensor& r) {
    double s = 0.0;
    for (std::size_t i = 0; i < t.v.size(); ++i) s += t.v[i] * r.v[i];
    return s;
}

// Relative error between analytic gradient and a central finite difference,
// computed over whole gradient vectors.
double rel_error(const std::vector<double>& analytic, const std::vector<double>& fd) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        num += (analytic[i] - fd[i]) * (analytic[i] - fd[i]);
        den += analytic[i] * analytic[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

} // namespace

TEST_CASE("conv2d gradients match finite differences") {
    std::mt19937_64 rng(1);
    for (int k : {1, 3}) {
        Tensor x(2, 3, 5, 4), wgt(2, 3, k, k);
        std::vector<double> bias(2);
        fill_random(x.v, rng);
        fill_random(wgt.v, rng);
        fill_random(bias, rng);
        Tensor out;
        conv2d_forward(x, wgt, bias, out);
        Tensor r = out;
        fill_random(r.v, rng);

        Tensor gx, gw(2, 3, k, k);
        std::vector<double> gb(2, 0.0);
        conv2d_backward(x, wgt, r, gx, gw, gb);

        const double eps = 1e-6;
        auto loss = [&](const Tensor& xx, const Tensor& ww, const std::vector<double>& bb) {
            Tensor o;
            conv2d_forward(xx, ww, bb, o);
            return weighted_sum(o, r);
        };
        std::vector<double> fd_x(x.v.size()), fd_w(wgt.v.size()), fd_b(bias.size());
        for (std::size_t i = 0; i < x.v.size(); ++i) {
            Tensor xp = x, xm = x;
            xp.v[i] += eps;
            xm.v[i] -= eps;
            fd_x[i] = (loss(xp, wgt, bias) - loss(xm, wgt, bias)) / (2 * eps);
        }
        for (std::size_t i = 0; i < wgt.v.size(); ++i) {
            Tensor wp = wgt, wm = wgt;
            wp.v[i] += eps;
            wm.v[i] -= eps;
            fd_w[i] = (loss(x, wp, bias) - loss(x, wm, bias)) / (2 * eps);
        }
        for (std::size_t i = 0; i < bias.size(); ++i) {
            auto bp = bias, bm = bias;
            bp[i] += eps;
            bm[i] -= eps;
            fd_b[i] = (loss(x, wgt, bp) - loss(x, wgt, bm)) / (2 * eps);
        }
        CHECK(rel_error(gx.v, fd_x) < 1e-7);
        CHECK(rel_error(gw.v, fd_w) < 1e-7);
        CHECK(rel_error(gb, fd_b) < 1e-7);
    }
}

TEST_CASE("batch norm gradients match finite differences in train mode") {
    std::mt19937_64 rng(2);
    Tensor x(2, 3, 4, 4);
    fill_random(x.v, rng);
    std::vector<double> gamma(3), beta(3);
    fill_random(gamma, rng, 0.5, 1.5);
    fill_random(beta, rng);

    auto loss = [&](const Tensor& xx, const std::vector<double>& gm,
                    const std::vector<double>& bt) {
        std::vector<double> rm(3, 0.0), rv(3, 1.0);
        Tensor o;
        BnBatchStats<double> saved;
        batch_norm_forward(xx, gm, bt, rm, rv, true, o, saved);
        double s = 0.0;
        for (std::size_t i = 0; i < o.v.size(); ++i) s += o.v[i] * double((i * 7 + 3) % 11 - 5);
        return s;
    };

    std::vector<double> rm(3, 0.0), rv(3, 1.0);
    Tensor out;
    BnBatchStats<double> saved;
    batch_norm_forward(x, gamma, beta, rm, rv, true, out, saved);
    Tensor gout = out;
    for (std::size_t i = 0; i < gout.v.size(); ++i) gout.v[i] = double((i * 7 + 3) % 11 - 5);
    Tensor gx;
    std::vector<double> ggamma(3, 0.0), gbeta(3, 0.0);
    batch_norm_backward(x, gamma, saved, gout, true, gx, ggamma, gbeta);

    const double eps = 1e-6;
    std::vector<double> fd_x(x.v.size()), fd_g(3), fd_b(3);
    for (std::size_t i = 0; i < x.v.size(); ++i) {
        Tensor xp = x, xm = x;
        xp.v[i] += eps;
        xm.v[i] -= eps;
        fd_x[i] = (loss(xp, gamma, beta) - loss(xm, gamma, beta)) / (2 * eps);
    }
    for (std::size_t i = 0; i < 3; ++i) {
        auto gp = gamma, gm2 = gamma;
        gp[i] += eps;
        gm2[i] -= eps;
        fd_g[i] = (loss(x, gp, beta) - loss(x, gm2, beta)) / (2 * eps);
        auto bp = beta, bm = beta;
        bp[i] += eps;
        bm[i] -= eps;
        fd_b[i] = (loss(x, gamma, bp) - loss(x, gamma, bm)) / (2 * eps);
    }
    CHECK(rel_error(gx.v, fd_x) < 1e-6);
    CHECK(rel_error(ggamma, fd_g) < 1e-7);
    CHECK(rel_error(gbeta, fd_b) < 1e-7);
}

TEST_CASE("relu, pooling, unpooling, and concat gradients match finite differences") {
    std::mt19937_64 rng(3);
    SUBCASE("relu away from the kink") {
        Tensor x(1, 2, 4, 4);
        fill_random(x.v, rng);
        for (auto& v : x.v)
            if (std::abs(v) < 0.05) v = 0.1; // keep clear of the kink
        Tensor out;
        relu_forward(x, out);
        Tensor r = out;
        fill_random(r.v, rng);
        Tensor gx;
        relu_backward(x, r, gx);
        const double eps = 1e-6;
        std::vector<double> fd(x.v.size());
        for (std::size_t i = 0; i < x.v.size(); ++i) {
            Tensor xp = x, xm = x;
            xp.v[i] += eps;
            xm.v[i] -= eps;
            Tensor op, om;
            relu_forward(xp, op);
            relu_forward(xm, om);
            fd[i] = (weighted_sum(op, r) - weighted_sum(om, r)) / (2 * eps);
        }
        CHECK(rel_error(gx.v, fd) < 1e-8);
    }
    SUBCASE("average pooling") {
        Tensor x(1, 2, 4, 6);
        fill_random(x.v, rng);
        Tensor out;
        avg_pool2_forward(x, out);
        Tensor r = out;
        fill_random(r.v, rng);
        Tensor gx;
        avg_pool2_backward(x, r, gx);
        const double eps = 1e-6;
        std::vector<double> fd(x.v.size());
        for (std::size_t i = 0; i < x.v.size(); ++i) {
            Tensor xp = x, xm = x;
            xp.v[i] += eps;
            xm.v[i] -= eps;
            Tensor op, om;
            avg_pool2_forward(xp, op);
            avg_pool2_forward(xm, om);
            fd[i] = (weighted_sum(op, r) - weighted_sum(om, r)) / (2 * eps);
        }
        CHECK(rel_error(gx.v, fd) < 1e-8);
        Tensor odd(1, 1, 3, 4), dummy;
        CHECK_THROWS_AS(avg_pool2_forward(odd, dummy), std::invalid_argument);
    }
    SUBCASE("nearest unpooling") {
        Tensor x(1, 2, 3, 2);
        fill_random(x.v, rng);
        Tensor out;
        unpool2_forward(x, out);
        Tensor r = out;
        fill_random(r.v, rng);
        Tensor gx;
        unpool2_backward(x, r, gx);
        const double eps = 1e-6;
        std::vector<double> fd(x.v.size());
        for (std::size_t i = 0; i < x.v.size(); ++i) {
            Tensor xp = x, xm = x;
            xp.v[i] += eps;
            xm.v[i] -= eps;
            Tensor op, om;
            unpool2_forward(xp, op);
            unpool2_forward(xm, om);
            fd[i] = (weighted_sum(op, r) - weighted_sum(om, r)) / (2 * eps);
        }
        CHECK(rel_error(gx.v, fd) < 1e-8);
    }
    SUBCASE("channel concatenation") {
        Tensor a(1, 2, 3, 3), b(1, 3, 3, 3);
        fill_random(a.v, rng);
        fill_random(b.v, rng);
        Tensor out;
        concat_forward(a, b, out);
        Tensor r = out;
        fill_random(r.v, rng);
        Tensor ga, gb;
        concat_backward(a.c, b.c, r, ga, gb);
        // concat is a permutation of entries: gradients are exact slices of r
        for (int ch = 0; ch < a.c; ++ch)
            for (int y = 0; y < 3; ++y)
                for (int xx = 0; xx < 3; ++xx)
                    REQUIRE(ga.at(0, ch, y, xx) == r.at(0, ch, y, xx));
        for (int ch = 0; ch < b.c; ++ch)
            for (int y = 0; y < 3; ++y)
                for (int xx = 0; xx < 3; ++xx)
                    REQUIRE(gb.at(0, ch, y, xx) == r.at(0, a.c + ch, y, xx));
    }
}

TEST_CASE("composed u-net gradients match finite differences") {
    Graph net = build_backbone<double>(1, 2, 2);
    attach_bridge(net, 1);
    std::mt19937_64 rng(4);
    net.init_weights(rng);

    Tensor x(1, 1, 8, 8);
    fill_random(x.v, rng, 0.1, 1.0);
    ForwardCache cache;
    const auto heads = forward(net, x, RunMode::Train, cache);
    REQUIRE(heads.size() == 1);
    Tensor r = heads[0];
    fill_random(r.v, rng);

    net.zero_grads();
    ForwardCache c2;
    forward(net, x, RunMode::Train, c2);
    const Tensor gx = backward(net, c2, {r}, RunMode::Train);

    auto loss_at = [&]() {
        ForwardCache c;
        return weighted_sum(forward(net, x, RunMode::Train, c)[0], r);
    };

    const double eps = 1e-5;
    // spot-check a spread of parameter entries in every parameter tensor
    for (std::size_t pi = 0; pi < net.params.size(); ++pi) {
        auto& p = net.params[pi];
        const std::size_t stride = std::max<std::size_t>(1, p.value.v.size() / 3);
        for (std::size_t i = 0; i < p.value.v.size(); i += stride) {
            const double keep = p.value.v[i];
            p.value.v[i] = keep + eps;
            const double lp = loss_at();
            p.value.v[i] = keep - eps;
            const double lm = loss_at();
            p.value.v[i] = keep;
            const double fd = (lp - lm) / (2 * eps);
            const double an = p.grad.v[i];
            CHECK(std::abs(an - fd) <= 1e-3 * std::max(1.0, std::abs(an)));
        }
    }
    // and a spread of input pixels
    for (std::size_t i = 0; i < x.v.size(); i += 7) {
        const double keep = x.v[i];
        x.v[i] = keep + eps;
        const double lp = loss_at();
        x.v[i] = keep - eps;
        const double lm = loss_at();
        x.v[i] = keep;
        const double fd = (lp - lm) / (2 * eps);
        CHECK(std::abs(gx.v[i] - fd) <= 1e-3 * std::max(1.0, std::abs(gx.v[i])));
    }
}

TEST_CASE("weight initialization is seed-deterministic") {
    Graph a = build_backbone<double>(1, 4, 2);
    attach_bridge(a, 1);
    Graph b = build_backbone<double>(1, 4, 2);
    attach_bridge(b, 1);
    Graph c = build_backbone<double>(1, 4, 2);
    attach_bridge(c, 1);
    std::mt19937_64 r1(7), r2(7), r3(8);
    a.init_weights(r1);
    b.init_weights(r2);
    c.init_weights(r3);
    REQUIRE(a.params.size() == b.params.size());
    for (std::size_t i = 0; i < a.params.size(); ++i)
        REQUIRE(a.params[i].value.v == b.params[i].value.v);
    bool differs = false;
    for (std::size_t i = 0; i < a.params.size(); ++i)
        if (a.params[i].value.v != c.params[i].value.v) differs = true;
    CHECK(differs);
}

TEST_CASE("batch norm buffers update in train mode and drive eval mode") {
    Graph net;
    const int in = net.add_input(1);
    const int bnode = net.add_bn(net.add_conv(in, 3, 2));
    net.mark_head(bnode);
    std::mt19937_64 rng(9);
    net.init_weights(rng);

    REQUIRE(net.bn.size() == 1);
    for (double v : net.bn[0].running_mean) CHECK(v == 0.0);
    for (double v : net.bn[0].running_var) CHECK(v == 1.0);

    Tensor x(2, 1, 6, 6);
    fill_random(x.v, rng, 1.0, 2.0); // positive input, nonzero batch mean
    ForwardCache cache;
    const Tensor train_out = forward(net, x, RunMode::Train, cache)[0];
    bool moved = false;
    for (double v : net.bn[0].running_mean)
        if (v != 0.0) moved = true;
    CHECK(moved);

    ForwardCache c2;
    const Tensor eval_out = forward(net, x, RunMode::Eval, c2)[0];
    CHECK(eval_out.v != train_out.v); // running stats differ from batch stats

    // train-mode output is exactly normalized per channel (gamma 1, beta 0)
    for (int ch = 0; ch < 2; ++ch) {
        double mean = 0.0;
        for (int b = 0; b < 2; ++b)
            for (int y = 0; y < 6; ++y)
                for (int xx = 0; xx < 6; ++xx) mean += train_out.at(b, ch, y, xx);
        mean /= 2.0 * 36.0;
        CHECK(mean == doctest::Approx(0.0).epsilon(1e-10));
    }
}

TEST_CASE("stop-gradient blocks input gradients but not upstream weights") {
    Graph net;
    const int in = net.add_input(1);
    const int conv = net.add_conv(net.add_stop_grad(in), 3, 1);
    net.mark_head(conv);
    std::mt19937_64 rng(10);
    net.init_weights(rng);

    Tensor x(1, 1, 4, 4);
    fill_random(x.v, rng);
    ForwardCache cache;
    const auto heads = forward(net, x, RunMode::Train, cache);
    Tensor g = heads[0];
    for (auto& v : g.v) v = 1.0;
    net.zero_grads();
    const Tensor gx = backward(net, cache, {g}, RunMode::Train);
    for (double v : gx.v) CHECK(v == 0.0);
    double wmag = 0.0;
    for (const auto& p : net.params)
        for (double v : p.grad.v) wmag += std::abs(v);
    CHECK(wmag > 0.0); // conv weights still learn from the detached activation
}

TEST_CASE("gradients accumulate until zeroed") {
    Graph net;
    const int in = net.add_input(1);
    net.mark_head(net.add_conv(in, 3, 1));
    std::mt19937_64 rng(11);
    net.init_weights(rng);
    Tensor x(1, 1, 4, 4);
    fill_random(x.v, rng);
    ForwardCache cache;
    const auto heads = forward(net, x, RunMode::Train, cache);
    Tensor g = heads[0];
    fill_random(g.v, rng);

    net.zero_grads();
    backward(net, cache, {g}, RunMode::Train);
    const auto once = net.params[0].grad.v;
    backward(net, cache, {g}, RunMode::Train);
    for (std::size_t i = 0; i < once.size(); ++i)
        REQUIRE(net.params[0].grad.v[i] == doctest::Approx(2.0 * once[i]).epsilon(1e-12));
    net.zero_grads();
    for (double v : net.params[0].grad.v) REQUIRE(v == 0.0);
}

TEST_CASE("parameter count matches a hand count") {
    Graph net;
    const int in = net.add_input(2);
    const int c1 = net.add_conv(in, 3, 4); // 4*2*9 + 4 = 76
    const int b1 = net.add_bn(c1);         // 2*4 = 8
    net.mark_head(net.add_conv(net.add_relu(b1), 1, 1)); // 1*4*1 + 1 = 5
    CHECK(net.parameter_count() == 76 + 8 + 5);
}

TEST_CASE("graph checkpoints round-trip through disk") {
    Graph net = build_backbone<double>(1, 2, 1);
    attach_bridge(net, 1);
    std::mt19937_64 rng(12);
    net.init_weights(rng);
    // move the bn running buffers off their initial values
    Tensor x(1, 1, 4, 4);
    fill_random(x.v, rng);
    ForwardCache cache;
    forward(net, x, RunMode::Train, cache);

    const std::string path = "/tmp/ctdl_test_graph.ckpt";
    save_graph(path, net, {{"arch", "test"}, {"epoch", "3"}});

    std::vector<std::pair<std::string, std::string>> meta;
    const Graph back = load_graph(path, &meta);
    bool saw_arch = false;
    for (const auto& [k, v] : meta)
        if (k == "arch" && v == "test") saw_arch = true;
    CHECK(saw_arch);

    REQUIRE(back.nodes.size() == net.nodes.size());
    REQUIRE(back.params.size() == net.params.size());
    REQUIRE(back.heads == net.heads);
    CHECK(back.depth == net.depth);

    // weights persist as float32: a second save must be byte-identical
    const std::string path2 = "/tmp/ctdl_test_graph2.ckpt";
    save_graph(path2, back, {{"arch", "test"}, {"epoch", "3"}});
    auto slurp = [](const std::string& p) {
        std::ifstream is(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(is)),
                           std::istreambuf_iterator<char>());
    };
    CHECK(slurp(path + ".bin") == slurp(path2 + ".bin"));
    for (std::size_t i = 0; i < net.params.size(); ++i)
        for (std::size_t j = 0; j < net.params[i].value.v.size(); ++j)
            REQUIRE(back.params[i].value.v[j] ==
                    doctest::Approx(net.params[i].value.v[j]).epsilon(1e-6));

    // eval-mode outputs agree to float32 precision
    Graph loaded = back;
    ForwardCache ca, cb;
    Graph orig = net;
    const Tensor ya = forward(orig, x, RunMode::Eval, ca)[0];
    const Tensor yb = forward(loaded, x, RunMode::Eval, cb)[0];
    for (std::size_t i = 0; i < ya.v.size(); ++i)
        CHECK(yb.v[i] == doctest::Approx(ya.v[i]).epsilon(1e-5));

    CHECK_THROWS_AS(load_graph("/tmp/ctdl_no_such_graph.ckpt"), FormatError);
    {
        std::ofstream os("/tmp/ctdl_bad_graph.ckpt");
        os << "not a checkpoint\n";
    }
    CHECK_THROWS_AS(load_graph("/tmp/ctdl_bad_graph.ckpt"), FormatError);
}

TEST_CASE("adam takes a descent step and decays on plateau") {
    // single scalar parameter, loss 0.5*w^2 -> grad w
    Graph net;
    const int in = net.add_input(1);
    net.mark_head(net.add_conv(in, 1, 1));
    net.params[0].value.v[0] = 1.0;
    net.params[1].value.v[0] = 0.0;

    AdamConfig cfg;
    cfg.lr = 0.1;
    Adam opt(net, cfg);
    double w = net.params[0].value.v[0];
    for (int it = 0; it < 50; ++it) {
        net.zero_grads();
        net.params[0].grad.v[0] = net.params[0].value.v[0];
        opt.step(net);
    }
    CHECK(std::abs(net.params[0].value.v[0]) < std::abs(w));

    CHECK(opt.learning_rate() == doctest::Approx(0.1));
    opt.observe_validation(1.0);
    for (int i = 0; i < cfg.plateau_patience + 1; ++i) opt.observe_validation(2.0);
    CHECK(opt.learning_rate() == doctest::Approx(0.01));
}
