#include <cmath>

#include "doctest.h"
#include "omnical/core.hpp"
#include "omnical/losses.hpp"

using namespace omnical;

namespace {

// Independent brute-force argmin of the expected loss on an n-point grid.
double brute_argmin(const LossSpec& l, double p, int n) {
    double best_a = 0.0, best_v = l.expected(p, 0.0);
    for (int k = 1; k <= n; ++k) {
        const double a = static_cast<double>(k) / n;
        const double v = l.expected(p, a);
        if (v < best_v) {
            best_v = v;
            best_a = a;
        }
    }
    return best_a;
}

}  // namespace

TEST_CASE("post_process examples") {
    CHECK(post_process(squared_loss(), 0.3) == doctest::Approx(0.3));
    CHECK(post_process(trunc_loss(0.5), 0.7) == 1.0);
    CHECK(post_process(trunc_loss(0.5), 0.5) == 1.0);  // tie resolves to 1
    CHECK(post_process(trunc_loss(0.5), 0.2) == 0.0);
    CHECK(post_process(absolute_loss(), 0.7) == brute_argmin(absolute_loss(), 0.7, 10000));
    CHECK(post_process(absolute_loss(), 0.7) == 1.0);
    CHECK(post_process_numeric(absolute_loss(), 0.7) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(post_process_numeric(absolute_loss(), 0.5) == 0.0);  // flat objective ties low
    CHECK(std::fabs(post_process_numeric(squared_loss(), 0.3) - 0.3) < 1e-6);
}

TEST_CASE("non-convex losses need a closed form") {
    auto l = v_loss(0.4);
    CHECK(post_process(l, 0.7) == 0.7);
    auto bare = custom_loss("step", [](int y, double a) { return a < 0.5 ? y : 1.0 - y; }, false);
    CHECK_THROWS_AS(post_process(bare, 0.3), UnsupportedError);
}

TEST_CASE("eval_v_loss examples") {
    CHECK(eval_v_loss(0.5, 1, 0.7) == -0.5);
    CHECK(eval_v_loss(0.5, 0, 0.5) == 0.5);
    CHECK(eval_v_loss(1.0, 1, 0.2) == 0.0);
}

TEST_CASE("loss_constants examples") {
    // Grid oracle: squared loss |a^2 - (1-a)^2| peaks at the endpoints; slope 2|y - a| peaks at 2.
    const auto sq = loss_constants_grid(squared_loss());
    CHECK(sq.C == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sq.D == doctest::Approx(2.0).epsilon(1e-4));
    const auto sqa = loss_constants(squared_loss());
    CHECK(sqa.C == 1.0);
    CHECK(sqa.D == 2.0);
    const auto tr = loss_constants(trunc_loss(0.3));
    CHECK(tr.C == doctest::Approx(1.0));
    CHECK(tr.D <= 2.0);
    const auto trg = loss_constants_grid(trunc_loss(0.3));
    CHECK(trg.C == doctest::Approx(1.0));
    CHECK(trg.D == doctest::Approx(1.4).epsilon(1e-6));
    const auto flat = loss_constants(custom_loss("const", [](int, double) { return 0.7; }, true));
    CHECK(flat.C == 0.0);
    CHECK(flat.D == 0.0);
    auto bad = custom_loss("ok", [](int, double) { return 0.0; }, true);
    bad.eval = [](int, double a) { return a > 0.5 ? std::nan("") : 0.0; };
    CHECK_THROWS_AS(loss_constants_grid(bad), NumericalError);
}

TEST_CASE("is_bimonotone examples") {
    CHECK_FALSE(is_bimonotone(absolute_loss()));
    CHECK(is_bimonotone(custom_loss("lin", [](int y, double a) { return y == 1 ? a : 1.0 - a; }, true)));
    CHECK_FALSE(is_bimonotone(squared_loss()));
    CHECK(is_bimonotone(custom_loss("const", [](int, double) { return 0.2; }, true)));
}

TEST_CASE("registry names") {
    CHECK(make_loss("squared").name == "squared");
    CHECK(make_loss("pinball:0.9").name == "pinball:0.9");
    CHECK(make_loss("vloss:0.25")(1, 0.1) == eval_v_loss(0.25, 1, 0.1));
    CHECK(make_loss("trunc:0.5")(0, 1.0) == 0.5);
    CHECK(make_loss("logloss-clipped").convex);
    CHECK_THROWS_AS(make_loss("hinge"), ConfigError);
    CHECK_THROWS_AS(make_loss("pinball:1.5"), ConfigError);
    CHECK_THROWS_AS(make_loss("vloss:abc"), ConfigError);
}

TEST_CASE("v-loss is a proper scoring rule") {
    for (int iv = 0; iv <= 100; ++iv) {
        const double v = iv / 100.0;
        for (int ip = 0; ip <= 100; ++ip) {
            const double p = ip / 100.0;
            auto ex = [&](double a) { return (1 - p) * eval_v_loss(v, 0, a) + p * eval_v_loss(v, 1, a); };
            const double at_p = ex(p);
            for (int ia = 0; ia <= 100; ++ia) CHECK(at_p <= ex(ia / 100.0) + 1e-15);
        }
    }
}

TEST_CASE("truncated losses post-processed equal v-losses") {
    for (int iv = 0; iv <= 50; ++iv) {
        const double v = iv / 50.0;
        const auto tl = trunc_loss(v);
        for (int ip = 0; ip <= 100; ++ip) {
            const double p = ip / 100.0;
            for (int y = 0; y <= 1; ++y) CHECK(tl(y, post_process(tl, p)) == eval_v_loss(v, y, p));
        }
    }
}

TEST_CASE("numeric post-processing matches brute force on the grid") {
    ForecastGrid g(100);
    for (const auto& l : builtin_convex_losses()) {
        for (int j = 0; j <= 100; ++j) {
            const double p = g.value(j);
            const double a_num = post_process_numeric(l, p);
            const double a_closed = post_process(l, p);
            const double a_bf = brute_argmin(l, p, 10000);
            CHECK(l.expected(p, a_num) <= l.expected(p, a_bf) + 1e-6);
            CHECK(l.expected(p, a_closed) <= l.expected(p, a_bf) + 1e-6);
            CHECK(l.expected(p, a_closed) <= l.expected(p, a_num) + 1e-9);
        }
    }
}

TEST_CASE("convex flags, constants bounds and scaling") {
    for (const auto& l : builtin_convex_losses()) {
        for (int y = 0; y <= 1; ++y) {
            for (int k = 1; k < 1000; ++k) {
                const double a = k / 1000.0, h = 1.0 / 1000.0;
                CHECK(l(y, a) <= 0.5 * (l(y, a - h) + l(y, a + h)) + 1e-12);
            }
        }
        const auto g = loss_constants_grid(l);
        CHECK(l.C >= g.C - 1e-9);
        CHECK(l.D >= g.D - 1e-4 * (1.0 + l.D));
        for (double c : {0.0, 0.5, 3.0}) {
            auto scaled = custom_loss("scaled", [l, c](int y, double a) { return c * l(y, a); }, true);
            CHECK(scaled.C == doctest::Approx(c * g.C).epsilon(1e-9));
            CHECK(scaled.D == doctest::Approx(c * g.D).epsilon(1e-6));
        }
    }
}

TEST_CASE("clipped log loss post-processor is the affine inverse") {
    const auto l = clipped_log_loss();
    CHECK(post_process(l, 0.0) == 0.0);
    CHECK(post_process(l, 1.0) == 1.0);
    CHECK(post_process(l, 0.5) == doctest::Approx(0.5));
    CHECK(l(1, 1.0) == doctest::Approx(-std::log(1.0 - kLogLossClip)));
}
