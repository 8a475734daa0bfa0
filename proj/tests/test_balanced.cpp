#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "ltcl/balanced.hpp"
#include "oracle.hpp"

using namespace ltcl;

namespace {

Tensor<double> rows(const std::vector<std::vector<double>>& data) {
    Tensor<double> t({data.size(), data[0].size()});
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (std::size_t j = 0; j < data[i].size(); ++j) t.at2(i, j) = data[i][j];
    }
    return t;
}

}  // namespace

TEST_CASE("distribution vector: hard counts") {
    std::vector<SoftLabel> labels = {SoftLabel::hard(0), SoftLabel::hard(0), SoftLabel::hard(0),
                                     SoftLabel::hard(1)};
    const auto dv = distribution_vector(labels, 2);
    CHECK(dv.raw == std::vector<double>{3.0, 1.0});
    CHECK(dv.normalized[0] == doctest::Approx(0.75));
    CHECK(dv.normalized[1] == doctest::Approx(0.25));
}

TEST_CASE("distribution vector: synthetic soft sample counts fractionally") {
    SoftLabel lbl;
    lbl.entries = {{0, 0.75}, {1, 0.25}};
    const auto dv = distribution_vector({lbl}, 2);
    CHECK(dv.raw[0] == doctest::Approx(0.75));
    CHECK(dv.raw[1] == doctest::Approx(0.25));
}

TEST_CASE("distribution vector: uniform set normalizes to 1/C") {
    std::vector<SoftLabel> labels;
    for (int c = 0; c < 5; ++c) {
        labels.push_back(SoftLabel::hard(c));
        labels.push_back(SoftLabel::hard(c));
    }
    const auto dv = distribution_vector(labels, 5);
    for (double v : dv.normalized) CHECK(v == doctest::Approx(0.2));
}

TEST_CASE("distribution vector: errors") {
    CHECK_THROWS_AS(distribution_vector({}, 3), parameter_error);
    CHECK_THROWS_AS(distribution_vector({SoftLabel::hard(3)}, 3), parameter_error);
}

TEST_CASE("bs loss: uniform adjustment equals plain cross-entropy") {
    Rng rng(31);
    const std::size_t B = 3, C = 4;
    Tensor<double> logits({B, C}), targets({B, C});
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t c = 0; c < C; ++c) logits.at2(b, c) = rng.uniform(-2.0, 2.0);
        targets.at2(b, static_cast<std::size_t>(rng.below(C))) = 1.0;
    }
    const std::vector<double> uniform(C, 1.0 / C);
    const std::vector<double> zero(C, 0.0);
    const auto a = balanced_softmax_loss(logits, targets, uniform);
    const auto b = balanced_softmax_loss(logits, targets, zero);
    CHECK(a.value == doctest::Approx(b.value).epsilon(1e-12));
}

TEST_CASE("bs loss: single class costs nothing") {
    const auto logits = rows({{3.7}, {-12.0}});
    const auto targets = rows({{1.0}, {1.0}});
    const auto res = balanced_softmax_loss(logits, targets, {0.25});
    CHECK(res.value == doctest::Approx(0.0));
}

TEST_CASE("bs loss: frozen derived value") {
    // L=(0,0), adj=(0.8,0.2), one-hot class 1 -> ln(1+e^0.6)
    const auto logits = rows({{0.0, 0.0}});
    const auto targets = rows({{0.0, 1.0}});
    const auto res = balanced_softmax_loss(logits, targets, {0.8, 0.2});
    CHECK(res.value == doctest::Approx(1.037487950485886).epsilon(1e-9));
    const auto via_oracle = static_cast<double>(oracle::bs_loss({{0.0, 0.0}}, {{0.0, 1.0}}, {0.8, 0.2}));
    oracle::Report report{"balanced_softmax_loss", "L=(0,0) adj=(0.8,0.2) one-hot class 1",
                          std::abs(res.value - via_oracle),
                          std::abs(res.value - via_oracle) / std::abs(via_oracle), 1e-12};
    CHECK(report.pass());
}

TEST_CASE("bs loss: non-normalized target rows rejected") {
    const auto logits = rows({{0.0, 0.0}});
    const auto bad = rows({{0.6, 0.5}});
    CHECK_THROWS_AS(balanced_softmax_loss(logits, bad, {0.0, 0.0}), validation_error);
}

TEST_CASE("bs loss: gradient matches central finite differences") {
    Rng rng(32);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t B = 1 + rng.below(4), C = 2 + rng.below(9);
        Tensor<double> logits({B, C}), targets({B, C});
        std::vector<double> adj(C);
        for (std::size_t i = 0; i < B * C; ++i) logits[i] = rng.uniform(-2.0, 2.0);
        for (std::size_t c = 0; c < C; ++c) adj[c] = rng.uniform(0.0, 1.0);
        for (std::size_t b = 0; b < B; ++b) {
            // random soft target row
            double sum = 0.0;
            std::vector<double> t(C);
            for (std::size_t c = 0; c < C; ++c) {
                t[c] = rng.uniform(0.0, 1.0);
                sum += t[c];
            }
            for (std::size_t c = 0; c < C; ++c) targets.at2(b, c) = t[c] / sum;
        }
        const auto res = balanced_softmax_loss(logits, targets, adj);
        std::vector<double> x(logits.data(), logits.data() + B * C);
        auto f = [&](const std::vector<double>& v) {
            Tensor<double> lg({B, C});
            std::copy(v.begin(), v.end(), lg.data());
            return static_cast<double>(balanced_softmax_loss(lg, targets, adj).value);
        };
        const auto fd = oracle::fd_gradient(f, x);
        for (std::size_t i = 0; i < fd.size(); ++i) {
            const double denom = std::max(1e-6, std::abs(fd[i]));
            CHECK(std::abs(fd[i] - res.d_logits[i]) / denom < 1e-4);
        }
    }
}

TEST_CASE("bs loss: shift invariance") {
    Rng rng(33);
    const std::size_t B = 2, C = 5;
    Tensor<double> logits({B, C}), targets({B, C});
    for (std::size_t i = 0; i < B * C; ++i) logits[i] = rng.uniform(-3.0, 3.0);
    for (std::size_t b = 0; b < B; ++b) targets.at2(b, b + 1) = 1.0;
    std::vector<double> adj(C);
    for (auto& a : adj) a = rng.uniform(0.0, 1.0);

    const double base = balanced_softmax_loss(logits, targets, adj).value;
    for (double shift : {-5.0, 0.7, 123.0}) {
        Tensor<double> shifted = logits;
        for (std::size_t i = 0; i < shifted.numel(); ++i) shifted[i] += shift;
        CHECK(balanced_softmax_loss(shifted, targets, adj).value == doctest::Approx(base).epsilon(1e-9));
    }
}

TEST_CASE("bs loss: majority class sample gets damped gradient under skewed counts") {
    Rng rng(34);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t C = 3;
        Tensor<double> logits({1, C});
        for (std::size_t c = 0; c < C; ++c) logits.at2(0, c) = rng.uniform(-1.0, 1.0);
        Tensor<double> targets({1, C});
        targets.at2(0, 0) = 1.0;  // class 0 is the majority class and the sample's own class

        std::vector<SoftLabel> labels;
        for (int i = 0; i < 90; ++i) labels.push_back(SoftLabel::hard(0));
        for (int i = 0; i < 8; ++i) labels.push_back(SoftLabel::hard(1));
        for (int i = 0; i < 2; ++i) labels.push_back(SoftLabel::hard(2));
        const auto dv = distribution_vector(labels, C);

        const auto skewed = balanced_softmax_loss(logits, targets, bs_adjustment(dv, BsVariant::paper));
        const auto uniform = balanced_softmax_loss(logits, targets, std::vector<double>(C, 1.0 / C));
        CHECK(std::abs(skewed.d_logits.at2(0, 0)) < std::abs(uniform.d_logits.at2(0, 0)));
    }
}

TEST_CASE("bs adjustment variants") {
    std::vector<SoftLabel> labels = {SoftLabel::hard(0), SoftLabel::hard(0), SoftLabel::hard(1)};
    auto dv = distribution_vector(labels, 3);  // counts (2,1,0)
    const auto paper = bs_adjustment(dv, BsVariant::paper);
    CHECK(paper[0] == doctest::Approx(2.0 / 3.0));
    CHECK(paper[1] == doctest::Approx(1.0 / 3.0));
    CHECK(paper[2] == 0.0);  // zero-count class: no adjustment
    const auto logc = bs_adjustment(dv, BsVariant::log_count);
    CHECK(logc[0] == doctest::Approx(std::log(2.0 / 3.0)));
    CHECK(logc[1] == doctest::Approx(std::log(1.0 / 3.0)));
    CHECK(logc[2] == 0.0);
    CHECK(bs_variant_from_string("log_count") == BsVariant::log_count);
    CHECK_THROWS_AS(bs_variant_from_string("x"), parameter_error);
}

TEST_CASE("adaptive lambda") {
    CHECK(adaptive_lambda(100, 100) == doctest::Approx(1.0));
    CHECK(adaptive_lambda(1, 4) == doctest::Approx(0.5));
    CHECK(adaptive_lambda(9, 16) == doctest::Approx(0.75));
    CHECK_THROWS_AS(adaptive_lambda(1, 0), parameter_error);
    CHECK_THROWS_AS(adaptive_lambda(0, 10), parameter_error);
    CHECK_THROWS_AS(adaptive_lambda(11, 10), parameter_error);
    // monotone in |D_i| at fixed cumulative size
    double prev = 0.0;
    for (std::size_t cur = 1; cur <= 50; ++cur) {
        const double lam = adaptive_lambda(cur, 50);
        CHECK(lam > prev);
        prev = lam;
    }
}

TEST_CASE("integrated loss") {
    CHECK(integrated_loss(1.5, 0.0, 1.0) == doctest::Approx(1.5));
    CHECK(integrated_loss(1.0, 2.0, 0.5) == doctest::Approx(2.0));
    // d/dfkd = lambda
    const double lam = 0.37, bs = 0.9;
    const double d = (integrated_loss(bs, 2.0 + 1e-3, lam) - integrated_loss(bs, 2.0, lam)) / 1e-3;
    CHECK(d == doctest::Approx(lam).epsilon(1e-9));
    CHECK_THROWS_AS(integrated_loss(1.0, 1.0, 0.0), parameter_error);
    CHECK_THROWS_AS(integrated_loss(1.0, 1.0, 1.5), parameter_error);
}
