#include <catch2/catch_amalgamated.hpp>

#include "augvit/nn/attention.hpp"
#include "augvit/rng.hpp"

using namespace augvit;

namespace {

template <typename T>
Tensor<T> randn(std::vector<int> shape, Rng& rng, T scale = T(1)) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data)
        v = static_cast<T>((rng.next_double() * 2.0 - 1.0) * static_cast<double>(scale));
    return t;
}

// Explicit O(N^2 d) evaluation; the independent oracle for the factored form.
template <typename T>
Tensor<T> quadratic_relu_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                   T eps) {
    const int n = q.dim(0), d = q.dim(1);
    auto phi = [](T x) { return x > T(0) ? x : T(0); };
    Tensor<T> out({n, d});
    for (int i = 0; i < n; ++i) {
        T denom = eps;
        for (int j = 0; j < n; ++j) {
            T w = T(0);
            for (int a = 0; a < d; ++a) w += phi(q.at(i, a)) * phi(k.at(j, a));
            denom += w;
            for (int b = 0; b < d; ++b) out.at(i, b) += w * v.at(j, b);
        }
        for (int b = 0; b < d; ++b) out.at(i, b) /= denom;
    }
    return out;
}

}  // namespace

TEST_CASE("single token returns its value row") {
    Rng rng(101);
    auto q = randn<double>({1, 6}, rng);
    q.data[0] = 1.0;  // guarantee a positive query coordinate
    auto k = randn<double>({1, 6}, rng);
    k.data[0] = 1.0;
    auto v = randn<double>({1, 6}, rng);
    const auto out = relu_linear_attention(q, k, v);
    for (int b = 0; b < 6; ++b)
        CHECK(out.at(0, b) == Catch::Approx(v.at(0, b)).epsilon(1e-5).margin(1e-5));
}

TEST_CASE("identical positive keys give the mean of V rows") {
    Rng rng(102);
    const int n = 9, d = 5;
    Tensor<double> q({n, d}), k({n, d});
    for (auto& x : q.data) x = 0.5 + rng.next_double();
    for (int j = 0; j < n; ++j)
        for (int a = 0; a < d; ++a) k.at(j, a) = 0.3 + 0.1 * a;
    auto v = randn<double>({n, d}, rng);
    const auto out = relu_linear_attention(q, k, v);
    for (int b = 0; b < d; ++b) {
        double mean = 0.0;
        for (int j = 0; j < n; ++j) mean += v.at(j, b);
        mean /= n;
        for (int i = 0; i < n; ++i)
            REQUIRE(out.at(i, b) == Catch::Approx(mean).epsilon(1e-5).margin(1e-6));
    }
}

TEST_CASE("factored form equals the explicit quadratic evaluation") {
    Rng rng(103);
    for (int iter = 0; iter < 100; ++iter) {
        const int n = 1 + static_cast<int>(rng.next_below(64));
        const int d = 2 + static_cast<int>(rng.next_below(15));
        const auto q = randn<double>({n, d}, rng);
        const auto k = randn<double>({n, d}, rng);
        const auto v = randn<double>({n, d}, rng, 3.0);
        const auto fast = relu_linear_attention(q, k, v);
        const auto slow = quadratic_relu_attention(q, k, v, 1e-6);
        // agreement is judged per output row against the row's own scale;
        // per-element ratios are meaningless on coordinates that cancel to ~0
        for (int i = 0; i < n; ++i) {
            double diff = 0.0, scale = 1e-12;
            for (int b = 0; b < d; ++b) {
                diff = std::max(diff, std::abs(fast.at(i, b) - slow.at(i, b)));
                scale = std::max(scale, std::abs(slow.at(i, b)));
            }
            REQUIRE(diff / scale < 1e-10);
        }
    }
}

TEST_CASE("outputs stay inside the value hull up to the epsilon shrink") {
    // out_i = (S_i / (S_i + eps)) * convex_combination(V); the epsilon-induced
    // slack toward zero is eps/(S_i+eps) * max|v|
    Rng rng(104);
    const double eps = 1e-6;
    auto phi = [](double x) { return x > 0.0 ? x : 0.0; };
    for (int iter = 0; iter < 100; ++iter) {
        const int n = 1 + static_cast<int>(rng.next_below(64));
        const int d = 2 + static_cast<int>(rng.next_below(15));
        const auto q = randn<double>({n, d}, rng);
        const auto k = randn<double>({n, d}, rng);
        const auto v = randn<double>({n, d}, rng, 2.0);
        const auto out = relu_linear_attention(q, k, v, eps);
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int j = 0; j < n; ++j) {
                double w = 0.0;
                for (int a = 0; a < d; ++a) w += phi(q.at(i, a)) * phi(k.at(j, a));
                s += w;
            }
            for (int b = 0; b < d; ++b) {
                double lo = v.at(0, b), hi = v.at(0, b), amax = std::abs(v.at(0, b));
                for (int j = 1; j < n; ++j) {
                    lo = std::min(lo, v.at(j, b));
                    hi = std::max(hi, v.at(j, b));
                    amax = std::max(amax, std::abs(v.at(j, b)));
                }
                const double slack = eps / (s + eps) * amax + 1e-9 * amax + 1e-12;
                REQUIRE(out.at(i, b) >= lo - slack);
                REQUIRE(out.at(i, b) <= hi + slack);
            }
        }
    }
}

TEST_CASE("softmax attention basics") {
    Rng rng(105);
    // single token
    auto q1 = randn<double>({1, 4}, rng);
    auto k1 = randn<double>({1, 4}, rng);
    auto v1 = randn<double>({1, 4}, rng);
    const auto o1 = softmax_attention(q1, k1, v1);
    for (int b = 0; b < 4; ++b) CHECK(o1.at(0, b) == Catch::Approx(v1.at(0, b)).margin(1e-12));

    // uniform logits (zero queries) give the row-mean of V
    const int n = 7, d = 3;
    Tensor<double> q({n, d});
    const auto k = randn<double>({n, d}, rng);
    const auto v = randn<double>({n, d}, rng);
    const auto out = softmax_attention(q, k, v);
    for (int b = 0; b < d; ++b) {
        double mean = 0.0;
        for (int j = 0; j < n; ++j) mean += v.at(j, b);
        mean /= n;
        for (int i = 0; i < n; ++i) REQUIRE(out.at(i, b) == Catch::Approx(mean).margin(1e-12));
    }
}

TEST_CASE("softmax attention weight rows sum to one") {
    Rng rng(106);
    for (int iter = 0; iter < 20; ++iter) {
        const int n = 2 + static_cast<int>(rng.next_below(30));
        const int d = 2 + static_cast<int>(rng.next_below(12));
        const auto q = randn<double>({n, d}, rng, 2.0);
        const auto k = randn<double>({n, d}, rng, 2.0);
        const auto w = softmax_attention_weights(q, k);
        for (int i = 0; i < n; ++i) {
            double sum = 0.0;
            for (int j = 0; j < n; ++j) {
                REQUIRE(w.at(i, j) >= 0.0);
                sum += w.at(i, j);
            }
            REQUIRE(std::abs(sum - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("attention cost formulas scale as advertised") {
    // linear: doubling N doubles the count; softmax: doubling N quadruples it
    const double l1 = linear_attention_flops(256, 16);
    const double l2 = linear_attention_flops(512, 16);
    CHECK(l2 == Catch::Approx(2.0 * l1));

    const double s1 = softmax_attention_flops(256, 16);
    const double s2 = softmax_attention_flops(512, 16);
    CHECK(s2 == Catch::Approx(4.0 * s1));
}
