#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "emt/tensor.hpp"
#include "emt/util.hpp"

using emt::Rng;
using emt::Tensor;

namespace {

// reference matmul: plain triple loop over explicit index math
std::vector<double> naive_mm(const std::vector<double>& a, const std::vector<double>& b,
                             size_t m, size_t k, size_t n, bool tb) {
    std::vector<double> c(m * n, 0.0);
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j)
            for (size_t l = 0; l < k; ++l) {
                const double bv = tb ? b[j * k + l] : b[l * n + j];
                c[i * n + j] += a[i * k + l] * bv;
            }
    return c;
}

std::vector<double> random_vec(Rng& rng, size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-2.0, 2.0);
    return v;
}

}  // namespace

TEST(Tensor, ConstructionValidates) {
    EXPECT_NO_THROW(Tensor({2, 3}, std::vector<double>(6, 0.0)));
    EXPECT_THROW(Tensor({2, 0}, {}), std::invalid_argument);
    EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5, 0.0)), std::invalid_argument);
    EXPECT_THROW(Tensor({}, {}), std::invalid_argument);
    EXPECT_THROW(Tensor({1}, {std::numeric_limits<double>::quiet_NaN()}),
                 std::invalid_argument);
    EXPECT_THROW(Tensor({1}, {std::numeric_limits<double>::infinity()}),
                 std::invalid_argument);
}

TEST(Tensor, Factories) {
    const Tensor z = Tensor::zeros({2, 2});
    for (size_t i = 0; i < z.size(); ++i) EXPECT_EQ(z[i], 0.0);
    const Tensor f = Tensor::full({3}, 1.5);
    for (size_t i = 0; i < f.size(); ++i) EXPECT_EQ(f[i], 1.5);
    const Tensor s = Tensor::scalar(-2.0);
    EXPECT_EQ(s.size(), 1u);
    EXPECT_EQ(s[0], -2.0);
    EXPECT_EQ(z.shape_str(), "[2,2]");
}

TEST(Tensor, MatmulHandExample) {
    // [[1,2],[3,4]] * [[5,6],[7,8]] = [[19,22],[43,50]]
    std::vector<double> a = {1, 2, 3, 4}, b = {5, 6, 7, 8}, c(4, 0.0);
    emt::detail::matmul_nn(c.data(), a.data(), b.data(), 2, 2, 2);
    EXPECT_EQ(c, (std::vector<double>{19, 22, 43, 50}));
}

TEST(Tensor, MatmulAccumulates) {
    std::vector<double> a = {1}, b = {1}, c = {10};
    emt::detail::matmul_nn(c.data(), a.data(), b.data(), 1, 1, 1);
    EXPECT_EQ(c[0], 11.0);
}

TEST(Tensor, MatmulVariantsMatchNaiveOracle) {
    Rng rng(42);
    for (int iter = 0; iter < 50; ++iter) {
        const size_t m = 1 + rng.uniform_int(6);
        const size_t k = 1 + rng.uniform_int(6);
        const size_t n = 1 + rng.uniform_int(6);
        const auto a = random_vec(rng, m * k);
        const auto b = random_vec(rng, k * n);
        const auto bt = random_vec(rng, n * k);   // b stored transposed
        const auto bmn = random_vec(rng, m * n);  // gradient-shaped operand

        std::vector<double> c(m * n, 0.0);
        emt::detail::matmul_nn(c.data(), a.data(), b.data(), m, k, n);
        auto want = naive_mm(a, b, m, k, n, false);
        for (size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], want[i], 1e-12);

        std::fill(c.begin(), c.end(), 0.0);
        emt::detail::matmul_nt(c.data(), a.data(), bt.data(), m, k, n);
        want = naive_mm(a, bt, m, k, n, true);
        for (size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], want[i], 1e-12);

        // tn produces the [k, n] weight-gradient shape: a^T * bmn
        std::vector<double> ct(k * n, 0.0);
        emt::detail::matmul_tn(ct.data(), a.data(), bmn.data(), m, k, n);
        std::vector<double> want_t(k * n, 0.0);
        for (size_t p = 0; p < k; ++p)
            for (size_t j = 0; j < n; ++j)
                for (size_t i = 0; i < m; ++i)
                    want_t[p * n + j] += a[i * k + p] * bmn[i * n + j];
        for (size_t i = 0; i < ct.size(); ++i) EXPECT_NEAR(ct[i], want_t[i], 1e-12);
    }
}
