#pragma once

#include "usf/signal_model.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace testing {

// g(t) = cos(2 pi t / tau)
inline usf::TrigPolynomial cosine(double tau = 1.0)
{
    return usf::TrigPolynomial(tau, {0.5, 0.0, 0.5});
}

inline usf::TrigPolynomial constant(double c, double tau = 1.0)
{
    return usf::TrigPolynomial(tau, {c});
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b)
{
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double scale)
{
    std::uniform_real_distribution<double> u(-scale, scale);
    std::vector<double> v(n);
    for (auto& x : v)
        x = u(rng);
    return v;
}

} // namespace testing
