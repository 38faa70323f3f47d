#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace lvv {

using cplx = std::complex<double>;

inline constexpr double inf = std::numeric_limits<double>::infinity();
inline constexpr double pi = std::numbers::pi;

// Raised when a quadrature or simulation routine cannot meet its contract.
class NumericalFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised for malformed configuration or arguments at the user boundary.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <class V>
struct QuadResult {
    V value{};
    double error = 0.0;
};

inline double magnitude(double v) { return std::abs(v); }
inline double magnitude(const cplx& v) { return std::abs(v); }

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// e^{iz} - 1 - iz without cancellation for small |z|
inline cplx expm1_i_minus_iz(double z) {
    double a = std::abs(z);
    if (a < 1e-3) {
        double z2 = z * z;
        double re = -z2 / 2.0 * (1.0 - z2 / 12.0 * (1.0 - z2 / 30.0));
        double im = -z * z2 / 6.0 * (1.0 - z2 / 20.0 * (1.0 - z2 / 42.0));
        return {re, im};
    }
    double s = std::sin(z / 2.0);
    return {-2.0 * s * s, std::sin(z) - z};
}

// e^{iz} - 1 without cancellation
inline cplx expm1_i(double z) {
    double s = std::sin(z / 2.0);
    return {-2.0 * s * s, std::sin(z)};
}

}  // namespace lvv
