#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace hypslab {

using complexd = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;

// ---------------------------------------------------------------------------
// Deterministic reductions.
//
// Pairwise (tree) summation over a materialized buffer: the reduction order
// depends only on the element count, never on thread scheduling, so reruns
// are bit-identical.

namespace detail {
template <typename T>
T pairwise_sum_range(const T* data, std::size_t n) {
    if (n <= 8) {
        T acc{};
        for (std::size_t i = 0; i < n; ++i) acc += data[i];
        return acc;
    }
    const std::size_t half = n / 2;
    return pairwise_sum_range(data, half) + pairwise_sum_range(data + half, n - half);
}
}  // namespace detail

template <typename T>
T pairwise_sum(std::span<const T> v) {
    return detail::pairwise_sum_range(v.data(), v.size());
}

template <typename T>
T pairwise_sum(const std::vector<T>& v) {
    return detail::pairwise_sum_range(v.data(), v.size());
}

// ---------------------------------------------------------------------------
// Worker pool. HYPSLAB_THREADS caps the worker count; every index writes to
// its own slot, so results do not depend on the thread count.

inline unsigned max_threads() {
    if (const char* env = std::getenv("HYPSLAB_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
    const unsigned nw = std::min<std::size_t>(max_threads(), n);
    if (nw <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> workers;
    workers.reserve(nw);
    for (unsigned w = 0; w < nw; ++w) {
        workers.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += nw) body(i);
        });
    }
    for (auto& t : workers) t.join();
}

// ---------------------------------------------------------------------------
// Least-squares line fit y ~= slope*x + intercept.

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
};

inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("fit_line: need >= 2 matching samples");
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double denom = n * sxx - sx * sx;
    if (std::abs(denom) < 1e-300) throw std::invalid_argument("fit_line: degenerate abscissae");
    LineFit f;
    f.slope = (n * sxy - sx * sy) / denom;
    f.intercept = (sy - f.slope * sx) / n;
    return f;
}

// ---------------------------------------------------------------------------
// Complex gamma function (Lanczos, g = 7, n = 9). Accurate to ~1e-13 in the
// right half plane; the reflection formula covers Re z < 1/2.

inline complexd cgamma(complexd z) {
    static const double coeff[9] = {
        0.99999999999980993,  676.5203681218851,   -1259.1392167224028,
        771.32342877765313,   -176.61502916214059, 12.507343278686905,
        -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};
    if (z.real() < 0.5) {
        // Gamma(z) Gamma(1-z) = pi / sin(pi z)
        return kPi / (std::sin(kPi * z) * cgamma(1.0 - z));
    }
    z -= 1.0;
    complexd x = coeff[0];
    for (int i = 1; i < 9; ++i) x += coeff[i] / (z + static_cast<double>(i));
    const complexd t = z + 7.5;
    return std::sqrt(2.0 * kPi) * std::pow(t, z + 0.5) * std::exp(-t) * x;
}

// ---------------------------------------------------------------------------
// Smooth frequency cutoffs: chi0 == 1 on |x| <= 2, == 0 on |x| >= 4, with a
// frozen C^inf exp-based transition on (2, 4). Kernel values depend on the
// transition shape, so it is part of the format.

namespace detail {
inline double bump_half(double x) { return x > 0.0 ? std::exp(-1.0 / x) : 0.0; }
}  // namespace detail

inline double smooth_step01(double x) {
    // 0 for x <= 0, 1 for x >= 1, C^inf monotone in between.
    const double a = detail::bump_half(x);
    const double b = detail::bump_half(1.0 - x);
    return a / (a + b);
}

inline double chi_low(double lambda) {
    const double x = std::abs(lambda);
    if (x <= 2.0) return 1.0;
    if (x >= 4.0) return 0.0;
    return smooth_step01((4.0 - x) / 2.0);
}

inline double chi_high(double lambda) { return 1.0 - chi_low(lambda); }

// ---------------------------------------------------------------------------
// tanh-sinh (double exponential) quadrature of f over (a, b), robust for
// integrable endpoint singularities. Levels are doubled until the estimate
// stabilizes to rel_tol or max_level is hit.

template <typename F>
double tanh_sinh(F&& f, double a, double b, double rel_tol = 1e-13, int max_level = 12) {
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (b + a);
    // abscissa/weight for parameter t: x = mid + half*tanh(pi/2 sinh t)
    auto eval_at = [&](double t, double h) {
        const double s = std::sinh(t);
        const double w = 0.5 * kPi * std::cosh(t) / std::pow(std::cosh(0.5 * kPi * s), 2);
        const double u = std::tanh(0.5 * kPi * s);
        const double x = mid + half * u;
        if (x <= a || x >= b || w < 1e-300) return 0.0;
        return w * f(x);
    };
    const double tmax = 6.5;  // tanh(pi/2 sinh 6.5) == 1 to double precision
    double h = 1.0;
    double sum = eval_at(0.0, h);
    for (double t = h; t <= tmax; t += h) sum += eval_at(t, h) + eval_at(-t, h);
    double prev = sum * h * half;
    for (int level = 1; level <= max_level; ++level) {
        h *= 0.5;
        double add = 0.0;
        for (double t = h; t <= tmax; t += 2.0 * h) add += eval_at(t, h) + eval_at(-t, h);
        sum += add;
        const double cur = sum * h * half;
        if (level >= 4 && std::abs(cur - prev) <= rel_tol * std::max(1.0, std::abs(cur))) return cur;
        prev = cur;
    }
    return prev;
}

// ---------------------------------------------------------------------------
// Misc small helpers.

inline bool approx_rel(double a, double b, double tol) {
    return std::abs(a - b) <= tol * std::max({1e-300, std::abs(a), std::abs(b)});
}

struct CheckLine {
    std::string name;
    bool pass = false;
    double value = 0.0;
    std::string detail;
};

}  // namespace hypslab
