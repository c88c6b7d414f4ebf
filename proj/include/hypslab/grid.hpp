#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "hypslab/util.hpp"

namespace hypslab {

// Geodesic-polar discretization of a hyperbolic disk of radius rmax.
// Radial nodes are staggered, r_i = (i + 1/2) dr, so coth r and 1/sinh r are
// never evaluated at the coordinate singularity. Metric: dr^2 + sinh^2 r dth^2,
// volume element sinh r dr dth.
class HyperbolicGrid {
public:
    HyperbolicGrid(int nr, int ntheta, double rmax)
        : nr_(nr), ntheta_(ntheta), rmax_(rmax) {
        if (nr < 8) throw std::invalid_argument("HyperbolicGrid: nr must be >= 8");
        if (ntheta < 8) throw std::invalid_argument("HyperbolicGrid: ntheta must be >= 8");
        if (ntheta % 2 != 0) throw std::invalid_argument("HyperbolicGrid: ntheta must be even");
        if (!(rmax > 0.0)) throw std::invalid_argument("HyperbolicGrid: rmax must be > 0");
        dr_ = rmax / nr;
        dtheta_ = 2.0 * kPi / ntheta;
        r_.resize(nr);
        sinh_r_.resize(nr);
        coth_r_.resize(nr);
        inv_sinh_r_.resize(nr);
        for (int i = 0; i < nr; ++i) {
            r_[i] = (i + 0.5) * dr_;
            sinh_r_[i] = std::sinh(r_[i]);
            coth_r_[i] = std::cosh(r_[i]) / sinh_r_[i];
            inv_sinh_r_[i] = 1.0 / sinh_r_[i];
        }
        sinh_half_.resize(nr + 1);  // sinh at cell faces r = i*dr
        for (int i = 0; i <= nr; ++i) sinh_half_[i] = std::sinh(i * dr_);
    }

    int nr() const { return nr_; }
    int ntheta() const { return ntheta_; }
    double rmax() const { return rmax_; }
    double dr() const { return dr_; }
    double dtheta() const { return dtheta_; }
    int nodes() const { return nr_ * ntheta_; }

    double r(int i) const { return r_[i]; }
    double theta(int j) const { return j * dtheta_; }
    double sinh_r(int i) const { return sinh_r_[i]; }
    double coth_r(int i) const { return coth_r_[i]; }
    double inv_sinh_r(int i) const { return inv_sinh_r_[i]; }
    double sinh_face(int i) const { return sinh_half_[i]; }

    int index(int i, int j) const { return i * ntheta_ + j; }
    int wrap_theta(int j) const { return (j % ntheta_ + ntheta_) % ntheta_; }
    // Antipodal angle index, used by the parity ghost closure across r = 0.
    int antipode(int j) const { return (j + ntheta_ / 2) % ntheta_; }

    bool same_shape(const HyperbolicGrid& o) const {
        return nr_ == o.nr_ && ntheta_ == o.ntheta_ && rmax_ == o.rmax_;
    }

    // Poincare-disk chart point of node (i, j): z = tanh(r/2) e^{i theta}.
    complexd chart_point(int i, int j) const {
        const double rho = std::tanh(0.5 * r_[i]);
        return complexd(rho * std::cos(theta(j)), rho * std::sin(theta(j)));
    }

private:
    int nr_, ntheta_;
    double rmax_, dr_, dtheta_;
    std::vector<double> r_, sinh_r_, coth_r_, inv_sinh_r_, sinh_half_;
};

inline std::shared_ptr<const HyperbolicGrid> build_grid(int nr, int ntheta, double rmax) {
    return std::make_shared<const HyperbolicGrid>(nr, ntheta, rmax);
}

using GridPtr = std::shared_ptr<const HyperbolicGrid>;

// ---------------------------------------------------------------------------
// Node-sampled fields, stored radius-major: value(i, j) at i*ntheta + j.

template <typename T>
class Field {
public:
    Field() = default;
    explicit Field(GridPtr grid, T fill = T{})
        : grid_(std::move(grid)), values_(grid_->nodes(), fill) {}
    Field(GridPtr grid, std::vector<T> values) : grid_(std::move(grid)), values_(std::move(values)) {
        if (static_cast<int>(values_.size()) != grid_->nodes())
            throw std::invalid_argument("Field: value count must equal nr*ntheta");
    }

    const HyperbolicGrid& grid() const { return *grid_; }
    GridPtr grid_ptr() const { return grid_; }
    int size() const { return static_cast<int>(values_.size()); }

    T& operator()(int i, int j) { return values_[grid_->index(i, j)]; }
    const T& operator()(int i, int j) const { return values_[grid_->index(i, j)]; }
    T& operator[](int k) { return values_[k]; }
    const T& operator[](int k) const { return values_[k]; }

    std::vector<T>& values() { return values_; }
    const std::vector<T>& values() const { return values_; }

    template <typename F>
    static Field sample(GridPtr grid, F&& f) {
        Field out(grid);
        for (int i = 0; i < grid->nr(); ++i)
            for (int j = 0; j < grid->ntheta(); ++j) out(i, j) = f(grid->r(i), grid->theta(j));
        return out;
    }

private:
    GridPtr grid_;
    std::vector<T> values_;
};

using ScalarField = Field<double>;
using ComplexField = Field<complexd>;

// A 1-form / tangent vector field in the orthonormal coframe (dr, sinh r dth).
template <typename T>
struct TangentFieldT {
    Field<T> c1;  // radial component
    Field<T> c2;  // angular component
    TangentFieldT() = default;
    explicit TangentFieldT(GridPtr grid) : c1(grid), c2(grid) {}
};

using TangentField = TangentFieldT<complexd>;
using RealTangentField = TangentFieldT<double>;

// ---------------------------------------------------------------------------
// Ghost-value closures. Across the origin the ghost at radius -dr/2 is the
// value at the antipodal angle; at rmax a Dirichlet closure with a given
// boundary value (default 0).

template <typename T>
inline T ghost_inner(const Field<T>& f, int j) {
    return f(0, f.grid().antipode(j));
}

template <typename T>
inline T ghost_outer(const Field<T>& f, int j, T boundary = T{}) {
    return 2.0 * boundary - f(f.grid().nr() - 1, j);
}

// ---------------------------------------------------------------------------
// Laplace-Beltrami operator, Delta = d_r^2 + coth r d_r + sinh^{-2} r d_th^2,
// discretized in flux form (1/sinh r) d_r(sinh r d_r f) + sinh^{-2} r d_th^2 f
// so that it is exactly symmetric under the sinh r quadrature weight. The
// face factor sinh(0) = 0 makes the origin flux vanish, which is the parity
// closure in disguise.

template <typename T>
Field<T> laplace_beltrami(const Field<T>& f, T boundary = T{}) {
    const auto& g = f.grid();
    Field<T> out(f.grid_ptr());
    const int nr = g.nr(), nt = g.ntheta();
    const double inv_dr2 = 1.0 / (g.dr() * g.dr());
    const double inv_dt2 = 1.0 / (g.dtheta() * g.dtheta());
    for (int i = 0; i < nr; ++i) {
        const double wlo = g.sinh_face(i) / g.sinh_r(i) * inv_dr2;
        const double whi = g.sinh_face(i + 1) / g.sinh_r(i) * inv_dr2;
        const double wth = g.inv_sinh_r(i) * g.inv_sinh_r(i) * inv_dt2;
        for (int j = 0; j < nt; ++j) {
            const T fc = f(i, j);
            const T flo = (i > 0) ? f(i - 1, j) : ghost_inner(f, j);
            const T fhi = (i + 1 < nr) ? f(i + 1, j) : ghost_outer(f, j, boundary);
            const T fm = f(i, g.wrap_theta(j - 1));
            const T fp = f(i, g.wrap_theta(j + 1));
            out(i, j) = wlo * (flo - fc) + whi * (fhi - fc) + wth * (fp - 2.0 * fc + fm);
        }
    }
    return out;
}

// Variants with a per-angle boundary ring: the outer ghost extrapolates
// quadratically through the prescribed value at r = rmax (third-order ghost,
// so derivative closures stay second order up to the last row). Used by
// map-valued fields whose boundary trace is pinned.
template <typename T>
inline T ghost_ring(const Field<T>& f, int j, const T& b) {
    const int n = f.grid().nr();
    return T((1.0 / 3.0) * f(n - 2, j) - 2.0 * f(n - 1, j) + (8.0 / 3.0) * b);
}

template <typename T>
Field<T> laplace_beltrami_bc(const Field<T>& f, const std::vector<T>& bc) {
    const auto& g = f.grid();
    Field<T> out(f.grid_ptr());
    const int nr = g.nr(), nt = g.ntheta();
    const double inv_dr2 = 1.0 / (g.dr() * g.dr());
    const double inv_dt2 = 1.0 / (g.dtheta() * g.dtheta());
    for (int i = 0; i < nr; ++i) {
        const double wlo = g.sinh_face(i) / g.sinh_r(i) * inv_dr2;
        const double whi = g.sinh_face(i + 1) / g.sinh_r(i) * inv_dr2;
        const double wth = g.inv_sinh_r(i) * g.inv_sinh_r(i) * inv_dt2;
        for (int j = 0; j < nt; ++j) {
            const T fc = f(i, j);
            const T flo = (i > 0) ? f(i - 1, j) : ghost_inner(f, j);
            const T fhi = (i + 1 < nr) ? f(i + 1, j) : ghost_ring(f, j, bc[j]);
            const T fm = f(i, g.wrap_theta(j - 1));
            const T fp = f(i, g.wrap_theta(j + 1));
            out(i, j) = wlo * (flo - fc) + whi * (fhi - fc) + wth * (fp - 2.0 * fc + fm);
        }
    }
    return out;
}

template <typename T>
TangentFieldT<T> gradient_bc(const Field<T>& f, const std::vector<T>& bc) {
    const auto& g = f.grid();
    TangentFieldT<T> out(f.grid_ptr());
    const int nr = g.nr(), nt = g.ntheta();
    const double inv2dr = 0.5 / g.dr();
    const double inv2dt = 0.5 / g.dtheta();
    for (int i = 0; i < nr; ++i) {
        for (int j = 0; j < nt; ++j) {
            const T flo = (i > 0) ? f(i - 1, j) : ghost_inner(f, j);
            const T fhi = (i + 1 < nr) ? f(i + 1, j) : ghost_ring(f, j, bc[j]);
            out.c1(i, j) = (fhi - flo) * inv2dr;
            out.c2(i, j) =
                (f(i, g.wrap_theta(j + 1)) - f(i, g.wrap_theta(j - 1))) * inv2dt * g.inv_sinh_r(i);
        }
    }
    return out;
}

// Centered-difference gradient of a polar-frame *component* field (phi_1,
// phi_2, A_1, A_2, ...). The polar frame flips across the origin, so the
// inner ghost is minus the antipodal value; at rmax the field is extrapolated
// one-sidedly (components of decaying 1-forms carry no pinned trace).
template <typename T>
TangentFieldT<T> gradient_component(const Field<T>& f) {
    const auto& g = f.grid();
    TangentFieldT<T> out(f.grid_ptr());
    const int nr = g.nr(), nt = g.ntheta();
    const double inv2dr = 0.5 / g.dr();
    const double inv2dt = 0.5 / g.dtheta();
    for (int i = 0; i < nr; ++i) {
        for (int j = 0; j < nt; ++j) {
            const T flo = (i > 0) ? f(i - 1, j) : T(-ghost_inner(f, j));
            const T fhi = (i + 1 < nr) ? f(i + 1, j) : T(2.0 * f(nr - 1, j) - f(nr - 2, j));
            out.c1(i, j) = (fhi - flo) * inv2dr;
            out.c2(i, j) =
                (f(i, g.wrap_theta(j + 1)) - f(i, g.wrap_theta(j - 1))) * inv2dt * g.inv_sinh_r(i);
        }
    }
    return out;
}

// Centered-difference gradient in the orthonormal coframe.
template <typename T>
TangentFieldT<T> gradient(const Field<T>& f, T boundary = T{}) {
    const auto& g = f.grid();
    TangentFieldT<T> out(f.grid_ptr());
    const int nr = g.nr(), nt = g.ntheta();
    const double inv2dr = 0.5 / g.dr();
    const double inv2dt = 0.5 / g.dtheta();
    for (int i = 0; i < nr; ++i) {
        for (int j = 0; j < nt; ++j) {
            const T flo = (i > 0) ? f(i - 1, j) : ghost_inner(f, j);
            const T fhi = (i + 1 < nr) ? f(i + 1, j) : ghost_outer(f, j, boundary);
            out.c1(i, j) = (fhi - flo) * inv2dr;
            out.c2(i, j) =
                (f(i, g.wrap_theta(j + 1)) - f(i, g.wrap_theta(j - 1))) * inv2dt * g.inv_sinh_r(i);
        }
    }
    return out;
}

template <typename T>
ScalarField grad_norm_sq(const Field<T>& f) {
    auto df = gradient(f);
    ScalarField out(f.grid_ptr());
    for (int k = 0; k < out.size(); ++k)
        out[k] = std::norm(complexd(df.c1[k])) + std::norm(complexd(df.c2[k]));
    return out;
}

inline ScalarField grad_norm(const ScalarField& f) {
    auto s = grad_norm_sq(f);
    for (auto& v : s.values()) v = std::sqrt(v);
    return s;
}

// Midpoint quadrature against dvol = sinh r dr dth, pairwise-reduced.
inline double integrate(const ScalarField& f) {
    const auto& g = f.grid();
    std::vector<double> terms(f.size());
    const double cell = g.dr() * g.dtheta();
    for (int i = 0; i < g.nr(); ++i) {
        const double w = g.sinh_r(i) * cell;
        for (int j = 0; j < g.ntheta(); ++j) terms[g.index(i, j)] = w * f(i, j);
    }
    return pairwise_sum(terms);
}

inline complexd integrate(const ComplexField& f) {
    const auto& g = f.grid();
    std::vector<complexd> terms(f.size());
    const double cell = g.dr() * g.dtheta();
    for (int i = 0; i < g.nr(); ++i) {
        const double w = g.sinh_r(i) * cell;
        for (int j = 0; j < g.ntheta(); ++j) terms[g.index(i, j)] = w * f(i, j);
    }
    return pairwise_sum(terms);
}

template <typename T>
double norm_l2(const Field<T>& f) {
    ScalarField sq(f.grid_ptr());
    for (int k = 0; k < f.size(); ++k) sq[k] = std::norm(complexd(f[k]));
    return std::sqrt(integrate(sq));
}

template <typename T>
double norm_sup(const Field<T>& f) {
    double m = 0.0;
    for (const auto& v : f.values()) m = std::max(m, std::abs(v));
    return m;
}

// Real L^2 pairing Re int f conj(g) dvol.
template <typename T>
double inner_real(const Field<T>& f, const Field<T>& g) {
    ScalarField prod(f.grid_ptr());
    for (int k = 0; k < f.size(); ++k)
        prod[k] = std::real(complexd(f[k]) * std::conj(complexd(g[k])));
    return integrate(prod);
}

// Pointwise multiplication by e^{alpha r}.
template <typename T>
Field<T> apply_radial_weight(const Field<T>& f, double alpha) {
    Field<T> out(f.grid_ptr());
    const auto& g = f.grid();
    for (int i = 0; i < g.nr(); ++i) {
        const double w = std::exp(alpha * g.r(i));
        for (int j = 0; j < g.ntheta(); ++j) out(i, j) = w * f(i, j);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Near the polar axis the flux-form Laplacian loses one order on the angular
// modes m = +-1 (truncation ~ h^2 / r, maximized at r_0 = dr/2). Operators
// that need uniform second order replace those two modes on the rows with
// r < 1 by an exactly-fitted three-point rule: mode-1 radial profiles are
// odd, so a rule reproducing L_1 = d_rr + coth r d_r - 1/sinh^2 r exactly on
// {r, r^3, r^5} removes the 1/r-amplified error while staying second order
// away from the axis. The rule below is shared by the explicit tension
// evaluation and by the implicit heat solver so both see the same operator.

namespace detail {
struct AxisFitRule {
    double a[3];  // weights at samples node0, node0+1, node0+2
    int node0;    // radial index of the first sample
};

// number of corrected rows: those with r < 1, capped so the rule's nodes
// never touch the boundary closure
inline int axis_ncorr(const HyperbolicGrid& g) {
    int n = 0;
    while (n < g.nr() - 3 && g.r(n) < 1.0) ++n;
    return n;
}

inline AxisFitRule axis_fit_rule(const HyperbolicGrid& g, int i) {
    const double r = g.r(i), dr = g.dr();
    // Nodes: centered for i >= 1; forward {r0, r1, r2} at the first row,
    // where the folded parity ghost adds no information (its column would be
    // minus the center column). The raw monomial rows are nearly parallel for
    // dr << r, so use the difference-combined basis {u1, u3 - u1,
    // u5 - 2 u3 + u1} with u_p = (x/r)^p, which keeps the system well
    // conditioned at all radii.
    AxisFitRule rule;
    rule.node0 = i == 0 ? 0 : i - 1;
    const double xs[3] = {i == 0 ? r : r - dr, i == 0 ? r + dr : r,
                          i == 0 ? r + 2 * dr : r + dr};
    double raw[3][3], lraw[3], M[3][3], rhs[3];
    for (int k = 0; k < 3; ++k) {
        const int p = 2 * k + 1;
        for (int n = 0; n < 3; ++n) raw[k][n] = std::pow(xs[n] / r, p);
        lraw[k] = p * (p - 1) / (r * r) + p * g.coth_r(i) / r - 1.0 / (g.sinh_r(i) * g.sinh_r(i));
    }
    for (int n = 0; n < 3; ++n) {
        M[0][n] = raw[0][n];
        M[1][n] = raw[1][n] - raw[0][n];
        M[2][n] = raw[2][n] - 2.0 * raw[1][n] + raw[0][n];
    }
    rhs[0] = lraw[0];
    rhs[1] = lraw[1] - lraw[0];
    rhs[2] = lraw[2] - 2.0 * lraw[1] + lraw[0];
    const double d = M[0][0] * (M[1][1] * M[2][2] - M[1][2] * M[2][1]) -
                     M[0][1] * (M[1][0] * M[2][2] - M[1][2] * M[2][0]) +
                     M[0][2] * (M[1][0] * M[2][1] - M[1][1] * M[2][0]);
    auto det_col = [&](int c) {
        double N[3][3];
        for (int rr = 0; rr < 3; ++rr)
            for (int cc = 0; cc < 3; ++cc) N[rr][cc] = cc == c ? rhs[rr] : M[rr][cc];
        return N[0][0] * (N[1][1] * N[2][2] - N[1][2] * N[2][1]) -
               N[0][1] * (N[1][0] * N[2][2] - N[1][2] * N[2][0]) +
               N[0][2] * (N[1][0] * N[2][1] - N[1][1] * N[2][0]);
    };
    for (int c = 0; c < 3; ++c) rule.a[c] = det_col(c) / d;
    return rule;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Small arithmetic helpers used throughout the flow code.

template <typename T>
Field<T> axpy(double a, const Field<T>& x, const Field<T>& y) {
    Field<T> out(x.grid_ptr());
    for (int k = 0; k < x.size(); ++k) out[k] = a * x[k] + y[k];
    return out;
}

template <typename T>
Field<T> subtract(const Field<T>& x, const Field<T>& y) {
    Field<T> out(x.grid_ptr());
    for (int k = 0; k < x.size(); ++k) out[k] = x[k] - y[k];
    return out;
}

}  // namespace hypslab
