#pragma once

#include "hypslab/caloric.hpp"

namespace hypslab {

// ---------------------------------------------------------------------------
// The linearized operator around a holomorphic harmonic map, built from the
// limit gauge data (A, phi, kappa at the far end of the heat flow):
//
//   H f = Delta_A f - i kappa Im(phi_j conj(f)) phi_j
//
// H is R-linear (the conjugation breaks C-linearity) and symmetric in the
// real pairing Re int f conj(g) dvol:
//   * Delta_A is assembled in link-phase flux form - every face carries the
//     parallel-transport phase exp(i int A . dl) along its dual edge, with
//     the opposite phase in the opposite direction - so it is Hermitian
//     w.r.t. the sinh r cell measure to rounding, not just to O(h^2) like a
//     centered expansion of 2iA.grad + i div A - |A|^2 would be (the phase
//     expansion reproduces exactly those terms through second order).
//   * The curvature term is the pointwise rank-one map
//     f -> -i Im(phi f~) phi = <i phi, f>_R (i phi), a projector along
//     i phi_j scaled by kappa: exactly symmetric, and its quadratic form
//     kappa sum_j Im(phi_j f~)^2 is nonpositive for kappa <= 0, so -H is
//     nonnegative together with the (nonnegative) face form of -Delta_A.
//
// The outer closure is Dirichlet through the half-cell boundary face; the
// origin carries no face (the sinh(0) weight vanishes), so no axis ghost of
// any parity enters the operator.

class LinearizedOperator {
public:
    // free operator: H = Delta (zero connection, zero limit field)
    explicit LinearizedOperator(GridPtr grid)
        : grid_(std::move(grid)), A_(grid_), phi_(grid_), kappa_(grid_) {
        build_phases();
    }

    LinearizedOperator(GridPtr grid, RealTangentField A, TangentField phi, ScalarField kappa)
        : grid_(std::move(grid)), A_(std::move(A)), phi_(std::move(phi)),
          kappa_(std::move(kappa)) {
        build_phases();
    }

    const HyperbolicGrid& grid() const { return *grid_; }
    GridPtr grid_ptr() const { return grid_; }
    const RealTangentField& connection() const { return A_; }
    const TangentField& limit_field() const { return phi_; }
    const ScalarField& curvature() const { return kappa_; }

    // H f
    ComplexField apply(const ComplexField& f) const {
        const auto& g = *grid_;
        const int nr = g.nr(), nt = g.ntheta();
        const double inv_dr2 = 1.0 / (g.dr() * g.dr());
        const double inv_dt2 = 1.0 / (g.dtheta() * g.dtheta());
        ComplexField out(grid_);
        parallel_for(nr, [&](std::size_t ii) {
            const int i = static_cast<int>(ii);
            const double wlo = g.sinh_face(i) / g.sinh_r(i) * inv_dr2;
            const double whi = g.sinh_face(i + 1) / g.sinh_r(i) * inv_dr2;
            const double wth = g.inv_sinh_r(i) * g.inv_sinh_r(i) * inv_dt2;
            for (int j = 0; j < nt; ++j) {
                const complexd fc = f(i, j);
                complexd acc = 0.0;
                if (i > 0) acc += wlo * (std::conj(phase_r_(i - 1, j)) * f(i - 1, j) - fc);
                if (i + 1 < nr)
                    acc += whi * (phase_r_(i, j) * f(i + 1, j) - fc);
                else
                    acc -= 2.0 * whi * fc;  // half-cell Dirichlet face
                acc += wth * (phase_t_(i, j) * f(i, g.wrap_theta(j + 1)) - fc);
                acc += wth * (std::conj(phase_t_(i, g.wrap_theta(j - 1))) *
                                  f(i, g.wrap_theta(j - 1)) -
                              fc);

                const complexd p1 = phi_.c1(i, j), p2 = phi_.c2(i, j);
                const complexd proj = std::imag(p1 * std::conj(fc)) * p1 +
                                      std::imag(p2 * std::conj(fc)) * p2;
                out(i, j) = acc - complexd(0.0, kappa_(i, j)) * proj;
            }
        });
        return out;
    }

    ComplexField apply_neg(const ComplexField& f) const {
        ComplexField out = apply(f);
        for (auto& v : out.values()) v = -v;
        return out;
    }

private:
    void build_phases() {
        const auto& g = *grid_;
        const int nr = g.nr(), nt = g.ntheta();
        phase_r_ = ComplexField(grid_);
        phase_t_ = ComplexField(grid_);
        for (int i = 0; i < nr; ++i)
            for (int j = 0; j < nt; ++j) {
                if (i + 1 < nr) {
                    const double th = 0.5 * (A_.c1(i, j) + A_.c1(i + 1, j)) * g.dr();
                    phase_r_(i, j) = complexd(std::cos(th), std::sin(th));
                } else {
                    phase_r_(i, j) = 1.0;  // boundary face transports zero
                }
                const int jp = g.wrap_theta(j + 1);
                const double arc = g.sinh_r(i) * g.dtheta();
                const double th = 0.5 * (A_.c2(i, j) + A_.c2(i, jp)) * arc;
                phase_t_(i, j) = complexd(std::cos(th), std::sin(th));
            }
    }

    GridPtr grid_;
    RealTangentField A_;
    TangentField phi_;
    ScalarField kappa_;
    ComplexField phase_r_;  // (i,j): phase of the hop (i,j) -> (i+1,j)
    ComplexField phase_t_;  // (i,j): phase of the hop (i,j) -> (i,j+1)
};

// Assemble H from precomputed gauge data (the limit fields at the far end of
// the caloric heat flow).
inline LinearizedOperator assemble_H(const GaugeData& gauge) {
    return LinearizedOperator(gauge.phi_inf.c1.grid_ptr(), gauge.A_inf, gauge.phi_inf,
                              gauge.kappa_inf);
}

// Convenience: run the heat flow + frame transport for Q and assemble.
inline LinearizedOperator assemble_H(const MapField& Q, const TargetSurface& target,
                                     double smax = 8.0, HeatScheme hs = {}) {
    HeatTrajectory traj = run_heat_flow(Q, target, smax, hs);
    TransportResult tr = transport_frames(traj, target);
    GaugeData gd = gauge_fields(traj, tr.e, target);
    return assemble_H(gd);
}

// ---------------------------------------------------------------------------
// Matrix-free conjugate gradients for the R-linear SPD operators built from
// -H (the real pairing is the relevant inner product; -H is symmetric and
// nonnegative in it, and strictly positive with the Dirichlet closure).

namespace detail {
template <typename Op>
ComplexField cg_solve(const Op& op, const ComplexField& b, double tol = 1e-12,
                      int maxiter = 100000) {
    ComplexField x(b.grid_ptr());
    ComplexField r = b;
    ComplexField p = r;
    double rr = inner_real(r, r);
    const double stop = tol * tol * std::max(rr, 1e-300);
    for (int it = 0; it < maxiter; ++it) {
        if (rr <= stop) return x;
        ComplexField ap = op(p);
        const double alpha = rr / inner_real(p, ap);
        for (int k = 0; k < x.size(); ++k) {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        const double rr_new = inner_real(r, r);
        const double beta = rr_new / rr;
        rr = rr_new;
        for (int k = 0; k < p.size(); ++k) p[k] = r[k] + beta * p[k];
    }
    throw std::runtime_error("cg_solve: no convergence");
}
}  // namespace detail

enum class SpectrumMode { laplacian, h };

// Bottom of the spectrum of -H (or of -Delta on the same grid) as the
// smallest Rayleigh quotient, via inverse power iteration; each inverse is a
// matrix-free CG solve in the real pairing. Deterministic start vector.
inline double spectrum_bottom(const LinearizedOperator& op,
                              SpectrumMode mode = SpectrumMode::h, double tol = 1e-8,
                              int maxiter = 500) {
    GridPtr gp = op.grid_ptr();
    const LinearizedOperator free_op(gp);
    auto neg = [&](const ComplexField& f) {
        return mode == SpectrumMode::h ? op.apply_neg(f) : free_op.apply_neg(f);
    };

    ComplexField x = ComplexField::sample(gp, [](double r, double) {
        return complexd(std::exp(-0.25 * r * r), 0.0);
    });
    double lam_prev = 0.0;
    for (int it = 0; it < maxiter; ++it) {
        ComplexField y = detail::cg_solve(neg, x, 1e-10);
        const double ny = norm_l2(y);
        for (auto& v : y.values()) v /= ny;
        const double lam = inner_real(neg(y), y);
        x = std::move(y);
        if (it > 0 && std::abs(lam - lam_prev) <= tol * std::max(1.0, std::abs(lam)))
            return lam;
        lam_prev = lam;
    }
    throw std::runtime_error("spectrum_bottom: inverse iteration did not converge");
}

// ---------------------------------------------------------------------------
// Heat semigroup of H in the decaying direction, d_s g = H g, by implicit
// Euler steps (I + ds (-H)) g_next = g: unconditionally an L^2 contraction
// because -H is symmetric nonnegative.

inline ComplexField heat_semigroup_H(const ComplexField& f, double s,
                                     const LinearizedOperator& op, double ds = 1e-2) {
    if (s <= 0.0) return f;
    const int nsteps = std::max(1, static_cast<int>(std::ceil(s / ds)));
    const double h = s / nsteps;
    auto lhs = [&](const ComplexField& g) {
        ComplexField out = op.apply_neg(g);
        for (int k = 0; k < out.size(); ++k) out[k] = g[k] + h * out[k];
        return out;
    };
    ComplexField g = f;
    for (int n = 0; n < nsteps; ++n) g = detail::cg_solve(lhs, g, 1e-12);
    return g;
}

// ---------------------------------------------------------------------------
// Smoothing exponents of the semigroup: for a near-delta bump the quadratic
// form Q(g) = <(-H)g, g> plays the role of the squared gradient norm (for the
// free operator it is exactly ||grad g||^2). The short-time fit of
// log sqrt(Q) vs log s should sit near -1/2; the long-time decay of ||g||
// should be exponential at a rate near the spectral bottom.

struct SmoothingReport {
    double short_slope = 0.0;  // d log ||grad g|| / d log s on the short window
    double late_rate = 0.0;    // exponential L^2 decay rate on s in [2, 10]
    double bottom = 0.0;       // spectral bottom, for comparison
};

inline SmoothingReport smoothing_check(const LinearizedOperator& op) {
    GridPtr gp = op.grid_ptr();
    const double w = 4.0 * gp->dr();
    ComplexField f = ComplexField::sample(gp, [&](double r, double) {
        return complexd(std::exp(-0.5 * r * r / (w * w)), 0.0);
    });
    const double nf = norm_l2(f);
    for (auto& v : f.values()) v /= nf;

    SmoothingReport rep;

    // short window: fixed implicit steps, fit on s in [10 ds, 0.5]
    const double ds = 2e-3;
    ComplexField g = f;
    std::vector<double> xs, ys;
    auto lhs = [&](const ComplexField& q) {
        ComplexField out = op.apply_neg(q);
        for (int k = 0; k < out.size(); ++k) out[k] = q[k] + ds * out[k];
        return out;
    };
    const int nshort = static_cast<int>(std::lround(0.5 / ds));
    for (int n = 1; n <= nshort; ++n) {
        g = detail::cg_solve(lhs, g, 1e-12);
        const double s = n * ds;
        if (s >= 10.0 * ds) {
            const double q = inner_real(op.apply_neg(g), g);
            if (q > 0.0) {
                xs.push_back(std::log(s));
                ys.push_back(0.5 * std::log(q));
            }
        }
    }
    rep.short_slope = fit_line(xs, ys).slope;

    // long window: coarser steps out to s = 10, exponential rate of ||g||
    xs.clear();
    ys.clear();
    const double dl = 0.05;
    g = heat_semigroup_H(f, 2.0, op, dl);
    for (double s = 2.0; s < 10.0 - 1e-9; s += dl) {
        g = heat_semigroup_H(g, dl, op, dl);
        xs.push_back(s + dl);
        ys.push_back(std::log(norm_l2(g)));
    }
    rep.late_rate = -fit_line(xs, ys).slope;
    rep.bottom = spectrum_bottom(op);
    return rep;
}

}  // namespace hypslab
