#pragma once

#include <optional>

#include "hypslab/solver.hpp"
#include "hypslab/target.hpp"

namespace hypslab {

// ---------------------------------------------------------------------------
// Harmonic map heat flow in the caloric parameter s, the parallel-transported
// frame along it, and the resulting gauge fields (phi_j, phi_s, A_j) together
// with the linear/quadratic split of the connection.

struct HeatScheme {
    double ds0 = 1e-3;        // clipped to dr^2 if larger
    double growth = 1.2;      // geometric step growth
    double ds_max = 0.25;
    double energy_tol = 1e-8;  // allowed per-step energy increase
    int max_halvings = 20;
    double margin = 0.02;      // chart compactness margin
};

struct HeatTrajectory {
    std::vector<double> s;
    std::vector<MapField> v;
    std::vector<double> energy;
    int levels() const { return static_cast<int>(s.size()); }
};

// One semi-implicit heat step of size ds: implicit Laplacian, explicit
// Christoffel nonlinearity. The plain symmetric Laplacian keeps the step an
// exact gradient-flow discretization (energy monotone); its fixed points are
// the zeros of the plain tension, which is what the gauge fields use.
inline MapField step_heat(const MapField& u, const TargetSurface& target, double ds,
                          const ImplicitLaplacianSolver& solver) {
    const auto du = gradient_bc(u.w, u.boundary);
    ComplexField rhs = u.w;
    for (int k = 0; k < rhs.size(); ++k) {
        const complexd sq = du.c1[k] * du.c1[k] + du.c2[k] * du.c2[k];
        rhs[k] += ds * target.christoffel(u.w[k]) * sq;
    }
    MapField out = u;
    out.w = solver.solve_ring(rhs, ds, u.boundary);
    return out;
}

inline HeatTrajectory run_heat_flow(const MapField& u0, const TargetSurface& target,
                                    double smax, HeatScheme scheme = {}) {
    require_compact_image(u0, scheme.margin);
    const auto& g = u0.grid();
    ImplicitLaplacianSolver solver(u0.grid_ptr());

    HeatTrajectory traj;
    traj.s.push_back(0.0);
    traj.v.push_back(u0);
    traj.energy.push_back(dirichlet_energy(u0, target));

    double ds = std::min(scheme.ds0, g.dr() * g.dr());
    double s = 0.0;
    while (s < smax - 1e-12) {
        ds = std::min(ds, smax - s);
        const MapField& cur = traj.v.back();
        const double ecur = traj.energy.back();
        double trial_ds = ds;
        for (int attempt = 0;; ++attempt) {
            MapField next = step_heat(cur, target, trial_ds, solver);
            if (sup_chart_modulus(next) > 1.0 - scheme.margin)
                throw std::runtime_error("run_heat_flow: image left the chart margin");
            const double enext = dirichlet_energy(next, target);
            if (enext <= ecur + scheme.energy_tol) {
                s += trial_ds;
                traj.s.push_back(s);
                traj.v.push_back(std::move(next));
                traj.energy.push_back(enext);
                break;
            }
            if (attempt >= scheme.max_halvings)
                throw std::runtime_error("run_heat_flow: energy increase persists after halvings");
            trial_ds *= 0.5;
        }
        ds = std::min({scheme.growth * trial_ds, scheme.ds_max});
    }
    return traj;
}

// Converge to the discrete harmonic map with the boundary trace of u0: the
// fixed points of step_heat are exactly the zeros of the plain tension for
// any ds, so large fixed steps can be iterated until the increment stalls.
inline MapField harmonic_map_solve(const MapField& u0, const TargetSurface& target,
                                   double tension_tol = 1e-12, int max_iter = 20000,
                                   double ds = 0.5) {
    ImplicitLaplacianSolver solver(u0.grid_ptr());
    MapField u = u0;
    for (int it = 0; it < max_iter; ++it) {
        MapField next = step_heat(u, target, ds, solver);
        double d = 0.0;
        for (int k = 0; k < next.w.size(); ++k) d = std::max(d, std::abs(next.w[k] - u.w[k]));
        u = std::move(next);
        if (d / ds <= tension_tol) return u;
    }
    throw std::runtime_error("harmonic_map_solve: no convergence");
}

// Replay the heat flow on a prescribed s-lattice (no adaptivity). Used when
// several nearby initial maps must be compared level-by-level, e.g. for
// centered time differences of gauge components.
inline HeatTrajectory run_heat_flow_on(const MapField& u0, const TargetSurface& target,
                                       const std::vector<double>& lattice, double margin = 0.02) {
    require_compact_image(u0, margin);
    ImplicitLaplacianSolver solver(u0.grid_ptr());
    HeatTrajectory traj;
    traj.s = lattice;
    traj.v.reserve(lattice.size());
    traj.energy.reserve(lattice.size());
    traj.v.push_back(u0);
    traj.energy.push_back(dirichlet_energy(u0, target));
    for (std::size_t k = 1; k < lattice.size(); ++k) {
        const double ds = lattice[k] - lattice[k - 1];
        if (ds <= 0.0) throw std::invalid_argument("run_heat_flow_on: lattice not increasing");
        MapField next = step_heat(traj.v.back(), target, ds, solver);
        if (sup_chart_modulus(next) > 1.0 - margin)
            throw std::runtime_error("run_heat_flow_on: image left the chart margin");
        traj.energy.push_back(dirichlet_energy(next, target));
        traj.v.push_back(std::move(next));
    }
    return traj;
}

// ---------------------------------------------------------------------------
// Frames. A frame is the chart representative of e_1 with metric
// normalization rho(v)|e_1| = 1; e_2 = J e_1 = i e_1 implicitly.

using FrameField = ComplexField;

inline FrameField limit_frame(const MapField& Q, const TargetSurface& target) {
    FrameField e(Q.grid_ptr());
    for (int k = 0; k < e.size(); ++k) e[k] = 1.0 / target.rho(Q.w[k]);
    return e;
}

struct TransportResult {
    std::vector<FrameField> e;      // per s-level, aligned with the trajectory
    double max_renorm = 0.0;        // largest normalization correction seen
};

// Integrate the parallel-transport equation d e/ds = -Gamma(v) v_s e backward
// from the limit frame at smax, renormalizing the metric norm each step.
inline TransportResult transport_frames(const HeatTrajectory& traj, const TargetSurface& target,
                                        double renorm_tol = 1e-6) {
    const int K = traj.levels();
    TransportResult out;
    out.e.resize(K, FrameField(traj.v[0].grid_ptr()));
    out.e[K - 1] = limit_frame(traj.v[K - 1], target);

    for (int k = K - 2; k >= 0; --k) {
        const double ds = traj.s[k + 1] - traj.s[k];
        const auto& vhi = traj.v[k + 1].w;
        const auto& vlo = traj.v[k].w;
        FrameField e(traj.v[0].grid_ptr());
        for (int idx = 0; idx < e.size(); ++idx) {
            const complexd vs = (vhi[idx] - vlo[idx]) / ds;
            const complexd vmid = 0.5 * (vhi[idx] + vlo[idx]);
            // midpoint rule for e' = f(v) e with f = -Gamma(v) v_s
            const complexd fhi = -target.christoffel(vhi[idx]) * vs;
            const complexd ehalf = out.e[k + 1][idx] * (1.0 - 0.5 * ds * fhi);
            const complexd fmid = -target.christoffel(vmid) * vs;
            complexd enew = out.e[k + 1][idx] - ds * fmid * ehalf;
            const double n = target.rho(vlo[idx]) * std::abs(enew);
            out.max_renorm = std::max(out.max_renorm, std::abs(n - 1.0));
            e[idx] = enew / n;
        }
        out.e[k] = std::move(e);
    }
    if (out.max_renorm > renorm_tol)
        throw std::runtime_error("transport_frames: renormalization correction too large");
    return out;
}

// ---------------------------------------------------------------------------
// Gauge fields per s-level. Frame components of a target vector X at v:
// f = rho(v)^2 X conj(e); connection A_j = rho^2 Im((d_j e + Gamma dv_j e) conj(e)).

struct GaugeData {
    std::vector<double> s;
    std::vector<TangentField> phi;            // phi_j
    std::vector<ComplexField> phi_s;          // heat tension components
    std::vector<RealTangentField> A;          // direct connection
    std::vector<RealTangentField> A_integral; // s-integral reconstruction
    std::vector<ScalarField> kappa;           // curvature along v

    TangentField phi_inf;
    RealTangentField A_inf;
    ScalarField kappa_inf;

    double tail_rate = 1.0;  // fitted exponential decay rate of phi_s past smax

    // filled by decompose_connection
    std::vector<RealTangentField> A_lin, A_qua;
    std::vector<TangentField> phi_tilde;

    int levels() const { return static_cast<int>(s.size()); }
};

namespace detail {
inline std::vector<complexd> frame_boundary_ring(const MapField& u, const TargetSurface& target) {
    std::vector<complexd> bc(u.boundary.size());
    for (std::size_t j = 0; j < bc.size(); ++j) bc[j] = 1.0 / target.rho(u.boundary[j]);
    return bc;
}
}  // namespace detail

inline GaugeData gauge_fields(const HeatTrajectory& traj, const std::vector<FrameField>& frames,
                              const TargetSurface& target) {
    const int K = traj.levels();
    GridPtr gp = traj.v[0].grid_ptr();
    GaugeData g;
    g.s = traj.s;
    g.phi.reserve(K);
    g.phi_s.reserve(K);
    g.A.reserve(K);
    g.kappa.reserve(K);

    for (int k = 0; k < K; ++k) {
        const MapField& u = traj.v[k];
        const FrameField& e = frames[k];
        const auto du = gradient_bc(u.w, u.boundary);
        const auto de = gradient_bc(e, detail::frame_boundary_ring(u, target));
        // phi_s is the generator of the discrete flow: the plain tension
        const ComplexField tau = tension_field(u, target, false);

        TangentField phi(gp);
        ComplexField ps(gp);
        RealTangentField A(gp);
        ScalarField kap(gp);
        for (int idx = 0; idx < ps.size(); ++idx) {
            const complexd w = u.w[idx];
            const double rho = target.rho(w);
            const double r2 = rho * rho;
            const complexd ce = std::conj(e[idx]);
            const complexd gamma = target.christoffel(w);
            phi.c1[idx] = r2 * du.c1[idx] * ce;
            phi.c2[idx] = r2 * du.c2[idx] * ce;
            ps[idx] = r2 * tau[idx] * ce;
            A.c1[idx] = r2 * std::imag((de.c1[idx] + gamma * du.c1[idx] * e[idx]) * ce);
            A.c2[idx] = r2 * std::imag((de.c2[idx] + gamma * du.c2[idx] * e[idx]) * ce);
            kap[idx] = target.kappa_checked(w);
        }
        g.phi.push_back(std::move(phi));
        g.phi_s.push_back(std::move(ps));
        g.A.push_back(std::move(A));
        g.kappa.push_back(std::move(kap));
    }

    g.phi_inf = g.phi.back();
    g.A_inf = g.A.back();
    g.kappa_inf = g.kappa.back();

    // Integral reconstruction A_j(s) = A_j^inf - int_s^inf kappa Im(phi_s conj(phi_j)),
    // trapezoid over levels plus an exponential tail beyond smax fitted from
    // the last decade of levels.
    auto integrand = [&](int k, int comp) {
        ScalarField f(gp);
        const auto& pj = comp == 0 ? g.phi[k].c1 : g.phi[k].c2;
        for (int idx = 0; idx < f.size(); ++idx)
            f[idx] = g.kappa[k][idx] * std::imag(g.phi_s[k][idx] * std::conj(pj[idx]));
        return f;
    };
    // tail decay rate from sup norms of phi_s over the last decade of s
    double tail_rate = 1.0;
    {
        std::vector<double> xs, ys;
        for (int k = 0; k < K; ++k)
            if (g.s[k] >= 0.5 * g.s.back() && norm_sup(g.phi_s[k]) > 1e-300) {
                xs.push_back(g.s[k]);
                ys.push_back(std::log(norm_sup(g.phi_s[k])));
            }
        if (xs.size() >= 3) {
            const double slope = fit_line(xs, ys).slope;
            if (slope < -1e-3) tail_rate = -slope;
        }
    }
    g.tail_rate = tail_rate;

    g.A_integral.assign(K, RealTangentField(gp));
    for (int comp = 0; comp < 2; ++comp) {
        std::vector<ScalarField> f(K);
        for (int k = 0; k < K; ++k) f[k] = integrand(k, comp);
        // suffix trapezoid sums
        ScalarField suffix(gp);
        for (int idx = 0; idx < suffix.size(); ++idx)
            suffix[idx] = f[K - 1][idx] / tail_rate;  // exponential tail
        for (int k = K - 1; k >= 0; --k) {
            if (k < K - 1) {
                const double h = g.s[k + 1] - g.s[k];
                for (int idx = 0; idx < suffix.size(); ++idx)
                    suffix[idx] += 0.5 * h * (f[k][idx] + f[k + 1][idx]);
            }
            auto& Ai = g.A_integral[k];
            auto& inf = g.A_inf;
            auto& dst = comp == 0 ? Ai.c1 : Ai.c2;
            const auto& ainf = comp == 0 ? inf.c1 : inf.c2;
            for (int idx = 0; idx < suffix.size(); ++idx) dst[idx] = ainf[idx] - suffix[idx];
        }
    }
    return g;
}

// Linear/quadratic split of the connection: the linear part freezes kappa and
// phi_j at their limits inside the s-integral; the quadratic part carries the
// kappa and phi corrections. Both are quadratures (trapezoid plus exponential
// tail), so Atilde = A^lin + A^qua holds to quadrature tolerance only —
// computing A^qua as Atilde - A^lin instead would contaminate it with the
// epsilon-linear discretization mismatch between the direct and integral A.
inline void decompose_connection(GaugeData& g) {
    const int K = g.levels();
    GridPtr gp = g.phi_inf.c1.grid_ptr();
    g.A_lin.assign(K, RealTangentField(gp));
    g.A_qua.assign(K, RealTangentField(gp));
    g.phi_tilde.assign(K, TangentField(gp));

    for (int k = 0; k < K; ++k) {
        for (int idx = 0; idx < g.phi_inf.c1.size(); ++idx) {
            g.phi_tilde[k].c1[idx] = g.phi[k].c1[idx] - g.phi_inf.c1[idx];
            g.phi_tilde[k].c2[idx] = g.phi[k].c2[idx] - g.phi_inf.c2[idx];
        }
    }

    for (int comp = 0; comp < 2; ++comp) {
        const auto& pinf = comp == 0 ? g.phi_inf.c1 : g.phi_inf.c2;
        auto flin = [&](int k, int idx) {
            return g.kappa_inf[idx] * std::imag(pinf[idx] * std::conj(g.phi_s[k][idx]));
        };
        auto fqua = [&](int k, int idx) {
            const auto& pt = comp == 0 ? g.phi_tilde[k].c1 : g.phi_tilde[k].c2;
            const double ktil = g.kappa[k][idx] - g.kappa_inf[idx];
            return ktil * std::imag(pinf[idx] * std::conj(g.phi_s[k][idx])) +
                   g.kappa[k][idx] * std::imag(pt[idx] * std::conj(g.phi_s[k][idx]));
        };
        ScalarField rlin(gp), rqua(gp);
        for (int idx = 0; idx < rlin.size(); ++idx) {
            // the quadratic integrand decays twice as fast past smax
            rlin[idx] = flin(K - 1, idx) / g.tail_rate;
            rqua[idx] = fqua(K - 1, idx) / (2.0 * g.tail_rate);
        }
        for (int k = K - 1; k >= 0; --k) {
            if (k < K - 1) {
                const double h = g.s[k + 1] - g.s[k];
                for (int idx = 0; idx < rlin.size(); ++idx) {
                    rlin[idx] += 0.5 * h * (flin(k, idx) + flin(k + 1, idx));
                    rqua[idx] += 0.5 * h * (fqua(k, idx) + fqua(k + 1, idx));
                }
            }
            auto& al = comp == 0 ? g.A_lin[k].c1 : g.A_lin[k].c2;
            auto& aq = comp == 0 ? g.A_qua[k].c1 : g.A_qua[k].c2;
            // Orientation fixed by the direct reconstruction
            // Atilde = -int_s^inf kappa Im(phi_s conj(phi_j)), which matches the
            // frame connection measured from transported frames.  With that
            // convention the split integrands enter with a plus sign:
            // Im(phi_j conj(phi_s)) = -Im(phi_s conj(phi_j)).
            for (int idx = 0; idx < al.size(); ++idx) {
                al[idx] = rlin[idx];
                aq[idx] = rqua[idx];
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Identity residuals. Norms are taken over the interior rows (the outermost
// two rows are excluded: gauge fields there use one-sided information).

struct ResidualNorms {
    double l2 = 0.0, sup = 0.0;
};

namespace detail {
template <typename T>
ResidualNorms interior_norms(const Field<T>& f) {
    const auto& g = f.grid();
    ResidualNorms out;
    ScalarField sq(f.grid_ptr());
    for (int i = 0; i < g.nr(); ++i)
        for (int j = 0; j < g.ntheta(); ++j) {
            const double a = std::abs(complexd(f(i, j)));
            if (i < g.nr() - 2) {
                out.sup = std::max(out.sup, a);
                sq(i, j) = a * a;
            } else {
                sq(i, j) = 0.0;
            }
        }
    out.l2 = std::sqrt(integrate(sq));
    return out;
}
}  // namespace detail

// Covariant divergence D^j phi_j = (1/sinh r) d_r(sinh r phi_1)
// + (1/sinh r) d_th phi_2 + i A . phi.
inline ComplexField covariant_divergence(const TangentField& phi, const RealTangentField& A) {
    GridPtr gp = phi.c1.grid_ptr();
    const auto& g = *gp;
    const auto d1 = gradient_component(phi.c1);
    const auto d2 = gradient_component(phi.c2);
    ComplexField out(gp);
    for (int i = 0; i < g.nr(); ++i)
        for (int j = 0; j < g.ntheta(); ++j)
            out(i, j) = d1.c1(i, j) + g.coth_r(i) * phi.c1(i, j) + d2.c2(i, j) +
                        complexd(0, 1) * (A.c1(i, j) * phi.c1(i, j) + A.c2(i, j) * phi.c2(i, j));
    return out;
}

// Magnetic Laplacian Delta_A f = (grad_j + i A_j)(grad^j + i A^j) f expanded as
// Delta f + 2i A.grad f + i (div A) f - |A|^2 f. A carries polar-frame parity,
// f is frame-scalar.
inline ComplexField magnetic_laplacian(const ComplexField& f, const RealTangentField& A) {
    GridPtr gp = f.grid_ptr();
    const auto& g = *gp;
    ComplexField out = laplace_beltrami(f);
    const auto df = gradient(f);
    const auto dA1 = gradient_component(A.c1);
    const auto dA2 = gradient_component(A.c2);
    const complexd I(0.0, 1.0);
    for (int i = 0; i < g.nr(); ++i)
        for (int j = 0; j < g.ntheta(); ++j) {
            const double a1 = A.c1(i, j), a2 = A.c2(i, j);
            const double divA = dA1.c1(i, j) + g.coth_r(i) * a1 + dA2.c2(i, j);
            out(i, j) += I * (2.0 * (a1 * df.c1(i, j) + a2 * df.c2(i, j)) + divA * f(i, j)) -
                         (a1 * a1 + a2 * a2) * f(i, j);
        }
    return out;
}

struct GaugeIdentityReport {
    ResidualNorms heat_tension;  // phi_s = D^j phi_j
    ResidualNorms torsion;       // D_1 phi_2 = D_2 phi_1
    ResidualNorms commutator;    // F_12 = kappa Im(phi_1 conj(phi_2)) against a test field
    ResidualNorms connection;    // direct vs integral A
};

// ---------------------------------------------------------------------------
// Parabolic smoothing of the heat tension field: the H^2 size of phi_s gains
// half a derivative per power of s on s in (0, 1] for H^1-sized data, and
// decays exponentially once the flow has converged. Both rates are fitted.

inline double sobolev_h2_norm(const ComplexField& f) {
    const double l2 = norm_l2(f);
    const auto df = gradient(f);
    const ComplexField lf = laplace_beltrami(f);
    const double g1 = norm_l2(df.c1), g2 = norm_l2(df.c2), d2 = norm_l2(lf);
    return std::sqrt(l2 * l2 + g1 * g1 + g2 * g2 + d2 * d2);
}

struct HeatSmoothingReport {
    double early_slope = 0.0;   // d log ||phi_s||_{H^2} / d log s on [0.01, 1]
    double late_rate = 0.0;     // exponential decay rate on the last half of s
};

inline HeatSmoothingReport heat_smoothing(const GaugeData& g) {
    HeatSmoothingReport rep;
    std::vector<double> xs, ys;
    for (int k = 0; k < g.levels(); ++k)
        if (g.s[k] >= 0.01 && g.s[k] <= 1.0) {
            const double n = sobolev_h2_norm(g.phi_s[k]);
            if (n > 1e-300) {
                xs.push_back(std::log(g.s[k]));
                ys.push_back(std::log(n));
            }
        }
    if (xs.size() < 4) throw std::runtime_error("heat_smoothing: too few early s-levels");
    rep.early_slope = fit_line(xs, ys).slope;

    xs.clear();
    ys.clear();
    for (int k = 0; k < g.levels(); ++k)
        if (g.s[k] >= 0.5 * g.s.back()) {
            const double n = norm_l2(g.phi_s[k]);
            if (n > 1e-300) {
                xs.push_back(g.s[k]);
                ys.push_back(std::log(n));
            }
        }
    if (xs.size() < 4) throw std::runtime_error("heat_smoothing: too few late s-levels");
    rep.late_rate = -fit_line(xs, ys).slope;
    return rep;
}

inline GaugeIdentityReport gauge_identities_check(const GaugeData& g, int level) {
    GridPtr gp = g.phi_inf.c1.grid_ptr();
    const auto& grid = *gp;
    GaugeIdentityReport rep;

    // phi_s = D^j phi_j
    ComplexField div = covariant_divergence(g.phi[level], g.A[level]);
    ComplexField res(gp);
    for (int k = 0; k < res.size(); ++k) res[k] = g.phi_s[level][k] - div[k];
    rep.heat_tension = detail::interior_norms(res);

    // torsion-free: components of the covariant derivative matrix
    const CovariantMatrix d = covariant_derivative(g.phi[level], g.A[level]);
    ComplexField tor(gp);
    for (int k = 0; k < tor.size(); ++k) tor[k] = d.d12[k] - d.d21[k];
    rep.torsion = detail::interior_norms(tor);

    // curvature identity weighted by a fixed smooth test field
    const auto dA1 = gradient_component(g.A[level].c1);
    const auto dA2 = gradient_component(g.A[level].c2);
    ComplexField com(gp);
    for (int i = 0; i < grid.nr(); ++i) {
        const double psi = std::exp(-grid.r(i) * grid.r(i));
        for (int j = 0; j < grid.ntheta(); ++j) {
            const double F = dA2.c1(i, j) + grid.coth_r(i) * g.A[level].c2(i, j) - dA1.c2(i, j);
            const double want = g.kappa[level](i, j) *
                                std::imag(g.phi[level].c1(i, j) * std::conj(g.phi[level].c2(i, j)));
            com(i, j) = (F - want) * psi;
        }
    }
    rep.commutator = detail::interior_norms(com);

    // direct vs integral connection
    ComplexField dc(gp);
    for (int k = 0; k < dc.size(); ++k)
        dc[k] = complexd(g.A[level].c1[k] - g.A_integral[level].c1[k],
                         g.A[level].c2[k] - g.A_integral[level].c2[k]);
    rep.connection = detail::interior_norms(dc);
    return rep;
}

}  // namespace hypslab
