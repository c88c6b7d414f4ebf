#pragma once

#include "hypslab/caloric.hpp"

namespace hypslab {

// ---------------------------------------------------------------------------
// Schrödinger map flow in the conformal chart, w_t = i tau(w), integrated by
// the implicit midpoint rule, plus the gauge-side verification machinery:
// Z = phi_t - i phi_s and the residuals of the evolution equations for phi_s
// and Z in the caloric gauge.

struct SLScheme {
    double dt = 0.0;            // <= 0 selects the grid default below
    double fp_tol = 1e-12;      // fixed-point increment tolerance (sup norm)
    int fp_maxiter = 50;
    bool rk4 = false;           // explicit RK4 fallback integrator
    double grad_ceiling = 50.0; // blow-up monitor on sup rho(u)|grad u|
    double margin = 0.02;       // chart compactness margin
    int store_every = 1;        // keep every k-th map in the trajectory
};

// Resolve the fastest grid mode of the dispersion relation; the angular
// spacing at the innermost ring dominates when sinh(r0) dtheta < dr.
inline double default_sl_dt(const HyperbolicGrid& g) {
    const double aniso = std::min(1.0, g.sinh_r(0) * g.dtheta() / g.dr());
    return 0.25 * g.dr() * g.dr() * aniso * aniso;
}

inline double sup_metric_gradient(const MapField& u, const TargetSurface& target) {
    const auto du = gradient_bc(u.w, u.boundary);
    double sup = 0.0;
    for (int k = 0; k < u.w.size(); ++k) {
        const double rho = target.rho(u.w[k]);
        sup = std::max(sup,
                       rho * std::sqrt(std::norm(du.c1[k]) + std::norm(du.c2[k])));
    }
    return sup;
}

namespace detail {
inline void require_finite(const ComplexField& f, const char* where) {
    for (int k = 0; k < f.size(); ++k)
        if (!std::isfinite(f[k].real()) || !std::isfinite(f[k].imag()))
            throw std::runtime_error(std::string(where) + ": non-finite field value");
}
}  // namespace detail

// One implicit-midpoint step: the midpoint m solves m = u + (dt/2) i tau(m),
// then u' = 2m - u. tau is the variational tension (the exact gradient of the
// face energy), so the spatial semidiscretization conserves
// face_dirichlet_energy identically and the only drift left is the O(dt^2)
// midpoint error. The stiff Laplacian part is inverted exactly per iteration
// (coefficient c = i dt/2), so the fixed-point iteration only has to contract
// the first-order remainder.
inline MapField step_sl(const MapField& u, double dt, const TargetSurface& target,
                        const ImplicitLaplacianSolver& solver, const SLScheme& scheme = {}) {
    MapField out = u;
    if (scheme.rk4) {
        auto vel = [&](const ComplexField& w) {
            MapField tmp = u;
            tmp.w = w;
            ComplexField tau = variational_tension(tmp, target);
            for (int k = 0; k < tau.size(); ++k) tau[k] *= complexd(0.0, 1.0);
            return tau;
        };
        const ComplexField k1 = vel(u.w);
        const ComplexField k2 = vel(axpy(0.5 * dt, k1, u.w));
        const ComplexField k3 = vel(axpy(0.5 * dt, k2, u.w));
        const ComplexField k4 = vel(axpy(dt, k3, u.w));
        for (int k = 0; k < out.w.size(); ++k)
            out.w[k] = u.w[k] + (dt / 6.0) * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
    } else {
        const complexd c(0.0, 0.5 * dt);
        MapField m = u;
        for (int it = 0;; ++it) {
            // remainder of the variational tension beyond the face Laplacian
            ComplexField lin = face_laplacian(m);
            ComplexField tau = variational_tension(m, target);
            ComplexField rhs = u.w;
            for (int k = 0; k < rhs.size(); ++k) rhs[k] += c * (tau[k] - lin[k]);
            ComplexField next = solver.solve_face(rhs, c, u.boundary);
            double delta = 0.0;
            for (int k = 0; k < next.size(); ++k)
                delta = std::max(delta, std::abs(next[k] - m.w[k]));
            m.w = std::move(next);
            if (delta <= scheme.fp_tol) break;
            if (it + 1 >= scheme.fp_maxiter)
                throw std::runtime_error("step_sl: fixed-point iteration did not converge");
        }
        for (int k = 0; k < out.w.size(); ++k) out.w[k] = 2.0 * m.w[k] - u.w[k];
    }
    detail::require_finite(out.w, "step_sl");
    if (sup_chart_modulus(out) > 1.0 - scheme.margin)
        throw std::runtime_error("step_sl: image left the chart margin");
    return out;
}

// Discrete harmonic map of the variational tension: the exact fixed points of
// step_sl. Semi-implicit gradient iteration with large fixed steps (any ds
// has the zeros of the variational tension as its fixed points).
inline MapField sl_harmonic_map(const MapField& u0, const TargetSurface& target,
                                double tension_tol = 1e-12, int max_iter = 20000,
                                double ds = 0.5) {
    ImplicitLaplacianSolver solver(u0.grid_ptr());
    MapField u = u0;
    for (int it = 0; it < max_iter; ++it) {
        const ComplexField lin = face_laplacian(u);
        const ComplexField tau = variational_tension(u, target);
        ComplexField rhs = u.w;
        for (int k = 0; k < rhs.size(); ++k) rhs[k] += ds * (tau[k] - lin[k]);
        ComplexField next = solver.solve_face(rhs, ds, u.boundary);
        double d = 0.0;
        for (int k = 0; k < next.size(); ++k) d = std::max(d, std::abs(next[k] - u.w[k]));
        u.w = std::move(next);
        if (d / ds <= tension_tol) return u;
    }
    throw std::runtime_error("sl_harmonic_map: no convergence");
}

struct SLTrajectory {
    // per-step logs
    std::vector<double> log_t;
    std::vector<double> energy;
    std::vector<double> grad_sup;  // sup rho(u)|grad u|
    std::vector<double> dist0;     // sup-distance to the initial map
    // stored maps (every store_every steps, first and last always kept)
    std::vector<double> t;
    std::vector<MapField> u;
    bool aborted = false;  // blow-up monitor tripped
    double dt = 0.0;

    int stored() const { return static_cast<int>(t.size()); }
};

inline SLTrajectory run_sl(const MapField& u0, double T, const TargetSurface& target,
                           SLScheme scheme = {}) {
    require_compact_image(u0, scheme.margin);
    if (scheme.dt <= 0.0) scheme.dt = default_sl_dt(u0.grid());
    const int nsteps = std::max(1, static_cast<int>(std::lround(T / scheme.dt)));
    const double dt = T / nsteps;

    ImplicitLaplacianSolver solver(u0.grid_ptr());
    SLTrajectory traj;
    traj.dt = dt;

    MapField cur = u0;
    auto log_state = [&](double tcur) {
        traj.log_t.push_back(tcur);
        traj.energy.push_back(face_dirichlet_energy(cur, target));
        traj.grad_sup.push_back(sup_metric_gradient(cur, target));
        double d = 0.0;
        for (int k = 0; k < cur.w.size(); ++k) d = std::max(d, std::abs(cur.w[k] - u0.w[k]));
        traj.dist0.push_back(d);
    };
    log_state(0.0);
    traj.t.push_back(0.0);
    traj.u.push_back(u0);

    for (int n = 1; n <= nsteps; ++n) {
        cur = step_sl(cur, dt, target, solver, scheme);
        log_state(n * dt);
        if (traj.grad_sup.back() > scheme.grad_ceiling) {
            traj.aborted = true;
            traj.t.push_back(n * dt);
            traj.u.push_back(cur);
            return traj;
        }
        if (n % std::max(1, scheme.store_every) == 0 || n == nsteps) {
            traj.t.push_back(n * dt);
            traj.u.push_back(cur);
        }
    }
    return traj;
}

// ---------------------------------------------------------------------------
// Gauge slice at a fixed physical time: the caloric gauge of u(t) plus the
// time-direction components phi_t, Z = phi_t - i phi_s and A_t, obtained from
// centered differences of the maps at t +- dt. The three heat flows share the
// s-lattice of the central one, and all components are taken in the central
// frames (the t-variation of the frames is bookkept by A_t, not by the
// difference quotient).

struct SLGaugeSlice {
    GaugeData gauge;                      // caloric gauge of the central map
    std::vector<FrameField> frames;       // central frames per s-level
    std::vector<ComplexField> phi_t;      // frame components of d_t v
    std::vector<ComplexField> Z;          // phi_t - i phi_s
    std::vector<ComplexField> phi_s_plus; // phi_s of u(t+dt) in central frames
    std::vector<ComplexField> phi_s_minus;
    std::vector<ScalarField> A_t;  // integral formula, central components
    // Pointwise bookkeeping for the frozen chart frames: the difference
    // quotient of a frame component f satisfies d_t f = (D_t-component)
    // + conj(Gamma(v) v_t) f; the real part is the conformal-factor drift
    // (d_t log rho = Re(Gamma v_t)), the imaginary part the gauge rotation.
    std::vector<ComplexField> frame_corr;
    double dt = 0.0;

    int levels() const { return static_cast<int>(gauge.s.size()); }
};

inline SLGaugeSlice sl_gauge_slice(const MapField& um, const MapField& uc, const MapField& up,
                                   double dt, const TargetSurface& target, double smax,
                                   HeatScheme hs = {}) {
    SLGaugeSlice out;
    out.dt = dt;

    HeatTrajectory trajc = run_heat_flow(uc, target, smax, hs);
    HeatTrajectory trajm = run_heat_flow_on(um, target, trajc.s, hs.margin);
    HeatTrajectory trajp = run_heat_flow_on(up, target, trajc.s, hs.margin);
    TransportResult tr = transport_frames(trajc, target);
    out.gauge = gauge_fields(trajc, tr.e, target);
    out.frames = tr.e;

    GridPtr gp = uc.grid_ptr();
    const int K = trajc.levels();
    out.phi_t.reserve(K);
    out.Z.reserve(K);
    out.phi_s_plus.reserve(K);
    out.phi_s_minus.reserve(K);
    out.frame_corr.reserve(K);
    const complexd I(0.0, 1.0);
    for (int k = 0; k < K; ++k) {
        const auto& vc = trajc.v[k].w;
        const auto& vm = trajm.v[k].w;
        const auto& vp = trajp.v[k].w;
        const ComplexField taup = tension_field(trajp.v[k], target, false);
        const ComplexField taum = tension_field(trajm.v[k], target, false);
        ComplexField pt(gp), z(gp), psp(gp), psm(gp), fc(gp);
        for (int idx = 0; idx < pt.size(); ++idx) {
            const complexd ce = std::conj(out.frames[k][idx]);
            const double r2c = target.rho(vc[idx]) * target.rho(vc[idx]);
            const complexd vt = (vp[idx] - vm[idx]) / (2.0 * dt);
            pt[idx] = r2c * vt * ce;
            z[idx] = pt[idx] - I * out.gauge.phi_s[k][idx];
            const double r2p = target.rho(vp[idx]) * target.rho(vp[idx]);
            const double r2m = target.rho(vm[idx]) * target.rho(vm[idx]);
            psp[idx] = r2p * taup[idx] * ce;
            psm[idx] = r2m * taum[idx] * ce;
            fc[idx] = std::conj(target.christoffel(vc[idx]) * vt);
        }
        out.phi_t.push_back(std::move(pt));
        out.Z.push_back(std::move(z));
        out.phi_s_plus.push_back(std::move(psp));
        out.phi_s_minus.push_back(std::move(psm));
        out.frame_corr.push_back(std::move(fc));
    }

    // A_t(s) = -int_s^inf kappa Im(phi_s conj(phi_t)) ds'; the integrand is a
    // product of two exponentially decaying factors, so the tail past smax is
    // estimated at twice the fitted phi_s rate.
    auto integrand = [&](int k) {
        ScalarField f(gp);
        for (int idx = 0; idx < f.size(); ++idx)
            f[idx] = out.gauge.kappa[k][idx] *
                     std::imag(out.gauge.phi_s[k][idx] * std::conj(out.phi_t[k][idx]));
        return f;
    };
    out.A_t.assign(K, ScalarField(gp));
    ScalarField run = integrand(K - 1);
    for (int idx = 0; idx < run.size(); ++idx) run[idx] /= 2.0 * out.gauge.tail_rate;
    for (int k = K - 1; k >= 0; --k) {
        if (k < K - 1) {
            const double h = trajc.s[k + 1] - trajc.s[k];
            const ScalarField flo = integrand(k), fhi = integrand(k + 1);
            for (int idx = 0; idx < run.size(); ++idx)
                run[idx] += 0.5 * h * (flo[idx] + fhi[idx]);
        }
        for (int idx = 0; idx < run.size(); ++idx) out.A_t[k][idx] = -run[idx];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Residuals of the gauge evolution equations along the heat direction
//   d_s phi_s = Delta_A phi_s - i kappa Im(phi^j conj(phi_s)) phi_j
//   d_s Z     = Delta_A Z + i kappa phi^j phi_j conj(phi_s)
//                         - i kappa Im(phi^j conj(Z)) phi_j,   Z(0) = 0
// and at fixed s of the time-direction equation
//   i D_t phi_s + Delta_A phi_s = i d_s Z + i kappa Im(phi^j conj(phi_s)) phi_j
// where the frozen-frame difference quotient of phi_s is promoted to D_t with
// the pointwise bookkeeping term A_t_frame (default), or combined with the
// integral A_t instead (reported as the alternate variant).

struct EvolutionResiduals {
    std::vector<double> s;        // interior s-levels
    std::vector<double> r_heat;   // interior L2 residual of the phi_s equation
    std::vector<double> r_z;      // interior L2 residual of the Z equation
    std::vector<double> r_sl;     // time-direction residual, frame-bookkeeping variant
    std::vector<double> r_sl_alt; // time-direction residual, integral-A_t variant
    double z0 = 0.0;              // interior L2 of Z at s = 0 (the outer closures of the
                                  // face-form and ghost-form tensions differ on the last
                                  // row, so a global sup of Z(0) cannot converge)
    double scale = 0.0;           // max interior L2 of phi_s over the levels (for relative checks)
};

namespace detail {
// centered first derivative on a nonuniform lattice
inline void ds_weights(double hl, double hr, double& wl, double& wc, double& wr) {
    wl = -hr / (hl * (hl + hr));
    wr = hl / (hr * (hl + hr));
    wc = -(wl + wr);
}
}  // namespace detail

inline EvolutionResiduals evolution_residuals(const SLGaugeSlice& sl) {
    const GaugeData& g = sl.gauge;
    GridPtr gp = g.phi_inf.c1.grid_ptr();
    const int K = g.levels();
    if (K < 3) throw std::invalid_argument("evolution_residuals: need >= 3 s-levels");
    EvolutionResiduals rep;
    rep.z0 = detail::interior_norms(sl.Z[0]).l2;
    const complexd I(0.0, 1.0);

    for (int k = 1; k + 1 < K; ++k) {
        double wl, wc, wr;
        detail::ds_weights(g.s[k] - g.s[k - 1], g.s[k + 1] - g.s[k], wl, wc, wr);

        const auto& p1 = g.phi[k].c1;
        const auto& p2 = g.phi[k].c2;
        const ComplexField lps = magnetic_laplacian(g.phi_s[k], g.A[k]);
        const ComplexField lz = magnetic_laplacian(sl.Z[k], g.A[k]);

        ComplexField rh(gp), rz(gp), rs(gp), rsa(gp);
        for (int idx = 0; idx < rh.size(); ++idx) {
            const complexd ps = g.phi_s[k][idx];
            const double kap = g.kappa[k][idx];
            const complexd curv = I * kap *
                                  (std::imag(p1[idx] * std::conj(ps)) * p1[idx] +
                                   std::imag(p2[idx] * std::conj(ps)) * p2[idx]);

            const complexd dps = wl * g.phi_s[k - 1][idx] + wc * ps + wr * g.phi_s[k + 1][idx];
            rh[idx] = dps - lps[idx] + curv;

            const complexd z = sl.Z[k][idx];
            const complexd dz = wl * sl.Z[k - 1][idx] + wc * z + wr * sl.Z[k + 1][idx];
            const complexd sq = p1[idx] * p1[idx] + p2[idx] * p2[idx];
            rz[idx] = dz - lz[idx] - I * kap * sq * std::conj(ps) +
                      I * kap *
                          (std::imag(p1[idx] * std::conj(z)) * p1[idx] +
                           std::imag(p2[idx] * std::conj(z)) * p2[idx]);

            const complexd dtps = (sl.phi_s_plus[k][idx] - sl.phi_s_minus[k][idx]) / (2.0 * sl.dt);
            const complexd dsz = wl * sl.Z[k - 1][idx] + wc * z + wr * sl.Z[k + 1][idx];
            // frozen chart frames: D_t phi_s = dtps - conj(Gamma(v) v_t) phi_s
            rs[idx] = I * (dtps - sl.frame_corr[k][idx] * ps) + lps[idx] - I * dsz - curv;
            // integral-A_t bookkeeping: i d_t phi_s + Delta_A phi_s = A_t phi_s + ...
            rsa[idx] = I * dtps + lps[idx] - sl.A_t[k][idx] * ps - I * dsz - curv;
        }
        rep.s.push_back(g.s[k]);
        rep.r_heat.push_back(detail::interior_norms(rh).l2);
        rep.r_z.push_back(detail::interior_norms(rz).l2);
        rep.r_sl.push_back(detail::interior_norms(rs).l2);
        rep.r_sl_alt.push_back(detail::interior_norms(rsa).l2);
        rep.scale = std::max(rep.scale, detail::interior_norms(g.phi_s[k]).l2);
    }
    return rep;
}

}  // namespace hypslab
