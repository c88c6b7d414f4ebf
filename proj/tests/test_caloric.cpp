#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "hypslab/caloric.hpp"

using namespace hypslab;

namespace {
AnalyticMapSpec half_z() {
    AnalyticMapSpec s;
    s.coeffs = {complexd(0, 0), complexd(0.5, 0)};
    return s;
}

// compactly supported bump with angular mode 1, vanishing well inside rmax
ComplexField bump(GridPtr g, double amp) {
    return ComplexField::sample(g, [&](double r, double th) {
        const double x = (r - 1.6) / 1.2;
        if (std::abs(x) >= 1.0) return complexd(0.0);
        const double prof = std::exp(-1.0 / (1.0 - x * x));
        return amp * prof * complexd(std::cos(th) + 0.4, 0.6 * std::sin(th));
    });
}

MapField perturbed_map(GridPtr g, double amp) {
    MapField u = holomorphic_map(half_z(), g);
    auto b = bump(g, amp);
    for (int k = 0; k < u.w.size(); ++k) u.w[k] += b[k];
    return u;
}

double sup_distance(const MapField& a, const MapField& b) {
    double m = 0;
    for (int k = 0; k < a.w.size(); ++k) m = std::max(m, std::abs(a.w[k] - b.w[k]));
    return m;
}
}  // namespace

TEST_CASE("corrected implicit solve inverts the corrected operator") {
    auto g = build_grid(48, 16, 5.0);
    auto x = ComplexField::sample(g, [](double r, double th) {
        return complexd(std::exp(-0.3 * r) * std::cos(th), 0.2 * std::sin(th) + 0.1 * std::exp(-r));
    });
    std::vector<complexd> bc(g->ntheta());
    for (int j = 0; j < g->ntheta(); ++j)
        bc[j] = complexd(std::exp(-0.3 * 5.0) * std::cos(g->theta(j)),
                         0.2 * std::sin(g->theta(j)) + 0.1 * std::exp(-5.0));

    const double c = 0.12;
    ComplexField lx = laplace_beltrami_bc(x, bc);
    detail::axis_mode_correction(lx, x);
    ComplexField b = x;
    for (int k = 0; k < b.size(); ++k) b[k] -= c * lx[k];

    ImplicitLaplacianSolver solver(g);
    auto x2 = solver.solve_ring(b, c, bc, true);
    double err = 0;
    for (int k = 0; k < x.size(); ++k) err = std::max(err, std::abs(x2[k] - x[k]));
    CHECK(err < 1e-11);
}

TEST_CASE("heat flow of a harmonic map is stationary") {
    auto g = build_grid(64, 16, 6.0);
    auto t = poincare_disk_target();
    auto Q = holomorphic_map(half_z(), g);
    auto traj = run_heat_flow(Q, t, 2.0);

    // the flow settles on the discrete harmonic map, an O(h^2) neighbor of Q
    CHECK(sup_distance(traj.v.back(), Q) < 5e-3);
    for (int k = 1; k < traj.levels(); ++k)
        CHECK(traj.energy[k] <= traj.energy[k - 1] + 1e-8);
    CHECK(std::abs(traj.energy.back() - traj.energy.front()) < 1e-3 * traj.energy.front());
}

TEST_CASE("heat flow damps a compact perturbation") {
    auto g = build_grid(64, 16, 6.0);
    auto t = poincare_disk_target();
    auto Q = holomorphic_map(half_z(), g);
    auto u0 = perturbed_map(g, 0.1);

    const double smax = 20.0;
    auto ref = run_heat_flow(Q, t, smax);
    auto traj = run_heat_flow(u0, t, smax);

    // the adaptive s-lattices differ, so compare against the nearest ref level
    auto nearest = [&](double s) {
        int best = 0;
        for (int k = 1; k < ref.levels(); ++k)
            if (std::abs(ref.s[k] - s) < std::abs(ref.s[best] - s)) best = k;
        return best;
    };

    const double d0 = sup_distance(u0, Q);
    CHECK(d0 > 0.01);
    const int mid = traj.levels() / 2;
    CHECK(sup_distance(traj.v[mid], ref.v[nearest(traj.s[mid])]) < d0);
    CHECK(sup_distance(traj.v.back(), ref.v.back()) < 0.1 * d0);

    for (int k = 1; k < traj.levels(); ++k)
        CHECK(traj.energy[k] <= traj.energy[k - 1] + 1e-8);
}

TEST_CASE("heat flow keeps a constant map constant") {
    auto g = build_grid(64, 16, 6.0);
    auto t = poincare_disk_target();
    auto u0 = constant_map(g, complexd(0.25, -0.1));
    auto traj = run_heat_flow(u0, t, 1.0);
    CHECK(sup_distance(traj.v.back(), u0) < 1e-12);
    CHECK(traj.energy.back() < 1e-24);
}

TEST_CASE("frame transport is isometric and consistent") {
    auto g = build_grid(64, 16, 6.0);
    auto t = poincare_disk_target();
    auto traj = run_heat_flow(perturbed_map(g, 0.08), t, 10.0);
    auto tr = transport_frames(traj, t);
    CHECK(tr.max_renorm < 1e-6);

    // metric normalization is exact after renormalization
    for (int k = 0; k < traj.levels(); k += 7)
        for (int idx = 0; idx < tr.e[k].size(); idx += 53) {
            const double n = t.rho(traj.v[k].w[idx]) * std::abs(tr.e[k][idx]);
            CHECK(std::abs(n - 1.0) < 1e-12);
        }

    // on the stationary flow the frame never moves
    auto trajQ = run_heat_flow(holomorphic_map(half_z(), g), t, 2.0);
    auto trQ = transport_frames(trajQ, t);
    // the flow still drifts from Q to the discrete harmonic map (O(h^2)),
    // so the frame moves by a comparable amount and no more
    double drift = 0;
    for (int idx = 0; idx < trQ.e[0].size(); ++idx)
        drift = std::max(drift, std::abs(trQ.e[0][idx] - trQ.e.back()[idx]));
    CHECK(drift < 2e-3);
}

TEST_CASE("phi_s agrees with the frame components of the s-difference") {
    auto g = build_grid(64, 16, 6.0);
    auto t = poincare_disk_target();
    auto traj = run_heat_flow(perturbed_map(g, 0.08), t, 1.0);
    auto tr = transport_frames(traj, t);
    auto gd = gauge_fields(traj, tr.e, t);

    const int k = traj.levels() / 3;
    const double ds = traj.s[k + 1] - traj.s[k];
    double num = 0, den = 0;
    for (int idx = 0; idx < gd.phi_s[k].size(); ++idx) {
        const complexd vmid = 0.5 * (traj.v[k].w[idx] + traj.v[k + 1].w[idx]);
        const complexd emid = 0.5 * (tr.e[k][idx] + tr.e[k + 1][idx]);
        const double rho = t.rho(vmid);
        const complexd fd =
            rho * rho * (traj.v[k + 1].w[idx] - traj.v[k].w[idx]) / ds * std::conj(emid);
        const complexd direct = 0.5 * (gd.phi_s[k][idx] + gd.phi_s[k + 1][idx]);
        num = std::max(num, std::abs(fd - direct));
        den = std::max(den, std::abs(direct));
    }
    CHECK(num < 0.12 * den);
}

TEST_CASE("limit connection matches the closed form") {
    auto g = build_grid(64, 16, 6.0);
    auto t = poincare_disk_target();
    auto Q = holomorphic_map(half_z(), g);
    auto traj = run_heat_flow(Q, t, 2.0);
    auto tr = transport_frames(traj, t);
    auto gd = gauge_fields(traj, tr.e, t);

    // gauge_fields differentiates the transported frame; limit_gauge uses the
    // closed form Im(Gamma(Q) dQ). Interior rows, O(h^2) + |v - Q| agreement.
    auto lg = limit_gauge(Q, t);
    double m = 0;
    for (int i = 0; i + 2 < g->nr(); ++i)
        for (int j = 0; j < g->ntheta(); ++j) {
            m = std::max(m, std::abs(gd.A_inf.c1(i, j) - lg.A.c1(i, j)));
            m = std::max(m, std::abs(gd.A_inf.c2(i, j) - lg.A.c2(i, j)));
        }
    CHECK(m < 5e-3);

    // phi at smax is phi^inf by construction; it matches the closed form too
    double mp = 0;
    for (int i = 0; i + 2 < g->nr(); ++i)
        for (int j = 0; j < g->ntheta(); ++j)
            mp = std::max(mp, std::abs(gd.phi_inf.c1(i, j) - lg.phi.c1(i, j)));
    CHECK(mp < 2e-2);
}

namespace {
GaugeIdentityReport identities_at(int nr, int nt, double amp, double smax, int* level_out = nullptr) {
    auto g = build_grid(nr, nt, 6.0);
    auto t = poincare_disk_target();
    auto traj = run_heat_flow(perturbed_map(g, amp), t, smax);
    auto tr = transport_frames(traj, t);
    auto gd = gauge_fields(traj, tr.e, t);
    int level = 0;
    while (level + 1 < gd.levels() && gd.s[level] < 0.5) ++level;
    if (level_out) *level_out = level;
    return gauge_identities_check(gd, level);
}
}  // namespace

TEST_CASE("gauge identities vanish for an exactly stationary map") {
    auto g = build_grid(48, 16, 6.0);
    auto t = poincare_disk_target();
    auto traj = run_heat_flow(constant_map(g, complexd(0.2, 0.1)), t, 1.0);
    auto tr = transport_frames(traj, t);
    auto gd = gauge_fields(traj, tr.e, t);
    decompose_connection(gd);
    auto rep = gauge_identities_check(gd, gd.levels() / 2);
    CHECK(rep.heat_tension.sup < 1e-12);
    CHECK(rep.torsion.sup < 1e-12);
    CHECK(rep.commutator.sup < 1e-12);
    CHECK(rep.connection.sup < 1e-12);
    for (int k = 0; k < gd.levels(); k += 9) {
        CHECK(norm_sup(gd.A_lin[k].c1) < 1e-12);
        CHECK(norm_sup(gd.A_qua[k].c1) < 1e-12);
        CHECK(norm_sup(gd.phi_tilde[k].c1) < 1e-12);
    }
}

TEST_CASE("gauge identity residuals shrink under refinement") {
    auto coarse = identities_at(48, 16, 0.08, 1.0);
    auto fine = identities_at(96, 32, 0.08, 1.0);

    CHECK(coarse.heat_tension.l2 < 0.3);
    CHECK(coarse.heat_tension.l2 / fine.heat_tension.l2 > 2.0);
    CHECK(coarse.torsion.l2 / fine.torsion.l2 > 2.0);
    CHECK(coarse.commutator.l2 / fine.commutator.l2 > 2.0);

    // direct vs s-integral connection: quadrature + tail tolerance
    CHECK(coarse.connection.sup < 1e-2);
    CHECK(fine.connection.sup < 1e-2);
}

TEST_CASE("connection split scales linearly and quadratically") {
    auto g = build_grid(48, 16, 6.0);
    auto t = poincare_disk_target();

    auto split_norms = [&](double amp) {
        auto traj = run_heat_flow(perturbed_map(g, amp), t, 10.0);
        auto tr = transport_frames(traj, t);
        auto gd = gauge_fields(traj, tr.e, t);
        decompose_connection(gd);
        // measure at s = 0, where the perturbative part of A is largest
        const double nlin = std::sqrt(std::pow(norm_l2(gd.A_lin[0].c1), 2) +
                                      std::pow(norm_l2(gd.A_lin[0].c2), 2));
        const double nqua = std::sqrt(std::pow(norm_l2(gd.A_qua[0].c1), 2) +
                                      std::pow(norm_l2(gd.A_qua[0].c2), 2));

        // the split recovers Atilde = A - A^inf to quadrature tolerance
        double part = 0, scale = 0;
        for (int k = 0; k < gd.levels(); k += 11)
            for (int idx = 0; idx < gd.A[k].c1.size(); idx += 29) {
                const double at = gd.A[k].c1[idx] - gd.A_inf.c1[idx];
                scale = std::max(scale, std::abs(at));
                part = std::max(part,
                                std::abs(at - gd.A_lin[k].c1[idx] - gd.A_qua[k].c1[idx]));
            }
        // Atilde comes from the transported frames while the split comes from
        // s-quadrature with fitted exponential tails, so the partition holds
        // to the larger of the two error sources (~8% at this resolution).
        CHECK(part < 0.10 * scale + 1e-12);
        return std::pair<double, double>(nlin, nqua);
    };

    auto [lin1, qua1] = split_norms(0.1);
    auto [lin2, qua2] = split_norms(0.05);
    CHECK(lin1 / lin2 == Catch::Approx(2.0).margin(0.2));
    CHECK(qua1 / qua2 == Catch::Approx(4.0).margin(0.6));
}

TEST_CASE("heat tension smooths like s^{-1/2} for rough data") {
    auto g = build_grid(64, 32, 6.0);
    auto t = poincare_disk_target();
    auto Q = holomorphic_map(half_z(), g);

    // Rough perturbation at the edge of H^3, built in the eigenbasis of the
    // discrete Laplacian itself: Plancherel-flat nodal noise passed through a
    // dyadic sum of resolvent powers, sum_m 4^{-1.8 m} (I - 4^{-m} Delta)^{-4}.
    // Each term caps the spectrum at mu ~ 4^m, so the sum acts as a power-law
    // multiplier ~ mu^{-1.8} across the resolved range.  A single smooth
    // cutoff (or band projector) would instead impose its own fixed
    // smoothness and pin the decay rate regardless of the noise shaping.
    std::mt19937 rng(20240817);
    std::normal_distribution<double> gauss(0.0, 1.0);
    ComplexField xi(g);
    for (int i = 0; i < g->nr(); ++i) {
        const double w = g->sinh_r(i) * g->dr() * g->dtheta();
        for (int j = 0; j < g->ntheta(); ++j)
            xi(i, j) = complexd(gauss(rng), gauss(rng)) / std::sqrt(w);
    }
    ImplicitLaplacianSolver solver(g);
    ComplexField eta(g);
    for (int m = 0; m <= 5; ++m) {
        const double tm = std::pow(4.0, -m);
        const double wm = std::pow(4.0, -1.8 * m);
        ComplexField res = xi;
        for (int a = 0; a < 4; ++a) res = solver.solve(res, tm);
        for (int k = 0; k < eta.size(); ++k) eta[k] += wm * res[k];
    }
    MapField u0 = Q;
    const double sup = norm_sup(eta);
    for (int k = 0; k < u0.w.size(); ++k) u0.w[k] += (0.04 / sup) * eta[k];

    auto traj = run_heat_flow(u0, t, 8.0);
    auto tr = transport_frames(traj, t);
    auto gd = gauge_fields(traj, tr.e, t);
    auto rep = heat_smoothing(gd);
    CHECK(rep.early_slope == Catch::Approx(-0.5).margin(0.2));
    CHECK(rep.late_rate > 0.05);
}
