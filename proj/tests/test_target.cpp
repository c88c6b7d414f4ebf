#include <catch2/catch_amalgamated.hpp>

#include "hypslab/target.hpp"

using namespace hypslab;

namespace {
AnalyticMapSpec half_z() {
    AnalyticMapSpec s;
    s.coeffs = {complexd(0, 0), complexd(0.5, 0)};
    return s;
}

// Smooth compactly supported complex bump, radial profile.
ComplexField radial_bump(GridPtr g, double c, double w, complexd amp) {
    return ComplexField::sample(g, [&](double r, double) {
        const double x = (r - c) / w;
        return std::abs(x) < 1.0 ? amp * std::exp(-1.0 / (1.0 - x * x)) : complexd(0.0);
    });
}
}  // namespace

TEST_CASE("Poincare disk chart") {
    auto t = poincare_disk_target();
    CHECK(t.rho(complexd(0, 0)) == Catch::Approx(2.0));
    CHECK(t.rho(complexd(0.5, 0)) == Catch::Approx(2.0 / 0.75));
    for (complexd w : {complexd(0.1, 0.2), complexd(-0.7, 0.3), complexd(0, 0)})
        CHECK(t.kappa(w) == Catch::Approx(-1.0));

    auto g = build_grid(64, 8, 6.0);
    for (int i = 0; i < g->nr(); i += 11)
        CHECK(chart_geodesic_radius(g->chart_point(i, 3)) == Catch::Approx(g->r(i)).epsilon(1e-12));

    // finite-difference Christoffel of a custom chart agrees with the closed form
    auto tc = make_conformal_target([](complexd w) { return 2.0 / (1.0 - std::norm(w)); },
                                    [](complexd) { return -1.0; });
    for (complexd w : {complexd(0.3, 0.1), complexd(-0.2, 0.4)})
        CHECK(std::abs(tc.christoffel(w) - t.christoffel(w)) < 1e-7);

    auto bad = make_conformal_target([](complexd) { return 1.0; }, [](complexd) { return 0.5; });
    CHECK_THROWS_AS(bad.kappa_checked(complexd(0, 0)), std::domain_error);
}

TEST_CASE("analytic map specs") {
    auto s = half_z();
    CHECK_NOTHROW(s.validate(0.02));
    CHECK(s.boundary_sup() == Catch::Approx(0.5));

    AnalyticMapSpec big;
    big.coeffs.assign(10, complexd(0.01, 0));
    CHECK_THROWS_AS(big.validate(0.02), std::invalid_argument);

    AnalyticMapSpec ident;
    ident.coeffs = {complexd(0, 0), complexd(1, 0)};
    CHECK_THROWS_AS(ident.validate(0.02), std::domain_error);
    CHECK_NOTHROW(ident.validate(0.0));

    // exact anti-holomorphic derivative of low-degree polynomials (4-point stencil)
    auto cr = [](const AnalyticMapSpec& spec, complexd z) {
        const double h = 1e-3;
        const complexd dx = (spec.eval(z + h) - spec.eval(z - h)) / (2 * h);
        const complexd dy =
            (spec.eval(z + complexd(0, h)) - spec.eval(z - complexd(0, h))) / (2 * h);
        return 0.5 * (dx + complexd(0, 1) * dy);
    };
    for (complexd z : {complexd(0.2, 0.1), complexd(-0.4, 0.5)}) CHECK(std::abs(cr(s, z)) < 1e-12);
}

TEST_CASE("holomorphic map frame relations") {
    auto g = build_grid(128, 64, 10.0);
    auto t = poincare_disk_target();
    auto Q = holomorphic_map(half_z(), g);
    CHECK(sup_chart_modulus(Q) < 0.5 + 1e-12);

    // discrete Cauchy-Riemann in the orthonormal coframe: d2 Q = i d1 Q
    auto dQ = gradient_bc(Q.w, Q.boundary);
    double mcr = 0;
    for (int k = 0; k < Q.w.size(); ++k)
        mcr = std::max(mcr, std::abs(dQ.c2[k] - complexd(0, 1) * dQ.c1[k]));
    CHECK(mcr < 2e-3);

    // frame components: phi_2 = i phi_1 (our orientation convention), so the
    // complex bilinear square phi_1^2 + phi_2^2 vanishes.
    auto lg = limit_gauge(Q, t);
    double mrel = 0, msq = 0;
    for (int k = 0; k < Q.w.size(); ++k) {
        mrel = std::max(mrel, std::abs(lg.phi.c2[k] - complexd(0, 1) * lg.phi.c1[k]));
        msq = std::max(msq, std::abs(lg.phi.c1[k] * lg.phi.c1[k] + lg.phi.c2[k] * lg.phi.c2[k]));
    }
    CHECK(mrel < 5e-3);
    CHECK(msq < 5e-3);

    // anti-holomorphic: phi_2 = -i phi_1
    AnalyticMapSpec as = half_z();
    as.kind = MapKind::antiholomorphic;
    auto Qa = holomorphic_map(as, g);
    auto lga = limit_gauge(Qa, t);
    double marel = 0;
    for (int k = 0; k < Qa.w.size(); ++k)
        marel = std::max(marel, std::abs(lga.phi.c2[k] + complexd(0, 1) * lga.phi.c1[k]));
    CHECK(marel < 5e-3);
}

TEST_CASE("tension field of harmonic and constant maps") {
    auto t = poincare_disk_target();
    auto g = build_grid(128, 64, 10.0);

    auto c = constant_map(g, complexd(0.3, -0.2));
    CHECK(norm_sup(tension_field(c, t)) < 1e-12);

    auto Q = holomorphic_map(half_z(), g);
    const double tc = norm_sup(tension_field(Q, t));
    CHECK(std::isfinite(tc));
    CHECK(tc < 1e-2);

    auto gf = build_grid(256, 128, 10.0);
    const double tf = norm_sup(tension_field(holomorphic_map(half_z(), gf), t));
    CHECK(tc / tf > 4.0 * 0.7);
    CHECK(tc / tf < 4.0 * 1.3);
}

TEST_CASE("tension is the negative energy gradient") {
    auto t = poincare_disk_target();
    auto g = build_grid(2048, 8, 6.0);

    // smooth non-harmonic radial map and a radial variation
    MapField u(g);
    for (int i = 0; i < g->nr(); ++i) {
        const double r = g->r(i);
        const complexd v = complexd(0.4, 0.1) * std::exp(-0.5 * (r - 1.5) * (r - 1.5));
        for (int j = 0; j < g->ntheta(); ++j) u.w(i, j) = v;
    }
    std::fill(u.boundary.begin(), u.boundary.end(),
              complexd(0.4, 0.1) * std::exp(-0.5 * (6.0 - 1.5) * (6.0 - 1.5)));
    auto eta = radial_bump(g, 1.8, 1.0, complexd(0.7, -0.4));

    auto tau = tension_field(u, t);
    ScalarField pair(g);
    for (int k = 0; k < pair.size(); ++k) {
        const double rho = t.rho(u.w[k]);
        pair[k] = rho * rho * std::real(tau[k] * std::conj(eta[k]));
    }
    const double lhs = integrate(pair);

    const double eps = 1e-5;
    MapField up = u, um = u;
    for (int k = 0; k < u.w.size(); ++k) {
        up.w[k] += eps * eta[k];
        um.w[k] -= eps * eta[k];
    }
    const double rhs = -(dirichlet_energy(up, t) - dirichlet_energy(um, t)) / (2 * eps);
    CHECK(std::abs(lhs - rhs) < 1e-4 * std::abs(rhs));
}

TEST_CASE("dirichlet energy") {
    auto t = poincare_disk_target();
    auto g = build_grid(128, 32, 10.0);
    CHECK(dirichlet_energy(constant_map(g, complexd(0.1, 0.4)), t) < 1e-24);

    // second-order convergence: Richardson limits of successive pairs agree
    auto energy_at = [&](int n) {
        auto gg = build_grid(n, n / 2, 10.0);
        return dirichlet_energy(holomorphic_map(half_z(), gg), t);
    };
    const double e1 = energy_at(128), e2 = energy_at(256), e3 = energy_at(512);
    const double x12 = e2 + (e2 - e1) / 3.0, x23 = e3 + (e3 - e2) / 3.0;
    CHECK(e1 > 0.0);
    CHECK(std::abs(x12 - x23) < 1e-4 * x23);

    // harmonic map is a local minimizer under compact perturbations
    auto gf = build_grid(256, 64, 10.0);
    auto Q = holomorphic_map(half_z(), gf);
    auto bump = radial_bump(gf, 2.0, 1.0, complexd(0.01, 0.02));
    MapField Qb = Q;
    for (int k = 0; k < Q.w.size(); ++k) Qb.w[k] += bump[k];
    CHECK(dirichlet_energy(Qb, t) >= dirichlet_energy(Q, t));
}

TEST_CASE("energy density at the origin for f(z) = a z") {
    auto t = poincare_disk_target();
    auto g = build_grid(256, 64, 8.0);
    AnalyticMapSpec s;
    const double a = 0.5;
    s.coeffs = {complexd(0, 0), complexd(a, 0)};
    auto lg = limit_gauge(holomorphic_map(s, g), t);
    const double d0 = std::norm(lg.phi.c1(0, 0)) + std::norm(lg.phi.c2(0, 0));
    CHECK(d0 == Catch::Approx(2.0 * a * a).margin(5e-3));
}

TEST_CASE("admissibility report") {
    auto t = poincare_disk_target();
    auto g = build_grid(128, 32, 8.0);

    auto rep = verify_admissible(holomorphic_map(half_z(), g), t);
    CHECK(rep.pass);
    CHECK(std::isfinite(rep.sup_exp_weighted_dQ));
    // e^r |dQ| -> sqrt(2) a (1+|z|)^2 / (1 - a^2 |z|^2) -> 3.77 as r -> rmax
    CHECK(rep.sup_exp_weighted_dQ == Catch::Approx(3.771).epsilon(0.05));

    auto repc = verify_admissible(constant_map(g, complexd(0.2, 0.2)), t);
    CHECK(repc.pass);
    CHECK(repc.sup_dQ < 1e-12);
    CHECK(repc.sup_exp_weighted_dQ < 1e-9);

    AnalyticMapSpec ident;
    ident.coeffs = {complexd(0, 0), complexd(1, 0)};
    auto repi = verify_admissible(holomorphic_map(ident, g, 0.0), t);
    CHECK_FALSE(repi.pass);
    CHECK(repi.sup_exp_weighted_dQ > 100.0);
}

TEST_CASE("decay profile of the limit gauge") {
    auto t = poincare_disk_target();
    auto g = build_grid(256, 32, 12.0);
    auto prof = decay_profile(holomorphic_map(half_z(), g), t);
    CHECK_FALSE(prof.trivial);
    CHECK(prof.slope_phi == Catch::Approx(-1.0).margin(0.1));
    CHECK(prof.slope_A == Catch::Approx(-1.0).margin(0.1));
    // the gauge-invariant curvature carries the improved rate; the symmetric
    // part of the covariant derivative of A decays only like A itself
    CHECK(prof.slope_F == Catch::Approx(-2.0).margin(0.2));
    CHECK(prof.slope_dA == Catch::Approx(-1.0).margin(0.15));

    auto trivial = decay_profile(constant_map(g, complexd(0.3, 0)), t);
    CHECK(trivial.trivial);
}
