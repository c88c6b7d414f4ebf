#pragma once

#include <functional>
#include <string>
#include <utility>

#include "hypslab/grid.hpp"

namespace hypslab {

// ---------------------------------------------------------------------------
// Target surface in a single conformal disk chart: metric rho(w)^2 |dw|^2 on
// |w| < 1. The connection coefficient of such a chart is
// Gamma(w) = 2 d_w log rho, so geodesics solve w'' + Gamma(w) (w')^2 = 0.

struct TargetSurface {
    std::function<double(complexd)> rho;
    std::function<double(complexd)> kappa;
    std::function<complexd(complexd)> christoffel;
    bool theorem_mode = true;  // require kappa <= 0 wherever it is sampled

    double kappa_checked(complexd w) const {
        const double k = kappa(w);
        if (theorem_mode && k > 1e-12)
            throw std::domain_error("TargetSurface: positive curvature sampled in theorem mode");
        return k;
    }
};

inline TargetSurface poincare_disk_target() {
    TargetSurface t;
    t.rho = [](complexd w) { return 2.0 / (1.0 - std::norm(w)); };
    t.kappa = [](complexd) { return -1.0; };
    t.christoffel = [](complexd w) { return 2.0 * std::conj(w) / (1.0 - std::norm(w)); };
    return t;
}

// Custom conformal chart; kappa must be supplied, the connection coefficient
// is differenced from log rho when no closed form is given.
inline TargetSurface make_conformal_target(std::function<double(complexd)> rho,
                                           std::function<double(complexd)> kappa,
                                           bool theorem_mode = true) {
    TargetSurface t;
    t.rho = rho;
    t.kappa = std::move(kappa);
    t.theorem_mode = theorem_mode;
    t.christoffel = [rho](complexd w) {
        const double h = 1e-6;
        const double dx =
            (std::log(rho(w + complexd(h, 0))) - std::log(rho(w - complexd(h, 0)))) / (2 * h);
        const double dy =
            (std::log(rho(w + complexd(0, h))) - std::log(rho(w - complexd(0, h)))) / (2 * h);
        return 2.0 * complexd(0.5 * dx, -0.5 * dy);  // 2 d_w log rho
    };
    return t;
}

// Geodesic distance from the chart origin to w (hyperbolic disk chart).
inline double chart_geodesic_radius(complexd w) {
    const double a = std::abs(w);
    return std::log((1.0 + a) / (1.0 - a));
}

// ---------------------------------------------------------------------------
// Map into the target chart. The boundary ring pins the trace at r = rmax;
// flows below hold it fixed, so derivative closures stay second order for
// maps (like harmonic Q) that do not vanish at the edge of the disk.

struct MapField {
    ComplexField w;
    std::vector<complexd> boundary;

    MapField() = default;
    explicit MapField(GridPtr grid, complexd fill = complexd{})
        : w(grid, fill), boundary(grid->ntheta(), fill) {}

    const HyperbolicGrid& grid() const { return w.grid(); }
    GridPtr grid_ptr() const { return w.grid_ptr(); }
};

inline double sup_chart_modulus(const MapField& u) {
    double m = norm_sup(u.w);
    for (const auto& b : u.boundary) m = std::max(m, std::abs(b));
    return m;
}

inline void require_compact_image(const MapField& u, double margin) {
    if (sup_chart_modulus(u) > 1.0 - margin)
        throw std::domain_error("MapField: image leaves the chart margin");
}

// ---------------------------------------------------------------------------
// Analytic (anti)holomorphic data: polynomial in z of degree <= 8 with the
// image bound checked on the boundary circle (maximum modulus principle).

enum class MapKind { holomorphic, antiholomorphic };

struct AnalyticMapSpec {
    MapKind kind = MapKind::holomorphic;
    std::vector<complexd> coeffs;  // f(z) = sum_k coeffs[k] z^k

    complexd eval(complexd z) const {
        complexd acc = 0.0;
        for (std::size_t k = coeffs.size(); k-- > 0;) acc = acc * z + coeffs[k];
        return acc;
    }
    complexd deriv(complexd z) const {
        complexd acc = 0.0;
        for (std::size_t k = coeffs.size(); k-- > 1;)
            acc = acc * z + static_cast<double>(k) * coeffs[k];
        return acc;
    }
    double boundary_sup(int samples = 4096) const {
        double m = 0.0;
        for (int j = 0; j < samples; ++j) {
            const double th = 2.0 * kPi * j / samples;
            m = std::max(m, std::abs(eval(complexd(std::cos(th), std::sin(th)))));
        }
        return m;
    }
    void validate(double margin) const {
        if (coeffs.empty() || coeffs.size() > 9)
            throw std::invalid_argument("AnalyticMapSpec: polynomial degree must be <= 8");
        if (boundary_sup() > 1.0 - margin)
            throw std::domain_error("AnalyticMapSpec: image is not compactly contained in the chart");
    }
};

inline MapField holomorphic_map(const AnalyticMapSpec& spec, GridPtr grid, double margin = 0.02) {
    spec.validate(margin);
    MapField u(grid);
    const bool anti = spec.kind == MapKind::antiholomorphic;
    for (int i = 0; i < grid->nr(); ++i)
        for (int j = 0; j < grid->ntheta(); ++j) {
            const complexd v = spec.eval(grid->chart_point(i, j));
            u.w(i, j) = anti ? std::conj(v) : v;
        }
    const double zb = std::tanh(0.5 * grid->rmax());
    for (int j = 0; j < grid->ntheta(); ++j) {
        const double th = grid->theta(j);
        const complexd v = spec.eval(zb * complexd(std::cos(th), std::sin(th)));
        u.boundary[j] = anti ? std::conj(v) : v;
    }
    return u;
}

inline MapField constant_map(GridPtr grid, complexd value) { return MapField(grid, value); }

// ---------------------------------------------------------------------------
// Tension field tau(u) = Delta u + Gamma(u) (du . du), with the complex
// bilinear square (du . du) = (d_1 u)^2 + (d_2 u)^2 in the orthonormal
// coframe. Chart components; tau = 0 characterizes harmonic maps.

namespace detail {
// Replace the m = +-1 angular-mode action of the flux Laplacian on the rows
// near the axis by the shared fitted rule (see axis_fit_rule in grid.hpp);
// applied as an additive correction to an already-computed Laplacian.
inline void axis_mode_correction(ComplexField& lap, const ComplexField& f) {
    const auto& g = f.grid();
    const int nr = g.nr(), nt = g.ntheta();
    const int ncorr = axis_ncorr(g);
    if (ncorr == 0) return;

    // angular modes m = +1 and m = -1 of the complex field
    std::vector<complexd> gp1(ncorr + 2), gm1(ncorr + 2);
    for (int i = 0; i <= ncorr + 1 && i < nr; ++i) {
        complexd ap = 0.0, am = 0.0;
        for (int j = 0; j < nt; ++j) {
            const double th = g.theta(j);
            const complexd em(std::cos(th), -std::sin(th));
            ap += f(i, j) * em;
            am += f(i, j) * std::conj(em);
        }
        gp1[i] = ap / static_cast<double>(nt);
        gm1[i] = am / static_cast<double>(nt);
    }

    const double inv_dr2 = 1.0 / (g.dr() * g.dr());
    const double ang = 2.0 * (1.0 - std::cos(g.dtheta())) / (g.dtheta() * g.dtheta());
    auto at = [&](const std::vector<complexd>& v, int i) {
        return i >= 0 ? v[i] : -v[0];  // odd parity across the origin
    };

    for (int i = 0; i < ncorr; ++i) {
        // standard scheme acting on a mode-1 profile
        const double wlo = g.sinh_face(i) / g.sinh_r(i) * inv_dr2;
        const double whi = g.sinh_face(i + 1) / g.sinh_r(i) * inv_dr2;
        const double wth = g.inv_sinh_r(i) * g.inv_sinh_r(i) * ang;

        const AxisFitRule rule = axis_fit_rule(g, i);
        const int node0 = rule.node0;

        for (int pass = 0; pass < 2; ++pass) {
            const auto& gm = pass == 0 ? gp1 : gm1;
            const complexd std_val = wlo * (at(gm, i - 1) - gm[i]) + whi * (gm[i + 1] - gm[i]) -
                                     wth * gm[i];
            const complexd fit_val =
                rule.a[0] * gm[node0] + rule.a[1] * gm[node0 + 1] + rule.a[2] * gm[node0 + 2];
            const complexd corr = fit_val - std_val;
            for (int j = 0; j < nt; ++j) {
                const double th = g.theta(j);
                const complexd e(std::cos(th), std::sin(th));
                lap(i, j) += corr * (pass == 0 ? e : std::conj(e));
            }
        }
    }
}
}  // namespace detail

// With `axis_corrected` (the default) the m = +-1 angular modes near the
// axis use the fitted rule, giving uniform second-order accuracy; the plain
// variant matches the exactly-symmetric flux Laplacian that the evolution
// schemes invert, so their discrete fixed points are its exact zeros.
inline ComplexField tension_field(const MapField& u, const TargetSurface& target,
                                  bool axis_corrected = true) {
    ComplexField tau = laplace_beltrami_bc(u.w, u.boundary);
    if (axis_corrected) detail::axis_mode_correction(tau, u.w);
    const auto du = gradient_bc(u.w, u.boundary);
    for (int k = 0; k < tau.size(); ++k) {
        const complexd sq = du.c1[k] * du.c1[k] + du.c2[k] * du.c2[k];
        tau[k] += target.christoffel(u.w[k]) * sq;
    }
    return tau;
}

// ---------------------------------------------------------------------------
// Face-form discrete Dirichlet energy and its exact gradient. The energy sums
// 1/2 W_f rhobar2_f |dw_f|^2 over grid faces (rhobar2 = mean of rho^2 at the
// face ends; the outer boundary face spans the half cell to the pinned ring).
// variational_tension is the exact conjugate-gradient of this sum scaled by
// -2/(mu rho^2), so the chart Schrödinger flow w_t = i tau conserves the face
// energy identically in the spatial semidiscretization -- the centered-
// difference tension is consistent but is not the gradient of any discrete
// energy, and the O(h^2) mismatch shows up as a secular energy drift.

namespace detail {
// enumerate the faces adjacent to node (i, j): per-volume weight W_f/mu_i,
// the neighbor value, and whether the face is the pinned outer ring
template <typename F>
void for_each_face(const MapField& u, int i, int j, F&& body) {
    const auto& g = u.grid();
    const int nr = g.nr();
    const double inv_dr2 = 1.0 / (g.dr() * g.dr());
    const double wth = g.inv_sinh_r(i) * g.inv_sinh_r(i) / (g.dtheta() * g.dtheta());
    if (i > 0) body(g.sinh_face(i) / g.sinh_r(i) * inv_dr2, u.w(i - 1, j), false);
    if (i + 1 < nr)
        body(g.sinh_face(i + 1) / g.sinh_r(i) * inv_dr2, u.w(i + 1, j), false);
    else
        body(2.0 * g.sinh_face(nr) / g.sinh_r(i) * inv_dr2,
             u.boundary[static_cast<std::size_t>(j)], true);
    body(wth, u.w(i, g.wrap_theta(j - 1)), false);
    body(wth, u.w(i, g.wrap_theta(j + 1)), false);
}
}  // namespace detail

inline double face_dirichlet_energy(const MapField& u, const TargetSurface& target) {
    const auto& g = u.grid();
    ScalarField dens(u.grid_ptr());
    for (int i = 0; i < g.nr(); ++i)
        for (int j = 0; j < g.ntheta(); ++j) {
            const complexd w = u.w(i, j);
            const double r2 = target.rho(w) * target.rho(w);
            double acc = 0.0;
            detail::for_each_face(u, i, j, [&](double wf, complexd wo, bool bnd) {
                const double ro2 = target.rho(wo) * target.rho(wo);
                // interior faces are visited from both ends, boundary faces once
                acc += (bnd ? 0.5 : 0.25) * wf * (r2 + ro2) * std::norm(wo - w);
            });
            dens(i, j) = acc;
        }
    return 0.5 * integrate(dens);
}

inline ComplexField variational_tension(const MapField& u, const TargetSurface& target) {
    const auto& g = u.grid();
    ComplexField tau(u.grid_ptr());
    for (int i = 0; i < g.nr(); ++i)
        for (int j = 0; j < g.ntheta(); ++j) {
            const complexd w = u.w(i, j);
            const double rho = target.rho(w);
            const double r2 = rho * rho;
            complexd acc = 0.0;
            double g2 = 0.0;
            detail::for_each_face(u, i, j, [&](double wf, complexd wo, bool) {
                const double ro2 = target.rho(wo) * target.rho(wo);
                acc += wf * 0.5 * (r2 + ro2) * (wo - w);
                g2 += wf * std::norm(wo - w);
            });
            tau(i, j) = acc / r2 - 0.5 * rho * w * g2;
        }
    return tau;
}

// Face flux Laplacian with the half-cell Dirichlet ring: the linear part of
// the variational tension (exact at constant conformal factor).
inline ComplexField face_laplacian(const MapField& u) {
    const auto& g = u.grid();
    ComplexField out(u.grid_ptr());
    for (int i = 0; i < g.nr(); ++i)
        for (int j = 0; j < g.ntheta(); ++j) {
            complexd acc = 0.0;
            const complexd w = u.w(i, j);
            detail::for_each_face(u, i, j, [&](double wf, complexd wo, bool) { acc += wf * (wo - w); });
            out(i, j) = acc;
        }
    return out;
}

// Dirichlet energy E(u) = 1/2 int rho(u)^2 |du|^2 dvol.
inline double dirichlet_energy(const MapField& u, const TargetSurface& target) {
    const auto du = gradient_bc(u.w, u.boundary);
    ScalarField dens(u.grid_ptr());
    for (int k = 0; k < dens.size(); ++k) {
        const double rho = target.rho(u.w[k]);
        dens[k] = 0.5 * rho * rho * (std::norm(du.c1[k]) + std::norm(du.c2[k]));
    }
    return integrate(dens);
}

// ---------------------------------------------------------------------------
// Gauge data of the limit frame along a fixed map Q. The frame is the
// metric-normalized pushforward of the real chart axis, e1(x) = 1/rho(Q(x)),
// a deterministic convention. With e1 real the connection one-form reduces
// to A_j = Im(Gamma(Q) d_j Q).

struct LimitGauge {
    ComplexField e1;
    TangentField phi;      // phi_j = rho(Q) d_j Q  (frame components of dQ)
    RealTangentField A;    // A_j = <cov_j e1, J e1>
    ScalarField kappa;     // curvature sampled along Q
};

inline LimitGauge limit_gauge(const MapField& Q, const TargetSurface& target) {
    LimitGauge g{ComplexField(Q.grid_ptr()), TangentField(Q.grid_ptr()),
                 RealTangentField(Q.grid_ptr()), ScalarField(Q.grid_ptr())};
    const auto dQ = gradient_bc(Q.w, Q.boundary);
    for (int k = 0; k < g.e1.size(); ++k) {
        const complexd w = Q.w[k];
        const double rho = target.rho(w);
        const complexd gamma = target.christoffel(w);
        g.e1[k] = 1.0 / rho;
        g.phi.c1[k] = rho * dQ.c1[k];
        g.phi.c2[k] = rho * dQ.c2[k];
        g.A.c1[k] = std::imag(gamma * dQ.c1[k]);
        g.A.c2[k] = std::imag(gamma * dQ.c2[k]);
        g.kappa[k] = target.kappa_checked(w);
    }
    return g;
}

// Pointwise metric Hilbert-Schmidt norm |dQ| from frame components.
inline ScalarField map_differential_norm(const LimitGauge& g) {
    ScalarField out(g.e1.grid_ptr());
    for (int k = 0; k < out.size(); ++k)
        out[k] = std::sqrt(std::norm(g.phi.c1[k]) + std::norm(g.phi.c2[k]));
    return out;
}

// ---------------------------------------------------------------------------
// Covariant derivative of a gauged 1-form phi_j (complex frame components
// charged under the connection A): includes the domain rotation coefficients
// of the geodesic-polar orthonormal frame (the theta leg rotates at rate
// coth r) plus the i A_l charge term.

struct CovariantMatrix {
    // d[l][j] = (D_l phi)_j, l, j in {1, 2}
    ComplexField d11, d12, d21, d22;
    explicit CovariantMatrix(GridPtr g) : d11(g), d12(g), d21(g), d22(g) {}
};

inline CovariantMatrix covariant_derivative(const TangentField& phi, const RealTangentField& A) {
    GridPtr gp = phi.c1.grid_ptr();
    const auto& g = *gp;
    CovariantMatrix out(gp);
    const auto g1 = gradient_component(phi.c1);
    const auto g2 = gradient_component(phi.c2);
    for (int i = 0; i < g.nr(); ++i)
        for (int j = 0; j < g.ntheta(); ++j) {
            const complexd iA1 = complexd(0, A.c1(i, j));
            const complexd iA2 = complexd(0, A.c2(i, j));
            const double ct = g.coth_r(i);
            out.d11(i, j) = g1.c1(i, j) + iA1 * phi.c1(i, j);
            out.d12(i, j) = g2.c1(i, j) + iA1 * phi.c2(i, j);
            out.d21(i, j) = g1.c2(i, j) + iA2 * phi.c1(i, j) - ct * phi.c2(i, j);
            out.d22(i, j) = g2.c2(i, j) + iA2 * phi.c2(i, j) + ct * phi.c1(i, j);
        }
    return out;
}

// ---------------------------------------------------------------------------
// Admissibility report: sup and L2 sizes of the first three covariant
// derivatives of Q (in frame components) and the weighted sup e^r |dQ|.

struct AdmissibilityReport {
    double sup_dQ = 0, sup_d2Q = 0, sup_d3Q = 0;
    double l2_dQ = 0, l2_d2Q = 0, l2_d3Q = 0;
    double sup_exp_weighted_dQ = 0;
    bool pass = false;
};

inline AdmissibilityReport verify_admissible(const MapField& Q, const TargetSurface& target,
                                             double threshold = 10.0) {
    const auto g = limit_gauge(Q, target);
    GridPtr gp = Q.grid_ptr();
    const auto& grid = *gp;

    AdmissibilityReport rep;
    const ScalarField dq = map_differential_norm(g);
    rep.sup_dQ = norm_sup(dq);
    rep.l2_dQ = norm_l2(dq);
    for (int i = 0; i < grid.nr(); ++i) {
        const double w = std::exp(grid.r(i));
        for (int j = 0; j < grid.ntheta(); ++j)
            rep.sup_exp_weighted_dQ = std::max(rep.sup_exp_weighted_dQ, w * dq(i, j));
    }

    const CovariantMatrix d2 = covariant_derivative(g.phi, g.A);
    ScalarField n2(gp);
    for (int k = 0; k < n2.size(); ++k)
        n2[k] = std::sqrt(std::norm(d2.d11[k]) + std::norm(d2.d12[k]) + std::norm(d2.d21[k]) +
                          std::norm(d2.d22[k]));
    rep.sup_d2Q = norm_sup(n2);
    rep.l2_d2Q = norm_l2(n2);

    // Third derivative: differentiate each row of d2 as a gauged 1-form and
    // add the rotation acting on the first (row) index.
    TangentField row1{gp}, row2{gp};
    row1.c1 = d2.d11;
    row1.c2 = d2.d12;
    row2.c1 = d2.d21;
    row2.c2 = d2.d22;
    const CovariantMatrix e1 = covariant_derivative(row1, g.A);
    const CovariantMatrix e2 = covariant_derivative(row2, g.A);
    ScalarField n3(gp);
    for (int i = 0; i < grid.nr(); ++i) {
        const double ct = grid.coth_r(i);
        for (int j = 0; j < grid.ntheta(); ++j) {
            // rotation correction on the row index for the theta-direction
            const complexd c11 = e1.d11(i, j), c12 = e1.d12(i, j);
            const complexd c13 = e1.d21(i, j) - ct * row2.c1(i, j);
            const complexd c14 = e1.d22(i, j) - ct * row2.c2(i, j);
            const complexd c21 = e2.d11(i, j), c22 = e2.d12(i, j);
            const complexd c23 = e2.d21(i, j) + ct * row1.c1(i, j);
            const complexd c24 = e2.d22(i, j) + ct * row1.c2(i, j);
            n3(i, j) = std::sqrt(std::norm(c11) + std::norm(c12) + std::norm(c13) + std::norm(c14) +
                                 std::norm(c21) + std::norm(c22) + std::norm(c23) + std::norm(c24));
        }
    }
    rep.sup_d3Q = norm_sup(n3);
    rep.l2_d3Q = norm_l2(n3);

    rep.pass = std::isfinite(rep.sup_exp_weighted_dQ) && rep.sup_exp_weighted_dQ <= threshold &&
               rep.sup_dQ <= threshold && rep.sup_d2Q <= 10.0 * threshold;
    return rep;
}

// ---------------------------------------------------------------------------
// Fitted radial decay exponents of the limit-gauge fields. Slopes of
// log(max over theta) vs r on the middle window [rmax/3, 2 rmax/3].

struct DecayProfile {
    // Fitted exponents. slope_dA uses the full covariant derivative of A; for
    // (anti)holomorphic maps its symmetric traceless part decays only at the
    // rate of A itself, so the curvature slope slope_F carries the faster
    // gauge-invariant rate (one unit better than A).
    double slope_phi = 0, slope_A = 0, slope_dA = 0, slope_F = 0;
    bool trivial = false;
};

namespace detail {
inline double fit_log_slope(const std::vector<double>& r, const std::vector<double>& v) {
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < r.size(); ++i)
        if (v[i] > 1e-14) {
            xs.push_back(r[i]);
            ys.push_back(std::log(v[i]));
        }
    if (xs.size() < 4) throw std::runtime_error("decay_profile: degenerate fit window");
    return fit_line(xs, ys).slope;
}
}  // namespace detail

inline DecayProfile decay_profile(const MapField& Q, const TargetSurface& target) {
    const auto g = limit_gauge(Q, target);
    GridPtr gp = Q.grid_ptr();
    const auto& grid = *gp;

    const ScalarField dq = map_differential_norm(g);
    ScalarField an(gp);
    for (int k = 0; k < an.size(); ++k)
        an[k] = std::sqrt(g.A.c1[k] * g.A.c1[k] + g.A.c2[k] * g.A.c2[k]);

    // frame-covariant gradient of the connection one-form A
    const auto dA1 = gradient_component(g.A.c1);
    const auto dA2 = gradient_component(g.A.c2);
    ScalarField dan(gp);
    for (int i = 0; i < grid.nr(); ++i) {
        const double ct = grid.coth_r(i);
        for (int j = 0; j < grid.ntheta(); ++j) {
            const double n11 = dA1.c1(i, j);
            const double n12 = dA2.c1(i, j);
            const double n21 = dA1.c2(i, j) - ct * g.A.c2(i, j);
            const double n22 = dA2.c2(i, j) + ct * g.A.c1(i, j);
            dan(i, j) = std::sqrt(n11 * n11 + n12 * n12 + n21 * n21 + n22 * n22);
        }
    }

    // curvature two-form F_12 of the connection, gauge invariant
    ScalarField fcurv(gp);
    for (int i = 0; i < grid.nr(); ++i)
        for (int j = 0; j < grid.ntheta(); ++j)
            fcurv(i, j) = std::abs(dA2.c1(i, j) + grid.coth_r(i) * g.A.c2(i, j) -
                                   dA1.c2(i, j));

    std::vector<double> rs, mphi, ma, mda, mf;
    for (int i = 0; i < grid.nr(); ++i) {
        const double r = grid.r(i);
        if (r < grid.rmax() / 3.0 || r > 2.0 * grid.rmax() / 3.0) continue;
        double p = 0, a = 0, da = 0, fc = 0;
        for (int j = 0; j < grid.ntheta(); ++j) {
            p = std::max(p, dq(i, j));
            a = std::max(a, an(i, j));
            da = std::max(da, dan(i, j));
            fc = std::max(fc, fcurv(i, j));
        }
        rs.push_back(r);
        mphi.push_back(p);
        ma.push_back(a);
        mda.push_back(da);
        mf.push_back(fc);
    }

    DecayProfile out;
    double peak = 0;
    for (double v : mphi) peak = std::max(peak, v);
    if (peak < 1e-14) {
        out.trivial = true;
        return out;
    }
    out.slope_phi = detail::fit_log_slope(rs, mphi);
    out.slope_A = detail::fit_log_slope(rs, ma);
    out.slope_dA = detail::fit_log_slope(rs, mda);
    out.slope_F = detail::fit_log_slope(rs, mf);
    return out;
}

}  // namespace hypslab
