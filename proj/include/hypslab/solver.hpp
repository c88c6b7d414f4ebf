#pragma once

#include <vector>

#include "hypslab/grid.hpp"

namespace hypslab {

// Direct solver for (I - c * Laplace) x = b with the Dirichlet-0 outer
// closure. The theta coupling is circulant, so a DFT per radius reduces the
// problem to one tridiagonal solve per angular mode. Exact and deterministic.
class ImplicitLaplacianSolver {
public:
    explicit ImplicitLaplacianSolver(GridPtr grid) : grid_(std::move(grid)) {
        const int nt = grid_->ntheta();
        fwd_.resize(static_cast<std::size_t>(nt) * nt);
        for (int m = 0; m < nt; ++m)
            for (int j = 0; j < nt; ++j) {
                const double ang = -2.0 * kPi * m * j / nt;
                fwd_[static_cast<std::size_t>(m) * nt + j] = complexd(std::cos(ang), std::sin(ang));
            }
        mode_eig_.resize(nt);
        for (int m = 0; m < nt; ++m) {
            const double s = std::sin(kPi * m / nt);
            mode_eig_[m] = 4.0 * s * s / (grid_->dtheta() * grid_->dtheta());
        }
        ncorr_ = detail::axis_ncorr(*grid_);
        rules_.reserve(ncorr_);
        for (int i = 0; i < ncorr_; ++i) rules_.push_back(detail::axis_fit_rule(*grid_, i));
    }

    // Solve with the quadratic boundary-ring ghost pinned at value bc[j] on
    // r = rmax (the closure used by map-valued fields). The ghost
    // f_n = f_{nr-2}/3 - 2 f_{nr-1} + (8/3) b only modifies the last
    // tridiagonal row and adds a boundary source to the rhs. With `corrected`
    // the angular modes m = +-1 use the fitted axis rows (axis_fit_rule), so
    // the inverted operator matches the axis-corrected tension exactly.
    // The coefficient c may be real (heat steps) or complex (Schrödinger
    // half-steps, c = i dt/2).
    template <typename C>
    ComplexField solve_ring(const ComplexField& rhs, C c, const std::vector<complexd>& bc,
                            bool corrected = false) const {
        const auto& g = *grid_;
        const int last = g.nr() - 1;
        const double whi = g.sinh_face(g.nr()) / g.sinh_r(last) / (g.dr() * g.dr());
        ComplexField aug = rhs;
        for (int j = 0; j < g.ntheta(); ++j) aug(last, j) += c * whi * (8.0 / 3.0) * bc[j];
        return solve_impl(aug, c, true, corrected);
    }

    template <typename C>
    ComplexField solve(const ComplexField& rhs, C c) const {
        return solve_impl(rhs, c, false, false);
    }

    // Half-cell Dirichlet closure with an inhomogeneous ring value: the outer
    // face carries the flux 2 whi (b - f). The homogeneous part is the same
    // closure as solve() (reflection ghost), only the source differs. This is
    // the linear part of the face-form variational tension.
    template <typename C>
    ComplexField solve_face(const ComplexField& rhs, C c, const std::vector<complexd>& bc) const {
        const auto& g = *grid_;
        const int last = g.nr() - 1;
        const double whi = g.sinh_face(g.nr()) / g.sinh_r(last) / (g.dr() * g.dr());
        ComplexField aug = rhs;
        for (int j = 0; j < g.ntheta(); ++j) aug(last, j) += c * 2.0 * whi * bc[j];
        return solve_impl(aug, c, false, false);
    }

private:
    template <typename C>
    ComplexField solve_impl(const ComplexField& rhs, C c, bool ring, bool corrected) const {
        const auto& g = *grid_;
        const int nr = g.nr(), nt = g.ntheta();
        const double inv_dr2 = 1.0 / (g.dr() * g.dr());

        // forward DFT per radius: hat(i, m) = sum_j rhs(i, j) e^{-2pi i m j / nt}
        std::vector<complexd> hat(static_cast<std::size_t>(nr) * nt);
        parallel_for(nr, [&](std::size_t i) {
            for (int m = 0; m < nt; ++m) {
                complexd acc = 0.0;
                const complexd* row = &fwd_[static_cast<std::size_t>(m) * nt];
                for (int j = 0; j < nt; ++j) acc += row[j] * rhs(static_cast<int>(i), j);
                hat[i * nt + m] = acc;
            }
        });

        // tridiagonal solve in r per mode (plus one fill-in entry when the
        // first axis-corrected row uses the forward three-point rule)
        std::vector<complexd> sol(static_cast<std::size_t>(nr) * nt);
        parallel_for(nt, [&](std::size_t m) {
            const bool special = corrected && (m == 1 || m == static_cast<std::size_t>(nt - 1)) &&
                                 ncorr_ > 0;
            std::vector<C> lower(nr, C{}), diag(nr), upper(nr, C{});
            std::vector<complexd> rhs_m(nr);
            C extra02{};  // row 0 coupling to column 2 (forward rule)
            for (int i = 0; i < nr; ++i) {
                if (special && i < ncorr_) {
                    const auto& rule = rules_[static_cast<std::size_t>(i)];
                    if (i == 0) {
                        diag[0] = 1.0 - c * rule.a[0];
                        upper[0] = -c * rule.a[1];
                        extra02 = -c * rule.a[2];
                    } else {
                        lower[i] = -c * rule.a[0];
                        diag[i] = 1.0 - c * rule.a[1];
                        upper[i] = -c * rule.a[2];
                    }
                } else {
                    double wlo = g.sinh_face(i) / g.sinh_r(i) * inv_dr2;
                    const double whi = g.sinh_face(i + 1) / g.sinh_r(i) * inv_dr2;
                    const double wth = g.inv_sinh_r(i) * g.inv_sinh_r(i) * mode_eig_[m];
                    C d = 1.0 + c * (wlo + whi + wth);
                    // the ring ghost at the last row couples to nr-2 as well
                    if (i == nr - 1) {
                        d += ring ? 2.0 * c * whi : c * whi;
                        if (ring) wlo += (1.0 / 3.0) * whi;
                    }
                    lower[i] = -c * wlo;
                    diag[i] = d;
                    upper[i] = (i + 1 < nr) ? C(-c * whi) : C{};
                }
                rhs_m[i] = hat[i * nt + m];
            }
            for (int i = 1; i < nr; ++i) {
                const C factor = lower[i] / diag[i - 1];
                diag[i] -= factor * upper[i - 1];
                if (i == 1) upper[1] -= factor * extra02;
                rhs_m[i] -= factor * rhs_m[i - 1];
            }
            std::vector<complexd> x(nr);
            x[nr - 1] = rhs_m[nr - 1] / diag[nr - 1];
            for (int i = nr - 2; i >= 0; --i) x[i] = (rhs_m[i] - upper[i] * x[i + 1]) / diag[i];
            x[0] -= extra02 * x[2] / diag[0];
            for (int i = 0; i < nr; ++i) sol[static_cast<std::size_t>(i) * nt + m] = x[i];
        });

        // inverse DFT
        ComplexField out(rhs.grid_ptr());
        parallel_for(nr, [&](std::size_t i) {
            for (int j = 0; j < nt; ++j) {
                complexd acc = 0.0;
                for (int m = 0; m < nt; ++m)
                    acc += std::conj(fwd_[static_cast<std::size_t>(m) * nt + j]) * sol[i * nt + m];
                out(static_cast<int>(i), j) = acc / static_cast<double>(nt);
            }
        });
        return out;
    }

private:
    GridPtr grid_;
    std::vector<complexd> fwd_;
    std::vector<double> mode_eig_;
    int ncorr_ = 0;
    std::vector<detail::AxisFitRule> rules_;
};

}  // namespace hypslab
