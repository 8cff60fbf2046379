#pragma once

// Two-state-vector engine: a forward-evolved initial state paired with a
// backward-evolved final state on the same interval, weak values and weak
// densities between them, and the Born-weighted average over a complete
// family of final states that collapses every weak quantity back onto the
// ordinary single-state expression.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "retroq/errors.hpp"
#include "retroq/qcore.hpp"
#include "retroq/qgrid.hpp"

namespace retroq {

/// Weak quantities blow up as 1/overlap; below this they are refused.
inline constexpr Real kOverlapTol = 1e-10;
/// Completeness residual allowed for a "complete" final family.
inline constexpr Real kCompletenessTol = 1e-10;
/// Basis members with |<f|i>| at or below this carry weight <= 1e-24 and are
/// skipped when averaging.
inline constexpr Real kAverageSkipTol = 1e-12;

enum class FieldKind { Density, EnergyDensity, MomentumDensity, Current, Residual };

inline const char* field_kind_name(FieldKind kind) {
    switch (kind) {
        case FieldKind::Density: return "density";
        case FieldKind::EnergyDensity: return "energy_density";
        case FieldKind::MomentumDensity: return "momentum_density";
        case FieldKind::Current: return "current";
        case FieldKind::Residual: return "residual";
    }
    return "unknown";
}

/// Real-valued spatial field of a weak density. May be negative; min_value()
/// makes the negativity easy to report.
struct WeakField {
    Grid1D grid;
    VecR values;
    FieldKind kind = FieldKind::Density;
    Real t = 0.0;

    Real min_value() const { return values.minCoeff(); }
    Index min_index() const {
        Index at = 0;
        values.minCoeff(&at);
        return at;
    }
};

// ---------------------------------------------------------------------------
// Discrete two-state vector

/// |i> anchored at t_i evolving forward, |f> anchored at t_f evolving
/// backward, both under the same finite-dimensional Hamiltonian.
class TwoStateVec {
  public:
    TwoStateVec(StateVec initial, StateVec final_state, const Op& h, Real t_i, Real t_f)
        : initial_(std::move(initial)), final_(std::move(final_state)), t_i_(t_i), t_f_(t_f) {
        if (!(t_i <= t_f)) throw Error("TwoStateVec: need t_i <= t_f");
        if (!is_normalized(initial_) || !is_normalized(final_))
            throw Error("TwoStateVec: boundary states must be normalized");
        if (!h.hermitian || !is_hermitian(h.entries))
            throw NonHermitian("TwoStateVec: Hamiltonian");
        if (h.dim() != initial_.dim() || h.dim() != final_.dim())
            throw DimMismatch("TwoStateVec: boundary state and Hamiltonian dimensions");
        Eigen::SelfAdjointEigenSolver<MatC> es(h.entries);
        if (es.info() != Eigen::Success) throw Error("TwoStateVec: eigensolver failed");
        evals_ = es.eigenvalues();
        evecs_ = es.eigenvectors();
    }

    Real t_i() const { return t_i_; }
    Real t_f() const { return t_f_; }
    Index dim() const { return initial_.dim(); }

    /// |i(t)> = exp(-i H (t - t_i)) |i>.
    StateVec forward_at(Real t) const { return propagate(initial_, t - t_i_); }

    /// |f(t)> = exp(-i H (t - t_f)) |f>.
    StateVec backward_at(Real t) const { return propagate(final_, t - t_f_); }

    Complex overlap_at(Real t) const {
        check_time(t);
        return inner(backward_at(t), forward_at(t));
    }

  private:
    void check_time(Real t) const {
        if (t < t_i_ - 1e-12 || t > t_f_ + 1e-12)
            throw Error("time " + fmt_real(t) + " outside [" + fmt_real(t_i_) + ", " +
                        fmt_real(t_f_) + "]");
    }

    StateVec propagate(const StateVec& s, Real dt) const {
        const VecC phases =
            (Complex(0.0, -1.0) * dt * evals_.array().cast<Complex>()).exp().matrix();
        return StateVec(evecs_ * (phases.asDiagonal() * (evecs_.adjoint() * s.amps)));
    }

    friend Real weak_value(const TwoStateVec&, const Op&, Real);

    StateVec initial_, final_;
    Real t_i_, t_f_;
    VecR evals_;
    MatC evecs_;
};

/// Re[ <f(t)|A|i(t)> / <f(t)|i(t)> ]; the real part is what a pointer reads.
inline Real weak_value(const TwoStateVec& tsv, const Op& a, Real t) {
    tsv.check_time(t);
    const StateVec fwd = tsv.forward_at(t);
    const StateVec bwd = tsv.backward_at(t);
    const Complex overlap = inner(bwd, fwd);
    if (std::abs(overlap) <= kOverlapTol)
        throw PostSelectionSingular("overlap magnitude " + fmt_real(std::abs(overlap)));
    return (inner(bwd, apply(a, fwd)) / overlap).real();
}

/// Born-weighted average of weak values over a complete orthonormal final
/// family (columns of final_basis, anchored at t_f): sum_k |<f_k|i>|^2 w_k.
/// Members with negligible overlap are skipped; summation runs in column
/// order for bit-stable results.
inline Real average_over_final(const StateVec& i, const MatC& final_basis, const Op& a,
                               const Op& h, Real t_i, Real t_f, Real t) {
    const Index d = i.dim();
    if (final_basis.rows() != d) throw DimMismatch("average_over_final: basis row count");
    const Real residual =
        (final_basis * final_basis.adjoint() - MatC::Identity(d, d)).cwiseAbs().maxCoeff();
    if (final_basis.cols() != d || residual > kCompletenessTol)
        throw IncompleteBasis("resolution-of-identity residual " + fmt_real(residual));

    Real acc = 0.0;
    for (Index k = 0; k < final_basis.cols(); ++k) {
        const TwoStateVec tsv(i, StateVec(VecC(final_basis.col(k))), h, t_i, t_f);
        const Complex overlap = tsv.overlap_at(t);
        if (std::abs(overlap) <= kAverageSkipTol) continue;
        acc += std::norm(overlap) * weak_value(tsv, a, t);
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Grid two-state vector
//
// Snapshots of both boundary waves on the shared time lattice
// t_s = t_i + s*dt, s = 0..n_steps. Times passed to the field operations are
// snapped to the nearest lattice point.

class TwoStateWave {
  public:
    TwoStateWave(const Wave1P& initial, const Wave1P& final_state, Hamiltonian1D h, Real dt)
        : grid_(initial.grid), h_(std::move(h)), t_i_(initial.t), t_f_(final_state.t), dt_(dt) {
        if (!(final_state.grid == grid_))
            throw DimMismatch("TwoStateWave: boundary waves on different grids");
        if (!(t_i_ <= t_f_)) throw Error("TwoStateWave: need initial.t <= final.t");
        if (!is_normalized(initial) || !is_normalized(final_state))
            throw Error("TwoStateWave: boundary waves must be normalized");
        if (!(dt_ > 0.0)) throw Error("TwoStateWave: dt must be positive");

        const Real span = t_f_ - t_i_;
        const Real steps_real = span / dt_;
        n_steps_ = static_cast<Index>(std::llround(steps_real));
        if (std::abs(steps_real - static_cast<Real>(n_steps_)) > 1e-6)
            throw Error("TwoStateWave: interval is not an integer number of dt steps");

        fwd_.resize(static_cast<size_t>(n_steps_) + 1);
        bwd_.resize(static_cast<size_t>(n_steps_) + 1);
        fwd_[0] = initial.amps;
        bwd_[static_cast<size_t>(n_steps_)] = final_state.amps;
        if (n_steps_ > 0) {
            const CnStepper stepper(h_, grid_, dt_);
            for (Index s = 1; s <= n_steps_; ++s)
                fwd_[static_cast<size_t>(s)] = stepper.forward(fwd_[static_cast<size_t>(s - 1)]);
            for (Index s = n_steps_ - 1; s >= 0; --s)
                bwd_[static_cast<size_t>(s)] = stepper.backward(bwd_[static_cast<size_t>(s + 1)]);
        }
    }

    const Grid1D& grid() const { return grid_; }
    const Hamiltonian1D& hamiltonian() const { return h_; }
    Real t_i() const { return t_i_; }
    Real t_f() const { return t_f_; }
    Real dt() const { return dt_; }
    Index n_steps() const { return n_steps_; }

    Index index_of(Real t) const {
        const Index s = static_cast<Index>(std::llround((t - t_i_) / dt_));
        if (s < 0 || s > n_steps_)
            throw Error("time " + fmt_real(t) + " outside [" + fmt_real(t_i_) + ", " +
                        fmt_real(t_f_) + "]");
        return s;
    }

    Real time_at(Index s) const { return t_i_ + static_cast<Real>(s) * dt_; }

    const VecC& forward_at(Index s) const { return fwd_.at(static_cast<size_t>(s)); }
    const VecC& backward_at(Index s) const { return bwd_.at(static_cast<size_t>(s)); }

    Complex overlap_at(Index s) const {
        return backward_at(s).dot(forward_at(s)) * grid_.dx;
    }

  private:
    Grid1D grid_;
    Hamiltonian1D h_;
    Real t_i_, t_f_, dt_;
    Index n_steps_ = 0;
    std::vector<VecC> fwd_;
    std::vector<VecC> bwd_;
};

namespace detail {

/// Half-cell flux between nodes k and k+1 of the two-state current,
/// F_{k+1/2} = Re[(i/(2 m dx)) (phi*_{k+1} psi_k - phi*_k psi_{k+1}) / c].
/// Node currents are the mean of the two adjacent fluxes; with Dirichlet
/// ghosts this pairing satisfies the semi-discrete continuity equation.
inline VecR node_current(const VecC& phi, const VecC& psi, Real mass, Real dx, Complex overlap) {
    const Index n = psi.size();
    const Complex scale = Complex(0.0, 1.0) / (2.0 * mass * dx * overlap);
    VecR flux(n + 1);  // flux[k] = F_{k-1/2}; walls carry zero flux
    flux[0] = 0.0;
    flux[n] = 0.0;
    for (Index k = 0; k + 1 < n; ++k)
        flux[k + 1] =
            (scale * (std::conj(phi[k + 1]) * psi[k] - std::conj(phi[k]) * psi[k + 1])).real();
    VecR j(n);
    for (Index k = 0; k < n; ++k) j[k] = 0.5 * (flux[k] + flux[k + 1]);
    return j;
}

inline VecR weak_field_values(const VecC& phi, const VecC& psi, const Hamiltonian1D& h,
                              const Grid1D& grid, FieldKind kind, Complex overlap) {
    switch (kind) {
        case FieldKind::Density:
            return ((phi.conjugate().cwiseProduct(psi)) / overlap).real();
        case FieldKind::EnergyDensity: {
            const VecC hpsi = apply_hamiltonian(h, grid, psi);
            return ((phi.conjugate().cwiseProduct(hpsi)) / overlap).real();
        }
        case FieldKind::MomentumDensity: {
            const VecC dpsi = centered_diff(psi, grid.dx);
            return ((phi.conjugate().cwiseProduct(dpsi)) * (-kI) / overlap).real();
        }
        case FieldKind::Current:
            return node_current(phi, psi, h.mass, grid.dx, overlap);
        case FieldKind::Residual:
            break;
    }
    throw Error("weak_field_values: kind " + std::string(field_kind_name(kind)) +
                " is not directly computable");
}

}  // namespace detail

/// Pointwise weak density Re[phi*(x) (D psi)(x) / <f|i>] of the chosen kind.
inline WeakField weak_density(const TwoStateWave& tsw, FieldKind kind, Real t) {
    const Index s = tsw.index_of(t);
    const Complex overlap = tsw.overlap_at(s);
    if (std::abs(overlap) <= kOverlapTol)
        throw PostSelectionSingular("overlap magnitude " + fmt_real(std::abs(overlap)));
    WeakField field;
    field.grid = tsw.grid();
    field.kind = kind;
    field.t = tsw.time_at(s);
    field.values = detail::weak_field_values(tsw.backward_at(s), tsw.forward_at(s),
                                             tsw.hamiltonian(), tsw.grid(), kind, overlap);
    return field;
}

/// Born-weighted average of weak fields over a complete final family given as
/// dx-normalized columns anchored at t_f. Collapses to the ordinary
/// single-state density of |i(t)>.
inline WeakField average_over_final(const Wave1P& initial, const MatC& final_modes,
                                    const Hamiltonian1D& h, Real t_f, Real dt, FieldKind kind,
                                    Real t) {
    const Grid1D& grid = initial.grid;
    if (final_modes.rows() != grid.n) throw DimMismatch("average_over_final: mode row count");
    const Real residual = (final_modes * final_modes.adjoint() * grid.dx -
                           MatC::Identity(grid.n, grid.n))
                              .cwiseAbs()
                              .maxCoeff();
    if (final_modes.cols() != grid.n || residual > kCompletenessTol)
        throw IncompleteBasis("resolution-of-identity residual " + fmt_real(residual));

    // One shared forward table; one backward sweep of the whole mode matrix.
    Wave1P probe;
    probe.grid = grid;
    probe.t = t_f;
    probe.amps = VecC(final_modes.col(0));
    // Normalize the probe only to satisfy the boundary contract; each mode is
    // dx-normalized already by the completeness requirement.
    const TwoStateWave base(initial, grid_normalized(probe), h, dt);
    const Index s = base.index_of(t);
    const Index back_steps = base.n_steps() - s;

    MatC modes_at_t = final_modes;
    if (back_steps > 0) {
        const CnStepper stepper(h, grid, dt);
        for (Index b = 0; b < back_steps; ++b)
            for (Index k = 0; k < modes_at_t.cols(); ++k) {
                const VecC col = modes_at_t.col(k);
                modes_at_t.col(k) = stepper.backward(col);
            }
    }

    const VecC& psi = base.forward_at(s);
    WeakField field;
    field.grid = grid;
    field.kind = kind;
    field.t = base.time_at(s);
    field.values = VecR::Zero(grid.n);
    for (Index k = 0; k < modes_at_t.cols(); ++k) {
        const VecC phi = modes_at_t.col(k);
        const Complex overlap = phi.dot(psi) * grid.dx;
        if (std::abs(overlap) <= kAverageSkipTol) continue;
        field.values +=
            std::norm(overlap) * detail::weak_field_values(phi, psi, h, grid, kind, overlap);
    }
    return field;
}

/// Discrete continuity residual at the lattice point nearest t:
/// [rho_w(t+dt_probe) - rho_w(t-dt_probe)] / (2 dt_probe) + centered d_x j_w(t).
inline WeakField continuity_residual(const TwoStateWave& tsw, Real t, Real dt_probe) {
    if (!(dt_probe > 0.0)) throw Error("continuity_residual: dt_probe must be positive");
    const Index s = tsw.index_of(t);
    const Grid1D& grid = tsw.grid();

    const CnStepper probe(tsw.hamiltonian(), grid, dt_probe);
    const VecC& psi0 = tsw.forward_at(s);
    const VecC& phi0 = tsw.backward_at(s);
    const Complex overlap = tsw.overlap_at(s);
    if (std::abs(overlap) <= kOverlapTol)
        throw PostSelectionSingular("overlap magnitude " + fmt_real(std::abs(overlap)));

    const VecC psi_plus = probe.forward(psi0), psi_minus = probe.backward(psi0);
    const VecC phi_plus = probe.forward(phi0), phi_minus = probe.backward(phi0);

    const VecR rho_plus =
        detail::weak_field_values(phi_plus, psi_plus, tsw.hamiltonian(), grid, FieldKind::Density,
                                  phi_plus.dot(psi_plus) * grid.dx);
    const VecR rho_minus =
        detail::weak_field_values(phi_minus, psi_minus, tsw.hamiltonian(), grid,
                                  FieldKind::Density, phi_minus.dot(psi_minus) * grid.dx);
    const VecR j = detail::node_current(phi0, psi0, tsw.hamiltonian().mass, grid.dx, overlap);

    WeakField field;
    field.grid = grid;
    field.kind = FieldKind::Residual;
    field.t = tsw.time_at(s);
    field.values.resize(grid.n);
    for (Index k = 0; k < grid.n; ++k) {
        const Real left = k > 0 ? j[k - 1] : 0.0;
        const Real right = k < grid.n - 1 ? j[k + 1] : 0.0;
        field.values[k] =
            (rho_plus[k] - rho_minus[k]) / (2.0 * dt_probe) + (right - left) / (2.0 * grid.dx);
    }
    return field;
}

}  // namespace retroq
