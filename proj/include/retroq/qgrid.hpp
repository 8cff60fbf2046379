#pragma once

#include <cmath>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "retroq/common.hpp"
#include "retroq/errors.hpp"

namespace retroq {

inline constexpr Real kGridNormTol = 1e-10;
inline constexpr Real kEdgeTol = 1e-8;

// ---------------------------------------------------------------------------
// Domain types

/// Uniform 1-D grid: x_k = x_min + k*dx, k = 0..n-1. Dirichlet walls sit one
/// cell outside both ends (psi = 0 at x_min - dx and x_min + n*dx).
struct Grid1D {
    Real x_min = 0.0;
    Real dx = 1.0;
    Index n = 0;

    Grid1D() = default;
    Grid1D(Real xmin, Real spacing, Index points) : x_min(xmin), dx(spacing), n(points) {
        if (n < 8) throw Error("Grid1D: need at least 8 points");
        if (!(dx > 0.0)) throw Error("Grid1D: dx must be positive");
    }

    static Grid1D over(Real xmin, Real xmax, Index points) {
        return Grid1D(xmin, (xmax - xmin) / static_cast<Real>(points - 1), points);
    }

    Real point(Index k) const { return x_min + static_cast<Real>(k) * dx; }
    Real x_max() const { return point(n - 1); }

    VecR points() const {
        return VecR::LinSpaced(n, x_min, x_max());
    }

    bool operator==(const Grid1D& o) const {
        return x_min == o.x_min && dx == o.dx && n == o.n;
    }
};

/// Single-particle wavefunction sampled on a grid. Units of length^(-1/2):
/// the discrete norm is sum |amps|^2 * dx.
struct Wave1P {
    Grid1D grid;
    VecC amps;
    Real t = 0.0;
};

/// Two-particle wavefunction; amps(j, k) lives at (x_a = grid_a.point(j),
/// x' = grid_b.point(k)). Units of length^(-1).
struct Wave2P {
    Grid1D grid_a;
    Grid1D grid_b;
    MatC amps;
    Real t = 0.0;
};

/// H = -(1/2m) d^2/dx^2 + V(x), discretized with the 3-point stencil.
struct Hamiltonian1D {
    Real mass = 1.0;
    VecR potential;

    Hamiltonian1D() = default;
    Hamiltonian1D(Real m, VecR v) : mass(m), potential(std::move(v)) {
        if (!(mass > 0.0)) throw Error("Hamiltonian1D: mass must be positive");
        if (!potential.allFinite()) throw Error("Hamiltonian1D: potential must be finite");
    }
};

inline Hamiltonian1D free_hamiltonian(const Grid1D& grid, Real mass) {
    return Hamiltonian1D(mass, VecR::Zero(grid.n));
}

inline Hamiltonian1D harmonic_hamiltonian(const Grid1D& grid, Real mass, Real omega,
                                          Real center = 0.0) {
    const VecR x = grid.points();
    return Hamiltonian1D(mass, 0.5 * mass * omega * omega * (x.array() - center).square().matrix());
}

enum class Direction { Forward, Backward };

// ---------------------------------------------------------------------------
// Quadrature helpers

inline Real grid_norm2(const Wave1P& w) { return w.amps.squaredNorm() * w.grid.dx; }
inline Real grid_norm(const Wave1P& w) { return std::sqrt(grid_norm2(w)); }
inline Real grid_norm2(const Wave2P& w) {
    return w.amps.squaredNorm() * w.grid_a.dx * w.grid_b.dx;
}
inline Real grid_norm(const Wave2P& w) { return std::sqrt(grid_norm2(w)); }

inline bool is_normalized(const Wave1P& w, Real tol = kGridNormTol) {
    return std::abs(grid_norm2(w) - 1.0) <= tol;
}
inline bool is_normalized(const Wave2P& w, Real tol = kGridNormTol) {
    return std::abs(grid_norm2(w) - 1.0) <= tol;
}

inline Real boundary_tail(const Wave1P& w) {
    return std::max(std::abs(w.amps[0]), std::abs(w.amps[w.grid.n - 1]));
}

inline Wave1P grid_normalized(Wave1P w) {
    const Real n = grid_norm(w);
    if (n <= 0.0) throw Error("cannot normalize a zero wave");
    w.amps /= n;
    return w;
}

inline Wave2P grid_normalized(Wave2P w) {
    const Real n = grid_norm(w);
    if (n <= 0.0) throw Error("cannot normalize a zero wave");
    w.amps /= n;
    return w;
}

/// <a|b> with the dx quadrature weight.
inline Complex grid_inner(const Wave1P& a, const Wave1P& b) {
    if (!(a.grid == b.grid)) throw DimMismatch("grid_inner: grids differ");
    return a.amps.dot(b.amps) * a.grid.dx;
}

/// |<a|b>|^2 / (|a|^2 |b|^2); phase-insensitive closeness of two waves.
inline Real fidelity(const Wave1P& a, const Wave1P& b) {
    const Complex ov = grid_inner(a, b);
    return std::norm(ov) / (grid_norm2(a) * grid_norm2(b));
}

inline Real fidelity(const Wave2P& a, const Wave2P& b) {
    const Complex ov = (a.amps.conjugate().cwiseProduct(b.amps)).sum() * a.grid_a.dx * a.grid_b.dx;
    return std::norm(ov) / (grid_norm2(a) * grid_norm2(b));
}

inline Real fidelity(const VecC& a, const VecC& b) {
    return std::norm(a.dot(b)) / (a.squaredNorm() * b.squaredNorm());
}

/// Centered first difference with Dirichlet ghosts.
inline VecC centered_diff(const VecC& psi, Real dx) {
    const Index n = psi.size();
    VecC d(n);
    d[0] = psi[1] / (2.0 * dx);
    for (Index k = 1; k < n - 1; ++k) d[k] = (psi[k + 1] - psi[k - 1]) / (2.0 * dx);
    d[n - 1] = -psi[n - 2] / (2.0 * dx);
    return d;
}

/// Tridiagonal action of H on a grid function (Dirichlet ghosts).
inline VecC apply_hamiltonian(const Hamiltonian1D& h, const Grid1D& grid, const VecC& psi) {
    const Index n = grid.n;
    const Real kin = 1.0 / (2.0 * h.mass * grid.dx * grid.dx);
    VecC out(n);
    for (Index k = 0; k < n; ++k) {
        const Complex left = k > 0 ? psi[k - 1] : Complex(0.0);
        const Complex right = k < n - 1 ? psi[k + 1] : Complex(0.0);
        out[k] = kin * (2.0 * psi[k] - left - right) + h.potential[k] * psi[k];
    }
    return out;
}

inline Real mean_x(const Wave1P& w) {
    const VecR x = w.grid.points();
    const VecR density = w.amps.cwiseAbs2();
    return (x.cwiseProduct(density)).sum() / density.sum();
}

inline Real var_x(const Wave1P& w) {
    const VecR x = w.grid.points();
    const VecR density = w.amps.cwiseAbs2();
    const Real total = density.sum();
    const Real mean = (x.cwiseProduct(density)).sum() / total;
    return ((x.array() - mean).square() * density.array()).sum() / total;
}

/// <p> by the centered-difference momentum operator -i d/dx.
inline Real mean_p(const Wave1P& w) {
    const VecC dpsi = centered_diff(w.amps, w.grid.dx);
    const Complex val = w.amps.dot(dpsi) * w.grid.dx;  // <psi| d/dx |psi>
    return (-kI * val).real() / grid_norm2(w);
}

inline Real mean_energy(const Wave1P& w, const Hamiltonian1D& h) {
    const VecC hpsi = apply_hamiltonian(h, w.grid, w.amps);
    return (w.amps.dot(hpsi) * w.grid.dx).real() / grid_norm2(w);
}

struct Correlation2P {
    Real mean_a = 0.0, mean_b = 0.0;
    Real var_a = 0.0, var_b = 0.0;
    Real cov = 0.0;
    Real coefficient = 0.0;
};

/// Position statistics of |psi(x, x')|^2 by quadrature.
inline Correlation2P correlation_xx(const Wave2P& w) {
    const VecR xa = w.grid_a.points();
    const VecR xb = w.grid_b.points();
    const MatR density = w.amps.cwiseAbs2();
    const Real total = density.sum();

    Correlation2P c;
    const VecR pa = density.rowwise().sum() / total;
    const VecR pb = density.colwise().sum().transpose() / total;
    c.mean_a = xa.dot(pa);
    c.mean_b = xb.dot(pb);
    c.var_a = (xa.array() - c.mean_a).square().matrix().dot(pa);
    c.var_b = (xb.array() - c.mean_b).square().matrix().dot(pb);
    c.cov = ((xa.array() - c.mean_a).matrix().asDiagonal() * density *
             (xb.array() - c.mean_b).matrix())
                .sum() /
            total;
    c.coefficient = c.cov / std::sqrt(c.var_a * c.var_b);
    return c;
}

// ---------------------------------------------------------------------------
// Wavepacket construction

/// Normalized Gaussian exp(-(x-x0)^2/(4 sigma^2) + i p0 x), grid-renormalized.
inline Wave1P make_gaussian(const Grid1D& grid, Real x0, Real p0, Real sigma) {
    if (!(sigma > 2.0 * grid.dx))
        throw PacketTooNarrow("sigma = " + fmt_real(sigma) + ", dx = " +
                              fmt_real(grid.dx));
    Wave1P w;
    w.grid = grid;
    w.amps.resize(grid.n);
    for (Index k = 0; k < grid.n; ++k) {
        const Real x = grid.point(k);
        const Real arg = (x - x0) * (x - x0) / (4.0 * sigma * sigma);
        w.amps[k] = std::exp(Complex(-arg, p0 * x));
    }
    w = grid_normalized(std::move(w));
    if (boundary_tail(w) > kEdgeTol)
        throw PacketTouchesBoundary("edge amplitude " + fmt_real(boundary_tail(w)));
    return w;
}

/// Normalized psi(x,x') ~ exp(-(x+x')^2/(4 s+^2)) exp(-(x-x')^2/(4 s-^2)) on a
/// shared grid. Equal widths give the (valid) product case.
inline Wave2P entangle_epr(const Grid1D& grid, Real sigma_plus, Real sigma_minus) {
    if (!(sigma_plus > 2.0 * grid.dx) || !(sigma_minus > 2.0 * grid.dx))
        throw PacketTooNarrow("sigma+ = " + fmt_real(sigma_plus) + ", sigma- = " +
                              fmt_real(sigma_minus) + ", dx = " + fmt_real(grid.dx));
    Wave2P w;
    w.grid_a = grid;
    w.grid_b = grid;
    w.amps.resize(grid.n, grid.n);
    for (Index j = 0; j < grid.n; ++j) {
        const Real xa = grid.point(j);
        for (Index k = 0; k < grid.n; ++k) {
            const Real xb = grid.point(k);
            const Real u = xa + xb;
            const Real v = xa - xb;
            w.amps(j, k) = std::exp(-u * u / (4.0 * sigma_plus * sigma_plus) -
                                    v * v / (4.0 * sigma_minus * sigma_minus));
        }
    }
    return grid_normalized(std::move(w));
}

// ---------------------------------------------------------------------------
// Crank-Nicolson propagation
//
// One step: solve (1 + i dt/2 H) psi' = (1 - i dt/2 H) psi. The backward step
// is the exact algebraic inverse (swap the roles of the two factors), so
// backward(forward(psi)) returns psi to solver tolerance.

class CnStepper {
  public:
    CnStepper(const Hamiltonian1D& h, const Grid1D& grid, Real dt) {
        if (h.potential.size() != grid.n)
            throw DimMismatch("CnStepper: potential length " +
                              std::to_string(h.potential.size()) + " vs grid n " +
                              std::to_string(grid.n));
        if (!(dt > 0.0)) throw Error("CnStepper: dt must be positive");

        const Index n = grid.n;
        const Real kin_off = -1.0 / (2.0 * h.mass * grid.dx * grid.dx);
        const VecR h_diag = VecR::Constant(n, -2.0 * kin_off) + h.potential;

        const Complex half = kI * (0.5 * dt);
        off_a_ = half * kin_off;
        off_b_ = -off_a_;
        diag_a_ = (half * h_diag.cast<Complex>().array() + 1.0).matrix();
        diag_b_ = ((-half) * h_diag.cast<Complex>().array() + 1.0).matrix();

        factorize(diag_a_, off_a_, cp_a_, inv_a_);
        factorize(diag_b_, off_b_, cp_b_, inv_b_);
    }

    /// psi(t + dt) from psi(t).
    VecC forward(const VecC& psi) const {
        return solve(diag_a_, off_a_, cp_a_, inv_a_, multiply(diag_b_, off_b_, psi));
    }

    /// psi(t - dt) from psi(t); exact inverse of forward().
    VecC backward(const VecC& psi) const {
        return solve(diag_b_, off_b_, cp_b_, inv_b_, multiply(diag_a_, off_a_, psi));
    }

  private:
    static VecC multiply(const VecC& diag, Complex off, const VecC& psi) {
        const Index n = psi.size();
        VecC out(n);
        out[0] = diag[0] * psi[0] + off * psi[1];
        for (Index k = 1; k < n - 1; ++k)
            out[k] = diag[k] * psi[k] + off * (psi[k - 1] + psi[k + 1]);
        out[n - 1] = diag[n - 1] * psi[n - 1] + off * psi[n - 2];
        return out;
    }

    // Thomas elimination with constant off-diagonal; pivots precomputed.
    static void factorize(const VecC& diag, Complex off, VecC& cp, VecC& inv_pivot) {
        const Index n = diag.size();
        cp.resize(n);
        inv_pivot.resize(n);
        Complex pivot = diag[0];
        for (Index k = 0;; ++k) {
            if (std::abs(pivot) < 1e-300)
                throw SolverFailure("pivot underflow at row " + std::to_string(k));
            inv_pivot[k] = 1.0 / pivot;
            cp[k] = off * inv_pivot[k];
            if (k + 1 == n) break;
            pivot = diag[k + 1] - off * cp[k];
        }
    }

    static VecC solve(const VecC&, Complex off, const VecC& cp, const VecC& inv_pivot,
                      const VecC& rhs) {
        const Index n = rhs.size();
        VecC x(n);
        x[0] = rhs[0] * inv_pivot[0];
        for (Index k = 1; k < n; ++k) x[k] = (rhs[k] - off * x[k - 1]) * inv_pivot[k];
        for (Index k = n - 2; k >= 0; --k) x[k] -= cp[k] * x[k + 1];
        return x;
    }

    Complex off_a_, off_b_;
    VecC diag_a_, diag_b_;
    VecC cp_a_, inv_a_, cp_b_, inv_b_;
};

inline Wave1P evolve(Wave1P w, const Hamiltonian1D& h, Real dt, Index steps,
                     Direction dir = Direction::Forward) {
    if (!(dt > 0.0)) throw Error("evolve: dt must be positive");
    if (steps < 0) throw Error("evolve: steps must be >= 0");
    if (steps == 0) return w;

    const CnStepper stepper(h, w.grid, dt);
    for (Index s = 0; s < steps; ++s)
        w.amps = dir == Direction::Forward ? stepper.forward(w.amps) : stepper.backward(w.amps);
    w.t += (dir == Direction::Forward ? 1.0 : -1.0) * static_cast<Real>(steps) * dt;
    return w;
}

/// Non-interacting two-particle step: H = H_a x 1 + 1 x H_b. The two factors
/// commute, so alternating the axis sweeps is splitting-error free.
inline Wave2P evolve2(Wave2P w, const Hamiltonian1D& h_a, const Hamiltonian1D& h_b, Real dt,
                      Index steps, Direction dir = Direction::Forward) {
    if (!(dt > 0.0)) throw Error("evolve2: dt must be positive");
    if (steps < 0) throw Error("evolve2: steps must be >= 0");
    if (steps == 0) return w;

    const CnStepper stepper_a(h_a, w.grid_a, dt);
    const CnStepper stepper_b(h_b, w.grid_b, dt);
    const Index na = w.grid_a.n, nb = w.grid_b.n;
    VecC tmp;
    for (Index s = 0; s < steps; ++s) {
        for (Index k = 0; k < nb; ++k) {
            tmp = w.amps.col(k);
            w.amps.col(k) =
                dir == Direction::Forward ? stepper_a.forward(tmp) : stepper_a.backward(tmp);
        }
        for (Index j = 0; j < na; ++j) {
            tmp = w.amps.row(j).transpose();
            w.amps.row(j) =
                (dir == Direction::Forward ? stepper_b.forward(tmp) : stepper_b.backward(tmp))
                    .transpose();
        }
    }
    w.t += (dir == Direction::Forward ? 1.0 : -1.0) * static_cast<Real>(steps) * dt;
    return w;
}

// ---------------------------------------------------------------------------
// Discrete eigenbasis of H (complete on the grid by construction)

struct GridEigenbasis {
    VecR energies;
    MatC modes;  // column k: k-th eigenfunction, normalized so sum|f|^2 dx = 1
};

inline GridEigenbasis grid_eigenbasis(const Hamiltonian1D& h, const Grid1D& grid) {
    if (h.potential.size() != grid.n) throw DimMismatch("grid_eigenbasis: potential vs grid");
    const Real kin = 1.0 / (2.0 * h.mass * grid.dx * grid.dx);
    MatR hm = MatR::Zero(grid.n, grid.n);
    for (Index k = 0; k < grid.n; ++k) {
        hm(k, k) = 2.0 * kin + h.potential[k];
        if (k > 0) hm(k, k - 1) = -kin;
        if (k < grid.n - 1) hm(k, k + 1) = -kin;
    }
    Eigen::SelfAdjointEigenSolver<MatR> es(hm);
    if (es.info() != Eigen::Success) throw Error("grid eigenbasis solve failed");
    GridEigenbasis basis;
    basis.energies = es.eigenvalues();
    basis.modes = (es.eigenvectors() / std::sqrt(grid.dx)).cast<Complex>();
    return basis;
}

/// Complete dx-normalized basis whose first column is the (normalized) state
/// itself; the remaining columns fill out the orthogonal complement. Useful as
/// a final family that tracks a given state exactly.
inline MatC basis_containing(const VecC& psi, const Grid1D& grid) {
    if (psi.size() != grid.n) throw DimMismatch("basis_containing: state vs grid");
    const Real norm = std::sqrt(psi.squaredNorm() * grid.dx);
    if (!(norm > 0.0)) throw Error("basis_containing: zero state");
    MatC a = MatC::Identity(grid.n, grid.n);
    a.col(0) = psi * (std::sqrt(grid.dx) / norm);
    Eigen::HouseholderQR<MatC> qr(a);
    MatC q = qr.householderQ();
    // Householder may flip the leading column's phase; pin it to the state.
    const Complex phase = q.col(0).dot(a.col(0));
    q.col(0) *= phase / std::abs(phase);
    return q / std::sqrt(grid.dx);
}

}  // namespace retroq
