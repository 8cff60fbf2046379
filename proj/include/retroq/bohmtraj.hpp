#pragma once

// Guided trajectories for the two-boundary wave pair: positions flow along
// v = j_w / rho_w, the weak current over the weak density. With the final
// boundary tied to the evolved initial wave this is the familiar pilot-wave
// velocity; with a genuinely different final boundary the flow transports the
// (possibly signed) weak density instead, and an ensemble launched from its
// positive part reproduces Born statistics up to the excluded negative mass,
// which is measured and reported rather than hidden.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "retroq/errors.hpp"
#include "retroq/qgrid.hpp"
#include "retroq/random.hpp"
#include "retroq/stats.hpp"
#include "retroq/tsvf.hpp"

namespace retroq {

/// |rho_w| at or below this is treated as a node of the guiding field.
constexpr Real kVelocitySingularTol = 1e-10;

/// Expected count per histogram bin required by the chi-square test.
constexpr Real kChiSquareMinExpected = 10.0;

// ---------------------------------------------------------------------------
// Flow field

/// Weak density and current tabulated over the whole propagation lattice of a
/// TwoStateWave, with linear interpolation in x and t for off-lattice queries.
/// This is the cached view trajectory integration runs against.
class FlowField {
  public:
    explicit FlowField(const TwoStateWave& tsw)
        : grid_(tsw.grid()),
          mass_(tsw.hamiltonian().mass),
          t_i_(tsw.t_i()),
          t_f_(tsw.t_f()),
          dt_(tsw.dt()) {
        const Index steps = tsw.n_steps();
        rho_.reserve(static_cast<std::size_t>(steps) + 1);
        cur_.reserve(static_cast<std::size_t>(steps) + 1);
        for (Index s = 0; s <= steps; ++s) {
            const Complex c = tsw.overlap_at(s);
            if (std::abs(c) <= kOverlapTol)
                throw PostSelectionSingular("flow field: boundary overlap " +
                                            fmt_real(std::abs(c)) + " at t = " +
                                            fmt_real(tsw.time_at(s)));
            const VecC& phi = tsw.backward_at(s);
            const VecC& psi = tsw.forward_at(s);
            rho_.push_back(
                detail::weak_field_values(phi, psi, tsw.hamiltonian(), grid_, FieldKind::Density, c));
            cur_.push_back(detail::node_current(phi, psi, mass_, grid_.dx, c));
        }
    }

    const Grid1D& grid() const { return grid_; }
    Real mass() const { return mass_; }
    Real t_i() const { return t_i_; }
    Real t_f() const { return t_f_; }

    /// Weak density at time-lattice step s (no interpolation).
    const VecR& rho_step(Index s) const { return rho_.at(static_cast<std::size_t>(s)); }

    Real rho_at(Real x, Real t) const { return interp(rho_, x, t); }
    Real current_at(Real x, Real t) const { return interp(cur_, x, t); }

    /// v = j_w / rho_w; throws VelocitySingular within kVelocitySingularTol of
    /// a node of the weak density.
    Real velocity(Real x, Real t) const {
        const Real rho = rho_at(x, t);
        if (std::abs(rho) <= kVelocitySingularTol)
            throw VelocitySingular("rho_w = " + fmt_real(rho) + " at x = " + fmt_real(x) +
                                   ", t = " + fmt_real(t));
        return current_at(x, t) / rho;
    }

  private:
    // Bilinear interpolation; Dirichlet: fields vanish one spacing outside the
    // grid, and beyond that the query is clamped to zero.
    Real interp(const std::vector<VecR>& table, Real x, Real t) const {
        Real s_real = (t - t_i_) / dt_;
        s_real = std::clamp(s_real, 0.0, static_cast<Real>(table.size()) - 1.0);
        const Index s0 = std::min(static_cast<Index>(s_real),
                                  static_cast<Index>(table.size()) - 2);
        const Real wt = s_real - static_cast<Real>(s0);
        return (1.0 - wt) * interp_x(table[static_cast<std::size_t>(s0)], x) +
               wt * interp_x(table[static_cast<std::size_t>(s0) + 1], x);
    }

    Real interp_x(const VecR& values, Real x) const {
        const Real k_real = (x - grid_.x_min) / grid_.dx;
        if (k_real <= -1.0 || k_real >= static_cast<Real>(grid_.n)) return 0.0;
        const Index k0 = static_cast<Index>(std::floor(k_real));
        const Real wx = k_real - static_cast<Real>(k0);
        const Real left = k0 >= 0 && k0 < grid_.n ? values[k0] : 0.0;
        const Real right = k0 + 1 >= 0 && k0 + 1 < grid_.n ? values[k0 + 1] : 0.0;
        return (1.0 - wx) * left + wx * right;
    }

    Grid1D grid_;
    Real mass_, t_i_, t_f_, dt_;
    std::vector<VecR> rho_, cur_;
};

/// Convenience wrapper matching the field definition directly.
inline Real weak_velocity(const FlowField& flow, Real x, Real t) { return flow.velocity(x, t); }

// ---------------------------------------------------------------------------
// Trajectories

struct Trajectory {
    VecR times;                  // strictly increasing, from t_i to t_f
    VecR positions;              // finite throughout
    std::vector<char> singular;  // per-sample: 1 if the step into it was held
    Index tsv_id = 0;            // which final mode guided this trajectory
    bool singular_encountered = false;
};

/// RK4 integration of dx/dt = v(x, t) from t_i to t_f. A step whose velocity
/// query lands on a density node holds the position and flags the sample
/// instead of aborting the trajectory.
inline Trajectory integrate_trajectory(const FlowField& flow, Real x0, Real traj_dt,
                                       Index tsv_id = 0) {
    if (!(traj_dt > 0.0)) throw Error("integrate_trajectory: traj_dt must be positive");
    const Grid1D& g = flow.grid();
    if (x0 < g.x_min || x0 > g.x_max())
        throw Error("integrate_trajectory: start " + fmt_real(x0) + " outside the grid");

    const Real span = flow.t_f() - flow.t_i();
    const Index n_steps = std::max<Index>(1, static_cast<Index>(std::ceil(span / traj_dt - 1e-9)));

    Trajectory tr;
    tr.tsv_id = tsv_id;
    tr.times.resize(n_steps + 1);
    tr.positions.resize(n_steps + 1);
    tr.singular.assign(static_cast<std::size_t>(n_steps) + 1, 0);
    tr.times[0] = flow.t_i();
    tr.positions[0] = x0;

    Real x = x0;
    for (Index k = 0; k < n_steps; ++k) {
        const Real t0 = tr.times[k];
        const Real t1 = k + 1 == n_steps ? flow.t_f() : flow.t_i() + static_cast<Real>(k + 1) * traj_dt;
        const Real h = t1 - t0;
        bool held = false;
        Real x_next = x;
        try {
            const Real k1 = flow.velocity(x, t0);
            const Real k2 = flow.velocity(x + 0.5 * h * k1, t0 + 0.5 * h);
            const Real k3 = flow.velocity(x + 0.5 * h * k2, t0 + 0.5 * h);
            const Real k4 = flow.velocity(x + h * k3, t1);
            x_next = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if (!std::isfinite(x_next)) {
                x_next = x;
                held = true;
            }
        } catch (const VelocitySingular&) {
            held = true;
        }
        x = x_next;
        tr.times[k + 1] = t1;
        tr.positions[k + 1] = x;
        if (held) {
            tr.singular[static_cast<std::size_t>(k) + 1] = 1;
            tr.singular_encountered = true;
        }
    }
    return tr;
}

/// Position at time t by linear interpolation between stored samples.
inline Real trajectory_position(const Trajectory& tr, Real t) {
    const Index n = tr.times.size();
    if (n == 0) throw Error("trajectory_position: empty trajectory");
    if (t <= tr.times[0]) return tr.positions[0];
    if (t >= tr.times[n - 1]) return tr.positions[n - 1];
    Index lo = 0, hi = n - 1;
    while (hi - lo > 1) {
        const Index mid = (lo + hi) / 2;
        (tr.times[mid] <= t ? lo : hi) = mid;
    }
    const Real w = (t - tr.times[lo]) / (tr.times[lo + 1] - tr.times[lo]);
    return (1.0 - w) * tr.positions[lo] + w * tr.positions[lo + 1];
}

// ---------------------------------------------------------------------------
// Ensembles

/// How a trajectory's launch position is drawn.
enum class StartMode {
    WeakPositive,  // positive part of rho_w(x, t_i) for the sampled final mode
    BornDensity,   // |psi(x, t_i)|^2, ignoring the final boundary
};

struct EnsembleSpec {
    Index n_traj = 1;
    StartMode start = StartMode::WeakPositive;
    Real traj_dt = 0.0;
    std::uint64_t seed = 0;
};

struct EnsembleReport {
    VecR bin_edges;  // merged histogram bins (size = bins + 1)
    VecR observed;   // trajectory counts per merged bin
    VecR expected;   // Born-rule counts per merged bin
    Real chi2 = 0.0;
    Index dof = 0;
    Real p_value = 0.0;
    Real neg_mass_fraction = 0.0;  // Born-weighted excluded negative weak mass
    Index n_singular = 0;          // trajectories that ever held on a node
};

namespace detail {

/// Draw one sample from a piecewise-constant density given on grid nodes
/// (negative entries are treated as zero mass).
inline Real sample_node_density(const VecR& density, const Grid1D& grid, Rng& rng) {
    VecR mass = density.cwiseMax(0.0);
    const Real total = mass.sum();
    if (!(total > 0.0)) throw Error("sample_node_density: no positive mass");
    Real u = uniform01(rng) * total;
    Index k = 0;
    for (; k < grid.n - 1; ++k) {
        if (u < mass[k]) break;
        u -= mass[k];
    }
    const Real frac = mass[k] > 0.0 ? u / mass[k] : 0.5;
    const Real x = grid.point(k) + (frac - 0.5) * grid.dx;
    return std::clamp(x, grid.x_min, grid.x_max());
}

}  // namespace detail

/// Launch spec.n_traj trajectories with final boundaries drawn from the Born
/// weights |<f_k|psi(t_f)>|^2 over a complete dx-normalized mode family, then
/// compare the position histogram at t_probe against |psi(x, t_probe)|^2 by a
/// chi-square test with bins merged to expected counts >= 10.
inline EnsembleReport ensemble_density(const EnsembleSpec& spec, const Wave1P& initial,
                                       const MatC& final_modes, const Hamiltonian1D& h, Real t_f,
                                       Real field_dt, Real t_probe, Index n_bins = 32) {
    const Grid1D& grid = initial.grid;
    if (spec.n_traj < 1) throw Error("ensemble_density: n_traj must be >= 1");
    if (!(spec.traj_dt > 0.0)) throw Error("ensemble_density: traj_dt must be positive");
    if (n_bins < 2) throw Error("ensemble_density: need at least 2 bins");
    if (!(t_probe >= initial.t && t_probe <= t_f))
        throw Error("ensemble_density: t_probe outside [t_i, t_f]");
    if (final_modes.rows() != grid.n) throw DimMismatch("ensemble_density: mode row count");
    const Real residual =
        (final_modes * final_modes.adjoint() * grid.dx - MatC::Identity(grid.n, grid.n))
            .cwiseAbs()
            .maxCoeff();
    if (final_modes.cols() != grid.n || residual > kCompletenessTol)
        throw IncompleteBasis("resolution-of-identity residual " + fmt_real(residual));

    // Forward table once; Born weights at the final time.
    Wave1P probe;
    probe.grid = grid;
    probe.t = t_f;
    probe.amps = VecC(final_modes.col(0));
    const TwoStateWave base(initial, grid_normalized(probe), h, field_dt);
    const VecC& psi_final = base.forward_at(base.n_steps());
    const VecC& psi_probe = base.forward_at(base.index_of(t_probe));

    VecR weights(final_modes.cols());
    for (Index k = 0; k < final_modes.cols(); ++k)
        weights[k] = std::norm(final_modes.col(k).dot(psi_final) * grid.dx);

    // Assign each trajectory a final mode; one derived substream per
    // trajectory keeps the ensemble independent of processing order.
    std::vector<std::vector<Index>> members(static_cast<std::size_t>(final_modes.cols()));
    for (Index j = 0; j < spec.n_traj; ++j) {
        Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(j)));
        Real u = uniform01(rng);
        Index pick = final_modes.cols() - 1;
        for (Index k = 0; k < final_modes.cols(); ++k) {
            if (u < weights[k]) {
                pick = k;
                break;
            }
            u -= weights[k];
        }
        members[static_cast<std::size_t>(pick)].push_back(j);
    }

    EnsembleReport report;
    VecR positions(spec.n_traj);
    const VecR born_start = base.forward_at(0).cwiseAbs2().real();

    for (Index k = 0; k < final_modes.cols(); ++k) {
        const bool sampled = !members[static_cast<std::size_t>(k)].empty();
        if (!sampled && weights[k] <= 1e-12) continue;

        Wave1P final_wave;
        final_wave.grid = grid;
        final_wave.t = t_f;
        final_wave.amps = VecC(final_modes.col(k));
        const TwoStateWave tsw(initial, final_wave, h, field_dt);
        const FlowField flow(tsw);

        const VecR& rho0 = flow.rho_step(0);
        const Real neg = (-rho0).cwiseMax(0.0).sum();
        const Real abs_total = rho0.cwiseAbs().sum();
        if (spec.start == StartMode::WeakPositive && abs_total > 0.0)
            report.neg_mass_fraction += weights[k] * neg / abs_total;

        for (const Index j : members[static_cast<std::size_t>(k)]) {
            Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(j)));
            uniform01(rng);  // skip the mode-pick draw
            const VecR& launch = spec.start == StartMode::WeakPositive ? rho0 : born_start;
            const Real x0 = detail::sample_node_density(launch, grid, rng);
            const Trajectory tr = integrate_trajectory(flow, x0, spec.traj_dt, k);
            positions[j] = trajectory_position(tr, t_probe);
            if (tr.singular_encountered) report.n_singular += 1;
        }
    }

    // Histogram against the Born density at t_probe, merging bins up to the
    // minimum expected count.
    const Real lo = grid.x_min, hi = grid.x_max();
    const Real width = (hi - lo) / static_cast<Real>(n_bins);
    VecR obs_raw = VecR::Zero(n_bins), exp_raw = VecR::Zero(n_bins);
    for (Index j = 0; j < spec.n_traj; ++j) {
        const Index b = std::clamp<Index>(
            static_cast<Index>((positions[j] - lo) / width), 0, n_bins - 1);
        obs_raw[b] += 1.0;
    }
    // Expected masses spread over each node's cell, mirroring how launch
    // positions are drawn, so bin edges cutting through cells stay unbiased.
    const VecR born_probe = psi_probe.cwiseAbs2().real() * grid.dx;
    for (Index node = 0; node < grid.n; ++node) {
        const Real mass = static_cast<Real>(spec.n_traj) * born_probe[node];
        const Real c_lo = std::max(grid.point(node) - 0.5 * grid.dx, lo);
        const Real c_hi = std::min(grid.point(node) + 0.5 * grid.dx, hi);
        const Index b_lo = std::clamp<Index>(static_cast<Index>((c_lo - lo) / width), 0, n_bins - 1);
        const Index b_hi = std::clamp<Index>(static_cast<Index>((c_hi - lo) / width), 0, n_bins - 1);
        if (b_lo == b_hi) {
            exp_raw[b_lo] += mass;
        } else {
            const Real edge = lo + static_cast<Real>(b_hi) * width;
            exp_raw[b_lo] += mass * (edge - c_lo) / (c_hi - c_lo);
            exp_raw[b_hi] += mass * (c_hi - edge) / (c_hi - c_lo);
        }
    }

    std::vector<Real> obs_m, exp_m, edges{lo};
    Real o_acc = 0.0, e_acc = 0.0;
    for (Index b = 0; b < n_bins; ++b) {
        o_acc += obs_raw[b];
        e_acc += exp_raw[b];
        if (e_acc >= kChiSquareMinExpected) {
            obs_m.push_back(o_acc);
            exp_m.push_back(e_acc);
            edges.push_back(lo + static_cast<Real>(b + 1) * width);
            o_acc = e_acc = 0.0;
        }
    }
    if (e_acc > 0.0 || o_acc > 0.0) {
        if (obs_m.empty()) throw InsufficientSamples("ensemble_density: too few expected counts");
        obs_m.back() += o_acc;
        exp_m.back() += e_acc;
        edges.back() = hi;
    }
    if (obs_m.size() < 2) throw InsufficientSamples("ensemble_density: fewer than 2 usable bins");

    const Index m = static_cast<Index>(obs_m.size());
    report.observed = Eigen::Map<VecR>(obs_m.data(), m);
    report.expected = Eigen::Map<VecR>(exp_m.data(), m);
    report.bin_edges = Eigen::Map<VecR>(edges.data(), m + 1);
    report.chi2 = ((report.observed - report.expected).cwiseAbs2().cwiseQuotient(report.expected)).sum();
    report.dof = m - 1;
    report.p_value = chi2_sf(report.chi2, static_cast<Real>(report.dof));
    return report;
}

}  // namespace retroq
