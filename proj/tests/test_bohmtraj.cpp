#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "retroq/bohmtraj.hpp"
#include "retroq/qgrid.hpp"

using namespace retroq;

namespace {

Wave1P evolved_copy(const Wave1P& w, const Hamiltonian1D& h, Real dt, Index steps) {
    return evolve(w, h, dt, steps, Direction::Forward);
}

}  // namespace

TEST_CASE("stationary state with f = i has zero velocity everywhere") {
    const Grid1D grid(-8.0, 0.05, 321);
    const Hamiltonian1D h = harmonic_hamiltonian(grid, 1.0, 1.0);
    const GridEigenbasis basis = grid_eigenbasis(h, grid);

    Wave1P ground;
    ground.grid = grid;
    ground.t = 0.0;
    ground.amps = basis.modes.col(0);

    const Real dt = 0.01;
    const Index steps = 80;
    const TwoStateWave tsw(ground, evolved_copy(ground, h, dt, steps), h, dt);
    const FlowField flow(tsw);

    for (Real x : {-1.2, -0.4, 0.0, 0.3, 1.1}) {
        for (Real t : {0.0, 0.31, 0.8}) {
            CHECK(std::abs(weak_velocity(flow, x, t)) < 1e-10);
        }
    }
}

TEST_CASE("f = i velocity equals the standard current over the density") {
    const Grid1D grid(-9.0, 0.03, 601);
    const Hamiltonian1D h = free_hamiltonian(grid, 1.0);
    const Wave1P packet = make_gaussian(grid, 0.0, 0.5, 1.0);
    const Real dt = 0.01;
    const Index steps = 40;
    const TwoStateWave tsw(packet, evolved_copy(packet, h, dt, steps), h, dt);
    const FlowField flow(tsw);

    // At f = i the weak flow must be the ordinary one: j = Re[psi* (-i/m) D psi],
    // rho = |psi|^2, evaluated from the same cached snapshots.
    const Index s = tsw.index_of(0.2);
    const VecC& psi = tsw.forward_at(s);
    const VecC dpsi = centered_diff(psi, grid.dx);
    const VecR j_std = (psi.conjugate().cwiseProduct(Complex(0.0, -1.0) * dpsi)).real();
    const VecR rho_std = psi.cwiseAbs2();
    for (Index k = 150; k < 450; k += 37) {
        if (rho_std[k] < 1e-6) continue;
        const Real v_std = j_std[k] / rho_std[k];
        const Real v_flow = weak_velocity(flow, grid.point(k), 0.2);
        CHECK(std::abs(v_flow - v_std) < 1e-10);
    }
}

TEST_CASE("free packet velocity at the center is p0 / m") {
    const Grid1D grid(-9.0, 0.02, 901);
    const Real p0 = 0.5, mass = 1.0;
    const Hamiltonian1D h = free_hamiltonian(grid, mass);
    const Wave1P packet = make_gaussian(grid, 0.0, p0, 1.0);
    const Real dt = 0.02;
    const TwoStateWave tsw(packet, evolved_copy(packet, h, dt, 5), h, dt);
    const FlowField flow(tsw);
    CHECK(std::abs(weak_velocity(flow, 0.0, 0.0) - p0 / mass) < 1e-4);
}

TEST_CASE("interpolated fields satisfy a finite-difference continuity budget") {
    const Grid1D grid = Grid1D::over(-10.0, 10.0, 401);
    const Hamiltonian1D h = free_hamiltonian(grid, 1.0);
    const Wave1P i_wave = make_gaussian(grid, -1.0, 0.8, 1.0);
    Wave1P f_wave = make_gaussian(grid, 0.6, 0.2, 1.05);
    f_wave.t = 0.6;
    const Real dt = 0.005;
    const TwoStateWave tsw(i_wave, f_wave, h, dt);
    const FlowField flow(tsw);

    // d_t rho + d_x j ~ 0, probed at interior nodes and lattice times through
    // the interpolating accessors. Field scale: max |rho| / total span.
    Real max_resid = 0.0, max_rho = 0.0;
    for (Index k = 40; k < grid.n - 40; k += 7) {
        const Real x = grid.point(k);
        for (Real t : {0.1, 0.3, 0.5}) {
            const Real dt_rho =
                (flow.rho_at(x, t + dt) - flow.rho_at(x, t - dt)) / (2.0 * dt);
            const Real dx_j =
                (flow.current_at(x + grid.dx, t) - flow.current_at(x - grid.dx, t)) /
                (2.0 * grid.dx);
            max_resid = std::max(max_resid, std::abs(dt_rho + dx_j));
            max_rho = std::max(max_rho, std::abs(flow.rho_at(x, t)));
        }
    }
    CHECK(max_resid < 1e-2 * max_rho / 0.6);
}

TEST_CASE("zero-velocity trajectory stays put") {
    const Grid1D grid(-8.0, 0.05, 321);
    const Hamiltonian1D h = harmonic_hamiltonian(grid, 1.0, 1.0);
    const GridEigenbasis basis = grid_eigenbasis(h, grid);
    Wave1P ground;
    ground.grid = grid;
    ground.t = 0.0;
    ground.amps = basis.modes.col(0);
    const Real dt = 0.01;
    const TwoStateWave tsw(ground, evolved_copy(ground, h, dt, 100), h, dt);
    const FlowField flow(tsw);

    const Trajectory tr = integrate_trajectory(flow, 0.4, 0.02);
    CHECK_FALSE(tr.singular_encountered);
    CHECK(tr.times[0] == doctest::Approx(0.0));
    CHECK(tr.times[tr.times.size() - 1] == doctest::Approx(1.0));
    for (Index k = 0; k < tr.positions.size(); ++k) {
        CHECK(std::abs(tr.positions[k] - 0.4) < 1e-9);
        CHECK(tr.times[k] == doctest::Approx(0.02 * static_cast<Real>(k)).epsilon(1e-12));
    }
}

TEST_CASE("trajectory rides the packet center") {
    const Grid1D grid(-9.0, 0.02, 901);
    const Real p0 = 0.5;
    const Hamiltonian1D h = free_hamiltonian(grid, 1.0);
    const Wave1P packet = make_gaussian(grid, 0.0, p0, 1.0);
    const Real dt = 0.01;
    const Index steps = 100;
    const TwoStateWave tsw(packet, evolved_copy(packet, h, dt, steps), h, dt);
    const FlowField flow(tsw);

    const Trajectory tr = integrate_trajectory(flow, 0.0, 0.01);
    CHECK_FALSE(tr.singular_encountered);
    const Real x_end = tr.positions[tr.positions.size() - 1];
    CHECK(std::abs(x_end - p0 * 1.0) < 1e-3);
    // Linear time interpolation between samples.
    const Real x_mid = trajectory_position(tr, 0.505);
    CHECK(std::abs(x_mid - p0 * 0.505) < 1e-3);
}

TEST_CASE("trajectories never cross") {
    const Grid1D grid(-9.0, 0.03, 601);
    const Hamiltonian1D h = free_hamiltonian(grid, 1.0);
    const Wave1P packet = make_gaussian(grid, 0.0, 0.4, 1.0);
    const Real dt = 0.01;
    const TwoStateWave tsw(packet, evolved_copy(packet, h, dt, 150), h, dt);
    const FlowField flow(tsw);

    const Trajectory lo = integrate_trajectory(flow, -0.5, 0.01);
    const Trajectory hi = integrate_trajectory(flow, 0.5, 0.01);
    Real min_sep = 1e30;
    for (Index k = 0; k < lo.positions.size(); ++k)
        min_sep = std::min(min_sep, hi.positions[k] - lo.positions[k]);
    CHECK(min_sep > 0.0);
    // Spreading packet: ordering preserved and separation grows.
    CHECK(hi.positions[hi.positions.size() - 1] - lo.positions[lo.positions.size() - 1] >=
          1.0 - 1e-6);
}

TEST_CASE("trajectory holds and flags on a density node") {
    const Grid1D grid(-8.0, 0.05, 321);
    const Hamiltonian1D h = harmonic_hamiltonian(grid, 1.0, 1.0);
    const GridEigenbasis basis = grid_eigenbasis(h, grid);
    Wave1P ground;
    ground.grid = grid;
    ground.t = 0.0;
    ground.amps = basis.modes.col(0);
    const Real dt = 0.01;
    const TwoStateWave tsw(ground, evolved_copy(ground, h, dt, 50), h, dt);
    const FlowField flow(tsw);

    // Far in the tail the density is below the singular tolerance.
    const Trajectory tr = integrate_trajectory(flow, -7.8, 0.05);
    CHECK(tr.singular_encountered);
    for (Index k = 0; k < tr.positions.size(); ++k)
        CHECK(tr.positions[k] == doctest::Approx(-7.8));
    CHECK(tr.singular[1] == 1);
}

TEST_CASE("launch sampler draws only from positive-mass cells") {
    const Grid1D grid(0.0, 1.0, 8);
    VecR density(8);
    density << 0.0, -3.0, 2.0, 0.0, -1.0, 0.0, 1.0, -2.0;
    Rng rng(5);
    for (int i = 0; i < 2000; ++i) {
        const Real x = detail::sample_node_density(density, grid, rng);
        const bool near2 = std::abs(x - 2.0) <= 0.5;
        const bool near6 = std::abs(x - 6.0) <= 0.5;
        CHECK((near2 || near6));
    }
}

TEST_CASE("ensemble reproduces Born statistics when f tracks i") {
    const Grid1D grid = Grid1D::over(-10.0, 10.0, 321);
    const Hamiltonian1D h = free_hamiltonian(grid, 1.0);
    const Wave1P packet = make_gaussian(grid, -1.0, 0.8, 1.0);
    const Real t_f = 1.0, field_dt = 0.02;
    const Wave1P at_tf = evolved_copy(packet, h, field_dt, 50);
    const MatC modes = basis_containing(at_tf.amps, grid);

    EnsembleSpec spec;
    spec.n_traj = 10000;
    spec.start = StartMode::WeakPositive;
    spec.traj_dt = 0.02;
    spec.seed = 91;

    const EnsembleReport report =
        ensemble_density(spec, packet, modes, h, t_f, field_dt, t_f);
    CHECK(report.p_value > 0.01);
    CHECK(report.neg_mass_fraction < 1e-10);
    CHECK(report.observed.sum() == doctest::Approx(10000.0));
    CHECK(report.expected.sum() == doctest::Approx(10000.0).epsilon(1e-6));
    CHECK(report.dof >= 5);
}

TEST_CASE("stationary ensemble matches the Born density at every bin") {
    const Grid1D grid(-8.0, 0.05, 321);
    const Hamiltonian1D h = harmonic_hamiltonian(grid, 1.0, 1.0);
    const GridEigenbasis eig = grid_eigenbasis(h, grid);
    Wave1P ground;
    ground.grid = grid;
    ground.t = 0.0;
    ground.amps = eig.modes.col(0);
    const Real t_f = 0.5, field_dt = 0.01;
    const Wave1P at_tf = evolved_copy(ground, h, field_dt, 50);
    const MatC modes = basis_containing(at_tf.amps, grid);

    EnsembleSpec spec;
    spec.n_traj = 10000;
    spec.start = StartMode::WeakPositive;
    spec.traj_dt = 0.02;
    spec.seed = 7;

    const EnsembleReport report =
        ensemble_density(spec, ground, modes, h, t_f, field_dt, 0.25);
    CHECK(report.p_value > 0.01);
    // Frozen trajectories: the histogram is a plain multinomial draw, so every
    // merged bin should sit within 3 sigma of its expectation.
    for (Index b = 0; b < report.observed.size(); ++b) {
        const Real e = report.expected[b];
        CHECK(std::abs(report.observed[b] - e) <= 3.5 * std::sqrt(e));
    }
}

TEST_CASE("two-mode box superposition stays Born-distributed through transport") {
    // Initial state (m0 + 0.3i m1)/sqrt(1.09) resolved against the full box
    // eigenbasis. The quadrature phase makes every launch density non-negative
    // at t_i, and the dominant mode keeps both contributing conditional flows
    // sign-definite over the span, which is exactly the regime where
    // positive-part launching is an unbiased sampler of the aggregate.
    const Grid1D grid = Grid1D::over(-4.0, 4.0, 161);
    const Hamiltonian1D h = free_hamiltonian(grid, 1.0);
    const GridEigenbasis eig = grid_eigenbasis(h, grid);
    const Real de = eig.energies[1] - eig.energies[0];
    const Real t_probe = std::asin(0.1) / de;
    const Index n_field = static_cast<Index>(std::lround(t_probe / 0.02));
    const Real dt = t_probe / static_cast<Real>(n_field);

    Wave1P initial;
    initial.grid = grid;
    initial.t = 0.0;
    initial.amps = (eig.modes.col(0) + kI * 0.3 * eig.modes.col(1)) / std::sqrt(1.09);

    EnsembleSpec spec;
    spec.n_traj = 10000;
    spec.start = StartMode::WeakPositive;
    spec.traj_dt = dt;
    spec.seed = 20260816;

    const EnsembleReport report =
        ensemble_density(spec, initial, eig.modes, h, t_probe, dt, t_probe, 24);
    CHECK(report.p_value > 0.01);
    CHECK(report.neg_mass_fraction < 1e-12);
    CHECK(report.observed.sum() == doctest::Approx(10000.0));
    CHECK(report.dof >= 10);
}

TEST_CASE("positive-part launch bias is visible for a strongly mixed basis") {
    // A spreading packet resolved against the box eigenbasis leaves every
    // contributing mode with interior sign structure inside the packet, so the
    // positive-part rule excludes a fixed fraction of the weak mass and the
    // transported histogram drifts measurably off the Born curve. Pin the
    // magnitude so a change in the launch rule shows up here.
    const Grid1D grid = Grid1D::over(-10.0, 10.0, 321);
    const Hamiltonian1D h = free_hamiltonian(grid, 1.0);
    const GridEigenbasis eig = grid_eigenbasis(h, grid);
    const Wave1P packet = make_gaussian(grid, 0.0, 0.0, 0.7);

    EnsembleSpec spec;
    spec.n_traj = 5000;
    spec.start = StartMode::WeakPositive;
    spec.traj_dt = 0.025;
    spec.seed = 1234;

    const EnsembleReport report =
        ensemble_density(spec, packet, eig.modes, h, 1.5, 0.025, 1.5);
    CHECK(report.neg_mass_fraction > 0.02);
    CHECK(report.neg_mass_fraction < 0.05);
    CHECK(report.p_value < 1e-4);
}

TEST_CASE("ensemble in Born start mode also reproduces the density") {
    const Grid1D grid = Grid1D::over(-10.0, 10.0, 321);
    const Hamiltonian1D h = free_hamiltonian(grid, 1.0);
    const Wave1P packet = make_gaussian(grid, -1.0, 0.8, 1.0);
    const Wave1P at_tf = evolved_copy(packet, h, 0.02, 50);
    const MatC modes = basis_containing(at_tf.amps, grid);

    EnsembleSpec spec;
    spec.n_traj = 10000;
    spec.start = StartMode::BornDensity;
    spec.traj_dt = 0.02;
    spec.seed = 4321;

    const EnsembleReport report = ensemble_density(spec, packet, modes, h, 1.0, 0.02, 1.0);
    CHECK(report.p_value > 0.01);
    CHECK(report.neg_mass_fraction == 0.0);
}

TEST_CASE("ensemble is deterministic for a fixed seed") {
    const Grid1D grid = Grid1D::over(-10.0, 10.0, 321);
    const Hamiltonian1D h = free_hamiltonian(grid, 1.0);
    const Wave1P packet = make_gaussian(grid, -1.0, 0.8, 1.0);
    const Wave1P at_tf = evolved_copy(packet, h, 0.02, 50);
    const MatC modes = basis_containing(at_tf.amps, grid);

    EnsembleSpec spec;
    spec.n_traj = 400;
    spec.traj_dt = 0.05;
    spec.seed = 99;

    const EnsembleReport r1 = ensemble_density(spec, packet, modes, h, 1.0, 0.02, 1.0);
    const EnsembleReport r2 = ensemble_density(spec, packet, modes, h, 1.0, 0.02, 1.0);
    CHECK(r1.chi2 == r2.chi2);
    CHECK((r1.observed - r2.observed).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("ensemble validation") {
    const Grid1D grid = Grid1D::over(-10.0, 10.0, 321);
    const Hamiltonian1D h = free_hamiltonian(grid, 1.0);
    const Wave1P packet = make_gaussian(grid, -1.0, 0.0, 1.0);
    const GridEigenbasis eig = grid_eigenbasis(h, grid);

    EnsembleSpec spec;
    spec.n_traj = 100;
    spec.traj_dt = 0.05;
    spec.seed = 1;

    MatC truncated = eig.modes.leftCols(grid.n - 1);
    CHECK_THROWS_AS(ensemble_density(spec, packet, truncated, h, 1.0, 0.02, 1.0),
                    IncompleteBasis);
    MatC zeroed = eig.modes;
    zeroed.col(3).setZero();
    CHECK_THROWS_AS(ensemble_density(spec, packet, zeroed, h, 1.0, 0.02, 1.0), IncompleteBasis);

    EnsembleSpec bad = spec;
    bad.n_traj = 0;
    CHECK_THROWS_AS(ensemble_density(bad, packet, eig.modes, h, 1.0, 0.02, 1.0), Error);
    bad = spec;
    bad.traj_dt = 0.0;
    CHECK_THROWS_AS(ensemble_density(bad, packet, eig.modes, h, 1.0, 0.02, 1.0), Error);
    CHECK_THROWS_AS(ensemble_density(spec, packet, eig.modes, h, 1.0, 0.02, 2.0), Error);
}
