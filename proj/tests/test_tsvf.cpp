#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>

#include "retroq/random.hpp"
#include "retroq/tsvf.hpp"

#include "oracles.hpp"

using namespace retroq;

namespace {

Op zero_hamiltonian(Index dim) { return Op(MatC::Zero(dim, dim), true); }

/// Standard single-state densities computed independently of weak_density.
VecR standard_field(const VecC& psi, const Hamiltonian1D& h, const Grid1D& grid, FieldKind kind) {
    switch (kind) {
        case FieldKind::Density:
            return psi.cwiseAbs2();
        case FieldKind::EnergyDensity:
            return psi.conjugate().cwiseProduct(apply_hamiltonian(h, grid, psi)).real();
        case FieldKind::MomentumDensity:
            return (psi.conjugate().cwiseProduct(centered_diff(psi, grid.dx)) * (-kI)).real();
        case FieldKind::Current:
            return (psi.conjugate().cwiseProduct(centered_diff(psi, grid.dx)) * (-kI / h.mass))
                .real();
        case FieldKind::Residual:
            break;
    }
    throw Error("standard_field: unsupported kind");
}

}  // namespace

TEST_CASE("weak_value with matched boundaries is the ordinary expectation") {
    Rng rng(314u);
    const Op h = random_hermitian(4, rng);
    const StateVec i = random_state(4, rng);
    const Op a = random_hermitian(4, rng);

    // Final boundary = the initial state carried to t_f, so f(t) = i(t).
    const StateVec f = TwoStateVec(i, i, h, 0.0, 1.0).forward_at(1.0);
    const TwoStateVec tsv(i, f, h, 0.0, 1.0);

    for (Real t : {0.0, 0.35, 1.0}) {
        const StateVec at = tsv.forward_at(t);
        const Real expect = inner(at, apply(a, at)).real();
        CHECK(std::abs(weak_value(tsv, a, t) - expect) <= 1e-12);
    }
}

TEST_CASE("weak sigma_z between |0> and |+> is exactly one") {
    StateVec plus(VecC(2));
    plus.amps << 1.0, 1.0;
    plus = normalized(plus);
    const TwoStateVec tsv(basis_state(2, 0), plus, zero_hamiltonian(2), 0.0, 0.0);
    CHECK(std::abs(weak_value(tsv, pauli_z(), 0.0) - 1.0) <= 1e-12);
}

TEST_CASE("nearly orthogonal post-selection is refused") {
    const Real eps = 5e-11;
    VecC f(2);
    f << eps, std::sqrt(1.0 - eps * eps);
    const TwoStateVec tsv(basis_state(2, 0), StateVec(std::move(f)), zero_hamiltonian(2), 0.0,
                          0.0);
    CHECK_THROWS_AS(weak_value(tsv, pauli_z(), 0.0), PostSelectionSingular);
}

TEST_CASE("weak values can exceed the operator's spectral range") {
    // The classic amplification: post-select nearly orthogonal to |+>.
    // f = (1, -0.8)/|..| against i = |+> gives weak sigma_z = 1.8/0.2 = 9.
    VecC f(2);
    f << 1.0, -0.8;
    StateVec plus(VecC(2));
    plus.amps << 1.0, 1.0;
    plus = normalized(plus);
    const TwoStateVec tsv(plus, normalized(StateVec(std::move(f))), zero_hamiltonian(2), 0.0,
                          0.0);
    CHECK(std::abs(weak_value(tsv, pauli_z(), 0.0) - 9.0) <= 1e-9);
}

TEST_CASE("discrete overlap is constant across the interval") {
    Rng rng(2718u);
    const Op h = random_hermitian(5, rng);
    const TwoStateVec tsv(random_state(5, rng), random_state(5, rng), h, 0.0, 2.0);
    const Complex base = tsv.overlap_at(0.0);
    for (int k = 0; k <= 8; ++k) {
        const Real t = 2.0 * k / 8.0;
        CHECK(std::abs(tsv.overlap_at(t) - base) <= 1e-8);
    }
}

TEST_CASE("weak_value ignores global phases on either boundary") {
    Rng rng(4444u);
    const Op h = random_hermitian(3, rng);
    const Op a = random_hermitian(3, rng);
    const StateVec i = random_state(3, rng);
    const StateVec f = random_state(3, rng);

    const Real base = weak_value(TwoStateVec(i, f, h, 0.0, 1.0), a, 0.5);
    const StateVec i2(VecC(i.amps * std::exp(Complex(0.0, 0.9))));
    const StateVec f2(VecC(f.amps * std::exp(Complex(0.0, -2.3))));
    CHECK(std::abs(weak_value(TwoStateVec(i2, f2, h, 0.0, 1.0), a, 0.5) - base) <= 1e-12);
}

TEST_CASE("grid weak fields with matched boundaries reduce to the standard densities") {
    const Grid1D grid(-10.0, 0.05, 401);
    const Hamiltonian1D h = harmonic_hamiltonian(grid, 1.0, 1.0);
    const Wave1P i = make_gaussian(grid, 0.8, 0.4, 0.9);
    const Wave1P f = evolve(i, h, 0.01, 60);

    const TwoStateWave tsw(i, f, h, 0.01);
    const Real t = 0.3;
    const Index s = tsw.index_of(t);
    const VecC& psi = tsw.forward_at(s);

    for (FieldKind kind : {FieldKind::Density, FieldKind::EnergyDensity,
                           FieldKind::MomentumDensity, FieldKind::Current}) {
        const WeakField field = weak_density(tsw, kind, t);
        const VecR want = standard_field(psi, h, grid, kind);
        CHECK((field.values - want).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("transition density integrates to one") {
    const Grid1D grid(-12.0, 0.06, 401);
    const Hamiltonian1D h = free_hamiltonian(grid, 1.0);
    const Wave1P i = make_gaussian(grid, -1.0, 0.8, 1.0);
    const Wave1P f_seed = make_gaussian(grid, 1.0, 0.2, 1.3);
    Wave1P f = f_seed;
    f.t = 0.5;

    const TwoStateWave tsw(i, f, h, 0.005);
    const WeakField rho = weak_density(tsw, FieldKind::Density, 0.25);
    CHECK(std::abs(rho.values.sum() * grid.dx - 1.0) <= 1e-8);
}

TEST_CASE("oscillator ground state carries weak energy omega/2") {
    const Grid1D grid(-8.0, 0.04, 401);
    const Hamiltonian1D h = harmonic_hamiltonian(grid, 1.0, 1.0);
    const Wave1P ground = make_gaussian(grid, 0.0, 0.0, 1.0 / std::sqrt(2.0));

    const TwoStateWave tsw(ground, ground, h, 0.01);
    const WeakField e = weak_density(tsw, FieldKind::EnergyDensity, 0.0);
    CHECK(std::abs(e.values.sum() * grid.dx - 0.5) <= 1e-4);
}

TEST_CASE("a Gaussian pair with momentum mismatch has strongly negative weak density") {
    const Grid1D grid(-10.0, 0.05, 401);
    const Wave1P i = make_gaussian(grid, 0.0, 0.0, 1.0);
    const Wave1P f = make_gaussian(grid, 0.0, 3.0, 1.0);
    const TwoStateWave tsw(i, f, free_hamiltonian(grid, 1.0), 0.01);

    const WeakField rho = weak_density(tsw, FieldKind::Density, 0.0);
    CHECK(rho.min_value() < -1e-3);
    // It still integrates to one: the negative region is compensated.
    CHECK(std::abs(rho.values.sum() * grid.dx - 1.0) <= 1e-8);
}

TEST_CASE("discrete averaging over a complete final basis gives the Born expectation") {
    SUBCASE("qubit hand example") {
        StateVec plus(VecC(2));
        plus.amps << 1.0, 1.0;
        plus = normalized(plus);
        const Real avg = average_over_final(plus, MatC::Identity(2, 2), pauli_z(),
                                            zero_hamiltonian(2), 0.0, 0.0, 0.0);
        CHECK(std::abs(avg) <= 1e-12);
    }

    SUBCASE("random states, operators, and bases") {
        Rng rng(112233u);
        for (int trial = 0; trial < 20; ++trial) {
            const Index d = 2 + static_cast<Index>(rng() % 4);
            const StateVec i = random_state(d, rng);
            const Op a = random_hermitian(d, rng);
            const Op h = random_hermitian(d, rng);
            const MatC basis = random_unitary(d, rng).entries;

            const Real t = 0.7;
            const Real avg = average_over_final(i, basis, a, h, 0.0, 1.5, t);
            const StateVec at = TwoStateVec(i, i, h, 0.0, 1.5).forward_at(t);
            const Real expect = inner(at, apply(a, at)).real();
            CHECK(std::abs(avg - expect) <= 1e-9);
        }
    }

    SUBCASE("basis containing i itself") {
        Rng rng(8181u);
        const StateVec i = random_state(3, rng);
        // Complete the basis by QR on [i, e1, e2].
        MatC m = MatC::Identity(3, 3);
        m.col(0) = i.amps;
        m.col(1) = VecC::Unit(3, 0);
        m.col(2) = VecC::Unit(3, 1);
        const Eigen::HouseholderQR<MatC> qr(m);
        MatC q = qr.householderQ();
        const Op a = random_hermitian(3, rng);
        const Real avg =
            average_over_final(i, q, a, zero_hamiltonian(3), 0.0, 0.0, 0.0);
        CHECK(std::abs(avg - inner(i, apply(a, i)).real()) <= 1e-10);
    }

    SUBCASE("incomplete families are rejected") {
        Rng rng(404u);
        MatC basis = random_unitary(3, rng).entries;
        basis.col(2).setZero();
        CHECK_THROWS_AS(average_over_final(random_state(3, rng), basis, pauli_z(),
                                           zero_hamiltonian(3), 0.0, 0.0, 0.0),
                        IncompleteBasis);
    }
}

TEST_CASE("grid averaging over box eigenmodes collapses to the single-state fields") {
    const Grid1D grid(-12.0, 0.15, 161);
    const Hamiltonian1D h = free_hamiltonian(grid, 1.0);
    const Wave1P i = make_gaussian(grid, -0.8, 0.9, 1.1);
    const GridEigenbasis basis = grid_eigenbasis(h, grid);

    const Real t_f = 0.5, dt = 0.01, t = 0.25;
    const TwoStateWave ref(i, [&] {
        Wave1P probe = evolve(i, h, dt, 50);
        return probe;
    }(), h, dt);
    const VecC& psi = ref.forward_at(ref.index_of(t));

    for (FieldKind kind : {FieldKind::Density, FieldKind::EnergyDensity,
                           FieldKind::MomentumDensity, FieldKind::Current}) {
        const WeakField avg = average_over_final(i, basis.modes, h, t_f, dt, kind, t);
        const VecR want = standard_field(psi, h, grid, kind);
        CHECK((avg.values - want).cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("continuity residual vanishes for a stationary mode") {
    const Grid1D grid(-7.0, 0.07, 201);
    const Hamiltonian1D h = harmonic_hamiltonian(grid, 1.0, 1.0);
    const GridEigenbasis basis = grid_eigenbasis(h, grid);

    Wave1P mode;
    mode.grid = grid;
    mode.amps = basis.modes.col(0);
    Wave1P final_state = mode;
    final_state.t = 0.2;

    const TwoStateWave tsw(mode, final_state, h, 0.01);
    const WeakField r = continuity_residual(tsw, 0.1, 0.01);
    CHECK(r.values.cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("continuity residual shrinks by 3x or more under refinement") {
    auto residual_max = [](Index n, Real dt, Real dt_probe) {
        const Grid1D grid = Grid1D::over(-12.0, 12.0, n);
        const Hamiltonian1D h = free_hamiltonian(grid, 1.0);
        const Wave1P i = make_gaussian(grid, -1.0, 1.0, 1.0);
        Wave1P f = make_gaussian(grid, 0.0, 0.5, 1.2);
        f.t = 0.5;
        const TwoStateWave tsw(i, f, h, dt);
        return continuity_residual(tsw, 0.25, dt_probe).values.cwiseAbs().maxCoeff();
    };

    const Real coarse = residual_max(241, 0.01, 0.02);
    const Real fine = residual_max(481, 0.005, 0.01);
    CHECK(coarse / fine >= 3.0);
}

TEST_CASE("total weak probability is conserved in time") {
    const Grid1D grid(-10.0, 0.05, 401);
    const Hamiltonian1D h = free_hamiltonian(grid, 1.0);
    const Wave1P i = make_gaussian(grid, -1.0, 1.0, 1.0);
    Wave1P f = make_gaussian(grid, 1.0, -0.3, 0.9);
    f.t = 0.4;

    const TwoStateWave tsw(i, f, h, 0.01);
    // Quadrature of the residual field is the rate of change of the total
    // two-state "probability"; the spatial divergence telescopes away.
    const WeakField r = continuity_residual(tsw, 0.2, 0.01);
    CHECK(std::abs(r.values.sum() * grid.dx) <= 1e-8);

    const Complex c0 = tsw.overlap_at(0);
    const Complex cN = tsw.overlap_at(tsw.n_steps());
    CHECK(std::abs(c0 - cN) <= 1e-8);
}

TEST_CASE("TwoStateWave input validation") {
    const Grid1D grid(-9.0, 0.1, 181);
    const Hamiltonian1D h = free_hamiltonian(grid, 1.0);
    const Wave1P i = make_gaussian(grid, 0.0, 0.0, 1.0);
    Wave1P f = i;
    f.t = 0.35;
    CHECK_THROWS_AS(TwoStateWave(i, f, h, 0.1), Error);  // 3.5 steps is not integral

    Wave1P early = i;
    early.t = -1.0;
    CHECK_THROWS_AS(TwoStateWave(f, early, h, 0.1), Error);  // t_i > t_f

    Wave1P sloppy = i;
    sloppy.amps *= 1.01;
    sloppy.t = 0.0;
    Wave1P fine = i;
    fine.t = 0.5;
    CHECK_THROWS_AS(TwoStateWave(sloppy, fine, h, 0.1), Error);
}
