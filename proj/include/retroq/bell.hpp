#pragma once

// Zig-zag retrocausal account of singlet correlations, as an executable
// sampler: measure particle 1, condition particle 2's wave on that result
// (information running back to the source and forward again), then measure
// particle 2 locally against its conditioned wave. The statistics must be
// exactly quantum; the "hidden variable" lambda is the conditioned wave and
// genuinely depends on the remote setting, while everything particle 2 does
// is local given lambda.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "retroq/errors.hpp"
#include "retroq/factorize.hpp"
#include "retroq/qcore.hpp"
#include "retroq/random.hpp"
#include "retroq/stats.hpp"

namespace retroq {

/// Spin measurement axis in the z-x plane.
struct Setting {
    Real angle = 0.0;
};

/// sigma(theta) = cos(theta) sigma_z + sin(theta) sigma_x.
inline Op spin_axis(Real theta) {
    MatC m(2, 2);
    m << std::cos(theta), std::sin(theta), std::sin(theta), -std::cos(theta);
    return hermitian_op(std::move(m));
}

/// Eigenstate of spin_axis(theta) with eigenvalue +1 (-1 for spin_down).
inline StateVec spin_up(Real theta) {
    VecC a(2);
    a << std::cos(theta / 2.0), std::sin(theta / 2.0);
    return StateVec(std::move(a));
}

inline StateVec spin_down(Real theta) {
    VecC a(2);
    a << -std::sin(theta / 2.0), std::cos(theta / 2.0);
    return StateVec(std::move(a));
}

/// Bloch angle of a qubit state in the z-x plane, atan2(<sx>, <sz>); used to
/// give lambda a finite bin key. Insensitive to global phase.
inline Real lambda_bloch_angle(const StateVec& lambda) {
    if (lambda.dim() != 2) throw DimMismatch("lambda_bloch_angle: need a qubit");
    const Complex c0 = lambda.amps[0], c1 = lambda.amps[1];
    const Real sz = std::norm(c0) - std::norm(c1);
    const Real sx = 2.0 * (std::conj(c0) * c1).real();
    return std::atan2(sx, sz);
}

/// Angles quantized to 1e-9 radians so lambda values form finitely many bins.
inline std::int64_t quantize_angle(Real angle) {
    return static_cast<std::int64_t>(std::llround(angle / 1e-9));
}

// ---------------------------------------------------------------------------
// Analytic correlations

/// E(a, b) for the singlet, computed by the direct Born rule AND by the retro
/// route (condition particle 2 on particle 1's outcome, then a local Born
/// measurement). The two must agree to 1e-12; the analytic value is
/// -cos(a - b).
inline Real singlet_correlation(Setting a, Setting b) {
    const ProductIndex idx({2, 2});
    const StateVec s = singlet();

    // Direct route: <S| sigma(a) x sigma(b) |S>.
    const Op joint_obs = tensor(spin_axis(a.angle), spin_axis(b.angle));
    const Real direct = inner(s, apply(joint_obs, s)).real();

    // Retro route: P(o1) from the conditional norm, then the local
    // expectation of sigma(b) against the conditioned wave.
    Real retro = 0.0;
    const Op local_b = spin_axis(b.angle);
    for (const Real o1 : {1.0, -1.0}) {
        const StateVec eig = o1 > 0.0 ? spin_up(a.angle) : spin_down(a.angle);
        const ConditionalState cond = conditional_state(s, idx, 0, eig);
        const Real local = inner(cond.state, apply(local_b, cond.state)).real();
        retro += cond.n * cond.n * o1 * local;
    }

    if (std::abs(direct - retro) > 1e-12)
        throw Error("singlet_correlation: direct and retro routes disagree by " +
                    fmt_real(std::abs(direct - retro)));
    return direct;
}

/// S = E(a,b) - E(a,b') + E(a',b) + E(a',b').
inline Real chsh(Setting a, Setting a_prime, Setting b, Setting b_prime) {
    return singlet_correlation(a, b) - singlet_correlation(a, b_prime) +
           singlet_correlation(a_prime, b) + singlet_correlation(a_prime, b_prime);
}

// ---------------------------------------------------------------------------
// Generative sampler

/// One sampled run of the zig-zag model.
struct RetroRecord {
    Setting setting_1, setting_2;
    int outcome_1 = 0, outcome_2 = 0;
    StateVec lambda;  // the conditioned particle-2 wave carried from the source
};

/// Sample the zig-zag: Born-measure particle 1 along a, condition particle 2's
/// wave on that result, Born-measure particle 2 along b against the
/// conditioned wave. Deterministic given the rng state.
inline RetroRecord retro_sample(Setting a, Setting b, Rng& rng) {
    const ProductIndex idx({2, 2});
    const StateVec s = singlet();

    const ConditionalState up = conditional_state(s, idx, 0, spin_up(a.angle));
    const Real p_up = up.n * up.n;

    RetroRecord rec;
    rec.setting_1 = a;
    rec.setting_2 = b;
    if (uniform01(rng) < p_up) {
        rec.outcome_1 = 1;
        rec.lambda = up.state;
    } else {
        rec.outcome_1 = -1;
        rec.lambda = conditional_state(s, idx, 0, spin_down(a.angle)).state;
    }

    const Real p2_up = std::norm(inner(spin_up(b.angle), rec.lambda));
    rec.outcome_2 = uniform01(rng) < p2_up ? 1 : -1;
    return rec;
}

/// Control sampler with a planted locality violation: particle 2's outcome
/// probability is nudged by the remote setting a directly, bypassing lambda.
/// Exists only so locality_check can be shown to catch such a dependence.
inline RetroRecord retro_sample_planted(Setting a, Setting b, Rng& rng, Real bias = 0.1) {
    RetroRecord rec = retro_sample(a, b, rng);
    const Real p2_up = std::norm(inner(spin_up(b.angle), rec.lambda));
    const Real planted = std::clamp(p2_up + bias * std::cos(a.angle), 0.0, 1.0);
    rec.outcome_2 = uniform01(rng) < planted ? 1 : -1;
    return rec;
}

// ---------------------------------------------------------------------------
// Locality check

struct LocalityOptions {
    Index min_per_cell = 100;   // fewer records than this in a compared cell is an error
    Real z_threshold = 3.0;     // conditional-factorization pass level
    Real lambda_z_threshold = 5.0;  // required strength of the lambda-vs-a dependence
};

struct LocalityReport {
    bool pass = false;                 // factorization holds at z_threshold
    Real max_cond_discrepancy = 0.0;   // max |z| across (lambda, b) cells and a-pairs
    bool lambda_depends_on_a = false;  // retro channel active at lambda_z_threshold
    Real lambda_dependence_z = 0.0;    // strongest lambda-distribution z across a-pairs
    Index cells_compared = 0;          // (lambda, b) cells with >= 2 a-groups
};

/// Tests the two halves of the zig-zag story on a sampled record set:
/// (1) conditioned on (lambda, b), outcome_2 frequencies do not depend on a;
/// (2) the lambda distribution itself does depend on a.
inline LocalityReport locality_check(const std::vector<RetroRecord>& records,
                                     const LocalityOptions& opt = {}) {
    using Key = std::int64_t;

    // counts[lambda][b][a] = (n, hits of outcome_2 == +1)
    std::map<Key, std::map<Key, std::map<Key, std::pair<Index, Index>>>> cells;
    // lambda_counts[a][lambda] = n; lambda_totals[a] = total records
    std::map<Key, std::map<Key, Index>> lambda_counts;
    std::map<Key, Index> lambda_totals;

    for (const auto& rec : records) {
        const Key la = quantize_angle(lambda_bloch_angle(rec.lambda));
        const Key kb = quantize_angle(rec.setting_2.angle);
        const Key ka = quantize_angle(rec.setting_1.angle);
        auto& cell = cells[la][kb][ka];
        cell.first += 1;
        if (rec.outcome_2 == 1) cell.second += 1;
        lambda_counts[ka][la] += 1;
        lambda_totals[ka] += 1;
    }
    if (lambda_totals.size() < 2)
        throw InsufficientSamples("need records for at least 2 distinct a settings");

    LocalityReport report;

    // (1) Factorization: within each (lambda, b) cell, compare outcome_2
    // frequencies across every pair of a-groups.
    for (const auto& [la, by_b] : cells) {
        for (const auto& [kb, by_a] : by_b) {
            if (by_a.size() < 2) continue;
            report.cells_compared += 1;
            for (auto it1 = by_a.begin(); it1 != by_a.end(); ++it1) {
                for (auto it2 = std::next(it1); it2 != by_a.end(); ++it2) {
                    const auto& [n1, h1] = it1->second;
                    const auto& [n2, h2] = it2->second;
                    if (n1 < opt.min_per_cell || n2 < opt.min_per_cell)
                        throw InsufficientSamples(
                            "cell with " + std::to_string(std::min(n1, n2)) +
                            " records (need >= " + std::to_string(opt.min_per_cell) + ")");
                    const Real z = std::abs(proportion_z(h1, n1, h2, n2));
                    report.max_cond_discrepancy = std::max(report.max_cond_discrepancy, z);
                }
            }
        }
    }
    report.pass = report.max_cond_discrepancy <= opt.z_threshold;

    // (2) Retro channel: the lambda distribution must differ across some pair
    // of a settings. Proportion z per lambda bin, maximized.
    for (auto it1 = lambda_counts.begin(); it1 != lambda_counts.end(); ++it1) {
        for (auto it2 = std::next(it1); it2 != lambda_counts.end(); ++it2) {
            std::map<Key, bool> all_bins;
            for (const auto& [la, n] : it1->second) all_bins[la] = true;
            for (const auto& [la, n] : it2->second) all_bins[la] = true;
            for (const auto& [la, unused] : all_bins) {
                (void)unused;
                const Index h1 = it1->second.count(la) ? it1->second.at(la) : 0;
                const Index h2 = it2->second.count(la) ? it2->second.at(la) : 0;
                const Real z = std::abs(proportion_z(h1, lambda_totals.at(it1->first), h2,
                                                     lambda_totals.at(it2->first)));
                report.lambda_dependence_z = std::max(report.lambda_dependence_z, z);
            }
        }
    }
    report.lambda_depends_on_a = report.lambda_dependence_z > opt.lambda_z_threshold;
    return report;
}

}  // namespace retroq
