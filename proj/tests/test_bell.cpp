#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "retroq/bell.hpp"

using namespace retroq;

namespace {

std::vector<RetroRecord> sample_many(Setting a, Setting b, Index n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<RetroRecord> out;
    out.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) out.push_back(retro_sample(a, b, rng));
    return out;
}

}  // namespace

TEST_CASE("singlet correlation matches -cos(a-b)") {
    CHECK(singlet_correlation({0.0}, {0.0}) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(singlet_correlation({0.0}, {kPi}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(singlet_correlation({0.0}, {kPi / 3.0}) == doctest::Approx(-0.5).epsilon(1e-12));
    for (Real a : {0.0, 0.4, 1.1, 2.9}) {
        for (Real b : {0.0, -0.7, 1.9}) {
            CHECK(std::abs(singlet_correlation({a}, {b}) + std::cos(a - b)) < 1e-12);
        }
    }
}

TEST_CASE("correlation is rotationally invariant") {
    for (Real shift : {0.3, 1.2, -0.8}) {
        const Real base = singlet_correlation({0.2}, {1.0});
        const Real rotated = singlet_correlation({0.2 + shift}, {1.0 + shift});
        CHECK(std::abs(base - rotated) < 1e-12);
    }
}

TEST_CASE("chsh hits the Tsirelson value at the standard settings") {
    const Real s = chsh({0.0}, {kPi / 2.0}, {kPi / 4.0}, {3.0 * kPi / 4.0});
    CHECK(s == doctest::Approx(-2.0 * std::sqrt(2.0)).epsilon(1e-12));
    CHECK(std::abs(s) > 2.0 + 1e-6);  // beyond any local-deterministic bound
}

TEST_CASE("chsh degenerate settings") {
    CHECK(chsh({0.0}, {0.0}, {0.0}, {0.0}) == doctest::Approx(-2.0).epsilon(1e-12));
    // a = a' and b = b' with b - a = pi/2: E terms cancel pairwise.
    CHECK(std::abs(chsh({0.0}, {0.0}, {kPi / 2.0}, {kPi / 2.0})) < 1e-12);
}

TEST_CASE("equal settings anticorrelate every single sample") {
    Rng rng(11);
    for (Real angle : {0.0, 0.9, 2.2}) {
        for (int i = 0; i < 500; ++i) {
            const RetroRecord rec = retro_sample({angle}, {angle}, rng);
            CHECK(rec.outcome_1 * rec.outcome_2 == -1);
        }
    }
}

TEST_CASE("sampled correlation converges to the analytic value") {
    const Index n = 100000;
    const auto records = sample_many({0.0}, {kPi / 3.0}, n, 20260816);
    Real sum = 0.0;
    for (const auto& rec : records) sum += static_cast<Real>(rec.outcome_1 * rec.outcome_2);
    const Real e_hat = sum / static_cast<Real>(n);
    // 3 sigma for a +/-1 product with E = -0.5: 3*sqrt((1-E^2)/n) = 0.0082.
    CHECK(std::abs(e_hat - (-0.5)) < 3.0 * std::sqrt(0.75 / static_cast<Real>(n)));
}

TEST_CASE("outcome_2 marginal is setting-1 independent (signal locality)") {
    const Index n = 100000;
    for (Real a : {0.0, kPi / 2.0, 2.4}) {
        const auto records = sample_many({a}, {0.7}, n, 5150);
        Index up = 0;
        for (const auto& rec : records)
            if (rec.outcome_2 == 1) up += 1;
        const Real freq = static_cast<Real>(up) / static_cast<Real>(n);
        CHECK(std::abs(freq - 0.5) < 3.0 * std::sqrt(0.25 / static_cast<Real>(n)));
    }
}

TEST_CASE("lambda is the conditioned wave: opposite spin along a") {
    Rng rng(7);
    for (Real a : {0.0, 1.3, 2.8}) {
        const RetroRecord rec = retro_sample({a}, {0.2}, rng);
        // lambda must be the spin state opposite to outcome_1 along axis a.
        const StateVec expected = rec.outcome_1 == 1 ? spin_down(a) : spin_up(a);
        CHECK(std::abs(std::abs(inner(expected, rec.lambda)) - 1.0) < 1e-12);
    }
}

TEST_CASE("lambda bloch angle separates the conditioned waves") {
    // spin_up(t) has Bloch angle t; spin_down(t) has angle t - pi (mod 2pi).
    CHECK(lambda_bloch_angle(spin_up(0.6)) == doctest::Approx(0.6).epsilon(1e-12));
    const Real down = lambda_bloch_angle(spin_down(0.6));
    CHECK(std::abs(std::remainder(down - (0.6 - kPi), 2.0 * kPi)) < 1e-12);
    CHECK(quantize_angle(lambda_bloch_angle(spin_up(0.6))) !=
          quantize_angle(lambda_bloch_angle(spin_down(0.6))));
}

TEST_CASE("locality_check passes on honest samples and sees the retro channel") {
    // a = 0 and a = pi give the same lambda bins (the z axis up/down pair), so
    // the factorization comparison has shared cells; a = pi/3 drives the
    // lambda-vs-a dependence.
    std::vector<RetroRecord> records;
    Rng rng(424242);
    const std::vector<Real> a_settings = {0.0, kPi, kPi / 3.0};
    const std::vector<Real> b_settings = {kPi / 5.0, 1.9};
    for (Real a : a_settings)
        for (Real b : b_settings)
            for (int i = 0; i < 20000; ++i) records.push_back(retro_sample({a}, {b}, rng));

    const LocalityReport report = locality_check(records);
    CHECK(report.pass);
    CHECK(report.max_cond_discrepancy <= 3.0);
    CHECK(report.cells_compared >= 2);
    CHECK(report.lambda_depends_on_a);
    CHECK(report.lambda_dependence_z > 5.0);
}

TEST_CASE("locality_check fails on records with a planted a-dependence") {
    std::vector<RetroRecord> records;
    Rng rng(424242);
    for (Real a : {0.0, kPi})
        for (Real b : {kPi / 5.0, 1.9})
            for (int i = 0; i < 20000; ++i)
                records.push_back(retro_sample_planted({a}, {b}, rng));

    const LocalityReport report = locality_check(records);
    CHECK_FALSE(report.pass);
    CHECK(report.max_cond_discrepancy > 3.0);
}

TEST_CASE("locality_check rejects undersampled cells and single settings") {
    Rng rng(3);
    std::vector<RetroRecord> tiny;
    for (Real a : {0.0, kPi})
        for (int i = 0; i < 50; ++i) tiny.push_back(retro_sample({a}, {0.4}, rng));
    CHECK_THROWS_AS(locality_check(tiny), InsufficientSamples);

    std::vector<RetroRecord> one_setting;
    for (int i = 0; i < 500; ++i) one_setting.push_back(retro_sample({0.0}, {0.4}, rng));
    CHECK_THROWS_AS(locality_check(one_setting), InsufficientSamples);
}

TEST_CASE("sampling is deterministic for a fixed seed") {
    const auto r1 = sample_many({0.3}, {1.1}, 200, 99);
    const auto r2 = sample_many({0.3}, {1.1}, 200, 99);
    for (std::size_t i = 0; i < r1.size(); ++i) {
        CHECK(r1[i].outcome_1 == r2[i].outcome_1);
        CHECK(r1[i].outcome_2 == r2[i].outcome_2);
    }
}
