#pragma once

// Conditional wavefunctions: replace an entangled joint state by individual
// single-particle states conditioned on the outcomes later measurements will
// produce on the other particles, and check that chaining such conditionals
// reproduces the ordinary joint outcome statistics.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "retroq/errors.hpp"
#include "retroq/qcore.hpp"
#include "retroq/qgrid.hpp"

namespace retroq {

/// Pre-normalization norms at or below this are treated as "the conditioning
/// state does not overlap the joint state at all".
inline constexpr Real kNullConditionalTol = 1e-12;

// ---------------------------------------------------------------------------
// Grid form

struct Conditional1P {
    Wave1P psi2;  // normalized conditional wave of the unmeasured particle
    Real n = 0.0; // norm of the contraction before normalization
};

/// psi2(x') = (1/N) sum_x conj(psi1(x)) joint(x, x') dx. The first factor is
/// conjugated (a bra projection); for real conditioning waves this coincides
/// with the unconjugated integrand.
inline Conditional1P conditional_wave(const Wave2P& joint, const Wave1P& psi1) {
    if (!(psi1.grid == joint.grid_a))
        throw DimMismatch("conditional_wave: psi1 grid does not match the joint first axis");
    if (!is_normalized(psi1))
        throw Error("conditional_wave: psi1 must be normalized");

    Conditional1P out;
    out.psi2.grid = joint.grid_b;
    out.psi2.t = joint.t;
    out.psi2.amps = (psi1.amps.adjoint() * joint.amps).transpose() * joint.grid_a.dx;
    out.n = grid_norm(out.psi2);
    if (out.n <= kNullConditionalTol)
        throw NullConditional("conditional_wave: contraction norm " + fmt_real(out.n));
    out.psi2.amps /= out.n;
    return out;
}

// ---------------------------------------------------------------------------
// Discrete form

struct ConditionalState {
    StateVec state;  // normalized residual on the remaining parties
    Real n = 0.0;    // norm of the contraction before normalization
};

inline ConditionalState conditional_state(const StateVec& joint, const ProductIndex& idx,
                                          Index party, const StateVec& eigvec) {
    ConditionalState out;
    out.state = partial_inner(eigvec, joint, idx, party);
    out.n = out.state.norm();
    if (out.n <= kNullConditionalTol)
        throw NullConditional("conditional_state: contraction norm " + fmt_real(out.n));
    out.state.amps /= out.n;
    return out;
}

// ---------------------------------------------------------------------------
// Individual-state assignment from a fully specified future

/// One later measurement: which party, what observable, which eigenvalue came
/// out.
struct FutureOutcome {
    Index party = 0;
    Op observable;
    Real outcome = 0.0;
};

namespace detail {

/// The eigenstate matching `outcome`, or throw. Conditioning needs a definite
/// bra, so a degenerate matching eigenspace is rejected rather than guessed at.
inline StateVec outcome_eigenstate(const Op& observable, Real outcome) {
    for (const auto& space : eigenspaces(observable)) {
        if (std::abs(space.eigenvalue - outcome) <= kEigMergeTol) {
            if (space.vectors.cols() != 1)
                throw DegenerateOutcome("outcome " + fmt_real(outcome) +
                                        " labels an eigenspace of dimension " +
                                        std::to_string(space.vectors.cols()));
            return StateVec(space.vectors.col(0));
        }
    }
    throw ImpossibleOutcomeSet("outcome " + fmt_real(outcome) +
                               " is not an eigenvalue of the observable");
}

}  // namespace detail

/// For every party p: contract the joint state with the outcome eigenstates
/// of all parties except p and normalize. Each particle's wave therefore
/// depends on the results of the later measurements on all the others.
inline std::vector<StateVec> assign_individual_states(const StateVec& joint,
                                                      const ProductIndex& idx,
                                                      const std::vector<FutureOutcome>& future) {
    const Index parties = idx.n_parties();
    if (static_cast<Index>(future.size()) != parties)
        throw IncompleteFutureSpec("got " + std::to_string(future.size()) + " outcomes for " +
                                   std::to_string(parties) + " parties");
    std::vector<StateVec> eigvecs(static_cast<size_t>(parties));
    std::vector<bool> seen(static_cast<size_t>(parties), false);
    for (const auto& fo : future) {
        if (fo.party < 0 || fo.party >= parties)
            throw PartyOutOfRange("future outcome for party " + std::to_string(fo.party));
        if (seen[static_cast<size_t>(fo.party)])
            throw IncompleteFutureSpec("party " + std::to_string(fo.party) +
                                       " specified more than once");
        if (fo.observable.dim() != idx.party_dims[static_cast<size_t>(fo.party)])
            throw DimMismatch("observable dimension does not match its party");
        seen[static_cast<size_t>(fo.party)] = true;
        eigvecs[static_cast<size_t>(fo.party)] = detail::outcome_eigenstate(fo.observable, fo.outcome);
    }

    // Joint probability of the whole outcome set must not vanish.
    StateVec full = joint;
    ProductIndex shrinking = idx;
    for (Index p = parties - 1; p >= 0; --p) {
        full = partial_inner(eigvecs[static_cast<size_t>(p)], full, shrinking, p);
        shrinking = shrinking.without(p);
    }
    const Real p_joint = full.amps.squaredNorm();
    if (p_joint <= 1e-12)
        throw ImpossibleOutcomeSet("joint outcome probability " + fmt_real(p_joint));

    std::vector<StateVec> assigned;
    assigned.reserve(static_cast<size_t>(parties));
    for (Index p = 0; p < parties; ++p) {
        StateVec residual = joint;
        ProductIndex rest = idx;
        // Contract the other parties from the back so survivor indices are stable.
        for (Index q = parties - 1; q >= 0; --q) {
            if (q == p) continue;
            residual = partial_inner(eigvecs[static_cast<size_t>(q)], residual, rest, q);
            rest = rest.without(q);
        }
        assigned.push_back(normalized(residual));
    }
    return assigned;
}

// ---------------------------------------------------------------------------
// Statistical reconstruction

/// Joint outcome distribution over per-party eigenvalue branches, computed two
/// ways: `p_direct` by the Born rule on the joint state, `p_retro` by chaining
/// normalized conditional-state contractions party by party.
struct CorrelationTable {
    ProductIndex shape;                       // branch counts per party
    std::vector<std::vector<Real>> outcomes;  // per party: branch eigenvalues
    std::vector<Real> p_direct;               // row-major over branch indices
    std::vector<Real> p_retro;
    Real max_abs_diff = 0.0;
};

inline CorrelationTable reconstruct_statistics(const StateVec& joint, const ProductIndex& idx,
                                               const std::vector<Op>& observables) {
    const Index parties = idx.n_parties();
    if (static_cast<Index>(observables.size()) != parties)
        throw DimMismatch("reconstruct_statistics: need one observable per party");

    std::vector<std::vector<EigenSpace>> spaces;
    spaces.reserve(static_cast<size_t>(parties));
    std::vector<Index> branch_counts;
    for (Index p = 0; p < parties; ++p) {
        if (observables[static_cast<size_t>(p)].dim() != idx.party_dims[static_cast<size_t>(p)])
            throw DimMismatch("observable dimension does not match party " + std::to_string(p));
        spaces.push_back(eigenspaces(observables[static_cast<size_t>(p)]));
        branch_counts.push_back(static_cast<Index>(spaces.back().size()));
    }

    CorrelationTable table;
    table.shape = ProductIndex(branch_counts);
    for (Index p = 0; p < parties; ++p) {
        std::vector<Real> vals;
        for (const auto& sp : spaces[static_cast<size_t>(p)]) vals.push_back(sp.eigenvalue);
        table.outcomes.push_back(std::move(vals));
    }

    const Index rows = table.shape.flat_dim();
    table.p_direct.resize(static_cast<size_t>(rows));
    table.p_retro.resize(static_cast<size_t>(rows));

    for (Index r = 0; r < rows; ++r) {
        const std::vector<Index> branch = table.shape.unflatten(r);

        // Eigenspaces may be degenerate; a branch probability is the sum over
        // the product combinations of basis vectors inside each space.
        std::vector<Index> combo_dims;
        for (Index p = 0; p < parties; ++p)
            combo_dims.push_back(
                spaces[static_cast<size_t>(p)][static_cast<size_t>(branch[static_cast<size_t>(p)])]
                    .vectors.cols());
        const ProductIndex combos(combo_dims);

        Real direct = 0.0, retro = 0.0;
        for (Index c = 0; c < combos.flat_dim(); ++c) {
            const std::vector<Index> pick = combos.unflatten(c);
            std::vector<StateVec> eigvecs;
            eigvecs.reserve(static_cast<size_t>(parties));
            for (Index p = 0; p < parties; ++p) {
                const auto& sp =
                    spaces[static_cast<size_t>(p)]
                          [static_cast<size_t>(branch[static_cast<size_t>(p)])];
                eigvecs.emplace_back(VecC(sp.vectors.col(pick[static_cast<size_t>(p)])));
            }

            // Route (a): one global inner product against the tensor bra.
            StateVec bra = eigvecs[0];
            for (Index p = 1; p < parties; ++p) bra = tensor(bra, eigvecs[static_cast<size_t>(p)]);
            direct += std::norm(inner(bra, joint));

            // Route (b): normalized conditional contractions, one party at a
            // time; the branch weight is the product of the squared norms.
            Real weight = 1.0;
            StateVec residual = joint;
            ProductIndex rest = idx;
            bool dead = false;
            for (Index p = 0; p < parties; ++p) {
                StateVec next = partial_inner(eigvecs[static_cast<size_t>(p)], residual, rest, 0);
                const Real n = next.norm();
                weight *= n * n;
                if (n <= kNullConditionalTol) {
                    dead = true;
                    break;
                }
                next.amps /= n;
                residual = std::move(next);
                rest = rest.without(0);
            }
            retro += dead ? 0.0 : weight;
        }
        table.p_direct[static_cast<size_t>(r)] = direct;
        table.p_retro[static_cast<size_t>(r)] = retro;
        table.max_abs_diff = std::max(table.max_abs_diff, std::abs(direct - retro));
    }
    return table;
}

}  // namespace retroq
