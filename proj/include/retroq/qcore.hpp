#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "retroq/common.hpp"
#include "retroq/errors.hpp"
#include "retroq/random.hpp"

namespace retroq {

inline constexpr Real kNormTol = 1e-12;
inline constexpr Real kHermTol = 1e-12;
inline constexpr Real kEigMergeTol = 1e-10;

// ---------------------------------------------------------------------------
// Domain types

/// Finite-dimensional complex amplitude vector.
struct StateVec {
    VecC amps;

    StateVec() = default;
    explicit StateVec(VecC a) : amps(std::move(a)) {}

    Index dim() const { return amps.size(); }
    Real norm() const { return amps.norm(); }
};

/// Square complex matrix acting on StateVec, with a hermiticity flag.
struct Op {
    MatC entries;
    bool hermitian = false;

    Op() = default;
    Op(MatC m, bool herm) : entries(std::move(m)), hermitian(herm) {}

    Index dim() const { return entries.rows(); }
};

/// Row-major flat index <-> multi-index bijection over a list of party dims.
struct ProductIndex {
    std::vector<Index> party_dims;

    ProductIndex() = default;
    explicit ProductIndex(std::vector<Index> dims) : party_dims(std::move(dims)) {}

    Index n_parties() const { return static_cast<Index>(party_dims.size()); }

    Index flat_dim() const {
        Index d = 1;
        for (Index pd : party_dims) d *= pd;
        return d;
    }

    // product of dims strictly after `party` (the row-major stride)
    Index stride(Index party) const {
        Index s = 1;
        for (Index p = party + 1; p < n_parties(); ++p) s *= party_dims[p];
        return s;
    }

    Index flatten(const std::vector<Index>& multi) const {
        Index f = 0;
        for (Index p = 0; p < n_parties(); ++p) f = f * party_dims[p] + multi[p];
        return f;
    }

    std::vector<Index> unflatten(Index flat) const {
        std::vector<Index> multi(party_dims.size());
        for (Index p = n_parties() - 1; p >= 0; --p) {
            multi[p] = flat % party_dims[p];
            flat /= party_dims[p];
        }
        return multi;
    }

    /// Index over the parties remaining after removing `party`.
    ProductIndex without(Index party) const {
        std::vector<Index> dims;
        dims.reserve(party_dims.size() - 1);
        for (Index p = 0; p < n_parties(); ++p)
            if (p != party) dims.push_back(party_dims[p]);
        return ProductIndex(std::move(dims));
    }
};

// ---------------------------------------------------------------------------
// Construction helpers

inline StateVec basis_state(Index dim, Index k) {
    VecC a = VecC::Zero(dim);
    a[k] = 1.0;
    return StateVec(std::move(a));
}

inline StateVec normalized(const StateVec& s) {
    const Real n = s.norm();
    if (n <= 0.0) throw Error("cannot normalize a zero state");
    return StateVec(s.amps / n);
}

inline bool is_normalized(const StateVec& s, Real tol = kNormTol) {
    return std::abs(s.amps.squaredNorm() - 1.0) <= tol;
}

inline bool is_hermitian(const MatC& m, Real tol = kHermTol) {
    return (m - m.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

inline Op hermitian_op(MatC m) {
    if (!is_hermitian(m)) throw NonHermitian("hermitian_op");
    return Op(std::move(m), true);
}

inline Op pauli_x() { return hermitian_op((MatC(2, 2) << 0, 1, 1, 0).finished()); }
inline Op pauli_y() { return hermitian_op((MatC(2, 2) << 0, -kI, kI, 0).finished()); }
inline Op pauli_z() { return hermitian_op((MatC(2, 2) << 1, 0, 0, -1).finished()); }
inline Op identity_op(Index dim) { return Op(MatC::Identity(dim, dim), true); }

/// (|01> - |10>)/sqrt(2)
inline StateVec singlet() {
    VecC a = VecC::Zero(4);
    a[1] = 1.0 / std::sqrt(2.0);
    a[2] = -1.0 / std::sqrt(2.0);
    return StateVec(std::move(a));
}

/// (|0...0> + |1...1>)/sqrt(2) on n qubits.
inline StateVec ghz(Index n_qubits) {
    const Index dim = Index(1) << n_qubits;
    VecC a = VecC::Zero(dim);
    a[0] = a[dim - 1] = 1.0 / std::sqrt(2.0);
    return StateVec(std::move(a));
}

/// Haar-ish random normalized state from i.i.d. complex Gaussian amplitudes.
inline StateVec random_state(Index dim, Rng& rng) {
    VecC a(dim);
    for (Index k = 0; k < dim; ++k) a[k] = Complex(normal01(rng), normal01(rng));
    return normalized(StateVec(std::move(a)));
}

inline Op random_hermitian(Index dim, Rng& rng) {
    MatC m(dim, dim);
    for (Index i = 0; i < dim; ++i)
        for (Index j = 0; j < dim; ++j) m(i, j) = Complex(normal01(rng), normal01(rng));
    MatC h = 0.5 * (m + m.adjoint());
    return Op(std::move(h), true);
}

/// Random unitary from the QR decomposition of a Gaussian matrix, with the
/// phase convention diag(R) > 0 so the result is a deterministic function of
/// the generator stream.
inline Op random_unitary(Index dim, Rng& rng) {
    MatC m(dim, dim);
    for (Index i = 0; i < dim; ++i)
        for (Index j = 0; j < dim; ++j) m(i, j) = Complex(normal01(rng), normal01(rng));
    Eigen::HouseholderQR<MatC> qr(m);
    MatC q = qr.householderQ();
    const MatC r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Index j = 0; j < dim; ++j) {
        const Complex rjj = r(j, j);
        const Real mag = std::abs(rjj);
        if (mag > 0.0) q.col(j) *= rjj / mag;
    }
    return Op(std::move(q), false);
}

// ---------------------------------------------------------------------------
// Operations

/// Kronecker product of states, row-major: amps_(jk) = a_j * b_k.
inline StateVec tensor(const StateVec& a, const StateVec& b) {
    VecC out(a.dim() * b.dim());
    for (Index j = 0; j < a.dim(); ++j)
        out.segment(j * b.dim(), b.dim()) = a.amps[j] * b.amps;
    return StateVec(std::move(out));
}

inline Op tensor(const Op& a, const Op& b) {
    const Index da = a.dim(), db = b.dim();
    MatC out(da * db, da * db);
    for (Index i = 0; i < da; ++i)
        for (Index j = 0; j < da; ++j)
            out.block(i * db, j * db, db, db) = a.entries(i, j) * b.entries;
    return Op(std::move(out), a.hermitian && b.hermitian);
}

inline StateVec apply(const Op& op, const StateVec& s) {
    if (op.dim() != s.dim())
        throw DimMismatch("apply: op dim " + std::to_string(op.dim()) + " vs state dim " +
                          std::to_string(s.dim()));
    return StateVec(op.entries * s.amps);
}

/// <a|b>, conjugate-linear in the first argument.
inline Complex inner(const StateVec& a, const StateVec& b) {
    if (a.dim() != b.dim())
        throw DimMismatch("inner: " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
    return a.amps.dot(b.amps);
}

/// Contract conj(bra) against one party's index of a joint state; returns the
/// unnormalized residual state on the remaining parties (row-major order).
inline StateVec partial_inner(const StateVec& bra, const StateVec& joint, const ProductIndex& idx,
                              Index party) {
    if (party < 0 || party >= idx.n_parties())
        throw PartyOutOfRange(std::to_string(party) + " of " + std::to_string(idx.n_parties()));
    if (bra.dim() != idx.party_dims[party])
        throw DimMismatch("partial_inner: bra dim " + std::to_string(bra.dim()) +
                          " vs party dim " + std::to_string(idx.party_dims[party]));
    if (joint.dim() != idx.flat_dim())
        throw DimMismatch("partial_inner: joint dim " + std::to_string(joint.dim()) +
                          " vs flat dim " + std::to_string(idx.flat_dim()));

    const Index s = idx.stride(party);
    const Index d = idx.party_dims[party];
    VecC out = VecC::Zero(joint.dim() / d);
    for (Index f = 0; f < joint.dim(); ++f) {
        const Index pre = f / (d * s);
        const Index k = (f / s) % d;
        const Index post = f % s;
        out[pre * s + post] += std::conj(bra.amps[k]) * joint.amps[f];
    }
    return StateVec(std::move(out));
}

// ---------------------------------------------------------------------------
// Born-rule measurement

struct MeasureResult {
    Real eigenvalue = 0.0;
    StateVec collapsed;
    Real probability = 0.0;
};

struct EigenSpace {
    Real eigenvalue = 0.0;
    MatC vectors;  // columns span the eigenspace
};

/// Eigenspaces of a hermitian operator, eigenvalues ascending, with
/// eigenvalues closer than kEigMergeTol merged into one projector.
inline std::vector<EigenSpace> eigenspaces(const Op& observable) {
    if (!observable.hermitian || !is_hermitian(observable.entries))
        throw NonHermitian("eigenspaces");
    Eigen::SelfAdjointEigenSolver<MatC> es(observable.entries);
    if (es.info() != Eigen::Success) throw Error("eigensolver failed to converge");
    const VecR& vals = es.eigenvalues();
    const MatC& vecs = es.eigenvectors();

    std::vector<EigenSpace> spaces;
    Index start = 0;
    while (start < vals.size()) {
        Index end = start + 1;
        while (end < vals.size() && vals[end] - vals[end - 1] <= kEigMergeTol) ++end;
        EigenSpace sp;
        sp.eigenvalue = vals.segment(start, end - start).mean();
        sp.vectors = vecs.middleCols(start, end - start);
        spaces.push_back(std::move(sp));
        start = end;
    }
    return spaces;
}

/// Sample an eigenvalue of `observable` on `s` with Born probabilities and
/// collapse onto the sampled eigenspace. Deterministic given the rng state.
inline MeasureResult born_measure(const StateVec& s, const Op& observable, Rng& rng) {
    if (observable.dim() != s.dim())
        throw DimMismatch("born_measure: op dim " + std::to_string(observable.dim()) +
                          " vs state dim " + std::to_string(s.dim()));
    const auto spaces = eigenspaces(observable);

    std::vector<VecC> projections;
    std::vector<Real> probs;
    projections.reserve(spaces.size());
    probs.reserve(spaces.size());
    for (const auto& sp : spaces) {
        VecC proj = sp.vectors * (sp.vectors.adjoint() * s.amps);
        probs.push_back(proj.squaredNorm());
        projections.push_back(std::move(proj));
    }

    const Real u = uniform01(rng);
    Real cum = 0.0;
    Index pick = static_cast<Index>(spaces.size()) - 1;
    for (Index k = 0; k < static_cast<Index>(spaces.size()); ++k) {
        cum += probs[k];
        if (u < cum) {
            pick = k;
            break;
        }
    }
    // skip forward over zero-probability branches picked by rounding at u ~ 1
    while (probs[pick] <= 0.0 && pick > 0) --pick;

    MeasureResult res;
    res.eigenvalue = spaces[pick].eigenvalue;
    res.probability = probs[pick];
    res.collapsed = StateVec(projections[pick] / std::sqrt(probs[pick]));
    return res;
}

}  // namespace retroq
