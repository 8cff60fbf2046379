#pragma once

#include <stdexcept>
#include <string>

namespace retroq {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimMismatch : Error {
    explicit DimMismatch(const std::string& msg) : Error("dimension mismatch: " + msg) {}
};

struct PartyOutOfRange : Error {
    explicit PartyOutOfRange(const std::string& msg) : Error("party out of range: " + msg) {}
};

struct NonHermitian : Error {
    explicit NonHermitian(const std::string& msg) : Error("operator not hermitian: " + msg) {}
};

struct NullConditional : Error {
    explicit NullConditional(const std::string& msg)
        : Error("conditioning state has no overlap: " + msg) {}
};

struct DegenerateOutcome : Error {
    explicit DegenerateOutcome(const std::string& msg)
        : Error("outcome eigenspace is degenerate: " + msg) {}
};

struct ImpossibleOutcomeSet : Error {
    explicit ImpossibleOutcomeSet(const std::string& msg)
        : Error("jointly impossible outcome set: " + msg) {}
};

struct IncompleteFutureSpec : Error {
    explicit IncompleteFutureSpec(const std::string& msg)
        : Error("future outcomes must cover every party exactly once: " + msg) {}
};

struct PostSelectionSingular : Error {
    explicit PostSelectionSingular(const std::string& msg)
        : Error("post-selection overlap below threshold: " + msg) {}
};

struct IncompleteBasis : Error {
    explicit IncompleteBasis(const std::string& msg)
        : Error("final basis is not complete: " + msg) {}
};

struct VelocitySingular : Error {
    explicit VelocitySingular(const std::string& msg)
        : Error("weak density vanishes at probe point: " + msg) {}
};

struct PacketTooNarrow : Error {
    explicit PacketTooNarrow(const std::string& msg)
        : Error("packet too narrow for grid: " + msg) {}
};

struct PacketTouchesBoundary : Error {
    explicit PacketTouchesBoundary(const std::string& msg)
        : Error("packet amplitude at box edge exceeds tolerance: " + msg) {}
};

struct SolverFailure : Error {
    explicit SolverFailure(const std::string& msg) : Error("tridiagonal solve failed: " + msg) {}
};

struct InsufficientSamples : Error {
    explicit InsufficientSamples(const std::string& msg)
        : Error("insufficient samples: " + msg) {}
};

struct ParseError : Error {
    explicit ParseError(const std::string& msg) : Error("config parse error: " + msg) {}
};

struct ValidationError : Error {
    explicit ValidationError(const std::string& msg) : Error("config invalid: " + msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error("io error: " + msg) {}
};

}  // namespace retroq
