#pragma once

// CSV writers for the scenario runner. Every float is emitted with 17
// significant digits so artifacts round-trip exactly and identical runs
// produce byte-identical files. Files are opened in binary mode to keep the
// bytes platform-independent.

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "retroq/bell.hpp"
#include "retroq/bohmtraj.hpp"
#include "retroq/errors.hpp"
#include "retroq/factorize.hpp"
#include "retroq/qgrid.hpp"
#include "retroq/tsvf.hpp"

namespace retroq {

inline std::string csv_real(Real v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << text;
    out.flush();
    if (!out) throw IoError("short write to " + path);
}

/// One-particle snapshot: header `x,re,im`.
inline void write_wave_csv(const std::string& path, const Wave1P& w) {
    std::string text = "x,re,im\n";
    for (Index k = 0; k < w.grid.n; ++k) {
        text += csv_real(w.grid.point(k));
        text += ',';
        text += csv_real(w.amps[k].real());
        text += ',';
        text += csv_real(w.amps[k].imag());
        text += '\n';
    }
    write_text_file(path, text);
}

/// Two-particle snapshot: header `x,xprime,re,im`, row-major over (x, x').
inline void write_wave_csv(const std::string& path, const Wave2P& w) {
    std::string text = "x,xprime,re,im\n";
    for (Index a = 0; a < w.grid_a.n; ++a) {
        for (Index b = 0; b < w.grid_b.n; ++b) {
            const Complex amp = w.amps(a, b);
            text += csv_real(w.grid_a.point(a));
            text += ',';
            text += csv_real(w.grid_b.point(b));
            text += ',';
            text += csv_real(amp.real());
            text += ',';
            text += csv_real(amp.imag());
            text += '\n';
        }
    }
    write_text_file(path, text);
}

/// Weak-field tables: header `x,value,kind,t`; one block per field.
inline void write_weak_field_csv(const std::string& path, const std::vector<WeakField>& fields) {
    std::string text = "x,value,kind,t\n";
    for (const WeakField& f : fields) {
        for (Index k = 0; k < f.grid.n; ++k) {
            text += csv_real(f.grid.point(k));
            text += ',';
            text += csv_real(f.values[k]);
            text += ',';
            text += field_kind_name(f.kind);
            text += ',';
            text += csv_real(f.t);
            text += '\n';
        }
    }
    write_text_file(path, text);
}

/// Joint-outcome table: header `outcome_1,...,outcome_P,p_direct,p_retro,abs_diff`.
inline void write_correlation_csv(const std::string& path, const CorrelationTable& table) {
    const Index parties = table.shape.n_parties();
    std::string text;
    for (Index p = 0; p < parties; ++p) {
        text += "outcome_" + std::to_string(p + 1);
        text += ',';
    }
    text += "p_direct,p_retro,abs_diff\n";
    const Index rows = table.shape.flat_dim();
    for (Index r = 0; r < rows; ++r) {
        const std::vector<Index> branch = table.shape.unflatten(r);
        for (Index p = 0; p < parties; ++p) {
            const auto& vals = table.outcomes[static_cast<size_t>(p)];
            text += csv_real(vals[static_cast<size_t>(branch[static_cast<size_t>(p)])]);
            text += ',';
        }
        const Real pd = table.p_direct[static_cast<size_t>(r)];
        const Real pr = table.p_retro[static_cast<size_t>(r)];
        text += csv_real(pd);
        text += ',';
        text += csv_real(pr);
        text += ',';
        text += csv_real(std::abs(pd - pr));
        text += '\n';
    }
    write_text_file(path, text);
}

/// Zig-zag record log: header `a,b,outcome1,outcome2,lambda_angle`.
inline void write_records_csv(const std::string& path, const std::vector<RetroRecord>& records) {
    std::string text = "a,b,outcome1,outcome2,lambda_angle\n";
    for (const RetroRecord& r : records) {
        text += csv_real(r.setting_1.angle);
        text += ',';
        text += csv_real(r.setting_2.angle);
        text += ',';
        text += std::to_string(r.outcome_1);
        text += ',';
        text += std::to_string(r.outcome_2);
        text += ',';
        text += csv_real(lambda_bloch_angle(r.lambda));
        text += '\n';
    }
    write_text_file(path, text);
}

/// Trajectory samples: header `traj_id,t,x,singular`.
inline void write_trajectories_csv(const std::string& path,
                                   const std::vector<Trajectory>& trajectories) {
    std::string text = "traj_id,t,x,singular\n";
    for (size_t id = 0; id < trajectories.size(); ++id) {
        const Trajectory& tr = trajectories[id];
        for (Index k = 0; k < tr.times.size(); ++k) {
            text += std::to_string(id);
            text += ',';
            text += csv_real(tr.times[k]);
            text += ',';
            text += csv_real(tr.positions[k]);
            text += ',';
            text += (tr.singular[static_cast<size_t>(k)] ? '1' : '0');
            text += '\n';
        }
    }
    write_text_file(path, text);
}

}  // namespace retroq
