#include "retroq/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "retroq/bell.hpp"
#include "retroq/bohmtraj.hpp"
#include "retroq/errors.hpp"
#include "retroq/factorize.hpp"
#include "retroq/io.hpp"
#include "retroq/qcore.hpp"
#include "retroq/qgrid.hpp"
#include "retroq/random.hpp"
#include "retroq/tsvf.hpp"

namespace retroq {
namespace {

constexpr Real kInf = std::numeric_limits<Real>::infinity();

const std::vector<std::string> kScenarios = {"factorize", "weakfield", "average", "bell",
                                             "chsh",      "trajectories", "continuity"};

// ---------------------------------------------------------------------------
// Schema walking. Every violation is recorded with the JSON pointer of the
// offending (or missing) key; nothing throws until the whole document has
// been walked, so the caller sees all problems at once.

class Schema {
  public:
    explicit Schema(const Json& doc) : doc_(doc) {}

    std::vector<std::string> errs;

    bool has(const std::string& ptr) const { return doc_.contains(Json::json_pointer(ptr)); }
    const Json& at(const std::string& ptr) const { return doc_.at(Json::json_pointer(ptr)); }

    void fail(const std::string& ptr, const std::string& what) {
        errs.push_back(ptr + ": " + what);
    }

    static std::string bounds(Real lo, Real hi) {
        if (lo == -kInf && hi == kInf) return "a number";
        if (hi == kInf) return "a number >= " + fmt_real(lo);
        if (lo == -kInf) return "a number <= " + fmt_real(hi);
        return "a number in [" + fmt_real(lo) + ", " + fmt_real(hi) + "]";
    }

    Real number(const std::string& ptr, bool required, Real fallback, Real lo = -kInf,
                Real hi = kInf) {
        if (!has(ptr)) {
            if (required) fail(ptr, "required key is missing (" + bounds(lo, hi) + ")");
            return fallback;
        }
        const Json& v = at(ptr);
        if (!v.is_number()) {
            fail(ptr, "must be " + bounds(lo, hi));
            return fallback;
        }
        const Real x = v.get<Real>();
        if (!(x >= lo && x <= hi)) {
            fail(ptr, "must be " + bounds(lo, hi) + ", got " + fmt_real(x));
            return fallback;
        }
        return x;
    }

    Index integer(const std::string& ptr, bool required, Index fallback, Index lo, Index hi) {
        const std::string want =
            "an integer in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]";
        if (!has(ptr)) {
            if (required) fail(ptr, "required key is missing (" + want + ")");
            return fallback;
        }
        const Json& v = at(ptr);
        if (!v.is_number_integer() && !v.is_number_unsigned()) {
            fail(ptr, "must be " + want);
            return fallback;
        }
        const auto x = v.get<std::int64_t>();
        if (x < lo || x > hi) {
            fail(ptr, "must be " + want + ", got " + std::to_string(x));
            return fallback;
        }
        return static_cast<Index>(x);
    }

    std::string str(const std::string& ptr, bool required, const std::string& fallback,
                    const std::vector<std::string>& allowed) {
        std::string want = "one of {";
        for (size_t k = 0; k < allowed.size(); ++k)
            want += (k ? ", " : "") + allowed[k];
        want += "}";
        if (!has(ptr)) {
            if (required) fail(ptr, "required key is missing (" + want + ")");
            return fallback;
        }
        const Json& v = at(ptr);
        if (!v.is_string()) {
            fail(ptr, "must be " + want);
            return fallback;
        }
        const std::string x = v.get<std::string>();
        if (!allowed.empty() &&
            std::find(allowed.begin(), allowed.end(), x) == allowed.end()) {
            fail(ptr, "must be " + want + ", got \"" + x + "\"");
            return fallback;
        }
        return x;
    }

    bool object(const std::string& ptr, bool required) {
        if (!has(ptr)) {
            if (required) fail(ptr, "required object is missing");
            return false;
        }
        if (!at(ptr).is_object()) {
            fail(ptr, "must be an object");
            return false;
        }
        return true;
    }

    void only_keys(const std::string& ptr, const std::vector<std::string>& allowed) {
        const Json& obj = ptr.empty() ? doc_ : at(ptr);
        if (!obj.is_object()) return;
        for (auto it = obj.begin(); it != obj.end(); ++it)
            if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
                fail(ptr + "/" + it.key(), "unknown key");
    }

  private:
    const Json& doc_;
};

// ---------------------------------------------------------------------------
// Shared sub-schemas

Index validate_grid(Schema& s) {
    if (!s.object("/grid", true)) return 0;
    s.only_keys("/grid", {"x_min", "x_max", "n"});
    const Real lo = s.number("/grid/x_min", true, 0.0);
    const Real hi = s.number("/grid/x_max", true, 1.0);
    const Index n = s.integer("/grid/n", true, 0, 8, 4096);
    if (s.has("/grid/x_min") && s.has("/grid/x_max") && !(lo < hi))
        s.fail("/grid/x_max", "must be greater than x_min");
    return n;
}

void validate_hamiltonian(Schema& s) {
    if (!s.has("/hamiltonian")) return;
    if (!s.object("/hamiltonian", false)) return;
    s.only_keys("/hamiltonian", {"type", "mass", "omega", "x_center"});
    const std::string type =
        s.str("/hamiltonian/type", false, "free", {"free", "harmonic"});
    s.number("/hamiltonian/mass", false, 1.0, 1e-6, 1e6);
    if (type == "harmonic")
        s.number("/hamiltonian/omega", true, 1.0, 1e-6, 1e6);
    else if (s.has("/hamiltonian/omega"))
        s.fail("/hamiltonian/omega", "only valid for type \"harmonic\"");
    s.number("/hamiltonian/x_center", false, 0.0);
}

void validate_packet(Schema& s, const std::string& ptr) {
    if (!s.object(ptr, true)) return;
    s.only_keys(ptr, {"x0", "p0", "sigma"});
    s.number(ptr + "/x0", true, 0.0);
    s.number(ptr + "/p0", true, 0.0);
    s.number(ptr + "/sigma", true, 1.0, 1e-6, 1e3);
}

/// t_f, evolution dt (must divide the span to the tolerance the propagator
/// itself enforces), and an optional probe time inside [pad, t_f - pad].
struct TimeBlock {
    Real t_f = 1.0, dt = 0.01, t_probe = 0.5;
};

TimeBlock validate_times(Schema& s, Real default_steps, Real probe_frac, Real probe_pad_steps) {
    TimeBlock tb;
    tb.t_f = s.number("/t_f", true, 1.0, 1e-9, 1e6);
    tb.dt = s.number("/dt", false, tb.t_f / default_steps, 1e-9, tb.t_f);
    if (s.has("/t_f") && s.has("/dt")) {
        const Real steps = tb.t_f / tb.dt;
        if (std::abs(steps - std::round(steps)) > 1e-6)
            s.fail("/dt", "must divide t_f into an integer number of steps");
    }
    const Real pad = probe_pad_steps * tb.dt;
    tb.t_probe = s.number("/t_probe", false, probe_frac * tb.t_f, pad, tb.t_f - pad);
    return tb;
}

// ---------------------------------------------------------------------------
// Per-scenario validators

void validate_factorize(Schema& s) {
    s.only_keys("", {"scenario", "seed", "out_dir", "state", "observables"});
    const std::string state = s.str("/state", false, "singlet", {"singlet", "ghz"});
    const Index parties = state == "ghz" ? 3 : 2;
    if (s.has("/observables")) {
        const Json& obs = s.at("/observables");
        if (!obs.is_array() || static_cast<Index>(obs.size()) != parties) {
            s.fail("/observables",
                   "must be an array of " + std::to_string(parties) + " Pauli letters");
        } else {
            for (size_t k = 0; k < obs.size(); ++k)
                s.str("/observables/" + std::to_string(k), true, "z", {"x", "y", "z"});
        }
    }
}

void validate_weakfield(Schema& s) {
    s.only_keys("", {"scenario", "seed", "out_dir", "grid", "hamiltonian", "initial", "final",
                     "t_f", "dt", "t_probe", "require_min_below"});
    validate_grid(s);
    validate_hamiltonian(s);
    validate_packet(s, "/initial");
    validate_packet(s, "/final");
    validate_times(s, 100.0, 0.5, 0.0);
    s.number("/require_min_below", false, 0.0);
}

void validate_average(Schema& s) {
    s.only_keys("", {"scenario", "seed", "out_dir", "grid", "hamiltonian", "initial", "t_f",
                     "dt", "t_probe"});
    validate_grid(s);
    validate_hamiltonian(s);
    validate_packet(s, "/initial");
    validate_times(s, 100.0, 0.5, 0.0);
}

void validate_bell(Schema& s) {
    s.only_keys("", {"scenario", "seed", "out_dir", "a", "b", "a_settings", "b_settings",
                     "samples", "planted_bias"});
    s.integer("/samples", true, 0, 1, 100000000);
    s.number("/planted_bias", false, 0.0, 1e-6, 0.5);
    const bool single = s.has("/a") || s.has("/b");
    const bool multi = s.has("/a_settings") || s.has("/b_settings");
    if (single && multi) {
        s.fail("/a", "give either a/b or a_settings/b_settings, not both");
        return;
    }
    if (!single && !multi) {
        s.fail("/a", "required: either a/b (single pair) or a_settings/b_settings");
        return;
    }
    if (single) {
        s.number("/a", true, 0.0);
        s.number("/b", true, 0.0);
        return;
    }
    for (const char* key : {"/a_settings", "/b_settings"}) {
        if (!s.has(key)) {
            s.fail(key, "required key is missing (array of angles)");
            continue;
        }
        const Json& arr = s.at(key);
        const size_t min_size = std::string(key) == "/a_settings" ? 2 : 1;
        if (!arr.is_array() || arr.size() < min_size) {
            s.fail(key, "must be an array of at least " + std::to_string(min_size) + " angles");
            continue;
        }
        for (size_t k = 0; k < arr.size(); ++k)
            s.number(std::string(key) + "/" + std::to_string(k), true, 0.0);
    }
}

void validate_chsh(Schema& s) {
    s.only_keys("", {"scenario", "seed", "out_dir", "angles", "samples"});
    s.integer("/samples", true, 0, 1, 100000000);
    if (s.has("/angles")) {
        const Json& arr = s.at("/angles");
        if (!arr.is_array() || arr.size() != 4) {
            s.fail("/angles", "must be an array of exactly 4 angles [a, a', b, b']");
        } else {
            for (size_t k = 0; k < 4; ++k)
                s.number("/angles/" + std::to_string(k), true, 0.0);
        }
    }
}

void validate_trajectories(Schema& s) {
    s.only_keys("", {"scenario", "seed", "out_dir", "grid", "hamiltonian", "initial", "basis",
                     "t_f", "field_dt", "traj_dt", "t_probe", "n_traj", "start", "n_bins",
                     "sample_paths"});
    const Index grid_n = validate_grid(s);
    validate_hamiltonian(s);
    s.str("/basis", false, "box", {"box", "self"});
    s.integer("/n_traj", true, 0, 1, 10000000);
    s.str("/start", false, "weak_positive", {"weak_positive", "born"});
    s.integer("/n_bins", false, 32, 4, 512);
    s.integer("/sample_paths", false, 8, 0, 256);

    const Real t_f = s.number("/t_f", true, 1.0, 1e-9, 1e6);
    const Real field_dt = s.number("/field_dt", false, t_f / 50.0, 1e-9, t_f);
    if (s.has("/t_f") && s.has("/field_dt")) {
        const Real steps = t_f / field_dt;
        if (std::abs(steps - std::round(steps)) > 1e-6)
            s.fail("/field_dt", "must divide t_f into an integer number of steps");
    }
    s.number("/traj_dt", false, field_dt, 1e-9, t_f);
    s.number("/t_probe", false, t_f, 0.0, t_f);

    if (!s.object("/initial", true)) return;
    const std::string type =
        s.str("/initial/type", false, "gaussian", {"gaussian", "box_modes"});
    if (type == "gaussian") {
        s.only_keys("/initial", {"type", "x0", "p0", "sigma"});
        s.number("/initial/x0", true, 0.0);
        s.number("/initial/p0", true, 0.0);
        s.number("/initial/sigma", true, 1.0, 1e-6, 1e3);
    } else {
        s.only_keys("/initial", {"type", "coefficients"});
        if (!s.has("/initial/coefficients") || !s.at("/initial/coefficients").is_array() ||
            s.at("/initial/coefficients").empty()) {
            s.fail("/initial/coefficients", "must be a non-empty array of {index, re, im}");
            return;
        }
        const Json& arr = s.at("/initial/coefficients");
        for (size_t k = 0; k < arr.size(); ++k) {
            const std::string ptr = "/initial/coefficients/" + std::to_string(k);
            if (!s.object(ptr, true)) continue;
            s.only_keys(ptr, {"index", "re", "im"});
            s.integer(ptr + "/index", true, 0, 0, grid_n > 0 ? grid_n - 1 : 4095);
            s.number(ptr + "/re", false, 0.0);
            s.number(ptr + "/im", false, 0.0);
        }
    }
}

void validate_continuity(Schema& s) {
    s.only_keys("", {"scenario", "seed", "out_dir", "grid", "hamiltonian", "initial", "final",
                     "t_f", "dt", "t_probe", "dt_probe", "levels"});
    validate_grid(s);
    validate_hamiltonian(s);
    validate_packet(s, "/initial");
    validate_packet(s, "/final");
    const TimeBlock tb = validate_times(s, 100.0, 0.5, 1.0);
    s.number("/dt_probe", false, tb.dt, 1e-12, tb.t_f);
    s.integer("/levels", false, 2, 1, 4);
}

// ---------------------------------------------------------------------------
// Builders (assume a validated document)

Grid1D build_grid(const Json& p) {
    return Grid1D::over(p.at(Json::json_pointer("/grid/x_min")).get<Real>(),
                        p.at(Json::json_pointer("/grid/x_max")).get<Real>(),
                        p.at(Json::json_pointer("/grid/n")).get<Index>());
}

Hamiltonian1D build_hamiltonian(const Json& p, const Grid1D& grid) {
    const Json h = p.value("hamiltonian", Json::object());
    const Real mass = h.value("mass", 1.0);
    if (h.value("type", std::string("free")) == "harmonic")
        return harmonic_hamiltonian(grid, mass, h.at("omega").get<Real>(),
                                    h.value("x_center", 0.0));
    return free_hamiltonian(grid, mass);
}

Wave1P build_packet(const Json& p, const std::string& key, const Grid1D& grid, Real t) {
    const Json& g = p.at(key);
    Wave1P w = make_gaussian(grid, g.at("x0").get<Real>(), g.at("p0").get<Real>(),
                             g.at("sigma").get<Real>());
    w.t = t;
    return w;
}

Op pauli_by_letter(const std::string& letter) {
    if (letter == "x") return pauli_x();
    if (letter == "y") return pauli_y();
    return pauli_z();
}

std::string join_path(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

// ---------------------------------------------------------------------------
// Scenario bodies. Each returns pass/fail and fills metrics + artifacts.

bool run_factorize(const ScenarioConfig& cfg, Json& metrics, std::vector<std::string>& arts) {
    const std::string state_name = cfg.params.value("state", std::string("singlet"));
    const bool is_ghz = state_name == "ghz";
    const StateVec state = is_ghz ? ghz(3) : singlet();
    const ProductIndex idx(is_ghz ? std::vector<Index>{2, 2, 2} : std::vector<Index>{2, 2});

    std::vector<std::string> letters;
    if (cfg.params.contains("observables"))
        for (const auto& o : cfg.params.at("observables"))
            letters.push_back(o.get<std::string>());
    else
        letters.assign(static_cast<size_t>(idx.n_parties()), is_ghz ? "x" : "z");

    std::vector<Op> obs;
    for (const auto& l : letters) obs.push_back(pauli_by_letter(l));

    const CorrelationTable table = reconstruct_statistics(state, idx, obs);
    write_correlation_csv(join_path(cfg.out_dir, "correlations.csv"), table);
    arts.push_back("correlations.csv");

    metrics["state"] = state_name;
    metrics["max_table_diff"] = table.max_abs_diff;
    metrics["n_rows"] = static_cast<std::int64_t>(table.p_direct.size());
    const bool pass = table.max_abs_diff <= 1e-10;
    metrics["pass"] = pass;
    return pass;
}

bool run_weakfield(const ScenarioConfig& cfg, Json& metrics, std::vector<std::string>& arts) {
    const Json& p = cfg.params;
    const Grid1D grid = build_grid(p);
    const Hamiltonian1D h = build_hamiltonian(p, grid);
    const Real t_f = p.at("t_f").get<Real>();
    const Real dt = p.value("dt", t_f / 100.0);
    const Real t_probe = p.value("t_probe", 0.5 * t_f);

    const Wave1P initial = build_packet(p, "initial", grid, 0.0);
    const Wave1P final_state = build_packet(p, "final", grid, t_f);
    const TwoStateWave tsw(initial, final_state, h, dt);

    const WeakField rho = weak_density(tsw, FieldKind::Density, t_probe);
    const WeakField cur = weak_density(tsw, FieldKind::Current, t_probe);
    write_weak_field_csv(join_path(cfg.out_dir, "weakfield.csv"), {rho, cur});
    write_wave_csv(join_path(cfg.out_dir, "initial.csv"), initial);
    write_wave_csv(join_path(cfg.out_dir, "final.csv"), final_state);
    arts.insert(arts.end(), {"weakfield.csv", "initial.csv", "final.csv"});

    const Real min_value = rho.min_value();
    const Real min_x = grid.point(rho.min_index());
    std::printf("min_value=%s at x=%s\n", csv_real(min_value).c_str(), csv_real(min_x).c_str());

    metrics["min_value"] = min_value;
    metrics["min_x"] = min_x;
    metrics["t"] = rho.t;
    bool pass = true;
    if (p.contains("require_min_below")) {
        pass = min_value < p.at("require_min_below").get<Real>();
        metrics["require_min_below"] = p.at("require_min_below").get<Real>();
    }
    metrics["pass"] = pass;
    return pass;
}

bool run_average(const ScenarioConfig& cfg, Json& metrics, std::vector<std::string>& arts) {
    const Json& p = cfg.params;
    const Grid1D grid = build_grid(p);
    const Hamiltonian1D h = build_hamiltonian(p, grid);
    const Real t_f = p.at("t_f").get<Real>();
    const Real dt = p.value("dt", t_f / 100.0);
    const Real t_probe = p.value("t_probe", 0.5 * t_f);
    const Index s = static_cast<Index>(std::llround(t_probe / dt));
    const Real t_snap = static_cast<Real>(s) * dt;

    const Wave1P initial = build_packet(p, "initial", grid, 0.0);
    const GridEigenbasis eig = grid_eigenbasis(h, grid);

    const WeakField avg =
        average_over_final(initial, eig.modes, h, t_f, dt, FieldKind::Density, t_snap);
    const VecR born = evolve(initial, h, dt, s).amps.cwiseAbs2();
    const Real max_diff = (avg.values - born).cwiseAbs().maxCoeff();

    write_weak_field_csv(join_path(cfg.out_dir, "average.csv"), {avg});
    arts.push_back("average.csv");

    metrics["max_pointwise_diff"] = max_diff;
    metrics["t"] = avg.t;
    const bool pass = max_diff <= 1e-8;
    metrics["pass"] = pass;
    return pass;
}

bool run_bell(const ScenarioConfig& cfg, Json& metrics, std::vector<std::string>& arts) {
    const Json& p = cfg.params;
    const Index samples = p.at("samples").get<Index>();
    const bool planted = p.contains("planted_bias");
    const Real bias = planted ? p.at("planted_bias").get<Real>() : 0.0;
    Rng rng(cfg.seed);

    std::vector<RetroRecord> records;
    records.reserve(static_cast<size_t>(samples));
    bool pass = false;

    if (p.contains("a")) {
        const Setting a{p.at("a").get<Real>()}, b{p.at("b").get<Real>()};
        Real sum = 0.0;
        for (Index k = 0; k < samples; ++k) {
            records.push_back(planted ? retro_sample_planted(a, b, rng, bias)
                                      : retro_sample(a, b, rng));
            sum += static_cast<Real>(records.back().outcome_1 * records.back().outcome_2);
        }
        const Real e_emp = sum / static_cast<Real>(samples);
        const Real e_ana = singlet_correlation(a, b);
        const Real sigma = std::max(
            std::sqrt(std::max(1.0 - e_emp * e_emp, 0.0) / static_cast<Real>(samples)),
            1.0 / static_cast<Real>(samples));
        const Real z = std::abs(e_emp - e_ana) / sigma;
        metrics["e_empirical"] = e_emp;
        metrics["e_analytic"] = e_ana;
        metrics["z"] = z;
        pass = z <= 3.0;
    } else {
        std::vector<Real> as, bs;
        for (const auto& v : p.at("a_settings")) as.push_back(v.get<Real>());
        for (const auto& v : p.at("b_settings")) bs.push_back(v.get<Real>());
        for (Index k = 0; k < samples; ++k) {
            const auto ai = std::min(as.size() - 1,
                                     static_cast<size_t>(uniform01(rng) * as.size()));
            const auto bi = std::min(bs.size() - 1,
                                     static_cast<size_t>(uniform01(rng) * bs.size()));
            const Setting a{as[ai]}, b{bs[bi]};
            records.push_back(planted ? retro_sample_planted(a, b, rng, bias)
                                      : retro_sample(a, b, rng));
        }
        const LocalityReport rep = locality_check(records);
        metrics["max_cond_discrepancy"] = rep.max_cond_discrepancy;
        metrics["lambda_dependence_z"] = rep.lambda_dependence_z;
        metrics["lambda_depends_on_a"] = rep.lambda_depends_on_a;
        metrics["cells_compared"] = static_cast<std::int64_t>(rep.cells_compared);
        pass = rep.pass && rep.lambda_depends_on_a;
    }

    write_records_csv(join_path(cfg.out_dir, "records.csv"), records);
    arts.push_back("records.csv");
    metrics["samples"] = static_cast<std::int64_t>(samples);
    metrics["pass"] = pass;
    return pass;
}

bool run_chsh(const ScenarioConfig& cfg, Json& metrics, std::vector<std::string>& arts) {
    const Json& p = cfg.params;
    const Index samples = p.at("samples").get<Index>();
    std::vector<Real> angles = {0.0, 0.5 * kPi, 0.25 * kPi, 0.75 * kPi};
    if (p.contains("angles")) {
        angles.clear();
        for (const auto& v : p.at("angles")) angles.push_back(v.get<Real>());
    }
    const Setting a{angles[0]}, ap{angles[1]}, b{angles[2]}, bp{angles[3]};

    Rng rng(cfg.seed);
    std::vector<RetroRecord> records;
    records.reserve(static_cast<size_t>(4 * samples));

    // Same combination as the analytic S: E(a,b) - E(a,b') + E(a',b) + E(a',b').
    const std::pair<Setting, Setting> pairs[4] = {{a, b}, {a, bp}, {ap, b}, {ap, bp}};
    const Real signs[4] = {1.0, -1.0, 1.0, 1.0};
    Real s_emp = 0.0, var_s = 0.0;
    for (int k = 0; k < 4; ++k) {
        Real sum = 0.0;
        for (Index j = 0; j < samples; ++j) {
            records.push_back(retro_sample(pairs[k].first, pairs[k].second, rng));
            sum += static_cast<Real>(records.back().outcome_1 * records.back().outcome_2);
        }
        const Real e = sum / static_cast<Real>(samples);
        s_emp += signs[k] * e;
        var_s += std::max(1.0 - e * e, 0.0) / static_cast<Real>(samples);
    }
    const Real s_ana = chsh(a, ap, b, bp);
    const Real sigma = std::max(std::sqrt(var_s), 1.0 / static_cast<Real>(samples));
    const Real z = std::abs(s_emp - s_ana) / sigma;

    write_records_csv(join_path(cfg.out_dir, "records.csv"), records);
    arts.push_back("records.csv");

    metrics["chsh"] = s_emp;
    metrics["chsh_analytic"] = s_ana;
    metrics["sigma"] = sigma;
    metrics["z"] = z;
    metrics["samples"] = static_cast<std::int64_t>(samples);
    const bool pass = z <= 3.0;
    metrics["pass"] = pass;
    return pass;
}

bool run_trajectories(const ScenarioConfig& cfg, Json& metrics, std::vector<std::string>& arts) {
    const Json& p = cfg.params;
    const Grid1D grid = build_grid(p);
    const Hamiltonian1D h = build_hamiltonian(p, grid);
    const Real t_f = p.at("t_f").get<Real>();
    const Real field_dt = p.value("field_dt", t_f / 50.0);
    const Real traj_dt = p.value("traj_dt", field_dt);
    const Real t_probe = p.value("t_probe", t_f);
    const Index n_steps = static_cast<Index>(std::llround(t_f / field_dt));

    Wave1P initial;
    initial.grid = grid;
    initial.t = 0.0;
    const Json& init = p.at("initial");
    if (init.value("type", std::string("gaussian")) == "gaussian") {
        initial = build_packet(p, "initial", grid, 0.0);
    } else {
        const GridEigenbasis eig = grid_eigenbasis(h, grid);
        initial.amps = VecC::Zero(grid.n);
        for (const auto& c : init.at("coefficients")) {
            const Index idx = c.at("index").get<Index>();
            if (idx >= grid.n)
                throw ValidationError("/initial/coefficients: mode index " +
                                      std::to_string(idx) + " out of range for n = " +
                                      std::to_string(grid.n));
            initial.amps +=
                Complex(c.value("re", 0.0), c.value("im", 0.0)) * eig.modes.col(idx);
        }
        initial = grid_normalized(std::move(initial));
    }

    MatC modes;
    if (p.value("basis", std::string("box")) == "box") {
        modes = grid_eigenbasis(h, grid).modes;
    } else {
        const Wave1P at_tf = evolve(initial, h, field_dt, n_steps);
        modes = basis_containing(at_tf.amps, grid);
    }

    EnsembleSpec spec;
    spec.n_traj = p.at("n_traj").get<Index>();
    spec.start = p.value("start", std::string("weak_positive")) == "born"
                     ? StartMode::BornDensity
                     : StartMode::WeakPositive;
    spec.traj_dt = traj_dt;
    spec.seed = cfg.seed;
    const Index n_bins = p.value("n_bins", Index(32));

    const EnsembleReport rep =
        ensemble_density(spec, initial, modes, h, t_f, field_dt, t_probe, n_bins);

    // A few full paths along the dominant final mode, launched from evenly
    // spaced quantiles of its positive launch density.
    const Index n_paths = p.value("sample_paths", Index(8));
    std::vector<Trajectory> paths;
    if (n_paths > 0) {
        const VecC psi_tf = evolve(initial, h, field_dt, n_steps).amps;
        Index k_dom = 0;
        Real w_best = -1.0;
        for (Index k = 0; k < modes.cols(); ++k) {
            const Real w = std::norm(modes.col(k).dot(psi_tf) * grid.dx);
            if (w > w_best) {
                w_best = w;
                k_dom = k;
            }
        }
        Wave1P probe;
        probe.grid = grid;
        probe.t = t_f;
        probe.amps = modes.col(k_dom);
        const FlowField flow(TwoStateWave(initial, grid_normalized(std::move(probe)), h,
                                          field_dt));
        const VecR launch = flow.rho_step(0).cwiseMax(0.0);
        const Real total = launch.sum();
        if (total > 0.0) {
            for (Index j = 0; j < n_paths; ++j) {
                const Real target = (static_cast<Real>(j) + 0.5) /
                                    static_cast<Real>(n_paths) * total;
                Real cum = 0.0;
                Index node = 0;
                for (; node < grid.n - 1; ++node) {
                    cum += launch[node];
                    if (cum >= target) break;
                }
                paths.push_back(integrate_trajectory(flow, grid.point(node), traj_dt));
            }
        }
    }
    write_trajectories_csv(join_path(cfg.out_dir, "trajectories.csv"), paths);
    arts.push_back("trajectories.csv");

    Json ens;
    ens["chi2"] = rep.chi2;
    ens["dof"] = static_cast<std::int64_t>(rep.dof);
    ens["p_value"] = rep.p_value;
    ens["neg_mass_fraction"] = rep.neg_mass_fraction;
    ens["n_singular"] = static_cast<std::int64_t>(rep.n_singular);
    write_text_file(join_path(cfg.out_dir, "ensemble.json"), ens.dump(2) + "\n");
    arts.push_back("ensemble.json");

    metrics["chi2"] = rep.chi2;
    metrics["dof"] = static_cast<std::int64_t>(rep.dof);
    metrics["p_value"] = rep.p_value;
    metrics["neg_mass_fraction"] = rep.neg_mass_fraction;
    metrics["n_singular"] = static_cast<std::int64_t>(rep.n_singular);
    const bool pass = rep.p_value > 0.01;
    metrics["pass"] = pass;
    return pass;
}

bool run_continuity(const ScenarioConfig& cfg, Json& metrics, std::vector<std::string>& arts) {
    const Json& p = cfg.params;
    const Real t_f = p.at("t_f").get<Real>();
    const Real dt = p.value("dt", t_f / 100.0);
    const Real t_probe = p.value("t_probe", 0.5 * t_f);
    const Real dt_probe0 = p.value("dt_probe", dt);
    const Index levels = p.value("levels", Index(2));
    const Index n0 = p.at(Json::json_pointer("/grid/n")).get<Index>();
    const Real x_min = p.at(Json::json_pointer("/grid/x_min")).get<Real>();
    const Real x_max = p.at(Json::json_pointer("/grid/x_max")).get<Real>();

    std::vector<Real> max_residuals;
    Real total_drift = 0.0;
    for (Index level = 0; level < levels; ++level) {
        const Index n = (n0 - 1) * (Index(1) << level) + 1;
        const Grid1D grid = Grid1D::over(x_min, x_max, n);
        const Hamiltonian1D h = build_hamiltonian(p, grid);
        const Wave1P initial = build_packet(p, "initial", grid, 0.0);
        const Wave1P final_state = build_packet(p, "final", grid, t_f);
        const TwoStateWave tsw(initial, final_state, h, dt);
        const Real dt_probe = dt_probe0 / static_cast<Real>(Index(1) << level);

        const WeakField res = continuity_residual(tsw, t_probe, dt_probe);
        max_residuals.push_back(res.values.cwiseAbs().maxCoeff());
        const std::string name = "continuity_level" + std::to_string(level) + ".csv";
        write_weak_field_csv(join_path(cfg.out_dir, name), {res});
        arts.push_back(name);

        if (level == 0) {
            // Total weak probability is conserved: the integral of the time
            // derivative over the box must vanish.
            const Index s = tsw.index_of(t_probe);
            const WeakField rho_p =
                weak_density(tsw, FieldKind::Density, tsw.time_at(s + 1));
            const WeakField rho_m =
                weak_density(tsw, FieldKind::Density, tsw.time_at(s - 1));
            total_drift =
                (rho_p.values.sum() - rho_m.values.sum()) * grid.dx / (2.0 * dt);
        }
    }

    std::vector<Real> ratios;
    for (size_t k = 1; k < max_residuals.size(); ++k)
        ratios.push_back(max_residuals[k - 1] / std::max(max_residuals[k], 1e-300));

    metrics["max_residual_by_level"] = max_residuals;
    metrics["refinement_ratios"] = ratios;
    metrics["total_drift"] = total_drift;
    bool pass = std::abs(total_drift) <= 1e-8;
    for (const Real r : ratios) pass = pass && r >= 3.0;
    metrics["pass"] = pass;
    return pass;
}

}  // namespace

// ---------------------------------------------------------------------------
// Public entry points

std::vector<std::string> validate_config(const Json& doc) {
    Schema s(doc);
    if (!doc.is_object()) {
        s.fail("", "config must be a JSON object");
        return s.errs;
    }
    const std::string scenario = s.str("/scenario", true, "", kScenarios);
    s.integer("/seed", false, 0, 0, std::numeric_limits<Index>::max());
    s.str("/out_dir", false, ".", {});
    if (scenario.empty()) return s.errs;  // unknown scenario: nothing more to check

    if (scenario == "factorize") validate_factorize(s);
    else if (scenario == "weakfield") validate_weakfield(s);
    else if (scenario == "average") validate_average(s);
    else if (scenario == "bell") validate_bell(s);
    else if (scenario == "chsh") validate_chsh(s);
    else if (scenario == "trajectories") validate_trajectories(s);
    else if (scenario == "continuity") validate_continuity(s);
    return s.errs;
}

ScenarioConfig parse_config(const std::string& text) {
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ParseError(e.what());
    }
    const std::vector<std::string> errs = validate_config(doc);
    if (!errs.empty()) {
        std::string msg;
        for (const auto& e : errs) msg += (msg.empty() ? "" : "\n") + e;
        throw ValidationError(msg);
    }
    ScenarioConfig cfg;
    cfg.scenario = doc.at("scenario").get<std::string>();
    cfg.seed = doc.value("seed", std::uint64_t(0));
    cfg.out_dir = doc.value("out_dir", std::string("."));
    cfg.params = std::move(doc);
    return cfg;
}

RunResult run_scenario(const ScenarioConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + cfg.out_dir);

    Json metrics = Json::object();
    std::vector<std::string> artifacts;
    bool pass = false;
    if (cfg.scenario == "factorize") pass = run_factorize(cfg, metrics, artifacts);
    else if (cfg.scenario == "weakfield") pass = run_weakfield(cfg, metrics, artifacts);
    else if (cfg.scenario == "average") pass = run_average(cfg, metrics, artifacts);
    else if (cfg.scenario == "bell") pass = run_bell(cfg, metrics, artifacts);
    else if (cfg.scenario == "chsh") pass = run_chsh(cfg, metrics, artifacts);
    else if (cfg.scenario == "trajectories") pass = run_trajectories(cfg, metrics, artifacts);
    else if (cfg.scenario == "continuity") pass = run_continuity(cfg, metrics, artifacts);
    else throw ValidationError("/scenario: unknown scenario \"" + cfg.scenario + "\"");

    const auto t1 = std::chrono::steady_clock::now();
    RunResult result;
    result.status = pass ? 0 : 1;
    result.report["scenario"] = cfg.scenario;
    result.report["seed"] = cfg.seed;
    result.report["elapsed_s"] = std::chrono::duration<Real>(t1 - t0).count();
    result.report["metrics"] = metrics;
    result.report["artifacts"] = artifacts;
    write_text_file(join_path(cfg.out_dir, "report.json"), result.report.dump(2) + "\n");
    return result;
}

}  // namespace retroq
