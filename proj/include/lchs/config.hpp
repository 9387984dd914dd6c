#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lchs/circuit.hpp"
#include "lchs/discretize.hpp"
#include "lchs/errors.hpp"
#include "lchs/grid.hpp"

namespace lchs {

using Json = nlohmann::json;

inline constexpr int kConfigSchemaVersion = 1;

struct LchsParams {
    int nAnc = 8;
    int nFrac = 1;
    int rPhi = 2;
    int rPsi = 10;
    int layers = 1;
    double tol = 1.0e-6;
    TrotterOrder order = TrotterOrder::Second;
};

struct OutputSpec {
    std::vector<double> times;
    bool csv = true;
    bool ppm = false;
    std::string directory = "out";
};

struct ValidationSpec {
    bool dense = true;
    bool fdm = true;
    bool tauSweep = true;
    bool ancSweep = false;
    double fdmTau = 1.0e-3;
    int normSamples = 21;
};

// Full run description: the problem, its initial data, the quantum-method
// parameters, and what to emit. Initial box shapes are remembered when the
// field is exactly one box on a zero background, so state preparation can be
// exported as gates.
struct RunConfig {
    PdeProblem problem;
    PiecewiseField initialU = PiecewiseField::constant("u", 0.0);
    PiecewiseField initialUDot = PiecewiseField::constant("u_dot", 0.0);
    std::optional<Box> initialUBox;
    std::optional<Box> initialUDotBox;
    LchsParams lchs;
    OutputSpec outputs;
    ValidationSpec validation;
};

namespace config_detail {

inline const Json& require(const Json& j, const std::string& key, const std::string& stage) {
    if (!j.is_object()) throw ConfigError(stage + ": expected an object");
    auto it = j.find(key);
    if (it == j.end()) throw ConfigError(stage + ": missing key '" + key + "'");
    return *it;
}

inline void rejectUnknown(const Json& j, std::initializer_list<const char*> allowed,
                          const std::string& stage) {
    if (!j.is_object()) throw ConfigError(stage + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) ok = true;
        if (!ok) throw ConfigError(stage + ": unknown key '" + it.key() + "'");
    }
}

inline double toNumber(const Json& j, const std::string& stage) {
    if (!j.is_number()) throw ConfigError(stage + ": expected a number");
    return j.get<double>();
}

inline int toInt(const Json& j, const std::string& stage) {
    if (!j.is_number_integer()) throw ConfigError(stage + ": expected an integer");
    return j.get<int>();
}

inline std::string toString(const Json& j, const std::string& stage) {
    if (!j.is_string()) throw ConfigError(stage + ": expected a string");
    return j.get<std::string>();
}

inline bool toBool(const Json& j, const std::string& stage) {
    if (!j.is_boolean()) throw ConfigError(stage + ": expected a boolean");
    return j.get<bool>();
}

inline Box parseBox(const Json& j, const Grid& grid, const std::string& stage) {
    if (!j.is_array() || static_cast<int>(j.size()) != grid.d)
        throw ConfigError(stage + ": box needs one [lo, hi] pair per axis");
    Box box;
    for (const Json& pair : j) {
        if (!pair.is_array() || pair.size() != 2)
            throw ConfigError(stage + ": box entries must be [lo, hi] pairs");
        box.range.push_back({toInt(pair[0], stage), toInt(pair[1], stage)});
    }
    box.validate(grid);
    return box;
}

struct ParsedField {
    PiecewiseField field;
    std::optional<Box> soleBox;
};

// Field format: {"default": v, "regions": [{"box": [[lo,hi]...], "value": v} |
// {"nodes": [j...], "value": v}]}. Regions must not overlap.
inline ParsedField parseField(const Json& j, const Grid& grid, const std::string& name) {
    const std::string stage = "field " + name;
    rejectUnknown(j, {"default", "regions"}, stage);
    ParsedField out;
    out.field = PiecewiseField::constant(name, 0.0);
    if (j.contains("default")) out.field.defaultValue = toNumber(j["default"], stage);
    if (j.contains("regions")) {
        const Json& regions = j["regions"];
        if (!regions.is_array()) throw ConfigError(stage + ": regions must be an array");
        for (const Json& r : regions) {
            rejectUnknown(r, {"box", "nodes", "value"}, stage);
            PiecewiseField::Region region;
            region.value = toNumber(require(r, "value", stage), stage);
            const bool hasBox = r.contains("box"), hasNodes = r.contains("nodes");
            if (hasBox == hasNodes)
                throw ConfigError(stage + ": each region needs exactly one of box or nodes");
            if (hasBox) {
                const Box box = parseBox(r["box"], grid, stage);
                region.nodes = box.nodes(grid);
                if (regions.size() == 1 && out.field.defaultValue == 0.0) out.soleBox = box;
            } else {
                const Json& nodes = r["nodes"];
                if (!nodes.is_array()) throw ConfigError(stage + ": nodes must be an array");
                for (const Json& n : nodes) {
                    const long long v = n.is_number_integer()
                                            ? n.get<long long>()
                                            : throw ConfigError(stage + ": node indices must be integers");
                    if (v < 0 || std::uint64_t(v) >= grid.nodeCount())
                        throw ConfigError(stage + ": node index out of range");
                    region.nodes.push_back(std::uint64_t(v));
                }
                std::sort(region.nodes.begin(), region.nodes.end());
                region.nodes.erase(std::unique(region.nodes.begin(), region.nodes.end()),
                                   region.nodes.end());
            }
            out.field.regions.push_back(std::move(region));
        }
    }
    out.field.validate(grid);
    return out;
}

} // namespace config_detail

inline std::vector<double> fieldNodeValues(const PiecewiseField& f, const Grid& g) {
    std::vector<double> values(g.nodeCount());
    for (std::uint64_t j = 0; j < g.nodeCount(); ++j) values[j] = f.at(j);
    return values;
}

inline RunConfig parseRunConfig(const Json& j) {
    using namespace config_detail;
    rejectUnknown(j, {"schema", "problem", "initial", "lchs", "outputs", "validation"}, "config");
    if (toInt(require(j, "schema", "config"), "config: schema") != kConfigSchemaVersion)
        throw ConfigError("config: unsupported schema version");

    RunConfig cfg;
    const Json& problem = require(j, "problem", "config");
    rejectUnknown(problem, {"family", "grid", "boundary", "coefficients", "time"}, "problem");

    const std::string family = toString(require(problem, "family", "problem"), "problem: family");
    if (family == "second-order")
        cfg.problem.family = PdeFamily::SecondOrder;
    else if (family == "first-order")
        cfg.problem.family = PdeFamily::FirstOrder;
    else
        throw ConfigError("problem: family must be 'second-order' or 'first-order'");

    {
        const Json& grid = require(problem, "grid", "problem");
        rejectUnknown(grid, {"d", "nbits", "h"}, "grid");
        cfg.problem.grid.d = toInt(require(grid, "d", "grid"), "grid: d");
        const Json& nbits = require(grid, "nbits", "grid");
        if (!nbits.is_array()) throw ConfigError("grid: nbits must be an array");
        for (const Json& n : nbits)
            cfg.problem.grid.nBitsPerAxis.push_back(toInt(n, "grid: nbits"));
        if (grid.contains("h")) cfg.problem.grid.h = toNumber(grid["h"], "grid: h");
        cfg.problem.grid.validate();
    }

    {
        const Json& boundary = require(problem, "boundary", "problem");
        if (!boundary.is_array()) throw ConfigError("boundary: expected one entry per axis");
        for (const Json& b : boundary) {
            rejectUnknown(b, {"low", "high"}, "boundary");
            BoundarySpec::AxisFaces faces;
            faces.low = boundaryFromName(toString(require(b, "low", "boundary"), "boundary"));
            faces.high = boundaryFromName(toString(require(b, "high", "boundary"), "boundary"));
            cfg.problem.boundary.axes.push_back(faces);
        }
        cfg.problem.boundary.validate(cfg.problem.grid);
    }

    {
        const Json& coef = require(problem, "coefficients", "problem");
        rejectUnknown(coef, {"rho", "kappa", "zeta", "alpha", "beta"}, "coefficients");
        auto grab = [&](const char* name, PiecewiseField& into, double fallback) {
            if (coef.contains(name)) {
                into = parseField(coef[name], cfg.problem.grid, name).field;
            } else {
                into = PiecewiseField::constant(name, fallback);
            }
        };
        grab("rho", cfg.problem.rho, 1.0);
        grab("kappa", cfg.problem.kappa, cfg.problem.family == PdeFamily::SecondOrder ? 1.0 : 0.0);
        grab("zeta", cfg.problem.zeta, 0.0);
        grab("alpha", cfg.problem.alpha, 0.0);
        if (coef.contains("beta")) {
            if (cfg.problem.family != PdeFamily::FirstOrder)
                throw ConfigError("coefficients: beta applies to first-order problems only");
            const Json& beta = coef["beta"];
            if (!beta.is_array() || static_cast<int>(beta.size()) != cfg.problem.grid.d)
                throw ConfigError("coefficients: beta needs one field per axis");
            for (int mu = 0; mu < cfg.problem.grid.d; ++mu)
                cfg.problem.beta.push_back(
                    parseField(beta[std::size_t(mu)], cfg.problem.grid,
                               "beta" + std::to_string(mu))
                        .field);
        }
    }

    {
        const Json& time = require(problem, "time", "problem");
        rejectUnknown(time, {"T", "tau"}, "time");
        cfg.problem.T = toNumber(require(time, "T", "time"), "time: T");
        cfg.problem.tau = toNumber(require(time, "tau", "time"), "time: tau");
    }
    cfg.problem.validate();

    {
        const Json& initial = require(j, "initial", "config");
        rejectUnknown(initial, {"u", "u_dot"}, "initial");
        if (cfg.problem.family == PdeFamily::FirstOrder) {
            if (initial.contains("u_dot"))
                throw ConfigError("initial: u_dot applies to second-order problems only");
            auto parsed = parseField(require(initial, "u", "initial"), cfg.problem.grid, "u");
            cfg.initialU = std::move(parsed.field);
            cfg.initialUBox = parsed.soleBox;
        } else {
            auto parsedDot =
                parseField(require(initial, "u_dot", "initial"), cfg.problem.grid, "u_dot");
            cfg.initialUDot = std::move(parsedDot.field);
            cfg.initialUDotBox = parsedDot.soleBox;
            if (initial.contains("u")) {
                auto parsed = parseField(initial["u"], cfg.problem.grid, "u");
                cfg.initialU = std::move(parsed.field);
                cfg.initialUBox = parsed.soleBox;
            }
        }
    }

    {
        const Json& lp = require(j, "lchs", "config");
        rejectUnknown(lp, {"n_anc", "n_frac", "r_phi", "r_psi", "layers", "tol", "order"},
                      "lchs");
        cfg.lchs.nAnc = toInt(require(lp, "n_anc", "lchs"), "lchs: n_anc");
        cfg.lchs.nFrac = toInt(require(lp, "n_frac", "lchs"), "lchs: n_frac");
        cfg.lchs.rPhi = toInt(require(lp, "r_phi", "lchs"), "lchs: r_phi");
        if (lp.contains("r_psi")) cfg.lchs.rPsi = toInt(lp["r_psi"], "lchs: r_psi");
        if (lp.contains("layers")) cfg.lchs.layers = toInt(lp["layers"], "lchs: layers");
        if (lp.contains("tol")) cfg.lchs.tol = toNumber(lp["tol"], "lchs: tol");
        if (lp.contains("order")) {
            const int order = toInt(lp["order"], "lchs: order");
            if (order == 1)
                cfg.lchs.order = TrotterOrder::First;
            else if (order == 2)
                cfg.lchs.order = TrotterOrder::Second;
            else
                throw ConfigError("lchs: order must be 1 or 2");
        }
        if (cfg.lchs.nAnc < 2) throw ConfigError("lchs: n_anc must be at least 2");
        if (cfg.lchs.nFrac < 0 || cfg.lchs.nFrac > cfg.lchs.nAnc - 1)
            throw ConfigError("lchs: n_frac must lie in [0, n_anc - 1]");
        if (cfg.lchs.rPhi < 1 || cfg.lchs.rPsi < 1)
            throw ConfigError("lchs: bond caps must be positive");
        if (cfg.lchs.layers < 1) throw ConfigError("lchs: layers must be positive");
        if (!(cfg.lchs.tol > 0.0)) throw ConfigError("lchs: tol must be positive");
    }

    {
        const Json& outputs = require(j, "outputs", "config");
        rejectUnknown(outputs, {"times", "formats", "directory"}, "outputs");
        const Json& times = require(outputs, "times", "outputs");
        if (!times.is_array() || times.empty())
            throw ConfigError("outputs: times must be a non-empty array");
        for (const Json& t : times) cfg.outputs.times.push_back(toNumber(t, "outputs: times"));
        for (std::size_t s = 0; s + 1 < cfg.outputs.times.size(); ++s)
            if (!(cfg.outputs.times[s] < cfg.outputs.times[s + 1]))
                throw ConfigError("outputs: times must be strictly increasing");
        if (cfg.outputs.times.front() < 0.0 ||
            cfg.outputs.times.back() > cfg.problem.T + 1e-12)
            throw ConfigError("outputs: times must lie within [0, T]");
        for (double t : cfg.outputs.times) {
            if (t <= 0.0) continue;
            const double steps = std::round(t / cfg.problem.tau);
            if (std::abs(steps * cfg.problem.tau - t) > 1e-6 * std::max(1.0, std::abs(t)))
                throw ConfigError("outputs: times must be multiples of tau");
        }
        if (outputs.contains("formats")) {
            const Json& formats = outputs["formats"];
            if (!formats.is_array()) throw ConfigError("outputs: formats must be an array");
            cfg.outputs.csv = false;
            cfg.outputs.ppm = false;
            for (const Json& f : formats) {
                const std::string name = toString(f, "outputs: formats");
                if (name == "csv")
                    cfg.outputs.csv = true;
                else if (name == "ppm")
                    cfg.outputs.ppm = true;
                else
                    throw ConfigError("outputs: unknown format '" + name + "'");
            }
        }
        if (outputs.contains("directory"))
            cfg.outputs.directory = toString(outputs["directory"], "outputs: directory");
    }

    if (j.contains("validation")) {
        const Json& v = j["validation"];
        rejectUnknown(v, {"dense", "fdm", "tau_sweep", "anc_sweep", "fdm_tau", "norm_samples"},
                      "validation");
        if (v.contains("dense")) cfg.validation.dense = toBool(v["dense"], "validation: dense");
        if (v.contains("fdm")) cfg.validation.fdm = toBool(v["fdm"], "validation: fdm");
        if (v.contains("tau_sweep"))
            cfg.validation.tauSweep = toBool(v["tau_sweep"], "validation: tau_sweep");
        if (v.contains("anc_sweep"))
            cfg.validation.ancSweep = toBool(v["anc_sweep"], "validation: anc_sweep");
        if (v.contains("fdm_tau"))
            cfg.validation.fdmTau = toNumber(v["fdm_tau"], "validation: fdm_tau");
        if (v.contains("norm_samples"))
            cfg.validation.normSamples = toInt(v["norm_samples"], "validation: norm_samples");
        if (!(cfg.validation.fdmTau > 0.0))
            throw ConfigError("validation: fdm_tau must be positive");
        if (cfg.validation.normSamples < 2)
            throw ConfigError("validation: norm_samples must be at least 2");
    }

    return cfg;
}

inline RunConfig loadRunConfig(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    Json j;
    try {
        in >> j;
    } catch (const Json::parse_error& e) {
        throw ConfigError("config: parse failure in '" + path + "': " + e.what());
    }
    return parseRunConfig(j);
}

} // namespace lchs
