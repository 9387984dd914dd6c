#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lchs/circuit.hpp"
#include "lchs/config.hpp"
#include "lchs/discretize.hpp"
#include "lchs/errors.hpp"
#include "lchs/grid.hpp"
#include "lchs/io.hpp"
#include "lchs/logic_min.hpp"
#include "lchs/qubit_operator.hpp"
#include "lchs/reference.hpp"
#include "lchs/tensor_train.hpp"

namespace lchs {

// Hard budget for system plus ancilla qubits; checked before any state or
// operator of that size is allocated.
inline constexpr int kPipelineQubitCap = 24;

struct TermStat {
    std::string field;
    std::string opKey;
    std::size_t naive = 0;
    std::size_t minimized = 0;
};

struct LchsSnapshot {
    double time = 0.0;
    std::vector<Complex> state; // physical (unnormalized) system state
    std::vector<double> field;  // decoded observable field on grid nodes
    double successProbability = 1.0;
    double norm = 0.0;
};

struct SimulateReport {
    int systemQubits = 0;
    int ancillaQubits = 0;
    int steps = 0;
    std::size_t lGroupCount = 0;
    std::size_t hGroupCount = 0;
    std::uint64_t selectSubstepsPerStep = 0;
    double shift = 0.0;
    double coefficientFidelity = std::numeric_limits<double>::quiet_NaN();
    std::size_t coefficientGateCount = 0;
    bool prepAsGates = false;
    std::size_t prepGateCount = 0;
    std::size_t naiveTermTotal = 0;
    std::size_t minimizedTermTotal = 0;
    std::vector<TermStat> termStats;
    std::vector<LchsSnapshot> snapshots;
    std::vector<std::string> notices;
};

namespace pipeline_detail {

inline void requireQubitBudget(int systemQubits, int nAnc) {
    const int total = systemQubits + nAnc;
    if (total > kPipelineQubitCap)
        throw CapError("pipeline: register of " + std::to_string(total) +
                       " qubits exceeds the cap of " + std::to_string(kPipelineQubitCap));
}

inline double vectorNorm(const std::vector<Complex>& v) {
    double s = 0.0;
    for (const Complex& z : v) s += std::norm(z);
    return std::sqrt(s);
}

inline double absDistance(const std::vector<Complex>& a, const std::vector<Complex>& b) {
    if (a.size() != b.size()) throw ConfigError("pipeline: state length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::norm(a[i] - b[i]);
    return std::sqrt(s);
}

inline double absDistance(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ConfigError("pipeline: field length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

inline double fieldNorm(const std::vector<double>& a) {
    double s = 0.0;
    for (double x : a) s += x * x;
    return std::sqrt(s);
}

inline std::size_t nonDefaultCount(const PiecewiseField& f, const Grid& g) {
    std::size_t n = 0;
    for (std::uint64_t j = 0; j < g.nodeCount(); ++j)
        if (f.at(j) != f.defaultValue) ++n;
    return n;
}

// Everything the engines share: the assembled generator, the diagonal
// coefficient operators, and the encoded initial state.
struct EngineContext {
    StateLayout layout;
    QubitOperator a;
    std::map<std::string, QubitOperator> diagOps;
    Statevector w0;
    double w0Norm = 0.0;
    std::vector<double> u0;
    std::vector<double> uDot0;
};

inline EngineContext buildEngine(const RunConfig& cfg) {
    const PdeProblem& p = cfg.problem;
    EngineContext ctx;
    ctx.layout = StateLayout::forProblem(p);
    requireQubitBudget(ctx.layout.totalQubits(), cfg.lchs.nAnc);
    ctx.diagOps = buildDiagonalOperators(p);
    ctx.a = p.family == PdeFamily::SecondOrder ? assembleSecondOrder(p, ctx.diagOps)
                                               : assembleFirstOrder(p, ctx.diagOps);
    ctx.u0 = fieldNodeValues(cfg.initialU, p.grid);
    if (p.family == PdeFamily::SecondOrder) ctx.uDot0 = fieldNodeValues(cfg.initialUDot, p.grid);
    ctx.w0 = encodeInitialState(p, ctx.u0, ctx.uDot0);
    ctx.w0Norm = ctx.w0.norm();
    if (ctx.w0Norm == 0.0) throw ConfigError("initial: encoded state has zero norm");
    return ctx;
}

inline std::vector<double> decodeSolution(const Statevector& v, const PdeProblem& p) {
    return decodeField(v, p,
                       p.family == PdeFamily::SecondOrder ? DecodeWhich::UDot : DecodeWhich::U);
}

inline std::vector<TermStat> coefficientTermStats(const PdeProblem& p,
                                                  const std::map<std::string, QubitOperator>& ops) {
    std::vector<TermStat> stats;
    const PiecewiseField zeroBeta = PiecewiseField::constant("beta", 0.0);
    auto sourceField = [&](const std::string& key) -> const PiecewiseField& {
        if (key == "rho_inv" || key == "rho_inv_half") return p.rho;
        if (key == "kappa" || key == "kappa_half") return p.kappa;
        if (key == "alpha" || key == "alpha_half") return p.alpha;
        if (key == "zeta") return p.zeta;
        if (key.rfind("beta_", 0) == 0) {
            if (p.beta.empty()) return zeroBeta;
            const int mu = std::stoi(key.substr(key.rfind('_') + 1));
            return p.beta[std::size_t(mu)];
        }
        throw ConfigError("pipeline: unknown coefficient operator '" + key + "'");
    };
    for (const auto& [key, op] : ops) {
        const PiecewiseField& src = sourceField(key);
        TermStat s;
        s.field = src.name;
        s.opKey = key;
        s.naive = nonDefaultCount(src, p.grid) + 1;
        s.minimized = op.termCount();
        stats.push_back(std::move(s));
    }
    return stats;
}

// Gate-level preparation is reported only when the encoded initial state is
// exactly the uniform box superposition that the prep circuit produces.
inline std::optional<Circuit> gateLevelPrep(const RunConfig& cfg, const EngineContext& ctx) {
    const PdeProblem& p = cfg.problem;
    const std::optional<Box>& box =
        p.family == PdeFamily::SecondOrder ? cfg.initialUDotBox : cfg.initialUBox;
    if (!box) return std::nullopt;
    if (p.family == PdeFamily::SecondOrder)
        for (double v : ctx.u0)
            if (v != 0.0) return std::nullopt;
    if (!boxPrepExpressible(*box, p.grid)) return std::nullopt;
    Circuit prep = boxStatePrep(*box, p.grid, ctx.layout, 0);
    Statevector probe(ctx.layout.totalQubits());
    probe.amp[0] = Complex(1.0, 0.0);
    probe = executeCircuit(prep, probe);
    double err = 0.0;
    for (std::size_t i = 0; i < probe.amp.size(); ++i)
        err += std::norm(probe.amp[i] - ctx.w0.amp[i] / ctx.w0Norm);
    if (std::sqrt(err) > 1e-9) return std::nullopt;
    return prep;
}

// One physical solution snapshot. The engine returns the renormalized
// post-selected state, so the physical vector is recovered by scaling with
// the initial norm, the square root of the projection probability, and the
// exponential undoing the Hermitian-part shift.
inline LchsSnapshot lchsSnapshotAt(const RunConfig& cfg, const EngineContext& ctx,
                                   const TensorTrainVector& phi, double t,
                                   SimulateReport* rep) {
    LchsSnapshot snap;
    snap.time = t;
    Statevector phys(ctx.layout.totalQubits());
    if (t <= 0.0) {
        phys = ctx.w0;
    } else {
        PdeProblem pt = cfg.problem;
        pt.T = t;
        const LchsRunResult res = runLchs(pt, ctx.a, phi, ctx.w0, cfg.lchs.nFrac, cfg.lchs.order);
        const double factor =
            std::exp(res.shift * t) * ctx.w0Norm * std::sqrt(res.successProbability);
        phys = res.state;
        phys.scale(Complex(factor, 0.0));
        snap.successProbability = res.successProbability;
        if (rep) {
            rep->steps = res.steps;
            rep->lGroupCount = res.lGroupCount;
            rep->hGroupCount = res.hGroupCount;
            rep->selectSubstepsPerStep = res.selectSubstepsPerStep;
            rep->shift = res.shift;
        }
    }
    snap.norm = phys.norm();
    snap.field = decodeSolution(phys, cfg.problem);
    snap.state = std::move(phys.amp);
    return snap;
}

// Stable tag for file names: trims trailing zeros, e.g. 0, 2.5, 10.
inline std::string timeTag(double t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", t);
    return buf;
}

} // namespace pipeline_detail

inline SimulateReport runSimulate(const RunConfig& cfg) {
    using namespace pipeline_detail;
    const EngineContext ctx = buildEngine(cfg);
    SimulateReport rep;
    rep.systemQubits = ctx.layout.totalQubits();
    rep.ancillaQubits = cfg.lchs.nAnc;
    rep.termStats = coefficientTermStats(cfg.problem, ctx.diagOps);
    for (const TermStat& s : rep.termStats) {
        rep.naiveTermTotal += s.naive;
        rep.minimizedTermTotal += s.minimized;
    }

    const CoefficientOracleResult oracle = solveCoefficientOracle(
        cfg.lchs.nAnc, cfg.lchs.nFrac, cfg.lchs.rPsi, cfg.lchs.rPhi, cfg.lchs.tol);
    rep.coefficientFidelity = oracle.fidelity;
    rep.coefficientGateCount = coefficientOracle(oracle.phi, cfg.lchs.layers).prepare.gates.size();

    if (const auto prep = gateLevelPrep(cfg, ctx)) {
        rep.prepAsGates = true;
        rep.prepGateCount = prep->gates.size();
    } else {
        rep.notices.push_back("initial state prepared by direct amplitude injection");
    }

    for (double t : cfg.outputs.times)
        rep.snapshots.push_back(lchsSnapshotAt(cfg, ctx, oracle.phi, t, &rep));
    return rep;
}

inline std::string simulateReportText(const RunConfig& cfg, const SimulateReport& rep) {
    std::ostringstream os;
    const Grid& g = cfg.problem.grid;
    os << "simulation report\n";
    os << "family: "
       << (cfg.problem.family == PdeFamily::SecondOrder ? "second-order" : "first-order") << "\n";
    os << "grid: d=" << g.d << " nbits=";
    for (int mu = 0; mu < g.d; ++mu) os << (mu ? "," : "") << g.nBitsPerAxis[std::size_t(mu)];
    os << " h=" << formatDouble(g.h) << "\n";
    os << "horizon: T=" << formatDouble(cfg.problem.T) << " tau=" << formatDouble(cfg.problem.tau)
       << " steps=" << rep.steps << "\n";
    os << "register: system=" << rep.systemQubits << " ancilla=" << rep.ancillaQubits
       << " total=" << rep.systemQubits + rep.ancillaQubits << "\n";
    os << "trotter groups: hermitian=" << rep.lGroupCount << " antihermitian=" << rep.hGroupCount
       << "\n";
    os << "select substeps per step: " << rep.selectSubstepsPerStep << "\n";
    os << "hermitian shift: " << formatDouble(rep.shift) << "\n";
    os << "coefficient oracle: fidelity=" << formatDouble(rep.coefficientFidelity)
       << " prepare gates=" << rep.coefficientGateCount << "\n";
    if (rep.prepAsGates)
        os << "state preparation: gates=" << rep.prepGateCount << "\n";
    else
        os << "state preparation: amplitude injection\n";
    os << "coefficient terms (naive vs minimized):\n";
    for (const TermStat& s : rep.termStats)
        os << "  " << s.field << " as " << s.opKey << ": naive=" << s.naive
           << " minimized=" << s.minimized << "\n";
    os << "  total: naive=" << rep.naiveTermTotal << " minimized=" << rep.minimizedTermTotal
       << "\n";
    os << "snapshots:\n";
    for (const LchsSnapshot& s : rep.snapshots)
        os << "  t=" << formatDouble(s.time) << ": norm=" << formatDouble(s.norm)
           << " success=" << formatDouble(s.successProbability) << "\n";
    for (const std::string& n : rep.notices) os << "notice: " << n << "\n";
    return os.str();
}

// Writes snapshot CSVs, the norm trace, optional heatmaps, and the run
// report. Returns the list of files written.
inline std::vector<std::string> writeSimulateOutputs(const RunConfig& cfg,
                                                     const SimulateReport& rep,
                                                     const std::string& directory) {
    using namespace pipeline_detail;
    ensureDirectory(directory);
    std::vector<std::string> files;

    double lo = 0.0, hi = 0.0;
    bool first = true;
    for (const LchsSnapshot& s : rep.snapshots)
        for (double v : s.field) {
            lo = first ? v : std::min(lo, v);
            hi = first ? v : std::max(hi, v);
            first = false;
        }

    for (const LchsSnapshot& s : rep.snapshots) {
        const std::string tag = timeTag(s.time);
        if (cfg.outputs.csv) {
            std::ostringstream os;
            writeFieldCsv(os, cfg.problem.grid, s.field);
            const std::string path = joinPath(directory, "field_t" + tag + ".csv");
            writeTextFile(path, os.str());
            files.push_back(path);
        }
        if (cfg.outputs.ppm && cfg.problem.grid.d == 2) {
            std::ostringstream os;
            writePpm(os, cfg.problem.grid, s.field, lo, hi);
            const std::string path = joinPath(directory, "field_t" + tag + ".ppm");
            writeTextFile(path, os.str());
            files.push_back(path);
        }
    }

    {
        std::ostringstream os;
        os << "t,norm\n";
        for (const LchsSnapshot& s : rep.snapshots)
            os << formatDouble(s.time) << "," << formatDouble(s.norm) << "\n";
        const std::string path = joinPath(directory, "norms.csv");
        writeTextFile(path, os.str());
        files.push_back(path);
    }
    {
        const std::string path = joinPath(directory, "report.txt");
        writeTextFile(path, simulateReportText(cfg, rep));
        files.push_back(path);
    }
    return files;
}

// ---------------------------------------------------------------------------
// Validation across the three engines
// ---------------------------------------------------------------------------

struct PairwiseError {
    double time = 0.0;
    double lchsVsDense = std::numeric_limits<double>::quiet_NaN();
    double lchsVsFdm = std::numeric_limits<double>::quiet_NaN();
    double fdmVsDense = std::numeric_limits<double>::quiet_NaN();
    double lchsVsDenseState = std::numeric_limits<double>::quiet_NaN(); // relative, full state
};

struct ValidateReport {
    std::vector<LchsSnapshot> lchs;
    bool denseAvailable = false;
    bool fdmAvailable = false;
    std::vector<std::vector<double>> denseFields;
    std::vector<double> denseNorms;
    std::vector<std::vector<double>> fdmFields;
    std::vector<PairwiseError> errors; // absolute L2 on decoded fields
    bool traceAvailable = false;
    TimeSeries trace;
    double negativeBias = std::numeric_limits<double>::quiet_NaN();
    bool tauSweepRun = false;
    double tauErrorCoarse = 0.0;
    double tauErrorFine = 0.0;
    double tauRatio = std::numeric_limits<double>::quiet_NaN();
    double tauSlope = std::numeric_limits<double>::quiet_NaN();
    bool ancSweepRun = false;
    double ancErrorBase = 0.0;
    double ancErrorMore = 0.0;
    double ancRatio = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::string> notices;
};

inline ValidateReport runValidate(const RunConfig& cfg) {
    using namespace pipeline_detail;
    const PdeProblem& p = cfg.problem;
    const EngineContext ctx = buildEngine(cfg);
    const int sysN = ctx.layout.totalQubits();
    ValidateReport rep;

    const CoefficientOracleResult oracle = solveCoefficientOracle(
        cfg.lchs.nAnc, cfg.lchs.nFrac, cfg.lchs.rPsi, cfg.lchs.rPhi, cfg.lchs.tol);
    for (double t : cfg.outputs.times)
        rep.lchs.push_back(lchsSnapshotAt(cfg, ctx, oracle.phi, t, nullptr));

    const std::size_t dim = std::size_t(1) << sysN;
    Eigen::MatrixXcd denseA;
    Eigen::VectorXcd w0vec;
    if (cfg.validation.dense) {
        if (sysN <= kDenseQubitCap) {
            rep.denseAvailable = true;
            denseA = toDense(ctx.a);
            w0vec.resize(static_cast<Eigen::Index>(dim));
            for (std::size_t i = 0; i < dim; ++i)
                w0vec[static_cast<Eigen::Index>(i)] = ctx.w0.amp[i];
            for (double t : cfg.outputs.times) {
                const Eigen::VectorXcd wd = expmMultiply(denseA, t, w0vec);
                Statevector sv(sysN);
                for (std::size_t i = 0; i < dim; ++i)
                    sv.amp[i] = wd[static_cast<Eigen::Index>(i)];
                rep.denseNorms.push_back(sv.norm());
                rep.denseFields.push_back(decodeSolution(sv, p));
            }
        } else {
            rep.notices.push_back("dense reference skipped: system register of " +
                                  std::to_string(sysN) + " qubits exceeds the dense cap of " +
                                  std::to_string(kDenseQubitCap));
        }
    }

    if (cfg.validation.fdm) {
        FdmOptions opt;
        opt.tau = cfg.validation.fdmTau;
        const FdmResult fdm = classicalFdm(p, ctx.u0, ctx.uDot0, cfg.outputs.times, opt);
        rep.fdmAvailable = true;
        if (fdm.diagnostics.cflWarning)
            rep.notices.push_back("explicit stepping runs above its stability limit of " +
                                  formatDouble(fdm.diagnostics.cflLimit));
        const TimeSeries& series = p.family == PdeFamily::SecondOrder ? fdm.uDot : fdm.u;
        for (const std::vector<Complex>& state : series.states) {
            std::vector<double> field(state.size());
            for (std::size_t j = 0; j < state.size(); ++j) field[j] = state[j].real();
            rep.fdmFields.push_back(std::move(field));
        }
    }

    for (std::size_t i = 0; i < rep.lchs.size(); ++i) {
        PairwiseError e;
        e.time = rep.lchs[i].time;
        if (rep.denseAvailable) {
            e.lchsVsDense = absDistance(rep.lchs[i].field, rep.denseFields[i]);
            std::vector<Complex> wd(dim);
            const Eigen::VectorXcd wdv =
                expmMultiply(denseA, rep.lchs[i].time, w0vec);
            for (std::size_t k = 0; k < dim; ++k) wd[k] = wdv[static_cast<Eigen::Index>(k)];
            const double dn = vectorNorm(wd);
            e.lchsVsDenseState = dn > 0.0 ? absDistance(rep.lchs[i].state, wd) / dn
                                          : absDistance(rep.lchs[i].state, wd);
        }
        if (rep.fdmAvailable) e.lchsVsFdm = absDistance(rep.lchs[i].field, rep.fdmFields[i]);
        if (rep.denseAvailable && rep.fdmAvailable)
            e.fdmVsDense = absDistance(rep.fdmFields[i], rep.denseFields[i]);
        rep.errors.push_back(e);
    }

    if (rep.denseAvailable) {
        rep.trace = normTrace(ctx.a, ctx.w0, p.T, cfg.validation.normSamples);
        rep.traceAvailable = true;
        rep.negativeBias = rep.lchs.back().norm - rep.denseNorms.back();
    }

    const double tFinal = cfg.outputs.times.back();
    if (cfg.validation.tauSweep && rep.denseAvailable && tFinal > 0.0) {
        const Eigen::VectorXcd wdv = expmMultiply(denseA, tFinal, w0vec);
        std::vector<Complex> wd(dim);
        for (std::size_t k = 0; k < dim; ++k) wd[k] = wdv[static_cast<Eigen::Index>(k)];
        auto errorAtTau = [&](double tau) {
            RunConfig fine = cfg;
            fine.problem.tau = tau;
            const EngineContext fineCtx = buildEngine(fine);
            const LchsSnapshot snap = lchsSnapshotAt(fine, fineCtx, oracle.phi, tFinal, nullptr);
            return absDistance(snap.state, wd);
        };
        rep.tauErrorCoarse = errorAtTau(p.tau);
        rep.tauErrorFine = errorAtTau(p.tau / 2.0);
        if (rep.tauErrorFine > 0.0) {
            rep.tauRatio = rep.tauErrorCoarse / rep.tauErrorFine;
            rep.tauSlope = std::log2(rep.tauRatio);
        }
        rep.tauSweepRun = true;
    }

    if (cfg.validation.ancSweep && rep.denseAvailable && tFinal > 0.0 &&
        sysN + cfg.lchs.nAnc + 2 > kPipelineQubitCap) {
        rep.notices.push_back("ancilla sweep skipped: enlarged register exceeds the qubit cap");
    } else if (cfg.validation.ancSweep && rep.denseAvailable && tFinal > 0.0) {
        const Eigen::VectorXcd wdv = expmMultiply(denseA, tFinal, w0vec);
        std::vector<Complex> wd(dim);
        for (std::size_t k = 0; k < dim; ++k) wd[k] = wdv[static_cast<Eigen::Index>(k)];
        auto errorAtAnc = [&](int nAnc) {
            RunConfig more = cfg;
            more.lchs.nAnc = nAnc;
            const CoefficientOracleResult o = solveCoefficientOracle(
                nAnc, more.lchs.nFrac, more.lchs.rPsi, more.lchs.rPhi, more.lchs.tol);
            const LchsSnapshot snap = lchsSnapshotAt(more, ctx, o.phi, tFinal, nullptr);
            return absDistance(snap.state, wd);
        };
        rep.ancErrorBase = errorAtAnc(cfg.lchs.nAnc);
        rep.ancErrorMore = errorAtAnc(cfg.lchs.nAnc + 2);
        if (rep.ancErrorMore > 0.0) rep.ancRatio = rep.ancErrorBase / rep.ancErrorMore;
        rep.ancSweepRun = true;
    }

    return rep;
}

inline std::string validateReportText(const RunConfig& cfg, const ValidateReport& rep) {
    std::ostringstream os;
    os << "validation report\n";
    os << "engines: lchs"
       << (rep.denseAvailable ? " dense" : "") << (rep.fdmAvailable ? " fdm" : "") << "\n";
    os << "pairwise field distances (absolute L2";
    os << ", state column relative):\n";
    for (const PairwiseError& e : rep.errors) {
        os << "  t=" << formatDouble(e.time);
        if (rep.denseAvailable) os << " lchs_vs_dense=" << formatDouble(e.lchsVsDense);
        if (rep.fdmAvailable) os << " lchs_vs_fdm=" << formatDouble(e.lchsVsFdm);
        if (rep.denseAvailable && rep.fdmAvailable)
            os << " fdm_vs_dense=" << formatDouble(e.fdmVsDense);
        if (rep.denseAvailable) os << " lchs_vs_dense_state=" << formatDouble(e.lchsVsDenseState);
        os << "\n";
    }
    os << "success probability:\n";
    for (const LchsSnapshot& s : rep.lchs)
        os << "  t=" << formatDouble(s.time) << ": " << formatDouble(s.successProbability) << "\n";
    os << "solution norms:\n";
    for (std::size_t i = 0; i < rep.lchs.size(); ++i) {
        os << "  t=" << formatDouble(rep.lchs[i].time)
           << " lchs=" << formatDouble(rep.lchs[i].norm);
        if (rep.denseAvailable) os << " dense=" << formatDouble(rep.denseNorms[i]);
        os << "\n";
    }
    if (rep.denseAvailable)
        os << "final norm bias (lchs - dense): " << formatDouble(rep.negativeBias) << "\n";
    if (rep.traceAvailable) {
        os << "generator norm trace (t: norm):\n";
        for (std::size_t i = 0; i < rep.trace.times.size(); ++i)
            os << "  " << formatDouble(rep.trace.times[i]) << ": "
               << formatDouble(rep.trace.norms[i]) << "\n";
    }
    if (rep.tauSweepRun) {
        os << "tau sweep at t=" << formatDouble(cfg.outputs.times.back())
           << ": error(tau)=" << formatDouble(rep.tauErrorCoarse)
           << " error(tau/2)=" << formatDouble(rep.tauErrorFine)
           << " ratio=" << formatDouble(rep.tauRatio) << " slope=" << formatDouble(rep.tauSlope)
           << "\n";
    }
    if (rep.ancSweepRun) {
        os << "ancilla sweep at t=" << formatDouble(cfg.outputs.times.back())
           << ": error(n_anc)=" << formatDouble(rep.ancErrorBase)
           << " error(n_anc+2)=" << formatDouble(rep.ancErrorMore)
           << " ratio=" << formatDouble(rep.ancRatio) << "\n";
    }
    for (const std::string& n : rep.notices) os << "notice: " << n << "\n";
    return os.str();
}

inline std::vector<std::string> writeValidateOutputs(const RunConfig& cfg,
                                                     const ValidateReport& rep,
                                                     const std::string& directory) {
    ensureDirectory(directory);
    std::vector<std::string> files;
    {
        std::ostringstream os;
        os << "t,norm\n";
        for (const LchsSnapshot& s : rep.lchs)
            os << formatDouble(s.time) << "," << formatDouble(s.norm) << "\n";
        const std::string path = joinPath(directory, "lchs_norms.csv");
        writeTextFile(path, os.str());
        files.push_back(path);
    }
    if (rep.traceAvailable) {
        std::ostringstream os;
        writeNormTraceCsv(os, rep.trace);
        const std::string path = joinPath(directory, "trace_norms.csv");
        writeTextFile(path, os.str());
        files.push_back(path);
    }
    {
        const std::string path = joinPath(directory, "validate_report.txt");
        writeTextFile(path, validateReportText(cfg, rep));
        files.push_back(path);
    }
    return files;
}

// ---------------------------------------------------------------------------
// Field minimization
// ---------------------------------------------------------------------------

struct MinimizeClassReport {
    double value = 0.0;
    std::size_t nodeCount = 0;
    std::vector<std::string> cubes;
};

struct MinimizeReport {
    double defaultValue = 0.0;
    std::size_t naiveTerms = 0;
    std::size_t minimizedTerms = 0;
    std::vector<MinimizeClassReport> classes;
    bool verified = false;
    double maxAbsError = 0.0;
};

// Minimizes the projector realization of an arbitrary node-value table. The
// background value is the most frequent one (ties resolved toward the
// smaller), remaining values become minimized cube covers, and the result is
// verified by exhaustive reconstruction.
inline MinimizeReport runMinimize(const std::vector<double>& values, const Grid& grid) {
    grid.validate();
    if (values.size() != grid.nodeCount())
        throw ConfigError("minimize: value count does not match the grid");

    std::map<double, std::size_t> counts;
    for (double v : values) ++counts[v];
    double def = values.front();
    std::size_t best = 0;
    for (const auto& [v, c] : counts)
        if (c > best) {
            best = c;
            def = v;
        }

    PiecewiseField f;
    f.name = "field";
    f.defaultValue = def;
    for (const auto& [v, c] : counts) {
        if (v == def) continue;
        PiecewiseField::Region r;
        r.value = v;
        for (std::uint64_t j = 0; j < values.size(); ++j)
            if (values[std::size_t(j)] == v) r.nodes.push_back(j);
        f.regions.push_back(std::move(r));
    }

    const ImplicantCover cover = fieldToCover(f, grid, [](double x) { return x; });

    MinimizeReport rep;
    rep.defaultValue = def;
    rep.naiveTerms = values.size() - best + 1;
    rep.minimizedTerms = cover.cubes.size() + 1;
    for (const auto& [v, c] : counts) {
        if (v == def) continue;
        MinimizeClassReport cls;
        cls.value = v;
        cls.nodeCount = c;
        const double delta = v - def;
        for (const Cube& cube : cover.cubes)
            if (cube.value == delta) cls.cubes.push_back(cube.bitsString(cover.nBits));
        rep.classes.push_back(std::move(cls));
    }

    rep.verified = true;
    for (std::uint64_t j = 0; j < values.size(); ++j) {
        const double err = std::abs(cover.at(j) - values[std::size_t(j)]);
        rep.maxAbsError = std::max(rep.maxAbsError, err);
        if (err > 1e-12 * std::max(1.0, std::abs(values[std::size_t(j)]))) rep.verified = false;
    }
    return rep;
}

inline std::string minimizeReportText(const Grid& grid, const MinimizeReport& rep) {
    std::ostringstream os;
    os << "minimization report\n";
    os << "grid: d=" << grid.d << " nbits=";
    for (int mu = 0; mu < grid.d; ++mu)
        os << (mu ? "," : "") << grid.nBitsPerAxis[std::size_t(mu)];
    os << " nodes=" << grid.nodeCount() << "\n";
    os << "background value: " << formatDouble(rep.defaultValue) << "\n";
    os << "terms: naive=" << rep.naiveTerms << " minimized=" << rep.minimizedTerms << "\n";
    for (const MinimizeClassReport& cls : rep.classes) {
        os << "value " << formatDouble(cls.value) << " (" << cls.nodeCount << " nodes):\n";
        for (const std::string& c : cls.cubes) os << "  cube " << c << "\n";
    }
    os << "reconstruction: " << (rep.verified ? "exact" : "FAILED")
       << " (max error " << formatDouble(rep.maxAbsError) << ")\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// Coefficient oracle
// ---------------------------------------------------------------------------

struct CoefOracleReport {
    int nAnc = 0;
    int nFrac = 0;
    int rPsi = 0;
    int rPhi = 0;
    double tol = 0.0;
    double fidelity = std::numeric_limits<double>::quiet_NaN();
    int newtonIterations = 0;
    int solveIterations = 0;
    std::size_t prepareGateCount = 0;
    TensorTrainVector phi;
};

inline CoefOracleReport runCoefOracle(int nAnc, int nFrac, int rPsi, int rPhi, double tol,
                                      int layers = 1) {
    CoefOracleReport rep;
    rep.nAnc = nAnc;
    rep.nFrac = nFrac;
    rep.rPsi = rPsi;
    rep.rPhi = rPhi;
    rep.tol = tol;
    CoefficientOracleResult res = solveCoefficientOracle(nAnc, nFrac, rPsi, rPhi, tol);
    rep.fidelity = res.fidelity;
    rep.newtonIterations = res.newtonReport.iterations;
    rep.solveIterations = res.coefReport.iterations;
    rep.prepareGateCount = coefficientOracle(res.phi, layers).prepare.gates.size();
    rep.phi = std::move(res.phi);
    return rep;
}

inline std::string coefOracleReportText(const CoefOracleReport& rep) {
    std::ostringstream os;
    os << "coefficient oracle report\n";
    os << "ancilla qubits: " << rep.nAnc << " (grid of " << (std::uint64_t(1) << rep.nAnc)
       << " integration points)\n";
    os << "fraction bits: " << rep.nFrac << "\n";
    os << "bond caps: intermediate=" << rep.rPsi << " final=" << rep.rPhi << "\n";
    os << "tolerance: " << formatDouble(rep.tol) << "\n";
    if (std::isnan(rep.fidelity))
        os << "fidelity: not computed (ancilla register above the dense check cap)\n";
    else
        os << "fidelity vs exact amplitudes: " << formatDouble(rep.fidelity) << "\n";
    os << "newton iterations: " << rep.newtonIterations << "\n";
    os << "solve iterations: " << rep.solveIterations << "\n";
    os << "prepare circuit gates: " << rep.prepareGateCount << "\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// Circuit export
// ---------------------------------------------------------------------------

namespace pipeline_detail {

inline void appendOffsetGates(Circuit& target, const Circuit& src, int offset) {
    for (const Gate& g : src.gates) {
        if (g.kind == GateKind::ControlledUnitaryBlock)
            throw ConfigError("export: ancilla circuit contains block gates");
        Gate shifted = g;
        if (shifted.q0 >= 0) shifted.q0 += offset;
        if (shifted.q1 >= 0) shifted.q1 += offset;
        if (shifted.control >= 0) shifted.control += offset;
        target.gates.push_back(std::move(shifted));
    }
}

} // namespace pipeline_detail

// Full gate-level program: state preparation (when the initial data admits
// one), coefficient oracle, the per-step evolution with its select stage, and
// the inverse oracle.
inline Circuit buildExportCircuit(const RunConfig& cfg, std::vector<std::string>* notices) {
    using namespace pipeline_detail;
    const PdeProblem& p = cfg.problem;
    const EngineContext ctx = buildEngine(cfg);
    const int sysN = ctx.layout.totalQubits();
    const int nAnc = cfg.lchs.nAnc;

    const CoefficientOracleResult oracle = solveCoefficientOracle(
        nAnc, cfg.lchs.nFrac, cfg.lchs.rPsi, cfg.lchs.rPhi, cfg.lchs.tol);
    const CoefficientOracle co = coefficientOracle(oracle.phi, cfg.lchs.layers);

    Circuit full;
    full.nQubits = sysN + nAnc;
    full.ancillaQubits = nAnc;

    if (const auto prep = gateLevelPrep(cfg, ctx)) {
        full.gates.insert(full.gates.end(), prep->gates.begin(), prep->gates.end());
    } else if (notices) {
        notices->push_back("state preparation omitted: initial data is not a single "
                           "expressible box");
    }

    appendOffsetGates(full, co.prepare, sysN);

    const HermitianParts parts = hermitianSplit(ctx.a);
    const auto shifted = positiveShift(parts.l);
    const bool hasH = !parts.h.empty();
    const bool hasL = !shifted.first.empty();
    Circuit sel;
    if (hasL)
        sel = selectOracle(shifted.first, p.tau, nAnc, cfg.lchs.nFrac,
                           makeTrotterPlan(shifted.first, cfg.lchs.order, p.tau));
    for (int step = 0; step < p.steps(); ++step) {
        if (hasH)
            full.gates.push_back(
                Gate::controlledBlock("ham", -1, parts.h, p.tau, 1, cfg.lchs.order));
        if (hasL) full.gates.insert(full.gates.end(), sel.gates.begin(), sel.gates.end());
    }

    appendOffsetGates(full, co.unprepare, sysN);
    full.validate();
    return full;
}

} // namespace lchs
