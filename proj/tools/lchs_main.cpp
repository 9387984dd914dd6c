#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lchs/pipeline.hpp"

namespace {

std::string resolveOutputDir(const std::string& fromConfig, const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("LCHS_OUTPUT_DIR"); env && *env) return env;
    return fromConfig;
}

std::string resolveOutputFile(const std::string& flag, const std::string& fallbackName) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("LCHS_OUTPUT_DIR"); env && *env) {
        lchs::ensureDirectory(env);
        return lchs::joinPath(env, fallbackName);
    }
    return fallbackName;
}

int cmdSimulate(const std::string& configPath, const std::string& dirFlag) {
    const lchs::RunConfig cfg = lchs::loadRunConfig(configPath);
    const lchs::SimulateReport rep = lchs::runSimulate(cfg);
    const std::string dir = resolveOutputDir(cfg.outputs.directory, dirFlag);
    const std::vector<std::string> files = lchs::writeSimulateOutputs(cfg, rep, dir);
    std::cout << lchs::simulateReportText(cfg, rep);
    std::cout << "written:\n";
    for (const std::string& f : files) std::cout << "  " << f << "\n";
    return 0;
}

int cmdValidate(const std::string& configPath, const std::string& dirFlag) {
    const lchs::RunConfig cfg = lchs::loadRunConfig(configPath);
    const lchs::ValidateReport rep = lchs::runValidate(cfg);
    const std::string dir = resolveOutputDir(cfg.outputs.directory, dirFlag);
    const std::vector<std::string> files = lchs::writeValidateOutputs(cfg, rep, dir);
    std::cout << lchs::validateReportText(cfg, rep);
    std::cout << "written:\n";
    for (const std::string& f : files) std::cout << "  " << f << "\n";
    return 0;
}

int cmdMinimize(const std::string& csvPath, const std::vector<int>& nbits) {
    lchs::Grid g;
    g.d = int(nbits.size());
    g.nBitsPerAxis = nbits;
    g.h = 1.0;
    g.validate();
    std::ifstream in(csvPath);
    if (!in) throw lchs::ConfigError("minimize: cannot open '" + csvPath + "'");
    const std::vector<double> values = lchs::readFieldCsv(in, g);
    const lchs::MinimizeReport rep = lchs::runMinimize(values, g);
    std::cout << lchs::minimizeReportText(g, rep);
    return rep.verified ? 0 : 3;
}

int cmdCoefOracle(int nAnc, int nFrac, int rPsi, int rPhi, double tol, int layers,
                  const std::string& outFlag) {
    const lchs::CoefOracleReport rep = lchs::runCoefOracle(nAnc, nFrac, rPsi, rPhi, tol, layers);
    const std::string path = resolveOutputFile(outFlag, "coefficient_train.txt");
    std::ostringstream os;
    lchs::writeTrain(os, rep.phi);
    lchs::writeTextFile(path, os.str());
    std::cout << lchs::coefOracleReportText(rep);
    std::cout << "written:\n  " << path << "\n";
    return 0;
}

int cmdExportCircuit(const std::string& configPath, const std::string& outFlag) {
    const lchs::RunConfig cfg = lchs::loadRunConfig(configPath);
    std::vector<std::string> notices;
    const lchs::Circuit c = lchs::buildExportCircuit(cfg, &notices);
    const std::string path = resolveOutputFile(outFlag, "circuit.txt");
    lchs::writeTextFile(path, lchs::circuitToText(c));
    std::cout << "circuit: qubits=" << c.nQubits << " ancilla=" << c.ancillaQubits
              << " gates=" << c.gates.size() << "\n";
    for (const std::string& n : notices) std::cout << "notice: " << n << "\n";
    std::cout << "written:\n  " << path << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quantum solver pipeline for piecewise-constant linear PDEs"};
    app.require_subcommand(1);

    std::string configPath;
    std::string dirFlag;
    std::string outFlag;
    std::string csvPath;
    std::vector<int> nbits;
    int nAnc = 8, nFrac = 1, rPsi = 10, rPhi = 2, layers = 1;
    double tol = 1.0e-6;

    CLI::App* simulate = app.add_subcommand("simulate", "Run the quantum pipeline and write "
                                                        "field snapshots");
    simulate->add_option("config", configPath, "Run configuration file")->required();
    simulate->add_option("--output-dir", dirFlag, "Override the output directory");

    CLI::App* validate = app.add_subcommand("validate", "Cross-check the quantum pipeline "
                                                        "against dense and explicit references");
    validate->add_option("config", configPath, "Run configuration file")->required();
    validate->add_option("--output-dir", dirFlag, "Override the output directory");

    CLI::App* minimize = app.add_subcommand("minimize", "Minimize the projector form of a "
                                                        "node-value table");
    minimize->add_option("field", csvPath, "Field CSV file")->required();
    minimize->add_option("--nbits", nbits, "Bits per axis, e.g. 3,3")
        ->required()
        ->delimiter(',');

    CLI::App* coef = app.add_subcommand("coef-oracle", "Solve and export the coefficient "
                                                       "amplitude train");
    coef->add_option("--n-anc", nAnc, "Ancilla qubits");
    coef->add_option("--n-frac", nFrac, "Fractional bits of the integration grid");
    coef->add_option("--r-psi", rPsi, "Intermediate bond cap");
    coef->add_option("--r-phi", rPhi, "Final bond cap");
    coef->add_option("--tol", tol, "Solver tolerance");
    coef->add_option("--layers", layers, "Encoding layers above bond dimension two");
    coef->add_option("--out", outFlag, "Output train file");

    CLI::App* exportCircuit = app.add_subcommand("export-circuit", "Write the full gate-level "
                                                                   "program as text");
    exportCircuit->add_option("config", configPath, "Run configuration file")->required();
    exportCircuit->add_option("--out", outFlag, "Output circuit file");

    try {
        app.parse(argc, argv);
        if (simulate->parsed()) return cmdSimulate(configPath, dirFlag);
        if (validate->parsed()) return cmdValidate(configPath, dirFlag);
        if (minimize->parsed()) return cmdMinimize(csvPath, nbits);
        if (coef->parsed()) return cmdCoefOracle(nAnc, nFrac, rPsi, rPhi, tol, layers, outFlag);
        if (exportCircuit->parsed()) return cmdExportCircuit(configPath, outFlag);
        std::cerr << "error: no subcommand selected\n";
        return 2;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const lchs::CapError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const lchs::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const lchs::NumericalError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
