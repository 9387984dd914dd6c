#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "lchs/errors.hpp"
#include "lchs/grid.hpp"
#include "lchs/reference.hpp"

namespace lchs {

// Shortest round-trippable decimal form; all file output goes through this
// so reruns are byte-identical.
inline std::string formatDouble(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

// Field snapshot CSV: header x0,...,x{d-1},value and one row per node in
// index order.
inline void writeFieldCsv(std::ostream& os, const Grid& g, const std::vector<double>& values) {
    g.validate();
    if (values.size() != g.nodeCount()) throw ConfigError("field csv: value count mismatch");
    for (int axis = 0; axis < g.d; ++axis) os << "x" << axis << ",";
    os << "value\n";
    for (std::uint64_t j = 0; j < g.nodeCount(); ++j) {
        for (int axis = 0; axis < g.d; ++axis) os << g.axisCoord(j, axis) << ",";
        os << formatDouble(values[j]) << "\n";
    }
}

namespace io_detail {

inline std::vector<std::string> splitCsvLine(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        std::size_t start = 0;
        while (start < cell.size() && cell[start] == ' ') ++start;
        cells.push_back(cell.substr(start));
    }
    return cells;
}

} // namespace io_detail

// Reads a field snapshot CSV back into node values on the given grid.
// Unlisted nodes stay zero; duplicated nodes are rejected.
inline std::vector<double> readFieldCsv(std::istream& is, const Grid& g) {
    g.validate();
    std::string line;
    if (!std::getline(is, line)) throw ConfigError("field csv: empty input");
    const std::vector<std::string> header = io_detail::splitCsvLine(line);
    if (static_cast<int>(header.size()) != g.d + 1 || header.back() != "value")
        throw ConfigError("field csv: header must be x0,...,value for the given grid");
    for (int axis = 0; axis < g.d; ++axis)
        if (header[std::size_t(axis)] != "x" + std::to_string(axis))
            throw ConfigError("field csv: header must be x0,...,value for the given grid");

    std::vector<double> values(g.nodeCount(), 0.0);
    std::vector<bool> seen(g.nodeCount(), false);
    std::vector<int> coord(std::size_t(g.d), 0);
    std::size_t lineNo = 1;
    while (std::getline(is, line)) {
        ++lineNo;
        if (line.empty() || line == "\r") continue;
        const std::vector<std::string> cells = io_detail::splitCsvLine(line);
        if (static_cast<int>(cells.size()) != g.d + 1)
            throw ConfigError("field csv: wrong column count on line " + std::to_string(lineNo));
        try {
            for (int axis = 0; axis < g.d; ++axis) coord[std::size_t(axis)] = std::stoi(cells[std::size_t(axis)]);
        } catch (const std::exception&) {
            throw ConfigError("field csv: bad coordinate on line " + std::to_string(lineNo));
        }
        for (int axis = 0; axis < g.d; ++axis)
            if (coord[std::size_t(axis)] < 0 || coord[std::size_t(axis)] >= g.axisSize(axis))
                throw ConfigError("field csv: coordinate out of range on line " +
                                  std::to_string(lineNo));
        double value = 0.0;
        try {
            value = std::stod(cells.back());
        } catch (const std::exception&) {
            throw ConfigError("field csv: bad value on line " + std::to_string(lineNo));
        }
        const std::uint64_t j = g.nodeIndex(coord);
        if (seen[j]) throw ConfigError("field csv: node listed twice on line " + std::to_string(lineNo));
        seen[j] = true;
        values[j] = value;
    }
    return values;
}

// Norm trace CSV: t,norm rows.
inline void writeNormTraceCsv(std::ostream& os, const TimeSeries& ts) {
    ts.validate();
    os << "t,norm\n";
    for (std::size_t s = 0; s < ts.times.size(); ++s)
        os << formatDouble(ts.times[s]) << "," << formatDouble(ts.norms[s]) << "\n";
}

// Fixed 256-entry palette interpolated between nine anchors of a
// viridis-like colormap; the table is part of the output contract, so the
// anchors must not change.
inline const std::array<std::array<unsigned char, 3>, 256>& heatmapPalette() {
    static const std::array<std::array<unsigned char, 3>, 256> table = [] {
        constexpr int anchors[9][3] = {{68, 1, 84},    {72, 40, 120},  {62, 74, 137},
                                       {49, 104, 142}, {38, 130, 142}, {31, 158, 137},
                                       {53, 183, 121}, {145, 213, 66}, {253, 231, 37}};
        std::array<std::array<unsigned char, 3>, 256> t{};
        for (int i = 0; i < 256; ++i) {
            const double pos = double(i) / 255.0 * 8.0;
            const int seg = std::min(7, int(pos));
            const double f = pos - seg;
            for (int c = 0; c < 3; ++c) {
                const double v = anchors[seg][c] + f * (anchors[seg + 1][c] - anchors[seg][c]);
                t[std::size_t(i)][std::size_t(c)] = static_cast<unsigned char>(std::lround(v));
            }
        }
        return t;
    }();
    return table;
}

// Binary PPM (P6) heatmap of a 2D field: axis 0 maps to columns left to
// right, axis 1 to rows top down from the high edge. Values are scaled
// linearly from [lo, hi] into the palette.
inline void writePpm(std::ostream& os, const Grid& g, const std::vector<double>& values,
                     double lo, double hi) {
    g.validate();
    if (g.d != 2) throw ConfigError("ppm: heatmaps require a 2D grid");
    if (values.size() != g.nodeCount()) throw ConfigError("ppm: value count mismatch");
    const int w = g.axisSize(0), h = g.axisSize(1);
    os << "P6\n" << w << " " << h << "\n255\n";
    const auto& palette = heatmapPalette();
    const double span = hi - lo;
    for (int row = h - 1; row >= 0; --row) {
        for (int col = 0; col < w; ++col) {
            const double v = values[g.nodeIndex({col, row})];
            double t = span > 0.0 ? (v - lo) / span : 0.5;
            t = std::min(1.0, std::max(0.0, t));
            const auto& rgb = palette[std::size_t(std::lround(t * 255.0))];
            os.write(reinterpret_cast<const char*>(rgb.data()), 3);
        }
    }
}

inline void ensureDirectory(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ConfigError("output: cannot create directory '" + dir + "': " + ec.message());
}

inline std::string joinPath(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

inline void writeTextFile(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("output: cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw ConfigError("output: write failed for '" + path + "'");
}

inline std::string readTextFile(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("input: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace lchs
