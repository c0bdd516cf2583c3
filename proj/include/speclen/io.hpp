#pragma once

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "speclen/errors.hpp"
#include "speclen/knee.hpp"
#include "speclen/spectral.hpp"

namespace speclen {

using Json = nlohmann::ordered_json;

namespace detail {

inline std::string format_double(double x) {
    std::ostringstream os;
    os << std::setprecision(17) << x;
    return os.str();
}

inline bool parse_double(const std::string& s, double& out) {
    const char* b = s.data();
    const char* e = b + s.size();
    while (b < e && (*b == ' ' || *b == '\t')) ++b;
    while (e > b && (e[-1] == ' ' || e[-1] == '\t' || e[-1] == '\r')) --e;
    if (b == e) return false;
    const auto res = std::from_chars(b, e, out);
    return res.ec == std::errc() && res.ptr == e;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    cells.push_back(cur);
    return cells;
}

inline std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

}  // namespace detail

// Feature CSV: one sample per row, comma separated, optional header row
// (detected when the first cell of the first line is non-numeric).
inline FeatureMatrix read_feature_csv(const std::string& path) {
    const auto lines = detail::read_lines(path);
    if (lines.empty()) throw validation_error("empty feature file: " + path);

    std::size_t start = 0;
    double probe;
    if (!detail::parse_double(detail::split_csv_line(lines[0])[0], probe)) start = 1;
    if (start >= lines.size()) throw validation_error("feature file has a header but no data rows");

    std::vector<std::vector<double>> rows;
    std::size_t width = 0;
    for (std::size_t i = start; i < lines.size(); ++i) {
        const auto cells = detail::split_csv_line(lines[i]);
        if (width == 0) width = cells.size();
        if (cells.size() != width)
            throw validation_error("feature file row " + std::to_string(i + 1) + " has " +
                                   std::to_string(cells.size()) + " cells, expected " +
                                   std::to_string(width));
        std::vector<double> row(width);
        for (std::size_t j = 0; j < width; ++j)
            if (!detail::parse_double(cells[j], row[j]))
                throw validation_error("feature file row " + std::to_string(i + 1) + " column " +
                                       std::to_string(j + 1) + ": cannot parse '" + cells[j] + "'");
        rows.push_back(std::move(row));
    }

    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < width; ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return FeatureMatrix(std::move(m));
}

inline void write_feature_csv(const std::string& path, const FeatureMatrix& features) {
    features.validate();
    std::ofstream out(path);
    if (!out) throw validation_error("cannot write file: " + path);
    for (Eigen::Index i = 0; i < features.k(); ++i) {
        for (Eigen::Index j = 0; j < features.d(); ++j) {
            if (j) out << ',';
            out << detail::format_double(features.data(i, j));
        }
        out << '\n';
    }
}

// Curve CSV: columns k, score, then optional replicate columns rep1..repR.
inline PerformanceCurve read_curve_csv(const std::string& path) {
    const auto lines = detail::read_lines(path);
    if (lines.empty()) throw validation_error("empty curve file: " + path);

    std::size_t start = 0;
    double probe;
    if (!detail::parse_double(detail::split_csv_line(lines[0])[0], probe)) start = 1;

    PerformanceCurve curve;
    std::size_t width = 0;
    for (std::size_t i = start; i < lines.size(); ++i) {
        const auto cells = detail::split_csv_line(lines[i]);
        if (width == 0) width = cells.size();
        if (cells.size() != width || width < 2)
            throw validation_error("curve file row " + std::to_string(i + 1) +
                                   ": expected k,score[,rep...] with consistent width");
        std::vector<double> vals(width);
        for (std::size_t j = 0; j < width; ++j)
            if (!detail::parse_double(cells[j], vals[j]))
                throw validation_error("curve file row " + std::to_string(i + 1) + " column " +
                                       std::to_string(j + 1) + ": cannot parse '" + cells[j] + "'");
        const double kd = vals[0];
        if (kd < 1.0 || kd != std::floor(kd))
            throw validation_error("curve file row " + std::to_string(i + 1) +
                                   ": k must be a positive integer");
        curve.points.push_back({static_cast<long long>(kd), vals[1]});
        if (width > 2)
            curve.replicates.emplace_back(vals.begin() + 2, vals.end());
    }
    curve.validate();
    return curve;
}

inline void write_curve_csv(const std::string& path, const PerformanceCurve& curve) {
    curve.validate();
    std::ofstream out(path);
    if (!out) throw validation_error("cannot write file: " + path);
    out << "k,score";
    const std::size_t reps = curve.replicates.empty() ? 0 : curve.replicates[0].size();
    for (std::size_t r = 0; r < reps; ++r) out << ",rep" << (r + 1);
    out << '\n';
    for (std::size_t i = 0; i < curve.points.size(); ++i) {
        out << curve.points[i].k << ',' << detail::format_double(curve.points[i].score);
        if (reps) {
            for (double v : curve.replicates[i]) out << ',' << detail::format_double(v);
        }
        out << '\n';
    }
}

inline constexpr const char* config_schema_version = "1";
inline constexpr const char* tool_version = "0.1.0";

// Parse a config file; schema_version is mandatory and must match.
inline Json read_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open config: " + path);
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw validation_error(std::string("config parse error: ") + e.what());
    }
    if (!j.is_object()) throw validation_error("config root must be an object");
    if (!j.contains("schema_version"))
        throw validation_error("config is missing the mandatory schema_version field");
    if (!j["schema_version"].is_string() ||
        j["schema_version"].get<std::string>() != config_schema_version)
        throw validation_error("unsupported schema_version; expected \"" +
                               std::string(config_schema_version) + "\"");
    return j;
}

// Reject any key not in the allowed list (applied per object, not recursively).
inline void require_keys(const Json& obj, const std::string& where,
                         const std::vector<std::string>& allowed) {
    for (const auto& [key, _] : obj.items()) {
        bool ok = false;
        for (const auto& a : allowed)
            if (key == a) {
                ok = true;
                break;
            }
        if (!ok)
            throw validation_error("unknown key '" + key + "' in " + where);
    }
}

struct Report {
    std::string command;
    Json inputs_echo;
    Json results;
    Json provenance;

    Json to_json() const {
        Json j;
        j["command"] = command;
        j["inputs_echo"] = inputs_echo;
        j["results"] = results;
        j["provenance"] = provenance;
        return j;
    }
};

inline void write_report(const std::string& path, const Report& report) {
    std::ofstream out(path);
    if (!out) throw validation_error("cannot write report: " + path);
    out << report.to_json().dump(2) << '\n';
}

}  // namespace speclen
