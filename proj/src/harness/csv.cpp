#include "erracc/harness/csv.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace erracc::harness {

namespace {

std::string format_value(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_value(const std::string& s) {
    if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

void write_metric_csv(const std::filesystem::path& path,
                      const std::vector<metrics::MetricCurve>& curves) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path.string());
    out << kCsvHeader << "\n";
    for (const auto& c : curves) {
        for (std::size_t i = 0; i < c.lead.size(); ++i) {
            out << c.system << ',' << c.model << ',' << c.metric << ',' << c.variable << ','
                << c.lead[i] << ',' << format_value(c.value[i]) << ',' << format_value(c.lo[i])
                << ',' << format_value(c.hi[i]) << ',' << c.n_ic << ',' << c.n_members << ','
                << c.flags[i] << "\n";
        }
    }
    if (!out) throw DataError("write failed: " + path.string());
}

std::vector<metrics::MetricCurve> read_metric_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open CSV: " + path.string());
    std::string line;
    std::int64_t line_no = 0;
    // keyed by (system, model, metric, variable) to reassemble curves
    std::map<std::array<std::string, 4>, metrics::MetricCurve> curves;
    std::vector<std::array<std::string, 4>> order;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1) {
            if (line != kCsvHeader)
                throw DataError(path.string() + ":1: unexpected CSV header");
            continue;
        }
        if (line.empty()) continue;
        const auto f = split_fields(line);
        if (f.size() != 11)
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 11 fields, got " +
                            std::to_string(f.size()));
        try {
            const std::array<std::string, 4> key{f[0], f[1], f[2], f[3]};
            auto it = curves.find(key);
            if (it == curves.end()) {
                metrics::MetricCurve c;
                c.system = f[0];
                c.model = f[1];
                c.metric = f[2];
                c.variable = f[3];
                c.n_ic = std::stoi(f[8]);
                c.n_members = std::stoi(f[9]);
                it = curves.emplace(key, std::move(c)).first;
                order.push_back(key);
            }
            it->second.lead.push_back(std::stoi(f[4]));
            it->second.value.push_back(parse_value(f[5]));
            it->second.lo.push_back(parse_value(f[6]));
            it->second.hi.push_back(parse_value(f[7]));
            it->second.flags.push_back(f[10]);
        } catch (const std::exception& e) {
            throw DataError(path.string() + ":" + std::to_string(line_no) +
                            ": malformed row (" + e.what() + ")");
        }
    }
    std::vector<metrics::MetricCurve> out;
    out.reserve(order.size());
    for (const auto& key : order) out.push_back(std::move(curves.at(key)));
    return out;
}

}  // namespace erracc::harness
