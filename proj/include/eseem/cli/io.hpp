// io.hpp: CSV trace/spectrum files and single-polyline SVG plots

#pragma once

#include "eseem/pulse_engine.hpp"
#include "eseem/spectral.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace eseem::cli {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// %.17g: round-trips every double exactly.
inline std::string format_value(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline constexpr std::string_view kTimestampPrefix = "# generated: ";

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

// Header comment block shared by all CSV outputs. Everything except the
// timestamp line is a deterministic function of the inputs.
struct CsvHeader {
    std::string command;
    std::vector<std::pair<std::string, std::string>> fields;
    std::string config_echo;

    void write(std::ostream& os) const {
        os << "# eseem " << command << "\n";
        os << kTimestampPrefix << utc_timestamp() << "\n";
        for (const auto& [k, v] : fields) os << "# " << k << ": " << v << "\n";
        if (!config_echo.empty()) {
            os << "# config:\n";
            std::istringstream lines(config_echo);
            std::string line;
            while (std::getline(lines, line)) os << "#   " << line << "\n";
        }
    }
};

inline void write_trace_csv(std::ostream& os, const EchoTrace& trace, const CsvHeader& header,
                            bool residual_column = false, const std::vector<double>& residuals = {}) {
    header.write(os);
    for (const auto& [k, v] : trace.metadata) os << "# meta." << k << ": " << v << "\n";
    os << (residual_column ? "tau_s,v,v_im_residual\n" : "tau_s,v\n");
    for (std::size_t k = 0; k < trace.size(); ++k) {
        os << format_value(trace.tau_s[k]) << "," << format_value(trace.v[k]);
        if (residual_column) os << "," << format_value(k < residuals.size() ? residuals[k] : trace.max_imag_residual);
        os << "\n";
    }
}

inline void write_spectrum_csv(std::ostream& os, const Spectrum& spec, const CsvHeader& header) {
    header.write(os);
    os << "# window: " << to_string(spec.window) << "\n";
    os << "# zero_pad_factor: " << spec.zero_pad_factor << "\n";
    os << "freq_hz,magnitude\n";
    for (std::size_t k = 0; k < spec.freq_hz.size(); ++k)
        os << format_value(spec.freq_hz[k]) << "," << format_value(spec.magnitude[k]) << "\n";
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
        out.push_back(cell);
    }
    return out;
}

inline double parse_cell(const std::string& cell, std::size_t line_no) {
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (cell.empty() || end != cell.c_str() + cell.size())
        throw IoError("line " + std::to_string(line_no) + ": not a number: '" + cell + "'");
    return v;
}

}  // namespace detail

// Reads the named columns of a CSV with a header row and '#' comment lines.
inline std::pair<std::vector<double>, std::vector<double>> read_columns(std::istream& in, const std::string& x_name,
                                                                        const std::string& y_name,
                                                                        std::vector<std::string>* comments = nullptr) {
    std::vector<double> xs, ys;
    std::string line;
    std::size_t line_no = 0, ix = 0, iy = 0, width = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        if (line[0] == '#') {
            if (comments) comments->push_back(line);
            continue;
        }
        const auto cells = detail::split_csv(line);
        if (!have_header) {
            const auto x = std::find(cells.begin(), cells.end(), x_name);
            const auto y = std::find(cells.begin(), cells.end(), y_name);
            if (x == cells.end() || y == cells.end())
                throw IoError("header '" + line + "' lacks columns '" + x_name + "' and '" + y_name + "'");
            ix = static_cast<std::size_t>(x - cells.begin());
            iy = static_cast<std::size_t>(y - cells.begin());
            width = cells.size();
            have_header = true;
            continue;
        }
        if (cells.size() != width)
            throw IoError("line " + std::to_string(line_no) + ": expected " + std::to_string(width) + " columns");
        xs.push_back(detail::parse_cell(cells[ix], line_no));
        ys.push_back(detail::parse_cell(cells[iy], line_no));
    }
    if (!have_header) throw IoError("missing header with columns '" + x_name + "," + y_name + "'");
    return {xs, ys};
}

inline EchoTrace read_trace_csv(std::istream& in) {
    std::vector<std::string> comments;
    auto [tau, v] = read_columns(in, "tau_s", "v", &comments);
    EchoTrace t;
    t.tau_s = std::move(tau);
    t.v = std::move(v);
    const std::string prefix = "# meta.";
    for (const auto& c : comments) {
        if (c.rfind(prefix, 0) != 0) continue;
        const auto colon = c.find(": ", prefix.size());
        if (colon == std::string::npos) continue;
        t.set_meta(c.substr(prefix.size(), colon - prefix.size()), c.substr(colon + 2));
    }
    return t;
}

inline EchoTrace read_trace_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open trace file '" + path + "'");
    return read_trace_csv(in);
}

inline Spectrum read_spectrum_csv(std::istream& in) {
    auto [f, m] = read_columns(in, "freq_hz", "magnitude");
    Spectrum s;
    s.freq_hz = std::move(f);
    s.magnitude = std::move(m);
    return s;
}

// Single-polyline line plot with labelled axes.
inline void write_svg(std::ostream& os, const std::vector<double>& x, const std::vector<double>& y,
                      const std::string& x_label, const std::string& y_label, const std::string& title) {
    constexpr double width = 640, height = 400, left = 70, right = 20, top = 40, bottom = 50;
    if (x.empty() || x.size() != y.size()) throw IoError("write_svg: need equal, non-empty series");
    const auto [xmin_it, xmax_it] = std::minmax_element(x.begin(), x.end());
    const auto [ymin_it, ymax_it] = std::minmax_element(y.begin(), y.end());
    double xmin = *xmin_it, xmax = *xmax_it, ymin = *ymin_it, ymax = *ymax_it;
    if (xmax == xmin) xmax = xmin + 1.0;
    if (ymax == ymin) {
        ymin -= 0.5;
        ymax += 0.5;
    }
    const double pw = width - left - right, ph = height - top - bottom;
    auto sx = [&](double v) { return left + (v - xmin) / (xmax - xmin) * pw; };
    auto sy = [&](double v) { return top + (1.0 - (v - ymin) / (ymax - ymin)) * ph; };

    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\">" << title << "</text>\n";
    os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    os << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 12 << "\" text-anchor=\"middle\">" << x_label
       << "</text>\n";
    os << "<text x=\"16\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
       << top + ph / 2 << ")\">" << y_label << "</text>\n";
    os << "<text x=\"" << left << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">" << format_value(xmin)
       << "</text>\n";
    os << "<text x=\"" << left + pw << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">"
       << format_value(xmax) << "</text>\n";
    os << "<text x=\"" << left - 6 << "\" y=\"" << top + ph << "\" text-anchor=\"end\">" << format_value(ymin)
       << "</text>\n";
    os << "<text x=\"" << left - 6 << "\" y=\"" << top + 10 << "\" text-anchor=\"end\">" << format_value(ymax)
       << "</text>\n";
    os << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"";
    os << std::setprecision(6);
    for (std::size_t k = 0; k < x.size(); ++k) os << (k ? " " : "") << sx(x[k]) << "," << sy(y[k]);
    os << "\"/>\n</svg>\n";
}

}  // namespace eseem::cli
