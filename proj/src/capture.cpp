#include "usf/capture.hpp"

#include "usf/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace usf {

namespace {

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& line, char sep)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, sep))
        out.push_back(trim(cell));
    if (!line.empty() && line.back() == sep)
        out.emplace_back();
    return out;
}

double parse_number(const std::string& s, std::size_t line, const std::string& what)
{
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (!s.empty() && *first == '+')
        ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (s.empty() || ec != std::errc() || ptr != last || !std::isfinite(v))
        throw ParseError(line, "cannot parse " + what + " '" + s + "' as a number");
    return v;
}

std::string format_number(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

std::optional<SampleVector> CaptureFile::truth_samples() const
{
    if (!truth)
        return std::nullopt;
    return SampleVector(*truth, grid());
}

CaptureFile load_capture(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open capture file '" + path.string() + "'");

    CaptureFile cap;
    std::string line;
    std::size_t lineno = 0;
    int col_time = -1, col_truth = -1, col_modulo = -1;
    std::size_t columns = 0;
    bool have_header = false;
    std::vector<std::size_t> row_lines;

    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty())
            continue;
        if (t.front() == '#') {
            const std::string body = trim(std::string_view(t).substr(1));
            const auto sep = body.find_first_of("=:");
            if (sep != std::string::npos) {
                const std::string key = trim(std::string_view(body).substr(0, sep));
                if (!key.empty())
                    cap.metadata[key] = trim(std::string_view(body).substr(sep + 1));
            }
            continue;
        }
        const auto cells = split(t, ',');
        if (!have_header) {
            for (std::size_t i = 0; i < cells.size(); ++i) {
                const int idx = static_cast<int>(i);
                if (cells[i] == "time")
                    col_time = idx;
                else if (cells[i] == "truth")
                    col_truth = idx;
                else if (cells[i] == "modulo")
                    col_modulo = idx;
                else
                    throw ParseError(lineno, "unknown column '" + cells[i] + "'");
            }
            if (col_time < 0 || col_modulo < 0)
                throw ParseError(lineno, "header must name at least 'time' and 'modulo'");
            columns = cells.size();
            have_header = true;
            if (col_truth >= 0)
                cap.truth.emplace();
            continue;
        }
        if (cells.size() != columns)
            throw ParseError(lineno, "expected " + std::to_string(columns) + " fields, got " +
                                         std::to_string(cells.size()));
        cap.time.push_back(parse_number(cells[col_time], lineno, "time"));
        cap.modulo.push_back(parse_number(cells[col_modulo], lineno, "modulo"));
        if (col_truth >= 0)
            cap.truth->push_back(parse_number(cells[col_truth], lineno, "truth"));
        row_lines.push_back(lineno);
    }
    if (!have_header)
        throw ParseError(lineno, "missing column header");
    if (cap.time.size() < 2)
        throw ParseError(lineno, "a capture needs at least two samples");

    const std::size_t K = cap.time.size();
    if (auto it = cap.metadata.find("T"); it != cap.metadata.end())
        cap.step = parse_number(it->second, 0, "metadata T");
    else
        cap.step = (cap.time.back() - cap.time.front()) / static_cast<double>(K - 1);
    if (!(cap.step > 0.0))
        throw ParseError(row_lines[1], "time column must be strictly increasing");
    for (std::size_t k = 1; k < K; ++k) {
        const double d = cap.time[k] - cap.time[k - 1];
        if (std::abs(d - cap.step) > 1e-6 * cap.step)
            throw ParseError(row_lines[k], "non-uniform time step " + format_number(d) +
                                               " (expected " + format_number(cap.step) + ")");
    }

    if (auto it = cap.metadata.find("tau"); it != cap.metadata.end())
        cap.tau = parse_number(it->second, 0, "metadata tau");
    else
        cap.tau = cap.step * static_cast<double>(K);
    if (auto it = cap.metadata.find("dc_offset"); it != cap.metadata.end()) {
        cap.dc_offset = parse_number(it->second, 0, "metadata dc_offset");
        for (auto& v : cap.modulo)
            v -= cap.dc_offset;
    }
    return cap;
}

void write_capture(const std::filesystem::path& path, const CaptureFile& cap)
{
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write capture file '" + path.string() + "'");
    auto meta = cap.metadata;
    meta["T"] = format_number(cap.step);
    meta["tau"] = format_number(cap.tau);
    if (cap.dc_offset != 0.0)
        meta["dc_offset"] = format_number(cap.dc_offset);
    for (const auto& [k, v] : meta)
        out << "# " << k << " = " << v << '\n';
    out << (cap.truth ? "time,truth,modulo\n" : "time,modulo\n");
    for (std::size_t k = 0; k < cap.size(); ++k) {
        out << format_number(cap.time[k]) << ',';
        if (cap.truth)
            out << format_number((*cap.truth)[k]) << ',';
        out << format_number(cap.modulo[k] + cap.dc_offset) << '\n';
    }
    if (!out)
        throw IoError("write failed for '" + path.string() + "'");
}

} // namespace usf
