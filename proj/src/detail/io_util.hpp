#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tte/error.hpp"

namespace tte::detail {

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open " + path + " for reading");
    return in;
}

inline std::ofstream open_output(const std::string& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::io, "cannot open " + path + " for writing");
    return out;
}

// Round-trip safe, locale-independent double formatting for CSV artifacts.
inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

inline void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

inline double parse_double(const std::string& s, const std::string& where) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) fail(ErrorKind::parse, where + ": trailing characters in number '" + s + "'");
        return v;
    } catch (const TteError&) {
        throw;
    } catch (const std::exception&) {
        fail(ErrorKind::parse, where + ": expected a number, got '" + s + "'");
    }
}

}  // namespace tte::detail
