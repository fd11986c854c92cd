#pragma once

#include <cstddef>
#include <fstream>
#include <string>
#include <vector>

#include "stlf/error.hpp"

namespace stlf {

// Minimal CSV reader: comma-separated, optional double-quoted fields with
// "" escaping, tolerant of trailing \r. Tracks line numbers for error
// reporting.
class CsvReader {
public:
    explicit CsvReader(const std::string& path) : in_(path), path_(path) {
        if (!in_)
            throw DataError("cannot open file: " + path);
        if (!next(header_))
            throw DataError("empty CSV file: " + path);
    }

    const std::vector<std::string>& header() const { return header_; }
    std::size_t line_number() const { return line_no_; }
    const std::string& path() const { return path_; }

    // Column index of `name` in the header, or -1.
    int find(const std::string& name) const {
        for (std::size_t i = 0; i < header_.size(); ++i)
            if (header_[i] == name) return static_cast<int>(i);
        return -1;
    }

    int require(const std::string& name) const {
        const int idx = find(name);
        if (idx < 0)
            throw DataError(path_ + ": missing required column '" + name + "'");
        return idx;
    }

    // Reads the next record into `fields`. Returns false at EOF. Blank lines
    // are skipped.
    bool next(std::vector<std::string>& fields) {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_no_;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            split(line, fields);
            return true;
        }
        return false;
    }

private:
    void split(const std::string& line, std::vector<std::string>& out) const {
        out.clear();
        std::string field;
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            const char c = line[i];
            if (quoted) {
                if (c == '"') {
                    if (i + 1 < line.size() && line[i + 1] == '"') {
                        field += '"';
                        ++i;
                    } else {
                        quoted = false;
                    }
                } else {
                    field += c;
                }
            } else if (c == '"') {
                quoted = true;
            } else if (c == ',') {
                out.push_back(field);
                field.clear();
            } else {
                field += c;
            }
        }
        out.push_back(field);
    }

    std::ifstream in_;
    std::string path_;
    std::vector<std::string> header_;
    std::size_t line_no_ = 0;
};

inline double parse_double_field(const std::string& s, const std::string& path,
                                 std::size_t line, const std::string& col) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size())
            throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(line) + ": bad numeric value '" + s +
                        "' in column " + col);
    }
}

inline void write_csv_row(std::ofstream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out << ',';
        const std::string& f = fields[i];
        if (f.find_first_of(",\"\n") != std::string::npos) {
            out << '"';
            for (char c : f) {
                if (c == '"') out << '"';
                out << c;
            }
            out << '"';
        } else {
            out << f;
        }
    }
    out << '\n';
}

// Fixed decimal-independent float formatting for CSV output (round-trip
// exact, locale-free).
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace stlf
