#include "odm/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "odm/error.hpp"

namespace odm {

int CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

std::size_t CsvTable::require(std::string_view name, std::string_view context) const {
    const int c = column(name);
    if (c < 0) throw SchemaError(std::string(context) + ": missing column '" + std::string(name) + "'");
    return static_cast<std::size_t>(c);
}

namespace {

// Splits one logical record; handles quoted fields with embedded
// delimiters, doubled quotes and newlines.
bool read_record(std::istream& in, char delim, std::vector<std::string>& fields) {
    fields.clear();
    std::string field;
    bool quoted = false;
    bool any = false;
    char c;
    while (in.get(c)) {
        any = true;
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field.push_back('"');
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
        } else if (c == delim) {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            fields.push_back(std::move(field));
            return true;
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    if (quoted) throw SchemaError("csv: unterminated quoted field");
    if (!any) return false;
    fields.push_back(std::move(field));
    return true;
}

std::string trimmed(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t')) --e;
    return std::string(s.substr(b, e - b));
}

}  // namespace

CsvTable parse_csv(std::istream& in, char delimiter) {
    CsvTable t;
    std::vector<std::string> rec;
    if (!read_record(in, delimiter, rec)) throw SchemaError("csv: empty input, header expected");
    for (auto& h : rec) t.header.push_back(trimmed(h));
    std::size_t line = 1;
    while (read_record(in, delimiter, rec)) {
        ++line;
        if (rec.size() == 1 && rec[0].empty()) continue;
        if (rec.size() != t.header.size())
            throw SchemaError("csv: record " + std::to_string(line) + " has " + std::to_string(rec.size()) +
                              " fields, header has " + std::to_string(t.header.size()));
        t.rows.push_back(rec);
    }
    return t;
}

CsvTable read_csv(const std::string& path, char delimiter) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SchemaError("cannot open '" + path + "'");
    return parse_csv(in, delimiter);
}

double parse_real(std::string_view field, std::string_view context) {
    const std::string s = trimmed(field);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
        throw ValidationError(std::string(context) + ": not a number: '" + s + "'");
    if (!std::isfinite(v)) throw ValidationError(std::string(context) + ": non-finite value");
    return v;
}

long long parse_integer(std::string_view field, std::string_view context) {
    const std::string s = trimmed(field);
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
        throw ValidationError(std::string(context) + ": not an integer: '" + s + "'");
    return v;
}

bool parse_flag(std::string_view field, std::string_view context) {
    const std::string s = trimmed(field);
    if (s == "1" || s == "yes" || s == "true" || s == "TRUE" || s == "Yes") return true;
    if (s == "0" || s == "no" || s == "false" || s == "FALSE" || s == "No") return false;
    throw ValidationError(std::string(context) + ": not a yes/no flag: '" + s + "'");
}

CsvWriter::CsvWriter(std::ostream& out, char delimiter) : out_(out), delimiter_(delimiter) {}

void CsvWriter::row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out_ << delimiter_;
        const std::string& f = fields[i];
        if (f.find_first_of(std::string("\"\n\r") + delimiter_) != std::string::npos) {
            out_ << '"';
            for (char c : f) {
                if (c == '"') out_ << '"';
                out_ << c;
            }
            out_ << '"';
        } else {
            out_ << f;
        }
    }
    out_ << '\n';
}

}  // namespace odm
