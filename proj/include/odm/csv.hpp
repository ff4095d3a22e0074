#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace odm {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Index of a column, or -1.
    int column(std::string_view name) const;
    /// Index of a column; throws SchemaError naming the column when absent.
    std::size_t require(std::string_view name, std::string_view context) const;
};

CsvTable parse_csv(std::istream& in, char delimiter = ',');
CsvTable read_csv(const std::string& path, char delimiter = ',');

/// Strict numeric field parsing; rejects empty fields, trailing garbage, NaN and Inf.
double parse_real(std::string_view field, std::string_view context);
long long parse_integer(std::string_view field, std::string_view context);
bool parse_flag(std::string_view field, std::string_view context);

class CsvWriter {
public:
    explicit CsvWriter(std::ostream& out, char delimiter = ',');
    void row(const std::vector<std::string>& fields);

private:
    std::ostream& out_;
    char delimiter_;
};

}  // namespace odm
