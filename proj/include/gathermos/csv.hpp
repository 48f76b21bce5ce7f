#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "gathermos/errors.hpp"

namespace gathermos {
namespace csv {

struct CsvParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

// RFC-4180-style reader: comma separated, double quotes for fields that
// contain commas, quotes or newlines, "" as an escaped quote. The first
// record is the header. CRLF line endings are accepted.
Table read_file(const std::filesystem::path& path);

// Quotes a field if it needs quoting, otherwise returns it unchanged.
std::string escape(const std::string& field);

std::string join_row(const std::vector<std::string>& fields);

}  // namespace csv
}  // namespace gathermos
