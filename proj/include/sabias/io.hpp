#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sabias/common.hpp"

namespace sabias {

/// Shortest round-trip decimal for a double, capped at 17 significant digits.
std::string format_float(double v);

/// Minimal CSV emitter: header row, %.17g floats, newline-terminated rows.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);

    CsvWriter& field(const std::string& s);
    CsvWriter& field(double v);
    CsvWriter& field(std::int64_t v);
    void end_row();

private:
    std::ofstream out_;
    bool row_started_ = false;
};

std::string read_text_file(const std::filesystem::path& path);

} // namespace sabias
