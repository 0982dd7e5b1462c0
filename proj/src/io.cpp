#include "sabias/io.hpp"

#include <cstdio>
#include <sstream>

namespace sabias {

std::string format_float(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : out_(path) {
    if (!out_) fail(Err::SolveFailed, "cannot open " + path.string() + " for writing");
    for (size_t i = 0; i < header.size(); ++i) {
        if (i) out_ << ',';
        out_ << header[i];
    }
    out_ << '\n';
}

CsvWriter& CsvWriter::field(const std::string& s) {
    if (row_started_) out_ << ',';
    out_ << s;
    row_started_ = true;
    return *this;
}

CsvWriter& CsvWriter::field(double v) { return field(format_float(v)); }

CsvWriter& CsvWriter::field(std::int64_t v) { return field(std::to_string(v)); }

void CsvWriter::end_row() {
    out_ << '\n';
    row_started_ = false;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(Err::MissingArtifacts, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace sabias
