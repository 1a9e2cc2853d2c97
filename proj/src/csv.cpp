#include "ddessm/csv.hpp"

#include <cmath>
#include <cstdio>

#include "ddessm/error.hpp"

namespace ddessm {

std::string format_number(double v, int precision) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (v == 0.0) return "0";  // no negative zero
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    return buf;
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header, int precision)
    : out_(path, std::ios::binary), path_(path), precision_(precision), columns_(header.size()) {
    if (!out_) throw ConfigError("cannot write '" + path + "'");
    for (const auto& h : header) *this << h;
    end_row();
}

void CsvWriter::sep() {
    if (in_row_++ > 0) out_ << ',';
}

CsvWriter& CsvWriter::operator<<(double v) {
    sep();
    out_ << format_number(v, precision_);
    return *this;
}

CsvWriter& CsvWriter::operator<<(int v) {
    sep();
    out_ << v;
    return *this;
}

CsvWriter& CsvWriter::operator<<(long v) {
    sep();
    out_ << v;
    return *this;
}

CsvWriter& CsvWriter::operator<<(const std::string& v) {
    sep();
    if (v.find_first_of(",\"\n") == std::string::npos) {
        out_ << v;
    } else {
        out_ << '"';
        for (char c : v) {
            if (c == '"') out_ << '"';
            out_ << c;
        }
        out_ << '"';
    }
    return *this;
}

void CsvWriter::end_row() {
    if (in_row_ != columns_)
        throw std::logic_error("CSV row in '" + path_ + "' has " + std::to_string(in_row_) + " fields, expected " +
                               std::to_string(columns_));
    out_ << '\n';
    in_row_ = 0;
    if (!out_) throw NumericalError("write to '" + path_ + "' failed");
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj, int stride, int precision) {
    std::vector<std::string> header{"t"};
    const size_t ncol = traj.states.empty() ? 0 : static_cast<size_t>(traj.states.front().size());
    for (size_t c = 0; c < ncol; ++c)
        header.push_back("x" + std::to_string(traj.coordinates.empty() ? static_cast<int>(c) + 1
                                                                       : traj.coordinates[c] + 1));
    CsvWriter w(path, header, precision);
    for (size_t i = 0; i < traj.times.size(); i += static_cast<size_t>(std::max(stride, 1))) {
        w << traj.times[i];
        for (size_t c = 0; c < ncol; ++c) w << traj.states[i][static_cast<Eigen::Index>(c)];
        w.end_row();
    }
}

void write_section_csv(const std::string& path, const std::vector<Vec>& pts,
                       const std::vector<std::string>& names, int precision) {
    std::vector<std::string> header{"k"};
    header.insert(header.end(), names.begin(), names.end());
    CsvWriter w(path, header, precision);
    for (size_t k = 0; k < pts.size(); ++k) {
        if (static_cast<size_t>(pts[k].size()) != names.size())
            throw std::logic_error("section point dimension does not match the header");
        w << static_cast<int>(k);
        for (Eigen::Index c = 0; c < pts[k].size(); ++c) w << pts[k][c];
        w.end_row();
    }
}

}  // namespace ddessm
