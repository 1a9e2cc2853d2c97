#pragma once

// Plain CSV output with a fixed number format, so identical runs give
// byte-identical files.

#include <fstream>
#include <string>
#include <vector>

#include "ddessm/simulate.hpp"
#include "ddessm/types.hpp"

namespace ddessm {

/// %.{precision}g; "nan" / "inf" / "-inf" for non-finite values.
std::string format_number(double v, int precision = 12);

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header, int precision = 12);

    CsvWriter& operator<<(double v);
    CsvWriter& operator<<(int v);
    CsvWriter& operator<<(long v);
    CsvWriter& operator<<(const std::string& v);
    CsvWriter& operator<<(const char* v) { return *this << std::string(v); }
    void end_row();

private:
    void sep();
    std::ofstream out_;
    std::string path_;
    int precision_;
    size_t columns_;
    size_t in_row_ = 0;
};

/// t followed by the recorded coordinates (x<index>), every `stride`-th node.
void write_trajectory_csv(const std::string& path, const Trajectory& traj, int stride = 1, int precision = 12);

/// k followed by the section coordinates.
void write_section_csv(const std::string& path, const std::vector<Vec>& pts,
                       const std::vector<std::string>& names, int precision = 12);

}  // namespace ddessm
