#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace popf::io {

std::uint64_t fnv1a(std::span<const unsigned char> bytes,
                    std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(std::string_view text);

std::string read_file(const std::string& path);

// Writes to a sibling temporary file and renames it over `path`, so readers
// never observe a partially written file.
void write_file_atomic(const std::string& path, std::string_view contents);

// 17 significant digits (round-trips exactly), used by every machine
// readable output.
std::string format_full(double v);

struct Table {
    std::vector<std::string> header;
    Eigen::MatrixXd values;
};

std::string to_csv(const std::vector<std::string>& header, const Eigen::MatrixXd& values);
Table parse_csv(std::string_view text);

}  // namespace popf::io
