#pragma once

#include <string>
#include <vector>

namespace guidelearn {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

// Entry point of the guidelearn executable. Returns the process exit code.
int run_cli(int argc, char** argv);

// Formats a double so it parses back to the same value.
std::string format_double(double value);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Skips '#' comment lines; the first remaining line is the header.
CsvTable read_csv(const std::string& path);

}  // namespace guidelearn
