#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "tsb/grid.hpp"
#include "tsb/tds.hpp"

namespace tsbtest {

inline std::string data_path(const std::string& name) { return std::string(TSB_DATA_DIR) + "/" + name; }

inline const tsb::GridCase& case9() {
  static const tsb::GridCase c = tsb::load_case_file(data_path("case9.json"));
  return c;
}

inline const tsb::GridCase& case6() {
  static const tsb::GridCase c = tsb::load_case_file(data_path("case6.json"));
  return c;
}

inline tsb::Contingency bus5_fault() { return {"f5", 5, std::string("5-7"), 0.2}; }

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("tsb_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace tsbtest
