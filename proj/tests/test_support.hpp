#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace batchprompt::testing {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(BATCHPROMPT_FIXTURE_DIR) / name;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("batchprompt-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace batchprompt::testing
