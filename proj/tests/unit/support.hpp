#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>

#include "ebsaea/error.hpp"

namespace testing {

// Code of the ebsaea::Error thrown by f, or nullopt if nothing is thrown.
template <typename F>
std::optional<ebsaea::ErrorCode> error_code(F&& f) {
  try {
    f();
  } catch (const ebsaea::Error& e) {
    return e.code();
  }
  return std::nullopt;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

inline std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::path(EBSAEA_TEST_TMP) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
