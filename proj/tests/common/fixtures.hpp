// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#ifndef ERDE_FIXTURE_DIR
#error "ERDE_FIXTURE_DIR must point at tests/fixtures"
#endif

namespace erde::testing {

inline std::string fixture_path(const std::string& name) { return std::string(ERDE_FIXTURE_DIR) + "/" + name; }

/// `name = value` lines of the frozen high-precision oracle output.
inline double oracle_value(const std::string& name) {
  static const std::map<std::string, double> values = [] {
    std::map<std::string, double> out;
    std::ifstream in(fixture_path("oracle_values.txt"));
    std::string line;
    while (std::getline(in, line)) {
      const auto eq = line.find(" = ");
      if (eq == std::string::npos) continue;
      out[line.substr(0, eq)] = std::stod(line.substr(eq + 3));
    }
    return out;
  }();
  const auto it = values.find(name);
  if (it == values.end()) throw std::runtime_error("no oracle value named " + name);
  return it->second;
}

/// `layer macs` lines of the hand-counted MAC fixture ('#' starts a comment).
inline std::map<std::string, std::uint64_t> reference_macs() {
  std::map<std::string, std::uint64_t> out;
  std::ifstream in(fixture_path("reference_macs.txt"));
  std::string line;
  while (std::getline(in, line)) {
    line = line.substr(0, line.find('#'));
    std::istringstream fields(line);
    std::string name;
    std::uint64_t macs = 0;
    if (fields >> name >> macs) out[name] = macs;
  }
  return out;
}

}  // namespace erde::testing
