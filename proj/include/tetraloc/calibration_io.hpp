#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "tetraloc/errors.hpp"
#include "tetraloc/estimator.hpp"

namespace tetraloc {

inline std::string pair_key(std::size_t k) {
  const auto [n, o] = kPairOrder[k];
  return "pair_" + std::to_string(n) + "_" + std::to_string(o);
}

/// Plain-text key-value form: one `pair_n_o = <bias rad>` line per pair plus
/// the residual RMS.
inline std::string calibration_to_text(const CalibrationTable& table) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (std::size_t k = 0; k < kPairOrder.size(); ++k)
    out << pair_key(k) << " = " << table.pair_biases[k] << "\n";
  out << "residual_rms = " << table.residual_rms << "\n";
  return out.str();
}

inline CalibrationTable calibration_from_text(const std::string& text) {
  CalibrationTable table;
  std::array<bool, 6> seen{};
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        throw ConfigError("expected 'key = value' in calibration table", line_no);
      continue;
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    double parsed = 0.0;
    try {
      std::size_t used = 0;
      parsed = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
    } catch (const std::exception&) {
      throw ConfigError("bad number '" + value + "'", line_no);
    }
    if (key == "residual_rms") {
      table.residual_rms = parsed;
      continue;
    }
    bool matched = false;
    for (std::size_t k = 0; k < kPairOrder.size(); ++k) {
      if (key == pair_key(k)) {
        table.pair_biases[k] = parsed;
        seen[k] = true;
        matched = true;
        break;
      }
    }
    if (!matched) throw ConfigError("unknown calibration key '" + key + "'", line_no);
  }
  for (std::size_t k = 0; k < kPairOrder.size(); ++k)
    if (!seen[k]) throw ConfigError("missing calibration entry " + pair_key(k));
  return table;
}

inline void save_calibration(const CalibrationTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write calibration file: " + path);
  out << calibration_to_text(table);
}

inline CalibrationTable load_calibration(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read calibration file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return calibration_from_text(buf.str());
}

}  // namespace tetraloc
