#pragma once

#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "mi_decode/mi_decode.hpp"

#define EXPECT_MI_ERROR(stmt, expected_code)                                   \
  do {                                                                         \
    try {                                                                      \
      stmt;                                                                    \
      ADD_FAILURE() << "expected " << mi::to_string(expected_code);            \
    } catch (const mi::Error& e_) {                                            \
      EXPECT_EQ(e_.code(), expected_code) << e_.what();                        \
    }                                                                          \
  } while (0)

namespace support {

inline std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("mi_decode_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// PSD restricted to 4-30 Hz: 14 bins per channel. Same signal, a fraction of
// the fitting cost of the full 129-bin layout.
inline mi::DecoderConfig fast_config() {
  mi::DecoderConfig c;
  c.psd.fmin_hz = 4.0;
  c.psd.fmax_hz = 30.0;
  return c;
}

inline mi::synth::SynthSpec small_spec(std::uint64_t seed = 7) {
  mi::synth::SynthSpec s;
  s.seed = seed;
  s.offline_runs = 2;
  s.online_runs = 2;
  s.trials_per_run = 4;
  return s;
}

}  // namespace support
