#pragma once

#include <stdexcept>
#include <string>

namespace lir {

enum class errc {
  zero_norm_row,
  all_masked,
  degenerate_column,
  degenerate_level,
  shape_mismatch,
  non_square,
  dim_mismatch,
  assignment_mismatch,
  missing_truth,
  config_error,
  io_error,
  format_error,
  checksum_error,
};

inline const char* errc_name(errc c) noexcept {
  switch (c) {
    case errc::zero_norm_row: return "ZeroNormRow";
    case errc::all_masked: return "AllMasked";
    case errc::degenerate_column: return "DegenerateColumn";
    case errc::degenerate_level: return "DegenerateLevel";
    case errc::shape_mismatch: return "ShapeMismatch";
    case errc::non_square: return "NonSquare";
    case errc::dim_mismatch: return "DimMismatch";
    case errc::assignment_mismatch: return "AssignmentMismatch";
    case errc::missing_truth: return "MissingTruth";
    case errc::config_error: return "ConfigError";
    case errc::io_error: return "IoError";
    case errc::format_error: return "FormatError";
    case errc::checksum_error: return "ChecksumError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void raise(errc code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool ok, errc code, const std::string& msg) {
  if (!ok) raise(code, msg);
}

}  // namespace lir
