#pragma once

#include <cstdint>
#include <string>

#include "lir/errors.hpp"

namespace lir {

enum class Mechanism { dp, hi, mlp, xti, ti, wti };

inline const char* mechanism_name(Mechanism m) noexcept {
  switch (m) {
    case Mechanism::dp: return "dp";
    case Mechanism::hi: return "hi";
    case Mechanism::mlp: return "mlp";
    case Mechanism::xti: return "xti";
    case Mechanism::ti: return "ti";
    case Mechanism::wti: return "wti";
  }
  return "?";
}

inline Mechanism parse_mechanism(const std::string& s) {
  if (s == "dp") return Mechanism::dp;
  if (s == "hi") return Mechanism::hi;
  if (s == "mlp") return Mechanism::mlp;
  if (s == "xti") return Mechanism::xti;
  if (s == "ti") return Mechanism::ti;
  if (s == "wti") return Mechanism::wti;
  raise(errc::config_error, "unknown mechanism: " + s);
}

struct FlopParams {
  uint64_t n = 1;        // number of video documents
  uint64_t d = 512;      // representation dimension
  uint64_t n_t = 32;     // text token count
  uint64_t n_v = 12;     // video token count
  uint64_t layers = 4;   // network depth (MLP, XTI)
  uint64_t levels = 3;   // feature levels (HI)

  uint64_t n_tv() const { return n_t + n_v; }

  void validate() const {
    require(n >= 1 && d >= 1 && n_t >= 1 && n_v >= 1 && layers >= 1 && levels >= 1,
            errc::config_error, "flop parameters must be positive");
  }
};

/// Closed-form cost of scoring N documents under one interaction mechanism,
/// plus the per-document storage count. `flops_per_layer` evaluates the same
/// expression with the layer factor set to 1; the quoted cross-attention cost
/// ratios use that per-layer convention.
struct FlopReport {
  Mechanism mechanism = Mechanism::dp;
  uint64_t flops = 0;
  uint64_t flops_per_layer = 0;
  uint64_t memory_units = 0;
  FlopParams params;
};

inline FlopReport flop_count(Mechanism mechanism, const FlopParams& p) {
  p.validate();
  FlopReport r;
  r.mechanism = mechanism;
  r.params = p;
  switch (mechanism) {
    case Mechanism::dp:
      r.flops = p.n * p.d;
      r.flops_per_layer = r.flops;
      r.memory_units = p.n * p.d;
      break;
    case Mechanism::hi:
      r.flops = p.n * p.levels * p.d;
      r.flops_per_layer = r.flops;
      r.memory_units = p.n * p.levels * p.d;
      break;
    case Mechanism::mlp:
      r.flops = p.n * (p.layers * p.d * p.d + p.d);
      r.flops_per_layer = p.n * (p.d * p.d + p.d);
      r.memory_units = p.n * p.d;
      break;
    case Mechanism::xti:
      r.flops = p.n * (p.d * p.d * p.n_tv() + p.n_tv() * p.n_tv() * p.d) * p.layers;
      r.flops_per_layer = p.n * (p.d * p.d * p.n_tv() + p.n_tv() * p.n_tv() * p.d);
      r.memory_units = p.n * p.n_v * p.d;
      break;
    case Mechanism::ti:
      r.flops = p.n * p.n_t * p.n_v * p.d;
      r.flops_per_layer = r.flops;
      r.memory_units = p.n * p.n_v * p.d;
      break;
    case Mechanism::wti:
      r.flops = p.n * (p.n_t * p.n_v * p.d + p.n_tv());
      r.flops_per_layer = r.flops;
      r.memory_units = p.n * p.n_v * (p.d + 1);
      break;
  }
  return r;
}

inline double flop_ratio(const FlopReport& a, const FlopReport& b, bool per_layer = false) {
  uint64_t num = per_layer ? a.flops_per_layer : a.flops;
  uint64_t den = per_layer ? b.flops_per_layer : b.flops;
  require(den > 0, errc::config_error, "zero-cost denominator");
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace lir
