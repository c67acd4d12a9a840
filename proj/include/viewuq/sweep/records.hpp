#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "viewuq/core/binary_io.hpp"
#include "viewuq/core/error.hpp"
#include "viewuq/sweep/grid.hpp"
#include "viewuq/uq/uncertainty.hpp"

namespace viewuq {

enum class Quantity { Uncertainty, Error, ErrorStd, Sensitivity, SensitivityStd };
enum class Channel { R, G, B, Combined };

inline std::string to_string(Quantity q) {
  switch (q) {
    case Quantity::Uncertainty: return "uncertainty";
    case Quantity::Error: return "error";
    case Quantity::ErrorStd: return "error_std";
    case Quantity::Sensitivity: return "sensitivity";
    case Quantity::SensitivityStd: return "sensitivity_std";
  }
  return "?";
}

inline Quantity quantity_from_string(const std::string& s) {
  if (s == "uncertainty") return Quantity::Uncertainty;
  if (s == "error") return Quantity::Error;
  if (s == "error_std") return Quantity::ErrorStd;
  if (s == "sensitivity") return Quantity::Sensitivity;
  if (s == "sensitivity_std") return Quantity::SensitivityStd;
  throw InvalidArgument("unknown quantity '" + s + "'");
}

inline std::string to_string(Channel c) {
  switch (c) {
    case Channel::R: return "R";
    case Channel::G: return "G";
    case Channel::B: return "B";
    case Channel::Combined: return "combined";
  }
  return "?";
}

inline Channel channel_from_string(const std::string& s) {
  if (s == "R" || s == "r") return Channel::R;
  if (s == "G" || s == "g") return Channel::G;
  if (s == "B" || s == "b") return Channel::B;
  if (s == "combined") return Channel::Combined;
  throw InvalidArgument("unknown channel '" + s + "' (expected R, G, B or combined)");
}

/// Per-view scalars for one method. Channel aggregates are pixel means of the
/// channel maps; combined = R + G + B of those aggregates (float, in order).
struct MethodAggregates {
  float uncertainty = 0, error = 0, error_std = 0, sensitivity = 0, sensitivity_std = 0;
  std::array<float, 3> channel_uncertainty{}, channel_error{}, channel_error_std{};

  static MethodAggregates from(const PredictionBundle& b, double sens_mean, double sens_std) {
    MethodAggregates a;
    for (std::size_t c = 0; c < 3; ++c) {
      a.channel_uncertainty[c] = b.channel_uncertainty[c].mean();
      a.channel_error[c] = b.channel_error[c].mean();
      a.channel_error_std[c] = b.channel_error_std[c].mean();
    }
    a.uncertainty = a.channel_uncertainty[0] + a.channel_uncertainty[1] + a.channel_uncertainty[2];
    a.error = a.channel_error[0] + a.channel_error[1] + a.channel_error[2];
    a.error_std = a.channel_error_std[0] + a.channel_error_std[1] + a.channel_error_std[2];
    a.sensitivity = static_cast<float>(sens_mean);
    a.sensitivity_std = static_cast<float>(sens_std);
    return a;
  }

  float value(Quantity q, Channel c) const {
    const auto pick = [&](float combined, const std::array<float, 3>& ch) {
      return c == Channel::Combined ? combined : ch[static_cast<std::size_t>(c)];
    };
    switch (q) {
      case Quantity::Uncertainty: return pick(uncertainty, channel_uncertainty);
      case Quantity::Error: return pick(error, channel_error);
      case Quantity::ErrorStd: return pick(error_std, channel_error_std);
      case Quantity::Sensitivity:
      case Quantity::SensitivityStd:
        if (c != Channel::Combined) throw InvalidArgument(to_string(q) + " has no per-channel values");
        return q == Quantity::Sensitivity ? sensitivity : sensitivity_std;
    }
    return 0.0f;
  }
  friend bool operator==(const MethodAggregates&, const MethodAggregates&) = default;
};

struct SweepRecord {
  float theta = 0;
  float phi = 0;
  MethodAggregates mc;
  MethodAggregates ens;

  const MethodAggregates& method(UqMethod m) const { return m == UqMethod::McDropout ? mc : ens; }
  friend bool operator==(const SweepRecord&, const SweepRecord&) = default;
};

inline constexpr std::size_t kMethodFloats = 14;
inline constexpr std::size_t kRecordFloats = 2 + 2 * kMethodFloats;
inline constexpr std::size_t kRecordBytes = 4 * kRecordFloats;

/// Field order of one record in records.bin (30 little-endian f32 values).
inline std::vector<std::string> record_fields() {
  std::vector<std::string> f{"theta", "phi"};
  for (const char* m : {"mc", "ens"}) {
    const std::string p = std::string(m) + ".";
    for (const char* q : {"uncertainty", "error", "error_std", "sensitivity", "sensitivity_std"}) f.push_back(p + q);
    for (const char* q : {"uncertainty", "error", "error_std"}) {
      for (const char* c : {"R", "G", "B"}) f.push_back(p + q + "_" + c);
    }
  }
  return f;
}

inline std::array<float, kRecordFloats> record_to_floats(const SweepRecord& r) {
  std::array<float, kRecordFloats> out{};
  std::size_t k = 0;
  out[k++] = r.theta;
  out[k++] = r.phi;
  for (const MethodAggregates* a : {&r.mc, &r.ens}) {
    for (float v : {a->uncertainty, a->error, a->error_std, a->sensitivity, a->sensitivity_std}) out[k++] = v;
    for (const auto* ch : {&a->channel_uncertainty, &a->channel_error, &a->channel_error_std}) {
      for (float v : *ch) out[k++] = v;
    }
  }
  return out;
}

inline SweepRecord record_from_floats(std::span<const float> v) {
  if (v.size() != kRecordFloats) throw IoError("sweep record needs " + std::to_string(kRecordFloats) + " floats");
  SweepRecord r;
  std::size_t k = 0;
  r.theta = v[k++];
  r.phi = v[k++];
  for (MethodAggregates* a : {&r.mc, &r.ens}) {
    for (float* f : {&a->uncertainty, &a->error, &a->error_std, &a->sensitivity, &a->sensitivity_std}) *f = v[k++];
    for (auto* ch : {&a->channel_uncertainty, &a->channel_error, &a->channel_error_std}) {
      for (float& f : *ch) f = v[k++];
    }
  }
  return r;
}

inline std::vector<char> encode_records(std::span<const SweepRecord> records) {
  std::vector<char> out;
  out.reserve(records.size() * kRecordBytes);
  for (const auto& r : records) {
    const auto f = record_to_floats(r);
    append_f32_le(out, f);
  }
  return out;
}

inline std::vector<SweepRecord> decode_records(const std::vector<char>& bytes) {
  if (bytes.size() % kRecordBytes != 0) {
    throw IoError("records blob of " + std::to_string(bytes.size()) + " bytes is not a multiple of " +
                  std::to_string(kRecordBytes));
  }
  std::vector<SweepRecord> out;
  for (std::size_t off = 0; off < bytes.size(); off += kRecordBytes) {
    const auto f = parse_f32_le(bytes.data() + off, kRecordFloats);
    out.push_back(record_from_floats(f));
  }
  return out;
}

}  // namespace viewuq
