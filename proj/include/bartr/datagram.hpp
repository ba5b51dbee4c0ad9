#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>

namespace bartr {

struct HomeReport {
  std::uint32_t seq = 0;
  bool left = false;
  bool right = false;
  friend bool operator==(const HomeReport&, const HomeReport&) = default;
};

struct TargetArm {
  std::uint8_t trial = 0;
  friend bool operator==(const TargetArm&, const TargetArm&) = default;
};

struct TargetLight {
  bool on = false;
  std::uint8_t trial = 0;
  friend bool operator==(const TargetLight&, const TargetLight&) = default;
};

struct TargetPress {
  std::uint8_t trial = 0;
  std::uint32_t t_ms = 0;  // reach time in ms
  double reach_time() const { return t_ms / 1000.0; }
  friend bool operator==(const TargetPress&, const TargetPress&) = default;
};

using Datagram = std::variant<HomeReport, TargetArm, TargetLight, TargetPress>;

/// Newline-terminated compact JSON with keys in a fixed order, e.g.
///   {"dev":"home","seq":5,"left":true,"right":true}
///   {"dev":"target","msg":"press","trial":7,"t_ms":1234}
std::string encode_datagram(const Datagram& msg);

/// Strict inverse of encode_datagram: key order, value types and the trailing
/// newline are checked. Throws DecodeError with the byte offset of the fault.
Datagram decode_datagram(std::string_view bytes);

}  // namespace bartr
