#include "bartr/datagram.hpp"

#include <limits>

#include "bartr/error.hpp"

namespace bartr {

namespace {

std::string b(bool v) { return v ? "true" : "false"; }

struct Encoder {
  std::string operator()(const HomeReport& m) const {
    return "{\"dev\":\"home\",\"seq\":" + std::to_string(m.seq) + ",\"left\":" + b(m.left) +
           ",\"right\":" + b(m.right) + "}\n";
  }
  std::string operator()(const TargetArm& m) const {
    return "{\"dev\":\"target\",\"msg\":\"arm\",\"trial\":" + std::to_string(m.trial) + "}\n";
  }
  std::string operator()(const TargetLight& m) const {
    return "{\"dev\":\"target\",\"msg\":\"light\",\"on\":" + b(m.on) + ",\"trial\":" + std::to_string(m.trial) +
           "}\n";
  }
  std::string operator()(const TargetPress& m) const {
    return "{\"dev\":\"target\",\"msg\":\"press\",\"trial\":" + std::to_string(m.trial) +
           ",\"t_ms\":" + std::to_string(m.t_ms) + "}\n";
  }
};

class Cursor {
 public:
  explicit Cursor(std::string_view s) : s_(s) {}

  void expect(std::string_view lit) {
    for (std::size_t i = 0; i < lit.size(); ++i) {
      if (pos_ + i >= s_.size()) throw DecodeError("truncated datagram, expected '" + std::string(lit) + "'", pos_ + i);
      if (s_[pos_ + i] != lit[i]) throw DecodeError("expected '" + std::string(lit) + "'", pos_ + i);
    }
    pos_ += lit.size();
  }

  bool accept(std::string_view lit) {
    if (s_.substr(pos_, lit.size()) != lit) return false;
    pos_ += lit.size();
    return true;
  }

  bool boolean() {
    if (accept("true")) return true;
    if (accept("false")) return false;
    throw DecodeError(pos_ >= s_.size() ? "truncated datagram, expected a boolean" : "expected a boolean", pos_);
  }

  std::uint64_t unsigned_int(std::uint64_t max) {
    const std::size_t start = pos_;
    if (pos_ >= s_.size()) throw DecodeError("truncated datagram, expected an integer", pos_);
    if (s_[pos_] < '0' || s_[pos_] > '9') throw DecodeError("expected an unsigned integer", pos_);
    if (s_[pos_] == '0' && pos_ + 1 < s_.size() && s_[pos_ + 1] >= '0' && s_[pos_ + 1] <= '9')
      throw DecodeError("leading zero in integer", pos_);
    std::uint64_t v = 0;
    while (pos_ < s_.size() && s_[pos_] >= '0' && s_[pos_] <= '9') {
      v = v * 10 + static_cast<std::uint64_t>(s_[pos_] - '0');
      if (v > max) throw DecodeError("integer out of range", start);
      ++pos_;
    }
    return v;
  }

  void finish() {
    expect("}\n");
    if (pos_ != s_.size()) throw DecodeError("trailing bytes after datagram", pos_);
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
};

constexpr std::uint64_t kU8 = std::numeric_limits<std::uint8_t>::max();
constexpr std::uint64_t kU32 = std::numeric_limits<std::uint32_t>::max();

}  // namespace

std::string encode_datagram(const Datagram& msg) { return std::visit(Encoder{}, msg); }

Datagram decode_datagram(std::string_view bytes) {
  Cursor c(bytes);
  c.expect("{\"dev\":\"");
  if (c.accept("home\"")) {
    HomeReport m;
    c.expect(",\"seq\":");
    m.seq = static_cast<std::uint32_t>(c.unsigned_int(kU32));
    c.expect(",\"left\":");
    m.left = c.boolean();
    c.expect(",\"right\":");
    m.right = c.boolean();
    c.finish();
    return m;
  }
  c.expect("target\",\"msg\":\"");
  if (c.accept("arm\"")) {
    TargetArm m;
    c.expect(",\"trial\":");
    m.trial = static_cast<std::uint8_t>(c.unsigned_int(kU8));
    c.finish();
    return m;
  }
  if (c.accept("light\"")) {
    TargetLight m;
    c.expect(",\"on\":");
    m.on = c.boolean();
    c.expect(",\"trial\":");
    m.trial = static_cast<std::uint8_t>(c.unsigned_int(kU8));
    c.finish();
    return m;
  }
  c.expect("press\"");
  TargetPress m;
  c.expect(",\"trial\":");
  m.trial = static_cast<std::uint8_t>(c.unsigned_int(kU8));
  c.expect(",\"t_ms\":");
  m.t_ms = static_cast<std::uint32_t>(c.unsigned_int(kU32));
  c.finish();
  return m;
}

}  // namespace bartr
