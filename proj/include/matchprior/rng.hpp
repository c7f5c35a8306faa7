#pragma once

#include <cstdint>
#include <string_view>

namespace matchprior {

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t hash_string(std::string_view s);

// Counter-based stream: the k-th draw is a pure function of (key, k), so a
// stream can be copied, split and replayed without shared state.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : key_(splitmix64(seed ^ 0x6a09e667f3bcc909ULL)) {}

  // Child stream for an index (replicate number, configuration number, ...).
  Stream split(std::uint64_t id) const { return Stream(key_, id); }

  std::uint64_t next_u64() { return splitmix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }
  // Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }
  double normal();

  std::uint64_t key() const { return key_; }
  std::uint64_t position() const { return counter_; }

 private:
  Stream(std::uint64_t parent, std::uint64_t id) : key_(splitmix64(parent ^ splitmix64(id + 0x243f6a8885a308d3ULL))) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace matchprior
