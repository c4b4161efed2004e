#pragma once

#include <bit>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace psgi {

/// Fixed-length bitvector used for completion (x) and eligibility (e).
class Bits {
 public:
  Bits() = default;
  explicit Bits(std::size_t n) : size_(n), words_((n + 63) / 64, 0) {}

  std::size_t size() const noexcept { return size_; }

  bool test(std::size_t i) const noexcept { return (words_[i >> 6] >> (i & 63)) & 1ULL; }
  bool operator[](std::size_t i) const noexcept { return test(i); }

  void set(std::size_t i, bool v = true) noexcept {
    const std::uint64_t mask = 1ULL << (i & 63);
    if (v)
      words_[i >> 6] |= mask;
    else
      words_[i >> 6] &= ~mask;
  }
  void reset(std::size_t i) noexcept { set(i, false); }

  std::size_t count() const noexcept {
    std::size_t c = 0;
    for (auto w : words_) c += static_cast<std::size_t>(std::popcount(w));
    return c;
  }
  bool none() const noexcept { return count() == 0; }

  const std::vector<std::uint64_t>& words() const noexcept { return words_; }

  bool operator==(const Bits&) const = default;
  auto operator<=>(const Bits&) const = default;

  std::string str() const {
    std::string s(size_, '0');
    for (std::size_t i = 0; i < size_; ++i)
      if (test(i)) s[i] = '1';
    return s;
  }

  static Bits from_string(const std::string& s) {
    Bits b(s.size());
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s[i] == '1') b.set(i);
    return b;
  }

 private:
  std::size_t size_ = 0;
  std::vector<std::uint64_t> words_;
};

struct BitsHash {
  std::size_t operator()(const Bits& b) const noexcept {
    std::uint64_t h = 0x84222325cbf29ce4ULL ^ b.size();
    for (auto w : b.words()) {
      h ^= w + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }
};

}  // namespace psgi
