#pragma once

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

// Checkpoint and image IO write raw little-endian bytes.
static_assert(std::endian::native == std::endian::little,
              "this build targets little-endian hosts");

namespace msdetr {

using Shape = std::vector<int>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int e : s) n *= e;
  return n;
}

[[noreturn]] inline void fail(const std::string& msg) {
  throw std::invalid_argument(msg);
}

#define MS_CHECK(cond, msg)                      \
  do {                                           \
    if (!(cond)) ::msdetr::fail(msg);            \
  } while (0)

}  // namespace msdetr
