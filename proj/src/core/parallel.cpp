// SPDX-License-Identifier: Apache-2.0
#include "mkv/parallel.h"

#include <atomic>
#include <cstdlib>
#include <string>

namespace mkv {
namespace {

std::size_t from_env() {
  if (const char* s = std::getenv("MKV_WORKERS")) {
    try {
      const long v = std::stol(s);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  return 1;
}

std::atomic<std::size_t>& slot() {
  static std::atomic<std::size_t> n{from_env()};
  return n;
}

}  // namespace

std::size_t default_workers() { return slot().load(); }
void set_default_workers(std::size_t n) { slot().store(n == 0 ? 1 : n); }

}  // namespace mkv
