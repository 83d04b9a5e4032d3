#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace tevo::mults {

// Global multiplication counter. Disabled by default; the bench and the
// cost-structure tests enable it around the exact code region they account
// for. Primitives report the number of scalar multiplications they execute.
struct Counter {
  bool enabled = false;
  std::uint64_t total = 0;
  // (label, running total at the time of the mark); section costs are the
  // differences between consecutive marks.
  std::vector<std::pair<std::string, std::uint64_t>> marks;
};

inline Counter& counter() {
  static Counter c;
  return c;
}

inline void add(std::uint64_t n) {
  Counter& c = counter();
  if (c.enabled) c.total += n;
}

inline void mark(const char* label) {
  Counter& c = counter();
  if (c.enabled) c.marks.emplace_back(label, c.total);
}

inline void enable() {
  Counter& c = counter();
  c.enabled = true;
  c.total = 0;
  c.marks.clear();
  c.marks.emplace_back("begin", 0);
}

inline std::uint64_t disable() {
  Counter& c = counter();
  c.enabled = false;
  return c.total;
}

inline std::uint64_t total() { return counter().total; }

// Cost of each named section since the previous mark.
inline std::vector<std::pair<std::string, std::uint64_t>> sections() {
  const Counter& c = counter();
  std::vector<std::pair<std::string, std::uint64_t>> out;
  for (std::size_t i = 1; i < c.marks.size(); ++i) {
    out.emplace_back(c.marks[i].first,
                     c.marks[i].second - c.marks[i - 1].second);
  }
  return out;
}

// RAII scope: enables on entry, restores off on exit.
struct Scope {
  Scope() { enable(); }
  ~Scope() { disable(); }
  std::uint64_t count() const { return total(); }
};

}  // namespace tevo::mults
