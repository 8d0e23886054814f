#pragma once

#include <cstdint>
#include <vector>

namespace offla {

/// Square boolean matrix; entry (query, key) is true when the query token may
/// attend to the key token.
class BoolMatrix {
 public:
  BoolMatrix() = default;
  explicit BoolMatrix(int n, bool fill = false) : n_(n), data_(static_cast<std::size_t>(n) * n, fill ? 1 : 0) {}

  static BoolMatrix causal(int n) {
    BoolMatrix m(n);
    for (int q = 0; q < n; ++q)
      for (int k = 0; k <= q; ++k) m.set(q, k, true);
    return m;
  }

  static BoolMatrix identity(int n) {
    BoolMatrix m(n);
    for (int i = 0; i < n; ++i) m.set(i, i, true);
    return m;
  }

  int size() const { return n_; }
  bool operator()(int q, int k) const { return data_[static_cast<std::size_t>(q) * n_ + k] != 0; }
  void set(int q, int k, bool v) { data_[static_cast<std::size_t>(q) * n_ + k] = v ? 1 : 0; }

  friend bool operator==(const BoolMatrix&, const BoolMatrix&) = default;

 private:
  int n_ = 0;
  std::vector<std::uint8_t> data_;
};

}  // namespace offla
