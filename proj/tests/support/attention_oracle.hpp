// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

// Plain-loop multi-head attention, one group at a time. No shared code with
// the packed implementation.
namespace splatedit::testing {

inline std::vector<double> loop_attention(const std::vector<double>& q, const std::vector<double>& k,
                                          const std::vector<double>& v, const std::vector<std::int64_t>& qo,
                                          const std::vector<std::int64_t>& ko, int dim, int heads) {
  const int dh = dim / heads;
  std::vector<double> out(q.size(), 0.0);
  for (std::size_t g = 0; g + 1 < qo.size(); ++g) {
    for (auto i = qo[g]; i < qo[g + 1]; ++i) {
      for (int h = 0; h < heads; ++h) {
        std::vector<double> s;
        double mx = -1e300;
        for (auto j = ko[g]; j < ko[g + 1]; ++j) {
          double dot = 0.0;
          for (int c = 0; c < dh; ++c) dot += q[i * dim + h * dh + c] * k[j * dim + h * dh + c];
          s.push_back(dot / std::sqrt(static_cast<double>(dh)));
          mx = std::max(mx, s.back());
        }
        double z = 0.0;
        for (auto& e : s) z += (e = std::exp(e - mx));
        for (std::size_t jj = 0; jj < s.size(); ++jj) {
          const auto j = ko[g] + static_cast<std::int64_t>(jj);
          for (int c = 0; c < dh; ++c) out[i * dim + h * dh + c] += s[jj] / z * v[j * dim + h * dh + c];
        }
      }
    }
  }
  return out;
}

}  // namespace splatedit::testing
