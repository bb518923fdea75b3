#pragma once

#include <cstdint>
#include <vector>

namespace dsf {

using TokenId = std::int32_t;

// B x T grid of token ids, batch-major (ids[b * steps + t]).
struct TokenGrid {
  std::size_t batch = 0;
  std::size_t steps = 0;
  std::vector<TokenId> ids;

  TokenGrid() = default;
  TokenGrid(std::size_t b, std::size_t t) : batch(b), steps(t), ids(b * t, 0) {}
  TokenGrid(std::size_t b, std::size_t t, std::vector<TokenId> values) : batch(b), steps(t), ids(std::move(values)) {}

  TokenId at(std::size_t b, std::size_t t) const { return ids[b * steps + t]; }
  TokenId& at(std::size_t b, std::size_t t) { return ids[b * steps + t]; }

  friend bool operator==(const TokenGrid&, const TokenGrid&) = default;
};

// Inputs and next-token targets of one training window.
struct Batch {
  TokenGrid inputs;
  TokenGrid targets;
};

}  // namespace dsf
