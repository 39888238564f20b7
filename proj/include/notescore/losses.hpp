#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "notescore/tensor.hpp"

namespace notescore {

// Mean over included tokens of max(x,0) - x*y + log(1 + exp(-|x|)), the
// overflow-free form of -[y log s(x) + (1-y) log(1 - s(x))].
// `logits` is n x 1 or 1 x n; `include` (nonzero = counted) may be empty to
// count every token. d/dx = (s(x) - y) / count. Throws ContractError when no
// token is counted or a label is not 0/1.
Tensor bce_with_logits(const Tensor& logits, std::span<const std::uint8_t> labels,
                       std::span<const std::uint8_t> include = {});

// Mean negative log-softmax probability of `targets[i]` in row
// `positions[i]` of `logits` (n x vocab). Returns nullopt when there are no
// positions, which callers treat as "skip this batch".
std::optional<Tensor> mlm_loss(const Tensor& logits, std::span<const std::size_t> positions,
                               std::span<const int> targets);

}  // namespace notescore
