#pragma once

// Dense matrices over F_2 with rows packed into machine words.

#include <bit>
#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "cnstat/errors.hpp"

namespace cnstat::gf2 {

using Word = std::uint64_t;
inline constexpr std::size_t kWordBits = 64;

class BitMatrix {
 public:
  BitMatrix() = default;
  BitMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), words_((cols + kWordBits - 1) / kWordBits),
        data_(rows * words_, 0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  bool get(std::size_t r, std::size_t c) const {
    return (data_[r * words_ + c / kWordBits] >> (c % kWordBits)) & 1U;
  }
  void set(std::size_t r, std::size_t c, bool v) {
    Word& w = data_[r * words_ + c / kWordBits];
    const Word bit = Word{1} << (c % kWordBits);
    w = v ? (w | bit) : (w & ~bit);
  }
  void flip(std::size_t r, std::size_t c) { data_[r * words_ + c / kWordBits] ^= Word{1} << (c % kWordBits); }

  /// Rank by in-place Gaussian elimination on a copy.
  std::size_t rank() const {
    BitMatrix m = *this;
    return m.eliminate();
  }

  /// Row-reduces this matrix in place and returns its rank.
  std::size_t eliminate() {
    std::size_t rank = 0;
    for (std::size_t c = 0; c < cols_ && rank < rows_; ++c) {
      const std::size_t wi = c / kWordBits;
      const Word bit = Word{1} << (c % kWordBits);
      std::size_t pivot = rank;
      while (pivot < rows_ && !(data_[pivot * words_ + wi] & bit)) ++pivot;
      if (pivot == rows_) continue;
      swap_rows(pivot, rank);
      for (std::size_t r = 0; r < rows_; ++r) {
        if (r != rank && (data_[r * words_ + wi] & bit)) xor_row_into(rank, r);
      }
      ++rank;
    }
    return rank;
  }

  bool operator==(const BitMatrix&) const = default;

 private:
  void swap_rows(std::size_t a, std::size_t b) {
    if (a == b) return;
    for (std::size_t w = 0; w < words_; ++w) std::swap(data_[a * words_ + w], data_[b * words_ + w]);
  }
  void xor_row_into(std::size_t src, std::size_t dst) {
    for (std::size_t w = 0; w < words_; ++w) data_[dst * words_ + w] ^= data_[src * words_ + w];
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::size_t words_ = 0;
  std::vector<Word> data_;
};

/// Rank of a set of vectors each packed into a single word.
inline std::size_t rank_of_words(std::vector<Word> rows) {
  std::size_t rank = 0;
  for (std::size_t bit = 0; bit < kWordBits; ++bit) {
    const Word mask = Word{1} << bit;
    std::size_t pivot = rank;
    while (pivot < rows.size() && !(rows[pivot] & mask)) ++pivot;
    if (pivot == rows.size()) continue;
    std::swap(rows[pivot], rows[rank]);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (r != rank && (rows[r] & mask)) rows[r] ^= rows[rank];
    }
    ++rank;
  }
  return rank;
}

/// Reduced echelon basis of the span of `vectors` (single-word vectors),
/// ordered by increasing pivot bit. Deterministic for a given input set.
inline std::vector<Word> echelon_basis(const std::vector<Word>& vectors) {
  std::vector<Word> rows = vectors;
  std::vector<Word> basis;
  for (std::size_t bit = 0; bit < kWordBits; ++bit) {
    const Word mask = Word{1} << bit;
    auto it = rows.begin();
    while (it != rows.end() && !(*it & mask)) ++it;
    if (it == rows.end()) continue;
    const Word pivot = *it;
    rows.erase(it);
    for (Word& r : rows) {
      if (r & mask) r ^= pivot;
    }
    for (Word& b : basis) {
      if (b & mask) b ^= pivot;
    }
    basis.push_back(pivot);
  }
  return basis;
}

}  // namespace cnstat::gf2
