#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace antispoof::nn::gemm {

// Row-major dense products. Every output element is reduced over k in
// ascending order regardless of tiling, so results are reproducible.

namespace detail {

template <typename T, std::size_t Rows, std::size_t Cols>
inline void tile(std::size_t n, std::size_t k, const T* a, std::size_t lda,
                 const T* b, T* c, std::size_t col0) {
  T acc[Rows][Cols] = {};
  for (std::size_t p = 0; p < k; ++p) {
    const T* brow = b + p * n + col0;
    for (std::size_t r = 0; r < Rows; ++r) {
      const T av = a[r * lda + p];
      for (std::size_t j = 0; j < Cols; ++j) acc[r][j] += av * brow[j];
    }
  }
  for (std::size_t r = 0; r < Rows; ++r) {
    T* crow = c + r * n + col0;
    for (std::size_t j = 0; j < Cols; ++j) crow[j] += acc[r][j];
  }
}

template <typename T, std::size_t Rows>
inline void tile_ragged(std::size_t n, std::size_t k, const T* a,
                        std::size_t lda, const T* b, T* c, std::size_t col0,
                        std::size_t cols, std::size_t rows) {
  constexpr std::size_t kMaxCols = 64;
  T acc[Rows][kMaxCols] = {};
  for (std::size_t p = 0; p < k; ++p) {
    const T* brow = b + p * n + col0;
    for (std::size_t r = 0; r < rows; ++r) {
      const T av = a[r * lda + p];
      for (std::size_t j = 0; j < cols; ++j) acc[r][j] += av * brow[j];
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    T* crow = c + r * n + col0;
    for (std::size_t j = 0; j < cols; ++j) crow[j] += acc[r][j];
  }
}

template <typename T>
constexpr std::size_t tile_cols() {
  return sizeof(T) == 4 ? 64 : 32;
}

template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* src, T* dst) {
  constexpr std::size_t kBlock = 32;
  for (std::size_t i0 = 0; i0 < rows; i0 += kBlock) {
    const std::size_t i1 = std::min(rows, i0 + kBlock);
    for (std::size_t j0 = 0; j0 < cols; j0 += kBlock) {
      const std::size_t j1 = std::min(cols, j0 + kBlock);
      for (std::size_t i = i0; i < i1; ++i)
        for (std::size_t j = j0; j < j1; ++j) dst[j * rows + i] = src[i * cols + j];
    }
  }
}

}  // namespace detail

// C[m,n] += A[m,k] * B[k,n]
template <typename T>
void matmul_acc(std::size_t m, std::size_t n, std::size_t k, const T* a,
                const T* b, T* c) {
  constexpr std::size_t kRows = 8;
  constexpr std::size_t kCols = detail::tile_cols<T>();
  const std::size_t full_cols = n - n % kCols;
  std::size_t i = 0;
  for (; i + kRows <= m; i += kRows) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (std::size_t j = 0; j < full_cols; j += kCols)
      detail::tile<T, kRows, kCols>(n, k, arow, k, b, crow, j);
    if (full_cols < n)
      detail::tile_ragged<T, kRows>(n, k, arow, k, b, crow, full_cols,
                                    n - full_cols, kRows);
  }
  if (i < m) {
    const std::size_t rows = m - i;
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (std::size_t j = 0; j < n; j += kCols)
      detail::tile_ragged<T, kRows>(n, k, arow, k, b, crow, j,
                                    std::min(kCols, n - j), rows);
  }
}

// C[m,n] += A^T * B where A is stored [k,m]
template <typename T>
void matmul_tn_acc(std::size_t m, std::size_t n, std::size_t k, const T* a,
                   const T* b, T* c, std::vector<T>& scratch) {
  scratch.resize(m * k);
  detail::transpose(k, m, a, scratch.data());
  matmul_acc(m, n, k, scratch.data(), b, c);
}

// C[m,n] += A * B^T where B is stored [n,k]
template <typename T>
void matmul_nt_acc(std::size_t m, std::size_t n, std::size_t k, const T* a,
                   const T* b, T* c, std::vector<T>& scratch) {
  scratch.resize(n * k);
  detail::transpose(n, k, b, scratch.data());
  matmul_acc(m, n, k, a, scratch.data(), c);
}

}  // namespace antispoof::nn::gemm
