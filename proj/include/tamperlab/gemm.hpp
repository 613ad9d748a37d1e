#pragma once

// Row-major matrix multiply used by matmul and conv2d (via im2col). The
// reduction over k runs sequentially in ascending order for every output
// element; rows are distributed over the worker pool, which leaves each
// element's accumulation order unchanged. Output rows are accumulated in a
// register tile across the k loop and stored once.

#include <algorithm>
#include <cstddef>

#include "tamperlab/parallel.hpp"

namespace tlab {

// C[m,n] (+)= sum_k A[m,k] * B[k,n]
template <typename T>
void gemm_nn(const T* __restrict__ A, const T* __restrict__ B, T* __restrict__ C,
             std::size_t M, std::size_t K, std::size_t N, bool accumulate) {
    constexpr std::size_t TN = 256;

    // few-rows / long-k shape (conv weight gradients): keep all of C local and
    // stream B exactly once, k ascending
    if (M * N <= 16384 && K >= 4 * M) {
        thread_local std::vector<T> scratch;
        scratch.assign(M * N, T(0));
        T* __restrict__ acc = scratch.data();
        if (accumulate)
            for (std::size_t i = 0; i < M * N; ++i) acc[i] = C[i];
        for (std::size_t k = 0; k < K; ++k) {
            const T* __restrict__ b = B + k * N;
            for (std::size_t m = 0; m < M; ++m) {
                const T av = A[m * K + k];
                T* __restrict__ cm = acc + m * N;
                for (std::size_t j = 0; j < N; ++j) cm[j] += av * b[j];
            }
        }
        for (std::size_t i = 0; i < M * N; ++i) C[i] = acc[i];
        return;
    }

    auto rows = [=](std::size_t m0, std::size_t m1) {
        T acc[TN];
        for (std::size_t m = m0; m < m1; ++m) {
            const T* a = A + m * K;
            for (std::size_t n0 = 0; n0 < N; n0 += TN) {
                const std::size_t nt = std::min(TN, N - n0);
                T* c = C + m * N + n0;
                if (accumulate)
                    for (std::size_t j = 0; j < nt; ++j) acc[j] = c[j];
                else
                    for (std::size_t j = 0; j < nt; ++j) acc[j] = T(0);
                for (std::size_t k = 0; k < K; ++k) {
                    const T av = a[k];
                    const T* __restrict__ b = B + k * N + n0;
                    for (std::size_t j = 0; j < nt; ++j) acc[j] += av * b[j];
                }
                for (std::size_t j = 0; j < nt; ++j) c[j] = acc[j];
            }
        }
    };
    // small products run inline; larger ones split by output row
    if (M * K * N < 200000) {
        rows(0, M);
        return;
    }
    parallel_for(M, 1, rows);
}

// B[n,m] = A[m,n]
template <typename T>
void transpose2d(const T* A, T* B, std::size_t M, std::size_t N) {
    for (std::size_t m = 0; m < M; ++m)
        for (std::size_t n = 0; n < N; ++n) B[n * M + m] = A[m * N + n];
}

} // namespace tlab
