#pragma once

#include <cmath>
#include <stdexcept>

#include "augvit/tensor.hpp"

namespace augvit {

// ReLU-based linear attention over N tokens of width d:
//
//   out_i = (phi(q_i)^T sum_j phi(k_j) v_j^T) / (phi(q_i)^T sum_j phi(k_j) + eps)
//
// evaluated right-to-left, so the cost is O(N d^2) instead of O(N^2 d).
// phi = elementwise max(0, .); eps guards the all-negative-K corner.
template <typename T>
Tensor<T> relu_linear_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                T eps = T(1e-6)) {
    if (q.ndim() != 2 || k.shape != q.shape || v.shape != q.shape)
        throw std::invalid_argument("relu_linear_attention: Q, K, V must share an (N, d) shape");
    const int n = q.dim(0), d = q.dim(1);

    // kv[a][b] = sum_j phi(k_j)[a] v_j[b];  z[a] = sum_j phi(k_j)[a]
    std::vector<T> kv(static_cast<size_t>(d) * d, T(0));
    std::vector<T> z(static_cast<size_t>(d), T(0));
    for (int j = 0; j < n; ++j) {
        const T* kj = &k.data[static_cast<size_t>(j) * d];
        const T* vj = &v.data[static_cast<size_t>(j) * d];
        for (int a = 0; a < d; ++a) {
            const T ka = kj[a] > T(0) ? kj[a] : T(0);
            if (ka == T(0)) continue;
            z[static_cast<size_t>(a)] += ka;
            T* row = &kv[static_cast<size_t>(a) * d];
            for (int b = 0; b < d; ++b) row[b] += ka * vj[b];
        }
    }

    Tensor<T> out({n, d});
    for (int i = 0; i < n; ++i) {
        const T* qi = &q.data[static_cast<size_t>(i) * d];
        T* oi = &out.data[static_cast<size_t>(i) * d];
        T denom = eps;
        for (int a = 0; a < d; ++a) {
            const T ua = qi[a] > T(0) ? qi[a] : T(0);
            if (ua == T(0)) continue;
            denom += ua * z[static_cast<size_t>(a)];
            const T* row = &kv[static_cast<size_t>(a) * d];
            for (int b = 0; b < d; ++b) oi[b] += ua * row[b];
        }
        for (int b = 0; b < d; ++b) oi[b] /= denom;
    }
    return out;
}

// Standard scaled dot-product attention; the quadratic-cost reference the
// linear variant is compared against. Not a numerical equal of it.
template <typename T>
Tensor<T> softmax_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
    if (q.ndim() != 2 || k.shape != q.shape || v.shape != q.shape)
        throw std::invalid_argument("softmax_attention: Q, K, V must share an (N, d) shape");
    const int n = q.dim(0), d = q.dim(1);
    const T scale = T(1) / std::sqrt(static_cast<T>(d));

    Tensor<T> out({n, d});
    std::vector<T> logits(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const T* qi = &q.data[static_cast<size_t>(i) * d];
        T mx = -std::numeric_limits<T>::infinity();
        for (int j = 0; j < n; ++j) {
            const T* kj = &k.data[static_cast<size_t>(j) * d];
            T dot = T(0);
            for (int a = 0; a < d; ++a) dot += qi[a] * kj[a];
            logits[static_cast<size_t>(j)] = dot * scale;
            mx = std::max(mx, logits[static_cast<size_t>(j)]);
        }
        T sum = T(0);
        for (int j = 0; j < n; ++j) {
            logits[static_cast<size_t>(j)] = std::exp(logits[static_cast<size_t>(j)] - mx);
            sum += logits[static_cast<size_t>(j)];
        }
        T* oi = &out.data[static_cast<size_t>(i) * d];
        for (int j = 0; j < n; ++j) {
            const T w = logits[static_cast<size_t>(j)] / sum;
            const T* vj = &v.data[static_cast<size_t>(j) * d];
            for (int b = 0; b < d; ++b) oi[b] += w * vj[b];
        }
    }
    return out;
}

// Attention weight matrix of softmax attention (rows sum to one). Exposed for
// tests of the normalization contract.
template <typename T>
Tensor<T> softmax_attention_weights(const Tensor<T>& q, const Tensor<T>& k) {
    const int n = q.dim(0), d = q.dim(1);
    const T scale = T(1) / std::sqrt(static_cast<T>(d));
    Tensor<T> w({n, n});
    for (int i = 0; i < n; ++i) {
        T mx = -std::numeric_limits<T>::infinity();
        for (int j = 0; j < n; ++j) {
            T dot = T(0);
            for (int a = 0; a < d; ++a) dot += q.at(i, a) * k.at(j, a);
            w.at(i, j) = dot * scale;
            mx = std::max(mx, w.at(i, j));
        }
        T sum = T(0);
        for (int j = 0; j < n; ++j) {
            w.at(i, j) = std::exp(w.at(i, j) - mx);
            sum += w.at(i, j);
        }
        for (int j = 0; j < n; ++j) w.at(i, j) /= sum;
    }
    return w;
}

// Multiply-accumulate counts x2, the convention used throughout flop
// estimation. Linear attention is O(N d^2); softmax attention is O(N^2 d).
inline double linear_attention_flops(int64_t n, int64_t d, int64_t heads = 1) {
    return 2.0 * static_cast<double>(heads) * (2.0 * n * d * d + 2.0 * n * d);
}

inline double softmax_attention_flops(int64_t n, int64_t d, int64_t heads = 1) {
    return 2.0 * static_cast<double>(heads) * (2.0 * n * n * d);
}

}  // namespace augvit
