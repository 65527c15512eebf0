#pragma once

#include <cmath>
#include <cstddef>

// Small dense kernels. Fixed evaluation order everywhere: the four-lane dot
// below is the one reduction shape used for every inner product, so results do
// not depend on call site or thread count.
namespace babel::kern {

template <typename T>
inline T dot(const T* a, const T* b, int n) {
    T s0{}, s1{}, s2{}, s3{};
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    T s = (s0 + s1) + (s2 + s3);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

// y = W x, W row-major [out][in]
template <typename T>
inline void matvec(const T* W, const T* x, T* y, int out, int in) {
    for (int o = 0; o < out; ++o) y[o] = dot(W + static_cast<size_t>(o) * in, x, in);
}

// y += a * x
template <typename T>
inline void axpy(T a, const T* x, T* y, int n) {
    for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

// dx += W^T dy, W row-major [out][in]; runs as out axpy sweeps so the access
// pattern stays row-contiguous.
template <typename T>
inline void matvec_t_acc(const T* W, const T* dy, T* dx, int out, int in) {
    for (int o = 0; o < out; ++o) axpy(dy[o], W + static_cast<size_t>(o) * in, dx, in);
}

// dW += dy x^T
template <typename T>
inline void outer_acc(T* dW, const T* dy, const T* x, int out, int in) {
    for (int o = 0; o < out; ++o) axpy(dy[o], x, dW + static_cast<size_t>(o) * in, in);
}

// y = g * x / rms(x); returns 1/rms for the backward pass.
template <typename T>
inline T rmsnorm(const T* x, const T* g, T* y, int n) {
    T ss = dot(x, x, n);
    T r = T(1) / std::sqrt(ss / static_cast<T>(n) + static_cast<T>(1e-8));
    for (int i = 0; i < n; ++i) y[i] = g[i] * x[i] * r;
    return r;
}

// Backward of y = g * x * r with r = (mean(x^2)+eps)^-1/2:
//   dx_j += g_j dy_j r - x_j r^3 / n * sum_i dy_i g_i x_i
// Optionally accumulates dg_j += dy_j x_j r.
template <typename T>
inline void rmsnorm_backward(const T* dy, const T* x, const T* g, T r, T* dx_acc, T* dg_acc, int n) {
    T s{};
    {
        T s0{}, s1{}, s2{}, s3{};
        int i = 0;
        for (; i + 4 <= n; i += 4) {
            s0 += dy[i] * g[i] * x[i];
            s1 += dy[i + 1] * g[i + 1] * x[i + 1];
            s2 += dy[i + 2] * g[i + 2] * x[i + 2];
            s3 += dy[i + 3] * g[i + 3] * x[i + 3];
        }
        s = (s0 + s1) + (s2 + s3);
        for (; i < n; ++i) s += dy[i] * g[i] * x[i];
    }
    T c = r * r * r * s / static_cast<T>(n);
    for (int i = 0; i < n; ++i) dx_acc[i] += g[i] * dy[i] * r - x[i] * c;
    if (dg_acc) {
        for (int i = 0; i < n; ++i) dg_acc[i] += dy[i] * x[i] * r;
    }
}

template <typename T>
inline T relu(T x) {
    return x > T{} ? x : T{};
}

template <typename T>
inline T gelu(T x) {
    // tanh approximation
    const T c = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
    T u = c * (x + static_cast<T>(0.044715) * x * x * x);
    return static_cast<T>(0.5) * x * (T(1) + std::tanh(u));
}

template <typename T>
inline T gelu_grad(T x) {
    const T c = static_cast<T>(0.7978845608028654);
    T x3 = x * x * x;
    T u = c * (x + static_cast<T>(0.044715) * x3);
    T th = std::tanh(u);
    T sech2 = T(1) - th * th;
    T du = c * (T(1) + static_cast<T>(0.134145) * x * x);
    return static_cast<T>(0.5) * (T(1) + th) + static_cast<T>(0.5) * x * sech2 * du;
}

}  // namespace babel::kern
