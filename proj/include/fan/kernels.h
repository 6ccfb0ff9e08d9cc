#pragma once

// Dense numeric kernels. The functions in fan::kernels are OpenMP-parallel
// over independent output elements, so results are bit-identical to the
// serial references in fan::kernels::serial at any thread count; the unit
// tests assert exact equality and tools/bench compares their throughput.

#include <cstddef>
#include <vector>

#include "fan/error.h"
#include "fan/tensor.h"

namespace fan {

// Overflow-safe softmax with max subtraction.
template <typename T>
std::vector<T> softmax(const std::vector<T>& scores) {
    if (scores.empty()) {
        throw contract_error("softmax: empty score vector");
    }
    T max_score = scores[0];
    for (const T s : scores) {
        if (!std::isfinite(static_cast<double>(s))) {
            throw numeric_error("softmax: non-finite score");
        }
        if (s > max_score) max_score = s;
    }
    std::vector<T> out(scores.size());
    T sum = T(0);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp(scores[i] - max_score);
        sum += out[i];
    }
    for (T& v : out) v /= sum;
    return out;
}

namespace kernels {

struct Conv2dShape {
    std::size_t batch, in_channels, in_h, in_w;
    std::size_t out_channels, kernel, stride, pad;

    std::size_t out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
    std::size_t out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
};

namespace serial {

// C (m x n) = A (m x k) * B (k x n)
template <typename T>
void matmul_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            T acc = T(0);
            for (std::size_t l = 0; l < k; ++l) {
                acc += a[i * k + l] * b[l * n + j];
            }
            c[i * n + j] = acc;
        }
    }
}

// C (m x n) = A (m x k) * B^T with B stored (n x k)
template <typename T>
void matmul_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            T acc = T(0);
            for (std::size_t l = 0; l < k; ++l) {
                acc += a[i * k + l] * b[j * k + l];
            }
            c[i * n + j] = acc;
        }
    }
}

// C (m x n) = A^T * B with A stored (k x m), B stored (k x n)
template <typename T>
void matmul_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            T acc = T(0);
            for (std::size_t l = 0; l < k; ++l) {
                acc += a[l * m + i] * b[l * n + j];
            }
            c[i * n + j] = acc;
        }
    }
}

template <typename T>
void conv2d_forward(const Conv2dShape& s, const T* in, const T* w, const T* bias, T* out) {
    const std::size_t oh = s.out_h(), ow = s.out_w();
    for (std::size_t n = 0; n < s.batch; ++n) {
        for (std::size_t co = 0; co < s.out_channels; ++co) {
            for (std::size_t oy = 0; oy < oh; ++oy) {
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    T acc = bias ? bias[co] : T(0);
                    for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
                        for (std::size_t ky = 0; ky < s.kernel; ++ky) {
                            const std::ptrdiff_t iy =
                                static_cast<std::ptrdiff_t>(oy * s.stride + ky) -
                                static_cast<std::ptrdiff_t>(s.pad);
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(s.in_h)) continue;
                            for (std::size_t kx = 0; kx < s.kernel; ++kx) {
                                const std::ptrdiff_t ix =
                                    static_cast<std::ptrdiff_t>(ox * s.stride + kx) -
                                    static_cast<std::ptrdiff_t>(s.pad);
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(s.in_w)) continue;
                                acc += in[((n * s.in_channels + ci) * s.in_h + iy) * s.in_w + ix] *
                                       w[((co * s.in_channels + ci) * s.kernel + ky) * s.kernel + kx];
                            }
                        }
                    }
                    out[((n * s.out_channels + co) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_input(const Conv2dShape& s, const T* grad_out, const T* w, T* grad_in) {
    const std::size_t oh = s.out_h(), ow = s.out_w();
    for (std::size_t n = 0; n < s.batch; ++n) {
        for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
            for (std::size_t iy = 0; iy < s.in_h; ++iy) {
                for (std::size_t ix = 0; ix < s.in_w; ++ix) {
                    T acc = T(0);
                    for (std::size_t co = 0; co < s.out_channels; ++co) {
                        for (std::size_t ky = 0; ky < s.kernel; ++ky) {
                            const std::ptrdiff_t num_y =
                                static_cast<std::ptrdiff_t>(iy + s.pad) -
                                static_cast<std::ptrdiff_t>(ky);
                            if (num_y < 0 || num_y % static_cast<std::ptrdiff_t>(s.stride)) continue;
                            const std::size_t oy = static_cast<std::size_t>(num_y) / s.stride;
                            if (oy >= oh) continue;
                            for (std::size_t kx = 0; kx < s.kernel; ++kx) {
                                const std::ptrdiff_t num_x =
                                    static_cast<std::ptrdiff_t>(ix + s.pad) -
                                    static_cast<std::ptrdiff_t>(kx);
                                if (num_x < 0 || num_x % static_cast<std::ptrdiff_t>(s.stride))
                                    continue;
                                const std::size_t ox = static_cast<std::size_t>(num_x) / s.stride;
                                if (ox >= ow) continue;
                                acc += grad_out[((n * s.out_channels + co) * oh + oy) * ow + ox] *
                                       w[((co * s.in_channels + ci) * s.kernel + ky) * s.kernel + kx];
                            }
                        }
                    }
                    grad_in[((n * s.in_channels + ci) * s.in_h + iy) * s.in_w + ix] = acc;
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_weights(const Conv2dShape& s, const T* in, const T* grad_out, T* grad_w,
                             T* grad_bias) {
    const std::size_t oh = s.out_h(), ow = s.out_w();
    for (std::size_t co = 0; co < s.out_channels; ++co) {
        for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
            for (std::size_t ky = 0; ky < s.kernel; ++ky) {
                for (std::size_t kx = 0; kx < s.kernel; ++kx) {
                    T acc = T(0);
                    for (std::size_t n = 0; n < s.batch; ++n) {
                        for (std::size_t oy = 0; oy < oh; ++oy) {
                            const std::ptrdiff_t iy =
                                static_cast<std::ptrdiff_t>(oy * s.stride + ky) -
                                static_cast<std::ptrdiff_t>(s.pad);
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(s.in_h)) continue;
                            for (std::size_t ox = 0; ox < ow; ++ox) {
                                const std::ptrdiff_t ix =
                                    static_cast<std::ptrdiff_t>(ox * s.stride + kx) -
                                    static_cast<std::ptrdiff_t>(s.pad);
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(s.in_w)) continue;
                                acc += in[((n * s.in_channels + ci) * s.in_h + iy) * s.in_w + ix] *
                                       grad_out[((n * s.out_channels + co) * oh + oy) * ow + ox];
                            }
                        }
                    }
                    grad_w[((co * s.in_channels + ci) * s.kernel + ky) * s.kernel + kx] = acc;
                }
            }
        }
    }
    if (grad_bias) {
        for (std::size_t co = 0; co < s.out_channels; ++co) {
            T acc = T(0);
            for (std::size_t n = 0; n < s.batch; ++n) {
                for (std::size_t o = 0; o < oh * ow; ++o) {
                    acc += grad_out[(n * s.out_channels + co) * oh * ow + o];
                }
            }
            grad_bias[co] = acc;
        }
    }
}

}  // namespace serial

// Parallel work below this many output elements is not worth a team fork.
constexpr std::size_t kParallelCutoff = 4096;

template <typename T>
void matmul_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for if (m * n * k > kParallelCutoff)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            T acc = T(0);
            for (std::size_t l = 0; l < k; ++l) {
                acc += a[i * k + l] * b[l * n + j];
            }
            c[i * n + j] = acc;
        }
    }
}

template <typename T>
void matmul_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for if (m * n * k > kParallelCutoff)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            T acc = T(0);
            for (std::size_t l = 0; l < k; ++l) {
                acc += a[i * k + l] * b[j * k + l];
            }
            c[i * n + j] = acc;
        }
    }
}

template <typename T>
void matmul_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for if (m * n * k > kParallelCutoff)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            T acc = T(0);
            for (std::size_t l = 0; l < k; ++l) {
                acc += a[l * m + i] * b[l * n + j];
            }
            c[i * n + j] = acc;
        }
    }
}

template <typename T>
void conv2d_forward(const Conv2dShape& s, const T* in, const T* w, const T* bias, T* out) {
    const std::size_t oh = s.out_h(), ow = s.out_w();
    const std::size_t jobs = s.batch * s.out_channels;
#pragma omp parallel for if (jobs * oh * ow > kParallelCutoff / 8)
    for (std::ptrdiff_t job = 0; job < static_cast<std::ptrdiff_t>(jobs); ++job) {
        const std::size_t n = static_cast<std::size_t>(job) / s.out_channels;
        const std::size_t co = static_cast<std::size_t>(job) % s.out_channels;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                T acc = bias ? bias[co] : T(0);
                for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
                    for (std::size_t ky = 0; ky < s.kernel; ++ky) {
                        const std::ptrdiff_t iy =
                            static_cast<std::ptrdiff_t>(oy * s.stride + ky) -
                            static_cast<std::ptrdiff_t>(s.pad);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(s.in_h)) continue;
                        for (std::size_t kx = 0; kx < s.kernel; ++kx) {
                            const std::ptrdiff_t ix =
                                static_cast<std::ptrdiff_t>(ox * s.stride + kx) -
                                static_cast<std::ptrdiff_t>(s.pad);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(s.in_w)) continue;
                            acc += in[((n * s.in_channels + ci) * s.in_h + iy) * s.in_w + ix] *
                                   w[((co * s.in_channels + ci) * s.kernel + ky) * s.kernel + kx];
                        }
                    }
                }
                out[((n * s.out_channels + co) * oh + oy) * ow + ox] = acc;
            }
        }
    }
}

template <typename T>
void conv2d_backward_input(const Conv2dShape& s, const T* grad_out, const T* w, T* grad_in) {
    const std::size_t oh = s.out_h(), ow = s.out_w();
    const std::size_t jobs = s.batch * s.in_channels;
#pragma omp parallel for if (jobs * s.in_h * s.in_w > kParallelCutoff / 8)
    for (std::ptrdiff_t job = 0; job < static_cast<std::ptrdiff_t>(jobs); ++job) {
        const std::size_t n = static_cast<std::size_t>(job) / s.in_channels;
        const std::size_t ci = static_cast<std::size_t>(job) % s.in_channels;
        for (std::size_t iy = 0; iy < s.in_h; ++iy) {
            for (std::size_t ix = 0; ix < s.in_w; ++ix) {
                T acc = T(0);
                for (std::size_t co = 0; co < s.out_channels; ++co) {
                    for (std::size_t ky = 0; ky < s.kernel; ++ky) {
                        const std::ptrdiff_t num_y = static_cast<std::ptrdiff_t>(iy + s.pad) -
                                                     static_cast<std::ptrdiff_t>(ky);
                        if (num_y < 0 || num_y % static_cast<std::ptrdiff_t>(s.stride)) continue;
                        const std::size_t oy = static_cast<std::size_t>(num_y) / s.stride;
                        if (oy >= oh) continue;
                        for (std::size_t kx = 0; kx < s.kernel; ++kx) {
                            const std::ptrdiff_t num_x = static_cast<std::ptrdiff_t>(ix + s.pad) -
                                                         static_cast<std::ptrdiff_t>(kx);
                            if (num_x < 0 || num_x % static_cast<std::ptrdiff_t>(s.stride)) continue;
                            const std::size_t ox = static_cast<std::size_t>(num_x) / s.stride;
                            if (ox >= ow) continue;
                            acc += grad_out[((n * s.out_channels + co) * oh + oy) * ow + ox] *
                                   w[((co * s.in_channels + ci) * s.kernel + ky) * s.kernel + kx];
                        }
                    }
                }
                grad_in[((n * s.in_channels + ci) * s.in_h + iy) * s.in_w + ix] = acc;
            }
        }
    }
}

template <typename T>
void conv2d_backward_weights(const Conv2dShape& s, const T* in, const T* grad_out, T* grad_w,
                             T* grad_bias) {
    const std::size_t oh = s.out_h(), ow = s.out_w();
    const std::size_t jobs = s.out_channels * s.in_channels;
#pragma omp parallel for if (jobs * s.kernel * s.kernel * s.batch * oh * ow > kParallelCutoff)
    for (std::ptrdiff_t job = 0; job < static_cast<std::ptrdiff_t>(jobs); ++job) {
        const std::size_t co = static_cast<std::size_t>(job) / s.in_channels;
        const std::size_t ci = static_cast<std::size_t>(job) % s.in_channels;
        for (std::size_t ky = 0; ky < s.kernel; ++ky) {
            for (std::size_t kx = 0; kx < s.kernel; ++kx) {
                T acc = T(0);
                for (std::size_t n = 0; n < s.batch; ++n) {
                    for (std::size_t oy = 0; oy < oh; ++oy) {
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s.stride + ky) -
                                                  static_cast<std::ptrdiff_t>(s.pad);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(s.in_h)) continue;
                        for (std::size_t ox = 0; ox < ow; ++ox) {
                            const std::ptrdiff_t ix =
                                static_cast<std::ptrdiff_t>(ox * s.stride + kx) -
                                static_cast<std::ptrdiff_t>(s.pad);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(s.in_w)) continue;
                            acc += in[((n * s.in_channels + ci) * s.in_h + iy) * s.in_w + ix] *
                                   grad_out[((n * s.out_channels + co) * oh + oy) * ow + ox];
                        }
                    }
                }
                grad_w[((co * s.in_channels + ci) * s.kernel + ky) * s.kernel + kx] = acc;
            }
        }
    }
    if (grad_bias) {
        for (std::size_t co = 0; co < s.out_channels; ++co) {
            T acc = T(0);
            for (std::size_t n = 0; n < s.batch; ++n) {
                for (std::size_t o = 0; o < oh * ow; ++o) {
                    acc += grad_out[(n * s.out_channels + co) * oh * ow + o];
                }
            }
            grad_bias[co] = acc;
        }
    }
}

// Dense Lucas-Kanade flow between two luminance planes. Spatial gradients
// are central differences on prev with indices clamped at the border, the
// temporal gradient is cur - prev, and each pixel solves the 2x2 normal
// equations over its (window x window) neighborhood (border replicated).
// Pixels whose normal matrix has smaller eigenvalue below tau get (0,0).
namespace serial {

template <typename T>
void lk_flow_field(const T* prev, const T* cur, std::size_t h, std::size_t w,
                   std::size_t window, T tau, T* u, T* v) {
    const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(window / 2);
    const std::ptrdiff_t hh = static_cast<std::ptrdiff_t>(h);
    const std::ptrdiff_t ww = static_cast<std::ptrdiff_t>(w);
    auto clamp = [](std::ptrdiff_t i, std::ptrdiff_t n) {
        return i < 0 ? std::ptrdiff_t{0} : (i >= n ? n - 1 : i);
    };
    std::vector<T> ix(h * w), iy(h * w), it(h * w);
    for (std::ptrdiff_t y = 0; y < hh; ++y) {
        for (std::ptrdiff_t x = 0; x < ww; ++x) {
            const std::size_t idx = static_cast<std::size_t>(y * ww + x);
            ix[idx] = (prev[y * ww + clamp(x + 1, ww)] - prev[y * ww + clamp(x - 1, ww)]) / T(2);
            iy[idx] = (prev[clamp(y + 1, hh) * ww + x] - prev[clamp(y - 1, hh) * ww + x]) / T(2);
            it[idx] = cur[idx] - prev[idx];
        }
    }
    for (std::ptrdiff_t y = 0; y < hh; ++y) {
        for (std::ptrdiff_t x = 0; x < ww; ++x) {
            T a11 = T(0), a12 = T(0), a22 = T(0), b1 = T(0), b2 = T(0);
            for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
                const std::ptrdiff_t yy = clamp(y + dy, hh);
                for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
                    const std::size_t n =
                        static_cast<std::size_t>(yy * ww + clamp(x + dx, ww));
                    a11 += ix[n] * ix[n];
                    a12 += ix[n] * iy[n];
                    a22 += iy[n] * iy[n];
                    b1 -= ix[n] * it[n];
                    b2 -= iy[n] * it[n];
                }
            }
            const T tr = a11 + a22;
            const T det_part = std::sqrt((a11 - a22) * (a11 - a22) + T(4) * a12 * a12);
            const T lambda_min = (tr - det_part) / T(2);
            const std::size_t idx = static_cast<std::size_t>(y * ww + x);
            if (lambda_min < tau) {
                u[idx] = T(0);
                v[idx] = T(0);
            } else {
                const T det = a11 * a22 - a12 * a12;
                u[idx] = (a22 * b1 - a12 * b2) / det;
                v[idx] = (a11 * b2 - a12 * b1) / det;
            }
        }
    }
}

}  // namespace serial

template <typename T>
void lk_flow_field(const T* prev, const T* cur, std::size_t h, std::size_t w,
                   std::size_t window, T tau, T* u, T* v) {
    const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(window / 2);
    const std::ptrdiff_t hh = static_cast<std::ptrdiff_t>(h);
    const std::ptrdiff_t ww = static_cast<std::ptrdiff_t>(w);
    auto clamp = [](std::ptrdiff_t i, std::ptrdiff_t n) {
        return i < 0 ? std::ptrdiff_t{0} : (i >= n ? n - 1 : i);
    };
    std::vector<T> ix(h * w), iy(h * w), it(h * w);
#pragma omp parallel for schedule(static) if (h * w > kParallelCutoff)
    for (std::ptrdiff_t y = 0; y < hh; ++y) {
        for (std::ptrdiff_t x = 0; x < ww; ++x) {
            const std::size_t idx = static_cast<std::size_t>(y * ww + x);
            ix[idx] = (prev[y * ww + clamp(x + 1, ww)] - prev[y * ww + clamp(x - 1, ww)]) / T(2);
            iy[idx] = (prev[clamp(y + 1, hh) * ww + x] - prev[clamp(y - 1, hh) * ww + x]) / T(2);
            it[idx] = cur[idx] - prev[idx];
        }
    }
#pragma omp parallel for schedule(static) if (h * w > kParallelCutoff)
    for (std::ptrdiff_t y = 0; y < hh; ++y) {
        for (std::ptrdiff_t x = 0; x < ww; ++x) {
            T a11 = T(0), a12 = T(0), a22 = T(0), b1 = T(0), b2 = T(0);
            for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
                const std::ptrdiff_t yy = clamp(y + dy, hh);
                for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
                    const std::size_t n =
                        static_cast<std::size_t>(yy * ww + clamp(x + dx, ww));
                    a11 += ix[n] * ix[n];
                    a12 += ix[n] * iy[n];
                    a22 += iy[n] * iy[n];
                    b1 -= ix[n] * it[n];
                    b2 -= iy[n] * it[n];
                }
            }
            const T tr = a11 + a22;
            const T det_part = std::sqrt((a11 - a22) * (a11 - a22) + T(4) * a12 * a12);
            const T lambda_min = (tr - det_part) / T(2);
            const std::size_t idx = static_cast<std::size_t>(y * ww + x);
            if (lambda_min < tau) {
                u[idx] = T(0);
                v[idx] = T(0);
            } else {
                const T det = a11 * a22 - a12 * a12;
                u[idx] = (a22 * b1 - a12 * b2) / det;
                v[idx] = (a11 * b2 - a12 * b1) / det;
            }
        }
    }
}

}  // namespace kernels
}  // namespace fan
