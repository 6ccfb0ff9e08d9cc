#pragma once

// Reverse-mode gradient tape. Each op appends a node holding the forward
// value and a closure that scatters the node's adjoint into its parents.
// A tape is owned by exactly one training step; ops are not thread-safe
// on a shared tape, but separate tapes may run concurrently.

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "fan/error.h"
#include "fan/kernels.h"
#include "fan/tensor.h"

namespace fan {

struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
    bool valid() const { return id != static_cast<std::size_t>(-1); }
};

template <typename T>
class Tape {
public:
    // Leaf that receives a gradient (trainable parameter or checked input).
    Var input(Tensor<T> value) { return push(std::move(value), true, {}, nullptr); }

    // Leaf excluded from the backward pass (data, labels).
    Var constant(Tensor<T> value) { return push(std::move(value), false, {}, nullptr); }

    const Tensor<T>& value(Var v) const { return nodes_[v.id].value; }

    bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

    // Zero tensor if the variable was never reached by the loss.
    const Tensor<T>& grad(Var v) const {
        if (grads_.empty()) {
            throw contract_error("grad() before backward()");
        }
        return grads_[v.id];
    }

    std::size_t size() const { return nodes_.size(); }

    void backward(Var loss) {
        if (!value(loss).is_scalar()) {
            throw contract_error("backward: loss must be scalar, got " +
                                 value(loss).shape_string());
        }
        grads_.clear();
        grads_.resize(nodes_.size());
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            grads_[i] = Tensor<T>(nodes_[i].value.dims());
        }
        grads_[loss.id][0] = T(1);
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            if (nodes_[i].backprop && nodes_[i].needs_grad) {
                nodes_[i].backprop(*this, i);
            }
        }
    }

    // ---- elementwise ----

    Var add(Var a, Var b) {
        require_same_dims(value(a), value(b), "add");
        Tensor<T> out = value(a);
        const Tensor<T>& vb = value(b);
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] += vb[i];
        return push(std::move(out), needs_any({a, b}), {a, b},
                    [a, b](Tape& t, std::size_t self) {
                        const Tensor<T>& g = t.grads_[self];
                        t.accumulate(a, g);
                        t.accumulate(b, g);
                    });
    }

    Var sub(Var a, Var b) {
        require_same_dims(value(a), value(b), "sub");
        Tensor<T> out = value(a);
        const Tensor<T>& vb = value(b);
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= vb[i];
        return push(std::move(out), needs_any({a, b}), {a, b},
                    [a, b](Tape& t, std::size_t self) {
                        const Tensor<T>& g = t.grads_[self];
                        t.accumulate(a, g);
                        if (t.needs_grad(b)) {
                            Tensor<T> neg = g;
                            for (std::size_t i = 0; i < neg.numel(); ++i) neg[i] = -neg[i];
                            t.accumulate(b, neg);
                        }
                    });
    }

    Var mul(Var a, Var b) {
        require_same_dims(value(a), value(b), "mul");
        Tensor<T> out = value(a);
        const Tensor<T>& vb = value(b);
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= vb[i];
        return push(std::move(out), needs_any({a, b}), {a, b},
                    [a, b](Tape& t, std::size_t self) {
                        const Tensor<T>& g = t.grads_[self];
                        if (t.needs_grad(a)) {
                            Tensor<T> ga = g;
                            const Tensor<T>& vb2 = t.value(b);
                            for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] *= vb2[i];
                            t.accumulate(a, ga);
                        }
                        if (t.needs_grad(b)) {
                            Tensor<T> gb = g;
                            const Tensor<T>& va2 = t.value(a);
                            for (std::size_t i = 0; i < gb.numel(); ++i) gb[i] *= va2[i];
                            t.accumulate(b, gb);
                        }
                    });
    }

    Var scale(Var a, T c) {
        Tensor<T> out = value(a);
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= c;
        return push(std::move(out), needs_grad(a), {a},
                    [a, c](Tape& t, std::size_t self) {
                        Tensor<T> g = t.grads_[self];
                        for (std::size_t i = 0; i < g.numel(); ++i) g[i] *= c;
                        t.accumulate(a, g);
                    });
    }

    Var tanh(Var a) {
        Tensor<T> out = value(a);
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(out[i]);
        return push(std::move(out), needs_grad(a), {a},
                    [a](Tape& t, std::size_t self) {
                        Tensor<T> g = t.grads_[self];
                        const Tensor<T>& y = t.nodes_[self].value;
                        for (std::size_t i = 0; i < g.numel(); ++i) g[i] *= T(1) - y[i] * y[i];
                        t.accumulate(a, g);
                    });
    }

    Var sigmoid(Var a) {
        Tensor<T> out = value(a);
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] = T(1) / (T(1) + std::exp(-out[i]));
        return push(std::move(out), needs_grad(a), {a},
                    [a](Tape& t, std::size_t self) {
                        Tensor<T> g = t.grads_[self];
                        const Tensor<T>& y = t.nodes_[self].value;
                        for (std::size_t i = 0; i < g.numel(); ++i) g[i] *= y[i] * (T(1) - y[i]);
                        t.accumulate(a, g);
                    });
    }

    Var relu(Var a) {
        Tensor<T> out = value(a);
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] = out[i] > T(0) ? out[i] : T(0);
        return push(std::move(out), needs_grad(a), {a},
                    [a](Tape& t, std::size_t self) {
                        Tensor<T> g = t.grads_[self];
                        const Tensor<T>& x = t.value(a);
                        for (std::size_t i = 0; i < g.numel(); ++i)
                            if (x[i] <= T(0)) g[i] = T(0);
                        t.accumulate(a, g);
                    });
    }

    // ---- broadcasts over a matrix ----

    Var add_row_broadcast(Var m, Var row) {
        const Tensor<T>& vm = value(m);
        const Tensor<T>& vr = value(row);
        check_rank(vm, 2, "add_row_broadcast");
        if (vr.numel() != vm.dim(1)) {
            throw contract_error("add_row_broadcast: row length mismatch");
        }
        Tensor<T> out = vm;
        for (std::size_t r = 0; r < vm.dim(0); ++r)
            for (std::size_t c = 0; c < vm.dim(1); ++c) out.at2(r, c) += vr[c];
        return push(std::move(out), needs_any({m, row}), {m, row},
                    [m, row](Tape& t, std::size_t self) {
                        const Tensor<T>& g = t.grads_[self];
                        t.accumulate(m, g);
                        if (t.needs_grad(row)) {
                            Tensor<T> gr(t.value(row).dims());
                            for (std::size_t r = 0; r < g.dim(0); ++r)
                                for (std::size_t c = 0; c < g.dim(1); ++c)
                                    gr[c] += g.at2(r, c);
                            t.accumulate(row, gr);
                        }
                    });
    }

    Var add_col_broadcast(Var m, Var col) {
        const Tensor<T>& vm = value(m);
        const Tensor<T>& vc = value(col);
        check_rank(vm, 2, "add_col_broadcast");
        if (vc.numel() != vm.dim(0)) {
            throw contract_error("add_col_broadcast: column length mismatch");
        }
        Tensor<T> out = vm;
        for (std::size_t r = 0; r < vm.dim(0); ++r)
            for (std::size_t c = 0; c < vm.dim(1); ++c) out.at2(r, c) += vc[r];
        return push(std::move(out), needs_any({m, col}), {m, col},
                    [m, col](Tape& t, std::size_t self) {
                        const Tensor<T>& g = t.grads_[self];
                        t.accumulate(m, g);
                        if (t.needs_grad(col)) {
                            Tensor<T> gc(t.value(col).dims());
                            for (std::size_t r = 0; r < g.dim(0); ++r)
                                for (std::size_t c = 0; c < g.dim(1); ++c)
                                    gc[r] += g.at2(r, c);
                            t.accumulate(col, gc);
                        }
                    });
    }

    // ---- matrix products ----

    // (m x k)(k x n)
    Var matmul(Var a, Var b) {
        const Tensor<T>& va = value(a);
        const Tensor<T>& vb = value(b);
        check_rank(va, 2, "matmul");
        check_rank(vb, 2, "matmul");
        if (va.dim(1) != vb.dim(0)) {
            throw contract_error("matmul: inner dims " + va.shape_string() + " vs " +
                                 vb.shape_string());
        }
        const std::size_t m = va.dim(0), k = va.dim(1), n = vb.dim(1);
        Tensor<T> out({m, n});
        kernels::matmul_nn(va.data(), vb.data(), out.data(), m, k, n);
        return push(std::move(out), needs_any({a, b}), {a, b},
                    [a, b, m, k, n](Tape& t, std::size_t self) {
                        const Tensor<T>& g = t.grads_[self];
                        if (t.needs_grad(a)) {
                            Tensor<T> ga({m, k});
                            kernels::matmul_nt(g.data(), t.value(b).data(), ga.data(), m, n, k);
                            t.accumulate(a, ga);
                        }
                        if (t.needs_grad(b)) {
                            Tensor<T> gb({k, n});
                            kernels::matmul_tn(t.value(a).data(), g.data(), gb.data(), k, m, n);
                            t.accumulate(b, gb);
                        }
                    });
    }

    // (m x k) * B^T with B stored (n x k)
    Var matmul_nt(Var a, Var b) {
        const Tensor<T>& va = value(a);
        const Tensor<T>& vb = value(b);
        check_rank(va, 2, "matmul_nt");
        check_rank(vb, 2, "matmul_nt");
        if (va.dim(1) != vb.dim(1)) {
            throw contract_error("matmul_nt: inner dims " + va.shape_string() + " vs " +
                                 vb.shape_string());
        }
        const std::size_t m = va.dim(0), k = va.dim(1), n = vb.dim(0);
        Tensor<T> out({m, n});
        kernels::matmul_nt(va.data(), vb.data(), out.data(), m, k, n);
        return push(std::move(out), needs_any({a, b}), {a, b},
                    [a, b, m, k, n](Tape& t, std::size_t self) {
                        const Tensor<T>& g = t.grads_[self];
                        if (t.needs_grad(a)) {
                            Tensor<T> ga({m, k});
                            kernels::matmul_nn(g.data(), t.value(b).data(), ga.data(), m, n, k);
                            t.accumulate(a, ga);
                        }
                        if (t.needs_grad(b)) {
                            Tensor<T> gb({n, k});
                            kernels::matmul_tn(g.data(), t.value(a).data(), gb.data(), n, m, k);
                            t.accumulate(b, gb);
                        }
                    });
    }

    // ---- structure ----

    Var reshape(Var a, std::vector<std::size_t> dims) {
        Tensor<T> out(std::move(dims), value(a).vec());
        if (out.numel() != value(a).numel()) {
            throw contract_error("reshape: element count mismatch");
        }
        return push(std::move(out), needs_grad(a), {a},
                    [a](Tape& t, std::size_t self) {
                        Tensor<T> g(t.value(a).dims(), t.grads_[self].vec());
                        t.accumulate(a, g);
                    });
    }

    Var slice_cols(Var m, std::size_t offset, std::size_t width) {
        const Tensor<T>& vm = value(m);
        check_rank(vm, 2, "slice_cols");
        if (offset + width > vm.dim(1)) {
            throw contract_error("slice_cols: out of range");
        }
        const std::size_t rows = vm.dim(0);
        Tensor<T> out({rows, width});
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < width; ++c) out.at2(r, c) = vm.at2(r, offset + c);
        return push(std::move(out), needs_grad(m), {m},
                    [m, offset, width, rows](Tape& t, std::size_t self) {
                        const Tensor<T>& g = t.grads_[self];
                        Tensor<T> gm(t.value(m).dims());
                        for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t c = 0; c < width; ++c)
                                gm.at2(r, offset + c) = g.at2(r, c);
                        t.accumulate(m, gm);
                    });
    }

    Var row(Var m, std::size_t r) {
        const Tensor<T>& vm = value(m);
        check_rank(vm, 2, "row");
        if (r >= vm.dim(0)) {
            throw contract_error("row: index out of range");
        }
        const std::size_t cols = vm.dim(1);
        Tensor<T> out({1, cols});
        for (std::size_t c = 0; c < cols; ++c) out[c] = vm.at2(r, c);
        return push(std::move(out), needs_grad(m), {m},
                    [m, r, cols](Tape& t, std::size_t self) {
                        const Tensor<T>& g = t.grads_[self];
                        Tensor<T> gm(t.value(m).dims());
                        for (std::size_t c = 0; c < cols; ++c) gm.at2(r, c) = g[c];
                        t.accumulate(m, gm);
                    });
    }

    Var concat_rows(const std::vector<Var>& parts) {
        if (parts.empty()) {
            throw contract_error("concat_rows: no parts");
        }
        const std::size_t cols = value(parts[0]).dim(1);
        std::size_t rows = 0;
        for (const Var part : parts) {
            check_rank(value(part), 2, "concat_rows");
            if (value(part).dim(1) != cols) {
                throw contract_error("concat_rows: column mismatch");
            }
            rows += value(part).dim(0);
        }
        Tensor<T> out({rows, cols});
        std::size_t r0 = 0;
        for (const Var part : parts) {
            const Tensor<T>& vp = value(part);
            for (std::size_t i = 0; i < vp.numel(); ++i) out[r0 * cols + i] = vp[i];
            r0 += vp.dim(0);
        }
        return push(std::move(out), needs_any(parts), parts,
                    [parts, cols](Tape& t, std::size_t self) {
                        const Tensor<T>& g = t.grads_[self];
                        std::size_t r0 = 0;
                        for (const Var part : parts) {
                            const std::size_t pr = t.value(part).dim(0);
                            if (t.needs_grad(part)) {
                                Tensor<T> gp({pr, cols});
                                for (std::size_t i = 0; i < pr * cols; ++i)
                                    gp[i] = g[r0 * cols + i];
                                t.accumulate(part, gp);
                            }
                            r0 += pr;
                        }
                    });
    }

    Var concat_cols(const std::vector<Var>& parts) {
        if (parts.empty()) {
            throw contract_error("concat_cols: no parts");
        }
        const std::size_t rows = value(parts[0]).dim(0);
        std::size_t cols = 0;
        for (const Var part : parts) {
            check_rank(value(part), 2, "concat_cols");
            if (value(part).dim(0) != rows) {
                throw contract_error("concat_cols: row mismatch");
            }
            cols += value(part).dim(1);
        }
        Tensor<T> out({rows, cols});
        std::size_t c0 = 0;
        for (const Var part : parts) {
            const Tensor<T>& vp = value(part);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < vp.dim(1); ++c) out.at2(r, c0 + c) = vp.at2(r, c);
            c0 += vp.dim(1);
        }
        return push(std::move(out), needs_any(parts), parts,
                    [parts, rows](Tape& t, std::size_t self) {
                        const Tensor<T>& g = t.grads_[self];
                        std::size_t c0 = 0;
                        for (const Var part : parts) {
                            const std::size_t pc = t.value(part).dim(1);
                            if (t.needs_grad(part)) {
                                Tensor<T> gp({rows, pc});
                                for (std::size_t r = 0; r < rows; ++r)
                                    for (std::size_t c = 0; c < pc; ++c)
                                        gp.at2(r, c) = g.at2(r, c0 + c);
                                t.accumulate(part, gp);
                            }
                            c0 += pc;
                        }
                    });
    }

    // ---- reductions ----

    Var sum(Var a) {
        T acc = T(0);
        const Tensor<T>& va = value(a);
        for (std::size_t i = 0; i < va.numel(); ++i) acc += va[i];
        return push(Tensor<T>::scalar(acc), needs_grad(a), {a},
                    [a](Tape& t, std::size_t self) {
                        const T g = t.grads_[self][0];
                        Tensor<T> ga(t.value(a).dims());
                        ga.fill(g);
                        t.accumulate(a, ga);
                    });
    }

    Var gather(Var a, std::size_t flat_index) {
        const Tensor<T>& va = value(a);
        if (flat_index >= va.numel()) {
            throw contract_error("gather: index out of range");
        }
        return push(Tensor<T>::scalar(va[flat_index]), needs_grad(a), {a},
                    [a, flat_index](Tape& t, std::size_t self) {
                        Tensor<T> ga(t.value(a).dims());
                        ga[flat_index] = t.grads_[self][0];
                        t.accumulate(a, ga);
                    });
    }

    // log sum exp down each column: (r x c) -> (1 x c)
    Var logsumexp_cols(Var m) {
        const Tensor<T>& vm = value(m);
        check_rank(vm, 2, "logsumexp_cols");
        const std::size_t r = vm.dim(0), c = vm.dim(1);
        Tensor<T> out({1, c});
        for (std::size_t j = 0; j < c; ++j) {
            T mx = vm.at2(0, j);
            for (std::size_t i = 1; i < r; ++i) mx = std::max(mx, vm.at2(i, j));
            T s = T(0);
            for (std::size_t i = 0; i < r; ++i) s += std::exp(vm.at2(i, j) - mx);
            out[j] = mx + std::log(s);
        }
        return push(std::move(out), needs_grad(m), {m},
                    [m, r, c](Tape& t, std::size_t self) {
                        const Tensor<T>& g = t.grads_[self];
                        const Tensor<T>& y = t.nodes_[self].value;
                        const Tensor<T>& vm2 = t.value(m);
                        Tensor<T> gm(vm2.dims());
                        for (std::size_t j = 0; j < c; ++j)
                            for (std::size_t i = 0; i < r; ++i)
                                gm.at2(i, j) = std::exp(vm2.at2(i, j) - y[j]) * g[j];
                        t.accumulate(m, gm);
                    });
    }

    // ---- convolution path ----

    Var conv2d(Var in, Var w, Var bias, std::size_t stride, std::size_t pad) {
        const Tensor<T>& vi = value(in);
        const Tensor<T>& vw = value(w);
        check_rank(vi, 4, "conv2d input");
        check_rank(vw, 4, "conv2d weights");
        if (vw.dim(1) != vi.dim(1)) {
            throw contract_error("conv2d: channel mismatch");
        }
        if (vw.dim(2) != vw.dim(3)) {
            throw contract_error("conv2d: kernel must be square");
        }
        if (value(bias).numel() != vw.dim(0)) {
            throw contract_error("conv2d: bias length mismatch");
        }
        kernels::Conv2dShape shape{vi.dim(0), vi.dim(1), vi.dim(2), vi.dim(3),
                                   vw.dim(0), vw.dim(2), stride,   pad};
        if (shape.in_h + 2 * pad < shape.kernel || shape.in_w + 2 * pad < shape.kernel) {
            throw contract_error("conv2d: kernel larger than padded input");
        }
        Tensor<T> out({shape.batch, shape.out_channels, shape.out_h(), shape.out_w()});
        kernels::conv2d_forward(shape, vi.data(), vw.data(), value(bias).data(), out.data());
        return push(std::move(out), needs_any({in, w, bias}), {in, w, bias},
                    [in, w, bias, shape](Tape& t, std::size_t self) {
                        const Tensor<T>& g = t.grads_[self];
                        if (t.needs_grad(in)) {
                            Tensor<T> gi(t.value(in).dims());
                            kernels::conv2d_backward_input(shape, g.data(), t.value(w).data(),
                                                           gi.data());
                            t.accumulate(in, gi);
                        }
                        if (t.needs_grad(w) || t.needs_grad(bias)) {
                            Tensor<T> gw(t.value(w).dims());
                            Tensor<T> gb(t.value(bias).dims());
                            kernels::conv2d_backward_weights(shape, t.value(in).data(), g.data(),
                                                             gw.data(), gb.data());
                            if (t.needs_grad(w)) t.accumulate(w, gw);
                            if (t.needs_grad(bias)) t.accumulate(bias, gb);
                        }
                    });
    }

    // (N,C,H,W) -> (N,C)
    Var global_avg_pool(Var in) {
        const Tensor<T>& vi = value(in);
        check_rank(vi, 4, "global_avg_pool");
        const std::size_t n = vi.dim(0), c = vi.dim(1), hw = vi.dim(2) * vi.dim(3);
        Tensor<T> out({n, c});
        for (std::size_t i = 0; i < n * c; ++i) {
            T acc = T(0);
            for (std::size_t o = 0; o < hw; ++o) acc += vi[i * hw + o];
            out[i] = acc / static_cast<T>(hw);
        }
        return push(std::move(out), needs_grad(in), {in},
                    [in, n, c, hw](Tape& t, std::size_t self) {
                        const Tensor<T>& g = t.grads_[self];
                        Tensor<T> gi(t.value(in).dims());
                        for (std::size_t i = 0; i < n * c; ++i) {
                            const T share = g[i] / static_cast<T>(hw);
                            for (std::size_t o = 0; o < hw; ++o) gi[i * hw + o] = share;
                        }
                        t.accumulate(in, gi);
                    });
    }

    // Per-row softmax of the band [t-p, t+p] of scores (T x T), clipped at
    // the sequence edges, followed by the weighted sum of value rows:
    //   out[t] = sum_i alpha[t,i] * values[i],  i in the surviving window.
    // Optionally exports the band scores and weights for inspection.
    Var band_softmax_weighted_sum(Var scores, Var values, std::size_t p,
                                  std::vector<std::vector<T>>* band_scores_out = nullptr,
                                  std::vector<std::vector<T>>* band_weights_out = nullptr) {
        const Tensor<T>& vs = value(scores);
        const Tensor<T>& vv = value(values);
        check_rank(vs, 2, "band_softmax scores");
        check_rank(vv, 2, "band_softmax values");
        const std::size_t steps = vs.dim(0);
        if (vs.dim(1) != steps || vv.dim(0) != steps) {
            throw contract_error("band_softmax: scores must be TxT and values T rows");
        }
        const std::size_t width = vv.dim(1);
        auto weights = std::make_shared<std::vector<std::vector<T>>>(steps);
        Tensor<T> out({steps, width});
        if (band_scores_out) band_scores_out->assign(steps, {});
        for (std::size_t t = 0; t < steps; ++t) {
            const std::size_t lo = t >= p ? t - p : 0;
            const std::size_t hi = std::min(steps - 1, t + p);
            std::vector<T> band(hi - lo + 1);
            for (std::size_t i = lo; i <= hi; ++i) band[i - lo] = vs.at2(t, i);
            (*weights)[t] = softmax(band);
            if (band_scores_out) (*band_scores_out)[t] = band;
            for (std::size_t i = lo; i <= hi; ++i) {
                const T a = (*weights)[t][i - lo];
                for (std::size_t d = 0; d < width; ++d) out.at2(t, d) += a * vv.at2(i, d);
            }
        }
        if (band_weights_out) *band_weights_out = *weights;
        return push(std::move(out), needs_any({scores, values}), {scores, values},
                    [scores, values, p, steps, width, weights](Tape& t, std::size_t self) {
                        const Tensor<T>& g = t.grads_[self];
                        const Tensor<T>& vv2 = t.value(values);
                        Tensor<T> gs(t.value(scores).dims());
                        Tensor<T> gv(vv2.dims());
                        for (std::size_t ti = 0; ti < steps; ++ti) {
                            const std::size_t lo = ti >= p ? ti - p : 0;
                            const std::size_t hi = std::min(steps - 1, ti + p);
                            const std::vector<T>& alpha = (*weights)[ti];
                            std::vector<T> galpha(alpha.size());
                            T common = T(0);
                            for (std::size_t i = lo; i <= hi; ++i) {
                                T acc = T(0);
                                for (std::size_t d = 0; d < width; ++d)
                                    acc += g.at2(ti, d) * vv2.at2(i, d);
                                galpha[i - lo] = acc;
                                common += alpha[i - lo] * acc;
                            }
                            for (std::size_t i = lo; i <= hi; ++i) {
                                gs.at2(ti, i) = alpha[i - lo] * (galpha[i - lo] - common);
                                for (std::size_t d = 0; d < width; ++d)
                                    gv.at2(i, d) += alpha[i - lo] * g.at2(ti, d);
                            }
                        }
                        if (t.needs_grad(scores)) t.accumulate(scores, gs);
                        if (t.needs_grad(values)) t.accumulate(values, gv);
                    });
    }

private:
    struct Node {
        Tensor<T> value;
        bool needs_grad = false;
        std::function<void(Tape&, std::size_t)> backprop;
    };

    static void check_rank(const Tensor<T>& t, std::size_t rank, const char* where) {
        if (t.rank() != rank) {
            throw contract_error(std::string(where) + ": expected rank " +
                                 std::to_string(rank) + ", got " + t.shape_string());
        }
    }

    bool needs_any(const std::vector<Var>& vars) const {
        for (const Var v : vars) {
            if (needs_grad(v)) return true;
        }
        return false;
    }

    Var push(Tensor<T> value, bool needs, const std::vector<Var>&,
             std::function<void(Tape&, std::size_t)> backprop) {
        nodes_.push_back(Node{std::move(value), needs, std::move(backprop)});
        return Var{nodes_.size() - 1};
    }

    void accumulate(Var v, const Tensor<T>& g) {
        if (!needs_grad(v)) return;
        Tensor<T>& dst = grads_[v.id];
        for (std::size_t i = 0; i < g.numel(); ++i) dst[i] += g[i];
    }

    std::vector<Node> nodes_;
    std::vector<Tensor<T>> grads_;
};

}  // namespace fan
