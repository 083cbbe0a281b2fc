#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>

#include "adformer/core/array.hpp"

#ifdef ADFORMER_USE_EIGEN
#include <Eigen/Core>
#endif

namespace adformer {

inline Shape broadcast_shapes(const Shape &a, const Shape &b) {
    const std::size_t r = std::max(a.size(), b.size());
    Shape out(r);
    for (std::size_t i = 0; i < r; ++i) {
        const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
        const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
        if (da != db && da != 1 && db != 1) {
            throw std::invalid_argument("broadcast: incompatible shapes " + shape_str(a) + " and " +
                                        shape_str(b));
        }
        out[i] = std::max(da, db);
    }
    return out;
}

namespace detail {

/// Row-major strides with 0 on axes broadcast up to `out`.
inline std::vector<std::size_t> broadcast_strides(const Shape &s, const Shape &out) {
    std::vector<std::size_t> st(out.size(), 0);
    std::size_t acc = 1;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const std::size_t ri = s.size() - 1 - i;      // axis in s, from the right
        const std::size_t ro = out.size() - 1 - i;    // matching axis in out
        st[ro] = (s[ri] == 1 && out[ro] != 1) ? 0 : acc;
        acc *= s[ri];
    }
    return st;
}

/// Calls f(out_flat, a_flat, b_flat) for every output position.
template <typename F>
void for_each_broadcast2(const Shape &os, const Shape &as, const Shape &bs, F &&f) {
    const std::size_t total = shape_numel(os);
    const std::size_t r = os.size();
    const auto sa = broadcast_strides(as, os);
    const auto sb = broadcast_strides(bs, os);
    std::vector<std::size_t> idx(r, 0);
    std::size_t ia = 0, ib = 0;
    for (std::size_t o = 0; o < total; ++o) {
        f(o, ia, ib);
        for (std::size_t k = r; k-- > 0;) {
            ia += sa[k];
            ib += sb[k];
            if (++idx[k] < os[k]) break;
            ia -= sa[k] * os[k];
            ib -= sb[k] * os[k];
            idx[k] = 0;
        }
    }
}

/// C(m×n) = (or +=) op(A)·op(B), all contiguous row-major.
/// ta selects Aᵀ where A is stored k×m; tb selects Bᵀ where B is stored n×k.
template <typename S>
void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, const S *A, const S *B,
          S *C, bool accumulate) {
#ifdef ADFORMER_USE_EIGEN
    using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using CMap = Eigen::Map<const Mat>;
    Eigen::Map<Mat> c(C, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    CMap a(A, static_cast<Eigen::Index>(ta ? k : m), static_cast<Eigen::Index>(ta ? m : k));
    CMap b(B, static_cast<Eigen::Index>(tb ? n : k), static_cast<Eigen::Index>(tb ? k : n));
    if (!ta && !tb) {
        if (accumulate) c.noalias() += a * b; else c.noalias() = a * b;
    } else if (ta && !tb) {
        if (accumulate) c.noalias() += a.transpose() * b; else c.noalias() = a.transpose() * b;
    } else if (!ta && tb) {
        if (accumulate) c.noalias() += a * b.transpose(); else c.noalias() = a * b.transpose();
    } else {
        if (accumulate) c.noalias() += a.transpose() * b.transpose();
        else c.noalias() = a.transpose() * b.transpose();
    }
#else
    if (!accumulate) std::fill(C, C + m * n, S(0));
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const S av = ta ? A[p * m + i] : A[i * k + p];
            const S *brow = tb ? B : B + p * n;
            S *crow = C + i * n;
            if (tb) {
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * B[j * k + p];
            } else {
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
#endif
}

template <typename S>
void maybe_record(ArrayT<S> &out, std::initializer_list<ArrayT<S> *> inputs,
                  std::function<void()> pull) {
    bool need = false;
    for (auto *in : inputs) need = need || in->requires_grad();
    out.set_requires_grad(need);
    if (!need || !TapeT<S>::active()) return;
    for (auto *in : inputs) {
        if (in->requires_grad()) in->ensure_grad();
    }
    out.ensure_grad();
    TapeT<S>::active()->record(std::move(pull));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic with numpy-style broadcasting.
// ---------------------------------------------------------------------------

namespace detail {

enum class EwKind { Add, Sub, Mul };

template <typename S>
ArrayT<S> elementwise2(ArrayT<S> a, ArrayT<S> b, EwKind kind) {
    const Shape os = broadcast_shapes(a.shape(), b.shape());
    ArrayT<S> out = ArrayT<S>::zeros(os);
    const S *pa = a.data();
    const S *pb = b.data();
    S *po = out.data();
    const std::size_t total = out.numel();
    if (a.shape() == os && b.shape() == os) {
        switch (kind) {
            case EwKind::Add: for (std::size_t i = 0; i < total; ++i) po[i] = pa[i] + pb[i]; break;
            case EwKind::Sub: for (std::size_t i = 0; i < total; ++i) po[i] = pa[i] - pb[i]; break;
            case EwKind::Mul: for (std::size_t i = 0; i < total; ++i) po[i] = pa[i] * pb[i]; break;
        }
    } else if (b.numel() == 1) {
        const S bv = pb[0];
        switch (kind) {
            case EwKind::Add: for (std::size_t i = 0; i < total; ++i) po[i] = pa[i] + bv; break;
            case EwKind::Sub: for (std::size_t i = 0; i < total; ++i) po[i] = pa[i] - bv; break;
            case EwKind::Mul: for (std::size_t i = 0; i < total; ++i) po[i] = pa[i] * bv; break;
        }
    } else {
        for_each_broadcast2(os, a.shape(), b.shape(), [&](std::size_t o, std::size_t ia, std::size_t ib) {
            switch (kind) {
                case EwKind::Add: po[o] = pa[ia] + pb[ib]; break;
                case EwKind::Sub: po[o] = pa[ia] - pb[ib]; break;
                case EwKind::Mul: po[o] = pa[ia] * pb[ib]; break;
            }
        });
    }
    detail::maybe_record(out, {&a, &b}, [a, b, out, kind]() mutable {
        const S *g = out.grad_data();
        const std::size_t total = out.numel();
        const bool ga = a.requires_grad(), gb = b.requires_grad();
        if (a.shape() == out.shape() && b.shape() == out.shape()) {
            S *da = ga ? a.grad_data() : nullptr;
            S *db = gb ? b.grad_data() : nullptr;
            const S *pa = a.data();
            const S *pb = b.data();
            switch (kind) {
                case EwKind::Add:
                    for (std::size_t i = 0; i < total; ++i) {
                        if (ga) da[i] += g[i];
                        if (gb) db[i] += g[i];
                    }
                    break;
                case EwKind::Sub:
                    for (std::size_t i = 0; i < total; ++i) {
                        if (ga) da[i] += g[i];
                        if (gb) db[i] -= g[i];
                    }
                    break;
                case EwKind::Mul:
                    for (std::size_t i = 0; i < total; ++i) {
                        if (ga) da[i] += g[i] * pb[i];
                        if (gb) db[i] += g[i] * pa[i];
                    }
                    break;
            }
            return;
        }
        for_each_broadcast2(out.shape(), a.shape(), b.shape(),
                            [&](std::size_t o, std::size_t ia, std::size_t ib) {
                                switch (kind) {
                                    case EwKind::Add:
                                        if (ga) a.grad_data()[ia] += g[o];
                                        if (gb) b.grad_data()[ib] += g[o];
                                        break;
                                    case EwKind::Sub:
                                        if (ga) a.grad_data()[ia] += g[o];
                                        if (gb) b.grad_data()[ib] -= g[o];
                                        break;
                                    case EwKind::Mul:
                                        if (ga) a.grad_data()[ia] += g[o] * b.data()[ib];
                                        if (gb) b.grad_data()[ib] += g[o] * a.data()[ia];
                                        break;
                                }
                            });
    });
    return out;
}

}  // namespace detail

template <typename S>
ArrayT<S> add(const ArrayT<S> &a, const ArrayT<S> &b) {
    return detail::elementwise2(a, b, detail::EwKind::Add);
}
template <typename S>
ArrayT<S> sub(const ArrayT<S> &a, const ArrayT<S> &b) {
    return detail::elementwise2(a, b, detail::EwKind::Sub);
}
template <typename S>
ArrayT<S> mul(const ArrayT<S> &a, const ArrayT<S> &b) {
    return detail::elementwise2(a, b, detail::EwKind::Mul);
}

template <typename S>
ArrayT<S> operator+(const ArrayT<S> &a, const ArrayT<S> &b) { return add(a, b); }
template <typename S>
ArrayT<S> operator-(const ArrayT<S> &a, const ArrayT<S> &b) { return sub(a, b); }
template <typename S>
ArrayT<S> operator*(const ArrayT<S> &a, const ArrayT<S> &b) { return mul(a, b); }

/// out = a * c for a plain (non-learnable) constant c.
template <typename S>
ArrayT<S> scale(ArrayT<S> a, S c) {
    ArrayT<S> out = ArrayT<S>::zeros(a.shape());
    const S *pa = a.data();
    S *po = out.data();
    for (std::size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] * c;
    detail::maybe_record(out, {&a}, [a, out, c]() mutable {
        const S *g = out.grad_data();
        S *da = a.grad_data();
        for (std::size_t i = 0; i < out.numel(); ++i) da[i] += g[i] * c;
    });
    return out;
}

template <typename S>
ArrayT<S> add_scalar(ArrayT<S> a, S c) {
    ArrayT<S> out = ArrayT<S>::zeros(a.shape());
    const S *pa = a.data();
    S *po = out.data();
    for (std::size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] + c;
    detail::maybe_record(out, {&a}, [a, out]() mutable {
        const S *g = out.grad_data();
        S *da = a.grad_data();
        for (std::size_t i = 0; i < out.numel(); ++i) da[i] += g[i];
    });
    return out;
}

template <typename S>
ArrayT<S> exp(ArrayT<S> a) {
    ArrayT<S> out = ArrayT<S>::zeros(a.shape());
    const S *pa = a.data();
    S *po = out.data();
    for (std::size_t i = 0; i < out.numel(); ++i) po[i] = std::exp(pa[i]);
    detail::maybe_record(out, {&a}, [a, out]() mutable {
        const S *g = out.grad_data();
        const S *pv = out.data();
        S *da = a.grad_data();
        for (std::size_t i = 0; i < out.numel(); ++i) da[i] += g[i] * pv[i];
    });
    return out;
}

/// |x| with the sign subgradient (0 at exactly 0).
template <typename S>
ArrayT<S> abs(ArrayT<S> a) {
    ArrayT<S> out = ArrayT<S>::zeros(a.shape());
    const S *pa = a.data();
    S *po = out.data();
    for (std::size_t i = 0; i < out.numel(); ++i) po[i] = std::fabs(pa[i]);
    detail::maybe_record(out, {&a}, [a, out]() mutable {
        const S *g = out.grad_data();
        const S *pa = a.data();
        S *da = a.grad_data();
        for (std::size_t i = 0; i < out.numel(); ++i) {
            if (pa[i] > S(0)) da[i] += g[i];
            else if (pa[i] < S(0)) da[i] -= g[i];
        }
    });
    return out;
}

/// Clamp to [lo, hi]; gradient passes only through the interior.
template <typename S>
ArrayT<S> clamp(ArrayT<S> a, S lo, S hi) {
    if (lo > hi) throw std::invalid_argument("clamp: lo > hi");
    ArrayT<S> out = ArrayT<S>::zeros(a.shape());
    const S *pa = a.data();
    S *po = out.data();
    for (std::size_t i = 0; i < out.numel(); ++i) po[i] = std::min(hi, std::max(lo, pa[i]));
    detail::maybe_record(out, {&a}, [a, out, lo, hi]() mutable {
        const S *g = out.grad_data();
        const S *pa = a.data();
        S *da = a.grad_data();
        for (std::size_t i = 0; i < out.numel(); ++i) {
            if (pa[i] > lo && pa[i] < hi) da[i] += g[i];
        }
    });
    return out;
}

/// Tanh-form GELU, the smooth MLP nonlinearity.
template <typename S>
ArrayT<S> gelu(ArrayT<S> a) {
    static const S kC = S(std::sqrt(2.0 / 3.14159265358979323846));
    ArrayT<S> out = ArrayT<S>::zeros(a.shape());
    const S *pa = a.data();
    S *po = out.data();
    for (std::size_t i = 0; i < out.numel(); ++i) {
        const S x = pa[i];
        const S t = std::tanh(kC * (x + S(0.044715) * x * x * x));
        po[i] = S(0.5) * x * (S(1) + t);
    }
    detail::maybe_record(out, {&a}, [a, out]() mutable {
        const S *g = out.grad_data();
        const S *pa = a.data();
        S *da = a.grad_data();
        for (std::size_t i = 0; i < out.numel(); ++i) {
            const S x = pa[i];
            const S u = kC * (x + S(0.044715) * x * x * x);
            const S t = std::tanh(u);
            const S du = kC * (S(1) + S(3) * S(0.044715) * x * x);
            da[i] += g[i] * (S(0.5) * (S(1) + t) + S(0.5) * x * (S(1) - t * t) * du);
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Matrix product over the last two axes, leading axes broadcast.
// ---------------------------------------------------------------------------

template <typename S>
ArrayT<S> matmul(ArrayT<S> a, ArrayT<S> b) {
    if (a.rank() < 2 || b.rank() < 2) {
        throw std::invalid_argument("matmul: operands must have rank >= 2, got " +
                                    shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    const std::size_t m = a.dim(a.rank() - 2), ka = a.dim(a.rank() - 1);
    const std::size_t kb = b.dim(b.rank() - 2), n = b.dim(b.rank() - 1);
    if (ka != kb) {
        throw std::invalid_argument("matmul: inner dimensions differ, " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }
    const std::size_t k = ka;
    Shape ab(a.shape().begin(), a.shape().end() - 2);
    Shape bb(b.shape().begin(), b.shape().end() - 2);
    Shape batch = broadcast_shapes(ab, bb);
    Shape os = batch;
    os.push_back(m);
    os.push_back(n);
    ArrayT<S> out = ArrayT<S>::zeros(os);

    const std::size_t nbatch = shape_numel(batch);
    const auto sa = detail::broadcast_strides(ab, batch);
    const auto sb = detail::broadcast_strides(bb, batch);
    // Flat offsets of each batch slice into a, b and out.
    std::vector<std::size_t> offa(nbatch), offb(nbatch);
    {
        std::vector<std::size_t> idx(batch.size(), 0);
        std::size_t ia = 0, ib = 0;
        for (std::size_t o = 0; o < nbatch; ++o) {
            offa[o] = ia * (m * k);
            offb[o] = ib * (k * n);
            for (std::size_t r = batch.size(); r-- > 0;) {
                ia += sa[r];
                ib += sb[r];
                if (++idx[r] < batch[r]) break;
                ia -= sa[r] * batch[r];
                ib -= sb[r] * batch[r];
                idx[r] = 0;
            }
        }
    }

    if (bb.empty() || shape_numel(bb) == 1) {
        // Unbatched right operand: collapse all leading axes into one gemm.
        detail::gemm<S>(false, false, nbatch * m, n, k, a.data(), b.data(), out.data(), false);
    } else {
        for (std::size_t o = 0; o < nbatch; ++o) {
            detail::gemm<S>(false, false, m, n, k, a.data() + offa[o], b.data() + offb[o],
                            out.data() + o * m * n, false);
        }
    }

    detail::maybe_record(out, {&a, &b}, [a, b, out, m, n, k, nbatch, offa, offb, bb]() mutable {
        const bool ga = a.requires_grad(), gb = b.requires_grad();
        const bool rhs_plain = bb.empty() || shape_numel(bb) == 1;
        if (rhs_plain && a.numel() == nbatch * m * k) {
            // dA = dC·Bᵀ, dB = AᵀdC as two flat gemms.
            if (ga)
                detail::gemm<S>(false, true, nbatch * m, k, n, out.grad_data(), b.data(),
                                a.grad_data(), true);
            if (gb)
                detail::gemm<S>(true, false, k, n, nbatch * m, a.data(), out.grad_data(),
                                b.grad_data(), true);
            return;
        }
        for (std::size_t o = 0; o < nbatch; ++o) {
            const S *gc = out.grad_data() + o * m * n;
            if (ga)
                detail::gemm<S>(false, true, m, k, n, gc, b.data() + offb[o],
                                a.grad_data() + offa[o], true);
            if (gb)
                detail::gemm<S>(true, false, k, n, m, a.data() + offa[o], gc,
                                b.grad_data() + offb[o], true);
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Softmax / layer norm over the last axis.
// ---------------------------------------------------------------------------

template <typename S>
ArrayT<S> softmax_last_axis(ArrayT<S> x) {
    const std::size_t w = x.dim(x.rank() - 1);
    const std::size_t rows = x.numel() / w;
    ArrayT<S> out = ArrayT<S>::zeros(x.shape());
    const S *px = x.data();
    S *po = out.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const S *row = px + r * w;
        S *orow = po + r * w;
        S mx = row[0];
        for (std::size_t j = 1; j < w; ++j) mx = std::max(mx, row[j]);
        if (!std::isfinite(static_cast<double>(mx))) {
            throw std::runtime_error("softmax_last_axis: non-finite input");
        }
        S sum = S(0);
        for (std::size_t j = 0; j < w; ++j) {
            orow[j] = std::exp(row[j] - mx);
            sum += orow[j];
        }
        const S inv = S(1) / sum;
        for (std::size_t j = 0; j < w; ++j) orow[j] *= inv;
    }
    detail::maybe_record(out, {&x}, [x, out, rows, w]() mutable {
        const S *g = out.grad_data();
        const S *p = out.data();
        S *dx = x.grad_data();
        for (std::size_t r = 0; r < rows; ++r) {
            const S *gr = g + r * w;
            const S *pr = p + r * w;
            S *dr = dx + r * w;
            S dot = S(0);
            for (std::size_t j = 0; j < w; ++j) dot += gr[j] * pr[j];
            for (std::size_t j = 0; j < w; ++j) dr[j] += pr[j] * (gr[j] - dot);
        }
    });
    return out;
}

/// Normalizes each last-axis slice to mean 0 / variance 1 (epsilon 1e-5),
/// then applies the per-feature affine transform gain ⊙ x̂ + bias.
template <typename S>
ArrayT<S> layer_norm(ArrayT<S> x, ArrayT<S> gain, ArrayT<S> bias) {
    const std::size_t w = x.dim(x.rank() - 1);
    if (gain.numel() != w || bias.numel() != w) {
        throw std::invalid_argument("layer_norm: gain/bias length " + std::to_string(gain.numel()) +
                                    "/" + std::to_string(bias.numel()) + " for feature width " +
                                    std::to_string(w));
    }
    const std::size_t rows = x.numel() / w;
    const S eps = S(1e-5);
    ArrayT<S> out = ArrayT<S>::zeros(x.shape());
    // Cached normalized values and reciprocal stddevs for the backward pass.
    auto xhat = std::make_shared<std::vector<S>>(x.numel());
    auto rstd = std::make_shared<std::vector<S>>(rows);
    const S *px = x.data();
    const S *pg = gain.data();
    const S *pb = bias.data();
    S *po = out.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const S *row = px + r * w;
        S mean = S(0);
        for (std::size_t j = 0; j < w; ++j) mean += row[j];
        mean /= S(w);
        S var = S(0);
        for (std::size_t j = 0; j < w; ++j) {
            const S d = row[j] - mean;
            var += d * d;
        }
        var /= S(w);
        const S rs = S(1) / std::sqrt(var + eps);
        (*rstd)[r] = rs;
        S *hrow = xhat->data() + r * w;
        S *orow = po + r * w;
        for (std::size_t j = 0; j < w; ++j) {
            hrow[j] = (row[j] - mean) * rs;
            orow[j] = pg[j] * hrow[j] + pb[j];
        }
    }
    detail::maybe_record(out, {&x, &gain, &bias}, [x, gain, bias, out, xhat, rstd, rows, w]() mutable {
        const S *g = out.grad_data();
        const S *pg = gain.data();
        const bool gx = x.requires_grad();
        S *dgain = gain.requires_grad() ? gain.grad_data() : nullptr;
        S *dbias = bias.requires_grad() ? bias.grad_data() : nullptr;
        for (std::size_t r = 0; r < rows; ++r) {
            const S *gr = g + r * w;
            const S *hr = xhat->data() + r * w;
            S sum_dh = S(0), sum_dh_h = S(0);
            for (std::size_t j = 0; j < w; ++j) {
                const S dh = gr[j] * pg[j];
                sum_dh += dh;
                sum_dh_h += dh * hr[j];
                if (dgain) dgain[j] += gr[j] * hr[j];
                if (dbias) dbias[j] += gr[j];
            }
            if (!gx) continue;
            S *dx = x.grad_data() + r * w;
            const S rs = (*rstd)[r];
            const S mdh = sum_dh / S(w), mdhh = sum_dh_h / S(w);
            for (std::size_t j = 0; j < w; ++j) {
                dx[j] += rs * (gr[j] * pg[j] - mdh - hr[j] * mdhh);
            }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Shape manipulation.
// ---------------------------------------------------------------------------

/// Materialized axis permutation; out[p(i)] layout with axes reordered by perm.
template <typename S>
ArrayT<S> permute(ArrayT<S> x, const std::vector<std::size_t> &perm) {
    const std::size_t r = x.rank();
    if (perm.size() != r) throw std::invalid_argument("permute: axis list rank mismatch");
    std::vector<bool> seen(r, false);
    Shape os(r);
    for (std::size_t i = 0; i < r; ++i) {
        if (perm[i] >= r || seen[perm[i]]) throw std::invalid_argument("permute: invalid axis list");
        seen[perm[i]] = true;
        os[i] = x.dim(perm[i]);
    }
    ArrayT<S> out = ArrayT<S>::zeros(os);
    // Strides of x, then walk output positions reading x at permuted strides.
    std::vector<std::size_t> xs(r);
    {
        std::size_t acc = 1;
        for (std::size_t i = r; i-- > 0;) {
            xs[i] = acc;
            acc *= x.dim(i);
        }
    }
    std::vector<std::size_t> ps(r);
    for (std::size_t i = 0; i < r; ++i) ps[i] = xs[perm[i]];
    const S *px = x.data();
    S *po = out.data();
    const std::size_t total = out.numel();
    std::vector<std::size_t> idx(r, 0);
    std::size_t ix = 0;
    for (std::size_t o = 0; o < total; ++o) {
        po[o] = px[ix];
        for (std::size_t k2 = r; k2-- > 0;) {
            ix += ps[k2];
            if (++idx[k2] < os[k2]) break;
            ix -= ps[k2] * os[k2];
            idx[k2] = 0;
        }
    }
    detail::maybe_record(out, {&x}, [x, out, os, ps, r]() mutable {
        const S *g = out.grad_data();
        S *dx = x.grad_data();
        const std::size_t total = out.numel();
        std::vector<std::size_t> idx(r, 0);
        std::size_t ix = 0;
        for (std::size_t o = 0; o < total; ++o) {
            dx[ix] += g[o];
            for (std::size_t k2 = r; k2-- > 0;) {
                ix += ps[k2];
                if (++idx[k2] < os[k2]) break;
                ix -= ps[k2] * os[k2];
                idx[k2] = 0;
            }
        }
    });
    return out;
}

template <typename S>
ArrayT<S> transpose_last2(const ArrayT<S> &x) {
    std::vector<std::size_t> perm(x.rank());
    std::iota(perm.begin(), perm.end(), std::size_t(0));
    std::swap(perm[x.rank() - 2], perm[x.rank() - 1]);
    return permute(x, perm);
}

/// Contiguous slice [start, start+len) along one axis.
template <typename S>
ArrayT<S> slice_axis(ArrayT<S> x, std::size_t axis, std::size_t start, std::size_t len) {
    if (axis >= x.rank() || len == 0 || start + len > x.dim(axis)) {
        throw std::invalid_argument("slice_axis: invalid slice [" + std::to_string(start) + "," +
                                    std::to_string(start + len) + ") of axis " +
                                    std::to_string(axis) + " in " + shape_str(x.shape()));
    }
    Shape os = x.shape();
    os[axis] = len;
    ArrayT<S> out = ArrayT<S>::zeros(os);
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
    const std::size_t xa = x.dim(axis);
    const S *px = x.data();
    S *po = out.data();
    for (std::size_t ou = 0; ou < outer; ++ou) {
        std::memcpy(po + ou * len * inner, px + (ou * xa + start) * inner, len * inner * sizeof(S));
    }
    detail::maybe_record(out, {&x}, [x, out, outer, inner, xa, start, len]() mutable {
        const S *g = out.grad_data();
        S *dx = x.grad_data();
        for (std::size_t ou = 0; ou < outer; ++ou) {
            const S *gs = g + ou * len * inner;
            S *ds = dx + (ou * xa + start) * inner;
            for (std::size_t i = 0; i < len * inner; ++i) ds[i] += gs[i];
        }
    });
    return out;
}

template <typename S>
ArrayT<S> concat_last_axis(const std::vector<ArrayT<S>> &parts) {
    if (parts.empty()) throw std::invalid_argument("concat_last_axis: no parts");
    const std::size_t r = parts[0].rank();
    std::size_t w = 0;
    for (const auto &p : parts) {
        if (p.rank() != r) throw std::invalid_argument("concat_last_axis: rank mismatch");
        for (std::size_t i = 0; i + 1 < r; ++i) {
            if (p.dim(i) != parts[0].dim(i)) {
                throw std::invalid_argument("concat_last_axis: leading axis mismatch, " +
                                            shape_str(p.shape()) + " vs " +
                                            shape_str(parts[0].shape()));
            }
        }
        w += p.dim(r - 1);
    }
    Shape os = parts[0].shape();
    os[r - 1] = w;
    ArrayT<S> out = ArrayT<S>::zeros(os);
    const std::size_t rows = out.numel() / w;
    S *po = out.data();
    std::size_t off = 0;
    for (const auto &p : parts) {
        const std::size_t pw = p.dim(r - 1);
        const S *pp = p.data();
        for (std::size_t row = 0; row < rows; ++row) {
            std::memcpy(po + row * w + off, pp + row * pw, pw * sizeof(S));
        }
        off += pw;
    }
    bool need = false;
    for (const auto &p : parts) need = need || p.requires_grad();
    out.set_requires_grad(need);
    if (need && TapeT<S>::active()) {
        auto inputs = parts;  // aliasing copies
        for (auto &p : inputs) {
            if (p.requires_grad()) p.ensure_grad();
        }
        out.ensure_grad();
        TapeT<S>::active()->record([inputs, out, rows, w]() mutable {
            const S *g = out.grad_data();
            std::size_t off = 0;
            for (auto &p : inputs) {
                const std::size_t pw = p.dim(p.rank() - 1);
                if (p.requires_grad()) {
                    S *dp = p.grad_data();
                    for (std::size_t row = 0; row < rows; ++row) {
                        const S *gr = g + row * w + off;
                        S *dr = dp + row * pw;
                        for (std::size_t j = 0; j < pw; ++j) dr[j] += gr[j];
                    }
                }
                off += pw;
            }
        });
    }
    return out;
}

template <typename S>
ArrayT<S> broadcast_to(ArrayT<S> x, const Shape &shape) {
    if (broadcast_shapes(x.shape(), shape) != shape) {
        throw std::invalid_argument("broadcast_to: cannot broadcast " + shape_str(x.shape()) +
                                    " to " + shape_str(shape));
    }
    ArrayT<S> out = ArrayT<S>::zeros(shape);
    const S *px = x.data();
    S *po = out.data();
    detail::for_each_broadcast2(shape, x.shape(), x.shape(),
                                [&](std::size_t o, std::size_t ia, std::size_t) { po[o] = px[ia]; });
    detail::maybe_record(out, {&x}, [x, out]() mutable {
        const S *g = out.grad_data();
        S *dx = x.grad_data();
        detail::for_each_broadcast2(out.shape(), x.shape(), x.shape(),
                                    [&](std::size_t o, std::size_t ia, std::size_t) { dx[ia] += g[o]; });
    });
    return out;
}

// ---------------------------------------------------------------------------
// Reductions.
// ---------------------------------------------------------------------------

template <typename S>
ArrayT<S> sum_all(ArrayT<S> x) {
    S s = S(0);
    const S *px = x.data();
    for (std::size_t i = 0; i < x.numel(); ++i) s += px[i];
    ArrayT<S> out = ArrayT<S>::from({1}, {s});
    detail::maybe_record(out, {&x}, [x, out]() mutable {
        const S g = out.grad_data()[0];
        S *dx = x.grad_data();
        for (std::size_t i = 0; i < x.numel(); ++i) dx[i] += g;
    });
    return out;
}

template <typename S>
ArrayT<S> mean_all(const ArrayT<S> &x) {
    return scale(sum_all(x), S(1) / S(x.numel()));
}

}  // namespace adformer
