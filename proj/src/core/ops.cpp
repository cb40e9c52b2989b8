#include "core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "core/errors.hpp"

namespace fuseformer {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) throw ShapeError(std::string(op) + ": shape mismatch");
}

std::vector<int64_t> strides_of(const std::vector<int>& shape) {
    std::vector<int64_t> s(shape.size());
    int64_t acc = 1;
    for (int i = static_cast<int>(shape.size()) - 1; i >= 0; --i) {
        s[static_cast<size_t>(i)] = acc;
        acc *= shape[static_cast<size_t>(i)];
    }
    return s;
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tape* tp = common_tape({&a, &b});
    Tensor out(a.shape());
    const double* av = a.data();
    const double* bv = b.data();
    double* ov = out.data();
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) ov[i] = av[i] + bv[i];
    if (!tp) return out;
    int an = a.node(), bn = b.node();
    int node = tp->push_node(n, [an, bn, n](Tape& t, int self) {
        const std::vector<double>& g = *t.grad_if(self);
        if (an >= 0) {
            auto& ga = t.grad_ref(an);
            for (int64_t i = 0; i < n; ++i) ga[static_cast<size_t>(i)] += g[static_cast<size_t>(i)];
        }
        if (bn >= 0) {
            auto& gb = t.grad_ref(bn);
            for (int64_t i = 0; i < n; ++i) gb[static_cast<size_t>(i)] += g[static_cast<size_t>(i)];
        }
    });
    return tp->track(std::move(out), node);
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tape* tp = common_tape({&a, &b});
    Tensor out(a.shape());
    const double* av = a.data();
    const double* bv = b.data();
    double* ov = out.data();
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) ov[i] = av[i] - bv[i];
    if (!tp) return out;
    int an = a.node(), bn = b.node();
    int node = tp->push_node(n, [an, bn, n](Tape& t, int self) {
        const std::vector<double>& g = *t.grad_if(self);
        if (an >= 0) {
            auto& ga = t.grad_ref(an);
            for (int64_t i = 0; i < n; ++i) ga[static_cast<size_t>(i)] += g[static_cast<size_t>(i)];
        }
        if (bn >= 0) {
            auto& gb = t.grad_ref(bn);
            for (int64_t i = 0; i < n; ++i) gb[static_cast<size_t>(i)] -= g[static_cast<size_t>(i)];
        }
    });
    return tp->track(std::move(out), node);
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tape* tp = common_tape({&a, &b});
    Tensor out(a.shape());
    const double* av = a.data();
    const double* bv = b.data();
    double* ov = out.data();
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) ov[i] = av[i] * bv[i];
    if (!tp) return out;
    int an = a.node(), bn = b.node();
    auto as = a.storage();
    auto bs = b.storage();
    int node = tp->push_node(n, [an, bn, n, as, bs](Tape& t, int self) {
        const std::vector<double>& g = *t.grad_if(self);
        if (an >= 0) {
            auto& ga = t.grad_ref(an);
            const double* bd = bs->data();
            for (int64_t i = 0; i < n; ++i) ga[static_cast<size_t>(i)] += g[static_cast<size_t>(i)] * bd[i];
        }
        if (bn >= 0) {
            auto& gb = t.grad_ref(bn);
            const double* ad = as->data();
            for (int64_t i = 0; i < n; ++i) gb[static_cast<size_t>(i)] += g[static_cast<size_t>(i)] * ad[i];
        }
    });
    return tp->track(std::move(out), node);
}

Tensor div(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "div");
    Tape* tp = common_tape({&a, &b});
    Tensor out(a.shape());
    const double* av = a.data();
    const double* bv = b.data();
    double* ov = out.data();
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) ov[i] = av[i] / bv[i];
    if (!tp) return out;
    int an = a.node(), bn = b.node();
    auto as = a.storage();
    auto bs = b.storage();
    int node = tp->push_node(n, [an, bn, n, as, bs](Tape& t, int self) {
        const std::vector<double>& g = *t.grad_if(self);
        const double* ad = as->data();
        const double* bd = bs->data();
        if (an >= 0) {
            auto& ga = t.grad_ref(an);
            for (int64_t i = 0; i < n; ++i) ga[static_cast<size_t>(i)] += g[static_cast<size_t>(i)] / bd[i];
        }
        if (bn >= 0) {
            auto& gb = t.grad_ref(bn);
            for (int64_t i = 0; i < n; ++i)
                gb[static_cast<size_t>(i)] -= g[static_cast<size_t>(i)] * ad[i] / (bd[i] * bd[i]);
        }
    });
    return tp->track(std::move(out), node);
}

Tensor add_scalar(const Tensor& a, double c) {
    Tape* tp = common_tape({&a});
    Tensor out(a.shape());
    const double* av = a.data();
    double* ov = out.data();
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) ov[i] = av[i] + c;
    if (!tp) return out;
    int an = a.node();
    int node = tp->push_node(n, [an, n](Tape& t, int self) {
        const std::vector<double>& g = *t.grad_if(self);
        auto& ga = t.grad_ref(an);
        for (int64_t i = 0; i < n; ++i) ga[static_cast<size_t>(i)] += g[static_cast<size_t>(i)];
    });
    return tp->track(std::move(out), node);
}

Tensor mul_scalar(const Tensor& a, double c) {
    Tape* tp = common_tape({&a});
    Tensor out(a.shape());
    const double* av = a.data();
    double* ov = out.data();
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) ov[i] = av[i] * c;
    if (!tp) return out;
    int an = a.node();
    int node = tp->push_node(n, [an, n, c](Tape& t, int self) {
        const std::vector<double>& g = *t.grad_if(self);
        auto& ga = t.grad_ref(an);
        for (int64_t i = 0; i < n; ++i) ga[static_cast<size_t>(i)] += c * g[static_cast<size_t>(i)];
    });
    return tp->track(std::move(out), node);
}

Tensor relu(const Tensor& x) {
    Tape* tp = common_tape({&x});
    Tensor out(x.shape());
    const double* xv = x.data();
    double* ov = out.data();
    const int64_t n = x.size();
    for (int64_t i = 0; i < n; ++i) ov[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    if (!tp) return out;
    int xn = x.node();
    auto xs = x.storage();
    int node = tp->push_node(n, [xn, n, xs](Tape& t, int self) {
        const std::vector<double>& g = *t.grad_if(self);
        auto& gx = t.grad_ref(xn);
        const double* xd = xs->data();
        for (int64_t i = 0; i < n; ++i)
            if (xd[i] > 0.0) gx[static_cast<size_t>(i)] += g[static_cast<size_t>(i)];
    });
    return tp->track(std::move(out), node);
}

Tensor sigmoid(const Tensor& x) {
    Tape* tp = common_tape({&x});
    Tensor out(x.shape());
    const double* xv = x.data();
    double* ov = out.data();
    const int64_t n = x.size();
    for (int64_t i = 0; i < n; ++i) {
        double v = xv[i];
        // branch keeps exp() argument nonpositive
        ov[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    if (!tp) return out;
    int xn = x.node();
    auto os = out.storage();
    int node = tp->push_node(n, [xn, n, os](Tape& t, int self) {
        const std::vector<double>& g = *t.grad_if(self);
        auto& gx = t.grad_ref(xn);
        const double* s = os->data();
        for (int64_t i = 0; i < n; ++i)
            gx[static_cast<size_t>(i)] += g[static_cast<size_t>(i)] * s[i] * (1.0 - s[i]);
    });
    return tp->track(std::move(out), node);
}

Tensor sum(const Tensor& x) {
    Tape* tp = common_tape({&x});
    const double* xv = x.data();
    const int64_t n = x.size();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += xv[i];
    Tensor out = Tensor::scalar(acc);
    if (!tp) return out;
    int xn = x.node();
    int node = tp->push_node(1, [xn, n](Tape& t, int self) {
        const double g = (*t.grad_if(self))[0];
        auto& gx = t.grad_ref(xn);
        for (int64_t i = 0; i < n; ++i) gx[static_cast<size_t>(i)] += g;
    });
    return tp->track(std::move(out), node);
}

Tensor mean(const Tensor& x) { return mul_scalar(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2) throw ShapeError("matmul: operands must be rank 2");
    if (a.dim(1) != b.dim(0)) throw ShapeError("matmul: inner dimensions differ");
    const int n = a.dim(0), k = a.dim(1), m = b.dim(1);
    Tape* tp = common_tape({&a, &b});
    Tensor out({n, m});
    const double* av = a.data();
    const double* bv = b.data();
    double* ov = out.data();
    for (int i = 0; i < n; ++i) {
        double* orow = ov + static_cast<int64_t>(i) * m;
        const double* arow = av + static_cast<int64_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) {
            const double aik = arow[kk];
            const double* brow = bv + static_cast<int64_t>(kk) * m;
            for (int j = 0; j < m; ++j) orow[j] += aik * brow[j];
        }
    }
    if (!tp) return out;
    int an = a.node(), bn = b.node();
    auto as = a.storage();
    auto bs = b.storage();
    int node = tp->push_node(static_cast<int64_t>(n) * m, [an, bn, n, k, m, as, bs](Tape& t, int self) {
        const double* g = t.grad_if(self)->data();
        if (an >= 0) {
            auto& ga = t.grad_ref(an);
            const double* bd = bs->data();
            // dA[i,kk] = sum_j g[i,j] * B[kk,j]
            for (int i = 0; i < n; ++i) {
                const double* grow = g + static_cast<int64_t>(i) * m;
                double* garow = ga.data() + static_cast<int64_t>(i) * k;
                for (int kk = 0; kk < k; ++kk) {
                    const double* brow = bd + static_cast<int64_t>(kk) * m;
                    double acc = 0.0;
                    for (int j = 0; j < m; ++j) acc += grow[j] * brow[j];
                    garow[kk] += acc;
                }
            }
        }
        if (bn >= 0) {
            auto& gb = t.grad_ref(bn);
            const double* ad = as->data();
            // dB[kk,j] = sum_i A[i,kk] * g[i,j]
            for (int i = 0; i < n; ++i) {
                const double* grow = g + static_cast<int64_t>(i) * m;
                const double* arow = ad + static_cast<int64_t>(i) * k;
                for (int kk = 0; kk < k; ++kk) {
                    const double aik = arow[kk];
                    double* gbrow = gb.data() + static_cast<int64_t>(kk) * m;
                    for (int j = 0; j < m; ++j) gbrow[j] += aik * grow[j];
                }
            }
        }
    });
    return tp->track(std::move(out), node);
}

Tensor bmm(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 3 || b.ndim() != 3) throw ShapeError("bmm: operands must be rank 3");
    if (a.dim(0) != b.dim(0)) throw ShapeError("bmm: batch dimensions differ");
    if (a.dim(2) != b.dim(1)) throw ShapeError("bmm: inner dimensions differ");
    const int B = a.dim(0), n = a.dim(1), k = a.dim(2), m = b.dim(2);
    Tape* tp = common_tape({&a, &b});
    Tensor out({B, n, m});
    const double* av = a.data();
    const double* bv = b.data();
    double* ov = out.data();
    const int64_t an_sz = static_cast<int64_t>(n) * k, bn_sz = static_cast<int64_t>(k) * m,
                  on_sz = static_cast<int64_t>(n) * m;
    for (int bb = 0; bb < B; ++bb) {
        const double* ab = av + bb * an_sz;
        const double* bbv = bv + bb * bn_sz;
        double* ob = ov + bb * on_sz;
        for (int i = 0; i < n; ++i) {
            double* orow = ob + static_cast<int64_t>(i) * m;
            const double* arow = ab + static_cast<int64_t>(i) * k;
            for (int kk = 0; kk < k; ++kk) {
                const double aik = arow[kk];
                const double* brow = bbv + static_cast<int64_t>(kk) * m;
                for (int j = 0; j < m; ++j) orow[j] += aik * brow[j];
            }
        }
    }
    if (!tp) return out;
    int ani = a.node(), bni = b.node();
    auto as = a.storage();
    auto bs = b.storage();
    int node = tp->push_node(static_cast<int64_t>(B) * n * m,
                             [ani, bni, B, n, k, m, as, bs, an_sz, bn_sz, on_sz](Tape& t, int self) {
        const double* g = t.grad_if(self)->data();
        const double* ad = as->data();
        const double* bd = bs->data();
        for (int bb = 0; bb < B; ++bb) {
            const double* gb = g + bb * on_sz;
            if (ani >= 0) {
                double* ga = t.grad_ref(ani).data() + bb * an_sz;
                const double* bbv = bd + bb * bn_sz;
                for (int i = 0; i < n; ++i) {
                    const double* grow = gb + static_cast<int64_t>(i) * m;
                    double* garow = ga + static_cast<int64_t>(i) * k;
                    for (int kk = 0; kk < k; ++kk) {
                        const double* brow = bbv + static_cast<int64_t>(kk) * m;
                        double acc = 0.0;
                        for (int j = 0; j < m; ++j) acc += grow[j] * brow[j];
                        garow[kk] += acc;
                    }
                }
            }
            if (bni >= 0) {
                double* gbm = t.grad_ref(bni).data() + bb * bn_sz;
                const double* ab = ad + bb * an_sz;
                for (int i = 0; i < n; ++i) {
                    const double* grow = gb + static_cast<int64_t>(i) * m;
                    const double* arow = ab + static_cast<int64_t>(i) * k;
                    for (int kk = 0; kk < k; ++kk) {
                        const double aik = arow[kk];
                        double* gbrow = gbm + static_cast<int64_t>(kk) * m;
                        for (int j = 0; j < m; ++j) gbrow[j] += aik * grow[j];
                    }
                }
            }
        }
    });
    return tp->track(std::move(out), node);
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
    Tape* tp = common_tape({&x});
    Tensor out = x.with_shape(std::move(shape));
    if (!tp) return out;
    int xn = x.node();
    const int64_t n = x.size();
    int node = tp->push_node(n, [xn, n](Tape& t, int self) {
        const std::vector<double>& g = *t.grad_if(self);
        auto& gx = t.grad_ref(xn);
        for (int64_t i = 0; i < n; ++i) gx[static_cast<size_t>(i)] += g[static_cast<size_t>(i)];
    });
    return tp->track(std::move(out), node);
}

Tensor permute(const Tensor& x, const std::vector<int>& perm) {
    const int nd = x.ndim();
    if (static_cast<int>(perm.size()) != nd) throw ShapeError("permute: rank mismatch");
    std::vector<bool> seen(static_cast<size_t>(nd), false);
    std::vector<int> oshape(static_cast<size_t>(nd));
    for (int i = 0; i < nd; ++i) {
        int p = perm[static_cast<size_t>(i)];
        if (p < 0 || p >= nd || seen[static_cast<size_t>(p)]) throw ShapeError("permute: invalid permutation");
        seen[static_cast<size_t>(p)] = true;
        oshape[static_cast<size_t>(i)] = x.dim(p);
    }
    Tape* tp = common_tape({&x});
    Tensor out(oshape);
    const auto in_str = strides_of(x.shape());
    const auto out_str = strides_of(oshape);
    // out stride of the axis each input axis maps to
    std::vector<int64_t> scatter(static_cast<size_t>(nd));
    for (int i = 0; i < nd; ++i) scatter[static_cast<size_t>(perm[static_cast<size_t>(i)])] = out_str[static_cast<size_t>(i)];
    const int64_t n = x.size();
    const double* xv = x.data();
    double* ov = out.data();
    std::vector<int> idx(static_cast<size_t>(nd), 0);
    const auto& ishape = x.shape();
    int64_t opos = 0;
    for (int64_t i = 0; i < n; ++i) {
        ov[opos] = xv[i];
        for (int d = nd - 1; d >= 0; --d) {
            idx[static_cast<size_t>(d)]++;
            opos += scatter[static_cast<size_t>(d)];
            if (idx[static_cast<size_t>(d)] < ishape[static_cast<size_t>(d)]) break;
            opos -= scatter[static_cast<size_t>(d)] * ishape[static_cast<size_t>(d)];
            idx[static_cast<size_t>(d)] = 0;
        }
    }
    if (!tp) return out;
    int xn = x.node();
    auto ishape_copy = x.shape();
    int node = tp->push_node(n, [xn, n, nd, scatter, ishape_copy](Tape& t, int self) {
        const std::vector<double>& g = *t.grad_if(self);
        auto& gx = t.grad_ref(xn);
        std::vector<int> idx(static_cast<size_t>(nd), 0);
        int64_t opos = 0;
        for (int64_t i = 0; i < n; ++i) {
            gx[static_cast<size_t>(i)] += g[static_cast<size_t>(opos)];
            for (int d = nd - 1; d >= 0; --d) {
                idx[static_cast<size_t>(d)]++;
                opos += scatter[static_cast<size_t>(d)];
                if (idx[static_cast<size_t>(d)] < ishape_copy[static_cast<size_t>(d)]) break;
                opos -= scatter[static_cast<size_t>(d)] * ishape_copy[static_cast<size_t>(d)];
                idx[static_cast<size_t>(d)] = 0;
            }
        }
    });
    return tp->track(std::move(out), node);
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const int nd = parts[0].ndim();
    if (axis < 0 || axis >= nd) throw ShapeError("concat: axis out of range");
    std::vector<int> oshape = parts[0].shape();
    for (size_t p = 1; p < parts.size(); ++p) {
        if (parts[p].ndim() != nd) throw ShapeError("concat: rank mismatch");
        for (int d = 0; d < nd; ++d) {
            if (d == axis) continue;
            if (parts[p].dim(d) != parts[0].dim(d)) throw ShapeError("concat: ragged shapes");
        }
        oshape[static_cast<size_t>(axis)] += parts[p].dim(axis);
    }
    std::vector<const Tensor*> ptrs;
    for (const auto& p : parts) ptrs.push_back(&p);
    Tape* tp = nullptr;
    for (const Tensor* p : ptrs) {
        if (!p->tracked()) continue;
        if (tp && p->tape() != tp) throw ShapeError("concat: operands live on different tapes");
        tp = p->tape();
    }
    int64_t outer = 1;
    for (int d = 0; d < axis; ++d) outer *= parts[0].dim(d);
    int64_t inner = 1;
    for (int d = axis + 1; d < nd; ++d) inner *= parts[0].dim(d);

    Tensor out(oshape);
    double* ov = out.data();
    const int64_t out_slab = static_cast<int64_t>(oshape[static_cast<size_t>(axis)]) * inner;
    int64_t off = 0;
    std::vector<int64_t> part_slabs;
    for (const auto& part : parts) {
        const int64_t slab = static_cast<int64_t>(part.dim(axis)) * inner;
        part_slabs.push_back(slab);
        const double* pv = part.data();
        for (int64_t o = 0; o < outer; ++o)
            std::copy(pv + o * slab, pv + (o + 1) * slab, ov + o * out_slab + off);
        off += slab;
    }
    if (!tp) return out;
    std::vector<int> nodes;
    for (const auto& part : parts) nodes.push_back(part.node());
    int node = tp->push_node(out.size(), [nodes, part_slabs, outer, out_slab](Tape& t, int self) {
        const std::vector<double>& g = *t.grad_if(self);
        int64_t off = 0;
        for (size_t p = 0; p < nodes.size(); ++p) {
            const int64_t slab = part_slabs[p];
            if (nodes[p] >= 0) {
                auto& gp = t.grad_ref(nodes[p]);
                for (int64_t o = 0; o < outer; ++o)
                    for (int64_t i = 0; i < slab; ++i)
                        gp[static_cast<size_t>(o * slab + i)] += g[static_cast<size_t>(o * out_slab + off + i)];
            }
            off += slab;
        }
    });
    return tp->track(std::move(out), node);
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding) {
    if (input.ndim() != 3) throw ShapeError("conv2d: input must be [C,H,W]");
    if (kernel.ndim() != 4) throw ShapeError("conv2d: kernel must be [Co,Ci,kh,kw]");
    if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
    if (padding < 0) throw ShapeError("conv2d: padding must be >= 0");
    const int Ci = input.dim(0), H = input.dim(1), W = input.dim(2);
    const int Co = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
    if (kernel.dim(1) != Ci) throw ShapeError("conv2d: kernel channel count does not match input");
    const int hnum = H + 2 * padding - kh;
    const int wnum = W + 2 * padding - kw;
    if (hnum < 0 || wnum < 0) throw ShapeError("conv2d: kernel larger than padded input");
    if (hnum % stride != 0 || wnum % stride != 0)
        throw ShapeError("conv2d: output extent is not an exact multiple of stride");
    const int Ho = hnum / stride + 1, Wo = wnum / stride + 1;

    Tape* tp = common_tape({&input, &kernel});
    Tensor out({Co, Ho, Wo});
    const double* in = input.data();
    const double* kn = kernel.data();
    double* ov = out.data();
    auto run_forward = [&](const double* inp, const double* knp, double* outp) {
        for (int co = 0; co < Co; ++co) {
            double* oplane = outp + static_cast<int64_t>(co) * Ho * Wo;
            for (int ci = 0; ci < Ci; ++ci) {
                const double* iplane = inp + static_cast<int64_t>(ci) * H * W;
                const double* kbase = knp + ((static_cast<int64_t>(co) * Ci + ci) * kh) * kw;
                for (int dy = 0; dy < kh; ++dy) {
                    for (int dx = 0; dx < kw; ++dx) {
                        const double wv = kbase[static_cast<int64_t>(dy) * kw + dx];
                        // valid ow range so that iw = ow*stride - padding + dx lands in [0,W)
                        int ow0 = 0;
                        while (ow0 < Wo && ow0 * stride - padding + dx < 0) ++ow0;
                        int ow1 = Wo;
                        while (ow1 > ow0 && (ow1 - 1) * stride - padding + dx >= W) --ow1;
                        for (int oh = 0; oh < Ho; ++oh) {
                            const int ih = oh * stride - padding + dy;
                            if (ih < 0 || ih >= H) continue;
                            const double* irow = iplane + static_cast<int64_t>(ih) * W - padding + dx;
                            double* orow = oplane + static_cast<int64_t>(oh) * Wo;
                            if (stride == 1) {
                                for (int ow = ow0; ow < ow1; ++ow) orow[ow] += wv * irow[ow];
                            } else {
                                for (int ow = ow0; ow < ow1; ++ow) orow[ow] += wv * irow[static_cast<int64_t>(ow) * stride];
                            }
                        }
                    }
                }
            }
        }
    };
    run_forward(in, kn, ov);
    if (!tp) return out;
    int in_node = input.node(), k_node = kernel.node();
    auto is = input.storage();
    auto ks = kernel.storage();
    int node = tp->push_node(out.size(), [in_node, k_node, is, ks, Ci, H, W, Co, kh, kw, stride, padding, Ho,
                                          Wo](Tape& t, int self) {
        const double* g = t.grad_if(self)->data();
        const double* inp = is->data();
        const double* knp = ks->data();
        if (in_node >= 0) {
            double* gin = t.grad_ref(in_node).data();
            for (int co = 0; co < Co; ++co) {
                const double* gplane = g + static_cast<int64_t>(co) * Ho * Wo;
                for (int ci = 0; ci < Ci; ++ci) {
                    double* giplane = gin + static_cast<int64_t>(ci) * H * W;
                    const double* kbase = knp + ((static_cast<int64_t>(co) * Ci + ci) * kh) * kw;
                    for (int dy = 0; dy < kh; ++dy) {
                        for (int dx = 0; dx < kw; ++dx) {
                            const double wv = kbase[static_cast<int64_t>(dy) * kw + dx];
                            int ow0 = 0;
                            while (ow0 < Wo && ow0 * stride - padding + dx < 0) ++ow0;
                            int ow1 = Wo;
                            while (ow1 > ow0 && (ow1 - 1) * stride - padding + dx >= W) --ow1;
                            for (int oh = 0; oh < Ho; ++oh) {
                                const int ih = oh * stride - padding + dy;
                                if (ih < 0 || ih >= H) continue;
                                double* girow = giplane + static_cast<int64_t>(ih) * W - padding + dx;
                                const double* grow = gplane + static_cast<int64_t>(oh) * Wo;
                                if (stride == 1) {
                                    for (int ow = ow0; ow < ow1; ++ow) girow[ow] += wv * grow[ow];
                                } else {
                                    for (int ow = ow0; ow < ow1; ++ow)
                                        girow[static_cast<int64_t>(ow) * stride] += wv * grow[ow];
                                }
                            }
                        }
                    }
                }
            }
        }
        if (k_node >= 0) {
            double* gk = t.grad_ref(k_node).data();
            for (int co = 0; co < Co; ++co) {
                const double* gplane = g + static_cast<int64_t>(co) * Ho * Wo;
                for (int ci = 0; ci < Ci; ++ci) {
                    const double* iplane = inp + static_cast<int64_t>(ci) * H * W;
                    double* gkbase = gk + ((static_cast<int64_t>(co) * Ci + ci) * kh) * kw;
                    for (int dy = 0; dy < kh; ++dy) {
                        for (int dx = 0; dx < kw; ++dx) {
                            int ow0 = 0;
                            while (ow0 < Wo && ow0 * stride - padding + dx < 0) ++ow0;
                            int ow1 = Wo;
                            while (ow1 > ow0 && (ow1 - 1) * stride - padding + dx >= W) --ow1;
                            double acc = 0.0;
                            for (int oh = 0; oh < Ho; ++oh) {
                                const int ih = oh * stride - padding + dy;
                                if (ih < 0 || ih >= H) continue;
                                const double* irow = iplane + static_cast<int64_t>(ih) * W - padding + dx;
                                const double* grow = gplane + static_cast<int64_t>(oh) * Wo;
                                if (stride == 1) {
                                    for (int ow = ow0; ow < ow1; ++ow) acc += grow[ow] * irow[ow];
                                } else {
                                    for (int ow = ow0; ow < ow1; ++ow)
                                        acc += grow[ow] * irow[static_cast<int64_t>(ow) * stride];
                                }
                            }
                            gkbase[static_cast<int64_t>(dy) * kw + dx] += acc;
                        }
                    }
                }
            }
        }
    });
    return tp->track(std::move(out), node);
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
    if (x.ndim() != 3) throw ShapeError("add_channel_bias: input must be [C,H,W]");
    if (bias.ndim() != 1 || bias.dim(0) != x.dim(0))
        throw ShapeError("add_channel_bias: bias length must equal channel count");
    const int C = x.dim(0);
    const int64_t plane = static_cast<int64_t>(x.dim(1)) * x.dim(2);
    Tape* tp = common_tape({&x, &bias});
    Tensor out(x.shape());
    const double* xv = x.data();
    const double* bv = bias.data();
    double* ov = out.data();
    for (int c = 0; c < C; ++c) {
        const double b = bv[c];
        for (int64_t i = 0; i < plane; ++i) ov[c * plane + i] = xv[c * plane + i] + b;
    }
    if (!tp) return out;
    int xn = x.node(), bn = bias.node();
    int node = tp->push_node(out.size(), [xn, bn, C, plane](Tape& t, int self) {
        const std::vector<double>& g = *t.grad_if(self);
        if (xn >= 0) {
            auto& gx = t.grad_ref(xn);
            for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (bn >= 0) {
            auto& gb = t.grad_ref(bn);
            for (int c = 0; c < C; ++c) {
                double acc = 0.0;
                for (int64_t i = 0; i < plane; ++i) acc += g[static_cast<size_t>(c * plane + i)];
                gb[static_cast<size_t>(c)] += acc;
            }
        }
    });
    return tp->track(std::move(out), node);
}

Tensor softmax(const Tensor& x, int axis) {
    if (axis < 0 || axis >= x.ndim()) throw ShapeError("softmax: axis out of range");
    const int n = x.dim(axis);
    int64_t outer = 1;
    for (int d = 0; d < axis; ++d) outer *= x.dim(d);
    int64_t inner = 1;
    for (int d = axis + 1; d < x.ndim(); ++d) inner *= x.dim(d);
    Tape* tp = common_tape({&x});
    Tensor out(x.shape());
    const double* xv = x.data();
    double* ov = out.data();
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
            const int64_t base = o * n * inner + in;
            double mx = xv[base];
            for (int i = 1; i < n; ++i) mx = std::max(mx, xv[base + i * inner]);
            double z = 0.0;
            for (int i = 0; i < n; ++i) {
                const double e = std::exp(xv[base + i * inner] - mx);
                ov[base + i * inner] = e;
                z += e;
            }
            const double invz = 1.0 / z;
            for (int i = 0; i < n; ++i) ov[base + i * inner] *= invz;
        }
    }
    if (!tp) return out;
    int xn = x.node();
    auto os = out.storage();
    int node = tp->push_node(out.size(), [xn, n, outer, inner, os](Tape& t, int self) {
        const double* g = t.grad_if(self)->data();
        auto& gx = t.grad_ref(xn);
        const double* y = os->data();
        for (int64_t o = 0; o < outer; ++o) {
            for (int64_t in = 0; in < inner; ++in) {
                const int64_t base = o * n * inner + in;
                double dot = 0.0;
                for (int i = 0; i < n; ++i) dot += g[base + i * inner] * y[base + i * inner];
                for (int i = 0; i < n; ++i)
                    gx[static_cast<size_t>(base + i * inner)] += y[base + i * inner] * (g[base + i * inner] - dot);
            }
        }
    });
    return tp->track(std::move(out), node);
}

Tensor upsample_nearest(const Tensor& x, int factor) {
    if (x.ndim() != 3) throw ShapeError("upsample_nearest: input must be [C,H,W]");
    if (factor < 1) throw ShapeError("upsample_nearest: factor must be >= 1");
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const int Ho = H * factor, Wo = W * factor;
    Tape* tp = common_tape({&x});
    Tensor out({C, Ho, Wo});
    const double* xv = x.data();
    double* ov = out.data();
    for (int c = 0; c < C; ++c)
        for (int oh = 0; oh < Ho; ++oh) {
            const double* irow = xv + (static_cast<int64_t>(c) * H + oh / factor) * W;
            double* orow = ov + (static_cast<int64_t>(c) * Ho + oh) * Wo;
            for (int ow = 0; ow < Wo; ++ow) orow[ow] = irow[ow / factor];
        }
    if (!tp) return out;
    int xn = x.node();
    int node = tp->push_node(out.size(), [xn, C, H, W, Ho, Wo, factor](Tape& t, int self) {
        const double* g = t.grad_if(self)->data();
        auto& gx = t.grad_ref(xn);
        for (int c = 0; c < C; ++c)
            for (int oh = 0; oh < Ho; ++oh) {
                const double* grow = g + (static_cast<int64_t>(c) * Ho + oh) * Wo;
                double* gxrow = gx.data() + (static_cast<int64_t>(c) * H + oh / factor) * W;
                for (int ow = 0; ow < Wo; ++ow) gxrow[ow / factor] += grow[ow];
            }
    });
    return tp->track(std::move(out), node);
}

Tensor max_pool2d(const Tensor& x, int k) {
    if (x.ndim() != 3) throw ShapeError("max_pool2d: input must be [C,H,W]");
    if (k < 1) throw ShapeError("max_pool2d: window must be >= 1");
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    if (H % k != 0 || W % k != 0) throw ShapeError("max_pool2d: window must divide both spatial dims");
    const int Ho = H / k, Wo = W / k;
    Tape* tp = common_tape({&x});
    Tensor out({C, Ho, Wo});
    const double* xv = x.data();
    double* ov = out.data();
    std::vector<int64_t> argmax(static_cast<size_t>(out.size()));
    int64_t opos = 0;
    for (int c = 0; c < C; ++c)
        for (int oh = 0; oh < Ho; ++oh)
            for (int ow = 0; ow < Wo; ++ow, ++opos) {
                int64_t best_idx = -1;
                double best = 0.0;
                for (int dy = 0; dy < k; ++dy)
                    for (int dx = 0; dx < k; ++dx) {
                        const int64_t idx = (static_cast<int64_t>(c) * H + oh * k + dy) * W + ow * k + dx;
                        if (best_idx < 0 || xv[idx] > best) {
                            best = xv[idx];
                            best_idx = idx;
                        }
                    }
                ov[opos] = best;
                argmax[static_cast<size_t>(opos)] = best_idx;
            }
    if (!tp) return out;
    int xn = x.node();
    int node = tp->push_node(out.size(), [xn, argmax](Tape& t, int self) {
        const std::vector<double>& g = *t.grad_if(self);
        auto& gx = t.grad_ref(xn);
        for (size_t i = 0; i < argmax.size(); ++i) gx[static_cast<size_t>(argmax[i])] += g[i];
    });
    return tp->track(std::move(out), node);
}

} // namespace fuseformer
