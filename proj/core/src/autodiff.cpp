#include "m2gan/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace m2gan {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

bool any_requires_grad(const std::vector<Var>& parents) {
    for (const auto& p : parents) {
        if (p.requires_grad()) return true;
    }
    return false;
}

// Elementwise op where the local derivative depends only on the input value.
template <typename FwdFn, typename DerivFn>
Var unary_pointwise(const Var& a, FwdFn fwd, DerivFn deriv) {
    Tensor out(a.value().shape());
    const Tensor& x = a.value();
    for (std::int64_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
    return make_op(std::move(out), {a}, [deriv](AdNode& self) {
        AdNode& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        const Tensor& x = p.value;
        for (std::int64_t i = 0; i < x.size(); ++i) g[i] += self.grad[i] * deriv(x[i]);
    });
}

int conv_out_dim(int in, int k, int stride, int dilation) {
    return (in - (k - 1) * dilation - 1) / stride + 1;
}

// Gathers conv patches into a row-major (OH*OW) x (KH*KW*IC) matrix.
void im2col(const Tensor& x, int kh, int kw, int stride, int dilation, std::vector<double>& col) {
    const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
    const int oh = conv_out_dim(h, kh, stride, dilation);
    const int ow = conv_out_dim(w, kw, stride, dilation);
    col.resize(static_cast<size_t>(oh) * ow * kh * kw * c);
    const double* src = x.data();
    double* dst = col.data();
    for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j) {
            for (int a = 0; a < kh; ++a) {
                const int si = i * stride + a * dilation;
                const double* row = src + (static_cast<std::int64_t>(si) * w + j * stride) * c;
                for (int b = 0; b < kw; ++b) {
                    std::copy(row, row + c, dst);
                    row += static_cast<std::int64_t>(dilation) * c;
                    dst += c;
                }
            }
        }
    }
}

}  // namespace

Var Var::leaf(Tensor value, bool requires_grad) {
    auto n = std::make_shared<AdNode>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
}

Var Var::detach() const { return Var::leaf(node_->value, false); }

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(AdNode&)> backward_fn) {
    auto n = std::make_shared<AdNode>();
    n->value = std::move(value);
    n->requires_grad = any_requires_grad(parents);
    if (n->requires_grad) {
        n->parents.reserve(parents.size());
        for (auto& p : parents) n->parents.push_back(p.node());
        n->backward_fn = std::move(backward_fn);
    }
    return Var(n);
}

void backward(const Var& root) {
    if (!root.defined() || root.value().size() != 1) {
        throw PreconditionError("backward: root must be a defined scalar");
    }
    if (!root.requires_grad()) return;

    // Iterative post-order DFS; nodes come out children-before-parents,
    // so iterating the list forward visits each node after all its consumers.
    std::vector<AdNode*> order;
    std::unordered_set<AdNode*> seen;
    struct Frame {
        AdNode* node;
        size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({root.raw(), 0});
    seen.insert(root.raw());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            AdNode* p = f.node->parents[f.next_parent++].get();
            if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }
    std::reverse(order.begin(), order.end());

    root.raw()->ensure_grad()[0] = 1.0;
    for (AdNode* n : order) {
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

// ---------------- elementwise ----------------

Var add(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return make_op(std::move(out), {a, b}, [](AdNode& self) {
        for (int k = 0; k < 2; ++k) {
            AdNode& p = *self.parents[k];
            if (p.requires_grad) p.ensure_grad().add_scaled(self.grad, 1.0);
        }
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "sub");
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return make_op(std::move(out), {a, b}, [](AdNode& self) {
        if (self.parents[0]->requires_grad) self.parents[0]->ensure_grad().add_scaled(self.grad, 1.0);
        if (self.parents[1]->requires_grad) self.parents[1]->ensure_grad().add_scaled(self.grad, -1.0);
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "mul");
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return make_op(std::move(out), {a, b}, [](AdNode& self) {
        AdNode& pa = *self.parents[0];
        AdNode& pb = *self.parents[1];
        if (pa.requires_grad) {
            Tensor& g = pa.ensure_grad();
            for (std::int64_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            Tensor& g = pb.ensure_grad();
            for (std::int64_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
        }
    });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double s) {
    Tensor out = a.value();
    out.scale(s);
    return make_op(std::move(out), {a}, [s](AdNode& self) {
        if (self.parents[0]->requires_grad) self.parents[0]->ensure_grad().add_scaled(self.grad, s);
    });
}

Var add_const(const Var& a, double c) {
    Tensor out = a.value();
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] += c;
    return make_op(std::move(out), {a}, [](AdNode& self) {
        if (self.parents[0]->requires_grad) self.parents[0]->ensure_grad().add_scaled(self.grad, 1.0);
    });
}

Var vabs(const Var& a) {
    return unary_pointwise(
        a, [](double x) { return std::fabs(x); },
        [](double x) { return x >= 0.0 ? 1.0 : -1.0; });
}

Var vlog(const Var& a) {
    return unary_pointwise(
        a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Var sigmoid(const Var& a) {
    Tensor out(a.value().shape());
    const Tensor& x = a.value();
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const double v = x[i];
        out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    return make_op(std::move(out), {a}, [](AdNode& self) {
        AdNode& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        for (std::int64_t i = 0; i < g.size(); ++i) {
            const double y = self.value[i];
            g[i] += self.grad[i] * y * (1.0 - y);
        }
    });
}

Var vtanh(const Var& a) {
    Tensor out(a.value().shape());
    const Tensor& x = a.value();
    for (std::int64_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
    return make_op(std::move(out), {a}, [](AdNode& self) {
        AdNode& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        for (std::int64_t i = 0; i < g.size(); ++i) {
            const double y = self.value[i];
            g[i] += self.grad[i] * (1.0 - y * y);
        }
    });
}

Var softplus(const Var& a) {
    return unary_pointwise(
        a,
        [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); },
        [](double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); });
}

Var leaky_relu(const Var& a, double negative_slope) {
    return unary_pointwise(
        a, [negative_slope](double x) { return x >= 0.0 ? x : negative_slope * x; },
        [negative_slope](double x) { return x >= 0.0 ? 1.0 : negative_slope; });
}

Var clamp01(const Var& a) {
    // Gradient passes through the closed interval [0,1] so an identity
    // initialization keeps boundary pixels trainable.
    return unary_pointwise(
        a, [](double x) { return std::clamp(x, 0.0, 1.0); },
        [](double x) { return (x >= 0.0 && x <= 1.0) ? 1.0 : 0.0; });
}

// ---------------- reductions ----------------

Var sum(const Var& a) {
    Tensor out = Tensor::scalar(a.value().sum());
    return make_op(std::move(out), {a}, [](AdNode& self) {
        AdNode& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        const double go = self.grad[0];
        for (std::int64_t i = 0; i < g.size(); ++i) g[i] += go;
    });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var stack_scalars(const std::vector<Var>& scalars) {
    if (scalars.empty()) throw PreconditionError("stack_scalars: empty list");
    Tensor out({static_cast<int>(scalars.size())});
    for (size_t i = 0; i < scalars.size(); ++i) {
        if (scalars[i].value().size() != 1) throw PreconditionError("stack_scalars: non-scalar element");
        out[static_cast<std::int64_t>(i)] = scalars[i].value()[0];
    }
    return make_op(std::move(out), scalars, [](AdNode& self) {
        for (size_t i = 0; i < self.parents.size(); ++i) {
            AdNode& p = *self.parents[i];
            if (p.requires_grad) p.ensure_grad()[0] += self.grad[static_cast<std::int64_t>(i)];
        }
    });
}

Var mean_of(const std::vector<Var>& scalars) { return mean(stack_scalars(scalars)); }

// ---------------- spatial ----------------

Var concat_channels(const std::vector<Var>& parts) {
    if (parts.empty()) throw PreconditionError("concat_channels: empty list");
    const int h = parts[0].value().dim(0), w = parts[0].value().dim(1);
    int total_c = 0;
    for (const auto& p : parts) {
        if (p.value().rank() != 3 || p.value().dim(0) != h || p.value().dim(1) != w) {
            throw PreconditionError("concat_channels: spatial dims differ");
        }
        total_c += p.value().dim(2);
    }
    Tensor out({h, w, total_c});
    std::vector<int> offsets(parts.size());
    int off = 0;
    for (size_t k = 0; k < parts.size(); ++k) {
        offsets[k] = off;
        const Tensor& src = parts[k].value();
        const int c = src.dim(2);
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                const double* s = src.data() + (static_cast<std::int64_t>(i) * w + j) * c;
                double* d = out.data() + (static_cast<std::int64_t>(i) * w + j) * total_c + off;
                std::copy(s, s + c, d);
            }
        }
        off += c;
    }
    return make_op(std::move(out), parts, [h, w, total_c, offsets](AdNode& self) {
        for (size_t k = 0; k < self.parents.size(); ++k) {
            AdNode& p = *self.parents[k];
            if (!p.requires_grad) continue;
            Tensor& g = p.ensure_grad();
            const int c = p.value.dim(2);
            for (int i = 0; i < h; ++i) {
                for (int j = 0; j < w; ++j) {
                    const double* s = self.grad.data() + (static_cast<std::int64_t>(i) * w + j) * total_c + offsets[k];
                    double* d = g.data() + (static_cast<std::int64_t>(i) * w + j) * c;
                    for (int cc = 0; cc < c; ++cc) d[cc] += s[cc];
                }
            }
        }
    });
}

Var slice_channels(const Var& a, int c_begin, int c_end) {
    const Tensor& x = a.value();
    if (x.rank() != 3 || c_begin < 0 || c_end > x.dim(2) || c_begin >= c_end) {
        throw PreconditionError(msg("slice_channels: bad range [", c_begin, ", ", c_end, ") for ", x.shape_string()));
    }
    const int h = x.dim(0), w = x.dim(1), c = x.dim(2), oc = c_end - c_begin;
    Tensor out({h, w, oc});
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const double* s = x.data() + (static_cast<std::int64_t>(i) * w + j) * c + c_begin;
            double* d = out.data() + (static_cast<std::int64_t>(i) * w + j) * oc;
            std::copy(s, s + oc, d);
        }
    }
    return make_op(std::move(out), {a}, [h, w, c, oc, c_begin](AdNode& self) {
        AdNode& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                const double* s = self.grad.data() + (static_cast<std::int64_t>(i) * w + j) * oc;
                double* d = g.data() + (static_cast<std::int64_t>(i) * w + j) * c + c_begin;
                for (int cc = 0; cc < oc; ++cc) d[cc] += s[cc];
            }
        }
    });
}

namespace {
inline int reflect_index(int t, int n) { return t < 0 ? -t : (t >= n ? 2 * n - 2 - t : t); }
}  // namespace

Var reflect_pad(const Var& a, int pad) {
    const Tensor& x = a.value();
    if (x.rank() != 3) throw PreconditionError("reflect_pad: expected {H,W,C}");
    const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
    if (pad < 0 || pad > h - 1 || pad > w - 1) {
        throw PreconditionError(msg("reflect_pad: pad ", pad, " invalid for ", x.shape_string()));
    }
    if (pad == 0) return a;
    Tensor out({h + 2 * pad, w + 2 * pad, c});
    for (int i = 0; i < h + 2 * pad; ++i) {
        const int si = reflect_index(i - pad, h);
        for (int j = 0; j < w + 2 * pad; ++j) {
            const int sj = reflect_index(j - pad, w);
            const double* s = x.data() + (static_cast<std::int64_t>(si) * w + sj) * c;
            double* d = out.data() + (static_cast<std::int64_t>(i) * (w + 2 * pad) + j) * c;
            std::copy(s, s + c, d);
        }
    }
    return make_op(std::move(out), {a}, [h, w, c, pad](AdNode& self) {
        AdNode& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        for (int i = 0; i < h + 2 * pad; ++i) {
            const int si = reflect_index(i - pad, h);
            for (int j = 0; j < w + 2 * pad; ++j) {
                const int sj = reflect_index(j - pad, w);
                const double* s = self.grad.data() + (static_cast<std::int64_t>(i) * (w + 2 * pad) + j) * c;
                double* d = g.data() + (static_cast<std::int64_t>(si) * w + sj) * c;
                for (int cc = 0; cc < c; ++cc) d[cc] += s[cc];
            }
        }
    });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int dilation) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    const Tensor& bv = b.value();
    if (xv.rank() != 3 || wv.rank() != 4) throw PreconditionError("conv2d: expected x {H,W,C}, w {OC,KH,KW,IC}");
    const int h = xv.dim(0), width = xv.dim(1), ic = xv.dim(2);
    const int oc = wv.dim(0), kh = wv.dim(1), kw = wv.dim(2);
    if (wv.dim(3) != ic) {
        throw ConfigError(msg("conv2d: kernel expects ", wv.dim(3), " input channels, got ", ic));
    }
    if (bv.rank() != 1 || bv.dim(0) != oc) throw ConfigError("conv2d: bias shape must be {OC}");
    if (stride < 1 || dilation < 1) throw ConfigError("conv2d: stride and dilation must be >= 1");
    const int oh = conv_out_dim(h, kh, stride, dilation);
    const int ow = conv_out_dim(width, kw, stride, dilation);
    if (oh < 1 || ow < 1) {
        throw PreconditionError(msg("conv2d: kernel ", kh, "x", kw, " dilation ", dilation,
                                    " does not fit input ", xv.shape_string()));
    }

    const std::int64_t patches = static_cast<std::int64_t>(oh) * ow;
    const std::int64_t k = static_cast<std::int64_t>(kh) * kw * ic;
    std::vector<double> col;
    im2col(xv, kh, kw, stride, dilation, col);

    Tensor out({oh, ow, oc});
    {
        CMapRM col_m(col.data(), patches, k);
        CMapRM w_m(wv.data(), oc, k);
        MapRM out_m(out.data(), patches, oc);
        out_m.noalias() = col_m * w_m.transpose();
        for (std::int64_t p = 0; p < patches; ++p) {
            double* row = out.data() + p * oc;
            for (int c = 0; c < oc; ++c) row[c] += bv[c];
        }
    }

    // The im2col buffer is rebuilt in backward rather than captured: the
    // column matrix is by far the largest intermediate in the graph.
    return make_op(std::move(out), {x, w, b}, [stride, dilation, oh, ow, kh, kw, ic, oc, width](AdNode& self) {
        AdNode& px = *self.parents[0];
        AdNode& pw = *self.parents[1];
        AdNode& pb = *self.parents[2];
        const std::int64_t patches = static_cast<std::int64_t>(oh) * ow;
        const std::int64_t k = static_cast<std::int64_t>(kh) * kw * ic;
        CMapRM gy(self.grad.data(), patches, oc);

        if (pb.requires_grad) {
            Tensor& gb = pb.ensure_grad();
            for (std::int64_t p = 0; p < patches; ++p) {
                const double* row = self.grad.data() + p * oc;
                for (int c = 0; c < oc; ++c) gb[c] += row[c];
            }
        }
        if (pw.requires_grad) {
            std::vector<double> col;
            im2col(px.value, kh, kw, stride, dilation, col);
            CMapRM col_m(col.data(), patches, k);
            MapRM gw(pw.ensure_grad().data(), oc, k);
            gw.noalias() += gy.transpose() * col_m;
        }
        if (px.requires_grad) {
            std::vector<double> gcol(static_cast<size_t>(patches) * k);
            {
                CMapRM w_m(pw.value.data(), oc, k);
                MapRM gcol_m(gcol.data(), patches, k);
                gcol_m.noalias() = gy * w_m;
            }
            Tensor& gx = px.ensure_grad();
            const double* src = gcol.data();
            for (int i = 0; i < oh; ++i) {
                for (int j = 0; j < ow; ++j) {
                    for (int a = 0; a < kh; ++a) {
                        const int si = i * stride + a * dilation;
                        double* row = gx.data() + (static_cast<std::int64_t>(si) * width + j * stride) * ic;
                        for (int bb = 0; bb < kw; ++bb) {
                            for (int cc = 0; cc < ic; ++cc) row[cc] += src[cc];
                            row += static_cast<std::int64_t>(dilation) * ic;
                            src += ic;
                        }
                    }
                }
            }
        }
    });
}

Var avg_pool2(const Var& a) {
    const Tensor& x = a.value();
    if (x.rank() != 3) throw PreconditionError("avg_pool2: expected {H,W,C}");
    const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
    if (h % 2 != 0 || w % 2 != 0) {
        throw PreconditionError(msg("avg_pool2: spatial dims must be even, got ", x.shape_string()));
    }
    Tensor out({h / 2, w / 2, c});
    for (int i = 0; i < h / 2; ++i) {
        for (int j = 0; j < w / 2; ++j) {
            for (int cc = 0; cc < c; ++cc) {
                out.at(i, j, cc) = 0.25 * (x.at(2 * i, 2 * j, cc) + x.at(2 * i, 2 * j + 1, cc) +
                                           x.at(2 * i + 1, 2 * j, cc) + x.at(2 * i + 1, 2 * j + 1, cc));
            }
        }
    }
    return make_op(std::move(out), {a}, [h, w, c](AdNode& self) {
        AdNode& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        for (int i = 0; i < h / 2; ++i) {
            for (int j = 0; j < w / 2; ++j) {
                for (int cc = 0; cc < c; ++cc) {
                    const double go = 0.25 * self.grad.at(i, j, cc);
                    g.at(2 * i, 2 * j, cc) += go;
                    g.at(2 * i, 2 * j + 1, cc) += go;
                    g.at(2 * i + 1, 2 * j, cc) += go;
                    g.at(2 * i + 1, 2 * j + 1, cc) += go;
                }
            }
        }
    });
}

Var upsample_nearest2(const Var& a) {
    const Tensor& x = a.value();
    if (x.rank() != 3) throw PreconditionError("upsample_nearest2: expected {H,W,C}");
    const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
    Tensor out({2 * h, 2 * w, c});
    for (int i = 0; i < 2 * h; ++i) {
        for (int j = 0; j < 2 * w; ++j) {
            const double* s = x.data() + (static_cast<std::int64_t>(i / 2) * w + j / 2) * c;
            double* d = out.data() + (static_cast<std::int64_t>(i) * 2 * w + j) * c;
            std::copy(s, s + c, d);
        }
    }
    return make_op(std::move(out), {a}, [h, w, c](AdNode& self) {
        AdNode& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        for (int i = 0; i < 2 * h; ++i) {
            for (int j = 0; j < 2 * w; ++j) {
                const double* s = self.grad.data() + (static_cast<std::int64_t>(i) * 2 * w + j) * c;
                double* d = g.data() + (static_cast<std::int64_t>(i / 2) * w + j / 2) * c;
                for (int cc = 0; cc < c; ++cc) d[cc] += s[cc];
            }
        }
    });
}

Var global_avg_pool(const Var& a) {
    const Tensor& x = a.value();
    if (x.rank() != 3) throw PreconditionError("global_avg_pool: expected {H,W,C}");
    const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
    Tensor out({c});
    const double inv = 1.0 / (static_cast<double>(h) * w);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const double* s = x.data() + (static_cast<std::int64_t>(i) * w + j) * c;
            for (int cc = 0; cc < c; ++cc) out[cc] += s[cc];
        }
    }
    out.scale(inv);
    return make_op(std::move(out), {a}, [h, w, c, inv](AdNode& self) {
        AdNode& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                double* d = g.data() + (static_cast<std::int64_t>(i) * w + j) * c;
                for (int cc = 0; cc < c; ++cc) d[cc] += self.grad[cc] * inv;
            }
        }
    });
}

Var broadcast_spatial(const Var& v, int h, int w) {
    const Tensor& x = v.value();
    if (x.rank() != 1) throw PreconditionError("broadcast_spatial: expected {C}");
    const int c = x.dim(0);
    Tensor out({h, w, c});
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            double* d = out.data() + (static_cast<std::int64_t>(i) * w + j) * c;
            std::copy(x.data(), x.data() + c, d);
        }
    }
    return make_op(std::move(out), {v}, [h, w, c](AdNode& self) {
        AdNode& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                const double* s = self.grad.data() + (static_cast<std::int64_t>(i) * w + j) * c;
                for (int cc = 0; cc < c; ++cc) g[cc] += s[cc];
            }
        }
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    const Tensor& bv = b.value();
    if (xv.rank() != 1 || wv.rank() != 2 || bv.rank() != 1) {
        throw PreconditionError("linear: expected x {in}, w {out,in}, b {out}");
    }
    const int in = xv.dim(0), out_dim = wv.dim(0);
    if (wv.dim(1) != in || bv.dim(0) != out_dim) {
        throw ConfigError(msg("linear: weight ", wv.shape_string(), " incompatible with input ", xv.shape_string()));
    }
    Tensor out({out_dim});
    for (int o = 0; o < out_dim; ++o) {
        const double* row = wv.data() + static_cast<std::int64_t>(o) * in;
        double acc = bv[o];
        for (int i = 0; i < in; ++i) acc += row[i] * xv[i];
        out[o] = acc;
    }
    return make_op(std::move(out), {x, w, b}, [in, out_dim](AdNode& self) {
        AdNode& px = *self.parents[0];
        AdNode& pw = *self.parents[1];
        AdNode& pb = *self.parents[2];
        if (pb.requires_grad) {
            Tensor& g = pb.ensure_grad();
            for (int o = 0; o < out_dim; ++o) g[o] += self.grad[o];
        }
        if (pw.requires_grad) {
            Tensor& g = pw.ensure_grad();
            for (int o = 0; o < out_dim; ++o) {
                double* row = g.data() + static_cast<std::int64_t>(o) * in;
                const double go = self.grad[o];
                for (int i = 0; i < in; ++i) row[i] += go * px.value[i];
            }
        }
        if (px.requires_grad) {
            Tensor& g = px.ensure_grad();
            for (int o = 0; o < out_dim; ++o) {
                const double* row = pw.value.data() + static_cast<std::int64_t>(o) * in;
                const double go = self.grad[o];
                for (int i = 0; i < in; ++i) g[i] += go * row[i];
            }
        }
    });
}

Var channel_softmax(const Var& a, double tau) {
    const Tensor& x = a.value();
    if (x.rank() != 3) throw PreconditionError("channel_softmax: expected {H,W,C}");
    if (tau <= 0.0) throw ConfigError("channel_softmax: tau must be positive");
    const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
    Tensor out({h, w, c});
    for (std::int64_t p = 0; p < static_cast<std::int64_t>(h) * w; ++p) {
        const double* s = x.data() + p * c;
        double* d = out.data() + p * c;
        double hi = s[0];
        for (int cc = 1; cc < c; ++cc) hi = std::max(hi, s[cc]);
        double z = 0.0;
        for (int cc = 0; cc < c; ++cc) {
            d[cc] = std::exp((s[cc] - hi) / tau);
            z += d[cc];
        }
        for (int cc = 0; cc < c; ++cc) d[cc] /= z;
    }
    return make_op(std::move(out), {a}, [h, w, c, tau](AdNode& self) {
        AdNode& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        for (std::int64_t q = 0; q < static_cast<std::int64_t>(h) * w; ++q) {
            const double* y = self.value.data() + q * c;
            const double* go = self.grad.data() + q * c;
            double* gi = g.data() + q * c;
            double dot = 0.0;
            for (int cc = 0; cc < c; ++cc) dot += go[cc] * y[cc];
            for (int cc = 0; cc < c; ++cc) gi[cc] += y[cc] * (go[cc] - dot) / tau;
        }
    });
}

}  // namespace m2gan
