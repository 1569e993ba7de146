#include "probcontour/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "probcontour/errors.hpp"

namespace probcontour::ad {

namespace {

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace

Tape::Node& Tape::node(Var v) {
    if (!v.valid() || v.index >= size()) throw Error("invalid tape variable");
    return nodes_[static_cast<std::size_t>(v.index)];
}

const Tape::Node& Tape::node(Var v) const {
    if (!v.valid() || v.index >= size()) throw Error("invalid tape variable");
    return nodes_[static_cast<std::size_t>(v.index)];
}

bool Tape::any_needs_grad(const std::vector<int>& parents) const {
    return std::any_of(parents.begin(), parents.end(),
                       [this](int p) { return nodes_[static_cast<std::size_t>(p)].needs_grad; });
}

Var Tape::push(Tensor value, std::vector<int> parents, std::function<void(Tape&, int)> backprop) {
    Node nd;
    nd.value = std::move(value);
    nd.needs_grad = any_needs_grad(parents);
    nd.parents = std::move(parents);
    nd.backprop = std::move(backprop);
    nodes_.push_back(std::move(nd));
    grads_valid_ = false;
    return Var{size() - 1};
}

Var Tape::leaf(Tensor value, std::string name) {
    Node nd;
    nd.value = std::move(value);
    nd.needs_grad = true;
    nd.name = std::move(name);
    nodes_.push_back(std::move(nd));
    grads_valid_ = false;
    return Var{size() - 1};
}

Var Tape::constant(Tensor value) {
    Node nd;
    nd.value = std::move(value);
    nd.needs_grad = false;
    nodes_.push_back(std::move(nd));
    grads_valid_ = false;
    return Var{size() - 1};
}

const Tensor& Tape::grad(Var v) const {
    if (!grads_valid_) throw Error("gradients not computed; call backward() first");
    return node(v).grad;
}

// -- elementwise binary -------------------------------------------------------

Var Tape::add(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) shape_fail("add", ta, tb);
    Tensor out = ta;
    for (int i = 0; i < out.size(); ++i) out[i] += tb[i];
    const int ia = a.index, ib = b.index;
    return push(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        Node& pa = t.nodes_[ia];
        Node& pb = t.nodes_[ib];
        for (int i = 0; i < g.size(); ++i) {
            if (pa.needs_grad) pa.grad[i] += g[i];
            if (pb.needs_grad) pb.grad[i] += g[i];
        }
    });
}

Var Tape::sub(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) shape_fail("sub", ta, tb);
    Tensor out = ta;
    for (int i = 0; i < out.size(); ++i) out[i] -= tb[i];
    const int ia = a.index, ib = b.index;
    return push(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        Node& pa = t.nodes_[ia];
        Node& pb = t.nodes_[ib];
        for (int i = 0; i < g.size(); ++i) {
            if (pa.needs_grad) pa.grad[i] += g[i];
            if (pb.needs_grad) pb.grad[i] -= g[i];
        }
    });
}

Var Tape::mul(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) shape_fail("mul", ta, tb);
    Tensor out = ta;
    for (int i = 0; i < out.size(); ++i) out[i] *= tb[i];
    const int ia = a.index, ib = b.index;
    return push(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        Node& pa = t.nodes_[ia];
        Node& pb = t.nodes_[ib];
        for (int i = 0; i < g.size(); ++i) {
            if (pa.needs_grad) pa.grad[i] += g[i] * pb.value[i];
            if (pb.needs_grad) pb.grad[i] += g[i] * pa.value[i];
        }
    });
}

// -- matmul -------------------------------------------------------------------

Var Tape::matmul(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    const bool vec = tb.rank() == 1;
    if (ta.rank() != 2 || (tb.rank() != 2 && !vec)) shape_fail("matmul", ta, tb);
    const int m = ta.shape[0];
    const int k = ta.shape[1];
    const int k2 = tb.shape[0];
    const int n = vec ? 1 : tb.shape[1];
    if (k != k2) shape_fail("matmul", ta, tb);

    Tensor out(vec ? std::vector<int>{m} : std::vector<int>{m, n});
    const double* A = ta.data.data();
    const double* B = tb.data.data();
    double* C = out.data.data();
    for (int i = 0; i < m; ++i) {
        for (int l = 0; l < k; ++l) {
            const double av = A[i * k + l];
            const double* Brow = B + l * n;
            double* Crow = C + i * n;
            for (int j = 0; j < n; ++j) Crow[j] += av * Brow[j];
        }
    }
    const int ia = a.index, ib = b.index;
    return push(std::move(out), {ia, ib}, [ia, ib, m, k, n](Tape& t, int self) {
        const double* G = t.nodes_[self].grad.data.data();
        Node& pa = t.nodes_[ia];
        Node& pb = t.nodes_[ib];
        if (pa.needs_grad) {
            const double* B = pb.value.data.data();
            double* dA = pa.grad.data.data();
            for (int i = 0; i < m; ++i) {
                for (int l = 0; l < k; ++l) {
                    const double* Brow = B + l * n;
                    const double* Grow = G + i * n;
                    double s = 0.0;
                    for (int j = 0; j < n; ++j) s += Grow[j] * Brow[j];
                    dA[i * k + l] += s;
                }
            }
        }
        if (pb.needs_grad) {
            const double* A = pa.value.data.data();
            double* dB = pb.grad.data.data();
            for (int i = 0; i < m; ++i) {
                for (int l = 0; l < k; ++l) {
                    const double av = A[i * k + l];
                    const double* Grow = G + i * n;
                    double* dBrow = dB + l * n;
                    for (int j = 0; j < n; ++j) dBrow[j] += av * Grow[j];
                }
            }
        }
    });
}

// -- convolution --------------------------------------------------------------

Var Tape::conv2d(Var input, Var kernel, Var bias, int padding) {
    const Tensor& tin = value(input);
    const Tensor& tk = value(kernel);
    const Tensor& tb = value(bias);
    if (tin.rank() != 3 || tk.rank() != 4) shape_fail("conv2d", tin, tk);
    const int C = tin.shape[0], H = tin.shape[1], W = tin.shape[2];
    const int O = tk.shape[0], KC = tk.shape[1], kh = tk.shape[2], kw = tk.shape[3];
    if (KC != C) shape_fail("conv2d", tin, tk);
    if (tb.rank() != 1 || tb.shape[0] != O) shape_fail("conv2d bias", tk, tb);
    if (padding < 0) throw ShapeError("conv2d: negative padding");
    const int OH = H + 2 * padding - kh + 1;
    const int OW = W + 2 * padding - kw + 1;
    if (OH < 1 || OW < 1) {
        throw ShapeError("conv2d: output collapses, input " + tin.shape_str() + " kernel " +
                         tk.shape_str() + " padding " + std::to_string(padding));
    }

    Tensor out({O, OH, OW});
    const double* in = tin.data.data();
    const double* K = tk.data.data();
    double* dst = out.data.data();
    for (int o = 0; o < O; ++o) {
        std::fill(dst + o * OH * OW, dst + (o + 1) * OH * OW, tb[o]);
    }
    const int p = padding;
    for (int o = 0; o < O; ++o) {
        for (int c = 0; c < C; ++c) {
            for (int ky = 0; ky < kh; ++ky) {
                for (int kx = 0; kx < kw; ++kx) {
                    const double w = K[((o * C + c) * kh + ky) * kw + kx];
                    const int ox0 = std::max(0, p - kx);
                    const int ox1 = std::min(OW, W + p - kx);
                    if (ox0 >= ox1) continue;
                    for (int oy = 0; oy < OH; ++oy) {
                        const int iy = oy + ky - p;
                        if (iy < 0 || iy >= H) continue;
                        const double* src = in + (c * H + iy) * W + (ox0 + kx - p);
                        double* row = dst + (o * OH + oy) * OW + ox0;
                        for (int t = 0; t < ox1 - ox0; ++t) row[t] += w * src[t];
                    }
                }
            }
        }
    }

    const int ii = input.index, ik = kernel.index, ib = bias.index;
    return push(std::move(out), {ii, ik, ib}, [ii, ik, ib, C, H, W, O, kh, kw, OH, OW, p](Tape& t, int self) {
        const double* G = t.nodes_[self].grad.data.data();
        Node& pin = t.nodes_[ii];
        Node& pk = t.nodes_[ik];
        Node& pb = t.nodes_[ib];
        if (pb.needs_grad) {
            double* dB = pb.grad.data.data();
            for (int o = 0; o < O; ++o) {
                const double* plane = G + o * OH * OW;
                double s = 0.0;
                for (int i = 0; i < OH * OW; ++i) s += plane[i];
                dB[o] += s;
            }
        }
        if (pk.needs_grad) {
            const double* in = pin.value.data.data();
            double* dK = pk.grad.data.data();
            for (int o = 0; o < O; ++o) {
                for (int c = 0; c < C; ++c) {
                    for (int ky = 0; ky < kh; ++ky) {
                        for (int kx = 0; kx < kw; ++kx) {
                            const int ox0 = std::max(0, p - kx);
                            const int ox1 = std::min(OW, W + p - kx);
                            if (ox0 >= ox1) continue;
                            double s = 0.0;
                            for (int oy = 0; oy < OH; ++oy) {
                                const int iy = oy + ky - p;
                                if (iy < 0 || iy >= H) continue;
                                const double* src = in + (c * H + iy) * W + (ox0 + kx - p);
                                const double* grow = G + (o * OH + oy) * OW + ox0;
                                for (int q = 0; q < ox1 - ox0; ++q) s += src[q] * grow[q];
                            }
                            dK[((o * C + c) * kh + ky) * kw + kx] += s;
                        }
                    }
                }
            }
        }
        if (pin.needs_grad) {
            const double* K = pk.value.data.data();
            double* dIn = pin.grad.data.data();
            for (int o = 0; o < O; ++o) {
                for (int c = 0; c < C; ++c) {
                    for (int ky = 0; ky < kh; ++ky) {
                        for (int kx = 0; kx < kw; ++kx) {
                            const double w = K[((o * C + c) * kh + ky) * kw + kx];
                            const int ox0 = std::max(0, p - kx);
                            const int ox1 = std::min(OW, W + p - kx);
                            if (ox0 >= ox1) continue;
                            for (int oy = 0; oy < OH; ++oy) {
                                const int iy = oy + ky - p;
                                if (iy < 0 || iy >= H) continue;
                                double* drow = dIn + (c * H + iy) * W + (ox0 + kx - p);
                                const double* grow = G + (o * OH + oy) * OW + ox0;
                                for (int q = 0; q < ox1 - ox0; ++q) drow[q] += w * grow[q];
                            }
                        }
                    }
                }
            }
        }
    });
}

// -- pooling ------------------------------------------------------------------

Var Tape::maxpool2(Var input) {
    const Tensor& tin = value(input);
    if (tin.rank() != 3) throw ShapeError("maxpool2: expected rank-3 input, got " + tin.shape_str());
    const int C = tin.shape[0], H = tin.shape[1], W = tin.shape[2];
    const int OH = H / 2, OW = W / 2;
    if (OH < 1 || OW < 1) {
        throw ShapeError("maxpool2: spatial collapse on input " + tin.shape_str());
    }
    Tensor out({C, OH, OW});
    std::vector<int> argmax(static_cast<std::size_t>(C) * OH * OW);
    const double* in = tin.data.data();
    for (int c = 0; c < C; ++c) {
        for (int oy = 0; oy < OH; ++oy) {
            for (int ox = 0; ox < OW; ++ox) {
                int best = (c * H + 2 * oy) * W + 2 * ox;
                double bv = in[best];
                const int cand[3] = {(c * H + 2 * oy) * W + 2 * ox + 1,
                                     (c * H + 2 * oy + 1) * W + 2 * ox,
                                     (c * H + 2 * oy + 1) * W + 2 * ox + 1};
                for (const int idx : cand) {
                    if (in[idx] > bv) {
                        bv = in[idx];
                        best = idx;
                    }
                }
                const int oi = (c * OH + oy) * OW + ox;
                out[oi] = bv;
                argmax[static_cast<std::size_t>(oi)] = best;
            }
        }
    }
    const int ii = input.index;
    return push(std::move(out), {ii}, [ii, argmax = std::move(argmax)](Tape& t, int self) {
        Node& pin = t.nodes_[ii];
        if (!pin.needs_grad) return;
        const Tensor& g = t.nodes_[self].grad;
        for (int i = 0; i < g.size(); ++i) pin.grad[argmax[static_cast<std::size_t>(i)]] += g[i];
    });
}

// -- unary maps ---------------------------------------------------------------

Var Tape::map_unary(Var a, const char* op_name, double (*fwd)(double),
                    double (*dfd)(double, double)) {
    (void)op_name;
    const Tensor& ta = value(a);
    Tensor out = ta;
    for (int i = 0; i < out.size(); ++i) out[i] = fwd(out[i]);
    const int ia = a.index;
    return push(std::move(out), {ia}, [ia, dfd](Tape& t, int self) {
        Node& pa = t.nodes_[ia];
        if (!pa.needs_grad) return;
        const Node& nd = t.nodes_[self];
        for (int i = 0; i < nd.grad.size(); ++i) {
            pa.grad[i] += nd.grad[i] * dfd(pa.value[i], nd.value[i]);
        }
    });
}

Var Tape::relu(Var a) {
    return map_unary(
        a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
        [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Var Tape::exp(Var a) {
    return map_unary(
        a, "exp", [](double x) { return std::exp(x); }, [](double, double out) { return out; });
}

Var Tape::log(Var a) {
    return map_unary(
        a, "log", [](double x) { return std::log(x); }, [](double in, double) { return 1.0 / in; });
}

Var Tape::square(Var a) {
    return map_unary(
        a, "square", [](double x) { return x * x; }, [](double in, double) { return 2.0 * in; });
}

// -- reductions ---------------------------------------------------------------

Var Tape::sum(Var a) {
    const Tensor& ta = value(a);
    double s = 0.0;
    for (int i = 0; i < ta.size(); ++i) s += ta[i];
    const int ia = a.index;
    return push(Tensor::scalar(s), {ia}, [ia](Tape& t, int self) {
        Node& pa = t.nodes_[ia];
        if (!pa.needs_grad) return;
        const double g = t.nodes_[self].grad[0];
        for (int i = 0; i < pa.grad.size(); ++i) pa.grad[i] += g;
    });
}

Var Tape::mean(Var a) {
    const Tensor& ta = value(a);
    if (ta.size() == 0) throw ShapeError("mean: empty tensor");
    const double inv = 1.0 / ta.size();
    double s = 0.0;
    for (int i = 0; i < ta.size(); ++i) s += ta[i];
    const int ia = a.index;
    return push(Tensor::scalar(s * inv), {ia}, [ia, inv](Tape& t, int self) {
        Node& pa = t.nodes_[ia];
        if (!pa.needs_grad) return;
        const double g = t.nodes_[self].grad[0] * inv;
        for (int i = 0; i < pa.grad.size(); ++i) pa.grad[i] += g;
    });
}

// -- broadcasting and reshaping -------------------------------------------------

Var Tape::add_bias(Var a, Var bias) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(bias);
    if (tb.rank() != 1 || ta.rank() < 1 || ta.shape.back() != tb.shape[0]) {
        shape_fail("add_bias", ta, tb);
    }
    const int c = tb.shape[0];
    const int rows = ta.size() / c;
    Tensor out = ta;
    for (int r = 0; r < rows; ++r) {
        for (int j = 0; j < c; ++j) out[r * c + j] += tb[j];
    }
    const int ia = a.index, ib = bias.index;
    return push(std::move(out), {ia, ib}, [ia, ib, rows, c](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        Node& pa = t.nodes_[ia];
        Node& pb = t.nodes_[ib];
        if (pa.needs_grad) {
            for (int i = 0; i < g.size(); ++i) pa.grad[i] += g[i];
        }
        if (pb.needs_grad) {
            for (int r = 0; r < rows; ++r) {
                for (int j = 0; j < c; ++j) pb.grad[j] += g[r * c + j];
            }
        }
    });
}

Var Tape::scale(Var a, double cfac) {
    const Tensor& ta = value(a);
    Tensor out = ta;
    for (int i = 0; i < out.size(); ++i) out[i] *= cfac;
    const int ia = a.index;
    return push(std::move(out), {ia}, [ia, cfac](Tape& t, int self) {
        Node& pa = t.nodes_[ia];
        if (!pa.needs_grad) return;
        const Tensor& g = t.nodes_[self].grad;
        for (int i = 0; i < g.size(); ++i) pa.grad[i] += cfac * g[i];
    });
}

Var Tape::add_const(Var a, double cval) {
    const Tensor& ta = value(a);
    Tensor out = ta;
    for (int i = 0; i < out.size(); ++i) out[i] += cval;
    const int ia = a.index;
    return push(std::move(out), {ia}, [ia](Tape& t, int self) {
        Node& pa = t.nodes_[ia];
        if (!pa.needs_grad) return;
        const Tensor& g = t.nodes_[self].grad;
        for (int i = 0; i < g.size(); ++i) pa.grad[i] += g[i];
    });
}

Var Tape::clamp(Var a, double lo, double hi) {
    const Tensor& ta = value(a);
    Tensor out = ta;
    for (int i = 0; i < out.size(); ++i) out[i] = std::min(std::max(out[i], lo), hi);
    const int ia = a.index;
    return push(std::move(out), {ia}, [ia, lo, hi](Tape& t, int self) {
        Node& pa = t.nodes_[ia];
        if (!pa.needs_grad) return;
        const Tensor& g = t.nodes_[self].grad;
        for (int i = 0; i < g.size(); ++i) {
            const double x = pa.value[i];
            if (x >= lo && x <= hi) pa.grad[i] += g[i];
        }
    });
}

Var Tape::reshape(Var a, std::vector<int> new_shape) {
    const Tensor& ta = value(a);
    if (shape_product(new_shape) != ta.size()) {
        throw ShapeError("reshape: cannot view " + ta.shape_str() + " as " +
                         shape_to_string(new_shape));
    }
    Tensor out(std::move(new_shape), ta.data);
    const int ia = a.index;
    return push(std::move(out), {ia}, [ia](Tape& t, int self) {
        Node& pa = t.nodes_[ia];
        if (!pa.needs_grad) return;
        const Tensor& g = t.nodes_[self].grad;
        for (int i = 0; i < g.size(); ++i) pa.grad[i] += g[i];
    });
}

Var Tape::slice(Var a, int begin, int len) {
    const Tensor& ta = value(a);
    if (ta.rank() != 1 || begin < 0 || len < 0 || begin + len > ta.shape[0]) {
        throw ShapeError("slice: range [" + std::to_string(begin) + "," +
                         std::to_string(begin + len) + ") out of bounds for " + ta.shape_str());
    }
    Tensor out({len});
    for (int i = 0; i < len; ++i) out[i] = ta[begin + i];
    const int ia = a.index;
    return push(std::move(out), {ia}, [ia, begin](Tape& t, int self) {
        Node& pa = t.nodes_[ia];
        if (!pa.needs_grad) return;
        const Tensor& g = t.nodes_[self].grad;
        for (int i = 0; i < g.size(); ++i) pa.grad[begin + i] += g[i];
    });
}

Var Tape::tile_pair(Var pair, int copies) {
    const Tensor& tp = value(pair);
    if (tp.rank() != 1 || tp.shape[0] != 2) {
        throw ShapeError("tile_pair: expected shape [2], got " + tp.shape_str());
    }
    Tensor out({2 * copies});
    for (int i = 0; i < copies; ++i) {
        out[2 * i] = tp[0];
        out[2 * i + 1] = tp[1];
    }
    const int ip = pair.index;
    return push(std::move(out), {ip}, [ip, copies](Tape& t, int self) {
        Node& pp = t.nodes_[ip];
        if (!pp.needs_grad) return;
        const Tensor& g = t.nodes_[self].grad;
        double sx = 0.0, sy = 0.0;
        for (int i = 0; i < copies; ++i) {
            sx += g[2 * i];
            sy += g[2 * i + 1];
        }
        pp.grad[0] += sx;
        pp.grad[1] += sy;
    });
}

Var Tape::pack_scalars(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("pack_scalars: empty input");
    Tensor out({static_cast<int>(xs.size())});
    std::vector<int> parents;
    parents.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const Tensor& tv = value(xs[i]);
        if (!tv.is_scalar()) {
            throw ShapeError("pack_scalars: element " + std::to_string(i) + " has shape " +
                             tv.shape_str());
        }
        out[static_cast<int>(i)] = tv[0];
        parents.push_back(xs[i].index);
    }
    return push(std::move(out), std::move(parents), [](Tape& t, int self) {
        const Node& nd = t.nodes_[self];
        for (std::size_t i = 0; i < nd.parents.size(); ++i) {
            Node& p = t.nodes_[static_cast<std::size_t>(nd.parents[i])];
            if (p.needs_grad) p.grad[0] += nd.grad[static_cast<int>(i)];
        }
    });
}

Var Tape::logsumexp(Var a) {
    const Tensor& ta = value(a);
    if (ta.rank() != 1 || ta.size() == 0) {
        throw ShapeError("logsumexp: expected nonempty vector, got " + ta.shape_str());
    }
    // Subtracting the max as a constant keeps exp() in range; the gradient of
    // the composition is the softmax, exactly as for the unshifted form.
    const double m = *std::max_element(ta.data.begin(), ta.data.end());
    return add_const(log(sum(exp(add_const(a, -m)))), m);
}

// -- backward -----------------------------------------------------------------

void Tape::backward(Var root) {
    if (nodes_.empty()) throw Error("backward: empty tape");
    const Node& r = node(root);
    if (!r.value.is_scalar()) {
        throw ShapeError("backward: root must be a scalar, got shape " + r.value.shape_str());
    }
    for (auto& nd : nodes_) {
        nd.grad = Tensor(nd.value.shape);
    }
    nodes_[static_cast<std::size_t>(root.index)].grad[0] = 1.0;
    for (int i = root.index; i >= 0; --i) {
        Node& nd = nodes_[static_cast<std::size_t>(i)];
        if (nd.backprop && nd.needs_grad) nd.backprop(*this, i);
    }
    grads_valid_ = true;
}

}  // namespace probcontour::ad
