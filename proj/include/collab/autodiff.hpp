#pragma once

#include <algorithm>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "collab/param_store.hpp"
#include "collab/tensor.hpp"

namespace collab {

// Handle into a Tape.
struct Value {
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::size_t idx = npos;
    bool valid() const { return idx != npos; }
};

// Reverse-mode tape. Each forward op records one node; backward() walks the
// recorded order in reverse and finally accumulates into bound ParamStores.
// Models here are tiny and fixed-topology, so there is no graph optimizer.
class Tape {
public:
    Value input(Tensor t) { return push(std::move(t), {}, nullptr); }

    Value param(ParamStore& ps, const std::string& name) {
        Value v = push(ps.value(name), {}, nullptr);
        nodes_[v.idx].store = &ps;
        nodes_[v.idx].pname = name;
        return v;
    }

    const Tensor& value(Value v) const { return node(v).val; }

    // Gradient of the last backward() with respect to node v.
    const Tensor& grad(Value v) const {
        if (grads_.size() != nodes_.size()) throw StateError("grad requested before backward");
        return grads_[check(v)];
    }

    std::size_t node_count() const { return nodes_.size(); }

    // ---- ops ----

    // y = x W + b, x: [B x in], W: [in x out], b: [out]
    Value linear(Value xv, Value wv, Value bv) {
        const Tensor& x = value(xv);
        const Tensor& w = value(wv);
        const Tensor& b = value(bv);
        if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1 || x.extent(1) != w.extent(0) ||
            w.extent(1) != b.extent(0))
            throw DimensionError("linear: x " + shape_str(x.shape()) + ", W " +
                                 shape_str(w.shape()) + ", b " + shape_str(b.shape()));
        const std::size_t B = x.extent(0), in = x.extent(1), out = w.extent(1);
        Tensor y({B, out});
        for (std::size_t r = 0; r < B; ++r)
            for (std::size_t c = 0; c < out; ++c) {
                double s = b[c];
                for (std::size_t i = 0; i < in; ++i) s += x[r * in + i] * w[i * out + c];
                y[r * out + c] = s;
            }
        return push(std::move(y), {xv.idx, wv.idx, bv.idx},
                    [B, in, out](Tape& t, const Node& n, const Tensor& g) {
                        const Tensor& x = t.nodes_[n.ins[0]].val;
                        const Tensor& w = t.nodes_[n.ins[1]].val;
                        Tensor& dx = t.grads_[n.ins[0]];
                        Tensor& dw = t.grads_[n.ins[1]];
                        Tensor& db = t.grads_[n.ins[2]];
                        for (std::size_t r = 0; r < B; ++r)
                            for (std::size_t c = 0; c < out; ++c) {
                                const double gv = g[r * out + c];
                                db[c] += gv;
                                for (std::size_t i = 0; i < in; ++i) {
                                    dx[r * in + i] += gv * w[i * out + c];
                                    dw[i * out + c] += gv * x[r * in + i];
                                }
                            }
                    });
    }

    // 3x3 convolution with zero padding 1. x: [Cin x H x W],
    // k: [Cout x Cin x 3 x 3], b: [Cout]. H' = ceil(H/stride).
    Value conv3x3(Value xv, Value kv, Value bv, int stride) {
        if (stride != 1 && stride != 2)
            throw ConfigError("conv3x3: stride must be 1 or 2, got " + std::to_string(stride));
        const Tensor& x = value(xv);
        const Tensor& k = value(kv);
        const Tensor& b = value(bv);
        if (x.rank() != 3 || k.rank() != 4 || b.rank() != 1 || k.extent(1) != x.extent(0) ||
            k.extent(2) != 3 || k.extent(3) != 3 || b.extent(0) != k.extent(0))
            throw DimensionError("conv3x3: x " + shape_str(x.shape()) + ", k " +
                                 shape_str(k.shape()) + ", b " + shape_str(b.shape()));
        const std::size_t H = x.extent(1), W = x.extent(2);
        const std::size_t s = static_cast<std::size_t>(stride);
        const std::size_t Ho = (H + s - 1) / s, Wo = (W + s - 1) / s;
        const std::size_t Ci = x.extent(0), Co = k.extent(0);

        Tensor xp = pad1(x);
        Tensor y({Co, Ho, Wo});
        const std::size_t Wp = W + 2;
        for (std::size_t co = 0; co < Co; ++co) {
            for (std::size_t oy = 0; oy < Ho; ++oy)
                for (std::size_t ox = 0; ox < Wo; ++ox) {
                    double acc = b[co];
                    for (std::size_t ci = 0; ci < Ci; ++ci) {
                        const double* kp = k.data() + ((co * Ci + ci) * 9);
                        const double* row = xp.data() + (ci * (H + 2) + oy * s) * Wp + ox * s;
                        acc += kp[0] * row[0] + kp[1] * row[1] + kp[2] * row[2];
                        row += Wp;
                        acc += kp[3] * row[0] + kp[4] * row[1] + kp[5] * row[2];
                        row += Wp;
                        acc += kp[6] * row[0] + kp[7] * row[1] + kp[8] * row[2];
                    }
                    y.at(co, oy, ox) = acc;
                }
        }
        return push(std::move(y), {xv.idx, kv.idx, bv.idx},
                    [s, H, W, Ho, Wo, Ci, Co](Tape& t, const Node& n, const Tensor& g) {
                        const Tensor& x = t.nodes_[n.ins[0]].val;
                        const Tensor& k = t.nodes_[n.ins[1]].val;
                        Tensor& dx = t.grads_[n.ins[0]];
                        Tensor& dk = t.grads_[n.ins[1]];
                        Tensor& db = t.grads_[n.ins[2]];
                        Tensor xp = pad1(x);
                        Tensor dxp({Ci, H + 2, W + 2});
                        const std::size_t Wp = W + 2;
                        for (std::size_t co = 0; co < Co; ++co)
                            for (std::size_t oy = 0; oy < Ho; ++oy)
                                for (std::size_t ox = 0; ox < Wo; ++ox) {
                                    const double gv = g.at(co, oy, ox);
                                    db[co] += gv;
                                    for (std::size_t ci = 0; ci < Ci; ++ci) {
                                        double* dkp = dk.data() + ((co * Ci + ci) * 9);
                                        const double* kp = k.data() + ((co * Ci + ci) * 9);
                                        const std::size_t base = (ci * (H + 2) + oy * s) * Wp + ox * s;
                                        const double* row = xp.data() + base;
                                        double* drow = dxp.data() + base;
                                        for (std::size_t u = 0; u < 3; ++u) {
                                            for (std::size_t v2 = 0; v2 < 3; ++v2) {
                                                dkp[u * 3 + v2] += gv * row[v2];
                                                drow[v2] += gv * kp[u * 3 + v2];
                                            }
                                            row += Wp;
                                            drow += Wp;
                                        }
                                    }
                                }
                        for (std::size_t ci = 0; ci < Ci; ++ci)
                            for (std::size_t i = 0; i < H; ++i)
                                for (std::size_t j = 0; j < W; ++j)
                                    dx.at(ci, i, j) += dxp.at(ci, i + 1, j + 1);
                    });
    }

    Value relu(Value xv) {
        const Tensor& x = value(xv);
        Tensor y = x;
        for (std::size_t i = 0; i < y.size(); ++i)
            if (y[i] < 0.0) y[i] = 0.0;
        return push(std::move(y), {xv.idx}, [](Tape& t, const Node& n, const Tensor& g) {
            const Tensor& x = t.nodes_[n.ins[0]].val;
            Tensor& dx = t.grads_[n.ins[0]];
            for (std::size_t i = 0; i < g.size(); ++i)
                if (x[i] > 0.0) dx[i] += g[i];
        });
    }

    Value tanh_op(Value xv) {
        const Tensor& x = value(xv);
        Tensor y = x;
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(y[i]);
        return push(std::move(y), {xv.idx}, [](Tape& t, const Node& n, const Tensor& g) {
            const Tensor& y = t.nodes_[n.self].val;
            Tensor& dx = t.grads_[n.ins[0]];
            for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * (1.0 - y[i] * y[i]);
        });
    }

    // [C x H x W] -> per-channel mean [C]
    Value global_avg_pool(Value xv) {
        const Tensor& x = value(xv);
        if (x.rank() != 3) throw DimensionError("global_avg_pool: want rank 3, got " + shape_str(x.shape()));
        const std::size_t C = x.extent(0), HW = x.extent(1) * x.extent(2);
        Tensor y({C});
        for (std::size_t c = 0; c < C; ++c) {
            double s = 0.0;
            const double* p = x.data() + c * HW;
            for (std::size_t i = 0; i < HW; ++i) s += p[i];
            y[c] = s / static_cast<double>(HW);
        }
        return push(std::move(y), {xv.idx}, [C, HW](Tape& t, const Node& n, const Tensor& g) {
            Tensor& dx = t.grads_[n.ins[0]];
            for (std::size_t c = 0; c < C; ++c) {
                const double gv = g[c] / static_cast<double>(HW);
                double* p = dx.data() + c * HW;
                for (std::size_t i = 0; i < HW; ++i) p[i] += gv;
            }
        });
    }

    // Nearest-neighbour 2x upsample, [C x H x W] -> [C x 2H x 2W]
    Value upsample2x(Value xv) {
        const Tensor& x = value(xv);
        if (x.rank() != 3) throw DimensionError("upsample2x: want rank 3, got " + shape_str(x.shape()));
        const std::size_t C = x.extent(0), H = x.extent(1), W = x.extent(2);
        Tensor y({C, 2 * H, 2 * W});
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < 2 * H; ++i)
                for (std::size_t j = 0; j < 2 * W; ++j) y.at(c, i, j) = x.at(c, i / 2, j / 2);
        return push(std::move(y), {xv.idx}, [C, H, W](Tape& t, const Node& n, const Tensor& g) {
            Tensor& dx = t.grads_[n.ins[0]];
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t i = 0; i < 2 * H; ++i)
                    for (std::size_t j = 0; j < 2 * W; ++j) dx.at(c, i / 2, j / 2) += g.at(c, i, j);
        });
    }

    // Channel concatenation of rank-3 maps with equal spatial extents.
    Value concat_channels(const std::vector<Value>& xs) {
        if (xs.empty()) throw DimensionError("concat_channels: no inputs");
        std::size_t Ctot = 0;
        const Tensor& first = value(xs[0]);
        if (first.rank() != 3) throw DimensionError("concat_channels: want rank 3");
        const std::size_t H = first.extent(1), W = first.extent(2);
        std::vector<std::size_t> ins;
        for (Value v : xs) {
            const Tensor& t = value(v);
            if (t.rank() != 3 || t.extent(1) != H || t.extent(2) != W)
                throw DimensionError("concat_channels: spatial extents differ: " +
                                     shape_str(first.shape()) + " vs " + shape_str(t.shape()));
            Ctot += t.extent(0);
            ins.push_back(v.idx);
        }
        Tensor y({Ctot, H, W});
        std::size_t off = 0;
        for (Value v : xs) {
            const Tensor& t = value(v);
            std::copy(t.data(), t.data() + t.size(), y.data() + off);
            off += t.size();
        }
        return push(std::move(y), std::move(ins), [](Tape& t, const Node& n, const Tensor& g) {
            std::size_t off = 0;
            for (std::size_t in : n.ins) {
                Tensor& dx = t.grads_[in];
                for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[off + i];
                off += dx.size();
            }
        });
    }

    // Softmax over the last dimension; rank-1 is one row, rank-2 is per-row.
    Value softmax_rows(Value xv) {
        const Tensor& x = value(xv);
        if (x.rank() > 2) throw DimensionError("softmax_rows: want rank 1 or 2");
        const std::size_t R = x.rank() == 2 ? x.extent(0) : 1;
        const std::size_t C = x.rank() == 2 ? x.extent(1) : x.extent(0);
        Tensor y = x;
        for (std::size_t r = 0; r < R; ++r) softmax_inplace(y.data() + r * C, C);
        return push(std::move(y), {xv.idx}, [R, C](Tape& t, const Node& n, const Tensor& g) {
            const Tensor& y = t.nodes_[n.self].val;
            Tensor& dx = t.grads_[n.ins[0]];
            for (std::size_t r = 0; r < R; ++r) {
                const double* yp = y.data() + r * C;
                const double* gp = g.data() + r * C;
                double dot = 0.0;
                for (std::size_t i = 0; i < C; ++i) dot += gp[i] * yp[i];
                for (std::size_t i = 0; i < C; ++i) dx[r * C + i] += yp[i] * (gp[i] - dot);
            }
        });
    }

    // y[r] = W[r x c] v[c]
    Value matvec(Value wv, Value vv) {
        const Tensor& w = value(wv);
        const Tensor& v = value(vv);
        if (w.rank() != 2 || v.rank() != 1 || w.extent(1) != v.extent(0))
            throw DimensionError("matvec: W " + shape_str(w.shape()) + " vs v " + shape_str(v.shape()));
        const std::size_t R = w.extent(0), C = w.extent(1);
        Tensor y({R});
        kernels::matvec(w.data(), v.data(), y.data(), R, C);
        return push(std::move(y), {wv.idx, vv.idx}, [R, C](Tape& t, const Node& n, const Tensor& g) {
            const Tensor& w = t.nodes_[n.ins[0]].val;
            const Tensor& v = t.nodes_[n.ins[1]].val;
            Tensor& dw = t.grads_[n.ins[0]];
            Tensor& dv = t.grads_[n.ins[1]];
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t c = 0; c < C; ++c) {
                    dw[r * C + c] += g[r] * v[c];
                    dv[c] += g[r] * w[r * C + c];
                }
        });
    }

    Value dot(Value av, Value bv) {
        const Tensor& a = value(av);
        const Tensor& b = value(bv);
        if (a.rank() != 1 || b.rank() != 1 || a.size() != b.size())
            throw DimensionError("dot: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
        Tensor y = Tensor::scalar(kernels::dot(a.data(), b.data(), a.size()));
        return push(std::move(y), {av.idx, bv.idx}, [](Tape& t, const Node& n, const Tensor& g) {
            const Tensor& a = t.nodes_[n.ins[0]].val;
            const Tensor& b = t.nodes_[n.ins[1]].val;
            Tensor& da = t.grads_[n.ins[0]];
            Tensor& db = t.grads_[n.ins[1]];
            for (std::size_t i = 0; i < a.size(); ++i) {
                da[i] += g[0] * b[i];
                db[i] += g[0] * a[i];
            }
        });
    }

    Value add(Value av, Value bv) {
        const Tensor& a = value(av);
        const Tensor& b = value(bv);
        a.require_same_shape(b, "add");
        Tensor y = a;
        y += b;
        return push(std::move(y), {av.idx, bv.idx}, [](Tape& t, const Node& n, const Tensor& g) {
            Tensor& da = t.grads_[n.ins[0]];
            Tensor& db = t.grads_[n.ins[1]];
            for (std::size_t i = 0; i < g.size(); ++i) {
                da[i] += g[i];
                db[i] += g[i];
            }
        });
    }

    Value scale(Value xv, double c) {
        Tensor y = value(xv);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] *= c;
        return push(std::move(y), {xv.idx}, [c](Tape& t, const Node& n, const Tensor& g) {
            Tensor& dx = t.grads_[n.ins[0]];
            for (std::size_t i = 0; i < g.size(); ++i) dx[i] += c * g[i];
        });
    }

    Value reshape(Value xv, Shape shape) {
        const Tensor& x = value(xv);
        Tensor y(std::move(shape));
        if (y.size() != x.size())
            throw DimensionError("reshape: size mismatch " + shape_str(x.shape()) + " -> " +
                                 shape_str(y.shape()));
        std::copy(x.data(), x.data() + x.size(), y.data());
        return push(std::move(y), {xv.idx}, [](Tape& t, const Node& n, const Tensor& g) {
            Tensor& dx = t.grads_[n.ins[0]];
            for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
        });
    }

    // out = sum_i w[i] * maps[i], w: [n], maps equal-shaped.
    Value weighted_sum(Value wv, const std::vector<Value>& maps) {
        const Tensor& w = value(wv);
        if (w.rank() != 1 || w.size() != maps.size())
            throw DimensionError("weighted_sum: " + std::to_string(maps.size()) + " maps vs weights " +
                                 shape_str(w.shape()));
        if (maps.empty()) throw DimensionError("weighted_sum: no maps");
        Tensor y(value(maps[0]).shape());
        std::vector<std::size_t> ins{wv.idx};
        for (std::size_t i = 0; i < maps.size(); ++i) {
            const Tensor& f = value(maps[i]);
            f.require_same_shape(y, "weighted_sum");
            for (std::size_t j = 0; j < y.size(); ++j) y[j] += w[i] * f[j];
            ins.push_back(maps[i].idx);
        }
        return push(std::move(y), std::move(ins), [](Tape& t, const Node& n, const Tensor& g) {
            const Tensor& w = t.nodes_[n.ins[0]].val;
            Tensor& dw = t.grads_[n.ins[0]];
            for (std::size_t i = 1; i < n.ins.size(); ++i) {
                const Tensor& f = t.nodes_[n.ins[i]].val;
                Tensor& df = t.grads_[n.ins[i]];
                double acc = 0.0;
                for (std::size_t j = 0; j < g.size(); ++j) {
                    acc += g[j] * f[j];
                    df[j] += w[i - 1] * g[j];
                }
                dw[i - 1] += acc;
            }
        });
    }

    Value sum_scalars(const std::vector<Value>& xs) {
        if (xs.empty()) throw DimensionError("sum_scalars: no inputs");
        double s = 0.0;
        std::vector<std::size_t> ins;
        for (Value v : xs) {
            const Tensor& t = value(v);
            if (t.size() != 1) throw DimensionError("sum_scalars: non-scalar input");
            s += t[0];
            ins.push_back(v.idx);
        }
        return push(Tensor::scalar(s), std::move(ins), [](Tape& t, const Node& n, const Tensor& g) {
            for (std::size_t in : n.ins) t.grads_[in][0] += g[0];
        });
    }

    // Mean over cells of -log softmax(logits)[label]. logits: [C x H x W].
    Value softmax_cross_entropy(Value lv, const LabelGrid& labels) {
        const Tensor& z = value(lv);
        if (z.rank() != 3 || z.extent(1) != labels.h || z.extent(2) != labels.w)
            throw DimensionError("softmax_cross_entropy: logits " + shape_str(z.shape()) + " vs labels " +
                                 std::to_string(labels.h) + "x" + std::to_string(labels.w));
        const std::size_t C = z.extent(0), H = z.extent(1), W = z.extent(2), HW = H * W;
        for (std::uint8_t c : labels.v)
            if (c >= C) throw DimensionError("softmax_cross_entropy: label out of class range");
        double loss = 0.0;
        for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < W; ++j) {
                double zmax = z.at(0, i, j);
                for (std::size_t c = 1; c < C; ++c) zmax = std::max(zmax, z.at(c, i, j));
                double lse = 0.0;
                for (std::size_t c = 0; c < C; ++c) lse += std::exp(z.at(c, i, j) - zmax);
                lse = std::log(lse) + zmax;
                loss += lse - z.at(labels.at(i, j), i, j);
            }
        loss /= static_cast<double>(HW);
        LabelGrid lab = labels;
        return push(Tensor::scalar(loss), {lv.idx},
                    [lab, C, H, W, HW](Tape& t, const Node& n, const Tensor& g) {
                        const Tensor& z = t.nodes_[n.ins[0]].val;
                        Tensor& dz = t.grads_[n.ins[0]];
                        const double scale = g[0] / static_cast<double>(HW);
                        for (std::size_t i = 0; i < H; ++i)
                            for (std::size_t j = 0; j < W; ++j) {
                                double zmax = z.at(0, i, j);
                                for (std::size_t c = 1; c < C; ++c) zmax = std::max(zmax, z.at(c, i, j));
                                double lse = 0.0;
                                for (std::size_t c = 0; c < C; ++c) lse += std::exp(z.at(c, i, j) - zmax);
                                for (std::size_t c = 0; c < C; ++c) {
                                    double p = std::exp(z.at(c, i, j) - zmax) / lse;
                                    dz.at(c, i, j) += scale * (p - (lab.at(i, j) == c ? 1.0 : 0.0));
                                }
                            }
                    });
    }

    // Seeds d(root)=1, walks the tape in reverse, then accumulates into every
    // bound ParamStore. Calling twice without zeroing doubles stored gradients.
    void backward(Value root) {
        if (nodes_.empty()) throw StateError("backward before any forward pass");
        const std::size_t r = check(root);
        if (nodes_[r].val.size() != 1) throw DimensionError("backward: root must be scalar");
        grads_.clear();
        grads_.reserve(nodes_.size());
        for (const Node& n : nodes_) grads_.emplace_back(Tensor(n.val.shape()));
        grads_[r][0] = 1.0;
        for (std::size_t i = r + 1; i-- > 0;) {
            const Node& n = nodes_[i];
            if (n.back) n.back(*this, n, grads_[i]);
        }
        for (std::size_t i = 0; i <= r; ++i) {
            const Node& n = nodes_[i];
            if (n.store) n.store->accumulate_grad(n.pname, grads_[i]);
        }
    }

private:
    struct Node {
        Tensor val;
        std::vector<std::size_t> ins;
        std::function<void(Tape&, const Node&, const Tensor&)> back;
        ParamStore* store = nullptr;
        std::string pname;
        std::size_t self = 0;
    };

    static Tensor pad1(const Tensor& x) {
        const std::size_t C = x.extent(0), H = x.extent(1), W = x.extent(2);
        Tensor xp({C, H + 2, W + 2});
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < H; ++i)
                std::copy(x.data() + (c * H + i) * W, x.data() + (c * H + i + 1) * W,
                          xp.data() + (c * (H + 2) + i + 1) * (W + 2) + 1);
        return xp;
    }

    static void softmax_inplace(double* p, std::size_t n) {
        double m = p[0];
        for (std::size_t i = 1; i < n; ++i) m = std::max(m, p[i]);
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += (p[i] = std::exp(p[i] - m));
        for (std::size_t i = 0; i < n; ++i) p[i] /= s;
    }

    std::size_t check(Value v) const {
        if (!v.valid() || v.idx >= nodes_.size()) throw StateError("invalid tape value handle");
        return v.idx;
    }

    const Node& node(Value v) const { return nodes_[check(v)]; }

    Value push(Tensor val, std::vector<std::size_t> ins,
               std::function<void(Tape&, const Node&, const Tensor&)> back) {
        Node n;
        n.val = std::move(val);
        n.ins = std::move(ins);
        n.back = std::move(back);
        n.self = nodes_.size();
        nodes_.push_back(std::move(n));
        grads_.clear();  // grads from a previous backward no longer match
        return Value{nodes_.size() - 1};
    }

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
};

}  // namespace collab
