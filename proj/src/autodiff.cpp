#include "cats/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace cats {

namespace {

thread_local KinkMarginScope* g_active_kink_scope = nullptr;

NodePtr make_node(Grid value, const char* op_name, std::vector<NodePtr> parents,
                  std::function<void(Node&)> backprop) {
    value.require_finite(op_name);
    auto node = std::make_shared<Node>(std::move(value));
    node->parents = std::move(parents);
    node->backprop = std::move(backprop);
    return node;
}

void require_same_shape(const NodePtr& a, const NodePtr& b, const char* op_name) {
    if (!a->value.same_shape(b->value)) {
        throw std::invalid_argument(std::string(op_name) + ": shape mismatch " +
                                    a->value.shape_string() + " vs " +
                                    b->value.shape_string());
    }
}

}  // namespace

KinkMarginScope::KinkMarginScope() : prev_(g_active_kink_scope) {
    g_active_kink_scope = this;
}

KinkMarginScope::~KinkMarginScope() { g_active_kink_scope = prev_; }

void KinkMarginScope::record(double margin) {
    if (g_active_kink_scope && margin < g_active_kink_scope->min_margin_) {
        g_active_kink_scope->min_margin_ = margin;
    }
}

NodePtr make_leaf(Grid value) {
    return make_node(std::move(value), "leaf", {}, nullptr);
}

NodePtr add(const NodePtr& a, const NodePtr& b) {
    require_same_shape(a, b, "add");
    Grid out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
    return make_node(std::move(out), "add", {a, b}, [](Node& self) {
        Grid& ga = self.parents[0]->grad;
        Grid& gb = self.parents[1]->grad;
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            ga[i] += self.grad[i];
            gb[i] += self.grad[i];
        }
    });
}

NodePtr mul(const NodePtr& a, const NodePtr& b) {
    require_same_shape(a, b, "mul");
    Grid out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
    return make_node(std::move(out), "mul", {a, b}, [](Node& self) {
        const Grid& va = self.parents[0]->value;
        const Grid& vb = self.parents[1]->value;
        Grid& ga = self.parents[0]->grad;
        Grid& gb = self.parents[1]->grad;
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            ga[i] += self.grad[i] * vb[i];
            gb[i] += self.grad[i] * va[i];
        }
    });
}

NodePtr div(const NodePtr& num, const NodePtr& den) {
    require_same_shape(num, den, "div");
    for (std::size_t i = 0; i < den->value.size(); ++i) {
        if (den->value[i] == 0.0) {
            throw std::invalid_argument("div: zero denominator at flat index " +
                                        std::to_string(i));
        }
    }
    Grid out = num->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= den->value[i];
    return make_node(std::move(out), "div", {num, den}, [](Node& self) {
        const Grid& vn = self.parents[0]->value;
        const Grid& vd = self.parents[1]->value;
        Grid& gn = self.parents[0]->grad;
        Grid& gd = self.parents[1]->grad;
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double g = self.grad[i];
            gn[i] += g / vd[i];
            gd[i] -= g * vn[i] / (vd[i] * vd[i]);
        }
    });
}

NodePtr log(const NodePtr& x) {
    if (x->value.min_value() <= 0.0) {
        throw std::invalid_argument(
            "log: non-positive input (min = " + std::to_string(x->value.min_value()) +
            "); clamp the argument first");
    }
    Grid out = x->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(out[i]);
    return make_node(std::move(out), "log", {x}, [](Node& self) {
        const Grid& vx = self.parents[0]->value;
        Grid& gx = self.parents[0]->grad;
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            gx[i] += self.grad[i] / vx[i];
        }
    });
}

NodePtr negate(const NodePtr& x) {
    Grid out = x->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = -out[i];
    return make_node(std::move(out), "negate", {x}, [](Node& self) {
        Grid& gx = self.parents[0]->grad;
        for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] -= self.grad[i];
    });
}

NodePtr one_minus(const NodePtr& x) {
    Grid out = x->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 - out[i];
    return make_node(std::move(out), "one_minus", {x}, [](Node& self) {
        Grid& gx = self.parents[0]->grad;
        for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] -= self.grad[i];
    });
}

NodePtr clamp(const NodePtr& x, double lo, double hi) {
    if (!(lo < hi)) {
        throw std::invalid_argument("clamp: requires lo < hi");
    }
    Grid out = x->value;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = out[i];
        KinkMarginScope::record(std::min(std::abs(v - lo), std::abs(v - hi)));
        out[i] = std::min(std::max(v, lo), hi);
    }
    return make_node(std::move(out), "clamp", {x}, [lo, hi](Node& self) {
        const Grid& vx = self.parents[0]->value;
        Grid& gx = self.parents[0]->grad;
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (vx[i] >= lo && vx[i] <= hi) gx[i] += self.grad[i];
        }
    });
}

NodePtr relu(const NodePtr& x) {
    Grid out = x->value;
    for (std::size_t i = 0; i < out.size(); ++i) {
        KinkMarginScope::record(std::abs(out[i]));
        out[i] = std::max(out[i], 0.0);
    }
    return make_node(std::move(out), "relu", {x}, [](Node& self) {
        const Grid& vx = self.parents[0]->value;
        Grid& gx = self.parents[0]->grad;
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (vx[i] > 0.0) gx[i] += self.grad[i];
        }
    });
}

NodePtr sigmoid(const NodePtr& x) {
    Grid out = x->value;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = out[i];
        if (v >= 0.0) {
            out[i] = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            out[i] = e / (1.0 + e);
        }
    }
    return make_node(std::move(out), "sigmoid", {x}, [](Node& self) {
        const Grid& s = self.value;
        Grid& gx = self.parents[0]->grad;
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            gx[i] += self.grad[i] * s[i] * (1.0 - s[i]);
        }
    });
}

NodePtr scale(const NodePtr& x, double s) {
    if (!std::isfinite(s)) throw std::invalid_argument("scale: factor must be finite");
    Grid out = x->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
    return make_node(std::move(out), "scale", {x}, [s](Node& self) {
        Grid& gx = self.parents[0]->grad;
        for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += s * self.grad[i];
    });
}

NodePtr conv2d(const NodePtr& input, const NodePtr& weights, const NodePtr& bias,
               const ConvSpec& spec) {
    const Grid& in = input->value;
    const int kh = spec.kh, kw = spec.kw;
    const int ci = spec.in_channels, co = spec.out_channels;
    if (kh % 2 == 0 || kw % 2 == 0 || kh <= 0 || kw <= 0) {
        throw std::invalid_argument("conv2d: kernel extents must be odd and positive");
    }
    if (in.channels() != ci) {
        throw std::invalid_argument("conv2d: input has " + std::to_string(in.channels()) +
                                    " channels but kernel expects " + std::to_string(ci));
    }
    if (weights->value.height() != kh || weights->value.width() != kw ||
        weights->value.channels() != ci * co) {
        throw std::invalid_argument("conv2d: weight grid must be " + std::to_string(kh) +
                                    "x" + std::to_string(kw) + "x" +
                                    std::to_string(ci * co) + ", got " +
                                    weights->value.shape_string());
    }
    if (bias->value.height() != 1 || bias->value.width() != 1 ||
        bias->value.channels() != co) {
        throw std::invalid_argument("conv2d: bias grid must be 1x1x" + std::to_string(co));
    }

    const int h = in.height(), w = in.width();
    const int pad_y = spec.zero_pad ? (kh - 1) / 2 : 0;
    const int pad_x = spec.zero_pad ? (kw - 1) / 2 : 0;
    const int oh = spec.zero_pad ? h : h - kh + 1;
    const int ow = spec.zero_pad ? w : w - kw + 1;
    if (oh <= 0 || ow <= 0) {
        throw std::invalid_argument("conv2d: input smaller than kernel in valid mode");
    }

    Grid out(oh, ow, co);
    const double* wv = weights->value.data();
    const double* bv = bias->value.data();
    const double* iv = in.data();
    double* ov = out.data();
    std::vector<double> acc(co);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            for (int oc = 0; oc < co; ++oc) acc[oc] = bv[oc];
            for (int ky = 0; ky < kh; ++ky) {
                const int iy = y + ky - pad_y;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < kw; ++kx) {
                    const int ix = x + kx - pad_x;
                    if (ix < 0 || ix >= w) continue;
                    const double* ip = iv + (static_cast<std::size_t>(iy) * w + ix) * ci;
                    const double* wp = wv + (static_cast<std::size_t>(ky) * kw + kx) * ci * co;
                    for (int ic = 0; ic < ci; ++ic) {
                        const double v = ip[ic];
                        const double* wrow = wp + static_cast<std::size_t>(ic) * co;
                        for (int oc = 0; oc < co; ++oc) acc[oc] += v * wrow[oc];
                    }
                }
            }
            double* op = ov + (static_cast<std::size_t>(y) * ow + x) * co;
            for (int oc = 0; oc < co; ++oc) op[oc] = acc[oc];
        }
    }

    ConvSpec sp = spec;
    return make_node(std::move(out), "conv2d", {input, weights, bias},
                     [sp, h, w, oh, ow, pad_y, pad_x](Node& self) {
        const int kh = sp.kh, kw = sp.kw, ci = sp.in_channels, co = sp.out_channels;
        const Grid& in = self.parents[0]->value;
        const Grid& wt = self.parents[1]->value;
        Grid& gin = self.parents[0]->grad;
        Grid& gw = self.parents[1]->grad;
        Grid& gb = self.parents[2]->grad;
        const double* iv = in.data();
        const double* wv = wt.data();
        double* giv = gin.data();
        double* gwv = gw.data();
        double* gbv = gb.data();
        const double* gov = self.grad.data();
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                const double* gp = gov + (static_cast<std::size_t>(y) * ow + x) * co;
                for (int oc = 0; oc < co; ++oc) gbv[oc] += gp[oc];
                for (int ky = 0; ky < kh; ++ky) {
                    const int iy = y + ky - pad_y;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int ix = x + kx - pad_x;
                        if (ix < 0 || ix >= w) continue;
                        const std::size_t in_off = (static_cast<std::size_t>(iy) * w + ix) * ci;
                        const std::size_t w_off = (static_cast<std::size_t>(ky) * kw + kx) * ci * co;
                        for (int ic = 0; ic < ci; ++ic) {
                            const double v = iv[in_off + ic];
                            const double* wrow = wv + w_off + static_cast<std::size_t>(ic) * co;
                            double* gwrow = gwv + w_off + static_cast<std::size_t>(ic) * co;
                            double acc_gin = 0.0;
                            for (int oc = 0; oc < co; ++oc) {
                                const double g = gp[oc];
                                gwrow[oc] += v * g;
                                acc_gin += wrow[oc] * g;
                            }
                            giv[in_off + ic] += acc_gin;
                        }
                    }
                }
            }
        }
    });
}

Grid box_sum_grid(const Grid& g, int k) {
    if (k <= 0 || k % 2 == 0) {
        throw std::invalid_argument("box_sum: window size must be odd and positive");
    }
    const int r = k / 2;
    const int h = g.height(), w = g.width(), c = g.channels();
    Grid rows(h, w, c, 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int x_lo = std::max(0, x - r);
            const int x_hi = std::min(w - 1, x + r);
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int xi = x_lo; xi <= x_hi; ++xi) acc += g.at(y, xi, ch);
                rows.at(y, x, ch) = acc;
            }
        }
    }
    Grid out(h, w, c, 0.0);
    for (int y = 0; y < h; ++y) {
        const int y_lo = std::max(0, y - r);
        const int y_hi = std::min(h - 1, y + r);
        for (int x = 0; x < w; ++x) {
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int yi = y_lo; yi <= y_hi; ++yi) acc += rows.at(yi, x, ch);
                out.at(y, x, ch) = acc;
            }
        }
    }
    return out;
}

NodePtr box_sum(const NodePtr& x, int k) {
    Grid out = box_sum_grid(x->value, k);
    return make_node(std::move(out), "box_sum", {x}, [k](Node& self) {
        // The window relation is symmetric, so the adjoint is another box sum.
        Grid scattered = box_sum_grid(self.grad, k);
        Grid& gx = self.parents[0]->grad;
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += scattered[i];
    });
}

NodePtr channel_softmax(const NodePtr& x) {
    const Grid& v = x->value;
    const int n = v.height() * v.width();
    const int c = v.channels();
    Grid out(v.height(), v.width(), c);
    for (int p = 0; p < n; ++p) {
        const double* vp = v.data() + static_cast<std::size_t>(p) * c;
        double* op = out.data() + static_cast<std::size_t>(p) * c;
        double mx = vp[0];
        for (int l = 1; l < c; ++l) mx = std::max(mx, vp[l]);
        double denom = 0.0;
        for (int l = 0; l < c; ++l) {
            op[l] = std::exp(vp[l] - mx);
            denom += op[l];
        }
        for (int l = 0; l < c; ++l) op[l] /= denom;
    }
    return make_node(std::move(out), "channel_softmax", {x}, [n, c](Node& self) {
        Grid& gx = self.parents[0]->grad;
        for (int p = 0; p < n; ++p) {
            const double* sp = self.value.data() + static_cast<std::size_t>(p) * c;
            const double* gp = self.grad.data() + static_cast<std::size_t>(p) * c;
            double* xp = gx.data() + static_cast<std::size_t>(p) * c;
            double dot = 0.0;
            for (int l = 0; l < c; ++l) dot += gp[l] * sp[l];
            for (int l = 0; l < c; ++l) xp[l] += sp[l] * (gp[l] - dot);
        }
    });
}

NodePtr maxpool2(const NodePtr& x) {
    const Grid& v = x->value;
    const int h = v.height(), w = v.width(), c = v.channels();
    const int oh = (h + 1) / 2, ow = (w + 1) / 2;
    Grid out(oh, ow, c);
    std::vector<std::size_t> argmax(out.size());
    for (int y = 0; y < oh; ++y) {
        for (int x2 = 0; x2 < ow; ++x2) {
            for (int ch = 0; ch < c; ++ch) {
                double best = -std::numeric_limits<double>::infinity();
                double runner_up = -std::numeric_limits<double>::infinity();
                std::size_t best_idx = 0;
                for (int wy = 0; wy < 2; ++wy) {
                    for (int wx = 0; wx < 2; ++wx) {
                        // Odd extents replicate the last row/column.
                        const int iy = std::min(2 * y + wy, h - 1);
                        const int ix = std::min(2 * x2 + wx, w - 1);
                        const std::size_t idx =
                            (static_cast<std::size_t>(iy) * w + ix) * c + ch;
                        const double val = v[idx];
                        if (val > best) {
                            if (best_idx != idx) runner_up = best;
                            best = val;
                            best_idx = idx;
                        } else if (idx != best_idx && val > runner_up) {
                            runner_up = val;
                        }
                    }
                }
                if (runner_up > -std::numeric_limits<double>::infinity()) {
                    KinkMarginScope::record(best - runner_up);
                }
                const std::size_t oidx =
                    (static_cast<std::size_t>(y) * ow + x2) * c + ch;
                out[oidx] = best;
                argmax[oidx] = best_idx;
            }
        }
    }
    return make_node(std::move(out), "maxpool2", {x},
                     [argmax = std::move(argmax)](Node& self) {
        Grid& gx = self.parents[0]->grad;
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            gx[argmax[i]] += self.grad[i];
        }
    });
}

NodePtr upsample_bilinear(const NodePtr& x, int factor) {
    if (factor < 1) throw std::invalid_argument("upsample_bilinear: factor must be >= 1");
    if (factor == 1) {
        // Identity; keep a pass-through node so gradient flow is uniform.
        Grid out = x->value;
        return make_node(std::move(out), "upsample_bilinear", {x}, [](Node& self) {
            Grid& gx = self.parents[0]->grad;
            for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
        });
    }
    const Grid& v = x->value;
    const int h = v.height(), w = v.width(), c = v.channels();
    const int oh = h * factor, ow = w * factor;
    Grid out(oh, ow, c);
    auto src_coord = [factor](int o) { return (o + 0.5) / factor - 0.5; };
    for (int oy = 0; oy < oh; ++oy) {
        const double sy = src_coord(oy);
        const int y0 = static_cast<int>(std::floor(sy));
        const double wy = sy - y0;
        const int y0c = std::clamp(y0, 0, h - 1);
        const int y1c = std::clamp(y0 + 1, 0, h - 1);
        for (int ox = 0; ox < ow; ++ox) {
            const double sx = src_coord(ox);
            const int x0 = static_cast<int>(std::floor(sx));
            const double wx = sx - x0;
            const int x0c = std::clamp(x0, 0, w - 1);
            const int x1c = std::clamp(x0 + 1, 0, w - 1);
            for (int ch = 0; ch < c; ++ch) {
                out.at(oy, ox, ch) = (1.0 - wy) * ((1.0 - wx) * v.at(y0c, x0c, ch) +
                                                   wx * v.at(y0c, x1c, ch)) +
                                     wy * ((1.0 - wx) * v.at(y1c, x0c, ch) +
                                           wx * v.at(y1c, x1c, ch));
            }
        }
    }
    return make_node(std::move(out), "upsample_bilinear", {x},
                     [factor, h, w, oh, ow, c](Node& self) {
        Grid& gx = self.parents[0]->grad;
        auto src_coord = [factor](int o) { return (o + 0.5) / factor - 0.5; };
        for (int oy = 0; oy < oh; ++oy) {
            const double sy = src_coord(oy);
            const int y0 = static_cast<int>(std::floor(sy));
            const double wy = sy - y0;
            const int y0c = std::clamp(y0, 0, h - 1);
            const int y1c = std::clamp(y0 + 1, 0, h - 1);
            for (int ox = 0; ox < ow; ++ox) {
                const double sx = src_coord(ox);
                const int x0 = static_cast<int>(std::floor(sx));
                const double wx = sx - x0;
                const int x0c = std::clamp(x0, 0, w - 1);
                const int x1c = std::clamp(x0 + 1, 0, w - 1);
                for (int ch = 0; ch < c; ++ch) {
                    const double g = self.grad.at(oy, ox, ch);
                    gx.at(y0c, x0c, ch) += (1.0 - wy) * (1.0 - wx) * g;
                    gx.at(y0c, x1c, ch) += (1.0 - wy) * wx * g;
                    gx.at(y1c, x0c, ch) += wy * (1.0 - wx) * g;
                    gx.at(y1c, x1c, ch) += wy * wx * g;
                }
            }
        }
    });
}

NodePtr concat_channels(const std::vector<NodePtr>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_channels: no inputs");
    const int h = xs[0]->value.height(), w = xs[0]->value.width();
    int total = 0;
    for (const auto& x : xs) {
        if (x->value.height() != h || x->value.width() != w) {
            throw std::invalid_argument("concat_channels: spatial shape mismatch");
        }
        total += x->value.channels();
    }
    Grid out(h, w, total);
    int offset = 0;
    for (const auto& x : xs) {
        const int c = x->value.channels();
        for (int y = 0; y < h; ++y) {
            for (int xx = 0; xx < w; ++xx) {
                for (int ch = 0; ch < c; ++ch) {
                    out.at(y, xx, offset + ch) = x->value.at(y, xx, ch);
                }
            }
        }
        offset += c;
    }
    return make_node(std::move(out), "concat_channels", xs, [h, w](Node& self) {
        int offset = 0;
        for (auto& parent : self.parents) {
            const int c = parent->value.channels();
            for (int y = 0; y < h; ++y) {
                for (int xx = 0; xx < w; ++xx) {
                    for (int ch = 0; ch < c; ++ch) {
                        parent->grad.at(y, xx, ch) += self.grad.at(y, xx, offset + ch);
                    }
                }
            }
            offset += c;
        }
    });
}

NodePtr sum_channels(const NodePtr& x) {
    const Grid& v = x->value;
    const int h = v.height(), w = v.width(), c = v.channels();
    Grid out(h, w, 1);
    for (int y = 0; y < h; ++y) {
        for (int xx = 0; xx < w; ++xx) {
            double acc = 0.0;
            for (int ch = 0; ch < c; ++ch) acc += v.at(y, xx, ch);
            out.at(y, xx, 0) = acc;
        }
    }
    return make_node(std::move(out), "sum_channels", {x}, [h, w, c](Node& self) {
        Grid& gx = self.parents[0]->grad;
        for (int y = 0; y < h; ++y) {
            for (int xx = 0; xx < w; ++xx) {
                const double g = self.grad.at(y, xx, 0);
                for (int ch = 0; ch < c; ++ch) gx.at(y, xx, ch) += g;
            }
        }
    });
}

NodePtr channel_scale(const NodePtr& x, const NodePtr& w) {
    const Grid& v = x->value;
    const int c = v.channels();
    if (w->value.height() != 1 || w->value.width() != 1 || w->value.channels() != c) {
        throw std::invalid_argument("channel_scale: weight grid must be 1x1x" +
                                    std::to_string(c));
    }
    Grid out = v;
    const int n = v.height() * v.width();
    for (int p = 0; p < n; ++p) {
        for (int ch = 0; ch < c; ++ch) {
            out[static_cast<std::size_t>(p) * c + ch] *= w->value[ch];
        }
    }
    return make_node(std::move(out), "channel_scale", {x, w}, [n, c](Node& self) {
        const Grid& vx = self.parents[0]->value;
        const Grid& vw = self.parents[1]->value;
        Grid& gx = self.parents[0]->grad;
        Grid& gw = self.parents[1]->grad;
        for (int p = 0; p < n; ++p) {
            for (int ch = 0; ch < c; ++ch) {
                const std::size_t i = static_cast<std::size_t>(p) * c + ch;
                gx[i] += self.grad[i] * vw[ch];
                gw[ch] += self.grad[i] * vx[i];
            }
        }
    });
}

NodePtr sum_all(const NodePtr& x) {
    Grid out(1, 1, 1);
    double acc = 0.0;
    for (std::size_t i = 0; i < x->value.size(); ++i) acc += x->value[i];
    out[0] = acc;
    return make_node(std::move(out), "sum_all", {x}, [](Node& self) {
        const double g = self.grad[0];
        Grid& gx = self.parents[0]->grad;
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    });
}

NodePtr gather_pixels(const NodePtr& x, const std::vector<GatherCoord>& coords) {
    const Grid& v = x->value;
    if (v.channels() != 1) {
        throw std::invalid_argument("gather_pixels: input must be single-channel");
    }
    if (coords.empty()) {
        throw std::invalid_argument("gather_pixels: empty coordinate list");
    }
    Grid out(static_cast<int>(coords.size()), 1, 1);
    for (std::size_t i = 0; i < coords.size(); ++i) {
        const auto& c = coords[i];
        if (c.y < 0 || c.y >= v.height() || c.x < 0 || c.x >= v.width()) {
            throw std::invalid_argument("gather_pixels: coordinate out of range");
        }
        out[i] = v.at(c.y, c.x);
    }
    return make_node(std::move(out), "gather_pixels", {x},
                     [coords](Node& self) {
        Grid& gx = self.parents[0]->grad;
        for (std::size_t i = 0; i < coords.size(); ++i) {
            gx.at(coords[i].y, coords[i].x) += self.grad[i];
        }
    });
}

namespace {

// Reverse DFS postorder = topological order with every node preceding its
// parents, which is the gradient propagation order.
std::vector<Node*> topo_from(Node* root) {
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    seen.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (seen.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    std::reverse(order.begin(), order.end());
    return order;
}

}  // namespace

void backward(const NodePtr& root) {
    if (!root) throw std::invalid_argument("backward: null root");
    if (root->value.size() != 1) {
        throw std::invalid_argument("backward: root must be scalar (1x1x1), got " +
                                    root->value.shape_string());
    }
    if (root->backward_done) {
        throw std::logic_error("backward: already ran on this root; call "
                               "reset_gradients first");
    }
    root->backward_done = true;
    root->grad[0] += 1.0;
    for (Node* node : topo_from(root.get())) {
        if (node->backprop) node->backprop(*node);
    }
}

void reset_gradients(const NodePtr& root) {
    if (!root) return;
    for (Node* node : topo_from(root.get())) {
        node->grad.fill(0.0);
        node->backward_done = false;
    }
}

}  // namespace cats
