#include "attzoom/autodiff.hpp"

#include <cmath>

#include "attzoom/kernels.hpp"

namespace az::ad {

NodePtr Tape::leaf(Tensor value, bool requires_grad, std::string name) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->needs_grad = requires_grad;
    n->name = std::move(name);
    nodes_.push_back(n);
    return n;
}

NodePtr Tape::make(Tensor value, std::vector<NodePtr> parents,
                   std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents) {
        if (p->needs_grad) {
            n->needs_grad = true;
            break;
        }
    }
    if (n->needs_grad) n->backward_fn = std::move(backward_fn);
    nodes_.push_back(n);
    return n;
}

void Tape::backward(const NodePtr& loss) {
    if (loss->value.numel() != 1) {
        throw ShapeError("backward requires a scalar loss, got " + loss->value.shape_str());
    }
    loss->ensure_grad()[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node& n = **it;
        if (n.needs_grad && n.grad_alloc && n.backward_fn) n.backward_fn(n);
    }
}

NodePtr conv2d(Tape& t, const NodePtr& x, const NodePtr& w, const NodePtr& b,
               const ops::ConvSpec& spec) {
    Tensor value = ops::conv2d(x->value, w->value, b ? &b->value : nullptr, spec);
    kernels::ConvDims d{x->value.n(), x->value.c(),  x->value.h(), x->value.w(),
                        spec.out_channels, spec.kernel_h, spec.kernel_w,
                        spec.stride, spec.padding, value.h(), value.w(), spec.has_bias};
    std::vector<NodePtr> parents = b ? std::vector<NodePtr>{x, w, b}
                                     : std::vector<NodePtr>{x, w};
    NodePtr xn = x, wn = w, bn = b;
    return t.make(std::move(value), std::move(parents), [xn, wn, bn, d](Node& n) {
        if (xn->needs_grad) {
            kernels::active().conv2d_backward_input(n.grad.data(), wn->value.data(),
                                                    xn->ensure_grad().data(), d);
        }
        if (wn->needs_grad || (bn && bn->needs_grad)) {
            Tensor gw(wn->value.n(), wn->value.c(), wn->value.h(), wn->value.w());
            Tensor gb(d.O, 1, 1, 1);
            kernels::active().conv2d_backward_weights(xn->value.data(), n.grad.data(),
                                                      gw.data(), gb.data(), d);
            accum(wn, gw);
            if (bn) accum(bn, gb);
        }
    });
}

NodePtr sigmoid(Tape& t, const NodePtr& x) {
    Tensor value = ops::sigmoid(x->value);
    NodePtr xn = x;
    return t.make(value, {x}, [xn](Node& n) {
        if (!xn->needs_grad) return;
        Tensor g(n.value.n(), n.value.c(), n.value.h(), n.value.w());
        for (i64 i = 0; i < g.numel(); ++i) {
            double s = n.value[i];
            g[i] = n.grad[i] * s * (1.0 - s);
        }
        accum(xn, g);
    });
}

NodePtr relu(Tape& t, const NodePtr& x) {
    Tensor value = ops::relu(x->value);
    NodePtr xn = x;
    return t.make(std::move(value), {x}, [xn](Node& n) {
        if (!xn->needs_grad) return;
        kernels::active().relu_backward(xn->value.data(), n.grad.data(),
                                        xn->ensure_grad().data(),
                                        static_cast<size_t>(n.value.numel()));
    });
}

NodePtr gate(Tape& t, const NodePtr& a, double threshold, bool straight_through) {
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw ConfigError("gate threshold must lie in (0,1)");
    }
    const Tensor& av = a->value;
    Tensor value(av.n(), av.c(), av.h(), av.w());
    for (i64 i = 0; i < av.numel(); ++i) {
        double s = ops::sigmoid1(av[i]);
        value[i] = s >= threshold ? 1.0 : s;
    }
    NodePtr an = a;
    return t.make(std::move(value), {a}, [an, threshold, straight_through](Node& n) {
        if (!an->needs_grad) return;
        Tensor g(n.value.n(), n.value.c(), n.value.h(), n.value.w());
        for (i64 i = 0; i < g.numel(); ++i) {
            double s = ops::sigmoid1(an->value[i]);
            bool clamped = s >= threshold;
            double ds = (clamped && !straight_through) ? 0.0 : s * (1.0 - s);
            g[i] = n.grad[i] * ds;
        }
        accum(an, g);
    });
}

NodePtr mul_broadcast(Tape& t, const NodePtr& feature, const NodePtr& map) {
    Tensor value = ops::mul_broadcast(feature->value, map->value);
    NodePtr fn = feature, mn = map;
    return t.make(std::move(value), {feature, map}, [fn, mn](Node& n) {
        const Tensor& f = fn->value;
        const Tensor& m = mn->value;
        i64 plane = f.h() * f.w();
        if (fn->needs_grad) {
            Tensor gf(f.n(), f.c(), f.h(), f.w());
            for (i64 b = 0; b < f.n(); ++b) {
                const double* mp = m.data() + b * plane;
                for (i64 c = 0; c < f.c(); ++c) {
                    const double* gy = n.grad.data() + (b * f.c() + c) * plane;
                    double* gp = gf.data() + (b * f.c() + c) * plane;
                    kernels::active().mul(gy, mp, gp, static_cast<size_t>(plane));
                }
            }
            accum(fn, gf);
        }
        if (mn->needs_grad) {
            Tensor gm(m.n(), 1, m.h(), m.w());
            for (i64 b = 0; b < f.n(); ++b) {
                double* gp = gm.data() + b * plane;
                for (i64 c = 0; c < f.c(); ++c) {
                    const double* gy = n.grad.data() + (b * f.c() + c) * plane;
                    const double* fp = f.data() + (b * f.c() + c) * plane;
                    for (i64 i = 0; i < plane; ++i) gp[i] += gy[i] * fp[i];
                }
            }
            accum(mn, gm);
        }
    });
}

NodePtr scale_channels(Tape& t, const NodePtr& feature, const NodePtr& scale) {
    Tensor value = ops::scale_channels(feature->value, scale->value);
    NodePtr fn = feature, sn = scale;
    return t.make(std::move(value), {feature, scale}, [fn, sn](Node& n) {
        const Tensor& f = fn->value;
        const Tensor& s = sn->value;
        i64 plane = f.h() * f.w();
        if (fn->needs_grad) {
            Tensor gf(f.n(), f.c(), f.h(), f.w());
            for (i64 b = 0; b < f.n(); ++b) {
                for (i64 c = 0; c < f.c(); ++c) {
                    double sv = s.at(b, c, 0, 0);
                    const double* gy = n.grad.data() + (b * f.c() + c) * plane;
                    double* gp = gf.data() + (b * f.c() + c) * plane;
                    for (i64 i = 0; i < plane; ++i) gp[i] = gy[i] * sv;
                }
            }
            accum(fn, gf);
        }
        if (sn->needs_grad) {
            Tensor gs(s.n(), s.c(), 1, 1);
            for (i64 b = 0; b < f.n(); ++b) {
                for (i64 c = 0; c < f.c(); ++c) {
                    const double* gy = n.grad.data() + (b * f.c() + c) * plane;
                    const double* fp = f.data() + (b * f.c() + c) * plane;
                    double acc = 0.0;
                    for (i64 i = 0; i < plane; ++i) acc += gy[i] * fp[i];
                    gs.at(b, c, 0, 0) = acc;
                }
            }
            accum(sn, gs);
        }
    });
}

NodePtr upsample_zeros(Tape& t, const NodePtr& x, i64 m) {
    Tensor value = ops::upsample_zeros(x->value, m);
    NodePtr xn = x;
    return t.make(std::move(value), {x}, [xn, m](Node& n) {
        if (!xn->needs_grad) return;
        const Tensor& xv = xn->value;
        // Adjoint of zero-insertion is stride-m subsampling.
        Tensor g(xv.n(), xv.c(), xv.h(), xv.w());
        for (i64 b = 0; b < xv.n(); ++b) {
            for (i64 c = 0; c < xv.c(); ++c) {
                for (i64 h = 0; h < xv.h(); ++h) {
                    for (i64 w = 0; w < xv.w(); ++w) {
                        g.at(b, c, h, w) = n.grad.at(b, c, m * h, m * w);
                    }
                }
            }
        }
        accum(xn, g);
    });
}

NodePtr max_pool2(Tape& t, const NodePtr& x) {
    auto argmax = std::make_shared<std::vector<i64>>();
    Tensor value = ops::max_pool2(x->value, argmax.get());
    NodePtr xn = x;
    return t.make(std::move(value), {x}, [xn, argmax](Node& n) {
        if (!xn->needs_grad) return;
        Tensor& gx = xn->ensure_grad();
        for (i64 i = 0; i < n.value.numel(); ++i) {
            gx[(*argmax)[static_cast<size_t>(i)]] += n.grad[i];
        }
    });
}

NodePtr global_avg_pool(Tape& t, const NodePtr& x) {
    Tensor value = ops::global_avg_pool(x->value);
    NodePtr xn = x;
    return t.make(std::move(value), {x}, [xn](Node& n) {
        if (!xn->needs_grad) return;
        const Tensor& xv = xn->value;
        i64 plane = xv.h() * xv.w();
        double inv = 1.0 / static_cast<double>(plane);
        Tensor g(xv.n(), xv.c(), xv.h(), xv.w());
        for (i64 b = 0; b < xv.n(); ++b) {
            for (i64 c = 0; c < xv.c(); ++c) {
                double gv = n.grad.at(b, c, 0, 0) * inv;
                double* gp = g.data() + (b * xv.c() + c) * plane;
                for (i64 i = 0; i < plane; ++i) gp[i] = gv;
            }
        }
        accum(xn, g);
    });
}

NodePtr dense(Tape& t, const NodePtr& x, const NodePtr& w, const NodePtr& b) {
    Tensor value = ops::dense(x->value, w->value, b ? &b->value : nullptr);
    std::vector<NodePtr> parents = b ? std::vector<NodePtr>{x, w, b}
                                     : std::vector<NodePtr>{x, w};
    NodePtr xn = x, wn = w, bn = b;
    return t.make(std::move(value), std::move(parents), [xn, wn, bn](Node& n) {
        const Tensor& xv = xn->value;
        const Tensor& wv = wn->value;
        i64 in_f = xv.c() * xv.h() * xv.w();
        i64 out_f = wv.n();
        if (xn->needs_grad) {
            Tensor gx(xv.n(), xv.c(), xv.h(), xv.w());
            for (i64 s = 0; s < xv.n(); ++s) {
                double* gp = gx.data() + s * in_f;
                const double* gy = n.grad.data() + s * out_f;
                for (i64 o = 0; o < out_f; ++o) {
                    kernels::active().axpy(gy[o], wv.data() + o * in_f, gp,
                                           static_cast<size_t>(in_f));
                }
            }
            accum(xn, gx);
        }
        if (wn->needs_grad) {
            Tensor gw(wv.n(), wv.c(), 1, 1);
            for (i64 s = 0; s < xv.n(); ++s) {
                const double* xp = xv.data() + s * in_f;
                const double* gy = n.grad.data() + s * out_f;
                for (i64 o = 0; o < out_f; ++o) {
                    kernels::active().axpy(gy[o], xp, gw.data() + o * in_f,
                                           static_cast<size_t>(in_f));
                }
            }
            accum(wn, gw);
        }
        if (bn && bn->needs_grad) {
            Tensor gb(out_f, 1, 1, 1);
            for (i64 s = 0; s < xv.n(); ++s) {
                const double* gy = n.grad.data() + s * out_f;
                for (i64 o = 0; o < out_f; ++o) gb[o] += gy[o];
            }
            accum(bn, gb);
        }
    });
}

NodePtr add(Tape& t, const NodePtr& a, const NodePtr& b) {
    Tensor value = ops::add(a->value, b->value);
    NodePtr an = a, bn = b;
    return t.make(std::move(value), {a, b}, [an, bn](Node& n) {
        accum(an, n.grad);
        accum(bn, n.grad);
    });
}

NodePtr mul(Tape& t, const NodePtr& a, const NodePtr& b) {
    if (!a->value.same_shape(b->value)) {
        throw ShapeError("mul shape mismatch: " + a->value.shape_str() + " vs " +
                         b->value.shape_str());
    }
    Tensor value(a->value.n(), a->value.c(), a->value.h(), a->value.w());
    kernels::active().mul(a->value.data(), b->value.data(), value.data(),
                          static_cast<size_t>(value.numel()));
    NodePtr an = a, bn = b;
    return t.make(std::move(value), {a, b}, [an, bn](Node& n) {
        if (an->needs_grad) {
            Tensor g(n.value.n(), n.value.c(), n.value.h(), n.value.w());
            kernels::active().mul(n.grad.data(), bn->value.data(), g.data(),
                                  static_cast<size_t>(g.numel()));
            accum(an, g);
        }
        if (bn->needs_grad) {
            Tensor g(n.value.n(), n.value.c(), n.value.h(), n.value.w());
            kernels::active().mul(n.grad.data(), an->value.data(), g.data(),
                                  static_cast<size_t>(g.numel()));
            accum(bn, g);
        }
    });
}

NodePtr sum(Tape& t, const NodePtr& x) {
    Tensor value = Tensor::scalar(x->value.sum());
    NodePtr xn = x;
    return t.make(std::move(value), {x}, [xn](Node& n) {
        if (!xn->needs_grad) return;
        double g = n.grad[0];
        Tensor gx(xn->value.n(), xn->value.c(), xn->value.h(), xn->value.w());
        for (i64 i = 0; i < gx.numel(); ++i) gx[i] = g;
        accum(xn, gx);
    });
}

NodePtr softmax_cross_entropy(Tape& t, const NodePtr& logits, std::vector<int> labels) {
    auto probs = std::make_shared<Tensor>();
    double loss = ops::softmax_cross_entropy(logits->value, labels, probs.get());
    NodePtr ln = logits;
    auto lab = std::make_shared<std::vector<int>>(std::move(labels));
    return t.make(Tensor::scalar(loss), {logits}, [ln, probs, lab](Node& n) {
        if (!ln->needs_grad) return;
        const Tensor& p = *probs;
        i64 bn = p.n(), k = p.c();
        double scale = n.grad[0] / static_cast<double>(bn);
        Tensor g(bn, k, 1, 1);
        for (i64 s = 0; s < bn; ++s) {
            for (i64 j = 0; j < k; ++j) {
                double onehot = (j == (*lab)[static_cast<size_t>(s)]) ? 1.0 : 0.0;
                g.at(s, j, 0, 0) = scale * (p.at(s, j, 0, 0) - onehot);
            }
        }
        accum(ln, g);
    });
}

NodePtr select_logit(Tape& t, const NodePtr& logits, i64 sample, i64 cls) {
    const Tensor& lv = logits->value;
    if (sample < 0 || sample >= lv.n() || cls < 0 || cls >= lv.c()) {
        throw ShapeError("select_logit index out of range for " + lv.shape_str());
    }
    NodePtr ln = logits;
    return t.make(Tensor::scalar(lv.at(sample, cls, 0, 0)), {logits},
                  [ln, sample, cls](Node& n) {
                      if (!ln->needs_grad) return;
                      Tensor g(ln->value.n(), ln->value.c(), 1, 1);
                      g.at(sample, cls, 0, 0) = n.grad[0];
                      accum(ln, g);
                  });
}

}  // namespace az::ad
