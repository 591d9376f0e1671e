// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "memoe/autograd.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace memoe {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

CMapMat as_mat(const Tensor& t) { return CMapMat(t.data().data(), t.rows(), t.cols()); }
MapMat as_mat(Tensor& t) { return MapMat(t.data().data(), t.rows(), t.cols()); }

Tape& tape_of(Var a) {
    if (!a.tape) throw std::invalid_argument("autograd: variable is not attached to a tape");
    return *a.tape;
}

Tape& tape_of(Var a, Var b) {
    if (a.tape != b.tape) throw std::invalid_argument("autograd: variables live on different tapes");
    return tape_of(a);
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    }
}

void require_matrix(const char* op, const Tensor& a) {
    if (a.rank() != 2) throw std::invalid_argument(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
}

}  // namespace

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::constant(Tensor t) {
    t.set_requires_grad(false);
    nodes_.push_back(Node{std::move(t), {}, {}, false, false});
    return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::leaf(Tensor t) {
    t.set_requires_grad(true);
    nodes_.push_back(Node{std::move(t), {}, {}, true, true});
    return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
    Node node;
    node.value = std::move(value);
    for (const Var& in : inputs) {
        if (in.tape != this) throw std::invalid_argument("autograd: input recorded on another tape");
        node.inputs.push_back(in.id);
        node.needs_grad = node.needs_grad || nodes_[in.id].needs_grad;
    }
    if (node.needs_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor* Tape::grad_buffer(Var v) {
    if (!nodes_[v.id].needs_grad) return nullptr;
    if (grads_.size() < nodes_.size()) grads_.resize(nodes_.size());
    Tensor& g = grads_[v.id];
    if (g.numel() != nodes_[v.id].value.numel() || g.shape() != nodes_[v.id].value.shape()) {
        g = Tensor(nodes_[v.id].value.shape());
    }
    return &g;
}

void Tape::accumulate(Var v, const Tensor& g) {
    Tensor* buf = grad_buffer(v);
    if (!buf) return;
    if (buf->numel() != g.numel()) {
        throw std::logic_error("autograd: gradient shape " + shape_str(g.shape()) + " for node of shape " +
                               shape_str(buf->shape()));
    }
    auto dst = buf->data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void Tape::backward(Var loss) {
    const Tensor& lv = value(loss);
    if (lv.numel() != 1) throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(lv.shape()));
    grads_.assign(nodes_.size(), Tensor());
    if (!nodes_[loss.id].needs_grad) return;
    *grad_buffer(loss) = Tensor(lv.shape(), 1.0);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.backward || grads_[i].numel() == 0) continue;
        // Inputs always precede node i, so its own buffer is final here.
        const Tensor g = std::move(grads_[i]);
        n.backward(*this, g);
    }
}

Tensor Tape::grad(Var leaf) const {
    if (leaf.id < grads_.size() && grads_[leaf.id].numel() == nodes_[leaf.id].value.numel()) {
        return grads_[leaf.id];
    }
    return Tensor(nodes_[leaf.id].value.shape());
}

// --- ops ---------------------------------------------------------------------

Var matmul(Var a, Var b) {
    Tape& t = tape_of(a, b);
    Tensor out = memoe::matmul(a.value(), b.value());
    return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
        if (Tensor* ga = tp.grad_buffer(a)) as_mat(*ga).noalias() += as_mat(g) * as_mat(b.value()).transpose();
        if (Tensor* gb = tp.grad_buffer(b)) as_mat(*gb).noalias() += as_mat(a.value()).transpose() * as_mat(g);
    });
}

namespace {

Var linear_impl(Var x, Var w, const Var* bias) {
    Tape& t = tape_of(x, w);
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    require_matrix("linear", xv);
    require_matrix("linear", wv);
    if (xv.cols() != wv.cols()) {
        throw std::invalid_argument("linear: shape mismatch " + shape_str(xv.shape()) + " x " + shape_str(wv.shape()) +
                                    "^T");
    }
    Tensor out({xv.rows(), wv.rows()});
    as_mat(out).noalias() = as_mat(xv) * as_mat(wv).transpose();
    std::vector<Var> inputs{x, w};
    if (bias) {
        const Tensor& bv = bias->value();
        if (bv.numel() != wv.rows()) throw std::invalid_argument("linear: bias length mismatch");
        for (std::size_t r = 0; r < out.rows(); ++r) {
            auto row = out.row(r);
            for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv[c];
        }
        inputs.push_back(*bias);
    }
    const bool has_bias = bias != nullptr;
    const Var b = has_bias ? *bias : Var{};
    return t.record(std::move(out), inputs, [x, w, b, has_bias](Tape& tp, const Tensor& g) {
        if (Tensor* gx = tp.grad_buffer(x)) as_mat(*gx).noalias() += as_mat(g) * as_mat(w.value());
        if (Tensor* gw = tp.grad_buffer(w)) as_mat(*gw).noalias() += as_mat(g).transpose() * as_mat(x.value());
        if (has_bias) {
            if (Tensor* gb = tp.grad_buffer(b)) {
                for (std::size_t r = 0; r < g.rows(); ++r) {
                    auto row = g.row(r);
                    for (std::size_t c = 0; c < row.size(); ++c) (*gb)[c] += row[c];
                }
            }
        }
    });
}

}  // namespace

Var linear(Var x, Var w) { return linear_impl(x, w, nullptr); }
Var linear(Var x, Var w, Var bias) { return linear_impl(x, w, &bias); }

Var add(Var a, Var b) {
    Tape& t = tape_of(a, b);
    require_same_shape("add", a.value(), b.value());
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
    return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
        tp.accumulate(a, g);
        tp.accumulate(b, g);
    });
}

Var sub(Var a, Var b) {
    Tape& t = tape_of(a, b);
    require_same_shape("sub", a.value(), b.value());
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
    return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
        tp.accumulate(a, g);
        if (Tensor* gb = tp.grad_buffer(b)) {
            for (std::size_t i = 0; i < g.numel(); ++i) (*gb)[i] -= g[i];
        }
    });
}

Var mul(Var a, Var b) {
    Tape& t = tape_of(a, b);
    require_same_shape("mul", a.value(), b.value());
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
    return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
        if (Tensor* ga = tp.grad_buffer(a)) {
            for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] * b.value()[i];
        }
        if (Tensor* gb = tp.grad_buffer(b)) {
            for (std::size_t i = 0; i < g.numel(); ++i) (*gb)[i] += g[i] * a.value()[i];
        }
    });
}

Var scale(Var a, double s) {
    Tape& t = tape_of(a);
    Tensor out = a.value();
    for (double& v : out.storage()) v *= s;
    return t.record(std::move(out), {a}, [a, s](Tape& tp, const Tensor& g) {
        if (Tensor* ga = tp.grad_buffer(a)) {
            for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] * s;
        }
    });
}

Var tanh(Var a) {
    Tape& t = tape_of(a);
    Tensor out = a.value();
    for (double& v : out.storage()) v = std::tanh(v);
    return t.record(out, {a}, [a, out](Tape& tp, const Tensor& g) {
        if (Tensor* ga = tp.grad_buffer(a)) {
            for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] * (1.0 - out[i] * out[i]);
        }
    });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Var gelu(Var a) {
    Tape& t = tape_of(a);
    Tensor out = a.value();
    for (double& x : out.storage()) x = 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
    return t.record(std::move(out), {a}, [a](Tape& tp, const Tensor& g) {
        Tensor* ga = tp.grad_buffer(a);
        if (!ga) return;
        const Tensor& xv = a.value();
        for (std::size_t i = 0; i < g.numel(); ++i) {
            const double x = xv[i];
            const double u = kGeluC * (x + kGeluA * x * x * x);
            const double th = std::tanh(u);
            const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
            (*ga)[i] += g[i] * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du);
        }
    });
}

Var sum(Var a) {
    Tape& t = tape_of(a);
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    return t.record(Tensor::scalar(s), {a}, [a](Tape& tp, const Tensor& g) {
        if (Tensor* ga = tp.grad_buffer(a)) {
            for (double& v : ga->storage()) v += g[0];
        }
    });
}

Var mean(Var a) {
    const double n = static_cast<double>(a.value().numel());
    return scale(sum(a), 1.0 / n);
}

Var concat_cols(Var a, Var b) {
    Tape& t = tape_of(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rows() != bv.rows()) {
        throw std::invalid_argument("concat_cols: row mismatch " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
    }
    const std::size_t ca = av.cols();
    const std::size_t cb = bv.cols();
    Tensor out({av.rows(), ca + cb});
    for (std::size_t r = 0; r < av.rows(); ++r) {
        std::copy(av.row(r).begin(), av.row(r).end(), out.row(r).begin());
        std::copy(bv.row(r).begin(), bv.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(ca));
    }
    return t.record(std::move(out), {a, b}, [a, b, ca, cb](Tape& tp, const Tensor& g) {
        Tensor* ga = tp.grad_buffer(a);
        Tensor* gb = tp.grad_buffer(b);
        for (std::size_t r = 0; r < g.rows(); ++r) {
            auto gr = g.row(r);
            if (ga) {
                for (std::size_t c = 0; c < ca; ++c) (*ga)[r * ca + c] += gr[c];
            }
            if (gb) {
                for (std::size_t c = 0; c < cb; ++c) (*gb)[r * cb + c] += gr[ca + c];
            }
        }
    });
}

Var softmax_rows(Var a) {
    Tape& t = tape_of(a);
    const Tensor& av = a.value();
    Tensor out(av.shape());
    for (std::size_t r = 0; r < av.rows(); ++r) {
        const auto p = memoe::softmax(av.row(r));
        std::copy(p.begin(), p.end(), out.row(r).begin());
    }
    return t.record(out, {a}, [a, out](Tape& tp, const Tensor& g) {
        Tensor* ga = tp.grad_buffer(a);
        if (!ga) return;
        for (std::size_t r = 0; r < out.rows(); ++r) {
            auto y = out.row(r);
            auto gr = g.row(r);
            double dot = 0.0;
            for (std::size_t c = 0; c < y.size(); ++c) dot += gr[c] * y[c];
            auto dst = ga->row(r);
            for (std::size_t c = 0; c < y.size(); ++c) dst[c] += y[c] * (gr[c] - dot);
        }
    });
}

Var top_k_mask_rows(Var a, std::size_t k) {
    Tape& t = tape_of(a);
    const Tensor& av = a.value();
    Tensor out(av.shape());
    Tensor keep(av.shape());
    for (std::size_t r = 0; r < av.rows(); ++r) {
        for (std::size_t c : top_k_indices(av.row(r), k)) {
            out.at(r, c) = av.at(r, c);
            keep.at(r, c) = 1.0;
        }
    }
    return t.record(std::move(out), {a}, [a, keep](Tape& tp, const Tensor& g) {
        if (Tensor* ga = tp.grad_buffer(a)) {
            for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] * keep[i];
        }
    });
}

Var embedding(Var table, std::span<const std::size_t> ids) {
    Tape& t = tape_of(table);
    const Tensor& tv = table.value();
    require_matrix("embedding", tv);
    const std::size_t d = tv.cols();
    Tensor out({ids.size(), d});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= tv.rows()) {
            throw std::invalid_argument("embedding: id " + std::to_string(ids[i]) + " out of range for table of " +
                                        std::to_string(tv.rows()) + " rows");
        }
        std::copy(tv.row(ids[i]).begin(), tv.row(ids[i]).end(), out.row(i).begin());
    }
    std::vector<std::size_t> idv(ids.begin(), ids.end());
    return t.record(std::move(out), {table}, [table, idv, d](Tape& tp, const Tensor& g) {
        Tensor* gt = tp.grad_buffer(table);
        if (!gt) return;
        for (std::size_t i = 0; i < idv.size(); ++i) {
            for (std::size_t c = 0; c < d; ++c) (*gt)[idv[i] * d + c] += g[i * d + c];
        }
    });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
    Tape& t = tape_of(x, gamma);
    tape_of(x, beta);
    const Tensor& xv = x.value();
    const std::size_t n = xv.rows();
    const std::size_t d = xv.cols();
    if (gamma.value().numel() != d || beta.value().numel() != d) {
        throw std::invalid_argument("layer_norm: affine parameters do not match width " + std::to_string(d));
    }
    Tensor xhat(xv.shape());
    std::vector<double> rstd(n);
    Tensor out(xv.shape());
    for (std::size_t r = 0; r < n; ++r) {
        auto row = xv.row(r);
        double mu = 0.0;
        for (double v : row) mu += v;
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (double v : row) var += (v - mu) * (v - mu);
        var /= static_cast<double>(d);
        rstd[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < d; ++c) {
            xhat.at(r, c) = (row[c] - mu) * rstd[r];
            out.at(r, c) = xhat.at(r, c) * gamma.value()[c] + beta.value()[c];
        }
    }
    return t.record(std::move(out), {x, gamma, beta}, [x, gamma, beta, xhat, rstd, n, d](Tape& tp, const Tensor& g) {
        Tensor* gx = tp.grad_buffer(x);
        Tensor* gg = tp.grad_buffer(gamma);
        Tensor* gb = tp.grad_buffer(beta);
        const Tensor& gv = gamma.value();
        for (std::size_t r = 0; r < n; ++r) {
            double m1 = 0.0;
            double m2 = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                const double dxh = g.at(r, c) * gv[c];
                m1 += dxh;
                m2 += dxh * xhat.at(r, c);
                if (gg) (*gg)[c] += g.at(r, c) * xhat.at(r, c);
                if (gb) (*gb)[c] += g.at(r, c);
            }
            if (!gx) continue;
            m1 /= static_cast<double>(d);
            m2 /= static_cast<double>(d);
            for (std::size_t c = 0; c < d; ++c) {
                const double dxh = g.at(r, c) * gv[c];
                gx->at(r, c) += rstd[r] * (dxh - m1 - xhat.at(r, c) * m2);
            }
        }
    });
}

Var causal_attention(Var q, Var k, Var v, std::size_t n_heads, std::span<const Segment> segments) {
    Tape& t = tape_of(q, k);
    tape_of(q, v);
    const Tensor& qv = q.value();
    const Tensor& kv = k.value();
    const Tensor& vv = v.value();
    require_same_shape("causal_attention", qv, kv);
    require_same_shape("causal_attention", qv, vv);
    const std::size_t d = qv.cols();
    if (n_heads == 0 || d % n_heads != 0) {
        throw std::invalid_argument("causal_attention: width " + std::to_string(d) + " not divisible by " +
                                    std::to_string(n_heads) + " heads");
    }
    const std::size_t dh = d / n_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Segment> segs(segments.begin(), segments.end());
    for (const Segment& s : segs) {
        if (s.begin + s.length > qv.rows()) throw std::invalid_argument("causal_attention: segment out of range");
    }

    // probs[seg][head] is a length x length lower-triangular row-stochastic matrix.
    std::vector<std::vector<double>> probs;
    probs.reserve(segs.size() * n_heads);
    Tensor out(qv.shape());
    std::vector<double> scores;
    for (const Segment& s : segs) {
        const std::size_t L = s.length;
        for (std::size_t h = 0; h < n_heads; ++h) {
            std::vector<double> p(L * L, 0.0);
            for (std::size_t i = 0; i < L; ++i) {
                const double* qi = &qv.at(s.begin + i, h * dh);
                scores.assign(i + 1, 0.0);
                for (std::size_t j = 0; j <= i; ++j) {
                    const double* kj = &kv.at(s.begin + j, h * dh);
                    double acc = 0.0;
                    for (std::size_t c = 0; c < dh; ++c) acc += qi[c] * kj[c];
                    scores[j] = acc * inv_sqrt;
                }
                const auto sm = memoe::softmax(scores);
                std::copy(sm.begin(), sm.end(), p.begin() + static_cast<std::ptrdiff_t>(i * L));
                double* oi = &out.at(s.begin + i, h * dh);
                for (std::size_t j = 0; j <= i; ++j) {
                    const double* vj = &vv.at(s.begin + j, h * dh);
                    for (std::size_t c = 0; c < dh; ++c) oi[c] += sm[j] * vj[c];
                }
            }
            probs.push_back(std::move(p));
        }
    }

    return t.record(std::move(out), {q, k, v}, [q, k, v, n_heads, dh, inv_sqrt, segs, probs](Tape& tp, const Tensor& g) {
        Tensor* gq = tp.grad_buffer(q);
        Tensor* gk = tp.grad_buffer(k);
        Tensor* gv = tp.grad_buffer(v);
        const Tensor& qv = q.value();
        const Tensor& kv = k.value();
        const Tensor& vv = v.value();
        std::size_t idx = 0;
        std::vector<double> dp;
        for (const Segment& s : segs) {
            const std::size_t L = s.length;
            for (std::size_t h = 0; h < n_heads; ++h, ++idx) {
                const std::vector<double>& p = probs[idx];
                for (std::size_t i = 0; i < L; ++i) {
                    const double* gi = &g.at(s.begin + i, h * dh);
                    dp.assign(i + 1, 0.0);
                    double dot = 0.0;
                    for (std::size_t j = 0; j <= i; ++j) {
                        const double pij = p[i * L + j];
                        const double* vj = &vv.at(s.begin + j, h * dh);
                        double acc = 0.0;
                        for (std::size_t c = 0; c < dh; ++c) acc += gi[c] * vj[c];
                        dp[j] = acc;
                        dot += acc * pij;
                        if (gv) {
                            double* gvj = &gv->at(s.begin + j, h * dh);
                            for (std::size_t c = 0; c < dh; ++c) gvj[c] += pij * gi[c];
                        }
                    }
                    const double* qi = &qv.at(s.begin + i, h * dh);
                    for (std::size_t j = 0; j <= i; ++j) {
                        const double ds = p[i * L + j] * (dp[j] - dot) * inv_sqrt;
                        if (ds == 0.0) continue;
                        const double* kj = &kv.at(s.begin + j, h * dh);
                        if (gq) {
                            double* gqi = &gq->at(s.begin + i, h * dh);
                            for (std::size_t c = 0; c < dh; ++c) gqi[c] += ds * kj[c];
                        }
                        if (gk) {
                            double* gkj = &gk->at(s.begin + j, h * dh);
                            for (std::size_t c = 0; c < dh; ++c) gkj[c] += ds * qi[c];
                        }
                    }
                }
            }
        }
    });
}

Var cross_entropy(Var logits, std::span<const int> targets) {
    Tape& t = tape_of(logits);
    const Tensor& lv = logits.value();
    require_matrix("cross_entropy", lv);
    if (targets.size() != lv.rows()) {
        throw std::invalid_argument("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                                    std::to_string(lv.rows()) + " rows");
    }
    std::size_t scored = 0;
    double total = 0.0;
    Tensor probs(lv.shape());
    for (std::size_t r = 0; r < lv.rows(); ++r) {
        if (targets[r] < 0) continue;
        if (static_cast<std::size_t>(targets[r]) >= lv.cols()) {
            throw std::invalid_argument("cross_entropy: target " + std::to_string(targets[r]) + " out of range");
        }
        const auto p = memoe::softmax(lv.row(r));
        std::copy(p.begin(), p.end(), probs.row(r).begin());
        total -= std::log(std::max(p[static_cast<std::size_t>(targets[r])], 1e-300));
        ++scored;
    }
    const double loss = scored ? total / static_cast<double>(scored) : 0.0;
    std::vector<int> tg(targets.begin(), targets.end());
    return t.record(Tensor::scalar(loss), {logits}, [logits, tg, probs, scored](Tape& tp, const Tensor& g) {
        Tensor* gl = tp.grad_buffer(logits);
        if (!gl || scored == 0) return;
        const double w = g[0] / static_cast<double>(scored);
        for (std::size_t r = 0; r < tg.size(); ++r) {
            if (tg[r] < 0) continue;
            auto dst = gl->row(r);
            auto p = probs.row(r);
            for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += w * p[c];
            dst[static_cast<std::size_t>(tg[r])] -= w;
        }
    });
}

}  // namespace memoe
