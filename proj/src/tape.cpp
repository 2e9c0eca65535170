#include "hierseg/tape.hpp"

#include <algorithm>
#include <cmath>

namespace hierseg {

namespace {

void check_rank4(const TensorBuffer& t, const char* op, const char* arg) {
  if (t.rank() != 4) {
    throw Error(std::string(op) + ": " + arg + " must have rank 4, got shape " +
                shape_str(t.shape));
  }
}

}  // namespace

std::size_t Tape::check(NodeId id) const {
  if (id >= nodes_.size()) {
    throw Error("tape: node id " + std::to_string(id) + " out of range (" +
                std::to_string(nodes_.size()) + " nodes recorded)");
  }
  return id;
}

NodeId Tape::constant(TensorBuffer value) {
  TapeNode n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::param(TensorBuffer value) {
  TapeNode n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::record(std::vector<NodeId> inputs, TensorBuffer value, BackwardFn fn) {
  TapeNode n;
  n.value = std::move(value);
  for (NodeId in : inputs) {
    if (nodes_[check(in)].requires_grad) n.requires_grad = true;
  }
  n.inputs = std::move(inputs);
  n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

const TensorBuffer& Tape::grad(NodeId id) const {
  const TapeNode& n = node(id);
  if (n.grad.data.empty() && !n.value.data.empty()) {
    throw Error("tape: gradient of node " + std::to_string(id) +
                " not populated; call backward() first");
  }
  return n.grad;
}

// ---------------------------------------------------------------------------
// conv2d: cross-correlation, zero "same" padding, optional stride.
// input [N,C,H,W], kernel [K,C,kh,kw] (kh,kw odd), bias [K]
// output [N,K,ceil(H/s),ceil(W/s)]

NodeId Tape::conv2d(NodeId input, NodeId kernel, NodeId bias, int stride) {
  const TensorBuffer& x = value(input);
  const TensorBuffer& w = value(kernel);
  const TensorBuffer& b = value(bias);
  check_rank4(x, "conv2d", "input");
  check_rank4(w, "conv2d", "kernel");
  if (b.rank() != 1) {
    throw Error("conv2d: bias must have rank 1, got shape " + shape_str(b.shape));
  }
  const std::size_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  const std::size_t K = w.shape[0], kc = w.shape[1], kh = w.shape[2], kw = w.shape[3];
  if (kc != C) {
    throw Error("conv2d: kernel input channels (" + std::to_string(kc) +
                ") != input channels (" + std::to_string(C) + ")");
  }
  if (kh % 2 == 0 || kw % 2 == 0) {
    throw Error("conv2d: kernel spatial dims must be odd, got " + std::to_string(kh) +
                "x" + std::to_string(kw));
  }
  if (b.shape[0] != K) {
    throw Error("conv2d: bias length (" + std::to_string(b.shape[0]) +
                ") != output channels (" + std::to_string(K) + ")");
  }
  if (stride < 1) {
    throw Error("conv2d: stride must be >= 1, got " + std::to_string(stride));
  }
  const std::size_t s = static_cast<std::size_t>(stride);
  const std::size_t OH = (H + s - 1) / s, OW = (W + s - 1) / s;
  const int ph = static_cast<int>(kh / 2), pw = static_cast<int>(kw / 2);

  TensorBuffer out = TensorBuffer::zeros({N, K, OH, OW});
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t k = 0; k < K; ++k) {
      double* op = &out.data[((n * K + k) * OH) * OW];
      for (std::size_t oh = 0; oh < OH; ++oh) {
        for (std::size_t ow = 0; ow < OW; ++ow) {
          double acc = b.data[k];
          for (std::size_t c = 0; c < C; ++c) {
            const double* xp = &x.data[((n * C + c) * H) * W];
            const double* wp = &w.data[((k * C + c) * kh) * kw];
            for (std::size_t i = 0; i < kh; ++i) {
              const int ih = static_cast<int>(oh * s) - ph + static_cast<int>(i);
              if (ih < 0 || ih >= static_cast<int>(H)) continue;
              for (std::size_t j = 0; j < kw; ++j) {
                const int iw = static_cast<int>(ow * s) - pw + static_cast<int>(j);
                if (iw < 0 || iw >= static_cast<int>(W)) continue;
                acc += xp[ih * static_cast<int>(W) + iw] * wp[i * kw + j];
              }
            }
          }
          op[oh * OW + ow] = acc;
        }
      }
    }
  }

  auto bw = [input, kernel, bias, s, ph, pw](Tape& t, NodeId self) {
    const TensorBuffer& g = t.grad(self);
    const TensorBuffer& xv = t.value(input);
    const TensorBuffer& wv = t.value(kernel);
    const std::size_t N = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3];
    const std::size_t K = wv.shape[0], kh = wv.shape[2], kw = wv.shape[3];
    const std::size_t OH = g.shape[2], OW = g.shape[3];
    TensorBuffer* gx = t.requires_grad(input) ? &t.grad_mut(input) : nullptr;
    TensorBuffer* gw = t.requires_grad(kernel) ? &t.grad_mut(kernel) : nullptr;
    TensorBuffer* gb = t.requires_grad(bias) ? &t.grad_mut(bias) : nullptr;
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t k = 0; k < K; ++k) {
        const double* gp = &g.data[((n * K + k) * OH) * OW];
        for (std::size_t oh = 0; oh < OH; ++oh) {
          for (std::size_t ow = 0; ow < OW; ++ow) {
            const double go = gp[oh * OW + ow];
            if (go == 0.0) continue;
            if (gb) gb->data[k] += go;
            for (std::size_t c = 0; c < C; ++c) {
              const double* xp = &xv.data[((n * C + c) * H) * W];
              const double* wp = &wv.data[((k * C + c) * kh) * kw];
              double* gxp = gx ? &gx->data[((n * C + c) * H) * W] : nullptr;
              double* gwp = gw ? &gw->data[((k * C + c) * kh) * kw] : nullptr;
              for (std::size_t i = 0; i < kh; ++i) {
                const int ih = static_cast<int>(oh * s) - ph + static_cast<int>(i);
                if (ih < 0 || ih >= static_cast<int>(H)) continue;
                for (std::size_t j = 0; j < kw; ++j) {
                  const int iw = static_cast<int>(ow * s) - pw + static_cast<int>(j);
                  if (iw < 0 || iw >= static_cast<int>(W)) continue;
                  const std::size_t xi = ih * static_cast<int>(W) + iw;
                  if (gxp) gxp[xi] += wp[i * kw + j] * go;
                  if (gwp) gwp[i * kw + j] += xp[xi] * go;
                }
              }
            }
          }
        }
      }
    }
  };
  return record({input, kernel, bias}, std::move(out), std::move(bw));
}

// ---------------------------------------------------------------------------

NodeId Tape::relu(NodeId input) {
  const TensorBuffer& x = value(input);
  TensorBuffer out = x;
  for (double& v : out.data) v = std::max(0.0, v);
  auto bw = [input](Tape& t, NodeId self) {
    if (!t.requires_grad(input)) return;
    const TensorBuffer& g = t.grad(self);
    const TensorBuffer& xv = t.value(input);
    TensorBuffer& gx = t.grad_mut(input);
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      if (xv.data[i] > 0.0) gx.data[i] += g.data[i];
    }
  };
  return record({input}, std::move(out), std::move(bw));
}

// ---------------------------------------------------------------------------
// Bilinear upsample by an integer factor, align_corners=false convention:
// src = (dst + 0.5)/factor - 0.5, edge-clamped.

namespace {

struct LerpTap {
  std::size_t lo, hi;
  double t;
};

std::vector<LerpTap> lerp_taps(std::size_t in, std::size_t out, int factor) {
  std::vector<LerpTap> taps(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) / factor - 0.5;
    double fl = std::floor(src);
    double t = src - fl;
    long i0 = static_cast<long>(fl);
    long i1 = i0 + 1;
    i0 = std::clamp<long>(i0, 0, static_cast<long>(in) - 1);
    i1 = std::clamp<long>(i1, 0, static_cast<long>(in) - 1);
    taps[o] = {static_cast<std::size_t>(i0), static_cast<std::size_t>(i1), t};
  }
  return taps;
}

}  // namespace

NodeId Tape::upsample_bilinear(NodeId input, int factor) {
  const TensorBuffer& x = value(input);
  check_rank4(x, "upsample_bilinear", "input");
  if (factor < 1) {
    throw Error("upsample_bilinear: factor must be >= 1, got " + std::to_string(factor));
  }
  const std::size_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  const std::size_t OH = H * factor, OW = W * factor;
  const auto ty = lerp_taps(H, OH, factor);
  const auto tx = lerp_taps(W, OW, factor);

  TensorBuffer out = TensorBuffer::zeros({N, C, OH, OW});
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const double* xp = &x.data[nc * H * W];
    double* op = &out.data[nc * OH * OW];
    for (std::size_t oh = 0; oh < OH; ++oh) {
      const LerpTap& a = ty[oh];
      for (std::size_t ow = 0; ow < OW; ++ow) {
        const LerpTap& b = tx[ow];
        double top = (1.0 - b.t) * xp[a.lo * W + b.lo] + b.t * xp[a.lo * W + b.hi];
        double bot = (1.0 - b.t) * xp[a.hi * W + b.lo] + b.t * xp[a.hi * W + b.hi];
        op[oh * OW + ow] = (1.0 - a.t) * top + a.t * bot;
      }
    }
  }

  auto bw = [input, ty, tx](Tape& t, NodeId self) {
    if (!t.requires_grad(input)) return;
    const TensorBuffer& g = t.grad(self);
    const TensorBuffer& xv = t.value(input);
    TensorBuffer& gx = t.grad_mut(input);
    const std::size_t N = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3];
    const std::size_t OH = g.shape[2], OW = g.shape[3];
    for (std::size_t nc = 0; nc < N * C; ++nc) {
      const double* gp = &g.data[nc * OH * OW];
      double* gxp = &gx.data[nc * H * W];
      for (std::size_t oh = 0; oh < OH; ++oh) {
        const LerpTap& a = ty[oh];
        for (std::size_t ow = 0; ow < OW; ++ow) {
          const LerpTap& b = tx[ow];
          const double go = gp[oh * OW + ow];
          gxp[a.lo * W + b.lo] += (1.0 - a.t) * (1.0 - b.t) * go;
          gxp[a.lo * W + b.hi] += (1.0 - a.t) * b.t * go;
          gxp[a.hi * W + b.lo] += a.t * (1.0 - b.t) * go;
          gxp[a.hi * W + b.hi] += a.t * b.t * go;
        }
      }
    }
  };
  return record({input}, std::move(out), std::move(bw));
}

// ---------------------------------------------------------------------------
// Per-pixel softmax over the channel axis, max-subtracted for stability.

NodeId Tape::softmax_channels(NodeId input) {
  const TensorBuffer& x = value(input);
  check_rank4(x, "softmax_channels", "input");
  const std::size_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  if (C < 2) {
    throw Error("softmax_channels: need at least 2 channels, got " + std::to_string(C));
  }
  const std::size_t HW = H * W;
  TensorBuffer out = TensorBuffer::zeros(x.shape);
  for (std::size_t n = 0; n < N; ++n) {
    const double* xp = &x.data[n * C * HW];
    double* op = &out.data[n * C * HW];
    for (std::size_t p = 0; p < HW; ++p) {
      double mx = xp[p];
      for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, xp[c * HW + p]);
      double z = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        double e = std::exp(xp[c * HW + p] - mx);
        op[c * HW + p] = e;
        z += e;
      }
      for (std::size_t c = 0; c < C; ++c) op[c * HW + p] /= z;
    }
  }

  auto bw = [input](Tape& t, NodeId self) {
    if (!t.requires_grad(input)) return;
    const TensorBuffer& g = t.grad(self);
    const TensorBuffer& y = t.value(self);
    TensorBuffer& gx = t.grad_mut(input);
    const std::size_t N = y.shape[0], C = y.shape[1], HW = y.shape[2] * y.shape[3];
    for (std::size_t n = 0; n < N; ++n) {
      const double* yp = &y.data[n * C * HW];
      const double* gp = &g.data[n * C * HW];
      double* gxp = &gx.data[n * C * HW];
      for (std::size_t p = 0; p < HW; ++p) {
        double dot = 0.0;
        for (std::size_t c = 0; c < C; ++c) dot += yp[c * HW + p] * gp[c * HW + p];
        for (std::size_t c = 0; c < C; ++c) {
          gxp[c * HW + p] += yp[c * HW + p] * (gp[c * HW + p] - dot);
        }
      }
    }
  };
  return record({input}, std::move(out), std::move(bw));
}

// ---------------------------------------------------------------------------
// Scalar plumbing.

NodeId Tape::add(std::vector<NodeId> terms) {
  if (terms.empty()) throw Error("add: at least one term required");
  double acc = 0.0;
  for (NodeId id : terms) {
    const TensorBuffer& v = value(id);
    if (v.size() != 1) {
      throw Error("add: term must be scalar, got shape " + shape_str(v.shape));
    }
    acc += v.data[0];
  }
  auto ins = terms;
  auto bw = [terms](Tape& t, NodeId self) {
    const double go = t.grad(self).data[0];
    for (NodeId id : terms) {
      if (t.requires_grad(id)) t.grad_mut(id).data[0] += go;
    }
  };
  return record(std::move(ins), TensorBuffer::scalar(acc), std::move(bw));
}

NodeId Tape::scale(NodeId input, double factor) {
  const TensorBuffer& v = value(input);
  if (v.size() != 1) {
    throw Error("scale: input must be scalar, got shape " + shape_str(v.shape));
  }
  auto bw = [input, factor](Tape& t, NodeId self) {
    if (t.requires_grad(input)) t.grad_mut(input).data[0] += factor * t.grad(self).data[0];
  };
  return record({input}, TensorBuffer::scalar(v.data[0] * factor), std::move(bw));
}

NodeId Tape::sum_squares(NodeId input) {
  const TensorBuffer& v = value(input);
  double acc = 0.0;
  for (double x : v.data) acc += x * x;
  auto bw = [input](Tape& t, NodeId self) {
    if (!t.requires_grad(input)) return;
    const double go = t.grad(self).data[0];
    const TensorBuffer& xv = t.value(input);
    TensorBuffer& gx = t.grad_mut(input);
    for (std::size_t i = 0; i < xv.data.size(); ++i) gx.data[i] += 2.0 * xv.data[i] * go;
  };
  return record({input}, TensorBuffer::scalar(acc), std::move(bw));
}

NodeId Tape::sum_all(NodeId input) {
  const TensorBuffer& v = value(input);
  double acc = 0.0;
  for (double x : v.data) acc += x;
  auto bw = [input](Tape& t, NodeId self) {
    if (!t.requires_grad(input)) return;
    const double go = t.grad(self).data[0];
    TensorBuffer& gx = t.grad_mut(input);
    for (double& g : gx.data) g += go;
  };
  return record({input}, TensorBuffer::scalar(acc), std::move(bw));
}

// ---------------------------------------------------------------------------

void Tape::backward(NodeId loss) {
  if (nodes_.empty()) throw Error("backward: tape is empty; run a forward pass first");
  const TapeNode& ln = node(loss);
  if (ln.value.size() != 1) {
    throw Error("backward: loss must be scalar, got shape " + shape_str(ln.value.shape));
  }
  for (std::size_t i = 0; i <= loss; ++i) {
    nodes_[i].grad = TensorBuffer::zeros(nodes_[i].value.shape);
  }
  nodes_[loss].grad.data[0] = 1.0;
  for (std::size_t i = loss + 1; i-- > 0;) {
    TapeNode& n = nodes_[i];
    if (n.backward && n.requires_grad) {
      n.backward(*this, static_cast<NodeId>(i));
    }
  }
}

}  // namespace hierseg
