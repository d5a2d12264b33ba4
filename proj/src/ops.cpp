#include "lrfpn/ops.hpp"

#include <cmath>
#include <stdexcept>

namespace lrfpn::ops {
namespace k = kernels;

namespace {

Tape& same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw std::logic_error("operands recorded on different tapes");
  return *a.tape;
}

}  // namespace

Var conv2d(Var input, Var kernel, std::optional<Var> bias, ConvSpec spec, ConvPath path) {
  Tape& t = same_tape(input, kernel);
  if (bias) same_tape(input, *bias);
  Tensor out = k::conv2d(input.value(), kernel.value(), bias ? &bias->value() : nullptr, spec, path);
  std::vector<std::size_t> ids{input.id, kernel.id};
  if (bias) ids.push_back(bias->id);
  const std::size_t xi = input.id, ki = kernel.id;
  const std::optional<std::size_t> bi = bias ? std::optional(bias->id) : std::nullopt;
  return t.record("conv2d", std::move(out), std::move(ids),
                  [=](Tape& tape, const Tensor& g) {
                    auto grads = k::conv2d_backward(tape.value(xi), tape.value(ki), g, spec, path,
                                                    tape.requires_grad(xi), tape.requires_grad(ki),
                                                    bi && tape.requires_grad(*bi));
                    if (grads.input) tape.accumulate(xi, std::move(*grads.input));
                    if (grads.kernel) tape.accumulate(ki, std::move(*grads.kernel));
                    if (grads.bias) tape.accumulate(*bi, std::move(*grads.bias));
                  });
}

Var depthwise_conv2d(Var input, Var kernel, std::size_t dilation, std::size_t padding) {
  Tape& t = same_tape(input, kernel);
  Tensor out = k::depthwise_conv2d(input.value(), kernel.value(), dilation, padding);
  const std::size_t xi = input.id, ki = kernel.id;
  return t.record("depthwise_conv2d", std::move(out), {xi, ki},
                  [=](Tape& tape, const Tensor& g) {
                    auto [gx, gk] = k::depthwise_conv2d_backward(tape.value(xi), tape.value(ki), g,
                                                                 dilation, padding);
                    tape.accumulate(xi, std::move(gx));
                    tape.accumulate(ki, std::move(gk));
                  });
}

Var adaptive_avg_pool(Var input, std::size_t out_h, std::size_t out_w) {
  Tensor out = k::adaptive_avg_pool(input.value(), out_h, out_w);
  const std::size_t xi = input.id;
  return input.tape->record("adaptive_avg_pool", std::move(out), {xi},
                            [xi](Tape& tape, const Tensor& g) {
                              tape.accumulate(xi, k::adaptive_avg_pool_backward(tape.value(xi).shape(), g));
                            });
}

Var adaptive_max_pool(Var input, std::size_t out_h, std::size_t out_w) {
  auto pooled = k::adaptive_max_pool(input.value(), out_h, out_w);
  const std::size_t xi = input.id;
  return input.tape->record(
      "adaptive_max_pool", std::move(pooled.output), {xi},
      [xi, argmax = std::move(pooled.argmax)](Tape& tape, const Tensor& g) {
        tape.accumulate(xi, k::adaptive_max_pool_backward(tape.value(xi).shape(), argmax, g));
      });
}

Var global_avg_pool(Var input) { return adaptive_avg_pool(input, 1, 1); }
Var global_max_pool(Var input) { return adaptive_max_pool(input, 1, 1); }

Var fully_connected(Var input, Var weight, Var bias) {
  Tape& t = same_tape(input, weight);
  same_tape(input, bias);
  Tensor out = k::fully_connected(input.value(), weight.value(), bias.value());
  const std::size_t xi = input.id, wi = weight.id, bi = bias.id;
  return t.record("fully_connected", std::move(out), {xi, wi, bi},
                  [=](Tape& tape, const Tensor& g) {
                    const Tensor& x = tape.value(xi);
                    const Tensor& w = tape.value(wi);
                    const std::size_t n = x.shape().n, cin = x.shape().c, cout = w.shape().n;
                    Tensor gx(x.shape()), gw(w.shape()), gb(tape.value(bi).shape());
                    for (std::size_t b = 0; b < n; ++b) {
                      for (std::size_t o = 0; o < cout; ++o) {
                        const double go = g[b * cout + o];
                        gb[o] += go;
                        for (std::size_t i = 0; i < cin; ++i) {
                          gx[b * cin + i] += go * w[o * cin + i];
                          gw[o * cin + i] += go * x[b * cin + i];
                        }
                      }
                    }
                    tape.accumulate(xi, std::move(gx));
                    tape.accumulate(wi, std::move(gw));
                    tape.accumulate(bi, std::move(gb));
                  });
}

Var relu(Var x) {
  const std::size_t xi = x.id;
  return x.tape->record("relu", k::relu(x.value()), {xi}, [xi](Tape& tape, const Tensor& g) {
    const Tensor& in = tape.value(xi);
    Tensor gx(in.shape());
    for (std::size_t i = 0; i < in.size(); ++i) gx[i] = in[i] > 0.0 ? g[i] : 0.0;
    tape.accumulate(xi, std::move(gx));
  });
}

Var sigmoid(Var x) {
  Tape& t = *x.tape;
  // The output node is appended next, so its id is known before recording.
  const std::size_t xi = x.id, oi = t.size();
  return t.record("sigmoid", k::sigmoid(x.value()), {xi}, [xi, oi](Tape& tape, const Tensor& g) {
    const Tensor& y = tape.value(oi);
    Tensor gx(y.shape());
    for (std::size_t i = 0; i < y.size(); ++i) gx[i] = g[i] * y[i] * (1.0 - y[i]);
    tape.accumulate(xi, std::move(gx));
  });
}

Var upsample_nearest2x(Var input) {
  const std::size_t xi = input.id;
  return input.tape->record("upsample_nearest2x", k::upsample_nearest2x(input.value()), {xi},
                            [xi](Tape& tape, const Tensor& g) {
                              tape.accumulate(xi, k::upsample_nearest2x_backward(g));
                            });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const std::size_t ai = a.id, bi = b.id;
  return t.record("add", k::add(a.value(), b.value()), {ai, bi},
                  [ai, bi](Tape& tape, const Tensor& g) {
                    tape.accumulate(ai, g);
                    tape.accumulate(bi, g);
                  });
}

Var hadamard(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const std::size_t ai = a.id, bi = b.id;
  return t.record("hadamard", k::hadamard(a.value(), b.value()), {ai, bi},
                  [ai, bi](Tape& tape, const Tensor& g) {
                    const Tensor& av = tape.value(ai);
                    const Tensor& bv = tape.value(bi);
                    if (tape.requires_grad(ai)) tape.accumulate(ai, k::hadamard(g, bv));
                    if (tape.requires_grad(bi)) {
                      // b may be broadcast over the batch; fold the batch back.
                      Tensor gb(bv.shape());
                      const std::size_t per = bv.size();
                      for (std::size_t i = 0; i < g.size(); ++i) gb[i % per] += g[i] * av[i];
                      tape.accumulate(bi, std::move(gb));
                    }
                  });
}

Var broadcast_scale(Var x, Var s) {
  Tape& t = same_tape(x, s);
  const std::size_t xi = x.id, si = s.id;
  return t.record("broadcast_scale", k::broadcast_scale(x.value(), s.value()), {xi, si},
                  [xi, si](Tape& tape, const Tensor& g) {
                    const Tensor& xv = tape.value(xi);
                    const Tensor& sv = tape.value(si);
                    if (tape.requires_grad(xi)) tape.accumulate(xi, k::broadcast_scale(g, sv));
                    if (tape.requires_grad(si)) {
                      Tensor gs(sv.shape());
                      const std::size_t plane = xv.shape().plane();
                      for (std::size_t i = 0; i < g.size(); ++i) gs[i / plane] += g[i] * xv[i];
                      tape.accumulate(si, std::move(gs));
                    }
                  });
}

Var scale(Var x, double factor) {
  const std::size_t xi = x.id;
  return x.tape->record("scale", k::scale(x.value(), factor), {xi},
                        [xi, factor](Tape& tape, const Tensor& g) {
                          tape.accumulate(xi, k::scale(g, factor));
                        });
}

Var concat_channels(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const std::size_t ai = a.id, bi = b.id;
  return t.record("concat_channels", k::concat_channels(a.value(), b.value()), {ai, bi},
                  [ai, bi](Tape& tape, const Tensor& g) {
                    const Shape sa = tape.value(ai).shape();
                    const Shape sb = tape.value(bi).shape();
                    Tensor ga(sa), gb(sb);
                    const std::size_t pa = sa.c * sa.plane(), pb = sb.c * sb.plane();
                    for (std::size_t n = 0; n < sa.n; ++n) {
                      for (std::size_t i = 0; i < pa; ++i) ga[n * pa + i] = g[n * (pa + pb) + i];
                      for (std::size_t i = 0; i < pb; ++i) gb[n * pb + i] = g[n * (pa + pb) + pa + i];
                    }
                    tape.accumulate(ai, std::move(ga));
                    tape.accumulate(bi, std::move(gb));
                  });
}

Var sum(Var x) {
  const std::size_t xi = x.id;
  return x.tape->record("sum", Tensor(Shape{1, 1, 1, 1}, lrfpn::sum(x.value())), {xi},
                        [xi](Tape& tape, const Tensor& g) {
                          tape.accumulate(xi, Tensor(tape.value(xi).shape(), g[0]));
                        });
}

Var bce_loss(Var pred, const Tensor& target) {
  const double loss = k::bce_loss(pred.value(), target);
  const std::size_t pi = pred.id;
  return pred.tape->record("bce_loss", Tensor(Shape{1, 1, 1, 1}, loss), {pi},
                           [pi, target](Tape& tape, const Tensor& g) {
                             const Tensor& p = tape.value(pi);
                             const double inv = g[0] / static_cast<double>(p.size());
                             Tensor gp(p.shape());
                             for (std::size_t i = 0; i < p.size(); ++i) {
                               gp[i] = inv * (p[i] - target[i]) / (p[i] * (1.0 - p[i]));
                             }
                             tape.accumulate(pi, std::move(gp));
                           });
}

}  // namespace lrfpn::ops
