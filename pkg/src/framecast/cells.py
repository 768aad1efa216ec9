"""Convolutional recurrent units.

Four cell types plus a highway unit, all written against the autograd op
set so every step is differentiable and probe-able:

  conv_lstm_step     single memory C, gates from [x, H_prev]
  st_lstm_step       dual memory: C driven by [x, H_prev], a second memory
                     M passed in from the layer below and updated from
                     [x, M]; output gate sees both memories
  causal_lstm_step   dual memory in cascade: C updates first, then M's
                     gates are conditioned on the fresh C, so the two
                     memories act in series within one step
  causal_lstm_step_s2t  the mirrored cascade: M updates first, C second
  ghu_step           learned switch between a transformed input and the
                     previous highway state

Parameter containers hold plain numpy arrays; `on_tape` lifts a container
to tape leaves so the same step functions serve training, analysis, and
tests. Gate blocks inside fused kernels are packed (g, i, f) with the
output gate kept in its own bank (ConvLSTM packs (g, i, f, o)).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import autograd as ag
from .errors import ConfigError


class CellState(NamedTuple):
    """Hidden/memory pair carried along the time axis by one layer."""

    h: object
    c: object


@dataclass(frozen=True)
class ConvLstmParams:
    """Fused 4-gate kernel over [x, H_prev] (or H_prev alone when the cell
    is used as a pure transition with no input)."""

    w: object
    b: object


@dataclass(frozen=True)
class StLstmParams:
    """Dual-memory cell: temporal gate bank, spatial gate bank, output
    gate bank, and the 1x1 merge that mixes both memories into H."""

    wt: object
    bt: object
    ws: object
    bs: object
    wo: object
    bo: object
    wm: object


@dataclass(frozen=True)
class CausalLstmParams:
    """Cascaded dual-memory cell. w1/w2/w4 are the three gate banks in
    cascade order, w3 is the 1x1 projection applied to the incoming
    spatial memory, w5 the 1x1 merge. Only gates carry biases."""

    w1: object
    b1: object
    w2: object
    b2: object
    w3: object
    w4: object
    b4: object
    w5: object


@dataclass(frozen=True)
class GhuParams:
    """Highway unit: transform filters (wpx, wpz), switch filters
    (wsx, wsz), one bias per path."""

    wpx: object
    wpz: object
    bp: object
    wsx: object
    wsz: object
    bs: object


def named_arrays(params, prefix=""):
    """(name, array) pairs in declaration order; the canonical flat view."""
    sep = "." if prefix else ""
    return [(f"{prefix}{sep}{f.name}", getattr(params, f.name))
            for f in dataclasses.fields(params)]


def on_tape(params, tape, prefix=""):
    """Lift a parameter container onto a tape as named leaves."""
    sep = "." if prefix else ""
    return type(params)(**{
        f.name: tape.leaf(getattr(params, f.name), f"{prefix}{sep}{f.name}")
        for f in dataclasses.fields(params)})


def astype(params, dtype):
    """Same container with every array cast to dtype."""
    return type(params)(**{
        f.name: getattr(params, f.name).astype(dtype)
        for f in dataclasses.fields(params)})


def _uniform(rng, shape, fan_in, dtype):
    s = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-s, s, size=shape).astype(dtype)


def _check(cond, msg):
    if not cond:
        raise ConfigError(msg)


def init_conv_lstm(rng, in_channels, hidden, filter_size,
                   dtype=np.float32, forget_bias=1.0):
    """in_channels may be 0 for a transition-only cell (gates read H_prev)."""
    _check(in_channels >= 0 and hidden >= 1, "channel counts must be positive")
    _check(filter_size % 2 == 1, "filter_size must be odd")
    dtype = np.dtype(dtype)
    cin = in_channels + hidden
    fan = cin * filter_size * filter_size
    w = _uniform(rng, (4 * hidden, cin, filter_size, filter_size), fan, dtype)
    b = np.zeros(4 * hidden, dtype=dtype)
    b[2 * hidden:3 * hidden] += dtype.type(forget_bias)
    return ConvLstmParams(w, b)


def zeros_conv_lstm(in_channels, hidden, filter_size, dtype=np.float64):
    dtype = np.dtype(dtype)
    cin = in_channels + hidden
    return ConvLstmParams(
        np.zeros((4 * hidden, cin, filter_size, filter_size), dtype=dtype),
        np.zeros(4 * hidden, dtype=dtype))


def init_st_lstm(rng, in_channels, hidden, filter_size,
                 dtype=np.float32, forget_bias=1.0):
    _check(in_channels >= 1 and hidden >= 1, "channel counts must be positive")
    _check(filter_size % 2 == 1, "filter_size must be odd")
    dtype = np.dtype(dtype)
    k = filter_size
    ct, cs, co = in_channels + hidden, in_channels + hidden, in_channels + 3 * hidden
    wt = _uniform(rng, (3 * hidden, ct, k, k), ct * k * k, dtype)
    ws = _uniform(rng, (3 * hidden, cs, k, k), cs * k * k, dtype)
    wo = _uniform(rng, (hidden, co, k, k), co * k * k, dtype)
    wm = _uniform(rng, (hidden, 2 * hidden, 1, 1), 2 * hidden, dtype)
    bt = np.zeros(3 * hidden, dtype=dtype)
    bt[2 * hidden:] += dtype.type(forget_bias)
    bs = np.zeros(3 * hidden, dtype=dtype)
    bs[2 * hidden:] += dtype.type(forget_bias)
    bo = np.zeros(hidden, dtype=dtype)
    return StLstmParams(wt, bt, ws, bs, wo, bo, wm)


def zeros_st_lstm(in_channels, hidden, filter_size, dtype=np.float64):
    dtype = np.dtype(dtype)
    k = filter_size
    return StLstmParams(
        np.zeros((3 * hidden, in_channels + hidden, k, k), dtype=dtype),
        np.zeros(3 * hidden, dtype=dtype),
        np.zeros((3 * hidden, in_channels + hidden, k, k), dtype=dtype),
        np.zeros(3 * hidden, dtype=dtype),
        np.zeros((hidden, in_channels + 3 * hidden, k, k), dtype=dtype),
        np.zeros(hidden, dtype=dtype),
        np.zeros((hidden, 2 * hidden, 1, 1), dtype=dtype))


def _causal_shapes(in_channels, hidden, m_channels, filter_size, spatial_first):
    k = filter_size
    d, dm, cx = hidden, m_channels, in_channels
    if spatial_first:
        # gates: [x, H_prev, m_in] then [x, M_t, C_prev] then [x, M_t, C_t]
        c1, c2, c4 = cx + d + dm, cx + 2 * d, cx + 2 * d
    else:
        # gates: [x, H_prev, C_prev] then [x, C_t, m_in] then [x, C_t, M_t]
        c1, c2, c4 = cx + 2 * d, cx + d + dm, cx + 2 * d
    return {
        "w1": (3 * d, c1, k, k),
        "w2": (3 * d, c2, k, k),
        "w3": (d, dm, 1, 1),
        "w4": (d, c4, k, k),
        "w5": (d, 2 * d, 1, 1),
    }


def init_causal_lstm(rng, in_channels, hidden, m_channels, filter_size,
                     dtype=np.float32, forget_bias=1.0, spatial_first=False):
    _check(in_channels >= 1 and hidden >= 1 and m_channels >= 1,
           "channel counts must be positive")
    _check(filter_size % 2 == 1, "filter_size must be odd")
    dtype = np.dtype(dtype)
    d = hidden
    shapes = _causal_shapes(in_channels, hidden, m_channels, filter_size, spatial_first)
    ws = {name: _uniform(rng, shp, shp[1] * shp[2] * shp[3], dtype)
          for name, shp in shapes.items()}
    b1 = np.zeros(3 * d, dtype=dtype)
    b1[2 * d:] += dtype.type(forget_bias)
    b2 = np.zeros(3 * d, dtype=dtype)
    b2[2 * d:] += dtype.type(forget_bias)
    b4 = np.zeros(d, dtype=dtype)
    return CausalLstmParams(ws["w1"], b1, ws["w2"], b2, ws["w3"], ws["w4"], b4, ws["w5"])


def zeros_causal_lstm(in_channels, hidden, m_channels, filter_size,
                      dtype=np.float64, spatial_first=False):
    dtype = np.dtype(dtype)
    d = hidden
    shapes = _causal_shapes(in_channels, hidden, m_channels, filter_size, spatial_first)
    return CausalLstmParams(
        np.zeros(shapes["w1"], dtype=dtype), np.zeros(3 * d, dtype=dtype),
        np.zeros(shapes["w2"], dtype=dtype), np.zeros(3 * d, dtype=dtype),
        np.zeros(shapes["w3"], dtype=dtype),
        np.zeros(shapes["w4"], dtype=dtype), np.zeros(d, dtype=dtype),
        np.zeros(shapes["w5"], dtype=dtype))


def init_ghu(rng, in_channels, hidden, filter_size, dtype=np.float32):
    _check(in_channels >= 1 and hidden >= 1, "channel counts must be positive")
    _check(filter_size % 2 == 1, "filter_size must be odd")
    dtype = np.dtype(dtype)
    k = filter_size
    fan_x, fan_z = in_channels * k * k, hidden * k * k
    return GhuParams(
        _uniform(rng, (hidden, in_channels, k, k), fan_x, dtype),
        _uniform(rng, (hidden, hidden, k, k), fan_z, dtype),
        np.zeros(hidden, dtype=dtype),
        _uniform(rng, (hidden, in_channels, k, k), fan_x, dtype),
        _uniform(rng, (hidden, hidden, k, k), fan_z, dtype),
        np.zeros(hidden, dtype=dtype))


def zeros_ghu(in_channels, hidden, filter_size, dtype=np.float64):
    dtype = np.dtype(dtype)
    k = filter_size
    return GhuParams(
        np.zeros((hidden, in_channels, k, k), dtype=dtype),
        np.zeros((hidden, hidden, k, k), dtype=dtype),
        np.zeros(hidden, dtype=dtype),
        np.zeros((hidden, in_channels, k, k), dtype=dtype),
        np.zeros((hidden, hidden, k, k), dtype=dtype),
        np.zeros(hidden, dtype=dtype))


def _gif(pre):
    g, i, f = ag.split_gates(pre, 3)
    return ag.tanh(g), ag.sigmoid(i), ag.sigmoid(f)


def conv_lstm_step(p, x, prev):
    """Single-memory step. x may be None for a transition-only cell.

    C_t = f * C_prev + i * g, H_t = o * tanh(C_t); all four gates come
    from one fused convolution over [x, H_prev].
    """
    inp = prev.h if x is None else ag.concat([x, prev.h])
    pre = ag.conv2d(inp, p.w, p.b)
    g, i, f, o = ag.split_gates(pre, 4)
    g, i, f, o = ag.tanh(g), ag.sigmoid(i), ag.sigmoid(f), ag.sigmoid(o)
    c = ag.add(ag.mul(f, prev.c), ag.mul(i, g))
    h = ag.mul(o, ag.tanh(c))
    return CellState(h, c)


def st_lstm_step(p, x, prev, m):
    """Dual-memory step; m is the spatial memory handed up from below.

    The temporal memory C and the spatial memory M are updated by
    independent gate banks, then the output gate (which sees x, H_prev,
    and both fresh memories) mixes their 1x1 merge into H_t. M must have
    the cell's own width; it is forwarded across layers unprojected.
    """
    g, i, f = _gif(ag.conv2d(ag.concat([x, prev.h]), p.wt, p.bt))
    c = ag.add(ag.mul(f, prev.c), ag.mul(i, g))
    g2, i2, f2 = _gif(ag.conv2d(ag.concat([x, m]), p.ws, p.bs))
    m_new = ag.add(ag.mul(f2, m), ag.mul(i2, g2))
    o = ag.sigmoid(ag.conv2d(ag.concat([x, prev.h, c, m_new]), p.wo, p.bo))
    h = ag.mul(o, ag.tanh(ag.conv2d(ag.concat([c, m_new]), p.wm)))
    return CellState(h, c), m_new


def causal_lstm_step(p, x, prev, m):
    """Cascaded dual-memory step, temporal memory first.

    C_t forms from [x, H_prev, C_prev]; the spatial gates then read the
    fresh C_t alongside the incoming memory, whose channels are adapted
    by the 1x1 projection w3; the output gate reads both new memories.
    Returns (CellState, M_t).
    """
    g, i, f = _gif(ag.conv2d(ag.concat([x, prev.h, prev.c]), p.w1, p.b1))
    c = ag.add(ag.mul(f, prev.c), ag.mul(i, g))
    g2, i2, f2 = _gif(ag.conv2d(ag.concat([x, c, m]), p.w2, p.b2))
    m_new = ag.add(ag.mul(f2, ag.tanh(ag.conv2d(m, p.w3))), ag.mul(i2, g2))
    o = ag.tanh(ag.conv2d(ag.concat([x, c, m_new]), p.w4, p.b4))
    h = ag.mul(o, ag.tanh(ag.conv2d(ag.concat([c, m_new]), p.w5)))
    return CellState(h, c), m_new


def causal_lstm_step_s2t(p, x, prev, m):
    """Mirrored cascade: the spatial memory updates first.

    M_t forms from [x, H_prev, m]-driven gates (still through the w3
    projection, which handles cross-layer channel changes); the temporal
    gates then read the fresh M_t, and the output path mirrors the
    temporal-first cell with the memory roles swapped.
    """
    g, i, f = _gif(ag.conv2d(ag.concat([x, prev.h, m]), p.w1, p.b1))
    m_new = ag.add(ag.mul(f, ag.tanh(ag.conv2d(m, p.w3))), ag.mul(i, g))
    g2, i2, f2 = _gif(ag.conv2d(ag.concat([x, m_new, prev.c]), p.w2, p.b2))
    c = ag.add(ag.mul(f2, prev.c), ag.mul(i2, g2))
    o = ag.tanh(ag.conv2d(ag.concat([x, m_new, c]), p.w4, p.b4))
    h = ag.mul(o, ag.tanh(ag.conv2d(ag.concat([m_new, c]), p.w5)))
    return CellState(h, c), m_new


def ghu_step(p, x, z):
    """Highway step: Z_t = S * P + (1 - S) * Z_prev.

    P is the tanh transform of [x, Z_prev], S the sigmoid switch over the
    same pair. The four filter banks fuse into one convolution per step.
    """
    d = p.bp.value.shape[0]
    kp = ag.concat([p.wpx, p.wpz], axis=1)
    ks = ag.concat([p.wsx, p.wsz], axis=1)
    k = ag.concat([kp, ks], axis=0)
    b = ag.concat([p.bp, p.bs], axis=0)
    pre = ag.conv2d(ag.concat([x, z]), k, b)
    p_t = ag.tanh(ag.slice_channels(pre, 0, d))
    s_t = ag.sigmoid(ag.slice_channels(pre, d, 2 * d))
    return ag.add(ag.mul(s_t, p_t), ag.mul(ag.one_minus(s_t), z))
