"""Network assembly: configuration, stacking, rollout, checkpoints.

Six architectures over the cells module:

  stacked_convlstm          plain stack, per-layer recurrence
  deep_transition_convlstm  one (H, C) chain threaded through all layers
                            within a step and wrapped top-to-bottom across
                            steps; layers above the first are transition
                            cells with no exogenous input
  predrnn                   stacked dual-memory cells; the spatial memory
                            M climbs the stack within a step and wraps
                            from the top layer back to layer 1 at the next
                            step
  predrnn_ghu               predrnn plus a highway unit spliced between
                            two adjacent layers
  predrnnpp                 cascaded dual-memory cells plus the highway
                            unit (default slot between layers 1 and 2)
  predrnnpp_variant         same, with the mirrored spatial-first cascade

The highway unit takes the hidden state of the slot's lower layer, so its
width always equals that layer's channel count. Layer indices in ghu_slot
are 1-based. The output head is a 1x1 convolution from the top hidden
state back to pixel channels; rollout clamps returned frames to [0, 1]
but always feeds raw predictions back into the network so training and
inference see the same dynamics.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from . import cells, stpt
from .errors import ConfigError, FormatError, ShapeError

ARCHITECTURES = (
    "stacked_convlstm",
    "deep_transition_convlstm",
    "predrnn",
    "predrnn_ghu",
    "predrnnpp",
    "predrnnpp_variant",
)

_GHU_ARCHS = ("predrnn_ghu", "predrnnpp", "predrnnpp_variant")
_SPATIAL_ARCHS = ("predrnn", "predrnn_ghu", "predrnnpp", "predrnnpp_variant")
_CAUSAL_ARCHS = ("predrnnpp", "predrnnpp_variant")


@dataclass(frozen=True)
class NetworkConfig:
    """Shape of one predictive network plus its sequence geometry."""

    architecture: str
    L: int
    channels: tuple
    filter_size: int
    ghu_slot: tuple | None
    input_channels: int
    input_extent: tuple
    T_in: int
    T_out: int

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {self.architecture!r}")
        if self.L < 1:
            raise ConfigError("L must be >= 1")
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        object.__setattr__(self, "input_extent", tuple(int(e) for e in self.input_extent))
        if len(self.channels) != self.L:
            raise ConfigError(f"channels has {len(self.channels)} entries, L is {self.L}")
        if any(c < 1 for c in self.channels):
            raise ConfigError("channel widths must be positive")
        if self.filter_size < 1 or self.filter_size % 2 == 0:
            raise ConfigError("filter_size must be odd and positive")
        if self.input_channels < 1:
            raise ConfigError("input_channels must be positive")
        if len(self.input_extent) != 2 or any(e < 1 for e in self.input_extent):
            raise ConfigError(f"input_extent must be two positive values, got {self.input_extent}")
        if self.T_in < 1 or self.T_out < 1:
            raise ConfigError("T_in and T_out must be >= 1")
        needs_ghu = self.architecture in _GHU_ARCHS
        if needs_ghu:
            if self.ghu_slot is None:
                raise ConfigError(f"{self.architecture} requires ghu_slot")
            slot = tuple(int(k) for k in self.ghu_slot)
            object.__setattr__(self, "ghu_slot", slot)
            if len(slot) != 2 or slot[1] != slot[0] + 1:
                raise ConfigError(f"ghu_slot must name adjacent layers, got {slot}")
            if not 1 <= slot[0] < self.L:
                raise ConfigError(f"ghu_slot {slot} outside layers 1..{self.L}")
        elif self.ghu_slot is not None:
            raise ConfigError(f"{self.architecture} does not take a ghu_slot")
        uniform = all(c == self.channels[0] for c in self.channels)
        if self.architecture == "deep_transition_convlstm" and not uniform:
            raise ConfigError("deep transition threads one state chain; channels must be uniform")
        if self.architecture in ("predrnn", "predrnn_ghu") and not uniform:
            raise ConfigError("the dual-memory stack forwards M unprojected; channels must be uniform")

    def to_json(self):
        d = dataclasses.asdict(self)
        d["channels"] = list(self.channels)
        d["input_extent"] = list(self.input_extent)
        d["ghu_slot"] = list(self.ghu_slot) if self.ghu_slot is not None else None
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    @staticmethod
    def from_json(text):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"network config is not valid JSON: {e}") from None
        if not isinstance(d, dict):
            raise ConfigError("network config must be a JSON object")
        required = {f.name for f in dataclasses.fields(NetworkConfig)}
        missing = required - set(d)
        if missing:
            raise ConfigError(f"network config missing fields: {sorted(missing)}")
        extra = set(d) - required
        if extra:
            raise ConfigError(f"network config has unknown fields: {sorted(extra)}")
        slot = d["ghu_slot"]
        return NetworkConfig(
            architecture=d["architecture"],
            L=int(d["L"]),
            channels=tuple(d["channels"]),
            filter_size=int(d["filter_size"]),
            ghu_slot=tuple(slot) if slot is not None else None,
            input_channels=int(d["input_channels"]),
            input_extent=tuple(d["input_extent"]),
            T_in=int(d["T_in"]),
            T_out=int(d["T_out"]),
        )


@dataclass(frozen=True)
class NetworkParams:
    """Per-layer cell parameters, optional highway parameters, output head."""

    cells: tuple
    ghu: object
    w_out: object
    b_out: object

    def named(self):
        out = []
        for k, p in enumerate(self.cells):
            out.extend(cells.named_arrays(p, f"layer{k}"))
        if self.ghu is not None:
            out.extend(cells.named_arrays(self.ghu, "ghu"))
        out.append(("head.w_out", self.w_out))
        out.append(("head.b_out", self.b_out))
        return out

    def astype(self, dtype):
        return NetworkParams(
            tuple(cells.astype(p, dtype) for p in self.cells),
            cells.astype(self.ghu, dtype) if self.ghu is not None else None,
            self.w_out.astype(dtype),
            self.b_out.astype(dtype),
        )

    def on_tape(self, tape):
        return NetworkParams(
            tuple(cells.on_tape(p, tape, f"layer{k}") for k, p in enumerate(self.cells)),
            cells.on_tape(self.ghu, tape, "ghu") if self.ghu is not None else None,
            tape.leaf(self.w_out, "head.w_out"),
            tape.leaf(self.b_out, "head.b_out"),
        )


def _layer_geometry(config):
    """Per-layer (input_channels, hidden, m_channels) triples."""
    arch, ch, cin = config.architecture, config.channels, config.input_channels
    geo = []
    for k in range(config.L):
        if arch == "deep_transition_convlstm":
            x_ch = cin if k == 0 else 0
        elif k == 0:
            x_ch = cin
        elif config.ghu_slot is not None and config.ghu_slot[1] == k + 1:
            x_ch = ch[config.ghu_slot[0] - 1]
        else:
            x_ch = ch[k - 1]
        m_ch = ch[-1] if k == 0 else ch[k - 1]
        geo.append((x_ch, ch[k], m_ch))
    return geo


def init_network(config, seed=0, dtype=np.float32, forget_bias=1.0):
    """Draw parameters for every bank; uniform [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    return _build_params(config, dtype, forget_bias, rng=rng)


def zeros_network(config, dtype=np.float64):
    return _build_params(config, np.dtype(dtype), 0.0, rng=None)


def _build_params(config, dtype, forget_bias, rng):
    dtype = np.dtype(dtype)
    arch = config.architecture
    layer_params = []
    for x_ch, d, m_ch in _layer_geometry(config):
        if arch in ("stacked_convlstm", "deep_transition_convlstm"):
            p = cells.init_conv_lstm(rng, x_ch, d, config.filter_size, dtype, forget_bias) \
                if rng is not None else cells.zeros_conv_lstm(x_ch, d, config.filter_size, dtype)
        elif arch in ("predrnn", "predrnn_ghu"):
            p = cells.init_st_lstm(rng, x_ch, d, config.filter_size, dtype, forget_bias) \
                if rng is not None else cells.zeros_st_lstm(x_ch, d, config.filter_size, dtype)
        else:
            sf = arch == "predrnnpp_variant"
            p = cells.init_causal_lstm(rng, x_ch, d, m_ch, config.filter_size, dtype,
                                       forget_bias, spatial_first=sf) \
                if rng is not None else cells.zeros_causal_lstm(
                    x_ch, d, m_ch, config.filter_size, dtype, spatial_first=sf)
        layer_params.append(p)
    ghu = None
    if config.ghu_slot is not None:
        gw = config.channels[config.ghu_slot[0] - 1]
        ghu = cells.init_ghu(rng, gw, gw, config.filter_size, dtype) \
            if rng is not None else cells.zeros_ghu(gw, gw, config.filter_size, dtype)
    d_top, cin = config.channels[-1], config.input_channels
    if rng is not None:
        w_out = rng.uniform(-1.0 / np.sqrt(d_top), 1.0 / np.sqrt(d_top),
                            size=(cin, d_top, 1, 1)).astype(dtype)
    else:
        w_out = np.zeros((cin, d_top, 1, 1), dtype=dtype)
    b_out = np.zeros(cin, dtype=dtype)
    return NetworkParams(tuple(layer_params), ghu, w_out, b_out)


def count_parameters(config):
    """Exact scalar count of recurrent-unit parameters (cells plus highway).

    The 1x1 output head is excluded; it adds channels[-1] * input_channels
    + input_channels more.
    """
    total = 0
    for p in zeros_network(config).cells:
        total += sum(v.size for _, v in cells.named_arrays(p))
    if config.ghu_slot is not None:
        gw = config.channels[config.ghu_slot[0] - 1]
        g = cells.zeros_ghu(gw, gw, config.filter_size)
        total += sum(v.size for _, v in cells.named_arrays(g))
    return int(total)


@dataclass
class NetworkState:
    """All recurrent state after one step: per-layer (H, C), the spatial
    memory as it wraps to the next step, and the highway state."""

    layers: list
    m: object
    z: object


def init_state(config, tape, batch, dtype=np.float32):
    """Zero state registered as tape leaves so gradients can reach t=0."""
    h, w = config.input_extent
    dtype = np.dtype(dtype)

    def zeros(c, name):
        return tape.leaf(np.zeros((batch, c, h, w), dtype=dtype), name)

    layers = [cells.CellState(zeros(d, f"state0.h{k}"), zeros(d, f"state0.c{k}"))
              for k, d in enumerate(config.channels)]
    m = zeros(config.channels[-1], "state0.m") if config.architecture in _SPATIAL_ARCHS else None
    z = None
    if config.ghu_slot is not None:
        z = zeros(config.channels[config.ghu_slot[0] - 1], "state0.z")
    return NetworkState(layers, m, z)


def step(config, tparams, x, state):
    """Advance every layer one step; returns (new state, prediction node).

    tparams must already be on x's tape (NetworkParams.on_tape). The
    prediction is the raw 1x1 head output, not clamped.
    """
    arch = config.architecture
    slot = config.ghu_slot
    new_layers = []
    m = state.m
    z = state.z
    inp = x
    for k in range(config.L):
        if arch == "stacked_convlstm":
            st = cells.conv_lstm_step(tparams.cells[k], inp, state.layers[k])
            inp = st.h
        elif arch == "deep_transition_convlstm":
            chain = state.layers[config.L - 1] if k == 0 else new_layers[k - 1]
            st = cells.conv_lstm_step(tparams.cells[k], inp if k == 0 else None, chain)
            inp = st.h
        elif arch in ("predrnn", "predrnn_ghu"):
            st, m = cells.st_lstm_step(tparams.cells[k], inp, state.layers[k], m)
            inp = st.h
        else:
            step_fn = cells.causal_lstm_step_s2t if arch == "predrnnpp_variant" \
                else cells.causal_lstm_step
            st, m = step_fn(tparams.cells[k], inp, state.layers[k], m)
            inp = st.h
        new_layers.append(st)
        if slot is not None and slot[0] == k + 1:
            z = cells.ghu_step(tparams.ghu, st.h, z)
            inp = z
    pred = ag.conv2d(new_layers[-1].h, tparams.w_out, tparams.b_out)
    return NetworkState(new_layers, m, z), pred


@dataclass(frozen=True)
class SequenceBatch:
    """Frames [B, T, C, H, W] with the context/forecast split index."""

    frames: np.ndarray
    split: int

    def __post_init__(self):
        f = self.frames
        if f.ndim != 5:
            raise ShapeError(f"frames must be [B, T, C, H, W], got {f.shape}")
        if not 0 < self.split < f.shape[1]:
            raise ConfigError(f"split {self.split} outside 1..{f.shape[1] - 1}")


def full_context_mask(t_in, t_out):
    """The inference mask: ground truth through the context, then feedback."""
    return [s < t_in for s in range(t_in + t_out - 1)]


@dataclass
class RolloutTrace:
    """Node-level record of one unrolled pass, for loss and probing."""

    tape: object
    inputs: list
    predictions: list
    states: list
    split: int

    def target_predictions(self):
        """Prediction nodes for frames split..T-1, in order."""
        return self.predictions[self.split - 1:]


def rollout_trace(config, tparams, tape, batch, mask):
    """Unroll the network over a SequenceBatch on an existing tape.

    mask has one boolean per step (length T-1): True feeds the ground
    truth frame at that step, False feeds the previous raw prediction.
    Context steps (before the split) must be True.
    """
    frames = batch.frames
    b, t, c, h, w = frames.shape
    if len(mask) != t - 1:
        raise ConfigError(f"mask length {len(mask)} != steps {t - 1}")
    if any(not mask[s] for s in range(batch.split)):
        raise ConfigError("context steps must feed ground truth")
    if (c, h, w) != (config.input_channels, *config.input_extent):
        raise ShapeError(f"frames {frames.shape[2:]} do not match config "
                         f"({config.input_channels}, {config.input_extent})")
    state = init_state(config, tape, b, frames.dtype)
    inputs, predictions, states = [], [], []
    pred = None
    for s in range(t - 1):
        if mask[s]:
            x = tape.leaf(np.ascontiguousarray(frames[:, s]), f"frame{s}")
        else:
            x = pred
        state, pred = step(config, tparams, x, state)
        inputs.append(x)
        predictions.append(pred)
        states.append(state)
    return RolloutTrace(tape, inputs, predictions, states, batch.split)


def rollout(config, params, batch, mask=None):
    """Run the network over a batch; returns frames [B, T_out, C, H, W].

    Predictions are clamped to [0, 1] on the way out; internally the raw
    head output is what feeds back. With mask omitted, the forecast phase
    runs closed-loop on its own predictions.
    """
    t = batch.frames.shape[1]
    if mask is None:
        mask = [s < batch.split for s in range(t - 1)]
    tape = ag.Tape()
    trace = rollout_trace(config, params.on_tape(tape), tape, batch, mask)
    preds = np.stack([n.value for n in trace.target_predictions()], axis=1)
    return np.clip(preds, 0.0, 1.0)


def save_checkpoint(path, config, params):
    """Write config.json, manifest.json, and one STPT file per tensor."""
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, "config.json"), "w", encoding="utf-8") as fh:
        fh.write(config.to_json())
    manifest = []
    for name, arr in params.named():
        fname = name + ".stpt"
        stpt.write_stpt(os.path.join(path, fname), arr)
        manifest.append([name, fname])
    with open(os.path.join(path, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def load_checkpoint(path):
    """Read a checkpoint directory back into (config, params)."""
    cfg_path = os.path.join(path, "config.json")
    if not os.path.isfile(cfg_path):
        raise FileNotFoundError(f"no checkpoint at {path}")
    with open(cfg_path, encoding="utf-8") as fh:
        config = NetworkConfig.from_json(fh.read())
    with open(os.path.join(path, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    tensors = {}
    for entry in manifest:
        name, fname = entry
        tensors[name] = stpt.read_stpt(os.path.join(path, fname))
    proto = zeros_network(config)
    expected = {n for n, _ in proto.named()}
    if set(tensors) != expected:
        raise FormatError(f"checkpoint tensors {sorted(set(tensors))} do not match "
                          f"architecture (wants {sorted(expected)})")
    cell_list = []
    for k, cell_proto in enumerate(proto.cells):
        fields = {f.name: tensors[f"layer{k}.{f.name}"]
                  for f in dataclasses.fields(cell_proto)}
        cell_list.append(type(cell_proto)(**fields))
    ghu = None
    if config.ghu_slot is not None:
        ghu = cells.GhuParams(**{f.name: tensors[f"ghu.{f.name}"]
                                 for f in dataclasses.fields(cells.GhuParams)})
    params = NetworkParams(tuple(cell_list), ghu, tensors["head.w_out"], tensors["head.b_out"])
    for (name, have), (_, want) in zip(params.named(), proto.named()):
        if have.shape != want.shape:
            raise FormatError(f"checkpoint tensor {name} has shape {have.shape}, "
                              f"architecture wants {want.shape}")
    return config, params
