"""Training loop: composite L1+L2 loss, Adam, scheduled sampling.

The loss is lambda1 * mean(|pred - target|) + lambda2 * mean((pred -
target)^2) over every predicted target pixel. Scheduled sampling draws
one Bernoulli per forecast step (shared across the batch): with
probability p the step still feeds ground truth, and p decays linearly
from 1 to 0 over the first `sampling_iterations` iterations. Context
steps always feed ground truth.
"""

from __future__ import annotations

import dataclasses
import json
import os
import time
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from . import network as nw
from .errors import ConfigError, NumericError, ShapeError


def loss(pred, target, lambda_l1=1.0, lambda_l2=1.0):
    """Composite prediction loss over arrays of identical shape."""
    if pred.shape != target.shape:
        raise ShapeError(f"pred {pred.shape} vs target {target.shape}")
    diff = pred.astype(np.float64) - target.astype(np.float64)
    return float(lambda_l1 * np.abs(diff).mean() + lambda_l2 * (diff * diff).mean())


def loss_node(trace, target_frames, lambda_l1=1.0, lambda_l2=1.0):
    """Taped composite loss over the trace's target predictions.

    target_frames is [B, T_out, C, H, W]; the per-frame means are averaged
    so the value equals one mean over all predicted pixels.
    """
    preds = trace.target_predictions()
    if target_frames.shape[1] != len(preds):
        raise ShapeError(f"{target_frames.shape[1]} target frames for {len(preds)} predictions")
    tape = trace.tape
    total = None
    for s, pred in enumerate(preds):
        tgt = tape.leaf(np.ascontiguousarray(target_frames[:, s]), f"target{s}")
        diff = ag.sub(pred, tgt)
        term = ag.add(ag.scale(ag.mean_all(ag.absolute(diff)), lambda_l1),
                      ag.scale(ag.mean_all(ag.mul(diff, diff)), lambda_l2))
        total = term if total is None else ag.add(total, term)
    return ag.scale(total, 1.0 / len(preds))


@dataclass
class AdamState:
    """Per-parameter Adam accumulators and hyperparameters."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @staticmethod
    def for_param(param, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        return AdamState(np.zeros_like(param), np.zeros_like(param),
                         0, lr, beta1, beta2, eps)


def adam_step(state, param, grad):
    """One bias-corrected Adam update; returns (new state, new param)."""
    if param.shape != grad.shape or param.shape != state.m.shape:
        raise ShapeError(f"param {param.shape}, grad {grad.shape}, state {state.m.shape}")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * (grad * grad)
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_param = param - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = dataclasses.replace(state, m=m, v=v, t=t)
    return new_state, new_param.astype(param.dtype)


def sampling_probability(iteration, sampling_iterations):
    """Linear decay from 1 to 0: max(0, 1 - iteration / sampling_iterations)."""
    if sampling_iterations <= 0:
        raise ConfigError("sampling_iterations must be positive")
    if iteration < 0:
        raise ConfigError("iteration must be >= 0")
    return max(0.0, 1.0 - iteration / sampling_iterations)


@dataclass(frozen=True)
class TrainConfig:
    """Optimization schedule. sampling_iterations defaults to half the run."""

    iterations: int
    batch_size: int = 8
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lambda_l1: float = 1.0
    lambda_l2: float = 1.0
    sampling_iterations: int | None = None
    forget_bias: float = 1.0
    clip_norm: float | None = None
    seed: int = 0
    checkpoint_interval: int | None = None
    log_interval: int = 1

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.lambda_l1 < 0 or self.lambda_l2 < 0:
            raise ConfigError("loss weights must be >= 0")
        if self.lambda_l1 == 0 and self.lambda_l2 == 0:
            raise ConfigError("at least one loss weight must be positive")
        if self.sampling_iterations is not None and self.sampling_iterations < 1:
            raise ConfigError("sampling_iterations must be >= 1")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ConfigError("clip_norm must be positive")
        if self.checkpoint_interval is not None and self.checkpoint_interval < 1:
            raise ConfigError("checkpoint_interval must be >= 1")
        if self.log_interval < 1:
            raise ConfigError("log_interval must be >= 1")

    def to_json(self):
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n"

    @staticmethod
    def from_json(text):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"train config is not valid JSON: {e}") from None
        if not isinstance(d, dict):
            raise ConfigError("train config must be a JSON object")
        known = {f.name for f in dataclasses.fields(TrainConfig)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"train config has unknown fields: {sorted(extra)}")
        if "iterations" not in d:
            raise ConfigError("train config missing field: iterations")
        return TrainConfig(**d)


def first_nonfinite_node(tape):
    """Lowest-id node holding a non-finite value, or None."""
    for node in tape.nodes:
        if not np.isfinite(node.value).all():
            return node
    return None


@dataclass
class TrainResult:
    params: object
    history: list
    checkpoint_path: str | None
    log_path: str | None


def train(net_config, train_config, dataset_frames, out_dir=None, params=None,
          progress=None):
    """Fit a network to [N, T, C, H, W] frames; returns a TrainResult.

    Writes loss.csv (iteration, loss, sampling_p, wall_ms) and a final
    checkpoint under out_dir when given. A non-finite loss aborts with a
    NumericError naming the first offending tape node. Determinism: with
    a fixed seed the whole run, including the written artifacts, repeats
    exactly on the same platform.
    """
    frames = np.asarray(dataset_frames)
    if frames.ndim != 5:
        raise ShapeError(f"dataset frames must be [N, T, C, H, W], got {frames.shape}")
    n_seq, t_total = frames.shape[0], frames.shape[1]
    if t_total != net_config.T_in + net_config.T_out:
        raise ConfigError(f"dataset T={t_total} but network wants "
                          f"{net_config.T_in}+{net_config.T_out}")
    split = net_config.T_in
    n_steps = t_total - 1
    rng = np.random.default_rng(np.random.SeedSequence(train_config.seed))
    if params is None:
        params = nw.init_network(net_config, seed=train_config.seed,
                                 forget_bias=train_config.forget_bias)
    names = [n for n, _ in params.named()]
    values = dict(params.named())
    adam = {n: AdamState.for_param(values[n], train_config.lr, train_config.beta1,
                                   train_config.beta2, train_config.eps)
            for n in names}
    n_ss = train_config.sampling_iterations
    if n_ss is None:
        n_ss = max(1, train_config.iterations // 2)

    log_path = None
    log_fh = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        log_path = os.path.join(out_dir, "loss.csv")
        log_fh = open(log_path, "w", encoding="utf-8")
        log_fh.write("iteration,loss,sampling_p,wall_ms\n")

    history = []
    try:
        for it in range(train_config.iterations):
            t0 = time.perf_counter()
            idx = rng.integers(0, n_seq, size=train_config.batch_size)
            p = sampling_probability(it, n_ss)
            draws = rng.random(n_steps - split)
            mask = [True] * split + [bool(dr < p) for dr in draws]
            batch = nw.SequenceBatch(np.ascontiguousarray(frames[idx]), split)

            tape = ag.Tape()
            tparams = params.on_tape(tape)
            trace = nw.rollout_trace(net_config, tparams, tape, batch, mask)
            lnode = loss_node(trace, batch.frames[:, split:],
                              train_config.lambda_l1, train_config.lambda_l2)
            loss_value = float(lnode.value[0])
            if not np.isfinite(loss_value):
                bad = first_nonfinite_node(tape)
                where = f"node {bad.id} ({bad.op}" + (f", {bad.name})" if bad.name else ")")
                raise NumericError(
                    f"non-finite loss at iteration {it}; first non-finite value at {where}")

            leaf_by_name = {n.name: n for n in tape.nodes
                            if n.op == "leaf" and n.name in adam}
            report = ag.backward(tape, lnode, probes=list(leaf_by_name.values()))
            grads = {name: report.gradient(node) for name, node in leaf_by_name.items()}
            if train_config.clip_norm is not None:
                total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
                if total > train_config.clip_norm:
                    s = train_config.clip_norm / total
                    grads = {n: g * g.dtype.type(s) for n, g in grads.items()}
            for name in names:
                adam[name], values[name] = adam_step(adam[name], values[name], grads[name])
            params = _rebuild(params, values)
            # drop this iteration's graph now, not when the names rebind
            # mid-way through the next forward pass
            del tape, tparams, trace, lnode, leaf_by_name, report, grads

            wall_ms = (time.perf_counter() - t0) * 1000.0
            history.append((it, loss_value, p))
            if log_fh is not None and (it % train_config.log_interval == 0
                                       or it == train_config.iterations - 1):
                log_fh.write(f"{it},{loss_value!r},{p!r},{wall_ms:.3f}\n")
            if progress is not None:
                progress(it, loss_value)
            interval = train_config.checkpoint_interval
            if out_dir is not None and interval is not None and (it + 1) % interval == 0 \
                    and (it + 1) < train_config.iterations:
                nw.save_checkpoint(os.path.join(out_dir, f"checkpoint_{it + 1:06d}"),
                                   net_config, params)
    finally:
        if log_fh is not None:
            log_fh.close()

    ckpt = None
    if out_dir is not None:
        ckpt = os.path.join(out_dir, "checkpoint_final")
        nw.save_checkpoint(ckpt, net_config, params)
    return TrainResult(params, history, ckpt, log_path)


def _rebuild(params, values):
    """NetworkParams from the canonical name -> array mapping."""
    from . import cells as cells_mod

    new_cells = []
    for k, cp in enumerate(params.cells):
        fields = {f.name: values[f"layer{k}.{f.name}"]
                  for f in dataclasses.fields(cp)}
        new_cells.append(type(cp)(**fields))
    ghu = None
    if params.ghu is not None:
        ghu = cells_mod.GhuParams(**{f.name: values[f"ghu.{f.name}"]
                                     for f in dataclasses.fields(cells_mod.GhuParams)})
    return nw.NetworkParams(tuple(new_cells), ghu, values["head.w_out"], values["head.b_out"])
