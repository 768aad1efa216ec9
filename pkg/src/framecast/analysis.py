"""Gradient-propagation study over a trained network.

For each sequence the network is unrolled with ground truth fed at every
step, the composite loss is restricted to a single predicted frame, and
one backward pass collects L2 gradient norms for every fed input frame
and every recurrent state tensor at every step. Norms are averaged
across sequences in float64. Frames fed at or after the loss step are
disconnected from the loss and report exact zeros.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from . import network as nw
from .errors import ContractError, ShapeError


@dataclass(frozen=True)
class GradientStudy:
    """Per-step gradient norms of a single-frame loss.

    Arrays run over steps 1..S where S = T-1; h and c carry one row per
    layer. m covers the stack-top spatial memory and z the highway state;
    either is None when the architecture lacks that state.
    """

    architecture: str
    loss_t: int
    n_sequences: int
    x: np.ndarray
    h: np.ndarray
    c: np.ndarray
    m: np.ndarray | None
    z: np.ndarray | None


def gradient_study(config, params, frames, loss_t, lambda_l1=1.0, lambda_l2=1.0):
    """Average gradient norms over [N, T, C, H, W] sequences.

    loss_t is the 1-based index of the predicted frame carrying the loss,
    within 1..T-1. Runs in float64 whatever the checkpoint dtype, one
    sequence at a time.
    """
    frames = np.asarray(frames)
    if frames.ndim != 5:
        raise ShapeError(f"frames must be [N, T, C, H, W], got {frames.shape}")
    n_seq, t_total = frames.shape[0], frames.shape[1]
    if not 1 <= loss_t <= t_total - 1:
        raise ContractError(f"loss_t {loss_t} outside 1..{t_total - 1}")
    params64 = params.astype(np.float64)
    frames64 = frames.astype(np.float64)
    steps = t_total - 1
    layers = config.L
    sums = {
        "x": np.zeros(steps), "h": np.zeros((layers, steps)),
        "c": np.zeros((layers, steps)),
        "m": np.zeros(steps) if config.architecture in nw._SPATIAL_ARCHS else None,
        "z": np.zeros(steps) if config.ghu_slot is not None else None,
    }
    mask = [True] * steps
    for i in range(n_seq):
        batch = nw.SequenceBatch(frames64[i:i + 1], config.T_in)
        tape = ag.Tape()
        trace = nw.rollout_trace(config, params64.on_tape(tape), tape, batch, mask)
        pred = trace.predictions[loss_t - 1]
        target = tape.leaf(np.ascontiguousarray(frames64[i:i + 1, loss_t]), "target")
        diff = ag.sub(pred, target)
        lnode = ag.add(ag.scale(ag.mean_all(ag.absolute(diff)), lambda_l1),
                       ag.scale(ag.mean_all(ag.mul(diff, diff)), lambda_l2))
        probes = list(trace.inputs)
        for st in trace.states:
            for cs in st.layers:
                probes.extend((cs.h, cs.c))
            if st.m is not None:
                probes.append(st.m)
            if st.z is not None:
                probes.append(st.z)
        report = ag.backward(tape, lnode, probes=probes)
        for s in range(steps):
            st = trace.states[s]
            sums["x"][s] += report.norm(trace.inputs[s])
            for k in range(layers):
                sums["h"][k, s] += report.norm(st.layers[k].h)
                sums["c"][k, s] += report.norm(st.layers[k].c)
            if sums["m"] is not None:
                sums["m"][s] += report.norm(st.m)
            if sums["z"] is not None:
                sums["z"][s] += report.norm(st.z)
    scale = 1.0 / n_seq
    return GradientStudy(
        config.architecture, loss_t, n_seq,
        sums["x"] * scale, sums["h"] * scale, sums["c"] * scale,
        None if sums["m"] is None else sums["m"] * scale,
        None if sums["z"] is None else sums["z"] * scale,
    )


def study_rows(study):
    """(quantity, layer, t, norm) rows sorted by quantity, layer, t.

    Layer is 1-based for the per-layer h and c quantities and 0 for the
    unlayered x, m, and z.
    """
    rows = []
    steps = study.x.shape[0]
    for s in range(steps):
        rows.append(("x", 0, s + 1, float(study.x[s])))
    for k in range(study.h.shape[0]):
        for s in range(steps):
            rows.append(("h", k + 1, s + 1, float(study.h[k, s])))
            rows.append(("c", k + 1, s + 1, float(study.c[k, s])))
    if study.m is not None:
        for s in range(steps):
            rows.append(("m", 0, s + 1, float(study.m[s])))
    if study.z is not None:
        for s in range(steps):
            rows.append(("z", 0, s + 1, float(study.z[s])))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    return rows


def emit_study_csv(study, path):
    """Write `quantity,layer,t,norm` rows in deterministic order."""
    lines = ["quantity,layer,t,norm"]
    for q, layer, t, norm in study_rows(study):
        lines.append(f"{q},{layer},{t},{norm!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_study_csv(path):
    """Parse rows back as a list of (quantity, layer, t, norm)."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "quantity,layer,t,norm":
            raise ShapeError(f"unexpected study header: {header!r}")
        rows = []
        for line in fh:
            if not line.strip():
                continue
            q, layer, t, norm = line.strip().split(",")
            rows.append((q, int(layer), int(t), float(norm)))
    return rows


def _file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def study_metadata(ckpt_dir, data_dir, loss_t, n_sequences):
    """Provenance for a study: ids are sha256 digests of the source files."""
    return {
        "checkpoint": os.path.abspath(ckpt_dir),
        "checkpoint_id": _file_digest(os.path.join(ckpt_dir, "manifest.json")),
        "dataset": os.path.abspath(data_dir),
        "dataset_id": _file_digest(os.path.join(data_dir, "spec.json")),
        "T": loss_t,
        "n_sequences": n_sequences,
    }


def run_gradient_study(ckpt_dir, data_dir, loss_t, n_sequences=None,
                       lambda_l1=1.0, lambda_l2=1.0):
    """Study a stored checkpoint against a stored dataset.

    Returns (study, metadata). n_sequences caps how many sequences are
    read from the front of the dataset; None uses all of them.
    """
    from . import data as data_mod

    config, params = nw.load_checkpoint(ckpt_dir)
    handle = data_mod.read_dataset(data_dir)
    frames = handle.frames
    if n_sequences is not None:
        if n_sequences < 1 or n_sequences > frames.shape[0]:
            raise ContractError(f"n_sequences {n_sequences} outside "
                                f"1..{frames.shape[0]}")
        frames = frames[:n_sequences]
    t_total = config.T_in + config.T_out
    if frames.shape[1] != t_total:
        raise ShapeError(f"dataset T={frames.shape[1]} but checkpoint wants {t_total}")
    study = gradient_study(config, params, frames, loss_t, lambda_l1, lambda_l2)
    meta = study_metadata(ckpt_dir, data_dir, loss_t, study.n_sequences)
    return study, meta
