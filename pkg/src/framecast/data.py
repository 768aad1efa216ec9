"""Bouncing-digit sequence generation, persistence, and occlusion stats.

Digits are sprites moving at fixed speed inside a square frame, with
elastic reflection at the walls and pixelwise-max composition. Ten
builtin glyphs are drawn procedurally from line segments so nothing
external is required; a sprite file in the tensor container format can
replace them. Train/val/test splits draw from disjoint sprite ids so
evaluation digits are never seen in training.

A dataset on disk is a directory of three files: data.stpt (u8 pixels
[N, T, 1, H, W], scaled by 255 with round half up), spec.json, and
trajectories.csv with columns seq,t,digit,x,y,w,h.
"""

from __future__ import annotations

import dataclasses
import functools
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, FormatError, ShapeError
from .stpt import read_stpt, write_stpt

SPLITS = ("train", "val", "test")

# Classic seven-segment strokes in a normalized box, x right, y down.
_SEG = {
    "A": ((0.22, 0.10), (0.78, 0.10)),
    "B": ((0.78, 0.10), (0.78, 0.50)),
    "C": ((0.78, 0.50), (0.78, 0.90)),
    "D": ((0.22, 0.90), (0.78, 0.90)),
    "E": ((0.22, 0.50), (0.22, 0.90)),
    "F": ((0.22, 0.10), (0.22, 0.50)),
    "G": ((0.22, 0.50), (0.78, 0.50)),
}

_DIGIT_SEGMENTS = (
    "ABCDEF",   # 0
    "BC",       # 1
    "ABGED",    # 2
    "ABGCD",    # 3
    "FGBC",     # 4
    "AFGCD",    # 5
    "AFGECD",   # 6
    "ABC",      # 7
    "ABCDEFG",  # 8
    "ABFGCD",   # 9
)


@dataclass(frozen=True)
class DigitSprite:
    """A grayscale glyph in [0,1] with its source id."""

    glyph: np.ndarray
    source_id: int

    def __post_init__(self):
        g = self.glyph
        if not isinstance(g, np.ndarray) or g.ndim != 2:
            raise ShapeError("sprite glyph must be a 2D array")
        if float(g.max(initial=0.0)) <= 0.0:
            raise ConfigError(f"sprite {self.source_id} is entirely zero")
        if float(g.min()) < 0.0 or float(g.max()) > 1.0:
            raise ConfigError(f"sprite {self.source_id} has values outside [0,1]")


def _segment_distance(px, py, a, b):
    """Distance from each (px,py) to the segment a-b, all in glyph units."""
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    norm2 = dx * dx + dy * dy
    if norm2 == 0.0:
        t = np.zeros_like(px)
    else:
        t = np.clip(((px - ax) * dx + (py - ay) * dy) / norm2, 0.0, 1.0)
    return np.hypot(px - (ax + t * dx), py - (ay + t * dy))


@functools.lru_cache(maxsize=32)
def builtin_sprites(size):
    """The ten stroke-drawn glyphs rendered at `size` x `size` pixels."""
    if size < 4:
        raise ConfigError(f"builtin sprite size must be >= 4, got {size}")
    coords = (np.arange(size, dtype=np.float64) + 0.5) / size
    py, px = np.meshgrid(coords, coords, indexing="ij")
    core = max(0.055, 0.5 / size)
    feather = core
    sprites = []
    for digit, segs in enumerate(_DIGIT_SEGMENTS):
        glyph = np.zeros((size, size), dtype=np.float64)
        for name in segs:
            d = _segment_distance(px, py, *_SEG[name])
            np.maximum(glyph, np.clip(1.0 - (d - core) / feather, 0.0, 1.0), out=glyph)
        peak = float(glyph.max())
        if peak < 1.0:
            glyph /= peak
        glyph = glyph.astype(np.float32)
        glyph.setflags(write=False)
        sprites.append(DigitSprite(glyph, digit))
    return tuple(sprites)


def load_sprites(path):
    """Sprites from a rank-3 tensor file [n, h, w]; u8 is rescaled to [0,1]."""
    arr = read_stpt(path)
    if arr.ndim != 3:
        raise FormatError(f"sprite file must be rank 3 [n, h, w], got rank {arr.ndim}")
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float32) / np.float32(255.0)
    else:
        arr = arr.astype(np.float32)
    return tuple(DigitSprite(np.ascontiguousarray(arr[i]), i) for i in range(arr.shape[0]))


def split_sprite_ids(n_sprites, split):
    """Disjoint id ranges: roughly 60/20/20 in id order."""
    if split not in SPLITS:
        raise ConfigError(f"split must be one of {SPLITS}, got {split!r}")
    cut1 = int(math.floor(0.6 * n_sprites + 0.5))
    cut2 = int(math.floor(0.8 * n_sprites + 0.5))
    lo, hi = {"train": (0, cut1), "val": (cut1, cut2), "test": (cut2, n_sprites)}[split]
    ids = list(range(lo, hi))
    if not ids:
        raise ConfigError(f"no sprites left for split {split!r} out of {n_sprites}")
    return ids


@dataclass(frozen=True)
class DatasetSpec:
    """One split's generation recipe. Frames are square; speed scales as
    3 px/step at extent 64."""

    n_sequences: int
    T: int
    digits_per_frame: int = 2
    frame_extent: int = 64
    seed: int = 0
    split: str = "train"
    source: str = "builtin"

    def __post_init__(self):
        if self.n_sequences < 1:
            raise ConfigError("n_sequences must be >= 1")
        if self.T < 2:
            raise ConfigError("T must be >= 2")
        if self.digits_per_frame < 1:
            raise ConfigError("digits_per_frame must be >= 1")
        if self.frame_extent < 8:
            raise ConfigError("frame_extent must be >= 8")
        if self.split not in SPLITS:
            raise ConfigError(f"split must be one of {SPLITS}, got {self.split!r}")

    @property
    def speed(self):
        return 3.0 * self.frame_extent / 64.0

    def to_json(self):
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n"

    @staticmethod
    def from_json(text):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"dataset spec is not valid JSON: {e}") from None
        if not isinstance(d, dict):
            raise ConfigError("dataset spec must be a JSON object")
        known = {f.name for f in dataclasses.fields(DatasetSpec)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"dataset spec has unknown fields: {sorted(extra)}")
        for required in ("n_sequences", "T"):
            if required not in d:
                raise ConfigError(f"dataset spec missing field: {required}")
        return DatasetSpec(**d)


def sprites_for_spec(spec):
    """The sprite pool the spec's split may draw from, checked against the frame."""
    if spec.source == "builtin":
        size = max(4, int(math.floor(28.0 * spec.frame_extent / 64.0 + 0.5)))
        bank = builtin_sprites(size)
    else:
        bank = load_sprites(spec.source)
    pool = [bank[i] for i in split_sprite_ids(len(bank), spec.split)]
    for sp in pool:
        h, w = sp.glyph.shape
        if h > spec.frame_extent or w > spec.frame_extent:
            raise ConfigError(
                f"sprite {sp.source_id} is {h}x{w} but the frame extent is "
                f"{spec.frame_extent}; sprites must fit inside the frame")
    return pool


def bounce_1d(pos, vel, hi):
    """One reflection step on [0, hi]: advance, then fold back at the walls."""
    pos = pos + vel
    if hi <= 0.0:
        return 0.0, vel
    while pos < 0.0 or pos > hi:
        if pos < 0.0:
            pos, vel = -pos, -vel
        else:
            pos, vel = 2.0 * hi - pos, -vel
    return pos, vel


def simulate_trajectory(start, velocity, limits, t_steps):
    """Float top-left positions [T, 2] for a box bouncing in [0,lim] per axis."""
    pos = [float(start[0]), float(start[1])]
    vel = [float(velocity[0]), float(velocity[1])]
    out = np.empty((t_steps, 2), dtype=np.float64)
    out[0] = pos
    for t in range(1, t_steps):
        for axis in range(2):
            pos[axis], vel[axis] = bounce_1d(pos[axis], vel[axis], float(limits[axis]))
        out[t] = pos
    return out


@dataclass(frozen=True)
class Trajectory:
    """One digit's motion: integer render positions plus launch velocity."""

    source_id: int
    width: int
    height: int
    positions: np.ndarray
    velocity: tuple

    def boxes(self):
        """[T, 4] integer (x, y, w, h) bounding boxes."""
        t = self.positions.shape[0]
        out = np.empty((t, 4), dtype=np.int64)
        out[:, 0:2] = self.positions
        out[:, 2] = self.width
        out[:, 3] = self.height
        return out


def render_frame(sprites, positions, extent):
    """Max-composite sprites at integer (x, y) top-left positions."""
    frame = np.zeros((extent, extent), dtype=np.float32)
    for sp, (x, y) in zip(sprites, positions):
        h, w = sp.glyph.shape
        region = frame[y:y + h, x:x + w]
        np.maximum(region, sp.glyph, out=region)
    return frame


def generate_sequence(spec, rng, sprites=None):
    """One sequence: frames [T, 1, H, W] float32 plus one Trajectory per digit.

    Per digit, in order: sprite choice, start x, start y, launch angle.
    Start positions are uniform over the valid placements; speed is fixed
    and the angle uniform in [0, 2pi).
    """
    if sprites is None:
        sprites = sprites_for_spec(spec)
    extent = spec.frame_extent
    chosen, trajs = [], []
    for _ in range(spec.digits_per_frame):
        sp = sprites[int(rng.integers(0, len(sprites)))]
        h, w = sp.glyph.shape
        limits = (extent - w, extent - h)
        start = (rng.uniform(0.0, limits[0]), rng.uniform(0.0, limits[1]))
        theta = rng.uniform(0.0, 2.0 * math.pi)
        vel = (spec.speed * math.cos(theta), spec.speed * math.sin(theta))
        float_pos = simulate_trajectory(start, vel, limits, spec.T)
        int_pos = np.floor(float_pos + 0.5).astype(np.int64)
        chosen.append(sp)
        trajs.append(Trajectory(sp.source_id, w, h, int_pos, vel))
    frames = np.empty((spec.T, 1, extent, extent), dtype=np.float32)
    for t in range(spec.T):
        frames[t, 0] = render_frame(chosen, [tr.positions[t] for tr in trajs], extent)
    return frames, trajs


_SPLIT_INDEX = {name: i for i, name in enumerate(SPLITS)}


def sequence_rng(spec, index):
    """The generator for sequence `index`; independent of generation order."""
    key = (_SPLIT_INDEX[spec.split], index)
    return np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=key))


def generate_dataset(spec):
    """All sequences for a spec: ([N, T, 1, H, W] float32, trajectories)."""
    sprites = sprites_for_spec(spec)
    frames = np.empty((spec.n_sequences, spec.T, 1, spec.frame_extent,
                       spec.frame_extent), dtype=np.float32)
    trajectories = []
    for i in range(spec.n_sequences):
        frames[i], trajs = generate_sequence(spec, sequence_rng(spec, i), sprites)
        trajectories.append(trajs)
    return frames, trajectories


@dataclass(frozen=True)
class DatasetHandle:
    """An in-memory dataset: float frames plus per-sequence trajectories."""

    spec: DatasetSpec
    frames: np.ndarray
    trajectories: list


def write_dataset(spec, path):
    """Generate and persist a dataset directory; returns the handle."""
    frames, trajectories = generate_dataset(spec)
    os.makedirs(path, exist_ok=True)
    quantized = np.floor(frames * np.float32(255.0) + np.float32(0.5)).astype(np.uint8)
    write_stpt(os.path.join(path, "data.stpt"), quantized)
    with open(os.path.join(path, "spec.json"), "w", encoding="utf-8") as fh:
        fh.write(spec.to_json())
    with open(os.path.join(path, "trajectories.csv"), "w", encoding="utf-8") as fh:
        fh.write("seq,t,digit,x,y,w,h\n")
        for i, trajs in enumerate(trajectories):
            for t in range(spec.T):
                for tr in trajs:
                    x, y = tr.positions[t]
                    fh.write(f"{i},{t},{tr.source_id},{x},{y},{tr.width},{tr.height}\n")
    return DatasetHandle(spec, quantized.astype(np.float32) / np.float32(255.0),
                         trajectories)


def read_dataset(path):
    """Load a dataset directory written by write_dataset."""
    spec_path = os.path.join(path, "spec.json")
    if not os.path.exists(spec_path):
        raise FileNotFoundError(f"no dataset at {path}: missing spec.json")
    with open(spec_path, encoding="utf-8") as fh:
        spec = DatasetSpec.from_json(fh.read())
    raw = read_stpt(os.path.join(path, "data.stpt"))
    if raw.dtype != np.uint8 or raw.ndim != 5:
        raise FormatError(f"dataset tensor must be u8 [N,T,1,H,W], got "
                          f"{raw.dtype} rank {raw.ndim}")
    frames = raw.astype(np.float32) / np.float32(255.0)
    trajectories = _read_trajectories(os.path.join(path, "trajectories.csv"),
                                      spec) if os.path.exists(
        os.path.join(path, "trajectories.csv")) else None
    return DatasetHandle(spec, frames, trajectories)


def _read_trajectories(path, spec):
    """Rebuild Trajectory lists from the CSV; velocity is not persisted."""
    rows = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "seq,t,digit,x,y,w,h":
            raise FormatError(f"unexpected trajectory header: {header!r}")
        for line in fh:
            seq, t, digit, x, y, w, h = (int(v) for v in line.strip().split(","))
            rows.setdefault(seq, {}).setdefault(t, []).append((digit, x, y, w, h))
    trajectories = []
    for i in range(spec.n_sequences):
        per_t = rows.get(i, {})
        slots = []
        for slot in range(spec.digits_per_frame):
            positions = np.empty((spec.T, 2), dtype=np.int64)
            digit = w = h = None
            for t in range(spec.T):
                entries = per_t.get(t, [])
                if slot >= len(entries):
                    raise FormatError(f"trajectory CSV missing seq {i} t {t} slot {slot}")
                digit, x, y, w, h = entries[slot]
                positions[t] = (x, y)
            slots.append(Trajectory(digit, w, h, positions, (math.nan, math.nan)))
        trajectories.append(slots)
    return trajectories


def boxes_intersect(a, b):
    """Whether two integer (x, y, w, h) boxes share at least one pixel."""
    ax, ay, aw, ah = (int(v) for v in a)
    bx, by, bw, bh = (int(v) for v in b)
    return ax < bx + bw and bx < ax + aw and ay < by + bh and by < ay + ah


def occlusion_frequency(trajectories):
    """Per-timestep fraction of sequences with any pair of digit boxes
    overlapping. Needs at least two digits per sequence."""
    if not trajectories:
        raise ContractError("no trajectories given")
    t_steps = trajectories[0][0].positions.shape[0]
    counts = np.zeros(t_steps, dtype=np.int64)
    for trajs in trajectories:
        if len(trajs) < 2:
            raise ContractError("occlusion frequency needs >= 2 digits per sequence")
        boxes = [tr.boxes() for tr in trajs]
        for t in range(t_steps):
            hit = False
            for i in range(len(boxes)):
                for j in range(i + 1, len(boxes)):
                    if boxes_intersect(boxes[i][t], boxes[j][t]):
                        hit = True
                        break
                if hit:
                    break
            counts[t] += hit
    return counts / float(len(trajectories))
