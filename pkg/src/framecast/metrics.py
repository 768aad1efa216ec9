"""Frame-quality metrics: per-frame MSE, windowed SSIM, PSNR.

MSE follows the sum-over-pixels convention: per frame, the squared
error summed over channels and pixels, then averaged over the batch
(pixel values in [0,1]). A flag switches to pixel-mean MSE. SSIM uses
an 11x11 Gaussian window, sigma 1.5, K1=0.01, K2=0.03, dynamic range 1,
averaged over valid window positions; frames smaller than the window
fall back to global statistics. PSNR is 10*log10(1/pixel-mean MSE)
with +inf for identical frames.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _check_pair(pred, target):
    if pred.shape != target.shape:
        raise ShapeError(f"pred {pred.shape} vs target {target.shape}")


def mse_per_frame(pred, target, pixel_mean=False):
    """Per-frame squared error for [B, T, C, H, W] (or [T, C, H, W]) arrays.

    Default is the sum over all channels and pixels of one frame,
    averaged over the batch; pixel_mean=True averages over pixels too.
    """
    pred = np.asarray(pred)
    target = np.asarray(target)
    _check_pair(pred, target)
    if pred.ndim == 4:
        pred, target = pred[None], target[None]
    if pred.ndim != 5:
        raise ShapeError(f"expected [B,T,C,H,W] or [T,C,H,W], got {pred.shape}")
    diff = pred.astype(np.float64) - target.astype(np.float64)
    sq = diff * diff
    per_frame = sq.sum(axis=(2, 3, 4))
    if pixel_mean:
        per_frame = per_frame / float(np.prod(pred.shape[2:]))
    return per_frame.mean(axis=0)


def _gaussian_window(size, sigma):
    half = (size - 1) / 2.0
    x = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    w = np.outer(g, g)
    return w / w.sum()


_WINDOW = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)


def ssim(pred, target):
    """Structural similarity of two single-channel frames in [0,1]."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    _check_pair(pred, target)
    if pred.ndim == 3 and pred.shape[0] == 1:
        pred, target = pred[0], target[0]
    if pred.ndim != 2:
        raise ShapeError(f"ssim expects a single-channel frame, got {pred.shape}")
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2
    h, w = pred.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        # Global-statistics fallback: one window spanning the frame.
        n = pred.size
        mu_a, mu_b = pred.sum() / n, target.sum() / n
        ea = (pred * pred).sum() / n
        eb = (target * target).sum() / n
        eab = (pred * target).sum() / n
        va, vb = ea - mu_a * mu_a, eb - mu_b * mu_b
        cov = eab - mu_a * mu_b
        num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
        den = (mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2)
        return float(num / den)
    win_a = np.lib.stride_tricks.sliding_window_view(pred, (SSIM_WINDOW, SSIM_WINDOW))
    win_b = np.lib.stride_tricks.sliding_window_view(target, (SSIM_WINDOW, SSIM_WINDOW))

    def wmean(x):
        return np.einsum("ijkl,kl->ij", x, _WINDOW)

    mu_a, mu_b = wmean(win_a), wmean(win_b)
    va = wmean(win_a * win_a) - mu_a * mu_a
    vb = wmean(win_b * win_b) - mu_b * mu_b
    cov = wmean(win_a * win_b) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2)
    return float((num / den).mean())


def psnr(pred, target):
    """Peak signal-to-noise ratio in dB; +inf for identical frames."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    _check_pair(pred, target)
    mse_mean = float(((pred - target) ** 2).mean())
    if mse_mean == 0.0:
        return math.inf
    return -10.0 * math.log10(mse_mean)


@dataclass(frozen=True)
class FrameMetrics:
    """Per-timestep metric curves plus their aggregate means."""

    mse: np.ndarray
    ssim: np.ndarray
    psnr: np.ndarray

    @property
    def mean_mse(self):
        return float(self.mse.mean())

    @property
    def mean_ssim(self):
        return float(self.ssim.mean())

    @property
    def mean_psnr(self):
        return float(self.psnr.mean())


def evaluate_frames(pred, target):
    """FrameMetrics over [B, T, C, H, W] predictions vs targets."""
    pred = np.asarray(pred)
    target = np.asarray(target)
    _check_pair(pred, target)
    if pred.ndim == 4:
        pred, target = pred[None], target[None]
    if pred.ndim != 5 or pred.shape[2] != 1:
        raise ShapeError(f"expected single-channel [B,T,1,H,W], got {pred.shape}")
    b, t = pred.shape[0], pred.shape[1]
    mse = mse_per_frame(pred, target)
    ssim_t = np.empty(t, dtype=np.float64)
    psnr_t = np.empty(t, dtype=np.float64)
    for s in range(t):
        ssim_t[s] = np.mean([ssim(pred[i, s, 0], target[i, s, 0]) for i in range(b)])
        psnr_t[s] = np.mean([psnr(pred[i, s], target[i, s]) for i in range(b)])
    return FrameMetrics(mse, ssim_t, psnr_t)


def write_report(metrics, path):
    """CSV `t,mse,ssim,psnr` with 1-based t and a final mean row."""
    lines = ["t,mse,ssim,psnr"]
    for s in range(metrics.mse.shape[0]):
        lines.append(f"{s + 1},{float(metrics.mse[s])!r},{float(metrics.ssim[s])!r},"
                     f"{float(metrics.psnr[s])!r}")
    lines.append(f"mean,{metrics.mean_mse!r},{metrics.mean_ssim!r},"
                 f"{metrics.mean_psnr!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_report(path):
    """Parse a report CSV back into (FrameMetrics, mean row tuple)."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "t,mse,ssim,psnr":
            raise ShapeError(f"unexpected report header: {header!r}")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    if not rows or rows[-1][0] != "mean":
        raise ShapeError("report missing mean row")
    body, mean_row = rows[:-1], rows[-1]
    mse = np.array([float(r[1]) for r in body])
    ssim_t = np.array([float(r[2]) for r in body])
    psnr_t = np.array([float(r[3]) for r in body])
    return FrameMetrics(mse, ssim_t, psnr_t), tuple(float(v) for v in mean_row[1:])
