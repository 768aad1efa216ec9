"""Command-line interface.

Subcommands: generate-data, train, evaluate, predict, analyze-gradients.
Structured input always comes from JSON config files; flags carry paths
and small overrides. Every run writes one manifest JSON recording the
command, configs, seed, build id, timestamps, and outputs. Exit codes:
0 ok, 2 config/contract error, 3 IO or format error, 4 numeric failure.

Heavy imports happen inside the command handlers so that --threads can
pin the BLAS thread pool before the numeric stack loads.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
from datetime import datetime, timezone

from .errors import (ConfigError, ContractError, FormatError, NumericError,
                     ShapeError)

_THREAD_VARS = ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS")


def _build_id():
    from . import __version__

    info = {"version": __version__, "git": None}
    pkg_dir = os.path.dirname(os.path.abspath(__file__))
    try:
        out = subprocess.run(["git", "-C", pkg_dir, "rev-parse", "--short", "HEAD"],
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0:
            info["git"] = out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return info


def _utc_now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_manifest(path, command, configs, seed, started, outputs):
    manifest = {
        "command": command,
        "configs": configs,
        "seed": seed,
        "build": _build_id(),
        "started": started,
        "finished": _utc_now(),
        "outputs": sorted(os.path.abspath(p) for p in outputs),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def _read_text(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def line_chart_svg(path, title, series, x_label, y_label, log_y=False):
    """A small self-contained SVG line chart.

    series is a list of (label, xs, ys); non-finite points are dropped,
    and log_y plots log10 of positive values. Output is deterministic.
    """
    import math

    width, height = 640, 400
    ml, mr, mt, mb = 60, 16, 28, 40
    cleaned = []
    for label, xs, ys in series:
        pts = [(float(x), float(y)) for x, y in zip(xs, ys)
               if math.isfinite(float(x)) and math.isfinite(float(y))
               and (not log_y or float(y) > 0.0)]
        if log_y:
            pts = [(x, math.log10(y)) for x, y in pts]
        if pts:
            cleaned.append((label, pts))
    if not cleaned:
        cleaned = [("empty", [(0.0, 0.0)])]
    all_pts = [p for _, pts in cleaned for p in pts]
    x0 = min(p[0] for p in all_pts)
    x1 = max(p[0] for p in all_pts)
    y0 = min(p[1] for p in all_pts)
    y1 = max(p[1] for p in all_pts)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def sx(x):
        return ml + (x - x0) / (x1 - x0) * (width - ml - mr)

    def sy(y):
        return height - mb - (y - y0) / (y1 - y0) * (height - mt - mb)

    colors = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
              "#8c564b", "#17becf", "#7f7f7f")
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" '
             f'font-family="sans-serif" font-size="13">{title}</text>']
    axis = (f'<line x1="{ml}" y1="{height - mb}" x2="{width - mr}" '
            f'y2="{height - mb}" stroke="black"/>'
            f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height - mb}" '
            f'stroke="black"/>')
    parts.append(axis)
    for frac in (0.0, 0.5, 1.0):
        xv = x0 + frac * (x1 - x0)
        yv = y0 + frac * (y1 - y0)
        parts.append(f'<text x="{sx(xv):.1f}" y="{height - mb + 16}" '
                     f'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="11">{xv:.4g}</text>')
        parts.append(f'<text x="{ml - 6}" y="{sy(yv) + 4:.1f}" '
                     f'text-anchor="end" font-family="sans-serif" '
                     f'font-size="11">{yv:.4g}</text>')
    parts.append(f'<text x="{(ml + width - mr) / 2:.1f}" y="{height - 8}" '
                 f'text-anchor="middle" font-family="sans-serif" '
                 f'font-size="12">{x_label}</text>')
    y_title = f"log10 {y_label}" if log_y else y_label
    parts.append(f'<text x="14" y="{(mt + height - mb) / 2:.1f}" '
                 f'text-anchor="middle" font-family="sans-serif" '
                 f'font-size="12" transform="rotate(-90 14 '
                 f'{(mt + height - mb) / 2:.1f})">{y_title}</text>')
    for i, (label, pts) in enumerate(cleaned):
        color = colors[i % len(colors)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
        parts.append(f'<polyline fill="none" stroke="{color}" '
                     f'stroke-width="1.5" points="{coords}"/>')
        ly = mt + 14 * (i + 1)
        parts.append(f'<line x1="{width - mr - 110}" y1="{ly - 4}" '
                     f'x2="{width - mr - 90}" y2="{ly - 4}" stroke="{color}" '
                     f'stroke-width="2"/>')
        parts.append(f'<text x="{width - mr - 84}" y="{ly}" '
                     f'font-family="sans-serif" font-size="11">{label}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


def cmd_generate_data(args):
    from . import data

    started = _utc_now()
    spec = data.DatasetSpec.from_json(_read_text(args.spec))
    handle = data.write_dataset(spec, args.out)
    outputs = [os.path.join(args.out, n)
               for n in ("data.stpt", "spec.json", "trajectories.csv")]
    write_manifest(os.path.join(args.out, "run_manifest.json"),
                   ["generate-data", "--spec", args.spec, "--out", args.out],
                   {"spec": os.path.abspath(args.spec)}, spec.seed, started, outputs)
    print(f"wrote {handle.frames.shape[0]} sequences of {spec.T} frames "
          f"({spec.frame_extent}x{spec.frame_extent}) to {args.out}")
    return 0


def cmd_train(args):
    from . import data, network, training

    started = _utc_now()
    net_config = network.NetworkConfig.from_json(_read_text(args.net))
    train_config = training.TrainConfig.from_json(_read_text(args.train))
    if args.seed is not None:
        import dataclasses
        train_config = dataclasses.replace(train_config, seed=args.seed)
    handle = data.read_dataset(args.data)
    result = training.train(net_config, train_config, handle.frames, out_dir=args.out)
    outputs = [result.checkpoint_path, result.log_path]
    write_manifest(os.path.join(args.out, "run_manifest.json"),
                   ["train", "--net", args.net, "--train", args.train,
                    "--data", args.data, "--out", args.out],
                   {"net": os.path.abspath(args.net),
                    "train": os.path.abspath(args.train),
                    "data": os.path.abspath(args.data)},
                   train_config.seed, started, outputs)
    if args.plot and result.history:
        line_chart_svg(os.path.join(args.out, "loss.svg"), "training loss",
                       [("loss", [h[0] for h in result.history],
                         [h[1] for h in result.history])],
                       "iteration", "loss")
    final = result.history[-1][1] if result.history else float("nan")
    print(f"trained {train_config.iterations} iterations; final loss "
          f"{final:.6f}; checkpoint at {result.checkpoint_path}")
    return 0


def _load_pair(ckpt, data_dir):
    from . import data, network

    config, params = network.load_checkpoint(ckpt)
    handle = data.read_dataset(data_dir)
    t_total = config.T_in + config.T_out
    if handle.frames.shape[1] != t_total:
        raise ConfigError(f"dataset has T={handle.frames.shape[1]} but the "
                          f"checkpoint wants T_in+T_out={t_total}")
    return config, params, handle


def _predict_all(config, params, frames, batch_size=16):
    import numpy as np

    from . import network

    outs = []
    for lo in range(0, frames.shape[0], batch_size):
        batch = network.SequenceBatch(frames[lo:lo + batch_size], config.T_in)
        outs.append(network.rollout(config, params, batch))
    return np.concatenate(outs, axis=0)


def cmd_evaluate(args):
    from . import metrics

    started = _utc_now()
    config, params, handle = _load_pair(args.ckpt, args.data)
    preds = _predict_all(config, params, handle.frames)
    targets = handle.frames[:, config.T_in:]
    fm = metrics.evaluate_frames(preds, targets)
    metrics.write_report(fm, args.out)
    outputs = [args.out]
    if args.plot:
        stem = os.path.splitext(args.out)[0]
        t_axis = list(range(1, fm.mse.shape[0] + 1))
        for name, values in (("mse", fm.mse), ("ssim", fm.ssim), ("psnr", fm.psnr)):
            svg = f"{stem}_{name}.svg"
            line_chart_svg(svg, f"per-frame {name}", [(name, t_axis, values)],
                           "target frame", name)
            outputs.append(svg)
    write_manifest(args.out + ".manifest.json",
                   ["evaluate", "--ckpt", args.ckpt, "--data", args.data,
                    "--out", args.out],
                   {"ckpt": os.path.abspath(args.ckpt),
                    "data": os.path.abspath(args.data)}, None, started, outputs)
    print(f"evaluated {preds.shape[0]} sequences: mean mse {fm.mean_mse:.4f}, "
          f"ssim {fm.mean_ssim:.4f}, psnr {fm.mean_psnr:.2f}")
    return 0


def cmd_predict(args):
    from . import stpt

    started = _utc_now()
    config, params, handle = _load_pair(args.ckpt, args.data)
    preds = _predict_all(config, params, handle.frames)
    stpt.write_stpt(args.out, preds)
    write_manifest(args.out + ".manifest.json",
                   ["predict", "--ckpt", args.ckpt, "--data", args.data,
                    "--out", args.out],
                   {"ckpt": os.path.abspath(args.ckpt),
                    "data": os.path.abspath(args.data)}, None, started, [args.out])
    print(f"wrote predictions {'x'.join(str(d) for d in preds.shape)} to {args.out}")
    return 0


def cmd_analyze_gradients(args):
    from . import analysis

    started = _utc_now()
    study, meta = analysis.run_gradient_study(args.ckpt, args.data, args.T,
                                              n_sequences=args.n_sequences)
    analysis.emit_study_csv(study, args.out)
    meta_path = os.path.splitext(args.out)[0] + "_meta.json"
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs = [args.out, meta_path]
    if args.plot:
        rows = analysis.study_rows(study)
        series = {}
        for q, layer, t, norm in rows:
            label = q if layer == 0 else f"{q}{layer}"
            series.setdefault(label, ([], []))
            series[label][0].append(t)
            series[label][1].append(norm)
        svg = os.path.splitext(args.out)[0] + ".svg"
        line_chart_svg(svg, f"gradient norms, loss at t={study.loss_t}",
                       [(lb, xs, ys) for lb, (xs, ys) in sorted(series.items())],
                       "t", "gradient norm", log_y=True)
        outputs.append(svg)
    write_manifest(args.out + ".manifest.json",
                   ["analyze-gradients", "--ckpt", args.ckpt, "--data", args.data,
                    "--T", str(args.T), "--out", args.out],
                   {"ckpt": os.path.abspath(args.ckpt),
                    "data": os.path.abspath(args.data)}, None, started, outputs)
    print(f"wrote gradient study ({len(analysis.study_rows(study))} rows) to {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="framecast",
        description="Spatiotemporal sequence prediction: data generation, "
                    "training, evaluation, and gradient analysis.")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap BLAS/OpenMP worker threads")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-data", help="write a synthetic dataset directory")
    p.add_argument("--spec", required=True, help="dataset spec JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("train", help="fit a network and write checkpoints")
    p.add_argument("--net", required=True, help="network config JSON")
    p.add_argument("--train", required=True, help="train config JSON")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--plot", action="store_true", help="emit loss curve SVG")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="frame metrics for a checkpoint on a dataset")
    p.add_argument("--ckpt", required=True, help="checkpoint directory")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="report CSV path")
    p.add_argument("--plot", action="store_true", help="emit metric curve SVGs")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="dump forecast frames as a tensor file")
    p.add_argument("--ckpt", required=True, help="checkpoint directory")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="output .stpt path")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("analyze-gradients", help="gradient-norm study CSV")
    p.add_argument("--ckpt", required=True, help="checkpoint directory")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--T", type=int, required=True,
                   help="1-based predicted frame carrying the loss")
    p.add_argument("--out", required=True, help="study CSV path")
    p.add_argument("--n-sequences", type=int, default=None,
                   help="cap sequences read from the dataset")
    p.add_argument("--plot", action="store_true", help="emit norm curve SVG")
    p.set_defaults(func=cmd_analyze_gradients)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return 2
        for var in _THREAD_VARS:
            os.environ[var] = str(args.threads)
    try:
        return args.func(args)
    except (ConfigError, ContractError, ShapeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (FormatError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
