"""Render a few synthetic bouncing-digit sequences as terminal art.

Generates a small two-digit dataset in memory, prints the trajectory
table for the first sequence, shows three of its frames, and finishes
with the per-timestep occlusion rate across the whole set.
"""

import numpy as np

from framecast import data

SHADES = " .:-=+*#%@"


def ascii_frame(frame):
    """One [1, H, W] float frame as rows of shade characters."""
    levels = np.clip(frame[0] * (len(SHADES) - 1), 0, len(SHADES) - 1)
    return ["".join(SHADES[int(v)] for v in row) for row in levels]


def side_by_side(frames, labels, gap="   "):
    blocks = [ascii_frame(f) for f in frames]
    width = len(blocks[0][0])
    print(gap.join(lb.center(width) for lb in labels))
    for rows in zip(*blocks):
        print(gap.join(rows))


def main():
    spec = data.DatasetSpec(n_sequences=40, T=12, digits_per_frame=2,
                            frame_extent=24, seed=5, split="train")
    frames, trajectories = data.generate_dataset(spec)
    print(f"{spec.n_sequences} sequences of {spec.T} frames, "
          f"{spec.frame_extent}x{spec.frame_extent}, "
          f"{spec.digits_per_frame} digits each")
    print(f"pixel range [{frames.min():.2f}, {frames.max():.2f}], "
          f"mean {frames.mean():.3f}\n")

    print("sequence 0 trajectories (positions are top-left corners):")
    for tr in trajectories[0]:
        path = " ".join(f"({x},{y})" for x, y in tr.positions[:6])
        print(f"  digit {tr.source_id}: {tr.width}x{tr.height}, "
              f"velocity {tr.velocity[0]:+.2f},{tr.velocity[1]:+.2f}, "
              f"path {path} ...")
    print()

    picks = [0, spec.T // 2, spec.T - 1]
    side_by_side([frames[0, t] for t in picks], [f"t={t + 1}" for t in picks])

    occ = data.occlusion_frequency(trajectories)
    print("\nocclusion rate by timestep (digit boxes overlapping):")
    print("  " + " ".join(f"{v:.2f}" for v in occ))


if __name__ == "__main__":
    main()
