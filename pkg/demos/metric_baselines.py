"""Score trivial forecasters with the frame metrics.

Copy-last repeats the final context frame; static-mean predicts the
per-pixel mean of the context. Neither knows anything about motion,
which the per-frame curves make obvious: both degrade as the digits
drift away from where the context left them.
"""

import numpy as np

from framecast import data, metrics


def main():
    spec = data.DatasetSpec(n_sequences=100, T=10, digits_per_frame=2,
                            frame_extent=32, seed=9, split="val")
    frames, _ = data.generate_dataset(spec)
    t_in = 5
    context, targets = frames[:, :t_in], frames[:, t_in:]

    forecasters = {
        "copy-last": np.repeat(context[:, -1:], targets.shape[1], axis=1),
        "static-mean": np.repeat(context.mean(axis=1, keepdims=True),
                                 targets.shape[1], axis=1),
    }
    for name, preds in forecasters.items():
        fm = metrics.evaluate_frames(preds.astype(np.float32), targets)
        print(f"{name} ({spec.n_sequences} sequences, forecast "
              f"{targets.shape[1]} frames):")
        print("  frame   mse      ssim    psnr")
        for t in range(targets.shape[1]):
            print(f"  t+{t + 1}   {fm.mse[t]:7.2f}   {fm.ssim[t]:.3f}   "
                  f"{fm.psnr[t]:5.2f}")
        print(f"  mean  {fm.mean_mse:7.2f}   {fm.mean_ssim:.3f}   "
              f"{fm.mean_psnr:5.2f}\n")

    print("mse sums squared error over each frame (mean over sequences);")
    print("ssim uses 11x11 gaussian windows above 11 pixels, global")
    print("statistics below; psnr of a perfect frame reports as inf")


if __name__ == "__main__":
    main()
