"""Train (or reuse) the reference models, then compress held-out images.

The first run trains on 500 procedural toy images for 2,000 steps, which
takes a few hours on a CPU.  Later runs reuse the cached models in
.cache/smoke.

    python demos/03_end_to_end.py [--n 8]
"""
import argparse
import logging
from pathlib import Path

import numpy as np

from concodec.bitstream import bpp, compress, decompress
from concodec.imagecore import save_image
from concodec.metrics import psnr, ssim
from concodec.protocol import ensure_smoke_run, held_out, read_validation

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--run-dir", default=ROOT / ".cache" / "smoke", type=Path)
    ap.add_argument("--out", default=ROOT / "demos" / "out", type=Path)
    ap.add_argument("--n", type=int, default=8)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    args.out.mkdir(parents=True, exist_ok=True)

    def progress(step, values):
        if step % 100 == 0:
            print(f"  step {step}: total {values['total']:.3f}, L1 {values['rec']:.4f}")

    codec, info = ensure_smoke_run(args.run_dir, progress=progress)
    steps, val = read_validation(args.run_dir)
    print(f"Validation L1 went from {val[0]:.4f} (step 0) to {val[-1]:.4f} (step {steps[-1]}).")

    images, _ = held_out(info)
    rows = []
    for i, img in enumerate(images[:args.n]):
        bs = compress(img, codec)
        rec = decompress(bs, codec)
        rows.append((bpp(bs, 64, 64), psnr(img, rec), ssim(img, rec)))
        save_image(args.out / f"e2e_{i}_input.png", img)
        save_image(args.out / f"e2e_{i}_decoded.png", rec)
    b, p, s = np.mean(rows, axis=0)
    print(f"{len(rows)} held-out images: {b:.3f} bpp, PSNR {p:.2f} dB, SSIM {s:.3f}")
    print(f"Inputs and reconstructions written to {args.out}")


if __name__ == "__main__":
    main()
