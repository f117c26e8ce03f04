"""The structure layer, step by step.

Takes one toy image, extracts its edge map, shrinks the map 4x, codes it
losslessly and restores it with Lanczos+threshold.  If a trained edge
upsampler exists (see 03_end_to_end.py) it is compared too.

    python demos/01_structure_layer.py [--out demos/out]
"""
import argparse
from pathlib import Path

from concodec.dataset import toy_sample
from concodec.imagecore import extract_edges, save_image
from concodec.metrics import edge_f1
from concodec.structcodec import (
    decode_map, downsample_map, encode_map, lanczos_upsample_map, load_sr_model, sr_upsample,
)

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default=ROOT / "demos" / "out", type=Path)
    ap.add_argument("--index", type=int, default=3)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    img, _ = toy_sample(args.index)
    edges = extract_edges(img)
    print(f"Canny found {int(edges.sum())} edge pixels in a 64x64 toy image.")

    low = downsample_map(edges)
    payload = encode_map(low)
    print(f"Shrunk 4x to {low.shape[0]}x{low.shape[1]} ({int(low.sum())} pixels set); "
          f"the context coder needs {len(payload.to_bytes())} bytes including its 9-byte header.")
    assert (decode_map(payload.to_bytes()) == low).all()
    print("Decoding gives back the exact low-resolution map.")

    lanczos = lanczos_upsample_map(low)
    print(f"Lanczos + threshold restoration: edge F1 {edge_f1(lanczos, edges):.3f}")
    sr_path = ROOT / ".cache" / "smoke" / "edge_sr.esr"
    if sr_path.exists():
        learned = sr_upsample(load_sr_model(sr_path), low)
        print(f"Learned upsampler restoration:  edge F1 {edge_f1(learned, edges):.3f}")
        save_image(args.out / "structure_learned.png", learned)
    else:
        print("(no trained upsampler yet; run 03_end_to_end.py to train one)")

    save_image(args.out / "structure_input.png", img)
    save_image(args.out / "structure_edges.png", edges)
    save_image(args.out / "structure_lanczos.png", lanczos)
    print(f"Images written to {args.out}")


if __name__ == "__main__":
    main()
