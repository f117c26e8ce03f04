"""Editing images without decoding them.

Two held-out images are compressed.  Swapping texture payloads repaints
image A with B's colours; replacing the structure payload redraws A's
geometry while keeping its texture bytes.  Needs the reference models from
03_end_to_end.py.

    python demos/04_manipulation.py [--a 0 --b 1]
"""
import argparse
import json
from pathlib import Path

from concodec.bitstream import Codec, compress, decompress, replace_structure, swap_texture
from concodec.imagecore import save_image
from concodec.protocol import MARKER, held_out

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--run-dir", default=ROOT / ".cache" / "smoke", type=Path)
    ap.add_argument("--out", default=ROOT / "demos" / "out", type=Path)
    ap.add_argument("--a", type=int, default=0)
    ap.add_argument("--b", type=int, default=1)
    args = ap.parse_args()
    if not (args.run_dir / MARKER).exists():
        raise SystemExit("no trained models yet; run demos/03_end_to_end.py first")
    args.out.mkdir(parents=True, exist_ok=True)
    codec = Codec.load(args.run_dir)
    images, _ = held_out(json.loads((args.run_dir / MARKER).read_text()))
    a_img, b_img = images[args.a], images[args.b]
    a, b = compress(a_img, codec), compress(b_img, codec)

    swapped = swap_texture(a, b)
    print(f"Swap: structure bytes from A ({len(a.structure)} B), texture bytes from B ({len(b.texture)} B).")
    out = decompress(swapped, codec)
    fmt = lambda v: "(" + ", ".join(f"{x:.2f}" for x in v) + ")"
    print(f"  mean RGB  A {fmt(a_img.reshape(-1, 3).mean(0))}  B {fmt(b_img.reshape(-1, 3).mean(0))}"
          f"  swap {fmt(out.reshape(-1, 3).mean(0))}")

    edited_map = codec.edges(a_img).copy()
    edited_map[:, 31] = 1  # draw a vertical line through the middle
    edited = replace_structure(a, edited_map, codec.cfg)
    assert edited.texture == a.texture
    print("Structure edit: a vertical line was added; texture bytes are untouched.")

    for name, img in (("a", a_img), ("b", b_img), ("a_decoded", decompress(a, codec)),
                      ("swap", out), ("edited", decompress(edited, codec))):
        save_image(args.out / f"manip_{name}.png", img)
    print(f"Images written to {args.out}")


if __name__ == "__main__":
    main()
