"""Command-line interface: ``concodec <command> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from . import config as config_mod
from .bitstream import (
    Codec, bpp, compress, decompress, load_bitstream, replace_structure,
    save_bitstream, swap_texture,
)
from .dataset import IMAGE_SUFFIX, _fit, gen_dataset, load_folder
from .errors import CodecError, ConfigError
from .imagecore import load_image, load_map, save_image
from .metrics import EvalReport, EvalRow, external_score, psnr, ssim
from .training import train

log = logging.getLogger("concodec")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _config(args):
    cfg = config_mod.load_config(args.config)
    if args.seed is not None:
        cfg["train.seed"] = args.seed
    return cfg


def _codec(args, cfg=None):
    if not args.checkpoint_dir:
        raise UsageError("--checkpoint-dir is required for this command")
    directory = Path(args.checkpoint_dir)
    if not directory.is_dir():
        raise UsageError(f"checkpoint directory not found: {directory}")
    try:
        return Codec.load(directory, cfg if args.config else None)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None


def _seed(args):
    if args.seed is not None:
        torch.manual_seed(args.seed)
        np.random.seed(args.seed)


def cmd_compress(args):
    cfg = _config(args)
    codec = _codec(args, cfg)
    img = load_image(args.input)
    bs = compress(img, codec, full_res=args.full_res)
    save_bitstream(args.output, bs)
    print(f"{bpp(bs, bs.height, bs.width):.6f}" if args.print_bpp else
          f"wrote {args.output}: {len(bs)} bytes, {bpp(bs, bs.height, bs.width):.4f} bpp")


def cmd_decompress(args):
    bs = load_bitstream(args.input)
    if args.print_bpp:
        print(f"{bpp(bs, bs.height, bs.width):.6f}")
    if args.output is None:
        if not args.print_bpp:
            raise UsageError("decompress needs an output path (or --print-bpp)")
        return
    codec = _codec(args, _config(args))
    save_image(args.output, decompress(bs, codec))
    if not args.print_bpp:
        print(f"wrote {args.output}")


def cmd_train(args):
    cfg = _config(args)
    if args.steps is not None:
        cfg["train.steps"] = args.steps
    dataset_dir = args.dataset or cfg["train.dataset_dir"]
    if not dataset_dir:
        raise ConfigError("no dataset: pass --dataset or set train.dataset_dir")
    if not args.checkpoint_dir:
        raise UsageError("--checkpoint-dir is required for train")
    _seed(args)
    images, maps = load_folder(dataset_dir, cfg["train.image_size"])
    if not args.use_dataset_maps:
        maps = None

    def progress(step, values):
        if step % args.log_every == 0:
            log.info("step %d total %.4f rec %.4f", step, values["total"], values["rec"])

    train(cfg, images, maps, out_dir=args.checkpoint_dir, progress=progress)
    print(f"checkpoints written to {args.checkpoint_dir}")


def cmd_gen_dataset(args):
    if args.n < 0:
        raise UsageError("-n must be nonnegative")
    seed = args.seed if args.seed is not None else 0
    paths = gen_dataset(args.out_dir, args.n, seed, args.size)
    print(f"wrote {2 * len(paths)} files to {args.out_dir}")


def cmd_manipulate(args):
    if args.mode == "swap-texture":
        if len(args.inputs) != 2:
            raise UsageError("swap-texture takes two bitstreams: STRUCTURE_SOURCE TEXTURE_SOURCE")
        a, b = (load_bitstream(p) for p in args.inputs)
        try:
            out = swap_texture(a, b)
        except ValueError as exc:
            raise UsageError(f"incompatible bitstreams: {exc}") from None
    else:
        if len(args.inputs) != 2:
            raise UsageError("edit-structure takes a bitstream and an edge-map PNG")
        bs = load_bitstream(args.inputs[0])
        edited = load_map(args.inputs[1])
        try:
            out = replace_structure(bs, edited, _config(args))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    save_bitstream(args.output, out)
    print(f"wrote {args.output}")
    if args.decode:
        codec = _codec(args, _config(args))
        save_image(args.decode, decompress(out, codec))


def _corpus_files(directory):
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"corpus directory not found: {directory}")
    files = sorted(directory.glob(f"*{IMAGE_SUFFIX}")) or sorted(directory.glob("*.png"))
    if not files:
        raise ConfigError(f"no PNG images in {directory}")
    return files


def evaluate_corpus(files, codec, scorer=None, work_dir=None):
    report = EvalReport()
    for path in files:
        img = _fit(load_image(path), codec.resolution)
        bs = compress(img, codec)
        rec = decompress(bs, codec)
        ext = None
        if scorer:
            work = Path(work_dir or ".")
            orig_p, rec_p = work / "_eval_orig.png", work / "_eval_rec.png"
            save_image(orig_p, img)
            save_image(rec_p, rec)
            ext = external_score(scorer, orig_p, rec_p)
        report.rows.append(EvalRow(str(path), bpp(bs, bs.height, bs.width), psnr(img, rec), ssim(img, rec), ext))
    return report


def cmd_eval(args):
    files = _corpus_files(args.corpus_dir)
    codec = _codec(args, _config(args))
    report = evaluate_corpus(files, codec, args.scorer, args.work_dir)
    if args.csv:
        report.write_csv(args.csv)
    print(report.summary())


def build_parser():
    parser = argparse.ArgumentParser(prog="concodec", description="Structure/texture conceptual image codec")
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--seed", type=int, help="seed for all randomness")
    parser.add_argument("--checkpoint-dir", help="directory holding texenc.tex, hfgan.hfg, edge_sr.esr")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="encode a PNG into a .ccb bitstream")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--full-res", action="store_true", help="store the structure layer without downsampling")
    p.add_argument("--print-bpp", action="store_true", help="print only the bits per pixel")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("decompress", help="decode a .ccb bitstream into a PNG")
    p.add_argument("input")
    p.add_argument("output", nargs="?")
    p.add_argument("--print-bpp", action="store_true", help="print the stream's bits per pixel")
    p.set_defaults(func=cmd_decompress)

    p = sub.add_parser("train", help="train encoder, generator and edge upsampler")
    p.add_argument("--dataset", help="image folder (overrides train.dataset_dir)")
    p.add_argument("--steps", type=int, help="override train.steps")
    p.add_argument("--use-dataset-maps", action="store_true",
                   help="train on the folder's *_map.png files instead of Canny edges")
    p.add_argument("--log-every", type=int, default=50)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gen-dataset", help="write a procedural toy (image, edge map) corpus")
    p.add_argument("out_dir")
    p.add_argument("-n", type=int, default=500)
    p.add_argument("--size", type=int, default=64)
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("manipulate", help="compressed-domain editing")
    p.add_argument("mode", choices=["swap-texture", "edit-structure"])
    p.add_argument("inputs", nargs="+")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--decode", help="also write the decoded result to this PNG")
    p.set_defaults(func=cmd_manipulate)

    p = sub.add_parser("eval", help="bpp / PSNR / SSIM over a corpus")
    p.add_argument("corpus_dir")
    p.add_argument("--csv", help="write per-image rows to this CSV")
    p.add_argument("--scorer", help="external scorer command, called as CMD ORIGINAL RECONSTRUCTED")
    p.add_argument("--work-dir", help="scratch directory for the external scorer")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: --help exits 0, bad usage exits 2
        return exc.code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        _config(args)  # reject a bad config file whatever the command
        args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CodecError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
