import numpy as np
import pytest

from concodec.bitstream import ConceptualBitstream, load_bitstream
from concodec.cli import main
from concodec.dataset import toy_sample
from concodec.imagecore import load_image, save_image
from concodec.structcodec import encode_map
from concodec.texcodec import QuantizedTexture, entropy_encode


@pytest.fixture
def toy_png(tmp_path):
    img, _ = toy_sample(0, 0, 64)
    path = tmp_path / "toy.png"
    save_image(path, img)
    return path


def test_compress_decompress(untrained_dir, toy_png, tmp_path, capsys):
    ccb, out = tmp_path / "a.ccb", tmp_path / "a.png"
    assert main(["--checkpoint-dir", str(untrained_dir), "compress", str(toy_png), str(ccb)]) == 0
    assert main(["--checkpoint-dir", str(untrained_dir), "decompress", str(ccb), str(out)]) == 0
    assert load_image(out).shape == (64, 64, 3)
    capsys.readouterr()
    assert main(["decompress", str(ccb), "--print-bpp"]) == 0
    bpp = float(capsys.readouterr().out.strip())
    assert bpp == pytest.approx(8 * ccb.stat().st_size / 4096)


def _stream_of_size(n_bytes, h, w):
    structure = encode_map(np.zeros((h // 4, w // 4), dtype=np.uint8)).to_bytes()
    for d in range(1, 2000):
        tex = entropy_encode(QuantizedTexture(np.full(d, 30000, dtype=np.int64), 51))
        bs = ConceptualBitstream(h, w, structure, tex)
        if len(bs) == n_bytes:
            return bs
    raise AssertionError("no stream of the requested size")


def test_print_bpp_exact(tmp_path, capsys):
    bs = _stream_of_size(1024, 256, 256)
    (tmp_path / "s.ccb").write_bytes(bs.to_bytes())
    assert main(["decompress", str(tmp_path / "s.ccb"), "--print-bpp"]) == 0
    assert capsys.readouterr().out.strip() == "0.125000"


def test_missing_checkpoint_exits_2(toy_png, tmp_path, capsys):
    missing = tmp_path / "nowhere"
    code = main(["--checkpoint-dir", str(missing), "compress", str(toy_png), str(tmp_path / "x.ccb")])
    assert code == 2
    assert str(missing) in capsys.readouterr().err
    partial = tmp_path / "partial"
    partial.mkdir()
    assert main(["--checkpoint-dir", str(partial), "compress", str(toy_png), str(tmp_path / "x.ccb")]) == 2
    assert "texenc.tex" in capsys.readouterr().err


def test_usage_errors_exit_2(tmp_path):
    assert main(["frobnicate"]) == 2
    assert main(["compress"]) == 2
    assert main(["--help"]) == 0
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("no.such.key = 1\n")
    assert main(["--config", str(cfg), "gen-dataset", str(tmp_path / "d"), "-n", "1"]) == 2


def test_corrupt_stream_exits_1(tmp_path, capsys):
    (tmp_path / "bad.ccb").write_bytes(b"CCB1garbage")
    assert main(["decompress", str(tmp_path / "bad.ccb"), "--print-bpp"]) == 1
    assert "error" in capsys.readouterr().err


def test_gen_dataset(tmp_path):
    out = tmp_path / "ds"
    assert main(["--seed", "3", "gen-dataset", str(out), "-n", "4"]) == 0
    assert len(list(out.glob("*.png"))) == 8


def test_manipulate_swap_and_edit(untrained_dir, tmp_path):
    ck = ["--checkpoint-dir", str(untrained_dir)]
    paths = []
    for i in range(2):
        img, _ = toy_sample(i, 0, 64)
        save_image(tmp_path / f"{i}.png", img)
        paths.append(tmp_path / f"{i}.ccb")
        assert main(ck + ["compress", str(tmp_path / f"{i}.png"), str(paths[-1])]) == 0
    out = tmp_path / "swap.ccb"
    assert main(ck + ["manipulate", "swap-texture", str(paths[0]), str(paths[1]), "-o", str(out),
                      "--decode", str(tmp_path / "swap.png")]) == 0
    a, b, s = (load_bitstream(p) for p in (*paths, out))
    assert s.structure == a.structure and s.texture == b.texture
    assert (tmp_path / "swap.png").exists()

    edge = np.zeros((64, 64), dtype=np.uint8)
    edge[32, :] = 1
    save_image(tmp_path / "edge.png", edge)
    out2 = tmp_path / "edit.ccb"
    assert main(["manipulate", "edit-structure", str(paths[0]), str(tmp_path / "edge.png"),
                 "-o", str(out2)]) == 0
    e = load_bitstream(out2)
    assert e.texture == a.texture and e.structure != a.structure
    assert main(["manipulate", "swap-texture", str(paths[0]), "-o", str(out)]) == 2


def test_eval_writes_report(untrained_dir, tmp_path, capsys):
    corpus = tmp_path / "corpus"
    assert main(["gen-dataset", str(corpus), "-n", "3"]) == 0
    capsys.readouterr()
    report = tmp_path / "r.csv"
    assert main(["--checkpoint-dir", str(untrained_dir), "eval", str(corpus), "--csv", str(report)]) == 0
    lines = report.read_text().splitlines()
    assert lines[0] == "path,bpp,psnr,ssim" and len(lines) == 4
    assert capsys.readouterr().out.startswith("images=3 ")


def test_eval_with_external_scorer(untrained_dir, tmp_path, capsys):
    corpus = tmp_path / "corpus"
    main(["gen-dataset", str(corpus), "-n", "2"])
    scorer = tmp_path / "scorer.sh"
    scorer.write_text("#!/bin/sh\necho 0.5\n")
    scorer.chmod(0o755)
    report = tmp_path / "r.csv"
    assert main(["--checkpoint-dir", str(untrained_dir), "eval", str(corpus), "--csv", str(report),
                 "--scorer", str(scorer), "--work-dir", str(tmp_path)]) == 0
    assert report.read_text().splitlines()[0].endswith(",external")
    assert "external=0.500000" in capsys.readouterr().out


def test_train_command(tmp_path, capsys):
    ds = tmp_path / "ds"
    main(["gen-dataset", str(ds), "-n", "4", "--size", "16"])
    cfg = tmp_path / "small.cfg"
    cfg.write_text("train.image_size = 16\ngen.k = 3\ngen.channels = 32,32,16,16\ntex.d = 8\n"
                   "train.sr_steps = 2\ntrain.batch_size = 2\ntrain.val_fraction = 0.25\n")
    ck = tmp_path / "ck"
    assert main(["--config", str(cfg), "--checkpoint-dir", str(ck), "train", "--dataset", str(ds),
                 "--steps", "2"]) == 0
    assert (ck / "hfgan.hfg").exists()
    assert main(["--config", str(cfg), "--checkpoint-dir", str(ck), "train", "--dataset",
                 str(tmp_path / "empty")]) == 2
