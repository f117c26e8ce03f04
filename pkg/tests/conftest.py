import sys

import numpy as np
import pytest
import torch

from concodec import config as config_mod
from concodec.bitstream import Codec
from concodec.hfgan import Generator, GeneratorConfig, save_hfgan
from concodec.structcodec import EdgeSRModel, save_sr_model
from concodec.texcodec import TextureEncoder, save_encoder
from concodec.training import CONFIG_FILE, ENCODER_FILE, GENERATOR_FILE, SR_FILE


@pytest.fixture(scope="session")
def untrained_dir(tmp_path_factory):
    """Checkpoint directory holding freshly initialised 64px models."""
    torch.manual_seed(0)
    out = tmp_path_factory.mktemp("ckpt")
    save_encoder(TextureEncoder(), out / ENCODER_FILE)
    save_hfgan(out / GENERATOR_FILE, Generator(GeneratorConfig()))
    save_sr_model(EdgeSRModel(), out / SR_FILE)
    (out / CONFIG_FILE).write_text(config_mod.dump_config(config_mod.make_config()))
    return out


@pytest.fixture(scope="session")
def untrained_codec(untrained_dir):
    return Codec.load(untrained_dir)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
