import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import build_checkpoints, make_images


@pytest.fixture(scope="session")
def checkpoints(tmp_path_factory):
    """(backbone_path, parser_path) for the tiny traced test models."""
    return build_checkpoints(tmp_path_factory.mktemp("ckpt"))


@pytest.fixture()
def image_dir(tmp_path):
    """Three readable images: two vehicles, two cameras, mixed formats."""
    make_images(
        tmp_path / "imgs",
        ["0001_c001_000100_0.jpg", "0001_c002_000200_0.png", "0002_c001_000300_0.jpg"],
    )
    return tmp_path / "imgs"
