"""Checkpoint loading, shape contracts and mask activations."""

import numpy as np
import pytest
import torch
from torch import nn

from viewexport import CheckpointIncompatible
from viewexport.nets import load_model, run_backbone, run_parser

from helpers import CHANNELS, trace_to


def _batch(rng, b=2, h=32, w=32):
    return rng.standard_normal((b, 3, h, w)).astype(np.float32)


def test_load_model_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.pt"
    bad.write_bytes(b"not a torchscript archive")
    with pytest.raises(CheckpointIncompatible, match="cannot load"):
        load_model(bad)
    with pytest.raises(CheckpointIncompatible, match="cannot load"):
        load_model(tmp_path / "missing.pt")


def test_backbone_output_layout(checkpoints):
    module = load_model(checkpoints[0])
    batch = _batch(np.random.default_rng(0), b=2, h=64, w=64)
    feats = run_backbone(module, batch)
    assert feats.shape == (2, 4, 4, CHANNELS)
    with torch.no_grad():
        direct = module(torch.from_numpy(batch)).permute(0, 2, 3, 1).numpy()
    assert np.array_equal(feats, direct.astype(np.float32))


def test_backbone_wrong_rank_rejected(tmp_path):
    class Flat(nn.Module):
        def forward(self, x):
            return x.mean(dim=(2, 3))

    path = trace_to(Flat(), tmp_path / "flat.pt")
    with pytest.raises(CheckpointIncompatible, match="backbone must map"):
        run_backbone(load_model(path), _batch(np.random.default_rng(1)))


def test_backbone_non_finite_rejected(tmp_path):
    conv = nn.Conv2d(3, 4, 1)
    nn.init.constant_(conv.weight, 3.0e38)  # overflows float32 when summed
    path = trace_to(conv, tmp_path / "hot.pt")
    batch = np.ones((1, 3, 8, 8), dtype=np.float32)
    with pytest.raises(CheckpointIncompatible, match="non-finite"):
        run_backbone(load_model(path), batch)


def test_forward_failure_wrapped(tmp_path):
    path = trace_to(nn.Conv2d(1, 4, 1), tmp_path / "mono.pt",
                    example_shape=(1, 1, 8, 8))
    with pytest.raises(CheckpointIncompatible, match="forward failed"):
        run_backbone(load_model(path), _batch(np.random.default_rng(2)))


def test_parser_softmax_normalizes(checkpoints):
    module = load_model(checkpoints[1])
    batch = _batch(np.random.default_rng(3), b=3, h=24, w=24)
    masks = run_parser(module, batch, "softmax")
    assert masks.shape == (3, 4, 24, 24)
    assert masks.min() >= 0.0
    assert masks.max() <= 1.0
    assert np.allclose(masks.sum(axis=1), 1.0, atol=1e-6)


def test_parser_sigmoid_matches_logistic(checkpoints):
    module = load_model(checkpoints[1])
    batch = _batch(np.random.default_rng(4), b=2, h=16, w=16)
    masks = run_parser(module, batch, "sigmoid")
    with torch.no_grad():
        logits = module(torch.from_numpy(batch)).numpy().astype(np.float64)
    assert np.allclose(masks, 1.0 / (1.0 + np.exp(-logits)), atol=1e-6)


def test_parser_wrong_channels_rejected(tmp_path):
    path = trace_to(nn.Conv2d(3, 3, 1), tmp_path / "p3.pt")
    with pytest.raises(CheckpointIncompatible, match="parser must map"):
        run_parser(load_model(path), _batch(np.random.default_rng(5)), "softmax")


def test_parser_none_requires_probabilities(tmp_path):
    conv = nn.Conv2d(3, 4, 1)
    nn.init.constant_(conv.bias, 5.0)  # pushes every output above 1
    path = trace_to(conv, tmp_path / "logits.pt")
    batch = np.random.default_rng(6).random((1, 3, 8, 8)).astype(np.float32)
    with pytest.raises(CheckpointIncompatible, match=r"outside \[0, 1\]"):
        run_parser(load_model(path), batch, "none")


def test_parser_none_passes_probabilities_through(tmp_path):
    class Prob(nn.Module):
        def __init__(self):
            super().__init__()
            self.conv = nn.Conv2d(3, 4, 1)

        def forward(self, x):
            return torch.sigmoid(self.conv(x))

    path = trace_to(Prob(), tmp_path / "prob.pt")
    module = load_model(path)
    batch = _batch(np.random.default_rng(7), b=2, h=8, w=8)
    masks = run_parser(module, batch, "none")
    with torch.no_grad():
        direct = module(torch.from_numpy(batch)).numpy().astype(np.float32)
    assert np.array_equal(masks, direct)


def test_parser_unknown_activation(checkpoints):
    module = load_model(checkpoints[1])
    with pytest.raises(ValueError, match="activation"):
        run_parser(module, np.zeros((1, 3, 8, 8), dtype=np.float32), "argmax")
