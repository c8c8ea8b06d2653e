"""Small deterministic embedder trained with the combined objective.

The embedder applies a shared two-layer tanh MLP to every grid cell, then
pools: the global vector is the mean over all cells, the per-view vectors
are mask-weighted means, and visibilities are mask sums. The identity head
standardizes globals per batch (zero mean, unit variance per channel)
before a linear classifier; both triplet terms act on the raw pooled
outputs. All gradients are analytic and optimization is plain SGD with a
linear warmup followed by piecewise-constant decay.

Everything runs in float64 on explicit arrays; checkpoints round weights to
float32 because the tensor container stores float32.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyInput,
    InsufficientIdentities,
    IoError,
    ParseError,
)
from .formats import read_tensor, write_json, write_tensor
from .losses import LOCAL_MODES, Batch, total_loss
from .pooling import downsample_masks
from .types import NUM_VIEWS, FullResMaskSet, ViewEmbedding

_BN_EPS = 1e-5


@dataclass
class TrainConfig:
    steps: int = 400
    batch_p: int = 8
    batch_k: int = 4
    base_lr: float = 0.05
    warmup_steps: int = 40
    milestones: tuple[int, ...] = (240, 340)
    lr_decay: float = 0.1
    margin: float = 0.3
    hidden: int = 32
    embed_dim: int = 32
    local_mode: str = "attention"
    log_every: int = 50

    def __post_init__(self):
        if self.steps < 1 or self.batch_p < 2 or self.batch_k < 2:
            raise ParseError(
                "need steps >= 1, batch_p >= 2 and batch_k >= 2, got "
                f"{self.steps}, {self.batch_p}, {self.batch_k}"
            )
        if self.base_lr <= 0.0 or not (0.0 < self.lr_decay <= 1.0):
            raise ParseError(
                f"bad optimizer constants lr={self.base_lr} decay={self.lr_decay}"
            )
        if self.local_mode not in LOCAL_MODES:
            raise ParseError(
                f"local_mode must be one of {LOCAL_MODES}, got {self.local_mode!r}"
            )


def learning_rate(step: int, config: TrainConfig) -> float:
    """Linear warmup from base*0.1, then decay at each milestone step."""
    if config.warmup_steps > 0 and step < config.warmup_steps:
        frac = step / config.warmup_steps
        return config.base_lr * (0.1 + 0.9 * frac)
    lr = config.base_lr
    for m in config.milestones:
        if step >= m:
            lr *= config.lr_decay
    return lr


@dataclass
class ToyEmbedder:
    w1: np.ndarray  # (D, hidden)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden, C)
    b2: np.ndarray  # (C,)
    wc: np.ndarray  # (C, num_classes)
    bc: np.ndarray  # (num_classes,)

    @property
    def in_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.w2.shape[1]

    @property
    def num_classes(self) -> int:
        return self.wc.shape[1]

    @classmethod
    def initialize(
        cls, in_dim: int, hidden: int, embed_dim: int, num_classes: int, seed: int
    ) -> "ToyEmbedder":
        if min(in_dim, hidden, embed_dim) < 1 or num_classes < 2:
            raise ParseError(
                f"bad dimensions in={in_dim} hidden={hidden} "
                f"embed={embed_dim} classes={num_classes}"
            )
        rng = np.random.default_rng((seed, 5))
        return cls(
            w1=rng.standard_normal((in_dim, hidden)) / np.sqrt(in_dim),
            b1=np.zeros(hidden),
            w2=rng.standard_normal((hidden, embed_dim)) / np.sqrt(hidden),
            b2=np.zeros(embed_dim),
            wc=rng.standard_normal((embed_dim, num_classes)) / np.sqrt(embed_dim),
            bc=np.zeros(num_classes),
        )

    def params(self) -> dict[str, np.ndarray]:
        return {
            "w1": self.w1, "b1": self.b1,
            "w2": self.w2, "b2": self.b2,
            "wc": self.wc, "bc": self.bc,
        }


def _forward_cells(model: ToyEmbedder, feats: np.ndarray):
    """Per-cell embeddings. feats: (B, H, W, D) -> (hidden acts, (B, H, W, C))."""
    h1 = np.tanh(feats @ model.w1 + model.b1)
    cells = h1 @ model.w2 + model.b2
    return h1, cells


def _pool(cells: np.ndarray, grid_masks: np.ndarray):
    """Global mean, masked per-view means and visibilities, all float64."""
    b, h, w, _ = cells.shape
    if grid_masks.shape[:1] + grid_masks.shape[2:] != (b, h, w):
        raise DimensionMismatch(
            f"masks {grid_masks.shape} do not match cells {cells.shape}"
        )
    globals_ = cells.mean(axis=(1, 2))
    vis = grid_masks.sum(axis=(2, 3))
    weighted = np.einsum("bvhw,bhwc->bvc", grid_masks, cells)
    locals_ = np.divide(
        weighted,
        vis[:, :, None],
        out=np.zeros_like(weighted),
        where=vis[:, :, None] > 0.0,
    )
    return globals_, locals_, vis


def embed_batch(model: ToyEmbedder, feats: np.ndarray, grid_masks: np.ndarray):
    """Inference pooled outputs: (globals (B, C), locals (B, V, C), vis (B, V))."""
    _, cells = _forward_cells(model, np.asarray(feats, dtype=np.float64))
    return _pool(cells, np.asarray(grid_masks, dtype=np.float64))


def embeddings_for(model: ToyEmbedder, feats, grid_masks) -> list[ViewEmbedding]:
    g, l, v = embed_batch(model, feats, grid_masks)
    return [
        ViewEmbedding(global_vec=g[i], locals_=l[i], visibilities=v[i])
        for i in range(g.shape[0])
    ]


def loss_and_grads(
    model: ToyEmbedder,
    feats: np.ndarray,
    grid_masks: np.ndarray,
    labels: np.ndarray,
    margin: float,
    local_mode: str = "attention",
):
    """Combined loss and analytic parameter gradients for one batch.

    Returns (values dict, grads dict keyed like ``model.params()``).
    """
    feats = np.asarray(feats, dtype=np.float64)
    grid_masks = np.asarray(grid_masks, dtype=np.float64)
    h1, cells = _forward_cells(model, feats)
    globals_, locals_, vis = _pool(cells, grid_masks)

    mu = globals_.mean(axis=0)
    var = globals_.var(axis=0)
    sd = np.sqrt(var + _BN_EPS)
    z = (globals_ - mu) / sd
    logits = z @ model.wc + model.bc

    batch = Batch(
        globals_=globals_, locals_=locals_, visibilities=vis,
        labels=labels, logits=logits,
    )
    out = total_loss(batch, margin=margin, local_mode=local_mode)

    b, h, w, _ = cells.shape
    d_logits = out.grad_logits
    d_wc = z.T @ d_logits
    d_bc = d_logits.sum(axis=0)
    dz = d_logits @ model.wc.T
    # standardization backward with unit scale, zero shift
    d_glob = (dz - dz.mean(axis=0) - z * (dz * z).mean(axis=0)) / sd
    d_glob = d_glob + out.grad_globals

    d_cells = np.broadcast_to(
        d_glob[:, None, None, :] / (h * w), cells.shape
    ).copy()
    d_loc = np.divide(
        out.grad_locals,
        vis[:, :, None],
        out=np.zeros_like(out.grad_locals),
        where=vis[:, :, None] > 0.0,
    )
    d_cells += np.einsum("bvc,bvhw->bhwc", d_loc, grid_masks)

    d_h1 = (d_cells @ model.w2.T) * (1.0 - h1 * h1)
    grads = {
        "w1": np.einsum("bhwd,bhwk->dk", feats, d_h1),
        "b1": d_h1.sum(axis=(0, 1, 2)),
        "w2": np.einsum("bhwk,bhwc->kc", h1, d_cells),
        "b2": d_cells.sum(axis=(0, 1, 2)),
        "wc": d_wc,
        "bc": d_bc,
    }
    values = {
        "total": out.value,
        "id": out.parts["id"],
        "triplet_global": out.parts["triplet_global"],
        "triplet_local": out.parts["triplet_local"],
    }
    return values, grads


def train_step(model, feats, grid_masks, labels, lr, margin,
               local_mode: str = "attention"):
    values, grads = loss_and_grads(
        model, feats, grid_masks, labels, margin, local_mode
    )
    for name, p in model.params().items():
        p -= lr * grads[name]
    return values


def sample_pk_batch(ids_to_indices: dict, p: int, k: int, rng: np.random.Generator):
    """Indices for a batch of p identities with k samples each.

    Identities are drawn without replacement; images within an identity are
    drawn without replacement when possible, otherwise with replacement.
    """
    if len(ids_to_indices) < p:
        raise InsufficientIdentities(
            f"need {p} identities, dataset has {len(ids_to_indices)}"
        )
    names = sorted(ids_to_indices)
    picked = rng.choice(len(names), size=p, replace=False)
    chosen: list[int] = []
    labels: list[int] = []
    for slot, idx in enumerate(picked):
        pool = ids_to_indices[names[idx]]
        replace = len(pool) < k
        sel = rng.choice(len(pool), size=k, replace=replace)
        chosen.extend(pool[s] for s in sel)
        labels.extend([int(idx)] * k)
    return np.asarray(chosen), np.asarray(labels)


@dataclass
class TrainResult:
    model: ToyEmbedder
    class_names: tuple[str, ...]
    history: list[dict] = field(default_factory=list)


def train(
    feats: np.ndarray,
    grid_masks: np.ndarray,
    vehicle_ids,
    config: TrainConfig,
    seed: int = 0,
) -> TrainResult:
    """Fit the embedder on stacked training arrays.

    feats: (N, H, W, D) cell features; grid_masks: (N, V, H, W) at the same
    grid; vehicle_ids: length-N identity names. Identical inputs and seed
    reproduce the same weights.
    """
    feats = np.asarray(feats, dtype=np.float64)
    grid_masks = np.asarray(grid_masks, dtype=np.float64)
    if feats.ndim != 4 or grid_masks.ndim != 4 or grid_masks.shape[1] != NUM_VIEWS:
        raise DimensionMismatch(
            f"expected (N, H, W, D) features and (N, {NUM_VIEWS}, H, W) masks, "
            f"got {feats.shape} and {grid_masks.shape}"
        )
    if feats.shape[0] == 0:
        raise EmptyInput("no training images")
    names = [str(v) for v in vehicle_ids]
    if len(names) != feats.shape[0]:
        raise DimensionMismatch(
            f"{len(names)} identity names for {feats.shape[0]} images"
        )
    ids_to_indices: dict[str, np.ndarray] = {}
    for i, name in enumerate(names):
        ids_to_indices.setdefault(name, [])
        ids_to_indices[name].append(i)
    ids_to_indices = {k: np.asarray(v) for k, v in ids_to_indices.items()}
    class_names = tuple(sorted(ids_to_indices))
    if len(class_names) < 2:
        raise InsufficientIdentities("training needs at least two identities")

    model = ToyEmbedder.initialize(
        in_dim=feats.shape[3],
        hidden=config.hidden,
        embed_dim=config.embed_dim,
        num_classes=len(class_names),
        seed=seed,
    )
    rng = np.random.default_rng((seed, 31))
    history: list[dict] = []
    for step in range(config.steps):
        idx, labels = sample_pk_batch(ids_to_indices, config.batch_p, config.batch_k, rng)
        lr = learning_rate(step, config)
        values = train_step(
            model, feats[idx], grid_masks[idx], labels, lr, config.margin,
            config.local_mode,
        )
        if step % config.log_every == 0 or step == config.steps - 1:
            history.append({"step": step, "lr": lr, **values})
    return TrainResult(model=model, class_names=class_names, history=history)


_CHECKPOINT_META = "model.json"


def save_model(model: ToyEmbedder, class_names, out_dir) -> None:
    """Write weights as tensor containers plus a small metadata file."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out}: {exc}") from exc
    for name, p in model.params().items():
        write_tensor(out / f"{name}.tns", p)
    write_json(
        out / _CHECKPOINT_META,
        {
            "in_dim": model.in_dim,
            "hidden": model.w1.shape[1],
            "embed_dim": model.embed_dim,
            "num_classes": model.num_classes,
            "class_names": list(class_names),
        },
    )


def load_model(in_dir) -> tuple[ToyEmbedder, tuple[str, ...]]:
    src = Path(in_dir)
    meta_path = src / _CHECKPOINT_META
    try:
        meta = json.loads(meta_path.read_text())
    except OSError as exc:
        raise IoError(f"cannot read {meta_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{meta_path}: {exc}") from exc
    arrays = {}
    for name, ndim in (
        ("w1", 2), ("b1", 1), ("w2", 2), ("b2", 1), ("wc", 2), ("bc", 1),
    ):
        arr = read_tensor(src / f"{name}.tns").astype(np.float64)
        if arr.ndim != ndim:
            raise DimensionMismatch(f"{name} should have {ndim} dims, got {arr.ndim}")
        arrays[name] = arr
    model = ToyEmbedder(**arrays)
    expected = (meta["in_dim"], meta["hidden"])
    if model.w1.shape != tuple(expected):
        raise DimensionMismatch(
            f"metadata says w1 is {tuple(expected)}, file has {model.w1.shape}"
        )
    return model, tuple(meta["class_names"])


def grid_masks_from_full(full_masks: np.ndarray, grid_h: int, grid_w: int) -> np.ndarray:
    """(N, V, H, W) full-resolution masks -> (N, V, grid_h, grid_w) by block max."""
    return np.stack(
        [
            downsample_masks(FullResMaskSet(m), grid_h, grid_w).masks
            for m in np.asarray(full_masks)
        ]
    )
