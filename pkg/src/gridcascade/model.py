"""Recurrent graph-attention network over line graphs.

Each line-graph node starts from an embedding of its failure iteration. The
network then runs G-1 weight-shared steps: layer-normalize, multi-head graph
attention over incoming edges, ELU, and a GRU gate that decides how much of
the previous state to keep. A final attention layer with per-head class
logits (heads averaged) reconstructs every node's failure iteration.

The forward pass records per-step, per-head attention coefficients; those
traces are the raw material for the exposure ranking, so inference keeps
them even though training never looks at them.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterSet, Tape
from .cascade import CascadeSample, Dataset
from .errors import (
    CheckpointError,
    ConfigMismatchError,
    InvalidSampleError,
    LabelOverflowError,
    ShapeError,
)
from .grid import LineGraph
from .seeding import derive_seed

CHECKPOINT_MAGIC = b"GCCKPT01"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    hidden_dim: int = 256
    heads: int = 4
    classes: int = 100
    lr: float = 5e-5
    accumulation_steps: int = 4
    max_epochs: int = 20
    patience: int = 10
    scheduler_t0: float = 1.0
    scheduler_tmult: float = 2.0
    lr_min: float = 0.0
    validation_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.hidden_dim <= 0 or self.heads <= 0:
            raise ShapeError("hidden_dim and heads must be positive")
        if self.hidden_dim % self.heads != 0:
            raise ShapeError(
                f"hidden_dim {self.hidden_dim} is not divisible by {self.heads} heads"
            )
        if self.classes < 2:
            raise ShapeError("need at least two label classes")
        if not (0 <= self.validation_fraction < 1):
            raise ShapeError("validation_fraction must be in [0, 1)")

    @property
    def head_dim(self) -> int:
        return self.hidden_dim // self.heads

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(**data)


@dataclass(frozen=True)
class ForwardTrace:
    """Attention and hidden states recorded during one forward pass.

    attention_per_head[t] is (heads, E); attention_mean[t] is (E,), the
    head average, for the hidden steps t = 0 .. G-2. The output layer's
    attention is not part of the trace.
    """

    grid_name: str
    labels: np.ndarray
    step_count: int
    attention_per_head: tuple[np.ndarray, ...]
    attention_mean: tuple[np.ndarray, ...]
    hidden_states: tuple[np.ndarray, ...]

    def matches(self, sample: CascadeSample) -> bool:
        return self.grid_name == sample.grid_name and np.array_equal(
            self.labels, sample.labels
        )


def _glorot(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    limit = math.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-limit, limit, size=shape)


class GruGatModel:
    """The network plus its parameter store. One parameter set serves every
    recurrent step and any line-graph size."""

    def __init__(self, config: ModelConfig):
        self.config = config
        self.params = ParameterSet()
        self._init_params()

    def _init_params(self) -> None:
        cfg = self.config
        d, hd, c = cfg.hidden_dim, cfg.head_dim, cfg.classes
        rng = np.random.default_rng(derive_seed(cfg.seed, "model-init"))
        p = self.params
        p.add("embedding", rng.normal(0.0, 0.02, size=(c, d)))
        for i in range(cfg.heads):
            p.add(f"gat_w{i}", _glorot(rng, (d, hd)))
            p.add(f"gat_a{i}", _glorot(rng, (2 * hd, 1)))
        # GRU gate weights act on the concatenation [h_prev, h_new].
        p.add("gru_wz", _glorot(rng, (2 * d, d)))
        p.add("gru_wr", _glorot(rng, (2 * d, d)))
        p.add("gru_wh", _glorot(rng, (2 * d, d)))
        p.add("ln1_gain", np.ones(d))
        p.add("ln1_bias", np.zeros(d))
        p.add("ln2_gain", np.ones(d))
        p.add("ln2_bias", np.zeros(d))
        for i in range(cfg.heads):
            p.add(f"out_w{i}", _glorot(rng, (d, c)))
            p.add(f"out_a{i}", _glorot(rng, (2 * c, 1)))

    def forward(
        self, sample: CascadeSample, lg: LineGraph
    ) -> tuple[np.ndarray, ForwardTrace]:
        """Inference pass: per-node class logits and the attention trace."""
        tape = Tape()
        logits, trace = self.forward_on_tape(tape, sample, lg)
        return logits.value.copy(), trace

    def forward_on_tape(
        self, tape: Tape, sample: CascadeSample, lg: LineGraph
    ) -> tuple[ad.Tensor, ForwardTrace]:
        cfg = self.config
        labels = sample.labels
        if len(labels) != lg.node_count:
            raise InvalidSampleError(
                f"sample has {len(labels)} labels but the line graph has "
                f"{lg.node_count} nodes"
            )
        if labels.max() >= cfg.classes:
            raise LabelOverflowError(
                f"label {int(labels.max())} exceeds the model's "
                f"{cfg.classes} classes"
            )
        steps = sample.max_iteration - 1
        if steps < 1:
            raise InvalidSampleError(
                "forward pass needs a propagating sample (max iteration >= 2)"
            )

        h = ad.embedding_lookup(tape.parameter(self.params, "embedding"), labels)
        att_heads: list[np.ndarray] = []
        att_mean: list[np.ndarray] = []
        hidden: list[np.ndarray] = [h.value.copy()]
        for _ in range(steps):
            normed = ad.layer_norm(
                h,
                tape.parameter(self.params, "ln1_gain"),
                tape.parameter(self.params, "ln1_bias"),
            )
            gat_out, alphas = _gat_layer(
                tape, normed, lg, self.params, "gat", cfg.heads, combine="concat"
            )
            h_new = ad.elu(gat_out)
            h = _gru_gate(tape, self.params, h, h_new)
            per_head = np.stack([a.value.reshape(-1) for a in alphas])
            att_heads.append(per_head)
            att_mean.append(per_head.mean(axis=0))
            hidden.append(h.value.copy())

        final = ad.layer_norm(
            h,
            tape.parameter(self.params, "ln2_gain"),
            tape.parameter(self.params, "ln2_bias"),
        )
        logits, _ = _gat_layer(
            tape, final, lg, self.params, "out", cfg.heads, combine="mean"
        )
        trace = ForwardTrace(
            grid_name=sample.grid_name,
            labels=labels,
            step_count=steps,
            attention_per_head=tuple(att_heads),
            attention_mean=tuple(att_mean),
            hidden_states=tuple(hidden),
        )
        return logits, trace

    def predict_labels(self, sample: CascadeSample, lg: LineGraph) -> np.ndarray:
        logits, _ = self.forward(sample, lg)
        return logits.argmax(axis=1)


def _gat_layer(
    tape: Tape,
    h: ad.Tensor,
    lg: LineGraph,
    params: ParameterSet,
    prefix: str,
    heads: int,
    combine: str,
) -> tuple[ad.Tensor, list[ad.Tensor]]:
    """Multi-head attention over the line graph's directed edges.

    Per head: project node states, score each edge from its source and
    target projections, normalize scores over every target's incoming edges,
    and sum attention-weighted source projections per target. Heads are
    concatenated (hidden layers) or averaged (output layer).
    """
    n = lg.node_count
    src, dst = lg.src, lg.dst
    outputs: list[ad.Tensor] = []
    alphas: list[ad.Tensor] = []
    for i in range(heads):
        w = tape.parameter(params, f"{prefix}_w{i}")
        a = tape.parameter(params, f"{prefix}_a{i}")
        out_dim = w.shape[1]
        projected = ad.matmul(h, w)
        score_src = ad.matmul(projected, ad.slice_axis(a, 0, out_dim))
        score_dst = ad.matmul(projected, ad.slice_axis(a, out_dim, 2 * out_dim))
        edge_logits = ad.leaky_relu(
            ad.add(
                ad.embedding_lookup(score_src, src),
                ad.embedding_lookup(score_dst, dst),
            )
        )
        alpha = ad.segment_softmax(edge_logits, dst, n)
        messages = ad.mul(alpha, ad.embedding_lookup(projected, src))
        outputs.append(ad.segment_sum(messages, dst, n))
        alphas.append(alpha)
    if combine == "concat":
        combined = ad.concat(outputs, axis=1)
    elif combine == "mean":
        total = outputs[0]
        for out in outputs[1:]:
            total = ad.add(total, out)
        combined = ad.mul(total, 1.0 / heads)
    else:
        raise ShapeError(f"unknown head combination {combine!r}")
    return combined, alphas


def _gru_gate(
    tape: Tape, params: ParameterSet, h_prev: ad.Tensor, h_new: ad.Tensor
) -> ad.Tensor:
    """Convex-combination state update gated by the new message."""
    both = ad.concat([h_prev, h_new], axis=1)
    z = ad.sigmoid(ad.matmul(both, tape.parameter(params, "gru_wz")))
    r = ad.sigmoid(ad.matmul(both, tape.parameter(params, "gru_wr")))
    gated = ad.concat([ad.mul(r, h_prev), h_new], axis=1)
    candidate = ad.tanh(ad.matmul(gated, tape.parameter(params, "gru_wh")))
    kept = ad.sub(h_prev, ad.mul(z, h_prev))
    return ad.add(kept, ad.mul(z, candidate))


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


class CosineWarmRestarts:
    """Cosine-annealed learning rate with warm restarts.

    The rate is a pure function of fractional epochs elapsed: each period
    decays lr_max -> lr_min along a half cosine, then restarts with the
    period length multiplied by tmult.
    """

    def __init__(self, lr_max: float, t0: float, tmult: float, lr_min: float = 0.0):
        if t0 <= 0 or tmult < 1:
            raise ShapeError("scheduler needs t0 > 0 and tmult >= 1")
        self.lr_max = lr_max
        self.lr_min = lr_min
        self.t0 = t0
        self.tmult = tmult

    def lr(self, epochs_elapsed: float) -> float:
        start = 0.0
        length = self.t0
        while epochs_elapsed >= start + length:
            start += length
            length *= self.tmult
        frac = (epochs_elapsed - start) / length
        return self.lr_min + 0.5 * (self.lr_max - self.lr_min) * (
            1.0 + math.cos(math.pi * frac)
        )


@dataclass
class TrainingHistory:
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = math.inf
    stopped_early: bool = False

    @property
    def train_losses(self) -> list[float]:
        return [e["train_loss"] for e in self.epochs]

    @property
    def val_losses(self) -> list[float]:
        return [e["val_loss"] for e in self.epochs]


def _stratified_split(
    dataset: Dataset, fraction: float, seed: int
) -> tuple[list[int], list[int]]:
    """Per-grid seeded shuffle; the tail `fraction` of each grid's samples
    goes to validation."""
    by_grid: dict[str, list[int]] = {}
    for idx, sample in enumerate(dataset.samples):
        by_grid.setdefault(sample.grid_name, []).append(idx)
    train_idx: list[int] = []
    val_idx: list[int] = []
    for name in sorted(by_grid):
        indices = np.array(by_grid[name])
        rng = np.random.default_rng(derive_seed(seed, "split", name))
        rng.shuffle(indices)
        n_val = int(round(fraction * len(indices)))
        if len(indices) >= 2:
            n_val = min(max(n_val, 1 if fraction > 0 else 0), len(indices) - 1)
        else:
            n_val = 0
        val_idx.extend(int(i) for i in indices[: n_val])
        train_idx.extend(int(i) for i in indices[n_val:])
    return train_idx, val_idx


def _sample_loss(model: GruGatModel, sample: CascadeSample, lg: LineGraph) -> float:
    tape = Tape()
    logits, _ = model.forward_on_tape(tape, sample, lg)
    loss = ad.cross_entropy_with_logits(logits, sample.labels)
    return float(loss.value)


def train(
    model: GruGatModel,
    dataset: Dataset,
    line_graphs: dict[str, LineGraph],
    config: ModelConfig | None = None,
) -> TrainingHistory:
    """Fit the model on a combined multi-grid training dataset.

    Per-sample summed cross-entropy, gradient accumulation over
    `accumulation_steps` samples per optimizer step, cosine-annealed warm
    restarts, and early stopping on validation loss with best-weights
    restore.
    """
    cfg = config or model.config
    if dataset.role != "training":
        raise InvalidSampleError("train() expects a training dataset")
    if len(dataset) == 0:
        raise InvalidSampleError("training dataset is empty")
    for name in dataset.grid_names:
        if name not in line_graphs:
            raise InvalidSampleError(f"no line graph supplied for grid '{name}'")
    worst = max(s.max_iteration for s in dataset.samples)
    if worst >= cfg.classes:
        raise LabelOverflowError(
            f"dataset contains iteration {worst}, beyond {cfg.classes} classes"
        )

    train_idx, val_idx = _stratified_split(
        dataset, cfg.validation_fraction, cfg.seed
    )
    scheduler = CosineWarmRestarts(
        cfg.lr, cfg.scheduler_t0, cfg.scheduler_tmult, cfg.lr_min
    )
    history = TrainingHistory()
    best_state = model.params.state_copy()
    stale_epochs = 0
    samples_per_epoch = len(train_idx)
    samples_done = 0
    model.params.zero_grads()

    for epoch in range(cfg.max_epochs):
        order = np.array(train_idx)
        rng = np.random.default_rng(derive_seed(cfg.seed, "epoch-order", epoch))
        rng.shuffle(order)

        epoch_loss = 0.0
        pending = 0
        last_lr = scheduler.lr(samples_done / samples_per_epoch)
        for idx in order:
            sample = dataset.samples[int(idx)]
            lg = line_graphs[sample.grid_name]
            tape = Tape()
            logits, _ = model.forward_on_tape(tape, sample, lg)
            loss = ad.cross_entropy_with_logits(logits, sample.labels)
            tape.backward(loss)
            epoch_loss += float(loss.value)
            pending += 1
            samples_done += 1
            if pending == cfg.accumulation_steps:
                last_lr = scheduler.lr(samples_done / samples_per_epoch)
                ad.adam_step(model.params, last_lr)
                pending = 0
        if pending:
            last_lr = scheduler.lr(samples_done / samples_per_epoch)
            ad.adam_step(model.params, last_lr)

        train_loss = epoch_loss / max(1, len(train_idx))
        if val_idx:
            val_loss = float(
                np.mean(
                    [
                        _sample_loss(
                            model,
                            dataset.samples[i],
                            line_graphs[dataset.samples[i].grid_name],
                        )
                        for i in val_idx
                    ]
                )
            )
        else:
            val_loss = train_loss

        improved = val_loss < history.best_val_loss
        history.epochs.append(
            {
                "epoch": epoch,
                "train_loss": train_loss,
                "val_loss": val_loss,
                "lr": last_lr,
                "improved": improved,
            }
        )
        if improved:
            history.best_val_loss = val_loss
            history.best_epoch = epoch
            best_state = model.params.state_copy()
            stale_epochs = 0
        else:
            stale_epochs += 1
            if stale_epochs >= cfg.patience:
                history.stopped_early = True
                break

    model.params.load_state(best_state)
    return history


def reconstruction_macro_f1(
    model: GruGatModel, samples: list[CascadeSample], line_graphs: dict[str, LineGraph]
) -> float:
    """Macro-F1 of argmax label reconstruction pooled over samples."""
    from .metrics import macro_f1

    y_true: list[int] = []
    y_pred: list[int] = []
    for sample in samples:
        pred = model.predict_labels(sample, line_graphs[sample.grid_name])
        y_true.extend(int(v) for v in sample.labels)
        y_pred.extend(int(v) for v in pred)
    return macro_f1(np.array(y_true), np.array(y_pred))


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(model: GruGatModel, path: str | Path) -> None:
    """Serialize config and parameters to a versioned, checksummed binary."""
    body = bytearray()
    body += CHECKPOINT_MAGIC
    body += struct.pack("<I", CHECKPOINT_VERSION)
    config_blob = json.dumps(model.config.to_dict(), sort_keys=True).encode("utf-8")
    body += struct.pack("<I", len(config_blob))
    body += config_blob
    names = sorted(model.params.values)
    body += struct.pack("<I", len(names))
    for name in names:
        raw_name = name.encode("utf-8")
        tensor = np.ascontiguousarray(model.params.values[name], dtype="<f8")
        body += struct.pack("<I", len(raw_name))
        body += raw_name
        body += struct.pack("<B", tensor.ndim)
        for dim in tensor.shape:
            body += struct.pack("<I", dim)
        body += tensor.tobytes()
    digest = hashlib.sha256(bytes(body)).digest()
    with open(path, "wb") as fh:
        fh.write(bytes(body))
        fh.write(digest)


def load_checkpoint(
    path: str | Path, expected_config: ModelConfig | None = None
) -> GruGatModel:
    """Rebuild a model from a checkpoint, verifying integrity and version."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(CHECKPOINT_MAGIC) + 4 + 32:
        raise CheckpointError(f"{path}: file too short to be a checkpoint")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch (corrupt or truncated)")
    view = memoryview(body)
    offset = 0

    def take(n: int) -> memoryview:
        nonlocal offset
        if offset + n > len(view):
            raise CheckpointError(f"{path}: unexpected end of data")
        chunk = view[offset : offset + n]
        offset += n
        return chunk

    if bytes(take(len(CHECKPOINT_MAGIC))) != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic; not a checkpoint file")
    (version,) = struct.unpack("<I", take(4))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {version} "
            f"(expected {CHECKPOINT_VERSION})"
        )
    (config_len,) = struct.unpack("<I", take(4))
    config = ModelConfig.from_dict(json.loads(bytes(take(config_len)).decode("utf-8")))
    if expected_config is not None and config != expected_config:
        raise ConfigMismatchError(
            f"{path}: checkpoint config {config.to_dict()} does not match "
            f"expected {expected_config.to_dict()}"
        )
    model = GruGatModel(config)
    (count,) = struct.unpack("<I", take(4))
    if count != len(model.params.values):
        raise CheckpointError(
            f"{path}: checkpoint has {count} tensors, model needs "
            f"{len(model.params.values)}"
        )
    state: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = bytes(take(name_len)).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = tuple(struct.unpack("<I", take(4))[0] for _ in range(ndim))
        size = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(take(size * 8), dtype="<f8").reshape(shape)
        state[name] = data.astype(np.float64)
    model.params.load_state(state)
    return model
