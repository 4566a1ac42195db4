"""Adam training loop with early stopping and lossless checkpointing.

Determinism contract: everything random is derived from ``TrainConfig.seed``
through fixed derivation keys (initialization, per-epoch shuffling, per-epoch
dropout), so two runs with identical config and data produce byte-identical
checkpoints.

Checkpoint files are JSON with a versioned header.  Every tensor is stored as
name, shape, and space-separated C-order values in Python's hexadecimal float
notation (``float.hex()``), which round-trips every finite float64 exactly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import CorruptFile, DimensionMismatch, EmptyDataset, NonFiniteLoss, VersionMismatch
from .gcn_net import (
    ALL_FIELDS,
    TRAINABLE_FIELDS,
    ModelConfig,
    ModelParams,
    init_params,
    model_backward,
    model_forward,
    nll_loss,
    parameter_count,
)
from .hand_graph import PoseGraph
from .numerics import RngStream

CHECKPOINT_FORMAT = "handgcn-checkpoint"
CHECKPOINT_VERSION = 1

# spawn-key prefixes for the independent random streams of a run
KEY_INIT = 0
KEY_SHUFFLE = 1
KEY_DROPOUT = 2


@dataclass
class TrainConfig:
    learning_rate: float = 3e-4
    batch_size: int = 64
    dropout_p: float = 0.4
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    patience: int = 15
    max_epochs: int = 500
    seed: int = 0
    hidden_dim: int = 128
    leaky_alpha: float = 0.2
    # L2 coupled into the gradient by default; True switches to decoupled
    # decay applied directly to the weights at the learning rate.
    decoupled_weight_decay: bool = False
    # early stopping counts an epoch as an improvement only if it beats the
    # best validation loss by at least this margin
    min_improvement: float = 1e-6

    def __post_init__(self):
        if self.learning_rate <= 0 or self.eps_adam <= 0:
            raise ValueError("learning_rate and eps_adam must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 1 or self.max_epochs < 1:
            raise ValueError("patience and max_epochs must be >= 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")

    def model_config(self, d_desired: float = 1.0, num_classes: int = 29) -> ModelConfig:
        return ModelConfig(
            hidden_dim=self.hidden_dim,
            num_classes=num_classes,
            leaky_alpha=self.leaky_alpha,
            dropout_p=self.dropout_p,
            d_desired=d_desired,
        )


@dataclass
class AdamState:
    """First/second moment estimates per trainable tensor plus the step count."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0


def init_adam_state(params: ModelParams) -> AdamState:
    return AdamState(
        m={name: np.zeros_like(getattr(params, name)) for name in TRAINABLE_FIELDS},
        v={name: np.zeros_like(getattr(params, name)) for name in TRAINABLE_FIELDS},
    )


def adam_step(
    params: ModelParams,
    grads: dict[str, np.ndarray],
    state: AdamState,
    cfg: TrainConfig,
) -> tuple[ModelParams, AdamState]:
    """One Adam update over every trainable tensor, in place.

    g' = g + weight_decay * theta (coupled L2), then the standard
    bias-corrected moment update theta -= lr * m_hat / (sqrt(v_hat) + eps).
    With ``decoupled_weight_decay`` the decay skips the moments and is
    subtracted directly as lr * wd * theta.
    """
    state.t += 1
    t = state.t
    for name in TRAINABLE_FIELDS:
        theta = getattr(params, name)
        g = grads[name]
        if g.shape != theta.shape:
            raise DimensionMismatch(f"adam_step: grad {name} {g.shape} vs param {theta.shape}")
        if cfg.weight_decay != 0.0 and not cfg.decoupled_weight_decay:
            g = g + cfg.weight_decay * theta
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        m_hat = m / (1.0 - cfg.beta1 ** t)
        v_hat = v / (1.0 - cfg.beta2 ** t)
        theta -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps_adam)
        if cfg.weight_decay != 0.0 and cfg.decoupled_weight_decay:
            theta -= cfg.learning_rate * cfg.weight_decay * theta
    return params, state


@dataclass
class Checkpoint:
    """Best-epoch weights plus everything needed to reproduce the run."""

    model_config: ModelConfig
    params: ModelParams
    train_config: TrainConfig
    best_epoch: int  # 0-based index into history
    history: list[tuple[float, float]] = field(default_factory=list)  # (train, val) loss
    version: int = CHECKPOINT_VERSION


def _stack(dataset: Sequence[PoseGraph]) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([g.node_features for g in dataset]).astype(np.float64)
    y = np.array([g.label for g in dataset], dtype=np.intp)
    return x, y


def fit(
    train_set: Sequence[PoseGraph],
    val_set: Sequence[PoseGraph],
    cfg: TrainConfig,
    d_desired: float = 1.0,
    log=None,
) -> Checkpoint:
    """Train from a fresh Xavier initialization until early stopping.

    Per epoch: seeded shuffle, mini-batch forward/backward/Adam, then the
    validation loss in inference mode.  Training stops once the validation
    loss has not improved for ``patience`` consecutive epochs (or at
    ``max_epochs``), and the returned checkpoint carries the weights of the
    best validation epoch, not the last one.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise EmptyDataset(f"need nonempty splits, got {len(train_set)} train / {len(val_set)} val")
    model_cfg = cfg.model_config(d_desired=d_desired)
    root = RngStream(cfg.seed)
    params = init_params(model_cfg, root.derive(KEY_INIT))
    state = init_adam_state(params)
    if log is not None:
        log(f"parameters: {parameter_count(params)}")

    x_train, y_train = _stack(train_set)
    x_val, y_val = _stack(val_set)
    n = len(train_set)

    history: list[tuple[float, float]] = []
    best_val = np.inf
    best_params = params.copy()
    best_epoch = -1
    epochs_without_improvement = 0

    for epoch in range(cfg.max_epochs):
        order = root.derive(KEY_SHUFFLE, epoch).permutation(n)
        drop_rng = root.derive(KEY_DROPOUT, epoch)
        loss_sum = 0.0
        for batch_no, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            logp, cache = model_forward(x_train[idx], params, model_cfg, training=True, rng=drop_rng)
            loss = nll_loss(logp, y_train[idx])
            if not np.isfinite(loss):
                raise NonFiniteLoss(
                    f"training loss {loss} at epoch {epoch}, batch {batch_no}",
                    epoch=epoch, batch=batch_no,
                )
            grads = model_backward(cache, y_train[idx])
            adam_step(params, grads, state, cfg)
            params.running_mean = cache.new_running_mean
            params.running_var = cache.new_running_var
            loss_sum += loss * len(idx)
        train_loss = loss_sum / n

        val_logp, _ = model_forward(x_val, params, model_cfg, training=False)
        val_loss = nll_loss(val_logp, y_val)
        if not np.isfinite(val_loss):
            raise NonFiniteLoss(f"validation loss {val_loss} at epoch {epoch}", epoch=epoch)
        history.append((train_loss, val_loss))
        if log is not None:
            log(f"epoch {epoch + 1}: train {train_loss:.6f}  val {val_loss:.6f}")

        if val_loss < best_val - cfg.min_improvement:
            best_val = val_loss
            best_params = params.copy()
            best_epoch = epoch
            epochs_without_improvement = 0
        else:
            epochs_without_improvement += 1
            if epochs_without_improvement >= cfg.patience:
                break

    return Checkpoint(
        model_config=model_cfg,
        params=best_params,
        train_config=cfg,
        best_epoch=best_epoch,
        history=history,
    )


def _encode_tensor(t: np.ndarray) -> dict:
    return {
        "shape": list(t.shape),
        "data": " ".join(float(v).hex() for v in np.asarray(t, dtype=np.float64).reshape(-1)),
    }


def _decode_tensor(obj: dict, name: str) -> np.ndarray:
    try:
        shape = tuple(obj["shape"])
        values = [float.fromhex(tok) for tok in obj["data"].split()]
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFile(f"tensor {name!r} is malformed: {exc}") from exc
    arr = np.array(values, dtype=np.float64)
    expected = int(np.prod(shape, dtype=np.int64))
    if arr.size != expected:
        raise CorruptFile(f"tensor {name!r}: {arr.size} values for shape {shape}")
    return arr.reshape(shape)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": ckpt.version,
        "model_config": asdict(ckpt.model_config),
        "train_config": asdict(ckpt.train_config),
        "best_epoch": ckpt.best_epoch,
        "history": [
            {"train_loss": float(tr).hex(), "val_loss": float(va).hex()}
            for tr, va in ckpt.history
        ],
        "tensors": {name: _encode_tensor(getattr(ckpt.params, name)) for name in ALL_FIELDS},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_checkpoint(path) -> Checkpoint:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptFile(f"not valid JSON at byte {exc.pos}: {exc.msg}", byte_offset=exc.pos) from exc
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CorruptFile("missing checkpoint header")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise VersionMismatch(
            f"checkpoint version {doc.get('version')!r}, expected {CHECKPOINT_VERSION}"
        )
    try:
        model_cfg = ModelConfig(**doc["model_config"])
        train_cfg = TrainConfig(**doc["train_config"])
        history = [
            (float.fromhex(h["train_loss"]), float.fromhex(h["val_loss"]))
            for h in doc["history"]
        ]
        tensors = {name: _decode_tensor(doc["tensors"][name], name) for name in ALL_FIELDS}
        best_epoch = int(doc["best_epoch"])
    except CorruptFile:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFile(f"checkpoint structure invalid: {exc}") from exc
    return Checkpoint(
        model_config=model_cfg,
        params=ModelParams(**tensors),
        train_config=train_cfg,
        best_epoch=best_epoch,
        history=history,
        version=CHECKPOINT_VERSION,
    )
