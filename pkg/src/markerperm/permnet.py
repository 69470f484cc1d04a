"""Residual feed-forward network that maps a frame to a doubly-stochastic matrix.

Layout: dense input layer to ``hidden_width``; ``n_residual_blocks`` blocks
of ``layers_per_block`` dense + Leaky-ReLU layers whose output is added to
the block input; a final dense layer to ``N*N`` sigmoid units reshaped as
``M[label, marker]``.  Sinkhorn turns ``M`` into a DSM and training
minimizes the column-wise cross-entropy against the true labels.
"""

from __future__ import annotations

import copy
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .assign import decode
from .core import (DataError, DimensionError, LabelledFrameResult, MarkerFrame,
                   MarkerPermError, NumericError)
from .sinkhorn import SinkhornConfig, sinkhorn_backward, sinkhorn_forward
from .tensorio import ContainerError, load_tensors, save_tensors
from .trajlabel import confidences, normalize_confidence

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
LOG_CLAMP = 1e-12


@dataclass(frozen=True)
class NetworkConfig:
    n_markers: int
    hidden_width: int = 1024
    n_residual_blocks: int = 3
    layers_per_block: int = 3
    leaky_slope: float = 0.01
    seed: int = 0

    @property
    def input_dim(self) -> int:
        return 3 * self.n_markers

    @property
    def output_dim(self) -> int:
        return self.n_markers * self.n_markers


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    lr_initial: float = 5e-5
    lr_decay_factor: float = 0.5
    epochs: int = 100
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    # arithmetic precision of the training loop; checkpoints are always float64
    dtype: str = "float64"

    def __post_init__(self):
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")
        if not self.lr_initial > 0:
            raise ValueError("lr_initial must be positive")
        if not 0 < self.lr_decay_factor < 1:
            raise ValueError("lr_decay_factor must be in (0, 1)")


class TrainingError(MarkerPermError, RuntimeError):
    pass


class CheckpointError(MarkerPermError, ValueError):
    pass


# -- parameters ----------------------------------------------------------------------

def layer_names(cfg: NetworkConfig) -> list[str]:
    names = ["input"]
    for b in range(cfg.n_residual_blocks):
        names += [f"block{b}.dense{k}" for k in range(cfg.layers_per_block)]
    names.append("output")
    return names


def weight_shapes(cfg: NetworkConfig) -> dict:
    h = cfg.hidden_width
    shapes = {}
    for name in layer_names(cfg):
        fan_in = cfg.input_dim if name == "input" else h
        fan_out = cfg.output_dim if name == "output" else h
        shapes[name + ".W"] = (fan_in, fan_out)
        shapes[name + ".b"] = (fan_out,)
    return shapes


def init_weights(cfg: NetworkConfig) -> dict:
    """He-scaled normal weights, zero biases; the output layer uses a
    smaller scale so the initial sigmoid outputs are not saturated."""
    rng = np.random.default_rng(cfg.seed)
    weights = {}
    for name, shape in weight_shapes(cfg).items():
        if name.endswith(".b"):
            weights[name] = np.zeros(shape)
            continue
        std = math.sqrt(2.0 / shape[0])
        if name.startswith("output"):
            std = math.sqrt(1.0 / shape[0])
        elif name.startswith("block"):
            # keep the residual stream variance bounded across blocks
            std /= math.sqrt(cfg.n_residual_blocks)
        weights[name] = rng.normal(0.0, std, size=shape)
    return weights


def check_weights(cfg: NetworkConfig, weights: dict) -> None:
    shapes = weight_shapes(cfg)
    if set(shapes) != set(weights):
        raise DimensionError("weight names do not match the network config")
    for name, shape in shapes.items():
        if tuple(weights[name].shape) != shape:
            raise DimensionError(f"{name}: shape {weights[name].shape} != {shape}")


# -- forward / backward ------------------------------------------------------------

def _leaky(z, slope):
    return np.where(z > 0, z, slope * z)


def _finite(a, layer):
    if not np.isfinite(a).all():
        raise NumericError(f"non-finite activation at layer {layer}")


def forward(x, weights: dict, cfg: NetworkConfig):
    """Unconstrained matrices ``(B, N, N)`` (or ``(N, N)`` for one frame) and a tape."""
    x = np.asarray(x)
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    if xb.shape[1] != cfg.input_dim:
        raise DimensionError(f"input width {xb.shape[1]} != 3N = {cfg.input_dim}")
    slope = cfg.leaky_slope
    tape = {"x": xb, "pre": {}, "post": {}, "single": single}
    names = layer_names(cfg)
    h = xb
    for k, name in enumerate(names[:-1]):
        if name.startswith("block") and name.endswith("dense0"):
            block_in = h
        z = h @ weights[name + ".W"] + weights[name + ".b"]
        _finite(z, k)
        a = _leaky(z, slope)
        tape["pre"][name] = z
        tape["post"][name] = a
        if name.startswith("block") and name.endswith(f"dense{cfg.layers_per_block - 1}"):
            a = a + block_in
        h = a
        tape["post"][name + "+"] = h
    logits = h @ weights["output.W"] + weights["output.b"]
    _finite(logits, len(names) - 1)
    # exp overflow gives inf and the exact limit 0
    with np.errstate(over="ignore"):
        m = 1.0 / (1.0 + np.exp(-logits))
    tape["sig"] = m
    n = cfg.n_markers
    m = m.reshape(-1, n, n)
    return (m[0] if single else m), tape


def backward(tape: dict, grad_m, weights: dict, cfg: NetworkConfig) -> dict:
    """Weight gradients given ``dL/dM`` for the matrices returned by :func:`forward`."""
    names = layer_names(cfg)
    g = np.asarray(grad_m).reshape(tape["sig"].shape)
    sig = tape["sig"]
    g = g * sig * (1.0 - sig)
    grads = {}

    def inp(k):
        return tape["x"] if k == 0 else tape["post"][names[k - 1] + "+"]

    last = len(names) - 1
    grads["output.W"] = inp(last).T @ g
    grads["output.b"] = g.sum(axis=0)
    gh = g @ weights["output.W"].T
    skip = None
    for k in range(last - 1, -1, -1):
        name = names[k]
        if name.startswith("block") and name.endswith(f"dense{cfg.layers_per_block - 1}"):
            skip = gh  # gradient reaching the block input through the identity path
        gz = np.where(tape["pre"][name] > 0, gh, cfg.leaky_slope * gh)
        grads[name + ".W"] = inp(k).T @ gz
        grads[name + ".b"] = gz.sum(axis=0)
        gh = gz @ weights[name + ".W"].T
        if name.startswith("block") and name.endswith("dense0"):
            gh = gh + skip
    return grads


def cross_entropy(dsm, targets):
    """Mean of ``-log D[target_j, j]`` over frames and markers.

    Returns ``(loss, dL/dD, n_clamped)``.
    """
    d = np.asarray(dsm)
    t = np.atleast_2d(np.asarray(targets))
    d3 = d.reshape(t.shape[0], t.shape[1], t.shape[1])
    b_idx = np.arange(t.shape[0])[:, None]
    m_idx = np.arange(t.shape[1])[None, :]
    picked = d3[b_idx, t, m_idx]
    clamped = picked < LOG_CLAMP
    safe = np.maximum(picked, LOG_CLAMP)
    count = t.size
    loss = float(-np.log(safe).sum() / count)
    grad = np.zeros_like(d3)
    grad[b_idx, t, m_idx] = np.where(clamped, 0.0, -1.0 / (safe * count))
    return loss, grad.reshape(d.shape), int(clamped.sum())


def loss_and_gradients(x, targets, weights: dict, cfg: NetworkConfig,
                       sinkhorn_cfg: SinkhornConfig = SinkhornConfig()):
    """Cross-entropy loss for a batch of flattened frames and its weight gradients.

    ``targets[b, j]`` is the true label of marker ``j`` in frame ``b``.
    Returns ``(loss, grads, n_clamped)``.
    """
    x = np.atleast_2d(x)
    targets = np.atleast_2d(targets)
    if len(x) == 0:
        raise ValueError("empty batch")
    m, tape = forward(x, weights, cfg)
    d, stape = sinkhorn_forward(m, sinkhorn_cfg)
    loss, gd, clamped = cross_entropy(d, targets)
    gm = sinkhorn_backward(stape, gd)
    return loss, backward(tape, gm, weights, cfg), clamped


def predict_dsm(x, weights: dict, cfg: NetworkConfig,
                sinkhorn_cfg: SinkhornConfig = SinkhornConfig(), batch: int = 1024) -> np.ndarray:
    x = np.atleast_2d(x)
    out = []
    for s in range(0, len(x), batch):
        m, _ = forward(x[s:s + batch], weights, cfg)
        out.append(sinkhorn_forward(m, sinkhorn_cfg)[0])
    return np.concatenate(out) if out else np.empty((0, cfg.n_markers, cfg.n_markers))


def evaluate_loss(x, targets, weights, cfg, sinkhorn_cfg, batch: int = 1024) -> float:
    total = 0.0
    for s in range(0, len(x), batch):
        d = predict_dsm(x[s:s + batch], weights, cfg, sinkhorn_cfg, batch)
        loss, _, _ = cross_entropy(d, targets[s:s + batch])
        total += loss * len(d)
    return total / len(x)


# -- optimisation ----------------------------------------------------------------------

class Adam:
    def __init__(self, weights: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in weights.items()}
        self.v = {k: np.zeros_like(v) for k, v in weights.items()}
        self.t = 0

    def step(self, weights: dict, grads: dict) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        scale = self.lr * math.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t)
        for k in sorted(weights):
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            weights[k] -= scale * m / (np.sqrt(v) + self.eps)


@dataclass
class ModelCheckpoint:
    config: NetworkConfig
    weights: dict
    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig)
    training_meta: dict = field(default_factory=dict)
    version: int = CHECKPOINT_VERSION

    def __post_init__(self):
        check_weights(self.config, self.weights)
        self._inference = {}

    @property
    def n_markers(self) -> int:
        return self.config.n_markers

    def inference_weights(self, dtype=np.float32) -> dict:
        """Cached copy of the weights cast for fast single-frame inference."""
        key = np.dtype(dtype).str
        if key not in self._inference:
            self._inference[key] = {k: np.ascontiguousarray(v, dtype=dtype)
                                    for k, v in self.weights.items()}
        return self._inference[key]


def _frameset_arrays(fs):
    x = fs.positions.reshape(len(fs), -1)
    return x, fs.targets


def train(dataset, val_dataset, net_cfg: NetworkConfig, train_cfg: TrainConfig = TrainConfig(),
          sinkhorn_cfg: SinkhornConfig = SinkhornConfig(), *, init: dict | None = None,
          callback=None) -> ModelCheckpoint:
    """Adam training with lr decay on validation-loss increase.

    ``dataset``/``val_dataset`` are :class:`~markerperm.synthdata.FrameSet`.
    Returns the checkpoint with the lowest validation loss; the per-epoch
    log is in ``training_meta["log"]``.
    """
    if len(dataset) == 0 or len(val_dataset) == 0:
        raise ValueError("training and validation sets must be non-empty")
    if dataset.n_markers != net_cfg.n_markers:
        raise DimensionError("dataset marker count does not match the network")
    overlap = dataset.subject_set() & val_dataset.subject_set() - {""}
    if overlap:
        raise DataError(f"train/validation subjects overlap: {sorted(overlap)}")
    dt = np.dtype(train_cfg.dtype)
    x, y = _frameset_arrays(dataset)
    xv, yv = _frameset_arrays(val_dataset)
    x, xv = x.astype(dt), xv.astype(dt)
    weights = copy.deepcopy(init) if init is not None else init_weights(net_cfg)
    check_weights(net_cfg, weights)
    weights = {k: v.astype(dt) for k, v in weights.items()}
    opt = Adam(weights, train_cfg.lr_initial, train_cfg.adam_beta1,
               train_cfg.adam_beta2, train_cfg.adam_eps)
    rng = np.random.default_rng(train_cfg.seed)
    bs = train_cfg.batch_size

    history = []
    best_val, best_weights, best_epoch = math.inf, copy.deepcopy(weights), 0
    prev_val = evaluate_loss(xv, yv, weights, net_cfg, sinkhorn_cfg)
    initial_train = evaluate_loss(x, y, weights, net_cfg, sinkhorn_cfg)
    clamped_total = 0
    for epoch in range(train_cfg.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(len(x))
        running = 0.0
        for b, s in enumerate(range(0, len(x), bs)):
            idx = order[s:s + bs]
            loss, grads, clamped = loss_and_gradients(x[idx], y[idx], weights, net_cfg, sinkhorn_cfg)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            clamped_total += clamped
            running += loss * len(idx)
            opt.step(weights, grads)
        train_loss = running / len(x)
        val_loss = evaluate_loss(xv, yv, weights, net_cfg, sinkhorn_cfg)
        if not math.isfinite(val_loss):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}")
        entry = {"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss,
                 "lr": opt.lr, "seconds": round(time.perf_counter() - t0, 3)}
        history.append(entry)
        log.info("epoch %d train %.5f val %.5f lr %.3g", epoch, train_loss, val_loss, opt.lr)
        if callback is not None:
            callback(entry)
        if val_loss < best_val:
            best_val, best_weights, best_epoch = val_loss, copy.deepcopy(weights), epoch
        if val_loss > prev_val:
            opt.lr *= train_cfg.lr_decay_factor
        prev_val = val_loss

    meta = {
        "epochs_run": train_cfg.epochs,
        "best_epoch": best_epoch,
        "final_val_loss": history[-1]["val_loss"],
        "best_val_loss": best_val,
        "initial_train_loss": initial_train,
        "dataset_fingerprint": dataset.fingerprint(),
        "val_fingerprint": val_dataset.fingerprint(),
        "train_subjects": sorted(dataset.subject_set() - {""}),
        "clamped_log_terms": clamped_total,
        "train_config": asdict(train_cfg),
        "log": [{k: v for k, v in e.items() if k != "seconds"} for e in history],
    }
    best_weights = {k: v.astype(np.float64) for k, v in best_weights.items()}
    return ModelCheckpoint(net_cfg, best_weights, sinkhorn_cfg, meta)


# -- inference ----------------------------------------------------------------------

def label_frame(frame: MarkerFrame, checkpoint: ModelCheckpoint,
                sinkhorn_cfg: SinkhornConfig | None = None,
                dtype=np.float32) -> LabelledFrameResult:
    """Label one normalized frame: network, Sinkhorn, Hungarian decode, confidences."""
    cfg = checkpoint.config
    if frame.n_markers != cfg.n_markers:
        raise DimensionError(f"frame has {frame.n_markers} markers, model expects {cfg.n_markers}")
    scfg = sinkhorn_cfg or checkpoint.sinkhorn
    weights = checkpoint.inference_weights(dtype)
    m, _ = forward(frame.positions.reshape(-1).astype(dtype), weights, cfg)
    dsm, _ = sinkhorn_forward(m.astype(np.float64), scfg)
    return result_from_dsm(dsm, frame.frame_index)


def result_from_dsm(dsm: np.ndarray, frame_index: int = 0) -> LabelledFrameResult:
    perm = decode(dsm).permutation
    raw = np.clip(confidences(dsm, perm.mapping), -1.0, 1.0)
    return LabelledFrameResult(perm, dsm, normalize_confidence(raw), frame_index, raw)


def label_frames(positions, checkpoint: ModelCheckpoint, batch: int = 1024) -> list[LabelledFrameResult]:
    """Batched :func:`label_frame` over normalized frames ``(F, N, 3)``."""
    positions = np.asarray(positions)
    x = positions.reshape(len(positions), -1)
    dsms = predict_dsm(x, checkpoint.weights, checkpoint.config, checkpoint.sinkhorn, batch)
    return [result_from_dsm(d, k) for k, d in enumerate(dsms)]


# -- persistence -------------------------------------------------------------------------

def save_checkpoint(ckpt: ModelCheckpoint, path) -> None:
    meta = {"version": ckpt.version, "config": asdict(ckpt.config),
            "sinkhorn": asdict(ckpt.sinkhorn), "training_meta": ckpt.training_meta}
    save_tensors(path, meta, ckpt.weights)


def load_checkpoint(path) -> ModelCheckpoint:
    try:
        meta, arrays = load_tensors(path)
    except ContainerError as exc:
        raise CheckpointError(str(exc)) from exc
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {meta.get('version')}")
    cfg = NetworkConfig(**meta["config"])
    try:
        return ModelCheckpoint(cfg, arrays, SinkhornConfig(**meta["sinkhorn"]),
                               meta.get("training_meta", {}), meta["version"])
    except DimensionError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
