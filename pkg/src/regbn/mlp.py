"""Minimal feed-forward classifier with manual backpropagation.

Architecture: flattened image -> FC(256, ReLU) -> FC(128) producing the
feature vector, a normalization slot over those 128 features (identity,
batch norm, or the cross-modal layer conditioned on the metadata), then
FC(1) with a sigmoid head for binary classification.

The cross-modal slot treats the per-batch projection weights as a
constant of the batch: gradients flow through the residual into the
image encoder unchanged, and the metadata pathway receives no gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .batchnorm import BatchNorm
from .layer import RegBN
from .serialization import Reader, Writer

CHECKPOINT_MAGIC = b"RGNN"
CHECKPOINT_VERSION = 1

SLOTS = ("none", "bn", "regbn")
HIDDEN_DIM = 256
FEATURE_DIM = 128


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 50
    epochs: int = 15
    learning_rate: float = 1e-3
    lr_decay: float = 1.0  # per-epoch multiplier
    optimizer: str = "adam"
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")

    def lr_at(self, epoch: int) -> float:
        return self.learning_rate * self.lr_decay**epoch


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class MlpModel:
    """Parameters plus the normalization slot choice."""

    def __init__(self, slot: str = "none", image_dim: int = 4096,
                 rng: np.random.Generator | None = None):
        if slot not in SLOTS:
            raise ValueError(f"slot must be one of {SLOTS}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.slot = slot
        self.image_dim = image_dim
        self.params: dict[str, np.ndarray] = {
            "w1": glorot_uniform(rng, image_dim, HIDDEN_DIM),
            "b1": np.zeros(HIDDEN_DIM),
            "w2": glorot_uniform(rng, HIDDEN_DIM, FEATURE_DIM),
            "b2": np.zeros(FEATURE_DIM),
            "w3": glorot_uniform(rng, FEATURE_DIM, 1),
            "b3": np.zeros(1),
        }
        self.bn = BatchNorm(FEATURE_DIM) if slot == "bn" else None

    def trainable(self) -> dict[str, np.ndarray]:
        out = dict(self.params)
        if self.bn is not None:
            out["bn_gamma"] = self.bn.gamma
            out["bn_beta"] = self.bn.beta
        return out

    # -- checkpointing ---------------------------------------------------

    def save(self, path: str | Path) -> None:
        w = Writer(CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
        w.u8(SLOTS.index(self.slot)).u32(self.image_dim)
        for key in ("w1", "b1", "w2", "b2", "w3", "b3"):
            w.f64_array(self.params[key].ravel())
        if self.bn is not None:
            w.f64_array(self.bn.gamma)
            w.f64_array(self.bn.beta)
            w.f64_array(self.bn.running_mean)
            w.f64_array(self.bn.running_var)
            w.u64(self.bn.batches_seen)
        Path(path).write_bytes(w.getvalue())

    @classmethod
    def load(cls, path: str | Path) -> "MlpModel":
        r = Reader(Path(path).read_bytes(), CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
        slot = SLOTS[r.u8()]
        image_dim = r.u32()
        model = cls(slot=slot, image_dim=image_dim)
        shapes = {
            "w1": (image_dim, HIDDEN_DIM), "b1": (HIDDEN_DIM,),
            "w2": (HIDDEN_DIM, FEATURE_DIM), "b2": (FEATURE_DIM,),
            "w3": (FEATURE_DIM, 1), "b3": (1,),
        }
        for key, shape in shapes.items():
            model.params[key] = r.f64_array().reshape(shape)
        if slot == "bn":
            model.bn.gamma = r.f64_array()
            model.bn.beta = r.f64_array()
            model.bn.running_mean = r.f64_array()
            model.bn.running_var = r.f64_array()
            model.bn.batches_seen = r.u64()
        r.done()
        return model


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_from_logits(z: np.ndarray, y: np.ndarray) -> float:
    """Mean binary cross-entropy, computed in logit space so it stays finite."""
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def forward(
    model: MlpModel,
    images: np.ndarray,
    metadata: np.ndarray,
    mode: str = "eval",
    regbn: RegBN | None = None,
    learning_rate: float | None = None,
) -> tuple[np.ndarray, dict]:
    """Probabilities plus the activation cache for backprop.

    ``regbn`` must be supplied exactly when the model's slot is "regbn";
    in train mode the layer also needs the host's current learning rate.
    """
    if (regbn is not None) != (model.slot == "regbn"):
        raise ValueError("regbn layer must be passed iff the slot is 'regbn'")
    if mode not in ("train", "eval"):
        raise ValueError("mode must be 'train' or 'eval'")

    x = np.asarray(images, dtype=np.float64)
    if x.ndim > 2:
        x = x.reshape(x.shape[0], -1)
    if x.shape[1] != model.image_dim:
        raise ValueError(f"expected flattened dim {model.image_dim}, got {x.shape[1]}")

    h_pre = x @ model.params["w1"] + model.params["b1"]
    h = np.maximum(h_pre, 0.0)
    feat = h @ model.params["w2"] + model.params["b2"]

    bn_cache = None
    if model.slot == "none":
        feat_n = feat
    elif model.slot == "bn":
        if mode == "train":
            feat_n, bn_cache = model.bn.forward_train(feat)
        else:
            feat_n = model.bn.forward_eval(feat)
    else:
        if mode == "train":
            if learning_rate is None:
                raise ValueError("training the regbn slot needs the current learning rate")
            feat_n = regbn.forward_train(feat, metadata, learning_rate)
        else:
            feat_n = regbn.forward_eval(feat, metadata)

    z = (feat_n @ model.params["w3"] + model.params["b3"]).ravel()
    probs = sigmoid(z)
    cache = {
        "x": x, "h_pre": h_pre, "h": h, "feat_n": feat_n,
        "z": z, "probs": probs, "bn_cache": bn_cache,
    }
    return probs, cache


def backward(model: MlpModel, cache: dict, labels: np.ndarray) -> dict[str, np.ndarray]:
    """Parameter gradients of the mean BCE for the cached batch."""
    y = np.asarray(labels, dtype=np.float64)
    b = y.shape[0]
    dz = ((cache["probs"] - y) / b)[:, None]

    grads: dict[str, np.ndarray] = {}
    grads["w3"] = cache["feat_n"].T @ dz
    grads["b3"] = dz.sum(axis=0)
    dfeat_n = dz @ model.params["w3"].T

    if model.slot == "bn":
        dfeat, dgamma, dbeta = model.bn.backward(cache["bn_cache"], dfeat_n)
        grads["bn_gamma"] = dgamma
        grads["bn_beta"] = dbeta
    else:
        # identity slot, or the residual slot where the projection weights
        # are a constant of the batch: d(feat - g W)/d feat = I
        dfeat = dfeat_n

    grads["w2"] = cache["h"].T @ dfeat
    grads["b2"] = dfeat.sum(axis=0)
    dh = (dfeat @ model.params["w2"].T) * (cache["h_pre"] > 0)
    grads["w1"] = cache["x"].T @ dh
    grads["b1"] = dh.sum(axis=0)
    return grads


class SgdOptimizer:
    def __init__(self, model: MlpModel):
        self.model = model

    def step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        for key, p in self.model.trainable().items():
            if key in grads:
                p -= lr * grads[key].reshape(p.shape)


class AdamOptimizer:
    def __init__(self, model: MlpModel, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.model = model
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p) for k, p in model.trainable().items()}
        self.v = {k: np.zeros_like(p) for k, p in model.trainable().items()}
        self._scratch = {k: np.empty_like(p) for k, p in model.trainable().items()}

    def step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        # In-place update with the bias corrections folded into the step
        # size / eps: p -= lr_t * m / (sqrt(v) + eps_t). The first-layer
        # moments are 4096x256, so avoiding temporaries matters.
        self.t += 1
        c2 = np.sqrt(1 - self.beta2**self.t)
        lr_t = lr * c2 / (1 - self.beta1**self.t)
        eps_t = self.eps * c2
        for key, p in self.model.trainable().items():
            if key not in grads:
                continue
            g = grads[key].reshape(p.shape)
            m, v, scratch = self.m[key], self.v[key], self._scratch[key]
            m *= self.beta1
            np.multiply(g, 1 - self.beta1, out=scratch)
            m += scratch
            v *= self.beta2
            np.multiply(g, g, out=scratch)
            scratch *= 1 - self.beta2
            v += scratch
            np.sqrt(v, out=scratch)
            scratch += eps_t
            np.divide(m, scratch, out=scratch)
            scratch *= lr_t
            p -= scratch


def make_optimizer(model: MlpModel, cfg: TrainConfig):
    return AdamOptimizer(model) if cfg.optimizer == "adam" else SgdOptimizer(model)


@dataclass
class TrainResult:
    epoch_losses: list[float] = field(default_factory=list)
    batch_losses: list[float] = field(default_factory=list)
    lambda_trace: list[float] = field(default_factory=list)
    delta_w_trace: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)


def train_epoch(
    model: MlpModel,
    optimizer,
    split,
    cfg: TrainConfig,
    rng: np.random.Generator,
    epoch: int,
    regbn: RegBN | None = None,
    result: TrainResult | None = None,
) -> list[float]:
    """One pass over the split. Batches are shuffled; a trailing partial
    batch is dropped so every step sees the configured batch size."""
    result = result if result is not None else TrainResult()
    lr = cfg.lr_at(epoch)
    x_flat = split.flat_images
    meta = split.metadata
    y = split.labels.astype(np.float64)

    order = rng.permutation(len(split))
    n_batches = len(split) // cfg.batch_size
    losses = []
    for bi in range(n_batches):
        idx = order[bi * cfg.batch_size : (bi + 1) * cfg.batch_size]
        probs, cache = forward(
            model, x_flat[idx], meta[idx], mode="train", regbn=regbn, learning_rate=lr
        )
        loss = bce_from_logits(cache["z"], y[idx])
        if not np.isfinite(loss):
            raise DivergenceError(
                f"non-finite loss at epoch {epoch}, batch {bi} (lr={lr:g})"
            )
        if lr > 0:
            grads = backward(model, cache, y[idx])
            optimizer.step(grads, lr)
        losses.append(loss)
        if regbn is not None and regbn.last_batch is not None:
            result.lambda_trace.append(regbn.last_batch.lambda_hat)
            result.delta_w_trace.append(regbn.last_batch.delta_w)
    result.batch_losses.extend(losses)
    result.epoch_losses.append(float(np.mean(losses)) if losses else float("nan"))
    return losses


def refresh_bn_stats(model: MlpModel, split, batch_size: int = 2000) -> None:
    """Replace the running statistics with the population statistics of the
    features under the current (frozen) parameters.

    The per-batch EMA lags a still-moving feature distribution, and a
    confident classifier amplifies even a modest calibration gap into
    wrong logits, so the eval path uses exact end-of-training statistics.
    """
    if model.bn is None:
        return
    x_flat = split.flat_images
    feats = []
    for lo in range(0, x_flat.shape[0], batch_size):
        x = x_flat[lo : lo + batch_size]
        h = np.maximum(x @ model.params["w1"] + model.params["b1"], 0.0)
        feats.append(h @ model.params["w2"] + model.params["b2"])
    feat = np.concatenate(feats, axis=0)
    model.bn.running_mean = feat.mean(axis=0)
    model.bn.running_var = feat.var(axis=0, ddof=1)


def train(
    model: MlpModel,
    train_split,
    cfg: TrainConfig,
    regbn: RegBN | None = None,
    eval_split=None,
) -> TrainResult:
    """Full training loop; optionally evaluates after every epoch."""
    rng = np.random.default_rng(cfg.rng_seed)
    optimizer = make_optimizer(model, cfg)
    result = TrainResult()
    for epoch in range(cfg.epochs):
        train_epoch(model, optimizer, train_split, cfg, rng, epoch,
                    regbn=regbn, result=result)
        if model.bn is not None:
            refresh_bn_stats(model, train_split)
        if eval_split is not None:
            result.val_accuracy.append(
                evaluate(model, eval_split, regbn=regbn)["accuracy"]
            )
    return result


def evaluate(model: MlpModel, split, regbn: RegBN | None = None,
             batch_size: int = 2000) -> dict[str, float]:
    """Accuracy at the 0.5 threshold plus mean BCE, on the eval path."""
    y = split.labels.astype(np.float64)
    x_flat = split.flat_images
    meta = split.metadata
    correct = 0
    loss_sum = 0.0
    for lo in range(0, len(split), batch_size):
        hi = min(lo + batch_size, len(split))
        probs, cache = forward(model, x_flat[lo:hi], meta[lo:hi], mode="eval", regbn=regbn)
        yb = y[lo:hi]
        correct += int(np.sum((probs >= 0.5) == (yb >= 0.5)))
        loss_sum += bce_from_logits(cache["z"], yb) * (hi - lo)
    return {"accuracy": correct / len(split), "loss": loss_sum / len(split)}
