"""Plain per-feature batch normalization, used as an experiment baseline."""

from __future__ import annotations

import numpy as np


class BatchNorm:
    """Column-wise batch normalization with learnable gain/bias.

    Training standardizes with batch statistics (biased variance) and
    keeps exponential running statistics (unbiased variance) for the eval
    path. Single-writer during training; eval is pure.
    """

    def __init__(self, num_features: int, momentum: float = 0.1, eps: float = 1e-5):
        self.num_features = num_features
        self.momentum = momentum
        self.eps = eps
        self.gamma = np.ones(num_features)
        self.beta = np.zeros(num_features)
        self.running_mean = np.zeros(num_features)
        self.running_var = np.ones(num_features)
        self.batches_seen = 0

    def forward_train(self, x: np.ndarray) -> tuple[np.ndarray, dict]:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.num_features:
            raise ValueError(f"expected (b, {self.num_features}) input, got {x.shape}")
        b = x.shape[0]
        if b < 2:
            raise ValueError("batch normalization needs at least 2 rows")

        mean = x.mean(axis=0)
        var = x.var(axis=0)  # biased, as used for the in-batch transform
        inv_std = 1.0 / np.sqrt(var + self.eps)
        x_hat = (x - mean) * inv_std
        out = self.gamma * x_hat + self.beta

        unbiased = var * b / (b - 1)
        self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mean
        self.running_var = (1 - self.momentum) * self.running_var + self.momentum * unbiased
        self.batches_seen += 1

        cache = {"x_hat": x_hat, "inv_std": inv_std, "b": b}
        return out, cache

    def forward_eval(self, x: np.ndarray) -> np.ndarray:
        if self.batches_seen == 0:
            raise RuntimeError("batch norm has not seen any training batch")
        x = np.asarray(x, dtype=np.float64)
        x_hat = (x - self.running_mean) / np.sqrt(self.running_var + self.eps)
        return self.gamma * x_hat + self.beta

    def backward(self, cache: dict, dout: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Gradients through the train-path transform.

        Returns (dx, dgamma, dbeta); dx accounts for the batch statistics'
        dependence on x.
        """
        x_hat, inv_std, b = cache["x_hat"], cache["inv_std"], cache["b"]
        dgamma = np.sum(dout * x_hat, axis=0)
        dbeta = np.sum(dout, axis=0)
        dx_hat = dout * self.gamma
        dx = (inv_std / b) * (
            b * dx_hat - np.sum(dx_hat, axis=0) - x_hat * np.sum(dx_hat * x_hat, axis=0)
        )
        return dx, dgamma, dbeta
