"""The stateful normalization layer.

Training path, per batch: thin-SVD the conditioning modality g, estimate
the regularization strength (adaptive search or a fixed value), build the
closed-form projection weights W_hat, and emit the residual f - g W_hat
computed with the FRESH weights. The persistent weights are then blended
toward W_hat through bias-corrected first/second moments of the weight
drift, scaled by the host model's current learning rate.

Inference path: f - g W_t with the persisted weights only; no SVD, no
search, no mutation.

The projection weights are never trained by the host criterion; they are
re-estimated from data each batch and smoothed across batches.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .lambda_solver import (
    DEFAULT_SEEDS,
    LambdaHistory,
    LambdaObjective,
    LambdaSolution,
    LbfgsConfig,
    solve_lambda,
)
from .linalg import as_matrix, mean_abs_diff, thin_svd
from .projection import project_svd, residual
from .serialization import PayloadError, Reader, Writer

SNAPSHOT_MAGIC = b"RGBN"
SNAPSHOT_VERSION = 1
RECOMMENDED_MIN_BATCH = 50


class SmallBatchWarning(UserWarning):
    """Batch below the recommended minimum for a stable weight estimate."""


@dataclass(frozen=True)
class RegBNConfig:
    """Layer tunables.

    beta1/beta2 are the moment decay rates of the weight-drift EMA;
    epsilon fuzzes the second-moment square root. seeds are the fixed
    restart points of the lambda search. fixed_lambda switches the layer
    from the adaptive per-batch search to a constant strength (ablation
    mode).

    standardize_inputs (off by default) column-standardizes the incoming
    features f with batch statistics and rescales them to a target column
    scale of feature_scale divided by the RMS column std of the batch's g;
    the conditioning modality g itself always keeps its raw column scales.
    Pinning f's scale stops a trained upstream encoder from outgrowing the
    unit-norm weight budget, g's natural scales are what make the removal
    selective (large-variance columns of g are regressed out first), and
    dividing by g's overall scale keeps the budget commensurate with g's
    units, so stronger conditioning columns are normalized against harder.
    feature_scale trades residual signal against leakage.
    """

    beta1: float = 0.9
    beta2: float = 0.99
    seeds: tuple[float, ...] = DEFAULT_SEEDS
    epsilon: float = 1e-8
    lbfgs: LbfgsConfig = field(default_factory=LbfgsConfig)
    standardize_inputs: bool = False
    feature_scale: float = 0.1
    fixed_lambda: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.beta1 < 1.0:
            raise ValueError("beta1 must be in (0, 1)")
        if not 0.0 < self.beta2 < 1.0:
            raise ValueError("beta2 must be in (0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.feature_scale <= 0:
            raise ValueError("feature_scale must be positive")
        if self.fixed_lambda is not None and not self.fixed_lambda > 0:
            raise ValueError("fixed_lambda must be positive")


@dataclass
class RegBNState:
    """Cross-batch state: persisted weights, drift moments, step count,
    and the accepted-lambda record (one entry per training batch)."""

    w: np.ndarray | None = None
    m_t: float = 0.0
    v_t: float = 0.0
    t: int = 0
    history: LambdaHistory = field(default_factory=LambdaHistory)
    dims: tuple[int, int] | None = None  # (n, m), locked on the first batch

    def clone(self) -> "RegBNState":
        return RegBNState(
            w=None if self.w is None else self.w.copy(),
            m_t=self.m_t,
            v_t=self.v_t,
            t=self.t,
            history=LambdaHistory(seeds=self.history.seeds, values=list(self.history.values)),
            dims=self.dims,
        )


@dataclass(frozen=True)
class BatchInfo:
    """Diagnostics of the most recent training batch."""

    lambda_hat: float
    solver_loss: float
    delta_w: float
    alpha: float
    degenerate: bool


class RegBN:
    """Normalizes features f against a second modality g.

    One instance owns one state and follows a single-writer contract
    during training; ``forward_eval`` is pure and safe to call
    concurrently on a shared (or restored) state.
    """

    def __init__(self, config: RegBNConfig | None = None, state: RegBNState | None = None):
        self.config = config if config is not None else RegBNConfig()
        self.state = state if state is not None else RegBNState(
            history=LambdaHistory(seeds=self.config.seeds)
        )
        self.last_batch: BatchInfo | None = None

    # -- forward paths ---------------------------------------------------

    def forward_train(self, f: np.ndarray, g: np.ndarray, learning_rate: float) -> np.ndarray:
        """One training step; returns the residual and updates the state."""
        if not learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        f, g = self._check_inputs(f, g, lock=True)
        if self.config.standardize_inputs:
            f = _standardize_columns(f) * self._target_scale(g)

        st = self.state
        cfg = self.config
        svd_g = thin_svd(g)

        if cfg.fixed_lambda is not None:
            sol = LambdaSolution(lambda_hat=cfg.fixed_lambda, loss=float("nan"))
        else:
            obj = LambdaObjective.from_factors(svd_g, f)
            sol = solve_lambda(obj, st.history, cfg.lbfgs)

        w_hat = project_svd(f, g, sol.lambda_hat, svd_g=svd_g)
        out = residual(f, g, w_hat)

        w_prev = st.w if st.w is not None else w_hat  # first batch: no-op blend
        delta = mean_abs_diff(w_hat, w_prev)

        t = st.t + 1
        m_t = (cfg.beta1 * st.m_t + (1.0 - cfg.beta1) * delta) / (1.0 - cfg.beta1**t)
        v_t = (cfg.beta2 * st.v_t + (1.0 - cfg.beta2) * delta**2) / (1.0 - cfg.beta2**t)
        alpha = float(np.clip(learning_rate * m_t / np.sqrt(v_t + cfg.epsilon), 0.0, 1.0))

        st.w = (1.0 - alpha) * w_hat + alpha * w_prev
        st.m_t = m_t
        st.v_t = v_t
        st.t = t
        st.history.append(sol.lambda_hat)

        self.last_batch = BatchInfo(
            lambda_hat=sol.lambda_hat,
            solver_loss=sol.loss,
            delta_w=delta,
            alpha=alpha,
            degenerate=sol.degenerate,
        )
        return out

    def forward_eval(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Residual against the persisted weights; no state mutation."""
        if self.state.t < 1 or self.state.w is None:
            raise RuntimeError("layer has not been trained on any batch yet")
        f, g = self._check_inputs(f, g, lock=False)
        if self.config.standardize_inputs:
            f = _standardize_columns(f) * self._target_scale(g)
        return residual(f, g, self.state.w)

    def _target_scale(self, g: np.ndarray) -> float:
        """Per-column target scale for standardized features: the
        configured scale in units of g's overall column spread."""
        g_rms = float(np.sqrt(np.mean(g.var(axis=0))))
        return self.config.feature_scale / max(g_rms, 1e-12)

    def _check_inputs(self, f, g, lock: bool) -> tuple[np.ndarray, np.ndarray]:
        f = as_matrix(f, "f")
        g = as_matrix(g, "g")
        b = f.shape[0]
        if g.shape[0] != b:
            raise ValueError(f"batch size mismatch: f has {b} rows, g has {g.shape[0]}")
        if b < 2:
            raise ValueError("a single-row batch cannot define a projection")
        if b < RECOMMENDED_MIN_BATCH:
            warnings.warn(
                f"batch size {b} is below the recommended minimum of "
                f"{RECOMMENDED_MIN_BATCH}; weight estimates may be noisy",
                SmallBatchWarning,
                stacklevel=3,
            )
        dims = (f.shape[1], g.shape[1])
        if self.state.dims is None:
            if lock:
                self.state.dims = dims
        elif self.state.dims != dims:
            raise ValueError(
                f"feature dims {dims} do not match the locked dims {self.state.dims}"
            )
        return f, g

    # -- persistence -----------------------------------------------------

    def snapshot(self) -> bytes:
        """Serialize config plus state; floats round-trip bit-exactly."""
        cfg = self.config
        st = self.state
        n, m = st.dims if st.dims is not None else (0, 0)
        w = Writer(SNAPSHOT_MAGIC, SNAPSHOT_VERSION)
        # config block (eval behavior depends on it, so it travels along)
        w.f64(cfg.beta1).f64(cfg.beta2).f64(cfg.epsilon)
        w.u8(1 if cfg.standardize_inputs else 0).f64(cfg.feature_scale)
        w.u8(1 if cfg.fixed_lambda is not None else 0)
        w.f64(cfg.fixed_lambda if cfg.fixed_lambda is not None else 0.0)
        w.f64(cfg.lbfgs.learning_rate).u32(cfg.lbfgs.max_iterations)
        w.f64(cfg.lbfgs.tolerance).u32(cfg.lbfgs.memory)
        # state block, declared field order
        w.u32(n).u32(m).u64(st.t).f64(st.m_t).f64(st.v_t)
        w.f64_array(st.w.ravel() if st.w is not None else np.empty(0))
        w.f64_array(np.asarray(st.history.seeds))
        w.f64_array(np.asarray(st.history.values))
        return w.getvalue()

    @classmethod
    def restore(cls, data: bytes, config: RegBNConfig | None = None) -> "RegBN":
        """Rebuild a layer from ``snapshot`` output.

        The serialized config is used unless an explicit one is passed.
        Raises PayloadError on corrupt or version-mismatched payloads.
        """
        r = Reader(data, SNAPSHOT_MAGIC, SNAPSHOT_VERSION)
        beta1, beta2, epsilon = r.f64(), r.f64(), r.f64()
        standardize = bool(r.u8())
        feature_scale = r.f64()
        has_fixed = bool(r.u8())
        fixed_value = r.f64()
        lbfgs = LbfgsConfig(
            learning_rate=r.f64(), max_iterations=r.u32(),
            tolerance=r.f64(), memory=r.u32(),
        )
        n, m = r.u32(), r.u32()
        t = r.u64()
        m_t, v_t = r.f64(), r.f64()
        w_flat = r.f64_array()
        seeds = r.f64_array()
        values = r.f64_array()
        r.done()

        if n == 0 and m == 0:
            if w_flat.size != 0:
                raise PayloadError("weights present but dims are unset")
            w_mat, dims = None, None
        else:
            if w_flat.size != n * m:
                raise PayloadError(
                    f"weight payload has {w_flat.size} entries, expected {n * m}"
                )
            w_mat, dims = w_flat.reshape(m, n), (n, m)

        state = RegBNState(
            w=w_mat,
            m_t=m_t,
            v_t=v_t,
            t=t,
            history=LambdaHistory(seeds=tuple(seeds), values=list(values)),
            dims=dims,
        )
        if config is None:
            config = RegBNConfig(
                beta1=beta1, beta2=beta2, epsilon=epsilon,
                seeds=tuple(seeds) if seeds.size else DEFAULT_SEEDS,
                lbfgs=lbfgs,
                standardize_inputs=standardize,
                feature_scale=feature_scale,
                fixed_lambda=fixed_value if has_fixed else None,
            )
        else:
            config = replace(config, seeds=tuple(seeds) if seeds.size else config.seeds)
        return cls(config=config, state=state)


def _standardize_columns(x: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    return (x - mu) / np.maximum(sd, eps)
