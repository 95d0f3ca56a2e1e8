"""Per-batch estimation of the regularization strength lambda.

The projection weights W(lambda) shrink monotonically with lambda; the
solver looks for the lambda > 0 at which ||W(lambda)||_F hits 1 by
minimizing the squared residual (||W(lambda)||_F - 1)^2 with L-BFGS.
Because the residual landscape depends on the batch, each batch restarts
the search from a fixed seed set plus the median of previously accepted
values, and keeps the restart with the lowest final loss.

With g = U diag(sigma) Vt, the norm reduces to

    ||W(lambda)||_F^2 = sum_i (sigma_i / (sigma_i^2 + lambda))^2 * ||u_i^T f||^2

so the objective only needs the singular values of g and the row
energies of f in the left singular basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lbfgs import minimize
from .linalg import SvdFactors

LAMBDA_MIN = 1e-8
LAMBDA_MAX = 1e12
DEFAULT_SEEDS = (1.0, 100.0, 1000.0)


@dataclass(frozen=True)
class LbfgsConfig:
    """L-BFGS settings for the scalar search."""

    learning_rate: float = 1.0
    max_iterations: int = 25
    tolerance: float = 1e-5
    memory: int = 10

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")


@dataclass(frozen=True)
class LambdaObjective:
    """Batch-reduced data the norm objective depends on.

    sigma: singular values of the conditioning modality g.
    uf_norms: per-direction energies ||u_i^T f||_2 of the normalized
        modality f in g's left singular basis; same length as sigma.
    """

    sigma: np.ndarray
    uf_norms: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "sigma", np.asarray(self.sigma, dtype=np.float64))
        object.__setattr__(self, "uf_norms", np.asarray(self.uf_norms, dtype=np.float64))
        if self.sigma.shape != self.uf_norms.shape or self.sigma.ndim != 1:
            raise ValueError("sigma and uf_norms must be 1-D and equal length")

    @classmethod
    def from_factors(cls, svd_g: SvdFactors, f: np.ndarray) -> "LambdaObjective":
        uf = svd_g.u.T @ np.asarray(f, dtype=np.float64)
        return cls(sigma=svd_g.sigma, uf_norms=np.sqrt(np.sum(uf**2, axis=1)))

    @property
    def degenerate(self) -> bool:
        """True when g carries no energy at all (zero spectrum)."""
        return bool(np.all(self.sigma == 0.0))


def objective_norm(obj: LambdaObjective, lam: float) -> float:
    """||W(lambda)||_F. Zero-sigma directions contribute nothing."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    sig = obj.sigma
    denom = sig**2 + lam
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(denom > 0.0, sig / denom, 0.0)
    return float(np.sqrt(np.sum((ratio * obj.uf_norms) ** 2)))


def norm_gradient(obj: LambdaObjective, lam: float) -> float:
    """d/d lambda of ||W(lambda)||_F.

    Uses d/d lambda ||W||_F^2 = -2 sum_i sigma_i^2 ||u_i^T f||^2 / (sigma_i^2 + lambda)^3
    and the chain rule through the square root.
    """
    norm = objective_norm(obj, lam)
    if norm == 0.0:
        return 0.0
    sig = obj.sigma
    denom = sig**2 + lam
    with np.errstate(invalid="ignore", divide="ignore"):
        terms = np.where(denom > 0.0, (sig * obj.uf_norms) ** 2 / denom**3, 0.0)
    d_sq = -2.0 * float(np.sum(terms))  # d ||W||_F^2 / d lambda
    return d_sq / (2.0 * norm)


def objective_gradient(obj: LambdaObjective, lam: float) -> float:
    """d/d lambda of the solver loss (||W(lambda)||_F - 1)^2."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    norm = objective_norm(obj, lam)
    if norm == 0.0:
        return 0.0
    return 2.0 * (norm - 1.0) * norm_gradient(obj, lam)


def solver_loss(obj: LambdaObjective, lam: float) -> float:
    return (objective_norm(obj, lam) - 1.0) ** 2


@dataclass
class LambdaHistory:
    """Fixed restart seeds plus the growing record of accepted values.

    The median of the record seeds the next batch's search, so the search
    warm-starts near where recent batches landed. Single-writer: exactly
    one training loop may append.
    """

    seeds: tuple[float, ...] = DEFAULT_SEEDS
    values: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        if any(s <= 0 for s in self.seeds):
            raise ValueError("all seeds must be positive")

    def append(self, lambda_hat: float) -> None:
        if not lambda_hat > 0:
            raise ValueError(f"lambda must be positive, got {lambda_hat}")
        self.values.append(float(lambda_hat))

    def median(self) -> float:
        """Median of accepted values; even counts average the middle pair."""
        if not self.values:
            raise ValueError("history is empty")
        return float(np.median(self.values))

    def restart_points(self) -> list[float]:
        """Seed set for the next search: fixed seeds, plus the running
        median once at least one batch has been accepted."""
        pts = list(self.seeds)
        if self.values:
            pts.append(self.median())
        return pts

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class LambdaSolution:
    lambda_hat: float
    loss: float
    degenerate: bool = False
    seed_losses: tuple[float, ...] = ()


def solve_lambda(
    obj: LambdaObjective,
    history: LambdaHistory,
    cfg: LbfgsConfig = LbfgsConfig(),
) -> LambdaSolution:
    """Multi-restart search for the norm-1 regularization strength.

    Optimizes theta = log(lambda) so positivity is structural, projecting
    onto [log LAMBDA_MIN, log LAMBDA_MAX]. Returns the restart with the
    lowest final loss; ties go to the smaller lambda (less shrinkage).

    A zero-spectrum batch (g identically zero) makes the projection zero
    for every lambda; the search is skipped and the history median (or
    1.0 with no history) is returned with ``degenerate=True``.

    When the constraint is attainable (||W(LAMBDA_MIN)||_F > 1), the
    winner is polished with safeguarded Newton steps on the root equation
    ||W(lambda)||_F = 1: the squared-residual loss goes flat near the
    root on shallow spectra, so the descent's first-order tolerance alone
    does not pin lambda tightly enough.
    """
    if obj.degenerate:
        fallback = history.median() if len(history) else 1.0
        return LambdaSolution(lambda_hat=fallback, loss=1.0, degenerate=True)

    lo = np.array([np.log(LAMBDA_MIN)])
    hi = np.array([np.log(LAMBDA_MAX)])

    def fun_grad(theta: np.ndarray) -> tuple[float, np.ndarray]:
        lam = float(np.clip(np.exp(theta[0]), LAMBDA_MIN, LAMBDA_MAX))
        loss = solver_loss(obj, lam)
        # d loss / d theta = d loss / d lambda * lambda
        grad = objective_gradient(obj, lam) * lam
        return loss, np.array([grad])

    best_lam = None
    best_loss = np.inf
    seed_losses = []
    for seed in history.restart_points():
        theta0 = np.array([np.log(np.clip(seed, LAMBDA_MIN, LAMBDA_MAX))])
        res = minimize(
            fun_grad,
            theta0,
            step_size=cfg.learning_rate,
            max_iterations=cfg.max_iterations,
            tolerance=cfg.tolerance,
            memory=cfg.memory,
            bounds=(lo, hi),
        )
        lam = float(np.clip(np.exp(res.x[0]), LAMBDA_MIN, LAMBDA_MAX))
        loss = float(res.fun)
        seed_losses.append(loss)
        if loss < best_loss or (loss == best_loss and (best_lam is None or lam < best_lam)):
            best_lam, best_loss = lam, loss

    if objective_norm(obj, LAMBDA_MIN) > 1.0:
        best_lam = _polish_root(obj, best_lam)
        best_loss = min(best_loss, solver_loss(obj, best_lam))
    else:
        # No root: the norm stays below 1 everywhere, the loss is strictly
        # increasing in lambda, so the lower boundary is the exact minimizer
        # and the descents can only have stalled short of it.
        boundary_loss = solver_loss(obj, LAMBDA_MIN)
        if boundary_loss <= best_loss:
            best_lam, best_loss = LAMBDA_MIN, boundary_loss

    return LambdaSolution(
        lambda_hat=best_lam, loss=best_loss, seed_losses=tuple(seed_losses)
    )


def _polish_root(obj: LambdaObjective, lam: float, max_steps: int = 12) -> float:
    """Newton iteration on ||W(lambda)||_F - 1 = 0 in log space.

    Only valid when a root exists (the norm is monotone decreasing, so it
    is then unique). Steps that do not shrink the residual are rejected.
    """
    theta = np.log(lam)
    r = objective_norm(obj, lam) - 1.0
    for _ in range(max_steps):
        if abs(r) <= 1e-13:
            break
        slope = norm_gradient(obj, lam) * lam  # d residual / d theta
        if slope == 0.0:
            break
        theta_new = float(np.clip(theta - r / slope, np.log(LAMBDA_MIN), np.log(LAMBDA_MAX)))
        lam_new = float(np.clip(np.exp(theta_new), LAMBDA_MIN, LAMBDA_MAX))
        r_new = objective_norm(obj, lam_new) - 1.0
        if abs(r_new) >= abs(r):
            break
        theta, lam, r = theta_new, lam_new, r_new
    return lam
