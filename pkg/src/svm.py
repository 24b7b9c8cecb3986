"""RBF soft-margin SVM trained by sequential minimal optimization, one-vs-one multi-class."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .corpus import Normalizer, fit_normalizer
from .settings import SvmSettings

logger = logging.getLogger(__name__)

# Curvature floor for degenerate working pairs
TAU = 1e-12


def rbf_kernel(a, b, gamma: float) -> float:
    """exp(-gamma * ||a - b||^2)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"Kernel arguments differ in shape: {a.shape} vs {b.shape}")
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    diff = a - b
    return float(np.exp(-gamma * np.dot(diff, diff)))


def gram_matrix(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    """Pairwise RBF kernel values between the rows of a and b."""
    sq = (
        np.sum(a * a, axis=1)[:, np.newaxis]
        + np.sum(b * b, axis=1)[np.newaxis, :]
        - 2.0 * a @ b.T
    )
    return np.exp(-gamma * np.maximum(sq, 0.0))


def default_gamma(x: np.ndarray) -> float:
    """1 / (feature_dim * mean feature variance), falling back to 1 / feature_dim for constant data."""
    variance = float(np.var(x))
    dim = x.shape[1]
    return 1.0 / (dim * variance) if variance > 0 else 1.0 / dim


@dataclass
class BinarySolution:
    """Dual solution of one binary subproblem."""

    alpha: np.ndarray
    bias: float
    iterations: int
    converged: bool
    gap: float


def dual_objective(alpha: np.ndarray, y: np.ndarray, kernel: np.ndarray) -> float:
    """0.5 * a^T Q a - sum(a), with Q_ij = y_i y_j K_ij."""
    ay = alpha * y
    return float(0.5 * ay @ kernel @ ay - alpha.sum())


def _bias(alpha: np.ndarray, y: np.ndarray, grad: np.ndarray, C: float) -> float:
    """Offset from free multipliers, or the midpoint of the feasible interval when none are free."""
    yg = y * grad
    upper = alpha >= C
    lower = alpha <= 0
    free = ~(upper | lower)
    if np.any(free):
        rho = float(np.mean(yg[free]))
    else:
        ub_mask = (upper & (y < 0)) | (lower & (y > 0))
        lb_mask = (upper & (y > 0)) | (lower & (y < 0))
        ub = float(np.min(yg[ub_mask])) if np.any(ub_mask) else np.inf
        lb = float(np.max(yg[lb_mask])) if np.any(lb_mask) else -np.inf
        rho = (ub + lb) / 2.0 if np.isfinite(ub) and np.isfinite(lb) else (ub if np.isfinite(ub) else lb)
    return -rho


def solve_binary(kernel: np.ndarray, y: np.ndarray, C: float, tol: float = 1e-3,
                 max_iter: int = 100_000) -> BinarySolution:
    """
    SMO on min 0.5 a^T Q a - e^T a  s.t.  0 <= a <= C, y^T a = 0.

    The working pair is the maximal KKT-violating pair; iteration stops when
    the violation gap drops below tol or max_iter is reached.
    """
    n = y.shape[0]
    y = y.astype(np.float64)
    alpha = np.zeros(n)
    grad = -np.ones(n)
    diag = np.diag(kernel)
    gap = np.inf
    iterations = 0

    while iterations < max_iter:
        yg = -y * grad
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        if not np.any(up) or not np.any(low):
            gap = 0.0
            break
        i = int(np.flatnonzero(up)[np.argmax(yg[up])])
        j = int(np.flatnonzero(low)[np.argmin(yg[low])])
        gap = yg[i] - yg[j]
        if gap < tol:
            break
        iterations += 1

        old_i, old_j = alpha[i], alpha[j]
        quad = max(diag[i] + diag[j] - 2.0 * kernel[i, j], TAU)
        if y[i] != y[j]:
            delta = (-grad[i] - grad[j]) / quad
            diff = old_i - old_j
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            elif alpha[i] < 0:
                alpha[i] = 0.0
                alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            elif alpha[j] > C:
                alpha[j] = C
                alpha[i] = C + diff
        else:
            delta = (grad[i] - grad[j]) / quad
            total = old_i + old_j
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
            elif alpha[j] < 0:
                alpha[j] = 0.0
                alpha[i] = total
            if total > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            elif alpha[i] < 0:
                alpha[i] = 0.0
                alpha[j] = total

        d_i = alpha[i] - old_i
        d_j = alpha[j] - old_j
        grad += y * (y[i] * kernel[:, i] * d_i + y[j] * kernel[:, j] * d_j)

    converged = gap < tol
    if not converged:
        logger.warning("SMO stopped after %d iterations with KKT gap %.3e (tol %.1e)", iterations, gap, tol)
    return BinarySolution(alpha, _bias(alpha, y, grad, C), iterations, converged, float(gap))


@dataclass
class BinaryMachine:
    """One one-vs-one machine: positive class index vs negative class index."""

    positive: int
    negative: int
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i
    bias: float

    def decision(self, kernel_rows: np.ndarray) -> np.ndarray:
        return kernel_rows @ self.dual_coef + self.bias


@dataclass
class SvmModel:
    """Pairwise machines over normalized features."""

    machines: list[BinaryMachine]
    gamma: float
    C: float
    class_names: tuple[str, ...]
    normalizer: Normalizer

    @property
    def feature_dim(self) -> int:
        return self.normalizer.dim


def train_svm(X, y, C: float = 1.0, gamma: float | None = None, tol: float = 1e-3,
              max_passes: int = 200, class_names: list[str] | None = None, workers: int = 1) -> SvmModel:
    """
    Train one-vs-one RBF machines.

    Args:
        X: Training rows (raw scale; normalized internally with training statistics)
        y: Class label per row
        C: Box constraint
        gamma: Kernel width; None picks the scale heuristic on normalized data
        tol: KKT violation tolerance
        max_passes: Iteration cap per machine, in multiples of its training size
        class_names: Class order for voting ties; defaults to first appearance
        workers: Threads for training pairwise machines

    Raises:
        ValueError: Fewer than two classes, label/row mismatch, or bad hyperparameters
    """
    x = np.array(X, dtype=np.float64, ndmin=2)
    labels = [str(label) for label in y]
    if x.shape[0] != len(labels):
        raise ValueError(f"{x.shape[0]} rows but {len(labels)} labels")
    names = tuple(class_names) if class_names else tuple(dict.fromkeys(labels))
    present = [c for c in names if c in set(labels)]
    unknown = set(labels) - set(names)
    if unknown:
        raise ValueError(f"Labels {sorted(unknown)} not in class list {list(names)}")
    if len(present) < 2:
        raise ValueError(f"Need at least two classes to train an SVM, got {present}")
    if C <= 0:
        raise ValueError(f"C must be positive, got {C}")

    normalizer = fit_normalizer(x)
    xn = normalizer.apply(x)
    gamma = default_gamma(xn) if gamma is None else gamma
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    label_index = np.array([names.index(label) for label in labels])
    pairs = list(combinations([names.index(c) for c in present], 2))

    def _fit(pair: tuple[int, int]) -> BinaryMachine:
        pos, neg = pair
        mask = (label_index == pos) | (label_index == neg)
        rows = xn[mask]
        signs = np.where(label_index[mask] == pos, 1.0, -1.0)
        kernel = gram_matrix(rows, rows, gamma)
        solution = solve_binary(kernel, signs, C, tol, max_iter=max_passes * max(len(rows), 1))
        support = solution.alpha > 0
        return BinaryMachine(pos, neg, rows[support], solution.alpha[support] * signs[support], solution.bias)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            machines = list(pool.map(_fit, pairs))
    else:
        machines = [_fit(pair) for pair in pairs]
    logger.debug("Trained %d pairwise machines on %d rows (gamma %.4g)", len(machines), x.shape[0], gamma)
    return SvmModel(machines, gamma, C, names, normalizer)


def svm_settings_kwargs(settings: SvmSettings) -> dict:
    """Keyword arguments of `train_svm` taken from the settings."""
    return {"C": settings.C, "gamma": settings.gamma, "tol": settings.tol, "max_passes": settings.max_passes}


def decision_values(model: SvmModel, X) -> np.ndarray:
    """Decision value of every pairwise machine (rows x machines); positive favours machine.positive."""
    x = np.asarray(X, dtype=np.float64)
    if x.size == 0:
        return np.zeros((0, len(model.machines)))
    if x.ndim == 1:
        x = x[np.newaxis, :]
    if x.shape[1] != model.feature_dim:
        raise ValueError(f"Input width {x.shape[1]} does not match SVM feature dim {model.feature_dim}")
    xn = model.normalizer.apply(x)
    out = np.zeros((xn.shape[0], len(model.machines)))
    for m, machine in enumerate(model.machines):
        out[:, m] = machine.decision(gram_matrix(xn, machine.support_vectors, model.gamma))
    return out


def predict(model: SvmModel, X) -> tuple[list[str], np.ndarray]:
    """
    One-vs-one majority vote.

    Returns:
        (labels, votes) where votes is (rows x classes); ties go to the class listed first
    """
    values = decision_values(model, X)
    votes = np.zeros((values.shape[0], len(model.class_names)), dtype=np.int64)
    for m, machine in enumerate(model.machines):
        winner = np.where(values[:, m] > 0, machine.positive, machine.negative)
        np.add.at(votes, (np.arange(values.shape[0]), winner), 1)
    return [model.class_names[k] for k in np.argmax(votes, axis=1)], votes
