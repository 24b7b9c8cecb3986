"""Gaussian-mixture latent priors: sampling, responsibilities and class assignment."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .settings import EMOTION_CLASSES, format_key_values, parse_key_values

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class GmmComponent:
    """One diagonal Gaussian of a mixture."""

    mean: np.ndarray
    covariance: np.ndarray  # diagonal entries
    weight: float


@dataclass(frozen=True, eq=False)
class GmmPrior:
    """
    A K-component diagonal-covariance Gaussian mixture, one component per class.

    Weights are renormalized at construction. Arrays are read-only so a
    prior can be shared freely between threads.
    """

    means: np.ndarray
    covariances: np.ndarray
    weights: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self):
        means = np.array(self.means, dtype=np.float64, ndmin=2)
        covs = np.array(self.covariances, dtype=np.float64, ndmin=2)
        weights = np.array(self.weights, dtype=np.float64).reshape(-1)
        names = tuple(str(c) for c in self.class_names)

        if means.shape != covs.shape:
            raise ValueError(f"means shape {means.shape} does not match covariances {covs.shape}")
        if weights.shape != (means.shape[0],):
            raise ValueError(f"Expected {means.shape[0]} weights, got {weights.size}")
        if len(names) != means.shape[0]:
            raise ValueError(f"Expected {means.shape[0]} class names, got {len(names)}")
        if len(set(names)) != len(names):
            raise ValueError(f"Class names must be distinct: {names}")
        if not np.all(np.isfinite(means)):
            raise ValueError("Component means must be finite")
        if not np.all(covs > 0) or not np.all(np.isfinite(covs)):
            raise ValueError("Covariance entries must be finite and positive")
        if not np.all(weights > 0) or not np.all(np.isfinite(weights)):
            raise ValueError("Mixture weights must be finite and positive")
        total = weights.sum()
        if abs(total - 1.0) > 1e-12:
            weights = weights / total

        for name, value in (("means", means), ("covariances", covs), ("weights", weights)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "class_names", names)

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def components(self) -> list[GmmComponent]:
        return [GmmComponent(m, c, float(w)) for m, c, w in zip(self.means, self.covariances, self.weights)]

    def class_index(self, class_name: str) -> int:
        if class_name not in self.class_names:
            raise ValueError(f"Unknown class '{class_name}' (prior classes: {list(self.class_names)})")
        return self.class_names.index(class_name)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GmmPrior):
            return NotImplemented
        return (
            self.class_names == other.class_names
            and np.array_equal(self.means, other.means)
            and np.array_equal(self.covariances, other.covariances)
            and np.array_equal(self.weights, other.weights)
        )


def default_prior(class_names: list[str] | None = None, radius: float = 4.0, sigma: float = 0.5) -> GmmPrior:
    """
    Equal-weight 2-D prior with means evenly spaced on a circle.

    With 4 classes, radius 4 and sigma 0.5 adjacent means are about 11 sigma
    apart, so highest-membership labelling is near-unambiguous.
    """
    names = list(class_names or EMOTION_CLASSES)
    angles = 2.0 * np.pi * np.arange(len(names)) / len(names)
    means = radius * np.column_stack([np.cos(angles), np.sin(angles)])
    covs = np.full_like(means, sigma * sigma)
    return GmmPrior(means, covs, np.ones(len(names)), tuple(names))


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def sample_components(prior: GmmPrior, components: np.ndarray, seed) -> np.ndarray:
    """Draw one point from each listed component index."""
    components = np.asarray(components, dtype=np.int64)
    if components.size and (components.min() < 0 or components.max() >= prior.n_components):
        raise ValueError(f"Component index out of range [0, {prior.n_components})")
    rng = _rng(seed)
    noise = rng.standard_normal((components.size, prior.dim))
    return prior.means[components] + noise * np.sqrt(prior.covariances[components])


def sample(prior: GmmPrior, n: int, seed, component: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """
    Draw n latent points.

    Args:
        prior: Mixture to sample
        n: Number of points (>= 1)
        seed: Integer seed or a numpy Generator
        component: Force every point to come from this component

    Returns:
        (points of shape (n, dim), component index per point)
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    rng = _rng(seed)
    if component is None:
        indices = rng.choice(prior.n_components, size=n, p=prior.weights)
    else:
        if not 0 <= component < prior.n_components:
            raise ValueError(f"Component {component} out of range [0, {prior.n_components})")
        indices = np.full(n, component, dtype=np.int64)
    return sample_components(prior, indices, rng), indices


def log_joint(prior: GmmPrior, points: np.ndarray) -> np.ndarray:
    """log(weight_k) + log N(x; mean_k, diag cov_k) for every point and component."""
    x = np.array(points, dtype=np.float64, ndmin=2)
    if x.shape[1] != prior.dim:
        raise ValueError(f"Point dimension {x.shape[1]} does not match prior dimension {prior.dim}")
    diff = x[:, np.newaxis, :] - prior.means[np.newaxis, :, :]
    mahalanobis = np.sum(diff * diff / prior.covariances[np.newaxis], axis=2)
    log_norm = np.sum(np.log(prior.covariances), axis=1) + prior.dim * LOG_2PI
    return np.log(prior.weights)[np.newaxis] - 0.5 * (mahalanobis + log_norm[np.newaxis])


def responsibility_matrix(prior: GmmPrior, points: np.ndarray) -> np.ndarray:
    """Posterior component probabilities per row, computed in log space."""
    logp = log_joint(prior, points)
    logp -= logp.max(axis=1, keepdims=True)
    probs = np.exp(logp)
    return probs / probs.sum(axis=1, keepdims=True)


def responsibilities(prior: GmmPrior, point: np.ndarray) -> np.ndarray:
    """Posterior probability of each component for a single point."""
    point = np.asarray(point, dtype=np.float64)
    if point.ndim != 1:
        raise ValueError(f"Expected a single point, got shape {point.shape}")
    return responsibility_matrix(prior, point)[0]


def assign_indices(prior: GmmPrior, points: np.ndarray) -> np.ndarray:
    """Index of the highest-membership component; ties go to the lowest index."""
    return np.argmax(log_joint(prior, points), axis=1)


def assign_class(prior: GmmPrior, points: np.ndarray) -> list[str]:
    """Class name of the highest-membership component for every point."""
    return [prior.class_names[k] for k in assign_indices(prior, points)]


def _join(values) -> str:
    return ",".join(format(float(v), ".17g") for v in values)


def _split_floats(raw: str) -> list[float]:
    return [float(v) for v in raw.split(",")]


def prior_to_text(prior: GmmPrior) -> str:
    """Flat key-value rendering; every float uses 17 significant digits."""
    values = {"dimension": prior.dim, "components": prior.n_components}
    for k, (name, component) in enumerate(zip(prior.class_names, prior.components)):
        values[f"component.{k}.class"] = name
        values[f"component.{k}.weight"] = format(component.weight, ".17g")
        values[f"component.{k}.mean"] = _join(component.mean)
        values[f"component.{k}.cov"] = _join(component.covariance)
    return format_key_values(values)


def prior_from_text(text: str, source: str = "<prior>") -> GmmPrior:
    """Parse the output of prior_to_text."""
    values = parse_key_values(text, source)
    try:
        dim = int(values["dimension"])
        count = int(values["components"])
        names, weights, means, covs = [], [], [], []
        for k in range(count):
            names.append(values[f"component.{k}.class"])
            weights.append(float(values[f"component.{k}.weight"]))
            means.append(_split_floats(values[f"component.{k}.mean"]))
            covs.append(_split_floats(values[f"component.{k}.cov"]))
    except KeyError as missing:
        raise ValueError(f"{source}: missing key {missing}") from None
    prior = GmmPrior(np.array(means), np.array(covs), np.array(weights), tuple(names))
    if prior.dim != dim:
        raise ValueError(f"{source}: declared dimension {dim}, components have {prior.dim}")
    return prior


def save_prior(prior: GmmPrior, path: str | Path):
    Path(path).write_text(prior_to_text(prior), encoding="utf-8")


def load_prior(path: str | Path) -> GmmPrior:
    path = Path(path)
    return prior_from_text(path.read_text(encoding="utf-8"), str(path))
