"""Feature-corpus ingestion, persistence, normalization and the synthetic corpus generator."""

import logging
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import pandas as pd

from .settings import EMOTION_CLASSES, REFERENCE_CLASS_COUNTS, format_key_values, parse_key_values

logger = logging.getLogger(__name__)

META_COLUMNS = ["id", "session", "label"]

# Floor for per-dimension std so constant columns normalize to zero
STD_FLOOR = 1e-8


def feature_columns(feature_dim: int) -> list[str]:
    return [f"f{i}" for i in range(feature_dim)]


@dataclass(frozen=True, eq=False)
class FeatureCorpus:
    """
    Labeled, session-tagged fixed-length feature vectors.

    Stored column-wise: row i is (ids[i], sessions[i], labels[i], features[i]).
    Arrays are read-only after construction.
    """

    ids: tuple[str, ...]
    sessions: np.ndarray
    labels: tuple[str, ...]
    features: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        labels = tuple(str(label) for label in self.labels)
        class_names = tuple(str(c) for c in self.class_names)
        sessions = np.array(self.sessions, dtype=np.int64).reshape(-1)
        features = np.array(self.features, dtype=np.float64)
        if features.ndim == 1:
            features = features.reshape(len(ids), -1) if ids else features.reshape(0, 0)

        n = len(ids)
        if features.ndim != 2 or features.shape[0] != n:
            raise ValueError(f"Expected {n} feature rows, got array of shape {features.shape}")
        if len(labels) != n or sessions.shape[0] != n:
            raise ValueError(f"ids/labels/sessions lengths differ ({n}/{len(labels)}/{sessions.shape[0]})")
        if len(set(ids)) != n:
            raise ValueError("Corpus ids must be unique")
        if len(set(class_names)) != len(class_names):
            raise ValueError(f"Duplicate class names: {class_names}")
        unknown = sorted(set(labels) - set(class_names))
        if unknown:
            raise ValueError(f"Labels {unknown} are not in the class list {list(class_names)}")
        if n and sessions.min() < 1:
            raise ValueError("Session ids must be positive integers")
        if not np.all(np.isfinite(features)):
            raise ValueError("Feature values must be finite")

        for name, value in (("sessions", sessions), ("features", features)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_names", class_names)

    def __len__(self) -> int:
        return len(self.ids)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureCorpus):
            return NotImplemented
        return (
            self.ids == other.ids
            and self.labels == other.labels
            and self.class_names == other.class_names
            and np.array_equal(self.sessions, other.sessions)
            and self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
        )

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def session_ids(self) -> list[int]:
        return sorted(int(s) for s in np.unique(self.sessions))

    def label_indices(self) -> np.ndarray:
        """Index into class_names for every row."""
        lookup = {name: k for k, name in enumerate(self.class_names)}
        return np.array([lookup[label] for label in self.labels], dtype=np.int64)

    def class_counts(self) -> dict[str, int]:
        counts = {name: 0 for name in self.class_names}
        for label in self.labels:
            counts[label] += 1
        return counts

    def subset(self, mask: np.ndarray) -> "FeatureCorpus":
        """Rows selected by a boolean mask or index array, in original order."""
        index = np.flatnonzero(mask) if np.asarray(mask).dtype == bool else np.asarray(mask, dtype=np.int64)
        return FeatureCorpus(
            ids=tuple(self.ids[i] for i in index),
            sessions=self.sessions[index],
            labels=tuple(self.labels[i] for i in index),
            features=self.features[index].reshape(len(index), self.feature_dim),
            class_names=self.class_names,
        )

    def to_frame(self) -> pd.DataFrame:
        meta = pd.DataFrame({"id": list(self.ids), "session": self.sessions, "label": list(self.labels)})
        values = pd.DataFrame(self.features, columns=feature_columns(self.feature_dim))
        return pd.concat([meta, values], axis=1)


def _class_order(labels: list[str]) -> tuple[str, ...]:
    """Canonical emotion order when it applies, otherwise order of first appearance."""
    seen = list(dict.fromkeys(labels))
    if set(seen) <= set(EMOTION_CLASSES):
        return tuple(c for c in EMOTION_CLASSES if c in seen)
    return tuple(seen)


def load_corpus(path: str | Path, class_names: list[str] | None = None) -> FeatureCorpus:
    """
    Load a corpus CSV with header id,session,label,f0,...,f{d-1}.

    Args:
        path: CSV file path
        class_names: Explicit class list; derived from the labels if omitted

    Returns:
        The loaded FeatureCorpus

    Raises:
        FileNotFoundError: If the file does not exist
        ValueError: On a bad header, malformed row or non-finite value, naming the line
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Corpus file not found: {path}")
    try:
        df = pd.read_csv(
            path,
            dtype={"id": str, "label": str},
            float_precision="round_trip",
            keep_default_na=False,
            encoding="utf-8",
        )
    except pd.errors.ParserError as e:
        raise ValueError(f"{path}: malformed row: {e}") from None
    except pd.errors.EmptyDataError:
        raise ValueError(f"{path}: file is empty") from None

    # Normalize column names
    df.columns = df.columns.str.strip()
    columns = list(df.columns)
    feature_dim = len(columns) - len(META_COLUMNS)
    if columns[:3] != META_COLUMNS or feature_dim < 1 or columns[3:] != feature_columns(feature_dim):
        raise ValueError(f"{path}: header must be id,session,label,f0,...,f{{d-1}}; got {columns[:6]}...")

    features = np.column_stack([
        pd.to_numeric(df[c], errors="coerce").to_numpy(dtype=np.float64) for c in columns[3:]
    ]) if len(df) else np.zeros((0, feature_dim))
    sessions = pd.to_numeric(df["session"], errors="coerce").to_numpy(dtype=np.float64)

    for i in range(len(df)):
        line = i + 2  # header is line 1
        if not np.all(np.isfinite(features[i])):
            raise ValueError(f"{path}: line {line}: expected {feature_dim} finite feature values")
        if not np.isfinite(sessions[i]) or sessions[i] != int(sessions[i]) or sessions[i] < 1:
            raise ValueError(f"{path}: line {line}: session must be a positive integer")
        if not str(df["label"].iat[i]).strip():
            raise ValueError(f"{path}: line {line}: missing label")

    labels = [str(label).strip() for label in df["label"]]
    ids = [str(i).strip() for i in df["id"]]
    if len(set(ids)) != len(ids):
        duplicated = df.index[df["id"].duplicated()][0] + 2
        raise ValueError(f"{path}: line {duplicated}: duplicate id")
    return FeatureCorpus(
        ids=tuple(ids),
        sessions=sessions.astype(np.int64),
        labels=tuple(labels),
        features=features,
        class_names=tuple(class_names) if class_names else _class_order(labels),
    )


def save_corpus(corpus: FeatureCorpus, path: str | Path):
    """Write the corpus CSV; floats use 17 significant digits so reloads are bit-exact."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    corpus.to_frame().to_csv(path, index=False, float_format="%.17g", encoding="utf-8", lineterminator="\n")


def scaled_class_counts(total: int, class_names: list[str] | None = None) -> list[int]:
    """
    Scale the reference class ratios to a requested total.

    Uses largest-remainder rounding so the counts sum exactly to `total`;
    ties go to the class listed first.
    """
    names = list(class_names or EMOTION_CLASSES)
    missing = [c for c in names if c not in REFERENCE_CLASS_COUNTS]
    if missing:
        raise ValueError(f"No reference ratio for classes {missing}")
    raw = np.array([REFERENCE_CLASS_COUNTS[c] for c in names], dtype=np.float64)
    exact = total * raw / raw.sum()
    counts = np.floor(exact).astype(np.int64)
    remainder = exact - counts
    order = sorted(range(len(names)), key=lambda k: (-remainder[k], k))
    for k in order[: total - int(counts.sum())]:
        counts[k] += 1
    return [int(c) for c in counts]


@dataclass
class SynthCorpusSpec:
    """
    Recipe for a synthetic emobase-like corpus.

    Every class is a low-rank Gaussian: features = mixing_c @ latent +
    class_mean_c + session_shift + corpus_offset + noise. Class means and
    mixing matrices come from mixing_seed, so corpora generated with
    different seeds share the same classes.
    """

    feature_dim: int = 64
    class_names: list = field(default_factory=lambda: list(EMOTION_CLASSES))
    class_counts: list = field(default_factory=lambda: scaled_class_counts(800))
    sessions: int = 5
    latent_dim: int = 4
    mixing_seed: int = 1234
    class_spread: float = 0.35
    lowrank_scale: float = 1.0
    noise_scale: float = 0.5
    session_shift_scale: float = 0.3
    corpus_shift: float = 0.0  # per-dim std of one offset shared by the whole corpus
    id_prefix: str = "utt"

    def __post_init__(self):
        self.class_names = [str(c) for c in self.class_names]
        self.class_counts = [int(c) for c in self.class_counts]
        if self.feature_dim < 1 or self.latent_dim < 1 or self.sessions < 1:
            raise ValueError("feature_dim, latent_dim and sessions must be positive")
        if len(self.class_names) != len(self.class_counts):
            raise ValueError(
                f"{len(self.class_names)} class names but {len(self.class_counts)} class counts"
            )
        if len(self.class_names) < 2 or len(set(self.class_names)) != len(self.class_names):
            raise ValueError(f"Need at least two distinct classes, got {self.class_names}")
        if any(c < 1 for c in self.class_counts):
            raise ValueError(f"Class counts must be at least 1, got {self.class_counts}")
        if self.noise_scale <= 0:
            raise ValueError(f"noise_scale must be positive, got {self.noise_scale}")
        if min(self.class_spread, self.lowrank_scale, self.session_shift_scale, self.corpus_shift) < 0:
            raise ValueError("Scale parameters must be non-negative")

    @property
    def total(self) -> int:
        return sum(self.class_counts)

    @classmethod
    def balanced(cls, per_class: int = 200, **kwargs) -> "SynthCorpusSpec":
        """Equal class counts (the desk-scale corpus used by the experiment suites)."""
        names = kwargs.pop("class_names", list(EMOTION_CLASSES))
        return cls(class_names=names, class_counts=[per_class] * len(names), **kwargs)

    @classmethod
    def emobase_scale(cls, total: int = 400, **kwargs) -> "SynthCorpusSpec":
        """1582-dimensional corpus for dimensionality-stress runs."""
        return cls(feature_dim=1582, class_counts=scaled_class_counts(total), **kwargs)

    def to_text(self) -> str:
        values = {}
        for f in fields(self):
            value = getattr(self, f.name)
            values[f.name] = ",".join(str(v) for v in value) if isinstance(value, list) else value
        return format_key_values(values)

    @classmethod
    def from_text(cls, text: str, source: str = "<spec>") -> "SynthCorpusSpec":
        raw = parse_key_values(text, source)
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in raw.items():
            if key not in known:
                raise ValueError(f"{source}: unknown spec key '{key}'")
            default = getattr(cls(), key)
            try:
                if key == "class_names":
                    kwargs[key] = [v.strip() for v in value.split(",")]
                elif key == "class_counts":
                    kwargs[key] = [int(v) for v in value.split(",")]
                elif isinstance(default, int):
                    kwargs[key] = int(value)
                elif isinstance(default, float):
                    kwargs[key] = float(value)
                else:
                    kwargs[key] = value
            except ValueError:
                raise ValueError(f"{source}: cannot parse value '{value}' for '{key}'") from None
        if "class_names" in kwargs and "class_counts" not in kwargs:
            kwargs["class_counts"] = scaled_class_counts(800, kwargs["class_names"])
        return cls(**kwargs)


def load_spec(path: str | Path) -> SynthCorpusSpec:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Spec file not found: {path}")
    return SynthCorpusSpec.from_text(path.read_text(encoding="utf-8"), str(path))


def generate_synth_corpus(spec: SynthCorpusSpec, seed: int) -> FeatureCorpus:
    """
    Generate a corpus; a pure function of (spec, seed).

    Rows are grouped by class; within a class, sessions are assigned
    round-robin so every class is spread evenly over the sessions.
    """
    n_classes = len(spec.class_names)
    recipe = np.random.default_rng(spec.mixing_seed)
    class_means = recipe.normal(0.0, spec.class_spread, size=(n_classes, spec.feature_dim))
    mixing = recipe.normal(0.0, spec.lowrank_scale / np.sqrt(spec.latent_dim),
                           size=(n_classes, spec.feature_dim, spec.latent_dim))

    rng = np.random.default_rng(seed)
    session_shift = rng.normal(0.0, spec.session_shift_scale, size=(spec.sessions, spec.feature_dim))
    offset = rng.normal(0.0, spec.corpus_shift, size=spec.feature_dim)

    ids, sessions, labels, blocks = [], [], [], []
    for c, (name, count) in enumerate(zip(spec.class_names, spec.class_counts)):
        latent = rng.standard_normal((count, spec.latent_dim))
        row_sessions = 1 + np.arange(count) % spec.sessions
        noise = rng.normal(0.0, spec.noise_scale, size=(count, spec.feature_dim))
        blocks.append(latent @ mixing[c].T + class_means[c] + session_shift[row_sessions - 1] + offset + noise)
        ids.extend(f"{spec.id_prefix}_{name}_{i:05d}" for i in range(count))
        sessions.append(row_sessions)
        labels.extend([name] * count)

    logger.info("Generated synthetic corpus: %d rows, %d dims, seed %d", spec.total, spec.feature_dim, seed)
    return FeatureCorpus(
        ids=tuple(ids),
        sessions=np.concatenate(sessions),
        labels=tuple(labels),
        features=np.vstack(blocks),
        class_names=tuple(spec.class_names),
    )


@dataclass(frozen=True, eq=False)
class Normalizer:
    """Per-dimension mean/std from training data."""

    mean: np.ndarray
    std: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def apply(self, matrix: np.ndarray) -> np.ndarray:
        x = np.asarray(matrix, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise ValueError(f"Matrix width {x.shape[-1]} does not match normalizer dim {self.dim}")
        return (x - self.mean) / self.std

    def invert(self, matrix: np.ndarray) -> np.ndarray:
        x = np.asarray(matrix, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise ValueError(f"Matrix width {x.shape[-1]} does not match normalizer dim {self.dim}")
        return x * self.std + self.mean


def fit_normalizer(data) -> Normalizer:
    """
    Fit per-dimension statistics on a corpus or matrix.

    Constant columns keep their exact value as mean and a std of STD_FLOOR,
    so they normalize to exact zeros.
    """
    x = data.features if isinstance(data, FeatureCorpus) else np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("Cannot fit a normalizer on an empty corpus")
    constant = np.all(x == x[0], axis=0)
    mean = np.where(constant, x[0], x.mean(axis=0))
    std = np.maximum(x.std(axis=0), STD_FLOOR)
    std = np.where(constant, STD_FLOOR, std)
    return Normalizer(mean, std)


def apply_normalizer(stats: Normalizer, matrix: np.ndarray) -> np.ndarray:
    return stats.apply(matrix)


def split_by_session(corpus: FeatureCorpus, held_out_session: int) -> tuple[FeatureCorpus, FeatureCorpus]:
    """
    Leave-one-session-out split.

    Returns:
        (train corpus, test corpus), each keeping the original row order

    Raises:
        ValueError: If the session does not occur in the corpus
    """
    if held_out_session not in corpus.session_ids:
        raise ValueError(f"Unknown session {held_out_session} (corpus sessions: {corpus.session_ids})")
    test_mask = corpus.sessions == held_out_session
    return corpus.subset(~test_mask), corpus.subset(test_mask)
