"""UAR metrics and the scenario harnesses behind the three table analogs."""

import logging
import threading
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .aae import AaeModel, decoder_weights, encode, train_aae
from .corpus import FeatureCorpus, split_by_session
from .gan import (
    GanModel,
    LossHistory,
    generate,
    generate_balanced,
    label_codes,
    train_conditional_gan,
    train_vanilla_gan,
)
from .gmm import default_prior
from .settings import DEFAULT_SETTINGS, ExperimentSettings
from .svm import SvmModel, predict, svm_settings_kwargs, train_svm

logger = logging.getLogger(__name__)

TABLE1_SCENARIOS = (
    "synthetic-2d-only",
    "real-2d-only",
    "real-2d+synthetic",
    "synthetic-cond-only",
    "real-only",
    "real+cond-baseline",
    "real+cond-improved",
)
TABLE2_SCENARIOS = ("vanilla-2d", "cond-improved")
TABLE3_SCENARIOS = TABLE1_SCENARIOS
TABLES = {"table1": TABLE1_SCENARIOS, "table2": TABLE2_SCENARIOS, "table3": TABLE3_SCENARIOS}

CODE_SCENARIOS = ("synthetic-2d-only", "real-2d-only", "real-2d+synthetic")
SYNTHETIC_ONLY = ("synthetic-2d-only", "synthetic-cond-only")
REAL_ONLY = ("real-2d-only", "real-only")

# Independent seed streams per fitted component
AAE_STREAM = 1
GAN_STREAMS = {"vanilla": 2, "baseline": 3, "improved": 4}
GENERATION_STREAM = 10


@dataclass
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    class_names: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self):
        self.class_names = tuple(self.class_names)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        k = len(self.class_names)
        if self.counts.shape != (k, k):
            raise ValueError(f"Counts shape {self.counts.shape} does not match {k} classes")
        if np.any(self.counts < 0):
            raise ValueError("Confusion counts must be non-negative")

    @classmethod
    def from_labels(cls, class_names, true_labels, predicted_labels) -> "ConfusionMatrix":
        names = tuple(class_names)
        index = {name: k for k, name in enumerate(names)}
        counts = np.zeros((len(names), len(names)), dtype=np.int64)
        for truth, guess in zip(true_labels, predicted_labels, strict=True):
            counts[index[truth], index[guess]] += 1
        return cls(names, counts)

    @property
    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)


def uar(cm: ConfusionMatrix, skip_empty: bool = False) -> float:
    """
    Unweighted average recall, as a percentage.

    Args:
        cm: Confusion matrix
        skip_empty: Average only over classes that have test rows

    Raises:
        ValueError: If a class has no rows (and skip_empty is False) or no class has rows
    """
    rows = cm.row_sums
    keep = rows > 0
    if not skip_empty and not np.all(keep):
        missing = [name for name, ok in zip(cm.class_names, keep) if not ok]
        raise ValueError(f"Recall is undefined for classes with no test rows: {missing}")
    if not np.any(keep):
        raise ValueError("Confusion matrix has no rows")
    recalls = np.diag(cm.counts)[keep] / rows[keep]
    return float(100.0 * np.mean(recalls))


def chance_uar(class_count: int) -> float:
    """UAR of a uniform random guesser."""
    if class_count < 1:
        raise ValueError(f"class_count must be positive, got {class_count}")
    return 100.0 / class_count


@dataclass
class FoldResult:
    fold: int
    held_out: str
    confusion: ConfusionMatrix
    uar: float
    train_rows: int
    synthetic_rows: int


@dataclass
class ExperimentReport:
    """Per-fold results of one scenario plus the settings that produced them."""

    scenario: str
    folds: list[FoldResult]
    config: dict[str, str] = field(default_factory=dict)
    validation_histories: dict[str, LossHistory] = field(default_factory=dict)

    @property
    def mean_uar(self) -> float:
        return float(np.mean([f.uar for f in self.folds]))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(self.scenario, f.fold, f.held_out, f.uar, f.train_rows, f.synthetic_rows) for f in self.folds],
            columns=["scenario", "fold", "held_out", "uar", "train_rows", "synthetic_rows"],
        )

    def confusion_frame(self) -> pd.DataFrame:
        rows = []
        for f in self.folds:
            for i, truth in enumerate(f.confusion.class_names):
                for j, guess in enumerate(f.confusion.class_names):
                    rows.append((self.scenario, f.fold, truth, guess, int(f.confusion.counts[i, j])))
        return pd.DataFrame(rows, columns=["scenario", "fold", "true", "predicted", "count"])


class DataAccessAudit:
    """Records which real rows, and how many generated rows, each fitting stage of each fold saw."""

    def __init__(self):
        self._lock = threading.Lock()
        self.entries: list[tuple[int, str, frozenset[str], frozenset[int], int]] = []

    def record(self, fold: int, stage: str, corpus: FeatureCorpus | None, synthetic_rows: int = 0):
        ids = frozenset(corpus.ids) if corpus is not None else frozenset()
        sessions = frozenset(int(s) for s in corpus.sessions) if corpus is not None else frozenset()
        with self._lock:
            self.entries.append((fold, stage, ids, sessions, synthetic_rows))

    def stages(self, fold: int) -> set[str]:
        return {entry[1] for entry in self.entries if entry[0] == fold}

    def sessions_seen(self, fold: int) -> set[int]:
        return set().union(*(entry[3] for entry in self.entries if entry[0] == fold))

    def ids_seen(self, fold: int) -> set[str]:
        return set().union(*(entry[2] for entry in self.entries if entry[0] == fold))

    def synthetic_rows(self, fold: int, stage: str) -> int:
        return sum(entry[4] for entry in self.entries if entry[0] == fold and entry[1] == stage)


def fold_seed(master_seed: int, fold: int, *streams: int) -> int:
    """Deterministic 32-bit seed for a fold (and optional component stream)."""
    return int(np.random.SeedSequence([master_seed, fold, *streams]).generate_state(1)[0])


def _scenario_stream(scenario: str) -> int:
    return zlib.crc32(scenario.encode("utf-8"))


def config_echo(settings: ExperimentSettings) -> dict[str, str]:
    """Flat dotted-key rendering of the settings."""
    flat = {}

    def _walk(prefix: str, value):
        if isinstance(value, dict):
            for key, inner in value.items():
                _walk(f"{prefix}.{key}" if prefix else key, inner)
        else:
            flat[prefix] = str(value)

    _walk("", asdict(settings))
    return flat


class FoldPipeline:
    """
    Trained artifacts for one fold, built on first use and reused by every
    scenario evaluated on the fold.
    """

    def __init__(self, fold: int, train: FeatureCorpus, settings: ExperimentSettings,
                 audit: DataAccessAudit | None = None, validation: FeatureCorpus | None = None):
        self.fold = fold
        self.train = train
        self.settings = settings
        self.audit = audit
        self.validation = validation
        self.prior = default_prior(list(train.class_names))
        self.histories: dict[str, LossHistory] = {}
        self._aae: AaeModel | None = None
        self._codes: np.ndarray | None = None
        self._gans: dict[str, GanModel] = {}

    def _record(self, stage: str, corpus: FeatureCorpus | None, synthetic_rows: int = 0):
        if self.audit is not None:
            self.audit.record(self.fold, stage, corpus, synthetic_rows)

    def seed(self, *streams: int) -> int:
        return fold_seed(self.settings.master_seed, self.fold, *streams)

    def aae(self) -> AaeModel:
        if self._aae is None:
            rows = self.train
            self._record("aae", rows)
            self._aae, history = train_aae(rows, self.prior, self.settings.aae, self.seed(AAE_STREAM))
            logger.info("Fold %d: AAE final reconstruction loss %.4f", self.fold, history.final_reconstruction_loss)
        return self._aae

    def train_codes(self) -> np.ndarray:
        if self._codes is None:
            self._codes = encode(self.aae(), self.train.features)
        return self._codes

    def vanilla(self) -> GanModel:
        if "vanilla" not in self._gans:
            rows = self.train
            val = None if self.validation is None else encode(self.aae(), self.validation.features)
            self._record("gan-vanilla", rows)
            model, history = train_vanilla_gan(self.train_codes(), val, self.settings.vanilla,
                                               self.seed(GAN_STREAMS["vanilla"]), code_prior=self.prior)
            self._gans["vanilla"] = model
            self.histories["vanilla"] = history
        return self._gans["vanilla"]

    def conditional(self, kind: str) -> GanModel:
        if kind not in self._gans:
            rows = self.train
            schedule = self.settings.baseline if kind == "baseline" else self.settings.improved
            decoder = decoder_weights(self.aae()) if schedule.init == "from_decoder" else None
            self._record(f"gan-{kind}", rows)
            model, history = train_conditional_gan(rows, self.validation, self.prior, schedule,
                                                   decoder, self.seed(GAN_STREAMS[kind]))
            self._gans[kind] = model
            self.histories[kind] = history
        return self._gans[kind]

    def _svm_rows(self, real: FeatureCorpus | None, synthetic: tuple[np.ndarray, list[str]] | None,
                  code_space: bool) -> tuple[np.ndarray, list[str]]:
        blocks, labels = [], []
        if real is not None:
            if code_space:
                blocks.append(self.train_codes() if real is self.train else encode(self.aae(), real.features))
            else:
                blocks.append(real.features)
            labels.extend(real.labels)
        if synthetic is not None:
            blocks.append(synthetic[0])
            labels.extend(synthetic[1])
        if not blocks:
            raise ValueError("SVM stage needs real or generated rows")
        return np.vstack(blocks), labels

    def fit_svm(self, real: FeatureCorpus | None, synthetic: tuple[np.ndarray, list[str]] | None = None,
                code_space: bool = False) -> SvmModel:
        """
        Fit the fold SVM on real rows followed by generated rows.

        Args:
            real: Real rows to fit on, or None for a generated-only training set
            synthetic: Generated (features, labels), if any
            code_space: Fit on the 2-D AAE codes of the real rows instead of their features
        """
        x, y = self._svm_rows(real, synthetic, code_space)
        self._record("svm", real, 0 if synthetic is None else len(synthetic[1]))
        return train_svm(x, y, class_names=list(self.train.class_names), **svm_settings_kwargs(self.settings.svm))

    def classify(self, scenario: str, test_x: np.ndarray, real: FeatureCorpus | None,
                 synthetic: tuple[np.ndarray, list[str]] | None = None, code_space: bool = False) -> list[str]:
        """SVM predictions; a training set holding a single class predicts that class everywhere."""
        labels = (list(real.labels) if real is not None else []) + (list(synthetic[1]) if synthetic else [])
        if len(set(labels)) == 1:
            self._record("svm", real, 0 if synthetic is None else len(synthetic[1]))
            logger.warning("Fold %d, %s: training set holds only %s; predicting it for every row",
                           self.fold, scenario, labels[0])
            return [labels[0]] * len(test_x)
        predicted, _ = predict(self.fit_svm(real, synthetic, code_space), test_x)
        return predicted


def _augmented_fold(pipe: FoldPipeline, scenario: str, test: FeatureCorpus, held_out: str) -> FoldResult:
    """Train the scenario's SVM on real and/or synthetic rows and score it on real test rows."""
    train = pipe.train
    n_synth = pipe.settings.synth_count(len(train))
    generation_seed = pipe.seed(GENERATION_STREAM, _scenario_stream(scenario))
    code_space = scenario in CODE_SCENARIOS

    synthetic = None
    if scenario not in REAL_ONLY:
        if code_space:
            gan = pipe.vanilla()
            synth_x, _ = generate(gan, n_synth, generation_seed)
            synthetic = (synth_x, label_codes(gan, synth_x))
        else:
            kind = "baseline" if scenario == "real+cond-baseline" else "improved"
            synthetic = generate_balanced(pipe.conditional(kind), n_synth, generation_seed)

    test_x = encode(pipe.aae(), test.features) if code_space else test.features
    real = None if scenario in SYNTHETIC_ONLY else train
    predicted = pipe.classify(scenario, test_x, real, synthetic, code_space)
    cm = ConfusionMatrix.from_labels(train.class_names, test.labels, predicted)
    return FoldResult(pipe.fold, held_out, cm, uar(cm), len(train), 0 if synthetic is None else len(synthetic[1]))


def _synthetic_test_fold(pipe: FoldPipeline, generator_kind: str, test: FeatureCorpus, held_out: str) -> FoldResult:
    """Train on real rows, score on generated rows labelled by how they were generated."""
    train = pipe.train
    n_test = pipe.settings.n_synth_test
    generation_seed = pipe.seed(GENERATION_STREAM, _scenario_stream(generator_kind))
    code_space = generator_kind == "vanilla-2d"
    if code_space:
        gan = pipe.vanilla()
        test_x, _ = generate(gan, n_test, generation_seed)
        test_y = label_codes(gan, test_x)
        missing = set(train.class_names) - set(test_y)
        if missing:
            logger.warning("Fold %d: generated codes assigned to no %s rows", pipe.fold, sorted(missing))
    else:
        test_x, test_y = generate_balanced(pipe.conditional("improved"), n_test, generation_seed)
    predicted = pipe.classify(generator_kind, test_x, train, code_space=code_space)
    cm = ConfusionMatrix.from_labels(train.class_names, test_y, predicted)
    return FoldResult(pipe.fold, held_out, cm, uar(cm, skip_empty=True), len(train), n_test)



def _run_cv(corpus: FeatureCorpus, scenarios: tuple[str, ...], evaluate, settings: ExperimentSettings,
            audit: DataAccessAudit | None) -> list[ExperimentReport]:
    """Leave-one-session-out folds, run concurrently and merged in fold order."""
    sessions = corpus.session_ids
    if len(sessions) < 2:
        raise ValueError(f"Cross-validation needs at least two sessions, corpus has {sessions}")

    def _run_fold(fold: int, session: int) -> dict[str, FoldResult]:
        train, test = split_by_session(corpus, session)
        logger.info("Fold %d: holding out session %d (%d train rows, %d test rows)",
                    fold, session, len(train), len(test))
        pipe = FoldPipeline(fold, train, settings, audit)
        results = {scenario: evaluate(pipe, scenario, test, str(session)) for scenario in scenarios}
        logger.info("Fold %d done: %s", fold, ", ".join(f"{s} {r.uar:.2f}" for s, r in results.items()))
        return results

    folds = list(enumerate(sessions, start=1))
    with ThreadPoolExecutor(max_workers=max(1, settings.workers)) as pool:
        fold_results = list(pool.map(lambda item: _run_fold(*item), folds))

    echo = config_echo(settings)
    return [ExperimentReport(scenario, [results[scenario] for results in fold_results], dict(echo))
            for scenario in scenarios]


def _check_scenarios(requested, allowed: tuple[str, ...]):
    unknown = [s for s in requested if s not in allowed]
    if unknown:
        raise ValueError(f"Unknown scenario(s) {unknown} (expected one of {list(allowed)})")


def run_training_augmentation_cv(corpus: FeatureCorpus, scenario: str,
                                 settings: ExperimentSettings | None = None,
                                 audit: DataAccessAudit | None = None) -> ExperimentReport:
    """Leave-one-session-out evaluation with synthetic rows in the training set."""
    _check_scenarios([scenario], TABLE1_SCENARIOS)
    return _run_cv(corpus, (scenario,), _augmented_fold, settings or DEFAULT_SETTINGS, audit)[0]


def run_synthetic_test_eval(corpus: FeatureCorpus, generator_kind: str,
                            settings: ExperimentSettings | None = None,
                            audit: DataAccessAudit | None = None) -> ExperimentReport:
    """Train on real training sessions and test on generated rows."""
    settings = settings or DEFAULT_SETTINGS
    _check_scenarios([generator_kind], TABLE2_SCENARIOS)
    if settings.n_synth_test < 1:
        raise ValueError(f"n_synth_test must be at least 1, got {settings.n_synth_test}")
    return _run_cv(corpus, (generator_kind,), _synthetic_test_fold, settings, audit)[0]


def run_cross_corpus(train_corpus: FeatureCorpus, test_corpus: FeatureCorpus,
                     scenarios: tuple[str, ...] = TABLE3_SCENARIOS,
                     settings: ExperimentSettings | None = None,
                     audit: DataAccessAudit | None = None) -> list[ExperimentReport]:
    """
    Train everything on one corpus and evaluate on another.

    GAN losses are also tracked against the test corpus; those histories are
    attached to every report.

    Raises:
        ValueError: If the corpora differ in class list or feature width
    """
    settings = settings or DEFAULT_SETTINGS
    _check_scenarios(scenarios, TABLE3_SCENARIOS)
    if tuple(train_corpus.class_names) != tuple(test_corpus.class_names):
        raise ValueError(
            f"Class lists differ: {list(train_corpus.class_names)} vs {list(test_corpus.class_names)}"
        )
    if train_corpus.feature_dim != test_corpus.feature_dim:
        raise ValueError(f"Feature widths differ: {train_corpus.feature_dim} vs {test_corpus.feature_dim}")

    pipe = FoldPipeline(1, train_corpus, settings, audit, validation=test_corpus)
    results = {scenario: _augmented_fold(pipe, scenario, test_corpus, "cross-corpus") for scenario in scenarios}
    echo = config_echo(settings)
    return [ExperimentReport(scenario, [results[scenario]], dict(echo), dict(pipe.histories))
            for scenario in scenarios]


def run_table(table: str, corpus: FeatureCorpus, settings: ExperimentSettings | None = None,
              test_corpus: FeatureCorpus | None = None,
              audit: DataAccessAudit | None = None) -> list[ExperimentReport]:
    """Every scenario of a table analog, sharing each fold's trained models across scenarios."""
    settings = settings or DEFAULT_SETTINGS
    if table not in TABLES:
        raise ValueError(f"Unknown table '{table}' (expected one of {list(TABLES)})")
    if table == "table1":
        return _run_cv(corpus, TABLE1_SCENARIOS, _augmented_fold, settings, audit)
    if table == "table2":
        if settings.n_synth_test < 1:
            raise ValueError(f"n_synth_test must be at least 1, got {settings.n_synth_test}")
        return _run_cv(corpus, TABLE2_SCENARIOS, _synthetic_test_fold, settings, audit)
    if test_corpus is None:
        raise ValueError("table3 needs a second (test) corpus")
    return run_cross_corpus(corpus, test_corpus, TABLE3_SCENARIOS, settings, audit)


def summary_frame(reports: list[ExperimentReport]) -> pd.DataFrame:
    return pd.DataFrame(
        [(r.scenario, len(r.folds), r.mean_uar) for r in reports],
        columns=["scenario", "folds", "mean_uar"],
    )


def format_summary(reports: list[ExperimentReport], class_count: int) -> str:
    """Human-readable block: chance row first, then one row per scenario."""
    width = max([len("chance")] + [len(r.scenario) for r in reports])
    lines = [f"{'scenario':<{width}}  mean UAR", f"{'chance':<{width}}  {chance_uar(class_count):6.2f}"]
    for report in reports:
        lines.append(f"{report.scenario:<{width}}  {report.mean_uar:6.2f}")
    return "\n".join(lines) + "\n"


def write_reports(reports: list[ExperimentReport], out_dir: str | Path, class_count: int):
    """Per-fold UARs, confusion matrices and the summary table/block."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pd.concat([r.to_frame() for r in reports]).to_csv(
        out_dir / "folds.csv", index=False, float_format="%.17g", lineterminator="\n"
    )
    pd.concat([r.confusion_frame() for r in reports]).to_csv(
        out_dir / "confusion.csv", index=False, lineterminator="\n"
    )
    summary_frame(reports).to_csv(out_dir / "summary.csv", index=False, float_format="%.17g", lineterminator="\n")
    (out_dir / "summary.txt").write_text(format_summary(reports, class_count), encoding="utf-8")
