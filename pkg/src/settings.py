"""Training, evaluation and run configuration."""

from dataclasses import dataclass, field, fields, replace
from pathlib import Path


# Emotion classes in the order every corpus, prior and report uses
EMOTION_CLASSES = ["neutral", "angry", "sad", "happy"]

# Utterance counts per class in the reference corpus; synthetic corpora scale these ratios
REFERENCE_CLASS_COUNTS = {
    "neutral": 1708,
    "angry": 1103,
    "sad": 1084,
    "happy": 1636,
}

GAN_INIT_MODES = ("random", "from_decoder")


@dataclass
class AaeSettings:
    """Architecture and schedule for the adversarial auto-encoder."""

    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 1e-3
    code_dim: int = 2
    encoder_hidden: tuple = (512, 128)
    decoder_hidden: tuple = (128, 512)
    discriminator_hidden: tuple = (64, 64)

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("AAE epochs and batch_size must be positive")
        if self.learning_rate <= 0:
            raise ValueError(f"AAE learning_rate must be positive, got {self.learning_rate}")


@dataclass
class TrainSchedule:
    """Learning rates, step ratio and initialization for one GAN training run."""

    gen_lr: float = 2e-4
    disc_lr: float = 2e-4
    gen_steps_per_disc_step: int = 1
    epochs: int = 300
    batch_size: int = 64
    init: str = "random"  # "random" or "from_decoder"

    def __post_init__(self):
        if self.gen_lr <= 0 or self.disc_lr <= 0:
            raise ValueError(
                f"Learning rates must be positive (gen_lr={self.gen_lr}, disc_lr={self.disc_lr})"
            )
        if self.gen_steps_per_disc_step < 1:
            raise ValueError("gen_steps_per_disc_step must be at least 1")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.init not in GAN_INIT_MODES:
            raise ValueError(f"Unknown init mode '{self.init}' (expected one of {GAN_INIT_MODES})")


def vanilla_schedule(epochs: int = 300, batch_size: int = 64) -> TrainSchedule:
    """Schedule for the unconditional GAN on 2-D codes."""
    return TrainSchedule(gen_lr=1e-3, disc_lr=1e-3, gen_steps_per_disc_step=1,
                         epochs=epochs, batch_size=batch_size, init="random")


def baseline_schedule(epochs: int = 300, batch_size: int = 64) -> TrainSchedule:
    """Baseline conditional GAN: equal learning rates, 1:1 steps, random init."""
    return TrainSchedule(gen_lr=2e-4, disc_lr=2e-4, gen_steps_per_disc_step=1,
                         epochs=epochs, batch_size=batch_size, init="random")


def improved_schedule(epochs: int = 300, batch_size: int = 64) -> TrainSchedule:
    """Improved conditional GAN: decoder init, faster generator, 5 generator steps per disc step."""
    return TrainSchedule(gen_lr=1e-3, disc_lr=1e-4, gen_steps_per_disc_step=5,
                         epochs=epochs, batch_size=batch_size, init="from_decoder")


@dataclass
class SvmSettings:
    """RBF soft-margin SVM hyperparameters."""

    C: float = 1.0
    gamma: float | None = None  # None: 1 / (feature_dim * mean feature variance)
    tol: float = 1e-3
    max_passes: int = 200

    def __post_init__(self):
        if self.C <= 0:
            raise ValueError(f"C must be positive, got {self.C}")
        if self.gamma is not None and self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")


@dataclass
class ExperimentSettings:
    """Everything a table-analog harness needs besides the corpora."""

    master_seed: int = 0
    aae: AaeSettings = field(default_factory=AaeSettings)
    vanilla: TrainSchedule = field(default_factory=vanilla_schedule)
    baseline: TrainSchedule = field(default_factory=baseline_schedule)
    improved: TrainSchedule = field(default_factory=improved_schedule)
    svm: SvmSettings = field(default_factory=SvmSettings)
    n_synth: int = 0  # 0: match the real training-set size
    n_synth_test: int = 400
    workers: int = 1

    def synth_count(self, real_train_size: int) -> int:
        """Number of synthetic rows to add for a fold with the given real size."""
        return self.n_synth if self.n_synth > 0 else real_train_size


def parse_key_values(text: str, source: str = "<text>") -> dict[str, str]:
    """
    Parse flat `key = value` text.

    Blank lines and lines starting with '#' are ignored. Keys keep their
    file order.

    Raises:
        ValueError: On a line without '=' or a repeated key, naming the line.
    """
    values = {}
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{source}: line {line_number}: expected 'key = value', got '{line}'")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ValueError(f"{source}: line {line_number}: empty key")
        if key in values:
            raise ValueError(f"{source}: line {line_number}: duplicate key '{key}'")
        values[key] = value.strip()
    return values


def format_key_values(values: dict) -> str:
    """Render a mapping as `key = value` lines."""
    return "".join(f"{key} = {value}\n" for key, value in values.items())


def _coerce(name: str, raw: str, kind: type):
    """Convert a raw text value to the declared field type."""
    try:
        if kind is bool:
            lowered = raw.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except ValueError:
        raise ValueError(f"Config key '{name}': cannot parse '{raw}' as {kind.__name__}") from None
    return raw


@dataclass
class RunConfig:
    """Flat run configuration shared by every CLI command."""

    seed: int = 0
    corpus: str = ""
    test_corpus: str = ""
    out_dir: str = "runs/latest"
    aae_checkpoint: str = ""
    val_session: int = 0  # 0: hold out the highest session for validation curves

    aae_epochs: int = 200
    aae_batch_size: int = 64
    aae_lr: float = 1e-3

    gan_epochs: int = 300
    gan_batch_size: int = 64
    vanilla_lr: float = 1e-3
    baseline_lr: float = 2e-4
    improved_gen_lr: float = 1e-3
    improved_disc_lr: float = 1e-4
    improved_gen_steps: int = 5

    svm_c: float = 1.0
    svm_gamma: float = 0.0  # 0: scale heuristic
    svm_tol: float = 1e-3
    svm_max_passes: int = 200

    n_synth: int = 0
    n_synth_test: int = 400
    workers: int = 1

    @classmethod
    def from_values(cls, values: dict[str, str], source: str = "<config>") -> "RunConfig":
        """Build a config from raw text values, rejecting unknown keys."""
        known = {f.name: f.type for f in fields(cls)}
        types = {"int": int, "float": float, "str": str, "bool": bool}
        parsed = {}
        for key, raw in values.items():
            if key not in known:
                raise ValueError(f"{source}: unknown config key '{key}'")
            kind = known[key]
            if isinstance(kind, str):
                kind = types[kind]
            parsed[key] = _coerce(key, raw, kind)
        return cls(**parsed)

    def with_overrides(self, overrides: dict[str, str]) -> "RunConfig":
        """Return a copy with raw text overrides applied (flags beat file values)."""
        base = {f.name: str(getattr(self, f.name)) for f in fields(self)}
        for key in overrides:
            if key not in base:
                raise ValueError(f"unknown config key '{key}'")
        base.update(overrides)
        return RunConfig.from_values(base, source="overrides")

    def to_text(self) -> str:
        """Resolved config echo; reading it back reproduces this config."""
        return format_key_values({f.name: getattr(self, f.name) for f in fields(self)})

    def aae_settings(self) -> AaeSettings:
        return AaeSettings(epochs=self.aae_epochs, batch_size=self.aae_batch_size,
                           learning_rate=self.aae_lr)

    def schedule(self, kind: str) -> TrainSchedule:
        """Build the GAN schedule for 'vanilla', 'baseline' or 'improved'."""
        if kind == "vanilla":
            return replace(vanilla_schedule(self.gan_epochs, self.gan_batch_size),
                           gen_lr=self.vanilla_lr, disc_lr=self.vanilla_lr)
        if kind == "baseline":
            return replace(baseline_schedule(self.gan_epochs, self.gan_batch_size),
                           gen_lr=self.baseline_lr, disc_lr=self.baseline_lr)
        if kind == "improved":
            return replace(improved_schedule(self.gan_epochs, self.gan_batch_size),
                           gen_lr=self.improved_gen_lr, disc_lr=self.improved_disc_lr,
                           gen_steps_per_disc_step=self.improved_gen_steps)
        raise ValueError(f"Unknown schedule kind '{kind}'")

    def svm_settings(self) -> SvmSettings:
        return SvmSettings(C=self.svm_c, gamma=self.svm_gamma or None,
                           tol=self.svm_tol, max_passes=self.svm_max_passes)

    def experiment_settings(self) -> ExperimentSettings:
        return ExperimentSettings(
            master_seed=self.seed,
            aae=self.aae_settings(),
            vanilla=self.schedule("vanilla"),
            baseline=self.schedule("baseline"),
            improved=self.schedule("improved"),
            svm=self.svm_settings(),
            n_synth=self.n_synth,
            n_synth_test=self.n_synth_test,
            workers=self.workers,
        )


def load_run_config(path: str | Path | None = None, overrides: dict[str, str] | None = None) -> RunConfig:
    """
    Resolve a run configuration from an optional file plus overrides.

    Args:
        path: Flat key-value config file, or None for defaults
        overrides: Raw `key -> value` strings from command-line flags

    Returns:
        The fully-resolved RunConfig

    Raises:
        ValueError: On unknown keys or unparseable values
        FileNotFoundError: If the config file does not exist
    """
    config = RunConfig()
    if path:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Config file not found: {path}")
        config = RunConfig.from_values(parse_key_values(path.read_text(encoding="utf-8"), str(path)),
                                       source=str(path))
    if overrides:
        config = config.with_overrides(overrides)
    return config


# Default settings instance
DEFAULT_SETTINGS = ExperimentSettings()
