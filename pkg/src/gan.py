"""Vanilla GAN over 2-D codes and conditional GAN over full feature vectors."""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .aae import one_hot
from .corpus import FeatureCorpus, Normalizer, fit_normalizer
from .gmm import GmmPrior, assign_class, sample_components
from .nn_core import (
    MlpNetwork,
    OptimizerState,
    TrainingDivergedError,
    add_gradients,
    backward,
    discriminator_loss,
    forward,
    generator_loss,
    init_network,
    optimizer_step,
    predict,
)
from .settings import TrainSchedule

logger = logging.getLogger(__name__)

LOSS_COLUMNS = ["step", "split", "disc_loss", "gen_loss"]
SPLITS = ("train", "validation")

VANILLA_GEN_HIDDEN = (32, 32)
VANILLA_DISC_HIDDEN = (64, 64)
COND_GEN_HIDDEN = (128, 512)
COND_DISC_HIDDEN = (512, 128)


@dataclass(frozen=True)
class LossRecord:
    step: int
    split: str
    disc_loss: float
    gen_loss: float


@dataclass
class LossHistory:
    """Per-epoch losses on each split plus update counters."""

    records: list[LossRecord] = field(default_factory=list)
    gen_updates: int = 0
    disc_updates: int = 0

    def add(self, step: int, split: str, disc_loss: float, gen_loss: float):
        if split not in SPLITS:
            raise ValueError(f"Unknown split '{split}'")
        previous = self.split(split)
        if previous and step <= previous[-1].step:
            raise ValueError(f"Steps must increase per split ({step} after {previous[-1].step})")
        if not (np.isfinite(disc_loss) and np.isfinite(gen_loss)) or disc_loss < 0 or gen_loss < 0:
            raise TrainingDivergedError(
                f"Invalid {split} losses at step {step}: disc {disc_loss}, gen {gen_loss}", step=step
            )
        self.records.append(LossRecord(step, split, float(disc_loss), float(gen_loss)))

    def split(self, name: str) -> list[LossRecord]:
        return [r for r in self.records if r.split == name]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([(r.step, r.split, r.disc_loss, r.gen_loss) for r in self.records],
                            columns=LOSS_COLUMNS)

    def save_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def final_window_mean(history: LossHistory, split: str = "train", column: str = "disc_loss",
                      fraction: float = 0.1) -> float:
    """Mean of a loss over the last `fraction` of a split's records (at least one record)."""
    if column not in ("disc_loss", "gen_loss"):
        raise ValueError(f"Unknown loss column '{column}'")
    records = history.split(split)
    if not records:
        raise ValueError(f"History has no '{split}' records")
    window = max(1, int(round(len(records) * fraction)))
    return float(np.mean([getattr(r, column) for r in records[-window:]]))


@dataclass
class GanModel:
    """
    Generator/discriminator pair.

    Vanilla models draw latents from a standard normal of `latent_dim`;
    conditional models draw from `latent_prior` and append the one-hot class
    to both network inputs. Generators work in normalized data space.
    """

    generator: MlpNetwork
    discriminator: MlpNetwork
    latent_dim: int
    normalizer: Normalizer
    schedule: TrainSchedule
    latent_prior: GmmPrior | None = None
    class_names: tuple[str, ...] = ()
    code_prior: GmmPrior | None = None  # labels vanilla samples by highest membership

    def __post_init__(self):
        self.class_names = tuple(self.class_names)
        extra = self.class_count if self.conditional else 0
        if self.conditional:
            if self.latent_prior.dim != self.latent_dim:
                raise ValueError("latent_dim must equal the latent prior's dimension")
            if self.latent_prior.class_names != self.class_names:
                raise ValueError("Latent prior classes must equal the model's class names")
        if self.generator.input_dim != self.latent_dim + extra:
            raise ValueError(
                f"Generator input {self.generator.input_dim} must be latent_dim {self.latent_dim} + {extra}"
            )
        if self.discriminator.input_dim != self.data_dim + extra:
            raise ValueError(f"Discriminator input {self.discriminator.input_dim} must be {self.data_dim} + {extra}")
        if self.discriminator.output_dim != 1 or self.discriminator.output_activation != "sigmoid":
            raise ValueError("Discriminator must end in a single sigmoid unit")
        if self.normalizer.dim != self.data_dim:
            raise ValueError(f"Normalizer dim {self.normalizer.dim} does not match data dim {self.data_dim}")

    @property
    def conditional(self) -> bool:
        return self.latent_prior is not None

    @property
    def class_count(self) -> int:
        return len(self.class_names)

    @property
    def data_dim(self) -> int:
        return self.generator.output_dim


class _Sampler:
    """Latent draws, with one-hot conditioning for conditional models."""

    def __init__(self, latent_dim: int, prior: GmmPrior | None):
        self.latent_dim = latent_dim
        self.prior = prior

    def __call__(self, labels: np.ndarray | None, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.prior is None:
            return rng.standard_normal((n, self.latent_dim))
        return np.hstack([sample_components(self.prior, labels, rng), one_hot(labels, self.prior.n_components)])


def _disc_inputs(samples: np.ndarray, cond: np.ndarray | None) -> np.ndarray:
    return samples if cond is None else np.hstack([samples, cond])


def _evaluate(generator: MlpNetwork, discriminator: MlpNetwork, sampler: _Sampler,
              data: np.ndarray, labels: np.ndarray | None, n_classes: int,
              rng: np.random.Generator) -> tuple[float, float]:
    cond = None if labels is None else one_hot(labels, n_classes)
    fake = predict(generator, sampler(labels, data.shape[0], rng))
    d_real = predict(discriminator, _disc_inputs(data, cond))
    d_fake = predict(discriminator, _disc_inputs(fake, cond))
    disc, _, _ = discriminator_loss(d_real, d_fake)
    gen, _ = generator_loss(d_fake)
    return disc, gen


def _train_loop(
    generator: MlpNetwork,
    discriminator: MlpNetwork,
    sampler: _Sampler,
    data: np.ndarray,
    labels: np.ndarray | None,
    val_data: np.ndarray | None,
    val_labels: np.ndarray | None,
    n_classes: int,
    schedule: TrainSchedule,
    seed: int,
    name: str,
) -> LossHistory:
    """
    Alternating updates: per batch one discriminator step, then
    gen_steps_per_disc_step generator steps with fresh latents.
    Losses are evaluated once per epoch on each split.
    """
    rng = np.random.default_rng(seed)
    gen_state = OptimizerState.for_network(generator, schedule.gen_lr)
    disc_state = OptimizerState.for_network(discriminator, schedule.disc_lr)
    history = LossHistory()
    n = data.shape[0]
    step = 0

    for epoch in range(1, schedule.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, schedule.batch_size):
            index = order[start:start + schedule.batch_size]
            real = data[index]
            batch_labels = None if labels is None else labels[index]
            cond = None if labels is None else one_hot(batch_labels, n_classes)
            step += 1

            fake = predict(generator, sampler(batch_labels, len(index), rng))
            real_trace = forward(discriminator, _disc_inputs(real, cond))
            fake_trace = forward(discriminator, _disc_inputs(fake, cond))
            disc, real_grad, fake_grad = discriminator_loss(real_trace.outputs, fake_trace.outputs)
            if not np.isfinite(disc):
                raise TrainingDivergedError(f"{name}: non-finite discriminator loss at step {step}", step=step)
            grads = add_gradients(backward(discriminator, real_trace, real_grad),
                                  backward(discriminator, fake_trace, fake_grad))
            optimizer_step(discriminator, grads, disc_state)
            history.disc_updates += 1

            for _ in range(schedule.gen_steps_per_disc_step):
                gen_trace = forward(generator, sampler(batch_labels, len(index), rng))
                d_trace = forward(discriminator, _disc_inputs(gen_trace.outputs, cond))
                gen, gen_grad = generator_loss(d_trace.outputs)
                if not np.isfinite(gen):
                    raise TrainingDivergedError(f"{name}: non-finite generator loss at step {step}", step=step)
                sample_grad = backward(discriminator, d_trace, gen_grad).inputs[:, :generator.output_dim]
                optimizer_step(generator, backward(generator, gen_trace, sample_grad), gen_state)
                history.gen_updates += 1

        eval_rng = np.random.default_rng([seed, epoch])
        train_losses = _evaluate(generator, discriminator, sampler, data, labels, n_classes, eval_rng)
        history.add(epoch, "train", *train_losses)
        if val_data is not None:
            history.add(epoch, "validation",
                        *_evaluate(generator, discriminator, sampler, val_data, val_labels, n_classes, eval_rng))
        if epoch == 1 or epoch % 50 == 0 or epoch == schedule.epochs:
            logger.info("%s epoch %d/%d: disc %.4f gen %.4f", name, epoch, schedule.epochs, *train_losses)
    return history


def _codes(values, name: str) -> np.ndarray:
    x = np.array(values, dtype=np.float64, ndmin=2)
    if x.shape[1] != 2:
        raise ValueError(f"{name} must be 2-D codes, got width {x.shape[1]}")
    if x.shape[0] == 0:
        raise ValueError(f"{name} must not be empty")
    return x


def train_vanilla_gan(codes, val_codes, schedule: TrainSchedule, seed: int = 0,
                      code_prior: GmmPrior | None = None) -> tuple[GanModel, LossHistory]:
    """
    Unconditional GAN on 2-D codes with a standard-normal 2-D latent.

    Args:
        codes: Training codes (n x 2)
        val_codes: Validation codes, or None to track the training split only
        schedule: Learning rates, step ratio and epochs
        seed: Seeds initialization, batching and latent draws
        code_prior: Prior used to label generated codes by highest membership

    Returns:
        (model, loss history)
    """
    data = _codes(codes, "codes")
    rng = np.random.default_rng(seed)
    normalizer = fit_normalizer(data)
    generator = init_network([2, *VANILLA_GEN_HIDDEN, 2], rng)
    discriminator = init_network([2, *VANILLA_DISC_HIDDEN, 1], rng, output_activation="sigmoid")
    val = None if val_codes is None else normalizer.apply(_codes(val_codes, "val_codes"))
    history = _train_loop(generator, discriminator, _Sampler(2, None), normalizer.apply(data), None,
                          val, None, 0, schedule, seed, "vanilla-gan")
    model = GanModel(generator, discriminator, 2, normalizer, schedule, code_prior=code_prior)
    return model, history


def conditional_generator_from_decoder(decoder: MlpNetwork, n_classes: int) -> MlpNetwork:
    """Copy decoder weights into a generator whose extra one-hot input columns start at zero."""
    source = decoder.copy()
    w0 = source.weights[0]
    return MlpNetwork(
        layer_dims=[source.input_dim + n_classes, *source.layer_dims[1:]],
        weights=[np.hstack([w0, np.zeros((w0.shape[0], n_classes))]), *source.weights[1:]],
        biases=source.biases,
        hidden_activation=source.hidden_activation,
        output_activation=source.output_activation,
    )


def train_conditional_gan(
    corpus: FeatureCorpus,
    val_corpus: FeatureCorpus | None,
    prior: GmmPrior,
    schedule: TrainSchedule,
    decoder_init: MlpNetwork | None = None,
    seed: int = 0,
) -> tuple[GanModel, LossHistory]:
    """
    Conditional GAN over full feature vectors.

    The generator consumes a draw from the class's prior component plus the
    one-hot class; the discriminator consumes a feature vector plus the
    one-hot label. With schedule.init == "from_decoder" the generator starts
    from `decoder_init` and mirrors its hidden widths.

    Raises:
        ValueError: On class or dimension mismatches, or a decoder init without decoder weights
        TrainingDivergedError: If a loss becomes non-finite
    """
    if len(corpus) == 0:
        raise ValueError("Cannot train a GAN on an empty corpus")
    if tuple(corpus.class_names) != prior.class_names:
        raise ValueError(
            f"Corpus classes {list(corpus.class_names)} do not match prior classes {list(prior.class_names)}"
        )
    if val_corpus is not None:
        if tuple(val_corpus.class_names) != prior.class_names:
            raise ValueError("Validation corpus classes do not match the prior")
        if val_corpus.feature_dim != corpus.feature_dim:
            raise ValueError(f"Validation width {val_corpus.feature_dim} != training width {corpus.feature_dim}")

    n_classes = prior.n_components
    feature_dim = corpus.feature_dim
    gen_dims = [prior.dim + n_classes, *COND_GEN_HIDDEN, feature_dim]
    if decoder_init is not None and (decoder_init.input_dim != prior.dim or decoder_init.output_dim != feature_dim):
        raise ValueError(
            f"Decoder dims {decoder_init.layer_dims} are not compatible with a {prior.dim}-D latent "
            f"and {feature_dim} features"
        )

    rng = np.random.default_rng(seed)
    if schedule.init == "from_decoder":
        if decoder_init is None:
            raise ValueError("Schedule init 'from_decoder' needs decoder weights (train an AAE first)")
        generator = conditional_generator_from_decoder(decoder_init, n_classes)
    else:
        generator = init_network(gen_dims, rng)
    discriminator = init_network([feature_dim + n_classes, *COND_DISC_HIDDEN, 1], rng,
                                 output_activation="sigmoid")

    normalizer = fit_normalizer(corpus)
    val_data = val_labels = None
    if val_corpus is not None and len(val_corpus):
        val_data = normalizer.apply(val_corpus.features)
        val_labels = val_corpus.label_indices()
    history = _train_loop(generator, discriminator, _Sampler(prior.dim, prior),
                          normalizer.apply(corpus.features), corpus.label_indices(),
                          val_data, val_labels, n_classes, schedule, seed, f"cond-gan[{schedule.init}]")
    model = GanModel(generator, discriminator, prior.dim, normalizer, schedule,
                     latent_prior=prior, class_names=prior.class_names)
    return model, history


def generate(model: GanModel, n: int, seed, class_name: str | None = None) -> tuple[np.ndarray, list[str] | None]:
    """
    Draw n samples in data scale.

    Conditional models return the class of each sample (the forced class or
    the sampled prior component); vanilla models return None for labels.

    Raises:
        ValueError: If n < 0 or the model cannot generate the requested class
    """
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    if class_name is not None and not model.conditional:
        raise ValueError("A class can only be requested from a conditional model")
    if class_name is not None:
        model.latent_prior.class_index(class_name)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if n == 0:
        return np.zeros((0, model.data_dim)), ([] if model.conditional else None)

    sampler = _Sampler(model.latent_dim, model.latent_prior)
    labels = None
    if model.conditional:
        prior = model.latent_prior
        if class_name is None:
            labels = rng.choice(prior.n_components, size=n, p=prior.weights)
        else:
            labels = np.full(n, prior.class_index(class_name), dtype=np.int64)
    samples = model.normalizer.invert(predict(model.generator, sampler(labels, n, rng)))
    if labels is None:
        return samples, None
    return samples, [model.class_names[k] for k in labels]


def generate_balanced(model: GanModel, n: int, seed) -> tuple[np.ndarray, list[str]]:
    """n conditional samples split as evenly as possible over classes, first classes taking the remainder."""
    if not model.conditional:
        raise ValueError("Balanced generation needs a conditional model")
    rng = np.random.default_rng(seed)
    base, extra = divmod(n, model.class_count)
    blocks, labels = [], []
    for k, name in enumerate(model.class_names):
        count = base + (1 if k < extra else 0)
        samples, block_labels = generate(model, count, rng, name)
        blocks.append(samples)
        labels.extend(block_labels)
    return np.vstack(blocks), labels


def label_codes(model: GanModel, samples: np.ndarray) -> list[str]:
    """Highest-membership labels for vanilla samples under the embedded code prior."""
    if model.code_prior is None:
        raise ValueError("Model has no code prior for labelling samples")
    if len(samples) == 0:
        return []
    return assign_class(model.code_prior, samples)


def demonstrate_highdim_failure(corpus: FeatureCorpus, schedule: TrainSchedule, seed: int = 0,
                                val_corpus: FeatureCorpus | None = None) -> LossHistory:
    """
    Train the unconditional 2 -> ... -> feature_dim configuration and return its history.

    Uses a standard-normal 2-D latent with a 2->128->512->d generator and a
    d->512->128->1 discriminator. Without an explicit validation corpus the
    highest session is held out for validation.
    """
    if val_corpus is None and len(corpus.session_ids) > 1:
        held_out = corpus.session_ids[-1]
        val_corpus = corpus.subset(corpus.sessions == held_out)
        corpus = corpus.subset(corpus.sessions != held_out)
    if len(corpus) == 0:
        raise ValueError("Cannot train a GAN on an empty corpus")

    rng = np.random.default_rng(seed)
    feature_dim = corpus.feature_dim
    generator = init_network([2, *COND_GEN_HIDDEN, feature_dim], rng)
    discriminator = init_network([feature_dim, *COND_DISC_HIDDEN, 1], rng, output_activation="sigmoid")
    normalizer = fit_normalizer(corpus)
    val = normalizer.apply(val_corpus.features) if val_corpus is not None and len(val_corpus) else None
    return _train_loop(generator, discriminator, _Sampler(2, None), normalizer.apply(corpus.features),
                       None, val, None, 0, schedule, seed, "highdim-gan")
