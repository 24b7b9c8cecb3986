"""Adversarial auto-encoder: compress feature vectors to 2-D codes shaped like a GMM prior."""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .corpus import FeatureCorpus, Normalizer, fit_normalizer
from .gmm import GmmPrior, sample_components
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
    squared_error_loss,
)
from .settings import AaeSettings

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ["epoch", "reconstruction_loss", "disc_loss", "gen_loss"]


def one_hot(indices: np.ndarray, n_classes: int) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.int64)
    out = np.zeros((indices.size, n_classes))
    out[np.arange(indices.size), indices] = 1.0
    return out


@dataclass
class AaeModel:
    """
    Encoder, decoder and class-conditioned latent discriminator.

    The latent discriminator sees a code concatenated with the one-hot class
    of the row it came from, so each class is pulled onto its own prior
    component.
    """

    encoder: MlpNetwork
    decoder: MlpNetwork
    latent_discriminator: MlpNetwork
    prior: GmmPrior
    normalizer: Normalizer

    def __post_init__(self):
        code_dim = self.prior.dim
        if self.encoder.output_dim != code_dim or self.decoder.input_dim != code_dim:
            raise ValueError(
                f"Encoder output {self.encoder.output_dim} / decoder input {self.decoder.input_dim} "
                f"must equal prior dimension {code_dim}"
            )
        if self.decoder.output_dim != self.encoder.input_dim:
            raise ValueError(
                f"Decoder output {self.decoder.output_dim} must equal encoder input {self.encoder.input_dim}"
            )
        if self.normalizer.dim != self.encoder.input_dim:
            raise ValueError(f"Normalizer dim {self.normalizer.dim} does not match feature dim")
        if self.latent_discriminator.input_dim != code_dim + self.prior.n_components:
            raise ValueError("Latent discriminator must take code + one-hot class inputs")

    @property
    def feature_dim(self) -> int:
        return self.encoder.input_dim

    @property
    def code_dim(self) -> int:
        return self.prior.dim

    @property
    def class_names(self) -> tuple[str, ...]:
        return self.prior.class_names


@dataclass
class AaeHistory:
    """Mean per-epoch losses of one AAE training run."""

    records: list[tuple[int, float, float, float]] = field(default_factory=list)

    def add(self, epoch: int, reconstruction: float, disc: float, gen: float):
        self.records.append((epoch, reconstruction, disc, gen))

    @property
    def final_reconstruction_loss(self) -> float:
        if not self.records:
            raise ValueError("History is empty")
        return self.records[-1][1]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.records, columns=HISTORY_COLUMNS)

    def save_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def build_aae(feature_dim: int, prior: GmmPrior, normalizer: Normalizer,
              settings: AaeSettings, rng: np.random.Generator) -> AaeModel:
    """Randomly initialized networks sized from the settings."""
    code_dim = prior.dim
    encoder = init_network([feature_dim, *settings.encoder_hidden, code_dim], rng)
    decoder = init_network([code_dim, *settings.decoder_hidden, feature_dim], rng)
    discriminator = init_network(
        [code_dim + prior.n_components, *settings.discriminator_hidden, 1], rng, output_activation="sigmoid"
    )
    return AaeModel(encoder, decoder, discriminator, prior, normalizer)


def _check_finite(step: int, **losses: float):
    for name, value in losses.items():
        if not np.isfinite(value):
            raise TrainingDivergedError(f"Non-finite {name} ({value}) at AAE step {step}", step=step)


def train_aae(corpus: FeatureCorpus, prior: GmmPrior, settings: AaeSettings | None = None,
              seed: int = 0) -> tuple[AaeModel, AaeHistory]:
    """
    Train an adversarial auto-encoder on a corpus.

    Each batch takes one reconstruction step (encoder and decoder), one
    latent-discriminator step, and one adversarial encoder step. The real
    latent sample for a row of class c is drawn from prior component c.
    The latent discriminator takes the code concatenated with the one-hot
    class (code_dim + K inputs, two hidden layers of 64 by default) rather
    than the bare code, so the encoder is pushed onto its own class's
    component instead of anywhere on the mixture.

    Args:
        corpus: Training rows; its class list must equal the prior's
        prior: Target code distribution, one component per class
        settings: Architecture and schedule
        seed: Seeds initialization, shuffling and prior draws

    Returns:
        (trained model, per-epoch loss history)

    Raises:
        ValueError: If the corpus is empty or its classes differ from the prior's
        TrainingDivergedError: If any loss becomes non-finite
    """
    settings = settings or AaeSettings()
    if len(corpus) == 0:
        raise ValueError("Cannot train an AAE on an empty corpus")
    if tuple(corpus.class_names) != tuple(prior.class_names):
        raise ValueError(
            f"Corpus classes {list(corpus.class_names)} do not match prior classes {list(prior.class_names)}"
        )
    if settings.code_dim != prior.dim:
        raise ValueError(f"code_dim {settings.code_dim} does not match prior dimension {prior.dim}")

    rng = np.random.default_rng(seed)
    normalizer = fit_normalizer(corpus)
    model = build_aae(corpus.feature_dim, prior, normalizer, settings, rng)
    x_all = normalizer.apply(corpus.features)
    labels = corpus.label_indices()
    n_classes = prior.n_components
    code_dim = prior.dim

    lr = settings.learning_rate
    enc_state = OptimizerState.for_network(model.encoder, lr)
    dec_state = OptimizerState.for_network(model.decoder, lr)
    disc_state = OptimizerState.for_network(model.latent_discriminator, lr)
    adv_state = OptimizerState.for_network(model.encoder, lr)

    history = AaeHistory()
    step = 0
    n = len(corpus)
    for epoch in range(1, settings.epochs + 1):
        order = rng.permutation(n)
        totals = np.zeros(3)
        batches = 0
        for start in range(0, n, settings.batch_size):
            index = order[start:start + settings.batch_size]
            x = x_all[index]
            cond = one_hot(labels[index], n_classes)
            step += 1

            # reconstruction
            enc_trace = forward(model.encoder, x)
            dec_trace = forward(model.decoder, enc_trace.outputs)
            recon, recon_grad = squared_error_loss(dec_trace.outputs, x)
            dec_grads = backward(model.decoder, dec_trace, recon_grad)
            enc_grads = backward(model.encoder, enc_trace, dec_grads.inputs)
            _check_finite(step, reconstruction_loss=recon)
            optimizer_step(model.decoder, dec_grads, dec_state)
            optimizer_step(model.encoder, enc_grads, enc_state)

            # latent discriminator
            real_codes = sample_components(prior, labels[index], rng)
            fake_codes = predict(model.encoder, x)
            real_trace = forward(model.latent_discriminator, np.hstack([real_codes, cond]))
            fake_trace = forward(model.latent_discriminator, np.hstack([fake_codes, cond]))
            disc, real_grad, fake_grad = discriminator_loss(real_trace.outputs, fake_trace.outputs)
            _check_finite(step, disc_loss=disc)
            grads = add_gradients(
                backward(model.latent_discriminator, real_trace, real_grad),
                backward(model.latent_discriminator, fake_trace, fake_grad),
            )
            optimizer_step(model.latent_discriminator, grads, disc_state)

            # encoder as generator
            enc_trace = forward(model.encoder, x)
            disc_trace = forward(model.latent_discriminator, np.hstack([enc_trace.outputs, cond]))
            gen, gen_grad = generator_loss(disc_trace.outputs)
            _check_finite(step, gen_loss=gen)
            code_grad = backward(model.latent_discriminator, disc_trace, gen_grad).inputs[:, :code_dim]
            optimizer_step(model.encoder, backward(model.encoder, enc_trace, code_grad), adv_state)

            totals += (recon, disc, gen)
            batches += 1

        means = totals / batches
        history.add(epoch, *(float(v) for v in means))
        if epoch == 1 or epoch % 25 == 0 or epoch == settings.epochs:
            logger.info("AAE epoch %d/%d: recon %.4f disc %.4f gen %.4f",
                        epoch, settings.epochs, means[0], means[1], means[2])
    return model, history


def _features(model: AaeModel, features) -> np.ndarray:
    x = np.array(features, dtype=np.float64, ndmin=2)
    if x.shape[1] != model.feature_dim:
        raise ValueError(f"Feature width {x.shape[1]} does not match AAE feature dim {model.feature_dim}")
    return x


def encode(model: AaeModel, features) -> np.ndarray:
    """Codes for raw (un-normalized) feature rows, order-preserving."""
    x = _features(model, features)
    if x.shape[0] == 0:
        return np.zeros((0, model.code_dim))
    return predict(model.encoder, model.normalizer.apply(x))


def decode(model: AaeModel, codes) -> np.ndarray:
    """Feature-scale reconstructions for latent codes."""
    z = np.array(codes, dtype=np.float64, ndmin=2)
    if z.shape[1] != model.code_dim:
        raise ValueError(f"Code width {z.shape[1]} does not match code dim {model.code_dim}")
    return model.normalizer.invert(predict(model.decoder, z))


def reconstruct(model: AaeModel, features) -> np.ndarray:
    return decode(model, encode(model, features))


def reconstruction_error(model: AaeModel, features) -> float:
    """Training-loss-comparable squared error in normalized space (summed over dims, mean over rows)."""
    x = model.normalizer.apply(_features(model, features))
    return squared_error_loss(predict(model.decoder, predict(model.encoder, x)), x)[0]


def decoder_weights(model: AaeModel) -> MlpNetwork:
    """Deep copy of the decoder for generator initialization."""
    return model.decoder.copy()
