"""
Little-endian binary checkpoints for networks, AAEs, GANs and SVMs.

Layout: magic b"GANSER1\\0", version u32, payload kind u8, payload blocks.
A network block is layer count u32, layer dims u32[], hidden/output
activation enums u8 u8, then row-major f64 weights and biases per layer.
"""

import io
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .aae import AaeModel
from .corpus import Normalizer
from .gan import GanModel
from .gmm import GmmPrior, prior_from_text, prior_to_text
from .nn_core import MlpNetwork
from .settings import TrainSchedule, format_key_values, parse_key_values
from .svm import BinaryMachine, SvmModel

MAGIC = b"GANSER1\0"
VERSION = 1

KIND_NETWORK = 0
KIND_AAE = 1
KIND_GAN = 2
KIND_SVM = 3
KIND_NAMES = {KIND_NETWORK: "network", KIND_AAE: "aae", KIND_GAN: "gan", KIND_SVM: "svm"}

ACTIVATION_CODES = {"relu": 0, "tanh": 1, "linear": 2, "sigmoid": 3}
ACTIVATION_NAMES = {code: name for name, code in ACTIVATION_CODES.items()}
SCHEDULE_KEYS = ("gen_lr", "disc_lr", "gen_steps_per_disc_step", "epochs", "batch_size", "init")


class _Writer:
    def __init__(self, kind: int):
        self.buffer = io.BytesIO()
        self.buffer.write(MAGIC)
        self.u32(VERSION)
        self.u8(kind)

    def u8(self, value: int):
        self.buffer.write(struct.pack("<B", value))

    def u32(self, value: int):
        self.buffer.write(struct.pack("<I", value))

    def f64(self, value: float):
        self.buffer.write(struct.pack("<d", value))

    def block(self, values: np.ndarray):
        self.buffer.write(np.ascontiguousarray(values, dtype="<f8").tobytes())

    def array(self, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        self.u32(values.size)
        self.block(values)

    def string(self, text: str):
        raw = text.encode("utf-8")
        self.u32(len(raw))
        self.buffer.write(raw)

    def strings(self, items):
        self.u32(len(items))
        for item in items:
            self.string(item)

    def network(self, net: MlpNetwork):
        self.u32(len(net.layer_dims))
        for dim in net.layer_dims:
            self.u32(dim)
        self.u8(ACTIVATION_CODES[net.hidden_activation])
        self.u8(ACTIVATION_CODES[net.output_activation])
        for w, b in zip(net.weights, net.biases):
            self.block(w)
            self.block(b)

    def normalizer(self, stats: Normalizer):
        self.array(stats.mean)
        self.array(stats.std)

    def save(self, path: str | Path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.buffer.getvalue())


class _Reader:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        if not self.path.exists():
            raise FileNotFoundError(f"Checkpoint not found: {self.path}")
        self.data = self.path.read_bytes()
        self.offset = 0
        if self._take(len(MAGIC)) != MAGIC:
            raise ValueError(f"{self.path}: not a checkpoint (bad magic bytes)")
        version = self.u32()
        if version != VERSION:
            raise ValueError(f"{self.path}: unsupported checkpoint version {version}")
        self.kind = self.u8()
        if self.kind not in KIND_NAMES:
            raise ValueError(f"{self.path}: unknown payload kind {self.kind}")

    def _take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise ValueError(f"{self.path}: truncated checkpoint at byte {self.offset}")
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def expect(self, kind: int):
        if self.kind != kind:
            raise ValueError(
                f"{self.path}: expected a {KIND_NAMES[kind]} checkpoint, found {KIND_NAMES[self.kind]}"
            )

    def u8(self) -> int:
        return struct.unpack("<B", self._take(1))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self._take(4))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self._take(8))[0]

    def block(self, shape: tuple[int, ...]) -> np.ndarray:
        count = int(np.prod(shape))
        return np.frombuffer(self._take(8 * count), dtype="<f8").astype(np.float64).reshape(shape)

    def array(self) -> np.ndarray:
        return self.block((self.u32(),))

    def string(self) -> str:
        return self._take(self.u32()).decode("utf-8")

    def strings(self) -> list[str]:
        return [self.string() for _ in range(self.u32())]

    def network(self) -> MlpNetwork:
        dims = [self.u32() for _ in range(self.u32())]
        try:
            hidden = ACTIVATION_NAMES[self.u8()]
            output = ACTIVATION_NAMES[self.u8()]
        except KeyError as code:
            raise ValueError(f"{self.path}: unknown activation code {code}") from None
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            weights.append(self.block((fan_out, fan_in)))
            biases.append(self.block((fan_out,)))
        return MlpNetwork(dims, weights, biases, hidden, output)

    def normalizer(self) -> Normalizer:
        return Normalizer(self.array(), self.array())

    def finish(self):
        if self.offset != len(self.data):
            raise ValueError(f"{self.path}: {len(self.data) - self.offset} trailing bytes")


def load_checkpoint_kind(path: str | Path) -> str:
    """Payload kind name: 'network', 'aae', 'gan' or 'svm'."""
    return KIND_NAMES[_Reader(path).kind]


def save_network(net: MlpNetwork, path: str | Path):
    writer = _Writer(KIND_NETWORK)
    writer.network(net)
    writer.save(path)


def load_network(path: str | Path) -> MlpNetwork:
    reader = _Reader(path)
    reader.expect(KIND_NETWORK)
    net = reader.network()
    reader.finish()
    return net


def save_aae(model: AaeModel, path: str | Path):
    writer = _Writer(KIND_AAE)
    writer.network(model.encoder)
    writer.network(model.decoder)
    writer.network(model.latent_discriminator)
    writer.normalizer(model.normalizer)
    writer.string(prior_to_text(model.prior))
    writer.save(path)


def load_aae(path: str | Path) -> AaeModel:
    reader = _Reader(path)
    reader.expect(KIND_AAE)
    encoder, decoder, discriminator = reader.network(), reader.network(), reader.network()
    normalizer = reader.normalizer()
    prior = prior_from_text(reader.string(), str(path))
    reader.finish()
    return AaeModel(encoder, decoder, discriminator, prior, normalizer)


def _schedule_from_text(text: str, source: str) -> TrainSchedule:
    raw = parse_key_values(text, source)
    missing = [key for key in SCHEDULE_KEYS if key not in raw]
    if missing:
        raise ValueError(f"{source}: schedule block is missing key(s) {missing}")
    return TrainSchedule(
        gen_lr=float(raw["gen_lr"]),
        disc_lr=float(raw["disc_lr"]),
        gen_steps_per_disc_step=int(raw["gen_steps_per_disc_step"]),
        epochs=int(raw["epochs"]),
        batch_size=int(raw["batch_size"]),
        init=raw["init"],
    )


def _optional_prior(writer: _Writer, prior: GmmPrior | None):
    writer.u8(prior is not None)
    if prior is not None:
        writer.string(prior_to_text(prior))


def _read_optional_prior(reader: _Reader) -> GmmPrior | None:
    return prior_from_text(reader.string(), str(reader.path)) if reader.u8() else None


def save_gan(model: GanModel, path: str | Path):
    writer = _Writer(KIND_GAN)
    writer.u8(model.conditional)
    writer.u32(model.latent_dim)
    writer.network(model.generator)
    writer.network(model.discriminator)
    writer.normalizer(model.normalizer)
    writer.string(format_key_values({k: repr(v) if isinstance(v, float) else v
                                     for k, v in asdict(model.schedule).items()}))
    writer.strings(list(model.class_names))
    _optional_prior(writer, model.latent_prior)
    _optional_prior(writer, model.code_prior)
    writer.save(path)


def load_gan(path: str | Path) -> GanModel:
    reader = _Reader(path)
    reader.expect(KIND_GAN)
    conditional = bool(reader.u8())
    latent_dim = reader.u32()
    generator, discriminator = reader.network(), reader.network()
    normalizer = reader.normalizer()
    schedule = _schedule_from_text(reader.string(), str(path))
    class_names = tuple(reader.strings())
    latent_prior = _read_optional_prior(reader)
    code_prior = _read_optional_prior(reader)
    reader.finish()
    if conditional != (latent_prior is not None):
        raise ValueError(f"{path}: conditional flag does not match the stored latent prior")
    return GanModel(generator, discriminator, latent_dim, normalizer, schedule,
                    latent_prior=latent_prior, class_names=class_names, code_prior=code_prior)


def save_svm(model: SvmModel, path: str | Path):
    writer = _Writer(KIND_SVM)
    writer.f64(model.gamma)
    writer.f64(model.C)
    writer.strings(list(model.class_names))
    writer.normalizer(model.normalizer)
    writer.u32(len(model.machines))
    for machine in model.machines:
        writer.u32(machine.positive)
        writer.u32(machine.negative)
        writer.u32(machine.support_vectors.shape[0])
        writer.u32(machine.support_vectors.shape[1])
        writer.block(machine.support_vectors)
        writer.array(machine.dual_coef)
        writer.f64(machine.bias)
    writer.save(path)


def load_svm(path: str | Path) -> SvmModel:
    reader = _Reader(path)
    reader.expect(KIND_SVM)
    gamma, C = reader.f64(), reader.f64()
    class_names = tuple(reader.strings())
    normalizer = reader.normalizer()
    machines = []
    for _ in range(reader.u32()):
        positive, negative = reader.u32(), reader.u32()
        rows, dim = reader.u32(), reader.u32()
        support = reader.block((rows, dim))
        machines.append(BinaryMachine(positive, negative, support, reader.array(), reader.f64()))
    reader.finish()
    return SvmModel(machines, gamma, C, class_names, normalizer)
