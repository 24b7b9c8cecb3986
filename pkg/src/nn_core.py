"""Fixed-topology MLPs with exact reverse-mode gradients and an adaptive-moment optimizer."""

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

HIDDEN_ACTIVATIONS = ("relu", "tanh")
OUTPUT_ACTIVATIONS = ("linear", "sigmoid")

# Discriminator probabilities are kept inside [PROB_CLAMP, 1 - PROB_CLAMP] before any log
PROB_CLAMP = 1e-7

LOSS_KINDS = ("bce", "generator", "squared_error")


class TrainingDivergedError(RuntimeError):
    """A loss or parameter became non-finite during training."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class NonFiniteGradientError(TrainingDivergedError):
    """An optimizer step received a NaN/Inf gradient."""

    def __init__(self, message: str, layer: int, step: int | None = None):
        super().__init__(message, step)
        self.layer = layer


@dataclass
class MlpNetwork:
    """
    A fully-connected network.

    Layer l maps layer_dims[l] -> layer_dims[l + 1] with a weight matrix of
    shape (layer_dims[l + 1], layer_dims[l]) and a bias of length
    layer_dims[l + 1]. Hidden layers share one activation; the last layer
    uses output_activation.
    """

    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_activation: str = "relu"
    output_activation: str = "linear"

    def __post_init__(self):
        self.layer_dims = [int(d) for d in self.layer_dims]
        if len(self.layer_dims) < 2 or any(d < 1 for d in self.layer_dims):
            raise ValueError(f"layer_dims must list at least two positive widths, got {self.layer_dims}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"Unknown hidden activation '{self.hidden_activation}'")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"Unknown output activation '{self.output_activation}'")
        if len(self.weights) != self.n_layers or len(self.biases) != self.n_layers:
            raise ValueError(
                f"Expected {self.n_layers} weight/bias pairs for dims {self.layer_dims}, "
                f"got {len(self.weights)}/{len(self.biases)}"
            )
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_dims[l + 1], self.layer_dims[l])
            if w.shape != expected:
                raise ValueError(f"Layer {l}: weight shape {w.shape}, expected {expected}")
            if b.shape != (self.layer_dims[l + 1],):
                raise ValueError(f"Layer {l}: bias shape {b.shape}, expected ({self.layer_dims[l + 1]},)")

    @property
    def n_layers(self) -> int:
        return len(self.layer_dims) - 1

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    def parameters(self) -> list[np.ndarray]:
        """Parameter arrays in optimizer order: W0, b0, W1, b1, ..."""
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params

    def copy(self) -> "MlpNetwork":
        """Deep copy; the copy shares no arrays with this network."""
        return MlpNetwork(
            layer_dims=list(self.layer_dims),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            hidden_activation=self.hidden_activation,
            output_activation=self.output_activation,
        )

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.parameters())


@dataclass
class Batch:
    """A batch of network inputs with optional targets."""

    inputs: np.ndarray
    targets: np.ndarray | None = None


@dataclass
class ActivationTrace:
    """Everything backward needs: each layer's input, pre-activation and the outputs."""

    layer_dims: list[int]
    layer_inputs: list[np.ndarray]
    pre_activations: list[np.ndarray]
    outputs: np.ndarray


@dataclass
class Gradients:
    """Gradients for every weight and bias, plus the gradient w.r.t. the network input."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    inputs: np.ndarray | None = None

    def parameters(self) -> list[np.ndarray]:
        grads = []
        for w, b in zip(self.weights, self.biases):
            grads.extend([w, b])
        return grads


@dataclass
class OptimizerState:
    """Adaptive-moment accumulators for one network."""

    first_moments: list[np.ndarray]
    second_moments: list[np.ndarray]
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError(f"beta1/beta2 must lie in (0, 1), got {self.beta1}/{self.beta2}")
        if not (0 < self.epsilon <= 1e-4):
            raise ValueError(f"epsilon must lie in (0, 1e-4], got {self.epsilon}")

    @classmethod
    def for_network(cls, net: MlpNetwork, learning_rate: float, **kwargs) -> "OptimizerState":
        """Fresh (all-zero) accumulators shaped like the network's parameters."""
        params = net.parameters()
        return cls(
            first_moments=[np.zeros_like(p) for p in params],
            second_moments=[np.zeros_like(p) for p in params],
            learning_rate=learning_rate,
            **kwargs,
        )


def init_network(
    layer_dims: list[int],
    rng: np.random.Generator,
    hidden_activation: str = "relu",
    output_activation: str = "linear",
) -> MlpNetwork:
    """Uniform +-sqrt(6 / (fan_in + fan_out)) weights and zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpNetwork(list(layer_dims), weights, biases, hidden_activation, output_activation)


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Overflow-free logistic function."""
    return np.exp(-np.logaddexp(0.0, -z))


def _activate(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "sigmoid":
        return np.clip(sigmoid(z), PROB_CLAMP, 1.0 - PROB_CLAMP)
    return z


def _activation_grad(kind: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    """d activation / d pre-activation, evaluated elementwise."""
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    if kind == "tanh":
        return 1.0 - a * a
    if kind == "sigmoid":
        # Inside the clipped band this is the logistic slope at the clamp, not zero:
        # -log p losses keep a (1 - a) gradient through saturated outputs.
        return a * (1.0 - a)
    return np.ones_like(z)


def _as_matrix(inputs) -> np.ndarray:
    if isinstance(inputs, Batch):
        inputs = inputs.inputs
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[np.newaxis, :]
    if x.ndim != 2:
        raise ValueError(f"Expected a 2-D input batch, got shape {x.shape}")
    return x


def forward(net: MlpNetwork, batch) -> ActivationTrace:
    """
    Run the affine + activation chain and keep the trace for backward.

    Args:
        net: Network to evaluate
        batch: A Batch or an (n_samples x input_dim) matrix

    Returns:
        ActivationTrace whose `outputs` is (n_samples x output_dim)

    Raises:
        ValueError: If the batch width does not match net.input_dim
    """
    x = _as_matrix(batch)
    if x.shape[1] != net.input_dim:
        raise ValueError(
            f"Input width {x.shape[1]} does not match network input dim {net.input_dim} "
            f"(layer dims {net.layer_dims}, batch shape {x.shape})"
        )
    layer_inputs, pre_activations = [], []
    a = x
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        layer_inputs.append(a)
        z = a @ w.T + b
        pre_activations.append(z)
        kind = net.output_activation if l == net.n_layers - 1 else net.hidden_activation
        a = _activate(kind, z)
    return ActivationTrace(list(net.layer_dims), layer_inputs, pre_activations, a)


def predict(net: MlpNetwork, inputs) -> np.ndarray:
    """Outputs only; safe to call concurrently on a frozen network."""
    return forward(net, inputs).outputs


def backward(net: MlpNetwork, trace: ActivationTrace, output_grad: np.ndarray) -> Gradients:
    """
    Reverse-mode gradients of a scalar loss.

    Args:
        net: The network that produced `trace`
        trace: Result of forward(net, ...)
        output_grad: d loss / d outputs, same shape as trace.outputs

    Returns:
        Gradients for every parameter plus d loss / d inputs

    Raises:
        ValueError: If the trace or output_grad does not match the network
    """
    if trace.layer_dims != net.layer_dims or len(trace.pre_activations) != net.n_layers:
        raise ValueError(
            f"Trace for dims {trace.layer_dims} does not match network dims {net.layer_dims}"
        )
    g = np.asarray(output_grad, dtype=np.float64)
    if g.ndim == 1:
        g = g.reshape(trace.outputs.shape)
    if g.shape != trace.outputs.shape:
        raise ValueError(f"output_grad shape {g.shape} does not match outputs {trace.outputs.shape}")

    grad_w = [None] * net.n_layers
    grad_b = [None] * net.n_layers
    delta = g * _activation_grad(net.output_activation, trace.pre_activations[-1], trace.outputs)
    for l in range(net.n_layers - 1, -1, -1):
        grad_w[l] = delta.T @ trace.layer_inputs[l]
        grad_b[l] = delta.sum(axis=0)
        upstream = delta @ net.weights[l]
        if l > 0:
            delta = upstream * _activation_grad(
                net.hidden_activation, trace.pre_activations[l - 1], trace.layer_inputs[l]
            )
    return Gradients(grad_w, grad_b, upstream)


def _check_nonempty(values: np.ndarray, name: str):
    if values.size == 0:
        raise ValueError(f"{name} must not be empty")


def bce_loss(predictions, targets) -> tuple[float, np.ndarray]:
    """
    Mean binary cross-entropy: -t log p - (1 - t) log(1 - p).

    Returns:
        (loss, d loss / d predictions) with the gradient shaped like predictions
    """
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64).reshape(p.shape)
    _check_nonempty(p, "predictions")
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    n = p.size
    loss = float(-np.mean(t * np.log(p) + (1.0 - t) * np.log1p(-p)))
    grad = (p - t) / (p * (1.0 - p)) / n
    return loss, grad


def generator_loss(disc_outputs_on_fake) -> tuple[float, np.ndarray]:
    """Mean -log D(G(z)) and its gradient w.r.t. the discriminator outputs."""
    p = np.asarray(disc_outputs_on_fake, dtype=np.float64)
    _check_nonempty(p, "disc_outputs_on_fake")
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    n = p.size
    return float(-np.mean(np.log(p))), -1.0 / (p * n)


def squared_error_loss(outputs, targets) -> tuple[float, np.ndarray]:
    """Per-sample squared error summed over output dims, averaged over the batch."""
    o = np.asarray(outputs, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64).reshape(o.shape)
    _check_nonempty(o, "outputs")
    n = o.shape[0] if o.ndim > 1 else 1
    diff = o - t
    return float(np.sum(diff * diff) / n), 2.0 * diff / n


def discriminator_loss(real_outputs, fake_outputs) -> tuple[float, np.ndarray, np.ndarray]:
    """
    bce(D(real), 1) + bce(D(fake), 0).

    Equals 2 ln 2 when the discriminator outputs 0.5 everywhere.

    Returns:
        (loss, gradient w.r.t. real outputs, gradient w.r.t. fake outputs)
    """
    real_loss, real_grad = bce_loss(real_outputs, np.ones_like(np.asarray(real_outputs, dtype=np.float64)))
    fake_loss, fake_grad = bce_loss(fake_outputs, np.zeros_like(np.asarray(fake_outputs, dtype=np.float64)))
    return real_loss + fake_loss, real_grad, fake_grad


def add_gradients(first: Gradients, second: Gradients) -> Gradients:
    """Elementwise sum of two gradient bundles for the same network."""
    return Gradients(
        weights=[a + b for a, b in zip(first.weights, second.weights)],
        biases=[a + b for a, b in zip(first.biases, second.biases)],
    )


def optimizer_step(net: MlpNetwork, grads: Gradients, state: OptimizerState) -> tuple[MlpNetwork, OptimizerState]:
    """
    One adaptive-moment update, applied in place.

    Raises:
        NonFiniteGradientError: If any gradient entry is NaN/Inf (nothing is updated)
        ValueError: If gradient or accumulator shapes do not match the parameters
    """
    params = net.parameters()
    grad_list = grads.parameters()
    if len(grad_list) != len(params) or len(state.first_moments) != len(params):
        raise ValueError("Gradient/optimizer state does not match the network's parameter count")
    for index, (p, g, m) in enumerate(zip(params, grad_list, state.first_moments)):
        if g.shape != p.shape or m.shape != p.shape:
            raise ValueError(f"Layer {index // 2}: gradient shape {g.shape} vs parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(
                f"Non-finite gradient in layer {index // 2} at optimizer step {state.step_count + 1}",
                layer=index // 2,
                step=state.step_count + 1,
            )

    state.step_count += 1
    t = state.step_count
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grad_list, state.first_moments, state.second_moments):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + state.epsilon)
    return net, state


def _loss_and_grad(kind: str, outputs: np.ndarray, targets):
    if kind == "bce":
        return bce_loss(outputs, targets)
    if kind == "generator":
        return generator_loss(outputs)
    if kind == "squared_error":
        return squared_error_loss(outputs, targets)
    raise ValueError(f"Unknown loss kind '{kind}' (expected one of {LOSS_KINDS})")


def _scalar_loss(net: MlpNetwork, batch: Batch, kind: str) -> float:
    return _loss_and_grad(kind, forward(net, batch).outputs, batch.targets)[0]


def gradient_check(net: MlpNetwork, batch: Batch, loss_kind: str, eps: float = 1e-5) -> float:
    """
    Compare backward() against central finite differences.

    Returns:
        max over all parameters of |analytic - numeric| / max(1, |analytic| + |numeric|)
    """
    if not (1e-7 <= eps <= 1e-3):
        raise ValueError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    if loss_kind in ("bce", "generator") and net.output_activation != "sigmoid":
        raise ValueError(f"Loss '{loss_kind}' needs a sigmoid output layer")

    trace = forward(net, batch)
    _, output_grad = _loss_and_grad(loss_kind, trace.outputs, batch.targets)
    analytic = backward(net, trace, output_grad).parameters()

    perturbed = net.copy()
    worst = 0.0
    for param, grad in zip(perturbed.parameters(), analytic):
        flat = param.reshape(-1)
        flat_grad = grad.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + eps
            plus = _scalar_loss(perturbed, batch, loss_kind)
            flat[i] = original - eps
            minus = _scalar_loss(perturbed, batch, loss_kind)
            flat[i] = original
            numeric = (plus - minus) / (2.0 * eps)
            error = abs(flat_grad[i] - numeric) / max(1.0, abs(flat_grad[i]) + abs(numeric))
            worst = max(worst, error)
    return worst


@dataclass
class GradientSweepResult:
    """Outcome of a randomized gradient-check sweep."""

    max_error: float
    per_config: list[tuple[list[int], str, float]] = field(default_factory=list)


def random_gradient_sweep(
    n_configs: int = 20,
    seed: int = 0,
    max_layers: int = 4,
    max_width: int = 64,
    batch_size: int = 4,
    eps: float = 1e-5,
    hidden_activation: str = "tanh",
) -> GradientSweepResult:
    """Gradient-check random networks across the BCE, generator and squared-error losses."""
    rng = np.random.default_rng(seed)
    result = GradientSweepResult(max_error=0.0)
    for index in range(n_configs):
        kind = LOSS_KINDS[index % len(LOSS_KINDS)]
        n_layers = int(rng.integers(1, max_layers + 1))
        dims = [int(d) for d in rng.integers(1, max_width + 1, size=n_layers)]
        dims.append(1 if kind != "squared_error" else int(rng.integers(1, max_width + 1)))
        output = "linear" if kind == "squared_error" else "sigmoid"
        net = init_network(dims, rng, hidden_activation, output)
        for b in net.biases:
            b[:] = rng.normal(0.0, 0.1, size=b.shape)
        inputs = rng.normal(size=(batch_size, dims[0]))
        if kind == "bce":
            targets = rng.integers(0, 2, size=(batch_size, 1)).astype(np.float64)
        elif kind == "squared_error":
            targets = rng.normal(size=(batch_size, dims[-1]))
        else:
            targets = None
        error = gradient_check(net, Batch(inputs, targets), kind, eps)
        result.per_config.append((dims, kind, error))
        result.max_error = max(result.max_error, error)
        logger.debug("gradient check %s %s: %.3e", dims, kind, error)
    return result
