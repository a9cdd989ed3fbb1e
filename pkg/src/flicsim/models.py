"""Models exchanged between clients and the server.

Two families are supported: a bias-free one-dimensional linear regressor
(used by the two-client toy experiments) and a fully-connected softmax
classifier with ReLU hidden layers. Parameters travel as flat vectors so
that aggregation, similarity and attack code never need to know layer
shapes; ``flatten``/``unflatten`` define the canonical ordering (layers in
forward order, each weight matrix row-major, then its bias).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ShapeError

KIND_REGRESSION = "linear-regression-1d"
KIND_CLASSIFIER = "mlp-classifier"


@dataclass(frozen=True)
class ModelSpec:
    """Architecture description; immutable so it can key caches and digests."""

    kind: str
    input_dim: int = 1
    hidden_dims: tuple[int, ...] = ()
    num_classes: int = 1

    def __post_init__(self):
        if self.kind not in (KIND_REGRESSION, KIND_CLASSIFIER):
            raise ShapeError(f"unknown model kind {self.kind!r}")
        if self.kind == KIND_REGRESSION:
            if self.input_dim != 1 or self.hidden_dims or self.num_classes != 1:
                raise ShapeError("linear-regression-1d is a single scalar weight")
        else:
            if self.input_dim < 1 or self.num_classes < 2:
                raise ShapeError("classifier needs input_dim >= 1 and num_classes >= 2")
            if any(h < 1 for h in self.hidden_dims):
                raise ShapeError("hidden layer sizes must be positive")

    def layer_shapes(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) per layer, forward order."""
        if self.kind == KIND_REGRESSION:
            return [(1, 1)]
        dims = [self.input_dim, *self.hidden_dims, self.num_classes]
        return list(zip(dims[:-1], dims[1:]))

    def param_count(self) -> int:
        if self.kind == KIND_REGRESSION:
            return 1
        return sum(fi * fo + fo for fi, fo in self.layer_shapes())

    def digest(self) -> str:
        hid = "x".join(str(h) for h in self.hidden_dims)
        return f"{self.kind}/in{self.input_dim}/h[{hid}]/out{self.num_classes}"


@dataclass(frozen=True)
class ParamVector:
    """A model's parameters as one flat float64 vector.

    ``spec_digest`` ties the vector to the ModelSpec that produced it so a
    mismatched vector is rejected instead of silently misinterpreted.
    """

    values: np.ndarray
    spec_digest: str

    def __len__(self) -> int:
        return self.values.shape[0]


def check_params(spec: ModelSpec, params: ParamVector) -> None:
    if params.spec_digest != spec.digest():
        raise ShapeError(
            f"param vector for {params.spec_digest!r} used with {spec.digest()!r}")
    if params.values.ndim != 1 or params.values.shape[0] != spec.param_count():
        raise ShapeError(
            f"expected {spec.param_count()} parameters, got shape {params.values.shape}")


def init_params(spec: ModelSpec, rng: np.random.Generator) -> ParamVector:
    """Uniform Glorot weights (limit sqrt(6/(fan_in+fan_out))), zero biases."""
    if spec.kind == KIND_REGRESSION:
        limit = np.sqrt(6.0 / 2.0)
        vals = rng.uniform(-limit, limit, size=1)
        return ParamVector(vals.astype(np.float64), spec.digest())
    chunks = []
    for fan_in, fan_out in spec.layer_shapes():
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        chunks.append(rng.uniform(-limit, limit, size=fan_in * fan_out))
        chunks.append(np.zeros(fan_out))
    return ParamVector(np.concatenate(chunks).astype(np.float64), spec.digest())


def unflatten(spec: ModelSpec, params: ParamVector) -> list[np.ndarray]:
    """Flat vector -> [W1, b1, W2, b2, ...] (regression: [w])."""
    check_params(spec, params)
    flat = params.values
    if spec.kind == KIND_REGRESSION:
        return [flat.copy()]
    out = []
    pos = 0
    for fan_in, fan_out in spec.layer_shapes():
        n = fan_in * fan_out
        out.append(flat[pos:pos + n].reshape(fan_in, fan_out).copy())
        pos += n
        out.append(flat[pos:pos + fan_out].copy())
        pos += fan_out
    return out


def flatten(spec: ModelSpec, arrays: list[np.ndarray]) -> ParamVector:
    """Inverse of :func:`unflatten`; round-trips bit-exactly."""
    flat = np.concatenate([a.reshape(-1) for a in arrays]).astype(np.float64)
    if flat.shape[0] != spec.param_count():
        raise ShapeError(
            f"arrays flatten to {flat.shape[0]} values, spec wants {spec.param_count()}")
    return ParamVector(flat, spec.digest())


def _forward_classifier(spec: ModelSpec, flat: np.ndarray, inputs: np.ndarray):
    """Returns (pre-activations per layer, post-activations per layer, logits)."""
    zs, hs = [], [inputs]
    pos = 0
    shapes = spec.layer_shapes()
    for li, (fan_in, fan_out) in enumerate(shapes):
        w = flat[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out)
        pos += fan_in * fan_out
        b = flat[pos:pos + fan_out]
        pos += fan_out
        z = hs[-1] @ w + b
        zs.append(z)
        if li < len(shapes) - 1:
            hs.append(np.maximum(z, 0.0))
        else:
            hs.append(z)
    return zs, hs, hs[-1]


def forward(spec: ModelSpec, params: ParamVector, inputs: np.ndarray) -> np.ndarray:
    """Logits (B, num_classes) for classifiers, predictions (B,) for regression."""
    check_params(spec, params)
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != spec.input_dim:
        raise ShapeError(f"inputs shape {inputs.shape} does not match input_dim "
                         f"{spec.input_dim}")
    if spec.kind == KIND_REGRESSION:
        return inputs[:, 0] * params.values[0]
    _, _, logits = _forward_classifier(spec, params.values, inputs)
    return logits


def loss_and_grad(spec: ModelSpec, params: ParamVector, inputs: np.ndarray,
                  labels: np.ndarray) -> tuple[float, ParamVector]:
    """Mean loss over the batch and its gradient as a flat vector.

    Regression uses mean squared error; the classifier uses mean softmax
    cross-entropy (computed via logsumexp so saturated logits stay finite).
    """
    check_params(spec, params)
    inputs = np.asarray(inputs, dtype=np.float64)
    labels = np.asarray(labels)
    if inputs.shape[0] == 0:
        raise ShapeError("empty batch")
    if inputs.shape[0] != labels.shape[0]:
        raise ShapeError(f"{inputs.shape[0]} inputs vs {labels.shape[0]} labels")

    if spec.kind == KIND_REGRESSION:
        x = inputs[:, 0]
        with np.errstate(over="ignore", invalid="ignore"):
            resid = x * params.values[0] - labels
            loss = float(np.mean(resid ** 2))
            grad = np.array([2.0 * np.mean(resid * x)])
    else:
        n = inputs.shape[0]
        zs, hs, logits = _forward_classifier(spec, params.values, inputs)
        shifted = logits - logits.max(axis=1, keepdims=True)
        lse = np.log(np.exp(shifted).sum(axis=1))
        loss = float(np.mean(lse - shifted[np.arange(n), labels]))
        probs = np.exp(shifted)
        probs /= probs.sum(axis=1, keepdims=True)
        delta = probs
        delta[np.arange(n), labels] -= 1.0
        delta /= n

        shapes = spec.layer_shapes()
        grads: list[np.ndarray | None] = [None] * (2 * len(shapes))
        flat = params.values
        offsets = []
        pos = 0
        for fan_in, fan_out in shapes:
            offsets.append(pos)
            pos += fan_in * fan_out + fan_out
        for li in range(len(shapes) - 1, -1, -1):
            fan_in, fan_out = shapes[li]
            grads[2 * li] = hs[li].T @ delta
            grads[2 * li + 1] = delta.sum(axis=0)
            if li > 0:
                w = flat[offsets[li]:offsets[li] + fan_in * fan_out].reshape(fan_in, fan_out)
                delta = (delta @ w.T) * (zs[li - 1] > 0.0)
        grad = np.concatenate([g.reshape(-1) for g in grads])

    if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite loss or gradient")
    return loss, ParamVector(grad, spec.digest())


def evaluate_accuracy(spec: ModelSpec, params: ParamVector, inputs: np.ndarray,
                      labels: np.ndarray) -> float:
    """Fraction of correct argmax predictions; negative MSE for regression."""
    out = forward(spec, params, inputs)
    if spec.kind == KIND_REGRESSION:
        return -float(np.mean((out - labels) ** 2))
    return float(np.mean(out.argmax(axis=1) == labels))


def client_update(spec: ModelSpec, start: ParamVector, inputs: np.ndarray,
                  labels: np.ndarray, epochs: int, batch_size: int, lr: float,
                  rng: np.random.Generator, on_step=None) -> tuple[ParamVector, int]:
    """Local minibatch SGD from ``start``; returns (delta, n_k).

    The delta is ``start - final`` so the server applies it by subtraction.
    Each epoch reshuffles the local data with ``rng`` and walks consecutive
    batches; a short final batch is still used. Plain SGD, no momentum or
    weight decay. ``on_step`` (if given) is called once per parameter update,
    which makes the step count observable in tests.
    """
    check_params(spec, start)
    n = inputs.shape[0]
    if n == 0:
        raise ShapeError("client has no training samples")
    if epochs < 1 or batch_size < 1:
        raise ShapeError("epochs and batch_size must be >= 1")
    w = start.values.copy()
    moving = ParamVector(w, spec.digest())
    for _ in range(epochs):
        order = rng.permutation(n)
        for lo in range(0, n, batch_size):
            idx = order[lo:lo + batch_size]
            _, grad = loss_and_grad(spec, moving, inputs[idx], labels[idx])
            w -= lr * grad.values
            if on_step is not None:
                on_step()
    delta = start.values - w
    return ParamVector(delta, spec.digest()), n
