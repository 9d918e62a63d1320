"""Encoder/classifier networks with hand-written backward passes.

The encoder is a small MLP ``X -> Z`` and the classifier a linear layer
followed by a softmax. Gradients are derived by hand; ``tests/test_model.py``
checks each against central finite differences.
"""

from dataclasses import dataclass

import numpy as np

CHECKPOINT_MAGIC = "sida-checkpoint"
CHECKPOINT_VERSION = 1

_ACTIVATIONS = {
    "tanh": (np.tanh, lambda h: 1.0 - h * h),
    "linear": (lambda a: a, lambda h: np.ones_like(h)),
    "relu": (lambda a: np.maximum(a, 0.0), lambda h: (h > 0).astype(float)),
}


@dataclass
class EncoderParams:
    weights: list
    biases: list
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        for k in range(1, len(self.weights)):
            if self.weights[k].shape[0] != self.weights[k - 1].shape[1]:
                raise ValueError(f"layer {k} input width does not match layer {k - 1} output")
        for W, b in zip(self.weights, self.biases):
            if b.shape != (W.shape[1],):
                raise ValueError("bias shape does not match layer width")

    @property
    def in_dim(self):
        return self.weights[0].shape[0]

    @property
    def out_dim(self):
        return self.weights[-1].shape[1]

    def tensors(self):
        return [*self.weights, *self.biases]


@dataclass
class ClassifierParams:
    weight: np.ndarray
    bias: np.ndarray

    def tensors(self):
        return [self.weight, self.bias]


@dataclass
class LrSchedule:
    eta0: float
    a: float = 10.0
    b: float = 0.75

    def __post_init__(self):
        if self.eta0 <= 0 or self.a < 0 or self.b < 0:
            raise ValueError("need eta0 > 0, a >= 0, b >= 0")


@dataclass
class OptimizerState:
    buffers: list
    momentum: float = 0.9
    weight_decay: float = 5e-4

    @classmethod
    def zeros_like(cls, tensors, momentum=0.9, weight_decay=5e-4):
        return cls([np.zeros_like(t) for t in tensors], momentum, weight_decay)


def init_encoder(in_dim, widths, rng, activation="tanh"):
    """Layers ``in_dim -> widths[0] -> ... -> widths[-1]``, U(+-1/sqrt(fan_in)) init."""
    weights, biases = [], []
    fan_in = in_dim
    for w in widths:
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, w)))
        biases.append(rng.uniform(-bound, bound, size=w))
        fan_in = w
    return EncoderParams(weights, biases, activation)


def init_classifier(in_dim, n_classes, rng):
    bound = 1.0 / np.sqrt(in_dim)
    return ClassifierParams(
        rng.uniform(-bound, bound, size=(in_dim, n_classes)),
        rng.uniform(-bound, bound, size=n_classes),
    )


def encode_forward(params, X):
    """Return ``(Z, cache)``; the activation is applied after every layer."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != params.in_dim:
        raise ValueError(f"X has {X.shape[1]} columns, encoder expects {params.in_dim}")
    act, _ = _ACTIVATIONS[params.activation]
    hs = [X]
    h = X
    for W, b in zip(params.weights, params.biases):
        h = act(h @ W + b)
        hs.append(h)
    return h, hs


def encode_backward(params, cache, dZ):
    """Gradients of a scalar loss w.r.t. every encoder tensor, given dL/dZ.

    Returns ``(dweights, dbiases, dX)``.
    """
    _, dact = _ACTIVATIONS[params.activation]
    n_layers = len(params.weights)
    dW = [None] * n_layers
    db = [None] * n_layers
    g = dZ
    for k in range(n_layers - 1, -1, -1):
        g = g * dact(cache[k + 1])
        dW[k] = cache[k].T @ g
        db[k] = g.sum(axis=0)
        g = g @ params.weights[k].T
    return dW, db, g


def softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def classifier_forward(params, Z):
    Z = np.atleast_2d(Z)
    if Z.shape[1] != params.weight.shape[0]:
        raise ValueError(f"Z has width {Z.shape[1]}, classifier expects {params.weight.shape[0]}")
    logits = Z @ params.weight + params.bias
    return logits, softmax(logits)


def classifier_backward(params, Z, dlogits):
    """Returns ``(dweight, dbias, dZ)``."""
    return Z.T @ dlogits, dlogits.sum(axis=0), dlogits @ params.weight.T


def classification_loss(probabilities, labels):
    """Mean cross-entropy and its gradient w.r.t. the logits.

    With class-balanced batches the plain mean equals the class-averaged
    expectation of ``-log p(y)``.
    """
    p = np.asarray(probabilities, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n, k = p.shape
    if labels.shape != (n,) or labels.min() < 0 or labels.max() >= k:
        raise ValueError("labels must be a length-n vector in [0, n_classes)")
    picked = p[np.arange(n), labels]
    loss = -np.mean(np.log(np.maximum(picked, np.finfo(float).tiny)))
    grad = p.copy()
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


def auxiliary_loss(probabilities, W):
    """Squared-error pseudo-label loss weighted by the surrogate matrix.

    ``loss = (1/n_Y) * sum_y sum_i W[i, y] * (1 - p[i, y])**2``. The gradient
    is returned w.r.t. the logits that produced ``probabilities``.
    """
    p = np.asarray(probabilities, dtype=float)
    W = np.asarray(W, dtype=float)
    if p.shape != W.shape:
        raise ValueError(f"probabilities {p.shape} and W {W.shape} differ in shape")
    k = p.shape[1]
    resid = 1.0 - p
    loss = float(np.sum(W * resid * resid)) / k
    dp = -2.0 * W * resid / k
    dlogits = p * (dp - np.sum(dp * p, axis=1, keepdims=True))
    return loss, dlogits


def sgd_step(params, grads, state, lr):
    """In-place momentum SGD with coupled weight decay.

    ``buf = momentum * buf + grad + wd * param``; ``param -= lr * buf``.
    ``params``, ``grads`` and ``state.buffers`` are parallel lists of arrays.
    """
    if not (len(params) == len(grads) == len(state.buffers)):
        raise ValueError("params, grads and buffers must have the same length")
    for p, g, buf in zip(params, grads, state.buffers):
        if p.shape != g.shape or p.shape != buf.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}, buffer {buf.shape}")
        buf *= state.momentum
        buf += g
        if state.weight_decay:
            buf += state.weight_decay * p
        p -= lr * buf
    return params, state


def lr_at(schedule, p):
    """Annealed learning rate ``eta0 / (1 + a*p)**b`` at progress ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"progress must be in [0, 1], got {p}")
    return schedule.eta0 / (1.0 + schedule.a * p) ** schedule.b


def predict(encoder, classifier, X):
    Z, _ = encode_forward(encoder, X)
    _, probs = classifier_forward(classifier, Z)
    return np.argmax(probs, axis=1)


def _write_array(lines, tag, a):
    lines.append(f"{tag} {' '.join(str(s) for s in a.shape)}")
    for row in np.atleast_2d(a):
        lines.append(" ".join(repr(float(v)) for v in row))


def save_checkpoint(path, encoder, classifier):
    """Write a plain-text checkpoint that reloads bit-for-bit."""
    lines = [
        f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}",
        f"activation {encoder.activation}",
        f"layers {len(encoder.weights)}",
    ]
    for W, b in zip(encoder.weights, encoder.biases):
        _write_array(lines, "weight", W)
        _write_array(lines, "bias", b)
    _write_array(lines, "classifier_weight", classifier.weight)
    _write_array(lines, "classifier_bias", classifier.bias)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    pos = 0

    def take():
        nonlocal pos
        if pos >= len(lines):
            raise ValueError(f"{path}: truncated checkpoint")
        pos += 1
        return lines[pos - 1]

    def read_array(tag):
        head = take().split()
        if not head or head[0] != tag:
            raise ValueError(f"{path}: expected {tag!r} at line {pos}")
        shape = tuple(int(s) for s in head[1:])
        rows = shape[0] if len(shape) == 2 else 1
        data = [[float(v) for v in take().split()] for _ in range(rows)]
        return np.array(data).reshape(shape)

    magic = take().split()
    if len(magic) != 2 or magic[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    if int(magic[1]) != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {magic[1]}")
    activation = take().split()[1]
    n_layers = int(take().split()[1])
    weights, biases = [], []
    for _ in range(n_layers):
        weights.append(read_array("weight"))
        biases.append(read_array("bias"))
    encoder = EncoderParams(weights, biases, activation)
    classifier = ClassifierParams(read_array("classifier_weight"), read_array("classifier_bias"))
    return encoder, classifier
