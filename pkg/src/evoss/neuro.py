"""Fixed 7-10-5 sigmoid networks: inference, action choice and self-teaching.

Parameters are stored flat (135 values) so the same vectors can live inside
genomes and be handed to the numba kernels without reshaping.  Layout:

    w1 (10 x 7, row-major) | b1 (10) | w2 (5 x 10, row-major) | b2 (5)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

N_IN = 7
N_HID = 10
N_OUT = 5

W1_OFF = 0
B1_OFF = W1_OFF + N_HID * N_IN
W2_OFF = B1_OFF + N_HID
B2_OFF = W2_OFF + N_OUT * N_HID
N_PARAMS = B2_OFF + N_OUT

LEARNING_RATE = 0.01


def bias_mask() -> np.ndarray:
    """Boolean mask over the flat layout, True at bias positions."""
    mask = np.zeros(N_PARAMS, dtype=bool)
    mask[B1_OFF:W2_OFF] = True
    mask[B2_OFF:] = True
    return mask


@dataclass
class LayerNet:
    w1: np.ndarray  # (10, 7)
    b1: np.ndarray  # (10,)
    w2: np.ndarray  # (5, 10)
    b2: np.ndarray  # (5,)

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=np.float64).reshape(N_HID, N_IN)
        self.b1 = np.asarray(self.b1, dtype=np.float64).reshape(N_HID)
        self.w2 = np.asarray(self.w2, dtype=np.float64).reshape(N_OUT, N_HID)
        self.b2 = np.asarray(self.b2, dtype=np.float64).reshape(N_OUT)

    @classmethod
    def from_flat(cls, params) -> "LayerNet":
        p = np.asarray(params, dtype=np.float64)
        if p.shape != (N_PARAMS,):
            raise ValueError(f"expected {N_PARAMS} parameters, got shape {p.shape}")
        return cls(
            p[W1_OFF:B1_OFF].copy(),
            p[B1_OFF:W2_OFF].copy(),
            p[W2_OFF:B2_OFF].copy(),
            p[B2_OFF:].copy(),
        )

    @classmethod
    def zeros(cls) -> "LayerNet":
        return cls.from_flat(np.zeros(N_PARAMS))

    def flat(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2.ravel(), self.b2])

    def __eq__(self, other):
        if not isinstance(other, LayerNet):
            return NotImplemented
        return bool(np.array_equal(self.flat(), other.flat()))


# ---------------------------------------------------------------------------
# numba kernels over flat parameter vectors
# ---------------------------------------------------------------------------

@njit(cache=True)
def _sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


@njit(cache=True)
def _forward(p, x, hidden, out):
    for j in range(N_HID):
        s = p[B1_OFF + j]
        row = W1_OFF + j * N_IN
        for i in range(N_IN):
            if x[i] != 0.0:
                s += p[row + i] * x[i]
        hidden[j] = _sigmoid(s)
    for k in range(N_OUT):
        s = p[B2_OFF + k]
        row = W2_OFF + k * N_HID
        for j in range(N_HID):
            s += p[row + j] * hidden[j]
        out[k] = _sigmoid(s)


@njit(cache=True)
def _argmax(out):
    best = 0
    for k in range(1, out.shape[0]):
        if out[k] > out[best]:
            best = k
    return best


@njit(cache=True)
def _self_teach(p, x, hidden, out, target, lr, use_bias, d_out, d_hid):
    """One SGD step on 0.5 * sum((out - target)**2), in place.

    ``hidden`` and ``out`` must be the activations of ``p`` on ``x``;
    ``d_out`` and ``d_hid`` are scratch space.
    """
    for k in range(N_OUT):
        d_out[k] = (out[k] - target[k]) * out[k] * (1.0 - out[k])
    for j in range(N_HID):
        s = 0.0
        for k in range(N_OUT):
            s += p[W2_OFF + k * N_HID + j] * d_out[k]
        d_hid[j] = s * hidden[j] * (1.0 - hidden[j])
    for k in range(N_OUT):
        row = W2_OFF + k * N_HID
        for j in range(N_HID):
            p[row + j] -= lr * d_out[k] * hidden[j]
        if use_bias:
            p[B2_OFF + k] -= lr * d_out[k]
    for j in range(N_HID):
        row = W1_OFF + j * N_IN
        for i in range(N_IN):
            if x[i] != 0.0:
                p[row + i] -= lr * d_hid[j] * x[i]
        if use_bias:
            p[B1_OFF + j] -= lr * d_hid[j]


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------

def sigmoid(x: float) -> float:
    return _sigmoid(float(x))


def forward(net: LayerNet, inputs) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(hidden, output)`` activations for one input vector."""
    x = np.asarray(inputs, dtype=np.float64)
    if x.shape != (N_IN,):
        raise ValueError(f"expected {N_IN} inputs, got shape {x.shape}")
    hidden = np.empty(N_HID)
    out = np.empty(N_OUT)
    _forward(net.flat(), x, hidden, out)
    return hidden, out


def select_action(output) -> int:
    """Index of the largest activation; ties go to the lowest index."""
    return int(_argmax(np.asarray(output, dtype=np.float64)))


def self_teach(action_net: LayerNet, inputs, target, learning_rate: float = LEARNING_RATE,
               use_bias: bool = True) -> LayerNet:
    """Move ``action_net`` one gradient step towards ``target`` on ``inputs``.

    The target is treated as a constant, so nothing upstream of it is touched.
    Returns a new net; the argument is left unchanged.
    """
    if learning_rate <= 0:
        raise ValueError("learning_rate must be positive")
    x = np.asarray(inputs, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    p = action_net.flat()
    hidden = np.empty(N_HID)
    out = np.empty(N_OUT)
    _forward(p, x, hidden, out)
    _self_teach(p, x, hidden, out, t, float(learning_rate), bool(use_bias),
                np.empty(N_OUT), np.empty(N_HID))
    return LayerNet.from_flat(p)


def squared_error(net: LayerNet, inputs, target) -> float:
    _, out = forward(net, inputs)
    diff = out - np.asarray(target, dtype=np.float64)
    return 0.5 * float(diff @ diff)


def loss_gradient(net: LayerNet, inputs, target, use_bias: bool = True) -> np.ndarray:
    """Flat gradient of the self-teaching loss, read off a unit-rate update step."""
    p = net.flat()
    return p - self_teach(net, inputs, target, 1.0, use_bias).flat()
