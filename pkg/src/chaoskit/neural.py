"""Self-contained neural toolkit: GRU cell, dense layers, variational
recurrent dropout, losses, exact gradients, and the Adam optimizer.

Everything runs in float64.  Inference uses plain numpy; training builds a
tape (see ``autodiff``) whose reverse pass yields gradients that are exact
up to round-off, checked against central finite differences in the tests.

Gate convention: h' = (1 - z) * h + z * h_tilde, with the reset gate
applied inside the candidate term.  Two sign conventions exist in the
wild; this one is fixed here and relied on by the tests.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from . import autodiff as ad
from .dynsys import read_manifest_payload, write_manifest_payload
from .errors import FormatError, NumericalError, ShapeError

ACTIVATIONS = ("relu", "identity", "sigmoid")


@dataclass
class GRUWeights:
    """Input/hidden matrices and biases of one GRU cell."""

    W_z: np.ndarray
    W_r: np.ndarray
    W_h: np.ndarray
    U_z: np.ndarray
    U_r: np.ndarray
    U_h: np.ndarray
    b_z: np.ndarray
    b_r: np.ndarray
    b_h: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.W_z.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_z.shape[1]


@dataclass
class DenseWeights:
    """One affine layer with an activation tag."""

    W: np.ndarray
    b: np.ndarray
    activation: str = "identity"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


def glorot_uniform(rng: np.random.Generator, n_out: int, n_in: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-bound, bound, size=(n_out, n_in))


def init_gru(input_size: int, hidden_size: int, rng: np.random.Generator) -> GRUWeights:
    h, i = hidden_size, input_size
    return GRUWeights(
        W_z=glorot_uniform(rng, h, i), W_r=glorot_uniform(rng, h, i),
        W_h=glorot_uniform(rng, h, i),
        U_z=glorot_uniform(rng, h, h), U_r=glorot_uniform(rng, h, h),
        U_h=glorot_uniform(rng, h, h),
        b_z=np.zeros(h), b_r=np.zeros(h), b_h=np.zeros(h),
    )


def init_dense(input_size: int, output_size: int, activation: str,
               rng: np.random.Generator) -> DenseWeights:
    return DenseWeights(W=glorot_uniform(rng, output_size, input_size),
                        b=np.zeros(output_size), activation=activation)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def gru_cell(x: np.ndarray, h: np.ndarray, w: GRUWeights,
             drop_mask: Optional[np.ndarray] = None) -> np.ndarray:
    """One GRU update.  ``drop_mask`` (inverted-dropout scaling) gates the
    hidden state entering the candidate term only."""
    x = np.asarray(x, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if x.shape[-1] != w.input_size or h.shape[-1] != w.hidden_size:
        raise ShapeError(
            f"gru_cell got x{x.shape}, h{h.shape} for weights "
            f"({w.hidden_size}, {w.input_size})")
    z = _sigmoid(x @ w.W_z.T + h @ w.U_z.T + w.b_z)
    r = _sigmoid(x @ w.W_r.T + h @ w.U_r.T + w.b_r)
    hd = h * drop_mask if drop_mask is not None else h
    h_tilde = np.tanh(x @ w.W_h.T + (r * hd) @ w.U_h.T + w.b_h)
    return (1.0 - z) * h + z * h_tilde


def dense_forward(x: np.ndarray, w: DenseWeights) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != w.W.shape[1]:
        raise ShapeError(f"dense got input width {x.shape[-1]} for weight {w.W.shape}")
    y = x @ w.W.T + w.b
    if w.activation == "relu":
        return np.maximum(y, 0.0)
    if w.activation == "sigmoid":
        return _sigmoid(y)
    return y


def make_recurrent_dropout_mask(hidden_size: int, p: float,
                                rng: np.random.Generator) -> np.ndarray:
    """One variational mask, reused at every step of the owning sequence.

    Entries are 0 with probability p, else 1/(1-p), so the masked hidden
    state is expectation-preserving.  Use no mask at inference.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"drop probability must be in [0, 1), got {p}")
    if p == 0.0:
        return np.ones(hidden_size)
    keep = rng.random(hidden_size) >= p
    return keep / (1.0 - p)


# ---------------------------------------------------------------------------
# Tape-side building blocks (batched rows).
# ---------------------------------------------------------------------------


def gru_cell_t(x: ad.Tensor, h: ad.Tensor, w: Dict[str, ad.Tensor],
               drop_mask: Optional[ad.Tensor] = None, prefix: str = "gru.") -> ad.Tensor:
    z = ad.sigmoid(ad.linear(x, w[prefix + "W_z"], w[prefix + "b_z"])
                   + ad.linear(h, w[prefix + "U_z"]))
    r = ad.sigmoid(ad.linear(x, w[prefix + "W_r"], w[prefix + "b_r"])
                   + ad.linear(h, w[prefix + "U_r"]))
    hd = h * drop_mask if drop_mask is not None else h
    h_tilde = ad.tanh(ad.linear(x, w[prefix + "W_h"], w[prefix + "b_h"])
                      + ad.linear(r * hd, w[prefix + "U_h"]))
    return h + z * (h_tilde - h)


def dense_t(x: ad.Tensor, w: Dict[str, ad.Tensor], prefix: str,
            activation: str) -> ad.Tensor:
    y = ad.linear(x, w[prefix + "W"], w[prefix + "b"])
    if activation == "relu":
        return ad.relu(y)
    if activation == "sigmoid":
        return ad.sigmoid(y)
    return y


def gru_param_dict(w: GRUWeights, prefix: str = "gru.") -> Dict[str, np.ndarray]:
    return {prefix + name: getattr(w, name)
            for name in ("W_z", "W_r", "W_h", "U_z", "U_r", "U_h", "b_z", "b_r", "b_h")}


def gru_from_params(params: Dict[str, np.ndarray], prefix: str = "gru.") -> GRUWeights:
    return GRUWeights(**{name: params[prefix + name]
                         for name in ("W_z", "W_r", "W_h", "U_z", "U_r", "U_h",
                                      "b_z", "b_r", "b_h")})


def dense_param_dict(w: DenseWeights, prefix: str) -> Dict[str, np.ndarray]:
    return {prefix + "W": w.W, prefix + "b": w.b}


def dense_from_params(params: Dict[str, np.ndarray], prefix: str,
                      activation: str) -> DenseWeights:
    return DenseWeights(W=params[prefix + "W"], b=params[prefix + "b"],
                        activation=activation)


# ---------------------------------------------------------------------------
# Gradients and the optimizer.
# ---------------------------------------------------------------------------


def compute_gradients(loss_fn: Callable[[Dict[str, ad.Tensor]], ad.Tensor],
                      params: Dict[str, np.ndarray],
                      weight_decay: float = 0.0):
    """Exact gradients of loss_fn(params) [+ weight_decay/2 * ||matrices||^2].

    ``loss_fn`` receives a dict of parameter Tensors and returns the scalar
    loss Tensor; reverse accumulation sums shared-parameter gradients over
    every usage site.  The quadratic penalty's contribution is added in
    closed form (weight_decay * theta, matrices only, never biases).
    Raises NumericalError naming the first parameter with a non-finite
    gradient.
    """
    tensors = {name: ad.Tensor(value) for name, value in params.items()}
    loss = loss_fn(tensors)
    if not np.isfinite(loss.data):
        raise NumericalError("non-finite loss", param="<loss>")
    ad.backward(loss)
    grads: Dict[str, np.ndarray] = {}
    for name, t in tensors.items():
        g = t.grad if t.grad is not None else np.zeros_like(t.data)
        if weight_decay > 0.0 and t.data.ndim >= 2:
            g = g + weight_decay * t.data
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for {name}", param=name)
        grads[name] = g
    loss_value = float(loss.data)
    if weight_decay > 0.0:
        loss_value += 0.5 * weight_decay * sum(
            float(np.sum(v * v)) for v in params.values() if v.ndim >= 2)
    return loss_value, grads


@dataclass
class AdamState:
    """Per-parameter moment estimates plus hyperparameters."""

    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    t: int
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    @classmethod
    def init(cls, params: Dict[str, np.ndarray], lr: float,
             weight_decay: float = 0.0, beta1: float = 0.9,
             beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(m={k: np.zeros_like(p) for k, p in params.items()},
                   v={k: np.zeros_like(p) for k, p in params.items()},
                   t=0, lr=lr, beta1=beta1, beta2=beta2, eps=eps,
                   weight_decay=weight_decay)


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray],
              state: AdamState) -> None:
    """One Adam update, in place.

    ``state.weight_decay`` adds the L2 penalty gradient (matrices only) so
    callers pass pure data-loss gradients.
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} != param shape {p.shape} for {name}")
        if state.weight_decay > 0.0 and p.ndim >= 2:
            g = g + state.weight_decay * p
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** state.t)
        v_hat = v / (1.0 - b2 ** state.t)
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


# ---------------------------------------------------------------------------
# Checkpoints: one-line JSON manifest + little-endian float64 blob in
# manifest name order.
# ---------------------------------------------------------------------------


def save_weights(path, params: Dict[str, np.ndarray], meta: Optional[dict] = None) -> None:
    names = list(params.keys())
    manifest = {
        "format": "chaoskit-weights",
        "version": 1,
        "names": names,
        "shapes": {name: list(params[name].shape) for name in names},
        "meta": meta or {},
    }
    payload = b"".join(np.ascontiguousarray(params[n], dtype="<f8").tobytes()
                       for n in names)
    write_manifest_payload(path, manifest, payload)


def load_weights(path):
    manifest, payload = read_manifest_payload(path)
    if manifest.get("format") != "chaoskit-weights":
        raise FormatError(f"{path}: not a weights file")
    params: Dict[str, np.ndarray] = {}
    offset = 0
    for name in manifest["names"]:
        shape = tuple(manifest["shapes"][name])
        count = int(np.prod(shape)) if shape else 1
        chunk = payload[offset:offset + 8 * count]
        if len(chunk) != 8 * count:
            raise FormatError(f"{path}: payload too short for {name}")
        params[name] = np.frombuffer(chunk, dtype="<f8").astype(np.float64).reshape(shape)
        offset += 8 * count
    if offset != len(payload):
        raise FormatError(f"{path}: {len(payload) - offset} trailing payload bytes")
    return params, manifest.get("meta", {})
