"""Layered networks as random dynamical systems.

A network is an ordered sequence of square affine layers, each followed
by an elementwise activation.  One layer is one time step of the
dynamics

    h = W x + b,    x' = phi(h),

and the end-to-end map is the composition of the layers.  This module
holds the state types, forward evolution, per-layer tangent maps
(Jacobians), deterministic Gaussian network generation, and the JSON
file format.

Conventions fixed here and relied on everywhere else:

* the ReLU derivative at an exactly-zero pre-activation is 0, and such
  events are counted in ``Trajectory.zero_crossings``;
* the tanh layer Jacobian is expressed through the *post-activation*
  state, ``diag(1 - x'^2) W``, so callers pass the layer output;
* weight matrices are square (non-square layers are out of scope).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Literal

import numpy as np

from .rng import make_rng, normals

__all__ = [
    "ActivationKind",
    "AffineLayer",
    "LayeredNetwork",
    "Trajectory",
    "EnsembleSpec",
    "LinearClassifier",
    "DimensionError",
    "NonFiniteError",
    "NetworkFileError",
    "NondifferentiablePointWarning",
    "apply_layer",
    "forward_trajectory",
    "layer_jacobian",
    "jacobian_product",
    "generate_gaussian_network",
    "save_network",
    "load_network",
    "network_to_dict",
    "network_from_dict",
]


class DimensionError(ValueError):
    """Vector or matrix shapes do not match the network dimension."""


class NonFiniteError(ValueError):
    """A computation produced NaN or infinity; the message names where."""


class NetworkFileError(ValueError):
    """A network file is malformed or internally inconsistent."""


class NondifferentiablePointWarning(UserWarning):
    """A ReLU pre-activation hit exactly zero; slope 0 was used."""


class ActivationKind(Enum):
    TANH = "tanh"
    RELU = "relu"
    LINEAR = "linear"


def _as_vector(x, d: int | None = None, name: str = "x") -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"{name} must be a 1-d vector, got shape {v.shape}")
    if d is not None and v.shape[0] != d:
        raise DimensionError(f"{name} has length {v.shape[0]}, expected {d}")
    if not np.all(np.isfinite(v)):
        bad = int(np.flatnonzero(~np.isfinite(v))[0])
        raise NonFiniteError(f"{name}[{bad}] is not finite")
    return v


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class AffineLayer:
    """One step of the dynamics: x -> phi(W x + b)."""

    W: np.ndarray
    b: np.ndarray
    activation: ActivationKind

    def __post_init__(self):
        W = np.array(self.W, dtype=np.float64)
        b = np.array(self.b, dtype=np.float64)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise DimensionError(f"W must be square, got shape {W.shape}")
        if b.shape != (W.shape[0],):
            raise DimensionError(f"b has shape {b.shape}, expected ({W.shape[0]},)")
        if not np.all(np.isfinite(W)):
            raise NonFiniteError("W contains non-finite entries")
        if not np.all(np.isfinite(b)):
            raise NonFiniteError("b contains non-finite entries")
        if not isinstance(self.activation, ActivationKind):
            object.__setattr__(self, "activation", ActivationKind(self.activation))
        object.__setattr__(self, "W", _readonly(W))
        object.__setattr__(self, "b", _readonly(b))

    @property
    def d(self) -> int:
        return self.W.shape[0]


@dataclass(frozen=True)
class LayeredNetwork:
    """Ordered layers sharing one state dimension; depth D = len(layers)."""

    layers: tuple[AffineLayer, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise DimensionError("a network needs at least one layer")
        d = layers[0].d
        for i, layer in enumerate(layers):
            if layer.d != d:
                raise DimensionError(f"layer {i} has dimension {layer.d}, expected {d}")
        object.__setattr__(self, "layers", layers)

    @property
    def d(self) -> int:
        return self.layers[0].d

    @property
    def depth(self) -> int:
        return len(self.layers)


@dataclass(frozen=True)
class Trajectory:
    """States x_0 .. x_D of one forward pass.

    ``zero_crossings`` counts ReLU pre-activations that were exactly
    zero, where the derivative convention (slope 0) could matter.
    """

    states: np.ndarray  # (D+1, d), read-only
    zero_crossings: int

    def __post_init__(self):
        object.__setattr__(self, "states", _readonly(np.asarray(self.states, dtype=np.float64)))

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


@dataclass(frozen=True)
class EnsembleSpec:
    """Gaussian network ensemble: i.i.d. zero-mean weight entries.

    ``entry_variance`` is the per-entry variance; with
    ``scaling="one_over_d"`` the effective entry variance is
    ``entry_variance / d``.  ``bias_variance = 0`` means exactly zero
    biases (no draws are consumed).  Generation is a pure function of
    the spec, see :func:`generate_gaussian_network`.
    """

    d: int
    depth: int
    entry_variance: float
    seed: int
    bias_variance: float = 0.0
    scaling: Literal["raw", "one_over_d"] = "raw"
    activation: ActivationKind = ActivationKind.TANH

    def __post_init__(self):
        if self.d < 1 or self.depth < 1:
            raise DimensionError("d and depth must be >= 1")
        if self.entry_variance < 0 or self.bias_variance < 0:
            raise ValueError("variances must be >= 0")
        if self.scaling not in ("raw", "one_over_d"):
            raise ValueError(f"unknown scaling {self.scaling!r}")
        if not isinstance(self.activation, ActivationKind):
            object.__setattr__(self, "activation", ActivationKind(self.activation))

    @property
    def effective_entry_variance(self) -> float:
        return self.entry_variance / self.d if self.scaling == "one_over_d" else self.entry_variance


@dataclass(frozen=True)
class LinearClassifier:
    """Final decision sign(w . x + b) with a unit-norm w."""

    w: np.ndarray
    b: float

    def __post_init__(self):
        w = np.array(self.w, dtype=np.float64)
        if abs(float(np.linalg.norm(w)) - 1.0) > 1e-12:
            raise ValueError("classifier weight vector must have unit norm (within 1e-12)")
        object.__setattr__(self, "w", _readonly(w))
        object.__setattr__(self, "b", float(self.b))

    def score(self, x: np.ndarray) -> np.ndarray:
        """Signed distance w . x + b; accepts one point or an (N, d) array."""
        return np.asarray(x, dtype=np.float64) @ self.w + self.b

    def decide(self, x: np.ndarray) -> np.ndarray:
        return np.sign(self.score(x))


def _activate(kind: ActivationKind, h: np.ndarray) -> np.ndarray:
    if kind is ActivationKind.TANH:
        return np.tanh(h)
    if kind is ActivationKind.RELU:
        return np.maximum(h, 0.0)
    return h


def apply_layer(layer: AffineLayer, x: np.ndarray) -> np.ndarray:
    """Evaluate phi(W x + b) for a single state vector."""
    x = _as_vector(x, layer.d, "x")
    h = layer.W @ x + layer.b
    y = _activate(layer.activation, h)
    if not np.all(np.isfinite(y)):
        bad = int(np.flatnonzero(~np.isfinite(y))[0])
        raise NonFiniteError(f"layer output coordinate {bad} is not finite")
    return y


def forward_trajectory(net: LayeredNetwork, x0: np.ndarray) -> Trajectory:
    """Run x0 through every layer, recording all intermediate states."""
    x = _as_vector(x0, net.d, "x0")
    states = np.empty((net.depth + 1, net.d))
    states[0] = x
    zero_crossings = 0
    for i, layer in enumerate(net.layers):
        h = layer.W @ x + layer.b
        if layer.activation is ActivationKind.RELU:
            zero_crossings += int(np.count_nonzero(h == 0.0))
        x = _activate(layer.activation, h)
        if not np.all(np.isfinite(x)):
            bad = int(np.flatnonzero(~np.isfinite(x))[0])
            raise NonFiniteError(f"layer {i}: output coordinate {bad} is not finite")
        states[i + 1] = x
    return Trajectory(states=states, zero_crossings=zero_crossings)


def layer_jacobian(layer: AffineLayer, x_out: np.ndarray) -> np.ndarray:
    """Tangent map S(x_out) W of one layer, evaluated at its output.

    For tanh, S = diag(1 - x_out^2); for ReLU, S = diag(1 if x_out > 0
    else 0), which uses slope 0 at the kink (an output of exactly zero
    cannot distinguish a negative pre-activation from the
    nondifferentiable point; forward passes count the latter).
    """
    x_out = _as_vector(x_out, layer.d, "x_out")
    if layer.activation is ActivationKind.TANH:
        return (1.0 - x_out**2)[:, None] * layer.W
    if layer.activation is ActivationKind.RELU:
        return (x_out > 0.0).astype(np.float64)[:, None] * layer.W
    return layer.W


def jacobian_product(net: LayeredNetwork, x0: np.ndarray) -> np.ndarray:
    """Jacobian of the end-to-end map at x0: product of S_i W_i, last layer leftmost."""
    traj = forward_trajectory(net, x0)
    if traj.zero_crossings:
        warnings.warn(
            f"{traj.zero_crossings} ReLU pre-activation(s) hit exactly zero; slope 0 used",
            NondifferentiablePointWarning,
            stacklevel=2,
        )
    J = np.eye(net.d)
    for layer, x_out in zip(net.layers, traj.states[1:]):
        J = layer_jacobian(layer, x_out) @ J
    return J


def generate_gaussian_network(spec: EnsembleSpec) -> LayeredNetwork:
    """Materialize the Gaussian ensemble deterministically from the seed.

    Entries are drawn layer by layer, weights row-major first and then
    biases, from a single Philox/Box-Muller stream keyed by
    ``spec.seed``.  The same spec always yields a bit-identical network.
    """
    rng = make_rng(spec.seed)
    sd_w = math.sqrt(spec.effective_entry_variance)
    sd_b = math.sqrt(spec.bias_variance)
    layers = []
    for _ in range(spec.depth):
        W = normals(rng, (spec.d, spec.d), sd_w)
        b = normals(rng, (spec.d,), sd_b) if spec.bias_variance > 0 else np.zeros(spec.d)
        layers.append(AffineLayer(W=W, b=b, activation=spec.activation))
    return LayeredNetwork(layers=tuple(layers))


def network_to_dict(net: LayeredNetwork) -> dict:
    return {
        "d": net.d,
        "layers": [
            {"W": layer.W.tolist(), "b": layer.b.tolist(), "activation": layer.activation.value}
            for layer in net.layers
        ],
    }


def network_from_dict(data: dict) -> LayeredNetwork:
    if not isinstance(data, dict) or "d" not in data or "layers" not in data:
        raise NetworkFileError("network object must have keys 'd' and 'layers'")
    d = data["d"]
    if not isinstance(d, int) or d < 1:
        raise NetworkFileError(f"'d' must be a positive integer, got {d!r}")
    raw_layers = data["layers"]
    if not isinstance(raw_layers, list) or not raw_layers:
        raise NetworkFileError("'layers' must be a non-empty list")
    layers = []
    for i, entry in enumerate(raw_layers):
        for key in ("W", "b", "activation"):
            if key not in entry:
                raise NetworkFileError(f"layer {i}: missing key {key!r}")
        W = entry["W"]
        if len(W) != d or any(len(row) != d for row in W):
            raise NetworkFileError(f"layer {i}: W must be {d}x{d} (row-major); got ragged or wrong-sized rows")
        if len(entry["b"]) != d:
            raise NetworkFileError(f"layer {i}: b must have length {d}")
        try:
            activation = ActivationKind(entry["activation"])
        except ValueError:
            raise NetworkFileError(f"layer {i}: unknown activation {entry['activation']!r}") from None
        try:
            layers.append(AffineLayer(W=np.array(W, dtype=np.float64), b=np.array(entry["b"], dtype=np.float64), activation=activation))
        except (DimensionError, NonFiniteError, ValueError) as exc:
            raise NetworkFileError(f"layer {i}: {exc}") from None
    return LayeredNetwork(layers=tuple(layers))


def save_network(net: LayeredNetwork, path) -> None:
    """Write the JSON network file (full-precision decimal floats)."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(network_to_dict(net), fh, indent=1)
        fh.write("\n")


def load_network(path) -> LayeredNetwork:
    """Read a JSON network file, validating shapes and values."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise NetworkFileError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}") from None
    try:
        return network_from_dict(data)
    except NetworkFileError as exc:
        raise NetworkFileError(f"{path}: {exc}") from None
