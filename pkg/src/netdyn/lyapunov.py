"""Lyapunov spectra and perturbation-based exponent estimates.

The spectrum is computed by evolving an orthonormal tangent frame with
the per-layer Jacobians and re-orthonormalizing each step by a QR
factorization whose R has a positive diagonal; the base-2 logs of the
diagonal stretches, averaged after a burn-in, converge to the exponents
sorted in descending order.  Topological entropy of the dynamics is the
sum of the positive exponents.

All exponents are per layer and in log base 2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import (
    ActivationKind,
    AffineLayer,
    LayeredNetwork,
    NonFiniteError,
    _activate,
    _as_vector,
    forward_trajectory,
    layer_jacobian,
)
from .rng import make_rng, normals

__all__ = [
    "LyapunovReport",
    "PerturbationEstimate",
    "benettin_spectrum",
    "benettin_from_layers",
    "top_exponent",
    "entropy_from_spectrum",
    "procedure1_estimate",
    "scalar_tanh_lambda1_grid",
]

#: Stretches below this are treated as a collapsed tangent direction.
COLLAPSE_FLOOR = 1e-300


@dataclass(frozen=True)
class LyapunovReport:
    """Spectrum estimate plus the raw per-step log stretches.

    ``spectrum`` is sorted descending; collapsed directions carry the
    sentinel ``-inf``.  ``entropy`` is the sum of the positive entries.
    ``steps_used`` counts the post-burn-in steps that entered the
    average, while ``per_step_log_stretch`` keeps every step.
    """

    spectrum: np.ndarray
    steps_used: int
    per_step_log_stretch: np.ndarray
    entropy: float


@dataclass(frozen=True)
class PerturbationEstimate:
    """Finite-perturbation derivative ratios d_t = |y - y_t| / |dx|.

    ``max_abs`` is the raw estimator (the largest ratio); it has units
    of an end-to-end derivative, not of an exponent.  The companion
    ``log_normalized = log2(max_abs) / D`` is the per-layer exponent
    scale.
    """

    d_values: np.ndarray
    max_abs: float
    log_normalized: float
    perturbation_scale: float


def _burn_in_steps(total: int, fraction: float, minimum: int) -> int:
    if total <= 1:
        return 0
    return min(max(int(fraction * total), minimum), total - 1)


def benettin_from_layers(
    layers: Iterable[AffineLayer],
    x0: np.ndarray,
    *,
    num_vectors: int | None = None,
    initial_frame: np.ndarray | None = None,
    burn_in_fraction: float = 0.1,
    min_burn_in: int = 10,
) -> LyapunovReport:
    """Tangent/QR evolution along an explicit layer stream.

    ``layers`` may be any iterable (a generator of freshly drawn random
    layers realizes the random-dynamical-system limit).  The state is
    advanced through each layer while the tangent frame is multiplied by
    the layer Jacobian evaluated at the new state.
    """
    layers = iter(layers)
    first = next(layers, None)
    if first is None:
        raise ValueError("need at least one layer")
    d = first.d
    x = _as_vector(x0, d, "x0")
    k = num_vectors if num_vectors is not None else (initial_frame.shape[1] if initial_frame is not None else d)
    if initial_frame is not None:
        Q = np.array(initial_frame, dtype=np.float64)
        if Q.shape != (d, k):
            raise ValueError(f"initial frame must be ({d}, {k})")
    else:
        Q = np.eye(d, k)
    stretches = []

    def step(layer: AffineLayer, x, Q):
        # The state is advanced without a finiteness gate: a purely linear
        # (hence state-independent) tangent flow must survive a divergent
        # orbit.  Nonlinear layers do need the state, so they still raise.
        with np.errstate(over="ignore", invalid="ignore"):
            x = _activate(layer.activation, layer.W @ x + layer.b)
        if layer.activation is ActivationKind.LINEAR:
            Z = layer.W @ Q
        else:
            if not np.all(np.isfinite(x)):
                raise NonFiniteError("state diverged during tangent evolution")
            Z = layer_jacobian(layer, x) @ Q
        Q, R = np.linalg.qr(Z)
        sign = np.sign(np.diag(R))
        sign[sign == 0] = 1.0
        Q = Q * sign
        diag = np.abs(np.diag(R))
        with np.errstate(divide="ignore"):
            logs = np.where(diag < COLLAPSE_FLOOR, -np.inf, np.log2(np.maximum(diag, COLLAPSE_FLOOR)))
        stretches.append(logs)
        return x, Q

    x, Q = step(first, x, Q)
    for layer in layers:
        x, Q = step(layer, x, Q)

    per_step = np.asarray(stretches)
    total = per_step.shape[0]
    burn = _burn_in_steps(total, burn_in_fraction, min_burn_in)
    with np.errstate(invalid="ignore"):
        means = per_step[burn:].mean(axis=0)
    means = np.where(np.isnan(means), -np.inf, means)
    spectrum = np.sort(means)[::-1]
    return LyapunovReport(
        spectrum=spectrum,
        steps_used=total - burn,
        per_step_log_stretch=per_step,
        entropy=entropy_from_spectrum(spectrum),
    )


def benettin_spectrum(
    net: LayeredNetwork,
    x0: np.ndarray,
    repeat: int,
    *,
    num_vectors: int | None = None,
    initial_frame: np.ndarray | None = None,
    burn_in_fraction: float = 0.1,
    min_burn_in: int = 10,
) -> LyapunovReport:
    """Full spectrum of the network applied cyclically ``repeat`` times.

    ``repeat`` should be large enough that the total step count
    ``depth * repeat`` reaches the asymptotic average (a few hundred
    steps); pass a stream to :func:`benettin_from_layers` instead for
    non-cyclic, freshly drawn dynamics.
    """
    if repeat < 1:
        raise ValueError("repeat must be >= 1")
    return benettin_from_layers(
        net.layers * repeat,
        x0,
        num_vectors=num_vectors,
        initial_frame=initial_frame,
        burn_in_fraction=burn_in_fraction,
        min_burn_in=min_burn_in,
    )


def top_exponent(
    net: LayeredNetwork,
    x0: np.ndarray,
    repeat: int,
    *,
    initial_vector: np.ndarray | None = None,
    burn_in_fraction: float = 0.1,
    min_burn_in: int = 10,
) -> float:
    """Largest exponent only, via a single renormalized tangent vector.

    The default probe direction has components 1/(i+1): a fixed generic
    vector, so it does not sit in a designed slow subspace the way a
    coordinate axis can (use ``initial_vector`` to override).
    """
    if initial_vector is None:
        initial_vector = 1.0 / np.arange(1.0, net.d + 1.0)
    v = np.asarray(initial_vector, dtype=np.float64).reshape(-1, 1)
    frame = v / np.linalg.norm(v)
    report = benettin_spectrum(
        net,
        x0,
        repeat,
        num_vectors=1,
        initial_frame=frame,
        burn_in_fraction=burn_in_fraction,
        min_burn_in=min_burn_in,
    )
    return float(report.spectrum[0])


def entropy_from_spectrum(spectrum: Sequence[float]) -> float:
    """Sum of the positive exponents (zero if none are positive)."""
    spectrum = np.asarray(spectrum, dtype=np.float64)
    return float(np.sum(np.maximum(spectrum, 0.0)))


def procedure1_estimate(
    net: LayeredNetwork,
    x0: np.ndarray,
    trials: int,
    scale: float = 1e-4,
    *,
    seed: int = 0,
) -> PerturbationEstimate:
    """Random-perturbation derivative ratios of the end-to-end map.

    Each trial perturbs x0 by a random direction of magnitude
    ``scale * |x0|`` (or ``scale`` outright when |x0| = 0), runs both
    points through the network, and records
    ``d_t = |y - y_t| / |x0 - x_t|``.  The reported estimator is the
    maximum ratio; ``log_normalized`` divides its log2 by the depth to
    put it on the per-layer exponent scale.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if scale <= 0:
        raise ValueError("scale must be > 0")
    x0 = _as_vector(x0, net.d, "x0")
    base_norm = float(np.linalg.norm(x0))
    magnitude = scale * base_norm if base_norm > 0 else scale
    rng = make_rng(seed)
    y = forward_trajectory(net, x0).final
    ratios = np.empty(trials)
    for t in range(trials):
        direction = normals(rng, net.d)
        direction /= np.linalg.norm(direction)
        delta = magnitude * direction
        y_t = forward_trajectory(net, x0 + delta).final
        ratios[t] = np.linalg.norm(y - y_t) / np.linalg.norm(delta)
    max_abs = float(np.max(np.abs(ratios)))
    with np.errstate(divide="ignore"):
        log_normalized = float(np.log2(max_abs) / net.depth) if max_abs > 0 else -np.inf
    return PerturbationEstimate(
        d_values=ratios,
        max_abs=max_abs,
        log_normalized=log_normalized,
        perturbation_scale=magnitude,
    )


def scalar_tanh_lambda1_grid(
    a_values: np.ndarray,
    b_values: np.ndarray,
    x0: float,
    steps: int = 1000,
    *,
    burn_in_fraction: float = 0.1,
    min_burn_in: int = 10,
) -> np.ndarray:
    """Top exponent of x -> tanh(a x + b) over an (a, b) grid.

    Vectorized scalar specialization of the tangent evolution: the
    one-dimensional Jacobian at step t is a (1 - x_t^2), so the exponent
    is the burn-in-trimmed average of log2 |a (1 - x_t^2)|.  Returns an
    array of shape (len(a_values), len(b_values)).
    """
    a = np.asarray(a_values, dtype=np.float64)[:, None]
    b = np.asarray(b_values, dtype=np.float64)[None, :]
    if steps < 1:
        raise ValueError("steps must be >= 1")
    burn = _burn_in_steps(steps, burn_in_fraction, min_burn_in)
    x = np.full((a.shape[0], b.shape[1]), float(x0))
    acc = np.zeros_like(x)
    for t in range(steps):
        x = np.tanh(a * x + b)
        if t >= burn:
            with np.errstate(divide="ignore"):
                acc += np.log2(np.abs(a * (1.0 - x**2)))
    return acc / (steps - burn)
