"""Designed 2-D networks with provably growing tangents.

Two constructions are realized and verified numerically:

* ``tanh_chaos_run`` pins the state to a circle of radius r < 1 while
  every layer keeps a chosen tangent direction as an eigenvector with
  eigenvalue A > 1.  Each weight matrix solves W [u, x] = [A u, atanh(x')]
  for a target x' on the circle chosen away from the degeneracy locus,
  so the tangent norm grows at least by A (1 - r^2) per layer.

* ``relu_angle_network`` freezes the first ReLU coordinate at x0 with
  gain a > 1 and keeps the second coordinate bounded with periodic
  resets, so the state angle atan(x2 / x1) has a gradient with respect
  to the first input coordinate growing like a^T.

Both emit genuine :class:`~netdyn.core.LayeredNetwork` objects whose
replay through the core module reproduces the construction's states
(the construction records the same floating-point images the forward
pass computes).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ActivationKind, AffineLayer, LayeredNetwork, forward_trajectory

__all__ = [
    "TanhChaosConfig",
    "ReluAngleConfig",
    "TanhChaosRun",
    "DegenerateConfigurationError",
    "tanh_chaos_step",
    "tanh_chaos_run",
    "relu_angle_network",
    "angle_gradient",
]

#: Equispaced circle angles sampled when choosing the next pinned state.
_TARGET_SAMPLES = 64
#: Reject candidate states whose normalized tangent/state determinant is
#: at most this (the degeneracy locus excludes at most six circle points).
_MIN_NORMALIZED_DET = 1e-9
_MAX_CONDITION = 1e12


class DegenerateConfigurationError(RuntimeError):
    """Tangent and state became (numerically) linearly dependent."""


@dataclass(frozen=True)
class TanhChaosConfig:
    """Designed-eigenvalue configuration: growth target A, pinned norm r."""

    A: float
    r: float
    x0: np.ndarray
    u0: np.ndarray
    steps: int

    def __post_init__(self):
        if not self.A > 1:
            raise ValueError("A must be > 1")
        if not 0 < self.r < 1:
            raise ValueError("r must lie in (0, 1)")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        x0 = np.array(self.x0, dtype=np.float64)
        u0 = np.array(self.u0, dtype=np.float64)
        if x0.shape != (2,) or u0.shape != (2,):
            raise ValueError("x0 and u0 must be 2-vectors")
        if abs(float(np.linalg.norm(x0)) - self.r) > 1e-12:
            raise ValueError("|x0| must equal r (within 1e-12)")
        if abs(_det2(u0, x0)) <= _MIN_NORMALIZED_DET:
            raise DegenerateConfigurationError("u0 and x0 must be linearly independent")
        x0.setflags(write=False)
        u0.setflags(write=False)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "u0", u0)

    @staticmethod
    def default(A: float, r: float, steps: int) -> "TanhChaosConfig":
        """Canonical start: x0 = (r, 0), u0 = (0, 1)."""
        return TanhChaosConfig(A=A, r=r, x0=np.array([r, 0.0]), u0=np.array([0.0, 1.0]), steps=steps)


def _det2(a: np.ndarray, b: np.ndarray) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def tanh_chaos_step(x_prev: np.ndarray, u_prev: np.ndarray, config: TanhChaosConfig):
    """One designed layer: returns (layer, x_next, u_next_unnormalized).

    The next state is picked among equispaced points on the circle
    |x| = r, maximizing the normalized determinant of the induced
    (tangent, state) pair; the degeneracy curve meets the circle in at
    most six points, so a valid sample always exists at this resolution.
    ``u_prev`` may be passed normalized; only its direction enters the
    constraints.
    """
    angles = 2.0 * np.pi * np.arange(_TARGET_SAMPLES) / _TARGET_SAMPLES
    candidates = config.r * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    # u induced by each candidate: A diag(1 - x^2) u_prev
    induced = config.A * (1.0 - candidates**2) * u_prev[None, :]
    dets = np.abs(candidates[:, 0] * induced[:, 1] - candidates[:, 1] * induced[:, 0])
    norms = np.linalg.norm(induced, axis=1) * config.r
    quality = dets / norms
    best = int(np.argmax(quality))
    if quality[best] <= _MIN_NORMALIZED_DET:
        raise DegenerateConfigurationError("no circle point keeps the tangent and state independent")
    target = candidates[best]
    if np.any(np.abs(target) >= 1.0 - 1e-12):
        raise DegenerateConfigurationError("target state too close to the tanh saturation boundary")
    B = np.column_stack([u_prev, x_prev])
    if np.linalg.cond(B) > _MAX_CONDITION:
        raise DegenerateConfigurationError(f"tangent/state matrix condition number exceeds {_MAX_CONDITION:.0e}")
    C = np.column_stack([config.A * u_prev, np.arctanh(target)])
    W = C @ np.linalg.inv(B)
    layer = AffineLayer(W=W, b=np.zeros(2), activation=ActivationKind.TANH)
    # Record the same float image the forward pass will compute, so the
    # emitted network replays bit-identically.
    x_next = np.tanh(W @ x_prev)
    u_next = config.A * (1.0 - x_next**2) * u_prev
    return layer, x_next, u_next


@dataclass(frozen=True)
class TanhChaosRun:
    """Assembled network plus the growth diagnostics of the construction.

    ``growth_log[t-1] = log2(|u_t| / |u_0|) / t``; the final entry is
    the measured tangent growth rate, guaranteed at least
    ``log2(A (1 - r^2))`` by the pinned-norm design.
    """

    network: LayeredNetwork
    states: np.ndarray  # (steps + 1, 2)
    growth_log: np.ndarray  # (steps,)

    @property
    def rate(self) -> float:
        return float(self.growth_log[-1])


def tanh_chaos_run(config: TanhChaosConfig) -> TanhChaosRun:
    """Iterate the designed layer construction for ``config.steps`` layers.

    The tangent is renormalized every step with its log2 norm
    accumulated, so arbitrarily long runs cannot overflow.
    """
    x = config.x0.copy()
    u = config.u0 / np.linalg.norm(config.u0)
    layers = []
    states = [x.copy()]
    log_growth = 0.0
    growth_log = np.empty(config.steps)
    for t in range(config.steps):
        layer, x, u_raw = tanh_chaos_step(x, u, config)
        layers.append(layer)
        states.append(x.copy())
        stretch = float(np.linalg.norm(u_raw))
        log_growth += math.log2(stretch)
        u = u_raw / stretch
        growth_log[t] = log_growth / (t + 1)
    return TanhChaosRun(
        network=LayeredNetwork(layers=tuple(layers)),
        states=np.asarray(states),
        growth_log=growth_log,
    )


@dataclass(frozen=True)
class ReluAngleConfig:
    """Frozen-first-coordinate ReLU construction.

    ``a`` is the first-coordinate gain (> 1), ``x0`` the frozen positive
    value, ``t0`` the reset period for the second coordinate, ``T`` the
    number of layers, and ``c_bound`` the bound |W22| must stay under.
    The second coordinate is reset to 0 at t = 1 and every multiple of
    t0 by forcing its pre-activation to -1; between resets it relaxes
    toward x0/2 with contraction ``w22``.
    """

    a: float
    x0: float
    t0: int
    T: int
    c_bound: float = 1.0
    w22: float | None = None
    b2: float | None = None

    def __post_init__(self):
        if not self.a > 1:
            raise ValueError("a must be > 1")
        if not self.x0 > 0:
            raise ValueError("x0 must be > 0")
        if self.t0 < 2:
            raise ValueError("t0 must be >= 2")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if not self.c_bound > 0:
            raise ValueError("c_bound must be > 0")
        w22 = self.w22 if self.w22 is not None else min(0.1, 0.9 * self.c_bound)
        if not 0 <= w22 < min(1.0, self.c_bound):
            raise ValueError("w22 must satisfy 0 <= w22 < min(1, c_bound)")
        b2 = self.b2 if self.b2 is not None else 0.5 * self.x0 * (1.0 - w22)
        if not b2 > 0:
            raise ValueError("b2 must be > 0")
        object.__setattr__(self, "w22", float(w22))
        object.__setattr__(self, "b2", float(b2))

    def reset_times(self) -> list[int]:
        return [t for t in range(1, self.T + 1) if t == 1 or t % self.t0 == 0]


def relu_angle_network(config: ReluAngleConfig) -> LayeredNetwork:
    """Build the 2-D ReLU network of the angle-gradient construction.

    Every layer has W21 = 0 (so the second coordinate never feeds from
    the first, killing dx2(T)/dx1(0) exactly) and W11 = a with
    b1 = (1 - a) x0 (so x1 stays frozen at x0 while its gradient
    compounds to a^T).  Reset layers use W22 = 0, b2 = -1, making the
    second pre-activation -1 regardless of the bounded x2.
    """
    reset = set(config.reset_times())
    layers = []
    for t in range(1, config.T + 1):
        if t in reset:
            W = np.array([[config.a, 0.0], [0.0, 0.0]])
            b = np.array([(1.0 - config.a) * config.x0, -1.0])
        else:
            W = np.array([[config.a, 0.0], [0.0, config.w22]])
            b = np.array([(1.0 - config.a) * config.x0, config.b2])
        layers.append(AffineLayer(W=W, b=b, activation=ActivationKind.RELU))
    return LayeredNetwork(layers=tuple(layers))


def state_angle(state: np.ndarray) -> float:
    """atan(x2 / x1); requires x1 != 0."""
    if state[0] == 0.0:
        raise ZeroDivisionError("state angle undefined: x1 = 0")
    return math.atan(state[1] / state[0])


def angle_gradient(net: LayeredNetwork, x0_vec: np.ndarray, T: int, step: float | None = None) -> float:
    """Central finite difference of the time-T state angle w.r.t. x1(0).

    ``step`` defaults to 1e-7 |x1(0)|.  For steeply growing gradients
    the probe displacement at time T is roughly gain^T * step, so large
    T needs a correspondingly smaller step to stay in the linear regime
    (and to keep the perturbed trajectory away from the x1 = 0 clamp,
    which raises).
    """
    x0_vec = np.asarray(x0_vec, dtype=np.float64)
    if x0_vec.shape != (2,):
        raise ValueError("the angle construction is 2-dimensional")
    if not 1 <= T <= net.depth:
        raise ValueError(f"T must lie in [1, {net.depth}]")
    if step is None:
        step = 1e-7 * abs(x0_vec[0])
    if step <= 0:
        raise ValueError("step must be > 0")
    truncated = LayeredNetwork(layers=net.layers[:T])

    def angle_at(x: np.ndarray) -> float:
        traj = forward_trajectory(truncated, x)
        if np.any(traj.states[1:, 0] <= 0.0):
            raise ZeroDivisionError("perturbed trajectory hit the x1 = 0 clamp; reduce the step")
        return state_angle(traj.final)

    plus = angle_at(x0_vec + np.array([step, 0.0]))
    minus = angle_at(x0_vec - np.array([step, 0.0]))
    return (plus - minus) / (2.0 * step)
