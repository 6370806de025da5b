"""Brute-force orbit-counting entropy estimators on compact boxes.

Orbits are compared in the max-over-time metric
m^n(x, y) = max_{1 <= t <= n} |T^t x - T^t y|, computed on a regular
grid of starting points.  The comparison starts at time 1 (the first
image), so fully collapsing dynamics count a single orbit; the time-0
term of the textbook metric would only add a map-independent offset
that vanishes in the growth rate.  Two counts are produced:

* ``spanning_count``: size of a greedy cover of all grid orbits by open
  m^n-balls of radius epsilon (an upper bound on the discretized
  minimal cover);
* ``separated_count``: size of the greedy lexicographic packing at
  pairwise m^n distance >= epsilon (a lower bound on the discretized
  maximal packing).

The packing produced by the lexicographic scan is itself a cover by
open epsilon-balls, and the reported spanning count never exceeds it,
so ``separated_count >= spanning_count`` holds by construction.  True
minimal covers / maximal packings are NP-hard set problems; these
greedy values are bounds, not optima.

log2(count) / n is the finite-resolution entropy estimate; the n -> inf
and epsilon -> 0 limits of the definitions are replaced by tables over
finite (n, epsilon), which the CLI emits for inspection.  Unbounded
dynamics (ReLU or linear layers) are compactified by clipping orbits to
the analysis box; clipping events are counted so output can flag the
surrogate.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import ActivationKind, AffineLayer, LayeredNetwork

__all__ = [
    "OrbitSet",
    "EnsemblePathSet",
    "GridSizeError",
    "build_orbits",
    "grid_points",
    "orbit_distance_matrix",
    "spanning_count",
    "separated_count",
    "ensemble_paths",
    "ensemble_path_count",
    "entropy_table",
]

MAX_GRID_POINTS = 1_000_000


class GridSizeError(ValueError):
    """The requested grid would be too large to enumerate."""


@dataclass(frozen=True)
class OrbitSet:
    """Grid orbits of one system over a finite horizon.

    ``orbits`` has shape (N, n, d) holding times 1 .. n for each of the
    N grid starting points (lexicographic order).  ``clipped_states``
    counts state components that were clamped to the box, flagging the
    compactification surrogate for unbounded dynamics.
    """

    initial_points: np.ndarray
    orbits: np.ndarray
    horizon: int
    clipped_states: int


def grid_points(box: Sequence[tuple[float, float]], grid_step: float) -> np.ndarray:
    """Regular grid over the box, flattened in lexicographic order."""
    if grid_step <= 0:
        raise ValueError("grid_step must be > 0")
    axes = []
    total = 1
    for lo, hi in box:
        if hi < lo:
            raise ValueError(f"box interval ({lo}, {hi}) is empty")
        count = int(np.floor((hi - lo) / grid_step + 1e-9)) + 1
        axes.append(lo + grid_step * np.arange(count))
        total *= count
        if total > MAX_GRID_POINTS:
            raise GridSizeError(f"grid would have {total}+ points (limit {MAX_GRID_POINTS})")
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _system_steps(system, n: int) -> list[Callable[[np.ndarray], np.ndarray]]:
    """Normalize a system into per-step maps acting on (N, d) arrays."""

    def layer_map(layer: AffineLayer):
        def apply(points: np.ndarray) -> np.ndarray:
            h = points @ layer.W.T + layer.b
            if layer.activation is ActivationKind.TANH:
                return np.tanh(h)
            if layer.activation is ActivationKind.RELU:
                return np.maximum(h, 0.0)
            return h

        return apply

    if isinstance(system, LayeredNetwork):
        maps = [layer_map(layer) for layer in system.layers]
        return [maps[t % len(maps)] for t in range(n)]
    if callable(system):
        return [system] * n
    steps = list(system)
    if len(steps) < n:
        raise ValueError(f"system supplies {len(steps)} steps, horizon {n} needs {n}")
    return [layer_map(s) if isinstance(s, AffineLayer) else s for s in steps[:n]]


def _needs_clipping(system) -> bool:
    if isinstance(system, LayeredNetwork):
        return any(layer.activation is not ActivationKind.TANH for layer in system.layers)
    return False


def build_orbits(
    system,
    box: Sequence[tuple[float, float]],
    grid_step: float,
    n: int,
    *,
    clip: bool | None = None,
) -> OrbitSet:
    """Evolve every grid point of the box for n time steps.

    ``system`` may be a LayeredNetwork (layers applied cyclically), a
    vectorized callable, or a sequence of per-step maps / layers.
    ``clip=None`` clips exactly when the system has ReLU or linear
    layers (tanh dynamics are already confined).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    points = grid_points(box, grid_step)
    if clip is None:
        clip = _needs_clipping(system)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    orbits = np.empty((points.shape[0], n, points.shape[1]))
    clipped = 0
    state = points
    for t, step in enumerate(_system_steps(system, n)):
        state = step(state)
        if clip:
            clamped = np.clip(state, lo, hi)
            clipped += int(np.count_nonzero(clamped != state))
            state = clamped
        orbits[:, t] = state
    return OrbitSet(initial_points=points, orbits=orbits, horizon=n, clipped_states=clipped)


def _max_time_dists(rows: np.ndarray, others: np.ndarray) -> np.ndarray:
    """m^n distances, shape (len(rows), len(others))."""
    out = np.zeros((rows.shape[0], others.shape[0]))
    for t in range(rows.shape[1]):
        diff = rows[:, None, t, :] - others[None, :, t, :]
        np.maximum(out, np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)), out=out)
    return out


def orbit_distance_matrix(orbits: np.ndarray, block: int = 256) -> np.ndarray:
    """Full m^n distance matrix (N, N); symmetric, zero diagonal."""
    N = orbits.shape[0]
    out = np.empty((N, N))
    for start in range(0, N, block):
        out[start : start + block] = _max_time_dists(orbits[start : start + block], orbits)
    return out


_MAX_NEIGHBOR_PAIRS = 50_000_000


def _neighbor_lists(orbits: np.ndarray, epsilon: float) -> list[np.ndarray]:
    """For each orbit, the sorted indices at m^n distance strictly below epsilon.

    Small instances use dense blocks; larger ones prefilter candidate
    pairs with a KD-tree on the single time slice of widest spread
    (each per-time distance lower-bounds m^n) and then verify the full
    metric on the surviving pairs.
    """
    N = orbits.shape[0]
    if N <= 2048:
        lists: list[np.ndarray] = []
        for start in range(0, N, 256):
            dists = _max_time_dists(orbits[start : start + 256], orbits)
            for r in range(dists.shape[0]):
                lists.append(np.flatnonzero(dists[r] < epsilon))
        return lists
    from scipy.spatial import cKDTree

    spread_by_time = orbits.var(axis=0).sum(axis=1)
    t_star = int(np.argmax(spread_by_time))
    pairs = cKDTree(orbits[:, t_star, :]).query_pairs(epsilon, output_type="ndarray")
    if pairs.shape[0] > _MAX_NEIGHBOR_PAIRS:
        raise GridSizeError(
            f"{pairs.shape[0]} candidate orbit pairs within epsilon (limit {_MAX_NEIGHBOR_PAIRS}); "
            "refine epsilon or coarsen the grid"
        )
    keep_chunks = []
    for start in range(0, pairs.shape[0], 200_000):
        chunk = pairs[start : start + 200_000]
        diff = orbits[chunk[:, 0]] - orbits[chunk[:, 1]]
        dist = np.sqrt(np.einsum("pnd,pnd->pn", diff, diff)).max(axis=1)
        keep_chunks.append(chunk[dist < epsilon])
    kept = np.concatenate(keep_chunks) if keep_chunks else np.empty((0, 2), dtype=np.int64)
    directed = np.concatenate([kept, kept[:, ::-1]]) if kept.size else kept
    order = np.lexsort((directed[:, 1], directed[:, 0])) if directed.size else []
    directed = directed[order] if directed.size else directed.reshape(0, 2)
    starts = np.searchsorted(directed[:, 0], np.arange(N))
    ends = np.searchsorted(directed[:, 0], np.arange(N) + 1)
    return [np.concatenate(([i], directed[starts[i] : ends[i], 1])) for i in range(N)]


def _packing_scan(orbits: np.ndarray, epsilon: float) -> list[int]:
    """Adjacency-free lexicographic packing (O(N) memory).

    Tracks the running minimum m^n distance to the kept set; one
    vectorized pass over all orbits per kept center.
    """
    N = orbits.shape[0]
    min_dist = np.full(N, np.inf)
    chosen: list[int] = []
    pos = 0
    while pos < N:
        ahead = np.flatnonzero(min_dist[pos:] >= epsilon)
        if ahead.size == 0:
            break
        pos += int(ahead[0])
        chosen.append(pos)
        np.minimum(min_dist, _max_time_dists(orbits[pos : pos + 1], orbits)[0], out=min_dist)
        pos += 1
    return chosen


def _span_sep_counts(orbits: np.ndarray, epsilon: float) -> tuple[int, int]:
    """(spanning, separated) greedy counts for one orbit set.

    When the neighbor structure is too dense to materialize, both counts
    fall back to the packing scan: the lexicographic packing is itself a
    cover by open epsilon-balls, so the bound directions are preserved.
    """
    try:
        neighbor = _neighbor_lists(orbits, epsilon)
    except GridSizeError:
        separated = len(_packing_scan(orbits, epsilon))
        return separated, separated
    packing = _packing_from_lists(neighbor)
    cover = _cover_from_lists(neighbor)
    return min(len(cover), len(packing)), len(packing)


def _packing_from_lists(neighbor: list[np.ndarray]) -> list[int]:
    """Lexicographic maximal packing at pairwise distance >= epsilon.

    A candidate is kept exactly when no already-kept orbit lies strictly
    within epsilon of it, i.e. when it is not blocked by a kept
    neighbor.
    """
    blocked = np.zeros(len(neighbor), dtype=bool)
    chosen: list[int] = []
    for i in range(len(neighbor)):
        if not blocked[i]:
            chosen.append(i)
            blocked[neighbor[i]] = True
    return chosen


def _cover_from_lists(neighbor: list[np.ndarray]) -> list[int]:
    """Lazy max-coverage greedy cover with open epsilon-balls, lex ties."""
    N = len(neighbor)
    covered = np.zeros(N, dtype=bool)
    heap = [(-len(neighbor[i]), i) for i in range(N)]
    heapq.heapify(heap)
    centers: list[int] = []
    remaining = N
    while remaining > 0:
        neg_count, i = heapq.heappop(heap)
        gain = int(np.count_nonzero(~covered[neighbor[i]]))
        if gain == 0:
            continue
        if -neg_count > gain:
            heapq.heappush(heap, (-gain, i))
            continue
        centers.append(i)
        fresh = neighbor[i][~covered[neighbor[i]]]
        covered[fresh] = True
        remaining -= len(fresh)
    return centers


def spanning_count(
    system,
    box: Sequence[tuple[float, float]],
    grid_step: float,
    n: int,
    epsilon: float,
    *,
    clip: bool | None = None,
) -> int:
    """Greedy cover size of the grid orbits by open (n, epsilon)-balls.

    An upper bound on the minimal discretized spanning count; the
    reported value is the smaller of the max-coverage greedy cover and
    the lexicographic packing (which also covers), so it never exceeds
    :func:`separated_count` at the same epsilon.
    """
    _check_resolution(grid_step, epsilon)
    orbit_set = build_orbits(system, box, grid_step, n, clip=clip)
    return _span_sep_counts(orbit_set.orbits, epsilon)[0]


def separated_count(
    system,
    box: Sequence[tuple[float, float]],
    grid_step: float,
    n: int,
    epsilon: float,
    *,
    clip: bool | None = None,
) -> int:
    """Greedy maximal subset of grid orbits at pairwise m^n distance >= epsilon.

    Lexicographic candidate order; a lower bound on the maximal
    discretized packing.
    """
    _check_resolution(grid_step, epsilon)
    orbit_set = build_orbits(system, box, grid_step, n, clip=clip)
    return _span_sep_counts(orbit_set.orbits, epsilon)[1]


def _check_resolution(grid_step: float, epsilon: float) -> None:
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    if grid_step > epsilon / 2:
        raise ValueError(f"grid_step {grid_step} must be <= epsilon/2 = {epsilon / 2} so the grid resolves the balls")


def entropy_table(
    system,
    box: Sequence[tuple[float, float]],
    grid_step: float,
    horizons: Sequence[int],
    epsilons: Sequence[float],
    *,
    clip: bool | None = None,
) -> list[dict]:
    """Spanning/separated counts and entropy rates over an (n, epsilon) table.

    Returns one dict per (n, epsilon) pair with keys n, epsilon,
    spanning, separated, H_s_spanning, H_s_separated, clipped_states.
    """
    rows = []
    for n in horizons:
        orbit_set = None
        for eps in epsilons:
            _check_resolution(grid_step, eps)
            if orbit_set is None:
                orbit_set = build_orbits(system, box, grid_step, n, clip=clip)
            spanning, separated = _span_sep_counts(orbit_set.orbits, eps)
            rows.append(
                {
                    "n": int(n),
                    "epsilon": float(eps),
                    "spanning": spanning,
                    "separated": separated,
                    "H_s_spanning": float(np.log2(spanning) / n),
                    "H_s_separated": float(np.log2(separated) / n),
                    "clipped_states": orbit_set.clipped_states,
                }
            )
    return rows


@dataclass(frozen=True)
class EnsemblePathSet:
    """Composite trajectories of M transformation sequences from one start.

    Each sequence acts blockwise on the stacked state (L copies of a
    d-dimensional vector); ``pairwise_distances`` holds the m^n metric
    between full paths.
    """

    paths: np.ndarray  # (M, n + 1, d * L)
    pairwise_distances: np.ndarray  # (M, M)
    horizon: int
    block_dim: int


def _sequence_layers(seq) -> tuple[AffineLayer, ...]:
    if isinstance(seq, LayeredNetwork):
        return seq.layers
    return tuple(seq)


def ensemble_paths(sequences, z0: np.ndarray, n: int) -> EnsemblePathSet:
    """Run the stacked state through every sequence and collect distances."""
    if not sequences:
        raise ValueError("need at least one transformation sequence")
    seqs = [_sequence_layers(s) for s in sequences]
    d = seqs[0][0].d
    if any(layer.d != d for seq in seqs for layer in seq):
        raise ValueError("all sequences must share one state dimension")
    if any(len(seq) < n for seq in seqs):
        raise ValueError(f"all sequences must supply at least n = {n} steps")
    z0 = np.asarray(z0, dtype=np.float64)
    if z0.ndim != 1 or z0.size % d != 0:
        raise ValueError(f"z0 length {z0.size} is not a multiple of the block dimension {d}")
    L = z0.size // d
    M = len(seqs)
    paths = np.empty((M, n + 1, d * L))
    for m, seq in enumerate(seqs):
        blocks = z0.reshape(L, d)
        paths[m, 0] = z0
        for t in range(n):
            layer = seq[t]
            h = blocks @ layer.W.T + layer.b
            if layer.activation is ActivationKind.TANH:
                blocks = np.tanh(h)
            elif layer.activation is ActivationKind.RELU:
                blocks = np.maximum(h, 0.0)
            else:
                blocks = h
            paths[m, t + 1] = blocks.ravel()
    dist = orbit_distance_matrix(paths)
    return EnsemblePathSet(paths=paths, pairwise_distances=dist, horizon=n, block_dim=d)


def ensemble_path_count(sequences, z0: np.ndarray, n: int, epsilon: float) -> int:
    """Number of distinct composite paths at resolution epsilon.

    Greedy leader clustering of the M paths under the m^n metric: a
    path joins the first existing leader within epsilon, else founds a
    new cluster.  The count r_e gives the ensemble entropy estimate
    H_e = log2(r_e) / n.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    path_set = ensemble_paths(sequences, z0, n)
    return cluster_count(path_set.pairwise_distances, epsilon)


def cluster_count(distances: np.ndarray, epsilon: float) -> int:
    """Greedy leader clustering on a distance matrix (first leader wins)."""
    leaders: list[int] = []
    for i in range(distances.shape[0]):
        if not any(distances[i, l] <= epsilon for l in leaders):
            leaders.append(i)
    return len(leaders)
