"""Classification complexity, margins, and constructive shattering.

Complexity of a labeled sample is measured through grid partitions: a
cell is *hybrid* when it contains points of both labels, and the
complexity at resolution epsilon is log2 of the smallest hybrid-cell
count over a family of admissible partitions (axis-aligned grids whose
cell diameter is at most epsilon, over several offsets and all finer
dyadic cell sides down to a declared floor).  The true infimum over all
Borel partitions is degenerate for finite samples of distinct points --
singleton-splitting reaches zero hybrid cells -- so the reported value
is only meaningful relative to the scale floor, which is therefore an
explicit parameter.

Margins are maximum-margin affine separations (unit-norm classifier,
each class at distance >= epsilon/2), solved as the standard hard-margin
quadratic program and re-verified numerically.

The shattering constructions realize every labeling of n = D + 3 planar
points with a depth-<= D tanh network plus a linear cut: four points in
XOR position with one layer, plus one extra layer for each additional
point outside the previous hull (stretch toward a designed concave
separation curve whose image under elementwise tanh is a straight
line).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .core import ActivationKind, AffineLayer, LayeredNetwork, LinearClassifier
from .rng import make_rng

__all__ = [
    "LabeledDataset",
    "GridPartition",
    "ComplexityReport",
    "ShatterNetwork",
    "ShatterFamily",
    "ConstructionError",
    "hybrid_count",
    "classification_complexity",
    "affine_separable_margin",
    "max_margin_classifier",
    "direction_grid_margin",
    "layer_lower_bound",
    "hausdorff_eps_delta",
    "vc_upper_bound",
    "shatter_four",
    "shatter_extend",
    "load_dataset",
    "save_dataset",
]

MAX_MARGIN_DIMENSION = 16
MAX_MARGIN_POINTS = 1000


class ConstructionError(RuntimeError):
    """A shattering construction could not be realized as specified."""


@dataclass(frozen=True)
class LabeledDataset:
    """Points with labels in {-1, +1}.

    ``conflicting_pairs`` counts coordinate-identical point pairs with
    opposite labels; they make every partition keep at least one hybrid
    cell and make separation impossible.
    """

    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError("points must be a non-empty (N, d) array")
        if labels.shape != (pts.shape[0],):
            raise ValueError("labels must match points")
        if not np.all(np.isin(labels, (-1, 1))):
            raise ValueError("labels must be -1 or +1")
        pts.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", labels)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.points.min(axis=0), self.points.max(axis=0)

    @property
    def conflicting_pairs(self) -> int:
        seen: dict[bytes, set[int]] = {}
        for point, label in zip(self.points, self.labels):
            seen.setdefault(point.tobytes(), set()).add(int(label))
        return sum(1 for labels in seen.values() if len(labels) == 2)


def load_dataset(path) -> LabeledDataset:
    """Read CSV rows ``x1,...,xd,label``."""
    points, labels = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            points.append([float(v) for v in row[:-1]])
            labels.append(int(float(row[-1])))
    return LabeledDataset(points=np.asarray(points), labels=np.asarray(labels))


def save_dataset(dataset: LabeledDataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for point, label in zip(dataset.points, dataset.labels):
            writer.writerow([repr(float(v)) for v in point] + [int(label)])


@dataclass(frozen=True)
class GridPartition:
    """Axis-aligned grid of cubic cells with side ``cell_side``.

    Cell diameter is ``cell_side * sqrt(d)``; :meth:`for_epsilon` picks
    the largest side whose diameter does not exceed epsilon.  ``offset``
    translates the grid (componentwise in [0, cell_side)).
    """

    cell_side: float
    offset: np.ndarray

    def __post_init__(self):
        if self.cell_side <= 0:
            raise ValueError("cell_side must be > 0")
        off = np.array(self.offset, dtype=np.float64)
        off.setflags(write=False)
        object.__setattr__(self, "offset", off)

    @staticmethod
    def for_epsilon(epsilon: float, d: int, offset: np.ndarray | None = None) -> "GridPartition":
        if epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        side = epsilon / math.sqrt(d)
        return GridPartition(cell_side=side, offset=np.zeros(d) if offset is None else offset)

    def diameter(self, d: int) -> float:
        return self.cell_side * math.sqrt(d)

    def cell_indices(self, points: np.ndarray) -> np.ndarray:
        return np.floor((points + self.offset) / self.cell_side).astype(np.int64)


def hybrid_count(dataset: LabeledDataset, partition: GridPartition) -> int:
    """Number of grid cells containing points of both labels."""
    cells = partition.cell_indices(dataset.points)
    seen: dict[bytes, int] = {}
    for cell, label in zip(cells, dataset.labels):
        key = cell.tobytes()
        seen[key] = seen.get(key, 0) | (1 if label > 0 else 2)
    return sum(1 for mask in seen.values() if mask == 3)


@dataclass(frozen=True)
class ComplexityReport:
    """Minimized hybrid count and its log2 at resolution epsilon.

    ``complexity`` is None exactly when the minimum is zero ("separated"
    in textual output): log2(0) is undefined and the layer-count bound
    does not apply.
    """

    epsilon: float
    hybrid_count: int
    complexity: float | None
    offsets_tried: int
    best_cell_side: float
    best_offset: np.ndarray

    @property
    def separated(self) -> bool:
        return self.hybrid_count == 0

    @property
    def complexity_text(self) -> str:
        return "separated" if self.separated else repr(self.complexity)


def _dyadic_sides(base_side: float, scale_floor: float) -> list[float]:
    """Admissible sides scale_floor * 2^j that do not exceed base_side.

    An absolute dyadic ladder anchored at the floor, so the family for a
    larger epsilon contains the family for a smaller one (monotonicity
    of the reported complexity).
    """
    if scale_floor <= 0:
        raise ValueError("scale_floor must be > 0")
    if scale_floor > base_side:
        return [base_side]
    sides = []
    j = 0
    while scale_floor * 2.0**j <= base_side * (1 + 1e-12):
        sides.append(scale_floor * 2.0**j)
        j += 1
    return sides


def classification_complexity(
    dataset: LabeledDataset,
    epsilon: float,
    offsets: int = 8,
    *,
    scale_floor: float | None = None,
    seed: int = 0,
) -> ComplexityReport:
    """Minimize the hybrid-cell count over admissible grid partitions.

    Tries ``offsets`` grid translations (the zero offset plus
    pseudo-random ones, identical per cell side across calls) for every
    dyadic cell side between ``scale_floor`` and epsilon / sqrt(d).
    The default floor is the bounding-box diagonal divided by 4096;
    results are only comparable across epsilons for a fixed floor.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    if offsets < 1:
        raise ValueError("offsets must be >= 1")
    d = dataset.d
    lo, hi = dataset.box
    if scale_floor is None:
        diag = float(np.linalg.norm(hi - lo))
        scale_floor = max(diag, 1e-9) / 4096.0
    base_side = epsilon / math.sqrt(d)
    best = None
    tried = 0
    for side in _dyadic_sides(base_side, scale_floor):
        exponent = int(round(math.log2(side / scale_floor))) if side >= scale_floor else -1
        rng = make_rng(seed, exponent)
        for k in range(offsets):
            offset = np.zeros(d) if k == 0 else rng.random(d) * side
            count = hybrid_count(dataset, GridPartition(cell_side=side, offset=offset))
            tried += 1
            if best is None or count < best[0]:
                best = (count, side, offset)
            if count == 0:
                break
        if best[0] == 0:
            break
    count, side, offset = best
    return ComplexityReport(
        epsilon=float(epsilon),
        hybrid_count=count,
        complexity=None if count == 0 else float(np.log2(count)),
        offsets_tried=tried,
        best_cell_side=side,
        best_offset=offset,
    )


def max_margin_classifier(points: np.ndarray, labels: np.ndarray) -> tuple[LinearClassifier, float] | None:
    """Hard-margin separator, or None when the labeling is inseparable.

    Solves min |v|^2 subject to y (v.x + c) >= 1 and rescales to a
    unit-norm classifier.  The returned margin is re-verified on the
    data (min y (w.x + b)), so it is feasible by construction.
    """
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if len(set(labels.tolist())) < 2:
        # One-class labelings are trivially separable with any margin;
        # report the hyperplane pushed one unit beyond the data.
        w = np.zeros(points.shape[1])
        w[0] = 1.0
        scores = points @ w
        b = 1.0 - scores.min() if labels[0] > 0 else -(scores.max() + 1.0)
        clf = LinearClassifier(w=w, b=float(b))
        return clf, float(np.min(labels * clf.score(points)))
    v = cp.Variable(points.shape[1])
    c = cp.Variable()
    problem = cp.Problem(cp.Minimize(cp.sum_squares(v)), [cp.multiply(labels, points @ v + c) >= 1])
    try:
        problem.solve(solver=cp.CLARABEL)
    except cp.error.SolverError:
        return None
    if problem.status not in ("optimal", "optimal_inaccurate") or v.value is None:
        return None
    norm = float(np.linalg.norm(v.value))
    if norm == 0 or not np.isfinite(norm):
        return None
    clf = LinearClassifier(w=v.value / norm, b=float(c.value) / norm)
    margin = float(np.min(labels * clf.score(points)))
    if margin <= 0:
        return None
    return clf, margin


def affine_separable_margin(dataset: LabeledDataset) -> float | None:
    """Largest epsilon with both classes at distance >= epsilon/2 from a hyperplane.

    None when inseparable.  Desk scale only: d <= 16 and at most 10^3
    points.
    """
    if dataset.d > MAX_MARGIN_DIMENSION:
        raise ValueError(f"margin solver handles d <= {MAX_MARGIN_DIMENSION}")
    if dataset.points.shape[0] > MAX_MARGIN_POINTS:
        raise ValueError(f"margin solver handles at most {MAX_MARGIN_POINTS} points")
    result = max_margin_classifier(dataset.points, dataset.labels)
    if result is None:
        return None
    _, margin = result
    return 2.0 * margin


def direction_grid_margin(dataset: LabeledDataset, step_degrees: float = 1.0) -> float:
    """Best class gap over an exhaustive 2-D direction grid (oracle).

    For each direction u the achievable epsilon is
    min_{+} u.x - max_{-} u.x; the maximum over the grid lower-bounds
    the true optimum to within the angular resolution.
    """
    if dataset.d != 2:
        raise ValueError("the direction-grid oracle is 2-dimensional")
    angles = np.deg2rad(np.arange(0.0, 360.0, step_degrees))
    directions = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    scores = dataset.points @ directions.T  # (N, n_angles)
    pos = scores[dataset.labels > 0]
    neg = scores[dataset.labels < 0]
    gaps = pos.min(axis=0) - neg.max(axis=0)
    return float(gaps.max())


def layer_lower_bound(complexity: float, Hs: float) -> float:
    """Depth bound (complexity + 1) / Hs; requires a positive entropy rate."""
    if Hs <= 0:
        raise ValueError("the layer bound needs Hs > 0 (it is vacuous otherwise)")
    return (complexity + 1.0) / Hs


def hausdorff_eps_delta(
    dataset: LabeledDataset,
    epsilon: float,
    delta: float,
    offsets: int = 8,
    *,
    scale_floor: float | None = None,
    seed: int = 0,
) -> float:
    """Resolution-limited dimension: least x with N(P|X) epsilon^x <= delta.

    N is the minimized hybrid count at resolution epsilon; zero hybrid
    cells give dimension 0.
    """
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if delta <= 0:
        raise ValueError("delta must be > 0")
    report = classification_complexity(dataset, epsilon, offsets, scale_floor=scale_floor, seed=seed)
    if report.hybrid_count == 0:
        return 0.0
    return (math.log2(delta) - math.log2(report.hybrid_count)) / math.log2(epsilon)


def vc_upper_bound(He: float, D: int) -> float:
    """Path-count bound He * D on the number of shatterable points."""
    if He < 0:
        raise ValueError("He must be >= 0")
    if D < 1:
        raise ValueError("D must be >= 1")
    return He * D


# ---------------------------------------------------------------------------
# Constructive shattering
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShatterNetwork:
    """Tanh layers plus a linear cut realizing one labeling."""

    layers: tuple[AffineLayer, ...]
    classifier: LinearClassifier
    target_labeling: tuple[int, ...]

    @property
    def depth(self) -> int:
        return len(self.layers)

    def image(self, points: np.ndarray) -> np.ndarray:
        out = np.asarray(points, dtype=np.float64)
        for layer in self.layers:
            out = np.tanh(out @ layer.W.T + layer.b)
        return out

    def margin(self, points: np.ndarray) -> float:
        """Worst-case signed agreement with the target labeling."""
        scores = self.classifier.score(self.image(points))
        return float(np.min(np.asarray(self.target_labeling) * scores))

    def network(self) -> LayeredNetwork:
        return LayeredNetwork(layers=self.layers)


@dataclass(frozen=True)
class ShatterFamily:
    """All 2^k labelings of k planar points, each with verified networks.

    ``variants`` keeps a small beam of alternative realizations per
    labeling (best margin first); extensions try every variant, because
    a parent that is fine for k points can saturate the next point onto
    an oppositely labeled image.  ``networks`` exposes the canonical
    (best) realization.
    """

    points: np.ndarray
    variants: dict[tuple[int, ...], tuple[ShatterNetwork, ...]] = field(repr=False)

    @property
    def networks(self) -> dict[tuple[int, ...], ShatterNetwork]:
        return {labeling: nets[0] for labeling, nets in self.variants.items()}

    @property
    def k(self) -> int:
        return self.points.shape[0]

    @property
    def depth(self) -> int:
        return max(nets[0].depth for nets in self.variants.values())

    def labelings(self) -> list[tuple[int, ...]]:
        return [_bits_to_labels(i, self.k) for i in range(2**self.k)]

    def verify(self, min_margin: float = 1e-6) -> list[tuple[tuple[int, ...], int, float]]:
        """(labeling, depth, margin) per canonical network; raises on failure."""
        rows = []
        for labeling in self.labelings():
            net = self.variants[labeling][0]
            margin = net.margin(self.points)
            if margin <= min_margin:
                raise ConstructionError(f"labeling {labeling} has margin {margin:.3e} <= {min_margin:.1e}")
            rows.append((labeling, net.depth, margin))
        return rows


def _bits_to_labels(index: int, k: int) -> tuple[int, ...]:
    return tuple(1 if (index >> j) & 1 else -1 for j in range(k))


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def _line_intersection(p1, p2, q1, q2) -> np.ndarray:
    dp, dq = p2 - p1, q2 - q1
    denom = dp[0] * dq[1] - dp[1] * dq[0]
    if abs(denom) < 1e-12:
        raise ConstructionError("crossing lines are numerically parallel")
    t = ((q1[0] - p1[0]) * dq[1] - (q1[1] - p1[1]) * dq[0]) / denom
    return p1 + t * dp


def _xor_pairing(points: np.ndarray) -> tuple[tuple[int, int], tuple[int, int]]:
    """The unique split of four points into two properly crossing segments."""
    pairings = [((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2))]
    crossing = [
        (a, b) for a, b in pairings if _segments_cross(points[a[0]], points[a[1]], points[b[0]], points[b[1]])
    ]
    if len(crossing) != 1:
        raise ConstructionError("points are not in XOR position (need exactly one crossing pairing)")
    return crossing[0]


def _no_three_collinear(points: np.ndarray) -> bool:
    n = points.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                area = (points[j] - points[i])[0] * (points[k] - points[i])[1] - (points[j] - points[i])[1] * (
                    points[k] - points[i]
                )[0]
                if abs(area) < 1e-12:
                    return False
    return True


#: Variants kept per labeling when building shattering families.
_BEAM_WIDTH = 4


def _identity_layer() -> AffineLayer:
    return AffineLayer(W=np.eye(2), b=np.zeros(2), activation=ActivationKind.TANH)


def _scaled_identity_layer(scale: float) -> AffineLayer:
    return AffineLayer(W=scale * np.eye(2), b=np.zeros(2), activation=ActivationKind.TANH)


def _xor_layer(points: np.ndarray, plus_pair: tuple[int, int], minus_pair: tuple[int, int], stretch: float) -> AffineLayer:
    """Single tanh layer mapping the plus pair near opposite corners.

    Shifts the crossing of the two point lines to the origin, rotates so
    the stretched direction has both components bounded away from the
    axes (its far images then saturate into opposite corners of the tanh
    square), stretches the plus line by ``stretch`` while compressing
    the minus line by 1/stretch, and recenters at (0, 1) so the
    compressed pair lands near (0, tanh 1).
    """
    crossing = _line_intersection(points[plus_pair[0]], points[plus_pair[1]], points[minus_pair[0]], points[minus_pair[1]])
    dir_plus = points[plus_pair[1]] - points[plus_pair[0]]
    dir_plus = dir_plus / np.linalg.norm(dir_plus)
    dir_minus = points[minus_pair[1]] - points[minus_pair[0]]
    dir_minus = dir_minus / np.linalg.norm(dir_minus)
    best_rot, best_quality = None, -1.0
    for theta_deg in range(0, 180, 15):
        theta = math.radians(theta_deg)
        rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
        quality = float(np.min(np.abs(rot @ dir_plus)))
        if quality > best_quality:
            best_rot, best_quality = rot, quality
    eigvecs = np.column_stack([best_rot @ dir_plus, best_rot @ dir_minus])
    scale = eigvecs @ np.diag([stretch, 1.0 / stretch]) @ np.linalg.inv(eigvecs)
    M = scale @ best_rot
    b = -M @ crossing + np.array([0.0, 1.0])
    return AffineLayer(W=M, b=b, activation=ActivationKind.TANH)


def shatter_four(
    points: np.ndarray,
    *,
    stretch: float = 20.0,
    min_margin: float = 1e-6,
) -> ShatterFamily:
    """One-layer tanh networks realizing all 16 labelings of an XOR quad.

    Linearly separable labelings pass through an identity tanh layer and
    take their maximum-margin cut; the two crossing-pair labelings use
    the stretch construction.  Every network is margin-verified.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.shape != (4, 2):
        raise ValueError("need exactly four 2-d points")
    if not _no_three_collinear(points):
        raise ConstructionError("three of the four points are collinear")
    pair_a, pair_b = _xor_pairing(points)
    variants: dict[tuple[int, ...], tuple[ShatterNetwork, ...]] = {}
    for index in range(16):
        labeling = _bits_to_labels(index, 4)
        plus_set = frozenset(j for j, s in enumerate(labeling) if s > 0)
        candidates = []
        for pair, other in ((pair_a, pair_b), (pair_b, pair_a)):
            if plus_set in (frozenset(pair), frozenset(other)):
                stretched, compressed = (pair, other) if plus_set == frozenset(pair) else (other, pair)
                # Gentler stretches keep far-away extension points off the
                # exactly saturated corners; keep them as variants.
                candidates += [_xor_layer(points, stretched, compressed, s) for s in (stretch, 6.0, 3.0, 1.5)]
                break
        candidates += [_identity_layer(), _scaled_identity_layer(0.5)]
        realized = []
        for layer in candidates:
            images = np.tanh(points @ layer.W.T + layer.b)
            result = max_margin_classifier(images, np.asarray(labeling, dtype=np.float64))
            if result is not None and result[1] > min_margin:
                realized.append(ShatterNetwork(layers=(layer,), classifier=result[0], target_labeling=labeling))
        if not realized:
            raise ConstructionError(f"could not realize labeling {labeling}")
        realized.sort(key=lambda net: -net.margin(points))
        variants[labeling] = tuple(realized[:_BEAM_WIDTH])
    return ShatterFamily(points=points, variants=variants)


def _point_in_hull(point: np.ndarray, hull_points: np.ndarray) -> bool:
    from scipy.spatial import Delaunay

    try:
        tri = Delaunay(hull_points)
    except Exception as exc:  # degenerate (collinear) hulls
        raise ConstructionError(f"cannot form the convex hull: {exc}") from None
    return bool(tri.find_simplex(point) >= 0)


def _curve(x: np.ndarray, slope: float) -> np.ndarray:
    """The designed concave separation curve atanh(slope * tanh(x))."""
    return np.arctanh(slope * np.tanh(x))


@dataclass(frozen=True)
class _ExtensionGeometry:
    direction: np.ndarray
    proj_minus: np.ndarray
    proj_plus: np.ndarray


def _choose_direction(plus: np.ndarray, minus: np.ndarray) -> _ExtensionGeometry:
    """Direction whose minus-class projection interval excludes every plus point.

    Plus points may fall on either side of the minus interval (the
    concave curve separates the chord from both secant extensions).
    Scans a fixed fan of 512 directions and keeps the one maximizing the
    worst plus-to-interval gap; fails when every direction leaves a plus
    point inside the minus interval.
    """
    angles = np.pi * np.arange(512) / 256.0
    candidates = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    proj_plus_all = plus @ candidates.T  # (n_plus, n_angles)
    proj_minus_all = minus @ candidates.T
    lo = proj_minus_all.min(axis=0)
    hi = proj_minus_all.max(axis=0)
    gap = np.where(
        proj_plus_all < lo[None, :],
        lo[None, :] - proj_plus_all,
        np.where(proj_plus_all > hi[None, :], proj_plus_all - hi[None, :], -1.0),
    ).min(axis=0)
    best = int(np.argmax(gap))
    if gap[best] <= 0:
        raise ConstructionError(
            "no direction leaves the minus-class projection interval free of plus points; "
            "the extension point's image is trapped in the existing hull"
        )
    u = candidates[best]
    return _ExtensionGeometry(direction=u, proj_minus=minus @ u, proj_plus=plus @ u)


def _extension_layer(
    images: np.ndarray,
    work_labels: np.ndarray,
    *,
    squeeze: float,
) -> AffineLayer | None:
    """One affine+tanh layer making ``work_labels`` affinely separable.

    The layer squeezes everything toward a separating direction, then
    maps that line onto a secant of the concave curve atanh(a tanh x):
    the minus class lands between the chord endpoints (below the curve)
    while the plus class lands on the secant extensions (above it).
    Elementwise tanh straightens the curve into the line y = a x, so the
    output is linearly separable.
    """
    plus = images[work_labels > 0]
    minus = images[work_labels < 0]
    if minus.shape[0] == 0 or plus.shape[0] == 0:
        return None  # one-class labelings are separable without a new layer
    geometry = _choose_direction(plus, minus)
    u = geometry.direction
    normal = np.array([-u[1], u[0]])
    lo, hi = float(geometry.proj_minus.min()), float(geometry.proj_minus.max())
    spread = max(hi - lo, 1e-6)
    left_plus = geometry.proj_plus[geometry.proj_plus < lo]
    right_plus = geometry.proj_plus[geometry.proj_plus > hi]
    p1 = 0.5 * (float(left_plus.max()) + lo) if left_plus.size else lo - 0.5 * spread
    p2 = 0.5 * (hi + float(right_plus.min())) if right_plus.size else hi + 0.5 * spread
    raw_offsets = images @ normal
    mean_offset = float(raw_offsets.mean())
    along_proj = images @ u
    windows = [
        (slope, g1, span)
        for slope in (0.5, 0.25)
        for g1, span in (
            (1.0, 2.0), (1.0, 1.0), (0.5, 1.0), (0.5, 0.5), (1.5, 3.0), (1.5, 1.0),
            (1.5, 0.5), (2.0, 1.0), (2.0, 0.5), (2.5, 0.5), (3.0, 1.0), (0.25, 0.25),
        )
    ]
    best = None  # (quality, parameters)
    for slope, g1, span in windows:
        g2 = g1 + span
        alpha = span / (p2 - p1)
        xs = g1 + alpha * (along_proj - p1)
        chord_slope = float((_curve(np.array(g2), slope) - _curve(np.array(g1), slope)) / span)
        secant = _curve(np.array(g1), slope) + chord_slope * (xs - g1)
        clearance = _curve(xs, slope) - secant
        signed = np.where(work_labels < 0, clearance, -clearance)
        min_clear = float(signed.min())
        if min_clear <= 1e-9:
            continue  # this curve window does not fit the projected geometry
        # Post-tanh gaps shrink by the tanh slope at the image, so score
        # each window by the worst clearance discounted by saturation
        # (log domain: sech^2(r) ~ 4 exp(-2r)).
        reach = np.maximum(np.abs(xs), np.abs(secant))
        quality = float(np.min(np.log(signed) - 2.0 * reach))
        if best is None or quality > best[0]:
            best = (quality, slope, g1, span, alpha, chord_slope, min_clear)
    if best is None:
        raise ConstructionError("no curve window accommodates the projected geometry")
    _, slope, g1, span, alpha, chord_slope, min_clear = best
    max_offset = squeeze * float(np.max(np.abs(raw_offsets - mean_offset)))
    kappa = 1.0 if max_offset == 0 else min(0.4 * min_clear / max_offset, 1.0)
    if kappa * squeeze < 1e-14:
        raise ConstructionError("squeeze factor underflow: clearances too small to keep the classes apart")
    nu = np.array([-chord_slope, 1.0]) / math.hypot(chord_slope, 1.0)
    along = np.array([1.0, chord_slope])
    beta = g1 - alpha * p1
    c0 = float(_curve(np.array(g1), slope)) - chord_slope * g1
    M = np.outer(along, alpha * u) + np.outer(nu, kappa * squeeze * normal)
    c = beta * along + np.array([0.0, c0]) - nu * kappa * squeeze * mean_offset
    return AffineLayer(W=M, b=c, activation=ActivationKind.TANH)


def shatter_extend(
    family: ShatterFamily,
    new_point: np.ndarray,
    *,
    squeeze: float = 1e-3,
    min_margin: float = 1e-6,
) -> ShatterFamily:
    """Extend a shattering family by one point outside the current hull.

    Every labeling of the k+1 points restricts to a realized labeling of
    the k points; when the parent network already separates the extended
    labeling no layer is appended, otherwise one affine+tanh layer built
    from the concave-curve construction is added.  All 2^(k+1) networks
    are margin-verified.
    """
    new_point = np.asarray(new_point, dtype=np.float64)
    if new_point.shape != (2,):
        raise ValueError("the construction is 2-dimensional")
    if _point_in_hull(new_point, family.points):
        raise ConstructionError("new point must lie strictly outside the convex hull of the existing points")
    points = np.vstack([family.points, new_point])
    k = family.k
    variants: dict[tuple[int, ...], tuple[ShatterNetwork, ...]] = {}
    for index in range(2 ** (k + 1)):
        labeling = _bits_to_labels(index, k + 1)
        target = np.asarray(labeling, dtype=np.float64)
        realized: list[tuple[float, int, ShatterNetwork]] = []
        failure: Exception | None = None
        for parent in family.variants[labeling[:k]]:
            images = parent.image(points)
            result = max_margin_classifier(images, target)
            if result is not None and result[1] > min_margin:
                realized.append(
                    (result[1], parent.depth, ShatterNetwork(layers=parent.layers, classifier=result[0], target_labeling=labeling))
                )
                continue
            # The chord/extension roles of the two classes are not
            # symmetric; try the labeling in both orientations.
            for work_labels in (target, -target):
                try:
                    layer = _extension_layer(images, work_labels, squeeze=squeeze)
                except ConstructionError as exc:
                    failure = exc
                    continue
                if layer is None:
                    failure = ConstructionError(f"labeling {labeling}: expected separability but margin solve failed")
                    continue
                final = np.tanh(images @ layer.W.T + layer.b)
                result = max_margin_classifier(final, target)
                if result is None or result[1] <= min_margin:
                    failure = ConstructionError(f"labeling {labeling}: extension layer margin below {min_margin:.1e}")
                    continue
                realized.append(
                    (
                        result[1],
                        parent.depth + 1,
                        ShatterNetwork(layers=parent.layers + (layer,), classifier=result[0], target_labeling=labeling),
                    )
                )
        if not realized:
            raise ConstructionError(f"labeling {labeling}: no parent variant admitted an extension") from failure
        # Prefer shallow realizations, then wide margins.
        realized.sort(key=lambda item: (item[1], -item[0]))
        variants[labeling] = tuple(net for _, _, net in realized[:_BEAM_WIDTH])
    return ShatterFamily(points=points, variants=variants)
