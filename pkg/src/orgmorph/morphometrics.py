"""Per-organoid shape descriptors.

Five properties are computed from an instance's (filled) pixel set:

* perimeter       -- polygonal length of the traced outer boundary,
                     1 per axial step, sqrt(2) per diagonal step
* radius          -- mean distance from the area centroid to the boundary
* area            -- pixel count
* non_smoothness  -- boundary perimeter / fitted-ellipse perimeter
                     (1 for a smooth ellipse, larger for rougher outlines)
* non_circularity -- |perimeter^2 / (4*pi*area) - 1| (0 for a perfect circle)

Coordinates are (x, y) with x = column, y = row; pixel centers sit on
integer lattice points. Perimeter and radius are accumulated from exact
integer step counts / scaled-integer distances so that quarter-turn lattice
rotations reproduce bit-identical values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateContour
from .ingestion import TileRecord
from .postprocess import InstanceMask

SQRT2 = math.sqrt(2.0)

# Moore neighborhood in clockwise order (screen coords, y down), from East.
_NEIGHBORS = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))


@dataclass(frozen=True)
class Contour:
    """Closed outer-boundary trace; consecutive points are king-move steps.

    A single-pixel instance degenerates to a one-point contour. Boundary
    pixels on one-pixel-wide necks may appear more than once (the walk
    passes them on both sides).
    """

    points: tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class EllipseParams:
    center: tuple[float, float]
    semi_major: float
    semi_minor: float
    orientation: float  # radians, in [0, pi)

    def __post_init__(self):
        if not (self.semi_major >= self.semi_minor > 0):
            raise DegenerateContour(
                f"invalid ellipse axes a={self.semi_major}, b={self.semi_minor}"
            )


@dataclass(frozen=True)
class MorphometricRecord:
    global_id: str
    perimeter: float
    area: int
    radius: float
    non_smoothness: float | None  # None when the ellipse fit is degenerate
    non_circularity: float
    centroid_global: tuple[float, float]
    ellipse: EllipseParams | None


def trace_contour(instance: InstanceMask) -> Contour:
    """Clockwise Moore-neighbor trace of the outer boundary.

    Starts at the lexicographically smallest (x, y) pixel. The walk is run
    until its (pixel, backtrack) state repeats, which captures the full
    boundary cycle even when the start pixel lies on a transient approach
    (thin protrusions); the cycle is then rotated so the smallest pixel
    comes first.
    """
    pixels = instance.pixels
    if len(pixels) == 1:
        return Contour(points=(next(iter(pixels)),))

    start = min(pixels)
    state = (start, (start[0] - 1, start[1]))  # west neighbor is background
    seen: dict[tuple, int] = {}
    trace: list[tuple[int, int]] = []
    while state not in seen:
        seen[state] = len(trace)
        p, back = state
        trace.append(p)
        rel = (back[0] - p[0], back[1] - p[1])
        base = _NEIGHBORS.index(rel)
        nxt = None
        for i in range(1, 9):
            off = _NEIGHBORS[(base + i) % 8]
            cand = (p[0] + off[0], p[1] + off[1])
            if cand in pixels:
                prev_off = _NEIGHBORS[(base + i - 1) % 8]
                nxt = (cand, (p[0] + prev_off[0], p[1] + prev_off[1]))
                break
        if nxt is None:  # unreachable for an 8-connected multi-pixel set
            return Contour(points=(start,))
        state = nxt
    cycle = trace[seen[state] :]
    pivot = cycle.index(min(cycle))
    return Contour(points=tuple(cycle[pivot:] + cycle[:pivot]))


def perimeter(contour: Contour) -> float:
    """Closed polygonal boundary length; a single point has perimeter 0."""
    pts = contour.points
    n = len(pts)
    if n < 2:
        return 0.0
    diagonal = 0
    for i in range(n):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % n]
        if x0 != x1 and y0 != y1:
            diagonal += 1
    return float(n - diagonal) + diagonal * SQRT2


def area(instance: InstanceMask) -> int:
    return instance.area


def centroid(instance: InstanceMask) -> tuple[float, float]:
    """Arithmetic mean of the (filled) pixel coordinates."""
    n = instance.area
    sx = sum(x for x, _ in instance.pixels)
    sy = sum(y for _, y in instance.pixels)
    return sx / n, sy / n


def mean_radius(instance: InstanceMask, contour: Contour) -> float:
    """Mean Euclidean distance from the area centroid to the contour points.

    Distances are evaluated on n-scaled integer offsets and summed with
    fsum, so the result is independent of traversal order.
    """
    pts = contour.points
    if len(pts) < 2:
        return 0.0
    n = instance.area
    sx = sum(x for x, _ in instance.pixels)
    sy = sum(y for _, y in instance.pixels)
    distances = [math.hypot(n * px - sx, n * py - sy) / n for px, py in pts]
    return math.fsum(distances) / len(distances)


def fit_ellipse(contour: Contour) -> EllipseParams:
    """Direct least-squares conic fit constrained to an ellipse.

    Solves the 6-coefficient conic with the constraint 4AC - B^2 = 1 as the
    reduced generalized eigenproblem (the numerically stable Halir-Flusser
    formulation of Fitzgibbon's method), then converts to center/axes/angle.

    Raises DegenerateContour for < 6 distinct points, collinear input, or
    when no eigenvector satisfies the ellipse constraint.
    """
    distinct = set(contour.points)
    if len(distinct) < 6:
        raise DegenerateContour(
            f"ellipse fit needs >= 6 distinct points, got {len(distinct)}"
        )
    pts = np.asarray(contour.points, dtype=np.float64)
    mean = pts.mean(axis=0)
    u = pts[:, 0] - mean[0]
    v = pts[:, 1] - mean[1]

    d1 = np.column_stack([u * u, u * v, v * v])
    d2 = np.column_stack([u, v, np.ones_like(u)])
    s1 = d1.T @ d1
    s2 = d1.T @ d2
    s3 = d2.T @ d2
    try:
        t = -np.linalg.solve(s3, s2.T)
    except np.linalg.LinAlgError as e:
        raise DegenerateContour(f"singular scatter matrix: {e}") from e
    c1_inv = np.array([[0.0, 0.0, 0.5], [0.0, -1.0, 0.0], [0.5, 0.0, 0.0]])
    m = c1_inv @ (s1 + s2 @ t)
    eigval, eigvec = np.linalg.eig(m)

    candidates = []
    for i in range(3):
        vec = np.real(eigvec[:, i])
        constraint = 4.0 * vec[0] * vec[2] - vec[1] ** 2
        if np.isfinite(constraint) and constraint > 0:
            candidates.append((constraint, vec))
    if not candidates:
        raise DegenerateContour("no eigenvector satisfies the ellipse constraint")
    _, a1 = max(candidates, key=lambda c: c[0])
    a2 = t @ a1
    A, B, C = a1
    D, E, F = a2

    # undo the centering substitution x -> x - mx, y -> y - my
    mx, my = mean
    D2 = D - 2.0 * A * mx - B * my
    E2 = E - B * mx - 2.0 * C * my
    F2 = F + A * mx * mx + B * mx * my + C * my * my - D * mx - E * my
    D, E, F = D2, E2, F2
    if A + C < 0:  # normalize so the quadratic part is positive definite
        A, B, C, D, E, F = -A, -B, -C, -D, -E, -F

    den = B * B - 4.0 * A * C
    if not np.isfinite(den) or den >= 0:
        raise DegenerateContour("fitted conic is not an ellipse")
    cx = (2.0 * C * D - B * E) / den
    cy = (2.0 * A * E - B * D) / den
    val_c = A * cx * cx + B * cx * cy + C * cy * cy + D * cx + E * cy + F
    if not val_c < 0:
        raise DegenerateContour("degenerate ellipse (non-positive axes)")
    m2 = np.array([[A, B / 2.0], [B / 2.0, C]])
    lam, vecs = np.linalg.eigh(m2)  # ascending; both positive after normalization
    if lam[0] <= 0:
        raise DegenerateContour("degenerate ellipse (non-positive axes)")
    r_major = math.sqrt(-val_c / lam[0])
    r_minor = math.sqrt(-val_c / lam[1])
    theta = math.atan2(vecs[1, 0], vecs[0, 0]) % math.pi
    return EllipseParams(
        center=(float(cx), float(cy)),
        semi_major=float(r_major),
        semi_minor=float(r_minor),
        orientation=float(theta),
    )


def ellipse_perimeter(e: EllipseParams) -> float:
    """Ramanujan's second approximation (relative error < 1e-6 up to
    aspect ratio 5)."""
    a, b = e.semi_major, e.semi_minor
    h = ((a - b) / (a + b)) ** 2
    return math.pi * (a + b) * (1.0 + 3.0 * h / (10.0 + math.sqrt(4.0 - 3.0 * h)))


def non_smoothness(contour_perimeter: float, e: EllipseParams) -> float:
    """Boundary roughness: traced perimeter over fitted-ellipse perimeter."""
    if contour_perimeter <= 0:
        raise ValueError("contour perimeter must be positive")
    return contour_perimeter / ellipse_perimeter(e)


def non_circularity(perimeter: float, area: float) -> float:
    """|P^2 / (4*pi*A) - 1|; zero for a perfect circle.

    Accepts analytic (fractional) areas as well as pixel counts.
    """
    if area <= 0:
        raise ValueError("area must be positive")
    return abs(perimeter * perimeter / (4.0 * math.pi * area) - 1.0)


def measure(instance: InstanceMask, tile: TileRecord) -> MorphometricRecord:
    """Compute all five properties for one post-processed instance.

    When the ellipse fit is degenerate (tiny or collinear contours),
    non_smoothness is reported as unavailable rather than substituted.
    """
    contour = trace_contour(instance)
    perim = perimeter(contour)
    cx, cy = centroid(instance)
    radius = mean_radius(instance, contour)
    try:
        ellipse = fit_ellipse(contour)
        smooth = non_smoothness(perim, ellipse)
    except DegenerateContour:
        ellipse = None
        smooth = None
    return MorphometricRecord(
        global_id=instance.global_id,
        perimeter=perim,
        area=instance.area,
        radius=radius,
        non_smoothness=smooth,
        non_circularity=non_circularity(perim, instance.area),
        centroid_global=(cx + tile.origin_x, cy + tile.origin_y),
        ellipse=ellipse,
    )
