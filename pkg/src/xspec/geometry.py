"""Planar homography estimation and projection between image frames.

The estimator is the normalized direct linear transform: both point sets are
conditioned (centroid moved to the origin, mean distance scaled to sqrt(2)),
the stacked 2n x 9 linear system is solved via the smallest right singular
vector, and the conditioning is undone in the result.  Four correspondences
give the exact solution, more give the algebraic least-squares one.

Matrices are kept in a canonical scale (Frobenius norm 1, bottom-right entry
nonnegative) so that two homographies can be compared entrywise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateConfiguration,
    EmptyInput,
    InvalidBox,
    NonFiniteInput,
    PointAtInfinity,
    SingularMatrix,
    TooFewPoints,
)

# |w| at or below this after transform counts as the line at infinity
INFINITY_EPS = 1e-12
# |det| of a canonical matrix at or below this counts as singular
SINGULAR_EPS = 1e-12
# triangle area below this, in normalized coordinates, marks a collinear triple
COLLINEAR_AREA_TOL = 1e-9
# ratio of smallest to second-smallest singular value above which the
# solution direction is ambiguous
SV_RATIO_MAX = 0.99


@dataclass(frozen=True)
class Point2:
    """A pixel position; coordinates must be finite."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise NonFiniteInput(f"point ({self.x}, {self.y}) is not finite")


@dataclass(frozen=True)
class Correspondence:
    """One picked point pair: source frame position and its target partner."""

    source: Point2
    target: Point2


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box as (left, top, width, height) with w, h > 0."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.x, self.y, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidBox(f"box {vals} has non-finite fields")
        if self.w <= 0 or self.h <= 0:
            raise InvalidBox(f"box {vals} has non-positive extent")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    def corners(self) -> tuple[Point2, Point2, Point2, Point2]:
        return (
            Point2(self.x, self.y),
            Point2(self.x2, self.y),
            Point2(self.x2, self.y2),
            Point2(self.x, self.y2),
        )


@dataclass(frozen=True)
class FitDiagnostics:
    """Reprojection-error summary for one fitted homography."""

    rmse: float
    max_error: float
    per_point: tuple[float, ...]


@dataclass(frozen=True)
class Homography:
    """3x3 projective transform, stored row-major in canonical scale."""

    m: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        arr = np.asarray(self.m, dtype=float)
        if arr.shape != (3, 3):
            raise NonFiniteInput(f"homography must be 3x3, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteInput("homography entries must be finite")
        if abs(np.linalg.det(arr)) <= SINGULAR_EPS * np.linalg.norm(arr) ** 3:
            raise SingularMatrix("homography matrix is singular")
        canon = _canonical_scale(arr)
        object.__setattr__(self, "m", tuple(tuple(float(v) for v in row) for row in canon))

    @classmethod
    def from_matrix(cls, matrix) -> "Homography":
        arr = np.asarray(matrix, dtype=float)
        return cls(tuple(tuple(float(v) for v in row) for row in arr))

    @classmethod
    def identity(cls) -> "Homography":
        return cls.from_matrix(np.eye(3))

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.m, dtype=float)


def _canonical_scale(m: np.ndarray) -> np.ndarray:
    """Frobenius norm 1; bottom-right entry nonnegative, falling back to the
    first nonzero entry when that one is exactly zero."""
    norm = np.linalg.norm(m)
    # idempotent within float precision: re-canonicalizing an already
    # canonical matrix must not drift its entries by an ulp
    scaled = m if abs(norm - 1.0) <= 1e-12 else m / norm
    anchor = scaled[2, 2]
    if anchor == 0.0:
        flat = scaled.ravel()
        nonzero = flat[flat != 0.0]
        anchor = nonzero[0] if nonzero.size else 1.0
    if anchor < 0.0:
        scaled = -scaled
    return scaled


def _points_array(points: Iterable[Point2]) -> np.ndarray:
    arr = np.array([[p.x, p.y] for p in points], dtype=float)
    if arr.size and not np.all(np.isfinite(arr)):
        raise NonFiniteInput("point coordinates must be finite")
    return arr


def hartley_normalization(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Similarity transform taking the centroid to the origin and the mean
    distance from it to sqrt(2).

    Parameters
    ----------
    points : (n, 2) array

    Returns
    -------
    T : (3, 3) transform such that normalized = apply(T, points)
    normalized : (n, 2) conditioned points
    """
    centroid = points.mean(axis=0)
    centered = points - centroid
    mean_dist = np.sqrt((centered**2).sum(axis=1)).mean()
    if mean_dist <= 0.0 or not np.isfinite(mean_dist):
        raise DegenerateConfiguration("points are coincident")
    s = math.sqrt(2.0) / mean_dist
    T = np.array(
        [
            [s, 0.0, -s * centroid[0]],
            [0.0, s, -s * centroid[1]],
            [0.0, 0.0, 1.0],
        ]
    )
    return T, centered * s


def _has_collinear_triple(points: np.ndarray, area_tol: float) -> bool:
    n = len(points)
    if n < 3:
        return False
    idx = np.array(
        [(i, j, k) for i in range(n) for j in range(i + 1, n) for k in range(j + 1, n)]
    )
    a = points[idx[:, 0]]
    b = points[idx[:, 1]]
    c = points[idx[:, 2]]
    cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (
        c[:, 0] - a[:, 0]
    )
    # |cross| is twice the triangle area
    return bool(np.any(np.abs(cross) < 2.0 * area_tol))


def dlt_design_matrix(source: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Stacked 2n x 9 system whose null vector is the row-major homography."""
    n = len(source)
    A = np.zeros((2 * n, 9))
    x, y = source[:, 0], source[:, 1]
    u, v = target[:, 0], target[:, 1]
    A[0::2, 0] = x
    A[0::2, 1] = y
    A[0::2, 2] = 1.0
    A[0::2, 6] = -u * x
    A[0::2, 7] = -u * y
    A[0::2, 8] = -u
    A[1::2, 3] = x
    A[1::2, 4] = y
    A[1::2, 5] = 1.0
    A[1::2, 6] = -v * x
    A[1::2, 7] = -v * y
    A[1::2, 8] = -v
    return A


def fit_homography(correspondences: Sequence[Correspondence]) -> Homography:
    """Least-squares DLT fit of a homography from point correspondences.

    Raises
    ------
    TooFewPoints
        Fewer than 4 correspondences.
    DegenerateConfiguration
        Collinear or coincident points, or an ambiguous solve.
    NonFiniteInput
        Any non-finite coordinate.
    """
    if len(correspondences) < 4:
        raise TooFewPoints(
            f"homography fit needs at least 4 correspondences, got {len(correspondences)}"
        )
    src = _points_array(c.source for c in correspondences)
    tgt = _points_array(c.target for c in correspondences)

    T_src, src_n = hartley_normalization(src)
    T_tgt, tgt_n = hartley_normalization(tgt)
    for side, pts in (("source", src_n), ("target", tgt_n)):
        if _has_collinear_triple(pts, COLLINEAR_AREA_TOL):
            raise DegenerateConfiguration(f"3 collinear points on the {side} side")

    A = dlt_design_matrix(src_n, tgt_n)
    _, svals, Vt = np.linalg.svd(A)
    # pad to 9: a 2n x 9 system with 2n < 9 has implicit zero singular values
    padded = np.zeros(9)
    padded[: svals.size] = svals
    largest, second_smallest, smallest = padded[0], padded[7], padded[8]
    if second_smallest <= largest * 1e-12:
        raise DegenerateConfiguration("design matrix is rank deficient")
    if smallest / second_smallest > SV_RATIO_MAX:
        raise DegenerateConfiguration("solution direction is ambiguous")

    H_norm = Vt[-1].reshape(3, 3)
    H = np.linalg.inv(T_tgt) @ H_norm @ T_src
    if abs(np.linalg.det(H)) <= SINGULAR_EPS * np.linalg.norm(H) ** 3:
        raise DegenerateConfiguration("fitted matrix is singular")
    return Homography.from_matrix(H)


def _working_rows(h: Homography) -> tuple[tuple[float, float, float], ...]:
    # Projection is scale-invariant, so rescale to m22 = 1 when safely
    # possible: affine transforms then project exactly (hw becomes 1.0
    # instead of a rounded multiply-divide round trip).
    m22 = h.m[2][2]
    if abs(m22) <= 1e-8:
        return h.m
    return tuple(tuple(v / m22 for v in row) for row in h.m)


def project_point(h: Homography, p: Point2) -> Point2:
    """Apply the transform and dehomogenize."""
    m = _working_rows(h)
    hx = m[0][0] * p.x + m[0][1] * p.y + m[0][2]
    hy = m[1][0] * p.x + m[1][1] * p.y + m[1][2]
    hw = m[2][0] * p.x + m[2][1] * p.y + m[2][2]
    if abs(hw) < INFINITY_EPS:
        raise PointAtInfinity(f"point ({p.x}, {p.y}) maps to the line at infinity")
    if hw == 1.0:
        return Point2(hx, hy)
    return Point2(hx / hw, hy / hw)


def project_bbox(h: Homography, b: BBox) -> BBox:
    """Axis-aligned envelope of the four projected corners.

    Projective maps do not preserve axis alignment, so the envelope (min/max
    over the projected corners) is the canonical box policy.
    """
    corners = b.corners()
    projected = [project_point(h, c) for c in corners]
    if all(p.x == c.x and p.y == c.y for p, c in zip(projected, corners)):
        # the transform fixed every corner; rebuilding w from the edges
        # would still cost an ulp, so keep the box bit-identical
        return b
    xs = [p.x for p in projected]
    ys = [p.y for p in projected]
    x, y = min(xs), min(ys)
    # widen by ulps if rounding in (max - min) lost the far edge: the
    # envelope must contain every projected corner, not merely approximate it
    w = max(xs) - x
    while x + w < max(xs):
        w = math.nextafter(w, math.inf)
    hgt = max(ys) - y
    while y + hgt < max(ys):
        hgt = math.nextafter(hgt, math.inf)
    return BBox(x, y, w, hgt)


def invert(h: Homography) -> Homography:
    """Canonicalized matrix inverse."""
    m = h.matrix
    if abs(np.linalg.det(m)) <= SINGULAR_EPS:
        raise SingularMatrix("homography is not invertible")
    return Homography.from_matrix(np.linalg.inv(m))


def residuals(
    h: Homography, correspondences: Sequence[Correspondence]
) -> FitDiagnostics:
    """Euclidean distance between each projected source point and its target."""
    if not correspondences:
        raise EmptyInput("residuals need at least one correspondence")
    dists = []
    for c in correspondences:
        proj = project_point(h, c.source)
        dists.append(math.hypot(proj.x - c.target.x, proj.y - c.target.y))
    rmse = math.sqrt(sum(d * d for d in dists) / len(dists))
    return FitDiagnostics(rmse=rmse, max_error=max(dists), per_point=tuple(dists))


# ---------------------------------------------------------------------------
# file formats

@dataclass(frozen=True)
class CorrespondenceSet:
    """All picked point pairs for one thermal/visible image pair."""

    pair_id: str
    source_image: str
    target_image: str
    points: tuple[Correspondence, ...]


def correspondence_set_to_json(cs: CorrespondenceSet) -> str:
    doc = {
        "pair_id": cs.pair_id,
        "source_image": cs.source_image,
        "target_image": cs.target_image,
        "points": [
            {"sx": c.source.x, "sy": c.source.y, "tx": c.target.x, "ty": c.target.y}
            for c in cs.points
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def correspondence_set_from_json(text: str) -> CorrespondenceSet:
    doc = json.loads(text)
    points = tuple(
        Correspondence(Point2(p["sx"], p["sy"]), Point2(p["tx"], p["ty"]))
        for p in doc["points"]
    )
    return CorrespondenceSet(
        pair_id=doc["pair_id"],
        source_image=doc["source_image"],
        target_image=doc["target_image"],
        points=points,
    )


def homography_to_json(h: Homography, pair_id: str) -> str:
    return json.dumps({"pair_id": pair_id, "matrix": [list(row) for row in h.m]}, indent=2) + "\n"


def homography_from_json(text: str) -> tuple[str, Homography]:
    doc = json.loads(text)
    return doc["pair_id"], Homography.from_matrix(doc["matrix"])
