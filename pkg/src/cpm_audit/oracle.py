"""Exact discrepancy over convex families on tiny point sets.

For empirical two-sample data the optimal closed convex set in either
direction is the hull of a subset of the inside-class points, so full
subset enumeration gives the exact supremum over all closed convex sets.
The halfspace oracle enumerates hyperplanes through affinely independent
point subsets with boundary assignments, giving the exact supremum over
closed halfspaces. Both are enumeration-guarded and meant for desk-scale
ground truth, not production audits.
"""

from __future__ import annotations

import dataclasses
import itertools

import numpy as np
from scipy.optimize import linprog, nnls
from scipy.spatial import ConvexHull, QhullError

from .data import feature_matrix

FEASIBILITY_TOL = 1e-9

MAX_CONVEX_CLASS_POINTS = 16
MAX_HALFSPACE_POINTS = 30
MAX_HALFSPACE_DIM = 4


class SizeGuardError(ValueError):
    """Instance is too large for exact enumeration."""


@dataclasses.dataclass(frozen=True)
class PointSet:
    """Empirical member and nonmember point clouds in a shared space."""

    members: np.ndarray
    nonmembers: np.ndarray

    def __post_init__(self):
        members = np.atleast_2d(np.asarray(self.members, dtype=np.float64))
        nonmembers = np.atleast_2d(np.asarray(self.nonmembers, dtype=np.float64))
        if members.shape[0] == 0 or nonmembers.shape[0] == 0:
            raise ValueError("both point lists must be non-empty")
        if members.shape[1] != nonmembers.shape[1] or members.shape[1] < 1:
            raise ValueError("point dimensions must agree and be >= 1")
        if not (np.all(np.isfinite(members)) and np.all(np.isfinite(nonmembers))):
            raise ValueError("points must be finite")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "nonmembers", nonmembers)

    @property
    def dim(self) -> int:
        return int(self.members.shape[1])


@dataclasses.dataclass(frozen=True)
class DiscrepancyResult:
    """Optimal value, the class inside the witness set, and the witness itself."""

    value: float
    direction: str
    witness: dict


def feature_point_set(num_classes: int, records) -> PointSet:
    """PointSet of (probs, one-hot) feature vectors split by membership."""
    members = [r for r in records if r.is_member]
    nonmembers = [r for r in records if not r.is_member]
    return PointSet(
        feature_matrix(members, num_classes), feature_matrix(nonmembers, num_classes)
    )


def hull_contains(hull_points, q, tol: float = FEASIBILITY_TOL) -> bool:
    """Whether q is a convex combination of hull_points (boundary counts).

    Decided by linear feasibility of the convex-combination system: a point
    is inside iff some nonnegative weights summing to 1 reproduce it within
    ``tol``. Nonnegative least squares answers first; because the residual
    is recomputed from its weights, it can never claim a point inside
    wrongly, and the occasional suboptimal solve (seen in some scipy
    releases) is rescued by an LP feasibility pass at the same tolerance.
    """
    pts = np.atleast_2d(np.asarray(hull_points, dtype=np.float64))
    if pts.shape[0] == 0:
        raise ValueError("hull_points must be non-empty")
    q = np.asarray(q, dtype=np.float64)
    system = np.vstack([pts.T, np.ones(pts.shape[0])])
    target = np.concatenate([q, [1.0]])
    weights, _ = nnls(system, target)
    if np.linalg.norm(system @ weights - target) <= tol:
        return True
    result = linprog(
        np.zeros(pts.shape[0]),
        A_eq=system,
        b_eq=target,
        bounds=[(0, None)] * pts.shape[0],
        method="highs",
    )
    if result.status != 0:
        return False
    return bool(np.linalg.norm(system @ result.x - target) <= tol)


def _affine_reduce(points: np.ndarray, tol: float):
    """Project points onto their affine span; returns (coords, basis, origin)."""
    origin = points[0]
    centered = points - origin
    if centered.shape[0] == 1:
        return np.zeros((1, 0)), np.zeros((0, points.shape[1])), origin
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    scale = svals[0] if svals.size and svals[0] > 0 else 1.0
    rank = int(np.sum(svals > tol * max(1.0, scale)))
    basis = vt[:rank]
    return centered @ basis.T, basis, origin


def _batch_hull_contains(hull_coords, query_coords, tol):
    """Containment of every query in hull(hull_coords), in reduced coordinates."""
    sub_coords, sub_basis, sub_origin = _affine_reduce(hull_coords, tol)
    centered = query_coords - sub_origin
    rank = sub_basis.shape[0]
    if rank == 0:
        return np.linalg.norm(centered, axis=1) <= tol
    local = centered @ sub_basis.T
    off_span = np.linalg.norm(centered - local @ sub_basis, axis=1)
    in_span = off_span <= tol
    if rank == 1:
        t = local[:, 0]
        lo, hi = sub_coords[:, 0].min(), sub_coords[:, 0].max()
        return in_span & (t >= lo - tol) & (t <= hi + tol)
    try:
        hull = ConvexHull(sub_coords)
    except QhullError:
        return np.array(
            [hull_contains(hull_coords, q, tol) for q in query_coords], dtype=bool
        )
    slack = local @ hull.equations[:, :-1].T + hull.equations[:, -1]
    return in_span & np.all(slack <= tol, axis=1)


def _best_hull_subset(inside, other, inside_name, tol):
    """Max over subsets T of inside points of the hull-count difference."""
    m, n = inside.shape[0], other.shape[0]
    stacked = np.vstack([inside, other])
    best_val = 0.0
    best_witness = {"kind": "empty", "inside": inside_name, "indices": []}
    indices = np.arange(m)
    for mask in range(1, 2**m):
        subset = indices[[(mask >> i) & 1 == 1 for i in range(m)]]
        contained = _batch_hull_contains(inside[subset], stacked, tol)
        val = contained[:m].sum() / m - contained[m:].sum() / n
        if val > best_val:
            best_val = float(val)
            best_witness = {
                "kind": "hull",
                "inside": inside_name,
                "indices": [int(i) for i in subset],
            }
    return best_val, best_witness


def recount_hull_witness(points: PointSet, witness: dict, tol: float = FEASIBILITY_TOL):
    """Recount member/nonmember fractions of a hull witness via hull_contains."""
    if witness["kind"] == "empty":
        return 0.0, 0.0
    hull_pts = (
        points.members[witness["indices"]]
        if witness["inside"] == "members-inside"
        else points.nonmembers[witness["indices"]]
    )
    frac_m = np.mean([hull_contains(hull_pts, q, tol) for q in points.members])
    frac_n = np.mean([hull_contains(hull_pts, q, tol) for q in points.nonmembers])
    return float(frac_m), float(frac_n)


def exact_convex_discrepancy(
    points: PointSet, tol: float = FEASIBILITY_TOL
) -> DiscrepancyResult:
    """Exact discrepancy over all closed convex sets for the empirical pair.

    Enumerates hulls of subsets of the inside-class points in both
    directions; the returned value is recomputed from the witness with the
    ``hull_contains`` feasibility primitive.
    """
    m, n = points.members.shape[0], points.nonmembers.shape[0]
    if m > MAX_CONVEX_CLASS_POINTS or n > MAX_CONVEX_CLASS_POINTS:
        raise SizeGuardError(
            f"convex oracle is limited to {MAX_CONVEX_CLASS_POINTS} points per class, "
            f"got {m} members and {n} nonmembers"
        )
    stacked = np.vstack([points.members, points.nonmembers])
    coords, _, _ = _affine_reduce(stacked, tol)
    mem_c, non_c = coords[:m], coords[m:]

    val_m, wit_m = _best_hull_subset(mem_c, non_c, "members-inside", tol)
    val_n, wit_n = _best_hull_subset(non_c, mem_c, "nonmembers-inside", tol)
    if val_n > val_m:
        witness, direction = wit_n, "nonmembers-inside"
    else:
        witness, direction = wit_m, "members-inside"

    frac_m, frac_n = recount_hull_witness(points, witness, tol)
    return DiscrepancyResult(abs(frac_m - frac_n), direction, witness)


def _hyperplane_normal(subset_coords: np.ndarray, tol: float):
    """Unit normal of the hyperplane through the subset, or None if degenerate."""
    rank = subset_coords.shape[1]
    if rank == 1:
        return np.array([1.0])
    diffs = subset_coords[1:] - subset_coords[0]
    _, svals, vt = np.linalg.svd(diffs)
    scale = max(1.0, svals[0]) if svals.size else 1.0
    if svals.size < rank - 1 or svals[rank - 2] <= tol * scale:
        return None
    return vt[-1]


def _halfspace_side_value(
    delta, is_member, defining, coords, tol, m, n
) -> tuple[float, list[int]]:
    """Best value of the halfspace {delta <= 0} over boundary assignments.

    ``defining`` indexes the affinely independent points the hyperplane was
    built from; their boundary sides can be assigned freely by an
    infinitesimal tilt, while any other boundary point's side is forced by
    its affine coordinates in the defining set.
    """
    strict_in = delta < -tol
    boundary = np.abs(delta) <= tol
    base = strict_in[is_member].sum() / m - strict_in[~is_member].sum() / n

    bnd_idx = np.flatnonzero(boundary)
    extras = [i for i in bnd_idx if i not in defining]
    gain = np.where(is_member, 1.0 / m, -1.0 / n)

    if not extras:
        inside = [int(i) for i in bnd_idx if gain[i] > 0]
        return float(base + sum(gain[i] for i in inside)), inside

    # Forced-side case: solve each extra's affine coordinates once, then
    # scan every assignment of the defining points.
    return _halfspace_degenerate_value(base, extras, defining, coords, gain, tol)


def _halfspace_degenerate_value(base, extras, defining, coords, gain, tol):
    d_pts = coords[list(defining)]
    system = np.vstack([d_pts.T, np.ones(len(defining))])
    alphas = {}
    for e in extras:
        target = np.concatenate([coords[e], [1.0]])
        alpha, *_ = np.linalg.lstsq(system, target, rcond=None)
        alphas[e] = alpha

    best_val = -np.inf
    best_inside: list[int] = []
    for choice in itertools.product((-1.0, 1.0), repeat=len(defining)):
        sigma = np.array(choice)
        inside = [d for d, c in zip(defining, choice) if c < 0]
        val = base + sum(gain[i] for i in inside)
        ok_extras = []
        for e in extras:
            tilt = float(alphas[e] @ sigma)
            if tilt < -tol:
                ok_extras.append(e)
                val += gain[e]
            # Ambiguous tilts (|tilt| <= tol) stay outside: deeper degeneracy
            # than a single perturbation can resolve.
        if val > best_val:
            best_val = val
            best_inside = sorted(inside + ok_extras)
    return float(best_val), [int(i) for i in best_inside]


def exact_halfspace_discrepancy(
    points: PointSet, tol: float = FEASIBILITY_TOL
) -> DiscrepancyResult:
    """Exact discrepancy over all closed halfspaces for the empirical pair.

    Works in the affine span of the pooled points, enumerating hyperplanes
    through every affinely independent subset of span-rank size in both
    orientations with boundary sides assigned optimally; affinely dependent
    subsets are skipped. The trivial all/none halfspaces anchor the value
    at zero.
    """
    m, n = points.members.shape[0], points.nonmembers.shape[0]
    total = m + n
    if total > MAX_HALFSPACE_POINTS or points.dim > MAX_HALFSPACE_DIM:
        raise SizeGuardError(
            f"halfspace oracle is limited to {MAX_HALFSPACE_POINTS} points in "
            f"dimension <= {MAX_HALFSPACE_DIM}, got {total} points in d={points.dim}"
        )
    stacked = np.vstack([points.members, points.nonmembers])
    is_member = np.zeros(total, dtype=bool)
    is_member[:m] = True
    coords, basis, origin = _affine_reduce(stacked, tol)
    rank = basis.shape[0]

    best_value = 0.0
    best_witness: dict = {"kind": "none"}
    if rank == 0:
        return DiscrepancyResult(0.0, "members-inside", best_witness)

    for combo in itertools.combinations(range(total), rank):
        normal = _hyperplane_normal(coords[list(combo)], tol)
        if normal is None:
            continue
        offset = float(normal @ coords[combo[0]])
        delta = coords @ normal - offset
        for orient in (1.0, -1.0):
            val, inside_boundary = _halfspace_side_value(
                orient * delta, is_member, combo, coords, tol, m, n
            )
            if val > best_value:
                best_value = val
                full_normal = orient * (basis.T @ normal)
                best_witness = {
                    "kind": "halfspace",
                    "normal": [float(x) for x in full_normal],
                    "offset": float(orient * offset + full_normal @ origin),
                    "boundary_inside": inside_boundary,
                }
    return DiscrepancyResult(best_value, "members-inside", best_witness)


def recount_halfspace_witness(
    points: PointSet, witness: dict, tol: float = FEASIBILITY_TOL
):
    """Recount member/nonmember fractions of a halfspace witness."""
    m, n = points.members.shape[0], points.nonmembers.shape[0]
    if witness["kind"] == "none":
        return 0.0, 0.0
    stacked = np.vstack([points.members, points.nonmembers])
    delta = stacked @ np.asarray(witness["normal"]) - witness["offset"]
    inside = delta < -tol
    for i in witness["boundary_inside"]:
        inside[i] = True
    return float(inside[:m].mean()), float(inside[m:].mean())
