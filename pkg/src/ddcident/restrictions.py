"""Linear shape restrictions on stacked per-period payoffs.

Builders translate nonparametric economic assumptions (homogeneity, zero
cross-differences, monotonicity, curvature, complementarity, linearity in
parameters, exclusions) into ``(R, c)`` pairs acting on the action-major
stacked payoff vector.  Equalities are stored as ``R @ U = c`` and
inequalities as ``R @ U >= c``.
"""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import RankDeficiencyError

RANK_TOL = 1e-10


@dataclass(frozen=True)
class FactoredStates:
    """Index map for a state space that is a product of named scalar grids.

    The first axis varies fastest in the flat state index.  Payoff columns are
    action-major: column of ``(action k, state x)`` is ``k * J + x`` for
    actions ``k = 0..K-2`` (the last action is normalized away).
    """

    axes: tuple[str, ...]
    grids: tuple[np.ndarray, ...]
    n_actions: int

    def __post_init__(self):
        if len(self.axes) != len(self.grids):
            raise ValueError("axes and grids must align")
        grids = tuple(np.asarray(g, dtype=float) for g in self.grids)
        for name, g in zip(self.axes, grids):
            if g.ndim != 1 or len(g) < 1:
                raise ValueError(f"grid for axis {name!r} must be a nonempty vector")
        object.__setattr__(self, "grids", grids)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(g) for g in self.grids)

    @property
    def n_states(self) -> int:
        return int(np.prod(self.shape))

    @property
    def n_columns(self) -> int:
        return (self.n_actions - 1) * self.n_states

    def axis_pos(self, axis: str) -> int:
        try:
            return self.axes.index(axis)
        except ValueError:
            raise KeyError(f"unknown axis {axis!r}; have {self.axes}") from None

    def grid(self, axis: str) -> np.ndarray:
        return self.grids[self.axis_pos(axis)]

    def state_index(self, coords) -> int:
        """Flat state index from per-axis grid indices (first axis fastest)."""
        idx, stride = 0, 1
        for pos, n in enumerate(self.shape):
            i = int(coords[self.axes[pos]])
            if not 0 <= i < n:
                raise IndexError(f"axis {self.axes[pos]!r} index {i} out of range")
            idx += i * stride
            stride *= n
        return idx

    def column(self, action: int, coords) -> int:
        if not 0 <= action < self.n_actions - 1:
            raise IndexError(f"action {action} has no payoff column (normalized or out of range)")
        return action * self.n_states + self.state_index(coords)

    def iter_coords(self, axes=None):
        """Iterate over dicts of grid indices for the given axes (all by default)."""
        axes = self.axes if axes is None else tuple(axes)
        ranges = [range(len(self.grid(a))) for a in axes]
        for combo in itertools.product(*ranges):
            yield dict(zip(axes, combo))

    def find_on_grid(self, axis: str, value: float, tol: float = 1e-9) -> int:
        """Grid index of a value on an axis; errors if the point is absent."""
        g = self.grid(axis)
        scale = max(1.0, float(np.max(np.abs(g))))
        hits = np.where(np.abs(g - value) <= tol * scale)[0]
        if hits.size == 0:
            raise ValueError(f"value {value} is not on the {axis!r} grid {g}")
        return int(hits[0])


@dataclass(frozen=True)
class RestrictionSet:
    """A batch of linear restrictions ``R @ U (=|>=) c`` on stacked payoffs."""

    R: np.ndarray
    c: np.ndarray
    kind: str  # "eq" or "ge"
    label: str = ""

    def __post_init__(self):
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        c = np.broadcast_to(np.asarray(self.c, dtype=float), (R.shape[0],)).copy()
        if self.kind not in ("eq", "ge"):
            raise ValueError("kind must be 'eq' or 'ge'")
        R.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "c", c)

    @property
    def n_rows(self) -> int:
        return self.R.shape[0]

    @property
    def n_columns(self) -> int:
        return self.R.shape[1]

    def row_rank(self, tol: float = RANK_TOL) -> int:
        if self.n_rows == 0:
            return 0
        s = np.linalg.svd(self.R, compute_uv=False)
        return int(np.sum(s > tol * s[0])) if s[0] > 0 else 0

    def violation(self, U) -> np.ndarray:
        """Signed violations at a payoff vector: equality rows return
        ``R U - c``; inequality rows return ``min(R U - c, 0)``."""
        g = self.R @ np.asarray(U, dtype=float) - self.c
        return g if self.kind == "eq" else np.minimum(g, 0.0)

    def to_json_dict(self) -> dict:
        rows = []
        for row in self.R:
            cols = np.nonzero(row)[0]
            rows.append({"cols": cols.tolist(), "vals": row[cols].tolist()})
        kind = "equality" if self.kind == "eq" else "inequality_ge"
        return {"label": self.label, "kind": kind, "n_columns": self.n_columns,
                "c": self.c.tolist(), "rows": rows}

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_json_dict(), **kwargs)

    @classmethod
    def from_json_dict(cls, d: dict) -> "RestrictionSet":
        kind = {"equality": "eq", "inequality_ge": "ge"}[d["kind"]]
        R = np.zeros((len(d["rows"]), d["n_columns"]))
        for i, row in enumerate(d["rows"]):
            R[i, row["cols"]] = row["vals"]
        return cls(R=R, c=np.asarray(d["c"], dtype=float), kind=kind, label=d.get("label", ""))

    @classmethod
    def from_json(cls, s: str) -> "RestrictionSet":
        return cls.from_json_dict(json.loads(s))


def stack_restrictions(sets, label: str = "", drop_dependent: bool = True) -> RestrictionSet:
    """Concatenate restriction sets of one kind; dependent rows are dropped with a warning."""
    sets = list(sets)
    kinds = {s.kind for s in sets}
    if len(kinds) != 1:
        raise ValueError("cannot stack restriction sets of different kinds")
    R = np.vstack([s.R for s in sets])
    c = np.concatenate([s.c for s in sets])
    if drop_dependent and R.shape[0] > 1:
        keep = []
        for i in range(R.shape[0]):
            trial = R[keep + [i]]
            s = np.linalg.svd(trial, compute_uv=False)
            if np.sum(s > RANK_TOL * s[0]) == len(keep) + 1:
                keep.append(i)
        if len(keep) < R.shape[0]:
            warnings.warn(
                f"dropped {R.shape[0] - len(keep)} linearly dependent restriction rows",
                stacklevel=2,
            )
            R, c = R[keep], c[keep]
    return RestrictionSet(R=R, c=c, kind=sets[0].kind, label=label or "+".join(s.label for s in sets))


def _other_axes(fs: FactoredStates, *used):
    return tuple(a for a in fs.axes if a not in used)


def homogeneity_known_nu(fs: FactoredStates, action: int, base: float, lambdas, nu: float,
                         axis: str = "w") -> RestrictionSet:
    """Rows ``u(base*lam, z) - lam**nu * u(base, z) = 0`` for each multiplier and
    each combination of the remaining axes.  Every ray point must be on the grid."""
    lambdas = [float(l) for l in lambdas]
    i_base = fs.find_on_grid(axis, base)
    i_ray = [fs.find_on_grid(axis, l * base) for l in lambdas]
    rows = []
    for other in fs.iter_coords(_other_axes(fs, axis)):
        for lam, i_l in zip(lambdas, i_ray):
            row = np.zeros(fs.n_columns)
            row[fs.column(action, {**other, axis: i_l})] += 1.0
            row[fs.column(action, {**other, axis: i_base})] -= lam ** nu
            rows.append(row)
    return RestrictionSet(np.array(rows), 0.0, "eq", label=f"homogeneity(nu={nu})")


def log_homogeneity(fs: FactoredStates, action: int, base: float, lambdas,
                    axis: str = "w") -> RestrictionSet:
    """Degree-free homogeneity of a log-transformed payoff: scaled increments along a
    ray agree across multipliers, eliminating the unknown degree.

    ``lambdas`` lists the ray multipliers beyond 1; at least two are required.
    """
    lambdas = [float(l) for l in lambdas]
    if len(lambdas) < 2:
        raise ValueError("insufficient ray points: need at least two multipliers besides 1")
    i_base = fs.find_on_grid(axis, base)
    i_ray = [fs.find_on_grid(axis, l * base) for l in lambdas]
    lam2, i2 = lambdas[0], i_ray[0]
    rows = []
    for other in fs.iter_coords(_other_axes(fs, axis)):
        for lam, i_l in zip(lambdas[1:], i_ray[1:]):
            row = np.zeros(fs.n_columns)
            row[fs.column(action, {**other, axis: i_l})] += 1.0 / np.log(lam)
            row[fs.column(action, {**other, axis: i2})] -= 1.0 / np.log(lam2)
            row[fs.column(action, {**other, axis: i_base})] += 1.0 / np.log(lam2) - 1.0 / np.log(lam)
            rows.append(row)
    return RestrictionSet(np.array(rows), 0.0, "eq", label="log_homogeneity")


def additive_homogeneous(fs: FactoredStates, action: int, nu: float = 1.0,
                         axis: str = "w") -> RestrictionSet:
    """Additive separability with a homogeneous-of-degree-``nu`` component in a scalar axis.

    For ``nu == 1`` this is the divided-second-difference form over consecutive
    grid triplets (valid on any grid, including one through zero); for other
    degrees the grid points of each triplet must be nonzero with a common sign
    and are treated as a ray anchored at the leftmost point.
    """
    g = fs.grid(axis)
    if len(g) < 3:
        raise ValueError(f"axis {axis!r} needs at least 3 grid points, has {len(g)}")
    rows = []
    for other in fs.iter_coords(_other_axes(fs, axis)):
        for l in range(len(g) - 2):
            row = np.zeros(fs.n_columns)
            c0 = fs.column(action, {**other, axis: l})
            c1 = fs.column(action, {**other, axis: l + 1})
            c2 = fs.column(action, {**other, axis: l + 2})
            if nu == 1.0:
                d1, d2 = g[l + 1] - g[l], g[l + 2] - g[l + 1]
                row[c2] += 1.0 / d2
                row[c1] -= 1.0 / d2 + 1.0 / d1
                row[c0] += 1.0 / d1
            else:
                if g[l] == 0.0 or g[l] * g[l + 1] <= 0.0 or g[l] * g[l + 2] <= 0.0:
                    raise ValueError(
                        f"axis {axis!r} grid is not a ray away from zero; "
                        f"degree-{nu} homogeneity rows are not available"
                    )
                a2 = (g[l + 2] / g[l]) ** nu - 1.0
                a1 = (g[l + 1] / g[l]) ** nu - 1.0
                row[c2] += 1.0 / a2
                row[c1] -= 1.0 / a1
                row[c0] += 1.0 / a1 - 1.0 / a2
            rows.append(row)
    return RestrictionSet(np.array(rows), 0.0, "eq", label=f"additive_homogeneous(nu={nu})")


def zero_cross_difference(fs: FactoredStates, action: int, diff_axis: str,
                          invariant_axes=None, diff_points=None,
                          invariant_points=None) -> RestrictionSet:
    """Differences along ``diff_axis`` are invariant across the named axes.

    Rows anchor at the first listed point of each set:
    ``[u(d_i, a_j) - u(d_0, a_j)] - [u(d_i, a_0) - u(d_0, a_0)] = 0`` giving
    ``(n_diff - 1) * (n_invariant - 1)`` rows (per combination of any axes not
    named, if the two sets do not exhaust the state space).
    """
    if invariant_axes is None:
        invariant_axes = _other_axes(fs, diff_axis)
    invariant_axes = tuple(invariant_axes)
    d_pts = list(range(len(fs.grid(diff_axis)))) if diff_points is None else list(diff_points)
    a_pts = list(invariant_points) if invariant_points is not None else \
        [tuple(c[a] for a in invariant_axes) for c in fs.iter_coords(invariant_axes)]
    if len(d_pts) < 2 or len(a_pts) < 2:
        raise ValueError("need at least two points along the difference axis and two across")
    rest = _other_axes(fs, diff_axis, *invariant_axes)
    rows = []
    for other in fs.iter_coords(rest):
        for d in d_pts[1:]:
            for a in a_pts[1:]:
                row = np.zeros(fs.n_columns)
                for sign_d, dd in ((1.0, d), (-1.0, d_pts[0])):
                    for sign_a, aa in ((1.0, a), (-1.0, a_pts[0])):
                        coords = {**other, diff_axis: dd,
                                  **dict(zip(invariant_axes, aa))}
                        row[fs.column(action, coords)] += sign_d * sign_a
                rows.append(row)
    return RestrictionSet(np.array(rows), 0.0, "eq", label=f"zero_cross({diff_axis})")


def exclusion(fs: FactoredStates, pair_a, pair_b) -> RestrictionSet:
    """Equate the payoff at two action-state pairs (one row).

    Each pair is ``(action, coords)``.  If the second action is the normalized
    last action, its term is dropped (that payoff is identically zero).
    """
    (ka, ca), (kb, cb) = pair_a, pair_b
    row = np.zeros(fs.n_columns)
    row[fs.column(ka, ca)] += 1.0
    if kb == fs.n_actions - 1:
        pass  # normalized action contributes nothing
    else:
        col_b = fs.column(kb, cb)
        if row[col_b] != 0.0:
            raise ValueError("exclusion must reference two distinct action-state pairs")
        row[col_b] -= 1.0
    return RestrictionSet(row[None, :], 0.0, "eq", label="exclusion")


def monotonicity(fs: FactoredStates, action: int, axis: str,
                 direction: str = "increasing") -> RestrictionSet:
    """Weak monotonicity along an ascending scalar axis:
    ``u(next) - u(cur) >= 0`` (or the reverse for ``direction='decreasing'``)."""
    g = fs.grid(axis)
    if np.any(np.diff(g) <= 0):
        raise ValueError(f"axis {axis!r} grid must be strictly ascending")
    sgn = {"increasing": 1.0, "decreasing": -1.0}[direction]
    rows = []
    for other in fs.iter_coords(_other_axes(fs, axis)):
        for l in range(len(g) - 1):
            row = np.zeros(fs.n_columns)
            row[fs.column(action, {**other, axis: l + 1})] += sgn
            row[fs.column(action, {**other, axis: l})] -= sgn
            rows.append(row)
    return RestrictionSet(np.array(rows), 0.0, "ge", label=f"monotonicity({axis},{direction})")


def concavity(fs: FactoredStates, action: int, axis: str, *, convex: bool = False) -> RestrictionSet:
    """Curvature along a scalar axis via divided second differences.

    With ``convex=False`` the rows assert weak concavity (consecutive divided
    differences are non-increasing, so a function like ``-x**2`` satisfies every
    row); ``convex=True`` flips the orientation.  Divided differences use the
    actual grid coordinates, so non-equispaced grids are handled correctly.
    """
    g = fs.grid(axis)
    if len(g) < 3:
        raise ValueError(f"axis {axis!r} needs at least 3 grid points, has {len(g)}")
    # divided second difference: nonnegative for convex u, nonpositive for concave u
    sgn = 1.0 if convex else -1.0
    rows = []
    for other in fs.iter_coords(_other_axes(fs, axis)):
        for l in range(len(g) - 2):
            d1, d2 = g[l + 1] - g[l], g[l + 2] - g[l + 1]
            row = np.zeros(fs.n_columns)
            row[fs.column(action, {**other, axis: l})] += sgn / d1
            row[fs.column(action, {**other, axis: l + 1})] -= sgn * (1.0 / d1 + 1.0 / d2)
            row[fs.column(action, {**other, axis: l + 2})] += sgn / d2
            rows.append(row)
    return RestrictionSet(np.array(rows), 0.0, "ge",
                          label=f"{'convexity' if convex else 'concavity'}({axis})")


def complementarity(fs: FactoredStates, action: int, axes=("w", "z"),
                    direction: str = "complements") -> RestrictionSet:
    """Sign-restricted cross-differences between two scalar axes.

    ``complements`` asserts ``u(w+, z+) - u(w+, z) - u(w, z+) + u(w, z) >= 0``
    for every adjacent cell of the two grids (per combination of remaining
    axes); ``substitutes`` reverses the sign.
    """
    ax_w, ax_z = axes
    gw, gz = fs.grid(ax_w), fs.grid(ax_z)
    sgn = {"complements": 1.0, "substitutes": -1.0}[direction]
    rows = []
    for other in fs.iter_coords(_other_axes(fs, ax_w, ax_z)):
        for l in range(len(gw) - 1):
            for m in range(len(gz) - 1):
                row = np.zeros(fs.n_columns)
                row[fs.column(action, {**other, ax_w: l + 1, ax_z: m + 1})] += sgn
                row[fs.column(action, {**other, ax_w: l + 1, ax_z: m})] -= sgn
                row[fs.column(action, {**other, ax_w: l, ax_z: m + 1})] -= sgn
                row[fs.column(action, {**other, ax_w: l, ax_z: m})] += sgn
                rows.append(row)
    return RestrictionSet(np.array(rows), 0.0, "ge", label=f"complementarity({ax_w},{ax_z})")


def linear_in_parameters(H, label: str = "linearity") -> RestrictionSet:
    """Kernel restrictions for a payoff that is linear in parameters, ``U = H theta``.

    Returns an orthonormal basis of the left null space of ``H`` as equality
    rows, so ``R @ U = R @ H @ theta = 0`` for every parameter vector.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    p, d = H.shape
    Umat, s, _ = np.linalg.svd(H, full_matrices=True)
    rank = int(np.sum(s > RANK_TOL * s[0])) if s.size and s[0] > 0 else 0
    if rank < d:
        raise RankDeficiencyError(
            f"design matrix must have full column rank {d}, numeric rank is {rank}",
            rank=rank, required=d,
        )
    R = Umat[:, rank:].T
    return RestrictionSet(R, np.zeros(p - rank), "eq", label=label)


def log_diff_restriction(fs: FactoredStates, action: int, base: float, lambdas,
                         nu: float | None = None, axis: str = "w") -> tuple[np.ndarray, float]:
    """Weight vector ``r`` with ``sum(r) = 0`` for a restriction on log payoffs,
    ``r @ log(U) = 0``.

    With ``nu=None`` the payoff is homogeneous of unknown degree along the ray
    (weights ``1/log(lambda)``); with a known ``nu`` the payoff is the
    exponential of an additively separable function whose ray component is
    homogeneous of degree ``nu`` (weights ``1/(lambda**nu - 1)``).
    """
    lambdas = [float(l) for l in lambdas]
    if len(lambdas) < 2:
        raise ValueError("insufficient ray points: need at least two multipliers besides 1")
    i_base = fs.find_on_grid(axis, base)
    i_ray = [fs.find_on_grid(axis, l * base) for l in lambdas]

    def weight(lam):
        return 1.0 / np.log(lam) if nu is None else 1.0 / (lam ** nu - 1.0)

    other = next(fs.iter_coords(_other_axes(fs, axis)))
    lam2, i2 = lambdas[0], i_ray[0]
    lam3, i3 = lambdas[1], i_ray[1]
    r = np.zeros(fs.n_columns)
    r[fs.column(action, {**other, axis: i3})] += weight(lam3)
    r[fs.column(action, {**other, axis: i2})] -= weight(lam2)
    r[fs.column(action, {**other, axis: i_base})] += weight(lam2) - weight(lam3)
    if abs(r.sum()) > 1e-12:
        raise ValueError("log-difference weights failed to sum to zero")
    return r, 0.0
