"""Dense polynomials in the discount factor and the matrix identities built on them.

Everything downstream reduces to scalar polynomials ``p(beta)`` and matrix
polynomials ``M(beta)`` with real coefficients: the determinant and adjugate of
``I - beta*Q`` for a row-stochastic ``Q``, root extraction on ``[0, 1)``, and
sign-region scans for systems of polynomial inequalities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import numpy.polynomial.polynomial as npoly

from .errors import UninformativeRestrictionError

# Default numerical policy.  Coefficients are always normalized by their
# max-abs value before root or sign work, so these are relative tolerances.
ROOT_RESIDUAL_TOL = 1e-8
ROOT_IMAG_TOL = 1e-8
ROOT_CLUSTER_TOL = 1e-7
LEADING_COEFF_TOL = 1e-12
SIGN_GRID_POINTS = 2001
SIGN_REFINE_TOL = 1e-10
PIVOT_TOL = 1e-10


class BetaPoly:
    """Polynomial in the discount factor with real coefficients.

    ``coeffs[j]`` multiplies ``beta**j``.  Exact trailing zeros are trimmed on
    construction so the stored degree is the true degree (the zero polynomial
    is stored as the single coefficient ``0.0``).
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        c = np.atleast_1d(np.asarray(coeffs, dtype=float))
        if c.ndim != 1:
            raise ValueError("coefficients must be one-dimensional")
        nz = np.nonzero(c)[0]
        c = c[: nz[-1] + 1] if nz.size else c[:1] * 0.0
        self.coeffs = c
        self.coeffs.setflags(write=False)

    @classmethod
    def zero(cls) -> "BetaPoly":
        return cls([0.0])

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return len(self.coeffs) == 1 and self.coeffs[0] == 0.0

    @property
    def max_abs_coeff(self) -> float:
        return float(np.max(np.abs(self.coeffs)))

    def __call__(self, beta):
        return npoly.polyval(beta, self.coeffs)

    def derivative(self) -> "BetaPoly":
        return BetaPoly(npoly.polyder(self.coeffs))

    def normalized(self) -> "BetaPoly":
        """Divide by the max-abs coefficient; the zero polynomial is returned as is."""
        s = self.max_abs_coeff
        return self if s == 0.0 else BetaPoly(self.coeffs / s)

    def __add__(self, other):
        return BetaPoly(npoly.polyadd(self.coeffs, _coeffs_of(other)))

    __radd__ = __add__

    def __sub__(self, other):
        return BetaPoly(npoly.polysub(self.coeffs, _coeffs_of(other)))

    def __rsub__(self, other):
        return BetaPoly(npoly.polysub(_coeffs_of(other), self.coeffs))

    def __mul__(self, other):
        if isinstance(other, BetaPoly):
            return BetaPoly(npoly.polymul(self.coeffs, other.coeffs))
        return BetaPoly(self.coeffs * float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return BetaPoly(-self.coeffs)

    def __repr__(self):
        return f"BetaPoly(degree={self.degree}, coeffs={np.array2string(self.coeffs, precision=6)})"


def _coeffs_of(x):
    if isinstance(x, BetaPoly):
        return x.coeffs
    return np.atleast_1d(np.asarray(x, dtype=float))


class MatrixPoly:
    """Matrix whose entries are polynomials in the discount factor.

    Stored as a stack of coefficient matrices: ``coeff_mats[j]`` multiplies
    ``beta**j``.  All coefficient matrices share the same shape (rectangular
    allowed).
    """

    __slots__ = ("coeff_mats",)

    def __init__(self, coeff_mats):
        mats = np.asarray(coeff_mats, dtype=float)
        if mats.ndim != 3:
            raise ValueError("expected a stack of equally shaped coefficient matrices")
        self.coeff_mats = mats
        self.coeff_mats.setflags(write=False)

    @property
    def degree(self) -> int:
        return self.coeff_mats.shape[0] - 1

    @property
    def shape(self):
        return self.coeff_mats.shape[1:]

    def __call__(self, beta: float) -> np.ndarray:
        powers = float(beta) ** np.arange(self.coeff_mats.shape[0])
        return np.tensordot(powers, self.coeff_mats, axes=1)

    def apply(self, vec) -> np.ndarray:
        """Right-multiply by a constant vector; rows of the result are
        polynomial coefficient vectors, shape ``(nrows, degree + 1)``."""
        v = np.asarray(vec, dtype=float)
        return np.einsum("dij,j->id", self.coeff_mats, v)

    def premultiply(self, mat) -> "MatrixPoly":
        """Left-multiply every coefficient matrix by a constant matrix."""
        m = np.asarray(mat, dtype=float)
        return MatrixPoly(np.einsum("ij,djk->dik", m, self.coeff_mats))

    def premultiply_i_minus_beta(self, Q) -> "MatrixPoly":
        """Return ``(I - beta*Q)`` times this polynomial (degree rises by one)."""
        Q = np.asarray(Q, dtype=float)
        d, n, m = self.coeff_mats.shape
        out = np.zeros((d + 1, n, m))
        out[:d] = self.coeff_mats
        out[1:] -= np.einsum("ij,djk->dik", Q, self.coeff_mats)
        return MatrixPoly(out)


@dataclass(frozen=True)
class RootSet:
    """Real roots of a polynomial (system) on an interval, sorted ascending.

    ``residuals`` holds ``|p(root)| / max|coeff|`` per root.  ``uninformative``
    marks a restriction that held identically, so every point of the domain was
    consistent with it.
    """

    points: np.ndarray
    residuals: np.ndarray
    uninformative: bool = False

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class SignRegion:
    """Disjoint sorted subintervals of ``[0, 1)`` where a polynomial system
    satisfies a sign condition.

    An upper endpoint equal to ``1.0`` denotes the open right edge of the
    domain (the point ``1`` itself is always excluded).
    """

    intervals: list = field(default_factory=list)

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return any(lo - tol <= x <= hi + tol for lo, hi in self.intervals)

    def __iter__(self):
        return iter(self.intervals)

    def __len__(self):
        return len(self.intervals)


def _check_stochastic(Q, tol=1e-10):
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ValueError(f"transition matrix must be square, got shape {Q.shape}")
    if np.any(Q < -tol):
        raise ValueError("transition matrix has negative entries")
    rows = Q.sum(axis=1)
    bad = np.where(np.abs(rows - 1.0) > tol)[0]
    if bad.size:
        raise ValueError(
            f"transition matrix rows {bad.tolist()} sum to {rows[bad]} (must be 1 within {tol})"
        )
    return Q


def faddeev_adj_det(Q) -> tuple[MatrixPoly, BetaPoly]:
    """Adjugate and determinant of ``I - beta*Q`` as explicit polynomials.

    Uses the trace recursion obtained by matching powers of beta in
    ``(I - beta*Q) adj(I - beta*Q) = det(I - beta*Q) I`` together with the
    derivative identity ``d/dbeta det(I - beta*Q) = -tr(Q adj(I - beta*Q))``:

        A_0 = I,  d_0 = 1,
        d_j = -tr(Q A_{j-1}) / j,
        A_j = Q A_{j-1} + d_j I.

    Returns the degree ``J - 1`` adjugate and the degree ``J`` determinant.
    """
    Q = _check_stochastic(Q)
    J = Q.shape[0]
    adj = np.zeros((J, J, J))
    det = np.zeros(J + 1)
    adj[0] = np.eye(J)
    det[0] = 1.0
    work = np.eye(J)
    for j in range(1, J + 1):
        work = Q @ work
        det[j] = -np.trace(work) / j
        if j < J:
            work = work + det[j] * np.eye(J)
            adj[j] = work
    return MatrixPoly(adj), BetaPoly(det)


def _effective_coeffs(p: BetaPoly, leading_tol: float):
    """Normalize by max-abs and drop numerically negligible leading coefficients."""
    scale = p.max_abs_coeff
    if scale == 0.0:
        raise UninformativeRestrictionError(
            "polynomial is identically zero; the restriction is uninformative"
        )
    c = p.coeffs / scale
    keep = len(c)
    while keep > 1 and abs(c[keep - 1]) <= leading_tol:
        keep -= 1
    return c[:keep], scale


def roots_in_interval(
    p: BetaPoly,
    lo: float = 0.0,
    hi: float = 1.0,
    *,
    residual_tol: float = ROOT_RESIDUAL_TOL,
    imag_tol: float = ROOT_IMAG_TOL,
    cluster_tol: float = ROOT_CLUSTER_TOL,
) -> RootSet:
    """All real roots of ``p`` in the half-open interval ``[lo, hi)``.

    Companion-matrix eigenvalues of the max-abs-scaled polynomial, followed by
    Newton refinement.  A candidate is accepted when its imaginary part and its
    relative residual are both below tolerance; accepted roots are deduplicated
    within ``cluster_tol``.

    Raises
    ------
    UninformativeRestrictionError
        If ``p`` is identically zero (distinct from an empty root set).
    """
    if not lo < hi:
        raise ValueError("need lo < hi")
    c, _ = _effective_coeffs(p, LEADING_COEFF_TOL)
    if len(c) == 1:
        return RootSet(np.empty(0), np.empty(0))

    cand = npoly.polyroots(c)
    dc = npoly.polyder(c)
    for _ in range(8):
        val = npoly.polyval(cand, c)
        der = npoly.polyval(cand, dc)
        step = np.where(der != 0.0, val / np.where(der == 0.0, 1.0, der), 0.0)
        cand = cand - step

    real = cand[np.abs(cand.imag) <= imag_tol].real
    # half-open interval: points indistinguishable from hi (within the cluster
    # radius) are treated as hi and excluded; likewise snapped up to lo
    real = real[(real >= lo - cluster_tol) & (real < hi - cluster_tol)]
    real = np.clip(real, lo, None)
    real = real[np.abs(npoly.polyval(real, c)) <= residual_tol]
    if real.size == 0:
        return RootSet(np.empty(0), np.empty(0))

    real.sort()
    clusters = [[real[0]]]
    for r in real[1:]:
        if r - clusters[-1][-1] <= cluster_tol:
            clusters[-1].append(r)
        else:
            clusters.append([r])
    pts = np.array([np.mean(cl) for cl in clusters])
    res = np.abs(npoly.polyval(pts, c))
    return RootSet(pts, res)


def sign_region(
    ps,
    direction: str = "le",
    *,
    lo: float = 0.0,
    hi: float = 1.0,
    grid_points: int = SIGN_GRID_POINTS,
    refine_tol: float = SIGN_REFINE_TOL,
) -> SignRegion:
    """Subintervals of ``[lo, hi)`` where every polynomial satisfies a sign condition.

    ``direction`` is ``"le"`` (all ``p <= 0``) or ``"ge"`` (all ``p >= 0``).
    Feasibility is detected on an equispaced grid and interval boundaries are
    refined by bisection.  The grid resolution is a documented heuristic: the
    polynomials this package produces (degree <= ~24) do not oscillate between
    adjacent points at the default resolution.
    """
    if direction not in ("le", "ge"):
        raise ValueError("direction must be 'le' or 'ge'")
    sgn = 1.0 if direction == "le" else -1.0
    coeff_list = []
    for p in ps:
        pn = p.normalized()
        if not pn.is_zero:
            coeff_list.append(sgn * pn.coeffs)
    if not coeff_list:
        # every polynomial is identically zero: the condition holds everywhere
        return SignRegion([(lo, hi)])

    def worst(x):
        return max(npoly.polyval(x, c) for c in coeff_list)

    xs = lo + (hi - lo) * np.arange(grid_points) / grid_points
    vals = np.max(np.stack([npoly.polyval(xs, c) for c in coeff_list]), axis=0)
    feas = vals <= 0.0

    def bisect(a, b):
        # worst(a) and worst(b) straddle zero; return the crossing
        fa = worst(a)
        for _ in range(200):
            if b - a <= refine_tol:
                break
            m = 0.5 * (a + b)
            fm = worst(m)
            if (fm <= 0.0) == (fa <= 0.0):
                a, fa = m, fm
            else:
                b = m
        return 0.5 * (a + b)

    intervals = []
    i = 0
    n = grid_points
    while i < n:
        if not feas[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and feas[j + 1]:
            j += 1
        left = xs[i] if i == 0 else bisect(xs[i - 1], xs[i])
        if j == n - 1:
            right = hi
        else:
            right = bisect(xs[j], xs[j + 1])
        intervals.append((float(left), float(right)))
        i = j + 1
    return SignRegion(intervals)


def reduce_degree(ps, *, pivot_tol: float = PIVOT_TOL) -> list[BetaPoly]:
    """Eliminate leading coefficients across a polynomial system.

    Gauss-Jordan elimination on the coefficient matrix, pivoting on the highest
    powers first.  Row operations only, so the common-root set of the system is
    preserved; rows that reduce to the zero polynomial are returned as zero
    polynomials (callers should treat them as uninformative).  Pivots whose
    column maximum falls below ``pivot_tol`` times the system scale are skipped.
    """
    ps = list(ps)
    if len(ps) < 2:
        raise ValueError("need at least two polynomials to reduce")
    width = max(len(p.coeffs) for p in ps)
    A = np.zeros((len(ps), width))
    for i, p in enumerate(ps):
        A[i, : len(p.coeffs)] = p.coeffs
    scale = np.max(np.abs(A))
    if scale == 0.0:
        return [BetaPoly.zero() for _ in ps]

    used = np.zeros(len(ps), dtype=bool)
    for col in range(width - 1, -1, -1):
        avail = np.where(~used)[0]
        if avail.size == 0:
            break
        piv = avail[np.argmax(np.abs(A[avail, col]))]
        if abs(A[piv, col]) <= pivot_tol * scale:
            A[avail, col] = 0.0  # numerically negligible leading coefficients
            continue
        used[piv] = True
        others = np.arange(len(ps)) != piv
        A[others] -= np.outer(A[others, col] / A[piv, col], A[piv])
        A[others, col] = 0.0
    return [BetaPoly(row) for row in A]
