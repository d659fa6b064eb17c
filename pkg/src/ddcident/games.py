"""Dynamic discrete games: primitives, equilibrium solver, and per-firm
discount-factor identification.

States are pairs of an exogenous component and the lagged action profile.
Solving proceeds by damped best-response iteration on conditional choice
probabilities; identification stacks the model's expected-payoff equations
with cross-firm payoff restrictions into polynomial systems in each firm's
discount factor.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .betapoly import BetaPoly, faddeev_adj_det, sign_region
from .ddc import EULER_GAMMA
from .errors import ConvergenceError, RankDeficiencyError
from .identify import IdentifiedSet, _common_roots, _poly_diagnostics

_STOCH_TOL = 1e-10


@dataclass(frozen=True)
class GameModel:
    """Primitives of a stationary dynamic game with simultaneous moves.

    ``payoffs[i, a_i, o, x]`` is firm ``i``'s flow payoff from action ``a_i``
    when the rivals play the profile with index ``o`` in state ``x``.  The
    state index is ``s * K**N + lag`` where ``lag`` encodes the previous action
    profile in mixed radix with firm 0 varying fastest.  Rival profiles are
    indexed with the lowest-numbered rival varying fastest.

    ``last_action_known`` declares that the payoff of the last action
    (``a_i = K-1``) is known to the analyst; identification requires it.
    """

    n_firms: int
    n_actions: int
    s_values: np.ndarray
    s_transition: np.ndarray
    payoffs: np.ndarray
    betas: np.ndarray
    last_action_known: bool = False

    def __post_init__(self):
        s_values = np.asarray(self.s_values, dtype=float)
        T = np.asarray(self.s_transition, dtype=float)
        payoffs = np.asarray(self.payoffs, dtype=float)
        betas = np.asarray(self.betas, dtype=float)
        N, K = self.n_firms, self.n_actions
        m_s = len(s_values)
        if T.shape != (m_s, m_s):
            raise ValueError("exogenous transition must be square and match the state values")
        if np.any(T < -_STOCH_TOL) or np.any(np.abs(T.sum(axis=1) - 1.0) > _STOCH_TOL):
            raise ValueError("exogenous transition rows must be nonnegative and sum to 1")
        m_x = m_s * K ** N
        if payoffs.shape != (N, K, K ** (N - 1), m_x):
            raise ValueError(f"payoffs must have shape {(N, K, K ** (N - 1), m_x)}, got {payoffs.shape}")
        if not np.all(np.isfinite(payoffs)):
            raise ValueError("payoff tensor must be finite")
        if betas.shape != (N,) or np.any(betas < 0.0) or np.any(betas >= 1.0):
            raise ValueError("betas must be N discount factors in [0, 1)")
        for arr in (s_values, T, payoffs, betas):
            arr.setflags(write=False)
        object.__setattr__(self, "s_values", s_values)
        object.__setattr__(self, "s_transition", T)
        object.__setattr__(self, "payoffs", payoffs)
        object.__setattr__(self, "betas", betas)

    @property
    def m_s(self) -> int:
        return len(self.s_values)

    @property
    def m_x(self) -> int:
        return self.m_s * self.n_actions ** self.n_firms

    @property
    def n_rival_profiles(self) -> int:
        return self.n_actions ** (self.n_firms - 1)

    @property
    def m_pi(self) -> int:
        return (self.n_actions - 1) * self.n_rival_profiles * self.m_x

    # ---- state and profile indexing -------------------------------------

    def lag_index(self, profile) -> int:
        K = self.n_actions
        return sum(int(a) * K ** i for i, a in enumerate(profile))

    def lag_profile(self, lag: int) -> tuple:
        K, N = self.n_actions, self.n_firms
        return tuple((lag // K ** i) % K for i in range(N))

    def x_index(self, s: int, profile) -> int:
        return s * self.n_actions ** self.n_firms + self.lag_index(profile)

    def x_components(self, x: int):
        base = self.n_actions ** self.n_firms
        return x // base, self.lag_profile(x % base)

    def rivals(self, i: int) -> tuple:
        return tuple(j for j in range(self.n_firms) if j != i)

    def rival_index(self, i: int, actions) -> int:
        K = self.n_actions
        return sum(int(a) * K ** t for t, a in enumerate(actions))

    def rival_profiles(self, i: int):
        K, N = self.n_actions, self.n_firms
        for o in range(K ** (N - 1)):
            yield o, tuple((o // K ** t) % K for t in range(N - 1))

    def joint_from(self, i: int, a_i: int, rival_actions) -> tuple:
        prof = [0] * self.n_firms
        prof[i] = a_i
        for t, j in enumerate(self.rivals(i)):
            prof[j] = rival_actions[t]
        return tuple(prof)

    def pi_position(self, i: int, k: int, x: int, o: int) -> int:
        """Column of ``(action k, state x, rival profile o)`` in the stacked
        unknown payoff vector (actions ``0..K-2`` only, rival profile fastest)."""
        if not 0 <= k < self.n_actions - 1:
            raise IndexError("the last action's payoff is known, not stacked")
        return (k * self.m_x + x) * self.n_rival_profiles + o

    def pi_stack(self, i: int) -> np.ndarray:
        """True stacked payoff vector of firm ``i`` (for tests and diagnostics)."""
        K = self.n_actions
        out = np.empty(self.m_pi)
        for k in range(K - 1):
            for x in range(self.m_x):
                for o in range(self.n_rival_profiles):
                    out[self.pi_position(i, k, x, o)] = self.payoffs[i, k, o, x]
        return out


def game_to_dict(model: GameModel) -> dict:
    """JSON-ready form of the game primitives (see the CLI schema)."""
    return {
        "schema_version": 1,
        "mode": "game",
        "n_firms": model.n_firms,
        "n_actions": model.n_actions,
        "s_values": model.s_values.tolist(),
        "s_transition": model.s_transition.tolist(),
        "payoffs": model.payoffs.tolist(),
        "betas": model.betas.tolist(),
        "last_action_known": model.last_action_known,
    }


def game_from_dict(d: dict) -> GameModel:
    return GameModel(
        n_firms=int(d["n_firms"]),
        n_actions=int(d["n_actions"]),
        s_values=np.asarray(d["s_values"], dtype=float),
        s_transition=np.asarray(d["s_transition"], dtype=float),
        payoffs=np.asarray(d["payoffs"], dtype=float),
        betas=np.asarray(d["betas"], dtype=float),
        last_action_known=bool(d.get("last_action_known", False)),
    )


@dataclass(frozen=True)
class MpeSolution:
    """Equilibrium choice probabilities and values, one block per firm.

    ``P[i, k, x]`` is firm ``i``'s probability of action ``k`` in state ``x``;
    ``residual`` is the sup-norm distance between the final profile and every
    firm's exact best response to it.
    """

    P: np.ndarray
    V: np.ndarray
    v: np.ndarray
    psi: np.ndarray
    residual: float
    n_iter: int

    def to_json_dict(self) -> dict:
        return {"P": self.P.tolist(), "V": self.V.tolist(), "v": self.v.tolist(),
                "psi": self.psi.tolist(), "residual": self.residual, "n_iter": self.n_iter}


def _firm_dp(pi_star, Q_star, beta, V0=None, tol=1e-13, max_iter=200_000):
    """Logit dynamic program for one firm against fixed rival behavior."""
    K, m_x = pi_star.shape
    V = np.zeros(m_x) if V0 is None else V0.copy()
    for _ in range(max_iter):
        v = pi_star + beta * np.einsum("kxy,y->kx", Q_star, V)
        m = v.max(axis=0)
        V_new = EULER_GAMMA + m + np.log(np.exp(v - m).sum(axis=0))
        diff = float(np.max(np.abs(V_new - V)))
        V = V_new
        if diff <= tol:
            break
    else:
        raise ConvergenceError("firm-level value iteration stalled", residual=diff)
    v = pi_star + beta * np.einsum("kxy,y->kx", Q_star, V)
    P = np.exp(v - (V - EULER_GAMMA))
    P /= P.sum(axis=0)
    return P, V, v


def rival_probabilities(model: GameModel, P, i: int) -> np.ndarray:
    """Joint probability of each rival action profile by state, shape
    ``(m_x, K**(N-1))``; rows sum to one."""
    out = np.ones((model.m_x, model.n_rival_profiles))
    rivals = model.rivals(i)
    for o, actions in model.rival_profiles(i):
        for t, j in enumerate(rivals):
            out[:, o] *= P[j, actions[t], :]
    return out


def expected_objects(model: GameModel, P, i: int):
    """Expected flow payoffs and transitions for firm ``i`` against rival play ``P``.

    Returns ``(pi_star, Q_star, P_minus)`` with shapes ``(K, m_x)``,
    ``(K, m_x, m_x)`` and ``(m_x, K**(N-1))``.
    """
    P_minus = rival_probabilities(model, P, i)
    pi_star = np.einsum("xo,kox->kx", P_minus, model.payoffs[i])
    K = model.n_actions
    base = K ** model.n_firms
    Q_star = np.zeros((K, model.m_x, model.m_x))
    s_of_x = np.arange(model.m_x) // base
    for k in range(K):
        for o, actions in model.rival_profiles(i):
            lag = model.lag_index(model.joint_from(i, k, actions))
            # next state = (s', joint action profile); lag part deterministic
            block = P_minus[:, o, None] * model.s_transition[s_of_x, :]
            cols = np.arange(model.m_s) * base + lag
            Q_star[k][:, cols] += block
    return pi_star, Q_star, P_minus


def solve_mpe(model: GameModel, damping: float = 0.5, start=None,
              tol: float = 1e-10, max_iter: int = 100_000) -> MpeSolution:
    """Equilibrium choice probabilities by damped best-response iteration.

    Firms are updated sequentially from a uniform start (or ``start``); each
    update mixes the exact logit best response into the current profile with
    weight ``damping``.  Deterministic given the model, start, and damping.
    The iteration order is part of the equilibrium selection: other equilibria
    may exist and are not searched for.
    """
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    N, K, m_x = model.n_firms, model.n_actions, model.m_x
    if start is None:
        P = np.full((N, K, m_x), 1.0 / K)
    else:
        P = np.array(start, dtype=float)
        if P.shape != (N, K, m_x) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-8):
            raise ValueError("start must be per-firm choice probabilities summing to 1")
    V_cache = np.zeros((N, m_x))
    history = []
    for it in range(max_iter):
        worst = 0.0
        for i in range(N):
            pi_star, Q_star, _ = expected_objects(model, P, i)
            BR, V_i, _ = _firm_dp(pi_star, Q_star, model.betas[i], V0=V_cache[i])
            V_cache[i] = V_i
            worst = max(worst, float(np.max(np.abs(BR - P[i]))))
            P[i] = damping * BR + (1.0 - damping) * P[i]
        history.append(worst)
        if worst <= tol:
            break
        if it + 1 >= max_iter:
            raise ConvergenceError(
                f"best-response iteration did not reach {tol} in {max_iter} sweeps",
                residual=worst, history=history[-20:],
            )
    # evaluate the profile: exact best responses and values at the fixed point
    v = np.zeros((N, K, m_x))
    V = np.zeros((N, m_x))
    residual = 0.0
    for i in range(N):
        pi_star, Q_star, _ = expected_objects(model, P, i)
        BR, V_i, v_i = _firm_dp(pi_star, Q_star, model.betas[i], V0=V_cache[i])
        residual = max(residual, float(np.max(np.abs(BR - P[i]))))
        V[i], v[i] = V_i, v_i
    psi = EULER_GAMMA - np.log(P)
    for arr in (P, V, v, psi):
        arr.setflags(write=False)
    return MpeSolution(P=P, V=V, v=v, psi=psi, residual=residual, n_iter=len(history))


@dataclass(frozen=True)
class GameIdentSystem:
    """Stacked linear-in-payoff system of one firm, polynomial in its discount factor.

    The model equations read ``d(beta) * Pbar @ Pi = rhs(beta)`` where ``Pbar``
    is the block-diagonal expected-rival-probability matrix and each entry of
    ``rhs`` is a polynomial of degree ``m_x``.  ``R2`` stacks the
    lagged-action-irrelevance rows (``R2 @ Pi = 0``), completing a square
    system; additional equality rows test candidate discount factors and
    inequality rows bound them.
    """

    firm: int
    Pbar: np.ndarray
    rhs_coeffs: np.ndarray  # (q1, m_x + 1)
    det: BetaPoly
    R2: np.ndarray
    psi: np.ndarray
    m_x: int
    m_pi: int

    @property
    def X_a(self) -> np.ndarray:
        return np.vstack([self.Pbar, self.R2])

    def Y_a_coeffs(self) -> np.ndarray:
        out = np.zeros((self.m_pi, self.rhs_coeffs.shape[1]))
        out[: self.rhs_coeffs.shape[0]] = self.rhs_coeffs
        return out

    def solve_payoffs(self, beta: float) -> np.ndarray:
        """Stacked payoff vector implied by the system at a candidate discount factor."""
        powers = beta ** np.arange(self.rhs_coeffs.shape[1])
        y = self.Y_a_coeffs() @ powers
        return np.linalg.solve(self.X_a, y) / self.det(beta)

    def residual_at(self, pi_stack, beta: float) -> np.ndarray:
        """Model-equation residual ``d*Pbar@Pi - rhs`` at a payoff vector and discount factor."""
        powers = beta ** np.arange(self.rhs_coeffs.shape[1])
        return self.det(beta) * (self.Pbar @ pi_stack) - self.rhs_coeffs @ powers


def build_system(model: GameModel, mpe: MpeSolution, i: int) -> GameIdentSystem:
    """Assemble firm ``i``'s identification system from equilibrium objects.

    Requires the model to declare the last action's payoff as known; the known
    payoff enters the right-hand side through the expected-rival average.
    """
    if not model.last_action_known:
        raise ValueError("identification requires declaring the last action's payoff as known")
    K, m_x = model.n_actions, model.m_x
    pi_star, Q_star, P_minus = expected_objects(model, mpe.P, i)
    adjK, det = faddeev_adj_det(Q_star[K - 1])
    w = mpe.psi[i, K - 1] + pi_star[K - 1]  # known-action expected payoff
    q1 = (K - 1) * m_x
    rhs = np.zeros((q1, m_x + 1))
    for k in range(K - 1):
        Ak = adjK.premultiply_i_minus_beta(Q_star[k])  # degree m_x
        rows = Ak.apply(w)  # (m_x, m_x + 1)
        rows[:, : len(det.coeffs)] -= np.outer(mpe.psi[i, k], det.coeffs)
        rhs[k * m_x:(k + 1) * m_x] = rows
    n_o = model.n_rival_profiles
    Pbar = np.zeros((q1, model.m_pi))
    for k in range(K - 1):
        for x in range(m_x):
            cols = (k * m_x + x) * n_o + np.arange(n_o)
            Pbar[k * m_x + x, cols] = P_minus[x]
    R2 = r2_irrelevance(model, i)
    return GameIdentSystem(firm=i, Pbar=Pbar, rhs_coeffs=rhs, det=det, R2=R2,
                           psi=mpe.psi[i].copy(), m_x=m_x, m_pi=model.m_pi)


# ---- restriction rows on the stacked game payoff -------------------------


def r2_irrelevance(model: GameModel, i: int) -> np.ndarray:
    """Rows equating firm ``i``'s payoff across rivals' lagged actions.

    For every action, current rival profile, exogenous state, and own lagged
    action, the payoff at each rivals'-lag variant equals the payoff at the
    all-zeros rivals'-lag baseline: ``(K-1)(K^(N-1)-1)m_x`` rows.
    """
    K, N, m_s = model.n_actions, model.n_firms, model.m_s
    rivals = model.rivals(i)
    rows = []
    for k in range(K - 1):
        for o in range(model.n_rival_profiles):
            for s in range(m_s):
                for own in range(K):
                    base_x = model.x_index(s, model.joint_from(i, own, (0,) * (N - 1)))
                    for _, lag_actions in model.rival_profiles(i):
                        if all(a == 0 for a in lag_actions):
                            continue
                        var_x = model.x_index(s, model.joint_from(i, own, lag_actions))
                        row = np.zeros(model.m_pi)
                        row[model.pi_position(i, k, var_x, o)] = 1.0
                        row[model.pi_position(i, k, base_x, o)] = -1.0
                        rows.append(row)
    return np.array(rows)


def _baseline_x(model: GameModel, i: int, s: int, own: int) -> int:
    """State with the given exogenous index and own lag, rivals' lags zeroed."""
    return model.x_index(s, model.joint_from(i, own, (0,) * (model.n_firms - 1)))


def reduced_cells(model: GameModel, i: int, actions=None):
    """Payoff cells that remain free once rivals' lagged actions are irrelevant.

    Yields ``(position, k, o, s, own_lag)`` at the zero rivals'-lag baseline,
    enumerated own-lag fastest, then ``s``, then rival profile, then action.
    """
    acts = range(model.n_actions - 1) if actions is None else actions
    for k in acts:
        for o in range(model.n_rival_profiles):
            for s in range(model.m_s):
                for own in range(model.n_actions):
                    x = _baseline_x(model, i, s, own)
                    yield model.pi_position(i, k, x, o), k, o, s, own


def r3_exchangeability(model: GameModel, i: int, actions=(0,)) -> np.ndarray:
    """Rows equating payoffs across permutations of the current rival profile.

    For each restricted action, exogenous state, and own lagged action, rival
    profiles with the same action multiset are equated to a representative.
    """
    rows = []
    classes = {}
    for o, acts in model.rival_profiles(i):
        classes.setdefault(tuple(sorted(acts)), []).append(o)
    for k in actions:
        for s in range(model.m_s):
            for own in range(model.n_actions):
                x = _baseline_x(model, i, s, own)
                for members in classes.values():
                    for o in members[1:]:
                        row = np.zeros(model.m_pi)
                        row[model.pi_position(i, k, x, members[0])] = 1.0
                        row[model.pi_position(i, k, x, o)] = -1.0
                        rows.append(row)
    return np.array(rows)


def r3_adjustment_cost(model: GameModel, i: int, actions=(0,), lag_pair=(0,)) -> np.ndarray:
    """Rows asserting the own-lag payoff difference is the same for every rival profile.

    For each restricted action and exogenous state, the difference between own
    lagged actions ``l`` and ``l+1`` under rival profile ``o`` equals the same
    difference under the first profile.
    """
    rows = []
    for k in actions:
        for s in range(model.m_s):
            for lag in lag_pair:
                x_hi = _baseline_x(model, i, s, lag)
                x_lo = _baseline_x(model, i, s, lag + 1)
                for o in range(1, model.n_rival_profiles):
                    row = np.zeros(model.m_pi)
                    row[model.pi_position(i, k, x_hi, o)] += 1.0
                    row[model.pi_position(i, k, x_lo, o)] -= 1.0
                    row[model.pi_position(i, k, x_hi, 0)] -= 1.0
                    row[model.pi_position(i, k, x_lo, 0)] += 1.0
                    rows.append(row)
    return np.array(rows)


def r3_linear(model: GameModel, i: int, design: np.ndarray) -> np.ndarray:
    """Kernel rows for a payoff linear in parameters on the reduced cells.

    ``design`` has one row per cell from :func:`reduced_cells` (same order) and
    one column per parameter.  Returns an orthonormal basis of the left null
    space, scattered to the stacked payoff coordinates.
    """
    cells = list(reduced_cells(model, i))
    design = np.asarray(design, dtype=float)
    if design.shape[0] != len(cells):
        raise ValueError(f"design must have {len(cells)} rows (one per reduced cell)")
    Umat, sv, _ = np.linalg.svd(design, full_matrices=True)
    rank = int(np.sum(sv > 1e-10 * sv[0]))
    if rank < design.shape[1]:
        raise RankDeficiencyError("design matrix is rank deficient",
                                  rank=rank, required=design.shape[1])
    kernel = Umat[:, rank:].T
    rows = np.zeros((kernel.shape[0], model.m_pi))
    for c, (pos, *_rest) in enumerate(cells):
        rows[:, pos] = kernel[:, c]
    return rows


def r4_monotone_own_lag(model: GameModel, i: int, actions=(0,)) -> tuple[np.ndarray, np.ndarray]:
    """Inequality rows: payoff weakly falls as the own lagged action weakens.

    Lower action values denote stronger positions (e.g. operating), so for
    each rival profile, state, and restricted action the payoff at own lag
    ``l`` is at least the payoff at own lag ``l+1``.
    """
    rows = []
    for k in actions:
        for o in range(model.n_rival_profiles):
            for s in range(model.m_s):
                for lag in range(model.n_actions - 1):
                    row = np.zeros(model.m_pi)
                    row[model.pi_position(i, k, _baseline_x(model, i, s, lag), o)] += 1.0
                    row[model.pi_position(i, k, _baseline_x(model, i, s, lag + 1), o)] -= 1.0
                    rows.append(row)
    R = np.array(rows)
    return R, np.zeros(R.shape[0])


def r4_monotone_rivals(model: GameModel, i: int, actions=(0,)) -> tuple[np.ndarray, np.ndarray]:
    """Inequality rows: payoff weakly rises as rivals' actions weaken.

    For each pair of rival profiles ordered componentwise (every rival's action
    at least as large, one strictly), the weaker-rival payoff is at least the
    stronger-rival payoff.
    """
    rows = []
    profs = list(model.rival_profiles(i))
    for k in actions:
        for s in range(model.m_s):
            for own in range(model.n_actions):
                x = _baseline_x(model, i, s, own)
                for (oa, aa), (ob, ab) in itertools.combinations(profs, 2):
                    hi, lo = None, None
                    if all(p >= q for p, q in zip(aa, ab)) and aa != ab:
                        hi, lo = oa, ob
                    elif all(q >= p for p, q in zip(aa, ab)) and aa != ab:
                        hi, lo = ob, oa
                    if hi is None:
                        continue
                    row = np.zeros(model.m_pi)
                    row[model.pi_position(i, k, x, hi)] += 1.0
                    row[model.pi_position(i, k, x, lo)] -= 1.0
                    rows.append(row)
    R = np.array(rows)
    return R, np.zeros(R.shape[0])


# ---- identified sets ------------------------------------------------------


def _select_square_block(X, method: str):
    """Row indices forming a well-conditioned square block of ``X``."""
    n = X.shape[1]
    if method == "natural":
        idx = np.arange(n)
    elif method == "qr":
        _, _, piv = scipy.linalg.qr(X.T, pivoting=True)
        idx = np.sort(piv[:n])
    else:
        raise ValueError("selection must be 'natural' or 'qr'")
    block = X[idx]
    if np.linalg.matrix_rank(block, tol=1e-10 * max(1.0, np.linalg.norm(block, 2))) < n:
        raise RankDeficiencyError(
            "selected square block of the stacked system is singular; "
            "the stacked matrix must have full column rank",
            rank=int(np.linalg.matrix_rank(block)), required=n,
        )
    return idx


def _system_polys(system: GameIdentSystem, R3, c3, selection: str):
    """Identifying polynomials: one per stacked row beyond the square block."""
    R3 = np.atleast_2d(np.asarray(R3, dtype=float))
    q3 = R3.shape[0]
    c3 = np.zeros(q3) if c3 is None else np.broadcast_to(np.asarray(c3, dtype=float), (q3,))
    X = np.vstack([system.X_a, R3])
    ncoef = system.rhs_coeffs.shape[1]
    Y = np.zeros((X.shape[0], ncoef))
    Y[: system.rhs_coeffs.shape[0]] = system.rhs_coeffs
    dpad = np.zeros(ncoef)
    dpad[: len(system.det.coeffs)] = system.det.coeffs
    Y[system.m_pi:] = np.outer(c3, dpad)

    idx1 = _select_square_block(X, selection)
    mask = np.zeros(X.shape[0], dtype=bool)
    mask[idx1] = True
    idx2 = np.where(~mask)[0]
    W = np.linalg.solve(X[idx1], Y[idx1])  # polynomial coefficients of X1^{-1} Y1
    # a polynomial at rounding level relative to the system right-hand side is
    # a redundant restriction (satisfied at every discount factor); zero it so
    # downstream root logic flags it as uninformative
    noise_floor = 1e-9 * float(np.max(np.abs(system.rhs_coeffs)))
    polys = []
    for t in idx2:
        p = BetaPoly(X[t] @ W - Y[t])
        polys.append(BetaPoly.zero() if p.max_abs_coeff <= noise_floor else p)
    cond = float(np.linalg.cond(X[idx1]))
    return polys, cond


def identified_set_game(system: GameIdentSystem, R3, c3=None, *,
                        selection: str = "natural", value_tol: float = 1e-6) -> IdentifiedSet:
    """Common roots on ``[0, 1)`` of the firm's equality identification system.

    Stacks the model equations, the lagged-action-irrelevance rows, and the
    supplied extra equality rows; inverts a square block and intersects the
    roots of the remaining rows' polynomials (degree at most ``m_x``).
    Identically-zero polynomials (redundant rows) are flagged and excluded.
    """
    polys, cond = _system_polys(system, R3, c3, selection)
    roots, diag = _common_roots(polys, value_tol=value_tol)
    diagnostics = {"firm": system.firm, "condition_estimate": cond, "polynomials": diag}
    if roots is None:
        diagnostics["no_identifying_content"] = True
        return IdentifiedSet(equality_roots=[], diagnostics=diagnostics)
    coeff_rows = np.array([np.pad(p.coeffs, (0, system.m_x + 1 - len(p.coeffs))) for p in polys])
    sv = np.linalg.svd(coeff_rows, compute_uv=False)
    diagnostics["independent_polynomials"] = int(np.sum(sv > 1e-10 * sv[0]))
    diagnostics["root_residuals"] = list(roots.residuals)
    return IdentifiedSet(equality_roots=list(roots.points), diagnostics=diagnostics)


def inequality_region_game(system: GameIdentSystem, R4, c4=None, *,
                           r3=None, c3=None, selection: str = "natural",
                           **region_kwargs) -> IdentifiedSet:
    """Subset of ``[0, 1)`` satisfying inequality restrictions on the firm's payoff.

    Without extra equality rows the square model system is inverted directly;
    with ``r3`` the square block is selected from the augmented stack.  The
    region collects discount factors where ``R4 @ Pi(beta) >= c4`` (evaluated
    in determinant-scaled polynomial form, degree at most ``m_x``).
    """
    R4 = np.atleast_2d(np.asarray(R4, dtype=float))
    q4 = R4.shape[0]
    c4 = np.zeros(q4) if c4 is None else np.broadcast_to(np.asarray(c4, dtype=float), (q4,))
    ncoef = system.rhs_coeffs.shape[1]
    if r3 is None:
        X = system.X_a
        Y = system.Y_a_coeffs()
        idx1 = _select_square_block(X, "natural")
    else:
        r3 = np.atleast_2d(np.asarray(r3, dtype=float))
        X = np.vstack([system.X_a, r3])
        Y = np.zeros((X.shape[0], ncoef))
        Y[: system.rhs_coeffs.shape[0]] = system.rhs_coeffs
        if c3 is not None:
            dpad = np.zeros(ncoef)
            dpad[: len(system.det.coeffs)] = system.det.coeffs
            Y[system.m_pi:] = np.outer(np.asarray(c3, dtype=float), dpad)
        idx1 = _select_square_block(X, selection)
    W = np.linalg.solve(X[idx1], Y[idx1])
    dpad = np.zeros(ncoef)
    dpad[: len(system.det.coeffs)] = system.det.coeffs
    mat = R4 @ W - np.outer(c4, dpad)
    polys = [BetaPoly(row) for row in mat]
    region = sign_region(polys, "ge", **region_kwargs)
    scale = max((p.max_abs_coeff for p in polys), default=0.0)
    return IdentifiedSet(
        inequality_intervals=list(region.intervals),
        diagnostics={"firm": system.firm, "polynomials": _poly_diagnostics(polys, scale)},
    )


def recover_game_payoffs(system: GameIdentSystem, beta_hat: float) -> np.ndarray:
    """Stacked payoff vector implied by the model equations at a candidate
    discount factor (square-block inversion of the stacked system)."""
    if not 0.0 <= beta_hat < 1.0:
        raise ValueError("beta_hat must lie in [0, 1)")
    return system.solve_payoffs(beta_hat)


def pooled_identified_set(sets, tol: float = 1e-7) -> IdentifiedSet:
    """Intersection of per-firm root sets, for games with a common discount factor."""
    sets = list(sets)
    if not sets:
        raise ValueError("need at least one identified set")
    common = list(sets[0].equality_roots or [])
    for s in sets[1:]:
        keep = []
        for r in common:
            if any(abs(r - q) <= tol for q in (s.equality_roots or [])):
                keep.append(r)
        common = keep
    return IdentifiedSet(equality_roots=common,
                         diagnostics={"pooled_from": [s.diagnostics.get("firm") for s in sets]})
