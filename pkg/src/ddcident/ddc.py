"""Single-agent dynamic discrete choice: model, logit solver, payoff recovery.

Conventions: actions are 0-based (``k = 0, ..., K-1``); the last action
``K-1`` carries the payoff normalization ``u[K-1] = 0`` whenever the model is
used for identification.  Stacked payoff/inversion vectors are action-major:
all states of action 0 first, then action 1, and so on, covering actions
``0..K-2`` only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .betapoly import BetaPoly, MatrixPoly, faddeev_adj_det
from .errors import ConvergenceError

EULER_GAMMA = float(np.euler_gamma)

_STOCH_TOL = 1e-10


@dataclass(frozen=True)
class SingleAgentModel:
    """Primitives of a stationary infinite-horizon discrete choice model.

    Attributes
    ----------
    u : ndarray, shape (K, J)
        Per-period payoffs by action and state (utils).
    Q : ndarray, shape (K, J, J)
        Row-stochastic transition matrices by action.
    beta : float
        Discount factor in ``[0, 1)``.
    """

    u: np.ndarray
    Q: np.ndarray
    beta: float

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        Q = np.asarray(self.Q, dtype=float)
        if u.ndim != 2:
            raise ValueError("u must be a (K, J) array")
        K, J = u.shape
        if K < 2 or J < 1:
            raise ValueError("need at least two actions and one state")
        if Q.shape != (K, J, J):
            raise ValueError(f"Q must have shape {(K, J, J)}, got {Q.shape}")
        if np.any(Q < -_STOCH_TOL):
            raise ValueError("transition matrices must be nonnegative")
        row_err = np.abs(Q.sum(axis=2) - 1.0) > _STOCH_TOL
        if np.any(row_err):
            k, j = np.argwhere(row_err)[0]
            raise ValueError(f"row {j} of Q[{k}] does not sum to 1 within {_STOCH_TOL}")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError("beta must lie in [0, 1)")
        u.setflags(write=False)
        Q.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "Q", Q)

    @property
    def n_actions(self) -> int:
        return self.u.shape[0]

    @property
    def n_states(self) -> int:
        return self.u.shape[1]


@dataclass(frozen=True)
class CcpSolution:
    """Equilibrium objects of the solved model (all in utils).

    ``p`` and ``psi`` are (K, J); ``V`` is the integrated value (J,);
    ``v`` the choice-specific values (K, J).  ``residual`` is the final
    sup-norm Bellman residual and ``residual_path`` the per-iteration history.
    """

    p: np.ndarray
    psi: np.ndarray
    V: np.ndarray
    v: np.ndarray
    residual: float
    residual_path: np.ndarray

    @property
    def n_actions(self) -> int:
        return self.p.shape[0]

    @property
    def n_states(self) -> int:
        return self.p.shape[1]


def solve_bellman(model: SingleAgentModel, tol: float = 1e-12, max_iter: int = 100_000) -> CcpSolution:
    """Solve the logit dynamic program by value iteration on the integrated value.

    Iterates ``V <- gamma + logsumexp_k(u_k + beta Q_k V)`` (max-shifted for
    overflow safety) until the sup-norm residual falls below ``tol``.

    Raises
    ------
    ConvergenceError
        If the tolerance is not reached within ``max_iter`` iterations; the
        exception carries the last residual.
    """
    u, Q, beta = model.u, model.Q, model.beta
    J = model.n_states
    V = np.zeros(J)
    history = []
    for _ in range(max_iter):
        v = u + beta * np.einsum("kij,j->ki", Q, V)
        m = v.max(axis=0)
        V_new = EULER_GAMMA + m + np.log(np.exp(v - m).sum(axis=0))
        resid = float(np.max(np.abs(V_new - V)))
        history.append(resid)
        V = V_new
        if resid <= tol:
            break
    else:
        raise ConvergenceError(
            f"value iteration did not reach {tol} in {max_iter} iterations",
            residual=history[-1],
            history=history[-10:],
        )
    v = u + beta * np.einsum("kij,j->ki", Q, V)
    p = np.exp(v - (V - EULER_GAMMA))
    p /= p.sum(axis=0)
    psi = EULER_GAMMA - np.log(p)
    return CcpSolution(p=p, psi=psi, V=V, v=v, residual=resid, residual_path=np.asarray(history))


def psi_from_ccps(p) -> np.ndarray:
    """Hotz-Miller inversion for type-I extreme value shocks: ``gamma - log(p)``.

    Accepts any array of choice probabilities; every entry must lie strictly
    inside ``(0, 1)``.
    """
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("choice probabilities must lie strictly inside (0, 1)")
    return EULER_GAMMA - np.log(p)


def stack_actions(x) -> np.ndarray:
    """Stack the first ``K-1`` action rows of a (K, J) array into one vector."""
    x = np.asarray(x, dtype=float)
    return x[:-1].reshape(-1)


def recover_payoffs(psi, Q, beta_hat: float) -> np.ndarray:
    """Per-period payoffs implied by the inversion vectors at a candidate discount factor.

    Computes ``u_k = -psi_k + (I - beta Q_k) (I - beta Q_{K-1})^{-1} psi_{K-1}``
    for ``k = 0..K-2`` via a linear solve (no explicit inverse) and returns the
    action-major stacked vector of length ``J*(K-1)``.  The last action's
    payoff is the zero vector by normalization.
    """
    psi = np.asarray(psi, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if not 0.0 <= beta_hat < 1.0:
        raise ValueError("beta_hat must lie in [0, 1)")
    K, J = psi.shape
    V = np.linalg.solve(np.eye(J) - beta_hat * Q[K - 1], psi[K - 1])
    u = np.empty((K - 1, J))
    for k in range(K - 1):
        u[k] = -psi[k] + V - beta_hat * (Q[k] @ V)
    return u.reshape(-1)


@dataclass(frozen=True)
class MasterSystem:
    """The stacked polynomial restriction system of the model.

    For the true payoff vector ``U`` and true discount factor, the residual

        det(beta) * U + det(beta) * Psi - M(beta) @ psi_last

    vanishes, where ``det`` is the determinant of ``I - beta*Q[K-1]``, ``M`` is
    the degree-J matrix polynomial stacking ``(I - beta*Q_k) adj(I - beta*Q[K-1])``
    over ``k = 0..K-2``, and ``Psi`` stacks the inversion vectors of those
    actions.
    """

    det: BetaPoly
    m: MatrixPoly
    psi_stack: np.ndarray
    psi_last: np.ndarray
    m_psi: np.ndarray  # (J*(K-1), J+1): coefficient rows of M(beta) @ psi_last

    @property
    def n_rows(self) -> int:
        return self.psi_stack.shape[0]

    def residual_polys(self, R=None, c=None) -> list[BetaPoly]:
        """Polynomials ``det*c + det*(R Psi) - R M psi_last`` row by row.

        With ``R = None`` the identity is used (one polynomial per stacked
        payoff entry, with that entry's unknown payoff set to ``c`` or zero).
        """
        if R is None:
            R = np.eye(self.n_rows)
        R = np.atleast_2d(np.asarray(R, dtype=float))
        q = R.shape[0]
        cvec = np.zeros(q) if c is None else np.broadcast_to(np.asarray(c, dtype=float), (q,))
        dpad = np.zeros(self.m_psi.shape[1])
        dpad[: len(self.det.coeffs)] = self.det.coeffs
        lead = cvec + R @ self.psi_stack
        mat = np.outer(lead, dpad) - R @ self.m_psi
        return [BetaPoly(row) for row in mat]

    def residual_at(self, U, beta: float) -> np.ndarray:
        """Residual vector of the master system at a payoff vector and discount factor."""
        U = np.asarray(U, dtype=float)
        return self.det(beta) * (U + self.psi_stack) - self.m(beta) @ self.psi_last

    def g_polys(self) -> np.ndarray:
        """Coefficient rows of ``-det*Psi + M psi_last`` (the determinant-scaled
        recovered payoffs), shape ``(J*(K-1), J+1)``."""
        dpad = np.zeros(self.m_psi.shape[1])
        dpad[: len(self.det.coeffs)] = self.det.coeffs
        return self.m_psi - np.outer(self.psi_stack, dpad)

    def recovered_payoff(self, beta: float) -> np.ndarray:
        """Stacked payoff vector implied by the system at a candidate discount factor."""
        det = self.det(beta)
        return (self.m(beta) @ self.psi_last) / det - self.psi_stack


def master_system(psi, Q) -> MasterSystem:
    """Build the determinant/adjugate form of the model's restriction system.

    Parameters
    ----------
    psi : ndarray, shape (K, J)
        Inversion vectors (``gamma - log p`` under type-I extreme value, or any
        precomputed family).
    Q : ndarray, shape (K, J, J)
        Row-stochastic transition matrices.
    """
    psi = np.asarray(psi, dtype=float)
    Q = np.asarray(Q, dtype=float)
    K, J = psi.shape
    if Q.shape != (K, J, J):
        raise ValueError(f"Q must have shape {(K, J, J)} to match psi, got {Q.shape}")
    adj, det = faddeev_adj_det(Q[K - 1])
    blocks = [adj.premultiply_i_minus_beta(Q[k]) for k in range(K - 1)]
    m = MatrixPoly(np.concatenate([b.coeff_mats for b in blocks], axis=1))
    m_psi = m.apply(psi[K - 1])
    return MasterSystem(
        det=det,
        m=m,
        psi_stack=stack_actions(psi),
        psi_last=psi[K - 1].copy(),
        m_psi=m_psi,
    )
