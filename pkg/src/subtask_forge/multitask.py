"""Task ensembles over one LMDP: basis construction, batch solving, composition.

The task basis Q stacks exponentiated boundary rewards, one column per task.
Solving every task against shared passive dynamics yields the desirability
basis Z; because the underlying system is linear, any nonnegative blend
q = Qw solves to z = Zw, which is what :func:`compose` exploits.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import nnls

from .errors import SubtaskForgeError
from .lmdp_core import Lmdp, _FiniteExitSystem

#: Floor applied to zero entries of q_b so every desirability stays positive.
DEFAULT_Q_FLOOR = 1e-12


def build_uniform_task_basis(L: Lmdp) -> np.ndarray:
    """One goal task per boundary state: Q is the n_boundary identity."""
    return np.eye(L.n_boundary)


def check_task_basis(L: Lmdp, Q) -> np.ndarray:
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != L.n_boundary:
        raise ValueError(
            f"Q must have {L.n_boundary} rows (one per boundary state), "
            f"got shape {Q.shape}"
        )
    if not np.all(np.isfinite(Q)) or np.any(Q < 0):
        raise ValueError("Q entries must be finite and nonnegative")
    if np.any(Q.max(axis=0) <= 0):
        bad = int(np.argmin(Q.max(axis=0)))
        raise ValueError(f"task column {bad} has no positive entry")
    return Q


def solve_task_basis(L: Lmdp, Q, q_floor: float = DEFAULT_Q_FLOOR) -> np.ndarray:
    """Desirability basis Z: column t solves the LMDP with boundary reward Q[:, t].

    Zero entries of each task column are floored at ``q_floor`` so that all
    desirabilities are strictly positive (finite values in the log domain).
    Solver failures are re-raised with the offending task index attached.
    """
    Q = check_task_basis(L, Q)
    if not 0 < q_floor < 1e-3:
        raise ValueError(f"q_floor must lie in (0, 1e-3), got {q_floor}")
    Qf = np.maximum(Q, q_floor)
    system = _FiniteExitSystem(L)
    Z = system.solve_many(Qf)
    for t in range(Z.shape[1]):
        try:
            system.check(Z[:, t], Qf[:, t])
        except SubtaskForgeError as exc:
            raise type(exc)(f"task {t}: {exc}") from exc
    return Z


def compose(Q, Z, q):
    """Express a boundary reward as a nonnegative blend of basis tasks.

    Returns ``(w, z)`` where ``w`` minimizes ``||Qw - q||_2`` subject to
    ``w >= 0`` and ``z = Z @ w`` is the blended desirability. When ``q`` lies
    in the nonnegative column span of Q the residual is numerically zero and
    ``z`` solves the LMDP for ``q`` exactly (linearity of the solve).
    """
    Q = np.asarray(Q, dtype=float)
    Z = np.asarray(Z, dtype=float)
    q = np.asarray(q, dtype=float).reshape(-1)
    if Q.ndim != 2:
        raise ValueError(f"Q must be 2-D, got ndim={Q.ndim}")
    if Z.ndim != 2 or Z.shape[1] != Q.shape[1]:
        raise ValueError(
            f"Z must have one column per task ({Q.shape[1]}), got shape {Z.shape}"
        )
    if q.shape != (Q.shape[0],):
        raise ValueError(f"q has {q.size} entries, expected {Q.shape[0]}")
    if np.any(q < 0) or not np.all(np.isfinite(q)):
        raise ValueError("q entries must be finite and nonnegative")
    w, _ = nnls(Q, q)
    return w, Z @ w
