"""Subtask discovery: non-negative factorization of a desirability basis.

Approximates Z (n_interior x N_t, strictly positive) as a product D @ W of
nonnegative factors with inner dimension k, minimizing the beta-divergence
elementwise. beta = 2 is the squared Euclidean distance, beta = 1 the
generalized Kullback-Leibler divergence, beta = 0 the Itakura-Saito
divergence. Columns of D act as distributed subtasks; rows of W say how much
each task leans on each subtask.

Minimization is by multiplicative updates with the majorization-minimization
exponent, which keeps every recorded objective trace non-increasing for the
three named beta values. Divergences are evaluated with cancellation-free
per-entry terms so the traces are trustworthy at 1e-12 relative slack.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import FactorRankError
from . import fileio

_TINY = np.finfo(float).tiny


# ---------------------------------------------------------------------------
# Divergence evaluation
# ---------------------------------------------------------------------------


def _omlp(t):
    """Pointwise t - log1p(t), the nonnegative kernel of the KL and IS terms."""
    return t - np.log1p(t)


def beta_divergence(A, B, beta: float) -> float:
    """Elementwise beta-divergence d_beta(A || B), summed over all entries.

    A must be nonnegative (strictly positive when beta <= 0); B strictly
    positive when beta <= 1. Shapes must match.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch: {A.shape} vs {B.shape}")
    if np.any(A < 0) or not np.all(np.isfinite(A)):
        raise ValueError("first argument must be finite and nonnegative")
    if not np.all(np.isfinite(B)):
        raise ValueError("second argument must be finite")
    if beta <= 0 and np.any(A <= 0):
        raise ValueError(f"beta={beta:g} requires a strictly positive first argument")
    if beta <= 1:
        if np.any(B <= 0):
            raise ValueError(f"beta={beta:g} requires a strictly positive second argument")
    elif np.any(B < 0):
        raise ValueError("second argument must be nonnegative")

    if beta == 2:
        return float(0.5 * np.square(A - B).sum())
    if beta == 1:
        pos = A > 0
        out = float(B[~pos].sum()) if not pos.all() else 0.0
        a = A[pos] if not pos.all() else A
        b = B[pos] if not pos.all() else B
        return out + float((a * _omlp((b - a) / a)).sum())
    if beta == 0:
        return float(_omlp((A - B) / B).sum())
    c = beta * (beta - 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        term = (A ** beta + (beta - 1.0) * B ** beta - beta * A * B ** (beta - 1.0)) / c
    return float(term.sum())


def _divergence_evaluator(Z, beta):
    """Closure computing d_beta(Z || B) for a strictly positive Z."""
    if beta == 2:
        return lambda B: float(0.5 * np.square(Z - B).sum())
    if beta == 1:
        return lambda B: float((Z * _omlp((B - Z) / Z)).sum())
    if beta == 0:
        return lambda B: float(_omlp((Z - B) / B).sum())
    return lambda B: beta_divergence(Z, B, beta)


# ---------------------------------------------------------------------------
# Multiplicative updates
# ---------------------------------------------------------------------------


def _mu_exponent(beta: float) -> float:
    """Majorization-minimization step exponent; 1 on the convex range [1, 2]."""
    if beta < 1:
        return 1.0 / (2.0 - beta)
    if beta <= 2:
        return 1.0
    return 1.0 / (beta - 1.0)


def _update_once(Z, D, W, beta, gamma):
    """One full sweep: update D in place, then W in place."""
    if beta == 2:
        D *= (Z @ W.T) / np.maximum(D @ (W @ W.T), _TINY)
        W *= (D.T @ Z) / np.maximum((D.T @ D) @ W, _TINY)
    elif beta == 1:
        D *= ((Z / (D @ W)) @ W.T) / np.maximum(W.sum(axis=1)[None, :], _TINY)
        W *= (D.T @ (Z / (D @ W))) / np.maximum(D.sum(axis=0)[:, None], _TINY)
    else:
        B = D @ W
        num = (B ** (beta - 2.0) * Z) @ W.T
        den = np.maximum(B ** (beta - 1.0) @ W.T, _TINY)
        D *= (num / den) ** gamma if gamma != 1.0 else num / den
        B = D @ W
        num = D.T @ (B ** (beta - 2.0) * Z)
        den = np.maximum(D.T @ B ** (beta - 1.0), _TINY)
        W *= (num / den) ** gamma if gamma != 1.0 else num / den


@dataclass(frozen=True)
class NmfOptions:
    max_iter: int = 500
    tol: float = 1e-9
    restarts: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.max_iter < 0:
            raise ValueError(f"max_iter must be >= 0, got {self.max_iter}")
        if self.tol < 0:
            raise ValueError(f"tol must be >= 0, got {self.tol}")
        if self.restarts < 1:
            raise ValueError(f"restarts must be >= 1, got {self.restarts}")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")


@dataclass(frozen=True, eq=False)
class Factorization:
    """Result of one nmf() call: best restart, with D columns L1-normalized."""

    D: np.ndarray
    W: np.ndarray
    beta: float
    k: int
    divergence: float
    normalized_divergence: float
    seed: int
    restarts: int
    iterations: int
    converged: bool
    best_restart: int
    divergence_trace: np.ndarray | None = None


def _restart_stream(seed: int, k: int, restart: int) -> np.random.Generator:
    """Independent generator per (seed, k, restart); schedule-independent."""
    return np.random.default_rng([seed, k, restart])


def _run_restart(Z, k, beta, opts, restart):
    rng = _restart_stream(opts.seed, k, restart)
    n, n_tasks = Z.shape
    D = rng.uniform(0.1, 1.1, size=(n, k))
    W = rng.uniform(0.1, 1.1, size=(k, n_tasks))
    scale = np.sqrt(Z.mean() / (D @ W).mean())
    D *= scale
    W *= scale

    evaluate = _divergence_evaluator(Z, beta)
    gamma = _mu_exponent(beta)
    trace = [evaluate(D @ W)]
    converged = False
    for _ in range(opts.max_iter):
        _update_once(Z, D, W, beta, gamma)
        d = evaluate(D @ W)
        trace.append(d)
        if trace[-2] - d <= opts.tol * max(trace[-2], _TINY):
            converged = True
            break
    return D, W, np.array(trace), converged


def _thread_count() -> int:
    raw = os.environ.get("SUBTASK_FORGE_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _check_Z(Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or min(Z.shape) < 1:
        raise ValueError(f"Z must be a nonempty 2-D matrix, got shape {Z.shape}")
    if not np.all(np.isfinite(Z)) or np.any(Z <= 0):
        raise ValueError("Z entries must be finite and strictly positive")
    return Z


def nmf(Z, k: int, beta: float = 1.0, opts: NmfOptions | None = None) -> Factorization:
    """Best-of-restarts multiplicative-update factorization Z ~ D @ W.

    Runs ``opts.restarts`` independently seeded initializations (uniform on
    (0.1, 1.1), scaled so mean(D @ W) = mean(Z)) and keeps the lowest final
    divergence, ties broken by restart index. Each restart stops when the
    relative objective improvement falls below ``opts.tol`` or after
    ``opts.max_iter`` sweeps; hitting the cap is recorded, not raised.

    The returned D has L1-normalized columns with the compensating scale
    folded into W, leaving D @ W unchanged. ``normalized_divergence`` is the
    final objective divided by d_beta(Z || mean(Z)).
    """
    opts = opts or NmfOptions()
    Z = _check_Z(Z)
    k = int(k)
    if not 1 <= k <= min(Z.shape):
        raise FactorRankError(
            f"k must lie in [1, {min(Z.shape)}] for a {Z.shape[0]}x{Z.shape[1]} basis, got {k}"
        )
    beta = float(beta)

    threads = _thread_count()
    if threads > 1 and opts.restarts > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            runs = list(pool.map(
                lambda r: _run_restart(Z, k, beta, opts, r), range(opts.restarts)
            ))
    else:
        runs = [_run_restart(Z, k, beta, opts, r) for r in range(opts.restarts)]

    best = min(range(opts.restarts), key=lambda r: (runs[r][2][-1], r))
    D, W, trace, converged = runs[best]

    col_mass = np.maximum(D.sum(axis=0), _TINY)
    D = D / col_mass[None, :]
    W = W * col_mass[:, None]
    for a in (D, W, trace):
        a.setflags(write=False)

    baseline = beta_divergence(Z, np.full_like(Z, Z.mean()), beta)
    divergence = float(trace[-1])
    return Factorization(
        D=D,
        W=W,
        beta=beta,
        k=k,
        divergence=divergence,
        normalized_divergence=divergence / max(baseline, _TINY),
        seed=opts.seed,
        restarts=opts.restarts,
        iterations=len(trace) - 1,
        converged=converged,
        best_restart=best,
        divergence_trace=trace,
    )


# ---------------------------------------------------------------------------
# Rank selection
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KSelection:
    """Divergence curve over k = 1..k_max and the elbow pick (None if absent)."""

    f: np.ndarray
    k_star: int | None
    beta: float
    k_max: int
    restarts: int


def find_elbow(f) -> int | None:
    """Smallest k in [2, k_max-1] where the marginal improvement shrinks.

    The curve is first clipped to its running minimum so that restart noise
    cannot fabricate or hide an elbow; the comparison is
    |f(k+1) - f(k)| < |f(k) - f(k-1)| on the clipped curve.
    """
    f = np.asarray(f, dtype=float).reshape(-1)
    if f.size < 3:
        raise ValueError(f"elbow detection needs at least 3 points, got {f.size}")
    g = np.minimum.accumulate(f)
    for k in range(2, f.size):
        if abs(g[k] - g[k - 1]) < abs(g[k - 1] - g[k - 2]):
            return k
    return None


def select_k(Z, beta: float, k_max: int, opts: NmfOptions | None = None) -> KSelection:
    """Evaluate f(k) = best normalized divergence for k = 1..k_max, pick the elbow."""
    opts = opts or NmfOptions()
    Z = _check_Z(Z)
    if k_max < 3:
        raise ValueError(f"k_max must be >= 3, got {k_max}")
    if k_max > min(Z.shape):
        raise FactorRankError(
            f"k_max={k_max} exceeds min(Z.shape)={min(Z.shape)}"
        )
    f = np.array([
        nmf(Z, k, beta, opts).normalized_divergence for k in range(1, k_max + 1)
    ])
    f.setflags(write=False)
    return KSelection(
        f=f, k_star=find_elbow(f), beta=float(beta), k_max=int(k_max),
        restarts=opts.restarts,
    )


# ---------------------------------------------------------------------------
# On-disk form
# ---------------------------------------------------------------------------


def write_factorization_files(dir_path, F: Factorization) -> None:
    """Write D.csv, W.csv and meta.json into an existing directory."""
    fileio.write_matrix_csv(os.path.join(dir_path, "D.csv"), F.D)
    fileio.write_matrix_csv(os.path.join(dir_path, "W.csv"), F.W)
    fileio.atomic_write_json(os.path.join(dir_path, "meta.json"), {
        "beta": F.beta,
        "k": F.k,
        "seed": F.seed,
        "restarts": F.restarts,
        "iterations": F.iterations,
        "divergence": F.divergence,
        "normalized_divergence": F.normalized_divergence,
        "converged": F.converged,
        "best_restart": F.best_restart,
    })


def write_factorization(dir_path, F: Factorization) -> None:
    """Atomically (re)place a factorization directory."""
    with fileio.staged_dir(dir_path) as stage:
        write_factorization_files(stage, F)


def read_factorization(dir_path) -> Factorization:
    D = fileio.read_matrix_csv(os.path.join(dir_path, "D.csv"))
    W = fileio.read_matrix_csv(os.path.join(dir_path, "W.csv"))
    meta = fileio.read_json(os.path.join(dir_path, "meta.json"))
    if not isinstance(meta, dict):
        raise ValueError(f"{dir_path}: meta.json must be an object")
    for key in ("beta", "k", "seed", "restarts", "iterations",
                "divergence", "normalized_divergence"):
        if key not in meta:
            raise ValueError(f"{dir_path}: meta.json is missing field '{key}'")
    if D.shape[1] != meta["k"] or W.shape[0] != meta["k"]:
        raise ValueError(
            f"{dir_path}: factor shapes {D.shape}/{W.shape} disagree with k={meta['k']}"
        )
    return Factorization(
        D=D,
        W=W,
        beta=float(meta["beta"]),
        k=int(meta["k"]),
        divergence=float(meta["divergence"]),
        normalized_divergence=float(meta["normalized_divergence"]),
        seed=int(meta["seed"]),
        restarts=int(meta["restarts"]),
        iterations=int(meta["iterations"]),
        converged=bool(meta.get("converged", True)),
        best_restart=int(meta.get("best_restart", 0)),
        divergence_trace=None,
    )


def write_k_curve(path, sel: KSelection) -> None:
    lines = ["k,f"]
    lines.extend(f"{k + 1},{repr(float(v))}" for k, v in enumerate(sel.f))
    fileio.atomic_write_text(path, "\n".join(lines) + "\n")
