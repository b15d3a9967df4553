"""Stacked decompositions: subtask-augmented dynamics and derived higher layers.

A discovered factorization turns into k additional absorbing "subtask"
states: entering one hands control to the next layer up. The augmented
passive dynamics keep columns stochastic by scaling the original rows down
by each column's subtask mass. The next layer's LMDP treats subtask and
boundary states as absorbing and measures where walks started from each
subtask's footprint get absorbed, which becomes the higher-layer transition
law over subtasks.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import AlphaRangeError, SingularSystemError, SubtaskForgeError
from .factorize import (
    Factorization,
    NmfOptions,
    nmf,
    read_factorization,
    write_factorization_files,
)
from .lmdp_core import Lmdp, PassiveDynamics, StateSpace, load_lmdp, save_lmdp
from .multitask import build_uniform_task_basis, solve_task_basis
from . import fileio

#: Column sums of derived higher-layer dynamics must be this close to 1
#: before exact renormalization.
ABSORPTION_TOL = 1e-10


def normalized_columns(D) -> np.ndarray:
    """L1-normalize columns; every column must carry positive mass."""
    D = np.asarray(D, dtype=float)
    mass = D.sum(axis=0)
    if np.any(mass <= 0):
        raise ValueError("every subtask column needs positive mass")
    return D / mass[None, :]


def subtask_alpha_max(F: Factorization) -> float:
    """Largest alpha keeping every column's subtask mass strictly below 1."""
    d_hat = normalized_columns(F.D)
    heaviest = d_hat.sum(axis=1).max()
    return float(1.0 / heaviest)


@dataclass(frozen=True, eq=False)
class SubtaskLayer:
    """One level of the stack: base LMDP plus subtask-augmented dynamics."""

    level: int
    base: Lmdp
    factorization: Factorization
    alpha: float
    d_hat: np.ndarray
    P_t: np.ndarray
    P_ii_scaled: sparse.csc_array
    P_bi_scaled: sparse.csc_array

    @property
    def k(self) -> int:
        return self.P_t.shape[0]

    def augmented_stacked(self) -> np.ndarray:
        """Dense (n_i + n_b + k) x n_i column-stochastic augmented dynamics."""
        return np.vstack([
            self.P_ii_scaled.toarray(),
            self.P_bi_scaled.toarray(),
            self.P_t,
        ])


def augment_with_subtasks(L: Lmdp, F: Factorization, alpha: float) -> SubtaskLayer:
    """Attach k subtask states entered with probability alpha * d_hat_t(s).

    The original interior and boundary rows of each column are rescaled by
    one minus the column's total subtask mass, so augmented columns stay
    stochastic. ``alpha`` may be 0 (no-op augmentation) but must stay below
    the reported maximum.
    """
    if F.D.shape[0] != L.n_interior:
        raise ValueError(
            f"factorization has {F.D.shape[0]} rows but the domain has "
            f"{L.n_interior} interior states"
        )
    d_hat = normalized_columns(F.D)
    alpha = float(alpha)
    alpha_max = float(1.0 / d_hat.sum(axis=1).max())
    if not 0.0 <= alpha < alpha_max:
        raise AlphaRangeError(
            f"alpha={alpha:g} outside [0, {alpha_max:g}) for this factorization",
            alpha_max=alpha_max,
        )
    subtask_mass = alpha * d_hat.sum(axis=1)
    scale = 1.0 - subtask_mass
    P_t = alpha * d_hat.T
    P_ii_scaled = L.dynamics.P_ii.multiply(scale[None, :]).tocsc()
    P_bi_scaled = L.dynamics.P_bi.multiply(scale[None, :]).tocsc()
    P_t.setflags(write=False)
    return SubtaskLayer(
        level=0, base=L, factorization=F, alpha=alpha, d_hat=d_hat, P_t=P_t,
        P_ii_scaled=P_ii_scaled, P_bi_scaled=P_bi_scaled,
    )


def strip_subtasks(layer: SubtaskLayer) -> Lmdp:
    """Invert the augmentation, rebuilding the layer's base LMDP.

    With alpha = 0 the rescaling factor is exactly 1, so the reconstruction
    is bit-identical to the original dynamics.
    """
    scale = 1.0 - layer.alpha * layer.d_hat.sum(axis=1)
    inv = 1.0 / scale
    return Lmdp(
        space=layer.base.space,
        dynamics=PassiveDynamics(
            layer.P_ii_scaled.multiply(inv[None, :]).tocsc(),
            layer.P_bi_scaled.multiply(inv[None, :]).tocsc(),
        ),
        r_interior=layer.base.r_interior,
        lam=layer.base.lam,
    )


def derive_higher_layer(layer: SubtaskLayer) -> Lmdp:
    """Build the next level's LMDP from absorption statistics of this one.

    Under the augmented dynamics, subtask and boundary states absorb. A walk
    started from subtask t's footprint d_hat_t is absorbed somewhere with
    probability one; the absorption distribution over the k subtask states
    becomes interior column t of the next level, and over boundary states its
    exit column. Interior rewards are footprint-weighted averages of the
    base rewards; the temperature carries over unchanged.
    """
    if not layer.alpha > 0:
        raise ValueError("deriving a higher layer needs alpha > 0")
    n, k = layer.base.n_interior, layer.k
    n_b = layer.base.n_boundary
    M = (sparse.identity(n, format="csc") - layer.P_ii_scaled.T).tocsc()
    try:
        lu = splu(M)
    except RuntimeError as exc:
        raise SingularSystemError(
            "absorption system is singular; augmented dynamics leak probability"
        ) from exc
    absorb_now = np.hstack([layer.P_t.T, layer.P_bi_scaled.T.toarray()])
    hit = lu.solve(absorb_now)
    P_next = hit.T @ layer.d_hat
    sums = P_next.sum(axis=0)
    if np.any(np.abs(sums - 1.0) > ABSORPTION_TOL) or not np.all(np.isfinite(P_next)):
        worst = float(np.abs(sums - 1.0).max())
        raise SingularSystemError(
            f"absorption probabilities sum to 1 +/- {worst:g}, beyond tolerance "
            f"{ABSORPTION_TOL:g}; augmented dynamics are malformed"
        )
    P_next = np.maximum(P_next, 0.0) / P_next.sum(axis=0, keepdims=True)

    base_labels = layer.base.space.labels
    labels = None
    if base_labels is not None:
        labels = tuple(f"subtask({t})" for t in range(k)) + base_labels[n:]
    return Lmdp(
        space=StateSpace(k, n_b, labels),
        dynamics=PassiveDynamics(
            sparse.csc_array(P_next[:k, :]),
            sparse.csc_array(P_next[k:, :]),
        ),
        r_interior=layer.d_hat.T @ layer.base.r_interior,
        lam=layer.base.lam,
    )


@dataclass(frozen=True, eq=False)
class HierarchicalMlmdp:
    layers: tuple[SubtaskLayer, ...]
    top: Lmdp
    k_schedule: tuple[int, ...]
    alpha_schedule: tuple[float, ...]
    beta: float
    seed: int

    @property
    def depth(self) -> int:
        return len(self.layers)


def _annotate(exc: Exception, level: int) -> Exception:
    msg = f"level {level}: {exc}"
    if isinstance(exc, AlphaRangeError):
        return AlphaRangeError(msg, alpha_max=exc.alpha_max)
    return type(exc)(msg)


def build_hierarchy(L: Lmdp, k_schedule, alpha_schedule, beta: float = 1.0,
                    opts: NmfOptions | None = None) -> HierarchicalMlmdp:
    """Repeat solve-factorize-augment-derive down the schedules.

    Level l factorizes the uniform task ensemble of the current LMDP at rank
    ``k_schedule[l]``, augments with ``alpha_schedule[l]``, and derives the
    next LMDP. All levels share the options seed; the per-restart streams
    already separate by rank, and each level factorizes a different basis.
    """
    opts = opts or NmfOptions()
    k_schedule = tuple(int(k) for k in k_schedule)
    alpha_schedule = tuple(float(a) for a in alpha_schedule)
    if len(k_schedule) != len(alpha_schedule) or not k_schedule:
        raise ValueError(
            f"schedules must have equal nonzero length, got {len(k_schedule)} "
            f"ranks and {len(alpha_schedule)} alphas"
        )
    if any(a <= 0 for a in alpha_schedule):
        raise ValueError("every alpha in the schedule must be positive")

    layers: list[SubtaskLayer] = []
    current = L
    for level, (k, alpha) in enumerate(zip(k_schedule, alpha_schedule)):
        try:
            Z = solve_task_basis(current, build_uniform_task_basis(current))
            F = nmf(Z, k, beta, opts)
            layer = replace(augment_with_subtasks(current, F, alpha), level=level)
            layers.append(layer)
            current = derive_higher_layer(layer)
        except (SubtaskForgeError, ValueError) as exc:
            raise _annotate(exc, level) from exc
    return HierarchicalMlmdp(
        layers=tuple(layers), top=current, k_schedule=k_schedule,
        alpha_schedule=alpha_schedule, beta=float(beta), seed=opts.seed,
    )


def ground_matrix(H: HierarchicalMlmdp, level: int) -> np.ndarray:
    """Column-stochastic map from level ``level`` interior states to base states.

    Level 0 grounds to the identity; higher levels chain the normalized
    subtask footprints of the levels below.
    """
    if not 0 <= level < H.depth:
        raise ValueError(f"level must lie in [0, {H.depth - 1}], got {level}")
    G = np.eye(H.layers[0].base.n_interior)
    for l in range(level):
        G = G @ H.layers[l].d_hat
    return G


def grounded_subtasks(H: HierarchicalMlmdp, level: int) -> np.ndarray:
    """Level ``level`` subtask footprints expressed over base interior states."""
    return ground_matrix(H, level) @ H.layers[level].d_hat


def write_hierarchy_files(dir_path, H: HierarchicalMlmdp) -> None:
    for layer in H.layers:
        level_dir = os.path.join(dir_path, f"level_{layer.level}")
        os.makedirs(level_dir, exist_ok=True)
        save_lmdp(os.path.join(level_dir, "lmdp.json"), layer.base)
        write_factorization_files(level_dir, layer.factorization)
    save_lmdp(os.path.join(dir_path, "top.json"), H.top)
    fileio.atomic_write_json(os.path.join(dir_path, "hierarchy.json"), {
        "levels": H.depth,
        "k_schedule": list(H.k_schedule),
        "alpha_schedule": list(H.alpha_schedule),
        "beta": H.beta,
        "seed": H.seed,
        "level_dirs": [f"level_{layer.level}" for layer in H.layers],
        "top": "top.json",
    })


def write_hierarchy(dir_path, H: HierarchicalMlmdp) -> None:
    with fileio.staged_dir(dir_path) as stage:
        write_hierarchy_files(stage, H)


def read_hierarchy(dir_path) -> HierarchicalMlmdp:
    """Rebuild a hierarchy from its output directory.

    Layer tensors not stored on disk (scaled dynamics, subtask columns) are
    recomputed from each level's LMDP, factorization and alpha; the
    recomputation is deterministic, so the result matches what was written.
    """
    manifest = fileio.read_json(os.path.join(dir_path, "hierarchy.json"))
    if not isinstance(manifest, dict):
        raise ValueError(f"{dir_path}: hierarchy.json must be an object")
    for key in ("levels", "k_schedule", "alpha_schedule", "beta", "seed",
                "level_dirs", "top"):
        if key not in manifest:
            raise ValueError(f"{dir_path}: hierarchy.json lacks key {key!r}")
    level_dirs = manifest["level_dirs"]
    alpha_schedule = tuple(float(a) for a in manifest["alpha_schedule"])
    if not (len(level_dirs) == len(alpha_schedule) == int(manifest["levels"])):
        raise ValueError(f"{dir_path}: hierarchy.json schedule lengths disagree")
    layers = []
    for level, (name, alpha) in enumerate(zip(level_dirs, alpha_schedule)):
        level_dir = os.path.join(dir_path, name)
        base = load_lmdp(os.path.join(level_dir, "lmdp.json"))
        F = read_factorization(level_dir)
        layers.append(replace(augment_with_subtasks(base, F, alpha), level=level))
    return HierarchicalMlmdp(
        layers=tuple(layers),
        top=load_lmdp(os.path.join(dir_path, manifest["top"])),
        k_schedule=tuple(int(k) for k in manifest["k_schedule"]),
        alpha_schedule=alpha_schedule,
        beta=float(manifest["beta"]),
        seed=int(manifest["seed"]),
    )
