"""Session fixtures: benchmark-regime domains and their solved task bases.

All block-structure tests run in one regime: lazy twins (weight 0.01),
step reward -1, temperature 20. The heavy twin makes walks persist long
enough that desirability is nearly constant inside a region and drops at
its exits, which is what makes rooms, passenger blocks and ring arcs show
up as low-rank structure in the basis.
"""

import numpy as np
import pytest

from subtask_forge.domains import RoomsSpec, TaxiSpec, build_rooms, build_taxi
from subtask_forge.factorize import NmfOptions, nmf
from subtask_forge.multitask import build_uniform_task_basis, solve_task_basis

TWIN_WEIGHT = 0.01
R_STEP = -1.0
LAM = 20.0


def benchmark_rooms(room_rows=4, room_cols=4, room_size=5, layout="grid"):
    spec = RoomsSpec(room_rows, room_cols, room_size, layout)
    return build_rooms(spec, R_STEP, LAM, TWIN_WEIGHT)


def benchmark_taxi():
    return build_taxi(TaxiSpec(), R_STEP, LAM, TWIN_WEIGHT)


def uniform_basis(L) -> np.ndarray:
    return solve_task_basis(L, build_uniform_task_basis(L))


@pytest.fixture(scope="session")
def rooms_lmdp():
    return benchmark_rooms()


@pytest.fixture(scope="session")
def rooms_Z(rooms_lmdp):
    return uniform_basis(rooms_lmdp)


@pytest.fixture(scope="session")
def rooms_fact16(rooms_Z):
    return nmf(rooms_Z, k=16, beta=1.0, opts=NmfOptions(seed=0, restarts=10))


@pytest.fixture(scope="session")
def taxi_lmdp():
    return benchmark_taxi()


@pytest.fixture(scope="session")
def taxi_Z(taxi_lmdp):
    return uniform_basis(taxi_lmdp)
