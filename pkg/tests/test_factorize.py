import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subtask_forge.errors import FactorRankError
from subtask_forge.factorize import (
    Factorization,
    KSelection,
    NmfOptions,
    beta_divergence,
    find_elbow,
    nmf,
    read_factorization,
    select_k,
    write_factorization,
    write_k_curve,
)


def random_positive(shape, seed=0, lo=0.2, hi=2.0):
    return np.random.default_rng(seed).uniform(lo, hi, shape)


# ---------------------------------------------------------------------------
# beta divergence
# ---------------------------------------------------------------------------


def test_divergence_hand_values():
    # beta=2: half squared error
    assert beta_divergence([[1.0, 2.0], [3.0, 4.0]],
                           [[2.0, 2.0], [2.0, 2.0]], 2.0) == 3.0
    # beta=1 on (1,2) vs (2,1): ln(1/2)+1 + 2 ln 2 - 1 = ln 2
    assert beta_divergence([1.0, 2.0], [2.0, 1.0], 1.0) == pytest.approx(
        np.log(2.0), rel=1e-14
    )
    # beta=0 on 2 vs 1: 2 - ln 2 - 1
    assert beta_divergence([2.0], [1.0], 0.0) == pytest.approx(
        1.0 - np.log(2.0), rel=1e-14
    )
    # beta=3 on 2 vs 1: (8 + 2*1 - 3*2)/6
    assert beta_divergence([2.0], [1.0], 3.0) == pytest.approx(2.0 / 3.0, rel=1e-14)
    # beta=1/2 on 4 vs 1: (2 - 1/2 - 2)/(-1/4)
    assert beta_divergence([4.0], [1.0], 0.5) == pytest.approx(2.0, rel=1e-14)


def test_divergence_zero_iff_equal():
    A = random_positive((5, 4), seed=1)
    for beta in (0.0, 1.0, 2.0):
        # the named kernels are cancellation-free and hit zero exactly
        assert beta_divergence(A, A, beta) == 0.0
    for beta in (0.5, 1.5):
        # the generic three-term formula only cancels to rounding level
        assert abs(beta_divergence(A, A, beta)) < 1e-12
    for beta in (0.0, 0.5, 1.0, 1.5, 2.0):
        assert beta_divergence(A, A * 1.01, beta) > 0.0


def test_divergence_kl_handles_zeros():
    # a=0 contributes just b
    assert beta_divergence([0.0, 1.0], [3.0, 1.0], 1.0) == pytest.approx(3.0)


def test_divergence_domain_rules():
    with pytest.raises(ValueError, match="nonnegative"):
        beta_divergence([-1.0], [1.0], 2.0)
    with pytest.raises(ValueError, match="strictly positive first"):
        beta_divergence([0.0], [1.0], 0.0)
    with pytest.raises(ValueError, match="strictly positive second"):
        beta_divergence([1.0], [0.0], 1.0)
    with pytest.raises(ValueError, match="shape mismatch"):
        beta_divergence(np.ones(3), np.ones(4), 1.0)
    # beta > 1 tolerates zeros in the second argument
    assert np.isfinite(beta_divergence([1.0], [0.0], 2.0))


def test_divergence_continuity_in_beta():
    A = random_positive((6, 5), seed=2)
    B = random_positive((6, 5), seed=3)
    for beta, eps in ((1.0, 1e-7), (2.0, 1e-7)):
        ref = beta_divergence(A, B, beta)
        for near in (beta - eps, beta + eps):
            assert beta_divergence(A, B, near) == pytest.approx(ref, rel=1e-5)


@given(st.floats(min_value=0.05, max_value=20.0))
@settings(max_examples=30, deadline=None)
def test_divergence_scale_law(c):
    # d_beta(cA || cB) = c^beta d_beta(A || B)
    A = random_positive((4, 4), seed=4)
    B = random_positive((4, 4), seed=5)
    for beta in (0.0, 1.0, 2.0):
        lhs = beta_divergence(c * A, c * B, beta)
        rhs = c**beta * beta_divergence(A, B, beta)
        assert lhs == pytest.approx(rhs, rel=1e-9)


def test_divergence_tiny_ratio_accuracy():
    # the KL term for b near a must follow (b-a)^2 / (2a), not cancel to 0
    a, b = 1.0, 1.0 + 1e-9
    got = beta_divergence([a], [b], 1.0)
    assert got == pytest.approx((b - a) ** 2 / (2 * a), rel=1e-5)
    assert got > 0.0


# ---------------------------------------------------------------------------
# multiplicative updates
# ---------------------------------------------------------------------------


def test_nmf_monotone_traces():
    Z = random_positive((20, 15), seed=6)
    for beta in (0.0, 0.5, 1.0, 1.5, 2.0, 3.0):
        for seed in range(3):
            F = nmf(Z, 4, beta, NmfOptions(seed=seed, restarts=1, max_iter=200))
            t = F.divergence_trace
            drops = t[:-1] - t[1:]
            assert np.all(drops >= -1e-12 * np.maximum(t[:-1], 1e-300)), (beta, seed)


def test_nmf_rank1_exact():
    rng = np.random.default_rng(7)
    Z = np.outer(rng.uniform(0.5, 2.0, 30), rng.uniform(0.5, 2.0, 20))
    for beta in (0.0, 1.0, 2.0):
        F = nmf(Z, 1, beta, NmfOptions(seed=0, restarts=2))
        assert F.normalized_divergence <= 1e-12


def test_nmf_shapes_and_normalization():
    Z = random_positive((12, 9), seed=8)
    F = nmf(Z, 3, 1.0, NmfOptions(seed=0, restarts=2, max_iter=100))
    assert F.D.shape == (12, 3) and F.W.shape == (3, 9)
    assert np.all(F.D >= 0) and np.all(F.W >= 0)
    np.testing.assert_allclose(F.D.sum(axis=0), 1.0, atol=1e-12)
    # the reported divergence matches the returned factors
    assert beta_divergence(Z, F.D @ F.W, 1.0) == pytest.approx(F.divergence, rel=1e-9)
    assert F.k == 3 and F.beta == 1.0 and 0 <= F.best_restart < 2
    assert F.divergence_trace[-1] == F.divergence


def test_nmf_deterministic():
    Z = random_positive((10, 8), seed=9)
    opts = NmfOptions(seed=5, restarts=3, max_iter=50)
    a = nmf(Z, 3, 1.0, opts)
    b = nmf(Z, 3, 1.0, opts)
    assert a.D.tobytes() == b.D.tobytes()
    assert a.W.tobytes() == b.W.tobytes()
    c = nmf(Z, 3, 1.0, NmfOptions(seed=6, restarts=3, max_iter=50))
    assert a.D.tobytes() != c.D.tobytes()


def test_nmf_threaded_matches_serial(monkeypatch):
    Z = random_positive((10, 8), seed=10)
    opts = NmfOptions(seed=0, restarts=4, max_iter=60)
    serial = nmf(Z, 2, 1.0, opts)
    monkeypatch.setenv("SUBTASK_FORGE_THREADS", "4")
    threaded = nmf(Z, 2, 1.0, opts)
    assert serial.D.tobytes() == threaded.D.tobytes()
    assert serial.W.tobytes() == threaded.W.tobytes()
    assert serial.best_restart == threaded.best_restart


def test_nmf_best_restart_is_minimum():
    from subtask_forge.factorize import _run_restart

    Z = random_positive((15, 10), seed=11)
    opts = NmfOptions(seed=2, restarts=5, max_iter=40)
    F = nmf(Z, 4, 1.0, opts)
    finals = [_run_restart(Z, 4, 1.0, opts, r)[2][-1] for r in range(5)]
    assert F.divergence == min(finals)
    assert F.best_restart == int(np.argmin(finals))


def test_nmf_normalized_divergence_scale_invariant():
    Z = random_positive((14, 10), seed=12)
    opts = NmfOptions(seed=1, restarts=2, max_iter=120)
    a = nmf(Z, 3, 1.0, opts)
    b = nmf(Z * 37.0, 3, 1.0, opts)
    assert b.normalized_divergence == pytest.approx(a.normalized_divergence, rel=1e-9)


def test_nmf_rejects_bad_input():
    with pytest.raises(FactorRankError, match=r"k must lie in \[1, 4\]"):
        nmf(random_positive((4, 6)), 5, 1.0)
    with pytest.raises(FactorRankError):
        nmf(random_positive((4, 6)), 0, 1.0)
    with pytest.raises(ValueError, match="strictly positive"):
        nmf(np.zeros((3, 3)) , 1, 1.0)
    with pytest.raises(ValueError, match="2-D"):
        nmf(np.ones(5), 1, 1.0)
    with pytest.raises(ValueError, match="max_iter"):
        NmfOptions(max_iter=-1)
    with pytest.raises(ValueError, match="restarts"):
        NmfOptions(restarts=0)


def test_nmf_zero_iterations_records_initial_objective():
    Z = random_positive((6, 5), seed=13)
    F = nmf(Z, 2, 1.0, NmfOptions(seed=0, restarts=2, max_iter=0))
    assert F.iterations == 0
    assert not F.converged
    assert F.divergence_trace.shape == (1,)


def test_refit_beats_appending_a_column():
    """Moving from k to k+1 refits everything; the k+1 columns are not the
    k columns plus one more, and the refit fits at least as well as the
    best rank-one addition to the frozen k solution."""
    from subtask_forge.domains import RoomsSpec, build_rooms
    from subtask_forge.multitask import build_uniform_task_basis, solve_task_basis

    L = build_rooms(RoomsSpec(2, 2, 3), r_step=-1.0, lam=20.0, twin_weight=0.01)
    Z = solve_task_basis(L, build_uniform_task_basis(L))
    F4 = nmf(Z, 4, 1.0, NmfOptions(seed=0, restarts=5))
    F5 = nmf(Z, 5, 1.0, NmfOptions(seed=0, restarts=5))

    # oracle: hold the k=4 factors and fit one appended column by the same
    # multiplicative rule restricted to the new pair
    rng = np.random.default_rng(123)
    d = rng.uniform(0.1, 1.1, Z.shape[0])
    w = rng.uniform(0.1, 1.1, Z.shape[1])
    base = F4.D @ F4.W
    tiny = np.finfo(float).tiny
    for _ in range(2000):
        B = base + np.outer(d, w)
        d *= ((Z / B) @ w) / max(w.sum(), tiny)
        B = base + np.outer(d, w)
        w *= (d @ (Z / B)) / max(d.sum(), tiny)
    appended = beta_divergence(Z, base + np.outer(d, w), 1.0)
    assert F5.divergence <= appended

    # every k=4 column moved: no k=5 column reproduces it
    col_dist = np.abs(F4.D[:, :, None] - F5.D[:, None, :]).sum(axis=0)
    assert col_dist.min() > 0.05


# ---------------------------------------------------------------------------
# rank selection
# ---------------------------------------------------------------------------


def test_find_elbow_first_slowdown():
    assert find_elbow([1.0, 0.5, 0.3, 0.25, 0.24]) == 2
    assert find_elbow([1.0, 0.8, 0.6, 0.55, 0.54]) == 3  # tie at 2 skips
    assert find_elbow([1.0, 0.9, 0.8, 0.7]) is None  # constant drops
    assert find_elbow([1.0, 1.0, 1.0]) is None  # zero drops never fire


def test_find_elbow_running_min_clipping():
    # a restart bump flattens to the running minimum; the flat spot is a
    # zero drop after a real one, so the slowdown registers right there
    assert find_elbow([1.0, 0.4, 0.45, 0.2, 0.19]) == 2
    # clipping keeps a bump from inflating the comparison drop: without it
    # |0.8 - 0.3| would mask the slowdown that the clipped curve shows at 2
    assert find_elbow([1.0, 0.3, 0.8, 0.25, 0.05]) == 2
    with pytest.raises(ValueError, match="at least 3"):
        find_elbow([1.0, 0.5])


def test_select_k_on_exact_rank3_blocks():
    # three groups of identical strictly positive columns: rank exactly 3.
    # Under beta=2 the best 2-group fit halves the baseline, so the first
    # two drops tie at the ideal optimum; multiplicative updates stop just
    # above it, the strict comparison skips k=2, and the near-zero third
    # drop fires at k=3.
    block, groups, boost = 4, 3, 9.0
    n = block * groups
    cols = []
    for g in range(groups):
        p = np.ones(n)
        p[g * block:(g + 1) * block] += boost
        cols.extend([p.copy() for _ in range(block)])
    Z = np.array(cols).T
    for seed in (0, 1):
        sel = select_k(Z, 2.0, 6, NmfOptions(seed=seed, restarts=5))
        assert sel.k_star == 3
        assert sel.f.shape == (6,)
        assert sel.f[0] == pytest.approx(1.0, abs=1e-9)
        assert sel.f[2] < 1e-6


def test_select_k_validation():
    Z = random_positive((8, 6), seed=14)
    with pytest.raises(ValueError, match="k_max must be >= 3"):
        select_k(Z, 1.0, 2)
    with pytest.raises(FactorRankError, match="exceeds"):
        select_k(Z, 1.0, 7)


def test_select_k_matches_individual_fits():
    Z = random_positive((8, 6), seed=15)
    opts = NmfOptions(seed=3, restarts=2, max_iter=80)
    sel = select_k(Z, 1.0, 4, opts)
    for i, k in enumerate(range(1, 5)):
        assert sel.f[i] == nmf(Z, k, 1.0, opts).normalized_divergence


# ---------------------------------------------------------------------------
# on-disk form
# ---------------------------------------------------------------------------


def test_factorization_roundtrip(tmp_path):
    Z = random_positive((9, 7), seed=16)
    F = nmf(Z, 3, 1.0, NmfOptions(seed=4, restarts=2, max_iter=60))
    out = tmp_path / "fact"
    write_factorization(out, F)
    back = read_factorization(out)
    np.testing.assert_array_equal(back.D, F.D)
    np.testing.assert_array_equal(back.W, F.W)
    for field in ("beta", "k", "seed", "restarts", "iterations",
                  "divergence", "normalized_divergence", "converged",
                  "best_restart"):
        assert getattr(back, field) == getattr(F, field), field
    assert back.divergence_trace is None


def test_read_factorization_missing_meta_key(tmp_path):
    import json

    Z = random_positive((6, 5), seed=17)
    F = nmf(Z, 2, 1.0, NmfOptions(seed=0, restarts=1, max_iter=20))
    out = tmp_path / "fact"
    write_factorization(out, F)
    meta = json.loads((out / "meta.json").read_text())
    meta.pop("divergence")
    (out / "meta.json").write_text(json.dumps(meta))
    with pytest.raises(ValueError, match="missing field 'divergence'"):
        read_factorization(out)


def test_read_factorization_shape_mismatch(tmp_path):
    import json

    Z = random_positive((6, 5), seed=18)
    F = nmf(Z, 2, 1.0, NmfOptions(seed=0, restarts=1, max_iter=20))
    out = tmp_path / "fact"
    write_factorization(out, F)
    meta = json.loads((out / "meta.json").read_text())
    meta["k"] = 3
    (out / "meta.json").write_text(json.dumps(meta))
    with pytest.raises(ValueError, match="disagree with k=3"):
        read_factorization(out)


def test_write_k_curve_format(tmp_path):
    sel = KSelection(
        f=np.array([1.0, 0.25, 0.125]), k_star=2, beta=1.0, k_max=3, restarts=1
    )
    path = tmp_path / "curve.csv"
    write_k_curve(path, sel)
    lines = path.read_text().splitlines()
    assert lines[0] == "k,f"
    assert lines[1] == "1,1.0"
    assert lines[3] == "3,0.125"
