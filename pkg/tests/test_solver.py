"""Solver checks against enumeration oracles and hand-worked instances."""

import itertools

import numpy as np
import pytest

from cityalloc import (
    BASIS_BASIC,
    BasisStart,
    EQ,
    GE,
    LE,
    LinearProgram,
    MixedIntegerProgram,
    solve_integer,
    solve_lp,
    solve_milp,
    write_lp_text,
)

from oracles import milp_enumerate, scipy_lp, vertex_enumerate


def anchored_lp(rng, n, m, box=4.0):
    """Random dense LP guaranteed feasible (anchor point) and bounded (box)."""
    x0 = rng.uniform(0.5, 2.0, n)
    a = rng.normal(0.0, 1.0, (m, n))
    b = a @ x0 + rng.uniform(0.1, 1.0, m)
    c = rng.normal(0.0, 1.0, n)
    hi = np.full(n, box)
    lp = LinearProgram("max", c, a, [LE] * m, b, upper=hi)
    return lp, (c, a, b, np.zeros(n), hi)


def test_single_variable_corner():
    lp = LinearProgram("max", [1.0], [[1.0]], [LE], [3.0])
    res = solve_lp(lp)
    assert res.status == "optimal"
    assert abs(res.primal_values[0] - 3.0) <= 1e-9
    assert abs(res.objective_value - 3.0) <= 1e-9


def test_degenerate_face_objective():
    lp = LinearProgram("max", [1.0, 1.0], [[1.0, 1.0]], [LE], [1.0])
    res = solve_lp(lp)
    assert res.status == "optimal"
    assert abs(res.objective_value - 1.0) <= 1e-9
    # any optimal vertex accepted; it must still be a feasible point
    assert res.primal_values.sum() <= 1.0 + 1e-9
    assert np.all(res.primal_values >= -1e-9)


def test_random_lps_match_vertex_oracle():
    rng = np.random.default_rng(11)
    for _ in range(60):
        n = int(rng.integers(2, 6))
        m = int(rng.integers(2, 8))
        lp, (c, a, b, lo, hi) = anchored_lp(rng, n, m)
        res = solve_lp(lp)
        assert res.status == "optimal"
        status, ref, _ = vertex_enumerate(c, a, b, lo, hi)
        assert status == "optimal"
        assert abs(res.objective_value - ref) <= 1e-6 * (1 + abs(ref))
        # primal feasibility at stated tolerances
        assert np.all(a @ res.primal_values <= b + 1e-7 * (1 + np.abs(b)))
        assert np.all(res.primal_values >= lo - 1e-9)
        assert np.all(res.primal_values <= hi + 1e-9)


def test_larger_lps_match_scipy():
    # sizes near the top of the supported range; statuses are known
    # (feasible by anchor, bounded by box) so the reference is trusted
    rng = np.random.default_rng(17)
    for _ in range(40):
        n = int(rng.integers(6, 13))
        m = int(rng.integers(8, 21))
        lp, (c, a, b, lo, hi) = anchored_lp(rng, n, m)
        res = solve_lp(lp)
        assert res.status == "optimal"
        status, ref, _ = scipy_lp(c, a, b, bounds=list(zip(lo, hi)))
        assert status == "optimal"
        assert abs(res.objective_value - ref) <= 1e-6 * (1 + abs(ref))


def test_mixed_relations_and_free_variables():
    # min x + 2y - z  s.t.  x + y >= 2,  y + z = 3,  z <= 2,  y free
    lp = LinearProgram(
        "min", [1.0, 2.0, -1.0],
        [[1.0, 1.0, 0.0], [0.0, 1.0, 1.0], [0.0, 0.0, 1.0]],
        [GE, EQ, LE], [2.0, 3.0, 2.0],
        lower=[0.0, -np.inf, 0.0], upper=[np.inf, np.inf, np.inf])
    res = solve_lp(lp)
    assert res.status == "optimal"
    # z -> 2 (cheap), y = 1, x >= 1 -> x = 1: objective 1 + 2 - 2 = 1
    assert abs(res.objective_value - 1.0) <= 1e-7
    assert np.allclose(res.primal_values, [1.0, 1.0, 2.0], atol=1e-7)


def test_known_dual_values():
    # max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18: classic corner (2, 6)
    lp = LinearProgram("max", [3.0, 5.0],
                       [[1.0, 0.0], [0.0, 2.0], [3.0, 2.0]],
                       [LE, LE, LE], [4.0, 12.0, 18.0])
    res = solve_lp(lp)
    assert res.status == "optimal"
    assert abs(res.objective_value - 36.0) <= 1e-8
    assert np.allclose(res.dual_values, [0.0, 1.5, 1.0], atol=1e-8)

    # max x + y s.t. x + 2y <= 4, 3x + y <= 6: duals solve A' u = c
    lp2 = LinearProgram("max", [1.0, 1.0], [[1.0, 2.0], [3.0, 1.0]],
                        [LE, LE], [4.0, 6.0])
    res2 = solve_lp(lp2)
    assert np.allclose(res2.dual_values, [0.4, 0.2], atol=1e-8)


def test_infeasible_detected():
    lp = LinearProgram("max", [1.0], [[1.0], [-1.0]], [LE, LE], [1.0, -2.0])
    assert solve_lp(lp).status == "infeasible"
    # contradictory equalities
    lp2 = LinearProgram("min", [1.0, 1.0],
                        [[1.0, 1.0], [1.0, 1.0]], [EQ, EQ], [1.0, 2.0])
    assert solve_lp(lp2).status == "infeasible"


def test_unbounded_detected():
    lp = LinearProgram("max", [1.0], np.zeros((0, 1)), [], [])
    assert solve_lp(lp).status == "unbounded"
    # unbounded ray inside a feasible cone
    lp2 = LinearProgram("max", [1.0, 1.0], [[1.0, -1.0]], [LE], [1.0])
    assert solve_lp(lp2).status == "unbounded"


def test_malformed_problems_rejected():
    with pytest.raises(ValueError):
        LinearProgram("max", [np.nan], [[1.0]], [LE], [1.0])
    with pytest.raises(ValueError):
        LinearProgram("max", [1.0], [[1.0]], [LE], [np.inf])
    with pytest.raises(ValueError):
        LinearProgram("max", [1.0, 1.0], [[1.0]], [LE], [1.0])
    with pytest.raises(ValueError):
        LinearProgram("best", [1.0], [[1.0]], [LE], [1.0])
    with pytest.raises(ValueError):
        LinearProgram("max", [1.0], [[1.0]], ["<>"], [1.0])
    with pytest.raises(ValueError):
        LinearProgram("max", [1.0], [[1.0]], [LE], [1.0], lower=[2.0], upper=[1.0])


def test_determinism_bit_identical():
    rng = np.random.default_rng(23)
    lp, _ = anchored_lp(rng, 8, 12)
    r1 = solve_lp(lp)
    r2 = solve_lp(lp)
    assert r1.objective_value == r2.objective_value
    assert np.array_equal(r1.primal_values, r2.primal_values)
    assert r1.iteration_count == r2.iteration_count


def test_scale_invariance():
    rng = np.random.default_rng(29)
    lp, (c, a, b, lo, hi) = anchored_lp(rng, 5, 7)
    base = solve_lp(lp)
    for scale in (2.0, 10.0, 0.25):
        scaled = LinearProgram("max", scale * c, a, [LE] * len(b), b, upper=hi)
        res = solve_lp(scaled)
        assert abs(res.objective_value - scale * base.objective_value) \
            <= 1e-7 * (1 + abs(scale * base.objective_value))
        # the unscaled optimum stays optimal for the scaled problem
        assert scale * (c @ base.primal_values) >= res.objective_value - 1e-6


def test_no_feasible_perturbation_improves():
    rng = np.random.default_rng(31)
    for _ in range(10):
        lp, (c, a, b, lo, hi) = anchored_lp(rng, 6, 9)
        res = solve_lp(lp)
        x = res.primal_values
        for _ in range(40):
            step = rng.normal(0.0, 0.05, 6)
            cand = np.clip(x + step, lo, hi)
            if np.all(a @ cand <= b + 1e-12):
                assert c @ cand <= res.objective_value + 1e-6


def test_milp_two_item_knapsack():
    lp = LinearProgram("max", [3.0, 4.0], [[2.0, 3.0]], [LE], [3.0],
                       upper=[1.0, 1.0])
    res = solve_milp(MixedIntegerProgram(lp, [0, 1]))
    assert res.status == "optimal"
    assert abs(res.objective_value - 4.0) <= 1e-9
    assert abs(res.primal_values[1] - 1.0) <= 1e-6


def test_milp_three_item_knapsack_regression():
    # max 3x+2y+2z s.t. 2x+y+2z <= 3: optimum picks x and y for 5,
    # not the greedy-by-ratio 4; guards a pricing defect caught once
    lp = LinearProgram("max", [3.0, 2.0, 2.0], [[2.0, 1.0, 2.0]], [LE], [3.0],
                       upper=[1.0, 1.0, 1.0])
    res = solve_milp(MixedIntegerProgram(lp, [0, 1, 2]))
    assert res.status == "optimal"
    assert abs(res.objective_value - 5.0) <= 1e-9
    assert np.allclose(res.primal_values, [1.0, 1.0, 0.0], atol=1e-6)


def test_milp_fixed_binaries_equals_lp():
    rng = np.random.default_rng(37)
    lp, (c, a, b, lo, hi) = anchored_lp(rng, 5, 6)
    hi2 = hi.copy()
    lo2 = lo.copy()
    lo2[:2] = 1.0
    hi2[:2] = 1.0
    pinned = LinearProgram("max", c, a, [LE] * len(b), b, lower=lo2, upper=hi2)
    milp = solve_milp(MixedIntegerProgram(pinned, [0, 1]))
    plain = solve_lp(pinned)
    assert milp.status == plain.status == "optimal"
    assert abs(milp.objective_value - plain.objective_value) <= 1e-9


def test_milp_matches_pattern_enumeration():
    rng = np.random.default_rng(41)
    for _ in range(25):
        n_bin = int(rng.integers(1, 9))
        n_cont = int(rng.integers(0, 4))
        n = n_bin + n_cont
        m = int(rng.integers(2, 7))
        a = rng.normal(0.0, 1.0, (m, n))
        x0 = np.concatenate([rng.integers(0, 2, n_bin).astype(float),
                             rng.uniform(0.2, 1.5, n_cont)])
        b = a @ x0 + rng.uniform(0.05, 0.8, m)
        c = rng.normal(0.0, 1.0, n)
        hi = np.concatenate([np.ones(n_bin), np.full(n_cont, 3.0)])
        lp = LinearProgram("max", c, a, [LE] * m, b, upper=hi)
        mine = solve_milp(MixedIntegerProgram(lp, range(n_bin)))
        assert mine.status == "optimal"
        status, ref, _ = milp_enumerate(
            c, a, b, np.zeros(n), hi,
            np.arange(n) < n_bin)
        assert status == "optimal"
        assert abs(mine.objective_value - ref) <= 1e-6 * (1 + abs(ref))
        bins = mine.primal_values[:n_bin]
        assert np.all(np.abs(bins - np.round(bins)) <= 1e-6)


def test_milp_bounded_by_relaxation():
    rng = np.random.default_rng(43)
    for _ in range(15):
        n = int(rng.integers(2, 7))
        m = int(rng.integers(2, 6))
        a = rng.normal(0.0, 1.0, (m, n))
        b = a @ rng.uniform(0.0, 1.0, n) + rng.uniform(0.05, 0.5, m)
        c = rng.normal(0.0, 1.0, n)
        lp = LinearProgram("max", c, a, [LE] * m, b, upper=np.ones(n))
        relax = solve_lp(lp)
        mixed = solve_milp(MixedIntegerProgram(lp, range(n)))
        if mixed.status == "optimal":
            assert mixed.objective_value <= relax.objective_value + 1e-7


def test_integer_knapsack_matches_enumeration():
    # bounded integer knapsacks against exhaustive value enumeration
    rng = np.random.default_rng(91)
    for _ in range(25):
        n = int(rng.integers(2, 5))
        hi = rng.integers(1, 5, n).astype(float)
        w = rng.uniform(0.5, 2.0, n)
        c = rng.uniform(0.1, 3.0, n)
        cap = float(rng.uniform(1.0, 0.8 * w @ hi))
        lp = LinearProgram("max", c, w[None, :], [LE], [cap], upper=hi)
        res = solve_integer(lp, range(n))
        assert res.status == "optimal"
        best = 0.0
        for combo in itertools.product(*(range(int(h) + 1) for h in hi)):
            v = np.array(combo, dtype=float)
            if w @ v <= cap + 1e-12:
                best = max(best, float(c @ v))
        assert res.objective_value == pytest.approx(best, abs=1e-9)
        assert np.all(np.abs(res.primal_values - np.round(res.primal_values)) < 1e-9)


def test_integer_requires_finite_integral_bounds():
    lp_inf = LinearProgram("max", [1.0], [[1.0]], [LE], [3.0])
    with pytest.raises(ValueError):
        solve_integer(lp_inf, [0])
    lp_frac = LinearProgram("max", [1.0], [[1.0]], [LE], [3.0], upper=[2.5])
    with pytest.raises(ValueError):
        solve_integer(lp_frac, [0])


def test_milp_infeasible():
    lp = LinearProgram("max", [1.0, 1.0], [[1.0, 1.0], [-1.0, -1.0]],
                       [LE, LE], [0.4, -0.3], upper=[1.0, 1.0])
    # relaxation allows sums in [0.3, 0.4] but binaries only reach 0, 1, 2
    assert solve_lp(lp).status == "optimal"
    res = solve_milp(MixedIntegerProgram(lp, [0, 1]))
    assert res.status == "infeasible"


def test_warm_start_same_problem_is_free():
    rng = np.random.default_rng(47)
    lp, _ = anchored_lp(rng, 8, 12)
    cold = solve_lp(lp)
    warm = solve_lp(lp, start=cold.basis_start())
    assert warm.status == "optimal"
    assert warm.iteration_count == 0
    assert abs(warm.objective_value - cold.objective_value) <= 1e-12


def test_warm_start_after_perturbation_agrees_with_cold():
    rng = np.random.default_rng(53)
    for _ in range(20):
        lp, (c, a, b, lo, hi) = anchored_lp(rng, 6, 9)
        base = solve_lp(lp)
        c2 = c + rng.normal(0.0, 0.05, 6)
        bumped = LinearProgram("max", c2, a, [LE] * len(b), b, upper=hi)
        warm = solve_lp(bumped, start=base.basis_start())
        cold = solve_lp(bumped)
        assert warm.status == cold.status == "optimal"
        assert abs(warm.objective_value - cold.objective_value) \
            <= 1e-7 * (1 + abs(cold.objective_value))


def test_warm_start_with_added_columns():
    # mimic delayed column generation: extend a solved problem with a
    # fresh column entering at its lower bound
    lp = LinearProgram("max", [1.0, 0.5], [[1.0, 1.0]], [LE], [2.0])
    first = solve_lp(lp)
    wide = LinearProgram("max", [1.0, 0.5, 2.0],
                         [[1.0, 1.0, 1.0]], [LE], [2.0])
    cs = np.concatenate([first.column_status, [1]])  # new column at lower
    warm = solve_lp(wide, start=BasisStart(cs, first.row_status))
    assert warm.status == "optimal"
    assert abs(warm.objective_value - 4.0) <= 1e-9


def test_bad_warm_starts_degrade_to_cold():
    rng = np.random.default_rng(59)
    lp, _ = anchored_lp(rng, 5, 7)
    cold = solve_lp(lp)
    # wrong shape raises; well-formed nonsense silently solves cold
    with pytest.raises(ValueError):
        solve_lp(lp, start=BasisStart(np.zeros(3, np.int8),
                                      np.zeros(7, np.int8)))
    with pytest.raises(ValueError):
        BasisStart(np.array([9], np.int8), np.array([0], np.int8))
    junk = BasisStart(np.full(5, BASIS_BASIC, np.int8),
                      np.full(7, BASIS_BASIC, np.int8))
    res = solve_lp(lp, start=junk)
    assert res.status == "optimal"
    assert abs(res.objective_value - cold.objective_value) <= 1e-9


def test_basis_start_unavailable_on_failure():
    lp = LinearProgram("max", [1.0], np.zeros((0, 1)), [], [])
    res = solve_lp(lp)
    assert res.status == "unbounded"
    with pytest.raises(ValueError):
        res.basis_start()


def test_write_lp_text(tmp_path):
    lp = LinearProgram("max", [3.0, 4.0], [[2.0, 3.0]], [LE], [3.0],
                       upper=[1.0, 1.0])
    path = tmp_path / "dump.lp"
    write_lp_text(MixedIntegerProgram(lp, [0, 1]), path)
    text = path.read_text()
    assert text.splitlines()[0].startswith("max:")
    assert "<=" in text
    assert "bounds:" in text
    assert "binary: x0 x1;" in text
