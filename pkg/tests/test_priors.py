"""Tests for the layer-wise prior calculator.

Each formula is checked against an independently written straight-line
re-evaluation (plain math and for-loops, sharing no code with the package).
"""

import json
import math

import numpy as np
import pytest

from nodeslab.priors import (
    LambdaUnderflowError,
    build_prior_report,
    compute_epsilon_n,
    compute_lambda,
    compute_r,
    compute_u,
    compute_vartheta,
    default_B,
    select_C,
)


# ---------------------------------------------------------------------------
# straight-line oracles (no numpy vectorization, no package helpers)


def oracle_u(k, n):
    L = len(k) - 2
    out = []
    for l in range(L + 1):
        out.append(
            (L + 1) ** 2
            * (math.log(n) + math.log(L + 1) + math.log(k[l + 1]) + math.log(k[l] + 1))
        )
    return out


def oracle_vartheta(k, B, n, u):
    L = len(k) - 2
    total_u = 0.0
    for um in u:
        total_u += um
    out = []
    for l in range(L + 1):
        t = B[l] ** 2 / (k[l] + 1)
        for m in range(L + 1):
            if m != l:
                t += math.log(B[m])
        t += L + math.log(k[l + 1]) + math.log(k[l] + 1)
        t += math.log(n) + math.log(total_u)
        out.append(t)
    return out


def oracle_r(s, k, vartheta, n):
    return [s[l] * (k[l] + 1) * vartheta[l] / n for l in range(len(vartheta))]


def oracle_lambda(k, vartheta, C):
    L = len(k) - 2
    out = []
    for l in range(L):
        out.append(math.exp(-math.log(k[l + 1]) - C[l] * (k[l] + 1) * vartheta[l]))
    out.append(1.0)
    return out


def oracle_epsilon(r, xi, u):
    return math.sqrt((sum(r) + xi) * sum(u))


def random_widths(rng, max_depth=4, max_width=512):
    depth = int(rng.integers(1, max_depth + 1))
    return [int(w) for w in rng.integers(1, max_width + 1, size=depth + 2)]


# ---------------------------------------------------------------------------
# compute_u


def test_u_direct_substitution_single_layer():
    got = compute_u([1, 1], n=3)
    want = [1.0 * (math.log(3) + 0.0 + 0.0 + math.log(2))]
    np.testing.assert_allclose(got, want, rtol=1e-12)


def test_u_worked_example():
    got = compute_u([2, 20, 1], n=100)
    assert got[0] == pytest.approx(
        4 * (math.log(100) + math.log(2) + math.log(20) + math.log(3)), rel=1e-12
    )
    assert got[0] == pytest.approx(37.5707, abs=5e-4)


def test_u_symmetric_in_equal_width_pairs():
    u = compute_u([4, 7, 7, 4], n=50)
    # layers 0 and 2 both map width 4 -> 7 and 7 -> 4 reversed; the formula
    # only sees (k_l + 1, k_{l+1}) so check the explicit pair that matches
    u2 = compute_u([4, 7, 7, 4], n=50)
    np.testing.assert_array_equal(u, u2)


def test_u_rejects_tiny_n():
    with pytest.raises(ValueError):
        compute_u([2, 3, 1], n=1)


def test_u_randomized_against_oracle():
    rng = np.random.default_rng(101)
    for _ in range(300):
        k = random_widths(rng)
        n = int(rng.integers(2, 1_000_001))
        np.testing.assert_allclose(compute_u(k, n), oracle_u(k, n), rtol=1e-12)


# ---------------------------------------------------------------------------
# default_B


def test_default_B_rule():
    np.testing.assert_array_equal(default_B([2, 20, 1]), [3.0, 21.0])
    np.testing.assert_array_equal(default_B([1, 1]), [2.0])


def test_default_B_length():
    assert len(default_B([3, 4, 5, 6, 1])) == 4


# ---------------------------------------------------------------------------
# compute_vartheta


def test_vartheta_degenerate_all_ones():
    k = [1, 1]
    n = 3
    u = compute_u(k, n)
    got = compute_vartheta(k, [1.0], n, u)
    want = 1.0 / 2 + 0 + 0.0 + math.log(1) + math.log(2) + math.log(3) + math.log(u[0])
    np.testing.assert_allclose(got, [want], rtol=1e-12)


def test_vartheta_increases_with_n():
    k = [3, 8, 1]
    lo = compute_vartheta(k, default_B(k), 100, compute_u(k, 100))
    hi = compute_vartheta(k, default_B(k), 1000, compute_u(k, 1000))
    assert np.all(np.asarray(hi) > np.asarray(lo))


def test_vartheta_increases_with_own_B():
    k = [3, 8, 1]
    n = 100
    u = compute_u(k, n)
    base = compute_vartheta(k, [4.0, 9.0], n, u)
    bumped = compute_vartheta(k, [8.0, 9.0], n, u)
    assert bumped[0] > base[0]


def test_vartheta_rejects_nonpositive_B():
    k = [3, 8, 1]
    with pytest.raises(ValueError):
        compute_vartheta(k, [0.0, 9.0], 100, compute_u(k, 100))


def test_vartheta_randomized_against_oracle():
    rng = np.random.default_rng(103)
    for _ in range(300):
        k = random_widths(rng)
        n = int(rng.integers(2, 1_000_001))
        B = [float(b) for b in rng.uniform(0.5, 600.0, size=len(k) - 1)]
        u = oracle_u(k, n)
        np.testing.assert_allclose(
            compute_vartheta(k, B, n, u), oracle_vartheta(k, B, n, u), rtol=1e-12
        )


# ---------------------------------------------------------------------------
# compute_r


def test_r_zero_sparsity():
    k = [3, 8, 1]
    vt = compute_vartheta(k, default_B(k), 100, compute_u(k, 100))
    got = compute_r([0.0, 0.0], k, vt, 100)
    np.testing.assert_array_equal(got, [0.0, 0.0])


def test_r_linear_in_s():
    k = [3, 8, 1]
    vt = compute_vartheta(k, default_B(k), 100, compute_u(k, 100))
    one = compute_r([2.0, 1.0], k, vt, 100)
    two = compute_r([4.0, 1.0], k, vt, 100)
    assert two[0] == pytest.approx(2 * one[0], rel=1e-12)
    assert two[1] == pytest.approx(one[1], rel=1e-12)


def test_r_rejects_out_of_range_s():
    k = [3, 8, 1]
    vt = compute_vartheta(k, default_B(k), 100, compute_u(k, 100))
    with pytest.raises(ValueError):
        compute_r([9.0, 1.0], k, vt, 100)  # s_0 > k_1
    with pytest.raises(ValueError):
        compute_r([-1.0, 1.0], k, vt, 100)


def test_r_randomized_against_oracle():
    rng = np.random.default_rng(107)
    for _ in range(300):
        k = random_widths(rng)
        n = int(rng.integers(2, 1_000_001))
        vt = oracle_vartheta(k, [kk + 1.0 for kk in k[:-1]], n, oracle_u(k, n))
        s = [float(rng.uniform(0, k[l + 1])) for l in range(len(k) - 1)]
        np.testing.assert_allclose(
            compute_r(s, k, vt, n), oracle_r(s, k, vt, n), rtol=1e-12
        )


# ---------------------------------------------------------------------------
# compute_lambda


def test_lambda_zero_C_gives_reciprocal_width():
    k = [5, 20, 20, 1]
    vt = compute_vartheta(k, default_B(k), 3000, compute_u(k, 3000))
    lam = compute_lambda(k, vt, [0.0, 0.0, 0.0])
    np.testing.assert_allclose(lam, [1 / 20, 1 / 20, 1.0], rtol=1e-12)


def test_lambda_output_layer_is_one():
    k = [2, 9, 1]
    vt = compute_vartheta(k, default_B(k), 50, compute_u(k, 50))
    lam = compute_lambda(k, vt, [1e-3, 0.0])
    assert lam[-1] == 1.0


def test_lambda_decreasing_in_C():
    k = [2, 9, 1]
    vt = compute_vartheta(k, default_B(k), 50, compute_u(k, 50))
    lams = [compute_lambda(k, vt, [c, 0.0])[0] for c in (1e-4, 1e-3, 1e-2)]
    assert lams[0] > lams[1] > lams[2]


def test_lambda_underflow_raises():
    k = [2, 9, 1]
    vt = compute_vartheta(k, default_B(k), 50, compute_u(k, 50))
    with pytest.raises(LambdaUnderflowError):
        compute_lambda(k, vt, [100.0, 0.0])


def test_lambda_randomized_against_oracle():
    rng = np.random.default_rng(109)
    for _ in range(300):
        k = random_widths(rng)
        n = int(rng.integers(2, 1_000_001))
        vt = oracle_vartheta(k, [kk + 1.0 for kk in k[:-1]], n, oracle_u(k, n))
        # keep exponents moderate so neither path underflows
        C = [
            float(rng.uniform(0, 100.0 / ((k[l] + 1) * vt[l])))
            for l in range(len(k) - 2)
        ] + [0.0]
        np.testing.assert_allclose(
            compute_lambda(k, vt, C), oracle_lambda(k, vt, C), rtol=1e-12
        )


# ---------------------------------------------------------------------------
# select_C


def test_select_C_tiny_vartheta_picks_largest_grid_value():
    k = [1, 1, 1]
    vt = compute_vartheta(k, default_B(k), 2, compute_u(k, 2))
    C, infeasible = select_C(k, vt)
    assert C[0] == 0.1
    assert not infeasible.any()


def test_select_C_interior_selection_brackets_floor():
    k = [5, 20, 20, 1]
    vt = compute_vartheta(k, default_B(k), 3000, compute_u(k, 3000))
    C, infeasible = select_C(k, vt)
    assert not infeasible.any()
    lam = compute_lambda(k, vt, C)
    for l in range(2):
        assert lam[l] >= 1e-50
        if C[l] < 0.1:  # interior: one grid step up must violate the floor
            exponent = -math.log(k[l + 1]) - 10 * C[l] * (k[l] + 1) * vt[l]
            assert exponent < math.log(1e-50)


def test_select_C_infeasible_floor_returns_zero_with_flag():
    k = [1, 3, 1]
    vt = compute_vartheta(k, default_B(k), 10, compute_u(k, 10))
    C, infeasible = select_C(k, vt, floor=0.5)
    assert C[0] == 0.0
    assert bool(infeasible[0])
    assert not bool(infeasible[-1])  # output layer never flagged


def test_select_C_output_entry_is_zero():
    k = [2, 4, 1]
    vt = compute_vartheta(k, default_B(k), 100, compute_u(k, 100))
    C, _ = select_C(k, vt)
    assert C[-1] == 0.0


def test_select_C_lambda_within_floor_one_interval():
    rng = np.random.default_rng(113)
    for _ in range(50):
        k = random_widths(rng, max_depth=3, max_width=64)
        n = int(rng.integers(2, 100_000))
        vt = compute_vartheta(k, default_B(k), n, compute_u(k, n))
        C, infeasible = select_C(k, vt)
        lam = compute_lambda(k, vt, C)
        for l in range(len(k) - 2):
            if not infeasible[l]:
                assert 1e-50 <= lam[l] <= 1.0


# ---------------------------------------------------------------------------
# compute_epsilon_n


def test_epsilon_zero_case():
    assert compute_epsilon_n([0.0, 0.0], 0.0, [1.0, 3.0]) == 0.0


def test_epsilon_arithmetic():
    assert compute_epsilon_n([0.0], 1.0, [4.0]) == pytest.approx(2.0, rel=1e-12)


def test_epsilon_rejects_negative_xi():
    with pytest.raises(ValueError):
        compute_epsilon_n([0.0], -1.0, [4.0])


def test_epsilon_monotone():
    base = compute_epsilon_n([1.0, 1.0], 0.5, [2.0, 2.0])
    assert compute_epsilon_n([2.0, 1.0], 0.5, [2.0, 2.0]) > base
    assert compute_epsilon_n([1.0, 1.0], 1.5, [2.0, 2.0]) > base
    assert compute_epsilon_n([1.0, 1.0], 0.5, [3.0, 2.0]) > base


def test_epsilon_randomized_against_oracle():
    rng = np.random.default_rng(127)
    for _ in range(300):
        d = int(rng.integers(1, 6))
        r = [float(v) for v in rng.uniform(0, 50, size=d)]
        u = [float(v) for v in rng.uniform(0.1, 100, size=d)]
        xi = float(rng.uniform(0, 10))
        assert compute_epsilon_n(r, xi, u) == pytest.approx(
            oracle_epsilon(r, xi, u), rel=1e-12
        )


# ---------------------------------------------------------------------------
# build_prior_report


def test_report_defaults_match_component_calls():
    k = [5, 20, 20, 1]
    n = 3000
    rep = build_prior_report(k, n)
    u = compute_u(k, n)
    vt = compute_vartheta(k, default_B(k), n, u)
    C, infeasible = select_C(k, vt)
    np.testing.assert_allclose(rep.u, u, rtol=1e-15)
    np.testing.assert_allclose(rep.vartheta, vt, rtol=1e-15)
    np.testing.assert_allclose(rep.C, C, rtol=1e-15)
    np.testing.assert_allclose(rep.lam, compute_lambda(k, vt, C), rtol=1e-15)
    np.testing.assert_allclose(rep.r, compute_r(list(k[1:]), k, vt, n), rtol=1e-15)
    assert rep.epsilon_n == compute_epsilon_n(rep.r, 0.0, u)
    assert not rep.c_infeasible.any()


def test_report_default_s_is_next_width():
    rep = build_prior_report([5, 20, 20, 1], 3000)
    np.testing.assert_array_equal(rep.s, [20.0, 20.0, 1.0])


def test_report_json_fields():
    rep = build_prior_report([2, 6, 1], 100)
    doc = json.loads(rep.to_json())
    for key in ("u", "vartheta", "r", "C", "lambda", "epsilon_n", "n", "xi",
                "s", "B", "C_infeasible"):
        assert key in doc
    assert doc["lambda"][-1] == 1.0
    assert doc["n"] == 100


def test_report_explicit_C_override():
    rep = build_prior_report([2, 6, 1], 100, C=[0.0])
    assert rep.lam[0] == pytest.approx(1 / 6, rel=1e-12)
    np.testing.assert_array_equal(rep.C, [0.0, 0.0])
