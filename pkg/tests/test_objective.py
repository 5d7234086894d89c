"""Tests for likelihood terms and the assembled negative ELBO."""

import math

import numpy as np
import pytest

from nodeslab.distributions import inverse_softplus, logit
from nodeslab.model import (
    Architecture,
    PriorConfig,
    VariationalState,
    draw_sample,
    forward,
    init_state,
)
from nodeslab.numerics import RandomStream
from nodeslab.objective import (
    kl_terms,
    negative_elbo,
    nll_categorical,
    nll_gaussian,
    slab_kl_per_node,
)


def lam_for(arch, value=0.5):
    lam = np.full(arch.L + 1, value)
    lam[-1] = 1.0
    return lam


# ---------------------------------------------------------------------------
# nll_gaussian


def test_nll_gaussian_zero_residual():
    assert nll_gaussian(1.5, 1.5, 1.0) == pytest.approx(
        0.9189385332046727, rel=1e-12
    )


def test_nll_gaussian_unit_variance_residual_two():
    assert nll_gaussian(0.0, 2.0, 1.0) == pytest.approx(
        2.9189385332046727, rel=1e-12
    )


def test_nll_gaussian_wide_noise():
    # 0.5*log(8*pi) + 0.5
    assert nll_gaussian(0.0, 2.0, 4.0) == pytest.approx(
        2.112085713764618, rel=1e-12
    )


def test_nll_gaussian_vectorized():
    out = nll_gaussian(np.zeros(3), np.array([0.0, 2.0, -2.0]), 1.0)
    np.testing.assert_allclose(
        out, [0.9189385332046727, 2.9189385332046727, 2.9189385332046727],
        rtol=1e-12,
    )


def test_nll_gaussian_rejects_bad_variance():
    with pytest.raises(ValueError):
        nll_gaussian(0.0, 0.0, 0.0)


# ---------------------------------------------------------------------------
# nll_categorical


def test_nll_categorical_uniform_logits():
    assert nll_categorical(np.zeros(10), 3) == pytest.approx(
        2.302585092994046, rel=1e-12
    )


def test_nll_categorical_dominant_logit():
    logits = np.zeros(5)
    logits[2] = 50.0
    assert nll_categorical(logits, 2) == pytest.approx(0.0, abs=1e-15)


def test_nll_categorical_frozen_value():
    # logsumexp(1,2,3) - 3
    assert nll_categorical(np.array([1.0, 2.0, 3.0]), 2) == pytest.approx(
        0.40760596444438104, rel=1e-12
    )


def test_nll_categorical_label_range():
    with pytest.raises(ValueError):
        nll_categorical(np.zeros(3), 3)
    with pytest.raises(ValueError):
        nll_categorical(np.zeros(3), -1)


def test_nll_categorical_overflow_safe():
    assert math.isfinite(nll_categorical(np.array([1e4, -1e4]), 0))


# ---------------------------------------------------------------------------
# slab_kl_per_node / kl_terms


def test_slab_kl_per_node_matches_loop():
    rng = np.random.default_rng(5)
    mu = rng.normal(size=(3, 4))
    sigma = rng.uniform(0.1, 2.0, size=(3, 4))
    got = slab_kl_per_node(mu, sigma, 1.3)
    for j in range(3):
        want = 0.0
        for i in range(4):
            r = sigma[j, i] ** 2 / 1.3
            want += 0.5 * (r + mu[j, i] ** 2 / 1.3 - 1.0 - math.log(r))
        assert got[j] == pytest.approx(want, rel=1e-12)


def test_kl_terms_zero_at_prior():
    arch = Architecture((2, 3, 1))
    prior = PriorConfig(np.array([0.97, 1.0]))
    mu = [np.zeros((3, 3)), np.zeros((1, 4))]
    rho = [
        np.full((3, 3), inverse_softplus(1.0)),
        np.full((1, 4), inverse_softplus(1.0)),
    ]
    phi = [np.full(3, logit(0.97))]
    state = VariationalState(arch, prior, mu, rho, phi)
    kb, kg = kl_terms(state)
    assert kb == pytest.approx(0.0, abs=1e-13)
    assert kg == pytest.approx(0.0, abs=1e-13)


def test_kl_terms_dense_baseline_has_no_bernoulli_part():
    arch = Architecture((2, 3, 1))
    state = init_state(
        arch, PriorConfig(lam_for(arch, 0.1)), seed=0, mode="dense-baseline"
    )
    kb, kg = kl_terms(state)
    assert kb == 0.0
    assert kg > 0.0


def test_kl_terms_do_not_depend_on_data_or_draws():
    arch = Architecture((2, 3, 1))
    state = init_state(arch, PriorConfig(lam_for(arch)), seed=0)
    first = kl_terms(state)
    second = kl_terms(state)
    assert first == second


# ---------------------------------------------------------------------------
# negative_elbo


def make_preds(state, X, S, seed):
    stream = RandomStream(seed, 2)
    return [forward(state.arch, draw_sample(state, stream), X) for _ in range(S)]


def test_negative_elbo_full_batch_scale_is_one():
    arch = Architecture((2, 3, 1))
    state = init_state(arch, PriorConfig(lam_for(arch)), seed=0)
    rng = np.random.default_rng(3)
    X = rng.uniform(-1, 1, size=(4, 2))
    y = rng.normal(size=4)
    preds = make_preds(state, X, S=1, seed=9)
    breakdown = negative_elbo(state, y, preds, n_total=4)
    want_nll = float(np.sum(nll_gaussian(preds[0][:, 0], y, 1.0)))
    assert breakdown.nll == pytest.approx(want_nll, rel=1e-12)


def test_negative_elbo_minibatch_scaling():
    arch = Architecture((2, 3, 1))
    state = init_state(arch, PriorConfig(lam_for(arch)), seed=0)
    rng = np.random.default_rng(4)
    X = rng.uniform(-1, 1, size=(5, 2))
    y = rng.normal(size=5)
    preds = make_preds(state, X, S=1, seed=9)
    small = negative_elbo(state, y, preds, n_total=5)
    big = negative_elbo(state, y, preds, n_total=50)
    assert big.nll == pytest.approx(10.0 * small.nll, rel=1e-12)
    assert big.kl_bern == small.kl_bern  # KL part is batch-independent


def test_negative_elbo_independent_reassembly():
    # Straight-line recomputation: per-point Gaussian density by hand, both
    # KL sums by explicit loops over nodes.
    arch = Architecture((2, 3, 1))
    lam = np.array([0.23, 1.0])
    state = init_state(arch, PriorConfig(lam), seed=6)
    rng = np.random.default_rng(8)
    X = rng.uniform(-1, 1, size=(3, 2))
    y = rng.normal(size=3)
    preds = make_preds(state, X, S=2, seed=13)
    got = negative_elbo(state, y, preds, n_total=30)

    per_draw = []
    for pred in preds:
        t = 0.0
        for i in range(3):
            t += 0.5 * math.log(2 * math.pi) + (y[i] - pred[i, 0]) ** 2 / 2.0
        per_draw.append(t)
    nll = (30 / 3) * sum(per_draw) / len(per_draw)

    kb = 0.0
    for j in range(3):
        g = float(state.gamma(0)[j])
        kb += g * math.log(g / 0.23) + (1 - g) * math.log((1 - g) / 0.77)
    kg = 0.0
    for l in range(2):
        gam = state.gamma(l)
        sig = state.sigma(l)
        for j in range(state.mu[l].shape[0]):
            node = 0.0
            for i in range(state.mu[l].shape[1]):
                r = sig[j, i] ** 2
                node += 0.5 * (r + state.mu[l][j, i] ** 2 - 1.0 - math.log(r))
            kg += float(gam[j]) * node

    assert got.nll == pytest.approx(nll, rel=1e-10)
    assert got.kl_bern == pytest.approx(kb, rel=1e-10)
    assert got.kl_gauss == pytest.approx(kg, rel=1e-10)
    assert got.total == pytest.approx(nll + kb + kg, rel=1e-10)


def test_negative_elbo_batch_order_invariant():
    arch = Architecture((2, 3, 1))
    state = init_state(arch, PriorConfig(lam_for(arch)), seed=0)
    rng = np.random.default_rng(10)
    X = rng.uniform(-1, 1, size=(6, 2))
    y = rng.normal(size=6)
    preds = make_preds(state, X, S=1, seed=11)
    base = negative_elbo(state, y, preds, n_total=6)
    perm = rng.permutation(6)
    shuffled = negative_elbo(state, y[perm], [preds[0][perm]], n_total=6)
    assert shuffled.total == pytest.approx(base.total, rel=1e-12)


def test_negative_elbo_classification_path():
    arch = Architecture((2, 4, 3), "sigmoid", "classification")
    state = init_state(arch, PriorConfig(lam_for(arch)), seed=0)
    rng = np.random.default_rng(12)
    X = rng.uniform(-1, 1, size=(5, 2))
    y = rng.integers(0, 3, size=5)
    preds = make_preds(state, X, S=1, seed=15)
    got = negative_elbo(state, y, preds, n_total=5)
    want = sum(nll_categorical(preds[0][i], int(y[i])) for i in range(5))
    assert got.nll == pytest.approx(want, rel=1e-12)


def test_negative_elbo_rejects_bad_shapes():
    arch = Architecture((2, 3, 1))
    state = init_state(arch, PriorConfig(lam_for(arch)), seed=0)
    with pytest.raises(ValueError):
        negative_elbo(state, np.zeros(3), [], n_total=3)
    with pytest.raises(ValueError):
        negative_elbo(state, np.zeros(0), [np.zeros((0, 1))], n_total=3)
    with pytest.raises(ValueError):
        negative_elbo(state, np.zeros(5), [np.zeros((5, 1))], n_total=3)


def test_mc_standard_error_shrinks_with_draws():
    # The spread of the S-draw average over repetitions should scale like
    # 1/sqrt(S); check the ratio between S=1 and S=16 is near 4.
    arch = Architecture((2, 3, 1))
    state = init_state(arch, PriorConfig(lam_for(arch)), seed=1)
    state.rho[0][:] = 0.0  # widen the slab so draws actually vary
    state.rho[1][:] = 0.0
    rng = np.random.default_rng(14)
    X = rng.uniform(-1, 1, size=(8, 2))
    y = rng.normal(size=8)

    def spread(S, reps=120):
        stream = RandomStream(99, 2)
        vals = []
        for _ in range(reps):
            preds = [
                forward(arch, draw_sample(state, stream), X) for _ in range(S)
            ]
            vals.append(negative_elbo(state, y, preds, n_total=8).nll)
        return np.std(vals)

    ratio = spread(1) / spread(16)
    assert 2.5 < ratio < 6.5
