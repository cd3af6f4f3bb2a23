"""Noisy-reward backups: Gumbel closed form, Monte Carlo, and the ratio
counterexample showing general noise escapes every softmax temperature."""

import numpy as np
import pytest

from mdpkit import (
    GaussianJoint,
    GumbelIid,
    UniformPerEntry,
    build_uniform_counterexample,
    derive_rng,
    entropy_backup,
    ev_backup,
    mc_counterexample_ratio,
    mc_emax,
    mc_policy,
    refute_single_eta_fit,
    smdp_backup_operator,
    uniform_counterexample_ratio,
    value_iteration,
)

EULER_GAMMA = float(np.euler_gamma)
W = np.array([1.0, 0.0, -1.0])

# [DERIVED] frozen oracle: ln(e + 1 + 1/e) via mpmath at 50 digits.
EV_ORACLE = 1.407605964444380304483


# ------------------------------------------------------------- noise models


def test_gumbel_location_conventions():
    g = GumbelIid(0.7, num_actions=2)
    assert np.allclose(g.mean(0), 0.7 * EULER_GAMMA)
    mz = GumbelIid.mean_zero(0.7, num_actions=2)
    assert np.allclose(mz.mean(0), 0.0)
    assert mz.location == -0.7 * EULER_GAMMA


def test_gumbel_sample_mean_matches_convention():
    mz = GumbelIid.mean_zero(1.0, num_actions=3)
    draws = mz.sample(0, 200000, np.random.default_rng(0))
    assert draws.shape == (200000, 3)
    assert abs(draws.mean()) < 0.01


def test_gumbel_rejects_bad_scale():
    with pytest.raises(ValueError):
        GumbelIid(0.0)
    with pytest.raises(ValueError):
        ev_backup(W, -1.0)


def test_uniform_noise_validation():
    with pytest.raises(ValueError):
        UniformPerEntry(np.zeros((2, 2)))  # wrong rank
    bad = np.zeros((1, 2, 2))
    bad[0, 0] = [1.0, 0.0]  # lo > hi
    with pytest.raises(ValueError):
        UniformPerEntry(bad)


def test_uniform_noise_degenerate_bounds_are_deterministic():
    bounds = np.zeros((1, 3, 2))
    bounds[0, 1] = [0.25, 0.25]
    noise = UniformPerEntry(bounds)
    draws = noise.sample(0, 100, np.random.default_rng(1))
    assert np.all(draws[:, 0] == 0.0)
    assert np.all(draws[:, 1] == 0.25)
    est = mc_emax(W, noise, samples=64, seed=0)
    assert est.mean == pytest.approx(np.max(W + noise.mean(0)), abs=1e-12)
    assert est.std_error == 0.0


def test_gaussian_joint_rejects_non_psd():
    cov = np.array([[[1.0, 2.0], [2.0, 1.0]]])  # eigenvalues 3 and -1
    with pytest.raises(ValueError):
        GaussianJoint(cov)


def test_gaussian_joint_sample_covariance():
    cov = np.array([[[1.0, 0.5], [0.5, 2.0]]])
    noise = GaussianJoint(cov)
    draws = noise.sample(0, 200000, np.random.default_rng(2))
    emp = np.cov(draws.T)
    assert np.max(np.abs(emp - cov[0])) < 0.05


# ------------------------------------------------------- closed form vs MC


def test_ev_backup_matches_frozen_oracle():
    res = ev_backup(W, 1.0)
    assert res.value == pytest.approx(EV_ORACLE, abs=1e-14)
    assert res.gumbel_location == -EULER_GAMMA


def test_ev_backup_equals_entropy_backup():
    # the Gumbel expected max and the entropy-smoothed max are the same
    # function of the action values, policy row included.
    for eta in (0.3, 1.0, 2.5):
        ev = ev_backup(W, eta)
        ent = entropy_backup(W, eta)
        assert ev.value == ent.value
        assert np.array_equal(ev.policy, ent.argmax)


def test_mc_emax_agrees_with_closed_form():
    eta = 0.8
    noise = GumbelIid.mean_zero(eta, num_actions=3)
    est = mc_emax(W, noise, samples=400000, seed=4)
    closed = ev_backup(W, eta).value
    assert abs(est.mean - closed) <= 4.0 * est.std_error
    assert est.std_error > 0


def test_mc_emax_location_zero_is_biased_up_by_eta_gamma():
    eta = 0.8
    noise = GumbelIid(eta, num_actions=3)
    est = mc_emax(W, noise, samples=400000, seed=5)
    closed = ev_backup(W, eta).value + eta * EULER_GAMMA
    assert abs(est.mean - closed) <= 4.0 * est.std_error


def test_mc_emax_is_reproducible():
    noise = GumbelIid.mean_zero(1.0, num_actions=3)
    a = mc_emax(W, noise, samples=1000, seed=7)
    b = mc_emax(W, noise, samples=1000, seed=7)
    assert a.mean == b.mean
    assert a.std_error == b.std_error


def test_mc_policy_matches_softmax():
    eta = 1.2
    noise = GumbelIid(eta, num_actions=3)  # location cancels in the argmax
    freq = mc_policy(W, noise, samples=400000, seed=8)
    soft = ev_backup(W, eta).policy
    assert freq.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(freq - soft)) < 4.0 / np.sqrt(400000)


# ----------------------------------------------------------------- operator


def test_smdp_operator_with_common_random_numbers_converges():
    from mdpkit import random_mdp

    m = random_mdp(4, 3, seed=10, discount=0.85)
    noise = GumbelIid.mean_zero(0.5, num_actions=3)
    op = smdp_backup_operator(noise, samples=20000, seed=0)
    res = value_iteration(m, op, tol=1e-9)
    assert res.residual <= 1e-9
    # the fixed point tracks the closed form within Monte Carlo error
    closed = value_iteration(
        m, lambda w, s, k: (ev_backup(w, 0.5).value, ev_backup(w, 0.5).policy),
        tol=1e-10)
    assert np.max(np.abs(res.value - closed.value)) < 0.05


def test_smdp_operator_fresh_draws_differ_across_sweeps():
    noise = GumbelIid.mean_zero(1.0, num_actions=3)
    op = smdp_backup_operator(noise, samples=500, seed=0, fresh_per_sweep=True)
    v0, _ = op(W, 0, 0)
    v1, _ = op(W, 0, 1)
    assert v0 != v1
    frozen = smdp_backup_operator(noise, samples=500, seed=0)
    u0, _ = frozen(W, 0, 0)
    u1, _ = frozen(W, 0, 1)
    assert u0 == u1


# ------------------------------------------------- the ratio counterexample


def test_counterexample_model_structure():
    model, noise = build_uniform_counterexample(0.0, 0.25)
    assert model.num_states == 3
    assert model.num_actions == 2
    assert model.reward[0].tolist() == [0.0, 0.25]
    # only the chooser state's first action is noisy
    assert noise.bounds[0, 0].tolist() == [0.0, 1.0]
    assert np.all(noise.bounds[0, 1] == 0.0)
    assert np.all(noise.bounds[1:] == 0.0)
    # chooser routes to the two absorbing zero-reward states
    assert model.transition[0, 0, 1] == 1.0
    assert model.transition[0, 1, 2] == 1.0
    assert np.all(model.transition[1, :, 1] == 1.0)
    assert np.all(model.transition[2, :, 2] == 1.0)


def test_printed_ratio_values():
    # with t = r2 - r1 + beta the published ratio is t / (1 - t) inside (0, 1)
    assert uniform_counterexample_ratio(0.0, 0.25) == pytest.approx(1.0 / 3.0)
    assert uniform_counterexample_ratio(0.0, 0.75) == pytest.approx(3.0)
    assert uniform_counterexample_ratio(0.0, 0.5) == pytest.approx(1.0)
    # beta adds straight onto the reward gap
    assert uniform_counterexample_ratio(0.0, 0.25) == pytest.approx(
        uniform_counterexample_ratio(0.0, 0.05, beta=0.2))


def test_ratio_saturates_outside_the_overlap_window():
    assert uniform_counterexample_ratio(0.0, -0.5) == 0.0
    assert uniform_counterexample_ratio(0.0, 1.0) == np.inf
    assert uniform_counterexample_ratio(0.0, 2.0) == np.inf


def test_mc_ratio_is_the_reciprocal_orientation():
    # the direct probability calculation P[eps >= t]/P[eps < t] gives
    # (1 - t)/t, the reciprocal of the published piecewise formula; both
    # orientations defeat a single softmax temperature.
    printed = uniform_counterexample_ratio(0.0, 0.25)
    mc = mc_counterexample_ratio(0.0, 0.25, samples=400000, seed=0)
    assert mc == pytest.approx(1.0 / printed, rel=0.05)


def test_refute_single_eta_fit_on_the_curated_pair():
    # reward gaps -0.25 and -0.75 with ratios 1/3 and 3: no single
    # temperature explains both, residual at least ln(3) up to fit slack.
    fit = refute_single_eta_fit([-0.25, -0.75], [1.0 / 3.0, 3.0])
    assert fit.residual > 0.1
    assert fit.residual > 0.5 * np.log(3.0)


def test_refute_single_eta_fit_accepts_a_true_softmax_family():
    deltas = np.array([-0.25, -0.75, 0.5])
    eta = 0.9
    ratios = np.exp(deltas / eta)
    fit = refute_single_eta_fit(deltas, ratios)
    assert fit.residual < 1e-6
    assert fit.eta == pytest.approx(eta, rel=1e-3)


def test_mc_ratio_reproducible_and_positive():
    a = mc_counterexample_ratio(0.0, 0.4, samples=50000, seed=3)
    b = mc_counterexample_ratio(0.0, 0.4, samples=50000, seed=3)
    assert a == b
    assert a > 0
