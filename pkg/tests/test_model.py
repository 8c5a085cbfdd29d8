import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_spd, random_state
from streamfact.data import MaskedDataset, sample_order
from streamfact.linalg import ContractViolation, SingularSystem
from streamfact.model import (
    DictionaryState,
    ModelConfig,
    Observation,
    covariance_update,
    estimate_coefficients,
    estimate_coefficients_masked,
    init_state,
    mean_update,
    predict,
    reconstruct,
    run_pass,
    step,
)


# -- initialisation --------------------------------------------------------------

def test_init_state_contract():
    s = init_state(ModelConfig(rank=2, V0_scale=1.0, init_seed=7), 3)
    assert s.C.shape == (3, 2)
    np.testing.assert_array_equal(s.V, np.eye(2))
    assert s.step == 0


def test_init_state_deterministic():
    cfg = ModelConfig(rank=3, init_seed=42)
    assert np.array_equal(init_state(cfg, 10).C, init_state(cfg, 10).C)
    other = init_state(ModelConfig(rank=3, init_seed=43), 10).C
    assert not np.array_equal(init_state(cfg, 10).C, other)


def test_init_state_v0_scale():
    s = init_state(ModelConfig(rank=4, V0_scale=0.5), 5)
    np.testing.assert_array_equal(s.V, 0.5 * np.eye(4))


def test_init_scale_default():
    C = init_state(ModelConfig(rank=16, init_seed=1), 4000).C
    assert abs(C.std() - 0.25) < 0.01


def test_config_validation():
    with pytest.raises(ContractViolation):
        ModelConfig(rank=0)
    with pytest.raises(ContractViolation):
        ModelConfig(rank=2, lam=0.0)
    with pytest.raises(ContractViolation):
        ModelConfig(rank=2, ridge=-1.0)
    with pytest.raises(ContractViolation):
        ModelConfig(rank=2, QV=-np.eye(2))


# -- coefficients ------------------------------------------------------------------

def test_coefficients_orthonormal(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((6, 3)))
    s = DictionaryState(Q, np.eye(3), 1.0)
    y = rng.standard_normal(6)
    np.testing.assert_allclose(estimate_coefficients(s, y), Q.T @ y, atol=1e-14)


def test_coefficients_hand_example():
    s = DictionaryState(np.array([[1.0, 0.0], [0.0, 2.0]]), np.eye(2), 1.0)
    np.testing.assert_allclose(estimate_coefficients(s, [2.0, 6.0]), [2.0, 3.0], rtol=1e-15)


def test_coefficients_consistent_system(rng):
    C = rng.standard_normal((9, 4))
    x0 = rng.standard_normal(4)
    s = DictionaryState(C, np.eye(4), 1.0)
    np.testing.assert_allclose(estimate_coefficients(s, C @ x0), x0, atol=1e-10)


def test_coefficients_rank_deficient_singular():
    C = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
    with pytest.raises(SingularSystem):
        estimate_coefficients(DictionaryState(C, np.eye(2), 1.0), [1.0, 1.0, 1.0])


def test_ridge_regularises_rank_deficiency():
    C = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
    x = estimate_coefficients(DictionaryState(C, np.eye(2), 1.0), [1.0, 2.0, 3.0], ridge=1e-6)
    np.testing.assert_allclose(C @ x, [1.0, 2.0, 3.0], rtol=1e-5)


def test_masked_all_ones_matches_plain(rng):
    s = random_state(rng, 7, 3)
    y = rng.standard_normal(7)
    plain = estimate_coefficients(s, y)
    masked = estimate_coefficients_masked(s, Observation(y, np.ones(7)))
    assert np.max(np.abs(masked - plain)) <= 1e-12


def test_masked_all_zero_is_singular(rng):
    s = random_state(rng, 5, 2)
    with pytest.raises(SingularSystem):
        estimate_coefficients_masked(s, Observation(rng.standard_normal(5), np.zeros(5)))


def test_masked_hand_example():
    s = DictionaryState(np.ones((4, 1)), np.eye(1), 1.0)
    obs = Observation([2.0, 2.0, 9.0, 9.0], [1.0, 1.0, 0.0, 0.0])
    np.testing.assert_allclose(estimate_coefficients_masked(s, obs), [2.0], rtol=1e-15)


def test_mask_must_be_binary():
    with pytest.raises(ContractViolation):
        Observation([1.0, 2.0], [1.0, 0.5])


# -- mean / covariance updates -------------------------------------------------

def test_mean_update_identity_v():
    s = DictionaryState(np.zeros((2, 2)), np.eye(2), 1.0)
    x = np.array([1.0, 0.0])
    y = np.array([4.0, 2.0])
    C = mean_update(s, x, y - s.C @ x)
    np.testing.assert_allclose(C, [[2.0, 0.0], [1.0, 0.0]], rtol=1e-15)


def test_mean_update_zero_x(rng):
    s = random_state(rng, 4, 3)
    C = mean_update(s, np.zeros(3), rng.standard_normal(4))
    np.testing.assert_array_equal(C, s.C)


def test_mean_update_hand_example():
    s = DictionaryState(np.eye(2), np.diag([2.0, 1.0]), 1.0)
    x = np.array([1.0, 1.0])
    y = np.array([3.0, 1.0])
    C = mean_update(s, x, y - s.C @ x)
    np.testing.assert_allclose(C, [[2.0, 0.5], [0.0, 1.0]], rtol=1e-15)


def test_covariance_update_identity():
    s = DictionaryState(np.zeros((3, 2)), np.eye(2), 1.0)
    np.testing.assert_allclose(covariance_update(s, [1.0, 0.0]), [[0.5, 0.0], [0.0, 1.0]])


def test_covariance_update_zero_x(rng):
    s = random_state(rng, 3, 3)
    np.testing.assert_allclose(covariance_update(s, np.zeros(3)), s.V, rtol=1e-15)


def test_covariance_update_hand_example():
    s = DictionaryState(np.zeros((3, 2)), np.diag([2.0, 1.0]), 1.0)
    V = covariance_update(s, [1.0, 1.0])
    np.testing.assert_allclose(V, [[1.0, -0.5], [-0.5, 0.75]], rtol=1e-15)


@given(st.integers(1, 6), st.sampled_from([0.5, 1.0, 2.0]), st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_covariance_shrinks_in_loewner_order(r, lam, seed):
    rng = np.random.default_rng(seed)
    s = DictionaryState(np.zeros((2, r)), random_spd(rng, r, scale=rng.uniform(0.1, 10)), lam)
    x = rng.standard_normal(r) * rng.uniform(0.01, 100)
    V = covariance_update(s, x)
    assert np.max(np.abs(V - V.T)) <= 1e-12 * max(1.0, np.abs(V).max())
    assert np.trace(V) <= np.trace(s.V)
    tr = np.trace(s.V)
    assert np.linalg.eigvalsh(s.V - V)[0] >= -1e-10 * tr
    assert np.linalg.eigvalsh(V)[0] >= -1e-10 * tr


def test_covariance_symmetric_for_ill_conditioned_input(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
    V = (Q * np.logspace(-8, 4, 5)) @ Q.T
    V = 0.5 * (V + V.T)
    out = covariance_update(DictionaryState(np.zeros((2, 5)), V, 0.5), rng.standard_normal(5) * 1e3)
    assert np.max(np.abs(out - out.T)) <= 1e-12 * np.abs(out).max()


@given(st.integers(1, 8), st.integers(1, 4), st.sampled_from([0.5, 1.0, 2.0]),
       st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_residual_contraction_law(m, r, lam, seed):
    rng = np.random.default_rng(seed)
    s = random_state(rng, m, r, lam)
    x = rng.standard_normal(r)
    y = rng.standard_normal(m)
    before = y - s.C @ x
    C = mean_update(s, x, before)
    after = y - C @ x
    factor = lam / (x @ s.V @ x + lam)
    assert abs(np.linalg.norm(after) / np.linalg.norm(before) - factor) <= 1e-10
    np.testing.assert_allclose(after, factor * before, atol=1e-10 * np.linalg.norm(before))


# -- predict ----------------------------------------------------------------

def test_predict_zero_noise_is_identity(rng):
    s = random_state(rng, 3, 2)
    p = predict(s, np.zeros((2, 2)))
    np.testing.assert_array_equal(p.V, s.V)
    np.testing.assert_array_equal(p.C, s.C)


def test_predict_adds_noise():
    s = DictionaryState(np.zeros((3, 2)), np.eye(2), 1.0)
    np.testing.assert_allclose(predict(s, 0.1 * np.eye(2)).V, 1.1 * np.eye(2))


def test_predict_rejects_indefinite():
    s = DictionaryState(np.zeros((3, 2)), np.eye(2), 1.0)
    with pytest.raises(ContractViolation):
        predict(s, np.diag([1.0, -1.0]))


# -- step / run_pass ----------------------------------------------------------------

def test_step_all_ones_mask_matches_plain(rng):
    s = random_state(rng, 6, 2)
    y = rng.standard_normal(6)
    a = step(s, Observation(y))
    b = step(s, Observation(y, np.ones(6)))
    assert np.max(np.abs(a.C - b.C)) <= 1e-12
    assert np.max(np.abs(a.V - b.V)) <= 1e-12
    assert a.step == b.step == 1


def test_step_composes_updates(rng):
    s = random_state(rng, 5, 3)
    y = rng.standard_normal(5)
    x = estimate_coefficients(s, y)
    nxt = step(s, Observation(y))
    np.testing.assert_allclose(nxt.C, mean_update(s, x, y - s.C @ x), rtol=1e-15)
    np.testing.assert_allclose(nxt.V, covariance_update(s, x), rtol=1e-15)


def test_step_residual_shrinks_by_filter_factor(rng):
    s = random_state(rng, 8, 3, lam=2.0)
    y = rng.standard_normal(8)
    x = estimate_coefficients(s, y)
    nxt = step(s, Observation(y))
    factor = 2.0 / (x @ s.V @ x + 2.0)
    before = np.linalg.norm(y - s.C @ x)
    after = np.linalg.norm(y - nxt.C @ x)
    assert abs(after - factor * before) <= 1e-10 * before


def test_step_singular_leaves_state_untouched(rng):
    s = random_state(rng, 4, 2)
    C0, V0 = s.C.copy(), s.V.copy()
    with pytest.raises(SingularSystem):
        step(s, Observation(rng.standard_normal(4), np.zeros(4)))
    np.testing.assert_array_equal(s.C, C0)
    np.testing.assert_array_equal(s.V, V0)


def test_step_masked_only_changes_observed_rows(rng):
    s = random_state(rng, 6, 2)
    mask = np.array([1, 1, 1, 1, 0, 0], dtype=float)
    nxt = step(s, Observation(rng.standard_normal(6), mask))
    np.testing.assert_array_equal(nxt.C[4:], s.C[4:])
    assert not np.allclose(nxt.C[:4], s.C[:4])


def test_kalman_zero_noise_equals_plain(rng):
    plain = ModelConfig(rank=3, lam=1.0, ridge=0.0)
    kalman = ModelConfig(rank=3, lam=1.0, ridge=0.0, QV=np.zeros((3, 3)))
    a = b = random_state(rng, 7, 3)
    for _ in range(20):
        obs = Observation(rng.standard_normal(7))
        a, b = step(a, obs, plain), step(b, obs, kalman)
        assert np.max(np.abs(a.C - b.C)) <= 1e-12
        assert np.max(np.abs(a.V - b.V)) <= 1e-12


def test_kalman_noise_keeps_gain_alive(rng):
    plain = ModelConfig(rank=2, lam=1.0, ridge=0.0)
    kalman = ModelConfig(rank=2, lam=1.0, ridge=0.0, QV=0.05 * np.eye(2))
    a = b = random_state(rng, 5, 2)
    for _ in range(200):
        obs = Observation(rng.standard_normal(5))
        a, b = step(a, obs, plain), step(b, obs, kalman)
    assert np.trace(b.V) > 10 * np.trace(a.V)


def _dataset(rng, m=10, n=6):
    return MaskedDataset(rng.standard_normal((m, n)))


def test_run_pass_empty_order(rng):
    s = random_state(rng, 10, 2)
    out, trace = run_pass(s, _dataset(rng), ModelConfig(rank=2), [])
    assert out is s and len(trace) == 0


def test_run_pass_one_pass_visits_each_column(rng):
    data = _dataset(rng)
    order = sample_order(data.n, data.n, "epoch", seed=3)
    _, trace = run_pass(random_state(rng, 10, 2), data, ModelConfig(rank=2), order)
    assert sorted(r.index for r in trace.records) == list(range(data.n))


def test_run_pass_deterministic(rng):
    data = _dataset(rng)
    cfg = ModelConfig(rank=3, init_seed=5)
    order = sample_order(data.n, 30, "replacement", seed=9)
    a, _ = run_pass(init_state(cfg, 10), data, cfg, order)
    b, _ = run_pass(init_state(cfg, 10), data, cfg, order)
    assert np.array_equal(a.C, b.C) and np.array_equal(a.V, b.V)


def test_run_pass_skips_singular_columns(rng):
    Y = rng.standard_normal((6, 3))
    M = np.ones((6, 3))
    M[:, 1] = 0
    data = MaskedDataset(Y, M)
    s, trace = run_pass(random_state(rng, 6, 2), data, ModelConfig(rank=2, ridge=0.0), [0, 1, 2])
    assert [r.index for r in trace.skipped] == [1]
    assert s.step == 2


def test_run_pass_rejects_bad_index(rng):
    with pytest.raises(ContractViolation):
        run_pass(random_state(rng, 10, 2), _dataset(rng), ModelConfig(rank=2), [99])


# -- reconstruct ----------------------------------------------------------------

def test_reconstruct_consistent_model(rng):
    C = rng.standard_normal((12, 3))
    Y = C @ rng.standard_normal((3, 8))
    out, failed = reconstruct(DictionaryState(C, np.eye(3), 1.0), MaskedDataset(Y))
    assert failed == []
    np.testing.assert_allclose(out, Y, atol=1e-8)


def test_reconstruct_fills_missing_entries(rng):
    C = rng.standard_normal((12, 3))
    Y = C @ rng.standard_normal((3, 8))
    M = np.ones_like(Y)
    M[:4] = 0
    out, _ = reconstruct(DictionaryState(C, np.eye(3), 1.0), MaskedDataset(Y, M))
    np.testing.assert_allclose(out, Y, atol=1e-8)


def test_reconstruct_empty(rng):
    out, failed = reconstruct(random_state(rng, 4, 2), MaskedDataset(np.zeros((4, 0))))
    assert out.shape == (4, 0) and failed == []


def test_reconstruct_flags_fully_masked_column(rng):
    Y = rng.standard_normal((5, 3))
    M = np.ones_like(Y)
    M[:, 2] = 0
    out, failed = reconstruct(random_state(rng, 5, 2), MaskedDataset(Y, M))
    assert failed == [2]
    np.testing.assert_array_equal(out[:, 2], 0.0)


def test_reconstruct_all_ones_mask_matches_plain(rng):
    s = random_state(rng, 9, 3)
    Y = rng.standard_normal((9, 5))
    a, _ = reconstruct(s, MaskedDataset(Y))
    b, _ = reconstruct(s, MaskedDataset(Y, np.ones_like(Y)))
    ones = np.ones_like(Y)
    c = np.stack([s.C @ estimate_coefficients_masked(s, Observation(Y[:, j], ones[:, j]))
                  for j in range(5)], axis=1)
    assert np.max(np.abs(a - b)) <= 1e-12
    assert np.max(np.abs(a - c)) <= 1e-12
