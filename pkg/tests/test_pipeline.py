import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twostage.channel import ArrayGeometry, build_dictionary, make_channel, sample_channel
from twostage.errors import DegenerateEstimate, MemoryBudgetExceeded
from twostage.pipeline import (
    _block_operator,
    estimate_aoa,
    fit_gains,
    flat_to_pair,
    one_stage_dictionary,
    one_stage_omp,
    oracle_estimate,
    oracle_sounders,
    pair_paths,
    path_regressors,
    reconstruct_rhat,
    solve_normal,
    two_stage_estimate,
)
from twostage.sounding import observe, one_stage_sounders, stage1_sounders, stage2_sounders

GEOM = ArrayGeometry(20, 64, 4)
DR, DT = build_dictionary(20, 1), build_dictionary(64, 1)


def nmse(h, h_hat):
    return np.linalg.norm(h - h_hat) ** 2 / np.linalg.norm(h) ** 2


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1))
def test_two_stage_noiseless_exact_on_grid(seed):
    rng = np.random.default_rng(seed)
    ch = sample_channel(GEOM, 4, (20, 64), rng=rng)
    est = two_stage_estimate(ch, GEOM, DR, DT, 1, 45, 1.0, 1.0, 0.0, rng)
    assert set(est.aoa_support) == set(ch.aoa_grid)
    assert set(est.aod_support) == set(ch.aod_grid)
    assert nmse(ch.matrix, est.h_hat) <= 1e-20
    # paired angles reproduce the true (AoA, AoD) pairs
    truth = sorted(zip(ch.aoa_freqs, ch.aod_freqs))
    got = sorted(zip(est.aoa_freqs, est.aod_freqs))
    np.testing.assert_allclose(got, truth, atol=1e-12)


def test_planted_two_path_channel():
    g = ArrayGeometry(8, 16, 2)
    ch = make_channel(g, [2 / 8, 5 / 8], [3 / 16, 11 / 16], [2.0 + 1j, -0.5j], grid_sizes=(8, 16))
    est = two_stage_estimate(ch, g, build_dictionary(8), build_dictionary(16), 1, 6, 1.0, 1.0, 0.0)
    assert sorted(est.aoa_support) == [2, 5] and sorted(est.aod_support) == [3, 11]
    by_aoa = dict(zip(np.round(est.aoa_freqs * 8).astype(int), est.gains))
    assert by_aoa[2] == pytest.approx(2.0 + 1j, abs=1e-12)
    assert by_aoa[5] == pytest.approx(-0.5j, abs=1e-12)
    # R_hat is a permuted diagonal after the gain refit
    r = est.r_hat
    assert np.count_nonzero(np.abs(r) > 1e-12) == 2
    np.testing.assert_allclose(np.abs(est.diagnostics["r_hat_ls"]), np.abs(r), atol=1e-10)


def test_first_stage_alone(rng):
    ch = sample_channel(GEOM, 4, (20, 64), rng=rng)
    s1 = estimate_aoa(ch, GEOM, DR, 1, 1.0, 0.0, rng)
    assert set(s1.support) == set(ch.aoa_grid)
    assert s1.observations.shape == (20, 1)
    assert s1.residual_norms[-1] < 1e-10 * s1.residual_norms[0]


def test_reconstruction_with_true_responses_recovers_diagonal(rng):
    ch = sample_channel(GEOM, 4, "continuous", rng=rng)
    snd1 = stage1_sounders(GEOM, 1, 1.0)
    snd2 = stage2_sounders(GEOM, ch.rx_responses, 45, 1.0)
    y1, y2 = observe(ch, snd1, 0.0), observe(ch, snd2, 0.0)
    r, h = reconstruct_rhat(y1, y2, snd1, snd2, ch.rx_responses, ch.tx_responses)
    np.testing.assert_allclose(r, np.diag(ch.gains), atol=1e-8 * np.abs(ch.gains).max())
    assert nmse(ch.matrix, h) < 1e-20


def test_block_operator_matches_vectorized_observation(rng):
    snd = stage2_sounders(GEOM, DR.columns([0, 3, 7]), 10, 2.0)
    a_r, a_t = DR.columns([0, 3, 7]), DT.columns([1, 2, 9])
    r = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    y = snd.rsb.conj().T @ a_r @ r @ a_t.conj().T @ snd.tsb
    np.testing.assert_allclose(_block_operator(snd, a_r, a_t) @ r.reshape(-1, order="F"),
                               y.reshape(-1, order="F"), atol=1e-12)


def test_solve_normal_warns_when_singular():
    a = np.ones((4, 2))
    with pytest.warns(RuntimeWarning):
        x, ridge = solve_normal([a], [np.ones(4)])
    assert ridge


@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_pair_paths_recovers_dominant_permutation(seed, L):
    rng = np.random.default_rng(seed)
    perm = rng.permutation(L)
    r = 0.01 * (rng.standard_normal((L, L)) + 1j * rng.standard_normal((L, L)))
    big = (1 + rng.random(L)) * np.exp(2j * np.pi * rng.random(L))
    r[np.arange(L), perm] = big
    pairs = pair_paths(r)
    assert sorted((i, j) for i, j, _ in pairs) == sorted(zip(range(L), perm))
    assert len({i for i, _, _ in pairs}) == len({j for _, j, _ in pairs}) == L


def test_pair_paths_greedy_order():
    r = np.array([[3.0, 2.9], [2.95, 0.1]])
    # greedy takes the 3.0 entry first, forcing (1, 1) although (0, 1) + (1, 0) is heavier
    assert [(i, j) for i, j, _ in pair_paths(r)] == [(0, 0), (1, 1)]


def test_oracle_gains_exact_noiseless(rng):
    ch = sample_channel(GEOM, 4, "continuous", rng=rng)
    est = oracle_estimate(ch, oracle_sounders(ch, GEOM, 1, 45, 1.0, 1.0))
    np.testing.assert_allclose(est.gains, ch.gains, rtol=1e-12)
    assert nmse(ch.matrix, est.h_hat) < 1e-24


def test_oracle_rejects_unidentifiable_gains():
    g = ArrayGeometry(8, 16, 2)
    ch = make_channel(g, [0.25, 0.25], [0.5, 0.5], [1.0, 2.0])
    with pytest.raises(DegenerateEstimate):
        oracle_estimate(ch, stage1_sounders(g, 2, 1.0))


def test_fit_gains_stacks_blocks(rng):
    ch = sample_channel(GEOM, 3, "continuous", rng=rng)
    snd = [stage1_sounders(GEOM, 2, 1.0), stage2_sounders(GEOM, ch.rx_responses, 8, 3.0)]
    blocks = [(s, observe(ch, s, 0.0)) for s in snd]
    np.testing.assert_allclose(fit_gains(blocks, ch.rx_responses, ch.tx_responses), ch.gains, rtol=1e-10)
    assert path_regressors(snd[0], ch.rx_responses, ch.tx_responses).shape == (40, 3)


@given(st.integers(0, 10**6), st.integers(1, 64))
def test_flat_index_round_trip(q, g_r):
    i, j = flat_to_pair(q, g_r)
    assert 0 <= i < g_r and j * g_r + i == q


def test_one_stage_dictionary_column_order(rng):
    g = ArrayGeometry(8, 12, 2)
    dr, dt = build_dictionary(8), build_dictionary(12)
    snd = one_stage_sounders(g, 4, 3, 1.0, rng=rng)
    d = one_stage_dictionary(snd, dr, dt)
    for q in (0, 5, 17, 95):
        i, j = flat_to_pair(q, 8)
        y = snd.rsb.conj().T @ np.outer(dr.columns([i])[:, 0], dt.columns([j])[:, 0].conj()) @ snd.tsb
        np.testing.assert_allclose(d[:, q], y.reshape(-1, order="F"), atol=1e-12)


def test_one_stage_omp_noiseless_exact_with_full_sounding(rng):
    g = ArrayGeometry(8, 12, 2)
    ch = sample_channel(g, 2, (8, 12), rng=rng)
    est = one_stage_omp(ch, g, build_dictionary(8), build_dictionary(12), 8, 12, 1.0, 0.0, rng,
                        mode="partial_dft")
    assert set(zip(est.aoa_support, est.aod_support)) == set(zip(ch.aoa_grid, ch.aod_grid))
    assert nmse(ch.matrix, est.h_hat) < 1e-20


def test_one_stage_memory_guard(rng):
    ch = sample_channel(GEOM, 4, (20, 64), rng=rng)
    with pytest.raises(MemoryBudgetExceeded):
        one_stage_omp(ch, GEOM, DR, DT, 20, 10, 1.0, 0.0, rng, element_budget=1000)
