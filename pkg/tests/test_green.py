import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from conftest import LOG2, iid_driver, power_map, z2_cycle
from randgreen import (alpha_sample, green_potential, invariance_test, measure_sample,
                       normalize)
from randgreen.drivers import DriverSpec, Family, driver_init, generate_sequence, lambda_params
from randgreen.green import (GreenAccumulator, export_samples_csv, forward_orbit,
                             green_potential_rows, green_sup_norm)
from randgreen.observables import CONSTANT, LIBRARY, get
from randgreen.projective import random_points, sin_distance_rows

seeds = st.integers(0, 2**32 - 1)


def modulus(P):
    return np.abs(P[:, 0] / P[:, 1])


# -- Green potential ---------------------------------------------------------------

@pytest.mark.parametrize("n", [0, 1, 5, 30])
def test_green_closed_form_for_z2(n):
    g, prof = green_potential([power_map(2)] * (n + 1), normalize([1, 0]), n)
    want = math.log(1 / math.sqrt(2)) * (1 - 2.0 ** (-(n + 1)))
    assert g == pytest.approx(want, abs=1e-10)
    assert len(prof) == n + 1


@pytest.mark.parametrize("d", [2, 3])
def test_green_closed_form_on_circle(d):
    # unit Z with |Z_0| = |Z_1|: |(Z_0^d, Z_1^d)| / sqrt2 = 2^(-d/2) at every step
    Z = normalize([np.exp(0.3j), 1])
    g, _ = green_potential([power_map(d)] * 40, Z, 39)
    a = -0.5 * d * LOG2
    assert g == pytest.approx(a * (1 - d ** -40.0) / (d - 1), abs=1e-10)


def test_single_term():
    f = power_map(2, 0.2)
    x = normalize([0.3, 1 - 0.1j])
    g, _ = green_potential([f], x, 0)
    assert g == pytest.approx(0.5 * math.log(np.linalg.norm(f.lift(x.coords)[0])), abs=1e-14)


def test_checkpoint_continuation_is_exact():
    maps = generate_sequence(driver_init(iid_driver(0.2), 3), 25)
    Z = random_points(np.random.default_rng(0), 64, 1)
    acc = GreenAccumulator.start(Z, 2)
    for i in range(10):
        acc = acc.advance(maps[i].coeffs)
    for i in range(10, 26):
        acc = acc.advance(maps[i].coeffs)
    g, _ = green_potential_rows(maps, Z, 25)
    assert np.array_equal(acc.partial_sum, g)


def test_geometric_tail_bound():
    maps = generate_sequence(driver_init(iid_driver(0.2), 4), 30)
    Z = random_points(np.random.default_rng(1), 500, 1)
    _, prof = green_potential_rows(maps, Z, 30)
    steps = np.abs(np.diff(prof, axis=0))
    a = steps * 2.0 ** np.arange(2, 32)[:, None]  # recovers |a_i|
    K = a.max()
    assert np.all(steps <= K * 2.0 ** -np.arange(2, 32)[:, None] + 1e-15)


def test_sup_norm_z2():
    # g ranges over [-log 2, -log sqrt2], the minimum on the unit circle
    sup = green_sup_norm([power_map(2)] * 21, 20, 1000, 0)
    assert 0.69 <= sup <= LOG2


# -- sampling mu(f_0) ---------------------------------------------------------------

def test_z2_samples_on_unit_circle():
    S = measure_sample([power_map(2)] * 21, 20, 100_000, 0)
    assert np.mean(np.abs(modulus(S.points) - 1)) <= 1e-3
    assert S.branch.shape == (100_000, 21)
    assert S.branch.min() >= 0 and S.branch.max() < 2


def test_branch_traces_uniform():
    S = measure_sample([power_map(2)] * 11, 9, 100_000, 1)
    codes = S.branch.astype(np.int64) @ (1 << np.arange(10))
    counts = np.bincount(codes, minlength=1024)
    assert stats.chisquare(counts).pvalue > 1e-3


@pytest.mark.parametrize("d", [2, 3])
def test_depth_zero_is_pullback_of_volume(d):
    # |z^d| is FS-uniform, i.e. P(|z| < r) = r^(2d) / (1 + r^(2d))
    S = measure_sample([power_map(d)], 0, 100_000, 2)
    r = modulus(S.points)
    edges = np.r_[0, np.exp(np.linspace(-1.5, 1.5, 9)), np.inf]
    t = edges[1:-1] ** (2 * d)
    probs = np.diff(np.r_[0.0, t / (1 + t), 1.0])
    counts = np.histogram(r, edges)[0]
    assert len(counts) == 10
    assert stats.chisquare(counts, probs * len(r)).pvalue > 1e-3


def test_sampling_is_deterministic_and_thread_independent(monkeypatch):
    maps = generate_sequence(driver_init(iid_driver(0.2), 5), 12)
    monkeypatch.setenv("RANDGREEN_THREADS", "1")
    A = measure_sample(maps, 10, 9000, 7)
    monkeypatch.setenv("RANDGREEN_THREADS", "3")
    B = measure_sample(maps, 10, 9000, 7)
    assert np.array_equal(A.points, B.points) and np.array_equal(A.branch, B.branch)


def test_chain_is_forward_orbit():
    maps = generate_sequence(driver_init(iid_driver(0.2), 6), 12)
    S = measure_sample(maps, 10, 200, 3, chain_levels=4)
    fwd = forward_orbit(maps, S.points, 3)
    assert np.max(sin_distance_rows(S.chain, fwd)) < 1e-6


def energy_statistic(X, Y):
    def mean_dist(A, B):
        return np.mean(np.linalg.norm(A[:, None, :] - B[None, :, :], axis=-1))
    return 2 * mean_dist(X, Y) - mean_dist(X, X) - mean_dist(Y, Y)


def embed(Z):
    """Hermitian embedding of P^1 in R^3 (the Riemann sphere)."""
    u = 2 * Z[:, 0] * np.conj(Z[:, 1])
    return np.stack([u.real, u.imag, np.abs(Z[:, 0]) ** 2 - np.abs(Z[:, 1]) ** 2], axis=1)


def test_sampling_equivariance_energy_distance():
    maps = generate_sequence(driver_init(iid_driver(0.3), 8), 13)
    A = measure_sample(maps, 12, 600, 1)
    B = measure_sample(maps[1:], 11, 600, 2)
    from randgreen.projective import evaluate_rows
    FA, _ = evaluate_rows(maps[0].coeffs, 2, A.points)
    X, Y = embed(FA), embed(B.points)
    obs = energy_statistic(X, Y)
    rng = np.random.default_rng(0)
    pool = np.vstack([X, Y])
    perm = []
    for _ in range(200):
        p = rng.permutation(len(pool))
        perm.append(energy_statistic(pool[p[:600]], pool[p[600:]]))
    pvalue = (1 + np.sum(np.array(perm) >= obs)) / 201
    assert pvalue > 1e-3


def test_green_potential_matches_measure_potential():
    """The log-potential of mu minus g_infinity is constant (both have
    Laplacian mu - omega)."""
    maps = generate_sequence(driver_init(DriverSpec.cycle_of(Family("power", 1, 2),
                                                             [[-0.3 + 0.2j]]), 0), 40)
    S = measure_sample(maps, 20, 100_000, 4)
    radii = [0.3, 0.6, 1.6, 3.0]
    ang = np.exp(2j * np.pi * (np.arange(16) + 0.5) / 16)
    z = np.concatenate([r * ang for r in radii])
    P = np.stack([z, np.ones_like(z)], axis=1)
    P /= np.linalg.norm(P, axis=1, keepdims=True)
    g, _ = green_potential_rows(maps, P, 40)
    pot = np.array([np.mean(np.log(sin_distance_rows(S.points, p[None, :]))) for p in P])
    diff = pot - g
    assert np.ptp(diff) <= 0.02


def test_export_csv(tmp_path):
    S = measure_sample([power_map(2)] * 4, 3, 5, 0)
    path = tmp_path / "s.csv"
    export_samples_csv(S, path, 2)
    lines = path.read_text().splitlines()
    assert lines[0] == "depth,branch_trace,z0_re,z0_im,z1_re,z1_im"
    first = lines[1].split(",")
    assert first[0] == "3" and len(first[1]) == 4
    assert complex(float(first[2]), float(first[3])) == S.points[0, 0]


# -- invariance and alpha --------------------------------------------------------------

def test_invariance_z2_re_observable():
    f = power_map(2)
    mu = measure_sample([f] * 22, 20, 50_000, 0)
    mu2 = measure_sample([f] * 22, 20, 50_000, 1)
    [(oid, disc, se)] = invariance_test(f, mu, mu2, [get("re_z")])
    assert oid == "re_z" and disc <= 3 * se


def test_invariance_constant_is_exact():
    f = power_map(2)
    mu = measure_sample([f] * 5, 4, 1000, 0)
    [(_, disc, _)] = invariance_test(f, mu, random_points(np.random.default_rng(0), 500, 1),
                                     [CONSTANT])
    assert disc == 0.0


def test_invariance_negative_control():
    maps = generate_sequence(driver_init(iid_driver(0.1), 2), 22)
    mu = measure_sample(maps, 20, 50_000, 0)
    fs = random_points(np.random.default_rng(1), 50_000, 1)
    res = invariance_test(maps[0], mu, fs, LIBRARY)
    assert any(disc > 3 * se for _, disc, se in res)


def test_alpha_cycle_z2_points_on_circle():
    al = alpha_sample(z2_cycle(), 20, 2000, 0)
    assert np.allclose(al.params, 0)
    assert np.max(np.abs(modulus(al.points) - 1)) < 1e-4
    assert al[0].map.d == 2


def test_alpha_marginal_matches_lambda():
    spec = iid_driver(0.2)
    al = alpha_sample(spec, 10, 4000, 3)
    P, _ = lambda_params(spec, 3, 4000)
    ks = stats.ks_2samp(np.abs(al.params[:, 0]), np.abs(P[:, 0]))
    assert ks.pvalue > 1e-3


def test_alpha_tiny_radius_near_circle():
    al = alpha_sample(iid_driver(0.01), 20, 5000, 4)
    assert np.mean(np.abs(modulus(al.points) - 1)) <= 0.05


@settings(deadline=None, max_examples=10)
@given(seeds)
def test_observables_bounded(seed):
    Z = random_points(np.random.default_rng(seed), 1000, 2)
    for o in LIBRARY:
        assert np.max(np.abs(o(Z))) <= 1 + 1e-12
