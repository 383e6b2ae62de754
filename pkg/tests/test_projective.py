import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from scipy import optimize
from hypothesis import strategies as st

from conftest import diagonal_map, power_map, random_map
from randgreen import (HomPolynomial, IndeterminacyHit, RationalMap, ZeroVector, compose,
                       distance_to_degenerate, evaluate, fs_distance, fs_jacobian, normalize,
                       tangent_frame)
from randgreen.projective import (exponents, frame_rows, fs_distance_rows, fs_jacobian_rows,
                                  parameter_dimension, random_points, resultant_binary,
                                  sylvester_matrix)

SQ2 = math.sqrt(2.0)

finite = st.floats(-3, 3, allow_nan=False)
cplx = st.builds(complex, finite, finite)
seeds = st.integers(0, 2**32 - 1)


# -- points and distance ---------------------------------------------------

def test_normalize_examples():
    assert np.allclose(normalize([2, 0]).coords, [1, 0])
    assert np.allclose(normalize([1, 1]).coords, [1 / SQ2, 1 / SQ2])
    with pytest.raises(ZeroVector):
        normalize([0, 0])


@given(st.lists(cplx, min_size=2, max_size=4).filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_normalize_unit_and_idempotent(v):
    p = normalize(v)
    assert abs(np.linalg.norm(p.coords) - 1) < 1e-12
    assert np.allclose(normalize(p.coords).coords, p.coords, atol=1e-15)


def test_fs_distance_examples():
    a, b = normalize([1, 0]), normalize([0, 1])
    assert fs_distance(a, a) == 0.0
    assert fs_distance(a, b) == pytest.approx(math.pi / 2)
    assert fs_distance(a, normalize([1, 1])) == pytest.approx(math.pi / 4, abs=1e-15)


@given(seeds, st.floats(1e-12, 1.5))
def test_fs_distance_resolves_small_angles(seed, t):
    # rotate a random point by a known angle inside a complex 2-plane
    rng = np.random.default_rng(seed)
    Z = random_points(rng, 2, 2)
    u = Z[1] - np.vdot(Z[0], Z[1]) * Z[0]
    u /= np.linalg.norm(u)
    W = math.cos(t) * Z[0] + math.sin(t) * u
    assert fs_distance_rows(Z[0], W) == pytest.approx(t, rel=1e-9, abs=1e-15)


@given(seeds, st.floats(0, 2 * math.pi))
def test_fs_distance_phase_invariant_and_symmetric(seed, th):
    Z = random_points(np.random.default_rng(seed), 2, 3)
    d0 = fs_distance_rows(Z[0], Z[1])
    assert fs_distance_rows(Z[1], Z[0]) == pytest.approx(d0, abs=1e-14)
    assert fs_distance_rows(cmath.exp(1j * th) * Z[0], Z[1]) == pytest.approx(d0, abs=1e-12)


# -- polynomials and maps ----------------------------------------------------

def test_parameter_dimension_formula():
    for k in range(1, 4):
        for d in range(1, 5):
            N = (k + 1) * math.factorial(d + k) // (math.factorial(d) * math.factorial(k)) - 1
            assert parameter_dimension(k, d) == N
            assert len(exponents(k + 1, d)) * (k + 1) - 1 == N


def test_hom_polynomial_rejects_wrong_degree():
    with pytest.raises(ValueError):
        HomPolynomial(2, 2, {(1, 0): 1.0})


@given(seeds, cplx.filter(lambda z: abs(z) > 1e-2))
def test_hom_polynomial_homogeneous(seed, lam):
    rng = np.random.default_rng(seed)
    f = random_map(rng, 2, 3)
    Z = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    for p in f.components:
        assert p(lam * Z) == pytest.approx(lam ** 3 * p(Z), rel=1e-10, abs=1e-12)


def test_rational_map_normalized():
    f = RationalMap.from_components([{(2, 0): 3.0}, {(0, 2): 4.0}])
    assert np.linalg.norm(f.coeffs) == pytest.approx(1.0, abs=1e-12)
    assert f.coeff_norm == pytest.approx(5.0)


def test_evaluate_examples():
    f = power_map(2)
    y, ln = evaluate(f, normalize([1, 0]))
    assert np.allclose(y.coords, [1, 0]) and ln == pytest.approx(math.log(1 / SQ2))
    # (Z^2, W^2)/sqrt2 at (1,1)/sqrt2 is (1/(2 sqrt2), 1/(2 sqrt2)), of norm 1/2
    y, ln = evaluate(f, normalize([1, 1]))
    assert np.allclose(y.coords, [1 / SQ2, 1 / SQ2]) and ln == pytest.approx(math.log(0.5))
    bad = RationalMap.from_components([{(2, 0): 1.0}, {(1, 1): 1.0}])
    with pytest.raises(IndeterminacyHit):
        evaluate(bad, normalize([0, 1]))


@given(seeds, cplx.filter(lambda z: abs(z) > 1e-2))
def test_evaluate_commutes_with_scaling(seed, lam):
    rng = np.random.default_rng(seed)
    f = random_map(rng, 1, 3)
    Z = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    a = f.lift(lam * Z)[0]
    b = f.lift(Z)[0]
    assert fs_distance_rows(a / np.linalg.norm(a), b / np.linalg.norm(b)) < 1e-7


# -- frames and Jacobians --------------------------------------------------------

@given(seeds, st.integers(1, 3))
def test_frames_orthonormal(seed, k):
    Z = random_points(np.random.default_rng(seed), 5, k)
    V = frame_rows(Z)
    G = np.einsum("bia,bic->bac", np.conj(V), V)
    assert np.allclose(G, np.eye(k), atol=1e-10)
    assert np.max(np.abs(np.einsum("bi,bia->ba", np.conj(Z), V))) < 1e-10


def fs_derivative_p1(c, d, z):
    """|f'(z)| (1 + |z|^2) / (1 + |f(z)|^2) for f(z) = z^d + c."""
    fz = z ** d + c
    return abs(d * z ** (d - 1)) * (1 + abs(z) ** 2) / (1 + abs(fz) ** 2)


def test_fs_jacobian_z2_at_one():
    J = fs_jacobian(power_map(2), normalize([1, 1]))
    assert J.shape == (1, 1) and abs(J[0, 0]) == pytest.approx(2.0, abs=1e-12)


def test_fs_jacobian_critical_point():
    assert abs(fs_jacobian(power_map(2), normalize([0, 1]))[0, 0]) == pytest.approx(0, abs=1e-15)


@given(seeds, st.integers(2, 4), cplx)
def test_fs_jacobian_matches_closed_form(seed, d, c):
    rng = np.random.default_rng(seed)
    z = complex(*rng.standard_normal(2))
    J = fs_jacobian(power_map(d, c), normalize([z, 1]))
    assert abs(J[0, 0]) == pytest.approx(fs_derivative_p1(c, d, z), rel=1e-9)


@given(seeds, st.floats(0, 2 * math.pi), st.integers(1, 2))
def test_jacobian_phase_invariance(seed, th, k):
    rng = np.random.default_rng(seed)
    f = random_map(rng, k, 2)
    Z = random_points(rng, 1, k)
    J1, W1, ln1, _ = fs_jacobian_rows(f.coeffs, 2, Z)
    J2, W2, ln2, _ = fs_jacobian_rows(f.coeffs, 2, cmath.exp(1j * th) * Z)
    assert ln1 == pytest.approx(ln2, abs=1e-12)
    assert fs_distance_rows(W1, W2)[0] < 1e-7
    assert np.allclose(np.linalg.svd(J1[0], compute_uv=False),
                       np.linalg.svd(J2[0], compute_uv=False), rtol=1e-9)


@settings(deadline=None, max_examples=25)
@given(seeds, st.integers(1, 2))
def test_jacobian_chain_rule(seed, k):
    rng = np.random.default_rng(seed)
    f, g = random_map(rng, k, 2), random_map(rng, k, 2)
    x = normalize(random_points(rng, 1, k)[0])
    Jg, Wg, _, _ = fs_jacobian_rows(g.coeffs, 2, x.coords[None])
    Jf, _, _, _ = fs_jacobian_rows(f.coeffs, 2, Wg)
    Jfg = fs_jacobian(compose(f, g), x)
    assert np.allclose(Jfg, Jf[0] @ Jg[0], atol=1e-8 * (1 + np.abs(Jfg).max()))


def test_explicit_frame_is_used():
    f = power_map(2, 0.3)
    x = normalize([0.4 + 0.2j, 1])
    F = tangent_frame(x)
    rotated = type(F)(x, F.vectors * 1j)
    assert fs_jacobian(f, x, rotated)[0, 0] == pytest.approx(1j * fs_jacobian(f, x, F)[0, 0])


# -- distance to the degenerate locus -----------------------------------------

def test_distance_examples():
    assert distance_to_degenerate(power_map(2)) == pytest.approx(1 / SQ2, abs=1e-12)
    deg = RationalMap.from_components([{(2, 0): 1.0}, {(1, 1): 1.0}])
    assert distance_to_degenerate(deg) == 0.0


def test_k2_distance_proxy_diagonal():
    # min over the unit sphere of |(Z^2, W^2, T^2)|/sqrt3 is 1/3 (at the
    # barycenter |Z|=|W|=|T|); the proxy is its square root
    val = distance_to_degenerate(diagonal_map(2, 2))
    assert val == pytest.approx(1 / math.sqrt(3), abs=1e-6)


@settings(deadline=None, max_examples=10)
@given(seeds)
def test_k2_distance_proxy_beats_dense_sampling(seed):
    rng = np.random.default_rng(seed)
    f = random_map(rng, 2, 2)
    Z = random_points(np.random.default_rng(seed + 1), 200_000, 2)
    dense = np.min(np.linalg.norm(f.lift(Z), axis=1)) ** 0.5
    val = distance_to_degenerate(f)
    assert val <= dense + 1e-9
    # polishing the best dense point with a generic optimizer cannot beat it
    z0 = Z[np.argmin(np.linalg.norm(f.lift(Z), axis=1))]

    def h(v):
        w = v[:3] + 1j * v[3:]
        return np.linalg.norm(f.lift(w / np.linalg.norm(w))) ** 2

    res = optimize.minimize(h, np.r_[z0.real, z0.imag], method="Nelder-Mead",
                            options={"xatol": 1e-12, "fatol": 1e-16, "maxiter": 20000})
    assert val <= res.fun ** 0.25 + 1e-6


def resultant_by_roots(p, q):
    """Res = a0^d b0^d prod (alpha_i - beta_j) for forms with nonzero leading
    coefficients (coefficients listed Z^d first)."""
    a, b = np.roots(p), np.roots(q)
    d = len(p) - 1
    return p[0] ** d * q[0] ** d * np.prod(a[:, None] - b[None, :])


@given(seeds, st.integers(1, 4))
def test_sylvester_matches_root_product(seed, d):
    rng = np.random.default_rng(seed)
    p = rng.standard_normal(d + 1) + 1j * rng.standard_normal(d + 1)
    q = rng.standard_normal(d + 1) + 1j * rng.standard_normal(d + 1)
    assert sylvester_matrix(p, q).shape == (2 * d, 2 * d)
    assert abs(resultant_binary(p, q)) == pytest.approx(abs(resultant_by_roots(p, q)),
                                                        rel=1e-8)


@given(seeds, st.integers(2, 4))
def test_distance_zero_exactly_with_shared_root(seed, d):
    rng = np.random.default_rng(seed)
    r = complex(*rng.integers(-3, 4, size=2))  # shared root, small integers
    a = rng.integers(-3, 4, size=d - 1) + 1j * rng.integers(-3, 4, size=d - 1)
    b = rng.integers(-3, 4, size=d - 1) + 1j * rng.integers(-3, 4, size=d - 1)
    p = np.polymul([1, -r], np.r_[1, a])
    q = np.polymul([1, -r], np.r_[2, b])
    shared = np.min(np.abs(np.roots(p)[:, None] - np.roots(q)[None, :]))
    assert shared < 1e-6
    E = exponents(2, d)
    f = RationalMap(1, d, np.stack([p, q]))
    assert np.all(E[:, 0] == np.arange(d, -1, -1))
    # the distance is |Res|^(1/2d); the resultant itself vanishes to roundoff
    assert distance_to_degenerate(f) ** (2 * d) < 1e-12


@given(seeds)
def test_distance_positive_without_shared_root(seed):
    rng = np.random.default_rng(seed)
    f = random_map(rng, 1, 3)
    p, q = f.coeffs
    gap = np.min(np.abs(np.roots(p)[:, None] - np.roots(q)[None, :]))
    assert (distance_to_degenerate(f) > 0) == (gap > 0)
