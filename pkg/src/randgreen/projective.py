"""Projective-geometry core: points of P^k, homogeneous maps, Fubini-Study
metric and derivative, distance to the degenerate locus.

Points are stored as unit-norm lifts in C^{k+1}.  Every scalar operation has a
row-batched twin (suffix ``_rows``) working on arrays of shape ``(B, k+1)``;
the estimators only use the batched forms.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import IndeterminacyHit, ZeroVector

ZERO_TOL = 1e-300


# ---------------------------------------------------------------------------
# monomial bookkeeping


@functools.lru_cache(maxsize=None)
def exponents(n_vars: int, degree: int) -> np.ndarray:
    """All exponent multi-indices of ``n_vars`` variables summing to ``degree``.

    Ordered lexicographically descending, so for two variables the rows are
    ``(d, 0), (d-1, 1), ..., (0, d)``.
    """
    rows = []
    for combo in itertools.combinations_with_replacement(range(n_vars), degree):
        e = [0] * n_vars
        for v in combo:
            e[v] += 1
        rows.append(tuple(e))
    rows = sorted(set(rows), reverse=True)
    out = np.array(rows, dtype=np.int64).reshape(len(rows), n_vars)
    out.setflags(write=False)
    return out


@functools.lru_cache(maxsize=None)
def _index_map(n_vars: int, degree: int) -> dict:
    return {tuple(int(x) for x in e): i for i, e in enumerate(exponents(n_vars, degree))}


@functools.lru_cache(maxsize=None)
def _derivative_tensor(n_vars: int, degree: int) -> np.ndarray:
    """``T[j, m, m']`` = exponent of variable j in monomial m, placed at the
    index m' of the monomial obtained by differentiating in variable j."""
    E = exponents(n_vars, degree)
    lower = _index_map(n_vars, degree - 1)
    T = np.zeros((n_vars, len(E), len(lower)))
    for m, e in enumerate(E):
        for j in range(n_vars):
            if e[j] > 0:
                e2 = list(int(x) for x in e)
                e2[j] -= 1
                T[j, m, lower[tuple(e2)]] = e[j]
    T.setflags(write=False)
    return T


def monomials_rows(Z: np.ndarray, degree: int) -> np.ndarray:
    """Evaluate every degree-``degree`` monomial at each row of ``Z``."""
    E = exponents(Z.shape[-1], degree)
    if degree == 0:
        return np.ones(Z.shape[:-1] + (1,), dtype=complex)
    # repeated products are cheaper and more accurate than complex powers
    out = np.ones(Z.shape[:-1] + (len(E),), dtype=complex)
    for j in range(Z.shape[-1]):
        col = E[:, j]
        top = int(col.max())
        if top == 0:
            continue
        powers = [np.ones(Z.shape[:-1], dtype=complex), Z[..., j]]
        for _ in range(2, top + 1):
            powers.append(powers[-1] * Z[..., j])
        P = np.stack(powers, axis=-1)
        out *= P[..., col]
    return out


def parameter_dimension(k: int, d: int) -> int:
    """N with P^N the space of degree-d rational self-maps of P^k."""
    return (k + 1) * math.factorial(d + k) // (math.factorial(d) * math.factorial(k)) - 1


# ---------------------------------------------------------------------------
# points


@dataclass(frozen=True, eq=False)
class ProjPoint:
    """A point of P^k as a unit-norm homogeneous coordinate vector."""

    coords: np.ndarray

    @property
    def k(self) -> int:
        return len(self.coords) - 1

    def __iter__(self):
        return iter(self.coords)

    def __repr__(self):
        inner = ", ".join(f"{c:.6g}" for c in self.coords)
        return f"ProjPoint([{inner}])"


def normalize(raw) -> ProjPoint:
    """Return ``raw / |raw|`` as a ProjPoint; raises ZeroVector on zero input."""
    v = np.asarray(raw, dtype=complex).ravel()
    nrm = np.linalg.norm(v)
    if not nrm >= ZERO_TOL:
        raise ZeroVector(f"cannot normalize vector of norm {nrm}")
    v = v / nrm
    v.setflags(write=False)
    return ProjPoint(v)


def normalize_rows(Z: np.ndarray) -> np.ndarray:
    Z = np.asarray(Z, dtype=complex)
    nrm = np.linalg.norm(Z, axis=-1, keepdims=True)
    if np.any(nrm < ZERO_TOL):
        raise ZeroVector("zero row in batch")
    return Z / nrm


def as_rows(x) -> np.ndarray:
    """Coerce a ProjPoint, a sequence of ProjPoints or an array to ``(B, k+1)``."""
    if isinstance(x, ProjPoint):
        return x.coords[None, :]
    if isinstance(x, (list, tuple)) and x and isinstance(x[0], ProjPoint):
        return np.stack([p.coords for p in x])
    arr = np.asarray(x, dtype=complex)
    return arr[None, :] if arr.ndim == 1 else arr


def fs_distance(a: ProjPoint, b: ProjPoint) -> float:
    """Fubini-Study distance ``arccos |<a, b>|``, in [0, pi/2]."""
    return float(fs_distance_rows(a.coords, b.coords))


def sin_distance_rows(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """``sin`` of the FS distance, as the norm of the part of B orthogonal
    to A; accurate down to ~1e-16 (unlike ``sqrt(1 - |<A, B>|^2)``)."""
    A, B = np.broadcast_arrays(A, B)
    ip = np.sum(np.conj(A) * B, axis=-1)
    R = B - ip[..., None] * A
    out = np.minimum(np.linalg.norm(R, axis=-1), 1.0)
    # identical lifts are the same point exactly, not up to roundoff
    return np.where(np.all(A == B, axis=-1), 0.0, out)


def fs_distance_rows(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    A, B = np.broadcast_arrays(A, B)
    ip = np.abs(np.sum(np.conj(A) * B, axis=-1))
    # arccos is ill-conditioned near 1; use the sine form there
    near = ip > 0.5
    out = np.arccos(np.minimum(ip, 1.0))
    if np.any(near):
        out = np.where(near, np.arcsin(sin_distance_rows(A, B)), out)
    return out


def random_points(rng: np.random.Generator, count: int, k: int) -> np.ndarray:
    """FS-uniform points of P^k (projectivized Gaussian vectors)."""
    Z = rng.standard_normal((count, k + 1)) + 1j * rng.standard_normal((count, k + 1))
    return Z / np.linalg.norm(Z, axis=1, keepdims=True)


def hermitian_embedding(Z: np.ndarray) -> np.ndarray:
    """Real embedding ``Z Z^H`` flattened; Euclidean distance is
    ``sqrt(2) * sin(fs_distance)``.  For k=1 a 3-dim Hopf map is used
    instead, with chord ``2 sin(fs_distance)`` on the unit sphere."""
    if Z.shape[-1] == 2:
        p = Z[..., 0] * np.conj(Z[..., 1])
        return np.stack([2 * p.real, 2 * p.imag,
                         np.abs(Z[..., 0]) ** 2 - np.abs(Z[..., 1]) ** 2], axis=-1)
    H = Z[..., :, None] * np.conj(Z[..., None, :])
    n = Z.shape[-1]
    iu = np.triu_indices(n, 1)
    diag = np.real(H[..., np.arange(n), np.arange(n)])
    off = H[..., iu[0], iu[1]] * np.sqrt(2.0)
    return np.concatenate([diag, off.real, off.imag], axis=-1)


def embedding_chord(Z_k: int, fs: float) -> float:
    """Embedding-space chord length that corresponds to FS distance ``fs``."""
    return 2.0 * math.sin(fs) if Z_k == 1 else math.sqrt(2.0) * math.sin(fs)


# ---------------------------------------------------------------------------
# polynomials and maps


@dataclass(frozen=True)
class HomPolynomial:
    """A homogeneous polynomial given by a map multi-index -> coefficient."""

    k_plus_1: int
    degree: int
    coeffs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        for e in self.coeffs:
            if len(e) != self.k_plus_1 or sum(e) != self.degree or min(e) < 0:
                raise ValueError(f"multi-index {e} is not a degree-{self.degree} "
                                 f"monomial in {self.k_plus_1} variables")

    def __call__(self, Z) -> complex:
        Z = np.asarray(Z, dtype=complex)
        total = 0j
        for e, c in self.coeffs.items():
            total += c * np.prod(Z ** np.array(e))
        return total

    def vector(self) -> np.ndarray:
        idx = _index_map(self.k_plus_1, self.degree)
        v = np.zeros(len(idx), dtype=complex)
        for e, c in self.coeffs.items():
            v[idx[tuple(e)]] += c
        return v


class RationalMap:
    """Degree-d self-map of P^k, coefficient vector normalized to unit norm.

    ``coeffs`` has shape ``(k+1, m)`` with columns indexed by
    :func:`exponents`; ``coeff_norm`` keeps the norm before normalization.
    """

    __slots__ = ("k", "d", "coeffs", "coeff_norm", "_cache")

    def __init__(self, k: int, d: int, coeffs, *, normalized: bool = False,
                 coeff_norm: float | None = None):
        coeffs = np.array(coeffs, dtype=complex)
        m = len(exponents(k + 1, d))
        if coeffs.shape != (k + 1, m):
            raise ValueError(f"expected coefficient array of shape {(k + 1, m)}, "
                             f"got {coeffs.shape}")
        if normalized:
            nrm = 1.0 if coeff_norm is None else coeff_norm
        else:
            nrm = float(np.linalg.norm(coeffs))
            if nrm < ZERO_TOL:
                raise ZeroVector("all coefficients are zero")
            coeffs = coeffs / nrm
        coeffs.setflags(write=False)
        self.k = k
        self.d = d
        self.coeffs = coeffs
        self.coeff_norm = nrm
        self._cache = {}

    @classmethod
    def from_components(cls, components, k: int | None = None, d: int | None = None):
        """Build from k+1 HomPolynomials or dicts ``{multi-index: coeff}``."""
        polys = []
        for c in components:
            if isinstance(c, HomPolynomial):
                polys.append(c)
            else:
                e0 = next(iter(c))
                polys.append(HomPolynomial(len(e0), sum(e0), dict(c)))
        k = len(polys) - 1 if k is None else k
        d = polys[0].degree if d is None else d
        if any(p.degree != d or p.k_plus_1 != k + 1 for p in polys):
            raise ValueError("components must share degree and variable count")
        return cls(k, d, np.stack([p.vector() for p in polys]))

    @property
    def components(self) -> list:
        E = exponents(self.k + 1, self.d)
        return [HomPolynomial(self.k + 1, self.d,
                              {tuple(int(x) for x in e): c for e, c in zip(E, row) if c != 0})
                for row in self.coeffs]

    @property
    def parameter_dimension(self) -> int:
        return parameter_dimension(self.k, self.d)

    def lift(self, Z) -> np.ndarray:
        """Evaluate the homogeneous lift at rows of ``Z`` (no normalization)."""
        return lift_rows(self.coeffs, self.d, as_rows(Z))

    def __repr__(self):
        return f"RationalMap(k={self.k}, d={self.d}, coeffs={np.round(self.coeffs, 6).tolist()})"


def lift_rows(coeffs: np.ndarray, d: int, Z: np.ndarray) -> np.ndarray:
    """f~(Z) for rows Z; ``coeffs`` is ``(k+1, m)`` or per-row ``(B, k+1, m)``."""
    M = monomials_rows(Z, d)
    if coeffs.ndim == 2:
        return M @ coeffs.T
    return np.einsum("bm,bim->bi", M, coeffs)


def lift_jacobian_rows(coeffs: np.ndarray, d: int, Z: np.ndarray) -> np.ndarray:
    """Complex Jacobian ``Df~(Z)`` of shape ``(B, k+1, k+1)``."""
    n = Z.shape[-1]
    T = _derivative_tensor(n, d)
    M = monomials_rows(Z, d - 1)
    if coeffs.ndim == 2:
        CT = np.einsum("im,jmn->ijn", coeffs, T)
        return np.einsum("ijn,bn->bij", CT, M)
    return np.einsum("bim,jmn,bn->bij", coeffs, T, M)


def evaluate_rows(coeffs: np.ndarray, d: int, Z: np.ndarray, *, strict: bool = True):
    """Normalized images and log-norms ``log |f~(Z)|`` for unit rows Z."""
    W = lift_rows(coeffs, d, Z)
    nrm = np.linalg.norm(W, axis=-1)
    bad = nrm < ZERO_TOL
    if strict and np.any(bad):
        raise IndeterminacyHit(f"{int(bad.sum())} point(s) hit the indeterminacy set")
    with np.errstate(divide="ignore", invalid="ignore"):
        return W / nrm[:, None], np.log(nrm)


def evaluate(f: RationalMap, x: ProjPoint):
    """Return ``(f(x), log |f~(x)|)`` for the unit lift of x."""
    W, lognorm = evaluate_rows(f.coeffs, f.d, x.coords[None, :])
    out = W[0]
    out.setflags(write=False)
    return ProjPoint(out), float(lognorm[0])


# ---------------------------------------------------------------------------
# tangent frames and the FS derivative


@dataclass(frozen=True, eq=False)
class TangentFrame:
    """Orthonormal basis (columns of ``vectors``) of the complement of base."""

    base: ProjPoint
    vectors: np.ndarray  # (k+1, k)


def frame_rows(Z: np.ndarray) -> np.ndarray:
    """Deterministic frames ``(B, k+1, k)``: Gram-Schmidt on the standard
    basis with the axis of the largest |coordinate| dropped."""
    B, n = Z.shape
    drop = np.argmax(np.abs(Z), axis=1)
    keep = np.array([[j for j in range(n) if j != dr] for dr in range(n)], dtype=int)
    if n == 1:
        return np.zeros((B, 1, 0), dtype=complex)
    cols = keep[drop]  # (B, k)
    V = np.zeros((B, n, n - 1), dtype=complex)
    rows = np.arange(B)
    for a in range(n - 1):
        v = np.zeros((B, n), dtype=complex)
        v[rows, cols[:, a]] = 1.0
        v = v - Z * np.sum(np.conj(Z) * v, axis=1, keepdims=True)
        for b in range(a):
            u = V[:, :, b]
            v = v - u * np.sum(np.conj(u) * v, axis=1, keepdims=True)
        # second pass for orthogonality to 1e-15
        v = v - Z * np.sum(np.conj(Z) * v, axis=1, keepdims=True)
        for b in range(a):
            u = V[:, :, b]
            v = v - u * np.sum(np.conj(u) * v, axis=1, keepdims=True)
        V[:, :, a] = v / np.linalg.norm(v, axis=1, keepdims=True)
    return V


def tangent_frame(x: ProjPoint) -> TangentFrame:
    V = frame_rows(x.coords[None, :])[0]
    V.setflags(write=False)
    return TangentFrame(x, V)


def fs_jacobian_rows(coeffs: np.ndarray, d: int, Z: np.ndarray,
                     frames_in: np.ndarray | None = None,
                     *, strict: bool = True):
    """FS differential in frames.

    Returns ``(J, W, lognorm, frames_out)`` where ``J`` is ``(B, k, k)``,
    ``W`` the normalized images, and ``frames_out`` the deterministic frames
    at ``W`` in which ``J`` is expressed.
    """
    Wraw = lift_rows(coeffs, d, Z)
    nrm = np.linalg.norm(Wraw, axis=-1)
    if strict and np.any(nrm < ZERO_TOL):
        raise IndeterminacyHit(f"{int((nrm < ZERO_TOL).sum())} point(s) hit the indeterminacy set")
    W = Wraw / nrm[:, None]
    if frames_in is None:
        frames_in = frame_rows(Z)
    frames_out = frame_rows(W)
    D = lift_jacobian_rows(coeffs, d, Z)
    J = np.einsum("bia,bij,bjc->bac", np.conj(frames_out), D, frames_in) / nrm[:, None, None]
    return J, W, np.log(nrm), frames_out


def fs_jacobian(f: RationalMap, x: ProjPoint, frame: TangentFrame | None = None) -> np.ndarray:
    """k x k matrix of the FS differential of f at x, from ``frame`` to the
    deterministic frame at f(x)."""
    if frame is None:
        frame = tangent_frame(x)
    J, *_ = fs_jacobian_rows(f.coeffs, f.d, x.coords[None, :], frame.vectors[None])
    return J[0]


def fs_derivative_norm_rows(coeffs: np.ndarray, d: int, Z: np.ndarray) -> np.ndarray:
    """Operator norm of the FS differential at each row."""
    J, *_ = fs_jacobian_rows(coeffs, d, Z)
    if J.shape[-1] == 1:
        return np.abs(J[:, 0, 0])
    return np.linalg.norm(J, ord=2, axis=(1, 2))


# ---------------------------------------------------------------------------
# composition


def _poly_mul(p: dict, q: dict) -> dict:
    out: dict = {}
    for ea, ca in p.items():
        for eb, cb in q.items():
            e = tuple(a + b for a, b in zip(ea, eb))
            out[e] = out.get(e, 0) + ca * cb
    return out


def compose(f: RationalMap, g: RationalMap) -> RationalMap:
    """The map f o g of degree ``f.d * g.d`` (then coefficient-normalized)."""
    if f.k != g.k:
        raise ValueError("dimension mismatch")
    n = f.k + 1
    gpolys = [p.coeffs for p in g.components]
    # powers of each component of g
    one = {tuple([0] * n): 1.0 + 0j}
    pw = [[one] for _ in range(n)]
    for j in range(n):
        for _ in range(f.d):
            pw[j].append(_poly_mul(pw[j][-1], gpolys[j]))
    comps = []
    for p in f.components:
        acc: dict = {}
        for e, c in p.coeffs.items():
            term = {tuple([0] * n): c}
            for j, ej in enumerate(e):
                term = _poly_mul(term, pw[j][ej])
            for ee, cc in term.items():
                acc[ee] = acc.get(ee, 0) + cc
        comps.append(HomPolynomial(n, f.d * g.d, acc))
    return RationalMap.from_components(comps, k=f.k, d=f.d * g.d)


# ---------------------------------------------------------------------------
# degeneracy


def sylvester_matrix(p, q) -> np.ndarray:
    """Sylvester matrix of two binary forms of equal formal degree d, each
    given as coefficients of ``Z^{d-j} W^j`` for j = 0..d."""
    p = np.asarray(p, dtype=complex)
    q = np.asarray(q, dtype=complex)
    batch = p.shape[:-1]
    d = p.shape[-1] - 1
    S = np.zeros(batch + (2 * d, 2 * d), dtype=complex)
    for r in range(d):
        S[..., r, r:r + d + 1] = p
        S[..., d + r, r:r + d + 1] = q
    return S


def resultant_binary(p, q):
    """Homogeneous resultant of two binary forms (batched over leading axes)."""
    return np.linalg.det(sylvester_matrix(p, q))


def _resultant_distance(coeffs: np.ndarray, d: int):
    res = resultant_binary(coeffs[..., 0, :], coeffs[..., 1, :])
    return np.abs(res) ** (1.0 / (2 * d))


_SPHERE_STARTS = 64


def _sphere_min_norm(coeffs: np.ndarray, d: int, k: int, *, starts: int = _SPHERE_STARTS,
                     tol: float = 1e-10, max_iter: int = 4000) -> float:
    """min over the unit sphere of |f~(Z)|, multistart projected gradient."""
    rng = np.random.default_rng(0x5EED)
    Z = random_points(rng, starts, k)
    # coordinate points and the balanced torus points are natural critical points
    Z = np.vstack([Z, np.eye(k + 1, dtype=complex),
                   np.ones((1, k + 1), dtype=complex) / math.sqrt(k + 1)])

    def value(Z):
        W = lift_rows(coeffs, d, Z)
        return np.sum(np.abs(W) ** 2, axis=1), W

    h, W = value(Z)
    eta = np.full(len(Z), 0.5)
    # a row retires once its gradient is tiny or the line search stalls
    # (the attainable gradient floor is ~sqrt(eps) * |f~|, not zero)
    active = np.ones(len(Z), dtype=bool)
    for it in range(max_iter):
        if it == 50:
            # starts still well above the best are in worse basins
            active &= h <= 1.5 * h.min() + 1e-300
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        Za, Wa, ha, ea = Z[idx], W[idx], h[idx], eta[idx]
        D = lift_jacobian_rows(coeffs, d, Za)
        g = np.einsum("bji,bj->bi", np.conj(D), Wa)  # gradient wrt conj(Z)
        g = g - Za * np.sum(np.conj(Za) * g, axis=1, keepdims=True)
        gn2 = np.sum(np.abs(g) ** 2, axis=1)
        live = np.sqrt(gn2) >= tol
        ok = ~live
        for _ in range(50):
            Zt = Za - ea[:, None] * g
            Zt /= np.linalg.norm(Zt, axis=1, keepdims=True)
            ht, Wt = value(Zt)
            ok = (ht <= ha - 1e-4 * ea * gn2) | ~live
            if np.all(ok):
                break
            ea = np.where(ok, ea, ea * 0.5)
        move = live & ok
        Z[idx[move]] = Zt[move]
        W[idx[move]] = Wt[move]
        h[idx[move]] = ht[move]
        eta[idx] = np.where(move, np.minimum(ea * 1.5, 4.0), ea)
        active[idx[~move]] = False
        stalled = move & (ha - ht <= tol * ha)
        active[idx[stalled]] = False
    return float(np.sqrt(np.min(h)))


def distance_to_degenerate(f: RationalMap) -> float:
    """Scale-free distance of f to the degenerate locus M.

    k = 1: ``|Res(P, Q)|^(1/(2d))``, exact zero on M.  k >= 2: the proxy
    ``min_{|Z|=1} |f~(Z)|^(1/d)`` from a deterministic multistart descent.
    """
    cached = f._cache.get("dist")
    if cached is not None:
        return cached
    if f.k == 1:
        val = float(_resultant_distance(f.coeffs, f.d))
    else:
        val = _sphere_min_norm(f.coeffs, f.d, f.k) ** (1.0 / f.d)
    f._cache["dist"] = val
    return val


def distance_to_degenerate_batch(coeffs: np.ndarray, k: int, d: int) -> np.ndarray:
    """Batched version over ``(B, k+1, m)`` coefficient stacks."""
    if k == 1:
        return _resultant_distance(coeffs, d)
    return np.array([_sphere_min_norm(c, d, k) ** (1.0 / d) for c in coeffs])
