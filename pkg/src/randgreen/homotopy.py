"""Total-degree homotopy continuation for fibers of maps of P^k, k >= 2.

For a target y with largest coordinate y_j the fiber is cut out by the k
equations ``y_j f_i(Z) - y_i f_j(Z) = 0`` (i != j), which have exactly d^k
projective solutions when f is nondegenerate.  They are solved in a random
unitary affine chart ``Z = Q (1, z)`` by tracking the d^k solutions of
``z_i^d = c_i`` along ``(1 - t) gamma S(z) + t G(z)``.
"""

from __future__ import annotations

import itertools

import numpy as np

from .errors import TrackingFailure
from .projective import (ProjPoint, RationalMap, fs_distance_rows, lift_jacobian_rows,
                         lift_rows, sin_distance_rows)

NEWTON_TOL = 1e-12
DIVERGENCE = 1e8
MERGE_TOL = 1e-6
RESIDUAL_TOL = 1e-8
MAX_CHARTS = 6
INITIAL_STEP = 0.01
CORRECTOR_TOL = 1e-6
MAX_STEP = 0.2


def _solve(A, b):
    """Batched ``A^{-1} b``; singular or non-finite systems give NaN rows."""
    out = np.full(b.shape, np.nan, dtype=complex)
    fin = np.all(np.isfinite(A), axis=(1, 2)) & np.all(np.isfinite(b), axis=1)
    if np.any(fin):
        with np.errstate(all="ignore"):
            try:
                out[fin] = np.linalg.solve(A[fin], b[fin][:, :, None])[:, :, 0]
            except np.linalg.LinAlgError:
                for i in np.flatnonzero(fin):
                    try:
                        out[i] = np.linalg.solve(A[i], b[i])
                    except np.linalg.LinAlgError:
                        pass
    return out


def _random_unitary(rng, n):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    Q, R = np.linalg.qr(A)
    return Q * (np.diag(R) / np.abs(np.diag(R)))[None, :]


class _Target:
    """Fiber equations for a batch of paths (each path knows its y)."""

    def __init__(self, coeffs, d, Y, Q):
        self.coeffs = coeffs
        self.d = d
        self.Y = Y
        self.Q = Q
        n = Y.shape[1]
        self.j = np.argmax(np.abs(Y), axis=1)
        table = np.array([[i for i in range(n) if i != j] for j in range(n)])
        self.others = table[self.j]
        self.yj = Y[np.arange(len(Y)), self.j]
        self.yo = np.take_along_axis(Y, self.others, axis=1)

    def homogeneous(self, z):
        ones = np.ones((len(z), 1), dtype=complex)
        return np.concatenate([ones, z], axis=1) @ self.Q.T

    def value_jac(self, z, rows=None):
        sel = slice(None) if rows is None else rows
        Z = self.homogeneous(z)
        C = self.coeffs if self.coeffs.ndim == 2 else self.coeffs[sel]
        F = lift_rows(C, self.d, Z)
        DF = lift_jacobian_rows(C, self.d, Z)
        P = np.arange(len(z))
        j, oth, yj, yo = self.j[sel], self.others[sel], self.yj[sel], self.yo[sel]
        Fj = F[P, j]
        Fo = np.take_along_axis(F, oth, axis=1)
        G = yj[:, None] * Fo - yo * Fj[:, None]
        DFo = np.take_along_axis(DF, oth[:, :, None], axis=1)
        DFj = DF[P, j]
        DG = yj[:, None, None] * DFo - yo[:, :, None] * DFj[:, None, :]
        return G, DG @ self.Q[:, 1:]


def _start_solutions(c, d):
    """All d^k solutions of z_i^d = c_i, in a fixed order."""
    k = len(c)
    roots = [c[i] ** (1.0 / d) * np.exp(2j * np.pi * np.arange(d) / d) for i in range(k)]
    return np.array(list(itertools.product(*roots)), dtype=complex)


def _track(target: _Target, z0, c, gamma, d, max_iter=5000):
    """Track all paths from t = 0 to 1.  Returns endpoints and ok-mask."""
    P, k = z0.shape
    z = z0.copy()
    t = np.zeros(P)
    h = np.full(P, INITIAL_STEP)
    active = np.ones(P, dtype=bool)
    failed = np.zeros(P, dtype=bool)

    def H(zz, tt, rows):
        G, DG = target.value_jac(zz, rows)
        S = zz ** d - c[None, :]
        DS = np.zeros((len(zz), k, k), dtype=complex)
        DS[:, np.arange(k), np.arange(k)] = d * zz ** (d - 1)
        a = (1 - tt)[:, None]
        Hv = a * gamma * S + tt[:, None] * G
        Hz = a[:, :, None] * gamma * DS + tt[:, None, None] * DG
        Ht = G - gamma * S
        return Hv, Hz, Ht

    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        zi, ti, hi = z[idx], t[idx], np.minimum(h[idx], 1.0 - t[idx])
        _, Hz, Ht = H(zi, ti, idx)
        dz = -_solve(Hz, Ht)
        tn = ti + hi
        zn = zi + hi[:, None] * dz
        conv = np.zeros(len(idx), dtype=bool)
        for _ in range(3):
            Hv, Hz, _ = H(zn, tn, idx)
            step = _solve(Hz, Hv)
            zn = zn - step
            with np.errstate(invalid="ignore"):
                conv = np.linalg.norm(step, axis=1) <= CORRECTOR_TOL * (1 + np.linalg.norm(zn, axis=1))
        good = conv & np.all(np.isfinite(zn), axis=1)
        # accept
        acc = idx[good]
        z[acc] = zn[good]
        t[acc] = tn[good]
        h[acc] = np.minimum(h[acc] * 2.0, MAX_STEP)
        rej = idx[~good]
        h[rej] *= 0.5
        blown = np.linalg.norm(z, axis=1) > DIVERGENCE
        failed |= (h < 1e-12) | blown
        active = ~failed & (t < 1.0)
    failed |= active
    return z, ~failed


def _polish(target: _Target, z, ok):
    idx = np.flatnonzero(ok)
    for _ in range(20):
        if idx.size == 0:
            break
        G, DG = target.value_jac(z[idx], idx)
        step = _solve(DG, G)
        fin = np.all(np.isfinite(step), axis=1)
        z[idx[fin]] -= step[fin]
        with np.errstate(invalid="ignore"):
            small = np.linalg.norm(step, axis=1) <= NEWTON_TOL * (1 + np.linalg.norm(z[idx], axis=1))
        if np.all(small | ~fin):
            break
    return z


def _wedge_residual(coeffs, d, Z, Y):
    W = lift_rows(coeffs, d, Z)
    W = W / np.linalg.norm(W, axis=1, keepdims=True)
    return sin_distance_rows(Y, W)


def _jump_check(pts, cond, nb):
    """True when the endpoint set of one fiber is a valid multiset: every
    coincident cluster must be singular (true multiplicity)."""
    for a in range(nb):
        for b in range(a + 1, nb):
            if fs_distance_rows(pts[a], pts[b]) < MERGE_TOL and cond[a] < 1e8:
                return False
    return True


def multivariate_preimages_rows(coeffs, k, d, Y, rng=None, start_constants=None,
                                max_charts=MAX_CHARTS):
    """Preimages ``(B, d^k, k+1)`` of rows Y and a mask of fully solved rows.

    Rows that lose paths are retried in a fresh random chart (and gamma)
    up to ``max_charts`` times.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    Y = np.asarray(Y, dtype=complex)
    B = len(Y)
    nb = d ** k
    out = np.zeros((B, nb, k + 1), dtype=complex)
    solved = np.zeros(B, dtype=bool)
    todo = np.arange(B)
    for _attempt in range(max_charts):
        if todo.size == 0:
            break
        Q = _random_unitary(rng, k + 1)
        gamma = np.exp(2j * np.pi * rng.random())
        if start_constants is None:
            c = np.exp(2j * np.pi * rng.random(k))
        else:
            c = np.asarray(start_constants, dtype=complex)
        starts = _start_solutions(c, d)  # (nb, k)
        Yp = np.repeat(Y[todo], nb, axis=0)
        Cp = coeffs if coeffs.ndim == 2 else np.repeat(coeffs[todo], nb, axis=0)
        target = _Target(Cp, d, Yp, Q)
        z0 = np.tile(starts, (len(todo), 1))
        z, ok = _track(target, z0, c, gamma, d)
        z = _polish(target, z, ok)
        Z = target.homogeneous(z)
        with np.errstate(all="ignore"):
            Z = Z / np.linalg.norm(Z, axis=1, keepdims=True)
            res = _wedge_residual(Cp, d, Z, Yp)
            _, DG = target.value_jac(z)
            cond = np.linalg.cond(DG)
        ok &= np.isfinite(res) & (res <= RESIDUAL_TOL)
        ok2 = ok.reshape(len(todo), nb).all(axis=1)
        Zr = Z.reshape(len(todo), nb, k + 1)
        condr = cond.reshape(len(todo), nb)
        for r in np.flatnonzero(ok2):
            if not _jump_check(Zr[r], condr[r], nb):
                ok2[r] = False
        out[todo[ok2]] = Zr[ok2]
        solved[todo[ok2]] = True
        todo = todo[~ok2]
    return out, solved


def multivariate_preimages(f: RationalMap, y: ProjPoint, *, seed: int = 0,
                           start_constants=None) -> list:
    """The d^k preimages of y under a map of P^k (k >= 2), with multiplicity."""
    if f.k < 2:
        raise ValueError("multivariate_preimages needs k >= 2")
    rng = np.random.default_rng(seed)
    pts, ok = multivariate_preimages_rows(f.coeffs, f.k, f.d, y.coords[None, :], rng=rng,
                                          start_constants=start_constants)
    if not ok[0]:
        raise TrackingFailure(f.d ** f.k, f.d ** f.k)
    return [ProjPoint(p) for p in pts[0]]
