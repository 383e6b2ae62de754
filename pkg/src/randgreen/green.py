"""Random Green potentials and sampling of the random Green measure.

The measure mu(f_0) is sampled by inverse iteration: a FS-uniform point is
pulled back through f_n, ..., f_0 choosing one preimage uniformly at random
(with multiplicity) at each step.  The intermediate points of that backward
walk are kept on request as the *chain*: ``chain[j]`` is the image of the
terminal sample under ``f_{j-1} o ... o f_0``.  Estimators that need forward
orbits read them from the chain, which is numerically stable, instead of
iterating forward on the repelling Julia set.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .drivers import DriverSpec, SequenceBatch, lambda_params, sequence_batch
from .errors import DegenerateFiber, TrackingFailure
from .projective import (ProjPoint, RationalMap, ZERO_TOL, as_rows, evaluate_rows,
                         normalize_rows, random_points, sin_distance_rows)
from .streams import chunk_bounds, map_ordered, stream

MAX_RETRIES = 10


# ---------------------------------------------------------------------------
# sequences: a shared list of maps or per-row sequences


class MapSequence:
    """Uniform view of ``[f_0, f_1, ...]``: shared RationalMaps or a
    :class:`SequenceBatch` with one sequence per sample row."""

    def __init__(self, maps, offset: int = 0):
        if isinstance(maps, MapSequence):
            offset += maps.offset
            maps = maps.source
        self.source = maps
        self.offset = offset
        if isinstance(maps, SequenceBatch):
            self.k, self.d = maps.k, maps.d
            self.batched = True
        else:
            maps = list(maps)
            self.source = maps
            if not maps:
                raise ValueError("empty map sequence")
            self.k, self.d = maps[0].k, maps[0].d
            if any(f.k != self.k or f.d != self.d for f in maps):
                raise ValueError("all maps must share k and d")
            self.batched = False

    def __len__(self):
        n = len(self.source.coeffs) if self.batched else len(self.source)
        return n - self.offset

    def coeffs(self, j: int, rows=None) -> np.ndarray:
        if j < 0 or j >= len(self):
            raise IndexError(f"map index {j} out of range for sequence of length {len(self)}")
        if self.batched:
            C = self.source.coeffs[self.offset + j]
            return C if rows is None else C[rows]
        return self.source[self.offset + j].coeffs

    def shift(self, n: int) -> "MapSequence":
        return MapSequence(self.source, self.offset + n)

    def __getitem__(self, j):
        if self.batched:
            raise TypeError("per-row sequences have no single map at a level")
        return self.source[self.offset + j]


def as_sequence(maps) -> MapSequence:
    return maps if isinstance(maps, MapSequence) else MapSequence(maps)


# ---------------------------------------------------------------------------
# Green potential


@dataclass(frozen=True)
class GreenAccumulator:
    """Running state of the normalized forward recursion.

    ``partial_sum`` is ``sum_{i<n} d^{-(i+1)} a_i`` with
    ``a_i = log |f~_i(Z_i)|`` over unit lifts ``Z_i``.
    """

    point: np.ndarray  # (B, k+1) current unit images
    partial_sum: np.ndarray  # (B,)
    n: int
    d: int

    @classmethod
    def start(cls, x, d: int) -> "GreenAccumulator":
        Z = normalize_rows(as_rows(x))
        return cls(Z, np.zeros(len(Z)), 0, d)

    def advance(self, coeffs: np.ndarray) -> "GreenAccumulator":
        W, a = evaluate_rows(coeffs, self.d, self.point)
        # exact power of two/three: no accumulated rounding in the weight
        weight = float(self.d) ** (-(self.n + 1))
        return GreenAccumulator(W, self.partial_sum + weight * a, self.n + 1, self.d)


def green_potential_rows(maps, Z, n: int):
    """Batched g_n.  Returns ``(g_n, profile)`` where ``profile[i]`` is the
    partial sum after consuming f_0..f_i (so ``profile[-1] == g_n``)."""
    seq = as_sequence(maps)
    if len(seq) < n + 1:
        raise ValueError(f"need at least {n + 1} maps, got {len(seq)}")
    acc = GreenAccumulator.start(Z, seq.d)
    profile = []
    for i in range(n + 1):
        acc = acc.advance(seq.coeffs(i))
        profile.append(acc.partial_sum)
    return acc.partial_sum, np.array(profile)


def green_potential(maps, x, n: int):
    """g_n(x) = sum_{i=0}^n d^{-(i+1)} log |f~_i(Z_i)| and its prefixes.

    ``x`` may be a ProjPoint (scalar result) or an array of points.
    """
    g, prof = green_potential_rows(maps, as_rows(x), n)
    if isinstance(x, ProjPoint):
        return float(g[0]), prof[:, 0].tolist()
    return g, prof


def green_sup_norm(maps, n: int, probes: int = 1000, seed: int = 0) -> float:
    """max |g_n| over a FS-uniform probe set (estimate of the sup norm)."""
    seq = as_sequence(maps)
    Z = random_points(stream(seed, "green-probe"), probes, seq.k)
    g, _ = green_potential_rows(seq, Z, n)
    return float(np.max(np.abs(g)))


# ---------------------------------------------------------------------------
# preimages, k = 1


def _roots_highest_first(P: np.ndarray) -> np.ndarray:
    """Roots of polynomials given highest-degree-first; leading coefficient
    assumed nonzero.  Shape ``(B, d+1) -> (B, d)``."""
    d = P.shape[1] - 1
    if d == 1:
        return (-P[:, 1] / P[:, 0])[:, None]
    if d == 2:
        a, b, c = P[:, 0], P[:, 1], P[:, 2]
        disc = np.sqrt(b * b - 4 * a * c)
        s = np.where((np.conj(b) * disc).real >= 0, 1.0, -1.0)
        q = -0.5 * (b + s * disc)
        z1 = q / a
        with np.errstate(divide="ignore", invalid="ignore"):
            z2 = np.where(q != 0, c / q, 0.0)
        return np.stack([z1, z2], axis=1)
    comp = np.zeros((len(P), d, d), dtype=complex)
    comp[:, 0, :] = -P[:, 1:] / P[:, :1]
    comp[:, np.arange(1, d), np.arange(d - 1)] = 1.0
    roots = np.linalg.eigvals(comp)
    # one Newton step against the original coefficients
    for _ in range(2):
        val = np.zeros_like(roots)
        der = np.zeros_like(roots)
        for j in range(d + 1):
            der = der * roots + val
            val = val * roots + P[:, j:j + 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(np.abs(der) > 0, val / der, 0.0)
        roots = roots - step
    return roots


def _binary_form_roots_slow(r: np.ndarray) -> np.ndarray:
    d = len(r) - 1
    scale = np.max(np.abs(r))
    if scale < ZERO_TOL:
        raise DegenerateFiber("binary form vanishes identically")
    tiny = np.abs(r) <= 1e-15 * scale
    lead = 0
    while lead <= d and tiny[lead]:
        lead += 1
    trail = 0
    while trail <= d and tiny[d - trail]:
        trail += 1
    pts = [np.array([1.0, 0.0], dtype=complex)] * lead  # W divides: root [1:0]
    pts += [np.array([0.0, 1.0], dtype=complex)] * trail  # Z divides: root [0:1]
    core = r[lead:d + 1 - trail]
    if len(core) > 1:
        for t in _roots_highest_first(core[None, :])[0]:
            pts.append(np.array([t, 1.0], dtype=complex))
    return normalize_rows(np.array(pts))


def binary_form_roots(r: np.ndarray) -> np.ndarray:
    """Projective roots of binary forms ``sum_j r_j Z^{d-j} W^j``.

    ``r`` is ``(B, d+1)``; returns ``(B, d, 2)`` unit points, with
    multiplicity.  Each form is solved in the affine chart of the larger end
    coefficient, so roots at infinity need no special casing.
    """
    r = np.atleast_2d(np.asarray(r, dtype=complex))
    B, n = r.shape
    d = n - 1
    zchart = np.abs(r[:, 0]) >= np.abs(r[:, d])
    P = np.where(zchart[:, None], r, r[:, ::-1])
    scale = np.max(np.abs(r), axis=1)
    ok = np.abs(P[:, 0]) > 1e-13 * scale
    out = np.empty((B, d, 2), dtype=complex)
    if np.any(ok):
        t = _roots_highest_first(P[ok])
        one = np.ones_like(t)
        zc = zchart[ok][:, None]
        pts = np.stack([np.where(zc, t, one), np.where(zc, one, t)], axis=-1)
        nrm = np.linalg.norm(pts, axis=-1, keepdims=True)
        # roots overflowing the chart are the point at the far end
        far = ~np.isfinite(nrm[..., 0])
        pts = pts / nrm
        if np.any(far):
            alt = np.where(zc, np.array([1.0, 0.0]), np.array([0.0, 1.0]))
            alt = np.broadcast_to(alt[:, None, :], pts.shape)
            pts[far] = alt[far]
        out[ok] = pts
    for b in np.flatnonzero(~ok):
        out[b] = _binary_form_roots_slow(r[b])
    return out


def univariate_preimages_rows(coeffs: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """All d preimages ``(B, d, 2)`` of rows Y under a k=1 map (shared or
    per-row coefficients)."""
    if coeffs.ndim == 2:
        Pc, Qc = coeffs[0][None, :], coeffs[1][None, :]
    else:
        Pc, Qc = coeffs[:, 0, :], coeffs[:, 1, :]
    # y = [a : b];  b P - a Q vanishes exactly on the fiber
    r = Y[:, 1:2] * Pc - Y[:, 0:1] * Qc
    if np.any(np.max(np.abs(r), axis=1) < ZERO_TOL):
        raise DegenerateFiber("fiber form vanishes identically")
    return binary_form_roots(r)


def univariate_preimages(f: RationalMap, y: ProjPoint) -> list:
    """The d preimages of y under a map of P^1, with multiplicity."""
    if f.k != 1:
        raise ValueError("univariate_preimages needs k = 1")
    pts = univariate_preimages_rows(f.coeffs, y.coords[None, :])[0]
    return [ProjPoint(p) for p in pts]


def fiber_residual_rows(coeffs: np.ndarray, d: int, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """``|f(x) wedge y|`` (sine of the FS distance between f(x) and y)."""
    W, _ = evaluate_rows(coeffs, d, X, strict=False)
    return sin_distance_rows(Y, W)


def preimages_rows(coeffs: np.ndarray, k: int, d: int, Y: np.ndarray, rng=None):
    """Preimages of each row of Y: ``(B, d^k, k+1)`` plus an ok-mask."""
    if k == 1:
        return univariate_preimages_rows(coeffs, Y), np.ones(len(Y), dtype=bool)
    from .homotopy import multivariate_preimages_rows
    return multivariate_preimages_rows(coeffs, k, d, Y, rng=rng)


# ---------------------------------------------------------------------------
# sampling mu(f_0)


@dataclass(frozen=True)
class MeasureSample:
    point: ProjPoint
    depth: int
    branch_trace: list


@dataclass
class MeasureSamples:
    """Batch of inverse-iteration samples.

    ``branch[:, s]`` is the branch index chosen at backward step s (step 0
    inverts f_depth, the last step inverts f_0).  ``chain`` (if kept) has
    ``chain[j]`` = image of ``points`` under ``f_{j-1} o ... o f_0``.
    """

    points: np.ndarray
    depth: int
    branch: np.ndarray
    chain: np.ndarray | None = None
    retries: int = 0

    def __len__(self):
        return len(self.points)

    def __getitem__(self, i) -> MeasureSample:
        return MeasureSample(ProjPoint(self.points[i]), self.depth, self.branch[i].tolist())

    @property
    def k(self) -> int:
        return self.points.shape[1] - 1

    def branch_string(self, i: int, base: int) -> str:
        digits = "0123456789abcdefghijklmnopqrstuvwxyz"
        return "".join(digits[b] for b in self.branch[i])


def _backward_walk(seq: MapSequence, rows, count: int, depth: int, rng: np.random.Generator,
                   chain_levels: int, on_level=None):
    """One chunk of inverse iteration through ``f_depth, ..., f_0``."""
    k, d = seq.k, seq.d
    nb = d ** k
    points = np.empty((count, k + 1), dtype=complex)
    branch = np.empty((count, depth + 1), dtype=np.int16 if nb < 32000 else np.int64)
    chain = np.empty((chain_levels, count, k + 1), dtype=complex) if chain_levels else None
    todo = np.arange(count)
    retries = 0
    for attempt in range(MAX_RETRIES + 1):
        x = random_points(rng, len(todo), k)
        alive = np.ones(len(todo), dtype=bool)
        if chain is not None and chain_levels > depth + 1:
            chain[depth + 1, todo] = x
        for s, j in enumerate(range(depth, -1, -1)):
            C = seq.coeffs(j, None if not seq.batched else (rows[todo] if rows is not None
                                                            else todo))
            pre, ok = preimages_rows(C, k, d, x, rng=rng)
            b = rng.integers(nb, size=len(todo))
            alive &= ok
            x = pre[np.arange(len(todo)), b]
            branch[todo, s] = b
            if chain is not None and j < chain_levels:
                chain[j, todo] = x
            if on_level is not None:
                on_level(j, todo, x)
        points[todo] = x
        if np.all(alive):
            return points, branch, chain, retries
        todo = todo[~alive]
        retries += len(todo)
    raise TrackingFailure(len(todo))


def measure_sample(maps, depth: int, count: int, seed: int, *, chain_levels: int = 0,
                   tag: str = "measure") -> MeasureSamples:
    """``count`` samples of mu(f_0) by inverse iteration through
    ``f_depth, ..., f_0``.

    With shared maps, chunk c of rows draws from stream ``(seed, tag, c)``.
    With per-row sequences (a SequenceBatch) row i walks its own sequence.
    ``chain_levels`` > 0 keeps ``chain[0..chain_levels-1]``; at most
    ``depth + 2`` levels exist (the last is the FS-uniform seed point).
    """
    seq = as_sequence(maps)
    if len(seq) < depth + 1:
        raise ValueError(f"need {depth + 1} maps for depth {depth}, got {len(seq)}")
    chain_levels = min(int(chain_levels), depth + 2)

    def work(ch):
        c, start, stop = ch
        rows = np.arange(start, stop) if seq.batched else None
        return _backward_walk(seq, rows, stop - start, depth, stream(seed, tag, c),
                              chain_levels)

    parts = map_ordered(work, list(chunk_bounds(count)))
    points = np.concatenate([p[0] for p in parts])
    branch = np.concatenate([p[1] for p in parts])
    chain = np.concatenate([p[2] for p in parts], axis=1) if chain_levels else None
    return MeasureSamples(points, depth, branch, chain, sum(p[3] for p in parts))


def forward_orbit(maps, samples, n: int) -> np.ndarray:
    """Images ``(n+1, N, k+1)`` of the samples under ``f_0, f_1, ...``.

    Reads the recorded chain when it is long enough; otherwise iterates
    forward (fine for short n, unstable for long orbits on the Julia set).
    """
    if isinstance(samples, MeasureSamples):
        if samples.chain is not None and len(samples.chain) >= n + 1:
            return samples.chain[:n + 1]
        X = samples.points
    else:
        X = as_rows(samples)
    seq = as_sequence(maps)
    out = [X]
    for i in range(n):
        W, _ = evaluate_rows(seq.coeffs(i), seq.d, out[-1])
        out.append(W)
    return np.stack(out)


def sample_points(samples) -> np.ndarray:
    return samples.points if isinstance(samples, MeasureSamples) else as_rows(samples)


def export_samples_csv(samples: MeasureSamples, path, d: int):
    """Write samples as CSV: depth, branch trace in base d^k, then (re, im)
    of each homogeneous coordinate."""
    k = samples.k
    base = d ** k
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["depth", "branch_trace"]
        for i in range(k + 1):
            header += [f"z{i}_re", f"z{i}_im"]
        w.writerow(header)
        for i in range(len(samples)):
            row = [samples.depth, samples.branch_string(i, base)]
            for c in samples.points[i]:
                row += [repr(float(c.real)), repr(float(c.imag))]
            w.writerow(row)


# ---------------------------------------------------------------------------
# invariance test-bench


def invariance_test(f: RationalMap, mu_f, mu_Ff, observables) -> list:
    """Compare ``E_{mu(f)}[phi o f]`` with ``E_{mu(F(f))}[phi]``.

    Returns ``(observable id, discrepancy, pooled standard error)`` per
    observable.
    """
    X = sample_points(mu_f)
    Y = sample_points(mu_Ff)
    FX, _ = evaluate_rows(f.coeffs, f.d, X)
    out = []
    for obs in observables:
        a = np.asarray(obs(FX), dtype=float)
        b = np.asarray(obs(Y), dtype=float)
        disc = abs(a.mean() - b.mean())
        se = math.sqrt(a.var(ddof=1) / len(a) + b.var(ddof=1) / len(b)) \
            if len(a) > 1 and len(b) > 1 else float("inf")
        out.append((obs.id, float(disc), se))
    return out


# ---------------------------------------------------------------------------
# alpha = int mu(f) dLambda(f)


@dataclass
class AlphaSamples:
    """Pairs (f, x) with f ~ Lambda and x ~ mu(f); row i is one pair.

    ``sequences`` holds each row's driven sequence ``f = f_0, f_1, ...`` and
    ``chain`` the matching forward orbit of x when requested.
    """

    spec: DriverSpec
    params: np.ndarray
    points: np.ndarray
    depth: int
    sequences: SequenceBatch | None = None
    chain: np.ndarray | None = None

    def __len__(self):
        return len(self.points)

    @property
    def coeffs(self) -> np.ndarray:
        return self.spec.family.coeffs(self.params)

    def __getitem__(self, i) -> "AlphaSample":
        fam = self.spec.family
        return AlphaSample(fam.to_map(self.params[i]), ProjPoint(self.points[i]))


@dataclass(frozen=True)
class AlphaSample:
    map: RationalMap
    point: ProjPoint


def alpha_sample(spec: DriverSpec, depth: int, count: int, seed: int, *,
                 extra: int = 0, keep_sequences: bool = False,
                 chain_levels: int = 0, on_level=None) -> AlphaSamples:
    """``count`` independent pairs (f, x): f ~ Lambda, its forward sequence of
    length ``depth + extra + 1`` under the driver's F, and x ~ mu(f) from a
    depth ``depth + extra`` backward walk along that sequence.

    ``on_level(j, rows, x, params)`` is called with the level-j chain
    points of each chunk, their global row indices and the parameters of
    f_j on those rows, for streaming reductions.
    """
    params, aux = lambda_params(spec, seed, count)
    total = depth + extra
    pts = np.empty((count, spec.family.k + 1), dtype=complex)
    seqs, chains = [], []

    def work(ch):
        c, start, stop = ch
        seq = sequence_batch(spec, params[start:stop], aux[start:stop], total, seed,
                             tag=f"alpha-fwd-{c}")
        cb = None
        if on_level is not None:
            def cb(j, todo, x, _start=start, _seq=seq):
                on_level(j, _start + todo, x, _seq.params[j][todo])
        p, _, chain, _ = _backward_walk(MapSequence(seq), None, stop - start, total,
                                        stream(seed, "alpha-walk", c), chain_levels, cb)
        return start, stop, p, seq, chain

    # on_level callbacks accumulate into caller state: keep them sequential
    parts = [work(ch) for ch in chunk_bounds(count)] if on_level is not None else \
        map_ordered(work, list(chunk_bounds(count)))
    for start, stop, p, seq, chain in parts:
        pts[start:stop] = p
        seqs.append(seq)
        chains.append(chain)
    sequences = None
    if keep_sequences:
        sequences = SequenceBatch(spec.family.k, spec.family.d,
                                  np.concatenate([s.coeffs for s in seqs], axis=1),
                                  np.concatenate([s.params for s in seqs], axis=1))
    chain = np.concatenate(chains, axis=1) if chain_levels else None
    return AlphaSamples(spec, params, pts, total, sequences, chain)
