"""Ergodic-theory estimators for driven sequences.

Orbits follow the sequence convention ``F_0 = id``, ``F_i = f_{i-1} o ... o
f_0``.  Estimators accept sample sets from :mod:`randgreen.green`; when a
sample set carries its backward chain, forward orbits are read from it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.spatial import cKDTree

from .green import (AlphaSamples, MapSequence, MeasureSamples, alpha_sample, as_sequence,
                    forward_orbit, green_potential_rows, sample_points)
from .observables import Observable
from .projective import (as_rows, embedding_chord, evaluate_rows, fs_distance_rows,
                         fs_jacobian_rows, hermitian_embedding, random_points)
from .streams import stream

HALF_PI = 0.5 * math.pi


# ---------------------------------------------------------------------------
# helpers


def orbit_rows(maps, X, n: int) -> np.ndarray:
    """``(n, B, k+1)``: the points ``F_i(x)`` for ``i = 0..n-1``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return forward_orbit(maps, X, n - 1)


@dataclass(frozen=True)
class Slope:
    slope: float
    stderr: float
    intercept: float


def growth_rate(xs, ys) -> Slope:
    """Least-squares slope of ys against xs."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(xs) < 2:
        raise ValueError("need at least two points for a slope")
    if len(xs) == 2:
        s = (ys[1] - ys[0]) / (xs[1] - xs[0])
        return Slope(float(s), float("nan"), float(ys[0] - s * xs[0]))
    fit = stats.linregress(xs, ys)
    return Slope(float(fit.slope), float(fit.stderr), float(fit.intercept))


# ---------------------------------------------------------------------------
# Bowen metric


@dataclass(frozen=True)
class BowenBall:
    center: object
    n: int
    epsilon: float

    def __post_init__(self):
        if self.n < 1 or not self.epsilon > 0:
            raise ValueError("Bowen ball needs n >= 1 and epsilon > 0")


def bowen_distance_rows(orbit_x: np.ndarray, orbit_y: np.ndarray) -> np.ndarray:
    """Max over time of FS distances between two stacked orbits."""
    return np.max(fs_distance_rows(orbit_x, orbit_y), axis=0)


def bowen_distance(maps, x, y, n: int) -> float:
    """``max_{i<n} dist(F_i x, F_i y)``."""
    if n > 1 and len(as_sequence(maps)) < n - 1:
        raise ValueError(f"need {n - 1} maps for n = {n}")
    ox = orbit_rows(maps, as_rows(x), n)
    oy = orbit_rows(maps, as_rows(y), n)
    return float(bowen_distance_rows(ox, oy)[0])


def _prefilter_radius(k: int, epsilon: float) -> float:
    return embedding_chord(k, min(epsilon, HALF_PI)) * (1 + 1e-9) + 1e-12


def _greedy_separated(orbit: np.ndarray, epsilon: float) -> int:
    """Greedy in index order: a candidate joins unless some accepted point is
    Bowen-closer than epsilon (distance exactly epsilon counts as separated)."""
    n, M, _ = orbit.shape
    if epsilon > HALF_PI:
        return 1 if M else 0
    k = orbit.shape[2] - 1
    tree = cKDTree(hermitian_embedding(orbit[0]))
    r = _prefilter_radius(k, epsilon)
    covered = np.zeros(M, dtype=bool)
    count = 0
    for j in range(M):
        if covered[j]:
            continue
        count += 1
        nb = np.asarray(tree.query_ball_point(hermitian_embedding(orbit[0, j]), r), dtype=np.intp)
        nb = nb[~covered[nb]]
        if nb.size:
            dist = bowen_distance_rows(orbit[:, nb], orbit[:, j:j + 1])
            covered[nb[dist < epsilon]] = True
    return count


def separated_candidates(maps, candidates: int, seed: int, source: str = "fs",
                         depth: int = 20) -> np.ndarray:
    """Candidate points: FS-uniform, or mu(f_0)-distributed by inverse
    iteration (``source="mu"``)."""
    seq = as_sequence(maps)
    if source == "fs":
        return random_points(stream(seed, "separated"), candidates, seq.k)
    if source == "mu":
        from .green import measure_sample
        return measure_sample(seq, min(depth, len(seq) - 1), candidates, seed,
                              tag="separated-mu").points
    raise ValueError(f"unknown candidate source {source!r}")


def separated_count(maps, n: int, epsilon: float, candidates: int = 10_000, seed: int = 0,
                    *, points=None, source: str = "fs") -> int:
    """Greedy (n, epsilon)-separated subset of the candidates; a lower bound
    for the maximal separated cardinality s(n, epsilon)."""
    if candidates < 1:
        raise ValueError("candidates must be >= 1")
    X = separated_candidates(maps, candidates, seed, source) if points is None else as_rows(points)
    return _greedy_separated(orbit_rows(maps, X, n), epsilon)


def separated_counts(maps, n_list, epsilon: float, points) -> list:
    """s(n, epsilon) for every n in ``n_list`` on one candidate set."""
    X = as_rows(points)
    orb = orbit_rows(maps, X, max(n_list))
    return [_greedy_separated(orb[:n], epsilon) for n in n_list]


# ---------------------------------------------------------------------------
# partition entropy


@dataclass(frozen=True)
class SphericalPartition:
    """Finite partition of P^k.

    k = 1: inner cap ``|z| < r_in``, outer cap ``|z| > r_out`` and the
    annulus between, cut into ``sectors`` angular sectors times ``rings``
    log-spaced radial bands (``z = Z_0 / Z_1``).  k >= 2: the index of the
    largest coordinate, then ``sectors`` bins of ``arg(Z_j / Z_max)`` for
    each other coordinate.
    """

    k: int = 1
    sectors: int = 8
    rings: int = 1
    r_in: float = 0.5
    r_out: float = 2.0

    def __post_init__(self):
        if self.sectors < 1 or self.rings < 1:
            raise ValueError("sectors and rings must be >= 1")
        if not 0 <= self.r_in <= 1 <= self.r_out:
            raise ValueError("need 0 <= r_in <= 1 <= r_out")

    @property
    def n_cells(self) -> int:
        if self.k == 1:
            return 2 + self.sectors * self.rings
        return (self.k + 1) * self.sectors ** self.k

    def cells(self, Z: np.ndarray) -> np.ndarray:
        Z = as_rows(Z)
        if self.k == 1:
            return self._cells_p1(Z)
        top = np.argmax(np.abs(Z), axis=1)
        ref = Z[np.arange(len(Z)), top]
        label = top.astype(np.int64)
        for j in range(self.k):
            # the j-th coordinate other than the largest
            col = j + (j >= top)
            ang = np.angle(Z[np.arange(len(Z)), col] * np.conj(ref))
            b = np.floor((ang + math.pi) / (2 * math.pi) * self.sectors).astype(np.int64)
            label = label * self.sectors + np.clip(b, 0, self.sectors - 1)
        return label

    def _cells_p1(self, Z):
        a0, a1 = np.abs(Z[:, 0]), np.abs(Z[:, 1])
        inner = a0 < self.r_in * a1
        outer = (a0 > self.r_out * a1) if math.isfinite(self.r_out) else np.zeros(len(Z), bool)
        ang = np.angle(Z[:, 0] * np.conj(Z[:, 1]))
        sec = np.floor(np.mod(ang, 2 * math.pi) / (2 * math.pi) * self.sectors).astype(np.int64)
        sec = np.clip(sec, 0, self.sectors - 1)
        ring = np.zeros(len(Z), dtype=np.int64)
        if self.rings > 1:
            lo = math.log(max(self.r_in, 1e-300))
            hi = math.log(self.r_out)
            with np.errstate(divide="ignore"):
                lr = np.log(a0) - np.log(a1)
            ring = np.floor((lr - lo) / (hi - lo) * self.rings).astype(np.int64)
            ring = np.clip(ring, 0, self.rings - 1)
        label = 2 + sec * self.rings + ring
        label = np.where(inner, 0, np.where(outer, 1, label))
        return label


WHOLE_SPACE = SphericalPartition(k=1, sectors=1, rings=1, r_in=0.0, r_out=math.inf)


@dataclass(frozen=True)
class PartitionEntropy:
    """``value`` = (1/n) H_n, ``joint_entropy`` = H_n (Miller-Madow)."""

    value: float
    joint_entropy: float
    n: int
    occupied: int
    singletons: int
    undersampled: bool

    def __float__(self):
        return self.value


def _itineraries(maps, samples, partition: SphericalPartition, n: int) -> np.ndarray:
    orb = samples.chain[:n] if (isinstance(samples, MeasureSamples) and samples.chain is not None
                                and len(samples.chain) >= n) \
        else orbit_rows(maps, sample_points(samples), n)
    return np.stack([partition.cells(orb[i]) for i in range(n)], axis=1)


def _code_entropy(codes: np.ndarray):
    """Miller-Madow entropy of the rows of ``codes`` plus occupancy counts."""
    _, counts = np.unique(codes, axis=0, return_counts=True)
    N = counts.sum()
    p = counts / N
    h = float(-np.sum(p * np.log(p)) + (len(counts) - 1) / (2.0 * N))
    return h, len(counts), int(np.sum(counts == 1))


def partition_entropy(maps, mu_samples, partition: SphericalPartition, n: int) -> PartitionEntropy:
    """(1/n) times the entropy of length-n itineraries through the partition.

    Flags ``undersampled`` when more than 10% of occupied codes were hit
    exactly once.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    codes = _itineraries(maps, mu_samples, partition, n)
    h, occ, single = _code_entropy(codes)
    return PartitionEntropy(h / n, h, n, occ, single, single > 0.1 * occ)


def partition_entropy_profile(maps, mu_samples, partition: SphericalPartition, n_max: int) -> list:
    """:class:`PartitionEntropy` for n = 1..n_max sharing one orbit pass."""
    codes = _itineraries(maps, mu_samples, partition, n_max)
    out = []
    for n in range(1, n_max + 1):
        h, occ, single = _code_entropy(codes[:, :n])
        out.append(PartitionEntropy(h / n, h, n, occ, single, single > 0.1 * occ))
    return out


def conditional_entropy_rate(profile: list) -> float:
    """``H_n - H_{n-1}`` from the last two entries of a profile."""
    if len(profile) < 2:
        raise ValueError("need n >= 2")
    return profile[-1].joint_entropy - profile[-2].joint_entropy


# ---------------------------------------------------------------------------
# Brin-Katok local entropy


@dataclass
class BrinKatokTable:
    """``values[a, b]`` = median over centers of ``-(1/n) log mass`` for
    ``n = n_list[a]``, ``epsilon = epsilon_list[b]``."""

    n_list: list
    epsilon_list: list
    values: np.ndarray
    neglog_mass: np.ndarray  # median of -log mass, same shape
    min_hits: np.ndarray
    median_hits: np.ndarray
    undersampled: np.ndarray
    centers: int
    samples: int

    def slope(self, epsilon_index: int = 0, n_from: int | None = None) -> Slope:
        """Growth rate in n of the median ``-log mass``."""
        ns = np.asarray(self.n_list)
        sel = ns >= (n_from if n_from is not None else ns.min())
        return growth_rate(ns[sel], self.neglog_mass[sel, epsilon_index])


MIN_BALL_HITS = 30


def brin_katok_entropy(maps, mu_samples, n_list, epsilon_list, *, centers: int = 1000,
                       seed: int = 0) -> BrinKatokTable:
    """Empirical Bowen-ball masses around subsampled centers.

    The mass of ``B_n(x, eps)`` is the fraction of the other samples whose
    Bowen distance to x is below eps.  A cell is flagged undersampled when
    some center sees fewer than 30 hits.
    """
    n_list = sorted(int(n) for n in n_list)
    epsilon_list = [float(e) for e in epsilon_list]
    X = sample_points(mu_samples)
    N = len(X)
    if isinstance(mu_samples, MeasureSamples) and mu_samples.chain is not None \
            and len(mu_samples.chain) >= n_list[-1]:
        orb = mu_samples.chain[:n_list[-1]]
    else:
        orb = orbit_rows(maps, X, n_list[-1])
    rng = stream(seed, "brin-katok")
    C = min(centers, N)
    idx = np.sort(rng.choice(N, size=C, replace=False))
    k = X.shape[1] - 1
    emb = hermitian_embedding(X)
    tree = cKDTree(emb)
    r = _prefilter_radius(k, max(epsilon_list))
    hits = np.zeros((C, len(n_list), len(epsilon_list)), dtype=np.int64)
    for c, i in enumerate(idx):
        nb = np.asarray(tree.query_ball_point(emb[i], r), dtype=np.intp)
        nb = nb[nb != i]
        if nb.size == 0:
            continue
        D = fs_distance_rows(orb[:, nb], orb[:, i:i + 1])  # (n_max, |nb|)
        running = np.maximum.accumulate(D, axis=0)
        for a, n in enumerate(n_list):
            dn = running[n - 1]
            for b, eps in enumerate(epsilon_list):
                hits[c, a, b] = int(np.count_nonzero(dn < eps)) if eps <= HALF_PI else N - 1
    with np.errstate(divide="ignore"):
        mass = hits / max(N - 1, 1)
        neglog = -np.log(mass)
    med = np.median(neglog, axis=0)
    ns = np.asarray(n_list, dtype=float)[:, None]
    return BrinKatokTable(n_list, epsilon_list, med / ns, med, hits.min(axis=0),
                          np.median(hits, axis=0), hits.min(axis=0) < MIN_BALL_HITS, C, N)


# ---------------------------------------------------------------------------
# mixing


def mixing_correlation(maps, mu0_samples, mun_samples, phi: Observable, psi: Observable,
                       n: int):
    """``|E_0[phi(F_n x) psi(x)] - E_n[phi] E_0[psi]|`` with a delta-method
    standard error; here ``F_n = f_{n-1} o ... o f_0``."""
    X = sample_points(mu0_samples)
    orb = forward_orbit(maps, mu0_samples, n)
    a = phi(orb[n])
    b = psi(X)
    c = phi(sample_points(mun_samples))
    N0, Nn = len(X), len(c)
    A, B, Cm = np.mean(a * b), np.mean(c), np.mean(b)
    val = A - B * Cm
    # A and E_0[psi] share samples; E_n[phi] is independent
    infl = a * b - B * b
    var = np.var(infl, ddof=1) / N0 + Cm * Cm * np.var(c, ddof=1) / Nn
    return float(abs(val)), float(math.sqrt(max(var, 0.0)))


# ---------------------------------------------------------------------------
# Lyapunov exponents


@dataclass
class LyapunovReport:
    exponents: np.ndarray
    stderr: np.ndarray
    n_steps: int
    n_orbits: int
    critical: int = 0
    logdet_total: float = 0.0
    per_orbit: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        order = np.argsort(-self.exponents)
        self.exponents = np.asarray(self.exponents)[order]
        self.stderr = np.asarray(self.stderr)[order]


def _orbit_source(maps, mu_samples, n_steps):
    """(sequence, per-level point getter) for the Lyapunov and moment loops."""
    if isinstance(mu_samples, AlphaSamples):
        if mu_samples.sequences is None:
            raise ValueError("alpha samples need keep_sequences=True")
        seq = MapSequence(mu_samples.sequences)
    else:
        seq = as_sequence(maps)
    chain = getattr(mu_samples, "chain", None)
    if chain is not None and len(chain) >= n_steps:
        return seq, lambda i, Z: chain[i]
    # forward iteration: adequate only for short orbits off the Julia set
    def nxt(i, Z):
        if i == 0:
            return sample_points(mu_samples)
        W, _ = evaluate_rows(seq.coeffs(i - 1), seq.d, Z)
        return W
    return seq, nxt


def lyapunov_spectrum(maps, mu_samples, n_steps: int, *, jacobian_fn=None) -> LyapunovReport:
    """QR-reorthonormalized growth rates of the FS derivative cocycle.

    ``jacobian_fn(i, Z)``, when given, replaces the FS Jacobian of f_i at
    the orbit points (used for sanity checks of the QR machinery).
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    seq, point_at = _orbit_source(maps, mu_samples, n_steps)
    k = seq.k
    Z = point_at(0, None)
    B = len(Z)
    Q = np.broadcast_to(np.eye(k, dtype=complex), (B, k, k)).copy()
    sums = np.zeros((B, k))
    logdet = np.zeros(B)
    dead = np.zeros(B, dtype=bool)
    for i in range(n_steps):
        if i > 0:
            Z = point_at(i, Z)
        if jacobian_fn is not None:
            J = np.asarray(jacobian_fn(i, Z), dtype=complex)
            if J.ndim == 2:
                J = np.broadcast_to(J, (B, k, k))
        else:
            J, *_ = fs_jacobian_rows(seq.coeffs(i), seq.d, Z, strict=False)
        M = J @ Q
        Q, R = np.linalg.qr(M)
        diag = np.abs(np.diagonal(R, axis1=1, axis2=2))
        with np.errstate(divide="ignore"):
            dead |= np.any(diag < 1e-300, axis=1) | ~np.all(np.isfinite(diag), axis=1)
            sums += np.log(np.where(diag > 0, diag, 1.0))
            logdet += np.log(np.abs(np.linalg.det(J)))
    live = ~dead
    per = sums[live] / n_steps
    n_live = int(live.sum())
    if n_live == 0:
        raise ValueError("every orbit hit a critical point")
    ex = per.mean(axis=0)
    se = per.std(axis=0, ddof=1) / math.sqrt(n_live) if n_live > 1 else np.full(k, np.nan)
    return LyapunovReport(ex, se, n_steps, n_live, int(dead.sum()),
                          float(np.sum(logdet[live])), per)


# ---------------------------------------------------------------------------
# integrability


@dataclass(frozen=True)
class LogMomentReport:
    mean: float
    stderr: float
    q999: float
    count: int


def log_plus_norms(coeffs: np.ndarray, d: int, Z: np.ndarray) -> np.ndarray:
    """``log+ |A|`` with A the FS Jacobian (operator norm) at each row."""
    J, *_ = fs_jacobian_rows(coeffs, d, Z)
    nrm = np.abs(J[:, 0, 0]) if J.shape[-1] == 1 else np.linalg.norm(J, ord=2, axis=(1, 2))
    with np.errstate(divide="ignore"):
        return np.maximum(np.log(nrm), 0.0)


def log_moment_check(alpha_samples: AlphaSamples) -> LogMomentReport:
    """Mean, standard error and 0.999 quantile of ``log+ |A|`` over alpha."""
    fam = alpha_samples.spec.family
    v = log_plus_norms(alpha_samples.coeffs, fam.d, alpha_samples.points)
    se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else float("nan")
    return LogMomentReport(float(v.mean()), se, float(np.quantile(v, 0.999)), len(v))


def fit_derivative_bound(dists, norms, *, bins: int = 8):
    """Fit ``norm <= C dist^(-p)``: p from the slope of binned maxima of
    log norm against -log dist (clipped at 0), C as the smallest constant
    that makes the bound hold on the data.  Distances spanning less than
    one e-fold cannot resolve a power law; p is then 0."""
    dists = np.asarray(dists, dtype=float)
    norms = np.asarray(norms, dtype=float)
    x = -np.log(dists)
    y = np.log(np.maximum(norms, 1e-300))
    edges = np.quantile(x, np.linspace(0, 1, bins + 1))
    xb, yb = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (x >= lo) & (x <= hi)
        if np.any(sel):
            xb.append(x[sel].mean())
            yb.append(y[sel].max())
    p = max(0.0, growth_rate(xb, yb).slope) if len(xb) >= 2 and np.ptp(x) >= 1.0 else 0.0
    C = float(np.max(norms * dists ** p))
    return C, float(p)


# ---------------------------------------------------------------------------
# Gromov volume identity


def graph_volume_check(maps, n: int, quadrature_points: int = 1_000_000, seed: int = 0):
    """FS-uniform Monte-Carlo value of ``sum_{i=1}^n int F_{i-1}^* omega``
    on P^1, its exact cohomological value ``sum d^{i-1}`` and the Monte-Carlo
    standard error."""
    seq = as_sequence(maps)
    if seq.k != 1:
        raise ValueError("graph_volume_check supports k = 1 only")
    if n < 1:
        raise ValueError("n must be >= 1")
    exact = float(sum(seq.d ** (i - 1) for i in range(1, n + 1)))
    rng = stream(seed, "graph-volume")
    total = np.zeros(quadrature_points)
    Z = random_points(rng, quadrature_points, 1)
    logjac = np.zeros(quadrature_points)
    total += 1.0  # F_0 = id
    for i in range(1, n):
        J, W, _, _ = fs_jacobian_rows(seq.coeffs(i - 1), seq.d, Z, strict=False)
        with np.errstate(divide="ignore"):
            logjac += np.log(np.abs(J[:, 0, 0]))
        Z = W
        total += np.exp(2 * logjac)
    se = float(total.std(ddof=1) / math.sqrt(quadrature_points))
    return float(total.mean()), exact, se


# ---------------------------------------------------------------------------
# ergodic averages on X


@dataclass
class BirkhoffReport:
    spread: float
    alpha_mean: float
    alpha_stderr: float
    time_averages: np.ndarray


def alpha_space_mean(spec, observable: Observable, count: int, seed: int, depth: int = 20):
    """Mean and standard error of an observable over fresh alpha-samples."""
    al = alpha_sample(spec, depth, count, seed)
    v = observable.on_pairs(al.params, al.points)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v)))


def birkhoff_alpha_test(spec, observable: Observable, n_steps: int, n_orbits: int,
                        seed: int = 0, *, depth: int = 20, reference: int = 100_000) -> BirkhoffReport:
    """Time averages of the observable along skew-product orbits
    ``(f, x) -> (F(f), f(x))`` against the alpha space average.

    ``spread`` is the root-mean-square deviation of the orbit averages from
    the space average over ``reference`` fresh alpha-samples.
    """
    sums = np.zeros(n_orbits)

    def on_level(j, rows, x, params):
        if j < n_steps:
            sums[rows] += observable.on_pairs(params, x)

    alpha_sample(spec, depth, n_orbits, seed, extra=n_steps - 1, on_level=on_level)
    tavg = sums / n_steps
    mean, se = alpha_space_mean(spec, observable, reference, seed + 1, depth)
    spread = float(np.sqrt(np.mean((tavg - mean) ** 2)))
    return BirkhoffReport(spread, mean, se, tavg)


# ---------------------------------------------------------------------------
# Green potential convergence


def green_increments(maps, probes: np.ndarray, n_max: int) -> np.ndarray:
    """``max_x |g_n(x) - g_{n-1}(x)|`` over the probes for n = 1..n_max."""
    _, prof = green_potential_rows(maps, probes, n_max)
    return np.max(np.abs(np.diff(prof, axis=0)), axis=1)
