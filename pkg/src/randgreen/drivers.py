"""Base dynamics (F, Lambda) on parameter space.

A :class:`Family` turns a complex parameter vector into a degree-d map of
P^k.  A :class:`DriverSpec` picks how parameters evolve:

* ``iid``: every step is a fresh draw, uniform on a product of disks;
* ``cycle``: an explicit finite list, visited cyclically;
* ``parameter_map``: a polynomial ``u -> P(u)`` on an auxiliary coordinate,
  embedded as ``origin + u * direction``.

Everything is vectorized over a leading batch axis so that independent
driven sequences (one per alpha-sample or orbit) advance together.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateEncounter, RejectionExhausted
from .projective import (RationalMap, distance_to_degenerate, distance_to_degenerate_batch,
                         exponents)
from .streams import stream

DEGENERACY_FLOOR = 1e-8
MAX_REJECTIONS = 10_000
BURN_IN = 100
STRIDE = 10

KINDS = ("iid", "cycle", "parameter_map")


@dataclass(frozen=True)
class Family:
    """Parametrized family of degree-d maps of P^k.

    ``power``: ``f_i = Z_i^d + c_i Z_k^d`` (i < k), ``f_k = Z_k^d``; k params.
    For k = 1 this is z -> z^d + c.
    ``diagonal``: ``f_i = Z_i^d + sum_m c_{i,m} M_m`` over all degree-d
    monomials M_m; (k+1) * m params, an affine chart of P^N around the
    diagonal map.
    """

    name: str
    k: int
    d: int

    def __post_init__(self):
        if self.name not in ("power", "diagonal"):
            raise ValueError(f"unknown family {self.name!r}")
        if self.k < 1 or self.d < 2:
            raise ValueError("need k >= 1 and d >= 2")

    @property
    def n_params(self) -> int:
        if self.name == "power":
            return self.k
        return (self.k + 1) * len(exponents(self.k + 1, self.d))

    def _base(self) -> np.ndarray:
        E = exponents(self.k + 1, self.d)
        base = np.zeros((self.k + 1, len(E)), dtype=complex)
        for i in range(self.k + 1):
            e = [0] * (self.k + 1)
            e[i] = self.d
            base[i, np.flatnonzero((E == e).all(axis=1))[0]] = 1.0
        return base

    def coeffs(self, params) -> np.ndarray:
        """Normalized coefficient stacks ``(B, k+1, m)`` for params ``(B, p)``."""
        P = np.atleast_2d(np.asarray(params, dtype=complex))
        if P.shape[1] != self.n_params:
            raise ValueError(f"family {self.name} expects {self.n_params} parameters, "
                             f"got {P.shape[1]}")
        base = self._base()
        C = np.broadcast_to(base, (len(P),) + base.shape).copy()
        if self.name == "power":
            E = exponents(self.k + 1, self.d)
            e = [0] * (self.k + 1)
            e[self.k] = self.d
            col = np.flatnonzero((E == e).all(axis=1))[0]
            C[:, : self.k, col] += P
        else:
            C += P.reshape(C.shape)
        C /= np.linalg.norm(C.reshape(len(P), -1), axis=1)[:, None, None]
        return C

    def to_map(self, params) -> RationalMap:
        return RationalMap(self.k, self.d, self.coeffs(params)[0], normalized=True)

    def distances(self, params) -> np.ndarray:
        return distance_to_degenerate_batch(self.coeffs(params), self.k, self.d)


def _cvec(x, n: int | None = None) -> tuple:
    arr = np.atleast_1d(np.asarray(x, dtype=complex))
    if n is not None and arr.shape == (1,) and n > 1:
        arr = np.full(n, arr[0])
    return tuple(complex(v) for v in arr)


@dataclass(frozen=True)
class DriverSpec:
    """Description of the base dynamics.  Use the ``iid``/``cycle``/
    ``parameter_map`` constructors rather than filling fields by hand."""

    kind: str
    family: Family
    centers: tuple = ()
    radii: tuple = ()
    cycle: tuple = ()
    poly: tuple = ()
    origin: tuple = ()
    direction: tuple = ()
    init: str = "circle"
    init_value: complex = 0j
    project_circle: bool = False
    floor: float = DEGENERACY_FLOOR

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown driver kind {self.kind!r}")

    @classmethod
    def iid(cls, family: Family, center=0.0, radius=0.1, floor=DEGENERACY_FLOOR):
        p = family.n_params
        r = np.atleast_1d(np.asarray(radius, dtype=float))
        if r.shape == (1,):
            r = np.full(p, r[0])
        return cls("iid", family, centers=_cvec(center, p), radii=tuple(float(v) for v in r),
                   floor=floor)

    @classmethod
    def cycle_of(cls, family: Family, params, floor=DEGENERACY_FLOOR):
        items = tuple(_cvec(p, family.n_params) for p in params)
        if not items:
            raise ValueError("cycle must be nonempty")
        return cls("cycle", family, cycle=items, floor=floor)

    @classmethod
    def parameter_map(cls, family: Family, poly, *, origin=0.0, direction=1.0,
                      init="circle", init_value=0j, project_circle=False,
                      floor=DEGENERACY_FLOOR):
        if init not in ("circle", "point", "disk"):
            raise ValueError(f"unknown init rule {init!r}")
        p = family.n_params
        return cls("parameter_map", family, poly=_cvec(poly), origin=_cvec(origin, p),
                   direction=_cvec(direction, p), init=init, init_value=complex(init_value),
                   project_circle=bool(project_circle), floor=floor)

    # -- parameter-level helpers ------------------------------------------

    def embed(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=complex)
        return np.asarray(self.origin)[None, :] + u[:, None] * np.asarray(self.direction)[None, :]

    def apply_poly(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=complex)
        out = np.polynomial.polynomial.polyval(u, np.asarray(self.poly, dtype=complex))
        if self.project_circle:
            out = out / np.abs(out)
        return out


@dataclass(frozen=True)
class DriverState:
    """Point of the base orbit: current parameter, step count, stream id.

    ``aux`` is the cycle position (cycle drivers) or the auxiliary
    coordinate u (parameter-map drivers).
    """

    spec: DriverSpec
    current_parameter: tuple
    step: int
    rng_stream: tuple
    aux: complex = 0j

    @property
    def map(self) -> RationalMap:
        return self.spec.family.to_map(self.current_parameter)


# ---------------------------------------------------------------------------
# vectorized parameter draws


def draw_iid(spec: DriverSpec, rng: np.random.Generator, count: int) -> np.ndarray:
    """``count`` parameter vectors uniform on the product of disks, with
    rejection below the degeneracy floor."""
    p = spec.family.n_params
    centers = np.asarray(spec.centers)
    radii = np.asarray(spec.radii)

    def raw(n):
        r = radii[None, :] * np.sqrt(rng.random((n, p)))
        th = 2 * np.pi * rng.random((n, p))
        return centers[None, :] + r * np.exp(1j * th)

    out = raw(count)
    bad = np.flatnonzero(spec.family.distances(out) <= spec.floor)
    tries = 0
    while bad.size:
        tries += 1
        if tries > MAX_REJECTIONS:
            raise RejectionExhausted(f"{MAX_REJECTIONS} consecutive degenerate draws")
        out[bad] = raw(bad.size)
        bad = bad[spec.family.distances(out[bad]) <= spec.floor]
    return out


def _init_aux(spec: DriverSpec, rng: np.random.Generator, count: int) -> np.ndarray:
    if spec.init == "point":
        return np.full(count, spec.init_value)
    if spec.init == "circle":
        return np.exp(2j * np.pi * rng.random(count))
    r = abs(spec.init_value) * np.sqrt(rng.random(count))
    return r * np.exp(2j * np.pi * rng.random(count))


@functools.lru_cache(maxsize=64)
def _cycle_distances(spec: DriverSpec) -> np.ndarray:
    return spec.family.distances(np.asarray(spec.cycle))


def _check_cycle(spec: DriverSpec, idx: np.ndarray, step: int):
    dist = _cycle_distances(spec)[idx]
    bad = np.flatnonzero(dist <= spec.floor)
    if bad.size:
        raise DegenerateEncounter(step, float(dist[bad[0]]))


def _check_floor(spec: DriverSpec, params: np.ndarray, step: int):
    dist = spec.family.distances(params)
    bad = np.flatnonzero(dist <= spec.floor)
    if bad.size:
        raise DegenerateEncounter(step, float(dist[bad[0]]))


def advance_batch(spec: DriverSpec, params: np.ndarray, aux: np.ndarray,
                  rng: np.random.Generator | None, step: int):
    """Apply F to a batch of parameters; ``step`` is the index of the new
    maps (used only for error reporting)."""
    if spec.kind == "iid":
        return draw_iid(spec, rng, len(params)), aux
    if spec.kind == "cycle":
        idx = (aux.real.astype(int) + 1) % len(spec.cycle)
        new = np.asarray(spec.cycle)[idx]
        _check_cycle(spec, idx, step)
        return new, idx.astype(complex)
    u = spec.apply_poly(aux)
    new = spec.embed(u)
    _check_floor(spec, new, step)
    return new, u


# ---------------------------------------------------------------------------
# public operations


def driver_init(spec: DriverSpec, seed: int) -> DriverState:
    """Initial state: a Lambda-draw (IID / ParameterMap) or the first cycle
    element.  Deterministic in ``(spec, seed)``."""
    if spec.kind == "iid":
        params = draw_iid(spec, stream(seed, "iid", 0), 1)[0]
        aux = 0j
    elif spec.kind == "cycle":
        params = np.asarray(spec.cycle[0])
        aux = 0j
        _check_cycle(spec, np.array([0]), 0)
    else:
        rng = stream(seed, "pmap-init")
        for _ in range(MAX_REJECTIONS):
            u = _init_aux(spec, rng, 1)
            params = spec.embed(u)[0]
            if spec.family.distances(params[None, :])[0] > spec.floor:
                aux = complex(u[0])
                break
        else:
            raise RejectionExhausted("no admissible initial parameter")
    return DriverState(spec, tuple(complex(v) for v in params), 0, (int(seed),), aux)


def advance(state: DriverState) -> DriverState:
    """The next state of the base orbit."""
    spec = state.spec
    step = state.step + 1
    rng = stream(state.rng_stream[0], "iid", *state.rng_stream[1:], step) \
        if spec.kind == "iid" else None
    params, aux = advance_batch(spec, np.asarray([state.current_parameter]),
                                np.asarray([state.aux]), rng, step)
    return replace(state, current_parameter=tuple(complex(v) for v in params[0]),
                   step=step, aux=complex(aux[0]))


def generate_sequence(state: DriverState, n: int) -> list:
    """``[f_0, ..., f_n]`` starting from ``state``; pure in the state."""
    if n < 0:
        raise ValueError("n must be >= 0")
    maps = [state.map]
    s = state
    for _ in range(n):
        s = advance(s)
        maps.append(s.map)
    return maps


def sequence_params(state: DriverState, n: int) -> np.ndarray:
    """Parameters of ``f_0, ..., f_n`` as an ``(n+1, p)`` array."""
    out = [state.current_parameter]
    s = state
    for _ in range(n):
        s = advance(s)
        out.append(s.current_parameter)
    return np.asarray(out, dtype=complex)


def birkhoff_logdist(state: DriverState, n: int):
    """Mean of ``log dist(f_i, M)`` over ``i < n`` and all prefix means."""
    if n < 1:
        raise ValueError("n must be >= 1")
    params = sequence_params(state, n - 1)
    dist = state.spec.family.distances(params)
    bad = np.flatnonzero(dist <= state.spec.floor)
    if bad.size:
        raise DegenerateEncounter(int(state.step + bad[0]), float(dist[bad[0]]))
    logs = np.log(dist)
    prefix = np.cumsum(logs) / np.arange(1, n + 1)
    return float(prefix[-1]), prefix.tolist()


def lambda_params(spec: DriverSpec, seed: int, count: int):
    """``count`` parameter vectors distributed per Lambda, with the matching
    auxiliary coordinates (cycle index or u)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if spec.kind == "iid":
        rng = stream(seed, "lambda")
        return draw_iid(spec, rng, count), np.zeros(count, dtype=complex)
    if spec.kind == "cycle":
        rng = stream(seed, "lambda")
        idx = rng.integers(len(spec.cycle), size=count)
        return np.asarray(spec.cycle)[idx], idx.astype(complex)
    state = driver_init(spec, seed)
    u = np.asarray([state.aux])
    total = BURN_IN + STRIDE * (count - 1)
    us = np.empty(count, dtype=complex)
    for i in range(total + 1):
        if i >= BURN_IN and (i - BURN_IN) % STRIDE == 0:
            us[(i - BURN_IN) // STRIDE] = u[0]
        if i < total:
            u = spec.apply_poly(u)
    params = spec.embed(us)
    _check_floor(spec, params, 0)
    return params, us


def sample_lambda(spec: DriverSpec, seed: int, count: int) -> list:
    """``count`` maps sampled from Lambda (see :func:`lambda_params`)."""
    params, _ = lambda_params(spec, seed, count)
    C = spec.family.coeffs(params)
    return [RationalMap(spec.family.k, spec.family.d, c, normalized=True) for c in C]


def is_nondegenerate(f: RationalMap, floor: float = DEGENERACY_FLOOR) -> bool:
    return distance_to_degenerate(f) > floor


@dataclass
class SequenceBatch:
    """Independent driven sequences, one per row: ``coeffs[j, b]`` is the
    map f_j of sequence b."""

    k: int
    d: int
    coeffs: np.ndarray  # (L, B, k+1, m)
    params: np.ndarray = field(default=None)  # (L, B, p)

    def __len__(self):
        return self.coeffs.shape[0]


def sequence_batch(spec: DriverSpec, params0: np.ndarray, aux0: np.ndarray, n: int,
                   seed: int, tag: str = "fwd") -> SequenceBatch:
    """Extend each row of ``params0`` forward by n steps of F."""
    fam = spec.family
    params = [np.asarray(params0, dtype=complex)]
    aux = np.asarray(aux0, dtype=complex)
    for j in range(1, n + 1):
        rng = stream(seed, tag, j) if spec.kind == "iid" else None
        p, aux = advance_batch(spec, params[-1], aux, rng, j)
        params.append(p)
    P = np.stack(params)
    C = fam.coeffs(P.reshape(-1, P.shape[-1])).reshape(P.shape[:2] + (fam.k + 1, -1))
    return SequenceBatch(fam.k, fam.d, C, P)
