"""Bounded smooth test functions on P^k and on X = P^N x P^k.

Point observables read the first two homogeneous coordinates through the
Hopf-type quantities ``u = 2 Z_0 conj(Z_1)`` and ``h = |Z_0|^2 - |Z_1|^2``
(``|u|^2 + h^2 <= 1``, equality on P^1).  On the unit circle of P^1,
``u = e^{i theta}``.  Every library member is bounded by 1 in modulus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

POINT = "point"
PAIR = "pair"


@dataclass(frozen=True)
class Observable:
    """Named real observable.  ``fn(Z)`` for point arity, ``fn(params, Z)``
    for pair arity; both vectorized over rows."""

    id: str
    arity: str
    fn: Callable

    def __call__(self, *args) -> np.ndarray:
        return np.asarray(self.fn(*args), dtype=float)

    def on_pairs(self, params, Z) -> np.ndarray:
        """Evaluate on (f, x) pairs whatever the arity."""
        if self.arity == PAIR:
            return self(params, Z)
        return self(Z)


def _u(Z):
    return 2.0 * Z[:, 0] * np.conj(Z[:, 1])


def _h(Z):
    return np.abs(Z[:, 0]) ** 2 - np.abs(Z[:, 1]) ** 2


def poisson_kernel(r: float) -> Callable:
    """``(1-r)^2 / |1 - r u|^2``: all Fourier modes ``r^|m|`` on the circle,
    values in ``[((1-r)/(1+r))^2, 1]``."""
    def fn(Z):
        u = _u(Z)
        return (1 - r) ** 2 / (1 - 2 * r * u.real + r * r * np.abs(u) ** 2)
    return fn


def _bump(Z):
    return np.exp(-(_h(Z) / 0.5) ** 2)


CONSTANT = Observable("const", POINT, lambda Z: np.ones(len(Z)))

LIBRARY = (
    Observable("re_z", POINT, lambda Z: (Z[:, 0] * np.conj(Z[:, 1])).real),
    Observable("im_z", POINT, lambda Z: (Z[:, 0] * np.conj(Z[:, 1])).imag),
    Observable("height", POINT, _h),
    Observable("re_u2", POINT, lambda Z: (_u(Z) ** 2).real),
    Observable("im_u2", POINT, lambda Z: (_u(Z) ** 2).imag),
    Observable("re_u3", POINT, lambda Z: (_u(Z) ** 3).real),
    Observable("poisson", POINT, poisson_kernel(0.5)),
    Observable("bump", POINT, _bump),
)

_BY_ID = {o.id: o for o in LIBRARY + (CONSTANT,)}

# cos of the circle angle, the doubling-map coordinate on |z| = 1
COS_ANGLE = Observable("cos_angle", POINT, lambda Z: _u(Z).real)
_BY_ID[COS_ANGLE.id] = COS_ANGLE


def lift_to_pairs(obs: Observable, weight: float = 0.5) -> Observable:
    """Pair observable ``phi(x) * (1 - w + w cos(arg c_0))`` coupling the
    fiber point to the first driver parameter; still bounded by 1."""
    def fn(params, Z):
        c = np.asarray(params)[:, 0]
        ang = np.where(np.abs(c) > 0, np.cos(np.angle(c)), 1.0)
        return obs(Z) * (1 - weight + weight * ang)
    return Observable(f"{obs.id}*param", PAIR, fn)


def get(name: str) -> Observable:
    """Library lookup; ``name*param`` gives the pair lift of ``name``."""
    if name.endswith("*param"):
        return lift_to_pairs(get(name[: -len("*param")]))
    try:
        return _BY_ID[name]
    except KeyError:
        raise KeyError(f"unknown observable {name!r}; known: {sorted(_BY_ID)}") from None


def names() -> list:
    return sorted(_BY_ID)


def circle_mean(obs: Observable, samples: int = 1 << 16) -> float:
    """Exact-in-the-limit mean over the unit circle of P^1 (midpoint rule)."""
    th = 2 * math.pi * (np.arange(samples) + 0.5) / samples
    Z = np.stack([np.exp(1j * th), np.ones(samples)], axis=1) / math.sqrt(2)
    return float(np.mean(obs(Z)))
