"""Special functions, stable reductions and seeded sampling.

``digamma`` and ``log_gamma`` shift their argument up to at least 8 with the
recurrence and then use the asymptotic (Stirling / de Moivre) series.  Both
accept a scalar or a numpy array.  The scalar branch uses the same operation
order as the compiled kernels so both backends agree bit for bit.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import DomainError

ArrayLike = Union[float, Sequence[float], np.ndarray]

_SHIFT = 8.0
_SMALL = 32  # below this size a scalar loop beats the masked vector shifts
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def _digamma_scalar(x: float) -> float:
    acc = 0.0
    while x < _SHIFT:
        acc -= 1.0 / x
        x += 1.0
    r = 1.0 / x
    r2 = r * r
    series = r2 * (1.0 / 12.0 - r2 * (1.0 / 120.0 - r2 * (1.0 / 252.0 - r2 * (
        1.0 / 240.0 - r2 * (1.0 / 132.0 - r2 * (691.0 / 32760.0 - r2 / 12.0))))))
    return acc + math.log(x) - 0.5 * r - series


def _log_gamma_scalar(x: float) -> float:
    prod = 1.0
    while x < _SHIFT:
        prod *= x
        x += 1.0
    r = 1.0 / x
    r2 = r * r
    series = r * (1.0 / 12.0 - r2 * (1.0 / 360.0 - r2 * (1.0 / 1260.0 - r2 * (
        1.0 / 1680.0 - r2 * (1.0 / 1188.0 - r2 * (691.0 / 360360.0 - r2 / 156.0))))))
    return (x - 0.5) * math.log(x) - x + _HALF_LOG_2PI + series - math.log(prod)


def _check_positive(x: np.ndarray, name: str) -> None:
    if np.any(~(x > 0)):
        raise DomainError(f"{name} requires strictly positive arguments")


def digamma(x: ArrayLike):
    """Digamma function psi(x) for x > 0."""
    if np.ndim(x) == 0:
        xf = float(x)
        if not xf > 0:
            raise DomainError(f"digamma requires x > 0, got {xf}")
        return _digamma_scalar(xf)
    arr = np.array(x, dtype=float)
    _check_positive(arr, "digamma")
    if arr.size <= _SMALL:
        return np.array([_digamma_scalar(v) for v in arr.ravel().tolist()]).reshape(arr.shape)
    acc = np.zeros_like(arr)
    while True:
        low = arr < _SHIFT
        if not low.any():
            break
        acc[low] -= 1.0 / arr[low]
        arr[low] += 1.0
    r = 1.0 / arr
    r2 = r * r
    series = r2 * (1.0 / 12.0 - r2 * (1.0 / 120.0 - r2 * (1.0 / 252.0 - r2 * (
        1.0 / 240.0 - r2 * (1.0 / 132.0 - r2 * (691.0 / 32760.0 - r2 / 12.0))))))
    return acc + np.log(arr) - 0.5 * r - series


def log_gamma(x: ArrayLike):
    """Natural log of the Gamma function for x > 0."""
    if np.ndim(x) == 0:
        xf = float(x)
        if not xf > 0:
            raise DomainError(f"log_gamma requires x > 0, got {xf}")
        return _log_gamma_scalar(xf)
    arr = np.array(x, dtype=float)
    _check_positive(arr, "log_gamma")
    if arr.size <= _SMALL:
        return np.array([_log_gamma_scalar(v) for v in arr.ravel().tolist()]).reshape(arr.shape)
    prod = np.ones_like(arr)
    while True:
        low = arr < _SHIFT
        if not low.any():
            break
        prod[low] *= arr[low]
        arr[low] += 1.0
    r = 1.0 / arr
    r2 = r * r
    series = r * (1.0 / 12.0 - r2 * (1.0 / 360.0 - r2 * (1.0 / 1260.0 - r2 * (
        1.0 / 1680.0 - r2 * (1.0 / 1188.0 - r2 * (691.0 / 360360.0 - r2 / 156.0))))))
    return (arr - 0.5) * np.log(arr) - arr + _HALF_LOG_2PI + series - np.log(prod)


def log_sum_exp(values: ArrayLike) -> float:
    """ln(sum(exp(values))) without overflow; -inf entries are allowed."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise DomainError("log_sum_exp of an empty sequence")
    m = v.max()
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.exp(v - m).sum()))


# ---------------------------------------------------------------------------
# Random numbers
# ---------------------------------------------------------------------------

def _label_key(label) -> int:
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError("integer labels must be non-negative")
        return int(label)
    digest = hashlib.blake2b(str(label).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class Rng:
    """Reproducible, splittable random generator (Philox counter stream).

    ``split(label)`` derives an independent child stream from the parent seed
    and the label path, so the child does not depend on how much of the parent
    stream has been consumed.  An instance is single-owner.
    """

    def __init__(self, seed: int, _path: tuple = ()):
        if seed < 0 or seed >= 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = int(seed)
        self.path = tuple(_path)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
        self.gen = np.random.Generator(np.random.Philox(ss))

    def split(self, label) -> "Rng":
        return Rng(self.seed, self.path + (_label_key(label),))

    def uniform(self, size=None):
        return self.gen.random(size)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, path={self.path})"


@dataclass(frozen=True)
class Dirichlet:
    alpha: tuple


@dataclass(frozen=True)
class Normal:
    mean: float
    variance: float


@dataclass(frozen=True)
class ScaledInvChiSq:
    nu: float
    tau2: float


@dataclass(frozen=True)
class Categorical:
    probs: tuple


def sample(rng: Rng, dist, size=None):
    """Draw from one of Dirichlet, Normal, ScaledInvChiSq or Categorical."""
    g = rng.gen
    if isinstance(dist, Dirichlet):
        alpha = np.asarray(dist.alpha, dtype=float)
        if alpha.ndim != 1 or alpha.size == 0 or np.any(~(alpha > 0)):
            raise DomainError("Dirichlet parameters must be positive")
        draw = g.dirichlet(alpha, size=size)
        return draw / draw.sum(axis=-1, keepdims=True)
    if isinstance(dist, Normal):
        if not dist.variance > 0:
            raise DomainError("Normal variance must be positive")
        return g.normal(dist.mean, math.sqrt(dist.variance), size=size)
    if isinstance(dist, ScaledInvChiSq):
        if not (dist.nu > 0 and dist.tau2 > 0):
            raise DomainError("Inv-chi2 parameters must be positive")
        chi2 = 2.0 * g.standard_gamma(0.5 * dist.nu, size=size)
        return dist.nu * dist.tau2 / chi2
    if isinstance(dist, Categorical):
        p = np.asarray(dist.probs, dtype=float)
        if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise DomainError("Categorical probabilities must lie on the simplex")
        u = g.random(size)
        cdf = np.cumsum(p)
        idx = np.searchsorted(cdf, np.asarray(u) * cdf[-1], side="right")
        return np.minimum(idx, p.size - 1) if size is not None else int(min(idx, p.size - 1))
    raise DomainError(f"unsupported distribution {dist!r}")
