"""Closed-form sum-DoF values for ZF, MAT, ALTMAT, K-MAT and the outer bound.

Rational ``alpha`` (``int``, ``Fraction`` or a decimal string such as ``"0.05"``)
keeps every value an exact :class:`fractions.Fraction`; a ``float`` alpha
switches to floating point.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Union

Number = Union[Fraction, float]


class Scheme(str, enum.Enum):
    ZF = "ZF"
    MAT = "MAT"
    ALTMAT_LIMIT = "ALTMAT"
    ALTMAT_FINITE_N = "ALTMAT_FINITE_N"
    KMAT = "KMAT"
    OUTER = "OUTER"


@dataclass(frozen=True)
class DofValue:
    scheme: Scheme
    K: int
    alpha: Number
    value: Number

    def __post_init__(self):
        if not 0 <= self.value <= self.K:
            raise ValueError(f"DoF {self.value} outside [0, K={self.K}] for {self.scheme.value}")

    @property
    def exact(self) -> bool:
        return isinstance(self.value, Fraction)


def as_alpha(alpha) -> Number:
    """Normalize alpha; rationals stay exact, floats stay floats."""
    if isinstance(alpha, float):
        a: Number = alpha
    elif isinstance(alpha, (int, Fraction, str)):
        a = Fraction(alpha)
    else:
        raise TypeError(f"unsupported alpha type {type(alpha).__name__}")
    if not 0 <= a <= 1:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return a


def _check_k(K: int, minimum: int) -> int:
    if int(K) != K or K < minimum:
        raise ValueError(f"K must be an integer >= {minimum}, got {K}")
    return int(K)


@lru_cache(maxsize=None)
def harmonic(K: int) -> Fraction:
    """``sum_{k=1..K} 1/k`` exactly."""
    K = _check_k(K, 1)
    return sum((Fraction(1, k) for k in range(1, K + 1)), Fraction(0))


def dof_outer_sum(K: int, alpha) -> Number:
    """Sum-DoF outer bound ``K (1 + alpha (H_K - 1)) / H_K``."""
    K = _check_k(K, 2)
    a = as_alpha(alpha)
    hk = harmonic(K)
    if isinstance(a, float):
        hk_f = float(hk)
        return K * (1.0 + a * (hk_f - 1.0)) / hk_f
    return K * (1 + a * (hk - 1)) / hk


def dof_mat(K: int) -> Fraction:
    """MAT alignment with fully outdated CSIT: ``K / H_K``."""
    K = _check_k(K, 1)
    return Fraction(K) / harmonic(K)


def dof_zf(K: int, alpha) -> Number:
    K = _check_k(K, 1)
    return K * as_alpha(alpha)


def dof_altmat_limit(K: int) -> Fraction:
    """ALTMAT sum DoF as the number of main iterations grows: ``2K/(K+1)``."""
    K = _check_k(K, 2)
    return Fraction(2 * K, K + 1)


def dof_kmat(K: int, alpha, altmat_dof: Number | None = None) -> Number:
    """K-MAT: ``(1 - alpha) * DoF_ALTMAT + alpha * K``.

    ``altmat_dof`` substitutes a finite-n ALTMAT value (e.g. from the schedule
    ledger); by default the limit ``2K/(K+1)`` is used.
    """
    K = _check_k(K, 2)
    a = as_alpha(alpha)
    base = dof_altmat_limit(K) if altmat_dof is None else altmat_dof
    if isinstance(a, float):
        return (1.0 - a) * float(base) + a * K
    return (1 - a) * base + a * K


def kmat_mat_crossover(K: int) -> Fraction:
    """Smallest alpha from which K-MAT matches or beats MAT.

    Solves ``(1 - a) 2K/(K+1) + a K = K/H_K``; returns 0 when ALTMAT already
    reaches MAT (K = 2).
    """
    K = _check_k(K, 2)
    alt = dof_altmat_limit(K)
    gap = dof_mat(K) - alt
    if gap <= 0:
        return Fraction(0)
    return gap / (K - alt)


FIGURE_SCHEMES = (Scheme.ZF, Scheme.MAT, Scheme.ALTMAT_LIMIT, Scheme.KMAT, Scheme.OUTER)


def scheme_value(scheme: Scheme, K: int, alpha) -> Number:
    if scheme is Scheme.ZF:
        return dof_zf(K, alpha)
    if scheme is Scheme.MAT:
        return dof_mat(K)
    if scheme is Scheme.ALTMAT_LIMIT:
        return dof_altmat_limit(K)
    if scheme is Scheme.KMAT:
        return dof_kmat(K, alpha)
    if scheme is Scheme.OUTER:
        return dof_outer_sum(K, alpha)
    raise ValueError(f"no closed form for {scheme}")


def figure_tables(
    K_range: Iterable[int],
    alpha_grid: Iterable,
    schemes: Iterable[Scheme] = FIGURE_SCHEMES,
) -> list[DofValue]:
    """Rows ``(K, alpha, scheme, dof)`` for every combination, K-major order."""
    schemes = tuple(schemes)
    alphas = [as_alpha(a) for a in alpha_grid]
    rows = []
    for K in K_range:
        for a in alphas:
            for s in schemes:
                v = scheme_value(s, K, a)
                if isinstance(a, float):
                    v = float(v)
                rows.append(DofValue(s, int(K), a, v))
    return rows
