"""Outer-bound DoF polytope over per-user DoF tuples.

For every ``p = 2..K`` and every ordered ``p``-tuple of distinct users
``(u_1, ..., u_p)`` the region imposes::

    sum_k d[u_k] / k  <=  1 + alpha * sum_{k=2..p} 1/k

together with the box ``0 <= d_i <= 1``. Queries run in exact rational
arithmetic; the weighted-sum LP returns a primal/dual certificate.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence, TextIO

import numpy as np

from .dof import as_alpha, dof_outer_sum, harmonic

MAX_LP_USERS = 6


@dataclass(frozen=True)
class LinearConstraint:
    """``sum_i coeffs[i] * d_i <= rhs``; ``users`` is the ordered tuple (0-based)."""

    coeffs: tuple[Fraction, ...]
    rhs: Fraction
    users: tuple[int, ...] = ()
    kind: str = "tuple"

    @property
    def p(self) -> int:
        return len(self.users)

    def lhs(self, point: Sequence) -> Fraction:
        return sum((c * x for c, x in zip(self.coeffs, point) if c), Fraction(0))

    def holds(self, point: Sequence) -> bool:
        return self.lhs(point) <= self.rhs


@dataclass
class ConstraintSystem:
    K: int
    alpha: Fraction
    constraints: list[LinearConstraint]
    ordered_subsets: bool = True
    _float_matrix: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def tuple_constraints(self) -> list[LinearConstraint]:
        return [c for c in self.constraints if c.kind == "tuple"]

    @property
    def box_constraints(self) -> list[LinearConstraint]:
        return [c for c in self.constraints if c.kind == "box"]

    def float_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        if self._float_matrix is None:
            A = np.array([[float(c) for c in con.coeffs] for con in self.constraints])
            b = np.array([float(con.rhs) for con in self.constraints])
            self._float_matrix = (A, b)
        return self._float_matrix


def tuple_constraint_count(K: int) -> int:
    """``sum_{p=2..K} K!/(K-p)!``."""
    total, falling = 0, K
    for p in range(2, K + 1):
        falling *= K - p + 1
        total += falling
    return total


def build_constraints(K: int, alpha, ordered_subsets: bool = True) -> ConstraintSystem:
    """Build the outer-bound constraint set.

    Parameters
    ----------
    K : int
        Number of users, ``K >= 2``.
    alpha : rational or float
        CSIT quality exponent. Floats are converted to their exact binary value.
    ordered_subsets : bool
        ``True`` enumerates ordered tuples of any ``p`` distinct users.
        ``False`` restricts to permutations of the first ``p`` users, the
        literal reading of the symmetric-group notation; the result is then no
        longer permutation symmetric and is provided for comparison only.
    """
    if int(K) != K or K < 2:
        raise ValueError(f"K must be an integer >= 2, got {K}")
    a = as_alpha(alpha)
    a = Fraction(a)
    cons: list[LinearConstraint] = []
    for p in range(2, K + 1):
        rhs = 1 + a * (harmonic(p) - 1)
        pool = range(K) if ordered_subsets else range(p)
        for users in itertools.permutations(pool, p):
            coeffs = [Fraction(0)] * K
            for k, u in enumerate(users, start=1):
                coeffs[u] = Fraction(1, k)
            cons.append(LinearConstraint(tuple(coeffs), rhs, tuple(users), "tuple"))
    for i in range(K):
        coeffs = [Fraction(0)] * K
        coeffs[i] = Fraction(1)
        cons.append(LinearConstraint(tuple(coeffs), Fraction(1), (i,), "box"))
    return ConstraintSystem(K, a, cons, ordered_subsets)


def _as_exact_point(point: Sequence) -> list:
    return [Fraction(x) if isinstance(x, (int, Fraction, str)) else x for x in point]


def violated(point: Sequence, sys: ConstraintSystem) -> list[LinearConstraint]:
    """Constraints that ``point`` breaks (lower bounds reported as ``kind='lower'``)."""
    if len(point) != sys.K:
        raise ValueError(f"point has {len(point)} entries, expected K={sys.K}")
    d = _as_exact_point(point)
    bad = [c for c in sys.constraints if not c.holds(d)]
    for i, x in enumerate(d):
        if x < 0:
            coeffs = tuple(Fraction(-1) if k == i else Fraction(0) for k in range(sys.K))
            bad.append(LinearConstraint(coeffs, Fraction(0), (i,), "lower"))
    return bad


def is_member(point: Sequence, sys: ConstraintSystem) -> bool:
    """True iff ``point`` satisfies every constraint (exact for rational input)."""
    return not violated(point, sys)


@dataclass(frozen=True)
class LPResult:
    value: Fraction
    point: tuple[Fraction, ...]
    dual: dict[int, Fraction]
    iterations: int
    certified: bool


class LPError(RuntimeError):
    """The exact simplex hit a state the polytope cannot produce."""


def max_weighted_sum(sys: ConstraintSystem, weights: Sequence, max_iter: int = 10_000) -> LPResult:
    """Exact maximum of ``weights . d`` over the polytope.

    The dual ``min b.y  s.t.  A^T y >= w, y >= 0`` has only ``K`` equality rows
    after adding surplus variables, so a revised simplex on it stays small even
    for ``K = 6`` (1956 columns). The box columns give a feasible start
    (``y_box = w``). Pricing uses floats only to pick entering columns; every
    pivot, the final optimality test and the certificate are exact.

    Returns
    -------
    LPResult
        ``value`` and the maximizer ``point`` (the simplex multipliers), the
        nonzero dual entries keyed by constraint index, and ``certified=True``
        once primal feasibility, dual feasibility and equal objectives have been
        checked exactly.
    """
    K = sys.K
    w = [Fraction(x) for x in weights]
    if len(w) != K:
        raise ValueError(f"weights need K={K} entries, got {len(w)}")
    if any(x < 0 for x in w):
        raise ValueError("weights must be nonnegative")

    cons = sys.constraints
    n_con = len(cons)
    n_col = n_con + K
    # sparse columns; surplus column i is -e_i with cost 0
    cols = [{i: c for i, c in enumerate(con.coeffs) if c} for con in cons]
    costs = [con.rhs for con in cons]
    A_f, b_f = sys.float_matrix()

    def column(j):
        return cols[j] if j < n_con else {j - n_con: Fraction(-1)}

    def cost(j):
        return costs[j] if j < n_con else Fraction(0)

    def reduced_cost(j, pi):
        return cost(j) - sum((c * pi[i] for i, c in column(j).items()), Fraction(0))

    box_idx = [j for j, con in enumerate(cons) if con.kind == "box"]
    basis = [box_idx[i] for i in range(K)]
    binv = [[Fraction(int(r == c)) for c in range(K)] for r in range(K)]
    x_b = list(w)

    bland = False
    degenerate_streak = 0
    for it in range(max_iter):
        pi = [sum((cost(basis[r]) * binv[r][i] for r in range(K)), Fraction(0)) for i in range(K)]
        entering = None
        if not bland:
            pi_f = np.array([float(v) for v in pi])
            d_f = np.concatenate([b_f - A_f @ pi_f, pi_f])
            for j in np.argsort(d_f, kind="stable"):
                if d_f[j] >= -1e-12:
                    break
                if reduced_cost(int(j), pi) < 0:
                    entering = int(j)
                    break
        if entering is None:
            entering = next((j for j in range(n_col) if reduced_cost(j, pi) < 0), None)
        if entering is None:
            break

        a_q = column(entering)
        delta = [sum((binv[r][i] * c for i, c in a_q.items()), Fraction(0)) for r in range(K)]
        leave, theta = None, None
        for r in range(K):
            if delta[r] > 0:
                ratio = x_b[r] / delta[r]
                if theta is None or ratio < theta or (ratio == theta and basis[r] < basis[leave]):
                    leave, theta = r, ratio
        if leave is None:
            raise LPError("dual unbounded: the polytope would be empty, which the origin rules out")

        piv = delta[leave]
        row = [v / piv for v in binv[leave]]
        for r in range(K):
            if r == leave:
                continue
            f = delta[r]
            if f:
                binv[r] = [a - f * b for a, b in zip(binv[r], row)]
                x_b[r] -= theta * f
        binv[leave] = row
        x_b[leave] = theta
        basis[leave] = entering

        degenerate_streak = degenerate_streak + 1 if theta == 0 else 0
        if degenerate_streak > 4 * K:
            bland = True
    else:
        raise LPError(f"simplex did not converge within {max_iter} iterations")

    point = tuple(pi)
    dual = {basis[r]: x_b[r] for r in range(K) if basis[r] < n_con and x_b[r] != 0}
    value = sum((wi * di for wi, di in zip(w, point)), Fraction(0))
    certified = _certify(sys, w, point, dual, value)
    if not certified:
        raise LPError("optimality certificate failed")
    return LPResult(value, point, dual, it + 1, certified)


def _certify(sys: ConstraintSystem, w, point, dual, value) -> bool:
    if not is_member(point, sys):
        return False
    if any(y < 0 for y in dual.values()):
        return False
    aty = [Fraction(0)] * sys.K
    for j, y in dual.items():
        for i, c in enumerate(sys.constraints[j].coeffs):
            if c:
                aty[i] += c * y
    if any(a < wi for a, wi in zip(aty, w)):
        return False
    dual_value = sum((sys.constraints[j].rhs * y for j, y in dual.items()), Fraction(0))
    return dual_value == value


@dataclass(frozen=True)
class OuterCheck:
    K: int
    alpha: Fraction
    lp_value: Fraction
    formula_value: Fraction

    @property
    def match(self) -> bool:
        return self.lp_value == self.formula_value


def verify_outer_formula(K: int, alpha_grid: Iterable) -> list[OuterCheck]:
    """Compare the all-ones LP optimum with the closed-form sum bound, exactly."""
    if K > MAX_LP_USERS:
        raise ValueError(f"exact LP limited to K <= {MAX_LP_USERS}, got K={K}")
    out = []
    for alpha in alpha_grid:
        a = Fraction(as_alpha(alpha))
        sys = build_constraints(K, a)
        res = max_weighted_sum(sys, [1] * K)
        out.append(OuterCheck(K, a, res.value, dof_outer_sum(K, a)))
    return out


def format_fraction(x: Fraction) -> str:
    x = Fraction(x)
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def write_constraints_csv(sys: ConstraintSystem, fh: TextIO) -> None:
    """CSV rows ``p,tuple,c1..cK,rhs``; users are 1-based and dash-joined."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["p", "tuple", *[f"c{i + 1}" for i in range(sys.K)], "rhs"])
    for con in sys.constraints:
        p = con.p if con.kind == "tuple" else 1
        writer.writerow([p, "-".join(str(u + 1) for u in con.users),
                         *[format_fraction(c) for c in con.coeffs], format_fraction(con.rhs)])
