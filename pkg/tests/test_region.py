import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from kmat import region
from kmat.dof import dof_kmat, dof_outer_sum

ALPHAS = [Fraction(0), Fraction(1, 4), Fraction(1, 2), Fraction(3, 4), Fraction(1)]


def test_k2_constraints():
    sys_ = region.build_constraints(2, Fraction(1, 3))
    tup = sys_.tuple_constraints
    assert len(tup) == 2
    rhs = 1 + Fraction(1, 3) / 2
    assert {(c.coeffs, c.rhs) for c in tup} == {
        ((Fraction(1), Fraction(1, 2)), rhs),
        ((Fraction(1, 2), Fraction(1)), rhs),
    }
    assert len(sys_.box_constraints) == 2


@pytest.mark.parametrize("K", range(2, 7))
def test_tuple_count(K):
    sys_ = region.build_constraints(K, 0)
    expected = sum(len(list(itertools.permutations(range(K), p))) for p in range(2, K + 1))
    assert len(sys_.tuple_constraints) == expected == region.tuple_constraint_count(K)
    assert len({c.users for c in sys_.tuple_constraints}) == expected


def test_k3_has_12_tuple_constraints():
    assert len(region.build_constraints(3, 0).tuple_constraints) == 12


def test_restricted_enumeration():
    sys_ = region.build_constraints(3, 0, ordered_subsets=False)
    assert len(sys_.tuple_constraints) == 2 + 6
    assert not sys_.ordered_subsets


def test_coefficient_pattern():
    for c in region.build_constraints(4, Fraction(1, 2)).tuple_constraints:
        nz = sorted((x for x in c.coeffs if x), reverse=True)
        assert nz == [Fraction(1, k) for k in range(1, c.p + 1)]


def test_alpha_one_ones_tight_for_tuples():
    K = 4
    sys_ = region.build_constraints(K, 1)
    ones = [Fraction(1)] * K
    assert region.is_member(ones, sys_)
    assert all(c.lhs(ones) == c.rhs for c in sys_.tuple_constraints)


def test_membership_examples():
    sys_ = region.build_constraints(2, 0)
    pt = [Fraction(2, 3), Fraction(2, 3)]
    assert region.is_member(pt, sys_)
    assert sys_.tuple_constraints[0].lhs(pt) == 1
    assert not region.is_member([1, 1], sys_)
    for K in range(2, 6):
        assert region.is_member([0] * K, region.build_constraints(K, Fraction(1, 3)))


def test_negative_point_reported():
    bad = region.violated([Fraction(-1, 10), 0], region.build_constraints(2, 0))
    assert [c.kind for c in bad] == ["lower"]


def test_k2_polytope_scaled_form():
    a = Fraction(2, 7)
    sys_ = region.build_constraints(2, a)
    scaled = {tuple(2 * x for x in c.coeffs) + (2 * c.rhs,) for c in sys_.tuple_constraints}
    assert scaled == {(2, 1, 2 + a), (1, 2, 2 + a)}


@pytest.mark.parametrize("K", range(2, 6))
@pytest.mark.parametrize("alpha", ALPHAS)
def test_lp_matches_formula(K, alpha):
    res = region.max_weighted_sum(region.build_constraints(K, alpha), [1] * K)
    assert res.certified
    assert res.value == dof_outer_sum(K, alpha)


def test_lp_spot_values():
    res = region.max_weighted_sum(region.build_constraints(2, Fraction(1, 2)), [1, 1])
    assert res.value == Fraction(5, 3)
    assert res.point == (Fraction(5, 6), Fraction(5, 6))
    assert region.max_weighted_sum(region.build_constraints(5, 0), [1] * 5).value == Fraction(300, 137)
    for a in ALPHAS:
        assert region.max_weighted_sum(region.build_constraints(4, a), [1, 0, 0, 0]).value == 1


def _float_lp(sys_, w):
    A, b = sys_.float_matrix()
    res = linprog(-np.asarray(w, float), A_ub=A, b_ub=b, bounds=[(0, None)] * sys_.K, method="highs")
    assert res.status == 0
    return -res.fun


@settings(max_examples=25, deadline=None)
@given(
    st.integers(2, 4),
    st.fractions(min_value=0, max_value=1, max_denominator=12),
    st.lists(st.integers(0, 6), min_size=4, max_size=4),
)
def test_lp_agrees_with_float_solver(K, alpha, w):
    sys_ = region.build_constraints(K, alpha)
    w = w[:K]
    res = region.max_weighted_sum(sys_, w)
    assert float(res.value) == pytest.approx(_float_lp(sys_, w), abs=1e-9)
    assert region.is_member(res.point, sys_)


@settings(max_examples=15, deadline=None)
@given(st.permutations(range(4)), st.lists(st.integers(0, 5), min_size=4, max_size=4))
def test_permutation_symmetry(perm, w):
    sys_ = region.build_constraints(4, Fraction(1, 3))
    v1 = region.max_weighted_sum(sys_, w).value
    v2 = region.max_weighted_sum(sys_, [w[p] for p in perm]).value
    assert v1 == v2


@pytest.mark.parametrize("K", range(2, 7))
def test_symmetric_point_optimal_and_kmat_inside(K):
    for a in ALPHAS:
        sys_ = region.build_constraints(K, a)
        outer = dof_outer_sum(K, a)
        assert region.is_member([outer / K] * K, sys_)
        assert region.is_member([dof_kmat(K, a) / K] * K, sys_)


def test_verify_outer_formula_limits():
    assert all(c.match for c in region.verify_outer_formula(3, ALPHAS))
    assert region.verify_outer_formula(6, [1])[0].lp_value == 6
    with pytest.raises(ValueError):
        region.verify_outer_formula(7, [0])


def test_lp_input_validation():
    sys_ = region.build_constraints(2, 0)
    with pytest.raises(ValueError):
        region.max_weighted_sum(sys_, [1, -1])
    with pytest.raises(ValueError):
        region.max_weighted_sum(sys_, [1])
    with pytest.raises(ValueError):
        region.violated([0, 0, 0], sys_)


def test_constraints_csv():
    import io
    buf = io.StringIO()
    region.write_constraints_csv(region.build_constraints(2, Fraction(1, 2)), buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "p,tuple,c1,c2,rhs"
    assert lines[1] == "2,1-2,1,1/2,5/4"
    assert len(lines) == 1 + 2 + 2
