import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from kmat import dof
from kmat.dof import Scheme


def _harmonic_lcm(K):
    # independent oracle: common denominator lcm(1..K)
    L = math.lcm(*range(1, K + 1))
    return Fraction(sum(L // k for k in range(1, K + 1)), L)


@pytest.mark.parametrize("K,expected", [(1, Fraction(1)), (3, Fraction(11, 6)), (5, Fraction(137, 60))])
def test_harmonic_values(K, expected):
    assert dof.harmonic(K) == expected == _harmonic_lcm(K)


@pytest.mark.parametrize("K", range(1, 25))
def test_harmonic_matches_lcm_oracle(K):
    assert dof.harmonic(K) == _harmonic_lcm(K)


def test_harmonic_rejects_zero():
    with pytest.raises(ValueError):
        dof.harmonic(0)


def test_outer_sum_spot_values():
    assert dof.dof_outer_sum(2, 0) == Fraction(4, 3)
    assert dof.dof_outer_sum(5, Fraction(1, 2)) == Fraction(985, 274)
    for K in range(2, 12):
        assert dof.dof_outer_sum(K, 1) == K


def test_outer_sum_decimal_string_is_exact():
    assert dof.dof_outer_sum(5, "0.5") == Fraction(985, 274)
    assert isinstance(dof.dof_outer_sum(5, 0.5), float)
    assert dof.dof_outer_sum(5, 0.5) == pytest.approx(985 / 274)


@pytest.mark.parametrize("bad", [-0.1, Fraction(11, 10), "2"])
def test_alpha_domain(bad):
    with pytest.raises(ValueError):
        dof.dof_outer_sum(3, bad)


def test_k_domain():
    with pytest.raises(ValueError):
        dof.dof_outer_sum(1, 0)
    with pytest.raises(ValueError):
        dof.dof_altmat_limit(1)


def test_mat_values():
    assert dof.dof_mat(2) == Fraction(4, 3)
    assert dof.dof_mat(3) == Fraction(18, 11)
    assert dof.dof_mat(5) == Fraction(300, 137)
    assert dof.dof_mat(2) == dof.dof_outer_sum(2, 0)


def test_zf_values():
    assert dof.dof_zf(4, 1) == 4
    assert dof.dof_zf(7, 0) == 0
    assert dof.dof_zf(5, Fraction(1, 2)) == Fraction(5, 2)


def test_altmat_limit_values():
    assert dof.dof_altmat_limit(3) == Fraction(3, 2)
    assert dof.dof_altmat_limit(2) == Fraction(4, 3)
    assert dof.dof_altmat_limit(5) == Fraction(5, 3)


def test_kmat_values():
    assert dof.dof_kmat(5, Fraction(1, 2)) == Fraction(10, 3)
    for K in range(2, 9):
        assert dof.dof_kmat(K, 1) == K


def test_kmat_finite_n_substitution():
    assert dof.dof_kmat(3, Fraction(1, 2), altmat_dof=Fraction(10, 7)) == Fraction(1, 2) * Fraction(10, 7) + Fraction(3, 2)


@given(st.fractions(min_value=0, max_value=1, max_denominator=1000))
def test_k2_kmat_is_optimal(a):
    assert dof.dof_kmat(2, a) == dof.dof_outer_sum(2, a) == (4 + 2 * a) / 3


@given(st.integers(2, 10), st.fractions(min_value=0, max_value=1, max_denominator=200))
def test_decomposition_identity(K, a):
    # clear denominators: H_K * outer == H_K * ((1-a) K/H_K + a K)
    hk = dof.harmonic(K)
    assert hk * dof.dof_outer_sum(K, a) == (1 - a) * K + a * K * hk


def test_sandwich_grid():
    for K in range(2, 11):
        for i in range(21):
            a = Fraction(i, 20)
            outer = dof.dof_outer_sum(K, a)
            assert dof.dof_zf(K, a) <= outer
            assert dof.dof_kmat(K, a) <= outer
            assert dof.dof_mat(K) <= outer


def test_monotonicity():
    for K in range(2, 11):
        vals_k = [dof.dof_kmat(K, Fraction(i, 20)) for i in range(21)]
        vals_o = [dof.dof_outer_sum(K, Fraction(i, 20)) for i in range(21)]
        assert vals_k == sorted(vals_k)
        assert vals_o == sorted(vals_o)
    lims = [dof.dof_altmat_limit(K) for K in range(2, 30)]
    assert all(a < b for a, b in zip(lims, lims[1:]))
    assert all(x < 2 for x in lims)


def test_crossover():
    assert dof.kmat_mat_crossover(3) == Fraction(1, 11)
    assert dof.kmat_mat_crossover(2) == 0
    for K in range(3, 11):
        a = dof.kmat_mat_crossover(K)
        assert 0 < a < 1
        assert dof.dof_kmat(K, a) == dof.dof_mat(K)  # substitution residual is exactly 0


def test_dof_value_bounds():
    with pytest.raises(ValueError):
        dof.DofValue(Scheme.ZF, 3, Fraction(0), Fraction(4))
    assert dof.DofValue(Scheme.ZF, 3, Fraction(0), Fraction(0)).exact


def test_figure_tables_rows():
    rows = dof.figure_tables([5], [Fraction(1, 2)])
    got = {r.scheme: r.value for r in rows}
    assert got[Scheme.KMAT] == Fraction(10, 3) > got[Scheme.ZF] == Fraction(5, 2) > got[Scheme.MAT] == Fraction(300, 137)
    k2 = {r.scheme: r.value for r in dof.figure_tables([2], [0])}
    assert k2[Scheme.MAT] == k2[Scheme.ALTMAT_LIMIT] == Fraction(4, 3)
    a1 = {r.scheme: r.value for r in dof.figure_tables([5], [1])}
    assert a1[Scheme.KMAT] == a1[Scheme.ZF] == a1[Scheme.OUTER] == 5


def test_figure_tables_float_alpha():
    rows = dof.figure_tables([3], [0.25])
    assert all(isinstance(r.value, float) for r in rows)
