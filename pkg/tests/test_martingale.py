import csv

import numpy as np
import pytest

from flipid import DisorderMeasure, bound_check, chain, decompose, explicit, lemma1_check, tail_vanishing_check
from flipid.martingale import QUARTIC_COEFFICIENT, flip_difference, r0

GH = DisorderMeasure.gauss_hermite(24)


def test_single_coupling_one_term(single_spin):
    dec = decompose(single_spin, DisorderMeasure.gauss_hermite(32), 0.5, "F0")
    assert len(dec.psi_sq) == 1
    assert dec.psi_sq[0] == pytest.approx(dec.variance, abs=1e-15)
    # X0 = ln cosh(bJ) - ln cosh(b(2 mu - J)) in closed form
    u, w = np.polynomial.hermite.hermgauss(32)
    J = 0.3 + np.sqrt(2) * u
    x0 = np.log(np.cosh(0.5 * J)) - np.log(np.cosh(0.5 * (0.6 - J)))
    assert dec.variance == pytest.approx(w @ x0**2 / np.sqrt(np.pi), rel=1e-13)


@pytest.mark.parametrize("flip", ["F0", "F"])
def test_orthogonality_and_variance(field_chain, flip):
    dec = decompose(field_chain, GH, 0.5, flip)
    assert dec.orthogonality_error() < 1e-12
    assert dec.decomposition_error() < 1e-12
    assert dec.telescoping_error < 1e-12
    assert dec.n_couplings == 3 and dec.ordering[0] == (0,)


def test_tail_vanishes_under_centered_flip(field_chain):
    dec = decompose(field_chain, GH, 0.5, "F0")
    rep = tail_vanishing_check(dec)
    assert rep.passed and rep.vanishes and len(rep.tail_max) == 3
    assert abs(dec.mean) < 1e-15


def test_tail_under_full_flip(field_chain):
    dec = decompose(field_chain, GH, 0.5, "F")
    rep = tail_vanishing_check(dec, interior_means=field_chain.interior_mean)
    assert not rep.vanishes and rep.passed and not rep.expected_to_vanish
    assert max(rep.tail_max) > 1e-3
    m0 = chain(2, 0.3, 1.0, field_mu=0.0, field_delta=0.7, subregion=[0])
    dec0 = decompose(m0, GH, 0.5, "F")
    rep0 = tail_vanishing_check(dec0, interior_means=m0.interior_mean)
    assert rep0.expected_to_vanish and rep0.vanishes and rep0.passed


def test_decompose_rejects_bad_inputs(field_chain):
    with pytest.raises(ValueError, match="gauss-hermite"):
        decompose(field_chain, DisorderMeasure.monte_carlo(1, 10), 0.5)
    with pytest.raises(ValueError, match="cap"):
        decompose(chain(8), GH, 0.5)
    with pytest.raises(ValueError, match="too large"):
        decompose(chain(6), DisorderMeasure.gauss_hermite(64), 0.5)
    with pytest.raises(ValueError):
        flip_difference(field_chain, np.zeros(3), 0.5, "G")


def test_bound_single_spin(single_spin, gh32):
    var = lemma1_check(single_spin, gh32, 0.5).lhs.value
    rep = bound_check(single_spin, 0.5, var, "F0")
    assert rep.passed
    assert rep.bound == pytest.approx(0.25 + QUARTIC_COEFFICIENT * 0.0625)
    assert rep.meta["bound_with_alternate"] > rep.bound
    zero = bound_check(single_spin, 0.0, 0.0, "F0")
    assert zero.bound == 0.0 and zero.passed


def test_bound_full_flip_and_override(field_chain):
    dec = decompose(field_chain, GH, 0.5, "F")
    rep = bound_check(field_chain, 0.5, dec.variance, "F")
    assert rep.passed and rep.volume == 2
    assert not bound_check(field_chain, 0.5, dec.variance, "F", rate=1e-9).passed
    assert bound_check(field_chain, 0.5, 1.0, "F0", error=1.0, rate=0.1).passed
    assert r0(0.0, 3.0) == 0.0
    with pytest.raises(ValueError):
        bound_check(field_chain, 0.5, 1.0, "H")


def test_csv_dump(field_chain, tmp_path):
    dec = decompose(field_chain, DisorderMeasure.gauss_hermite(8), 0.5, "F0")
    dec.to_csv(tmp_path / "d.csv")
    rows = list(csv.reader(open(tmp_path / "d.csv")))
    assert rows[0] == ["k", "mean_A_k", "max_abs_A_k", "psi_sq"]
    assert len(rows) == 1 + 4 and rows[-1][3] == ""
    assert dec.to_dict()["sum_psi_sq"] == pytest.approx(dec.variance)
