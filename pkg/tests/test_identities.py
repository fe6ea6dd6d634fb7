import json
import math

import numpy as np
import pytest

from flipid import (
    CouplingAssignment,
    DisorderMeasure,
    chain,
    explicit,
    lemma1_check,
    lemma2_check,
    linear_lemma_check,
    replicon_two_ways,
    theorem1_functional,
    theorem2_mu_average,
    theorem3_linear_functionals,
    volume_scan,
)
from flipid.identities import FUNCTIONALS, ScanResult

GH16 = DisorderMeasure.gauss_hermite(16)


@pytest.mark.parametrize("check", [lemma1_check, lemma2_check, linear_lemma_check])
def test_variance_formulas_single_spin(check, single_spin, gh32):
    rep = check(single_spin, gh32, 0.5)
    assert rep.passed()
    assert rep.relative_residual < 1e-10


def test_lemma1_mean_and_report(chain3, gh32):
    rep = lemma1_check(chain3, gh32, 0.5)
    assert abs(rep.extra["mean"]["value"]) < 1e-12
    assert rep.lhs.value > 0
    assert rep.terms[0].label.startswith("b^2 IntInt k1")
    d = json.loads(rep.to_json())
    assert d["schema"] == "1" and d["name"] == "lemma1"
    assert rep.to_json() == lemma1_check(chain3, gh32, 0.5).to_json()


def test_lemma2_nontrivial_model_needs_corrected_sign(field_chain):
    rep = lemma2_check(field_chain, GH16, 0.5)
    assert rep.relative_residual < 1e-10
    assert abs(rep.extra["mean_residual"]["value"]) < 1e-12
    # the opposite sign on the h2 block leaves an O(beta^3) defect
    assert abs(rep.extra["display_residual"]["value"]) > 1e-3
    assert rep.lhs.value > 1e-3


def test_linear_lemma_nontrivial_model(field_chain):
    rep = linear_lemma_check(field_chain, GH16, 0.5)
    assert rep.relative_residual < 1e-10
    assert abs(rep.extra["mean_residual"]["value"]) < 1e-12
    assert abs(rep.extra["display_residual"]["value"]) > 1e-4


@pytest.mark.parametrize("check", [lemma1_check, lemma2_check, linear_lemma_check])
def test_beta_zero_everything_vanishes(check, chain3):
    rep = check(chain3, DisorderMeasure.gauss_hermite(8), 0.0, nodes=8)
    assert rep.lhs.value == 0.0
    assert all(t.value == 0.0 for t in rep.terms)


def test_empty_interior_gives_zero(gh32):
    rep = lemma1_check(chain(3, 0.3, subregion=[0]), gh32, 0.5, nodes=8)
    assert rep.lhs.value == 0.0 and all(t.value == 0.0 for t in rep.terms)


def test_mu_zero_degeneracy(gh32):
    m = chain(3, 0.0, 1.0, subregion=[0, 1])
    r1 = lemma1_check(m, gh32, 0.7)
    r2 = lemma2_check(m, gh32, 0.7)
    t1 = {t.label: t.value for t in r1.terms}
    t2 = [t.value for t in r2.terms]
    assert t2[0] == pytest.approx(r1.terms[0].value, abs=1e-10)
    assert abs(t2[1]) < 1e-10 and abs(t2[2]) < 1e-10
    assert t2[3] == pytest.approx(r1.terms[1].value, abs=1e-10)
    assert r2.lhs.value == pytest.approx(r1.lhs.value, abs=1e-10)
    assert len(t1) == 2


def test_monte_carlo_common_random_numbers(field_chain):
    me = DisorderMeasure.monte_carlo(5, 3000)
    rep = lemma2_check(field_chain, me, 0.5, nodes=24)
    assert rep.lhs.method == "monte-carlo"
    assert rep.residual_error > 0
    assert rep.passed()


def test_theorem1_full_matches_lemma2_blocks(field_chain):
    rep = lemma2_check(field_chain, GH16, 0.5)
    fv = theorem1_functional(field_chain, GH16, 0.5, "full")
    n2 = field_chain.subregion_size**2
    assert fv.value * n2 == pytest.approx(rep.rhs.value - rep.terms[0].value, abs=1e-12)
    assert set(fv.blocks) == {"magnetization", "mixed", "replicon"}


def test_theorem1_centered_matches_lemma1(chain3, gh32):
    rep = lemma1_check(chain3, gh32, 0.5)
    fv = theorem1_functional(chain3, gh32, 0.5, "centered")
    assert -(0.5**4) * fv.value * 4 == pytest.approx(rep.terms[1].value, abs=1e-14)
    # at beta = 0 the states are uniform and the replicon block is sum Delta^4 / n^2
    zero_beta = theorem1_functional(chain3, gh32, 0.0, "centered").value
    assert zero_beta == pytest.approx(np.pi**2 / 2 * 1.0 / 4, abs=1e-13)
    with pytest.raises(ValueError):
        theorem1_functional(chain3, gh32, 0.5, "half")
    with pytest.raises(ValueError, match="subregion"):
        theorem1_functional(chain(3), gh32, 0.5)


def test_theorem3_full_matches_linear_lemma(field_chain):
    rep = linear_lemma_check(field_chain, GH16, 0.5)
    fv = theorem3_linear_functionals(field_chain, GH16, 0.5, "full")
    n2 = field_chain.subregion_size**2
    assert fv.value * n2 == pytest.approx(rep.rhs.value - rep.terms[0].value, abs=1e-12)


def test_theorem3_mu_zero_single_spin_by_hand():
    # single spin, mu = 0: omega_t(sigma) = tanh(b t J), magnetization blocks vanish
    m = explicit(1, [[0, 0.0, 1.0]], subregion=[0])
    me = DisorderMeasure.gauss_hermite(40)
    b = 0.6
    fv = theorem3_linear_functionals(m, me, b, "full")
    for k in ("magnetization", "mc_a", "mc_b"):
        assert abs(fv.blocks[k]["value"]) < 1e-14
    # by hand: C12 at (t, s) = tanh(btJ) tanh(bsJ); C(t,t) = 1; sigma^2 = 1
    u, w = np.polynomial.hermite.hermgauss(40)
    J, w = np.sqrt(2) * u, w / np.sqrt(np.pi)
    x, wx = np.polynomial.legendre.leggauss(48)
    th = np.tanh(b * x[:, None] * J[None, :])  # (t, J)
    # one interaction: the replicon polynomial is (1 - tanh_t^2)(1 - tanh_s^2)
    rep = (1 - th[:, None, :] ** 2) * (1 - th[None, :, :] ** 2)
    T, S = np.meshgrid(x, x, indexing="ij")
    replicon = b**4 * np.einsum("t,s,ts,tsj,j->", wx, wx, T * S, rep, w)
    assert fv.blocks["replicon"]["value"] == pytest.approx(replicon, abs=1e-12)
    assert abs(fv.blocks["cc_fluct"]["value"]) < 1e-14
    assert abs(fv.blocks["cc_mixed"]["value"]) < 1e-14


def test_theorem2_degenerate_and_mu_independent(chain3, gh32):
    assert theorem2_mu_average(chain3, gh32, 0.5, (0.4, 0.4)).value == 0.0
    m0 = chain(3, 0.0, 1.0, subregion=[0, 1])
    fv = theorem2_mu_average(m0, gh32, 0.5, (0.2, 0.7), n_mu=3)
    ref = theorem1_functional(m0, gh32, 0.5, "centered").value
    assert fv.value == pytest.approx(0.5 * ref, rel=1e-10)
    assert abs(fv.blocks["m_fluct_0"]["value"]) < 1e-15


def test_theorem3_mu_variant(chain3, gh32):
    fv = theorem3_linear_functionals(chain3, gh32, 0.5, "mu-averaged", n_mu=3)
    assert set(fv.blocks) == {"cc_fluct", "cc_mixed", "replicon"}
    assert math.isfinite(fv.value)
    with pytest.raises(ValueError):
        theorem3_linear_functionals(chain3, gh32, 0.5, "partial")


def test_mu_average_monte_carlo_errors(chain3):
    fv = theorem2_mu_average(chain3, DisorderMeasure.monte_carlo(1, 256, n_blocks=16), 0.5, n_mu=2, nodes=12)
    assert fv.error > 0 and fv.method == "monte-carlo"


def test_replicon_identity(rng):
    worst = 0.0
    for i in range(30):
        n = int(rng.integers(1, 6))
        m = chain(n, rng.normal(), 1.0, field_mu=rng.normal(), subregion={"first": int(rng.integers(1, n + 1))})
        c = CouplingAssignment(m.mean + rng.standard_normal(m.n_interactions),
                               m.interior_mean + rng.standard_normal(m.n_interior))
        a, b, r = replicon_two_ways(m, c, rng.uniform(0, 2), rng.uniform(0, np.pi), rng.uniform(0, np.pi))
        worst = max(worst, r)
        aa, bb, _ = replicon_two_ways(m, c, 1.0, 0.8, 0.8)
        assert bb >= -1e-15
    assert worst < 1e-12
    m = chain(3, 0.3, subregion=[0, 1])
    c = CouplingAssignment(np.array([0.5, 1.0]), np.array([0.2]))
    assert replicon_two_ways(m, c, 0.0, 0.3, 2.0)[:2] == pytest.approx((0.25, 0.25), abs=1e-15)


def test_volume_scan_zero_functional():
    res = volume_scan(lambda L: chain(L, subregion={"fraction": 0.5}), [2, 3, 4], GH16, 0.5, "zero")
    assert res.degenerate and res.tau is None
    assert [r["value"] for r in res.rows] == [0.0, 0.0, 0.0]
    assert res.decays()


def test_scan_result_decay_logic(tmp_path):
    rows = [{"L": L, "n_sites": L, "n_subregion": L // 2, "value": v, "error": 0.01}
            for L, v in zip([4, 6, 8, 10, 12], [-1.0, -0.8, -0.6, -0.5, -0.4])]
    assert ScanResult("x", rows, -1.0, 0.01, False).decays()
    assert not ScanResult("x", rows, -0.4, 0.3, False).decays()
    slow = [dict(r, value=v) for r, v in zip(rows, [1.0, 0.9, 0.8, 0.7, 0.6])]
    assert not ScanResult("x", slow, -1.0, 0.01, False).decays()
    noise = [dict(r, value=v, error=1.0) for r, v in zip(rows, [0.1, -0.2, 0.3, 0.0, 0.1])]
    assert ScanResult("x", noise, 0.1, 0.9, False).decays()
    ScanResult("x", rows, -1.0, 0.01, False).to_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "L,n_sites,n_subregion,value,error" and len(lines) == 6


def test_volume_scan_variance_density_small():
    fam = lambda L: chain(L, 0.3, 1.0, subregion={"fraction": 0.5})
    res = volume_scan(fam, [4, 5, 6], DisorderMeasure.monte_carlo(3, 400), 0.5, "variance_density")
    assert len(res.rows) == 3 and all(r["value"] > 0 for r in res.rows)
    assert res.to_dict()["functional"] == "variance_density"
    assert set(FUNCTIONALS) >= {"theorem1_centered", "theorem1_full", "theorem2", "theorem3_full", "theorem3_mu"}
