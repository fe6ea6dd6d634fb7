import numpy as np
import pytest

from flipid import CouplingAssignment, DisorderMeasure, chain, flip_centered, flip_full
from flipid.gibbs import log_partition
from flipid.interpolation import (
    PATHS,
    gauss_legendre,
    get_path,
    interp_hamiltonian,
    kernel_eval,
    pressure_difference,
    quadrature_2d,
)


@pytest.fixture
def setup(rng):
    m = chain(4, 0.3, 1.0, field_mu=0.2, subregion=[0, 1])
    J = m.mean + m.std * rng.standard_normal((5, m.n_interactions))
    Jt = m.interior_mean + m.std[: m.n_interior] * rng.standard_normal((5, m.n_interior))
    return m, CouplingAssignment(J, Jt)


def test_endpoints(setup):
    m, c = setup
    k = m.n_interior
    for name, flip in (("TrigF", flip_full), ("TrigF0", flip_centered), ("Linear", flip_full)):
        p = get_path(name)
        assert np.allclose(p.fields(m, c, p.start), c.J, atol=1e-15)
        assert np.allclose(p.fields(m, c, p.end), flip(c, m).J, atol=1e-14)
    # remainder untouched along the path
    F = get_path("TrigF").fields(m, c, 1.1)
    assert np.array_equal(F[:, k:], c.J[:, k:])


def test_fields_broadcast_grid(setup):
    m, c = setup
    ts = np.linspace(0, np.pi, 7)
    F = get_path("TrigF0").fields(m, c, ts[:, None])
    assert F.shape == (7, 5, m.n_interactions)
    assert np.allclose(F[3], get_path("TrigF0").fields(m, c, ts[3]))


def test_domain_and_tilde_errors(setup):
    m, c = setup
    with pytest.raises(ValueError, match="domain"):
        get_path("Linear").fields(m, c, 1.5)
    with pytest.raises(ValueError, match="tilde"):
        get_path("TrigF").fields(m, CouplingAssignment(c.J), 0.5)
    with pytest.raises(ValueError):
        get_path("Spiral")
    assert not PATHS["Linear"].needs_tilde


def test_interp_hamiltonian_matches_fields(setup):
    m, c = setup
    sig = np.arange(16)
    one = CouplingAssignment(c.J[0], c.J_tilde[0])
    e = interp_hamiltonian("TrigF", 0.4, m, one, sig)
    F = get_path("TrigF").fields(m, one, 0.4)
    from flipid.model import parities
    assert np.allclose(e, -(parities(m, sig) @ F))


def test_kernels():
    t, s = 0.7, 0.2
    assert kernel_eval("k1", t, s) == pytest.approx(np.cos(0.5))
    assert kernel_eval("k2", t, s) == pytest.approx(np.sin(0.5) ** 2)
    assert kernel_eval("h1", t, t) == pytest.approx((np.cos(t) - np.sin(t)) ** 2)
    assert kernel_eval("h2", t, t) == 0.0
    with pytest.raises(ValueError):
        kernel_eval("k9", t, s)


def test_quadrature_2d_closed_forms():
    # IntInt over [0, pi]^2 of cos(t - s) = 4, of sin^2(t - s) = pi^2 / 2
    assert quadrature_2d(lambda t, s: np.cos(t - s), (0, np.pi)) == pytest.approx(4.0, abs=1e-13)
    assert quadrature_2d(lambda t, s: np.sin(t - s) ** 2, (0, np.pi)) == pytest.approx(np.pi**2 / 2, abs=1e-13)
    v, change = quadrature_2d(lambda t, s: t**3 * s**2, (-1, 1), nodes=4, report=True)
    assert v == pytest.approx(0.0, abs=1e-15) and change < 1e-14
    x, w = gauss_legendre((0, 2), 5)
    assert w.sum() == pytest.approx(2.0) and np.all((x > 0) & (x < 2))
    with pytest.raises(ValueError):
        quadrature_2d(lambda t, s: t, (0, 1), nodes=1)


def test_pressure_difference_routes(setup):
    m, c = setup
    for name in PATHS:
        a = pressure_difference(name, m, c, 0.8, route="path")
        b = pressure_difference(name, m, c, 0.8, route="direct")
        assert np.allclose(a, b, atol=1e-13)
    assert np.allclose(pressure_difference("TrigF", m, c, 0.0), 0.0)
    with pytest.raises(ValueError):
        pressure_difference("TrigF", m, c, 0.8, route="scenic")


def test_pressure_derivative_along_path(setup):
    """d/dt ln Z(t) = beta sum_X F'_X(t) omega_t(sigma_X), checked by central differences."""
    from flipid.gibbs import gibbs_moments

    m, c = setup
    one = CouplingAssignment(c.J[0], c.J_tilde[0])
    p = get_path("TrigF0")
    t, h, beta = 1.0, 1e-5, 0.7
    num = (log_partition(m, p.fields(m, one, t + h), beta) - log_partition(m, p.fields(m, one, t - h), beta)) / (2 * h)
    dF = (p.fields(m, one, t + h) - p.fields(m, one, t - h)) / (2 * h)
    mom = gibbs_moments(m, p.fields(m, one, t), beta)
    k = m.n_interior
    assert num == pytest.approx(beta * dF[:k] @ mom.one, rel=1e-8)
