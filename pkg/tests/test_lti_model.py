import numpy as np
import pytest

from psmpc.errors import InvalidModel
from psmpc.lti_model import (
    ContinuousLti,
    Translator,
    integrate_plant,
    stacked_rank_ok,
    translate,
    zoh_discretize,
)


def test_zoh_zero_dynamics():
    sys = ContinuousLti(A=np.zeros((2, 2)), B=np.array([[1.0, 0.0], [0.0, 2.0]]))
    d = zoh_discretize(sys, 0.1)
    assert np.allclose(d.Ad, np.eye(2))
    assert np.allclose(d.Bd, 0.1 * sys.B)


def test_zoh_scalar_closed_form():
    a, b, dt = -1.0, 2.0, 0.05
    sys = ContinuousLti(A=[[a]], B=[[b]])
    d = zoh_discretize(sys, dt)
    assert abs(d.Ad[0, 0] - np.exp(-0.05)) < 1e-14
    assert abs(d.Bd[0, 0] - 2.0 * (1.0 - np.exp(-0.05))) < 1e-14


def test_zoh_double_integrator():
    dt = 0.3
    sys = ContinuousLti(A=[[0.0, 1.0], [0.0, 0.0]], B=[[0.0], [1.0]])
    d = zoh_discretize(sys, dt)
    assert np.allclose(d.Ad, [[1.0, dt], [0.0, 1.0]], atol=1e-14)
    assert np.allclose(d.Bd.ravel(), [dt**2 / 2, dt], atol=1e-14)


def test_zoh_semigroup():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((3, 3))
    sys = ContinuousLti(A=A, B=rng.standard_normal((3, 2)))
    d1 = zoh_discretize(sys, 0.07)
    d2 = zoh_discretize(sys, 0.14)
    assert np.max(np.abs(d2.Ad - d1.Ad @ d1.Ad)) < 1e-10


def test_zoh_rejects_bad_input():
    sys = ContinuousLti(A=np.zeros((2, 2)), B=np.zeros((2, 1)))
    with pytest.raises(InvalidModel):
        zoh_discretize(sys, 0.0)
    with pytest.raises(InvalidModel):
        ContinuousLti(A=np.array([[np.nan, 0], [0, 0]]), B=np.zeros((2, 1)))


def test_integrate_equilibrium():
    sys = ContinuousLti(A=[[0.0, 1.0], [-1.0, -0.5]], B=[[0.0], [1.0]])
    out = integrate_plant(sys, np.zeros(2), np.zeros(1), dt=0.1)
    assert np.allclose(out, 0.0)


def test_integrate_matches_zoh_without_disturbance():
    rng = np.random.default_rng(11)
    A = np.array([[0.0, 1.0, 0.0], [-2.0, -0.3, 0.5], [0.1, 0.0, -1.0]])
    B = np.array([[0.0], [1.0], [0.3]])
    sys = ContinuousLti(A=A, B=B)
    d = zoh_discretize(sys, 0.01)
    for _ in range(1000):
        xi = rng.uniform(-1, 1, 3)
        mu = rng.uniform(-1, 1, 1)
        ref = d.Ad @ xi + d.Bd @ mu
        out = integrate_plant(sys, xi, mu, dt=0.01, substeps=4)
        assert np.max(np.abs(out - ref)) < 1e-8


def test_integrate_constant_disturbance_exact():
    sys = ContinuousLti(A=[[0.0]], B=[[0.0]])
    c, dt = 0.37, 0.2
    out = integrate_plant(sys, np.array([1.5]), np.zeros(1),
                          nu_fn=lambda t: np.array([c]), dt=dt)
    assert abs(out[0] - (1.5 + c * dt)) < 1e-12


def test_translate_identity_and_projection():
    tr = Translator.identity(4)
    xi = np.array([1.0, 2.0, 3.0, 4.0])
    assert np.array_equal(translate(tr, xi), xi)
    sel = Translator(np.array([[1.0, 0.0]]))
    assert np.array_equal(translate(sel, np.array([5.0, 7.0])), np.array([5.0]))
    with pytest.raises(InvalidModel):
        translate(sel, np.array([1.0, 2.0, 3.0]))


def test_stacked_rank_check():
    t1 = Translator(np.array([[1.0, 0.0]]))
    t2 = Translator(np.array([[0.0, 1.0]]))
    assert stacked_rank_ok([t1, t2], 2)
    assert not stacked_rank_ok([t1, t1], 2)


def test_translator_requires_full_row_rank():
    with pytest.raises(InvalidModel):
        Translator(np.array([[1.0, 0.0], [2.0, 0.0]]))
