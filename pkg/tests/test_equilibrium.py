import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dopesym.ensembles import extract_potential, hahn_ensemble
from dopesym.equilibrium import (
    HahnEquilibrium,
    build_field,
    classify,
    critical_c,
    edge_exponent,
    ellipse_y,
    hahn_beta,
    hahn_closed_forms,
    hahn_field,
    kkt_residuals,
    solve_equilibrium,
    tau0,
    variational_derivative,
)
from dopesym.errors import InvalidArgument


def test_build_field_closed_form():
    phi = build_field(lambda x: np.zeros_like(x), -1.0, 1.0)
    assert float(phi(0.0)) == pytest.approx(-2.0, abs=1e-15)
    V = lambda x: 0.3 * np.asarray(x) ** 2
    phi = build_field(V, -1.0, 1.0)
    assert float(phi(1.0)) == pytest.approx(0.3 + 2 * math.log(2) - 2, abs=1e-14)
    x = np.linspace(-1, 1, 101)
    assert np.max(np.abs(phi(x) - phi(-x))) < 1e-12


def test_build_field_table():
    xs = np.linspace(-0.5, 0.5, 50)
    phi = build_field((xs, xs**2), -0.5, 0.5)
    assert float(phi.V(0.1)) == pytest.approx(0.01, abs=1e-12)


@pytest.fixture(scope="module")
def he05():
    return solve_equilibrium(hahn_field(1.0).as_field(), c=0.5, gridsize=512)


def test_solver_constraints(he05):
    em = he05
    assert abs(em.mass() - 1) <= 1e-8
    assert np.all(em.density >= 0)
    assert np.all(em.density <= em.upper + 1e-8)
    assert em.residual <= 1e-8


def test_solver_energy_monotone(he05):
    E = he05.energies
    assert np.all(np.diff(E) <= 1e-12 * np.abs(E[:-1]).max())


def test_solver_symmetry(he05):
    assert np.max(np.abs(he05.density - he05.density[::-1])) <= 1e-6


def test_solver_band_edge_and_kkt(he05):
    beta = hahn_closed_forms(A=1.0, c=0.5).beta
    assert beta == pytest.approx(0.4930066485916347, abs=1e-15)
    assert max(abs(max(he05.band_edges()) - beta), abs(min(he05.band_edges()) + beta)) < 0.01
    kkt = kkt_residuals(he05)
    tol = 1e-4 * kkt["scale"]
    assert kkt["band"] <= tol and kkt["void"] <= tol and kkt["saturated"] <= tol
    assert [r.kind for r in he05.regions] == ["saturated", "band", "saturated"]


def test_solver_matches_analytic_density(he05):
    an = HahnEquilibrium(1.0, 0.5)
    x = he05.grid
    inner = np.abs(x) < an.beta - 0.02
    assert np.max(np.abs(he05.density[inner] - an.density(x[inner]))) < 1e-3


def test_solver_from_extracted_potential():
    N = 400
    e = hahn_ensemble(N, N + 1, N + 1, 1)
    phi = build_field((e.nodes.values, extract_potential(e)), -0.5, 0.5, 1.0)
    em = solve_equilibrium(phi, c=0.5, gridsize=512)
    assert abs(max(em.band_edges()) - hahn_beta(1.0, 0.5)) < 0.01


def test_solver_near_full():
    em = solve_equilibrium(hahn_field(1.0).as_field(), c=1 - 1e-9, gridsize=128)
    assert np.max(np.abs(em.density - em.upper)) < 1e-6


def test_solver_input_validation():
    with pytest.raises(InvalidArgument):
        solve_equilibrium(hahn_field(1.0).as_field(), c=1.0)
    with pytest.raises(InvalidArgument):
        solve_equilibrium(hahn_field(1.0).as_field(), c=0.5, gridsize=32)


def test_variational_derivative_shift(he05):
    phi = hahn_field(1.0).as_field()
    v = variational_derivative(he05, phi, 0.5)
    shifted = build_field(lambda x: phi.V(x) + 3.0, phi.a, phi.b, phi.rho0)
    v2 = variational_derivative(he05, shifted, 0.5)
    assert np.allclose(v2 - v, 3.0, atol=1e-12)
    assert np.max(np.abs(v - v[::-1])) < 1e-9
    em2 = solve_equilibrium(shifted, c=0.5, gridsize=512)
    assert em2.multiplier - he05.multiplier == pytest.approx(3.0, abs=1e-6)
    assert [(r.kind, r.i0, r.i1) for r in em2.regions] == [(r.kind, r.i0, r.i1) for r in he05.regions]


def test_classify_synthetic():
    n = 90
    up = np.full(n, 2.0)
    regs = classify(up.copy(), up)
    assert [r.kind for r in regs] == ["saturated"]
    d = np.zeros(n)
    d[30:60] = 1.0
    regs = classify(d, up)
    assert [r.kind for r in regs] == ["void", "band", "void"]
    d[10] = 1.0  # a single stray cell is absorbed
    assert [r.kind for r in classify(d, up)] == ["void", "band", "void"]


@pytest.mark.parametrize("c,gap", [(0.3, "void"), (0.6, "saturated")])
def test_three_regions(c, gap):
    em = solve_equilibrium(hahn_field(1.0).as_field(), c=c, gridsize=512)
    assert [r.kind for r in em.regions] == [gap, "band", gap]
    assert HahnEquilibrium(1.0, c).gap == gap


@pytest.mark.parametrize("c", [0.1, 0.2, 0.6, 0.8])
def test_square_root_edge(c):
    em = solve_equilibrium(hahn_field(1.0).as_field(), c=c, gridsize=512)
    p = edge_exponent(em, hahn_beta(1.0, c), cells=10)
    assert 0.4 <= p <= 0.6


def test_json_export(he05, tmp_path):
    path = tmp_path / "eq.json"
    he05.to_json(path)
    d = json.loads(path.read_text())
    assert {"grid", "density", "regions", "l_c", "residual"} <= set(d)
    assert len(d["grid"]) == len(d["density"]) == 512


def test_closed_form_examples():
    assert critical_c(1.0) == pytest.approx(math.sqrt(2) - 1, abs=1e-15)
    assert ellipse_y(2.0, 0.0) == pytest.approx(math.sqrt(3), abs=1e-15)
    assert tau0(2.0) == pytest.approx(-math.sqrt(3) / 2, abs=1e-15)
    cf = hahn_closed_forms(A=1.0, c=0.5, lam=2.0, tau=0.0)
    assert cf.c_A == pytest.approx(0.41421356237, abs=1e-10)
    with pytest.raises(InvalidArgument):
        hahn_closed_forms(A=1.0, c=1.5)
    with pytest.raises(InvalidArgument):
        hahn_closed_forms(lam=1.0, tau=2.0)


@given(lam=st.floats(0.05, 20), r=st.floats(-1, 1))
@settings(max_examples=200, deadline=None)
def test_ellipse_identity(lam, r):
    tau = r * math.sqrt(3) * lam / 2
    cf = hahn_closed_forms(lam=lam, tau=tau)
    beta = hahn_beta(cf.A_hex, 1 - cf.c_hex)
    assert abs(2 / cf.c_hex * beta - cf.ellipse_y) <= 1e-10 * max(1.0, cf.ellipse_y)


def test_tau0_is_regime_threshold():
    # at τ₀ the dual fraction 1 - c meets the critical value c_A
    for lam in (0.5, 1.0, 2.0, 3.0):
        cf = hahn_closed_forms(lam=lam, tau=tau0(lam))
        assert 1 - cf.c_hex == pytest.approx(critical_c(cf.A_hex), abs=1e-12)


@pytest.mark.parametrize("A,c,family", [(1.0, 0.3, "hahn"), (1.0, 0.6, "hahn"), (0.0, 0.5, "associated_hahn"),
                                         (0.4, 0.2, "associated_hahn"), (2.0, 0.9, "hahn")])
def test_analytic_density_normalized(A, c, family):
    he = HahnEquilibrium(A, c, family)
    assert he.mass() == pytest.approx(1.0, abs=1e-10)
    x = np.linspace(-0.5, 0.5, 1001)
    d = he.density(x)
    assert np.all(d >= -1e-12) and np.all(d <= 1 / c + 1e-9)
