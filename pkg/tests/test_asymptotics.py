import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from mpmath import mp
from scipy.integrate import solve_ivp
from scipy.special import airy

from dopesym.asymptotics import (
    LimitKernelSpec,
    LimitKind,
    WallFamily,
    airy_eval,
    airy_kernel,
    convergence_suite,
    ks_distance,
    sine_eval,
    tracy_widom,
    tracy_widom_cdf,
    wall_cdf,
    wall_matrix,
)
from dopesym.errors import DependencyError, InvalidArgument, RangeError

# converged value of F(0) recorded from orders 40 and 80
TW_F0 = 0.9693728283552634


def test_sine_examples():
    assert sine_eval("sine", 0.0, 0.0) == 1.0
    assert abs(sine_eval("sine", 1.0, 0.0)) < 1e-16
    assert sine_eval("sine", 0.5, 0.0) == pytest.approx(2 / math.pi, abs=1e-15)
    assert sine_eval("sine_wall", 0.0, 0.0) == pytest.approx(0.0, abs=1e-15)
    assert sine_eval("sine_wall", 0.5, 0.5) == pytest.approx(1.0, abs=1e-15)
    assert abs(sine_eval("sine_wall", 1.0, 2.0)) < 1e-15
    with pytest.raises(InvalidArgument):
        sine_eval("airy", 0, 0)


@given(st.floats(-30, 30), st.floats(-30, 30))
@settings(max_examples=200, deadline=None)
def test_limit_kernels_symmetric_bounded(x, y):
    for kind in ("sine", "sine_wall"):
        a, b = sine_eval(kind, x, y), sine_eval(kind, y, x)
        assert a == pytest.approx(b, abs=1e-15)
        assert abs(a) <= 2
    ax, ay = x / 3, y / 3
    assert airy_kernel(ax, ay) == pytest.approx(airy_kernel(ay, ax), abs=1e-12)


def test_limit_kernel_spec():
    spec = LimitKernelSpec(LimitKind.DISCRETE_SINE_WALL, 2.0, 1.0)
    assert spec(0, 0) == pytest.approx(wall_matrix(1, 0.5)[0, 0], abs=1e-15)
    with pytest.raises(InvalidArgument):
        LimitKernelSpec(LimitKind.DISCRETE_SINE_WALL, 0.0, 1.0)
    assert LimitKernelSpec("sine")(0.2, 0.2) == 1.0


def test_airy_zero_against_high_precision():
    mp.dps = 60
    assert airy_eval(0.0)[0] == pytest.approx(float(mp.airyai(0)), rel=1e-15)
    assert airy_eval(0.0)[1] == pytest.approx(float(mp.airyai(0, derivative=1)), rel=1e-15)
    assert airy_eval(0.0)[0] == pytest.approx(3 ** (-2 / 3) / math.gamma(2 / 3), rel=1e-15)


@pytest.mark.parametrize("x", [-50.0, -12.0, -7.5, -6.9, -3.0, -0.5, 0.3, 2.0, 6.9, 7.5, 12.0, 30.0])
def test_airy_against_scipy(x):
    ai, aip, _, _ = airy(x)
    a, ap = airy_eval(x)
    scale = max(1.0, abs(x)) ** 0.25
    if x > 0:
        assert a == pytest.approx(ai, rel=1e-12)
        assert ap == pytest.approx(aip, rel=1e-12)
    else:
        assert abs(a - ai) <= 1e-12 / scale
        assert abs(ap - aip) <= 1e-12 * scale


def test_airy_dense_against_mpmath():
    mp.dps = 40
    for x in np.linspace(-12, 12, 241):
        a, ap = airy_eval(x)
        A, Ap = float(mp.airyai(x)), float(mp.airyai(x, derivative=1))
        if x > 0:
            assert abs(a / A - 1) <= 5e-13 and abs(ap / Ap - 1) <= 5e-13
        else:
            assert abs(a - A) <= 5e-13 and abs(ap - Ap) <= 5e-13 * max(1.0, abs(x))


def test_airy_ode_residual():
    rng = np.random.default_rng(5)
    x = rng.uniform(-10, 10, 100)
    h = 2e-3
    a0 = airy_eval(x)[0]
    # Ai'' from a five-point difference of Ai'
    d = [airy_eval(x + j * h)[1] for j in (-2, -1, 1, 2)]
    app = (d[0] - 8 * d[1] + 8 * d[2] - d[3]) / (12 * h)
    assert np.max(np.abs(app - x * a0)) <= 1e-8


def test_airy_monotone_positive():
    x = np.arange(0, 10.01, 0.5)
    a = airy_eval(x)[0]
    assert np.all(a > 0) and np.all(np.diff(a) < 0)


def test_airy_range():
    with pytest.raises(RangeError):
        airy_eval(150.0)
    with pytest.raises(RangeError):
        airy_eval(float("nan"))


def test_airy_kernel_examples():
    assert airy_kernel(0.0, 0.0) == pytest.approx(airy_eval(0.0)[1] ** 2, abs=1e-16)
    for x in (-3.0, 0.7, 2.5):
        assert abs(airy_kernel(x, x + 1e-6) - airy_kernel(x, x)) <= 1e-6
    xs = np.linspace(-8, 0, 41)
    assert np.all(airy_kernel(xs, xs) > 0)


def _tw_painleve(s_values):
    """log F(s) = -∫_s^∞ (x - s) q(x)² dx with q'' = xq + 2q³, q ~ Ai at +∞."""
    x0 = 8.0
    a, ap, _, _ = airy(x0)

    def rhs(x, y):
        q, dq, u, v = y
        return [dq, x * q + 2 * q**3, -q * q, -x * q * q]

    sol = solve_ivp(rhs, (x0, min(s_values)), [a, ap, 0.0, 0.0], rtol=1e-12, atol=1e-16, dense_output=True)
    out = []
    for s in s_values:
        _, _, u, v = sol.sol(s)
        out.append(math.exp(-(v - s * u)))
    return np.array(out)


def test_tracy_widom_vs_painleve():
    s = np.array([-4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0])
    ours = np.array([tracy_widom_cdf(v, 60) for v in s])
    assert np.max(np.abs(ours - _tw_painleve(s))) < 1e-7


def test_tracy_widom_golden_and_orders():
    a = tracy_widom(0.0, 40).value
    b = tracy_widom(0.0, 80).value
    assert abs(a - b) <= 1e-8
    assert b == pytest.approx(TW_F0, abs=1e-12)


def test_tracy_widom_examples():
    assert abs(tracy_widom_cdf(8.0) - 1.0) <= 1e-10
    vals = [tracy_widom_cdf(s) for s in (-6, -4, -2, 0, 2)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert all(0 <= v <= 1 for v in vals)
    with pytest.raises(InvalidArgument):
        tracy_widom_cdf(-11.0)
    with pytest.raises(InvalidArgument):
        tracy_widom_cdf(0.0, 5)


def test_tracy_widom_geometric_convergence():
    ref = tracy_widom(-3.0, 120).value
    d = [abs(tracy_widom(-3.0, n).value - ref) for n in (10, 14, 18)]
    assert d[1] < d[0] and d[2] < d[1]


def test_tracy_widom_low_order_warns():
    assert tracy_widom(-8.0, 10).warning is not None


def test_wall_cdf_examples():
    assert wall_cdf(0.3, 2.0, 1.0) == 1.0
    assert wall_cdf(-5.0, 1.0, 1.0) == 1.0
    # integer-index reading: the (0, 0) entry vanishes
    assert wall_cdf(1.0, 2.0, 1.0, offset=0.0) == pytest.approx(1.0, abs=1e-15)
    rho = 0.5
    s00 = rho * (1 - math.sin(math.pi * rho) / (math.pi * rho))
    assert wall_cdf(1.0, 2.0, 1.0) == pytest.approx(1 - s00, abs=1e-15)
    M = np.eye(2) - wall_matrix(2, rho)
    assert wall_cdf(2.2, 2.0, 1.0) == pytest.approx(np.linalg.det(M), abs=1e-15)
    with pytest.raises(InvalidArgument):
        wall_cdf(1.0, 0.0, 1.0)


@given(st.floats(0.3, 3.0), st.floats(1.0, 4.0))
@settings(max_examples=40, deadline=None)
def test_wall_cdf_nonincreasing(d0, prod):
    # occupation 1/(δ0ρ0) must not exceed one
    r0 = prod / d0
    s = np.arange(0.0, 12.0, 0.5)
    v = [wall_cdf(x, d0, r0) for x in s]
    assert all(b <= a + 1e-12 for a, b in zip(v, v[1:]))


def test_wall_matrix_symmetric_bounded():
    M = wall_matrix(30, 0.7)
    assert np.array_equal(M, M.T)
    assert np.max(np.abs(M)) <= 2


def test_convergence_suite_band_small():
    fam = WallFamily.with_equilibrium(1.0, 0.5)
    rep = convergence_suite(fam, "band", (50, 100, 200))
    assert rep.passed and -1.4 <= rep.slope <= -0.6
    assert all(b < a for a, b in zip(rep.errors, rep.errors[1:]))
    d = rep.to_dict()
    assert {"regime", "N", "sup_error", "slope", "pass"} <= set(d)


def test_convergence_suite_jobs_independent():
    fam = WallFamily.with_equilibrium(1.0, 0.5)
    a = convergence_suite(fam, "wall", (50, 100, 200))
    b = convergence_suite(fam, "wall", (50, 100, 200), jobs=3)
    assert a.errors == b.errors


def test_convergence_suite_gap_void():
    rep = convergence_suite(WallFamily.with_equilibrium(1.0, 0.1), "gap_void", (50, 100, 200))
    assert rep.passed and rep.errors[-1] < 1e-3


def test_convergence_suite_errors():
    with pytest.raises(DependencyError):
        convergence_suite(WallFamily(1.0, 0.5), "band", (50, 100, 200))
    fam = WallFamily.with_equilibrium(1.0, 0.5)
    with pytest.raises(InvalidArgument):
        convergence_suite(fam, "band", (50, 100))
    with pytest.raises(InvalidArgument):
        convergence_suite(fam, "bulk", (50, 100, 200))
    with pytest.raises(InvalidArgument):
        WallFamily(1.0, 0.3).k_of(5)


def test_ks_distance():
    assert ks_distance([0.0] * 10, lambda x: 0.5) == pytest.approx(0.5)
    rng = np.random.default_rng(0)
    x = rng.uniform(size=20000)
    assert ks_distance(x, lambda v: min(max(v, 0), 1)) < 0.015
