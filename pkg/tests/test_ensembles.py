import io
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gammaln

from dopesym.ensembles import (
    Ensemble,
    Mode,
    associated_hahn_weight,
    build_equispaced_nodes,
    build_halfhex_line_nodes,
    build_nodes,
    custom_weight,
    extract_potential,
    hahn_ensemble,
    hahn_weight,
    halfhex_line_weight,
    hexline_to_ahe,
    log_weight,
    make_ensemble,
    read_weight_csv,
    uniform_ensemble,
    uniform_weight,
    write_weight_csv,
)
from dopesym.errors import InvalidArgument, NotANode, UnsupportedVariant


def test_equispaced_small():
    n2 = build_equispaced_nodes(2)
    assert n2.exact == (Fraction(-1, 4), Fraction(1, 4))
    n4 = build_equispaced_nodes(4)
    assert n4.exact == tuple(Fraction(v, 8) for v in (-3, -1, 1, 3))
    assert n4.symmetric
    assert not build_equispaced_nodes(3).symmetric


def test_equispaced_quantization():
    nodes = build_equispaced_nodes(101)
    assert np.max(nodes.quantization_residuals()) < 1e-14


def test_equispaced_zero_rejected():
    with pytest.raises(InvalidArgument):
        build_equispaced_nodes(0)


def test_halfhex_nodes():
    nodes = build_halfhex_line_nodes(1, 2, 2)
    assert nodes.exact == tuple(Fraction(v, 2) for v in (-3, -1, 1, 3))
    assert len(build_halfhex_line_nodes(2, 3, 2)) == 6
    with pytest.raises(UnsupportedVariant):
        build_halfhex_line_nodes(2, 3, 3)
    with pytest.raises(InvalidArgument):
        build_halfhex_line_nodes(2, 3, 6)


@given(k=st.integers(1, 12), R=st.integers(2, 12), data=st.data())
@settings(max_examples=60, deadline=None)
def test_halfhex_nodes_mirror_and_count(k, R, data):
    m = 2 * data.draw(st.integers(1, R - 1))
    a = build_halfhex_line_nodes(k, R, m)
    b = build_halfhex_line_nodes(k, R, 2 * R - m)
    assert a.exact == b.exact
    assert len(a) == 2 * k + min(m, 2 * R - m)
    assert a.symmetric
    wa, wb = halfhex_line_weight(k, R, m), halfhex_line_weight(k, R, 2 * R - m)
    assert np.array_equal(wa.logw, wb.logw)


def test_halfhex_log_weight_examples():
    nodes = build_halfhex_line_nodes(1, 2, 2)
    e = Ensemble(nodes, halfhex_line_weight(1, 2, 2), 1, Mode.WALL)
    assert log_weight(e, Fraction(1, 2)) == pytest.approx(math.log(1 / 4), abs=1e-14)
    assert log_weight(e, Fraction(3, 2)) == pytest.approx(math.log(1 / 36), abs=1e-14)
    assert log_weight(e, 0.5) == log_weight(e, Fraction(1, 2))
    with pytest.raises(NotANode):
        log_weight(e, Fraction(1, 3))


def test_halfhex_weight_no_overflow():
    w = halfhex_line_weight(10_000, 10_000, 10_000)
    assert np.all(np.isfinite(w.logw))


def test_uniform_log_weight_zero():
    e = uniform_ensemble([0, 1, 2, 3], 2)
    assert all(log_weight(e, x) == 0.0 for x in range(4))


def test_hahn_weight_factorials():
    # (P-1+n)!(Q+N-2-n)!/(n!(N-1-n)!) at N=5, P=2, Q=3
    w = hahn_weight(5, 2, 3)
    expect = [math.log(math.factorial(1 + n) * math.factorial(6 - n) / (math.factorial(n) * math.factorial(4 - n)))
              for n in range(5)]
    assert np.allclose(w.logw, expect, atol=1e-13)
    a = associated_hahn_weight(5, 2, 3)
    expect = [-math.log(math.factorial(n) * math.factorial(1 + n) * math.factorial(4 - n) * math.factorial(6 - n))
              for n in range(5)]
    assert np.allclose(a.logw, expect, atol=1e-12)


@given(N=st.integers(2, 300), P=st.floats(0.5, 400), data=st.data())
@settings(max_examples=80, deadline=None)
def test_even_weights_are_exactly_even(N, P, data):
    for w in (hahn_weight(N, P, P), associated_hahn_weight(N, P, P)):
        assert w.even
        assert np.array_equal(w.logw, w.logw[::-1])
    Q = data.draw(st.floats(0.5, 400).filter(lambda q: abs(q - P) > 1e-3))
    assert not hahn_weight(max(N, 3), P, Q).even


def test_wall_mode_rules():
    nodes = build_equispaced_nodes(5)
    with pytest.raises(UnsupportedVariant):
        Ensemble(nodes, uniform_weight(nodes), 1, Mode.WALL)
    with pytest.raises(InvalidArgument):
        hahn_ensemble(6, 1, 2, 1, Mode.WALL)
    e = hahn_ensemble(6, 2, 2, 3, Mode.WALL)
    assert e.N == 3 and e.c == 1.0
    with pytest.raises(InvalidArgument):
        hahn_ensemble(6, 2, 2, 4, Mode.WALL)


def test_hexline_to_ahe_examples():
    assert hexline_to_ahe(1, 2, 2)[:3] == (4, 1, 1)
    assert hexline_to_ahe(4, 8, 4)[:3] == (12, 5, 5)


@given(k=st.integers(1, 20), R=st.integers(2, 30), data=st.data())
@settings(max_examples=60, deadline=None)
def test_hexline_to_ahe_round_trip(k, R, data):
    m = 2 * data.draw(st.integers(1, R - 1))
    N, P, Q, shift = hexline_to_ahe(k, R, m)
    nodes = build_halfhex_line_nodes(k, R, m)
    assert len(nodes) == N
    n_idx = [int(z + shift) for z in nodes.exact]
    assert n_idx == list(range(N))
    a = halfhex_line_weight(k, R, m).logw
    b = associated_hahn_weight(N, P, Q).logw
    pa = np.exp(a - a.max())
    pb = np.exp(b - b.max())
    assert np.max(np.abs(pa / pa.sum() - pb / pb.sum()) / (pb / pb.sum())) < 1e-10


def test_extract_potential_symmetric():
    nodes = build_equispaced_nodes(4)
    V = extract_potential(Ensemble(nodes, uniform_weight(nodes), 1))
    assert np.array_equal(V, V[::-1])


def test_extract_potential_hahn_converges():
    grid = np.linspace(-0.4, 0.4, 41)

    def vn(N):
        e = hahn_ensemble(N, N + 1, N + 1, 1)
        V = extract_potential(e)
        return np.interp(grid, e.nodes.values, V - V.mean())

    d1 = np.max(np.abs(vn(50) - vn(100)))
    d2 = np.max(np.abs(vn(100) - vn(200)))
    assert d2 < d1


def test_extract_potential_gaussian_table():
    # w = exp(-N x²): V_N - x² equals minus the discrete interaction, which tracks the continuum one
    N = 200
    nodes = build_equispaced_nodes(N)
    x = nodes.values
    V = extract_potential(Ensemble(nodes, custom_weight(-N * x**2), 1))
    inter = (0.5 - x) * np.log(0.5 - x) + (x + 0.5) * np.log(x + 0.5) - 1.0
    gap = V - x**2 + inter
    assert np.max(np.abs(gap - gap.mean())) < 0.1


def test_duplicate_nodes_rejected():
    with pytest.raises(InvalidArgument):
        build_nodes([0.0, 1.0, 1.0])


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@given(st.lists(st.tuples(st.integers(-10**6, 10**6), finite), min_size=1, max_size=40, unique_by=lambda t: t[0]))
@settings(max_examples=60, deadline=None)
def test_weight_csv_round_trip(rows):
    rows = sorted(rows)
    nodes = build_nodes([r[0] / 7 for r in rows])
    w = custom_weight([r[1] for r in rows])
    text = write_weight_csv(nodes, w)
    n2, w2 = read_weight_csv(io.StringIO(text))
    assert np.array_equal(n2.values, nodes.values)
    assert np.array_equal(w2.logw, w.logw)
    assert text.splitlines()[0] == "node,log_weight"


def test_weight_csv_bad_header():
    with pytest.raises(InvalidArgument):
        read_weight_csv(io.StringIO("x,w\n0,1\n"))


def test_make_ensemble_k_range():
    nodes = build_equispaced_nodes(4)
    with pytest.raises(InvalidArgument):
        make_ensemble(nodes, uniform_weight(nodes), 5)
    assert make_ensemble(nodes, uniform_weight(nodes), 0).k == 0


def test_log_gamma_matches_factorial_large():
    w = associated_hahn_weight(300, 150, 150)
    n = 17
    expect = -(gammaln(n + 1) + gammaln(300 - n) + gammaln(150 + n) + gammaln(150 + 299 - n))
    assert w.logw[n] == pytest.approx(expect, rel=1e-14)
