"""Limit kernels, Airy numerics, Fredholm determinants and a convergence harness.

Units for the wall regime: the positive nodes of a symmetric equispaced
set sit at ``(i + 1/2)`` node spacings from the wall, so the discrete
wall kernel is evaluated at half-integer positions by default.
"""
from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import gamma as _gamma

from .ensembles import Ensemble, Mode, build_equispaced_nodes, hahn_weight, associated_hahn_weight
from .equilibrium import HahnEquilibrium
from .errors import AccuracyWarning, DependencyError, InvalidArgument, RangeError
from .orthopoly import compute_recurrence, sym_kernel

__all__ = [
    "LimitKind",
    "LimitKernelSpec",
    "sine_eval",
    "airy_eval",
    "airy_kernel",
    "airy_kernel_matrix",
    "tracy_widom_cdf",
    "tracy_widom",
    "TracyWidomResult",
    "wall_matrix",
    "wall_cdf",
    "WallFamily",
    "ConvergenceReport",
    "convergence_suite",
    "ks_distance",
]


# ---- sine kernels ------------------------------------------------------


def _sinc(t):
    """sin(πt)/(πt) with a series near 0."""
    t = np.asarray(t, dtype=float)
    small = np.abs(t) < 1e-4
    with np.errstate(invalid="ignore", divide="ignore"):
        z = np.pi * t
        out = np.where(small, 1 - z * z / 6 + z**4 / 120, np.sin(z) / np.where(small, 1.0, z))
    return out


class LimitKind(str, Enum):
    SINE = "sine"
    SINE_WALL = "sine_wall"
    AIRY = "airy"
    DISCRETE_SINE_WALL = "discrete_sine_wall"


def sine_eval(kind, xi, eta):
    """Sine kernel S or its wall version S⁰ = S(ξ,η) - S(ξ,-η)."""
    kind = LimitKind(kind)
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if kind is LimitKind.SINE:
        out = _sinc(xi - eta)
    elif kind is LimitKind.SINE_WALL:
        out = _sinc(xi - eta) - _sinc(xi + eta)
    else:
        raise InvalidArgument("sine_eval handles the sine and sine_wall kernels")
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class LimitKernelSpec:
    """A limit kernel with its parameters.

    For ``DISCRETE_SINE_WALL`` the parameters are δ(0) and ρ⁰(0); the
    kernel then acts on node indices.
    """

    kind: LimitKind
    delta0: float | None = None
    rho0: float | None = None
    offset: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "kind", LimitKind(self.kind))
        if self.kind is LimitKind.DISCRETE_SINE_WALL:
            if not (self.delta0 and self.delta0 > 0 and self.rho0 and self.rho0 > 0):
                raise InvalidArgument("δ(0) and ρ⁰(0) must be positive")

    def __call__(self, xi, eta):
        if self.kind in (LimitKind.SINE, LimitKind.SINE_WALL):
            return sine_eval(self.kind, xi, eta)
        if self.kind is LimitKind.AIRY:
            return airy_kernel(xi, eta)
        rho = 1.0 / (self.delta0 * self.rho0)
        return _wall_entries(np.asarray(xi, float), np.asarray(eta, float), rho, self.offset)


# ---- Airy --------------------------------------------------------------

_AI0 = 3.0 ** (-2.0 / 3.0) / _gamma(2.0 / 3.0)
_AIP0 = -(3.0 ** (-1.0 / 3.0)) / _gamma(1.0 / 3.0)
AIRY_SWITCH = 7.0


def _series_coeffs(n_terms=180):
    a = np.zeros(n_terms)
    a[0], a[1] = _AI0, _AIP0
    for n in range(n_terms - 3):
        a[n + 3] = a[n] / ((n + 2) * (n + 3))
    return a, a[1:] * np.arange(1, n_terms)


_SA, _SAP = _series_coeffs()


def _airy_series_pair(x):
    """Ai and Ai' from the Maclaurin coefficients a_{n+3} = a_n/((n+2)(n+3))."""
    P = np.polynomial.polynomial.polyval
    return P(x, _SA), P(x, _SAP)


def _uv(K):
    u = [1.0]
    for k in range(1, K + 1):
        u.append(u[-1] * (6 * k - 5) * (6 * k - 3) * (6 * k - 1) / ((2 * k - 1) * 216 * k))
    v = [1.0] + [-(6 * k + 1) / (6 * k - 1) * u[k] for k in range(1, K + 1)]
    return np.array(u), np.array(v)


_U, _V = _uv(40)

# Taylor anchors at ±8 cover (2, 7] and [-7, -5), where the Maclaurin sum cancels;
# expanding leftward from +8 is stable since Ai is recessive to the right.
_TAYLOR_X0 = 8.0
_TAYLOR_LO = 2.0
_TAYLOR_NEG_LO = 5.0


def _trunc_sum(coef, z, alt=True):
    """Σ (±1)^k coef_k z^{-k}, stopped at the smallest term."""
    z = np.asarray(z, dtype=float)
    total = np.zeros_like(z)
    prev = np.full_like(z, np.inf)
    active = np.ones(z.shape, dtype=bool)
    for k in range(len(coef)):
        term = coef[k] * z ** (-k) * ((-1) ** k if alt else 1)
        mag = np.abs(term)
        active &= mag < prev
        total += np.where(active, term, 0.0)
        prev = np.where(active, mag, prev)
    return total


def _airy_asym_pos(x):
    z = 2.0 / 3.0 * x**1.5
    e = np.exp(-z) / (2 * np.sqrt(np.pi))
    q = x**0.25
    return e / q * _trunc_sum(_U, z), -e * q * _trunc_sum(_V, z)


def _taylor_coeffs(x0, n_terms=120):
    asym = _airy_asym_pos if x0 > 0 else _airy_asym_neg
    a = np.zeros(n_terms)
    a[0], a[1] = (float(v[0]) for v in asym(np.array([x0])))
    a[2] = x0 * a[0] / 2
    for n in range(1, n_terms - 2):
        a[n + 2] = (x0 * a[n] + a[n - 1]) / ((n + 1) * (n + 2))
    return a, a[1:] * np.arange(1, n_terms)


def _airy_taylor_pair(x, x0, coef):
    P = np.polynomial.polynomial.polyval
    h = x - x0
    return P(h, coef[0]), P(h, coef[1])


def _airy_asym_neg(x):
    a = -x
    z = 2.0 / 3.0 * a**1.5
    q = a**0.25
    th = z - np.pi / 4
    c, s = np.cos(th), np.sin(th)
    ue = _trunc_sum(_U[0::2], z * z)
    uo = _trunc_sum(_U[1::2], z * z) / z
    ve = _trunc_sum(_V[0::2], z * z)
    vo = _trunc_sum(_V[1::2], z * z) / z
    ai = (c * ue + s * uo) / (np.sqrt(np.pi) * q)
    aip = q * (s * ve - c * vo) / np.sqrt(np.pi)
    return ai, aip


_TPOS = _taylor_coeffs(_TAYLOR_X0)
_TNEG = _taylor_coeffs(-_TAYLOR_X0)


def airy_eval(x):
    """(Ai(x), Ai'(x)) for |x| <= 100.

    Maclaurin series on [-5, 2], Taylor expansions about ±8 on (2, 7]
    and [-7, -5), truncated asymptotic expansions beyond.
    """
    xa = np.asarray(x, dtype=float)
    if np.any(np.abs(xa) > 100) or not np.all(np.isfinite(xa)):
        raise RangeError("airy_eval supports |x| <= 100")
    scalar = xa.ndim == 0
    xa = np.atleast_1d(xa)
    ai = np.empty_like(xa)
    aip = np.empty_like(xa)
    mid = (xa >= -_TAYLOR_NEG_LO) & (xa <= _TAYLOR_LO)
    if mid.any():
        ai[mid], aip[mid] = _airy_series_pair(xa[mid])
    right = (xa > _TAYLOR_LO) & (xa <= AIRY_SWITCH)
    if right.any():
        ai[right], aip[right] = _airy_taylor_pair(xa[right], _TAYLOR_X0, _TPOS)
    left = (xa < -_TAYLOR_NEG_LO) & (xa >= -AIRY_SWITCH)
    if left.any():
        ai[left], aip[left] = _airy_taylor_pair(xa[left], -_TAYLOR_X0, _TNEG)
    pos = xa > AIRY_SWITCH
    if pos.any():
        ai[pos], aip[pos] = _airy_asym_pos(xa[pos])
    neg = xa < -AIRY_SWITCH
    if neg.any():
        ai[neg], aip[neg] = _airy_asym_neg(xa[neg])
    if scalar:
        return float(ai[0]), float(aip[0])
    return ai, aip


def _airy_kernel_from(x, y, ax, apx, ay, apy):
    dx = x - y
    close = np.abs(dx) < 1e-5
    with np.errstate(invalid="ignore", divide="ignore"):
        off = (ax * apy - apx * ay) / np.where(close, 1.0, dx)
    if close.any():
        m = 0.5 * (x + y)
        am, apm = airy_eval(np.where(close, m, 0.0))
        diag = apm**2 - m * am**2
        off = np.where(close, diag, off)
    return off


def airy_kernel(xi, eta):
    """(Ai(ξ)Ai'(η) - Ai'(ξ)Ai(η))/(ξ - η), diagonal Ai'(ξ)² - ξAi(ξ)²."""
    x = np.atleast_1d(np.asarray(xi, dtype=float))
    y = np.atleast_1d(np.asarray(eta, dtype=float))
    x, y = np.broadcast_arrays(x, y)
    ax, apx = airy_eval(x)
    ay, apy = airy_eval(y)
    out = _airy_kernel_from(x, y, ax, apx, ay, apy)
    if np.ndim(xi) == 0 and np.ndim(eta) == 0:
        return float(out.ravel()[0])
    return out


def airy_kernel_matrix(xs, ys=None):
    xs = np.asarray(xs, dtype=float)
    ys = xs if ys is None else np.asarray(ys, dtype=float)
    ax, apx = airy_eval(xs)
    ay, apy = airy_eval(ys)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return _airy_kernel_from(X, Y, ax[:, None], apx[:, None], ay[None, :], apy[None, :])


# ---- Tracy-Widom -------------------------------------------------------

TAIL_TOL = 1e-14


def _tail_end():
    """Smallest x with A(x, x) below the tail tolerance."""
    lo, hi = 0.0, 20.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if airy_kernel(mid, mid) > TAIL_TOL:
            lo = mid
        else:
            hi = mid
    return hi


_TAIL_END = None


@dataclass(frozen=True)
class TracyWidomResult:
    value: float
    order: int
    upper: float
    error_estimate: float
    warning: str | None = None


def _tw_det(s, n, upper):
    t, w = np.polynomial.legendre.leggauss(n)
    x = s + (upper - s) * (t + 1) / 2
    w = w * (upper - s) / 2
    sw = np.sqrt(w)
    K = airy_kernel_matrix(x)
    M = np.eye(n) - sw[:, None] * K * sw[None, :]
    return float(np.linalg.det(M))


def tracy_widom(s: float, quad_order: int = 60) -> TracyWidomResult:
    """det(I - A|_[s, ∞)) by Gauss-Legendre Nyström on [s, max(s, L)].

    ``L`` is where the Airy kernel diagonal drops below 1e-14. The error
    estimate compares with a run at three quarters of the order; a warning
    is attached when it exceeds 1e-8.
    """
    global _TAIL_END
    if s < -10:
        raise InvalidArgument("s must be at least -10")
    if not 10 <= quad_order <= 200:
        raise InvalidArgument("quad_order must lie in [10, 200]")
    if _TAIL_END is None:
        _TAIL_END = _tail_end()
    if s >= _TAIL_END:
        return TracyWidomResult(1.0, quad_order, s, 0.0)
    upper = _TAIL_END
    val = _tw_det(s, quad_order, upper)
    coarse = _tw_det(s, max(5, (3 * quad_order) // 4), upper)
    err = abs(val - coarse)
    warn = None
    if err > 1e-8:
        warn = f"quadrature order {quad_order} too small: estimated error {err:.2g}"
    return TracyWidomResult(min(max(val, 0.0), 1.0), quad_order, upper, err, warn)


def tracy_widom_cdf(s: float, quad_order: int = 60) -> float:
    """Tracy-Widom (β = 2) distribution function F(s)."""
    r = tracy_widom(s, quad_order)
    if r.warning:
        warnings.warn(r.warning, AccuracyWarning, stacklevel=2)
    return r.value


# ---- wall law ----------------------------------------------------------


def _wall_entries(pi, pj, rho, offset=0.5):
    """𝒮⁰ entries at node indices ``pi``, ``pj`` with occupation ``rho``."""
    a = pi + offset
    b = pj + offset
    return rho * (_sinc(rho * (a - b)) - _sinc(rho * (a + b)))


def wall_matrix(n: int, rho: float, offset: float = 0.5) -> np.ndarray:
    """𝒮⁰ restricted to indices 0..n-1."""
    i = np.arange(n, dtype=float)
    return _wall_entries(i[:, None], i[None, :], rho, offset)


def wall_cdf(s: float, delta0: float, rho0: float, offset: float = 0.5) -> float:
    """Limit of P(x_min >= s node spacings): det(I - 𝒮⁰|_{B(s)}).

    B(s) = {0, ..., floor(s - 1/2)} and 𝒮⁰ has occupation 1/(δ(0)ρ⁰(0)).
    Node ``i`` sits ``i + offset`` spacings from the wall; ``offset=0``
    gives the integer-index reading, whose (0, 0) entry vanishes.
    """
    if not (delta0 > 0 and rho0 > 0):
        raise InvalidArgument("δ(0) and ρ⁰(0) must be positive")
    n = int(math.floor(s - 0.5)) + 1
    if n <= 0:
        return 1.0
    rho = 1.0 / (delta0 * rho0)
    M = np.eye(n) - wall_matrix(n, rho, offset)
    return float(np.linalg.det(M))


# ---- convergence harness ------------------------------------------------


@dataclass(frozen=True)
class WallFamily:
    """Wall-symmetric Hahn or Associated Hahn family.

    For each N the ensemble has 2N equispaced nodes on [-1/2, 1/2],
    P = Q = 2N·A + 1 and k = c·N particles on the positive half. The
    equilibrium input supplies δ(x) and the edge constant.
    """

    A: float
    c: float
    family: str = "hahn"
    equilibrium: HahnEquilibrium | None = None

    @classmethod
    def with_equilibrium(cls, A, c, family="hahn"):
        return cls(A, c, family, HahnEquilibrium(A, c, family))

    def k_of(self, N):
        k = self.c * N
        if abs(k - round(k)) > 1e-9:
            raise InvalidArgument(f"c·N = {k} is not an integer")
        return int(round(k))

    def ensemble(self, N: int) -> Ensemble:
        M = 2 * N
        P = M * self.A + 1
        w = hahn_weight(M, P, P) if self.family == "hahn" else associated_hahn_weight(M, P, P)
        return Ensemble(build_equispaced_nodes(M), w, self.k_of(N), Mode.WALL)

    def describe(self):
        return {"family": self.family, "A": self.A, "c": self.c}


@dataclass(frozen=True)
class ConvergenceReport:
    family: dict
    regime: str
    N_values: tuple
    errors: tuple
    slope: float
    passed: bool
    criterion: str
    constants: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "family": self.family,
            "regime": self.regime,
            "N": list(self.N_values),
            "sup_error": list(self.errors),
            "slope": self.slope,
            "pass": self.passed,
            "criterion": self.criterion,
            "constants": self.constants,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


REGIMES = ("band", "wall", "gap_void", "gap_saturated", "edge", "cross_term")


def _full_blocks(e, rt, k):
    """K_{2N,2k}(x, y) and K_{2N,2k}(x, -y) on the positive nodes."""
    pos = e.nodes.positive_indices()
    neg = e.nodes.mirror_index()[pos]
    P = rt.phi[: 2 * k]
    return P[:, pos].T @ P[:, pos], P[:, pos].T @ P[:, neg]


def _regime_error(fam, regime, N, opts):
    eq = fam.equilibrium
    e = fam.ensemble(N)
    M = len(e.nodes)
    rt = compute_recurrence(e, 2 * e.k - 1)
    y = e.particle_nodes
    consts = {}
    if regime == "cross_term":
        _, cross = _full_blocks(e, rt, e.k)
        lo, hi = opts["band_lo"], eq.beta - opts["margin"]
        if opts.get("region") is not None:
            lo, hi = opts["region"]
        sel = (y > lo) & (y < hi)
        return float(np.max(np.abs(cross[np.ix_(sel, sel)]))), consts
    K = sym_kernel(e, rt=rt).entries
    if regime == "band":
        x0 = y[np.argmin(np.abs(y - opts["x0"]))]
        dl = float(eq.delta(np.array([x0]))[0])
        xi = (y - x0) * M / dl
        sel = np.abs(xi) <= opts["window"]
        X, Y = np.meshgrid(xi[sel], xi[sel], indexing="ij")
        err = np.abs(dl * K[np.ix_(sel, sel)] - sine_eval("sine", X, Y))
        consts.update(delta=dl, x0=float(x0))
        return float(err.max()), consts
    if regime == "wall":
        d0 = float(eq.delta(np.array([0.0]))[0])
        xi = y * M / d0
        sel = xi <= opts["window"]
        X, Y = np.meshgrid(xi[sel], xi[sel], indexing="ij")
        err = np.abs(d0 * K[np.ix_(sel, sel)] - sine_eval("sine_wall", X, Y))
        consts.update(delta0=d0, spacing=1.0 / M)
        return float(err.max()), consts
    if regime in ("gap_void", "gap_saturated"):
        want = "void" if regime == "gap_void" else "saturated"
        if eq.gap != want:
            raise InvalidArgument(f"family has {eq.gap} gaps, not {want}")
        lo = eq.beta + opts["margin"]
        sel = y >= lo
        if not sel.any():
            raise InvalidArgument("no nodes in the gap subinterval")
        d = np.diag(K)[sel]
        err = d if want == "void" else 1.0 - d
        return float(np.max(np.abs(err))), consts
    if regime == "edge":
        scale = eq.edge_scale(M)
        beta = eq.beta
        Mw = opts["M"]
        sel = np.nonzero((y > beta - Mw * M ** (-2 / 3)) & (y < beta + Mw * M ** (-1 / 2)))[0]
        Kx = K[np.ix_(sel, sel)]
        if eq.gap == "saturated":
            # hole kernel in the gauge (-1)^{i-j}; correlation determinants are unchanged
            sgn = np.where(sel % 2 == 0, 1.0, -1.0)
            Kx = sgn[:, None] * (np.eye(len(sel)) - Kx) * sgn[None, :]
        xi = scale * (y[sel] - beta)
        X, Y = np.meshgrid(xi, xi, indexing="ij")
        err = np.abs(Kx * M / scale - airy_kernel(X, Y))
        consts.update(B=eq.edge_constant(), beta=beta, scale_over_N23=scale / M ** (2 / 3))
        return float(err.max()), consts
    raise InvalidArgument(f"unknown regime {regime!r}")


_DEFAULTS = {"x0": 0.25, "window": 3.0, "margin": 0.05, "band_lo": 0.1, "M": 1.0, "region": None,
             "gap_threshold": 1e-3}


def convergence_suite(family: WallFamily, regime: str, N_list, *, jobs: int = 1, **opts) -> ConvergenceReport:
    """Sup-errors of rescaled finite kernels against their limits.

    Pass rules: band and wall need a log-log slope in [-1.4, -0.6];
    cross_term a slope <= -0.6; edge a slope <= -0.2; the gap regimes an
    error below ``gap_threshold`` at the largest N. ``jobs`` spreads the
    N values over threads; results do not depend on it.
    """
    if regime not in REGIMES:
        raise InvalidArgument(f"regime must be one of {REGIMES}")
    N_list = [int(n) for n in N_list]
    if len(N_list) < 3 or any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise InvalidArgument("N_list must be increasing with at least 3 entries")
    if getattr(family, "equilibrium", None) is None:
        raise DependencyError("convergence_suite needs equilibrium data (δ(x), B_β) for the family")
    o = dict(_DEFAULTS)
    o.update(opts)
    jobs = max(1, int(jobs))
    if jobs == 1:
        results = [_regime_error(family, regime, N, o) for N in N_list]
    else:
        with ThreadPoolExecutor(jobs) as ex:
            results = list(ex.map(lambda N: _regime_error(family, regime, N, o), N_list))
    errs = [r[0] for r in results]
    consts = {str(N): r[1] for N, r in zip(N_list, results)}
    le = np.log(np.maximum(errs, 1e-300))
    slope = float(np.polyfit(np.log(N_list), le, 1)[0])
    if regime in ("band", "wall"):
        ok, crit = -1.4 <= slope <= -0.6, "slope in [-1.4, -0.6]"
    elif regime == "cross_term":
        ok, crit = slope <= -0.6, "slope <= -0.6"
    elif regime == "edge":
        ok, crit = slope <= -0.2, "slope <= -0.2"
    else:
        ok, crit = errs[-1] < o["gap_threshold"], f"error < {o['gap_threshold']:g} at largest N"
    return ConvergenceReport(family.describe(), regime, tuple(N_list), tuple(errs), slope, bool(ok), crit, consts)


def ks_distance(samples, cdf) -> float:
    """Kolmogorov-Smirnov distance between lattice-valued samples and a continuous CDF.

    Both one-sided gaps are checked at every distinct sample value.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    vals, counts = np.unique(x, return_counts=True)
    n = len(x)
    hi = np.cumsum(counts) / n
    lo = hi - counts / n
    F = np.array([cdf(v) for v in vals])
    return float(max(np.max(np.abs(hi - F)), np.max(np.abs(lo - F))))
