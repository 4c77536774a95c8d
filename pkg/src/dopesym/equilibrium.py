"""Constrained logarithmic-energy minimization and Hahn closed forms.

The energy c∬log(1/|x-y|)dμdμ + ∫φdμ is discretized by cell masses on a
uniform grid. Cell-pair integrals of the log kernel are exact, so the
self-interaction of a cell needs no regularization. The minimizer under
0 <= μ <= ρ⁰/c and total mass 1 is found by projected gradient descent
with Barzilai-Borwein steps and a monotone halving safeguard.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import toeplitz
from scipy.special import xlogy

from .ensembles import NodeDensity
from .errors import ConvergenceError, InvalidArgument

__all__ = [
    "Field",
    "Region",
    "EquilibriumMeasure",
    "HahnClosedForms",
    "HahnEquilibrium",
    "build_field",
    "hahn_field",
    "solve_equilibrium",
    "variational_derivative",
    "classify",
    "kkt_residuals",
    "edge_exponent",
    "hahn_closed_forms",
    "hahn_beta",
    "critical_c",
    "ellipse_y",
    "tau0",
    "hexagon_parameters",
]

CLASSIFY_EPS = 1e-3
MIN_REGION_CELLS = 3


@dataclass(frozen=True, eq=False)
class Field:
    """φ(x) = V(x) + ∫_a^b log|x-y| ρ⁰ dy on [a, b] (ρ⁰ constant)."""

    V: Callable
    a: float
    b: float
    rho0: float = 1.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        a, b = self.a, self.b
        inter = xlogy(b - x, np.abs(b - x)) + xlogy(x - a, np.abs(x - a)) - (b - a)
        return self.V(x) + self.rho0 * inter

    def interaction(self, x):
        x = np.asarray(x, dtype=float)
        return self(x) - self.V(x)


def build_field(V, a: float, b: float, rho0: float = 1.0) -> Field:
    """Field from a potential closure or a table ``(nodes, values)``.

    Tables are interpolated by a not-a-knot cubic spline, extrapolated to
    the interval ends.
    """
    a, b = float(a), float(b)
    if not b > a:
        raise InvalidArgument("need a < b")
    if callable(V):
        fn = V
    else:
        xs, vs = (np.asarray(t, dtype=float) for t in V)
        if not np.all(np.isfinite(vs)):
            raise InvalidArgument("potential must be finite")
        spline = CubicSpline(xs, vs)
        fn = spline
    return Field(fn, a, b, float(rho0))


def _u_terms(x, A):
    u = np.asarray(x, dtype=float) + 0.5
    return u, 1.0 - u, A + u, A + 1.0 - u


def hahn_field(A: float, family: str = "hahn") -> "HahnField":
    """Continuum field of the Hahn (``"hahn"``) or Associated Hahn family.

    With u = x + 1/2, Stirling applied to the factorial weights gives
    φ_HE = u log u + (1-u) log(1-u) - (A+u) log(A+u) - (A+1-u) log(A+1-u)
    and φ_AHE with the last two signs flipped, up to constants.
    """
    if family not in ("hahn", "associated_hahn"):
        raise InvalidArgument("family must be 'hahn' or 'associated_hahn'")
    if A < 0:
        raise InvalidArgument("A must be nonnegative")
    return HahnField(float(A), family)


@dataclass(frozen=True)
class HahnField:
    A: float
    family: str

    @property
    def sign(self):
        return -1.0 if self.family == "hahn" else 1.0

    def __call__(self, x):
        u, v, p, q = _u_terms(x, self.A)
        return xlogy(u, u) + xlogy(v, v) + self.sign * (xlogy(p, p) + xlogy(q, q))

    def d1(self, x):
        u, v, p, q = _u_terms(x, self.A)
        with np.errstate(divide="ignore"):
            return np.log(u) - np.log(v) + self.sign * (np.log(p) - np.log(q))

    def d2(self, x):
        u, v, p, q = _u_terms(x, self.A)
        with np.errstate(divide="ignore"):
            return 1 / u + 1 / v + self.sign * (1 / p + 1 / q)

    def as_field(self) -> Field:
        # V = φ minus the uniform-density interaction on [-1/2, 1/2]
        inter = lambda x: xlogy(0.5 - x, np.abs(0.5 - x)) + xlogy(x + 0.5, np.abs(x + 0.5)) - 1.0
        return Field(lambda x: self(x) - inter(x), -0.5, 0.5, 1.0)


@dataclass(frozen=True)
class Region:
    lo: float
    hi: float
    kind: str
    i0: int
    i1: int

    def to_dict(self):
        return {"lo": self.lo, "hi": self.hi, "kind": self.kind, "cells": [self.i0, self.i1]}


@dataclass(frozen=True, eq=False)
class EquilibriumMeasure:
    grid: np.ndarray
    h: float
    density: np.ndarray
    upper: np.ndarray
    multiplier: float
    varderiv: np.ndarray
    regions: tuple
    c: float
    residual: float
    iterations: int
    energies: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)

    @property
    def a(self):
        return float(self.grid[0] - self.h / 2)

    @property
    def b(self):
        return float(self.grid[-1] + self.h / 2)

    def band_edges(self) -> list:
        """Points where a band meets a void or saturated region."""
        out = []
        for r, s in zip(self.regions, self.regions[1:]):
            if "band" in (r.kind, s.kind) and r.kind != s.kind:
                out.append(r.hi)
        return out

    def mass(self) -> float:
        return float(self.h * self.density.sum())

    def to_dict(self) -> dict:
        kkt = kkt_residuals(self)
        return {
            "c": self.c,
            "grid": self.grid.tolist(),
            "density": self.density.tolist(),
            "regions": [r.to_dict() for r in self.regions],
            "l_c": self.multiplier,
            "residual": self.residual,
            "iterations": self.iterations,
            "kkt": kkt,
            "mass_error": abs(self.mass() - 1.0),
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text


def _G(t):
    return 0.5 * xlogy(t * t, np.abs(t)) - 0.75 * t * t


def _log_cells(G, h):
    """Exact ∫∫ log|x-y| over pairs of cells, as a Toeplitz matrix."""
    d = np.arange(G) * h
    col = _G(d + h) - 2 * _G(d) + _G(d - h)
    return toeplitz(col)


def _project(z, U, total=1.0):
    """Euclidean projection onto {0 <= m <= U, Σm = total}."""
    lo = z - U
    cand = np.concatenate([z, lo])
    cand.sort()
    zs = np.sort(z)
    ls_order = np.argsort(lo)
    ls = lo[ls_order]
    # f(ν) = Σ clip(z - ν, 0, U), nonincreasing piecewise linear
    z_suffix = np.concatenate([np.cumsum(zs[::-1])[::-1], [0.0]])
    l_suffix_z = np.concatenate([np.cumsum(z[ls_order][::-1])[::-1], [0.0]])
    l_suffix_U = np.concatenate([np.cumsum(U[ls_order][::-1])[::-1], [0.0]])
    iz = np.searchsorted(zs, cand, side="right")
    il = np.searchsorted(ls, cand, side="left")
    nz = len(z) - iz
    nl = len(z) - il
    f = (z_suffix[iz] - nz * cand) - (l_suffix_z[il] - nl * cand) + l_suffix_U[il]
    j = np.searchsorted(-f, -total, side="left")
    if j == 0:
        nu = cand[0] - (total - f[0]) / max(len(z), 1)
    elif j >= len(cand):
        nu = cand[-1]
    else:
        f0, f1 = f[j - 1], f[j]
        nu = cand[j - 1] if f0 == f1 else cand[j - 1] + (f0 - total) * (cand[j] - cand[j - 1]) / (f0 - f1)
    return np.clip(z - nu, 0.0, U)


def _density_fn(rho0):
    if rho0 is None:
        return lambda x: np.ones_like(x)
    if isinstance(rho0, (int, float)):
        return lambda x: np.full_like(x, float(rho0))
    return rho0


def solve_equilibrium(phi, rho0=None, c: float = 0.5, gridsize: int = 512, *, a=None, b=None,
                      tol: float = 1e-8, max_iter: int = 100_000, raise_on_fail: bool = True) -> EquilibriumMeasure:
    """Discrete constrained equilibrium measure.

    Parameters
    ----------
    phi : Field or callable
        External field on [a, b]; ``a`` and ``b`` default to ``phi.a``,
        ``phi.b``.
    rho0 : NodeDensity, callable or float, optional
        Node density giving the upper constraint ρ⁰/c (default 1).
    c : float
        Particle fraction, 0 < c < 1.
    gridsize : int
        Number of cells, at least 64.
    tol : float
        Stop when the projected-gradient residual (density units) is below.
    """
    if not 0 < c < 1:
        raise InvalidArgument("c must lie in (0, 1)")
    if gridsize < 64:
        raise InvalidArgument("gridsize must be at least 64")
    a = float(phi.a if a is None else a)
    b = float(phi.b if b is None else b)
    G = int(gridsize)
    h = (b - a) / G
    x = a + (np.arange(G) + 0.5) * h
    rho = _density_fn(rho0)(x)
    U = h * rho / c
    if U.sum() < 1 - 1e-12:
        raise InvalidArgument("infeasible: ∫ρ⁰/c < 1")
    ph = np.asarray(phi(x), dtype=float)
    Lm = -_log_cells(G, h) / (h * h)
    H = 2 * c * Lm

    def energy(m):
        return c * m @ (Lm @ m) + ph @ m

    m = U / U.sum()
    g = H @ m + ph
    E = energy(m)
    lmax = np.linalg.eigvalsh(H)[-1]
    t = 1.0 / lmax
    energies = [E]
    res = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        while True:
            m_new = _project(m - t * g, U)
            s = m_new - m
            Hs = H @ s
            # exact change of the quadratic, free of cancellation
            dE = float(g @ s + 0.5 * s @ Hs)
            if dE <= 0.0 or t <= 1.0 / lmax:
                break
            t *= 0.5
        g_new = g + Hs
        y = Hs
        m, g = m_new, g_new
        E += dE
        energies.append(E)
        res = float(np.max(np.abs(m - _project(m - h * g, U)))) / h
        if res <= tol:
            break
        sy = float(s @ y)
        t = max(float(s @ s) / sy, 1.0 / lmax) if sy > 0 else 1.0 / lmax
    d = m / h
    em = _finish(x, h, d, U / h, g, c, res, it, np.array(energies), ph)
    if res > tol and raise_on_fail:
        raise ConvergenceError(f"projected gradient stopped at residual {res:.3g} after {it} iterations", res)
    return em


def _finish(x, h, d, upper, g, c, res, it, energies, ph):
    regions = classify(d, upper, x, h)
    band = np.zeros(len(x), dtype=bool)
    for r in regions:
        if r.kind == "band":
            band[r.i0 : r.i1] = True
    if band.any():
        l_c = float(np.mean(g[band]))
    else:
        free = (d > 0) & (d < upper)
        l_c = float(np.mean(g[free])) if free.any() else float(np.median(g))
    return EquilibriumMeasure(x, h, d, upper, l_c, g - l_c, tuple(regions), c, res, it, energies, ph)


def variational_derivative(em: EquilibriumMeasure, phi, c: float | None = None) -> np.ndarray:
    """δE_c/δμ = -2c ∫ log|x-y| dμ(y) + φ(x), cell-averaged on the grid."""
    c = em.c if c is None else c
    G = len(em.grid)
    h = em.h
    I = _log_cells(G, h)
    return -2 * c * (I @ em.density) / h + np.asarray(phi(em.grid), dtype=float)


def classify(density, upper, grid=None, h=None, eps: float = CLASSIFY_EPS, min_cells: int = MIN_REGION_CELLS) -> list:
    """Label cells Void / Band / Saturated and merge them into regions.

    ``upper`` is ρ⁰/c per cell. Runs shorter than ``min_cells`` are
    absorbed into the longer neighbouring run.
    """
    d = np.asarray(density, dtype=float)
    u = np.broadcast_to(np.asarray(upper, dtype=float), d.shape)
    G = len(d)
    if grid is None:
        h = 1.0 / G if h is None else h
        grid = -0.5 + (np.arange(G) + 0.5) * h
    if h is None:
        h = float(grid[1] - grid[0])
    lab = np.where(d <= eps * u, 0, np.where(d >= (1 - eps) * u, 2, 1))
    runs = _runs(lab)
    changed = True
    while changed and len(runs) > 1:
        changed = False
        lens = [r[2] - r[1] for r in runs]
        j = int(np.argmin(lens))
        if lens[j] < min_cells:
            if j == 0:
                nb = 1
            elif j == len(runs) - 1:
                nb = j - 1
            else:
                nb = j - 1 if lens[j - 1] >= lens[j + 1] else j + 1
            lab[runs[j][1] : runs[j][2]] = runs[nb][0]
            runs = _runs(lab)
            changed = True
    kinds = {0: "void", 1: "band", 2: "saturated"}
    a = float(grid[0] - h / 2)
    return [Region(a + i0 * h, a + i1 * h, kinds[v], i0, i1) for v, i0, i1 in runs]


def _runs(lab):
    out = []
    start = 0
    for i in range(1, len(lab) + 1):
        if i == len(lab) or lab[i] != lab[start]:
            out.append((int(lab[start]), start, i))
            start = i
    return out


def kkt_residuals(em: EquilibriumMeasure) -> dict:
    """Worst violations of the variational conditions per region kind."""
    out = {"band": 0.0, "void": 0.0, "saturated": 0.0}
    v = em.varderiv
    for r in em.regions:
        seg = v[r.i0 : r.i1]
        if r.kind == "band":
            out["band"] = max(out["band"], float(np.max(np.abs(seg))))
        elif r.kind == "void":
            out["void"] = max(out["void"], float(np.max(-seg)))
        else:
            out["saturated"] = max(out["saturated"], float(np.max(seg)))
    out["scale"] = float(np.max(em.phi) - np.min(em.phi))
    return out


def edge_exponent(em: EquilibriumMeasure, edge: float, cells: int = 10, side: str | None = None) -> float:
    """Fit d ~ C·dist^p over ``cells`` band cells next to ``edge``.

    For a void edge the density vanishes at the edge, for a saturated edge
    the gap to the upper constraint does; the fitted exponent is p.
    """
    x, h = em.grid, em.h
    dist = np.abs(x - edge)
    if side is None:
        side = "left" if np.sum(x < edge) > np.sum(x > edge) else "right"
    sel = (x < edge) if side == "left" else (x > edge)
    idx = np.nonzero(sel)[0]
    idx = idx[np.argsort(dist[idx])][:cells]
    d = em.density[idx]
    u = em.upper[idx]
    y = np.where(np.mean(d) < 0.5 * np.mean(u), d, u - d)
    ok = y > 0
    p = np.polyfit(np.log(dist[idx][ok]), np.log(y[ok]), 1)
    return float(p[0])


# ---- Hahn closed forms -------------------------------------------------


def hahn_beta(A: float, c: float) -> float:
    """Right band end of the Hahn ensemble with particle fraction ``c``."""
    return math.sqrt(c * (1 - c) * (2 * A + c) * (2 * A + c + 1)) / (2 * (A + c))


def critical_c(A: float) -> float:
    return math.sqrt(A * A + A) - A


def ellipse_y(lam: float, tau: float) -> float:
    """Upper boundary of the inscribed ellipse at horizontal position ``tau``."""
    r = 2 * tau / (math.sqrt(3) * lam)
    return math.sqrt(lam + 1) * math.sqrt(max(0.0, 1 - r * r))


def tau0(lam: float) -> float:
    return -math.sqrt(3) * lam * lam / (2 * (2 + lam))


def hexagon_parameters(lam: float, tau: float) -> tuple:
    """(c, A) of the column law at horizontal position ``tau``.

    Columns m and 2R - m carry the same law, so τ enters through -|τ|,
    which keeps A >= 0.
    """
    t = -abs(tau)
    c = 2 / (2 + lam + 2 * t / math.sqrt(3))
    return c, (-t / math.sqrt(3)) * c


@dataclass(frozen=True)
class HahnClosedForms:
    beta: float | None
    c_A: float | None
    ellipse_y: float | None
    tau0: float | None
    c_hex: float | None
    A_hex: float | None


def hahn_closed_forms(A=None, c=None, lam=None, tau=None) -> HahnClosedForms:
    """Band end β, critical fraction c_A, ellipse height and τ₀.

    Any subset of the inputs may be given; quantities whose inputs are
    missing are returned as None.
    """
    beta = cA = ey = t0 = ch = Ah = None
    if A is not None:
        if not A >= 0:
            raise InvalidArgument("A must be nonnegative")
        cA = critical_c(A)
        if c is not None:
            if not 0 < c < 1:
                raise InvalidArgument("c must lie in (0, 1)")
            beta = hahn_beta(A, c)
    if lam is not None:
        if not lam > 0:
            raise InvalidArgument("λ must be positive")
        t0 = tau0(lam)
        if tau is not None:
            if abs(tau) > math.sqrt(3) * lam / 2 + 1e-15:
                raise InvalidArgument("|τ| must not exceed √3λ/2")
            ey = ellipse_y(lam, tau)
            ch, Ah = hexagon_parameters(lam, tau)
    return HahnClosedForms(beta, cA, ey, t0, ch, Ah)


@dataclass(frozen=True)
class HahnEquilibrium:
    """Analytic equilibrium measure of the Hahn / Associated Hahn families.

    The single band (-β, β) is flanked by voids or saturated regions. The
    density follows from the one-cut formula for the void-adjacent member
    of the dual pair (the holes of a Hahn ensemble with fraction c form an
    Associated Hahn ensemble with fraction 1 - c).
    """

    A: float
    c: float
    family: str = "hahn"
    quad: int = 2000

    def __post_init__(self):
        if self.family not in ("hahn", "associated_hahn"):
            raise InvalidArgument("family must be 'hahn' or 'associated_hahn'")
        if not 0 < self.c < 1 or self.A < 0:
            raise InvalidArgument("need A >= 0 and 0 < c < 1")

    @property
    def c_he(self) -> float:
        """Particle fraction of the Hahn member of the dual pair."""
        return self.c if self.family == "hahn" else 1 - self.c

    @property
    def beta(self) -> float:
        return hahn_beta(self.A, self.c_he)

    @property
    def gap(self) -> str:
        """``"void"`` or ``"saturated"`` for this family's outer regions."""
        he_void = self.c_he < critical_c(self.A)
        if self.family == "hahn":
            return "void" if he_void else "saturated"
        return "saturated" if he_void else "void"

    def _void_member(self):
        """(field, fraction) of the void-adjacent member of the dual pair."""
        if self.gap == "void":
            return hahn_field(self.A, self.family), self.c
        other = "associated_hahn" if self.family == "hahn" else "hahn"
        return hahn_field(self.A, other), 1 - self.c

    def _H(self, f, x):
        beta = self.beta
        M = self.quad
        th = (np.arange(M) + 0.5) * np.pi / M
        t = beta * np.cos(th)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        fx = f.d1(x)[:, None]
        ft = f.d1(t)[None, :]
        dx = x[:, None] - t[None, :]
        close = np.abs(dx) < 1e-7
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(close, np.broadcast_to(f.d2(x)[:, None], dx.shape), (fx - ft) / dx)
        return q.mean(axis=1) * np.pi

    def _one_cut(self, x):
        f, cc = self._void_member()
        beta = self.beta
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros_like(x)
        inside = np.abs(x) < beta
        if inside.any():
            xi = x[inside]
            out[inside] = np.sqrt(beta * beta - xi * xi) * self._H(f, xi) / (2 * np.pi**2 * cc)
        return out, inside

    def density(self, x) -> np.ndarray:
        """dμ/dx of this family's equilibrium measure."""
        psi, inside = self._one_cut(x)
        if self.gap == "void":
            return psi
        cc = 1 - self.c
        return (1.0 - cc * psi) / self.c

    def occupation(self, x) -> np.ndarray:
        """c·dμ/dx, the limiting one-point function (ρ⁰ ≡ 1)."""
        return self.c * self.density(x)

    def delta(self, x) -> np.ndarray:
        """δ(x) = 1/(c dμ/dx), the local mean spacing in node units."""
        return 1.0 / self.occupation(x)

    def mass(self) -> float:
        """Numerical ∫dμ over [-1/2, 1/2] (should be 1)."""
        xs, ws = np.polynomial.legendre.leggauss(400)
        beta = self.beta
        th = np.pi * (xs + 1) / 2
        inner = np.sum(self.density(beta * np.cos(th)) * beta * np.sin(th) * np.pi / 2 * ws)
        outer = (0.5 - beta) * 2 * (0.0 if self.gap == "void" else 1.0 / self.c)
        return float(inner + outer)

    def edge_constant(self) -> float:
        """B_β for a void edge, B̄_β for a saturated one.

        Inside the band near β the density of the void-adjacent member of
        the dual pair behaves like B·√(β - x). For a saturated edge this
        member describes the holes, so B̄_β is the hole-side constant.
        """
        f, cc = self._void_member()
        beta = self.beta
        H = float(self._H(f, np.array([beta]))[0])
        return math.sqrt(2 * beta) * H / (2 * math.pi**2 * cc)

    @property
    def edge_fraction(self) -> float:
        """Fraction of the species (particles or holes) that has a soft edge at β."""
        return self.c if self.gap == "void" else 1 - self.c

    def edge_scale(self, n_nodes: int) -> float:
        """(π·n·c·B)^{2/3}: x - β times this is the Airy variable."""
        return (math.pi * n_nodes * self.edge_fraction * self.edge_constant()) ** (2 / 3)

    def normalization_check(self) -> float:
        """(1/(2πc))∫ tφ'(t)/√(β²-t²) dt for the void-adjacent member; equals 1."""
        f, cc = self._void_member()
        M = self.quad
        th = (np.arange(M) + 0.5) * np.pi / M
        t = self.beta * np.cos(th)
        return float(np.mean(t * f.d1(t)) * np.pi / (2 * np.pi * cc))
