"""Lozenge tilings of the half-hexagon and their column laws.

A tiling is encoded by k non-intersecting lattice paths with steps
(1, ±1/2) that start and end at ordinates 1/2, ..., k - 1/2 and stay
strictly above the wall y = 0. Ordinates are stored doubled, so they are
integers: odd at even columns and even at odd columns.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numba
import numpy as np
from scipy.special import comb

from .asymptotics import ks_distance, tracy_widom_cdf, wall_cdf
from .dpp import SampleBatch, sample_batch
from .ensembles import (
    Ensemble,
    Mode,
    build_halfhex_line_nodes,
    custom_weight,
    halfhex_line_weight,
    hexline_to_ahe,
)
from .equilibrium import HahnEquilibrium, critical_c, ellipse_y
from .errors import InvalidArgument, UnsupportedVariant
from .orthopoly import KernelMatrix, sym_kernel

__all__ = [
    "HexSpec",
    "TilingState",
    "ArcticProfile",
    "line_ensemble",
    "line_kernel",
    "line_equilibrium",
    "sample_line",
    "minimal_state",
    "mcmc_tile",
    "mcmc_chain",
    "column_histogram",
    "render_svg",
    "tile_count",
    "region_area_tiles",
    "enumerate_line_law",
    "count_tilings",
    "arctic_profile",
    "tau_of_column",
]


@dataclass(frozen=True)
class HexSpec:
    k: int
    R: int

    def __post_init__(self):
        if int(self.k) < 1 or int(self.R) < 1:
            raise InvalidArgument("k and R must be positive")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "R", int(self.R))

    @property
    def lam(self) -> float:
        return self.R / self.k


def _check_column(h: HexSpec, m: int):
    if m % 2:
        raise UnsupportedVariant("odd columns are not supported")
    if not 2 <= m <= 2 * h.R - 2:
        raise InvalidArgument(f"column m={m} outside 2..2R-2")


def tau_of_column(h: HexSpec, m: int) -> float:
    """Horizontal position τ = (m - R)√3/(2k) in k-rescaled units."""
    return (m - h.R) * math.sqrt(3) / (2 * h.k)


def line_ensemble(h: HexSpec, m: int) -> Ensemble:
    """Wall-symmetric ensemble of the path crossings at column ``m``."""
    _check_column(h, m)
    return Ensemble(build_halfhex_line_nodes(h.k, h.R, m), halfhex_line_weight(h.k, h.R, m), h.k, Mode.WALL)


@lru_cache(maxsize=32)
def line_kernel(h: HexSpec, m: int) -> KernelMatrix:
    return sym_kernel(line_ensemble(h, m))


def line_equilibrium(h: HexSpec, m: int) -> HahnEquilibrium:
    """Limit data of the column law through its Associated Hahn identification.

    With n_f = |L_m| nodes, x = z/n_f, A = (P - 1)/n_f and c = 2k/n_f.
    """
    ahe = hexline_to_ahe(h.k, h.R, m)
    return HahnEquilibrium((ahe.P - 1) / ahe.N, 2 * h.k / ahe.N, "associated_hahn")


def sample_line(h: HexSpec, m: int, n_samples: int, seed: int, jobs: int = 1) -> SampleBatch:
    """Exact samples of the crossing ordinates at column ``m``."""
    return sample_batch(line_kernel(h, m), n_samples, seed, jobs=jobs)


# ---- tiling states -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TilingState:
    """Doubled ordinates ``heights[i, m]`` of path ``i`` at column ``m``."""

    k: int
    R: int
    heights: np.ndarray

    def __post_init__(self):
        H = np.array(self.heights, dtype=np.int64)
        if H.shape != (self.k, 2 * self.R + 1):
            raise InvalidArgument("heights must have shape (k, 2R+1)")
        H.setflags(write=False)
        object.__setattr__(self, "heights", H)

    @property
    def spec(self) -> HexSpec:
        return HexSpec(self.k, self.R)

    def violations(self) -> list:
        H = self.heights
        out = []
        if np.any(np.abs(np.diff(H, axis=1)) != 1):
            out.append("step")
        if self.k > 1 and np.any(np.diff(H, axis=0) <= 0):
            out.append("non-intersection")
        if np.any(H <= 0):
            out.append("wall")
        start = 2 * np.arange(self.k) + 1
        if not (np.array_equal(H[:, 0], start) and np.array_equal(H[:, -1], start)):
            out.append("boundary")
        return out

    def is_valid(self) -> bool:
        return not self.violations()

    def crossings(self, m: int) -> np.ndarray:
        """Ordinates (not doubled) of the paths at column ``m``."""
        return self.heights[:, m] / 2.0

    def to_json(self, path=None) -> str:
        text = json.dumps({"k": self.k, "R": self.R, "heights": self.heights.tolist()}, separators=(",", ":")) + "\n"
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_json(cls, text_or_path):
        if isinstance(text_or_path, str) and text_or_path.lstrip().startswith("{"):
            d = json.loads(text_or_path)
        else:
            with open(text_or_path, encoding="utf-8") as fh:
                d = json.load(fh)
        st = cls(int(d["k"]), int(d["R"]), np.array(d["heights"]))
        if not st.is_valid():
            raise InvalidArgument(f"invalid tiling state: {st.violations()}")
        return st


def minimal_state(h: HexSpec) -> TilingState:
    """Lowest configuration: ordinate i + 1/2 at even and i + 1 at odd columns."""
    i = np.arange(h.k)[:, None]
    m = np.arange(2 * h.R + 1)[None, :]
    return TilingState(h.k, h.R, 2 * i + 1 + (m % 2))


@numba.njit(cache=True)
def _flip_sweeps(H, n_proposals, seed):
    # xorshift64* stream; one 64-bit draw picks the path (low word) and column (high word)
    k = H.shape[0]
    ncol = H.shape[1]
    s = np.uint64(seed) * np.uint64(0x9E3779B97F4A7C15) + np.uint64(0x632BE59BD9B4E019)
    if s == 0:
        s = np.uint64(1)
    lo_mask = np.uint64(0xFFFFFFFF)
    nk = np.uint64(k)
    nm = np.uint64(ncol - 2)
    for _ in range(n_proposals):
        s ^= s >> np.uint64(12)
        s ^= s << np.uint64(25)
        s ^= s >> np.uint64(27)
        r = s * np.uint64(0x2545F4914F6CDD1D)
        i = np.int64(((r & lo_mask) * nk) >> np.uint64(32))
        m = 1 + np.int64(((r >> np.uint64(32)) * nm) >> np.uint64(32))
        left = H[i, m - 1]
        if left != H[i, m + 1]:
            continue
        new = left - 1 if H[i, m] > left else left + 1
        if new <= 0:
            continue
        if i > 0 and H[i - 1, m] >= new:
            continue
        if i < k - 1 and H[i + 1, m] <= new:
            continue
        H[i, m] = new
    return H


def mcmc_tile(h: HexSpec, sweeps: int, seed: int, state: TilingState | None = None) -> TilingState:
    """Single-lozenge flip dynamics; uniform law is stationary.

    A sweep is k(2R-1) proposals. Each proposal picks a path and an
    interior column uniformly; a local peak or valley is flipped when the
    result keeps every path strictly between its neighbours and above the
    wall.
    """
    if sweeps < 0:
        raise InvalidArgument("sweeps must be nonnegative")
    st = minimal_state(h) if state is None else state
    H = np.array(st.heights, dtype=np.int64)
    n = int(sweeps) * h.k * (2 * h.R - 1)
    if n:
        _flip_sweeps(H, n, int(seed) % (2**32))
    return TilingState(h.k, h.R, H)


def default_burn_in(h: HexSpec) -> int:
    return 10 * h.k * h.R * h.R


def mcmc_chain(h: HexSpec, n_states: int, thin: int, seed: int, burn_in: int | None = None) -> list:
    """States saved every ``thin`` sweeps after ``burn_in`` sweeps.

    Segment ``j`` of the chain is driven by seed ``seed + j`` so the chain
    is reproducible.
    """
    burn_in = default_burn_in(h) if burn_in is None else int(burn_in)
    st = mcmc_tile(h, burn_in, seed)
    out = []
    for j in range(int(n_states)):
        st = mcmc_tile(h, thin, seed + 1 + j, st)
        out.append(st)
    return out


def _wall_paths(w, u, v):
    """Number of ±1 walks (doubled units) from u to v in w steps staying > 0."""
    d = v - u
    if (w + d) % 2 or abs(d) > w:
        return 0.0
    return float(comb(w, (w + d) // 2, exact=True) - comb(w, (w + v + u) // 2, exact=True))


def column_histogram(states, m: int, rao_blackwell: bool = False, window: int = 1) -> tuple:
    """Occupation frequencies of the positive points of L_m over ``states``.

    With ``rao_blackwell`` each state contributes the exact conditional
    one-point function of column ``m`` given columns ``m - window`` and
    ``m + window`` (a two-step Eynard-Mehta kernel with reflected walk
    counts), which has the same mean and smaller variance than the raw
    indicator.
    """
    st0 = states[0]
    h = HexSpec(st0.k, st0.R)
    nodes = build_halfhex_line_nodes(h.k, h.R, m)
    pos = nodes.values[nodes.values > 0]
    dpos = np.rint(2 * pos).astype(int)
    idx = {int(v): j for j, v in enumerate(dpos)}
    w = int(window)
    if rao_blackwell and not 1 <= w <= min(m, 2 * h.R - m):
        raise InvalidArgument("window must satisfy 1 <= window <= min(m, 2R - m)")
    acc = np.zeros(len(pos))
    for st in states:
        H = st.heights
        if not rao_blackwell:
            for v in H[:, m]:
                acc[idx[int(v)]] += 1
            continue
        a = H[:, m - w]
        c = H[:, m + w]
        T1 = np.array([[_wall_paths(w, ai, x) for x in dpos] for ai in a])
        T2 = np.array([[_wall_paths(w, x, cl) for cl in c] for x in dpos])
        G = T1 @ T2
        Ginv = np.linalg.inv(G)
        acc += np.einsum("ix,li,xl->x", T1, Ginv, T2)
    return pos, acc / len(states)


# ---- rendering -------------------------------------------------------------

FILLS = ("#d9534f", "#5bc0de", "#f0ad4e")
_S3 = math.sqrt(3) / 2


def _vertical_positions(h: HexSpec, m: int) -> list:
    """Doubled positive ordinates of the vertical edges at column m (y = 0 excluded)."""
    mp = min(m, 2 * h.R - m)
    top2 = 2 * h.k - 1 + mp
    return list(range(top2, 0, -2))


def tile_count(h: HexSpec) -> int:
    """Number of whole lozenges: 2kR path tiles plus the vertical ones."""
    vert = sum(min(m, 2 * h.R - m) // 2 for m in range(1, 2 * h.R))
    return 2 * h.k * h.R + vert


def region_area_tiles(h: HexSpec) -> float:
    """Pentagon area minus the half-lozenges cut by the wall, in lozenge units."""
    k, R = h.k, h.R
    area = _S3 * (2 * R * k + R * R / 2)
    return (area - R * math.sqrt(3) / 4) / _S3


def _svg_polys(st: TilingState):
    h = st.spec
    H = st.heights
    polys = []
    for i in range(h.k):
        for m in range(1, 2 * h.R + 1):
            y0, y1 = H[i, m - 1] / 2, H[i, m] / 2
            cls = 0 if y1 > y0 else 1
            polys.append((cls, [(m - 1, y0 - 0.5), (m - 1, y0 + 0.5), (m, y1 + 0.5), (m, y1 - 0.5)]))
    for m in range(1, 2 * h.R):
        occupied = set(int(v) for v in H[:, m])
        for v in _vertical_positions(h, m):
            if v in occupied:
                continue
            y = v / 2
            polys.append((2, [(m - 1, y), (m, y + 0.5), (m + 1, y), (m, y - 0.5)]))
    return polys


def render_svg(st: TilingState, path=None, scale: float = 10.0) -> str:
    """SVG of the tiling with one fill per lozenge class; deterministic bytes."""
    if not st.is_valid():
        raise InvalidArgument(f"invalid tiling state: {st.violations()}")
    h = st.spec
    ymax = h.k + h.R / 2
    W = 2 * h.R * _S3 * scale
    Hh = ymax * scale
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:.2f}" height="{Hh:.2f}" viewBox="0 0 {W:.2f} {Hh:.2f}">',
        '<g stroke="#333333" stroke-width="0.3">',
    ]
    for cls, pts in _svg_polys(st):
        p = " ".join(f"{mx * _S3 * scale:.3f},{(ymax - y) * scale:.3f}" for mx, y in pts)
        lines.append(f'<polygon class="t{cls}" fill="{FILLS[cls]}" points="{p}"/>')
    lines += ["</g>", "</svg>", ""]
    text = "\n".join(lines)
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text


# ---- exact enumeration ------------------------------------------------------


def _column_states(n_paths, lo2, hi2, parity, wall):
    """Sorted tuples of doubled ordinates in [lo2, hi2] with the given parity."""
    vals = [v for v in range(lo2, hi2 + 1) if v % 2 == parity and (not wall or v > 0)]
    return list(itertools.combinations(vals, n_paths))


def _transfer_counts(starts, n_cols, wall, bound2):
    """Forward path-family counts column by column."""
    layers = [{tuple(starts): 1}]
    for m in range(1, n_cols + 1):
        nxt = {}
        for s, cnt in layers[-1].items():
            for steps in itertools.product((-1, 1), repeat=len(s)):
                t = tuple(a + b for a, b in zip(s, steps))
                if any(t[j] >= t[j + 1] for j in range(len(t) - 1)):
                    continue
                if wall and t[0] <= 0:
                    continue
                if max(abs(v) for v in t) > bound2:
                    continue
                nxt[t] = nxt.get(t, 0) + cnt
        layers.append(nxt)
    return layers


def enumerate_line_law(k: int, R: int, m: int, full: bool = False) -> dict:
    """Exact law of the column-``m`` crossings by counting path families.

    ``full=False`` counts half-hexagon families (k paths above the wall);
    ``full=True`` counts full-hexagon families (2k paths, no wall). Keys are
    tuples of crossing ordinates; values exact ``Fraction`` probabilities.
    """
    from fractions import Fraction

    if k > 3 or R > 4:
        raise InvalidArgument("enumeration is meant for tiny instances (k <= 3, R <= 4)")
    if full:
        starts = [2 * i + 1 for i in range(-k, k)]
    else:
        starts = [2 * i + 1 for i in range(k)]
    bound2 = 2 * k + R + 1
    fwd = _transfer_counts(starts, 2 * R, not full, bound2)
    target = tuple(starts)
    # backward counts by reversal symmetry of the step set
    bwd = _transfer_counts(starts, 2 * R, not full, bound2)
    Z = fwd[2 * R].get(target, 0)
    law = {}
    for s, cf in fwd[m].items():
        cb = bwd[2 * R - m].get(s, 0)
        if cf * cb:
            law[tuple(v / 2 for v in s)] = Fraction(cf * cb, Z)
    return law


def count_tilings(h: HexSpec, full: bool = False) -> int:
    starts = [2 * i + 1 for i in (range(-h.k, h.k) if full else range(h.k))]
    fwd = _transfer_counts(starts, 2 * h.R, not full, 2 * h.k + h.R + 1)
    return fwd[2 * h.R].get(tuple(starts), 0)


# ---- arctic statistics ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ArcticProfile:
    k: int
    R: int
    m: int
    ordinates: np.ndarray
    frequency: np.ndarray
    exact: np.ndarray
    limit: np.ndarray
    crossing_half: float
    median_edge: float
    predicted: float
    regime: str
    top: np.ndarray = field(repr=False)
    bottom: np.ndarray = field(repr=False)
    tau: float = 0.0
    n_samples: int = 0

    @property
    def rescaled(self) -> np.ndarray:
        return self.ordinates / self.k

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["ordinate", "rescaled", "frequency", "exact", "prediction"])
        for row in zip(self.ordinates, self.rescaled, self.frequency, self.exact, self.limit):
            w.writerow([repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    def summary(self) -> dict:
        return {
            "k": self.k, "R": self.R, "m": self.m, "tau": self.tau,
            "crossing_half": self.crossing_half, "median_edge": self.median_edge,
            "predicted": self.predicted, "regime": self.regime, "n_samples": self.n_samples,
        }

    def top_rescaled(self, eq: HahnEquilibrium, n_nodes: int) -> np.ndarray:
        """Airy-scaled top crossings (x - β)(π n c B)^{2/3} with x = z/n."""
        return (self.top / n_nodes - eq.beta) * eq.edge_scale(n_nodes)


def _level_crossing(z, f, level=0.5):
    """Largest z where the sequence f drops from >= level to < level (linear interpolation)."""
    above = np.nonzero(f >= level)[0]
    if len(above) == 0:
        return float("nan")
    j = above[-1]
    if j == len(f) - 1:
        return float(z[j])
    f0, f1 = f[j], f[j + 1]
    return float(z[j] + (f0 - level) * (z[j + 1] - z[j]) / (f0 - f1))


def arctic_profile(h: HexSpec, m: int, n_samples: int, seed: int, jobs: int = 1) -> ArcticProfile:
    """One-point profile of column ``m`` from exact samples, with edge statistics.

    ``crossing_half`` is where the profile of the species with a soft edge
    (particles next to a void, holes next to a saturated region) crosses
    1/2, divided by k. ``median_edge`` is the median of that species'
    topmost position, divided by k. ``predicted`` is the ellipse height.
    """
    _check_column(h, m)
    km = line_kernel(h, m)
    batch = sample_line(h, m, n_samples, seed, jobs)
    z = km.values
    freq = batch.frequencies()
    exact = np.diag(km.entries).copy()
    eq = line_equilibrium(h, m)
    n_nodes = len(z) * 2
    limit = eq.occupation(z / n_nodes)
    tau = tau_of_column(h, m)
    regime = "void-adjacent" if eq.gap == "void" else "saturated-adjacent"
    vals = batch.values
    if regime == "void-adjacent":
        prof = freq
        top = vals[:, -1]
    else:
        prof = 1.0 - freq
        occ = np.zeros((len(batch), len(z)), dtype=bool)
        np.put_along_axis(occ, batch.indices, True, axis=1)
        holes = ~occ
        last = len(z) - 1 - np.argmax(holes[:, ::-1], axis=1)
        top = np.where(holes.any(axis=1), z[last], 0.0)
    cross = _level_crossing(z, prof) / h.k
    med = float(np.median(top)) / h.k
    return ArcticProfile(h.k, h.R, m, z, freq, exact, limit, cross, med, ellipse_y(h.lam, tau), regime,
                         top, vals[:, 0], tau, int(n_samples))


def top_crossing_ks(h: HexSpec, prof: ArcticProfile, quad_order: int = 60) -> float:
    """KS distance between Airy-scaled top crossings and Tracy-Widom."""
    eq = line_equilibrium(h, prof.m)
    n_nodes = 2 * len(prof.ordinates)
    s = prof.top_rescaled(eq, n_nodes)
    return ks_distance(s, lambda v: tracy_widom_cdf(max(v, -10.0), quad_order))


def wall_survival(h: HexSpec, prof: ArcticProfile, s_values) -> list:
    """(s, empirical P(lowest crossing > s), limit det(I - 𝒮⁰|_B(s)), binomial s.e.)."""
    eq = line_equilibrium(h, prof.m)
    d0 = float(eq.delta(np.array([0.0]))[0])
    out = []
    n = len(prof.bottom)
    for s in s_values:
        emp = float(np.mean(prof.bottom > s))
        lim = wall_cdf(s, d0, 1.0)
        se = math.sqrt(max(lim * (1 - lim), 1e-300) / n)
        out.append((float(s), emp, lim, se))
    return out
