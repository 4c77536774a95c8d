"""End-to-end acceptance checks, shared by the test suite and ``dopesym verify``.

Each ``criterion_<n>`` returns a :class:`CriterionResult`; none of them
raise on a failed check.
"""
from __future__ import annotations

import itertools
import math
import time
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .asymptotics import WallFamily, convergence_suite, tracy_widom
from .dpp import correlation_fn, enumerate_oracle, extremal_cdf
from .ensembles import (
    Ensemble,
    Mode,
    associated_hahn_weight,
    build_equispaced_nodes,
    build_nodes,
    hahn_ensemble,
    hahn_weight,
    uniform_ensemble,
    uniform_weight,
)
from .equilibrium import (
    hahn_beta,
    hahn_closed_forms,
    hahn_field,
    kkt_residuals,
    solve_equilibrium,
)
from .errors import AccuracyWarning
from .halfhex import (
    HexSpec,
    _level_crossing,
    arctic_profile,
    column_histogram,
    line_equilibrium,
    line_kernel,
    mcmc_chain,
    mcmc_tile,
    render_svg,
    tau_of_column,
    top_crossing_ks,
    wall_survival,
)
from .orthopoly import cd_kernel, compute_recurrence, cd_quotient, split_odd, sym_kernel

__all__ = ["CriterionResult", "CRITERIA", "run", "SUITES"]


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0
    limit: float = math.inf

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        timing = f"{self.seconds:.1f}s/{self.limit:.0f}s"
        return f"[{tag}] criterion {self.number:2d} {self.title} ({timing}): {self.summary()}"

    def summary(self) -> str:
        parts = []
        for k, v in self.detail.items():
            if isinstance(v, float):
                parts.append(f"{k}={v:.4g}")
            elif isinstance(v, (list, tuple)) and v and all(isinstance(t, float) for t in v):
                parts.append(f"{k}=[" + ", ".join(f"{t:.4g}" for t in v) + "]")
            else:
                parts.append(f"{k}={v}")
        return "; ".join(parts)

    def to_dict(self) -> dict:
        return {"number": self.number, "title": self.title, "pass": self.passed, "seconds": self.seconds,
                "limit_seconds": self.limit, "detail": _jsonable(self.detail)}


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(t) for k, t in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(t) for t in v]
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    return v


def _timed(number, title, limit):
    def deco(fn):
        def run_criterion(**kw):
            t0 = time.perf_counter()
            passed, detail = fn(**kw)
            dt = time.perf_counter() - t0
            if dt > limit:
                detail["runtime_exceeded"] = True
            return CriterionResult(number, title, bool(passed) and dt <= limit, detail, dt, limit)

        run_criterion.__name__ = fn.__name__
        run_criterion.__doc__ = fn.__doc__
        return run_criterion

    return deco


# ---- 1 ---------------------------------------------------------------------


def _small_ensembles():
    """Built-in families with N <= 8 nodes and k <= 4, both modes."""
    for N in range(2, 9):
        nodes = build_equispaced_nodes(N)
        weights = [uniform_weight(nodes)]
        for P, Q in ((1, 1), (2.5, 2.5), (1, 3)):
            weights += [hahn_weight(N, P, Q), associated_hahn_weight(N, P, Q)]
        for w in weights:
            for k in range(1, min(4, N) + 1):
                yield Ensemble(nodes, w, k, Mode.STANDARD)
            if N % 2 == 0 and w.even:
                for k in range(1, min(4, N // 2) + 1):
                    yield Ensemble(nodes, w, k, Mode.WALL)


@_timed(1, "oracle equivalence", 10)
def criterion_1():
    worst, count, n_ens = 0.0, 0, 0
    for e in _small_ensembles():
        n_ens += 1
        km = sym_kernel(e) if e.mode is Mode.WALL else cd_kernel(e)
        orc = enumerate_oracle(e)
        assert np.allclose(orc.nodes, km.values)
        n = len(km.values)
        for m in (1, 2, 3):
            for S in itertools.combinations(range(n), m):
                d = abs(correlation_fn(km, km.values[list(S)]) - orc.marginal(S))
                worst = max(worst, d)
                count += 1
    return worst <= 1e-10, {"ensembles": n_ens, "correlations": count, "max_error": worst}


# ---- 2 ---------------------------------------------------------------------


@_timed(2, "kernel identities", 60)
def criterion_2():
    sym_err = 0.0
    for N in (10, 20, 40, 60, 80, 100):
        for P in (1.0, 3.0, 0.5 * N + 1):
            e = hahn_ensemble(N, P, P, N // 4, Mode.WALL)
            rt = compute_recurrence(e, 2 * e.k - 1)
            K = sym_kernel(e, rt=rt).entries
            sp = split_odd(rt, e, e.k)
            sym_err = max(sym_err, float(np.max(np.abs(sp.chi.T @ sp.chi - K))))
    cd_err = 0.0
    for N in (10, 50, 100, 200):
        for k in (1, N // 4, N // 2):
            e = hahn_ensemble(N, 2.0, 3.0, k)
            rt = compute_recurrence(e, k)
            K = cd_kernel(e, rt=rt).entries
            Q = cd_quotient(rt, e, k)
            off = ~np.eye(N, dtype=bool)
            cd_err = max(cd_err, float(np.max(np.abs(Q - K)[off])))
    proj, trace = 0.0, 0.0
    for N in (20, 50, 100, 200):
        for k in (1, N // 3, N - 1):
            for e in (hahn_ensemble(N, 2.0, 2.0, k), uniform_ensemble(np.arange(N), k)):
                km = cd_kernel(e)
                proj = max(proj, km.projection_residual())
                trace = max(trace, abs(km.trace() - k))
        ew = hahn_ensemble(N, 2.0, 2.0, N // 4, Mode.WALL)
        km = sym_kernel(ew)
        proj = max(proj, km.projection_residual())
        trace = max(trace, abs(km.trace() - km.rank))
    ok = sym_err <= 1e-10 and cd_err <= 1e-8 and proj <= 1e-8 and trace <= 1e-8
    return ok, {"sym_vs_q": sym_err, "cd_sum_vs_quotient": cd_err, "projection": proj, "trace": trace}


# ---- 3 ---------------------------------------------------------------------


@_timed(3, "hand-checkable anchors", 30)
def criterion_3():
    e = uniform_ensemble([0, 1, 2, 3], 2)
    orc = enumerate_oracle(e)
    km = cd_kernel(e)
    one = orc.marginal([0])
    k00 = float(km.entries[0, 0])
    ew = uniform_ensemble([Fraction(-2), Fraction(-1), Fraction(1), Fraction(2)], 1, Mode.WALL)
    ow = enumerate_oracle(ew)
    law = dict(zip((tuple(ow.nodes[c]) for c in ow.configs), ow.probs))
    kw = np.diag(sym_kernel(ew).entries)
    pmax_oracle = sum(p for c, p in zip(orc.configs, orc.probs) if orc.nodes[c].max() <= 2)
    pmax = extremal_cdf(km, 2.0, "rightmost")
    errs = {
        "one_point_oracle": abs(one - 0.7),
        "one_point_kernel": abs(k00 - one),
        "wall_oracle": max(abs(law[(1.0,)] - 0.2), abs(law[(2.0,)] - 0.8)),
        "wall_kernel": float(np.max(np.abs(kw - [law[(1.0,)], law[(2.0,)]]))),
        "xmax_oracle": abs(pmax_oracle - 0.3),
        "xmax_kernel": abs(pmax - pmax_oracle),
    }
    return max(errs.values()) <= 1e-12, errs


# ---- 4 ---------------------------------------------------------------------


@_timed(4, "equilibrium vs closed form", 300)
def criterion_4(gridsize: int = 512):
    phi = hahn_field(1.0).as_field()
    detail = {}
    ok = True
    for c in (0.3, 0.5, 0.6):
        em = solve_equilibrium(phi, c=c, gridsize=gridsize)
        beta = hahn_beta(1.0, c)
        edges = em.band_edges()
        right = max(edges) if edges else float("nan")
        left = min(edges) if edges else float("nan")
        err = max(abs(right - beta), abs(left + beta))
        tol = max(0.01, 2 * em.h)
        kkt = kkt_residuals(em)
        ktol = 1e-3 * kkt["scale"]
        kok = kkt["void"] <= ktol and kkt["saturated"] <= ktol and kkt["band"] <= ktol
        ok &= err <= tol and kok
        detail[f"c={c}"] = {"edge": right, "beta": beta, "edge_error": err, "tol": tol,
                            "kkt": {k: kkt[k] for k in ("band", "void", "saturated")}, "kkt_tol": ktol}
    ident = 0.0
    for lam in np.linspace(0.25, 4.0, 10):
        for r in np.linspace(-0.95, 0.95, 10):
            tau = r * math.sqrt(3) * lam / 2
            cf = hahn_closed_forms(lam=lam, tau=tau)
            beta = hahn_closed_forms(A=cf.A_hex, c=1 - cf.c_hex).beta
            ident = max(ident, abs(2 / cf.c_hex * beta - cf.ellipse_y))
    ok &= ident <= 1e-10
    detail["ellipse_identity"] = ident
    return ok, detail


# ---- 5-7 -------------------------------------------------------------------

N_LADDER = (50, 100, 200, 400)


@_timed(5, "band/sine convergence", 120)
def criterion_5():
    fam = WallFamily.with_equilibrium(1.0, 0.5)
    band = convergence_suite(fam, "band", N_LADDER)
    wall = convergence_suite(fam, "wall", N_LADDER)
    return band.passed and wall.passed, {
        "band_errors": list(band.errors), "band_slope": band.slope,
        "wall_errors": list(wall.errors), "wall_slope": wall.slope,
    }


@_timed(6, "cross-term decay", 60)
def criterion_6():
    fam = WallFamily.with_equilibrium(1.0, 0.5)
    band = convergence_suite(fam, "cross_term", N_LADDER)
    vfam = WallFamily.with_equilibrium(1.0, 0.1)
    lo = vfam.equilibrium.beta + 0.05
    void = convergence_suite(vfam, "cross_term", (50, 100, 200), region=(lo, 0.5))
    ok = band.passed and void.errors[-1] < 1e-6
    return ok, {"band_errors": list(band.errors), "band_slope": band.slope,
                "void_region": (lo, 0.5), "void_N200": void.errors[-1]}


@_timed(7, "gap regimes", 30)
def criterion_7():
    void = convergence_suite(WallFamily.with_equilibrium(1.0, 0.1), "gap_void", (50, 100, 200))
    sat = convergence_suite(WallFamily.with_equilibrium(1.0, 0.8), "gap_saturated", (50, 100, 200))
    return void.passed and sat.passed, {
        "void_max_one_point": void.errors[-1], "saturated_max_one_minus": sat.errors[-1],
    }


# ---- 8-9 -------------------------------------------------------------------


@_timed(8, "edge / Tracy-Widom", 600)
def criterion_8(n_samples: int = 10_000, seed: int = 8):
    svals = (-6.0, -4.0, -2.0, 0.0, 2.0)
    self_conv = max(abs(tracy_widom(s, 40).value - tracy_widom(s, 80).value) for s in svals)
    ks = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AccuracyWarning)
        for k in (32, 64):
            h = HexSpec(k, 2 * k)
            prof = arctic_profile(h, h.R, n_samples, seed)
            ks[k] = top_crossing_ks(h, prof)
    ok = self_conv <= 1e-8 and ks[64] < ks[32]
    return ok, {"tw_order40_vs_80": self_conv, "ks_k32": ks[32], "ks_k64": ks[64]}


@_timed(9, "wall law", 300)
def criterion_9(n_samples: int = 10_000, seed: int = 9):
    h = HexSpec(32, 64)
    prof = arctic_profile(h, h.R, n_samples, seed)
    rows = wall_survival(h, prof, (0.6, 1.0, 1.6, 2.2, 3.0))
    z = [abs(emp - lim) / se for _, emp, lim, se in rows]
    return max(z) <= 3.0, {
        "empirical": [r[1] for r in rows], "limit": [r[2] for r in rows], "max_se_units": max(z),
    }


# ---- 10-11 -----------------------------------------------------------------


def corner_order(st) -> dict:
    """Fractions of the expected tile class in the three frozen corners.

    Top path near the left side steps up, near the right side steps down,
    and the top of the center column is covered by vertical tiles.
    """
    H = st.heights
    R = st.R
    q = max(1, R // 4)
    top = H[-1]
    left = float(np.mean(np.diff(top[: q + 1]) > 0))
    right = float(np.mean(np.diff(top[2 * R - q :]) < 0))
    lam = st.R / st.k
    cut2 = 2 * (math.sqrt(lam + 1) + 0.1) * st.k
    occupied = set(int(v) for v in H[:, R])
    tops = [v for v in range(1, 2 * st.k + R, 2) if v > cut2]
    vertical = float(np.mean([v not in occupied for v in tops])) if tops else float("nan")
    return {"up_left": left, "down_right": right, "vertical_top": vertical}


@_timed(10, "arctic picture", 600)
def criterion_10(n_samples: int = 2000, seed: int = 10, svg_path=None, burn_in: int | None = None):
    h = HexSpec(32, 64)
    st = mcmc_tile(h, 10 * h.k * h.R * h.R if burn_in is None else burn_in, seed)
    svg = render_svg(st, svg_path)
    corners = corner_order(st)
    corners_ok = st.is_valid() and min(corners.values()) >= 0.9
    shift = int(round(0.4 * h.R / 2)) * 2
    detail = {"corners": corners, "svg_bytes": len(svg)}
    ok = corners_ok
    for m in (h.R - shift, h.R, h.R + shift):
        prof = arctic_profile(h, m, n_samples, seed + m)
        d = abs(prof.crossing_half - prof.predicted)
        exact = _level_crossing(prof.ordinates, prof.exact) / h.k
        ok &= d <= 0.05
        detail[f"tau={tau_of_column(h, m):+.3f}"] = {
            "crossing_half": prof.crossing_half, "exact_profile_crossing": exact,
            "predicted": prof.predicted, "abs_error": d, "median_top_crossing": prof.median_edge,
        }
    return ok, detail


@_timed(11, "MCMC cross-validation", 300)
def criterion_11(n_states: int = 200, thin: int = 2000, seed: int = 11, window: int = 2):
    h = HexSpec(8, 16)
    m = h.R
    km = line_kernel(h, m)
    eq = line_equilibrium(h, m)
    z = km.values
    interior = z / (2 * len(z)) <= eq.beta - 0.05
    exact = np.diag(km.entries)
    states = mcmc_chain(h, n_states, thin, seed)
    _, raw = column_histogram(states, m)
    _, rb = column_histogram(states, m, rao_blackwell=True, window=window)
    err_rb = float(np.max(np.abs(rb - exact)[interior]))
    err_raw = float(np.max(np.abs(raw - exact)[interior]))
    valid = all(s.is_valid() for s in states)
    return valid and err_rb <= 0.05, {
        "sup_error": err_rb, "sup_error_raw_indicator": err_raw, "interior_nodes": int(interior.sum()),
        "rb_window": window,
    }


CRITERIA = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5, 6: criterion_6,
    7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10, 11: criterion_11,
}

SUITES = {
    "oracle": (1,), "kernel": (2,), "anchors": (3,), "equilibrium": (4,), "band": (5,), "cross": (6,),
    "gap": (7,), "edge": (8,), "wall": (9,), "arctic": (10,), "mcmc": (11,),
    "fast": (1, 2, 3, 7), "all": tuple(range(1, 12)),
}


def run(suite: str = "all", echo=print) -> list:
    out = []
    for n in SUITES[suite]:
        res = CRITERIA[n]()
        if echo is not None:
            echo(res.line())
        out.append(res)
    return out
