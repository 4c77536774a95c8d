"""Discrete orthonormal polynomials and the kernels built from them.

The recurrence coefficients come from the Stieltjes procedure run on the
orthonormal functions φ_n = √w·p_n directly. Each node carries its own
binary exponent so that neither √w nor p_n is ever formed separately.
When the 53-bit pass breaks down (nonpositive β or a poor Gram matrix)
the whole table is rebuilt with 256-bit MPFR arithmetic and rounded.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import gmpy2
import numpy as np
from scipy.special import logsumexp

from .ensembles import Ensemble, Mode, build_nodes, custom_weight
from .errors import (
    InvalidArgument,
    PrecisionEscalationError,
    SelfCheckError,
    SymmetryViolation,
)

__all__ = [
    "RecurrenceTable",
    "KernelKind",
    "KernelMatrix",
    "OddSplit",
    "compute_recurrence",
    "orthonormal_eval",
    "cd_kernel",
    "cd_quotient",
    "cd_diagonal",
    "sym_kernel",
    "split_odd",
    "hole_kernel",
    "ORTHO_TOL",
]

ORTHO_TOL = 1e-10
PRECISION_LADDER = (256, 512, 1024, 2048)


@dataclass(frozen=True, eq=False)
class RecurrenceTable:
    """Three-term recurrence data and orthonormal function values.

    Attributes
    ----------
    alpha, beta : ndarray
        ``π_{n+1} = (x - alpha[n]) π_n - beta[n] π_{n-1}``; ``beta[0]`` is
        the total mass (may overflow to inf, ``log_mass`` is exact).
    log_gamma : ndarray
        log of the leading coefficients γ_n = (beta[0]···beta[n])^{-1/2}.
    phi, dphi : ndarray, shape (degree_max + 1, n_nodes)
        φ_n and ψ_n = √w·p_n' at the nodes.
    """

    alpha: np.ndarray
    beta: np.ndarray
    log_gamma: np.ndarray
    log_mass: float
    degree_max: int
    precision_bits: int
    phi: np.ndarray = field(repr=False)
    dphi: np.ndarray = field(repr=False)
    residual: float = 0.0

    @property
    def gamma(self) -> np.ndarray:
        return np.exp(self.log_gamma)

    def orthonormality_residual(self, upto=None) -> float:
        P = self.phi if upto is None else self.phi[: upto + 1]
        G = P @ P.T
        return float(np.max(np.abs(G - np.eye(len(P)))))


def _stieltjes_float(x, logw, D):
    n = len(x)
    log_mass = float(logsumexp(logw))
    L = 0.5 * (logw - log_mass) / np.log(2.0)
    e = np.floor(L)
    v = np.exp2(L - e)
    vp = np.zeros(n)
    dv = np.zeros(n)
    dvp = np.zeros(n)
    phi = np.empty((D + 1, n))
    dphi = np.empty((D + 1, n))
    alpha = np.empty(D + 1)
    beta = np.empty(D + 1)
    beta[0] = np.exp(log_mass)
    phi[0] = np.ldexp(v, e.astype(int))
    dphi[0] = 0.0
    sb = 0.0
    ei = e.astype(int)
    for j in range(D + 1):
        cur = phi[j]
        a = float(np.dot(x * cur, cur))
        alpha[j] = a
        if j == D:
            break
        r = (x - a) * v - sb * vp
        dr = v + (x - a) * dv - sb * dvp
        ra = np.ldexp(r, ei)
        b = float(np.dot(ra, ra))
        if not b > 0.0 or not np.isfinite(b):
            return None, j + 1
        sb = np.sqrt(b)
        vp, v = v, r / sb
        dvp, dv = dv, dr / sb
        big = np.maximum(np.maximum(np.abs(v), np.abs(vp)), np.maximum(np.abs(dv), np.abs(dvp)))
        _, ex = np.frexp(big)
        ex = np.where(big > 0, ex, 0)
        v, vp, dv, dvp = (np.ldexp(t, -ex) for t in (v, vp, dv, dvp))
        ei = ei + ex
        phi[j + 1] = np.ldexp(v, ei)
        dphi[j + 1] = np.ldexp(dv, ei)
        beta[j + 1] = b
    lb = np.concatenate([[log_mass], np.log(beta[1:])])
    return (alpha, beta, -0.5 * np.cumsum(lb), log_mass, phi, dphi), None


def _stieltjes_mp(exact_nodes, logw, D, bits):
    ctx = gmpy2.get_context().copy()
    ctx.precision = bits
    with gmpy2.context(ctx):
        mpf = gmpy2.mpfr
        x = np.array([mpf(gmpy2.mpq(q.numerator, q.denominator)) for q in exact_nodes], dtype=object)
        lmax = float(np.max(logw))
        w = np.array([gmpy2.exp(mpf(float(l)) - mpf(lmax)) for l in logw], dtype=object)
        mass = sum(w)
        log_mass = float(gmpy2.log(mass)) + lmax
        v = np.array([gmpy2.sqrt(t / mass) for t in w], dtype=object)
        n = len(x)
        zero = mpf(0)
        vp = np.array([zero] * n, dtype=object)
        dv = vp.copy()
        dvp = vp.copy()
        phi = np.empty((D + 1, n))
        dphi = np.empty((D + 1, n))
        alpha = np.empty(D + 1)
        logb = [log_mass]
        phi[0] = [float(t) for t in v]
        dphi[0] = 0.0
        sb = zero
        for j in range(D + 1):
            a = np.dot(x * v, v)
            alpha[j] = float(a)
            if j == D:
                break
            r = (x - a) * v - sb * vp
            dr = v + (x - a) * dv - sb * dvp
            b = np.dot(r, r)
            if not b > 0:
                raise PrecisionEscalationError(
                    f"recurrence broke down at degree {j + 1} even at {bits} bits", degree=j + 1
                )
            sb = gmpy2.sqrt(b)
            vp, v = v, r / sb
            dvp, dv = dv, dr / sb
            phi[j + 1] = [float(t) for t in v]
            dphi[j + 1] = [float(t) for t in dv]
            logb.append(float(gmpy2.log(b)))
    lb = np.array(logb)
    beta = np.exp(lb)
    return alpha, beta, -0.5 * np.cumsum(lb), log_mass, phi, dphi


def compute_recurrence(e: Ensemble, max_degree: int | None = None, precision: str | int = "auto") -> RecurrenceTable:
    """Stieltjes recurrence for the weight of ``e`` on all of its nodes.

    Parameters
    ----------
    e : Ensemble
    max_degree : int, optional
        Highest degree; defaults to ``n_nodes - 1``.
    precision : {"auto", 53} or int
        ``"auto"`` tries 53-bit arithmetic and on breakdown or an
        orthonormality residual above 1e-10 rebuilds the table at 256 bits,
        doubling up to 2048 bits until the residual is met. An integer above
        53 forces MPFR arithmetic starting at that precision.
    """
    n = len(e.nodes)
    D = n - 1 if max_degree is None else int(max_degree)
    if not 0 <= D < n:
        raise InvalidArgument(f"max_degree={D} must be below the node count {n}")
    x = e.nodes.values
    logw = e.weight.logw
    if precision != "auto" and not (isinstance(precision, int) and precision >= 53):
        raise InvalidArgument("precision must be 'auto' or an integer >= 53")
    if precision in ("auto", 53):
        with np.errstate(over="ignore"):
            out, bad = _stieltjes_float(x, logw, D)
        if out is not None:
            rt = RecurrenceTable(*out[:4], D, 53, out[4], out[5])
            res = rt.orthonormality_residual()
            if res <= ORTHO_TOL:
                return _with_residual(rt, res)
            bad = None
        if precision == 53:
            raise PrecisionEscalationError(
                "53-bit recurrence lost orthonormality" + (f" at degree {bad}" if bad else ""), degree=bad
            )
    ladder = PRECISION_LADDER if precision == "auto" else (precision,)
    for bits in ladder:
        with np.errstate(over="ignore"):
            out = _stieltjes_mp(e.nodes.exact, logw, D, bits)
        rt = RecurrenceTable(*out[:4], D, bits, out[4], out[5])
        res = rt.orthonormality_residual()
        if res <= ORTHO_TOL:
            return _with_residual(rt, res)
    raise PrecisionEscalationError(f"orthonormality residual {res:.3g} at {bits} bits", degree=None)


def _with_residual(rt, res):
    object.__setattr__(rt, "residual", res)
    return rt


def orthonormal_eval(rt: RecurrenceTable, e: Ensemble, n: int, x) -> float:
    """φ_n(x) at node ``x``."""
    if not 0 <= n <= rt.degree_max:
        raise InvalidArgument(f"degree {n} exceeds table degree {rt.degree_max}")
    return float(rt.phi[n, e.nodes.index_of(x)])


class KernelKind(str, Enum):
    STANDARD = "standard"
    WALL = "wall_symmetric"
    HOLE = "hole"


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Dense symmetric kernel on a list of nodes.

    ``values`` are the float node positions the rows refer to (the positive
    half for wall-symmetric kernels). ``base`` records the kind of the
    kernel a hole kernel was derived from.
    """

    values: np.ndarray
    entries: np.ndarray
    rank: int
    kind: KernelKind
    meta: dict = field(default_factory=dict)
    base: KernelKind | None = None

    def __post_init__(self):
        M = np.asarray(self.entries, dtype=float)
        M = 0.5 * (M + M.T)
        M.setflags(write=False)
        object.__setattr__(self, "entries", M)
        v = np.asarray(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "kind", KernelKind(self.kind))
        object.__setattr__(self, "_index", {float(t): i for i, t in enumerate(v)})

    def __len__(self):
        return len(self.values)

    def index_of(self, x) -> int:
        from .errors import NotANode

        i = self._index.get(float(x))
        if i is None:
            raise NotANode(f"{x!r} is not a node of this kernel")
        return i

    def projection_residual(self) -> float:
        M = self.entries
        return float(np.max(np.abs(M @ M - M))) if len(M) else 0.0

    def trace(self) -> float:
        return float(np.trace(self.entries))

    def diagonal(self) -> np.ndarray:
        return np.diag(self.entries).copy()

    def to_csv(self, path=None) -> str:
        """Matrix CSV with node header row and column."""
        rows = ["node," + ",".join(repr(float(v)) for v in self.values)]
        for v, row in zip(self.values, self.entries):
            rows.append(repr(float(v)) + "," + ",".join(repr(float(t)) for t in row))
        text = "\n".join(rows) + "\n"
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    def sidecar(self) -> dict:
        return {
            "family": self.meta.get("family"),
            "N": len(self.values),
            "k": self.rank,
            "kind": self.kind.value,
            "precision_bits": self.meta.get("precision_bits"),
            "params": self.meta.get("params", {}),
        }

    def write(self, csv_path, json_path=None):
        self.to_csv(csv_path)
        if json_path is None:
            json_path = str(csv_path).rsplit(".", 1)[0] + ".json"
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(self.sidecar(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return csv_path, json_path


def _meta(e, rt):
    return {
        "family": e.weight.family,
        "params": dict(e.weight.params),
        "precision_bits": rt.precision_bits if rt is not None else 53,
        "mode": e.mode.value,
    }


def _quotient(rt, x, k):
    sb = np.sqrt(rt.beta[k])
    fk, fk1 = rt.phi[k], rt.phi[k - 1]
    num = sb * (np.outer(fk, fk1) - np.outer(fk1, fk))
    den = x[:, None] - x[None, :]
    np.fill_diagonal(den, 1.0)
    Q = num / den
    np.fill_diagonal(Q, 0.0)
    return Q


def _diag_form(rt, k):
    sb = np.sqrt(rt.beta[k])
    return sb * (rt.dphi[k] * rt.phi[k - 1] - rt.dphi[k - 1] * rt.phi[k])


def cd_quotient(rt: RecurrenceTable, e: Ensemble, k: int) -> np.ndarray:
    """Quotient form √β_k(φ_k(x)φ_{k-1}(y) - φ_{k-1}(x)φ_k(y))/(x - y).

    Needs ``rt.degree_max >= k``; the diagonal is left at zero.
    """
    if not 1 <= k <= rt.degree_max:
        raise InvalidArgument("quotient form needs 1 <= k <= degree_max")
    return _quotient(rt, e.nodes.values, k)


def cd_diagonal(rt: RecurrenceTable, k: int) -> np.ndarray:
    """Diagonal K(x,x) = √β_k(ψ_k φ_{k-1} - ψ_{k-1} φ_k) with ψ = √w·p'."""
    if not 1 <= k <= rt.degree_max:
        raise InvalidArgument("derivative form needs 1 <= k <= degree_max")
    return _diag_form(rt, k)


def cd_kernel(e: Ensemble, k: int | None = None, *, rt: RecurrenceTable | None = None,
              self_check: bool = False, tol: float = 1e-8) -> KernelMatrix:
    """Christoffel-Darboux kernel Σ_{n<k} φ_n(x)φ_n(y) on all nodes of ``e``.

    With ``self_check`` the quotient and derivative forms are computed as
    well and must agree with the sum within ``tol``.
    """
    n = len(e.nodes)
    k = e.k if k is None else int(k)
    if not 0 <= k <= n:
        raise InvalidArgument(f"k={k} outside 0..{n}")
    if k == 0:
        return KernelMatrix(e.nodes.values, np.zeros((n, n)), 0, KernelKind.STANDARD, _meta(e, rt))
    need = min(k, n - 1) if self_check else k - 1
    if rt is None or rt.degree_max < need:
        rt = compute_recurrence(e, need)
    P = rt.phi[:k]
    K = P.T @ P
    if self_check and k < n:
        Q = _quotient(rt, e.nodes.values, k)
        off = ~np.eye(n, dtype=bool)
        err = float(np.max(np.abs(Q - K)[off])) if n > 1 else 0.0
        derr = float(np.max(np.abs(_diag_form(rt, k) - np.diag(K))))
        if err > tol or derr > tol:
            raise SelfCheckError(f"Christoffel-Darboux self-check failed: quotient {err:.3g}, diagonal {derr:.3g}")
    return KernelMatrix(e.nodes.values, K, k, KernelKind.STANDARD, _meta(e, rt))


@dataclass(frozen=True, eq=False)
class OddSplit:
    """Polynomials q_j in t = y² on the positive nodes.

    ``chi[j]`` holds the normalized functions y·√w(y)·q_j(y²)/‖·‖ on the
    positive nodes, ``log_norm[j]`` the log of Σ_Y y² w q_j(y²)² for monic
    q_j, and ``log_norm_full[j]`` the same quantity predicted from the full
    table, log(1/(2γ²_{2j+1})).
    """

    y: np.ndarray
    chi: np.ndarray
    log_norm: np.ndarray
    log_norm_full: np.ndarray
    parity_residual: float


def split_odd(rt: RecurrenceTable, e: Ensemble, n_odd: int | None = None, tol: float = 1e-10) -> OddSplit:
    """Odd part of the recurrence as polynomials in the squared variable.

    Checks parity of the full family (α_n = 0, φ_n(-x) = ±φ_n(x)), then
    builds q_j independently by a Stieltjes procedure in t = y² with
    weight y²w(y) on the positive nodes. The norms of the monic q_j must
    reproduce 1/(2γ²_{2j+1}) from the full table.
    """
    if not e.nodes.symmetric or not e.weight.even:
        raise InvalidArgument("split_odd needs symmetric nodes and an even weight")
    D = rt.degree_max
    n_odd = (D + 1) // 2 if n_odd is None else int(n_odd)
    if 2 * n_odd - 1 > D:
        raise InvalidArgument("table degree too small for the requested odd polynomials")
    mirror = e.nodes.mirror_index()
    sign = np.where(np.arange(D + 1) % 2 == 0, 1.0, -1.0)[:, None]
    scale = np.maximum(np.abs(rt.phi), np.abs(rt.phi[:, mirror])).max(axis=1, keepdims=True)
    par = float(np.max(np.abs(rt.phi[:, mirror] - sign * rt.phi) / scale))
    par = max(par, float(np.max(np.abs(rt.alpha))) / float(np.max(np.abs(e.nodes.values))))
    if par > tol:
        raise SymmetryViolation(f"parity residual {par:.3g} exceeds {tol:g}")
    pos = e.nodes.positive_indices()
    y = e.nodes.values[pos]
    sub = _SubEnsemble([e.nodes.exact[i] ** 2 for i in pos], e.weight.logw[pos] + 2 * np.log(y))
    t_rt = compute_recurrence(sub, n_odd - 1) if n_odd else None
    if n_odd == 0:
        return OddSplit(y, np.zeros((0, len(y))), np.zeros(0), np.zeros(0), par)
    # q-orthonormal functions times √(y²w) are the normalized odd functions on Y
    chi = t_rt.phi.copy()
    log_norm = -2.0 * t_rt.log_gamma
    log_full = -np.log(2.0) - 2.0 * rt.log_gamma[1 : 2 * n_odd : 2]
    return OddSplit(y, chi, log_norm, log_full, par)


class _SubEnsemble:
    """Minimal stand-in carrying nodes and log-weights for compute_recurrence."""

    def __init__(self, t, logw):
        self.nodes = build_nodes(t)
        self.weight = custom_weight(logw)


def sym_kernel(e: Ensemble, *, rt: RecurrenceTable | None = None, self_check: bool = False,
               tol: float = 1e-10) -> KernelMatrix:
    """Wall-symmetric kernel K_{2N,2k}(x,y) - K_{2N,2k}(x,-y) on the positive nodes.

    With ``self_check`` the q_j construction of :func:`split_odd` is built
    too and must agree entrywise within ``tol``.
    """
    if e.mode is not Mode.WALL:
        if not (e.nodes.symmetric and e.weight.even):
            raise InvalidArgument("sym_kernel needs symmetric nodes and an even weight")
        e = e.with_k(e.k, Mode.WALL)
    k = e.k
    pos = e.nodes.positive_indices()
    neg = e.nodes.mirror_index()[pos]
    if k == 0:
        return KernelMatrix(e.nodes.values[pos], np.zeros((len(pos), len(pos))), 0, KernelKind.WALL, _meta(e, rt))
    if rt is None or rt.degree_max < 2 * k - 1:
        rt = compute_recurrence(e, 2 * k - 1)
    P = rt.phi[: 2 * k]
    K = P[:, pos].T @ P[:, pos] - P[:, pos].T @ P[:, neg]
    if self_check:
        sp = split_odd(rt, e, k)
        Kq = sp.chi.T @ sp.chi
        err = float(np.max(np.abs(Kq - K)))
        nerr = float(np.max(np.abs(sp.log_norm - sp.log_norm_full)))
        if err > tol or nerr > 1e-9:
            raise SelfCheckError(f"wall kernel self-check failed: entries {err:.3g}, norms {nerr:.3g}")
    return KernelMatrix(e.nodes.values[pos], K, k, KernelKind.WALL, _meta(e, rt))


def hole_kernel(km: KernelMatrix) -> KernelMatrix:
    """I - K on the same nodes."""
    if km.kind is KernelKind.HOLE:
        raise InvalidArgument("hole_kernel expects a particle kernel")
    n = len(km)
    return KernelMatrix(km.values, np.eye(n) - km.entries, n - km.rank, KernelKind.HOLE, dict(km.meta), km.kind)
