"""Node sets, weight families and ensemble descriptors.

Weights are always held as log-weights. Nodes are built from exact
rationals and rounded to binary floating point once, so membership tests
can go through exact keys instead of float tolerances.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import gammaln

from .errors import InvalidArgument, NotANode, UnsupportedVariant

__all__ = [
    "NodeDensity",
    "NodeSet",
    "WeightSpec",
    "Mode",
    "Ensemble",
    "AheIdentification",
    "build_equispaced_nodes",
    "build_halfhex_line_nodes",
    "build_nodes",
    "uniform_weight",
    "hahn_weight",
    "associated_hahn_weight",
    "halfhex_line_weight",
    "custom_weight",
    "make_ensemble",
    "hahn_ensemble",
    "associated_hahn_ensemble",
    "uniform_ensemble",
    "log_weight",
    "hexline_to_ahe",
    "extract_potential",
    "write_weight_csv",
    "read_weight_csv",
]


@dataclass(frozen=True)
class NodeDensity:
    """Piecewise-polynomial node density ρ⁰ on [a, b].

    Parameters
    ----------
    breaks : tuple of float
        Piece boundaries ``a = t_0 < ... < t_p = b``.
    coeffs : tuple of tuple of float
        Ascending power coefficients in ``x`` for each piece.
    """

    breaks: tuple
    coeffs: tuple

    @classmethod
    def constant(cls, a, b, value=None):
        if value is None:
            value = 1.0 / (float(b) - float(a))
        return cls((float(a), float(b)), ((float(value),),))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        piece = np.clip(np.searchsorted(self.breaks, x, side="right") - 1, 0, len(self.coeffs) - 1)
        out = np.zeros_like(x)
        for p, cf in enumerate(self.coeffs):
            sel = piece == p
            out[sel] = np.polynomial.polynomial.polyval(x[sel], cf)
        return out

    def cumulative(self, x):
        """∫_a^x ρ⁰, vectorized."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros_like(x)
        acc = 0.0
        for p, cf in enumerate(self.coeffs):
            lo, hi = self.breaks[p], self.breaks[p + 1]
            anti = np.polynomial.polynomial.polyint(cf)
            P = np.polynomial.polynomial.polyval
            inside = (x >= lo) & (x <= hi)
            out[inside] = acc + P(x[inside], anti) - P(lo, anti)
            acc += P(hi, anti) - P(lo, anti)
            out[x > hi] = acc
        return out

    def to_dict(self):
        return {"breaks": list(self.breaks), "coeffs": [list(c) for c in self.coeffs]}


def _frac(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, np.integer)):
        return Fraction(int(v))
    if isinstance(v, str):
        return Fraction(v)
    return Fraction(float(v))


@dataclass(frozen=True, eq=False)
class NodeSet:
    """Sorted real nodes held both exactly and as floats.

    Use :func:`build_nodes` or one of the builders rather than the raw
    constructor.
    """

    exact: tuple
    interval: tuple
    density: NodeDensity | None = None
    values: np.ndarray = field(init=False, repr=False)
    symmetric: bool = field(init=False)
    _index: dict = field(init=False, repr=False)
    _findex: dict = field(init=False, repr=False)

    def __post_init__(self):
        ex = tuple(_frac(v) for v in self.exact)
        a, b = (_frac(v) for v in self.interval)
        if len(ex) == 0:
            raise InvalidArgument("node set must not be empty")
        for u, v in zip(ex, ex[1:]):
            if not u < v:
                raise InvalidArgument("nodes must be strictly increasing (duplicate or unsorted node)")
        if ex[0] < a or ex[-1] > b:
            raise InvalidArgument("nodes must lie in the interval")
        vals = np.array([float(v) for v in ex])
        vals.setflags(write=False)
        n = len(ex)
        sym = n % 2 == 0 and all(ex[i] == -ex[n - 1 - i] for i in range(n // 2))
        object.__setattr__(self, "exact", ex)
        object.__setattr__(self, "interval", (a, b))
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "symmetric", sym)
        object.__setattr__(self, "_index", {v: i for i, v in enumerate(ex)})
        object.__setattr__(self, "_findex", {float(v): i for i, v in enumerate(vals)})

    def __len__(self):
        return len(self.exact)

    def __eq__(self, other):
        return isinstance(other, NodeSet) and self.exact == other.exact and self.interval == other.interval

    def __hash__(self):
        return hash((self.exact, self.interval))

    @property
    def a(self) -> float:
        return float(self.interval[0])

    @property
    def b(self) -> float:
        return float(self.interval[1])

    def index_of(self, x) -> int:
        """Index of node ``x``; exact match only."""
        if isinstance(x, (Fraction, int, np.integer)):
            i = self._index.get(Fraction(int(x)) if not isinstance(x, Fraction) else x)
        else:
            i = self._findex.get(float(x))
        if i is None:
            raise NotANode(f"{x!r} is not a node")
        return i

    def indices_of(self, xs) -> np.ndarray:
        return np.array([self.index_of(x) for x in xs], dtype=np.int64)

    def mirror_index(self) -> np.ndarray:
        """Index of -x for every node x (symmetric sets only)."""
        if not self.symmetric:
            raise InvalidArgument("node set is not symmetric")
        return np.arange(len(self))[::-1].copy()

    def positive_indices(self) -> np.ndarray:
        return np.nonzero(self.values > 0)[0]

    def quantization_residuals(self) -> np.ndarray:
        """|∫_a^{x_n} ρ⁰ − (2n+1)/(2N)| for every node."""
        if self.density is None:
            raise InvalidArgument("node set has no declared density")
        n = len(self)
        target = (2 * np.arange(n) + 1) / (2 * n)
        return np.abs(self.density.cumulative(self.values) - target)


def build_nodes(values, interval=None, density=None) -> NodeSet:
    ex = tuple(_frac(v) for v in values)
    if interval is None:
        interval = (min(ex), max(ex))
    return NodeSet(ex, tuple(interval), density)


def build_equispaced_nodes(N: int) -> NodeSet:
    """Nodes -1/2 + (2n+1)/(2N), n = 0..N-1, with ρ⁰ ≡ 1 on [-1/2, 1/2]."""
    N = int(N)
    if N < 1:
        raise InvalidArgument("N must be at least 1")
    ex = tuple(Fraction(-1, 2) + Fraction(2 * n + 1, 2 * N) for n in range(N))
    return NodeSet(ex, (Fraction(-1, 2), Fraction(1, 2)), NodeDensity.constant(-0.5, 0.5, 1.0))


def _check_halfhex(k, R, m):
    if k < 1 or R < 1:
        raise InvalidArgument("k and R must be positive")
    if not 1 <= m <= 2 * R - 1:
        raise InvalidArgument(f"column m={m} outside 1..2R-1")
    if m % 2:
        raise UnsupportedVariant("odd columns are not supported")


def build_halfhex_line_nodes(k: int, R: int, m: int) -> NodeSet:
    """Half-integer ordinates L_m where paths can cross column ``m``."""
    k, R, m = int(k), int(R), int(m)
    _check_halfhex(k, R, m)
    mp = min(m, 2 * R - m)
    top = Fraction(2 * k - 1 + mp, 2)
    n = 2 * k + mp
    ex = tuple(-top + j for j in range(n))
    return NodeSet(ex, (-top, top))


@dataclass(frozen=True, eq=False)
class WeightSpec:
    """Log-weight table on a node set.

    ``family`` names the generating family and ``params`` its parameters.
    """

    family: str
    params: dict
    logw: np.ndarray
    even: bool = field(init=False)

    def __post_init__(self):
        lw = np.array(self.logw, dtype=float)
        if lw.ndim != 1 or not np.all(np.isfinite(lw)):
            raise InvalidArgument("log-weights must be a finite 1-d table")
        lw.setflags(write=False)
        object.__setattr__(self, "logw", lw)
        object.__setattr__(self, "even", bool(np.array_equal(lw, lw[::-1])))

    def __len__(self):
        return len(self.logw)


def uniform_weight(nodes: NodeSet) -> WeightSpec:
    return WeightSpec("uniform", {}, np.zeros(len(nodes)))


def _hahn_logw(N, P, Q):
    n = np.arange(N, dtype=float)
    r = n[::-1]  # N-1-n, exact
    # pairs swap under n -> N-1-n when P == Q; float addition commutes, so evenness is exact
    return (gammaln(P + n) + gammaln(Q + r)) - (gammaln(n + 1) + gammaln(r + 1))


def _ahe_logw(N, P, Q):
    n = np.arange(N, dtype=float)
    r = n[::-1]
    return -((gammaln(n + 1) + gammaln(r + 1)) + (gammaln(P + n) + gammaln(Q + r)))


def _check_pq(N, P, Q):
    if N < 1:
        raise InvalidArgument("N must be at least 1")
    if not (P > 0 and Q > 0):
        raise InvalidArgument("P and Q must be positive")


def hahn_weight(N: int, P: float, Q: float) -> WeightSpec:
    """Hahn weight (P-1+n)!(Q+N-2-n)! / (n!(N-1-n)!) indexed by node number."""
    _check_pq(N, P, Q)
    return WeightSpec("hahn", {"N": int(N), "P": P, "Q": Q}, _hahn_logw(int(N), P, Q))


def associated_hahn_weight(N: int, P: float, Q: float) -> WeightSpec:
    """Associated Hahn weight 1 / (n!(P-1+n)!(N-1-n)!(Q+N-2-n)!)."""
    _check_pq(N, P, Q)
    return WeightSpec("associated_hahn", {"N": int(N), "P": P, "Q": Q}, _ahe_logw(int(N), P, Q))


def _halfhex_logw(k, R, m, z):
    a = m / 2 + k - 0.5
    b = R - m / 2 + k - 0.5
    return -((gammaln(a + z + 1) + gammaln(a - z + 1)) + (gammaln(b + z + 1) + gammaln(b - z + 1)))


def halfhex_line_weight(k: int, R: int, m: int) -> WeightSpec:
    """w̃(z) = 1/[(a+z)!(a-z)!(b+z)!(b-z)!] on L_m, a = m/2+k-1/2, b = R-m/2+k-1/2."""
    nodes = build_halfhex_line_nodes(k, R, m)
    lw = _halfhex_logw(k, R, m, nodes.values)
    return WeightSpec("halfhex_line", {"k": int(k), "R": int(R), "m": int(m)}, lw)


def custom_weight(logw, name: str = "custom") -> WeightSpec:
    return WeightSpec(name, {}, np.asarray(logw, dtype=float))


class Mode(str, Enum):
    STANDARD = "standard"
    WALL = "wall_symmetric"


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Nodes, weight, particle count and symmetry mode.

    In wall-symmetric mode ``nodes`` is the full symmetric set and the
    ``k`` particles live on its positive half.
    """

    nodes: NodeSet
    weight: WeightSpec
    k: int
    mode: Mode = Mode.STANDARD

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "k", int(self.k))
        if len(self.weight) != len(self.nodes):
            raise InvalidArgument("weight table and node set differ in length")
        if self.mode is Mode.WALL:
            if len(self.nodes) % 2:
                raise UnsupportedVariant("odd node count (0 a node) is not supported in wall-symmetric mode")
            if not self.nodes.symmetric:
                raise InvalidArgument("wall-symmetric mode needs a symmetric node set")
            if not self.weight.even:
                raise InvalidArgument("wall-symmetric mode needs an even weight")
        if not 0 <= self.k <= self.N:
            raise InvalidArgument(f"k={self.k} outside 0..{self.N}")

    @property
    def N(self) -> int:
        """Number of nodes available to particles."""
        n = len(self.nodes)
        return n // 2 if self.mode is Mode.WALL else n

    @property
    def c(self) -> float:
        return self.k / self.N

    @property
    def particle_nodes(self) -> np.ndarray:
        """Float values of the nodes particles can occupy."""
        if self.mode is Mode.WALL:
            return self.nodes.values[self.nodes.positive_indices()]
        return self.nodes.values

    def with_k(self, k: int, mode=None) -> "Ensemble":
        return Ensemble(self.nodes, self.weight, k, self.mode if mode is None else mode)

    def describe(self) -> dict:
        return {
            "family": self.weight.family,
            "params": dict(self.weight.params),
            "nodes": len(self.nodes),
            "k": self.k,
            "mode": self.mode.value,
        }


def make_ensemble(nodes, weight, k, mode=Mode.STANDARD) -> Ensemble:
    return Ensemble(nodes, weight, k, mode)


def uniform_ensemble(values, k, mode=Mode.STANDARD) -> Ensemble:
    nodes = build_nodes(values)
    return Ensemble(nodes, uniform_weight(nodes), k, mode)


def hahn_ensemble(N, P, Q, k, mode=Mode.STANDARD) -> Ensemble:
    return Ensemble(build_equispaced_nodes(N), hahn_weight(N, P, Q), k, mode)


def associated_hahn_ensemble(N, P, Q, k, mode=Mode.STANDARD) -> Ensemble:
    return Ensemble(build_equispaced_nodes(N), associated_hahn_weight(N, P, Q), k, mode)


def log_weight(e: Ensemble, x) -> float:
    """log w(x) at node ``x``."""
    return float(e.weight.logw[e.nodes.index_of(x)])


class AheIdentification(NamedTuple):
    N: int
    P: int
    Q: int
    shift: Fraction


def hexline_to_ahe(k: int, R: int, m: int) -> AheIdentification:
    """Associated Hahn parameters of the column-``m`` line law.

    For ``m > R`` the mirror column ``2R - m`` is used, since L_m and the
    weight are symmetric under ``m -> 2R - m``. Node ``z`` of L_m is AHE
    index ``n = z + shift``.
    """
    k, R, m = int(k), int(R), int(m)
    _check_halfhex(k, R, m)
    mp = min(m, 2 * R - m)
    N = 2 * k + mp
    return AheIdentification(N, R - mp + 1, R - mp + 1, Fraction(mp, 2) + k - Fraction(1, 2))


def extract_potential(e: Ensemble) -> np.ndarray:
    """V_N(x_n) = -(1/N)[log w(x_n) + Σ_{m≠n} log|x_n - x_m|] over all nodes."""
    x = e.nodes.values
    n = len(x)
    if n < 2:
        raise InvalidArgument("need at least two nodes")
    d = np.abs(x[:, None] - x[None, :])
    np.fill_diagonal(d, 1.0)
    # sorted rows make mirror nodes sum identical terms, so symmetry is exact
    return -(e.weight.logw + np.log(np.sort(d, axis=1)).sum(axis=1)) / n


def write_weight_csv(nodes: NodeSet, weight: WeightSpec, path=None) -> str:
    """CSV with header ``node,log_weight``; floats written with repr."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node", "log_weight"])
    for x, lw in zip(nodes.values, weight.logw):
        w.writerow([repr(float(x)), repr(float(lw))])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def read_weight_csv(source) -> tuple[NodeSet, WeightSpec]:
    """Inverse of :func:`write_weight_csv`; ``source`` is a path or file object."""
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    else:
        rows = list(csv.reader(source))
    if not rows or [h.strip() for h in rows[0]] != ["node", "log_weight"]:
        raise InvalidArgument("weight CSV needs header node,log_weight")
    body = [r for r in rows[1:] if r]
    try:
        xs = [float(r[0]) for r in body]
        lw = [float(r[1]) for r in body]
    except (ValueError, IndexError) as exc:
        raise InvalidArgument(f"malformed weight CSV: {exc}") from None
    if not all(math.isfinite(v) for v in xs):
        raise InvalidArgument("non-finite node")
    nodes = build_nodes(xs)
    return nodes, custom_weight(lw)
