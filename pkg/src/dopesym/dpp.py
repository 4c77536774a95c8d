"""Exact sampling, correlation functions and counting statistics.

Random numbers
--------------
Configuration ``j`` of a batch with seed ``s`` consumes its own stream:
numpy's Philox4x64-10 bit generator with ``key=s`` and
``counter=(0, j, 0, 0)``. The r-th particle of that configuration uses
the r-th raw 64-bit output ``x`` mapped to ``(x >> 11) * 2**-53``. A port
that reproduces this mapping replays every sample exactly.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import gmpy2
import numpy as np

from .ensembles import Ensemble, Mode
from .errors import CapacityError, InvalidArgument, InvalidKernel
from .orthopoly import KernelKind, KernelMatrix, hole_kernel

__all__ = [
    "ParticleConfiguration",
    "SampleBatch",
    "CountDistribution",
    "OracleResult",
    "uniform_stream",
    "correlation_fn",
    "sample",
    "sample_batch",
    "enumerate_oracle",
    "count_distribution",
    "extremal_cdf",
]

PROJECTION_TOL = 1e-6
ORACLE_CAP = 10**6


def uniform_stream(seed: int, index: int, count: int) -> np.ndarray:
    """Uniform deviates in [0, 1) for configuration ``index`` of a batch."""
    bg = np.random.Philox(key=int(seed), counter=[0, int(index), 0, 0])
    raw = bg.random_raw(int(count)) if count else np.zeros(0, dtype=np.uint64)
    return (np.asarray(raw, dtype=np.uint64) >> np.uint64(11)).astype(float) * 2.0**-53


@dataclass(frozen=True)
class ParticleConfiguration:
    indices: tuple
    values: tuple
    seed: int | None = None


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """``indices[j]`` holds the sorted node indices of configuration ``j``."""

    indices: np.ndarray
    nodes: np.ndarray
    seed: int

    def __len__(self):
        return len(self.indices)

    @property
    def values(self) -> np.ndarray:
        return self.nodes[self.indices]

    def configuration(self, j) -> ParticleConfiguration:
        idx = self.indices[j]
        return ParticleConfiguration(tuple(int(i) for i in idx), tuple(float(v) for v in self.nodes[idx]), self.seed)

    def frequencies(self) -> np.ndarray:
        """Empirical one-point occupation frequency per node."""
        counts = np.bincount(self.indices.ravel(), minlength=len(self.nodes))
        return counts / max(len(self), 1)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        k = self.indices.shape[1]
        w.writerow([f"x{r}" for r in range(k)])
        for row in self.values:
            w.writerow([repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


def _check_projection(km: KernelMatrix, tol=PROJECTION_TOL):
    res = km.projection_residual()
    if res > tol:
        raise InvalidKernel(f"kernel is not a projection (residual {res:.3g})")
    tr = km.trace()
    if abs(tr - km.rank) > tol:
        raise InvalidKernel(f"kernel trace {tr:.6g} differs from rank {km.rank}")


def _draw(K, k, u):
    n = len(K)
    d = np.clip(np.diag(K).copy(), 0.0, None)
    C = np.empty((k, n))
    out = np.empty(k, dtype=np.int64)
    for r in range(k):
        cum = np.cumsum(d)
        i = int(np.searchsorted(cum, u[r] * cum[-1], side="right"))
        i = min(i, n - 1)
        while d[i] <= 0.0:
            i -= 1
        col = K[:, i] - C[:r].T @ C[:r, i]
        col /= math.sqrt(col[i])
        C[r] = col
        d -= col * col
        d[i] = 0.0
        np.clip(d, 0.0, None, out=d)
        out[r] = i
    out.sort()
    return out


def sample(km: KernelMatrix, seed: int, index: int = 0) -> ParticleConfiguration:
    """One exact sample of the projection DPP with kernel ``km``."""
    b = sample_batch(km, 1, seed, start=index)
    return b.configuration(0)


def sample_batch(km: KernelMatrix, n_samples: int, seed: int, *, start: int = 0, jobs: int = 1,
                 check: bool = True) -> SampleBatch:
    """``n_samples`` exact samples by sequential Schur-complement conditioning.

    The result does not depend on ``jobs``; each configuration owns its
    random stream (see module docstring).
    """
    if check:
        _check_projection(km)
    k = km.rank
    K = np.ascontiguousarray(km.entries)
    n_samples = int(n_samples)
    out = np.empty((n_samples, k), dtype=np.int64)

    def work(lo, hi):
        for j in range(lo, hi):
            out[j] = _draw(K, k, uniform_stream(seed, start + j, k))

    jobs = max(1, int(jobs))
    if jobs == 1 or n_samples < 2 * jobs:
        work(0, n_samples)
    else:
        cuts = np.linspace(0, n_samples, jobs + 1).astype(int)
        with ThreadPoolExecutor(jobs) as ex:
            list(ex.map(lambda ab: work(*ab), zip(cuts[:-1], cuts[1:])))
    return SampleBatch(out, km.values, int(seed))


def correlation_fn(km: KernelMatrix, sites) -> float:
    """m-point correlation det(K(x_i, x_j)) at distinct node values ``sites``."""
    idx = [km.index_of(s) for s in sites]
    if len(set(idx)) != len(idx):
        raise InvalidArgument("correlation sites must be distinct")
    if not idx:
        return 1.0
    return float(np.linalg.det(km.entries[np.ix_(idx, idx)]))


@dataclass(frozen=True, eq=False)
class OracleResult:
    """Exact law of an ensemble by enumeration.

    ``configs`` holds particle-node indices (positive half in wall mode),
    ``probs`` the probabilities, ``log_Z`` the log of the normalization of
    the defining product formula.
    """

    nodes: np.ndarray
    configs: np.ndarray
    probs: np.ndarray
    log_Z: float
    mode: Mode
    Z: float = math.inf

    def marginal(self, sites) -> float:
        """P(every listed node index is occupied)."""
        sites = list(sites)
        if not sites:
            return 1.0
        hit = np.ones(len(self.configs), dtype=bool)
        for s in sites:
            hit &= (self.configs == s).any(axis=1)
        return float(self.probs[hit].sum())

    def one_point(self) -> np.ndarray:
        return np.array([self.marginal([i]) for i in range(len(self.nodes))])


def enumerate_oracle(e: Ensemble, bits: int = 256) -> OracleResult:
    """Every configuration with its probability from the product formulas.

    Squared Vandermonde (or squared difference of squares times Π x², in
    wall mode) products use exact rationals; weights enter through MPFR
    exponentials at ``bits`` precision.
    """
    if e.mode is Mode.WALL:
        pos = e.nodes.positive_indices()
    else:
        pos = np.arange(len(e.nodes))
    n, k = len(pos), e.k
    if math.comb(n, k) > ORACLE_CAP:
        raise CapacityError(f"binomial({n},{k}) exceeds {ORACLE_CAP}")
    ex = [e.nodes.exact[i] for i in pos]
    lw = e.weight.logw[pos]
    lmax = float(lw.max())
    ctx = gmpy2.get_context().copy()
    ctx.precision = bits
    with gmpy2.context(ctx):
        w = [gmpy2.exp(gmpy2.mpfr(float(v)) - lmax) for v in lw]
        q = [gmpy2.mpq(f.numerator, f.denominator) for f in ex]
        if e.mode is Mode.WALL:
            t = [v * v for v in q]
            w = [wi * ti for wi, ti in zip(w, t)]
        else:
            t = q
        configs = list(itertools.combinations(range(n), k))
        vals = []
        for S in configs:
            v = gmpy2.mpq(1)
            for i, j in itertools.combinations(S, 2):
                v *= (t[i] - t[j]) ** 2
            p = gmpy2.mpfr(v)
            for i in S:
                p *= w[i]
            vals.append(p)
        Z = sum(vals, gmpy2.mpfr(0))
        probs = np.array([float(v / Z) for v in vals])
        log_Z = float(gmpy2.log(Z)) + k * lmax
        Zf = float(Z * gmpy2.exp(gmpy2.mpfr(k * lmax)))
    arr = np.array(configs, dtype=np.int64).reshape(len(configs), k)
    return OracleResult(e.nodes.values[pos], arr, probs, log_Z, e.mode, Zf)


@dataclass(frozen=True)
class CountDistribution:
    window: tuple
    probabilities: np.ndarray = field(repr=False)

    def mean(self) -> float:
        return float(np.dot(np.arange(len(self.probabilities)), self.probabilities))

    def to_json(self) -> str:
        return json.dumps({"window": list(self.window), "probabilities": [float(p) for p in self.probabilities]})


def count_distribution(km: KernelMatrix, B, tol: float = 1e-8) -> CountDistribution:
    """Law of the number of points in node-index set ``B``.

    Uses the eigenvalues λ_i of K restricted to B: the generating function
    Σ A_m s^m equals Π((1-λ_i) + λ_i s).
    """
    B = sorted(int(i) for i in B)
    if not B:
        raise InvalidArgument("window must be nonempty")
    if len(set(B)) != len(B) or B[0] < 0 or B[-1] >= len(km):
        raise InvalidArgument("window indices invalid")
    lam = np.linalg.eigvalsh(km.entries[np.ix_(B, B)])
    if lam.min() < -tol or lam.max() > 1 + tol:
        raise InvalidKernel(f"eigenvalue outside [0,1]: [{lam.min():.3g}, {lam.max():.3g}]")
    lam = np.clip(lam, 0.0, 1.0)
    poly = np.array([1.0])
    for l in lam:
        poly = np.convolve(poly, [1.0 - l, l])
    m = min(len(B), km.rank)
    A = np.clip(poly[: m + 1], 0.0, None)
    return CountDistribution(tuple(B), A)


def extremal_cdf(km: KernelMatrix, t: float, side: str = "rightmost", species: str = "particle") -> float:
    """Gap probability at an extreme of the configuration.

    ``rightmost``: P(x_max <= t) = det(I - K|_{x > t}).
    ``leftmost``:  P(x_min >= t) = det(I - K|_{x < t}).
    ``species="hole"`` applies the same to the hole kernel I - K.
    """
    if side not in ("rightmost", "leftmost"):
        raise InvalidArgument("side must be 'rightmost' or 'leftmost'")
    if species not in ("particle", "hole"):
        raise InvalidArgument("species must be 'particle' or 'hole'")
    x = km.values
    if not x[0] <= t <= x[-1]:
        raise InvalidArgument(f"threshold {t} outside node range")
    K = km
    if species == "hole":
        K = km if km.kind is KernelKind.HOLE else hole_kernel(km)
    sel = np.nonzero(x > t)[0] if side == "rightmost" else np.nonzero(x < t)[0]
    if len(sel) == 0:
        return 1.0
    M = np.eye(len(sel)) - K.entries[np.ix_(sel, sel)]
    return float(np.linalg.det(M))
