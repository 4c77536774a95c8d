"""Correlation kernels of discrete orthogonal polynomial ensembles.

Builds the Christoffel-Darboux kernel for a few small ensembles, checks it
against brute-force enumeration of the Gibbs law, and shows the
wall-symmetric kernel K(x, y) - K(x, -y) at work on a symmetric lattice.

Run: python demos/01_kernels_and_oracle.py
"""
import itertools

import numpy as np

from dopesym.dpp import correlation_fn, enumerate_oracle
from dopesym.ensembles import Mode, hahn_ensemble, uniform_ensemble
from dopesym.orthopoly import cd_kernel, cd_quotient, compute_recurrence, split_odd, sym_kernel


def show_uniform():
    print("uniform weight on {0,1,2,3}, k = 2")
    e = uniform_ensemble([0, 1, 2, 3], 2)
    km = cd_kernel(e)
    np.set_printoptions(precision=4, suppress=True)
    print(km.entries)
    orc = enumerate_oracle(e)
    for conf, p in zip(orc.configs, orc.probs):
        print(f"  P{tuple(int(orc.nodes[i]) for i in conf)} = {p:.4f}")
    print(f"  one-point at 0: kernel {km.entries[0, 0]:.4f}, oracle {orc.marginal([0]):.4f}")
    print()


def show_wall():
    print("wall-symmetric uniform weight on {-2,-1,1,2}, one particle above the wall")
    km = sym_kernel(uniform_ensemble([-2, -1, 1, 2], 1, Mode.WALL))
    print(f"  nodes {km.values}, occupation {np.diag(km.entries)}")
    print()


def show_hahn():
    N, P, Q, k = 8, 2.5, 4.0, 3
    print(f"Hahn ensemble N={N}, P={P}, Q={Q}, k={k}: determinants against enumeration")
    e = hahn_ensemble(N, P, Q, k)
    km = cd_kernel(e)
    orc = enumerate_oracle(e)
    worst = 0.0
    for m in (1, 2, 3):
        for S in itertools.combinations(range(N), m):
            worst = max(worst, abs(correlation_fn(km, km.values[list(S)]) - orc.marginal(S)))
    print(f"  max |det K_S - P(S occupied)| over all 1-, 2-, 3-point sets: {worst:.2e}")
    rt = compute_recurrence(e, k)
    Q_ = cd_quotient(rt, e, k)
    off = ~np.eye(N, dtype=bool)
    print(f"  sum form vs quotient form, off-diagonal: {np.max(np.abs(Q_ - km.entries)[off]):.2e}")
    print(f"  projection residual ||K^2 - K||: {km.projection_residual():.2e}, trace {km.trace():.12f}")
    print()


def show_two_routes():
    print("wall kernel two ways on Hahn N=100 (50 positive nodes), k=25")
    e = hahn_ensemble(100, 51.0, 51.0, 25, Mode.WALL)
    rt = compute_recurrence(e, 49)
    K = sym_kernel(e, rt=rt).entries
    sp = split_odd(rt, e, 25)
    print(f"  subtraction form vs odd-polynomial form: {np.max(np.abs(sp.chi.T @ sp.chi - K)):.2e}")


if __name__ == "__main__":
    show_uniform()
    show_wall()
    show_hahn()
    show_two_routes()
