"""Exact sampling and gap probabilities.

Draws configurations from a projection kernel, compares empirical pair
frequencies with the exact law, and evaluates count distributions and
extremal-particle probabilities as finite determinants.

Run: python demos/02_sampling.py
"""
import numpy as np

from dopesym.dpp import count_distribution, enumerate_oracle, extremal_cdf, sample_batch
from dopesym.ensembles import hahn_ensemble, uniform_ensemble
from dopesym.orthopoly import cd_kernel


def pair_frequencies(n=100_000, seed=2024):
    e = uniform_ensemble([0, 1, 2, 3], 2)
    km = cd_kernel(e)
    batch = sample_batch(km, n, seed)
    orc = enumerate_oracle(e)
    print(f"{n} exact samples, uniform {{0,1,2,3}}, k = 2")
    keys, counts = np.unique(batch.indices, axis=0, return_counts=True)
    exact = {tuple(c): p for c, p in zip(orc.configs, orc.probs)}
    for key, cnt in zip(keys, counts):
        p = exact[tuple(key)]
        se = np.sqrt(p * (1 - p) / n)
        print(f"  {tuple(int(v) for v in key)}: empirical {cnt / n:.4f}  exact {p:.4f}  ({(cnt / n - p) / se:+.2f} s.e.)")
    print()


def counts_and_extremes():
    N, k = 40, 12
    km = cd_kernel(hahn_ensemble(N, 3.0, 3.0, k))
    B = range(N // 2, N)
    cd = count_distribution(km, B)
    print(f"Hahn N={N}, k={k}: number of particles in the right half")
    for m, p in enumerate(cd.probabilities):
        if p > 1e-4:
            print(f"  {m:2d}: {p:.4f}")
    print(f"  mean {cd.mean():.4f} (trace of K on the window {sum(km.entries[i, i] for i in B):.4f})")
    x = km.values
    print("  P(rightmost particle <= t):")
    for t in x[N - 12::2]:
        print(f"    t = {t:+.4f}: {extremal_cdf(km, t, 'rightmost'):.4f}")


if __name__ == "__main__":
    pair_frequencies()
    counts_and_extremes()
