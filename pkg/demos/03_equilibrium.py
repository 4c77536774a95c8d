"""Constrained equilibrium measures.

Solves the upper-constrained energy problem for the Hahn field at several
filling fractions c, prints the region structure (void, band, saturated)
and compares the band edge with its closed form. The last part recovers
the same answer starting only from a table of discrete weights.

Run: python demos/03_equilibrium.py
"""
from dopesym.ensembles import extract_potential, hahn_ensemble
from dopesym.equilibrium import (
    build_field,
    critical_c,
    hahn_beta,
    hahn_field,
    kkt_residuals,
    solve_equilibrium,
)


def sweep(A=1.0):
    print(f"Hahn field A = {A}; the outer regions switch from void to saturated at c = {critical_c(A):.6f}")
    phi = hahn_field(A).as_field()
    for c in (0.1, 0.3, 0.5, 0.6, 0.8):
        em = solve_equilibrium(phi, c=c, gridsize=512)
        regions = ", ".join(f"{r.kind}[{r.lo:+.3f},{r.hi:+.3f}]" for r in em.regions)
        kkt = kkt_residuals(em)
        print(f"  c = {c}: {regions}")
        print(f"         solver edge {max(em.band_edges()):.5f}, closed form {hahn_beta(A, c):.5f}, "
              f"KKT band residual {kkt['band']:.1e}")
    print()


def from_weights(N=400, c=0.5):
    print(f"field extracted from the Hahn weights at N = {N}, P = Q = N + 1")
    e = hahn_ensemble(N, N + 1, N + 1, 1)
    phi = build_field((e.nodes.values, extract_potential(e)), -0.5, 0.5, 1.0)
    em = solve_equilibrium(phi, c=c, gridsize=512)
    print(f"  band edge {max(em.band_edges()):.5f} vs closed form {hahn_beta(1.0, c):.5f}")


if __name__ == "__main__":
    sweep()
    from_weights()
