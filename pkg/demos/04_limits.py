"""Local limits of the wall-symmetric Hahn kernel.

Prints sup-errors against the sine kernels in the bulk and at the wall,
then tabulates the Tracy-Widom law and the wall survival function.

Run: python demos/04_limits.py
"""
from dopesym.asymptotics import WallFamily, convergence_suite, tracy_widom, wall_cdf


def bulk_and_wall():
    fam = WallFamily.with_equilibrium(1.0, 0.5)
    for regime in ("band", "wall", "cross_term"):
        rep = convergence_suite(fam, regime, (50, 100, 200, 400))
        errs = "  ".join(f"{e:.2e}" for e in rep.errors)
        print(f"{regime:>10}: sup-errors {errs}  slope {rep.slope:+.3f}  ({rep.criterion}: {'ok' if rep.passed else 'no'})")
    for c, regime in ((0.1, "gap_void"), (0.8, "gap_saturated")):
        rep = convergence_suite(WallFamily.with_equilibrium(1.0, c), regime, (50, 100, 200))
        print(f"{regime:>10}: c = {c}, error at N = 200: {rep.errors[-1]:.1e}")
    print()


def tracy_widom_table():
    print("Tracy-Widom F(s) by Nystrom quadrature")
    for s in (-4, -3, -2, -1, 0, 1, 2):
        a, b = tracy_widom(s, 40), tracy_widom(s, 80)
        print(f"  s = {s:+d}: {b.value:.15f}  (order 40 vs 80: {abs(a.value - b.value):.1e})")
    print()


def wall_law():
    print("survival of the lowest particle next to the wall, occupation 1/2")
    for s in (0.6, 1.0, 1.6, 2.2, 3.0, 4.0):
        print(f"  s = {s}: {wall_cdf(s, 2.0, 1.0):.6f}")


if __name__ == "__main__":
    bulk_and_wall()
    tracy_widom_table()
    wall_law()
