"""How much depth information survives sketching.

Prints depth Cramér-Rao bounds (cm at 4 cm per bin) for the full histogram
and each sketch kind: first against signal-to-background ratio, then across
one knot interval, where the coarse histogram (p=0) is blind to the pulse
position inside a bin while the Fourier sketch is flat.
"""
import argparse

import numpy as np

from splinesketch.crb import sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-depths", type=int, default=200)
    args = ap.parse_args()

    kinds = ("full", 0, 1, 2, "fourier")
    names = ["full", "p0", "p1", "p2", "fourier"]
    print("bound vs SBR (sigma 64 cm, M=8, T=600, n=1000)")
    print("   SBR " + "".join(f"{k:>9s}" for k in names))
    rows = sweep("sbr", [0.1, 1.0, 10.0, 100.0], kinds, n_depths=args.n_depths)
    for i in range(0, len(rows), len(kinds)):
        print(f"{rows[i][0]:6g} " + "".join(f"{r[3]:9.2f}" for r in rows[i:i + len(kinds)]))

    print("\nbound across one knot interval (SBR 1)")
    depths = np.linspace(0, 75, 6)
    rows = sweep("depth", depths, (0, 1, 2, "fourier"))
    print(" depth" + "".join(f"{k:>9s}" for k in ("p0", "p1", "p2", "fourier")))
    for i in range(0, len(rows), 4):
        print(f"{rows[i][0]:6.1f}" + "".join(f"{r[3]:9.2f}" for r in rows[i:i + 4]))


if __name__ == "__main__":
    main()
