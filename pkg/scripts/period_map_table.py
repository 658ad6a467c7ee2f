"""Period map of the Hamiltonian centre A|u|^(b+1)/(b+1) + B|v|^(a+1)/(a+1) over energy.

Prints tau(E) on a log grid for a few exponent pairs; alpha = beta = 1 is
the isochronous linear centre.

    python3 scripts/period_map_table.py --csv tau.csv
"""
import argparse
import csv

import numpy as np

from posorbit.flow import period_map

PAIRS = [(1.0, 1.0), (1.0, 3.0), (3.0, 1.0), (2.0, 2.0)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--decades", type=int, nargs=2, default=[-6, 6], metavar=("LO", "HI"))
    ap.add_argument("--csv", help="write E, alpha, beta, tau rows here")
    args = ap.parse_args()

    energies = np.logspace(args.decades[0], args.decades[1], args.decades[1] - args.decades[0] + 1)
    table = {pair: [period_map(1.0, 1.0, pair[0], pair[1], float(E)) for E in energies] for pair in PAIRS}
    print(f"{'E':>8} " + " ".join(f"a={a:g},b={b:g}".rjust(14) for a, b in PAIRS))
    for i, E in enumerate(energies):
        print(f"{E:8.0e} " + " ".join(f"{table[p][i]:14.8g}" for p in PAIRS))
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["E", "alpha", "beta", "tau"])
            for (a, b), taus in table.items():
                wr.writerows([f"{E:.6g}", a, b, f"{t:.15g}"] for E, t in zip(energies, taus))


if __name__ == "__main__":
    main()
