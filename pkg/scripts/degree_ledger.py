"""Degree ledger on P1 across a few values of lambda.

For each lambda: probe a small radius, find the orbits, size the large box
from the perturbation bounds, then print the small, large and annulus degrees.

    python3 scripts/degree_ledger.py --lambdas 20 50 200
"""
import argparse
import json

from posorbit.fields import identity_h, power_g
from posorbit.flow import SystemInstance
from posorbit.hypotheses import R_of_lambda
from posorbit.solver import StartGrid, degree_ledger, multistart_solve, probe_r0
from posorbit.weights import shifted_sine


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lambdas", type=float, nargs="+", default=[20.0, 50.0, 200.0])
    ap.add_argument("--offset", type=float, default=-0.3, help="mean of the sine weight")
    ap.add_argument("--tol", type=float, default=1e-9)
    ap.add_argument("--json", help="write the rows here")
    args = ap.parse_args()

    rows = []
    print(f"{'lambda':>8} {'r0':>7} {'R':>8} {'box u':>8} {'box v':>8} small large annulus cert   time")
    for lam in args.lambdas:
        sys = SystemInstance(identity_h(), power_g(3.0), shifted_sine(1.0, args.offset), lam)
        r0, _ = probe_r0(sys, tol=args.tol)
        ms = multistart_solve(sys, StartGrid((0.0, 2.0), (-2.0, 2.0), (6, 6)))
        th = R_of_lambda(sys, r0_probe=r0)
        led = degree_ledger(sys, r0, th.R, th.R_prime, enclose=[o.z0 for o in ms.orbits], tol=args.tol)
        bu, bv = led.box_info["used"]
        print(f"{lam:8g} {r0:7.0e} {th.R:8.3g} {bu:8.4g} {bv:8.4g} {led.small_averaged.degree:5d} "
              f"{led.large_poincare.degree:5d} {led.annulus:7d} {str(led.certified):5} {led.wall_time:6.2f}")
        rows.append({"lambda": lam, "r0": r0, "R": th.R, "R_prime": th.R_prime, **led.to_dict()})
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
