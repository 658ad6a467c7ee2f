"""Continue the P1 orbit in lambda and compare with the exact scaling law.

With h = id and g = u^3 the substitution u -> c u, v -> c v maps solutions at
lambda to solutions at lambda / c^2, so z0(lambda) = sqrt(50 / lambda) z0(50).

    python3 scripts/branch_continuation.py --to 1 1000
"""
import argparse
import math

import numpy as np

from posorbit.fields import identity_h, power_g
from posorbit.flow import SystemInstance
from posorbit.solver import continue_lambda, newton_periodic
from posorbit.weights import shifted_sine


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--to", type=float, nargs="+", default=[1.0, 1000.0], help="end values of lambda")
    ap.add_argument("--tol", type=float, default=1e-10)
    args = ap.parse_args()

    sys = SystemInstance(identity_h(), power_g(3.0), shifted_sine(1.0, -0.3), 50.0)
    seed = newton_periodic(sys, (0.4125, 0.536), args.tol)
    ref = np.array(seed.z0)
    for end in args.to:
        br = continue_lambda(sys, seed, end, tol=args.tol)
        worst = max(np.linalg.norm(np.array(o.z0) - math.sqrt(50.0 / lam) * ref) for lam, o in br.points)
        print(f"to lambda={end:g}: {len(br.points)} points, {br.failures} rejected steps, stopped: {br.reason}; "
              f"max deviation from scaling {worst:.2e}")
        for lam, o in br.points[:: max(1, len(br.points) // 8)]:
            print(f"  lambda={lam:10.4f} max u={o.max_u:.8f} argmax t={o.argmax_t:.5f} min u={o.min_u:.4g}")


if __name__ == "__main__":
    main()
