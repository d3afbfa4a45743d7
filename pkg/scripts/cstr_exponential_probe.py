"""Evaluate the printed CSTR map at the benchmark start and record what happens.

Prints exp(beta/x2) at x0, the uncontrolled trajectory until the first
non-finite value, and the same rollout with the exponent saturated at a few
bounds. The numbers quoted in docs/cstr_exponential.md come from this script.
"""
import argparse
import math

import numpy as np

from nzpc.plant import CstrParams, PlantDomainError, cstr_deviation_step, cstr_step


def rollout(step, x0, u, steps):
    x = np.array(x0, dtype=float)
    for k in range(1, steps + 1):
        try:
            x = step(x, u)
        except PlantDomainError as exc:
            return k, None, str(exc)
    return steps, x, None


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=150)
    args = ap.parse_args(argv)

    x0 = np.array([-2.0, -20.5])
    u = np.zeros(2)
    p = CstrParams()
    arg = p.beta / x0[1]
    print(f"beta/x2 at x0 = {arg:.4f}, exp(beta/x2) = {math.exp(arg):.4e}")
    x = x0
    for k in range(1, 4):
        x = cstr_step(x, u)
        print(f"printed map, step {k}: x = [{x[0]:.3e}, {x[1]:.3e}]")
    k, _, err = rollout(cstr_step, x0, u, args.steps)
    print(f"printed map: stopped at step {k}: {err}")

    for clamp in (20.0, 10.0, 5.0, 0.0, -20.0, -25.0):
        step = lambda x, u, c=clamp: cstr_step(x, u, CstrParams(exp_arg_max=c))
        k, x_end, err = rollout(step, x0, u, args.steps)
        if err:
            print(f"exponent clamped at {clamp:g}: stopped at step {k}: {err}")
        else:
            print(f"exponent clamped at {clamp:g}: finite for {k} steps, "
                  f"x = [{x_end[0]:.4g}, {x_end[1]:.4g}]")

    # the jump the -25 clamp leaves in f2 where x2 changes sign
    c = CstrParams(exp_arg_max=-25.0)
    left = cstr_step([1.0, -1e-9], u, c)[1]
    right = cstr_step([1.0, 1e-9], u, c)[1]
    print(f"clamp -25: f2 jump across x2 = 0 at x1 = 1: {left - right:.4g}")

    k, x_end, err = rollout(cstr_deviation_step, x0, u, args.steps)
    print(f"deviation-coordinate reactor: {k} steps, x = [{x_end[0]:.4g}, {x_end[1]:.4g}]")


if __name__ == "__main__":
    main()
