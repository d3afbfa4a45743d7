"""Independent reference computations used by the tests."""
import itertools
import math

import numpy as np


def brute_force_qp(P, q, G, h, tol=1e-8):
    """min 1/2 x'Px + q'x s.t. Gx <= h by enumerating active sets.

    For every subset S of at most n rows the equality-constrained KKT system
    is solved in the least-squares sense; consistent, primal-feasible points
    with non-negative multipliers are KKT points, and since the problem is
    convex each one is optimal. The best objective over all of them is returned.
    """
    n = len(q)
    best = math.inf
    for r in range(0, min(n, len(h)) + 1):
        for S in itertools.combinations(range(len(h)), r):
            S = list(S)
            k = len(S)
            if k:
                K = np.block([[P, G[S].T], [G[S], np.zeros((k, k))]])
            else:
                K = P
            rhs = np.concatenate([-q, h[S]])
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
            if np.linalg.norm(K @ sol - rhs) > tol:
                continue
            x, lam = sol[:n], sol[n:]
            if np.all(G @ x <= h + 1e-9) and np.all(lam >= -1e-9):
                best = min(best, 0.5 * x @ P @ x + q @ x)
    return best


def random_qp(rng):
    """Random feasible PSD QP with at most 6 variables and 10 inequalities.

    About half the instances with n <= 5 get a singular Hessian; those keep a
    full box |x - x0| <= 3 among their rows so the problem stays bounded.
    """
    n = int(rng.integers(1, 7))
    singular = 2 <= n <= 5 and rng.random() < 0.5
    if singular:
        M = rng.normal(size=(int(rng.integers(1, n)), n))
        m = int(rng.integers(0, 10 - 2 * n + 1))
    else:
        M = rng.normal(size=(int(rng.integers(n, n + 3)), n))
        m = int(rng.integers(1, 11))
    P = M.T @ M
    q = rng.normal(size=n) * 3
    G = rng.normal(size=(m, n))
    x0 = rng.normal(size=n)
    h = G @ x0 + rng.uniform(0, 1, m)
    if singular:
        G = np.vstack([G, np.eye(n), -np.eye(n)])
        h = np.concatenate([h, x0 + 3, -x0 + 3])
    return P, q, G, h


def cstr_printed_by_hand(x1, x2, u1, u2):
    """The printed reactor map, written out term by term with math.exp."""
    tau = 0.015
    alpha = 7.2e10
    beta = -8750.0
    rho = 1.5e13
    ex = math.exp(beta / x2)
    num1 = (1.0 - 0.5 * tau - alpha * ex * tau) * x1 + tau
    first = num1 / (1.0 + 0.5 * tau) + u1 * tau
    num2 = (1.0 - 1.5 * tau) * x2 + rho * x1 * ex
    affine = tau * (350.0 - 6.3 * x1 - 14.4 * x2)
    second = num2 / (1.0 + 1.5 * tau) + affine / (1.0 + 1.5 * tau) + u2 * tau
    return first, second
