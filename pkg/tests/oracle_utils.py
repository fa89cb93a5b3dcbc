"""Brute-force oracles for the desk cases, kept independent of the package's
own LP kernel: feasibility and boundary searches go through scipy's HiGHS
solver, and the extreme-ray route is plain linear algebra.  Expected attack
values in the tests were computed with these helpers and then frozen.
"""

import itertools

import numpy as np
from scipy.optimize import linprog


def scipy_feasible(A, rhs):
    """Is {p : A p <= rhs} nonempty, per scipy/HiGHS."""
    if A.shape[1] == 0:
        return bool(np.all(rhs >= 0))
    res = linprog(np.zeros(A.shape[1]), A_ub=A, b_ub=rhs,
                  bounds=(None, None), method="highs")
    if res.status == 0:
        return True
    if res.status == 2:
        return False
    raise RuntimeError(f"scipy feasibility probe failed: {res.message}")


def grid_attack_oracle(mats, span, step):
    """Literal Cartesian sweep: smallest ||delta||^2 over the grid whose
    F(delta) is empty (np.inf if every grid point stays feasible)."""
    axis = np.arange(-span, span + step / 2.0, step)
    best = np.inf
    for point in itertools.product(axis, repeat=mats.n_delta):
        delta = np.asarray(point)
        nsq = float(delta @ delta)
        if nsq >= best or nsq == 0.0:
            continue
        if not scipy_feasible(mats.A, mats.rhs(delta)):
            best = nsq
    return best


def direction_boundary(mats, u):
    """max s >= 0 with F(s u) nonempty, or None when unbounded (scipy route)."""
    n = mats.n_reduced
    cost = np.zeros(n + 1)
    cost[-1] = -1.0
    A = np.hstack([mats.A, (mats.B @ u)[:, None]])
    bounds = [(None, None)] * n + [(0, None)]
    res = linprog(cost, A_ub=A, b_ub=-mats.c, bounds=bounds, method="highs")
    if res.status == 3:
        return None
    if res.status != 0:
        raise RuntimeError(f"boundary probe failed: {res.message}")
    return float(res.x[-1])


def direction_grid_oracle(mats, n_dirs=2000):
    """Two-dimensional delta spaces only: sweep unit directions, take the
    exact feasibility boundary along each, return the smallest boundary
    distance squared."""
    assert mats.n_delta == 2
    best = np.inf
    for theta in np.linspace(0.0, 2.0 * np.pi, n_dirs, endpoint=False):
        u = np.array([np.cos(theta), np.sin(theta)])
        s = direction_boundary(mats, u)
        if s is not None:
            best = min(best, s * s)
    return best


def extreme_ray_oracle(mats):
    """Enumerate the extreme rays of {mu >= 0 : A^T mu = 0} by support sets;
    each ray with B^T mu != 0 contributes a halfspace whose boundary distance
    from the origin is (-mu^T c)/||B^T mu||.  The minimum over rays is the
    exact attack value for these small cases."""
    A, B, c = mats.A, mats.B, mats.c
    m, n = A.shape
    best = np.inf
    for k in range(1, min(n + 1, m) + 1):
        for S in itertools.combinations(range(m), k):
            M = A[list(S), :].T          # n x k
            if np.linalg.matrix_rank(M, tol=1e-10) != k - 1:
                continue
            _, _, vt = np.linalg.svd(M) if M.size else (None, None, np.eye(k))
            z = vt[-1]
            if z.min() < -1e-12:
                z = -z
            if z.min() < -1e-12 or z.max() <= 0:
                continue
            mu = np.zeros(m)
            mu[list(S)] = np.clip(z, 0.0, None)
            if np.max(np.abs(A.T @ mu), initial=0.0) > 1e-9 * mu.sum():
                continue
            g = B.T @ mu
            gn = float(np.linalg.norm(g))
            if gn <= 1e-12 * mu.sum():
                continue
            rhs = -float(mu @ c)
            assert rhs >= -1e-9, "nominally infeasible case handed to the oracle"
            best = min(best, (rhs / gn) ** 2)
    return best
