"""Independent reference computations used by the tests.

Nothing here calls the closed forms under test.
"""
import numpy as np


def newton_allocation(loads, budget, iters=100):
    """Minimize sum(load_i / w_i) subject to sum(w) = budget, w > 0.

    Equality-constrained Newton method with a positivity backtrack, started
    from the uniform split. Zero loads get zero allocation.
    """
    loads = np.asarray(loads, float)
    out = np.zeros_like(loads)
    on = loads > 0
    if not on.any():
        return out
    a = loads[on] / loads[on].max()
    n = len(a)
    w = np.full(n, 1.0 / n)
    for _ in range(iters):
        g = -a / w ** 2
        h = 2 * a / w ** 3
        # KKT: diag(h) dw + nu 1 = -g, 1'dw = 0
        hinv = 1.0 / h
        nu = -np.sum(hinv * g) / np.sum(hinv)
        dw = -(g + nu) * hinv
        step = 1.0
        while np.any(w + step * dw <= 0):
            step *= 0.5
        w = w + step * dw
        w *= 1.0 / w.sum()
        if np.max(np.abs(dw)) < 1e-15:
            break
    out[on] = budget * w
    return out


def allocation_objective(loads, w):
    loads = np.asarray(loads, float)
    on = loads > 0
    return float(np.sum(loads[on] / w[on]))


def brute_force_p2(sub, objective):
    """Exhaustive minimum of ``objective(sub, x, z)`` over all storage-feasible (z, x).

    Loops over every cache vector and every offload bit per present user,
    without the vectorised enumeration of the library oracle.
    """
    import itertools
    I, J = sub.num_users, sub.num_services
    users = [i for i in range(I) if sub.requests[i] >= 0]
    best = None
    for z in itertools.product((0, 1), repeat=J):
        z = np.array(z)
        if np.dot(sub.sizes, z) > sub.storage * (1 + 1e-9):
            continue
        for bits in itertools.product((0, 1), repeat=len(users)):
            x = np.zeros((I, J), int)
            for i, b in zip(users, bits):
                j = sub.requests[i]
                x[i, j] = b * z[j]
            v = objective(sub, x, z)
            if best is None or v < best[0] - 1e-12 * max(1.0, abs(v)):
                best = (v, x, z)
    return best
