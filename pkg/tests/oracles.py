"""Independent reference computations used to check the library."""

import cvxpy as cp
import numpy as np


def fidelity_by_convex_program(b, c) -> float:
    """Best ``(sum sqrt(c_i x_i))**2`` over probability vectors ``x`` majorizing ``b``.

    The prefix-sum constraints on unsorted ``x`` imply that its sorted version
    majorizes ``b``; the objective is concave, so a conic solver finds the
    global optimum.
    """
    b = np.sort(np.asarray(b, float))[::-1]
    c = np.sort(np.asarray(c, float))[::-1]
    n = b.size
    x = cp.Variable(n, nonneg=True)
    lower = np.tril(np.ones((n, n)))
    cons = [cp.sum(x) == 1, lower[:-1] @ x >= np.cumsum(b)[:-1]]
    prob = cp.Problem(cp.Maximize(np.sqrt(c) @ cp.sqrt(x)), cons)
    prob.solve(solver=cp.CLARABEL)
    xs = repair(np.asarray(x.value, float), b)
    return float(np.sum(np.sqrt(c * xs)) ** 2)


def repair(x, b):
    """Move solver output onto the feasible set exactly.

    The square root has infinite slope at zero, so a prefix constraint
    violated by 1e-9 can inflate the objective by ~1e-5. Each prefix deficit
    is covered by shifting mass from the last entries to the current one;
    later prefix sums never decrease, and the result is a true lower bound.
    """
    x = np.clip(x, 0.0, None)
    x = x / x.sum()
    need = np.cumsum(b)
    for k in range(x.size - 1):
        d = need[k] - x[: k + 1].sum()
        if d <= 0:
            continue
        x[k] += d
        for j in range(x.size - 1, k, -1):
            take = min(d, x[j])
            x[j] -= take
            d -= take
            if d <= 0:
                break
    return x


def random_pair(rng, max_dim=5):
    n = int(rng.integers(2, max_dim + 1))
    out = []
    for _ in range(2):
        rank = int(rng.integers(1, n + 1))
        w = np.zeros(n)
        w[:rank] = rng.dirichlet(np.full(rank, rng.choice([0.3, 1.0, 3.0])))
        out.append(np.sort(w)[::-1])
    return out


def polish(b, c, x, slack=1e-6):
    """Exact optimum on the active set a numeric solution ``x`` points to.

    Prefix constraints within ``slack`` of equality split the indices into
    blocks; on each block the best state is ``c`` rescaled to carry ``b``'s
    mass (Lagrange condition sqrt(c_i / x_i) constant within a block).
    """
    b = np.asarray(b, float)
    c = np.asarray(c, float)
    gap = np.cumsum(x) - np.cumsum(b)
    cuts = [k + 1 for k in range(b.size - 1) if gap[k] < slack] + [b.size]
    y = np.empty_like(b)
    start = 0
    for end in cuts:
        cb, cc = b[start:end].sum(), c[start:end].sum()
        y[start:end] = c[start:end] * cb / cc if cc > 0 else b[start:end]
        start = end
    return y


def fidelity_polished(b, c) -> float:
    b = np.sort(np.asarray(b, float))[::-1]
    c = np.sort(np.asarray(c, float))[::-1]
    n = b.size
    x = cp.Variable(n, nonneg=True)
    lower = np.tril(np.ones((n, n)))
    prob = cp.Problem(cp.Maximize(np.sqrt(c) @ cp.sqrt(x)),
                      [cp.sum(x) == 1, lower[:-1] @ x >= np.cumsum(b)[:-1]])
    prob.solve(solver=cp.CLARABEL)
    y = polish(b, c, np.asarray(x.value, float))
    feasible = np.all(np.cumsum(y)[:-1] >= np.cumsum(b)[:-1] - 1e-12) and np.all(np.diff(y) <= 1e-12)
    return float(np.sum(np.sqrt(c * y)) ** 2) if feasible else float("nan")
