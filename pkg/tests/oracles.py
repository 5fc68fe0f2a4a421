"""Reference implementations used only by the tests.

Each oracle is built from definitions (grid search, brute-force enumeration,
convex duality) and shares no code with the package.
"""
import itertools

import numpy as np


def firm_grid_prox(y, mu, t, step=1e-5):
    """Scalar argmin of ``t * (mu - max(sqrt(mu) - |x|, 0)^2) + (x - y)^2 / 2`` on a grid."""
    lo, hi = min(0.0, y) - 0.5, max(0.0, y) + 0.5
    xs = np.arange(lo, hi + step, step)
    pen = mu - np.maximum(np.sqrt(mu) - np.abs(xs), 0.0) ** 2
    obj = t * pen + 0.5 * (xs - y) ** 2
    return float(xs[np.argmin(obj)])


def lower_hull_1d(xs, fs):
    """Values of the lower convex envelope of the points ``(xs, fs)`` at ``xs``."""
    hull = []
    for p in zip(xs, fs):
        while len(hull) >= 2:
            (x1, f1), (x2, f2) = hull[-2], hull[-1]
            if (x2 - x1) * (p[1] - f1) - (f2 - f1) * (p[0] - x1) <= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    hx, hf = np.array(hull).T
    return np.interp(xs, hx, hf)


def card_envelope_by_hull(x, mu, half_width=6.0, step=1e-4):
    """Envelope of ``mu * card`` in 1-D from the convex hull of ``mu * card(s) + s^2``."""
    xs = np.arange(-half_width, half_width + step / 2, step)
    xs[np.argmin(np.abs(xs))] = 0.0
    f = np.where(xs == 0.0, 0.0, mu) + xs ** 2
    env = lower_hull_1d(xs, f) - xs ** 2
    return float(np.interp(x, xs, env))


def pk_envelope_by_duality(x, K):
    """Envelope of the indicator of ``card <= K`` via the Fenchel biconjugate.

    The conjugate of ``iota + ||.||^2`` is ``(1/4) * (sum of the K largest y_j^2)``,
    so the convex envelope is ``sup_y <x, y> - (1/4) sum_largest(y^2, K)``.
    """
    import cvxpy as cp

    x = np.asarray(x, dtype=float)
    y = cp.Variable(x.size)
    prob = cp.Problem(cp.Maximize(x @ y - 0.25 * cp.sum_largest(cp.square(y), K)))
    prob.solve(solver=cp.CLARABEL)
    return float(prob.value - x @ x)


def grid_minimize(fun, center, radius, points=41, resolution=1e-9):
    """Coarse-to-fine grid search of ``fun`` (vectorized over rows) on a box.

    Each level re-centres a ``points^d`` grid on the best node and shrinks the
    box to two grid cells either side. Valid for the strongly convex
    objectives it is used on.
    """
    center = np.asarray(center, dtype=float)
    d = center.size
    h = 2.0 * radius / (points - 1)
    while h > resolution:
        axes = [c + h * np.arange(-(points // 2), points // 2 + 1) for c in center]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        vals = fun(grid)
        center = grid[np.argmin(vals)]
        h = 4.0 * h / (points - 1)
    return center, float(fun(center[None, :])[0])


def pk_envelope_closed_rows(X, K):
    """Row-wise envelope value straight from the k_* closed form (sorted magnitudes).

    ``s(1) >= 0`` always, and ``s`` is non-increasing, so the last ``k`` with
    ``s(k) >= 0`` wins when scanning upward.
    """
    a = -np.sort(-np.abs(np.atleast_2d(X)), axis=1)
    n = a.shape[1]
    if K >= n:
        return np.zeros(a.shape[0])
    if K == 0:
        return np.where(np.any(a > 0, axis=1), np.inf, 0.0)
    out = np.zeros(a.shape[0])
    for k in range(1, K + 1):
        tail = a[:, K - k:]
        total = tail.sum(axis=1)
        s_k = total - k * a[:, K - k]
        value = total ** 2 / k - (tail ** 2).sum(axis=1)
        out = np.where(s_k >= 0, value, out)
    return out


def brute_beta(A, k):
    """``min`` smallest singular value over all ``k``-column submatrices, by SVD."""
    m, n = A.shape
    if k > m:
        return 0.0
    return min(np.linalg.svd(A[:, list(S)], compute_uv=False)[-1]
               for S in itertools.combinations(range(n), k))


def brute_delta(A, k):
    worst = 0.0
    for S in itertools.combinations(range(A.shape[1]), k):
        s = np.linalg.svd(A[:, list(S)], compute_uv=False)
        s_min = s[-1] if len(s) == k else 0.0
        worst = max(worst, 1.0 - s_min ** 2, s[0] ** 2 - 1.0)
    return worst


def _ls_residual(A, b, S):
    if not S:
        return float(b @ b), np.zeros(A.shape[1])
    coef = np.linalg.lstsq(A[:, list(S)], b, rcond=None)[0]
    x = np.zeros(A.shape[1])
    x[list(S)] = coef
    r = A @ x - b
    return float(r @ r), x


def exhaustive_card_minimum(A, b, mu):
    """``min_x mu * card(x) + ||Ax - b||^2`` over every support."""
    n = A.shape[1]
    best = (np.inf, None)
    for k in range(n + 1):
        for S in itertools.combinations(range(n), k):
            res, x = _ls_residual(A, b, S)
            best = min(best, (mu * k + res, x), key=lambda p: p[0])
    return best


def exhaustive_pk_minimum(A, b, K):
    """``min ||Ax - b||^2`` over ``card(x) <= K``."""
    n = A.shape[1]
    best = (np.inf, None)
    for S in itertools.combinations(range(n), min(K, n)):
        res, x = _ls_residual(A, b, S)
        best = min(best, (res, x), key=lambda p: p[0])
    return best
