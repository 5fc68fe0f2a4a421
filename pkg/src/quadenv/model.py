"""Problem representation: sensing matrices, random instances, oracle solutions.

All generators are pure functions of their dimensions, parameters and seed.
"""
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import as_matrix, as_vector, check_sparsity_level
from .exceptions import InvalidArgumentError

__all__ = [
    "SensingMatrix",
    "ProblemInstance",
    "matrix_stats",
    "generate_sensing_matrix",
    "generate_ground_truth",
    "synthesize_measurements",
    "make_instance",
    "oracle_solution",
    "support_of",
    "save_instance",
    "load_instance",
    "write_vector_csv",
    "read_vector_csv",
    "write_matrix_csv",
    "read_matrix_csv",
]

_MAX_REDRAWS = 10
_SVD_CROSSCHECK_DIM = 64


def _power_iteration_norm(A, rtol=1e-10, max_iter=20000):
    """Spectral norm of ``A`` by power iteration on ``A.T @ A``.

    Returns ``(norm, converged)``.
    """
    n = A.shape[1]
    v = np.random.default_rng(0).standard_normal(n)
    v /= np.linalg.norm(v)
    lam_old = 0.0
    for _ in range(max_iter):
        w = A.T @ (A @ v)
        lam = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0, True
        v = w / nw
        # squared-norm tolerance is tighter than the requested norm tolerance
        if abs(lam - lam_old) <= 1e-3 * rtol * lam:
            return float(np.linalg.norm(A @ v)), True
        lam_old = lam
    return float(np.linalg.norm(A @ v)), False


def matrix_stats(A):
    """Return ``(op_norm, max_col_norm)`` of a matrix.

    The operator norm comes from power iteration on ``A.T @ A``. For
    ``min(m, n) <= 64`` it is cross-checked against a dense SVD and the SVD
    value wins on disagreement beyond ``1e-10`` (relative).
    """
    A = as_matrix(A)
    max_col_norm = float(np.max(np.linalg.norm(A, axis=0)))
    op_norm, converged = _power_iteration_norm(A)
    if min(A.shape) <= _SVD_CROSSCHECK_DIM or not converged:
        exact = float(np.linalg.norm(A, 2))
        if abs(exact - op_norm) > 1e-10 * max(exact, 1.0) or not converged:
            op_norm = exact
    return op_norm, max_col_norm


@dataclass(frozen=True)
class SensingMatrix:
    """Dense ``m x n`` measurement operator with cached norms.

    Build through :meth:`from_array` so the cached norms are consistent.
    """

    entries: np.ndarray
    op_norm: float
    max_col_norm: float

    @classmethod
    def from_array(cls, entries):
        entries = np.array(as_matrix(entries), dtype=np.float64, copy=True)
        entries.setflags(write=False)
        op_norm, max_col_norm = matrix_stats(entries)
        return cls(entries, op_norm, max_col_norm)

    @property
    def m(self):
        return self.entries.shape[0]

    @property
    def n(self):
        return self.entries.shape[1]

    @property
    def shape(self):
        return self.entries.shape

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    def __matmul__(self, other):
        return self.entries @ other

    @property
    def T(self):
        return self.entries.T


@dataclass(frozen=True)
class ProblemInstance:
    A: SensingMatrix
    x0: np.ndarray
    epsilon: np.ndarray
    b: np.ndarray
    seed: object
    support: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.support is None:
            object.__setattr__(self, "support", support_of(self.x0, 0.0))


def support_of(x, threshold=1e-6):
    """Sorted indices with ``|x_j| > threshold``."""
    return np.flatnonzero(np.abs(np.asarray(x)) > threshold)


def generate_sensing_matrix(m, n, seed):
    """Gaussian matrix whose columns are normalized to unit Euclidean norm."""
    if int(m) != m or int(n) != n or m < 1 or n < 1:
        raise InvalidArgumentError(f"need m >= 1 and n >= 1, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((int(m), int(n)))
    for j in range(A.shape[1]):
        redraws = 0
        while np.linalg.norm(A[:, j]) == 0.0:
            if redraws == _MAX_REDRAWS:
                raise RuntimeError(f"column {j} drew zero norm {_MAX_REDRAWS} times")
            A[:, j] = rng.standard_normal(A.shape[0])
            redraws += 1
    A /= np.linalg.norm(A, axis=0)
    return SensingMatrix.from_array(A)


def generate_ground_truth(n, K, mag_range=(2.0, 4.0), target_norm=11.0, seed=None):
    """Random ``K``-sparse vector and its support.

    Magnitudes are uniform on ``mag_range`` with uniform random signs. When
    ``target_norm > 0`` the vector is rescaled to that Euclidean norm, which
    may move individual magnitudes outside ``mag_range``.
    """
    K = check_sparsity_level(K, n)
    lo, hi = map(float, mag_range)
    if not 0 < lo <= hi:
        raise InvalidArgumentError(f"need 0 < lo <= hi, got {mag_range}")
    if target_norm < 0:
        raise InvalidArgumentError("target_norm must be >= 0")
    rng = np.random.default_rng(seed)
    support = np.sort(rng.choice(n, size=K, replace=False)).astype(np.intp)
    mags = rng.uniform(lo, hi, size=K) if hi > lo else np.full(K, lo)
    signs = rng.choice(np.array([-1.0, 1.0]), size=K)
    x0 = np.zeros(n)
    x0[support] = signs * mags
    if target_norm > 0 and K > 0:
        x0 *= target_norm / np.linalg.norm(x0)
    return x0, support


def synthesize_measurements(A, x0, noise_norm, seed):
    """``b = A x0 + eps`` with Gaussian ``eps`` rescaled to ``||eps|| = noise_norm``."""
    if not isinstance(A, SensingMatrix):
        A = SensingMatrix.from_array(A)
    x0 = as_vector(x0, A.n, "x0")
    if not np.isfinite(noise_norm) or noise_norm < 0:
        raise InvalidArgumentError("noise_norm must be a finite non-negative number")
    rng = np.random.default_rng(seed)
    eps = np.zeros(A.m)
    if noise_norm > 0:
        eps = rng.standard_normal(A.m)
        while np.linalg.norm(eps) == 0.0:
            eps = rng.standard_normal(A.m)
        eps *= noise_norm / np.linalg.norm(eps)
    b = A.entries @ x0 + eps
    return ProblemInstance(A=A, x0=x0, epsilon=eps, b=b, seed=seed)


def make_instance(m, n, K, noise_norm, seed, mag_range=(2.0, 4.0), target_norm=11.0):
    """Convenience wrapper drawing A, x0 and eps from one seed.

    Independent child seeds are spawned so that changing e.g. the noise level
    does not perturb A or x0.
    """
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    s_matrix, s_truth, s_noise = root.spawn(3)
    A = generate_sensing_matrix(m, n, s_matrix)
    x0, support = generate_ground_truth(n, K, mag_range, target_norm, s_truth)
    inst = synthesize_measurements(A, x0, noise_norm, s_noise)
    return ProblemInstance(A=inst.A, x0=inst.x0, epsilon=inst.epsilon,
                           b=inst.b, seed=seed, support=support)


def oracle_solution(A, b, S):
    """Least-squares solution restricted to the support ``S``; zero elsewhere.

    Uses an SVD-based solve, so the minimum-norm solution is returned when
    the columns indexed by ``S`` are linearly dependent.
    """
    A = as_matrix(A)
    b = as_vector(b, A.shape[0], "b")
    S = np.unique(np.asarray(S, dtype=np.intp))
    x = np.zeros(A.shape[1])
    if S.size == 0:
        return x
    if S[0] < 0 or S[-1] >= A.shape[1]:
        raise InvalidArgumentError("support index out of range")
    coef, *_ = np.linalg.lstsq(A[:, S], b, rcond=None)
    x[S] = coef
    return x


# -- file formats -----------------------------------------------------------

def write_matrix_csv(path, A):
    np.savetxt(path, np.atleast_2d(np.asarray(A, dtype=float)),
               delimiter=",", fmt="%.17g")


def read_matrix_csv(path):
    return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2))


def write_vector_csv(path, x):
    np.savetxt(path, np.asarray(x, dtype=float).reshape(-1, 1), fmt="%.17g")


def read_vector_csv(path):
    return np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=1)


def _seed_to_json(seed):
    if isinstance(seed, np.random.SeedSequence):
        entropy = seed.entropy
        entropy = [int(e) for e in entropy] if np.ndim(entropy) else int(entropy)
        return {"entropy": entropy, "spawn_key": list(seed.spawn_key)}
    if seed is None or np.ndim(seed) == 0:
        return seed if seed is None else int(seed)
    return [int(s) for s in seed]


def save_instance(directory, inst, generator="normalized-gaussian"):
    """Write ``A.csv``, ``x0.csv``, ``epsilon.csv``, ``b.csv`` and ``header.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_matrix_csv(directory / "A.csv", inst.A.entries)
    write_vector_csv(directory / "x0.csv", inst.x0)
    write_vector_csv(directory / "epsilon.csv", inst.epsilon)
    write_vector_csv(directory / "b.csv", inst.b)
    header = {
        "m": inst.A.m,
        "n": inst.A.n,
        "seed": _seed_to_json(inst.seed),
        "generator": generator,
        "support": [int(i) for i in inst.support],
        "noise_norm": float(np.linalg.norm(inst.epsilon)),
        "op_norm": inst.A.op_norm,
        "max_col_norm": inst.A.max_col_norm,
    }
    (directory / "header.json").write_text(json.dumps(header, indent=2))
    return directory


def load_instance(directory):
    directory = Path(directory)
    header = json.loads((directory / "header.json").read_text())
    A = SensingMatrix.from_array(read_matrix_csv(directory / "A.csv"))
    if A.shape != (header["m"], header["n"]):
        raise InvalidArgumentError(
            f"A.csv has shape {A.shape}, header says {(header['m'], header['n'])}")
    x0 = read_vector_csv(directory / "x0.csv")
    eps = read_vector_csv(directory / "epsilon.csv")
    b = read_vector_csv(directory / "b.csv")
    return ProblemInstance(A=A, x0=x0, epsilon=eps, b=b, seed=header.get("seed"),
                           support=np.asarray(header.get("support", support_of(x0, 0.0)),
                                              dtype=np.intp))
