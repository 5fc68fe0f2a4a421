"""Restricted isometry constants, stationarity checks and optimality certificates.

Constants are computed exactly by enumerating every ``k``-column subset, so
they are only practical for matrices with a few dozen columns.
"""
import hashlib
import itertools
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._validation import as_matrix, as_vector, check_positive, check_sparsity_level
from .exceptions import EnumerationCapError, InvalidArgumentError
from .penalties import QuadEnvCard, QuadEnvPK, sorted_magnitudes, subgradient_distance

logger = logging.getLogger(__name__)

__all__ = [
    "DEFAULT_CAP",
    "RlipTable",
    "FeasibilityVerdict",
    "Hypothesis",
    "CertificateReport",
    "BetaCache",
    "subset_count",
    "rlip_beta",
    "rip_delta",
    "rlip_table",
    "crt_condition",
    "shadow_point",
    "is_stationary",
    "check_k_feasibility",
    "certify_card_minimizer",
    "certify_pk_minimizer",
    "guarantee_oracle_card",
    "guarantee_oracle_pk",
]

DEFAULT_CAP = 2_000_000
_GRAM_MAX_K = 12
_BATCH_BYTES = 64 * 2 ** 20
_COL_TOL = 1e-12
_DIST_TOL = 1e-12


# -- subset enumeration ----------------------------------------------------------

def subset_count(n, k):
    return math.comb(n, k)


def _combination_batches(n, k, batch):
    combos = itertools.combinations(range(n), k)
    while True:
        flat = np.fromiter(itertools.chain.from_iterable(itertools.islice(combos, batch)),
                           dtype=np.intp)
        if flat.size == 0:
            return
        yield flat.reshape(-1, k)


def _batch_extremes(A, G, idx):
    """Smallest and largest squared singular value for each subset in ``idx``."""
    m, k = A.shape[0], idx.shape[1]
    if k <= _GRAM_MAX_K:
        lam = np.linalg.eigvalsh(G[idx[:, :, None], idx[:, None, :]])
        lo, hi = lam[:, 0], lam[:, -1]
    else:
        sig = np.linalg.svd(A[:, idx].transpose(1, 0, 2), compute_uv=False)
        hi = sig[:, 0] ** 2
        lo = np.zeros(len(idx)) if k > m else sig[:, -1] ** 2
    return np.maximum(lo, 0.0), hi


def _subset_extremes(A, k, cap=DEFAULT_CAP, force=False, n_jobs=1):
    """Exact ``(min sigma_min^2, max sigma_max^2, count, argmin subset)`` over k-subsets."""
    m, n = A.shape
    count = subset_count(n, k)
    if count > cap and not force:
        raise EnumerationCapError(count, cap)
    G = A.T @ A
    per_subset = (k * k if k <= _GRAM_MAX_K else m * k) * 8
    batch = max(1, min(count, _BATCH_BYTES // max(per_subset, 1)))

    def work(idx):
        lo, hi = _batch_extremes(A, G, idx)
        j = int(np.argmin(lo))
        return float(lo[j]), float(np.max(hi)), idx[j]

    batches = _combination_batches(n, k, batch)
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(work, batches))
    else:
        results = [work(idx) for idx in batches]
    logger.debug("scanned %d subsets of size %d in %d batches", count, k, len(results))
    best = min(range(len(results)), key=lambda i: results[i][0])
    lam_min = results[best][0]
    lam_max = max(r[1] for r in results)
    return lam_min, lam_max, count, tuple(int(i) for i in results[best][2])


def _fingerprint(A):
    h = hashlib.sha256()
    h.update(np.asarray(A.shape, dtype=np.int64).tobytes())
    h.update(np.ascontiguousarray(A, dtype=np.float64).tobytes())
    return h.hexdigest()


class BetaCache:
    """JSON sidecar caching constants per (matrix fingerprint, k)."""

    def __init__(self, path):
        self.path = Path(path)
        self._data = json.loads(self.path.read_text()) if self.path.exists() else {}

    def get(self, A, key):
        return self._data.get(_fingerprint(A), {}).get(key)

    def put(self, A, key, value):
        self._data.setdefault(_fingerprint(A), {})[key] = value
        self.path.write_text(json.dumps(self._data, indent=1, sort_keys=True))


def _check_k(k, n):
    if int(k) != k or not 1 <= k <= n:
        raise InvalidArgumentError(f"need 1 <= k <= n={n}, got k={k}")
    return int(k)


def rlip_beta(A, k, cap=DEFAULT_CAP, force=False, cache=None, n_jobs=1):
    """``beta_k = min ||Ax|| / ||x||`` over nonzero ``x`` with ``card(x) <= k``.

    Computed as the smallest singular value over every ``k``-column submatrix
    (``0`` without enumeration when ``k > m``).

    Raises
    ------
    EnumerationCapError
        If ``C(n, k) > cap`` and ``force`` is false.
    """
    A = as_matrix(A)
    k = _check_k(k, A.shape[1])
    if k > A.shape[0]:
        return 0.0
    if cache is not None:
        hit = cache.get(A, f"beta:{k}")
        if hit is not None:
            return hit
    lam_min, _, _, _ = _subset_extremes(A, k, cap, force, n_jobs)
    beta = math.sqrt(lam_min)
    if cache is not None:
        cache.put(A, f"beta:{k}", beta)
    return beta


def rip_delta(A, k, cap=DEFAULT_CAP, force=False, cache=None, n_jobs=1):
    """Smallest ``delta`` with every k-subset spectrum inside ``[1 - delta, 1 + delta]``."""
    A = as_matrix(A)
    k = _check_k(k, A.shape[1])
    if cache is not None:
        hit = cache.get(A, f"delta:{k}")
        if hit is not None:
            return hit
    lam_min, lam_max, _, _ = _subset_extremes(A, k, cap, force, n_jobs)
    delta = max(1.0 - lam_min, lam_max - 1.0)
    if cache is not None:
        cache.put(A, f"delta:{k}", delta)
    return delta


@dataclass
class RlipTable:
    betas: dict
    deltas: dict = field(default_factory=dict)
    enumeration_counts: dict = field(default_factory=dict)
    argmin_subsets: dict = field(default_factory=dict)

    def rows(self):
        for k in sorted(self.betas):
            yield {
                "k": k,
                "beta_k": self.betas[k],
                "delta_k": self.deltas.get(k, ""),
                "subsets_scanned": self.enumeration_counts.get(k, 0),
            }

    def to_csv(self, path):
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, ["k", "beta_k", "delta_k", "subsets_scanned"])
            writer.writeheader()
            for row in self.rows():
                writer.writerow({key: (repr(v) if isinstance(v, float) else v)
                                 for key, v in row.items()})


def rlip_table(A, ks, with_delta=False, cap=DEFAULT_CAP, force=False, n_jobs=1):
    """Constants for each ``k`` in ``ks``; subsets are scanned once per ``k``."""
    A = as_matrix(A)
    m, n = A.shape
    table = RlipTable(betas={})
    for k in ks:
        k = _check_k(k, n)
        if k > m and not with_delta:
            table.betas[k] = 0.0
            table.enumeration_counts[k] = 0
            continue
        lam_min, lam_max, count, where = _subset_extremes(A, k, cap, force, n_jobs)
        table.betas[k] = 0.0 if k > m else math.sqrt(lam_min)
        table.enumeration_counts[k] = count
        table.argmin_subsets[k] = where
        if with_delta:
            table.deltas[k] = max(1.0 - lam_min, lam_max - 1.0)
    return table


def crt_condition(A, K, cap=DEFAULT_CAP, force=False, n_jobs=1):
    """Check ``delta_{3K} + 3 delta_{4K} < 2``. Returns ``(holds, lhs)``."""
    A = as_matrix(A)
    if int(K) != K or K < 1 or 4 * K > A.shape[1]:
        raise InvalidArgumentError(f"need K >= 1 and 4K <= n={A.shape[1]}, got K={K}")
    lhs = (rip_delta(A, 3 * K, cap, force, n_jobs=n_jobs)
           + 3.0 * rip_delta(A, 4 * K, cap, force, n_jobs=n_jobs))
    return lhs < 2.0, lhs


# -- stationarity ------------------------------------------------------------------

def shadow_point(A, b, x):
    """``z = (I - A^T A) x + A^T b``."""
    A = as_matrix(A)
    x = as_vector(x, A.shape[1])
    b = as_vector(b, A.shape[0], "b")
    return x - A.T @ (A @ x - b)


def is_stationary(A, b, x, kind, tol=1e-6):
    """Return ``(stationary, residual)`` with residual measured in shadow-point units."""
    z = shadow_point(A, b, x)
    residual = subgradient_distance(kind, x, z)
    return residual <= tol * (1.0 + float(np.linalg.norm(z))), residual


# -- K-feasibility -------------------------------------------------------------------

@dataclass
class FeasibilityVerdict:
    status: str  # StrictlyFeasible | Feasible | Infeasible | Unknown
    witness: str
    subset: tuple = ()

    @property
    def feasible(self):
        return self.status in ("Feasible", "StrictlyFeasible")


def _find_clique(adj, size):
    """Return a clique of ``size`` vertices in the graph (bitset rows) or ``None``."""
    n = len(adj)
    if size <= 0:
        return ()
    alive = (1 << n) - 1
    # degree pruning: a vertex in a clique of `size` has >= size-1 neighbours
    changed = True
    while changed:
        changed = False
        for v in range(n):
            if alive >> v & 1 and bin(adj[v] & alive).count("1") < size - 1:
                alive &= ~(1 << v)
                changed = True
    if bin(alive).count("1") < size:
        return None

    def extend(chosen, cand):
        if len(chosen) == size:
            return chosen
        if len(chosen) + bin(cand).count("1") < size:
            return None
        while cand:
            v = cand.bit_length() - 1
            cand &= ~(1 << v)
            found = extend(chosen + (v,), cand & adj[v])
            if found is not None:
                return found
            if len(chosen) + bin(cand).count("1") < size:
                return None
        return None

    found = extend((), alive)
    return None if found is None else tuple(sorted(found))


def _adjacency(mask):
    return [sum(1 << int(j) for j in np.flatnonzero(row)) for row in mask]


def check_k_feasibility(A, K, mode="sufficient", max_exact_n=32):
    """Decide whether ``A`` is (strictly) K-feasible.

    ``A`` is K-feasible if its columns have norm at most 1 and every set of
    ``n - K`` columns contains a pair with ``||a_i - a_j||^2 <= 2`` (strictly
    feasible with ``< 2``).

    ``mode="sufficient"`` tests closed-form sufficient conditions only;
    ``mode="exact"`` searches for a violating column subset (``n <= max_exact_n``).
    """
    A = as_matrix(A)
    m, n = A.shape
    K = check_sparsity_level(K, n)
    norms = np.linalg.norm(A, axis=0)
    worst = int(np.argmax(norms))
    if norms[worst] > 1.0 + _COL_TOL:
        return FeasibilityVerdict("Infeasible", f"column {worst} has norm {norms[worst]!r} > 1",
                                  (worst,))
    size = n - K
    if mode == "exact":
        if n > max_exact_n:
            return FeasibilityVerdict("Unknown", f"exact search limited to n <= {max_exact_n}")
        if size < 2:
            return FeasibilityVerdict(
                "Infeasible", f"subsets of {size} column(s) contain no pair", tuple(range(size)))
        G = A.T @ A
        sq = norms[:, None] ** 2 + norms[None, :] ** 2 - 2.0 * G
        off = ~np.eye(n, dtype=bool)
        far = _find_clique(_adjacency((sq > 2.0 + _DIST_TOL) & off), size)
        if far is not None:
            return FeasibilityVerdict(
                "Infeasible", f"columns {far} are pairwise at squared distance > 2", far)
        tight = _find_clique(_adjacency((sq >= 2.0 - _DIST_TOL) & off), size)
        if tight is not None:
            return FeasibilityVerdict(
                "Feasible", f"columns {tight} are pairwise at squared distance >= 2", tight)
        return FeasibilityVerdict(
            "StrictlyFeasible", f"no {size}-column subset avoids a pair at squared distance < 2")
    if mode != "sufficient":
        raise InvalidArgumentError(f"mode must be 'sufficient' or 'exact', got {mode!r}")

    G = A.T @ A
    upper = G[np.triu_indices(n, 1)]
    tall = n >= m + K + 2
    if tall and np.all(upper != 0.0):
        return FeasibilityVerdict("StrictlyFeasible",
                                  "n >= m + K + 2 and no orthogonal column pair")
    if tall and norms.max() < 1.0 - _COL_TOL:
        return FeasibilityVerdict("StrictlyFeasible", "n >= m + K + 2 and column norms < 1")
    positive = int(np.count_nonzero(upper > 0))
    if positive >= n * K:
        return FeasibilityVerdict(
            "StrictlyFeasible", f"{positive} positive column inner products >= nK = {n * K}")
    if tall:
        return FeasibilityVerdict("Feasible", "n >= m + K + 2")
    return FeasibilityVerdict(
        "Unknown", f"no sufficient condition applies ({positive} positive inner products, "
                   f"n={n} < m+K+2={m + K + 2})")


# -- certificates --------------------------------------------------------------------

@dataclass
class Hypothesis:
    name: str
    lhs: float
    relation: str
    rhs: float
    passed: bool
    note: str = ""


@dataclass
class CertificateReport:
    theorem: str
    hypotheses: list
    verdict: str  # UniqueGlobalMin | OracleGuaranteed | Inconclusive
    quantities: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return self.verdict != "Inconclusive"

    def to_dict(self):
        return _jsonable(asdict(self))

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _verdict(hyps, success):
    return success if all(h.passed for h in hyps) else "Inconclusive"


def certify_card_minimizer(A, b, mu, x_prime, N, beta_N=None, stat_tol=1e-6,
                           cap=DEFAULT_CAP, force=False):
    """Certify that ``x_prime`` is the unique global minimizer for ``QuadEnvCard(mu)``.

    Hypotheses: ``x_prime`` is stationary; ``||A||_{inf,col} <= 1``; every
    shadow-point magnitude lies outside ``[beta_N^2 sqrt(mu), sqrt(mu)/beta_N^2]``;
    and ``2 mu card(x') + ||Ax' - b||^2 < mu N + mu``. When all pass, any
    other stationary point has more than ``N - card(x')`` nonzeros.
    """
    A = as_matrix(A)
    mu = check_positive(mu, "mu")
    x = as_vector(x_prime, A.shape[1], "x_prime")
    b = as_vector(b, A.shape[0], "b")
    N = _check_k(N, A.shape[1])
    root = math.sqrt(mu)
    z = shadow_point(A, b, x)
    card = int(np.count_nonzero(x))
    residual2 = float(np.sum((A @ x - b) ** 2))
    stationary, stat_res = is_stationary(A, b, x, QuadEnvCard(mu), stat_tol)
    hyps = [Hypothesis("stationary", stat_res, "<=", stat_tol * (1 + float(np.linalg.norm(z))),
                       stationary)]
    quantities = {"z": z, "card": card, "residual_sq": residual2, "N": N}
    notes = []
    if beta_N is None:
        beta_N = rlip_beta(A, N, cap, force)
    quantities["beta_N"] = beta_N
    if beta_N == 0.0:
        hyps.append(Hypothesis("beta_N > 0", beta_N, ">", 0.0, False,
                               f"some {N} columns are linearly dependent"))
        return CertificateReport("card-unique-global-min", hyps, "Inconclusive", quantities, notes)

    max_col = float(np.max(np.linalg.norm(A, axis=0)))
    hyps.append(Hypothesis("max column norm <= 1", max_col, "<=", 1.0, max_col <= 1.0 + _COL_TOL))

    lo, hi = beta_N ** 2 * root, root / beta_N ** 2
    absz = np.abs(z)
    inside = (absz >= lo) & (absz <= hi)
    if beta_N > 1:
        gap_ok = True
        note = "automatically satisfied since beta_N > 1"
    else:
        gap_ok = not bool(np.any(inside))
        note = "" if not inside.any() else f"coordinates {np.flatnonzero(inside).tolist()} inside"
        if beta_N == 1.0:
            notes.append("beta_N == 1: the excluded interval degenerates to the point sqrt(mu)")
    hyps.append(Hypothesis("|z_i| outside [beta_N^2 sqrt(mu), sqrt(mu)/beta_N^2]",
                           float(np.count_nonzero(inside)), "==", 0.0, gap_ok, note))
    quantities["excluded_interval"] = (lo, hi)

    lhs = 2.0 * mu * card + residual2
    rhs = mu * N + mu
    hyps.append(Hypothesis("2 mu card(x') + ||Ax'-b||^2 < mu (N + 1)", lhs, "<", rhs, lhs < rhs))
    verdict = _verdict(hyps, "UniqueGlobalMin")
    if verdict == "UniqueGlobalMin":
        quantities["other_stationary_min_card"] = N - card + 1
        notes.append(f"any other stationary point has card > {N - card}")
    return CertificateReport("card-unique-global-min", hyps, verdict, quantities, notes)


def certify_pk_minimizer(A, b, K, x_prime, beta_2K=None, stat_tol=1e-6,
                         feasibility_mode=None, cap=DEFAULT_CAP, force=False):
    """Certify that ``x_prime`` is the unique global minimizer for ``QuadEnvPK(K)``.

    Hypotheses: ``card(x') <= K``; stationarity; K-feasibility of ``A``; and
    ``|z~_{K+1}| < (2 beta_2K^2 - 1) |z~_K|`` on the sorted shadow magnitudes.
    Under strict K-feasibility the report also states that no other local
    minimizer exists.
    """
    A = as_matrix(A)
    m, n = A.shape
    K = check_sparsity_level(K, n)
    x = as_vector(x_prime, n, "x_prime")
    b = as_vector(b, m, "b")
    card = int(np.count_nonzero(x))
    z = shadow_point(A, b, x)
    quantities = {"z": z, "card": card, "residual_sq": float(np.sum((A @ x - b) ** 2)), "K": K}
    hyps = [Hypothesis("card(x') <= K", card, "<=", K, card <= K)]
    if card > K or K == 0:
        return CertificateReport("pk-unique-global-min", hyps, "Inconclusive", quantities,
                                 ["K must be >= 1"] if K == 0 else [])
    stationary, stat_res = is_stationary(A, b, x, QuadEnvPK(K), stat_tol)
    hyps.append(Hypothesis("stationary", stat_res, "<=",
                           stat_tol * (1 + float(np.linalg.norm(z))), stationary))

    if feasibility_mode is None:
        feasibility_mode = "exact" if n <= 32 else "sufficient"
    verdict = check_k_feasibility(A, K, feasibility_mode)
    hyps.append(Hypothesis("K-feasible", float(verdict.feasible), "==", 1.0, verdict.feasible,
                           f"{verdict.status}: {verdict.witness}"))
    quantities["feasibility"] = verdict.status

    if beta_2K is None:
        beta_2K = rlip_beta(A, min(2 * K, n), cap, force)
    quantities["beta_2K"] = beta_2K
    mags = sorted_magnitudes(z).mags
    z_K = float(mags[K - 1])
    z_K1 = float(mags[K]) if K < n else 0.0
    rhs = (2.0 * beta_2K ** 2 - 1.0) * z_K
    hyps.append(Hypothesis("|z~_{K+1}| < (2 beta_2K^2 - 1) |z~_K|", z_K1, "<", rhs, z_K1 < rhs))
    quantities["z_sorted_K"] = z_K
    quantities["z_sorted_K_plus_1"] = z_K1
    notes = []
    result = _verdict(hyps, "UniqueGlobalMin")
    if result == "UniqueGlobalMin" and verdict.status == "StrictlyFeasible":
        notes.append("strictly K-feasible: no other local minimizers")
        quantities["no_other_local_minimizers"] = True
    return CertificateReport("pk-unique-global-min", hyps, result, quantities, notes)


def _min_support_magnitude(x0):
    x0 = np.asarray(x0, dtype=np.float64)
    nz = np.abs(x0[x0 != 0])
    return float(nz.min()) if nz.size else math.inf


def guarantee_oracle_card(beta_N, beta_K, x0, eps_norm, mu, N):
    """Check the noise and magnitude conditions under which the oracle solution
    is the unique global minimizer of the ``QuadEnvCard`` objective.

    Returns ``(holds, margins)``; margins are the slacks of both inequalities
    (positive means satisfied) and the implied error bound ``||eps|| / beta_K``.
    """
    x0 = as_vector(x0, name="x0")
    K = int(np.count_nonzero(x0))
    if N < 2 * K:
        raise InvalidArgumentError(f"need N >= 2 card(x0) = {2 * K}, got N={N}")
    mu = check_positive(mu, "mu")
    if beta_N <= 0:
        return False, {"reason": "beta_N = 0"}
    root = math.sqrt(mu)
    noise_bound = beta_N ** 2 * root
    magnitude_bound = (1.0 / beta_N ** 2 + 1.0) * root
    margins = {
        "noise_margin": noise_bound - eps_norm,
        "magnitude_margin": _min_support_magnitude(x0) - magnitude_bound,
        "noise_bound": noise_bound,
        "magnitude_bound": magnitude_bound,
        "error_bound": eps_norm / beta_K if beta_K > 0 else math.inf,
    }
    holds = margins["noise_margin"] > 0 and margins["magnitude_margin"] > 0
    return holds, margins


def guarantee_oracle_pk(beta_K, beta_2K, x0, eps_norm):
    """Check ``beta_2K > 1/sqrt(2)`` and
    ``min |x0_j| > (1/(2 beta_2K^2 - 1) + 1/beta_K) ||eps||`` on the support."""
    x0 = as_vector(x0, name="x0")
    margins = {"beta_margin": beta_2K - 1.0 / math.sqrt(2.0)}
    if margins["beta_margin"] <= 0 or beta_K <= 0:
        margins["reason"] = "beta_2K <= 1/sqrt(2)" if margins["beta_margin"] <= 0 else "beta_K = 0"
        return False, margins
    factor = 1.0 / (2.0 * beta_2K ** 2 - 1.0) + 1.0 / beta_K
    margins["magnitude_bound"] = factor * eps_norm
    margins["magnitude_margin"] = _min_support_magnitude(x0) - factor * eps_norm
    margins["error_bound"] = eps_norm / beta_K
    return margins["magnitude_margin"] > 0, margins
