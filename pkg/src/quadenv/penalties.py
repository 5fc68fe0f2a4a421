"""Sparsity penalties, their quadratic envelopes, and proximal maps.

Five penalties are supported:

=================  =====================================================
``L1(lam)``        ``lam * ||x||_1``
``Card(mu)``       ``mu * card(x)``
``IndicatorPK(K)`` ``0`` if ``card(x) <= K`` else ``+inf``
``QuadEnvCard(mu)`` quadratic envelope of ``mu * card`` (MCP / CEL0)
``QuadEnvPK(K)``   quadratic envelope of the indicator of ``card <= K``
=================  =====================================================

The quadratic envelope ``Q(f)`` of ``f`` is defined by ``Q(f) + ||.||^2``
being the l.s.c. convex envelope of ``f + ||.||^2``. Both envelopes are
therefore 2-weakly convex and their proximal maps with step ``t < 1/2``
are single valued.
"""
import math
from dataclasses import dataclass

import numpy as np

from ._validation import as_vector, check_positive, check_sparsity_level
from .exceptions import InvalidArgumentError

__all__ = [
    "L1",
    "Card",
    "IndicatorPK",
    "QuadEnvCard",
    "QuadEnvPK",
    "PENALTY_NAMES",
    "make_penalty",
    "SortedMagnitudes",
    "EnvelopeState",
    "sorted_magnitudes",
    "envelope_state",
    "penalty_eval",
    "penalty_prox",
    "subgradient_distance",
]


def _check_K(K):
    if isinstance(K, bool) or int(K) != K or K < 0:
        raise InvalidArgumentError(f"K must be a non-negative integer, got {K}")
    return int(K)


@dataclass(frozen=True)
class L1:
    lam: float

    def __post_init__(self):
        check_positive(self.lam, "lam")


@dataclass(frozen=True)
class Card:
    mu: float

    def __post_init__(self):
        check_positive(self.mu, "mu")


@dataclass(frozen=True)
class IndicatorPK:
    K: int

    def __post_init__(self):
        object.__setattr__(self, "K", _check_K(self.K))


@dataclass(frozen=True)
class QuadEnvCard:
    mu: float

    def __post_init__(self):
        check_positive(self.mu, "mu")


@dataclass(frozen=True)
class QuadEnvPK:
    K: int

    def __post_init__(self):
        object.__setattr__(self, "K", _check_K(self.K))


QUAD_ENVELOPES = (QuadEnvCard, QuadEnvPK)

PENALTY_NAMES = {
    "l1": L1,
    "card": Card,
    "pk": IndicatorPK,
    "qcard": QuadEnvCard,
    "qpk": QuadEnvPK,
}


def make_penalty(name, *, mu=1.0, K=None, lam=None):
    """Build a penalty from its short name (``l1``, ``card``, ``pk``, ``qcard``, ``qpk``)."""
    try:
        cls = PENALTY_NAMES[name.lower()]
    except KeyError:
        raise InvalidArgumentError(
            f"unknown penalty {name!r}; choose from {sorted(PENALTY_NAMES)}") from None
    if cls is L1:
        if lam is None:
            raise InvalidArgumentError("the l1 penalty needs lam")
        return L1(lam)
    if cls in (Card, QuadEnvCard):
        return cls(mu)
    if K is None:
        raise InvalidArgumentError(f"the {name} penalty needs K")
    return cls(K)


def _is_quad_env(kind):
    return isinstance(kind, QUAD_ENVELOPES)


# -- sorted-magnitude machinery ------------------------------------------------

@dataclass(frozen=True)
class SortedMagnitudes:
    """``mags = |x|[perm]``, non-increasing; ties keep ascending index order."""

    perm: np.ndarray
    mags: np.ndarray


@dataclass(frozen=True)
class EnvelopeState:
    k_star: int
    s_values: np.ndarray


def sorted_magnitudes(x):
    absx = np.abs(np.asarray(x, dtype=np.float64))
    perm = np.argsort(-absx, kind="stable")
    return SortedMagnitudes(perm=perm, mags=absx[perm])


def _s_values(a, K):
    # s(k) = sum_{j > K-k} a_j - k * a_{K+1-k}  (1-based), k = 1..K
    suffix = np.cumsum(a[::-1])[::-1]
    k = np.arange(1, K + 1)
    start = K - k  # 0-based index of a_{K+1-k}
    return suffix[start] - k * a[start]


def envelope_state(x, K):
    """``k_*`` and the sequence ``s(1..K)`` for the ``QuadEnvPK`` closed form."""
    a = sorted_magnitudes(x).mags
    K = check_sparsity_level(K, a.size)
    if K == 0:
        raise InvalidArgumentError("envelope_state needs K >= 1")
    s = _s_values(a, K)
    # s is non-increasing: k_* is the last index before the first negative value
    negative = np.flatnonzero(s < 0)
    k_star = int(negative[0]) if negative.size else K
    return EnvelopeState(k_star=max(k_star, 1), s_values=s)


def _quad_env_pk_value(a, K):
    n = a.size
    if K == 0:
        return 0.0 if not np.any(a) else math.inf
    if K >= n or a[K] == 0.0:
        return 0.0
    k_star = envelope_state(a, K).k_star
    head = a[K - k_star:K]
    tail = a[K:]
    # T^2/k - sum a^2 regrouped so the result is small when the tail is small
    t_head, t_tail = head.sum(), tail.sum()
    spread = -np.sum((head - t_head / k_star) ** 2)
    cross = (2.0 * t_head * t_tail + t_tail ** 2) / k_star - np.sum(tail ** 2)
    return float(spread + cross)


# -- evaluation ----------------------------------------------------------------

def penalty_eval(kind, x):
    """Value of the penalty at ``x`` (``math.inf`` outside the domain)."""
    x = as_vector(x)
    if isinstance(kind, L1):
        return kind.lam * float(np.sum(np.abs(x)))
    if isinstance(kind, Card):
        return kind.mu * float(np.count_nonzero(x))
    if isinstance(kind, IndicatorPK):
        check_sparsity_level(kind.K, x.size)
        return 0.0 if np.count_nonzero(x) <= kind.K else math.inf
    if isinstance(kind, QuadEnvCard):
        # mu - (sqrt(mu) - a)^2 expanded, so the value at 0 is exactly 0
        root = math.sqrt(kind.mu)
        a = np.abs(x)
        flat = a >= root
        # flat coordinates counted, not summed, so the value equals mu * card there
        inner = a[~flat]
        return kind.mu * float(np.count_nonzero(flat)) + float(np.sum(inner * (2.0 * root - inner)))
    if isinstance(kind, QuadEnvPK):
        check_sparsity_level(kind.K, x.size)
        return _quad_env_pk_value(sorted_magnitudes(x).mags, kind.K)
    raise InvalidArgumentError(f"unsupported penalty {kind!r}")


# -- proximal maps -------------------------------------------------------------

def _keep_largest(y, K):
    out = np.zeros_like(y)
    if K == 0:
        return out
    keep = np.argsort(-np.abs(y), kind="stable")[:K]
    out[keep] = y[keep]
    return out


def _firm_threshold(y, mu, t):
    root = math.sqrt(mu)
    low = 2.0 * t * root
    absy = np.abs(y)
    mid = np.sign(y) * (absy - low) / (1.0 - 2.0 * t)
    return np.where(absy >= root, y, np.where(absy <= low, 0.0, mid))


def _pool_boundary(a, K, head_weight):
    """Weighted non-increasing fit of ``(a[:K] / head_weight, a[K:])``.

    Weights are ``head_weight`` on the first ``K`` entries and 1 on the rest.
    Both halves are already sorted, so only one block straddling position
    ``K`` can be pooled. Returns ``(lo, hi, value)`` of that block, with
    ``lo == hi`` when nothing needs pooling.
    """
    n = a.size
    if a[K - 1] / head_weight >= a[K]:
        return K, K, None
    lo, hi = K - 1, K + 1
    total = a[lo] + a[K]
    weight = head_weight + 1.0
    value = total / weight
    while True:
        if lo > 0 and a[lo - 1] / head_weight < value:
            lo -= 1
            total += a[lo]
            weight += head_weight
        elif hi < n and a[hi] > value:
            total += a[hi]
            weight += 1.0
            hi += 1
        else:
            return lo, hi, value
        value = total / weight


def _quad_env_pk_prox(y, K, t):
    n = y.size
    if K == 0:
        return np.zeros_like(y)
    if K >= n:
        return y.copy()
    # t*Q(x) + |x-y|^2/2 = (1-2t) [s*G(x) + |x - w|^2/2] + const with
    # G = Q/2 + |.|^2/2 convex, w = y/(1-2t), s = 2t/(1-2t). By Moreau,
    # prox_{sG}(w) = w - s * prox_{G*/s}(w/s), G*(u) = (1/2) sum_{top K} u^2,
    # whose prox is a weighted isotonic fit on sorted magnitudes.
    s = 2.0 * t / (1.0 - 2.0 * t)
    w = y / (1.0 - 2.0 * t)
    sm = sorted_magnitudes(y)
    a = sm.mags / (2.0 * t)  # |w / s|, sorted
    head_weight = 1.0 + 1.0 / s
    lo, hi, value = _pool_boundary(a, K, head_weight)
    u = np.concatenate([a[:K] / head_weight, a[K:]])
    if value is not None:
        u[lo:hi] = value
    x_sorted = np.abs(w[sm.perm]) - s * u
    x = np.zeros_like(y)
    x[sm.perm] = np.sign(y[sm.perm]) * np.maximum(x_sorted, 0.0)
    # exact values where no pooling touched the entry
    x[sm.perm[:min(lo, K)]] = y[sm.perm[:min(lo, K)]]
    x[sm.perm[max(hi, K):]] = 0.0
    return x


def penalty_prox(kind, y, t):
    """``argmin_x t * penalty(x) + ||x - y||^2 / 2``.

    Tie rules: the hard threshold keeps ``y_i`` only if ``|y_i| > sqrt(2 t mu)``;
    the firm threshold returns 0 when ``|y_i| <= 2 t sqrt(mu)``; magnitude ties
    in the ``K``-sparse maps are broken toward the lower index.

    Raises
    ------
    InvalidArgumentError
        If ``t <= 0``, or ``t >= 1/2`` for a quadratic envelope.
    """
    y = as_vector(y, name="y")
    t = check_positive(t, "t")
    if isinstance(kind, L1):
        return np.sign(y) * np.maximum(np.abs(y) - t * kind.lam, 0.0)
    if isinstance(kind, Card):
        return np.where(np.abs(y) > math.sqrt(2.0 * t * kind.mu), y, 0.0)
    if isinstance(kind, IndicatorPK):
        return _keep_largest(y, check_sparsity_level(kind.K, y.size))
    if _is_quad_env(kind) and t >= 0.5:
        raise InvalidArgumentError(
            f"step t={t} must be < 1/2 for the quadratic envelope penalties")
    if isinstance(kind, QuadEnvCard):
        return _firm_threshold(y, kind.mu, t)
    if isinstance(kind, QuadEnvPK):
        return _quad_env_pk_prox(y, check_sparsity_level(kind.K, y.size), t)
    raise InvalidArgumentError(f"unsupported penalty {kind!r}")


# -- subdifferential geometry --------------------------------------------------

def subgradient_distance(kind, x, z):
    """Euclidean distance from ``z`` to the subdifferential of ``G`` at ``x``.

    ``G = Q(f)/2 + ||.||^2/2``; ``x`` is stationary for the regularized
    least-squares objective exactly when the shadow point lies in that set.
    For ``QuadEnvPK`` the set is only characterized on ``card(x) <= K``.
    """
    x = as_vector(x)
    z = as_vector(z, x.size, "z")
    if isinstance(kind, QuadEnvCard):
        root = math.sqrt(kind.mu)
        absx = np.abs(x)
        d = np.where(
            absx >= root, z - x,
            np.where(absx > 0, z - root * np.sign(x),
                     np.maximum(np.abs(z) - root, 0.0)))
        return float(np.linalg.norm(d))
    if isinstance(kind, QuadEnvPK):
        K = check_sparsity_level(kind.K, x.size)
        support = np.flatnonzero(x)
        if support.size > K:
            raise InvalidArgumentError(
                f"card(x)={support.size} exceeds K={K}; the subdifferential is "
                "only characterized on the K-sparse set")
        radius = float(sorted_magnitudes(x).mags[K - 1]) if K > 0 else 0.0
        off = np.ones(x.size, dtype=bool)
        off[support] = False
        on_part = z[support] - x[support]
        off_part = np.maximum(np.abs(z[off]) - radius, 0.0)
        return float(math.sqrt(on_part @ on_part + off_part @ off_part))
    raise InvalidArgumentError(
        f"subgradient_distance is defined for the quadratic envelopes only, got {kind!r}")
