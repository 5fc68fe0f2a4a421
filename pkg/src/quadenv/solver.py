"""Forward-backward splitting for ``penalty(x) + ||Ax - b||^2``.

The data term carries no factor 1/2, so its gradient is ``2 A^T (Ax - b)``
with Lipschitz constant ``2 ||A||^2``.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_matrix, as_vector
from .certificates import shadow_point
from .exceptions import DivergenceError, InvalidArgumentError
from .model import SensingMatrix, support_of
from .penalties import QuadEnvPK, _is_quad_env, penalty_eval, penalty_prox, subgradient_distance

__all__ = [
    "SolverConfig",
    "SolveResult",
    "default_step_size",
    "objective_value",
    "fbs_solve",
    "SUPPORT_THRESHOLD",
]

SUPPORT_THRESHOLD = 1e-6

_STARTS = ("zero", "lstsq")


@dataclass(frozen=True)
class SolverConfig:
    """Solver settings.

    ``step`` is a positive float or ``"auto"`` (see :func:`default_step_size`);
    ``start`` is ``"zero"``, ``"lstsq"`` (minimum-norm solution of Ax = b) or
    an explicit starting vector.
    """

    step: object = "auto"
    max_iter: int = 1000
    stop_tol: float = 1e-10
    start: object = "zero"

    def __post_init__(self):
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise InvalidArgumentError(f"max_iter must be a positive integer, got {self.max_iter}")
        if self.stop_tol < 0:
            raise InvalidArgumentError("stop_tol must be >= 0")
        if isinstance(self.step, str):
            if self.step != "auto":
                raise InvalidArgumentError(f"step must be a number or 'auto', got {self.step!r}")
        elif not (np.isfinite(self.step) and self.step > 0):
            raise InvalidArgumentError(f"step must be positive, got {self.step}")
        if isinstance(self.start, str) and self.start not in _STARTS:
            raise InvalidArgumentError(f"start must be one of {_STARTS} or a vector")


@dataclass
class SolveResult:
    x_final: np.ndarray
    objective_trace: np.ndarray
    stationarity_residual: float
    support: np.ndarray
    iterations_used: int
    converged: bool
    step: float
    shadow_norm: float
    residual_kind: str = field(default="subgradient")


def default_step_size(A):
    """``min(0.45 / ||A||^2, 0.45)``.

    Equivalent to a step of ``0.9 / ||A||^2`` for the data term written with a
    factor 1/2, capped so the envelope proximal maps stay well posed.
    """
    op_norm = A.op_norm if isinstance(A, SensingMatrix) else float(np.linalg.norm(as_matrix(A), 2))
    if op_norm == 0.0:
        return 0.45
    return min(0.45 / op_norm ** 2, 0.45)


def objective_value(A, b, kind, x):
    A = as_matrix(A)
    r = A @ as_vector(x, A.shape[1]) - as_vector(b, A.shape[0], "b")
    return penalty_eval(kind, x) + float(r @ r)


def _start_point(A, b, start):
    if isinstance(start, str):
        if start == "zero":
            return np.zeros(A.shape[1])
        return np.linalg.lstsq(A, b, rcond=None)[0]
    return as_vector(start, A.shape[1], "start").copy()


def _stationarity(A, b, kind, x, t):
    z = shadow_point(A, b, x)
    if _is_quad_env(kind) and not (
            isinstance(kind, QuadEnvPK) and np.count_nonzero(x) > kind.K):
        return subgradient_distance(kind, x, z), float(np.linalg.norm(z)), "subgradient"
    grad = 2.0 * (A.T @ (A @ x - b))
    fixed = penalty_prox(kind, x - t * grad, t)
    return float(np.linalg.norm(x - fixed)), float(np.linalg.norm(z)), "fixed-point"


def fbs_solve(A, b, kind, cfg=None):
    """Minimize ``penalty(x) + ||Ax - b||^2`` by forward-backward splitting.

    Iterates ``x <- prox_{t penalty}(x - 2 t A^T (Ax - b))`` until the iterate
    change drops below ``stop_tol * (1 + ||x||)`` or ``max_iter`` is reached.

    Parameters
    ----------
    A : SensingMatrix or array of shape (m, n)
    b : array of shape (m,)
    kind : penalty instance from :mod:`quadenv.penalties`
    cfg : SolverConfig, optional

    Returns
    -------
    SolveResult
        ``objective_trace[0]`` is the objective at the start point, followed by
        one entry per iteration. ``stationarity_residual`` is the distance from
        the shadow point to the subdifferential for the envelope penalties and
        the proximal fixed-point residual otherwise.

    Raises
    ------
    InvalidArgumentError
        On a step incompatible with the penalty.
    DivergenceError
        If an iterate has a non-finite objective.
    """
    cfg = SolverConfig() if cfg is None else cfg
    if not isinstance(A, SensingMatrix):
        A = SensingMatrix.from_array(A)
    M = A.entries
    b = as_vector(b, A.m, "b")
    t = default_step_size(A) if cfg.step == "auto" else float(cfg.step)
    if _is_quad_env(kind) and t >= 0.5:
        raise InvalidArgumentError(f"step {t} must be < 1/2 for {type(kind).__name__}")

    x = _start_point(M, b, cfg.start)
    trace = [objective_value(M, b, kind, x)]
    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_iter + 1):
        # overflow surfaces as a non-finite objective and a DivergenceError
        with np.errstate(over="ignore", invalid="ignore"):
            grad = 2.0 * (M.T @ (M @ x - b))
            x_new = penalty_prox(kind, x - t * grad, t)
            value = objective_value(M, b, kind, x_new)
        trace.append(value)
        if not math.isfinite(value):
            raise DivergenceError(f"non-finite objective at iteration {iterations}", trace)
        change = np.linalg.norm(x_new - x)
        bound = cfg.stop_tol * (1.0 + np.linalg.norm(x))
        x = x_new
        if change <= bound:
            converged = True
            break

    residual, z_norm, residual_kind = _stationarity(M, b, kind, x, t)
    return SolveResult(
        x_final=x,
        objective_trace=np.asarray(trace),
        stationarity_residual=residual,
        support=support_of(x, SUPPORT_THRESHOLD),
        iterations_used=iterations,
        converged=converged,
        step=t,
        shadow_norm=z_norm,
        residual_kind=residual_kind,
    )
