"""scikit-learn compatible wrapper around the FBS solver.

The sensing matrix plays the role of ``X`` (``m`` samples by ``n`` features)
and the measurements that of ``y``; the recovered sparse vector is
``coef_``. No intercept is fitted.
"""
import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .certificates import certify_card_minimizer, certify_pk_minimizer
from .exceptions import InvalidArgumentError
from .penalties import make_penalty
from .solver import SolverConfig, fbs_solve

__all__ = ["SparseRegressor"]


class SparseRegressor(RegressorMixin, BaseEstimator):
    """Sparse least squares ``penalty(w) + ||Xw - y||^2`` solved by FBS.

    Parameters
    ----------
    penalty : {"qcard", "qpk", "l1", "card", "pk"}, default="qcard"
        ``qcard`` and ``qpk`` are the quadratic envelopes of ``mu * card`` and
        of the indicator of ``card <= K``.
    mu : float, default=1.0
        Weight of the cardinality penalties.
    K : int, optional
        Sparsity level for ``pk`` and ``qpk``.
    lam : float, optional
        Weight of the ``l1`` penalty.
    step : float or "auto", default="auto"
    max_iter : int, default=1000
    tol : float, default=1e-10
        Stop when ``||w_new - w|| <= tol * (1 + ||w||)``.
    start : {"zero", "lstsq"}, default="zero"

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
    support_ : ndarray of int
    n_iter_ : int
    converged_ : bool
    objective_trace_ : ndarray
    stationarity_residual_ : float
    step_ : float
    """

    def __init__(self, penalty="qcard", mu=1.0, K=None, lam=None, step="auto",
                 max_iter=1000, tol=1e-10, start="zero"):
        self.penalty = penalty
        self.mu = mu
        self.K = K
        self.lam = lam
        self.step = step
        self.max_iter = max_iter
        self.tol = tol
        self.start = start

    def _penalty(self):
        return make_penalty(self.penalty, mu=self.mu, K=self.K, lam=self.lam)

    def fit(self, X, y):
        X, y = validate_data(self, X, y, y_numeric=True, dtype=np.float64)
        kind = self._penalty()
        cfg = SolverConfig(step=self.step, max_iter=self.max_iter, stop_tol=self.tol,
                           start=self.start)
        result = fbs_solve(X, y, kind, cfg)
        self.coef_ = result.x_final
        self.support_ = result.support
        self.n_iter_ = result.iterations_used
        self.converged_ = result.converged
        self.objective_trace_ = result.objective_trace
        self.stationarity_residual_ = result.stationarity_residual
        self.step_ = result.step
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = validate_data(self, X, reset=False, dtype=np.float64)
        return X @ self.coef_

    def certify(self, X, y, N=None):
        """Optimality certificate for the fitted ``coef_`` (envelope penalties only).

        ``N`` is the cardinality gap for ``qcard`` (default ``2 card(coef_)``).
        """
        check_is_fitted(self)
        X, y = validate_data(self, X, y, reset=False, y_numeric=True, dtype=np.float64)
        if self.penalty == "qcard":
            if N is None:
                N = max(2 * int(np.count_nonzero(self.coef_)), 1)
            return certify_card_minimizer(X, y, self.mu, self.coef_, min(N, X.shape[1]))
        if self.penalty == "qpk":
            return certify_pk_minimizer(X, y, self.K, self.coef_)
        raise InvalidArgumentError("certificates exist for the qcard and qpk penalties only")
