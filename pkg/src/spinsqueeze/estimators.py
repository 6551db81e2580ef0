"""Trial-ensemble statistics: optimal linear estimator, conditional variance,
noise-scaling fits and squeezing metrics.

The two fitted models follow the scikit-learn estimator API so they can be
cloned, grid-searched or dropped into pipelines.
"""

from dataclasses import dataclass
import math
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import DegenerateInputError, InvalidArgumentError, check_positive, check_samples


class Estimate(NamedTuple):
    value: float
    stderr: float


def db(ratio):
    """Power ratio in decibels."""
    r = np.asarray(ratio, dtype=float)
    if np.any(~(r > 0)):
        raise InvalidArgumentError(f"dB conversion needs a positive ratio, got {ratio!r}")
    out = 10 * np.log10(r)
    return float(out) if out.ndim == 0 else out


def db_inv(value_db):
    out = 10 ** (np.asarray(value_db, dtype=float) / 10)
    return float(out) if out.ndim == 0 else out


def variance_estimate(samples, method="gaussian", *, n_boot=200, random_state=None):
    """Unbiased sample variance with a standard error.

    ``method="gaussian"`` uses ``Var * sqrt(2 / (n - 1))``; ``"bootstrap"``
    resamples with the explicitly supplied `random_state`.
    """
    (x,) = check_samples(samples, min_length=2)
    var = float(np.var(x, ddof=1))
    if method == "gaussian":
        return Estimate(var, var * math.sqrt(2 / (len(x) - 1)))
    if method != "bootstrap":
        raise InvalidArgumentError(f"unknown error method {method!r}")
    if random_state is None:
        raise InvalidArgumentError("bootstrap errors need an explicit random_state")
    rng = np.random.default_rng(random_state)
    idx = rng.integers(0, len(x), size=(n_boot, len(x)))
    boot = np.var(x[idx], axis=1, ddof=1)
    return Estimate(var, float(np.std(boot, ddof=1)))


def chi_estimator(phi1, phi2):
    """Optimal estimator gain ``cov(phi1, phi2) / Var(phi1)``."""
    x, y = check_samples(phi1, phi2)
    var_x = np.var(x, ddof=1)
    if var_x == 0:
        raise DegenerateInputError("Var(phi1) is zero")
    return float(np.cov(x, y, ddof=1)[0, 1] / var_x)


def conditional_variance(phi1, phi2, var_readout=0.0):
    """``Var(phi2 - chi*phi1) - var_readout`` with its Gaussian standard error.

    The value is not clamped: estimator noise can leave it slightly negative.
    """
    var_readout = check_positive(var_readout, "var_readout", allow_zero=True)
    x, y = check_samples(phi1, phi2)
    chi = chi_estimator(x, y)
    resid = float(np.var(y - chi * x, ddof=1))
    return Estimate(resid - var_readout, resid * math.sqrt(2 / (len(x) - 1)))


class ConditionalEstimator(RegressorMixin, BaseEstimator):
    """Linear predictor of a second measurement from the first.

    Parameters
    ----------
    var_readout : float, default=0.0
        Read-out variance subtracted from the residual variance.

    Attributes
    ----------
    chi_ : float
        Regression gain ``cov(phi1, phi2) / Var(phi1)``.
    intercept_ : float
    var_conditional_ : float
        Read-out-subtracted residual variance.
    var_conditional_err_ : float
    n_samples_ : int
    """

    def __init__(self, var_readout=0.0):
        self.var_readout = var_readout

    def fit(self, X, y):
        x, y = check_samples(X, y)
        self.chi_ = chi_estimator(x, y)
        self.intercept_ = float(np.mean(y) - self.chi_ * np.mean(x))
        est = conditional_variance(x, y, self.var_readout)
        self.var_conditional_, self.var_conditional_err_ = est
        self.n_samples_ = len(x)
        return self

    def predict(self, X):
        check_is_fitted(self, "chi_")
        (x,) = check_samples(X, min_length=1)
        return self.intercept_ + self.chi_ * x


@dataclass(frozen=True)
class NoiseScalingFit:
    """Coefficients of ``Var = a1*Tx + a2*Tx**2``.

    When `tx_unit` differs from one, both variance and alignment are
    expressed in that unit, so `a1` is unit-free and `a2` is per `tx_unit`.
    """

    a1: float
    a2: float
    a1_err: float
    a2_err: float
    tx_unit: float = 1.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.a1, self.a2, self.a1_err, self.a2_err)):
            raise InvalidArgumentError("fit coefficients must be finite")
        if self.a1_err < 0 or self.a2_err < 0:
            raise InvalidArgumentError("fit errors must be non-negative")

    def predict(self, tx):
        t = np.asarray(tx, dtype=float) / self.tx_unit
        return (self.a1 * t + self.a2 * t**2) * self.tx_unit


class QuadraticNoiseRegressor(RegressorMixin, BaseEstimator):
    """Weighted least squares of ``Var = a1*Tx + a2*Tx**2`` without offset.

    Parameters
    ----------
    tx_unit : float, default=1.0
        Unit in which alignment and variance are expressed before fitting.

    Notes
    -----
    With `sample_weight` the weights are read as ``1 / sigma**2`` of the
    variances (in raw units) and the parameter covariance is
    ``(X^T W X)^-1``. Without weights the fit is ordinary least squares and
    the covariance is scaled by the residual variance.
    """

    def __init__(self, tx_unit=1.0):
        self.tx_unit = tx_unit

    def _design(self, X):
        (t,) = check_samples(X, min_length=1)
        t = t / self.tx_unit
        return np.column_stack([t, t**2])

    def fit(self, X, y, sample_weight=None):
        check_positive(self.tx_unit, "tx_unit")
        tx, var = check_samples(X, y)
        if np.any(tx <= 0):
            raise DegenerateInputError("Tx values must be positive")
        if len(np.unique(tx)) < 2:
            raise DegenerateInputError("need at least two distinct Tx values")
        design = self._design(tx)
        target = var / self.tx_unit
        if sample_weight is None:
            w = np.ones_like(target)
        else:
            (w,) = check_samples(sample_weight)
            if len(w) != len(target) or np.any(w <= 0):
                raise DegenerateInputError("sample weights must be positive, one per point")
            w = w * self.tx_unit**2
        sw = np.sqrt(w)
        a = design * sw[:, None]
        normal = a.T @ a
        if np.linalg.cond(normal) > 1e14:
            raise DegenerateInputError("design matrix is singular")
        coef, *_ = np.linalg.lstsq(a, target * sw, rcond=None)
        cov = np.linalg.inv(normal)
        resid = target - design @ coef
        if sample_weight is None:
            dof = len(target) - 2
            cov = cov * (float(resid @ resid) / dof if dof > 0 else 0.0)
        self.coef_ = coef
        self.coef_err_ = np.sqrt(np.clip(np.diag(cov), 0.0, None))
        self.covariance_ = cov
        self.chi2_ = float((resid * sw) @ (resid * sw))
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return (self._design(X) @ self.coef_) * self.tx_unit

    def to_fit(self):
        check_is_fitted(self, "coef_")
        return NoiseScalingFit(
            float(self.coef_[0]),
            float(self.coef_[1]),
            float(self.coef_err_[0]),
            float(self.coef_err_[1]),
            float(self.tx_unit),
        )


def quadratic_noise_fit(tx_values, variances, variance_errs=None, *, tx_unit=1.0):
    """Fit ``Var = a1*Tx + a2*Tx**2``, weighting by ``1/err**2`` when errors are given."""
    (tx,) = check_samples(tx_values)
    if len(np.unique(tx)) != len(tx):
        raise DegenerateInputError("Tx values must be distinct")
    weights = None
    if variance_errs is not None:
        (err,) = check_samples(variance_errs)
        if np.any(err <= 0):
            raise DegenerateInputError("variance errors must be positive")
        weights = 1 / err**2
    model = QuadraticNoiseRegressor(tx_unit=tx_unit).fit(tx, variances, sample_weight=weights)
    return model.to_fit()


def wineland_xi2(var_out, var_css_in, contrast):
    """Metrological squeezing ``(var_out / var_css_in) / contrast**2``."""
    check_positive(var_out, "var_out")
    check_positive(var_css_in, "var_css_in")
    contrast = float(contrast)
    if not 0 < contrast <= 1:
        raise InvalidArgumentError(f"contrast must lie in (0, 1], got {contrast!r}")
    return (var_out / var_css_in) / contrast**2


def entanglement_witness(noise_reduction_db, contrast):
    """True when the noise reduction and contrast give ``xi2_m < 1``."""
    return wineland_xi2(db_inv(noise_reduction_db), 1.0, contrast) < 1


@dataclass(frozen=True)
class SqueezingReport:
    var_phi1: float
    var_phi2: float
    var_conditional: float
    chi: float
    var_readout: float
    noise_reduction_db: float
    xi2_m: float
    entanglement_witness: bool

    def __post_init__(self):
        if self.var_conditional > self.var_phi2 + 1e-9 * max(abs(self.var_phi2), 1.0):
            raise InvalidArgumentError("conditional variance exceeds Var(phi2)")
        if not self.xi2_m > 0:
            raise InvalidArgumentError("xi2_m must be positive")


def squeezing_report(phi1, phi2, var_readout, tx_in, contrast):
    """Summarize a pair of correlated QND records at one alignment ``tx_in``."""
    x, y = check_samples(phi1, phi2)
    cond = conditional_variance(x, y, var_readout).value
    var_css = check_positive(tx_in, "tx_in") / 2
    # estimator noise can push the subtracted variance through zero
    ratio = max(cond, np.finfo(float).tiny) / var_css
    xi2 = wineland_xi2(ratio * var_css, var_css, contrast)
    return SqueezingReport(
        var_phi1=float(np.var(x, ddof=1)) - var_readout,
        var_phi2=float(np.var(y, ddof=1)) - var_readout,
        var_conditional=cond,
        chi=chi_estimator(x, y),
        var_readout=float(var_readout),
        noise_reduction_db=db(ratio),
        xi2_m=xi2,
        entanglement_witness=bool(xi2 < 1),
    )
