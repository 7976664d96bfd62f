"""Scalar statistics helpers: normal quantile/CDF and least-squares cores.

The quantile uses Wichura's PPND16 rational approximation (Algorithm
AS 241), accurate to well below 1e-9 everywhere on (0, 1), so inference
carries no dependency beyond numpy.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import NumericalError, ValidationError

# AS 241 PPND16 coefficients (central region, |p - 0.5| <= 0.425).
_A = (
    3.3871328727963666080e0,
    1.3314166789178437745e2,
    1.9715909503065514427e3,
    1.3731693765509461125e4,
    4.5921953931549871457e4,
    6.7265770927008700853e4,
    3.3430575583588128105e4,
    2.5090809287301226727e3,
)
_B = (
    1.0,
    4.2313330701600911252e1,
    6.8718700749205790830e2,
    5.3941960214247511077e3,
    2.1213794301586595867e4,
    3.9307895800092710610e4,
    2.8729085735721942674e4,
    5.2264952788528545610e3,
)
# Intermediate region, r = sqrt(-log(min(p, 1-p))) in (1.6-ish, 5].
_C = (
    1.42343711074968357734e0,
    4.63033784615654529590e0,
    5.76949722146069140550e0,
    3.64784832476320460504e0,
    1.27045825245236838258e0,
    2.41780725177450611770e-1,
    2.27238449892691845833e-2,
    7.74545014278341407640e-4,
)
_D = (
    1.0,
    2.05319162663775882187e0,
    1.67638483018380384940e0,
    6.89767334985100004550e-1,
    1.48103976427480074590e-1,
    1.51986665636164571966e-2,
    5.47593808499534494600e-4,
    1.05075007164441684324e-9,
)
# Tail region, r > 5.
_E = (
    6.65790464350110377720e0,
    5.46378491116411436990e0,
    1.78482653991729133580e0,
    2.96560571828504891230e-1,
    2.65321895265761230930e-2,
    1.24266094738807843860e-3,
    2.71155556874348757815e-5,
    2.01033439929228813265e-7,
)
_F = (
    1.0,
    5.99832206555887937690e-1,
    1.36929880922735805310e-1,
    1.48753612908506148525e-2,
    7.86869131145613259100e-4,
    1.84631831751005468180e-5,
    1.42151175831644588870e-7,
    2.04426310338993978564e-15,
)


def _poly(coeffs: tuple[float, ...], r: float) -> float:
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * r + c
    return acc


def normal_quantile(p: float) -> float:
    """Standard normal quantile function (inverse CDF)."""
    if not 0.0 < p < 1.0:
        raise ValidationError(f"quantile argument must be in (0, 1), got {p}")
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        return q * _poly(_A, r) / _poly(_B, r)
    r = p if q < 0.0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        value = _poly(_C, r) / _poly(_D, r)
    else:
        r -= 5.0
        value = _poly(_E, r) / _poly(_F, r)
    return -value if q < 0.0 else value


def normal_cdf(x: float) -> float:
    """Standard normal CDF via the complementary error function."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def two_sided_p(t: float) -> float:
    """Two-sided p-value of a statistic against the normal reference."""
    return float(np.clip(2.0 * normal_cdf(-abs(t)), 0.0, 1.0))


def ols(design: np.ndarray, y: np.ndarray, *, require_full_rank: bool = True) -> np.ndarray:
    """Least-squares coefficients of ``y`` on ``design``.

    Raises ``NumericalError`` on a rank-deficient design when
    ``require_full_rank`` is set.
    """
    design = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if require_full_rank and rank < design.shape[1]:
        raise NumericalError(
            f"rank-deficient design: rank {rank} < {design.shape[1]} columns"
        )
    return coef


def hc0_cov(design: np.ndarray, resid: np.ndarray) -> np.ndarray:
    """Heteroskedasticity-consistent (HC0) covariance of OLS coefficients."""
    xtx_inv = np.linalg.pinv(design.T @ design)
    meat = design.T @ (design * resid[:, None] ** 2)
    return xtx_inv @ meat @ xtx_inv


def model_cov(design: np.ndarray, resid: np.ndarray) -> np.ndarray:
    """Classical homoskedastic covariance sigma^2 (X'X)^-1."""
    n, p = design.shape
    sigma2 = float(resid @ resid) / max(n - p, 1)
    return sigma2 * np.linalg.pinv(design.T @ design)
