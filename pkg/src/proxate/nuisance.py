"""Propensity score and pseudo-outcome regression on the experimental sample.

The propensity is a logistic-link regression on a covariate basis,
fitted by iteratively reweighted least squares (tolerance 1e-8, at most
100 iterations); under separation the unpenalized iteration diverges
and the fit falls back to a small ridge penalty, flagged on the model.
Predictions are always clipped into [clip_eps, 1 - clip_eps], the
overlap guard.

The pseudo-outcome regression evaluates a bridge function on the
experimental units and regresses it on the covariate basis separately
per treatment arm, which keeps the two arm curves exactly decoupled.

Randomized designs with a known assignment rate can skip fitting
entirely via ``known_rate``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BasisSpec, FittedBasis, eval_basis, fit_basis
from .bridges import BridgeFunction
from .errors import DegenerateTreatmentError, NumericalError, ValidationError
from .stats import ols

IRLS_TOL = 1e-8
IRLS_MAX_ITER = 100
SEPARATION_RIDGE = 1e-4
DEFAULT_CLIP_EPS = 0.01


def _sigmoid(t: np.ndarray) -> np.ndarray:
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass(frozen=True)
class PropensityModel:
    basis: FittedBasis | None
    coeffs: np.ndarray | None
    clip_eps: float
    fixed_rate: float | None = None
    ridged: bool = False

    def __post_init__(self):
        if not 0.0 < self.clip_eps < 0.5:
            raise ValidationError("clip_eps must be in (0, 0.5)")
        if (self.fixed_rate is None) == (self.basis is None):
            raise ValidationError("exactly one of fixed_rate or a fitted basis is required")

    def _raw(self, view) -> np.ndarray:
        if self.fixed_rate is not None:
            return np.full(view.n, self.fixed_rate)
        return _sigmoid(self.basis.transform(view) @ self.coeffs)

    def evaluate(self, view) -> np.ndarray:
        return np.clip(self._raw(view), self.clip_eps, 1.0 - self.clip_eps)

    def evaluate_counting(self, view) -> tuple[np.ndarray, int]:
        raw = self._raw(view)
        outside = int(((raw < self.clip_eps) | (raw > 1.0 - self.clip_eps)).sum())
        return np.clip(raw, self.clip_eps, 1.0 - self.clip_eps), outside

    def to_dict(self) -> dict:
        return {
            "basis": None if self.basis is None else self.basis.to_dict(),
            "coeffs": None if self.coeffs is None else self.coeffs.tolist(),
            "clip_eps": self.clip_eps,
            "fixed_rate": self.fixed_rate,
            "ridged": self.ridged,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PropensityModel":
        return cls(
            basis=None if d.get("basis") is None else FittedBasis.from_dict(d["basis"]),
            coeffs=None if d.get("coeffs") is None else np.asarray(d["coeffs"], dtype=float),
            clip_eps=float(d["clip_eps"]),
            fixed_rate=d.get("fixed_rate"),
            ridged=bool(d.get("ridged", False)),
        )

    @classmethod
    def known(cls, rate: float, clip_eps: float = DEFAULT_CLIP_EPS) -> "PropensityModel":
        if not 0.0 < rate < 1.0:
            raise ValidationError("known assignment rate must be in (0, 1)")
        return cls(basis=None, coeffs=None, clip_eps=clip_eps, fixed_rate=rate)


def eval_propensity(model: PropensityModel, record) -> float:
    if model.fixed_rate is not None:
        return float(np.clip(model.fixed_rate, model.clip_eps, 1.0 - model.clip_eps))
    t = float(eval_basis(model.basis, record) @ model.coeffs)
    return float(np.clip(_sigmoid(np.array([t]))[0], model.clip_eps, 1.0 - model.clip_eps))


def _irls(design: np.ndarray, a: np.ndarray, penalty: float) -> tuple[np.ndarray, bool]:
    """Newton/IRLS for logistic regression; returns (coeffs, converged)."""
    p = design.shape[1]
    beta = np.zeros(p)
    for _ in range(IRLS_MAX_ITER):
        eta = design @ beta
        prob = _sigmoid(eta)
        wgt = prob * (1.0 - prob)
        hess = design.T @ (design * wgt[:, None]) + penalty * np.eye(p)
        grad = design.T @ (a - prob) - penalty * beta
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            return beta, False
        if not np.isfinite(step).all():
            return beta, False
        beta = beta + step
        if np.max(np.abs(step)) < IRLS_TOL:
            return beta, True
        if np.max(np.abs(beta)) > 1e6:
            return beta, False
    return beta, False


def fit_propensity(
    e_view,
    basis: BasisSpec,
    clip_eps: float = DEFAULT_CLIP_EPS,
    *,
    known_rate: float | None = None,
) -> PropensityModel:
    """Fit the treatment propensity on an experimental view.

    With ``known_rate`` set (a known randomization probability) no
    fitting happens and the model is the clipped constant.
    """
    if known_rate is not None:
        return PropensityModel.known(known_rate, clip_eps)
    a = e_view.a
    n1 = int(a.sum())
    if n1 == 0 or n1 == a.shape[0]:
        raise DegenerateTreatmentError(
            f"propensity fit needs both arms; saw {n1} treated of {a.shape[0]}"
        )
    fb = fit_basis(basis, e_view)
    design = fb.transform(e_view)
    coeffs, converged = _irls(design, a, penalty=0.0)
    ridged = False
    if not converged:
        coeffs, converged = _irls(design, a, penalty=SEPARATION_RIDGE)
        ridged = True
        if not converged:
            raise NumericalError("propensity IRLS failed even with ridge fallback")
    return PropensityModel(basis=fb, coeffs=coeffs, clip_eps=clip_eps, ridged=ridged)


@dataclass(frozen=True)
class HBarModel:
    """Per-arm linear regressions of a pseudo-outcome on covariates."""

    basis: FittedBasis
    arm0_coeffs: np.ndarray
    arm1_coeffs: np.ndarray

    def evaluate(self, a: int, view) -> np.ndarray:
        coeffs = self.arm1_coeffs if a == 1 else self.arm0_coeffs
        return self.basis.transform(view) @ coeffs

    def to_dict(self) -> dict:
        return {
            "basis": self.basis.to_dict(),
            "arm0_coeffs": self.arm0_coeffs.tolist(),
            "arm1_coeffs": self.arm1_coeffs.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HBarModel":
        return cls(
            basis=FittedBasis.from_dict(d["basis"]),
            arm0_coeffs=np.asarray(d["arm0_coeffs"], dtype=float),
            arm1_coeffs=np.asarray(d["arm1_coeffs"], dtype=float),
        )

    @classmethod
    def constant(cls, basis: FittedBasis, value0: float, value1: float) -> "HBarModel":
        if not basis.spec.include_intercept:
            raise ValidationError("constant pseudo-outcome model needs an intercept")
        c0 = np.zeros(basis.out_dim)
        c1 = np.zeros(basis.out_dim)
        c0[0] = value0
        c1[0] = value1
        return cls(basis=basis, arm0_coeffs=c0, arm1_coeffs=c1)


def fit_hbar(e_view, h: BridgeFunction, basis: BasisSpec) -> HBarModel:
    """Regress the bridge pseudo-outcome on covariates, one fit per arm."""
    a = e_view.a
    n1 = int(a.sum())
    if n1 == 0 or n1 == a.shape[0]:
        raise DegenerateTreatmentError(
            f"pseudo-outcome regression needs both arms; saw {n1} treated of {a.shape[0]}"
        )
    pseudo = h.evaluate(e_view)
    fb = fit_basis(basis, e_view)
    design = fb.transform(e_view)
    treated = a == 1.0
    c1 = ols(design[treated], pseudo[treated], require_full_rank=False)
    c0 = ols(design[~treated], pseudo[~treated], require_full_rank=False)
    return HBarModel(basis=fb, arm0_coeffs=c0, arm1_coeffs=c1)


def eval_hbar(model: HBarModel, a: int, record) -> float:
    coeffs = model.arm1_coeffs if a == 1 else model.arm0_coeffs
    return float(eval_basis(model.basis, record) @ coeffs)
