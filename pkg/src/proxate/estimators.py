"""Cross-fitted estimators of the long-term average treatment effect.

Units in each sample are split into K folds; for fold k every nuisance
(propensity e, outcome bridge h, pseudo-outcome regression hbar, and
the two reweighting bridges q_0, q_1) is fitted on the complement and
evaluated on fold k only. Four estimators share those evaluations:

    OB-OR   mean over E of  hbar(1, x) - hbar(0, x)
    OB-IPW  mean over E of  a h/e(x) - (1 - a) h/(1 - e(x))
    SB      mean over O of  (q_1 - q_0) y
    MR      E-part: (a - e)(h - hbar(a, x)) / (e(1 - e)) + hbar contrast,
            plus O-part: (q_1 - q_0)(y - h)

Only MR carries the plug-in variance

    V = (N/N_E^2) sum_E [e-part_i - tau]^2 + (N/N_O^2) sum_O [o-part_i]^2

and the normal confidence interval tau -+ z_{1-alpha/2} sqrt(V/N); the
other estimators report the point estimate alone. All per-unit
contributions are accumulated in dataset order, so relabeling folds
leaves every figure bit-identical.

Normalization note: the population identification result weights the
two samples by the true sampling share; here both parts are normalized
by the realized sample sizes N_E, N_O (the plug-in share n_e/N), an
asymptotically negligible difference.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import BasisSpec
from .bridges import (
    DEFAULT_RIDGE,
    BridgeFunction,
    MomentDiagnostics,
    solve_outcome_bridge,
    solve_surrogate_bridge,
)
from .data import CombinedDataset, SampleView
from .errors import DegenerateTreatmentError, ValidationError
from .nuisance import (
    DEFAULT_CLIP_EPS,
    HBarModel,
    PropensityModel,
    fit_hbar,
    fit_propensity,
)
from .stats import normal_quantile

ESTIMATOR_NAMES = ("OB-OR", "OB-IPW", "SB", "MR")


@dataclass(frozen=True)
class FoldAssignment:
    """Stratified K-fold partition: E and O rows are folded separately."""

    k_folds: int
    fold_of: np.ndarray  # (n,) fold label per dataset row
    seed: int

    def eval_indices(self, data: CombinedDataset, k: int, sample: str) -> np.ndarray:
        in_sample = data.is_e if sample == "E" else ~data.is_e
        return np.flatnonzero(in_sample & (self.fold_of == k))

    def train_indices(self, data: CombinedDataset, k: int, sample: str) -> np.ndarray:
        in_sample = data.is_e if sample == "E" else ~data.is_e
        return np.flatnonzero(in_sample & (self.fold_of != k))


def make_folds(data: CombinedDataset, k_folds: int, seed: int) -> FoldAssignment:
    """Deterministic stratified fold assignment.

    Each stratum is permuted with a counter-based generator and chopped
    into K nearly equal parts; remainder units go to the lowest-index
    folds.
    """
    if k_folds < 2:
        raise ValidationError(f"k_folds must be >= 2, got {k_folds}")
    if k_folds > min(data.n_e, data.n_o):
        raise ValidationError(
            f"k_folds={k_folds} exceeds the smaller stratum "
            f"(n_e={data.n_e}, n_o={data.n_o})"
        )
    rng = np.random.Generator(np.random.Philox(seed))
    fold_of = np.empty(data.n, dtype=np.int64)
    for mask in (data.is_e, ~data.is_e):
        idx = rng.permutation(np.flatnonzero(mask))
        base, rem = divmod(idx.shape[0], k_folds)
        start = 0
        for k in range(k_folds):
            size = base + (1 if k < rem else 0)
            fold_of[idx[start : start + size]] = k
            start += size
    return FoldAssignment(k_folds=k_folds, fold_of=fold_of, seed=seed)


@dataclass
class NuisanceSet:
    """One fold's fitted nuisances (e, h, hbar, q_0, q_1)."""

    e: PropensityModel
    h: BridgeFunction
    hbar: HBarModel
    q0: BridgeFunction
    q1: BridgeFunction
    diagnostics: list[MomentDiagnostics] = field(default_factory=list)


@dataclass(frozen=True)
class EstimatorConfig:
    """Basis specs, penalties, and guards shared by all estimators."""

    psi: BasisSpec = BasisSpec(roles=("w", "s", "x"), standardize=True)
    b: BasisSpec = BasisSpec(roles=("z", "s", "x"), standardize=True)
    phi: BasisSpec = BasisSpec(roles=("z", "s", "x"), standardize=True)
    g: BasisSpec = BasisSpec(roles=("w", "s", "x"), standardize=True)
    e_basis: BasisSpec = BasisSpec(roles=("x",))
    hbar_basis: BasisSpec = BasisSpec(roles=("x",))
    ridge_h: float = DEFAULT_RIDGE
    ridge_q: float = DEFAULT_RIDGE
    clip_eps: float = DEFAULT_CLIP_EPS
    known_propensity: float | None = None
    alpha: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError("alpha must be in (0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "EstimatorConfig":
        known = {
            "psi", "b", "phi", "g", "e_basis", "hbar_basis",
            "ridge_h", "ridge_q", "clip_eps", "known_propensity", "alpha",
        }
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown estimation keys: {sorted(unknown)}")
        kw = dict(d)
        for name in ("psi", "b", "phi", "g", "e_basis", "hbar_basis"):
            if name in kw:
                kw[name] = BasisSpec.from_dict(kw[name])
        return cls(**kw)


def fit_fold_nuisances(
    data: CombinedDataset,
    folds: FoldAssignment,
    k: int,
    config: EstimatorConfig,
) -> NuisanceSet:
    """Fit every nuisance for fold ``k`` on the fold's complement only."""
    if not 0 <= k < folds.k_folds:
        raise ValidationError(f"fold index {k} out of range")
    e_train = SampleView(data, folds.train_indices(data, k, "E"), "E")
    o_train = SampleView(data, folds.train_indices(data, k, "O"), "O")
    if e_train.n == 0 or o_train.n == 0:
        raise ValidationError(f"fold {k}: empty training complement")
    try:
        e_model = fit_propensity(
            e_train, config.e_basis, config.clip_eps, known_rate=config.known_propensity
        )
        h, h_diag = solve_outcome_bridge(o_train, config.psi, config.b, config.ridge_h)
        hbar = fit_hbar(e_train, h, config.hbar_basis)
        q0, q0_diag = solve_surrogate_bridge(
            o_train, e_train, 0, config.phi, config.g, e_model, config.ridge_q
        )
        q1, q1_diag = solve_surrogate_bridge(
            o_train, e_train, 1, config.phi, config.g, e_model, config.ridge_q
        )
    except DegenerateTreatmentError as exc:
        raise DegenerateTreatmentError(f"fold {k}: {exc}") from exc
    for diag in (h_diag, q0_diag, q1_diag):
        diag.label = f"fold{k}:{diag.label}"
    return NuisanceSet(
        e=e_model, h=h, hbar=hbar, q0=q0, q1=q1,
        diagnostics=[h_diag, q0_diag, q1_diag],
    )


@dataclass
class _UnitEvals:
    """Cross-fitted nuisance evaluations, aligned to dataset row order."""

    a: np.ndarray  # E units
    e_hat: np.ndarray
    h_e: np.ndarray
    hbar1: np.ndarray
    hbar0: np.ndarray
    y: np.ndarray  # O units
    h_o: np.ndarray
    q1: np.ndarray
    q0: np.ndarray
    n_clipped: int

    @property
    def hbar_a(self) -> np.ndarray:
        return np.where(self.a == 1.0, self.hbar1, self.hbar0)

    @property
    def mr_e_part(self) -> np.ndarray:
        resid = self.h_e - self.hbar_a
        score = (self.a - self.e_hat) * resid / (self.e_hat * (1.0 - self.e_hat))
        return score + self.hbar1 - self.hbar0

    @property
    def mr_o_part(self) -> np.ndarray:
        return (self.q1 - self.q0) * (self.y - self.h_o)


def evaluate_nuisances(
    data: CombinedDataset,
    folds: FoldAssignment,
    nuisance_sets: list[NuisanceSet],
) -> _UnitEvals:
    """Evaluate each fold's nuisances on that fold's held-out units."""
    idx_e = np.flatnonzero(data.is_e)
    idx_o = np.flatnonzero(~data.is_e)
    rank = np.empty(data.n, dtype=np.int64)
    rank[idx_e] = np.arange(idx_e.shape[0])
    rank[idx_o] = np.arange(idx_o.shape[0])

    n_e, n_o = idx_e.shape[0], idx_o.shape[0]
    a = np.empty(n_e)
    e_hat = np.empty(n_e)
    h_e = np.empty(n_e)
    hbar1 = np.empty(n_e)
    hbar0 = np.empty(n_e)
    y = np.empty(n_o)
    h_o = np.empty(n_o)
    q1 = np.empty(n_o)
    q0 = np.empty(n_o)
    n_clipped = 0

    for k, nus in enumerate(nuisance_sets):
        eidx = folds.eval_indices(data, k, "E")
        if eidx.shape[0]:
            ev = SampleView(data, eidx, "E")
            pos = rank[eidx]
            a[pos] = ev.a
            vals, clipped = nus.e.evaluate_counting(ev)
            n_clipped += clipped
            e_hat[pos] = vals
            h_e[pos] = nus.h.evaluate(ev)
            hbar1[pos] = nus.hbar.evaluate(1, ev)
            hbar0[pos] = nus.hbar.evaluate(0, ev)
        oidx = folds.eval_indices(data, k, "O")
        if oidx.shape[0]:
            ov = SampleView(data, oidx, "O")
            pos = rank[oidx]
            y[pos] = ov.y
            h_o[pos] = nus.h.evaluate(ov)
            q1[pos] = nus.q1.evaluate(ov)
            q0[pos] = nus.q0.evaluate(ov)

    return _UnitEvals(
        a=a, e_hat=e_hat, h_e=h_e, hbar1=hbar1, hbar0=hbar0,
        y=y, h_o=h_o, q1=q1, q0=q0, n_clipped=n_clipped,
    )


@dataclass
class EstimateReport:
    estimator: str
    tau_hat: float
    alpha: float
    k_folds: int
    seed: int | None
    variance_hat: float | None = None
    ci: tuple[float, float] | None = None
    n_e: int = 0
    n_o: int = 0
    n_propensity_clips: int = 0
    per_fold_diagnostics: list[MomentDiagnostics] = field(default_factory=list)

    def __post_init__(self):
        if (self.variance_hat is None) != (self.ci is None):
            raise ValidationError("ci must be present exactly when variance_hat is")
        if self.ci is not None:
            lo, hi = self.ci
            if not lo <= self.tau_hat <= hi:
                raise ValidationError("point estimate must lie inside its interval")

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator,
            "tau_hat": self.tau_hat,
            "variance_hat": self.variance_hat,
            "ci": None if self.ci is None else [self.ci[0], self.ci[1]],
            "alpha": self.alpha,
            "k_folds": self.k_folds,
            "seed": self.seed,
            "n_e": self.n_e,
            "n_o": self.n_o,
            "n_propensity_clips": self.n_propensity_clips,
            "per_fold_diagnostics": [d.to_dict() for d in self.per_fold_diagnostics],
        }


def confidence_interval(
    tau_hat: float, v_hat: float, n_total: int, alpha: float
) -> tuple[float, float]:
    """Normal interval tau -+ z_{1-alpha/2} sqrt(v_hat / n_total)."""
    if not 0.0 < alpha < 1.0:
        raise ValidationError("alpha must be in (0, 1)")
    if v_hat < 0.0:
        raise ValidationError("variance must be nonnegative")
    if n_total <= 0:
        raise ValidationError("n_total must be positive")
    half = normal_quantile(1.0 - alpha / 2.0) * float(np.sqrt(v_hat / n_total))
    return (float(tau_hat - half), float(tau_hat + half))


def fit_all_nuisances(data, folds, config) -> list[NuisanceSet]:
    """Fit the nuisance tuple for every fold."""
    return [fit_fold_nuisances(data, folds, k, config) for k in range(folds.k_folds)]


def _mr_variance_from_evals(evals: _UnitEvals, tau_hat: float, n: int) -> float:
    n_e = evals.a.shape[0]
    n_o = evals.y.shape[0]
    e_term = float(np.sum((evals.mr_e_part - tau_hat) ** 2))
    o_term = float(np.sum(evals.mr_o_part**2))
    return n / n_e**2 * e_term + n / n_o**2 * o_term


def mr_variance(
    data: CombinedDataset,
    folds: FoldAssignment,
    nuisance_sets: list[NuisanceSet],
    tau_hat: float,
) -> float:
    """Plug-in variance of the multiply robust estimator."""
    evals = evaluate_nuisances(data, folds, nuisance_sets)
    return _mr_variance_from_evals(evals, tau_hat, data.n)


def estimate_all(
    data: CombinedDataset,
    folds: FoldAssignment,
    config: EstimatorConfig,
    estimators: tuple[str, ...] = ESTIMATOR_NAMES,
    nuisance_transform=None,
    nuisance_sets: list[NuisanceSet] | None = None,
) -> dict[str, EstimateReport]:
    """Fit nuisances once and evaluate any subset of the four estimators.

    ``nuisance_transform`` (NuisanceSet -> NuisanceSet), when given, is
    applied to each fold's fitted nuisances before evaluation; the
    misspecification harness uses it to install corrupted components.
    Pre-fitted per-fold ``nuisance_sets`` skip the fitting pass.
    """
    for name in estimators:
        if name not in ESTIMATOR_NAMES:
            raise ValidationError(f"unknown estimator {name!r}; choose from {ESTIMATOR_NAMES}")
    if nuisance_sets is None:
        nuisance_sets = fit_all_nuisances(data, folds, config)
    elif len(nuisance_sets) != folds.k_folds:
        raise ValidationError("need one nuisance set per fold")
    if nuisance_transform is not None:
        nuisance_sets = [nuisance_transform(nus) for nus in nuisance_sets]
    evals = evaluate_nuisances(data, folds, nuisance_sets)
    diagnostics = [d for nus in nuisance_sets for d in nus.diagnostics]

    def report(name: str, tau: float, var: float | None = None) -> EstimateReport:
        ci = None if var is None else confidence_interval(tau, var, data.n, config.alpha)
        return EstimateReport(
            estimator=name,
            tau_hat=tau,
            variance_hat=var,
            ci=ci,
            alpha=config.alpha,
            k_folds=folds.k_folds,
            seed=folds.seed,
            n_e=data.n_e,
            n_o=data.n_o,
            n_propensity_clips=evals.n_clipped,
            per_fold_diagnostics=diagnostics,
        )

    out: dict[str, EstimateReport] = {}
    if "OB-OR" in estimators:
        out["OB-OR"] = report("OB-OR", float(np.mean(evals.hbar1 - evals.hbar0)))
    if "OB-IPW" in estimators:
        ipw = evals.a * evals.h_e / evals.e_hat - (1.0 - evals.a) * evals.h_e / (
            1.0 - evals.e_hat
        )
        out["OB-IPW"] = report("OB-IPW", float(np.mean(ipw)))
    if "SB" in estimators:
        out["SB"] = report("SB", float(np.mean((evals.q1 - evals.q0) * evals.y)))
    if "MR" in estimators:
        tau = float(np.mean(evals.mr_e_part) + np.mean(evals.mr_o_part))
        var = _mr_variance_from_evals(evals, tau, data.n)
        out["MR"] = report("MR", tau, var)
    return out


def estimate_ob_or(data, folds, config) -> EstimateReport:
    """Outcome-bridge, outcome-regression form."""
    return estimate_all(data, folds, config, estimators=("OB-OR",))["OB-OR"]


def estimate_ob_ipw(data, folds, config) -> EstimateReport:
    """Outcome-bridge, inverse-propensity form."""
    return estimate_all(data, folds, config, estimators=("OB-IPW",))["OB-IPW"]


def estimate_sb(data, folds, config) -> EstimateReport:
    """Surrogate-bridge reweighting form."""
    return estimate_all(data, folds, config, estimators=("SB",))["SB"]


def estimate_mr(data, folds, config) -> EstimateReport:
    """Multiply robust combination; the one estimator with inference."""
    return estimate_all(data, folds, config, estimators=("MR",))["MR"]
