"""Evaluation designs: masking splits, misspecification regimes, and
the Monte Carlo replication engine.

``split_and_mask`` turns a fully observed randomized sample into the
two-sample structure by masking complementary columns on two random
halves, so transportability holds by construction and estimator error
is attributable to the estimators alone.

``run_monte_carlo`` replays synthetic draws against the known truth.
Its misspecification regimes install deterministic, documented
corruptions into fitted nuisances -- a constant 0.8 propensity, the
bridge collapsed to the observational outcome mean, unit reweighting
functions, and a +-1 constant pseudo-outcome pair -- matching the four
patterns under which the multiply robust estimator should stay
consistent plus an everything-wrong power check. Corruptions are fixed
functions, not noise, so regime runs stay deterministic given seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .baselines import surrogate_index_estimate
from .bridges import constant_bridge
from .data import CombinedDataset, FullyObservedSample
from .dgp import DGPConfig, generate
from .errors import ProxateError, ValidationError
from .estimators import (
    ESTIMATOR_NAMES,
    EstimatorConfig,
    NuisanceSet,
    estimate_all,
    fit_all_nuisances,
    make_folds,
)
from .nuisance import HBarModel, PropensityModel

REGIME_NAMES = ("all_correct", "case1", "case2", "case3", "case4", "all_wrong")
HARNESS_ESTIMATORS = ESTIMATOR_NAMES + ("SI", "SI-PROX")

# Which nuisances each regime corrupts. case4 additionally replaces the
# pseudo-outcome regression with the exact refit against the corrupted
# (constant) bridge, which for a constant pseudo-outcome is the same
# constant in both arms.
_CORRUPTS = {
    "all_correct": frozenset(),
    "case1": frozenset({"e", "q"}),
    "case2": frozenset({"hbar", "q"}),
    "case3": frozenset({"h", "hbar"}),
    "case4": frozenset({"e", "h"}),
    "all_wrong": frozenset({"e", "h", "hbar", "q"}),
}


@dataclass(frozen=True)
class MaskDesign:
    e_fraction: float
    seed: int

    def __post_init__(self):
        if not 0.0 < self.e_fraction < 1.0:
            raise ValidationError("e_fraction must be in (0, 1)")


def split_and_mask(source: FullyObservedSample, design: MaskDesign) -> CombinedDataset:
    """Assign units to E/O at random and mask complementary columns.

    E keeps (a, s, w, x) and loses (y, z); O keeps (y, z, s, w, x) and
    loses a. Deterministic given the design seed.
    """
    rng = np.random.Generator(np.random.Philox(design.seed))
    is_e = rng.random(source.n) < design.e_fraction
    n_e = int(is_e.sum())
    if n_e == 0 or n_e == source.n:
        raise ValidationError(
            f"masking split produced an empty stratum (n_e={n_e} of {source.n})"
        )
    y = np.where(is_e, np.nan, source.y)
    z = np.where(is_e[:, None], np.nan, source.z)
    a = np.where(is_e, source.a, np.nan)
    return CombinedDataset.from_arrays(
        y=y, w=source.w, z=z, s=source.s, a=a, x=source.x, is_e=is_e
    )


@dataclass(frozen=True)
class Corruption:
    """Fixed wrong nuisances installed by the misspecification regimes."""

    e_const: float = 0.8
    h_const: float = 0.0  # set to the observational outcome mean at bind time
    q_const: float = 1.0
    hbar_arm1: float = 1.0
    hbar_arm0: float = -1.0


@dataclass(frozen=True)
class MisspecRegime:
    name: str
    corruption: Corruption = field(default_factory=Corruption)

    def __post_init__(self):
        if self.name not in REGIME_NAMES:
            raise ValidationError(
                f"unknown regime {self.name!r}; choose from {REGIME_NAMES}"
            )

    def corrupts(self, component: str) -> bool:
        return component in _CORRUPTS[self.name]


def make_regime(name: str, data: CombinedDataset | None = None) -> MisspecRegime:
    """Build a regime, binding the bridge corruption to the data's
    observational outcome mean when a dataset is supplied."""
    h_const = 0.0
    if data is not None:
        h_const = float(data.y[~data.is_e].mean())
    return MisspecRegime(name=name, corruption=Corruption(h_const=h_const))


def apply_misspec(nuisances: NuisanceSet, regime: MisspecRegime) -> NuisanceSet:
    """Replace the regime's corrupted components with fixed wrong ones.

    all_correct is the identity (and returns the very same object).
    """
    if not any(regime.corrupts(c) for c in ("e", "h", "hbar", "q")):
        return nuisances
    cor = regime.corruption
    e = nuisances.e
    h = nuisances.h
    hbar = nuisances.hbar
    q0, q1 = nuisances.q0, nuisances.q1
    if regime.corrupts("e"):
        e = PropensityModel.known(cor.e_const, nuisances.e.clip_eps)
    if regime.corrupts("h"):
        h = constant_bridge(nuisances.h, cor.h_const)
    if regime.corrupts("q"):
        q0 = constant_bridge(nuisances.q0, cor.q_const)
        q1 = constant_bridge(nuisances.q1, cor.q_const)
    if regime.corrupts("hbar"):
        hbar = HBarModel.constant(nuisances.hbar.basis, cor.hbar_arm0, cor.hbar_arm1)
    elif regime.name == "case4":
        # Keep the pseudo-outcome regression aligned with the corrupted
        # bridge: regressing a constant pseudo-outcome on (a, x) returns
        # that constant exactly, so the refit is available in closed form.
        hbar = HBarModel.constant(nuisances.hbar.basis, cor.h_const, cor.h_const)
    return NuisanceSet(
        e=e, h=h, hbar=hbar, q0=q0, q1=q1, diagnostics=list(nuisances.diagnostics)
    )


@dataclass
class EstimatorStats:
    mean: float
    bias: float
    sd: float
    rmse: float
    n_replications: int
    coverage_95: float | None = None

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "bias": self.bias,
            "sd": self.sd,
            "rmse": self.rmse,
            "coverage_95": self.coverage_95,
            "n_replications": self.n_replications,
        }


@dataclass
class MCReport:
    true_ate: float
    n_replications: int
    n_failed: int
    regimes: dict[str, dict[str, EstimatorStats]]

    def to_dict(self) -> dict:
        return {
            "true_ate": self.true_ate,
            "n_replications": self.n_replications,
            "n_failed": self.n_failed,
            "regimes": {
                regime: {est: st.to_dict() for est, st in table.items()}
                for regime, table in self.regimes.items()
            },
        }

    def format_table(self) -> str:
        lines = [
            f"true effect {self.true_ate:.6g}   replications {self.n_replications}"
            f"   failed {self.n_failed}"
        ]
        header = (
            f"{'regime':<12} {'estimator':<9} {'mean':>10} {'bias':>10} "
            f"{'sd':>10} {'rmse':>10} {'cover95':>8} {'reps':>6}"
        )
        lines.append(header)
        lines.append("-" * len(header))
        for regime, table in self.regimes.items():
            for est, st in table.items():
                cover = "" if st.coverage_95 is None else f"{st.coverage_95:.3f}"
                lines.append(
                    f"{regime:<12} {est:<9} {st.mean:>10.5f} {st.bias:>10.5f} "
                    f"{st.sd:>10.5f} {st.rmse:>10.5f} {cover:>8} {st.n_replications:>6}"
                )
        return "\n".join(lines)


def _aggregate(
    draws: list[float], true_ate: float, covered: list[bool] | None
) -> EstimatorStats:
    arr = np.asarray(draws, dtype=float)
    mean = float(arr.mean())
    bias = mean - true_ate
    sd = float(arr.std(ddof=0))
    rmse = float(np.sqrt(np.mean((arr - true_ate) ** 2)))
    coverage = None
    if covered is not None:
        coverage = float(np.mean(np.asarray(covered, dtype=float)))
    return EstimatorStats(
        mean=mean, bias=bias, sd=sd, rmse=rmse,
        n_replications=arr.shape[0], coverage_95=coverage,
    )


def run_monte_carlo(
    dgp: DGPConfig,
    n: int,
    pi: float,
    estimators: tuple[str, ...],
    regimes: tuple[str, ...],
    replications: int,
    base_seed: int,
    config: EstimatorConfig | None = None,
    k_folds: int = 5,
    max_failure_fraction: float = 0.02,
) -> MCReport:
    """Replicate synthetic estimation runs against the known truth.

    Replication r uses seed base_seed + r for both the draw and the
    folds; each is independent of execution order. Replications that
    fail (for example a degenerate fold) are recorded and excluded from
    the aggregates, but once failures exceed ``max_failure_fraction``
    of the requested runs the study aborts rather than silently
    reporting on a biased subset. Coverage is tracked for MR only, the
    one estimator with an interval.
    """
    if replications < 2:
        raise ValidationError("replications must be >= 2")
    for name in estimators:
        if name not in HARNESS_ESTIMATORS:
            raise ValidationError(
                f"unknown estimator {name!r}; choose from {HARNESS_ESTIMATORS}"
            )
    for name in regimes:
        if name not in REGIME_NAMES:
            raise ValidationError(f"unknown regime {name!r}; choose from {REGIME_NAMES}")
    config = config or EstimatorConfig()
    proximal = tuple(e for e in estimators if e in ESTIMATOR_NAMES)
    naive = tuple(e for e in estimators if e not in ESTIMATOR_NAMES)
    max_failures = int(np.floor(max_failure_fraction * replications))

    true_ate = None
    draws: dict[str, dict[str, list[float]]] = {
        rg: {est: [] for est in estimators} for rg in regimes
    }
    covered: dict[str, list[bool]] = {rg: [] for rg in regimes}
    n_failed = 0

    for r in range(replications):
        seed = base_seed + r
        try:
            data, oracle = generate(dgp, n, pi, seed)
            true_ate = oracle.true_ate
            folds = make_folds(data, k_folds, seed)
            nuisance_cache: list[NuisanceSet] | None = None
            naive_cache: dict[str, float] = {}
            for est in naive:
                naive_cache[est] = surrogate_index_estimate(
                    data, include_proxies=(est == "SI-PROX")
                ).tau_hat
            for rg in regimes:
                regime = make_regime(rg, data)
                if proximal:
                    if nuisance_cache is None:
                        nuisance_cache = fit_all_nuisances(data, folds, config)
                    transformed = [apply_misspec(nus, regime) for nus in nuisance_cache]
                    reports = estimate_all(
                        data,
                        folds,
                        config,
                        estimators=proximal,
                        nuisance_sets=transformed,
                    )
                    for est in proximal:
                        draws[rg][est].append(reports[est].tau_hat)
                    if "MR" in proximal:
                        lo, hi = reports["MR"].ci
                        covered[rg].append(lo <= oracle.true_ate <= hi)
                for est in naive:
                    draws[rg][est].append(naive_cache[est])
        except ProxateError as exc:
            n_failed += 1
            if n_failed > max_failures:
                raise ValidationError(
                    f"{n_failed} of {replications} replications failed "
                    f"(cap {max_failures}); last error: {exc}"
                ) from exc

    if true_ate is None:
        raise ValidationError("every replication failed")

    tables: dict[str, dict[str, EstimatorStats]] = {}
    for rg in regimes:
        tables[rg] = {}
        for est in estimators:
            cov = covered[rg] if est == "MR" and covered[rg] else None
            tables[rg][est] = _aggregate(draws[rg][est], true_ate, cov)
    return MCReport(
        true_ate=true_ate,
        n_replications=replications,
        n_failed=n_failed,
        regimes=tables,
    )
