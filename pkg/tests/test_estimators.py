from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import proxate as px
from proxate.bridges import constant_bridge
from proxate.errors import DegenerateTreatmentError, ValidationError
from proxate.estimators import evaluate_nuisances, fit_all_nuisances
from proxate.nuisance import HBarModel, PropensityModel

CFG = px.EstimatorConfig()


# ---------------------------------------------------------------- folds


def test_fold_sizes_even(small_data):
    data, _ = small_data
    folds = px.make_folds(data, 2, seed=1)
    for sample in ("E", "O"):
        sizes = [folds.eval_indices(data, k, sample).shape[0] for k in range(2)]
        assert abs(sizes[0] - sizes[1]) <= 1


def test_fold_near_equal_rule():
    rng = np.random.default_rng(0)
    n = 12
    is_e = np.zeros(n, dtype=bool)
    is_e[:5] = True
    data = px.CombinedDataset.from_arrays(
        y=np.where(is_e, np.nan, rng.normal(size=n)),
        w=rng.normal(size=(n, 1)),
        z=np.where(is_e[:, None], np.nan, rng.normal(size=(n, 1))),
        s=rng.normal(size=(n, 1)),
        a=np.where(is_e, (rng.random(n) < 0.5).astype(float), np.nan),
        x=rng.normal(size=(n, 1)),
        is_e=is_e,
    )
    folds = px.make_folds(data, 2, seed=3)
    e_sizes = sorted(folds.eval_indices(data, k, "E").shape[0] for k in range(2))
    assert e_sizes == [2, 3]


def test_fold_validation(small_data):
    data, _ = small_data
    with pytest.raises(ValidationError):
        px.make_folds(data, 1, seed=0)
    with pytest.raises(ValidationError):
        px.make_folds(data, data.n_e + 1, seed=0)


def test_fold_determinism(small_data):
    data, _ = small_data
    f1 = px.make_folds(data, 5, seed=42)
    f2 = px.make_folds(data, 5, seed=42)
    np.testing.assert_array_equal(f1.fold_of, f2.fold_of)
    f3 = px.make_folds(data, 5, seed=43)
    assert not np.array_equal(f1.fold_of, f3.fold_of)


@settings(max_examples=20, deadline=None)
@given(k=st.integers(min_value=2, max_value=7), seed=st.integers(min_value=0, max_value=999))
def test_fold_partition_properties(k, seed):
    rng = np.random.default_rng(seed)
    n = 61
    is_e = rng.random(n) < 0.5
    is_e[:8] = True
    is_e[-8:] = False
    data = px.CombinedDataset.from_arrays(
        y=np.where(is_e, np.nan, rng.normal(size=n)),
        w=rng.normal(size=(n, 1)),
        z=np.where(is_e[:, None], np.nan, rng.normal(size=(n, 1))),
        s=rng.normal(size=(n, 1)),
        a=np.where(is_e, (rng.random(n) < 0.5).astype(float), np.nan),
        x=rng.normal(size=(n, 1)),
        is_e=is_e,
    )
    folds = px.make_folds(data, k, seed=seed)
    for sample, total in (("E", data.n_e), ("O", data.n_o)):
        chunks = [folds.eval_indices(data, j, sample) for j in range(k)]
        sizes = [c.shape[0] for c in chunks]
        assert sum(sizes) == total
        assert max(sizes) - min(sizes) <= 1
        merged = np.concatenate(chunks)
        assert np.unique(merged).shape[0] == total


# ------------------------------------------------------- fold nuisances


def test_fit_fold_uses_complement_only(small_data):
    data, _ = small_data
    folds = px.make_folds(data, 2, seed=9)
    for k in range(2):
        train_e = folds.train_indices(data, k, "E")
        eval_e = folds.eval_indices(data, k, "E")
        assert np.intersect1d(train_e, eval_e).shape[0] == 0
        assert train_e.shape[0] + eval_e.shape[0] == data.n_e
    nus = px.fit_fold_nuisances(data, folds, 0, CFG)
    assert nus.h.kind == "outcome" and nus.q1.arm == 1


def test_fit_fold_deterministic(small_data):
    data, _ = small_data
    folds = px.make_folds(data, 3, seed=2)
    a = px.fit_fold_nuisances(data, folds, 1, CFG)
    b = px.fit_fold_nuisances(data, folds, 1, CFG)
    np.testing.assert_array_equal(a.h.coeffs, b.h.coeffs)
    np.testing.assert_array_equal(a.q0.coeffs, b.q0.coeffs)
    np.testing.assert_array_equal(a.e.coeffs, b.e.coeffs)


def test_single_arm_complement_raises_with_fold_index():
    rng = np.random.default_rng(1)
    n = 40
    is_e = np.zeros(n, dtype=bool)
    is_e[:20] = True
    # Exactly one treated unit: some training complement sees only controls.
    a_e = np.zeros(20)
    a_e[0] = 1.0
    data = px.CombinedDataset.from_arrays(
        y=np.where(is_e, np.nan, rng.normal(size=n)),
        w=rng.normal(size=(n, 1)),
        z=np.where(is_e[:, None], np.nan, rng.normal(size=(n, 1))),
        s=rng.normal(size=(n, 1)),
        a=np.where(is_e, np.concatenate([a_e, np.zeros(20)]), np.nan),
        x=rng.normal(size=(n, 1)),
        is_e=is_e,
    )
    folds = px.make_folds(data, 2, seed=0)
    treated_fold = int(folds.fold_of[0])
    # Training for the treated unit's own fold excludes it entirely.
    with pytest.raises(DegenerateTreatmentError) as err:
        px.fit_fold_nuisances(data, folds, treated_fold, CFG)
    assert f"fold {treated_fold}" in str(err.value)


# ------------------------------------------------- estimator reductions


def _force(e=None, h=None, hbar=None, q=None):
    def transform(nus):
        return px.NuisanceSet(
            e=e(nus) if e else nus.e,
            h=h(nus) if h else nus.h,
            hbar=hbar(nus) if hbar else nus.hbar,
            q0=q(nus)[0] if q else nus.q0,
            q1=q(nus)[1] if q else nus.q1,
            diagnostics=nus.diagnostics,
        )

    return transform


def test_ob_or_zero_when_h_constant(small_data):
    data, _ = small_data
    folds = px.make_folds(data, 2, seed=5)
    nus = fit_all_nuisances(data, folds, CFG)

    def refit_hbar(n):
        return px.fit_hbar(
            px.SampleView(data, np.flatnonzero(data.is_e), "E"),
            constant_bridge(n.h, 7.0),
            CFG.hbar_basis,
        )

    transform = _force(h=lambda n: constant_bridge(n.h, 7.0), hbar=refit_hbar)
    rep = px.estimate_all(data, folds, CFG, estimators=("OB-OR",),
                          nuisance_sets=nus, nuisance_transform=transform)["OB-OR"]
    assert rep.tau_hat == pytest.approx(0.0, abs=1e-10)


def test_ob_ipw_exact_cancellation(small_data):
    data, _ = small_data
    folds = px.make_folds(data, 2, seed=5)
    e_view = px.split_by_sample(data)[0]
    share = float(e_view.a.mean())
    transform = _force(
        e=lambda n: PropensityModel.known(share, clip_eps=0.001),
        h=lambda n: constant_bridge(n.h, 3.0),
    )
    rep = px.estimate_all(data, folds, CFG, estimators=("OB-IPW",),
                          nuisance_transform=transform)["OB-IPW"]
    assert rep.tau_hat == pytest.approx(0.0, abs=1e-12)


def test_ob_ipw_biased_at_clip_boundary(confounded_cfg):
    # Propensity glued to 0.01 under a 0.5 design: the harness must flag it.
    taus = []
    for r in range(20):
        data, oracle = px.generate(confounded_cfg, 4000, 0.5, seed=800 + r)
        folds = px.make_folds(data, 2, seed=r)
        transform = _force(e=lambda n: PropensityModel.known(0.011, clip_eps=0.01))
        rep = px.estimate_all(data, folds, CFG, estimators=("OB-IPW",),
                              nuisance_transform=transform)["OB-IPW"]
        taus.append(rep.tau_hat)
    taus = np.array(taus)
    bias = taus.mean() - 1.0
    se = taus.std(ddof=1) / np.sqrt(taus.shape[0])
    assert abs(bias) > 5.0 * se


def test_sb_zero_when_arms_equal(small_data):
    data, _ = small_data
    folds = px.make_folds(data, 2, seed=5)
    transform = _force(q=lambda n: (n.q1, n.q1))
    rep = px.estimate_all(data, folds, CFG, estimators=("SB",),
                          nuisance_transform=transform)["SB"]
    assert rep.tau_hat == 0.0


def test_sb_shift_moves_by_reweighting_mass_gap(small_data):
    # A constant outcome shift moves the estimate by exactly
    # c * (mean_O q1 - mean_O q0) over the evaluation units. Each
    # reweighting function normalizes to one over its own training
    # complement (see the solver-level normalization test), so the gap
    # is held-out noise, not a systematic offset.
    data, _ = small_data
    e_view = px.split_by_sample(data)[0]
    share = float(e_view.a.mean())
    cfg = px.EstimatorConfig(ridge_q=0.0, known_propensity=share)
    folds = px.make_folds(data, 2, seed=5)
    nus = fit_all_nuisances(data, folds, cfg)
    rep = px.estimate_all(data, folds, cfg, estimators=("SB",), nuisance_sets=nus)["SB"]

    shifted = px.CombinedDataset.from_arrays(
        y=data.y + 11.0, w=data.w, z=data.z, s=data.s, a=data.a, x=data.x, is_e=data.is_e
    )
    rep_shift = px.estimate_all(shifted, folds, cfg, estimators=("SB",),
                                nuisance_sets=nus)["SB"]
    evals = evaluate_nuisances(data, folds, nus)
    mass_gap = float(np.mean(evals.q1 - evals.q0))
    assert rep_shift.tau_hat - rep.tau_hat == pytest.approx(11.0 * mass_gap, abs=1e-10)
    # and the mass gap itself is small held-out noise
    assert abs(mass_gap) < 0.02


def test_mr_reduces_to_e_part_when_q_arms_equal(small_data):
    data, _ = small_data
    folds = px.make_folds(data, 3, seed=6)
    nus = fit_all_nuisances(data, folds, CFG)
    transform = _force(q=lambda n: (n.q1, n.q1))
    transformed = [transform(n) for n in nus]
    rep = px.estimate_all(data, folds, CFG, estimators=("MR",),
                          nuisance_sets=transformed)["MR"]
    evals = evaluate_nuisances(data, folds, transformed)
    assert np.all(evals.mr_o_part == 0.0)
    assert rep.tau_hat == float(np.mean(evals.mr_e_part))


def test_mr_reduces_to_sb_when_h_and_hbar_zero(small_data):
    data, _ = small_data
    folds = px.make_folds(data, 3, seed=6)
    nus = fit_all_nuisances(data, folds, CFG)
    transform = _force(
        h=lambda n: constant_bridge(n.h, 0.0),
        hbar=lambda n: HBarModel.constant(n.hbar.basis, 0.0, 0.0),
    )
    transformed = [transform(n) for n in nus]
    reps = px.estimate_all(data, folds, CFG, estimators=("MR", "SB"),
                           nuisance_sets=transformed)
    assert reps["MR"].tau_hat == reps["SB"].tau_hat


def test_fold_label_permutation_bit_identical(small_data):
    data, _ = small_data
    folds = px.make_folds(data, 4, seed=13)
    perm = np.array([2, 0, 3, 1])
    permuted = px.FoldAssignment(
        k_folds=4, fold_of=perm[folds.fold_of], seed=folds.seed
    )
    r1 = px.estimate_all(data, folds, CFG)
    r2 = px.estimate_all(data, permuted, CFG)
    for name in r1:
        assert r1[name].tau_hat == r2[name].tau_hat
    assert r1["MR"].variance_hat == r2["MR"].variance_hat


def test_record_order_invariance(small_data):
    data, _ = small_data
    folds = px.make_folds(data, 3, seed=17)
    rng = np.random.default_rng(0)
    perm = rng.permutation(data.n)
    shuffled = px.CombinedDataset.from_arrays(
        y=data.y[perm], w=data.w[perm], z=data.z[perm], s=data.s[perm],
        a=data.a[perm], x=data.x[perm], is_e=data.is_e[perm],
    )
    moved_folds = px.FoldAssignment(
        k_folds=3, fold_of=folds.fold_of[perm], seed=folds.seed
    )
    r1 = px.estimate_all(data, folds, CFG)
    r2 = px.estimate_all(shuffled, moved_folds, CFG)
    for name in r1:
        assert abs(r1[name].tau_hat - r2[name].tau_hat) < 1e-12


def test_ob_estimators_agree_under_known_randomization(confounded_cfg):
    taus_or, taus_ipw = [], []
    for r in range(25):
        data, _ = px.generate(confounded_cfg, 8000, 0.5, seed=400 + r)
        folds = px.make_folds(data, 2, seed=r)
        cfg = px.EstimatorConfig(known_propensity=confounded_cfg.p_treat)
        reps = px.estimate_all(data, folds, cfg, estimators=("OB-OR", "OB-IPW"))
        taus_or.append(reps["OB-OR"].tau_hat)
        taus_ipw.append(reps["OB-IPW"].tau_hat)
    diff = np.array(taus_or) - np.array(taus_ipw)
    se = diff.std(ddof=1) / np.sqrt(diff.shape[0])
    assert abs(diff.mean()) < 3.0 * max(se, 1e-6)


# ---------------------------------------------------- variance and CI


def test_mr_variance_signature(small_data):
    data, _ = small_data
    folds = px.make_folds(data, 3, seed=6)
    nus = fit_all_nuisances(data, folds, CFG)
    rep = px.estimate_all(data, folds, CFG, estimators=("MR",), nuisance_sets=nus)["MR"]
    v = px.mr_variance(data, folds, nus, rep.tau_hat)
    assert v == pytest.approx(rep.variance_hat)
    assert v >= 0.0


def test_mr_variance_degenerate_zero(small_data):
    data, _ = small_data
    folds = px.make_folds(data, 2, seed=5)
    nus = fit_all_nuisances(data, folds, CFG)
    share = float(px.split_by_sample(data)[0].a.mean())
    transform = _force(
        e=lambda n: PropensityModel.known(share, clip_eps=0.001),
        h=lambda n: constant_bridge(n.h, 2.0),
        hbar=lambda n: HBarModel.constant(n.hbar.basis, 2.0, 2.0),
        q=lambda n: (n.q1, n.q1),
    )
    transformed = [transform(n) for n in nus]
    rep = px.estimate_all(data, folds, CFG, estimators=("MR",),
                          nuisance_sets=transformed)["MR"]
    # residual h - hbar(a, .) is identically zero and both contrasts vanish
    assert rep.tau_hat == 0.0
    assert px.mr_variance(data, folds, transformed, rep.tau_hat) == pytest.approx(0.0, abs=1e-20)


def test_confidence_interval_examples():
    lo, hi = px.confidence_interval(1.0, 4.0, 400, 0.05)
    assert (round(lo, 3), round(hi, 3)) == (0.804, 1.196)
    assert lo == pytest.approx(1.0 - 1.959963985 * 0.1, abs=1e-9)

    lo0, hi0 = px.confidence_interval(2.5, 0.0, 100, 0.05)
    assert lo0 == hi0 == 2.5

    lo1, hi1 = px.confidence_interval(0.0, 1.0, 1, 0.32)
    from proxate.stats import normal_quantile

    assert hi1 - lo1 == pytest.approx(2.0 * normal_quantile(0.84), abs=1e-12)


def test_confidence_interval_validation():
    with pytest.raises(ValidationError):
        px.confidence_interval(0.0, 1.0, 10, 0.0)
    with pytest.raises(ValidationError):
        px.confidence_interval(0.0, 1.0, 10, 1.0)
    with pytest.raises(ValidationError):
        px.confidence_interval(0.0, -1.0, 10, 0.05)


def test_report_invariants(small_data):
    data, _ = small_data
    folds = px.make_folds(data, 2, seed=5)
    rep = px.estimate_all(data, folds, CFG, estimators=("MR",))["MR"]
    lo, hi = rep.ci
    assert lo <= rep.tau_hat <= hi
    assert rep.variance_hat is not None
    width = hi - lo
    assert width == pytest.approx(
        2.0 * 1.959963985 * np.sqrt(rep.variance_hat / data.n), rel=1e-8
    )
    other = px.estimate_all(data, folds, CFG, estimators=("OB-OR",))["OB-OR"]
    assert other.variance_hat is None and other.ci is None
    d = rep.to_dict()
    assert d["estimator"] == "MR" and d["k_folds"] == 2 and d["seed"] == 5


def test_public_wrappers_match_estimate_all(small_data):
    data, _ = small_data
    folds = px.make_folds(data, 2, seed=8)
    combined = px.estimate_all(data, folds, CFG)
    assert px.estimate_ob_or(data, folds, CFG).tau_hat == combined["OB-OR"].tau_hat
    assert px.estimate_ob_ipw(data, folds, CFG).tau_hat == combined["OB-IPW"].tau_hat
    assert px.estimate_sb(data, folds, CFG).tau_hat == combined["SB"].tau_hat
    mr = px.estimate_mr(data, folds, CFG)
    assert mr.tau_hat == combined["MR"].tau_hat
    assert mr.variance_hat == combined["MR"].variance_hat


def test_unknown_estimator_rejected(small_data):
    data, _ = small_data
    folds = px.make_folds(data, 2, seed=5)
    with pytest.raises(ValidationError):
        px.estimate_all(data, folds, CFG, estimators=("XXX",))
