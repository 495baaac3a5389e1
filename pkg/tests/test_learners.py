import numpy as np
import pytest
from sklearn.exceptions import NotFittedError

from catefuse.data import DataError, Dataset
from catefuse.learners import (
    BiasCorrectionLearner,
    CombinedLearner,
    DifferenceInMeans,
    DRLearner,
    ExternalBlendLearner,
    FitError,
    LEARNER_NAMES,
    QRLearner,
    TLearner,
    effective_propensity,
    lambda_from_predictions,
    make_learner,
    select_lambda_cv,
)
from catefuse.regressors import (
    ConstantClassifier,
    GradientBoostedTrees,
    LinearRegressor,
    ZeroRegressor,
)
from catefuse.rng import stream
from catefuse.simgen import DGPConfig, generate

B_COEF = np.array([0.5, -0.3, 0.2])
TAU_COEF = np.array([1.0, 0.5, -1.0])


def linear_trial(n=240, seed=0, noise=0.0, e=0.5):
    """Noiseless-by-default trial data: y = x@B + a * (1 + x@T)."""
    rng = stream(seed, "linear-trial")
    x = rng.normal(size=(n, 3))
    a = (rng.random(n) < e).astype(int)
    tau = 1.0 + x @ TAU_COEF
    y = x @ B_COEF + a * tau + noise * rng.normal(size=n)
    return Dataset(x, np.ones(n, dtype=int), a, y, np.full(n, e)), tau


def with_external(trial_ds, n0=200, seed=1, shift_treated=0.0, x_shift=0.0,
                  slope_treated=0.0):
    """Append external rows drawn from the same linear law, optionally
    corrupting treated outcomes (constant or slope) or shifting covariates."""
    rng = stream(seed, "linear-ext")
    x = rng.normal(size=(n0, 3)) + x_shift
    a = (rng.random(n0) < 0.5).astype(int)
    tau = 1.0 + x @ TAU_COEF
    y = x @ B_COEF + a * tau + (shift_treated + slope_treated * x[:, 0]) * a
    ext = Dataset(x, np.zeros(n0, dtype=int), a, y, np.full(n0, 0.5))
    x_all = np.vstack([trial_ds.x, x])
    return Dataset(
        x_all,
        np.concatenate([trial_ds.s, ext.s]),
        np.concatenate([trial_ds.a, ext.a]),
        np.concatenate([trial_ds.y, ext.y]),
        np.concatenate([trial_ds.e, ext.e]),
    )


# -- effective_propensity -----------------------------------------------------

def test_effective_propensity_passthrough_and_fill():
    ds, _ = linear_trial(20)
    ds2 = with_external(ds, 10)
    assert np.array_equal(effective_propensity(ds2), ds2.e)
    # external slots invalid, trial constant: filled with the constant
    e = np.array(ds2.e)
    e[ds2.s == 0] = np.nan
    ds3 = Dataset(ds2.x, ds2.s, ds2.a, ds2.y, e)
    assert np.all(effective_propensity(ds3)[ds3.s == 0] == 0.5)
    # invalid external slots and non-constant trial e: no usable rule
    e2 = np.array(e)
    e2[0] = 0.4
    ds4 = Dataset(ds2.x, ds2.s, ds2.a, ds2.y, e2)
    with pytest.raises(DataError):
        effective_propensity(ds4)


# -- DifferenceInMeans --------------------------------------------------------

def test_difference_in_means_hand_oracle():
    ds, _ = linear_trial(100, seed=3)
    ds_full = with_external(ds, 50, shift_treated=99.0)  # externals must not matter
    want = ds.y[ds.a == 1].mean() - ds.y[ds.a == 0].mean()
    model = DifferenceInMeans().fit(ds_full)
    assert model.ate_ == pytest.approx(want, rel=1e-14)
    preds = model.predict(np.zeros((4, 3)))
    assert np.all(preds == model.ate_)


def test_difference_in_means_needs_both_arms():
    ds, _ = linear_trial(30)
    forced = Dataset(ds.x, ds.s, np.ones(30, dtype=int), ds.y, ds.e)
    with pytest.raises(FitError, match="arm 0"):
        DifferenceInMeans().fit(forced)


# -- TLearner -----------------------------------------------------------------

def test_t_learner_exact_on_linear_arms():
    ds, tau = linear_trial(200, seed=4)
    model = TLearner(base=LinearRegressor()).fit(ds)
    assert np.max(np.abs(model.predict(ds.x) - tau)) < 1e-8


def test_pooled_t_duplicated_rows_shift_oracle():
    # external rows duplicate trial rows with treated outcomes shifted by
    # delta: least squares on duplicated x averages the targets, so the
    # pooled effect is exactly the trial effect plus delta / 2
    ds, tau = linear_trial(150, seed=5)
    delta = 2.0
    ext = Dataset(ds.x, np.zeros(ds.n, dtype=int), ds.a,
                  ds.y + delta * ds.a, ds.e)
    fused = Dataset(
        np.vstack([ds.x, ext.x]),
        np.concatenate([ds.s, ext.s]),
        np.concatenate([ds.a, ext.a]),
        np.concatenate([ds.y, ext.y]),
        np.concatenate([ds.e, ext.e]),
    )
    trial_only = TLearner(base=LinearRegressor()).fit(fused)
    pooled = TLearner(base=LinearRegressor(), pooled=True).fit(fused)
    gap = pooled.predict(ds.x) - trial_only.predict(ds.x)
    assert np.max(np.abs(gap - delta / 2.0)) < 1e-8


def test_pooled_t_matches_trial_when_sources_agree():
    ds, tau = linear_trial(150, seed=6)
    fused = with_external(ds, 150, seed=7)
    pooled = TLearner(base=LinearRegressor(), pooled=True).fit(fused)
    assert np.max(np.abs(pooled.predict(ds.x) - tau)) < 1e-8


# -- DRLearner ----------------------------------------------------------------

def test_dr_learner_recovers_noiseless_linear_effect():
    ds, tau = linear_trial(300, seed=8)
    model = DRLearner(stage1=LinearRegressor(), seed=1).fit(ds)
    assert np.max(np.abs(model.predict(ds.x) - tau)) < 1e-4


def test_dr_learner_ignores_external_rows():
    ds, _ = linear_trial(300, seed=9)
    fused = with_external(ds, 200, shift_treated=50.0, seed=10)
    alone = DRLearner(stage1=LinearRegressor(), seed=2).fit(ds)
    with_bad_ext = DRLearner(stage1=LinearRegressor(), seed=2).fit(fused)
    grid = stream(0, "grid").normal(size=(20, 3))
    assert np.array_equal(alone.predict(grid), with_bad_ext.predict(grid))


def test_pw_variant_pseudo_outcomes_exact():
    ds, _ = linear_trial(120, seed=11)
    model = DRLearner(stage1=ZeroRegressor(), seed=0).fit(ds)
    want = (ds.a - 0.5) / 0.25 * ds.y
    assert np.allclose(model.pseudo_, want, atol=1e-12)


def test_dr_learner_missing_arm_raises():
    ds, _ = linear_trial(60, seed=12)
    forced = Dataset(ds.x, ds.s, np.zeros(60, dtype=int), ds.y, ds.e)
    with pytest.raises(FitError, match="arm 1"):
        DRLearner(stage1=LinearRegressor()).fit(forced)


# -- QRLearner ----------------------------------------------------------------

def test_qr_equals_dr_on_trial_only_data():
    # pi forced to 1 and e = 0.5 make the stage-1 weights exactly 1, so the
    # two learners run identical computations, bit for bit
    ds, _ = linear_trial(260, seed=13)
    gbt = GradientBoostedTrees(n_rounds=20, min_leaf=10)
    qr = QRLearner(stage1=gbt, classifier=ConstantClassifier(p=1.0),
                   n_folds=2, seed=21).fit(ds)
    dr = DRLearner(stage1=gbt, n_folds=2, seed=21).fit(ds)
    grid = stream(1, "grid").normal(size=(30, 3))
    assert np.array_equal(qr.predict(grid), dr.predict(grid))


def test_qr_downweights_mismatched_external_rows():
    # external rows live away from the trial and follow a corrupted law; a
    # real classifier shrinks their stage-1 weight toward the clip floor,
    # keeping the nuisances trial-grounded. Forcing pi = 1 cannot bias the
    # final regression (pseudo-outcomes stay conditionally unbiased for any
    # fixed nuisances) but it inflates its error through bad nuisances,
    # which shows up as a clearly larger deviation from the true effect.
    ds, tau = linear_trial(300, seed=14)
    fused = with_external(ds, 300, seed=15, shift_treated=20.0, x_shift=3.0)
    grid = stream(2, "grid").normal(size=(50, 3))
    tau_grid = 1.0 + grid @ TAU_COEF
    guarded = QRLearner(stage1=LinearRegressor(), seed=3).fit(fused)
    poisoned = QRLearner(stage1=LinearRegressor(),
                         classifier=ConstantClassifier(p=1.0), seed=3).fit(fused)
    err_guarded = np.max(np.abs(guarded.predict(grid) - tau_grid))
    err_poisoned = np.max(np.abs(poisoned.predict(grid) - tau_grid))
    assert err_guarded < 0.5
    assert err_poisoned > 2.5 * err_guarded


def test_qr_uses_aligned_external_rows():
    # same law both sources: QR stays consistent with externals present
    ds, _ = linear_trial(200, seed=16)
    fused = with_external(ds, 400, seed=17)
    grid = stream(3, "grid").normal(size=(50, 3))
    tau_grid = 1.0 + grid @ TAU_COEF
    model = QRLearner(stage1=LinearRegressor(), seed=4).fit(fused)
    assert np.max(np.abs(model.predict(grid) - tau_grid)) < 1e-4


def test_qr_single_source_fallback_warns():
    ds, _ = linear_trial(120, seed=18)
    with pytest.warns(RuntimeWarning, match="single"):
        QRLearner(stage1=LinearRegressor(), seed=5).fit(ds)


# -- ExternalBlendLearner -----------------------------------------------------

def test_external_blend_exact_under_alignment():
    # with mu_a exact, the blended nuisance m = e*mu0 + (1-e)*mu1 makes the
    # pseudo-outcome equal tau identically in both arms
    ds, _ = linear_trial(200, seed=19)
    fused = with_external(ds, 240, seed=20)
    grid = stream(4, "grid").normal(size=(50, 3))
    tau_grid = 1.0 + grid @ TAU_COEF
    model = ExternalBlendLearner(stage1=LinearRegressor(), seed=6).fit(fused)
    assert np.max(np.abs(model.predict(grid) - tau_grid)) < 1e-4


def test_external_blend_requires_external_rows():
    ds, _ = linear_trial(50, seed=21)
    with pytest.raises(FitError, match="external"):
        ExternalBlendLearner().fit(ds)


# -- BiasCorrectionLearner ----------------------------------------------------

def test_bias_correction_recovers_shifted_trial_effect():
    # external law has effect tau_ext = tau_trial - drift(x); trial rows come
    # in (a=0, a=1) pairs at identical covariates, so the plug-in-free trial
    # pseudo-outcomes average exactly to tau_trial at each x and the linear
    # bias step recovers the drift without sampling error
    rng = stream(22, "bias")
    m = 120
    xt = rng.normal(size=(m, 3))
    x_trial = np.repeat(xt, 2, axis=0)
    a_trial = np.tile([0, 1], m)
    tau_trial = 1.0 + x_trial @ TAU_COEF
    y_trial = x_trial @ B_COEF + a_trial * tau_trial
    drift = 0.5 - 0.7 * x_trial[:, 0]

    n0 = 300
    x_ext = rng.normal(size=(n0, 3))
    a_ext = (rng.random(n0) < 0.4).astype(int)
    tau_ext_fn = lambda x: (1.0 + x @ TAU_COEF) - (0.5 - 0.7 * x[:, 0])
    y_ext = x_ext @ B_COEF + a_ext * tau_ext_fn(x_ext)

    fused = Dataset(
        np.vstack([x_trial, x_ext]),
        np.concatenate([np.ones(2 * m, dtype=int), np.zeros(n0, dtype=int)]),
        np.concatenate([a_trial, a_ext]),
        np.concatenate([y_trial, y_ext]),
        np.full(2 * m + n0, 0.5),
    )
    model = BiasCorrectionLearner(stage1=LinearRegressor(), seed=7).fit(fused)
    grid = rng.normal(size=(40, 3))
    want = 1.0 + grid @ TAU_COEF
    assert np.max(np.abs(model.predict(grid) - want)) < 1e-4


def test_bias_correction_requires_external_rows_and_arms():
    ds, _ = linear_trial(50, seed=23)
    with pytest.raises(FitError, match="external"):
        BiasCorrectionLearner().fit(ds)
    fused = with_external(ds, 60, seed=24)
    single_arm_ext = Dataset(
        fused.x, fused.s, np.where(fused.s == 0, 1, fused.a), fused.y, fused.e
    )
    with pytest.raises(FitError, match="arm 0"):
        BiasCorrectionLearner(stage1=LinearRegressor()).fit(single_arm_ext)


# -- lambda selection and CombinedLearner -------------------------------------

def test_lambda_closed_form_matches_dense_grid():
    rng = stream(25, "lambda")
    for _ in range(50):
        n = int(rng.integers(20, 200))
        psi = rng.normal(size=n) * rng.uniform(0.5, 3)
        u = rng.normal(size=n)
        degenerate = rng.random() < 0.1
        v = u.copy() if degenerate else rng.normal(size=n)
        closed = lambda_from_predictions(psi, u, v)
        assert closed.a_q >= 0.0
        if degenerate:
            # risk is flat in lam; the tie-break pins the closed form at 0
            # while a grid argmin lands on float noise, so only the closed
            # form has a defined answer here
            assert closed.lam == 0.0
        else:
            grid = lambda_from_predictions(psi, u, v, grid=1001)
            assert abs(closed.lam - grid.lam) <= 1e-3
        # quadratic identity at probe weights
        for lam in (0.0, 0.25, 0.5, 0.75, 1.0):
            quad = (closed.a_q * lam**2 + closed.b_q * lam + closed.c_q) / n
            assert abs(quad - closed.cv_risk(lam)) < 1e-10


def test_lambda_tie_break_when_predictions_coincide():
    psi = np.array([1.0, -1.0, 0.5])
    u = np.array([0.2, 0.1, 0.0])
    fit = lambda_from_predictions(psi, u, u.copy())
    assert fit.a_q == 0.0
    assert fit.lam == 0.0


def test_lambda_minimizes_risk_on_unit_interval():
    rng = stream(26, "lambda")
    for _ in range(20):
        psi, u, v = rng.normal(size=(3, 50))
        fit = lambda_from_predictions(psi, u, v)
        assert 0.0 <= fit.lam <= 1.0
        grid = np.linspace(0, 1, 1001)
        best = min(fit.cv_risk(g) for g in grid)
        assert fit.cv_risk(fit.lam) <= best + 1e-12


def test_select_lambda_cv_runs_and_stores_vectors():
    ds, _ = linear_trial(90, seed=27)
    fused = with_external(ds, 60, seed=28)
    fit = select_lambda_cv(
        fused,
        qr=QRLearner(stage1=LinearRegressor()),
        dr=DRLearner(stage1=LinearRegressor()),
        k=3,
        seed=11,
    )
    assert fit.k == 3
    assert len(fit.psi) == len(fit.u) == len(fit.v) == 90
    assert 0.0 <= fit.lam <= 1.0
    # deterministic
    again = select_lambda_cv(
        fused,
        qr=QRLearner(stage1=LinearRegressor()),
        dr=DRLearner(stage1=LinearRegressor()),
        k=3,
        seed=11,
    )
    assert again.lam == fit.lam


def test_combined_collapses_to_dr_when_components_agree():
    # trial-only data with forced pi = 1: QR and DR predictions coincide,
    # A_q = 0, lambda = 0, and the combination is exactly the DR learner
    ds, _ = linear_trial(200, seed=29)
    gbt = GradientBoostedTrees(n_rounds=15, min_leaf=10)
    combined = CombinedLearner(
        qr=QRLearner(stage1=gbt, classifier=ConstantClassifier(p=1.0)),
        dr=DRLearner(stage1=gbt),
        seed=13,
    ).fit(ds)
    assert combined.lambda_fit_.a_q == 0.0
    assert combined.lambda_ == 0.0
    grid = stream(5, "grid").normal(size=(25, 3))
    assert np.array_equal(combined.predict(grid), combined.dr_.predict(grid))


def test_combined_endpoints_reproduce_components():
    ds, _ = linear_trial(120, seed=30)
    fused = with_external(ds, 80, seed=31)
    model = CombinedLearner(
        qr=QRLearner(stage1=LinearRegressor()),
        dr=DRLearner(stage1=LinearRegressor()),
        seed=14,
    ).fit(fused)
    grid = stream(6, "grid").normal(size=(25, 3))
    object.__setattr__(model.lambda_fit_, "lam", 1.0)
    model.lambda_ = 1.0
    assert np.array_equal(model.predict(grid), model.qr_.predict(grid))
    model.lambda_ = 0.0
    assert np.array_equal(model.predict(grid), model.dr_.predict(grid))


# -- registry and plumbing ----------------------------------------------------

def test_make_learner_builds_every_name():
    draw = generate(DGPConfig("aligned", n1=80, n0=60, seed=32))
    grid = draw.data.x[:10]
    for name in LEARNER_NAMES:
        model = make_learner(name, stage1="linear", seed=15)
        model.fit(draw.data)
        preds = model.predict(grid)
        assert preds.shape == (10,)
        assert np.all(np.isfinite(preds))


def test_make_learner_stage1_override_and_errors():
    model = make_learner("dr", stage1="gbrt", stage1_params={"n_rounds": 7})
    assert model.stage1.n_rounds == 7
    with pytest.raises(ValueError, match="unknown learner"):
        make_learner("nope")
    with pytest.raises(ValueError, match="stage1"):
        make_learner("dr", stage1="mystery")


def test_learners_deterministic_under_seed():
    draw = generate(DGPConfig("aligned", n1=100, n0=80, seed=33))
    grid = draw.data.x[:15]
    a = make_learner("qr", stage1="linear", seed=9).fit(draw.data).predict(grid)
    b = make_learner("qr", stage1="linear", seed=9).fit(draw.data).predict(grid)
    assert np.array_equal(a, b)


def test_predict_guards():
    ds, _ = linear_trial(60, seed=34)
    with pytest.raises(NotFittedError):
        DRLearner().predict(np.zeros((2, 3)))
    model = DRLearner(stage1=LinearRegressor()).fit(ds)
    with pytest.raises(ValueError, match="columns"):
        model.predict(np.zeros((2, 5)))
    with pytest.raises(TypeError, match="Dataset"):
        DRLearner().fit("not a dataset")
