"""Tests for the heterogeneity and transportability tests.

OLS results are checked against normal equations assembled with explicit
loops, the two-fold pseudo test against a from-scratch reimplementation
sharing only the seed derivation, and the null calibrations against
seeded Monte Carlo bands (99.9% binomial bands around 0.05, so a sound
implementation fails each band with probability about 1e-3).
"""

import math

import numpy as np
import pytest

from catefuse.data import Dataset, make_folds
from catefuse.inference import (
    PSEUDO_KINDS,
    TestResult,
    interaction_test_ols,
    interaction_test_pseudo,
    transportability_test,
)
from catefuse.learners import FitError
from catefuse.pseudo import pseudo_outcomes
from catefuse.regressors import LinearRegressor
from catefuse.rng import derive_seed, standard_normal, stream
from catefuse.simgen import DGPConfig, generate


def make_trial(n, seed, tau_coef=2.0, noise_sd=0.0, d=3):
    """Trial-only dataset with y = x @ b + a * tau_coef * x0 + noise."""
    rng = stream(seed, "trial")
    x = standard_normal(rng, (n, d))
    a = (rng.random(n) < 0.5).astype(int)
    b = np.arange(1, d + 1) / d
    y = x @ b + a * tau_coef * x[:, 0]
    if noise_sd > 0:
        y = y + noise_sd * standard_normal(rng, n)
    return Dataset(x=x, s=np.ones(n, dtype=int), a=a, y=y, e=np.full(n, 0.5))


def add_external(trial, n0, seed, tau_coef=2.0):
    """Append external rows following the same linear outcome law."""
    rng = stream(seed, "ext")
    d = trial.d
    x = standard_normal(rng, (n0, d)) + 0.3
    a = (rng.random(n0) < 0.5).astype(int)
    b = np.arange(1, d + 1) / d
    y = x @ b + a * tau_coef * x[:, 0]
    return Dataset(
        x=np.vstack([trial.x, x]),
        s=np.concatenate([trial.s, np.zeros(n0, dtype=int)]),
        a=np.concatenate([trial.a, a]),
        y=np.concatenate([trial.y, y]),
        e=np.concatenate([trial.e, np.full(n0, 0.5)]),
    )


def loop_ols(design, y):
    """Normal equations and homoskedastic errors, assembled row by row."""
    n, p = design.shape
    gram = np.zeros((p, p))
    moment = np.zeros(p)
    for i in range(n):
        for j in range(p):
            moment[j] += design[i, j] * y[i]
            for k in range(p):
                gram[j, k] += design[i, j] * design[i, k]
    beta = np.linalg.solve(gram, moment)
    rss = sum((y[i] - design[i] @ beta) ** 2 for i in range(n))
    cov = rss / (n - p) * np.linalg.inv(gram)
    return beta, np.sqrt(np.diag(cov))


# ---------------------------------------------------------------------------
# TestResult conventions
# ---------------------------------------------------------------------------


def collect_results():
    data = add_external(make_trial(120, 3, noise_sd=0.8), 80, 4)
    out = [
        interaction_test_ols(data),
        interaction_test_ols(data, z_index=1, pooled=True),
        transportability_test(data),
    ]
    for kind in PSEUDO_KINDS:
        out.append(interaction_test_pseudo(data, kind=kind, seed=7))
    return out


def test_result_conventions():
    for res in collect_results():
        assert isinstance(res, TestResult)
        assert res.ci_lo == pytest.approx(res.estimate - 1.96 * res.se)
        assert res.ci_hi == pytest.approx(res.estimate + 1.96 * res.se)
        assert 0.0 <= res.p_value <= 1.0
        assert res.rejected == (res.p_value < 0.05)
        assert np.isfinite(res.estimate) and np.isfinite(res.se)


def test_method_tags_distinct():
    tags = [r.method for r in collect_results()]
    assert len(set(tags)) == len(tags)


# ---------------------------------------------------------------------------
# interaction_test_ols
# ---------------------------------------------------------------------------


def test_ols_exact_interaction_no_noise():
    # y = 2 * a * x0 exactly, so the fit is exact and se collapses to zero.
    n, d = 60, 3
    rng = stream(11, "exact")
    x = standard_normal(rng, (n, d))
    a = np.array([0, 1] * (n // 2))
    data = Dataset(x=x, s=np.ones(n, dtype=int), a=a, y=2.0 * a * x[:, 0],
                   e=np.full(n, 0.5))
    res = interaction_test_ols(data)
    assert res.estimate == pytest.approx(2.0, abs=1e-8)
    assert res.se == pytest.approx(0.0, abs=1e-8)
    assert res.rejected and res.p_value == 0.0


def test_ols_matches_loop_normal_equations():
    data = make_trial(90, 21, tau_coef=0.7, noise_sd=1.0)
    res = interaction_test_ols(data, z_index=2)
    z = data.x[:, 2]
    design = np.column_stack([np.ones(data.n), data.a, z, data.a * z])
    beta, se = loop_ols(design, data.y)
    assert res.estimate == pytest.approx(beta[3], abs=1e-10)
    assert res.se == pytest.approx(se[3], abs=1e-10)


def test_ols_pooled_uses_all_rows():
    data = add_external(make_trial(100, 5, noise_sd=0.5), 100, 6, tau_coef=5.0)
    trial_only = interaction_test_ols(data)
    pooled = interaction_test_ols(data, pooled=True)
    # Same outcome law in both sources, so pooling halves the variance.
    assert pooled.se < trial_only.se
    assert pooled.method == "pooled_covariate_adjustment"


def test_ols_null_calibration():
    # y independent of (a, z): rejection rate must sit near the nominal 5%.
    rejections = 0
    reps = 300
    for rep in range(reps):
        rng = stream(101, "null", rep)
        n = 80
        x = standard_normal(rng, (n, 2))
        a = (rng.random(n) < 0.5).astype(int)
        y = standard_normal(rng, n)
        data = Dataset(x=x, s=np.ones(n, dtype=int), a=a, y=y,
                       e=np.full(n, 0.5))
        rejections += interaction_test_ols(data).rejected
    assert 0.008 <= rejections / reps <= 0.095


def test_ols_pooled_inflates_under_external_drift():
    # Effect absent on trial rows, but the external arm drifts; pooling
    # imports that drift and rejects far above the nominal rate.
    reps = 120
    pooled_rej = 0
    trial_rej = 0
    for rep in range(reps):
        cfg = DGPConfig(scenario="power", n1=300, n0=600, beta=0.0,
                        seed=derive_seed(202, "rep", rep))
        data = generate(cfg).data
        pooled_rej += interaction_test_ols(data, pooled=True).rejected
        trial_rej += interaction_test_ols(data).rejected
    assert pooled_rej / reps > 0.3
    assert trial_rej / reps < 0.15


def test_ols_constant_z_is_rank_deficient():
    data = make_trial(50, 31)
    x = np.array(data.x)
    x[:, 1] = 2.5
    bad = Dataset(x=x, s=data.s, a=data.a, y=data.y, e=data.e)
    with pytest.raises(FitError, match="rank deficient"):
        interaction_test_ols(bad, z_index=1)


def test_ols_z_index_out_of_range():
    data = make_trial(50, 32)
    with pytest.raises(ValueError, match="z_index"):
        interaction_test_ols(data, z_index=3)


# ---------------------------------------------------------------------------
# interaction_test_pseudo
# ---------------------------------------------------------------------------


def test_pseudo_dr_matches_reimplementation():
    """Full pipeline oracle: rebuild the two-fold dr test from scratch."""
    data = add_external(make_trial(140, 41, noise_sd=0.7), 90, 42)
    seed = 97
    res = interaction_test_pseudo(data, kind="dr", z_index=1, seed=seed)

    plan = make_folds(data, 2, derive_seed(seed, "folds"))
    estimates, ses = [], []
    for fit_fold in (0, 1):
        train = data.subset(plan.heldout(fit_fold)).trial()
        fits = {}
        for arm in (0, 1):
            mask = train.a == arm
            fits[arm] = LinearRegressor().fit(train.x[mask], train.y[mask])
        hold = plan.heldout(1 - fit_fold) & (data.s == 1)
        psi = pseudo_outcomes(data.a[hold], data.y[hold], data.e[hold],
                              fits[1].predict(data.x[hold]),
                              fits[0].predict(data.x[hold]))
        design = np.column_stack([np.ones(hold.sum()), data.x[hold, 1]])
        beta, se = loop_ols(design, psi)
        estimates.append(beta[1])
        ses.append(se[1])
    want = (estimates[0] + estimates[1]) / 2.0
    want_se = math.sqrt(ses[0] ** 2 + ses[1] ** 2) / 2.0
    assert res.estimate == pytest.approx(want, abs=1e-10)
    assert res.se == pytest.approx(want_se, abs=1e-10)
    assert res.fold_estimates == pytest.approx(tuple(estimates), abs=1e-10)


def test_pseudo_estimate_is_mean_of_fold_estimates():
    data = add_external(make_trial(120, 51, noise_sd=0.6), 80, 52)
    for kind in PSEUDO_KINDS:
        res = interaction_test_pseudo(data, kind=kind, seed=5)
        assert len(res.fold_estimates) == 2
        assert res.estimate == pytest.approx(sum(res.fold_estimates) / 2.0,
                                             abs=1e-12)


@pytest.mark.parametrize("kind", ["dr", "external_blend"])
def test_pseudo_noiseless_linear_effect_recovered_exactly(kind):
    # Linear baseline, tau(x) = 3 * x0, zero noise: the linear nuisances
    # are exact on each half, so psi equals tau and the slope is exactly 3.
    data = add_external(make_trial(160, 61, tau_coef=3.0, noise_sd=0.0),
                        120, 62, tau_coef=3.0)
    res = interaction_test_pseudo(data, kind=kind, z_index=0, seed=9)
    assert res.estimate == pytest.approx(3.0, abs=1e-7)
    assert res.rejected


def test_pseudo_qr_runs_on_two_source_data():
    data = add_external(make_trial(150, 71, noise_sd=0.8), 150, 72)
    res = interaction_test_pseudo(data, kind="qr", seed=3)
    assert np.isfinite(res.estimate) and res.se > 0


def test_pseudo_qr_warns_on_single_source_arm():
    data = make_trial(120, 73, noise_sd=0.5)
    with pytest.warns(RuntimeWarning, match="single"):
        res = interaction_test_pseudo(data, kind="qr", seed=3)
    assert np.isfinite(res.estimate)


def test_pseudo_dr_null_calibration():
    # Power scenario with the effect absent; dr ignores the drifted
    # external rows entirely, so the nominal level must hold.
    rejections = 0
    reps = 250
    for rep in range(reps):
        cfg = DGPConfig(scenario="power", n1=300, n0=200, beta=0.0,
                        seed=derive_seed(303, "rep", rep))
        data = generate(cfg).data
        res = interaction_test_pseudo(data, kind="dr", z_index=0,
                                      seed=derive_seed(303, "test", rep))
        rejections += res.rejected
    assert 0.004 <= rejections / reps <= 0.10


def test_pseudo_unknown_kind():
    data = make_trial(60, 81)
    with pytest.raises(ValueError, match="kind"):
        interaction_test_pseudo(data, kind="splendid")


def test_pseudo_blend_needs_external_rows():
    data = make_trial(60, 82)
    with pytest.raises(FitError, match="external"):
        interaction_test_pseudo(data, kind="external_blend")


# ---------------------------------------------------------------------------
# transportability_test
# ---------------------------------------------------------------------------


def coin_flip_sources(n, seed, d=3):
    """Source label assigned by a fair coin independent of everything."""
    rng = stream(seed, "coin")
    x = standard_normal(rng, (n, d))
    a = (rng.random(n) < 0.5).astype(int)
    y = x[:, 0] ** 2 + a * np.sin(x[:, 1]) + standard_normal(rng, n)
    s = (rng.random(n) < 0.5).astype(int)
    return Dataset(x=x, s=s, a=a, y=y, e=np.full(n, 0.5))


def test_transport_null_calibration():
    rejections = 0
    reps = 300
    for rep in range(reps):
        data = coin_flip_sources(200, derive_seed(404, "rep", rep))
        rejections += transportability_test(data).rejected
    assert 0.008 <= rejections / reps <= 0.095


def test_transport_detects_hidden_coordinate_shift():
    # Violated scenario: hidden covariates shift external rows, so the
    # outcome law given the observed (x, a) depends on the source. This
    # mean-level drift is squarely inside the test's power.
    hits = 0
    reps = 15
    for rep in range(reps):
        cfg = DGPConfig(scenario="violated", n1=2000, n0=2000,
                        seed=derive_seed(505, "rep", rep))
        hits += transportability_test(generate(cfg).data).rejected
    assert hits >= 11


def test_transport_detects_effect_slope_drift_eventually():
    # Power scenario: sources differ only through an effect-slope drift
    # orthogonal to the linear design, so the residual correlation is
    # faint and detection needs a much larger sample.
    hits = 0
    reps = 10
    for rep in range(reps):
        cfg = DGPConfig(scenario="power", n1=8000, n0=8000, beta=0.0,
                        seed=derive_seed(607, "rep", rep))
        hits += transportability_test(generate(cfg).data).rejected
    assert hits >= 7


def test_transport_constant_outcome_gives_zero():
    data = coin_flip_sources(150, 90)
    flat = Dataset(x=data.x, s=data.s, a=data.a,
                   y=np.full(data.n, 4.2), e=data.e)
    res = transportability_test(flat)
    assert res.estimate == 0.0
    assert res.p_value == 1.0
    assert not res.rejected


def test_transport_affine_invariance():
    data = coin_flip_sources(180, 91)
    base = transportability_test(data)
    x = np.array(data.x)
    x[:, 0] = -2.0 * x[:, 0] + 5.0
    scaled = Dataset(x=x, s=data.s, a=data.a, y=3.7 * data.y - 11.0, e=data.e)
    res = transportability_test(scaled)
    assert abs(res.estimate) == pytest.approx(abs(base.estimate), abs=1e-12)
    assert res.p_value == pytest.approx(base.p_value, abs=1e-12)


def test_transport_needs_enough_rows():
    data = coin_flip_sources(6, 92, d=3)
    with pytest.raises(FitError, match="rows"):
        transportability_test(data)


def test_transport_tolerates_collinear_columns():
    # Duplicated covariate columns leave the projection span unchanged, so
    # the residual correlation is identical; only the (conservative) dof
    # shifts, nudging the p-value.
    data = coin_flip_sources(100, 93)
    base = transportability_test(data)
    x = np.column_stack([data.x, data.x[:, 0]])
    dup = Dataset(x=x, s=data.s, a=data.a, y=data.y, e=data.e)
    res = transportability_test(dup)
    assert res.estimate == pytest.approx(base.estimate, abs=1e-10)
    assert res.p_value == pytest.approx(base.p_value, abs=0.01)
