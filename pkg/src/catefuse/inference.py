"""Hypothesis tests for effect heterogeneity and outcome transportability.

Three families:

* :func:`interaction_test_ols` -- classical covariate-adjustment test: OLS
  of the outcome on (1, a, z, a*z) with homoskedastic standard errors,
  testing the interaction coefficient. Trial rows only by default;
  ``pooled=True`` adds external rows (fast but biased when sources differ).
* :func:`interaction_test_pseudo` -- two-fold pseudo-outcome test: linear
  nuisances are fit on one half, pseudo-outcomes built on the other half's
  trial rows and regressed on (1, z); fold estimates are averaged and the
  combined variance treats folds as uncorrelated.
* :func:`transportability_test` -- partial correlation of outcome and
  source indicator given (covariates, treatment), with a Student-t
  reference. Rejection is evidence the external outcome law differs from
  the trial's and pooling-based learners will import bias.

Every test returns a :class:`TestResult` with the same conventions:
``ci = estimate +- 1.96 * se`` and ``rejected`` means ``p_value < 0.05``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.stats

from .data import Dataset, make_folds
from .learners import FitError, _as_dataset, effective_propensity
from .pseudo import pseudo_outcomes
from .regressors import LinearRegressor, RidgeLogisticCV
from .rng import derive_seed

__all__ = [
    "TestResult",
    "interaction_test_ols",
    "interaction_test_pseudo",
    "transportability_test",
    "PSEUDO_KINDS",
]

PSEUDO_KINDS = ("dr", "qr", "external_blend")


@dataclass(frozen=True)
class TestResult:
    """Outcome of one hypothesis test.

    ``ci_lo``/``ci_hi`` bracket the estimate at +-1.96 standard errors and
    ``rejected`` is ``p_value < 0.05``, so for the normal-reference tests
    the two notions of rejection agree away from the 1.96 knife edge.
    """

    estimate: float
    se: float
    ci_lo: float
    ci_hi: float
    p_value: float
    rejected: bool
    method: str
    fold_estimates: tuple = ()


def _normal_result(estimate: float, se: float, method: str,
                   fold_estimates: tuple = ()) -> TestResult:
    if se > 0:
        z = estimate / se
        p = math.erfc(abs(z) / math.sqrt(2.0))
    else:
        p = 1.0 if estimate == 0 else 0.0
    return TestResult(
        estimate=float(estimate),
        se=float(se),
        ci_lo=float(estimate - 1.96 * se),
        ci_hi=float(estimate + 1.96 * se),
        p_value=float(p),
        rejected=bool(p < 0.05),
        method=method,
        fold_estimates=fold_estimates,
    )


def _ols(design: np.ndarray, y: np.ndarray):
    """OLS coefficients and homoskedastic standard errors."""
    n, p = design.shape
    if n <= p:
        raise FitError(f"need more than {p} rows for the regression, got {n}")
    if np.linalg.matrix_rank(design) < p:
        raise FitError("design matrix is rank deficient")
    gram = design.T @ design
    beta = np.linalg.solve(gram, design.T @ y)
    resid = y - design @ beta
    sigma2 = float(resid @ resid) / (n - p)
    se = np.sqrt(np.diag(sigma2 * np.linalg.inv(gram)))
    return beta, se


def _check_z_index(data: Dataset, z_index: int) -> int:
    if not 0 <= z_index < data.d:
        raise ValueError(f"z_index must lie in [0, {data.d}), got {z_index}")
    return int(z_index)


def interaction_test_ols(data, z_index: int = 0, pooled: bool = False) -> TestResult:
    """Test the a * z interaction in an outcome regression.

    Fits y ~ (1, a, z, a*z) by OLS on trial rows (all rows when
    ``pooled=True``) and refers the interaction coefficient's z-statistic
    to the normal distribution.
    """
    data = _as_dataset(data)
    z_index = _check_z_index(data, z_index)
    rows = data if pooled else data.trial()
    z = rows.x[:, z_index]
    design = np.column_stack([np.ones(rows.n), rows.a, z, rows.a * z])
    beta, se = _ols(design, rows.y)
    method = "pooled_covariate_adjustment" if pooled else "covariate_adjustment"
    return _normal_result(beta[3], se[3], method)


def _linear_nuisances(kind: str, train: Dataset, seed: int):
    """Fit linear nuisances on the training half; return an evaluator.

    The evaluator maps (x, e) at trial evaluation rows to the pair of
    per-arm nuisance values feeding the pseudo-outcome.
    """
    if kind == "dr":
        if not np.any(train.s == 1):
            raise FitError("no trial rows in the training half")
        trial = train.trial()
        fits = {}
        for arm in (0, 1):
            mask = trial.a == arm
            if not np.any(mask):
                raise FitError(f"treatment arm {arm} is empty in the training half")
            fits[arm] = LinearRegressor().fit(trial.x[mask], trial.y[mask])
        return lambda x, e: (fits[1].predict(x), fits[0].predict(x))
    if kind == "qr":
        e_all = effective_propensity(train)
        fits = {}
        for arm in (0, 1):
            mask = train.a == arm
            if not np.any(mask):
                raise FitError(f"treatment arm {arm} is empty in the training half")
            labels = train.s[mask]
            if labels.min() == labels.max():
                warnings.warn(
                    f"arm {arm} in the training half has rows from a single "
                    f"source; using a constant trial weight of 0.99",
                    RuntimeWarning,
                )
                pi = np.full(int(mask.sum()), 0.99)
            else:
                clf = RidgeLogisticCV(seed=derive_seed(seed, "pi", arm))
                pi = clf.fit(train.x[mask], labels).predict_proba(train.x[mask])[:, 1]
            ratio = (1.0 - e_all[mask]) / e_all[mask]
            weights = pi * ratio ** (2 * arm - 1)
            fits[arm] = LinearRegressor().fit(train.x[mask], train.y[mask],
                                              sample_weight=weights)
        return lambda x, e: (fits[1].predict(x), fits[0].predict(x))
    if kind == "external_blend":
        if not np.any(train.s == 0):
            raise FitError("external_blend needs external rows")
        ext = train.external()
        fits = {}
        for arm in (0, 1):
            mask = ext.a == arm
            if not np.any(mask):
                raise FitError(f"external arm {arm} is empty in the training half")
            fits[arm] = LinearRegressor().fit(ext.x[mask], ext.y[mask])

        def blend(x, e):
            m = e * fits[0].predict(x) + (1.0 - e) * fits[1].predict(x)
            return m, m

        return blend
    raise ValueError(f"kind must be one of {PSEUDO_KINDS}, got {kind!r}")


def interaction_test_pseudo(data, kind: str = "dr", z_index: int = 0,
                            seed: int = 0) -> TestResult:
    """Two-fold pseudo-outcome test of effect heterogeneity along z.

    Rows are split in half (stratified by source). For each direction,
    linear nuisances of the given ``kind`` are fit on one half and
    pseudo-outcomes on the other half's trial rows are regressed on (1, z).
    The two slope estimates are averaged; their variance adds as if the
    folds were independent, i.e. se = sqrt(se_1^2 + se_2^2) / 2.
    """
    data = _as_dataset(data)
    z_index = _check_z_index(data, z_index)
    if kind not in PSEUDO_KINDS:
        raise ValueError(f"kind must be one of {PSEUDO_KINDS}, got {kind!r}")
    plan = make_folds(data, 2, derive_seed(seed, "folds"))
    estimates, variances = [], []
    for fit_fold in (0, 1):
        train = data.subset(plan.heldout(fit_fold))
        nuisance = _linear_nuisances(kind, train, derive_seed(seed, "nu", fit_fold))
        eval_mask = plan.heldout(1 - fit_fold) & (data.s == 1)
        x = data.x[eval_mask]
        e = data.e[eval_mask]
        h1x, h0x = nuisance(x, e)
        psi = pseudo_outcomes(data.a[eval_mask], data.y[eval_mask], e, h1x, h0x)
        design = np.column_stack([np.ones(len(x)), x[:, z_index]])
        beta, se = _ols(design, psi)
        estimates.append(float(beta[1]))
        variances.append(float(se[1]) ** 2)
    combined = (estimates[0] + estimates[1]) / 2.0
    combined_se = math.sqrt(variances[0] + variances[1]) / 2.0
    return _normal_result(combined, combined_se, f"{kind}_pseudo",
                          fold_estimates=tuple(estimates))


def transportability_test(data) -> TestResult:
    """Partial correlation test of outcome transportability.

    Residualizes both the outcome and the source indicator on
    (1, covariates, treatment), correlates the residuals, and refers
    t = r * sqrt(dof / (1 - r^2)) with dof = n - d - 3 to Student's t.
    A tiny residual variance on either side yields r = 0 (no evidence).

    Residualization is a least-squares projection, so collinear covariate
    encodings (e.g. full one-hot blocks alongside the intercept) are fine:
    the residuals are unique even when the coefficients are not, and the
    stated dof merely becomes conservative.
    """
    data = _as_dataset(data)
    n, d = data.n, data.d
    dof = n - d - 3
    if dof < 1:
        raise FitError(f"need at least d + 4 = {d + 4} rows, got {n}")
    design = np.column_stack([np.ones(n), data.x, data.a])
    beta_y, *_ = np.linalg.lstsq(design, data.y, rcond=None)
    res_y = data.y - design @ beta_y
    s = data.s.astype(float)
    beta_s, *_ = np.linalg.lstsq(design, s, rcond=None)
    res_s = s - design @ beta_s
    vy = float(res_y @ res_y)
    vs = float(res_s @ res_s)
    scale = max(1.0, float(data.y @ data.y), float(s @ s))
    if vy <= 1e-24 * scale or vs <= 1e-24 * scale:
        r = 0.0
    else:
        r = float(np.clip((res_y @ res_s) / math.sqrt(vy * vs), -1.0, 1.0))
    if abs(r) < 1.0:
        t = r * math.sqrt(dof / (1.0 - r * r))
    else:
        t = math.inf if r > 0 else -math.inf
    p = 2.0 * float(scipy.stats.t.sf(abs(t), dof))
    se = math.sqrt((1.0 - r * r) / dof)
    return TestResult(
        estimate=r,
        se=se,
        ci_lo=r - 1.96 * se,
        ci_hi=r + 1.96 * se,
        p_value=p,
        rejected=bool(p < 0.05),
        method="transportability",
    )
