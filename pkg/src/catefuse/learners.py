"""Treatment effect learners for fused trial + external samples.

All learners share one calling convention: ``fit(dataset)`` consumes a
:class:`~catefuse.data.Dataset` and ``predict(X)`` returns per-row effect
estimates. They differ in which rows inform the outcome nuisances:

* :class:`DifferenceInMeans` -- constant trial-arm mean difference.
* :class:`TLearner` -- per-arm outcome models, trial-only or pooled.
* :class:`DRLearner` -- trial-only pseudo-outcome regression with
  cross-fit arm nuisances. With a zero stage 1 it degrades to the pure
  inverse-probability-weighted learner.
* :class:`QRLearner` -- pseudo-outcome regression whose arm nuisances are
  fit on trial and external rows together, each row weighted by an
  estimated probability of being trial-like times an arm-specific
  propensity ratio. External rows that resemble trial rows sharpen the
  nuisances; rows that do not are shrunk away instead of biasing them.
* :class:`ExternalBlendLearner` -- pseudo-outcome regression plugging one
  shared nuisance into both arm slots, built from external arm models
  blended by the trial propensity.
* :class:`BiasCorrectionLearner` -- an external-data effect model plus a
  linear correction fit to trial pseudo-outcome residuals.
* :class:`CombinedLearner` -- convex combination of QR and DR predictions
  with the weight chosen by cross-validated pseudo-risk, which is exactly
  quadratic in the weight and therefore minimized in closed form.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, clone

from .data import DataError, Dataset, make_folds
from .pseudo import pseudo_outcomes
from .regressors import (
    GradientBoostedTrees,
    LinearRegressor,
    RidgeLogisticCV,
    ZeroRegressor,
)
from .rng import derive_seed
from .validation import as_matrix, check_fitted

__all__ = [
    "FitError",
    "effective_propensity",
    "DifferenceInMeans",
    "TLearner",
    "DRLearner",
    "QRLearner",
    "ExternalBlendLearner",
    "BiasCorrectionLearner",
    "CombinedLearner",
    "LambdaFit",
    "lambda_from_predictions",
    "select_lambda_cv",
    "LEARNER_NAMES",
    "make_learner",
]

_STAGE2_RIDGE = 1e-6


class FitError(RuntimeError):
    """A learner's structural requirements are not met by the data."""


def effective_propensity(data: Dataset) -> np.ndarray:
    """Per-row treatment probability usable on trial and external rows.

    Trial rows always use their stored value. External rows use stored
    values when all of them are valid probabilities; otherwise, when the
    trial propensity is a single constant, that constant is imputed.
    """
    e = np.array(data.e)
    ext = data.s == 0
    if not np.any(ext):
        return e
    valid = np.isfinite(e[ext]) & (e[ext] > 0.0) & (e[ext] < 1.0)
    if np.all(valid):
        return e
    trial_e = np.unique(e[data.s == 1])
    if len(trial_e) == 1:
        e[ext] = trial_e[0]
        return e
    raise DataError(
        "external rows have invalid e and the trial propensity is not constant"
    )


def _as_dataset(data) -> Dataset:
    if not isinstance(data, Dataset):
        raise TypeError(f"expected a Dataset, got {type(data).__name__}")
    return data


def _seeded_clone(estimator, seed: int):
    twin = clone(estimator)
    if "seed" in twin.get_params():
        twin.set_params(seed=seed)
    return twin


def _fit_arm(prototype, x, y, mask, arm: int, where: str, sample_weight=None):
    if not np.any(mask):
        raise FitError(f"treatment arm {arm} is empty in {where}")
    w = None if sample_weight is None else sample_weight[mask]
    return clone(prototype).fit(x[mask], y[mask], sample_weight=w)


def _mean_prediction(models, X) -> np.ndarray:
    return np.mean([m.predict(X) for m in models], axis=0)


class _CateLearner(BaseEstimator):
    """Shared predict plumbing: width check against the fitted dataset."""

    def predict(self, X) -> np.ndarray:
        check_fitted(self, "n_features_")
        X = as_matrix(X)
        if X.shape[1] != self.n_features_:
            raise ValueError(
                f"X has {X.shape[1]} columns, expected {self.n_features_}"
            )
        return self._predict(X)


class DifferenceInMeans(_CateLearner):
    """Constant effect estimate: trial treated mean minus control mean."""

    def fit(self, data):
        data = _as_dataset(data)
        trial = data.trial()
        for arm in (0, 1):
            if not np.any(trial.a == arm):
                raise FitError(f"treatment arm {arm} is empty in the trial")
        self.ate_ = float(
            trial.y[trial.a == 1].mean() - trial.y[trial.a == 0].mean()
        )
        self.n_features_ = data.d
        return self

    def _predict(self, X):
        return np.full(len(X), self.ate_)


class TLearner(_CateLearner):
    """Difference of per-arm outcome regressions.

    ``pooled=False`` fits each arm on trial rows only; ``pooled=True`` fits
    on trial and external rows together, which imports external bias along
    with external sample size.
    """

    def __init__(self, base=None, pooled: bool = False, seed: int = 0):
        self.base = base
        self.pooled = pooled
        self.seed = seed

    def fit(self, data):
        data = _as_dataset(data)
        rows = data if self.pooled else data.trial()
        base = self.base if self.base is not None else GradientBoostedTrees()
        where = "the pooled sample" if self.pooled else "the trial"
        self.model1_ = _fit_arm(base, rows.x, rows.y, rows.a == 1, 1, where)
        self.model0_ = _fit_arm(base, rows.x, rows.y, rows.a == 0, 0, where)
        self.n_features_ = data.d
        return self

    def _predict(self, X):
        return self.model1_.predict(X) - self.model0_.predict(X)


class DRLearner(_CateLearner):
    """Trial-only pseudo-outcome regression with cross-fit nuisances.

    Arm outcome models are fit on each training fold; pseudo-outcomes are
    formed on the held-out fold with the known trial propensity and
    regressed on covariates. Held-out stage-2 models are averaged.
    """

    def __init__(self, stage1=None, stage2=None, n_folds: int = 2, seed: int = 0):
        self.stage1 = stage1
        self.stage2 = stage2
        self.n_folds = n_folds
        self.seed = seed

    def fit(self, data):
        data = _as_dataset(data)
        trial = data.trial()
        stage1 = self.stage1 if self.stage1 is not None else GradientBoostedTrees()
        stage2 = (self.stage2 if self.stage2 is not None
                  else LinearRegressor(ridge=_STAGE2_RIDGE))
        plan = make_folds(trial, self.n_folds, derive_seed(self.seed, "folds"))
        psi = np.empty(trial.n)
        models = []
        for f in range(self.n_folds):
            train = plan.training(f)
            held = plan.heldout(f)
            g1 = _fit_arm(stage1, trial.x, trial.y, train & (trial.a == 1), 1,
                          f"training fold {f}")
            g0 = _fit_arm(stage1, trial.x, trial.y, train & (trial.a == 0), 0,
                          f"training fold {f}")
            psi[held] = pseudo_outcomes(
                trial.a[held], trial.y[held], trial.e[held],
                g1.predict(trial.x[held]), g0.predict(trial.x[held]),
            )
            models.append(clone(stage2).fit(trial.x[held], psi[held]))
        self.models_ = models
        self.pseudo_ = psi
        self.n_features_ = data.d
        return self

    def _predict(self, X):
        return _mean_prediction(self.models_, X)


class QRLearner(_CateLearner):
    """Pseudo-outcome regression with pooled, reweighted arm nuisances.

    Stage 1 fits each arm's outcome model on trial *and* external rows of
    that arm, each row weighted by

        pi_a(x) * ((1 - e) / e)^(2a - 1)

    where ``pi_a`` is a cross-fit estimate of how likely a row with these
    covariates is to be a trial row. Stage 2 regresses held-out trial
    pseudo-outcomes on covariates, exactly as in :class:`DRLearner`; only
    the nuisance training set differs.

    If an arm's training rows are all from one source, the classifier is
    still attempted (a constant classifier accepts this); if it refuses,
    the weight falls back to the constant 0.99 with a warning.
    """

    def __init__(self, stage1=None, stage2=None, classifier=None,
                 n_folds: int = 2, seed: int = 0):
        self.stage1 = stage1
        self.stage2 = stage2
        self.classifier = classifier
        self.n_folds = n_folds
        self.seed = seed

    def fit(self, data):
        data = _as_dataset(data)
        stage1 = self.stage1 if self.stage1 is not None else GradientBoostedTrees()
        stage2 = (self.stage2 if self.stage2 is not None
                  else LinearRegressor(ridge=_STAGE2_RIDGE))
        classifier = (self.classifier if self.classifier is not None
                      else RidgeLogisticCV())
        e_all = effective_propensity(data)
        plan = make_folds(data, self.n_folds, derive_seed(self.seed, "folds"))
        trial_mask = data.s == 1
        models = []
        for f in range(self.n_folds):
            train = plan.training(f)
            h = {}
            for arm in (0, 1):
                rows = train & (data.a == arm)
                if not np.any(rows):
                    raise FitError(f"treatment arm {arm} is empty in training fold {f}")
                pi = self._trial_likeness(data, rows, f, arm, classifier)
                ratio = (1.0 - e_all[rows]) / e_all[rows]
                weights = pi * ratio ** (2 * arm - 1)
                h[arm] = clone(stage1).fit(data.x[rows], data.y[rows],
                                           sample_weight=weights)
            held = plan.heldout(f) & trial_mask
            psi = pseudo_outcomes(
                data.a[held], data.y[held], data.e[held],
                h[1].predict(data.x[held]), h[0].predict(data.x[held]),
            )
            models.append(clone(stage2).fit(data.x[held], psi))
        self.models_ = models
        self.n_features_ = data.d
        return self

    def _trial_likeness(self, data, rows, fold, arm, classifier):
        labels = data.s[rows]
        x = data.x[rows]
        clf = _seeded_clone(classifier, derive_seed(self.seed, "pi", fold, arm))
        if labels.min() == labels.max():
            try:
                clf.fit(x, labels)
            except ValueError:
                warnings.warn(
                    f"arm {arm} in training fold {fold} has rows from a single "
                    f"source; using a constant trial weight of 0.99",
                    RuntimeWarning,
                )
                return np.full(len(x), 0.99)
        else:
            clf.fit(x, labels)
        return clf.predict_proba(x)[:, 1]

    def _predict(self, X):
        return _mean_prediction(self.models_, X)


class ExternalBlendLearner(_CateLearner):
    """Pseudo-outcome regression with one blended external nuisance.

    Cross-fit external arm models ``mu_a`` are combined into the single
    predictor ``m(x) = e * mu_0(x) + (1 - e) * mu_1(x)``, which fills both
    nuisance slots of the pseudo-outcome on held-out trial rows.
    """

    def __init__(self, stage1=None, stage2=None, n_folds: int = 2, seed: int = 0):
        self.stage1 = stage1
        self.stage2 = stage2
        self.n_folds = n_folds
        self.seed = seed

    def fit(self, data):
        data = _as_dataset(data)
        if data.n_external == 0:
            raise FitError("ExternalBlendLearner needs external rows")
        stage1 = self.stage1 if self.stage1 is not None else GradientBoostedTrees()
        stage2 = (self.stage2 if self.stage2 is not None
                  else LinearRegressor(ridge=_STAGE2_RIDGE))
        plan = make_folds(data, self.n_folds, derive_seed(self.seed, "folds"))
        ext_mask = data.s == 0
        trial_mask = data.s == 1
        models = []
        for f in range(self.n_folds):
            train_ext = plan.training(f) & ext_mask
            mu1 = _fit_arm(stage1, data.x, data.y, train_ext & (data.a == 1), 1,
                           f"external training fold {f}")
            mu0 = _fit_arm(stage1, data.x, data.y, train_ext & (data.a == 0), 0,
                           f"external training fold {f}")
            held = plan.heldout(f) & trial_mask
            e_held = data.e[held]
            m = e_held * mu0.predict(data.x[held]) \
                + (1.0 - e_held) * mu1.predict(data.x[held])
            psi = pseudo_outcomes(data.a[held], data.y[held], e_held, m, m)
            models.append(clone(stage2).fit(data.x[held], psi))
        self.models_ = models
        self.n_features_ = data.d
        return self

    def _predict(self, X):
        return _mean_prediction(self.models_, X)


class BiasCorrectionLearner(_CateLearner):
    """External-data effect model plus a linear trial correction.

    An effect model ``omega`` is cross-fit on external rows alone, using an
    estimated external treatment propensity in the pseudo-outcome. The
    residual between plug-in-free trial pseudo-outcomes and ``omega`` is
    then fit by a linear model; predictions are ``omega(x) + bias(x)``.
    """

    def __init__(self, stage1=None, stage2=None, classifier=None,
                 bias=None, n_folds: int = 2, seed: int = 0):
        self.stage1 = stage1
        self.stage2 = stage2
        self.classifier = classifier
        self.bias = bias
        self.n_folds = n_folds
        self.seed = seed

    def fit(self, data):
        data = _as_dataset(data)
        if data.n_external == 0:
            raise FitError("BiasCorrectionLearner needs external rows")
        ext = data.external()
        trial = data.trial()
        stage1 = self.stage1 if self.stage1 is not None else GradientBoostedTrees()
        stage2 = (self.stage2 if self.stage2 is not None
                  else LinearRegressor(ridge=_STAGE2_RIDGE))
        classifier = (self.classifier if self.classifier is not None
                      else RidgeLogisticCV())
        plan = make_folds(ext, self.n_folds, derive_seed(self.seed, "folds"))
        models = []
        for f in range(self.n_folds):
            train = plan.training(f)
            labels = ext.a[train]
            if labels.min() == labels.max():
                raise FitError(
                    f"treatment arm {int(1 - labels[0])} is empty in external "
                    f"training fold {f}"
                )
            clf = _seeded_clone(classifier, derive_seed(self.seed, "e0", f))
            clf.fit(ext.x[train], labels)
            g1 = _fit_arm(stage1, ext.x, ext.y, train & (ext.a == 1), 1,
                          f"external training fold {f}")
            g0 = _fit_arm(stage1, ext.x, ext.y, train & (ext.a == 0), 0,
                          f"external training fold {f}")
            held = plan.heldout(f)
            e0 = clf.predict_proba(ext.x[held])[:, 1]
            psi = pseudo_outcomes(
                ext.a[held], ext.y[held], e0,
                g1.predict(ext.x[held]), g0.predict(ext.x[held]),
            )
            models.append(clone(stage2).fit(ext.x[held], psi))
        self.models_ = models
        psi_trial = pseudo_outcomes(
            trial.a, trial.y, trial.e, np.zeros(trial.n), np.zeros(trial.n)
        )
        residual = psi_trial - _mean_prediction(models, trial.x)
        bias = self.bias if self.bias is not None else LinearRegressor()
        self.bias_ = clone(bias).fit(trial.x, residual)
        self.n_features_ = data.d
        return self

    def _predict(self, X):
        return _mean_prediction(self.models_, X) + self.bias_.predict(X)


# ---------------------------------------------------------------------------
# Convex combination of QR and DR


@dataclass(frozen=True)
class LambdaFit:
    """Result of choosing the QR weight by cross-validated pseudo-risk.

    The held-out risk is exactly ``(a_q * lam^2 + b_q * lam + c_q) / n``
    where n = len(psi); ``lam`` minimizes it over [0, 1]. ``a_q`` is a sum
    of squares, hence non-negative; when it is zero the two learners'
    held-out predictions coincide and ``lam`` is pinned to 0.
    """

    lam: float
    a_q: float
    b_q: float
    c_q: float
    psi: np.ndarray
    u: np.ndarray
    v: np.ndarray
    k: int
    method: str = "closed_form"

    def __post_init__(self):
        for name in ("psi", "u", "v"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def cv_risk(self, lam: float) -> float:
        """Held-out pseudo-risk of the convex combination at ``lam``."""
        blend = lam * self.u + (1.0 - lam) * self.v
        return float(np.mean((self.psi - blend) ** 2))


def lambda_from_predictions(psi, u, v, k: int = 0, grid: int | None = None) -> LambdaFit:
    """Minimize the held-out pseudo-risk of ``lam * u + (1 - lam) * v``.

    The risk is the exact quadratic ``(A lam^2 + B lam + C) / n``; with
    ``grid=None`` the minimizer over [0, 1] comes from the closed form,
    otherwise from evaluating the risk on ``grid`` equispaced points
    (useful only as a cross-check).
    """
    psi = np.asarray(psi, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if not (len(psi) == len(u) == len(v)):
        raise ValueError("psi, u, v must share a length")
    gap = u - v
    resid = psi - v
    a_q = float(gap @ gap)
    b_q = float(-2.0 * (resid @ gap))
    c_q = float(resid @ resid)
    if grid is None:
        lam = 0.0 if a_q <= 0.0 else float(np.clip(-b_q / (2.0 * a_q), 0.0, 1.0))
        method = "closed_form"
    else:
        points = np.linspace(0.0, 1.0, int(grid))
        risks = [float(np.mean((psi - p * u - (1 - p) * v) ** 2)) for p in points]
        lam = float(points[int(np.argmin(risks))])
        method = "grid"
    return LambdaFit(lam=lam, a_q=a_q, b_q=b_q, c_q=c_q,
                     psi=psi, u=u, v=v, k=k, method=method)


def select_lambda_cv(data: Dataset, qr=None, dr=None, k: int = 3,
                     seed: int = 0, grid: int | None = None) -> LambdaFit:
    """Cross-validate the convex weight between a QR and a DR learner.

    Trial rows are split into ``k`` folds. For each fold, both learners are
    fit on everything else (external rows included) and predict on the held
    trial rows; held-out pseudo-outcomes use the plug-in-free nuisances
    (h1 = h0 = 0). The assembled (psi, u, v) vectors define an exact
    quadratic in the weight.
    """
    data = _as_dataset(data)
    qr = qr if qr is not None else QRLearner()
    dr = dr if dr is not None else DRLearner()
    trial = data.trial()
    trial_positions = np.flatnonzero(data.s == 1)
    plan = make_folds(trial, k, derive_seed(seed, "folds"))
    psi = pseudo_outcomes(trial.a, trial.y, trial.e,
                          np.zeros(trial.n), np.zeros(trial.n))
    u = np.empty(trial.n)
    v = np.empty(trial.n)
    for f in range(k):
        held = plan.heldout(f)
        keep = np.ones(data.n, dtype=bool)
        keep[trial_positions[held]] = False
        train_data = data.subset(keep)
        # both learners share one fold-level seed, so when their procedures
        # coincide (e.g. pi forced to 1 on trial-only data) so do u and v
        fold_seed = derive_seed(seed, "fit", f)
        qr_f = _seeded_clone(qr, fold_seed).fit(train_data)
        dr_f = _seeded_clone(dr, fold_seed).fit(train_data)
        u[held] = qr_f.predict(trial.x[held])
        v[held] = dr_f.predict(trial.x[held])
    return lambda_from_predictions(psi, u, v, k=k, grid=grid)


class CombinedLearner(_CateLearner):
    """Convex combination of a QR and a DR learner.

    Both are fit on the full data; the combination weight comes from
    :func:`select_lambda_cv`. Predictions are
    ``lam * qr(x) + (1 - lam) * dr(x)``, so the endpoints reproduce the
    component learners exactly.
    """

    def __init__(self, qr=None, dr=None, cv_folds: int = 3, seed: int = 0):
        self.qr = qr
        self.dr = dr
        self.cv_folds = cv_folds
        self.seed = seed

    def fit(self, data):
        data = _as_dataset(data)
        qr = self.qr if self.qr is not None else QRLearner()
        dr = self.dr if self.dr is not None else DRLearner()
        fit_seed = derive_seed(self.seed, "fit")
        self.qr_ = _seeded_clone(qr, fit_seed).fit(data)
        self.dr_ = _seeded_clone(dr, fit_seed).fit(data)
        self.lambda_fit_ = select_lambda_cv(
            data, qr, dr, k=self.cv_folds, seed=derive_seed(self.seed, "lambda")
        )
        self.lambda_ = self.lambda_fit_.lam
        self.n_features_ = data.d
        return self

    def _predict(self, X):
        lam = self.lambda_
        return lam * self.qr_.predict(X) + (1.0 - lam) * self.dr_.predict(X)


# ---------------------------------------------------------------------------
# Registry

LEARNER_NAMES = (
    "ate",
    "t",
    "pooled_t",
    "dr",
    "pw",
    "qr",
    "external_blend",
    "bias_correction",
    "combined",
)


def _make_stage1(stage1, stage1_params):
    if isinstance(stage1, BaseEstimator):
        return clone(stage1)
    params = dict(stage1_params or {})
    if stage1 == "gbrt":
        return GradientBoostedTrees(**params)
    if stage1 == "linear":
        return LinearRegressor(**({"ridge": _STAGE2_RIDGE} | params))
    raise ValueError(f"stage1 must be 'gbrt', 'linear', or an estimator, got {stage1!r}")


def make_learner(name: str, stage1="gbrt", seed: int = 0, stage1_params=None):
    """Build a learner by registry name.

    ``stage1`` selects the nuisance regressor family ('gbrt' or 'linear',
    or a prototype estimator); ``stage1_params`` override its constructor
    arguments. ``seed`` feeds every internal fold split and classifier.
    """
    s1 = _make_stage1(stage1, stage1_params)
    if name == "ate":
        return DifferenceInMeans()
    if name == "t":
        return TLearner(base=s1, seed=seed)
    if name == "pooled_t":
        return TLearner(base=s1, pooled=True, seed=seed)
    if name == "dr":
        return DRLearner(stage1=s1, seed=seed)
    if name == "pw":
        return DRLearner(stage1=ZeroRegressor(), seed=seed)
    if name == "qr":
        return QRLearner(stage1=s1, seed=seed)
    if name == "external_blend":
        return ExternalBlendLearner(stage1=s1, seed=seed)
    if name == "bias_correction":
        return BiasCorrectionLearner(stage1=s1, seed=seed)
    if name == "combined":
        return CombinedLearner(
            qr=QRLearner(stage1=s1), dr=DRLearner(stage1=clone(s1)), seed=seed
        )
    raise ValueError(f"unknown learner {name!r}; choose from {LEARNER_NAMES}")
