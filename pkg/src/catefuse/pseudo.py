"""Pseudo-outcomes, arm-specific losses, and pseudo-risk.

The pseudo-outcome for a trial row with treatment probability ``e`` and
nuisance predictors ``h1``, ``h0`` is

    psi = (a - e) / (e * (1 - e)) * (y - h_a(x)) + h1(x) - h0(x)

where ``h_a`` is the arm the row actually received. Its conditional mean
given x equals the treatment effect at x for any fixed (h1, h0), which is
what lets squared distance to psi stand in for squared distance to the
unobservable effect when comparing candidate effect models.

Nothing here clips: psi is propagated exactly as computed. Probability
estimates feeding the ``e`` slot are expected to be clipped by their
producer when they are estimates rather than known design constants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .validation import as_matrix, as_vector, check_binary, check_lengths

__all__ = [
    "NuisancePair",
    "pseudo_outcomes",
    "empirical_pseudo_risk",
    "arm_loss",
    "risk_decomposition",
]


def _as_predictor(h):
    """Normalize a nuisance spec to a callable on a covariate matrix.

    Accepts a regressor (``predict``), a classifier (``predict_proba``,
    class-1 column), a plain callable, or a float constant.
    """
    if hasattr(h, "predict_proba"):
        return lambda x: np.asarray(h.predict_proba(x))[:, 1]
    if hasattr(h, "predict"):
        return lambda x: np.asarray(h.predict(x), dtype=float)
    if callable(h):
        return lambda x: np.broadcast_to(
            np.asarray(h(x), dtype=float), (len(x),)
        ).astype(float)
    value = float(h)
    return lambda x: np.full(len(x), value)


@dataclass(frozen=True)
class NuisancePair:
    """Outcome predictors (h1, h0) for the treated and control arms.

    Each entry may be a fitted regressor, a callable, or a float constant.
    ``NuisancePair.zero()`` gives the pure inverse-probability-weighting
    configuration h1 = h0 = 0.
    """

    h1: object
    h0: object

    @classmethod
    def zero(cls) -> "NuisancePair":
        return cls(h1=0.0, h0=0.0)

    def evaluate(self, x) -> tuple:
        x = as_matrix(x)
        h1x = _as_predictor(self.h1)(x)
        h0x = _as_predictor(self.h0)(x)
        return h1x, h0x


def pseudo_outcomes(a, y, e, h1x, h0x) -> np.ndarray:
    """Vector of pseudo-outcomes for rows with evaluated nuisances.

    ``e`` must lie strictly inside (0, 1); values are used exactly as given.
    """
    a = check_binary(np.asarray(a), "a")
    y = as_vector(y, "y")
    e = as_vector(e, "e")
    h1x = as_vector(np.asarray(h1x, dtype=float), "h1x")
    h0x = as_vector(np.asarray(h0x, dtype=float), "h0x")
    check_lengths(("a", a), ("y", y), ("e", e), ("h1x", h1x), ("h0x", h0x))
    bad = ~(np.isfinite(e) & (e > 0.0) & (e < 1.0))
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise ValueError(f"e must lie in (0, 1); row {i} has {e[i]!r}")
    h_received = np.where(a == 1, h1x, h0x)
    return (a - e) / (e * (1.0 - e)) * (y - h_received) + h1x - h0x


def empirical_pseudo_risk(predictions, psi) -> float:
    """Mean squared distance between effect predictions and pseudo-outcomes."""
    predictions = as_vector(predictions, "predictions")
    psi = as_vector(psi, "psi")
    check_lengths(("predictions", predictions), ("psi", psi))
    return float(np.mean((psi - predictions) ** 2))


def arm_loss(x, y, e, arm: int, h_a, pi_a) -> float:
    """Weighted squared-error objective for one arm's outcome model.

    Summed over the given rows (all of which received ``arm``):

        pi_a(x) * ((1 - e) / e)^(2*arm - 1) * (y - h_a(x))^2

    ``pi_a`` weights each row by how trial-like its covariates are, so
    external rows that look nothing like trial rows contribute little. The
    population version carries an extra source-probability denominator that
    is constant in h_a, so it is dropped here.
    """
    if arm not in (0, 1):
        raise ValueError(f"arm must be 0 or 1, got {arm}")
    x = as_matrix(x)
    y = as_vector(y, "y")
    e = as_vector(e, "e")
    check_lengths(("x", x), ("y", y), ("e", e))
    bad = ~(np.isfinite(e) & (e > 0.0) & (e < 1.0))
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise ValueError(f"e must lie in (0, 1); row {i} has {e[i]!r}")
    weights = _as_predictor(pi_a)(x) * ((1.0 - e) / e) ** (2 * arm - 1)
    residuals = y - _as_predictor(h_a)(x)
    return float(np.sum(weights * residuals**2))


def risk_decomposition(tau, predictions, psi) -> tuple:
    """Split the empirical pseudo-risk around a known effect vector.

    Returns ``(model_error, coupling, noise)`` where

        model_error = mean((tau - predictions)^2)
        coupling    = 2 * mean((tau - predictions) * (psi - tau))
        noise       = mean((psi - tau)^2)

    The three sum to :func:`empirical_pseudo_risk` exactly; ``noise`` does
    not depend on the predictions, and ``coupling`` averages to zero over
    draws, which is why pseudo-risk ranks effect models.
    """
    tau = as_vector(tau, "tau")
    predictions = as_vector(predictions, "predictions")
    psi = as_vector(psi, "psi")
    check_lengths(("tau", tau), ("predictions", predictions), ("psi", psi))
    gap = tau - predictions
    model_error = float(np.mean(gap**2))
    coupling = float(2.0 * np.mean(gap * (psi - tau)))
    noise = float(np.mean((psi - tau) ** 2))
    return model_error, coupling, noise
