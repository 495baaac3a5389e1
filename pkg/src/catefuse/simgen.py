"""Synthetic fused-sample generators with known effect functions.

Three scenarios share one covariate family: d-dimensional Gaussians with
covariance Sigma / sqrt(d), where Sigma has unit diagonal and 0.1
off-diagonal. Trial covariates center at 0, external covariates at 0.2 in
every coordinate. Trial treatment is a fair coin (e = 0.5); external
treatment follows a logistic design in the covariates. Outcomes are

    y = b(x) + a * tau(x) + noise,    noise ~ N(0, noise_sd^2)

with scenario-specific baseline b and effect tau:

``aligned``
    d = 5, all observed. b(x) = (3/d) sum_j cos(1.5 x_j) + (1/d) (sum_j x_j)^2,
    tau(x) = mean(x). External and trial agree, so external rows carry
    usable signal.
``violated``
    Same formulas at d = 7, but only the first 5 coordinates are emitted.
    The hidden coordinates make the external arm means wrong for the
    observed-covariate problem.
``power``
    d = 5, linear baseline b(x) = mean(x), sparse linear effect
    tau(x) = beta * d * x_1 on trial rows and (beta + 1/20) * d * x_1 on
    external rows: external data mislead any method that pools outcomes.

Draw-level randomness comes from named substreams of the config seed, so a
draw is a pure function of its config.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .data import Dataset, save_csv
from .rng import standard_normal, stream

__all__ = ["SCENARIOS", "DGPConfig", "LabeledDraw", "generate", "true_cate",
           "baseline_outcome", "save_labeled_csv"]

SCENARIOS = ("aligned", "violated", "power")

_OBSERVED_DIM = 5
_EXTERNAL_SHIFT = 0.2
_EFFECT_DRIFT = 1.0 / 20.0  # external effect-slope excess in the power scenario


@dataclass(frozen=True)
class DGPConfig:
    """Parameters of one synthetic draw.

    ``beta`` is the trial effect slope and only matters for ``power``.
    ``alpha0`` / ``alpha`` set the external treatment logit; ``alpha=None``
    means the default (1/sqrt(d)) on every coordinate.
    """

    scenario: str
    n1: int
    n0: int
    beta: float = 0.0
    alpha0: float = 0.0
    alpha: tuple | None = None
    noise_sd: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(
                f"scenario must be one of {SCENARIOS}, got {self.scenario!r}"
            )
        if self.n1 < 1:
            raise ValueError(f"n1 must be at least 1, got {self.n1}")
        if self.n0 < 0:
            raise ValueError(f"n0 must be non-negative, got {self.n0}")
        if self.noise_sd <= 0:
            raise ValueError(f"noise_sd must be positive, got {self.noise_sd}")
        if self.alpha is not None and len(self.alpha) != self.d_full:
            raise ValueError(
                f"alpha must have {self.d_full} entries, got {len(self.alpha)}"
            )

    @property
    def d_full(self) -> int:
        """Generative covariate dimension (7 when 2 coordinates are hidden)."""
        return 7 if self.scenario == "violated" else _OBSERVED_DIM

    @property
    def d_observed(self) -> int:
        return _OBSERVED_DIM


@dataclass(frozen=True)
class LabeledDraw:
    """A generated dataset together with its generative truth.

    ``data.x`` holds the observed covariates; ``x_full`` additionally keeps
    any hidden coordinates so ``tau`` (the per-row true effect) is exact
    even under masking.
    """

    data: Dataset
    x_full: np.ndarray
    tau: np.ndarray
    config: DGPConfig = field(compare=False)


def _chol_factor(d: int) -> np.ndarray:
    sigma = np.full((d, d), 0.1)
    np.fill_diagonal(sigma, 1.0)
    return np.linalg.cholesky(sigma / np.sqrt(d))


def baseline_outcome(config: DGPConfig, x_full: np.ndarray) -> np.ndarray:
    """Untreated outcome mean b(x) on full-dimension covariates."""
    x_full = np.asarray(x_full, dtype=float)
    d = config.d_full
    if x_full.shape[1] != d:
        raise ValueError(f"x_full has {x_full.shape[1]} columns, expected {d}")
    if config.scenario == "power":
        return x_full.sum(axis=1) / d
    total = x_full.sum(axis=1)
    return (3.0 / d) * np.cos(1.5 * x_full).sum(axis=1) + total**2 / d


def true_cate(config: DGPConfig, x_full: np.ndarray, s) -> np.ndarray:
    """True treatment effect at full-dimension covariates, per source.

    ``s`` may be a scalar or per-row vector; it matters only for ``power``,
    where external rows follow a drifted effect slope.
    """
    x_full = np.asarray(x_full, dtype=float)
    d = config.d_full
    if x_full.shape[1] != d:
        raise ValueError(f"x_full has {x_full.shape[1]} columns, expected {d}")
    if config.scenario == "power":
        slope = config.beta + _EFFECT_DRIFT * (1 - np.asarray(s))
        return slope * d * x_full[:, 0]
    return x_full.mean(axis=1)


def generate(config: DGPConfig) -> LabeledDraw:
    """Draw one fused sample: n1 trial rows followed by n0 external rows."""
    d = config.d_full
    chol = _chol_factor(d)
    alpha = (np.full(d, 1.0 / np.sqrt(d)) if config.alpha is None
             else np.asarray(config.alpha, dtype=float))

    blocks = []
    for source, n in ((1, config.n1), (0, config.n0)):
        if n == 0:
            continue
        shift = 0.0 if source == 1 else _EXTERNAL_SHIFT
        x = shift + standard_normal(stream(config.seed, "x", source), (n, d)) @ chol.T
        if source == 1:
            a = (stream(config.seed, "a", source).random(n) < 0.5).astype(np.int64)
        else:
            p = expit(config.alpha0 + x @ alpha)
            a = (stream(config.seed, "a", source).random(n) < p).astype(np.int64)
        tau = true_cate(config, x, source)
        noise = config.noise_sd * standard_normal(
            stream(config.seed, "noise", source), n
        )
        y = baseline_outcome(config, x) + a * tau + noise
        blocks.append((x, np.full(n, source, dtype=np.int64), a, y, tau))

    x_full = np.vstack([b[0] for b in blocks])
    s = np.concatenate([b[1] for b in blocks])
    a = np.concatenate([b[2] for b in blocks])
    y = np.concatenate([b[3] for b in blocks])
    tau = np.concatenate([b[4] for b in blocks])
    data = Dataset(
        x=x_full[:, : config.d_observed],
        s=s,
        a=a,
        y=y,
        e=np.full(len(s), 0.5),
    )
    x_full.setflags(write=False)
    tau.setflags(write=False)
    return LabeledDraw(data=data, x_full=x_full, tau=tau, config=config)


def save_labeled_csv(draw: LabeledDraw, path) -> None:
    """Write the observed dataset plus a trailing true-effect column."""
    save_csv(draw.data, path)
    with open(path) as fh:
        lines = fh.read().splitlines()
    lines[0] += ",tau_true"
    for i in range(draw.data.n):
        lines[i + 1] += f",{float(draw.tau[i])!r}"
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
