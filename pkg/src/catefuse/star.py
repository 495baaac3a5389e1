"""Student-level two-location data: partition construction with hidden
selection.

The input is a student-level table (one row per student) with a binary
location, a small/regular class assignment, a score outcome, and a handful
of demographic covariates. :func:`build_star_partition` turns it into a
fused sample:

* rural students are split in half by a seeded shuffle; one half becomes
  the randomized-trial arm (location's class assignment was randomized,
  so a constant trial propensity is recorded),
* the other rural half plus all urban students become the observational
  arm, from which treated rows scoring strictly above their location
  stratum's treated median are removed. The removal makes the
  observational treated arm negatively selected on the outcome,
* the location column itself is dropped from the emitted covariates, so
  the selection above is driven by a variable the downstream learners
  never see.

:func:`synthetic_star_extract` draws a structurally identical synthetic
table for tests and demos; the repository ships a 40-row CSV of it, never
any real student records.
"""

from __future__ import annotations

import csv
import datetime
from dataclasses import dataclass, fields

import numpy as np
from scipy.special import expit

from .data import DataError, Dataset
from .rng import standard_normal, stream

__all__ = [
    "RAW_COLUMNS",
    "StarRaw",
    "StarPartition",
    "load_star_csv",
    "save_star_csv",
    "encode_covariates",
    "build_star_partition",
    "subsample",
    "synthetic_star_extract",
]

RAW_COLUMNS = ("location", "class_type", "score", "gender", "race",
               "birth_date", "teacher_id", "free_lunch")
LOCATIONS = ("rural", "urban")
CLASS_TYPES = ("small", "regular")  # regular class codes as a = 1
_EPOCH = datetime.date(1970, 1, 1)

# Levels expanded one-hot, in this column order, with the birth date kept
# as a single numeric day count.
_CATEGORICAL = ("gender", "race", "teacher_id", "free_lunch")


@dataclass(frozen=True)
class StarRaw:
    """One student per row; all fields are aligned arrays.

    ``birth_date`` holds ISO date strings; parsing to a numeric happens at
    encoding time so the raw table round-trips through CSV unchanged.
    """

    location: np.ndarray
    class_type: np.ndarray
    score: np.ndarray
    gender: np.ndarray
    race: np.ndarray
    birth_date: np.ndarray
    teacher_id: np.ndarray
    free_lunch: np.ndarray

    def __post_init__(self):
        for f in fields(self):
            arr = np.asarray(getattr(self, f.name))
            if f.name == "score":
                arr = arr.astype(float)
            object.__setattr__(self, f.name, arr)
        n = len(self.location)
        for f in fields(self):
            if len(getattr(self, f.name)) != n:
                raise DataError(f"column {f.name!r} has length "
                                f"{len(getattr(self, f.name))}, expected {n}")
        if n < 1:
            raise DataError("raw table must contain at least one row")
        for i, loc in enumerate(self.location):
            if loc not in LOCATIONS:
                raise DataError(f"row {i}, column 'location': expected one of "
                                f"{LOCATIONS}, got {loc!r}")
        for i, ct in enumerate(self.class_type):
            if ct not in CLASS_TYPES:
                raise DataError(f"row {i}, column 'class_type': expected one "
                                f"of {CLASS_TYPES}, got {ct!r}")
        bad = np.flatnonzero(~np.isfinite(self.score))
        if bad.size:
            raise DataError(f"row {bad[0]}, column 'score': not finite")

    @property
    def n(self) -> int:
        return len(self.location)

    def treatment(self) -> np.ndarray:
        return (self.class_type == "regular").astype(int)


def _parse_birth_days(value: str, row: int) -> float:
    try:
        return float((datetime.date.fromisoformat(value) - _EPOCH).days)
    except ValueError:
        raise DataError(f"row {row}, column 'birth_date': cannot parse "
                        f"{value!r} as an ISO date") from None


def load_star_csv(path) -> StarRaw:
    """Read a student-level CSV with the :data:`RAW_COLUMNS` schema."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows) < 2:
        raise DataError(f"{path}: no data rows")
    header, body = rows[0], rows[1:]
    index = {}
    for name in RAW_COLUMNS:
        if name not in header:
            raise DataError(f"{path}: missing column {name!r}")
        index[name] = header.index(name)
    columns = {name: [row[index[name]] for row in body] for name in RAW_COLUMNS}
    score = np.empty(len(body))
    for i, cell in enumerate(columns["score"]):
        try:
            score[i] = float(cell)
        except ValueError:
            raise DataError(f"row {i}, column 'score': cannot parse {cell!r} "
                            f"as a number") from None
    columns["score"] = score
    raw = StarRaw(**{name: np.asarray(col) for name, col in columns.items()})
    for i, value in enumerate(raw.birth_date):
        _parse_birth_days(value, i)
    return raw


def save_star_csv(raw: StarRaw, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RAW_COLUMNS)
        for i in range(raw.n):
            writer.writerow([
                raw.location[i], raw.class_type[i], repr(float(raw.score[i])),
                raw.gender[i], raw.race[i], raw.birth_date[i],
                raw.teacher_id[i], raw.free_lunch[i],
            ])


def encode_covariates(raw: StarRaw):
    """Covariate matrix and names: one-hot categoricals, numeric birth day.

    Levels come from the full table and are sorted lexicographically with
    none dropped, so the encoding is stable under row subsetting done
    afterward. Location and class type are deliberately not covariates.
    """
    columns, names = [], []
    for col in ("gender", "race"):
        values = getattr(raw, col)
        for level in sorted(set(values)):
            columns.append((values == level).astype(float))
            names.append(f"{col}={level}")
    columns.append(np.array([_parse_birth_days(v, i)
                             for i, v in enumerate(raw.birth_date)]))
    names.append("birth_days")
    for col in ("teacher_id", "free_lunch"):
        values = getattr(raw, col)
        for level in sorted(set(values)):
            columns.append((values == level).astype(float))
            names.append(f"{col}={level}")
    return np.column_stack(columns), tuple(names)


@dataclass(frozen=True)
class StarPartition:
    """Trial/observational split with the location column dropped."""

    trial: Dataset
    external: Dataset
    n_removed: int
    feature_names: tuple

    @property
    def d(self) -> int:
        return self.trial.d


def build_star_partition(raw: StarRaw, seed: int, trial_e: float = 0.5) -> StarPartition:
    """Construct the fused sample described in the module docstring.

    The location-stratum medians are computed over the observational
    half's treated rows only, and the strictly-above-median treated rows
    are dropped from that half. ``trial_e`` is the recorded (constant)
    trial treatment probability.
    """
    if not 0.0 < trial_e < 1.0:
        raise DataError(f"trial_e must lie in (0, 1), got {trial_e}")
    a = raw.treatment()
    if a.min() == a.max():
        raise DataError("raw table must contain both class types")
    x, names = encode_covariates(raw)
    rural = np.flatnonzero(raw.location == "rural")
    urban = np.flatnonzero(raw.location == "urban")
    if rural.size == 0 or urban.size == 0:
        raise DataError("raw table must contain both locations")

    shuffled = stream(seed, "split").permutation(rural)
    trial_idx = np.sort(shuffled[: rural.size // 2])
    obs_idx = np.sort(np.concatenate([shuffled[rural.size // 2:], urban]))

    keep = np.ones(obs_idx.size, dtype=bool)
    removed = 0
    for loc in LOCATIONS:
        stratum = raw.location[obs_idx] == loc
        treated = stratum & (a[obs_idx] == 1)
        if not np.any(treated):
            raise DataError(f"observational {loc} stratum has no treated rows")
        cutoff = np.median(raw.score[obs_idx[treated]])
        drop = treated & (raw.score[obs_idx] > cutoff)
        keep &= ~drop
        removed += int(drop.sum())
    obs_idx = obs_idx[keep]

    def as_dataset(idx, s_value):
        return Dataset(
            x=x[idx],
            s=np.full(idx.size, s_value, dtype=int),
            a=a[idx],
            y=raw.score[idx],
            e=np.full(idx.size, trial_e),
            feature_names=names,
        )

    return StarPartition(
        trial=as_dataset(trial_idx, 1),
        external=as_dataset(obs_idx, 0),
        n_removed=removed,
        feature_names=names,
    )


def subsample(partition: StarPartition, n1: int, n0: int, seed: int):
    """Without-replacement subsets of the trial and observational arms."""
    out = []
    for name, part, size in (("n1", partition.trial, n1),
                             ("n0", partition.external, n0)):
        if not 1 <= size <= part.n:
            raise DataError(f"{name} must lie in [1, {part.n}], got {size}")
        rng = stream(seed, "subsample", name)
        chosen = np.sort(rng.permutation(part.n)[:size])
        mask = np.zeros(part.n, dtype=bool)
        mask[chosen] = True
        out.append(part.subset(mask))
    return tuple(out)


def synthetic_star_extract(n_rural: int, n_urban: int, seed: int = 0) -> StarRaw:
    """Synthetic table with the real extract's structure, standardized scale.

    Twelve teachers split across the two locations, demographic mixes that
    differ by location, a class-size effect that varies with lunch status
    and gender, urban scores shifted down, and urban class assignment tied
    to lunch status. Rural class assignment is a fair coin, matching the
    randomized-trial reading of that location.
    """
    if n_rural < 1 or n_urban < 1:
        raise DataError("need at least one row per location")
    n = n_rural + n_urban
    urban = np.repeat([0, 1], [n_rural, n_urban])
    cov = stream(seed, "star", "covariates")

    rural_teachers = [f"RT{i:02d}" for i in range(1, 9)]
    urban_teachers = [f"UT{i:02d}" for i in range(1, 5)]
    teacher = np.where(
        urban == 0,
        np.asarray(rural_teachers)[cov.integers(8, size=n)],
        np.asarray(urban_teachers)[cov.integers(4, size=n)],
    )
    effects = dict(zip(rural_teachers + urban_teachers,
                       0.5 * standard_normal(stream(seed, "star", "teachers"), 12)))
    teacher_effect = np.array([effects[t] for t in teacher])

    female = cov.random(n) < 0.5
    gender = np.where(female, "female", "male")
    race = np.asarray(["black", "other", "white"])[
        cov.choice(3, size=n, p=[0.3, 0.1, 0.6])
    ]
    lunch = cov.random(n) < np.where(urban == 1, 0.7, 0.4)
    free_lunch = np.where(lunch, "yes", "no")
    birth_days = cov.integers(1826, 2922, size=n)  # 1975-01-01 .. 1977-12-31
    birth = np.asarray([
        (_EPOCH + datetime.timedelta(days=int(day))).isoformat()
        for day in birth_days
    ])

    # hidden per-student aptitude: in the urban location it drives both class
    # assignment and the score, so urban rows are confounded in a way no
    # recorded covariate can explain; rural assignment stays a fair coin
    aptitude = standard_normal(stream(seed, "star", "aptitude"), n)
    trt = stream(seed, "star", "treatment")
    p_treat = np.where(urban == 1,
                       expit(-0.2 + 0.9 * lunch + 2.2 * aptitude), 0.5)
    a = (trt.random(n) < p_treat).astype(int)

    # urban effects are kept outside the span of the one-hot main effects:
    # teacher dummies absorb urban mean shifts, but an urban-only effect
    # slope on the shared numeric birth column distorts the pooled fit's
    # shared coefficient, which is what contaminates rural predictions
    birth_centered = (birth_days - birth_days.mean()) / 100.0
    tau = (-1.0 + 0.6 * lunch + 0.2 * female - 1.8 * (urban * lunch)
           + 1.0 * (urban * birth_centered))
    base = teacher_effect - 0.8 * lunch - 2.5 * urban + 0.1 * female
    score = (base + a * tau + 1.4 * aptitude * urban
             + 0.5 * standard_normal(stream(seed, "star", "noise"), n))

    return StarRaw(
        location=np.where(urban == 1, "urban", "rural"),
        class_type=np.where(a == 1, "regular", "small"),
        score=score,
        gender=gender,
        race=race,
        birth_date=birth,
        teacher_id=teacher,
        free_lunch=free_lunch,
    )
