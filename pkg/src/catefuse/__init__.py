"""Heterogeneous treatment effect estimation for trials fused with external data."""

from .data import (
    CsvSchema,
    DataError,
    Dataset,
    FoldPlan,
    concat_datasets,
    load_canonical_csv,
    load_csv,
    make_folds,
    save_csv,
)

__version__ = "0.1.0"

__all__ = [
    "CsvSchema",
    "DataError",
    "Dataset",
    "FoldPlan",
    "concat_datasets",
    "load_canonical_csv",
    "load_csv",
    "make_folds",
    "save_csv",
    "__version__",
]
