"""Observational dataset ingestion, eligibility filtering and summaries."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DomainError, ParseError, PositivityError, SchemaError

MISSING_TOKENS = frozenset({"", "NA", "NaN", "nan", ".", "NULL"})


@dataclass(frozen=True)
class CovariateSchema:
    """Column roles for an observational study.

    ``eligibility_filters`` is a sequence of ``(column, allowed_values)``
    pairs; a row survives only if every listed column holds one of its
    allowed values. With ``treatment_recode="invert"`` the treatment is
    recoded as ``1 - raw`` after filtering.
    """

    numeric_columns: tuple[str, ...]
    binary_columns: tuple[str, ...]
    treatment_column: str
    outcome_column: str
    outcome_units: str = ""
    eligibility_filters: tuple[tuple[str, tuple], ...] = ()
    treatment_recode: str | None = None

    def __post_init__(self):
        covs = set(self.covariate_columns)
        for role in (self.treatment_column, self.outcome_column):
            if role in covs:
                raise SchemaError(f"column {role!r} is both a covariate and a treatment/outcome column")
        if self.treatment_column == self.outcome_column:
            raise SchemaError("treatment and outcome columns must differ")
        if len(covs) != len(self.covariate_columns):
            raise SchemaError("duplicate covariate column")
        if self.treatment_recode not in (None, "invert"):
            raise SchemaError(f"unknown treatment_recode {self.treatment_recode!r}")

    @property
    def covariate_columns(self) -> tuple[str, ...]:
        return tuple(self.numeric_columns) + tuple(self.binary_columns)

    @property
    def required_columns(self) -> tuple[str, ...]:
        cols = [self.outcome_column, self.treatment_column, *self.covariate_columns]
        cols += [c for c, _ in self.eligibility_filters if c not in cols]
        return tuple(cols)

    def canonical(self) -> "CovariateSchema":
        """Schema describing the canonical re-emission: no filters, no recode."""
        return CovariateSchema(
            numeric_columns=self.numeric_columns,
            binary_columns=self.binary_columns,
            treatment_column=self.treatment_column,
            outcome_column=self.outcome_column,
            outcome_units=self.outcome_units,
        )

    def to_dict(self) -> dict:
        return {
            "numeric_columns": list(self.numeric_columns),
            "binary_columns": list(self.binary_columns),
            "treatment_column": self.treatment_column,
            "outcome_column": self.outcome_column,
            "outcome_units": self.outcome_units,
            "eligibility_filters": [[c, list(v)] for c, v in self.eligibility_filters],
            "treatment_recode": self.treatment_recode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CovariateSchema":
        return cls(
            numeric_columns=tuple(d.get("numeric_columns", ())),
            binary_columns=tuple(d.get("binary_columns", ())),
            treatment_column=d["treatment_column"],
            outcome_column=d["outcome_column"],
            outcome_units=d.get("outcome_units", ""),
            eligibility_filters=tuple((c, tuple(v)) for c, v in d.get("eligibility_filters", ())),
            treatment_recode=d.get("treatment_recode"),
        )

    @classmethod
    def load(cls, path) -> "CovariateSchema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def default_schema() -> CovariateSchema:
    """The birthweight application schema shipped with the package."""
    text = resources.files("ttpredict.schemas").joinpath("cattaneo2.json").read_text(encoding="utf-8")
    return CovariateSchema.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class ObservationalDataset:
    y: np.ndarray
    t: np.ndarray
    x: np.ndarray
    schema: CovariateSchema
    n_dropped_ineligible: int = 0
    n_dropped_missing: int = 0
    integer_columns: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        for a in (self.y, self.t, self.x):
            a.setflags(write=False)
        n = self.y.shape[0]
        if self.x.shape != (n, len(self.schema.covariate_columns)) or self.t.shape != (n,):
            raise SchemaError("inconsistent array shapes")
        if n == 0:
            raise PositivityError("dataset has no eligible rows")
        if not np.all((self.t == 0) | (self.t == 1)):
            raise DomainError("treatment must be 0/1")
        n1 = int(self.t.sum())
        if n1 == 0 or n1 == n:
            raise PositivityError(f"single-arm dataset ({n1} treated of {n}); both arms must be non-empty")
        if not (np.all(np.isfinite(self.y)) and np.all(np.isfinite(self.x))):
            raise ParseError("non-finite values in dataset")
        for j, name in enumerate(self.schema.covariate_columns):
            if name in self.schema.binary_columns and not np.all(np.isin(self.x[:, j], (0.0, 1.0))):
                raise SchemaError(f"binary column {name!r} has values outside {{0,1}}")

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def covariate_names(self) -> tuple[str, ...]:
        return self.schema.covariate_columns

    def column(self, name: str) -> np.ndarray:
        if name == self.schema.outcome_column:
            return self.y
        if name == self.schema.treatment_column:
            return self.t.astype(float)
        try:
            return self.x[:, self.covariate_names.index(name)]
        except ValueError:
            raise SchemaError(f"unknown column {name!r}") from None

    def __eq__(self, other):
        if not isinstance(other, ObservationalDataset):
            return NotImplemented
        return (
            self.schema.covariate_columns == other.schema.covariate_columns
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
        )


def _parse_number(text: str, row: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"non-numeric value {text!r} in column {column!r} at data row {row}") from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite value {text!r} in column {column!r} at data row {row}")
    return value


def _allowed(value: str, allowed: tuple) -> bool:
    for a in allowed:
        if isinstance(a, (int, float)) and not isinstance(a, bool):
            try:
                if float(value) == float(a):
                    return True
            except ValueError:
                continue
        elif str(a) == value:
            return True
    return False


def ingest_csv(path, schema: CovariateSchema) -> ObservationalDataset:
    """Read a CSV file, apply eligibility filters and the treatment recode.

    Rows with a missing value in any required column are dropped and
    counted in ``n_dropped_missing``. Row order among survivors is kept.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        return _ingest(fh, schema)


def ingest_text(text: str, schema: CovariateSchema) -> ObservationalDataset:
    return _ingest(io.StringIO(text), schema)


def _ingest(fh, schema: CovariateSchema) -> ObservationalDataset:
    reader = csv.reader(fh)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError("empty file: no header row") from None
    position = {name: i for i, name in enumerate(header)}
    for col in schema.required_columns:
        if col not in position:
            raise SchemaError(f"missing column {col!r}")

    data_cols = [schema.outcome_column, schema.treatment_column, *schema.covariate_columns]
    rows: list[list[float]] = []
    dropped_filter = dropped_missing = 0
    for row_index, record in enumerate(reader, start=1):
        if not record:
            continue
        if not all(_allowed(record[position[c]].strip(), allowed) for c, allowed in schema.eligibility_filters):
            dropped_filter += 1
            continue
        cells = [record[position[c]].strip() for c in data_cols]
        if any(c in MISSING_TOKENS for c in cells):
            dropped_missing += 1
            continue
        rows.append([_parse_number(c, row_index, name) for c, name in zip(cells, data_cols)])

    if not rows:
        raise PositivityError("no eligible rows after filtering")
    arr = np.asarray(rows, dtype=np.float64)
    t = arr[:, 1]
    if not np.all((t == 0) | (t == 1)):
        raise DomainError(f"treatment column {schema.treatment_column!r} must be coded 0/1")
    if schema.treatment_recode == "invert":
        t = 1.0 - t
    integral = frozenset(name for j, name in enumerate(data_cols) if np.all(arr[:, j] == np.round(arr[:, j])))
    return ObservationalDataset(
        y=arr[:, 0].copy(),
        t=t.astype(np.int8),
        x=arr[:, 2:].copy(),
        schema=schema,
        n_dropped_ineligible=dropped_filter,
        n_dropped_missing=dropped_missing,
        integer_columns=integral,
    )


def _fmt(value: float, integral: bool) -> str:
    return str(int(value)) if integral else repr(float(value))


def to_canonical_csv(ds: ObservationalDataset) -> str:
    """Canonical re-emission: outcome, recoded treatment, covariates."""
    s = ds.schema
    cols = [s.outcome_column, s.treatment_column, *s.covariate_columns]
    integral = [c in ds.integer_columns for c in cols]
    integral[1] = True
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for i in range(ds.n):
        vals = [ds.y[i], ds.t[i], *ds.x[i]]
        writer.writerow([_fmt(v, f) for v, f in zip(vals, integral)])
    return buf.getvalue()


def write_canonical_csv(ds: ObservationalDataset, path) -> None:
    Path(path).write_text(to_canonical_csv(ds), encoding="utf-8")


def summarize(ds: ObservationalDataset) -> dict:
    treated = ds.t == 1
    n1 = int(treated.sum())
    return {
        "n": ds.n,
        "n_treated": n1,
        "n_control": ds.n - n1,
        "mean_outcome": float(ds.y.mean()),
        "mean_outcome_treated": float(ds.y[treated].mean()),
        "mean_outcome_control": float(ds.y[~treated].mean()),
        "covariate_means": {name: float(ds.x[:, j].mean()) for j, name in enumerate(ds.covariate_names)},
        "n_dropped_ineligible": ds.n_dropped_ineligible,
        "n_dropped_missing": ds.n_dropped_missing,
    }


def positivity_report(ds: ObservationalDataset, pi_hat, eps: float = 0.01) -> dict:
    """Count propensities outside ``[eps, 1 - eps]``."""
    pi = np.asarray(pi_hat, dtype=float)
    if pi.shape != (ds.n,):
        raise SchemaError(f"pi_hat has length {pi.size}, expected {ds.n}")
    if np.any((pi <= 0) | (pi >= 1)) or not np.all(np.isfinite(pi)):
        raise DomainError("propensities must lie strictly inside (0, 1)")
    low = pi < eps
    high = pi > 1 - eps
    return {
        "eps": eps,
        "min": float(pi.min()),
        "max": float(pi.max()),
        "n_below": int(low.sum()),
        "n_above": int(high.sum()),
        "n_violations": int((low | high).sum()),
        "n_violations_treated": int(((low | high) & (ds.t == 1)).sum()),
        "n_violations_control": int(((low | high) & (ds.t == 0)).sum()),
    }
