"""Column-oriented datasets and their CSV representation."""
from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ArgumentError, IngestError, UnknownNodeError

INTERVENTION_COLUMN = "INT"


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Samples of the model variables, one float column per node.

    ``intervened`` optionally names, per row, the node an experiment
    intervened on ('' for observational rows). ``weights`` turns the rows into
    a weighted (e.g. exactly enumerated) distribution.
    """

    columns: Mapping[str, np.ndarray]
    intervened: np.ndarray | None = None
    weights: np.ndarray | None = None
    noise: Mapping[str, np.ndarray] | None = field(default=None, compare=False)

    def __post_init__(self):
        cols = {str(k): _frozen(v) for k, v in dict(self.columns).items()}
        lengths = {len(v) for v in cols.values()}
        if len(lengths) > 1:
            raise ArgumentError("all columns must have equal length")
        n = lengths.pop() if lengths else 0
        for k, v in cols.items():
            if v.ndim != 1:
                raise ArgumentError(f"column {k!r} is not one-dimensional")
            if not np.isfinite(v).all():
                raise ArgumentError(f"column {k!r} contains non-finite values")
        object.__setattr__(self, "columns", cols)
        if self.intervened is not None:
            iv = _frozen(self.intervened, dtype=object)
            if len(iv) != n:
                raise ArgumentError("intervention column length mismatch")
            object.__setattr__(self, "intervened", iv)
        if self.weights is not None:
            w = _frozen(self.weights)
            if len(w) != n or (w < 0).any() or not np.isfinite(w).all():
                raise ArgumentError("weights must be finite, non-negative, one per row")
            object.__setattr__(self, "weights", w)
        if self.noise is not None:
            object.__setattr__(self, "noise", {k: _frozen(v) for k, v in dict(self.noise).items()})

    @property
    def n_rows(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def __len__(self):
        return self.n_rows

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise UnknownNodeError({name}) from None

    def __contains__(self, name: str) -> bool:
        return name in self.columns

    def require(self, names: Iterable[str]) -> None:
        missing = set(names) - set(self.columns)
        if missing:
            raise UnknownNodeError(missing)

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        self.require(names)
        if not names:
            return np.empty((self.n_rows, 0))
        return np.column_stack([self.columns[n] for n in names])

    def take(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(
            {k: v[index] for k, v in self.columns.items()},
            None if self.intervened is None else self.intervened[index],
            None if self.weights is None else self.weights[index],
        )

    def head(self, n: int) -> "Dataset":
        return self.take(np.arange(min(n, self.n_rows)))

    def select(self, names: Sequence[str]) -> "Dataset":
        self.require(names)
        return Dataset({k: self.columns[k] for k in names}, self.intervened, self.weights)

    def usable_for(self, node: str) -> np.ndarray:
        """Mask of rows where ``node`` was not set by an experiment."""
        if self.intervened is None:
            return np.ones(self.n_rows, dtype=bool)
        return self.intervened != node

    # CSV ---------------------------------------------------------------

    def to_csv(self, path: str | os.PathLike | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = list(self.columns)
        if self.intervened is not None:
            header.append(INTERVENTION_COLUMN)
        w.writerow(header)
        cols = [self.columns[k].tolist() for k in self.columns]
        for i in range(self.n_rows):
            row = [repr(c[i]) for c in cols]
            if self.intervened is not None:
                row.append(self.intervened[i])
            w.writerow(row)
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path: str | os.PathLike, required: Iterable[str] = ()) -> "Dataset":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise IngestError(f"{path}: empty file") from None
            rows = [r for r in reader if r]
        missing = sorted(set(required) - set(header))
        if missing:
            raise IngestError(f"{path}: missing columns: {', '.join(missing)}")
        data: dict[str, list[float]] = {h: [] for h in header if h != INTERVENTION_COLUMN}
        intervened = [] if INTERVENTION_COLUMN in header else None
        for lineno, row in enumerate(rows, start=2):
            if len(row) != len(header):
                raise IngestError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            for h, v in zip(header, row):
                if h == INTERVENTION_COLUMN:
                    intervened.append(v.strip())
                else:
                    try:
                        data[h].append(float(v))
                    except ValueError:
                        raise IngestError(f"{path}:{lineno}: non-numeric value {v!r} in {h!r}") from None
        try:
            return cls(data, None if intervened is None else np.array(intervened, dtype=object))
        except ArgumentError as exc:
            raise IngestError(f"{path}: {exc}") from None


def concat(parts: Sequence[Dataset]) -> Dataset:
    if not parts:
        raise ArgumentError("nothing to concatenate")
    names = parts[0].names
    has_iv = parts[0].intervened is not None
    return Dataset(
        {k: np.concatenate([p[k] for p in parts]) for k in names},
        np.concatenate([p.intervened for p in parts]) if has_iv else None,
    )
