"""Energy trace container and the CSV column contract.

The CSV trace is the interchange format between the solver and every
downstream consumer (fitting, plotting), so the column set and their
order are fixed and the writer is byte-deterministic.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import TraceFormatError

COLUMNS = (
    "t",
    "E",
    "bbE",
    "Lambda",
    "f_circ_grad",
    "mu",
    "dissipation_residual",
    "F3",
    "source_term",
    "l2_u",
    "l2_ut",
)

EXTRA_COLUMNS = ("psi_int", "grad2")


@dataclass
class EnergyTrace:
    """Recorded time series of the energy functionals plus run metadata."""

    columns: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    gate: object = None

    @classmethod
    def from_samples(cls, rows):
        columns = {name: np.array([r[name] for r in rows]) for name in COLUMNS}
        extras = {
            name: np.array([r.get(name, np.nan) for r in rows])
            for name in EXTRA_COLUMNS
        }
        return cls(columns=columns, extras=extras)

    def __len__(self):
        return 0 if "t" not in self.columns else len(self.columns["t"])

    def __getitem__(self, name):
        if name in self.columns:
            return self.columns[name]
        return self.extras[name]

    @property
    def t(self):
        return self.columns["t"]

    @property
    def E(self):
        return self.columns["E"]

    def write_csv(self, path):
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(COLUMNS)
        cols = [self.columns[name] for name in COLUMNS]
        for i in range(len(self)):
            writer.writerow([format(col[i], ".17g") for col in cols])
        data = buf.getvalue().encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(data)

    @classmethod
    def read_csv(cls, path):
        """Load the 11-column contract; extras and metadata are not persisted."""
        with open(path, "r", newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise TraceFormatError("trace file is empty")
            if tuple(header) != COLUMNS:
                missing = [c for c in COLUMNS if c not in header]
                if missing:
                    raise TraceFormatError(f"missing column {missing[0]!r}")
                raise TraceFormatError(f"unexpected column order {header!r}")
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(COLUMNS):
                    raise TraceFormatError(f"row {lineno} has {len(row)} fields")
                try:
                    rows.append([float(v) for v in row])
                except ValueError:
                    raise TraceFormatError(f"row {lineno} has a non-numeric field")
        if not rows:
            raise TraceFormatError("trace file has a header but no data rows")
        data = np.asarray(rows, dtype=float)
        columns = {name: data[:, j] for j, name in enumerate(COLUMNS)}
        return cls(columns=columns)
