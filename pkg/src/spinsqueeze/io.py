"""CSV serialization of trial records and run summaries."""

import csv
import math

from .experiments import RECORD_FIELDS, FIT_TX_UNIT, RunSummary, TrialRecords

SUMMARY_FIELDS = (
    "tx",
    "var_phi1",
    "var_phi1_err",
    "var_phi2",
    "var_phi2_err",
    "chi",
    "var_cond",
    "var_cond_err",
    "xi2_m",
    "sens_css",
    "sens_sq",
    "kind",
)


class OutputError(OSError):
    pass


def _cell(value):
    if isinstance(value, str):
        return value
    if isinstance(value, int):
        return str(value)
    return format(float(value), ".17g")


def _write(path, header, rows):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _summary_rows(summary):
    for b in summary.bins:
        yield (
            b.tx, b.var_phi1, b.var_phi1_err, b.var_phi2, b.var_phi2_err, b.chi,
            b.var_cond, b.var_cond_err, b.xi2_m, b.sens_css, b.sens_sq, "bin",
        )
    # footer: tx holds the power of Tx, the phi columns the coefficient and its error
    nan = math.nan
    f1, f2 = summary.fit_phi1, summary.fit_phi2
    for power, attr in ((1, "a1"), (2, "a2")):
        c1 = (getattr(f1, attr), getattr(f1, attr + "_err")) if f1 else (nan, nan)
        c2 = (getattr(f2, attr), getattr(f2, attr + "_err")) if f2 else (nan, nan)
        yield (power, *c1, *c2, nan, nan, nan, nan, nan, nan, "fit")


def emit_csv(obj, path):
    """Write `obj` (TrialRecords or RunSummary) to `path` as CSV.

    Summaries get one ``kind=bin`` row per alignment followed by two
    ``kind=fit`` rows for the ``Tx`` and ``Tx**2`` coefficients, expressed
    with ``Tx`` in units of 1e5 spins. Missing values are written as ``nan``.
    """
    if isinstance(obj, TrialRecords):
        cols = [getattr(obj, f).tolist() for f in RECORD_FIELDS]
        _write(path, RECORD_FIELDS, zip(*cols))
    elif isinstance(obj, RunSummary):
        _write(path, SUMMARY_FIELDS, _summary_rows(obj))
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def read_records(path):
    """Read a trials CSV written by :func:`emit_csv`."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = list(reader)
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if header is None or tuple(header) != RECORD_FIELDS:
        raise ValueError(f"{path}: not a trials file (header {header!r})")
    ints = {"trial_id", "seed_stream_id"}
    cols = {f: [] for f in RECORD_FIELDS}
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(RECORD_FIELDS):
            raise ValueError(f"{path}:{lineno}: expected {len(RECORD_FIELDS)} fields")
        for f, v in zip(RECORD_FIELDS, row):
            cols[f].append(int(v) if f in ints else float(v))
    return TrialRecords(**cols)


__all__ = ["SUMMARY_FIELDS", "FIT_TX_UNIT", "OutputError", "emit_csv", "read_records"]
