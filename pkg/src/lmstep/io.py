"""Canonical CSV serialization for panels and fitted parameters.

All files are UTF-8 with a mandatory header row, comma separators, '.' decimal
separator and '\n' line endings; floats are written in shortest round-trip
form, so rewriting a parsed file reproduces it byte for byte.
"""

from __future__ import annotations

import numpy as np

from .errors import DataFormatError
from .panel import MISSING, CovariatePanel, ResponsePanel
from .params import (CovariateLatentParams, DifferenceTransitions, LatentChainParams,
                     MeasurementParams, PairwiseTransitions)


def fmt(value) -> str:
    """Shortest decimal string that round-trips to the same float."""
    return repr(float(value))


def _write_table(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _read_table(path, expected_header=None):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DataFormatError(f"{path}: empty file")
    header = lines[0].split(",")
    if expected_header is not None and header[:len(expected_header)] != list(expected_header):
        raise DataFormatError(f"{path}: expected header starting with "
                              f"{','.join(expected_header)}", line=1)
    return header, lines[1:]


def write_responses(path, panel: ResponsePanel) -> None:
    header = ["unit_id", "time"] + [f"item_{j + 1}" for j in range(panel.r)]

    def rows():
        for i in range(panel.n):
            for t in range(panel.T):
                vals = panel.y[i, t]
                yield [str(i + 1), str(t + 1)] + ["" if v == MISSING else str(int(v))
                                                  for v in vals]
    _write_table(path, header, rows())


def read_responses(path, cats=None) -> ResponsePanel:
    """Parse a long-format response file.

    Category counts default to one plus the highest observed code per item
    (at least 2); pass ``cats`` to override.
    """
    header, lines = _read_table(path, ["unit_id", "time"])
    r = len(header) - 2
    if r < 1:
        raise DataFormatError(f"{path}: no item columns", line=1)
    records = {}
    times = set()
    units = []
    for ln, line in enumerate(lines, start=2):
        f = line.split(",")
        if len(f) != r + 2:
            raise DataFormatError(f"{path}: expected {r + 2} fields, got {len(f)}", line=ln)
        try:
            unit, t = int(f[0]), int(f[1])
            vals = [MISSING if v == "" else int(v) for v in f[2:]]
        except ValueError as exc:
            raise DataFormatError(f"{path}: {exc}", line=ln) from None
        if unit not in records:
            records[unit] = {}
            units.append(unit)
        if t in records[unit]:
            raise DataFormatError(f"{path}: duplicate (unit, time) record", line=ln)
        records[unit][t] = vals
        times.add(t)
    T = len(times)
    if sorted(times) != list(range(1, T + 1)):
        raise DataFormatError(f"{path}: occasions must be 1..T without gaps")
    y = np.empty((len(units), T, r), dtype=np.int16)
    for i, unit in enumerate(units):
        if sorted(records[unit]) != list(range(1, T + 1)):
            raise DataFormatError(f"{path}: unit {unit} does not cover occasions 1..{T}")
        for t in range(T):
            y[i, t] = records[unit][t + 1]
    if cats is None:
        cats = np.maximum(np.where(y == MISSING, -1, y).max(axis=(0, 1)) + 1, 2)
    return ResponsePanel(y=y, cats=np.asarray(cats))


def write_covariates(path, covs: CovariatePanel) -> None:
    """Shared-design long format: occasion 1 rows feed the initial model and
    occasions 2..T the transition model (requires q1 == q2)."""
    if covs.q1 != covs.q2:
        raise ValueError("the covariates file format assumes a shared design (q1 == q2)")
    q = covs.q1
    header = ["unit_id", "time"] + [f"x_{a + 1}" for a in range(q)]
    T = covs.x_trans.shape[1] + 1

    def rows():
        for i in range(covs.n):
            yield [str(i + 1), "1"] + [fmt(v) for v in covs.x_init[i]]
            for t in range(1, T):
                yield [str(i + 1), str(t + 1)] + [fmt(v) for v in covs.x_trans[i, t - 1]]
    _write_table(path, header, rows())


def read_covariates(path) -> CovariatePanel:
    header, lines = _read_table(path, ["unit_id", "time"])
    q = len(header) - 2
    records = {}
    units = []
    times = set()
    for ln, line in enumerate(lines, start=2):
        f = line.split(",")
        if len(f) != q + 2:
            raise DataFormatError(f"{path}: expected {q + 2} fields, got {len(f)}", line=ln)
        try:
            unit, t = int(f[0]), int(f[1])
            vals = [float(v) for v in f[2:]]
        except ValueError as exc:
            raise DataFormatError(f"{path}: {exc}", line=ln) from None
        records.setdefault(unit, {})
        if unit not in units:
            units.append(unit)
        records[unit][t] = vals
        times.add(t)
    T = len(times)
    if sorted(times) != list(range(1, T + 1)):
        raise DataFormatError(f"{path}: occasions must be 1..T without gaps")
    x_init = np.empty((len(units), q))
    x_trans = np.empty((len(units), T - 1, q))
    for i, unit in enumerate(units):
        if sorted(records[unit]) != list(range(1, T + 1)):
            raise DataFormatError(f"{path}: unit {unit} does not cover occasions 1..{T}")
        x_init[i] = records[unit][1]
        for t in range(1, T):
            x_trans[i, t - 1] = records[unit][t + 1]
    return CovariatePanel(x_init=x_init, x_trans=x_trans)


def write_states(path, states: np.ndarray) -> None:
    header = ["unit_id", "time", "state"]

    def rows():
        for i in range(states.shape[0]):
            for t in range(states.shape[1]):
                yield [str(i + 1), str(t + 1), str(int(states[i, t]) + 1)]
    _write_table(path, header, rows())


def write_phi(path, meas: MeasurementParams) -> None:
    header = ["item", "category"] + [f"state_{u + 1}" for u in range(meas.k)]

    def rows():
        for j, p in enumerate(meas.phi):
            for y in range(p.shape[0]):
                yield [str(j + 1), str(y)] + [fmt(v) for v in p[y]]
    _write_table(path, header, rows())


def read_phi(path) -> MeasurementParams:
    header, lines = _read_table(path, ["item", "category"])
    k = len(header) - 2
    tables = {}
    for ln, line in enumerate(lines, start=2):
        f = line.split(",")
        if len(f) != k + 2:
            raise DataFormatError(f"{path}: expected {k + 2} fields, got {len(f)}", line=ln)
        try:
            j, y = int(f[0]), int(f[1])
            vals = [float(v) for v in f[2:]]
        except ValueError as exc:
            raise DataFormatError(f"{path}: {exc}", line=ln) from None
        tables.setdefault(j, {})[y] = vals
    phi = []
    for j in sorted(tables):
        cat_map = tables[j]
        table = np.array([cat_map[y] for y in sorted(cat_map)])
        phi.append(table)
    return MeasurementParams(phi=tuple(phi), k=k)


def write_chain(pi_path, Pi_path, chain: LatentChainParams) -> None:
    k = chain.k
    _write_table(pi_path, [f"state_{u + 1}" for u in range(k)],
                 [[fmt(v) for v in chain.pi]])
    _write_table(Pi_path, ["from"] + [f"state_{u + 1}" for u in range(k)],
                 ([str(u + 1)] + [fmt(v) for v in chain.Pi[u]] for u in range(k)))


def write_beta(path, beta: np.ndarray) -> None:
    q1 = beta.shape[0] - 1
    k = beta.shape[1] + 1
    header = ["term"] + [f"state_{u + 1}" for u in range(1, k)]
    terms = ["intercept"] + [f"x_{a + 1}" for a in range(q1)]
    _write_table(path, header,
                 ([terms[i]] + [fmt(v) for v in beta[i]] for i in range(1 + q1)))


def write_gamma(path, trans, slopes_path=None) -> None:
    k = trans.k
    if isinstance(trans, PairwiseTransitions):
        header = ["from", "to", "intercept"] + [f"x_{a + 1}" for a in range(trans.q2)]
        rows = ([str(u + 1), str(v + 1)] + [fmt(c) for c in trans.coef[u, v]]
                for u in range(k) for v in range(k) if u != v)
        _write_table(path, header, rows)
    elif isinstance(trans, DifferenceTransitions):
        _write_table(path, ["from", "to", "intercept"],
                     ([str(u + 1), str(v + 1), fmt(trans.intercepts[u, v])]
                      for u in range(k) for v in range(k) if u != v))
        if slopes_path is None:
            raise ValueError("the shared-slope layout needs a slopes file path")
        _write_table(slopes_path, ["state"] + [f"x_{a + 1}" for a in range(trans.q2)],
                     ([str(u + 1)] + [fmt(v) for v in trans.slopes[u]] for u in range(k)))
    else:
        raise TypeError(f"unsupported transition block: {type(trans).__name__}")


def read_sections(path):
    """Section assignment file: columns item, section. Returns
    (section_map 0-based per item, ordered section names)."""
    header, lines = _read_table(path, ["item", "section"])
    items = {}
    names = []
    for ln, line in enumerate(lines, start=2):
        f = line.split(",")
        if len(f) != 2:
            raise DataFormatError(f"{path}: expected 2 fields", line=ln)
        try:
            j = int(f[0])
        except ValueError:
            raise DataFormatError(f"{path}: bad item index {f[0]!r}", line=ln) from None
        if f[1] not in names:
            names.append(f[1])
        items[j] = names.index(f[1])
    r = max(items) if items else 0
    if sorted(items) != list(range(1, r + 1)):
        raise DataFormatError(f"{path}: items must cover 1..{r} exactly once")
    return np.array([items[j] for j in range(1, r + 1)]), names
