"""Discrete demand model: tables, validation, statistics, estimation, file I/O.

A scenario table lists the finitely many joint outcomes of one service
period: the demand vector drawn, its probability mass, the provider's
starting (baseline) price for that demand, and the customer revenue it
generates.  Everything downstream prices against this table.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyHistory,
    InconsistentDuplicate,
    InvalidScenarioValue,
    NegativeMass,
    NonNormalizedPmf,
    ScenarioParseError,
    ValidationError,
)

# Masses are renormalized when their sum is off by at most this (relative);
# a larger deviation is rejected as a malformed pmf.
MASS_RENORMALIZE_RTOL = 1e-6
# Sums already this close to 1 are left untouched, which keeps repeated
# validation of the same table bit-for-bit stable.
MASS_SKIP_RTOL = 1e-12
# Invariant on a constructed table.
MASS_SUM_RTOL = 1e-9

DEFAULT_RHO_SET = (1.5, 2.0, 3.0)
DEFAULT_FAIRNESS_RTOL = 1e-9


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(np.asarray(a, dtype=float))
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ScenarioTable:
    """Validated demand model over N scenarios and m resources.

    Attributes:
        demands: (N, m) array, one demand vector per row, coordinates >= 0.
        mass: (N,) array of strictly positive masses summing to 1.
        starting_price: (N,) array of non-negative baseline charges.
        revenue: (N,) array of per-scenario customer revenue (any sign).

    Rows are assumed pairwise distinct in demand; use ``validate_table`` to
    merge raw records before constructing directly from arrays.
    """

    demands: np.ndarray
    mass: np.ndarray
    starting_price: np.ndarray
    revenue: np.ndarray

    def __post_init__(self):
        demands = np.asarray(self.demands, dtype=float)
        if demands.ndim != 2 or demands.shape[0] < 1 or demands.shape[1] < 1:
            raise DimensionMismatch(
                f"demands must be a (N, m) array with N, m >= 1, "
                f"got shape {demands.shape}"
            )
        n = demands.shape[0]
        mass = np.asarray(self.mass, dtype=float)
        price = np.asarray(self.starting_price, dtype=float)
        revenue = np.asarray(self.revenue, dtype=float)
        for name, arr in (("mass", mass), ("starting_price", price),
                          ("revenue", revenue)):
            if arr.shape != (n,):
                raise DimensionMismatch(
                    f"{name} must have shape ({n},), got {arr.shape}"
                )
        if not np.isfinite(demands).all() or (demands < 0).any():
            raise InvalidScenarioValue(
                "demand coordinates must be finite and non-negative"
            )
        if not np.isfinite(mass).all():
            raise InvalidScenarioValue("masses must be finite")
        if (mass < 0).any():
            raise NegativeMass("scenario masses must not be negative")
        if (mass == 0).any():
            raise InvalidScenarioValue(
                "zero-mass rows must be dropped before table construction"
            )
        total = float(mass.sum())
        if abs(total - 1.0) > MASS_SUM_RTOL:
            raise NonNormalizedPmf(total)
        if not np.isfinite(price).all() or (price < 0).any():
            raise InvalidScenarioValue(
                "starting prices must be finite and non-negative"
            )
        if not np.isfinite(revenue).all():
            raise InvalidScenarioValue("revenues must be finite")
        object.__setattr__(self, "demands", _readonly(demands))
        object.__setattr__(self, "mass", _readonly(mass))
        object.__setattr__(self, "starting_price", _readonly(price))
        object.__setattr__(self, "revenue", _readonly(revenue))

    @property
    def n_rows(self) -> int:
        return self.demands.shape[0]

    @property
    def n_resources(self) -> int:
        return self.demands.shape[1]

    def homogeneous_demands(self) -> np.ndarray:
        """Demand matrix with a leading all-ones coordinate, shape (N, m+1)."""
        ones = np.ones((self.n_rows, 1))
        return np.hstack([ones, self.demands])

    def to_rows(self) -> list[tuple[tuple[float, ...], float, float, float]]:
        """Table content as raw (demand, mass, starting_price, revenue) rows."""
        return [
            (tuple(self.demands[k]), float(self.mass[k]),
             float(self.starting_price[k]), float(self.revenue[k]))
            for k in range(self.n_rows)
        ]


@dataclass(frozen=True)
class PricingReport:
    """Profit statistics of a per-row price vector against a table.

    ``rho_moments`` maps each requested exponent rho > 1 to the expected
    absolute deviation moment E[|profit - mean profit|^rho]; ``variance`` is
    always the rho = 2 entry.
    """

    expected_price: float
    expected_profit_mu: float
    per_row_profit: np.ndarray
    per_row_deviation_h: np.ndarray
    variance: float
    rho_moments: dict[float, float]
    min_profit: float

    def __post_init__(self):
        object.__setattr__(self, "per_row_profit",
                           _readonly(self.per_row_profit))
        object.__setattr__(self, "per_row_deviation_h",
                           _readonly(self.per_row_deviation_h))

    def to_dict(self) -> dict:
        return {
            "expected_price": self.expected_price,
            "expected_profit_mu": self.expected_profit_mu,
            "variance": self.variance,
            "min_profit": self.min_profit,
            "rho_moments": {repr(r): v for r, v in
                            sorted(self.rho_moments.items())},
            "per_row_profit": [float(x) for x in self.per_row_profit],
            "per_row_deviation_h": [float(x) for x in
                                    self.per_row_deviation_h],
        }


@dataclass(frozen=True)
class EmpiricalPmf:
    """Demand pmf estimated from a history, in first-appearance order."""

    demands: np.ndarray
    mass: np.ndarray
    counts: np.ndarray
    n_observations: int

    def __post_init__(self):
        object.__setattr__(self, "demands", _readonly(self.demands))
        object.__setattr__(self, "mass", _readonly(self.mass))
        counts = np.ascontiguousarray(np.asarray(self.counts, dtype=np.int64))
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)


RawRow = tuple[Sequence[float], float, float, float]


def validate_table(rows: Iterable[RawRow]) -> ScenarioTable:
    """Clean raw (demand, mass, starting_price, revenue) records into a table.

    Zero-mass rows are dropped.  Rows with identical demand vectors and
    identical price/revenue are merged by summing mass; identical demands
    with diverging price or revenue are rejected.  A mass total within
    ``MASS_RENORMALIZE_RTOL`` of 1 is renormalized, anything further off
    raises ``NonNormalizedPmf``.

    Raises:
        NegativeMass, DimensionMismatch, InconsistentDuplicate,
        NonNormalizedPmf, InvalidScenarioValue, ValidationError.
    """
    merged: dict[tuple[float, ...], list[float]] = {}
    order: list[tuple[float, ...]] = []
    m = None
    for row in rows:
        try:
            demand_raw, mass, price, revenue = row
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"malformed scenario row: {row!r}") from exc
        demand = tuple(float(x) for x in demand_raw)
        mass = float(mass)
        price = float(price)
        revenue = float(revenue)
        if m is None:
            m = len(demand)
            if m < 1:
                raise DimensionMismatch("demand vectors need >= 1 coordinate")
        elif len(demand) != m:
            raise DimensionMismatch(
                f"demand {demand!r} has {len(demand)} coordinates, "
                f"expected {m}"
            )
        if not all(np.isfinite(demand)) or any(x < 0 for x in demand):
            raise InvalidScenarioValue(
                f"demand coordinates must be finite and non-negative, "
                f"got {demand!r}"
            )
        if not np.isfinite(mass):
            raise InvalidScenarioValue(f"mass must be finite, got {mass!r}")
        if mass < 0:
            raise NegativeMass(f"negative mass {mass!r} for demand {demand!r}")
        if mass == 0.0:
            continue
        if demand in merged:
            entry = merged[demand]
            if entry[1] != price or entry[2] != revenue:
                raise InconsistentDuplicate(
                    f"demand {demand!r} repeats with diverging starting "
                    f"price or revenue"
                )
            entry[0] += mass
        else:
            merged[demand] = [mass, price, revenue]
            order.append(demand)
    if not order:
        raise ValidationError("scenario table needs at least one row "
                              "with positive mass")
    demands = np.array(order, dtype=float)
    mass_arr = np.array([merged[d][0] for d in order])
    price_arr = np.array([merged[d][1] for d in order])
    revenue_arr = np.array([merged[d][2] for d in order])
    total = float(mass_arr.sum())
    if abs(total - 1.0) > MASS_RENORMALIZE_RTOL:
        raise NonNormalizedPmf(total)
    if abs(total - 1.0) > MASS_SKIP_RTOL:
        mass_arr = mass_arr / total
    return ScenarioTable(demands, mass_arr, price_arr, revenue_arr)


def expected_starting_price(table: ScenarioTable) -> float:
    """Expectation of the baseline charge, the fairness target."""
    return float(np.dot(table.mass, table.starting_price))


def _check_price_vector(table: ScenarioTable, price) -> np.ndarray:
    arr = np.asarray(price, dtype=float)
    if arr.shape != (table.n_rows,):
        raise DimensionMismatch(
            f"price vector must have shape ({table.n_rows},), "
            f"got {arr.shape}"
        )
    if not np.isfinite(arr).all():
        raise ValueError("price entries must be finite")
    return arr


def profit_stats(table: ScenarioTable, price,
                 rho_set: Sequence[float] = DEFAULT_RHO_SET) -> PricingReport:
    """Profit statistics of a per-row price vector.

    Args:
        table: the demand model.
        price: per-row prices, length N.
        rho_set: deviation-moment exponents, each > 1.  The exponent 2 is
            always included so ``variance`` matches ``rho_moments[2.0]``.

    Returns:
        A ``PricingReport``.

    Raises:
        DimensionMismatch: wrong price length.
        ValueError: non-finite prices or an exponent <= 1.
    """
    p = _check_price_vector(table, price)
    rhos = sorted({2.0} | {float(r) for r in rho_set})
    if any(r <= 1.0 for r in rhos):
        raise ValueError("deviation-moment exponents must be > 1")
    f = table.mass
    profit = table.revenue - p
    mu = float(np.dot(f, profit))
    h = profit - mu
    variance = float(np.dot(f, h * h))
    abs_h = np.abs(h)
    moments = {}
    for r in rhos:
        if r == 2.0:
            moments[r] = variance
        else:
            moments[r] = float(np.dot(f, abs_h ** r))
    return PricingReport(
        expected_price=float(np.dot(f, p)),
        expected_profit_mu=mu,
        per_row_profit=profit,
        per_row_deviation_h=h,
        variance=variance,
        rho_moments=moments,
        min_profit=float(profit.min()),
    )


def is_fair(table: ScenarioTable, price,
            tolerance: float = DEFAULT_FAIRNESS_RTOL) -> bool:
    """True when E[price] matches E[starting price] within tolerance.

    The comparison is relative to max(1, expected starting price).
    """
    p = _check_price_vector(table, price)
    target = expected_starting_price(table)
    achieved = float(np.dot(table.mass, p))
    return abs(achieved - target) <= tolerance * max(1.0, target)


def is_nonnegative(price) -> bool:
    """True when every price entry is >= 0, compared exactly."""
    arr = np.asarray(price, dtype=float)
    return bool((arr >= 0.0).all())


def estimate_pmf(history) -> EmpiricalPmf:
    """Empirical demand pmf from a sequence of observed demand vectors.

    Masses are count/total, so they sum to 1 up to accumulated rounding.
    Distinct demands keep their first-appearance order, which makes the
    estimate deterministic for a given history.

    Raises:
        EmptyHistory: no observations.
        DimensionMismatch: observations of diverging dimension.
        InvalidScenarioValue: non-finite or negative coordinates.
    """
    rows = [tuple(float(x) for x in obs) for obs in history]
    if not rows:
        raise EmptyHistory("demand history holds no observations")
    m = len(rows[0])
    if m < 1:
        raise DimensionMismatch("demand vectors need >= 1 coordinate")
    counts: dict[tuple[float, ...], int] = {}
    order: list[tuple[float, ...]] = []
    for obs in rows:
        if len(obs) != m:
            raise DimensionMismatch(
                f"observation {obs!r} has {len(obs)} coordinates, expected {m}"
            )
        if not all(np.isfinite(obs)) or any(x < 0 for x in obs):
            raise InvalidScenarioValue(
                f"demand coordinates must be finite and non-negative, "
                f"got {obs!r}"
            )
        if obs in counts:
            counts[obs] += 1
        else:
            counts[obs] = 1
            order.append(obs)
    total = len(rows)
    demand_arr = np.array(order, dtype=float)
    count_arr = np.array([counts[d] for d in order], dtype=np.int64)
    mass_arr = count_arr / float(total)
    return EmpiricalPmf(demands=demand_arr, mass=mass_arr, counts=count_arr,
                        n_observations=total)


# ---------------------------------------------------------------------------
# File formats.
#
# Scenario CSV:   header r_1,...,r_m,f,q,v then one row per scenario.
# Scenario JSON:  {"m": int, "rows": [{"r": [...], "f": .., "q": .., "v": ..}]}
# History CSV:    header r_1,...,r_m then one observed demand per row.
# ---------------------------------------------------------------------------

def _parse_float(text: str, path: str, line: int, column: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ScenarioParseError(
            f"could not parse {text!r} as a number",
            path=path, line=line, column=column,
        ) from None


def _read_csv_header(header: list[str], path: str,
                     trailing: tuple[str, ...]) -> int:
    """Check ``r_1..r_m`` + trailing names, return m."""
    names = [h.strip() for h in header]
    m = 0
    while m < len(names) and names[m] == f"r_{m + 1}":
        m += 1
    expected = [f"r_{i + 1}" for i in range(m)] + list(trailing)
    if m < 1 or names != expected:
        raise ScenarioParseError(
            f"bad header {names!r}; expected r_1,...,r_m"
            + ("," + ",".join(trailing) if trailing else ""),
            path=path, line=1, column=min(len(names), m + 1) or 1,
        )
    return m


def load_scenario_csv(path) -> ScenarioTable:
    """Load and validate a scenario table from CSV."""
    path = str(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ScenarioParseError("empty scenario file", path=path, line=1)
        m = _read_csv_header(header, path, ("f", "q", "v"))
        rows: list[RawRow] = []
        names = [f"r_{i + 1}" for i in range(m)] + ["f", "q", "v"]
        for lineno, record in enumerate(reader, start=2):
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) != m + 3:
                raise ScenarioParseError(
                    f"expected {m + 3} fields, got {len(record)}",
                    path=path, line=lineno,
                )
            values = [_parse_float(cell, path, lineno, names[i])
                      for i, cell in enumerate(record)]
            rows.append((values[:m], values[m], values[m + 1], values[m + 2]))
    if not rows:
        raise ScenarioParseError("scenario file has no data rows",
                                 path=path, line=1)
    return validate_table(rows)


def load_scenario_json(path) -> ScenarioTable:
    """Load and validate a scenario table from JSON."""
    path = str(path)
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioParseError(exc.msg, path=path, line=exc.lineno,
                                     column=exc.colno) from None
    if not isinstance(doc, dict):
        raise ScenarioParseError("top-level JSON value must be an object",
                                 path=path)
    m = doc.get("m")
    if not isinstance(m, int) or isinstance(m, bool) or m < 1:
        raise ScenarioParseError('"m" must be a positive integer', path=path)
    raw_rows = doc.get("rows")
    if not isinstance(raw_rows, list) or not raw_rows:
        raise ScenarioParseError('"rows" must be a non-empty list', path=path)
    rows: list[RawRow] = []
    for i, entry in enumerate(raw_rows):
        if not isinstance(entry, dict):
            raise ScenarioParseError(f"rows[{i}] must be an object", path=path)
        try:
            r = entry["r"]
            f = entry["f"]
            q = entry["q"]
            v = entry["v"]
        except KeyError as exc:
            raise ScenarioParseError(
                f"rows[{i}] is missing key {exc.args[0]!r}", path=path
            ) from None
        if not isinstance(r, list) or len(r) != m:
            raise ScenarioParseError(
                f'rows[{i}]["r"] must be a list of {m} numbers', path=path
            )
        try:
            rows.append((
                [float(x) for x in r], float(f), float(q), float(v)
            ))
        except (TypeError, ValueError):
            raise ScenarioParseError(
                f"rows[{i}] holds a non-numeric value", path=path
            ) from None
    return validate_table(rows)


def load_scenario_file(path) -> ScenarioTable:
    """Dispatch on file suffix: ``.json`` is JSON, anything else CSV."""
    if str(path).lower().endswith(".json"):
        return load_scenario_json(path)
    return load_scenario_csv(path)


def load_history_csv(path) -> np.ndarray:
    """Load a demand history (one observation per row) from CSV."""
    path = str(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ScenarioParseError("empty history file", path=path, line=1)
        m = _read_csv_header(header, path, ())
        rows = []
        for lineno, record in enumerate(reader, start=2):
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) != m:
                raise ScenarioParseError(
                    f"expected {m} fields, got {len(record)}",
                    path=path, line=lineno,
                )
            rows.append([_parse_float(cell, path, lineno, f"r_{i + 1}")
                         for i, cell in enumerate(record)])
    return np.array(rows, dtype=float).reshape(len(rows), m)


def format_pmf_csv(pmf: EmpiricalPmf) -> str:
    """Render an empirical pmf as CSV with header ``r_1,...,r_m,f``."""
    m = pmf.demands.shape[1]
    lines = [",".join([f"r_{i + 1}" for i in range(m)] + ["f"])]
    for k in range(pmf.demands.shape[0]):
        cells = [repr(float(x)) for x in pmf.demands[k]]
        cells.append(repr(float(pmf.mass[k])))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
