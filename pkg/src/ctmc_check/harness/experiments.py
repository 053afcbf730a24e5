"""Transient sweeps, steady-state tables, reward curves and knockout scans."""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence, TypeVar

import numpy as np

from ..checker import CheckConfig, ModelChecker
from ..compose import Ctmc, build_state_space
from ..errors import CtmcCheckError, ExperimentError
from ..lang import ast as A
from ..lang import format_expr, parse_expression, parse_property
from .variants import ReactionIndex, make_variant

T = TypeVar("T")
R = TypeVar("R")

CSV_FLOAT = "%.12g"


def thread_count() -> int:
    raw = os.environ.get("CTMC_CHECK_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ExperimentError(f"CTMC_CHECK_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def ordered_map(fn: Callable[[T], R], items: Sequence[T], threads: Optional[int] = None) -> list[R]:
    """``map`` that may run on a thread pool; results keep input order."""
    threads = thread_count() if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass
class Variant:
    name: str
    model: A.ModelAst
    constants: Mapping[str, object] = field(default_factory=dict)

    def build(self, max_states: int = 10_000_000) -> Ctmc:
        try:
            return build_state_space(self.model, self.constants, max_states=max_states, name=self.name)
        except CtmcCheckError as exc:
            raise ExperimentError(f"variant {self.name}: {exc}") from exc


def check_time_grid(times: Iterable[float]) -> list[float]:
    grid = [float(t) for t in times]
    if not grid:
        raise ExperimentError("time grid is empty")
    if any(not math.isfinite(t) or t < 0 for t in grid):
        raise ExperimentError("time grid entries must be finite and non-negative")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ExperimentError("time grid must be strictly increasing")
    return grid


def _fmt(v: float) -> str:
    return CSV_FLOAT % v


@dataclass
class Series:
    """A table with one row per time instant and one value column per series."""

    times: list[float]
    columns: list[str]
    values: np.ndarray  # shape (len(times), len(columns))
    time_header: str = "t"

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow([self.time_header, *self.columns])
            for t, row in zip(self.times, self.values):
                w.writerow([_fmt(t), *(_fmt(v) for v in row)])

    def to_json(self) -> dict:
        return {"times": self.times, "columns": self.columns,
                "values": [[float(v) for v in row] for row in self.values]}


def time_template(template: str, t: float) -> str:
    """Substitute ``{t}`` in a property template."""
    return template.replace("{t}", repr(float(t)))


def sweep(variants: Sequence[Variant], template: str, times: Iterable[float],
          config: CheckConfig = CheckConfig(), threads: Optional[int] = None,
          max_states: int = 10_000_000) -> Series:
    """Evaluate a ``=?`` property template at each instant for each variant."""
    return sweep_queries(variants, [template], times, config, threads, max_states)[0]


def sweep_queries(variants: Sequence[Variant], templates: Sequence[str], times: Iterable[float],
                  config: CheckConfig = CheckConfig(), threads: Optional[int] = None,
                  max_states: int = 10_000_000) -> list[Series]:
    """One series per template; each variant is built once."""
    grid = check_time_grid(times)
    for template in templates:
        if "{t}" not in template:
            raise ExperimentError(f"query template {template!r} has no {{t}} placeholder")
        if not _is_query(parse_property(time_template(template, grid[0]))):
            raise ExperimentError(f"sweep query {template!r} is not quantitative (=?)")

    def run(variant: Variant) -> np.ndarray:
        checker = ModelChecker(variant.build(max_states), config)
        out = np.empty((len(templates), len(grid)))
        for q, template in enumerate(templates):
            for i, t in enumerate(grid):
                try:
                    out[q, i] = checker.check(time_template(template, t)).value
                except CtmcCheckError as exc:
                    raise ExperimentError(f"variant {variant.name}: {exc}") from exc
        return out

    per_variant = ordered_map(run, list(variants), threads)
    names = [v.name for v in variants]
    return [Series(grid, names, np.column_stack([v[q] for v in per_variant]) if per_variant
                   else np.empty((len(grid), 0)))
            for q in range(len(templates))]


def _is_query(f) -> bool:
    bound = getattr(f, "bound", None)
    return bound is not None and bound.is_query


def sweep_transient(variants: Sequence[Variant], expr, times: Iterable[float],
                    config: CheckConfig = CheckConfig(), threads: Optional[int] = None) -> Series:
    """``P=? [ F[t,t] expr ]`` for every variant and instant."""
    text = expr if isinstance(expr, str) else format_expr(expr)
    parse_expression(text)
    return sweep(variants, "P=? [ F[{t},{t}] " + text + " ]", times, config, threads)


@dataclass
class SteadyRow:
    molecule: str
    value: Optional[float]
    error: Optional[str] = None


@dataclass
class SteadyTable:
    rows: list[SteadyRow]

    def value(self, molecule: str) -> float:
        for r in self.rows:
            if r.molecule == molecule:
                if r.value is None:
                    raise ExperimentError(f"{molecule}: {r.error}")
                return r.value
        raise KeyError(molecule)

    def write_csv(self, path) -> None:
        """Display table: probabilities rounded to two decimals."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["molecule", "probability", "error"])
            for r in self.rows:
                w.writerow([r.molecule, "" if r.value is None else "%.2f" % r.value, r.error or ""])

    def to_json(self) -> dict:
        return {"rows": [{"molecule": r.molecule, "probability": r.value, "error": r.error}
                         for r in self.rows]}

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")


def steady_state_table(variant: Variant, molecules: Sequence[str],
                       config: CheckConfig = CheckConfig()) -> SteadyTable:
    """``S=? [ m=1 ]`` per molecule; failures are reported in the row."""
    checker = ModelChecker(variant.build(), config)
    rows = []
    for mol in molecules:
        try:
            rows.append(SteadyRow(mol, checker.check(f"S=? [ {mol}=1 ]").value))
        except CtmcCheckError as exc:
            rows.append(SteadyRow(mol, None, f"{exc.kind}: {exc}"))
    return SteadyTable(rows)


def reward_curves(variant: Variant, blocks: Sequence[str], times: Iterable[float],
                  config: CheckConfig = CheckConfig()) -> Series:
    """``R{b}=? [ C<=t ]`` for each reward block across the grid."""
    grid = check_time_grid(times)
    known = {r.name for r in variant.model.rewards}
    for b in blocks:
        if b not in known:
            raise ExperimentError(f"variant {variant.name}: unknown reward structure {b!r}")
    checker = ModelChecker(variant.build(), config)
    values = np.empty((len(grid), len(blocks)))
    for j, b in enumerate(blocks):
        for i, t in enumerate(grid):
            values[i, j] = checker.check(f'R{{"{b}"}}=? [ C<={float(t)!r} ]').value
    return Series(grid, list(blocks), values)


QUADRANT_HELP = {
    "origin": "the reference point itself (or indistinguishable from it)",
    "1": "both values decrease",
    "2": "first value decreases, second increases",
    "3": "both values increase",
    "4": "first value increases, second decreases",
    "line-a": "first value unchanged",
    "line-b": "second value unchanged",
}


def quadrant(da: float, db: float, tol: float) -> str:
    a0, b0 = abs(da) <= tol, abs(db) <= tol
    if a0 and b0:
        return "origin"
    if a0:
        return "line-a"
    if b0:
        return "line-b"
    if da < 0:
        return "1" if db < 0 else "2"
    return "3" if db > 0 else "4"


@dataclass
class ScanRow:
    reaction: str
    name: str
    a: Optional[float]
    b: Optional[float]
    quadrant: str
    error: Optional[str] = None


@dataclass
class KnockoutScan:
    formula_a: str
    formula_b: str
    rows: list[ScanRow]

    HEADER = ("reactionId", "removedName", "valueA", "valueB", "quadrant", "error")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(self.HEADER)
            for r in self.rows:
                w.writerow([r.reaction, r.name,
                            "" if r.a is None else _fmt(r.a),
                            "" if r.b is None else _fmt(r.b),
                            r.quadrant, r.error or ""])

    def to_json(self) -> dict:
        return {"formulaA": self.formula_a, "formulaB": self.formula_b,
                "rows": [{"reactionId": r.reaction, "removedName": r.name, "valueA": r.a,
                          "valueB": r.b, "quadrant": r.quadrant, "error": r.error}
                         for r in self.rows]}


WILDTYPE = "wildtype"
ERROR_MARK = "error"


def _steady_query(formula: str) -> str:
    text = formula.strip()
    if text.startswith(("S", "P", "R")) and "=?" in text:
        return text
    return f"S=? [ {text} ]"


def knockout_scan(model: A.ModelAst, formula_a: str, formula_b: str,
                  constants: Optional[Mapping[str, object]] = None,
                  config: CheckConfig = CheckConfig(), threads: Optional[int] = None,
                  tolerance: float = 1e-6, max_states: int = 10_000_000) -> KnockoutScan:
    """Wildtype plus one variant per reaction, each placed against the wildtype point.

    ``formula_a``/``formula_b`` are state formulas (wrapped in ``S=?``) or
    complete ``=?`` queries.
    """
    qa, qb = _steady_query(formula_a), _steady_query(formula_b)
    parse_property(qa, model)
    parse_property(qb, model)
    index = ReactionIndex.from_model(model)
    if not len(index):
        raise ExperimentError("model has no //@reaction annotations to scan")
    constants = dict(constants or {})
    jobs = [(WILDTYPE, "WildType", model)]
    for rid in index.ids:
        jobs.append((rid, index.name(rid), make_variant(model, [rid], index)))

    def run(job) -> ScanRow:
        rid, name, ast = job
        try:
            ctmc = build_state_space(ast, constants, max_states=max_states, name=name)
            checker = ModelChecker(ctmc, config)
            return ScanRow(rid, name, checker.check(qa).value, checker.check(qb).value, "")
        except CtmcCheckError as exc:
            return ScanRow(rid, name, None, None, ERROR_MARK, f"{exc.kind}: {exc}")

    rows = ordered_map(run, jobs, threads)
    wild = rows[0]
    if wild.error:
        raise ExperimentError(f"wildtype model failed: {wild.error}")
    wild.quadrant = "origin"
    for r in rows[1:]:
        if r.error is None:
            r.quadrant = quadrant(r.a - wild.a, r.b - wild.b, tolerance)
    return KnockoutScan(qa, qb, rows)
