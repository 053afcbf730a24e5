"""Declarative experiment files (TOML).

Example::

    model = "pdgf.gcm"
    rates = "pdgf.rates"          # optional
    times = [0, 1, 2, 5, 10]      # or {start = 0, stop = 20, step = 1}
    queries = ["P=? [ F[{t},{t}] SHP2=1 ]"]
    outputs = ["shp2.csv"]

    [variant.WildType]
    remove = []

    [variant.SHP2Mutant]
    remove = [7]                  # reaction ids, or "label:bk5"

Relative paths are resolved against the directory of the experiment file.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..checker import CheckConfig
from ..errors import ExperimentError
from ..lang import ModelAst, load_model, load_rates
from .experiments import Series, Variant, check_time_grid, sweep_queries
from .variants import Edit, ReactionIndex, RemoveLabel, RemoveReaction, make_variant, parse_edit


@dataclass
class ExperimentSpec:
    model: Path
    times: list[float]
    queries: list[str]
    variants: dict[str, list[Edit]] = field(default_factory=lambda: {"WildType": []})
    outputs: list[Path] = field(default_factory=list)
    rates: Optional[Path] = None
    constants: dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        self.times = check_time_grid(self.times)
        if not self.queries:
            raise ExperimentError("experiment has no queries")
        if self.outputs and len(self.outputs) != len(self.queries):
            raise ExperimentError(
                f"{len(self.outputs)} outputs given for {len(self.queries)} queries")
        if not self.variants:
            raise ExperimentError("experiment has no variants")

    def with_overrides(self, **changes: Any) -> "ExperimentSpec":
        """Copy with the non-``None`` fields replaced (validated again)."""
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


def _time_grid(raw) -> list[float]:
    if isinstance(raw, Mapping):
        try:
            start, stop, step = float(raw["start"]), float(raw["stop"]), float(raw["step"])
        except KeyError as exc:
            raise ExperimentError(f"time range needs start, stop and step (missing {exc})") from None
        if step <= 0:
            raise ExperimentError("time step must be positive")
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [start + i * step for i in range(n)]
    if isinstance(raw, list):
        return [float(x) for x in raw]
    raise ExperimentError("times must be a list or a {start, stop, step} table")


def load_experiment(path) -> ExperimentSpec:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ExperimentError(f"{path}: {exc}") from None
    return experiment_from_dict(doc, path.parent)


def experiment_from_dict(doc: Mapping[str, Any], base: Path = Path(".")) -> ExperimentSpec:
    known = {"model", "rates", "times", "queries", "outputs", "variant", "constants"}
    unknown = set(doc) - known
    if unknown:
        raise ExperimentError(f"unknown experiment keys: {', '.join(sorted(unknown))}")
    if "model" not in doc:
        raise ExperimentError("experiment needs a 'model' path")
    variants: dict[str, list[Edit]] = {}
    for name, body in (doc.get("variant") or {"WildType": {}}).items():
        if not isinstance(body, Mapping):
            raise ExperimentError(f"variant {name!r} must be a table")
        variants[name] = [parse_edit(e) for e in body.get("remove", [])]
    queries = doc.get("queries", [])
    if isinstance(queries, str):
        queries = [queries]
    return ExperimentSpec(
        model=base / doc["model"],
        rates=base / doc["rates"] if "rates" in doc else None,
        times=_time_grid(doc.get("times", [])),
        queries=list(queries),
        variants=variants,
        outputs=[base / o for o in doc.get("outputs", [])],
        constants=dict(doc.get("constants", {})),
    )


def experiment_constants(spec: ExperimentSpec) -> dict[str, object]:
    constants = dict(load_rates(spec.rates)) if spec.rates else {}
    constants.update(spec.constants)
    return constants


def resolve_variants(model: ModelAst, spec: ExperimentSpec,
                     constants: Mapping[str, object]) -> list[Variant]:
    index = ReactionIndex.from_model(model)
    out = []
    for name, edits in spec.variants.items():
        for e in edits:
            if isinstance(e, RemoveReaction) and e.reaction not in index:
                raise ExperimentError(f"variant {name}: unknown reaction id {e.reaction!r}")
            if isinstance(e, RemoveLabel) and e.label not in model.actions:
                raise ExperimentError(f"variant {name}: unknown action label {e.label!r}")
        out.append(Variant(name, make_variant(model, edits, index), constants))
    return out


def run_experiment(spec: ExperimentSpec, config: CheckConfig = CheckConfig(),
                   threads: Optional[int] = None, max_states: int = 10_000_000) -> list[Series]:
    """One series per query; written to the matching output path when given."""
    model = load_model(spec.model)
    constants = experiment_constants(spec)
    variants = resolve_variants(model, spec, constants)
    results = sweep_queries(variants, spec.queries, spec.times, config, threads, max_states)
    for series, out in zip(results, spec.outputs):
        out.parent.mkdir(parents=True, exist_ok=True)
        series.write_csv(out)
    return results
