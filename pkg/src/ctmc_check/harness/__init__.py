"""In-silico mutagenesis experiments: variants, sweeps, tables and scans."""

from importlib import resources
from pathlib import Path

from .experiments import (
    KnockoutScan, ScanRow, Series, SteadyRow, SteadyTable, Variant, check_time_grid,
    knockout_scan, quadrant, reward_curves, steady_state_table, sweep, sweep_queries,
    sweep_transient, thread_count,
)
from .spec import ExperimentSpec, experiment_from_dict, load_experiment, run_experiment
from .variants import (
    ReactionIndex, RemoveLabel, RemoveReaction, dangling_labels, make_variant, parse_edit,
)

PDGF_MOLECULES = ("PDGFR", "SHP2", "GabSOS", "cRaf", "PI3K", "PDK", "cCbl",
                  "Grb2SOS", "Ras", "MEK12", "PIP3", "Akt", "MTOR", "PPX")
PDGF_REWARDS = ("PDGFRactive", "SHP2active", "Rasactive", "MEK12active", "PIP3active",
                "Aktactive")
# reaction ids of the named mutants in the shipped model
PDGF_MUTANTS = {"SHP2Mutant": "7", "PI3KMutant": "8", "cCblMutant": "6",
                "RasPI3KMutant": "26", "AktcRafMutant": "31"}


def model_path(name: str = "pdgf.gcm") -> Path:
    """Path of a model file shipped with the package."""
    return Path(str(resources.files("ctmc_check") / "models" / name))


def pdgf_variant(mutant: str = "WildType") -> Variant:
    from ..lang import load_model, load_rates

    model = load_model(model_path("pdgf.gcm"))
    rates = load_rates(model_path("pdgf.rates"))
    if mutant != "WildType":
        try:
            rid = PDGF_MUTANTS[mutant]
        except KeyError:
            raise KeyError(f"unknown mutant {mutant!r}; known: {', '.join(PDGF_MUTANTS)}") from None
        model = make_variant(model, [rid])
    return Variant(mutant, model, rates)


__all__ = [
    "KnockoutScan", "ScanRow", "Series", "SteadyRow", "SteadyTable", "Variant",
    "check_time_grid", "knockout_scan", "quadrant", "reward_curves", "steady_state_table",
    "sweep", "sweep_queries", "sweep_transient", "thread_count", "ExperimentSpec",
    "experiment_from_dict",
    "load_experiment", "run_experiment", "ReactionIndex", "RemoveLabel", "RemoveReaction",
    "dangling_labels", "make_variant", "parse_edit", "PDGF_MOLECULES", "PDGF_REWARDS",
    "PDGF_MUTANTS", "model_path", "pdgf_variant",
]
