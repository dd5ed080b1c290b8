"""
Checkpoint merging: interpolation, low-rank rescaling and alpha sweeps.
"""

from .adapters import LoraAdapter, LoraPair, NameMapRule, load_adapter, match_names
from .merge import (
    EquivalenceRow,
    MergedCheckpoint,
    MergeMode,
    apply_lora,
    equivalence_report,
    interpolate,
    materialize,
)
from .sweep import MergeSpec, merge_checkpoint, sweep

__all__ = [
    "EquivalenceRow",
    "LoraAdapter",
    "LoraPair",
    "MergeMode",
    "MergeSpec",
    "MergedCheckpoint",
    "NameMapRule",
    "apply_lora",
    "equivalence_report",
    "interpolate",
    "load_adapter",
    "match_names",
    "materialize",
    "merge_checkpoint",
    "sweep",
]
