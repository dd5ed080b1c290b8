"""
lorasweep - alpha-weighted checkpoint merges and a prompt-robustness harness.

lorasweep blends a base checkpoint with its fine-tune (or with a low-rank
adapter, rescaled) at any coefficient alpha, working directly on tensor
checkpoint files. The harness then prompts each served merge, judges the
free-text answers by edit distance and reports how accuracy moves with alpha.

Key Features:
- Checkpoint container reader/writer with F32, F16 and BF16 codecs
- Interpolation and adapter rescaling, exact at alpha 0 and 1
- Alpha sweeps written with a digest manifest
- Open, combined, closed-set and few-shot prompt templates
- Endpoint runner with retry and resumable run files
- Edit-distance judging into correct, in-set, out-of-set and abstention
- CSV and SVG reports with matching numbers

Quick Start:
    from lorasweep import MergeMode, MergeSpec, sweep

    spec = MergeSpec(MergeMode.LORA_RESCALE, alphas=(0.0, 0.5, 1.0))
    sweep("base.safetensors", "adapter/", spec, "sweep")

    from lorasweep import LabelSet, TaskKind, judge

    labels = LabelSet(("Walrus", "Frasers Dolphin"), TaskKind.COMMON)
    judge("Fraser's Dolphin", "Frasers Dolphin", labels).category
"""

from .harness import EndpointClient, EvalSample, PromptKind, render_prompt, run
from .merging import (
    MergeMode,
    MergeSpec,
    apply_lora,
    interpolate,
    load_adapter,
    materialize,
    sweep,
)
from .reporting import SweepSummary, build_report
from .scoring import ErrorCategory, LabelSet, TaskKind, aggregate, judge, levenshtein
from .security.exceptions import CheckpointError, LoraSweepError, MergeError
from .tensorstore import (
    CheckpointReader,
    DType,
    Tensor,
    load_checkpoint,
    save_checkpoint,
)
from .utils.config import ToolkitConfig

__version__ = "0.1.0"
__author__ = "Jost Brandstetter <brandstetterjost@gmail.com>"
__all__ = [
    # Checkpoint files
    "CheckpointReader",
    "DType",
    "Tensor",
    "load_checkpoint",
    "save_checkpoint",
    # Merging
    "MergeMode",
    "MergeSpec",
    "apply_lora",
    "interpolate",
    "load_adapter",
    "materialize",
    "sweep",
    # Scoring
    "ErrorCategory",
    "LabelSet",
    "TaskKind",
    "aggregate",
    "judge",
    "levenshtein",
    # Harness
    "EndpointClient",
    "EvalSample",
    "PromptKind",
    "render_prompt",
    "run",
    # Reporting
    "SweepSummary",
    "build_report",
    # Configuration and errors
    "ToolkitConfig",
    "CheckpointError",
    "LoraSweepError",
    "MergeError",
]
