"""
Prompt harness: templates, few-shot pools, endpoint client and run files.
"""

from .client import Completion, EndpointClient
from .fewshot import FewShotSpec, PoolExample, load_pool, permute_examples
from .manifest import (
    EvalSample,
    RunRecord,
    export_for_scoring,
    load_manifest,
    load_run_file,
)
from .runner import RunSummary, run
from .templates import BUILTIN_TEMPLATES, PromptKind, PromptTemplate, render_prompt

__all__ = [
    "BUILTIN_TEMPLATES",
    "Completion",
    "EndpointClient",
    "EvalSample",
    "FewShotSpec",
    "PoolExample",
    "PromptKind",
    "PromptTemplate",
    "RunRecord",
    "RunSummary",
    "export_for_scoring",
    "load_manifest",
    "load_pool",
    "load_run_file",
    "permute_examples",
    "render_prompt",
    "run",
]
