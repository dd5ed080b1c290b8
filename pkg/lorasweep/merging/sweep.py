"""
Alpha sweeps: one merged checkpoint per coefficient plus a manifest.

The manifest is line-delimited JSON, one ``{alpha, path, sha256, mode}``
object per written checkpoint, ``path`` relative to the sweep directory.
"""

import json
import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from ..security.exceptions import InvalidMergeSpec, OutputExists
from ..tensorstore.checkpoint import CheckpointReader
from ..tensorstore.dtypes import DType
from ..utils.config import DEFAULT_STRIP_PREFIXES, CheckpointLimits, format_alpha
from .adapters import NameMapRule, load_adapter
from .merge import MergedCheckpoint, MergeMode, apply_lora, check_alpha, interpolate

logger = logging.getLogger(__name__)

SWEEP_MANIFEST = "sweep_manifest.jsonl"
DEFAULT_OUTPUT_NAMING = "merged-alpha{alpha}.safetensors"


@dataclass(frozen=True)
class MergeSpec:
    """Declarative sweep plan."""

    mode: MergeMode
    alphas: tuple[float, ...]
    output_dtype: Optional[DType] = None
    output_naming: str = DEFAULT_OUTPUT_NAMING
    extrapolate: bool = False

    def __post_init__(self) -> None:
        if not self.alphas:
            raise InvalidMergeSpec("A sweep needs at least one alpha")
        for alpha in self.alphas:
            check_alpha(alpha, self.extrapolate)
        if any(b <= a for a, b in zip(self.alphas, self.alphas[1:])):
            raise InvalidMergeSpec(
                f"alphas must be strictly increasing, got {list(self.alphas)}"
            )
        if "{alpha}" not in self.output_naming:
            raise InvalidMergeSpec("output_naming needs an {alpha} placeholder")
        names = [self.output_name(alpha) for alpha in self.alphas]
        clashes = sorted({name for name in names if names.count(name) > 1})
        if clashes:
            raise InvalidMergeSpec(
                f"Several alphas map to the same output: {', '.join(clashes)}"
            )

    def output_name(self, alpha: float) -> str:
        return self.output_naming.replace("{alpha}", format_alpha(alpha))


@dataclass(frozen=True)
class SweepEntry:
    alpha: float
    path: Path
    sha256: str
    mode: MergeMode

    def to_dict(self, root: Path) -> dict[str, object]:
        return {
            "alpha": self.alpha,
            "path": self.path.relative_to(root).as_posix(),
            "sha256": self.sha256,
            "mode": self.mode.value,
        }


def merge_checkpoint(
    base: CheckpointReader,
    other: Union[str, Path],
    mode: MergeMode,
    alpha: float,
    output_dtype: Optional[DType] = None,
    extrapolate: bool = False,
    workers: int = 1,
    rule: Optional[NameMapRule] = None,
    limits: Optional[CheckpointLimits] = None,
) -> MergedCheckpoint:
    """One merge from paths: ``other`` is a fine-tune or an adapter by ``mode``."""
    if mode is MergeMode.LORA_RESCALE:
        adapter = load_adapter(other, base.index, rule=rule, limits=limits)
        return apply_lora(base, adapter, alpha, output_dtype, extrapolate, workers)
    with CheckpointReader(other, limits) as finetuned:
        return interpolate(base, finetuned, alpha, output_dtype, extrapolate, workers)


def sweep(
    base_path: Union[str, Path],
    other_path: Union[str, Path],
    spec: MergeSpec,
    out_dir: Union[str, Path],
    overwrite: bool = False,
    workers: int = 1,
    strip_prefixes: Sequence[str] = DEFAULT_STRIP_PREFIXES,
    limits: Optional[CheckpointLimits] = None,
) -> list[SweepEntry]:
    """Write one checkpoint per alpha and the sweep manifest.

    Raises:
        OutputExists: an output file or the manifest exists and
            ``overwrite`` is off. Checked before anything is written.
    """
    out = Path(out_dir)
    targets = [out / spec.output_name(alpha) for alpha in spec.alphas]
    manifest_path = out / SWEEP_MANIFEST
    if not overwrite:
        existing = [str(p) for p in [*targets, manifest_path] if p.exists()]
        if existing:
            raise OutputExists(
                f"Sweep outputs already exist: {', '.join(existing)}",
                suggestions=["Pass --overwrite or choose another --out directory"],
            )
    out.mkdir(parents=True, exist_ok=True)

    rule = NameMapRule(strip_prefixes=tuple(strip_prefixes))
    entries = []
    with CheckpointReader(base_path, limits) as base:
        if spec.mode is MergeMode.LORA_RESCALE:
            adapter = load_adapter(other_path, base.index, rule=rule, limits=limits)
            for alpha, target in zip(spec.alphas, targets):
                merged = apply_lora(
                    base, adapter, alpha, spec.output_dtype, spec.extrapolate, workers
                )
                entries.append(_write(merged, alpha, target, spec.mode))
        else:
            with CheckpointReader(other_path, limits) as finetuned:
                for alpha, target in zip(spec.alphas, targets):
                    merged = interpolate(
                        base,
                        finetuned,
                        alpha,
                        spec.output_dtype,
                        spec.extrapolate,
                        workers,
                    )
                    entries.append(_write(merged, alpha, target, spec.mode))

    with open(manifest_path, "w", encoding="utf-8") as handle:
        for entry in entries:
            handle.write(json.dumps(entry.to_dict(out), sort_keys=True) + "\n")
    logger.info("Sweep of %d merges written to %s", len(entries), out)
    return entries


def read_sweep_manifest(path: Union[str, Path]) -> list[dict[str, object]]:
    """Rows of a sweep manifest, in file order."""
    with open(path, encoding="utf-8") as handle:
        return [json.loads(line) for line in handle if line.strip()]


def _write(
    merged: MergedCheckpoint, alpha: float, target: Path, mode: MergeMode
) -> SweepEntry:
    digest = merged.save(target)
    logger.info("alpha=%s -> %s", format_alpha(alpha), target.name)
    return SweepEntry(alpha=float(alpha), path=target, sha256=digest, mode=mode)
