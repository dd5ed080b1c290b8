"""
Low-rank adapters: pairing factors and binding them to base weights.

Adapter files name their factors ``{prefix}{module}.lora_A.weight`` and
``{prefix}{module}.lora_B.weight``, optionally with an adapter-name segment
(``lora_A.default.weight``). The update for a module is
``delta = (scale_numerator / rank) * B @ A`` with ``A`` of shape
``(rank, d_in)`` and ``B`` of shape ``(d_out, rank)``.
"""

import json
import logging
import re
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ..security.exceptions import (
    MergeError,
    OrphanHalf,
    RankMismatch,
    ShapeMismatch,
    UnresolvedTarget,
)
from ..tensorstore.checkpoint import CheckpointIndex, Tensor, load_checkpoint
from ..utils.config import DEFAULT_STRIP_PREFIXES, CheckpointLimits

logger = logging.getLogger(__name__)

ADAPTER_WEIGHTS_FILE = "adapter_model.safetensors"
ADAPTER_CONFIG_FILE = "adapter_config.json"

_FACTOR_NAME = re.compile(r"^(?P<module>.+)\.lora_(?P<half>A|B)(?:\.[^.]+)?\.weight$")


@dataclass(frozen=True)
class NameMapRule:
    """Translate adapter module paths to base checkpoint weight names."""

    strip_prefixes: tuple[str, ...] = DEFAULT_STRIP_PREFIXES
    weight_suffix: str = ".weight"

    def candidates(self, module: str) -> list[str]:
        """Base names a module may bind to, most specific first."""
        names = []
        for prefix in self.strip_prefixes:
            if prefix and module.startswith(prefix):
                names.append(module[len(prefix) :] + self.weight_suffix)
        names.append(module + self.weight_suffix)
        return list(dict.fromkeys(names))


@dataclass(frozen=True)
class LoraPair:
    """One low-rank update bound to a base weight."""

    target: str
    a: Tensor
    b: Tensor
    rank: int
    scale_numerator: float

    def __post_init__(self) -> None:
        if len(self.a.shape) != 2 or len(self.b.shape) != 2:
            raise ShapeMismatch(
                f"{self.target}: low-rank factors must be matrices, got "
                f"A{list(self.a.shape)} and B{list(self.b.shape)}"
            )
        if self.rank < 1:
            raise RankMismatch(
                f"{self.target}: rank must be at least 1, got {self.rank}"
            )
        if self.a.shape[0] != self.rank or self.b.shape[1] != self.rank:
            raise RankMismatch(
                f"{self.target}: A{list(self.a.shape)} and B{list(self.b.shape)} "
                f"disagree with rank {self.rank}"
            )

    @property
    def scale(self) -> float:
        return self.scale_numerator / self.rank

    @property
    def target_shape(self) -> tuple[int, int]:
        return (self.b.shape[0], self.a.shape[1])

    def delta(self) -> np.ndarray:
        """Scaled update ``s * B @ A`` in float64."""
        b = self.b.values.astype(np.float64)
        a = self.a.values.astype(np.float64)
        return self.scale * (b @ a)


@dataclass
class LoraAdapter:
    """Low-rank updates keyed by the base weight they patch."""

    pairs: list[LoraPair]
    name_map: NameMapRule = field(default_factory=NameMapRule)

    def __post_init__(self) -> None:
        seen: dict[str, int] = {}
        for pair in self.pairs:
            seen[pair.target] = seen.get(pair.target, 0) + 1
        shared = sorted(t for t, n in seen.items() if n > 1)
        if shared:
            raise MergeError(f"Several adapter modules patch {', '.join(shared)}")

    @property
    def targets(self) -> dict[str, LoraPair]:
        return {pair.target: pair for pair in self.pairs}


def match_names(
    base: CheckpointIndex,
    adapter_tensors: Mapping[str, Tensor],
    scale_numerator: Optional[float] = None,
    rule: Optional[NameMapRule] = None,
    expected_rank: Optional[int] = None,
) -> LoraAdapter:
    """Pair adapter factors by module path and bind each pair to a base weight.

    Args:
        base: Index of the base checkpoint.
        adapter_tensors: Adapter tensors keyed by their names in the adapter file.
        scale_numerator: Nominal adapter scale; defaults to each pair's rank.
        rule: Prefix-strip rule; strips ``base_model.model.`` by default.
        expected_rank: Rank declared by the adapter config, if any.

    Raises:
        OrphanHalf: a module has only one factor.
        UnresolvedTarget: no base weight matches a module.
        RankMismatch: factor ranks disagree.
        ShapeMismatch: the update does not fit its base weight.
    """
    rule = rule or NameMapRule()
    halves: dict[str, dict[str, Tensor]] = {}
    for name in sorted(adapter_tensors):
        match = _FACTOR_NAME.match(name)
        if match is None:
            logger.warning("Ignoring adapter tensor %s (not a low-rank factor)", name)
            continue
        module_halves = halves.setdefault(match.group("module"), {})
        module_halves[match.group("half")] = adapter_tensors[name]

    orphans = [m for m, h in halves.items() if len(h) != 2]
    if orphans:
        raise OrphanHalf(orphans)

    pairs = []
    for module, factors in halves.items():
        target = _resolve_target(base, module, rule)
        a, b = factors["A"], factors["B"]
        rank = a.shape[0] if a.shape else 0
        if expected_rank is not None and rank != expected_rank:
            raise RankMismatch(
                f"{module}: factor rank {rank} differs from configured "
                f"rank {expected_rank}"
            )
        numerator = scale_numerator if scale_numerator is not None else rank
        pair = LoraPair(
            target=target, a=a, b=b, rank=rank, scale_numerator=float(numerator)
        )
        entry = base.entry(target)
        if entry.shape != pair.target_shape:
            raise ShapeMismatch(
                f"Update for {target} has shape {list(pair.target_shape)} but the "
                f"base weight is {list(entry.shape)}"
            )
        pairs.append(pair)

    pairs.sort(key=lambda p: p.target)
    logger.info("Bound %d adapter pairs to base weights", len(pairs))
    return LoraAdapter(pairs=pairs, name_map=rule)


def load_adapter(
    path: Union[str, Path],
    base: CheckpointIndex,
    rule: Optional[NameMapRule] = None,
    limits: Optional[CheckpointLimits] = None,
) -> LoraAdapter:
    """Load an adapter directory (weights plus config) or a bare adapter file.

    In a directory, ``lora_alpha`` from the config is the scale numerator and
    ``r`` is checked against every pair. A bare file uses scale numerator =
    rank, i.e. a scale of one.
    """
    location = Path(path)
    config: dict[str, object] = {}
    weights = location
    if location.is_dir():
        weights = location / ADAPTER_WEIGHTS_FILE
        config_path = location / ADAPTER_CONFIG_FILE
        if config_path.exists():
            try:
                config = json.loads(config_path.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as e:
                raise MergeError(
                    f"Cannot read adapter config {config_path}: {e}"
                ) from e

    scale = config.get("lora_alpha")
    rank = config.get("r")
    return match_names(
        base,
        load_checkpoint(weights, limits),
        scale_numerator=float(scale) if isinstance(scale, (int, float)) else None,
        rule=rule,
        expected_rank=int(rank) if isinstance(rank, int) else None,
    )


def _resolve_target(base: CheckpointIndex, module: str, rule: NameMapRule) -> str:
    candidates = rule.candidates(module)
    for name in candidates:
        if name in base.entries:
            return name
    raise UnresolvedTarget(
        f"Adapter module {module!r} matches no base weight",
        suggestions=[
            f"Tried: {', '.join(candidates)}",
            "Adjust strip_prefixes to match the adapter naming",
        ],
    )
