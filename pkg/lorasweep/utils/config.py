"""
Configuration and limits for lorasweep.

Settings are grouped per subcommand into small dataclasses that validate
themselves. A single TOML file with one section per subcommand populates
them; command-line flags override file values and the resolved result is
written next to every command's outputs.
"""

import dataclasses
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

from ..scoring.types import DEFAULT_ABSTENTION_PATTERNS
from ..security.exceptions import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on older interpreters only
    import tomli as tomllib

ENDPOINT_URL_ENV = "LORASWEEP_ENDPOINT_URL"
API_TOKEN_ENV = "LORASWEEP_API_TOKEN"
DEFAULT_STRIP_PREFIXES = ("base_model.model.",)


@dataclass
class CheckpointLimits:
    """Resource limits applied while parsing checkpoint headers."""

    max_header_size: int = 100 * 1024 * 1024
    max_tensors: int = 1_000_000
    allow_gaps: bool = False

    def __post_init__(self) -> None:
        if self.max_header_size <= 0:
            raise ConfigError("max_header_size must be positive")
        if self.max_tensors <= 0:
            raise ConfigError("max_tensors must be positive")


@dataclass
class MergeSettings:
    """Single merge: one alpha, one output checkpoint."""

    base: Optional[str] = None
    other: Optional[str] = None
    mode: str = "interp"
    alpha: float = 0.5
    out: Optional[str] = None
    output_dtype: Optional[str] = None
    extrapolate: bool = False
    workers: int = 1
    strip_prefixes: list[str] = field(
        default_factory=lambda: list(DEFAULT_STRIP_PREFIXES)
    )

    def __post_init__(self) -> None:
        _check_mode(self.mode)
        _check_workers(self.workers)


@dataclass
class SweepSettings:
    """Alpha sweep: one output checkpoint per alpha plus a manifest."""

    base: Optional[str] = None
    other: Optional[str] = None
    mode: str = "interp"
    alphas: list[float] = field(default_factory=lambda: [0.0, 0.5, 1.0])
    out: str = "sweep"
    output_dtype: Optional[str] = None
    output_naming: str = "merged-alpha{alpha}.safetensors"
    extrapolate: bool = False
    overwrite: bool = False
    workers: int = 1
    strip_prefixes: list[str] = field(
        default_factory=lambda: list(DEFAULT_STRIP_PREFIXES)
    )

    def __post_init__(self) -> None:
        _check_mode(self.mode)
        _check_workers(self.workers)
        if "{alpha}" not in self.output_naming:
            raise ConfigError("output_naming must contain an {alpha} placeholder")


@dataclass
class EndpointSettings:
    """Chat-completions endpoint used by the run command."""

    base_url: Optional[str] = None
    path: str = "/v1/chat/completions"
    model: str = "merged-alpha{alpha}"
    temperature: float = 0.0
    max_tokens: int = 64
    timeout: float = 30.0
    max_retries: int = 3
    backoff_initial: float = 0.5
    backoff_max: float = 8.0
    api_key_env: str = API_TOKEN_ENV
    logger: Optional[logging.Logger] = field(
        default=None, repr=False, compare=False, metadata={"serialize": False}
    )

    def __post_init__(self) -> None:
        if self.max_tokens <= 0:
            raise ConfigError("max_tokens must be positive")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be non-negative")
        if self.timeout <= 0:
            raise ConfigError("timeout must be positive")
        if self.backoff_initial < 0 or self.backoff_max < 0:
            raise ConfigError("backoff delays must be non-negative")

    def resolved_base_url(self) -> str:
        """Endpoint base URL from settings, falling back to the environment."""
        url = self.base_url or os.environ.get(ENDPOINT_URL_ENV, "")
        if not url:
            raise ConfigError(
                "No endpoint URL configured",
                suggestions=[
                    "Pass --endpoint, set [endpoint].base_url or export "
                    f"{ENDPOINT_URL_ENV}"
                ],
            )
        return url.rstrip("/")

    def api_key(self) -> Optional[str]:
        """Bearer token read from the configured environment variable."""
        return os.environ.get(self.api_key_env) or None

    def model_for(self, alpha: float) -> str:
        """Served model name for a merge coefficient."""
        return self.model.replace("{alpha}", format_alpha(alpha))


@dataclass
class RunSettings:
    """Prompt rendering and endpoint orchestration."""

    manifest: Optional[str] = None
    labels: Optional[str] = None
    kinds: list[str] = field(default_factory=lambda: ["common"])
    k: int = 0
    pool: Optional[str] = None
    seed: int = 0
    alphas: list[float] = field(default_factory=lambda: [1.0])
    concurrency: int = 4
    shuffle_species: bool = False
    out: str = "run"

    def __post_init__(self) -> None:
        if self.k < 0:
            raise ConfigError("k must be non-negative")
        if self.concurrency < 1:
            raise ConfigError("concurrency must be at least 1")
        if not self.kinds:
            raise ConfigError("kinds needs at least one prompt kind")
        if not self.alphas:
            raise ConfigError("alphas needs at least one value")


@dataclass
class ScoreSettings:
    """Judging threshold, labels and abstention handling."""

    input: Optional[str] = None
    manifest: Optional[str] = None
    labels: Optional[str] = None
    kind: Optional[str] = None
    threshold: int = 5
    abstention_patterns: list[str] = field(
        default_factory=lambda: list(DEFAULT_ABSTENTION_PATTERNS)
    )
    out: str = "scores"

    def __post_init__(self) -> None:
        if self.threshold < 1:
            raise ConfigError("threshold must be at least 1")


@dataclass
class ReportSettings:
    """Chart and CSV emission."""

    inputs: list[str] = field(default_factory=list)
    out: str = "report"
    compare_alphas: Optional[list[float]] = None

    def __post_init__(self) -> None:
        if self.compare_alphas is not None and len(self.compare_alphas) != 2:
            raise ConfigError("compare_alphas needs exactly two values")


_SECTIONS: dict[str, type] = {
    "merge": MergeSettings,
    "sweep": SweepSettings,
    "endpoint": EndpointSettings,
    "run": RunSettings,
    "score": ScoreSettings,
    "report": ReportSettings,
    "limits": CheckpointLimits,
}


@dataclass
class ToolkitConfig:
    """All settings for one study, one attribute per TOML section."""

    merge: MergeSettings = field(default_factory=MergeSettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    endpoint: EndpointSettings = field(default_factory=EndpointSettings)
    run: RunSettings = field(default_factory=RunSettings)
    score: ScoreSettings = field(default_factory=ScoreSettings)
    report: ReportSettings = field(default_factory=ReportSettings)
    limits: CheckpointLimits = field(default_factory=CheckpointLimits)

    @classmethod
    def from_mapping(cls, data: dict[str, Any]) -> "ToolkitConfig":
        """Build a configuration from a parsed TOML document."""
        unknown = sorted(set(data) - set(_SECTIONS))
        if unknown:
            raise ConfigError(
                f"Unknown configuration section(s): {', '.join(unknown)}",
                suggestions=[f"Valid sections: {', '.join(_SECTIONS)}"],
            )

        sections: dict[str, Any] = {}
        for name, settings_cls in _SECTIONS.items():
            values = data.get(name, {})
            if not isinstance(values, dict):
                raise ConfigError(f"Section [{name}] must be a table")
            sections[name] = _build_section(name, settings_cls, values)
        return cls(**sections)

    @classmethod
    def from_toml(cls, path: Union[str, Path]) -> "ToolkitConfig":
        """Load a configuration file."""
        try:
            with open(path, "rb") as handle:
                data = tomllib.load(handle)
        except OSError as e:
            raise ConfigError(f"Cannot read config file {path}: {e}") from e
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"Invalid TOML in {path}: {e}") from e

        config = cls.from_mapping(data)
        config._resolve_relative_paths(Path(path).resolve().parent)
        return config

    def with_overrides(self, section: str, **values: Any) -> "ToolkitConfig":
        """Return a copy with non-None values replaced in one section."""
        current = getattr(self, section)
        changes = {key: value for key, value in values.items() if value is not None}
        if not changes:
            return self
        try:
            updated = dataclasses.replace(current, **changes)
        except TypeError as e:
            raise ConfigError(f"Invalid override for [{section}]: {e}") from e
        return dataclasses.replace(self, **{section: updated})

    def to_dict(self) -> dict[str, Any]:
        """Resolved configuration as plain data, suitable for JSON."""
        return {name: _section_to_dict(getattr(self, name)) for name in _SECTIONS}

    def _resolve_relative_paths(self, root: Path) -> None:
        """Make file paths in the config relative to the config file."""
        path_fields = {
            "merge": ("base", "other", "out"),
            "sweep": ("base", "other", "out"),
            "run": ("manifest", "labels", "pool", "out"),
            "score": ("input", "manifest", "labels", "out"),
            "report": ("out",),
        }
        for section, names in path_fields.items():
            settings = getattr(self, section)
            for name in names:
                value = getattr(settings, name)
                if value and not Path(value).is_absolute():
                    setattr(settings, name, str(root / value))
        self.report.inputs = [
            value if Path(value).is_absolute() else str(root / value)
            for value in self.report.inputs
        ]


def format_alpha(alpha: float) -> str:
    """Stable textual form of a merge coefficient for file and model names.

    Shortest round-trip representation, so distinct floats never share a
    name. Whole numbers drop the trailing ``.0``.
    """
    text = repr(float(alpha))
    return text[:-2] if text.endswith(".0") else text


def _build_section(name: str, settings_cls: type, values: dict[str, Any]) -> Any:
    known = {f.name for f in dataclasses.fields(settings_cls) if _serializable(f)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(
            f"Unknown key(s) in [{name}]: {', '.join(unknown)}",
            suggestions=[f"Valid keys: {', '.join(sorted(known))}"],
        )
    try:
        return settings_cls(**values)
    except TypeError as e:
        raise ConfigError(f"Invalid value in [{name}]: {e}") from e


def _section_to_dict(settings: Any) -> dict[str, Any]:
    return {
        f.name: getattr(settings, f.name)
        for f in dataclasses.fields(settings)
        if _serializable(f)
    }


def _serializable(f: "dataclasses.Field[Any]") -> bool:
    return bool(f.metadata.get("serialize", True))


def _check_mode(mode: str) -> None:
    if mode not in ("interp", "lora"):
        raise ConfigError(f"mode must be 'interp' or 'lora', got {mode!r}")


def _check_workers(workers: int) -> None:
    if workers < 1:
        raise ConfigError("workers must be at least 1")
