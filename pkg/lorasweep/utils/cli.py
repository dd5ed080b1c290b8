"""
Command-line interface for lorasweep.
"""

import argparse
import dataclasses
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Callable, Optional

from ..harness.client import EndpointClient
from ..harness.fewshot import SEED_FUNCTION, FewShotSpec, load_pool
from ..harness.manifest import export_for_scoring, load_manifest, load_run_file
from ..harness.runner import RunSummary, run, species_order, write_failures
from ..harness.templates import BUILTIN_TEMPLATES, PromptKind
from ..merging.adapters import NameMapRule
from ..merging.merge import MergeMode
from ..merging.sweep import MergeSpec, merge_checkpoint, sweep
from ..reporting.report import build_report
from ..reporting.summary import SweepSummary
from ..scoring.pipeline import (
    load_labels,
    load_scoring_rows,
    score_rows,
    write_score_outputs,
)
from ..scoring.types import TaskKind
from ..security.exceptions import (
    EXIT_INTERRUPTED,
    EXIT_OK,
    EXIT_PARTIAL_FAILURE,
    EXIT_UNEXPECTED,
    ConfigError,
    LoraSweepError,
)
from ..tensorstore.checkpoint import CheckpointIndex, CheckpointReader
from ..tensorstore.dtypes import DType
from .config import ToolkitConfig, format_alpha

logger = logging.getLogger(__name__)

RESOLVED_CONFIG = "resolved_config.json"
RUN_FILE = "run.jsonl"
RUN_MANIFEST = "run_manifest.json"
FAILURES_FILE = "failures.jsonl"


def _float_list(value: str) -> list[float]:
    try:
        return [float(item) for item in value.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated numbers, got {value!r}"
        ) from None


def _str_list(value: str) -> list[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="TOML configuration file")
    common.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="More logging (-v info, -vv debug)",
    )

    parser = argparse.ArgumentParser(
        prog="lorasweep",
        description="Merge checkpoints along alpha and evaluate prompt robustness",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  lorasweep inspect base.safetensors
  lorasweep sweep --base base.safetensors --other adapter/ --mode lora --alphas 0,0.5,1
  lorasweep run -c study.toml --alphas 0.5 --kind common,combined
  lorasweep score --input run/run.jsonl --manifest eval.jsonl --out scores
  lorasweep report scores/metrics.json --out report
        """,
    )
    commands = parser.add_subparsers(dest="command", required=True)

    inspect = commands.add_parser(
        "inspect", parents=[common], help="Show a checkpoint header or diff two"
    )
    inspect.add_argument("checkpoint", help="Checkpoint file")
    inspect.add_argument("other", nargs="?", help="Second checkpoint to diff against")

    for name, help_text in (
        ("merge", "Merge two checkpoints at one alpha"),
        ("sweep", "Merge at every alpha of a grid"),
    ):
        command = commands.add_parser(name, parents=[common], help=help_text)
        command.add_argument("--base", help="Base checkpoint")
        command.add_argument(
            "--other", help="Fine-tuned checkpoint (interp) or adapter (lora)"
        )
        command.add_argument("--mode", choices=[m.value for m in MergeMode])
        command.add_argument("--out", help="Output file (merge) or directory (sweep)")
        command.add_argument("--output-dtype", choices=[d.tag for d in DType])
        command.add_argument(
            "--extrapolate",
            action="store_true",
            default=None,
            help="Allow alpha outside [0, 1]",
        )
        command.add_argument("--workers", type=int, help="Tensor merge threads")
        if name == "merge":
            command.add_argument("--alpha", type=float)
        else:
            command.add_argument("--alphas", type=_float_list, help="e.g. 0,0.5,1")
            command.add_argument(
                "--overwrite",
                action="store_true",
                default=None,
                help="Replace existing outputs",
            )

    run_cmd = commands.add_parser(
        "run", parents=[common], help="Query an endpoint for every sample"
    )
    run_cmd.add_argument("--manifest", help="Evaluation manifest (JSON lines)")
    run_cmd.add_argument("--labels", help="Label file, one class per line")
    run_cmd.add_argument(
        "--kind", dest="kinds", type=_str_list, help="Prompt kind(s), comma-separated"
    )
    run_cmd.add_argument("--k", type=int, help="Few-shot examples per class")
    run_cmd.add_argument("--pool", help="Few-shot pool (JSON lines)")
    run_cmd.add_argument("--seed", type=int, help="Master permutation seed")
    run_cmd.add_argument("--alphas", type=_float_list, help="Served merge alphas")
    run_cmd.add_argument("--endpoint", help="Endpoint base URL")
    run_cmd.add_argument("--concurrency", type=int, help="Requests in flight")
    run_cmd.add_argument("--out", help="Run directory")

    score = commands.add_parser(
        "score", parents=[common], help="Judge outputs and aggregate metrics"
    )
    score.add_argument("--input", help="Run file or scoring rows (JSON lines)")
    score.add_argument(
        "--manifest", help="Evaluation manifest; treats --input as a run file"
    )
    score.add_argument("--labels", help="Label file, one class per line")
    score.add_argument("--kind", help="Task kind override")
    score.add_argument("--threshold", type=int, help="Edit-distance threshold")
    score.add_argument("--out", help="Output directory")

    report = commands.add_parser(
        "report", parents=[common], help="Emit CSV and SVG charts from metrics"
    )
    report.add_argument("inputs", nargs="*", help="metrics.json files")
    report.add_argument("--out", help="Output directory")
    report.add_argument(
        "--compare-alphas", type=_float_list, help="Two alphas for the F1 chart"
    )
    return parser


def load_config(args: argparse.Namespace) -> ToolkitConfig:
    """Configuration file (if any) with this command's flags applied."""
    config = ToolkitConfig.from_toml(args.config) if args.config else ToolkitConfig()
    command = args.command
    if command in ("merge", "sweep"):
        config = config.with_overrides(
            command,
            base=args.base,
            other=args.other,
            mode=args.mode,
            out=args.out,
            output_dtype=args.output_dtype,
            extrapolate=args.extrapolate,
            workers=args.workers,
        )
        if command == "merge":
            config = config.with_overrides("merge", alpha=args.alpha)
        else:
            config = config.with_overrides(
                "sweep", alphas=args.alphas, overwrite=args.overwrite
            )
    elif command == "run":
        config = config.with_overrides(
            "run",
            manifest=args.manifest,
            labels=args.labels,
            kinds=args.kinds,
            k=args.k,
            pool=args.pool,
            seed=args.seed,
            alphas=args.alphas,
            concurrency=args.concurrency,
            out=args.out,
        )
        config = config.with_overrides("endpoint", base_url=args.endpoint)
    elif command == "score":
        config = config.with_overrides(
            "score",
            input=args.input,
            manifest=args.manifest,
            labels=args.labels,
            kind=args.kind,
            threshold=args.threshold,
            out=args.out,
        )
    elif command == "report":
        config = config.with_overrides(
            "report",
            inputs=args.inputs or None,
            out=args.out,
            compare_alphas=args.compare_alphas,
        )
    return config


def write_resolved_config(out_dir: Path, config: ToolkitConfig) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / RESOLVED_CONFIG
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(config.to_dict(), handle, indent=2, sort_keys=True)
        handle.write("\n")
    return path


def _require(value: Optional[str], flag: str, section: str, key: str) -> str:
    if not value:
        raise ConfigError(
            f"Missing {flag}",
            suggestions=[f"Pass {flag} or set [{section}].{key} in the config file"],
        )
    return value


def _dtype(tag: Optional[str]) -> Optional[DType]:
    if tag is None:
        return None
    try:
        return DType.from_tag(tag)
    except ValueError as e:
        raise ConfigError(str(e)) from e


# ============================================================================
# Commands
# ============================================================================


def format_index(index: CheckpointIndex) -> str:
    """Tensor table with totals."""
    rows = [
        (name, str(entry.dtype), str(list(entry.shape)), str(entry.nbytes))
        for name, entry in index.entries.items()
    ]
    header = ("name", "dtype", "shape", "bytes")
    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]
    lines = [
        "  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip()
        for row in [header, *rows]
    ]
    total = sum(entry.nbytes for entry in index.entries.values())
    lines.append(
        f"{len(rows)} tensors, {total} payload bytes, "
        f"header {index.header_len} bytes"
    )
    if index.metadata:
        for key, value in sorted(index.metadata.items()):
            lines.append(f"metadata {key} = {value}")
    return "\n".join(lines)


def diff_indexes(left: CheckpointIndex, right: CheckpointIndex) -> list[str]:
    """Name-set, dtype and shape differences between two checkpoints."""
    differences = []
    for name in sorted(set(left.entries) - set(right.entries)):
        differences.append(f"only in first: {name}")
    for name in sorted(set(right.entries) - set(left.entries)):
        differences.append(f"only in second: {name}")
    for name in sorted(set(left.entries) & set(right.entries)):
        a, b = left.entries[name], right.entries[name]
        if a.shape != b.shape:
            differences.append(f"shape {name}: {list(a.shape)} vs {list(b.shape)}")
        if a.dtype is not b.dtype:
            differences.append(f"dtype {name}: {a.dtype} vs {b.dtype}")
    return differences


def cmd_inspect(args: argparse.Namespace, config: ToolkitConfig) -> int:
    with CheckpointReader(args.checkpoint, config.limits) as reader:
        first = reader.index
    if args.other is None:
        print(format_index(first))
        return EXIT_OK
    with CheckpointReader(args.other, config.limits) as reader:
        second = reader.index
    differences = diff_indexes(first, second)
    for line in differences:
        print(line)
    if not differences:
        print("no differences in names, shapes or dtypes")
    return EXIT_OK


def cmd_merge(args: argparse.Namespace, config: ToolkitConfig) -> int:
    settings = config.merge
    base = _require(settings.base, "--base", "merge", "base")
    other = _require(settings.other, "--other", "merge", "other")
    out = Path(_require(settings.out, "--out", "merge", "out"))
    with CheckpointReader(base, config.limits) as reader:
        merged = merge_checkpoint(
            reader,
            other,
            MergeMode(settings.mode),
            settings.alpha,
            output_dtype=_dtype(settings.output_dtype),
            extrapolate=settings.extrapolate,
            workers=settings.workers,
            rule=NameMapRule(strip_prefixes=tuple(settings.strip_prefixes)),
            limits=config.limits,
        )
        out.parent.mkdir(parents=True, exist_ok=True)
        digest = merged.save(out)
    write_resolved_config(out.parent, config)
    print(f"{out} sha256={digest}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace, config: ToolkitConfig) -> int:
    settings = config.sweep
    spec = MergeSpec(
        mode=MergeMode(settings.mode),
        alphas=tuple(settings.alphas),
        output_dtype=_dtype(settings.output_dtype),
        output_naming=settings.output_naming,
        extrapolate=settings.extrapolate,
    )
    entries = sweep(
        _require(settings.base, "--base", "sweep", "base"),
        _require(settings.other, "--other", "sweep", "other"),
        spec,
        settings.out,
        overwrite=settings.overwrite,
        workers=settings.workers,
        strip_prefixes=settings.strip_prefixes,
        limits=config.limits,
    )
    write_resolved_config(Path(settings.out), config)
    for entry in entries:
        print(f"alpha={format_alpha(entry.alpha)} {entry.path} sha256={entry.sha256}")
    return EXIT_OK


def cmd_run(args: argparse.Namespace, config: ToolkitConfig) -> int:
    settings = config.run
    kinds = []
    for kind in settings.kinds:
        try:
            kinds.append(PromptKind.parse(kind))
        except ValueError as e:
            raise ConfigError(str(e)) from e

    samples = load_manifest(
        _require(settings.manifest, "--manifest", "run", "manifest")
    )
    labels = None
    if settings.labels:
        labels = load_labels(settings.labels, TaskKind.CLOSED_SET)
    fewshot = None
    if settings.k > 0:
        pool = load_pool(_require(settings.pool, "--pool", "run", "pool"))
        fewshot = FewShotSpec(k=settings.k, pool=pool, master_seed=settings.seed)
    order = (
        species_order(labels, settings.seed, settings.shuffle_species)
        if labels is not None
        else None
    )

    out = Path(settings.out)
    write_resolved_config(out, config)
    total = RunSummary(run_file=out / RUN_FILE)
    with EndpointClient(config.endpoint) as client:
        for alpha in settings.alphas:
            for kind in kinds:
                total.merge(
                    run(
                        samples,
                        BUILTIN_TEMPLATES[kind],
                        client,
                        alpha,
                        out / RUN_FILE,
                        labels=labels,
                        fewshot=fewshot,
                        concurrency=settings.concurrency,
                        order=order,
                    )
                )

    with open(out / RUN_MANIFEST, "w", encoding="utf-8") as handle:
        json.dump(
            {"seed_function": SEED_FUNCTION, **total.to_dict()},
            handle,
            indent=2,
            sort_keys=True,
        )
        handle.write("\n")
    print(json.dumps(total.to_dict(), sort_keys=True))

    failures_path = out / FAILURES_FILE
    if not total.failures:
        # a clean run leaves no failures from earlier runs behind
        failures_path.unlink(missing_ok=True)
        return EXIT_OK
    write_failures(failures_path, total.failures)
    logger.error("%d request(s) failed; see %s", len(total.failures), failures_path)
    return EXIT_PARTIAL_FAILURE


def cmd_score(args: argparse.Namespace, config: ToolkitConfig) -> int:
    settings = config.score
    source = _require(settings.input, "--input", "score", "input")
    kind = None
    if settings.kind:
        try:
            kind = TaskKind.parse(settings.kind)
        except ValueError as e:
            raise ConfigError(str(e)) from e

    if settings.manifest:
        rows = export_for_scoring(
            load_run_file(source), load_manifest(settings.manifest), task_kind=kind
        )
    else:
        rows = load_scoring_rows(source)
        if kind is not None:
            rows = [dataclasses.replace(row, task_kind=kind) for row in rows]

    labels = None
    if settings.labels:
        labels = load_labels(settings.labels, kind or TaskKind.CLOSED_SET)
    results = score_rows(
        rows,
        labels,
        threshold=settings.threshold,
        abstention_patterns=settings.abstention_patterns,
    )
    out = write_score_outputs(settings.out, results)
    write_resolved_config(out, config)
    for result in results:
        alpha, task_kind, dataset = result.key
        report = result.report
        print(
            f"alpha={alpha} kind={task_kind.value} dataset={dataset} n={report.n} "
            f"accuracy={report.accuracy:.4f} macro_f1={report.macro_f1:.4f}"
        )
    return EXIT_OK


def cmd_report(args: argparse.Namespace, config: ToolkitConfig) -> int:
    settings = config.report
    if not settings.inputs:
        raise ConfigError(
            "No metrics files given",
            suggestions=["Pass metrics.json paths or set [report].inputs"],
        )
    summary = SweepSummary.from_files(settings.inputs)
    artifacts = build_report(summary, settings.out, settings.compare_alphas)
    write_resolved_config(artifacts.out_dir, config)
    for path in artifacts.files:
        print(path)
    return EXIT_OK


COMMANDS: dict[str, Callable[[argparse.Namespace, ToolkitConfig], int]] = {
    "inspect": cmd_inspect,
    "merge": cmd_merge,
    "sweep": cmd_sweep,
    "run": cmd_run,
    "score": cmd_score,
    "report": cmd_report,
}


def configure_logging(verbosity: int) -> None:
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(
        level=level,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main CLI entry point; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)

    try:
        config = load_config(args)
        return COMMANDS[args.command](args, config)
    except LoraSweepError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"File I/O error: {e}", file=sys.stderr)
        return EXIT_UNEXPECTED
    except KeyboardInterrupt:
        print("Interrupted by user", file=sys.stderr)
        return EXIT_INTERRUPTED


if __name__ == "__main__":
    sys.exit(main())
