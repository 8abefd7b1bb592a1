from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence, TypeVar

import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from . import __version__
from .config import ExperimentConfig
from .utils import md5_checksum, stable_hash

logger = logging.getLogger("critlab.pipeline")

FLOAT_FORMAT = "%.17g"

T = TypeVar("T")
R = TypeVar("R")


def configure_logging(out_dir: Path, log_level: str) -> None:
    log_dir = out_dir / "logs"
    log_dir.mkdir(parents=True, exist_ok=True)
    log_file = log_dir / "run.log"
    logging.basicConfig(
        level=getattr(logging, log_level.upper(), logging.INFO),
        format="[%(asctime)s] %(levelname)s %(name)s: %(message)s",
        handlers=[logging.FileHandler(log_file), logging.StreamHandler()],
        force=True,
    )


def run_units(
    func: Callable[[T], R],
    units: Sequence[T],
    workers: int = 1,
    progress: bool = False,
    desc: str = "units",
) -> list[R]:
    """Evaluate independent work units; results come back in input order at any worker count."""
    iterator: Iterable[T] = tqdm(units, desc=desc, disable=not progress)
    if workers <= 1 or len(units) <= 1:
        return [func(unit) for unit in iterator]
    return list(Parallel(n_jobs=workers)(delayed(func)(unit) for unit in iterator))


def write_csv(frame: pd.DataFrame, out_dir: Path, name: str, columns: Sequence[str]) -> Path:
    csv_dir = out_dir / "csv"
    csv_dir.mkdir(parents=True, exist_ok=True)
    csv_path = csv_dir / f"{name}.csv"
    frame = frame.reindex(columns=list(columns))
    frame.to_csv(csv_path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return csv_path


@dataclass
class RunResult:
    experiment: str
    outputs: dict[str, Path]
    verdicts: dict[str, bool]
    summary: dict[str, Any] = field(default_factory=dict)
    manifest: Path | None = None
    inconclusive: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values()) and not self.inconclusive


def write_run_manifest(
    config: ExperimentConfig,
    out_dir: Path,
    outputs: Mapping[str, Path],
    rows: Mapping[str, int],
    summary: Mapping[str, Any],
    verdicts: Mapping[str, bool],
    started_at: datetime,
    finished_at: datetime,
    inconclusive: Sequence[str] = (),
) -> Path:
    manifest_path = out_dir / "run.json"
    payload = {
        "version": __version__,
        "experiment": config.experiment,
        "config": config.to_dict(),
        "config_name": config.config_path.name if config.config_path else None,
        "config_path_hash": stable_hash(str(config.config_path)) if config.config_path else None,
        "started_at": started_at.isoformat(),
        "finished_at": finished_at.isoformat(),
        "outputs": {
            name: {
                "path": str(path.relative_to(out_dir)),
                "rows": int(rows[name]),
                "md5": md5_checksum(path),
            }
            for name, path in outputs.items()
        },
        "summary": dict(summary),
        "verdicts": {name: bool(ok) for name, ok in verdicts.items()},
        "inconclusive": list(inconclusive),
        "passed": all(verdicts.values()) and not inconclusive,
    }
    manifest_path.write_text(json.dumps(payload, indent=2, default=_json_default), encoding="utf-8")
    return manifest_path


def _json_default(value: Any) -> Any:
    if hasattr(value, "item"):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def finalize_run(
    config: ExperimentConfig,
    tables: Mapping[str, tuple[pd.DataFrame, Sequence[str]]],
    summary: Mapping[str, Any],
    verdicts: Mapping[str, bool],
    started_at: datetime,
    inconclusive: Sequence[str] = (),
) -> RunResult:
    """Write every table as CSV, then the manifest that references them.

    Verdicts named in ``inconclusive`` had no data to decide on; they are
    recorded as failed and listed separately in the manifest.
    """
    out_dir = config.output_path
    outputs: dict[str, Path] = {}
    rows: dict[str, int] = {}
    for name, (frame, columns) in tables.items():
        outputs[name] = write_csv(frame, out_dir, name, columns)
        rows[name] = len(frame)
        logger.info("Wrote %d rows to %s.", len(frame), outputs[name])
    finished_at = datetime.now(timezone.utc)
    verdicts = {name: bool(ok) and name not in inconclusive for name, ok in verdicts.items()}
    manifest = write_run_manifest(
        config, out_dir, outputs, rows, summary, verdicts, started_at, finished_at, inconclusive
    )
    for name, ok in verdicts.items():
        if name in inconclusive:
            logger.warning("Verdict %s: inconclusive", name)
        else:
            logger.info("Verdict %s: %s", name, "pass" if ok else "FAIL")
    return RunResult(
        experiment=config.experiment,
        outputs=outputs,
        verdicts=dict(verdicts),
        summary=dict(summary),
        manifest=manifest,
        inconclusive=list(inconclusive),
    )


def start_run(config: ExperimentConfig) -> datetime:
    config.output_path.mkdir(parents=True, exist_ok=True)
    configure_logging(config.output_path, config.log_level)
    logger.info(
        "Starting %s with %d seed(s), n_list=%s, workers=%d.",
        config.experiment, len(config.seeds), config.n_list, config.workers,
    )
    return datetime.now(timezone.utc)
