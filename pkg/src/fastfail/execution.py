"""Runs selected suites through a pluggable command runner.

The runner is a contract (spawn, capture output, enforce timeout) so tests
substitute an in-process fake; results are plain data, never exceptions.
Exit code 0 maps to Pass, 1 to Fail (assertion failure), anything else to
Error (infrastructure failure).
"""

from __future__ import annotations

import os
import subprocess
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Mapping, Protocol

from .clocks import utc_now
from .coverage_io import parse_cobertura
from .errors import ConfigurationError, IngestionError
from .mapper import CoverageRecord, MapperDatabase, TestSuiteRecord, split_suite_ref
from .selection import SelectionResult

LOG_EXCERPT_LINES = 50

COVERAGE_OUT_ENV = "FASTFAIL_COVERAGE_OUT"


class Status(Enum):
    PASS = "pass"
    FAIL = "fail"
    ERROR = "error"
    SKIP = "skip"


class Overall(Enum):
    GREEN = "green"
    RED = "red"


@dataclass(frozen=True)
class TestResult:
    suite_id: str
    status: Status
    duration_seconds: float
    log_excerpt: str
    attempt: int = 1

    def __post_init__(self) -> None:
        if self.duration_seconds < 0:
            raise ValueError(f"{self.suite_id}: negative duration")
        if self.attempt < 1:
            raise ValueError(f"{self.suite_id}: attempt must be >= 1")


@dataclass(frozen=True)
class RunReport:
    results: tuple[TestResult, ...]
    started: datetime
    finished: datetime

    @property
    def overall(self) -> Overall:
        ok = all(r.status in (Status.PASS, Status.SKIP) for r in self.results)
        return Overall.GREEN if ok else Overall.RED


@dataclass(frozen=True)
class CompletedExecution:
    """What a runner observed: exit code (None on spawn failure), output, timing."""

    exit_code: int | None
    output: str
    duration_seconds: float
    timed_out: bool = False
    spawn_error: str | None = None


class Runner(Protocol):
    def run(
        self,
        command: tuple[str, ...],
        workdir: Path,
        timeout_seconds: float,
        env: Mapping[str, str] | None = None,
    ) -> CompletedExecution: ...


class SubprocessRunner:
    """Real runner: spawns the suite command and measures wall-clock time."""

    def run(
        self,
        command: tuple[str, ...],
        workdir: Path,
        timeout_seconds: float,
        env: Mapping[str, str] | None = None,
    ) -> CompletedExecution:
        merged = dict(os.environ)
        if env:
            merged.update(env)
        start = time.monotonic()
        try:
            proc = subprocess.run(
                list(command),
                cwd=str(workdir),
                env=merged,
                capture_output=True,
                text=True,
                errors="replace",
                timeout=timeout_seconds,
            )
        except subprocess.TimeoutExpired as exc:
            elapsed = time.monotonic() - start
            partial = (exc.stdout or "") + (exc.stderr or "")
            if isinstance(partial, bytes):
                partial = partial.decode("utf-8", errors="replace")
            return CompletedExecution(
                exit_code=None,
                output=partial,
                duration_seconds=elapsed,
                timed_out=True,
            )
        except OSError as exc:
            return CompletedExecution(
                exit_code=None,
                output="",
                duration_seconds=time.monotonic() - start,
                spawn_error=str(exc),
            )
        return CompletedExecution(
            exit_code=proc.returncode,
            output=proc.stdout + proc.stderr,
            duration_seconds=time.monotonic() - start,
        )


@dataclass(frozen=True)
class ExecutionConfig:
    max_parallel: int = 4
    retry_flaky: bool = False
    timeout_seconds: float = 600.0
    log_dir: Path | None = None

    def __post_init__(self) -> None:
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")
        if self.timeout_seconds <= 0:
            raise ValueError("timeout_seconds must be positive")


def _excerpt(output: str) -> str:
    lines = output.splitlines()
    return "\n".join(lines[-LOG_EXCERPT_LINES:])


def _status_for(execution: CompletedExecution) -> tuple[Status, str]:
    if execution.spawn_error is not None:
        return Status.ERROR, f"spawn failed: {execution.spawn_error}"
    if execution.timed_out:
        return Status.ERROR, "timed out"
    if execution.exit_code == 0:
        return Status.PASS, ""
    if execution.exit_code == 1:
        return Status.FAIL, ""
    return Status.ERROR, f"exit code {execution.exit_code}"


def run_suite(
    suite: TestSuiteRecord,
    workdir: Path,
    timeout_seconds: float,
    runner: Runner,
    *,
    env: Mapping[str, str] | None = None,
    extra_args: tuple[str, ...] = (),
    result_id: str | None = None,
) -> TestResult:
    """Execute one suite command; failures come back as data, never exceptions."""
    if timeout_seconds <= 0:
        raise ValueError("timeout_seconds must be positive")
    execution = runner.run(suite.command + extra_args, workdir, timeout_seconds, env)
    status, note = _status_for(execution)
    excerpt = _excerpt(execution.output)
    if note:
        excerpt = f"{excerpt}\n[{note}]" if excerpt else f"[{note}]"
    return TestResult(
        suite_id=result_id or suite.suite_id,
        status=status,
        duration_seconds=execution.duration_seconds,
        log_excerpt=excerpt,
    )


def _log_name(suite_id: str) -> str:
    return suite_id.replace("/", "_") + ".log"


def run_selection(
    selection: SelectionResult,
    db: MapperDatabase,
    config: ExecutionConfig,
    runner: Runner,
    workdir: Path,
    *,
    env: Mapping[str, str] | None = None,
) -> RunReport:
    """Execute every selected id, up to max_parallel at a time.

    Case-qualified ids run the parent suite command with the case id
    appended. Results come back sorted by suite id regardless of completion
    order; a Fail is retried once when retry_flaky is set and the final
    attempt wins.
    """
    selected = list(selection.selected_functional) + list(selection.selected_unit)
    plan: list[tuple[str, TestSuiteRecord, tuple[str, ...]]] = []
    for sid in selected:
        base, case = split_suite_ref(sid)
        suite = db.suites.get(base)
        if suite is None:
            raise ConfigurationError(f"selected suite {sid!r} is not in the database")
        plan.append((sid, suite, (case,) if case else ()))

    started = utc_now()
    log_dir = config.log_dir
    if log_dir is not None:
        log_dir.mkdir(parents=True, exist_ok=True)

    def execute(item: tuple[str, TestSuiteRecord, tuple[str, ...]]) -> TestResult:
        sid, suite, extra = item
        result = run_suite(
            suite,
            workdir,
            config.timeout_seconds,
            runner,
            env=env,
            extra_args=extra,
            result_id=sid,
        )
        if result.status is Status.FAIL and config.retry_flaky:
            retry = run_suite(
                suite,
                workdir,
                config.timeout_seconds,
                runner,
                env=env,
                extra_args=extra,
                result_id=sid,
            )
            result = replace(retry, attempt=2)
        if log_dir is not None:
            (log_dir / _log_name(sid)).write_text(result.log_excerpt + "\n", encoding="utf-8")
        return result

    if plan:
        with ThreadPoolExecutor(max_workers=config.max_parallel) as pool:
            results = list(pool.map(execute, plan))
    else:
        results = []
    results.sort(key=lambda r: r.suite_id)
    return RunReport(results=tuple(results), started=started, finished=utc_now())


def collect_coverage(
    suite: TestSuiteRecord,
    runner: Runner,
    coverage_output_path: Path,
    workdir: Path,
    *,
    timeout_seconds: float = 600.0,
    run_id: str | None = None,
    env: Mapping[str, str] | None = None,
) -> CoverageRecord:
    """Run a suite in coverage mode and parse what it wrote.

    The contract with the suite command is the FASTFAIL_COVERAGE_OUT
    environment variable: the command must leave a Cobertura-subset XML
    document at that path.
    """
    coverage_output_path = Path(coverage_output_path)
    merged = dict(env) if env else {}
    merged[COVERAGE_OUT_ENV] = str(coverage_output_path)
    runner.run(suite.command, workdir, timeout_seconds, merged)
    if not coverage_output_path.exists():
        raise IngestionError(
            f"suite {suite.suite_id!r} produced no coverage file at {coverage_output_path}"
        )
    fresh_run_id = run_id or f"cov-{uuid.uuid4().hex[:12]}"
    try:
        return parse_cobertura(
            coverage_output_path.read_bytes(), suite_id=suite.suite_id, run_id=fresh_run_id
        )
    except IngestionError as exc:
        raise IngestionError(f"{coverage_output_path}: {exc}") from exc


def run_report_doc(report: RunReport) -> dict:
    """JSON-ready run report."""
    return {
        "overall": report.overall.value,
        "started": report.started.isoformat(),
        "finished": report.finished.isoformat(),
        "results": [
            {
                "suite": r.suite_id,
                "status": r.status.value,
                "duration_s": round(r.duration_seconds, 6),
                "attempt": r.attempt,
                "log_excerpt": r.log_excerpt,
            }
            for r in report.results
        ],
    }
