"""Turns a changed-file set into the minimal impacted test workload.

Selection is safe (every suite mapped to a changed code file is selected)
and minimal (nothing else is), with a configurable fallback when a changed
code file has no mapping at all: running everything is the only honest
answer for a file the mapper has never seen.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping

from .errors import DegenerateInputError
from .mapper import (
    Classification,
    ClassificationRules,
    DEFAULT_RULES,
    MapperDatabase,
    SuiteKind,
    classify_path,
    split_suite_ref,
)
from .vcs import Change, ChangeKind


class Fallback(Enum):
    NONE = "none"
    FULL_REGRESSION = "full"


@dataclass(frozen=True)
class SelectionPolicy:
    # "full": unmapped changed code files escalate to a full regression run.
    # "warn": record them and keep the minimal selection.
    on_unmapped: str = "full"

    def __post_init__(self) -> None:
        if self.on_unmapped not in ("full", "warn"):
            raise ValueError(f"unknown unmapped policy {self.on_unmapped!r}")


DEFAULT_POLICY = SelectionPolicy()


@dataclass(frozen=True)
class SelectionResult:
    changed_paths: frozenset[str]
    selected_functional: tuple[str, ...]
    selected_unit: tuple[str, ...]
    unmapped_code_paths: frozenset[str]
    fallback: Fallback


@dataclass(frozen=True)
class RoiEstimate:
    selected_seconds: float
    full_seconds: float
    reduction_fraction: float


def _classify(db: MapperDatabase, path: str, rules: ClassificationRules) -> Classification:
    record = db.files.get(path)
    if record is not None:
        return record.classification
    return classify_path(path, rules)


def _select(
    db: MapperDatabase,
    changed: Iterable[Change],
    policy: SelectionPolicy,
    kind: SuiteKind,
    rules: ClassificationRules,
) -> SelectionResult:
    changes = list(changed)
    changed_paths: set[str] = set()
    for change in changes:
        changed_paths.add(change.path)
        if change.old_path:
            changed_paths.add(change.old_path)
    code = {p for p in changed_paths if _classify(db, p, rules) is Classification.CODE}

    edges_by_path: dict[str, set[str]] = {}
    for edge in db.edges.values():
        edges_by_path.setdefault(edge.path, set()).add(edge.suite_id)

    # Suites of this kind that carry case-level evidence anywhere select at
    # case granularity; their suite-level edges are superseded by the detail.
    case_suites = {
        split_suite_ref(e.suite_id)[0]
        for e in db.edges.values()
        if split_suite_ref(e.suite_id)[1] is not None
    }

    selected: set[str] = set()
    for path in code:
        for endpoint in edges_by_path.get(path, ()):
            base, case = split_suite_ref(endpoint)
            suite = db.suites.get(base)
            if suite is None or suite.kind is not kind:
                continue
            if kind is SuiteKind.UNIT and base in case_suites:
                if case is not None:
                    selected.add(endpoint)
            else:
                selected.add(base)

    # A rename keeps its mapping when either side has edges; a path counts as
    # unmapped only when no change that touches it has any mapped side.
    unmapped: set[str] = set()
    for change in changes:
        sides = {p for p in (change.path, change.old_path) if p is not None and p in code}
        if sides and all(not edges_by_path.get(p) for p in sides):
            unmapped.update(sides)

    fallback = Fallback.NONE
    if unmapped and policy.on_unmapped == "full":
        fallback = Fallback.FULL_REGRESSION
        selected = {s.suite_id for s in db.suites.values() if s.kind is kind}

    ordered = tuple(sorted(selected))
    return SelectionResult(
        changed_paths=frozenset(changed_paths),
        selected_functional=ordered if kind is SuiteKind.FUNCTIONAL else (),
        selected_unit=ordered if kind is SuiteKind.UNIT else (),
        unmapped_code_paths=frozenset(unmapped),
        fallback=fallback,
    )


def select_functional(
    db: MapperDatabase,
    changed: Iterable[Change],
    policy: SelectionPolicy = DEFAULT_POLICY,
    rules: ClassificationRules = DEFAULT_RULES,
) -> SelectionResult:
    """Functional suites whose mapped files intersect the changed code paths.

    Deleted paths still select their formerly-mapped suites: regression risk
    survives a deletion. Non-code paths are ignored entirely.
    """
    return _select(db, changed, policy, SuiteKind.FUNCTIONAL, rules)


def select_unit(
    db: MapperDatabase,
    changed: Iterable[Change],
    policy: SelectionPolicy = DEFAULT_POLICY,
    rules: ClassificationRules = DEFAULT_RULES,
) -> SelectionResult:
    """Unit selection; drops to case granularity where per-case edges exist."""
    return _select(db, changed, policy, SuiteKind.UNIT, rules)


def merge_selections(functional: SelectionResult, unit: SelectionResult) -> SelectionResult:
    """Combine the two flow results into one workload."""
    fallback = (
        Fallback.FULL_REGRESSION
        if Fallback.FULL_REGRESSION in (functional.fallback, unit.fallback)
        else Fallback.NONE
    )
    return SelectionResult(
        changed_paths=functional.changed_paths | unit.changed_paths,
        selected_functional=functional.selected_functional,
        selected_unit=unit.selected_unit,
        unmapped_code_paths=functional.unmapped_code_paths | unit.unmapped_code_paths,
        fallback=fallback,
    )


def estimate_savings(
    result: SelectionResult,
    db: MapperDatabase,
    durations: Mapping[str, float],
    default_duration: float = 60.0,
) -> RoiEstimate:
    """Time saved versus running every suite in the database.

    Case-granular selections are billed as their parent suite (the runner
    cannot bill fractions it has no data for). A full-regression fallback
    saves nothing by definition.
    """
    full = sum(durations.get(sid, default_duration) for sid in db.suites)
    if full <= 0:
        raise DegenerateInputError("no suites with positive duration to estimate against")
    if result.fallback is Fallback.FULL_REGRESSION:
        return RoiEstimate(selected_seconds=full, full_seconds=full, reduction_fraction=0.0)
    parents = {
        split_suite_ref(sid)[0]
        for sid in (*result.selected_functional, *result.selected_unit)
    }
    selected = sum(durations.get(sid, default_duration) for sid in parents if sid in db.suites)
    reduction = min(1.0, max(0.0, 1.0 - selected / full))
    return RoiEstimate(
        selected_seconds=selected, full_seconds=full, reduction_fraction=reduction
    )


def selection_report(result: SelectionResult, roi: RoiEstimate | None = None) -> dict:
    """JSON-ready selection report."""
    doc: dict = {
        "changed": sorted(result.changed_paths),
        "functional": list(result.selected_functional),
        "unit": list(result.selected_unit),
        "unmapped": sorted(result.unmapped_code_paths),
        "fallback": result.fallback.value,
    }
    if roi is not None:
        doc["roi"] = {
            "selected_s": roi.selected_seconds,
            "full_s": roi.full_seconds,
            "reduction": roi.reduction_fraction,
        }
    return doc


def selection_report_json(result: SelectionResult, roi: RoiEstimate | None = None) -> str:
    return json.dumps(selection_report(result, roi), indent=2) + "\n"
