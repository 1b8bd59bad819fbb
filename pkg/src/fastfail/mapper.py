"""Suite-to-file mapping database built from coverage evidence.

The database is a bipartite index: test suites on one side, source files on
the other, with an edge wherever a coverage run showed the suite executing
the file. Selection queries it to turn a changed-file set into an impacted
suite set. The database is a value: every operation returns a new instance,
so snapshots can be shared read-only across parallel test runs.
"""

from __future__ import annotations

import hashlib
import json
import posixpath
from dataclasses import dataclass, field, replace
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .clocks import from_rfc3339, to_rfc3339, utc_now
from .errors import (
    FormatError,
    PathError,
    SchemaVersionError,
    SuiteConflictError,
    UnknownSuiteError,
)

SCHEMA_VERSION = 1
DEFAULT_HASH_ALGO = "sha256"

# Separator between a suite id and a case id in edge endpoints. A qualified
# endpoint "S::c" is valid only when suite S exists and lists case c.
CASE_SEP = "::"


# ---------------------------------------------------------------------------
# Paths and classification
# ---------------------------------------------------------------------------


class Classification(str, Enum):
    CODE = "code"
    CONFIG = "config"
    INFO = "info"
    TEST_ASSET = "test_asset"


def normalize_path(path: str) -> str:
    """Normalize to forward slashes, no leading slash, no dot segments.

    Raises PathError for empty, absolute, or root-escaping paths.
    """
    if not isinstance(path, str) or not path.strip():
        raise PathError(f"empty path: {path!r}")
    candidate = path.replace("\\", "/")
    if candidate.startswith("/"):
        raise PathError(f"absolute path not allowed: {path!r}")
    normalized = posixpath.normpath(candidate)
    if normalized == "." or normalized.startswith("../") or normalized == "..":
        raise PathError(f"path escapes the repository root: {path!r}")
    if any(seg == ".." for seg in normalized.split("/")):
        raise PathError(f"path contains '..' segment: {path!r}")
    return normalized


@dataclass(frozen=True)
class ClassificationRules:
    """Deterministic extension/name rules; configurable allowlists, no heuristics."""

    source_exts: frozenset[str] = frozenset(
        {
            ".java", ".py", ".c", ".cc", ".cpp", ".cxx", ".h", ".hh", ".hpp",
            ".cs", ".go", ".js", ".jsx", ".ts", ".tsx", ".rb", ".scala",
            ".kt", ".rs", ".m", ".mm", ".swift", ".sh", ".pl", ".php", ".groovy",
        }
    )
    config_exts: frozenset[str] = frozenset(
        {".cfg", ".conf", ".ini", ".yaml", ".yml", ".properties"}
    )
    # .json/.xml are data in general but configuration under conf roots.
    conf_scoped_exts: frozenset[str] = frozenset({".json", ".xml"})
    conf_dirs: frozenset[str] = frozenset({"conf"})
    info_exts: frozenset[str] = frozenset({".md", ".txt", ".rst"})
    info_names: frozenset[str] = frozenset({"LICENSE", "NOTICE"})
    test_asset_roots: tuple[str, ...] = ("tests/data",)


DEFAULT_RULES = ClassificationRules()


def classify_path(path: str, rules: ClassificationRules = DEFAULT_RULES) -> Classification:
    """Classify a normalized repo path; same input always yields the same output."""
    normalized = normalize_path(path)
    for root in rules.test_asset_roots:
        if normalized == root or normalized.startswith(root + "/"):
            return Classification.TEST_ASSET
    name = posixpath.basename(normalized)
    ext = posixpath.splitext(name)[1].lower()
    if name in rules.info_names:
        return Classification.INFO
    if ext in rules.config_exts:
        return Classification.CONFIG
    if ext in rules.conf_scoped_exts:
        top = normalized.split("/", 1)[0]
        if top in rules.conf_dirs:
            return Classification.CONFIG
    if ext in rules.info_exts:
        return Classification.INFO
    if ext in rules.source_exts:
        return Classification.CODE
    return Classification.INFO


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------


class SuiteKind(str, Enum):
    UNIT = "unit"
    FUNCTIONAL = "functional"


@dataclass(frozen=True)
class FileRecord:
    path: str
    content_hash: str
    classification: Classification
    first_seen: datetime
    last_modified: datetime

    def __post_init__(self) -> None:
        if normalize_path(self.path) != self.path:
            raise PathError(f"file record path not normalized: {self.path!r}")
        if self.first_seen > self.last_modified:
            raise ValueError(f"{self.path}: first_seen after last_modified")


@dataclass(frozen=True)
class TestSuiteRecord:
    suite_id: str
    kind: SuiteKind
    command: tuple[str, ...]
    case_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.suite_id:
            raise ValueError("suite_id must be non-empty")
        if not self.command:
            raise ValueError(f"suite {self.suite_id!r}: command must be non-empty")


@dataclass(frozen=True)
class MapEdge:
    suite_id: str
    path: str
    provenance: str
    recorded_at: datetime


@dataclass(frozen=True)
class CoverageEntry:
    """Per-file evidence from one coverage run.

    `hits` is the file's total hit count (sum of line hits). Line-level
    detail is optional: the text fallback format only carries the hit sum.
    """

    path: str
    hits: int
    lines_covered: int | None = None
    lines_total: int | None = None

    def __post_init__(self) -> None:
        if self.hits < 0:
            raise ValueError(f"{self.path}: negative hit count")


@dataclass(frozen=True)
class CoverageRecord:
    suite_id: str
    run_id: str
    covered: tuple[CoverageEntry, ...]


@dataclass(frozen=True)
class MapperDatabase:
    generated_at: datetime
    files: Mapping[str, FileRecord] = field(default_factory=dict)
    suites: Mapping[str, TestSuiteRecord] = field(default_factory=dict)
    edges: Mapping[tuple[str, str], MapEdge] = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION
    hash_algo: str = DEFAULT_HASH_ALGO


@dataclass(frozen=True)
class ScanDelta:
    """Partition of Code-classified paths produced by one reconcile pass."""

    added: frozenset[str] = frozenset()
    removed: frozenset[str] = frozenset()
    modified: frozenset[str] = frozenset()
    unchanged: frozenset[str] = frozenset()

    @property
    def empty(self) -> bool:
        return not (self.added or self.removed or self.modified)


def new_database(now: datetime | None = None) -> MapperDatabase:
    return MapperDatabase(generated_at=now if now is not None else utc_now())


def split_suite_ref(endpoint: str) -> tuple[str, str | None]:
    """Split an edge endpoint into (suite_id, case_id or None)."""
    if CASE_SEP in endpoint:
        suite_id, case_id = endpoint.split(CASE_SEP, 1)
        return suite_id, case_id
    return endpoint, None


def validate_database(db: MapperDatabase) -> None:
    """Check referential integrity; raises ValueError on violation."""
    for (suite_ref, path), edge in db.edges.items():
        if edge.suite_id != suite_ref or edge.path != path:
            raise ValueError(f"edge key/value mismatch at ({suite_ref}, {path})")
        base, case = split_suite_ref(suite_ref)
        suite = db.suites.get(base)
        if suite is None:
            raise ValueError(f"edge references unknown suite {suite_ref!r}")
        if case is not None and case not in suite.case_ids:
            raise ValueError(f"edge references unknown case {suite_ref!r}")
        record = db.files.get(path)
        if record is None:
            raise ValueError(f"edge references unknown file {path!r}")
        if record.classification is not Classification.CODE:
            raise ValueError(f"edge references non-code file {path!r}")


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def _register_suite_for(
    db_suites: dict[str, TestSuiteRecord], suite_ref: str, auto_register: bool
) -> None:
    base, case = split_suite_ref(suite_ref)
    suite = db_suites.get(base)
    if suite is None:
        if not auto_register:
            raise UnknownSuiteError(f"unknown suite {base!r} and auto-register is disabled")
        suite = TestSuiteRecord(
            suite_id=base,
            kind=SuiteKind.FUNCTIONAL,
            command=("true",),
            case_ids=(case,) if case else (),
        )
        db_suites[base] = suite
        return
    if case is not None and case not in suite.case_ids:
        if not auto_register:
            raise UnknownSuiteError(
                f"unknown case {case!r} of suite {base!r} and auto-register is disabled"
            )
        db_suites[base] = replace(suite, case_ids=suite.case_ids + (case,))


def ingest_coverage(
    db: MapperDatabase,
    record: CoverageRecord,
    threshold: int = 1,
    *,
    auto_register: bool = False,
    rules: ClassificationRules = DEFAULT_RULES,
    now: datetime | None = None,
) -> MapperDatabase:
    """Fold one coverage run into the database.

    Every covered Code path with at least `threshold` hits gains an edge to
    the record's suite; existing edges are refreshed, never duplicated.
    Config/info/asset paths are silently skipped. Covered Code paths the
    database has not seen yet are inserted with an empty content hash; a
    later reconcile fills it in.
    """
    if threshold < 1:
        raise ValueError(f"threshold must be >= 1, got {threshold}")
    stamp = now if now is not None else utc_now()
    suites = dict(db.suites)
    _register_suite_for(suites, record.suite_id, auto_register)
    files = dict(db.files)
    edges = dict(db.edges)
    for entry in record.covered:
        path = normalize_path(entry.path)
        if entry.hits < threshold:
            continue
        if classify_path(path, rules) is not Classification.CODE:
            continue
        if path not in files:
            files[path] = FileRecord(
                path=path,
                content_hash="",
                classification=Classification.CODE,
                first_seen=stamp,
                last_modified=stamp,
            )
        edges[(record.suite_id, path)] = MapEdge(
            suite_id=record.suite_id,
            path=path,
            provenance=record.run_id,
            recorded_at=stamp,
        )
    return replace(db, files=files, suites=suites, edges=edges)


def bootstrap(
    records: Iterable[CoverageRecord],
    file_listing: Iterable[tuple[str, str]],
    *,
    suites: Iterable[TestSuiteRecord] | None = None,
    threshold: int = 1,
    rules: ClassificationRules = DEFAULT_RULES,
    now: datetime | None = None,
) -> MapperDatabase:
    """Build a database from scratch: listing supplies files, records supply edges.

    Optional suite metadata overrides the auto-registration defaults; two
    entries for the same id with different kinds are a conflict.
    """
    stamp = now if now is not None else utc_now()
    db = new_database(stamp)
    files: dict[str, FileRecord] = {}
    for raw_path, content_hash in file_listing:
        path = normalize_path(raw_path)
        if classify_path(path, rules) is not Classification.CODE:
            continue
        files[path] = FileRecord(
            path=path,
            content_hash=content_hash,
            classification=Classification.CODE,
            first_seen=stamp,
            last_modified=stamp,
        )
    registered: dict[str, TestSuiteRecord] = {}
    for suite in suites or ():
        existing = registered.get(suite.suite_id)
        if existing is not None and existing.kind is not suite.kind:
            raise SuiteConflictError(
                f"suite {suite.suite_id!r} registered as both "
                f"{existing.kind.value} and {suite.kind.value}"
            )
        registered[suite.suite_id] = suite
    db = replace(db, files=files, suites=registered)
    for record in records:
        db = ingest_coverage(
            db, record, threshold, auto_register=True, rules=rules, now=stamp
        )
    return db


def reconcile(
    db: MapperDatabase,
    current_listing: Iterable[tuple[str, str]],
    *,
    rules: ClassificationRules = DEFAULT_RULES,
    now: datetime | None = None,
) -> tuple[MapperDatabase, ScanDelta]:
    """Sync the database against a fresh repository listing.

    Added Code files are inserted unmapped (coverage will map them later),
    removed files are dropped along with their edges, modified files get a
    new hash. Non-Code listing entries are ignored entirely, which keeps the
    operation idempotent. Applying the same listing twice yields an empty
    second delta.
    """
    stamp = now if now is not None else utc_now()
    listing: dict[str, str] = {}
    for raw_path, content_hash in current_listing:
        path = normalize_path(raw_path)
        if classify_path(path, rules) is Classification.CODE:
            listing[path] = content_hash
    added = frozenset(listing.keys() - db.files.keys())
    removed = frozenset(db.files.keys() - listing.keys())
    survivors = db.files.keys() & listing.keys()
    modified = frozenset(p for p in survivors if db.files[p].content_hash != listing[p])
    unchanged = frozenset(survivors - modified)

    files = {p: r for p, r in db.files.items() if p not in removed}
    for path in added:
        files[path] = FileRecord(
            path=path,
            content_hash=listing[path],
            classification=Classification.CODE,
            first_seen=stamp,
            last_modified=stamp,
        )
    for path in modified:
        files[path] = replace(
            files[path], content_hash=listing[path], last_modified=stamp
        )
    edges = {key: e for key, e in db.edges.items() if e.path not in removed}
    delta = ScanDelta(added=added, removed=removed, modified=modified, unchanged=unchanged)
    return replace(db, files=files, edges=edges), delta


def suites_for_files(db: MapperDatabase, paths: Iterable[str]) -> frozenset[str]:
    """Edge endpoints touching any of the given paths. Unknown paths contribute nothing."""
    wanted = set(paths)
    return frozenset(e.suite_id for e in db.edges.values() if e.path in wanted)


# ---------------------------------------------------------------------------
# Persistence (canonical JSON)
# ---------------------------------------------------------------------------


def save(db: MapperDatabase) -> bytes:
    """Serialize canonically: fixed key order, arrays sorted, so equal databases
    produce byte-identical documents."""
    doc = {
        "schema_version": db.schema_version,
        "hash_algo": db.hash_algo,
        "generated_at": to_rfc3339(db.generated_at),
        "files": [
            {
                "path": f.path,
                "hash": f.content_hash,
                "class": f.classification.value,
                "first_seen": to_rfc3339(f.first_seen),
                "last_modified": to_rfc3339(f.last_modified),
            }
            for f in sorted(db.files.values(), key=lambda f: f.path)
        ],
        "suites": [
            {
                "id": s.suite_id,
                "kind": s.kind.value,
                "command": list(s.command),
                "cases": list(s.case_ids),
            }
            for s in sorted(db.suites.values(), key=lambda s: s.suite_id)
        ],
        "edges": [
            {
                "suite": e.suite_id,
                "path": e.path,
                "provenance": e.provenance,
                "recorded_at": to_rfc3339(e.recorded_at),
            }
            for e in sorted(db.edges.values(), key=lambda e: (e.suite_id, e.path))
        ],
    }
    return (json.dumps(doc, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def _require(doc: Mapping, key: str, kind: type, where: str):
    if key not in doc:
        raise FormatError(f"{where}: missing key {key!r}")
    value = doc[key]
    if not isinstance(value, kind):
        raise FormatError(f"{where}.{key}: expected {kind.__name__}, got {type(value).__name__}")
    return value


def load(data: bytes) -> MapperDatabase:
    """Parse a mapper document; inverse of `save` up to structural equality."""
    try:
        doc = json.loads(data.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise FormatError(f"mapper db is not UTF-8: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(
            f"mapper db is not valid JSON: {exc.msg} at line {exc.lineno} column {exc.colno}"
        ) from exc
    if not isinstance(doc, dict):
        raise FormatError("mapper db: top level must be an object")
    version = _require(doc, "schema_version", int, "$")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"unsupported schema_version {version}; this build reads {SCHEMA_VERSION}"
        )
    hash_algo = _require(doc, "hash_algo", str, "$")
    generated_at = _parse_ts(_require(doc, "generated_at", str, "$"), "$.generated_at")

    files: dict[str, FileRecord] = {}
    for i, item in enumerate(_require(doc, "files", list, "$")):
        where = f"$.files[{i}]"
        if not isinstance(item, dict):
            raise FormatError(f"{where}: expected object")
        path = _require(item, "path", str, where)
        if path in files:
            raise FormatError(f"{where}: duplicate path {path!r}")
        try:
            record = FileRecord(
                path=path,
                content_hash=_require(item, "hash", str, where),
                classification=Classification(_require(item, "class", str, where)),
                first_seen=_parse_ts(_require(item, "first_seen", str, where), where),
                last_modified=_parse_ts(_require(item, "last_modified", str, where), where),
            )
        except ValueError as exc:
            raise FormatError(f"{where}: {exc}") from exc
        files[path] = record

    suites: dict[str, TestSuiteRecord] = {}
    for i, item in enumerate(_require(doc, "suites", list, "$")):
        where = f"$.suites[{i}]"
        if not isinstance(item, dict):
            raise FormatError(f"{where}: expected object")
        suite_id = _require(item, "id", str, where)
        if suite_id in suites:
            raise FormatError(f"{where}: duplicate suite id {suite_id!r}")
        command = _require(item, "command", list, where)
        cases = _require(item, "cases", list, where)
        try:
            suites[suite_id] = TestSuiteRecord(
                suite_id=suite_id,
                kind=SuiteKind(_require(item, "kind", str, where)),
                command=tuple(str(a) for a in command),
                case_ids=tuple(str(c) for c in cases),
            )
        except ValueError as exc:
            raise FormatError(f"{where}: {exc}") from exc

    edges: dict[tuple[str, str], MapEdge] = {}
    for i, item in enumerate(_require(doc, "edges", list, "$")):
        where = f"$.edges[{i}]"
        if not isinstance(item, dict):
            raise FormatError(f"{where}: expected object")
        suite_ref = _require(item, "suite", str, where)
        path = _require(item, "path", str, where)
        key = (suite_ref, path)
        if key in edges:
            raise FormatError(f"{where}: duplicate edge ({suite_ref}, {path})")
        edges[key] = MapEdge(
            suite_id=suite_ref,
            path=path,
            provenance=_require(item, "provenance", str, where),
            recorded_at=_parse_ts(_require(item, "recorded_at", str, where), where),
        )

    db = MapperDatabase(
        generated_at=generated_at,
        files=files,
        suites=suites,
        edges=edges,
        schema_version=version,
        hash_algo=hash_algo,
    )
    try:
        validate_database(db)
    except ValueError as exc:
        raise FormatError(f"mapper db failed integrity check: {exc}") from exc
    return db


def _parse_ts(text: str, where: str) -> datetime:
    try:
        return from_rfc3339(text)
    except ValueError as exc:
        raise FormatError(f"{where}: bad timestamp {text!r}") from exc


# ---------------------------------------------------------------------------
# Repository listings
# ---------------------------------------------------------------------------


def hash_bytes(data: bytes, algo: str = DEFAULT_HASH_ALGO) -> str:
    return hashlib.new(algo, data).hexdigest()


def list_tree(root: Path, algo: str = DEFAULT_HASH_ALGO) -> list[tuple[str, str]]:
    """Walk a directory into a sorted (path, hash) listing, skipping dot-dirs."""
    root = Path(root)
    if not root.is_dir():
        raise OSError(f"repository root is not a directory: {root}")
    listing: list[tuple[str, str]] = []
    for path in sorted(root.rglob("*")):
        rel = path.relative_to(root)
        if any(part.startswith(".") for part in rel.parts):
            continue
        if path.is_file():
            listing.append((rel.as_posix(), hash_bytes(path.read_bytes(), algo)))
    return listing


def code_paths(
    db: MapperDatabase, paths: Iterable[str], rules: ClassificationRules = DEFAULT_RULES
) -> frozenset[str]:
    """Filter paths to Code classification, preferring what the db recorded."""
    result = set()
    for path in paths:
        record = db.files.get(path)
        cls = record.classification if record is not None else classify_path(path, rules)
        if cls is Classification.CODE:
            result.add(path)
    return frozenset(result)


def edge_paths(db: MapperDatabase) -> frozenset[str]:
    return frozenset(e.path for e in db.edges.values())


def suite_file_map(db: MapperDatabase) -> dict[str, set[str]]:
    """Endpoint id -> set of mapped paths (includes case-qualified endpoints)."""
    out: dict[str, set[str]] = {}
    for edge in db.edges.values():
        out.setdefault(edge.suite_id, set()).add(edge.path)
    return out


def sequence_listing(pairs: Sequence[tuple[str, str]]) -> list[tuple[str, str]]:
    """Normalize a raw (path, hash) sequence, dropping duplicates (last wins)."""
    seen: dict[str, str] = {}
    for path, digest in pairs:
        seen[normalize_path(path)] = digest
    return sorted(seen.items())
