"""Version-control abstraction: commit journals, changed-file sets, polling.

The journal is a deterministic stand-in for a real VCS: a linear chain of
commits, each listing per-file changes. External systems plug in through
the same adapter contract the journal implements, so everything downstream
(selection, bisection, the watcher) is testable without a VCS install.
"""

from __future__ import annotations

import re
from abc import ABC, abstractmethod
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

from .errors import (
    AdapterUnavailableError,
    JournalIntegrityError,
    JournalParseError,
    RangeError,
    UnknownCommitError,
)
from .mapper import normalize_path


class ChangeKind(Enum):
    ADDED = "A"
    MODIFIED = "M"
    DELETED = "D"
    RENAMED = "R"


@dataclass(frozen=True)
class Change:
    path: str
    kind: ChangeKind
    old_path: str | None = None

    def __post_init__(self) -> None:
        if self.kind is ChangeKind.RENAMED:
            if not self.old_path or self.old_path == self.path:
                raise ValueError(f"rename of {self.path!r} needs a distinct old path")
        elif self.old_path is not None:
            raise ValueError(f"{self.kind.name} change must not carry an old path")


@dataclass(frozen=True)
class ChangeSet:
    commit_id: str
    parent_id: str | None
    author: str
    timestamp: datetime
    changes: tuple[Change, ...]

    def __post_init__(self) -> None:
        if not self.commit_id:
            raise ValueError("commit_id must be non-empty")
        paths = [c.path for c in self.changes]
        if len(paths) != len(set(paths)):
            raise ValueError(f"commit {self.commit_id}: duplicate paths in one changeset")


@dataclass(frozen=True)
class CommitJournal:
    commits: tuple[ChangeSet, ...]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        prev: ChangeSet | None = None
        for commit in self.commits:
            if commit.commit_id in seen:
                raise JournalIntegrityError(f"duplicate commit id {commit.commit_id!r}")
            seen.add(commit.commit_id)
            expected_parent = prev.commit_id if prev else None
            if commit.parent_id != expected_parent:
                raise JournalIntegrityError(
                    f"commit {commit.commit_id!r}: parent {commit.parent_id!r}, "
                    f"expected {expected_parent!r}"
                )
            if prev and commit.timestamp < prev.timestamp:
                raise JournalIntegrityError(
                    f"commit {commit.commit_id!r}: timestamp precedes its parent"
                )
            prev = commit

    @cached_property
    def _index(self) -> dict[str, int]:
        return {c.commit_id: i for i, c in enumerate(self.commits)}

    def index_of(self, commit_id: str) -> int:
        try:
            return self._index[commit_id]
        except KeyError:
            raise UnknownCommitError(f"unknown commit {commit_id!r}") from None

    def commit(self, commit_id: str) -> ChangeSet:
        return self.commits[self.index_of(commit_id)]

    @property
    def head(self) -> ChangeSet:
        if not self.commits:
            raise UnknownCommitError("journal is empty")
        return self.commits[-1]


# ---------------------------------------------------------------------------
# Journal text format
# ---------------------------------------------------------------------------

_HEADER_RE = re.compile(r"^commit (\S+) parent (\S+) author (\S+) time (\d+)$")
_RENAME_RE = re.compile(r"^R (.+) -> (.+)$")


def parse_journal(data: bytes) -> CommitJournal:
    """Parse the journal text format; inverse of `render_journal`."""
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise JournalParseError(f"journal is not UTF-8: {exc}") from exc
    commits: list[ChangeSet] = []
    header: re.Match | None = None
    changes: list[Change] = []

    def flush(lineno: int) -> None:
        nonlocal header, changes
        if header is None:
            return
        cid, parent, author, seconds = header.groups()
        try:
            commits.append(
                ChangeSet(
                    commit_id=cid,
                    parent_id=None if parent == "-" else parent,
                    author=author,
                    timestamp=datetime.fromtimestamp(int(seconds), tz=timezone.utc),
                    changes=tuple(changes),
                )
            )
        except ValueError as exc:
            raise JournalParseError(f"line {lineno}: {exc}") from exc
        header, changes = None, []

    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line:
            flush(lineno)
            continue
        if line.startswith("commit "):
            if header is not None:
                raise JournalParseError(
                    f"line {lineno}: commit header inside a block (missing blank line?)"
                )
            match = _HEADER_RE.match(line)
            if not match:
                raise JournalParseError(f"line {lineno}: malformed commit header")
            header = match
            continue
        if header is None:
            raise JournalParseError(f"line {lineno}: change line outside a commit block")
        changes.append(_parse_change_line(line, lineno))
    flush(len(text.splitlines()) + 1)
    try:
        return CommitJournal(commits=tuple(commits))
    except JournalIntegrityError:
        raise


def _parse_change_line(line: str, lineno: int) -> Change:
    try:
        if line.startswith("A "):
            return Change(normalize_path(line[2:]), ChangeKind.ADDED)
        if line.startswith("M "):
            return Change(normalize_path(line[2:]), ChangeKind.MODIFIED)
        if line.startswith("D "):
            return Change(normalize_path(line[2:]), ChangeKind.DELETED)
        match = _RENAME_RE.match(line)
        if match:
            return Change(
                normalize_path(match.group(2)),
                ChangeKind.RENAMED,
                old_path=normalize_path(match.group(1)),
            )
    except ValueError as exc:
        raise JournalParseError(f"line {lineno}: {exc}") from exc
    raise JournalParseError(f"line {lineno}: unrecognized change line {line!r}")


def render_journal(journal: CommitJournal) -> bytes:
    blocks: list[str] = []
    for commit in journal.commits:
        lines = [
            "commit {} parent {} author {} time {}".format(
                commit.commit_id,
                commit.parent_id if commit.parent_id is not None else "-",
                commit.author,
                int(commit.timestamp.timestamp()),
            )
        ]
        for change in commit.changes:
            if change.kind is ChangeKind.RENAMED:
                lines.append(f"R {change.old_path} -> {change.path}")
            else:
                lines.append(f"{change.kind.value} {change.path}")
        blocks.append("\n".join(lines))
    return ("\n\n".join(blocks) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# Net-effect change algebra
# ---------------------------------------------------------------------------


@dataclass
class _NetEntry:
    origin: str | None  # path at range start; None when created within the range
    modified: bool


def net_changes(changesets: Iterable[ChangeSet]) -> frozenset[Change]:
    """Fold a commit sequence into per-path net effects.

    Added-then-deleted cancels, added-then-modified stays Added,
    modified-then-deleted nets to Deleted, and renames rewrite subsequent
    paths (a rename chain reports the range-start path as the old path).
    """
    live: dict[str, _NetEntry] = {}
    dead: set[str] = set()  # origins that existed at range start and are now gone

    for commit in changesets:
        for change in commit.changes:
            path = change.path
            if change.kind is ChangeKind.ADDED:
                if path in dead:
                    dead.discard(path)
                    live[path] = _NetEntry(origin=path, modified=True)
                elif path in live:
                    live[path].modified = True
                else:
                    live[path] = _NetEntry(origin=None, modified=False)
            elif change.kind is ChangeKind.MODIFIED:
                if path in live:
                    live[path].modified = True
                else:
                    live[path] = _NetEntry(origin=path, modified=True)
            elif change.kind is ChangeKind.DELETED:
                entry = live.pop(path, None)
                if entry is None:
                    dead.add(path)
                elif entry.origin is not None:
                    dead.add(entry.origin)
            else:  # RENAMED
                old = change.old_path or ""
                entry = live.pop(old, None)
                if entry is None:
                    entry = _NetEntry(origin=old, modified=False)
                if path in live:
                    displaced = live.pop(path)
                    if displaced.origin is not None:
                        dead.add(displaced.origin)
                if path in dead:
                    # Rename onto a path that existed at range start: the net
                    # view is a modification of that path plus loss of the source.
                    dead.discard(path)
                    if entry.origin is not None:
                        dead.add(entry.origin)
                    entry = _NetEntry(origin=path, modified=True)
                live[path] = entry

    result: set[Change] = set()
    for path, entry in live.items():
        if entry.origin is None:
            result.add(Change(path, ChangeKind.ADDED))
        elif entry.origin != path:
            result.add(Change(path, ChangeKind.RENAMED, old_path=entry.origin))
        elif entry.modified:
            result.add(Change(path, ChangeKind.MODIFIED))
    for origin in dead:
        result.add(Change(origin, ChangeKind.DELETED))
    return frozenset(result)


def changes_between(journal: CommitJournal, from_id: str, to_id: str) -> frozenset[Change]:
    """Net changed files over (from_id, to_id]; from is exclusive."""
    start = journal.index_of(from_id)
    end = journal.index_of(to_id)
    if start >= end:
        raise RangeError(f"range ({from_id!r}, {to_id!r}] is empty or reversed")
    return net_changes(journal.commits[start + 1 : end + 1])


def apply_changes(tree: dict[str, str], changesets: Iterable[ChangeSet]) -> dict[str, str]:
    """Replay raw changes over a path->version tree (the materialize primitive)."""
    tree = dict(tree)
    for commit in changesets:
        for change in commit.changes:
            if change.kind in (ChangeKind.ADDED, ChangeKind.MODIFIED):
                tree[change.path] = commit.commit_id
            elif change.kind is ChangeKind.DELETED:
                tree.pop(change.path, None)
            else:
                version = tree.pop(change.old_path or "", commit.commit_id)
                tree[change.path] = version
    return tree


def materialize(
    journal: CommitJournal, commit_id: str, base_tree: dict[str, str] | None = None
) -> dict[str, str]:
    """Snapshot of path -> content version after replaying up to commit_id."""
    end = journal.index_of(commit_id)
    return apply_changes(base_tree or {}, journal.commits[: end + 1])


# ---------------------------------------------------------------------------
# Adapters
# ---------------------------------------------------------------------------


class VcsAdapter(ABC):
    """Thin contract the orchestrator polls: new commits and tree snapshots."""

    @abstractmethod
    def poll(self, since_commit: str | None) -> list[ChangeSet]:
        """All commits strictly after since_commit, oldest first; [] when current."""

    @abstractmethod
    def materialize(self, commit_id: str) -> dict[str, str]:
        """Path -> content-version snapshot at the given commit."""


class JournalAdapter(VcsAdapter):
    """Adapter over a journal file on disk; re-reads it on every poll so the
    file may grow between polls."""

    def __init__(self, journal_path: Path) -> None:
        self.journal_path = Path(journal_path)

    def read(self) -> CommitJournal:
        try:
            data = self.journal_path.read_bytes()
        except OSError as exc:
            raise AdapterUnavailableError(f"cannot read journal: {exc}") from exc
        return parse_journal(data)

    def poll(self, since_commit: str | None) -> list[ChangeSet]:
        journal = self.read()
        if since_commit is None:
            return list(journal.commits)
        start = journal.index_of(since_commit)
        return list(journal.commits[start + 1 :])

    def materialize(self, commit_id: str) -> dict[str, str]:
        return materialize(self.read(), commit_id)


def changed_paths(changes: Iterable[Change]) -> frozenset[str]:
    """Every path a change set touches, including rename sources."""
    paths: set[str] = set()
    for change in changes:
        paths.add(change.path)
        if change.old_path:
            paths.add(change.old_path)
    return frozenset(paths)


def batch_head(batch: Sequence[ChangeSet]) -> str:
    if not batch:
        raise ValueError("empty commit batch")
    return batch[-1].commit_id
