"""Readers and writers for coverage evidence.

Two input shapes are accepted: a Cobertura-subset XML document (the
`<class filename=...>` elements and their `<lines><line number hits/>`
children) and a plain-text fallback of `suite<TAB>path<TAB>hits` lines.
A file's hit count is the sum of its line hits.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from pathlib import Path
from xml.sax.saxutils import quoteattr

from .errors import IngestionError
from .mapper import CoverageEntry, CoverageRecord


def parse_cobertura(data: bytes, suite_id: str, run_id: str) -> CoverageRecord:
    """Parse a Cobertura-subset report into one suite's coverage record.

    Multiple class elements sharing a filename (inner classes) are merged;
    duplicate line numbers within one file keep their maximum hit count.
    """
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise IngestionError(f"unparseable coverage XML: {exc}") from exc
    per_file: dict[str, dict[int, int]] = {}
    for cls in root.iter("class"):
        filename = cls.get("filename")
        if not filename:
            raise IngestionError("coverage XML: <class> element without filename")
        lines = per_file.setdefault(filename, {})
        for line in cls.findall("./lines/line"):
            try:
                number = int(line.get("number", ""))
                hits = int(line.get("hits", ""))
            except ValueError as exc:
                raise IngestionError(
                    f"coverage XML: bad line element under {filename!r}: {exc}"
                ) from exc
            if hits < 0:
                raise IngestionError(f"coverage XML: negative hits for {filename!r}")
            lines[number] = max(lines.get(number, 0), hits)
    covered = tuple(
        CoverageEntry(
            path=path,
            hits=sum(lines.values()),
            lines_covered=sum(1 for h in lines.values() if h > 0),
            lines_total=len(lines),
        )
        for path, lines in sorted(per_file.items())
    )
    return CoverageRecord(suite_id=suite_id, run_id=run_id, covered=covered)


def parse_coverage_text(data: bytes, run_id: str) -> list[CoverageRecord]:
    """Parse the `suite<TAB>path<TAB>hits` fallback; one record per suite."""
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise IngestionError(f"coverage text is not UTF-8: {exc}") from exc
    per_suite: dict[str, list[CoverageEntry]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) != 3:
            raise IngestionError(
                f"coverage text line {lineno}: expected suite<TAB>path<TAB>hits"
            )
        suite_id, path, hits_text = parts
        try:
            hits = int(hits_text)
        except ValueError as exc:
            raise IngestionError(f"coverage text line {lineno}: bad hit count") from exc
        if hits < 0:
            raise IngestionError(f"coverage text line {lineno}: negative hit count")
        per_suite.setdefault(suite_id, []).append(CoverageEntry(path=path, hits=hits))
    return [
        CoverageRecord(suite_id=suite_id, run_id=run_id, covered=tuple(entries))
        for suite_id, entries in sorted(per_suite.items())
    ]


def render_cobertura(file_lines: dict[str, list[tuple[int, int]]]) -> bytes:
    """Render a minimal Cobertura-subset document: path -> [(line, hits)]."""
    out = ['<?xml version="1.0" ?>', "<coverage>", "  <packages><package><classes>"]
    for path, lines in sorted(file_lines.items()):
        name = path.rsplit("/", 1)[-1].rsplit(".", 1)[0]
        out.append(f"    <class name={quoteattr(name)} filename={quoteattr(path)}>")
        out.append("      <lines>")
        for number, hits in lines:
            out.append(f'        <line number="{number}" hits="{hits}"/>')
        out.append("      </lines>")
        out.append("    </class>")
    out.append("  </classes></package></packages>")
    out.append("</coverage>")
    return ("\n".join(out) + "\n").encode("utf-8")


def load_coverage_dir(directory: Path) -> list[CoverageRecord]:
    """Load every coverage artifact in a directory.

    `*.xml` files are Cobertura reports whose suite id is the file stem;
    `*.tsv` files use the text fallback (suite ids are embedded per line).
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise IngestionError(f"coverage directory not found: {directory}")
    records: list[CoverageRecord] = []
    for path in sorted(directory.iterdir()):
        if path.suffix == ".xml":
            try:
                records.append(
                    parse_cobertura(path.read_bytes(), suite_id=path.stem, run_id=path.name)
                )
            except IngestionError as exc:
                raise IngestionError(f"{path}: {exc}") from exc
        elif path.suffix == ".tsv":
            try:
                records.extend(parse_coverage_text(path.read_bytes(), run_id=path.name))
            except IngestionError as exc:
                raise IngestionError(f"{path}: {exc}") from exc
    return records
