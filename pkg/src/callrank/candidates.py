"""Call-site records: the unit of evaluation.

A record holds the context of one call (method name plus the calls before
it), the call that was actually written, and the candidate list a static
analysis would offer at that point.  Externally produced candidate lists
(e.g. from a real type analysis) enter through the JSON-lines format.
"""

from __future__ import annotations

import json
import logging
import os
from collections.abc import Callable, Iterable, Iterator, Sequence
from dataclasses import dataclass, field

from .corpus import FunctionSequence, Vocabulary, group_by_project

logger = logging.getLogger(__name__)

CandidateSource = Callable[[FunctionSequence, int], Sequence[str]]

_FIELDS = ("site_id", "project_id", "file_id", "position", "context", "gold", "candidates")


@dataclass
class CallSiteRecord:
    site_id: str
    project_id: str
    file_id: str
    context: list[str]
    gold: str
    candidates: list[str]
    position: int = -1

    def __post_init__(self) -> None:
        if self.position < 0:
            self.position = len(self.context)

    def validate(self) -> list[str]:
        """Invariant violations of this record (empty when well-formed)."""
        problems = []
        if self.gold not in self.candidates:
            problems.append("gold not among candidates")
        if len(self.context) != self.position or not self.context:
            problems.append("context length does not match position")
        if len(set(self.candidates)) != len(self.candidates):
            problems.append("duplicate candidates")
        if self.candidates != sorted(self.candidates):
            problems.append("candidates not sorted")
        return problems

    def to_json(self) -> str:
        d = {k: getattr(self, k) for k in _FIELDS}
        return json.dumps(d, ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> CallSiteRecord:
        d = json.loads(line)
        return cls(
            site_id=str(d["site_id"]),
            project_id=d["project_id"],
            file_id=d["file_id"],
            context=list(d["context"]),
            gold=d["gold"],
            candidates=list(d["candidates"]),
            position=d.get("position", len(d["context"])),
        )


@dataclass
class BenchmarkSet:
    records: list[CallSiteRecord] = field(default_factory=list)
    excluded: dict[str, int] = field(default_factory=dict)

    def by_project(self) -> dict[str, list[CallSiteRecord]]:
        out: dict[str, list[CallSiteRecord]] = {}
        for r in self.records:
            out.setdefault(r.project_id, []).append(r)
        return out

    def coverage(self, vocab: Vocabulary, project: str | None = None) -> float:
        """Share of gold calls that are in ``vocab``."""
        recs = [r for r in self.records if project is None or r.project_id == project]
        if not recs:
            return 0.0
        return sum(r.gold in vocab for r in recs) / len(recs)

    def __len__(self) -> int:
        return len(self.records)


def naive_candidates(project_sequences: Iterable[FunctionSequence], file_id: str | None = None) -> list[str]:
    """Every distinct call and method name of the project, alphabetically.

    A crude stand-in for a type-based analysis: it never filters anything
    and so over-approximates what a real one would offer.  ``file_id`` is
    accepted for interface parity and currently ignored.
    """
    names: set[str] = set()
    for s in project_sequences:
        names.update(s.tokens)
    return sorted(names)


def project_candidate_source(sequences: Iterable[FunctionSequence]) -> CandidateSource:
    cache = {p: naive_candidates(seqs) for p, seqs in group_by_project(sequences).items()}
    return lambda seq, position: cache[seq.project_id]


def synthesize_call_sites(
    sequences: Sequence[FunctionSequence],
    candidate_source: CandidateSource | None = None,
    exclude_projects: Iterable[str] = (),
) -> BenchmarkSet:
    """One record per call of every method, in input order.

    Records whose gold call is missing from its candidate list are dropped
    and counted per project in ``BenchmarkSet.excluded``.
    """
    banned = set(exclude_projects)
    seqs = [s for s in sequences if s.project_id not in banned]
    source = candidate_source or project_candidate_source(seqs)
    out = BenchmarkSet()
    method_index: dict[str, int] = {}
    for s in seqs:
        m = method_index.get(s.source_id, 0)
        method_index[s.source_id] = m + 1
        for pos, gold in enumerate(s.calls):
            cands = sorted(set(source(s, pos)))
            if gold not in cands:
                out.excluded[s.project_id] = out.excluded.get(s.project_id, 0) + 1
                continue
            out.records.append(
                CallSiteRecord(
                    site_id=f"{s.source_id}#{m}:{pos + 1}",
                    project_id=s.project_id,
                    file_id=s.source_id,
                    context=[s.method_name, *s.calls[:pos]],
                    gold=gold,
                    candidates=cands,
                    position=pos + 1,
                )
            )
    if out.excluded:
        logger.info("excluded %d call sites whose gold call is not a candidate", sum(out.excluded.values()))
    return out


def write_callsites(records: Iterable[CallSiteRecord], path: str | os.PathLike) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for r in records:
            f.write(r.to_json() + "\n")
            n += 1
    return n


def iter_callsites(path: str | os.PathLike) -> Iterator[CallSiteRecord]:
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                yield CallSiteRecord.from_json(line)


def read_callsites(path: str | os.PathLike) -> list[CallSiteRecord]:
    return list(iter_callsites(path))
