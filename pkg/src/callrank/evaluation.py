"""Recall@k, MRR, latency and entropy reports.

Report files are byte-deterministic given their inputs; wall-clock latency
goes to its own file so it never disturbs them.
"""

from __future__ import annotations

import csv
import io
import logging
import statistics
from collections.abc import Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import ngram
from .candidates import CallSiteRecord
from .corpus import FULL_NAMES, SUBTOKENS, FunctionSequence, build_vocabulary, group_by_project, to_subtokens
from .ranker import NGramSuggester, RankerConfig, Suggester, SuggestionList, complete

logger = logging.getLogger(__name__)

DEFAULT_KS = (1, 3, 5, 10)
SYSTEMS = ("baseline", "pv", "ngram", "ngram_cache")
ALL_PROJECTS = "ALL"
TOKEN_MODE_LABELS = {FULL_NAMES: "full", SUBTOKENS: "subtoken"}
OOV_MODES = ("incl_oov", "excl_oov")
CACHE_SCOPES = ("file", "project")


@dataclass(frozen=True)
class SiteResult:
    site_id: str
    project_id: str
    gold: str
    suggestions: tuple[str, ...]
    latency_ms: float = 0.0

    @property
    def rank(self) -> int | None:
        return gold_rank(self.gold, self.suggestions)


def gold_rank(gold: str, suggestions: Sequence[str] | SuggestionList) -> int | None:
    """1-based position of ``gold``; None when absent."""
    tokens = suggestions.tokens if isinstance(suggestions, SuggestionList) else suggestions
    for i, tok in enumerate(tokens, 1):
        if tok == gold:
            return i
    return None


def _ranks(results: Iterable) -> list[int | None]:
    out = []
    for r in results:
        if isinstance(r, SiteResult):
            out.append(r.rank)
        else:
            gold, suggestions = r
            out.append(gold_rank(gold, suggestions))
    if not out:
        raise ValueError("no results to score")
    return out


def recall_at_k(results: Iterable, k: int) -> float:
    """Share of results whose gold sits in the top ``k``.

    ``results`` holds ``SiteResult`` objects or ``(gold, suggestions)`` pairs.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    ranks = _ranks(results)
    return sum(1 for r in ranks if r is not None and r <= k) / len(ranks)


def mrr(results: Iterable) -> float:
    """Mean reciprocal rank; an absent gold contributes 0."""
    ranks = _ranks(results)
    return sum(1.0 / r for r in ranks if r is not None) / len(ranks)


@dataclass
class Metrics:
    n: int
    recall: dict[int, float]
    mrr: float
    max_rank: int
    mean_latency_ms: float
    median_latency_ms: float
    excluded: int = 0

    def problems(self) -> list[str]:
        out = []
        ks = sorted(self.recall)
        for a, b in zip(ks, ks[1:]):
            if self.recall[a] > self.recall[b]:
                out.append(f"R@{a}={self.recall[a]:.6f} exceeds R@{b}={self.recall[b]:.6f}")
        if not 0.0 <= self.mrr <= 1.0:
            out.append(f"MRR={self.mrr} outside [0, 1]")
        if ks and ks[-1] >= self.max_rank and self.mrr > self.recall[ks[-1]] + 1e-12:
            out.append(f"MRR={self.mrr:.6f} exceeds R@{ks[-1]}={self.recall[ks[-1]]:.6f}")
        return out


def summarize(results: Sequence[SiteResult], ks: Sequence[int] = DEFAULT_KS, excluded: int = 0) -> Metrics:
    ranks = _ranks(results)
    lat = [r.latency_ms for r in results]
    return Metrics(
        n=len(results),
        recall={k: recall_at_k(results, k) for k in ks},
        mrr=mrr(results),
        max_rank=max((r for r in ranks if r is not None), default=0),
        mean_latency_ms=statistics.fmean(lat),
        median_latency_ms=statistics.median(lat),
        excluded=excluded,
    )


def soundness_problems(site: CallSiteRecord, suggestions: SuggestionList, max_size: int) -> list[str]:
    allowed = set(site.candidates)
    out = [f"{site.site_id}: suggested {t!r} is not a candidate" for t in suggestions.tokens if t not in allowed]
    if len(suggestions) > max_size:
        out.append(f"{site.site_id}: {len(suggestions)} suggestions exceed max_size {max_size}")
    return out


class _CacheStream:
    """Feeds the cache of an n-gram suggester in evaluation order.

    A scope is one file (or one project).  Within it, each record's
    context is compared with the tokens already observed for the current
    method: an extension continues the method, anything else starts a new
    one.  After each site the gold call is observed.
    """

    def __init__(self, suggester: NGramSuggester, scope: str = "file"):
        if scope not in CACHE_SCOPES:
            raise ValueError(f"cache scope must be one of {CACHE_SCOPES}")
        self.by_project = scope == "project"
        self.cache = suggester.cache
        self.vocab = suggester.model.vocab
        self.scope: str | None = None
        self.seen: list[str] = []

    def before(self, site: CallSiteRecord) -> None:
        key = site.project_id if self.by_project else site.file_id
        if key != self.scope:
            self.cache.open_scope(key)
            self.scope = key
            self.seen = []
        ctx = site.context
        if len(ctx) < len(self.seen) or ctx[: len(self.seen)] != self.seen:
            self.cache.start_sequence()
            self.seen = []
        for tok in ctx[len(self.seen) :]:
            self.cache.observe(self.vocab.lookup(tok))
        self.seen = list(ctx)

    def after(self, site: CallSiteRecord) -> None:
        self.cache.observe(self.vocab.lookup(site.gold))
        self.seen.append(site.gold)


def run_system(
    records: Sequence[CallSiteRecord],
    suggester: Suggester | None,
    config: RankerConfig,
    workers: int = 1,
    cache_scope: str = "file",
) -> tuple[list[SiteResult], list[str]]:
    """Complete every record; returns results and soundness violations.

    Cache-backed suggesters run as a single ordered stream; the others may
    fan out over ``workers`` threads with results kept in input order.
    """
    stream = None
    if isinstance(suggester, NGramSuggester) and suggester.cache is not None:
        stream = _CacheStream(suggester, cache_scope)
    if stream is not None:
        outputs = []
        for site in records:
            stream.before(site)
            outputs.append(complete(site, suggester, config))
            stream.after(site)
    elif workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            outputs = list(ex.map(lambda s: complete(s, suggester, config), records))
    else:
        outputs = [complete(s, suggester, config) for s in records]
    results, violations = [], []
    for site, (lst, ms) in zip(records, outputs):
        violations.extend(soundness_problems(site, lst, config.max_size))
        results.append(SiteResult(site.site_id, site.project_id, site.gold, tuple(lst.tokens), ms))
    return results, violations


@dataclass
class EvalReport:
    ks: tuple[int, ...] = DEFAULT_KS
    systems: list[str] = field(default_factory=list)
    projects: list[str] = field(default_factory=list)
    cells: dict[tuple[str, str], Metrics] = field(default_factory=dict)
    violations: list[str] = field(default_factory=list)

    def get(self, project: str, system: str) -> Metrics | None:
        return self.cells.get((project, system))

    def add_system(
        self, system: str, results: Sequence[SiteResult], excluded: Mapping[str, int] | None = None
    ) -> None:
        excluded = excluded or {}
        if system not in self.systems:
            self.systems.append(system)
        by_project: dict[str, list[SiteResult]] = {}
        for r in results:
            by_project.setdefault(r.project_id, []).append(r)
        for p, rs in by_project.items():
            self.cells[(p, system)] = summarize(rs, self.ks, excluded.get(p, 0))
            if p not in self.projects:
                self.projects.append(p)
        self.projects.sort()
        if results:
            self.cells[(ALL_PROJECTS, system)] = summarize(results, self.ks, sum(excluded.values()))

    def invariant_problems(self) -> list[str]:
        out = list(self.violations)
        for (p, s), m in sorted(self.cells.items()):
            out.extend(f"{p}/{s}: {msg}" for msg in m.problems())
        return out

    def rows(self) -> list[str]:
        return [*self.projects, ALL_PROJECTS] if self.projects else []

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["project", "system", "sites", "excluded", *(f"R@{k}" for k in self.ks), "MRR"])
        for p in self.rows():
            for s in self.systems:
                m = self.get(p, s)
                if m is None:
                    continue
                w.writerow([p, s, m.n, m.excluded, *(f"{m.recall[k]:.6f}" for k in self.ks), f"{m.mrr:.6f}"])
        return buf.getvalue()

    def latency_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["project", "system", "sites", "mean_ms", "median_ms"])
        for p in self.rows():
            for s in self.systems:
                m = self.get(p, s)
                if m is not None:
                    w.writerow([p, s, m.n, f"{m.mean_latency_ms:.3f}", f"{m.median_latency_ms:.3f}"])
        return buf.getvalue()


def evaluate(
    records: Sequence[CallSiteRecord],
    systems: Mapping[str, Suggester | None],
    config: RankerConfig | None = None,
    excluded: Mapping[str, int] | None = None,
    ks: Sequence[int] = DEFAULT_KS,
    workers: int = 1,
    cache_scope: str = "file",
) -> EvalReport:
    """Run each labelled system (``None`` = alphabetical baseline) over ``records``."""
    if not records:
        raise ValueError("no call sites to evaluate")
    ks = tuple(sorted(set(ks)))
    if not ks or ks[0] < 1:
        raise ValueError("ks must be positive")
    config = config or RankerConfig()
    report = EvalReport(ks=ks)
    for label, suggester in systems.items():
        results, violations = run_system(records, suggester, config, workers, cache_scope)
        report.violations.extend(f"{label}: {v}" for v in violations)
        report.add_system(label, results, excluded)
        logger.info("%s: R@10 %.4f MRR %.4f", label, recall_at_k(results, 10), mrr(results))
    return report


# --------------------------------------------------------------------------
# side-by-side comparison

_METRIC_FORMAT = {"MRR": "{:.3f}"}


def _metric(m: Metrics, name: str) -> float:
    return m.mrr if name == "MRR" else m.recall[int(name[2:])]


def _fmt(name: str, v: float) -> str:
    return _METRIC_FORMAT.get(name, "{:.2f}").format(v if name == "MRR" else 100.0 * v)


def _ranking(values: dict[str, float]) -> tuple[list[str], list[str]]:
    """Systems holding the best and the second-best distinct value."""
    distinct = sorted(set(values.values()), reverse=True)
    best = [s for s, v in values.items() if v == distinct[0]] if distinct else []
    second = [s for s, v in values.items() if len(distinct) > 1 and v == distinct[1]]
    return best, second


def compare_report(
    report: EvalReport, systems: Sequence[str] = SYSTEMS, metrics: Sequence[str] = ("R@10", "MRR")
) -> tuple[str, str]:
    """Per-project table of ``systems`` x ``metrics`` as (markdown, csv).

    Recall is shown in percent.  In markdown the best value of a row is
    bold and the second best underlined-style italic; missing cells are
    ``-``.  The CSV names best and second-best systems in extra columns.
    """
    for m in metrics:
        if m != "MRR" and (not m.startswith("R@") or int(m[2:]) not in report.ks):
            raise ValueError(f"metric {m} not in report")
    head = ["project", "sites", "excluded"] + [f"{s} {m}" for s in systems for m in metrics]
    md = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(
        ["project", "sites", "excluded"]
        + [f"{s}_{m}" for s in systems for m in metrics]
        + [f"{tag}_{m}" for m in metrics for tag in ("best", "second")]
    )
    for p in report.rows():
        present = {s: report.get(p, s) for s in systems}
        any_m = next((m for m in present.values() if m is not None), None)
        if any_m is None:
            continue
        marks = {}
        for name in metrics:
            values = {s: round(_metric(m, name), 12) for s, m in present.items() if m is not None}
            marks[name] = _ranking(values)
        md_cells, csv_cells = [], []
        for s in systems:
            for name in metrics:
                m = present[s]
                if m is None:
                    md_cells.append("-")
                    csv_cells.append("")
                    continue
                text = _fmt(name, _metric(m, name))
                best, second = marks[name]
                csv_cells.append(text)
                md_cells.append(f"**{text}**" if s in best else f"_{text}_" if s in second else text)
        md.append("| " + " | ".join([p, str(any_m.n), str(any_m.excluded), *md_cells]) + " |")
        tags = [";".join(marks[name][i]) for name in metrics for i in (0, 1)]
        w.writerow([p, any_m.n, any_m.excluded, *csv_cells, *tags])
    return "\n".join(md) + "\n", buf.getvalue()


# --------------------------------------------------------------------------
# entropy curves


@dataclass(frozen=True)
class EntropyRow:
    project: str
    order: int
    token_mode: str
    oov_mode: str
    bits: float


def entropy_report(
    train: Sequence[FunctionSequence],
    test: Sequence[FunctionSequence],
    orders: Iterable[int] = range(2, 11),
    token_modes: Sequence[str] = (FULL_NAMES, SUBTOKENS),
    smoothing: ngram.SmoothingConfig | None = None,
    min_count: Mapping[str, int] | None = None,
    workers: int = 1,
) -> list[EntropyRow]:
    """Cross-entropy of each test project under models of every order.

    One model per (mode, order) is trained on ``train`` (full-name
    sequences; subtoken mode re-tokenizes them).  Rows come with and
    without out-of-vocabulary targets.
    """
    orders = list(orders)
    if not orders or min(orders) < 2:
        raise ValueError("orders must be >= 2")
    rows = []
    for mode in token_modes:
        tr = list(train) if mode == FULL_NAMES else to_subtokens(train)
        te = list(test) if mode == FULL_NAMES else to_subtokens(test)
        vocab = build_vocabulary(tr, (min_count or {}).get(mode))
        projects = group_by_project(te)
        for n in orders:
            model = ngram.train(tr, n, vocab, smoothing, workers)
            for p in sorted(projects):
                for oov in OOV_MODES:
                    try:
                        bits = ngram.cross_entropy(model, projects[p], exclude_oov=oov == "excl_oov")
                    except ValueError:  # nothing left once OOV targets are dropped
                        bits = float("nan")
                    rows.append(EntropyRow(p, n, TOKEN_MODE_LABELS[mode], oov, bits))
    return rows


def entropy_csv(rows: Iterable[EntropyRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["project", "order", "token_mode", "oov_mode", "entropy_bits"])
    for r in rows:
        w.writerow([r.project, r.order, r.token_mode, r.oov_mode, f"{r.bits:.6f}"])
    return buf.getvalue()
