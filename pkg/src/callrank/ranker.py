"""Turn a call context into a ranked, type-feasible suggestion list.

A suggester (paragraph vectors or an n-gram model) proposes a temporary
list of likely calls; the final list keeps, in that order, only those
calls the static analysis offered, up to ``max_size`` entries.
"""

from __future__ import annotations

import logging
import time
import warnings
from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .candidates import CallSiteRecord
from .corpus import FunctionSequence
from .embedding import InferenceWarning, PVModel
from .ngram import CacheState, NGramModel, predict_top_k

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RankerConfig:
    max_size: int = 10
    sim_threshold: float = 0.25
    neighbor_budget: int = 100
    fill_tail: bool = False
    skip_context: bool = False

    def __post_init__(self) -> None:
        if self.max_size < 1:
            raise ValueError("max_size must be >= 1")
        if not -1.0 <= self.sim_threshold <= 1.0:
            raise ValueError("sim_threshold must lie in [-1, 1]")
        if self.neighbor_budget < 1:
            raise ValueError("neighbor_budget must be >= 1")


@dataclass
class SuggestionList:
    tokens: list[str] = field(default_factory=list)
    scores: list[float] = field(default_factory=list)

    def append(self, token: str, score: float) -> None:
        self.tokens.append(token)
        self.scores.append(score)

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(zip(self.tokens, self.scores))

    def rank_of(self, token: str) -> int | None:
        """1-based rank of ``token``, or None."""
        try:
            return self.tokens.index(token) + 1
        except ValueError:
            return None


@dataclass
class PVSuggester:
    model: PVModel
    name: str = "pv"


@dataclass
class NGramSuggester:
    model: NGramModel
    cache: CacheState | None = None
    name: str = "ngram"


Suggester = PVSuggester | NGramSuggester


def extract_context(sequence: FunctionSequence, position: int) -> list[str]:
    """Method name followed by the calls before call ``position`` (0-based)."""
    if not 0 <= position < len(sequence.calls):
        raise IndexError(f"position {position} out of range for {len(sequence.calls)} calls")
    return [sequence.method_name, *sequence.calls[:position]]


def temporary_list_pv(model: PVModel, context: Sequence[str], config: RankerConfig) -> SuggestionList:
    """Calls of the training sequences most similar to the context.

    Neighbours are visited by decreasing cosine similarity and their calls
    appended in order, each token once.  The walk stops at the first
    neighbour below ``sim_threshold``, after ``neighbor_budget``
    neighbours, or once the list holds ``neighbor_budget`` tokens.

    With ``config.skip_context`` a neighbour's call occurrences matched by
    the context's own calls are passed over first (a neighbour's second
    ``g`` is still offered after a context holding one ``g``).
    """
    out = SuggestionList()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", InferenceWarning)
        vec = model.infer_vector(context)
    if caught or not np.any(vec):
        logger.debug("context %r has no in-vocabulary token", list(context))
        return out
    written = Counter(context[1:]) if config.skip_context else Counter()
    seen: set[str] = set()
    for hit in model.most_similar(vec, config.neighbor_budget, min_score=config.sim_threshold):
        pending = written.copy()
        for tok in model.docs[hit.doc_id].calls:
            if pending[tok] > 0:
                pending[tok] -= 1
                continue
            if tok not in seen:
                seen.add(tok)
                out.append(tok, hit.score)
                if len(out) >= config.neighbor_budget:
                    return out
    return out


def temporary_list_ngram(
    model: NGramModel, context: Sequence[str], config: RankerConfig, cache: CacheState | None = None
) -> SuggestionList:
    out = SuggestionList()
    for tok, p in predict_top_k(model, context, config.neighbor_budget, cache):
        out.append(tok, p)
    return out


def rank(temporary: SuggestionList, candidates: Sequence[str], config: RankerConfig) -> SuggestionList:
    """Ordered intersection of the temporary list with ``candidates``."""
    allowed = set(candidates)
    out = SuggestionList()
    for tok, score in temporary:
        if len(out) >= config.max_size:
            break
        if tok in allowed and tok not in out.tokens:
            out.append(tok, score)
    if config.fill_tail:
        for tok in candidates:
            if len(out) >= config.max_size:
                break
            if tok not in out.tokens:
                out.append(tok, float("nan"))
    return out


def baseline(candidates: Sequence[str], config: RankerConfig) -> SuggestionList:
    """The static analysis list as-is: first ``max_size`` candidates alphabetically."""
    return rank(SuggestionList(), candidates, RankerConfig(config.max_size, fill_tail=True))


def temporary_list(suggester: Suggester, context: Sequence[str], config: RankerConfig) -> SuggestionList:
    if isinstance(suggester, PVSuggester):
        return temporary_list_pv(suggester.model, context, config)
    return temporary_list_ngram(suggester.model, context, config, suggester.cache)


def complete(
    site: CallSiteRecord, suggester: Suggester | None, config: RankerConfig
) -> tuple[SuggestionList, float]:
    """Rank the site's candidates; returns the list and wall-clock latency in ms.

    ``suggester=None`` yields the alphabetical baseline.
    """
    t0 = time.perf_counter()
    if suggester is None:
        result = baseline(site.candidates, config)
    else:
        result = rank(temporary_list(suggester, site.context, config), site.candidates, config)
    return result, (time.perf_counter() - t0) * 1000.0
