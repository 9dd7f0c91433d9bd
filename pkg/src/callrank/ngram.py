"""Order-n language model over call tokens.

Counts are kept per context (a tuple of token ids, left-padded with
``BOS``) as a child-count table plus a total.  Three estimators share the
counts: plain MLE, Jelinek-Mercer interpolation grounded at a uniform
distribution, and interpolated Kneser-Ney with a single absolute discount.
A per-scope cache can be mixed in at query time.
"""

from __future__ import annotations

import io
import json
import math
import os
import struct
from collections import Counter, deque
from collections.abc import Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .corpus import FunctionSequence, Vocabulary

BOS = -1

MLE = "mle"
JELINEK_MERCER = "jelinek_mercer"
KNESER_NEY = "kneser_ney"
SMOOTHING_KINDS = (MLE, JELINEK_MERCER, KNESER_NEY)
_KIND_ALIASES = {"jm": JELINEK_MERCER, "kn": KNESER_NEY}

MAGIC = b"CRNG"
FORMAT_VERSION = 1

Context = tuple[int, ...]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SmoothingConfig:
    kind: str = JELINEK_MERCER
    lam: float = 0.5
    discount: float = 0.75

    def __post_init__(self) -> None:
        kind = _KIND_ALIASES.get(self.kind, self.kind)
        object.__setattr__(self, "kind", kind)
        if kind not in SMOOTHING_KINDS:
            raise ConfigError(f"unknown smoothing kind {self.kind!r}")
        if kind == JELINEK_MERCER and not 0.0 < self.lam < 1.0:
            raise ConfigError(f"lambda must lie in (0, 1), got {self.lam}")
        if kind == KNESER_NEY and not 0.0 < self.discount < 1.0:
            raise ConfigError(f"discount must lie in (0, 1), got {self.discount}")


def _as_tokens(seq: FunctionSequence | Sequence[str]) -> Sequence[str]:
    return seq.tokens if isinstance(seq, FunctionSequence) else seq


def _count_shard(args: tuple[list[list[int]], int]) -> dict[Context, Counter[int]]:
    encoded, order = args
    counts: dict[Context, Counter[int]] = {}
    pad = [BOS] * (order - 1)
    for ids in encoded:
        padded = pad + ids
        for i in range(order - 1, len(padded)):
            w = padded[i]
            for k in range(order):
                h = tuple(padded[i - k : i])
                c = counts.get(h)
                if c is None:
                    c = counts[h] = Counter()
                c[w] += 1
    return counts


class NGramModel:
    """Immutable once trained; safe to share between threads."""

    def __init__(
        self,
        order: int,
        vocab: Vocabulary,
        smoothing: SmoothingConfig | None = None,
        counts: dict[Context, dict[int, int]] | None = None,
        projects: Iterable[str] = (),
    ):
        if not 2 <= order <= 10:
            raise ConfigError(f"order must be in [2, 10], got {order}")
        self.order = order
        self.vocab = vocab
        if isinstance(smoothing, str):
            smoothing = SmoothingConfig(smoothing)
        self.smoothing = smoothing or SmoothingConfig()
        self.counts: dict[Context, dict[int, int]] = counts or {}
        self.projects = sorted(set(projects))
        self._finalize()

    def _finalize(self) -> None:
        self.totals = {h: sum(c.values()) for h, c in self.counts.items()}
        # continuation counts N1+(. h w) for contexts shorter than order-1
        cont: dict[Context, dict[int, int]] = {}
        for g, children in self.counts.items():
            if not g:
                continue
            h = g[1:]
            table = cont.setdefault(h, {})
            for w in children:
                table[w] = table.get(w, 0) + 1
        self.continuation = cont
        self.cont_totals = {h: sum(c.values()) for h, c in cont.items()}
        self._arrays: dict[tuple[str, Context], tuple[np.ndarray, np.ndarray]] = {}

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def history(self, context: Sequence[str] | Sequence[int]) -> Context:
        """Last ``order - 1`` ids of ``context``, left-padded with BOS."""
        ids = [c if isinstance(c, (int, np.integer)) else self.vocab.lookup(c) for c in context]
        n = self.order - 1
        ids = ids[-n:] if n else []
        return tuple([BOS] * (n - len(ids)) + ids)

    def _word_id(self, word: str | int) -> int:
        return int(word) if isinstance(word, (int, np.integer)) else self.vocab.lookup(word)

    # -- scalar path -----------------------------------------------------

    def prob(self, context: Sequence[str] | Sequence[int], word: str | int) -> float:
        return self._prob(self.history(context), self._word_id(word))

    def _prob(self, h: Context, w: int) -> float:
        kind = self.smoothing.kind
        uniform = 1.0 / self.vocab_size
        if kind == MLE:
            tot = self.totals.get(h)
            return self.counts[h].get(w, 0) / tot if tot else uniform
        p = uniform
        top = len(h)
        if kind == JELINEK_MERCER:
            lam = self.smoothing.lam
            for k in range(top + 1):
                ctx = h[top - k :]
                tot = self.totals.get(ctx)
                if tot:
                    p = lam * self.counts[ctx].get(w, 0) / tot + (1.0 - lam) * p
            return p
        d = self.smoothing.discount
        for k in range(top + 1):
            ctx = h[top - k :]
            if k == top:
                table, tot = self.counts.get(ctx), self.totals.get(ctx)
            else:
                table, tot = self.continuation.get(ctx), self.cont_totals.get(ctx)
            if tot:
                c = table.get(w, 0)  # type: ignore[union-attr]
                p = max(c - d, 0.0) / tot + d * len(table) / tot * p  # type: ignore[arg-type]
        return p

    # -- vector path -----------------------------------------------------

    def _table_arrays(self, which: str, ctx: Context) -> tuple[np.ndarray, np.ndarray]:
        key = (which, ctx)
        arr = self._arrays.get(key)
        if arr is None:
            table = (self.counts if which == "c" else self.continuation)[ctx]
            ids = np.fromiter(table.keys(), dtype=np.int64, count=len(table))
            vals = np.fromiter(table.values(), dtype=np.float64, count=len(table))
            arr = self._arrays[key] = (ids, vals)
        return arr

    def distribution(self, context: Sequence[str] | Sequence[int]) -> np.ndarray:
        """P(w | context) for every vocabulary id, as a float64 array."""
        return self._distribution(self.history(context))

    def _distribution(self, h: Context) -> np.ndarray:
        V = self.vocab_size
        kind = self.smoothing.kind
        p = np.full(V, 1.0 / V)
        top = len(h)
        if kind == MLE:
            tot = self.totals.get(h)
            if tot:
                ids, vals = self._table_arrays("c", h)
                p = np.zeros(V)
                p[ids] = vals / tot
            return p
        if kind == JELINEK_MERCER:
            lam = self.smoothing.lam
            for k in range(top + 1):
                ctx = h[top - k :]
                tot = self.totals.get(ctx)
                if tot:
                    ids, vals = self._table_arrays("c", ctx)
                    p *= 1.0 - lam
                    p[ids] += lam * vals / tot
            return p
        d = self.smoothing.discount
        for k in range(top + 1):
            ctx = h[top - k :]
            if k == top:
                tot, which = self.totals.get(ctx), "c"
            else:
                tot, which = self.cont_totals.get(ctx), "n"
            if tot:
                ids, vals = self._table_arrays(which, ctx)
                p *= d * len(ids) / tot
                p[ids] += np.maximum(vals - d, 0.0) / tot
        return p

    # -- persistence -----------------------------------------------------

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    def to_bytes(self) -> bytes:
        header = {
            "order": self.order,
            "smoothing": asdict(self.smoothing),
            "vocabulary": self.vocab.to_dict(),
            "projects": self.projects,
        }
        hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        buf = io.BytesIO()
        buf.write(MAGIC)
        buf.write(struct.pack("<HI", FORMAT_VERSION, len(hb)))
        buf.write(hb)
        by_len: dict[int, list[tuple[Context, int, int]]] = {}
        for h, children in self.counts.items():
            for w, c in children.items():
                by_len.setdefault(len(h) + 1, []).append((h, w, c))
        for length in range(1, self.order + 1):
            rows = sorted(by_len.get(length, []))
            grams = np.array([(*h, w) for h, w, _ in rows], dtype="<i4").reshape(len(rows), length)
            cnts = np.array([c for _, _, c in rows], dtype="<i8")
            buf.write(struct.pack("<I", len(rows)))
            buf.write(grams.tobytes())
            buf.write(cnts.tobytes())
        return buf.getvalue()

    @classmethod
    def load(cls, path: str | os.PathLike) -> NGramModel:
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())

    @classmethod
    def from_bytes(cls, data: bytes) -> NGramModel:
        if data[:4] != MAGIC:
            raise ValueError("not an n-gram model file")
        version, hlen = struct.unpack_from("<HI", data, 4)
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported n-gram model version {version}")
        off = 10
        header = json.loads(data[off : off + hlen])
        off += hlen
        order = header["order"]
        counts: dict[Context, dict[int, int]] = {}
        for length in range(1, order + 1):
            (m,) = struct.unpack_from("<I", data, off)
            off += 4
            grams = np.frombuffer(data, dtype="<i4", count=m * length, offset=off).reshape(m, length)
            off += 4 * m * length
            cnts = np.frombuffer(data, dtype="<i8", count=m, offset=off)
            off += 8 * m
            for row, c in zip(grams.tolist(), cnts.tolist()):
                counts.setdefault(tuple(row[:-1]), {})[row[-1]] = c
        return cls(
            order,
            Vocabulary.from_dict(header["vocabulary"]),
            SmoothingConfig(**header["smoothing"]),
            counts,
            header["projects"],
        )

    def stats(self) -> dict[str, object]:
        out: dict[str, object] = {
            "order": self.order,
            "smoothing": self.smoothing.kind,
            "lambda": self.smoothing.lam,
            "discount": self.smoothing.discount,
            "vocab_size": self.vocab_size,
            "contexts": len(self.counts),
        }
        for length in range(1, self.order + 1):
            out[f"ngrams_{length}"] = sum(len(c) for h, c in self.counts.items() if len(h) == length - 1)
        out["training_projects"] = ",".join(self.projects)
        return out


def train(
    sequences: Iterable[FunctionSequence | Sequence[str]],
    order: int,
    vocab: Vocabulary,
    smoothing: SmoothingConfig | str | None = None,
    workers: int = 1,
) -> NGramModel:
    """Count every 1..order-gram of the BOS-padded sequences.

    Out-of-vocabulary tokens are counted as ``<unk>``.  With ``workers > 1``
    shards are counted in separate processes and summed; the result does
    not depend on the shard layout.
    """
    if order < 2:
        raise ConfigError(f"order must be >= 2, got {order}")
    seqs = list(sequences)
    projects = {s.project_id for s in seqs if isinstance(s, FunctionSequence)}
    encoded = [vocab.encode(_as_tokens(s)) for s in seqs]
    if workers > 1 and len(encoded) > 1:
        shards = [(encoded[i::workers], order) for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_count_shard, shards))
    else:
        parts = [_count_shard((encoded, order))]
    merged: dict[Context, dict[int, int]] = {}
    for part in parts:
        for h, children in part.items():
            table = merged.setdefault(h, {})
            for w, c in children.items():
                table[w] = table.get(w, 0) + c
    return NGramModel(order, vocab, smoothing, merged, projects)


def prob(model: NGramModel, context: Sequence[str], word: str) -> float:
    return model.prob(context, word)


def cross_entropy(
    model: NGramModel,
    sequences: Iterable[FunctionSequence | Sequence[str]],
    exclude_oov: bool = False,
) -> float:
    """Mean -log2 P(w_i | history) in bits per token.

    With ``exclude_oov`` positions whose target is ``<unk>`` are skipped
    (they still serve as history for later positions).
    """
    unk = model.vocab.unk_id
    total = 0.0
    n = 0
    pad = [BOS] * (model.order - 1)
    for s in sequences:
        ids = pad + model.vocab.encode(_as_tokens(s))
        for i in range(len(pad), len(ids)):
            w = ids[i]
            if exclude_oov and w == unk:
                continue
            p = model._prob(tuple(ids[i - len(pad) : i]), w)
            total += -math.log2(p) if p > 0 else math.inf
            n += 1
    if n == 0:
        raise ValueError("cross-entropy of an empty token stream is undefined")
    return total / n


# --------------------------------------------------------------------------
# cache component


class CacheState:
    """Bounded recency store of n-grams seen in the current scope.

    Single-threaded: one instance per evaluation stream.  ``open_scope``
    discards everything from the previous scope.
    """

    def __init__(self, order: int, gamma: float = 0.5, capacity: int = 10_000):
        if not 0.0 < gamma < 1.0:
            raise ConfigError(f"cache gamma must lie in (0, 1), got {gamma}")
        if order < 2:
            raise ConfigError("cache order must be >= 2")
        self.order = order
        self.gamma = gamma
        self.capacity = capacity
        self.scope: str | None = None
        self._clear()

    def _clear(self) -> None:
        self.counts: dict[Context, dict[int, int]] = {}
        self.totals: dict[Context, int] = {}
        self._recent: deque[list[tuple[Context, int]]] = deque()
        self._history: list[int] = [BOS] * (self.order - 1)

    def open_scope(self, scope: str) -> None:
        self.scope = scope
        self._clear()

    def close_scope(self) -> None:
        self.scope = None
        self._clear()

    def __len__(self) -> int:
        return len(self._recent)

    def start_sequence(self) -> None:
        self._history = [BOS] * (self.order - 1)

    def observe(self, token: int) -> None:
        grams = []
        for k in range(1, self.order):
            h = tuple(self._history[len(self._history) - k :])
            table = self.counts.setdefault(h, {})
            table[token] = table.get(token, 0) + 1
            self.totals[h] = self.totals.get(h, 0) + 1
            grams.append((h, token))
        self._recent.append(grams)
        self._history = self._history[1:] + [token]
        while len(self._recent) > self.capacity:
            for h, w in self._recent.popleft():
                table = self.counts[h]
                table[w] -= 1
                if not table[w]:
                    del table[w]
                self.totals[h] -= 1
                if not self.totals[h]:
                    del self.totals[h], self.counts[h]

    def observe_sequence(self, tokens: Iterable[int]) -> None:
        self.start_sequence()
        for t in tokens:
            self.observe(t)

    def lookup(self, h: Context) -> Context | None:
        """Longest non-empty suffix of ``h`` present in the cache."""
        h = h[len(h) - (self.order - 1) :] if len(h) >= self.order - 1 else h
        for k in range(len(h), 0, -1):
            ctx = h[len(h) - k :]
            if ctx in self.totals:
                return ctx
        return None


def cache_prob(model: NGramModel, cache: CacheState | None, context: Sequence[str] | Sequence[int], word: str | int) -> float:
    """gamma * P_cache + (1 - gamma) * P_base; the base probability when the
    cache has no matching context."""
    h = model.history(context)
    w = model._word_id(word)
    base = model._prob(h, w)
    if cache is None:
        return base
    ctx = cache.lookup(h)
    if ctx is None:
        return base
    p_cache = cache.counts[ctx].get(w, 0) / cache.totals[ctx]
    return cache.gamma * p_cache + (1.0 - cache.gamma) * base


def cache_distribution(model: NGramModel, cache: CacheState | None, context: Sequence[str] | Sequence[int]) -> np.ndarray:
    h = model.history(context)
    p = model._distribution(h)
    if cache is None:
        return p
    ctx = cache.lookup(h)
    if ctx is None:
        return p
    table = cache.counts[ctx]
    local = np.zeros_like(p)
    local[list(table.keys())] = np.array(list(table.values()), dtype=np.float64) / cache.totals[ctx]
    return cache.gamma * local + (1.0 - cache.gamma) * p


def predict_top_k(
    model: NGramModel,
    context: Sequence[str] | Sequence[int],
    k: int,
    cache: CacheState | None = None,
) -> list[tuple[str, float]]:
    """The ``k`` most probable next tokens (``<unk>`` excluded), best first;
    equal probabilities are ordered by token id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    p = cache_distribution(model, cache, context)
    p[model.vocab.unk_id] = -np.inf
    order = np.argsort(-p, kind="stable")
    top = [int(i) for i in order[: min(k, len(order) - 1)]]
    return [(model.vocab.itos[i], float(p[i])) for i in top]
