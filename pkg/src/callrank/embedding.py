"""PV-DBOW paragraph vectors trained with hierarchical softmax.

Each training sequence owns one document vector.  For every position of
a document, the document vector alone is asked to predict each token
within a randomly shrunk window around that position; the output
distribution is factorised along a Huffman tree over the vocabulary.
"""

from __future__ import annotations

import heapq
import io
import json
import logging
import os
import struct
import warnings
import zlib
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass, field

import numba
import numpy as np

from .corpus import FunctionSequence, Vocabulary, build_vocabulary

logger = logging.getLogger(__name__)

MAGIC = b"CRPV"
FORMAT_VERSION = 1


class InferenceWarning(UserWarning):
    """Raised (as a warning) when a context has no in-vocabulary token."""


@dataclass(frozen=True)
class HyperParams:
    dim: int = 300
    window: int = 15
    min_count: int = 20
    training: str = "hierarchical_softmax"
    epochs: int = 20
    alpha0: float = 0.025
    alpha_min: float = 1e-4
    seed: int = 1
    infer_steps: int = 50

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.epochs < 0 or self.infer_steps < 0:
            raise ValueError("epochs and infer_steps must be >= 0")
        if self.training != "hierarchical_softmax":
            raise ValueError("only hierarchical_softmax training is supported")
        if not 0 < self.alpha_min <= self.alpha0:
            raise ValueError("need 0 < alpha_min <= alpha0")


@dataclass(frozen=True, order=True)
class SimilarityHit:
    doc_id: int
    score: float


# --------------------------------------------------------------------------
# Huffman tree


@dataclass
class HuffmanTree:
    """Binary codes and inner-node paths for ``n`` leaves.

    ``codes[i]`` and ``points[i]`` run from the root down to leaf ``i``;
    inner nodes are numbered ``0 .. n-2``.
    """

    codes: list[np.ndarray]
    points: list[np.ndarray]
    code_flat: np.ndarray = field(init=False, repr=False)
    point_flat: np.ndarray = field(init=False, repr=False)
    offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        lengths = [len(c) for c in self.codes]
        self.offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
        self.code_flat = np.concatenate(self.codes).astype(np.int8) if self.codes else np.zeros(0, np.int8)
        self.point_flat = np.concatenate(self.points).astype(np.int64) if self.points else np.zeros(0, np.int64)

    @property
    def n_leaves(self) -> int:
        return len(self.codes)

    @property
    def n_inner(self) -> int:
        return self.n_leaves - 1


def build_huffman(freqs: Sequence[int] | Vocabulary) -> HuffmanTree:
    """Huffman tree over leaf frequencies; equal weights merge lowest index first.

    A Vocabulary argument builds the tree over its non-``<unk>`` tokens,
    leaf ``i`` standing for vocabulary id ``i + 1``.
    """
    if isinstance(freqs, Vocabulary):
        freqs = freqs.freqs[1:]
    n = len(freqs)
    if n < 2:
        raise ValueError("a Huffman tree needs at least two leaves")
    if any(f <= 0 for f in freqs):
        raise ValueError("leaf frequencies must be positive")
    heap = [(int(f), i) for i, f in enumerate(freqs)]
    heapq.heapify(heap)
    parent = [0] * (2 * n - 1)
    bit = [0] * (2 * n - 1)
    nxt = n
    while len(heap) > 1:
        f0, a = heapq.heappop(heap)
        f1, b = heapq.heappop(heap)
        parent[a], bit[a] = nxt, 0
        parent[b], bit[b] = nxt, 1
        heapq.heappush(heap, (f0 + f1, nxt))
        nxt += 1
    root = nxt - 1
    codes, points = [], []
    for leaf in range(n):
        c, p = [], []
        node = leaf
        while node != root:
            c.append(bit[node])
            node = parent[node]
            p.append(node - n)
        codes.append(np.array(c[::-1], dtype=np.int8))
        points.append(np.array(p[::-1], dtype=np.int64))
    return HuffmanTree(codes, points)


# --------------------------------------------------------------------------
# hierarchical softmax, float64 reference path


def _log_sigmoid(x: np.ndarray | float) -> np.ndarray | float:
    return -np.logaddexp(0.0, -x)


def hs_log_prob(tree: HuffmanTree, node_vectors: np.ndarray, context: np.ndarray, word: int) -> float:
    """log P(word | context) as a product of sigmoid branch decisions."""
    pts, code = tree.points[word], tree.codes[word]
    x = node_vectors[pts].astype(np.float64) @ np.asarray(context, dtype=np.float64)
    sign = 1.0 - 2.0 * code
    return float(np.sum(_log_sigmoid(sign * x)))


def hs_gradients(
    tree: HuffmanTree, node_vectors: np.ndarray, context: np.ndarray, word: int
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of ``hs_log_prob`` w.r.t. the context vector and w.r.t. the
    node vectors on the word's path (rows ordered as ``tree.points[word]``)."""
    pts, code = tree.points[word], tree.codes[word]
    nv = node_vectors[pts].astype(np.float64)
    h = np.asarray(context, dtype=np.float64)
    x = nv @ h
    g = 1.0 - code - 1.0 / (1.0 + np.exp(-x))
    return g @ nv, np.outer(g, h)


def gradient_check(
    tree: HuffmanTree, node_vectors: np.ndarray, context: np.ndarray, word: int, h: float = 1e-5
) -> float:
    """Largest relative error between analytic and central-difference gradients."""
    nodes = np.array(node_vectors, dtype=np.float64)
    ctx = np.array(context, dtype=np.float64)
    g_ctx, g_nodes = hs_gradients(tree, nodes, ctx, word)

    num_ctx = np.zeros_like(ctx)
    for i in range(ctx.size):
        up, down = ctx.copy(), ctx.copy()
        up[i] += h
        down[i] -= h
        num_ctx[i] = (hs_log_prob(tree, nodes, up, word) - hs_log_prob(tree, nodes, down, word)) / (2 * h)

    pts = tree.points[word]
    num_nodes = np.zeros_like(g_nodes)
    for r, node in enumerate(pts):
        for i in range(ctx.size):
            up, down = nodes.copy(), nodes.copy()
            up[node, i] += h
            down[node, i] -= h
            num_nodes[r, i] = (hs_log_prob(tree, up, ctx, word) - hs_log_prob(tree, down, ctx, word)) / (2 * h)

    def rel(a: np.ndarray, b: np.ndarray) -> float:
        scale = max(np.linalg.norm(a), np.linalg.norm(b))
        return 0.0 if scale == 0 else float(np.linalg.norm(a - b) / scale)

    return max(rel(g_ctx, num_ctx), rel(g_nodes, num_nodes))


# --------------------------------------------------------------------------
# SGD kernels (float32)


@numba.njit(cache=True, nogil=True)
def _predict_update(vec, syn1, word, code_flat, point_flat, offsets, alpha, work, train_nodes):
    dim = vec.shape[0]
    loss = 0.0
    for p in range(offsets[word], offsets[word + 1]):
        node = point_flat[p]
        x = np.float32(0.0)
        for k in range(dim):
            x += vec[k] * syn1[node, k]
        code = code_flat[p]
        if x > 30.0:
            f = 1.0
        elif x < -30.0:
            f = 0.0
        else:
            f = 1.0 / (1.0 + np.exp(-x))
        sx = x if code == 0 else -x
        if sx < -30.0:
            loss += -sx
        else:
            loss += np.log1p(np.exp(-sx))
        g = np.float32((1.0 - code - f) * alpha)
        for k in range(dim):
            work[k] += g * syn1[node, k]
        if train_nodes:
            for k in range(dim):
                syn1[node, k] += g * vec[k]
    return loss


@numba.njit(cache=True, nogil=True)
def _train_docs(
    doc_vecs, syn1, doc_order, tok_flat, tok_offsets, windows,
    code_flat, point_flat, offsets, alpha0, alpha_min, words_done, total_words, train_nodes,
):
    dim = doc_vecs.shape[1]
    work = np.zeros(dim, dtype=np.float32)
    loss = 0.0
    npred = 0
    for di in range(doc_order.shape[0]):
        d = doc_order[di]
        start = tok_offsets[d]
        end = tok_offsets[d + 1]
        L = end - start
        vec = doc_vecs[d]
        for i in range(L):
            alpha = alpha0 - (alpha0 - alpha_min) * (words_done / total_words)
            if alpha < alpha_min:
                alpha = alpha_min
            b = windows[start + i]
            lo = i - b
            if lo < 0:
                lo = 0
            hi = i + b + 1
            if hi > L:
                hi = L
            for j in range(lo, hi):
                work[:] = 0.0
                loss += _predict_update(vec, syn1, tok_flat[start + j], code_flat, point_flat, offsets, alpha, work, train_nodes)
                npred += 1
                for k in range(dim):
                    vec[k] += work[k]
            words_done += 1
    return loss, npred, words_done


@numba.njit(cache=True, nogil=True)
def _objective(doc_vecs, syn1, tok_flat, tok_offsets, code_flat, point_flat, offsets):
    # mean -log P(token | doc vector) over every token of every document
    total = 0.0
    for d in range(doc_vecs.shape[0]):
        vec = doc_vecs[d]
        for j in range(tok_offsets[d], tok_offsets[d + 1]):
            word = tok_flat[j]
            for p in range(offsets[word], offsets[word + 1]):
                x = 0.0
                for k in range(vec.shape[0]):
                    x += vec[k] * syn1[point_flat[p], k]
                sx = x if code_flat[p] == 0 else -x
                total += -sx if sx < -30.0 else np.log1p(np.exp(-sx))
    n = tok_offsets[-1]
    return total / n if n > 0 else 0.0


@numba.njit(cache=True, parallel=True)
def _train_docs_parallel(
    doc_vecs, syn1, doc_order, tok_flat, tok_offsets, windows,
    code_flat, point_flat, offsets, alpha0, alpha_min, words_done, total_words, workers,
):
    # lock-free updates of shared node vectors; results depend on scheduling
    n = doc_order.shape[0]
    losses = np.zeros(workers)
    npreds = np.zeros(workers, dtype=np.int64)
    done = np.zeros(workers, dtype=np.int64)
    for w in numba.prange(workers):
        lo = n * w // workers
        hi = n * (w + 1) // workers
        l, npred, wd = _train_docs(
            doc_vecs, syn1, doc_order[lo:hi], tok_flat, tok_offsets, windows,
            code_flat, point_flat, offsets, alpha0, alpha_min, words_done, total_words, True,
        )
        losses[w] = l
        npreds[w] = npred
        done[w] = wd - words_done
    return losses.sum(), npreds.sum(), words_done + done.sum()


# --------------------------------------------------------------------------
# model


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))


cosine = _cosine


def initial_doc_vectors(n_docs: int, dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return ((rng.random((n_docs, dim), dtype=np.float32) - 0.5) / dim).astype(np.float32)


class PVModel:
    def __init__(
        self,
        vocab: Vocabulary,
        hyper: HyperParams,
        docs: list[FunctionSequence],
        doc_vectors: np.ndarray,
        node_vectors: np.ndarray,
        projects: Iterable[str] = (),
        loss_history: Sequence[float] = (),
    ):
        if doc_vectors.shape[0] != len(docs):
            raise ValueError("one document vector per training sequence required")
        self.vocab = vocab
        self.hyper = hyper
        self.docs = docs
        self.doc_vectors = doc_vectors
        self.node_vectors = node_vectors
        self.tree = build_huffman(vocab)
        self.projects = sorted(set(projects))
        self.loss_history = list(loss_history)
        self._unit: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.hyper.dim

    def encode(self, tokens: Iterable[str]) -> np.ndarray:
        """Leaf indices of in-vocabulary tokens; OOV tokens are dropped."""
        ids = [self.vocab.stoi[t] - 1 for t in tokens if t in self.vocab]
        return np.array(ids, dtype=np.int64)

    def log_prob(self, context: np.ndarray, token: str) -> float:
        return hs_log_prob(self.tree, self.node_vectors, context, self.vocab.stoi[token] - 1)

    def initial_vector(self, tokens: Sequence[str], seed: int | None = None) -> np.ndarray:
        seed = self.hyper.seed if seed is None else seed
        rng = np.random.default_rng([seed, zlib.crc32(" ".join(tokens).encode("utf-8"))])
        return ((rng.random(self.dim, dtype=np.float32) - 0.5) / self.dim).astype(np.float32)

    def infer_vector(self, tokens: Sequence[str], steps: int | None = None, seed: int | None = None) -> np.ndarray:
        """Fit a fresh document vector to ``tokens`` against the frozen tree."""
        steps = self.hyper.infer_steps if steps is None else steps
        ids = self.encode(tokens)
        if ids.size == 0:
            warnings.warn("no in-vocabulary token in context; returning zero vector", InferenceWarning, stacklevel=2)
            return np.zeros(self.dim, dtype=np.float32)
        vec = self.initial_vector(tokens, seed)
        if steps == 0:
            return vec
        seed = self.hyper.seed if seed is None else seed
        rng = np.random.default_rng([seed, 1, zlib.crc32(" ".join(tokens).encode("utf-8"))])
        vecs = vec.reshape(1, -1).copy()
        offsets = np.array([0, ids.size], dtype=np.int64)
        total = float(steps * ids.size)
        done = 0
        for _ in range(steps):
            windows = rng.integers(1, self.hyper.window + 1, size=ids.size).astype(np.int64)
            _, _, done = _train_docs(
                vecs, self.node_vectors, np.zeros(1, dtype=np.int64), ids, offsets, windows,
                self.tree.code_flat, self.tree.point_flat, self.tree.offsets,
                self.hyper.alpha0, self.hyper.alpha_min, done, total, False,
            )
        return vecs[0]

    def _unit_vectors(self) -> np.ndarray:
        if self._unit is None:
            v = self.doc_vectors.astype(np.float64)
            norms = np.linalg.norm(v, axis=1, keepdims=True)
            norms[norms == 0] = 1.0
            self._unit = v / norms
        return self._unit

    def similarities(self, query: np.ndarray) -> np.ndarray:
        q = np.asarray(query, dtype=np.float64)
        if q.shape != (self.dim,):
            raise ValueError(f"query must have shape ({self.dim},)")
        nq = np.linalg.norm(q)
        if nq == 0:
            raise ValueError("zero-norm query vector")
        return self._unit_vectors() @ (q / nq)

    def most_similar(self, query: np.ndarray, k: int = 10, min_score: float | None = None) -> list[SimilarityHit]:
        """Exact top-k documents by cosine; equal scores keep ascending doc id."""
        if k < 1:
            raise ValueError("k must be >= 1")
        scores = self.similarities(query)
        ids = np.arange(scores.size)
        if min_score is not None:
            keep = scores >= min_score
            scores, ids = scores[keep], ids[keep]
        if k < scores.size:
            # partial selection first; the cut-off score's ties are kept whole
            kth = np.partition(-scores, k - 1)[k - 1]
            keep = -scores <= kth
            scores, ids = scores[keep], ids[keep]
        order = np.lexsort((ids, -scores))[:k]
        return [SimilarityHit(int(ids[i]), float(scores[i])) for i in order]

    # -- persistence -----------------------------------------------------

    def to_bytes(self) -> bytes:
        header = {
            "hyper": asdict(self.hyper),
            "vocabulary": self.vocab.to_dict(),
            "docs": [[d.source_id, d.tokens] for d in self.docs],
            "mode": self.docs[0].mode if self.docs else "full_names",
            "projects": self.projects,
            "loss_history": [float(x) for x in self.loss_history],
        }
        hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        buf = io.BytesIO()
        buf.write(MAGIC)
        buf.write(struct.pack("<HIII", FORMAT_VERSION, len(hb), *self.doc_vectors.shape))
        buf.write(struct.pack("<I", self.node_vectors.shape[0]))
        buf.write(hb)
        buf.write(np.ascontiguousarray(self.doc_vectors, dtype="<f4").tobytes())
        buf.write(np.ascontiguousarray(self.node_vectors, dtype="<f4").tobytes())
        return buf.getvalue()

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> PVModel:
        if data[:4] != MAGIC:
            raise ValueError("not a paragraph-vector model file")
        version, hlen, n_docs, dim = struct.unpack_from("<HIII", data, 4)
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported PV model version {version}")
        (n_nodes,) = struct.unpack_from("<I", data, 18)
        off = 22
        header = json.loads(data[off : off + hlen])
        off += hlen
        docs_v = np.frombuffer(data, dtype="<f4", count=n_docs * dim, offset=off).reshape(n_docs, dim).copy()
        off += 4 * n_docs * dim
        nodes = np.frombuffer(data, dtype="<f4", count=n_nodes * dim, offset=off).reshape(n_nodes, dim).copy()
        mode = header["mode"]
        docs = [FunctionSequence(sid, toks[0], toks[1:], None, mode) for sid, toks in header["docs"]]
        return cls(
            Vocabulary.from_dict(header["vocabulary"]),
            HyperParams(**header["hyper"]),
            docs,
            docs_v,
            nodes,
            header["projects"],
            header["loss_history"],
        )

    @classmethod
    def load(cls, path: str | os.PathLike) -> PVModel:
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())


def train(
    sequences: Sequence[FunctionSequence],
    hyper: HyperParams | None = None,
    vocab: Vocabulary | None = None,
    workers: int = 1,
) -> PVModel:
    """Train document and node vectors with SGD, learning rate decaying
    linearly per processed token over all epochs.

    With one worker the result is a pure function of the inputs and
    ``hyper.seed``.  ``loss_history`` holds, per epoch, the mean negative
    log-likelihood of every token given its document vector.
    """
    hyper = hyper or HyperParams()
    docs = list(sequences)
    if not docs:
        raise ValueError("cannot train paragraph vectors on an empty corpus")
    if vocab is None:
        vocab = build_vocabulary(docs, hyper.min_count)
    if len(vocab) < 3:
        raise ValueError("paragraph vectors need at least two in-vocabulary token types")

    tree = build_huffman(vocab)
    doc_vecs = initial_doc_vectors(len(docs), hyper.dim, hyper.seed)
    syn1 = np.zeros((tree.n_inner, hyper.dim), dtype=np.float32)

    model = PVModel(vocab, hyper, docs, doc_vecs, syn1, {d.project_id for d in docs})
    encoded = [model.encode(d.tokens) for d in docs]
    lengths = np.array([e.size for e in encoded], dtype=np.int64)
    tok_offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    tok_flat = np.concatenate(encoded).astype(np.int64) if lengths.sum() else np.zeros(0, np.int64)
    n_tokens = int(tok_flat.size)
    total = float(max(1, n_tokens * hyper.epochs))
    rng = np.random.default_rng([hyper.seed, 2])
    done = 0
    losses = []
    if workers > 1:
        numba.set_num_threads(min(workers, numba.config.NUMBA_NUM_THREADS))
    for epoch in range(hyper.epochs):
        order = rng.permutation(len(docs)).astype(np.int64)
        windows = rng.integers(1, hyper.window + 1, size=n_tokens).astype(np.int64)
        args = (
            doc_vecs, syn1, order, tok_flat, tok_offsets, windows,
            tree.code_flat, tree.point_flat, tree.offsets, hyper.alpha0, hyper.alpha_min, done, total,
        )
        if workers > 1:
            _, _, done = _train_docs_parallel(*args, workers)
        else:
            _, _, done = _train_docs(*args, True)
        losses.append(
            float(_objective(doc_vecs, syn1, tok_flat, tok_offsets, tree.code_flat, tree.point_flat, tree.offsets))
        )
        logger.debug("epoch %d: objective %.4f nats/token", epoch, losses[-1])
    model.loss_history = losses
    model._unit = None
    return model


def most_similar(model: PVModel, query: np.ndarray, k: int = 10) -> list[SimilarityHit]:
    return model.most_similar(query, k)


def infer_vector(model: PVModel, tokens: Sequence[str], steps: int | None = None) -> np.ndarray:
    return model.infer_vector(tokens, steps)
