"""Method-scoped call-sequence extraction, subtokenization and vocabularies.

The extractor is lexical: it tokenizes a Java-family source unit, tracks
brace nesting, and recognises method declarations at class-member depth.
Every identifier immediately followed by ``(`` inside a method body is a
call, except keywords, annotations and (by default) constructor calls.
"""

from __future__ import annotations

import logging
import os
import re
from collections import Counter
from collections.abc import Iterable, Iterator
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

logger = logging.getLogger(__name__)

UNK = "<unk>"
FULL_NAMES = "full_names"
SUBTOKENS = "subtokens"
MODES = (FULL_NAMES, SUBTOKENS)

DEFAULT_MIN_COUNT = {FULL_NAMES: 20, SUBTOKENS: 5}

JAVA_KEYWORDS = frozenset(
    """abstract assert boolean break byte case catch char class const continue
    default do double else enum extends final finally float for goto if
    implements import instanceof int interface long native new package private
    protected public return short static strictfp super switch synchronized
    this throw throws transient try void volatile while true false null var
    yield record sealed permits""".split()
)
_CLASS_KEYWORDS = frozenset({"class", "interface", "enum", "record"})
# a declaration-looking `name(...) {` preceded by one of these is not a method
_NOT_DECL_PREV = frozenset(
    {"if", "for", "while", "switch", "catch", "synchronized", "new", "return", "."}
)


@dataclass(frozen=True)
class TokenizerConfig:
    mode: str = FULL_NAMES
    include_constructors: bool = False
    lowercase_subtokens: bool = True
    subtokenize_method_names: bool = True

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown tokenizer mode {self.mode!r}")


@dataclass
class FunctionSequence:
    """One method: its name followed by the calls in its body, in textual order.

    In subtoken mode a multi-part method name contributes its first subtoken
    as ``method_name`` and the remaining subtokens lead ``calls``.
    """

    source_id: str
    method_name: str
    calls: list[str] = field(default_factory=list)
    byte_span: tuple[int, int] | None = None
    mode: str = FULL_NAMES

    def __post_init__(self) -> None:
        if not self.method_name:
            raise ValueError("method_name must be non-empty")

    @property
    def tokens(self) -> list[str]:
        return [self.method_name, *self.calls]

    @property
    def project_id(self) -> str:
        return project_of(self.source_id)


def project_of(source_id: str) -> str:
    """Projects are the first path component of a source id."""
    return source_id.replace("\\", "/").split("/", 1)[0]


# --------------------------------------------------------------------------
# lexing


@dataclass(frozen=True)
class _Tok:
    text: str
    start: int
    ident: bool


_IDENT_START = re.compile(r"[A-Za-z_$]")
_IDENT = re.compile(r"[A-Za-z_$][A-Za-z0-9_$]*")
_NUMBER = re.compile(r"[0-9][0-9A-Za-z_.]*")


def _lex(text: str) -> list[_Tok]:
    """Identifiers, numbers and single punctuation characters.

    Comments, string/char literals and text blocks are skipped; an
    unterminated one swallows the rest of the input.
    """
    toks: list[_Tok] = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif text.startswith("//", i):
            j = text.find("\n", i)
            i = n if j < 0 else j + 1
        elif text.startswith("/*", i):
            j = text.find("*/", i + 2)
            i = n if j < 0 else j + 2
        elif text.startswith('"""', i):
            j = text.find('"""', i + 3)
            i = n if j < 0 else j + 3
        elif c == '"' or c == "'":
            j = i + 1
            while j < n and text[j] != c and text[j] != "\n":
                j += 2 if text[j] == "\\" else 1
            i = j + 1
        elif _IDENT_START.match(c) or c.isalpha():
            m = _IDENT.match(text, i)
            if m is None:  # non-ASCII letter
                j = i + 1
                while j < n and (text[j].isalnum() or text[j] in "_$"):
                    j += 1
                toks.append(_Tok(text[i:j], i, True))
                i = j
            else:
                toks.append(_Tok(m.group(), i, True))
                i = m.end()
        elif c.isdigit():
            m = _NUMBER.match(text, i)
            toks.append(_Tok(m.group(), i, False))
            i = m.end()
        else:
            toks.append(_Tok(c, i, False))
            i += 1
    return toks


def _match_paren(toks: list[_Tok], i: int) -> int:
    """Index of the ``)`` closing the ``(`` at ``i``, or -1."""
    depth = 0
    for j in range(i, len(toks)):
        t = toks[j].text
        if t == "(":
            depth += 1
        elif t == ")":
            depth -= 1
            if depth == 0:
                return j
        elif t in "{};" and depth > 0 and t != "{":
            # `;` or `}` inside a parameter list: malformed
            return -1
    return -1


def _declaration_body(toks: list[_Tok], i: int) -> int:
    """If ``toks[i]`` starts ``name(params) [throws X, Y] {``, return the index
    of the opening brace, else -1."""
    if i + 1 >= len(toks) or toks[i + 1].text != "(":
        return -1
    close = _match_paren(toks, i + 1)
    if close < 0:
        return -1
    j = close + 1
    # array-returning legacy syntax `int f()[] {` is ignored
    if j < len(toks) and toks[j].text == "throws":
        j += 1
        while j < len(toks) and (toks[j].ident or toks[j].text in ".,<>?[]@"):
            j += 1
    if j < len(toks) and toks[j].text == "{":
        return j
    return -1


@dataclass
class _Frame:
    kind: str  # "class" | "method" | "block"
    method: FunctionSequence | None = None


def _extract(text: str, source_id: str, config: TokenizerConfig) -> tuple[list[FunctionSequence], list[str]]:
    toks = _lex(text)
    diagnostics: list[str] = []
    out: list[FunctionSequence] = []
    stack: list[_Frame] = []
    current: FunctionSequence | None = None  # method whose body we are inside
    current_depth = -1
    # index of the token after the last `;`, `{` or `}`: start of a declaration
    stmt_start = 0
    skip_until = -1  # tokens of a nested declaration header, not calls

    i = 0
    while i < len(toks):
        tok = toks[i]
        t = tok.text
        if t == "{":
            if current is None:
                header = [x.text for x in toks[stmt_start:i]]
                kind = "class" if _CLASS_KEYWORDS.intersection(header) else "block"
                stack.append(_Frame(kind))
            else:
                stack.append(_Frame("block"))
            stmt_start = i + 1
        elif t == "}":
            if not stack:
                diagnostics.append(f"{source_id}: unbalanced '}}' at offset {tok.start}")
            else:
                stack.pop()
                if current is not None and len(stack) == current_depth:
                    current.byte_span = (current.byte_span[0], tok.start + 1)  # type: ignore[index]
                    out.append(current)
                    current = None
                    current_depth = -1
            stmt_start = i + 1
        elif t == ";":
            stmt_start = i + 1
        elif tok.ident and current is None:
            at_member_level = not stack or stack[-1].kind == "class"
            prev = toks[i - 1].text if i > 0 else ""
            if at_member_level and t not in JAVA_KEYWORDS and prev not in _NOT_DECL_PREV and prev != "@":
                brace = _declaration_body(toks, i)
                if brace >= 0:
                    current = FunctionSequence(source_id, t, [], (toks[brace].start, -1), config.mode)
                    stack.append(_Frame("method", current))
                    current_depth = len(stack) - 1
                    stmt_start = brace + 1
                    i = brace + 1
                    continue
        elif tok.ident and current is not None and i > skip_until:
            nxt = toks[i + 1].text if i + 1 < len(toks) else ""
            prev = toks[i - 1].text if i > 0 else ""
            if nxt == "(" and t not in JAVA_KEYWORDS and prev != "@":
                brace = _declaration_body(toks, i)
                if brace >= 0 and prev not in _NOT_DECL_PREV:
                    # method declared inside an anonymous/local class
                    skip_until = brace
                elif prev == "new" and not config.include_constructors:
                    pass
                else:
                    current.calls.append(t)
        i += 1

    if current is not None:
        diagnostics.append(
            f"{source_id}: unterminated method {current.method_name!r}; "
            f"kept {len(out)} well-formed method(s)"
        )
    elif stack:
        diagnostics.append(f"{source_id}: {len(stack)} unclosed brace(s) at end of input")

    if config.mode == SUBTOKENS:
        out = [_subtokenize_sequence(s, config) for s in out]
    return out, diagnostics


def _subtokenize_sequence(seq: FunctionSequence, config: TokenizerConfig) -> FunctionSequence:
    lower = config.lowercase_subtokens
    if config.subtokenize_method_names:
        head = split_subtokens(seq.method_name, lowercase=lower)
    else:
        head = [seq.method_name.lower() if lower else seq.method_name]
    calls = [s for c in seq.calls for s in split_subtokens(c, lowercase=lower)]
    return FunctionSequence(seq.source_id, head[0], head[1:] + calls, seq.byte_span, SUBTOKENS)


def to_subtokens(sequences: Iterable[FunctionSequence], config: TokenizerConfig | None = None) -> list[FunctionSequence]:
    """Re-tokenize full-name sequences into subtoken mode."""
    config = config or TokenizerConfig(mode=SUBTOKENS)
    out = []
    for s in sequences:
        if s.mode != FULL_NAMES:
            raise ValueError(f"{s.source_id}: expected {FULL_NAMES} sequences, got {s.mode}")
        out.append(_subtokenize_sequence(s, config))
    return out


def extract_sequences(
    source_text: str, config: TokenizerConfig | None = None, source_id: str = "<memory>"
) -> list[FunctionSequence]:
    """Return one FunctionSequence per method declaration in ``source_text``.

    Malformed input never raises; problems are logged as warnings and the
    methods completed before the problem are returned.
    """
    seqs, diagnostics = _extract(source_text, source_id, config or TokenizerConfig())
    for d in diagnostics:
        logger.warning(d)
    return seqs


def extract_file(path: str | os.PathLike, config: TokenizerConfig | None = None, source_id: str | None = None) -> list[FunctionSequence]:
    p = Path(path)
    text = p.read_text(encoding="utf-8", errors="replace")
    return extract_sequences(text, config, source_id or p.as_posix())


def _extract_job(args: tuple[str, str, TokenizerConfig]) -> tuple[list[FunctionSequence], list[str]]:
    path, source_id, config = args
    text = Path(path).read_text(encoding="utf-8", errors="replace")
    return _extract(text, source_id, config)


def source_files(root: str | os.PathLike, suffixes: tuple[str, ...] = (".java",)) -> list[tuple[Path, str]]:
    """``(path, source_id)`` pairs under ``root`` in a stable order.

    The source id is the path relative to ``root``, so its first component
    is the project directory.
    """
    root = Path(root)
    files = sorted(p for p in root.rglob("*") if p.is_file() and p.suffix in suffixes)
    return [(p, p.relative_to(root).as_posix()) for p in files]


def extract_tree(
    root: str | os.PathLike, config: TokenizerConfig | None = None, workers: int = 1
) -> list[FunctionSequence]:
    """Extract every source file under ``root``; output order is independent
    of ``workers``."""
    config = config or TokenizerConfig()
    jobs = [(str(p), sid, config) for p, sid in source_files(root)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_extract_job, jobs, chunksize=16))
    else:
        results = [_extract_job(j) for j in jobs]
    out: list[FunctionSequence] = []
    for seqs, diagnostics in results:
        for d in diagnostics:
            logger.warning(d)
        out.extend(seqs)
    return out


# --------------------------------------------------------------------------
# subtokens

_SEPARATORS = "_$"


def _char_class(c: str) -> str:
    if c.isdigit():
        return "digit"
    if c.isupper():
        return "upper"
    if c.isalpha():
        return "lower"
    return "sep" if c in _SEPARATORS else "other"


def split_subtokens(name: str, lowercase: bool = True) -> list[str]:
    """Split an identifier on camel-case humps, underscores and digit runs.

    >>> split_subtokens("convertDateToString")
    ['convert', 'date', 'to', 'string']
    >>> split_subtokens("parseHTTP2Frame")
    ['parse', 'http', '2', 'frame']
    """
    parts: list[str] = []
    cur = ""
    prev = ""
    for c in name:
        cls = _char_class(c)
        if cls == "sep":
            if cur:
                parts.append(cur)
            cur, prev = "", ""
            continue
        boundary = bool(cur) and (
            (prev == "lower" and cls == "upper")
            or (prev == "digit") != (cls == "digit")
        )
        if boundary:
            parts.append(cur)
            cur = ""
        cur += c
        prev = cls
    if cur:
        parts.append(cur)
    if not parts:
        return [name]
    return [p.lower() for p in parts] if lowercase else parts


# --------------------------------------------------------------------------
# vocabulary


class Vocabulary:
    """Token/id map with a min-count cut-off.

    Id 0 is always ``<unk>``; the remaining ids are assigned by decreasing
    frequency, ties broken by the token string.
    """

    def __init__(self, counts: Counter[str] | dict[str, int], min_count: int, mode: str = FULL_NAMES):
        if min_count < 0:
            raise ValueError("min_count must be >= 0")
        self.min_count = min_count
        self.mode = mode
        self.raw_counts: Counter[str] = Counter(counts)
        self.raw_counts.pop(UNK, None)
        kept = sorted(
            (t for t, c in self.raw_counts.items() if c >= min_count and c > 0),
            key=lambda t: (-self.raw_counts[t], t),
        )
        self.itos: list[str] = [UNK, *kept]
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        unk_freq = sum(c for t, c in self.raw_counts.items() if t not in self.stoi)
        self.freqs: list[int] = [unk_freq, *(self.raw_counts[t] for t in kept)]
        self.unk_id = 0

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi and token != UNK

    def lookup(self, token: str) -> int:
        return self.stoi.get(token, self.unk_id)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.stoi.get(t, 0) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids]

    def stats(self) -> dict[str, int]:
        in_vocab = sum(self.freqs[1:])
        return {
            "tokens": sum(self.raw_counts.values()),
            "types": len(self.raw_counts),
            "tokens_min_count": in_vocab,
            "types_min_count": len(self.itos),
            "min_count": self.min_count,
        }

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(f"#vocab min_count={self.min_count} mode={self.mode}\n")
            for t in sorted(self.raw_counts, key=lambda t: (-self.raw_counts[t], t)):
                f.write(f"{t}\t{self.raw_counts[t]}\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> Vocabulary:
        with open(path, encoding="utf-8") as f:
            header = f.readline().split()
            if not header or header[0] != "#vocab":
                raise ValueError(f"{path}: not a vocabulary file")
            meta = dict(kv.split("=", 1) for kv in header[1:])
            counts = {}
            for line in f:
                tok, _, n = line.rstrip("\n").rpartition("\t")
                counts[tok] = int(n)
        return cls(counts, int(meta["min_count"]), meta.get("mode", FULL_NAMES))

    def to_dict(self) -> dict:
        return {"min_count": self.min_count, "mode": self.mode, "counts": dict(sorted(self.raw_counts.items()))}

    @classmethod
    def from_dict(cls, d: dict) -> Vocabulary:
        return cls(d["counts"], d["min_count"], d["mode"])


def count_tokens(sequences: Iterable[FunctionSequence]) -> tuple[Counter[str], str | None, int]:
    counts: Counter[str] = Counter()
    mode = None
    n = 0
    for s in sequences:
        if mode is None:
            mode = s.mode
        elif s.mode != mode:
            raise ValueError(f"mixed tokenizer modes in one corpus: {mode} and {s.mode}")
        counts.update(s.tokens)
        n += 1
    return counts, mode, n


def build_vocabulary(
    sequences: Iterable[FunctionSequence], min_count: int | None = None, mode: str | None = None
) -> Vocabulary:
    """Count method names and calls jointly; tokens below ``min_count`` become ``<unk>``."""
    counts, seen_mode, n = count_tokens(sequences)
    if mode is not None and seen_mode is not None and seen_mode != mode:
        raise ValueError(f"sequences are {seen_mode}, vocabulary requested for {mode}")
    mode = mode or seen_mode or FULL_NAMES
    if min_count is None:
        min_count = DEFAULT_MIN_COUNT[mode]
    if n == 0:
        logger.warning("empty corpus: vocabulary contains only %s", UNK)
    return Vocabulary(counts, min_count, mode)


def merge_counts(parts: Iterable[Counter[str]]) -> Counter[str]:
    total: Counter[str] = Counter()
    for p in parts:
        total.update(p)
    return total


def corpus_stats(sequences: list[FunctionSequence], vocab: Vocabulary) -> dict[str, int]:
    stats = {"sequences": len(sequences)}
    stats.update(vocab.stats())
    return stats


def format_stats(stats: dict[str, object]) -> str:
    return "".join(f"{k}={v}\n" for k, v in stats.items())


# --------------------------------------------------------------------------
# sequence files


def write_sequences(sequences: Iterable[FunctionSequence], path: str | os.PathLike) -> int:
    """Write one sequence per line; ``#mode`` and ``#source`` directive lines
    carry the tokenizer mode and the source unit of the lines that follow."""
    n = 0
    last_source = None
    mode_written = False
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for s in sequences:
            for tok in s.tokens:
                if not tok or any(ch.isspace() for ch in tok):
                    raise ValueError(f"token {tok!r} is empty or contains whitespace")
            if s.method_name.startswith("#"):
                raise ValueError(f"method name {s.method_name!r} collides with directive syntax")
            if not mode_written:
                f.write(f"#mode {s.mode}\n")
                mode_written = True
            if s.source_id != last_source:
                if any(ch.isspace() for ch in s.source_id):
                    raise ValueError(f"source id {s.source_id!r} contains whitespace")
                f.write(f"#source {s.source_id}\n")
                last_source = s.source_id
            f.write(" ".join(s.tokens) + "\n")
            n += 1
    return n


def iter_sequences(path: str | os.PathLike) -> Iterator[FunctionSequence]:
    source = Path(path).stem
    mode = FULL_NAMES
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.startswith("#mode "):
                mode = line.split()[1]
                continue
            if line.startswith("#source "):
                source = line[len("#source ") :].strip()
                continue
            toks = line.split()
            if not toks:
                continue
            yield FunctionSequence(source, toks[0], toks[1:], None, mode)


def read_sequences(path: str | os.PathLike) -> list[FunctionSequence]:
    return list(iter_sequences(path))


def read_sequence_inputs(paths: Iterable[str | os.PathLike]) -> list[FunctionSequence]:
    """Read sequence files; directories contribute their ``*.seq`` files in name order."""
    out: list[FunctionSequence] = []
    for p in paths:
        p = Path(p)
        files = sorted(p.glob("*.seq")) if p.is_dir() else [p]
        for fp in files:
            out.extend(iter_sequences(fp))
    return out


def group_by_project(sequences: Iterable[FunctionSequence]) -> dict[str, list[FunctionSequence]]:
    groups: dict[str, list[FunctionSequence]] = {}
    for s in sequences:
        groups.setdefault(s.project_id, []).append(s)
    return groups
