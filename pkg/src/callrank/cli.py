"""Command-line entry point: corpus -> models -> benchmark.

Every subcommand accepts ``--config FILE`` with flat ``key=value`` lines
(keys are long option names, ``-`` or ``_``); explicit flags win.
Precondition violations exit with status 2 and one ``error:`` line each.
"""

from __future__ import annotations

import argparse
import hashlib
import inspect
import json
import logging
import math
import os
import sys
from collections.abc import Sequence
from dataclasses import asdict
from pathlib import Path

from . import __version__, embedding, evaluation, ngram
from .candidates import read_callsites, synthesize_call_sites, write_callsites
from .corpus import (
    DEFAULT_MIN_COUNT,
    FULL_NAMES,
    MODES,
    SUBTOKENS,
    FunctionSequence,
    TokenizerConfig,
    Vocabulary,
    build_vocabulary,
    corpus_stats,
    extract_tree,
    format_stats,
    read_sequence_inputs,
    write_sequences,
)
from .ranker import NGramSuggester, PVSuggester, RankerConfig, complete
from .synthetic import PlantedCorpus, write_java_tree

logger = logging.getLogger("callrank")

PROG = "callrank"


class UsageProblems(Exception):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


# --------------------------------------------------------------------------
# parser


def _cores() -> int:
    return os.cpu_count() or 1


def _csv_list(text: str) -> list[str]:
    return [t for t in text.replace(",", " ").split() if t]


def _int_list(text: str) -> list[int]:
    return [int(t) for t in _csv_list(text)]


def _order_range(text: str) -> list[int]:
    if "-" in text:
        lo, hi = text.split("-", 1)
        return list(range(int(lo), int(hi) + 1))
    return _int_list(text)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE", help="key=value defaults; flags override")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")


def _smoothing_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--smoothing", default="jelinek_mercer", help="mle, jelinek_mercer (jm) or kneser_ney (kn)")
    p.add_argument("--lam", type=float, default=0.5, help="Jelinek-Mercer weight of the higher order")
    p.add_argument("--discount", type=float, default=0.75, help="Kneser-Ney absolute discount")


def _ranker_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-size", type=int, default=10)
    p.add_argument("--sim-threshold", type=float, default=0.25, help="cosine below which neighbours are ignored")
    p.add_argument("--neighbor-budget", type=int, default=100, help="temporary-list and neighbour cap")
    p.add_argument("--fill-tail", action="store_true", help="pad short lists with remaining candidates")
    p.add_argument("--skip-context", action="store_true", help="pv: pass over neighbour calls the context already made")


def _cache_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--cache-gamma", type=float, default=0.5)
    p.add_argument("--cache-capacity", type=int, default=10_000)
    p.add_argument("--cache-order", type=int, default=None, help="default: model order")
    p.add_argument("--cache-scope", choices=evaluation.CACHE_SCOPES, default="file")


def _vocab_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--vocab", metavar="FILE", help="use a saved vocabulary instead of building one")
    p.add_argument("--min-count", type=int, default=None, help="default 20 (full names) / 5 (subtokens)")


def _exclusion_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--exclude-projects",
        default="",
        help="comma-separated project ids or paths (sequence/call-site files) whose projects are held out",
    )


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog=PROG, description="Rank call completions with call-sequence models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    subs: dict[str, argparse.ArgumentParser] = {}

    def add(name: str, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help, description=help)
        _common(p)
        subs[name] = p
        return p

    p = add("extract", "extract call sequences from a tree of Java sources")
    p.add_argument("root", help="directory whose first-level subdirectories are projects")
    p.add_argument("-o", "--output", required=True, help="sequence file to write")
    p.add_argument("--mode", choices=MODES, default=FULL_NAMES)
    p.add_argument("--include-constructors", action="store_true")
    p.add_argument("--workers", type=int, default=_cores())
    _exclusion_flag(p)

    p = add("vocab", "build a vocabulary and print corpus statistics")
    p.add_argument("inputs", nargs="+", help="sequence files or directories of *.seq")
    p.add_argument("-o", "--output", help="vocabulary file to write")
    p.add_argument("--min-count", type=int, default=None)
    _exclusion_flag(p)

    p = add("train-ngram", "train an n-gram model")
    p.add_argument("inputs", nargs="+")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--order", type=int, default=5)
    _smoothing_flags(p)
    _vocab_flags(p)
    _exclusion_flag(p)
    p.add_argument("--workers", type=int, default=1)

    p = add("train-pv", "train a paragraph-vector model")
    p.add_argument("inputs", nargs="+")
    p.add_argument("-o", "--output", required=True)
    defaults = embedding.HyperParams()
    p.add_argument("--dim", type=int, default=defaults.dim)
    p.add_argument("--window", type=int, default=defaults.window)
    p.add_argument("--epochs", type=int, default=defaults.epochs)
    p.add_argument("--alpha0", type=float, default=defaults.alpha0)
    p.add_argument("--alpha-min", type=float, default=defaults.alpha_min)
    p.add_argument("--infer-steps", type=int, default=defaults.infer_steps)
    p.add_argument("--seed", type=int, default=defaults.seed)
    _vocab_flags(p)
    _exclusion_flag(p)
    p.add_argument("--workers", type=int, default=1, help="more than 1 trades determinism for speed")

    p = add("gen-callsites", "synthesize call-site records with naive candidates")
    p.add_argument("inputs", nargs="+", help="held-out sequence files")
    p.add_argument("-o", "--output", required=True, help="JSON-lines file to write")
    _exclusion_flag(p)

    p = add("complete", "rank candidates for one call site")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--pv", metavar="MODEL")
    g.add_argument("--ngram", metavar="MODEL")
    p.add_argument("--sites", metavar="FILE", help="call-site file")
    p.add_argument("--site", metavar="ID", help="site id in --sites (default: first record)")
    p.add_argument("--context", help="method name and preceding calls, space or comma separated")
    p.add_argument("--candidates", help="candidate calls, space or comma separated")
    _ranker_flags(p)

    p = add("most-similar", "nearest training sequences of a context")
    p.add_argument("--pv", metavar="MODEL", required=True)
    p.add_argument("--context", required=True)
    p.add_argument("-k", type=int, default=10)

    p = add("bench", "evaluate baseline, pv, ngram and ngram_cache on a call-site file")
    p.add_argument("--sites", required=True)
    p.add_argument("--pv", required=True, metavar="MODEL")
    p.add_argument("--ngram", required=True, metavar="MODEL")
    p.add_argument("-o", "--output", required=True, help="report directory")
    p.add_argument("--ks", type=_int_list, default=list(evaluation.DEFAULT_KS))
    p.add_argument("--workers", type=int, default=_cores())
    _ranker_flags(p)
    _cache_flags(p)

    p = add("entropy", "cross-entropy per test project, order and token mode")
    p.add_argument("--train", nargs="+", required=True)
    p.add_argument("--test", nargs="+", required=True)
    p.add_argument("-o", "--output", required=True, help="CSV file to write")
    p.add_argument("--orders", type=_order_range, default=list(range(2, 11)), help="e.g. 2-10 or 2,3,5")
    p.add_argument("--modes", type=_csv_list, default=["full", "subtoken"])
    p.add_argument("--min-count-full", type=int, default=DEFAULT_MIN_COUNT[FULL_NAMES])
    p.add_argument("--min-count-subtoken", type=int, default=DEFAULT_MIN_COUNT[SUBTOKENS])
    p.add_argument("--workers", type=int, default=1)
    _smoothing_flags(p)

    p = add("synth", "write the planted-concept fixture corpus")
    p.add_argument("output", help="directory to write")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--concepts", type=int, default=50)
    p.add_argument("--train-size", type=int, default=5000)
    p.add_argument("--test-size", type=int, default=500)
    p.add_argument("--noise", type=float, default=0.2)
    p.add_argument("--projects", type=int, default=10)
    p.add_argument("--test-projects", type=int, default=5)
    p.add_argument("--local-files", type=int, default=40, help="files of the file-local repetition variant")
    p.add_argument("--local-methods", type=int, default=10)
    p.add_argument("--java", action="store_true", help="also render train and test as Java sources")
    return parser, subs


# --------------------------------------------------------------------------
# config file


def _read_config(path: str) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageProblems([f"{path}:{n}: expected key=value"])
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _config_defaults(sub: argparse.ArgumentParser, values: dict[str, str], path: str) -> dict[str, object]:
    actions = {a.dest: a for a in sub._actions if a.option_strings}
    out, problems = {}, []
    for key, raw in values.items():
        action = actions.get(key)
        if action is None or key in ("config", "help"):
            problems.append(f"{path}: unknown key {key!r}")
            continue
        try:
            if isinstance(action, argparse._StoreTrueAction):
                if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(raw)
                out[key] = raw.lower() in ("true", "1", "yes")
            else:
                out[key] = action.type(raw) if action.type else raw
                if action.choices is not None and out[key] not in action.choices:
                    raise ValueError(raw)
        except ValueError:
            problems.append(f"{path}: invalid value {raw!r} for {key}")
    if problems:
        raise UsageProblems(problems)
    return out


def parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    parser, subs = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    if args.config:
        sub = subs[args.command]
        sub.set_defaults(**_config_defaults(sub, _read_config(args.config), args.config))
        args = parser.parse_args(argv)
    return args


# --------------------------------------------------------------------------
# validation


def _in_open_unit(x: float) -> bool:
    return 0.0 < x < 1.0


_RULES = (
    ("workers", lambda v: v >= 1, "workers must be >= 1"),
    ("order", lambda v: v >= 2, "order must be >= 2"),
    ("lam", _in_open_unit, "lam must lie in (0, 1)"),
    ("discount", _in_open_unit, "discount must lie in (0, 1)"),
    ("dim", lambda v: v >= 1, "dim must be >= 1"),
    ("window", lambda v: v >= 1, "window must be >= 1"),
    ("epochs", lambda v: v >= 0, "epochs must be >= 0"),
    ("infer_steps", lambda v: v >= 0, "infer-steps must be >= 0"),
    ("alpha0", lambda v: v > 0, "alpha0 must be > 0"),
    ("min_count", lambda v: v is None or v >= 1, "min-count must be >= 1"),
    ("max_size", lambda v: v >= 1, "max-size must be >= 1"),
    ("sim_threshold", lambda v: -1.0 <= v <= 1.0, "sim-threshold must lie in [-1, 1]"),
    ("neighbor_budget", lambda v: v >= 1, "neighbor-budget must be >= 1"),
    ("cache_gamma", _in_open_unit, "cache-gamma must lie in (0, 1)"),
    ("cache_capacity", lambda v: v >= 1, "cache-capacity must be >= 1"),
    ("cache_order", lambda v: v is None or v >= 2, "cache-order must be >= 2"),
    ("k", lambda v: v >= 1, "k must be >= 1"),
    ("ks", lambda v: bool(v) and min(v) >= 1, "ks must be positive integers"),
    ("orders", lambda v: bool(v) and min(v) >= 2, "orders must be >= 2"),
    ("noise", lambda v: 0.0 <= v <= 1.0, "noise must lie in [0, 1]"),
    ("concepts", lambda v: v >= 1, "concepts must be >= 1"),
)


def check_args(args: argparse.Namespace) -> list[str]:
    """Every precondition violation of the parsed arguments, one message each."""
    problems = [msg for name, ok, msg in _RULES if hasattr(args, name) and not ok(getattr(args, name))]
    if hasattr(args, "alpha_min") and not 0 < args.alpha_min <= args.alpha0:
        problems.append("alpha-min must lie in (0, alpha0]")
    if hasattr(args, "smoothing") and ngram._KIND_ALIASES.get(args.smoothing, args.smoothing) not in ngram.SMOOTHING_KINDS:
        problems.append(f"unknown smoothing {args.smoothing!r}")
    if args.command == "entropy":
        problems += [f"unknown token mode {m!r}" for m in args.modes if m not in evaluation.TOKEN_MODE_LABELS.values()]
    if args.command == "complete":
        if args.sites is None and (args.context is None or args.candidates is None):
            problems.append("complete needs --sites or both --context and --candidates")
        if args.sites is not None and (args.context is not None or args.candidates is not None):
            problems.append("--sites excludes --context/--candidates")
    for attr in ("inputs", "train", "test"):
        for path in getattr(args, attr, None) or ():
            if not os.path.exists(path):
                problems.append(f"input not found: {path}")
    for attr in ("root", "sites", "pv", "ngram", "vocab", "config"):
        path = getattr(args, attr, None)
        if path and not os.path.exists(path):
            problems.append(f"{attr} not found: {path}")
    return problems


# --------------------------------------------------------------------------
# helpers


def _digest(path: str | os.PathLike) -> str:
    p = Path(path)
    h = hashlib.sha256()
    files = sorted(q for q in p.rglob("*") if q.is_file()) if p.is_dir() else [p]
    for q in files:
        if p.is_dir():
            h.update(q.relative_to(p).as_posix().encode("utf-8") + b"\0")
        with open(q, "rb") as f:
            for chunk in iter(lambda: f.read(1 << 20), b""):
                h.update(chunk)
    return h.hexdigest()


def _jsonable(v: object) -> object:
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def write_manifest(path: str | os.PathLike, args: argparse.Namespace, inputs: Sequence[str], **extra: object) -> None:
    """Config echo, seed and input digests; no timestamps, so reruns match."""
    config = {k: _jsonable(v) for k, v in sorted(vars(args).items()) if k not in ("verbose",)}
    doc = {
        "tool": PROG,
        "version": __version__,
        "command": args.command,
        "config": config,
        "seed": getattr(args, "seed", None),
        "inputs": {str(p): _digest(p) for p in inputs},
        **extra,
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _manifest_path(output: str) -> str:
    return output + ".manifest.json"


def _excluded_projects(text: str) -> set[str]:
    out: set[str] = set()
    for item in _csv_list(text):
        if os.path.exists(item):
            if item.endswith(".jsonl"):
                out.update(r.project_id for r in read_callsites(item))
            else:
                out.update(s.project_id for s in read_sequence_inputs([item]))
        else:
            out.add(item)
    return out


def _training_inputs(args: argparse.Namespace) -> list[FunctionSequence]:
    """Read sequences, drop held-out projects and confirm none survived."""
    seqs = read_sequence_inputs(args.inputs)
    held_out = _excluded_projects(args.exclude_projects)
    if held_out:
        before = len(seqs)
        seqs = [s for s in seqs if s.project_id not in held_out]
        logger.info("held out %d sequences from %d projects", before - len(seqs), len(held_out))
    overlap = held_out & {s.project_id for s in seqs}
    if overlap:
        raise UsageProblems([f"held-out project {p} present in training input" for p in sorted(overlap)])
    if not seqs:
        raise UsageProblems(["no sequences left to train on"])
    return seqs


def _vocabulary(args: argparse.Namespace, seqs: list[FunctionSequence]) -> Vocabulary:
    if args.vocab:
        return Vocabulary.load(args.vocab)
    return build_vocabulary(seqs, args.min_count)


def _ranker_config(args: argparse.Namespace) -> RankerConfig:
    return RankerConfig(args.max_size, args.sim_threshold, args.neighbor_budget, args.fill_tail, args.skip_context)


def _disjoint(train_projects: set[str], test_projects: set[str], what: str) -> None:
    overlap = sorted(train_projects & test_projects)
    if overlap:
        raise UsageProblems([f"project {p} appears in both {what}" for p in overlap])


# --------------------------------------------------------------------------
# commands


def cmd_extract(args: argparse.Namespace) -> int:
    config = TokenizerConfig(mode=args.mode, include_constructors=args.include_constructors)
    seqs = extract_tree(args.root, config, args.workers)
    held_out = _excluded_projects(args.exclude_projects)
    seqs = [s for s in seqs if s.project_id not in held_out]
    n = write_sequences(seqs, args.output)
    write_manifest(_manifest_path(args.output), args, [args.root], sequences=n)
    print(f"sequences={n}")
    return 0


def cmd_vocab(args: argparse.Namespace) -> int:
    seqs = _training_inputs(args)
    vocab = build_vocabulary(seqs, args.min_count)
    if args.output:
        vocab.save(args.output)
        write_manifest(_manifest_path(args.output), args, args.inputs)
    sys.stdout.write(format_stats(corpus_stats(seqs, vocab)))
    return 0


def cmd_train_ngram(args: argparse.Namespace) -> int:
    seqs = _training_inputs(args)
    vocab = _vocabulary(args, seqs)
    smoothing = ngram.SmoothingConfig(args.smoothing, args.lam, args.discount)
    model = ngram.train(seqs, args.order, vocab, smoothing, args.workers)
    model.save(args.output)
    write_manifest(_manifest_path(args.output), args, args.inputs)
    sys.stdout.write(format_stats(model.stats()))
    return 0


def cmd_train_pv(args: argparse.Namespace) -> int:
    seqs = _training_inputs(args)
    vocab = _vocabulary(args, seqs)
    hyper = embedding.HyperParams(
        dim=args.dim,
        window=args.window,
        min_count=vocab.min_count,
        epochs=args.epochs,
        alpha0=args.alpha0,
        alpha_min=args.alpha_min,
        seed=args.seed,
        infer_steps=args.infer_steps,
    )
    model = embedding.train(seqs, hyper, vocab, args.workers)
    model.save(args.output)
    write_manifest(_manifest_path(args.output), args, args.inputs, hyper=asdict(hyper))
    final = model.loss_history[-1] if model.loss_history else float("nan")
    print(f"documents={len(seqs)} vocabulary={len(vocab)} final_loss={final:.6f}")
    return 0


def cmd_gen_callsites(args: argparse.Namespace) -> int:
    seqs = read_sequence_inputs(args.inputs)
    bench = synthesize_call_sites(seqs, exclude_projects=_excluded_projects(args.exclude_projects))
    n = write_callsites(bench.records, args.output)
    excluded = dict(sorted(bench.excluded.items()))
    write_manifest(_manifest_path(args.output), args, args.inputs, sites=n, excluded=excluded)
    print(f"sites={n} excluded={sum(excluded.values())}")
    return 0


def _load_suggester(args: argparse.Namespace):
    if args.pv:
        return PVSuggester(embedding.PVModel.load(args.pv))
    if args.ngram:
        return NGramSuggester(ngram.NGramModel.load(args.ngram))
    return None


def cmd_complete(args: argparse.Namespace) -> int:
    from .candidates import CallSiteRecord

    if args.sites:
        records = read_callsites(args.sites)
        site = next((r for r in records if args.site in (None, r.site_id)), None)
        if site is None:
            raise UsageProblems([f"site {args.site!r} not found in {args.sites}" if args.site else f"{args.sites} is empty"])
    else:
        context = _csv_list(args.context)
        cands = sorted(set(_csv_list(args.candidates)))
        if not context or not cands:
            raise UsageProblems(["context and candidates must be non-empty"])
        site = CallSiteRecord("cli", "cli", "cli", context, cands[0], cands)
    result, ms = complete(site, _load_suggester(args), _ranker_config(args))
    for tok, score in result:
        print(f"{tok}\t{'-' if math.isnan(score) else f'{score:.6f}'}")
    logger.info("latency %.3f ms", ms)
    return 0


def cmd_most_similar(args: argparse.Namespace) -> int:
    model = embedding.PVModel.load(args.pv)
    vec = model.infer_vector(_csv_list(args.context))
    if not vec.any():
        raise UsageProblems(["context has no in-vocabulary token"])
    for rank, hit in enumerate(model.most_similar(vec, args.k), 1):
        doc = model.docs[hit.doc_id]
        print(f"{rank}\t{hit.doc_id}\t{doc.source_id}\t{hit.score:.6f}\t{' '.join(doc.tokens)}")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    records = read_callsites(args.sites)
    if not records:
        raise UsageProblems([f"{args.sites} holds no call sites"])
    pv = embedding.PVModel.load(args.pv)
    ng = ngram.NGramModel.load(args.ngram)
    _disjoint(set(pv.projects) | set(ng.projects), {r.project_id for r in records}, "training and call sites")
    excluded: dict[str, int] = {}
    sidecar = Path(_manifest_path(args.sites))
    if sidecar.exists():
        excluded = json.loads(sidecar.read_text(encoding="utf-8")).get("excluded", {})
    cache = ngram.CacheState(args.cache_order or ng.order, args.cache_gamma, args.cache_capacity)
    systems = {
        "baseline": None,
        "pv": PVSuggester(pv),
        "ngram": NGramSuggester(ng),
        "ngram_cache": NGramSuggester(ng, cache, name="ngram_cache"),
    }
    report = evaluation.evaluate(
        records, systems, _ranker_config(args), excluded, args.ks, args.workers, args.cache_scope
    )
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    md, table = evaluation.compare_report(report, metrics=(f"R@{10 if 10 in report.ks else report.ks[-1]}", "MRR"))
    (out / "compare.md").write_text(md, encoding="utf-8")
    (out / "compare.csv").write_text(table, encoding="utf-8")
    (out / "metrics.csv").write_text(report.metrics_csv(), encoding="utf-8")
    (out / "latency.csv").write_text(report.latency_csv(), encoding="utf-8")
    write_manifest(out / "manifest.json", args, [args.sites, args.pv, args.ngram])
    sys.stdout.write(md)
    problems = report.invariant_problems()
    for p in problems:
        print(f"{PROG}: invariant violated: {p}", file=sys.stderr)
    return 1 if problems else 0


def cmd_entropy(args: argparse.Namespace) -> int:
    train = read_sequence_inputs(args.train)
    test = read_sequence_inputs(args.test)
    _disjoint({s.project_id for s in train}, {s.project_id for s in test}, "--train and --test")
    label_to_mode = {v: k for k, v in evaluation.TOKEN_MODE_LABELS.items()}
    modes = [label_to_mode[m] for m in args.modes]
    smoothing = ngram.SmoothingConfig(args.smoothing, args.lam, args.discount)
    min_count = {FULL_NAMES: args.min_count_full, SUBTOKENS: args.min_count_subtoken}
    rows = evaluation.entropy_report(train, test, args.orders, modes, smoothing, min_count, args.workers)
    Path(args.output).write_text(evaluation.entropy_csv(rows), encoding="utf-8")
    write_manifest(_manifest_path(args.output), args, [*args.train, *args.test])
    print(f"rows={len(rows)}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    corpus = PlantedCorpus.generate(args.concepts, seed=args.seed)
    train = corpus.sequences(args.train_size, seed=args.seed + 1, noise=args.noise, projects=args.projects)
    test = corpus.sequences(
        args.test_size, seed=args.seed + 2, noise=args.noise, projects=args.test_projects, prefix="test"
    )
    local = corpus.local_variant_sequences(args.local_files, args.local_methods, seed=args.seed + 3, noise=args.noise)
    write_sequences(train, out / "train.seq")
    write_sequences(test, out / "test.seq")
    write_sequences(local, out / "local.seq")
    if args.java:
        write_java_tree(out / "java", train + test, seed=args.seed)
    write_manifest(
        out / "fixture.json",
        args,
        [],
        generator={
            **{
                k: v.default
                for k, v in inspect.signature(PlantedCorpus.generate).parameters.items()
                if v.default is not inspect.Parameter.empty
            },
            "n_concepts": args.concepts,
            "seed": args.seed,
            "noise": args.noise,
        },
        acceptance={"self_inference_min_median_cosine": 0.7},
    )
    print(f"train={len(train)} test={len(test)} local={len(local)}")
    return 0


COMMANDS = {
    "extract": cmd_extract,
    "vocab": cmd_vocab,
    "train-ngram": cmd_train_ngram,
    "train-pv": cmd_train_pv,
    "gen-callsites": cmd_gen_callsites,
    "complete": cmd_complete,
    "most-similar": cmd_most_similar,
    "bench": cmd_bench,
    "entropy": cmd_entropy,
    "synth": cmd_synth,
}


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = parse_args(argv)
    except UsageProblems as e:
        for p in e.problems:
            print(f"{PROG}: error: {p}", file=sys.stderr)
        return 2
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format=f"{PROG}: %(levelname)s: %(message)s",
    )
    problems = check_args(args)
    try:
        if problems:
            raise UsageProblems(problems)
        return COMMANDS[args.command](args)
    except UsageProblems as e:
        for p in e.problems:
            print(f"{PROG}: error: {p}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as e:
        print(f"{PROG}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
