"""Planted-concept corpora for tests, benchmarks and the bundled fixture.

A concept is a recurring call pattern: a family of method names plus an
ordered list of call slots, each slot with one or more interchangeable
names.  Instances are drawn from concepts and then perturbed with token
noise (variant swaps, substitutions, deletions, insertions).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import FunctionSequence

VERBS = """get set read write open close load save parse format build create add
remove find check validate compute update send receive connect flush init reset
start stop convert encode decode sort merge split append clear lock unlock notify
register resolve apply handle process render""".split()

UTILITY_CALLS = ["toString", "size", "get", "isEmpty", "equals", "add", "put", "close"]

NOUNS = """File Stream Buffer Name Size Length Date String User Config Value Key
Map List Item Node Tree Path Url Request Response Header Body Token Session Cache
Entry Record Row Column Table Query Result Message Event Listener Handler Thread
Task Queue Socket Channel Bytes Line Text Json Xml Schema Index Port Host""".split()


@dataclass
class Concept:
    method_names: list[str]
    slots: list[list[str]]

    def canonical(self) -> list[str]:
        return [s[0] for s in self.slots]


@dataclass
class PlantedCorpus:
    concepts: list[Concept]
    pool: list[str] = field(default_factory=list)

    @classmethod
    def generate(
        cls,
        n_concepts: int = 50,
        seed: int = 0,
        min_len: int = 4,
        max_len: int = 8,
        variant_rate: float = 0.3,
        utility_rate: float = 0.15,
        prologue_rate: float = 0.0,
        n_prologues: int = 5,
    ) -> PlantedCorpus:
        """``prologue_rate`` of the concepts open with one of ``n_prologues``
        shared boilerplate call runs (3-4 calls) before their own slots."""
        rng = random.Random(seed)
        names = sorted({v + n + m for v in VERBS for n in NOUNS for m in ("",) + tuple(NOUNS[:8])})
        rng.shuffle(names)
        pool = names[: max(150, 3 * n_concepts)]
        method_pool = names[len(pool) :]
        prologues = [[[rng.choice(pool)] for _ in range(rng.randint(3, 4))] for _ in range(n_prologues)]
        concepts = []
        for c in range(n_concepts):
            k = rng.randint(min_len, max_len)
            slots = []
            if rng.random() < prologue_rate:
                slots.extend(rng.choice(prologues))
            for _ in range(k):
                if rng.random() < utility_rate:
                    slots.append([rng.choice(UTILITY_CALLS)])
                    continue
                primary = rng.choice(pool)
                slot = [primary]
                if rng.random() < variant_rate:
                    alt = rng.choice(pool)
                    if alt != primary:
                        slot.append(alt)
                slots.append(slot)
            concepts.append(Concept(method_pool[3 * c : 3 * c + 3], slots))
        return cls(concepts, pool)

    def instance(
        self,
        concept: Concept,
        rng: random.Random,
        noise: float = 0.2,
        jitter: float = 0.0,
        local_pool: list[str] | None = None,
        rare_method: float = 0.0,
    ) -> tuple[str, list[str]]:
        """Draw one noisy instance: (method name, calls).

        ``noise`` is the per-slot perturbation rate: variant swap, random
        substitution, deletion or insertion.  Random tokens come from
        ``local_pool`` (project-private names) when given, half of the time.
        ``jitter`` swaps adjacent calls; ``rare_method`` replaces the method
        name by a one-off name.
        """

        def random_token() -> str:
            if local_pool and rng.random() < 0.5:
                return rng.choice(local_pool)
            return rng.choice(self.pool)

        method = rng.choice(concept.method_names)
        if rng.random() < rare_method:
            method = f"{method}{rng.choice(NOUNS)}{rng.randrange(1000)}"
        calls: list[str] = []
        for slot in concept.slots:
            tok = slot[0] if len(slot) == 1 or rng.random() < 0.5 else rng.choice(slot[1:])
            if rng.random() < noise:
                r = rng.random()
                if r < 0.5 and len(slot) > 1:
                    tok = rng.choice([s for s in slot if s != tok])
                elif r < 0.7:
                    tok = random_token()
                elif r < 0.85:
                    continue
                else:
                    calls.append(tok)
                    tok = random_token()
            calls.append(tok)
        for i in range(len(calls) - 1):
            if rng.random() < jitter:
                calls[i], calls[i + 1] = calls[i + 1], calls[i]
        return method, calls

    def sequences(
        self,
        n: int,
        seed: int = 0,
        noise: float = 0.2,
        projects: int = 10,
        prefix: str = "train",
        files_per_project: int = 20,
        jitter: float = 0.0,
        local_names: int = 0,
        rare_method: float = 0.0,
    ) -> list[FunctionSequence]:
        """``n`` instances spread round-robin over projects and files.

        ``local_names > 0`` gives every project that many private call names
        that never occur elsewhere.
        """
        rng = random.Random(seed)
        local = {
            p: [f"{rng.choice(VERBS)}{prefix.title()}{p}{rng.choice(NOUNS)}{j}" for j in range(local_names)]
            for p in range(projects)
        }
        out = []
        for i in range(n):
            concept = self.concepts[rng.randrange(len(self.concepts))]
            p = i % projects
            method, calls = self.instance(concept, rng, noise, jitter, local[p] or None, rare_method)
            f = (i // projects) % files_per_project
            out.append(FunctionSequence(f"{prefix}{p:02d}/src/C{f:03d}.java", method, calls))
        return out

    def local_variant_sequences(
        self,
        n_files: int,
        methods_per_file: int,
        seed: int = 0,
        noise: float = 0.2,
        prefix: str = "local",
        projects: int = 2,
    ) -> list[FunctionSequence]:
        """Files that each repeat one file-specific reordering of a concept.

        Every file picks a concept and a private permutation of its calls;
        all methods of the file are noisy instances of that permutation.
        """
        rng = random.Random(seed)
        out = []
        for f in range(n_files):
            concept = self.concepts[rng.randrange(len(self.concepts))]
            perm = list(range(len(concept.slots)))
            rng.shuffle(perm)
            local = Concept(concept.method_names, [concept.slots[j] for j in perm])
            sid = f"{prefix}{f % projects:02d}/src/L{f:03d}.java"
            for _ in range(methods_per_file):
                method, calls = self.instance(local, rng, noise)
                out.append(FunctionSequence(sid, method, calls))
        return out


# --------------------------------------------------------------------------
# Java rendering

_TEMPLATES = (
    "    {recv}.{call}({args});",
    "    Object v{i} = {recv}.{call}({args});",
    "    if ({recv}.{call}({args}) != null) {{ String s{i} = \"{call}()\"; }}",
    "    {call}({args});",
    "    this.{call}({args}); // {call}() again?",
    "    new Helper{i}().{call}({args});",
)


def render_method(method: str, calls: list[str], rng: random.Random) -> str:
    """Java text whose lexical call sequence is ``(method, *calls)``.

    Templates add decoys the extractor must ignore: constructor calls,
    calls inside comments and string literals.
    """
    lines = [f"  public Object {method}(String a, int b) throws Exception {{"]
    for i, call in enumerate(calls):
        tpl = rng.choice(_TEMPLATES)
        lines.append(tpl.format(recv=f"r{i % 3}", call=call, args="a" if i % 2 else "", i=i))
    lines.append("    return null;")
    lines.append("  }")
    return "\n".join(lines)


def write_java_tree(root: str | Path, sequences: list[FunctionSequence], seed: int = 0) -> list[Path]:
    """Render sequences as Java classes, one file per ``source_id``."""
    rng = random.Random(seed)
    root = Path(root)
    by_file: dict[str, list[FunctionSequence]] = {}
    for s in sequences:
        by_file.setdefault(s.source_id, []).append(s)
    written = []
    for sid, seqs in by_file.items():
        path = root / sid
        path.parent.mkdir(parents=True, exist_ok=True)
        cls = path.stem
        body = "\n\n".join(render_method(s.method_name, s.calls, rng) for s in seqs)
        text = (
            f"package fixture;\n\n/* generated */\npublic class {cls} {{\n"
            f"  private final java.util.List<String> items = new java.util.ArrayList<>();\n\n"
            f"{body}\n}}\n"
        )
        path.write_text(text, encoding="utf-8")
        written.append(path)
    return written
