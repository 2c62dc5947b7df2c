"""Tagged knowledge base: ingestion of counseling texts and lexical retrieval.

Chapters are distilled into instruction/example pairs carrying approach,
stage, and function tags. Retrieval hard-filters on approach and stage, then
scores a 50/50 blend of function-tag Jaccard and keyword TF-cosine, so the
ranking is exact, offline, and oracle-testable.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParseError
from .gateway import LlmGateway, parse_kv_lines, kv_map, split_list, text_digest
from .profiler import PHASES, CaseConceptualization, ContextWindow
from .textutil import content_words
from . import prompts

logger = logging.getLogger(__name__)

PACK_FORMAT_VERSION = 1


@dataclass(frozen=True)
class KnowledgeSource:
    book_title: str
    chapter: str
    section: str = ""

    def label(self) -> str:
        parts = [self.book_title, self.chapter]
        if self.section:
            parts.append(self.section)
        return " / ".join(parts)


@dataclass(frozen=True)
class KnowledgeEntry:
    entry_id: str
    source: KnowledgeSource
    approach_tags: tuple[str, ...]
    stage_tags: tuple[str, ...]
    function_tags: tuple[str, ...]
    key_points: str
    instruction: str
    example_dialogue: str
    keywords: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "entry_id": self.entry_id,
            "source": {
                "book_title": self.source.book_title,
                "chapter": self.source.chapter,
                "section": self.source.section,
            },
            "approach_tags": list(self.approach_tags),
            "stage_tags": list(self.stage_tags),
            "function_tags": list(self.function_tags),
            "key_points": self.key_points,
            "instruction": self.instruction,
            "example_dialogue": self.example_dialogue,
            "keywords": list(self.keywords),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KnowledgeEntry":
        src = data["source"]
        return cls(
            entry_id=data["entry_id"],
            source=KnowledgeSource(src["book_title"], src["chapter"], src.get("section", "")),
            approach_tags=tuple(data["approach_tags"]),
            stage_tags=tuple(data["stage_tags"]),
            function_tags=tuple(data["function_tags"]),
            key_points=data["key_points"],
            instruction=data["instruction"],
            example_dialogue=data["example_dialogue"],
            keywords=tuple(data["keywords"]),
        )


def _validate_entry(entry: KnowledgeEntry) -> str | None:
    """Returns a drop reason, or None when the entry is sound."""
    if not entry.instruction:
        return "missing instruction"
    if not entry.example_dialogue:
        return "missing example_dialogue"
    if not entry.approach_tags:
        return "no approach tags"
    if not entry.stage_tags:
        return "no stage tags"
    if any(tag not in PHASES for tag in entry.stage_tags):
        return f"unknown stage tag in {entry.stage_tags}"
    if not entry.function_tags:
        return "no function tags"
    return None


@dataclass(frozen=True)
class RetrievalQuery:
    wanted_approach: str = ""
    wanted_stage: str = ""
    wanted_functions: tuple[str, ...] = ()
    keywords: tuple[str, ...] = ()

    @classmethod
    def build(cls, wanted_approach: str = "", wanted_stage: str = "",
              wanted_functions: tuple[str, ...] | list[str] = (),
              keywords: tuple[str, ...] | list[str] = ()) -> "RetrievalQuery":
        # Keywords are lowercased and deduplicated, order preserved.
        seen: dict[str, None] = {}
        for word in keywords:
            seen.setdefault(word.lower(), None)
        return cls(
            wanted_approach=wanted_approach,
            wanted_stage=wanted_stage,
            wanted_functions=tuple(wanted_functions),
            keywords=tuple(seen),
        )


@dataclass(frozen=True)
class RetrievalResult:
    entry: KnowledgeEntry
    score: float
    matched_on: tuple[str, ...]


@dataclass
class KnowledgePack:
    entries: tuple[KnowledgeEntry, ...] = ()

    def __post_init__(self):
        ids = [e.entry_id for e in self.entries]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate entry_id in pack")

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [json.dumps({"format_version": PACK_FORMAT_VERSION, "entry_count": len(self.entries)},
                            sort_keys=True, separators=(",", ":"), ensure_ascii=False)]
        lines.extend(
            json.dumps(entry.to_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
            for entry in self.entries
        )
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "KnowledgePack":
        text = Path(path).read_text(encoding="utf-8")
        return cls.load_text(text)[0]

    @classmethod
    def load_text(cls, text: str) -> tuple["KnowledgePack", int]:
        """Parse pack text; returns (pack, dropped_count) for invalid entries."""
        lines = [line for line in text.splitlines() if line.strip()]
        if not lines:
            return cls(), 0
        header = json.loads(lines[0])
        if header.get("format_version") != PACK_FORMAT_VERSION:
            raise ValueError(f"unsupported pack format: {header.get('format_version')}")
        entries: list[KnowledgeEntry] = []
        seen: set[str] = set()
        dropped = 0
        for line in lines[1:]:
            try:
                entry = KnowledgeEntry.from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError):
                dropped += 1
                continue
            if _validate_entry(entry) is not None or entry.entry_id in seen:
                dropped += 1
                continue
            seen.add(entry.entry_id)
            entries.append(entry)
        return cls(entries=tuple(entries)), dropped

    def approaches(self) -> set[str]:
        return {tag for entry in self.entries for tag in entry.approach_tags}


# -- ingestion ------------------------------------------------------------------


@dataclass
class IngestResult:
    entries: list[KnowledgeEntry] = field(default_factory=list)
    dropped: list[str] = field(default_factory=list)

    def pack(self) -> KnowledgePack:
        return KnowledgePack(entries=tuple(self.entries))


def _entry_id(source: KnowledgeSource, mapping: dict[str, str]) -> str:
    content = [source.label()]
    content.extend(mapping.get(name, "") for name in (
        "approach_tags", "stage_tags", "function_tags",
        "key_points", "instruction", "example_dialogue", "keywords",
    ))
    return "k" + text_digest("\x1f".join(content))


def _entry_from_block(block: str, source: KnowledgeSource) -> KnowledgeEntry:
    mapping = kv_map(parse_kv_lines(block))
    instruction = mapping.get("instruction", "")
    example = mapping.get("example_dialogue", "")
    return KnowledgeEntry(
        entry_id=_entry_id(source, mapping),
        source=source,
        approach_tags=tuple(split_list(mapping.get("approach_tags", ""))),
        stage_tags=tuple(t.lower() for t in split_list(mapping.get("stage_tags", ""))),
        function_tags=tuple(split_list(mapping.get("function_tags", ""))),
        key_points=mapping.get("key_points", ""),
        instruction=instruction,
        example_dialogue=example,
        keywords=tuple(word.lower() for word in split_list(mapping.get("keywords", ""))),
    )


def ingest(gateway: LlmGateway, chapters: list[dict]) -> IngestResult:
    """Distill raw chapters into validated knowledge entries.

    Each chapter is one provider call; entries failing invariants are dropped
    with a report line. A chapter yielding zero valid entries is a warning,
    not a failure.
    """
    result = IngestResult()
    seen: set[str] = set()
    for chapter in chapters:
        src = chapter["source"]
        source = KnowledgeSource(src["book_title"], src["chapter"], src.get("section", ""))
        body = chapter["body"]
        if not body.strip():
            result.dropped.append(f"{source.label()}: empty chapter body")
            continue
        completion = gateway.complete(prompts.ingest_bundle(source.label(), body))
        blocks = [b for b in _split_blocks(completion) if b.strip()]
        valid_before = len(result.entries)
        for block in blocks:
            try:
                entry = _entry_from_block(block, source)
            except ParseError as exc:
                result.dropped.append(f"{source.label()}: unparseable block ({exc})")
                continue
            reason = _validate_entry(entry)
            if reason is not None:
                result.dropped.append(f"{source.label()}: dropped entry ({reason})")
                continue
            if entry.entry_id in seen:
                result.dropped.append(f"{source.label()}: duplicate of {entry.entry_id}")
                continue
            seen.add(entry.entry_id)
            result.entries.append(entry)
        if len(result.entries) == valid_before:
            logger.warning("chapter %s produced no valid entries", source.label())
            result.dropped.append(f"{source.label()}: no valid entries from chapter")
    return result


def _split_blocks(completion: str) -> list[str]:
    blocks, current = [], []
    for line in completion.splitlines():
        if line.strip() == "---":
            blocks.append("\n".join(current))
            current = []
        else:
            current.append(line)
    blocks.append("\n".join(current))
    return blocks


# -- query building ---------------------------------------------------------------


def build_query(gateway: LlmGateway, ctx: ContextWindow, profile: CaseConceptualization,
                action_directive: str, approach: str, phase: str) -> RetrievalQuery:
    """Ask the model for retrieval labels; fall back to content keywords."""
    bundle = prompts.retrieve_labels_bundle(ctx, profile.summary(), action_directive, approach, phase)
    completion = gateway.complete(bundle)
    try:
        mapping = kv_map(parse_kv_lines(completion))
        functions = tuple(split_list(mapping.get("functions", "")))
        keywords = tuple(split_list(mapping.get("keywords", "")))
        if not functions and not keywords:
            raise ParseError("labels completion carried no functions or keywords")
    except ParseError as exc:
        logger.warning("retrieve_labels unparseable, falling back to message keywords: %s", exc)
        last_client = next((m.text for m in reversed(ctx.messages) if m.role == "client"), "")
        return RetrievalQuery.build(
            wanted_approach=approach, wanted_stage=phase,
            keywords=tuple(content_words(last_client)),
        )
    return RetrievalQuery.build(
        wanted_approach=approach, wanted_stage=phase,
        wanted_functions=functions, keywords=keywords,
    )


# -- retrieval ----------------------------------------------------------------------


def _jaccard(a: set[str], b: set[str]) -> float:
    if not a or not b:
        return 0.0
    union = a | b
    return len(a & b) / len(union)


def _cosine(a: Counter, b: Counter) -> float:
    if not a or not b:
        return 0.0
    dot = sum(count * b[term] for term, count in a.items())
    norm_a = math.sqrt(sum(c * c for c in a.values()))
    norm_b = math.sqrt(sum(c * c for c in b.values()))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return dot / (norm_a * norm_b)


def entry_term_counts(entry: KnowledgeEntry) -> Counter:
    """Term-frequency vector: entry keywords plus content words of key_points."""
    counts = Counter(word.lower() for word in entry.keywords)
    counts.update(content_words(entry.key_points))
    return counts


def score_entry(query: RetrievalQuery, entry: KnowledgeEntry) -> tuple[float, tuple[str, ...]]:
    q_funcs = {f.lower() for f in query.wanted_functions}
    e_funcs = {f.lower() for f in entry.function_tags}
    jac = _jaccard(q_funcs, e_funcs)
    q_vec = Counter(query.keywords)
    e_vec = entry_term_counts(entry)
    cos = _cosine(q_vec, e_vec)
    matched: list[str] = []
    if query.wanted_approach and query.wanted_approach.lower() in {t.lower() for t in entry.approach_tags}:
        matched.append(f"approach:{query.wanted_approach}")
    if query.wanted_stage and query.wanted_stage in entry.stage_tags:
        matched.append(f"stage:{query.wanted_stage}")
    matched.extend(f"function:{f}" for f in sorted(q_funcs & e_funcs))
    matched.extend(f"keyword:{w}" for w in query.keywords if e_vec[w] > 0)
    return 0.5 * jac + 0.5 * cos, tuple(matched)


def _passes_filters(query: RetrievalQuery, entry: KnowledgeEntry) -> bool:
    if query.wanted_approach:
        if query.wanted_approach.lower() not in {t.lower() for t in entry.approach_tags}:
            return False
    if query.wanted_stage:
        if query.wanted_stage not in entry.stage_tags:
            return False
    return True


def retrieve(query: RetrievalQuery, pack: KnowledgePack, k: int = 1,
             min_score: float = 0.05) -> list[RetrievalResult]:
    """Top-k entries passing the hard filters, scored and tie-broken by id."""
    scored: list[RetrievalResult] = []
    for entry in pack.entries:
        if not _passes_filters(query, entry):
            continue
        score, matched = score_entry(query, entry)
        if score < min_score:
            continue
        scored.append(RetrievalResult(entry=entry, score=score, matched_on=matched))
    scored.sort(key=lambda r: (-r.score, r.entry.entry_id))
    return scored[:k]
