"""Versioned document corpus: clause-aware chunks, byte-exact evidence spans,
and a deterministic keyword reference retriever.

Offsets are byte offsets into the UTF-8 encoded document text, half-open
[start, end). A corpus is immutable after load and safe for concurrent reads.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

from .errors import (
    DuplicateDocument,
    MalformedManifest,
    MissingText,
    OutOfRange,
    UnknownDocument,
)

DOC_TYPES = ("master", "addendum", "exhibit", "email", "tender", "catalog", "policy")

_LABEL_RE = re.compile(r"^([A-Z]{1,2}\d+)\.\s+")
_HEADER_RE = re.compile(r"^(Exhibit|Section|Article|ARTICLE)\b[^.\n]*$")
_AMENDMENT_TOKENS = ("addendum", "amendment", "supersede")


@dataclass(frozen=True)
class DocumentMeta:
    doc_id: str
    version: str
    doc_type: str
    effective_start: date | None
    signed: bool
    text_ref: str


@dataclass(frozen=True)
class EvidenceSpan:
    doc_id: str
    version: str
    start: int
    end: int

    def key(self) -> str:
        return f"{self.doc_id}@{self.version}:{self.start}-{self.end}"


@dataclass(frozen=True)
class Chunk:
    span: EvidenceSpan
    text: str
    header_context: str
    label: str | None = None


@dataclass(frozen=True)
class Document:
    meta: DocumentMeta
    data: bytes
    chunks: tuple[Chunk, ...]
    amendment_language: bool


@dataclass(frozen=True)
class FieldQuery:
    field: str
    supplier_id: str | None = None
    part_id: str | None = None
    site: str | None = None


class Corpus:
    """Immutable set of versioned documents with eager clause chunking."""

    def __init__(self, documents: dict[tuple[str, str], Document]):
        self._documents = dict(documents)

    @property
    def documents(self) -> dict[tuple[str, str], Document]:
        return self._documents

    def document(self, doc_id: str, version: str) -> Document:
        try:
            return self._documents[(doc_id, version)]
        except KeyError:
            raise UnknownDocument(f"no document {doc_id!r} version {version!r}") from None

    def all_chunks(self) -> list[Chunk]:
        out: list[Chunk] = []
        for key in sorted(self._documents):
            out.extend(self._documents[key].chunks)
        return out

    def labeled_span(self, doc_id: str, label: str) -> EvidenceSpan:
        """Span of the chunk carrying a fixture line label, e.g. 'L1'."""
        for key in sorted(self._documents):
            if key[0] != doc_id:
                continue
            for chunk in self._documents[key].chunks:
                if chunk.label == label:
                    return chunk.span
        raise UnknownDocument(f"no chunk labeled {label!r} in {doc_id!r}")

    def label_of(self, span: EvidenceSpan) -> str | None:
        """Fixture label of the chunk containing a span ('doc:L1' addressing)."""
        doc = self._documents.get((span.doc_id, span.version))
        if doc is None:
            return None
        for chunk in doc.chunks:
            if chunk.span.start <= span.start and span.end <= chunk.span.end:
                return chunk.label
        return None


def _chunk_document(meta: DocumentMeta, data: bytes) -> tuple[tuple[Chunk, ...], bool]:
    """One chunk per non-empty line-block; header blocks captured separately.

    The first block is the document header; later single-line blocks that look
    like bare section/exhibit headings update the header context instead of
    becoming chunks.
    """
    text = data.decode("utf-8")
    blocks: list[tuple[int, str]] = []  # (char offset, block text)
    pos = 0
    for raw in re.split(r"\n[ \t]*\n", text):
        idx = text.index(raw, pos)
        if raw.strip():
            blocks.append((idx, raw.strip("\n")))
        pos = idx + len(raw)

    chunks: list[Chunk] = []
    header = ""
    first_chunk_text = ""
    for i, (char_off, block) in enumerate(blocks):
        if i == 0:
            header = block
            continue
        if _HEADER_RE.match(block) and "\n" not in block and _LABEL_RE.match(block) is None:
            header = block
            continue
        start = len(text[:char_off].encode("utf-8"))
        end = start + len(block.encode("utf-8"))
        m = _LABEL_RE.match(block)
        label = m.group(1) if m else None
        chunks.append(
            Chunk(
                span=EvidenceSpan(meta.doc_id, meta.version, start, end),
                text=block,
                header_context=header,
                label=label,
            )
        )
        if not first_chunk_text:
            first_chunk_text = block
    probe = (blocks[0][1] if blocks else "") + "\n" + first_chunk_text
    amendment = any(tok in probe.lower() for tok in _AMENDMENT_TOKENS)
    return tuple(chunks), amendment


def _parse_meta(entry: dict, base: Path) -> DocumentMeta:
    required = {"doc_id", "version", "doc_type", "effective_start", "signed", "text_path"}
    if not isinstance(entry, dict) or not required.issubset(entry):
        missing = required - set(entry) if isinstance(entry, dict) else required
        raise MalformedManifest(f"manifest entry missing keys: {sorted(missing)}")
    if entry["doc_type"] not in DOC_TYPES:
        raise MalformedManifest(f"unknown doc_type {entry['doc_type']!r}")
    if not isinstance(entry["signed"], bool):
        raise MalformedManifest("signed must be a boolean")
    eff = entry["effective_start"]
    effective = date.fromisoformat(eff) if eff is not None else None
    return DocumentMeta(
        doc_id=str(entry["doc_id"]),
        version=str(entry["version"]),
        doc_type=entry["doc_type"],
        effective_start=effective,
        signed=entry["signed"],
        text_ref=str(base / entry["text_path"]),
    )


def load_corpus(manifest_path: str | Path) -> Corpus:
    """Load `corpus.json` and eagerly chunk every referenced document."""
    manifest_path = Path(manifest_path)
    try:
        entries = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedManifest(f"cannot read manifest {manifest_path}: {exc}") from exc
    if not isinstance(entries, list):
        raise MalformedManifest("manifest must be a JSON array of document records")

    documents: dict[tuple[str, str], Document] = {}
    for entry in entries:
        meta = _parse_meta(entry, manifest_path.parent)
        key = (meta.doc_id, meta.version)
        if key in documents:
            raise DuplicateDocument(f"duplicate (doc_id, version) {key}")
        try:
            data = Path(meta.text_ref).read_bytes()
        except OSError as exc:
            raise MissingText(f"cannot read {meta.text_ref}: {exc}") from exc
        chunks, amendment = _chunk_document(meta, data)
        documents[key] = Document(meta, data, chunks, amendment)
    return Corpus(documents)


def resolve_span(corpus: Corpus, span: EvidenceSpan) -> str:
    """Exact byte substring referenced by a span; pure function of its inputs."""
    doc = corpus.document(span.doc_id, span.version)
    if span.start < 0 or span.end <= span.start:
        raise OutOfRange(f"invalid span bounds [{span.start}, {span.end})")
    if span.end > len(doc.data):
        raise OutOfRange(
            f"span end {span.end} exceeds document length {len(doc.data)}"
        )
    return doc.data[span.start : span.end].decode("utf-8")


# -- reference retriever -------------------------------------------------------

FIELD_KINDS = ("moq", "lead_time", "price_tiers", "capacity", "substitution", "condition")

# Ring 0 is always searched; repair retries widen to deeper rings.
SYNONYM_RINGS: dict[str, tuple[tuple[str, ...], ...]] = {
    "moq": (
        ("moq", "minimum order quantity", "minimum order"),
        ("minimum purchase", "minimum quantity"),
        ("smallest order",),
    ),
    "lead_time": (
        ("lead time",),
        ("lead-time", "delivery time"),
        ("transit time",),
    ),
    "price_tiers": (
        ("price schedule", "unit price", "price"),
        ("tier", "discount"),
        ("pricing",),
    ),
    "capacity": (
        ("allocation", "capacity", "cap shipments"),
        ("cap",),
        ("quota",),
    ),
    "substitution": (
        ("substitution", "substitute", "alternate"),
        ("approved vendor", "avl"),
        ("replacement",),
    ),
    "condition": (
        ("volume condition", "cumulative", "volume"),
        ("rebate", "conditional"),
        ("threshold",),
    ),
}


def _phrase_count(phrase: str, text: str) -> int:
    pattern = r"\b" + re.escape(phrase.lower()).replace(r"\ ", r"\s+") + r"\b"
    return len(re.findall(pattern, text.lower()))


@dataclass(frozen=True)
class KeywordRetriever:
    """Deterministic keyword-scoring retriever over field synonym rings.

    Stand-in for hybrid retrieval; external retrievers can be passed to
    :func:`retrieve` behind the same callable interface.
    """

    extra_rings: int = 0
    ring_weight: float = 2.0
    deep_ring_weight: float = 1.0
    identifier_bonus: float = 1.0

    def __call__(self, corpus: Corpus, query: FieldQuery) -> list[Chunk]:
        rings = SYNONYM_RINGS.get(query.field)
        if rings is None:
            raise ValueError(f"unknown field kind {query.field!r}")
        scored: list[tuple[float, tuple, Chunk]] = []
        for chunk in corpus.all_chunks():
            haystack = chunk.text + "\n" + chunk.header_context
            score = 0.0
            for ring_idx, ring in enumerate(rings):
                if ring_idx > self.extra_rings:
                    break
                weight = self.ring_weight if ring_idx == 0 else self.deep_ring_weight
                for phrase in ring:
                    score += weight * _phrase_count(phrase, haystack)
            for ident in (query.supplier_id, query.part_id, query.site):
                if ident and ident.lower() in haystack.lower():
                    score += self.identifier_bonus
            if score > 0:
                key = (chunk.span.doc_id, chunk.span.version, chunk.span.start)
                scored.append((score, key, chunk))
        scored.sort(key=lambda item: (-item[0], item[1]))
        return [chunk for _, _, chunk in scored]


_DEFAULT_RETRIEVER = KeywordRetriever()


def retrieve(corpus: Corpus, query: FieldQuery, retriever=None) -> list[Chunk]:
    """Ranked chunks for a field query; stable across runs."""
    return (retriever or _DEFAULT_RETRIEVER)(corpus, query)
