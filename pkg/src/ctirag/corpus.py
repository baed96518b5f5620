"""Document loading and chunking.

Documents are loaded page by page and split into overlapping chunks whose IDs
follow the composite scheme ``<doc_id>_p<page_index>_c<chunk_index_on_page>``.
Splitting is deterministic: the same input always produces the same chunks.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path

logger = logging.getLogger(__name__)

DEFAULT_SEPARATORS = ("\n\n", "\n", ". ", " ", "")

PAGE_BREAK = "\x0c"  # form feed separates pages in .txt fixtures

_CHUNK_ID_RE = re.compile(r"^(.*)_p(\d+)_c(\d+)$")


class CorpusError(Exception):
    """Base class for corpus loading/chunking failures."""


class PathNotFound(CorpusError):
    pass


class UnreadableFile(CorpusError):
    def __init__(self, name: str, reason: str = ""):
        self.name = name
        super().__init__(f"unreadable file {name!r}" + (f": {reason}" if reason else ""))


class DuplicateDocId(CorpusError):
    pass


@dataclass(frozen=True)
class PageText:
    page_index: int
    text: str


@dataclass(frozen=True)
class SourceDocument:
    doc_id: str
    pages: tuple[PageText, ...]

    def __post_init__(self):
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")
        for position, page in enumerate(self.pages):
            if page.page_index != position:
                raise ValueError(
                    f"page_index {page.page_index} does not match position {position} in {self.doc_id!r}"
                )


@dataclass(frozen=True)
class ChunkConfig:
    """Splitting parameters.

    The separator hierarchy is applied in order: paragraph break, line break,
    sentence boundary (cut immediately after ". ", period kept with the
    preceding piece), single space, and finally character by character. Every
    separator stays attached to the piece it terminates, so pieces concatenate
    back to the original text exactly.
    """

    chunk_size: int = 1000
    chunk_overlap: int = 100
    separators: tuple[str, ...] = DEFAULT_SEPARATORS

    def __post_init__(self):
        if not (0 <= self.chunk_overlap < self.chunk_size):
            raise ValueError(
                f"require 0 <= chunk_overlap < chunk_size, got overlap={self.chunk_overlap} size={self.chunk_size}"
            )


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    text: str
    source: str
    page_index: int
    chunk_index_on_page: int


def chunk_id_for(doc_id: str, page_index: int, chunk_index_on_page: int) -> str:
    return f"{doc_id}_p{page_index}_c{chunk_index_on_page}"


def parse_chunk_id(chunk_id: str) -> tuple[str, int, int]:
    """Split a chunk ID into (doc_id, page_index, chunk_index_on_page).

    Matched from the right so doc IDs containing "_p" stay intact.
    """
    match = _CHUNK_ID_RE.match(chunk_id)
    if match is None:
        raise ValueError(f"not a chunk id: {chunk_id!r}")
    return match.group(1), int(match.group(2)), int(match.group(3))


def _cut_after(text: str, sep: str) -> list[str]:
    parts = text.split(sep)
    pieces = [part + sep for part in parts[:-1]]
    if parts[-1]:
        pieces.append(parts[-1])
    return pieces


def _atomize(text: str, cfg: ChunkConfig) -> list[str]:
    """Cut text into order-preserving pieces of at most chunk_size characters.

    Works level by level: each separator is only applied to pieces that are
    still longer than chunk_size after the previous level.
    """
    pieces = [text]
    for sep in cfg.separators:
        if all(len(piece) <= cfg.chunk_size for piece in pieces):
            break
        next_pieces: list[str] = []
        for piece in pieces:
            if len(piece) <= cfg.chunk_size:
                next_pieces.append(piece)
            elif sep == "":
                next_pieces.extend(piece)
            else:
                next_pieces.extend(_cut_after(piece, sep))
        pieces = next_pieces
    return pieces


def _pack(atoms: list[str], cfg: ChunkConfig) -> list[str]:
    """Greedy merge: each chunk is maximal without exceeding chunk_size, and
    consecutive chunks share whole trailing atoms of up to chunk_overlap chars."""
    sizes = [len(atom) for atom in atoms]
    chunks: list[str] = []
    start = 0
    total = 0
    for end, size in enumerate(sizes):
        if end > start and total + size > cfg.chunk_size:
            chunks.append("".join(atoms[start:end]))
            while start < end and (total > cfg.chunk_overlap or total + size > cfg.chunk_size):
                total -= sizes[start]
                start += 1
        total += size
    if start < len(atoms):
        chunks.append("".join(atoms[start:]))
    return chunks


def split_page(page: PageText, doc_id: str, cfg: ChunkConfig | None = None) -> list[Chunk]:
    """Split one page into chunks with IDs assigned per the composite scheme."""
    cfg = cfg or ChunkConfig()
    if not page.text:
        return []
    texts = _pack(_atomize(page.text, cfg), cfg)
    return [
        Chunk(
            chunk_id=chunk_id_for(doc_id, page.page_index, index),
            text=text,
            source=doc_id,
            page_index=page.page_index,
            chunk_index_on_page=index,
        )
        for index, text in enumerate(texts)
    ]


def chunk_corpus(docs: list[SourceDocument], cfg: ChunkConfig | None = None) -> list[Chunk]:
    """Split every page of every document, in document order then page order."""
    cfg = cfg or ChunkConfig()
    seen: set[str] = set()
    chunks: list[Chunk] = []
    for doc in docs:
        if doc.doc_id in seen:
            raise DuplicateDocId(f"duplicate doc_id {doc.doc_id!r}")
        seen.add(doc.doc_id)
        for page in doc.pages:
            chunks.extend(split_page(page, doc.doc_id, cfg))
    return chunks


def _read_text_pages(path: Path) -> list[str]:
    data = path.read_bytes()
    text = data.decode("utf-8")
    return text.split(PAGE_BREAK)


def load_directory(
    path: str | Path,
    pdf_extractor=None,
    on_error: str = "abort",
) -> list[SourceDocument]:
    """Load every supported file in a directory as a SourceDocument.

    ``.txt`` files are read directly (form feed = page break); ``.pdf`` files
    go through ``pdf_extractor`` (a callable path -> list of page texts).
    Files are ordered by filename ascending. ``on_error`` is "abort" (raise on
    the first unreadable file) or "skip" (log a warning and continue).
    """
    if on_error not in ("abort", "skip"):
        raise ValueError(f"on_error must be 'abort' or 'skip', got {on_error!r}")
    root = Path(path)
    if not root.is_dir():
        raise PathNotFound(f"not a readable directory: {root}")

    docs: list[SourceDocument] = []
    for entry in sorted(root.iterdir(), key=lambda p: p.name):
        if not entry.is_file():
            continue
        suffix = entry.suffix.lower()
        try:
            if suffix == ".txt":
                page_texts = _read_text_pages(entry)
            elif suffix == ".pdf":
                if pdf_extractor is None:
                    raise UnreadableFile(entry.name, "no PDF extractor configured")
                page_texts = list(pdf_extractor(entry))
            else:
                continue
        except UnreadableFile:
            if on_error == "abort":
                raise
            logger.warning("skipping unreadable file %s", entry.name)
            continue
        except Exception as exc:
            if on_error == "abort":
                raise UnreadableFile(entry.name, str(exc)) from exc
            logger.warning("skipping unreadable file %s: %s", entry.name, exc)
            continue
        pages = tuple(PageText(page_index=i, text=t) for i, t in enumerate(page_texts))
        docs.append(SourceDocument(doc_id=entry.name, pages=pages))
    return docs
