"""Equation-centered chunking of markdown documents.

Display equations are atomic: every one lands in exactly one chunk along
with the paragraph before and after it, when the budget allows. Text that is
not pulled in as equation context is packed greedily into further chunks,
splitting oversized paragraphs at sentence and then word boundaries.
"""

from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass, field

from ..errors import ChunkOverflowError

log = logging.getLogger(__name__)

MAX_TOKENS = 1024

_DISPLAY_RE = re.compile(
    r"\$\$.+?\$\$|\\\[.+?\\\]|\\begin\{(equation|align|eqnarray|gather|multline)\*?\}.+?\\end\{\1\*?\}",
    re.S,
)
_INLINE_RE = re.compile(r"(?<![\\$])\$([^$\n]+?)\$(?!\$)")


# -- tokenizers --------------------------------------------------------------

class RegexTokenizer:
    """Counts word runs and individual punctuation marks."""

    name = "regex"
    _re = re.compile(r"\w+|[^\w\s]")

    def count(self, text: str) -> int:
        return len(self._re.findall(text))


class TiktokenTokenizer:
    name = "tiktoken"

    def __init__(self, encoding="cl100k_base"):
        import tiktoken

        self._enc = tiktoken.get_encoding(encoding)
        self.name = f"tiktoken:{encoding}"

    def count(self, text: str) -> int:
        return len(self._enc.encode(text, disallowed_special=()))


def get_tokenizer(kind="auto"):
    """``auto`` prefers a BPE tokenizer and falls back to the regex counter."""
    if kind == "regex":
        return RegexTokenizer()
    if kind in ("auto", "tiktoken"):
        try:
            return TiktokenTokenizer()
        except Exception as exc:  # not installed, or encoding files unavailable offline
            if kind == "tiktoken":
                raise
            log.info("tiktoken unavailable (%s); using regex token counter", exc)
            return RegexTokenizer()
    raise ValueError(f"unknown tokenizer {kind!r}")


# -- chunks ------------------------------------------------------------------

@dataclass
class Chunk:
    id: str
    text: str
    equations: list = field(default_factory=list)
    token_count: int = 0
    source: str = ""

    def to_dict(self):
        return {"id": self.id, "text": self.text, "equations": list(self.equations),
                "token_count": self.token_count, "source": self.source}

    @classmethod
    def from_dict(cls, d):
        return cls(d["id"], d["text"], list(d.get("equations", [])), d.get("token_count", 0),
                   d.get("source", ""))


def chunk_id(text: str) -> str:
    return "chunk_" + hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def display_body(block: str) -> str:
    """LaTeX inside a display-math block, delimiters removed."""
    b = block.strip()
    if b.startswith("$$"):
        return b[2:-2].strip()
    if b.startswith("\\["):
        return b[2:-2].strip()
    m = re.match(r"\\begin\{(\w+\*?)\}(.*)\\end\{\1\}", b, re.S)
    return m.group(2).strip() if m else b


def find_equations(text: str) -> list:
    """Display bodies plus inline math segments that contain '='."""
    out = []
    for m in _DISPLAY_RE.finditer(text):
        body = display_body(m.group(0))
        if body and body not in out:
            out.append(body)
    stripped = _DISPLAY_RE.sub(" ", text)
    for m in _INLINE_RE.finditer(stripped):
        body = m.group(1).strip()
        if "=" in body and body not in out:
            out.append(body)
    return out


def _blocks(doc: str):
    """Split into ("eq"|"text", content) blocks in document order."""
    blocks = []
    pos = 0
    for m in _DISPLAY_RE.finditer(doc):
        before = doc[pos:m.start()]
        for para in re.split(r"\n\s*\n", before):
            if para.strip():
                blocks.append(("text", para.strip()))
        blocks.append(("eq", m.group(0).strip()))
        pos = m.end()
    for para in re.split(r"\n\s*\n", doc[pos:]):
        if para.strip():
            blocks.append(("text", para.strip()))
    return blocks


def _split_text(text, tokenizer, budget):
    """Break one paragraph into pieces within ``budget`` tokens."""
    if tokenizer.count(text) <= budget:
        return [text]
    sentences = re.split(r"(?<=[.!?])\s+", text)
    pieces, cur = [], ""
    for s in sentences:
        if tokenizer.count(s) > budget:
            if cur:
                pieces.append(cur)
                cur = ""
            words = s.split()
            part = ""
            for w in words:
                trial = f"{part} {w}".strip()
                if tokenizer.count(trial) > budget and part:
                    pieces.append(part)
                    part = w
                else:
                    part = trial
            if part:
                pieces.append(part)
            continue
        trial = f"{cur} {s}".strip()
        if tokenizer.count(trial) > budget and cur:
            pieces.append(cur)
            cur = s
        else:
            cur = trial
    if cur:
        pieces.append(cur)
    return pieces


def _make_chunk(parts, tokenizer, source):
    text = "\n\n".join(parts)
    return Chunk(chunk_id(text), text, find_equations(text), tokenizer.count(text), source)


def chunk_document(doc: str, tokenizer=None, max_tokens=MAX_TOKENS, source="") -> list:
    """Chunk ``doc`` so equations stay whole and every chunk fits ``max_tokens``."""
    if not doc or not doc.strip():
        raise ValueError("document is empty")
    tokenizer = tokenizer or RegexTokenizer()
    fits = lambda parts: tokenizer.count("\n\n".join(parts)) <= max_tokens  # noqa: E731
    blocks = _blocks(doc)
    covered = set()
    units = []       # (first block index, chunk parts)

    i = 0
    while i < len(blocks):
        if blocks[i][0] != "eq":
            i += 1
            continue
        j = i
        while j + 1 < len(blocks) and blocks[j + 1][0] == "eq":
            j += 1
        # a run of consecutive equations i..j; split it if it cannot fit together
        run = list(range(i, j + 1))
        groups, cur = [], []
        for k in run:
            if tokenizer.count(blocks[k][1]) > max_tokens:
                raise ChunkOverflowError(
                    f"equation block of {tokenizer.count(blocks[k][1])} tokens exceeds {max_tokens}"
                )
            if cur and not fits([blocks[m][1] for m in cur + [k]]):
                groups.append(cur)
                cur = []
            cur.append(k)
        groups.append(cur)
        for g_idx, g in enumerate(groups):
            parts = [blocks[m][1] for m in g]
            first = g[0]
            if g_idx == 0 and i > 0 and blocks[i - 1][0] == "text":
                if fits([blocks[i - 1][1]] + parts):
                    parts = [blocks[i - 1][1]] + parts
                    covered.add(i - 1)
                    first = i - 1
            if g_idx == len(groups) - 1 and j + 1 < len(blocks) and blocks[j + 1][0] == "text":
                if fits(parts + [blocks[j + 1][1]]):
                    parts = parts + [blocks[j + 1][1]]
                    covered.add(j + 1)
            covered.update(g)
            units.append((first, parts))
        i = j + 1

    # pack uncovered text in document order
    pending, pending_first = [], None
    for idx, (kind, content) in enumerate(blocks):
        if idx in covered or kind != "text":
            if pending:
                units.append((pending_first, pending))
                pending, pending_first = [], None
            continue
        for piece in _split_text(content, tokenizer, max_tokens):
            if pending and not fits(pending + [piece]):
                units.append((pending_first, pending))
                pending, pending_first = [], None
            if pending_first is None:
                pending_first = idx
            pending.append(piece)
    if pending:
        units.append((pending_first, pending))

    units.sort(key=lambda u: u[0])
    return [_make_chunk(parts, tokenizer, source) for _, parts in units]
