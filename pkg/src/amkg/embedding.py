"""Hybrid formula + text embeddings.

Each entity gets two unit-normalized segments: a formula segment built from
an English reading of its LaTeX (zeros when there is none) and a text segment
from its name, description and metadata. The fused vector is the weighted
concatenation ``[0.3 * formula, 0.7 * text]`` and is deliberately not
re-normalized, so latex-free entities have norm 0.7 and equation-bearing ones
sqrt(0.58).
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import BackendError, DimensionError, MissingEmbeddingError

log = logging.getLogger(__name__)

FORMULA_DIM = 384
TEXT_DIM = 1536
FORMULA_WEIGHT = 0.3
TEXT_WEIGHT = 0.7
EMBEDDINGS_FILE = "embeddings.jsonl"

# -- latex -> words ----------------------------------------------------------

_FUNCTIONS = {
    "ln": "natural log of",
    "log": "log of",
    "exp": "exponential of",
    "sin": "sine of",
    "cos": "cosine of",
    "tan": "tangent of",
    "sinh": "hyperbolic sine of",
    "cosh": "hyperbolic cosine of",
    "tanh": "hyperbolic tangent of",
}
_OPERATORS = {
    "=": "equals",
    "+": "plus",
    "-": "minus",
    "*": "times",
    "/": "divided by",
    "cdot": "times",
    "times": "times",
    "leq": "less than or equal to",
    "geq": "greater than or equal to",
    "le": "less than or equal to",
    "ge": "greater than or equal to",
    "approx": "approximately equals",
    "propto": "is proportional to",
    "<": "less than",
    ">": "greater than",
    ",": ",",
}
_SKIP = {"left", "right", "big", "Big", "bigg", "Bigg", "displaystyle", ",", ";", "!", "quad", "qquad"}
_TEXT_COMMANDS = {"mathrm", "text", "mathit", "mathbf", "operatorname", "textrm", "mathsf"}


class _Translator:
    """Word-for-word reading of a LaTeX string.

    Adjacent operands get an explicit "times" between them; parentheses and
    braces only delimit operands and are otherwise dropped.
    """

    def __init__(self, text):
        self.s = text
        self.i = 0

    def peek(self):
        return self.s[self.i] if self.i < len(self.s) else ""

    def command(self):
        m = re.compile(r"\\([A-Za-z]+|.)").match(self.s, self.i)
        if not m:
            raise ValueError("dangling backslash")
        self.i = m.end()
        return m.group(1)

    def group(self):
        """Translate one braced group or single atom; returns a word list."""
        while self.peek().isspace():
            self.i += 1
        if self.peek() == "{":
            self.i += 1
            words = self.sequence("}")
            self.i += 1
            return words
        return self.sequence(None, single=True)

    def raw_group(self):
        while self.peek().isspace():
            self.i += 1
        if self.peek() != "{":
            ch = self.peek()
            self.i += 1
            return ch
        depth, start = 0, self.i
        while self.i < len(self.s):
            c = self.s[self.i]
            depth += c == "{"
            depth -= c == "}"
            self.i += 1
            if depth == 0:
                return self.s[start + 1:self.i - 1]
        raise ValueError("unbalanced braces")

    def subscript(self):
        sub = self.raw_group()
        sub = re.sub(r"\\(mathrm|text|mathit)\s*\{([^}]*)\}", r"\2", sub)
        sub = re.sub(r"[{}\\\s]", "", sub)
        return sub

    def sequence(self, close, single=False):
        words = []
        last_operand = False

        def operand(ws):
            nonlocal last_operand
            if last_operand:
                words.append("times")
            words.extend(ws)
            last_operand = True

        def operator(w):
            nonlocal last_operand
            words.append(w)
            last_operand = False

        while self.i < len(self.s):
            c = self.peek()
            if close is not None and c == close:
                return words
            if c.isspace():
                self.i += 1
                continue
            if c in "})]":
                if close is None and not single:
                    self.i += 1
                    continue
                if single:
                    return words
                raise ValueError("unbalanced close")
            if c in "([":
                self.i += 1
                inner = self.sequence(")" if c == "(" else "]")
                self.i += 1
                operand(inner)
            elif c == "{":
                self.i += 1
                inner = self.sequence("}")
                self.i += 1
                operand(inner)
            elif c == "^":
                self.i += 1
                words.extend(["to", "the", "power", "of"] + self.group())
                last_operand = True
            elif c == "_":
                self.i += 1
                sub = self.subscript()
                if words:
                    words[-1] = f"{words[-1]}_{sub}"
            elif c == "\\":
                name = self.command()
                if name in _SKIP:
                    continue
                if name == "frac":
                    num = self.group()
                    den = self.group()
                    operand(num + ["divided", "by"] + den)
                elif name == "sqrt":
                    operand(["square", "root", "of"] + self.group())
                elif name in _FUNCTIONS:
                    if last_operand:
                        words.append("times")
                    words.extend(_FUNCTIONS[name].split())
                    last_operand = False
                    if self.peek() == "_":
                        self.i += 1
                        words.extend(["base", self.subscript()])
                elif name in _OPERATORS:
                    operator(_OPERATORS[name])
                elif name in _TEXT_COMMANDS:
                    operand([self.subscript()])
                else:
                    operand([name])
            elif c in _OPERATORS:
                self.i += 1
                operator(_OPERATORS[c])
            else:
                m = re.compile(r"[A-Za-z][A-Za-z]*|\d+(?:\.\d+)?(?:[eE][-+]?\d+)?|\.\d+").match(self.s, self.i)
                if m:
                    self.i = m.end()
                    tok = m.group(0)
                    # runs of letters without a command are products of single symbols
                    if tok[0].isalpha() and len(tok) > 1 and self.peek() != "_":
                        for ch in tok:
                            operand([ch])
                    elif tok[0].isalpha() and len(tok) > 1:
                        for ch in tok[:-1]:
                            operand([ch])
                        operand([tok[-1]])
                    else:
                        operand([tok])
                else:
                    self.i += 1
                    operand([c])
            if single and words:
                return words
        return words


def _strip_formatting(latex: str) -> str:
    out = re.sub(r"\\(left|right|displaystyle|[,;!])", " ", latex)
    out = re.sub(r"\\([A-Za-z]+)", r"\1", out)
    out = re.sub(r"[{}\\]", " ", out)
    return re.sub(r"\s+", " ", out).strip()


def latex_to_description(latex: str) -> str:
    """English reading of a LaTeX expression; never raises, never emits backslashes."""
    if not latex:
        return ""
    try:
        words = _Translator(latex).sequence(None)
        text = " ".join(w for w in words if w)
    except (ValueError, IndexError):
        text = _strip_formatting(latex)
    text = text.replace("\\", " ")
    return re.sub(r"\s+", " ", text).strip()


# -- backends ----------------------------------------------------------------

_STOPWORDS = frozenset(
    "a an the of and or in on at to for by with from as is are be this that its it "
    "into than then which".split()
)


def _tokens(text: str):
    words = re.findall(r"[A-Za-z0-9]+", text.lower())
    return [w for w in words if w not in _STOPWORDS]


class EmbeddingBackend:
    """Interface: ``embed(text) -> np.ndarray`` of length ``dim``."""

    dim: int

    def embed(self, text: str) -> np.ndarray:
        raise NotImplementedError

    def embed_many(self, texts):
        return [self.embed(t) for t in texts]


class HashingEmbedder(EmbeddingBackend):
    """Deterministic offline embedder: sum of seeded per-token random vectors.

    Each token maps to a Gaussian vector drawn from an RNG seeded by a hash of
    ``(seed, token)``, so texts sharing vocabulary land close together while
    unrelated texts are nearly orthogonal.
    """

    def __init__(self, dim: int, seed: int = 0):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = int(dim)
        self.seed = int(seed)
        self._vec = lru_cache(maxsize=65536)(self._token_vector)

    def _token_vector(self, token):
        digest = hashlib.sha256(f"{self.seed}:{token}".encode()).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        return rng.standard_normal(self.dim)

    def embed(self, text: str) -> np.ndarray:
        out = np.zeros(self.dim)
        toks = _tokens(text)
        if not toks:
            toks = ["<empty>"]
        for t in toks:
            out += self._vec(t)
        return out


class SentenceTransformerEmbedder(EmbeddingBackend):
    """Local sentence-transformers model (optional dependency)."""

    def __init__(self, model_name="all-MiniLM-L6-v2"):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise BackendError("sentence-transformers is not installed") from exc
        self.model = SentenceTransformer(model_name)
        self.dim = int(self.model.get_sentence_embedding_dimension())

    def embed(self, text):
        return np.asarray(self.model.encode(text), dtype=float)


class HTTPEmbedder(EmbeddingBackend):
    """OpenAI-compatible ``/embeddings`` endpoint.

    Base URL and key come from ``AMKG_EMBED_BASE_URL`` / ``AMKG_EMBED_API_KEY``
    unless passed explicitly.
    """

    def __init__(self, model="text-embedding-3-small", dim=TEXT_DIM, base_url=None, api_key=None, timeout=60):
        self.model = model
        self.dim = int(dim)
        self.base_url = (base_url or os.environ.get("AMKG_EMBED_BASE_URL") or "").rstrip("/")
        self.api_key = api_key or os.environ.get("AMKG_EMBED_API_KEY")
        self.timeout = timeout
        if not self.base_url:
            raise BackendError("AMKG_EMBED_BASE_URL is not set")

    def embed(self, text):
        body = json.dumps({"model": self.model, "input": text}).encode()
        req = urllib.request.Request(self.base_url + "/embeddings", data=body, method="POST")
        req.add_header("Content-Type", "application/json")
        if self.api_key:
            req.add_header("Authorization", f"Bearer {self.api_key}")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.loads(resp.read())
            vec = np.asarray(payload["data"][0]["embedding"], dtype=float)
        except Exception as exc:
            raise BackendError(f"embedding request failed: {exc}") from exc
        if vec.shape != (self.dim,):
            raise DimensionError(f"endpoint returned dimension {vec.shape}, expected {self.dim}")
        return vec


# -- fusion ------------------------------------------------------------------

@dataclass
class HybridVector:
    formula_segment: np.ndarray
    text_segment: np.ndarray

    @property
    def fused(self) -> np.ndarray:
        return np.concatenate([FORMULA_WEIGHT * self.formula_segment, TEXT_WEIGHT * self.text_segment])


def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0 or not np.isfinite(n):
        return np.zeros_like(v)
    return v / n


def entity_text(e) -> str:
    """Text segment input: name, description and metadata in one sequence."""
    parts = [e.name.replace("_", " "), e.description or "", f"kind {e.kind.value}"]
    if e.symbol:
        parts.append(f"symbol {e.symbol}")
    if e.unit:
        parts.append(f"unit {e.unit}")
    return ". ".join(p for p in parts if p)


def _call(backend, text, expected_dim):
    try:
        v = np.asarray(backend.embed(text), dtype=float)
    except BackendError:
        raise
    except Exception as exc:
        raise BackendError(f"embedding backend failed: {exc}") from exc
    if v.shape != (expected_dim,):
        raise DimensionError(f"backend returned shape {v.shape}, expected ({expected_dim},)")
    return v


def embed_entity(e, formula_backend, text_backend) -> HybridVector:
    text = unit(_call(text_backend, entity_text(e), text_backend.dim))
    if e.latex:
        formula = unit(_call(formula_backend, latex_to_description(e.latex), formula_backend.dim))
    else:
        formula = np.zeros(formula_backend.dim)
    return HybridVector(formula, text)


def embed_text(text: str, text_backend, formula_dim=FORMULA_DIM) -> HybridVector:
    """Embed free text (queries, cluster summaries) with a zero formula segment."""
    return HybridVector(np.zeros(formula_dim), unit(_call(text_backend, text, text_backend.dim)))


def embed_graph(kg, formula_backend, text_backend, jobs=1) -> dict:
    """Fused vector per entity uri, computed in sorted-uri order."""
    uris = sorted(kg.entities)
    ents = [kg.entities[u] for u in uris]
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            vecs = list(pool.map(lambda e: embed_entity(e, formula_backend, text_backend), ents))
    else:
        vecs = [embed_entity(e, formula_backend, text_backend) for e in ents]
    return {u: v.fused for u, v in zip(uris, vecs)}


def default_backends(seed=0, formula_dim=FORMULA_DIM, text_dim=TEXT_DIM):
    return HashingEmbedder(formula_dim, seed=seed), HashingEmbedder(text_dim, seed=seed + 1)


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def cosine_matrix(vectors: np.ndarray) -> np.ndarray:
    """Pairwise cosine for the rows of ``vectors``; zero rows give 0."""
    v = np.asarray(vectors, dtype=float)
    norms = np.linalg.norm(v, axis=1)
    safe = np.where(norms == 0, 1.0, norms)
    u = v / safe[:, None]
    return np.clip(u @ u.T, -1.0, 1.0)


def require(embeddings: dict, uri: str):
    try:
        return embeddings[uri]
    except KeyError:
        raise MissingEmbeddingError(f"no embedding for {uri!r}") from None


def save_embeddings(embeddings: dict, path) -> None:
    path = Path(path)
    if path.is_dir():
        path = path / EMBEDDINGS_FILE
    with open(path, "w", encoding="utf-8") as fh:
        for uri in sorted(embeddings):
            fh.write(json.dumps({"uri": uri, "vector": [float(x) for x in embeddings[uri]]}) + "\n")


def load_embeddings(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / EMBEDDINGS_FILE
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                out[d["uri"]] = np.asarray(d["vector"], dtype=float)
    return out
