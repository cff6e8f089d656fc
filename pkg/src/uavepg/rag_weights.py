"""Retrieval-grounded proposal of utility weights.

A corpus is split into sentence blocks, embedded, and searched by cosine similarity; the
top hits plus a scenario digest are handed to a generator whose output is validated
before it can reach a GameConfig.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import re
import time
import urllib.error
import urllib.request
import warnings
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

EMPHASES = ("throughput", "energy", "latency", "balanced")
STOPWORDS = frozenset(
    "a an and are as at be by can for from has in is it its of on or so that the their then this to "
    "when with which should must often than over own one each every per more most".split()
)
_SENTENCE_END = re.compile(r"(?<=[.!?])\s+")
_TOKEN = re.compile(r"[a-z0-9]+")


class TransportError(RuntimeError):
    """Remote backend unreachable or misbehaving after all retries."""


class WeightValidationError(ValueError):
    def __init__(self, message: str, raw=None):
        super().__init__(message)
        self.raw = raw


# ---------------------------------------------------------------------------
# chunks and index


@dataclass(frozen=True)
class KnowledgeChunk:
    id: str
    source_doc: str
    ordinal: int
    text: str
    vector: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("chunk text must be non-empty")
        if self.vector is not None:
            n = math.sqrt(sum(v * v for v in self.vector))
            if abs(n - 1.0) > 1e-9:
                raise ValueError(f"chunk {self.id} vector norm {n} is not 1")


@dataclass(frozen=True)
class KnowledgeIndex:
    chunks: tuple[KnowledgeChunk, ...]
    dimension: int
    block_size: int
    embedder_id: str

    def __post_init__(self):
        for c in self.chunks:
            if c.vector is None or len(c.vector) != self.dimension:
                raise ValueError(f"chunk {c.id} lacks a {self.dimension}-d vector")
        by_doc: dict[str, list[int]] = {}
        for c in self.chunks:
            by_doc.setdefault(c.source_doc, []).append(c.ordinal)
        for doc, ords in by_doc.items():
            if sorted(ords) != list(range(len(ords))):
                raise ValueError(f"chunk ordinals of {doc} are not contiguous")

    def matrix(self) -> np.ndarray:
        return np.array([c.vector for c in self.chunks], dtype=float)

    def to_json(self) -> str:
        doc = {
            "dimension": self.dimension,
            "block_size": self.block_size,
            "embedder_id": self.embedder_id,
            "chunks": [
                {"id": c.id, "source": c.source_doc, "ordinal": c.ordinal, "text": c.text, "vector": list(c.vector)}
                for c in self.chunks
            ],
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "KnowledgeIndex":
        doc = json.loads(text)
        chunks = tuple(
            KnowledgeChunk(c["id"], c["source"], int(c["ordinal"]), c["text"], tuple(map(float, c["vector"])))
            for c in doc["chunks"]
        )
        return cls(chunks, int(doc["dimension"]), int(doc.get("block_size", 0)), doc["embedder_id"])

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "KnowledgeIndex":
        return cls.from_json(Path(path).read_text())


def split_sentences(text: str) -> list[str]:
    parts = _SENTENCE_END.split(" ".join(text.split()))
    return [p for p in parts if p]


def chunk_corpus(docs: Sequence[tuple[str, str]], block_size: int) -> list[KnowledgeChunk]:
    """Group consecutive sentences into blocks of ``block_size`` (the last may be shorter)."""
    if block_size < 1:
        raise ValueError("block_size must be >= 1")
    out = []
    for doc_id, text in docs:
        sents = split_sentences(text)
        if not sents:
            warnings.warn(f"document {doc_id!r} is empty; skipped", stacklevel=2)
            continue
        for k in range(0, len(sents), block_size):
            ordinal = k // block_size
            out.append(KnowledgeChunk(f"{doc_id}#{ordinal}", doc_id, ordinal, " ".join(sents[k:k + block_size])))
    return out


# ---------------------------------------------------------------------------
# embedding backends


class Embedder(Protocol):
    embedder_id: str
    dimension: int

    def embed_many(self, texts: Sequence[str]) -> np.ndarray: ...


def tokens(text: str) -> list[str]:
    return [t for t in _TOKEN.findall(text.lower()) if t not in STOPWORDS]


def token_bucket(token: str, dimension: int) -> int:
    # stable across processes, unlike the salted builtin hash()
    h = hashlib.blake2b(token.encode(), digest_size=8).digest()
    return int.from_bytes(h, "little") % dimension


class HashedBowEmbedder:
    """Term-frequency vector over hashed token buckets, L2-normalised."""

    def __init__(self, dimension: int = 256):
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        self.dimension = dimension
        self.embedder_id = f"hashed-bow-{dimension}"

    def embed(self, text: str) -> np.ndarray:
        v = np.zeros(self.dimension)
        for t in tokens(text):
            v[token_bucket(t, self.dimension)] += 1.0
        n = np.linalg.norm(v)
        if n == 0:
            raise ValueError(f"no indexable tokens in {text!r}")
        return v / n

    def embed_many(self, texts):
        return np.array([self.embed(t) for t in texts])


def _post_json(url: str, payload: dict, timeout: float, retries: int, backoff: float) -> bytes:
    body = json.dumps(payload).encode()
    last = None
    for attempt in range(retries):
        req = urllib.request.Request(url, data=body, headers={"Content-Type": "application/json"}, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=timeout) as resp:
                return resp.read()
        except (urllib.error.URLError, TimeoutError, ConnectionError) as exc:
            last = exc
            if attempt + 1 < retries:
                time.sleep(backoff * 2**attempt)
    raise TransportError(f"POST {url} failed after {retries} attempts: {last!r}")


class HttpEmbedder:
    """Remote embedder: {"model", "input": [...]} -> {"vectors": [[...]]}."""

    def __init__(self, url: str, model: str, dimension: int, timeout: float = 10.0, retries: int = 3,
                 backoff: float = 0.2):
        self.url, self.model, self.dimension = url, model, dimension
        self.timeout, self.retries, self.backoff = timeout, retries, backoff
        self.embedder_id = f"http:{model}"

    def embed_many(self, texts):
        raw = _post_json(self.url, {"model": self.model, "input": list(texts)}, self.timeout, self.retries, self.backoff)
        try:
            vecs = np.array(json.loads(raw)["vectors"], dtype=float)
        except (ValueError, KeyError, TypeError) as exc:
            raise TransportError(f"malformed embedding response from {self.url}: {raw[:200]!r}") from exc
        if vecs.shape != (len(texts), self.dimension):
            raise TransportError(f"expected {(len(texts), self.dimension)} vectors from {self.url}, got {vecs.shape}")
        norms = np.linalg.norm(vecs, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise TransportError(f"zero vector returned by {self.url}")
        return vecs / norms

    def embed(self, text):
        return self.embed_many([text])[0]


def embed(text: str, backend: Embedder | None = None) -> np.ndarray:
    backend = backend or HashedBowEmbedder()
    return backend.embed_many([text])[0]


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine is undefined for a zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def build_index(docs, block_size: int, backend: Embedder | None = None) -> KnowledgeIndex:
    backend = backend or HashedBowEmbedder()
    raw = chunk_corpus(docs, block_size)
    vecs = backend.embed_many([c.text for c in raw]) if raw else np.zeros((0, backend.dimension))
    chunks = tuple(replace(c, vector=tuple(map(float, v))) for c, v in zip(raw, vecs))
    return KnowledgeIndex(chunks, backend.dimension, block_size, backend.embedder_id)


def retrieve_topk(index: KnowledgeIndex, query: str, k: int, backend: Embedder | None = None):
    """Top-``k`` chunks by cosine similarity, ties broken by chunk id."""
    if not index.chunks:
        raise ValueError("index is empty")
    if not 1 <= k <= len(index.chunks):
        raise ValueError(f"k must lie in [1, {len(index.chunks)}], got {k}")
    q = embed(query, backend)
    scores = index.matrix() @ q  # vectors are unit-norm
    order = sorted(range(len(index.chunks)), key=lambda n: (-round(float(scores[n]), 12), index.chunks[n].id))
    return [(index.chunks[n], float(np.clip(scores[n], -1.0, 1.0))) for n in order[:k]]


# ---------------------------------------------------------------------------
# proposals


@dataclass(frozen=True)
class ScenarioDigest:
    n_uavs: int
    n_users: int
    area: tuple[float, float]
    obstacle_density: float
    interference_level: str
    optimization_emphasis: str = "balanced"

    def __post_init__(self):
        if self.n_uavs < 1 or self.n_users < 1:
            raise ValueError("counts must be positive")
        if self.optimization_emphasis not in EMPHASES:
            raise ValueError(f"optimization_emphasis must be one of {EMPHASES}")

    def query(self) -> str:
        focus = {
            "throughput": "sum rate capacity bitrate volume",
            "energy": "battery endurance propulsion power",
            "latency": "packet delay hops responsiveness",
            "balanced": "capacity battery delay",
        }[self.optimization_emphasis]
        extra = " buildings shadow elevation" if self.obstacle_density > 0 else ""
        return f"{focus} interference {self.interference_level}{extra}"


@dataclass(frozen=True)
class WeightProposal:
    eta: tuple[float, float, float]
    psi: tuple[float, float, float]
    objective_weights: tuple[float, float, float]
    rationale: str = ""
    source_chunk_ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        validate_triples(self.eta, self.psi, self.objective_weights)


def validate_triples(*triples, raw=None):
    for name, t in zip(("eta", "psi", "objective_weights"), triples):
        if len(t) != 3:
            raise WeightValidationError(f"{name} must have 3 entries, got {len(t)}", raw)
        for v in t:
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v) or v < 0:
                raise WeightValidationError(f"{name} has an invalid weight {v!r}", raw)
        if not any(v > 0 for v in t):
            raise WeightValidationError(f"{name} needs at least one nonzero weight", raw)


def parse_proposal(raw: str, chunk_ids=()) -> WeightProposal:
    """Strictly parse a generator response into a validated proposal."""
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise WeightValidationError(f"response is not JSON: {exc}", raw) from exc
    if not isinstance(doc, dict):
        raise WeightValidationError("response must be a JSON object", raw)
    missing = {"eta", "psi", "objective_weights"} - doc.keys()
    if missing:
        raise WeightValidationError(f"response lacks {sorted(missing)}", raw)
    triples = []
    for key in ("eta", "psi", "objective_weights"):
        val = doc[key]
        if not isinstance(val, list):
            raise WeightValidationError(f"{key} must be a list", raw)
        triples.append(tuple(val))
    validate_triples(*triples, raw=raw)
    ids = doc.get("source_chunk_ids", list(chunk_ids))
    return WeightProposal(
        tuple(map(float, triples[0])), tuple(map(float, triples[1])), tuple(map(float, triples[2])),
        str(doc.get("rationale", "")), tuple(map(str, ids)),
    )


# relative weights; the unit scales live in GameConfig
RULES = {
    "balanced": ((1.0, 1.0, 1.0), (1.0, 1.0, 1.0), (1.0, 1.0, 1.0)),
    "throughput": ((1.0, 2.0, 1.0), (3.0, 1.0, 1.0), (3.0, 1.0, 1.0)),
    "energy": ((1.0, 1.0, 3.0), (1.0, 3.0, 1.0), (1.0, 3.0, 1.0)),
    "latency": ((2.0, 1.0, 1.0), (1.0, 1.0, 3.0), (1.0, 1.0, 3.0)),
}


class MockGenerator:
    """Rule table keyed by the digest's emphasis; deterministic and offline."""

    generator_id = "mock-rules"

    def generate(self, digest: ScenarioDigest, retrieved) -> WeightProposal:
        eta, psi, obj = RULES[digest.optimization_emphasis]
        ids = tuple(c.id for c in retrieved)
        return WeightProposal(eta, psi, obj, f"rule table row '{digest.optimization_emphasis}'", ids)


class HttpGenerator:
    """Remote generator: {"prompt"} -> body parsed as a proposal document."""

    generator_id = "http"

    def __init__(self, url: str, timeout: float = 30.0, retries: int = 3, backoff: float = 0.2):
        self.url, self.timeout, self.retries, self.backoff = url, timeout, retries, backoff

    def generate(self, digest: ScenarioDigest, retrieved) -> WeightProposal:
        prompt = build_prompt(digest, retrieved)
        raw = _post_json(self.url, {"prompt": prompt}, self.timeout, self.retries, self.backoff).decode("utf-8", "replace")
        return parse_proposal(raw, [c.id for c in retrieved])


def build_prompt(digest: ScenarioDigest, retrieved) -> str:
    lines = [
        "Propose non-negative utility weights for a UAV network as JSON with keys",
        "eta (links, interference, radio energy), psi (throughput, energy, latency),",
        "objective_weights (throughput, energy, latency), rationale, source_chunk_ids.",
        f"Fleet: {digest.n_uavs} UAVs, {digest.n_users} ground users, area {digest.area[0]:g} x {digest.area[1]:g} m.",
        f"Obstacle density {digest.obstacle_density:g}; interference {digest.interference_level};"
        f" emphasis {digest.optimization_emphasis}.",
        "Knowledge:",
    ]
    for c in retrieved:
        lines.append(f"[{c.id}] {c.text}")
    return "\n".join(lines)


def generate_weights(digest: ScenarioDigest, retrieved, backend=None) -> WeightProposal:
    retrieved = [c[0] if isinstance(c, tuple) else c for c in retrieved]
    if not retrieved:
        raise ValueError("generation needs at least one retrieved chunk")
    return (backend or MockGenerator()).generate(digest, retrieved)


def apply_proposal(cfg, proposal: WeightProposal):
    """Scale the base config's weights by the proposal's relative triples."""
    mul = lambda base, rel: tuple(float(b * r) for b, r in zip(base, rel))  # noqa: E731
    return replace(
        cfg,
        eta=mul(cfg.eta, proposal.eta),
        psi=mul(cfg.psi, proposal.psi),
        objective_weights=mul(cfg.objective_weights, proposal.objective_weights),
    )


# ---------------------------------------------------------------------------
# precision sweep and the bundled corpus


def precision_at_k(index, queries_with_relevance, k, backend=None) -> float:
    vals = []
    for q in queries_with_relevance:
        hits = retrieve_topk(index, q["query"], k, backend)
        rel = set(q["relevant"])
        vals.append(sum(c.source_doc in rel for c, _ in hits) / k)
    return float(np.mean(vals))


def precision_sweep(corpus, queries_with_relevance, block_sizes, ks, backend=None) -> list[dict]:
    """precision@k for every (block_size, k) cell; NaN where k exceeds the chunk count."""
    rows = []
    for b in block_sizes:
        index = build_index(corpus, b, backend)
        for k in ks:
            p = precision_at_k(index, queries_with_relevance, k, backend) if k <= len(index.chunks) else math.nan
            rows.append({"block_size": int(b), "k": int(k), "precision": p})
    return rows


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["block_size", "k", "precision"])
    for r in rows:
        w.writerow([r["block_size"], r["k"], f"{r['precision']:.6f}"])
    return buf.getvalue()


def load_corpus_dir(path) -> list[tuple[str, str]]:
    return [(p.stem, p.read_text()) for p in sorted(Path(path).glob("*.txt"))]


def bundled_corpus() -> list[tuple[str, str]]:
    root = resources.files("uavepg") / "data" / "knowledge"
    return sorted((p.name[:-4], p.read_text()) for p in root.iterdir() if p.name.endswith(".txt"))


def bundled_queries() -> list[dict]:
    return json.loads((resources.files("uavepg") / "data" / "planted_queries.json").read_text())
