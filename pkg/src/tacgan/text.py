"""Caption embedding front end.

Two interchangeable backends produce the fixed-width embedding vector that
conditions both networks: a seeded feature-hashing encoder (bag of word
uni+bigrams, signed buckets, L2-normalized) and a lookup table of
precomputed vectors loaded from disk. Linear interpolation between
embeddings drives the text-interpolation experiments.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import DataError, FormatError

from .config import DEFAULT_TEXT_DIM


@dataclass(frozen=True)
class TextEmbedding:
    """A caption embedding plus the identity of the encoder that made it."""

    vector: np.ndarray
    encoder_id: str

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64)
        if v.ndim != 1:
            raise DataError(f"embedding must be a 1-D vector, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DataError("embedding contains non-finite entries")
        object.__setattr__(self, "vector", v)

    def __len__(self) -> int:
        return self.vector.shape[0]


class HashingEncoder:
    """Deterministic dependency-free encoder.

    Tokenizes on whitespace, hashes every unigram and bigram with a keyed
    hash into a signed bucket of the output vector, then L2-normalizes.
    Similar captions share most n-grams and therefore land near each other.
    """

    def __init__(self, dim: int = DEFAULT_TEXT_DIM, seed: int = 0, n_grams: int = 2):
        if dim <= 0:
            raise DataError(f"embedding dim must be positive, got {dim}")
        if n_grams < 1:
            raise DataError(f"n_grams must be >= 1, got {n_grams}")
        self.dim = dim
        self.seed = seed
        self.n_grams = n_grams
        self._key = (seed & (2 ** 64 - 1)).to_bytes(8, "little")
        self.encoder_id = f"hashing(dim={dim},seed={seed},n={n_grams})"

    def _hash(self, gram: str) -> int:
        digest = hashlib.blake2b(gram.encode("utf-8"), key=self._key, digest_size=8)
        return int.from_bytes(digest.digest(), "little")

    def embed(self, caption: str) -> TextEmbedding:
        if not caption or not caption.strip():
            raise DataError("cannot embed an empty caption")
        tokens = caption.split()
        vec = np.zeros(self.dim, dtype=np.float64)
        for order in range(1, self.n_grams + 1):
            for i in range(len(tokens) - order + 1):
                h = self._hash("\x1f".join(tokens[i : i + order]))
                sign = 1.0 if (h >> 63) & 1 else -1.0
                vec[h % self.dim] += sign
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            # Signed buckets cancelled out entirely; fall back to a unit
            # vector derived from the whole caption so the output stays valid.
            vec[self._hash(caption) % self.dim] = 1.0
            norm = 1.0
        return TextEmbedding(vector=vec / norm, encoder_id=self.encoder_id)


class TableEncoder:
    """Lookup backend over externally produced embeddings.

    Captions are compared byte-exactly; asking for an unknown caption is an
    error rather than a silent fallback.
    """

    def __init__(self, table: dict[str, np.ndarray], source: str = "<memory>"):
        if not table:
            raise FormatError(f"{source}: no rows")
        dims = {v.shape[0] for v in table.values()}
        if len(dims) != 1:
            raise FormatError(f"{source}: inconsistent vector lengths {sorted(dims)}")
        self.dim = dims.pop()
        self._table = table
        self.encoder_id = f"table({source},dim={self.dim})"

    def embed(self, caption: str) -> TextEmbedding:
        if caption not in self._table:
            raise DataError(f"caption not present in embedding table: {caption!r}")
        return TextEmbedding(vector=self._table[caption], encoder_id=self.encoder_id)


def load_precomputed_table(path: str) -> TableEncoder:
    """Load a tab-separated ``caption<TAB>v1,v2,...`` embedding table."""
    table: dict[str, np.ndarray] = {}
    expected_len: int | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for row_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise FormatError(f"{path}: row {row_no}: expected caption<TAB>values")
            caption, values = line.split("\t", 1)
            try:
                vec = np.array(
                    [float(x) for x in values.split(",")], dtype=np.float64
                )
            except ValueError as exc:
                raise FormatError(f"{path}: row {row_no}: {exc}") from exc
            if expected_len is None:
                expected_len = vec.shape[0]
            elif vec.shape[0] != expected_len:
                raise FormatError(
                    f"{path}: row {row_no}: vector length {vec.shape[0]} != "
                    f"{expected_len} of earlier rows"
                )
            if not np.all(np.isfinite(vec)):
                raise FormatError(f"{path}: row {row_no}: non-finite value")
            table[caption] = vec
    return TableEncoder(table, source=path)


def interpolate_embeddings(
    a: TextEmbedding, b: TextEmbedding, alpha: float
) -> TextEmbedding:
    """Linear interpolation ``(1-alpha)*a + alpha*b``; endpoints are exact."""
    if len(a) != len(b):
        raise DataError(f"embedding lengths differ: {len(a)} vs {len(b)}")
    if a.encoder_id != b.encoder_id:
        raise DataError(
            f"cannot interpolate across encoders: {a.encoder_id} vs {b.encoder_id}"
        )
    if not (0.0 <= alpha <= 1.0):
        raise DataError(f"alpha must be in [0, 1], got {alpha}")
    vec = (1.0 - alpha) * a.vector + alpha * b.vector
    return TextEmbedding(vector=vec, encoder_id=f"interp({a.encoder_id})")


def make_encoder(spec: str, dim: int, seed: int = 0):
    """Build a backend from its run-config spec ('hashing' or 'table:<path>')."""
    if spec == "hashing":
        return HashingEncoder(dim=dim, seed=seed)
    if spec.startswith("table:"):
        enc = load_precomputed_table(spec[len("table:"):])
        if enc.dim != dim:
            raise DataError(
                f"embedding table width {enc.dim} does not match configured "
                f"text_dim {dim}"
            )
        return enc
    raise DataError(f"unknown encoder spec: {spec!r}")
