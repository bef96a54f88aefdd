"""Bit-exact persistence and validation of embeddings, lexicons and labels.

File formats:
  * EMB1 binary: 4-byte ASCII magic "EMB1", u32 LE row count, u32 LE
    dimension, u8 normalized flag, 3 zero pad bytes, then n*d IEEE-754
    float32 LE values in row-major order.
  * Noun lexicon: UTF-8 JSON-lines sidecar, one JSON string per line,
    line order matching the rows of its EMB1 file.
  * Labels: a JSON array of non-negative integers.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DataError,
    DegenerateRowError,
    FormatError,
    IoError,
    SizeMismatch,
)

MAGIC = b"EMB1"
_HEADER = struct.Struct("<4sIIB3x")

# Tolerance for the "rows are unit norm" invariant.
NORM_TOL = 1e-4


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Dense row-major matrix of n d-dimensional float32 vectors."""

    data: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.float32)
        if a.ndim != 2:
            raise DataError(f"expected 2-D data, got shape {a.shape}")
        n, d = a.shape
        if n < 1 or d < 1:
            raise DataError(f"matrix must be at least 1x1, got {n}x{d}")
        if not np.all(np.isfinite(a)):
            raise DataError("matrix contains NaN or Inf")
        if self.normalized:
            norms = np.linalg.norm(a.astype(np.float64), axis=1)
            bad = np.abs(norms - 1.0) > NORM_TOL
            if bad.any():
                i = int(np.argmax(bad))
                raise DataError(
                    f"normalized flag set but row {i} has norm {norms[i]:.6g}"
                )
        object.__setattr__(self, "data", _freeze(np.ascontiguousarray(a)))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def as_f64(self) -> np.ndarray:
        """Float64 view for numeric work (copy; the original stays frozen)."""
        return self.data.astype(np.float64)

    def row(self, i: int) -> np.ndarray:
        return self.data[i]


@dataclass(frozen=True)
class NounLexicon:
    """Ordered noun strings paired 1:1 with rows of an embedding matrix."""

    nouns: tuple[str, ...]
    embeddings: EmbeddingMatrix

    def __post_init__(self):
        nouns = tuple(self.nouns)
        if len(nouns) != self.embeddings.n:
            raise SizeMismatch(
                f"{len(nouns)} nouns but {self.embeddings.n} embedding rows"
            )
        if any(not isinstance(w, str) or not w for w in nouns):
            raise DataError("nouns must be non-empty strings")
        if len(set(nouns)) != len(nouns):
            raise DataError("duplicate noun strings in lexicon")
        object.__setattr__(self, "nouns", nouns)

    def __len__(self) -> int:
        return len(self.nouns)

    def subset(self, indices) -> "NounLexicon":
        """New lexicon restricted to `indices`, preserving their order."""
        idx = np.asarray(indices, dtype=np.int64)
        return NounLexicon(
            nouns=tuple(self.nouns[i] for i in idx),
            embeddings=EmbeddingMatrix(
                self.embeddings.data[idx].copy(),
                normalized=self.embeddings.normalized,
            ),
        )


@dataclass(frozen=True)
class LabelVector:
    """Ground-truth or predicted class indices for n samples."""

    labels: np.ndarray
    num_classes: int = field(default=0)

    def __post_init__(self):
        a = np.asarray(self.labels, dtype=np.int64)
        if a.ndim != 1 or a.size < 1:
            raise DataError("labels must be a non-empty 1-D integer array")
        if a.min() < 0:
            raise DataError("labels must be non-negative")
        k = self.num_classes if self.num_classes > 0 else int(a.max()) + 1
        if a.max() >= k:
            raise DataError(f"label {a.max()} out of range for {k} classes")
        object.__setattr__(self, "labels", _freeze(a))
        object.__setattr__(self, "num_classes", k)

    @property
    def n(self) -> int:
        return self.labels.shape[0]


def read_embeddings(path) -> EmbeddingMatrix:
    """Load an EMB1 file, verifying invariants without re-normalizing."""
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, n, d, flag = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if n < 1 or d < 1:
        raise FormatError(f"{path}: invalid shape {n}x{d}")
    body = raw[_HEADER.size:]
    expected = n * d * 4
    if len(body) != expected:
        raise FormatError(
            f"{path}: expected {expected} payload bytes, found {len(body)}"
        )
    a = np.frombuffer(body, dtype="<f4").reshape(n, d)
    if not np.all(np.isfinite(a)):
        raise DataError(f"{path}: payload contains NaN or Inf")
    return EmbeddingMatrix(a.copy(), normalized=bool(flag))


def write_embeddings(m: EmbeddingMatrix, path) -> None:
    """Write an EMB1 file; read_embeddings(path) round-trips bit-exactly."""
    header = _HEADER.pack(MAGIC, m.n, m.d, 1 if m.normalized else 0)
    payload = np.ascontiguousarray(m.data, dtype="<f4").tobytes()
    try:
        with open(path, "wb") as f:
            f.write(header)
            f.write(payload)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def normalize_rows(m: EmbeddingMatrix) -> EmbeddingMatrix:
    """Scale every row to unit L2 norm (direction preserved)."""
    a = m.as_f64()
    norms = np.linalg.norm(a, axis=1)
    zero = norms == 0.0
    if zero.any():
        raise DegenerateRowError(int(np.argmax(zero)))
    return EmbeddingMatrix((a / norms[:, None]).astype(np.float32), normalized=True)


def write_lexicon(lex: NounLexicon, emb_path, nouns_path) -> None:
    """Write the lexicon's EMB1 file plus its JSON-lines noun sidecar."""
    write_embeddings(lex.embeddings, emb_path)
    try:
        with open(nouns_path, "w", encoding="utf-8") as f:
            for w in lex.nouns:
                f.write(json.dumps(w, ensure_ascii=False) + "\n")
    except OSError as e:
        raise IoError(f"cannot write {nouns_path}: {e}") from e


def read_lexicon(emb_path, nouns_path) -> NounLexicon:
    emb = read_embeddings(emb_path)
    try:
        with open(nouns_path, "r", encoding="utf-8") as f:
            lines = [ln for ln in f.read().splitlines() if ln.strip()]
    except OSError as e:
        raise IoError(f"cannot read {nouns_path}: {e}") from e
    try:
        nouns = [json.loads(ln) for ln in lines]
    except json.JSONDecodeError as e:
        raise FormatError(f"{nouns_path}: invalid JSON line: {e}") from e
    if any(not isinstance(w, str) for w in nouns):
        raise FormatError(f"{nouns_path}: every line must be a JSON string")
    return NounLexicon(nouns=tuple(nouns), embeddings=emb)


def write_labels(v: LabelVector, path) -> None:
    try:
        with open(path, "w", encoding="utf-8") as f:
            json.dump([int(x) for x in v.labels], f)
            f.write("\n")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def read_labels(path, num_classes: int = 0) -> LabelVector:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON: {e}") from e
    if not isinstance(data, list) or not all(isinstance(x, int) for x in data):
        raise FormatError(f"{path}: expected a JSON array of integers")
    return LabelVector(np.asarray(data, dtype=np.int64), num_classes=num_classes)
