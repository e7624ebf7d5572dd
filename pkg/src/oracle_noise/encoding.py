"""Token sequences, pluggable text encoders, and per-token weighting.

A token's weight is derived from how much the sentence embedding collapses
when that token is masked out: mask token j with PAD (keeping sequence
length so later positional codes are untouched), re-encode, and score the
averaged cosine distance across encoders. An affine min-max map then takes
the raw scores into [w_min, w_max] on valid positions, zero elsewhere.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .errors import EmptyValidSet, InvalidBounds, InvalidIndex

# cosine against a ~zero vector is defined as 0 (impact 1) instead of NaN
_COSINE_NORM_FLOOR = 1e-15

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
_NUM_RESERVED = 3


@dataclass(frozen=True)
class TokenSequence:
    """Pre-tokenized prompt: integer ids plus a special-token mask.

    Valid positions (the set the optimizer routes energy to) are those
    with ``special_mask[j]`` false.
    """

    ids: tuple[int, ...]
    special_mask: tuple[bool, ...]
    pad_id: int = PAD_ID

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))
        object.__setattr__(self, "special_mask", tuple(bool(m) for m in self.special_mask))
        if len(self.ids) != len(self.special_mask):
            raise ValueError(
                f"ids length {len(self.ids)} != special_mask length {len(self.special_mask)}"
            )
        if len(self.ids) == 0:
            raise ValueError("empty token sequence")
        if any(i < 0 for i in self.ids):
            raise ValueError("token ids must be non-negative")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def valid_indices(self) -> tuple[int, ...]:
        return tuple(j for j, special in enumerate(self.special_mask) if not special)

    def all_pad(self) -> "TokenSequence":
        """The null prompt: same length, every position PAD and special."""
        n = len(self.ids)
        return TokenSequence((self.pad_id,) * n, (True,) * n, self.pad_id)

    def to_dict(self) -> dict:
        return {"ids": list(self.ids), "special_mask": list(self.special_mask), "pad_id": self.pad_id}

    @classmethod
    def from_dict(cls, data: dict) -> "TokenSequence":
        return cls(tuple(data["ids"]), tuple(data["special_mask"]), int(data["pad_id"]))


@dataclass(frozen=True)
class SentenceEmbedding:
    values: np.ndarray
    encoder_id: str


@dataclass(frozen=True)
class TokenEmbeddingMatrix:
    """n x d_text matrix; row j embeds token j (identity + positional code)."""

    rows: np.ndarray

    def __post_init__(self):
        rows = np.ascontiguousarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise ValueError(f"expected 2-D rows, got shape {rows.shape}")
        object.__setattr__(self, "rows", rows)

    @property
    def num_tokens(self) -> int:
        return self.rows.shape[0]


@dataclass(frozen=True)
class ImpactVector:
    """Per-token collapse scores; zero at special positions.

    Carries the valid mask explicitly: a valid token may legitimately
    score 0.0 (masking it changed nothing), which zeros alone cannot
    distinguish from a special position.
    """

    scores: np.ndarray
    valid_mask: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "scores", np.asarray(self.scores, dtype=np.float64))
        object.__setattr__(self, "valid_mask", np.asarray(self.valid_mask, dtype=bool))
        if self.scores.shape != self.valid_mask.shape:
            raise ValueError("scores and valid_mask must have equal length")


@dataclass(frozen=True)
class WeightVector:
    """Per-token optimization weights, bounded on valid positions."""

    weights: np.ndarray
    bounds: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))
        object.__setattr__(self, "bounds", (float(self.bounds[0]), float(self.bounds[1])))

    def to_json(self) -> str:
        return json.dumps([float(w) for w in self.weights])


class EncoderInterface(Protocol):
    """What the weighting pipeline needs from a text encoder."""

    encoder_id: str

    def sentence_embedding(self, tokens: TokenSequence) -> np.ndarray: ...

    def token_embeddings(self, tokens: TokenSequence) -> np.ndarray: ...


def _pooled(rows: np.ndarray, ids: Sequence[int], pad_id: int) -> np.ndarray:
    """Mean over non-PAD rows, renormalized to unit length.

    Keyed on token id, not the special mask, so masking a token whose id
    already equals PAD changes nothing. An all-PAD sequence pools over
    every row instead, giving a well-defined null-prompt embedding.
    """
    keep = np.array([i != pad_id for i in ids], dtype=bool)
    pool = rows[keep] if keep.any() else rows
    mean = pool.mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm < _COSINE_NORM_FLOOR:
        return mean
    return mean / norm


class ToyEncoder:
    """Deterministic stand-in for a pre-trained text encoder.

    Token identity maps to a frozen random unit vector (one PCG64 stream
    per seed builds the whole vocabulary table); a frozen random
    positional code of amplitude 0.1 is added per position. The sentence
    embedding is the renormalized mean of the non-PAD rows. Distinct
    seeds give distinct encoders, enabling multi-encoder averaging.
    """

    _POS_AMPLITUDE = 0.1

    def __init__(self, seed: int, d_text: int, vocab_size: int):
        if d_text < 4:
            raise ValueError(f"d_text must be >= 4, got {d_text}")
        if vocab_size < 2:
            raise ValueError(f"vocab_size must be >= 2, got {vocab_size}")
        self.seed = int(seed)
        self.d_text = int(d_text)
        self.vocab_size = int(vocab_size)
        self.encoder_id = f"toy-{self.seed}"
        rng = np.random.Generator(np.random.PCG64(self.seed))
        table = rng.standard_normal((vocab_size, d_text))
        self._table = table / np.linalg.norm(table, axis=1, keepdims=True)
        # separate stream so positional codes have a stable prefix for any n
        self._pos_seed = rng.integers(0, 2**63 - 1)

    def _positional_codes(self, n: int) -> np.ndarray:
        rng = np.random.Generator(np.random.PCG64(int(self._pos_seed)))
        return self._POS_AMPLITUDE * rng.standard_normal((n, self.d_text))

    def token_embeddings(self, tokens: TokenSequence) -> np.ndarray:
        ids = np.array(tokens.ids)
        if (ids >= self.vocab_size).any():
            raise ValueError(f"token id >= vocab_size {self.vocab_size}")
        return self._table[ids] + self._positional_codes(len(tokens))

    def sentence_embedding(self, tokens: TokenSequence) -> np.ndarray:
        return _pooled(self.token_embeddings(tokens), tokens.ids, tokens.pad_id)


class TableEncoder:
    """Encoder with explicit, hand-chosen embedding rows per token id.

    No positional codes; pooling identical to :class:`ToyEncoder`. Meant
    for fixtures where the impact arithmetic is checked by hand.
    """

    def __init__(self, table: dict[int, Sequence[float]], encoder_id: str = "table"):
        self._table = {int(k): np.asarray(v, dtype=np.float64) for k, v in table.items()}
        self.encoder_id = encoder_id

    def token_embeddings(self, tokens: TokenSequence) -> np.ndarray:
        return np.stack([self._table[i] for i in tokens.ids])

    def sentence_embedding(self, tokens: TokenSequence) -> np.ndarray:
        return _pooled(self.token_embeddings(tokens), tokens.ids, tokens.pad_id)


def toy_encoder(seed: int, d_text: int, vocab_size: int) -> ToyEncoder:
    return ToyEncoder(seed, d_text, vocab_size)


def encode_sentence(encoder: EncoderInterface, tokens: TokenSequence) -> SentenceEmbedding:
    """Global prompt embedding from one encoder (also defined for all-PAD)."""
    return SentenceEmbedding(encoder.sentence_embedding(tokens), encoder.encoder_id)


def encode_tokens(encoder: EncoderInterface, tokens: TokenSequence) -> TokenEmbeddingMatrix:
    """Per-token embedding rows feeding the denoiser's key projection."""
    return TokenEmbeddingMatrix(encoder.token_embeddings(tokens))


def lesion(tokens: TokenSequence, j: int) -> TokenSequence:
    """Mask token j with PAD, keeping length (and later positions) intact."""
    if j < 0 or j >= len(tokens) or tokens.special_mask[j]:
        raise InvalidIndex(f"position {j} is not a valid (non-special) token")
    ids = list(tokens.ids)
    mask = list(tokens.special_mask)
    ids[j] = tokens.pad_id
    mask[j] = True
    return TokenSequence(tuple(ids), tuple(mask), tokens.pad_id)


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na < _COSINE_NORM_FLOOR or nb < _COSINE_NORM_FLOOR:
        return 0.0
    return float(np.dot(a, b)) / (na * nb)


def impact_scores(tokens: TokenSequence, encoders: Sequence[EncoderInterface]) -> ImpactVector:
    """Averaged cosine collapse of the sentence embedding per masked token.

    score[j] = mean_k (1 - cos(E_k, E_k with token j masked)) over the
    valid positions, 0 at special positions. Scores live in [0, 2].
    """
    if not encoders:
        raise ValueError("need at least one encoder")
    valid = tokens.valid_indices
    if not valid:
        raise EmptyValidSet("prompt has no valid tokens to score")
    base = [encoder.sentence_embedding(tokens) for encoder in encoders]
    n = len(tokens)
    scores = np.zeros(n)
    for j in valid:
        masked = lesion(tokens, j)
        total = 0.0
        for k, encoder in enumerate(encoders):
            total += 1.0 - _cosine(base[k], encoder.sentence_embedding(masked))
        scores[j] = total / len(encoders)
    valid_mask = np.array([not m for m in tokens.special_mask])
    return ImpactVector(scores, valid_mask)


def affine_normalize(impact: ImpactVector, w_min: float, w_max: float) -> WeightVector:
    """Min-max rescale of valid scores into [w_min, w_max], specials to 0.

    Degenerate case: if every valid score ties, all valid weights become
    the midpoint (w_min + w_max)/2.
    """
    if w_min >= w_max:
        raise InvalidBounds(f"w_min {w_min} >= w_max {w_max}")
    valid = impact.valid_mask
    if not valid.any():
        raise EmptyValidSet("no valid positions to normalize over")
    scores = impact.scores[valid]
    lo, hi = float(scores.min()), float(scores.max())
    weights = np.zeros(impact.scores.shape)
    if hi == lo:
        weights[valid] = 0.5 * (w_min + w_max)
    else:
        mapped = w_min + (scores - lo) * ((w_max - w_min) / (hi - lo))
        weights[valid] = np.clip(mapped, w_min, w_max)
    return WeightVector(weights, (w_min, w_max))


def uniform_weights(tokens: TokenSequence, w_min: float, w_max: float) -> WeightVector:
    """Equal (midpoint) weight on every valid token -- the no-routing baseline.

    Matches what :func:`affine_normalize` yields when all scores tie.
    """
    if w_min >= w_max:
        raise InvalidBounds(f"w_min {w_min} >= w_max {w_max}")
    valid = tokens.valid_indices
    if not valid:
        raise EmptyValidSet("prompt has no valid tokens")
    weights = np.zeros(len(tokens))
    weights[list(valid)] = 0.5 * (w_min + w_max)
    return WeightVector(weights, (w_min, w_max))


def tokenize_whitespace(text: str, vocab_size: int, add_specials: bool = True) -> TokenSequence:
    """Convenience mapping of whitespace-separated words to stable ids.

    Word ids are blake2b hashes folded into [3, vocab_size); ids 0/1/2 are
    reserved for PAD/BOS/EOS. Collisions are possible and acceptable --
    prompts normally arrive pre-tokenized.
    """
    if vocab_size <= _NUM_RESERVED:
        raise ValueError(f"vocab_size must exceed {_NUM_RESERVED}")
    span = vocab_size - _NUM_RESERVED
    ids = []
    for word in text.split():
        digest = hashlib.blake2b(word.lower().encode("utf-8"), digest_size=8).digest()
        ids.append(_NUM_RESERVED + int.from_bytes(digest, "little") % span)
    if not ids:
        raise ValueError("prompt has no words")
    if add_specials:
        all_ids = (BOS_ID, *ids, EOS_ID)
        mask = (True, *(False,) * len(ids), True)
    else:
        all_ids = tuple(ids)
        mask = (False,) * len(ids)
    return TokenSequence(all_ids, mask, PAD_ID)
