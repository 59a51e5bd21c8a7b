"""Textual training data: prompt-completion pairs, corpus, vocab, batching.

Prompts are formatted MFCC rows behind the literal prefix "prompt:";
completions are serialized RGB-X tuple text behind "completion:".  Pairs are
concatenated into one corpus which is split 90/10 by character position and
sampled as 256-character sliding-window contexts for next-character training.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .grid import LaunchpadFrame, serialize_frame

PROMPT_PREFIX = "prompt:"
COMPLETION_PREFIX = "completion:"
MFCC_VALUES_PER_PROMPT = 128
PROMPT_VALUE_LIMIT = 999.0
DEFAULT_CONTEXT = 256
TRAIN_FRACTION = 0.9


class CorpusError(ValueError):
    """Invalid corpus construction or sampling request."""


def _round_half_away(x: np.ndarray, decimals: int) -> np.ndarray:
    scale = 10.0 ** decimals
    return np.copysign(np.floor(np.abs(x) * scale + 0.5), x) / scale


def format_mfcc_prompt(row, precision: int = 0) -> str:
    """"prompt:" + 128 values joined by ", ", newline-terminated.

    Values are rounded half-away-from-zero to ``precision`` decimals
    (default: integers) and clamped to [-999, 999] to keep prompts short.
    """
    row = np.asarray(row, dtype=np.float64)
    if row.shape != (MFCC_VALUES_PER_PROMPT,):
        raise CorpusError(f"prompt row must have {MFCC_VALUES_PER_PROMPT} values, got {row.shape}")
    if not (0 <= precision <= 2):
        raise CorpusError(f"precision must be 0..2, got {precision}")
    vals = _round_half_away(row, precision) + 0.0  # drop negative zero
    vals = np.clip(vals, -PROMPT_VALUE_LIMIT, PROMPT_VALUE_LIMIT)
    if precision == 0:
        body = ", ".join(str(int(v)) for v in vals)
    else:
        body = ", ".join(f"{v:.{precision}f}" for v in vals)
    return f"{PROMPT_PREFIX}{body}\n"


@dataclass(frozen=True)
class PromptCompletionPair:
    """One aligned training example; ``text`` is what enters the corpus."""

    prompt_text: str
    completion_text: str

    def __post_init__(self):
        if not self.prompt_text.startswith(PROMPT_PREFIX):
            raise CorpusError("prompt_text must start with 'prompt:'")
        if not self.completion_text.startswith(COMPLETION_PREFIX):
            raise CorpusError("completion_text must start with 'completion:'")

    @property
    def text(self) -> str:
        return self.prompt_text + self.completion_text


def build_pair(row, frame: LaunchpadFrame, mode: str = "sparse",
               precision: int = 0) -> PromptCompletionPair:
    """Pair an MFCC row with its frame's serialized tuples."""
    prompt = format_mfcc_prompt(row, precision=precision)
    completion = f"{COMPLETION_PREFIX}{serialize_frame(frame, mode)}\n"
    return PromptCompletionPair(prompt, completion)


class CharVocab:
    """Bijective character <-> contiguous-id map in fixed character order."""

    def __init__(self, chars):
        chars = list(chars)
        if len(set(chars)) != len(chars):
            raise CorpusError("vocabulary characters must be distinct")
        if not chars:
            raise CorpusError("vocabulary must be non-empty")
        self.chars = chars
        self._stoi = {c: i for i, c in enumerate(chars)}

    @classmethod
    def from_text(cls, text: str) -> "CharVocab":
        return cls(sorted(set(text)))

    def __len__(self):
        return len(self.chars)

    def __contains__(self, ch):
        return ch in self._stoi

    def encode(self, text: str) -> np.ndarray:
        try:
            return np.fromiter((self._stoi[c] for c in text), dtype=np.int32, count=len(text))
        except KeyError as exc:
            raise CorpusError(f"character {exc.args[0]!r} not in vocabulary") from None

    def encode_filtered(self, text: str) -> tuple[np.ndarray, int]:
        """Encode, silently dropping unknown characters; returns (ids, dropped)."""
        ids = [self._stoi[c] for c in text if c in self._stoi]
        return np.asarray(ids, dtype=np.int32), len(text) - len(ids)

    def decode(self, ids) -> str:
        return "".join(self.chars[int(i)] for i in np.asarray(ids).ravel())

    def save(self, path) -> None:
        """JSON list of single characters, index = token id."""
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.chars, fh, ensure_ascii=True)

    @classmethod
    def load(cls, path) -> "CharVocab":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(json.load(fh))


@dataclass
class Corpus:
    """Concatenated pair text with its vocabulary and 90/10 split point."""

    text: str
    vocab: CharVocab
    split_index: int
    tokens: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not (0 < self.split_index < len(self.text)):
            raise CorpusError("both sides of the train/val split must be non-empty")
        self.tokens = self.vocab.encode(self.text)

    def split_tokens(self, split: str) -> np.ndarray:
        if split == "train":
            return self.tokens[: self.split_index]
        if split == "val":
            return self.tokens[self.split_index:]
        raise CorpusError(f"unknown split {split!r}")


def build_corpus(pairs) -> Corpus:
    """Concatenate pairs in order; vocab = sorted distinct characters."""
    pairs = list(pairs)
    if not pairs:
        raise CorpusError("need at least one pair")
    text = "".join(p.text for p in pairs)
    vocab = CharVocab.from_text(text)
    split_index = int(TRAIN_FRACTION * len(text))
    return Corpus(text=text, vocab=vocab, split_index=split_index)


@dataclass
class ContextBatch:
    """Teacher-forcing batch: targets are inputs shifted left by one."""

    inputs: np.ndarray   # (B, context) int32
    targets: np.ndarray  # (B, context) int32


def sample_batch(corpus: Corpus, split: str, batch_size: int, rng_seed,
                 context_len: int = DEFAULT_CONTEXT) -> ContextBatch:
    """Uniformly random sliding-window contexts from one split.

    Deterministic for a fixed ``rng_seed``; offsets never cross the split
    boundary (max start = split length - context - 1).
    """
    tokens = corpus.split_tokens(split)
    max_start = tokens.size - context_len - 1
    if max_start < 0:
        raise CorpusError(
            f"{split} split has {tokens.size} tokens, need at least {context_len + 1}"
        )
    rng = np.random.default_rng(rng_seed)
    starts = rng.integers(0, max_start + 1, size=batch_size)
    inputs = np.stack([tokens[s:s + context_len] for s in starts])
    targets = np.stack([tokens[s + 1:s + context_len + 1] for s in starts])
    return ContextBatch(inputs=inputs.astype(np.int32), targets=targets.astype(np.int32))


def save_corpus(dir_path, corpus: Corpus) -> None:
    """corpus.txt (UTF-8 text), vocab.json, corpus_meta.json under a directory."""
    import os

    os.makedirs(dir_path, exist_ok=True)
    with open(os.path.join(dir_path, "corpus.txt"), "w", encoding="utf-8", newline="") as fh:
        fh.write(corpus.text)
    corpus.vocab.save(os.path.join(dir_path, "vocab.json"))
    meta = {"length": len(corpus.text), "split_index": corpus.split_index}
    with open(os.path.join(dir_path, "corpus_meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_corpus(dir_path) -> Corpus:
    import os

    with open(os.path.join(dir_path, "corpus.txt"), "r", encoding="utf-8", newline="") as fh:
        text = fh.read()
    vocab = CharVocab.load(os.path.join(dir_path, "vocab.json"))
    with open(os.path.join(dir_path, "corpus_meta.json"), "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    if meta.get("length") != len(text):
        raise CorpusError(f"{dir_path}: corpus.txt length does not match metadata")
    return Corpus(text=text, vocab=vocab, split_index=int(meta["split_index"]))
