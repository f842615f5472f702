"""Layout tokens, bigram layout perplexity and diversity statistics."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass

import numpy as np

from .layout import ElementType, canonical_reading_order

N_TYPES = len(ElementType)


@dataclass
class TokenizerConfig:
    grid: int = 8

    def __post_init__(self):
        if int(self.grid) < 1:
            raise ValueError("tokenizer.grid must be >= 1")

    @property
    def eod(self):
        return N_TYPES * self.grid * self.grid

    @property
    def vocab_size(self):
        return self.eod + 1

    def to_dict(self):
        return asdict(self)


def tokenize_layout(doc, cfg=None):
    """Type x grid-cell tokens in reading order, then the end-of-document token."""
    cfg = cfg or TokenizerConfig()
    G = cfg.grid
    tokens = []
    for i in canonical_reading_order(doc):
        el = doc.elements[i]
        cx, cy = el.center
        col = min(G - 1, int(math.floor(cx * G)))
        row = min(G - 1, int(math.floor(cy * G)))
        tokens.append(int(el.element_type) * G * G + row * G + col)
    tokens.append(cfg.eod)
    return tokens


@dataclass
class BigramModel:
    vocab_size: int
    counts: np.ndarray
    alpha: float = 1.0

    @property
    def start(self):
        return self.vocab_size - 1

    def prob(self, prev, tok):
        row = self.counts[prev]
        denom = row.sum() + self.alpha * self.vocab_size
        if denom == 0:
            return 0.0
        return (row[tok] + self.alpha) / denom

    def conditional(self, prev):
        row = self.counts[prev].astype(np.float64)
        return (row + self.alpha) / (row.sum() + self.alpha * self.vocab_size)


def fit_bigram(sequences, alpha=1.0, vocab_size=None):
    """Count consecutive pairs; each sequence starts from the EOD state.

    Without ``vocab_size`` the vocabulary is inferred from the largest
    token, which must then be the EOD token.
    """
    sequences = [list(s) for s in sequences]
    if not sequences:
        raise ValueError("cannot fit a bigram model on an empty corpus")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if vocab_size is None:
        vocab_size = max(max(s) for s in sequences if s) + 1
    start = vocab_size - 1
    counts = np.zeros((vocab_size, vocab_size), dtype=np.int64)
    for seq in sequences:
        prev = start
        for tok in seq:
            counts[prev, tok] += 1
            prev = tok
    return BigramModel(vocab_size, counts, float(alpha))


@dataclass
class PerplexityReport:
    perplexity: float
    tokens: int
    fit_size: int
    eval_size: int
    grid: int
    alpha: float

    def to_dict(self):
        return asdict(self)


def sequence_log_likelihood(model, seq):
    total = 0.0
    prev = model.start
    for tok in seq:
        p = model.prob(prev, tok)
        if p <= 0.0:
            raise ValueError("infinite perplexity; use smoothing")
        total += math.log(p)
        prev = tok
    return total


def perplexity(model, eval_sequences, fit_size=0, grid=0):
    """exp of the mean per-token negative log-likelihood of ``eval_sequences``."""
    eval_sequences = [list(s) for s in eval_sequences]
    if not eval_sequences:
        raise ValueError("evaluation set is empty")
    loglik = math.fsum(sequence_log_likelihood(model, s) for s in eval_sequences)
    n_tokens = sum(len(s) for s in eval_sequences)
    return PerplexityReport(
        perplexity=math.exp(-loglik / n_tokens), tokens=n_tokens, fit_size=fit_size,
        eval_size=len(eval_sequences), grid=grid, alpha=model.alpha,
    )


def layout_perplexity(fit_docs, eval_docs, grid=8, alpha=1.0):
    """Perplexity of ``eval_docs`` under a bigram fitted on ``fit_docs``.

    Fit on generated layouts and evaluate on real held-out ones: lower
    values mean the generated set covers the real variability.
    """
    cfg = TokenizerConfig(grid)
    model = fit_bigram([tokenize_layout(d, cfg) for d in fit_docs], alpha, cfg.vocab_size)
    return perplexity(model, [tokenize_layout(d, cfg) for d in eval_docs],
                      fit_size=len(fit_docs), grid=grid)


def diversity_stats(layouts, cfg=None):
    if not layouts:
        raise ValueError("diversity_stats needs at least one layout")
    cfg = cfg or TokenizerConfig()
    type_hist = Counter()
    count_hist = Counter()
    multisets = set()
    for doc in layouts:
        type_hist.update(el.element_type.name for el in doc.elements)
        count_hist[len(doc.elements)] += 1
        multisets.add(tuple(sorted(tokenize_layout(doc, cfg))))
    return {
        "layouts": len(layouts),
        "elements": int(sum(type_hist.values())),
        "type_histogram": {t.name: type_hist.get(t.name, 0) for t in ElementType},
        "count_histogram": {str(k): count_hist[k] for k in sorted(count_hist)},
        "distinct_token_multisets": len(multisets),
    }
