"""Corpus-level BLEU and distinct-n over tokenized stories."""

from __future__ import annotations

import math
import warnings
from collections import Counter


def _ngrams(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu_n(candidates, references, n: int) -> float:
    """Corpus BLEU with brevity penalty and uniform weights over 1..n grams.

    candidates and references are aligned lists of token lists, one
    reference per candidate.
    """
    if not 1 <= n <= 4:
        raise ValueError(f"bleu_n: order must be in 1..4, got {n}")
    candidates = [list(c) for c in candidates]
    references = [list(r) for r in references]
    if not candidates:
        raise ValueError("bleu_n: empty corpus")
    if len(candidates) != len(references):
        raise ValueError(
            f"bleu_n: {len(candidates)} candidates vs {len(references)} references"
        )
    log_precision_sum = 0.0
    for k in range(1, n + 1):
        matched, total = 0, 0
        for cand, ref in zip(candidates, references):
            cand_grams = _ngrams(cand, k)
            ref_grams = _ngrams(ref, k)
            matched += sum(min(count, ref_grams[g]) for g, count in cand_grams.items())
            total += sum(cand_grams.values())
        if total == 0 or matched == 0:
            return 0.0
        log_precision_sum += math.log(matched / total)
    cand_len = sum(len(c) for c in candidates)
    ref_len = sum(len(r) for r in references)
    brevity = 1.0 if cand_len >= ref_len else math.exp(1.0 - ref_len / max(cand_len, 1))
    return brevity * math.exp(log_precision_sum / n)


def distinct_n(stories, n: int) -> float:
    """Unique n-grams divided by total n-grams across the whole corpus."""
    if n < 1:
        raise ValueError(f"distinct_n: order must be >= 1, got {n}")
    stories = [list(s) for s in stories]
    if not stories:
        warnings.warn("distinct_n over an empty story list is defined as 0", stacklevel=2)
        return 0.0
    seen = set()
    total = 0
    for story in stories:
        for i in range(len(story) - n + 1):
            seen.add(tuple(story[i : i + n]))
            total += 1
    return len(seen) / total if total else 0.0
