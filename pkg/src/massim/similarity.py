"""Lightweight deterministic text similarity shared by the defense and metrics."""

from __future__ import annotations

import math
import re
from collections import Counter

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def cosine_similarity(a: str, b: str) -> float:
    """Cosine similarity of term-frequency vectors of the two texts.

    Returns a value in [0, 1]. Two empty or token-free texts compare as 0.
    """
    va = Counter(tokenize(a))
    vb = Counter(tokenize(b))
    if not va or not vb:
        return 0.0
    dot = sum(va[t] * vb[t] for t in va.keys() & vb.keys())
    na = math.sqrt(sum(c * c for c in va.values()))
    nb = math.sqrt(sum(c * c for c in vb.values()))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return min(1.0, dot / (na * nb))
