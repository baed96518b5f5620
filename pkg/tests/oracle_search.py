"""Brute-force exact top-k oracle: O(n*d) scalar scan with the pinned tie-break."""

import math


def cosine(a, b):
    dot = 0.0
    norm_a = 0.0
    norm_b = 0.0
    for x, y in zip(a, b):
        x = float(x)
        y = float(y)
        dot += x * y
        norm_a += x * x
        norm_b += y * y
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return dot / (math.sqrt(norm_a) * math.sqrt(norm_b))


def brute_force_top_k(ids, vectors, query, k):
    """Score every vector, sort by (score desc, id asc), take k."""
    scored = [(cosine(vec, query), chunk_id) for chunk_id, vec in zip(ids, vectors)]
    scored.sort(key=lambda pair: (-pair[0], pair[1]))
    return scored[:k]
