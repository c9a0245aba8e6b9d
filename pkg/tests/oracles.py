"""Independent reference implementations used by the tests.

Each one is written the slow, obvious way so that it shares no code path
with the package.
"""

import itertools
import math

import numpy as np


def clip_oracle(z, t):
    """Symmetric InfoNCE by a double loop over S = Z T^T."""
    z, t = np.asarray(z, dtype=np.float64), np.asarray(t, dtype=np.float64)
    n = z.shape[0]
    s = [[sum(z[i, k] * t[j, k] for k in range(z.shape[1])) for j in range(n)] for i in range(n)]
    total = 0.0
    for i in range(n):
        row = math.log(sum(math.exp(s[i][j] - s[i][i]) for j in range(n)))
        col = math.log(sum(math.exp(s[j][i] - s[i][i]) for j in range(n)))
        total += row + col
    return total / (2 * n)


def bce_oracle(logits, labels, policy):
    vals = []
    for x, y in zip(np.ravel(logits), np.ravel(labels)):
        if y == -1:
            if policy == "ignore":
                continue
            y = 0
        p = 1.0 / (1.0 + math.exp(-x))
        vals.append(-(y * math.log(p) + (1 - y) * math.log(1 - p)))
    return sum(vals) / len(vals)


def auc_oracle(scores, labels):
    """Fraction of (positive, negative) pairs ranked correctly, ties count 1/2."""
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    wins = 0.0
    for p, q in itertools.product(pos, neg):
        wins += 1.0 if p > q else 0.5 if p == q else 0.0
    return wins / (len(pos) * len(neg))


def recall_oracle(sim, k):
    """Full stable sort of each row; hit if the true column is in the first k."""
    sim = np.asarray(sim)
    hits = 0
    for i, row in enumerate(sim):
        order = sorted(range(len(row)), key=lambda j: (-row[j], j))
        hits += i in order[:k]
    return hits / sim.shape[0]


def kappa_oracle(a, b):
    """Cohen's kappa from raw rater lists."""
    cats = sorted(set(a) | set(b))
    n = len(a)
    po = sum(x == y for x, y in zip(a, b)) / n
    pe = sum((a.count(c) / n) * (b.count(c) / n) for c in cats)
    if pe == 1.0:
        return 1.0 if po == 1.0 else 0.0
    return (po - pe) / (1 - pe)


def otsu_oracle(values, edges):
    """Try every bin edge as threshold and keep the best between-class variance."""
    v = np.asarray(values, dtype=np.float64).ravel()
    best, best_t = -1.0, None
    for t in edges[1:-1]:
        lo, hi = v[v < t], v[v >= t]
        if lo.size == 0 or hi.size == 0:
            continue
        score = lo.size * hi.size * (lo.mean() - hi.mean()) ** 2
        if score > best:
            best, best_t = score, t
    return best_t


def central_difference(f, x, eps=1e-6):
    """Numerical gradient of scalar ``f`` at float64 array ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + eps
        up = f(x)
        x[idx] = old - eps
        down = f(x)
        x[idx] = old
        g[idx] = (up - down) / (2 * eps)
    return g


def relative_error(a, b):
    a, b = np.ravel(a), np.ravel(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12))
