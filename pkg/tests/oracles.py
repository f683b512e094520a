"""Independent brute-force oracles used to validate the library implementations.

Everything here is deliberately written as plain loops over definitions, kept
free of the library's own code paths.
"""

from __future__ import annotations

import math

import numpy as np


def brute_ranks(values) -> list[float]:
    """Fractional ranks by sorting (value, index) pairs and averaging ties."""
    values = [float(v) for v in values]
    indexed = sorted((v, i) for i, v in enumerate(values))
    out = [0.0] * len(values)
    i = 0
    while i < len(indexed):
        j = i
        while j + 1 < len(indexed) and indexed[j + 1][0] == indexed[i][0]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            out[indexed[k][1]] = avg
        i = j + 1
    return out


def brute_pearson(xs, ys) -> float:
    xs = [float(v) for v in xs]
    ys = [float(v) for v in ys]
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    cov = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    sx = math.sqrt(sum((x - mx) ** 2 for x in xs))
    sy = math.sqrt(sum((y - my) ** 2 for y in ys))
    return cov / (sx * sy)


def brute_spearman(xs, ys) -> float:
    return brute_pearson(brute_ranks(xs), brute_ranks(ys))


def brute_kendall_tau_b(xs, ys) -> float:
    """Tau-b by explicit concordant/discordant pair counting."""
    n = len(xs)
    concordant = discordant = ties_x = ties_y = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = xs[i] - xs[j]
            dy = ys[i] - ys[j]
            if dx == 0 and dy == 0:
                ties_x += 1
                ties_y += 1
            elif dx == 0:
                ties_x += 1
            elif dy == 0:
                ties_y += 1
            elif (dx > 0) == (dy > 0):
                concordant += 1
            else:
                discordant += 1
    n0 = n * (n - 1) // 2
    denom = math.sqrt(n0 - ties_x) * math.sqrt(n0 - ties_y)
    return (concordant - discordant) / denom


def brute_fps(points: np.ndarray, n: int, start: int) -> list[int]:
    """O(n * |points|) farthest point sampling, recomputed from scratch each step."""
    points = np.asarray(points, dtype=np.float64)
    selected = [start]
    while len(selected) < n:
        best_idx = -1
        best_d2 = -1.0
        for i in range(len(points)):
            if i in selected:
                continue
            d2 = min(float(np.sum((points[i] - points[c]) ** 2)) for c in selected)
            if d2 > best_d2:
                best_d2 = d2
                best_idx = i
        selected.append(best_idx)
    return selected


def brute_knn(points: np.ndarray, center: int, k: int) -> list[int]:
    """k nearest by full sort on (squared distance, index), center first."""
    points = np.asarray(points, dtype=np.float64)
    entries = []
    for i in range(len(points)):
        if i == center:
            continue
        d2 = float(np.sum((points[i] - points[center]) ** 2))
        entries.append((d2, i))
    entries.sort()
    return [center] + [i for _, i in entries[:k - 1]]


def central_difference(fn, x: float, h: float = 1e-4) -> float:
    return (fn(x + h) - fn(x - h)) / (2.0 * h)
