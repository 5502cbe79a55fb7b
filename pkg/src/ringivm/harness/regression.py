"""Batch gradient descent for linear regression over a maintained cofactor payload."""

from __future__ import annotations

import math
from collections.abc import Sequence

import numpy as np

from ringivm.errors import Divergence, EmptyDataset, ValidationError
from ringivm.rings.degree import DegreeMPayload

DIVERGENCE_LIMIT = 1e12


def restricted_sigma(payload: DegreeMPayload, index: dict[str, int], features: Sequence[str],
                     label: str) -> np.ndarray:
    """``[[c, sᵀ], [s, Q]]`` over (bias, features..., label)."""
    c, s, Q = payload.to_dense()
    idx = [index[v] for v in [*features, label]]
    k = len(idx)
    sigma = np.empty((k + 1, k + 1))
    sigma[0, 0] = c
    sigma[0, 1:] = s[idx]
    sigma[1:, 0] = s[idx]
    sigma[1:, 1:] = Q[np.ix_(idx, idx)]
    return sigma


def default_step(sigma: np.ndarray) -> float:
    """``1 / λmax`` of the parameter block of the count-normalized Σ."""
    block = sigma[:-1, :-1] / sigma[0, 0]
    lam = float(np.linalg.eigvalsh(block)[-1])
    return 1.0 / lam if lam > 0 else 1.0


def train_regression(payload: DegreeMPayload, index: dict[str, int], features: Sequence[str],
                     label: str, alpha: float | None = None, iterations: int = 1_000_000,
                     tolerance: float = 1e-9) -> np.ndarray:
    """Fit ``label ≈ θ0 + Σ θ_i feature_i`` from the root cofactor payload.

    Iterates ``θ := θ - α (1/c) Σ θ`` with the label's coefficient pinned
    at -1, stopping once the max-norm change drops below ``tolerance``.
    Returns ``(θ0, θ_features...)``.
    """
    for v in [*features, label]:
        if v not in index:
            raise ValidationError(f"{v!r} is not a variable of the degree ring")
    if label in features:
        raise ValidationError("the label cannot also be a feature")
    if payload.c == 0:
        raise EmptyDataset("the join is empty; nothing to train on")
    sigma = restricted_sigma(payload, index, features, label)
    step = default_step(sigma) if alpha is None else alpha
    # plain floats: numpy call overhead dominates for these tiny systems
    g = (sigma[:-1] / sigma[0, 0]).tolist()
    theta = [0.0] * (len(features) + 1) + [-1.0]
    n = len(theta) - 1
    for _ in range(iterations):
        biggest = 0.0
        new = theta[:]
        for i in range(n):
            grad = 0.0
            for gij, tj in zip(g[i], theta):
                grad += gij * tj
            change = step * grad
            new[i] -= change
            if abs(change) > biggest:
                biggest = abs(change)
        theta = new
        big = max(abs(v) for v in theta)
        if not math.isfinite(big) or big > DIVERGENCE_LIMIT:
            raise Divergence(f"parameters exceeded {DIVERGENCE_LIMIT:g}; step size {step:g} is too large")
        if biggest < tolerance:
            break
    return np.array(theta[:-1])
