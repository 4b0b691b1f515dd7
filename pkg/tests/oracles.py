"""Reference implementations that share no code with the package.

Each one follows the textbook definition as directly as possible; they are
slow and only meant for small inputs.
"""

import math

import numpy as np


def sq_hinge_objective(w, X, s, C):
    X = np.asarray(X, dtype=float)
    total = 0.5 * sum(v * v for v in w)
    for i in range(X.shape[0]):
        m = 1.0 - s[i] * sum(X[i, j] * w[j] for j in range(X.shape[1]))
        if m > 0:
            total += C * m * m
    return total


def _smooth_grad(w, X, s, C):
    z = X @ w
    slack = np.maximum(0.0, 1.0 - s * z)
    return w - 2.0 * C * (X.T @ (s * slack))


def accelerated_gd(X, s, C, tol=1e-10, max_iter=200000):
    """Nesterov's method for strongly convex functions, constant step.

    The objective is 1-strongly convex and its gradient is Lipschitz with
    constant ``1 + 2C ||X||_2^2``, so step ``1/L`` and momentum
    ``(sqrt(k) - 1) / (sqrt(k) + 1)`` with ``k = L`` converge linearly.
    Uses the identity ``d/dw max(0, 1 - s w.x)^2 = -2 s max(0, 1 - s w.x) x``
    rather than the active-set expression.
    """
    X = np.asarray(X, dtype=float)
    s = np.asarray(s, dtype=float)

    def f(w):
        slack = np.maximum(0.0, 1.0 - s * (X @ w))
        return 0.5 * w @ w + C * slack @ slack

    lip = 1.0 + 2.0 * C * np.linalg.norm(X, 2) ** 2
    root = math.sqrt(lip)
    momentum = (root - 1.0) / (root + 1.0)
    w = np.zeros(X.shape[1])
    y = w.copy()
    for _ in range(max_iter):
        w_new = y - _smooth_grad(y, X, s, C) / lip
        y = w_new + momentum * (w_new - w)
        w = w_new
        if np.linalg.norm(_smooth_grad(w, X, s, C)) <= tol:
            break
    return w, f(w)


def dot(w, x):
    """Plain left-to-right dot product in ascending feature order."""
    total = 0.0
    for j in range(len(x)):
        if x[j] != 0 and w[j] != 0:
            total += float(w[j]) * float(x[j])
    return total


def brute_topk(W, x, k):
    """Rank all labels by dense score, ties to the smaller label id."""
    scores = [dot(w, x) for w in W]
    order = sorted(range(len(scores)), key=lambda l: (-scores[l], l))
    return [(l, scores[l]) for l in order[:k]]


def p_at_k(gold, ranked, k, n_labels):
    y = np.zeros(n_labels)
    y[list(gold)] = 1
    return sum(y[l] for l in ranked[:k]) / k


def ndcg_at_k(gold, ranked, k, n_labels):
    y = np.zeros(n_labels)
    y[list(gold)] = 1
    dcg = 0.0
    for pos, l in enumerate(ranked[:k], start=1):
        dcg += y[l] / math.log2(pos + 1)
    norm = 0.0
    for pos in range(1, min(k, int(y.sum())) + 1):
        norm += 1 / math.log2(pos + 1)
    return dcg / norm
