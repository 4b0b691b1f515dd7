"""Trust-region Newton solver for L2-regularized squared-hinge problems.

Minimizes, for one binary problem with signs ``s`` in {-1, +1}::

    f(w) = 0.5 * w.w + C * sum_i max(0, 1 - s_i * w.x_i) ** 2

in the primal.  The active set ``I = {i : 1 - s_i * w.x_i > 0}`` gives

    grad f(w) = w + 2C * X_I^T (X_I w - s_I)
    H v       = v + 2C * X_I^T (X_I v)

where ``H`` is the generalized Hessian (``f`` is only once differentiable).
Each outer step solves the Newton system approximately by conjugate
gradient restricted to the current trust region, in the style of TRON as
shipped with LIBLINEAR.

``X`` may be a dense array or any scipy sparse matrix supporting row
selection; it is never modified or copied wholesale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SignVector",
    "SolverConfig",
    "SolverResult",
    "objective",
    "gradient",
    "hessian_vec",
    "solve",
]

# acceptance thresholds on actual / predicted reduction
ETA0, ETA1, ETA2 = 1e-4, 0.25, 0.75
# radius scaling factors
SIGMA1, SIGMA2, SIGMA3 = 0.25, 0.5, 4.0


@dataclass(frozen=True, eq=False)
class SignVector:
    """Signs for one label: rows in ``positives`` are +1, all others -1."""

    positives: np.ndarray
    n_rows: int

    def __post_init__(self):
        pos = np.asarray(self.positives, dtype=np.int64)
        if pos.ndim != 1:
            raise ValueError("positives must be 1-d")
        if pos.size and (pos[0] < 0 or pos[-1] >= self.n_rows or np.any(np.diff(pos) <= 0)):
            raise ValueError("positives must be strictly increasing row ids < n_rows")
        object.__setattr__(self, "positives", pos)

    def to_dense(self):
        s = np.full(self.n_rows, -1.0)
        s[self.positives] = 1.0
        return s


@dataclass(frozen=True)
class SolverConfig:
    C: float = 1.0
    eps: float = 0.01
    max_outer_iter: int = 100
    max_cg_iter: int = 200
    cg_rtol: float = 0.1

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be > 0")
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        if self.max_outer_iter < 1 or self.max_cg_iter < 1:
            raise ValueError("iteration caps must be >= 1")
        if not self.cg_rtol > 0:
            raise ValueError("cg_rtol must be > 0")


@dataclass
class SolverResult:
    w: np.ndarray
    objective: float
    grad_norm: float
    outer_iters: int
    converged: bool
    # objective at the start point followed by every accepted iterate
    history: list = field(default_factory=list)


def _signs(s, n):
    if isinstance(s, SignVector):
        if s.n_rows != n:
            raise ValueError(f"sign vector has {s.n_rows} rows, X has {n}")
        return s.to_dense()
    s = np.asarray(s, dtype=np.float64)
    if s.shape != (n,):
        raise ValueError(f"sign vector shape {s.shape} does not match {n} rows")
    return s


def _check_dim(v, X, name="w"):
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (X.shape[1],):
        raise ValueError(f"{name} has shape {v.shape}, expected ({X.shape[1]},)")
    return v


def _rows(X, mask):
    if mask.all():
        return X
    return X[np.flatnonzero(mask)]


def objective(w, X, s, C):
    w = _check_dim(w, X)
    s = _signs(s, X.shape[0])
    slack = 1.0 - s * (X @ w)
    slack = slack[slack > 0]
    return 0.5 * float(w @ w) + C * float(slack @ slack)


def gradient(w, X, s, C):
    w = _check_dim(w, X)
    s = _signs(s, X.shape[0])
    z = X @ w
    active = 1.0 - s * z > 0
    XI = _rows(X, active)
    return w + 2.0 * C * (XI.T @ (z[active] - s[active]))


def hessian_vec(w, v, X, s, C):
    w = _check_dim(w, X)
    v = _check_dim(v, X, "v")
    s = _signs(s, X.shape[0])
    active = 1.0 - s * (X @ w) > 0
    XI = _rows(X, active)
    return v + 2.0 * C * (XI.T @ (XI @ v))


class _Problem:
    """Caches ``X w`` and the active rows between function, gradient and Hv."""

    def __init__(self, X, s, C):
        self.X, self.s, self.C = X, s, C
        self.XI = None

    def fun(self, w):
        self.z = self.X @ w
        slack = 1.0 - self.s * self.z
        self.active = slack > 0
        slack = slack[self.active]
        return 0.5 * float(w @ w) + self.C * float(slack @ slack)

    def grad(self, w):
        # valid only right after fun(w)
        self.XI = _rows(self.X, self.active)
        a = self.active
        return w + 2.0 * self.C * (self.XI.T @ (self.z[a] - self.s[a]))

    def hv(self, v):
        return v + 2.0 * self.C * (self.XI.T @ (self.XI @ v))


def _trcg(prob, g, radius, cfg):
    """Truncated CG on ``H d = -g`` inside ``||d|| <= radius``.

    Returns the step and the final residual ``r = -g - H d``.
    """
    step = np.zeros_like(g)
    r = -g
    d = r.copy()
    rtr = float(r @ r)
    tol = cfg.cg_rtol * math.sqrt(float(g @ g))
    for _ in range(cfg.max_cg_iter):
        if math.sqrt(rtr) <= tol:
            break
        Hd = prob.hv(d)
        dHd = float(d @ Hd)
        if dHd <= 0:
            break
        alpha = rtr / dHd
        step += alpha * d
        if math.sqrt(float(step @ step)) > radius:
            # back up and walk to the boundary along d
            step -= alpha * d
            std = float(step @ d)
            sts = float(step @ step)
            dtd = float(d @ d)
            dsq = radius * radius
            rad = math.sqrt(max(std * std + dtd * (dsq - sts), 0.0))
            if std >= 0:
                alpha = (dsq - sts) / (std + rad)
            else:
                alpha = (rad - std) / dtd
            step += alpha * d
            r -= alpha * Hd
            break
        r -= alpha * Hd
        rnew = float(r @ r)
        d = r + (rnew / rtr) * d
        rtr = rnew
    return step, r


def solve(X, s, cfg=None, w0=None):
    """Minimize the squared-hinge objective for one label.

    Converged means ``||grad f(w)|| <= eps * ||grad f(0)||``.  The reference
    norm is taken at the origin even for warm starts, so restarting from a
    converged point stops immediately.  Non-convergence within
    ``max_outer_iter`` is reported through ``converged=False``.
    """
    cfg = cfg or SolverConfig()
    n = X.shape[0]
    s = _signs(s, n)
    prob = _Problem(X, s, cfg.C)

    # grad f(0) = -2C X^T s: every row is active at the origin
    gnorm0 = 2.0 * cfg.C * float(np.linalg.norm(X.T @ s))
    if w0 is None:
        w = np.zeros(X.shape[1])
    else:
        w = _check_dim(w0, X, "w0").copy()
    f = prob.fun(w)
    g = prob.grad(w)
    gnorm = float(np.linalg.norm(g))
    history = [f]
    radius = gnorm
    tol = cfg.eps * gnorm0

    iters = 0
    converged = gnorm <= tol
    steps = 0
    while not converged and iters < cfg.max_outer_iter and steps < 10 * cfg.max_outer_iter:
        steps += 1
        step, r = _trcg(prob, g, radius, cfg)
        w_new = w + step
        gs = float(g @ step)
        prered = -0.5 * (gs - float(step @ r))
        saved = (prob.z, prob.active, prob.XI)
        fnew = prob.fun(w_new)
        actred = f - fnew
        snorm = math.sqrt(float(step @ step))
        if iters == 0 and steps == 1:
            radius = min(radius, snorm)
        if fnew - f - gs <= 0:
            alpha = SIGMA3
        else:
            alpha = max(SIGMA1, -0.5 * (gs / (fnew - f - gs)))
        if actred < ETA0 * prered:
            radius = min(max(alpha, SIGMA1) * snorm, SIGMA2 * radius)
        elif actred < ETA1 * prered:
            radius = max(SIGMA1 * radius, min(alpha * snorm, SIGMA2 * radius))
        elif actred < ETA2 * prered:
            radius = max(SIGMA1 * radius, min(alpha * snorm, SIGMA3 * radius))
        else:
            radius = max(radius, min(alpha * snorm, SIGMA3 * radius))

        if actred > ETA0 * prered:
            iters += 1
            w, f = w_new, fnew
            g = prob.grad(w)
            gnorm = float(np.linalg.norm(g))
            history.append(f)
            if gnorm <= tol:
                converged = True
                break
        else:
            prob.z, prob.active, prob.XI = saved
        if prered <= 0:
            break
        if abs(actred) <= 1e-12 * abs(f) and abs(prered) <= 1e-12 * abs(f):
            break

    return SolverResult(w, f, gnorm, iters, converged, history)
