"""Pure-Python transducer lattice kernel (fallback backend).

Forward computes the log-likelihood of a label sequence by marginalizing
all monotonic alignments with the standard forward recursion in log
space; backward returns gradients of the *negative* log-likelihood with
respect to the per-cell blank and emission log-probabilities via the
beta recursion and transition occupancies.

Grid layout for T frames and U labels:

* ``log_blank[t, u]``  log P(blank at frame t after emitting u labels), (T, U+1)
* ``log_emit[t, u]``   log P(emitting label u+1 at frame t), (T, U)

The path must end with a blank at (T-1, U) that consumes the last frame.
"""

import math

import numpy as np

NEG_INF = -math.inf


def _logaddexp(a: float, b: float) -> float:
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


def lattice_forward(log_blank: np.ndarray, log_emit: np.ndarray):
    """Return (log-likelihood, alpha) for one lattice.

    ``alpha[t, u]`` is the log-probability of having emitted the first u
    labels and being about to process frame t; ``alpha[0, 0] == 0``.
    """
    T, U1 = log_blank.shape
    U = U1 - 1
    alpha = np.empty((T, U1))
    alpha[0, 0] = 0.0
    for u in range(1, U1):
        alpha[0, u] = alpha[0, u - 1] + log_emit[0, u - 1]
    for t in range(1, T):
        alpha[t, 0] = alpha[t - 1, 0] + log_blank[t - 1, 0]
        for u in range(1, U1):
            alpha[t, u] = _logaddexp(
                alpha[t - 1, u] + log_blank[t - 1, u],
                alpha[t, u - 1] + log_emit[t, u - 1],
            )
    loglike = alpha[T - 1, U] + log_blank[T - 1, U]
    return loglike, alpha


def lattice_grads(log_blank: np.ndarray, log_emit: np.ndarray, alpha: np.ndarray, loglike: float):
    """Gradients of -loglike w.r.t. the two grids (negated occupancies)."""
    T, U1 = log_blank.shape
    U = U1 - 1
    beta = np.empty((T, U1))
    beta[T - 1, U] = log_blank[T - 1, U]
    for u in range(U - 1, -1, -1):
        beta[T - 1, u] = log_emit[T - 1, u] + beta[T - 1, u + 1]
    for t in range(T - 2, -1, -1):
        beta[t, U] = log_blank[t, U] + beta[t + 1, U]
        for u in range(U - 1, -1, -1):
            beta[t, u] = _logaddexp(
                log_blank[t, u] + beta[t + 1, u],
                log_emit[t, u] + beta[t, u + 1],
            )

    g_blank = np.zeros((T, U1))
    g_emit = np.zeros((T, U)) if U > 0 else np.zeros((T, 0))
    if T > 1:
        g_blank[: T - 1, :] = -np.exp(
            alpha[: T - 1, :] + log_blank[: T - 1, :] + beta[1:, :] - loglike
        )
    # Terminal blank at (T-1, U) lies on every path.
    g_blank[T - 1, U] = -1.0
    if U > 0:
        g_emit[:, :] = -np.exp(alpha[:, :U] + log_emit + beta[:, 1:] - loglike)
    return g_blank, g_emit
