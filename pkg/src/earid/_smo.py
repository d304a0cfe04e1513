"""Sequential minimal optimization core for the soft-margin SVM dual.

Working-set selection uses the maximal-violating first index and a
second-order (largest decrease) second index, which converges much faster
than first-order pair selection on poorly conditioned kernel matrices.
The loop is compiled with numba because grid-search tuning calls it
hundreds of times per validation run.
"""

import numpy as np
from numba import njit

_TAU = 1e-12


@njit(cache=True)
def solve(K, y, C, tol, max_iter):
    """Minimise 0.5 a'Qa - sum(a) s.t. 0 <= a_t <= C_t, sum(a_t y_t) = 0.

    K is the (n, n) kernel matrix, y in {-1, +1}, C the per-sample box.
    Returns (alpha, b, n_iter, gap); converged iff gap <= tol.  The gap is
    the maximal KKT violation max_{I_up} r - min_{I_low} r with
    r_t = y_t - G_t and G = K @ (alpha * y).
    """
    n = K.shape[0]
    alpha = np.zeros(n)
    G = np.zeros(n)
    it = 0
    r_up = 0.0
    r_low = 0.0
    gap = 0.0
    while True:
        # first index: most violating member of I_up
        i = -1
        r_up = -np.inf
        r_low = np.inf
        for t in range(n):
            r = y[t] - G[t]
            if ((y[t] > 0.0 and alpha[t] < C[t]) or (y[t] < 0.0 and alpha[t] > 0.0)) and r > r_up:
                r_up = r
                i = t
            if ((y[t] > 0.0 and alpha[t] > 0.0) or (y[t] < 0.0 and alpha[t] < C[t])) and r < r_low:
                r_low = r
        if i < 0 or not np.isfinite(r_low):
            gap = 0.0
            break
        gap = r_up - r_low
        if gap <= tol or it >= max_iter:
            break
        # second index: feasible direction with the largest second-order gain
        j = -1
        best = 0.0
        for t in range(n):
            if (y[t] > 0.0 and alpha[t] > 0.0) or (y[t] < 0.0 and alpha[t] < C[t]):
                diff = r_up - (y[t] - G[t])
                if diff > _TAU:
                    eta = K[i, i] + K[t, t] - 2.0 * K[i, t]
                    if eta <= _TAU:
                        eta = _TAU
                    gain = diff * diff / eta
                    if gain > best:
                        best = gain
                        j = t
        if j < 0:
            break
        # Step d > 0 moves alpha_i*y_i up and alpha_j*y_j down, keeping the
        # equality constraint; both moves are feasible by construction.
        cap_i = C[i] - alpha[i] if y[i] > 0.0 else alpha[i]
        cap_j = alpha[j] if y[j] > 0.0 else C[j] - alpha[j]
        d_max = min(cap_i, cap_j)
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if eta > _TAU:
            d = (r_up - (y[j] - G[j])) / eta
            if d > d_max:
                d = d_max
        else:
            # concave or flat direction (indefinite kernel): the objective
            # keeps improving along it, so jump to the box edge
            d = d_max
        if d <= 0.0:
            break
        alpha[i] += y[i] * d
        alpha[j] -= y[j] * d
        if alpha[i] < 0.0:
            alpha[i] = 0.0
        elif alpha[i] > C[i]:
            alpha[i] = C[i]
        if alpha[j] < 0.0:
            alpha[j] = 0.0
        elif alpha[j] > C[j]:
            alpha[j] = C[j]
        for t in range(n):
            G[t] += d * (K[t, i] - K[t, j])
        it += 1
    if np.isfinite(r_up) and np.isfinite(r_low):
        b = 0.5 * (r_up + r_low)
    else:
        b = 0.0
    return alpha, b, it, gap
