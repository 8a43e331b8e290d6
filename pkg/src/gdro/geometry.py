"""Regularizers, Bregman divergences, and Bregman projections for the
weight player: closed-form simplex projections and an O(m log m)
pool-adjacent-violators projection onto permutahedra and capped simplices.
"""

from __future__ import annotations

import numpy as np

from gdro.problem import UncertaintySetSpec

ENTROPY = "entropy"
TSALLIS = "tsallis"
EUCLIDEAN = "euclidean"

# positivity floor for weight vectors; keeps importance weights 1/q_i finite
EPS_Q = 1e-12


class ProjectionError(RuntimeError):
    """A scalar root solve inside a projection failed to converge."""


class Regularizer:
    """Separable strictly convex regularizer on the open simplex.

    entropy:   Psi(x) = sum_i (x_i log x_i - x_i)
    tsallis:   Psi(x) = 2 (1 - sum_i sqrt(x_i))
    euclidean: Psi(x) = ||x||^2 / 2
    """

    def __init__(self, kind: str):
        if kind not in (ENTROPY, TSALLIS, EUCLIDEAN):
            raise ValueError(f"unknown regularizer kind: {kind!r}")
        self.kind = kind

    def __repr__(self):
        return f"Regularizer({self.kind!r})"

    def value(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        if self.kind == ENTROPY:
            self._require_positive(x)
            return float(np.sum(x * np.log(x) - x))
        if self.kind == TSALLIS:
            self._require_positive(x)
            return float(2.0 * (1.0 - np.sum(np.sqrt(x))))
        return float(0.5 * np.dot(x, x))

    def grad(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == ENTROPY:
            self._require_positive(x)
            return np.log(x)
        if self.kind == TSALLIS:
            self._require_positive(x)
            return -1.0 / np.sqrt(x)
        return x.copy()

    def hess_diag(self, x: np.ndarray) -> np.ndarray:
        """Diagonal of the Hessian (the Hessian is diagonal)."""
        x = np.asarray(x, dtype=float)
        if self.kind == ENTROPY:
            return 1.0 / x
        if self.kind == TSALLIS:
            return 0.5 * x ** (-1.5)
        return np.ones_like(x)

    def grad_inverse(self, u: np.ndarray) -> np.ndarray:
        """Inverse of the gradient map (the mirror map back to primal space)."""
        u = np.asarray(u, dtype=float)
        if self.kind == ENTROPY:
            return np.exp(u)
        if self.kind == TSALLIS:
            if np.any(u >= 0):
                raise ValueError("tsallis dual values must be negative")
            return u ** (-2.0)
        return u.copy()

    @staticmethod
    def _require_positive(x):
        if np.any(x <= 0):
            raise ValueError("entries must be strictly positive for this regularizer")


def bregman_divergence(reg: Regularizer, x: np.ndarray, y: np.ndarray) -> float:
    """D_Psi(x, y) = Psi(x) - Psi(y) - <grad Psi(y), x - y>.  >= 0, zero iff x = y."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = reg.value(x) - reg.value(y) - float(reg.grad(y) @ (x - y))
    # strict convexity guarantees nonnegativity; clip rounding noise at zero
    return max(d, 0.0)


def floor_weights(q: np.ndarray, eps: float = EPS_Q) -> np.ndarray:
    """Floor entries away from zero and renormalize to the simplex.

    The floor is applied at 2*eps before renormalizing so entries stay
    >= eps after the division."""
    q = np.maximum(q, 2.0 * eps)
    return q / q.sum()


def entropy_simplex_project(q_tilde: np.ndarray) -> np.ndarray:
    """Bregman projection onto the simplex under entropy: plain normalization."""
    q_tilde = np.asarray(q_tilde, dtype=float)
    if np.any(~np.isfinite(q_tilde)) or np.any(q_tilde <= 0):
        raise ValueError("entries must be positive and finite")
    return q_tilde / q_tilde.sum()


def tsallis_simplex_project(q_tilde: np.ndarray, tol: float = 1e-12,
                            warm_alpha: float | None = None,
                            max_iter: int = 100):
    """Bregman projection onto the simplex under the Tsallis regularizer.

    The mirror map is -x^(-1/2), so the projection shifts the dual by a
    constant: returns (q, alpha) with q_i = (q_tilde_i^(-1/2) - alpha)^(-2),
    where alpha is the unique root of sum_i (q_tilde_i^(-1/2) - alpha)^(-2) = 1
    with alpha < min_i q_tilde_i^(-1/2) (root bracket ensuring positivity;
    also order-preserving in q_tilde).  Newton iteration with an optional
    warm start, guarded by bisection on the bracket.
    """
    q_tilde = np.asarray(q_tilde, dtype=float)
    if np.any(~np.isfinite(q_tilde)) or np.any(q_tilde <= 0):
        raise ValueError("entries must be positive and finite")
    r = 1.0 / np.sqrt(q_tilde)
    m = r.size
    hi = float(r.min())  # alpha must stay below this

    def f(a):
        return np.sum((r - a) ** (-2.0)) - 1.0

    # f is increasing in alpha on (-inf, hi); f -> m/... at -inf -> -1, -> +inf at hi
    lo = hi - np.sqrt(m) - 1.0
    while f(lo) > 0:
        lo = hi - 2.0 * (hi - lo)

    a = warm_alpha if (warm_alpha is not None and lo < warm_alpha < hi) else 0.5 * (lo + hi)
    if not lo < a < hi or f(a) != f(a):
        a = 0.5 * (lo + hi)
    resid = f(a)
    for _ in range(max_iter):
        if abs(resid) < tol:
            break
        if resid > 0:
            hi = a
        else:
            lo = a
        deriv = np.sum(2.0 * (r - a) ** (-3.0))
        step = a - resid / deriv
        a = step if lo < step < hi else 0.5 * (lo + hi)
        resid = f(a)
    else:
        if abs(resid) >= tol:
            raise ProjectionError(f"tsallis normalization did not converge: residual {resid:.3e}")
    q = (r - a) ** (-2.0)
    return q, float(a)


def _block_value_entropy(sum_qt: float, sum_alpha: float) -> float:
    # dual shift s with q_i = q_tilde_i * exp(-s) on the block
    if sum_alpha <= 0.0:
        return np.inf
    return float(np.log(sum_qt / sum_alpha))


def _block_value_tsallis(thetas: np.ndarray, target: float) -> float:
    """Solve sum_i (s - theta_i)^(-2) = target over s > max(theta)."""
    if target <= 0.0:
        return np.inf
    t_max = float(thetas.max())
    # g(s) decreases from +inf to 0 on (t_max, inf)
    lo = t_max
    width = max(1.0, np.sqrt(len(thetas) / target))
    hi = t_max + width
    while np.sum((hi - thetas) ** (-2.0)) > target:
        lo = hi
        hi = t_max + 2.0 * (hi - t_max)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        g = np.sum((mid - thetas) ** (-2.0))
        if g > target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15 * max(1.0, abs(hi)):
            break
    return 0.5 * (lo + hi)


def _pav_permutahedron(q_tilde_sorted: np.ndarray, alpha: np.ndarray, reg: Regularizer) -> np.ndarray:
    """Projection onto the permutahedron of alpha for descending-sorted input.

    Dual view: minimize sum_i [Psi*(theta_i - s_i) + alpha_i s_i] over
    nonincreasing s, where theta = grad Psi(q_tilde).  Pool adjacent
    violators: each block shares one dual shift s solving
    sum_block q_i(s) = sum_block alpha_i.
    """
    m = q_tilde_sorted.size
    theta = reg.grad(q_tilde_sorted)
    # stack of blocks: (start, end_exclusive, value)
    starts, ends, vals = [], [], []
    for i in range(m):
        start, end = i, i + 1
        a_sum = float(alpha[i])
        if reg.kind == ENTROPY:
            val = _block_value_entropy(float(q_tilde_sorted[i]), a_sum)
        else:
            val = _block_value_tsallis(theta[i:i + 1], a_sum)
        # merge while monotonicity s_prev >= s_new is violated
        while starts and vals[-1] < val:
            start = starts.pop()
            ends.pop()
            vals.pop()
            a_sum = float(alpha[start:end].sum())
            if reg.kind == ENTROPY:
                val = _block_value_entropy(float(q_tilde_sorted[start:end].sum()), a_sum)
            else:
                val = _block_value_tsallis(theta[start:end], a_sum)
        starts.append(start)
        ends.append(end)
        vals.append(val)
    q = np.empty(m)
    for start, end, val in zip(starts, ends, vals):
        if reg.kind == ENTROPY:
            q[start:end] = q_tilde_sorted[start:end] * np.exp(-val)
        else:
            q[start:end] = (val - theta[start:end]) ** (-2.0)
    return q


def capped_simplex_project(q_tilde: np.ndarray, cap: float, reg: Regularizer,
                           tol: float = 1e-12) -> np.ndarray:
    """Bregman projection onto {q in simplex : q_i <= cap}.

    Water-filling on the sorted entries: the j largest entries are clipped at
    the cap and the rest are renormalized to mass 1 - j*cap.
    """
    q_tilde = np.asarray(q_tilde, dtype=float)
    m = q_tilde.size
    if cap < 1.0 / m - 1e-12:
        raise ValueError("cap below 1/m: empty feasible set")
    if cap * m <= 1.0 + 1e-12:
        return np.full(m, 1.0 / m)
    order = np.argsort(-q_tilde, kind="stable")
    y = q_tilde[order]
    q_sorted = None
    for j in range(m):
        # assume the j largest entries are clipped at the cap
        rest_mass = 1.0 - j * cap
        if reg.kind == ENTROPY:
            scale = rest_mass / y[j:].sum()
            uncapped = y[j:] * scale
            last_capped_wants = y[j - 1] * scale if j > 0 else np.inf
        else:
            theta = -1.0 / np.sqrt(y)
            s = _block_value_tsallis(theta[j:], rest_mass)
            uncapped = (s - theta[j:]) ** (-2.0)
            if j == 0:
                last_capped_wants = np.inf
            elif s <= theta[j - 1]:
                # dual value at or below the entry's pole: unconstrained
                # solution diverges, the cap is certainly active
                last_capped_wants = np.inf
            else:
                last_capped_wants = (s - theta[j - 1]) ** (-2.0)
        if uncapped[0] <= cap * (1.0 + 1e-12) and last_capped_wants >= cap * (1.0 - 1e-12):
            q_sorted = np.concatenate([np.full(j, cap), uncapped])
            break
    if q_sorted is None:
        raise ProjectionError("capped projection scan failed")
    q = np.empty(m)
    q[order] = q_sorted
    return q


def permutahedron_bregman_project(q_tilde: np.ndarray, spec: UncertaintySetSpec,
                                  reg: Regularizer, tol: float = 1e-12) -> np.ndarray:
    """argmin_{q in Q} D_Psi(q, q_tilde) for entropy or Tsallis regularizers.

    Q is given by spec: a permutahedron (pool-adjacent-violators after one
    sort), a k-set polytope (cap form, exact also for non-integral p*m), or
    the simplex (dispatched to the closed-form simplex normalizations).
    Runtime O(m log m) plus scalar solves for the Tsallis case.
    """
    q_tilde = np.asarray(q_tilde, dtype=float)
    if np.any(~np.isfinite(q_tilde)) or np.any(q_tilde <= 0):
        raise ValueError("entries must be positive and finite")
    if reg.kind not in (ENTROPY, TSALLIS):
        raise ValueError("projection supports entropy and tsallis regularizers only")
    m = q_tilde.size

    if spec.kind == UncertaintySetSpec.SIMPLEX:
        if reg.kind == ENTROPY:
            return entropy_simplex_project(q_tilde)
        q, _ = tsallis_simplex_project(q_tilde, tol=tol)
        return q
    if spec.kind == UncertaintySetSpec.KSET:
        return capped_simplex_project(q_tilde, spec.cap(m), reg, tol=tol)

    alpha = spec.rank_weights_for(m)
    # entropy projection is invariant to scaling of q_tilde; normalize to
    # keep block sums well-conditioned
    if reg.kind == ENTROPY:
        q_tilde = q_tilde / q_tilde.sum()
    order = np.argsort(-q_tilde, kind="stable")
    q_sorted = _pav_permutahedron(q_tilde[order], alpha, reg)
    q = np.empty(m)
    q[order] = q_sorted
    return q
