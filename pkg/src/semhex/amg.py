"""Unsmoothed aggregation AMG with a K-cycle and damped Jacobi smoothing.

Aggregates are built by repeated pairwise matching on the strongest
negative couplings (three passes give aggregates of up to eight nodes).
The tentative prolongator is piecewise constant, so every coarse matrix is
the aggregate-summed fine matrix.

Two cycles are offered. ``"frozen"`` replaces the two inner Krylov steps
of each coarse correction by the degree-two Chebyshev polynomial fitted at
setup to the spectrum of the next level's preconditioned operator; the
result is a fixed symmetric linear map. ``"kcycle"`` performs the two
flexible CG steps adaptively, which is nonlinear in the right-hand side.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class AmgError(ArithmeticError):
    pass


@dataclass
class Level:
    A: sp.csr_matrix
    dinv: np.ndarray
    agg: np.ndarray | None = None  # fine node -> aggregate, None on the coarsest level
    P: sp.csr_matrix | None = None
    cheb: tuple[float, float] | None = None  # frozen inner polynomial (c0, c1) for this level's solve
    bounds: tuple[float, float] | None = None
    lu: object = None


@dataclass
class AmgHierarchy:
    levels: list
    omega: float = 2.0 / 3.0
    cycle: str = "frozen"
    degree: int = 1
    bounds: tuple[float, float] | None = None  # spectrum of B_0 A_0, used when degree > 1
    stats: dict = field(default_factory=dict)

    def apply(self, b: np.ndarray) -> np.ndarray:
        return amg_apply(self, b)

    __call__ = apply

    def to_json(self, **kw) -> str:
        return json.dumps(self.stats, **kw)


def pairwise_aggregate(A: sp.csr_matrix, beta: float = 0.25) -> np.ndarray:
    """Greedy matching of each node with its strongest negatively coupled neighbour.

    Visits nodes in index order; a coupling ``a_ij`` is strong when
    ``-a_ij >= beta * max_k(-a_ik)``. Unmatched nodes become singletons.
    """
    A = A.tocsr()
    n = A.shape[0]
    indptr, indices, data = A.indptr, A.indices, A.data
    neg = np.minimum(data, 0.0)
    neg[indices == np.repeat(np.arange(n), np.diff(indptr))] = 0.0
    row_min = sp.csr_matrix((neg, indices, indptr), shape=A.shape).min(axis=1).toarray().ravel()

    agg = [-1] * n
    ptr, idx, val = indptr.tolist(), indices.tolist(), neg.tolist()
    thresh = (beta * row_min).tolist()
    count = 0
    for i in range(n):
        if agg[i] >= 0:
            continue
        best, best_val = -1, 0.0
        t = thresh[i]
        for q in range(ptr[i], ptr[i + 1]):
            v = val[q]
            if v < best_val and v <= t and agg[idx[q]] < 0:
                best, best_val = idx[q], v
        agg[i] = count
        if best >= 0:
            agg[best] = count
        count += 1
    return np.array(agg, dtype=np.int64)


def tentative_prolongator(agg: np.ndarray) -> sp.csr_matrix:
    n = len(agg)
    return sp.csr_matrix((np.ones(n), (np.arange(n), agg)), shape=(n, int(agg.max()) + 1))


def _check_level(A: sp.csr_matrix, omega: float, seed: int) -> np.ndarray:
    diag = A.diagonal()
    if np.any(diag <= 0.0):
        raise AmgError("matrix has a non-positive diagonal entry; not SPD")
    dinv = 1.0 / diag
    # power iteration for rho(omega D^-1 A); Jacobi must contract in the A-norm
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(A.shape[0])
    lam = 0.0
    for _ in range(30):
        y = omega * dinv * (A @ x)
        lam = float(np.dot(x, A @ y) / max(np.dot(x, A @ x), 1e-300))
        nrm = np.linalg.norm(y)
        if nrm == 0.0:
            break
        x = y / nrm
    if lam >= 2.0:
        raise AmgError(f"damped Jacobi diverges (rho(omega D^-1 A) ~ {lam:.3f}); matrix not SPD or omega too large")
    return dinv


def amg_setup(
    A,
    max_coarse: int = 64,
    passes: int = 3,
    omega: float = 2.0 / 3.0,
    cycle: str = "frozen",
    max_levels: int = 25,
    seed: int = 0,
    degree: int = 1,
) -> AmgHierarchy:
    """Build the aggregation hierarchy for an SPD sparse matrix.

    ``degree > 1`` wraps the top-level cycle in a Chebyshev polynomial of
    that degree, fitted to Lanczos bounds of the cycle-preconditioned
    matrix; the result is still a fixed symmetric linear map.
    """
    if cycle not in ("frozen", "kcycle"):
        raise ValueError(f"unknown cycle {cycle!r}")
    if degree < 1:
        raise ValueError("degree must be >= 1")
    A = sp.csr_matrix(A, dtype=np.float64)
    if A.shape[0] != A.shape[1]:
        raise AmgError("matrix must be square")
    if abs(A - A.T).max() > 1e-12 * abs(A).max():
        raise AmgError("matrix is not symmetric")
    levels = []
    while True:
        dinv = _check_level(A, omega, seed)
        lev = Level(A=A, dinv=dinv)
        levels.append(lev)
        if A.shape[0] <= max_coarse or len(levels) >= max_levels:
            break
        agg = np.arange(A.shape[0])
        Ac = A
        for _ in range(passes):
            a2 = pairwise_aggregate(Ac)
            agg = a2[agg]
            Pp = tentative_prolongator(a2)
            Ac = (Pp.T @ Ac @ Pp).tocsr()
        if Ac.shape[0] > 0.9 * A.shape[0]:
            break  # no coarsening progress; solve this level directly
        lev.agg = agg
        lev.P = tentative_prolongator(agg)
        Ac.sum_duplicates()
        Ac.eliminate_zeros()
        A = Ac
    coarsest = levels[-1]
    try:
        coarsest.lu = spla.splu(coarsest.A.tocsc())
    except RuntimeError as exc:  # singular
        raise AmgError(f"coarsest matrix is singular: {exc}") from exc

    h = AmgHierarchy(levels=levels, omega=omega, cycle=cycle, degree=degree)
    # frozen polynomials bottom-up: level l's coarse solve uses the spectrum of level l+1
    for l in range(len(levels) - 2, 0, -1):
        lo, hi = _spectral_bounds(h, l, seed)
        levels[l].bounds = (lo, hi)
        levels[l].cheb = _chebyshev2(lo, hi)
    if degree > 1 and len(levels) > 1:
        h.bounds = _spectral_bounds(h, 0, seed)
    nnz = [lev.A.nnz for lev in levels]
    h.stats = {
        "levels": len(levels),
        "sizes": [lev.A.shape[0] for lev in levels],
        "nnz": nnz,
        "operator_complexity": sum(nnz) / nnz[0],
        "grid_complexity": sum(lev.A.shape[0] for lev in levels) / levels[0].A.shape[0],
        "cycle": cycle,
        "omega": omega,
        "spectral_bounds": [lev.bounds for lev in levels],
        "degree": degree,
        "top_bounds": h.bounds,
    }
    return h


def _chebyshev2(lo: float, hi: float) -> tuple[float, float]:
    """Coefficients of ``q(x) = c0 + c1 x`` with ``1 - x q(x)`` the scaled T_2 on [lo, hi]."""
    a = (hi + lo) / (hi - lo)
    b = 2.0 / (hi - lo)
    t2 = 2.0 * a * a - 1.0
    return 4.0 * a * b / t2, -2.0 * b * b / t2


def _spectral_bounds(h: AmgHierarchy, level: int, seed: int, steps: int = 12) -> tuple[float, float]:
    """Extreme Ritz values of ``B_l A_l`` from a short preconditioned Lanczos run."""
    A = h.levels[level].A
    rng = np.random.default_rng(seed + level)
    b = rng.standard_normal(A.shape[0])
    x = np.zeros_like(b)
    r = b.copy()
    z = _cycle(h, level, r)
    p = z.copy()
    rz = float(r @ z)
    alphas, betas = [], []
    for _ in range(min(steps, A.shape[0])):
        Ap = A @ p
        alpha = rz / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        alphas.append(alpha)
        z = _cycle(h, level, r)
        rz_new = float(r @ z)
        if rz_new <= 1e-30 * abs(rz):
            break
        betas.append(rz_new / rz)
        rz = rz_new
        p = z + betas[-1] * p
    k = len(alphas)
    T = np.zeros((k, k))
    for i in range(k):
        T[i, i] = 1.0 / alphas[i] + (betas[i - 1] / alphas[i - 1] if i > 0 else 0.0)
        if i + 1 < k:
            T[i, i + 1] = T[i + 1, i] = np.sqrt(betas[i]) / alphas[i]
    ritz = np.linalg.eigvalsh(T)
    lo, hi = float(ritz[0]), float(ritz[-1])
    return 0.9 * lo, 1.1 * hi


def _coarse_solve(h: AmgHierarchy, level: int, r: np.ndarray) -> np.ndarray:
    """Approximate ``A_level^-1 r`` for level >= 1."""
    lev = h.levels[level]
    if lev.lu is not None:
        return lev.lu.solve(r)
    A = lev.A
    if h.cycle == "frozen" and lev.cheb is not None:
        c0, c1 = lev.cheb
        v1 = _cycle(h, level, r)
        v2 = _cycle(h, level, A @ v1)
        return c0 * v1 + c1 * v2
    # adaptive K-cycle: two flexible CG steps
    v1 = _cycle(h, level, r)
    w1 = A @ v1
    rho1 = float(v1 @ w1)
    a1 = float(v1 @ r)
    r2 = r - (a1 / rho1) * w1
    if np.linalg.norm(r2) <= 0.25 * np.linalg.norm(r):
        return (a1 / rho1) * v1
    v2 = _cycle(h, level, r2)
    w2 = A @ v2
    gamma = float(v2 @ w1)
    beta = float(v2 @ w2)
    a2 = float(v2 @ r2)
    rho2 = beta - gamma * gamma / rho1
    return (a1 / rho1 - gamma * a2 / (rho1 * rho2)) * v1 + (a2 / rho2) * v2


def _cycle(h: AmgHierarchy, level: int, b: np.ndarray) -> np.ndarray:
    """One symmetric cycle from a zero initial guess."""
    lev = h.levels[level]
    if lev.lu is not None:
        return lev.lu.solve(b)
    A, w = lev.A, h.omega
    x = w * lev.dinv * b
    rc = lev.P.T @ (b - A @ x)
    x += lev.P @ _coarse_solve(h, level + 1, rc)
    x += w * lev.dinv * (b - A @ x)
    return x


def _chebyshev_top(h: AmgHierarchy, b: np.ndarray) -> np.ndarray:
    """Preconditioned Chebyshev iteration from zero, ``h.degree`` cycles."""
    A = h.levels[0].A
    lo, hi = h.bounds
    theta, delta = 0.5 * (hi + lo), 0.5 * (hi - lo)
    sigma = theta / delta
    rho = 1.0 / sigma
    x = np.zeros_like(b)
    r = b.copy()
    d = _cycle(h, 0, r) / theta
    for k in range(h.degree):
        x += d
        if k + 1 == h.degree:
            break
        r -= A @ d
        rho_new = 1.0 / (2.0 * sigma - rho)
        d = rho_new * rho * d + (2.0 * rho_new / delta) * _cycle(h, 0, r)
        rho = rho_new
    return x


def amg_apply(h: AmgHierarchy, b: np.ndarray) -> np.ndarray:
    """One K-cycle on the finest level (Chebyshev-wrapped when ``degree > 1``)."""
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (h.levels[0].A.shape[0],):
        raise ValueError("right-hand side has the wrong length")
    if h.degree > 1 and h.bounds is not None:
        return _chebyshev_top(h, b)
    return _cycle(h, 0, b)
