"""One-dimensional spectral ingredients on Gauss-Lobatto-Legendre points."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre


def _legendre_and_derivatives(n: int, t: np.ndarray):
    """P_n, P_n' and P_n'' at t by the three-term recurrence."""
    p_prev = np.ones_like(t)
    p = t.copy()
    if n == 0:
        return p_prev, np.zeros_like(t), np.zeros_like(t)
    for k in range(2, n + 1):
        p_prev, p = p, ((2 * k - 1) * t * p - (k - 1) * p_prev) / k
    # derivatives from the Legendre ODE, valid away from t = +-1
    with np.errstate(divide="ignore", invalid="ignore"):
        dp = n * (p_prev - t * p) / (1.0 - t * t)
        d2p = (2.0 * t * dp - n * (n + 1) * p) / (1.0 - t * t)
    return p, dp, d2p


def gll_nodes_weights(n: int, tol: float = 1e-15, max_iter: int = 100):
    """GLL nodes and weights for polynomial order ``n``.

    Interior nodes are the roots of P_n' found by Newton's method started
    from Chebyshev-Gauss-Lobatto points. Returns ``n + 1`` ascending nodes
    on [-1, 1] and the matching weights ``2 / (n (n + 1) P_n(t)^2)``.
    """
    if n < 1:
        raise ValueError(f"GLL order must be >= 1, got {n}")
    nodes = -np.cos(np.pi * np.arange(n + 1) / n)
    interior = nodes[1:-1].copy()
    for _ in range(max_iter):
        if interior.size == 0:
            break
        _, dp, d2p = _legendre_and_derivatives(n, interior)
        step = dp / d2p
        interior -= step
        if np.max(np.abs(step)) < tol:
            break
    nodes[1:-1] = interior
    nodes[0], nodes[-1] = -1.0, 1.0
    # enforce exact symmetry t_i = -t_{n-i}
    nodes = 0.5 * (nodes - nodes[::-1])
    pn = legendre.legval(nodes, np.eye(n + 1)[n])
    weights = 2.0 / (n * (n + 1) * pn**2)
    weights = 0.5 * (weights + weights[::-1])
    return nodes, weights


def lagrange_derivative_table(nodes: np.ndarray) -> np.ndarray:
    """Table ``D[i, j] = phi_i'(t_j)`` for the Lagrange basis on ``nodes``.

    Uses barycentric weights; the diagonal follows from the fact that the
    basis derivatives sum to zero at every node.
    """
    p = len(nodes)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    bary = 1.0 / np.prod(diff, axis=1)
    # phi_i'(t_j) = (bary_i / bary_j) / (t_j - t_i) for i != j
    table = (bary[:, None] / bary[None, :]) / (nodes[None, :] - nodes[:, None] + np.eye(p))
    np.fill_diagonal(table, 0.0)
    table[np.arange(p), np.arange(p)] = -table.sum(axis=0)
    return table


def derivation_matrix(basis: "GllBasis") -> np.ndarray:
    return basis.deriv


def coarse_vandermonde(nodes: np.ndarray) -> np.ndarray:
    """``B[IJK, ijk] = Phi_I(t_i) Phi_J(t_j) Phi_K(t_k)`` with linear hats.

    Row index is ``I*4 + J*2 + K`` and column index ``i*(n+1)^2 + j*(n+1) + k``
    (first index runs along xi, C order).
    """
    hats = np.stack([(1.0 - nodes) / 2.0, (1.0 + nodes) / 2.0])  # (2, n+1)
    b = np.einsum("ai,bj,ck->abcijk", hats, hats, hats)
    p = len(nodes)
    return b.reshape(8, p**3)


@dataclass(frozen=True)
class GllBasis:
    """Immutable 1D tables for order ``n``.

    ``deriv[i, j]`` is the derivative of the i-th Lagrange basis function at
    node j. Gradients of a nodal field are therefore column contractions,
    ``du/dt (t_i) = sum_m deriv[m, i] u_m``; ``diff = deriv.T`` is stored so
    the element kernels can be written as ``du/dxi_i = sum_m diff[i, m] u_m``.
    """

    order: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    deriv: np.ndarray = field(repr=False)
    diff: np.ndarray = field(repr=False)
    hats: np.ndarray = field(repr=False)
    coarse_vandermonde: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, n: int) -> "GllBasis":
        nodes, weights = gll_nodes_weights(n)
        deriv = lagrange_derivative_table(nodes)
        hats = np.stack([(1.0 - nodes) / 2.0, (1.0 + nodes) / 2.0], axis=1)
        arrays = dict(
            nodes=nodes,
            weights=weights,
            deriv=deriv,
            diff=np.ascontiguousarray(deriv.T),
            hats=hats,
            coarse_vandermonde=coarse_vandermonde(nodes),
        )
        for a in arrays.values():
            a.setflags(write=False)
        return cls(order=n, **arrays)

    @property
    def npts(self) -> int:
        return self.order + 1

    def weights3d(self) -> np.ndarray:
        """Tensor weights rho_i rho_j rho_k as an (n+1)^3 array."""
        w = self.weights
        return np.einsum("i,j,k->ijk", w, w, w)
