"""Trilinear element maps, metric factors and weighted masses."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gll import GllBasis
from .mesh import LOCAL_EDGES, HexMesh, MeshError, _bits

# symmetric metric storage: G1..G6 = (11, 12, 13, 22, 23, 33)
METRIC_PAIRS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


class InvertedElementError(MeshError):
    pass


def _as_basis(order_or_basis) -> GllBasis:
    if isinstance(order_or_basis, GllBasis):
        return order_or_basis
    return GllBasis.build(int(order_or_basis))


def shape_gradients(basis: GllBasis) -> np.ndarray:
    """``dN[r, i, j, k, v]``: d/dxi_r of corner hat v at GLL node (i, j, k)."""
    h = basis.hats  # (p, 2)
    dh = np.array([-0.5, 0.5])
    p = basis.npts
    out = np.empty((3, p, p, p, 8))
    for v in range(8):
        a, b, c = _bits(v)
        fx, fy, fz = h[:, a], h[:, b], h[:, c]
        out[0, ..., v] = np.einsum("i,j,k->ijk", np.full(p, dh[a]), fy, fz)
        out[1, ..., v] = np.einsum("i,j,k->ijk", fx, np.full(p, dh[b]), fz)
        out[2, ..., v] = np.einsum("i,j,k->ijk", fx, fy, np.full(p, dh[c]))
    return out


def jacobian(corners: np.ndarray, xi: float, eta: float, zeta: float):
    """Jacobian ``J[d, r] = dx_d/dxi_r`` and its determinant at one point.

    ``corners`` is (8, 3) in tensor corner order.
    """
    corners = np.asarray(corners, dtype=np.float64)
    ref = (xi, eta, zeta)
    J = np.zeros((3, 3))
    for v in range(8):
        bits = _bits(v)
        hat = [(1 + ref[r]) / 2 if bits[r] else (1 - ref[r]) / 2 for r in range(3)]
        dhat = [0.5 if bits[r] else -0.5 for r in range(3)]
        for r in range(3):
            g = dhat[r] * np.prod([hat[s] for s in range(3) if s != r])
            J[:, r] += g * corners[v]
    det = float(np.linalg.det(J))
    if det <= 0.0:
        raise InvertedElementError(f"non-positive Jacobian determinant {det:.3e}")
    return J, det


def jacobians_at_gll(mesh: HexMesh, order_or_basis):
    """All Jacobians ``J[e, i, j, k, d, r]`` and determinants at GLL nodes."""
    basis = _as_basis(order_or_basis)
    dN = shape_gradients(basis)
    X = mesh.vertices[mesh.elements]  # (NE, 8, 3)
    J = np.einsum("rijkv,evd->eijkdr", dN, X, optimize=True)
    det = np.linalg.det(J)
    return J, det


def node_coordinates(mesh: HexMesh, order_or_basis) -> np.ndarray:
    """Physical coordinates of every local GLL node, ``[e, i, j, k, xyz]``."""
    basis = _as_basis(order_or_basis)
    h = basis.hats
    X = mesh.element_vertices()  # [e, a, b, c, d]
    return np.einsum("ia,jb,kc,eabcd->eijkd", h, h, h, X, optimize=True)


def weighted_metric(X: np.ndarray, dN: np.ndarray, w3: np.ndarray, counter=None):
    """Weighted metric factors from corner coordinates.

    Returns ``wg`` (6, E, p, p, p) holding ``m * (J^-1 J^-T)`` in G1..G6 order
    and ``m = rho_i rho_j rho_k |J|``. ``X`` is (E, 8, 3). Written with the
    cofactor identity ``J^-1 = [b x c; c x a; a x b] / det`` where a, b, c
    are the columns of J, so the operation count is explicit.
    """
    E = X.shape[0]
    npts = w3.size
    # columns of J: 8 multiply-adds per entry, 9 entries
    cols = np.einsum("rijkv,evd->reijkd", dN, X, optimize=True)
    a, b, c = cols[0], cols[1], cols[2]
    cross = np.stack([np.cross(b, c), np.cross(c, a), np.cross(a, b)])  # 3 x (6 mul + 3 sub)
    det = np.einsum("eijkd,eijkd->eijk", a, cross[0])  # 3 mul + 2 add
    if np.any(det <= 0.0):
        bad = int(np.flatnonzero(np.min(det.reshape(E, -1), axis=1) <= 0.0)[0])
        raise InvertedElementError(f"element {bad} has a non-positive Jacobian determinant")
    mass = w3 * det  # 1
    scale = w3 / det  # 1
    wg = np.empty((6,) + det.shape)
    for q, (r, s) in enumerate(METRIC_PAIRS):
        wg[q] = scale * np.einsum("eijkd,eijkd->eijk", cross[r], cross[s])  # 5 + 1
    if counter is not None:
        counter.add_geometry(E * npts * (2 * 8 * 9 + 27 + 5 + 1 + 1 + 6 * 6))
    return wg, mass


@dataclass(frozen=True)
class GeometricFactors:
    """Per-node metric ``J^-1 J^-T`` (G1..G6) and weighted mass.

    ``metric`` is (6, N_E, p, p, p), one contiguous block per factor;
    ``mass`` is (N_E, p, p, p).
    """

    metric: np.ndarray
    mass: np.ndarray

    def weighted_metric(self) -> np.ndarray:
        return self.metric * self.mass[None]

    def metric_tensor(self) -> np.ndarray:
        """Full symmetric 3x3 tensors, ``[e, i, j, k, r, s]``."""
        g = np.empty(self.mass.shape + (3, 3))
        for q, (r, s) in enumerate(METRIC_PAIRS):
            g[..., r, s] = self.metric[q]
            g[..., s, r] = self.metric[q]
        return g


def compute_factors(mesh: HexMesh, basis: GllBasis) -> GeometricFactors:
    dN = shape_gradients(basis)
    w3 = basis.weights3d()
    X = mesh.vertices[mesh.elements]
    wg, mass = weighted_metric(X, dN, w3)
    metric = wg / mass[None]
    return GeometricFactors(metric=metric, mass=mass)


def element_dimensions(mesh: HexMesh) -> np.ndarray:
    """(N_E, 3) box sizes: mean length of the four edges along each reference axis."""
    X = mesh.vertices[mesh.elements]
    h = np.zeros((mesh.num_elements, 3))
    for axis, lo, hi in LOCAL_EDGES:
        h[:, axis] += np.linalg.norm(X[:, hi] - X[:, lo], axis=1)
    return h / 4.0


def mesh_volume(mesh: HexMesh, basis: GllBasis) -> float:
    return float(compute_factors(mesh, basis).mass.sum())
