"""Coarse-scale correction on the trilinear (n=1) space of the mesh vertices.

``P^c r = m^-1 C^T P_0 C m^-1 r`` where ``m`` is the fine lumped mass,
``C`` the GLL-quadrature correlation between fine and trilinear bases and
``P_0`` an approximate (AMG) or exact solve with the n=1 matrix.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .amg import AmgHierarchy, amg_setup
from .gll import GllBasis
from .mesh import HexMesh, IndexMaps, build_index_maps, corner, gather
from .operator import SemOperator, per_element

# B row (I, J, K) in C order -> element corner index
_B_CORNERS = [corner(I, J, K) for I, J, K in product(range(2), repeat=3)]

DIRECT_THRESHOLD = 20000
AMG_DEFAULTS = {"degree": 3}


@dataclass
class CoarseSystem:
    """Masked n=1 matrix on mesh vertices and its free (non-Dirichlet) rows."""

    matrix: sp.csr_matrix  # full size, identity on Dirichlet rows
    free: np.ndarray
    dirichlet: np.ndarray  # bool per vertex

    @property
    def free_matrix(self) -> sp.csr_matrix:
        return self.matrix[self.free][:, self.free].tocsr()


def element_matrices(mesh: HexMesh, kappa, c) -> np.ndarray:
    """(N_E, 8, 8) trilinear element matrices with vertex quadrature, rows in B order."""
    basis = GllBasis.build(1)
    maps = build_index_maps(mesh, 1, dirichlet_tags=None)
    op = SemOperator(mesh, basis, maps, kappa, c)
    ne = mesh.num_elements
    Ke = np.empty((ne, 8, 8))
    for col in range(8):
        u = np.zeros((ne, 8))
        u[:, col] = 1.0
        Ke[:, :, col] = op.local_residual(u.reshape(ne, 2, 2, 2), slice(0, ne)).reshape(ne, 8)
    return Ke


def assemble_coarse_matrix(mesh: HexMesh, kappa, c, dirichlet_vertices=None) -> CoarseSystem:
    """Sparse n=1 stiffness plus mass, Dirichlet rows/columns replaced by identity."""
    ne, nv = mesh.num_elements, mesh.num_vertices
    Ke = element_matrices(mesh, kappa, c)
    cv = mesh.elements[:, _B_CORNERS]
    rows = np.repeat(cv, 8, axis=1).ravel()
    cols = np.tile(cv, (1, 8)).ravel()
    K = sp.csr_matrix((Ke.reshape(ne, 64).ravel(), (rows, cols)), shape=(nv, nv))
    K.sum_duplicates()
    dirichlet = np.zeros(nv, dtype=bool) if dirichlet_vertices is None else np.asarray(dirichlet_vertices, bool)
    keep = sp.diags((~dirichlet).astype(float))
    K = (keep @ K @ keep + sp.diags(dirichlet.astype(float))).tocsr()
    K.eliminate_zeros()
    return CoarseSystem(matrix=K, free=np.flatnonzero(~dirichlet), dirichlet=dirichlet)


class DirectSolve:
    def __init__(self, A):
        self.lu = spla.splu(sp.csc_matrix(A))
        self.stats = {"solver": "direct", "size": A.shape[0], "nnz": int(A.nnz)}

    def __call__(self, b):
        return self.lu.solve(b)


class CoarseCorrection:
    """Restriction, coarse solve and prolongation."""

    def __init__(
        self,
        mesh: HexMesh,
        basis: GllBasis,
        maps: IndexMaps,
        kappa=1.0,
        c=0.0,
        mass_local: np.ndarray | None = None,
        solver: str = "auto",
        direct_threshold: int = DIRECT_THRESHOLD,
        amg_options: dict | None = None,
    ):
        from .geometry import compute_factors

        ne = mesh.num_elements
        self.maps = maps
        self.B = basis.coarse_vandermonde
        self.mass_local = compute_factors(mesh, basis).mass if mass_local is None else mass_local
        self.mass = gather(self.mass_local, maps)
        self.interior = (~maps.dirichlet_mask).astype(np.float64)
        self.cvert = mesh.elements[:, _B_CORNERS]
        self.nv = mesh.num_vertices
        kappa = per_element(kappa, ne, "kappa")
        c = per_element(c, ne, "c")
        self.system = assemble_coarse_matrix(mesh, kappa, c, maps.dirichlet_mask[maps.vertex_nodes])
        A = self.system.free_matrix
        if solver == "auto":
            solver = "direct" if A.shape[0] < direct_threshold else "amg"
        if solver == "direct":
            self.solve = DirectSolve(A)
        elif solver == "amg":
            self.solve = amg_setup(A, **{**AMG_DEFAULTS, **(amg_options or {})})
        else:
            raise ValueError(f"unknown coarse solver {solver!r}")
        self.solver = solver
        self.seconds = 0.0
        self.calls = 0

    @property
    def stats(self) -> dict:
        s = self.solve.stats if isinstance(self.solve, (AmgHierarchy, DirectSolve)) else {}
        return {"solver": self.solver, "coarse_unknowns": int(len(self.system.free)), **s}

    def restrict(self, r: np.ndarray) -> np.ndarray:
        """``R = C m^-1 r`` on all mesh vertices."""
        ne, p3 = self.mass_local.shape[0], self.B.shape[1]
        y = r / self.mass
        yl = (y[self.maps.l2g] * self.mass_local).reshape(ne, p3)
        Rl = yl @ self.B.T
        return np.bincount(self.cvert.ravel(), weights=Rl.ravel(), minlength=self.nv)

    def prolongate(self, Z: np.ndarray) -> np.ndarray:
        """``z = m^-1 C^T Z``."""
        zl = (Z[self.cvert] @ self.B).reshape(self.mass_local.shape) * self.mass_local
        return gather(zl, self.maps) / self.mass

    def apply(self, r: np.ndarray) -> np.ndarray:
        t0 = time.perf_counter()
        R = self.restrict(np.asarray(r, dtype=np.float64) * self.interior)
        Z = np.zeros(self.nv)
        Z[self.system.free] = self.solve(R[self.system.free])
        z = self.prolongate(Z) * self.interior
        self.calls += 1
        self.seconds += time.perf_counter() - t0
        return z

    __call__ = apply


class TwoScale:
    """``P = P^c + P^f``; the coarse part may run on a second thread."""

    def __init__(self, coarse=None, fine=None, concurrent: bool = False):
        if coarse is None and fine is None:
            raise ValueError("need at least one of coarse/fine")
        self.coarse, self.fine = coarse, fine
        self.concurrent = concurrent
        self._pool = ThreadPoolExecutor(1) if concurrent and coarse is not None and fine is not None else None

    def apply(self, r: np.ndarray) -> np.ndarray:
        if self.coarse is None:
            return self.fine(r)
        if self.fine is None:
            return self.coarse(r)
        if self._pool is not None:
            fut = self._pool.submit(self.coarse, r)
            zf = self.fine(r)
            zc = fut.result()
        else:
            zc = self.coarse(r)
            zf = self.fine(r)
        return zc + zf

    __call__ = apply

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None
