"""Matrix-free SEM residual ``r = A u`` for ``c u - div(kappa grad u)``."""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np

from . import counters as cm
from .geometry import compute_factors, shape_gradients, weighted_metric
from .gll import GllBasis
from .mesh import HexMesh, IndexMaps, gather

VARIANTS = ("stored", "on_the_fly")


def contract(mat: np.ndarray, arr: np.ndarray, axis: int) -> np.ndarray:
    """``out[..., i, ...] = sum_m mat[i, m] arr[..., m, ...]`` along local axis 0, 1 or 2.

    ``arr`` is (E, p, p, p).
    """
    E, p = arr.shape[0], arr.shape[1]
    if axis == 0:
        return np.matmul(mat, arr.reshape(E, p, p * p)).reshape(arr.shape)
    if axis == 1:
        return np.matmul(mat, arr.reshape(E * p, p, p)).reshape(arr.shape)
    return np.matmul(arr, mat.T)


def per_element(values, num_elements: int, name: str) -> np.ndarray:
    out = np.broadcast_to(np.asarray(values, dtype=np.float64), (num_elements,)).copy()
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} must be finite")
    return out


class SemOperator:
    """Masked SPD operator of the GLL-quadrature Galerkin problem.

    ``kappa`` and ``c`` are per-element constants. Dirichlet nodes are
    handled by symmetric masking: their rows and columns are zeroed and
    the diagonal set to one.

    ``variant="stored"`` keeps seven words per GLL node (six mass-weighted
    metric entries and ``c * m``); ``"on_the_fly"`` recomputes them from the
    corner coordinates on every application.
    """

    def __init__(
        self,
        mesh: HexMesh,
        basis: GllBasis,
        maps: IndexMaps,
        kappa=1.0,
        c=0.0,
        variant: str = "stored",
        word_size: int = 8,
        dtype=np.float64,
        workers: int = 1,
        chunk_size: int = 4096,
        factors=None,
    ):
        if variant not in VARIANTS:
            raise ValueError(f"unknown operator variant {variant!r}")
        if maps.order != basis.order:
            raise ValueError("index maps and basis have different orders")
        if word_size not in (4, 8):
            raise ValueError("word size must be 4 or 8 bytes")
        ne = mesh.num_elements
        self.mesh, self.basis, self.maps = mesh, basis, maps
        self.kappa = per_element(kappa, ne, "kappa")
        self.c = per_element(c, ne, "c")
        if np.any(self.kappa < 0) or np.any(self.c < 0):
            raise ValueError("kappa and c must be non-negative")
        self.variant = variant
        self.word_size = word_size
        self.dtype = np.dtype(dtype)
        self.workers = max(1, int(workers))
        self.chunk_size = max(1, int(chunk_size))
        self.tally = cm.Tally()

        self.factors = factors if factors is not None else compute_factors(mesh, basis)
        self.interior = (~maps.dirichlet_mask).astype(np.float64)
        self.diff = basis.diff.astype(self.dtype)
        self.deriv = basis.deriv.astype(self.dtype)
        self._w3 = basis.weights3d()
        self._dN = shape_gradients(basis)
        if variant == "stored":
            wg = self.factors.metric * self.factors.mass[None]
            self._wg = wg.astype(self.dtype)
            self._cm = (self.c[:, None, None, None] * self.factors.mass).astype(self.dtype)

    # ------------------------------------------------------------------
    @property
    def shape(self):
        return (self.maps.n_global, self.maps.n_global)

    @property
    def lumped_mass(self) -> np.ndarray:
        return gather(self.factors.mass, self.maps)

    def _factors_for(self, sl: slice, tally: Optional[cm.Tally]):
        if self.variant == "stored":
            return self._wg[:, sl], self._cm[sl]
        X = self.mesh.vertices[self.mesh.elements[sl]]
        wg, mass = weighted_metric(X, self._dN, self._w3, counter=tally)
        cmass = self.c[sl, None, None, None] * mass
        if tally is not None:
            tally.add_geometry(cmass.size)
        return wg.astype(self.dtype), cmass.astype(self.dtype)

    def local_residual(self, u_local: np.ndarray, sl: slice, tally: Optional[cm.Tally] = None) -> np.ndarray:
        """Element residuals for elements ``sl``: derivatives, fluxes, transposed contraction."""
        E, p = u_local.shape[0], u_local.shape[1]
        npts = E * p**3
        wg, cmass = self._factors_for(sl, tally)
        u_local = u_local.astype(self.dtype, copy=False)

        ur = contract(self.diff, u_local, 0)
        us = contract(self.diff, u_local, 1)
        ut = contract(self.diff, u_local, 2)
        fa = wg[0] * ur + wg[1] * us + wg[2] * ut
        fb = wg[1] * ur + wg[3] * us + wg[4] * ut
        fc = wg[2] * ur + wg[4] * us + wg[5] * ut
        acc = contract(self.deriv, fa, 0)
        acc += contract(self.deriv, fb, 1)
        acc += contract(self.deriv, fc, 2)
        kap = self.kappa[sl, None, None, None].astype(self.dtype)
        r = kap * acc + cmass * u_local

        if tally is not None:
            tally.add_contraction(3 * npts, p)  # gradients
            tally.add_pointwise(15 * npts)  # fluxes
            tally.add_contraction(3 * npts, p)  # transposed chain
            tally.add_pointwise(3 * npts)  # kappa * acc + (c m) u
            per_node = 10 if self.variant == "stored" else 3
            tally.add_words(E * (per_node * p**3 + p**2 + 2))
            if self.variant == "on_the_fly":
                tally.add_words(E * 32)  # corner coordinates and connectivity
        return r

    def _chunks(self):
        ne = self.mesh.num_elements
        return [slice(s, min(s + self.chunk_size, ne)) for s in range(0, ne, self.chunk_size)]

    def apply_unmasked(self, u: np.ndarray, count: bool = True) -> np.ndarray:
        """``A u`` without boundary masking (natural Neumann everywhere)."""
        t0 = time.perf_counter()
        u = np.asarray(u, dtype=np.float64)
        if u.shape != (self.maps.n_global,):
            raise ValueError(f"expected vector of length {self.maps.n_global}, got {u.shape}")
        chunks = self._chunks()
        local = np.empty(self.maps.l2g.shape, dtype=np.float64)
        tallies = [cm.Tally() if count else None for _ in chunks]

        def run(item):
            sl, tally = item
            local[sl] = self.local_residual(u[self.maps.l2g[sl]], sl, tally)

        if self.workers > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                list(pool.map(run, zip(chunks, tallies)))
        else:
            for item in zip(chunks, tallies):
                run(item)
        r = gather(local, self.maps)
        if count:
            for t in tallies:
                self.tally.madds += t.madds
                self.tally.pointwise += t.pointwise
                self.tally.geometry += t.geometry
                self.tally.words += t.words
            self.tally.calls += 1
            self.tally.seconds += time.perf_counter() - t0
        return r

    def apply(self, u: np.ndarray) -> np.ndarray:
        """Masked action: identity on Dirichlet nodes, ``A`` on the rest."""
        u = np.asarray(u, dtype=np.float64)
        r = self.apply_unmasked(u * self.interior)
        r *= self.interior
        r += u * self.maps.dirichlet_mask
        return r

    __call__ = apply

    def counters_report(self) -> cm.KernelCounters:
        ne, n, t = self.mesh.num_elements, self.basis.order, self.tally
        geo = self.variant == "on_the_fly"
        return cm.KernelCounters(
            kernel="residual",
            variant=self.variant,
            n=n,
            N_E=ne,
            calls=t.calls,
            word_size=self.word_size,
            flops_model=t.calls * cm.residual_flops(ne, n),
            flops_measured=2 * t.madds + t.pointwise,
            bytes_model=t.calls * self.word_size * cm.residual_words(ne, n, self.variant),
            bytes_measured=self.word_size * t.words,
            wall_seconds=t.seconds,
            includes_geometry_flops=geo,
            geometry_flops_model=t.calls * cm.geometry_flops(ne, n) if geo else 0,
            geometry_flops_measured=t.geometry,
        )


def lumped_mass(mesh: HexMesh, basis: GllBasis, maps: IndexMaps, factors=None) -> np.ndarray:
    """Global lumped mass ``m_N``: sum of the local weighted masses."""
    factors = factors if factors is not None else compute_factors(mesh, basis)
    return gather(factors.mass, maps)


def load_vector(maps: IndexMaps, mass_local: np.ndarray, source_local) -> np.ndarray:
    """GLL-quadrature load ``b_N = sum m_ijk;e s_ijk;e``, Dirichlet rows zeroed."""
    s = np.broadcast_to(np.asarray(source_local, dtype=np.float64), mass_local.shape)
    b = gather(mass_local * s, maps)
    b[maps.dirichlet_mask] = 0.0
    return b
