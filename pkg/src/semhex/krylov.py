"""Preconditioned conjugate gradients over abstract operator actions."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

log = logging.getLogger(__name__)


class IndefiniteOperatorError(ArithmeticError):
    pass


@dataclass
class PcgConfig:
    rel_tolerance: float = 1e-6
    max_iterations: int = 500
    record_history: bool = True

    def __post_init__(self):
        if not 0.0 < self.rel_tolerance < 1.0:
            raise ValueError("rel_tolerance must lie in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class PcgResult:
    u: np.ndarray
    iterations: int
    converged: bool
    residual_norms: list = field(default_factory=list)
    zr: list = field(default_factory=list)

    @property
    def status(self) -> str:
        return "converged" if self.converged else "max_iterations"

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "residual_norm", "zr"])
            for k, (rn, zr) in enumerate(zip(self.residual_norms, self.zr)):
                w.writerow([k, repr(float(rn)), repr(float(zr))])


def pcg(
    apply_A: Callable[[np.ndarray], np.ndarray],
    apply_P: Optional[Callable[[np.ndarray], np.ndarray]],
    b: np.ndarray,
    config: PcgConfig | None = None,
    x0: np.ndarray | None = None,
) -> PcgResult:
    """Solve ``A u = b`` by preconditioned CG.

    Starts from ``u = 0`` (or ``x0``) and stops once
    ``||r_k||_2 <= rel_tolerance * ||r_0||_2``. On hitting ``max_iterations``
    the last iterate is returned with ``converged=False``. Raises
    IndefiniteOperatorError if ``p.Ap <= 0`` or ``z.r <= 0``.
    """
    config = config or PcgConfig()
    apply_P = apply_P or (lambda r: r.copy())
    b = np.asarray(b, dtype=np.float64)
    if x0 is None:
        u = np.zeros_like(b)
        r = b.copy()
    else:
        u = np.array(x0, dtype=np.float64)
        r = b - apply_A(u)
    z = apply_P(r)
    p = z.copy()
    zr = float(np.dot(z, r))
    rnorm0 = float(np.sqrt(np.dot(r, r)))
    norms, zrs = [rnorm0], [zr]
    target = config.rel_tolerance * rnorm0
    if rnorm0 == 0.0:
        return PcgResult(u, 0, True, norms, zrs)
    if zr <= 0.0:
        raise IndefiniteOperatorError(f"preconditioner not positive definite: z.r = {zr:.3e}")

    for k in range(config.max_iterations):
        f = apply_A(p)
        pf = float(np.dot(p, f))
        if pf <= 0.0:
            raise IndefiniteOperatorError(f"operator not positive definite at iteration {k}: p.Ap = {pf:.3e}")
        alpha = zr / pf
        u += alpha * p
        r -= alpha * f
        rnorm = float(np.sqrt(np.dot(r, r)))
        log.debug("pcg it %d |r| %.3e", k + 1, rnorm)
        if rnorm <= target:
            if config.record_history:
                norms.append(rnorm)
                zrs.append(float("nan"))
            return PcgResult(u, k + 1, True, norms, zrs)
        z = apply_P(r)
        zr_new = float(np.dot(z, r))
        if config.record_history:
            norms.append(rnorm)
            zrs.append(zr_new)
        if zr_new <= 0.0:
            raise IndefiniteOperatorError(f"preconditioner not positive definite: z.r = {zr_new:.3e}")
        beta = zr_new / zr
        zr = zr_new
        p = z + beta * p
    return PcgResult(u, config.max_iterations, False, norms, zrs)
