"""Operation and traffic accounting for the two dominant kernels.

Closed-form models live next to an instrumented tally that the kernels
update from the shapes they actually execute. Conventions:

* residual kernel: a multiply-add inside a tensor contraction counts as
  two flops; the three transposed contractions form one accumulation chain.
* subdomain kernel: a multiply-add inside a tensor transform counts as one
  operation, the convention under which its model is written.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

GEOMETRY_FLOPS_PER_NODE = 242


def residual_flops(num_elements: int, n: int) -> int:
    p = n + 1
    return num_elements * (12 * p**4 + 18 * p**3)


def residual_words(num_elements: int, n: int, variant: str = "stored") -> int:
    p = n + 1
    per_node = 10 if variant == "stored" else 3
    return num_elements * (per_node * p**3 + p**2 + 2)


def geometry_flops(num_elements: int, n: int) -> int:
    return num_elements * GEOMETRY_FLOPS_PER_NODE * (n + 1) ** 3


def subdomain_flops(num_elements: int, n: int) -> int:
    q = n + 3
    return num_elements * (6 * q**4 + 15 * q**3)


def subdomain_words(num_elements: int, n: int) -> int:
    q = n + 3
    return num_elements * (3 * q**3 + 4 * q**2)


def intensity(flops: int, words: int, word_size: int = 4) -> float:
    """Operations per byte moved."""
    return flops / (words * word_size)


@dataclass
class Tally:
    """Running instrumented counts for one kernel."""

    madds: int = 0
    pointwise: int = 0
    geometry: int = 0
    words: int = 0
    calls: int = 0
    seconds: float = 0.0

    def add_contraction(self, outputs: int, length: int) -> None:
        self.madds += outputs * length

    def add_pointwise(self, count: int) -> None:
        self.pointwise += count

    def add_geometry(self, count: int) -> None:
        self.geometry += count

    def add_words(self, count: int) -> None:
        self.words += count

    def reset(self) -> None:
        self.madds = self.pointwise = self.geometry = self.words = self.calls = 0
        self.seconds = 0.0


@dataclass
class KernelCounters:
    kernel: str
    variant: str
    n: int
    N_E: int
    calls: int
    word_size: int
    flops_model: int
    flops_measured: int
    bytes_model: int
    bytes_measured: int
    wall_seconds: float
    includes_geometry_flops: bool = False
    geometry_flops_model: int = 0
    geometry_flops_measured: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @property
    def total_flops_model(self) -> int:
        return self.flops_model + (self.geometry_flops_model if self.includes_geometry_flops else 0)

    @property
    def intensity_model(self) -> float:
        return self.total_flops_model / self.bytes_model if self.bytes_model else float("nan")
