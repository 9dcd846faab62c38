"""Unstructured all-hex meshes, GLL numbering and gather/scatter.

Element corners are stored in tensor order: local corner ``a + 2*b + 4*c``
sits at reference position ``(2a-1, 2b-1, 2c-1)``. Local GLL arrays are
indexed ``[e, i, j, k]`` with ``i`` running along xi. Boundary faces are
stored as quads in cyclic order together with an integer physical tag.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

SENTINEL = -1

# generated boxes tag their sides like this
TAG_NAMES = {1: "xmin", 2: "xmax", 3: "ymin", 4: "ymax", 5: "zmin", 6: "zmax"}

FAMILIES = ("uniform", "distorted_domain", "distorted_elements")


class MeshError(ValueError):
    pass


def corner(a: int, b: int, c: int) -> int:
    return a + 2 * b + 4 * c


def _bits(v: int) -> tuple[int, int, int]:
    return v & 1, (v >> 1) & 1, (v >> 2) & 1


# local faces: index 2*axis + side
LOCAL_FACES = [(axis, side) for axis in range(3) for side in range(2)]


def _face_corners(axis: int, side: int) -> list[int]:
    """Corners of a local face in cyclic order over its two tangential axes."""
    t1, t2 = [d for d in range(3) if d != axis]
    out = []
    for u, v in ((0, 0), (1, 0), (1, 1), (0, 1)):
        bits = [0, 0, 0]
        bits[axis], bits[t1], bits[t2] = side, u, v
        out.append(corner(*bits))
    return out


FACE_CORNERS = np.array([_face_corners(a, s) for a, s in LOCAL_FACES])

# local edges: along axis d, the other two bits fixed
LOCAL_EDGES = []
for _axis in range(3):
    _others = [d for d in range(3) if d != _axis]
    for _u in range(2):
        for _v in range(2):
            _lo = [0, 0, 0]
            _lo[_others[0]], _lo[_others[1]] = _u, _v
            _hi = list(_lo)
            _hi[_axis] = 1
            LOCAL_EDGES.append((_axis, corner(*_lo), corner(*_hi)))


@dataclass
class HexMesh:
    """Conforming all-hex mesh.

    ``reference_vertices`` and ``warp`` are only set for generated meshes:
    refinement then places new vertices at ``warp(reference midpoint)`` so
    refined sequences are nested in the warped geometry.
    """

    vertices: np.ndarray
    elements: np.ndarray
    boundary_faces: np.ndarray = field(default_factory=lambda: np.zeros((0, 4), np.int64))
    boundary_tags: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    reference_vertices: Optional[np.ndarray] = None
    warp: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.elements = np.ascontiguousarray(self.elements, dtype=np.int64)
        self.boundary_faces = np.asarray(self.boundary_faces, dtype=np.int64).reshape(-1, 4)
        self.boundary_tags = np.asarray(self.boundary_tags, dtype=np.int64).reshape(-1)
        if self.elements.ndim != 2 or self.elements.shape[1] != 8:
            raise MeshError("elements must be an (N_E, 8) array")
        if len(self.boundary_faces) != len(self.boundary_tags):
            raise MeshError("one tag per boundary face required")
        if self.elements.size and (self.elements.min() < 0 or self.elements.max() >= len(self.vertices)):
            raise MeshError("element references a missing vertex")

    @property
    def num_elements(self) -> int:
        return len(self.elements)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    def element_vertices(self) -> np.ndarray:
        """Corner coordinates as ``[e, a, b, c, xyz]``."""
        x = self.vertices[self.elements].reshape(-1, 2, 2, 2, 3)
        return x.transpose(0, 3, 2, 1, 4)


# ---------------------------------------------------------------------------
# topology


@dataclass
class Topology:
    edges: np.ndarray  # (NEd, 2) sorted vertex pairs
    element_edges: np.ndarray  # (NE, 12)
    faces: np.ndarray  # (NF, 4) sorted vertex ids
    element_faces: np.ndarray  # (NE, 6)
    face_elements: np.ndarray  # (NF, 2, 2) (element, local face); -1 if absent


def build_topology(mesh: HexMesh) -> Topology:
    el = mesh.elements
    ne = len(el)
    nv = mesh.num_vertices

    pairs = np.stack([el[:, [lo, hi]] for _, lo, hi in LOCAL_EDGES], axis=1)  # (NE, 12, 2)
    spairs = np.sort(pairs, axis=2)
    codes = spairs[..., 0] * nv + spairs[..., 1]
    ucodes, einv = np.unique(codes.ravel(), return_inverse=True)
    edges = np.stack([ucodes // nv, ucodes % nv], axis=1)
    if np.any(edges[:, 0] == edges[:, 1]):
        raise MeshError("degenerate element edge")

    quads = el[:, FACE_CORNERS]  # (NE, 6, 4)
    squads = np.sort(quads, axis=2).reshape(-1, 4)
    faces, finv, fcount = np.unique(squads, axis=0, return_inverse=True, return_counts=True)
    finv = finv.reshape(-1)
    if np.any(fcount > 2):
        bad = np.flatnonzero(fcount > 2)[0]
        raise MeshError(f"non-conforming mesh: face {faces[bad].tolist()} shared by {fcount[bad]} elements")

    face_elements = np.full((len(faces), 2, 2), -1, dtype=np.int64)
    owner = np.repeat(np.arange(ne), 6)
    lface = np.tile(np.arange(6), ne)
    order = np.argsort(finv, kind="stable")
    sorted_faces = finv[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = sorted_faces[1:] != sorted_faces[:-1]
    slot = np.where(first, 0, 1)
    face_elements[sorted_faces, slot, 0] = owner[order]
    face_elements[sorted_faces, slot, 1] = lface[order]

    # shared faces must agree on the diagonal through their smallest vertex
    shared = np.flatnonzero(fcount == 2)
    if len(shared):
        diag = []
        for side in range(2):
            e = face_elements[shared, side, 0]
            f = face_elements[shared, side, 1]
            q = quads[e, f]
            o = np.argmin(q, axis=1)
            diag.append(q[np.arange(len(q)), (o + 2) % 4])
        if np.any(diag[0] != diag[1]):
            raise MeshError("non-conforming mesh: shared face with mismatched corners")

    return Topology(
        edges=edges,
        element_edges=einv.reshape(ne, 12),
        faces=faces,
        element_faces=finv.reshape(ne, 6),
        face_elements=face_elements,
    )


def boundary_faces_from_topology(mesh: HexMesh, topo: Topology | None = None) -> np.ndarray:
    """Cyclic quads of faces owned by a single element."""
    topo = topo or build_topology(mesh)
    single = topo.face_elements[:, 1, 0] < 0
    e = topo.face_elements[single, 0, 0]
    f = topo.face_elements[single, 0, 1]
    return mesh.elements[e[:, None], FACE_CORNERS[f]]


def _face_lookup(faces: np.ndarray) -> dict:
    return {tuple(r): i for i, r in enumerate(faces.tolist())}


# ---------------------------------------------------------------------------
# generators


def _smooth_warp(x: np.ndarray, lengths, amplitude: float) -> np.ndarray:
    s = x / np.asarray(lengths)
    out = s.copy()
    for d in range(3):
        d1, d2 = (d + 1) % 3, (d + 2) % 3
        out[:, d] += amplitude * np.sin(np.pi * s[:, d1]) * np.sin(np.pi * s[:, d2])
    return out * np.asarray(lengths)


@dataclass(frozen=True)
class BoxWarp:
    """Warp of a box: optional lattice perturbation, then a smooth sine warp.

    The perturbation is defined per vertex of a ``shape`` lattice and
    extended trilinearly, so it can be evaluated at refined vertices too.
    """

    shape: tuple
    lengths: tuple
    amplitude: float = 0.1
    perturbation: Optional[np.ndarray] = None  # (kx+1, ky+1, kz+1, 3)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.perturbation is not None:
            x = x + self._interp(x)
        return _smooth_warp(x, self.lengths, self.amplitude)

    def _interp(self, x: np.ndarray) -> np.ndarray:
        k = np.asarray(self.shape)
        s = x / np.asarray(self.lengths) * k
        cell = np.clip(np.floor(s).astype(np.int64), 0, k - 1)
        frac = s - cell
        out = np.zeros_like(x)
        for c in range(8):
            a, b, cc = _bits(c)
            w = (
                (frac[:, 0] if a else 1 - frac[:, 0])
                * (frac[:, 1] if b else 1 - frac[:, 1])
                * (frac[:, 2] if cc else 1 - frac[:, 2])
            )
            out += w[:, None] * self.perturbation[cell[:, 0] + a, cell[:, 1] + b, cell[:, 2] + cc]
        return out


def generate_box_mesh(
    shape,
    lengths=(1.0, 1.0, 1.0),
    family: str = "uniform",
    amplitude: float = 0.1,
    perturbation: float = 0.25,
    seed: int = 0,
    base: int = 8,
) -> HexMesh:
    """Structured ``kx*ky*kz`` hex mesh of a box, optionally warped.

    ``distorted_domain`` bends the box with a smooth sine warp of relative
    amplitude ``amplitude``; ``distorted_elements`` first moves every lattice
    vertex by a seeded uniform random offset of up to ``perturbation * h``
    (tangentially only on the boundary) and then applies the same warp.
    The offsets live on a lattice of ``base`` cells per direction (when the
    element count is a multiple of it) and are interpolated trilinearly, so
    ``16^3`` and ``32^3`` meshes refine the ``8^3`` one.
    """
    if family not in FAMILIES:
        raise MeshError(f"unknown mesh family {family!r}")
    kx, ky, kz = (int(v) for v in shape)
    if min(kx, ky, kz) < 1:
        raise MeshError("mesh needs at least one element per direction")
    lengths = tuple(float(v) for v in lengths)
    axes = [np.linspace(0.0, lengths[d], k + 1) for d, k in enumerate((kx, ky, kz))]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    lattice = np.stack([gx, gy, gz], axis=-1)  # [ix, iy, iz, xyz]
    ref = lattice.transpose(2, 1, 0, 3).reshape(-1, 3)  # x fastest

    def vid(ix, iy, iz):
        return ix + (kx + 1) * (iy + (ky + 1) * iz)

    ex, ey, ez = np.meshgrid(np.arange(kx), np.arange(ky), np.arange(kz), indexing="ij")
    ex, ey, ez = (a.transpose(2, 1, 0).ravel() for a in (ex, ey, ez))
    elements = np.stack([vid(ex + a, ey + b, ez + c) for c in range(2) for b in range(2) for a in range(2)], axis=1)

    warp = None
    if family != "uniform":
        pert, pshape = None, (kx, ky, kz)
        if family == "distorted_elements":
            rng = np.random.default_rng(seed)
            pshape = tuple(base if base and k % base == 0 else k for k in (kx, ky, kz))
            h = np.array(lengths) / np.array(pshape)
            pert = rng.uniform(-perturbation, perturbation, size=tuple(k + 1 for k in pshape) + (3,)) * h
            for d, k in enumerate(pshape):
                idx = [slice(None)] * 3
                for end in (0, k):
                    idx[d] = end
                    pert[tuple(idx) + (d,)] = 0.0
        warp = BoxWarp(pshape, lengths, amplitude, pert)

    mesh = HexMesh(ref.copy(), elements, reference_vertices=ref, warp=warp)
    if warp is not None:
        mesh.vertices = warp(ref)
    faces = boundary_faces_from_topology(mesh)
    mesh.boundary_faces = faces
    mesh.boundary_tags = _box_side_tags(ref, faces, lengths)
    check_jacobians(mesh)
    return mesh


def _box_side_tags(ref, faces, lengths) -> np.ndarray:
    tags = np.zeros(len(faces), dtype=np.int64)
    pts = ref[faces]  # (F, 4, 3)
    for d in range(3):
        for side, value in enumerate((0.0, lengths[d])):
            on = np.all(np.abs(pts[:, :, d] - value) < 1e-12 * max(1.0, lengths[d]), axis=1)
            tags[on] = 2 * d + side + 1
    return tags


def generate_cube_mesh(k: int, family: str = "uniform", **kwargs) -> HexMesh:
    """``k^3`` elements on the unit cube (possibly warped, see generate_box_mesh)."""
    if k < 1:
        raise MeshError("k must be >= 1")
    return generate_box_mesh((k, k, k), (1.0, 1.0, 1.0), family, **kwargs)


def check_jacobians(mesh: HexMesh, order: int = 3) -> None:
    """Raise MeshError naming the first element with det J <= 0 at a GLL node."""
    from .geometry import jacobians_at_gll

    _, det = jacobians_at_gll(mesh, order)
    bad = np.flatnonzero(np.min(det.reshape(len(det), -1), axis=1) <= 0.0)
    if len(bad):
        raise MeshError(f"element {bad[0]} has a non-positive Jacobian determinant")


def refine_uniform(mesh: HexMesh) -> HexMesh:
    """Split every hex into eight through its edge, face and cell midpoints."""
    topo = build_topology(mesh)
    nv = mesh.num_vertices
    ned, nf, ne = len(topo.edges), len(topo.faces), mesh.num_elements
    edge_base, face_base, cell_base = nv, nv + ned, nv + ned + nf

    base = mesh.reference_vertices if mesh.reference_vertices is not None else mesh.vertices
    edge_mid = base[topo.edges].mean(axis=1)
    face_mid = base[topo.faces].mean(axis=1)
    cell_mid = base[mesh.elements].mean(axis=1)
    new_base = np.concatenate([base, edge_mid, face_mid, cell_mid])

    # per-element 3x3x3 lattice of vertex ids, [e, a, b, c]
    lat = np.empty((ne, 3, 3, 3), dtype=np.int64)
    for v in range(8):
        a, b, c = _bits(v)
        lat[:, 2 * a, 2 * b, 2 * c] = mesh.elements[:, v]
    for le, (axis, lo, _) in enumerate(LOCAL_EDGES):
        pos = [2 * x for x in _bits(lo)]
        pos[axis] = 1
        lat[:, pos[0], pos[1], pos[2]] = edge_base + topo.element_edges[:, le]
    for lf, (axis, side) in enumerate(LOCAL_FACES):
        pos = [1, 1, 1]
        pos[axis] = 2 * side
        lat[:, pos[0], pos[1], pos[2]] = face_base + topo.element_faces[:, lf]
    lat[:, 1, 1, 1] = cell_base + np.arange(ne)

    children = []
    for c in range(2):
        for b in range(2):
            for a in range(2):
                children.append(
                    np.stack(
                        [lat[:, a + x, b + y, c + z] for z in range(2) for y in range(2) for x in range(2)],
                        axis=1,
                    )
                )
    elements = np.stack(children, axis=1).reshape(-1, 8)

    # boundary quads split in four, tags inherited
    edge_code = topo.edges[:, 0] * nv + topo.edges[:, 1]
    face_of = _face_lookup(topo.faces)
    new_faces, new_tags = [], []
    for quad, tag in zip(mesh.boundary_faces.tolist(), mesh.boundary_tags.tolist()):
        mids = []
        for i in range(4):
            u, v = sorted((quad[i], quad[(i + 1) % 4]))
            mids.append(edge_base + int(np.searchsorted(edge_code, u * nv + v)))
        fc = face_base + face_of[tuple(sorted(quad))]
        c0, c1, c2, c3 = quad
        m01, m12, m23, m30 = mids
        new_faces += [[c0, m01, fc, m30], [m01, c1, m12, fc], [fc, m12, c2, m23], [m30, fc, m23, c3]]
        new_tags += [tag] * 4

    if mesh.reference_vertices is not None:
        vertices = mesh.warp(new_base) if mesh.warp is not None else new_base.copy()
        ref = new_base
    else:
        vertices, ref = new_base, None
    out = HexMesh(vertices, elements, np.array(new_faces, dtype=np.int64).reshape(-1, 4),
                  np.array(new_tags, dtype=np.int64), reference_vertices=ref, warp=mesh.warp)
    check_jacobians(out)
    return out


# ---------------------------------------------------------------------------
# GLL numbering


@dataclass
class IndexMaps:
    """Local/global GLL numbering for one mesh and polynomial order.

    ``l2g[e, i, j, k]`` is the global node of local node (i, j, k) of element
    e. ``sub_l2g[s, i+1, j+1, k+1]`` for i, j, k in [-1, n+1] is the global
    node of the overlapped subdomain slot, or ``SENTINEL`` when the slot
    has no face-neighbor donor.
    """

    order: int
    n_global: int
    l2g: np.ndarray
    multiplicity: np.ndarray
    sub_l2g: np.ndarray
    dirichlet_mask: np.ndarray
    face_neighbors: np.ndarray  # (NE, 6, 2): neighbor element and its local face, -1 on boundary
    face_tags: np.ndarray  # (NE, 6): boundary tag, -1 for interior faces
    vertex_nodes: np.ndarray  # global node of every mesh vertex
    _g2l_offsets: np.ndarray = field(repr=False)
    _g2l_local: np.ndarray = field(repr=False)

    @property
    def num_elements(self) -> int:
        return self.l2g.shape[0]

    def g2l(self, node: int) -> list[tuple[int, int, int, int]]:
        """All local copies ``(i, j, k, e)`` of a global node."""
        p = self.order + 1
        lo, hi = self._g2l_offsets[node], self._g2l_offsets[node + 1]
        out = []
        for flat in self._g2l_local[lo:hi].tolist():
            e, rem = divmod(flat, p**3)
            i, rem = divmod(rem, p * p)
            j, k = divmod(rem, p)
            out.append((i, j, k, e))
        return out

    def interior_mask(self) -> np.ndarray:
        return ~self.dirichlet_mask


def _axis_slice(arr: np.ndarray, axis: int, index: int) -> np.ndarray:
    """``arr[:, ..., index on axis, ...]`` for a (M, p, p, p) array, flattened to (M, p*p)."""
    sl = [slice(None)] * 4
    sl[axis + 1] = index
    return arr[tuple(sl)].reshape(arr.shape[0], -1)


def build_index_maps(mesh: HexMesh, n: int, dirichlet_tags="all", topology: Topology | None = None) -> IndexMaps:
    """Global GLL numbering from mesh topology.

    Vertices come first (numbered as mesh vertices), then edge interiors
    ordered from the smaller to the larger vertex id, then face interiors in
    a frame anchored at the face's smallest vertex, then element interiors.
    ``dirichlet_tags`` is ``"all"``, ``None``/empty (all Neumann) or a set of
    boundary tags.
    """
    if n < 1:
        raise ValueError("order must be >= 1")
    topo = topology or build_topology(mesh)
    el = mesh.elements
    ne, nv = len(el), mesh.num_vertices
    p = n + 1
    ned, nf = len(topo.edges), len(topo.faces)
    edge_base = nv
    face_base = nv + ned * (n - 1)
    cell_base = face_base + nf * (n - 1) ** 2
    n_global = cell_base + ne * (n - 1) ** 3

    used = np.zeros(nv, dtype=bool)
    used[el.ravel()] = True
    if not used.all():
        raise MeshError("mesh has vertices not referenced by any element")

    l2g = np.full((ne, p, p, p), -1, dtype=np.int64)
    for v in range(8):
        a, b, c = _bits(v)
        l2g[:, a * n, b * n, c * n] = el[:, v]

    if n >= 2:
        t = np.arange(1, n)
        for le, (axis, lo, hi) in enumerate(LOCAL_EDGES):
            forward = el[:, lo] < el[:, hi]
            idx = np.where(forward[:, None], t[None, :] - 1, n - 1 - t[None, :])
            ids = edge_base + topo.element_edges[:, le][:, None] * (n - 1) + idx
            pos = [x * n for x in _bits(lo)]
            sl = [slice(None), pos[0], pos[1], pos[2]]
            sl[axis + 1] = slice(1, n)
            l2g[tuple(sl)] = ids

        a_idx, b_idx = np.meshgrid(t, t, indexing="ij")  # tangential positions
        for lf, (axis, side) in enumerate(LOCAL_FACES):
            cq = el[:, FACE_CORNERS[lf]]  # cyclic: (0,0),(1,0),(1,1),(0,1)
            o = np.argmin(cq, axis=1)
            uv = np.array([(0, 0), (1, 0), (1, 1), (0, 1)])
            ou, ov = uv[o, 0], uv[o, 1]
            nb_u = cq[np.arange(ne), (o + np.where(ou == ov, 1, 3)) % 4]  # neighbor across u
            nb_v = cq[np.arange(ne), (o + np.where(ou == ov, 3, 1)) % 4]
            du = np.where(ou[:, None, None] == 0, a_idx[None], n - a_idx[None])
            dv = np.where(ov[:, None, None] == 0, b_idx[None], n - b_idx[None])
            swap = (nb_v < nb_u)[:, None, None]
            d1 = np.where(swap, dv, du)
            d2 = np.where(swap, du, dv)
            ids = face_base + topo.element_faces[:, lf][:, None, None] * (n - 1) ** 2 + (d1 - 1) * (n - 1) + (d2 - 1)
            sl = [slice(None), slice(1, n), slice(1, n), slice(1, n)]
            sl[axis + 1] = side * n
            l2g[tuple(sl)] = ids

        inner = np.arange((n - 1) ** 3).reshape(n - 1, n - 1, n - 1)
        l2g[:, 1:n, 1:n, 1:n] = cell_base + np.arange(ne)[:, None, None, None] * (n - 1) ** 3 + inner[None]

    assert l2g.min() >= 0
    multiplicity = np.bincount(l2g.ravel(), minlength=n_global)
    if np.any(multiplicity == 0):
        raise MeshError("global numbering has unreferenced nodes")

    # face neighbours and boundary tags
    face_neighbors = np.full((ne, 6, 2), -1, dtype=np.int64)
    fe = topo.face_elements
    shared = fe[:, 1, 0] >= 0
    for s0, s1 in ((0, 1), (1, 0)):
        e0, f0 = fe[shared, s0, 0], fe[shared, s0, 1]
        face_neighbors[e0, f0, 0] = fe[shared, s1, 0]
        face_neighbors[e0, f0, 1] = fe[shared, s1, 1]

    face_tags = np.full((ne, 6), -1, dtype=np.int64)
    tag_of = {tuple(sorted(q)): t for q, t in zip(mesh.boundary_faces.tolist(), mesh.boundary_tags.tolist())}
    bnd = np.flatnonzero(~shared)
    for fid in bnd.tolist():
        e, f = fe[fid, 0]
        face_tags[e, f] = tag_of.get(tuple(topo.faces[fid].tolist()), 0)

    dirichlet_mask = np.zeros(n_global, dtype=bool)
    for lf, (axis, side) in enumerate(LOCAL_FACES):
        tags = face_tags[:, lf]
        if dirichlet_tags == "all":
            sel = tags >= 0
        elif not dirichlet_tags:
            sel = np.zeros(ne, dtype=bool)
        else:
            sel = np.isin(tags, np.fromiter(dirichlet_tags, dtype=np.int64))
        if sel.any():
            dirichlet_mask[_axis_slice(l2g[sel], axis, side * n).ravel()] = True

    sub_l2g = _build_subdomain_maps(l2g, face_neighbors, n)

    order = np.argsort(l2g.ravel(), kind="stable")
    offsets = np.concatenate([[0], np.cumsum(multiplicity)])
    return IndexMaps(
        order=n,
        n_global=n_global,
        l2g=l2g,
        multiplicity=multiplicity,
        sub_l2g=sub_l2g,
        dirichlet_mask=dirichlet_mask,
        face_neighbors=face_neighbors,
        face_tags=face_tags,
        vertex_nodes=np.arange(nv),
        _g2l_offsets=offsets,
        _g2l_local=order,
    )


def _build_subdomain_maps(l2g: np.ndarray, face_neighbors: np.ndarray, n: int) -> np.ndarray:
    """Extended (n+3)^3 numbering with one overlap layer across each face."""
    ne, p = l2g.shape[0], n + 1
    q = n + 3
    sub = np.full((ne, q, q, q), SENTINEL, dtype=np.int64)
    sub[:, 1 : n + 2, 1 : n + 2, 1 : n + 2] = l2g
    for lf, (axis, side) in enumerate(LOCAL_FACES):
        nb = face_neighbors[:, lf, 0]
        has = np.flatnonzero(nb >= 0)
        if len(has) == 0:
            continue
        mine = _axis_slice(l2g[has], axis, side * n)  # (M, p*p)
        donors = np.empty_like(mine)
        nb_e, nb_f = nb[has], face_neighbors[has, lf, 1]
        for f2, (axis2, side2) in enumerate(LOCAL_FACES):
            rows = np.flatnonzero(nb_f == f2)
            if len(rows) == 0:
                continue
            theirs = _axis_slice(l2g[nb_e[rows]], axis2, side2 * n)
            inner = _axis_slice(l2g[nb_e[rows]], axis2, 1 if side2 == 0 else n - 1)
            sa = np.argsort(mine[rows], axis=1)
            sb = np.argsort(theirs, axis=1)
            r = np.arange(len(rows))[:, None]
            if np.any(mine[rows][r, sa] != theirs[r, sb]):
                raise MeshError("non-conforming mesh: neighbouring faces carry different GLL nodes")
            perm = np.empty_like(sa)
            perm[r, sa] = sb
            donors[rows] = inner[r, perm]
        layer = donors.reshape(len(has), p, p)
        sl = [has, slice(1, n + 2), slice(1, n + 2), slice(1, n + 2)]
        sl[axis + 1] = 0 if side == 0 else q - 1
        sub[tuple(sl)] = layer
    return sub


# ---------------------------------------------------------------------------
# gather / scatter


def scatter(u_global: np.ndarray, maps: IndexMaps) -> np.ndarray:
    """Local copies ``u[e, i, j, k] = u_global[l2g[e, i, j, k]]``."""
    if u_global.shape[0] != maps.n_global:
        raise ValueError(f"expected global vector of length {maps.n_global}, got {u_global.shape[0]}")
    return u_global[maps.l2g]


def gather(r_local: np.ndarray, maps: IndexMaps) -> np.ndarray:
    """Sum of local copies into global slots, in fixed element order."""
    if r_local.shape != maps.l2g.shape:
        raise ValueError(f"expected local array of shape {maps.l2g.shape}, got {r_local.shape}")
    return np.bincount(maps.l2g.ravel(), weights=r_local.ravel(), minlength=maps.n_global)


def gather_indexed(values: np.ndarray, index: np.ndarray, size: int) -> np.ndarray:
    """Sum ``values`` into ``size`` slots by ``index``, skipping SENTINEL slots."""
    idx = index.ravel()
    keep = idx != SENTINEL
    return np.bincount(idx[keep], weights=values.ravel()[keep], minlength=size)


def scatter_indexed(u: np.ndarray, index: np.ndarray) -> np.ndarray:
    """``u[index]`` with zeros at SENTINEL slots."""
    ext = np.append(u, 0.0)
    return ext[np.where(index == SENTINEL, len(u), index)]


def parse_dirichlet_tags(spec) -> Optional[object]:
    """Normalise a user boundary spec: 'all', 'none', or comma-separated tags/names."""
    if spec is None:
        return None
    if isinstance(spec, str):
        s = spec.strip().lower()
        if s == "all":
            return "all"
        if s in ("", "none"):
            return None
        names = {v: k for k, v in TAG_NAMES.items()}
        return {names[t] if t in names else int(t) for t in s.split(",")}
    if isinstance(spec, Iterable):
        return set(int(t) for t in spec)
    raise ValueError(f"bad boundary specification {spec!r}")
