"""Mesh and field files: Gmsh MSH 2.2 ASCII, a compact binary format, legacy VTK.

Binary layout (little endian)::

    8 bytes   magic b"SEMHEX01"
    3 x u64   num_vertices, num_elements, num_boundary_faces
    f64       vertices            (num_vertices, 3)
    u32       elements            (num_elements, 8), tensor corner order
    u32       boundary faces      (num_boundary_faces, 4)
    i32       boundary tags       (num_boundary_faces,)
"""
from __future__ import annotations

import io
import os
from itertools import product

import numpy as np

from .geometry import node_coordinates
from .gll import GllBasis
from .mesh import HexMesh, IndexMaps, MeshError, boundary_faces_from_topology

MAGIC = b"SEMHEX01"

# gmsh / VTK hexahedron corner i sits at our tensor corner _HEX_ORDER[i]; the permutation is an involution
_HEX_ORDER = np.array([0, 1, 3, 2, 4, 5, 7, 6])
GMSH_HEX, GMSH_QUAD = 5, 3
VTK_HEXAHEDRON = 12


# ---------------------------------------------------------------------------
# gmsh


def read_gmsh(path) -> HexMesh:
    """Read the hexahedra and tagged quadrilaterals of an MSH 2.x ASCII file.

    Quadrilaterals carry boundary tags (their first, physical tag); boundary
    faces of the hex mesh without a matching quadrilateral get tag 0.
    """
    with open(path, "r") as fh:
        lines = fh.read().split("\n")
    sections = {}
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        if line.startswith("$") and not line.startswith("$End"):
            name = line[1:]
            j = i + 1
            while j < len(lines) and lines[j].strip() != f"$End{name}":
                j += 1
            if j == len(lines):
                raise MeshError(f"unterminated section ${name}")
            sections[name] = lines[i + 1 : j]
            i = j
        i += 1
    if "MeshFormat" not in sections:
        raise MeshError("not a gmsh file: $MeshFormat missing")
    version, filetype = sections["MeshFormat"][0].split()[:2]
    if not version.startswith("2") or filetype != "0":
        raise MeshError(f"only MSH 2.x ASCII is supported (got version {version}, type {filetype})")
    for required in ("Nodes", "Elements"):
        if required not in sections:
            raise MeshError(f"${required} section missing")

    node_lines = sections["Nodes"]
    nn = int(node_lines[0])
    raw = np.loadtxt(io.StringIO("\n".join(node_lines[1 : nn + 1])), ndmin=2)
    ids = raw[:, 0].astype(np.int64)
    vertices = raw[:, 1:4]
    lookup = {int(v): k for k, v in enumerate(ids)}

    hexes, quads, qtags = [], [], []
    el_lines = sections["Elements"]
    for line in el_lines[1 : int(el_lines[0]) + 1]:
        f = [int(t) for t in line.split()]
        etype, ntags = f[1], f[2]
        nodes = f[3 + ntags :]
        try:
            local = [lookup[v] for v in nodes]
        except KeyError as exc:
            raise MeshError(f"element {f[0]} references unknown node {exc.args[0]}") from None
        if etype == GMSH_HEX:
            hexes.append(local)
        elif etype == GMSH_QUAD:
            quads.append(local)
            qtags.append(f[3] if ntags else 0)
    if not hexes:
        raise MeshError("no 8-node hexahedra in file")
    elements = np.array(hexes, dtype=np.int64)[:, _HEX_ORDER]

    # drop unreferenced nodes (points, geometry vertices) and renumber
    used = np.unique(elements)
    remap = -np.ones(len(vertices), dtype=np.int64)
    remap[used] = np.arange(len(used))
    mesh = HexMesh(vertices[used], remap[elements])
    faces = boundary_faces_from_topology(mesh)
    tags = np.zeros(len(faces), dtype=np.int64)
    if quads:
        key = {tuple(sorted(q)): t for q, t in zip(remap[np.array(quads)].tolist(), qtags)}
        for fi, face in enumerate(faces.tolist()):
            tags[fi] = key.get(tuple(sorted(face)), 0)
    mesh.boundary_faces, mesh.boundary_tags = faces, tags
    return mesh


def write_gmsh(mesh: HexMesh, path) -> None:
    """Write MSH 2.2 ASCII: nodes, hexahedra, and tagged boundary quadrilaterals."""
    out = io.StringIO()
    out.write("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n")
    out.write(f"$Nodes\n{mesh.num_vertices}\n")
    for k, (x, y, z) in enumerate(mesh.vertices.tolist()):
        out.write(f"{k + 1} {x!r} {y!r} {z!r}\n")
    out.write("$EndNodes\n")
    nb = len(mesh.boundary_faces)
    out.write(f"$Elements\n{nb + mesh.num_elements}\n")
    k = 1
    for face, tag in zip(mesh.boundary_faces.tolist(), mesh.boundary_tags.tolist()):
        out.write(f"{k} {GMSH_QUAD} 2 {tag} {tag} " + " ".join(str(v + 1) for v in face) + "\n")
        k += 1
    for el in mesh.elements[:, _HEX_ORDER].tolist():
        out.write(f"{k} {GMSH_HEX} 2 0 0 " + " ".join(str(v + 1) for v in el) + "\n")
        k += 1
    out.write("$EndElements\n")
    with open(path, "w") as fh:
        fh.write(out.getvalue())


# ---------------------------------------------------------------------------
# native binary


def write_binary(mesh: HexMesh, path) -> None:
    if mesh.num_vertices >= 2**32:
        raise MeshError("too many vertices for 32-bit connectivity")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.array([mesh.num_vertices, mesh.num_elements, len(mesh.boundary_faces)], "<u8").tobytes())
        fh.write(mesh.vertices.astype("<f8").tobytes())
        fh.write(mesh.elements.astype("<u4").tobytes())
        fh.write(mesh.boundary_faces.astype("<u4").tobytes())
        fh.write(mesh.boundary_tags.astype("<i4").tobytes())


def read_binary(path) -> HexMesh:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise MeshError("bad magic: not a semhex binary mesh")
    if len(data) < 32:
        raise MeshError("truncated header")
    nv, ne, nb = (int(v) for v in np.frombuffer(data, "<u8", 3, 8))
    expected = 32 + 24 * nv + 32 * ne + 20 * nb
    if len(data) != expected:
        raise MeshError(f"file size {len(data)} does not match header (expected {expected})")
    off = 32
    vertices = np.frombuffer(data, "<f8", 3 * nv, off).reshape(nv, 3)
    off += 24 * nv
    elements = np.frombuffer(data, "<u4", 8 * ne, off).reshape(ne, 8)
    off += 32 * ne
    faces = np.frombuffer(data, "<u4", 4 * nb, off).reshape(nb, 4)
    off += 16 * nb
    tags = np.frombuffer(data, "<i4", nb, off)
    return HexMesh(vertices.copy(), elements.astype(np.int64), faces.astype(np.int64), tags.astype(np.int64))


def read_mesh(path) -> HexMesh:
    """Dispatch on extension: ``.msh`` is gmsh, anything else the binary format."""
    if os.fspath(path).lower().endswith(".msh"):
        return read_gmsh(path)
    return read_binary(path)


def write_mesh(mesh: HexMesh, path) -> None:
    if os.fspath(path).lower().endswith(".msh"):
        write_gmsh(mesh, path)
    else:
        write_binary(mesh, path)


# ---------------------------------------------------------------------------
# VTK


def _sub_hexes(n: int) -> np.ndarray:
    """(n^3, 8) local point ids (C order over (i,j,k)) of the GLL sub-cells, VTK order."""
    p = n + 1
    cells = []
    for i, j, k in product(range(n), repeat=3):
        cell = [None] * 8
        for c in range(8):
            a, b, cc = c & 1, (c >> 1) & 1, (c >> 2) & 1
            cell[c] = ((i + a) * p + (j + b)) * p + (k + cc)
        cells.append([cell[t] for t in _HEX_ORDER])
    return np.array(cells, dtype=np.int64)


def export_field(
    path,
    mesh: HexMesh,
    basis: GllBasis,
    maps: IndexMaps,
    fields: dict,
    mode: str = "conforming",
    title: str = "semhex field",
) -> None:
    """Legacy ASCII VTK unstructured grid of GLL sub-hexahedra.

    ``mode="conforming"`` writes one point per global node (N points);
    ``"element"`` writes every element's ``(n+1)^3`` points separately.
    ``fields`` maps names to global vectors of length N.
    """
    if mode not in ("conforming", "element"):
        raise ValueError(f"unknown export mode {mode!r}")
    n, ne, p3 = basis.order, mesh.num_elements, basis.npts**3
    X = node_coordinates(mesh, basis).reshape(ne, p3, 3)
    l2g = maps.l2g.reshape(ne, p3)
    sub = _sub_hexes(n)
    if mode == "conforming":
        pts = np.empty((maps.n_global, 3))
        pts[l2g.ravel()] = X.reshape(-1, 3)
        conn = l2g[:, sub].reshape(-1, 8)
        point_index = None
    else:
        pts = X.reshape(-1, 3)
        conn = (np.arange(ne)[:, None, None] * p3 + sub[None]).reshape(-1, 8)
        point_index = l2g.ravel()

    out = io.StringIO()
    out.write(f"# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
    out.write(f"POINTS {len(pts)} double\n")
    np.savetxt(out, pts, fmt="%.17g")
    out.write(f"CELLS {len(conn)} {9 * len(conn)}\n")
    np.savetxt(out, np.hstack([np.full((len(conn), 1), 8), conn]), fmt="%d")
    out.write(f"CELL_TYPES {len(conn)}\n")
    np.savetxt(out, np.full(len(conn), VTK_HEXAHEDRON), fmt="%d")
    if fields:
        out.write(f"POINT_DATA {len(pts)}\n")
        for name, values in fields.items():
            v = np.asarray(values, dtype=np.float64)
            if v.shape != (maps.n_global,):
                raise ValueError(f"field {name!r} has length {v.shape}, expected {maps.n_global}")
            if point_index is not None:
                v = v[point_index]
            out.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            np.savetxt(out, v, fmt="%.17g")
    with open(path, "w") as fh:
        fh.write(out.getvalue())
