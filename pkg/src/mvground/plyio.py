"""Minimal PLY reader/writer: little-endian binary, positions only (+faces for meshes)."""

from __future__ import annotations

import struct

import numpy as np

from .errors import MalformedFile


def write_ply_points(path, points: np.ndarray) -> None:
    """Write an (N, 3) float array as binary little-endian PLY vertices."""
    pts = np.asarray(points, dtype="<f4").reshape(-1, 3)
    with open(path, "wb") as fh:
        fh.write(
            b"ply\nformat binary_little_endian 1.0\n"
            + f"element vertex {len(pts)}\n".encode()
            + b"property float x\nproperty float y\nproperty float z\nend_header\n"
        )
        fh.write(pts.tobytes())


def write_ply_mesh(path, vertices: np.ndarray, triangles: np.ndarray) -> None:
    """Write vertices and triangle faces as binary little-endian PLY."""
    verts = np.asarray(vertices, dtype="<f4").reshape(-1, 3)
    tris = np.asarray(triangles, dtype="<i4").reshape(-1, 3)
    with open(path, "wb") as fh:
        fh.write(
            b"ply\nformat binary_little_endian 1.0\n"
            + f"element vertex {len(verts)}\n".encode()
            + b"property float x\nproperty float y\nproperty float z\n"
            + f"element face {len(tris)}\n".encode()
            + b"property list uchar int vertex_indices\nend_header\n"
        )
        fh.write(verts.tobytes())
        face_rec = struct.Struct("<B3i")
        fh.write(b"".join(face_rec.pack(3, *tri) for tri in tris.tolist()))


def read_ply_points(path) -> np.ndarray:
    """Read vertex positions from a binary little-endian PLY written by this module.

    Faces and any non-position vertex properties are rejected rather than
    silently skipped; this is a scene-asset format, not a general mesh importer.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    end = raw.find(b"end_header\n")
    if end < 0:
        raise MalformedFile(path, 0, "missing PLY header terminator")
    header = raw[:end].decode("ascii", errors="replace").splitlines()
    if not header or header[0].strip() != "ply":
        raise MalformedFile(path, 0, "not a PLY file")
    n_verts = None
    props = []
    for line in header[1:]:
        tok = line.split()
        if not tok or tok[0] == "comment":
            continue
        if tok[0] == "format":
            if tok[1] != "binary_little_endian":
                raise MalformedFile(path, 0, f"unsupported format {tok[1]!r}")
        elif tok[0] == "element":
            if tok[1] == "vertex":
                n_verts = int(tok[2])
            elif int(tok[2]) != 0:
                raise MalformedFile(path, 0, f"unsupported element {tok[1]!r}")
        elif tok[0] == "property":
            props.append(tuple(tok[1:]))
    if n_verts is None:
        raise MalformedFile(path, 0, "no vertex element")
    if props != [("float", "x"), ("float", "y"), ("float", "z")]:
        raise MalformedFile(path, 0, "expected exactly float x/y/z properties")
    body = raw[end + len(b"end_header\n"):]
    need = n_verts * 12
    if len(body) < need:
        raise MalformedFile(path, end + len(b"end_header\n") + len(body),
                            f"truncated vertex data ({len(body)} of {need} bytes)")
    pts = np.frombuffer(body[:need], dtype="<f4").reshape(n_verts, 3)
    return pts.astype(np.float64)
