"""Concrete triangle meshes: topology checks, OBJ/PLY writers, OBJ reader."""

from __future__ import annotations

import struct
from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np


@dataclass
class TriangleMesh:
    vertices: np.ndarray  # (n, 3) float64
    faces: np.ndarray     # (m, 3) int64

    @property
    def is_empty(self) -> bool:
        return len(self.faces) == 0

    def edge_counts(self) -> Counter:
        counts: Counter = Counter()
        for a, b, c in self.faces:
            for u, v in ((a, b), (b, c), (c, a)):
                counts[(u, v) if u < v else (v, u)] += 1
        return counts

    def is_closed(self) -> bool:
        counts = self.edge_counts()
        return bool(counts) and all(c == 2 for c in counts.values())

    def euler_characteristic(self) -> int:
        used = np.unique(self.faces) if len(self.faces) else np.array([])
        v = len(used)
        e = len(self.edge_counts())
        f = len(self.faces)
        return v - e + f

    def connected_components(self) -> List["TriangleMesh"]:
        """Split by shared-vertex connectivity of faces."""
        if self.is_empty:
            return []
        parent = {}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        def union(x, y):
            rx, ry = find(x), find(y)
            if rx != ry:
                parent[rx] = ry

        for face in self.faces:
            for v in face:
                parent.setdefault(int(v), int(v))
            union(int(face[0]), int(face[1]))
            union(int(face[1]), int(face[2]))
        groups: Dict[int, List[int]] = {}
        for fi, face in enumerate(self.faces):
            groups.setdefault(find(int(face[0])), []).append(fi)
        comps = []
        for fis in groups.values():
            faces = self.faces[fis]
            used = np.unique(faces)
            remap = {int(v): i for i, v in enumerate(used)}
            new_faces = np.array(
                [[remap[int(v)] for v in face] for face in faces],
                dtype=np.int64)
            comps.append(TriangleMesh(self.vertices[used].copy(), new_faces))
        comps.sort(key=lambda m: (-len(m.faces), len(m.vertices)))
        return comps

    def face_normals(self) -> np.ndarray:
        v = self.vertices
        f = self.faces
        n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        lens = np.linalg.norm(n, axis=1)
        lens[lens == 0] = 1.0
        return n / lens[:, None]

    def face_areas(self) -> np.ndarray:
        v = self.vertices
        f = self.faces
        n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        return 0.5 * np.linalg.norm(n, axis=1)


def write_obj(path, mesh: TriangleMesh) -> None:
    with open(path, "w", encoding="ascii") as f:
        f.write("# powermesh surface\n")
        for x, y, z in mesh.vertices:
            f.write(f"v {float(x)!r} {float(y)!r} {float(z)!r}\n")
        for a, b, c in mesh.faces:
            f.write(f"f {a + 1} {b + 1} {c + 1}\n")


def read_obj(path) -> TriangleMesh:
    verts: List[Tuple[float, float, float]] = []
    faces: List[Tuple[int, int, int]] = []
    with open(path, "r", encoding="ascii") as f:
        for line in f:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                verts.append((float(parts[1]), float(parts[2]),
                              float(parts[3])))
            elif parts[0] == "f":
                idx = [int(tok.split("/")[0]) - 1 for tok in parts[1:]]
                for k in range(1, len(idx) - 1):  # fan for polygons
                    faces.append((idx[0], idx[k], idx[k + 1]))
    return TriangleMesh(np.array(verts, dtype=np.float64).reshape(-1, 3),
                        np.array(faces, dtype=np.int64).reshape(-1, 3))


def write_ply(path, mesh: TriangleMesh) -> None:
    """Binary little-endian PLY."""
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {len(mesh.vertices)}\n"
        "property float x\nproperty float y\nproperty float z\n"
        f"element face {len(mesh.faces)}\n"
        "property list uchar int vertex_indices\n"
        "end_header\n"
    )
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(mesh.vertices.astype("<f4").tobytes())
        for a, b, c in mesh.faces:
            f.write(struct.pack("<Biii", 3, a, b, c))
