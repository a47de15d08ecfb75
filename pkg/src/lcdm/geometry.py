"""Triangle surface meshes: validation, ASCII OFF I/O, closest-point math."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "DEGENERATE_AREA",
    "SurfaceMesh",
    "OffParseError",
    "load_off",
    "save_off",
    "closest_points_on_triangles",
]

DEGENERATE_AREA = 1e-12  # mm^2; smaller triangles are dropped at load

FEATURE_VERTEX, FEATURE_EDGE, FEATURE_FACE = 0, 1, 2
FEATURE_NAMES = ("vertex", "edge", "face")


class OffParseError(ValueError):
    """Malformed OFF input; carries the offending 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class SurfaceMesh:
    """Triangulated surface in mm coordinates.

    Triangle indices are validated on construction; degenerate (area below
    ``DEGENERATE_AREA``) triangles are dropped with a warning, so a valid
    mesh never contains one.
    """

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self) -> None:
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=float))
        t = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int64))
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError(f"vertices must be (n, 3), got {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("vertices contain non-finite coordinates")
        if t.size == 0:
            t = t.reshape(0, 3)
        if t.ndim != 2 or t.shape[1] != 3:
            raise ValueError(f"triangles must be (m, 3), got {t.shape}")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle indices out of range")
        if t.size:
            corners = v[t]
            cross = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
            area = 0.5 * np.linalg.norm(cross, axis=1)
            keep = area >= DEGENERATE_AREA
            if not keep.all():
                warnings.warn(
                    f"dropping {int((~keep).sum())} degenerate triangle(s) "
                    f"(area < {DEGENERATE_AREA} mm^2)",
                    stacklevel=2,
                )
                t = t[keep]
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def triangle_corners(self) -> np.ndarray:
        """Corner coordinates, shape (n_triangles, 3, 3)."""
        return self.vertices[self.triangles]


def closest_points_on_triangles(corners: np.ndarray, point: np.ndarray):
    """Closest point on each triangle to `point`, vectorized over triangles.

    `corners` has shape (k, 3, 3). Returns ``(points (k,3), dist2 (k,),
    features (k,))`` where features code the closest-feature region
    (0 vertex, 1 edge, 2 face). Region classification follows the standard
    Voronoi-region walk over the triangle's features.
    """
    a = corners[:, 0, :]
    b = corners[:, 1, :]
    c = corners[:, 2, :]
    p = np.asarray(point, dtype=float)

    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    def safe_div(num, den):
        den = np.where(den == 0.0, 1.0, den)
        return num / den

    v_ab = np.clip(safe_div(d1, d1 - d3), 0.0, 1.0)
    w_ac = np.clip(safe_div(d2, d2 - d6), 0.0, 1.0)
    w_bc = np.clip(safe_div(d4 - d3, (d4 - d3) + (d5 - d6)), 0.0, 1.0)
    denom = va + vb + vc
    v_face = safe_div(vb, denom)
    w_face = safe_div(vc, denom)

    in_a = (d1 <= 0.0) & (d2 <= 0.0)
    in_b = (d3 >= 0.0) & (d4 <= d3)
    in_c = (d6 >= 0.0) & (d5 <= d6)
    on_ab = (vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0)
    on_ac = (vb <= 0.0) & (d2 >= 0.0) & (d6 <= 0.0)
    on_bc = (va <= 0.0) & (d4 - d3 >= 0.0) & (d5 - d6 >= 0.0)

    candidates = np.stack(
        [
            a,
            b,
            c,
            a + v_ab[:, None] * ab,
            a + w_ac[:, None] * ac,
            b + w_bc[:, None] * (c - b),
            a + v_face[:, None] * ab + w_face[:, None] * ac,
        ],
        axis=1,
    )
    region = np.full(len(corners), 6, dtype=np.intp)
    # priority order matters: earlier regions win where conditions overlap
    for idx, mask in ((5, on_bc), (4, on_ac), (3, on_ab), (2, in_c), (1, in_b), (0, in_a)):
        region[mask] = idx

    points = candidates[np.arange(len(corners)), region]
    diff = points - p
    dist2 = np.einsum("ij,ij->i", diff, diff)
    features = np.where(region < 3, FEATURE_VERTEX, np.where(region < 6, FEATURE_EDGE, FEATURE_FACE))
    return points, dist2, features


def load_off(path: str | Path) -> SurfaceMesh:
    """Read an ASCII OFF mesh. Faces must be triangles."""
    tokens: list[tuple[int, str]] = []  # (line number, token)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0]
            tokens.extend((lineno, tok) for tok in body.split())
    pos = 0

    def take(expect: str) -> tuple[int, str]:
        nonlocal pos
        if pos >= len(tokens):
            last = tokens[-1][0] if tokens else 1
            raise OffParseError(last, f"unexpected end of file, expected {expect}")
        tok = tokens[pos]
        pos += 1
        return tok

    lineno, magic = take("OFF header")
    if magic != "OFF":
        raise OffParseError(lineno, f"expected 'OFF' header, got {magic!r}")

    def take_int(what: str) -> int:
        lineno, tok = take(what)
        try:
            return int(tok)
        except ValueError:
            raise OffParseError(lineno, f"expected integer {what}, got {tok!r}") from None

    def take_float(what: str) -> float:
        lineno, tok = take(what)
        try:
            return float(tok)
        except ValueError:
            raise OffParseError(lineno, f"expected number for {what}, got {tok!r}") from None

    n_vertices = take_int("vertex count")
    n_faces = take_int("face count")
    take_int("edge count")
    if n_vertices < 0 or n_faces < 0:
        raise OffParseError(lineno, "negative counts in OFF header")

    vertices = np.empty((n_vertices, 3), dtype=float)
    for i in range(n_vertices):
        for axis in range(3):
            vertices[i, axis] = take_float(f"vertex {i} coordinate")
    triangles = np.empty((n_faces, 3), dtype=np.int64)
    for i in range(n_faces):
        lineno_arity, _ = tokens[pos] if pos < len(tokens) else (1, "")
        arity = take_int(f"face {i} vertex count")
        if arity != 3:
            raise OffParseError(lineno_arity, f"face {i} has {arity} vertices; only triangles supported")
        for slot in range(3):
            idx = take_int(f"face {i} index")
            if not 0 <= idx < n_vertices:
                raise OffParseError(tokens[pos - 1][0], f"face {i} references vertex {idx} of {n_vertices}")
            triangles[i, slot] = idx
    return SurfaceMesh(vertices=vertices, triangles=triangles)


def save_off(mesh: SurfaceMesh, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("OFF\n")
        fh.write(f"{len(mesh.vertices)} {len(mesh.triangles)} 0\n")
        for v in mesh.vertices:
            fh.write(f"{float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for t in mesh.triangles:
            fh.write(f"3 {t[0]} {t[1]} {t[2]}\n")
