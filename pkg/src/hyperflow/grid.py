"""Grid generation, geometry, and grid file I/O.

Structured grids are vertex arrays of shape (ni+1, nj+1, 3) in 2D or
(ni+1, nj+1, nk+1, 3) in 3D, generated from transfinite (Coons) patches
with optional Roberts clustering, or simple boxes in 3D. Unstructured
grids (2D triangles/quads) can be imported from SU2 ASCII files.

Geometry follows the finite-volume contract that the face area vectors of
every cell sum exactly to zero (bilinear-patch normals in 3D, edge normals
in 2D), which is what keeps a uniform free stream undisturbed. Volumes in
axisymmetric mode are per radian (V = integral of y over the cell cross
section); face areas are y_mid-weighted edge lengths, so faces on the
symmetry axis carry no flux.
"""

import json
import struct

import numpy as np

GRID_MAGIC = b"HFGB"
FLOW_MAGIC = b"HFFB"
FILE_FORMAT_VERSION = 1


class GridError(Exception):
    pass


# ----------------------------------------------------------------------
# parametric curves and patches
# ----------------------------------------------------------------------

class Line:
    def __init__(self, p0, p1):
        self.p0 = np.asarray(p0, dtype=float)
        self.p1 = np.asarray(p1, dtype=float)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        return (1.0 - t) * self.p0 + t * self.p1


class Polyline:
    """Piecewise-linear curve parameterized by normalized arc length."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or len(pts) < 2:
            raise GridError("polyline needs at least two points")
        if pts.shape[1] == 2:
            pts = np.hstack([pts, np.zeros((len(pts), 1))])
        self.pts = pts
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(seg <= 0.0):
            raise GridError("polyline has zero-length segment")
        s = np.concatenate([[0.0], np.cumsum(seg)])
        self.s = s / s[-1]

    def __call__(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
        idx = np.clip(np.searchsorted(self.s, t, side="right") - 1, 0, len(self.s) - 2)
        f = (t - self.s[idx]) / (self.s[idx + 1] - self.s[idx])
        return self.pts[idx] + f[..., None] * (self.pts[idx + 1] - self.pts[idx])


def roberts(eta, beta):
    """One-sided Roberts stretching clustering points toward eta = 0."""
    if beta <= 1.0:
        raise GridError("roberts clustering needs beta > 1")
    lam = ((beta + 1.0) / (beta - 1.0)) ** (1.0 - eta)
    return ((beta + 1.0) - (beta - 1.0) * lam) / (lam + 1.0)


def cluster_map(eta, spec):
    """Map uniform eta in [0,1] per a clustering spec {end, beta}."""
    if spec is None:
        return eta
    beta = float(spec["beta"])
    end = spec.get("end", "start")
    if end == "start":
        return roberts(eta, beta)
    if end == "end":
        return 1.0 - roberts(1.0 - eta, beta)
    if end == "both":
        half = np.where(eta <= 0.5, 0.5 * roberts(2 * eta, beta),
                        1.0 - 0.5 * roberts(2 * (1 - eta), beta))
        return half
    raise GridError(f"unknown clustering end {end!r}")


def coons_patch(south, north, west, east, r, s):
    """Transfinite interpolation of four boundary curves at (r, s) grids."""
    r2 = r[..., None]
    s2 = s[..., None]
    p00, p10 = south(0.0), south(1.0)
    p01, p11 = north(0.0), north(1.0)
    surf = ((1 - s2) * south(r) + s2 * north(r)
            + (1 - r2) * west(s) + r2 * east(s)
            - ((1 - r2) * (1 - s2) * p00 + r2 * (1 - s2) * p10
               + (1 - r2) * s2 * p01 + r2 * s2 * p11))
    return surf


class StructuredGrid:
    """Cell-vertex array; ndim 2 or 3."""

    def __init__(self, verts, ndim):
        self.verts = np.asarray(verts, dtype=float)
        self.ndim = ndim
        if ndim == 2:
            self.ni = self.verts.shape[0] - 1
            self.nj = self.verts.shape[1] - 1
            self.nk = 0
        else:
            self.ni, self.nj, self.nk = (n - 1 for n in self.verts.shape[:3])

    @property
    def ncells(self):
        return self.ni * self.nj * max(self.nk, 1)


def _edge_curve(spec, p_start, p_end):
    if spec is None:
        return Line(p_start, p_end)
    kind = spec.get("type", "polyline")
    if kind == "polyline":
        return Polyline(spec["points"])
    raise GridError(f"unknown edge type {kind!r}")


def build_structured(spec):
    """Build a StructuredGrid from a block spec dict."""
    kind = spec.get("type", "coons")
    if kind == "box":
        ni, nj, nk = int(spec["ni"]), int(spec["nj"]), int(spec["nk"])
        p0 = np.asarray(spec["p0"], dtype=float)
        p1 = np.asarray(spec["p1"], dtype=float)
        ii = cluster_map(np.linspace(0.0, 1.0, ni + 1), spec.get("cluster", {}).get("i"))
        jj = cluster_map(np.linspace(0.0, 1.0, nj + 1), spec.get("cluster", {}).get("j"))
        kk = cluster_map(np.linspace(0.0, 1.0, nk + 1), spec.get("cluster", {}).get("k"))
        X, Y, Z = np.meshgrid(p0[0] + ii * (p1[0] - p0[0]),
                              p0[1] + jj * (p1[1] - p0[1]),
                              p0[2] + kk * (p1[2] - p0[2]), indexing="ij")
        return StructuredGrid(np.stack([X, Y, Z], axis=-1), ndim=3)
    if kind != "coons":
        raise GridError(f"unknown grid type {kind!r}")
    ni, nj = int(spec["ni"]), int(spec["nj"])
    c = [np.asarray(p, dtype=float) for p in spec["corners"]]
    c = [np.concatenate([p, [0.0]]) if len(p) == 2 else p for p in c]
    p00, p10, p11, p01 = c
    edges = spec.get("edges", {})
    south = _edge_curve(edges.get("south"), p00, p10)
    north = _edge_curve(edges.get("north"), p01, p11)
    west = _edge_curve(edges.get("west"), p00, p01)
    east = _edge_curve(edges.get("east"), p10, p11)
    rr = cluster_map(np.linspace(0.0, 1.0, ni + 1), spec.get("cluster", {}).get("i"))
    ss = cluster_map(np.linspace(0.0, 1.0, nj + 1), spec.get("cluster", {}).get("j"))
    R, S = np.meshgrid(rr, ss, indexing="ij")
    return StructuredGrid(coons_patch(south, north, west, east, R, S), ndim=2)


# ----------------------------------------------------------------------
# geometry
# ----------------------------------------------------------------------

def _quad_area_normal(p0, p1, p2, p3):
    """Exact integral of the outward normal over a bilinear quad patch."""
    an = 0.5 * np.cross(p2 - p0, p3 - p1)
    area = np.linalg.norm(an, axis=-1)
    mid = 0.25 * (p0 + p1 + p2 + p3)
    return area, an, mid


def _tri_contrib(p0, p1, p2):
    """Per-triangle pieces of the divergence-theorem volume and centroid."""
    an = 0.5 * np.cross(p1 - p0, p2 - p0)
    c = (p0 + p1 + p2) / 3.0
    vol = np.einsum("...k,...k->...", c, an) / 3.0
    m01 = 0.5 * (p0 + p1)
    m12 = 0.5 * (p1 + p2)
    m20 = 0.5 * (p2 + p0)
    cc = (m01 ** 2 + m12 ** 2 + m20 ** 2) / 6.0
    first = np.einsum("...k,...k->...k", cc, an)
    return vol, first


def structured_geometry_2d(verts, axisymmetric=False):
    """Cell and face geometry for a 2D structured grid.

    Returns a dict with cell centroid/volume/cross-section and, per index
    direction, face area/normal/midpoint arrays. Normals point toward
    increasing index. Volumes are per unit depth, or per radian when
    axisymmetric.
    """
    v00 = verts[:-1, :-1]
    v10 = verts[1:, :-1]
    v11 = verts[1:, 1:]
    v01 = verts[:-1, 1:]
    x = np.stack([v00[..., 0], v10[..., 0], v11[..., 0], v01[..., 0]], axis=-1)
    y = np.stack([v00[..., 1], v10[..., 1], v11[..., 1], v01[..., 1]], axis=-1)
    xn = np.roll(x, -1, axis=-1)
    yn = np.roll(y, -1, axis=-1)
    cross = x * yn - xn * y
    area = 0.5 * np.sum(cross, axis=-1)
    if np.any(area <= 0.0):
        raise GridError("grid has non-positive cell areas (check orientation)")
    cx = np.sum((x + xn) * cross, axis=-1) / (6.0 * area)
    cy = np.sum((y + yn) * cross, axis=-1) / (6.0 * area)
    centroid = np.stack([cx, cy, np.zeros_like(cx)], axis=-1)

    if axisymmetric:
        if np.any(verts[..., 1] < -1.0e-12):
            raise GridError("axisymmetric grid crosses the y=0 axis")
        vol = np.sum(-(xn - x) * (y * y + y * yn + yn * yn), axis=-1) / 6.0
        if np.any(vol <= 0.0):
            raise GridError("axisymmetric grid produced non-positive volumes")
    else:
        vol = area

    def face_geom(pa, pb, flip):
        t = pb - pa
        length = np.linalg.norm(t[..., :2], axis=-1)
        n = np.stack([t[..., 1], -t[..., 0], np.zeros_like(length)], axis=-1)
        if flip:
            n = -n
        n = n / length[..., None]
        mid = 0.5 * (pa + pb)
        a = length * mid[..., 1] if axisymmetric else length
        return a, n, mid

    ia, inrm, imid = face_geom(verts[:, :-1], verts[:, 1:], flip=False)
    ja, jnrm, jmid = face_geom(verts[:-1, :], verts[1:, :], flip=True)
    return {
        "centroid": centroid, "volume": vol, "xsec_area": area,
        "face_area": (ia, ja), "face_normal": (inrm, jnrm), "face_mid": (imid, jmid),
    }


def structured_geometry_3d(verts):
    """Cell and face geometry for a 3D structured grid of hexahedra."""
    # corner views for cells: c[di][dj][dk]
    c = [[[verts[di:verts.shape[0] - 1 + di, dj:verts.shape[1] - 1 + dj,
                 dk:verts.shape[2] - 1 + dk] for dk in (0, 1)] for dj in (0, 1)] for di in (0, 1)]

    # outward-oriented quad faces of each cell
    faces = [
        (c[0][0][0], c[0][0][1], c[0][1][1], c[0][1][0]),  # west  (-i)
        (c[1][0][0], c[1][1][0], c[1][1][1], c[1][0][1]),  # east  (+i)
        (c[0][0][0], c[1][0][0], c[1][0][1], c[0][0][1]),  # south (-j)
        (c[0][1][0], c[0][1][1], c[1][1][1], c[1][1][0]),  # north (+j)
        (c[0][0][0], c[0][1][0], c[1][1][0], c[1][0][0]),  # bottom(-k)
        (c[0][0][1], c[1][0][1], c[1][1][1], c[0][1][1]),  # top   (+k)
    ]
    vol = 0.0
    first = 0.0
    for p0, p1, p2, p3 in faces:
        for tri in ((p0, p1, p2), (p0, p2, p3)):
            tv, tf = _tri_contrib(*tri)
            vol = vol + tv
            first = first + tf
    if np.any(vol <= 0.0):
        raise GridError("grid has non-positive cell volumes (check orientation)")
    centroid = first / vol[..., None]

    ia, inrm, imid = _quad_area_normal(
        verts[:, :-1, :-1], verts[:, 1:, :-1], verts[:, 1:, 1:], verts[:, :-1, 1:])
    ja, jnrm, jmid = _quad_area_normal(
        verts[:-1, :, :-1], verts[:-1, :, 1:], verts[1:, :, 1:], verts[1:, :, :-1])
    ka, knrm, kmid = _quad_area_normal(
        verts[:-1, :-1, :], verts[1:, :-1, :], verts[1:, 1:, :], verts[:-1, 1:, :])
    inrm = inrm / ia[..., None]
    jnrm = jnrm / ja[..., None]
    knrm = knrm / ka[..., None]
    return {
        "centroid": centroid, "volume": vol, "xsec_area": None,
        "face_area": (ia, ja, ka), "face_normal": (inrm, jnrm, knrm),
        "face_mid": (imid, jmid, kmid),
    }


# ----------------------------------------------------------------------
# unstructured grids
# ----------------------------------------------------------------------

class UnstructuredGrid:
    def __init__(self, points, cells, markers):
        self.points = np.asarray(points, dtype=float)  # (npts, 3)
        self.cells = cells                             # list of vertex index tuples
        self.markers = markers                         # name -> list of (v0, v1)

    @property
    def ncells(self):
        return len(self.cells)


SU2_ELEMENT_NVERTS = {3: 2, 5: 3, 9: 4}


def import_su2(path):
    """Read a 2D SU2 ASCII grid with line/triangle/quad elements."""
    try:
        with open(path) as f:
            tokens = [ln.split("%")[0].strip() for ln in f]
    except OSError as exc:
        raise GridError(f"cannot read SU2 file {path}: {exc}") from exc
    lines = [ln for ln in tokens if ln]
    pos = 0

    def expect(key):
        nonlocal pos
        if pos >= len(lines) or not lines[pos].startswith(key):
            raise GridError(f"SU2 parse error: expected {key} near line {pos}")
        val = lines[pos].split("=")[1].strip()
        pos += 1
        return val

    ndime = int(expect("NDIME"))
    if ndime != 2:
        raise GridError("only 2D SU2 grids are supported")
    nelem = int(expect("NELEM"))
    cells = []
    for _ in range(nelem):
        parts = lines[pos].split()
        pos += 1
        etype = int(parts[0])
        if etype not in (5, 9):
            raise GridError(f"unsupported SU2 element type {etype}")
        nv = SU2_ELEMENT_NVERTS[etype]
        cells.append(tuple(int(p) for p in parts[1:1 + nv]))
    npoin = int(expect("NPOIN"))
    pts = np.zeros((npoin, 3))
    for i in range(npoin):
        parts = lines[pos].split()
        pos += 1
        pts[i, 0] = float(parts[0])
        pts[i, 1] = float(parts[1])
    nmark = int(expect("NMARK"))
    markers = {}
    for _ in range(nmark):
        tag = expect("MARKER_TAG")
        nme = int(expect("MARKER_ELEMS"))
        edges = []
        for _ in range(nme):
            parts = lines[pos].split()
            pos += 1
            if int(parts[0]) != 3:
                raise GridError("only line boundary elements are supported")
            edges.append((int(parts[1]), int(parts[2])))
        markers[tag] = edges
    return UnstructuredGrid(pts, cells, markers)


def unstructured_geometry(ugrid, axisymmetric=False):
    """Cell/face geometry plus the face graph for a 2D unstructured grid.

    Faces are unique edges; interior faces store (left, right) cell ids,
    boundary faces store right = -1 and are listed per marker. Normals
    point from left to right.
    """
    pts = ugrid.points
    ncell = len(ugrid.cells)
    centroid = np.zeros((ncell, 3))
    vol = np.zeros(ncell)
    xsec = np.zeros(ncell)
    for ic, cell in enumerate(ugrid.cells):
        px = pts[list(cell), 0]
        py = pts[list(cell), 1]
        xn = np.roll(px, -1)
        yn = np.roll(py, -1)
        cr = px * yn - xn * py
        a = 0.5 * np.sum(cr)
        if a <= 0.0:
            raise GridError(f"unstructured cell {ic} has non-positive area")
        xsec[ic] = a
        centroid[ic, 0] = np.sum((px + xn) * cr) / (6 * a)
        centroid[ic, 1] = np.sum((py + yn) * cr) / (6 * a)
        if axisymmetric:
            vol[ic] = np.sum(-(xn - px) * (py * py + py * yn + yn * yn)) / 6.0
        else:
            vol[ic] = a

    edge_map = {}
    fleft, fright, fva, fvb = [], [], [], []
    for ic, cell in enumerate(ugrid.cells):
        n = len(cell)
        for k in range(n):
            a, b = cell[k], cell[(k + 1) % n]
            key = (min(a, b), max(a, b))
            if key in edge_map:
                fi = edge_map[key]
                if fright[fi] != -1:
                    raise GridError("edge shared by more than two cells")
                fright[fi] = ic
            else:
                edge_map[key] = len(fleft)
                fleft.append(ic)
                fright.append(-1)
                fva.append(a)
                fvb.append(b)
    fleft = np.asarray(fleft)
    fright = np.asarray(fright)
    pa = pts[fva]
    pb = pts[fvb]
    t = pb - pa
    length = np.linalg.norm(t[:, :2], axis=-1)
    normal = np.stack([t[:, 1], -t[:, 0], np.zeros_like(length)], axis=-1) / length[:, None]
    mid = 0.5 * (pa + pb)
    # orient from left cell outward
    dvec = mid - centroid[fleft]
    flip = np.einsum("ij,ij->i", normal[:, :2], dvec[:, :2]) < 0.0
    normal[flip] = -normal[flip]
    area = length * mid[:, 1] if axisymmetric else length

    marker_faces = {}
    for tag, edges in ugrid.markers.items():
        ids = []
        for a, b in edges:
            key = (min(a, b), max(a, b))
            if key not in edge_map:
                raise GridError(f"marker {tag} references unknown edge {key}")
            ids.append(edge_map[key])
        marker_faces[tag] = np.asarray(ids, dtype=int)

    return {
        "centroid": centroid, "volume": vol, "xsec_area": xsec,
        "face_left": fleft, "face_right": fright,
        "face_area": area, "face_normal": normal, "face_mid": mid,
        "marker_faces": marker_faces,
    }


# ----------------------------------------------------------------------
# native binary file format: magic, u32 header length, JSON header, blobs
# ----------------------------------------------------------------------

def _write_blob(path, magic, header, arrays):
    header = dict(header)
    header["format_version"] = FILE_FORMAT_VERSION
    header["arrays"] = [{"name": k, "shape": list(v.shape)} for k, v in arrays.items()]
    hjson = json.dumps(header).encode()
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as f:
        f.write(magic)
        f.write(struct.pack("<I", len(hjson)))
        f.write(hjson)
        for v in arrays.values():
            f.write(np.ascontiguousarray(v, dtype="<f8").tobytes())
    import os
    os.replace(tmp, path)


def _read_blob(path, magic):
    try:
        with open(path, "rb") as f:
            m = f.read(4)
            if m != magic:
                raise GridError(f"{path}: bad magic {m!r}")
            (hlen,) = struct.unpack("<I", f.read(4))
            header = json.loads(f.read(hlen).decode())
            if header.get("format_version") != FILE_FORMAT_VERSION:
                raise GridError(f"{path}: unsupported format_version")
            arrays = {}
            for spec in header["arrays"]:
                n = int(np.prod(spec["shape"])) if spec["shape"] else 1
                buf = f.read(8 * n)
                if len(buf) != 8 * n:
                    raise GridError(f"{path}: truncated array {spec['name']}")
                arrays[spec["name"]] = np.frombuffer(buf, dtype="<f8").reshape(spec["shape"]).copy()
    except OSError as exc:
        raise GridError(f"cannot read {path}: {exc}") from exc
    return header, arrays


def write_grid(path, grid):
    if isinstance(grid, StructuredGrid):
        _write_blob(path, GRID_MAGIC, {"kind": "structured", "ndim": grid.ndim},
                    {"verts": grid.verts})
    else:
        cells = np.full((len(grid.cells), 5), -1.0)
        for i, cl in enumerate(grid.cells):
            cells[i, 0] = len(cl)
            cells[i, 1:1 + len(cl)] = cl
        header = {"kind": "unstructured",
                  "markers": {k: [[int(a), int(b)] for a, b in v]
                              for k, v in grid.markers.items()}}
        _write_blob(path, GRID_MAGIC, header, {"points": grid.points, "cells": cells})


def read_grid(path):
    header, arrays = _read_blob(path, GRID_MAGIC)
    if header["kind"] == "structured":
        return StructuredGrid(arrays["verts"], ndim=header["ndim"])
    cells = []
    for row in arrays["cells"]:
        n = int(row[0])
        cells.append(tuple(int(v) for v in row[1:1 + n]))
    markers = {k: [(a, b) for a, b in v] for k, v in header["markers"].items()}
    return UnstructuredGrid(arrays["points"], cells, markers)


def write_flow(path, header, arrays):
    _write_blob(path, FLOW_MAGIC, header, arrays)


def read_flow(path):
    return _read_blob(path, FLOW_MAGIC)
