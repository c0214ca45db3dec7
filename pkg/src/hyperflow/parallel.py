"""Block decomposition, ghost-cell exchange, deterministic reductions,
and the Amdahl scaling-model fit.

Execution model: one process, a fixed pool of worker threads, and
bulk-synchronous phases.  Every phase joins all its tasks before the
next phase starts, blocks own their mutable state, and inter-block data
moves by explicit buffer handoff during the exchange sweeps.  All
reductions fold per-block values in block order, so dt and norms are
bit-identical for any worker count.

The ghost exchange sweeps the index directions in order.  The sweep
for direction d sends interior rows with tangential extents that
include the ghost columns of already-swept directions, so corner and
edge ghosts shared by several interfaces receive true remote data
within one exchange round (the corner cascade).  Split blocks carry
donated halo vertex slabs, so ghost-cell geometry is byte-identical to
the unsplit grid and a split run reproduces the unsplit state exactly.
"""

import operator
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import block as bk
from . import state as sm
from .block import NG


class PartitionError(Exception):
    """Raised for unmatchable interfaces or invalid decompositions."""


class ScalingFitError(Exception):
    """Raised when the Amdahl fit is underdetermined."""


# -- structured partitioning ----------------------------------------------

@dataclass
class StructuredPiece:
    """One block of a structured split: vertex slab plus halo metadata.

    verts includes the donated halo slabs; ext gives the halo depth per
    direction side; bcs maps face tags to boundary conditions with
    Exchange entries on interior interfaces; cells holds the global
    cell index range [a, b) per direction.
    """
    verts: np.ndarray
    ext: tuple
    bcs: dict
    pos: tuple
    cells: tuple


def split_ranges(n, k):
    if k < 1:
        raise PartitionError(f"split count must be >= 1, got {k}")
    if n // k < NG:
        raise PartitionError(
            f"cannot split {n} cells into {k} parts of >= {NG} cells")
    base, rem = divmod(n, k)
    ranges = []
    a = 0
    for p in range(k):
        b = a + base + (1 if p < rem else 0)
        ranges.append((a, b))
        a = b
    return ranges


def partition_structured(verts, splits, bcs):
    """Split a structured vertex array into halo-carrying pieces.

    splits gives the part count per index direction; bcs maps the
    global face tags (imin, imax, ...) to boundary conditions.  Each
    piece's vertex slab is extended by two cells into every neighbour,
    so its ghost geometry matches the neighbour's interior exactly.
    Piece ids raster over the split grid with the last direction
    fastest.
    """
    nd = verts.ndim - 1
    if len(splits) != nd:
        raise PartitionError(
            f"need {nd} split counts for a {nd}D grid, got {len(splits)}")
    ncell = [verts.shape[d] - 1 for d in range(nd)]
    ranges = [split_ranges(ncell[d], splits[d]) for d in range(nd)]
    for d in range(nd):
        lo, hi = bk.FACE_TAGS[2 * d], bk.FACE_TAGS[2 * d + 1]
        if lo not in bcs or hi not in bcs:
            raise PartitionError(f"missing global boundary condition "
                                 f"{lo!r}/{hi!r}")
    pieces = []
    for pos in np.ndindex(*splits):
        ext = []
        vidx = []
        cells = []
        pbcs = {}
        for d in range(nd):
            a, b = ranges[d][pos[d]]
            lo_ext = NG if pos[d] > 0 else 0
            hi_ext = NG if pos[d] < splits[d] - 1 else 0
            ext.append((lo_ext, hi_ext))
            vidx.append(slice(a - lo_ext, b + 1 + hi_ext))
            cells.append((a, b))
            for hi in (False, True):
                tag = bk.FACE_TAGS[2 * d + int(hi)]
                step = 1 if hi else -1
                if (hi and hi_ext) or (not hi and lo_ext):
                    npos = list(pos)
                    npos[d] += step
                    nid = int(np.ravel_multi_index(tuple(npos), splits))
                    back = bk.FACE_TAGS[2 * d + int(not hi)]
                    pbcs[tag] = bk.Exchange(nid, back)
                else:
                    pbcs[tag] = bcs[tag]
        pieces.append(StructuredPiece(
            verts=verts[tuple(vidx)], ext=tuple(ext), bcs=pbcs,
            pos=tuple(pos), cells=tuple(cells)))
    return pieces


def make_blocks(gas, layout, pieces, **kwargs):
    """Construct the StructuredBlock objects for a partition."""
    return [bk.StructuredBlock(gas, layout, p.verts, p.ext, p.bcs,
                               blk_id=i, **kwargs)
            for i, p in enumerate(pieces)]


# -- ghost exchange --------------------------------------------------------

def _sweep_tangential(blk, d):
    """Tangential extents for sweep direction d.

    Already-swept directions include their exchange-ghost columns
    (fresh from this round); later directions stay interior, and their
    ghost corners fill on the later sweeps.
    """
    idx = [slice(None)] * blk.nd
    for dp in range(blk.nd):
        if dp == d:
            continue
        if dp < d:
            idx[dp] = blk.valid_extent(dp)
        else:
            idx[dp] = slice(NG, NG + blk.ncell[dp])
    return idx


def exchange_ghosts(blocks):
    """Update every exchange-ghost cell from its neighbour's interior.

    Direction-by-direction sweeps; each sweep gathers payload buffers
    from all donors, then ingests and decodes them.  Ghost conserved
    values end up bitwise equal to the remote interiors, and a repeat
    exchange with no interior update is a no-op.
    """
    by_id = {}
    for b in blocks:
        if b.blk_id in by_id:
            raise PartitionError(f"duplicate block id {b.blk_id}")
        by_id[b.blk_id] = b
    nd = max(b.nd for b in blocks)
    for d in range(nd):
        sends = []
        for b in blocks:
            if d >= b.nd:
                continue
            for hi in (False, True):
                bc = b.bcs[(d, hi)]
                if not bc.exchange:
                    continue
                donor = by_id.get(bc.neighbor)
                if donor is None:
                    raise PartitionError(
                        f"block {b.blk_id} face {bk.FACE_TAGS[2*d+int(hi)]} "
                        f"names missing neighbour {bc.neighbor}")
                dd, dhi = bk.face_of(bc.neighbor_face)
                back = donor.bcs[(dd, dhi)]
                if dd != d or not back.exchange \
                        or back.neighbor != b.blk_id \
                        or bk.face_of(back.neighbor_face) != (d, hi):
                    raise PartitionError(
                        f"interface orientation mismatch between block "
                        f"{b.blk_id} and block {bc.neighbor}")
                src = donor.side_index(d, _interface_rows(donor, d, dhi),
                                       _sweep_tangential(donor, d))
                dst = b.side_index(d, _ghost_rows(b, d, hi),
                                   _sweep_tangential(b, d))
                buf = donor.U[src]
                if buf.shape != b.U[dst].shape:
                    raise PartitionError(
                        f"interface shape mismatch between block "
                        f"{b.blk_id} ({b.U[dst].shape}) and block "
                        f"{bc.neighbor} ({buf.shape})")
                sends.append((b, dst, buf.copy()))
        for b, dst, buf in sends:
            b.U[dst] = buf
            sm.decode(b.gas, b.layout, b.U, fs=b.fs, diag=b.diag, where=dst)


def _interface_rows(blk, d, hi):
    n = blk.ncell[d]
    return slice(NG + n - NG, NG + n) if hi else slice(NG, NG + NG)


def _ghost_rows(blk, d, hi):
    n = blk.ncell[d]
    return slice(NG + n, NG + n + NG) if hi else slice(0, NG)


# -- reductions and the worker pool ----------------------------------------

def global_reduce(values, op):
    """Fold per-block values in block order; op in {min, max, sum}."""
    vals = list(values)
    if not vals:
        raise PartitionError("empty reduction")
    if op == "min":
        fold = min
    elif op == "max":
        fold = max
    elif op == "sum":
        fold = operator.add
    else:
        raise ValueError(f"unknown reduction op {op!r}")
    out = vals[0]
    for v in vals[1:]:
        out = fold(out, v)
    return out


def barrier():
    """Phase boundary marker.

    The worker pool's run() joins every task before returning, so each
    phase already ends at a barrier; this exists for drivers that
    orchestrate manual phases.
    """
    return None


class WorkerPool:
    """Fixed thread pool mapping phase work over blocks.

    run() returns results in item order and joins every task before
    returning, so each call is one bulk-synchronous phase.  With one
    worker it degrades to a plain loop.
    """

    def __init__(self, nworkers=1):
        if nworkers < 1:
            raise ValueError(f"nworkers must be >= 1, got {nworkers}")
        self.nworkers = int(nworkers)
        self._pool = (ThreadPoolExecutor(max_workers=self.nworkers)
                      if self.nworkers > 1 else None)

    def run(self, fn, items):
        if self._pool is None:
            return [fn(x) for x in items]
        return list(self._pool.map(fn, items))

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=True)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


# -- unstructured partitioning ----------------------------------------------

def partition_unstructured(centroids, n_parts):
    """Recursive coordinate bisection over cell centroids.

    Returns a list of ascending cell-id arrays, one per part.  Each
    bisection splits along the longest bounding-box axis of the subset
    at the count proportional to the child part totals, so part sizes
    differ by at most a few cells.
    """
    cent = np.asarray(centroids, dtype=float)
    n = len(cent)
    if n_parts < 1:
        raise PartitionError(f"n_parts must be >= 1, got {n_parts}")
    if n_parts > n:
        raise PartitionError(f"cannot split {n} cells into {n_parts} parts")
    parts = []

    def rec(ids, k):
        if k == 1:
            parts.append(np.sort(ids))
            return
        kl = k // 2
        nl = (len(ids) * kl) // k
        sub = cent[ids]
        axis = int(np.argmax(sub.max(axis=0) - sub.min(axis=0)))
        order = np.argsort(sub[:, axis], kind="stable")
        rec(ids[order[:nl]], kl)
        rec(ids[order[nl:]], k - kl)

    rec(np.arange(n), n_parts)
    return parts


def balance_ratio(parts):
    """Max/min part size; 1.0 is perfect balance."""
    sizes = [len(p) for p in parts]
    return max(sizes) / min(sizes)


# -- Amdahl scaling fit ------------------------------------------------------

@dataclass(frozen=True)
class ScalingModel:
    """Amdahl model T_n = T1 (s + p/n) with s + p = 1."""
    s: float
    p: float
    T1: float


def amdahl_fit(timings):
    """Least-squares fit of the serial fraction from (n, time/iter) points.

    Fits t = a + b/n, then s = a/(a+b), p = 1-s, T1 = a+b.
    """
    pts = [(float(n), float(t)) for n, t in timings]
    if len(pts) < 2:
        raise ScalingFitError("need at least two timing points")
    ns = np.array([n for n, _ in pts])
    ts = np.array([t for _, t in pts])
    if np.unique(ns).size < 2:
        raise ScalingFitError("timing points share a single process count")
    if np.any(ns < 1.0) or np.any(ts <= 0.0):
        raise ScalingFitError("process counts must be >= 1 and times > 0")
    design = np.stack([np.ones_like(ns), 1.0 / ns], axis=1)
    (a, b), *_ = np.linalg.lstsq(design, ts, rcond=None)
    t1 = a + b
    if t1 <= 0.0:
        raise ScalingFitError("fit gives a non-positive single-unit time")
    s = min(max(a / t1, 0.0), 1.0)
    return ScalingModel(s=float(s), p=float(1.0 - s), T1=float(t1))


def predict_speedup(model, n):
    """Model speedup T1/Tn = 1/(s + p/n)."""
    return 1.0 / (model.s + model.p / float(n))
