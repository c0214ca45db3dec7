"""Solver blocks: ghost-padded structured blocks and flat unstructured blocks.

Structured blocks keep every per-cell field on arrays padded with two ghost
layers per side of each active index direction. A residual evaluation is a
fixed sequence of phases: decode the interior conserved state, exchange
ghost slabs between connected blocks (parallel module), fill
boundary-condition ghosts sweeping the index directions in a fixed order,
evaluate cell gradients, then reconstruct/flux/accumulate per direction and
add sources. The fixed ordering plus a per-cell-deterministic decode is
what lets a split run reproduce the unsplit run bit for bit.

Geometry near block interfaces is computed from halo vertices donated by
the neighbouring block at setup, so ghost centroids, widths, and face
normals are byte-identical to what the unsplit grid would produce. At
physical boundaries ghost centroids mirror the interior cell across the
boundary face and cell widths copy symmetrically.

Unstructured blocks are flat cell lists over a face graph. Every boundary
face owns one ghost slot appended after the interior cells; gradient
clouds of boundary cells are extended with the boundary-face midpoints
carrying boundary-condition face values.
"""

import numpy as np

from . import dual as dm
from . import flux as fx
from . import gas as gm
from . import gradient as gr
from . import mms as mm
from . import reconstruct as rc
from . import relaxation as rx
from . import state as sm
from . import turbulence as tb
from .state import FlowDivergence

NG = 2  # ghost layers per side

FACE_TAGS = ("imin", "imax", "jmin", "jmax", "kmin", "kmax")


class BlockConfigError(Exception):
    pass


def face_of(tag):
    """(direction, high-side flag) for a boundary tag like "jmax"."""
    if tag not in FACE_TAGS:
        raise BlockConfigError(f"unknown boundary tag {tag!r}")
    return FACE_TAGS.index(tag) // 2, tag.endswith("max")


# ----------------------------------------------------------------------
# boundary conditions
# ----------------------------------------------------------------------

class BoundaryCondition:
    exchange = False
    wall = False  # no-slip wall faces feed the SA wall-distance field

    def fill(self, blk, d, hi):
        raise NotImplementedError

    def face_values(self, blk, fields, q_in, mids, normal):
        """Boundary-face values of the gradient fields (unstructured clouds).

        q_in maps field name -> interior-cell value at each boundary face;
        default is a zero-gradient copy.
        """
        return dict(q_in)


class SupersonicInflow(BoundaryCondition):
    """Ghosts pinned to a prescribed free-stream state."""

    def __init__(self, gas, layout, p, T, vel, massf=None, Tv=None, nuhat=0.0):
        mf = np.zeros(gas.nsp)
        mf[0] = 1.0
        if massf is not None:
            mf = np.asarray(massf, dtype=float)
        rho = p / dm.value(gm_pressure_coeff(gas, T, mf, Tv))
        self.state = sm.make_flow_state(gas, 1, rho, T, vel, mf, Tv=Tv,
                                        nuhat=nuhat)
        # pin the stored state to the decode fixed point so ghosts match
        # interior cells bitwise in uniform flow
        sm.decode(gas, layout, sm.encode(gas, layout, self.state),
                  fs=self.state)

    def fill(self, blk, d, hi):
        s = self.state
        for g, _ in blk.ghost_pairs(d, hi):
            idx = blk.side_index(d, g)
            blk.fs.rho[idx] = s.rho[0]
            blk.fs.vel[idx] = s.vel[0]
            blk.fs.p[idx] = s.p[0]
            blk.fs.T[idx] = s.T[0]
            blk.fs.massf[idx] = s.massf[0]
            blk.fs.e[idx] = s.e[0]
            blk.fs.a[idx] = s.a[0]
            if blk.fs.Tv is not None:
                blk.fs.Tv[idx] = s.Tv[0]
                blk.fs.e_v[idx] = s.e_v[0]
            if blk.fs.nuhat is not None:
                blk.fs.nuhat[idx] = s.nuhat[0]

    def face_values(self, blk, fields, q_in, mids, normal):
        s = self.state
        vals = {"u": s.vel[0, 0], "v": s.vel[0, 1], "w": s.vel[0, 2],
                "T": s.T[0]}
        for i in range(s.massf.shape[-1]):
            vals[f"massf{i}"] = s.massf[0, i]
        if s.Tv is not None:
            vals["Tv"] = s.Tv[0]
        if s.nuhat is not None:
            vals["nuhat"] = s.nuhat[0]
        return {k: np.full_like(q_in[k], vals[k]) for k in q_in}


def gm_pressure_coeff(gas, T, massf, Tv=None):
    """p / rho at the given temperatures (used to invert p for rho)."""
    return gas.pressure(1.0, T, np.asarray(massf, dtype=float), Tv)


class OutflowSimple(BoundaryCondition):
    """Zero-order extrapolation of the adjacent interior cell."""

    def fill(self, blk, d, hi):
        src = blk.side_index(d, blk.interior_edge(d, hi))
        for g, _ in blk.ghost_pairs(d, hi):
            idx = blk.side_index(d, g)
            _copy_state(blk.fs, idx, src)


class SlipWall(BoundaryCondition):
    """Mirror: normal velocity reflected, everything else copied."""

    def fill(self, blk, d, hi):
        n = blk.boundary_normal(d, hi)
        sign = 1.0 if hi else -1.0  # outward normal
        for g, i in blk.ghost_pairs(d, hi):
            gi = blk.side_index(d, g)
            ii = blk.side_index(d, i)
            _copy_state(blk.fs, gi, ii)
            v = blk.fs.vel[ii]
            vn = np.einsum("...k,...k->...", v, n) * sign
            blk.fs.vel[gi] = v - 2.0 * vn[..., None] * (sign * n)

    def face_values(self, blk, fields, q_in, mids, normal):
        out = dict(q_in)
        vn = (q_in["u"] * normal[..., 0] + q_in["v"] * normal[..., 1]
              + q_in["w"] * normal[..., 2])
        out["u"] = q_in["u"] - vn * normal[..., 0]
        out["v"] = q_in["v"] - vn * normal[..., 1]
        out["w"] = q_in["w"] - vn * normal[..., 2]
        return out


class NoslipWall(BoundaryCondition):
    """No-slip wall, adiabatic or fixed temperature, optional catalyticity.

    Ghosts reflect velocity so the face value is zero; a fixed wall
    temperature is imposed through the ghost temperature with the pressure
    copied, and a super-catalytic wall reflects the mass fractions about
    the prescribed wall composition.
    """

    wall = True

    def __init__(self, gas, T_wall=None, massf_wall=None):
        self.gas = gas
        self.T_wall = None if T_wall is None else float(T_wall)
        self.massf_wall = None
        if massf_wall is not None:
            mf = np.asarray(massf_wall, dtype=float)
            if abs(mf.sum() - 1.0) > 1.0e-8:
                raise BlockConfigError("wall mass fractions must sum to 1")
            self.massf_wall = mf

    def fill(self, blk, d, hi):
        gas = self.gas
        for g, i in blk.ghost_pairs(d, hi):
            gi = blk.side_index(d, g)
            ii = blk.side_index(d, i)
            _copy_state(blk.fs, gi, ii)
            blk.fs.vel[gi] = -blk.fs.vel[ii]
            if blk.fs.nuhat is not None:
                blk.fs.nuhat[gi] = -blk.fs.nuhat[ii]
            mf = blk.fs.massf[ii]
            if self.massf_wall is not None:
                mf = 2.0 * self.massf_wall - mf
                blk.fs.massf[gi] = mf
            Tv = None
            if blk.fs.Tv is not None:
                Tv = blk.fs.Tv[ii]
                if self.T_wall is not None:
                    Tv = np.maximum(2.0 * self.T_wall - Tv, 20.0)
                blk.fs.Tv[gi] = Tv
                blk.fs.e_v[gi] = gas.e_vib_mix(Tv, mf)
            if self.T_wall is not None:
                T = np.maximum(2.0 * self.T_wall - blk.fs.T[ii], 20.0)
                p = blk.fs.p[ii]
                rho = p / gas.pressure(np.ones_like(T), T, mf, Tv)
                blk.fs.T[gi] = T
                blk.fs.rho[gi] = rho
                blk.fs.e[gi] = gas.internal_energy(T, mf, Tv)
                blk.fs.a[gi] = gas.sound_speed(p, rho, T, mf)

    def face_values(self, blk, fields, q_in, mids, normal):
        out = dict(q_in)
        out["u"] = np.zeros_like(q_in["u"])
        out["v"] = np.zeros_like(q_in["v"])
        out["w"] = np.zeros_like(q_in["w"])
        if self.T_wall is not None:
            out["T"] = np.full_like(q_in["T"], self.T_wall)
            if "Tv" in out:
                out["Tv"] = np.full_like(q_in["Tv"], self.T_wall)
        if "nuhat" in out:
            out["nuhat"] = np.zeros_like(q_in["nuhat"])
        if self.massf_wall is not None:
            for i, y in enumerate(self.massf_wall):
                out[f"massf{i}"] = np.full_like(q_in[f"massf{i}"], y)
        return out


class MMSDirichlet(BoundaryCondition):
    """Ghosts evaluated from the manufactured field at the ghost centroids."""

    def __init__(self, gas, field):
        self.gas = gas
        self.field = field

    def fill(self, blk, d, hi):
        gas = self.gas
        for g, _ in blk.ghost_pairs(d, hi):
            idx = blk.side_index(d, g)
            c = blk.cent[idx]
            x, y, z = c[..., 0], c[..., 1], c[..., 2]
            pr = self.field.prim(gas, x, y, z)
            blk.fs.rho[idx] = pr["rho"]
            blk.fs.vel[idx] = np.stack([pr["u"], pr["v"], pr["w"]], axis=-1)
            blk.fs.p[idx] = pr["p"]
            blk.fs.T[idx] = pr["T"]
            blk.fs.massf[idx] = pr["massf"]
            blk.fs.e[idx] = pr["e"]
            blk.fs.a[idx] = pr["a"]
            if blk.fs.nuhat is not None:
                blk.fs.nuhat[idx] = pr["nuhat"] if pr["nuhat"] is not None \
                    else 0.0

    def face_values(self, blk, fields, q_in, mids, normal):
        pr = self.field.prim(self.gas, mids[..., 0], mids[..., 1],
                             mids[..., 2])
        out = dict(q_in)
        for k in out:
            if k.startswith("massf"):
                out[k] = pr["massf"][..., int(k[5:])]
            elif k == "nuhat" and pr["nuhat"] is None:
                out[k] = np.zeros_like(q_in[k])
            else:
                out[k] = np.broadcast_to(pr[k], q_in[k].shape)
        return out


class Exchange(BoundaryCondition):
    """Interface to another block; filled by the parallel exchange phase."""

    exchange = True

    def __init__(self, neighbor, neighbor_face):
        self.neighbor = int(neighbor)
        self.neighbor_face = neighbor_face

    def fill(self, blk, d, hi):
        pass


def _copy_state(fs, dst, src):
    fs.rho[dst] = fs.rho[src]
    fs.vel[dst] = fs.vel[src]
    fs.p[dst] = fs.p[src]
    fs.T[dst] = fs.T[src]
    fs.massf[dst] = fs.massf[src]
    fs.e[dst] = fs.e[src]
    fs.a[dst] = fs.a[src]
    if fs.Tv is not None:
        fs.Tv[dst] = fs.Tv[src]
        fs.e_v[dst] = fs.e_v[src]
    if fs.nuhat is not None:
        fs.nuhat[dst] = fs.nuhat[src]


# ----------------------------------------------------------------------
# structured block
# ----------------------------------------------------------------------

class StructuredBlock:
    """One ghost-padded structured grid partition.

    verts carries the block's own vertices extended by the halo layers
    baked into ext = ((lo, hi), ...) per direction: 2 cell layers of real
    neighbour geometry at exchange sides, 0 at physical boundaries.
    """

    def __init__(self, gas, layout, verts, ext, bcs, blk_id=0,
                 axisymmetric=False, viscous=False, flux="ausmdv",
                 reconstruction="quadratic", limiter=True, mech=None,
                 mms_field=None, nu_es=None):
        verts = np.asarray(verts, dtype=float)
        self.gas = gas
        self.layout = layout
        self.blk_id = blk_id
        self.nd = 2 if verts.ndim == 3 else 3
        self.axisymmetric = axisymmetric
        self.viscous = viscous
        self.flux_fn = fx.FLUX_SCHEMES[flux]
        self.first_order = reconstruction == "first"
        self.limit = limiter
        self.mech = mech
        self.mms_field = mms_field
        self.nu_es = nu_es
        self.ext = tuple((int(a), int(b)) for a, b in ext[: self.nd])
        ne = tuple(n - 1 for n in verts.shape[: self.nd])
        self.ncell = tuple(ne[d] - self.ext[d][0] - self.ext[d][1]
                           for d in range(self.nd))
        if any(n < NG for n in self.ncell):
            raise BlockConfigError(
                f"block {blk_id} needs at least {NG} cells per direction, "
                f"got {self.ncell}")
        self.pshape = tuple(n + 2 * NG for n in self.ncell)
        self.interior = tuple(slice(NG, NG + n) for n in self.ncell)
        self.bcs = {}
        for tag, bc in bcs.items():
            d, hi = face_of(tag)
            if d >= self.nd:
                raise BlockConfigError(
                    f"boundary {tag!r} does not exist on a {self.nd}D block")
            self.bcs[(d, hi)] = bc
        for d in range(self.nd):
            for hi in (False, True):
                if (d, hi) not in self.bcs:
                    raise BlockConfigError(
                        f"block {blk_id} is missing a boundary condition "
                        f"for {FACE_TAGS[2 * d + hi]}")
                depth = self.ext[d][hi]
                if self.bcs[(d, hi)].exchange != (depth > 0):
                    raise BlockConfigError(
                        f"block {blk_id} halo depth {depth} inconsistent "
                        f"with boundary {FACE_TAGS[2 * d + hi]}")

        self._build_geometry(verts)
        self._build_lsq()

        n = np.zeros(self.pshape)
        self.fs = sm.FlowState(
            rho=n.copy(), vel=np.zeros(self.pshape + (3,)), p=n.copy(),
            T=np.full(self.pshape, 300.0),
            massf=np.zeros(self.pshape + (gas.nsp,)),
            e=n.copy(), a=n.copy(),
            Tv=np.full(self.pshape, 300.0) if layout.two_temperature else None,
            e_v=n.copy() if layout.two_temperature else None,
            nuhat=n.copy() if layout.turbulence else None)
        self.U = np.zeros(self.pshape + (layout.ncons,))
        self.grad = None
        self.dist = None  # SA wall distance over interior cells
        self.diag = sm.DecodeDiagnostics()
        self.mms_src = None
        if mms_field is not None:
            c = self.cent[self.interior]
            src = mm.mms_source(mms_field, gas, layout, c[..., 0], c[..., 1],
                                c[..., 2], viscous=viscous)
            self.mms_src = np.stack([dm.value(s) + np.zeros(c.shape[:-1])
                                     for s in src], axis=-1)

    # -- geometry --------------------------------------------------------

    def _build_geometry(self, verts):
        from . import grid as gd
        if self.nd == 2:
            geo = gd.structured_geometry_2d(verts, self.axisymmetric)
        else:
            geo = gd.structured_geometry_3d(verts)
        off = tuple(NG - self.ext[d][0] for d in range(self.nd))
        ne = tuple(v - 1 for v in verts.shape[: self.nd])

        self.cent = self._embed(geo["centroid"], off, ne, mode="edge")
        self.vol = self._embed(geo["volume"], off, ne, mode="symmetric")
        self.xsec = None
        if geo["xsec_area"] is not None:
            self.xsec = self._embed(geo["xsec_area"], off, ne,
                                    mode="symmetric")

        self.farea, self.fnorm, self.fmid = [], [], []
        for d in range(self.nd):
            foff = list(off)
            fne = list(ne)
            fne[d] += 1
            a = self._embed(geo["face_area"][d], foff, fne, mode="edge")
            nrm = self._embed(geo["face_normal"][d], foff, fne, mode="edge")
            mid = self._embed(geo["face_mid"][d], foff, fne, mode="edge")
            self.farea.append(a)
            self.fnorm.append(nrm)
            self.fmid.append(mid)

        # cell widths along each direction from the bounding face midpoints
        self.width = []
        for d in range(self.nd):
            lo = [slice(None)] * self.nd
            hi = [slice(None)] * self.nd
            lo[d] = slice(0, -1)
            hi[d] = slice(1, None)
            dv = geo["face_mid"][d][tuple(hi)] - geo["face_mid"][d][tuple(lo)]
            w = np.linalg.norm(dv, axis=-1)
            self.width.append(self._embed(w, off, ne, mode="symmetric"))

        # mirror ghost centroids across physical boundary faces
        for d in range(self.nd):
            for hi in (False, True):
                if self.ext[d][hi] > 0:
                    continue
                flat = NG + self.ncell[d] if hi else NG
                fmid = self.fmid[d][self.side_index(d, flat)]
                fn = self.fnorm[d][self.side_index(d, flat)]
                for g, i in self.ghost_pairs(d, hi):
                    ci = self.cent[self.side_index(d, i)]
                    dn = np.einsum("...k,...k->...", fmid - ci, fn)
                    self.cent[self.side_index(d, g)] = \
                        ci + 2.0 * dn[..., None] * fn

    def _embed(self, src, off, ne, mode):
        shape = list(self.pshape)
        for a in range(self.nd):
            shape[a] = self.pshape[a] + (ne[a] - self.ncell[a]
                                         - self.ext[a][0] - self.ext[a][1])
        dst = np.zeros(tuple(shape) + src.shape[self.nd:])
        dst[tuple(slice(off[a], off[a] + ne[a]) for a in range(self.nd))] = src
        for a in range(self.nd):
            for k in range(off[a]):
                g = off[a] - 1 - k
                s = off[a] if mode == "edge" else off[a] + k
                dst[self._ax_index(a, g, dst)] = dst[self._ax_index(a, s, dst)]
            top = off[a] + ne[a]
            for k in range(dst.shape[a] - top):
                g = top + k
                s = top - 1 if mode == "edge" else top - 1 - k
                dst[self._ax_index(a, g, dst)] = dst[self._ax_index(a, s, dst)]
        return dst

    @staticmethod
    def _ax_index(axis, i, arr):
        idx = [slice(None)] * arr.ndim
        idx[axis] = i
        return tuple(idx)

    # -- indexing helpers --------------------------------------------------

    def side_index(self, d, pos, tangential=None):
        """Index tuple selecting one layer at padded position pos along d."""
        idx = [slice(None)] * self.nd if tangential is None \
            else list(tangential)
        idx[d] = pos
        return tuple(idx)

    def ghost_pairs(self, d, hi):
        """(ghost, mirror interior) padded index pairs, nearest first."""
        n = self.ncell[d]
        if hi:
            return [(NG + n + k, NG + n - 1 - k) for k in range(NG)]
        return [(NG - 1 - k, NG + k) for k in range(NG)]

    def interior_edge(self, d, hi):
        return NG + self.ncell[d] - 1 if hi else NG

    def boundary_normal(self, d, hi):
        flat = NG + self.ncell[d] if hi else NG
        return self.fnorm[d][self.side_index(d, flat)]

    def interior_slab(self, d, hi, depth=NG):
        """Interior index tuple for the rows a neighbour will read."""
        n = self.ncell[d]
        s = slice(NG + n - depth, NG + n) if hi else slice(NG, NG + depth)
        return self.side_index(d, s)

    def ghost_slab(self, d, hi, depth=NG):
        n = self.ncell[d]
        s = slice(NG + n, NG + n + depth) if hi else slice(NG - depth, NG)
        return self.side_index(d, s)

    def valid_extent(self, d):
        """Padded range along d holding live data (interior + exchange)."""
        lo = NG - (NG if self.bcs[(d, False)].exchange else 0)
        hi = NG + self.ncell[d] + (NG if self.bcs[(d, True)].exchange else 0)
        return slice(lo, hi)

    # -- least-squares gradient setup --------------------------------------

    def _build_lsq(self):
        self._grad_regions = []
        regions = [self.interior]
        for d in range(self.nd):
            for hi in (False, True):
                r = list(self.interior)
                r[d] = slice(NG + self.ncell[d], NG + self.ncell[d] + 1) \
                    if hi else slice(NG - 1, NG)
                regions.append(tuple(r))
        offsets = []
        for d in range(self.nd):
            for s in (-1, 1):
                off = [0] * self.nd
                off[d] = s
                offsets.append(tuple(off))
        for reg in regions:
            dx = np.stack([self.cent[_shift(reg, off)] - self.cent[reg]
                           for off in offsets])
            w = gr.inverse_distance_weights(dx)
            coef = gr.lsq_setup(dx, w, ndim=self.nd)
            self._grad_regions.append((reg, offsets, coef))

    def grad_fields(self):
        """Name -> padded array pairs for every gradient-bearing field."""
        fields = {"u": self.fs.vel[..., 0], "v": self.fs.vel[..., 1],
                  "w": self.fs.vel[..., 2], "T": self.fs.T}
        if self.layout.multi_species:
            for i in range(self.gas.nsp):
                fields[f"massf{i}"] = self.fs.massf[..., i]
        if self.layout.two_temperature:
            fields["Tv"] = self.fs.Tv
        if self.layout.turbulence:
            fields["nuhat"] = self.fs.nuhat
        return fields

    def compute_gradients(self):
        fields = self.grad_fields()
        if self.grad is None:
            self.grad = {k: np.zeros(self.pshape + (3,)) for k in fields}
        for reg, offsets, coef in self._grad_regions:
            for name, q in fields.items():
                dq = np.stack([q[_shift(reg, off)] - q[reg]
                               for off in offsets])
                self.grad[name][reg] = gr.lsq_gradient(coef, dq)

    # -- state management ---------------------------------------------------

    def set_initial(self, fs_point):
        """Fill the interior with a uniform FlowState of one entry."""
        U1 = sm.encode(self.gas, self.layout, fs_point)[0]
        self.U[self.interior] = U1
        self.decode_interior()

    def set_initial_fn(self, fn):
        """Fill the interior from fn(x, y, z) -> primitive dict."""
        c = self.cent[self.interior]
        pr = fn(c[..., 0], c[..., 1], c[..., 2])
        rho = pr["rho"] + np.zeros(c.shape[:-1])
        vel = np.stack([pr[k] + np.zeros(c.shape[:-1])
                        for k in ("u", "v", "w")], axis=-1)
        ke = 0.5 * np.sum(vel ** 2, axis=-1)
        e = pr["e"] + np.zeros(c.shape[:-1])
        lay = self.layout
        U = np.zeros(c.shape[:-1] + (lay.ncons,))
        U[..., lay.i_mass] = rho
        U[..., lay.i_mom] = rho[..., None] * vel
        U[..., lay.i_energy] = rho * (e + ke)
        if lay.multi_species:
            U[..., lay.i_species] = rho[..., None] * pr["massf"]
        if lay.two_temperature:
            U[..., lay.i_ev] = rho * pr["e_v"]
        if lay.turbulence:
            nuhat = pr.get("nuhat")
            U[..., lay.i_nuhat] = rho * (0.0 if nuhat is None else nuhat)
        self.U[self.interior] = U
        self.decode_interior()

    @property
    def Ui(self):
        """View of the interior conserved array (ncell..., ncons)."""
        return self.U[self.interior]

    def decode_interior(self):
        try:
            sm.decode(self.gas, self.layout, self.U, fs=self.fs,
                      diag=self.diag, where=self.interior)
        except FlowDivergence as exc:
            raise FlowDivergence(f"block {self.blk_id}: {exc}") from exc

    def fill_bcs(self):
        for d in range(self.nd):
            for hi in (False, True):
                self.bcs[(d, hi)].fill(self, d, hi)

    def wall_face_mids(self):
        """Midpoints of all no-slip wall faces (SA wall distance)."""
        mids = []
        for (d, hi), bc in self.bcs.items():
            if not bc.wall:
                continue
            flat = NG + self.ncell[d] if hi else NG
            idx = self.side_index(d, flat, tangential=[
                s for s in self.interior])
            mids.append(self.fmid[d][idx].reshape(-1, 3))
        return np.concatenate(mids) if mids else np.zeros((0, 3))

    # -- residual -----------------------------------------------------------

    def residual(self, coupled_chemistry=False):
        """R with dU/dt = R over the interior cells, shape (*ncell, ncons)."""
        lay = self.layout
        R = np.zeros(tuple(self.ncell) + (lay.ncons,))
        if self.viscous or lay.turbulence:
            self.compute_gradients()
        for d in range(self.nd):
            self._direction_flux(d, R)
        self._sources(R, coupled_chemistry)
        if self.mms_src is not None:
            R += self.mms_src
        return R

    def _stencil(self, d):
        n = self.ncell[d]
        base = list(self.interior)
        out = []
        for s in (slice(NG - 2, NG + n - 1), slice(NG - 1, NG + n),
                  slice(NG, NG + n + 1), slice(NG + 1, NG + n + 2)):
            t = list(base)
            t[d] = s
            out.append(tuple(t))
        return out

    def _face_region(self, d):
        t = list(self.interior)
        t[d] = slice(NG, NG + self.ncell[d] + 1)
        return tuple(t)

    def _recon_pair(self, q, d, sten, hs):
        if self.first_order:
            return q[sten[1]], q[sten[2]]
        return rc.recon_structured(q[sten[0]], q[sten[1]], q[sten[2]],
                                   q[sten[3]], *hs, limit=self.limit)

    def _face_states(self, d):
        """Reconstructed left/right primitive dicts on the direction-d faces."""
        gas = self.gas
        sten = self._stencil(d)
        hs = [self.width[d][t] for t in sten]
        fsv = self.fs
        core = [fsv.rho, fsv.vel[..., 0], fsv.vel[..., 1], fsv.vel[..., 2],
                fsv.p]
        pairs = [self._recon_pair(q, d, sten, hs) for q in core]
        (rl, rr), (ul, ur), (vl, vr), (wl, wr), (pl, pr_) = pairs
        if np.any(rl <= 0.0) or np.any(pl <= 0.0) \
                or np.any(rr <= 0.0) or np.any(pr_ <= 0.0):
            bad = np.argwhere((rl <= 0) | (pl <= 0) | (rr <= 0) | (pr_ <= 0))
            raise FlowDivergence(
                f"block {self.blk_id}: non-physical reconstructed state at "
                f"direction-{d} face {tuple(bad[0])}")
        if self.layout.multi_species:
            mfl, mfr = [], []
            for i in range(gas.nsp):
                a, b = self._recon_pair(fsv.massf[..., i], d, sten, hs)
                mfl.append(a)
                mfr.append(b)
            mfl = _renorm(np.stack(mfl, axis=-1))
            mfr = _renorm(np.stack(mfr, axis=-1))
        else:
            mfl = np.ones(rl.shape + (1,))
            mfr = mfl
        tvl = tvr = None
        if self.layout.two_temperature:
            tvl, tvr = self._recon_pair(fsv.Tv, d, sten, hs)
            if np.any(tvl <= 0.0) or np.any(tvr <= 0.0):
                raise FlowDivergence(
                    f"block {self.blk_id}: non-positive reconstructed Tv")
        nhl = nhr = None
        if self.layout.turbulence:
            nhl, nhr = self._recon_pair(fsv.nuhat, d, sten, hs)
            nhl = np.maximum(nhl, 0.0)
            nhr = np.maximum(nhr, 0.0)
        prim_l = fx.face_prim(gas, rl, ul, vl, wl, pl, mfl, tvl, nhl)
        prim_r = fx.face_prim(gas, rr, ur, vr, wr, pr_, mfr, tvr, nhr)
        if np.any(prim_l["T"] <= 0.0) or np.any(prim_r["T"] <= 0.0):
            raise FlowDivergence(
                f"block {self.blk_id}: non-positive reconstructed T")
        return prim_l, prim_r, sten

    def _direction_flux(self, d, R):
        gas, lay = self.gas, self.layout
        prim_l, prim_r, sten = self._face_states(d)
        freg = self._face_region(d)
        fn = self.fnorm[d][freg]
        nx, ny, nz = fn[..., 0], fn[..., 1], fn[..., 2]
        F = self.flux_fn(gas, lay, prim_l, prim_r, nx, ny, nz)
        if self.viscous:
            Fv = self._viscous_face_flux(d, sten, fn)
            F = [a - b for a, b in zip(F, Fv)]
        A = self.farea[d][freg]
        vol = self.vol[self.interior]
        lo = [slice(None)] * self.nd
        hi = [slice(None)] * self.nd
        lo[d] = slice(0, -1)
        hi[d] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        for c in range(lay.ncons):
            fa = F[c] * A
            R[..., c] -= (fa[hi] - fa[lo]) / vol

    def _viscous_face_flux(self, d, sten, fn):
        gas, lay = self.gas, self.layout
        tl, tr = sten[1], sten[2]
        fsv = self.fs
        evec = self.cent[tr] - self.cent[tl]
        elen = np.linalg.norm(evec, axis=-1)
        ehat = evec / elen[..., None]
        fields = self.grad_fields()
        gradf = {"n": (fn[..., 0], fn[..., 1], fn[..., 2])}
        for name, q in fields.items():
            g = gr.haselbacher_face_gradient(
                self.grad[name][tl], self.grad[name][tr],
                q[tl], q[tr], ehat, elen, fn)
            gradf[name] = (g[..., 0], g[..., 1], g[..., 2])
        if lay.multi_species:
            gradf["massf"] = [gradf.pop(f"massf{i}")
                              for i in range(gas.nsp)]
        mf = 0.5 * (fsv.massf[tl] + fsv.massf[tr])
        prim_f = fx.face_prim(
            gas,
            0.5 * (fsv.rho[tl] + fsv.rho[tr]),
            0.5 * (fsv.vel[tl][..., 0] + fsv.vel[tr][..., 0]),
            0.5 * (fsv.vel[tl][..., 1] + fsv.vel[tr][..., 1]),
            0.5 * (fsv.vel[tl][..., 2] + fsv.vel[tr][..., 2]),
            0.5 * (fsv.p[tl] + fsv.p[tr]),
            mf,
            None if fsv.Tv is None else 0.5 * (fsv.Tv[tl] + fsv.Tv[tr]),
            None if fsv.nuhat is None
            else 0.5 * (fsv.nuhat[tl] + fsv.nuhat[tr]))
        return fx.viscous_flux(gas, lay, prim_f, gradf)

    def _interior_prim(self):
        it = self.interior
        fsv = self.fs
        return {
            "rho": fsv.rho[it], "u": fsv.vel[it][..., 0],
            "v": fsv.vel[it][..., 1], "w": fsv.vel[it][..., 2],
            "p": fsv.p[it], "T": fsv.T[it], "e": fsv.e[it], "a": fsv.a[it],
            "massf": fsv.massf[it],
            "Tv": None if fsv.Tv is None else fsv.Tv[it],
            "e_v": None if fsv.e_v is None else fsv.e_v[it],
            "nuhat": None if fsv.nuhat is None else fsv.nuhat[it],
        }

    def _interior_grad(self, name):
        g = self.grad[name][self.interior]
        return (g[..., 0], g[..., 1], g[..., 2])

    def _sources(self, R, coupled_chemistry):
        src = self._source_comps(self._interior_prim(), coupled_chemistry)
        for c in range(self.layout.ncons):
            if src[c] is not None:
                R[..., c] += src[c]

    def _source_comps(self, pr, coupled_chemistry):
        """Component list of interior source terms for a primitive dict.

        pr may carry Dual entries (Jacobian path); gradient-dependent
        pieces use the frozen stored gradients.
        """
        gas, lay = self.gas, self.layout
        src = [None] * lay.ncons
        it = self.interior
        if self.axisymmetric:
            y = self.cent[it][..., 1]
            s = pr["p"]
            if self.viscous:
                mu = gas.viscosity(pr["T"], pr["massf"])
                if lay.turbulence:
                    mu = mu + tb.mu_turb(pr["rho"], pr["nuhat"], mu)
                ux = self._interior_grad("u")[0]
                vy = self._interior_grad("v")[1]
                divv = ux + vy + pr["v"] / y
                tau_tt = 2.0 * mu * pr["v"] / y - (2.0 / 3.0) * mu * divv
                s = s - tau_tt
            src[2] = s * self.xsec[it] / self.vol[it]
        if lay.turbulence:
            mu = gas.viscosity(pr["T"], pr["massf"])
            dist = 1.0 if self.dist is None else self.dist
            src[lay.i_nuhat] = tb.sa_source(
                pr["rho"], pr["nuhat"], mu,
                self._interior_grad("u"), self._interior_grad("v"),
                self._interior_grad("w"), self._interior_grad("nuhat"), dist)
        progress = None
        if coupled_chemistry and self.mech is not None:
            conc = gm.molar_concentrations(gas, pr["rho"], pr["massf"])
            rates, progress = self.mech.production_rates(
                conc, pr["T"], pr["Tv"] if lay.two_temperature else None)
            for i in range(gas.nsp):
                src[lay.i_species.start + i] = rates[..., i]
        if lay.two_temperature:
            q = rx.exchange_source(
                gas, self.mech if coupled_chemistry else None,
                pr["rho"], pr["p"], pr["T"], pr["Tv"], pr["massf"],
                progress=progress, nu_es=self.nu_es)
            src[lay.i_ev] = q
        return src

    # -- point-implicit support ---------------------------------------------

    def jacobian(self, coupled_chemistry=False):
        """Per-cell dense dR/dU of the first-order own-state residual."""
        lay = self.layout
        it = self.interior
        Uc = [self.U[it][..., c] for c in range(lay.ncons)]
        J = np.zeros(tuple(self.ncell) + (lay.ncons, lay.ncons))
        for c in range(lay.ncons):
            seeded = list(Uc)
            seeded[c] = dm.seed(Uc[c])
            comps = self._first_order_residual_dual(seeded,
                                                    coupled_chemistry)
            for k in range(lay.ncons):
                J[..., k, c] = dm.dot_one(comps[k]) \
                    + np.zeros(tuple(self.ncell))
        return J

    def _first_order_residual_dual(self, Ucomps, coupled_chemistry):
        gas, lay = self.gas, self.layout
        it = self.interior
        d0 = sm.decode_dual(gas, lay, Ucomps, T_guess=self.fs.T[it])
        T, mf = d0["T"], d0["massf"]
        Tv = d0.get("Tv")
        e = gas.internal_energy(T, mf, Tv)
        pr = {"rho": d0["rho"], "u": d0["vel"][0], "v": d0["vel"][1],
              "w": d0["vel"][2], "p": d0["p"], "T": T, "e": e,
              "a": gas.sound_speed(d0["p"], d0["rho"], T, mf), "massf": mf,
              "Tv": Tv, "e_v": d0.get("e_v"), "nuhat": d0.get("nuhat")}
        acc = [dm._zero(T) for _ in range(lay.ncons)]
        fsv = self.fs
        for d in range(self.nd):
            for hi in (False, True):
                off = [0] * self.nd
                off[d] = 1 if hi else -1
                nb = _shift(it, tuple(off))
                pnb = {
                    "rho": fsv.rho[nb], "u": fsv.vel[nb][..., 0],
                    "v": fsv.vel[nb][..., 1], "w": fsv.vel[nb][..., 2],
                    "p": fsv.p[nb], "T": fsv.T[nb], "e": fsv.e[nb],
                    "a": fsv.a[nb], "massf": fsv.massf[nb],
                    "Tv": None if fsv.Tv is None else fsv.Tv[nb],
                    "e_v": None if fsv.e_v is None else fsv.e_v[nb],
                    "nuhat": None if fsv.nuhat is None else fsv.nuhat[nb]}
                freg = list(it)
                n = self.ncell[d]
                freg[d] = slice(NG + 1, NG + n + 1) if hi \
                    else slice(NG, NG + n)
                freg = tuple(freg)
                fn = self.fnorm[d][freg]
                A = self.farea[d][freg]
                args = (fn[..., 0], fn[..., 1], fn[..., 2])
                if hi:
                    F = self.flux_fn(gas, lay, pr, pnb, *args)
                    sign = 1.0
                else:
                    F = self.flux_fn(gas, lay, pnb, pr, *args)
                    sign = -1.0
                for c in range(lay.ncons):
                    acc[c] = acc[c] - sign * F[c] * A / self.vol[it]
        if self.grad is None and (lay.turbulence or
                                  (self.axisymmetric and self.viscous)):
            self.compute_gradients()
        src = self._source_comps(pr, coupled_chemistry)
        for c in range(lay.ncons):
            if src[c] is not None:
                acc[c] = acc[c] + src[c]
        return acc

    # -- time-step bound and operator-split chemistry -------------------------

    def signal_sum(self):
        """Per-interior-cell sum over faces of (|u_n| + a + 2 nu/dn) A."""
        it = self.interior
        fsv = self.fs
        vel = fsv.vel[it]
        a = fsv.a[it]
        nu_eff = 0.0
        if self.viscous:
            mu = self.gas.viscosity(fsv.T[it], fsv.massf[it])
            if self.layout.turbulence:
                mu = mu + tb.mu_turb(fsv.rho[it], fsv.nuhat[it], mu)
            nu_eff = mu / fsv.rho[it]
        total = np.zeros(self.ncell)
        vol = self.vol[it]
        for d in range(self.nd):
            n = self.ncell[d]
            for hi in (False, True):
                freg = list(it)
                freg[d] = slice(NG + 1, NG + n + 1) if hi \
                    else slice(NG, NG + n)
                freg = tuple(freg)
                fn = self.fnorm[d][freg]
                A = self.farea[d][freg]
                un = np.abs(np.einsum("...k,...k->...", vel, fn))
                total += (un + a + 2.0 * nu_eff * A / vol) * A
        return total, vol

    def stable_dt(self, cfl):
        total, vol = self.signal_sum()
        return float(cfl * np.min(vol / total))

    def apply_chemistry(self, dt, tol=1.0e-6):
        """Operator-split finite-rate chemistry over one time step."""
        if self.mech is None:
            return
        from . import chemistry as ch
        lay = self.layout
        it = self.interior
        fsv = self.fs
        rho = fsv.rho[it].reshape(-1)
        e_tot = (fsv.e[it]).reshape(-1)
        massf = fsv.massf[it].reshape(-1, self.gas.nsp)
        e_v = None
        if lay.two_temperature:
            e_v = fsv.e_v[it].reshape(-1)
        try:
            massf, e_v = ch.subcycle_chemistry(
                self.gas, self.mech, rho, e_tot, massf, dt, tol=tol, e_v=e_v)
        except (ch.StiffCellError, FloatingPointError) as exc:
            raise FlowDivergence(
                f"block {self.blk_id}: chemistry update failed: {exc}") \
                from exc
        shape = tuple(self.ncell)
        U = self.U[it]
        U[..., lay.i_species] = rho.reshape(shape)[..., None] \
            * massf.reshape(shape + (self.gas.nsp,))
        if lay.two_temperature:
            U[..., lay.i_ev] = rho.reshape(shape) * e_v.reshape(shape)
        self.decode_interior()


def _shift(region, off):
    out = []
    for s, o in zip(region, off):
        out.append(slice(s.start + o, s.stop + o))
    return tuple(out)


def _renorm(mf):
    mf = np.maximum(mf, 0.0)
    return mf / np.sum(mf, axis=-1)[..., None]


# ----------------------------------------------------------------------
# unstructured block
# ----------------------------------------------------------------------

class UnstructuredBlock:
    """Flat cell-list solver block over an unstructured face graph.

    State arrays hold the interior cells first, then one ghost slot per
    boundary face. Reconstruction is limited linear extrapolation from
    cell least-squares gradients; ghosts at block interfaces carry the
    remote cell's value, gradient, and limiter so interface faces see the
    same left/right data as the unsplit mesh.
    """

    def __init__(self, gas, layout, ugrid, marker_bcs, blk_id=0,
                 axisymmetric=False, viscous=False, flux="ausmdv",
                 limiter=True, mech=None, mms_field=None, nu_es=None):
        from . import grid as gd
        self.gas = gas
        self.layout = layout
        self.blk_id = blk_id
        self.axisymmetric = axisymmetric
        self.viscous = viscous
        self.flux_fn = fx.FLUX_SCHEMES[flux]
        self.limit = limiter
        self.mech = mech
        self.mms_field = mms_field
        self.nu_es = nu_es
        geo = gd.unstructured_geometry(ugrid, axisymmetric)
        self.ncells = len(geo["volume"])
        self.vol = geo["volume"]
        self.xsec = geo["xsec_area"]
        self.farea = geo["face_area"]
        self.fnorm = geo["face_normal"]
        self.fmid = geo["face_mid"]
        fleft = geo["face_left"]
        fright = geo["face_right"]

        bfaces = np.flatnonzero(fright < 0)
        self.bface_ids = bfaces
        self.nbf = len(bfaces)
        self.bface_bc = [None] * self.nbf
        bmap = {f: k for k, f in enumerate(bfaces)}
        for tag, faces in geo["marker_faces"].items():
            if tag not in marker_bcs:
                raise BlockConfigError(f"no boundary condition for marker "
                                       f"{tag!r}")
            for f in faces:
                self.bface_bc[bmap[f]] = marker_bcs[tag]
        missing = [k for k, b in enumerate(self.bface_bc) if b is None]
        if missing:
            raise BlockConfigError(
                f"{len(missing)} boundary faces belong to no marker")
        # ghost slot per boundary face, appended after the interior cells
        fright = fright.copy()
        fright[bfaces] = self.ncells + np.arange(self.nbf)
        self.fleft = fleft
        self.fright = fright
        self.ntot = self.ncells + self.nbf
        # tuple index so fs/cent slicing matches the structured blocks
        self.interior = (slice(0, self.ncells),)

        cent = np.concatenate([geo["centroid"],
                               np.zeros((self.nbf, 3))])
        # ghost centroids mirror the interior across the boundary face
        ci = cent[fleft[bfaces]]
        fm = self.fmid[bfaces]
        fn = self.fnorm[bfaces]
        dn = np.einsum("ij,ij->i", fm - ci, fn)
        cent[self.ncells:] = ci + 2.0 * dn[:, None] * fn
        self.cent = cent

        self._build_clouds()
        self.fs = self._alloc_state()
        self.U = np.zeros((self.ncells, layout.ncons))
        self.grad = None
        self.lim = None
        self.dist = None
        self.diag = sm.DecodeDiagnostics()
        self.mms_src = None
        if mms_field is not None:
            c = geo["centroid"]
            src = mm.mms_source(mms_field, gas, layout, c[:, 0], c[:, 1],
                                c[:, 2], viscous=viscous)
            self.mms_src = np.stack([dm.value(s) + np.zeros(self.ncells)
                                     for s in src], axis=-1)

    def _alloc_state(self):
        n = self.ntot
        lay = self.layout
        return sm.FlowState(
            rho=np.zeros(n), vel=np.zeros((n, 3)), p=np.zeros(n),
            T=np.full(n, 300.0), massf=np.zeros((n, self.gas.nsp)),
            e=np.zeros(n), a=np.zeros(n),
            Tv=np.full(n, 300.0) if lay.two_temperature else None,
            e_v=np.zeros(n) if lay.two_temperature else None,
            nuhat=np.zeros(n) if lay.turbulence else None)

    def _build_clouds(self):
        """Cell gradient clouds: face neighbours plus boundary face midpoints.

        A cloud member is either another cell id or a boundary record
        (-1 - k for boundary slot k, positioned at the face midpoint with
        the boundary condition's face value). Cells are grouped by cloud
        size so the least-squares setup vectorises.
        """
        members = [[] for _ in range(self.ncells)]
        mfaces = [[] for _ in range(self.ncells)]
        for f in range(len(self.fleft)):
            l, r = self.fleft[f], self.fright[f]
            if r >= self.ncells:
                members[l].append(-1 - (r - self.ncells))
                mfaces[l].append(f)
            else:
                members[l].append(r)
                mfaces[l].append(f)
                members[r].append(l)
                mfaces[r].append(f)
        sizes = sorted(set(len(m) for m in members))
        self._cloud_groups = []
        for size in sizes:
            cells = np.array([c for c in range(self.ncells)
                              if len(members[c]) == size])
            mem = np.array([members[c] for c in cells])
            fid = np.array([mfaces[c] for c in cells])
            pos = np.where(mem[..., None] < 0,
                           self.fmid[self.bface_ids[
                               np.maximum(-1 - mem, 0)]],
                           self.cent[np.maximum(mem, 0)])
            dx = np.transpose(pos - self.cent[cells][:, None, :], (1, 0, 2))
            w = gr.inverse_distance_weights(dx)
            coef = gr.lsq_setup(dx, w, ndim=2)
            self._cloud_groups.append((cells, mem, fid, coef))

    def _bface_field_values(self, fields):
        """Per-boundary-face values of every gradient field from its BC."""
        out = {k: np.zeros(self.nbf) for k in fields}
        lefts = self.fleft[self.bface_ids]
        by_bc = {}
        for k, bc in enumerate(self.bface_bc):
            by_bc.setdefault(id(bc), (bc, []))[1].append(k)
        for bc, ks in by_bc.values():
            ks = np.asarray(ks)
            q_in = {name: fields[name][lefts[ks]] for name in fields}
            mids = self.fmid[self.bface_ids[ks]]
            nrm = self.fnorm[self.bface_ids[ks]]
            vals = bc.face_values(self, fields, q_in, mids, nrm)
            for name in fields:
                out[name][ks] = vals[name]
        return out

    def grad_fields(self):
        fields = {"u": self.fs.vel[:, 0], "v": self.fs.vel[:, 1],
                  "w": self.fs.vel[:, 2], "T": self.fs.T}
        if self.layout.multi_species:
            for i in range(self.gas.nsp):
                fields[f"massf{i}"] = self.fs.massf[:, i]
        if self.layout.two_temperature:
            fields["Tv"] = self.fs.Tv
        if self.layout.turbulence:
            fields["nuhat"] = self.fs.nuhat
        # reconstruction also limits rho and p
        fields["rho"] = self.fs.rho
        fields["p"] = self.fs.p
        return fields

    def compute_gradients(self):
        fields = self.grad_fields()
        bvals = self._bface_field_values(
            {k: v for k, v in fields.items() if k not in ("rho", "p")})
        if self.grad is None:
            self.grad = {k: np.zeros((self.ntot, 3)) for k in fields}
            self.lim = {k: np.ones(self.ntot) for k in fields}
        for name, q in fields.items():
            bq = bvals.get(name)
            for cells, mem, fid, coef in self._cloud_groups:
                gidx = self.ncells + np.maximum(-1 - mem, 0)
                if bq is None:
                    # rho/p face values approximated from the ghost slots
                    bval = 0.5 * (q[cells][:, None] + q[gidx])
                else:
                    bval = bq[np.maximum(-1 - mem, 0)]
                qm = np.where(mem < 0, bval, q[np.maximum(mem, 0)])
                dq = np.transpose(qm - q[cells][:, None], (1, 0))
                self.grad[name][cells] = gr.lsq_gradient(coef, dq)
        self._compute_limiters(fields)

    def _compute_limiters(self, fields):
        """Venkatakrishnan factor per cell per field over its face cloud.

        The neighbour value range uses ghost-slot values at boundaries and
        the reconstruction is probed at the true face midpoints, matching
        the points the flux loop extrapolates to.
        """
        for name, q in fields.items():
            grad = self.grad[name]
            lim = np.ones(self.ntot)
            if self.limit:
                for cells, mem, fid, coef in self._cloud_groups:
                    midx = np.maximum(mem, 0)
                    gidx = self.ncells + np.maximum(-1 - mem, 0)
                    qm = np.where(mem < 0, q[gidx], q[midx])
                    dq = qm - q[cells][:, None]
                    dmax = np.maximum(dq.max(axis=1), 0.0)
                    dmin = np.minimum(dq.min(axis=1), 0.0)
                    dgrad = np.einsum(
                        "cfk,ck->cf",
                        self.fmid[fid] - self.cent[cells][:, None, :],
                        grad[cells])
                    lim[cells] = rc.venkat_limiter(dgrad.T, dmax, dmin)
            self.lim[name] = lim

    @property
    def Ui(self):
        """The conserved array; unstructured blocks store no ghost rows."""
        return self.U

    def decode_interior(self):
        try:
            sm.decode(self.gas, self.layout, self.U, fs=self.fs,
                      diag=self.diag, where=slice(0, self.ncells))
        except FlowDivergence as exc:
            raise FlowDivergence(f"block {self.blk_id}: {exc}") from exc

    def fill_bcs(self):
        """Fill the per-boundary-face ghost slots."""
        lefts = self.fleft[self.bface_ids]
        by_bc = {}
        for k, bc in enumerate(self.bface_bc):
            by_bc.setdefault(id(bc), (bc, []))[1].append(k)
        for bc, ks in by_bc.values():
            ks = np.asarray(ks)
            gs = self.ncells + ks
            ii = lefts[ks]
            bc_fill_unstructured(bc, self, ks, gs, ii)

    def wall_face_mids(self):
        ks = [k for k, bc in enumerate(self.bface_bc) if bc.wall]
        if not ks:
            return np.zeros((0, 3))
        return self.fmid[self.bface_ids[np.asarray(ks)]]

    def set_initial(self, fs_point):
        U1 = sm.encode(self.gas, self.layout, fs_point)[0]
        self.U[:] = U1
        self.decode_interior()

    # -- residual ------------------------------------------------------------

    def _face_value(self, name, q, side_cells, dx):
        g = self.grad[name][side_cells]
        s = self.lim[name][side_cells]
        return rc.recon_unstructured(q[side_cells], g, dx, s)

    def residual(self, coupled_chemistry=False):
        gas, lay = self.gas, self.layout
        self.compute_gradients()
        fsv = self.fs
        nf = len(self.fleft)
        l, r = self.fleft, self.fright
        dx_l = self.fmid - self.cent[l]
        dx_r = self.fmid - self.cent[r]

        names = ["rho", "u", "v", "w", "p"]
        arrays = {"rho": fsv.rho, "u": fsv.vel[:, 0], "v": fsv.vel[:, 1],
                  "w": fsv.vel[:, 2], "p": fsv.p}
        if lay.multi_species:
            for i in range(gas.nsp):
                names.append(f"massf{i}")
                arrays[f"massf{i}"] = fsv.massf[:, i]
        if lay.two_temperature:
            names.append("Tv")
            arrays["Tv"] = fsv.Tv
        if lay.turbulence:
            names.append("nuhat")
            arrays["nuhat"] = fsv.nuhat

        ql, qr = {}, {}
        for name in names:
            q = arrays[name]
            ql[name] = self._face_value(name, q, l, dx_l)
            qr[name] = self._face_value(name, q, r, dx_r)
        if lay.multi_species:
            mfl = _renorm(np.stack([ql[f"massf{i}"]
                                    for i in range(gas.nsp)], axis=-1))
            mfr = _renorm(np.stack([qr[f"massf{i}"]
                                    for i in range(gas.nsp)], axis=-1))
        else:
            mfl = np.ones((nf, 1))
            mfr = mfl
        if np.any(ql["rho"] <= 0) or np.any(ql["p"] <= 0) \
                or np.any(qr["rho"] <= 0) or np.any(qr["p"] <= 0):
            raise FlowDivergence(
                f"block {self.blk_id}: non-physical reconstructed face state")
        nhl = np.maximum(ql["nuhat"], 0.0) if lay.turbulence else None
        nhr = np.maximum(qr["nuhat"], 0.0) if lay.turbulence else None
        prim_l = fx.face_prim(gas, ql["rho"], ql["u"], ql["v"], ql["w"],
                              ql["p"], mfl, ql.get("Tv"), nhl)
        prim_r = fx.face_prim(gas, qr["rho"], qr["u"], qr["v"], qr["w"],
                              qr["p"], mfr, qr.get("Tv"), nhr)
        nx, ny, nz = self.fnorm[:, 0], self.fnorm[:, 1], self.fnorm[:, 2]
        F = self.flux_fn(gas, lay, prim_l, prim_r, nx, ny, nz)
        if self.viscous:
            Fv = self._viscous_face_flux(arrays, names)
            F = [a - b for a, b in zip(F, Fv)]

        R = np.zeros((self.ncells, lay.ncons))
        for c in range(lay.ncons):
            fa = F[c] * self.farea
            np.subtract.at(R[:, c], l, fa / self.vol[l])
            mask = r < self.ncells
            np.add.at(R[:, c], r[mask], fa[mask] / self.vol[r[mask]])
        self._sources(R, coupled_chemistry)
        if self.mms_src is not None:
            R += self.mms_src
        return R

    def _viscous_face_flux(self, arrays, names):
        gas, lay = self.gas, self.layout
        l, r = self.fleft, self.fright
        evec = self.cent[r] - self.cent[l]
        elen = np.linalg.norm(evec, axis=-1)
        ehat = evec / elen[..., None]
        gradf = {"n": (self.fnorm[:, 0], self.fnorm[:, 1], self.fnorm[:, 2])}
        for name in names:
            if name in ("rho", "p"):
                continue
            q = arrays[name]
            g = gr.haselbacher_face_gradient(
                self.grad[name][l], self.grad[name][r], q[l], q[r],
                ehat, elen, self.fnorm)
            gradf[name] = (g[:, 0], g[:, 1], g[:, 2])
        if lay.multi_species:
            gradf["massf"] = [gradf.pop(f"massf{i}")
                              for i in range(gas.nsp)]
        fsv = self.fs
        mf = 0.5 * (fsv.massf[l] + fsv.massf[r])
        prim_f = fx.face_prim(
            gas, 0.5 * (fsv.rho[l] + fsv.rho[r]),
            0.5 * (fsv.vel[l, 0] + fsv.vel[r, 0]),
            0.5 * (fsv.vel[l, 1] + fsv.vel[r, 1]),
            0.5 * (fsv.vel[l, 2] + fsv.vel[r, 2]),
            0.5 * (fsv.p[l] + fsv.p[r]), mf,
            None if fsv.Tv is None else 0.5 * (fsv.Tv[l] + fsv.Tv[r]),
            None if fsv.nuhat is None
            else 0.5 * (fsv.nuhat[l] + fsv.nuhat[r]))
        return fx.viscous_flux(gas, lay, prim_f, gradf)

    def _sources(self, R, coupled_chemistry):
        gas, lay = self.gas, self.layout
        fsv = self.fs
        n = self.ncells
        pr = {"rho": fsv.rho[:n], "u": fsv.vel[:n, 0], "v": fsv.vel[:n, 1],
              "w": fsv.vel[:n, 2], "p": fsv.p[:n], "T": fsv.T[:n],
              "massf": fsv.massf[:n],
              "Tv": None if fsv.Tv is None else fsv.Tv[:n],
              "nuhat": None if fsv.nuhat is None else fsv.nuhat[:n]}
        if self.axisymmetric:
            y = self.cent[:n, 1]
            s = pr["p"]
            if self.viscous:
                mu = gas.viscosity(pr["T"], pr["massf"])
                if lay.turbulence:
                    mu = mu + tb.mu_turb(pr["rho"], pr["nuhat"], mu)
                divv = (self.grad["u"][:n, 0] + self.grad["v"][:n, 1]
                        + pr["v"] / y)
                s = s - (2.0 * mu * pr["v"] / y - (2.0 / 3.0) * mu * divv)
            R[:, 2] += s * self.xsec / self.vol
        if lay.turbulence:
            mu = gas.viscosity(pr["T"], pr["massf"])
            dist = 1.0 if self.dist is None else self.dist
            g = lambda name: (self.grad[name][:n, 0], self.grad[name][:n, 1],
                              self.grad[name][:n, 2])
            R[:, lay.i_nuhat] += tb.sa_source(
                pr["rho"], pr["nuhat"], mu, g("u"), g("v"), g("w"),
                g("nuhat"), dist)
        progress = None
        if coupled_chemistry and self.mech is not None:
            conc = gm.molar_concentrations(gas, pr["rho"], pr["massf"])
            rates, progress = self.mech.production_rates(
                conc, pr["T"], pr["Tv"])
            for i in range(gas.nsp):
                R[:, lay.i_species.start + i] += rates[..., i]
        if lay.two_temperature:
            R[:, lay.i_ev] += rx.exchange_source(
                gas, self.mech if coupled_chemistry else None,
                pr["rho"], pr["p"], pr["T"], pr["Tv"], pr["massf"],
                progress=progress, nu_es=self.nu_es)

    def signal_sum(self):
        fsv = self.fs
        n = self.ncells
        nu_eff = np.zeros(n)
        if self.viscous:
            mu = self.gas.viscosity(fsv.T[:n], fsv.massf[:n])
            if self.layout.turbulence:
                mu = mu + tb.mu_turb(fsv.rho[:n], fsv.nuhat[:n], mu)
            nu_eff = mu / fsv.rho[:n]
        total = np.zeros(n)
        l, r = self.fleft, self.fright
        for side, cells in (("l", l), ("r", r)):
            mask = cells < n
            c = cells[mask]
            un = np.abs(np.einsum("fk,fk->f", fsv.vel[c], self.fnorm[mask]))
            sig = (un + fsv.a[c]
                   + 2.0 * nu_eff[c] * self.farea[mask] / self.vol[c]) \
                * self.farea[mask]
            np.add.at(total, c, sig)
        return total, self.vol

    def stable_dt(self, cfl):
        total, vol = self.signal_sum()
        return float(cfl * np.min(vol / total))

    def apply_chemistry(self, dt, tol=1.0e-6):
        if self.mech is None:
            return
        from . import chemistry as ch
        lay = self.layout
        fsv = self.fs
        n = self.ncells
        e_v = fsv.e_v[:n].copy() if lay.two_temperature else None
        try:
            massf, e_v = ch.subcycle_chemistry(
                self.gas, self.mech, fsv.rho[:n].copy(), fsv.e[:n].copy(),
                fsv.massf[:n].copy(), dt, tol=tol, e_v=e_v)
        except (ch.StiffCellError, FloatingPointError) as exc:
            raise FlowDivergence(
                f"block {self.blk_id}: chemistry update failed: {exc}") \
                from exc
        self.U[:n, lay.i_species] = fsv.rho[:n, None] * massf
        if lay.two_temperature:
            self.U[:n, lay.i_ev] = fsv.rho[:n] * e_v
        self.decode_interior()


def bc_fill_unstructured(bc, blk, ks, gs, ii):
    """Fill unstructured ghost slots gs from interior cells ii through bc."""
    fsv = blk.fs
    gas = blk.gas
    if isinstance(bc, SupersonicInflow):
        s = bc.state
        fsv.rho[gs] = s.rho[0]
        fsv.vel[gs] = s.vel[0]
        fsv.p[gs] = s.p[0]
        fsv.T[gs] = s.T[0]
        fsv.massf[gs] = s.massf[0]
        fsv.e[gs] = s.e[0]
        fsv.a[gs] = s.a[0]
        if fsv.Tv is not None:
            fsv.Tv[gs] = s.Tv[0]
            fsv.e_v[gs] = s.e_v[0]
        if fsv.nuhat is not None:
            fsv.nuhat[gs] = s.nuhat[0]
        return
    _copy_state_flat(fsv, gs, ii)
    if isinstance(bc, OutflowSimple):
        return
    nrm = blk.fnorm[blk.bface_ids[ks]]
    if isinstance(bc, SlipWall):
        v = fsv.vel[ii]
        vn = np.einsum("fk,fk->f", v, nrm)
        fsv.vel[gs] = v - 2.0 * vn[:, None] * nrm
        return
    if isinstance(bc, NoslipWall):
        fsv.vel[gs] = -fsv.vel[ii]
        if fsv.nuhat is not None:
            fsv.nuhat[gs] = -fsv.nuhat[ii]
        mf = fsv.massf[ii]
        if bc.massf_wall is not None:
            mf = 2.0 * bc.massf_wall - mf
            fsv.massf[gs] = mf
        Tv = None
        if fsv.Tv is not None:
            Tv = fsv.Tv[ii]
            if bc.T_wall is not None:
                Tv = np.maximum(2.0 * bc.T_wall - Tv, 20.0)
            fsv.Tv[gs] = Tv
            fsv.e_v[gs] = gas.e_vib_mix(Tv, mf)
        if bc.T_wall is not None:
            T = np.maximum(2.0 * bc.T_wall - fsv.T[ii], 20.0)
            p = fsv.p[ii]
            rho = p / gas.pressure(np.ones_like(T), T, mf, Tv)
            fsv.T[gs] = T
            fsv.rho[gs] = rho
            fsv.e[gs] = gas.internal_energy(T, mf, Tv)
            fsv.a[gs] = gas.sound_speed(p, rho, T, mf)
        return
    if isinstance(bc, MMSDirichlet):
        c = blk.cent[gs]
        pr = bc.field.prim(gas, c[:, 0], c[:, 1], c[:, 2])
        fsv.rho[gs] = pr["rho"]
        fsv.vel[gs] = np.stack([pr["u"] + 0 * c[:, 0],
                                pr["v"] + 0 * c[:, 0],
                                pr["w"] + 0 * c[:, 0]], axis=-1)
        fsv.p[gs] = pr["p"]
        fsv.T[gs] = pr["T"]
        fsv.massf[gs] = pr["massf"]
        fsv.e[gs] = pr["e"]
        fsv.a[gs] = pr["a"]
        if fsv.nuhat is not None:
            fsv.nuhat[gs] = 0.0 if pr["nuhat"] is None else pr["nuhat"]
        return
    if isinstance(bc, Exchange):
        return  # filled by the parallel exchange phase
    raise BlockConfigError(f"unsupported unstructured BC {type(bc).__name__}")


def _copy_state_flat(fs, dst, src):
    fs.rho[dst] = fs.rho[src]
    fs.vel[dst] = fs.vel[src]
    fs.p[dst] = fs.p[src]
    fs.T[dst] = fs.T[src]
    fs.massf[dst] = fs.massf[src]
    fs.e[dst] = fs.e[src]
    fs.a[dst] = fs.a[src]
    if fs.Tv is not None:
        fs.Tv[dst] = fs.Tv[src]
        fs.e_v[dst] = fs.e_v[src]
    if fs.nuhat is not None:
        fs.nuhat[dst] = fs.nuhat[src]
