"""Flow state containers and conserved-variable encode/decode.

The conserved vector per cell is laid out as

    [rho, rho*u, rho*v, rho*w, rho*E, rho_1..rho_nsp, rho*e_v, rho*nu_hat]

with the species block present only for multi-species gas models, the
vibrational energy only for two-temperature models, and the turbulence
variable only when the one-equation model is active. The z-momentum slot
is always present and stays exactly zero in 2D.

Decode is the only place unphysical states are repaired: species densities
are clipped to [0, rho] and renormalized, and nu_hat/e_v are clipped
non-negative, each bumping a diagnostics counter. Negative density,
negative pressure, or non-finite input raises FlowDivergence.
"""

from dataclasses import dataclass, field

import numpy as np

from . import dual as dm


class FlowDivergence(Exception):
    """The solution left the physical regime (NaN or negative rho/p)."""


class ConservedLayout:
    def __init__(self, gas, two_temperature=False, turbulence=False):
        self.nsp = gas.nsp
        self.multi_species = gas.nsp > 1
        self.two_temperature = two_temperature
        self.turbulence = turbulence
        self.i_mass = 0
        self.i_mom = slice(1, 4)
        self.i_energy = 4
        n = 5
        if self.multi_species:
            self.i_species = slice(n, n + gas.nsp)
            n += gas.nsp
        else:
            self.i_species = None
        if two_temperature:
            self.i_ev = n
            n += 1
        else:
            self.i_ev = None
        if turbulence:
            self.i_nuhat = n
            n += 1
        else:
            self.i_nuhat = None
        self.ncons = n


@dataclass
class DecodeDiagnostics:
    species_clips: int = 0
    ev_clips: int = 0
    nuhat_clips: int = 0

    def merge(self, other):
        self.species_clips += other.species_clips
        self.ev_clips += other.ev_clips
        self.nuhat_clips += other.nuhat_clips


@dataclass
class FlowState:
    """Primitive flow variables, one numpy array per field, cells leading."""
    rho: np.ndarray
    vel: np.ndarray          # (..., 3)
    p: np.ndarray
    T: np.ndarray
    massf: np.ndarray        # (..., nsp)
    e: np.ndarray            # specific internal energy incl. formation
    a: np.ndarray            # frozen sound speed
    Tv: np.ndarray = None
    e_v: np.ndarray = None   # specific vibrational/electronic energy
    nuhat: np.ndarray = None

    def copy(self):
        return FlowState(*(None if x is None else np.copy(x) for x in (
            self.rho, self.vel, self.p, self.T, self.massf, self.e, self.a,
            self.Tv, self.e_v, self.nuhat)))


def make_flow_state(gas, n, rho, T, vel, massf=None, Tv=None, nuhat=0.0):
    """Uniform FlowState of n cells from scalars (used for fills and BCs)."""
    if massf is None:
        massf = np.zeros(gas.nsp)
        massf[0] = 1.0
    massf = np.asarray(massf, dtype=float)
    if massf.shape != (gas.nsp,):
        raise ValueError(f"massf needs {gas.nsp} entries")
    if abs(massf.sum() - 1.0) > 1.0e-8:
        raise ValueError("mass fractions must sum to 1")
    rho_a = np.full(n, float(rho))
    T_a = np.full(n, float(T))
    mf = np.broadcast_to(massf, (n, gas.nsp)).copy()
    vel_a = np.broadcast_to(np.asarray(vel, dtype=float), (n, 3)).copy()
    if gas.two_temperature:
        Tv_a = np.full(n, float(T if Tv is None else Tv))
        ev = gas.e_vib_mix(Tv_a, mf)
        e = gas.e_tr_mix(T_a, mf) + ev
        p = gas.pressure(rho_a, T_a, mf, Tv_a)
    else:
        Tv_a, ev = None, None
        e = gas.e_mix(T_a, mf)
        p = gas.pressure(rho_a, T_a, mf)
    a = gas.sound_speed(p, rho_a, T_a, mf)
    return FlowState(rho=rho_a, vel=vel_a, p=p, T=T_a, massf=mf, e=e, a=a,
                     Tv=Tv_a, e_v=ev, nuhat=np.full(n, float(nuhat)))


def encode(gas, layout, fs):
    """FlowState -> conserved array (..., ncons)."""
    U = np.zeros(fs.rho.shape + (layout.ncons,))
    U[..., layout.i_mass] = fs.rho
    U[..., layout.i_mom] = fs.rho[..., None] * fs.vel
    ke = 0.5 * np.sum(fs.vel ** 2, axis=-1)
    E = fs.e + ke
    if layout.turbulence:
        nuhat = fs.nuhat if fs.nuhat is not None else np.zeros_like(fs.rho)
        U[..., layout.i_nuhat] = fs.rho * nuhat
    U[..., layout.i_energy] = fs.rho * E
    if layout.multi_species:
        U[..., layout.i_species] = fs.rho[..., None] * fs.massf
    if layout.two_temperature:
        U[..., layout.i_ev] = fs.rho * fs.e_v
    return U


def decode(gas, layout, U, fs=None, diag=None, where=None):
    """Conserved array -> FlowState; repairs bounded fields, flags the rest.

    fs, when given, is updated in place and its T/Tv act as Newton warm
    starts. `where` restricts the update to a boolean mask or index array
    (used to decode only ghost cells after an exchange).
    """
    if where is not None:
        if fs is None:
            raise ValueError("masked decode needs an existing FlowState")
        sub = decode(gas, layout, U[where], _slice_fs(fs, where), diag)
        _scatter_fs(fs, sub, where)
        return fs

    rho = U[..., layout.i_mass]
    if not np.all(np.isfinite(U)):
        raise FlowDivergence("non-finite conserved state")
    if np.any(rho <= 0.0):
        raise FlowDivergence("non-positive density")
    vel = U[..., layout.i_mom] / rho[..., None]
    E = U[..., layout.i_energy] / rho
    e = E - 0.5 * np.sum(vel ** 2, axis=-1)

    if layout.multi_species:
        rho_s = U[..., layout.i_species]
        clipped = np.clip(rho_s, 0.0, rho[..., None])
        nclip = int(np.count_nonzero(clipped != rho_s))
        massf = clipped / np.sum(clipped, axis=-1)[..., None]
        if diag is not None:
            diag.species_clips += nclip
    else:
        massf = np.ones(rho.shape + (1,))

    nuhat = None
    if layout.turbulence:
        nuhat = U[..., layout.i_nuhat] / rho
        neg = nuhat < 0.0
        if np.any(neg):
            if diag is not None:
                diag.nuhat_clips += int(np.count_nonzero(neg))
            nuhat = np.where(neg, 0.0, nuhat)

    Tv = e_v = None
    if layout.two_temperature:
        e_v = U[..., layout.i_ev] / rho
        neg = e_v < 0.0
        if np.any(neg):
            if diag is not None:
                diag.ev_clips += int(np.count_nonzero(neg))
            e_v = np.where(neg, 0.0, e_v)
        e_tr = e - e_v
        T = gas.T_from_e(e_tr, massf, None if fs is None else fs.T)
        has_vib = np.sum(massf * gas.vib_mask, axis=-1) > 1.0e-12
        Tv = np.where(has_vib, gas.Tv_from_ev(np.maximum(e_v, 0.0), massf), T)
        p = gas.pressure(rho, T, massf, Tv)
    else:
        T = gas.T_from_e(e, massf, None if fs is None else fs.T)
        p = gas.pressure(rho, T, massf)

    if np.any(p <= 0.0) or not np.all(np.isfinite(p)):
        raise FlowDivergence("non-positive or non-finite pressure")
    a = gas.sound_speed(p, rho, T, massf)

    if fs is None:
        return FlowState(rho=np.array(rho), vel=np.array(vel), p=p, T=T,
                         massf=massf, e=e, a=a, Tv=Tv, e_v=e_v, nuhat=nuhat)
    fs.rho[...] = rho
    fs.vel[...] = vel
    fs.p[...] = p
    fs.T[...] = T
    fs.massf[...] = massf
    fs.e[...] = e
    fs.a[...] = a
    if layout.two_temperature:
        fs.Tv[...] = Tv
        fs.e_v[...] = e_v
    if layout.turbulence:
        fs.nuhat[...] = nuhat
    return fs


def _slice_fs(fs, idx):
    return FlowState(
        rho=fs.rho[idx], vel=fs.vel[idx], p=fs.p[idx], T=fs.T[idx],
        massf=fs.massf[idx], e=fs.e[idx], a=fs.a[idx],
        Tv=None if fs.Tv is None else fs.Tv[idx],
        e_v=None if fs.e_v is None else fs.e_v[idx],
        nuhat=None if fs.nuhat is None else fs.nuhat[idx])


def _scatter_fs(fs, sub, idx):
    fs.rho[idx] = sub.rho
    fs.vel[idx] = sub.vel
    fs.p[idx] = sub.p
    fs.T[idx] = sub.T
    fs.massf[idx] = sub.massf
    fs.e[idx] = sub.e
    fs.a[idx] = sub.a
    if fs.Tv is not None:
        fs.Tv[idx] = sub.Tv
        fs.e_v[idx] = sub.e_v
    if fs.nuhat is not None:
        fs.nuhat[idx] = sub.nuhat


def decode_dual(gas, layout, Ucomps, T_guess=None):
    """Decode a single cell-batch conserved state given per-component values.

    Ucomps is a list of ncons entries (arrays or Duals). Returns a dict of
    primitive quantities; used by the source-term Jacobian, so it must stay
    differentiable: no clipping, no divergence checks.
    """
    rho = Ucomps[layout.i_mass]
    vel = [Ucomps[1] / rho, Ucomps[2] / rho, Ucomps[3] / rho]
    E = Ucomps[layout.i_energy] / rho
    ke = 0.5 * (vel[0] ** 2 + vel[1] ** 2 + vel[2] ** 2)
    e = E - ke
    if layout.multi_species:
        total = 0.0
        for i in range(layout.nsp):
            total = total + Ucomps[layout.i_species.start + i]
        massf = dm.stack(
            [Ucomps[layout.i_species.start + i] / total for i in range(layout.nsp)], axis=-1)
    else:
        massf = dm.stack([1.0 + 0.0 * dm.value(rho)], axis=-1)
    out = {"rho": rho, "vel": vel, "massf": massf}
    if layout.two_temperature:
        e_v = Ucomps[layout.i_ev] / rho
        e_tr = e - e_v
        T = gas.T_from_e(e_tr, massf, T_guess)
        Tv = gas.Tv_from_ev(dm.maximum(e_v, 1.0e-30), massf)
        out["Tv"] = Tv
        out["e_v"] = e_v
        out["p"] = gas.pressure(rho, T, massf, Tv)
    else:
        T = gas.T_from_e(e, massf, T_guess)
        out["p"] = gas.pressure(rho, T, massf)
    out["T"] = T
    if layout.turbulence:
        out["nuhat"] = Ucomps[layout.i_nuhat] / rho
    return out
