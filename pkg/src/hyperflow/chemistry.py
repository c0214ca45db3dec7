"""Finite-rate chemical kinetics.

Reactions carry modified-Arrhenius forward rates; backward rates come
either from their own Arrhenius fit or from the equilibrium constant
built on the species Gibbs curves. Production rates work on molar
concentrations in SI units (mol/m^3), with optional third-body
efficiency weighting, an ignition-temperature gate, and an optional
geometric-mean rate-controlling temperature for two-temperature runs.

The transient (operator-split) integrator advances each cell's
composition over one flow step with an embedded Runge-Kutta-Fehlberg
pair, adapting the substep per cell. Density and total internal energy
are held fixed; temperature is re-evaluated after every substep.
"""

import json
import re

import numpy as np

from . import dual as dm
from .gas import RU, P_STD

MECH_FORMAT_VERSION = 1
MAX_SUBSTEPS = 10000
_FORMULA_RE = re.compile(r"([A-Z][a-z]?)(\d*)")
# Elements that can appear in the bundled and test mechanisms; names
# containing anything else are treated as opaque labels and checked for
# molar-mass balance only.
_ELEMENTS = {"H", "He", "C", "N", "O", "F", "Ne", "Si", "S", "Cl", "Ar",
             "Kr", "Xe", "e"}


class MechanismError(Exception):
    pass


class StiffCellError(Exception):
    """Substep cap exceeded; the cell wants the implicit coupling mode."""


def parse_formula(name):
    """Element counts from a conventional species name, or None.

    Handles names like N2, O, NO, e- ; returns None for labels that are
    not element formulas (toy species such as "A"), in which case only
    the molar-mass balance is checked.
    """
    body = name.rstrip("+-")
    counts = {}
    pos = 0
    for m in _FORMULA_RE.finditer(body):
        if m.start() != pos or m.group(1) not in _ELEMENTS:
            return None
        pos = m.end()
        counts[m.group(1)] = counts.get(m.group(1), 0) + int(m.group(2) or 1)
    if pos != len(body) or not counts:
        return None
    return counts


class Reaction:
    def __init__(self, d, gas):
        nsp = gas.nsp
        self.nu_f = np.zeros(nsp)
        self.nu_b = np.zeros(nsp)
        for name, nu in d["reactants"].items():
            self.nu_f[gas.index(name)] = float(nu)
        for name, nu in d["products"].items():
            self.nu_b[gas.index(name)] = float(nu)
        # Reactant-minus-product convention: d[X_s]/dt gets -nu_s * rate.
        self.nu = self.nu_f - self.nu_b
        self.A = float(d["A"])
        self.n = float(d.get("n", 0.0))
        self.C = float(d.get("C", 0.0))
        if self.A <= 0.0:
            raise MechanismError("Arrhenius A must be positive")
        self.backward = d.get("backward", "equilibrium")
        if self.backward not in ("equilibrium", "arrhenius", "none"):
            raise MechanismError(f"unknown backward mode {self.backward!r}")
        if self.backward == "arrhenius":
            self.A_b = float(d["A_b"])
            self.n_b = float(d.get("n_b", 0.0))
            self.C_b = float(d.get("C_b", 0.0))
        self.third_body = bool(d.get("third_body", False))
        self.efficiencies = np.ones(nsp)
        for name, eff in d.get("efficiencies", {}).items():
            self.efficiencies[gas.index(name)] = float(eff)
        self.T_ignition = d.get("T_ignition")
        self.rate_temperature = d.get("rate_temperature", "translational")
        if self.rate_temperature not in ("translational", "geometric"):
            raise MechanismError(
                f"unknown rate_temperature {self.rate_temperature!r}")
        vc = d.get("vib_chem")
        if vc is not None:
            self.vib_chem_species = gas.index(vc["molecule"])
            self.vib_chem_D = float(vc["D"])
        else:
            self.vib_chem_species = None
            self.vib_chem_D = None
        self._check_balance(gas, d)

    def _check_balance(self, gas, d):
        dm_mass = float(np.dot(self.nu, gas.M))
        if abs(dm_mass) > 1.0e-10 * float(np.dot(self.nu_f, gas.M)):
            raise MechanismError("reaction does not conserve mass")
        elems_f = {}
        elems_b = {}
        for names, nus, acc in ((d["reactants"], None, elems_f),
                                (d["products"], None, elems_b)):
            for name, nu in names.items():
                counts = parse_formula(name)
                if counts is None:
                    return
                for el, c in counts.items():
                    acc[el] = acc.get(el, 0.0) + c * float(nu)
        if elems_f != elems_b:
            raise MechanismError(
                f"element imbalance: {elems_f} vs {elems_b}")


class ReactionMechanism:
    def __init__(self, d, gas):
        if d.get("format_version") != MECH_FORMAT_VERSION:
            raise MechanismError(
                f"mechanism format_version must be {MECH_FORMAT_VERSION}")
        self.gas = gas
        self.name = d.get("name", "mechanism")
        self.reactions = [Reaction(r, gas) for r in d["reactions"]]

    def equilibrium_Kc(self, reac, T):
        """Concentration equilibrium constant for one reaction.

        Built from the species Gibbs curves so detailed balance holds:
        K_c = (p_std/(R_u T))^(-sum nu_s) * exp(+sum nu_s g_s M_s/(R_u T))
        with nu_s the reactant-minus-product coefficients.
        """
        g_sum = dm._zero(T)
        for i in range(self.gas.nsp):
            if reac.nu[i] != 0.0:
                g_sum = g_sum + reac.nu[i] \
                    * self.gas.species[i].gibbs0(T) * self.gas.M[i]
        return (P_STD / (RU * T)) ** (-float(reac.nu.sum())) \
            * dm.exp(g_sum / (RU * T))

    def rate_coefficients(self, T, Tv=None):
        """Forward and backward rate coefficients per reaction."""
        out = []
        for reac in self.reactions:
            if reac.rate_temperature == "geometric" and Tv is not None:
                T_f = dm.sqrt(T * Tv)
            else:
                T_f = T
            kf = reac.A * T_f ** reac.n * dm.exp(-reac.C / T_f)
            if reac.T_ignition is not None:
                kf = dm.where(dm.value(T) >= reac.T_ignition, kf, 0.0 * kf)
            if reac.backward == "equilibrium":
                kb = kf / self.equilibrium_Kc(reac, T)
            elif reac.backward == "arrhenius":
                kb = reac.A_b * T ** reac.n_b * dm.exp(-reac.C_b / T)
            else:
                kb = None
            out.append((kf, kb))
        return out

    def progress_rates(self, conc, T, Tv=None):
        """Forward/backward progress rate (mol/m^3/s) per reaction."""
        coeffs = self.rate_coefficients(T, Tv)
        out = []
        for reac, (kf, kb) in zip(self.reactions, coeffs):
            qf = kf
            for i in range(self.gas.nsp):
                p = int(reac.nu_f[i])
                for _ in range(p):
                    qf = qf * conc[..., i]
            if kb is None:
                qb = dm._zero(qf)
            else:
                qb = kb
                for i in range(self.gas.nsp):
                    p = int(reac.nu_b[i])
                    for _ in range(p):
                        qb = qb * conc[..., i]
            if reac.third_body:
                m_eff = dm._zero(T)
                for i in range(self.gas.nsp):
                    m_eff = m_eff + reac.efficiencies[i] * conc[..., i]
                qf = qf * m_eff
                qb = qb * m_eff
            out.append((qf, qb))
        return out

    def production_rates(self, conc, T, Tv=None):
        """Species mass production rates (kg/m^3/s), trailing species axis.

        Also returns the per-reaction progress rates for the
        vibration-chemistry energy coupling.
        """
        progress = self.progress_rates(conc, T, Tv)
        comps = []
        for i in range(self.gas.nsp):
            w = dm._zero(T)
            for reac, (qf, qb) in zip(self.reactions, progress):
                if reac.nu[i] != 0.0:
                    w = w - reac.nu[i] * (qf - qb)
            comps.append(w * self.gas.M[i])
        return dm.stack(comps, axis=-1), progress


def load_mechanism(path, gas):
    with open(path) as f:
        return ReactionMechanism(json.load(f), gas)


# Classic 6-stage Fehlberg embedded pair.
_RKF_A = [
    (),
    (0.25,),
    (3.0 / 32.0, 9.0 / 32.0),
    (1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0),
    (439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0),
    (-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0),
]
_RKF_B_HI = np.array([16.0 / 135.0, 0.0, 6656.0 / 12825.0,
                      28561.0 / 56430.0, -9.0 / 50.0, 2.0 / 55.0])
_RKF_B_LO = np.array([25.0 / 216.0, 0.0, 1408.0 / 2565.0,
                      2197.0 / 4104.0, -0.2, 0.0])


def rkf_step(f, y, h, idx=None):
    """One embedded RKF step for y' = f(y) with per-row step h.

    y is (n, nvar), h is (n,). f(y, idx) sees which rows of the original
    batch it is working on. Returns the high-order solution and the
    embedded error estimate.
    """
    k = [f(y, idx)]
    for arow in _RKF_A[1:]:
        ys = y.copy()
        for a, ki in zip(arow, k):
            ys = ys + (h[:, None] * a) * ki
        k.append(f(ys, idx))
    y_hi = y.copy()
    y_lo = y.copy()
    for bh, bl, ki in zip(_RKF_B_HI, _RKF_B_LO, k):
        y_hi = y_hi + (h[:, None] * bh) * ki
        y_lo = y_lo + (h[:, None] * bl) * ki
    return y_hi, y_hi - y_lo


def integrate_adaptive(f, y0, t_end, tol, scale, max_steps=MAX_SUBSTEPS,
                       h0=None):
    """Per-row adaptive RKF integration of y' = f(y) to t_end.

    y0 (n, nvar); t_end (n,) or scalar; scale (nvar,) sets the error
    normalisation per component. Raises StiffCellError when any row
    exceeds the substep cap.
    """
    y = np.array(y0, dtype=float)
    n = y.shape[0]
    t = np.zeros(n)
    t_end = np.broadcast_to(np.asarray(t_end, dtype=float), (n,)).copy()
    h = np.minimum(t_end, t_end.max() * 1.0e-2 if h0 is None else h0)
    h = np.where(h <= 0.0, t_end, h)
    active = t < t_end
    nstep = 0
    while np.any(active):
        nstep += 1
        if nstep > max_steps:
            ids = np.nonzero(active)[0][:8]
            raise StiffCellError(
                f"chemistry exceeded {max_steps} substeps in cells "
                f"{ids.tolist()}; consider the implicit coupling mode")
        idx = np.nonzero(active)[0]
        ya = y[idx]
        ha = np.minimum(h[idx], t_end[idx] - t[idx])
        y_hi, err = rkf_step(f, ya, ha, idx)
        enorm = np.max(np.abs(err) / (tol * scale[None, :]), axis=1)
        ok = enorm <= 1.0
        y[idx[ok]] = y_hi[ok]
        t[idx[ok]] += ha[ok]
        fac = 0.9 * np.power(np.maximum(enorm, 1.0e-16), -1.0 / 6.0)
        h[idx] = ha * np.clip(fac, 0.2, 5.0)
        active = t < t_end * (1.0 - 1.0e-14)
    return y


def subcycle_chemistry(gas, mech, rho, e_total, massf, dt, tol=1.0e-6,
                       e_v=None):
    """Advance composition (and vib energy) over dt at fixed rho, e.

    rho, e_total are (n,) cell arrays; massf (n, nsp). With a second
    thermal mode, e_v (n,) evolves under the vibration-chemistry
    coupling. Returns (massf, e_v).
    """
    from . import relaxation

    rho = np.asarray(rho, dtype=float)
    two_t = e_v is not None
    nsp = gas.nsp
    y0 = np.array(massf, dtype=float)
    if two_t:
        y0 = np.concatenate([y0, np.asarray(e_v, dtype=float)[:, None]],
                            axis=1)

    e_total = np.asarray(e_total, dtype=float)

    def f(y, idx):
        rho_a = rho[idx]
        e_a = e_total[idx]
        mf = y[:, :nsp]
        conc = rho_a[:, None] * mf / gas.M[None, :]
        if two_t:
            ev = y[:, nsp]
            Tv = gas.Tv_from_ev(ev, mf)
            T = gas.T_from_e(e_a - ev, mf)
            wdot, progress = mech.production_rates(conc, T, Tv)
            q_cv = relaxation.vib_chem_source(gas, mech, progress, T, Tv)
            return np.concatenate(
                [wdot / rho_a[:, None], (q_cv / rho_a)[:, None]], axis=1)
        T = gas.T_from_e(e_a, mf)
        wdot, _ = mech.production_rates(conc, T)
        return wdot / rho_a[:, None]

    scale = np.ones(y0.shape[1])
    if two_t:
        scale[nsp] = max(float(np.max(np.abs(y0[:, nsp]))), 1.0e4)
    y = integrate_adaptive(f, y0, dt, tol, scale)
    mf = y[:, :nsp]
    worst = mf.min()
    if worst < -1.0e-12:
        raise FloatingPointError(
            f"chemistry integration produced mass fraction {worst}")
    mf = np.clip(mf, 0.0, None)
    return (mf, y[:, nsp]) if two_t else (mf, None)
