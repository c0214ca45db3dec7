"""Gas models: mixture thermodynamics, equilibrium constants, transport.

Species data comes from JSON files carrying molar mass, formation enthalpy,
standard entropy, characteristic vibrational temperatures, piecewise
polynomial cp(T) fits, and Sutherland viscosity constants. Three model
flavours share the same data:

  calorically_perfect : constant cp (single-coefficient fit)
  thermally_perfect   : cp(T) polynomials, one temperature
  two_temperature     : constant translational/rotational cv plus harmonic
                        oscillator vibrational energy at its own temperature

Energies are specific (J/kg) with the formation enthalpy folded into each
species' h(T) so that reaction energetics fall out of the energy equation
without separate bookkeeping. All routines accept plain numpy arrays or
Dual numbers from hyperflow.dual.
"""

import json
import numpy as np

from . import dual as dm

RU = 8.314462618      # J/mol/K
P_STD = 101325.0      # Pa
T_STD = 298.15        # K

GAS_FORMAT_VERSION = 1


class GasConfigError(Exception):
    pass


class Species:
    def __init__(self, d):
        self.name = d["name"]
        self.M = float(d["M"])
        self.R = RU / self.M
        self.h_f = float(d.get("h_f", 0.0))
        # standard entropy is stored molar (J/mol/K), used specific (J/kg/K)
        self.s0_298 = float(d.get("s0_298", 0.0)) / self.M
        self.theta_v = tuple(float(t) for t in d.get("theta_v", ()))
        self.linear = bool(d.get("linear", len(self.theta_v) > 0))
        # optional custom vibrational-relaxation constants
        self.mw_A = d.get("mw_A")
        self.mw_B = float(d.get("mw_B", 0.0))
        fit = d.get("cp_fit")
        if fit is None:
            gamma = float(d["gamma"])
            cp = gamma * self.R / (gamma - 1.0)
            fit = {"ranges": [[20.0, 1.0e5]], "coeffs": [[cp]]}
        self.cp_ranges = [tuple(map(float, r)) for r in fit["ranges"]]
        self.cp_coeffs = [np.asarray(c, dtype=float) for c in fit["coeffs"]]
        self._build_integrals()
        su = d.get("sutherland", {"mu_ref": 1.716e-5, "T_ref": 273.0, "S": 111.0})
        self.mu_ref = float(su["mu_ref"])
        self.T_mu_ref = float(su["T_ref"])
        self.S_mu = float(su["S"])

    def _build_integrals(self):
        # Per range, antiderivatives of cp and cp/T plus continuity offsets
        # pinned so h(T_STD) = h_f and s(T_STD) = s0_298.
        self._h_off = [0.0] * len(self.cp_ranges)
        self._s_off = [0.0] * len(self.cp_ranges)
        # chain continuity from the first range upward
        for i in range(1, len(self.cp_ranges)):
            Tj = self.cp_ranges[i][0]
            self._h_off[i] += self._h_raw(Tj, i - 1) + self._h_off[i - 1] - self._h_raw(Tj, i)
            self._s_off[i] += self._s_raw(Tj, i - 1) + self._s_off[i - 1] - self._s_raw(Tj, i)
        k = self._range_of(T_STD)
        dh = self.h_f - (self._h_raw(T_STD, k) + self._h_off[k])
        ds = self.s0_298 - (self._s_raw(T_STD, k) + self._s_off[k])
        self._h_off = [o + dh for o in self._h_off]
        self._s_off = [o + ds for o in self._s_off]
        self.T_lo = self.cp_ranges[0][0]
        self.T_hi = self.cp_ranges[-1][1]

    def _range_of(self, T):
        for i, (lo, hi) in enumerate(self.cp_ranges):
            if T <= hi:
                return i
        return len(self.cp_ranges) - 1

    def _cp_raw(self, T, i):
        acc = 0.0
        for c in self.cp_coeffs[i][::-1]:
            acc = acc * T + c
        return acc

    def _h_raw(self, T, i):
        acc = 0.0
        c = self.cp_coeffs[i]
        for k in range(len(c) - 1, -1, -1):
            acc = acc * T + c[k] / (k + 1)
        return acc * T

    def _s_raw(self, T, i):
        c = self.cp_coeffs[i]
        acc = 0.0
        for k in range(len(c) - 1, 0, -1):
            acc = acc * T + c[k] / k
        return acc * T + c[0] * dm.log(T)

    def _piecewise(self, T, fn):
        Tc = dm.clip(T, self.T_lo, self.T_hi)
        out = fn(Tc, 0)
        for i in range(1, len(self.cp_ranges)):
            out = dm.where(dm.value(Tc) > self.cp_ranges[i][0], fn(Tc, i), out)
        return out, Tc

    def cp(self, T):
        # constant extrapolation of cp outside the fitted window
        out, _ = self._piecewise(T, self._cp_raw)
        return out

    def h(self, T):
        out, Tc = self._piecewise(T, lambda t, i: self._h_raw(t, i) + self._h_off[i])
        return out + self.cp(T) * (T - Tc)

    def e(self, T):
        return self.h(T) - self.R * T

    def s0(self, T):
        out, Tc = self._piecewise(T, lambda t, i: self._s_raw(t, i) + self._s_off[i])
        return out + self.cp(T) * dm.log(T / Tc)

    def gibbs0(self, T):
        """Specific Gibbs free energy at standard pressure, J/kg."""
        return self.h(T) - T * self.s0(T)

    # -- two-temperature split -----------------------------------------
    @property
    def cv_tr(self):
        dof = 5.0 if self.linear else 3.0
        return 0.5 * dof * self.R

    def e_vib(self, Tv):
        ev = 0.0
        for th in self.theta_v:
            ev = ev + self.R * th / (dm.exp(th / Tv) - 1.0)
        return ev

    def cv_vib(self, Tv):
        cv = 0.0
        for th in self.theta_v:
            x = th / Tv
            ex = dm.exp(x)
            cv = cv + self.R * x * x * ex / (ex - 1.0) ** 2
        return cv

    def mu(self, T):
        return self.mu_ref * (T / self.T_mu_ref) ** 1.5 * (self.T_mu_ref + self.S_mu) / (T + self.S_mu)


class GasModel:
    """A named mixture of species with a thermodynamic closure."""

    def __init__(self, d):
        if d.get("format_version") != GAS_FORMAT_VERSION:
            raise GasConfigError(
                f"gas model format_version {d.get('format_version')!r} "
                f"not supported (expected {GAS_FORMAT_VERSION})")
        self.name = d.get("name", "gas")
        self.model = d.get("model", "thermally_perfect")
        if self.model not in ("calorically_perfect", "thermally_perfect", "two_temperature"):
            raise GasConfigError(f"unknown gas model type {self.model!r}")
        self.species = [Species(s) for s in d["species"]]
        if not self.species:
            raise GasConfigError("gas model needs at least one species")
        self.nsp = len(self.species)
        self.prandtl = float(d.get("prandtl", 0.72))
        self.schmidt = float(d.get("schmidt", 0.7))
        self.prandtl_turb = float(d.get("prandtl_turb", 0.89))
        self.schmidt_turb = float(d.get("schmidt_turb", 0.7))
        self.species_names = [s.name for s in self.species]
        self.M = np.array([s.M for s in self.species])
        self.Rs = np.array([s.R for s in self.species])
        self.h_f = np.array([s.h_f for s in self.species])
        self.vib_mask = np.array([1.0 if s.theta_v else 0.0 for s in self.species])
        self.electron_index = None
        for i, s in enumerate(self.species):
            if s.name in ("e-", "e"):
                self.electron_index = i
        if self.model == "two_temperature":
            # pin the split energies to the one-temperature values at T_STD
            self._e_chem = np.array([
                s.h_f - s.R * T_STD - s.cv_tr * T_STD - dm.value(s.e_vib(T_STD))
                for s in self.species])

    @property
    def two_temperature(self):
        return self.model == "two_temperature"

    def index(self, name):
        return self.species_names.index(name)

    # massf has a trailing species axis; scalar species quantities broadcast.
    def R_mix(self, massf):
        out = 0.0
        for i, s in enumerate(self.species):
            out = out + massf[..., i] * s.R
        return out

    def cp_mix(self, T, massf):
        out = 0.0
        for i, s in enumerate(self.species):
            out = out + massf[..., i] * s.cp(T)
        return out

    def cv_mix(self, T, massf):
        return self.cp_mix(T, massf) - self.R_mix(massf)

    def e_mix(self, T, massf):
        """Specific internal energy (thermal + formation) at one temperature."""
        out = 0.0
        for i, s in enumerate(self.species):
            out = out + massf[..., i] * s.e(T)
        return out

    # -- two-temperature energies ----------------------------------------
    def cv_tr_mix(self, massf):
        out = 0.0
        for i, s in enumerate(self.species):
            out = out + massf[..., i] * s.cv_tr
        return out

    def e_tr_mix(self, T, massf):
        out = 0.0
        for i, s in enumerate(self.species):
            out = out + massf[..., i] * (s.cv_tr * T + self._e_chem[i])
        return out

    def e_vib_mix(self, Tv, massf):
        out = 0.0
        for i, s in enumerate(self.species):
            if s.theta_v:
                out = out + massf[..., i] * s.e_vib(Tv)
        return out

    def cv_vib_mix(self, Tv, massf):
        out = 0.0
        for i, s in enumerate(self.species):
            if s.theta_v:
                out = out + massf[..., i] * s.cv_vib(Tv)
        return out

    # -- state relations ---------------------------------------------------
    def pressure(self, rho, T, massf, Tv=None):
        """p = sum_s rho_s R_s T, electrons (if any) at the vibrational T."""
        out = 0.0
        for i, s in enumerate(self.species):
            Ts = Tv if (i == self.electron_index and Tv is not None) else T
            out = out + rho * massf[..., i] * s.R * Ts
        return out

    def internal_energy(self, T, massf, Tv=None):
        if self.two_temperature:
            if Tv is None:
                Tv = T
            return self.e_tr_mix(T, massf) + self.e_vib_mix(Tv, massf)
        return self.e_mix(T, massf)

    def gamma_frozen(self, T, massf):
        if self.two_temperature:
            cv = self.cv_tr_mix(massf)
        else:
            cv = self.cv_mix(T, massf)
        return (cv + self.R_mix(massf)) / cv

    def sound_speed(self, p, rho, T, massf):
        return dm.sqrt(self.gamma_frozen(T, massf) * p / rho)

    def T_from_e(self, e, massf, T_guess=None, tol=1.0e-9, max_iter=50):
        """Invert e(T) by Newton with a bisection fallback.

        Dual inputs get their tangents attached by two Newton polish steps
        in dual arithmetic around the converged value (implicit function
        theorem applied numerically).
        """
        if self.two_temperature:
            cv = self.cv_tr_mix(massf)
            e0 = self.e_tr_mix(0.0 * dm.value(e), massf)
            return (e - e0) / cv

        is_dual = isinstance(e, dm.Dual) or isinstance(massf, dm.Dual)
        ev = dm.value(e)
        mfv = dm.value(massf)
        ev1 = np.atleast_1d(np.asarray(ev, dtype=float)).ravel()
        T = np.full_like(ev1, 300.0) if T_guess is None \
            else np.array(dm.value(T_guess), dtype=float, copy=True).ravel()
        mf1 = np.broadcast_to(np.asarray(mfv, dtype=float), ev1.shape + (self.nsp,)) \
            if np.ndim(mfv) <= 1 else np.asarray(mfv, dtype=float).reshape(-1, self.nsp)
        # Converged cells are latched so each cell's result is a pure
        # function of its own inputs, independent of batch composition
        # (needed for the split/unsplit reproducibility contract).
        done = np.zeros(ev1.shape, dtype=bool)
        for _ in range(max_iter):
            f = self.e_mix(T, mf1) - ev1
            dfdT = self.cv_mix(T, mf1)
            dT = np.where(done, 0.0, f / dfdT)
            # Latch before applying so a converged guess is returned
            # unchanged (decode must be a fixed point at its own output,
            # or a snapshot reload would perturb the state it restored).
            done |= np.abs(dT) <= tol * np.maximum(T, 1.0)
            T = np.where(done, T, np.clip(T - dT, 20.0, 1.0e5))
            if np.all(done):
                break
        if not np.all(done):
            T = np.where(done, T, self._bisect_T(ev1, mf1))
        Tout = T.reshape(np.shape(ev)) if np.ndim(ev) else float(T[0])
        if not is_dual:
            return Tout
        Td = Tout
        for _ in range(2):
            Td = Td - (self.e_mix(Td, massf) - e) / self.cv_mix(Td, massf)
        return Td

    def _bisect_T(self, e, massf):
        lo = np.full_like(e, 20.0)
        hi = np.full_like(e, 1.0e5)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            too_hot = self.e_mix(mid, massf) > e
            hi = np.where(too_hot, mid, hi)
            lo = np.where(too_hot, lo, mid)
        return 0.5 * (lo + hi)

    def Tv_from_ev(self, ev, massf, tol=1.0e-10, max_iter=100):
        """Invert the vibrational energy for the vibrational temperature."""
        is_dual = isinstance(ev, dm.Dual) or isinstance(massf, dm.Dual)
        evv = np.atleast_1d(np.asarray(dm.value(ev), dtype=float)).ravel()
        mfv = dm.value(massf)
        mf1 = np.broadcast_to(np.asarray(mfv, dtype=float), evv.shape + (self.nsp,)) \
            if np.ndim(mfv) <= 1 else np.asarray(mfv, dtype=float).reshape(-1, self.nsp)
        lo = np.full_like(evv, 10.0)
        hi = np.full_like(evv, 1.0e5)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            too_hot = dm.value(self.e_vib_mix(mid, mf1)) > evv
            hi = np.where(too_hot, mid, hi)
            lo = np.where(too_hot, lo, mid)
        Tv = 0.5 * (lo + hi)
        done = np.zeros(evv.shape, dtype=bool)
        for _ in range(max_iter):
            f = self.e_vib_mix(Tv, mf1) - evv
            cvv = np.maximum(self.cv_vib_mix(Tv, mf1), 1.0e-30)
            dT = np.where(done, 0.0, f / cvv)
            # Latch before applying (same fixed-point contract as T_from_e).
            done |= np.abs(dT) <= tol * Tv
            Tv = np.where(done, Tv, np.clip(Tv - dT, 10.0, 1.0e5))
            if np.all(done):
                break
        Tvout = Tv.reshape(np.shape(dm.value(ev))) if np.ndim(dm.value(ev)) else float(Tv[0])
        if not is_dual:
            return Tvout
        Td = Tvout
        for _ in range(2):
            cvv = dm.maximum(self.cv_vib_mix(Td, massf), 1.0e-30)
            Td = Td - (self.e_vib_mix(Td, massf) - ev) / cvv
        return Td

    # -- transport -----------------------------------------------------
    def viscosity(self, T, massf):
        if self.nsp == 1:
            return self.species[0].mu(T)
        conc = 0.0
        for i, s in enumerate(self.species):
            conc = conc + massf[..., i] / s.M
        out = 0.0
        for i, s in enumerate(self.species):
            out = out + (massf[..., i] / s.M) * s.mu(T)
        return out / conc

    def conductivity(self, mu, T, massf):
        return mu * self.cp_mix(T, massf) / self.prandtl

    def conductivity_vib(self, mu, Tv, massf):
        return mu * self.cv_vib_mix(Tv, massf) / self.prandtl

    def diffusivity(self, mu, rho):
        return mu / (rho * self.schmidt)


def load_gas_model(path):
    try:
        with open(path) as f:
            d = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise GasConfigError(f"cannot read gas model {path}: {exc}") from exc
    return GasModel(d)


def molar_concentrations(gas, rho, massf):
    """[X_s] in mol/m^3, trailing species axis."""
    return dm.stack([rho * massf[..., i] / gas.M[i] for i in range(gas.nsp)], axis=-1)
