"""Thermal-nonequilibrium energy-exchange source terms.

Three mechanisms feed the vibrational-electronic energy equation:
collisional relaxation toward the translational temperature
(Landau-Teller with Millikan-White relaxation times), elastic
electron-heavy collisions, and the vibrational energy carried away or
deposited by dissociation and recombination. None of these appear in
the total-energy equation, so they only redistribute energy between the
thermal modes of a cell.
"""

import numpy as np

from . import dual as dm
from .gas import RU

ATM = 101325.0
_EXP_CAP = 500.0


def millikan_white_tau(gas, p, T, massf, species_index):
    """Relaxation time (s) of one molecule against the heavy-species bath.

    tau_sr * p = exp(A_sr (T^(-1/3) - 0.015 mu_r^(1/4)) - 18.42) with p in
    atmospheres and mu_r the reduced molar mass in g/mol; pair times are
    combined with a mole-fraction-weighted harmonic mean. A species can
    override the correlation with custom constants (mw_A, mw_B):
    tau_s * p = exp(mw_A (T^(-1/3) - mw_B) - 18.42).
    """
    s = gas.species[species_index]
    p_atm = p / ATM
    if s.mw_A is not None:
        return dm.exp(s.mw_A * (T ** (-1.0 / 3.0) - s.mw_B) - 18.42) / p_atm
    theta = s.theta_v[0]
    x_sum = dm._zero(T)
    inv_sum = dm._zero(T)
    moles = [massf[..., i] / gas.M[i] for i in range(gas.nsp)]
    total = moles[0]
    for m in moles[1:]:
        total = total + m
    for r in range(gas.nsp):
        if r == gas.electron_index:
            continue
        mu_r = (gas.M[species_index] * gas.M[r]
                / (gas.M[species_index] + gas.M[r])) * 1000.0
        a_sr = 1.16e-3 * mu_r ** 0.5 * theta ** (4.0 / 3.0)
        tau_p = dm.exp(a_sr * (T ** (-1.0 / 3.0) - 0.015 * mu_r ** 0.25)
                       - 18.42)
        x_r = moles[r] / total
        x_sum = x_sum + x_r
        inv_sum = inv_sum + x_r / tau_p
    return (x_sum / inv_sum) / p_atm


def landau_teller_source(gas, rho, p, T, Tv, massf):
    """Relaxation of vibrational energy toward equilibrium at T (W/m^3).

    Positive when the vibrational mode is colder than translation.
    """
    out = dm._zero(T)
    for i, s in enumerate(gas.species):
        if not s.theta_v:
            continue
        tau = millikan_white_tau(gas, p, T, massf, i)
        out = out + rho * massf[..., i] * (s.e_vib(T) - s.e_vib(Tv)) / tau
    return out


def electron_translation_source(gas, rho, T, Tv, massf, nu_es):
    """Energy exchanged by elastic electron-heavy collisions (W/m^3).

    nu_es maps heavy-species index -> collision frequency (1/s), already
    evaluated at the local state.
    """
    if gas.electron_index is None:
        return dm._zero(T)
    rho_e = rho * massf[..., gas.electron_index]
    acc = dm._zero(T)
    for i, nu in nu_es.items():
        acc = acc + nu / gas.M[i]
    return 2.0 * rho_e * 1.5 * RU * (T - Tv) * acc


def vib_chem_source(gas, mech, progress, T, Tv):
    """Vibrational energy moved by dissociation/recombination (W/m^3).

    Forward (dissociation) progress removes the mean energy of a
    truncated harmonic oscillator at the effective temperature
    T* = sqrt(T Tv); recombination deposits half the dissociation energy
    less the first vibrational quantum. D is per mole.
    """
    t_star = dm.sqrt(T * Tv)
    out = dm._zero(T)
    for reac, (qf, qb) in zip(mech.reactions, progress):
        if reac.vib_chem_D is None:
            continue
        theta = gas.species[reac.vib_chem_species].theta_v[0]
        d = reac.vib_chem_D
        e_f = RU * theta / (dm.exp(theta / t_star) - 1.0) \
            - d / (dm.exp(dm.minimum(d / (RU * t_star), _EXP_CAP)) - 1.0)
        e_b = 0.5 * (d - theta * RU)
        out = out - qf * e_f + qb * e_b
    return out


def exchange_source(gas, mech, rho, p, T, Tv, massf, progress=None,
                    nu_es=None):
    """Total source on the vibrational-electronic energy equation."""
    out = landau_teller_source(gas, rho, p, T, Tv, massf)
    if nu_es:
        out = out + electron_translation_source(gas, rho, T, Tv, massf,
                                                nu_es)
    if mech is not None and progress is not None:
        out = out + vib_chem_source(gas, mech, progress, T, Tv)
    return out
