"""Generate the bundled gas-model JSON files.

Specific heats for the air species are rigid-rotor/harmonic-oscillator
curves (translation + rotation constant, analytic vibrational cp at the
characteristic temperature), fitted with piecewise degree-4 polynomials.
Electronic excitation is neglected. Molar masses, formation enthalpies,
standard entropies, and vibrational temperatures are standard handbook
values; Sutherland constants for the atoms and NO are approximate since
no acceptance case depends on them.

Run from the repository root:  python tools/gen_thermo.py
"""

import json
import os

import numpy as np

RU = 8.314462618
OUT = os.path.join(os.path.dirname(__file__), "..", "src", "hyperflow", "data")

# name: (M kg/mol, h_f J/mol, s0_298 J/mol/K, theta_v K or None, sutherland)
AIR_SPECIES = {
    "N2": (0.0280134, 0.0, 191.609, 3393.0, (1.663e-5, 273.0, 107.0)),
    "O2": (0.0319988, 0.0, 205.147, 2273.0, (1.919e-5, 273.0, 139.0)),
    "N": (0.0140067, 472.68e3, 153.301, None, (1.00e-5, 273.0, 80.0)),
    "O": (0.0159994, 249.18e3, 161.059, None, (1.20e-5, 273.0, 80.0)),
    "NO": (0.0300061, 91.271e3, 210.758, 2739.0, (1.80e-5, 273.0, 128.0)),
}


def cp_rrho(T, R, theta_v):
    cp = 3.5 * R * np.ones_like(T) if theta_v else 2.5 * R * np.ones_like(T)
    if theta_v:
        x = theta_v / T
        cp = cp + R * x * x * np.exp(x) / np.expm1(x) ** 2
    return cp


def fit_species(name):
    M, hf_mol, s0, theta_v, suth = AIR_SPECIES[name]
    R = RU / M
    if theta_v is None:
        ranges = [[200.0, 20000.0]]
        coeffs = [[2.5 * R]]
    else:
        ranges = [[200.0, 700.0], [700.0, 2000.0], [2000.0, 6000.0]]
        coeffs = []
        for lo, hi in ranges:
            T = np.linspace(lo, hi, 400)
            c = np.polyfit(T, cp_rrho(T, R, theta_v), 4)[::-1]
            err = np.max(np.abs(np.polyval(c[::-1], T) / cp_rrho(T, R, theta_v) - 1.0))
            assert err < 3.0e-3, (name, err)
            coeffs.append(list(c))
    d = {
        "name": name,
        "M": M,
        "h_f": hf_mol / M,
        "s0_298": s0,
        "linear": theta_v is not None,
        "cp_fit": {"ranges": ranges, "coeffs": coeffs},
        "sutherland": {"mu_ref": suth[0], "T_ref": suth[1], "S": suth[2]},
    }
    if theta_v is not None:
        d["theta_v"] = [theta_v]
    return d


def write(name, d):
    path = os.path.join(OUT, name)
    with open(path, "w") as f:
        json.dump(d, f, indent=1)
        f.write("\n")
    print("wrote", path)


def main():
    os.makedirs(OUT, exist_ok=True)
    air5 = [fit_species(n) for n in ("N2", "O2", "N", "O", "NO")]

    write("air5.json", {
        "format_version": 1, "name": "air5", "model": "thermally_perfect",
        "prandtl": 0.72, "schmidt": 0.7, "species": air5})

    write("air5-2T.json", {
        "format_version": 1, "name": "air5-2T", "model": "two_temperature",
        "prandtl": 0.72, "schmidt": 0.7, "species": air5})

    write("n2-2T.json", {
        "format_version": 1, "name": "n2-2T", "model": "two_temperature",
        "prandtl": 0.72, "schmidt": 0.7,
        "species": [fit_species("N2"), fit_species("N")]})

    # single-species calorically perfect air with R = 287 J/kg/K exactly
    write("air.json", {
        "format_version": 1, "name": "air", "model": "calorically_perfect",
        "prandtl": 0.72, "schmidt": 0.7,
        "species": [{
            "name": "air", "M": RU / 287.0, "gamma": 1.4, "s0_298": 198.8,
            "sutherland": {"mu_ref": 1.716e-5, "T_ref": 273.0, "S": 111.0}}]})

    # two-species model for the heat-release verification case: A burns to B
    # with 2.5e5 J/kg carried as A's formation enthalpy, gamma = 1.2 for both
    write("ab-gamma12.json", {
        "format_version": 1, "name": "ab-gamma12", "model": "calorically_perfect",
        "prandtl": 0.72, "schmidt": 0.7,
        "species": [
            {"name": "A", "M": RU / 287.0, "gamma": 1.2, "h_f": 2.5e5, "s0_298": 200.0,
             "sutherland": {"mu_ref": 1.716e-5, "T_ref": 273.0, "S": 111.0}},
            {"name": "B", "M": RU / 287.0, "gamma": 1.2, "h_f": 0.0, "s0_298": 200.0,
             "sutherland": {"mu_ref": 1.716e-5, "T_ref": 273.0, "S": 111.0}}]})

    d_n2 = 2 * 472.68e3
    d_o2 = 2 * 249.18e3
    write("air5-chem.json", {
        "format_version": 1, "name": "air5-chem",
        "reactions": [
            {"reactants": {"N2": 1}, "products": {"N": 2}, "third_body": True,
             "efficiencies": {"N": 4.286, "O": 4.286},
             "A": 7.0e15, "n": -1.6, "C": 113200.0, "backward": "equilibrium",
             "vib_chem": {"molecule": "N2", "D": d_n2}},
            {"reactants": {"O2": 1}, "products": {"O": 2}, "third_body": True,
             "efficiencies": {"N": 5.0, "O": 5.0},
             "A": 2.0e15, "n": -1.5, "C": 59500.0, "backward": "equilibrium",
             "vib_chem": {"molecule": "O2", "D": d_o2}},
            {"reactants": {"NO": 1}, "products": {"N": 1, "O": 1}, "third_body": True,
             "efficiencies": {"N": 22.0, "O": 22.0, "NO": 22.0},
             "A": 5.0e9, "n": 0.0, "C": 75500.0, "backward": "equilibrium"},
            {"reactants": {"N2": 1, "O": 1}, "products": {"NO": 1, "N": 1},
             "A": 6.4e11, "n": -1.0, "C": 38400.0, "backward": "equilibrium"},
            {"reactants": {"NO": 1, "O": 1}, "products": {"O2": 1, "N": 1},
             "A": 8.4e6, "n": 0.0, "C": 19450.0, "backward": "equilibrium"}]})

    write("o2-diss-chem.json", {
        "format_version": 1, "name": "o2-diss-chem",
        "reactions": [
            {"reactants": {"O2": 1}, "products": {"O": 2}, "third_body": True,
             "A": 2.0e15, "n": -1.5, "C": 59500.0, "backward": "equilibrium"}]})

    write("o2-only.json", {
        "format_version": 1, "name": "o2-only", "model": "thermally_perfect",
        "prandtl": 0.72, "schmidt": 0.7,
        "species": [fit_species("O2"), fit_species("O")]})


if __name__ == "__main__":
    main()
