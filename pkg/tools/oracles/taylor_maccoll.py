"""Taylor-Maccoll conical-flow oracle.

Computes the shock-wave angle for supersonic flow over a sharp cone by
brute force: guess a shock angle, jump across the oblique shock, then
integrate the Taylor-Maccoll equation inward in the polar angle until
the cross-flow velocity vanishes; that angle is the cone surface the
guessed shock supports.  A bracketing root find matches it to the
requested cone half-angle.

Run:  python3 tools/oracles/taylor_maccoll.py
"""

import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

RU = 8.314462618
M_AIR = 0.028970253024390245


def oblique_jump(M1, beta, gamma):
    """Deflection angle and post-shock Mach number across an oblique shock."""
    Mn1 = M1 * math.sin(beta)
    Mn2sq = (1.0 + 0.5 * (gamma - 1.0) * Mn1 ** 2) \
        / (gamma * Mn1 ** 2 - 0.5 * (gamma - 1.0))
    delta = math.atan(2.0 / math.tan(beta)
                      * (Mn1 ** 2 - 1.0)
                      / (M1 ** 2 * (gamma + math.cos(2.0 * beta)) + 2.0))
    M2 = math.sqrt(Mn2sq) / math.sin(beta - delta)
    return delta, M2


def cone_angle_for_shock(M1, beta, gamma):
    """Cone half-angle (radians) supported by shock angle beta."""
    delta, M2 = oblique_jump(M1, beta, gamma)
    # Velocities normalised by the maximum (total-enthalpy) speed.
    V2 = (2.0 / ((gamma - 1.0) * M2 ** 2) + 1.0) ** -0.5
    vr0 = V2 * math.cos(beta - delta)
    vt0 = -V2 * math.sin(beta - delta)

    def rhs(theta, y):
        vr, vt = y
        b2 = 0.5 * (gamma - 1.0) * (1.0 - vr ** 2 - vt ** 2)
        dvt = (vt ** 2 * vr - b2 * (2.0 * vr + vt / math.tan(theta))) \
            / (b2 - vt ** 2)
        return [vt, dvt]

    def crossflow_zero(theta, y):
        return y[1]
    crossflow_zero.terminal = True
    crossflow_zero.direction = 1.0

    sol = solve_ivp(rhs, (beta, 1.0e-6), [vr0, vt0], events=crossflow_zero,
                    rtol=1.0e-10, atol=1.0e-12, max_step=1.0e-3)
    if sol.t_events[0].size == 0:
        raise RuntimeError(f"no cone surface found for beta={beta}")
    return float(sol.t_events[0][0])


def shock_angle(M1, theta_c, gamma):
    """Weak-branch shock angle (radians) for cone half-angle theta_c."""
    lo = math.asin(1.0 / M1) + 1.0e-6

    def f(beta):
        return cone_angle_for_shock(M1, beta, gamma) - theta_c

    hi = lo
    while f(hi) < 0.0:
        hi += math.radians(1.0)
    return brentq(f, hi - math.radians(1.0), hi, xtol=1.0e-12)


def main():
    gamma = 1.4
    R = RU / M_AIR
    T, u = 1103.0, 1000.0
    a = math.sqrt(gamma * R * T)
    M1 = u / a
    beta = shock_angle(M1, math.radians(20.0), gamma)
    print(f"M1            = {M1!r}")
    print(f"beta(20 deg)  = {math.degrees(beta)!r} deg")
    # Sensitivity band for the acceptance tolerance.
    for dM in (-0.01, 0.01):
        b = shock_angle(M1 + dM, math.radians(20.0), gamma)
        print(f"beta(M1{dM:+.2f}) = {math.degrees(b)!r} deg")


if __name__ == "__main__":
    main()
