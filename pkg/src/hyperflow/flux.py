"""Pointwise inviscid and viscous flux kernels.

Every kernel works on dictionaries of broadcastable components (plain
arrays or dual numbers) so the same code serves face-flux evaluation in
the solver and analytic flux divergence when manufacturing source terms.
A primitive state dict carries rho, u, v, w, p, T, e, a, massf, and
optionally Tv, e_v, nuhat; conserved and flux vectors are returned as
component lists ordered like the conserved layout.

The upwind scheme is a flux-vector/flux-difference hybrid that switches
between a pressure-based velocity splitting for the normal momentum and
a mass-flux-weighted average, with an entropy fix across sonic
expansions. A plain central-plus-scalar-dissipation flux is available
for blending near strong shocks, keyed on the local pressure jump.
"""

import numpy as np

from . import dual as dm
from . import turbulence

K_SWITCH = 10.0
ENTROPY_FIX_C = 0.125
BLEND_LO = 0.1
BLEND_WIDTH = 0.4


def face_prim(gas, rho, u, v, w, p, massf, Tv=None, nuhat=None):
    """Complete a primitive state from reconstructed rho, velocity, p.

    Temperature follows from the equation of state; with a second thermal
    mode the electron partial pressure is evaluated at Tv and the heavy
    species carry the rest.
    """
    if gas.two_temperature:
        r_heavy = dm._zero(rho)
        p_e = dm._zero(rho)
        for i, s in enumerate(gas.species):
            if i == gas.electron_index:
                p_e = rho * massf[..., i] * s.R * Tv
            else:
                r_heavy = r_heavy + massf[..., i] * s.R
        T = (p - p_e) / (rho * r_heavy)
        e_v = gas.e_vib_mix(Tv, massf)
        e = gas.e_tr_mix(T, massf) + e_v
    else:
        T = p / (rho * gas.R_mix(massf))
        e = gas.e_mix(T, massf)
        e_v = None
    prim = {
        "rho": rho, "u": u, "v": v, "w": w, "p": p, "T": T, "e": e,
        "a": gas.sound_speed(p, rho, T, massf), "massf": massf,
        "Tv": Tv, "e_v": e_v, "nuhat": nuhat,
    }
    return prim


def conserved_from_prim(gas, layout, prim):
    """Component list of conserved quantities for one primitive state."""
    rho = prim["rho"]
    u, v, w = prim["u"], prim["v"], prim["w"]
    ke = 0.5 * (u * u + v * v + w * w)
    comps = [rho, rho * u, rho * v, rho * w, rho * (prim["e"] + ke)]
    if gas.nsp > 1:
        for i in range(gas.nsp):
            comps.append(rho * prim["massf"][..., i])
    if layout.i_ev is not None:
        comps.append(rho * prim["e_v"])
    if layout.i_nuhat is not None:
        comps.append(rho * prim["nuhat"])
    return comps


def inviscid_flux(gas, layout, prim, nx, ny, nz):
    """Exact one-sided inviscid flux dotted with the unit normal."""
    rho = prim["rho"]
    u, v, w, p = prim["u"], prim["v"], prim["w"], prim["p"]
    un = u * nx + v * ny + w * nz
    mdot = rho * un
    ke = 0.5 * (u * u + v * v + w * w)
    comps = [mdot,
             mdot * u + p * nx,
             mdot * v + p * ny,
             mdot * w + p * nz,
             mdot * (prim["e"] + ke) + p * un]
    if gas.nsp > 1:
        for i in range(gas.nsp):
            comps.append(mdot * prim["massf"][..., i])
    if layout.i_ev is not None:
        comps.append(mdot * prim["e_v"])
    if layout.i_nuhat is not None:
        comps.append(mdot * prim["nuhat"])
    return comps


def _passives(gas, layout, prim):
    """Quantities advected with the mass flux beyond the 5 core ones."""
    out = []
    if gas.nsp > 1:
        for i in range(gas.nsp):
            out.append(prim["massf"][..., i])
    if layout.i_ev is not None:
        out.append(prim["e_v"])
    if layout.i_nuhat is not None:
        out.append(prim["nuhat"])
    return out


def ausmdv(gas, layout, prim_l, prim_r, nx, ny, nz):
    """Upwind split flux of Wada and Liou with an entropy fix."""
    rho_l, rho_r = prim_l["rho"], prim_r["rho"]
    p_l, p_r = prim_l["p"], prim_r["p"]
    un_l = prim_l["u"] * nx + prim_l["v"] * ny + prim_l["w"] * nz
    un_r = prim_r["u"] * nx + prim_r["v"] * ny + prim_r["w"] * nz
    a_l, a_r = prim_l["a"], prim_r["a"]

    por_l = p_l / rho_l
    por_r = p_r / rho_r
    alpha_l = 2.0 * por_l / (por_l + por_r)
    alpha_r = 2.0 * por_r / (por_l + por_r)
    cm = dm.maximum(a_l, a_r)

    sub_l = dm.absolute(un_l) <= dm.value(cm)
    m_l = un_l / cm
    u_plus_half = 0.5 * (un_l + dm.absolute(un_l))
    u_plus = dm.where(
        sub_l,
        alpha_l * ((un_l + cm) * (un_l + cm) / (4.0 * cm) - u_plus_half)
        + u_plus_half,
        u_plus_half)
    p_plus = dm.where(
        sub_l,
        0.25 * p_l * (m_l + 1.0) * (m_l + 1.0) * (2.0 - m_l),
        p_l * np.where(dm.value(un_l) > 0.0, 1.0, 0.0))

    sub_r = dm.absolute(un_r) <= dm.value(cm)
    m_r = un_r / cm
    u_minus_half = 0.5 * (un_r - dm.absolute(un_r))
    u_minus = dm.where(
        sub_r,
        alpha_r * (-(un_r - cm) * (un_r - cm) / (4.0 * cm) - u_minus_half)
        + u_minus_half,
        u_minus_half)
    p_minus = dm.where(
        sub_r,
        0.25 * p_r * (m_r - 1.0) * (m_r - 1.0) * (2.0 + m_r),
        p_r * np.where(dm.value(un_r) < 0.0, 1.0, 0.0))

    mdot = u_plus * rho_l + u_minus * rho_r
    p_half = p_plus + p_minus

    # Normal momentum: blend the flux-vector (V) and flux-difference (D)
    # forms on the local pressure jump.
    rhou2_v = u_plus * rho_l * un_l + u_minus * rho_r * un_r
    rhou2_d = 0.5 * (mdot * (un_l + un_r) - dm.absolute(mdot) * (un_r - un_l))
    s = 0.5 * dm.minimum(
        1.0, K_SWITCH * dm.absolute(p_r - p_l) / dm.minimum(p_l, p_r))
    rhou2 = (0.5 + s) * rhou2_v + (0.5 - s) * rhou2_d

    upwind_l = dm.value(mdot) >= 0.0

    def up(ql, qr):
        return dm.where(upwind_l, ql, qr)

    ut_x = up(prim_l["u"] - un_l * nx, prim_r["u"] - un_r * nx)
    ut_y = up(prim_l["v"] - un_l * ny, prim_r["v"] - un_r * ny)
    ut_z = up(prim_l["w"] - un_l * nz, prim_r["w"] - un_r * nz)
    h_l = prim_l["e"] + por_l + 0.5 * (
        prim_l["u"] ** 2 + prim_l["v"] ** 2 + prim_l["w"] ** 2)
    h_r = prim_r["e"] + por_r + 0.5 * (
        prim_r["u"] ** 2 + prim_r["v"] ** 2 + prim_r["w"] ** 2)

    comps = [mdot,
             rhou2 * nx + mdot * ut_x + p_half * nx,
             rhou2 * ny + mdot * ut_y + p_half * ny,
             rhou2 * nz + mdot * ut_z + p_half * nz,
             mdot * up(h_l, h_r)]
    for q_l, q_r in zip(_passives(gas, layout, prim_l),
                        _passives(gas, layout, prim_r)):
        comps.append(mdot * up(q_l, q_r))

    # Entropy fix: smear the flux across an expansion that straddles a
    # sonic point on one acoustic family only.
    case_a = (dm.value(un_l - a_l) < 0.0) & (dm.value(un_r - a_r) > 0.0)
    case_b = (dm.value(un_l + a_l) < 0.0) & (dm.value(un_r + a_r) > 0.0)
    zero = dm._zero(mdot)
    d_ua = dm.where(case_a & ~case_b,
                    ENTROPY_FIX_C * ((un_r - a_r) - (un_l - a_l)), zero)
    d_ua = dm.where(case_b & ~case_a,
                    ENTROPY_FIX_C * ((un_r + a_r) - (un_l + a_l)), d_ua)
    cons_l = conserved_from_prim(gas, layout, prim_l)
    cons_r = conserved_from_prim(gas, layout, prim_r)
    return [f - d_ua * (ur - ul)
            for f, ul, ur in zip(comps, cons_l, cons_r)]


def dissipative_flux(gas, layout, prim_l, prim_r, nx, ny, nz):
    """Central flux with scalar dissipation on the fastest wave speed."""
    f_l = inviscid_flux(gas, layout, prim_l, nx, ny, nz)
    f_r = inviscid_flux(gas, layout, prim_r, nx, ny, nz)
    un_l = prim_l["u"] * nx + prim_l["v"] * ny + prim_l["w"] * nz
    un_r = prim_r["u"] * nx + prim_r["v"] * ny + prim_r["w"] * nz
    smax = dm.maximum(dm.absolute(un_l) + prim_l["a"],
                      dm.absolute(un_r) + prim_r["a"])
    cons_l = conserved_from_prim(gas, layout, prim_l)
    cons_r = conserved_from_prim(gas, layout, prim_r)
    return [0.5 * (fl + fr) - 0.5 * smax * (ur - ul)
            for fl, fr, ul, ur in zip(f_l, f_r, cons_l, cons_r)]


def blend_factor(p_l, p_r):
    """0 in smooth flow, ramping to 1 across strong pressure jumps."""
    ratio = dm.absolute(p_r - p_l) / dm.minimum(p_l, p_r)
    return dm.clip((ratio - BLEND_LO) / BLEND_WIDTH, 0.0, 1.0)


def adaptive_flux(gas, layout, prim_l, prim_r, nx, ny, nz):
    """Upwind flux away from shocks, dissipative flux across them."""
    sigma = blend_factor(prim_l["p"], prim_r["p"])
    f_u = ausmdv(gas, layout, prim_l, prim_r, nx, ny, nz)
    f_d = dissipative_flux(gas, layout, prim_l, prim_r, nx, ny, nz)
    return [(1.0 - sigma) * fu + sigma * fd for fu, fd in zip(f_u, f_d)]


FLUX_SCHEMES = {"ausmdv": ausmdv, "dissipative": dissipative_flux,
                "adaptive": adaptive_flux}


def species_enthalpy(gas, i, T, Tv=None):
    """Specific enthalpy of one species for the diffusive energy flux."""
    s = gas.species[i]
    if gas.two_temperature:
        h = s.cv_tr * T + gas._e_chem[i] + s.R * T
        if s.theta_v:
            h = h + s.e_vib(Tv)
        return h
    return s.h(T)


def viscous_flux(gas, layout, prim, grad, mu_t=None, with_turb_visc=True):
    """Viscous flux dotted with the unit normal stored in grad["n"].

    grad maps each primitive name to a 3-tuple of spatial derivative
    components: u, v, w, T always; Tv, nuhat, massf (list per species)
    when those fields are active. Sign convention: the returned components
    are added to the inviscid flux with a minus, so positive conduction
    (kappa grad T) carries energy from hot to cold.
    """
    nx, ny, nz = grad["n"]
    T = prim["T"]
    massf = prim["massf"]
    mu = gas.viscosity(T, massf)
    kappa = gas.conductivity(mu, T, massf)
    if mu_t is None and layout.i_nuhat is not None and with_turb_visc:
        mu_t = turbulence.mu_turb(prim["rho"], prim["nuhat"], mu)
    if mu_t is None:
        mu_t = 0.0
    mu_eff = mu + mu_t
    kappa_eff = kappa + mu_t * gas.cp_mix(T, massf) / gas.prandtl_turb

    ux, uy, uz = grad["u"]
    vx, vy, vz = grad["v"]
    wx, wy, wz = grad["w"]
    divv = ux + vy + wz
    lam = -2.0 / 3.0 * mu_eff
    tau_xx = 2.0 * mu_eff * ux + lam * divv
    tau_yy = 2.0 * mu_eff * vy + lam * divv
    tau_zz = 2.0 * mu_eff * wz + lam * divv
    tau_xy = mu_eff * (uy + vx)
    tau_xz = mu_eff * (uz + wx)
    tau_yz = mu_eff * (vz + wy)

    tx, ty, tz = grad["T"]
    qx = kappa_eff * tx
    qy = kappa_eff * ty
    qz = kappa_eff * tz
    if layout.i_ev is not None:
        kappa_v = gas.conductivity_vib(mu, prim["Tv"], massf)
        tvx, tvy, tvz = grad["Tv"]
        qvx = kappa_v * tvx
        qvy = kappa_v * tvy
        qvz = kappa_v * tvz
        qx = qx + qvx
        qy = qy + qvy
        qz = qz + qvz

    ncons = layout.ncons
    comps = [dm._zero(T) for _ in range(ncons)]
    u, v, w = prim["u"], prim["v"], prim["w"]
    comps[1] = tau_xx * nx + tau_xy * ny + tau_xz * nz
    comps[2] = tau_xy * nx + tau_yy * ny + tau_yz * nz
    comps[3] = tau_xz * nx + tau_yz * ny + tau_zz * nz
    ex = tau_xx * u + tau_xy * v + tau_xz * w + qx
    ey = tau_xy * u + tau_yy * v + tau_yz * w + qy
    ez = tau_xz * u + tau_yz * v + tau_zz * w + qz
    comps[4] = ex * nx + ey * ny + ez * nz

    if gas.nsp > 1:
        rho_d = prim["rho"] * gas.diffusivity(mu, prim["rho"]) \
            + mu_t / gas.schmidt_turb
        for i in range(gas.nsp):
            yx, yy, yz = grad["massf"][i]
            jn = rho_d * (yx * nx + yy * ny + yz * nz)
            comps[layout.i_species.start + i] = jn
            h_i = species_enthalpy(gas, i, T, prim["Tv"])
            comps[4] = comps[4] + h_i * jn
            if layout.i_ev is not None and gas.species[i].theta_v:
                comps[layout.i_ev] = comps[layout.i_ev] \
                    + gas.species[i].e_vib(prim["Tv"]) * jn
    if layout.i_ev is not None:
        comps[layout.i_ev] = comps[layout.i_ev] \
            + qvx * nx + qvy * ny + qvz * nz
    if layout.i_nuhat is not None:
        nhx, nhy, nhz = grad["nuhat"]
        coef = prim["rho"] * (mu / prim["rho"] + prim["nuhat"]) \
            / turbulence.SIGMA
        comps[layout.i_nuhat] = coef * (nhx * nx + nhy * ny + nhz * nz)
    return comps
