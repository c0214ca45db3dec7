"""One-equation eddy-viscosity turbulence model of Spalart and Allmaras.

The working variable nuhat is advected with the flow, diffused through
the viscous flux, and driven by the source terms below. The eddy
viscosity follows from nuhat through the near-wall damping function, so
the model needs the distance to the nearest solid wall in each cell.
"""

import numpy as np

from . import dual as dm

CB1 = 0.1355
CB2 = 0.622
SIGMA = 2.0 / 3.0
KAPPA = 0.41
CW1 = CB1 / KAPPA ** 2 + (1.0 + CB2) / SIGMA
CW2 = 0.3
CW3 = 2.0
CV1 = 7.1
CT3 = 1.2
CT4 = 0.5
R_CAP = 10.0
SHAT_FLOOR = 1.0e-12


def mu_turb(rho, nuhat, mu):
    """Eddy viscosity from the working variable."""
    chi = rho * nuhat / mu
    fv1 = chi ** 3 / (chi ** 3 + CV1 ** 3)
    return rho * nuhat * fv1


def sa_source(rho, nuhat, mu, grad_u, grad_v, grad_w, grad_nuhat, dist):
    """Production, destruction, and gradient-squared source for nuhat.

    grad_* are 3-tuples of spatial derivatives; dist is the wall
    distance. Returns the volumetric source for the rho*nuhat equation.
    """
    nu = mu / rho
    chi = nuhat / nu
    fv1 = chi ** 3 / (chi ** 3 + CV1 ** 3)
    fv2 = 1.0 - chi / (1.0 + chi * fv1)
    ft2 = CT3 * dm.exp(-CT4 * chi * chi)

    _, uy, uz = grad_u
    vx, _, vz = grad_v
    wx, wy, _ = grad_w
    cx = wy - vz
    cy = uz - wx
    cz = vx - uy
    vort = dm.sqrt(cx * cx + cy * cy + cz * cz)

    d2 = dist * dist
    shat = vort + nuhat / (KAPPA ** 2 * d2) * fv2
    shat = dm.maximum(shat, SHAT_FLOOR)
    r = dm.minimum(nuhat / (shat * KAPPA ** 2 * d2), R_CAP)
    g = r + CW2 * (r ** 6 - r)
    fw = g * ((1.0 + CW3 ** 6) / (g ** 6 + CW3 ** 6)) ** (1.0 / 6.0)

    production = CB1 * (1.0 - ft2) * shat * rho * nuhat
    destruction = (CW1 * fw - CB1 / KAPPA ** 2 * ft2) * rho \
        * (nuhat / dist) ** 2
    nhx, nhy, nhz = grad_nuhat
    grad_sq = nhx * nhx + nhy * nhy + nhz * nhz
    return production - destruction + (CB2 / SIGMA) * rho * grad_sq


def wall_distance(centroids, wall_mids, chunk=4096):
    """Distance from each centroid to the nearest wall-face midpoint.

    Brute force over wall faces, chunked to bound the memory of the
    pairwise distance block.
    """
    pts = np.asarray(centroids, dtype=float).reshape(-1, 3)
    walls = np.asarray(wall_mids, dtype=float).reshape(-1, 3)
    if walls.shape[0] == 0:
        raise ValueError("turbulent run has no solid walls for "
                         "wall-distance computation")
    out = np.empty(pts.shape[0])
    for i0 in range(0, pts.shape[0], chunk):
        blk = pts[i0:i0 + chunk]
        d2 = ((blk[:, None, :] - walls[None, :, :]) ** 2).sum(axis=2)
        out[i0:i0 + chunk] = np.sqrt(d2.min(axis=1))
    return out.reshape(np.asarray(centroids).shape[:-1])
