"""Interface reconstruction of primitive variables.

Structured blocks use a one-dimensional quadratic interpolation over the
four cells straddling each interior face, with cell-width metrics so the
scheme keeps second order on stretched grids. A van Albada factor blends
the high-order increment down near discontinuities; with the limiter off
the increment is taken at full weight, which preserves the clean
second-order slope through smooth extrema.

Unstructured cells extrapolate linearly from the cell centre using the
least-squares gradient scaled by a Venkatakrishnan limiter.
"""

import numpy as np

VAN_ALBADA_EPS = 1.0e-12
VENKAT_EPS = 1.0e-12


def van_albada(dm, dp, eps=VAN_ALBADA_EPS):
    """Smoothness factor in [0, 1]; 1 when the two slopes agree."""
    prod = dm * dp
    return (prod + np.abs(prod) + eps) / (dm * dm + dp * dp + eps)


def recon_structured(q_l1, q_l0, q_r0, q_r1, h_l1, h_l0, h_r0, h_r1,
                     limit=True):
    """Quadratic left/right face values from a four-cell stencil.

    q_* are cell-average values ordered L1, L0 | R0, R1 across the face
    and h_* the corresponding cell widths along the stencil direction.
    Returns (q_left, q_right) at the face.
    """
    del_lminus = (q_l0 - q_l1) / (0.5 * (h_l0 + h_l1))
    del_mid = (q_r0 - q_l0) / (0.5 * (h_r0 + h_l0))
    del_rplus = (q_r1 - q_r0) / (0.5 * (h_r0 + h_r1))
    alpha_l = (h_l0 * 0.5) / (h_l1 + 2.0 * h_l0 + h_r0)
    alpha_r = (h_r0 * 0.5) / (h_l0 + 2.0 * h_r0 + h_r1)
    if limit:
        s_l = van_albada(del_lminus, del_mid)
        s_r = van_albada(del_mid, del_rplus)
    else:
        s_l = 1.0
        s_r = 1.0
    q_left = q_l0 + s_l * alpha_l * (
        del_mid * (2.0 * h_l0 + h_l1) + del_lminus * h_r0)
    q_right = q_r0 - s_r * alpha_r * (
        del_rplus * h_l0 + del_mid * (2.0 * h_r0 + h_r1))
    return q_left, q_right


def venkat_factor(dgrad, dmax, dmin, eps=VENKAT_EPS):
    """Venkatakrishnan smooth limiter value for one face extrapolation.

    dgrad : grad.dx increment toward the face midpoint.
    dmax/dmin : max/min over the cell cloud of q_nb - q_c.
    """
    ddiff = np.where(dgrad > 0.0, dmax, dmin)
    num = ddiff * ddiff + 2.0 * ddiff * dgrad + eps
    den = ddiff * ddiff + 2.0 * dgrad * dgrad + ddiff * dgrad + eps
    phi = num / den
    return np.where(dgrad == 0.0, 1.0, phi)


def venkat_limiter(dgrad_faces, dmax, dmin, eps=VENKAT_EPS):
    """Per-cell limiter: minimum Venkatakrishnan factor over the cell faces.

    dgrad_faces : (nf, ncells) grad.dx increments, one row per cell face.
    """
    s = venkat_factor(dgrad_faces[0], dmax, dmin, eps)
    for k in range(1, dgrad_faces.shape[0]):
        s = np.minimum(s, venkat_factor(dgrad_faces[k], dmax, dmin, eps))
    return s


def recon_unstructured(q_c, grad, dx, s):
    """Limited linear extrapolation q_c + s * grad.dx to a face midpoint."""
    return q_c + s * np.einsum("...i,...i->...", grad, dx)
