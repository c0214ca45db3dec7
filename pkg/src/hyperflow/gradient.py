"""Least-squares cell gradients and face-gradient averaging.

The per-cell gradient solves min sum_i w_i^2 (grad.dx_i - dq_i)^2 over a
cloud of neighbours. The normal-equation pseudo-inverse depends only on
geometry, so setup returns per-cell coefficient arrays applied to value
differences each step. Face gradients combine the two adjacent cell
gradients with a compact directional correction along the line between
cell centres, which suppresses odd-even decoupling on the diffusion terms.
"""

import numpy as np


class GradientError(Exception):
    pass


def lsq_setup(dx, weights=None, ndim=3, cond_limit=1.0e8):
    """Build least-squares gradient coefficients.

    dx      : (nnb, ..., 3) displacement from the cell centre to each
              cloud member.
    weights : (nnb, ...) or None for unit weights.
    Returns coef with shape (nnb, ..., 3); the gradient of q is
    sum_i coef[i] * (q_i - q_c). Components beyond ndim are zero.
    """
    dx = np.asarray(dx, dtype=float)
    nnb = dx.shape[0]
    if weights is None:
        w2 = np.ones(dx.shape[:-1])
    else:
        w2 = np.asarray(weights, dtype=float) ** 2
    d = dx[..., :ndim]
    A = np.einsum("n...,n...i,n...j->...ij", w2, d, d)
    Ainv = np.linalg.inv(A)
    cond = (np.linalg.norm(A, axis=(-2, -1)) * np.linalg.norm(Ainv, axis=(-2, -1)))
    nbad = int(np.count_nonzero(cond > cond_limit))
    if nbad:
        raise GradientError(
            f"{nbad} gradient clouds are ill-conditioned (cond > {cond_limit:g})")
    coef = np.zeros(dx.shape[:-1] + (3,))
    coef[..., :ndim] = np.einsum("...ij,n...j,n...->n...i", Ainv, d, w2)
    return coef


def lsq_gradient(coef, dq):
    """Apply lsq_setup coefficients to value differences.

    coef : (nnb, ..., 3)
    dq   : (nnb, ...) differences q_i - q_c
    Returns (..., 3).
    """
    return np.einsum("n...i,n...->...i", coef, dq)


def inverse_distance_weights(dx):
    """w_i = 1/|dx_i| for viscous gradient clouds."""
    return 1.0 / np.linalg.norm(np.asarray(dx, dtype=float), axis=-1)


def haselbacher_face_gradient(grad_l, grad_r, q_l, q_r, evec, elen, nhat):
    """Average two cell gradients onto a face with a directional correction.

    evec/elen : unit vector and distance from the left to the right cell
                centre; nhat is the face normal. All arrays broadcast over
                leading axes with a trailing component axis of 3.
    """
    grad_av = 0.5 * (grad_l + grad_r)
    along = np.einsum("...i,...i->...", grad_av, evec)
    corr = (along - (q_r - q_l) / elen) / np.einsum("...i,...i->...", nhat, evec)
    return grad_av - corr[..., None] * nhat
