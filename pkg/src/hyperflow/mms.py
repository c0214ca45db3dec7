"""Manufactured-solution verification support.

A manufactured field is a sum of sinusoidal terms in x, y, z (and their
pairwise products). Injecting the analytic flux divergence of that field
as a cell source makes the field a steady solution of the discrete
equations up to truncation error, so the grid-refinement slope of the
error norms measures the spatial order of accuracy directly.

The source is generated mechanically: coordinates are seeded as dual
numbers and pushed through the same flux kernels the solver uses, with a
second (nested) dual level supplying the gradients the viscous flux
needs. No hand-derived source expressions exist anywhere.
"""

import math

import numpy as np

from . import dual as dm
from . import flux as fx
from . import turbulence

# Each term: (coefficient, "sin"|"cos", k, vars) encodes
# coef * f(k * pi * g / L^len(vars)) with g the product of the named
# coordinates.
_FIELD_3D = {
    "rho": (1.0, [
        (-0.1, "sin", 9.0 / 20.0, "y"),
        (0.1, "sin", 4.0 / 5.0, "z"),
        (3.0 / 25.0, "sin", 0.5, "xz"),
        (3.0 / 20.0, "cos", 3.0 / 4.0, "x"),
        (2.0 / 25.0, "cos", 13.0 / 20.0, "xy"),
        (1.0 / 20.0, "cos", 3.0 / 4.0, "yz"),
    ]),
    "u": (70.0, [
        (7.0, "sin", 0.5, "x"),
        (-4.0, "sin", 9.0 / 10.0, "xz"),
        (-15.0, "cos", 17.0 / 20.0, "y"),
        (-10.0, "cos", 2.0 / 5.0, "z"),
        (7.0, "cos", 3.0 / 5.0, "xy"),
        (4.0, "cos", 4.0 / 5.0, "yz"),
    ]),
    "v": (90.0, [
        (-5.0, "sin", 4.0 / 5.0, "x"),
        (5.0, "sin", 3.0 / 5.0, "xz"),
        (10.0, "cos", 4.0 / 5.0, "y"),
        (5.0, "cos", 0.5, "z"),
        (-11.0, "cos", 9.0 / 10.0, "xy"),
        (-5.0, "cos", 2.0 / 5.0, "yz"),
    ]),
    "w": (80.0, [
        (10.0, "sin", 9.0 / 10.0, "y"),
        (-12.0, "sin", 2.0 / 5.0, "xy"),
        (5.0, "sin", 3.0 / 4.0, "xz"),
        (-10.0, "cos", 17.0 / 20.0, "x"),
        (12.0, "cos", 0.5, "z"),
        (11.0, "cos", 4.0 / 5.0, "yz"),
    ]),
    "p": (100000.0, [
        (20000.0, "sin", 17.0 / 20.0, "z"),
        (10000.0, "sin", 4.0 / 5.0, "xz"),
        (20000.0, "cos", 2.0 / 5.0, "x"),
        (50000.0, "cos", 9.0 / 20.0, "y"),
        (-25000.0, "cos", 3.0 / 4.0, "xy"),
        (-10000.0, "cos", 7.0 / 10.0, "yz"),
    ]),
    "nuhat": (1.0, [
        (4.0 / 5.0, "sin", 4.0 / 5.0, "z"),
        (-3.0 / 5.0, "sin", 3.0 / 5.0, "xz"),
        (6.0 / 25.0, "cos", 7.0 / 20.0, "x"),
        (-3.0 / 10.0, "cos", 2.0 / 5.0, "y"),
        (3.0 / 4.0, "cos", 0.5, "xy"),
        (0.5, "cos", 0.25, "yz"),
    ]),
}


class ManufacturedField:
    """Smooth analytic flow field over [0, L]^ndim.

    variant "ns3d" is the full 3D field with all six variables;
    "euler2d" keeps only the terms free of z, zeroes w, and omits nuhat.
    """

    def __init__(self, variant="ns3d", L=1.0):
        if variant not in ("ns3d", "euler2d"):
            raise ValueError(f"unknown manufactured variant {variant!r}")
        self.variant = variant
        self.L = float(L)
        self.terms = {}
        for name, (const, terms) in _FIELD_3D.items():
            if variant == "euler2d":
                if name in ("w", "nuhat"):
                    continue
                terms = [t for t in terms if "z" not in t[3]]
            self.terms[name] = (const, terms)

    @property
    def has_nuhat(self):
        return "nuhat" in self.terms

    def eval(self, name, x, y, z):
        if name == "w" and "w" not in self.terms:
            return dm._zero(x)
        const, terms = self.terms[name]
        out = const + dm._zero(x)
        coords = {"x": x, "y": y, "z": z}
        for coef, func, k, names in terms:
            g = coords[names[0]]
            for c in names[1:]:
                g = g * coords[c]
            arg = (k * math.pi / self.L ** len(names)) * g
            out = out + coef * (dm.sin(arg) if func == "sin" else dm.cos(arg))
        return out

    def prim(self, gas, x, y, z):
        """Complete primitive state dict at a point (dual-safe)."""
        massf = dm.stack([1.0 + dm._zero(x)], axis=-1)
        nuhat = self.eval("nuhat", x, y, z) if self.has_nuhat else None
        return fx.face_prim(gas, self.eval("rho", x, y, z),
                            self.eval("u", x, y, z),
                            self.eval("v", x, y, z),
                            self.eval("w", x, y, z),
                            self.eval("p", x, y, z),
                            massf, nuhat=nuhat)


def _grad_fields(field, gas, x, y, z, viscous):
    """Gradients of the viscous-flux inputs by one dual pass per axis."""
    names = ["u", "v", "w", "T"] + (["nuhat"] if field.has_nuhat else [])
    grads = {n: [None, None, None] for n in names}
    for d in range(3):
        coords = [dm.lift(c) for c in (x, y, z)]
        coords[d] = dm.seed((x, y, z)[d])
        pr = field.prim(gas, *coords)
        for n in names:
            grads[n][d] = dm.dot_one(pr[n])
    return {n: tuple(g) for n, g in grads.items()}


def mms_source(field, gas, layout, x, y, z, viscous=True):
    """Cell source making the manufactured field steady: div F - Q."""

    def flux_at(xx, yy, zz, d):
        n = [0.0, 0.0, 0.0]
        n[d] = 1.0
        pr = field.prim(gas, xx, yy, zz)
        comps = fx.inviscid_flux(gas, layout, pr, *n)
        if viscous:
            grad = _grad_fields(field, gas, xx, yy, zz, viscous)
            grad["n"] = tuple(n)
            fv = fx.viscous_flux(gas, layout, pr, grad)
            comps = [a - b for a, b in zip(comps, fv)]
        return comps

    ndirs = 2 if field.variant == "euler2d" else 3
    src = [dm._zero(x) for _ in range(layout.ncons)]
    for d in range(ndirs):
        coords = [x, y, z]
        coords[d] = dm.seed(coords[d])
        df = flux_at(*coords, d)
        for c in range(layout.ncons):
            src[c] = src[c] + dm.dot_one(df[c])

    if field.has_nuhat and layout.i_nuhat is not None:
        pr = field.prim(gas, x, y, z)
        grad = _grad_fields(field, gas, x, y, z, True)
        mu = gas.viscosity(pr["T"], pr["massf"])
        q_sa = turbulence.sa_source(pr["rho"], pr["nuhat"], mu,
                                    grad["u"], grad["v"], grad["w"],
                                    grad["nuhat"], 1.0)
        src[layout.i_nuhat] = src[layout.i_nuhat] - q_sa
    return src


def error_norms(q_num, q_exact, volumes):
    """Volume-weighted L2 norm of the error in one variable."""
    diff = np.asarray(q_num) - np.asarray(q_exact)
    v = np.asarray(volumes)
    return math.sqrt(float((v * diff * diff).sum() / v.sum()))


def observed_order(errors, hs):
    """Per-pair convergence slope log(E_i/E_{i+1}) / log(h_i/h_{i+1})."""
    out = []
    for i in range(len(errors) - 1):
        out.append(math.log(errors[i] / errors[i + 1])
                   / math.log(hs[i] / hs[i + 1]))
    return out
