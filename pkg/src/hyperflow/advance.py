"""Time integration over block sets.

The residual evaluation runs as bulk-synchronous phases: decode the
interiors, exchange ghost cells between blocks, fill physical-boundary
ghosts, then evaluate per-block residuals.  Each phase completes on
every block before the next begins, so results do not depend on how
blocks are mapped to workers.  Reductions (time step, residual norms)
combine per-block values in block order, which keeps runs bitwise
reproducible across worker counts.

Schemes: explicit Euler, a two-stage predictor-corrector (Heun), and a
point-implicit backward-Euler update that solves a dense per-cell
system with a cached forward-mode Jacobian.  When a reaction mechanism
is attached, explicit schemes subcycle the chemistry operator-split
after each step, while the point-implicit scheme folds the production
terms into the residual and its Jacobian instead.
"""

import math

import numpy as np


class StepError(Exception):
    """Raised when an integration step cannot be completed."""


def serial_map(fn, items):
    """Apply fn to each item in order; the default phase runner."""
    return [fn(x) for x in items]


def compute_residuals(blocks, exchange=None, runner=None,
                      coupled_chemistry=False):
    """Evaluate d(U)/dt for every block via the phase sequence.

    ``exchange`` is a callable taking the block list and updating all
    exchange-ghost cells; ``runner`` maps a function over the blocks
    (serially by default, or via a thread pool).  Returns the per-block
    residual arrays in block order.
    """
    run = runner or serial_map
    run(lambda b: b.decode_interior(), blocks)
    if exchange is not None:
        exchange(blocks)
    run(lambda b: b.fill_bcs(), blocks)
    return run(lambda b: b.residual(coupled_chemistry=coupled_chemistry),
               blocks)


def stable_dt(blocks, cfl, runner=None):
    """CFL-limited time step: global minimum over all cells.

    Per-block minima are computed independently, then reduced in block
    order so the result is identical for any worker count.
    """
    run = runner or serial_map
    dts = run(lambda b: b.stable_dt(cfl), blocks)
    dt = math.inf
    for v in dts:
        dt = min(dt, v)
    return dt


def residual_norm(residuals):
    """Global L2 norm of the stacked residual components.

    Summed in block order for reproducibility.
    """
    total = 0.0
    for r in residuals:
        total += float(np.sum(np.square(r)))
    return math.sqrt(total)


def _decode_all(blocks, runner):
    # Every stepper leaves fs decoded from the committed U: the next
    # step's stable_dt, operator-split chemistry, and snapshot writes
    # all read fs, and a snapshot reload must see the same values the
    # uninterrupted run held in memory.
    run = runner or serial_map
    run(lambda b: b.decode_interior(), blocks)


def euler_step(blocks, dt, exchange=None, runner=None,
               coupled_chemistry=False):
    """Forward-Euler update U += dt*R.  Returns the residuals used."""
    rs = compute_residuals(blocks, exchange, runner, coupled_chemistry)
    for b, r in zip(blocks, rs):
        u = b.Ui
        u += dt * r
    _decode_all(blocks, runner)
    return rs


def rk2_step(blocks, dt, exchange=None, runner=None,
             coupled_chemistry=False):
    """Two-stage predictor-corrector (Heun) update.

    U_pred = U + R(U) dt, then U+ = U + (R(U) + R(U_pred)) dt/2.
    Returns the stage-one residuals.
    """
    u0 = [b.Ui.copy() for b in blocks]
    r0 = compute_residuals(blocks, exchange, runner, coupled_chemistry)
    for b, u, r in zip(blocks, u0, r0):
        b.Ui[...] = u + dt * r
    r1 = compute_residuals(blocks, exchange, runner, coupled_chemistry)
    for b, u, ra, rb in zip(blocks, u0, r0, r1):
        b.Ui[...] = u + 0.5 * dt * (ra + rb)
    _decode_all(blocks, runner)
    return r0


def point_implicit_step(blocks, dt, jacobians, exchange=None, runner=None,
                        coupled_chemistry=False):
    """Backward-Euler update decoupled per cell.

    Solves [I/dt - J] dU = R(U) with the supplied per-cell Jacobian
    blocks J = dR/dU and applies U += dU.  Returns the residuals used.
    """
    rs = compute_residuals(blocks, exchange, runner, coupled_chemistry)
    for b, r, jac in zip(blocks, rs, jacobians):
        n = b.layout.ncons
        lhs = np.eye(n) / dt - jac
        try:
            du = np.linalg.solve(lhs, r[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise StepError(
                f"block {b.blk_id}: singular point-implicit matrix; "
                f"reduce dt") from exc
        u = b.Ui
        u += du
    _decode_all(blocks, runner)
    return rs


class Integrator:
    """Advances a block set step by step under one scheme.

    Owns the Jacobian cache for the point-implicit scheme (refreshed
    every ``jacobian_refresh`` steps) and applies operator-split
    chemistry after explicit steps when any block carries a mechanism.
    """

    SCHEMES = ("euler", "rk2", "point_implicit")

    def __init__(self, blocks, scheme="rk2", cfl=0.5, dt_fixed=None,
                 exchange=None, runner=None, jacobian_refresh=10,
                 chemistry_tol=1.0e-6):
        if scheme not in self.SCHEMES:
            raise StepError(f"unknown scheme {scheme!r}")
        self.blocks = blocks
        self.scheme = scheme
        self.cfl = cfl
        self.dt_fixed = dt_fixed
        self.exchange = exchange
        self.runner = runner or serial_map
        self.jacobian_refresh = jacobian_refresh
        self.chemistry_tol = chemistry_tol
        self.has_chemistry = any(b.mech is not None for b in blocks)
        # point-implicit folds production terms into R; explicit
        # schemes subcycle them operator-split instead
        self.coupled_chemistry = (scheme == "point_implicit"
                                  and self.has_chemistry)
        self._jac = None
        self._jac_age = 0
        self.last_residuals = None

    def residuals(self):
        return compute_residuals(self.blocks, self.exchange, self.runner,
                                 self.coupled_chemistry)

    def dt(self):
        if self.dt_fixed is not None:
            return self.dt_fixed
        return stable_dt(self.blocks, self.cfl, self.runner)

    def _refresh_jacobians(self):
        # jacobian() linearises about the block's decoded state, so the
        # phase sequence must run first to make ghosts current
        compute_residuals(self.blocks, self.exchange, self.runner,
                          self.coupled_chemistry)
        self._jac = self.runner(
            lambda b: b.jacobian(coupled_chemistry=self.coupled_chemistry),
            self.blocks)
        self._jac_age = 0

    def step(self, dt=None):
        """Advance one time step; returns the dt taken."""
        if dt is None:
            dt = self.dt()
        if self.scheme == "euler":
            self.last_residuals = euler_step(
                self.blocks, dt, self.exchange, self.runner)
        elif self.scheme == "rk2":
            self.last_residuals = rk2_step(
                self.blocks, dt, self.exchange, self.runner)
        else:
            if self._jac is None or self._jac_age >= self.jacobian_refresh:
                self._refresh_jacobians()
            self._jac_age += 1
            self.last_residuals = point_implicit_step(
                self.blocks, dt, self._jac, self.exchange, self.runner,
                self.coupled_chemistry)
        if self.has_chemistry and self.scheme != "point_implicit":
            self.runner(
                lambda b: b.apply_chemistry(dt, tol=self.chemistry_tol),
                self.blocks)
        return dt
