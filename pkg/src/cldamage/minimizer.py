"""One implicit time step as a constrained minimisation.

Each step minimises

    J(q) = Ẽ_ε(q) + τ R̃((z - z_prev)/τ) + 1/(2τ) ‖c - c_prev‖²_{H⁻¹}
           + ε/(2τ) ‖c - c_prev‖²_{L²}

over displacements matching the boundary data on Γ, concentrations with
the previous mean, and damage in ``[0, z_prev]``. The solver sweeps the
three blocks in turn (u, then c, then z). Every block takes Newton-type
steps with an Armijo line search, and every iterate is exactly feasible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import grid as g
from .energetics import State, check_feasible, functional
from .errors import Infeasible, LineSearchStalled, NotConverged


@dataclass
class StepProblem:
    """Data of one incremental problem.

    ``boundary_u`` is a full vertex field whose values on Γ are the
    Dirichlet data ``b(mτ)``. When ``boundary_prev`` (``b((m-1)τ)``) is
    given, the initial guess is ``u_prev + boundary_u - boundary_prev``;
    otherwise only the Γ values of ``u_prev`` are replaced.
    """

    prev: State
    tau: float
    boundary_u: np.ndarray
    params: object
    grid: object
    boundary_prev: np.ndarray = None

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        self.boundary_u = np.asarray(self.boundary_u, dtype=float)
        shape = (self.grid.dim,) + self.grid.node_shape
        if self.boundary_u.shape != shape:
            raise ValueError(f"boundary_u must have shape {shape}")
        check_feasible(self.prev.z)

    @property
    def time(self):
        return self.prev.time + self.tau

    def initial_guess(self):
        mask = self.grid.gamma_mask()
        if self.boundary_prev is not None:
            u = self.prev.u + self.boundary_u - np.asarray(self.boundary_prev, dtype=float)
        else:
            u = self.prev.u.copy()
        u[:, mask] = self.boundary_u[:, mask]
        return State(u, self.prev.c.copy(), self.prev.z.copy(), self.time)


@dataclass
class MinimizerConfig:
    el_tolerance: float = 1e-7
    max_outer: int = 200
    max_inner: int = 50
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    accept_unconverged: bool = False

    def __post_init__(self):
        if not (self.el_tolerance > 0 and 0 < self.armijo_c < 1 and 0 < self.armijo_shrink < 1):
            raise ValueError("tolerances and line-search constants must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration caps must be at least 1")


@dataclass
class StepResult:
    state: State
    mu: np.ndarray
    lambda_: float
    el_residuals: tuple
    objective: float
    outer_iters: int
    converged: bool
    objective_history: list = field(default_factory=list)


# --------------------------------------------------------------------------
# objective


class _Step:
    """Working data for one solve; all vectors are flat."""

    def __init__(self, prob):
        self.prob = prob
        self.grid = prob.grid
        self.p = prob.params
        self.F = functional(prob.grid, prob.params)
        self.V = prob.grid.cell_volume
        self.tau = prob.tau
        self.cp = prob.prev.c.ravel().copy()
        self.zp = prob.prev.z.ravel().copy()
        mask = prob.grid.gamma_mask().ravel()
        self.free_u = np.tile(~mask, prob.grid.dim)
        self.L = self.F.L

    def shape_u(self, u):
        return u.reshape((self.grid.dim,) + self.grid.node_shape)

    def hm1(self, w):
        """``(-Δ_h)^{-1}`` of a zero-mean flat cell vector."""
        w = w.reshape(self.grid.shape)
        return g.inv_neg_laplacian(w - w.mean(), self.grid, check=False).ravel()

    def objective(self, u, c, z):
        p, V, tau = self.p, self.V, self.tau
        dc = c - self.cp
        dz = z - self.zp
        val = self.F.energy(u, c.reshape(self.grid.shape), z.reshape(self.grid.shape))
        val += V * float(np.sum(-p.alpha * dz + 0.5 * p.beta / tau * dz**2))
        val += 0.5 / tau * V * float(dc @ self.hm1(dc))
        val += 0.5 * p.epsilon / tau * V * float(dc @ dc)
        return val

    # raw gradients of J per block
    def grad_u(self, u, c, z):
        return self.F.grad_u(u, c, z)

    def grad_c(self, u, c, z):
        dc = c - self.cp
        gc = self.F.grad_c(u, c.reshape(self.grid.shape), z.reshape(self.grid.shape))
        return gc + self.V / self.tau * (self.hm1(dc) + self.p.epsilon * dc)

    def grad_z(self, u, c, z):
        p = self.p
        gz = self.F.grad_z(u, c.reshape(self.grid.shape), z.reshape(self.grid.shape))
        return gz + self.V * (-p.alpha + p.beta / self.tau * (z - self.zp))

    # residual measures (L² norms of representatives)
    def res_u(self, u, c, z):
        r = self.grad_u(u, c, z)[self.free_u] / self.V
        return float(np.sqrt(self.V * r @ r))

    def res_c(self, u, c, z):
        r = self.grad_c(u, c, z)
        r = (r - r.mean()) / self.V
        return float(np.sqrt(self.V * r @ r))

    def res_z(self, u, c, z):
        return kkt_box_residual(z, self.grad_z(u, c, z) / self.V, self.zp, self.V)


def kkt_box_residual(z, rep, upper, weight):
    """Norm of the steepest feasible descent for ``0 <= z <= upper``.

    This is ``-min ⟨rep, ζ⟩`` over unit feasible directions ``ζ`` (the
    tangent cone at ``z``), so it vanishes exactly at KKT points.
    """
    d = -np.asarray(rep, dtype=float).copy()
    at_lo = z <= 0.0
    at_hi = z >= upper
    d[at_lo] = np.maximum(d[at_lo], 0.0)
    d[at_hi] = np.minimum(d[at_hi], 0.0)
    return float(np.sqrt(weight * d @ d))


def incremental_objective(q, prob, tol=1e-10):
    """``E^m(q)`` for an admissible ``q``."""
    zp = prob.prev.z
    if np.any(q.z < -tol) or np.any(q.z > zp + tol):
        raise Infeasible("box", "damage must satisfy 0 <= z <= z_prev")
    if abs(np.mean(q.c) - np.mean(prob.prev.c)) > tol:
        raise Infeasible("mean", "mean concentration differs from the previous step")
    mask = prob.grid.gamma_mask()
    if np.max(np.abs(q.u[:, mask] - prob.boundary_u[:, mask]), initial=0.0) > tol:
        raise Infeasible("dirichlet", "displacement does not match the boundary data on Γ")
    s = _Step(prob)
    return s.objective(q.u.ravel(), q.c.ravel(), np.clip(q.z, 0.0, zp).ravel())


# --------------------------------------------------------------------------
# blocks


def _roundoff_ok(val, f0, slope, scale):
    """Accept a step whose predicted decrease is below the resolution of
    the objective, provided the value does not rise beyond round-off."""
    return abs(slope) < 1e-13 * scale and val <= f0 + 1e-14 * scale


def _armijo(f0, slope, trial, cfg, scale):
    """Backtracking; ``trial(s)`` returns ``(value, payload)``.

    Returns ``(s, value, payload)`` or ``None`` when no step is accepted.
    """
    s = 1.0
    for _ in range(60):
        val, payload = trial(s)
        if np.isfinite(val) and val <= f0 + cfg.armijo_c * s * slope:
            return s, val, payload
        if np.isfinite(val) and _roundoff_ok(val, f0, s * slope, scale):
            return s, val, payload
        s *= cfg.armijo_shrink
    return None


class _Solver:
    def __init__(self, prob, cfg):
        self.s = _Step(prob)
        self.cfg = cfg
        self.history = []
        self.tol_inner = 0.1 * cfg.el_tolerance
        q0 = prob.initial_guess()
        self.u = q0.u.ravel().copy()
        self.c = q0.c.ravel().copy()
        self.z = q0.z.ravel().copy()
        self.J = self.s.objective(self.u, self.c, self.z)
        self.scale = max(1.0, abs(self.J))
        self.history.append(self.J)

    def _accept(self, value):
        if value > self.history[-1] + 1e-13 * self.scale:
            raise AssertionError("objective increased across an accepted step")
        self.J = value
        self.history.append(value)

    def u_block(self):
        s, cfg = self.s, self.cfg
        free = s.free_u
        moved = False
        for _ in range(cfg.max_inner):
            gr = s.grad_u(self.u, self.c, self.z)[free]
            if np.sqrt(gr @ gr / s.V) <= self.tol_inner:
                break
            H = s.F.hess_u(self.u, self.c, self.z)[free][:, free]
            d = spla.spsolve(H.tocsc(), -gr)
            slope = float(gr @ d)
            if slope >= 0:
                d, slope = -gr, -float(gr @ gr)

            def trial(t):
                u = self.u.copy()
                u[free] += t * d
                return s.objective(u, self.c, self.z), u

            out = _armijo(self.J, slope, trial, cfg, self.scale)
            if out is None:
                break
            _, val, self.u = out
            self._accept(val)
            moved = True
        return moved

    def c_block(self):
        s, cfg, p = self.s, self.cfg, self.s.p
        L, V, tau = s.L, s.V, s.tau
        n = s.grid.n_cells
        moved = False
        for _ in range(cfg.max_inner):
            gr = s.grad_c(self.u, self.c, self.z)
            gr = gr - gr.mean()
            if np.sqrt(gr @ gr / V) <= self.tol_inner:
                break
            hdiag = s.F.hess_c_diag(
                self.u, self.c.reshape(s.grid.shape), self.z.reshape(s.grid.shape)
            )
            d = None
            for clip in (False, True):
                hd = np.maximum(hdiag, 0.0) if clip else hdiag
                A = p.gamma * V * L + sp.diags(hd + p.epsilon * V / tau)
                M = (L @ A + (V / tau) * sp.identity(n)).tocsc()
                cand = spla.spsolve(M, -(L @ gr))
                cand -= cand.mean()
                if np.all(np.isfinite(cand)) and gr @ cand < 0:
                    d = cand
                    break
            if d is None:
                d = -gr
            slope = float(gr @ d)
            mean0 = float(np.mean(s.cp))

            def trial(t):
                c = self.c + t * d
                c -= c.mean() - mean0
                return s.objective(self.u, c, self.z), c

            out = _armijo(self.J, slope, trial, cfg, self.scale)
            if out is None:
                break
            _, val, self.c = out
            self._accept(val)
            moved = True
        return moved

    def z_block(self):
        s, cfg, p = self.s, self.cfg, self.s.p
        lo, hi = 0.0, s.zp
        moved = False
        for _ in range(cfg.max_inner):
            gr = s.grad_z(self.u, self.c, self.z)
            if kkt_box_residual(self.z, gr / s.V, hi, s.V) <= self.tol_inner:
                break
            natural = np.abs(self.z - np.clip(self.z - gr / s.V, lo, hi))
            eps_b = min(1e-6, float(np.max(natural)))
            active = ((self.z <= lo + eps_b) & (gr > 0)) | ((self.z >= hi - eps_b) & (gr < 0))
            active |= hi <= lo
            free = ~active
            H = s.F.hess_z(
                self.u, self.c.reshape(s.grid.shape), self.z.reshape(s.grid.shape)
            ) + sp.diags(np.full(s.grid.n_cells, s.V * p.beta / s.tau))
            H = H.tocsr()
            d = np.zeros_like(self.z)
            if np.any(free):
                d[free] = spla.spsolve(H[free][:, free].tocsc(), -gr[free])
            d[active] = -gr[active] / H.diagonal()[active]

            def trial(t):
                z = np.clip(self.z + t * d, lo, hi)
                return s.objective(self.u, self.c, z), z

            slope = float(gr @ (np.clip(self.z + d, lo, hi) - self.z))
            if slope >= 0:
                break
            out = self._arc_search(trial, gr)
            if out is None:
                break
            val, self.z = out
            self._accept(val)
            moved = True
        return moved

    def uz_block(self):
        """Joint projected Newton on ``(u, z)``.

        Block sweeps converge slowly when the displacement and the damage
        are strongly coupled (softening). This step uses the mixed Hessian;
        the joint Hessian may be indefinite (the homogeneous state can be
        a saddle of the step functional), in which case a Levenberg shift
        is added until the step is a descent direction.
        """
        s, cfg, p = self.s, self.cfg, self.s.p
        lo, hi = 0.0, s.zp
        fu = s.free_u
        nu = int(fu.sum())
        shape = s.grid.shape
        moved = False
        for _ in range(cfg.max_inner):
            gu = s.grad_u(self.u, self.c, self.z)
            gz = s.grad_z(self.u, self.c, self.z)
            r_u = float(np.sqrt(gu[fu] @ gu[fu] / s.V))
            if max(r_u, kkt_box_residual(self.z, gz / s.V, hi, s.V)) <= self.tol_inner:
                break
            natural = np.abs(self.z - np.clip(self.z - gz / s.V, lo, hi))
            eps_b = min(1e-6, float(np.max(natural)))
            active = ((self.z <= lo + eps_b) & (gz > 0)) | ((self.z >= hi - eps_b) & (gz < 0))
            active |= hi <= lo
            fz = ~active
            c2, z2 = self.c.reshape(shape), self.z.reshape(shape)
            Huu = s.F.hess_u(self.u, c2, z2)[fu][:, fu]
            Huz = s.F.hess_uz(self.u, c2, z2)[fu][:, fz]
            Hzz = (
                s.F.hess_z(self.u, c2, z2)
                + sp.diags(np.full(s.grid.n_cells, s.V * p.beta / s.tau))
            ).tocsr()
            K = sp.bmat([[Huu, Huz], [Huz.T, Hzz[fz][:, fz]]]).tocsc()
            rhs = -np.concatenate([gu[fu], gz[fz]])
            step = self._shifted_solve(K, rhs)
            if step is None:
                break
            du = step[:nu]
            dz = np.zeros_like(self.z)
            dz[fz] = step[nu:]
            dz[active] = -gz[active] / Hzz.diagonal()[active]
            out = None
            t = 1.0
            for _ in range(60):
                u = self.u.copy()
                u[fu] += t * du
                z = np.clip(self.z + t * dz, lo, hi)
                slope = t * float(gu[fu] @ du) + float(gz @ (z - self.z))
                if slope < 0:
                    val = s.objective(u, self.c, z)
                    if val <= self.J + cfg.armijo_c * slope or _roundoff_ok(
                        val, self.J, slope, self.scale
                    ):
                        out = (val, u, z)
                        break
                t *= cfg.armijo_shrink
            if out is None:
                break
            val, self.u, self.z = out
            self._accept(val)
            moved = True
        return moved

    @staticmethod
    def _shifted_solve(K, rhs):
        """Solve ``(K + ω I) d = rhs`` with the smallest tried ``ω ≥ 0``
        giving positive curvature along ``d``."""
        diag = float(np.max(np.abs(K.diagonal()))) or 1.0
        eye = sp.identity(K.shape[0], format="csc")
        for omega in [0.0] + [diag * 10.0**k for k in range(-8, 3)]:
            try:
                step = spla.spsolve(K + omega * eye if omega else K, rhs)
            except RuntimeError:
                continue
            if not np.all(np.isfinite(step)):
                continue
            if step @ (K @ step) + omega * (step @ step) > 0 and rhs @ step > 0:
                return step
        return None

    def _arc_search(self, trial, gr):
        cfg = self.cfg
        t = 1.0
        for _ in range(60):
            val, z = trial(t)
            slope = float(gr @ (z - self.z))
            if slope < 0 and val <= self.J + cfg.armijo_c * slope:
                return val, z
            if slope < 0 and _roundoff_ok(val, self.J, slope, self.scale):
                return val, z
            t *= cfg.armijo_shrink
        return None

    def residuals(self):
        s = self.s
        return (
            s.res_u(self.u, self.c, self.z),
            s.res_c(self.u, self.c, self.z),
            s.res_z(self.u, self.c, self.z),
        )


def solve_step(prob, cfg=None):
    """Minimise the incremental functional by block coordinate descent.

    Returns a :class:`StepResult`. When the residuals do not reach
    ``cfg.el_tolerance`` a :class:`NotConverged` carrying the best iterate
    is raised, unless ``cfg.accept_unconverged`` is set, in which case the
    result is returned with ``converged=False``.
    """
    cfg = cfg or MinimizerConfig()
    sol = _Solver(prob, cfg)
    res = sol.residuals()
    outer = 0
    converged = max(res) <= cfg.el_tolerance
    while not converged and outer < cfg.max_outer:
        outer += 1
        J0 = sol.J
        moved = sol.u_block()
        moved |= sol.c_block()
        moved |= sol.z_block()
        if max(sol.residuals()) > cfg.el_tolerance:
            moved |= sol.uz_block()
        new = sol.residuals()
        converged = max(new) <= cfg.el_tolerance
        if converged:
            res = new
            break
        stalled = (J0 - sol.J) < 1e-14 * sol.scale and max(new) >= max(res)
        res = new
        if stalled or not moved:
            break
    result = _result(prob, sol, res, outer, converged)
    if not converged and not cfg.accept_unconverged:
        msg = f"residuals {tuple(f'{r:.2e}' for r in res)} above {cfg.el_tolerance:g} after {outer} sweeps"
        if not moved:
            exc = NotConverged("line search stalled: " + msg, result)
            exc.__cause__ = LineSearchStalled(msg)
            raise exc
        raise NotConverged(msg, result)
    return result


def _result(prob, sol, res, outer, converged):
    grid = prob.grid
    state = State(
        sol.s.shape_u(sol.u).copy(),
        sol.c.reshape(grid.shape).copy(),
        sol.z.reshape(grid.shape).copy(),
        prob.time,
    )
    mu, lam = recover_mu_lambda(state, prob)
    return StepResult(
        state=state,
        mu=mu,
        lambda_=lam,
        el_residuals=tuple(float(r) for r in res),
        objective=sol.J,
        outer_iters=outer,
        converged=bool(converged),
        objective_history=sol.history,
    )


def recover_mu_lambda(state, prob):
    """Discrete chemical potential and the mass multiplier.

    ``λ = mean(W_ch'(c) + ∂_c W_el)`` and ``μ = -(-Δ)^{-1}((c - c_prev)/τ) + λ``.
    """
    grid = prob.grid
    F = functional(grid, prob.params)
    c = state.c
    dc_point = (F.grad_c(state.u, c, state.z) / grid.cell_volume).reshape(grid.shape)
    dc_point -= prob.params.gamma * g.neg_laplacian(c, grid)
    lam = float(np.mean(dc_point))
    rate = (c - prob.prev.c) / prob.tau
    mu = -g.inv_neg_laplacian(rate - rate.mean(), grid, check=False) + lam
    return mu, lam


def el_residuals(state, mu, prob):
    """Residual norms of the discrete Euler–Lagrange system.

    u: L²-norm of the representative of ``d_u Ẽ`` on Γ-free vertices.
    c: L²-norm of ``d_c Ẽ + ε (c - c_prev)/τ - μ``.
    z: steepest feasible descent of the z-objective (box KKT measure).
    """
    s = _Step(prob)
    u, c, z = state.u.ravel(), state.c.ravel(), state.z.ravel()
    r_u = s.res_u(u, c, z)
    dcE = s.F.grad_c(u, state.c, state.z) / s.V
    rc = dcE + s.p.epsilon * (c - s.cp) / s.tau - np.asarray(mu).ravel()
    r_c = float(np.sqrt(s.V * rc @ rc))
    r_z = s.res_z(u, c, z)
    return r_u, r_c, r_z


def minimize_displacement(u_init, c, z, grid, params, cfg=None):
    """Minimise ``u ↦ Ẽ_ε(u, c, z)`` with ``u`` fixed on Γ to ``u_init``.

    Returns ``(u, residual)``; raises :class:`NotConverged` if the Newton
    iteration does not reach ``cfg.el_tolerance``.
    """
    cfg = cfg or MinimizerConfig()
    F = functional(grid, params)
    V = grid.cell_volume
    free = np.tile(~grid.gamma_mask().ravel(), grid.dim)
    u = np.array(u_init, dtype=float).ravel()
    J = F.elastic_energy(u, c, z)
    scale = max(1.0, abs(J))
    res = np.inf
    for _ in range(max(cfg.max_inner * cfg.max_outer, 50)):
        gr = F.grad_u(u, c, z)[free]
        res = float(np.sqrt(gr @ gr / V))
        if res <= 0.1 * cfg.el_tolerance:
            break
        H = F.hess_u(u, c, z)[free][:, free]
        d = spla.spsolve(H.tocsc(), -gr)
        slope = float(gr @ d)
        if slope >= 0:
            d, slope = -gr, -float(gr @ gr)

        def trial(t):
            v = u.copy()
            v[free] += t * d
            return F.elastic_energy(v, c, z), v

        out = _armijo(J, slope, trial, cfg, scale)
        if out is None:
            break
        _, J, u = out
    if res > cfg.el_tolerance:
        raise NotConverged(f"displacement residual {res:.2e} above {cfg.el_tolerance:g}")
    return u.reshape((grid.dim,) + grid.node_shape), res
