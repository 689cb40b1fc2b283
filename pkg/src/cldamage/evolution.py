"""Time stepping, interpolants, energy-inequality checks and parameter studies.

A run solves ``M`` incremental problems with step ``τ = T/M``. Node ``m``
holds ``q^m``; the three time interpolants are

* piecewise constant ``q_M(t) = q^m`` for ``t ∈ ((m-1)τ, mτ]``,
* retarded ``q_M^-(t) = q^{m-1}`` on the same interval,
* piecewise linear ``q̂_M``, interpolating the nodes.

Rates ``∂_t ĉ``, ``∂_t ẑ`` are the exact difference quotients of the
nodes. Boundary-work integrals are evaluated with 3-point Gauss–Legendre
quadrature on every linear piece of the load, which is exact because the
integrand is a polynomial of degree at most three in time.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import grid as g
from . import material as mat
from .energetics import State, check_feasible, functional
from .errors import NotConverged, StepFailed, TimeOutOfRange
from .minimizer import (
    MinimizerConfig,
    StepProblem,
    StepResult,
    minimize_displacement,
    recover_mu_lambda,
    solve_step,
)

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(3)


# --------------------------------------------------------------------------
# boundary loads


@dataclass
class PiecewiseLinearLoad:
    """Vertex field ``b(t)`` interpolated linearly between knots.

    ``fields[k]`` is the full vertex field at ``times[k]``; outside the
    knot range the load is held constant.
    """

    times: np.ndarray
    fields: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.fields = np.asarray(self.fields, dtype=float)
        if self.times.ndim != 1 or self.times.size < 1:
            raise ValueError("need at least one knot")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("knot times must increase strictly")
        if self.fields.shape[0] != self.times.size:
            raise ValueError("one field per knot is required")

    def __call__(self, t):
        ts = self.times
        if t <= ts[0]:
            return self.fields[0].copy()
        if t >= ts[-1]:
            return self.fields[-1].copy()
        k = int(np.searchsorted(ts, t, side="right")) - 1
        theta = (t - ts[k]) / (ts[k + 1] - ts[k])
        return (1.0 - theta) * self.fields[k] + theta * self.fields[k + 1]

    def pieces(self, t0, t1):
        """Split ``[t0, t1]`` at the knots; yields ``(a, b, rate)``."""
        cuts = [t0] + [t for t in self.times if t0 < t < t1] + [t1]
        out = []
        for a, b in zip(cuts[:-1], cuts[1:]):
            out.append((a, b, (self(b) - self(a)) / (b - a)))
        return out


def stretch_load(grid, times, amplitudes, axis=0):
    """Homogeneous stretch ``b(t, x) = g(t) x_axis e_axis`` with ``g``
    piecewise linear through ``(times, amplitudes)``."""
    coord = grid.node_coords()[axis]
    fields = np.zeros((len(times), grid.dim) + grid.node_shape)
    for k, a in enumerate(amplitudes):
        fields[k, axis] = a * coord
    return PiecewiseLinearLoad(times, fields)


def constant_load(grid, value=None):
    f = np.zeros((grid.dim,) + grid.node_shape) if value is None else np.asarray(value, float)
    return PiecewiseLinearLoad([0.0], f[None])


# --------------------------------------------------------------------------
# configuration and results


@dataclass
class RunConfig:
    horizon: float
    steps: int
    grid: g.GridSpec
    params: mat.ModelParams
    c0: np.ndarray
    z0: np.ndarray
    load: PiecewiseLinearLoad = None

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if int(self.steps) < 1:
            raise ValueError("at least one step is required")
        self.steps = int(self.steps)
        self.c0 = np.asarray(self.c0, dtype=float)
        self.z0 = np.asarray(self.z0, dtype=float)
        if self.c0.shape != self.grid.shape or self.z0.shape != self.grid.shape:
            raise ValueError("initial fields must be cell fields of the grid")
        if np.any(self.z0 < 0) or np.any(self.z0 > 1):
            raise ValueError("initial damage must lie in [0, 1]")
        if self.load is None:
            self.load = constant_load(self.grid)

    @property
    def tau(self):
        return self.horizon / self.steps


@dataclass
class Trajectory:
    nodes: list
    tau: float
    horizon: float
    loads: list = field(default_factory=list)
    grid: g.GridSpec = None
    params: mat.ModelParams = None
    load: PiecewiseLinearLoad = None

    @property
    def states(self):
        return [r.state for r in self.nodes]

    @property
    def n_steps(self):
        return len(self.nodes) - 1

    def node_index(self, t):
        """``d_M(t) / τ`` as an integer node index."""
        _check_time(t, self.horizon)
        return int(math.ceil(t / self.tau - 1e-12)) if t > 0 else 0


@dataclass
class Diagnostics:
    rows: list = field(default_factory=list)

    COLUMNS = (
        "step", "time", "grad_c", "grad_z", "chemical", "elastic", "reg_u", "total",
        "dissipation", "flux", "viscous", "work", "kappa1", "kappa2", "kappa3",
        "step_slack", "step_slack_precise", "slack", "res_u", "res_c", "res_z",
        "outer_iters", "converged", "mass_error", "z_min",
    )

    def column(self, name):
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in self.COLUMNS])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


# --------------------------------------------------------------------------
# time discretisation


def _check_time(t, horizon):
    if not (0.0 <= t <= horizon * (1 + 1e-12)):
        raise TimeOutOfRange(f"t = {t} outside [0, {horizon}]")


def d_M(t, tau):
    """``min{mτ : mτ >= t}``."""
    if t < 0:
        raise TimeOutOfRange(f"t = {t} is negative")
    return math.ceil(t / tau - 1e-12) * tau if t > 0 else 0.0


def d_M_minus(t, tau):
    """``d_M(t) - τ``, clamped at ``0``."""
    return max(d_M(t, tau) - tau, 0.0)


def eval_constant(traj, t):
    return traj.nodes[traj.node_index(t)].state


def eval_retarded(traj, t):
    return traj.nodes[max(traj.node_index(t) - 1, 0)].state


def eval_linear(traj, t):
    _check_time(t, traj.horizon)
    m = traj.node_index(t)
    if m == 0:
        return traj.nodes[0].state
    a, b = traj.nodes[m - 1].state, traj.nodes[m].state
    beta = (t - (m - 1) * traj.tau) / traj.tau
    return State(
        beta * b.u + (1 - beta) * a.u,
        beta * b.c + (1 - beta) * a.c,
        beta * b.z + (1 - beta) * a.z,
        t,
    )


# --------------------------------------------------------------------------
# running


def init_u0(c0, z0, b0, params, grid, cfg=None):
    """Displacement minimising ``Ẽ_ε(·, c⁰, z⁰)`` with ``u = b(0)`` on Γ."""
    check_feasible(z0)
    u, _ = minimize_displacement(np.asarray(b0, dtype=float), c0, z0, grid, params, cfg)
    return u


def _initial_result(cfg, min_cfg):
    grid, params = cfg.grid, cfg.params
    b0 = cfg.load(0.0)
    u0 = init_u0(cfg.c0, cfg.z0, b0, params, grid, min_cfg)
    q0 = State(u0, cfg.c0.copy(), cfg.z0.copy(), 0.0)
    F = functional(grid, params)
    gu = F.grad_u(u0, q0.c, q0.z)[np.tile(~grid.gamma_mask().ravel(), grid.dim)]
    res_u = float(np.sqrt(gu @ gu / grid.cell_volume))
    dc = F.grad_c(u0, q0.c, q0.z).reshape(grid.shape) / grid.cell_volume
    return StepResult(
        state=q0,
        mu=dc.copy(),
        lambda_=float(np.mean(dc - params.gamma * g.neg_laplacian(q0.c, grid))),
        el_residuals=(res_u, 0.0, 0.0),
        objective=F.energy(u0, q0.c, q0.z),
        outer_iters=0,
        converged=True,
    )


def run(cfg, min_cfg=None, on_step=None):
    """Solve all ``M`` steps. Returns ``(Trajectory, Diagnostics)``.

    A step that fails to converge raises :class:`StepFailed` whose
    ``partial`` attribute holds the trajectory and diagnostics so far.
    """
    min_cfg = min_cfg or MinimizerConfig()
    tau = cfg.tau
    try:
        r0 = _initial_result(cfg, min_cfg)
    except NotConverged as exc:
        raise StepFailed(0, f"initial displacement: {exc}", partial=None) from exc
    traj = Trajectory(
        [r0], tau, cfg.horizon, [cfg.load(0.0)], cfg.grid, cfg.params, cfg.load
    )
    diag = Diagnostics()
    diag.rows.append(_node_row(traj, 0, None))
    for m in range(1, cfg.steps + 1):
        prob = StepProblem(
            traj.nodes[-1].state, tau, cfg.load(m * tau), cfg.params, cfg.grid,
            boundary_prev=traj.loads[-1],
        )
        try:
            res = solve_step(prob, min_cfg)
        except NotConverged as exc:
            raise StepFailed(m, str(exc), partial=(traj, diag)) from exc
        res.state.time = m * tau
        traj.nodes.append(res)
        traj.loads.append(prob.boundary_u)
        diag.rows.append(_node_row(traj, m, diag.rows[-1]))
        if on_step is not None:
            on_step(m, traj, diag)
    return traj, diag


def _node_row(traj, m, prev_row):
    grid, params = traj.grid, traj.params
    F = functional(grid, params)
    res = traj.nodes[m]
    q = res.state
    parts = F.breakdown(q.u, q.c, q.z).as_dict()
    c_start = traj.nodes[0].state.c
    row = {"step": m, "time": m * traj.tau, **parts}
    row.update(
        res_u=res.el_residuals[0], res_c=res.el_residuals[1], res_z=res.el_residuals[2],
        outer_iters=res.outer_iters, converged=res.converged,
        mass_error=abs(g.integrate(q.c, grid) - g.integrate(c_start, grid)),
        z_min=float(np.min(q.z)),
    )
    if m == 0:
        row.update(
            dissipation=0.0, flux=0.0, viscous=0.0, work=0.0, kappa1=0.0, kappa2=0.0,
            kappa3=0.0, step_slack=0.0, step_slack_precise=0.0, slack=0.0,
        )
        return row
    terms = step_terms(traj, m)
    row.update(terms)
    e_prev = prev_row["total"]
    row["step_slack"] = (
        e_prev + terms["work"] - parts["total"]
        - terms["dissipation"] - 0.5 * terms["viscous"] - 0.5 * terms["flux"]
    )
    row["step_slack_precise"] = (
        e_prev + terms["work"] + terms["kappa1"] + terms["kappa2"] + terms["kappa3"]
        - parts["total"] - terms["dissipation_full"] - terms["viscous"] - terms["flux"]
    )
    row["slack"] = prev_row["slack"] + row["step_slack"]
    return row


def step_terms(traj, m):
    """Per-step integrals over ``[(m-1)τ, mτ]``.

    ``dissipation`` is ``τ R̃(ż)``, ``dissipation_full`` is
    ``τ ∫ -α ż + β ż²``; ``flux`` is ``τ ‖∇μ‖²``; ``viscous`` is
    ``τ ε ‖ċ‖²``; ``work`` is the boundary work; ``kappa*`` are the
    remainder terms of the precise inequality.
    """
    grid, params, tau = traj.grid, traj.params, traj.tau
    F = functional(grid, params)
    V = grid.cell_volume
    a, b = traj.nodes[m - 1].state, traj.nodes[m].state
    res = traj.nodes[m]
    cdot = (b.c - a.c) / tau
    zdot = (b.z - a.z) / tau
    Dmu = F.D @ res.mu.ravel()
    out = {
        "dissipation": tau * V * float(np.sum(-params.alpha * zdot + 0.5 * params.beta * zdot**2)),
        "dissipation_full": tau * V * float(np.sum(-params.alpha * zdot + params.beta * zdot**2)),
        "flux": tau * V * float(Dmu @ Dmu),
        "viscous": tau * params.epsilon * V * float(np.sum(cdot**2)),
    }
    load = traj.load
    t0, t1 = (m - 1) * tau, m * tau
    b_prev = traj.loads[m - 1]
    work = 0.0
    for s0, s1, rate in load.pieces(t0, t1):
        half = 0.5 * (s1 - s0)
        for x, w in zip(_GAUSS_X, _GAUSS_W):
            s = s0 + half * (x + 1.0)
            u = a.u + load(s) - b_prev
            work += w * half * float(F.grad_u(u, a.c, a.z) @ rate.ravel())
    out["work"] = work
    shifted = a.u + traj.loads[m] - b_prev
    k1 = k2 = k3 = 0.0
    zc = np.clip(b.z, 0.0, 1.0)
    Fm = F.strains(b.u)
    dcel_m = mat.dc_w_el(Fm, b.c, zc, params).sum(axis=0)
    dch_m = mat.dc_w_ch(b.c)
    dzel_m = mat.dz_w_el(Fm, b.c, zc, params).sum(axis=0)
    Fs = F.strains(shifted)
    for x, w in zip(_GAUSS_X, _GAUSS_W):
        theta = 0.5 * (x + 1.0)
        ch = (1 - theta) * a.c + theta * b.c
        zh = np.clip((1 - theta) * a.z + theta * b.z, 0.0, 1.0)
        dcel = mat.dc_w_el(Fs, ch, np.clip(a.z, 0.0, 1.0), params).sum(axis=0)
        dzel = mat.dz_w_el(Fs, b.c, zh, params).sum(axis=0)
        k1 += 0.5 * w * tau * F.w * float(np.sum((dcel - dcel_m) * cdot))
        k2 += 0.5 * w * tau * V * float(np.sum((mat.dc_w_ch(ch) - dch_m) * cdot))
        k3 += 0.5 * w * tau * F.w * float(np.sum((dzel - dzel_m) * zdot))
    out.update(kappa1=k1, kappa2=k2, kappa3=k3)
    return out


# --------------------------------------------------------------------------
# energy inequalities


def _energy_scale(traj, diag):
    return diag.rows[0]["total"] + 1.0


def _rows(diag, name):
    return np.array([r[name] for r in diag.rows], dtype=float)


def energy_inequality_check(traj, diag, t1, t2):
    """Slacks (RHS - LHS) of the discrete energy inequalities on ``[t1, t2]``.

    Returns ``(coarse, precise)``. The coarse form runs over the nodes
    ``d_M(t1) .. d_M(t2)``; the precise form, with full coefficients and the
    remainder ``κ``, over ``d_M^-(t1) .. d_M(t2)``. Both are ``0`` when
    ``t1 = t2``.
    """
    if not (0.0 <= t1 <= t2 <= traj.horizon * (1 + 1e-12)):
        raise TimeOutOfRange("need 0 <= t1 <= t2 <= T")
    if t1 == t2:
        return 0.0, 0.0
    b = traj.node_index(t2)
    a = traj.node_index(t1)
    a_minus = max(a - 1, 0) if t1 > 0 else 0
    s = _rows(diag, "step_slack")
    p = _rows(diag, "step_slack_precise")
    return float(np.sum(s[a + 1 : b + 1])), float(np.sum(p[a_minus + 1 : b + 1]))


@dataclass
class InequalitySummary:
    coarse_min: float
    precise_min: float
    kappa_margin: float
    scale: float

    def passed(self, coarse_tol=1e-7, precise_tol=1e-6):
        return (
            self.coarse_min >= -coarse_tol * self.scale
            and self.precise_min >= -precise_tol * self.scale
        )


def energy_inequality_summary(traj, diag):
    """Worst slack over all node pairs ``a < b`` for both forms, and the
    ``κ`` margin ``Σ_m |κ^m|``."""
    s = _rows(diag, "step_slack")[1:]
    p = _rows(diag, "step_slack_precise")[1:]
    worst_s, worst_p = np.inf, np.inf
    cs = np.concatenate([[0.0], np.cumsum(s)])
    cp = np.concatenate([[0.0], np.cumsum(p)])
    n = s.size
    for a in range(n):
        worst_s = min(worst_s, float(np.min(cs[a + 1 :] - cs[a])))
        worst_p = min(worst_p, float(np.min(cp[a + 1 :] - cp[a])))
    kappa = np.abs(_rows(diag, "kappa1") + _rows(diag, "kappa2") + _rows(diag, "kappa3"))
    return InequalitySummary(
        worst_s if n else 0.0, worst_p if n else 0.0, float(np.sum(kappa)), _energy_scale(traj, diag)
    )


# --------------------------------------------------------------------------
# discrete norms


def _node_corner_values(u, grid):
    """Vertex values seen from every cell corner, shape ``(K, n, *cells)``."""
    out = []
    for sigma in g.corners(grid.dim):
        index = (slice(None),) + tuple(slice(s, s + n) for s, n in zip(sigma, grid.cells))
        out.append(u[index])
    return np.stack(out)


def norm_u_w1q(u, grid, params, q):
    F = functional(grid, params)
    vals = _node_corner_values(u, grid)
    grads = F.strains(u)
    lq = np.sum(np.sum(vals**2, axis=1) ** (q / 2))
    gq = np.sum(np.sum(grads**2, axis=(0, 1)) ** (q / 2))
    return float((F.w * (lq + gq)) ** (1.0 / q))


def norm_h1(f, grid):
    D = g.face_difference(grid)
    Df = D @ f.ravel()
    return float(np.sqrt(grid.cell_volume * (np.sum(f**2) + Df @ Df)))


def norm_z_w1p(z, grid, params):
    F = functional(grid, params)
    gz = F.z_gradients(z)
    gp = np.sum(np.sum(gz**2, axis=1) ** (params.p / 2))
    return float((grid.cell_volume * np.sum(np.abs(z) ** params.p) + F.w * gp) ** (1 / params.p))


def grad_u_l4_energy(u, grid, params):
    """``ε ∫ |∇u|⁴``."""
    F = functional(grid, params)
    grads = F.strains(u)
    return params.epsilon * F.w * float(np.sum(np.sum(grads**2, axis=(0, 1)) ** 2))


def trajectory_norms(traj):
    """Discrete versions of the quantities bounded uniformly in ``M`` and
    ``ε``."""
    grid, params, tau = traj.grid, traj.params, traj.tau
    V = grid.cell_volume
    states = traj.states
    out = {
        "u_Linf_H1": max(norm_u_w1q(q.u, grid, params, 2) for q in states),
        "u_Linf_W14": max(norm_u_w1q(q.u, grid, params, 4) for q in states),
        "c_Linf_H1": max(norm_h1(q.c, grid) for q in states),
        "z_Linf_W1p": max(norm_z_w1p(q.z, grid, params) for q in states),
        "eps_grad_u4": max(grad_u_l4_energy(q.u, grid, params) for q in states),
    }
    dc2 = dz2 = dual2 = mu2 = 0.0
    for m in range(1, len(states)):
        cdot = (states[m].c - states[m - 1].c) / tau
        zdot = (states[m].z - states[m - 1].z) / tau
        dc2 += tau * V * float(np.sum(cdot**2))
        dz2 += tau * V * float(np.sum(zdot**2))
        dual2 += tau * g.h1_dual_norm(cdot, grid) ** 2
        mu2 += tau * norm_h1(traj.nodes[m].mu, grid) ** 2
    out.update(
        c_dot_L2=math.sqrt(dc2),
        z_dot_L2=math.sqrt(dz2),
        c_dot_L2_H1dual=math.sqrt(dual2),
        mu_L2_H1=math.sqrt(mu2),
    )
    eps = params.epsilon
    out["eps14_u_Linf_W14"] = eps**0.25 * out["u_Linf_W14"]
    out["eps12_c_dot_L2"] = eps**0.5 * out["c_dot_L2"]
    return out


APRIORI_M = ("u_Linf_W14", "c_Linf_H1", "z_Linf_W1p", "c_dot_L2", "z_dot_L2", "mu_L2_H1")
APRIORI_EPS = (
    "u_Linf_H1", "eps14_u_Linf_W14", "c_Linf_H1", "z_Linf_W1p",
    "c_dot_L2_H1dual", "eps12_c_dot_L2", "z_dot_L2", "mu_L2_H1",
)


def apriori_report(traj, diag):
    """The six M-uniform quantities divided by ``E_ε(q⁰) + 1``."""
    norms = trajectory_norms(traj)
    scale = _energy_scale(traj, diag)
    return {k: norms[k] / scale for k in APRIORI_M}


# --------------------------------------------------------------------------
# studies


def _run_member(args):
    cfg, min_cfg = args
    traj, diag = run(cfg, min_cfg)
    return traj, diag


def _map(fn, items, workers):
    if workers and workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


@dataclass
class RefinementReport:
    steps: list
    ratios: dict
    band: dict
    inequality: dict
    kappa_margins: list

    @property
    def within_band(self):
        return all(v <= 2.0 for v in self.band.values())

    @property
    def kappa_decreasing(self):
        k = self.kappa_margins
        return all(b < a for a, b in zip(k[:-1], k[1:]))


def refinement_study(cfg, m_list, min_cfg=None, workers=1, keep=False):
    """Run the family ``M ∈ m_list`` and compare the a-priori ratios."""
    m_list = list(m_list)
    members = [(replace(cfg, steps=m), min_cfg) for m in m_list]
    runs = _map(_run_member, members, workers)
    ratios, inequality, kappas = {}, {}, []
    for m, (traj, diag) in zip(m_list, runs):
        ratios[m] = apriori_report(traj, diag)
        summary = energy_inequality_summary(traj, diag)
        inequality[m] = summary
        kappas.append(summary.kappa_margin)
    band = {}
    for k in APRIORI_M:
        vals = np.array([ratios[m][k] for m in m_list])
        lo = vals.min()
        band[k] = float(vals.max() / lo) if lo > 0 else (1.0 if vals.max() == 0 else np.inf)
    report = RefinementReport(m_list, ratios, band, inequality, kappas)
    if keep:
        report.runs = dict(zip(m_list, runs))
    return report


@dataclass
class SweepReport:
    eps: list
    quantities: dict
    bounded: dict
    eps_grad_u4: list

    @property
    def all_bounded(self):
        return all(self.bounded.values())

    @property
    def reg_decreasing(self):
        return self.eps_grad_u4[-1] < self.eps_grad_u4[0]


def viscosity_sweep(cfg, eps_list, min_cfg=None, workers=1, keep=False):
    """Run one trajectory per ``ε`` and check the ε-uniform bounds.

    A quantity is flagged when it exceeds twice its value at the first
    (largest) ``ε``.
    """
    eps_list = [float(e) for e in eps_list]
    if any(e <= 0 for e in eps_list):
        raise ValueError("viscosities must be positive")
    if any(b >= a for a, b in zip(eps_list[:-1], eps_list[1:])):
        raise ValueError("viscosities must decrease")
    members = [(replace(cfg, params=cfg.params.with_(epsilon=e)), min_cfg) for e in eps_list]
    runs = _map(_run_member, members, workers)
    quantities = {e: trajectory_norms(traj) for e, (traj, _) in zip(eps_list, runs)}
    bounded = {}
    for k in APRIORI_EPS:
        base = quantities[eps_list[0]][k]
        bounded[k] = all(quantities[e][k] <= 2.0 * base + 1e-14 for e in eps_list)
    report = SweepReport(
        eps_list, quantities, bounded, [quantities[e]["eps_grad_u4"] for e in eps_list]
    )
    if keep:
        report.runs = dict(zip(eps_list, runs))
    return report


# --------------------------------------------------------------------------
# persistence


def diagnostics_from_trajectory(traj):
    """Recompute the diagnostics rows of a stored trajectory."""
    diag = Diagnostics()
    diag.rows.append(_node_row(traj, 0, None))
    for m in range(1, len(traj.nodes)):
        diag.rows.append(_node_row(traj, m, diag.rows[-1]))
    return diag


def save_trajectory(traj, path):
    states = traj.states
    np.savez_compressed(
        path,
        u=np.stack([q.u for q in states]),
        c=np.stack([q.c for q in states]),
        z=np.stack([q.z for q in states]),
        mu=np.stack([r.mu for r in traj.nodes]),
        lam=np.array([r.lambda_ for r in traj.nodes]),
        residuals=np.array([r.el_residuals for r in traj.nodes]),
        objective=np.array([r.objective for r in traj.nodes]),
        outer_iters=np.array([r.outer_iters for r in traj.nodes]),
        converged=np.array([r.converged for r in traj.nodes]),
        loads=np.stack(traj.loads),
        tau=traj.tau,
        horizon=traj.horizon,
    )


def load_trajectory(path, grid, params, load):
    data = np.load(path)
    tau = float(data["tau"])
    nodes = []
    for m in range(data["c"].shape[0]):
        nodes.append(
            StepResult(
                state=State(data["u"][m], data["c"][m], data["z"][m], m * tau),
                mu=data["mu"][m],
                lambda_=float(data["lam"][m]),
                el_residuals=tuple(float(v) for v in data["residuals"][m]),
                objective=float(data["objective"][m]),
                outer_iters=int(data["outer_iters"][m]),
                converged=bool(data["converged"][m]),
            )
        )
    loads = list(data["loads"])
    return Trajectory(nodes, tau, float(data["horizon"]), loads, grid, params, load)
