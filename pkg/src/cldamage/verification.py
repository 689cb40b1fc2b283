"""Independent checks of the weak-solution conditions.

Dual pairings are approximated by extremising over finite, deterministic
batteries of test fields; the results are lower bounds on the violation,
not certified suprema.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields

import numpy as np

from . import grid as g
from . import material as mat
from .energetics import functional
from .errors import NegativeInput
from .evolution import energy_inequality_summary

ZERO_TOL = 1e-9


def truncate_shift(zeta, delta):
    """``[ζ - δ]⁺`` for a nonnegative field ``ζ``."""
    zeta = np.asarray(zeta, dtype=float)
    if not delta > 0:
        raise ValueError("delta must be positive")
    if np.any(zeta < 0):
        raise NegativeInput("truncate_shift expects a nonnegative field")
    return np.maximum(zeta - delta, 0.0)


def driving_force(state, grid, params):
    """Cellwise ``∂_z W_el(e(u), c, z)`` (corner average)."""
    F = functional(grid, params)
    strains = F.strains(state.u)
    z = np.clip(state.z, 0.0, 1.0)
    return mat.dz_w_el(strains, state.c, z, params).mean(axis=0)


def subgradient_r(state, grid, params, zero_tol=ZERO_TOL):
    """``r = -χ_{z ≤ zero_tol} [∂_z W_el]⁺``."""
    force = driving_force(state, grid, params)
    return np.where(state.z <= zero_tol, -np.maximum(force, 0.0), 0.0)


# --------------------------------------------------------------------------
# test batteries


def _bumps(grid, width=0.15):
    """Smooth nonnegative bumps centred on a coarse lattice of points."""
    centres = grid.cell_centers()
    lengths = grid.lengths
    out = []
    ticks = [np.array([0.0, 0.25, 0.5, 0.75, 1.0]) * L for L in lengths]
    for point in np.array(np.meshgrid(*ticks, indexing="ij")).reshape(grid.dim, -1).T:
        r2 = sum((x - p) ** 2 for x, p in zip(centres, point))
        out.append(np.exp(-r2 / (2 * (width * max(lengths)) ** 2)))
    return out


def nonnegative_battery(state, grid, n_random=100, seed=0):
    """Constants, truncations of ``z``, bumps and seeded random fields."""
    shape = grid.shape
    z = np.clip(state.z, 0.0, None)
    battery = [np.full(shape, v) for v in (0.0, 0.5, 1.0, 2.0)]
    battery.append(z.copy())
    battery += [truncate_shift(z, d) for d in (0.05, 0.1, 0.25, 0.5)]
    battery += _bumps(grid)
    rng = np.random.default_rng(seed)
    battery += [rng.uniform(0.0, 2.0, shape) for _ in range(n_random)]
    return battery


def complementarity_check(state, r, grid, n_random=100, seed=0):
    """Largest ``∫ r (ζ - z)`` over the nonnegative battery (should be ≤ 0)."""
    r = np.asarray(r, dtype=float)
    return max(
        g.l2_inner(r, zeta - state.z, grid)
        for zeta in nonnegative_battery(state, grid, n_random, seed)
    )


def nonpositive_battery(state, zdot, grid, n_random=20, seed=0):
    """Unit-L² nonpositive fields: ``-1``, the damage rate, negated
    truncations of ``z``, negated bumps and seeded random fields."""
    z = np.clip(state.z, 0.0, None)
    raw = [np.full(grid.shape, -1.0), np.minimum(np.asarray(zdot, dtype=float), 0.0)]
    raw += [-truncate_shift(z, d) for d in (0.05, 0.1, 0.25, 0.5)]
    raw += [-b for b in _bumps(grid)]
    rng = np.random.default_rng(seed)
    raw += [-rng.uniform(0.0, 1.0, grid.shape) for _ in range(n_random)]
    out = []
    for zeta in raw:
        nrm = math.sqrt(g.l2_inner(zeta, zeta, grid))
        if nrm > 0:
            out.append(zeta / nrm)
    return out


def vi_expression(state, zdot, r, zeta, grid, params):
    """``∫ δ|∇z|^{p-2}∇z·∇ζ + (∂_z W_el - α + β ż) ζ + r ζ``."""
    F = functional(grid, params)
    raw = F.grad_z(state.u, state.c, state.z)
    val = float(raw @ np.asarray(zeta, dtype=float).ravel())
    val += g.l2_inner(-params.alpha + params.beta * np.asarray(zdot) + r, zeta, grid)
    return val


def vi_residual(state, zdot, r, grid, params, n_random=20, seed=0):
    """Smallest value of the damage inequality over nonpositive unit test
    fields (should be ≥ 0)."""
    zdot = np.asarray(zdot, dtype=float)
    if np.any(zdot > 1e-12):
        raise NegativeInput("damage rate must be nonpositive")
    return min(
        vi_expression(state, zdot, r, zeta, grid, params)
        for zeta in nonpositive_battery(state, zdot, grid, n_random, seed)
    )


# --------------------------------------------------------------------------
# uniform convexity of x ↦ |x|^q


def sample_pairs(n_pairs, dim, seed=0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n_pairs, dim)), rng.standard_normal((n_pairs, dim))


def uniform_convexity_probe(q_exp, samples):
    """Minimum of ``⟨|x|^{q-2}x - |y|^{q-2}y, x - y⟩ / |x - y|^q`` over
    sampled pairs; pairs with ``x = y`` are skipped."""
    if q_exp < 2:
        raise ValueError("q must be at least 2")
    x, y = (np.atleast_2d(np.asarray(a, dtype=float)) for a in samples)
    if x.shape[0] != y.shape[0] and x.shape[1] == y.shape[1] == 1:
        x, y = x.T, y.T
    if x.shape != y.shape:
        raise ValueError("sample arrays must have equal shapes")
    d = x - y
    nd = np.linalg.norm(d, axis=-1)
    keep = nd > 0
    if not np.any(keep):
        raise ValueError("all sampled pairs are degenerate")
    x, y, d, nd = x[keep], y[keep], d[keep], nd[keep]
    nx = np.linalg.norm(x, axis=-1, keepdims=True)
    ny = np.linalg.norm(y, axis=-1, keepdims=True)
    lhs = np.sum((nx ** (q_exp - 2) * x - ny ** (q_exp - 2) * y) * d, axis=-1)
    return float(np.min(lhs / nd**q_exp))


# --------------------------------------------------------------------------
# weak-solution report


@dataclass
class WeakSolutionReport:
    viscous1: float
    viscous2: float
    viscous3: float
    vi_min: float
    complementarity_max: float
    energy_slack: float
    precise_slack: float
    kappa_margin: float
    scale: float
    el_tolerance: float
    flags: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(self.flags.values())

    def as_dict(self):
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "flags"}
        out.update({f"ok_{k}": v for k, v in self.flags.items()})
        out["passed"] = self.passed
        return out

    def to_text(self, path=None):
        lines = [f"{k}={_fmt(v)}" for k, v in self.as_dict().items()]
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["key", "value"])
        for k, v in self.as_dict().items():
            w.writerow([k, _fmt(v)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    return f"{float(v):.17g}"


def weak_solution_report(traj, diag, el_tolerance=1e-7, n_random=20, seed=0):
    """Time-integrated residuals of the weak formulation.

    ``viscous1``: momentum balance, ``‖d_u Ẽ_ε‖`` on Γ-free vertices.
    ``viscous2``: diffusion, ``(H¹)*``-norm of ``∂_t c - Δμ``.
    ``viscous3``: chemical potential, ``‖μ - d_c Ẽ_ε - ε ∂_t c‖_{L²}``.
    Each is an ``L²``-in-time norm over the step nodes. The damage
    inequality and complementarity are checked per step on the batteries;
    the energy slacks come from :func:`energy_inequality_summary`.
    """
    grid, params, tau = traj.grid, traj.params, traj.tau
    F = functional(grid, params)
    V = grid.cell_volume
    free = np.tile(~grid.gamma_mask().ravel(), grid.dim)
    L = g.neg_laplacian_matrix(grid)
    v1 = v2 = v3 = 0.0
    vi_min, comp_max = np.inf, -np.inf
    states = traj.states
    for m in range(1, len(states)):
        q, qp = states[m], states[m - 1]
        mu = traj.nodes[m].mu
        cdot = (q.c - qp.c) / tau
        zdot = np.minimum((q.z - qp.z) / tau, 0.0)
        gu = F.grad_u(q.u, q.c, q.z)[free] / V
        v1 += tau * V * float(gu @ gu)
        div = cdot + (L @ mu.ravel()).reshape(grid.shape)
        v2 += tau * g.h1_dual_norm(div, grid) ** 2
        rc = F.grad_c(q.u, q.c, q.z).reshape(grid.shape) / V + params.epsilon * cdot - mu
        v3 += tau * V * float(np.sum(rc**2))
        r = subgradient_r(q, grid, params)
        vi_min = min(vi_min, vi_residual(q, zdot, r, grid, params, n_random, seed))
        comp_max = max(comp_max, complementarity_check(q, r, grid, n_random, seed))
    if len(states) == 1:
        vi_min, comp_max = 0.0, 0.0
    summary = energy_inequality_summary(traj, diag)
    report = WeakSolutionReport(
        viscous1=math.sqrt(v1),
        viscous2=math.sqrt(v2),
        viscous3=math.sqrt(v3),
        vi_min=float(vi_min),
        complementarity_max=float(comp_max),
        energy_slack=summary.coarse_min,
        precise_slack=summary.precise_min,
        kappa_margin=summary.kappa_margin,
        scale=summary.scale,
        el_tolerance=el_tolerance,
    )
    threshold = 10.0 * el_tolerance
    report.flags = {
        "viscous1": report.viscous1 <= threshold,
        "viscous2": report.viscous2 <= threshold,
        "viscous3": report.viscous3 <= threshold,
        "vi": report.vi_min >= -threshold,
        "complementarity": report.complementarity_max <= 1e-10,
        "energy": report.energy_slack >= -1e-7 * report.scale,
        "precise_energy": report.precise_slack >= -1e-6 * report.scale,
    }
    return report
