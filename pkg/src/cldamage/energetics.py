"""Global free energy, dissipation and variational derivatives on a grid.

The discrete regularised energy is

    E_ε(u, c, z) = γ/2 Σ_faces |D c|² |cell|
                 + δ/p Σ_corners |∇z|^p w + Σ_cells W_ch(c) |cell|
                 + Σ_corners [W_el(e(u), c, z) + ε/4 |∇u|^4] w,

with ``w = |cell| / 2**n``. Derivatives returned by the public functions
are L²-representatives: the raw gradient divided by the cell volume, so
that ``|cell| * Σ rep * ζ`` is the directional derivative along ``ζ``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import grid as g
from . import material as mat
from .errors import InfeasibleState, PositiveRate


@dataclass
class State:
    u: np.ndarray
    c: np.ndarray
    z: np.ndarray
    time: float = 0.0

    def copy(self):
        return State(self.u.copy(), self.c.copy(), self.z.copy(), self.time)


@dataclass
class EnergyBreakdown:
    grad_c: float
    grad_z: float
    chemical: float
    elastic: float
    reg_u: float

    @property
    def total(self):
        return self.grad_c + self.grad_z + self.chemical + self.elastic + self.reg_u

    def as_dict(self):
        return {
            "grad_c": self.grad_c,
            "grad_z": self.grad_z,
            "chemical": self.chemical,
            "elastic": self.elastic,
            "reg_u": self.reg_u,
            "total": self.total,
        }


def check_feasible(z, tol=1e-12):
    if np.any(z < -tol) or np.any(z > 1.0 + tol):
        raise InfeasibleState(
            f"damage outside [0, 1] by more than {tol:g}: min {np.min(z):.3e}, max {np.max(z):.3e}"
        )


class Functional:
    """Assembled discrete energy for one grid and parameter set."""

    def __init__(self, grid, params):
        self.grid = grid
        self.params = params
        self.n = grid.dim
        self.V = grid.cell_volume
        self.w = g.corner_weight(grid)
        self.D = g.face_difference(grid)
        self.L = g.neg_laplacian_matrix(grid)
        self.Gu = g.node_corner_gradients(grid)
        self.Gz = g.cell_corner_gradients(grid)

    def _cells(self, *fields):
        return [np.asarray(f, dtype=float).reshape(self.grid.shape) for f in fields]

    # ---- kinematics -------------------------------------------------------

    def strains(self, u):
        """Corner displacement gradients, shape ``(n, n, K, *cells)``."""
        n, shape = self.n, self.grid.shape
        u = np.asarray(u, dtype=float).ravel()
        return np.stack([(G @ u).reshape((n, n) + shape) for G in self.Gu], axis=2)

    def z_gradients(self, z):
        """Corner gradients of ``z``, shape ``(K, n, *cells)``."""
        z = np.asarray(z, dtype=float).ravel()
        return np.stack([(G @ z).reshape((self.n,) + self.grid.shape) for G in self.Gz])

    # ---- energy -------------------------------------------------------------

    def breakdown(self, u, c, z):
        c, z = self._cells(c, z)
        p = self.params
        check_feasible(z)
        zc = np.clip(z, 0.0, 1.0)
        Dc = self.D @ c.ravel()
        grad_c = 0.5 * p.gamma * self.V * float(Dc @ Dc)
        gz = self.z_gradients(z)
        gz_norm = np.sqrt(np.sum(gz**2, axis=1))
        grad_z = p.delta / p.p * self.w * float(np.sum(gz_norm**p.p))
        chemical = self.V * float(np.sum(mat.w_ch(c)))
        F = self.strains(u)
        elastic = self.w * float(np.sum(mat.w_el(F, c, zc, p)))
        reg_u = 0.0
        if p.epsilon:
            reg_u = 0.25 * p.epsilon * self.w * float(np.sum(np.sum(F**2, axis=(0, 1)) ** 2))
        return EnergyBreakdown(grad_c, grad_z, chemical, elastic, reg_u)

    def energy(self, u, c, z):
        return self.breakdown(u, c, z).total

    def elastic_energy(self, u, c, z):
        """Displacement-dependent part (elastic + regularisation)."""
        c, z = self._cells(c, z)
        p = self.params
        F = self.strains(u)
        val = self.w * float(np.sum(mat.w_el(F, c, np.clip(z, 0.0, 1.0), p)))
        if p.epsilon:
            val += 0.25 * p.epsilon * self.w * float(np.sum(np.sum(F**2, axis=(0, 1)) ** 2))
        return val

    # ---- raw gradients ----------------------------------------------------

    def stress(self, F, c, z):
        """Corner stresses ``∂_F`` of the integrand, shape of ``F``."""
        p = self.params
        sig = mat.de_w_el(F, c, z, p)
        if p.epsilon:
            sig = sig + p.epsilon * np.sum(F**2, axis=(0, 1)) * F
        return sig

    def grad_u(self, u, c, z):
        """Raw gradient w.r.t. the flattened vertex displacement."""
        c, z = self._cells(c, z)
        F = self.strains(u)
        sig = self.stress(F, c, np.clip(z, 0.0, 1.0))
        out = np.zeros(self.n * self.grid.n_nodes)
        for k, G in enumerate(self.Gu):
            out += G.T @ sig[:, :, k].ravel()
        return self.w * out

    def grad_c(self, u, c, z):
        c, z = self._cells(c, z)
        p = self.params
        F = self.strains(u)
        dcel = mat.dc_w_el(F, c, np.clip(z, 0.0, 1.0), p).sum(axis=0)
        return (
            p.gamma * self.V * (self.L @ c.ravel())
            + self.V * mat.dc_w_ch(c).ravel()
            + self.w * dcel.ravel()
        )

    def grad_z(self, u, c, z):
        c, z = self._cells(c, z)
        p = self.params
        zc = np.clip(z, 0.0, 1.0)
        F = self.strains(u)
        dzel = mat.dz_w_el(F, c, zc, p).sum(axis=0)
        return self.w * (p.delta * self.plap_raw(z) + dzel.ravel())

    def plap_raw(self, z):
        """``Σ_σ Gᵀ(|g|^{p-2} g)``; times ``δ w`` this is the gradient of the
        ``|∇z|^p`` term."""
        p = self.params.p
        gz = self.z_gradients(z)
        norm = np.sqrt(np.sum(gz**2, axis=1))
        with np.errstate(divide="ignore", invalid="ignore"):
            fac = np.where(norm > 0, norm ** (p - 2.0), 0.0)
        out = np.zeros(self.grid.n_cells)
        for k, G in enumerate(self.Gz):
            out += G.T @ (fac[k] * gz[k]).ravel()
        return out

    # ---- Hessians ---------------------------------------------------------

    def hess_u(self, u, c, z):
        c, z = self._cells(c, z)
        p, n, nc = self.params, self.n, self.grid.n_cells
        F = self.strains(u)
        deg = (mat.phi(np.clip(z, 0.0, 1.0), p.phi_kind) + p.eta_tilde).ravel()
        H = None
        for k, G in enumerate(self.Gu):
            Fk = F[:, :, k].reshape(n, n, nc)
            sq = np.sum(Fk**2, axis=(0, 1))
            blocks = [[None] * (n * n) for _ in range(n * n)]
            for a in range(n):
                for b in range(n):
                    for a2 in range(n):
                        for b2 in range(n):
                            coef = p.lame_mu * ((a == a2) * (b == b2) + (a == b2) * (b == a2))
                            coef += p.lame_lambda * (a == b) * (a2 == b2)
                            d = coef * deg
                            if p.epsilon:
                                d = d + p.epsilon * (
                                    sq * ((a == a2) and (b == b2)) + 2.0 * Fk[a, b] * Fk[a2, b2]
                                )
                            blocks[a * n + b][a2 * n + b2] = sp.diags(d)
            K = sp.bmat(blocks, format="csr")
            term = G.T @ K @ G
            H = term if H is None else H + term
        return (self.w * H).tocsr()

    def hess_uz(self, u, c, z):
        """Raw mixed Hessian ``∂²E / ∂u ∂z``, shape ``(n·nodes, cells)``."""
        c, z = self._cells(c, z)
        p, n, nc = self.params, self.n, self.grid.n_cells
        F = self.strains(u)
        dphi = mat.dphi(np.clip(z, 0.0, 1.0), p.phi_kind)
        sig = dphi * mat.stiffness(mat.elastic_strain(mat._sym(F), c, p), p)
        H = None
        for k, G in enumerate(self.Gu):
            B = sp.vstack(
                [sp.diags(sig[a, b, k].ravel()) for a in range(n) for b in range(n)]
            )
            term = G.T @ B
            H = term if H is None else H + term
        return (self.w * H).tocsr()

    def hess_c_diag(self, u, c, z):
        """Pointwise part of the ``c``-Hessian (raw)."""
        c, z = self._cells(c, z)
        p = self.params
        zc = np.clip(z, 0.0, 1.0)
        return self.V * (mat.d2c_w_ch(c) + mat.d2c_w_el(zc, p, self.n)).ravel()

    def hess_z(self, u, c, z):
        """Raw ``z``-Hessian of the energy (sparse)."""
        c, z = self._cells(c, z)
        p, n, nc = self.params, self.n, self.grid.n_cells
        zc = np.clip(z, 0.0, 1.0)
        F = self.strains(u)
        what = mat.w_hat_el(F, c, p).sum(axis=0)
        diag = self.w * (mat.d2phi(zc, p.phi_kind) * what).ravel()
        gz = self.z_gradients(z)
        H = sp.diags(diag)
        q = p.p
        for k, G in enumerate(self.Gz):
            gk = gz[k].reshape(n, nc)
            norm = np.sqrt(np.sum(gk**2, axis=0))
            with np.errstate(divide="ignore", invalid="ignore"):
                f1 = np.where(norm > 0, norm ** (q - 2.0), 0.0)
                f2 = np.where(norm > 0, (q - 2.0) * norm ** (q - 4.0), 0.0)
            blocks = [
                [sp.diags(f1 * (a == b) + f2 * gk[a] * gk[b]) for b in range(n)]
                for a in range(n)
            ]
            K = sp.bmat(blocks, format="csr")
            H = H + self.w * p.delta * (G.T @ K @ G)
        return H.tocsr()


_CACHE = {}


def functional(grid, params):
    key = (grid, params)
    f = _CACHE.get(key)
    if f is None:
        if len(_CACHE) > 64:
            _CACHE.clear()
        f = _CACHE[key] = Functional(grid, params)
    return f


# --------------------------------------------------------------------------
# public operations


def total_energy(q, grid, params):
    """Energy breakdown of a feasible state; the indicator of ``z >= 0``
    contributes nothing because feasibility is a precondition."""
    return functional(grid, params).breakdown(q.u, q.c, q.z)


def dissipation_rate(zdot, grid, params, tol=1e-12):
    """``R̃(ż) = ∫ -α ż + ½ β ż²`` for a nonpositive damage rate."""
    zdot = np.asarray(zdot, dtype=float)
    if np.any(zdot > tol):
        raise PositiveRate(f"damage rate must be nonpositive; max is {zdot.max():.3e}")
    return grid.cell_volume * float(
        np.sum(-params.alpha * zdot + 0.5 * params.beta * zdot**2)
    )


def d_u_energy(q, grid, params):
    check_feasible(q.z)
    raw = functional(grid, params).grad_u(q.u, q.c, q.z)
    return raw.reshape((grid.dim,) + grid.node_shape) / grid.cell_volume


def d_c_energy(q, grid, params):
    check_feasible(q.z)
    raw = functional(grid, params).grad_c(q.u, q.c, q.z)
    return raw.reshape(grid.shape) / grid.cell_volume


def d_z_energy(q, grid, params):
    check_feasible(q.z)
    raw = functional(grid, params).grad_z(q.u, q.c, q.z)
    return raw.reshape(grid.shape) / grid.cell_volume


def chemical_potential(q, c_dot, grid, params):
    """``μ = -γΔc + W_ch'(c) + ∂_c W_el + ε ∂_t c`` at cell centres."""
    return d_c_energy(q, grid, params) + params.epsilon * np.asarray(c_dot, dtype=float)


def boundary_work_rate(u, c, z, b_rate, grid, params):
    """``⟨d_u Ẽ_ε(u, c, z), ∂_t b⟩`` for a vertex rate field."""
    raw = functional(grid, params).grad_u(u, c, z)
    return float(raw @ np.asarray(b_rate, dtype=float).ravel())
