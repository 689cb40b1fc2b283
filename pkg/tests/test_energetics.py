import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cldamage import grid as g
from cldamage import material as mat
from cldamage.energetics import (
    State,
    chemical_potential,
    d_c_energy,
    d_u_energy,
    d_z_energy,
    dissipation_rate,
    functional,
    total_energy,
)
from cldamage.errors import InfeasibleState, PositiveRate
from cldamage.grid import GridSpec
from cldamage.material import ModelParams

from conftest import random_state


def _affine_u(grid, A):
    X = np.stack(grid.node_coords())
    return np.einsum("ij,j...->i...", A, X)


# ------------------------------------------------------------ total_energy


def test_homogeneous_state_energy():
    grid = GridSpec.uniform((8, 8))
    q = State(np.zeros((2,) + grid.node_shape), np.zeros(grid.shape), np.ones(grid.shape))
    b = total_energy(q, grid, ModelParams())
    assert b.grad_c == b.grad_z == b.elastic == b.reg_u == 0.0
    assert b.total == pytest.approx(grid.volume * mat.w_ch(0.0))


def test_eigenstrain_mismatch_energy():
    grid = GridSpec.uniform((10,))
    p = ModelParams()
    q = State(np.zeros((1, 11)), np.ones(10), np.ones(10))
    b = total_energy(q, grid, p)
    assert b.elastic == pytest.approx((1 + p.eta_tilde) * 1.5 * 0.1**2, rel=1e-13)
    # dense quadratic-form cross-check
    C = 2 * p.lame_mu + p.lame_lambda
    assert b.elastic == pytest.approx((1 + p.eta_tilde) * 0.5 * C * 0.1**2, rel=1e-13)


def test_gamma_scaling_is_linear(rng):
    grid = GridSpec.uniform((7, 5))
    q = random_state(grid, rng)
    b1 = total_energy(q, grid, ModelParams(gamma=1.0))
    b2 = total_energy(q, grid, ModelParams(gamma=2.0))
    assert b2.grad_c == 2 * b1.grad_c


def test_breakdown_parts_nonnegative_and_additive(small_grid, rng):
    for _ in range(10):
        q = random_state(small_grid, rng)
        b = total_energy(q, small_grid, ModelParams())
        parts = [b.grad_c, b.grad_z, b.chemical, b.elastic, b.reg_u]
        assert all(v >= 0 for v in parts)
        assert b.total == pytest.approx(sum(parts), rel=1e-12)
        assert b.as_dict()["total"] == b.total


def test_infeasible_state_rejected():
    grid = GridSpec.uniform((4,))
    q = State(np.zeros((1, 5)), np.zeros(4), np.array([0.5, 1.2, 0.5, 0.5]))
    with pytest.raises(InfeasibleState):
        total_energy(q, grid, ModelParams())
    with pytest.raises(InfeasibleState):
        d_z_energy(q, grid, ModelParams())


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 2), st.floats(0, 2))
def test_energy_nondecreasing_in_epsilon(seed, e1, e2):
    grid = GridSpec.uniform((5, 4))
    q = random_state(grid, np.random.default_rng(seed))
    lo, hi = sorted((e1, e2))
    E_lo = total_energy(q, grid, ModelParams(epsilon=lo)).total
    E_hi = total_energy(q, grid, ModelParams(epsilon=hi)).total
    assert E_lo <= E_hi + 1e-12 * abs(E_hi)


# -------------------------------------------------------------- dissipation


def test_dissipation_rate_examples():
    grid = GridSpec.uniform((6,))
    p = ModelParams(alpha=0.1, beta=0.1)
    assert dissipation_rate(np.zeros(6), grid, p) == 0.0
    assert dissipation_rate(-np.ones(6), grid, p) == pytest.approx(0.15)
    with pytest.raises(PositiveRate):
        dissipation_rate(np.full(6, 1e-3), grid, p)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_dissipation_rate_dependence_signature(seed):
    grid = GridSpec.uniform((9,))
    p = ModelParams()
    zdot = -np.random.default_rng(seed).uniform(0, 3, 9)
    lhs = dissipation_rate(2 * zdot, grid, p) - 2 * dissipation_rate(zdot, grid, p)
    assert lhs == pytest.approx(p.beta * g.l2_inner(zdot, zdot, grid), rel=1e-10, abs=1e-14)


# ---------------------------------------------------- variational derivatives


def test_derivatives_of_stress_free_homogeneous_state():
    grid = GridSpec.uniform((6, 5))
    p = ModelParams(epsilon=0.0)
    c0 = 0.3
    s = p.eigenstrain_slope * c0
    q = State(_affine_u(grid, s * np.eye(2)), np.full(grid.shape, c0), np.ones(grid.shape))
    assert np.allclose(d_u_energy(q, grid, p), 0, atol=1e-13)
    assert np.allclose(d_z_energy(q, grid, p), 0, atol=1e-13)
    assert np.allclose(d_c_energy(q, grid, p), mat.dc_w_ch(c0), atol=1e-13)


def test_d_z_intact_quadratic_is_twice_stored_energy(rng):
    grid = GridSpec.uniform((5, 4))
    p = ModelParams()
    A = rng.standard_normal((2, 2)) * 0.2
    c = rng.uniform(-1, 1, grid.shape)
    q = State(_affine_u(grid, A), c, np.ones(grid.shape))
    expected = 2 * mat.w_hat_el(A[:, :, None, None], c, p)
    assert np.allclose(d_z_energy(q, grid, p), expected, rtol=1e-12)


def _directional_fd(F, q, field, zeta, h=1e-5):
    def energy(shift):
        u, c, z = q.u, q.c, q.z
        if field == "u":
            u = u + shift * zeta
        elif field == "c":
            c = c + shift * zeta
        else:
            z = z + shift * zeta
        return F.energy(u, c, z)

    return (energy(h) - energy(-h)) / (2 * h)


@pytest.mark.parametrize("kind", ["linear", "quadratic"])
def test_directional_derivatives_match_fd(small_grid, kind, rng):
    p = ModelParams(phi_kind=kind, eigenstrain_slope=0.3)
    F = functional(small_grid, p)
    V = small_grid.cell_volume
    ops = {"u": d_u_energy, "c": d_c_energy, "z": d_z_energy}
    for _ in range(5):
        q = random_state(small_grid, rng)
        for name, op in ops.items():
            rep = op(q, small_grid, p)
            for _ in range(20):
                zeta = rng.standard_normal(rep.shape)
                an = V * float(np.sum(rep * zeta))
                fd = _directional_fd(F, q, name, zeta)
                assert abs(an - fd) <= 1e-5 * max(abs(an), abs(fd), 1e-8)


@pytest.mark.parametrize("kind", ["linear", "quadratic"])
def test_hessians_match_gradient_differences(small_grid, kind, rng):
    p = ModelParams(phi_kind=kind)
    F = functional(small_grid, p)
    q = random_state(small_grid, rng)
    h = 1e-6
    du = rng.standard_normal(q.u.size)
    dz = rng.standard_normal(small_grid.n_cells)
    dc = rng.standard_normal(small_grid.n_cells)
    u = q.u.ravel()

    def check(an, fd):
        assert np.linalg.norm(an - fd) <= 1e-5 * max(np.linalg.norm(an), 1e-10)

    fd = (F.grad_u(u + h * du, q.c, q.z) - F.grad_u(u - h * du, q.c, q.z)) / (2 * h)
    check(F.hess_u(u, q.c, q.z) @ du, fd)
    zp, zm = q.z + h * dz.reshape(q.z.shape), q.z - h * dz.reshape(q.z.shape)
    check(F.hess_z(u, q.c, q.z) @ dz, (F.grad_z(u, q.c, zp) - F.grad_z(u, q.c, zm)) / (2 * h))
    check(F.hess_uz(u, q.c, q.z) @ dz, (F.grad_u(u, q.c, zp) - F.grad_u(u, q.c, zm)) / (2 * h))
    # the c-Hessian is γ V L plus the returned pointwise diagonal
    cp, cm = q.c + h * dc.reshape(q.c.shape), q.c - h * dc.reshape(q.c.shape)
    Hc = p.gamma * small_grid.cell_volume * (F.L @ dc) + F.hess_c_diag(u, q.c, q.z) * dc
    check(Hc, (F.grad_c(u, cp, q.z) - F.grad_c(u, cm, q.z)) / (2 * h))


# ------------------------------------------------------- chemical potential


def test_chemical_potential_constant_state():
    grid = GridSpec.uniform((8,))
    p = ModelParams(eigenstrain_slope=0.0)
    c0 = -0.4
    q = State(np.zeros((1, 9)), np.full(8, c0), np.ones(8))
    mu = chemical_potential(q, np.zeros(8), grid, p)
    assert np.allclose(mu, mat.dc_w_ch(c0))


def test_chemical_potential_reduces_to_d_c_without_viscosity(rng):
    grid = GridSpec.uniform((6, 6))
    p = ModelParams(epsilon=0.0)
    q = random_state(grid, rng)
    cdot = rng.standard_normal(grid.shape)
    assert np.array_equal(chemical_potential(q, cdot, grid, p), d_c_energy(q, grid, p))


def test_chemical_potential_weak_form(rng):
    grid = GridSpec.uniform((7, 6))
    p = ModelParams(epsilon=0.5)
    F = functional(grid, p)
    for _ in range(5):
        q = random_state(grid, rng)
        cdot = rng.standard_normal(grid.shape)
        mu = chemical_potential(q, cdot, grid, p)
        dcel = mat.dc_w_el(F.strains(q.u), q.c, q.z, p).mean(axis=0)
        for _ in range(20):
            zeta = rng.standard_normal(grid.shape)
            lhs = g.l2_inner(mu, zeta, grid)
            rhs = p.gamma * g.face_gradient_inner(q.c, zeta, grid) + g.l2_inner(
                mat.dc_w_ch(q.c) + dcel + p.epsilon * cdot, zeta, grid
            )
            assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-12)
