import numpy as np
import pytest
import sympy as sym
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cldamage import grid as g
from cldamage.errors import NoConvergence, NonZeroMean, ShapeMismatch
from cldamage.grid import GridSpec


def test_gridspec_basic_properties():
    grid = GridSpec.uniform((4, 3), lengths=(2.0, 1.5), gamma_faces=("left", "top"))
    assert grid.dim == 2
    assert grid.shape == (4, 3)
    assert grid.node_shape == (5, 4)
    assert np.allclose(grid.spacing, (0.5, 0.5))
    assert grid.volume == pytest.approx(3.0)
    assert grid.gamma_faces == ("x-", "y+")
    mask = grid.gamma_mask()
    assert mask[0].all() and mask[:, -1].all()
    assert mask.sum() == 4 + 5 - 1


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(cells=(4,), spacing=(0.0,)),
        dict(cells=(4,), spacing=(0.25,), gamma_faces=()),
        dict(cells=(4,), spacing=(0.25,), gamma_faces=("y-",)),
        dict(cells=(4,), spacing=(0.25,), gamma_faces=("q+",)),
        dict(cells=(0,), spacing=(0.25,)),
    ],
)
def test_gridspec_rejects_invalid(kwargs):
    with pytest.raises(ValueError):
        GridSpec(**kwargs)


def test_shape_mismatch_is_reported():
    grid = GridSpec.uniform((4,))
    with pytest.raises(ShapeMismatch):
        g.grad_neumann(np.zeros(5), grid)
    with pytest.raises(ShapeMismatch):
        g.sym_grad(np.zeros((1, 4)), grid)


# ---------------------------------------------------------------- sym_grad


def test_sym_grad_of_zero_is_zero():
    grid = GridSpec.uniform((5, 4))
    e = g.sym_grad(np.zeros((2,) + grid.node_shape), grid)
    assert e.shape == (3, 5, 4)
    assert np.all(e == 0)


def test_sym_grad_linear_1d_exact():
    grid = GridSpec.uniform((10,))
    x = grid.node_coords()[0]
    e = g.sym_grad((0.3 * x)[None], grid)
    assert np.allclose(e, 0.3, atol=1e-14)


def _sympy_strain_2d():
    x, y = sym.symbols("x y")
    u1 = sym.sin(2 * x) * sym.cos(y) + x * y
    u2 = sym.exp(x) * sym.sin(3 * y)
    e11 = sym.diff(u1, x)
    e22 = sym.diff(u2, y)
    e12 = (sym.diff(u1, y) + sym.diff(u2, x)) / 2
    fu = sym.lambdify((x, y), (u1, u2), "numpy")
    fe = sym.lambdify((x, y), (e11, e22, e12), "numpy")
    return fu, fe


def test_sym_grad_second_order_against_symbolic():
    fu, fe = _sympy_strain_2d()
    errors = []
    for n in (8, 16, 32):
        grid = GridSpec.uniform((n, n))
        X, Y = grid.node_coords()
        u = np.stack(fu(X, Y))
        Xc, Yc = grid.cell_centers()
        exact = np.stack([np.broadcast_to(v, Xc.shape) for v in fe(Xc, Yc)])
        errors.append(np.max(np.abs(g.sym_grad(u, grid) - exact)))
    rates = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(rates > 1.8)


def test_pack_unpack_roundtrip(rng):
    a = rng.standard_normal((3, 3, 4))
    s = 0.5 * (a + a.transpose(1, 0, 2))
    assert np.allclose(g.unpack_sym(g.pack_sym(s), 3), s)


# ------------------------------------------------------------ grad_neumann


def test_grad_neumann_constant_is_zero():
    grid = GridSpec.uniform((7, 3))
    assert np.all(g.grad_neumann(np.full(grid.shape, 5.0), grid) == 0)


def test_grad_neumann_cosine_mode_second_order():
    L, k = 2.0, 3
    errors = []
    for n in (32, 64, 128):
        grid = GridSpec.uniform((n,), lengths=L)
        x = grid.cell_centers()[0]
        f = np.cos(np.pi * k * x / L)
        exact = -(np.pi * k / L) * np.sin(np.pi * k * x / L)
        errors.append(np.max(np.abs(g.grad_neumann(f, grid)[0] - exact)))
    assert errors[0] / errors[1] > 3.5 and errors[1] / errors[2] > 3.5


def test_grad_neumann_spike_response():
    grid = GridSpec.uniform((9,))
    h = grid.spacing[0]
    f = np.zeros(9)
    f[4] = 1.0
    d = g.grad_neumann(f, grid)[0]
    expected = np.zeros(9)
    expected[3], expected[5] = 1 / (2 * h), -1 / (2 * h)
    assert np.allclose(d, expected)


# ------------------------------------------------------- inverse Laplacian


def test_inv_neg_laplacian_zero():
    grid = GridSpec.uniform((12,))
    assert np.all(g.inv_neg_laplacian(np.zeros(12), grid) == 0)


@pytest.mark.parametrize("method", ["dct", "cg"])
@pytest.mark.parametrize("k", [1, 3, 7])
def test_inv_neg_laplacian_eigenmode(method, k):
    n = 16
    grid = GridSpec.uniform((n,))
    h = grid.spacing[0]
    x = grid.cell_centers()[0]
    w = np.cos(np.pi * k * x)
    lam = (2 / h**2) * (1 - np.cos(np.pi * k / n))
    v = g.inv_neg_laplacian(w, grid, method=method)
    assert np.allclose(v, w / lam, atol=1e-10 * np.max(np.abs(w / lam)))


def test_eigenvalues_match_dense_spectrum():
    grid = GridSpec.uniform((5, 4), lengths=(1.0, 0.7))
    A = g.neg_laplacian_matrix(grid).toarray()
    assert np.allclose(np.sort(np.linalg.eigvalsh(A)), np.sort(g.neumann_eigenvalues(grid).ravel()))


@pytest.mark.parametrize("shape", [(40,), (9, 7)])
def test_inv_neg_laplacian_cg_residual(shape, rng):
    grid = GridSpec.uniform(shape)
    w = g.project_zero_mean(rng.standard_normal(shape), grid)
    v = g.inv_neg_laplacian(w, grid, method="cg", tol=1e-10)
    assert abs(v.mean()) < 1e-13
    assert np.linalg.norm(g.neg_laplacian(v, grid) - w) <= 1e-10 * np.linalg.norm(w) * 1.0001


def test_cg_and_dct_agree(rng):
    grid = GridSpec.uniform((11, 6))
    w = g.project_zero_mean(rng.standard_normal(grid.shape), grid)
    a = g.inv_neg_laplacian(w, grid, method="dct")
    b = g.inv_neg_laplacian(w, grid, method="cg", tol=1e-13)
    assert np.allclose(a, b, atol=1e-10 * np.max(np.abs(a)))


def test_inv_neg_laplacian_errors(rng):
    grid = GridSpec.uniform((30,))
    with pytest.raises(NonZeroMean):
        g.inv_neg_laplacian(np.ones(30), grid)
    w = g.project_zero_mean(rng.standard_normal(30), grid)
    with pytest.raises(NoConvergence):
        g.inv_neg_laplacian(w, grid, method="cg", maxiter=1)
    with pytest.raises(ValueError):
        g.inv_neg_laplacian(w, grid, method="jacobi")


def test_inverse_is_identity_on_zero_mean(rng):
    grid = GridSpec.uniform((8, 8))
    w = g.project_zero_mean(rng.standard_normal(grid.shape), grid)
    assert np.allclose(g.neg_laplacian(g.inv_neg_laplacian(w, grid), grid), w, atol=1e-11)
    v = g.project_zero_mean(rng.standard_normal(grid.shape), grid)
    assert np.allclose(g.inv_neg_laplacian(g.neg_laplacian(v, grid), grid), v, atol=1e-11)


# ------------------------------------------------------------ H^-1 product


def test_h_minus1_inner_identities(rng):
    grid = GridSpec.uniform((10, 7))
    w = g.project_zero_mean(rng.standard_normal(grid.shape), grid)
    assert g.h_minus1_inner(np.zeros(grid.shape), w, grid) == 0.0
    lhs = g.h_minus1_inner(w, w, grid)
    rhs = g.l2_inner(w, g.inv_neg_laplacian(w, grid), grid)
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_h_minus1_inner_eigenmode():
    n, k = 24, 5
    grid = GridSpec.uniform((n,))
    h = grid.spacing[0]
    w = np.cos(np.pi * k * grid.cell_centers()[0])
    lam = (2 / h**2) * (1 - np.cos(np.pi * k / n))
    assert g.h_minus1_inner(w, w, grid) == pytest.approx(g.l2_inner(w, w, grid) / lam, rel=1e-12)


def test_h_minus1_inner_rejects_nonzero_mean():
    grid = GridSpec.uniform((6,))
    with pytest.raises(NonZeroMean):
        g.h_minus1_inner(np.ones(6), np.ones(6), grid)


def test_h1_dual_norm_of_constant():
    grid = GridSpec.uniform((16,), lengths=2.0)
    # ⟨1, ζ⟩ / ‖ζ‖_{H¹} is maximised by ζ = 1: value ∫1 / sqrt(|Ω|)
    assert g.h1_dual_norm(np.ones(16), grid) == pytest.approx(np.sqrt(2.0))


# -------------------------------------------------------------- quadrature


def test_integrate_mean_project():
    grid = GridSpec.uniform((5, 5))
    assert g.integrate(np.ones(grid.shape), grid) == pytest.approx(1.0)
    assert np.all(g.project_zero_mean(np.full(grid.shape, 3.0), grid) == 0)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (6, 4), elements=st.floats(-1e3, 1e3)))
def test_project_zero_mean_property(f):
    grid = GridSpec.uniform((6, 4))
    p = g.project_zero_mean(f, grid)
    assert abs(g.mean(p, grid)) <= 1e-12 * (1 + np.max(np.abs(f)))
    # nonconstant cosine content is untouched
    import scipy.fft

    a = scipy.fft.dctn(f, norm="ortho")
    b = scipy.fft.dctn(p, norm="ortho")
    a[0, 0] = b[0, 0] = 0
    assert np.allclose(a, b, atol=1e-9 * (1 + np.max(np.abs(f))))


# ------------------------------------------------------ summation by parts


@settings(max_examples=30, deadline=None)
@given(
    st.sampled_from([(7,), (5, 6), (3, 4, 2)]),
    st.integers(0, 2**32 - 1),
)
def test_summation_by_parts(shape, seed):
    rng = np.random.default_rng(seed)
    grid = GridSpec.uniform(shape)
    f, h = rng.standard_normal(shape), rng.standard_normal(shape)
    lhs = -g.l2_inner(g.neg_laplacian(f, grid), h, grid)
    rhs = -g.face_gradient_inner(f, h, grid)
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_operators_are_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    grid = GridSpec.uniform((6, 5))
    f, h = rng.standard_normal(grid.shape), rng.standard_normal(grid.shape)
    u, v = rng.standard_normal((2, 2) + grid.node_shape)
    for op, x, y in [
        (g.neg_laplacian, f, h),
        (g.grad_neumann, f, h),
        (g.sym_grad, u, v),
    ]:
        combined = op(a * x + b * y, grid)
        separate = a * op(x, grid) + b * op(y, grid)
        assert np.allclose(combined, separate, rtol=1e-12, atol=1e-10)


# ---------------------------------------------------------------- snapshots


def test_snapshot_roundtrip(tmp_path, rng):
    grid = GridSpec.uniform((4, 3))
    c = rng.standard_normal(grid.shape)
    u = rng.standard_normal((2,) + grid.node_shape)
    g.write_snapshot(tmp_path / "c.txt", c, grid, "c")
    g.write_snapshot(tmp_path / "u.txt", u, grid, "u", location="node")
    c2, hdr = g.read_snapshot(tmp_path / "c.txt")
    u2, _ = g.read_snapshot(tmp_path / "u.txt")
    assert hdr["cells"] == (4, 3) and hdr["name"] == "c"
    assert np.allclose(c2, c, rtol=1e-15)
    assert np.allclose(u2, u, rtol=1e-15)
