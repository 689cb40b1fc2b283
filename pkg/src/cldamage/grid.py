"""Uniform structured grid and the discrete operators built on it.

Scalar unknowns (concentration, damage, chemical potential) live at cell
centres; the displacement lives at the grid vertices. Cell fields obey
homogeneous Neumann conditions through mirror ghost cells, which makes the
face-difference gradient ``D`` satisfy ``-Δ_h = Dᵀ D`` exactly.

Gradients that enter nonlinear energy densities are evaluated at the ``2**n``
corners of each cell ("corner quadrature"): for a cell field the component
along axis ``b`` at corner ``σ`` is the face difference on side ``σ_b`` of the
cell; for a vertex field it is the edge difference through that corner. Each
corner carries weight ``|cell| / 2**n``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft
import scipy.sparse as sp

from .errors import NoConvergence, NonZeroMean, ShapeMismatch

FACE_ALIASES = {
    "left": "x-",
    "right": "x+",
    "bottom": "y-",
    "top": "y+",
    "front": "z-",
    "back": "z+",
}
_AXES = "xyz"


def _normalize_face(face):
    face = FACE_ALIASES.get(face, face)
    if len(face) != 2 or face[0] not in _AXES or face[1] not in "+-":
        raise ValueError(f"unknown boundary face {face!r}")
    return face


@dataclass(frozen=True)
class GridSpec:
    """Uniform tensor grid on ``[0, L_0] x ... x [0, L_{n-1}]``.

    Parameters
    ----------
    cells : tuple of int
        Number of cells per axis.
    spacing : tuple of float
        Cell width per axis.
    gamma_faces : tuple of str
        Boundary faces carrying the Dirichlet displacement data. Faces are
        named ``"x-"``, ``"x+"``, ``"y-"``, ... (aliases ``left``, ``right``,
        ``bottom``, ``top``).
    """

    cells: tuple
    spacing: tuple
    gamma_faces: tuple = ("x-",)

    def __post_init__(self):
        cells = tuple(int(c) for c in np.atleast_1d(self.cells))
        spacing = np.atleast_1d(np.asarray(self.spacing, dtype=float))
        if spacing.size == 1 and len(cells) > 1:
            spacing = np.repeat(spacing, len(cells))
        spacing = tuple(float(h) for h in spacing)
        faces = self.gamma_faces
        if isinstance(faces, str):
            faces = (faces,)
        faces = tuple(sorted({_normalize_face(f) for f in faces}))
        if not 1 <= len(cells) <= 3:
            raise ValueError("dimension must be 1, 2 or 3")
        if len(spacing) != len(cells):
            raise ShapeMismatch("spacing and cells differ in length")
        if any(c < 1 for c in cells):
            raise ValueError("every axis needs at least one cell")
        if any(not h > 0 for h in spacing):
            raise ValueError("spacing must be positive")
        if not faces:
            raise ValueError("the Dirichlet boundary must be nonempty")
        for f in faces:
            if _AXES.index(f[0]) >= len(cells):
                raise ValueError(f"face {f} does not exist in {len(cells)}-D")
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "gamma_faces", faces)

    @classmethod
    def uniform(cls, cells, lengths=1.0, gamma_faces=("x-",)):
        cells = tuple(int(c) for c in np.atleast_1d(cells))
        lengths = np.broadcast_to(np.asarray(lengths, dtype=float), (len(cells),))
        return cls(cells, tuple(lengths / np.asarray(cells)), gamma_faces)

    @property
    def dim(self):
        return len(self.cells)

    @property
    def shape(self):
        return self.cells

    @property
    def node_shape(self):
        return tuple(c + 1 for c in self.cells)

    @property
    def n_cells(self):
        return int(np.prod(self.cells))

    @property
    def n_nodes(self):
        return int(np.prod(self.node_shape))

    @property
    def lengths(self):
        return tuple(c * h for c, h in zip(self.cells, self.spacing))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @property
    def volume(self):
        return float(np.prod(self.lengths))

    @property
    def n_corners(self):
        return 2**self.dim

    def cell_centers(self):
        axes = [(np.arange(c) + 0.5) * h for c, h in zip(self.cells, self.spacing)]
        return np.meshgrid(*axes, indexing="ij")

    def node_coords(self):
        axes = [np.arange(c + 1) * h for c, h in zip(self.cells, self.spacing)]
        return np.meshgrid(*axes, indexing="ij")

    def gamma_mask(self):
        """Boolean vertex mask of the Dirichlet boundary."""
        mask = np.zeros(self.node_shape, dtype=bool)
        for face in self.gamma_faces:
            axis = _AXES.index(face[0])
            index = [slice(None)] * self.dim
            index[axis] = 0 if face[1] == "-" else self.cells[axis]
            mask[tuple(index)] = True
        return mask


def _check_cell_field(f, grid):
    f = np.asarray(f, dtype=float)
    if f.shape != grid.shape:
        raise ShapeMismatch(f"expected cell field of shape {grid.shape}, got {f.shape}")
    return f


def _check_node_field(u, grid):
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.dim,) + grid.node_shape:
        raise ShapeMismatch(
            f"expected vertex field of shape {(grid.dim,) + grid.node_shape}, got {u.shape}"
        )
    return u


def corners(dim):
    return list(itertools.product((0, 1), repeat=dim))


# --------------------------------------------------------------------------
# sparse operators (cached per grid)


@lru_cache(maxsize=32)
def face_difference(grid):
    """Stacked interior face differences ``(f[i+1] - f[i]) / h`` over all axes."""
    blocks = []
    index = np.arange(grid.n_cells).reshape(grid.shape)
    for b, (n_b, h) in enumerate(zip(grid.cells, grid.spacing)):
        if n_b < 2:
            continue
        lo = np.take(index, np.arange(n_b - 1), axis=b).ravel()
        hi = np.take(index, np.arange(1, n_b), axis=b).ravel()
        rows = np.arange(lo.size)
        data = np.concatenate([np.full(lo.size, -1.0 / h), np.full(lo.size, 1.0 / h)])
        blocks.append(
            sp.csr_matrix(
                (data, (np.concatenate([rows, rows]), np.concatenate([lo, hi]))),
                shape=(lo.size, grid.n_cells),
            )
        )
    if not blocks:
        return sp.csr_matrix((0, grid.n_cells))
    return sp.vstack(blocks).tocsr()


@lru_cache(maxsize=32)
def neg_laplacian_matrix(grid):
    """Neumann ``-Δ_h`` (3-point / 5-point stencil with mirror ghosts)."""
    D = face_difference(grid)
    return (D.T @ D).tocsr()


@lru_cache(maxsize=32)
def cell_corner_gradients(grid):
    """One sparse matrix per cell corner mapping a cell field to its gradient.

    Output rows are ordered ``component * n_cells + cell``.
    """
    n, nc = grid.dim, grid.n_cells
    index = np.arange(nc).reshape(grid.shape)
    cell_multi = np.indices(grid.shape).reshape(n, -1)
    mats = []
    for sigma in corners(n):
        rows, cols, data = [], [], []
        for b in range(n):
            face = cell_multi[b] + sigma[b]  # face index along axis b
            ok = (face >= 1) & (face <= grid.cells[b] - 1)
            hi_multi = cell_multi.copy()
            hi_multi[b] = face
            lo_multi = cell_multi.copy()
            lo_multi[b] = face - 1
            cell_ids = np.arange(nc)[ok]
            hi = index[tuple(hi_multi[:, ok])]
            lo = index[tuple(lo_multi[:, ok])]
            r = b * nc + cell_ids
            h = grid.spacing[b]
            rows += [r, r]
            cols += [hi, lo]
            data += [np.full(r.size, 1.0 / h), np.full(r.size, -1.0 / h)]
        mats.append(
            sp.csr_matrix(
                (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                shape=(n * nc, nc),
            )
        )
    return tuple(mats)


@lru_cache(maxsize=32)
def node_corner_gradients(grid):
    """One sparse matrix per cell corner mapping a vertex vector field to
    the displacement gradient ``F[a, b] = ∂_b u_a`` at that corner.

    Input ordering is ``component * n_nodes + node``; output rows are
    ``(a * n + b) * n_cells + cell``.
    """
    n, nc, nn = grid.dim, grid.n_cells, grid.n_nodes
    node_index = np.arange(nn).reshape(grid.node_shape)
    cell_multi = np.indices(grid.shape).reshape(n, -1)
    mats = []
    for sigma in corners(n):
        rows, cols, data = [], [], []
        for b in range(n):
            base = cell_multi + np.asarray(sigma)[:, None]
            hi_multi = base.copy()
            hi_multi[b] = cell_multi[b] + 1
            lo_multi = base.copy()
            lo_multi[b] = cell_multi[b]
            hi = node_index[tuple(hi_multi)]
            lo = node_index[tuple(lo_multi)]
            h = grid.spacing[b]
            for a in range(n):
                r = (a * n + b) * nc + np.arange(nc)
                rows += [r, r]
                cols += [a * nn + hi, a * nn + lo]
                data += [np.full(nc, 1.0 / h), np.full(nc, -1.0 / h)]
        mats.append(
            sp.csr_matrix(
                (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                shape=(n * n * nc, n * nn),
            )
        )
    return tuple(mats)


def corner_weight(grid):
    return grid.cell_volume / grid.n_corners


def cell_gradients_at_corners(f, grid):
    """Corner gradients of a cell field, shape ``(2**n, n, *cells)``."""
    f = _check_cell_field(f, grid).ravel()
    return np.stack(
        [(G @ f).reshape((grid.dim,) + grid.shape) for G in cell_corner_gradients(grid)]
    )


def displacement_gradients(u, grid):
    """Corner displacement gradients, shape ``(2**n, n, n, *cells)``."""
    u = _check_node_field(u, grid).ravel()
    n = grid.dim
    return np.stack(
        [(G @ u).reshape((n, n) + grid.shape) for G in node_corner_gradients(grid)]
    )


# --------------------------------------------------------------------------
# pointwise differential operators


def neg_laplacian(f, grid):
    f = _check_cell_field(f, grid)
    return (neg_laplacian_matrix(grid) @ f.ravel()).reshape(grid.shape)


def face_gradient_inner(f, g, grid):
    """Discrete Dirichlet form ``∫ ∇f·∇g`` on interior faces."""
    D = face_difference(grid)
    f = _check_cell_field(f, grid).ravel()
    g = _check_cell_field(g, grid).ravel()
    return grid.cell_volume * float((D @ f) @ (D @ g))


def grad_neumann(f, grid):
    """Centred-difference gradient with mirror ghost cells.

    Returns an array of shape ``(n, *cells)``.
    """
    f = _check_cell_field(f, grid)
    out = np.empty((grid.dim,) + grid.shape)
    for b, h in enumerate(grid.spacing):
        padded = np.concatenate(
            [np.take(f, [0], axis=b), f, np.take(f, [-1], axis=b)], axis=b
        )
        n_b = grid.cells[b]
        out[b] = (
            np.take(padded, np.arange(2, n_b + 2), axis=b)
            - np.take(padded, np.arange(0, n_b), axis=b)
        ) / (2 * h)
    return out


def sym_grad(u, grid):
    """Linearised strain ``e(u)`` at cell centres in packed storage.

    The cell value is the average of the corner gradients, i.e. the central
    difference of the vertex data across the cell; it is exact for affine
    fields and second order for smooth ones.
    """
    F = displacement_gradients(u, grid).mean(axis=0)
    return pack_sym(0.5 * (F + np.swapaxes(F, 0, 1)))


def pack_sym(e):
    """Pack a full ``(n, n, ...)`` symmetric tensor into ``n(n+1)/2`` rows.

    Order: diagonal entries first, then ``(i, j)`` with ``i < j``.
    """
    n = e.shape[0]
    rows = [e[i, i] for i in range(n)]
    rows += [e[i, j] for i in range(n) for j in range(i + 1, n)]
    return np.stack(rows)


def unpack_sym(packed, dim):
    out = np.empty((dim, dim) + packed.shape[1:])
    for i in range(dim):
        out[i, i] = packed[i]
    k = dim
    for i in range(dim):
        for j in range(i + 1, dim):
            out[i, j] = out[j, i] = packed[k]
            k += 1
    return out


# --------------------------------------------------------------------------
# quadrature and the H^-1 machinery


def integrate(f, grid):
    return grid.cell_volume * float(np.sum(_check_cell_field(f, grid)))


def mean(f, grid):
    return float(np.mean(_check_cell_field(f, grid)))


def project_zero_mean(f, grid):
    f = _check_cell_field(f, grid)
    return f - f.mean()


def l2_inner(f, g, grid):
    return grid.cell_volume * float(np.sum(np.asarray(f) * np.asarray(g)))


def neumann_eigenvalues(grid):
    """Eigenvalues of ``-Δ_h`` for the cosine modes, shape ``cells``."""
    lam = np.zeros(grid.shape)
    for b, (n_b, h) in enumerate(zip(grid.cells, grid.spacing)):
        k = np.arange(n_b)
        shape = [1] * grid.dim
        shape[b] = n_b
        lam = lam + ((2.0 / h**2) * (1.0 - np.cos(np.pi * k / n_b))).reshape(shape)
    return lam


def _check_zero_mean(w, tol=1e-12):
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    m = float(np.mean(w))
    if abs(m) > tol * scale:
        raise NonZeroMean(f"field mean {m:.3e} exceeds {tol:g} * max|w| = {tol * scale:.3e}")


def _inv_neg_laplacian_dct(w, grid):
    lam = neumann_eigenvalues(grid)
    coef = scipy.fft.dctn(w, type=2, norm="ortho")
    lam.flat[0] = np.inf
    v = scipy.fft.idctn(coef / lam, type=2, norm="ortho")
    return v - v.mean()


def _inv_neg_laplacian_cg(w, grid, tol, maxiter):
    A = neg_laplacian_matrix(grid)
    b = w.ravel() - w.mean()
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b)
    if bnorm == 0.0:
        return x.reshape(grid.shape)
    r = b.copy()
    d = r.copy()
    rr = r @ r
    for _ in range(maxiter):
        Ad = A @ d
        step = rr / (d @ Ad)
        x += step * d
        r -= step * Ad
        r -= r.mean()
        rr_new = r @ r
        if np.sqrt(rr_new) <= tol * bnorm:
            x -= x.mean()
            return x.reshape(grid.shape)
        d = r + (rr_new / rr) * d
        d -= d.mean()
        rr = rr_new
    raise NoConvergence(f"CG did not reach tol {tol:g} within {maxiter} iterations")


def inv_neg_laplacian(w, grid, method="dct", tol=1e-10, maxiter=None, check=True):
    """Solve ``-Δ_h v = w`` for zero-mean ``v`` (Neumann conditions).

    ``method="dct"`` diagonalises the stencil with the type-II cosine
    transform (exact up to round-off); ``method="cg"`` runs matrix-free
    conjugate gradients with mean projection at every iteration, capped at
    ``10 * n_cells`` iterations by default.
    """
    w = _check_cell_field(w, grid)
    if check:
        _check_zero_mean(w)
    if method == "dct":
        return _inv_neg_laplacian_dct(w - w.mean(), grid)
    if method == "cg":
        if maxiter is None:
            maxiter = 10 * grid.n_cells
        return _inv_neg_laplacian_cg(w, grid, tol, maxiter)
    raise ValueError(f"unknown method {method!r}")


def h_minus1_inner(w1, w2, grid, method="dct"):
    """``⟨w1, w2⟩ = ∫ ∇(-Δ)^{-1} w1 · ∇(-Δ)^{-1} w2`` for zero-mean fields."""
    v1 = inv_neg_laplacian(w1, grid, method=method)
    v2 = v1 if w2 is w1 else inv_neg_laplacian(w2, grid, method=method)
    return face_gradient_inner(v1, v2, grid)


def h1_dual_norm(w, grid):
    """``sup ⟨w, ζ⟩ / ‖ζ‖_{H¹}`` computed spectrally."""
    w = _check_cell_field(w, grid)
    coef = scipy.fft.dctn(w, type=2, norm="ortho")
    return float(np.sqrt(grid.cell_volume * np.sum(coef**2 / (1.0 + neumann_eigenvalues(grid)))))


# --------------------------------------------------------------------------
# snapshot files


def write_snapshot(path, values, grid, name, location="cell"):
    """Write a field as a plain-text snapshot.

    Scalar cell fields have shape ``cells``; vertex vector fields have shape
    ``(n, *node_shape)``; packed tensors ``(k, *cells)``.
    """
    values = np.asarray(values, dtype=float)
    spatial = grid.shape if location == "cell" else grid.node_shape
    if values.shape == spatial:
        rows = values.reshape(1, -1)
    else:
        if values.shape[1:] != spatial:
            raise ShapeMismatch(f"{values.shape} does not match {location} layout {spatial}")
        rows = values.reshape(values.shape[0], -1)
    lines = [
        f"dim {grid.dim}",
        "cells " + " ".join(str(c) for c in grid.cells),
        "spacing " + " ".join(f"{h:.17g}" for h in grid.spacing),
        f"components {rows.shape[0]}",
        f"name {name}",
        f"location {location}",
        "data",
    ]
    body = "\n".join(" ".join(f"{v:.17g}" for v in col) for col in rows.T)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n" + body + "\n")


def read_snapshot(path):
    """Return ``(values, header)``; scalar fields come back without a
    component axis."""
    header = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line == "data":
                break
            key, _, value = line.partition(" ")
            header[key] = value
        data = np.loadtxt(fh, ndmin=2)
    cells = tuple(int(c) for c in header["cells"].split())
    location = header.get("location", "cell")
    spatial = cells if location == "cell" else tuple(c + 1 for c in cells)
    k = int(header["components"])
    values = data.T.reshape((k,) + spatial)
    if k == 1 and location == "cell":
        values = values[0]
    header["cells"] = cells
    header["spacing"] = tuple(float(h) for h in header["spacing"].split())
    header["dim"] = int(header["dim"])
    header["components"] = k
    return values, header
