"""Energy densities, the degradation function and growth-condition checks.

Tensors are passed as full ``(n, n, ...)`` arrays; trailing axes broadcast
against ``c`` and ``z``, so every density can be evaluated at one point or on
a whole grid at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy.stats import qmc

from .errors import ValidationError, ZOutOfRange

PHI_KINDS = ("linear", "quadratic")


@dataclass(frozen=True)
class ModelParams:
    gamma: float = 1.0
    delta: float = 1.0
    p: float = 4.0
    alpha: float = 0.1
    beta: float = 0.1
    eta_tilde: float = 0.01
    epsilon: float = 1.0
    lame_mu: float = 1.0
    lame_lambda: float = 1.0
    eigenstrain_slope: float = 0.1
    phi_kind: str = "quadratic"
    sobolev_2star: float = 6.0

    def with_(self, **changes):
        return replace(self, **changes)

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def validate_params(params, dim):
    """Raise :class:`ValidationError` naming the first violated assumption."""
    if params.phi_kind not in PHI_KINDS:
        raise ValidationError(f"phi_kind must be one of {PHI_KINDS}")
    checks = [
        (params.p > dim, f"p > n violated: p = {params.p}, n = {dim}"),
        (params.beta > 0, "beta > 0 violated (rate-dependent dissipation required)"),
        (params.eta_tilde > 0, "eta_tilde > 0 violated (residual stiffness required)"),
        (params.alpha > 0, "alpha > 0 violated"),
        (params.gamma > 0, "gamma > 0 violated"),
        (params.delta > 0, "delta > 0 violated"),
        (params.epsilon >= 0, "epsilon >= 0 violated"),
        (params.lame_mu > 0, "lame_mu > 0 violated (stiffness must be positive definite)"),
        (params.lame_lambda > 0, "lame_lambda > 0 violated"),
    ]
    for ok, message in checks:
        if not ok:
            raise ValidationError(message)
    return params


# --------------------------------------------------------------------------
# chemical energy


def w_ch(c):
    return (1.0 - c**2) ** 2


def dc_w_ch(c):
    return -4.0 * c * (1.0 - c**2)


def d2c_w_ch(c):
    return 12.0 * c**2 - 4.0


# --------------------------------------------------------------------------
# degradation


def phi(z, kind="quadratic"):
    if kind == "linear":
        return np.asarray(z, dtype=float)
    if kind == "quadratic":
        return np.asarray(z, dtype=float) ** 2
    raise ValueError(f"unknown phi kind {kind!r}")


def dphi(z, kind="quadratic"):
    if kind == "linear":
        return np.ones_like(np.asarray(z, dtype=float))
    if kind == "quadratic":
        return 2.0 * np.asarray(z, dtype=float)
    raise ValueError(f"unknown phi kind {kind!r}")


def d2phi(z, kind="quadratic"):
    if kind == "linear":
        return np.zeros_like(np.asarray(z, dtype=float))
    if kind == "quadratic":
        return np.full_like(np.asarray(z, dtype=float), 2.0)
    raise ValueError(f"unknown phi kind {kind!r}")


def _check_z(z, slack=1e-12):
    z = np.asarray(z, dtype=float)
    if np.any(z < -slack) or np.any(z > 1.0 + slack):
        raise ZOutOfRange(f"damage outside [0, 1]: min {z.min():.3e}, max {z.max():.3e}")
    return z


# --------------------------------------------------------------------------
# elasticity


def _trace(e):
    return np.trace(e, axis1=0, axis2=1)


def _identity_like(e):
    n = e.shape[0]
    eye = np.eye(n).reshape((n, n) + (1,) * (e.ndim - 2))
    return np.broadcast_to(eye, e.shape)


def stiffness(xi, params):
    """Isotropic stiffness ``ℂξ = 2μξ + λ tr(ξ) I``."""
    return 2.0 * params.lame_mu * xi + params.lame_lambda * _trace(xi) * _identity_like(xi)


def elastic_strain(e, c, params):
    """``e - e*(c)`` with ``e*(c) = slope * c * I``."""
    e = np.asarray(e, dtype=float)
    return e - params.eigenstrain_slope * np.asarray(c) * _identity_like(e)


def min_stiffness_eigenvalue(params, dim):
    return min(2.0 * params.lame_mu, 2.0 * params.lame_mu + dim * params.lame_lambda)


def w_hat_el(e, c, params):
    """Undamaged stored energy ``½ (e - e*(c)) : ℂ (e - e*(c))``."""
    s = elastic_strain(_sym(e), c, params)
    return 0.5 * np.sum(s * stiffness(s, params), axis=(0, 1))


def _sym(e):
    e = np.asarray(e, dtype=float)
    return 0.5 * (e + np.swapaxes(e, 0, 1))


def w_el(e, c, z, params):
    z = _check_z(z)
    return (phi(z, params.phi_kind) + params.eta_tilde) * w_hat_el(e, c, params)


def de_w_el(e, c, z, params):
    z = _check_z(z)
    return (phi(z, params.phi_kind) + params.eta_tilde) * stiffness(
        elastic_strain(_sym(e), c, params), params
    )


def dc_w_el(e, c, z, params):
    z = _check_z(z)
    sigma = stiffness(elastic_strain(_sym(e), c, params), params)
    return -(phi(z, params.phi_kind) + params.eta_tilde) * params.eigenstrain_slope * _trace(sigma)


def dz_w_el(e, c, z, params):
    z = _check_z(z)
    return dphi(z, params.phi_kind) * w_hat_el(e, c, params)


def d2c_w_el(z, params, dim):
    """``∂²_c W_el``; independent of ``e`` and ``c`` for the linear eigenstrain."""
    s = params.eigenstrain_slope
    return (phi(z, params.phi_kind) + params.eta_tilde) * s**2 * dim * (
        2.0 * params.lame_mu + dim * params.lame_lambda
    )


# --------------------------------------------------------------------------
# growth conditions


@dataclass
class GrowthCheck:
    name: str
    passed: bool
    margin: float
    constant: float


@dataclass
class GrowthReport:
    checks: dict = field(default_factory=dict)
    n_samples: int = 0

    @property
    def passed(self):
        return all(c.passed for c in self.checks.values())

    def __getitem__(self, name):
        return self.checks[name]


def latin_hypercube_samples(n_samples, dim, seed=0, e_scale=1.0, c_scale=1.5):
    """Latin-hypercube cloud over ``(e, c, z)``.

    Returns ``(e, c, z)`` with ``e`` of shape ``(n, n, n_samples)``
    (symmetric), ``c`` and ``z`` of shape ``(n_samples,)``.
    """
    k = dim * (dim + 1) // 2
    u = qmc.LatinHypercube(d=k + 2, seed=seed).random(n_samples)
    packed = e_scale * (2.0 * u[:, :k] - 1.0)
    e = np.empty((dim, dim, n_samples))
    for i in range(dim):
        e[i, i] = packed[:, i]
    col = dim
    for i in range(dim):
        for j in range(i + 1, dim):
            e[i, j] = e[j, i] = packed[:, col]
            col += 1
    c = c_scale * (2.0 * u[:, k] - 1.0)
    z = u[:, k + 1]
    return e, c, z


def _frob(e):
    return np.sqrt(np.sum(np.asarray(e) ** 2, axis=(0, 1)))


def _growth_constants(params, e, c, z, e2):
    """Sup-ratios for (A2)–(A6) over one cloud."""
    W = w_el(e, c, z, params)
    ne2 = _frob(e) ** 2
    out = {
        "A2": np.max(W / (ne2 + c**2 + 1.0)),
        "A3": np.max(
            _frob(de_w_el(e + e2, c, z, params)) / (W + _frob(e2) + 1.0)
        ),
        "A4": np.max(np.abs(dc_w_el(e, c, z, params)) / (_frob(e) + c**2 + 1.0)),
        "A5": np.max(np.abs(dz_w_el(e, c, z, params)) / (ne2 + c**2 + 1.0)),
        "A6": np.max(np.abs(dc_w_ch(c)) / (np.abs(c) ** (params.sobolev_2star / 2.0) + 1.0)),
    }
    return out


def validate_growth(params, samples, growth_factor=2.0, far_scale=10.0, seed=0):
    """Sampled check of the convexity and growth conditions (A1)–(A6).

    ``samples`` is an ``(e, c, z)`` cloud as from
    :func:`latin_hypercube_samples`. (A1) is checked with
    ``η = η̃ · λ_min(ℂ)`` on paired samples. For the existential constants
    in (A2)–(A6) the sup-ratio is estimated on the cloud scaled by
    ``far_scale`` and by ``far_scale**2``; the condition passes when the
    far estimate stays within ``growth_factor`` times the near one, i.e.
    the ratio has settled instead of growing with the scale. Margins are
    ``growth_factor * C_near - C_far``; the reported constant is the
    largest sup-ratio seen, including the unscaled cloud.
    """
    e, c, z = (np.asarray(a, dtype=float) for a in samples)
    if e.ndim == 2:
        e = e[..., None]
        c, z = np.atleast_1d(c), np.atleast_1d(z)
    if c.size == 0:
        raise ValueError("empty sample cloud")
    _check_z(z)
    dim = e.shape[0]
    rng = np.random.default_rng(seed)
    perm = rng.permutation(c.size)
    e2 = e[..., perm]
    report = GrowthReport(n_samples=int(c.size))

    eta = params.eta_tilde * min_stiffness_eigenvalue(params, dim)
    d = e - e2
    lhs = np.sum((de_w_el(e, c, z, params) - de_w_el(e2, c, z, params)) * d, axis=(0, 1))
    a1 = lhs - eta * _frob(d) ** 2
    margin = float(np.min(a1))
    report.checks["A1"] = GrowthCheck("A1", bool(margin >= -1e-9 and eta > 0), margin, eta)

    base = _growth_constants(params, e, c, z, e2)
    s1, s2 = far_scale, far_scale**2
    near = _growth_constants(params, s1 * e, s1 * c, z, s1 * e2)
    far = _growth_constants(params, s2 * e, s2 * c, z, s2 * e2)
    for name in ("A2", "A3", "A4", "A5", "A6"):
        m = float(growth_factor * near[name] - far[name])
        ok = np.isfinite(m) and m >= -1e-9
        if name == "A6" and dim == 1:
            # every power is admissible in one dimension
            ok, m = True, max(m, 0.0) if np.isfinite(m) else 0.0
        const = float(max(base[name], near[name], far[name]))
        report.checks[name] = GrowthCheck(name, bool(ok), m, const)
    return report
