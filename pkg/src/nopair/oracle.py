"""Numerical-quadrature reference values for ECG integrals (validation only).

Shares no formulas with :mod:`nopair.integrals`.  Momentum dressings are
applied pointwise as explicit Gaussian derivatives, singular kernels are
written as one-dimensional Gaussian transforms

    1/|u|        = 2/sqrt(pi) int_0^inf exp(-t^2 u^2) dt
    u_a u_b/|u|^3 = 4/sqrt(pi) int_0^inf t^2 u_a u_b exp(-t^2 u^2) dt
    |u|          = u^2 * (1/|u|)

so that for fixed t the remaining 3n-dimensional integrand is a polynomial
times a Gaussian, integrated by a whitened Gauss-Hermite product rule.  The
delta kernel is replaced by normalised Gaussians of shrinking width and
extrapolated to zero width.
"""
from __future__ import annotations

import functools
import itertools

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy import integrate

from .integrals import DerivativeDressing, Kernel, KernelKind, NO_DRESSING
from .system import ECGPrimitive


class OracleError(RuntimeError):
    """The quadrature failed to reach its advertised accuracy."""


def _dressed_values(g: ECGPrimitive, r: np.ndarray, momenta) -> np.ndarray:
    """(prod_k d/dr_{momenta_k}) g(r) / g(r) at points r of shape (M, n, 3)."""
    w = -2.0 * np.einsum("ij,mjc->mic", g.A, r - g.s[None])
    if len(momenta) == 0:
        return np.ones(len(r))
    if len(momenta) == 1:
        (p, c), = momenta
        return w[:, p, c]
    if len(momenta) == 2:
        (p, c), (q, d) = momenta
        return w[:, p, c] * w[:, q, d] - (2.0 * g.A[p, q] if c == d else 0.0)
    raise OracleError("oracle supports at most two momentum factors per side")


@functools.lru_cache(maxsize=16)
def _hermite_grid(n_pts: int, n: int):
    x, wx = hermgauss(n_pts)
    grids = np.array(list(itertools.product(range(n_pts), repeat=3 * n)))
    X = x[grids].reshape(-1, 3, n).transpose(0, 2, 1)         # (M, n, 3), per Cartesian
    W = np.prod(wx[grids], axis=1)
    return X, W


def _gaussian_product_rule(gi, gj, extra_C, extra_b, extra_const, n_pts):
    """Nodes r (M, n, 3), weights (M,) for exp(-(quadratic)) of the pair.

    Total exponent per Cartesian c: -(r_c^T C r_c - 2 r_c^T b_c + k_c).
    """
    n = gi.n
    C = gi.A + gj.A + extra_C
    b = gi.A @ gi.s + gj.A @ gj.s + extra_b                  # (n, 3)
    k = (np.einsum("ic,ij,jc->", gi.s, gi.A, gi.s) + np.einsum("ic,ij,jc->", gj.s, gj.A, gj.s)
         + extra_const)
    L = np.linalg.cholesky(C)
    Linv_T = np.linalg.inv(L).T
    m = np.linalg.solve(C, b)                                 # centre (n, 3)
    const = k - np.einsum("ic,ic->", b, m)
    X, W = _hermite_grid(n_pts, n)
    r = m[None] + np.einsum("ij,mjc->mic", Linv_T, X)
    scale = np.exp(-const) / np.linalg.det(L) ** 3
    return r, W * scale


def _integrand_poly(gi, gj, dressing, r):
    bra = _dressed_values(gi, r, dressing.bra)
    ket = _dressed_values(gj, r, dressing.ket)
    # p = -i d/dr; the bra factor is complex conjugated
    pref = (1j) ** len(dressing.bra) * (-1j) ** len(dressing.ket)
    return pref * bra * ket


def _fixed_t(gi, gj, dressing, kernel: Kernel, t: float, n_pts: int, mode: str):
    n = gi.n
    J = np.asarray(kernel.weights, float) if kernel.weights else np.zeros(n)
    R = np.asarray(kernel.center, float)
    t2 = t * t
    extra_C = t2 * np.outer(J, J)
    extra_b = t2 * np.outer(J, R)
    extra_const = t2 * R @ R
    r, W = _gaussian_product_rule(gi, gj, extra_C, extra_b, extra_const, n_pts)
    vals = _integrand_poly(gi, gj, dressing, r)
    u = np.einsum("i,mic->mc", J, r) - R[None]
    if mode == "inverse":
        f = np.ones(len(r))
    elif mode == "u2":
        f = np.sum(u * u, axis=1)
    elif mode == "tensor":
        a, b = dressing.kernel_derivs
        f = t2 * u[:, a] * u[:, b]
    else:
        raise ValueError(mode)
    return np.sum(W * vals * f)


def _t_integral(func, rel):
    def pair(t):
        v = func(t)
        return np.array([v.real, v.imag])

    val, err = integrate.quad_vec(pair, 0, np.inf, epsabs=0, epsrel=rel, limit=400)
    return val[0] + 1j * val[1], err


def _evaluate(gi, gj, kernel, dressing, n_pts, rel):
    kind = kernel.kind
    kd = dressing.kernel_derivs
    core = DerivativeDressing(dressing.bra, dressing.ket)
    if kind is KernelKind.UNITY:
        if kd:
            raise OracleError("kernel derivatives of the unity kernel vanish")
        r, W = _gaussian_product_rule(gi, gj, 0.0, 0.0, 0.0, n_pts)
        return np.sum(W * _integrand_poly(gi, gj, core, r)), 0.0
    if kind in (KernelKind.NUCLEAR_ATTRACTION, KernelKind.INTER_ELECTRON_COULOMB):
        if kd:
            raise OracleError("oracle does not differentiate the inverse kernel")
        val, err = _t_integral(lambda t: _fixed_t(gi, gj, core, kernel, t, n_pts, "inverse"), rel)
        return 2.0 / np.sqrt(np.pi) * val, err
    if kind is KernelKind.INTER_ELECTRON_LINEAR:
        if not kd:
            val, err = _t_integral(lambda t: _fixed_t(gi, gj, core, kernel, t, n_pts, "u2"), rel)
            return 2.0 / np.sqrt(np.pi) * val, err
        if len(kd) != 2:
            raise OracleError("linear kernel supported with zero or two derivatives")
        # d_a d_b |u| = delta_ab/|u| - u_a u_b/|u|^3
        val_t, err_t = _t_integral(
            lambda t: _fixed_t(gi, gj, dressing, kernel, t, n_pts, "tensor"), rel)
        val = -4.0 / np.sqrt(np.pi) * val_t
        err = 4.0 * err_t
        if kd[0] == kd[1]:
            v0, e0 = _t_integral(lambda t: _fixed_t(gi, gj, core, kernel, t, n_pts, "inverse"),
                                 rel)
            val += 2.0 / np.sqrt(np.pi) * v0
            err += e0
        return val, err
    if kind is KernelKind.CONTACT:
        return _contact(gi, gj, kernel, core, n_pts)
    raise OracleError(f"unsupported kernel {kernel}")


def _contact(gi, gj, kernel, core, n_pts):
    # delta_w(u) = (pi w^2)^{-3/2} exp(-u^2/w^2); I(w^2) is smooth in w^2
    J = np.asarray(kernel.weights, float)
    R = np.asarray(kernel.center, float)
    scale = 1.0 / np.max(np.linalg.eigvalsh(gi.A + gj.A))
    hs = scale * 1e-2 * 0.5 ** np.arange(6)
    vals = []
    for h in hs:
        inv = 1.0 / h
        r, W = _gaussian_product_rule(gi, gj, inv * np.outer(J, J), inv * np.outer(J, R),
                                      inv * R @ R, n_pts)
        vals.append(np.sum(W * _integrand_poly(gi, gj, core, r)) * (np.pi * h) ** -1.5)
    vals = np.array(vals)
    # Neville extrapolation to h = 0
    table = list(vals)
    for level in range(1, len(hs)):
        table = [(hs[i] * table[i + 1] - hs[i + level] * table[i]) / (hs[i] - hs[i + level])
                 for i in range(len(table) - 1)]
    est = table[0]
    err = abs(est - vals[-1]) * 1e-3
    return est, err


def quadrature_oracle(gi: ECGPrimitive, gj: ECGPrimitive, kernel: Kernel,
                      dressing: DerivativeDressing = NO_DRESSING, rel: float = 1e-12,
                      max_points: int = 9) -> complex:
    """Adaptive numerical value of <p^bra g_i| d^kd K |p^ket g_j> at theta = 0.

    For fixed t the integrand is a polynomial times a Gaussian, so a
    Gauss-Hermite rule of sufficient order is exact; the value is accepted once
    two successive orders agree to ``1e-10 |value| + 1e-14``, otherwise
    :class:`OracleError` is raised.
    """
    prev = None
    degree = len(dressing.bra) + len(dressing.ket) + 2
    start = degree // 2 + 1
    for n_pts in range(start, max_points + 1):
        val, err = _evaluate(gi, gj, kernel, dressing, n_pts, rel)
        if prev is not None and abs(val - prev) <= 1e-10 * abs(val) + 1e-14:
            return complex(val)
        prev = val
    raise OracleError(f"quadrature did not converge (last {prev}, {val})")
