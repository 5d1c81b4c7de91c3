"""Independent oracles used by the test suite.

Nothing here calls the code paths under test: eigenvalues come from
Householder + Sturm bisection, Gaussian moments from double factorials,
the bi-species coercivity integral from its separable closed form, and
collision quadratic forms from the analytic relations of the collision
geometry.
"""
from __future__ import annotations

import math

import numpy as np


# ---------------------------------------------------------------------------
# symmetric eigenvalues: Householder tridiagonalization + Sturm bisection
# ---------------------------------------------------------------------------

def householder_tridiagonal(a: np.ndarray):
    """Reduce a symmetric matrix to tridiagonal form; returns (diag, off)."""
    A = np.array(a, dtype=float)
    n = A.shape[0]
    for k in range(n - 2):
        x = A[k + 1:, k].copy()
        nx = np.linalg.norm(x)
        if nx == 0.0:
            continue
        v = x
        v[0] += math.copysign(nx, x[0])
        nv = np.linalg.norm(v)
        if nv == 0.0:
            continue
        v /= nv
        A[k + 1:, :] -= 2.0 * np.outer(v, v @ A[k + 1:, :])
        A[:, k + 1:] -= 2.0 * np.outer(A[:, k + 1:] @ v, v)
    return A.diagonal().copy(), np.diagonal(A, 1).copy()


def _sturm_counts(d: np.ndarray, e: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Number of eigenvalues < x for each shift x (LDL sign-count recurrence)."""
    n = d.shape[0]
    tiny = 1e-300
    counts = np.zeros(xs.shape[0], dtype=int)
    q = d[0] - xs
    counts += q < 0.0
    for i in range(1, n):
        denom = np.where(np.abs(q) > tiny, q, np.where(q >= 0, tiny, -tiny))
        q = d[i] - xs - e[i - 1] ** 2 / denom
        counts += q < 0.0
    return counts


def sturm_eigvalsh(a: np.ndarray, iters: int = 80) -> np.ndarray:
    """All eigenvalues of a symmetric matrix by bisection on Sturm counts."""
    d, e = householder_tridiagonal(a)
    n = d.shape[0]
    if n == 1:
        return d.copy()
    pad = np.concatenate([[0.0], np.abs(e), [0.0]])
    radius = pad[:-1] + pad[1:]
    lo_all = float(np.min(d - radius)) - 1e-12
    hi_all = float(np.max(d + radius)) + 1e-12
    lo = np.full(n, lo_all)
    hi = np.full(n, hi_all)
    ks = np.arange(1, n + 1)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        counts = _sturm_counts(d, e, mid)
        take_hi = counts >= ks
        hi = np.where(take_hi, mid, hi)
        lo = np.where(take_hi, lo, mid)
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Gaussian moments
# ---------------------------------------------------------------------------

def gaussian_moment_1d(k: int) -> float:
    """E[x^k] for x ~ N(0,1): 0 for odd k, (k-1)!! for even k."""
    if k % 2:
        return 0.0
    out = 1.0
    for j in range(k - 1, 0, -2):
        out *= j
    return out


# ---------------------------------------------------------------------------
# closed form for the bi-species coercivity integral
# ---------------------------------------------------------------------------

def min_sq_gaussian() -> float:
    """E[min(1/6, s^2)] for s ~ N(0,1), in closed form."""
    a = 1.0 / math.sqrt(6.0)
    phi_a = math.exp(-0.5 * a * a) / math.sqrt(2.0 * math.pi)
    Phi_a = 0.5 * (1.0 + math.erf(a / math.sqrt(2.0)))
    return 2.0 * (Phi_a - 0.5 - a * phi_a) + (1.0 - Phi_a) / 3.0


def closed_form_Db(rho_i: float, rho_j: float, C: float, gamma: float,
                   b_coeffs=(1.0,)) -> float:
    """Exact value of the D^b integral for Phi = C r^gamma and polynomial b.

    Writing w = v - v*, c = (v + v*)/2 (independent Gaussians) the integrand
    reduces exactly to

        Phi(|w|) b(cos) |w|^2 (1 - cos) min{1/6, 2 z^2},  z ~ N(0, 1/2),

    with cos = sigma.w/|w| uniform on [-1, 1], so the integral separates:

        D^b = rho_i rho_j 4 pi E[C |w|^{gamma+2}]
              * 1/2 int_{-1}^{1} b(t)(1 - t) dt * E[min(1/6, s^2)].
    """
    radial = C * 2.0 ** (gamma + 2.0) \
        * math.gamma((gamma + 5.0) / 2.0) / math.gamma(1.5)
    angular = 0.0
    for k, ck in enumerate(b_coeffs):
        int_tk = 0.0 if k % 2 else 2.0 / (k + 1)
        int_tk1 = 0.0 if (k + 1) % 2 else 2.0 / (k + 2)
        angular += ck * (int_tk - int_tk1)
    angular *= 0.5
    return rho_i * rho_j * 4.0 * math.pi * radial * angular * min_sq_gaussian()


# ---------------------------------------------------------------------------
# brute-force collision quadratic form for kernel-type states
# ---------------------------------------------------------------------------

def collision_form_moment_state(mixture, family, alpha, u, e,
                                n_samples: int = 400_000, seed: int = 1234):
    """Monte-Carlo value of -(f, L f) for f_i = M_i^{1/2}(alpha_i + u_i.v
    + e_i |v|^2), via the analytic identity

        A_ij[h] = (u_i - u_j).(v' - v) + (e_i - e_j)(|v'|^2 - |v|^2)

    so no basis or assembled operator is involved.  Returns (value, stderr).
    """
    rng = np.random.default_rng(seed)
    n = mixture.n
    alpha = np.asarray(alpha, float)
    u = np.asarray(u, float)
    e = np.asarray(e, float)
    v = rng.standard_normal((n_samples, 3))
    vs = rng.standard_normal((n_samples, 3))
    raw = rng.standard_normal((n_samples, 3))
    sigma = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    diff = v - vs
    r = np.linalg.norm(diff, axis=1)
    rs = np.where(r > 0, r, 1.0)
    ct = np.einsum("ij,ij->i", sigma, diff) / rs
    center = 0.5 * (v + vs)
    vp = center + 0.5 * r[:, None] * sigma
    dv = vp - v
    de = np.einsum("ij,ij->i", vp, vp) - np.einsum("ij,ij->i", v, v)
    total, var = 0.0, 0.0
    for i in range(n):
        for j in range(n):
            B = family.phi[i][j](rs) * family.b[i][j](ct)
            A = (u[i] - u[j]) @ dv.T + (e[i] - e[j]) * de
            g = B * A * A
            scale = 0.25 * mixture.rho_inf[i] * mixture.rho_inf[j] * 4.0 * np.pi
            total += scale * g.mean()
            var += (scale * g.std() / math.sqrt(n_samples)) ** 2
    return total, math.sqrt(var)


# ---------------------------------------------------------------------------
# explicit Gram matrices straight from quadrature
# ---------------------------------------------------------------------------

def explicit_gram(vectors: np.ndarray, basis, q: int = 14) -> np.ndarray:
    """Gram matrix of coefficient vectors by evaluating the represented
    functions on an independent (finer) Hermite grid and integrating."""
    from kinetic_gap.quadrature import hermite_rule_3d
    rule = hermite_rule_3d(q)
    H = basis.eval_polynomials(rule.nodes)        # (m, nb)
    nsp = basis.n_species
    nb = basis.per_species_size
    k = vectors.shape[1]
    gram = np.zeros((k, k))
    for i in range(nsp):
        vals = H @ vectors[i * nb:(i + 1) * nb, :]    # (m, k)
        gram += vals.T @ (vals * rule.weights[:, None])
    return gram
