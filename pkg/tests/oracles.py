"""Independent reference implementations used by the tests.

Nothing here imports the package: operators are assembled from Kronecker
products, closed forms are evaluated with ``math``, and time evolution is
solved with ``scipy.integrate.solve_ivp`` or ``scipy.linalg.expm``.
"""

from __future__ import annotations

import math
from functools import reduce

import mpmath
import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)

# single spin in the basis (down, up)
_SZ_HALF = np.diag([-0.5, 0.5]).astype(complex)
_SPLUS = np.array([[0, 0], [1, 0]], dtype=complex)


def _kron(ops):
    return reduce(np.kron, ops)


def spin_ops(n_spins, boson_cutoff=0):
    """s_z, s_plus lists and a, a_dag for index = n * 2**N + bits (bit j = spin j up)."""
    levels = boson_cutoff + 1 if boson_cutoff > 0 else 1
    eye_b = np.eye(levels)
    eye2 = np.eye(2)

    def embed(op, j):
        # kron order: boson, spin N-1, ..., spin 0
        factors = [eye_b] + [op if k == j else eye2 for k in reversed(range(n_spins))]
        return _kron(factors)

    sz = [embed(_SZ_HALF, j) for j in range(n_spins)]
    sp = [embed(_SPLUS, j) for j in range(n_spins)]
    a = None
    if boson_cutoff > 0:
        am = np.diag(np.sqrt(np.arange(1, levels)), 1)
        a = _kron([am] + [eye2] * n_spins)
    return sz, sp, a


def spin_dot(sz, sp, j, k):
    sm_j, sm_k = sp[j].conj().T, sp[k].conj().T
    sx_j, sx_k = (sp[j] + sm_j) / 2, (sp[k] + sm_k) / 2
    sy_j, sy_k = (sp[j] - sm_j) / 2j, (sp[k] - sm_k) / 2j
    return sx_j @ sx_k + sy_j @ sy_k + sz[j] @ sz[k]


def tavis_cummings(n_spins, eps, g, omega, cutoff):
    """[H_TC, H_1, ..., H_N] on the full truncated space, plus N_exc."""
    sz, sp, a = spin_ops(n_spins, cutoff)
    ad = a.conj().T
    num = ad @ a
    hop = [ad @ sp[j].conj().T + a @ sp[j] for j in range(n_spins)]
    h_tc = -omega * num + sum(eps[j] * sz[j] for j in range(n_spins)) + g * sum(hop)
    gens = [h_tc]
    for j in range(n_spins):
        h = (eps[j] + omega) * sz[j] + g * hop[j]
        for k in range(n_spins):
            if k != j:
                h = h + 2 * g * g / (eps[j] - eps[k]) * spin_dot(sz, sp, j, k)
        gens.append(h)
    n_exc = num + sum(sz)
    return gens, n_exc


def gaudin(n_spins, eps, B):
    sz, sp, _ = spin_ops(n_spins)
    s_plus = sum(sp)
    h_bcs = sum(2 * eps[j] * sz[j] for j in range(n_spins)) - (0.5 / B) * s_plus @ s_plus.conj().T
    gens = [h_bcs]
    for j in range(n_spins):
        h = 2 * B * sz[j]
        for k in range(n_spins):
            if k != j:
                h = h - spin_dot(sz, sp, j, k) / (eps[j] - eps[k])
        gens.append(h)
    return gens, sum(sz)


def four_state_h0(b1, b2, g, gm, t, e):
    h = np.zeros((4, 4))
    h[0, 0], h[1, 1], h[2, 2], h[3, 3] = b1 * t + e, -b1 * t + e, b2 * t, -b2 * t
    h[0, 2] = h[2, 0] = g
    h[1, 3] = h[3, 1] = g
    h[0, 3] = h[3, 0] = -gm
    h[1, 2] = h[2, 1] = gm
    return h


def four_state_h1(b1, b2, g, gm, t, e):
    d = b1 * b1 - b2 * b2
    h = np.zeros((4, 4))
    h[0, 0], h[1, 1] = t + b1 * e / d, t - b1 * e / d
    h[2, 2], h[3, 3] = -b2 * e / d, b2 * e / d
    h[0, 2] = h[2, 0] = g / (b1 - b2)
    h[1, 3] = h[3, 1] = -g / (b1 - b2)
    h[0, 3] = h[3, 0] = -gm / (b1 + b2)
    h[1, 2] = h[2, 1] = -gm / (b1 + b2)
    return h


def lz_survival(g, b):
    return math.exp(-2 * math.pi * g * g / abs(b))


def four_state_transition(b1, b2, g, gm, v):
    """Closed-form 4x4 transition matrix evaluated entry by entry."""
    p1 = math.exp(-2 * math.pi * g * g / (b1 - b2))
    p2 = math.exp(-2 * math.pi * gm * gm / (b1 + b2))
    q1, q2 = 1 - p1, 1 - p2
    if v < b1 - b2:
        row = [p1 * p2, 0.0, p2 * q1, q2]
    elif v < b1 + b2:
        row = [p1 * p2, q1 * q2, p2 * q1, p1 * q2]
    else:
        row = [p1 * p2, 0.0, q1, p1 * q2]
    d, a, b, c = row
    return np.array([[d, a, b, c], [a, d, c, b], [b, c, d, a], [c, b, a, d]])


def char_poly_eigenvalues(h, dps=50):
    """Eigenvalues as roots of the characteristic polynomial in extended precision.

    Coefficients come from the Faddeev-LeVerrier recursion in mpmath, so
    repeated roots are resolved far below double-precision roundoff.
    """
    with mpmath.workdps(dps):
        a = mpmath.matrix(np.asarray(h, dtype=float).tolist())
        n = a.rows
        coeffs = [mpmath.mpf(1)]
        m = mpmath.zeros(n, n)
        for k in range(1, n + 1):
            m = a * m + coeffs[-1] * mpmath.eye(n)
            coeffs.append(-sum((a * m)[i, i] for i in range(n)) / k)
        roots = mpmath.polyroots(coeffs, maxsteps=200, extraprec=4 * dps)
        return np.sort([float(mpmath.re(r)) for r in roots])


def expm_propagator(h, duration):
    return expm(-1j * np.asarray(h) * duration)


def ode_propagate(h_of_x, vertices, psi0, rtol=1e-10, atol=1e-12):
    """Solve i d psi/ds = (sum_j v^j H_j(x(s))) psi over each straight leg."""
    psi = np.asarray(psi0, dtype=complex)
    verts = [np.asarray(v, float) for v in vertices]
    for a, b in zip(verts, verts[1:]):
        vel = b - a

        def rhs(s, y, a=a, vel=vel):
            return -1j * (h_of_x(a + s * vel, vel) @ y)

        sol = solve_ivp(rhs, (0.0, 1.0), psi, method="DOP853", rtol=rtol, atol=atol)
        psi = sol.y[:, -1]
    return psi
