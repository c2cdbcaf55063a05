"""Complex-number primitives for the unit disk.

Everything here works on Python complex scalars or numpy complex arrays;
the metric-space and map layers convert 2-d real coordinates at the edges.
"""

import cmath

import numpy as np

#: Points with ``|z| >= 1 - BOUNDARY_GUARD`` are treated as numerically on the circle.
BOUNDARY_GUARD = 1e-14


def omega(z, w):
    """Poincaré distance between disk points ``z`` and ``w`` (broadcasts).

    Uses ``omega = log(1 + r) - log(1 - r^2) / 2`` with
    ``r = |z - w| / |1 - conj(z) w|`` and evaluates ``1 - r^2`` through the
    factored identity ``(1 - |z|^2)(1 - |w|^2) / |1 - conj(z) w|^2`` so that
    points close to the boundary do not lose all their digits.
    """
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    den = np.abs(1.0 - np.conj(z) * w)
    r = np.abs(z - w) / den
    az = np.abs(z)
    aw = np.abs(w)
    # grouped so that swapping z and w gives a bit-identical result
    one_minus_r2 = ((1.0 - az) * (1.0 + az)) * ((1.0 - aw) * (1.0 + aw)) / (den * den)
    out = np.log1p(r) - 0.5 * np.log(one_minus_r2)
    # exact zero on coincident points; the log difference can leave 1e-17 dust
    out = np.where(r == 0.0, 0.0, out)
    if out.ndim == 0:
        return float(out)
    return out


def pseudo_hyperbolic(z, w):
    """``|z - w| / |1 - conj(z) w|``, the tanh of the Poincaré distance."""
    return abs(z - w) / abs(1.0 - z.conjugate() * w)


def automorphism(a, theta=0.0):
    """Return ``z -> e^{i theta} (z - a) / (1 - conj(a) z)``; it sends ``a`` to 0."""
    a = complex(a)
    ac = a.conjugate()
    rot = cmath.exp(1j * theta)

    def phi(z):
        return rot * (z - a) / (1.0 - ac * z)

    return phi


def inverse_automorphism(a, theta=0.0):
    """Inverse of :func:`automorphism` with the same parameters."""
    a = complex(a)
    ac = a.conjugate()
    unrot = cmath.exp(-1j * theta)

    def psi(u):
        u = unrot * u
        return (u + a) / (1.0 + ac * u)

    return psi


def blaschke(zeros, theta=0.0):
    """Finite Blaschke product ``e^{i theta} prod (z - a_j) / (1 - conj(a_j) z)``."""
    zs = [complex(a) for a in zeros]
    rot = cmath.exp(1j * theta)

    def b(z):
        out = rot
        for a in zs:
            out = out * (z - a) / (1.0 - a.conjugate() * z)
        return out

    return b


def mobius_matrix_apply(m, z):
    (a, b), (c, d) = m
    return (a * z + b) / (c * z + d)


def mobius_matmul(m1, m2):
    (a, b), (c, d) = m1
    (e, f), (g, h) = m2
    return ((a * e + b * g, a * f + b * h), (c * e + d * g, c * f + d * h))


def parabolic_matrix(t):
    """Möbius matrix of the parabolic disk automorphism fixing the boundary point 1.

    It is the Cayley conjugate of the real translation ``w -> w + t`` of the
    upper half-plane, where ``w = i (1 + z) / (1 - z)``.
    """
    cayley = ((1j, 1j), (-1.0, 1.0))
    cayley_inv = ((1.0, -1j), (1.0, 1j))
    shift = ((1.0, float(t)), (0.0, 1.0))
    return mobius_matmul(cayley_inv, mobius_matmul(shift, cayley))
