"""Independent reference implementations used only by the tests."""

import cmath
import math

import numpy as np


def characteristic_matrix(eps_layers, thicknesses, angle, frequency, pol):
    """(r, t) of a layered slab in air by the 2x2 characteristic-matrix method.

    Written from the textbook admittance form, without any of the package's
    code: each layer contributes [[cos d, -i sin d / Y], [-i Y sin d, cos d]]
    with phase d = k0 * d_j * sqrt(eps - sin^2) and tilted admittance
    Y = sqrt(eps - sin^2) (TE) or eps / sqrt(eps - sin^2) (TM).
    Returns power coefficients, which are convention free.
    """
    c0 = 299792458.0
    k0 = 2 * math.pi * frequency / c0
    s2 = math.sin(angle) ** 2

    def admittance(eps):
        kz = cmath.sqrt(eps - s2)
        if kz.imag < 0:
            kz = -kz
        return (kz if pol == "TE" else eps / kz), kz

    y0, _ = admittance(1.0 + 0j)
    m = np.eye(2, dtype=complex)
    for eps, d in zip(eps_layers, thicknesses):
        y, kz = admittance(complex(eps))
        delta = k0 * d * kz
        layer = np.array([[cmath.cos(delta), -1j * cmath.sin(delta) / y], [-1j * y * cmath.sin(delta), cmath.cos(delta)]])
        m = m @ layer
    b, c = m @ np.array([1.0, y0])
    r = (y0 * b - c) / (y0 * b + c)
    t = 2 * y0 / (y0 * b + c)
    return abs(r) ** 2, abs(t) ** 2


def fresnel_interface(eps, angle, pol):
    """Single air/medium interface amplitude reflection (E-field TE, H-field TM)."""
    s2 = math.sin(angle) ** 2
    kz = cmath.sqrt(eps - s2)
    if kz.imag < 0:
        kz = -kz
    c = math.cos(angle)
    if pol == "TE":
        return (c - kz) / (c + kz)
    return (eps * c - kz) / (eps * c + kz)
