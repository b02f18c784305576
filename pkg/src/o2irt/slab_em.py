"""Reflection and transmission of plane waves through multi-layer slabs.

The stack is a sequence of homogeneous layers between two air half-spaces.
Coefficients come from the usual Airy recursion, run from the last
interface back to the first. Waves vary as exp(j(k.r - wt)) inside the
solver, so with eps = eps' + j*eps'' (eps'' >= 0) a layer attenuates when
the normal wavenumber is chosen with non-negative imaginary part. The
phase factor exp(j*kz*d) then never exceeds one in magnitude, which keeps
the recursion stable for thick lossy layers and for nanometer metal films.

TE coefficients are for the electric field. TM coefficients are for the
magnetic field, so the TM reflection sign differs from the E-field
convention; power quantities are unaffected.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping

import numpy as np

from .constants import SPEED_OF_LIGHT
from .errors import DomainError, ValidationError
from .scene import DEFAULT_MATERIALS, Layer, LayerStack, MaterialTable, StackRole


class Polarization(str, enum.Enum):
    TE = "TE"
    TM = "TM"


BOTH = (Polarization.TE, Polarization.TM)


@dataclass(frozen=True)
class SlabCoefficients:
    """Complex amplitude coefficients keyed by polarization.

    Values are scalars for a scalar angle and arrays for an array of angles.
    """

    reflection: Mapping
    transmission: Mapping
    incidence_angle: object
    frequency: float

    def power_transmission(self):
        """|T|^2 averaged over the polarizations present."""
        vals = [np.abs(t) ** 2 for t in self.transmission.values()]
        return sum(vals) / len(vals)

    def power_reflection(self):
        vals = [np.abs(r) ** 2 for r in self.reflection.values()]
        return sum(vals) / len(vals)


def _check_angle(angle) -> np.ndarray:
    a = np.asarray(angle, dtype=float)
    if np.any(~np.isfinite(a)) or np.any(a < 0) or np.any(a >= math.pi / 2):
        raise DomainError("incidence angle must satisfy 0 <= angle < pi/2 (radians)")
    return a


def _layer_eps(stack: LayerStack, frequency: float, materials: MaterialTable):
    eps, thick = [], []
    for layer in stack.layers:
        if layer.thickness_m == 0:
            continue  # a zero-thickness film is an exact no-op
        eps.append(materials.permittivity(layer.material, frequency))
        thick.append(layer.thickness_m)
    return eps, thick


def _solve(eps_layers, thick, angle: np.ndarray, frequency: float, pol: Polarization):
    k0 = 2.0 * math.pi * frequency / SPEED_OF_LIGHT
    s2 = np.sin(angle) ** 2
    eps_all = [1.0 + 0j] + list(eps_layers) + [1.0 + 0j]
    kz = []
    for e in eps_all:
        k = k0 * np.sqrt(e - s2 + 0j)
        kz.append(np.where(k.imag < 0, -k, k))

    def interface(i, j):
        if pol is Polarization.TE:
            a, b = kz[i], kz[j]
        else:
            a, b = kz[i] / eps_all[i], kz[j] / eps_all[j]
        return (a - b) / (a + b), 2.0 * a / (a + b)

    n = len(eps_all)
    r, t = interface(n - 2, n - 1)
    for j in range(n - 2, 0, -1):
        ph = np.exp(1j * kz[j] * thick[j - 1])
        ph2 = ph * ph
        rij, tij = interface(j - 1, j)
        den = 1.0 + rij * r * ph2
        t = tij * t * ph / den
        r = (rij + r * ph2) / den
    return r, t


def slab_coefficients(
    stack: LayerStack,
    angle,
    frequency: float,
    polarization: Polarization | str | None = None,
    materials: MaterialTable | None = None,
) -> SlabCoefficients:
    """Amplitude reflection and transmission of ``stack``.

    Args:
        stack: layers ordered outside to inside; the wave arrives from outside.
        angle: incidence angle(s) in radians, 0 = normal incidence.
        frequency: carrier frequency in Hz.
        polarization: TE, TM or None for both.
        materials: permittivity table (Table-I defaults when omitted).

    Raises:
        DomainError: if any angle is outside [0, pi/2).
        ConfigError: if a layer material has no entry at ``frequency``.
    """
    a = _check_angle(angle)
    if not frequency > 0:
        raise DomainError("frequency must be positive")
    eps, thick = _layer_eps(stack, frequency, materials or DEFAULT_MATERIALS)
    pols = BOTH if polarization is None else (Polarization(polarization),)
    refl, trans = {}, {}
    for p in pols:
        r, t = _solve(eps, thick, a, frequency, p)
        if a.ndim == 0:
            r, t = complex(r), complex(t)
        refl[p], trans[p] = r, t
    return SlabCoefficients(refl, trans, angle, float(frequency))


def _to_db(power):
    with np.errstate(divide="ignore"):
        out = -10.0 * np.log10(power)
    return float(out) if np.ndim(out) == 0 else out


def penetration_loss_db(stack, angle, frequency, materials=None, polarization=None):
    """-10 log10 |T|^2, averaged in power over TE and TM unless one is given."""
    return _to_db(slab_coefficients(stack, angle, frequency, polarization, materials).power_transmission())


def reflection_loss_db(stack, angle, frequency, materials=None, polarization=None):
    """-10 log10 |R|^2, averaged in power over TE and TM unless one is given."""
    return _to_db(slab_coefficients(stack, angle, frequency, polarization, materials).power_reflection())


@lru_cache(maxsize=200_000)
def power_coefficients(stack: LayerStack, angle: float, frequency: float, materials: MaterialTable) -> tuple:
    """Cached (|T|^2, |R|^2) pairs per polarization: (T_te, T_tm, R_te, R_tm)."""
    c = slab_coefficients(stack, float(angle), frequency, None, materials)
    te, tm = Polarization.TE, Polarization.TM
    return (
        abs(c.transmission[te]) ** 2,
        abs(c.transmission[tm]) ** 2,
        abs(c.reflection[te]) ** 2,
        abs(c.reflection[tm]) ** 2,
    )


def conductive_film_layer(thickness: float, frequency: float, materials: MaterialTable | None = None) -> Layer:
    """Metal-film layer with the tabulated metal permittivity at ``frequency``.

    A zero thickness gives a layer the solver skips entirely.
    """
    if not thickness >= 0:
        raise ValidationError(f"film thickness must be >= 0, got {thickness}")
    (materials or DEFAULT_MATERIALS).permittivity("metal", frequency)
    return Layer("metal", float(thickness), film=True)


@dataclass(frozen=True)
class FilmParameters:
    """Metal-film thicknesses in meters."""

    triple_glass_film_thickness: float = 5e-9
    double_glass_film_thickness: float = 40e-9

    def __post_init__(self):
        for name in ("triple_glass_film_thickness", "double_glass_film_thickness"):
            v = float(getattr(self, name))
            if not v >= 0:
                raise ValidationError(f"{name} must be >= 0, got {v}")
            object.__setattr__(self, name, v)

    @classmethod
    def from_nm(cls, triple_nm: float, double_nm: float) -> "FilmParameters":
        return cls(nm_to_m(triple_nm), nm_to_m(double_nm))

    def for_role(self, role: StackRole) -> float | None:
        if role is StackRole.WINDOW_TRIPLE:
            return self.triple_glass_film_thickness
        if role is StackRole.WINDOW_DOUBLE:
            return self.double_glass_film_thickness
        return None


def nm_to_m(value_nm: float) -> float:
    # the single conversion used everywhere, so grid points map to identical floats
    return float(value_nm) * 1e-9


def with_film(stack: LayerStack, thickness: float) -> LayerStack:
    """Set the film thickness of ``stack``.

    A stack without a film layer gets one on the inner face of its
    outermost layer, which is where coated panes carry it.
    """
    if any(l.film for l in stack.layers):
        return stack.with_film_thickness(thickness)
    film = Layer("metal", thickness, film=True)
    return LayerStack(stack.layers[:1] + (film,) + stack.layers[1:], stack.role)


def apply_films(stacks: Mapping, films: FilmParameters) -> dict:
    """Copy of ``stacks`` with window film thicknesses taken from ``films``."""
    out = dict(stacks)
    for role, stack in stacks.items():
        t = films.for_role(StackRole(role))
        if t is not None:
            out[role] = with_film(stack, t)
    return out


def loss_curve(stack: LayerStack, angles_deg, frequency: float, materials=None):
    """Per-polarization and averaged penetration loss over ``angles_deg``.

    Returns:
        dict with keys "avg", "TE", "TM", each an array in dB.
    """
    a = np.radians(np.asarray(angles_deg, dtype=float))
    c = slab_coefficients(stack, a, frequency, None, materials)
    te = np.abs(c.transmission[Polarization.TE]) ** 2
    tm = np.abs(c.transmission[Polarization.TM]) ** 2
    return {
        "avg": np.atleast_1d(_to_db((te + tm) / 2)),
        "TE": np.atleast_1d(_to_db(te)),
        "TM": np.atleast_1d(_to_db(tm)),
    }


def max_swing_db(angles_deg, loss_db, window_deg: float = 2.0, lo: float = -np.inf, hi: float = np.inf) -> float:
    """Largest max-min loss spread inside any angular window of ``window_deg``.

    Only angles within [lo, hi] are considered.
    """
    a = np.asarray(angles_deg, float)
    y = np.asarray(loss_db, float)
    keep = (a >= lo) & (a <= hi)
    a, y = a[keep], y[keep]
    best = 0.0
    j = 0
    for i in range(len(a)):
        while a[i] - a[j] > window_deg + 1e-12:
            j += 1
        seg = y[j : i + 1]
        best = max(best, float(seg.max() - seg.min()))
    return best
