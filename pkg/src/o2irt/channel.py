"""Path gains, power-angle-delay profiles and large-scale parameters.

A path's gain in dB is minus the free-space loss over its length minus the
loss of every interaction on it:

    window           L_wdw(theta)
    interior wall    L_iw(theta) * q
    canopy           L_tree * d * q
    exterior wall    L_ext(theta)
    reflection       -10 log10 |R(theta)|^2

Slab losses are power averages over TE and TM.
"""

from __future__ import annotations

import enum
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .constants import (
    AZIMUTH_RESOLUTION_DEG,
    DELAY_LIMIT_NS,
    DELAY_RESOLUTION_NS,
    DYNAMIC_RANGE_DB,
    SPEED_OF_LIGHT,
)
from .errors import ConfigError, DomainError, ValidationError
from .scene import (
    DEFAULT_MATERIALS,
    ROLE_FOR_CLASS,
    MaterialTable,
    ObjectClass,
    PointCloud,
    Scene,
    StackRole,
    canopy_loss_for,
    default_stacks,
)
from .slab_em import FilmParameters, apply_films, power_coefficients
from .tracer import InteractionKind, PropagationPath, direct_path_of, trace_links

# grazing incidence is clamped just below 90 degrees before slab evaluation
MAX_SLAB_ANGLE = math.radians(89.99)


def fspl_db(distance_m: float, frequency: float) -> float:
    """Free-space path loss 20 log10(4 pi d f / c)."""
    if not distance_m > 0 or not frequency > 0:
        raise DomainError("distance and frequency must be positive")
    return 20.0 * math.log10(4.0 * math.pi * distance_m * frequency / SPEED_OF_LIGHT)


class ModelVariant(str, enum.Enum):
    FULL_FLOOR_PLAN = "full_floor_plan"
    EXTERIORS_ONLY = "exteriors_only"
    NO_METAL_FILM = "no_metal_film"


def variant_cloud(cloud: PointCloud, variant: ModelVariant | str) -> PointCloud:
    """Cloud seen by ``variant``; exteriors_only drops every interior wall."""
    if ModelVariant(variant) is ModelVariant.EXTERIORS_ONLY:
        return cloud.without_classes([ObjectClass.INTERIOR_WALL])
    return cloud


def variant_films(films: FilmParameters, variant: ModelVariant | str) -> FilmParameters:
    if ModelVariant(variant) is ModelVariant.NO_METAL_FILM:
        return FilmParameters(0.0, 0.0)
    return films


@dataclass(frozen=True)
class PathGainModel:
    """Loss model shared by all paths of a run.

    Args:
        canopy_loss_db_per_m: dB/m, either one value or a {frequency: value} map.
        films: metal-film thicknesses applied to the window stacks.
        stacks: layer stacks per role, films not yet applied.
        materials: permittivity table.
    """

    canopy_loss_db_per_m: object = field(default_factory=lambda: {4.65e9: 1.1, 14.25e9: 2.1})
    films: FilmParameters = field(default_factory=FilmParameters)
    stacks: Mapping = field(default_factory=default_stacks)
    materials: MaterialTable = DEFAULT_MATERIALS

    def __post_init__(self):
        vals = self.canopy_loss_db_per_m.values() if isinstance(self.canopy_loss_db_per_m, Mapping) else [self.canopy_loss_db_per_m]
        if any(float(v) < 0 for v in vals):
            raise ValidationError("canopy_loss_db_per_m must be >= 0")
        object.__setattr__(self, "_effective", apply_films(self.stacks, self.films))

    @classmethod
    def from_scene(cls, scene: Scene, films: FilmParameters | None = None) -> "PathGainModel":
        cfg = scene.config
        if films is None:
            films = FilmParameters(cfg.film_thickness_m[StackRole.WINDOW_TRIPLE], cfg.film_thickness_m[StackRole.WINDOW_DOUBLE])
        return cls(dict(cfg.canopy_loss_db_per_m), films, dict(cfg.stacks), cfg.materials)

    def canopy_loss(self, frequency: float) -> float:
        if isinstance(self.canopy_loss_db_per_m, Mapping):
            return canopy_loss_for(self.canopy_loss_db_per_m, frequency)
        return float(self.canopy_loss_db_per_m)

    def stack_for(self, object_class: ObjectClass):
        role = ROLE_FOR_CLASS.get(ObjectClass(object_class))
        if role is None or role not in self._effective:
            raise ConfigError(f"no layer stack configured for {ObjectClass(object_class).value}")
        return self._effective[role]

    def _coeffs(self, object_class, angle, frequency, from_front=True):
        stack = self.stack_for(object_class)
        if not from_front:
            stack = stack.reversed()
        a = min(float(angle), MAX_SLAB_ANGLE)
        return power_coefficients(stack, a, float(frequency), self.materials)

    def penetration_loss(self, object_class, angle, frequency) -> float:
        t_te, t_tm, _, _ = self._coeffs(object_class, angle, frequency)
        return -10.0 * math.log10((t_te + t_tm) / 2.0)

    def reflection_loss(self, object_class, angle, frequency, from_front=True) -> float:
        _, _, r_te, r_tm = self._coeffs(object_class, angle, frequency, from_front)
        p = (r_te + r_tm) / 2.0
        return math.inf if p == 0 else -10.0 * math.log10(p)

    def interaction_loss_db(self, inter, frequency: float) -> float:
        kind = InteractionKind(inter.kind)
        if kind is InteractionKind.REFLECTION:
            return self.reflection_loss(inter.object_class, inter.incidence_angle, frequency, inter.from_front)
        if kind is InteractionKind.WINDOW_PENETRATION:
            return self.penetration_loss(inter.object_class, inter.incidence_angle, frequency)
        if kind is InteractionKind.INTERIOR_WALL_PENETRATION:
            return self.penetration_loss(inter.object_class, inter.incidence_angle, frequency) * inter.fresnel_scale_q
        if kind is InteractionKind.CANOPY_PENETRATION:
            return self.canopy_loss(frequency) * inter.penetration_length_m * inter.fresnel_scale_q
        if kind is InteractionKind.EXTERIOR_WALL_PENETRATION:
            return self.penetration_loss(inter.object_class, inter.incidence_angle, frequency)
        raise ValidationError(f"unknown interaction kind {kind}")


def _check_annotated(path) -> None:
    if not isinstance(path, PropagationPath):
        raise ValidationError("expected a PropagationPath")
    if not path.geometric_length > 0:
        raise ValidationError("path has no geometric length")
    for i in path.interactions:
        if getattr(i, "kind", None) is None or getattr(i, "incidence_angle", None) is None:
            raise ValidationError("path interaction is not annotated")


def gain_breakdown(path: PropagationPath, model: PathGainModel, frequency: float) -> dict:
    """Loss terms in dB: free space plus one sum per interaction kind."""
    _check_annotated(path)
    out = {"fspl": fspl_db(path.geometric_length, frequency)}
    for kind in InteractionKind:
        out[kind.value] = 0.0
    for inter in path.interactions:
        out[InteractionKind(inter.kind).value] += model.interaction_loss_db(inter, frequency)
    return out


def path_gain(path: PropagationPath, model: PathGainModel, frequency: float) -> float:
    """Gain in dB of an annotated path."""
    parts = gain_breakdown(path, model, frequency)
    total = 0.0
    for v in parts.values():
        total += v
    return -total


def apply_gains(paths: Iterable[PropagationPath], model: PathGainModel, frequency: float) -> list[PropagationPath]:
    return [p.with_gain(path_gain(p, model, frequency)) for p in paths]


# ------------------------------------------------------------------------ PADP


def delay_axis_ns(limit_ns: float = DELAY_LIMIT_NS, step_ns: float = DELAY_RESOLUTION_NS) -> np.ndarray:
    return np.arange(int(round(limit_ns / step_ns)) + 1) * step_ns


def azimuth_axis_deg(step_deg: float = AZIMUTH_RESOLUTION_DEG) -> np.ndarray:
    return np.arange(int(round(360.0 / step_deg))) * step_deg


@dataclass
class Padp:
    """Power on a delay x azimuth grid in dB (-inf where empty).

    ``paths`` holds the local maxima as (delay_ns, azimuth_deg, gain_db).
    """

    delays_ns: np.ndarray
    azimuths_deg: np.ndarray
    power_db: np.ndarray
    paths: list = field(default_factory=list)

    @property
    def delay_step(self) -> float:
        return float(self.delays_ns[1] - self.delays_ns[0]) if len(self.delays_ns) > 1 else DELAY_RESOLUTION_NS

    @property
    def azimuth_step(self) -> float:
        return float(self.azimuths_deg[1] - self.azimuths_deg[0]) if len(self.azimuths_deg) > 1 else AZIMUTH_RESOLUTION_DEG

    def delay_index(self, delay_ns: float) -> int:
        return int(math.floor(delay_ns / self.delay_step + 0.5))

    def azimuth_index(self, azimuth_deg: float) -> int:
        return int(math.floor(azimuth_deg / self.azimuth_step + 0.5)) % len(self.azimuths_deg)

    def value(self, delay_ns: float, azimuth_deg: float) -> float:
        return float(self.power_db[self.delay_index(delay_ns), self.azimuth_index(azimuth_deg)])


def _local_maxima(power_db: np.ndarray) -> list[tuple[int, int]]:
    """Occupied bins not exceeded by any of their 8 neighbours (azimuth wraps)."""
    nd, na = power_db.shape
    pad = np.full((nd + 2, na + 2), -np.inf)
    pad[1:-1, 1:-1] = power_db
    pad[1:-1, 0] = power_db[:, -1]
    pad[1:-1, -1] = power_db[:, 0]
    is_max = np.isfinite(power_db)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            if na == 1 and dj != 0:
                continue
            is_max &= power_db >= pad[1 + di : 1 + di + nd, 1 + dj : 1 + dj + na]
    return [(int(i), int(j)) for i, j in zip(*np.nonzero(is_max))]


def synthesize_padp(
    paths: Iterable,
    delay_limit_ns: float = DELAY_LIMIT_NS,
    delay_step_ns: float = DELAY_RESOLUTION_NS,
    azimuth_step_deg: float = AZIMUTH_RESOLUTION_DEG,
) -> Padp:
    """Deposit paths on the grid, power-summing paths that share a bin.

    ``paths`` may hold PropagationPath objects with gains or plain
    (delay_ns, azimuth_deg, gain_db) triples. Paths beyond the delay limit
    are dropped.
    """
    delays = delay_axis_ns(delay_limit_ns, delay_step_ns)
    az = azimuth_axis_deg(azimuth_step_deg)
    lin = np.zeros((len(delays), len(az)))
    occupied = np.zeros(lin.shape, dtype=bool)
    for tau, phi, g in _triples(paths):
        if not math.isfinite(g):
            raise ValidationError("path gain must be finite")
        if tau > delay_limit_ns or tau < 0:
            continue
        i = int(math.floor(tau / delay_step_ns + 0.5))
        j = int(math.floor((phi % 360.0) / azimuth_step_deg + 0.5)) % len(az)
        lin[i, j] += 10.0 ** (g / 10.0)
        occupied[i, j] = True
    with np.errstate(divide="ignore"):
        power = np.where(occupied, 10.0 * np.log10(np.where(occupied, lin, 1.0)), -np.inf)
    peaks = [(float(delays[i]), float(az[j]), float(power[i, j])) for i, j in _local_maxima(power)]
    return Padp(delays, az, power, peaks)


def _triples(paths) -> list[tuple[float, float, float]]:
    out = []
    for p in paths:
        if isinstance(p, PropagationPath):
            if p.gain_db is None:
                raise ValidationError("path has no gain; run path_gain first")
            out.append((p.delay_ns, p.aoa_deg, float(p.gain_db)))
        else:
            tau, phi, g = p
            out.append((float(tau), float(phi), float(g)))
    return out


# ------------------------------------------------------------------------ LSPs


@dataclass(frozen=True)
class LinkLsp:
    pl_db: float
    ds_ns: float
    as_deg: float
    n_paths: int


def dynamic_range_filter(triples, dynamic_range_db: float = DYNAMIC_RANGE_DB):
    if not triples:
        return []
    top = max(t[2] for t in triples)
    return [t for t in triples if t[2] >= top - dynamic_range_db]


def wrap_deg(x):
    """Wrap angles to (-180, 180]."""
    y = np.mod(np.asarray(x, float) + 180.0, 360.0) - 180.0
    y = np.where(y == -180.0, 180.0, y)
    return float(y) if np.ndim(y) == 0 else y


def compute_lsps(padp_or_paths, dynamic_range_db: float = DYNAMIC_RANGE_DB, delay_limit_ns: float = DELAY_LIMIT_NS) -> LinkLsp:
    """Path loss, RMS delay spread and RMS azimuth spread.

    Accepts a Padp (its discrete paths are used), gain-annotated paths or
    (delay_ns, azimuth_deg, gain_db) triples.
    """
    src = padp_or_paths.paths if isinstance(padp_or_paths, Padp) else padp_or_paths
    trip = [t for t in _triples(src) if t[0] <= delay_limit_ns]
    trip = dynamic_range_filter(trip, dynamic_range_db)
    if not trip:
        raise ValidationError("no paths to compute LSPs from")
    tau = np.array([t[0] for t in trip])
    phi = np.array([t[1] for t in trip])
    p = 10.0 ** (np.array([t[2] for t in trip]) / 10.0)
    ptot = float(p.sum())
    pl = -10.0 * math.log10(ptot)
    w = p / ptot
    mean_tau = float(np.sum(w * tau))
    ds = math.sqrt(max(0.0, float(np.sum(w * (tau - mean_tau) ** 2))))
    rad = np.radians(phi)
    mu = math.degrees(math.atan2(float(np.sum(p * np.sin(rad))), float(np.sum(p * np.cos(rad)))))
    dev = wrap_deg(phi - mu)
    as_ = math.sqrt(float(np.sum(w * np.asarray(dev) ** 2)))
    return LinkLsp(pl, ds, as_, len(trip))


@dataclass(frozen=True)
class LspRow:
    link_id: str
    band_hz: float
    incidence_deg: float
    pl_db: float
    ds_ns: float
    as_deg: float
    model_variant: str = ModelVariant.FULL_FLOOR_PLAN.value


@dataclass
class LspReport:
    rows: list

    def by_key(self) -> dict:
        return {(r.link_id, r.band_hz, r.model_variant): r for r in self.rows}

    def aggregate(self) -> dict:
        """Mean and standard deviation per (band, variant), in link-id order."""
        groups = defaultdict(list)
        for r in sorted(self.rows, key=lambda r: (r.band_hz, r.model_variant, r.link_id)):
            groups[(r.band_hz, r.model_variant)].append(r)
        out = {}
        for key, rows in groups.items():
            stats = {}
            for m in ("pl_db", "ds_ns", "as_deg"):
                v = np.array([getattr(r, m) for r in rows])
                stats[m] = {"mean": float(v.mean()), "std": float(v.std())}
            out[key] = stats
        return out


LSP_METRICS = ("pl_db", "ds_ns", "as_deg")


def compare_lsps(simulated: LspReport | Sequence[LspRow], reference: LspReport | Sequence[LspRow]) -> dict:
    """Per-band errors of simulated against reference (positive = simulated larger).

    Returns:
        {band_hz: {metric: {mean_error, rms_error, mean_error_pct, rms_error_pct, n}}}
        where the percentages divide by the mean reference value.
    """
    sim = simulated.rows if isinstance(simulated, LspReport) else list(simulated)
    ref = reference.rows if isinstance(reference, LspReport) else list(reference)
    sk = {(r.link_id, r.band_hz): r for r in sim}
    rk = {(r.link_id, r.band_hz): r for r in ref}
    if set(sk) != set(rk):
        raise ValidationError("simulated and reference link sets differ")
    out = {}
    for band in sorted({k[1] for k in sk}):
        keys = sorted(k for k in sk if k[1] == band)
        stats = {}
        for m in LSP_METRICS:
            s = np.array([getattr(sk[k], m) for k in keys])
            r = np.array([getattr(rk[k], m) for k in keys])
            e = s - r
            mref = float(r.mean())
            me = float(e.mean())
            rms = math.sqrt(float(np.mean(e * e)))
            stats[m] = {
                "mean_error": me,
                "rms_error": rms,
                "mean_error_pct": me / mref * 100.0 if mref != 0 else math.nan,
                "rms_error_pct": rms / mref * 100.0 if mref != 0 else math.nan,
                "n": len(keys),
            }
        out[band] = stats
    return out


def facade_incidence_deg(paths: Sequence[PropagationPath]) -> float:
    """Facade-window incidence of the direct path, NaN when it crosses no window."""
    d = direct_path_of(paths)
    for i in d.interactions:
        if i.kind is InteractionKind.WINDOW_PENETRATION:
            return math.degrees(i.incidence_angle)
    return math.nan


# --------------------------------------------------------------- orchestration


def simulate(
    scene: Scene,
    frequency: float,
    variant: ModelVariant | str = ModelVariant.FULL_FLOOR_PLAN,
    max_bounces: int = 4,
    workers: int = 1,
    model: PathGainModel | None = None,
    links=None,
    accelerated: bool = True,
) -> list[tuple[str, list[PropagationPath]]]:
    """Trace and score every link of ``scene`` for one band and variant."""
    variant = ModelVariant(variant)
    model = model or PathGainModel.from_scene(scene)
    model = replace(model, films=variant_films(model.films, variant))
    cloud = variant_cloud(scene.cloud, variant)
    links = scene.config.links if links is None else links
    traced = trace_links(links, cloud, SPEED_OF_LIGHT / frequency, max_bounces, workers, accelerated)
    return [(lid, apply_gains(paths, model, frequency)) for lid, paths in traced]


def lsp_rows(results, frequency: float, variant, dynamic_range_db=DYNAMIC_RANGE_DB, delay_limit_ns=DELAY_LIMIT_NS) -> list[LspRow]:
    rows = []
    for lid, paths in results:
        l = compute_lsps(paths, dynamic_range_db, delay_limit_ns)
        rows.append(LspRow(lid, float(frequency), facade_incidence_deg(paths), l.pl_db, l.ds_ns, l.as_deg, ModelVariant(variant).value))
    return rows
