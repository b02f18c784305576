"""Direct-path excess losses, film and canopy calibration, jitter sensitivity.

The excess loss of a direct path is its loss in excess of free space. The
simulated value is

    L_ex = ((W_triple + W_double) + F) + c * A

where W_* sums the window losses crossed, F holds the parameter-free terms
(interior walls scaled by q, exterior walls) and A = sum(d * q) over the
canopies crossed. Forward model and grid search evaluate this expression in
the same floating-point order, so a noise-free round trip is exact.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .channel import MAX_SLAB_ANGLE, PathGainModel, Padp, apply_gains, compute_lsps, synthesize_padp
from .constants import AZIMUTH_RESOLUTION_DEG, DELAY_RESOLUTION_NS, SPEED_OF_LIGHT
from .errors import DirectPathNotFound, DomainError, ValidationError
from .scene import DEFAULT_MATERIALS, ObjectClass, ROLE_FOR_CLASS, Link, MaterialTable, Scene, StackRole, default_stacks
from .slab_em import FilmParameters, nm_to_m, power_coefficients, with_film
from .tracer import InteractionKind, PropagationPath, direct_path_of, trace_direct, trace_link

DELAY_WINDOW_NS = DELAY_RESOLUTION_NS
AZIMUTH_WINDOW_DEG = AZIMUTH_RESOLUTION_DEG
NOISE_FLOOR_DB = 40.0


# ------------------------------------------------------------- observations


def excess_loss_db(gain_db: float, delay_ns: float, frequency: float) -> float:
    """-G - 20 log10(4 pi tau f): the loss beyond free space over c * tau."""
    if not delay_ns > 0 or not frequency > 0:
        raise DomainError("delay and frequency must be positive")
    return -float(gain_db) - 20.0 * math.log10(4.0 * math.pi * delay_ns * 1e-9 * frequency)


@dataclass(frozen=True)
class DirectPathObservation:
    """A direct path picked out of a PADP, or a synthetic stand-in for one.

    Delays in ns, angles in degrees, gain and excess loss in dB.
    """

    link_id: str
    band_hz: float
    tau_coarse_ns: float
    phi_coarse_deg: float
    tau_ns: float
    phi_deg: float
    gain_db: float
    excess_loss_db: float

    @classmethod
    def from_measurement(cls, link_id: str, band_hz: float, tau_ns: float, phi_deg: float, gain_db: float) -> "DirectPathObservation":
        """Observation from one CSV row; the refined values double as coarse ones."""
        ex = excess_loss_db(gain_db, tau_ns, band_hz)
        return cls(str(link_id), float(band_hz), float(tau_ns), float(phi_deg), float(tau_ns), float(phi_deg), float(gain_db), ex)


def _ang_dist(a, b):
    d = np.mod(np.asarray(a, float) - b + 180.0, 360.0) - 180.0
    return np.abs(d)


def refine_direct_path(
    padp: Padp,
    tau_d: float,
    phi_d: float,
    frequency: float | None = None,
    link_id: str = "",
    delay_window_ns: float = DELAY_WINDOW_NS,
    azimuth_window_deg: float = AZIMUTH_WINDOW_DEG,
    noise_floor_db: float = NOISE_FLOOR_DB,
) -> DirectPathObservation:
    """Strongest PADP bin within +-delay_window x +-azimuth_window of a coarse estimate.

    Bins more than ``noise_floor_db`` below the PADP maximum count as empty.
    Ties go to the smaller delay, then to the smaller azimuth offset, then
    to the lower azimuth bin. The excess loss is NaN when ``frequency`` is
    omitted.

    Raises:
        DomainError: if the coarse estimate lies outside the PADP grid.
        DirectPathNotFound: if no bin in the window is above the floor.
    """
    delays, az = padp.delays_ns, padp.azimuths_deg
    if not (delays[0] - delay_window_ns <= tau_d <= delays[-1] + delay_window_ns) or not math.isfinite(phi_d):
        raise DomainError(f"coarse estimate ({tau_d} ns, {phi_d} deg) is outside the PADP grid")
    power = padp.power_db
    finite = power[np.isfinite(power)]
    if finite.size == 0:
        raise DirectPathNotFound("PADP is empty")
    floor = finite.max() - noise_floor_db
    rows = np.nonzero(np.abs(delays - tau_d) <= delay_window_ns + 1e-9)[0]
    cols = np.nonzero(_ang_dist(az, phi_d) <= azimuth_window_deg + 1e-9)[0]
    best = None
    for i in rows:
        for j in cols:
            v = power[i, j]
            if not (np.isfinite(v) and v >= floor):
                continue
            key = (-v, delays[i], _ang_dist(az[j], phi_d), j)
            if best is None or key < best[0]:
                best = (key, i, j)
    if best is None:
        raise DirectPathNotFound(f"no PADP bin above the noise floor near ({tau_d} ns, {phi_d} deg)")
    _, i, j = best
    tau, phi, g = float(delays[i]), float(az[j]), float(power[i, j])
    ex = excess_loss_db(g, tau, frequency) if frequency is not None and tau > 0 else math.nan
    return DirectPathObservation(str(link_id), float(frequency or math.nan), float(tau_d), float(phi_d), tau, phi, g, ex)


def observe_direct_path(paths: Sequence[PropagationPath], frequency: float, link_id: str = "") -> DirectPathObservation:
    """Pipeline stand-in for a measurement: PADP of gain-annotated paths, refined at the direct path."""
    d = direct_path_of(paths)
    return refine_direct_path(synthesize_padp(paths), d.delay_ns, d.aoa_deg, frequency, link_id or d.link_id)


# ------------------------------------------------------------------ features


@dataclass(frozen=True)
class CalibrationParams:
    """Film thicknesses in nm and canopy loss in dB/m per band."""

    triple_film_nm: float = 5.0
    double_film_nm: float = 40.0
    canopy_loss_db_per_m: Mapping = field(default_factory=lambda: {4.65e9: 1.1, 14.25e9: 2.1})

    def __post_init__(self):
        if not (self.triple_film_nm >= 0 and self.double_film_nm >= 0):
            raise ValidationError("film thicknesses must be >= 0")
        c = {float(k): float(v) for k, v in dict(self.canopy_loss_db_per_m).items()}
        if any(v < 0 for v in c.values()):
            raise ValidationError("canopy loss must be >= 0")
        object.__setattr__(self, "canopy_loss_db_per_m", c)

    def canopy_for(self, band_hz: float) -> float:
        for f, v in self.canopy_loss_db_per_m.items():
            if math.isclose(f, band_hz, rel_tol=1e-9):
                return v
        raise ValidationError(f"no canopy loss for band {band_hz} Hz")


@dataclass(frozen=True)
class DirectPathFeatures:
    """Parameter-independent summary of one annotated direct path at one band."""

    link_id: str
    band_hz: float
    triple_angles: tuple
    double_angles: tuple
    fixed_db: float
    canopy_dq: float
    delay_ns: float
    aoa_deg: float


def _check_path(path) -> None:
    if not isinstance(path, PropagationPath):
        raise ValidationError("expected a PropagationPath")
    for i in path.interactions:
        if getattr(i, "kind", None) is None or getattr(i, "incidence_angle", None) is None:
            raise ValidationError("path interaction is not annotated")


def path_features(path: PropagationPath, frequency: float, model: PathGainModel | None = None) -> DirectPathFeatures:
    """Split a direct path's losses into window angles, fixed loss and canopy sum(d*q).

    Raises:
        ValidationError: if the path is unannotated or has a reflection.
    """
    _check_path(path)
    model = model or PathGainModel()
    tri, dbl = [], []
    fixed = 0.0
    dq = 0.0
    for i in path.interactions:
        kind = InteractionKind(i.kind)
        if kind is InteractionKind.REFLECTION:
            raise ValidationError("excess losses are defined for direct paths only")
        if kind is InteractionKind.WINDOW_PENETRATION:
            role = ROLE_FOR_CLASS[ObjectClass(i.object_class)]
            (tri if role is StackRole.WINDOW_TRIPLE else dbl).append(float(i.incidence_angle))
        elif kind is InteractionKind.CANOPY_PENETRATION:
            dq += i.penetration_length_m * i.fresnel_scale_q
        else:
            fixed += model.interaction_loss_db(i, frequency)
    return DirectPathFeatures(path.link_id, float(frequency), tuple(tri), tuple(dbl), fixed, dq, path.delay_ns, path.aoa_deg)


def link_features(link: Link, scene: Scene, frequency: float, model: PathGainModel | None = None) -> DirectPathFeatures:
    path = trace_direct(link.tx, link.rx, scene.cloud, SPEED_OF_LIGHT / frequency, link_id=link.link_id)
    return path_features(path, frequency, model or PathGainModel.from_scene(scene))


def window_term_db(stack, film_nm: float, angles: Sequence[float], frequency: float, materials: MaterialTable) -> float:
    """Summed penetration loss of the window crossings at one film thickness."""
    st = with_film(stack, nm_to_m(film_nm))
    total = 0.0
    for a in angles:
        t_te, t_tm, _, _ = power_coefficients(st, min(float(a), MAX_SLAB_ANGLE), float(frequency), materials)
        total += -10.0 * math.log10((t_te + t_tm) / 2.0)
    return total


def _combine(w1, w2, fixed, canopy, dq):
    # the single expression shared by the forward model and the grid search
    return ((w1 + w2) + fixed) + canopy * dq


def excess_from_features(features: DirectPathFeatures, params: CalibrationParams, stacks: Mapping | None = None, materials: MaterialTable | None = None) -> float:
    stacks = stacks if stacks is not None else default_stacks()
    materials = materials or DEFAULT_MATERIALS
    f = features.band_hz
    w1 = window_term_db(stacks[StackRole.WINDOW_TRIPLE], params.triple_film_nm, features.triple_angles, f, materials) if features.triple_angles else 0.0
    w2 = window_term_db(stacks[StackRole.WINDOW_DOUBLE], params.double_film_nm, features.double_angles, f, materials) if features.double_angles else 0.0
    return _combine(w1, w2, features.fixed_db, params.canopy_for(f), features.canopy_dq)


def simulated_excess_loss(link_or_path, scene: Scene | None, params: CalibrationParams, frequency: float) -> float:
    """Simulated direct-path excess loss in dB.

    Args:
        link_or_path: a Link (traced here) or an annotated direct path.
        scene: supplies cloud, stacks and materials; None means defaults,
            which only works with a path.
        params: film thicknesses and canopy losses.
        frequency: band in Hz.

    Raises:
        ValidationError: for an unannotated path or a path with reflections.
    """
    stacks = dict(scene.config.stacks) if scene is not None else default_stacks()
    materials = scene.config.materials if scene is not None else DEFAULT_MATERIALS
    model = PathGainModel(params.canopy_loss_db_per_m, stacks=stacks, materials=materials)
    if isinstance(link_or_path, Link):
        if scene is None:
            raise ValidationError("a scene is needed to trace a link")
        feats = link_features(link_or_path, scene, frequency, model)
    else:
        feats = path_features(link_or_path, frequency, model)
    return excess_from_features(feats, params, stacks, materials)


# ----------------------------------------------------------------- grid search


def _grid(start: float, stop: float, step: float) -> np.ndarray:
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return np.array([round(start + k * step, 12) for k in range(n)])


@dataclass(frozen=True)
class CalibrationGrid:
    """Search grids: film thickness in nm (shared by both bands), canopy loss in dB/m."""

    triple_film_nm: tuple = tuple(_grid(0.0, 100.0, 1.0))
    double_film_nm: tuple = tuple(_grid(0.0, 100.0, 1.0))
    canopy_db_per_m: tuple = tuple(_grid(0.0, 5.0, 0.1))

    def __post_init__(self):
        for name in ("triple_film_nm", "double_film_nm", "canopy_db_per_m"):
            v = tuple(float(x) for x in getattr(self, name))
            if not v:
                raise ValidationError(f"grid {name} is empty")
            if any(x < 0 or not math.isfinite(x) for x in v):
                raise ValidationError(f"grid {name} must hold finite values >= 0")
            object.__setattr__(self, name, tuple(sorted(set(v))))

    @classmethod
    def from_ranges(cls, film=(0.0, 100.0, 1.0), canopy=(0.0, 5.0, 0.1)) -> "CalibrationGrid":
        """Grids from (start, stop, step) triples, stop inclusive."""
        if film[2] <= 0 or canopy[2] <= 0:
            raise ValidationError("grid steps must be positive")
        f = tuple(_grid(*film))
        return cls(f, f, tuple(_grid(*canopy)))

    @property
    def size(self) -> int:
        return len(self.triple_film_nm) * len(self.double_film_nm) * len(self.canopy_db_per_m) ** 2

    def to_dict(self) -> dict:
        return {
            "triple_film_nm": list(self.triple_film_nm),
            "double_film_nm": list(self.double_film_nm),
            "canopy_db_per_m": list(self.canopy_db_per_m),
        }


@dataclass(frozen=True)
class Residual:
    link_id: str
    band_hz: float
    observed_db: float
    simulated_db: float

    @property
    def error_db(self) -> float:
        return self.simulated_db - self.observed_db


@dataclass(frozen=True)
class CalibrationResult:
    triple_film_nm: float
    double_film_nm: float
    canopy_loss_db_per_m: dict
    mean_error_db: dict
    objective: float
    residuals: tuple
    grid: CalibrationGrid

    @property
    def params(self) -> CalibrationParams:
        return CalibrationParams(self.triple_film_nm, self.double_film_nm, dict(self.canopy_loss_db_per_m))

    def to_dict(self) -> dict:
        return {
            "triple_film_nm": self.triple_film_nm,
            "double_film_nm": self.double_film_nm,
            "canopy_loss_db_per_m": {f"{f:.6g}": v for f, v in sorted(self.canopy_loss_db_per_m.items())},
            "mean_error_db": {f"{f:.6g}": v for f, v in sorted(self.mean_error_db.items())},
            "objective": self.objective,
            "grid": self.grid.to_dict(),
            "residuals": [
                {"link_id": r.link_id, "band_hz": r.band_hz, "observed_db": r.observed_db, "simulated_db": r.simulated_db, "error_db": r.error_db}
                for r in self.residuals
            ],
        }


def _canonical(observations) -> list:
    obs = list(observations)
    if not obs:
        raise ValidationError("no observations to calibrate against")
    for o in obs:
        if not math.isfinite(o.excess_loss_db):
            raise ValidationError(f"observation {o.link_id} has no finite excess loss")
    # canonical order makes every float reduction independent of input order
    return sorted(obs, key=lambda o: (o.band_hz, o.link_id, o.excess_loss_db))


def _band_tables(feats, y, grid, stacks, materials):
    f = feats[0].band_hz
    w1 = np.array([[window_term_db(stacks[StackRole.WINDOW_TRIPLE], t, ft.triple_angles, f, materials) if ft.triple_angles else 0.0 for ft in feats] for t in grid.triple_film_nm])
    w2 = np.array([[window_term_db(stacks[StackRole.WINDOW_DOUBLE], t, ft.double_angles, f, materials) if ft.double_angles else 0.0 for ft in feats] for t in grid.double_film_nm])
    fixed = np.array([ft.fixed_db for ft in feats])
    dq = np.array([ft.canopy_dq for ft in feats])
    return w1, w2, fixed, dq, np.asarray(y, float)


def calibrate(
    observations: Iterable[DirectPathObservation],
    scene: Scene,
    grid: CalibrationGrid | None = None,
    features: Mapping | None = None,
) -> CalibrationResult:
    """Exhaustive grid search for film thicknesses and per-band canopy loss.

    The objective is the sum over bands of the mean absolute excess-loss
    error. Films are shared by both bands and canopy losses are per band,
    so the canopy minimum is taken band by band for each film pair. Ties
    go to the smallest triple film, then double film, then canopy loss.

    Args:
        observations: at least one per band; link ids must exist in the scene.
        scene: geometry, stacks and links.
        grid: search grids, defaults to 0-100 nm by 1 nm and 0-5 dB/m by 0.1.
        features: optional precomputed {(link_id, band_hz): DirectPathFeatures}.

    Raises:
        ValidationError: on empty observations or unknown link ids.
    """
    obs = _canonical(observations)
    grid = grid or CalibrationGrid()
    stacks = dict(scene.config.stacks)
    materials = scene.config.materials
    links = {l.link_id: l for l in scene.config.links}
    model = PathGainModel(0.0, stacks=stacks, materials=materials)
    bands = sorted({o.band_hz for o in obs})
    tables = {}
    feats_by_band = {}
    for b in bands:
        fs = []
        for o in (o for o in obs if o.band_hz == b):
            key = (o.link_id, b)
            if features is not None and key in features:
                fs.append(features[key])
                continue
            if o.link_id not in links:
                raise ValidationError(f"observation for unknown link {o.link_id!r}")
            fs.append(link_features(links[o.link_id], scene, b, model))
        feats_by_band[b] = fs
        tables[b] = _band_tables(fs, [o.excess_loss_db for o in obs if o.band_hz == b], grid, stacks, materials)

    c = np.asarray(grid.canopy_db_per_m)
    n1, n2 = len(grid.triple_film_nm), len(grid.double_film_nm)
    total = np.zeros((n1, n2))
    best_c = {}
    best_e = {}
    for b in bands:
        w1, w2, fixed, dq, y = tables[b]
        mae = np.empty((n1, n2, len(c)))
        for i in range(n1):
            sim = _combine(w1[i][None, None, :], w2[:, None, :], fixed[None, None, :], c[None, :, None], dq[None, None, :])
            mae[i] = np.mean(np.abs(y[None, None, :] - sim), axis=2)
        k = np.argmin(mae, axis=2)
        best_c[b] = k
        best_e[b] = np.take_along_axis(mae, k[..., None], axis=2)[..., 0]
        total = total + best_e[b]
    flat = int(np.argmin(total))
    i, j = divmod(flat, n2)
    canopy = {b: float(c[best_c[b][i, j]]) for b in bands}
    params = CalibrationParams(grid.triple_film_nm[i], grid.double_film_nm[j], canopy)
    residuals = []
    for b in bands:
        w1, w2, fixed, dq, y = tables[b]
        sim = _combine(w1[i], w2[j], fixed, canopy[b], dq)
        for o, s in zip((o for o in obs if o.band_hz == b), sim):
            residuals.append(Residual(o.link_id, b, o.excess_loss_db, float(s)))
    return CalibrationResult(
        params.triple_film_nm,
        params.double_film_nm,
        canopy,
        {b: float(best_e[b][i, j]) for b in bands},
        float(total[i, j]),
        tuple(residuals),
        grid,
    )


def objective(observations, scene: Scene, params: CalibrationParams, features: Mapping | None = None) -> float:
    """Sum over bands of the mean absolute excess-loss error at ``params``."""
    obs = _canonical(observations)
    stacks = dict(scene.config.stacks)
    links = {l.link_id: l for l in scene.config.links}
    model = PathGainModel(0.0, stacks=stacks, materials=scene.config.materials)
    total = 0.0
    for b in sorted({o.band_hz for o in obs}):
        errs = []
        for o in (o for o in obs if o.band_hz == b):
            ft = features[(o.link_id, b)] if features is not None and (o.link_id, b) in features else link_features(links[o.link_id], scene, b, model)
            errs.append(abs(o.excess_loss_db - excess_from_features(ft, params, stacks, scene.config.materials)))
        total += float(np.mean(np.asarray(errs)))
    return total


def forward_observations(
    scene: Scene,
    params: CalibrationParams,
    bands: Sequence[float],
    links: Sequence[Link] | None = None,
    noise_db: float = 0.0,
    seed: int | None = None,
) -> list[DirectPathObservation]:
    """Synthetic observations from the forward model, optionally with uniform noise.

    Each excess loss is the simulated value plus U(-noise_db, noise_db).
    Delay and azimuth are the traced direct path's; the gain is chosen so
    that ``excess_loss_db`` reproduces the stored excess loss.
    """
    rng = np.random.default_rng(seed)
    links = scene.config.links if links is None else links
    stacks = dict(scene.config.stacks)
    model = PathGainModel(params.canopy_loss_db_per_m, stacks=stacks, materials=scene.config.materials)
    out = []
    for b in bands:
        for link in links:
            ft = link_features(link, scene, b, model)
            ex = excess_from_features(ft, params, stacks, scene.config.materials)
            if noise_db > 0:
                ex = ex + float(rng.uniform(-noise_db, noise_db))
            g = -ex - 20.0 * math.log10(4.0 * math.pi * ft.delay_ns * 1e-9 * b)
            out.append(DirectPathObservation(link.link_id, float(b), ft.delay_ns, ft.aoa_deg, ft.delay_ns, ft.aoa_deg, g, ex))
    return out


class ExcessLossCalibrator(BaseEstimator):
    """Estimator wrapper around ``calibrate``.

    ``fit`` takes observations and stores the result; ``predict`` returns
    simulated excess losses for (link_id, band_hz) pairs or observations.
    """

    def __init__(self, scene=None, grid=None):
        self.scene = scene
        self.grid = grid

    def fit(self, observations, y=None):
        if self.scene is None:
            raise ValidationError("ExcessLossCalibrator needs a scene")
        self.result_ = calibrate(observations, self.scene, self.grid)
        self.params_ = self.result_.params
        return self

    def predict(self, items):
        if not hasattr(self, "result_"):
            raise ValidationError("calibrator is not fitted")
        links = {l.link_id: l for l in self.scene.config.links}
        out = []
        for it in items:
            lid, band = (it.link_id, it.band_hz) if isinstance(it, DirectPathObservation) else it
            out.append(simulated_excess_loss(links[lid], self.scene, self.params_, band))
        return np.asarray(out)

    def score(self, observations, y=None):
        """Negative mean absolute error, so larger is better."""
        obs = list(observations)
        pred = self.predict(obs)
        return -float(np.mean(np.abs(pred - np.array([o.excess_loss_db for o in obs]))))


# ------------------------------------------------------------- sensitivity


def window_crossings(path: PropagationPath, model: PathGainModel, frequency: float) -> list[tuple]:
    """(key, incidence_deg, loss_db) per window crossing of ``path``.

    The key is (reflection sequence, window object id, occurrence), so a
    crossing can be followed from one Tx/Rx placement to the next.
    """
    out = []
    seen: dict = {}
    refl = path.reflection_objects
    for i in path.interactions:
        if i.kind is InteractionKind.WINDOW_PENETRATION:
            k = seen.get(i.object_id, 0)
            seen[i.object_id] = k + 1
            out.append(((refl, i.object_id, k), math.degrees(i.incidence_angle), model.interaction_loss_db(i, frequency)))
    return out


@dataclass(frozen=True)
class CrossingSensitivity:
    """Worst loss change of one window crossing across the sweep."""

    reflections: tuple
    window_object: int
    base_angle_deg: float
    base_loss_db: float
    max_delta_db: float
    delta_angle_deg: float
    n_seen: int


@dataclass(frozen=True)
class SensitivityReport:
    link_id: str
    band_hz: float
    box_m: float
    crossings: tuple
    as_range_deg: tuple
    max_angle_delta_deg: float

    def max_window_delta(self) -> float:
        """Largest angle-limited |window-loss change| over all crossings."""
        return max((c.max_delta_db for c in self.crossings), default=0.0)

    def to_dict(self) -> dict:
        return {
            "link_id": self.link_id,
            "band_hz": self.band_hz,
            "box_m": self.box_m,
            "as_range_deg": list(self.as_range_deg),
            "max_angle_delta_deg": self.max_angle_delta_deg,
            "max_window_delta_db": self.max_window_delta(),
            "crossings": [
                {
                    "reflections": list(c.reflections),
                    "window_object": c.window_object,
                    "base_angle_deg": c.base_angle_deg,
                    "base_loss_db": c.base_loss_db,
                    "max_delta_db": c.max_delta_db,
                    "delta_angle_deg": c.delta_angle_deg,
                    "n_seen": c.n_seen,
                }
                for c in self.crossings
            ],
        }


def jitter_offsets(box: float, n: int = 3) -> list[tuple[float, float]]:
    """Horizontal offsets on an n x n grid spanning a box x box square centered on zero."""
    if not box >= 0:
        raise DomainError("box must be >= 0")
    if box == 0 or n < 2:
        return [(0.0, 0.0)]
    s = np.linspace(-box / 2.0, box / 2.0, n)
    return [(float(a), float(b)) for a in s for b in s]


def jitter_sensitivity(
    link: Link,
    scene: Scene,
    frequency: float,
    params: CalibrationParams | None = None,
    box: float = 0.2,
    n: int = 3,
    max_bounces: int = 2,
    max_angle_change_deg: float = 2.0,
) -> SensitivityReport:
    """Sweep Tx and Rx independently over a box x box horizontal grid.

    Window crossings are matched to the unperturbed ones by reflection
    sequence and window object. Each crossing keeps its largest loss change
    among sweep points whose incidence moved by at most
    ``max_angle_change_deg``. The azimuth spread range covers every sweep
    point.
    """
    params = params or CalibrationParams()
    model = PathGainModel(
        params.canopy_loss_db_per_m,
        films=FilmParameters.from_nm(params.triple_film_nm, params.double_film_nm),
        stacks=dict(scene.config.stacks),
        materials=scene.config.materials,
    )
    wl = SPEED_OF_LIGHT / frequency
    offs = jitter_offsets(box, n)
    tx0, rx0 = np.asarray(link.tx), np.asarray(link.rx)

    def run(dt, dr):
        tx = tx0 + np.array([dt[0], dt[1], 0.0])
        rx = rx0 + np.array([dr[0], dr[1], 0.0])
        return apply_gains(trace_link(tx, rx, scene.cloud, wl, max_bounces, link_id=link.link_id), model, frequency)

    base = run((0.0, 0.0), (0.0, 0.0))
    ref = {}
    for p in base:
        for key, ang, loss in window_crossings(p, model, frequency):
            ref.setdefault(key, (ang, loss))
    worst = {k: [0.0, 0.0, 0] for k in ref}
    as_vals = []
    max_dang = 0.0
    for dt, dr in itertools.product(offs, offs):
        paths = base if dt == (0.0, 0.0) and dr == (0.0, 0.0) else run(dt, dr)
        as_vals.append(compute_lsps(paths).as_deg)
        seen = set()
        for p in paths:
            for key, ang, loss in window_crossings(p, model, frequency):
                if key not in ref or key in seen:
                    continue
                seen.add(key)
                da = abs(ang - ref[key][0])
                dl = abs(loss - ref[key][1])
                w = worst[key]
                w[2] += 1
                max_dang = max(max_dang, da)
                if da <= max_angle_change_deg and dl > w[0]:
                    w[0], w[1] = dl, da
    rows = tuple(
        CrossingSensitivity(k[0], k[1], ref[k][0], ref[k][1], worst[k][0], worst[k][1], worst[k][2])
        for k in sorted(ref, key=lambda k: (len(k[0]), k))
    )
    return SensitivityReport(link.link_id, float(frequency), float(box), rows, (min(as_vals), max(as_vals)), max_dang)
