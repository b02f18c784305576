"""Labeled point clouds, materials, layer stacks, links and synthetic scenes.

A scene is a set of points that each carry a position, a unit normal, an
object id and an object class. Points of one object share a class. The
cloud owns a k-d tree built once at construction; every query has a
linear-scan twin that returns the same indices, which is what the tests
use as the oracle.
"""

from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import yaml
from scipy.spatial import cKDTree

from .constants import DEFAULT_BANDS, DEFAULT_BANDWIDTH
from .errors import ConfigError, SceneParseError, ValidationError

NORMAL_TOLERANCE = 1e-6
FREQUENCY_RTOL = 1e-9


class ObjectClass(str, enum.Enum):
    EXTERIOR_WALL = "exterior_wall"
    INTERIOR_WALL = "interior_wall"
    WINDOW_TRIPLE = "window_triple"
    WINDOW_DOUBLE = "window_double"
    TREE_CANOPY = "tree_canopy"
    OTHER = "other"

    @classmethod
    def parse(cls, value) -> "ObjectClass":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value))
        except ValueError:
            raise ValidationError(f"unknown object_class {value!r}") from None


CLASS_ORDER = tuple(ObjectClass)
CLASS_CODE = {c: i for i, c in enumerate(CLASS_ORDER)}

# Trees, ceilings, floors and clutter are not reflectors.
REFLECTIVE_CLASSES = frozenset(
    {
        ObjectClass.EXTERIOR_WALL,
        ObjectClass.INTERIOR_WALL,
        ObjectClass.WINDOW_TRIPLE,
        ObjectClass.WINDOW_DOUBLE,
    }
)


@dataclass(frozen=True)
class ScenePoint:
    position: tuple
    normal: tuple
    object_id: int
    object_class: ObjectClass

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if n.shape != (3,) or np.asarray(self.position).shape != (3,):
            raise ValidationError("position and normal must be 3-vectors")
        if abs(float(np.linalg.norm(n)) - 1.0) > NORMAL_TOLERANCE:
            raise ValidationError(f"normal {tuple(n)} is not unit length")
        if int(self.object_id) < 0:
            raise ValidationError("object_id must be >= 0")
        object.__setattr__(self, "object_class", ObjectClass.parse(self.object_class))


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class PointCloud:
    """Immutable labeled point cloud with a k-d tree over positions.

    Args:
        positions: (N, 3) array in meters.
        normals: (N, 3) unit normals.
        object_ids: (N,) non-negative integers.
        object_classes: (N,) ObjectClass values or their string names.
        resolution_hint: nominal point spacing in meters.
    """

    def __init__(self, positions, normals, object_ids, object_classes, resolution_hint: float = 0.1):
        pos = np.asarray(positions, dtype=float).reshape(-1, 3)
        nrm = np.asarray(normals, dtype=float).reshape(-1, 3)
        ids = np.asarray(object_ids, dtype=np.int64).reshape(-1)
        n = len(pos)
        if len(nrm) != n or len(ids) != n:
            raise ValidationError("positions, normals and object_ids differ in length")
        if not resolution_hint > 0:
            raise ValidationError(f"resolution_hint must be > 0, got {resolution_hint}")
        codes = self._class_codes(object_classes, n)
        if not np.all(np.isfinite(pos)) or not np.all(np.isfinite(nrm)):
            raise ValidationError("non-finite coordinate in cloud")
        if n:
            bad = np.abs(np.linalg.norm(nrm, axis=1) - 1.0) > NORMAL_TOLERANCE
            if np.any(bad):
                i = int(np.argmax(bad))
                raise ValidationError(f"point {i}: normal {tuple(nrm[i])} is not unit length")
            if ids.min() < 0:
                raise ValidationError("object_id must be >= 0")
        self._classes_by_object = self._check_object_classes(ids, codes)

        self.positions = _readonly(pos)
        self.normals = _readonly(nrm)
        self.object_ids = _readonly(ids)
        self.class_codes = _readonly(codes)
        self.resolution_hint = float(resolution_hint)
        self._tree = cKDTree(pos) if n else None
        # memo for derived per-object data (planes, facets); keys are owned by the tracer
        self._cache: dict = {}

    @staticmethod
    def _class_codes(object_classes, n) -> np.ndarray:
        if isinstance(object_classes, np.ndarray):
            arr = object_classes
        else:
            # np.asarray would stringify enum members as their repr
            seq = [c.value if isinstance(c, ObjectClass) else c for c in object_classes]
            arr = np.asarray(seq) if seq else np.empty(0, dtype=np.int8)
        if arr.dtype.kind in "iu":
            codes = arr.astype(np.int8).reshape(-1)
            if codes.size and (codes.min() < 0 or codes.max() >= len(CLASS_ORDER)):
                raise ValidationError("class code out of range")
        else:
            lookup = {}
            codes = np.empty(n, dtype=np.int8)
            for i, c in enumerate(arr.reshape(-1)):
                key = c.value if isinstance(c, ObjectClass) else str(c)
                if key not in lookup:
                    lookup[key] = CLASS_CODE[ObjectClass.parse(key)]
                codes[i] = lookup[key]
        if len(codes) != n:
            raise ValidationError("object_classes length mismatch")
        return codes

    @staticmethod
    def _check_object_classes(ids, codes) -> dict:
        out: dict[int, ObjectClass] = {}
        if not len(ids):
            return out
        order = np.lexsort((codes, ids))
        sid, scode = ids[order], codes[order]
        starts = np.flatnonzero(np.r_[True, sid[1:] != sid[:-1]])
        ends = np.r_[starts[1:], len(sid)]
        for s, e in zip(starts, ends):
            if scode[s] != scode[e - 1]:
                raise ValidationError(f"object {int(sid[s])} mixes object classes")
            out[int(sid[s])] = CLASS_ORDER[int(scode[s])]
        return out

    @classmethod
    def from_points(cls, points: Iterable[ScenePoint], resolution_hint: float = 0.1) -> "PointCloud":
        pts = list(points)
        if not pts:
            return cls.empty(resolution_hint)
        return cls(
            [p.position for p in pts],
            [p.normal for p in pts],
            [p.object_id for p in pts],
            [p.object_class for p in pts],
            resolution_hint,
        )

    @classmethod
    def empty(cls, resolution_hint: float = 0.1) -> "PointCloud":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0, int), np.zeros(0, np.int8), resolution_hint)

    def __len__(self) -> int:
        return len(self.positions)

    def __getitem__(self, i: int) -> ScenePoint:
        return ScenePoint(
            tuple(self.positions[i]),
            tuple(self.normals[i]),
            int(self.object_ids[i]),
            CLASS_ORDER[int(self.class_codes[i])],
        )

    @property
    def points(self) -> list[ScenePoint]:
        return [self[i] for i in range(len(self))]

    @property
    def object_classes(self) -> list[ObjectClass]:
        return [CLASS_ORDER[int(c)] for c in self.class_codes]

    @property
    def object_id_list(self) -> list[int]:
        return sorted(self._classes_by_object)

    def class_of(self, object_id: int) -> ObjectClass:
        try:
            return self._classes_by_object[int(object_id)]
        except KeyError:
            raise KeyError(f"no object with id {object_id}") from None

    def classes_present(self) -> set[ObjectClass]:
        return set(self._classes_by_object.values())

    def object_indices(self, object_id: int) -> np.ndarray:
        return np.flatnonzero(self.object_ids == int(object_id))

    def mask_classes(self, classes: Iterable[ObjectClass]) -> np.ndarray:
        wanted = [CLASS_CODE[ObjectClass.parse(c)] for c in classes]
        return np.isin(self.class_codes, wanted)

    def subset(self, mask_or_index) -> "PointCloud":
        idx = np.asarray(mask_or_index)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        return PointCloud(
            self.positions[idx],
            self.normals[idx],
            self.object_ids[idx],
            self.class_codes[idx],
            self.resolution_hint,
        )

    def without_classes(self, classes: Iterable[ObjectClass]) -> "PointCloud":
        return self.subset(~self.mask_classes(classes))

    # ------------------------------------------------------------------ queries

    def query_radius(self, center, radius: float) -> np.ndarray:
        """Indices (ascending) of points with |p - center| <= radius."""
        c = np.asarray(center, dtype=float)
        if self._tree is None or radius < 0:
            return np.zeros(0, dtype=np.int64)
        # the tree only narrows the candidates; the test itself is shared with the linear scan
        cand = self._tree.query_ball_point(c, radius * (1 + 1e-9) + 1e-12)
        cand = np.asarray(sorted(cand), dtype=np.int64)
        if not len(cand):
            return cand
        d2 = _sq_dist(self.positions[cand], c)
        return cand[d2 <= radius * radius]

    def query_radius_linear(self, center, radius: float) -> np.ndarray:
        c = np.asarray(center, dtype=float)
        if not len(self) or radius < 0:
            return np.zeros(0, dtype=np.int64)
        d2 = _sq_dist(self.positions, c)
        return np.flatnonzero(d2 <= radius * radius).astype(np.int64)

    def query_knn(self, center, k: int) -> np.ndarray:
        """Indices of the k nearest points, ordered by (distance, index)."""
        c = np.asarray(center, dtype=float)
        k = min(int(k), len(self))
        if k <= 0:
            return np.zeros(0, dtype=np.int64)
        _, idx = self._tree.query(c, k=k)
        idx = np.atleast_1d(idx)
        # widen to every point tied with the k-th so the index tie-break is exact
        kth = float(np.sqrt(_sq_dist(self.positions[idx], c).max()))
        cand = self.query_radius(c, kth * (1 + 1e-12) + 1e-300)
        return _rank_knn(self.positions[cand], cand, c, k)

    def query_knn_linear(self, center, k: int) -> np.ndarray:
        c = np.asarray(center, dtype=float)
        k = min(int(k), len(self))
        if k <= 0:
            return np.zeros(0, dtype=np.int64)
        return _rank_knn(self.positions, np.arange(len(self)), c, k)

    def query_balls(self, centers, radii) -> np.ndarray:
        """Sorted union of indices within any of the given balls (a superset filter)."""
        if self._tree is None:
            return np.zeros(0, dtype=np.int64)
        centers = np.asarray(centers, dtype=float).reshape(-1, 3)
        radii = np.broadcast_to(np.asarray(radii, dtype=float), (len(centers),))
        hits = self._tree.query_ball_point(centers, radii * (1 + 1e-9) + 1e-12)
        if len(hits) == 0:
            return np.zeros(0, dtype=np.int64)
        return merge_index_lists(hits)


def merge_index_lists(hits) -> np.ndarray:
    parts = [np.asarray(h, dtype=np.int64) for h in hits if len(h)]
    if not parts:
        return np.zeros(0, dtype=np.int64)
    return np.unique(np.concatenate(parts))


def _sq_dist(points: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = points - c
    return d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2]


def _rank_knn(points, idx, c, k):
    d2 = _sq_dist(points, c)
    order = np.lexsort((idx, d2))
    return np.asarray(idx, dtype=np.int64)[order[:k]]


# ---------------------------------------------------------------------- materials

_DEFAULT_PERMITTIVITY = {
    "concrete": {4.65e9: 5.31 + 0.45j, 14.25e9: 5.31 + 0.35j},
    "plasterboard": {4.65e9: 2.94 + 0.14j, 14.25e9: 2.94 + 0.09j},
    "glass": {4.65e9: 6.27 + 0.10j, 14.25e9: 6.27 + 0.13j},
    "metal": {4.65e9: 1 + 4.50e8j, 14.25e9: 1 + 1.28e8j},
}
REQUIRED_MATERIALS = ("concrete", "plasterboard", "glass", "metal")
AIR = "air"


class MaterialTable:
    """Complex relative permittivity per material and band.

    Values use eps = eps' + j*eps'' with eps'' >= 0 meaning loss. Lookup is
    per band only; nothing is interpolated between bands. ``air`` is
    always available and equals 1 at every frequency.
    """

    def __init__(self, entries: Mapping[str, Mapping[float, complex]]):
        clean: dict[str, dict[float, complex]] = {}
        for name, bands in entries.items():
            name = str(name)
            if name == AIR:
                continue
            clean[name] = {}
            for f, eps in bands.items():
                f = float(f)
                eps = complex(eps)
                if f <= 0:
                    raise ConfigError(f"{name}: frequency must be positive")
                if eps.imag < 0:
                    raise ConfigError(f"{name}: imaginary permittivity must be >= 0 (loss)")
                clean[name][f] = eps
        self._entries = clean
        self._key = tuple(sorted((n, tuple(sorted(b.items(), key=lambda kv: kv[0]))) for n, b in clean.items()))

    @classmethod
    def default(cls) -> "MaterialTable":
        return cls(_DEFAULT_PERMITTIVITY)

    def __eq__(self, other):
        return isinstance(other, MaterialTable) and self._key == other._key

    def __hash__(self):
        return hash(self._key)

    def __repr__(self):
        return f"MaterialTable({sorted(self._entries)})"

    @property
    def names(self) -> list[str]:
        return sorted(self._entries) + [AIR]

    def bands(self, material: str) -> list[float]:
        return sorted(self._entries[material])

    def merged(self, other: Mapping[str, Mapping[float, complex]]) -> "MaterialTable":
        entries = {n: dict(b) for n, b in self._entries.items()}
        for n, b in other.items():
            entries.setdefault(n, {}).update({float(f): complex(e) for f, e in b.items()})
        return MaterialTable(entries)

    def permittivity(self, material: str, frequency: float) -> complex:
        if material == AIR:
            return 1 + 0j
        if material not in self._entries:
            raise ConfigError(f"unknown material {material!r}")
        for f, eps in self._entries[material].items():
            if abs(f - frequency) <= FREQUENCY_RTOL * f:
                return eps
        raise ConfigError(f"material {material!r} has no entry at {frequency:g} Hz")

    def check_complete(self, frequencies: Iterable[float], materials: Iterable[str] = REQUIRED_MATERIALS):
        for f in frequencies:
            for m in materials:
                self.permittivity(m, f)


DEFAULT_MATERIALS = MaterialTable.default()


def permittivity(material: str, frequency: float, table: MaterialTable | None = None) -> complex:
    """Relative permittivity of ``material`` at ``frequency`` (Hz)."""
    return (table or DEFAULT_MATERIALS).permittivity(material, frequency)


# ----------------------------------------------------------------------- stacks


class StackRole(str, enum.Enum):
    WINDOW_TRIPLE = "window_triple"
    WINDOW_DOUBLE = "window_double"
    INTERIOR_WALL = "interior_wall"
    EXTERIOR_SOLID = "exterior_solid"


ROLE_FOR_CLASS = {
    ObjectClass.WINDOW_TRIPLE: StackRole.WINDOW_TRIPLE,
    ObjectClass.WINDOW_DOUBLE: StackRole.WINDOW_DOUBLE,
    ObjectClass.INTERIOR_WALL: StackRole.INTERIOR_WALL,
    ObjectClass.EXTERIOR_WALL: StackRole.EXTERIOR_SOLID,
}


@dataclass(frozen=True)
class Layer:
    """One homogeneous slab. Film layers may have zero thickness (a no-op)."""

    material: str
    thickness_m: float
    film: bool = False

    def __post_init__(self):
        t = float(self.thickness_m)
        if not math.isfinite(t) or t < 0:
            raise ValidationError(f"layer thickness must be >= 0, got {self.thickness_m}")
        if t == 0 and not self.film:
            raise ValidationError(f"{self.material} layer has zero thickness")
        object.__setattr__(self, "thickness_m", t)


@dataclass(frozen=True)
class LayerStack:
    """Ordered layers, outside first, with air on both sides."""

    layers: tuple = ()
    role: StackRole | None = None

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        for layer in self.layers:
            if not isinstance(layer, Layer):
                raise ValidationError(f"not a Layer: {layer!r}")
        if self.role is not None:
            object.__setattr__(self, "role", StackRole(self.role))

    @property
    def materials(self) -> set[str]:
        return {layer.material for layer in self.layers}

    @property
    def total_thickness(self) -> float:
        return sum(layer.thickness_m for layer in self.layers)

    def reversed(self) -> "LayerStack":
        return LayerStack(self.layers[::-1], self.role)

    def with_film_thickness(self, thickness_m: float) -> "LayerStack":
        return LayerStack(
            tuple(Layer(l.material, thickness_m, True) if l.film else l for l in self.layers),
            self.role,
        )

    def without_films(self) -> "LayerStack":
        return LayerStack(tuple(l for l in self.layers if not l.film), self.role)


def default_stacks() -> dict[StackRole, LayerStack]:
    """Construction defaults, outside to inside.

    Triple-glass pane and gap sizes are chosen so the 5 nm film stack shows
    the strong angular loss oscillation at 14.25 GHz; uniform 4 mm panes and
    12 mm gaps do not. All stacks are overridable in the config.
    """
    return {
        StackRole.WINDOW_TRIPLE: LayerStack(
            (
                Layer("glass", 0.011),
                Layer("metal", 5e-9, film=True),
                Layer(AIR, 0.095),
                Layer("glass", 0.003),
                Layer(AIR, 0.085),
                Layer("glass", 0.0115),
            ),
            StackRole.WINDOW_TRIPLE,
        ),
        StackRole.WINDOW_DOUBLE: LayerStack(
            (
                Layer("glass", 0.004),
                Layer("metal", 40e-9, film=True),
                Layer(AIR, 0.012),
                Layer("glass", 0.004),
            ),
            StackRole.WINDOW_DOUBLE,
        ),
        StackRole.INTERIOR_WALL: LayerStack(
            (Layer("plasterboard", 0.013), Layer(AIR, 0.070), Layer("plasterboard", 0.013)),
            StackRole.INTERIOR_WALL,
        ),
        StackRole.EXTERIOR_SOLID: LayerStack((Layer("concrete", 0.300),), StackRole.EXTERIOR_SOLID),
    }


# ------------------------------------------------------------------------ links


@dataclass(frozen=True)
class Link:
    link_id: str
    tx: tuple
    rx: tuple

    def __post_init__(self):
        tx = tuple(float(v) for v in self.tx)
        rx = tuple(float(v) for v in self.rx)
        if len(tx) != 3 or len(rx) != 3:
            raise ValidationError(f"link {self.link_id}: tx and rx must be 3-vectors")
        if tx == rx:
            raise ValidationError(f"link {self.link_id}: tx and rx coincide")
        object.__setattr__(self, "tx", tx)
        object.__setattr__(self, "rx", rx)
        object.__setattr__(self, "link_id", str(self.link_id))


@dataclass(frozen=True)
class LinkSet:
    links: tuple
    carrier_frequency: float = DEFAULT_BANDS[0]
    bandwidth: float = DEFAULT_BANDWIDTH

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))
        if not self.carrier_frequency > 0:
            raise ValidationError("carrier_frequency must be > 0")
        ids = [l.link_id for l in self.links]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate link ids")

    @property
    def tx_positions(self):
        return [l.tx for l in self.links]

    @property
    def rx_positions(self):
        return [l.rx for l in self.links]

    def __iter__(self):
        return iter(self.links)

    def __len__(self):
        return len(self.links)


# ----------------------------------------------------------------------- config


@dataclass(frozen=True)
class SceneConfig:
    """Everything that is not point geometry: materials, stacks, links, bands."""

    materials: MaterialTable = field(default_factory=MaterialTable.default)
    stacks: Mapping = field(default_factory=default_stacks)
    links: tuple = ()
    bands: tuple = DEFAULT_BANDS
    bandwidth: float = DEFAULT_BANDWIDTH
    resolution_hint: float = 0.1
    canopy_loss_db_per_m: Mapping = field(default_factory=lambda: {4.65e9: 1.1, 14.25e9: 2.1})
    film_thickness_m: Mapping = field(
        default_factory=lambda: {StackRole.WINDOW_TRIPLE: 5e-9, StackRole.WINDOW_DOUBLE: 40e-9}
    )
    run: Mapping = field(default_factory=dict)

    def validate(self):
        self.materials.check_complete(self.bands)
        for role, stack in self.stacks.items():
            for m in stack.materials:
                for f in self.bands:
                    self.materials.permittivity(m, f)
        for f in self.bands:
            if not f > 0:
                raise ConfigError("band frequencies must be positive")
            if canopy_loss_for(self.canopy_loss_db_per_m, f) < 0:
                raise ConfigError("canopy loss must be >= 0")
        for t in self.film_thickness_m.values():
            if t < 0:
                raise ConfigError("film thickness must be >= 0")
        return self

    def link_set(self, frequency: float | None = None) -> LinkSet:
        return LinkSet(self.links, frequency or self.bands[0], self.bandwidth)


def canopy_loss_for(table: Mapping, frequency: float) -> float:
    for f, v in table.items():
        if abs(float(f) - frequency) <= FREQUENCY_RTOL * float(f):
            return float(v)
    raise ConfigError(f"no canopy loss configured at {frequency:g} Hz")


def _num(d, key, where):
    if key not in d:
        raise ConfigError(f"{where}: missing key {key!r}")
    try:
        return float(d[key])
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: {key} must be a number, got {d[key]!r}") from None


def _vec3(v, where):
    try:
        out = tuple(float(x) for x in v)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a list of 3 numbers") from None
    if len(out) != 3:
        raise ConfigError(f"{where}: expected a list of 3 numbers")
    return out


_CONFIG_KEYS = {
    "bands_hz",
    "bandwidth_hz",
    "resolution_hint_m",
    "materials",
    "stacks",
    "films",
    "canopy_loss_db_per_m",
    "links",
    "run",
}


def parse_config(data: Mapping | None) -> SceneConfig:
    """Build a SceneConfig from a parsed YAML mapping (see docs/formats.md)."""
    data = dict(data or {})
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    bands = tuple(float(f) for f in data.get("bands_hz", DEFAULT_BANDS))
    if not bands:
        raise ConfigError("bands_hz is empty")

    materials = MaterialTable.default()
    extra: dict[str, dict[float, complex]] = {}
    for i, m in enumerate(data.get("materials") or []):
        where = f"materials[{i}]"
        name = m.get("name") if isinstance(m, Mapping) else None
        if not name:
            raise ConfigError(f"{where}: missing name")
        f = _num(m, "frequency_hz", where)
        eps = complex(_num(m, "eps_real", where), _num(m, "eps_imag", where))
        extra.setdefault(str(name), {})[f] = eps
    if extra:
        materials = materials.merged(extra)

    stacks = default_stacks()
    for role_name, layers in (data.get("stacks") or {}).items():
        try:
            role = StackRole(role_name)
        except ValueError:
            raise ConfigError(f"unknown stack role {role_name!r}") from None
        parsed = []
        for j, layer in enumerate(layers or []):
            where = f"stacks.{role_name}[{j}]"
            if not isinstance(layer, Mapping) or "material" not in layer:
                raise ConfigError(f"{where}: missing material")
            try:
                parsed.append(Layer(str(layer["material"]), _num(layer, "thickness_m", where), bool(layer.get("film", False))))
            except ValidationError as exc:
                raise ConfigError(f"{where}: {exc}") from None
        stacks[role] = LayerStack(tuple(parsed), role)
    names = set(materials.names)
    for role, stack in stacks.items():
        missing = stack.materials - names
        if missing:
            raise ConfigError(f"stack {role.value} uses unknown material(s) {sorted(missing)}")

    films = {StackRole.WINDOW_TRIPLE: 5e-9, StackRole.WINDOW_DOUBLE: 40e-9}
    f_cfg = data.get("films") or {}
    if "triple_glass_film_thickness_m" in f_cfg:
        films[StackRole.WINDOW_TRIPLE] = _num(f_cfg, "triple_glass_film_thickness_m", "films")
    if "double_glass_film_thickness_m" in f_cfg:
        films[StackRole.WINDOW_DOUBLE] = _num(f_cfg, "double_glass_film_thickness_m", "films")

    canopy = {4.65e9: 1.1, 14.25e9: 2.1}
    for i, c in enumerate(data.get("canopy_loss_db_per_m") or []):
        where = f"canopy_loss_db_per_m[{i}]"
        canopy[_num(c, "frequency_hz", where)] = _num(c, "value", where)

    links = []
    for i, l in enumerate(data.get("links") or []):
        where = f"links[{i}]"
        if not isinstance(l, Mapping) or "id" not in l:
            raise ConfigError(f"{where}: missing id")
        try:
            links.append(Link(str(l["id"]), _vec3(l.get("tx_m"), where + ".tx_m"), _vec3(l.get("rx_m"), where + ".rx_m")))
        except ValidationError as exc:
            raise ConfigError(str(exc)) from None

    cfg = SceneConfig(
        materials=materials,
        stacks=stacks,
        links=tuple(links),
        bands=bands,
        bandwidth=float(data.get("bandwidth_hz", DEFAULT_BANDWIDTH)),
        resolution_hint=float(data.get("resolution_hint_m", 0.1)),
        canopy_loss_db_per_m=canopy,
        film_thickness_m=films,
        run=dict(data.get("run") or {}),
    )
    try:
        return cfg.validate()
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | os.PathLike | None) -> SceneConfig:
    if path is None:
        return SceneConfig()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if data is not None and not isinstance(data, Mapping):
        raise ConfigError(f"{path}: top level must be a mapping")
    return parse_config(data)


def config_to_dict(cfg: SceneConfig) -> dict:
    """Inverse of parse_config, for writing example configs."""
    return {
        "bands_hz": [float(f) for f in cfg.bands],
        "bandwidth_hz": float(cfg.bandwidth),
        "resolution_hint_m": float(cfg.resolution_hint),
        "stacks": {
            role.value: [
                {"material": l.material, "thickness_m": l.thickness_m, **({"film": True} if l.film else {})}
                for l in stack.layers
            ]
            for role, stack in cfg.stacks.items()
        },
        "films": {
            "triple_glass_film_thickness_m": float(cfg.film_thickness_m[StackRole.WINDOW_TRIPLE]),
            "double_glass_film_thickness_m": float(cfg.film_thickness_m[StackRole.WINDOW_DOUBLE]),
        },
        "canopy_loss_db_per_m": [
            {"frequency_hz": float(f), "value": float(v)} for f, v in sorted(cfg.canopy_loss_db_per_m.items())
        ],
        "links": [{"id": l.link_id, "tx_m": list(l.tx), "rx_m": list(l.rx)} for l in cfg.links],
        "run": dict(cfg.run),
    }


# ------------------------------------------------------------------ scene files


@dataclass(frozen=True)
class Scene:
    cloud: PointCloud
    config: SceneConfig

    @property
    def materials(self) -> MaterialTable:
        return self.config.materials

    @property
    def stacks(self) -> Mapping:
        return self.config.stacks


def read_cloud(path: str | os.PathLike, resolution_hint: float = 0.1) -> PointCloud:
    """Parse ``x y z nx ny nz object_id object_class`` lines into a cloud."""
    path = os.fspath(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise SceneParseError("scene file not found", path=path) from None
    pos, nrm, ids, cls = [], [], [], []
    known = {c.value: c for c in ObjectClass}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if len(tok) != 8:
            raise SceneParseError(f"expected 8 fields, got {len(tok)}", lineno, path)
        try:
            v = [float(t) for t in tok[:6]]
            oid = int(tok[6])
        except ValueError as exc:
            raise SceneParseError(f"bad number: {exc}", lineno, path) from None
        if tok[7] not in known:
            raise SceneParseError(f"unknown object_class {tok[7]!r}", lineno, path)
        if not all(math.isfinite(x) for x in v):
            raise SceneParseError("non-finite coordinate", lineno, path)
        norm = math.sqrt(v[3] * v[3] + v[4] * v[4] + v[5] * v[5])
        if abs(norm - 1.0) > NORMAL_TOLERANCE:
            raise ValidationError(f"{path}:{lineno}: normal {tuple(v[3:])} is not unit length")
        if oid < 0:
            raise ValidationError(f"{path}:{lineno}: object_id must be >= 0")
        pos.append(v[:3])
        nrm.append(v[3:])
        ids.append(oid)
        cls.append(CLASS_CODE[known[tok[7]]])
    if not pos:
        return PointCloud.empty(resolution_hint)
    return PointCloud(np.array(pos), np.array(nrm), np.array(ids), np.array(cls, dtype=np.int8), resolution_hint)


def save_cloud(cloud: PointCloud, path: str | os.PathLike, header: str | None = None) -> None:
    """Write a cloud in the scene format. Floats use repr, so reloading is exact."""
    lines = []
    if header:
        lines.extend("# " + h for h in header.splitlines())
    lines.append("# x y z nx ny nz object_id object_class")
    names = [c.value for c in CLASS_ORDER]
    for p, n, i, c in zip(cloud.positions.tolist(), cloud.normals.tolist(), cloud.object_ids.tolist(), cloud.class_codes.tolist()):
        lines.append(f"{p[0]!r} {p[1]!r} {p[2]!r} {n[0]!r} {n[1]!r} {n[2]!r} {i} {names[c]}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_scene(path: str | os.PathLike, config: SceneConfig | str | os.PathLike | None = None) -> Scene:
    """Load a scene file plus its config; the spatial index is built here."""
    if not isinstance(config, SceneConfig):
        config = load_config(config)
    cloud = read_cloud(path, config.resolution_hint)
    return Scene(cloud, config)


# -------------------------------------------------------------- synthetic scenes


def _unit(v):
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if n == 0:
        raise ValidationError("zero vector")
    return v / n


@dataclass(frozen=True)
class WallSpec:
    """Planar rectangle ``origin + s*edge_u + t*edge_v`` for s, t in [0, 1].

    The normal is unit(edge_u x edge_v), negated when ``flip_normal``.
    """

    origin: tuple
    edge_u: tuple
    edge_v: tuple
    object_class: ObjectClass = ObjectClass.EXTERIOR_WALL
    flip_normal: bool = False

    @property
    def normal(self) -> np.ndarray:
        c = np.cross(np.asarray(self.edge_u, float), np.asarray(self.edge_v, float))
        if np.linalg.norm(c) == 0:
            raise ValidationError("degenerate wall (zero area)")
        n = _unit(c)
        return -n if self.flip_normal else n

    @property
    def area(self) -> float:
        return float(np.linalg.norm(np.cross(np.asarray(self.edge_u, float), np.asarray(self.edge_v, float))))

    def sample(self, spacing: float) -> tuple[np.ndarray, np.ndarray]:
        if not spacing > 0:
            raise ValidationError("spacing must be > 0")
        n = self.normal
        u = np.asarray(self.edge_u, float)
        v = np.asarray(self.edge_v, float)
        nu = int(round(np.linalg.norm(u) / spacing)) + 1
        nv = int(round(np.linalg.norm(v) / spacing)) + 1
        s = np.linspace(0.0, 1.0, max(nu, 2))
        t = np.linspace(0.0, 1.0, max(nv, 2))
        ss, tt = np.meshgrid(s, t, indexing="ij")
        pts = np.asarray(self.origin, float) + ss.reshape(-1, 1) * u + tt.reshape(-1, 1) * v
        return pts, np.tile(n + 0.0, (len(pts), 1))


@dataclass(frozen=True)
class CanopySpec:
    """Ellipsoidal tree crown filled with a regular grid of points."""

    center: tuple
    radii: tuple

    def sample(self, spacing: float) -> tuple[np.ndarray, np.ndarray]:
        r = np.asarray(self.radii, float)
        if np.any(r <= 0) or not spacing > 0:
            raise ValidationError("canopy radii and spacing must be > 0")
        axes = [np.arange(-np.floor(ri / spacing), np.floor(ri / spacing) + 1) * spacing for ri in r]
        g = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        inside = np.sum((g / r) ** 2, axis=1) <= 1.0
        pts = g[inside] + np.asarray(self.center, float)
        # crowns are not reflectors; the outward radial direction is a placeholder normal
        rel = g[inside] / r
        norms = np.linalg.norm(rel, axis=1, keepdims=True)
        nrm = np.where(norms > 0, rel / np.where(norms > 0, norms, 1), np.array([0.0, 0.0, 1.0]))
        return pts, nrm

    @property
    def volume(self) -> float:
        return 4.0 / 3.0 * math.pi * float(np.prod(self.radii))


@dataclass(frozen=True)
class SceneSpec:
    walls: tuple = ()
    canopies: tuple = ()
    spacing: float = 0.1
    canopy_spacing: float = 0.3
    resolution_hint: float | None = None


@dataclass(frozen=True)
class ShoeboxSpec:
    """A one-storey office slice: three rooms off a corridor behind a glazed facade.

    Layout (plan view, meters): the facade runs along y = 0 with its outward
    normal toward -y. Rooms 1 and 2 (x in [0, 12]) sit behind triple glazing,
    room 3 (x in [12, 18]) behind double glazing. Rooms are ``room_depth``
    deep; the corridor fills the rest of the building depth. A concrete
    parking-structure wall stands ``parking_distance`` in front of the
    facade and faces it. Tree crowns stand between the two.
    """

    room_widths: tuple = (6.0, 6.0, 6.0)
    room_depth: float = 6.0
    corridor_width: float = 2.0
    height: float = 3.0
    parking_distance: float = 50.0
    parking_x: tuple = (-10.0, 30.0)
    trees: tuple = (
        CanopySpec((3.0, -8.0, 4.0), (2.0, 2.0, 2.5)),
        CanopySpec((14.0, -12.0, 4.0), (2.5, 2.5, 3.0)),
    )
    other_patch: bool = True
    spacing: float = 0.1
    canopy_spacing: float = 0.3

    def __post_init__(self):
        dims = list(self.room_widths) + [self.room_depth, self.corridor_width, self.height, self.parking_distance]
        if any(not d > 0 for d in dims) or not self.spacing > 0 or not self.canopy_spacing > 0:
            raise ValidationError("shoebox dimensions and spacings must be > 0")
        if len(self.room_widths) < 2:
            raise ValidationError("need at least two rooms")
        if self.parking_x[1] <= self.parking_x[0]:
            raise ValidationError("parking_x must be increasing")

    @property
    def width(self) -> float:
        return float(sum(self.room_widths))

    @property
    def depth(self) -> float:
        return self.room_depth + self.corridor_width

    def to_scene_spec(self) -> SceneSpec:
        W, D, H = self.width, self.depth, self.height
        xs = np.cumsum((0.0,) + tuple(self.room_widths))
        split = float(xs[-2])
        z = (0.0, 0.0, H)
        walls = [
            # facade; u along +x and v up already give the outward -y normal
            WallSpec((0.0, 0.0, 0.0), (split, 0, 0), z, ObjectClass.WINDOW_TRIPLE),
            WallSpec((split, 0.0, 0.0), (W - split, 0, 0), z, ObjectClass.WINDOW_DOUBLE),
            # corridor walls: room side, then far side
            WallSpec((0.0, self.room_depth, 0.0), (W, 0, 0), z, ObjectClass.INTERIOR_WALL, flip_normal=True),
            WallSpec((0.0, D, 0.0), (W, 0, 0), z, ObjectClass.INTERIOR_WALL, flip_normal=True),
        ]
        # partitions, including the two that close the slice toward neighbouring offices
        for x in xs:
            walls.append(WallSpec((float(x), 0.0, 0.0), (0, self.room_depth, 0), z, ObjectClass.INTERIOR_WALL, flip_normal=True))
        px0, px1 = self.parking_x
        walls.append(
            WallSpec((px0, -self.parking_distance, 0.0), (px1 - px0, 0, 0), (0, 0, 2 * H), ObjectClass.EXTERIOR_WALL, flip_normal=True)
        )
        if self.other_patch:
            walls.append(WallSpec((W + 3.0, -20.0, 0.0), (3.0, 0, 0), (0, 3.0, 0), ObjectClass.OTHER))
        return SceneSpec(tuple(walls), tuple(self.trees), self.spacing, self.canopy_spacing, self.spacing)

    def expected_point_count(self) -> float:
        """Area/spacing^2 plus volume/spacing^3 estimate."""
        spec = self.to_scene_spec()
        walls = sum(w.area for w in spec.walls) / self.spacing**2
        crowns = sum(c.volume for c in spec.canopies) / self.canopy_spacing**3
        return walls + crowns


def make_synthetic_scene(spec: SceneSpec | ShoeboxSpec | Sequence[WallSpec]) -> PointCloud:
    """Sample walls and canopies of ``spec`` into a labeled cloud.

    Each wall and canopy becomes its own object, numbered in order.
    """
    if isinstance(spec, ShoeboxSpec):
        spec = spec.to_scene_spec()
    elif not isinstance(spec, SceneSpec):
        spec = SceneSpec(tuple(spec))
    pos, nrm, ids, cls = [], [], [], []
    oid = 0
    for w in spec.walls:
        if w.area == 0:
            raise ValidationError(f"wall {oid} is degenerate (zero area)")
        p, n = w.sample(spec.spacing)
        pos.append(p)
        nrm.append(n)
        ids.append(np.full(len(p), oid))
        cls.append(np.full(len(p), CLASS_CODE[ObjectClass.parse(w.object_class)], dtype=np.int8))
        oid += 1
    for c in spec.canopies:
        p, n = c.sample(spec.canopy_spacing)
        pos.append(p)
        nrm.append(n)
        ids.append(np.full(len(p), oid))
        cls.append(np.full(len(p), CLASS_CODE[ObjectClass.TREE_CANOPY], dtype=np.int8))
        oid += 1
    hint = spec.resolution_hint or spec.spacing
    if not pos:
        return PointCloud.empty(hint)
    return PointCloud(np.concatenate(pos), np.concatenate(nrm), np.concatenate(ids), np.concatenate(cls), hint)


def shoebox_links(
    spec: ShoeboxSpec | None = None,
    tx_x: tuple = (1.0, 12.0, 16.0),
    tx_distance: float = 8.0,
    antenna_height: float = 1.5,
    rx_depth_fraction: float = 0.55,
) -> tuple:
    """One link per room, each Tx standing ``tx_distance`` in front of the facade.

    ``tx_x[k]`` is the Tx abscissa for room k. The defaults make every direct
    path enter its own room through that room's facade section, at
    incidence angles that differ from room to room.
    """
    spec = spec or ShoeboxSpec()
    xs = np.cumsum((0.0,) + tuple(spec.room_widths))
    if len(tx_x) != len(spec.room_widths):
        raise ValidationError("need one tx_x per room")
    tx_ids = {}
    links = []
    for k in range(len(spec.room_widths)):
        tx = (float(tx_x[k]), -tx_distance, antenna_height)
        tx_ids.setdefault(tx, len(tx_ids) + 1)
        cx = float(xs[k] + 0.6 * (xs[k + 1] - xs[k]))
        rx = (cx, rx_depth_fraction * spec.room_depth, antenna_height)
        links.append(Link(f"Tx{tx_ids[tx]}Rx{k + 1}", tx, rx))
    return tuple(links)


def survey_links(
    spec: ShoeboxSpec | None = None,
    tx_x=None,
    tx_y: tuple = (-8.0, -12.0, -16.0),
    tx_height: float = 4.0,
    rx_depth_fraction: float = 0.55,
    rx_height: float = 1.5,
) -> tuple:
    """Every Tx of a grid in front of the facade paired with every room's Rx.

    A dense direct-path survey for calibration. The raised Tx sends many
    direct paths through the tree canopies. Tx are numbered row by row.
    """
    spec = spec or ShoeboxSpec()
    xs = np.cumsum((0.0,) + tuple(spec.room_widths))
    if tx_x is None:
        tx_x = np.arange(-2.0, xs[-1] + 2.0 + 1e-9, 1.0)
    rxs = [(float(xs[k] + 0.6 * (xs[k + 1] - xs[k])), rx_depth_fraction * spec.room_depth, rx_height) for k in range(len(spec.room_widths))]
    links = []
    n = 0
    for y in tx_y:
        for x in tx_x:
            n += 1
            tx = (float(x), float(y), float(tx_height))
            for k, rx in enumerate(rxs):
                links.append(Link(f"Tx{n}Rx{k + 1}", tx, rx))
    return tuple(links)
