"""Direct and specular path search over a labeled point cloud.

Specular validity follows the first-Fresnel-zone test

    |tx - p| + |p - rx| - |I(p) - rx| <= lambda / 2

where I(p) is the image of the source in the plane through point p with
p's normal. Orders 1 and 2 are tested point by point (order 2 on point
pairs); the accelerated search only prunes candidates and then runs the
same elementwise kernel as the brute-force scan, so both return the same
bits. Orders 3 and 4 continue the image method over planar facets
(connected groups of points) and confirm each bounce with the same
per-point test near the facet's specular point.

Every path segment is then checked for shadowing objects: an object
shadows a segment p1-p2 when one of its points lies in the segment's
first Fresnel ellipsoid, |p - p1| + |p - p2| - |p2 - p1| <= lambda / 2.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .constants import MAX_BOUNCES, SPEED_OF_LIGHT
from .errors import DomainError
from .scene import REFLECTIVE_CLASSES, Link, ObjectClass, PointCloud, merge_index_lists

GROUP_DISTANCE_FACTOR = 3.0
GROUP_NORMAL_DEG = 10.0
FOOTPRINT_FACTOR = math.sqrt(0.5)

# classes that never shadow a ray
_NON_BLOCKING = frozenset({ObjectClass.OTHER})


class InteractionKind(str, enum.Enum):
    REFLECTION = "reflection"
    WINDOW_PENETRATION = "window_penetration"
    INTERIOR_WALL_PENETRATION = "interior_wall_penetration"
    CANOPY_PENETRATION = "canopy_penetration"
    EXTERIOR_WALL_PENETRATION = "exterior_wall_penetration"


PENETRATION_KIND = {
    ObjectClass.WINDOW_TRIPLE: InteractionKind.WINDOW_PENETRATION,
    ObjectClass.WINDOW_DOUBLE: InteractionKind.WINDOW_PENETRATION,
    ObjectClass.INTERIOR_WALL: InteractionKind.INTERIOR_WALL_PENETRATION,
    ObjectClass.TREE_CANOPY: InteractionKind.CANOPY_PENETRATION,
    ObjectClass.EXTERIOR_WALL: InteractionKind.EXTERIOR_WALL_PENETRATION,
}


@dataclass(frozen=True)
class Interaction:
    """One reflection or penetration along a path.

    ``from_front`` is True when the wave arrives on the side the object's
    normal points to. ``penetration_length_m`` is the along-ray chord
    length d; only canopy losses use it.
    """

    kind: InteractionKind
    object_id: int
    object_class: ObjectClass
    point: tuple
    incidence_angle: float
    fresnel_scale_q: float = 1.0
    penetration_length_m: float = 0.0
    from_front: bool = True
    support: int = 1

    @property
    def is_reflection(self) -> bool:
        return self.kind is InteractionKind.REFLECTION


@dataclass(frozen=True)
class PropagationPath:
    tx: tuple
    rx: tuple
    interactions: tuple
    vertices: tuple
    geometric_length: float
    delay: float
    aoa_azimuth: float
    gain_db: float | None = None
    link_id: str = ""

    @property
    def n_bounces(self) -> int:
        return sum(1 for i in self.interactions if i.is_reflection)

    @property
    def reflections(self) -> list[Interaction]:
        return [i for i in self.interactions if i.is_reflection]

    @property
    def reflection_objects(self) -> tuple:
        return tuple(i.object_id for i in self.interactions if i.is_reflection)

    @property
    def signature(self) -> tuple:
        return tuple((i.kind.value, i.object_id) for i in self.interactions)

    @property
    def delay_ns(self) -> float:
        return self.delay * 1e9

    @property
    def aoa_deg(self) -> float:
        return math.degrees(self.aoa_azimuth)

    def with_gain(self, gain_db: float) -> "PropagationPath":
        return replace(self, gain_db=float(gain_db))


@dataclass(frozen=True)
class ShadowEvent:
    """An object found inside a segment's first Fresnel ellipsoid.

    ``l_star`` is the along-ray coordinate (from p1) of the point that
    attains ``d_w``; ``normal`` is the mean normal over blocking points.
    """

    object_id: int
    object_class: ObjectClass
    d_w: float
    q: float
    d: float
    l_min: float
    l_max: float
    l_star: float
    incidence_angle: float
    normal: tuple
    point: tuple
    n_points: int

    def as_tuple(self):
        return (self.object_id, self.d_w, self.q, self.d)


# ------------------------------------------------------------------ primitives


def _norm3(v: np.ndarray) -> np.ndarray:
    """Row norms with a fixed operation order (used by every Fresnel test)."""
    return np.sqrt(v[..., 0] * v[..., 0] + v[..., 1] * v[..., 1] + v[..., 2] * v[..., 2])


def _dot3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def _mirror(x: np.ndarray, p: np.ndarray, n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Image of x in the plane (p, n); also returns the signed height of x."""
    h = _dot3(x - p, n)
    return x - (2.0 * h)[..., None] * n, h


def fresnel_radius(d1: float, d2: float, wavelength: float) -> float:
    """First Fresnel zone radius sqrt(lambda d1 d2 / (d1 + d2))."""
    if not (d1 > 0 and d2 > 0 and wavelength > 0):
        raise DomainError("fresnel_radius needs d1, d2 and wavelength > 0")
    return math.sqrt(wavelength * d1 * d2 / (d1 + d2))


def azimuth_of(vec) -> float:
    """Azimuth in [0, 2 pi) of the horizontal part of ``vec``."""
    a = math.atan2(float(vec[1]), float(vec[0]))
    if a < 0:
        a += 2.0 * math.pi
    if a >= 2.0 * math.pi:
        a = 0.0
    return a


def _incidence(direction: np.ndarray, normal: np.ndarray) -> float:
    d = direction / np.linalg.norm(direction)
    n = normal / np.linalg.norm(normal)
    c = min(1.0, abs(float(np.dot(d, n))))
    return math.acos(c)


def _capsule_balls(p1: np.ndarray, p2: np.ndarray, excess: float, min_radius: float = 0.0):
    """Balls covering {x : |x-p1| + |x-p2| - |p1-p2| <= excess} and the
    capsule of radius ``min_radius`` around the segment."""
    D = float(np.linalg.norm(p2 - p1))
    b2 = D * excess / 2.0 + excess * excess / 4.0
    R = max(math.sqrt(b2 + excess * excess / 4.0), float(min_radius))
    h = max(R, D / 256.0, 1e-12)
    n = int(math.ceil(D / h)) + 1
    t = np.linspace(0.0, 1.0, n)
    centers = p1 + t[:, None] * (p2 - p1)
    step = D / max(n - 1, 1)
    radius = math.sqrt(R * R + step * step / 4.0) * (1 + 1e-9) + 1e-9
    return centers, radius


def capsule_candidates(cloud: PointCloud, p1, p2, excess: float, min_radius: float = 0.0) -> np.ndarray:
    """Sorted superset of the points inside the ellipsoid with the given path excess."""
    centers, radius = _capsule_balls(np.asarray(p1, float), np.asarray(p2, float), excess, min_radius)
    return cloud.query_balls(centers, radius)


def default_footprint(cloud: PointCloud) -> float:
    """Half-diagonal of a sampling cell: a sampled wall crossed by a segment
    always has a point this close to the segment."""
    return cloud.resolution_hint * FOOTPRINT_FACTOR


# ------------------------------------------------------------------- shadowing


def _blocking_mask(cloud: PointCloud) -> np.ndarray:
    key = "blocking_mask"
    m = cloud._cache.get(key)
    if m is None:
        m = ~cloud.mask_classes(_NON_BLOCKING)
        cloud._cache[key] = m
    return m


def detect_shadowing(
    p1,
    p2,
    cloud: PointCloud,
    wavelength: float,
    exclude: Iterable[int] = (),
    accelerated: bool = True,
    footprint: float = 0.0,
) -> list[ShadowEvent]:
    """Objects inside the first Fresnel ellipsoid of segment p1-p2.

    Args:
        p1, p2: segment end points.
        cloud: scene points.
        wavelength: meters.
        exclude: object ids to ignore (a reflector on its own segments).
        accelerated: use the k-d tree to pick candidates.
        footprint: when > 0, a point also blocks if it projects onto the
            segment within this distance of it. Near segment ends the
            ellipsoid is thinner than the point spacing, and this keeps a
            crossed wall from slipping between samples.

    Returns:
        One event per shadowing object, ordered along the segment from p1.
    """
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    if not wavelength > 0:
        raise DomainError("wavelength must be > 0")
    if np.array_equal(p1, p2):
        raise DomainError("segment end points coincide")
    if not len(cloud):
        return []
    # evaluate in a canonical orientation so swapping p1 and p2 is bit-exact
    swapped = tuple(p1) > tuple(p2)
    a, b = (p2, p1) if swapped else (p1, p2)
    thr = wavelength / 2.0
    if accelerated:
        cand = capsule_candidates(cloud, a, b, thr, footprint)
    else:
        cand = np.arange(len(cloud), dtype=np.int64)
    if len(cand):
        cand = cand[_blocking_mask(cloud)[cand]]
    excl = np.asarray(sorted(set(int(e) for e in exclude)), dtype=np.int64)
    if len(excl) and len(cand):
        cand = cand[~np.isin(cloud.object_ids[cand], excl)]
    if not len(cand):
        return []
    pts = cloud.positions[cand]
    seg = b - a
    D = float(_norm3(seg))
    u = seg / D
    excess = _norm3(pts - a) + _norm3(pts - b) - D
    l = _dot3(pts - a, u)
    perp = _norm3(pts - a - l[:, None] * u)
    hit = excess <= thr
    if footprint > 0:
        hit |= (perp <= footprint) & (l >= 0) & (l <= D)
    if not np.any(hit):
        return []
    idx = cand[hit]
    l, perp = l[hit], perp[hit]
    oids = cloud.object_ids[idx]
    events = []
    for oid in np.unique(oids):
        sel = np.flatnonzero(oids == oid)
        ls, ps = l[sel], perp[sel]
        k = int(np.argmin(ps))  # first minimum, i.e. lowest point index
        d_w = float(ps[k])
        l_star = float(ls[k])
        d1, d2 = l_star, D - l_star
        if d1 > 0 and d2 > 0:
            r_f = fresnel_radius(d1, d2, wavelength)
            q = min(1.0, max(0.0, 1.0 - d_w / r_f))
        else:
            q = 1.0 if d_w == 0 else 0.0
        nsum = cloud.normals[idx[sel]].sum(axis=0)
        nn = float(np.linalg.norm(nsum))
        normal = nsum / nn if nn > 0 else cloud.normals[idx[sel[0]]]
        l_min, l_max = float(ls.min()), float(ls.max())
        if swapped:
            l_min, l_max, l_star = D - l_max, D - l_min, D - l_star
        point = p1 + l_star * ((p2 - p1) / D)
        events.append(
            ShadowEvent(
                object_id=int(oid),
                object_class=cloud.class_of(int(oid)),
                d_w=d_w,
                q=q,
                d=float(ls.max() - ls.min()),
                l_min=l_min,
                l_max=l_max,
                l_star=l_star,
                incidence_angle=_incidence(seg, normal),
                normal=tuple(float(x) for x in normal),
                point=tuple(float(x) for x in point),
                n_points=int(len(sel)),
            )
        )
    events.sort(key=lambda e: (e.l_star, e.object_id))
    return events


def _penetrations(events: Sequence[ShadowEvent], seg_dir: np.ndarray) -> list[Interaction]:
    out = []
    for e in events:
        n = np.asarray(e.normal)
        out.append(
            Interaction(
                kind=PENETRATION_KIND[e.object_class],
                object_id=e.object_id,
                object_class=e.object_class,
                point=e.point,
                incidence_angle=e.incidence_angle,
                fresnel_scale_q=e.q,
                penetration_length_m=e.d,
                # a wave travelling against the normal enters through the front face
                from_front=bool(np.dot(seg_dir, n) <= 0),
                support=e.n_points,
            )
        )
    return out


# ---------------------------------------------------------------- path assembly


def _build_path(tx, rx, bounce_points, bounce_info, cloud, wavelength, accelerated, length, link_id="", shadowing=True, footprint=None):
    """Attach shadowing to each segment and assemble a PropagationPath.

    bounce_info holds (object_id, normal, support) per reflection.
    """
    verts = [np.asarray(tx, float)] + [np.asarray(p, float) for p in bounce_points] + [np.asarray(rx, float)]
    inters: list[Interaction] = []
    for j in range(len(verts) - 1):
        p1, p2 = verts[j], verts[j + 1]
        excl = set()
        if j > 0:
            excl.add(bounce_info[j - 1][0])
        if j < len(bounce_points):
            excl.add(bounce_info[j][0])
        seg = p2 - p1
        if shadowing:
            fp = default_footprint(cloud) if footprint is None else footprint
            events = detect_shadowing(p1, p2, cloud, wavelength, excl, accelerated, fp)
            inters.extend(_penetrations(events, seg))
        if j < len(bounce_points):
            oid, n, support = bounce_info[j]
            n = np.asarray(n, float)
            inters.append(
                Interaction(
                    kind=InteractionKind.REFLECTION,
                    object_id=int(oid),
                    object_class=cloud.class_of(oid),
                    point=tuple(float(x) for x in p2),
                    incidence_angle=_incidence(seg, n),
                    fresnel_scale_q=1.0,
                    penetration_length_m=0.0,
                    from_front=bool(np.dot(p1 - p2, n) > 0),
                    support=int(support),
                )
            )
    last = verts[-2] - verts[-1]
    return PropagationPath(
        tx=tuple(float(x) for x in tx),
        rx=tuple(float(x) for x in rx),
        interactions=tuple(inters),
        vertices=tuple(tuple(float(x) for x in v) for v in verts),
        geometric_length=float(length),
        delay=float(length) / SPEED_OF_LIGHT,
        aoa_azimuth=azimuth_of(last),
        link_id=link_id,
    )


def trace_direct(
    tx,
    rx,
    cloud: PointCloud,
    wavelength: float | None = None,
    accelerated: bool = True,
    link_id: str = "",
    footprint: float | None = None,
) -> PropagationPath:
    """Line-of-sight path with every blocking object attached as a penetration.

    ``wavelength`` defaults to that of 4.65 GHz when omitted. ``footprint``
    is passed to detect_shadowing; None means default_footprint(cloud).
    """
    tx = np.asarray(tx, float)
    rx = np.asarray(rx, float)
    if np.array_equal(tx, rx):
        raise DomainError("tx and rx coincide")
    if wavelength is None:
        wavelength = SPEED_OF_LIGHT / 4.65e9
    length = float(_norm3(rx - tx))
    return _build_path(tx, rx, [], [], cloud, wavelength, accelerated, length, link_id, True, footprint)


# -------------------------------------------------------- specular: orders 1, 2


def _reflective(cloud: PointCloud) -> np.ndarray:
    key = "reflective_idx"
    r = cloud._cache.get(key)
    if r is None:
        r = np.flatnonzero(cloud.mask_classes(REFLECTIVE_CLASSES)).astype(np.int64)
        cloud._cache[key] = r
    return r


def _order1_kernel(cloud: PointCloud, idx: np.ndarray, tx: np.ndarray, rx: np.ndarray):
    """Fresnel excess of single bounces via points ``idx``; NaN when sides differ."""
    P = cloud.positions[idx]
    N = cloud.normals[idx]
    I, hs = _mirror(tx, P, N)
    ht = _dot3(rx - P, N)
    lhs = _norm3(tx - P) + _norm3(P - rx) - _norm3(I - rx)
    return np.where(hs * ht > 0, lhs, np.nan)


def _order2_kernel(cloud: PointCloud, ia: np.ndarray, ib: np.ndarray, tx: np.ndarray, rx: np.ndarray):
    """Per-pair excesses (lhs_a, lhs_b) of tx -> a -> b -> rx; NaN when invalid."""
    Pa, Na = cloud.positions[ia], cloud.normals[ia]
    Pb, Nb = cloud.positions[ib], cloud.normals[ib]
    I1, ha = _mirror(tx, Pa, Na)
    hab = _dot3(Pb - Pa, Na)
    lhs_a = _norm3(tx - Pa) + _norm3(Pa - Pb) - _norm3(I1 - Pb)
    I2, hb = _mirror(I1, Pb, Nb)
    hrb = _dot3(rx - Pb, Nb)
    lhs_b = _norm3(I1 - Pb) + _norm3(Pb - rx) - _norm3(I2 - rx)
    ok = (ha * hab > 0) & (hb * hrb > 0) & (cloud.object_ids[ia] != cloud.object_ids[ib])
    return np.where(ok, lhs_a, np.nan), np.where(ok, lhs_b, np.nan)


def _accepted_order1(cloud, tx, rx, thr):
    idx = _reflective(cloud)
    if not len(idx):
        return idx, np.zeros(0)
    lhs = _order1_kernel(cloud, idx, tx, rx)
    keep = lhs <= thr
    return idx[keep], lhs[keep]


def _accepted_order2_brute(cloud, tx, rx, thr, chunk_pairs=2_000_000):
    idx = _reflective(cloud)
    n = len(idx)
    out_a, out_b, out_l = [], [], []
    if n == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0)
    rows = max(1, chunk_pairs // n)
    for s in range(0, n, rows):
        ia = np.repeat(idx[s : s + rows], n)
        ib = np.tile(idx, min(rows, n - s))
        la, lb = _order2_kernel(cloud, ia, ib, tx, rx)
        keep = (la <= thr) & (lb <= thr)
        out_a.append(ia[keep])
        out_b.append(ib[keep])
        out_l.append(la[keep] + lb[keep])
    return _sort_pairs(np.concatenate(out_a), np.concatenate(out_b), np.concatenate(out_l))


def _sort_pairs(ia, ib, lhs):
    order = np.lexsort((ib, ia))
    return ia[order], ib[order], lhs[order]


def _accepted_order2_fast(cloud, tx, rx, thr, cell=None):
    """Order-2 search that prunes with bounds and evaluates survivors exactly.

    The first-bounce images I1(a) are bucketed into cells. For a bucket with
    centre c and radius eps, the second-bounce excess at b is 2-Lipschitz in
    I1, so b can be skipped when its excess at c exceeds thr + 2 eps. For
    each surviving b, the first-bounce excess differs from that of the
    ellipsoid with foci c and b by at most 2 eps, which lets the k-d tree
    pick the candidate a points.
    """
    idx = _reflective(cloud)
    if not len(idx):
        return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0)
    cell = cell or max(4.0 * cloud.resolution_hint, thr)
    P = cloud.positions[idx]
    N = cloud.normals[idx]
    I1, ha = _mirror(tx, P, N)
    # rx image in each b plane and its distance to b
    rxb, hrb = _mirror(rx, P, N)
    dist_rx = _norm3(P - rx)
    keys = np.floor(I1 / cell).astype(np.int64)
    _, bucket = np.unique(keys, axis=0, return_inverse=True)
    bucket = bucket.reshape(-1)
    tol = 1e-9 * (1.0 + float(_norm3(tx - rx)))
    out_a, out_b, out_l = [], [], []
    for g in range(int(bucket.max()) + 1):
        members = np.flatnonzero(bucket == g)
        c = I1[members].mean(axis=0)
        eps = float(_norm3(I1[members] - c).max()) * (1 + 1e-9) + 1e-12
        f = dist_rx + _norm3(P - c) - _norm3(rxb - c)
        bsel = np.flatnonzero((f - 2.0 * eps <= thr + tol) & (hrb != 0))
        if not len(bsel):
            continue
        tree = cKDTree(P[members])
        for jb in bsel:
            centers, radius = _capsule_balls(c, P[jb], thr + 2.0 * eps + tol)
            near = merge_index_lists(tree.query_ball_point(centers, radius))
            if not len(near):
                continue
            ia = idx[members[near]]
            ib = np.full(len(ia), idx[jb], dtype=np.int64)
            la, lb = _order2_kernel(cloud, ia, ib, tx, rx)
            keep = (la <= thr) & (lb <= thr)
            if np.any(keep):
                out_a.append(ia[keep])
                out_b.append(ib[keep])
                out_l.append(la[keep] + lb[keep])
    if not out_a:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0)
    ia, ib, l = np.concatenate(out_a), np.concatenate(out_b), np.concatenate(out_l)
    # a pair can surface from only one bucket, but keep the result a set
    ia, ib, l = _sort_pairs(ia, ib, l)
    if len(ia) > 1:
        first = np.r_[True, (ia[1:] != ia[:-1]) | (ib[1:] != ib[:-1])]
        ia, ib, l = ia[first], ib[first], l[first]
    return ia, ib, l


def group_points(cloud: PointCloud, idx: np.ndarray, distance: float | None = None, max_angle_deg: float = GROUP_NORMAL_DEG) -> np.ndarray:
    """Connected-component labels for points ``idx``.

    Two points are linked when they are within ``distance`` (default three
    times the cloud resolution) and their normals differ by at most
    ``max_angle_deg``.
    """
    idx = np.asarray(idx, dtype=np.int64)
    n = len(idx)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    if distance is None:
        distance = GROUP_DISTANCE_FACTOR * cloud.resolution_hint
    P = cloud.positions[idx]
    N = cloud.normals[idx]
    pairs = cKDTree(P).query_pairs(distance, output_type="ndarray")
    if len(pairs):
        cosang = _dot3(N[pairs[:, 0]], N[pairs[:, 1]])
        pairs = pairs[cosang >= math.cos(math.radians(max_angle_deg)) - 1e-12]
    g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n)) if len(pairs) else coo_matrix((n, n))
    _, labels = connected_components(g, directed=False)
    return labels.astype(np.int64)


def _pick(keys_obj: np.ndarray, lhs: np.ndarray, order_keys: tuple) -> dict:
    """Index of min lhs per object sequence; ties go to the lowest point indices."""
    order = np.lexsort(order_keys[::-1] + (lhs,))
    uniq, first = np.unique(keys_obj[order], axis=0, return_index=True)
    return {tuple(int(v) for v in k): int(order[f]) for k, f in zip(uniq, first)}


def _backtrace(tx: np.ndarray, rx: np.ndarray, planes):
    """Reflection points for a chain of planes, or None if the chain is not realisable."""
    images = [tx]
    for p, n in planes:
        img, _ = _mirror(images[-1], p, n)
        images.append(img)
    target = rx
    pts = [None] * len(planes)
    for j in range(len(planes) - 1, -1, -1):
        p, n = planes[j]
        s = images[j + 1]
        hs = float(_dot3(s - p, n))
        ht = float(_dot3(target - p, n))
        if not hs * ht < 0:
            return None
        t = hs / (hs - ht)
        if not 0.0 < t < 1.0:
            return None
        q = s + t * (target - s)
        pts[j] = q
        target = q
    length = float(_norm3(images[-1] - rx))
    return pts, length


def _specular_low_order(cloud, tx, rx, thr, order, accelerated):
    """(object sequence, point indices, planes, support) for orders 1 and 2."""
    results = []
    if order == 1:
        ia, lhs = _accepted_order1(cloud, tx, rx, thr)
        if not len(ia):
            return results
        best = _pick(cloud.object_ids[ia][:, None], lhs, (ia,))
        for key in sorted(best):
            i = best[key]
            members = ia[cloud.object_ids[ia] == key[0]]
            labels = group_points(cloud, members)
            support = int(np.sum(labels == labels[np.searchsorted(members, ia[i])]))
            results.append((key, (int(ia[i]),), (support,)))
    else:
        if accelerated:
            ia, ib, lhs = _accepted_order2_fast(cloud, tx, rx, thr)
        else:
            ia, ib, lhs = _accepted_order2_brute(cloud, tx, rx, thr)
        if not len(ia):
            return results
        objs = np.stack([cloud.object_ids[ia], cloud.object_ids[ib]], axis=1)
        best = _pick(objs, lhs, (ia, ib))
        for key in sorted(best):
            i = best[key]
            sel = (objs[:, 0] == key[0]) & (objs[:, 1] == key[1])
            supports = []
            for col, rep in ((ia, ia[i]), (ib, ib[i])):
                members = np.unique(col[sel])
                labels = group_points(cloud, members)
                supports.append(int(np.sum(labels == labels[np.searchsorted(members, rep)])))
            results.append((key, (int(ia[i]), int(ib[i])), tuple(supports)))
    return results


# ----------------------------------------------------- specular: orders 3 and 4


@dataclass(frozen=True)
class Facet:
    object_id: int
    centroid: np.ndarray
    normal: np.ndarray
    radius: float
    members: np.ndarray = field(repr=False)


def facets(cloud: PointCloud) -> list[Facet]:
    """Planar pieces of every reflective object (cached on the cloud)."""
    cached = cloud._cache.get("facets")
    if cached is not None:
        return cached
    out = []
    idx = _reflective(cloud)
    oids = cloud.object_ids[idx]
    for oid in np.unique(oids):
        members = idx[oids == oid]
        labels = group_points(cloud, members)
        for lab in np.unique(labels):
            m = members[labels == lab]
            P = cloud.positions[m]
            c = P.mean(axis=0)
            nsum = cloud.normals[m].sum(axis=0)
            nn = float(np.linalg.norm(nsum))
            if nn == 0:
                continue
            r = float(_norm3(P - c).max())
            out.append(Facet(int(oid), c, nsum / nn, r, m))
    cloud._cache["facets"] = out
    return out


def _per_point_check(cloud, members, source, target, thr):
    """Fresnel test of a bounce from image ``source`` to (image) ``target``."""
    P = cloud.positions[members]
    N = cloud.normals[members]
    S = np.broadcast_to(source, P.shape)
    img, hs = _mirror(S, P, N)
    ht = _dot3(target - P, N)
    lhs = _norm3(S - P) + _norm3(P - target) - _norm3(img - target)
    return np.where(hs * ht > 0, lhs, np.nan)


def _specular_high_order(cloud, tx, rx, thr, order):
    fs = facets(cloud)
    results = []
    if len(fs) < 2:
        return results
    planes = [(f.centroid, f.normal) for f in fs]

    def extend(prefix, source):
        if len(prefix) == order:
            yield tuple(prefix)
            return
        for k, f in enumerate(fs):
            if prefix and fs[prefix[-1]].object_id == f.object_id:
                continue
            hs = float(_dot3(source - f.centroid, f.normal))
            if hs == 0:
                continue
            if prefix:
                prev = fs[prefix[-1]]
                # the previous facet must reach the half-space holding the source image
                if math.copysign(1.0, hs) * float(_dot3(prev.centroid - f.centroid, f.normal)) <= -prev.radius:
                    continue
            img, _ = _mirror(source, f.centroid, f.normal)
            yield from extend(prefix + [k], img)

    seen = set()
    for seq in extend([], tx):
        chain = [planes[k] for k in seq]
        hit = _backtrace(tx, rx, chain)
        if hit is None:
            continue
        pts, length = hit
        if any(float(_norm3(pts[j] - fs[k].centroid)) > fs[k].radius + cloud.resolution_hint for j, k in enumerate(seq)):
            continue
        # confirm every bounce with the point test near its specular point
        images = [tx]
        for p, n in chain:
            images.append(_mirror(images[-1], p, n)[0])
        rx_imgs = [rx]
        for p, n in reversed(chain[1:]):
            rx_imgs.append(_mirror(rx_imgs[-1], p, n)[0])
        rx_imgs = rx_imgs[::-1]
        lam = 2.0 * thr
        reach = math.sqrt(lam * length) + GROUP_DISTANCE_FACTOR * cloud.resolution_hint
        reps = []
        for j, k in enumerate(seq):
            near = cloud.query_radius(pts[j], reach)
            near = near[cloud.object_ids[near] == fs[k].object_id]
            near = near[np.isin(near, fs[k].members)]
            if not len(near):
                break
            lhs = _per_point_check(cloud, near, images[j], rx_imgs[j], thr)
            ok = np.flatnonzero(lhs <= thr)
            if not len(ok):
                break
            best = ok[np.lexsort((near[ok], lhs[ok]))[0]]
            reps.append((int(near[best]), len(ok)))
        else:
            key = tuple(fs[k].object_id for k in seq)
            if key in seen:
                continue
            seen.add(key)
            results.append((key, tuple(r[0] for r in reps), tuple(r[1] for r in reps)))
    return results


# ------------------------------------------------------------------- front end


def find_specular_paths(
    tx,
    rx,
    cloud: PointCloud,
    max_bounces: int = 2,
    wavelength: float | None = None,
    accelerated: bool = True,
    link_id: str = "",
    shadowing: bool = True,
    footprint: float | None = None,
) -> list[PropagationPath]:
    """Specular paths with 1..max_bounces reflections, sorted by delay.

    Args:
        tx, rx: antenna positions.
        cloud: scene; only wall classes reflect.
        max_bounces: 0..4.
        wavelength: meters (4.65 GHz when omitted).
        accelerated: use pruning for the order-2 search; the result is identical.
        shadowing: attach penetration interactions to every segment.
        footprint: see trace_direct.
    """
    if not 0 <= int(max_bounces) <= MAX_BOUNCES:
        raise DomainError(f"max_bounces must be in [0, {MAX_BOUNCES}]")
    tx = np.asarray(tx, float)
    rx = np.asarray(rx, float)
    if np.array_equal(tx, rx):
        raise DomainError("tx and rx coincide")
    if wavelength is None:
        wavelength = SPEED_OF_LIGHT / 4.65e9
    thr = wavelength / 2.0
    paths = []
    for order in range(1, int(max_bounces) + 1):
        if order <= 2:
            found = _specular_low_order(cloud, tx, rx, thr, order, accelerated)
        else:
            found = _specular_high_order(cloud, tx, rx, thr, order)
        for key, reps, supports in found:
            planes = [(cloud.positions[i], cloud.normals[i]) for i in reps]
            hit = _backtrace(tx, rx, planes)
            if hit is None:
                continue
            pts, length = hit
            info = [(key[j], planes[j][1], supports[j]) for j in range(order)]
            paths.append(_build_path(tx, rx, pts, info, cloud, wavelength, accelerated, length, link_id, shadowing, footprint))
    return sort_paths(paths)


def sort_paths(paths: Iterable[PropagationPath]) -> list[PropagationPath]:
    return sorted(paths, key=lambda p: (p.delay, p.aoa_azimuth, p.signature))


def trace_link(tx, rx, cloud: PointCloud, wavelength: float, max_bounces: int = MAX_BOUNCES, accelerated: bool = True, link_id: str = "") -> list[PropagationPath]:
    """Direct path plus all specular paths for one link."""
    direct = trace_direct(tx, rx, cloud, wavelength, accelerated, link_id)
    refl = find_specular_paths(tx, rx, cloud, max_bounces, wavelength, accelerated, link_id) if max_bounces > 0 else []
    return sort_paths([direct] + refl)


def trace_links(
    links: Sequence[Link],
    cloud: PointCloud,
    wavelength: float,
    max_bounces: int = MAX_BOUNCES,
    workers: int = 1,
    accelerated: bool = True,
) -> list[tuple[str, list[PropagationPath]]]:
    """Trace links concurrently; results keep the input order."""
    # warm shared caches before threads read them
    _reflective(cloud)
    _blocking_mask(cloud)
    if max_bounces >= 3:
        facets(cloud)

    def one(link):
        return link.link_id, trace_link(link.tx, link.rx, cloud, wavelength, max_bounces, accelerated, link.link_id)

    if workers <= 1 or len(links) <= 1:
        return [one(l) for l in links]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(one, links))


def direct_path_of(paths: Sequence[PropagationPath]) -> PropagationPath:
    for p in paths:
        if p.n_bounces == 0:
            return p
    raise LookupError("no direct path in path list")
