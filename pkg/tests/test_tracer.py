import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import plane_cloud, wall_cloud
from o2irt.constants import SPEED_OF_LIGHT
from o2irt.errors import DomainError
from o2irt.scene import ObjectClass, PointCloud, ShoeboxSpec, WallSpec, make_synthetic_scene, shoebox_links
from o2irt.tracer import (
    InteractionKind,
    detect_shadowing,
    find_specular_paths,
    fresnel_radius,
    group_points,
    sort_paths,
    trace_direct,
    trace_link,
    trace_links,
)

LAM4 = SPEED_OF_LIGHT / 4.65e9
LAM14 = SPEED_OF_LIGHT / 14.25e9


def _points(pos, cls=ObjectClass.TREE_CANOPY, oid=0, hint=0.1):
    pos = np.asarray(pos, float)
    return PointCloud(pos, np.tile([0, 0, 1.0], (len(pos), 1)), [oid] * len(pos), [cls.value] * len(pos), hint)


# ------------------------------------------------------------- fresnel radius


def test_fresnel_radius_examples():
    assert fresnel_radius(10, 10, 0.0645) == pytest.approx(math.sqrt(0.0645 * 5), rel=1e-15)
    assert fresnel_radius(10, 10, 0.0645) == pytest.approx(0.568, abs=1e-3)
    assert fresnel_radius(1e-12, 10, 0.0645) < 1e-6
    assert fresnel_radius(3, 7, 0.2) == pytest.approx(math.sqrt(2) * fresnel_radius(3, 7, 0.1), rel=1e-14)
    for bad in ((0, 1, 1), (1, -1, 1), (1, 1, 0)):
        with pytest.raises(DomainError):
            fresnel_radius(*bad)


# ------------------------------------------------------------------ shadowing


def test_point_on_midpoint_gives_full_q():
    cloud = _points([[1.0, 0, 0]])
    (e,) = detect_shadowing((0, 0, 0), (2, 0, 0), cloud, LAM4)
    assert e.d_w == 0.0 and e.q == 1.0 and e.d == 0.0


def test_object_outside_ellipsoid_ignored():
    cloud = _points([[1.0, 2.0, 0]])
    assert detect_shadowing((0, 0, 0), (2, 0, 0), cloud, LAM4) == []


def test_penetration_length_from_projections():
    cloud = _points([[2.0, 0, 0], [2.1, 0.01, 0], [2.4, 0, -0.01]])
    (e,) = detect_shadowing((0, 0, 0), (5, 0, 0), cloud, LAM4)
    assert e.d == 2.4 - 2.0
    assert e.d == pytest.approx(0.4, abs=1e-12)
    assert (e.l_min, e.l_max) == (2.0, 2.4)


def test_q_follows_fresnel_radius():
    off = 0.05
    cloud = _points([[3.0, off, 0]])
    (e,) = detect_shadowing((0, 0, 0), (6, 0, 0), cloud, LAM4)
    r_f = fresnel_radius(3.0, 3.0, LAM4)
    assert e.d_w == pytest.approx(off, abs=1e-15)
    assert e.q == pytest.approx(1 - off / r_f, abs=1e-12)


def test_q_clamped_to_unit_interval():
    # a footprint hit far outside the Fresnel radius would make q negative
    cloud = _points([[0.01, 0.05, 0]])
    (e,) = detect_shadowing((0, 0, 0), (6, 0, 0), cloud, LAM4, footprint=0.1)
    assert e.d_w > fresnel_radius(0.01, 5.99, LAM4)
    assert e.q == 0.0


def test_other_class_never_shadows():
    cloud = _points([[1.0, 0, 0]], cls=ObjectClass.OTHER)
    assert detect_shadowing((0, 0, 0), (2, 0, 0), cloud, LAM4) == []


def test_excluded_objects_skipped():
    cloud = _points([[1.0, 0, 0]], oid=7)
    assert detect_shadowing((0, 0, 0), (2, 0, 0), cloud, LAM4, exclude=[7]) == []


def test_shadowing_domain_errors():
    cloud = _points([[1.0, 0, 0]])
    with pytest.raises(DomainError):
        detect_shadowing((0, 0, 0), (0, 0, 0), cloud, LAM4)
    with pytest.raises(DomainError):
        detect_shadowing((0, 0, 0), (1, 0, 0), cloud, 0.0)


def _random_cloud(seed, n=300):
    rng = np.random.default_rng(seed)
    pos = rng.uniform(-1, 4, (n, 3))
    nrm = rng.normal(size=(n, 3))
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    ids = rng.integers(0, 6, n)
    classes = ["exterior_wall", "interior_wall", "window_triple", "tree_canopy", "window_double", "other"]
    return PointCloud(pos, nrm, ids, [classes[i] for i in ids], 0.1)


segments = st.tuples(st.integers(0, 10_000), *[st.floats(-1, 4)] * 6)


@settings(max_examples=40, deadline=None)
@given(seg=segments, fp=st.sampled_from([0.0, 0.07]))
def test_shadowing_swap_symmetry(seg, fp):
    seed, *xyz = seg
    p1, p2 = tuple(xyz[:3]), tuple(xyz[3:])
    if p1 == p2:
        return
    cloud = _random_cloud(seed)
    a = detect_shadowing(p1, p2, cloud, LAM4, footprint=fp)
    b = detect_shadowing(p2, p1, cloud, LAM4, footprint=fp)
    assert sorted(e.as_tuple() for e in a) == sorted(e.as_tuple() for e in b)


@settings(max_examples=40, deadline=None)
@given(seg=segments, lam=st.floats(0.01, 0.3), scale=st.floats(1.0, 4.0), fp=st.sampled_from([0.0, 0.07]))
def test_larger_wavelength_never_drops_objects(seg, lam, scale, fp):
    seed, *xyz = seg
    p1, p2 = tuple(xyz[:3]), tuple(xyz[3:])
    if p1 == p2:
        return
    cloud = _random_cloud(seed)
    small = {e.object_id for e in detect_shadowing(p1, p2, cloud, lam, footprint=fp)}
    big = {e.object_id for e in detect_shadowing(p1, p2, cloud, lam * scale, footprint=fp)}
    assert small <= big


@settings(max_examples=30, deadline=None)
@given(seg=segments, fp=st.sampled_from([0.0, 0.07]))
def test_shadowing_accelerated_equals_linear(seg, fp):
    seed, *xyz = seg
    p1, p2 = tuple(xyz[:3]), tuple(xyz[3:])
    if p1 == p2:
        return
    cloud = _random_cloud(seed)
    a = detect_shadowing(p1, p2, cloud, LAM14, footprint=fp)
    b = detect_shadowing(p1, p2, cloud, LAM14, accelerated=False, footprint=fp)
    assert a == b


def test_shadowing_reports_an_object_iff_a_point_qualifies():
    cloud = _random_cloud(11, 500)
    p1, p2 = np.array([0.0, 0, 0]), np.array([3.0, 2.5, 1.0])
    thr = LAM4 / 2
    P = cloud.positions
    excess = np.linalg.norm(P - p1, axis=1) + np.linalg.norm(P - p2, axis=1) - np.linalg.norm(p2 - p1)
    want = {int(o) for o, e, c in zip(cloud.object_ids, excess, cloud.class_codes) if e <= thr} - {
        o for o in cloud.object_id_list if cloud.class_of(o) is ObjectClass.OTHER
    }
    got = {e.object_id for e in detect_shadowing(p1, p2, cloud, LAM4)}
    assert got == want


# ----------------------------------------------------------------- direct path


def test_direct_path_in_empty_cloud():
    p = trace_direct((0, 0, 0), (3, 4, 0), PointCloud.empty())
    assert p.interactions == () and p.geometric_length == 5.0
    assert p.delay * SPEED_OF_LIGHT == pytest.approx(5.0, rel=1e-12)
    assert p.n_bounces == 0


def test_direct_path_through_one_wall():
    wall = WallSpec((1, -2, -2), (0, 4, 0), (0, 0, 4), ObjectClass.INTERIOR_WALL)
    cloud = wall_cloud([wall], spacing=0.05)
    p = trace_direct((0, 0, 0), (2, 1, 0), cloud)
    (i,) = p.interactions
    assert i.kind is InteractionKind.INTERIOR_WALL_PENETRATION
    assert i.incidence_angle == pytest.approx(math.acos(2 / math.sqrt(5)), abs=1e-9)


def test_direct_path_through_canopy_window_and_wall(coarse_shoebox):
    p = trace_direct((1, -12, 4), (7, 3, 1.5), coarse_shoebox.cloud)
    kinds = [i.kind for i in p.interactions]
    assert kinds == [
        InteractionKind.CANOPY_PENETRATION,
        InteractionKind.WINDOW_PENETRATION,
        InteractionKind.INTERIOR_WALL_PENETRATION,
    ]
    for i in p.interactions:
        assert 0 <= i.fresnel_scale_q <= 1
    assert p.interactions[0].penetration_length_m > 1.0


def test_coincident_endpoints_rejected():
    with pytest.raises(DomainError):
        trace_direct((1, 1, 1), (1, 1, 1), PointCloud.empty())
    with pytest.raises(DomainError):
        find_specular_paths((1, 1, 1), (1, 1, 1), PointCloud.empty())
    with pytest.raises(DomainError):
        find_specular_paths((0, 0, 0), (1, 1, 1), PointCloud.empty(), max_bounces=5)


# ---------------------------------------------------------------- reflections


def test_plane_mirror():
    cloud = plane_cloud()
    (p,) = find_specular_paths((0, 0, 1), (2, 0, 1), cloud, max_bounces=1)
    (r,) = p.reflections
    assert np.allclose(r.point, (1, 0, 0), atol=1e-9, rtol=0)
    assert p.geometric_length == pytest.approx(2 * math.sqrt(2), abs=1e-9)
    assert r.incidence_angle == pytest.approx(math.pi / 4, abs=1e-9)
    assert r.support > 1


def test_reflection_angles_equal(coarse_shoebox):
    link = coarse_shoebox.config.links[0]
    paths = find_specular_paths(link.tx, link.rx, coarse_shoebox.cloud, max_bounces=2, shadowing=False)
    assert paths
    for p in paths:
        v = [np.asarray(x) for x in p.vertices]
        for k, r in enumerate(p.reflections, start=1):
            inc, out = v[k - 1] - v[k], v[k + 1] - v[k]
            # bisector of incoming and outgoing rays is the surface normal
            bis = inc / np.linalg.norm(inc) + out / np.linalg.norm(out)
            n = bis / np.linalg.norm(bis)
            a_in = math.degrees(math.acos(abs(np.dot(inc, n)) / np.linalg.norm(inc)))
            a_out = math.degrees(math.acos(abs(np.dot(out, n)) / np.linalg.norm(out)))
            assert abs(a_in - a_out) < 0.5
            assert abs(a_in - math.degrees(r.incidence_angle)) < 0.5
        assert p.delay * SPEED_OF_LIGHT == pytest.approx(p.geometric_length, rel=1e-9)


def test_one_path_per_object_sequence(coarse_shoebox):
    link = coarse_shoebox.config.links[1]
    paths = find_specular_paths(link.tx, link.rx, coarse_shoebox.cloud, max_bounces=2)
    seqs = [p.reflection_objects for p in paths]
    assert len(seqs) == len(set(seqs))
    assert all(1 <= len(s) <= 2 for s in seqs)


def test_no_reflector_gives_no_paths():
    cloud = _points([[1.0, 0, 0]], cls=ObjectClass.TREE_CANOPY)
    assert find_specular_paths((0, 0, 1), (2, 0, 1), cloud, max_bounces=2) == []


def test_reflector_does_not_shadow_itself():
    cloud = plane_cloud()
    (p,) = find_specular_paths((0, 0, 0.05), (2, 0, 0.05), cloud, max_bounces=1)
    assert [i.kind for i in p.interactions] == [InteractionKind.REFLECTION]


def _parallel_mirrors(step=0.1, half=3.0):
    lo = plane_cloud(0.0, half, step)
    hi = plane_cloud(3.0, half, step)
    pos = np.vstack([lo.positions, hi.positions])
    nrm = np.vstack([lo.normals, -hi.normals])
    ids = np.r_[np.zeros(len(lo), int), np.ones(len(hi), int)]
    return PointCloud(pos, nrm, ids, ["exterior_wall"] * len(pos), step)


def test_parallel_mirrors_image_lengths():
    cloud = _parallel_mirrors()
    tx, rx = (0, 0, 1.0), (1.5, 0, 2.0)
    paths = find_specular_paths(tx, rx, cloud, max_bounces=3, wavelength=LAM14, shadowing=False)
    got = {p.reflection_objects: p.geometric_length for p in paths}
    # unfolded image heights for each bounce sequence
    want = {
        (0,): math.hypot(1.5, -1 - 2),
        (1,): math.hypot(1.5, 5 - 2),
        (0, 1): math.hypot(1.5, 7 - 2),
        (1, 0): math.hypot(1.5, -5 - 2),
        (0, 1, 0): math.hypot(1.5, -7 - 2),
        (1, 0, 1): math.hypot(1.5, 11 - 2),
    }
    assert set(got) == set(want)
    for k in want:
        assert got[k] == pytest.approx(want[k], abs=1e-9)


def test_accelerated_matches_brute_force():
    # coarse enough that the all-pairs search stays fast
    spec = ShoeboxSpec(spacing=0.6, canopy_spacing=0.6)
    cloud = make_synthetic_scene(spec)
    for link in shoebox_links(spec):
        for lam in (LAM4, LAM14):
            a = find_specular_paths(link.tx, link.rx, cloud, 2, lam, accelerated=True)
            b = find_specular_paths(link.tx, link.rx, cloud, 2, lam, accelerated=False)
            assert any(p.n_bounces == 2 for p in a)
            assert a == b


def test_brute_force_matches_exhaustive_oracle():
    # every point and point pair tested directly, then one path per object sequence
    cloud = _parallel_mirrors(step=0.25, half=1.5)
    tx, rx = np.array([0.3, 0.2, 1.0]), np.array([1.4, -0.1, 2.2])
    thr = LAM4 / 2
    P, N, O = cloud.positions, cloud.normals, cloud.object_ids

    def mirror(x, p, n):
        return x - 2 * np.dot(x - p, n) * n

    want = set()
    for i in range(len(P)):
        img = mirror(tx, P[i], N[i])
        same = np.dot(tx - P[i], N[i]) * np.dot(rx - P[i], N[i]) > 0
        if same and np.linalg.norm(tx - P[i]) + np.linalg.norm(P[i] - rx) - np.linalg.norm(img - rx) <= thr:
            want.add((int(O[i]),))
    for i in range(len(P)):
        I1 = mirror(tx, P[i], N[i])
        for j in range(len(P)):
            if O[i] == O[j]:
                continue
            if not (np.dot(tx - P[i], N[i]) * np.dot(P[j] - P[i], N[i]) > 0):
                continue
            if not (np.dot(I1 - P[j], N[j]) * np.dot(rx - P[j], N[j]) > 0):
                continue
            la = np.linalg.norm(tx - P[i]) + np.linalg.norm(P[i] - P[j]) - np.linalg.norm(I1 - P[j])
            I2 = mirror(I1, P[j], N[j])
            lb = np.linalg.norm(I1 - P[j]) + np.linalg.norm(P[j] - rx) - np.linalg.norm(I2 - rx)
            if la <= thr and lb <= thr:
                want.add((int(O[i]), int(O[j])))
    got = {p.reflection_objects for p in find_specular_paths(tx, rx, cloud, 2, LAM4, accelerated=False, shadowing=False)}
    assert got == want


def test_group_points_splits_by_distance_and_normal():
    pos = np.array([[0, 0, 0], [0.1, 0, 0], [1.0, 0, 0], [1.1, 0, 0]], float)
    nrm = np.array([[0, 0, 1], [0, 0, 1], [0, 0, 1], [0, 1, 0]], float)
    cloud = PointCloud(pos, nrm, [0] * 4, ["exterior_wall"] * 4, 0.1)
    labels = group_points(cloud, np.arange(4))
    assert labels[0] == labels[1]
    assert len(set(labels.tolist())) == 3


# --------------------------------------------------------------- link tracing


def test_trace_link_sorted_and_includes_direct(coarse_shoebox):
    link = coarse_shoebox.config.links[0]
    paths = trace_link(link.tx, link.rx, coarse_shoebox.cloud, LAM4, max_bounces=2, link_id=link.link_id)
    assert paths == sort_paths(paths)
    assert sum(p.n_bounces == 0 for p in paths) == 1
    assert all(p.link_id == link.link_id for p in paths)


def test_workers_do_not_change_results(coarse_shoebox):
    links = coarse_shoebox.config.links
    one = trace_links(links, coarse_shoebox.cloud, LAM14, max_bounces=2, workers=1)
    many = trace_links(links, coarse_shoebox.cloud, LAM14, max_bounces=2, workers=4)
    assert one == many
    assert [k for k, _ in one] == [l.link_id for l in links]
