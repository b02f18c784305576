import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import characteristic_matrix, fresnel_interface
from o2irt.errors import ConfigError, DomainError, ValidationError
from o2irt.scene import DEFAULT_MATERIALS, Layer, LayerStack, MaterialTable, StackRole, default_stacks
from o2irt.slab_em import (
    FilmParameters,
    Polarization,
    apply_films,
    conductive_film_layer,
    loss_curve,
    max_swing_db,
    nm_to_m,
    penetration_loss_db,
    reflection_loss_db,
    slab_coefficients,
    with_film,
)

F4, F14 = 4.65e9, 14.25e9
STACKS = default_stacks()
TRIPLE = STACKS[StackRole.WINDOW_TRIPLE]
DOUBLE = STACKS[StackRole.WINDOW_DOUBLE]

# Power-averaged penetration loss (dB) from the characteristic-matrix oracle in
# tests/oracles.py, frozen. Keys: (role, band, degrees).
FROZEN = {
    (StackRole.WINDOW_TRIPLE, F4, 0): 39.7637794887857,
    (StackRole.WINDOW_TRIPLE, F4, 30): 47.31142529199634,
    (StackRole.WINDOW_TRIPLE, F4, 60): 38.72627075292664,
    (StackRole.WINDOW_TRIPLE, F14, 0): 31.667968852888894,
    (StackRole.WINDOW_TRIPLE, F14, 30): 38.314235139718704,
    (StackRole.WINDOW_TRIPLE, F14, 60): 38.28399217140568,
    (StackRole.WINDOW_DOUBLE, F4, 0): 60.401642908001676,
    (StackRole.WINDOW_DOUBLE, F14, 0): 58.84988568214262,
    (StackRole.INTERIOR_WALL, F4, 0): 3.3226209508774787,
    (StackRole.INTERIOR_WALL, F4, 30): 1.0056875050119436,
    (StackRole.INTERIOR_WALL, F4, 60): 3.0484449751581173,
    (StackRole.INTERIOR_WALL, F14, 0): 2.5558253863099836,
    (StackRole.INTERIOR_WALL, F14, 30): 2.1674668614072177,
    (StackRole.INTERIOR_WALL, F14, 60): 3.9381584953745676,
    (StackRole.EXTERIOR_SOLID, F4, 0): 26.25251131759411,
    (StackRole.EXTERIOR_SOLID, F14, 0): 60.542716760909514,
}


def _oracle_loss(stack, angle, f, materials=DEFAULT_MATERIALS):
    eps = [materials.permittivity(l.material, f) for l in stack.layers]
    d = [l.thickness_m for l in stack.layers]
    t = [characteristic_matrix(eps, d, angle, f, p)[1] for p in ("TE", "TM")]
    return -10 * math.log10(sum(t) / 2)


@pytest.mark.parametrize("key", sorted(FROZEN, key=str))
def test_frozen_losses(key):
    role, f, deg = key
    assert penetration_loss_db(STACKS[role], math.radians(deg), f) == pytest.approx(FROZEN[key], abs=1e-9)


@pytest.mark.parametrize("role", list(StackRole))
@pytest.mark.parametrize("f", [F4, F14])
def test_matches_characteristic_matrix(role, f):
    for deg in (0, 15, 45, 75, 85):
        a = math.radians(deg)
        assert penetration_loss_db(STACKS[role], a, f) == pytest.approx(_oracle_loss(STACKS[role], a, f), abs=1e-8)


def test_empty_stack_is_transparent():
    c = slab_coefficients(LayerStack(()), 0.7, F4)
    for p in Polarization:
        assert c.reflection[p] == 0
        assert c.transmission[p] == pytest.approx(1, abs=1e-15)
    assert penetration_loss_db(LayerStack(()), 0.3, F14) == pytest.approx(0, abs=1e-12)


def test_thick_slab_fresnel_limit():
    eps = 6.27 + 0j
    lossless = MaterialTable({"glass": {F4: eps}})
    c = slab_coefficients(LayerStack((Layer("glass", 10.0),)), 0.0, F4, materials=lossless)
    # lossless slab keeps ringing, so take the lossy one for the limit below
    assert abs(c.reflection[Polarization.TE]) <= 1
    want = (1 - math.sqrt(6.27)) / (1 + math.sqrt(6.27))
    assert want == pytest.approx(-0.42922322386725503, abs=1e-15)
    assert fresnel_interface(eps, 0.0, "TE").real == pytest.approx(want, abs=1e-15)

    lossy = LayerStack((Layer("glass", 10.0),))
    c = slab_coefficients(lossy, 0.0, F4)
    r_te = c.reflection[Polarization.TE]
    assert r_te == pytest.approx(-0.4292547244426999 - 0.0032523043719096573j, abs=1e-6)
    assert abs(r_te - want) < 0.005


@pytest.mark.parametrize("deg", [0, 20, 45, 70, 85])
@pytest.mark.parametrize("pol", ["TE", "TM"])
def test_thick_slab_matches_interface_at_angle(deg, pol):
    a = math.radians(deg)
    c = slab_coefficients(LayerStack((Layer("glass", 10.0),)), a, F14, pol)
    want = fresnel_interface(6.27 + 0.13j, a, pol)
    assert abs(c.reflection[Polarization(pol)] - want) < 1e-6


def _lossless_stack(draw):
    n = draw(st.integers(1, 5))
    layers, table = [], {}
    for i in range(n):
        name = f"m{i}"
        table[name] = {1e9: complex(draw(st.floats(1.0, 12.0)))}
        layers.append(Layer(name, draw(st.floats(1e-4, 0.3))))
    return LayerStack(tuple(layers)), table


@st.composite
def lossless_cases(draw):
    stack, table = _lossless_stack(draw)
    f = draw(st.floats(0.5e9, 40e9))
    table = {k: {f: v[1e9]} for k, v in table.items()}
    return stack, MaterialTable(table), draw(st.floats(0, 1.55)), f


@settings(max_examples=300, deadline=None)
@given(case=lossless_cases())
def test_energy_conservation(case):
    stack, table, a, f = case
    c = slab_coefficients(stack, a, f, materials=table)
    for p in Polarization:
        assert abs(abs(c.reflection[p]) ** 2 + abs(c.transmission[p]) ** 2 - 1) < 1e-9


@settings(max_examples=100, deadline=None)
@given(case=lossless_cases())
def test_reciprocity_and_passivity(case):
    stack, table, a, f = case
    names = {l.material for l in stack.layers}
    lossy = MaterialTable({k: {f: table.permittivity(k, f) + 0.3j} for k in names})
    for tab in (table, lossy):
        fw = slab_coefficients(stack, a, f, materials=tab)
        bw = slab_coefficients(stack.reversed(), a, f, materials=tab)
        for p in Polarization:
            assert abs(fw.transmission[p]) == pytest.approx(abs(bw.transmission[p]), abs=1e-9)
            assert abs(fw.reflection[p]) <= 1 + 1e-12
            assert abs(fw.transmission[p]) <= 1 + 1e-9


def test_splitting_a_layer_changes_nothing():
    whole = LayerStack((Layer("glass", 0.011), Layer("air", 0.1), Layer("concrete", 0.2)))
    split = LayerStack((Layer("glass", 0.004), Layer("glass", 0.007), Layer("air", 0.1), Layer("concrete", 0.2)))
    for f in (F4, F14):
        a = slab_coefficients(whole, 0.4, f)
        b = slab_coefficients(split, 0.4, f)
        for p in Polarization:
            assert abs(a.reflection[p] - b.reflection[p]) < 1e-9
            assert abs(a.transmission[p] - b.transmission[p]) < 1e-9


def test_zero_film_is_exact_noop():
    bare = TRIPLE.without_films()
    zero = with_film(TRIPLE, 0.0)
    for f in (F4, F14):
        a = slab_coefficients(bare, 0.5, f)
        b = slab_coefficients(zero, 0.5, f)
        assert a.reflection == b.reflection and a.transmission == b.transmission


def test_thin_film_limit():
    # the film acts as a conducting sheet, so the change shrinks linearly with thickness
    bare = TRIPLE.without_films()
    for f in (F4, F14):
        a = slab_coefficients(bare, 0.5, f)
        for p in Polarization:
            errs = []
            for t in (1e-12, 1e-13, 1e-14):
                b = slab_coefficients(with_film(TRIPLE, t), 0.5, f)
                errs.append(abs(a.transmission[p] - b.transmission[p]) / abs(a.transmission[p]))
            assert errs[0] < 0.03
            assert errs[1] == pytest.approx(errs[0] / 10, rel=0.05)
            assert errs[2] == pytest.approx(errs[1] / 10, rel=0.05)


def test_thicker_film_loses_more():
    glass = LayerStack((Layer("glass", 0.004), Layer("metal", 5e-9, film=True), Layer("glass", 0.004)))
    assert penetration_loss_db(glass.with_film_thickness(40e-9), 0.0, F4) > penetration_loss_db(glass, 0.0, F4)


def test_film_raises_triple_loss_by_several_db():
    bare = TRIPLE.without_films()
    for f in (F4, F14):
        assert penetration_loss_db(TRIPLE, 0.0, f) - penetration_loss_db(bare, 0.0, f) > 5


def test_interior_wall_similar_across_bands():
    wall = STACKS[StackRole.INTERIOR_WALL]
    assert abs(penetration_loss_db(wall, 0.0, F4) - penetration_loss_db(wall, 0.0, F14)) < 3


def test_triple_swing_character():
    # large oscillation at 14.25 GHz, none at 4.65 GHz
    ang = np.arange(0, 89.01, 0.05)
    hi = loss_curve(TRIPLE, ang, F14)["avg"]
    lo = loss_curve(TRIPLE, ang, F4)["avg"]
    assert max_swing_db(ang, hi, 2.0, 30, 70) >= 15
    assert max_swing_db(ang, lo, 2.0, 0, 70) <= 5


def test_loss_curve_polarizations_average():
    ang = [0, 30, 60]
    c = loss_curve(TRIPLE, ang, F14)
    te, tm = 10 ** (-c["TE"] / 10), 10 ** (-c["TM"] / 10)
    assert np.allclose(c["avg"], -10 * np.log10((te + tm) / 2))
    assert c["TE"][0] == pytest.approx(c["TM"][0], abs=1e-9)  # normal incidence


def test_losses_nonnegative():
    for stack in STACKS.values():
        for f in (F4, F14):
            assert np.all(loss_curve(stack, np.arange(0, 89, 1.0), f)["avg"] >= -1e-12)
            assert reflection_loss_db(stack, 0.3, f) >= 0


@pytest.mark.parametrize("angle", [-0.1, math.pi / 2, 2.0, float("nan")])
def test_angle_domain(angle):
    with pytest.raises(DomainError):
        slab_coefficients(TRIPLE, angle, F4)


def test_unknown_band_and_bad_frequency():
    with pytest.raises(ConfigError):
        slab_coefficients(TRIPLE, 0.1, 28e9)
    with pytest.raises(DomainError):
        slab_coefficients(TRIPLE, 0.1, 0.0)


def test_array_angles_match_scalar():
    a = np.radians([0, 10, 50])
    c = slab_coefficients(TRIPLE, a, F14, "TM")
    for i, x in enumerate(a):
        s = slab_coefficients(TRIPLE, float(x), F14, "TM")
        assert c.transmission[Polarization.TM][i] == pytest.approx(s.transmission[Polarization.TM], rel=1e-12)


def test_film_layer_and_parameters():
    assert conductive_film_layer(5e-9, F4) == Layer("metal", 5e-9, film=True)
    with pytest.raises(ValidationError):
        conductive_film_layer(-1e-9, F4)
    with pytest.raises(ConfigError):
        conductive_film_layer(1e-9, 28e9)
    with pytest.raises(ValidationError):
        FilmParameters(-1.0, 0.0)
    fp = FilmParameters.from_nm(7, 30)
    assert fp.triple_glass_film_thickness == nm_to_m(7)
    out = apply_films(STACKS, fp)
    assert [l.thickness_m for l in out[StackRole.WINDOW_DOUBLE].layers if l.film] == [nm_to_m(30)]
    assert out[StackRole.INTERIOR_WALL] is STACKS[StackRole.INTERIOR_WALL]


def test_with_film_inserts_when_missing():
    s = with_film(LayerStack((Layer("glass", 0.004), Layer("glass", 0.004))), 1e-9)
    assert [l.film for l in s.layers] == [False, True, False]


def test_max_swing_window():
    ang = np.array([0.0, 1.0, 2.0, 3.0, 10.0])
    y = np.array([0.0, 5.0, 1.0, 9.0, -20.0])
    assert max_swing_db(ang, y, 2.0) == 8.0
    assert max_swing_db(ang, y, 2.0, hi=2.0) == 5.0
