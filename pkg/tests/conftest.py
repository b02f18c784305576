import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from o2irt.scene import ObjectClass, PointCloud, Scene, SceneConfig, SceneSpec, ShoeboxSpec, make_synthetic_scene, shoebox_links


@pytest.fixture(scope="session")
def coarse_shoebox():
    """Shoebox at 0.2 m spacing with its three default links."""
    spec = ShoeboxSpec(spacing=0.2)
    return Scene(make_synthetic_scene(spec), SceneConfig(links=shoebox_links(spec)))


def plane_cloud(z=0.0, half=2.0, step=0.1, object_class=ObjectClass.EXTERIOR_WALL):
    """Square patch in the plane z = ``z`` with +z normals, centered on (1, 0)."""
    n = int(round(2 * half / step)) + 1
    xs = 1.0 + np.linspace(-half, half, n)
    ys = np.linspace(-half, half, n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pos = np.stack([X.ravel(), Y.ravel(), np.full(X.size, z)], axis=1)
    nrm = np.tile([0.0, 0.0, 1.0], (len(pos), 1))
    return PointCloud(pos, nrm, np.zeros(len(pos), dtype=int), [object_class.value] * len(pos), step)


def wall_cloud(walls, spacing=0.1, canopies=()):
    """Cloud from WallSpec/CanopySpec lists, one object per entry."""
    return make_synthetic_scene(SceneSpec(tuple(walls), tuple(canopies), spacing=spacing, canopy_spacing=spacing, resolution_hint=spacing))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
