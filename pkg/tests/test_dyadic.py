"""dyadic cube 기하."""

import numpy as np
import pytest

from scripts.mfa.dyadic import (
    CubeBox,
    DyadicCube,
    children,
    clamp_unit,
    cube_containing,
    cube_slices,
    level_cubes,
    neighborhood_cubes,
    pattern_point,
)
from scripts.mfa.errors import DomainError


def test_cube_containing_floor_index():
    assert cube_containing([0.3], 2) == DyadicCube(2, (1,))
    assert cube_containing([0.5, 0.75], 2) == DyadicCube(2, (2, 3))
    assert cube_containing([0.0], 0) == DyadicCube(0, (0,))


@pytest.mark.parametrize("x", [[1.0], [-0.1], [float("nan")]])
def test_cube_containing_rejects_outside(x):
    with pytest.raises(DomainError):
        cube_containing(x, 3)


def test_clamp_unit():
    assert clamp_unit(1.0, 10) == 1.0 - 2.0**-10
    assert clamp_unit(0.25, 10) == 0.25
    assert cube_containing([clamp_unit(1.0, 10)], 10).index == (1023,)


def test_cube_rejects_bad_index():
    with pytest.raises(DomainError):
        DyadicCube(2, (4,))
    with pytest.raises(DomainError):
        DyadicCube(-1, (0,))


def test_children_lexicographic():
    assert children(DyadicCube(1, (1,))) == [DyadicCube(2, (2,)), DyadicCube(2, (3,))]
    kids = children(DyadicCube(1, (0, 1)))
    assert [c.index for c in kids] == [(0, 2), (0, 3), (1, 2), (1, 3)]


def test_neighborhood_truncated_at_boundary():
    assert [c.index for c in neighborhood_cubes(DyadicCube(2, (0,)))] == [(0,), (1,)]
    assert len(neighborhood_cubes(DyadicCube(3, (3, 4)))) == 9
    assert len(neighborhood_cubes(DyadicCube(3, (0, 7)))) == 4
    assert len(neighborhood_cubes(DyadicCube(3, (3,)), 5)) == 5


def test_neighborhood_factor_must_be_odd():
    with pytest.raises(DomainError):
        neighborhood_cubes(DyadicCube(2, (1,)), 2)


def test_cube_box_bounds_clipped():
    lo, hi = CubeBox(DyadicCube(2, (0,)), 3).bounds()
    assert lo[0] == 0.0
    assert hi[0] == pytest.approx(0.125 + 0.375)
    assert len(CubeBox(DyadicCube(2, (1,)), 3).cubes()) == 3


def test_contains_half_open():
    cube = DyadicCube(2, (1,))
    assert cube.contains([0.25])
    assert not cube.contains([0.5])
    np.testing.assert_allclose(cube.center, [0.375])


def test_level_cubes_and_slices():
    cubes = list(level_cubes(2, 1))
    assert len(cubes) == 4
    assert cubes[0].index == (0, 0) and cubes[-1].index == (1, 1)
    assert cube_slices(DyadicCube(1, (1,)), 3) == (slice(4, 8),)
    with pytest.raises(DomainError):
        cube_slices(DyadicCube(3, (1,)), 2)


def test_text_form():
    cube = DyadicCube(5, (3, 17))
    assert cube.to_text() == "5:3,17"
    assert DyadicCube.from_text("5:3,17") == cube
    with pytest.raises(DomainError):
        DyadicCube.from_text("five")


def test_pattern_point_digits():
    assert pattern_point("01", 4) == pytest.approx(0.3125)
    assert pattern_point("0", 10) == 0.0
    assert pattern_point("1", 5) == 1.0 - 2.0**-5
    # 각 레벨 큐브의 마지막 자릿수가 패턴을 따른다
    x = pattern_point("0111", 16)
    bits = [cube_containing([x], j).index[0] & 1 for j in range(1, 9)]
    assert bits == [0, 1, 1, 1, 0, 1, 1, 1]


@pytest.mark.parametrize("pattern", ["", "012", "ab"])
def test_pattern_point_rejects_non_binary(pattern):
    with pytest.raises(DomainError):
        pattern_point(pattern, 4)
