import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sageicp.taxonomy import (
    DEFAULT_TAXONOMY, N_CODES, ROLE_CRITICAL, ROLE_ORDINARY, ROLE_UNLABELED, ClassGroup,
    ClassTaxonomy, classify, remap_moving, strip_far_labels,
)


@pytest.mark.parametrize("code,group", [
    (40, ClassGroup.ROAD), (44, ClassGroup.ROAD), (48, ClassGroup.ROAD), (49, ClassGroup.ROAD),
    (70, ClassGroup.PLANT), (72, ClassGroup.PLANT),
    (71, ClassGroup.OBJECT), (60, ClassGroup.OBJECT), (80, ClassGroup.OBJECT), (81, ClassGroup.OBJECT),
    (99, ClassGroup.OBJECT), (50, ClassGroup.BUILDING), (51, ClassGroup.BUILDING),
    (10, ClassGroup.VEHICLE), (18, ClassGroup.VEHICLE), (252, ClassGroup.VEHICLE),
    (0, ClassGroup.UNLABELED), (52, ClassGroup.UNLABELED), (30, ClassGroup.UNLABELED),
    (65535, ClassGroup.UNLABELED),
])
def test_classify(code, group):
    assert classify(code) == group


def test_classify_total_over_code_space():
    table = DEFAULT_TAXONOMY.group_table
    assert table.shape == (N_CODES,)
    assert set(np.unique(table)) <= {int(g) for g in ClassGroup}
    for code in range(0, N_CODES, 97):
        assert isinstance(classify(code), ClassGroup)


def test_role_partition():
    t = DEFAULT_TAXONOMY
    roles = t.role_table
    crit = set(np.flatnonzero(roles == ROLE_CRITICAL))
    ordinary = set(np.flatnonzero(roles == ROLE_ORDINARY))
    unlabeled = set(np.flatnonzero(roles == ROLE_UNLABELED))
    assert crit == {71, 60, 80, 81, 99}
    assert unlabeled == {0}
    assert not crit & ordinary and len(crit | ordinary | unlabeled) == N_CODES


def test_landmarks_are_static_and_movers_split():
    t = DEFAULT_TAXONOMY
    assert np.all(t.static_table[list(t.landmark)])
    for c in (10, 13, 18, 20):
        assert t.dynamic_table[c] and not t.static_table[c]
    for c in (30, 31, 32, 11, 15):
        assert t.always_dynamic_table[c] and not t.static_table[c]
    assert t.static_table[0] and t.static_table[40]


def test_overrides_validation():
    assert ClassTaxonomy.from_overrides({"landmark": [40]}).landmark == (40,)
    with pytest.raises(ValueError):
        ClassTaxonomy.from_overrides({"landmark": [10]})
    with pytest.raises(ValueError):
        ClassTaxonomy.from_overrides({"groups": {"nope": [1]}})
    with pytest.raises(ValueError):
        ClassTaxonomy.from_overrides({"groups": {"road": [40], "plant": [40]}})
    t = ClassTaxonomy.from_overrides(DEFAULT_TAXONOMY.to_overrides())
    assert np.array_equal(t.group_table, DEFAULT_TAXONOMY.group_table)


def test_remap_moving():
    out = remap_moving(np.array([252, 253, 254, 255, 256, 257, 258, 259, 40]))
    assert out.tolist() == [10, 31, 30, 32, 16, 13, 18, 20, 40]


def test_strip_examples():
    pts = np.array([[10.0, 0, 0], [60.0, 0, 0]])
    out = strip_far_labels(pts, np.array([40, 40]))
    assert out.tolist() == [40, 0]
    assert len(strip_far_labels(np.zeros((0, 3)), np.zeros(0, int))) == 0


def test_strip_uses_3d_norm():
    out = strip_far_labels(np.array([[40.0, 0.0, 40.0]]), np.array([40]))
    assert out.tolist() == [0]


@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100), st.floats(-20, 20)),
                min_size=0, max_size=40),
       st.floats(1, 80), st.floats(0, 50))
def test_strip_monotone_and_non_destructive(pts, r, extra):
    pts = np.array(pts, dtype=float).reshape(-1, 3)
    labs = np.full(len(pts), 40)
    before = pts.copy()
    near = strip_far_labels(pts, labs, r)
    far = strip_far_labels(pts, labs, r + extra)
    assert np.array_equal(pts, before) and len(near) == len(pts)
    assert np.all((near == 0) >= (far == 0))
