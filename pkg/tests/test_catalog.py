import math
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctcsim.catalog import (
    INTERFERENCE_DISTANCES,
    LayoutError,
    TaskNotFoundError,
    classify_variant,
    emit_catalog,
    generate_layout,
    load_catalog,
    lookup_task,
    parse_catalog,
    task_from_document,
    task_to_document,
    validate_spec,
)
from ctcsim.config import ALLY, DEFENSE, ENEMY, PURSUIT
from tests.conftest import make_spec


def test_catalog_has_17_tasks():
    assert len(load_catalog()) == 17


def test_lookup_hea_d2g_rosters():
    spec = lookup_task("HeA_D2G")
    assert Counter(spec.total_allies()) == {"marine": 2, "marauder": 2, "medivac": 2}
    assert Counter(spec.subtasks[0].enemies) == {"marauder": 1, "medivac": 1}
    assert Counter(spec.subtasks[1].enemies) == {"marine": 2, "marauder": 1, "medivac": 1}


def test_lookup_hoa_d4g_rosters():
    spec = lookup_task("HoA_D4G")
    assert Counter(spec.total_allies()) == {"marine": 12}
    assert [len(s.enemies) for s in spec.subtasks] == [1, 2, 4, 5]


def test_lookup_hos_d3g_rosters():
    spec = lookup_task("HoS_D3G")
    assert Counter(spec.total_allies()) == {"marine": 9}
    assert all(Counter(s.enemies) == {"marine": 3} for s in spec.subtasks)


def test_lookup_unknown_lists_names():
    with pytest.raises(TaskNotFoundError) as e:
        lookup_task("NOPE")
    assert "HeA_D2G" in str(e.value)


def test_mixed_tasks_have_pursuit_first_subtask():
    for name in ("HeA_M2G", "HeA_M3G"):
        spec = lookup_task(name)
        assert spec.subtasks[0].kind == PURSUIT
        assert Counter(spec.subtasks[0].enemies) == {"medivac": 1}
        assert all(s.kind == DEFENSE for s in spec.subtasks[1:])


def test_interference_tasks_are_augmented_defense_groups():
    for name in ("HeA_P2G-D1", "HeA_P2G-D2", "HeA_P2G-D3"):
        spec = lookup_task(name)
        assert all(s.kind == DEFENSE for s in spec.subtasks)
        for s in spec.subtasks:
            kinds = Counter(s.enemies)
            assert kinds["medivac"] >= 1
            assert sum(kinds.values()) > kinds["medivac"]


# ---------------------------------------------------------------------------
# classification


def test_classify_examples():
    assert classify_variant(lookup_task("HoS_D2G")) == "HoS"
    assert classify_variant(lookup_task("HeA_M3G")) == "HeA"
    assert classify_variant(lookup_task("HeS_D4G")) == "HeS"
    spec = make_spec([{"marine": 2}, {"marine": 4}])
    assert classify_variant(spec) == "HoA"


def test_classify_counts_across_catalog():
    counts = Counter(classify_variant(s) for s in load_catalog().values())
    assert counts == {"HeA": 8, "HeS": 3, "HoA": 3, "HoS": 3}


# ---------------------------------------------------------------------------
# validation


def test_validate_catalog_all_clean():
    for name, spec in load_catalog().items():
        assert validate_spec(spec) == [], name


def test_validate_roster_asymmetry():
    spec = make_spec([{"marine": 1}, {"marine": 1}], allies=[{"marine": 1}, {"marine": 2}])
    codes = [v.code for v in validate_spec(spec)]
    assert "roster_asymmetry" in codes


def test_validate_interference_distance():
    spec = make_spec(
        [{"marine": 1, "medivac": 1}, {"marine": 1, "medivac": 1}],
        interference="D1",
        distances=(12.0, 12.0),
    )
    codes = [v.code for v in validate_spec(spec)]
    assert "interference_distance" in codes


def test_validate_interference_augmentation():
    spec = make_spec(
        [{"medivac": 1}, {"medivac": 1}], interference="D1", distances=(7.0, 7.0)
    )
    codes = [v.code for v in validate_spec(spec)]
    assert "interference_augmentation" in codes


def test_validate_single_subtask_flagged():
    spec = make_spec([{"marine": 1}])
    codes = [v.code for v in validate_spec(spec)]
    assert codes == ["subtask_count"]


def test_validate_spacing_too_tight():
    spec = make_spec([{"marine": 1}, {"marine": 1}], distances=(10.0, 10.0))
    codes = [v.code for v in validate_spec(spec)]
    assert "spacing" in codes


# ---------------------------------------------------------------------------
# layout


def test_layout_deterministic():
    spec = lookup_task("HoS_D2G")
    a = generate_layout(spec, 7)
    b = generate_layout(spec, 7)
    assert a == b
    c = generate_layout(spec, 8)
    assert a != c


def test_layout_interference_distances_exact():
    for name, expected in [("HeA_P2G-D1", 7.0), ("HeA_P2G-D2", 10.0), ("HeA_P2G-D3", 14.0)]:
        lay = generate_layout(lookup_task(name), 0)
        (x0, y0), (x1, y1) = lay.region_centers
        assert math.hypot(x1 - x0, y1 - y0) == expected
        assert INTERFERENCE_DISTANCES[name[-2:]] == expected


def test_layout_infeasible_map_errors():
    spec = make_spec(
        [{"marine": 1, "medivac": 1}, {"marine": 1, "medivac": 1}],
        interference="D3",
        distances=(14.0, 14.0),
        map_bounds=(10.0, 10.0),
    )
    with pytest.raises(LayoutError):
        generate_layout(spec, 0)


def test_layout_unit_order_and_jitter_radius():
    spec = lookup_task("HeA_D2G")
    lay = generate_layout(spec, 3)
    assert len(lay.spawns) == spec.n_agents + spec.n_enemies
    allies = lay.spawns[: spec.n_agents]
    enemies = lay.spawns[spec.n_agents :]
    assert all(s.allegiance == ALLY for s in allies)
    assert all(s.allegiance == ENEMY for s in enemies)
    for s in enemies:
        cx, cy = lay.region_centers[s.subtask_index]
        assert math.hypot(s.x - cx, s.y - cy) <= 1.5
    for s in allies:
        cx, cy = lay.agent_centers[s.subtask_index]
        assert math.hypot(s.x - cx, s.y - cy) <= 1.5


def test_d3_no_cross_region_spawn_visibility():
    spec = lookup_task("HeA_P2G-D3")
    for seed in range(100):
        lay = generate_layout(spec, seed)
        for u in lay.spawns:
            for v in lay.spawns:
                if u.subtask_index != v.subtask_index:
                    assert math.hypot(u.x - v.x, u.y - v.y) > 9.0


def test_d1_cross_region_enemy_visible_to_some_agent():
    spec = lookup_task("HeA_P2G-D1")
    for seed in range(100):
        lay = generate_layout(spec, seed)
        agents = [s for s in lay.spawns if s.allegiance == ALLY]
        enemies = [s for s in lay.spawns if s.allegiance == ENEMY]
        assert any(
            math.hypot(a.x - e.x, a.y - e.y) <= 9.0
            for a in agents
            for e in enemies
            if a.subtask_index != e.subtask_index
        ), seed


# ---------------------------------------------------------------------------
# file format round trip


def test_shipped_catalog_roundtrips_byte_identical():
    from ctcsim.catalog import _builtin_catalog_path

    text = _builtin_catalog_path().read_text(encoding="utf-8")
    specs = list(parse_catalog(text).values())
    assert emit_catalog(specs) == text


ROSTER = st.fixed_dictionaries(
    {},
    optional={
        "marine": st.integers(1, 3),
        "marauder": st.integers(1, 2),
        "medivac": st.integers(1, 2),
    },
).filter(lambda d: sum(d.values()) > 0)


@settings(max_examples=60, deadline=None)
@given(
    rosters=st.lists(ROSTER, min_size=2, max_size=4),
    kind_bits=st.lists(st.booleans(), min_size=4, max_size=4),
    limit=st.integers(50, 400),
)
def test_document_roundtrip_random_specs(rosters, kind_bits, limit):
    spec = make_spec(
        rosters,
        kinds=[PURSUIT if kind_bits[i] else DEFENSE for i in range(len(rosters))],
        episode_limit=limit,
        name="prop",
    )
    doc = task_to_document(spec)
    assert task_from_document(doc) == spec
    assert task_to_document(task_from_document(doc)) == doc
