import pytest

from edgecolor_lab.instance import (
    InfeasiblePinning,
    Instance,
    Pinning,
    StructuralError,
    apply_pinning,
    complete_tree,
    instance_from_dict,
    load_instance,
    dump_instance,
    random_lists,
    split_edge,
    tree_from_parents,
    validate,
)


def test_tree_from_parents_layout():
    T = tree_from_parents([0, 0, 1], 4)
    assert T.vertices == ("v0", "v1", "v2", "v3")
    assert T.ends["e2"] == ("v1", "v3")
    assert T.root == "v0"
    assert T.broom("v0") == ("e0", "e1")
    assert T.edge_degree("e0") == 2


def test_beta_is_min_list_slack():
    T = tree_from_parents([0, 0, 1], 6)
    assert validate(T).beta == 4
    assert validate(T).per_edge_slack == {"e0": 4, "e1": 5, "e2": 5}


def test_dangling_edge_rejected():
    with pytest.raises(StructuralError):
        Instance(3, ("a",), (("e", ("a", "b")),), {"e": (1,)})


def test_colour_outside_palette_rejected():
    with pytest.raises(StructuralError):
        Instance(2, ("a", "b"), (("e", ("a", "b")),), {"e": (1, 3)})


def test_parallel_edges_rejected_by_validate():
    inst = Instance(3, ("a", "b"), (("e", ("a", "b")), ("f", ("b", "a"))), {"e": (1,), "f": (2,)})
    with pytest.raises(StructuralError):
        validate(inst)


def test_pinning_conflict_detected(path3):
    with pytest.raises(InfeasiblePinning):
        Pinning.on(path3, {"e0": 1, "e1": 1})
    with pytest.raises(InfeasiblePinning):
        Pinning.on(path3, {"e0": 4})


def test_apply_pinning_strikes_neighbour_colours(path3):
    red = apply_pinning(path3, Pinning({"e1": 2}))
    assert red.edge_ids == ("e0", "e2")
    assert red.lists == {"e0": (1, 3), "e2": (1, 3)}


def test_split_edge_creates_two_pendants(path3):
    inst, e1, e2 = split_edge(path3, "e1")
    assert len(inst.edge_ids) == 4
    assert inst.degree(inst.ends[e1][1]) == 1
    assert inst.lists[e1] == inst.lists[e2] == (1, 2, 3)


def test_json_round_trip(tmp_path, path3):
    pin = Pinning({"e0": 2})
    target = tmp_path / "p.json"
    dump_instance(path3, target, pin)
    back, back_pin = load_instance(target)
    assert back == path3
    assert back_pin.assignments == {"e0": 2}


def test_unknown_keys_rejected():
    with pytest.raises(StructuralError):
        instance_from_dict({"q": 2, "vertices": ["a"], "edges": [], "colour": 1})


def test_random_lists_hit_requested_beta(rng):
    T = complete_tree(2, 3, 12)
    R = random_lists(rng, T, 5)
    assert validate(R).beta == 5
