import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from immerse.scenegraph import (
    Behavior,
    CycleDetected,
    DuplicateConnection,
    DuplicateName,
    Node,
    NodeKind,
    NotFound,
    ReentrantSignal,
    SceneTree,
    Timer,
    UnknownSignal,
)
from immerse.transform import Transform


class Recorder(Behavior):
    def __init__(self, log):
        self.log = log

    def ready(self):
        self.log.append(("ready", self.node.name))

    def process(self, dt):
        self.log.append(("process", self.node.name))

    def on_timeout(self):
        self.log.append(("timeout", self.node.name))

    def on_event(self, *args):
        self.log.append(("event", self.node.name) + args)


def player_rig():
    tree = SceneTree()
    player = tree.root.add_child(Node("Player"))
    origin = player.add_child(Node("PlayerOrigin", NodeKind.ORIGIN))
    ctrl = origin.add_child(Node("LeftFootController", NodeKind.CONTROLLER))
    area = ctrl.add_child(Node("LeftFootArea", NodeKind.AREA))
    return tree, player, area


def test_paths_resolve():
    tree, player, area = player_rig()
    assert player.path == "/Player"
    assert player.get_node("PlayerOrigin/LeftFootController/LeftFootArea") is area
    assert player.get_node("") is player
    assert area.get_node("/Player") is player


def test_dotdot_path():
    tree = SceneTree()
    env = tree.root.add_child(Node("Environment"))
    upper = env.add_child(Node("UpperFloor1"))
    plate = tree.root.add_child(Node("Footplate"))
    assert plate.get_node("../Environment/UpperFloor1") is upper


def test_not_found_names_segment():
    tree, player, _ = player_rig()
    with pytest.raises(NotFound) as e:
        player.get_node("PlayerOrigin/Nope/LeftFootArea")
    assert "Nope" in str(e.value)


def test_duplicate_and_cycle():
    tree, player, area = player_rig()
    ctrl = area.parent
    with pytest.raises(DuplicateName):
        ctrl.add_child(Node("LeftFootArea", NodeKind.AREA))
    detached = Node("Loose")
    child = detached.add_child(Node("Inner"))
    with pytest.raises(CycleDetected):
        child.add_child(detached)


def test_global_transform_composition():
    tree = SceneTree()
    a = tree.root.add_child(Node("A", local=Transform((1, 2, 3))))
    assert a.global_transform().position == (1, 2, 3)
    p = tree.root.add_child(Node("P", local=Transform((1, 0, 0))))
    c = p.add_child(Node("C", local=Transform((0, 1, 0))))
    assert c.global_transform().position == (1, 1, 0)
    p.local = Transform.from_axis_angle((0, 0, 0), (0, 1, 0), math.pi / 2)
    c.local = Transform((1, 0, 0))
    g = c.global_transform().position
    assert all(abs(x - y) <= 1e-9 for x, y in zip(g, (0, 0, -1)))


def test_set_translation_keeps_orientation_and_invalidates_children():
    tree = SceneTree()
    q = Transform.from_axis_angle((0, 0, 0), (0, 0, 1), 0.3)
    p = tree.root.add_child(Node("P", local=q))
    c = p.add_child(Node("C", local=Transform((1, 0, 0))))
    before = c.global_transform()
    p.set_translation((1.7, 0, 0.8))
    assert p.local.position == (1.7, 0.0, 0.8)
    assert p.local.orientation == q.orientation
    assert c.global_transform().position != before.position
    g = c.global_transform()
    p.set_translation((1.7, 0, 0.8))
    assert c.global_transform() is g


@settings(max_examples=50)
@given(st.lists(st.integers(0, 30), min_size=1, max_size=30))
def test_path_round_trip(parents):
    tree = SceneTree()
    nodes = [tree.root]
    for i, p in enumerate(parents):
        nodes.append(nodes[p % len(nodes)].add_child(Node(f"n{i}")))
    for n in nodes:
        assert tree.root.get_node(n.path) is n


def test_signals_deliver_in_subscription_order():
    log = []
    src = Node("Area", NodeKind.AREA)
    a, b = Node("A"), Node("B")
    a.attach(Recorder(log))
    b.attach(Recorder(log))
    src.connect("body_entered", b, "on_event")
    src.connect("body_entered", a, "on_event", binds=("x",))
    src.emit("body_entered", "floor")
    assert log == [("event", "B", "floor"), ("event", "A", "floor", "x")]
    with pytest.raises(DuplicateConnection):
        src.connect("body_entered", a, "on_event")
    with pytest.raises(UnknownSignal):
        src.connect("timeout", a, "on_event")
    src.disconnect("body_entered", b, "on_event")
    assert not src.is_connected("body_entered", b, "on_event")


def test_reentrant_emit_is_rejected():
    src = Node("Area", NodeKind.AREA)

    class Loop(Behavior):
        def again(self, *_):
            src.emit("area_entered", None)

    tgt = Node("T", behavior=Loop())
    src.connect("area_entered", tgt, "again")
    with pytest.raises(ReentrantSignal):
        src.emit("area_entered", None)


def test_timer_fires_on_tick_45():
    tree = SceneTree()
    log = []
    t = tree.root.add_child(Node("Timer", NodeKind.TIMER))
    t.timer = Timer(0.5, autostart=True)
    owner = tree.root.add_child(Node("Owner", behavior=Recorder(log)))
    t.connect("timeout", owner, "on_timeout")
    fired = []
    for tick in range(1, 200):
        n = len(log)
        tree.tick_callbacks(1 / 90)
        if any(e[0] == "timeout" for e in log[n:]):
            fired.append(tick)
    assert fired[:4] == [45, 90, 135, 180]


def test_one_shot_timer():
    tm = Timer(0.1, one_shot=True)
    tm.start()
    hits = [tm.countdown(1 / 90) for _ in range(30)]
    assert hits.count(True) == 1 and hits.index(True) == 8
    assert not tm.running


def test_ready_once_then_process_in_preorder():
    tree = SceneTree()
    log = []
    a = tree.root.add_child(Node("A", behavior=Recorder(log)))
    a.add_child(Node("A1", behavior=Recorder(log)))
    tree.root.add_child(Node("B", behavior=Recorder(log)))
    tree.root.add_child(Node("Plain"))
    for _ in range(3):
        tree.tick_callbacks(1 / 90)
    readies = [e for e in log if e[0] == "ready"]
    assert readies == [("ready", "A"), ("ready", "A1"), ("ready", "B")]
    assert log[3:6] == [("process", "A"), ("process", "A1"), ("process", "B")]
    assert len(log) == 3 + 3 * 3


def test_callback_sequence_is_deterministic():
    def run():
        tree = SceneTree()
        log = []
        for i in range(5):
            n = tree.root.add_child(Node(f"N{i}", behavior=Recorder(log)))
            n.add_child(Node(f"C{i}", behavior=Recorder(log)))
        for _ in range(4):
            tree.tick_callbacks(1 / 90)
        return log

    assert run() == run()


def test_nodes_added_later_get_ready_once():
    tree = SceneTree()
    log = []
    tree.tick_callbacks(1 / 90)
    tree.root.add_child(Node("Late", behavior=Recorder(log)))
    tree.tick_callbacks(1 / 90)
    tree.tick_callbacks(1 / 90)
    assert log.count(("ready", "Late")) == 1
