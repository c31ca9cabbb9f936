import math

import pytest

from conftest import demo_docs, demo_paths, scene_world
from immerse import load_world, parse_scenario
from immerse.experience import (
    BridgeController,
    FootplateController,
    InvalidEndpoint,
    PlatformState,
    PlayerController,
    SceneMissingNode,
    bridge_board_entered,
    player_foot_entered,
    teleport,
)
from immerse.scenegraph import Node

DT = 1 / 90


def footplate_scene(upper_y=3.0, force=90, extra=""):
    return f"""
node Spatial "Environment"
node StaticBody "BottomFloor" under Environment layer=1 mask=2 pos=0,-0.1,0 shape=box 5,0.1,5
node StaticBody "UpperFloor1" under Environment layer=1 mask=2 pos=0,{upper_y},-2.8 shape=box 5,0.3,2.2
node StaticBody "Button" under Environment layer=1 mask=2 pos=0.8,1,3 shape=box 0.05,0.05,0.05
node KinematicBody "Footplate" layer=1 mask=2 pos=0,0,3 shape=box 0.6,0.05,0.6 behavior=footplate force={force} {extra}
node Timer "Timer" under Footplate period=0.5
node Mesh "AreaMesh" under Footplate
node Spatial "Player"
node Origin "PlayerOrigin" under Player
node Camera "PlayerCamera" under Player/PlayerOrigin pos=0,1.7,0
"""


def plate(world) -> FootplateController:
    return world.get_node("Footplate").behavior


def records(world, kind):
    return [r for r in world.records if r.kind == kind]


# -- footplate ------------------------------------------------------------


@pytest.mark.parametrize("y, stopping", [(3.0, 3), (2.7, 2)])
def test_stopping_truncates(y, stopping):
    w = scene_world(footplate_scene(y))
    w.step()
    assert plate(w).stopping == stopping


def test_missing_upper_floor():
    text = footplate_scene().replace('"UpperFloor1"', '"Attic"')
    w = scene_world(text)
    with pytest.raises(SceneMissingNode):
        w.step()


def test_ready_opens_port():
    w = scene_world(footplate_scene())
    w.step()
    assert plate(w).port.baud == 9600 and plate(w).port.capacity == 1000


def test_idle_tick_is_noop():
    w = scene_world(footplate_scene())
    w.run(60)
    assert plate(w).state is PlatformState.IDLE
    assert w.get_node("Footplate").global_transform().position == (0, 0, 3)
    assert records(w, "SerialTx") == []


def test_marker_blinks_until_press():
    w = scene_world(footplate_scene())
    marker = w.get_node("Footplate/AreaMesh")
    seen = []
    for _ in range(100):
        w.step()
        seen.append(marker.visible)
    flips = [i + 1 for i in range(1, 100) if seen[i] != seen[i - 1]]
    assert flips == [45, 90]
    w.press("Environment/Button")
    assert marker.visible is False
    w.run(100)
    assert marker.visible is False


def test_press_starts_rise_and_motors():
    w = scene_world(footplate_scene())
    w.run(99)
    w.step()
    w.press("Environment/Button")
    assert w.get_node("Player").translation == (1.7, 0, 0.8)
    assert w.get_node("Player/PlayerOrigin").translation == (-1.7, 0, -0.8)
    assert w.get_node("Player/PlayerOrigin/PlayerCamera").translation == (-1.7, 0, -0.8)
    assert plate(w).state is PlatformState.RISING
    w.step()
    high = records(w, "PinChange")
    assert high and high[0].get("level") == "HIGH" and high[0].tick <= 101


def test_second_press_is_ignored():
    w = scene_world(footplate_scene())
    w.step()
    w.press("Environment/Button")
    w.run(5)
    w.press("Environment/Button")
    w.run(5)
    assert [r.get("byte") for r in records(w, "SerialTx")] == ["0x68"]
    warn = records(w, "Warning")
    assert warn[-1].get("reason") == "press_ignored" and warn[-1].get("state") == "Rising"


@pytest.mark.parametrize("force", [90, 45, 200])
def test_rise_stops_within_one_step(force):
    w = scene_world(footplate_scene(force=force))
    w.step()
    w.press("Environment/Button")
    ys = []
    for _ in range(1000):
        w.step()
        ys.append(w.get_node("Footplate").global_transform().position[1])
        if plate(w).state is PlatformState.ARRIVED:
            break
    y = ys[-1]
    assert 3.3 <= y <= 3.3 + force * DT * DT + 1e-9
    assert all(v < 3.3 for v in ys[:-1])
    w.run(50)
    assert w.get_node("Footplate").global_transform().position[1] == y
    assert bytes(w.serial.ports["virt0"].sent) == b"hl"
    assert [r.get("level") for r in records(w, "PinChange")] == ["HIGH", "LOW"]


def test_rider_is_carried():
    w = scene_world(footplate_scene())
    w.step()
    w.press("Environment/Button")
    w.run(400)
    y_plate = w.get_node("Footplate").global_transform().position[1]
    assert math.isclose(w.get_node("Player").global_transform().position[1], y_plate, abs_tol=1e-9)
    w2 = scene_world(footplate_scene(extra="rider=none"))
    w2.step()
    w2.press("Environment/Button")
    w2.run(400)
    assert w2.get_node("Player").global_transform().position[1] == 0


def test_unknown_behavior_param():
    from immerse.sceneio import SemanticError

    with pytest.raises(SemanticError):
        scene_world(footplate_scene(extra="speed=3"))


# -- player ---------------------------------------------------------------


@pytest.fixture
def demo_ready():
    scene, _ = demo_docs()
    w = load_world(scene)
    w.step()
    return w


def player(w) -> PlayerController:
    return w.get_node("Player").behavior


def test_feet_start_on_floor(demo_ready):
    ctrl = player(demo_ready)
    assert ctrl.changel and ctrl.changer


def test_foot_flags(demo_ready):
    ctrl = player(demo_ready)
    ctrl.changel = ctrl.changer = False
    player_foot_entered(ctrl, Node("BottomFloor"), "L")
    assert ctrl.changel and not ctrl.changer
    player_foot_entered(ctrl, Node("Board3"), "R")
    assert not ctrl.changer
    player_foot_entered(ctrl, Node("UpperFloor1"), "R")
    assert ctrl.changer
    ctrl.foot_exited(Node("UpperFloor1"), "R")
    assert not ctrl.changer


def test_follow_rule(demo_ready):
    w = demo_ready
    ctrl = player(w)
    ctrl.changel = ctrl.changer = False
    shape = w.get_node("Player/PlayerCollisionShape")
    w.get_node("Player/PlayerOrigin").set_translation((0.4, 0, 0.2))
    ctrl.process(DT)
    assert shape.translation == (0, 0.9, 0)  # both flags false
    ctrl.changel = True
    ctrl.process(DT)
    assert shape.translation[0] == 0.4 and shape.translation[2] == 0.2


def test_shape_follows_origin_while_on_floor():
    scene, scenario = demo_docs()
    w = load_world(scene)
    n = w.load_scenario(scenario)
    shape = w.get_node("Player/PlayerCollisionShape")
    origin = w.get_node("Player/PlayerOrigin")
    ctrl = w.get_node("Player").behavior
    following = 0
    for i in range(n):
        flags = ctrl.changel or ctrl.changer
        before_shape, before_origin = shape.translation, origin.translation
        w.step(final=i == n - 1)
        if flags:
            assert shape.translation == before_origin
            following += 1
        else:
            assert shape.translation == before_shape
    assert following > n // 3


# -- bridge ---------------------------------------------------------------


def bridge(w) -> BridgeController:
    return w.get_node("Bridge").behavior


def test_foot_on_board_gets_impulse(demo_ready):
    w = demo_ready
    board = w.get_node("Bridge/Boards/Board3")
    assert bridge_board_entered(bridge(w), board, "LeftFootArea")
    inertia = board.body.rigid.inertia[0]
    assert board.body.rigid.angular_velocity[0] == pytest.approx(0.02 / inertia, abs=1e-12)
    imp = records(w, "Impulse")[-1]
    assert imp.get("board") == "/Bridge/Boards/Board3" and imp.get("tx") == 0.02


def test_hand_does_not_push_board(demo_ready):
    w = demo_ready
    board = w.get_node("Bridge/Boards/Board2")
    assert not bridge_board_entered(bridge(w), board, "HandArea")
    assert board.body.rigid.angular_velocity == (0, 0, 0)


def test_debounce_per_board(demo_ready):
    w = demo_ready
    ctrl = bridge(w)
    b1, b2 = w.get_node("Bridge/Boards/Board1"), w.get_node("Bridge/Boards/Board2")
    assert ctrl.board_entered(b1, "LeftFootArea")
    assert not ctrl.board_entered(b1, "RightFootArea")  # same tick, other foot
    assert ctrl.board_entered(b2, "RightFootArea")
    w.run(17)
    assert not ctrl.board_entered(b1, "LeftFootArea")
    w.step()
    assert ctrl.board_entered(b1, "LeftFootArea")


def test_crossing_gives_one_impulse_per_board(demo_world):
    imps = records(demo_world, "Impulse")
    assert sorted(r.get("board") for r in imps) == [f"/Bridge/Boards/Board{i}" for i in range(1, 6)]


# -- teleport -------------------------------------------------------------


def test_teleport_to_floor(demo_ready):
    w = demo_ready
    origin = w.get_node("Player/PlayerOrigin")
    assert teleport(w, origin, (2, 0, 1)) == (2, 0, 1)
    assert origin.global_transform().position == (2, 0, 1)
    assert teleport(w, origin, (0, 3.5, -3)) == (0, 3.3, -3)


def test_teleport_off_floor(demo_ready):
    w = demo_ready
    origin = w.get_node("Player/PlayerOrigin")
    with pytest.raises(InvalidEndpoint):
        teleport(w, origin, (20, 0, 0))
    assert origin.global_transform().position == (0, 0, 0)


def teleport_world(enabled, rot="0 1 0 -1.5707963267948966", x=1.0):
    scene, _ = demo_paths()[:2]
    text = scene.read_text().replace("enabled=0", f"enabled={enabled}")
    w = scene_world(text)
    scn = parse_scenario(
        f"at 0 pose LeftHand {x} 1 2 {rot}\nat 0.5 trigger LeftHand down\nat 1 trigger LeftHand up\nrun_until 1.5\n"
    )
    return w, scn


def test_trigger_aims_and_teleports():
    w, scn = teleport_world(1)
    arrow = w.get_node("Player/PlayerOrigin/LeftHandController/Arrow")
    w.load_scenario(scn)
    w.run(46)
    assert arrow.visible
    w.run(90)
    assert not arrow.visible
    tp = records(w, "Teleport")
    assert len(tp) == 1
    assert w.get_node("Player/PlayerOrigin").global_transform().position == pytest.approx((3, 0, 2), abs=1e-9)


def test_trigger_ignored_when_disabled():
    w, scn = teleport_world(0)
    w.run_scenario(scn)
    assert records(w, "Teleport") == []
    assert w.get_node("Player/PlayerOrigin").global_transform().position == (0, 0, 0)


def test_trigger_off_floor_warns():
    w, scn = teleport_world(1, x=6.0)
    w.run_scenario(scn)
    assert records(w, "Teleport") == []
    assert records(w, "Warning")[-1].get("reason") == "invalid_endpoint"
    assert w.get_node("Player/PlayerOrigin").global_transform().position == (0, 0, 0)
