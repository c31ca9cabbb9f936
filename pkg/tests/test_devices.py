import math
import os
import tempfile

import pytest
from hypothesis import given
from hypothesis import strategies as st

from immerse.devices import (
    AlreadyOpen,
    BadBaud,
    DeviceButton,
    DeviceRig,
    PinLevel,
    PortClosed,
    PortNotFound,
    Role,
    SerialHub,
    Trajectory,
    VirtualArduino,
    device_handle_byte,
    sample_devices,
)
from immerse.scenegraph import Behavior, Node, NodeKind
from immerse.transform import Transform, quat_from_axis_angle, quat_to_axis_angle


def fold_pin(data: bytes, start: str = "LOW") -> str:
    level = start
    for b in data:
        if b == ord("h"):
            level = "HIGH"
        elif b == ord("l"):
            level = "LOW"
    return level


class Clock:
    def __init__(self):
        self.tick = 0

    def __call__(self):
        return self.tick


def hub_with_log():
    clock = Clock()
    log = []
    hub = SerialHub(clock=clock, trace=lambda k, p: log.append((clock.tick, k, dict(p))))
    return hub, clock, log


# -- tracked devices ------------------------------------------------------


def test_linear_interpolation():
    tr = Trajectory()
    tr.add(0.0, Transform((0, 1.7, 0)))
    tr.add(1.0, Transform((1, 1.7, 0)))
    assert tr.sample(0.5).position == (0.5, 1.7, 0.0)
    assert tr.sample(-1).position == (0, 1.7, 0)
    assert tr.sample(5).position == (1, 1.7, 0)


def test_single_keyframe_is_constant():
    tr = Trajectory()
    tr.add(2.0, Transform((3, 0, 1)))
    assert all(tr.sample(t).position == (3, 0, 1) for t in (0, 2, 7.5))


def test_orientation_slerps():
    tr = Trajectory()
    tr.add(0.0, Transform())
    tr.add(1.0, Transform((0, 0, 0), quat_from_axis_angle((0, 1, 0), 1.0)))
    _, ang = quat_to_axis_angle(tr.sample(0.25).orientation)
    assert math.isclose(ang, 0.25, abs_tol=1e-9)


def test_keyframes_must_not_go_back():
    tr = Trajectory()
    tr.add(1.0, Transform())
    with pytest.raises(ValueError):
        tr.add(0.5, Transform())


def test_rig_drives_bound_nodes():
    rig = DeviceRig()
    head = Node("PlayerCamera", NodeKind.CAMERA)
    rig.bind(Role.HEAD, head)
    rig.add_keyframe(Role.HEAD, 0.0, Transform((0, 1.7, 0)))
    rig.add_keyframe(Role.HEAD, 1.0, Transform((1, 1.7, 0)))
    sample_devices(rig, 0.5)
    assert head.local.position == (0.5, 1.7, 0.0)
    assert rig.devices[Role.HEAD].pose.position == (0.5, 1.7, 0.0)


def test_trigger_edges_emit_once():
    got = []

    class Hand(Behavior):
        def on_press(self, button):
            got.append(("down", button))

        def on_release(self, button):
            got.append(("up", button))

    rig = DeviceRig()
    hand = Node("LeftHandController", NodeKind.CONTROLLER, behavior=Hand())
    hand.connect("button_pressed", hand, "on_press")
    hand.connect("button_released", hand, "on_release")
    rig.bind(Role.LEFT_HAND, hand)
    assert rig.set_button(Role.LEFT_HAND, DeviceButton.TRIGGER, True)
    assert not rig.set_button(Role.LEFT_HAND, DeviceButton.TRIGGER, True)
    rig.set_button(Role.LEFT_HAND, DeviceButton.TRIGGER, False)
    assert got == [("down", "Trigger"), ("up", "Trigger")]


# -- ports ----------------------------------------------------------------


def test_registry():
    assert SerialHub().list_ports() == ["virt0"]
    with tempfile.NamedTemporaryFile() as f:
        assert SerialHub(passthrough=f.name).list_ports() == ["virt0", f.name]


def test_open_resets_device():
    hub = SerialHub()
    hub.arduino.pin8 = PinLevel.HIGH
    port = hub.open(hub.list_ports()[0], 9600, 1000)
    assert hub.arduino.pin8 is PinLevel.LOW
    assert port.get_available() == 0
    with pytest.raises(AlreadyOpen):
        hub.open("virt0", 9600, 1000)
    with pytest.raises(PortNotFound):
        hub.open("nope", 9600, 1000)


def test_bad_baud():
    with pytest.raises(BadBaud):
        SerialHub().open("virt0", 9601, 1000)


def test_closed_port_rejects_io():
    hub = SerialHub()
    port = hub.open("virt0")
    port.close()
    for call in (lambda: port.write("h"), port.flush, port.get_available, port.read):
        with pytest.raises(PortClosed):
            call()


def test_write_arrives_next_tick():
    hub, clock, log = hub_with_log()
    port = hub.open("virt0", 9600, 1000)
    clock.tick = 100
    port.write("h")
    assert hub.arduino.pin8 is PinLevel.LOW
    assert port.pending_ticks() == [101]  # 10/9600 s is shorter than one tick
    clock.tick = 101
    hub.service(101)
    assert hub.arduino.pin8 is PinLevel.HIGH
    assert [e for e in log if e[1] == "PinChange"] == [(101, "PinChange", {"pin": "8", "level": "HIGH"})]


def test_wire_latency_at_low_baud():
    hub, clock, _ = hub_with_log()
    port = hub.open("virt0", 300, 1000)
    port.write(b"hlh")
    # 10 bits per byte at 300 bps = 1/30 s = 3 ticks per byte
    assert port.pending_ticks() == [3, 6, 9]


def test_empty_write_is_noop():
    hub, _, log = hub_with_log()
    port = hub.open("virt0")
    port.write("")
    assert port.pending_ticks() == [] and log == []


def test_flush_delivers_now_in_order():
    hub, clock, log = hub_with_log()
    port = hub.open("virt0")
    port.flush()
    port.write("h")
    port.write("l")
    port.flush()
    assert bytes(hub.arduino.received) == b"hl"
    assert hub.arduino.pin8 is PinLevel.LOW
    assert [p["level"] for _, k, p in log if k == "PinChange"] == ["HIGH", "LOW"]
    assert [p["byte"] for _, k, p in log if k == "SerialTx"] == ["0x68", "0x6c"]


def test_get_available_counts_injected_bytes():
    hub = SerialHub()
    port = hub.open("virt0")
    port.write("hl")
    port.flush()
    assert port.get_available() == 0  # the sketch never transmits
    port.inject(b"abc")
    assert port.get_available() == 3
    assert port.get_available() == 3
    assert port.read(2) == b"ab" and port.get_available() == 1


def test_rx_overflow_drops_oldest():
    hub, _, log = hub_with_log()
    port = hub.open("virt0", 9600, 2)
    port.inject(b"xyz")
    assert port.read(5) == b"yz"
    assert log[-1][1] == "Warning" and log[-1][2]["dropped"] == "0x78"


def test_passthrough_writes_bytes():
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "dev")
        open(path, "wb").close()
        hub = SerialHub(passthrough=path)
        port = hub.open(path)
        port.write("hl")
        port.flush()
        port.close()
        assert open(path, "rb").read() == b"hl"


# -- firmware -------------------------------------------------------------


def test_device_examples():
    dev = VirtualArduino()
    dev.begin()
    assert device_handle_byte(dev, ord("h")) == (PinLevel.LOW, PinLevel.HIGH)
    assert device_handle_byte(dev, ord("x")) is None and dev.pin8 is PinLevel.HIGH


def test_replay_transitions():
    seen = []
    dev = VirtualArduino(on_pin_change=lambda old, new: seen.append(new.value))
    dev.begin()
    for b in b"hlhhl":
        dev.receive(b)
    assert ["LOW"] + seen == ["LOW", "HIGH", "LOW", "HIGH", "LOW"]


def test_bytes_before_begin_are_lost():
    dev = VirtualArduino()
    dev.receive(ord("h"))
    assert dev.pin8 is PinLevel.LOW


@given(st.binary(max_size=40))
def test_emulator_matches_fold(data):
    hub, _, log = hub_with_log()
    port = hub.open("virt0")
    port.write(data)
    port.flush()
    assert hub.arduino.pin8.value == fold_pin(data)
    levels = [p["level"] for _, k, p in log if k == "PinChange"]
    assert all(a != b for a, b in zip(["LOW"] + levels, levels))
