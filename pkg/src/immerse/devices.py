"""Tracked VR devices driven by scripted trajectories, and the serial haptics
channel: a port API, the single-byte 'h'/'l' wire protocol and an emulator
of the footplate's microcontroller sketch."""

from __future__ import annotations

import bisect
import enum
import logging
import math
import os
import threading
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Union

from .scenegraph import Node
from .transform import IDENTITY, Transform, quat_slerp

log = logging.getLogger(__name__)

MOTORS_ON = 0x68  # 'h'
MOTORS_OFF = 0x6C  # 'l'
BITS_PER_BYTE = 10  # start + 8 data + stop
STANDARD_BAUDS = (300, 600, 1200, 2400, 4800, 9600, 14400, 19200, 38400, 57600, 115200)
VIRTUAL_PORT = "virt0"

TraceFn = Callable[[str, list], None]


# -- tracked devices ------------------------------------------------------


class Role(enum.Enum):
    HEAD = "Head"
    LEFT_HAND = "LeftHand"
    RIGHT_HAND = "RightHand"
    LEFT_FOOT = "LeftFoot"
    RIGHT_FOOT = "RightFoot"


class DeviceButton(enum.Enum):
    TRIGGER = "Trigger"


@dataclass
class TrackedDevice:
    role: Role
    pose: Transform = IDENTITY
    buttons: set = field(default_factory=set)


class Trajectory:
    """Piecewise-linear pose track: positions lerp, orientations slerp."""

    def __init__(self):
        self.times: list[float] = []
        self.poses: list[Transform] = []

    def add(self, t: float, pose: Transform) -> None:
        if self.times and t < self.times[-1]:
            raise ValueError(f"keyframe at {t} precedes {self.times[-1]}")
        if self.times and t == self.times[-1]:
            self.poses[-1] = pose
            return
        self.times.append(float(t))
        self.poses.append(pose)

    def sample(self, t: float) -> Transform:
        if not self.times:
            return IDENTITY
        i = bisect.bisect_right(self.times, t)
        if i == 0:
            return self.poses[0]
        if i == len(self.times):
            return self.poses[-1]
        t0, t1 = self.times[i - 1], self.times[i]
        a, b = self.poses[i - 1], self.poses[i]
        if a == b:
            return a
        u = (t - t0) / (t1 - t0)
        pa, pb = a.position, b.position
        pos = (pa[0] + u * (pb[0] - pa[0]), pa[1] + u * (pb[1] - pa[1]), pa[2] + u * (pb[2] - pa[2]))
        if a.orientation == b.orientation:
            return a.with_position(pos)
        return Transform(pos, quat_slerp(a.orientation, b.orientation, u))


class DeviceRig:
    def __init__(self):
        self.devices = {r: TrackedDevice(r) for r in Role}
        self.trajectories: dict[Role, Trajectory] = {}
        self.nodes: dict[Role, list[Node]] = {r: [] for r in Role}
        self._tracks: Optional[list] = None

    def bind(self, role: Role, node: Node) -> None:
        self.nodes[role].append(node)
        self._tracks = None

    def add_keyframe(self, role: Role, t: float, pose: Transform) -> None:
        self.trajectories.setdefault(role, Trajectory()).add(t, pose)
        self._tracks = None

    def sample(self, t: float) -> None:
        if self._tracks is None:
            self._tracks = [(traj, self.devices[r], self.nodes[r]) for r, traj in self.trajectories.items()]
        for traj, device, nodes in self._tracks:
            pose = traj.sample(t)
            device.pose = pose
            for node in nodes:
                if node.local is not pose and node.local != pose:
                    node.local = pose

    def set_button(self, role: Role, button: DeviceButton, down: bool) -> bool:
        """Update button state; emits the controller signal on a change."""
        held = self.devices[role].buttons
        if down == (button in held):
            return False
        if down:
            held.add(button)
        else:
            held.discard(button)
        signal = "button_pressed" if down else "button_released"
        for node in self.nodes[role]:
            node.emit(signal, button.value)
        return True


def sample_devices(rig: DeviceRig, t: float) -> None:
    rig.sample(t)


# -- serial ---------------------------------------------------------------


class SerialError(Exception):
    pass


class PortNotFound(SerialError):
    pass


class AlreadyOpen(SerialError):
    pass


class BadBaud(SerialError):
    pass


class PortClosed(SerialError):
    pass


class PortState(enum.Enum):
    CLOSED = "Closed"
    OPEN = "Open"


class PinLevel(enum.Enum):
    LOW = "LOW"
    HIGH = "HIGH"


class VirtualArduino:
    """Emulates the footplate sketch: 'h' drives pin 8 high, 'l' drives it low."""

    PIN = 8

    def __init__(self, on_pin_change: Optional[Callable[[PinLevel, PinLevel], None]] = None):
        self.pin8 = PinLevel.LOW
        self.ready = False
        self.received = bytearray()
        self.on_pin_change = on_pin_change

    def begin(self) -> None:
        self.pin8 = PinLevel.LOW
        self.received.clear()
        self.ready = True

    def end(self) -> None:
        self.ready = False

    def receive(self, b: int) -> Optional[tuple[PinLevel, PinLevel]]:
        # bytes arriving before the host opened the port are lost, like
        # the sketch's wait for the serial link
        if not self.ready:
            return None
        self.received.append(b)
        return device_handle_byte(self, b)


def device_handle_byte(dev: VirtualArduino, b: int) -> Optional[tuple[PinLevel, PinLevel]]:
    if b == MOTORS_ON:
        new = PinLevel.HIGH
    elif b == MOTORS_OFF:
        new = PinLevel.LOW
    else:
        return None
    old = dev.pin8
    if new is old:
        return None
    dev.pin8 = new
    if dev.on_pin_change is not None:
        dev.on_pin_change(old, new)
    return old, new


class PassthroughDevice:
    """Forwards delivered bytes to an OS device path; disabled unless configured."""

    def __init__(self, path: str):
        self.path = path
        self.fd: Optional[int] = None

    def begin(self, baud: int = 9600) -> None:
        self.fd = os.open(self.path, os.O_RDWR | os.O_NOCTTY | os.O_NONBLOCK | getattr(os, "O_APPEND", 0))
        if os.isatty(self.fd):
            import termios

            speed = getattr(termios, f"B{baud}", None)
            if speed is not None:
                attrs = termios.tcgetattr(self.fd)
                attrs[4] = attrs[5] = speed
                termios.tcsetattr(self.fd, termios.TCSANOW, attrs)

    def end(self) -> None:
        if self.fd is not None:
            os.close(self.fd)
            self.fd = None

    def receive(self, b: int) -> None:
        if self.fd is not None:
            os.write(self.fd, bytes([b]))
        return None

    def poll(self) -> bytes:
        if self.fd is None or not os.isatty(self.fd):
            return b""
        try:
            return os.read(self.fd, 4096)
        except BlockingIOError:
            return b""


Device = Union[VirtualArduino, PassthroughDevice]


class SerialPort:
    """Host side of one serial link.

    Written bytes go out on a modeled 8N1 wire and reach the device on the
    first tick boundary after their last bit; ``flush`` delivers them now.
    """

    def __init__(self, name: str, device: Device, hub: "SerialHub"):
        self.name = name
        self.device = device
        self._polls = isinstance(device, PassthroughDevice)
        self.hub = hub
        self.state = PortState.CLOSED
        self.baud = 9600
        self.capacity = 1000
        self.tx: deque[tuple[int, int]] = deque()
        self.rx: deque[int] = deque()
        self.sent = bytearray()
        self._wire_free = Fraction(0)
        self._lock = threading.Lock()

    def __repr__(self) -> str:
        return f"<SerialPort {self.name} {self.state.value}>"

    def _require_open(self) -> None:
        if self.state is not PortState.OPEN:
            raise PortClosed(f"port {self.name} is closed")

    def _open(self, baud: int, capacity: int) -> None:
        with self._lock:
            self.baud = baud
            self.capacity = capacity
            self.tx.clear()
            self.rx.clear()
            self._wire_free = Fraction(0)
            self.state = PortState.OPEN
        if isinstance(self.device, PassthroughDevice):
            self.device.begin(baud)
        else:
            self.device.begin()

    def close(self) -> None:
        with self._lock:
            self.state = PortState.CLOSED
            self.tx.clear()
        self.device.end()

    def write(self, data: Union[bytes, str]) -> None:
        self._require_open()
        if isinstance(data, str):
            data = data.encode("ascii")
        if not data:
            return
        rate = self.hub.rate
        tick = self.hub.clock()
        with self._lock:
            t = max(Fraction(tick, rate), self._wire_free)
            frame = Fraction(BITS_PER_BYTE, self.baud)
            for b in data:
                t += frame
                self.tx.append((math.ceil(t * rate), b))
                self.sent.append(b)
            self._wire_free = t
        for b in data:
            self.hub._trace("SerialTx", [("byte", f"0x{b:02x}"), ("port", self.name)])

    def flush(self) -> None:
        self._require_open()
        with self._lock:
            pending = [b for _, b in self.tx]
            self.tx.clear()
            self._wire_free = Fraction(self.hub.clock(), self.hub.rate)
        for b in pending:
            self._deliver(b)

    def get_available(self) -> int:
        self._require_open()
        self._poll()
        with self._lock:
            return len(self.rx)

    def read(self, n: int = 1) -> bytes:
        self._require_open()
        self._poll()
        with self._lock:
            out = bytes(self.rx.popleft() for _ in range(min(n, len(self.rx))))
        return out

    def inject(self, data: bytes) -> None:
        """Device-to-host bytes; overflow drops the oldest with a warning."""
        for b in data:
            dropped = None
            with self._lock:
                if len(self.rx) >= self.capacity:
                    dropped = self.rx.popleft()
                self.rx.append(b)
            if dropped is not None:
                log.warning("rx overflow on %s, dropped 0x%02x", self.name, dropped)
                self.hub._trace(
                    "Warning", [("reason", "rx_overflow"), ("port", self.name), ("dropped", f"0x{dropped:02x}")]
                )

    def _poll(self) -> None:
        if isinstance(self.device, PassthroughDevice):
            data = self.device.poll()
            if data:
                self.inject(data)

    def _deliver(self, b: int) -> None:
        self.device.receive(b)

    def pending_ticks(self) -> list[int]:
        with self._lock:
            return [t for t, _ in self.tx]

    def service(self, tick: int) -> int:
        """Deliver every byte whose last bit has arrived by ``tick``."""
        if self.state is not PortState.OPEN:
            return 0
        if not self.tx and not self._polls:
            return 0
        due = []
        with self._lock:
            while self.tx and self.tx[0][0] <= tick:
                due.append(self.tx.popleft()[1])
        for b in due:
            self._deliver(b)
        self._poll()
        return len(due)


class SerialHub:
    """Port registry and the five-call API surface (``list_ports``, ``open``,
    then ``write``/``flush``/``get_available`` on the returned handle)."""

    def __init__(
        self,
        clock: Optional[Callable[[], int]] = None,
        rate: int = 90,
        trace: Optional[TraceFn] = None,
        passthrough: Optional[str] = None,
    ):
        self.clock = clock or (lambda: 0)
        self.rate = rate
        self.trace = trace
        self.arduino = VirtualArduino(on_pin_change=self._pin_changed)
        self.ports: dict[str, SerialPort] = {VIRTUAL_PORT: SerialPort(VIRTUAL_PORT, self.arduino, self)}
        if passthrough:
            self.ports[passthrough] = SerialPort(passthrough, PassthroughDevice(passthrough), self)

    def _trace(self, kind: str, payload: list) -> None:
        if self.trace is not None:
            self.trace(kind, payload)

    def _pin_changed(self, old: PinLevel, new: PinLevel) -> None:
        self._trace("PinChange", [("pin", str(VirtualArduino.PIN)), ("level", new.value)])

    def list_ports(self) -> list[str]:
        others = sorted(n for n in self.ports if n != VIRTUAL_PORT)
        return [VIRTUAL_PORT] + others

    def open(self, name: str, baud: int = 9600, buffer: int = 1000) -> SerialPort:
        port = self.ports.get(name)
        if port is None:
            raise PortNotFound(f"no serial port {name!r}")
        if port.state is PortState.OPEN:
            raise AlreadyOpen(f"port {name!r} is already open")
        if baud not in STANDARD_BAUDS:
            raise BadBaud(f"non-standard baud rate {baud}")
        if buffer <= 0:
            raise ValueError("buffer capacity must be positive")
        port._open(baud, buffer)
        return port

    def service(self, tick: int) -> None:
        for port in self.ports.values():
            port.service(tick)
