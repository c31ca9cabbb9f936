"""The simulation world: scene tree, physics, devices and the trace, advanced
one fixed tick at a time."""

from __future__ import annotations

import hashlib
import logging
import math
from fractions import Fraction
from typing import Any, Callable, Optional

from .devices import DeviceButton, DeviceRig, Role, SerialHub
from .physics import DEFAULT_GRAVITY, DEFAULT_RATE, BodyKind, ContactKind, PhysicsWorld
from .sceneio import PoseCmd, PressCmd, ScenarioDoc, TraceRecord, TriggerCmd
from .scenegraph import NodeKind, SceneTree
from .transform import Transform, Vec3, quat_from_axis_angle

log = logging.getLogger(__name__)

_SIGNAL_FOR = {
    ContactKind.AREA_BODY_ENTERED: "body_entered",
    ContactKind.AREA_BODY_EXITED: "body_exited",
    ContactKind.AREA_AREA_ENTERED: "area_entered",
    ContactKind.AREA_AREA_EXITED: "area_exited",
}


class World:
    """Tick order: serial delivery, device sampling, lifecycle callbacks,
    scenario commands, physics step (with physics hooks), event dispatch,
    transform sampling."""

    def __init__(
        self,
        rate: int = DEFAULT_RATE,
        gravity: Vec3 = DEFAULT_GRAVITY,
        sample_stride: int = 9,
        passthrough: Optional[str] = None,
    ):
        if sample_stride < 1:
            raise ValueError("sample stride must be >= 1")
        self.rate = rate
        self.dt = 1.0 / rate
        self.tick = 0
        self.sample_stride = sample_stride
        self.tree = SceneTree()
        self.physics = PhysicsWorld(rate=rate, gravity=gravity)
        self.rig = DeviceRig()
        self.serial = SerialHub(clock=lambda: self.tick, rate=rate, trace=self.emit, passthrough=passthrough)
        self.records: list[TraceRecord] = []
        self.sink: Optional[Callable[[TraceRecord], None]] = None
        self.keep_records = True
        self._commands: list[tuple[int, int, Any]] = []
        self._next_cmd = 0
        self._sampled: Optional[list] = None
        self._time_tick = -1
        self._time = Fraction(0)

    @property
    def root(self):
        return self.tree.root

    @property
    def time(self) -> float:
        return self.tick / self.rate

    def get_node(self, path: str):
        return self.tree.root.get_node(path)

    # -- trace ----------------------------------------------------------

    def emit(self, kind: str, payload: list) -> TraceRecord:
        if self._time_tick != self.tick:
            self._time_tick = self.tick
            self._time = Fraction(self.tick, self.rate)
        rec = TraceRecord(self.tick, self._time, kind, tuple(payload))
        if self.keep_records:
            self.records.append(rec)
        if self.sink is not None:
            self.sink(rec)
        return rec

    def warn(self, reason: str, **extra: Any) -> None:
        log.warning("tick %d: %s %s", self.tick, reason, extra)
        self.emit("Warning", [("reason", reason)] + list(extra.items()))

    # -- scenario -------------------------------------------------------

    def tick_for(self, t: float) -> int:
        """First tick whose end time is at or after ``t``."""
        return max(1, math.ceil(t * self.rate - 1e-9))

    def load_scenario(self, doc: ScenarioDoc) -> int:
        """Install trajectories and timed commands; returns the final tick."""
        for i, cmd in enumerate(doc.commands):
            if isinstance(cmd, PoseCmd):
                q = (1.0, 0.0, 0.0, 0.0)
                if cmd.rot is not None:
                    q = quat_from_axis_angle(cmd.rot[:3], cmd.rot[3])
                self.rig.add_keyframe(Role(cmd.role), cmd.t, Transform(cmd.pos, q))
            elif isinstance(cmd, (PressCmd, TriggerCmd)):
                self._commands.append((self.tick_for(cmd.t), i, cmd))
        self._commands.sort(key=lambda c: (c[0], c[1]))
        return max(0, round(doc.duration * self.rate))

    def press(self, path: str) -> None:
        node = self.get_node(path)
        node.emit("pressed")

    def _run_commands(self) -> None:
        cmds = self._commands
        while self._next_cmd < len(cmds) and cmds[self._next_cmd][0] <= self.tick:
            cmd = cmds[self._next_cmd][2]
            self._next_cmd += 1
            if isinstance(cmd, PressCmd):
                self.press(cmd.path)
            else:
                self.rig.set_button(Role(cmd.hand), DeviceButton.TRIGGER, cmd.down)

    # -- stepping -------------------------------------------------------

    def sampled_nodes(self) -> list:
        if self._sampled is None:
            self._sampled = [
                b.node for b in self.physics.bodies if b.kind in (BodyKind.RIGID, BodyKind.KINEMATIC)
            ]
        return self._sampled

    def sample_transforms(self) -> None:
        for node in self.sampled_nodes():
            xf = node.global_transform()
            p, q = xf.position, xf.orientation
            self.emit(
                "TransformSample",
                [("node", node.path), ("x", p[0]), ("y", p[1]), ("z", p[2]), ("qw", q[0]), ("qx", q[1]), ("qy", q[2]), ("qz", q[3])],
            )

    def step(self, final: bool = False) -> None:
        self.tick += 1
        t = self.tick / self.rate
        self.serial.service(self.tick)
        self.rig.sample(t)
        self.tree.tick_callbacks(self.dt)
        self._run_commands()
        events = self.physics.step(physics_phase=self.tree.physics_callbacks)
        for e in events:
            self.emit(
                "AreaEnter" if e.kind.entered else "AreaExit",
                [("area", e.area.path), ("other", e.other.path)],
            )
            e.area.emit(_SIGNAL_FOR[e.kind], e.other)
        if final or self.tick % self.sample_stride == 0:
            self.sample_transforms()

    def run(self, ticks: int) -> None:
        for i in range(ticks):
            self.step(final=i == ticks - 1)

    def run_scenario(self, doc: ScenarioDoc) -> None:
        self.run(self.load_scenario(doc) - self.tick)

    # -- introspection --------------------------------------------------

    def state_hash(self) -> str:
        h = hashlib.sha256()
        for node in self.tree.nodes():
            xf = node.global_transform()
            h.update(repr((node.path, node.kind.value, xf.position, xf.orientation, node.visible)).encode())
            if node.body is not None and node.body.rigid is not None:
                rs = node.body.rigid
                h.update(repr((rs.linear_velocity, rs.angular_velocity)).encode())
            if node.kind is NodeKind.TIMER and node.timer is not None:
                h.update(repr((node.timer.running, node.timer.remaining)).encode())
        h.update(repr((self.tick, self.physics.tick)).encode())
        return h.hexdigest()
