"""Gameplay behaviors: the button-driven footplate with haptics, the player
rig's collision-shape follow rule, bridge board impulses and teleport."""

from __future__ import annotations

import enum
import math
from typing import TYPE_CHECKING, Optional

from .physics import BodyKind, Box, Sphere
from .scenegraph import Behavior, Node, NodeKind, NotFound
from .transform import Vec3, quat_rotate

if TYPE_CHECKING:
    from .engine import World

FLOOR_NAMES = ("BottomFloor", "UpperFloor1")
FOOT_AREAS = ("LeftFootArea", "RightFootArea")
BOARD_IMPULSE: Vec3 = (0.02, 0.0, 0.0)
ARRIVAL_CLEARANCE = 0.3


class SceneMissingNode(Exception):
    pass


class InvalidEndpoint(Exception):
    pass


def _flag(v: str) -> bool:
    if v.lower() in ("1", "true", "yes", "on"):
        return True
    if v.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {v!r}")


class ExperienceBehavior(Behavior):
    """Behavior bound to a world, configured from scene ``key=value`` params."""

    params_spec: dict[str, str] = {}

    def __init__(self, world: "World", params: Optional[dict[str, str]] = None):
        self.world = world
        params = dict(params or {})
        unknown = set(params) - set(self.params_spec)
        if unknown:
            raise ValueError(f"unknown parameter(s) {sorted(unknown)} for {type(self).__name__}")
        self.params = {**self.params_spec, **params}

    def need(self, path: str) -> Node:
        try:
            return self.node.get_node(path)
        except NotFound as e:
            raise SceneMissingNode(f"{self.node.path}: missing node {path!r}") from e

    def float_param(self, key: str) -> float:
        v = float(self.params[key])
        if not math.isfinite(v):
            raise ValueError(f"{key} must be finite")
        return v


# -- footplate ------------------------------------------------------------


class PlatformState(enum.Enum):
    IDLE = "Idle"
    RISING = "Rising"
    ARRIVED = "Arrived"


class FootplateController(ExperienceBehavior):
    """Kinematic platform: a button press starts the rise and the motors;
    reaching the upper floor (plus clearance) stops both."""

    params_spec = {
        "force": "90",
        "upper": "../Environment/UpperFloor1",
        "button": "../Environment/Button",
        "player": "../Player",
        "origin": "../Player/PlayerOrigin",
        "camera": "../Player/PlayerOrigin/PlayerCamera",
        "timer": "Timer",
        "marker": "AreaMesh",
        "rider": "../Player",
    }

    def __init__(self, world: "World", params: Optional[dict[str, str]] = None):
        super().__init__(world, params)
        self.force = self.float_param("force")
        self.state = PlatformState.IDLE
        self.stopping = 0
        self.port = None
        self.timer: Optional[Node] = None
        self.marker: Optional[Node] = None
        self.rider: Optional[Node] = None

    def ready(self) -> None:
        node = self.node
        if node.body is None or node.body.kind is not BodyKind.KINEMATIC:
            raise SceneMissingNode(f"{node.path}: footplate must be a KinematicBody")
        self.timer = node.find_node(self.params["timer"])
        if self.timer is not None and self.timer.timer is not None:
            self.timer.connect("timeout", node, "_on_timer_timeout")
            self.timer.timer.start()
        self.marker = node.find_node(self.params["marker"])
        upper = self.need(self.params["upper"])
        # integer cast of the floor height, truncating like the original script
        self.stopping = int(upper.get_translation()[1])
        self.player = self.need(self.params["player"])
        self.origin = self.need(self.params["origin"])
        self.camera = node.find_node(self.params["camera"])
        if self.params["rider"] != "none":
            self.rider = self.need(self.params["rider"])
        ports = self.world.serial.list_ports()
        self.port = self.world.serial.open(ports[0], 9600, 1000)
        button = self.need(self.params["button"])
        button.connect("pressed", node, "_move_platform_with_button")

    def _on_timer_timeout(self) -> None:
        if self.marker is not None:
            self.marker.visible = not self.marker.visible

    def _platform_y(self) -> float:
        return self.node.get_translation()[1]

    def _move_platform_with_button(self) -> None:
        if self.state is not PlatformState.IDLE:
            self.world.warn("press_ignored", state=self.state.value)
            return
        self.player.set_translation((1.7, 0.0, 0.8))
        self.origin.set_translation((-1.7, 0.0, -0.8))
        if self.camera is not None:
            self.camera.set_translation((-1.7, 0.0, -0.8))
        if self.timer is not None and self.timer.timer is not None:
            self.timer.timer.stop()
        self.state = PlatformState.RISING
        if self.marker is not None:
            self.marker.visible = False
        self.world.emit("PlatformState", [("state", self.state.value), ("y", self._platform_y())])
        self.port.write("h")
        self.port.flush()

    def physics_process(self, dt: float) -> None:
        if self.state is not PlatformState.RISING:
            return
        vel = (0.0, self.force * dt, 0.0)
        res = self.world.physics.move_and_slide(self.node.body, vel, dt)
        if self.rider is not None and res.displacement != (0.0, 0.0, 0.0):
            p = self.rider.global_transform().position
            d = res.displacement
            self.rider.set_global_translation((p[0] + d[0], p[1] + d[1], p[2] + d[2]))
        if self._platform_y() >= self.stopping + ARRIVAL_CLEARANCE:
            self.force = 0.0
            self.state = PlatformState.ARRIVED
            self.world.emit("PlatformState", [("state", self.state.value), ("y", self._platform_y())])
            self.port.write("l")
            self.port.flush()


# -- player ---------------------------------------------------------------


class PlayerController(ExperienceBehavior):
    """Moves the player's collision shape to the tracking origin while either
    foot stands on a floor."""

    params_spec = {
        "left_foot": "PlayerOrigin/LeftFootController/LeftFootArea",
        "right_foot": "PlayerOrigin/RightFootController/RightFootArea",
        "origin": "PlayerOrigin",
        "collision": "PlayerCollisionShape",
    }

    def __init__(self, world: "World", params: Optional[dict[str, str]] = None):
        super().__init__(world, params)
        self.changel = False
        self.changer = False

    def ready(self) -> None:
        self.leftfoot = self.need(self.params["left_foot"])
        self.rightfoot = self.need(self.params["right_foot"])
        self.origin = self.need(self.params["origin"])
        self.collision = self.need(self.params["collision"])
        n = self.node
        self.leftfoot.connect("body_entered", n, "_on_LeftFootArea_body_entered")
        self.leftfoot.connect("body_exited", n, "_on_LeftFootArea_body_exited")
        self.rightfoot.connect("body_entered", n, "_on_RightFootArea_body_entered")
        self.rightfoot.connect("body_exited", n, "_on_RightFootArea_body_exited")

    def process(self, dt: float) -> None:
        if self.changel or self.changer:
            self.collision.set_translation(self.origin.get_translation())

    def _shape_moved_off_feet(self) -> bool:
        shape = self.collision.global_transform().position
        return (
            self.leftfoot.global_transform().position != shape
            or self.rightfoot.global_transform().position != shape
        )

    def foot_entered(self, body: Node, side: str) -> None:
        if body.name in FLOOR_NAMES and self._shape_moved_off_feet():
            if side == "L":
                self.changel = True
            else:
                self.changer = True

    def foot_exited(self, body: Node, side: str) -> None:
        if body.name in FLOOR_NAMES:
            if side == "L":
                self.changel = False
            else:
                self.changer = False

    def _on_LeftFootArea_body_entered(self, body: Node) -> None:
        self.foot_entered(body, "L")

    def _on_RightFootArea_body_entered(self, body: Node) -> None:
        self.foot_entered(body, "R")

    def _on_LeftFootArea_body_exited(self, body: Node) -> None:
        self.foot_exited(body, "L")

    def _on_RightFootArea_body_exited(self, body: Node) -> None:
        self.foot_exited(body, "R")


def player_foot_entered(ctrl: PlayerController, body: Node, side: str) -> None:
    ctrl.foot_entered(body, side)


# -- bridge ---------------------------------------------------------------


class BridgeController(ExperienceBehavior):
    """Gives a board a torque impulse when a foot area enters it, at most
    once per board per debounce window."""

    params_spec = {"boards": "Boards", "debounce": "0.2", "impulse": "0.02"}

    def __init__(self, world: "World", params: Optional[dict[str, str]] = None):
        super().__init__(world, params)
        self.debounce = self.float_param("debounce")
        if self.debounce < 0:
            raise ValueError("debounce must be >= 0")
        self.impulse = (self.float_param("impulse"), 0.0, 0.0)
        self.boards: list[Node] = []
        self._quiet_until: dict[Node, int] = {}
        self.impulses: list[tuple[int, str, Vec3, Vec3, Vec3]] = []

    def ready(self) -> None:
        container = self.need(self.params["boards"])
        for board in container.children:
            if board.body is None or board.body.kind is not BodyKind.RIGID:
                continue
            self.boards.append(board)
            for child in board.children:
                if child.kind is NodeKind.AREA:
                    child.connect("area_entered", self.node, "_on_Board_area_entered", binds=(board,))

    def _on_Board_area_entered(self, area: Node, board: Node) -> None:
        self.board_entered(board, area.name)

    def board_entered(self, board: Node, area_name: str) -> bool:
        if area_name not in FOOT_AREAS:
            return False
        tick = self.world.tick
        if tick < self._quiet_until.get(board, 0):
            return False
        self._quiet_until[board] = tick + math.ceil(self.debounce * self.world.rate - 1e-9)
        body = board.body
        before = body.rigid.angular_velocity
        self.world.physics.apply_torque_impulse(body, self.impulse)
        after = body.rigid.angular_velocity
        dw = (after[0] - before[0], after[1] - before[1], after[2] - before[2])
        self.impulses.append((tick, board.path, self.impulse, before, after))
        tx, ty, tz = self.impulse
        self.world.emit(
            "Impulse",
            [("board", board.path), ("tx", tx), ("ty", ty), ("tz", tz), ("dwx", dw[0]), ("dwy", dw[1]), ("dwz", dw[2])],
        )
        return True


def bridge_board_entered(ctrl: BridgeController, board: Node, area_name: str) -> bool:
    return ctrl.board_entered(board, area_name)


# -- teleport -------------------------------------------------------------


def floor_height_at(world: "World", x: float, z: float, from_y: float, layer: int = 1) -> Optional[float]:
    """Top surface height of the highest floor at or below ``from_y`` under (x, z)."""
    bit = 1 << (layer - 1)
    best = None
    for b in world.physics.bodies:
        if b.kind is not BodyKind.STATIC or b.shape is None or not (b.filter.layer & bit):
            continue
        hit = _ray_down(b.shape, b.transform, (x, from_y, z))
        if hit is not None and hit <= from_y + 1e-12 and (best is None or hit > best):
            best = hit
    return best


def _ray_down(shape, xf, origin: Vec3) -> Optional[float]:
    """y of the first surface a downward vertical ray from ``origin`` meets."""
    if isinstance(shape, Sphere):
        c = xf.position
        dx, dz = origin[0] - c[0], origin[2] - c[2]
        r2 = shape.radius * shape.radius - dx * dx - dz * dz
        if r2 < 0:
            return None
        top = c[1] + math.sqrt(r2)
        return min(top, origin[1]) if c[1] - math.sqrt(r2) <= origin[1] else None
    assert isinstance(shape, Box)
    inv = (xf.orientation[0], -xf.orientation[1], -xf.orientation[2], -xf.orientation[3])
    p = xf.position
    o = quat_rotate(inv, (origin[0] - p[0], origin[1] - p[1], origin[2] - p[2]))
    d = quat_rotate(inv, (0.0, -1.0, 0.0))
    t0, t1 = 0.0, math.inf
    for i in range(3):
        h = shape.half_extents[i]
        if abs(d[i]) < 1e-15:
            if abs(o[i]) > h:
                return None
            continue
        a, b = (-h - o[i]) / d[i], (h - o[i]) / d[i]
        if a > b:
            a, b = b, a
        t0, t1 = max(t0, a), min(t1, b)
        if t0 > t1:
            return None
    return origin[1] - t0


def teleport(world: "World", origin: Node, endpoint: Vec3, probe: float = 1.0) -> Vec3:
    """Move ``origin`` to ``endpoint`` with y snapped to the floor beneath it."""
    x, y, z = (float(c) for c in endpoint)
    floor = floor_height_at(world, x, z, y + probe)
    if floor is None:
        raise InvalidEndpoint(f"no floor under ({x}, {y}, {z})")
    target = (x, floor, z)
    origin.set_global_translation(target)
    world.emit("Teleport", [("node", origin.path), ("x", x), ("y", floor), ("z", z)])
    return target


class TeleportController(ExperienceBehavior):
    """Trigger down shows the arrow; trigger up teleports the origin to where
    it points. Disabled unless ``enabled=1``."""

    params_spec = {"enabled": "0", "reach": "2.0", "origin": "..", "arrow": "Arrow"}

    def __init__(self, world: "World", params: Optional[dict[str, str]] = None):
        super().__init__(world, params)
        self.enabled = _flag(self.params["enabled"])
        self.reach = self.float_param("reach")
        self.aiming = False

    def ready(self) -> None:
        self.origin = self.need(self.params["origin"])
        self.arrow = self.node.find_node(self.params["arrow"])
        if self.arrow is not None:
            self.arrow.visible = False
        if self.node.kind is NodeKind.CONTROLLER:
            self.node.connect("button_pressed", self.node, "_on_trigger_pressed")
            self.node.connect("button_released", self.node, "_on_trigger_released")

    def arrow_endpoint(self) -> Vec3:
        xf = self.node.global_transform()
        f = quat_rotate(xf.orientation, (0.0, 0.0, -1.0))
        n = math.hypot(f[0], f[2])
        fx, fz = (f[0] / n, f[2] / n) if n > 1e-9 else (0.0, -1.0)
        p = xf.position
        return (p[0] + fx * self.reach, p[1], p[2] + fz * self.reach)

    def _on_trigger_pressed(self, button: str) -> None:
        if not self.enabled:
            return
        self.aiming = True
        if self.arrow is not None:
            self.arrow.visible = True

    def _on_trigger_released(self, button: str) -> None:
        if not self.aiming:
            return
        self.aiming = False
        if self.arrow is not None:
            self.arrow.visible = False
        end = self.arrow_endpoint()
        try:
            # cast down from hand height: the hand is above the floor it points at
            teleport(self.world, self.origin, end, probe=0.0)
        except InvalidEndpoint:
            self.world.warn("invalid_endpoint")


BEHAVIORS: dict[str, type[ExperienceBehavior]] = {
    "footplate": FootplateController,
    "player": PlayerController,
    "bridge": BridgeController,
    "teleport": TeleportController,
}
