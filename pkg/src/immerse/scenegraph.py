"""Named node tree with cached transform composition, signals, timers and
per-tick lifecycle callbacks."""

from __future__ import annotations

import enum
import math
from typing import Any, Iterator, Optional

from .transform import IDENTITY, Transform, Vec3


class SceneGraphError(Exception):
    pass


class DuplicateName(SceneGraphError):
    pass


class CycleDetected(SceneGraphError):
    pass


class NotFound(SceneGraphError):
    def __init__(self, path: str, segment: str):
        super().__init__(f"cannot resolve {path!r}: no node at segment {segment!r}")
        self.path = path
        self.segment = segment


class UnknownSignal(SceneGraphError):
    pass


class DuplicateConnection(SceneGraphError):
    pass


class ReentrantSignal(SceneGraphError):
    pass


class NodeKind(enum.Enum):
    SPATIAL = "Spatial"
    PHYSICS_BODY = "PhysicsBody"
    AREA = "Area"
    CAMERA = "Camera"
    ORIGIN = "Origin"
    CONTROLLER = "Controller"
    TIMER = "Timer"
    MESH_STUB = "MeshStub"


SIGNALS: dict[NodeKind, frozenset[str]] = {
    NodeKind.SPATIAL: frozenset(),
    NodeKind.PHYSICS_BODY: frozenset({"pressed"}),
    NodeKind.AREA: frozenset({"body_entered", "body_exited", "area_entered", "area_exited", "pressed"}),
    NodeKind.CAMERA: frozenset(),
    NodeKind.ORIGIN: frozenset(),
    NodeKind.CONTROLLER: frozenset({"button_pressed", "button_released"}),
    NodeKind.TIMER: frozenset({"timeout"}),
    NodeKind.MESH_STUB: frozenset(),
}


class Behavior:
    """Script attached to a node. Subclasses override the hooks they need."""

    node: "Node"

    def ready(self) -> None:
        pass

    def process(self, dt: float) -> None:
        pass

    def physics_process(self, dt: float) -> None:
        pass


def _overrides(behavior: Optional[Behavior], hook: str) -> bool:
    if behavior is None:
        return False
    fn = getattr(type(behavior), hook, None)
    return fn is not None and fn is not getattr(Behavior, hook)


class Timer:
    """Countdown measured in whole physics ticks.

    A started timer fires on its ``ceil(period / dt)``-th countdown. Timers
    started before the countdown phase of a tick count that tick too.
    """

    def __init__(self, period: float, one_shot: bool = False, autostart: bool = False):
        if not period > 0 or not math.isfinite(period):
            raise ValueError(f"timer period must be > 0, got {period!r}")
        self.period = float(period)
        self.one_shot = one_shot
        self.autostart = autostart
        self.running = False
        self._ticks_left: Optional[int] = None
        self._dt: Optional[float] = None
        if autostart:
            self.start()

    def start(self) -> None:
        self.running = True
        self._ticks_left = None

    def stop(self) -> None:
        self.running = False
        self._ticks_left = None

    @property
    def remaining(self) -> float:
        if not self.running:
            return 0.0
        if self._ticks_left is None or self._dt is None:
            return self.period
        return min(self.period, self._ticks_left * self._dt)

    def countdown(self, dt: float) -> bool:
        """Advance one tick; True when the timer elapses on this tick."""
        if not self.running:
            return False
        if self._ticks_left is None:
            self._dt = dt
            self._ticks_left = max(1, math.ceil(self.period / dt - 1e-9))
        self._ticks_left -= 1
        if self._ticks_left > 0:
            return False
        if self.one_shot:
            self.stop()
        else:
            self._ticks_left = None
        return True


class Node:
    __slots__ = (
        "_name",
        "kind",
        "_local",
        "_global",
        "gen",
        "parent",
        "children",
        "_by_name",
        "behavior",
        "visible",
        "body",
        "timer",
        "params",
        "_signals",
        "_emitting",
        "_ready_done",
        "_path",
        "_tree",
    )

    def __init__(
        self,
        name: str,
        kind: NodeKind = NodeKind.SPATIAL,
        local: Transform = IDENTITY,
        behavior: Optional[Behavior] = None,
    ):
        if not isinstance(name, str) or not name or "/" in name or name in (".", ".."):
            raise ValueError(f"invalid node name {name!r}")
        self._name = name
        self.kind = kind
        self._local = local
        self._global: Optional[Transform] = None
        self.gen = 0
        self.parent: Optional[Node] = None
        self.children: list[Node] = []
        self._by_name: dict[str, Node] = {}
        self.behavior = None
        self.visible = True
        self.body: Any = None
        self.timer: Optional[Timer] = None
        self.params: dict[str, str] = {}
        self._signals: dict[str, list[tuple[Node, str, tuple]]] = {}
        self._emitting: set[str] = set()
        self._ready_done = False
        self._path: Optional[str] = None
        self._tree: Optional[SceneTree] = None
        if behavior is not None:
            self.attach(behavior)

    def __repr__(self) -> str:
        return f"<Node {self.kind.value} {self.path}>"

    @property
    def name(self) -> str:
        return self._name

    def attach(self, behavior: Behavior) -> None:
        behavior.node = self
        self.behavior = behavior
        if self._tree is not None:
            self._tree._structure_changed()

    # -- tree structure -------------------------------------------------

    def add_child(self, child: "Node") -> "Node":
        if child.name in self._by_name:
            raise DuplicateName(f"{self.path} already has a child named {child.name!r}")
        anc: Optional[Node] = self
        while anc is not None:
            if anc is child:
                raise CycleDetected(f"{child.name!r} is an ancestor of {self.path}")
            anc = anc.parent
        if child.parent is not None:
            raise SceneGraphError(f"{child.name!r} already has a parent")
        child.parent = self
        self.children.append(child)
        self._by_name[child.name] = child
        tree = self._tree
        for n in child.iter_preorder():
            n._path = None
            n._tree = tree
        child._invalidate()
        if tree is not None:
            tree._structure_changed()
        return child

    def iter_preorder(self) -> Iterator["Node"]:
        stack = [self]
        while stack:
            n = stack.pop()
            yield n
            stack.extend(reversed(n.children))

    @property
    def root(self) -> "Node":
        n = self
        while n.parent is not None:
            n = n.parent
        return n

    @property
    def path(self) -> str:
        if self._path is None:
            if self.parent is None:
                self._path = "/"
            elif self.parent.parent is None:
                self._path = "/" + self.name
            else:
                self._path = self.parent.path + "/" + self.name
        return self._path

    def get_node(self, path: str) -> "Node":
        node = self
        if path.startswith("/"):
            node = self.root
        for seg in path.split("/"):
            if seg in ("", "."):
                continue
            if seg == "..":
                if node.parent is None:
                    raise NotFound(path, seg)
                node = node.parent
                continue
            nxt = node._by_name.get(seg)
            if nxt is None:
                raise NotFound(path, seg)
            node = nxt
        return node

    def find_node(self, path: str) -> Optional["Node"]:
        try:
            return self.get_node(path)
        except NotFound:
            return None

    # -- transforms -----------------------------------------------------

    @property
    def local(self) -> Transform:
        return self._local

    @local.setter
    def local(self, value: Transform) -> None:
        if value is self._local:
            return
        self._local = value
        self._invalidate()

    @property
    def translation(self) -> Vec3:
        return self._local.position

    def set_translation(self, p: Vec3) -> None:
        p = (float(p[0]), float(p[1]), float(p[2]))
        if p != self._local.position:
            self.local = self._local.with_position(p)

    def get_translation(self) -> Vec3:
        return self._local.position

    def _invalidate(self) -> None:
        stack = [self]
        while stack:
            n = stack.pop()
            n._global = None
            n.gen += 1
            stack.extend(n.children)

    def global_transform(self) -> Transform:
        g = self._global
        if g is not None:
            return g
        if self.parent is None:
            g = self._local
        else:
            g = self.parent.global_transform().compose(self._local)
        self._global = g
        return g

    def set_global_translation(self, p: Vec3) -> None:
        if self.parent is None:
            self.set_translation(p)
        else:
            self.set_translation(self.parent.global_transform().inverse().apply(p))

    # -- signals --------------------------------------------------------

    def connect(self, signal: str, target: "Node", handler: str, binds: tuple = ()) -> None:
        if signal not in SIGNALS[self.kind]:
            raise UnknownSignal(f"{self.kind.value} node {self.path} has no signal {signal!r}")
        if target.behavior is None or not callable(getattr(target.behavior, handler, None)):
            raise SceneGraphError(f"{target.path} has no handler {handler!r}")
        subs = self._signals.setdefault(signal, [])
        for t, h, _ in subs:
            if t is target and h == handler:
                raise DuplicateConnection(f"{self.path}:{signal} -> {target.path}.{handler}")
        subs.append((target, handler, tuple(binds)))

    def disconnect(self, signal: str, target: "Node", handler: str) -> None:
        subs = self._signals.get(signal, [])
        self._signals[signal] = [s for s in subs if not (s[0] is target and s[1] == handler)]

    def is_connected(self, signal: str, target: "Node", handler: str) -> bool:
        return any(t is target and h == handler for t, h, _ in self._signals.get(signal, ()))

    def emit(self, signal: str, *args: Any) -> None:
        if signal not in SIGNALS[self.kind]:
            raise UnknownSignal(f"{self.kind.value} node {self.path} has no signal {signal!r}")
        subs = self._signals.get(signal)
        if not subs:
            return
        if signal in self._emitting:
            raise ReentrantSignal(f"{self.path}:{signal} emitted from its own handler")
        self._emitting.add(signal)
        try:
            for target, handler, binds in list(subs):
                getattr(target.behavior, handler)(*args, *binds)
        finally:
            self._emitting.discard(signal)


def add_child(parent: Node, child: Node) -> Node:
    return parent.add_child(child)


def get_node(base: Node, path: str) -> Node:
    return base.get_node(path)


def global_transform(node: Node) -> Transform:
    return node.global_transform()


def set_translation(node: Node, p: Vec3) -> None:
    node.set_translation(p)


def connect(source: Node, signal: str, target: Node, handler: str, binds: tuple = ()) -> None:
    source.connect(signal, target, handler, binds)


class SceneTree:
    """Owns the root and drives the per-tick lifecycle callbacks.

    Callback order within a tick is tree pre-order by insertion: all pending
    ``ready`` hooks, then ``process`` hooks, then timer countdowns.
    """

    def __init__(self, root_name: str = "root"):
        self.root = Node(root_name)
        self.root._tree = self
        self.ticks = 0
        self.log: Optional[list[tuple[str, str]]] = None
        self._order: Optional[list[Node]] = None
        self._process: list[Node] = []
        self._physics: list[Node] = []
        self._timers: list[Node] = []
        self._pending_ready: list[Node] = []

    def _structure_changed(self) -> None:
        self._order = None

    def _rebuild(self) -> None:
        order = list(self.root.iter_preorder())
        self._order = order
        self._process = [n for n in order if _overrides(n.behavior, "process")]
        self._physics = [n for n in order if _overrides(n.behavior, "physics_process")]
        self._timers = [n for n in order if n.timer is not None]
        self._pending_ready = [n for n in order if not n._ready_done]

    def nodes(self) -> list[Node]:
        if self._order is None:
            self._rebuild()
        return self._order  # type: ignore[return-value]

    def get_node(self, path: str) -> Node:
        return self.root.get_node(path)

    def _record(self, hook: str, node: Node) -> None:
        if self.log is not None:
            self.log.append((hook, node.path))

    def tick_callbacks(self, dt: float) -> None:
        if self._order is None:
            self._rebuild()
        if self._pending_ready:
            pending, self._pending_ready = self._pending_ready, []
            for n in pending:
                if n._ready_done:
                    continue
                n._ready_done = True
                if n.behavior is not None and _overrides(n.behavior, "ready"):
                    self._record("ready", n)
                    n.behavior.ready()
            if self._order is None:
                self._rebuild()
        for n in self._process:
            self._record("process", n)
            n.behavior.process(dt)
        for n in self._timers:
            if n.timer.countdown(dt):
                self._record("timeout", n)
                n.emit("timeout")
        self.ticks += 1

    def physics_callbacks(self, dt: float) -> None:
        if self._order is None:
            self._rebuild()
        for n in self._physics:
            self._record("physics_process", n)
            n.behavior.physics_process(dt)


def tick_callbacks(tree: SceneTree, dt: float) -> None:
    tree.tick_callbacks(dt)

