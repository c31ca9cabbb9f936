"""Build a runnable World from a parsed scene document."""

from __future__ import annotations

from typing import Optional

from .devices import Role
from .experience import BEHAVIORS, ExperienceBehavior
from .physics import Body, BodyKind, Box, CollisionFilter, RigidState, Sphere
from .sceneio import NodeDecl, SceneDoc, SemanticError
from .scenegraph import Node, NodeKind, Timer
from .transform import Transform, quat_from_axis_angle

_NODE_KIND = {
    "Spatial": NodeKind.SPATIAL,
    "StaticBody": NodeKind.PHYSICS_BODY,
    "RigidBody": NodeKind.PHYSICS_BODY,
    "KinematicBody": NodeKind.PHYSICS_BODY,
    "Area": NodeKind.AREA,
    "Camera": NodeKind.CAMERA,
    "Origin": NodeKind.ORIGIN,
    "Controller": NodeKind.CONTROLLER,
    "Timer": NodeKind.TIMER,
    "Mesh": NodeKind.MESH_STUB,
}
_BODY_KIND = {
    "StaticBody": BodyKind.STATIC,
    "RigidBody": BodyKind.RIGID,
    "KinematicBody": BodyKind.KINEMATIC,
    "Area": BodyKind.AREA,
}
# params consumed by the node itself; the rest go to the behavior
_KIND_PARAMS = {
    "RigidBody": ("mass", "inertia", "damping", "gravity_scale", "restore"),
    "Controller": ("role",),
    "Camera": ("role",),
    "Timer": ("period", "one_shot", "autostart"),
    "Mesh": ("visible",),
}


def _err(decl: NodeDecl, message: str) -> SemanticError:
    return SemanticError(decl.line, 1, f"{decl.path}: {message}", node=decl.path)


def _floats(decl: NodeDecl, key: str, text: str, n: Optional[int] = None) -> tuple[float, ...]:
    try:
        vals = tuple(float(p) for p in text.split(","))
    except ValueError:
        raise _err(decl, f"{key} must be numeric, got {text!r}") from None
    if n is not None and len(vals) != n:
        raise _err(decl, f"{key} needs {n} value(s), got {len(vals)}")
    return vals


def _flag(decl: NodeDecl, key: str, text: str) -> bool:
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise _err(decl, f"{key} must be a boolean, got {text!r}")


def _filter(decl: NodeDecl) -> CollisionFilter:
    layer = decl.layer if decl.layer is not None else (1,)
    mask = decl.mask if decl.mask is not None else (1,)
    return CollisionFilter.from_layers(layer, mask)


def _rigid_state(decl: NodeDecl, kp: dict[str, str]) -> RigidState:
    kw = {}
    if "mass" in kp:
        kw["mass"] = _floats(decl, "mass", kp["mass"], 1)[0]
    if "inertia" in kp:
        v = _floats(decl, "inertia", kp["inertia"])
        if len(v) not in (1, 3):
            raise _err(decl, "inertia needs 1 or 3 values")
        kw["inertia"] = v * 3 if len(v) == 1 else v
    if "damping" in kp:
        kw["angular_damping"] = _floats(decl, "damping", kp["damping"], 1)[0]
    if "gravity_scale" in kp:
        kw["gravity_scale"] = _floats(decl, "gravity_scale", kp["gravity_scale"], 1)[0]
    if "restore" in kp:
        kw["restoring"] = _floats(decl, "restore", kp["restore"], 1)[0]
    try:
        return RigidState(**kw)
    except ValueError as e:
        raise _err(decl, str(e)) from None


def _build_node(world, decl: NodeDecl) -> tuple[Node, dict[str, str]]:
    own = _KIND_PARAMS.get(decl.kind, ())
    kp = {k: v for k, v in decl.params if k in own}
    rest = {k: v for k, v in decl.params if k not in own}
    q = (1.0, 0.0, 0.0, 0.0)
    if decl.rot is not None:
        q = quat_from_axis_angle(decl.rot[:3], decl.rot[3])
    node = Node(decl.name, _NODE_KIND[decl.kind], Transform(decl.pos, q))
    if decl.kind == "Timer":
        if "period" not in kp:
            raise _err(decl, "Timer needs period=")
        period = _floats(decl, "period", kp["period"], 1)[0]
        try:
            node.timer = Timer(
                period,
                one_shot=_flag(decl, "one_shot", kp.get("one_shot", "0")),
                autostart=_flag(decl, "autostart", kp.get("autostart", "0")),
            )
        except ValueError as e:
            raise _err(decl, str(e)) from None
    elif decl.kind == "Mesh":
        node.visible = _flag(decl, "visible", kp.get("visible", "1"))
    elif "role" in kp:
        try:
            role = Role(kp["role"])
        except ValueError:
            raise _err(decl, f"unknown role {kp['role']!r}") from None
        world.rig.bind(role, node)
    return node, {"kp": kp, "rest": rest}


def _attach_body(world, node: Node, decl: NodeDecl, kp: dict[str, str]) -> None:
    shape = None
    if decl.shape is not None:
        kind, dims = decl.shape
        shape = Sphere(dims[0]) if kind == "sphere" else Box(tuple(dims))
    rigid = _rigid_state(decl, kp) if decl.kind == "RigidBody" else None
    world.physics.add_body(Body(node, _BODY_KIND[decl.kind], shape, _filter(decl), rigid))


def load_world(scene: SceneDoc, **world_kw):
    """Construct the tree, bodies and behaviors. Ready callbacks run on the
    first tick."""
    from .engine import World

    world = World(**world_kw)
    for decl in scene.nodes:
        node, parts = _build_node(world, decl)
        parent = world.root if not decl.parent else world.root.get_node(decl.parent)
        parent.add_child(node)
        if decl.kind in _BODY_KIND:
            _attach_body(world, node, decl, parts["kp"])
        rest = parts["rest"]
        if decl.behavior is not None:
            cls = BEHAVIORS.get(decl.behavior)
            if cls is None:
                raise _err(decl, f"unknown behavior {decl.behavior!r}")
            try:
                beh: ExperienceBehavior = cls(world, rest)
            except ValueError as e:
                raise _err(decl, str(e)) from None
            node.attach(beh)
        elif rest:
            raise _err(decl, f"unknown parameter(s) {sorted(rest)} for {decl.kind}")
    return world
