"""Fixed-step physics world: four body kinds, layer/mask filtering,
sphere/box narrowphase, sweep-and-prune broadphase, semi-implicit Euler
rigid integration, kinematic move-and-slide and area enter/exit events."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Union

from .scenegraph import Node
from .transform import (
    IDENTITY_QUAT,
    ZERO,
    Transform,
    Vec3,
    quat_from_rotvec,
    quat_mul,
    quat_normalize,
    quat_rotate,
    quat_conj,
    quat_to_matrix,
)

DEFAULT_RATE = 90
DEFAULT_GRAVITY: Vec3 = (0.0, -9.8, 0.0)
CONTACT_MARGIN = 1e-3
LAYER_BITS = 32
_ALL_LAYERS = (1 << LAYER_BITS) - 1


class PhysicsError(Exception):
    pass


class NonFiniteState(PhysicsError):
    pass


class WrongBodyKind(PhysicsError):
    pass


class BodyKind(enum.Enum):
    AREA = "Area"
    STATIC = "Static"
    RIGID = "Rigid"
    KINEMATIC = "Kinematic"


@dataclass(frozen=True)
class CollisionFilter:
    """Layer and mask bit sets; layer number ``n`` is bit ``n - 1``."""

    layer: int = 1
    mask: int = 1

    def __post_init__(self):
        for v in (self.layer, self.mask):
            if not 0 <= v <= _ALL_LAYERS:
                raise ValueError(f"filter bits out of 32-bit range: {v:#x}")

    @classmethod
    def from_layers(cls, layers: Iterable[int] = (1,), mask: Iterable[int] = (1,)) -> "CollisionFilter":
        return cls(_bits(layers), _bits(mask))

    def layers(self) -> list[int]:
        return [i + 1 for i in range(LAYER_BITS) if self.layer >> i & 1]

    def mask_layers(self) -> list[int]:
        return [i + 1 for i in range(LAYER_BITS) if self.mask >> i & 1]


def _bits(layers: Iterable[int]) -> int:
    out = 0
    for n in layers:
        if not 1 <= n <= LAYER_BITS:
            raise ValueError(f"layer number must be in 1..{LAYER_BITS}, got {n}")
        out |= 1 << (n - 1)
    return out


@dataclass(frozen=True)
class Sphere:
    radius: float

    def __post_init__(self):
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ValueError(f"sphere radius must be > 0, got {self.radius!r}")


@dataclass(frozen=True)
class Box:
    half_extents: Vec3

    def __post_init__(self):
        h = tuple(float(x) for x in self.half_extents)
        if len(h) != 3 or not all(x > 0 and math.isfinite(x) for x in h):
            raise ValueError(f"box half-extents must be three values > 0, got {self.half_extents!r}")
        object.__setattr__(self, "half_extents", h)


Shape = Union[Sphere, Box]


@dataclass
class RigidState:
    mass: float = 1.0
    inertia: Vec3 = (1.0, 1.0, 1.0)
    linear_velocity: Vec3 = (0.0, 0.0, 0.0)
    angular_velocity: Vec3 = (0.0, 0.0, 0.0)
    angular_damping: float = 1.0
    gravity_scale: float = 1.0
    # restoring torque about x, N*m/rad; 0 disables
    restoring: float = 0.0

    def __post_init__(self):
        if not (self.mass > 0 and math.isfinite(self.mass)):
            raise ValueError("mass must be > 0")
        self.inertia = tuple(float(i) for i in self.inertia)
        if len(self.inertia) != 3 or not all(i > 0 and math.isfinite(i) for i in self.inertia):
            raise ValueError("inertia components must be > 0")
        self.linear_velocity = tuple(float(v) for v in self.linear_velocity)
        self.angular_velocity = tuple(float(v) for v in self.angular_velocity)
        if self.angular_damping < 0:
            raise ValueError("angular damping must be >= 0")


class Body:
    __slots__ = ("node", "kind", "shape", "filter", "rigid", "index", "_aabb", "_aabb_gen")

    def __init__(
        self,
        node: Node,
        kind: BodyKind,
        shape: Optional[Shape] = None,
        filter: CollisionFilter = CollisionFilter(),
        rigid: Optional[RigidState] = None,
    ):
        if kind is BodyKind.RIGID and rigid is None:
            rigid = RigidState()
        self.node = node
        self.kind = kind
        self.shape = shape
        self.filter = filter
        self.rigid = rigid
        self.index = -1
        self._aabb: Optional[tuple] = None
        self._aabb_gen = -1

    def __repr__(self) -> str:
        return f"<Body {self.kind.value} {self.node.path}>"

    @property
    def transform(self) -> Transform:
        return self.node.global_transform()

    def aabb(self) -> tuple[float, float, float, float, float, float]:
        """(minx, miny, minz, maxx, maxy, maxz), cached per transform generation."""
        g = self.node.gen
        if self._aabb_gen != g or self._aabb is None:
            self._aabb = aabb(self.shape, self.node.global_transform())
            self._aabb_gen = g
        return self._aabb


class ContactKind(enum.Enum):
    AREA_BODY_ENTERED = "AreaBodyEntered"
    AREA_BODY_EXITED = "AreaBodyExited"
    AREA_AREA_ENTERED = "AreaAreaEntered"
    AREA_AREA_EXITED = "AreaAreaExited"

    @property
    def entered(self) -> bool:
        return self in (ContactKind.AREA_BODY_ENTERED, ContactKind.AREA_AREA_ENTERED)


@dataclass(frozen=True)
class ContactEvent:
    kind: ContactKind
    area: Node
    other: Node
    tick: int


@dataclass(frozen=True)
class SlideResult:
    displacement: Vec3
    blocked: bool
    normal: Optional[Vec3] = None


# -- filtering ------------------------------------------------------------


def _filter_of(x: Union[Body, CollisionFilter]) -> CollisionFilter:
    return x.filter if isinstance(x, Body) else x


def should_scan(a: Union[Body, CollisionFilter], b: Union[Body, CollisionFilter]) -> bool:
    """Directional: does ``a``'s mask include any of ``b``'s layers."""
    return (_filter_of(a).mask & _filter_of(b).layer) != 0


def interacts(a: Union[Body, CollisionFilter], b: Union[Body, CollisionFilter]) -> bool:
    fa, fb = _filter_of(a), _filter_of(b)
    return (fa.mask & fb.layer) != 0 or (fb.mask & fa.layer) != 0


# -- geometry -------------------------------------------------------------


# keeps rounding in the bounds from rejecting exactly-touching pairs
_AABB_PAD = 1e-9


def aabb(shape: Shape, xf: Transform) -> tuple[float, float, float, float, float, float]:
    x, y, z = xf.position
    if isinstance(shape, Sphere):
        r = shape.radius + _AABB_PAD
        return (x - r, y - r, z - r, x + r, y + r, z + r)
    h = shape.half_extents
    R = quat_to_matrix(xf.orientation)
    ex = abs(R[0][0]) * h[0] + abs(R[0][1]) * h[1] + abs(R[0][2]) * h[2] + _AABB_PAD
    ey = abs(R[1][0]) * h[0] + abs(R[1][1]) * h[1] + abs(R[1][2]) * h[2] + _AABB_PAD
    ez = abs(R[2][0]) * h[0] + abs(R[2][1]) * h[1] + abs(R[2][2]) * h[2] + _AABB_PAD
    return (x - ex, y - ey, z - ez, x + ex, y + ey, z + ez)


def aabb_overlap(a: tuple, b: tuple) -> bool:
    return (
        a[0] <= b[3] and b[0] <= a[3] and a[1] <= b[4] and b[1] <= a[4] and a[2] <= b[5] and b[2] <= a[5]
    )


def _sphere_box_local(center: Vec3, box_xf: Transform) -> Vec3:
    p = box_xf.position
    return quat_rotate(quat_conj(box_xf.orientation), (center[0] - p[0], center[1] - p[1], center[2] - p[2]))


def _sphere_box_overlap(s: Sphere, sxf: Transform, b: Box, bxf: Transform) -> bool:
    lx, ly, lz = _sphere_box_local(sxf.position, bxf)
    hx, hy, hz = b.half_extents
    dx = lx - hx if lx > hx else (lx + hx if lx < -hx else 0.0)
    dy = ly - hy if ly > hy else (ly + hy if ly < -hy else 0.0)
    dz = lz - hz if lz > hz else (lz + hz if lz < -hz else 0.0)
    return dx * dx + dy * dy + dz * dz <= s.radius * s.radius


_SAT_EPS = 1e-12


def _box_axes(xf: Transform) -> tuple[Vec3, Vec3, Vec3]:
    R = quat_to_matrix(xf.orientation)
    return ((R[0][0], R[1][0], R[2][0]), (R[0][1], R[1][1], R[2][1]), (R[0][2], R[1][2], R[2][2]))


def _sat_axes(axa, axb):
    axes = list(axa) + list(axb)
    for u in axa:
        for v in axb:
            c = (u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0])
            n = math.sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2])
            if n > 1e-9:
                axes.append((c[0] / n, c[1] / n, c[2] / n))
    return axes


def _project_radius(axes, h, L) -> float:
    return (
        h[0] * abs(axes[0][0] * L[0] + axes[0][1] * L[1] + axes[0][2] * L[2])
        + h[1] * abs(axes[1][0] * L[0] + axes[1][1] * L[1] + axes[1][2] * L[2])
        + h[2] * abs(axes[2][0] * L[0] + axes[2][1] * L[1] + axes[2][2] * L[2])
    )


def _box_box_sat(a: Box, axf: Transform, b: Box, bxf: Transform):
    """Yields (overlap along axis, axis, centre offset projection) for all SAT axes."""
    axa, axb = _box_axes(axf), _box_axes(bxf)
    pa, pb = axf.position, bxf.position
    T = (pa[0] - pb[0], pa[1] - pb[1], pa[2] - pb[2])
    for L in _sat_axes(axa, axb):
        ra = _project_radius(axa, a.half_extents, L)
        rb = _project_radius(axb, b.half_extents, L)
        t = T[0] * L[0] + T[1] * L[1] + T[2] * L[2]
        yield ra + rb + _SAT_EPS - abs(t), L, t


def _box_box_overlap(a: Box, axf: Transform, b: Box, bxf: Transform) -> bool:
    """15-axis separating test in ``a``'s frame, exiting on the first gap."""
    ha, hb = a.half_extents, b.half_extents
    pa, pb = axf.position, bxf.position
    d = (pb[0] - pa[0], pb[1] - pa[1], pb[2] - pa[2])
    eps = _SAT_EPS
    if axf.orientation == bxf.orientation:
        # shared frame: the face axes are the only separating candidates
        t = quat_rotate(quat_conj(axf.orientation), d)
        return (
            abs(t[0]) <= ha[0] + hb[0] + eps
            and abs(t[1]) <= ha[1] + hb[1] + eps
            and abs(t[2]) <= ha[2] + hb[2] + eps
        )
    (a00, a01, a02), (a10, a11, a12), (a20, a21, a22) = quat_to_matrix(axf.orientation)
    (b00, b01, b02), (b10, b11, b12), (b20, b21, b22) = quat_to_matrix(bxf.orientation)
    ax, ay, az = ha
    bx, by, bz = hb
    # Rij = a_i . b_j with axes as matrix columns; Qij = |Rij| padded for parallel edges
    r00 = a00 * b00 + a10 * b10 + a20 * b20
    r01 = a00 * b01 + a10 * b11 + a20 * b21
    r02 = a00 * b02 + a10 * b12 + a20 * b22
    r10 = a01 * b00 + a11 * b10 + a21 * b20
    r11 = a01 * b01 + a11 * b11 + a21 * b21
    r12 = a01 * b02 + a11 * b12 + a21 * b22
    r20 = a02 * b00 + a12 * b10 + a22 * b20
    r21 = a02 * b01 + a12 * b11 + a22 * b21
    r22 = a02 * b02 + a12 * b12 + a22 * b22
    pad = 1e-12
    q00, q01, q02 = abs(r00) + pad, abs(r01) + pad, abs(r02) + pad
    q10, q11, q12 = abs(r10) + pad, abs(r11) + pad, abs(r12) + pad
    q20, q21, q22 = abs(r20) + pad, abs(r21) + pad, abs(r22) + pad
    dx, dy, dz = d
    t0 = dx * a00 + dy * a10 + dz * a20
    t1 = dx * a01 + dy * a11 + dz * a21
    t2 = dx * a02 + dy * a12 + dz * a22
    # face axes of a, then of b
    if abs(t0) > ax + bx * q00 + by * q01 + bz * q02 + eps:
        return False
    if abs(t1) > ay + bx * q10 + by * q11 + bz * q12 + eps:
        return False
    if abs(t2) > az + bx * q20 + by * q21 + bz * q22 + eps:
        return False
    if abs(t0 * r00 + t1 * r10 + t2 * r20) > ax * q00 + ay * q10 + az * q20 + bx + eps:
        return False
    if abs(t0 * r01 + t1 * r11 + t2 * r21) > ax * q01 + ay * q11 + az * q21 + by + eps:
        return False
    if abs(t0 * r02 + t1 * r12 + t2 * r22) > ax * q02 + ay * q12 + az * q22 + bz + eps:
        return False
    # edge cross products a_i x b_j
    if abs(t2 * r10 - t1 * r20) > ay * q20 + az * q10 + by * q02 + bz * q01 + eps:
        return False
    if abs(t2 * r11 - t1 * r21) > ay * q21 + az * q11 + bx * q02 + bz * q00 + eps:
        return False
    if abs(t2 * r12 - t1 * r22) > ay * q22 + az * q12 + bx * q01 + by * q00 + eps:
        return False
    if abs(t0 * r20 - t2 * r00) > ax * q20 + az * q00 + by * q12 + bz * q11 + eps:
        return False
    if abs(t0 * r21 - t2 * r01) > ax * q21 + az * q01 + bx * q12 + bz * q10 + eps:
        return False
    if abs(t0 * r22 - t2 * r02) > ax * q22 + az * q02 + bx * q11 + by * q10 + eps:
        return False
    if abs(t1 * r00 - t0 * r10) > ax * q10 + ay * q00 + by * q22 + bz * q21 + eps:
        return False
    if abs(t1 * r01 - t0 * r11) > ax * q11 + ay * q01 + bx * q22 + bz * q20 + eps:
        return False
    if abs(t1 * r02 - t0 * r12) > ax * q12 + ay * q02 + bx * q21 + by * q20 + eps:
        return False
    return True


def overlap(shape_a: Shape, xf_a: Transform, shape_b: Shape, xf_b: Transform) -> bool:
    """Closed-set intersection test; touching counts as overlap."""
    if isinstance(shape_a, Sphere):
        if isinstance(shape_b, Sphere):
            pa, pb = xf_a.position, xf_b.position
            dx, dy, dz = pa[0] - pb[0], pa[1] - pb[1], pa[2] - pb[2]
            r = shape_a.radius + shape_b.radius
            return dx * dx + dy * dy + dz * dz <= r * r
        return _sphere_box_overlap(shape_a, xf_a, shape_b, xf_b)
    if isinstance(shape_b, Sphere):
        return _sphere_box_overlap(shape_b, xf_b, shape_a, xf_a)
    return _box_box_overlap(shape_a, xf_a, shape_b, xf_b)


def separation(shape_a: Shape, xf_a: Transform, shape_b: Shape, xf_b: Transform) -> tuple[float, Vec3]:
    """Signed separation and the unit normal that pushes ``a`` away from ``b``.

    Negative separation is penetration depth. For box pairs that do not
    overlap the value is the largest SAT gap, a lower bound on distance.
    """
    if isinstance(shape_a, Sphere) and isinstance(shape_b, Sphere):
        pa, pb = xf_a.position, xf_b.position
        d = (pa[0] - pb[0], pa[1] - pb[1], pa[2] - pb[2])
        n = math.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
        normal = (d[0] / n, d[1] / n, d[2] / n) if n > 0 else (0.0, 1.0, 0.0)
        return n - shape_a.radius - shape_b.radius, normal
    if isinstance(shape_a, Sphere):
        return _sphere_box_separation(shape_a, xf_a, shape_b, xf_b)
    if isinstance(shape_b, Sphere):
        sep, n = _sphere_box_separation(shape_b, xf_b, shape_a, xf_a)
        return sep, (-n[0], -n[1], -n[2])
    best_pen: Optional[tuple[float, Vec3, float]] = None
    best_gap = -math.inf
    for ov, L, t in _box_box_sat(shape_a, xf_a, shape_b, xf_b):
        if ov < 0.0:
            best_gap = max(best_gap, -ov)
        elif best_pen is None or ov < best_pen[0]:
            best_pen = (ov, L, t)
    if best_gap > -math.inf:
        return best_gap, (0.0, 0.0, 0.0)
    assert best_pen is not None
    ov, L, t = best_pen
    s = 1.0 if t >= 0 else -1.0
    return -ov, (L[0] * s, L[1] * s, L[2] * s)


def _sphere_box_separation(s: Sphere, sxf: Transform, b: Box, bxf: Transform) -> tuple[float, Vec3]:
    local = _sphere_box_local(sxf.position, bxf)
    h = b.half_extents
    clamped = tuple(min(max(local[i], -h[i]), h[i]) for i in range(3))
    d = (local[0] - clamped[0], local[1] - clamped[1], local[2] - clamped[2])
    dist = math.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
    if dist > 0.0:
        n_local = (d[0] / dist, d[1] / dist, d[2] / dist)
        return dist - s.radius, quat_rotate(bxf.orientation, n_local)
    # centre inside the box: leave through the nearest face
    best_i, best_depth = 0, math.inf
    for i in range(3):
        depth = h[i] - abs(local[i])
        if depth < best_depth:
            best_i, best_depth = i, depth
    n_local = [0.0, 0.0, 0.0]
    n_local[best_i] = 1.0 if local[best_i] >= 0 else -1.0
    return -(best_depth + s.radius), quat_rotate(bxf.orientation, tuple(n_local))


def body_overlap(a: Body, b: Body) -> bool:
    if a.shape is None or b.shape is None:
        return False
    return overlap(a.shape, a.transform, b.shape, b.transform)


def brute_force_pairs(bodies: list[Body]) -> set[tuple[Body, Body]]:
    """O(N^2) exact overlap pairs among filter-interacting bodies."""
    out = set()
    for i, a in enumerate(bodies):
        for b in bodies[i + 1 :]:
            if interacts(a, b) and body_overlap(a, b):
                out.add((a, b))
    return out


# -- world ----------------------------------------------------------------


class PhysicsWorld:
    def __init__(self, rate: int = DEFAULT_RATE, gravity: Vec3 = DEFAULT_GRAVITY, margin: float = CONTACT_MARGIN):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.rate = rate
        self.dt = 1.0 / rate
        self.gravity = tuple(float(g) for g in gravity)
        self.margin = margin
        self.tick = 0
        self.bodies: list[Body] = []
        self._queued: list[tuple[Body, Vec3]] = []
        self._overlaps: set[tuple[Body, Body]] = set()
        self._cur: set[tuple[Body, Body]] = set()
        self._seen: dict[int, int] = {}
        self._shaped: list[Body] = []
        self._adjacent: dict[int, list[int]] = {}
        self._monitors: Optional[list[tuple[Body, Body, bool, bool]]] = None
        self._responders: Optional[list[tuple[Body, list[Body]]]] = None

    @property
    def time(self) -> float:
        return self.tick / self.rate

    def add_body(self, body: Body) -> Body:
        body.index = len(self.bodies)
        self.bodies.append(body)
        body.node.body = body
        self._monitors = None
        self._responders = None
        return body

    def body_of(self, node: Node) -> Body:
        if node.body is None:
            raise WrongBodyKind(f"{node.path} has no physics body")
        return node.body

    # -- queries --------------------------------------------------------

    def broadphase_pairs(self) -> set[tuple[Body, Body]]:
        """Sweep and prune along x; returns filter-passing pairs whose AABBs touch."""
        items = [(b.aabb(), b) for b in self.bodies if b.shape is not None]
        items.sort(key=lambda it: (it[0][0], it[1].index))
        out: set[tuple[Body, Body]] = set()
        active: list[tuple[tuple, Body]] = []
        for box, body in items:
            minx = box[0]
            active = [a for a in active if a[0][3] >= minx]
            for obox, other in active:
                if (
                    box[1] <= obox[4]
                    and obox[1] <= box[4]
                    and box[2] <= obox[5]
                    and obox[2] <= box[5]
                    and interacts(body, other)
                ):
                    out.add((other, body) if other.index < body.index else (body, other))
            active.append((box, body))
        return out

    def _build_monitors(self) -> None:
        monitors = []
        bs = [b for b in self.bodies if b.shape is not None]
        for i, a in enumerate(bs):
            for b in bs[i + 1 :]:
                a_area = a.kind is BodyKind.AREA
                b_area = b.kind is BodyKind.AREA
                a_watch = a_area and should_scan(a, b)
                b_watch = b_area and should_scan(b, a)
                if a_watch or b_watch:
                    monitors.append((a, b, a_watch, b_watch))
        self._monitors = monitors
        self._shaped = bs
        adjacent: dict[int, list[int]] = {b.index: [] for b in bs}
        for i, (a, b, _, _) in enumerate(monitors):
            adjacent[a.index].append(i)
            adjacent[b.index].append(i)
        self._adjacent = adjacent
        self._seen = {}
        self._state = [False] * len(monitors)
        self._cur = set()
        responders = []
        for r in bs:
            if r.kind is not BodyKind.RIGID:
                continue
            others = [o for o in bs if o is not r and o.kind is not BodyKind.AREA and interacts(r, o)]
            if others:
                responders.append((r, others))
        self._responders = responders
        self._rigid = [b for b in self.bodies if b.kind is BodyKind.RIGID]

    def _pair_overlaps(self, a: Body, b: Body) -> bool:
        return aabb_overlap(a.aabb(), b.aabb()) and overlap(a.shape, a.transform, b.shape, b.transform)

    def area_overlaps(self) -> set[tuple[Body, Body]]:
        """Current directional (area, other) overlap set.

        Only monitored pairs with a body whose transform changed since the
        last call are re-tested.
        """
        if self._monitors is None:
            self._build_monitors()
        seen = self._seen
        adjacent = self._adjacent
        todo: set[int] = set()
        for b in self._shaped:
            g = b.node.gen
            if seen.get(b.index) != g:
                seen[b.index] = g
                b._aabb = aabb(b.shape, b.node.global_transform())
                b._aabb_gen = g
                todo.update(adjacent[b.index])
        if not todo:
            return self._cur
        state = self._state
        monitors = self._monitors
        flipped = []
        for i in todo:
            a, b, _, _ = monitors[i]  # type: ignore[index]
            A, B = a._aabb, b._aabb
            hit = (
                A[0] <= B[3]
                and B[0] <= A[3]
                and A[1] <= B[4]
                and B[1] <= A[4]
                and A[2] <= B[5]
                and B[2] <= A[5]
                and overlap(a.shape, a.node.global_transform(), b.shape, b.node.global_transform())
            )
            if hit != state[i]:
                state[i] = hit
                flipped.append(i)
        if flipped:
            cur = set(self._cur)
            for i in flipped:
                a, b, a_watch, b_watch = monitors[i]  # type: ignore[index]
                op = cur.add if state[i] else cur.discard
                if a_watch:
                    op((a, b))
                if b_watch:
                    op((b, a))
            self._cur = cur
        return self._cur

    # -- dynamics -------------------------------------------------------

    def _check_rigid(self, body: Body) -> RigidState:
        if body.kind is not BodyKind.RIGID or body.rigid is None:
            raise WrongBodyKind(f"{body.node.path} is {body.kind.value}, not Rigid")
        return body.rigid

    def integrate_rigid(self, body: Body, dt: Optional[float] = None) -> None:
        rs = self._check_rigid(body)
        dt = self.dt if dt is None else dt
        g = rs.gravity_scale
        gx, gy, gz = self.gravity[0] * g, self.gravity[1] * g, self.gravity[2] * g
        vx, vy, vz = rs.linear_velocity
        wx, wy, wz = rs.angular_velocity
        if not (rs.restoring or vx or vy or vz or gx or gy or gz or wx or wy or wz):
            return
        xf = body.node.global_transform()
        q = xf.orientation
        restoring = 0.0
        if rs.restoring:
            theta = 2.0 * math.atan2(q[1], q[0])
            if theta > math.pi:
                theta -= 2.0 * math.pi
            elif theta < -math.pi:
                theta += 2.0 * math.pi
            restoring = -rs.restoring * theta / rs.inertia[0] * dt
        if not (vx or vy or vz or gx or gy or gz or wx or wy or wz or restoring):
            return
        vx, vy, vz = vx + gx * dt, vy + gy * dt, vz + gz * dt
        p = xf.position
        pos = (p[0] + vx * dt, p[1] + vy * dt, p[2] + vz * dt)
        wx += restoring
        if rs.angular_damping:
            f = math.exp(-rs.angular_damping * dt)
            wx, wy, wz = wx * f, wy * f, wz * f
        if wx or wy or wz:
            q = quat_normalize(quat_mul(quat_from_rotvec((wx * dt, wy * dt, wz * dt)), q))
        state = (vx, vy, vz, wx, wy, wz) + pos + q
        if not all(map(math.isfinite, state)):
            raise NonFiniteState(f"{body.node.path} left finite state: {state}")
        rs.linear_velocity = (vx, vy, vz)
        rs.angular_velocity = (wx, wy, wz)
        _set_global(body.node, Transform._raw(pos, q))

    def apply_torque_impulse(self, body: Body, torque_impulse: Vec3) -> Vec3:
        """Apply ``dw = I^-1 tau`` (inertia in body axes); returns dw."""
        rs = self._check_rigid(body)
        q = body.node.global_transform().orientation
        local = quat_rotate(quat_conj(q), tuple(float(t) for t in torque_impulse))
        local = (local[0] / rs.inertia[0], local[1] / rs.inertia[1], local[2] / rs.inertia[2])
        dw = quat_rotate(q, local)
        w = rs.angular_velocity
        rs.angular_velocity = (w[0] + dw[0], w[1] + dw[1], w[2] + dw[2])
        return dw

    def apply_impulse(self, body: Body, impulse: Vec3) -> None:
        rs = self._check_rigid(body)
        v = rs.linear_velocity
        rs.linear_velocity = tuple(v[i] + impulse[i] / rs.mass for i in range(3))

    def _resolve_rigid_contacts(self) -> None:
        if self._responders is None:
            self._build_monitors()
        for r, others in self._responders:  # type: ignore[union-attr]
            for o in others:
                if not aabb_overlap(r.aabb(), o.aabb()):
                    continue
                sep, n = separation(r.shape, r.transform, o.shape, o.transform)
                if sep >= 0.0:
                    continue
                share = 0.5 if o.kind is BodyKind.RIGID else 1.0
                push = -sep * share
                p = r.transform.position
                _set_global(r.node, r.transform.with_position((p[0] + n[0] * push, p[1] + n[1] * push, p[2] + n[2] * push)))
                _clamp_normal_velocity(r.rigid, n)
                if o.kind is BodyKind.RIGID:
                    po = o.transform.position
                    _set_global(
                        o.node, o.transform.with_position((po[0] - n[0] * push, po[1] - n[1] * push, po[2] - n[2] * push))
                    )
                    _clamp_normal_velocity(o.rigid, (-n[0], -n[1], -n[2]))

    def move_and_slide(self, body: Body, velocity: Vec3, dt: Optional[float] = None) -> SlideResult:
        if body.kind is not BodyKind.KINEMATIC:
            raise WrongBodyKind(f"{body.node.path} is {body.kind.value}, not Kinematic")
        dt = self.dt if dt is None else dt
        xf = body.node.global_transform()
        start = xf.position
        pos = (start[0] + velocity[0] * dt, start[1] + velocity[1] * dt, start[2] + velocity[2] * dt)
        if not all(math.isfinite(c) for c in pos):
            raise NonFiniteState(f"{body.node.path} moved to non-finite position {pos}")
        blocked = False
        normal: Optional[Vec3] = None
        if body.shape is not None:
            obstacles = [
                o
                for o in self.bodies
                if o is not body
                and o.shape is not None
                and o.kind in (BodyKind.STATIC, BodyKind.KINEMATIC)
                and interacts(body, o)
            ]
            target = self.margin * 0.5
            for _ in range(4):
                cand = Transform._raw(pos, xf.orientation)
                worst = None
                for o in obstacles:
                    sep, n = separation(body.shape, cand, o.shape, o.transform)
                    if sep < 0.0 and (worst is None or sep < worst[0]):
                        worst = (sep, n)
                if worst is None:
                    break
                sep, n = worst
                push = target - sep
                pos = (pos[0] + n[0] * push, pos[1] + n[1] * push, pos[2] + n[2] * push)
                blocked = True
                normal = n
        _set_global(body.node, xf.with_position(pos))
        disp = (pos[0] - start[0], pos[1] - start[1], pos[2] - start[2])
        return SlideResult(disp, blocked, normal)

    def queue_move(self, body: Body, velocity: Vec3) -> None:
        if body.kind is not BodyKind.KINEMATIC:
            raise WrongBodyKind(f"{body.node.path} is {body.kind.value}, not Kinematic")
        self._queued.append((body, tuple(velocity)))

    def step(self, dt: Optional[float] = None, physics_phase: Optional[Callable[[float], None]] = None) -> list[ContactEvent]:
        """Advance one fixed tick and return the sorted area enter/exit events."""
        if dt is not None and dt != self.dt:
            raise ValueError(f"step size is fixed at 1/{self.rate} s, got {dt!r}")
        dt = self.dt
        tick = self.tick + 1
        if self._responders is None:
            self._build_monitors()
        for b in self._rigid:
            self.integrate_rigid(b, dt)
        self._resolve_rigid_contacts()
        if physics_phase is not None:
            physics_phase(dt)
        if self._queued:
            queued, self._queued = self._queued, []
            for b, v in queued:
                self.move_and_slide(b, v, dt)
        cur = self.area_overlaps()
        prev = self._overlaps
        events = []
        if cur != prev:
            for area, other in cur - prev:
                kind = ContactKind.AREA_AREA_ENTERED if other.kind is BodyKind.AREA else ContactKind.AREA_BODY_ENTERED
                events.append(ContactEvent(kind, area.node, other.node, tick))
            for area, other in prev - cur:
                kind = ContactKind.AREA_AREA_EXITED if other.kind is BodyKind.AREA else ContactKind.AREA_BODY_EXITED
                events.append(ContactEvent(kind, area.node, other.node, tick))
            events.sort(key=lambda e: (e.area.path, e.other.path, e.kind.value))
        self._overlaps = cur
        self.tick = tick
        return events

    def state_snapshot(self) -> tuple:
        """Hashable full dynamic state, for determinism checks."""
        out = []
        for b in self.bodies:
            xf = b.node.global_transform()
            rs = b.rigid
            extra = (rs.linear_velocity, rs.angular_velocity) if rs is not None else ()
            out.append((b.node.path, xf.position, xf.orientation) + extra)
        return (self.tick, tuple(out))


def _set_global(node: Node, xf: Transform) -> None:
    parent = node.parent
    if parent is None:
        node.local = xf
        return
    pg = parent.global_transform()
    if pg.orientation is IDENTITY_QUAT:
        pp, p = pg.position, xf.position
        node.local = xf if pp == ZERO else Transform._raw((p[0] - pp[0], p[1] - pp[1], p[2] - pp[2]), xf.orientation)
    else:
        node.local = pg.inverse().compose(xf)


def _clamp_normal_velocity(rs: RigidState, n: Vec3) -> None:
    v = rs.linear_velocity
    vn = v[0] * n[0] + v[1] * n[1] + v[2] * n[2]
    if vn < 0.0:
        rs.linear_velocity = (v[0] - vn * n[0], v[1] - vn * n[1], v[2] - vn * n[2])


__all__ = [
    "Body",
    "BodyKind",
    "Box",
    "CollisionFilter",
    "ContactEvent",
    "ContactKind",
    "NonFiniteState",
    "PhysicsWorld",
    "RigidState",
    "SlideResult",
    "Sphere",
    "WrongBodyKind",
    "brute_force_pairs",
    "interacts",
    "overlap",
    "separation",
    "should_scan",
]
