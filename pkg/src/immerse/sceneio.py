"""Line-oriented scene and scenario formats, their pretty-printers, and the
trace record format.

Scene line::

    node <Kind> "<Name>" [under <path>] [layer=1,2] [mask=3] [pos=x,y,z]
        [rot=ax,ay,az,angle] [shape=sphere r | shape=box hx,hy,hz]
        [behavior=<id>] [key=value ...]

Scenario lines::

    at <t> pose <Role> x y z [ax ay az angle]
    at <t> press <node-path>
    at <t> trigger <LeftHand|RightHand> <down|up>
    run_until <t>

Both formats accept an optional leading ``version 1`` line, blank lines and
``#`` comments.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal, localcontext
from fractions import Fraction
from typing import Any, Iterable, Optional, Union

FORMAT_VERSION = "1"

SCENE_KINDS = (
    "Spatial",
    "StaticBody",
    "RigidBody",
    "KinematicBody",
    "Area",
    "Camera",
    "Origin",
    "Controller",
    "Timer",
    "Mesh",
)
BODY_KINDS = ("StaticBody", "RigidBody", "KinematicBody", "Area")
ROLES = ("Head", "LeftHand", "RightHand", "LeftFoot", "RightFoot")
HANDS = ("LeftHand", "RightHand")

_NUMBER = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?\Z")
_INT = re.compile(r"\d+\Z")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_PATH = re.compile(r"[^\s\"/]+(?:/[^\s\"/]+)*\Z")


class ParseError(Exception):
    """Positioned diagnostic; line and column are 1-based."""

    def __init__(self, line: int, column: int, expected: str, found: str = ""):
        self.line = line
        self.column = column
        self.expected = expected
        self.found = found
        msg = f"{line}:{column}: expected {expected}"
        if found:
            msg += f", found {found!r}"
        super().__init__(msg)


class SemanticError(ParseError):
    def __init__(self, line: int, column: int, message: str, node: str = ""):
        self.node = node
        super().__init__(line, column, message)
        self.args = (f"{line}:{column}: {message}",)


class NonMonotonicTime(ParseError):
    pass


# -- tokenizer ------------------------------------------------------------


@dataclass(frozen=True)
class _Tok:
    text: str
    col: int
    quoted: bool = False


def _decode(text: Union[str, bytes]) -> str:
    if isinstance(text, str):
        return text
    try:
        return text.decode("utf-8")
    except UnicodeDecodeError as e:
        prefix = text[: e.start]
        line = prefix.count(b"\n") + 1
        last = prefix.rfind(b"\n")
        col = len(prefix[last + 1 :].decode("utf-8", errors="replace")) + 1
        raise ParseError(line, col, "UTF-8 text", f"byte 0x{text[e.start]:02x}") from None


def _lines(text: str) -> Iterable[tuple[int, str]]:
    for i, raw in enumerate(text.split("\n"), start=1):
        yield i, raw[:-1] if raw.endswith("\r") else raw


def _tokenize(line: str, lineno: int) -> list[_Tok]:
    toks: list[_Tok] = []
    i, n = 0, len(line)
    while i < n:
        c = line[i]
        if c.isspace():
            i += 1
            continue
        if c == "#":
            break
        if c == '"':
            j = line.find('"', i + 1)
            if j < 0:
                raise ParseError(lineno, i + 1, "closing '\"'", line[i:])
            toks.append(_Tok(line[i + 1 : j], i + 1, True))
            i = j + 1
            if i < n and not line[i].isspace() and line[i] != "#":
                raise ParseError(lineno, i + 1, "whitespace after quoted name", line[i])
            continue
        j = i
        while j < n and not line[j].isspace() and line[j] != "#":
            if line[j] == '"':
                raise ParseError(lineno, j + 1, "token without quotes", line[i : j + 1])
            j += 1
        toks.append(_Tok(line[i:j], i + 1))
        i = j
    return toks


def _number(tok: _Tok, lineno: int, what: str = "number", text: Optional[str] = None, col: Optional[int] = None) -> float:
    s = tok.text if text is None else text
    if tok.quoted or not _NUMBER.match(s):
        raise ParseError(lineno, tok.col if col is None else col, what, s)
    v = float(s)
    if v != v or v in (float("inf"), float("-inf")):
        raise ParseError(lineno, tok.col, f"finite {what}", s)
    return v


def _numbers(tok: _Tok, value: str, vcol: int, lineno: int, count: Optional[int], what: str) -> tuple[float, ...]:
    parts = value.split(",")
    if count is not None and len(parts) != count:
        raise ParseError(lineno, vcol, f"{count} comma-separated numbers for {what}", value)
    out = []
    col = vcol
    for p in parts:
        out.append(_number(tok, lineno, f"number in {what}", p, col))
        col += len(p) + 1
    return tuple(out)


# -- scene ----------------------------------------------------------------


@dataclass(frozen=True)
class NodeDecl:
    kind: str
    name: str
    parent: str = ""
    layer: Optional[tuple[int, ...]] = None
    mask: Optional[tuple[int, ...]] = None
    pos: tuple[float, float, float] = (0.0, 0.0, 0.0)
    rot: Optional[tuple[float, float, float, float]] = None
    shape: Optional[tuple[str, tuple[float, ...]]] = None
    behavior: Optional[str] = None
    params: tuple[tuple[str, str], ...] = ()
    line: int = field(default=0, compare=False)

    @property
    def path(self) -> str:
        return f"{self.parent}/{self.name}" if self.parent else self.name

    def param(self, key: str, default: Optional[str] = None) -> Optional[str]:
        for k, v in self.params:
            if k == key:
                return v
        return default


@dataclass(frozen=True)
class SceneDoc:
    nodes: tuple[NodeDecl, ...] = ()

    def __len__(self) -> int:
        return len(self.nodes)

    def find(self, path: str) -> Optional[NodeDecl]:
        for n in self.nodes:
            if n.path == path:
                return n
        return None


_RESERVED = ("layer", "mask", "pos", "rot", "shape", "behavior")


def _layers(tok: _Tok, value: str, vcol: int, lineno: int) -> tuple[int, ...]:
    if value == "":
        return ()
    out = []
    col = vcol
    for p in value.split(","):
        if not _INT.match(p) or not 1 <= int(p) <= 32:
            raise ParseError(lineno, col, "layer number 1..32", p)
        out.append(int(p))
        col += len(p) + 1
    return tuple(sorted(set(out)))


def _parse_node(toks: list[_Tok], lineno: int, declared: set[str]) -> NodeDecl:
    if len(toks) < 2:
        raise ParseError(lineno, toks[0].col + len(toks[0].text), "node kind")
    kt = toks[1]
    if kt.quoted or not _IDENT.match(kt.text):
        raise ParseError(lineno, kt.col, "node kind", kt.text)
    if kt.text not in SCENE_KINDS:
        raise SemanticError(lineno, kt.col, f"unknown node kind {kt.text!r}")
    if len(toks) < 3 or not toks[2].quoted:
        col = toks[2].col if len(toks) > 2 else kt.col + len(kt.text)
        raise ParseError(lineno, col, "quoted node name", toks[2].text if len(toks) > 2 else "")
    nt = toks[2]
    name = nt.text
    if not name or "/" in name or name in (".", "..") or any(ch.isspace() for ch in name):
        raise SemanticError(lineno, nt.col, f"invalid node name {name!r}")
    fields: dict[str, Any] = {"kind": kt.text, "name": name}
    params: list[tuple[str, str]] = []
    seen: set[str] = set()
    i = 3
    if i < len(toks) and toks[i].text == "under" and not toks[i].quoted:
        if i + 1 >= len(toks):
            raise ParseError(lineno, toks[i].col + 5, "parent path after 'under'")
        pt = toks[i + 1]
        if pt.quoted or not _PATH.match(pt.text) or any(s in (".", "..") for s in pt.text.split("/")):
            raise ParseError(lineno, pt.col, "parent path", pt.text)
        if pt.text not in declared:
            raise SemanticError(lineno, pt.col, f"parent {pt.text!r} is not declared before this node")
        fields["parent"] = pt.text
        i += 2
    while i < len(toks):
        tok = toks[i]
        i += 1
        if tok.quoted or "=" not in tok.text:
            raise ParseError(lineno, tok.col, "key=value", tok.text)
        key, value = tok.text.split("=", 1)
        vcol = tok.col + len(key) + 1
        if not _IDENT.match(key):
            raise ParseError(lineno, tok.col, "attribute name", key)
        if key in seen:
            raise ParseError(lineno, tok.col, f"single {key}=", tok.text)
        seen.add(key)
        if key in ("layer", "mask"):
            fields[key] = _layers(tok, value, vcol, lineno)
        elif key == "pos":
            fields["pos"] = _numbers(tok, value, vcol, lineno, 3, "pos")
        elif key == "rot":
            fields["rot"] = _numbers(tok, value, vcol, lineno, 4, "rot")
        elif key == "shape":
            if value not in ("sphere", "box"):
                raise ParseError(lineno, vcol, "'sphere' or 'box'", value)
            if i >= len(toks):
                raise ParseError(lineno, tok.col + len(tok.text), f"{value} dimensions")
            dt = toks[i]
            i += 1
            dims = _numbers(dt, dt.text, dt.col, lineno, 1 if value == "sphere" else 3, f"{value} dimensions")
            if not all(d > 0 for d in dims):
                raise ParseError(lineno, dt.col, "positive dimensions", dt.text)
            fields["shape"] = (value, dims)
        elif key == "behavior":
            if not _IDENT.match(value):
                raise ParseError(lineno, vcol, "behavior id", value)
            fields["behavior"] = value
        else:
            if value == "":
                raise ParseError(lineno, vcol, f"value for {key}")
            params.append((key, value))
    fields["params"] = tuple(params)
    decl = NodeDecl(**fields, line=lineno)
    if decl.kind not in BODY_KINDS:
        for key in ("layer", "mask", "shape"):
            if fields.get(key) is not None:
                tok = next(t for t in toks if t.text.startswith(key + "="))
                raise SemanticError(lineno, tok.col, f"{key} is only valid on physics bodies and areas")
    if decl.rot is not None and decl.rot[3] != 0.0 and decl.rot[:3] == (0.0, 0.0, 0.0):
        tok = next(t for t in toks if t.text.startswith("rot="))
        raise SemanticError(lineno, tok.col, "rotation axis must be nonzero")
    if decl.path in declared:
        raise SemanticError(lineno, nt.col, f"duplicate node name {name!r} under {decl.parent or 'root'}")
    return decl


def _parse_version(toks: list[_Tok], lineno: int) -> None:
    if len(toks) != 2 or toks[1].text != FORMAT_VERSION or toks[1].quoted:
        col = toks[1].col if len(toks) > 1 else toks[0].col + len(toks[0].text)
        raise ParseError(lineno, col, f"version {FORMAT_VERSION}", toks[1].text if len(toks) > 1 else "")


def parse_scene(text: Union[str, bytes]) -> SceneDoc:
    text = _decode(text)
    nodes: list[NodeDecl] = []
    declared: set[str] = set()
    seen_content = False
    for lineno, line in _lines(text):
        toks = _tokenize(line, lineno)
        if not toks:
            continue
        head = toks[0]
        if head.text == "version" and not head.quoted:
            if seen_content:
                raise ParseError(lineno, head.col, "version only on the first line", head.text)
            _parse_version(toks, lineno)
            seen_content = True
            continue
        seen_content = True
        if head.quoted or head.text != "node":
            raise ParseError(lineno, head.col, "'node'", head.text)
        decl = _parse_node(toks, lineno, declared)
        declared.add(decl.path)
        nodes.append(decl)
    return SceneDoc(tuple(nodes))


def _fnum(x: float) -> str:
    return repr(float(x))


def format_scene(doc: SceneDoc) -> str:
    out = [f"version {FORMAT_VERSION}"]
    for n in doc.nodes:
        parts = ["node", n.kind, f'"{n.name}"']
        if n.parent:
            parts += ["under", n.parent]
        if n.layer is not None:
            parts.append("layer=" + ",".join(map(str, n.layer)))
        if n.mask is not None:
            parts.append("mask=" + ",".join(map(str, n.mask)))
        parts.append("pos=" + ",".join(_fnum(v) for v in n.pos))
        if n.rot is not None:
            parts.append("rot=" + ",".join(_fnum(v) for v in n.rot))
        if n.shape is not None:
            parts += ["shape=" + n.shape[0], ",".join(_fnum(v) for v in n.shape[1])]
        if n.behavior is not None:
            parts.append("behavior=" + n.behavior)
        parts += [f"{k}={v}" for k, v in n.params]
        out.append(" ".join(parts))
    return "\n".join(out) + "\n"


# -- scenario -------------------------------------------------------------


@dataclass(frozen=True)
class PoseCmd:
    t: float
    role: str
    pos: tuple[float, float, float]
    rot: Optional[tuple[float, float, float, float]] = None
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class PressCmd:
    t: float
    path: str
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class TriggerCmd:
    t: float
    hand: str
    down: bool
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class RunUntil:
    t: float
    line: int = field(default=0, compare=False)


Command = Union[PoseCmd, PressCmd, TriggerCmd, RunUntil]


@dataclass(frozen=True)
class ScenarioDoc:
    commands: tuple[Command, ...] = ()

    def __len__(self) -> int:
        return len(self.commands)

    @property
    def duration(self) -> float:
        if not self.commands:
            return 0.0
        return self.commands[-1].t


def _want(toks: list[_Tok], i: int, lineno: int, what: str) -> _Tok:
    if i >= len(toks):
        last = toks[-1]
        raise ParseError(lineno, last.col + len(last.text) + (2 if last.quoted else 0), what)
    if toks[i].quoted:
        raise ParseError(lineno, toks[i].col, what, toks[i].text)
    return toks[i]


def _no_more(toks: list[_Tok], i: int, lineno: int) -> None:
    if i < len(toks):
        raise ParseError(lineno, toks[i].col, "end of line", toks[i].text)


def _time(tok: _Tok, lineno: int) -> float:
    t = _number(tok, lineno, "time in seconds")
    if t < 0:
        raise ParseError(lineno, tok.col, "non-negative time", tok.text)
    return t


def parse_scenario(text: Union[str, bytes]) -> ScenarioDoc:
    text = _decode(text)
    cmds: list[Command] = []
    last_t = 0.0
    seen_content = False
    for lineno, line in _lines(text):
        toks = _tokenize(line, lineno)
        if not toks:
            continue
        head = toks[0]
        if head.text == "version" and not head.quoted:
            if seen_content:
                raise ParseError(lineno, head.col, "version only on the first line", head.text)
            _parse_version(toks, lineno)
            seen_content = True
            continue
        seen_content = True
        if cmds and isinstance(cmds[-1], RunUntil):
            raise ParseError(lineno, head.col, "nothing after run_until", head.text)
        if head.quoted or head.text not in ("at", "run_until"):
            raise ParseError(lineno, head.col, "'at' or 'run_until'", head.text)
        tt = _want(toks, 1, lineno, "time in seconds")
        t = _time(tt, lineno)
        if t < last_t:
            raise NonMonotonicTime(lineno, tt.col, f"time >= {last_t!r}", tt.text)
        last_t = t
        if head.text == "run_until":
            _no_more(toks, 2, lineno)
            cmds.append(RunUntil(t, line=lineno))
            continue
        vt = _want(toks, 2, lineno, "'pose', 'press' or 'trigger'")
        if vt.text == "pose":
            rt = _want(toks, 3, lineno, "device role")
            if rt.text not in ROLES:
                raise ParseError(lineno, rt.col, "device role (" + ", ".join(ROLES) + ")", rt.text)
            nums = []
            i = 4
            while i < len(toks) and len(nums) < 7:
                nums.append(_number(toks[i], lineno, "coordinate"))
                i += 1
            if len(nums) < 3:
                _want(toks, i, lineno, "coordinate")
            if len(nums) not in (3, 7):
                col = toks[i].col if i < len(toks) else toks[-1].col + len(toks[-1].text)
                raise ParseError(lineno, col, "axis-angle (4 numbers) or end of line")
            _no_more(toks, i, lineno)
            rot = tuple(nums[3:]) if len(nums) == 7 else None
            if rot is not None and rot[3] != 0.0 and rot[:3] == (0.0, 0.0, 0.0):
                raise ParseError(lineno, toks[4 + 3].col, "nonzero rotation axis", toks[4 + 3].text)
            cmds.append(PoseCmd(t, rt.text, tuple(nums[:3]), rot, line=lineno))  # type: ignore[arg-type]
        elif vt.text == "press":
            pt = _want(toks, 3, lineno, "node path")
            if not _PATH.match(pt.text):
                raise ParseError(lineno, pt.col, "node path", pt.text)
            _no_more(toks, 4, lineno)
            cmds.append(PressCmd(t, pt.text, line=lineno))
        elif vt.text == "trigger":
            ht = _want(toks, 3, lineno, "hand")
            if ht.text not in HANDS:
                raise ParseError(lineno, ht.col, "LeftHand or RightHand", ht.text)
            st = _want(toks, 4, lineno, "'down' or 'up'")
            if st.text not in ("down", "up"):
                raise ParseError(lineno, st.col, "'down' or 'up'", st.text)
            _no_more(toks, 5, lineno)
            cmds.append(TriggerCmd(t, ht.text, st.text == "down", line=lineno))
        else:
            raise ParseError(lineno, vt.col, "'pose', 'press' or 'trigger'", vt.text)
    return ScenarioDoc(tuple(cmds))


def format_scenario(doc: ScenarioDoc) -> str:
    out = [f"version {FORMAT_VERSION}"]
    for c in doc.commands:
        if isinstance(c, PoseCmd):
            nums = list(c.pos) + (list(c.rot) if c.rot is not None else [])
            out.append(f"at {_fnum(c.t)} pose {c.role} " + " ".join(_fnum(v) for v in nums))
        elif isinstance(c, PressCmd):
            out.append(f"at {_fnum(c.t)} press {c.path}")
        elif isinstance(c, TriggerCmd):
            out.append(f"at {_fnum(c.t)} trigger {c.hand} {'down' if c.down else 'up'}")
        else:
            out.append(f"run_until {_fnum(c.t)}")
    return "\n".join(out) + "\n"


# -- trace ----------------------------------------------------------------

TRACE_KINDS = (
    "AreaEnter",
    "AreaExit",
    "SerialTx",
    "PinChange",
    "PlatformState",
    "Impulse",
    "Teleport",
    "TransformSample",
    "Warning",
)

# payload key order per record kind; Warning only fixes its first key
FIELD_ORDER: dict[str, tuple[str, ...]] = {
    "AreaEnter": ("area", "other"),
    "AreaExit": ("area", "other"),
    "SerialTx": ("byte", "port"),
    "PinChange": ("pin", "level"),
    "PlatformState": ("state", "y"),
    "Impulse": ("board", "tx", "ty", "tz", "dwx", "dwy", "dwz"),
    "Teleport": ("node", "x", "y", "z"),
    "TransformSample": ("node", "x", "y", "z", "qw", "qx", "qy", "qz"),
    "Warning": ("reason",),
}


class TraceWriteError(OSError):
    pass


@dataclass(frozen=True)
class TraceRecord:
    tick: int
    time: Fraction
    kind: str
    payload: tuple[tuple[str, Any], ...] = ()

    def __post_init__(self):
        if self.kind not in FIELD_ORDER:
            raise ValueError(f"unknown trace record kind {self.kind!r}")
        keys = tuple(k for k, _ in self.payload)
        order = FIELD_ORDER[self.kind]
        if self.kind == "Warning":
            if keys[:1] != order:
                raise ValueError("Warning records start with reason=")
        elif keys != order:
            raise ValueError(f"{self.kind} payload keys must be {order}, got {keys}")

    def get(self, key: str) -> Any:
        for k, v in self.payload:
            if k == key:
                return v
        raise KeyError(key)


def format_fixed6(x: Union[float, Fraction, Decimal]) -> str:
    """Six fractional digits, round-half-even, no negative zero."""
    with localcontext() as ctx:
        ctx.prec = 60
        if isinstance(x, Fraction):
            d = Decimal(x.numerator) / Decimal(x.denominator)
        else:
            d = Decimal(x)  # exact binary value of a float
        s = str(d.quantize(Decimal("0.000001"), rounding=ROUND_HALF_EVEN))
    if s.startswith("-") and set(s[1:]) <= set("0."):
        s = s[1:]
    return s


def _fmt_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, (float, Fraction)):
        return format_fixed6(v)
    s = str(v)
    if not s or any(c.isspace() for c in s):
        raise ValueError(f"trace value must be a nonempty token, got {s!r}")
    return s


def format_record(rec: TraceRecord) -> str:
    head = f"tick={rec.tick} t={format_fixed6(rec.time)} kind={rec.kind}"
    if not rec.payload:
        return head
    return head + " " + " ".join(f"{k}={_fmt_value(v)}" for k, v in rec.payload)


def write_trace(sink: Any, record: TraceRecord) -> None:
    line = format_record(record) + "\n"
    try:
        if isinstance(sink, io.TextIOBase):
            sink.write(line)
        else:
            sink.write(line.encode("utf-8"))
    except (OSError, ValueError) as e:
        raise TraceWriteError(str(e)) from e


@dataclass(frozen=True)
class TraceLine:
    tick: int
    t: str
    kind: str
    fields: tuple[tuple[str, str], ...]

    def get(self, key: str) -> Optional[str]:
        for k, v in self.fields:
            if k == key:
                return v
        if key == "tick":
            return str(self.tick)
        if key == "t":
            return self.t
        if key == "kind":
            return self.kind
        return None


def parse_trace_line(line: str, lineno: int = 1) -> TraceLine:
    parts = line.rstrip("\n").split(" ")
    kv = []
    col = 1
    for p in parts:
        if "=" not in p or p.startswith("="):
            raise ParseError(lineno, col, "key=value", p)
        k, v = p.split("=", 1)
        kv.append((k, v))
        col += len(p) + 1
    if len(kv) < 3 or [k for k, _ in kv[:3]] != ["tick", "t", "kind"]:
        raise ParseError(lineno, 1, "tick=, t=, kind= prefix", line[:40])
    if not _INT.match(kv[0][1]):
        raise ParseError(lineno, 6, "integer tick", kv[0][1])
    return TraceLine(int(kv[0][1]), kv[1][1], kv[2][1], tuple(kv[3:]))


def read_trace(text: str) -> list[TraceLine]:
    return [parse_trace_line(line, i) for i, line in enumerate(text.splitlines(), start=1) if line]


def load_world(scene: SceneDoc, **world_kw: Any):
    """Build a World from ``scene``; see :mod:`immerse.loader`."""
    from .loader import load_world as _load

    return _load(scene, **world_kw)
