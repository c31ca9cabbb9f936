"""Command-line runner: ``run``, ``verify`` and ``replay-check``.

Exit codes: 0 ok, 1 verification failure, 2 input error, 3 runtime error.
Diagnostics go to stderr; verbosity comes from ``IMMERSE_LOG``
(``error``, ``warn`` or ``info``).
"""

from __future__ import annotations

import argparse
import logging
import operator
import os
import re
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .devices import SerialError
from .experience import InvalidEndpoint, SceneMissingNode
from .physics import PhysicsError
from .scenegraph import NotFound
from .sceneio import ParseError, TraceWriteError, parse_scenario, parse_scene, read_trace, write_trace

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("immerse")

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING, "info": logging.INFO}


def setup_logging(env: Optional[str] = None) -> None:
    value = (env if env is not None else os.environ.get("IMMERSE_LOG", "warn")).strip().lower()
    level = _LOG_LEVELS.get(value, logging.WARNING)
    root = logging.getLogger("immerse")
    root.handlers.clear()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("immerse: %(levelname)s: %(message)s"))
    root.addHandler(handler)
    root.setLevel(level)
    root.propagate = False
    if value not in _LOG_LEVELS:
        log.warning("ignoring unknown IMMERSE_LOG level %r", value)


@dataclass(frozen=True)
class RunConfig:
    scene: Path
    scenario: Path
    trace: Path
    rate: int = 90
    serial: str = "virtual"
    sample_stride: int = 9

    def __post_init__(self):
        if self.sample_stride < 1:
            raise ValueError("sample stride must be >= 1")
        if self.serial != "virtual" and not self.serial.startswith("passthrough:"):
            raise ValueError(f"serial transport must be 'virtual' or 'passthrough:PATH', got {self.serial!r}")

    @property
    def passthrough(self) -> Optional[str]:
        if self.serial.startswith("passthrough:"):
            return self.serial.split(":", 1)[1]
        return None


def _read(path: Path) -> bytes:
    return Path(path).read_bytes()


def run(config: RunConfig) -> int:
    docs = []
    for path, parse in ((config.scene, parse_scene), (config.scenario, parse_scenario)):
        try:
            docs.append(parse(_read(path)))
        except ParseError as e:
            log.error("%s:%s", path, e)
            return EXIT_INPUT
        except OSError as e:
            log.error("cannot read input: %s", e)
            return EXIT_INPUT
    return run_docs(docs[0], docs[1], config)


def run_docs(scene, scenario, config: RunConfig) -> int:
    from .loader import load_world

    try:
        world = load_world(scene, rate=config.rate, sample_stride=config.sample_stride, passthrough=config.passthrough)
    except ParseError as e:
        log.error("%s: %s", config.scene, e)
        return EXIT_INPUT
    except (SerialError, OSError) as e:
        log.error("cannot set up world: %s", e)
        return EXIT_RUNTIME
    try:
        out = open(config.trace, "wb")
    except OSError as e:
        log.error("cannot open trace %s: %s", config.trace, e)
        return EXIT_INPUT
    count = 0
    with out:
        def sink(rec):
            nonlocal count
            write_trace(out, rec)
            count += 1

        world.sink = sink
        world.keep_records = False
        try:
            world.run_scenario(scenario)
        except (ValueError, KeyError, NotFound) as e:
            # unknown press targets and roles surface here
            log.error("scenario error at tick %d: %s", world.tick, e)
            return EXIT_INPUT
        except (PhysicsError, SerialError, SceneMissingNode, InvalidEndpoint, TraceWriteError, OSError) as e:
            log.error("runtime error at tick %d: %s", world.tick, e)
            return EXIT_RUNTIME
    print(f"ok: {world.tick} ticks, t={world.tick / world.rate:.6f}s, {count} records -> {config.trace}")
    return EXIT_OK


# -- verify ---------------------------------------------------------------

_OPS = {"==": operator.eq, "!=": operator.ne, ">=": operator.ge, "<=": operator.le, ">": operator.gt, "<": operator.lt}
_ORDER_REF = re.compile(r"([A-Za-z]+)\[(-?\d+)\]\.([A-Za-z_][A-Za-z0-9_]*)\Z")


@dataclass(frozen=True)
class Assertion:
    line: int
    text: str
    mode: str  # "count" or "order"
    filters: tuple[tuple[str, str], ...] = ()
    kind: str = ""
    index: int = 0
    field: str = ""
    op: str = "=="
    value: str = ""


def parse_assertions(text: str) -> list[Assertion]:
    """``expect count k=v [k=v ...] OP N`` and ``expect order Kind[i].field OP value``."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        if toks[0] != "expect":
            raise ParseError(lineno, 1, "'expect'", toks[0])
        if len(toks) < 5:
            raise ParseError(lineno, len(raw.rstrip()) + 1, "expect <count|order> ... <op> <value>")
        mode, op, value = toks[1], toks[-2], toks[-1]
        col = raw.index(op, raw.index(toks[1]) + len(toks[1]))
        if op not in _OPS:
            raise ParseError(lineno, col + 1, "comparison operator", op)
        if mode == "count":
            filters = []
            for t in toks[2:-2]:
                if "=" not in t or t.startswith("="):
                    raise ParseError(lineno, raw.index(t) + 1, "key=value filter", t)
                k, v = t.split("=", 1)
                filters.append((k, v))
            if not re.fullmatch(r"\d+", value):
                raise ParseError(lineno, raw.rindex(value) + 1, "non-negative integer", value)
            out.append(Assertion(lineno, line, "count", filters=tuple(filters), op=op, value=value))
        elif mode == "order":
            if len(toks) != 5:
                raise ParseError(lineno, raw.index(toks[2]) + 1, "single Kind[i].field reference", " ".join(toks[2:-2]))
            m = _ORDER_REF.match(toks[2])
            if not m:
                raise ParseError(lineno, raw.index(toks[2]) + 1, "Kind[i].field", toks[2])
            out.append(
                Assertion(lineno, line, "order", kind=m.group(1), index=int(m.group(2)), field=m.group(3), op=op, value=value)
            )
        else:
            raise ParseError(lineno, raw.index(mode) + 1, "'count' or 'order'", mode)
    return out


def _compare(op: str, actual: str, expected: str) -> bool:
    # numeric when both sides parse as numbers (including 0x.. bytes), else textual
    def num(s: str):
        try:
            return int(s, 0)
        except ValueError:
            return float(s)

    try:
        a, b = num(actual), num(expected)
    except ValueError:
        a, b = actual, expected
    try:
        return _OPS[op](a, b)
    except TypeError:
        return False


def check_assertion(a: Assertion, lines) -> Optional[str]:
    """None if the assertion holds, else a failure message naming it."""
    if a.mode == "count":
        n = sum(1 for ln in lines if all(ln.get(k) == v for k, v in a.filters))
        if not _OPS[a.op](n, int(a.value)):
            return f"line {a.line}: {a.text!r} failed: count is {n}"
        return None
    matches = [ln for ln in lines if ln.kind == a.kind]
    try:
        rec = matches[a.index]
    except IndexError:
        return f"line {a.line}: {a.text!r} failed: only {len(matches)} {a.kind} record(s)"
    actual = rec.get(a.field)
    if actual is None:
        return f"line {a.line}: {a.text!r} failed: {a.kind}[{a.index}] has no field {a.field!r}"
    if not _compare(a.op, actual, a.value):
        return f"line {a.line}: {a.text!r} failed: {a.kind}[{a.index}].{a.field} is {actual}"
    return None


def verify(trace: Path, assertions: Path) -> int:
    try:
        lines = read_trace(Path(trace).read_text(encoding="utf-8"))
        preds = parse_assertions(Path(assertions).read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError) as e:
        log.error("cannot read input: %s", e)
        return EXIT_INPUT
    except ParseError as e:
        log.error("%s", e)
        return EXIT_INPUT
    for a in preds:
        msg = check_assertion(a, lines)
        if msg is not None:
            print(f"FAIL {msg}")
            return EXIT_FAIL
    print(f"ok: {len(preds)} assertion(s) hold over {len(lines)} records")
    return EXIT_OK


def replay_check(a: Path, b: Path) -> int:
    try:
        da, db = Path(a).read_bytes(), Path(b).read_bytes()
    except OSError as e:
        log.error("cannot read trace: %s", e)
        return EXIT_INPUT
    if da == db:
        print("identical")
        return EXIT_OK
    la, lb = da.splitlines(), db.splitlines()
    for i, (x, y) in enumerate(zip(la, lb), start=1):
        if x != y:
            print(f"differ at line {i}:\n< {x.decode('utf-8', 'replace')}\n> {y.decode('utf-8', 'replace')}")
            return EXIT_FAIL
    i = min(len(la), len(lb)) + 1
    longer = "first" if len(la) > len(lb) else "second"
    print(f"differ at line {i}: {longer} trace is longer")
    return EXIT_FAIL


# -- entry point ----------------------------------------------------------


def _stride(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("stride must be >= 1")
    return n


def _serial(text: str) -> str:
    if text == "virtual" or (text.startswith("passthrough:") and len(text) > len("passthrough:")):
        return text
    raise argparse.ArgumentTypeError("expected 'virtual' or 'passthrough:PATH'")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="immerse", description="Headless VR experience simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scene with a scenario and write the trace")
    r.add_argument("--scene", required=True, type=Path)
    r.add_argument("--scenario", required=True, type=Path)
    r.add_argument("--trace", required=True, type=Path)
    r.add_argument("--serial", default="virtual", type=_serial, help="virtual (default) or passthrough:PATH")
    r.add_argument("--sample-stride", default=9, type=_stride, help="ticks between TransformSample records")

    v = sub.add_parser("verify", help="check trace assertions")
    v.add_argument("--trace", required=True, type=Path)
    v.add_argument("--assertions", required=True, type=Path)

    c = sub.add_parser("replay-check", help="compare two traces byte for byte")
    c.add_argument("a", type=Path)
    c.add_argument("b", type=Path)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    setup_logging()
    args = build_parser().parse_args(argv)
    if args.command == "run":
        cfg = RunConfig(args.scene, args.scenario, args.trace, serial=args.serial, sample_stride=args.sample_stride)
        return run(cfg)
    if args.command == "verify":
        return verify(args.trace, args.assertions)
    return replay_check(args.a, args.b)


if __name__ == "__main__":
    sys.exit(main())
