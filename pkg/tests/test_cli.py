import subprocess
import sys

import pytest

from conftest import demo_paths
from immerse.cli import RunConfig, main, parse_assertions
from immerse.sceneio import ParseError, read_trace


@pytest.fixture(scope="module")
def demo_trace(tmp_path_factory):
    scene, scn, _ = demo_paths()
    out = tmp_path_factory.mktemp("run") / "demo.trace"
    assert main(["run", "--scene", str(scene), "--scenario", str(scn), "--trace", str(out)]) == 0
    return out


def run_cli(tmp_path, scene_text, scenario_text, *extra):
    scene, scn = tmp_path / "s.scene", tmp_path / "s.scn"
    scene.write_text(scene_text)
    scn.write_text(scenario_text)
    out = tmp_path / "out.trace"
    return main(["run", "--scene", str(scene), "--scenario", str(scn), "--trace", str(out), *extra]), out


def test_demo_run_has_haptics(demo_trace, capsys):
    lines = read_trace(demo_trace.read_text())
    levels = [ln.get("level") for ln in lines if ln.kind == "PinChange"]
    assert levels == ["HIGH", "LOW"]


def test_demo_verify_passes(demo_trace, capsys):
    _, _, asserts = demo_paths()
    assert main(["verify", "--trace", str(demo_trace), "--assertions", str(asserts)]) == 0
    assert capsys.readouterr().out.startswith("ok: 10 assertion(s)")


def test_verify_reports_first_failure(demo_trace, tmp_path, capsys):
    a = tmp_path / "a.assert"
    a.write_text("expect count kind=Impulse == 5\nexpect count kind=Teleport >= 1\nexpect count kind=Bogus == 9\n")
    assert main(["verify", "--trace", str(demo_trace), "--assertions", str(a)]) == 1
    out = capsys.readouterr().out
    assert "line 2" in out and "kind=Teleport" in out and "count is 0" in out


def test_verify_order_on_missing_kind(demo_trace, tmp_path, capsys):
    a = tmp_path / "a.assert"
    a.write_text("expect order Teleport[0].x == 1\n")
    assert main(["verify", "--trace", str(demo_trace), "--assertions", str(a)]) == 1
    assert "Teleport[0].x" in capsys.readouterr().out


def test_verify_parse_error(demo_trace, tmp_path):
    a = tmp_path / "a.assert"
    a.write_text("expect count kind=PinChange ~= 2\n")
    assert main(["verify", "--trace", str(demo_trace), "--assertions", str(a)]) == 2
    assert main(["verify", "--trace", str(tmp_path / "none"), "--assertions", str(a)]) == 2


def test_assertion_grammar():
    (c, o) = parse_assertions("expect count kind=SerialTx port=virt0 >= 1 # note\n\nexpect order SerialTx[-1].byte != 0x68")
    assert c.filters == (("kind", "SerialTx"), ("port", "virt0")) and c.op == ">="
    assert (o.kind, o.index, o.field, o.value) == ("SerialTx", -1, "byte", "0x68")
    with pytest.raises(ParseError):
        parse_assertions("expect order SerialTx.byte == 1")
    with pytest.raises(ParseError):
        parse_assertions("expect count kind=X == many")


def test_malformed_scene_exits_2(tmp_path, capsys):
    code, _ = run_cli(tmp_path, 'node Spatial "A" pos=1,2\n', "run_until 1\n")
    assert code == 2
    assert "1:" in capsys.readouterr().err


def test_unknown_press_target_exits_2(tmp_path):
    code, _ = run_cli(tmp_path, 'node Spatial "A"\n', "at 0.1 press Nowhere\nrun_until 1\n")
    assert code == 2


def test_physics_failure_exits_3(tmp_path):
    scene = 'node RigidBody "Rock" gravity_scale=1e308 pos=0,1e308,0\n'
    code, _ = run_cli(tmp_path, scene, "run_until 1\n")
    assert code == 3


def test_missing_node_exits_3(tmp_path):
    scene = 'node KinematicBody "Footplate" shape=box 1,1,1 behavior=footplate\n'
    code, _ = run_cli(tmp_path, scene, "run_until 1\n")
    assert code == 3


def test_run_until_ten_ends_on_tick_900(tmp_path):
    scene = 'node RigidBody "Ball" pos=0,10,0 gravity_scale=0\n'
    code, out = run_cli(tmp_path, scene, "run_until 10\n")
    assert code == 0
    last = read_trace(out.read_text())[-1]
    assert (last.tick, last.t) == (900, "10.000000")


def test_replay_check(demo_trace, tmp_path, capsys):
    scene, scn, _ = demo_paths()
    again = tmp_path / "again.trace"
    main(["run", "--scene", str(scene), "--scenario", str(scn), "--trace", str(again)])
    assert main(["replay-check", str(demo_trace), str(again)]) == 0
    strided = tmp_path / "strided.trace"
    main(["run", "--scene", str(scene), "--scenario", str(scn), "--trace", str(strided), "--sample-stride", "3"])
    capsys.readouterr()
    assert main(["replay-check", str(demo_trace), str(strided)]) == 1
    assert "differ at line" in capsys.readouterr().out
    assert main(["replay-check", str(demo_trace), str(tmp_path / "missing")]) == 2


def test_replay_check_prefix(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    a.write_text("x\ny\n")
    b.write_text("x\n")
    assert main(["replay-check", str(a), str(b)]) == 1
    assert "first trace is longer" in capsys.readouterr().out


def test_different_scenarios_differ(tmp_path, capsys):
    scene = 'node RigidBody "Ball" pos=0,10,0\n'
    _, a = run_cli(tmp_path, scene, "run_until 1\n")
    a.rename(tmp_path / "a.trace")
    _, b = run_cli(tmp_path, scene, "run_until 2\n")
    assert main(["replay-check", str(tmp_path / "a.trace"), str(b)]) == 1


def test_run_config_validates():
    with pytest.raises(ValueError):
        RunConfig("a", "b", "c", sample_stride=0)
    with pytest.raises(ValueError):
        RunConfig("a", "b", "c", serial="usb")
    assert RunConfig("a", "b", "c", serial="passthrough:/dev/null").passthrough == "/dev/null"


def test_bad_stride_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as e:
        main(["run", "--scene", "a", "--scenario", "b", "--trace", "c", "--sample-stride", "0"])
    assert e.value.code == 2


def test_module_entry_point(demo_trace):
    _, _, asserts = demo_paths()
    res = subprocess.run(
        [sys.executable, "-m", "immerse", "verify", "--trace", str(demo_trace), "--assertions", str(asserts)],
        capture_output=True,
        text=True,
    )
    assert res.returncode == 0, res.stderr


def test_log_level_from_env(tmp_path, capsys, monkeypatch):
    import logging

    from immerse.cli import setup_logging

    setup_logging("error")
    assert logging.getLogger("immerse").level == logging.ERROR
    setup_logging("shout")
    assert "ignoring unknown IMMERSE_LOG" in capsys.readouterr().err
    monkeypatch.setenv("IMMERSE_LOG", "info")
    setup_logging()
    assert logging.getLogger("immerse").level == logging.INFO
