"""Harness tests: scenario execution, invariant checking, suites, CLI exit
codes, and the frozen seed-42 report/trace goldens."""

from pathlib import Path

import pytest

from l2ai.channel import parse_scenario
from l2ai.cli import main as cli_main
from l2ai.harness import (
    EXPECTED_OPS, HONEST_SCENARIO, SERVER, SUITES, World,
    check_invariants, run_scenario,
)
from l2ai.permissions import Role

GOLDEN = Path(__file__).parent / "golden"


def run_text(text: str, seed: int = 42):
    world = World(seed=seed)
    return world, run_scenario(world, parse_scenario(text))


def test_honest_scenario_all_sessions_verified():
    world, result = run_text(HONEST_SCENARIO)
    assert result.ok, result.violations
    assert [s.outcome for s in world.sessions] == ["verified"] * 4
    assert all(s.sk_user == s.sk_server for s in world.sessions)
    assert len({s.sk_user.value for s in world.sessions}) == 4
    assert world.ledger.verify_chain()


def test_same_seed_same_world_digest():
    _, first = run_text(HONEST_SCENARIO, seed=7)
    _, second = run_text(HONEST_SCENARIO, seed=7)
    assert first.report_lines() == second.report_lines()
    _, other = run_text(HONEST_SCENARIO, seed=8)
    assert first.report_lines() != other.report_lines()


def test_report_matches_golden():
    world, result = run_text(HONEST_SCENARIO, seed=42)
    expected = (GOLDEN / "honest-seed42-report.txt").read_text().splitlines()
    assert result.report_lines() == expected


def test_trace_matches_golden():
    world, result = run_text(HONEST_SCENARIO, seed=42)
    expected = (GOLDEN / "honest-seed42-trace.txt").read_text().splitlines()
    assert world.channel.log == expected


def test_tampered_msg1_rejected_without_violations():
    world, result = run_text(
        "honest register alice\nhonest auth alice\nmodify 3 10 ff\n")
    assert result.ok
    assert world.sessions[0].outcome == "rejected BadMac"


def test_tampered_provisional_taints_user_and_dies_at_server():
    # registration runs over the protected enrollment path; tampering it
    # yields an internally consistent but server-useless card
    world, result = run_text(
        "honest register alice\nmodify 2 3 ff\nhonest auth alice\n")
    assert "alice" in world.tainted
    assert world.sessions[0].outcome == "rejected BadMac"
    assert result.ok          # tainted users are exempt from completion


def test_dropped_registration_taints_user():
    world, result = run_text(
        "honest register alice\ndrop alice hms 1\nhonest auth alice\n")
    assert "alice" in world.tainted
    assert world.sessions[0].local_reject == "rejected UnexpectedMessage"
    assert result.ok


def test_clean_rejection_is_a_violation():
    # a patient token asking for a doctor scope on untouched wire must fail
    # the completion invariant: the run is judged broken, exit code 1
    world, result = run_text(
        "honest register dave P\nhonest auth dave\n")
    assert not result.ok
    assert any("did not complete" in v for v in result.violations)


def test_checker_catches_rigged_acceptances():
    # replace the server handler with one that accepts anything: both the
    # tamper check and the double-acceptance check must fire
    world = World(seed=1)
    world.register_user("mallory")
    world.drain()
    world.handlers[SERVER] = lambda env: "accepted sk=00000000"
    result = run_scenario(world, parse_scenario(
        "honest auth mallory\nmodify 3 0 ff\nreplay 3 400\n"))
    assert not result.ok
    text = "\n".join(result.violations)
    assert "tampered delivery" in text
    assert "accepted 2 times" in text


def test_wrong_password_never_reaches_wire():
    from dataclasses import replace
    world = World(seed=3)
    world.register_user("erin")
    world.drain()
    gateway = world.get_user("erin")
    bad = replace(gateway.creds, password=b"nope")
    session = world.auth_attempt("erin", creds=bad)
    assert session.local_reject == "rejected LocalVerifyFailed"
    assert session.msg1_env is None
    assert gateway.creds.password == b"pw-erin"     # restored after the attempt


def test_scope_by_session_not_global():
    world = World(seed=4)
    world.register_user("fay", Role.NURSE)
    world.drain()
    ok = world.auth_attempt("fay", scope="record-vitals")
    world.drain()
    bad = world.auth_attempt("fay", scope="write-prescription")
    world.drain()
    world.finalize()
    assert ok.outcome == "verified"
    assert bad.outcome == "rejected Unauthorized"


@pytest.mark.parametrize("name", ["honest", "attacks", "metrics"])
def test_suite_passes(name):
    lines = []
    assert SUITES[name](seed=42, emit=lines.append) is True
    assert lines and not any(line.startswith("FAIL") for line in lines)


def test_fuzz_suite_scaled_down():
    lines = []
    assert SUITES["fuzz"](seed=42, sessions=80, users=8, emit=lines.append)
    assert lines[0].startswith("ok fuzz")


def test_expected_ops_table_is_exhaustive():
    sides = {side for side, _ in EXPECTED_OPS}
    assert sides == {"user", "server"}
    for counts in EXPECTED_OPS.values():
        assert set(counts) == {"hash", "xor", "enc", "dec", "fe"}


# --- command line ----------------------------------------------------------------

def test_cli_run_writes_report_and_trace(tmp_path, capsys):
    scn = tmp_path / "s.scn"
    scn.write_text("honest register a\nhonest auth a\n")
    report = tmp_path / "report.txt"
    trace = tmp_path / "trace.txt"
    rc = cli_main(["run", str(scn), "--report", str(report), "--trace", str(trace)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "summary violations=0" in out
    assert report.read_text() == out
    assert trace.read_text().startswith("00000000 SEND seq=1")


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.scn"
    bad.write_text("jump 4\n")
    assert cli_main(["run", str(bad)]) == 2
    assert "line 1" in capsys.readouterr().err

    missing = tmp_path / "missing.scn"
    assert cli_main(["run", str(missing)]) == 2

    violating = tmp_path / "v.scn"
    violating.write_text("honest register p P\nhonest auth p\n")
    assert cli_main(["run", str(violating)]) == 1
    capsys.readouterr()

    table = tmp_path / "perm.txt"
    table.write_text("D *\n")                     # seven roles missing
    ok_scn = tmp_path / "ok.scn"
    ok_scn.write_text("honest register a\n")
    assert cli_main(["run", str(ok_scn), "--perm-table", str(table)]) == 2
    capsys.readouterr()


def test_cli_export_and_suite(tmp_path, capsys):
    scn = tmp_path / "s.scn"
    scn.write_text("honest register a\nhonest auth a\n")
    out = tmp_path / "exported"
    assert cli_main(["export", str(scn), "--out", str(out)]) == 0
    assert (out / "report.txt").exists() and (out / "trace.txt").exists()
    capsys.readouterr()
    assert cli_main(["suite", "metrics"]) == 0
    assert "ok metrics headline" in capsys.readouterr().out


def test_cli_custom_delta_t(tmp_path, capsys):
    scn = tmp_path / "s.scn"
    # zero freshness window: the 50ms flight time alone makes Msg1 stale
    scn.write_text("honest register a\nhonest auth a\n")
    rc = cli_main(["run", str(scn), "--delta-t", "0"])
    out = capsys.readouterr().out
    assert rc == 1                                # untouched session rejected
    assert "outcome=rejected Stale" in out
