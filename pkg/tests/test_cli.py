import json
from pathlib import Path

import pytest

from dwpt_auth import cli
from dwpt_auth.errors import ConfigError, FormatError

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = sorted((ROOT / "scenarios").glob("*.json"))


def write(tmp_path, cfg, name="s.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def test_published_schema_matches_packaged_copy():
    assert json.loads((ROOT / "docs" / "scenario.schema.json").read_text()) == cli.load_schema()


@pytest.mark.parametrize(
    "cfg,path",
    [
        ({}, "$"),
        ({"protocol": "quic"}, "$.protocol"),
        ({"protocol": "revised", "pads": -2}, "$.pads"),
        ({"protocol": "revised", "seed": 2**64}, "$.seed"),
        ({"protocol": "revised", "bogus": 1}, "$"),
        ({"protocol": "revised", "attacks": [{"type": "dos", "expect": "yes"}]}, "$.attacks[0].expect"),
        ({"protocol": "revised", "pads": 5, "chain_length": 3}, "$.chain_length"),
        ({"protocol": "dma", "sessions_per_vehicle": 3, "pseudonyms_per_vehicle": 2}, "$.sessions_per_vehicle"),
    ],
)
def test_config_errors_carry_path(cfg, path):
    with pytest.raises(ConfigError) as info:
        cli.ScenarioConfig.from_dict(cfg)
    assert info.value.path == path


def test_chain_length_defaults_to_pads():
    assert cli.ScenarioConfig.from_dict({"protocol": "revised", "pads": 6}).chain_length == 6


def test_revised_8_pads(tmp_path):
    cfg = cli.ScenarioConfig.from_dict({"protocol": "revised", "pads": 8, "seed": 1})
    report, _ = cli.run(cfg, tmp_path)
    (s,) = report.sessions
    assert s["accepted"] and s["pads_accepted"] == 8 and s["keys_match"]
    assert report.costs["communication_bytes"]["total"] == 352 + 256
    assert report.transcript == "transcript.jsonl"
    assert (tmp_path / "transcript.jsonl").exists() and (tmp_path / "report.json").exists()


def test_pha_buggy_dos_scenario(tmp_path):
    cfg = cli.ScenarioConfig.from_dict(
        {"protocol": "pha", "update_policy": "buggy", "pads": 2, "expect_sessions": "reject", "attacks": [{"type": "dos", "expect": True}]}
    )
    report, _ = cli.run(cfg)
    assert report.attacks[0]["succeeded"] and report.expectations_met


def test_determinism_byte_identical(tmp_path):
    path = write(tmp_path, {"protocol": "dma", "pads": 1, "seed": 1})
    assert cli.main(["run", "--scenario", str(path), "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["run", "--scenario", str(path), "--out", str(tmp_path / "b")]) == 0
    for name in ("report.json", "transcript.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_flags_override_file(tmp_path):
    path = write(tmp_path, {"protocol": "dma", "pads": 1})
    out = tmp_path / "o"
    assert cli.main(["run", "--scenario", str(path), "--out", str(out), "--protocol", "revised", "--pads", "3", "--seed", "5"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["protocol"] == "revised"
    assert report["config"]["pads"] == 3 and report["config"]["seed"] == 5


def test_verify_c2_flag(tmp_path):
    path = write(tmp_path, {"protocol": "dma", "pads": 1})
    out = tmp_path / "o"
    cli.main(["run", "--scenario", str(path), "--out", str(out), "--verify-c2", "on"])
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["verify_c2"] is True
    assert report["costs"]["measured_counts"]["CP"]["hash"] == 9


def test_expectation_mismatch_exit_code(tmp_path):
    path = write(tmp_path, {"protocol": "pha", "update_policy": "fixed", "pads": 2, "attacks": [{"type": "dos", "expect": True}]})
    assert cli.main(["run", "--scenario", str(path), "--out", str(tmp_path / "o")]) == cli.EXIT_MISMATCH


def test_session_expectation_mismatch(tmp_path):
    path = write(tmp_path, {"protocol": "pha", "update_policy": "buggy", "pads": 2})
    assert cli.main(["run", "--scenario", str(path), "--out", str(tmp_path / "o")]) == cli.EXIT_MISMATCH


def test_config_and_io_exit_codes(tmp_path, capsys):
    bad = write(tmp_path, {"protocol": "revised", "pads": "many"})
    assert cli.main(["run", "--scenario", str(bad)]) == cli.EXIT_CONFIG
    assert "$.pads" in capsys.readouterr().err
    notjson = tmp_path / "x.json"
    notjson.write_text("{")
    assert cli.main(["run", "--scenario", str(notjson)]) == cli.EXIT_CONFIG
    assert cli.main(["run", "--scenario", str(tmp_path / "missing.json")]) == cli.EXIT_IO


@pytest.mark.parametrize("scenario", SCENARIOS, ids=lambda p: p.stem)
def test_shipped_scenarios_meet_expectations(scenario, tmp_path):
    assert cli.main(["run", "--scenario", str(scenario), "--out", str(tmp_path)]) == 0


# -- replay -------------------------------------------------------------------


@pytest.fixture()
def recorded(tmp_path):
    cfg = cli.ScenarioConfig.from_dict({"protocol": "revised", "pads": 3, "seed": 2, "vehicles": 2})
    cli.run(cfg, tmp_path)
    return tmp_path / "transcript.jsonl"


def test_replay_clean(recorded):
    verdict = cli.replay_transcript(recorded)
    assert verdict["clean"] and verdict["first_divergence"] is None
    assert cli.main(["replay", str(recorded)]) == 0


def test_replay_flags_edited_hex_digit(recorded, tmp_path):
    lines = recorded.read_text().splitlines()
    ev = json.loads(lines[3])
    assert ev["type"] == "RevM3"
    c1 = ev["fields"]["c1"]
    ev["fields"]["c1"] = ("1" if c1[0] == "0" else "0") + c1[1:]
    lines[3] = json.dumps(ev)
    edited = tmp_path / "edited.jsonl"
    edited.write_text("\n".join(lines) + "\n")
    verdict = cli.replay_transcript(edited)
    assert not verdict["clean"]
    assert verdict["first_divergence"]["step"] == ev["step"]
    assert verdict["first_divergence"]["fields"] == ["c1"]
    assert verdict["rejected"]["step"] == ev["step"]
    assert cli.main(["replay", str(edited)]) == cli.EXIT_MISMATCH


def test_replay_truncated_transcript(recorded, tmp_path):
    lines = recorded.read_text().splitlines()
    short = tmp_path / "short.jsonl"
    short.write_text("\n".join(lines[:-2]) + "\n")
    verdict = cli.replay_transcript(short)
    assert not verdict["clean"]
    assert verdict["first_divergence"]["reason"] == "transcript ends early"


def test_replay_empty_file(tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    with pytest.raises(FormatError) as info:
        cli.replay_transcript(empty)
    assert info.value.line == 1
    assert cli.main(["replay", str(empty)]) == cli.EXIT_CONFIG


def test_replay_bad_line_number(recorded, tmp_path):
    lines = recorded.read_text().splitlines()
    lines[2] = lines[2].replace('"bytes": ', '"bytes": 1')
    bad = tmp_path / "bad.jsonl"
    bad.write_text("\n".join(lines) + "\n")
    with pytest.raises(FormatError) as info:
        cli.replay_transcript(bad)
    assert info.value.line == 3


def test_replay_missing_file(tmp_path):
    assert cli.main(["replay", str(tmp_path / "nope.jsonl")]) == cli.EXIT_IO


def test_bench(capsys):
    assert cli.main(["bench", "--repeat", "20"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["hash_ms"] > 0 and out["exp_ms"] > 0


def test_table_flag(tmp_path, capsys):
    path = write(tmp_path, {"protocol": "revised", "pads": 2})
    assert cli.main(["run", "--scenario", str(path), "--out", str(tmp_path / "o"), "--table"]) == 0
    assert "dma" in capsys.readouterr().out
