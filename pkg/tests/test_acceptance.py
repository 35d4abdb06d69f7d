"""Acceptance criteria, one test and one printed PASS/FAIL line each.

Run alone with ``pytest tests/test_acceptance.py -v``; the verdict lines go
straight to the terminal even under output capture.
"""

from decimal import Decimal
from pathlib import Path

import pytest

from dwpt_auth import cli, costs
from dwpt_auth.adversary import dos_via_buggy_update, linkability_attack, mutation_sweep, replay_attack
from dwpt_auth.costs import FORMULAS, round2
from dwpt_auth.protocol import build_deployment, run_session

ROOT = Path(__file__).resolve().parent.parent
TOL = Decimal("0.01")


@pytest.fixture()
def verdict(capsys):
    def emit(num: int, title: str, failures: list[str], detail: str = ""):
        status = "PASS" if not failures else "FAIL"
        line = f"[{status}] criterion {num}: {title}"
        if detail:
            line += f" ({detail})"
        if failures:
            line += " :: " + "; ".join(failures)
        with capsys.disabled():
            print("\n" + line)
        assert not failures, line

    return emit


def close(got: Decimal, want: str) -> bool:
    return abs(round2(got) - Decimal(want)) <= TOL


def test_criterion_1_buggy_update_vulnerability(verdict):
    failures = []
    for length in range(2, 17):
        for policy, want in (("buggy", True), ("fixed", False)):
            dos = dos_via_buggy_update(pads=2, policy=policy, chain_length=length)
            replay = replay_attack("pha", policy, chain_length=length)
            if dos.succeeded is not want:
                failures.append(f"dos {policy} L={length}: {dos.detector}")
            if replay.succeeded is not want:
                failures.append(f"replay {policy} L={length}: {replay.detector}")
    verdict(1, "buggy policy gives DoS and free riding, fixed policy gives neither", failures, "L=2..16")


def test_criterion_2_operation_counts_and_timing(verdict):
    failures = []
    for pads in (1, 4):
        t = costs.measure("revised", pads)
        auth = costs.count_from_transcript(t, "auth")
        for role, want in (("OBU", {"hash": 5, "xor": 3, "exp": 1}), ("CSPA", {"hash": 7, "xor": 3, "exp": 1})):
            if auth.get(role) != want:
                failures.append(f"revised {role} n={pads}: {auth.get(role)} != {want}")
        chain = costs.count_from_transcript(t, "chain").get("CSPA")
        if chain != {"hash": pads}:
            failures.append(f"revised per-pad n={pads}: {chain}")
        rep = costs.report_for("revised", pads, transcript=t)
        if not close(rep.computation_ms["measured"]["total"], str(Decimal("3.46") + Decimal("0.27") * pads)):
            failures.append(f"revised measured total n={pads}: {rep.computation_ms['measured']['total']}")

        t = costs.measure("dma", pads, verify_c2=True)
        auth = costs.count_from_transcript(t, "auth")
        for role, want in (("OBU", {"hash": 6, "xor": 6}), ("CP", {"hash": 7, "xor": 6})):
            want = {k: v * pads for k, v in want.items()}
            if auth.get(role) != want:
                failures.append(f"dma {role} n={pads}: measured {auth.get(role)} != {want}")
        rep = costs.report_for("dma", pads, transcript=t)
        if not close(rep.computation_ms["measured"]["total"], str(Decimal("3.51") * pads)):
            failures.append(f"dma measured total n={pads}: {round2(rep.computation_ms['measured']['total'])} ms != {Decimal('3.51') * pads}")

    cells = [
        ("revised", "obu", "1.46"),
        ("revised", "server", "2.0"),
        ("dma", "obu", "1.62"),
        ("dma", "server", "1.89"),
        ("revised", "constant", "3.46"),
        ("revised", "per_pad", "0.27"),
        ("dma", "per_pad", "3.51"),
    ]
    for scheme, cell, want in cells:
        got = FORMULAS[scheme].evaluate()[cell]
        if not close(got, want):
            failures.append(f"{scheme}.{cell} = {got} != {want}")
    for n in (1, 4, 8, 16):
        if not close(FORMULAS["revised"].total_ms(n), str(Decimal("3.46") + Decimal("0.27") * n)):
            failures.append(f"revised total n={n}")
        if not close(FORMULAS["dma"].total_ms(n), str(Decimal("3.51") * n)):
            failures.append(f"dma total n={n}")
    verdict(2, "operation counts and timing cells", failures, "formula cells and measured counts")


def test_criterion_3_byte_totals(verdict):
    failures = []
    for n in (1, 4, 8, 16):
        for protocol, want in (("revised", 352 + 32 * n), ("dma", 288 * n)):
            acc = costs.byte_accounting(costs.measure(protocol, n), n, protocol)
            if acc["total"] != want:
                failures.append(f"{protocol} n={n}: {acc['total']} != {want}")
    verdict(3, "transcript bytes 352+32n and 288n", failures, "n in 1,4,8,16")


def test_criterion_4_per_pad_gain(verdict):
    gain = costs.per_pad_gain()
    failures = [] if abs(gain - Decimal("0.923")) <= Decimal("0.001") else [f"gain {gain}"]
    verdict(4, "per-pad gain 0.923", failures, f"gain={gain:.4f}")


def test_criterion_5_completeness(verdict):
    failures = []
    for protocol in ("dma", "pha", "revised"):
        for seed in range(100):
            dep = build_deployment(protocol, pseudonyms=1, chain_length=3, seed=seed)
            res = run_session(dep, dep.obus[0], pads=3)
            if not res.accepted or res.pads_accepted != 3:
                failures.append(f"{protocol} seed={seed}: {res.error}")
            elif res.keys_match is False or len(res.cp_keys) != 3:
                failures.append(f"{protocol} seed={seed}: key mismatch")
    verdict(5, "honest runs accept with matching keys", failures, "100 seeds x dma, pha, revised")


def test_criterion_6_tamper_soundness(verdict):
    failures = []
    counts = {}
    for protocol in ("revised", "dma", "pha"):
        missed = []
        for seed in (1, 2, 3):
            missed += mutation_sweep(protocol, seed, deltas=(0x01, 0x80, 0xFF))
        counts[protocol] = len(missed)
        if missed:
            fields = sorted({f"{m['type']}.{m['field']}" for m in missed})
            failures.append(f"{protocol}: {len(missed)} accepted mutations in {', '.join(fields)}")
    detail = ", ".join(f"{p} escapes={n}" for p, n in counts.items())
    verdict(6, "every single-byte handshake mutation is rejected", failures, detail)


def test_criterion_7_linkability(verdict):
    dma = linkability_attack("dma", k=5)
    rev = linkability_attack("revised", k=5)
    failures = []
    if not dma.succeeded:
        failures.append("dma sessions were not linked")
    if rev.succeeded:
        failures.append("revised sessions were linked")
    if rev.details["cross_session_collisions"]:
        failures.append(f"revised collisions {rev.details['cross_session_collisions']}")
    verdict(7, "DMA sessions link, revised sessions do not", failures, f"revised collisions={rev.details['cross_session_collisions']}")


def test_criterion_8_double_spend(verdict):
    rejected = sum(replay_attack("revised", "fixed", chain_length=2, seed=s).detector == "double-spend-rejected" for s in range(100))
    failures = [] if rejected == 100 else [f"{rejected}/100"]
    verdict(8, "resubmitted m'3 rejected as double spend", failures, f"{rejected}/100")


def test_criterion_9_determinism(verdict, tmp_path):
    failures = []
    scenarios = sorted((ROOT / "scenarios").glob("*.json"))
    for path in scenarios:
        outs = []
        for run in ("a", "b"):
            out = tmp_path / path.stem / run
            code = cli.main(["run", "--scenario", str(path), "--out", str(out)])
            if code not in (0, cli.EXIT_MISMATCH):
                failures.append(f"{path.stem}: exit {code}")
            outs.append(out)
        for name in ("transcript.jsonl", "report.json"):
            if (outs[0] / name).read_bytes() != (outs[1] / name).read_bytes():
                failures.append(f"{path.stem}/{name} differs")
    verdict(9, "equal seeds give byte-identical files", failures, f"{len(scenarios)} scenarios")
