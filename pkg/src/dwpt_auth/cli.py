"""Scenario runner.

    dwpt-auth run --scenario scenarios/revised_8pads.json --out out/
    dwpt-auth replay out/transcript.jsonl
    dwpt-auth bench

Exit codes: 0 expectations met, 2 configuration or format error,
3 expectation mismatch, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
import timeit
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from . import adversary, costs
from .errors import ConfigError, DwptError, FormatError
from .protocol.session import build_deployment, run_session
from .protocol.transcript import Transcript, read_jsonl

EXIT_OK, EXIT_CONFIG, EXIT_MISMATCH, EXIT_IO = 0, 2, 3, 4

SCHEME_OF = {"revised": "revised", "dma": "dma"}


def load_schema() -> dict:
    return json.loads(resources.files("dwpt_auth").joinpath("data/scenario.schema.json").read_text())


@dataclass
class ScenarioConfig:
    protocol: str
    update_policy: str = "fixed"
    pads: int = 1
    vehicles: int = 1
    sessions_per_vehicle: int = 1
    pseudonyms_per_vehicle: int = 16
    chain_length: int | None = None
    seed: int = 0
    verify_c2: bool = False
    group: str = "full512"
    expect_sessions: str = "accept"
    attacks: list = field(default_factory=list)
    name: str = ""

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioConfig":
        validator = jsonschema.Draft202012Validator(load_schema())
        errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
        if errors:
            err = errors[0]
            path = "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)
            raise ConfigError(path, err.message)
        cfg = cls(**raw)
        if cfg.chain_length is None:
            cfg.chain_length = cfg.pads
        if cfg.protocol in ("pha", "revised") and cfg.chain_length < cfg.pads:
            raise ConfigError("$.chain_length", f"chain of {cfg.chain_length} cannot pay for {cfg.pads} pads")
        if cfg.protocol == "pha" and cfg.chain_length < 1:
            raise ConfigError("$.chain_length", "PHA needs a chain of at least one value")
        if cfg.sessions_per_vehicle > cfg.pseudonyms_per_vehicle:
            raise ConfigError("$.sessions_per_vehicle", "each session consumes one pseudonym")
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path: str | Path, overrides: dict | None = None) -> ScenarioConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"not JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("$", "scenario must be a JSON object")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return ScenarioConfig.from_dict(raw)


# --------------------------------------------------------------------------
# run


@dataclass
class RunReport:
    config: dict
    sessions: list
    attacks: list
    costs: dict | None
    transcript: str
    expectations_met: bool

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"


def _deployment(cfg: ScenarioConfig):
    return build_deployment(
        cfg.protocol,
        vehicles=cfg.vehicles,
        pseudonyms=cfg.pseudonyms_per_vehicle,
        chain_length=cfg.chain_length,
        seed=cfg.seed,
        policy=cfg.update_policy,
        verify_c2=cfg.verify_c2,
        group=cfg.group,
    )


def run_sessions(cfg: ScenarioConfig, tap=None):
    dep = _deployment(cfg)
    results = []
    for s in range(cfg.sessions_per_vehicle):
        for v, obu in enumerate(dep.obus):
            results.append(run_session(dep, obu, cfg.pads, label=f"v{v}s{s}", tap=tap))
    return dep, results


def _rule(d: dict | None):
    if d is None:
        return None
    return adversary.MutationRule(
        d["type"], d["field"], d.get("pos", 0), d.get("delta", 1), swap=d.get("swap"), drop=d.get("drop", False)
    )


def run_attack(cfg: ScenarioConfig, desc: dict) -> adversary.AttackOutcome:
    kind = desc["type"]
    protocol = desc.get("protocol", cfg.protocol)
    policy = desc.get("policy", cfg.update_policy)
    chain = desc.get("chain_length", max(cfg.chain_length, 2))
    if kind == "replay":
        out = adversary.replay_attack(protocol, policy, chain, cfg.seed)
    elif kind == "dos":
        out = adversary.dos_via_buggy_update(desc.get("pads", cfg.pads), policy, desc.get("chain_length"), cfg.seed)
    elif kind == "linkability":
        out = adversary.linkability_attack(protocol, desc.get("k", 5), cfg.seed)
    elif kind == "mitm":
        out = adversary.mitm_forge(_rule(desc.get("rule")), protocol, cfg.seed)
    elif kind == "impersonation":
        out = adversary.impersonation_attack(desc.get("mode", "random_handle"), cfg.seed)
    else:
        out = adversary.head_substitution_attack(cfg.seed)
    out.expected = desc.get("expect")
    return out


def _session_ok(expect: str, accepted: bool) -> bool:
    return expect == "any" or (expect == "accept") == accepted


def run(cfg: ScenarioConfig, out_dir: str | Path | None = None) -> tuple[RunReport, str]:
    """Execute the scenario; returns the report and the transcript JSONL text."""
    dep, results = run_sessions(cfg)
    combined = Transcript()
    for r in results:
        combined.extend(r.transcript)
    verdicts = [r.verdict() for r in results]
    attacks = [run_attack(cfg, d).to_json() for d in cfg.attacks]

    cost = None
    scheme = SCHEME_OF.get(cfg.protocol)
    first = results[0]
    if scheme and first.accepted:
        cost = costs.report_for(scheme, cfg.pads, transcript=first.transcript).to_json()
    elif first.accepted:
        cost = {"scheme": cfg.protocol, "communication_bytes": costs.byte_accounting(first.transcript, cfg.pads)}

    met = all(_session_ok(cfg.expect_sessions, r.accepted) for r in results)
    met = met and all(a.get("as_expected", True) for a in attacks)
    report = RunReport(
        config=cfg.to_dict(),
        sessions=verdicts,
        attacks=attacks,
        costs=cost,
        transcript="transcript.jsonl",
        expectations_met=met,
    )
    text = combined.to_jsonl(header=cfg.to_dict())
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "transcript.jsonl").write_text(text)
        (out / "report.json").write_text(report.to_json())
    return report, text


# --------------------------------------------------------------------------
# replay


class _ReplayTap:
    """Feeds the recorded bytes to a fresh deployment, noting where they differ."""

    def __init__(self, recorded: Transcript):
        self.events = list(recorded.events)
        self.index = 0
        self.divergence = None

    def intercept(self, ev):
        if self.index >= len(self.events):
            self.divergence = self.divergence or {"step": self.index + 1, "reason": "transcript ends early"}
            return None
        rec = self.events[self.index]
        self.index += 1
        if rec.message.type_name != ev.message.type_name:
            self.divergence = self.divergence or {
                "step": rec.step,
                "reason": f"expected {ev.message.type_name}, transcript has {rec.message.type_name}",
            }
            return None
        if rec.message != ev.message and self.divergence is None:
            fields = [n for n, v in rec.message.values().items() if v != getattr(ev.message, n)]
            self.divergence = {"step": rec.step, "type": rec.message.type_name, "fields": fields, "reason": "bytes differ"}
        return rec.message


def replay_transcript(path: str | Path) -> dict:
    """Re-verify a transcript against fresh entities built from its header."""
    header, recorded = read_jsonl(Path(path).read_text())
    if header is None:
        raise FormatError(1, "transcript has no header line; cannot rebuild the deployment")
    try:
        cfg = ScenarioConfig.from_dict(header)
    except ConfigError as exc:
        raise FormatError(1, f"bad header: {exc}") from None
    tap = _ReplayTap(recorded)
    _, results = run_sessions(cfg, tap=tap)
    rejected = next((r for r in results if not r.accepted), None)
    if tap.divergence is None and tap.index < len(recorded.events):
        tap.divergence = {"step": recorded.events[tap.index].step, "reason": "extra events in transcript"}
    start = 0
    failing_step = None
    for r in results:
        if r is rejected and r.error != "dropped":
            failing_step = recorded.events[start + r.failed_step - 1].step if r.failed_step else None
            break
        start += len(r.transcript)
    verdict = {
        "clean": tap.divergence is None and rejected is None,
        "events": len(recorded.events),
        "first_divergence": tap.divergence,
        "rejected": None,
    }
    if rejected is not None:
        verdict["rejected"] = {"session": rejected.label, "error": rejected.error, "step": failing_step}
    return verdict


# --------------------------------------------------------------------------
# bench


def bench(repeat: int = 2000) -> dict:
    """Local timings of the two priced primitives; not comparable with the table."""
    from . import primitives as prim

    data = b"\x00" * 64
    h = timeit.timeit(lambda: prim.hash(prim.H, data), number=repeat) / repeat
    e = 2**255 + 12345
    x = timeit.timeit(lambda: prim.group_exp(prim.FULL512, e), number=max(repeat // 10, 1)) / max(repeat // 10, 1)
    return {"hash_ms": round(h * 1e3, 6), "exp_ms": round(x * 1e3, 6), "note": "this machine, not the published hardware"}


# --------------------------------------------------------------------------
# entry point


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dwpt-auth", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run a scenario")
    r.add_argument("--scenario", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--out", default="out")
    r.add_argument("--protocol", choices=["dma", "pha", "revised"])
    r.add_argument("--policy", choices=["buggy", "fixed"])
    r.add_argument("--pads", type=int)
    r.add_argument("--verify-c2", choices=["on", "off"])
    r.add_argument("--table", action="store_true", help="print the cost comparison table")
    rp = sub.add_parser("replay", help="re-verify a recorded transcript")
    rp.add_argument("transcript")
    b = sub.add_parser("bench", help="time the local hash and exponentiation")
    b.add_argument("--repeat", type=int, default=2000)
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.cmd == "run":
            overrides = {
                "seed": args.seed,
                "protocol": args.protocol,
                "update_policy": args.policy,
                "pads": args.pads,
                "verify_c2": None if args.verify_c2 is None else args.verify_c2 == "on",
            }
            cfg = load_config(args.scenario, overrides)
            report, _ = run(cfg, args.out)
            summary = {
                "sessions": len(report.sessions),
                "accepted": sum(s["accepted"] for s in report.sessions),
                "attacks": [[a["attack"], a["succeeded"]] for a in report.attacks],
                "expectations_met": report.expectations_met,
                "out": str(args.out),
            }
            print(json.dumps(summary, sort_keys=True))
            if args.table:
                print(costs.format_table(costs.compare_schemes(pads=max(cfg.pads, 1), verify_c2=True)))
            return EXIT_OK if report.expectations_met else EXIT_MISMATCH
        if args.cmd == "replay":
            verdict = replay_transcript(args.transcript)
            print(json.dumps(verdict, sort_keys=True))
            return EXIT_OK if verdict["clean"] else EXIT_MISMATCH
        print(json.dumps(bench(args.repeat), sort_keys=True))
        return EXIT_OK
    except (ConfigError, FormatError) as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return EXIT_IO
    except DwptError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
