import pytest

from dwpt_auth import adversary as adv
from dwpt_auth.adversary import ChannelTap, MutationRule
from dwpt_auth.errors import InvalidArgument
from dwpt_auth.protocol import build_deployment, run_session


# -- replay / free riding -----------------------------------------------------


def test_replay_pha_buggy_free_rides():
    out = adv.replay_attack("pha", "buggy", chain_length=4)
    assert out.succeeded
    assert out.detector == "cspa-accepted-replayed-chain-value"


def test_replay_pha_fixed_fails():
    out = adv.replay_attack("pha", "fixed", chain_length=4)
    assert not out.succeeded and out.detector == "authentication-failed"


def test_replay_revised_double_spend():
    out = adv.replay_attack("revised", "fixed")
    assert not out.succeeded and out.detector == "double-spend-rejected"


def test_replay_dma_pad_accepts_stale_m3():
    # no pad-side freshness before m3 in the reference scheme
    out = adv.replay_attack("dma", "fixed")
    assert out.succeeded


@pytest.mark.parametrize("length", [2, 5, 16])
def test_vulnerability_dichotomy(length):
    assert adv.replay_attack("pha", "buggy", length).succeeded
    assert not adv.replay_attack("pha", "fixed", length).succeeded
    assert adv.dos_via_buggy_update(2, "buggy", length).succeeded
    assert not adv.dos_via_buggy_update(2, "fixed", length).succeeded


def test_dos_examples():
    out = adv.dos_via_buggy_update(2, "buggy")
    assert out.succeeded and out.details["failed_pad"] == 2
    assert out.details["error"] == "authentication-failed"
    fixed = adv.dos_via_buggy_update(2, "fixed")
    assert not fixed.succeeded and fixed.details["pads_accepted"] == 2
    one = adv.dos_via_buggy_update(1, "buggy")
    assert not one.succeeded and one.detector == "not-applicable"


# -- linkability --------------------------------------------------------------


def test_linkability_dma_links_through_h3():
    out = adv.linkability_attack("dma", 5)
    assert out.succeeded
    assert out.details["cross_session_collisions"] >= 1


def test_linkability_revised_no_collisions():
    out = adv.linkability_attack("revised", 5)
    assert not out.succeeded
    assert out.details["cross_session_collisions"] == 0


@pytest.mark.parametrize("k", [0, 1])
def test_linkability_needs_two_sessions(k):
    with pytest.raises(InvalidArgument):
        adv.linkability_attack("dma", k)


def test_link_sessions_unions_shared_values():
    tap = ChannelTap()
    dep = build_deployment("dma", pseudonyms=3, seed=2)
    for i in range(3):
        run_session(dep, dep.obus[0], 1, label=f"s{i}", tap=tap)
    clusters, shared = adv.link_sessions(tap)
    assert len(set(clusters.values())) == 1
    assert all(len(owners) == 3 for owners in shared.values())


# -- man in the middle --------------------------------------------------------


def test_mitm_pass_through_gains_nothing():
    out = adv.mitm_forge(None)
    assert not out.succeeded
    assert out.details["endpoints_accept"] and not out.details["adversary_knows_key"]


def test_mitm_swap_c6_c7_rejected_by_obu():
    out = adv.mitm_forge(MutationRule("RevM4", "c6p", swap="c7p"))
    assert not out.succeeded and out.details["rule_fired"]
    assert out.detector.startswith("protocol-error")


@pytest.mark.parametrize("field_name", ["c1", "c3p", "h3"])
def test_mitm_byte_flip_rejected(field_name):
    out = adv.mitm_forge(MutationRule("RevM3", field_name, 3, 0x40))
    assert not out.succeeded and not out.details["endpoints_accept"]


@pytest.mark.parametrize("protocol", ["revised", "dma"])
def test_key_recovered_when_enrolment_link_is_public(protocol):
    # the confidentiality of m2 is load bearing: with H2 in hand the
    # adversary unmasks the pseudonym and every nonce
    out = adv.mitm_forge(None, protocol=protocol, links=adv.LINKS)
    assert out.succeeded and out.details["adversary_knows_key"]


def test_mutation_sweep_revised_catches_all_but_c4():
    missed = adv.mutation_sweep("revised", seed=1)
    assert {(m["type"], m["field"]) for m in missed} <= {("RevM3", "c4p")}


def test_mutation_sweep_dma_misses_only_c7():
    missed = adv.mutation_sweep("dma", seed=1)
    assert {(m["type"], m["field"]) for m in missed} == {("M4", "c7")}
    assert len(missed) == 32


def test_mutation_sweep_pha_catches_everything():
    assert adv.mutation_sweep("pha", seed=1, pads=2) == []


def test_handshake_mutation_space():
    assert len(adv.handshake_mutations("revised")) == 32 + 96 + 160 + 96
    assert len(adv.handshake_mutations("dma")) == 64 + 96 + 160 + 128


# -- impersonation ------------------------------------------------------------


@pytest.mark.parametrize(
    "mode,code",
    [("random_handle", "unknown-pseudonym"), ("spent_handle", "double-spend-rejected"), ("replay_c5", "authentication-failed")],
)
def test_impersonation_fails(mode, code):
    out = adv.impersonation_attack(mode)
    assert not out.succeeded and out.detector == code


def test_impersonation_unknown_mode():
    with pytest.raises(InvalidArgument):
        adv.impersonation_attack("telepathy")


def test_head_substitution_finding():
    out = adv.head_substitution_attack()
    assert out.succeeded
    assert out.details["victim_error"] == "authentication-failed"
    assert out.details["victim_failed_pad"] == 1


# -- capability bound ---------------------------------------------------------


def test_tap_verbs_only():
    tap = ChannelTap()
    dep = build_deployment("revised", pseudonyms=2, chain_length=1, seed=1)
    run_session(dep, dep.obus[0], 1, tap=tap)
    m = tap.replay("RevM3")
    tap.inject(tap.mutate(m, "c1", 0, 1))
    tap.drop(m)
    assert {verb for verb, _ in tap.access_log} == set(ChannelTap.VERBS)


def test_default_tap_never_hears_enrolment():
    tap = ChannelTap()
    dep = build_deployment("revised", pseudonyms=1, chain_length=1, seed=1)
    run_session(dep, dep.obus[0], 1, tap=tap)
    assert {e.link for e in tap.recorded} == {"air", "wired"}
    assert not any(e.message.type_name in ("PreAuth", "M2") for e in tap.recorded)


def test_attacks_use_only_tap_verbs(monkeypatch):
    logs = []
    original = ChannelTap.__init__

    def spy(self, *a, **kw):
        original(self, *a, **kw)
        logs.append(self.access_log)

    monkeypatch.setattr(ChannelTap, "__init__", spy)
    adv.replay_attack("pha", "buggy")
    adv.impersonation_attack("replay_c5")
    adv.head_substitution_attack()
    verbs = {v for log in logs for v, _ in log}
    assert verbs <= set(ChannelTap.VERBS)
    assert {"record", "replay", "inject"} <= verbs


def test_unknown_link_rejected():
    with pytest.raises(InvalidArgument):
        ChannelTap(links=("carrier-pigeon",))


def test_outcomes_deterministic():
    for make in (
        lambda: adv.replay_attack("pha", "buggy", 3, seed=9),
        lambda: adv.linkability_attack("dma", 3, seed=9),
        lambda: adv.impersonation_attack("replay_c5", seed=9),
        lambda: adv.mitm_forge(MutationRule("RevM3", "c4p", 1), seed=9),
    ):
        assert make().to_json() == make().to_json()
