import hashlib
import random

import pytest

from socengine.uicr import (
    CanonicalThreatLabel,
    IoC,
    IoCType,
    KillChainPhase,
    Severity,
    THREAT_LABEL_ALIASES,
    UICR,
    ValidationError,
    add_ioc,
    apply_confidence_gates,
    ioc_fingerprint,
    map_kill_chain,
    normalize_threat_label,
)

from conftest import T0, random_uicr


class TestFingerprint:
    def test_golden_digest(self):
        # oracle: sha256 over the canonical "type|value" string
        expected = hashlib.sha256(b"ip|1.2.3.4").hexdigest()[:16]
        assert expected == "057c9d922d63a090"
        assert ioc_fingerprint("ip", "1.2.3.4") == expected

    def test_deterministic(self):
        assert ioc_fingerprint("ip", "1.2.3.4") == ioc_fingerprint("ip", "1.2.3.4")

    def test_type_distinguishes(self):
        assert ioc_fingerprint("ip", "1.2.3.4") != ioc_fingerprint("domain", "1.2.3.4")
        assert ioc_fingerprint("domain", "1.2.3.4") == hashlib.sha256(
            b"domain|1.2.3.4").hexdigest()[:16]

    def test_shape(self):
        fp = ioc_fingerprint(IoCType.HASH, "deadbeef")
        assert len(fp) == 16 and fp == fp.lower()
        int(fp, 16)

    def test_empty_value_rejected(self):
        with pytest.raises(ValidationError):
            ioc_fingerprint("ip", "")

    def test_separator_prevents_ambiguity(self):
        assert ioc_fingerprint("ab", "c") != ioc_fingerprint("a", "bc")

    def test_no_collisions_on_random_corpus(self):
        rng = random.Random(42)
        types = [t.value for t in IoCType]
        seen = set()
        for _ in range(10_000):
            fp = ioc_fingerprint(rng.choice(types), f"v{rng.getrandbits(48):012x}")
            seen.add(fp)
        assert len(seen) == 10_000


class TestAddIoc:
    def test_append_to_empty(self):
        record = add_ioc(UICR(), IoC(IoCType.IP, "1.2.3.4", 0.9, "suricata"))
        assert len(record.iocs) == 1

    def test_duplicate_merges_provenance(self):
        record = add_ioc(UICR(), IoC(IoCType.IP, "1.2.3.4", 0.9, "suricata"))
        record = add_ioc(record, IoC(IoCType.IP, "1.2.3.4", 0.4, "zeek"))
        assert len(record.iocs) == 1
        assert record.iocs[0].provenance == {"suricata", "zeek"}

    def test_distinct_fingerprints_append(self):
        record = add_ioc(UICR(), IoC(IoCType.IP, "1.2.3.4", 0.9, "a"))
        record = add_ioc(record, IoC(IoCType.IP, "5.6.7.8", 0.9, "a"))
        assert len(record.iocs) == 2

    def test_idempotent_for_identical_fingerprints(self):
        ioc = IoC(IoCType.DOMAIN, "evil.test", 0.8, "osint")
        once = add_ioc(UICR(), ioc)
        many = once
        for _ in range(5):
            many = add_ioc(many, ioc)
        assert [i.to_dict() for i in many.iocs] == [i.to_dict() for i in once.iocs]

    def test_updated_at_refreshed(self):
        record = UICR(created_at=T0, updated_at=T0)
        updated = add_ioc(record, IoC(IoCType.IP, "1.2.3.4", 0.5, "t"))
        assert updated.updated_at >= record.updated_at


class TestLabelNormalization:
    def test_case_insensitive_alias(self):
        assert normalize_threat_label("ddos") is CanonicalThreatLabel.DDOS
        assert normalize_threat_label("DoS") is CanonicalThreatLabel.DDOS
        assert normalize_threat_label("EXPLOITS") is CanonicalThreatLabel.EXPLOITATION

    def test_fuzzy_prefix(self):
        assert normalize_threat_label("Recon") is CanonicalThreatLabel.RECONNAISSANCE
        assert normalize_threat_label("backd") is CanonicalThreatLabel.BACKDOOR

    def test_unmappable_is_unknown(self):
        assert normalize_threat_label("xyzzy") is CanonicalThreatLabel.UNKNOWN
        assert normalize_threat_label("") is CanonicalThreatLabel.UNKNOWN

    def test_alias_table_has_34_entries(self):
        assert len(THREAT_LABEL_ALIASES) == 34

    def test_canonical_labels_are_fixed_points(self):
        for label in CanonicalThreatLabel:
            if label in (CanonicalThreatLabel.UNKNOWN, CanonicalThreatLabel.UNCERTAIN):
                continue
            assert normalize_threat_label(label.value) is label

    def test_never_invents_labels(self):
        rng = random.Random(7)
        alphabet = "abcdefghijklmnopqrstuvwxyz "
        for _ in range(500):
            raw = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 12)))
            assert normalize_threat_label(raw) in set(CanonicalThreatLabel)

    def test_extra_aliases(self):
        assert normalize_threat_label(
            "custom-evil", extra={"custom-evil": CanonicalThreatLabel.BACKDOOR}
        ) is CanonicalThreatLabel.BACKDOOR


class TestConfidenceGates:
    def test_low_confidence_unknown(self):
        out = apply_confidence_gates(CanonicalThreatLabel.EXPLOITATION, 0.65, 0.2)
        assert out is CanonicalThreatLabel.UNKNOWN

    def test_high_entropy_uncertain(self):
        out = apply_confidence_gates(CanonicalThreatLabel.EXPLOITATION, 0.9, 0.85)
        assert out is CanonicalThreatLabel.UNCERTAIN

    def test_both_gates_pass(self):
        out = apply_confidence_gates(CanonicalThreatLabel.BENIGN, 0.99, 0.1)
        assert out is CanonicalThreatLabel.BENIGN

    def test_boundaries(self):
        assert apply_confidence_gates(
            CanonicalThreatLabel.DDOS, 0.7, 0.8) is CanonicalThreatLabel.DDOS
        assert apply_confidence_gates(
            CanonicalThreatLabel.DDOS, 0.69999, 0.0) is CanonicalThreatLabel.UNKNOWN

    def test_out_of_range_rejected(self):
        with pytest.raises(ValidationError):
            apply_confidence_gates(CanonicalThreatLabel.DDOS, 1.5, 0.0)
        with pytest.raises(ValidationError):
            apply_confidence_gates(CanonicalThreatLabel.DDOS, 0.5, -0.1)

    def test_never_attack_label_below_floor(self):
        rng = random.Random(11)
        for _ in range(300):
            conf = rng.random() * 0.699
            out = apply_confidence_gates(
                rng.choice(list(CanonicalThreatLabel)), conf, rng.random()
            )
            assert out is CanonicalThreatLabel.UNKNOWN


class TestKillChainMapping:
    def test_single_tactic(self):
        assert map_kill_chain({"TA0043"}) is KillChainPhase.RECONNAISSANCE

    def test_furthest_phase_wins(self):
        assert map_kill_chain({"TA0001", "TA0011"}) is KillChainPhase.COMMAND_AND_CONTROL

    def test_empty_absent(self):
        assert map_kill_chain(set(), set()) is None

    def test_unknown_tactics_ignored(self):
        assert map_kill_chain({"TA9999"}) is None
        assert map_kill_chain({"TA9999", "TA0042"}) is KillChainPhase.WEAPONISATION

    def test_names_map_case_insensitively(self):
        assert map_kill_chain(tactic_names={"Lateral Movement"}) is KillChainPhase.EXPLOITATION
        assert map_kill_chain(tactic_names={"EXFILTRATION"}) is KillChainPhase.ACTIONS_ON_OBJECTIVES

    def test_monotone_under_additions(self):
        rng = random.Random(3)
        ids = list(
            ["TA0043", "TA0042", "TA0001", "TA0002", "TA0003", "TA0005",
             "TA0011", "TA0006", "TA0040"]
        )
        for _ in range(200):
            base = set(rng.sample(ids, rng.randint(1, 4)))
            bigger = base | set(rng.sample(ids, rng.randint(1, 4)))
            order_base = map_kill_chain(base).order
            order_bigger = map_kill_chain(bigger).order
            assert order_bigger >= order_base

    def test_phase_order_matches_enum_position(self):
        for i, phase in enumerate(KillChainPhase, start=1):
            assert phase.order == i


class TestRecordModel:
    def test_serialization_round_trip(self, rng):
        for _ in range(25):
            record = random_uicr(rng)
            clone = UICR.from_json(record.to_json())
            assert clone.to_dict() == record.to_dict()

    def test_duplicate_fingerprints_rejected(self):
        ioc = IoC(IoCType.IP, "1.2.3.4", 0.5, "a")
        with pytest.raises(ValidationError):
            UICR(iocs=(ioc, IoC(IoCType.IP, "1.2.3.4", 0.9, "b")))

    def test_score_bounds_enforced(self):
        with pytest.raises(ValidationError):
            UICR(triage_score=101.0)

    def test_timestamps_serialize_utc_z(self):
        record = UICR(created_at=T0, updated_at=T0)
        data = record.to_dict()
        assert data["created_at"].endswith("Z")

    def test_severity_codes(self):
        assert [s.value for s in Severity] == [1, 2, 3, 4]
        assert Severity.LOW < Severity.MEDIUM < Severity.HIGH < Severity.CRITICAL
