"""Unified incident record schema and normalization primitives.

Defines the incident record (UICR) and its sub-record types, indicator
fingerprinting, the canonical threat-label ontology, and the mapping from
MITRE ATT&CK tactics onto the seven kill-chain phases. Everything in this
module is an immutable value object with pure helper functions, so records
can be shared freely across threads.
"""

from __future__ import annotations

import hashlib
import json
import re
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum, IntEnum
from typing import Any, Dict, FrozenSet, List, Optional, Tuple

__all__ = [
    "ValidationError",
    "IoCType",
    "CanonicalThreatLabel",
    "KillChainPhase",
    "Severity",
    "IncidentStatus",
    "LogLevel",
    "IoC",
    "IoA",
    "NetworkFlowMeta",
    "LogEntry",
    "AlertCorrelation",
    "ThreatFeature",
    "UICR",
    "ioc_fingerprint",
    "add_ioc",
    "normalize_threat_label",
    "apply_confidence_gates",
    "map_kill_chain",
    "new_incident_id",
    "parse_timestamp",
    "format_timestamp",
    "utc_now",
]

TECHNIQUE_ID_RE = re.compile(r"^T\d{4}(\.\d{3})?$")


class ValidationError(ValueError):
    """Raised when a record or operation argument violates its contract."""


class IoCType(str, Enum):
    """Supported indicator-of-compromise types."""

    IP = "ip"
    DOMAIN = "domain"
    HASH = "hash"
    URL = "url"
    EMAIL = "email"
    FILE = "file"
    CVE = "cve"
    OTHER = "other"


class CanonicalThreatLabel(str, Enum):
    """Closed threat ontology.

    The ten attack/benign categories are the only labels the normalization
    map produces; Unknown and Uncertain are sentinel states set by the
    confidence gates, never by normalization of a recognized alias.
    """

    BENIGN = "Benign"
    DDOS = "DDoS"
    RECONNAISSANCE = "Reconnaissance"
    EXPLOITATION = "Exploitation"
    WEB_ATTACK = "WebAttack"
    BACKDOOR = "Backdoor"
    SHELLCODE = "Shellcode"
    WORMS = "Worms"
    ANALYSIS = "Analysis"
    FUZZERS = "Fuzzers"
    UNKNOWN = "Unknown"
    UNCERTAIN = "Uncertain"


#: Labels a classifier may legitimately emit (everything but the sentinels).
CANONICAL_ATTACK_LABELS: Tuple[CanonicalThreatLabel, ...] = tuple(
    label
    for label in CanonicalThreatLabel
    if label not in (CanonicalThreatLabel.UNKNOWN, CanonicalThreatLabel.UNCERTAIN)
)


class KillChainPhase(IntEnum):
    """Seven-phase kill chain; the integer value is the phase order."""

    RECONNAISSANCE = 1
    WEAPONISATION = 2
    DELIVERY = 3
    EXPLOITATION = 4
    INSTALLATION = 5
    COMMAND_AND_CONTROL = 6
    ACTIONS_ON_OBJECTIVES = 7

    @property
    def order(self) -> int:
        return int(self.value)

    @property
    def label(self) -> str:
        return _PHASE_LABELS[self]


_PHASE_LABELS = {
    KillChainPhase.RECONNAISSANCE: "Reconnaissance",
    KillChainPhase.WEAPONISATION: "Weaponisation",
    KillChainPhase.DELIVERY: "Delivery",
    KillChainPhase.EXPLOITATION: "Exploitation",
    KillChainPhase.INSTALLATION: "Installation",
    KillChainPhase.COMMAND_AND_CONTROL: "CommandAndControl",
    KillChainPhase.ACTIONS_ON_OBJECTIVES: "ActionsOnObjectives",
}
_PHASE_BY_LABEL = {v.lower(): k for k, v in _PHASE_LABELS.items()}


class Severity(IntEnum):
    """Incident severity bands, ordered; integer codes used for persistence."""

    LOW = 1
    MEDIUM = 2
    HIGH = 3
    CRITICAL = 4

    @property
    def label(self) -> str:
        return self.name.capitalize()


class IncidentStatus(str, Enum):
    NEW = "new"
    INVESTIGATING = "investigating"
    CONTAINED = "contained"
    ARCHIVED = "archived"


class LogLevel(str, Enum):
    DEBUG = "debug"
    INFO = "info"
    WARNING = "warning"
    ERROR = "error"
    CRITICAL = "critical"


# ---------------------------------------------------------------------------
# Timestamp helpers (ISO-8601 UTC with trailing "Z" on the wire)
# ---------------------------------------------------------------------------

def utc_now() -> datetime:
    return datetime.now(timezone.utc)


def parse_timestamp(value: str) -> datetime:
    """Parse an ISO-8601 timestamp; naive values are taken as UTC."""
    text = value.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    try:
        ts = datetime.fromisoformat(text)
    except ValueError as exc:
        raise ValidationError(f"unparseable timestamp: {value!r}") from exc
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


# ---------------------------------------------------------------------------
# Indicator fingerprinting
# ---------------------------------------------------------------------------

def ioc_fingerprint(ioc_type: "IoCType | str", value: str) -> str:
    """Deterministic 16-hex-char fingerprint of an indicator.

    The type token is lowercased and joined to the value with a single "|"
    separator before hashing, so ("ab", "c") and ("a", "bc") cannot collide
    by concatenation.
    """
    if not value:
        raise ValidationError("IoC value must be non-empty")
    type_token = ioc_type.value if isinstance(ioc_type, IoCType) else str(ioc_type)
    canonical = f"{type_token.lower()}|{value}"
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _check_unit(name: str, value: float) -> float:
    if not 0.0 <= value <= 1.0:
        raise ValidationError(f"{name} must be within [0, 1], got {value}")
    return float(value)


# ---------------------------------------------------------------------------
# Sub-record types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IoC:
    """Indicator of compromise with a deterministic dedup fingerprint.

    ``provenance`` records every tool that reported the indicator; the
    same indicator reported twice is stored once with both sources.
    """

    ioc_type: IoCType
    value: str
    confidence: float = 0.5
    source_tool: str = ""
    tags: FrozenSet[str] = frozenset()
    enrichment: Dict[str, Any] = field(default_factory=dict)
    provenance: FrozenSet[str] = frozenset()
    fingerprint: str = ""

    def __post_init__(self) -> None:
        _check_unit("IoC confidence", self.confidence)
        fp = ioc_fingerprint(self.ioc_type, self.value)
        object.__setattr__(self, "fingerprint", fp)
        object.__setattr__(self, "tags", frozenset(self.tags))
        prov = set(self.provenance)
        if self.source_tool:
            prov.add(self.source_tool)
        object.__setattr__(self, "provenance", frozenset(prov))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "ioc_type": self.ioc_type.value,
            "value": self.value,
            "confidence": self.confidence,
            "source_tool": self.source_tool,
            "tags": sorted(self.tags),
            "enrichment": dict(self.enrichment),
            "provenance": sorted(self.provenance),
            "fingerprint": self.fingerprint,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "IoC":
        return cls(
            ioc_type=IoCType(data["ioc_type"]),
            value=data["value"],
            confidence=data.get("confidence", 0.5),
            source_tool=data.get("source_tool", ""),
            tags=frozenset(data.get("tags", ())),
            enrichment=dict(data.get("enrichment", {})),
            provenance=frozenset(data.get("provenance", ())),
        )


@dataclass(frozen=True)
class IoA:
    """Indicator of attack: a MITRE technique observation with evidence."""

    technique_id: str
    tactic: str = ""
    subtechnique: Optional[str] = None
    evidence: str = ""
    confidence: float = 0.5

    def __post_init__(self) -> None:
        if not TECHNIQUE_ID_RE.match(self.technique_id):
            raise ValidationError(
                f"technique_id must match T####(.###): {self.technique_id!r}"
            )
        _check_unit("IoA confidence", self.confidence)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "technique_id": self.technique_id,
            "tactic": self.tactic,
            "subtechnique": self.subtechnique,
            "evidence": self.evidence,
            "confidence": self.confidence,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "IoA":
        return cls(
            technique_id=data["technique_id"],
            tactic=data.get("tactic", ""),
            subtechnique=data.get("subtechnique"),
            evidence=data.get("evidence", ""),
            confidence=data.get("confidence", 0.5),
        )


@dataclass(frozen=True)
class NetworkFlowMeta:
    """5-tuple flow metadata.

    ``timestamp`` (flow start) is optional; it feeds the incident timeline
    and the correlation time window when present.
    """

    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    protocol: str
    bytes_sent: int = 0
    bytes_recv: int = 0
    duration: float = 0.0
    flags: FrozenSet[str] = frozenset()
    timestamp: Optional[datetime] = None

    def __post_init__(self) -> None:
        for name, port in (("src_port", self.src_port), ("dst_port", self.dst_port)):
            if not 0 <= int(port) <= 65535:
                raise ValidationError(f"{name} out of range: {port}")
        if self.bytes_sent < 0 or self.bytes_recv < 0:
            raise ValidationError("byte counts must be non-negative")
        if self.duration < 0:
            raise ValidationError("duration must be non-negative")
        object.__setattr__(self, "flags", frozenset(self.flags))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "src_ip": self.src_ip,
            "dst_ip": self.dst_ip,
            "src_port": self.src_port,
            "dst_port": self.dst_port,
            "protocol": self.protocol,
            "bytes_sent": self.bytes_sent,
            "bytes_recv": self.bytes_recv,
            "duration": self.duration,
            "flags": sorted(self.flags),
            "timestamp": format_timestamp(self.timestamp) if self.timestamp else None,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NetworkFlowMeta":
        ts = data.get("timestamp")
        return cls(
            src_ip=data["src_ip"],
            dst_ip=data["dst_ip"],
            src_port=data["src_port"],
            dst_port=data["dst_port"],
            protocol=data.get("protocol", ""),
            bytes_sent=data.get("bytes_sent", 0),
            bytes_recv=data.get("bytes_recv", 0),
            duration=data.get("duration", 0.0),
            flags=frozenset(data.get("flags", ())),
            timestamp=parse_timestamp(ts) if ts else None,
        )


@dataclass(frozen=True)
class LogEntry:
    """One normalized log line from any source tool."""

    timestamp: datetime
    source_tool: str
    host: str
    level: LogLevel
    message: str
    parsed_fields: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "timestamp": format_timestamp(self.timestamp),
            "source_tool": self.source_tool,
            "host": self.host,
            "level": self.level.value,
            "message": self.message,
            "parsed_fields": dict(self.parsed_fields),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LogEntry":
        return cls(
            timestamp=parse_timestamp(data["timestamp"]),
            source_tool=data.get("source_tool", ""),
            host=data.get("host", ""),
            level=LogLevel(data.get("level", "info")),
            message=data.get("message", ""),
            parsed_fields=dict(data.get("parsed_fields", {})),
        )


@dataclass(frozen=True)
class AlertCorrelation:
    """A detection-rule alert tied to the indicators it matched."""

    alert_id: str
    rule_name: str
    severity: int
    matched_fingerprints: FrozenSet[str] = frozenset()

    def __post_init__(self) -> None:
        if not 1 <= int(self.severity) <= 5:
            raise ValidationError(f"alert severity must be 1..5: {self.severity}")
        object.__setattr__(
            self, "matched_fingerprints", frozenset(self.matched_fingerprints)
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "alert_id": self.alert_id,
            "rule_name": self.rule_name,
            "severity": self.severity,
            "matched_fingerprints": sorted(self.matched_fingerprints),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AlertCorrelation":
        return cls(
            alert_id=data["alert_id"],
            rule_name=data.get("rule_name", ""),
            severity=data.get("severity", 1),
            matched_fingerprints=frozenset(data.get("matched_fingerprints", ())),
        )


@dataclass(frozen=True)
class ThreatFeature:
    """One ML model verdict attached to the incident."""

    model_name: str
    label: CanonicalThreatLabel
    score: float
    feature_vector: Tuple[float, ...] = ()

    def __post_init__(self) -> None:
        _check_unit("ThreatFeature score", self.score)
        object.__setattr__(self, "feature_vector", tuple(self.feature_vector))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "model_name": self.model_name,
            "label": self.label.value,
            "score": self.score,
            "feature_vector": list(self.feature_vector),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ThreatFeature":
        return cls(
            model_name=data["model_name"],
            label=CanonicalThreatLabel(data["label"]),
            score=data.get("score", 0.0),
            feature_vector=tuple(data.get("feature_vector", ())),
        )


# ---------------------------------------------------------------------------
# The unified incident record
# ---------------------------------------------------------------------------

def new_incident_id() -> str:
    return f"uicr-{uuid.uuid4().hex[:12]}"


@dataclass(frozen=True)
class UICR:
    """Unified incident record aggregating all artifacts of one incident."""

    incident_id: str = field(default_factory=new_incident_id)
    created_at: datetime = field(default_factory=utc_now)
    updated_at: datetime = field(default_factory=utc_now)
    triage_score: float = 0.0
    severity: Severity = Severity.LOW
    status: IncidentStatus = IncidentStatus.NEW
    kill_chain_phase: Optional[KillChainPhase] = None
    assigned_analyst: Optional[str] = None
    notes: str = ""
    correlation_keys: FrozenSet[str] = frozenset()
    source_tools: FrozenSet[str] = frozenset()
    tags: FrozenSet[str] = frozenset()
    iocs: Tuple[IoC, ...] = ()
    ioas: Tuple[IoA, ...] = ()
    flows: Tuple[NetworkFlowMeta, ...] = ()
    logs: Tuple[LogEntry, ...] = ()
    alerts: Tuple[AlertCorrelation, ...] = ()
    features: Tuple[ThreatFeature, ...] = ()

    def __post_init__(self) -> None:
        if not 0.0 <= self.triage_score <= 100.0:
            raise ValidationError(f"triage_score out of [0,100]: {self.triage_score}")
        if self.updated_at < self.created_at:
            raise ValidationError("updated_at must be >= created_at")
        object.__setattr__(self, "correlation_keys", frozenset(self.correlation_keys))
        object.__setattr__(self, "source_tools", frozenset(self.source_tools))
        object.__setattr__(self, "tags", frozenset(self.tags))
        for coll in ("iocs", "ioas", "flows", "logs", "alerts", "features"):
            object.__setattr__(self, coll, tuple(getattr(self, coll)))
        fps = [ioc.fingerprint for ioc in self.iocs]
        if len(fps) != len(set(fps)):
            raise ValidationError("duplicate IoC fingerprints within one record")

    def ioc_fingerprints(self) -> FrozenSet[str]:
        return frozenset(ioc.fingerprint for ioc in self.iocs)

    def ip_addresses(self) -> FrozenSet[str]:
        """IPs the record touches: ip-type IoCs plus flow endpoints."""
        ips = {ioc.value for ioc in self.iocs if ioc.ioc_type is IoCType.IP}
        for flow in self.flows:
            ips.add(flow.src_ip)
            ips.add(flow.dst_ip)
        return frozenset(ips)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "incident_id": self.incident_id,
            "created_at": format_timestamp(self.created_at),
            "updated_at": format_timestamp(self.updated_at),
            "triage_score": self.triage_score,
            "severity": self.severity.label,
            "status": self.status.value,
            "kill_chain_phase": self.kill_chain_phase.label if self.kill_chain_phase else None,
            "assigned_analyst": self.assigned_analyst,
            "notes": self.notes,
            "correlation_keys": sorted(self.correlation_keys),
            "source_tools": sorted(self.source_tools),
            "tags": sorted(self.tags),
            "iocs": [i.to_dict() for i in self.iocs],
            "ioas": [i.to_dict() for i in self.ioas],
            "flows": [f.to_dict() for f in self.flows],
            "logs": [l.to_dict() for l in self.logs],
            "alerts": [a.to_dict() for a in self.alerts],
            "features": [f.to_dict() for f in self.features],
        }

    def to_json(self, **kwargs: Any) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "UICR":
        phase = data.get("kill_chain_phase")
        return cls(
            incident_id=data.get("incident_id") or new_incident_id(),
            created_at=parse_timestamp(data["created_at"]) if data.get("created_at") else utc_now(),
            updated_at=parse_timestamp(data["updated_at"]) if data.get("updated_at") else utc_now(),
            triage_score=data.get("triage_score", 0.0),
            severity=Severity[data.get("severity", "Low").upper()],
            status=IncidentStatus(data.get("status", "new")),
            kill_chain_phase=_PHASE_BY_LABEL.get(phase.lower()) if phase else None,
            assigned_analyst=data.get("assigned_analyst"),
            notes=data.get("notes", ""),
            correlation_keys=frozenset(data.get("correlation_keys", ())),
            source_tools=frozenset(data.get("source_tools", ())),
            tags=frozenset(data.get("tags", ())),
            iocs=tuple(IoC.from_dict(d) for d in data.get("iocs", ())),
            ioas=tuple(IoA.from_dict(d) for d in data.get("ioas", ())),
            flows=tuple(NetworkFlowMeta.from_dict(d) for d in data.get("flows", ())),
            logs=tuple(LogEntry.from_dict(d) for d in data.get("logs", ())),
            alerts=tuple(AlertCorrelation.from_dict(d) for d in data.get("alerts", ())),
            features=tuple(ThreatFeature.from_dict(d) for d in data.get("features", ())),
        )

    @classmethod
    def from_json(cls, text: str) -> "UICR":
        return cls.from_dict(json.loads(text))


def add_ioc(record: UICR, ioc: IoC) -> UICR:
    """Append an IoC, deduplicating on fingerprint.

    If the fingerprint already exists the record keeps a single IoC entry
    and only gains the new source in that entry's provenance set. The
    record's ``updated_at`` is refreshed either way.
    """
    now = max(utc_now(), record.created_at)
    for idx, existing in enumerate(record.iocs):
        if existing.fingerprint == ioc.fingerprint:
            merged_prov = existing.provenance | ioc.provenance
            if merged_prov == existing.provenance:
                merged = existing
            else:
                merged = replace(existing, provenance=merged_prov)
            iocs = record.iocs[:idx] + (merged,) + record.iocs[idx + 1:]
            return replace(record, iocs=iocs, updated_at=now)
    return replace(record, iocs=record.iocs + (ioc,), updated_at=now)


# ---------------------------------------------------------------------------
# Threat-label normalization
# ---------------------------------------------------------------------------

#: Dataset alias -> canonical label. 34 fixed entries covering the class
#: names used by the common intrusion-detection corpora; extend via the
#: ``extra`` argument of normalize_threat_label for site-specific names.
THREAT_LABEL_ALIASES: Dict[str, CanonicalThreatLabel] = {
    # benign traffic
    "benign": CanonicalThreatLabel.BENIGN,
    "normal": CanonicalThreatLabel.BENIGN,
    "legitimate": CanonicalThreatLabel.BENIGN,
    "background": CanonicalThreatLabel.BENIGN,
    # volumetric / denial of service
    "ddos": CanonicalThreatLabel.DDOS,
    "dos": CanonicalThreatLabel.DDOS,
    "denial of service": CanonicalThreatLabel.DDOS,
    "flood": CanonicalThreatLabel.DDOS,
    # scanning and probing
    "reconnaissance": CanonicalThreatLabel.RECONNAISSANCE,
    "portscan": CanonicalThreatLabel.RECONNAISSANCE,
    "port scan": CanonicalThreatLabel.RECONNAISSANCE,
    "scanning": CanonicalThreatLabel.RECONNAISSANCE,
    "probe": CanonicalThreatLabel.RECONNAISSANCE,
    # exploitation
    "exploitation": CanonicalThreatLabel.EXPLOITATION,
    "exploits": CanonicalThreatLabel.EXPLOITATION,
    "exploit": CanonicalThreatLabel.EXPLOITATION,
    "infiltration": CanonicalThreatLabel.EXPLOITATION,
    "heartbleed": CanonicalThreatLabel.EXPLOITATION,
    # web attacks
    "webattack": CanonicalThreatLabel.WEB_ATTACK,
    "web attack": CanonicalThreatLabel.WEB_ATTACK,
    "web-attack": CanonicalThreatLabel.WEB_ATTACK,
    "sql injection": CanonicalThreatLabel.WEB_ATTACK,
    "xss": CanonicalThreatLabel.WEB_ATTACK,
    # persistent access
    "backdoor": CanonicalThreatLabel.BACKDOOR,
    "backdoors": CanonicalThreatLabel.BACKDOOR,
    "bot": CanonicalThreatLabel.BACKDOOR,
    "botnet": CanonicalThreatLabel.BACKDOOR,
    "trojan": CanonicalThreatLabel.BACKDOOR,
    # payloads and propagation
    "shellcode": CanonicalThreatLabel.SHELLCODE,
    "worms": CanonicalThreatLabel.WORMS,
    "worm": CanonicalThreatLabel.WORMS,
    # traffic analysis / fuzzing corpora classes
    "analysis": CanonicalThreatLabel.ANALYSIS,
    "fuzzers": CanonicalThreatLabel.FUZZERS,
    "fuzzing": CanonicalThreatLabel.FUZZERS,
}

_FUZZY_MIN_PREFIX = 4


def _common_prefix_len(a: str, b: str) -> int:
    n = 0
    for ca, cb in zip(a, b):
        if ca != cb:
            break
        n += 1
    return n


def normalize_threat_label(
    raw: str, extra: Optional[Dict[str, CanonicalThreatLabel]] = None
) -> CanonicalThreatLabel:
    """Map a dataset- or tool-specific class name onto the ontology.

    Exact case-insensitive alias lookup wins; otherwise the longest
    case-insensitive common prefix of at least four characters against the
    canonical names decides, ties broken alphabetically. Anything else is
    Unknown; no label outside the ontology is ever invented.
    """
    key = (raw or "").strip().lower()
    if not key:
        return CanonicalThreatLabel.UNKNOWN
    table = dict(THREAT_LABEL_ALIASES)
    if extra:
        table.update({k.strip().lower(): v for k, v in extra.items()})
    hit = table.get(key)
    if hit is not None:
        return hit
    for label in CANONICAL_ATTACK_LABELS:
        if key == label.value.lower():
            return label
    best: Optional[CanonicalThreatLabel] = None
    best_len = _FUZZY_MIN_PREFIX - 1
    for label in sorted(CANONICAL_ATTACK_LABELS, key=lambda l: l.value):
        plen = _common_prefix_len(key, label.value.lower())
        if plen > best_len:
            best, best_len = label, plen
    return best if best is not None else CanonicalThreatLabel.UNKNOWN


CONFIDENCE_FLOOR = 0.7
ENTROPY_CEILING = 0.8


def apply_confidence_gates(
    label: CanonicalThreatLabel, confidence: float, entropy_norm: float
) -> CanonicalThreatLabel:
    """Anti-hallucination relabeling.

    Predictions below the 0.7 confidence floor become Unknown; otherwise
    normalized entropy above 0.8 flags the prediction Uncertain.
    """
    _check_unit("confidence", confidence)
    _check_unit("entropy_norm", entropy_norm)
    if confidence < CONFIDENCE_FLOOR:
        return CanonicalThreatLabel.UNKNOWN
    if entropy_norm > ENTROPY_CEILING:
        return CanonicalThreatLabel.UNCERTAIN
    return label


# ---------------------------------------------------------------------------
# Kill-chain mapping
# ---------------------------------------------------------------------------

#: ATT&CK tactic id -> kill-chain phase. Fixed alignment table; the furthest
#: phase reached wins when several tactics are present.
TACTIC_ID_TO_PHASE: Dict[str, KillChainPhase] = {
    "TA0043": KillChainPhase.RECONNAISSANCE,
    "TA0042": KillChainPhase.WEAPONISATION,
    "TA0001": KillChainPhase.DELIVERY,
    "TA0002": KillChainPhase.EXPLOITATION,
    "TA0004": KillChainPhase.EXPLOITATION,
    "TA0008": KillChainPhase.EXPLOITATION,
    "TA0003": KillChainPhase.INSTALLATION,
    "TA0005": KillChainPhase.INSTALLATION,
    "TA0011": KillChainPhase.COMMAND_AND_CONTROL,
    "TA0006": KillChainPhase.ACTIONS_ON_OBJECTIVES,
    "TA0007": KillChainPhase.ACTIONS_ON_OBJECTIVES,
    "TA0009": KillChainPhase.ACTIONS_ON_OBJECTIVES,
    "TA0010": KillChainPhase.ACTIONS_ON_OBJECTIVES,
    "TA0040": KillChainPhase.ACTIONS_ON_OBJECTIVES,
}

TACTIC_NAME_TO_PHASE: Dict[str, KillChainPhase] = {
    "reconnaissance": KillChainPhase.RECONNAISSANCE,
    "resource development": KillChainPhase.WEAPONISATION,
    "initial access": KillChainPhase.DELIVERY,
    "execution": KillChainPhase.EXPLOITATION,
    "privilege escalation": KillChainPhase.EXPLOITATION,
    "lateral movement": KillChainPhase.EXPLOITATION,
    "persistence": KillChainPhase.INSTALLATION,
    "defense evasion": KillChainPhase.INSTALLATION,
    "defence evasion": KillChainPhase.INSTALLATION,
    "command and control": KillChainPhase.COMMAND_AND_CONTROL,
    "credential access": KillChainPhase.ACTIONS_ON_OBJECTIVES,
    "discovery": KillChainPhase.ACTIONS_ON_OBJECTIVES,
    "collection": KillChainPhase.ACTIONS_ON_OBJECTIVES,
    "exfiltration": KillChainPhase.ACTIONS_ON_OBJECTIVES,
    "impact": KillChainPhase.ACTIONS_ON_OBJECTIVES,
}


def map_kill_chain(
    tactic_ids: "frozenset[str] | set[str] | Tuple[str, ...] | List[str]" = (),
    tactic_names: "frozenset[str] | set[str] | Tuple[str, ...] | List[str]" = (),
) -> Optional[KillChainPhase]:
    """Map ATT&CK tactics to the furthest kill-chain phase reached.

    Unknown tactics are ignored; an input that maps nothing returns None.
    """
    best: Optional[KillChainPhase] = None
    for tid in tactic_ids:
        phase = TACTIC_ID_TO_PHASE.get(tid.strip().upper())
        if phase is not None and (best is None or phase.order > best.order):
            best = phase
    for name in tactic_names:
        phase = TACTIC_NAME_TO_PHASE.get(name.strip().lower())
        if phase is None:
            phase = _PHASE_BY_LABEL.get(name.strip().lower())
        if phase is not None and (best is None or phase.order > best.order):
            best = phase
    return best
