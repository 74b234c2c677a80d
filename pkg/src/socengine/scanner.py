"""Multi-source security event scanning and normalization (phase 1).

Parses syslog, Windows Event Log JSON, Apache combined-log lines, flow
CSVs, incident records, and workflow traces into a single SecurityEvent
shape, deduplicates on a content fingerprint, optionally enriches events
with semantic tags, ranks them by relevance, and caps the output at the
configured top-N.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Dict, FrozenSet, Iterable, List, Optional, Protocol, Sequence, Tuple

from .uicr import (
    KillChainPhase,
    UICR,
    ValidationError,
    format_timestamp,
    map_kill_chain,
    parse_timestamp,
    utc_now,
)

logger = logging.getLogger(__name__)

__all__ = [
    "SourceType",
    "SemanticTags",
    "SecurityEvent",
    "ScanConfig",
    "ScanResult",
    "ParseError",
    "TagProvider",
    "parse_syslog",
    "parse_windows_event",
    "parse_apache_combined",
    "parse_flow_csv",
    "from_uicr",
    "from_workflow_trace",
    "scan",
    "load_manifest",
]


class ParseError(ValueError):
    """Raised when a single input cannot be parsed; carries the raw input."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class SourceType(str, Enum):
    """Provenance of a security event; 21 supported slots.

    The trailing ten values are reserved connector slots that no shipped
    parser emits yet; they exist so stored events from future connectors
    keep a stable enum.
    """

    SYSLOG = "syslog"
    WINDOWS_EVENT = "windows_event"
    APACHE = "apache"
    NETWORK_FLOW = "network_flow"
    UICR = "uicr"
    WORKFLOW = "workflow"
    DATASET = "dataset"
    MITRE_TECHNIQUE = "mitre_technique"
    SIEM_ALERT = "siem_alert"
    EDR = "edr"
    PCAP = "pcap"
    # reserved connector slots
    FIREWALL = "firewall"
    PROXY = "proxy"
    DNS_LOG = "dns_log"
    AUTH_LOG = "auth_log"
    CLOUD_AUDIT = "cloud_audit"
    EMAIL_GATEWAY = "email_gateway"
    ANTIVIRUS = "antivirus"
    DATABASE_AUDIT = "database_audit"
    CONTAINER_RUNTIME = "container_runtime"
    CUSTOM = "custom"


@dataclass(frozen=True)
class SemanticTags:
    kill_chain_phase: Optional[KillChainPhase] = None
    attack_category: Optional[str] = None
    key_indicators: FrozenSet[str] = frozenset()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kill_chain_phase": self.kill_chain_phase.label if self.kill_chain_phase else None,
            "attack_category": self.attack_category,
            "key_indicators": sorted(self.key_indicators),
        }


_MESSAGE_PREFIX_LEN = 64


def _dedup_fingerprint(timestamp: datetime, source_type: SourceType,
                       ips: Iterable[str], message: str) -> str:
    canonical = "|".join(
        [
            format_timestamp(timestamp),
            source_type.value,
            ",".join(sorted(ips)),
            message[:_MESSAGE_PREFIX_LEN],
        ]
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class SecurityEvent:
    """Normalized per-event model feeding the reconstruction graph."""

    timestamp: datetime
    source_type: SourceType
    message: str
    event_id: str = ""
    src_ip: Optional[str] = None
    dst_ip: Optional[str] = None
    src_port: Optional[int] = None
    dst_port: Optional[int] = None
    protocol: Optional[str] = None
    hostname: Optional[str] = None
    process_name: Optional[str] = None
    parent_process: Optional[str] = None
    process_id: Optional[int] = None
    file_path: Optional[str] = None
    command_line: Optional[str] = None
    user: Optional[str] = None
    session_id: Optional[str] = None
    iocs: FrozenSet[str] = frozenset()
    ioas: FrozenSet[str] = frozenset()
    mitre_tactics: FrozenSet[str] = frozenset()
    alert_name: Optional[str] = None
    severity: Optional[int] = None
    payload: Optional[str] = None
    semantic_tags: SemanticTags = field(default_factory=SemanticTags)
    relevance_score: float = 0.0
    confidence: float = 0.5
    dedup_fingerprint: str = ""

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(f"event confidence out of range: {self.confidence}")
        if self.relevance_score < 0:
            raise ValidationError("relevance_score must be >= 0")
        object.__setattr__(self, "iocs", frozenset(self.iocs))
        object.__setattr__(self, "ioas", frozenset(self.ioas))
        object.__setattr__(self, "mitre_tactics", frozenset(self.mitre_tactics))
        fp = _dedup_fingerprint(self.timestamp, self.source_type, self.ips(), self.message)
        object.__setattr__(self, "dedup_fingerprint", fp)
        if not self.event_id:
            # content-derived id keeps scans and downstream scenario ids
            # reproducible across runs; duplicates collapse in dedup anyway
            object.__setattr__(self, "event_id", f"evt-{fp}")

    def ips(self) -> FrozenSet[str]:
        return frozenset(ip for ip in (self.src_ip, self.dst_ip) if ip)

    def kill_chain_order(self) -> Optional[int]:
        """Phase order from the semantic tag, else mapped from tactics."""
        if self.semantic_tags.kill_chain_phase is not None:
            return self.semantic_tags.kill_chain_phase.order
        phase = map_kill_chain(tactic_ids=self.mitre_tactics, tactic_names=self.mitre_tactics)
        return phase.order if phase else None

    def byte_volume(self) -> Optional[int]:
        """Total transferred bytes, when the payload carries flow metrics."""
        if not self.payload:
            return None
        try:
            data = json.loads(self.payload)
        except (json.JSONDecodeError, TypeError):
            return None
        if not isinstance(data, dict):
            return None
        if "bytes_total" in data:
            return int(data["bytes_total"])
        total = 0
        seen = False
        for key in ("bytes", "bytes_sent", "bytes_recv"):
            if key in data:
                total += int(data[key])
                seen = True
        return total if seen else None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "event_id": self.event_id,
            "timestamp": format_timestamp(self.timestamp),
            "source_type": self.source_type.value,
            "src_ip": self.src_ip,
            "dst_ip": self.dst_ip,
            "src_port": self.src_port,
            "dst_port": self.dst_port,
            "protocol": self.protocol,
            "hostname": self.hostname,
            "process_name": self.process_name,
            "parent_process": self.parent_process,
            "process_id": self.process_id,
            "file_path": self.file_path,
            "command_line": self.command_line,
            "user": self.user,
            "session_id": self.session_id,
            "iocs": sorted(self.iocs),
            "ioas": sorted(self.ioas),
            "mitre_tactics": sorted(self.mitre_tactics),
            "alert_name": self.alert_name,
            "severity": self.severity,
            "message": self.message,
            "payload": self.payload,
            "semantic_tags": self.semantic_tags.to_dict(),
            "relevance_score": self.relevance_score,
            "confidence": self.confidence,
            "dedup_fingerprint": self.dedup_fingerprint,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SecurityEvent":
        tags = data.get("semantic_tags") or {}
        phase_label = tags.get("kill_chain_phase")
        phase = None
        if phase_label:
            for candidate in KillChainPhase:
                if candidate.label.lower() == str(phase_label).lower():
                    phase = candidate
                    break
        return cls(
            event_id=data.get("event_id", ""),
            timestamp=parse_timestamp(data["timestamp"]),
            source_type=SourceType(data["source_type"]),
            message=data.get("message", ""),
            src_ip=data.get("src_ip"),
            dst_ip=data.get("dst_ip"),
            src_port=data.get("src_port"),
            dst_port=data.get("dst_port"),
            protocol=data.get("protocol"),
            hostname=data.get("hostname"),
            process_name=data.get("process_name"),
            parent_process=data.get("parent_process"),
            process_id=data.get("process_id"),
            file_path=data.get("file_path"),
            command_line=data.get("command_line"),
            user=data.get("user"),
            session_id=data.get("session_id"),
            iocs=frozenset(data.get("iocs", ())),
            ioas=frozenset(data.get("ioas", ())),
            mitre_tactics=frozenset(data.get("mitre_tactics", ())),
            alert_name=data.get("alert_name"),
            severity=data.get("severity"),
            payload=data.get("payload"),
            semantic_tags=SemanticTags(
                kill_chain_phase=phase,
                attack_category=tags.get("attack_category"),
                key_indicators=frozenset(tags.get("key_indicators", ())),
            ),
            relevance_score=data.get("relevance_score", 0.0),
            confidence=data.get("confidence", 0.5),
        )


@dataclass(frozen=True)
class ScanConfig:
    top_n: int = 100
    dedup: bool = True
    tag_enrichment: bool = False
    reasoning_quality: float = 0.5
    syslog_year: Optional[int] = None  # RFC-3164 lines omit the year

    MAX_TOP_N = 500

    def __post_init__(self) -> None:
        if not 1 <= self.top_n <= self.MAX_TOP_N:
            raise ValidationError(f"top_n must be within 1..{self.MAX_TOP_N}: {self.top_n}")
        if not 0.0 <= self.reasoning_quality <= 1.0:
            raise ValidationError("reasoning_quality must be within [0, 1]")


class TagProvider(Protocol):
    """Semantic enrichment hook; implementations must be side-effect free."""

    def tag(self, event: SecurityEvent) -> SemanticTags: ...


# ---------------------------------------------------------------------------
# Parsers
# ---------------------------------------------------------------------------

_IP_RE = re.compile(r"\b(?:\d{1,3}\.){3}\d{1,3}\b")

_SYSLOG_RE = re.compile(
    r"^(?P<mon>Jan|Feb|Mar|Apr|May|Jun|Jul|Aug|Sep|Oct|Nov|Dec)\s+"
    r"(?P<day>\d{1,2})\s(?P<time>\d{2}:\d{2}:\d{2})\s"
    r"(?P<host>\S+)\s(?P<tag>[^:\s]+):\s?(?P<msg>.*)$"
)

_MONTHS = {m: i + 1 for i, m in enumerate(
    ["Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"]
)}


def parse_syslog(line: str, year: Optional[int] = None) -> SecurityEvent:
    """Parse an RFC-3164-style line; the year defaults to the current UTC year."""
    match = _SYSLOG_RE.match(line.strip())
    if not match:
        raise ParseError(f"not a syslog line: {line!r}", raw=line)
    year = year or utc_now().year
    hh, mm, ss = (int(p) for p in match["time"].split(":"))
    timestamp = datetime(
        year, _MONTHS[match["mon"]], int(match["day"]), hh, mm, ss, tzinfo=timezone.utc
    )
    message = match["msg"]
    ips = _IP_RE.findall(message)
    return SecurityEvent(
        timestamp=timestamp,
        source_type=SourceType.SYSLOG,
        message=message,
        hostname=match["host"],
        process_name=match["tag"],
        src_ip=ips[0] if ips else None,
        dst_ip=ips[1] if len(ips) > 1 else None,
    )


def parse_windows_event(json_text: str) -> SecurityEvent:
    """Parse a Windows Event Log record exported as a JSON object."""
    try:
        data = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}", raw=json_text) from exc
    if not isinstance(data, dict):
        raise ParseError("windows event must be a JSON object", raw=json_text)
    if "TimeCreated" not in data:
        raise ParseError("windows event missing TimeCreated", raw=json_text)
    pid = data.get("ProcessId")
    return SecurityEvent(
        timestamp=parse_timestamp(str(data["TimeCreated"])),
        source_type=SourceType.WINDOWS_EVENT,
        message=str(data.get("Message", "")),
        hostname=data.get("Computer"),
        alert_name=str(data["EventID"]) if "EventID" in data else None,
        process_name=data.get("NewProcessName"),
        parent_process=data.get("ParentProcessName"),
        command_line=data.get("CommandLine"),
        process_id=int(pid) if pid is not None else None,
        user=data.get("SubjectUserName") or data.get("TargetUserName"),
        src_ip=data.get("IpAddress"),
    )


_APACHE_RE = re.compile(
    r'^(?P<ip>\S+)\s+(?P<ident>\S+)\s+(?P<authuser>\S+)\s+'
    r'\[(?P<ts>[^\]]+)\]\s+"(?P<request>[^"]*)"\s+'
    r'(?P<status>\d{3})\s+(?P<bytes>\d+|-)'
    r'(?:\s+"(?P<referer>[^"]*)"\s+"(?P<agent>[^"]*)")?\s*$'
)


def parse_apache_combined(line: str) -> SecurityEvent:
    """Parse an Apache combined/common log line."""
    match = _APACHE_RE.match(line.strip())
    if not match:
        raise ParseError(f"not an apache combined-log line: {line!r}", raw=line)
    try:
        timestamp = datetime.strptime(match["ts"], "%d/%b/%Y:%H:%M:%S %z")
    except ValueError as exc:
        raise ParseError(f"bad CLF timestamp: {match['ts']!r}", raw=line) from exc
    size = 0 if match["bytes"] == "-" else int(match["bytes"])
    payload = {"status": int(match["status"]), "bytes": size}
    if match["referer"] is not None:
        payload["referer"] = match["referer"]
    if match["agent"] is not None:
        payload["user_agent"] = match["agent"]
    user = match["authuser"] if match["authuser"] != "-" else None
    return SecurityEvent(
        timestamp=timestamp.astimezone(timezone.utc),
        source_type=SourceType.APACHE,
        message=match["request"],
        src_ip=match["ip"] if _IP_RE.fullmatch(match["ip"]) else None,
        user=user,
        payload=json.dumps(payload, sort_keys=True),
    )


_FLOW_COLUMNS = ("timestamp", "src_ip", "dst_ip", "src_port", "dst_port", "protocol")


def parse_flow_csv(text: str, source_type: SourceType = SourceType.NETWORK_FLOW) -> List[SecurityEvent]:
    """Parse a flow CSV (local-file dataset adapter) into flow events.

    Expected columns: timestamp, src_ip, dst_ip, src_port, dst_port,
    protocol, and optionally bytes_sent/bytes_recv/duration/severity/label.
    """
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or not set(_FLOW_COLUMNS) <= set(reader.fieldnames):
        missing = set(_FLOW_COLUMNS) - set(reader.fieldnames or ())
        raise ParseError(f"flow CSV missing columns: {sorted(missing)}", raw=text[:200])
    events: List[SecurityEvent] = []
    for row in reader:
        payload = {}
        for key in ("bytes_sent", "bytes_recv", "duration"):
            if row.get(key):
                payload[key] = float(row[key]) if key == "duration" else int(row[key])
        severity = int(row["severity"]) if row.get("severity") else None
        label = row.get("label", "")
        message = (
            f"flow {row['protocol']} {row['src_ip']}:{row['src_port']} -> "
            f"{row['dst_ip']}:{row['dst_port']}" + (f" [{label}]" if label else "")
        )
        events.append(
            SecurityEvent(
                timestamp=parse_timestamp(row["timestamp"]),
                source_type=source_type,
                message=message,
                src_ip=row["src_ip"],
                dst_ip=row["dst_ip"],
                src_port=int(row["src_port"]),
                dst_port=int(row["dst_port"]),
                protocol=row["protocol"].lower(),
                severity=severity,
                payload=json.dumps(payload, sort_keys=True) if payload else None,
            )
        )
    return events


def from_uicr(record: UICR) -> List[SecurityEvent]:
    """Explode a correlated incident into one event per log and per flow."""
    ioc_values = frozenset(ioc.value for ioc in record.iocs)
    technique_ids = frozenset(ioa.technique_id for ioa in record.ioas)
    tactics = frozenset(ioa.tactic for ioa in record.ioas if ioa.tactic)
    events: List[SecurityEvent] = []
    for log in record.logs:
        events.append(
            SecurityEvent(
                timestamp=log.timestamp,
                source_type=SourceType.UICR,
                message=log.message,
                hostname=log.host or None,
                iocs=ioc_values,
                ioas=technique_ids,
                mitre_tactics=tactics,
                session_id=record.incident_id,
            )
        )
    for flow in record.flows:
        payload = {"bytes_sent": flow.bytes_sent, "bytes_recv": flow.bytes_recv,
                   "duration": flow.duration}
        events.append(
            SecurityEvent(
                timestamp=flow.timestamp or record.created_at,
                source_type=SourceType.UICR,
                message=(
                    f"flow {flow.protocol} {flow.src_ip}:{flow.src_port} -> "
                    f"{flow.dst_ip}:{flow.dst_port}"
                ),
                src_ip=flow.src_ip,
                dst_ip=flow.dst_ip,
                src_port=flow.src_port,
                dst_port=flow.dst_port,
                protocol=flow.protocol,
                iocs=ioc_values,
                ioas=technique_ids,
                mitre_tactics=tactics,
                session_id=record.incident_id,
                payload=json.dumps(payload, sort_keys=True),
            )
        )
    return events


def from_workflow_trace(records: Iterable[Dict[str, Any]]) -> List[SecurityEvent]:
    """Normalize serialized workflow trace records into workflow events."""
    events = []
    for data in records:
        merged = dict(data)
        merged["source_type"] = SourceType.WORKFLOW.value
        events.append(SecurityEvent.from_dict(merged))
    return events


# ---------------------------------------------------------------------------
# Scan pipeline
# ---------------------------------------------------------------------------

@dataclass
class ScanResult:
    events: List[SecurityEvent]
    errors: List[ParseError] = field(default_factory=list)
    raw_count: int = 0


_FORMAT_PARSERS = {
    "syslog": "syslog",
    "windows_json": "windows_json",
    "apache_combined": "apache_combined",
    "uicr_json": "uicr_json",
    "csv_flows": "csv_flows",
    "workflow_json": "workflow_json",
}


def _parse_source(fmt: str, content: str, config: ScanConfig,
                  events: List[SecurityEvent], errors: List[ParseError]) -> None:
    if fmt == "syslog":
        for line in content.splitlines():
            if not line.strip():
                continue
            try:
                events.append(parse_syslog(line, year=config.syslog_year))
            except ParseError as exc:
                errors.append(exc)
    elif fmt == "windows_json":
        for line in content.splitlines():
            if not line.strip():
                continue
            try:
                events.append(parse_windows_event(line))
            except ParseError as exc:
                errors.append(exc)
    elif fmt == "apache_combined":
        for line in content.splitlines():
            if not line.strip():
                continue
            try:
                events.append(parse_apache_combined(line))
            except ParseError as exc:
                errors.append(exc)
    elif fmt == "csv_flows":
        try:
            events.extend(parse_flow_csv(content))
        except ParseError as exc:
            errors.append(exc)
    elif fmt == "uicr_json":
        try:
            record = UICR.from_json(content)
            events.extend(from_uicr(record))
        except (ValueError, KeyError) as exc:
            errors.append(ParseError(f"bad UICR JSON: {exc}", raw=content[:200]))
    elif fmt == "workflow_json":
        try:
            data = json.loads(content)
            records = data if isinstance(data, list) else data.get("events", [])
            events.extend(from_workflow_trace(records))
        except (ValueError, KeyError) as exc:
            errors.append(ParseError(f"bad workflow trace: {exc}", raw=content[:200]))
    else:
        errors.append(ParseError(f"unknown source format: {fmt}"))


def _relevance(event: SecurityEvent, t_min: datetime, t_max: datetime) -> float:
    severity_part = (event.severity / 5.0) if event.severity is not None else 0.2
    ioc_part = min(len(event.iocs), 3) / 3.0
    span = (t_max - t_min).total_seconds()
    recency = 1.0 if span <= 0 else (event.timestamp - t_min).total_seconds() / span
    ioa_part = 1.0 if event.ioas else 0.0
    return 0.4 * severity_part + 0.3 * ioc_part + 0.2 * recency + 0.1 * ioa_part


def scan(
    sources: "Sequence[Tuple[str, str] | SecurityEvent]",
    config: Optional[ScanConfig] = None,
    tagger: Optional[TagProvider] = None,
) -> ScanResult:
    """Parse, deduplicate, tag, rank, and cap heterogeneous sources.

    ``sources`` mixes already-normalized events with (format, content)
    pairs. Per-line errors are collected, never raised: a batch with only
    bad input yields an empty result plus the error report.
    """
    config = config or ScanConfig()
    events: List[SecurityEvent] = []
    errors: List[ParseError] = []
    for source in sources:
        if isinstance(source, SecurityEvent):
            events.append(source)
        else:
            fmt, content = source
            _parse_source(fmt, content, config, events, errors)
    raw_count = len(events)

    if config.dedup:
        seen: Dict[str, SecurityEvent] = {}
        for event in events:
            seen.setdefault(event.dedup_fingerprint, event)
        events = list(seen.values())

    if tagger is not None and config.tag_enrichment:
        events = [replace(e, semantic_tags=tagger.tag(e)) for e in events]

    if events:
        t_min = min(e.timestamp for e in events)
        t_max = max(e.timestamp for e in events)
        events = [
            replace(e, relevance_score=_relevance(e, t_min, t_max)) for e in events
        ]
        events.sort(key=lambda e: (-e.relevance_score, e.timestamp, e.event_id))
        events = events[: config.top_n]

    return ScanResult(events=events, errors=errors, raw_count=raw_count)


def load_manifest(path: "str | Path") -> List[Tuple[str, str]]:
    """Load a {path, format} manifest into (format, content) source pairs."""
    manifest_path = Path(path)
    data = json.loads(manifest_path.read_text())
    entries = data["sources"] if isinstance(data, dict) else data
    sources: List[Tuple[str, str]] = []
    for entry in entries:
        fmt = entry["format"]
        if fmt not in _FORMAT_PARSERS:
            raise ValidationError(f"unknown manifest format: {fmt}")
        if "content" in entry:
            content = entry["content"] if isinstance(entry["content"], str) else json.dumps(entry["content"])
        else:
            source_path = Path(entry["path"])
            if not source_path.is_absolute():
                source_path = manifest_path.parent / source_path
            content = source_path.read_text()
        sources.append((fmt, content))
    return sources


class DeterministicTagProvider:
    """Offline tag stub: derives the kill-chain phase from MITRE tactics."""

    def tag(self, event: SecurityEvent) -> SemanticTags:
        phase = map_kill_chain(tactic_ids=event.mitre_tactics, tactic_names=event.mitre_tactics)
        return SemanticTags(
            kill_chain_phase=phase,
            attack_category=None,
            key_indicators=event.iocs,
        )
