"""Incident correlation, triage scoring, and analyst summaries.

Merges batches of partial incident records into grouped incidents on three
ordered conditions (shared correlation keys, shared IoC fingerprints,
shared IPs within a time window), then recomputes the composite triage
score, kill-chain phase, and severity of every incident. Also provides the
incident timeline, IoC/IP pivot queries, the enrichment hook, and the
analyst summary text.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from typing import Any, Dict, Iterable, List, Optional, Protocol, Sequence, Tuple

from .uicr import (
    IoC,
    KillChainPhase,
    Severity,
    UICR,
    CanonicalThreatLabel,
    add_ioc,
    map_kill_chain,
    utc_now,
)

logger = logging.getLogger(__name__)

__all__ = [
    "CorrelationConfig",
    "TriageBreakdown",
    "TimelineEntry",
    "EnrichmentProvider",
    "should_correlate",
    "correlate_batch",
    "compute_triage_score",
    "compute_severity",
    "build_timeline",
    "pivot",
    "enrich_ioc",
    "summarize",
]

_IP_RE = re.compile(r"\b(?:\d{1,3}\.){3}\d{1,3}\b")


@dataclass(frozen=True)
class CorrelationConfig:
    """Tunable weights for grouping and triage.

    The five factor caps combine to at most 100 with the kill-chain
    contribution capped by construction at 7 x 2.14 = 14.98.
    """

    time_window_seconds: float = 300.0
    ioc_cap: float = 25.0
    ioa_cap: float = 20.0
    alert_cap: float = 25.0
    killchain_multiplier: float = 2.14
    llm_weight: float = 15.0

    def __post_init__(self) -> None:
        if self.time_window_seconds <= 0:
            raise ValueError("time_window_seconds must be positive")
        for name in ("ioc_cap", "ioa_cap", "alert_cap", "killchain_multiplier", "llm_weight"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        ceiling = (self.ioc_cap + self.ioa_cap + self.alert_cap
                   + 7 * self.killchain_multiplier + self.llm_weight)
        if ceiling > 100.0 + 1e-9:
            raise ValueError(f"factor caps exceed the 0-100 scale: {ceiling:.2f}")


@dataclass(frozen=True)
class TriageBreakdown:
    """Per-factor decomposition of one incident's triage score."""

    ioc_points: float
    ioa_points: float
    alert_points: float
    killchain_points: float
    llm_points: float
    total: float

    def to_dict(self) -> Dict[str, float]:
        return {
            "ioc_points": self.ioc_points,
            "ioa_points": self.ioa_points,
            "alert_points": self.alert_points,
            "killchain_points": self.killchain_points,
            "llm_points": self.llm_points,
            "total": self.total,
        }


@dataclass(frozen=True)
class TimelineEntry:
    timestamp: datetime
    kind: str  # "log" | "alert" | "flow"
    summary: str


class EnrichmentProvider(Protocol):
    """Pure lookup contract for external indicator intelligence.

    Implementations must not mutate the record they are asked about.
    """

    name: str

    def supports(self, ioc_type: str) -> bool: ...

    def lookup(self, ioc: IoC) -> Dict[str, Any]: ...


# ---------------------------------------------------------------------------
# Grouping
# ---------------------------------------------------------------------------

def _record_timestamps(record: UICR) -> List[datetime]:
    stamps = [log.timestamp for log in record.logs]
    stamps.extend(flow.timestamp for flow in record.flows if flow.timestamp is not None)
    if not stamps:
        stamps = [record.created_at]
    return stamps


def should_correlate(incident: UICR, candidate: UICR, window: float) -> bool:
    """Decide whether a partial record belongs to an existing incident.

    Conditions are checked in order: shared correlation keys, shared IoC
    fingerprints, then shared IPs with |latest(incident) - earliest(candidate)|
    within the window (inclusive). The time comparison intentionally uses
    the incident's latest against the candidate's earliest timestamp and is
    therefore not symmetric.
    """
    if incident.correlation_keys & candidate.correlation_keys:
        return True
    if incident.ioc_fingerprints() & candidate.ioc_fingerprints():
        return True
    if incident.ip_addresses() & candidate.ip_addresses():
        latest = max(_record_timestamps(incident))
        earliest = min(_record_timestamps(candidate))
        if abs((latest - earliest).total_seconds()) <= window:
            return True
    return False


def _merge(incident: UICR, partial: UICR) -> UICR:
    merged = replace(
        incident,
        created_at=min(incident.created_at, partial.created_at),
        correlation_keys=incident.correlation_keys | partial.correlation_keys,
        source_tools=incident.source_tools | partial.source_tools,
        tags=incident.tags | partial.tags,
        ioas=incident.ioas + partial.ioas,
        flows=incident.flows + partial.flows,
        logs=incident.logs + partial.logs,
        alerts=incident.alerts + partial.alerts,
        features=incident.features + partial.features,
        updated_at=max(utc_now(), incident.created_at, partial.created_at),
    )
    for ioc in partial.iocs:
        merged = add_ioc(merged, ioc)
    return merged


def _mapped_phase(record: UICR) -> Optional[KillChainPhase]:
    # IoA tactic fields may hold TA#### ids or tactic names; try both rows.
    tactics = frozenset(ioa.tactic for ioa in record.ioas if ioa.tactic)
    phase = map_kill_chain(tactic_ids=tactics, tactic_names=tactics)
    return phase if phase is not None else record.kill_chain_phase


def _rescore(record: UICR, config: CorrelationConfig) -> UICR:
    breakdown = compute_triage_score(record, config)
    scored = replace(
        record, triage_score=breakdown.total, kill_chain_phase=_mapped_phase(record)
    )
    return replace(scored, severity=compute_severity(scored))


def correlate_batch(partials: Sequence[UICR], config: Optional[CorrelationConfig] = None) -> List[UICR]:
    """Merge a batch of partial records into grouped, scored incidents.

    Each partial joins the first existing incident it correlates with
    (insertion order; batch order is part of the contract) or starts a new
    incident. Scores, kill-chain phases, and severities are recomputed once
    after the whole batch, which yields the same final state as rescoring
    inside the loop.
    """
    config = config or CorrelationConfig()
    incidents: List[UICR] = []
    for partial in partials:
        for idx, incident in enumerate(incidents):
            if should_correlate(incident, partial, config.time_window_seconds):
                incidents[idx] = _merge(incident, partial)
                break
        else:
            incidents.append(partial)
    return [_rescore(incident, config) for incident in incidents]


# ---------------------------------------------------------------------------
# Triage scoring
# ---------------------------------------------------------------------------

def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def compute_triage_score(record: UICR, config: Optional[CorrelationConfig] = None) -> TriageBreakdown:
    """Composite five-factor triage score, clamped to [0, 100].

    Factors: IoC count and mean confidence (capped at 25), IoA count and
    mean confidence (capped at 20), alert count and max severity (capped at
    25), kill-chain order x 2.14 (max 14.98), and the best non-benign model
    score x 15. Means over empty lists are 0.
    """
    config = config or CorrelationConfig()
    ioc_points = min(
        len(record.iocs) * 3 + _mean([i.confidence for i in record.iocs]) * 10,
        config.ioc_cap,
    )
    ioa_points = min(
        len(record.ioas) * 5 + _mean([i.confidence for i in record.ioas]) * 5,
        config.ioa_cap,
    )
    max_sev = max((a.severity for a in record.alerts), default=0)
    alert_points = min(len(record.alerts) * 2 + max_sev, config.alert_cap)
    phase = _mapped_phase(record)
    killchain_points = (phase.order if phase else 0) * config.killchain_multiplier
    llm_points = max(
        (
            f.score * config.llm_weight
            for f in record.features
            if f.label is not CanonicalThreatLabel.BENIGN
        ),
        default=0.0,
    )
    total = min(ioc_points + ioa_points + alert_points + killchain_points + llm_points, 100.0)
    return TriageBreakdown(
        ioc_points=ioc_points,
        ioa_points=ioa_points,
        alert_points=alert_points,
        killchain_points=killchain_points,
        llm_points=llm_points,
        total=total,
    )


SEVERITY_THRESHOLDS: Tuple[Tuple[float, Severity], ...] = (
    (80.0, Severity.CRITICAL),
    (60.0, Severity.HIGH),
    (40.0, Severity.MEDIUM),
)


def compute_severity(record: UICR) -> Severity:
    """Quartile-like severity bands over the 0-100 triage scale."""
    for threshold, severity in SEVERITY_THRESHOLDS:
        if record.triage_score >= threshold:
            return severity
    return Severity.LOW


# ---------------------------------------------------------------------------
# Timeline and pivot
# ---------------------------------------------------------------------------

_KIND_ORDER = {"log": 0, "alert": 1, "flow": 2}


def _alert_timestamp(record: UICR, alert) -> Optional[datetime]:
    # Alerts carry no timestamp of their own; borrow the earliest log that
    # mentions a matched indicator value.
    matched_values = {
        ioc.value for ioc in record.iocs if ioc.fingerprint in alert.matched_fingerprints
    }
    candidates = [
        log.timestamp
        for log in record.logs
        if any(value in log.message for value in matched_values)
    ]
    return min(candidates) if candidates else None


def build_timeline(record: UICR) -> List[TimelineEntry]:
    """Chronologically sorted merge of log, alert, and flow timestamps.

    Ties keep the fixed ordering logs < alerts < flows. Alerts without a
    resolvable timestamp are skipped (and logged).
    """
    entries: List[TimelineEntry] = []
    for log in record.logs:
        entries.append(TimelineEntry(log.timestamp, "log", f"[{log.level.value}] {log.message}"))
    for alert in record.alerts:
        ts = _alert_timestamp(record, alert)
        if ts is None:
            logger.info("timeline: skipping alert %s (no matched log timestamp)", alert.alert_id)
            continue
        entries.append(
            TimelineEntry(ts, "alert", f"alert {alert.alert_id} ({alert.rule_name}) sev={alert.severity}")
        )
    for flow in record.flows:
        if flow.timestamp is None:
            logger.info("timeline: skipping flow %s->%s (no timestamp)", flow.src_ip, flow.dst_ip)
            continue
        entries.append(
            TimelineEntry(
                flow.timestamp,
                "flow",
                f"{flow.protocol} {flow.src_ip}:{flow.src_port} -> {flow.dst_ip}:{flow.dst_port}",
            )
        )
    entries.sort(key=lambda e: (e.timestamp, _KIND_ORDER[e.kind]))
    return entries


def _record_search_ips(record: UICR) -> set:
    ips = set(record.ip_addresses())
    for log in record.logs:
        ips.update(_IP_RE.findall(log.message))
        for value in log.parsed_fields.values():
            if isinstance(value, str) and _IP_RE.fullmatch(value):
                ips.add(value)
    return ips


def pivot(store: "Iterable[UICR] | Any", key: str) -> List[str]:
    """All incident ids whose IoC values or flow/log IPs contain the key.

    ``store`` is either an iterable of records or a tenant store exposing
    ``iter_incidents()``. Results come back newest first.
    """
    if hasattr(store, "iter_incidents"):
        records = [UICR.from_dict(body) for body in store.iter_incidents()]
    else:
        records = list(store)
    hits = [
        record
        for record in records
        if key in {ioc.value for ioc in record.iocs} or key in _record_search_ips(record)
    ]
    hits.sort(key=lambda r: (r.updated_at, r.incident_id), reverse=True)
    return [r.incident_id for r in hits]


# ---------------------------------------------------------------------------
# Enrichment and summaries
# ---------------------------------------------------------------------------

def enrich_ioc(ioc: IoC, provider: EnrichmentProvider) -> Tuple[IoC, Optional[str]]:
    """Merge a provider's lookup under provider-namespaced enrichment keys.

    Failures and unsupported types leave the IoC unchanged and return a
    warning message instead of raising.
    """
    if not provider.supports(ioc.ioc_type.value):
        return ioc, f"provider {provider.name} does not support type {ioc.ioc_type.value}"
    try:
        result = provider.lookup(ioc)
    except Exception as exc:  # provider faults must never corrupt the record
        logger.warning("enrichment via %s failed: %s", provider.name, exc)
        return ioc, f"provider {provider.name} failed: {exc}"
    enrichment = dict(ioc.enrichment)
    for key, value in result.items():
        enrichment[f"{provider.name}.{key}"] = value
    return replace(ioc, enrichment=enrichment), None


RECOMMENDED_ACTIONS = {
    Severity.CRITICAL: "escalate",
    Severity.HIGH: "investigate",
    Severity.MEDIUM: "contain",
    Severity.LOW: "archive",
}


def summarize(record: UICR) -> str:
    """Deterministic analyst summary for one scored incident."""
    top_iocs = sorted(record.iocs, key=lambda i: (-i.confidence, i.value))[:3]
    ioc_text = (
        ", ".join(f"{i.ioc_type.value}:{i.value} ({i.confidence:.2f})" for i in top_iocs)
        if top_iocs
        else "none"
    )
    phase_text = record.kill_chain_phase.label if record.kill_chain_phase else "none"
    action = RECOMMENDED_ACTIONS[record.severity]
    return (
        f"Incident {record.incident_id}: severity {record.severity.label}, "
        f"triage score {record.triage_score:.2f}. "
        f"Top IoCs: {ioc_text}. "
        f"Active kill-chain phase: {phase_text}. "
        f"Recommended action: {action}."
    )
