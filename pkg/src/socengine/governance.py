"""Governance policy model, guardrail evaluation, and audit logging.

The guardrail evaluation runs five ordered steps: sliding-window rate
limiting, deny-by-default RBAC (input direction only), compiled pattern
scanning for the direction's set, model-protection rules from the active
policy, and PII detection. A pluggable semantic classifier forms layer 2
and only sees inputs that produced no layer-1 alert. Every evaluation and
every audited tool call lands in an append-only audit log matching the
fixed schema (id, tool_name, caller, status, duration_ms, detail, blocked,
timestamp).
"""

from __future__ import annotations

import base64
import csv
import io
import json
import logging
import re
import sqlite3
import threading
import time
import uuid
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Deque, Dict, List, Optional, Protocol, Sequence, Tuple

from .store import TenantStore
from .uicr import format_timestamp, parse_timestamp, utc_now

logger = logging.getLogger(__name__)

__all__ = [
    "Role",
    "AccessLevel",
    "AlertSeverity",
    "Alert",
    "GuardrailResult",
    "AccessRestriction",
    "RateLimit",
    "SecurityPolicy",
    "DataPrivacyPolicy",
    "ResponsibleAIPolicy",
    "IPProtectionPolicy",
    "InterAgentPolicy",
    "ModelProtectionRule",
    "GovernancePolicy",
    "PolicyLifecycleError",
    "default_policy",
    "AuditRecord",
    "AuditLog",
    "RateLimiter",
    "SemanticClassifier",
    "GuardrailEngine",
    "PolicyManager",
    "BiasMonitor",
    "scan_pii",
    "eval_access",
]


class Role(str, Enum):
    ADMIN = "Admin"
    OPERATOR = "Operator"
    VIEWER = "Viewer"


class AccessLevel(str, Enum):
    DENY = "deny"
    READ_ONLY = "read_only"
    READ_WRITE = "read_write"
    FULL = "full"


class AlertSeverity(str, Enum):
    BLOCK = "Block"
    WARN = "Warn"
    LOG = "Log"


@dataclass(frozen=True)
class Alert:
    severity: AlertSeverity
    category: str
    description: str
    layer: str  # L1_regex | L2_semantic | governance | rate_limit | pii

    def to_dict(self) -> Dict[str, str]:
        return {
            "severity": self.severity.value,
            "category": self.category,
            "description": self.description,
            "layer": self.layer,
        }


@dataclass(frozen=True)
class GuardrailResult:
    passed: bool
    alerts: Tuple[Alert, ...] = ()

    def __post_init__(self) -> None:
        # structural invariant: passed exactly when nothing blocked
        blocked = any(a.severity is AlertSeverity.BLOCK for a in self.alerts)
        object.__setattr__(self, "passed", not blocked)

    def to_dict(self) -> Dict[str, Any]:
        return {"passed": self.passed, "alerts": [a.to_dict() for a in self.alerts]}


# ---------------------------------------------------------------------------
# Policy sub-modules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AccessRestriction:
    role: Role
    resource_type: str  # mcp_tool | model | agent
    resource_name: str  # exact name or "*"
    access_level: AccessLevel
    conditions: Dict[str, Any] = field(default_factory=dict)

    def matches(self, role: Role, resource_type: str, resource_name: str) -> bool:
        return (
            self.role is role
            and self.resource_type == resource_type
            and (self.resource_name == "*" or self.resource_name == resource_name)
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "role": self.role.value,
            "resource_type": self.resource_type,
            "resource_name": self.resource_name,
            "access_level": self.access_level.value,
            "conditions": dict(self.conditions),
        }


@dataclass(frozen=True)
class RateLimit:
    max_calls: int = 30
    window_seconds: int = 60

    def __post_init__(self) -> None:
        if self.max_calls <= 0 or self.window_seconds <= 0:
            raise ValueError("rate limits must be positive")


@dataclass(frozen=True)
class SecurityPolicy:
    """Nine independent defence toggles plus rate limiting and delegation
    depth. The last two flags are reserved (shipped disabled)."""

    block_prompt_injection: bool = True
    block_jailbreak: bool = True
    block_role_hijacking: bool = True
    block_system_prompt_extraction: bool = True
    block_model_fingerprinting: bool = True
    block_privilege_escalation: bool = True
    block_self_modification: bool = True
    reserved_defence_8: bool = False
    reserved_defence_9: bool = False
    rate_limit: RateLimit = field(default_factory=RateLimit)
    max_delegation_depth: int = 5

    def __post_init__(self) -> None:
        if self.max_delegation_depth <= 0:
            raise ValueError("max_delegation_depth must be positive")


PII_CATEGORIES = ("email", "phone", "ssn", "credit_card")


@dataclass(frozen=True)
class DataPrivacyPolicy:
    detect_pii_input: bool = False
    detect_pii_output: bool = False
    pii_categories: Tuple[str, ...] = PII_CATEGORIES
    pii_action: AlertSeverity = AlertSeverity.WARN
    logs_retention_days: int = 90
    audit_retention_days: int = 365
    external_transfer_whitelist: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if (self.detect_pii_input or self.detect_pii_output) and not self.pii_categories:
            raise ValueError("pii_categories must be non-empty when detection is enabled")
        unknown = set(self.pii_categories) - set(PII_CATEGORIES)
        if unknown:
            raise ValueError(f"unknown PII categories: {sorted(unknown)}")


@dataclass(frozen=True)
class ResponsibleAIPolicy:
    require_decision_explanation: bool = False
    log_all_decisions: bool = True
    disclose_ai_involvement: bool = True
    enable_bias_monitoring: bool = False
    bias_categories: Tuple[str, ...] = ("geographic", "temporal", "severity", "source_tool")
    bias_alert_threshold: float = 0.3
    min_auto_action_confidence: float = 0.85
    mandatory_review_flags: Dict[str, bool] = field(
        default_factory=lambda: {"critical_actions": True, "rule_generation": True,
                                 "rule_deployment": True}
    )

    def __post_init__(self) -> None:
        for name in ("bias_alert_threshold", "min_auto_action_confidence"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be within [0,1]")


@dataclass(frozen=True)
class IPProtectionPolicy:
    output_attribution: bool = True
    licence_compliance: bool = True
    provenance_tracking: bool = True
    watermarking: bool = False
    prohibited_use_cases: Tuple[str, ...] = (
        "offensive hacking", "malware creation", "surveillance",
    )


@dataclass(frozen=True)
class InterAgentPolicy:
    allow_delegation: bool = True
    max_depth: int = 5
    delegation_approval: bool = False
    blocked_pairs: Tuple[Tuple[str, str], ...] = ()
    scope_inheritance: bool = True
    log_communication: bool = True

    def __post_init__(self) -> None:
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")


@dataclass(frozen=True)
class ModelProtectionRule:
    rule_id: str
    name: str
    patterns: Tuple[str, ...]
    enforcement: AlertSeverity
    applies_to: Tuple[str, ...] = ("*",)

    def __post_init__(self) -> None:
        for source in self.patterns:
            re.compile(source)

    def compiled(self) -> List[re.Pattern]:
        return [re.compile(p) for p in self.patterns]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rule_id": self.rule_id,
            "name": self.name,
            "patterns": list(self.patterns),
            "enforcement": self.enforcement.value,
            "applies_to": list(self.applies_to),
        }


class PolicyLifecycleError(RuntimeError):
    """Illegal policy lifecycle transition."""


class PolicyStatus(str, Enum):
    DRAFT = "draft"
    ACTIVE = "active"
    ARCHIVED = "archived"


@dataclass(frozen=True)
class GovernancePolicy:
    """Versioned aggregate of the seven governance sub-policies."""

    policy_id: str = field(default_factory=lambda: f"pol-{uuid.uuid4().hex[:10]}")
    version: int = 1
    status: PolicyStatus = PolicyStatus.DRAFT
    access_restrictions: Tuple[AccessRestriction, ...] = ()
    security: SecurityPolicy = field(default_factory=SecurityPolicy)
    responsible_ai: ResponsibleAIPolicy = field(default_factory=ResponsibleAIPolicy)
    data_privacy: DataPrivacyPolicy = field(default_factory=DataPrivacyPolicy)
    ip_protection: IPProtectionPolicy = field(default_factory=IPProtectionPolicy)
    inter_agent: InterAgentPolicy = field(default_factory=InterAgentPolicy)
    model_protection_rules: Tuple[ModelProtectionRule, ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "policy_id": self.policy_id,
            "version": self.version,
            "status": self.status.value,
            "access_restrictions": [r.to_dict() for r in self.access_restrictions],
            "security": {
                **{k: getattr(self.security, k) for k in (
                    "block_prompt_injection", "block_jailbreak", "block_role_hijacking",
                    "block_system_prompt_extraction", "block_model_fingerprinting",
                    "block_privilege_escalation", "block_self_modification",
                    "reserved_defence_8", "reserved_defence_9", "max_delegation_depth",
                )},
                "rate_limit": {"max_calls": self.security.rate_limit.max_calls,
                               "window_seconds": self.security.rate_limit.window_seconds},
            },
            "responsible_ai": {
                "require_decision_explanation": self.responsible_ai.require_decision_explanation,
                "log_all_decisions": self.responsible_ai.log_all_decisions,
                "disclose_ai_involvement": self.responsible_ai.disclose_ai_involvement,
                "enable_bias_monitoring": self.responsible_ai.enable_bias_monitoring,
                "bias_categories": list(self.responsible_ai.bias_categories),
                "bias_alert_threshold": self.responsible_ai.bias_alert_threshold,
                "min_auto_action_confidence": self.responsible_ai.min_auto_action_confidence,
                "mandatory_review_flags": dict(self.responsible_ai.mandatory_review_flags),
            },
            "data_privacy": {
                "detect_pii_input": self.data_privacy.detect_pii_input,
                "detect_pii_output": self.data_privacy.detect_pii_output,
                "pii_categories": list(self.data_privacy.pii_categories),
                "pii_action": self.data_privacy.pii_action.value,
                "logs_retention_days": self.data_privacy.logs_retention_days,
                "audit_retention_days": self.data_privacy.audit_retention_days,
                "external_transfer_whitelist": list(self.data_privacy.external_transfer_whitelist),
            },
            "ip_protection": {
                "output_attribution": self.ip_protection.output_attribution,
                "licence_compliance": self.ip_protection.licence_compliance,
                "provenance_tracking": self.ip_protection.provenance_tracking,
                "watermarking": self.ip_protection.watermarking,
                "prohibited_use_cases": list(self.ip_protection.prohibited_use_cases),
            },
            "inter_agent": {
                "allow_delegation": self.inter_agent.allow_delegation,
                "max_depth": self.inter_agent.max_depth,
                "delegation_approval": self.inter_agent.delegation_approval,
                "blocked_pairs": [list(p) for p in self.inter_agent.blocked_pairs],
                "scope_inheritance": self.inter_agent.scope_inheritance,
                "log_communication": self.inter_agent.log_communication,
            },
            "model_protection_rules": [r.to_dict() for r in self.model_protection_rules],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GovernancePolicy":
        sec = data.get("security", {})
        rate = sec.get("rate_limit", {})
        dp = data.get("data_privacy", {})
        rai = data.get("responsible_ai", {})
        ip = data.get("ip_protection", {})
        ia = data.get("inter_agent", {})
        return cls(
            policy_id=data.get("policy_id") or f"pol-{uuid.uuid4().hex[:10]}",
            version=data.get("version", 1),
            status=PolicyStatus(data.get("status", "draft")),
            access_restrictions=tuple(
                AccessRestriction(
                    role=Role(r["role"]),
                    resource_type=r["resource_type"],
                    resource_name=r["resource_name"],
                    access_level=AccessLevel(r["access_level"]),
                    conditions=dict(r.get("conditions", {})),
                )
                for r in data.get("access_restrictions", ())
            ),
            security=SecurityPolicy(
                **{k: sec[k] for k in (
                    "block_prompt_injection", "block_jailbreak", "block_role_hijacking",
                    "block_system_prompt_extraction", "block_model_fingerprinting",
                    "block_privilege_escalation", "block_self_modification",
                    "reserved_defence_8", "reserved_defence_9", "max_delegation_depth",
                ) if k in sec},
                rate_limit=RateLimit(
                    max_calls=rate.get("max_calls", 30),
                    window_seconds=rate.get("window_seconds", 60),
                ),
            ),
            responsible_ai=ResponsibleAIPolicy(
                require_decision_explanation=rai.get("require_decision_explanation", False),
                log_all_decisions=rai.get("log_all_decisions", True),
                disclose_ai_involvement=rai.get("disclose_ai_involvement", True),
                enable_bias_monitoring=rai.get("enable_bias_monitoring", False),
                bias_categories=tuple(rai.get("bias_categories",
                                              ("geographic", "temporal", "severity", "source_tool"))),
                bias_alert_threshold=rai.get("bias_alert_threshold", 0.3),
                min_auto_action_confidence=rai.get("min_auto_action_confidence", 0.85),
                mandatory_review_flags=dict(rai.get("mandatory_review_flags",
                                                    {"critical_actions": True,
                                                     "rule_generation": True,
                                                     "rule_deployment": True})),
            ),
            data_privacy=DataPrivacyPolicy(
                detect_pii_input=dp.get("detect_pii_input", False),
                detect_pii_output=dp.get("detect_pii_output", False),
                pii_categories=tuple(dp.get("pii_categories", PII_CATEGORIES)),
                pii_action=AlertSeverity(dp.get("pii_action", "Warn")),
                logs_retention_days=dp.get("logs_retention_days", 90),
                audit_retention_days=dp.get("audit_retention_days", 365),
                external_transfer_whitelist=tuple(dp.get("external_transfer_whitelist", ())),
            ),
            ip_protection=IPProtectionPolicy(
                output_attribution=ip.get("output_attribution", True),
                licence_compliance=ip.get("licence_compliance", True),
                provenance_tracking=ip.get("provenance_tracking", True),
                watermarking=ip.get("watermarking", False),
                prohibited_use_cases=tuple(ip.get("prohibited_use_cases",
                                                  ("offensive hacking", "malware creation",
                                                   "surveillance"))),
            ),
            inter_agent=InterAgentPolicy(
                allow_delegation=ia.get("allow_delegation", True),
                max_depth=ia.get("max_depth", 5),
                delegation_approval=ia.get("delegation_approval", False),
                blocked_pairs=tuple(tuple(p) for p in ia.get("blocked_pairs", ())),
                scope_inheritance=ia.get("scope_inheritance", True),
                log_communication=ia.get("log_communication", True),
            ),
            model_protection_rules=tuple(
                ModelProtectionRule(
                    rule_id=r["rule_id"],
                    name=r["name"],
                    patterns=tuple(r["patterns"]),
                    enforcement=AlertSeverity(r["enforcement"]),
                    applies_to=tuple(r.get("applies_to", ("*",))),
                )
                for r in data.get("model_protection_rules", ())
            ),
        )


DEFAULT_MODEL_PROTECTION_RULES: Tuple[ModelProtectionRule, ...] = (
    ModelProtectionRule(
        rule_id="mp-system-prompt",
        name="System prompt extraction",
        patterns=(r"(?i)\b(reveal|repeat|print|show)\b.{0,40}\b(system|initial)\s+(prompt|instructions)\b",),
        enforcement=AlertSeverity.BLOCK,
    ),
    ModelProtectionRule(
        rule_id="mp-architecture",
        name="Architecture probing",
        patterns=(r"(?i)\bhow\s+many\s+(layers|parameters)\b|\bwhat\s+(model|architecture)\s+(are|is)\s+you\b",),
        enforcement=AlertSeverity.WARN,
    ),
    ModelProtectionRule(
        rule_id="mp-training-data",
        name="Training data extraction",
        patterns=(r"(?i)\b(reproduce|output|show|dump)\b.{0,40}\btraining\s+(data|examples|set)\b",),
        enforcement=AlertSeverity.BLOCK,
    ),
    ModelProtectionRule(
        rule_id="mp-behavior",
        name="Behaviour manipulation",
        patterns=(r"(?i)\bfrom\s+now\s+on,?\s+(always|never|you)\b",),
        enforcement=AlertSeverity.BLOCK,
    ),
    ModelProtectionRule(
        rule_id="mp-capability",
        name="Capability boundary probing",
        patterns=(r"(?i)\b(what|which)\s+(tools|resources|apis|files)\b.{0,40}\b(access|available|reach)\b",),
        enforcement=AlertSeverity.LOG,
    ),
)

#: Write-capable tools denied to Viewers and rate-conditioned for Operators.
WRITE_TOOLS = ("correlate_events", "generate_rule", "start_agent_pipeline")
READ_TOOLS = (
    "detect_anomaly", "analyze_traffic", "analyze_log", "batch_analyze_logs",
    "query_ioc", "validate_rule", "get_workflow_status",
)


def default_policy(policy_id: str = "default") -> GovernancePolicy:
    """Deny-by-default policy with the documented role table.

    Admin gets full access to everything; Operator gets read-write on
    analysis tools and conditioned write access to generation/pipeline
    tools; Viewer gets read-only analysis access and no write-capable
    tools at all (no rule means deny).
    """
    restrictions: List[AccessRestriction] = [
        AccessRestriction(Role.ADMIN, "mcp_tool", "*", AccessLevel.FULL),
        AccessRestriction(Role.ADMIN, "model", "*", AccessLevel.FULL),
        AccessRestriction(Role.ADMIN, "agent", "*", AccessLevel.FULL),
    ]
    for tool in READ_TOOLS:
        restrictions.append(
            AccessRestriction(Role.OPERATOR, "mcp_tool", tool, AccessLevel.READ_WRITE)
        )
        restrictions.append(
            AccessRestriction(Role.VIEWER, "mcp_tool", tool, AccessLevel.READ_ONLY)
        )
    for tool in WRITE_TOOLS:
        restrictions.append(
            AccessRestriction(
                Role.OPERATOR, "mcp_tool", tool, AccessLevel.READ_WRITE,
                conditions={"max_calls_per_hour": 120},
            )
        )
    return GovernancePolicy(
        policy_id=policy_id,
        status=PolicyStatus.ACTIVE,
        access_restrictions=tuple(restrictions),
        model_protection_rules=DEFAULT_MODEL_PROTECTION_RULES,
    )


# ---------------------------------------------------------------------------
# Access evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AccessVerdict:
    allowed: bool
    level: AccessLevel
    reason: str


def eval_access(role: Role, resource_type: str, resource_name: str,
                policy: GovernancePolicy) -> AccessVerdict:
    """First matching restriction wins; exact names beat wildcards; no
    matching rule means deny."""
    matches = [
        r for r in policy.access_restrictions
        if r.matches(role, resource_type, resource_name)
    ]
    if not matches:
        return AccessVerdict(False, AccessLevel.DENY, "no matching rule")
    matches.sort(key=lambda r: r.resource_name == "*")  # exact first, stable
    rule = matches[0]
    if rule.access_level is AccessLevel.DENY:
        return AccessVerdict(False, AccessLevel.DENY,
                             f"denied by rule for {rule.resource_name}")
    return AccessVerdict(True, rule.access_level,
                         f"allowed ({rule.access_level.value}) by rule for {rule.resource_name}")


# ---------------------------------------------------------------------------
# PII scanning
# ---------------------------------------------------------------------------

_IP_SPAN_RE = re.compile(r"\b(?:\d{1,3}\.){3}\d{1,3}\b")
_PII_PATTERNS = {
    "email": re.compile(r"\b[\w.+-]+@[\w-]+\.[\w.-]+\b"),
    # NANP-like and E.164-like shapes only, to bound false positives
    "phone": re.compile(r"(?<!\d)(?:\+?1[-. ]?)?\(?\d{3}\)?[-. ]\d{3}[-. ]\d{4}(?!\d)|(?<![\d.])\+\d{7,15}\b"),
    "ssn": re.compile(r"\b\d{3}-\d{2}-\d{4}\b"),
    "credit_card": re.compile(r"\b(?:\d[ -]?){13,19}\b"),
}


def _luhn_ok(digits: str) -> bool:
    total = 0
    for idx, ch in enumerate(reversed(digits)):
        d = int(ch)
        if idx % 2 == 1:
            d *= 2
            if d > 9:
                d -= 9
        total += d
    return total % 10 == 0


def scan_pii(text: str, categories: Sequence[str]) -> List[Dict[str, str]]:
    """Regex PII detection per enabled category.

    IP addresses are never reported (they are routine in security
    telemetry); credit-card candidates must pass a Luhn check.
    """
    ip_spans = [m.span() for m in _IP_SPAN_RE.finditer(text)]

    def overlaps_ip(span: Tuple[int, int]) -> bool:
        return any(not (span[1] <= s or span[0] >= e) for s, e in ip_spans)

    findings: List[Dict[str, str]] = []
    for category in categories:
        pattern = _PII_PATTERNS.get(category)
        if pattern is None:
            continue
        for match in pattern.finditer(text):
            if overlaps_ip(match.span()):
                continue
            value = match.group(0)
            if category == "credit_card":
                digits = re.sub(r"\D", "", value)
                if not (13 <= len(digits) <= 19 and _luhn_ok(digits)):
                    continue
            masked = value[:4] + "***" if len(value) > 4 else "***"
            findings.append({"category": category, "value": masked})
    return findings


# ---------------------------------------------------------------------------
# Rate limiting
# ---------------------------------------------------------------------------

class RateLimiter:
    """Per-key sliding-window limiter (true sliding window, no buckets)."""

    def __init__(self) -> None:
        self._windows: Dict[str, Deque[float]] = {}
        self._lock = threading.Lock()

    def check(self, key: str, max_calls: int, window_seconds: float,
              now: Optional[float] = None) -> bool:
        """Admit and record the call iff fewer than max_calls fall inside
        (now - window, now]."""
        if max_calls <= 0 or window_seconds <= 0:
            raise ValueError("rate limits must be positive")
        timestamp = time.monotonic() if now is None else now
        with self._lock:
            window = self._windows.setdefault(key, deque())
            cutoff = timestamp - window_seconds
            while window and window[0] <= cutoff:
                window.popleft()
            if len(window) >= max_calls:
                return False
            window.append(timestamp)
            return True

    def reset(self, key: Optional[str] = None) -> None:
        with self._lock:
            if key is None:
                self._windows.clear()
            else:
                self._windows.pop(key, None)


# ---------------------------------------------------------------------------
# Audit log
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AuditRecord:
    tool_name: str
    caller: str
    status: str  # ok | blocked | error
    duration_ms: float
    detail: str
    blocked: int
    timestamp: str
    id: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "tool_name": self.tool_name,
            "caller": self.caller,
            "status": self.status,
            "duration_ms": self.duration_ms,
            "detail": self.detail,
            "blocked": self.blocked,
            "timestamp": self.timestamp,
        }


_AUDIT_SCHEMA = """
CREATE TABLE IF NOT EXISTS audit_log (
    id          INTEGER PRIMARY KEY AUTOINCREMENT,
    tool_name   TEXT NOT NULL,
    caller      TEXT NOT NULL,
    status      TEXT NOT NULL,
    duration_ms REAL NOT NULL,
    detail      TEXT NOT NULL,
    blocked     INTEGER NOT NULL,
    timestamp   TEXT NOT NULL
);
"""


class AuditLog:
    """Append-only audit store with the fixed eight-column schema."""

    def __init__(self, path: "str | Path | None" = None):
        self.path = str(path) if path is not None else ":memory:"
        if path is not None:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
        self._conn = sqlite3.connect(self.path, check_same_thread=False)
        self._lock = threading.Lock()
        with self._lock, self._conn:
            self._conn.executescript(_AUDIT_SCHEMA)

    def write(self, record: AuditRecord) -> AuditRecord:
        with self._lock, self._conn:
            cursor = self._conn.execute(
                "INSERT INTO audit_log (tool_name, caller, status, duration_ms, detail, blocked, timestamp) "
                "VALUES (?,?,?,?,?,?,?)",
                (record.tool_name, record.caller, record.status, record.duration_ms,
                 record.detail, record.blocked, record.timestamp),
            )
            return replace(record, id=cursor.lastrowid)

    def query(
        self,
        tool_name: Optional[str] = None,
        caller: Optional[str] = None,
        status: Optional[str] = None,
        blocked: Optional[int] = None,
        since: Optional[str] = None,
        until: Optional[str] = None,
        limit: int = 1000,
    ) -> List[AuditRecord]:
        clauses, params = [], []
        for column, value in (("tool_name", tool_name), ("caller", caller),
                              ("status", status), ("blocked", blocked)):
            if value is not None:
                clauses.append(f"{column} = ?")
                params.append(value)
        if since is not None:
            clauses.append("timestamp >= ?")
            params.append(since)
        if until is not None:
            clauses.append("timestamp <= ?")
            params.append(until)
        where = f"WHERE {' AND '.join(clauses)}" if clauses else ""
        with self._lock:
            rows = self._conn.execute(
                f"SELECT id, tool_name, caller, status, duration_ms, detail, blocked, timestamp "
                f"FROM audit_log {where} ORDER BY id LIMIT ?",
                (*params, limit),
            ).fetchall()
        return [
            AuditRecord(
                id=r[0], tool_name=r[1], caller=r[2], status=r[3],
                duration_ms=r[4], detail=r[5], blocked=r[6], timestamp=r[7],
            )
            for r in rows
        ]

    def count(self) -> int:
        with self._lock:
            return self._conn.execute("SELECT COUNT(*) FROM audit_log").fetchone()[0]

    def export_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer)
        writer.writerow(["id", "tool_name", "caller", "status", "duration_ms",
                         "detail", "blocked", "timestamp"])
        for record in self.query(limit=1_000_000):
            writer.writerow([record.id, record.tool_name, record.caller, record.status,
                             record.duration_ms, record.detail, record.blocked,
                             record.timestamp])
        return buffer.getvalue()

    def export_json(self) -> str:
        return json.dumps([r.to_dict() for r in self.query(limit=1_000_000)], indent=2)

    def stats(self) -> Dict[str, Any]:
        with self._lock:
            by_status = dict(self._conn.execute(
                "SELECT status, COUNT(*) FROM audit_log GROUP BY status").fetchall())
            by_tool = dict(self._conn.execute(
                "SELECT tool_name, COUNT(*) FROM audit_log GROUP BY tool_name").fetchall())
            total = self._conn.execute("SELECT COUNT(*) FROM audit_log").fetchone()[0]
            blocked = self._conn.execute(
                "SELECT COUNT(*) FROM audit_log WHERE blocked=1").fetchone()[0]
        return {"total": total, "blocked": blocked, "by_status": by_status,
                "by_tool": by_tool}


# ---------------------------------------------------------------------------
# Guardrail engine
# ---------------------------------------------------------------------------

class SemanticClassifier(Protocol):
    """Layer-2 contract: injection probability in [0, 1] for an input."""

    def injection_probability(self, text: str) -> float: ...


SEMANTIC_BLOCK_THRESHOLD = 0.99
SEMANTIC_WARN_THRESHOLD = 0.50

_B64_SUSPICIOUS_RE = re.compile(
    r"(?i)(eval|exec|import os|subprocess|/bin/sh|bash -i|powershell)"
)


@dataclass(frozen=True)
class _CompiledPattern:
    id: str
    category: str
    severity: AlertSeverity
    regex: re.Pattern
    description: str
    postcheck: Optional[str] = None
    min_count: int = 1


def _load_patterns() -> Dict[str, List[_CompiledPattern]]:
    text = resources.files("socengine.data").joinpath("guardrail_patterns.json").read_text()
    raw = json.loads(text)
    compiled: Dict[str, List[_CompiledPattern]] = {}
    for direction in ("input", "output"):
        compiled[direction] = [
            _CompiledPattern(
                id=p["id"],
                category=p["category"],
                severity=AlertSeverity(p["severity"].capitalize()),
                regex=re.compile(p["pattern"]),
                description=p["description"],
                postcheck=p.get("postcheck"),
                min_count=p.get("min_count", 1),
            )
            for p in raw[direction]
        ]
    return compiled


def _pattern_fires(pattern: _CompiledPattern, text: str) -> bool:
    matches = pattern.regex.findall(text)
    if len(matches) < pattern.min_count:
        return False
    if pattern.postcheck == "base64_exec":
        for match in pattern.regex.finditer(text):
            blob = match.group(0)
            try:
                decoded = base64.b64decode(blob + "=" * (-len(blob) % 4), validate=False)
                decoded_text = decoded.decode("utf-8", errors="ignore")
            except Exception:
                continue
            if _B64_SUSPICIOUS_RE.search(decoded_text):
                return True
        return False
    return True


class GuardrailEngine:
    """Policy-governed two-layer guardrail with audit and rate limiting.

    One engine instance is shared by all request handlers; the limiter and
    audit log are internally synchronized. When the engine is embedded in
    the audited tool bridge, the bridge owns the single audit row per call
    and passes ``audit=False`` here to avoid double rows.
    """

    def __init__(self, audit_log: Optional[AuditLog] = None,
                 limiter: Optional[RateLimiter] = None,
                 clock: Optional[Callable[[], float]] = None):
        self.patterns = _load_patterns()
        self.audit_log = audit_log
        self.limiter = limiter or RateLimiter()
        self._clock = clock or time.monotonic
        self._stats_lock = threading.Lock()
        self.alert_counts: Dict[str, int] = {}

    def _record_alerts(self, alerts: Sequence[Alert]) -> None:
        with self._stats_lock:
            for alert in alerts:
                key = f"{alert.severity.value}:{alert.category}"
                self.alert_counts[key] = self.alert_counts.get(key, 0) + 1

    def check_rate(self, caller: str, max_calls: int, window_seconds: float,
                   now: Optional[float] = None, tenant: str = "") -> bool:
        return self.limiter.check(f"{tenant}|{caller}", max_calls, window_seconds, now)

    def evaluate(
        self,
        text: str,
        direction: str,
        role: Role,
        tool: str,
        policy: GovernancePolicy,
        semantic: Optional[SemanticClassifier] = None,
        caller: str = "anonymous",
        tenant: str = "",
        now: Optional[float] = None,
        audit: bool = True,
        check_access: bool = True,
    ) -> GuardrailResult:
        """Ordered guardrail evaluation.

        Step 1 rate limit and step 2 RBAC (input only) block and return
        early with a single alert; steps 3-5 accumulate pattern, model
        protection, and PII alerts. Layer 2 runs only for inputs that
        produced no layer-1 alert. ``check_access=False`` skips step 2 for
        pipeline-internal sanitization checks whose access was already
        established at the tool invocation layer.
        """
        if direction not in ("in", "out"):
            raise ValueError("direction must be 'in' or 'out'")
        alerts: List[Alert] = []

        rate = policy.security.rate_limit
        if not self.check_rate(caller, rate.max_calls, rate.window_seconds, now, tenant):
            alerts.append(
                Alert(AlertSeverity.BLOCK, "rate_limit",
                      f"rate limit exceeded ({rate.max_calls}/{rate.window_seconds}s)",
                      "rate_limit")
            )
            return self._finish(alerts, role, tool, direction, caller, audit)

        if direction == "in" and check_access:
            verdict = eval_access(role, "mcp_tool", tool, policy)
            if not verdict.allowed:
                alerts.append(
                    Alert(AlertSeverity.BLOCK, "access_denied", verdict.reason, "governance")
                )
                return self._finish(alerts, role, tool, direction, caller, audit)

        pattern_set = self.patterns["input" if direction == "in" else "output"]
        for pattern in pattern_set:
            if _pattern_fires(pattern, text):
                alerts.append(
                    Alert(pattern.severity, pattern.category, pattern.description, "L1_regex")
                )

        for rule in policy.model_protection_rules:
            if "*" not in rule.applies_to and tool not in rule.applies_to:
                continue
            if any(regex.search(text) for regex in rule.compiled()):
                alerts.append(
                    Alert(rule.enforcement, "model_protection", rule.name, "governance")
                )

        privacy = policy.data_privacy
        pii_enabled = privacy.detect_pii_input if direction == "in" else privacy.detect_pii_output
        if pii_enabled:
            findings = scan_pii(text, privacy.pii_categories)
            if findings:
                summary = ", ".join(f"{f['category']}={f['value']}" for f in findings)
                alerts.append(
                    Alert(privacy.pii_action, "pii", f"PII detected: {summary}", "pii")
                )

        if direction == "in" and not alerts and semantic is not None:
            try:
                probability = semantic.injection_probability(text)
            except Exception as exc:
                alerts.append(
                    Alert(AlertSeverity.LOG, "semantic_unavailable",
                          f"semantic classifier unavailable: {exc}", "L2_semantic")
                )
            else:
                if probability >= SEMANTIC_BLOCK_THRESHOLD:
                    alerts.append(
                        Alert(AlertSeverity.BLOCK, "semantic_injection",
                              f"semantic classifier detected injection (p={probability:.3f})",
                              "L2_semantic")
                    )
                elif probability >= SEMANTIC_WARN_THRESHOLD:
                    alerts.append(
                        Alert(AlertSeverity.WARN, "semantic_injection",
                              f"possible injection (p={probability:.3f})", "L2_semantic")
                    )

        return self._finish(alerts, role, tool, direction, caller, audit)

    def _finish(self, alerts: List[Alert], role: Role, tool: str, direction: str,
                caller: str, audit: bool) -> GuardrailResult:
        result = GuardrailResult(passed=True, alerts=tuple(alerts))
        self._record_alerts(alerts)
        if audit and self.audit_log is not None:
            self.audit_log.write(
                AuditRecord(
                    tool_name=tool,
                    caller=caller,
                    status="ok" if result.passed else "blocked",
                    duration_ms=0.0,
                    detail=f"guardrail[{direction}] role={role.value} alerts={len(alerts)}",
                    blocked=0 if result.passed else 1,
                    timestamp=format_timestamp(utc_now()),
                )
            )
        return result

    def stats(self) -> Dict[str, Any]:
        with self._stats_lock:
            return {"alert_counts": dict(self.alert_counts)}


# ---------------------------------------------------------------------------
# Policy lifecycle
# ---------------------------------------------------------------------------

class PolicyManager:
    """Versioned policy lifecycle over one tenant store.

    At most one policy is active per tenant; activating a new one
    atomically archives the previous active. All versions are retained.
    """

    def __init__(self, store: TenantStore):
        self._store = store
        self._lock = threading.Lock()

    def save_draft(self, policy: GovernancePolicy) -> GovernancePolicy:
        with self._lock:
            versions = [p["version"] for p in self._store.policy_versions()
                        if p["policy_id"] == policy.policy_id]
            version = max(versions, default=0) + 1
            draft = replace(policy, version=version, status=PolicyStatus.DRAFT)
            self._store.put_policy(draft.policy_id, version, "draft", draft.to_dict())
            return draft

    def activate(self, policy_id: str) -> GovernancePolicy:
        with self._lock:
            entry = self._store.find_policy(policy_id)
            if entry is None:
                raise PolicyLifecycleError(f"unknown policy: {policy_id}")
            if entry["status"] == PolicyStatus.ACTIVE.value:
                return GovernancePolicy.from_dict(entry["body"])  # idempotent
            if entry["status"] == PolicyStatus.ARCHIVED.value:
                raise PolicyLifecycleError(
                    f"policy {policy_id} is archived; save a new draft to reactivate"
                )
            current = self._store.active_policy()
            if current is not None:
                archived_body = dict(current["body"], status="archived")
                self._store.put_policy(current["policy_id"], current["version"],
                                       "archived", archived_body)
            body = dict(entry["body"], status="active")
            self._store.put_policy(policy_id, entry["version"], "active", body)
            return GovernancePolicy.from_dict(body)

    def archive(self, policy_id: str) -> None:
        with self._lock:
            entry = self._store.find_policy(policy_id)
            if entry is None:
                raise PolicyLifecycleError(f"unknown policy: {policy_id}")
            body = dict(entry["body"], status="archived")
            self._store.put_policy(policy_id, entry["version"], "archived", body)

    def list_versions(self) -> List[Dict[str, Any]]:
        return self._store.policy_versions()

    def active(self) -> Optional[GovernancePolicy]:
        entry = self._store.active_policy()
        return GovernancePolicy.from_dict(entry["body"]) if entry else None


class BiasMonitor:
    """Category counters with a share-of-total breach alert.

    Intentional scope limit: this aggregates counters and flags threshold
    breaches; it computes no statistical bias metrics.
    """

    def __init__(self, categories: Sequence[str], threshold: float = 0.3,
                 min_samples: int = 10):
        self.threshold = threshold
        self.min_samples = min_samples
        self._counts: Dict[str, Dict[str, int]] = {c: {} for c in categories}
        self._lock = threading.Lock()

    def record(self, category: str, value: str) -> None:
        with self._lock:
            bucket = self._counts.setdefault(category, {})
            bucket[value] = bucket.get(value, 0) + 1

    def breaches(self) -> List[Dict[str, Any]]:
        out = []
        with self._lock:
            for category, bucket in self._counts.items():
                total = sum(bucket.values())
                if total < self.min_samples:
                    continue
                for value, count in sorted(bucket.items()):
                    share = count / total
                    if share > self.threshold:
                        out.append({"category": category, "value": value,
                                    "share": share, "count": count})
        return out

    def snapshot(self) -> Dict[str, Dict[str, int]]:
        with self._lock:
            return {c: dict(b) for c, b in self._counts.items()}
