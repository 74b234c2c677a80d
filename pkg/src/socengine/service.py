"""Audited tool registry, multi-tenant service core, and HTTP endpoints.

Every capability is exposed as one of ten named tools plus four readable
resources, all behind a single bridge: serialize the arguments, run the
guardrail on the input, dispatch, time the execution, run the guardrail
on textual output, and write exactly one audit row. Tenants are isolated
in separate store files; a user scoped to tenants A and B can never read
or write tenant C. The HTTP layer adds a JSON-RPC 2.0 endpoint, REST
convenience routes for the review UI, and an SSE stream for workflow
phase changes. The library API doubles as the in-process client: embed
``SocService`` directly for zero-overhead local calls.
"""

from __future__ import annotations

import asyncio
import hashlib
import json
import logging
import queue as simple_queue
import secrets
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .correlation import CorrelationConfig, build_timeline, correlate_batch, pivot, summarize
from .export import ScenarioStore, compare, export_stix, render_graph
from .governance import (
    AlertSeverity,
    AuditLog,
    AuditRecord,
    GovernancePolicy,
    GuardrailEngine,
    PolicyManager,
    Role,
    default_policy,
    eval_access,
)
from .providers import (
    StubClassifier,
    StubDetector,
    StubEnrichmentProvider,
    StubHypothesisProvider,
    StubLogAnalyzer,
    StubRuleGenerator,
)
from .reconstruct import reconstruct
from .rules import (
    DetectionRule,
    ExtractionError,
    RuleFormat,
    SidCounter,
    parse_ids_rule,
    parse_yara_rule,
    postprocess,
    validate,
)
from .scanner import parse_flow_csv
from .scenario import ValidationStatus
from .store import NotFoundError, TenantStore
from .uicr import (
    UICR,
    apply_confidence_gates,
    format_timestamp,
    normalize_threat_label,
    utc_now,
)
from .workflow import WorkflowEngine, WorkflowState, WorkflowStateError, parse_analysis_output

from fastapi import Depends, FastAPI, Header, HTTPException, Query, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, StreamingResponse

logger = logging.getLogger(__name__)

__all__ = [
    "ToolSpec",
    "TOOL_REGISTRY",
    "RESOURCE_URIS",
    "TenantConfig",
    "UserProfile",
    "AccessError",
    "AuthError",
    "ToolError",
    "SocService",
    "create_app",
]


class AccessError(PermissionError):
    """Caller is outside the tenant scope or denied by policy."""


class AuthError(PermissionError):
    """Bad credentials or unknown token."""


class ToolError(RuntimeError):
    """Tool-level execution failure."""


@dataclass(frozen=True)
class ToolSpec:
    name: str
    category: str
    description: str
    read_only: bool
    input_schema: Dict[str, Any]


TOOL_REGISTRY: Tuple[ToolSpec, ...] = (
    ToolSpec("detect_anomaly", "Detection",
             "Run anomaly and threat classification on packet features", True,
             {"type": "object", "properties": {"features": {"type": "object"}},
              "required": ["features"]}),
    ToolSpec("analyze_traffic", "Detection",
             "Analyse captured traffic flows from a PCAP-summary file", True,
             {"type": "object", "properties": {"csv": {"type": "string"},
                                               "path": {"type": "string"}}}),
    ToolSpec("analyze_log", "Log Analysis",
             "Deep-dive analysis of one SIEM log entry", True,
             {"type": "object", "properties": {"entry": {"type": "object"},
                                               "detail_level": {"type": "string"}},
              "required": ["entry"]}),
    ToolSpec("batch_analyze_logs", "Log Analysis",
             "Analyse multiple log entries in one call", True,
             {"type": "object", "properties": {"entries": {"type": "array"}},
              "required": ["entries"]}),
    ToolSpec("query_ioc", "Threat Intel",
             "Enrich an IoC (ip/domain/hash) via the configured provider", True,
             {"type": "object", "properties": {"ioc_type": {"type": "string"},
                                               "value": {"type": "string"}},
              "required": ["ioc_type", "value"]}),
    ToolSpec("correlate_events", "Threat Intel",
             "Correlate raw partial records into grouped incidents", False,
             {"type": "object", "properties": {"records": {"type": "array"}},
              "required": ["records"]}),
    ToolSpec("generate_rule", "Rules",
             "Generate a detection rule from a threat context", False,
             {"type": "object", "properties": {"context": {"type": "string"},
                                               "format": {"type": "string"}},
              "required": ["context"]}),
    ToolSpec("validate_rule", "Rules",
             "Statically validate a detection rule's syntax", True,
             {"type": "object", "properties": {"text": {"type": "string"},
                                               "format": {"type": "string"}},
              "required": ["text", "format"]}),
    ToolSpec("start_agent_pipeline", "Pipeline",
             "Launch the SOC agentic pipeline on packet features", False,
             {"type": "object", "properties": {"features": {"type": "object"},
                                               "logs": {"type": "array"}},
              "required": ["features"]}),
    ToolSpec("get_workflow_status", "Pipeline",
             "Query a running or completed workflow", True,
             {"type": "object", "properties": {"workflow_id": {"type": "string"}},
              "required": ["workflow_id"]}),
)

RESOURCE_URIS: Tuple[str, ...] = (
    "soc://models",
    "soc://rules",
    "soc://incidents",
    "soc://guardrail-stats",
)

_TOOLS_BY_NAME = {t.name: t for t in TOOL_REGISTRY}


@dataclass(frozen=True)
class TenantConfig:
    tenant_id: str
    display_name: str
    status_badge: str = "active"
    color_accent: str = "#1f77b4"
    data_source_path: str = ""
    tags: Tuple[str, ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "tenant_id": self.tenant_id,
            "display_name": self.display_name,
            "status_badge": self.status_badge,
            "color_accent": self.color_accent,
            "data_source_path": self.data_source_path,
            "tags": list(self.tags),
        }


@dataclass(frozen=True)
class UserProfile:
    username: str
    role: Role
    accessible_tenants: frozenset  # tenant ids, or {"*"}
    token: str = ""

    def can_access(self, tenant_id: str) -> bool:
        return "*" in self.accessible_tenants or tenant_id in self.accessible_tenants

    def to_dict(self) -> Dict[str, Any]:
        return {
            "username": self.username,
            "role": self.role.value,
            "accessible_tenants": sorted(self.accessible_tenants),
            "token": self.token,
        }


def _hash_password(password: str, salt: str) -> str:
    return hashlib.sha256(f"{salt}:{password}".encode()).hexdigest()


class SocService:
    """Multi-tenant service core; the HTTP layer is a thin shell over it.

    Writes are serialized per tenant store; the guardrail limiter and the
    audit logs are internally synchronized; policy activation is atomic
    with respect to concurrent evaluations because every evaluation takes
    a policy snapshot.
    """

    def __init__(
        self,
        store_root: "str | Path | None" = None,
        dev_mode: bool = True,
        detector=None,
        classifier=None,
        log_analyzer=None,
        rule_generator=None,
        enrichment=None,
        hypothesis_provider=None,
        semantic_classifier=None,
    ):
        self.store_root = Path(store_root) if store_root else None
        self.dev_mode = dev_mode
        self.detector = detector or StubDetector()
        self.classifier = classifier or StubClassifier()
        self.log_analyzer = log_analyzer or StubLogAnalyzer()
        self.rule_generator = rule_generator or StubRuleGenerator()
        self.enrichment = enrichment or StubEnrichmentProvider()
        self.hypothesis_provider = hypothesis_provider or StubHypothesisProvider()
        self.semantic_classifier = semantic_classifier

        self.service_audit = AuditLog(
            self.store_root / "service-audit.db" if self.store_root else None
        )
        self.guardrail = GuardrailEngine()
        self.sid_counter = SidCounter(
            self.store_root / "sid-counter.json" if self.store_root else None
        )

        self._tenants: Dict[str, TenantConfig] = {}
        self._stores: Dict[str, TenantStore] = {}
        self._audits: Dict[str, AuditLog] = {}
        self._policies: Dict[str, PolicyManager] = {}
        self._users: Dict[str, Dict[str, Any]] = {}
        self._sessions: Dict[str, UserProfile] = {}
        self._lock = threading.RLock()
        self._subscribers: List[Any] = []

        self.add_tenant(TenantConfig(tenant_id="default", display_name="Default tenant"))

    # -- tenants --------------------------------------------------------

    def add_tenant(self, config: TenantConfig) -> TenantConfig:
        with self._lock:
            if config.tenant_id in self._tenants:
                return self._tenants[config.tenant_id]
            if self.store_root is not None:
                base = self.store_root / config.tenant_id
                store_path: Optional[Path] = base / "store.db"
                audit_path: Optional[Path] = base / "audit.db"
                config = TenantConfig(
                    **{**config.to_dict(), "tags": tuple(config.tags),
                       "data_source_path": str(store_path)}
                )
            else:
                store_path = audit_path = None
            self._tenants[config.tenant_id] = config
            self._stores[config.tenant_id] = TenantStore(store_path)
            self._audits[config.tenant_id] = AuditLog(audit_path)
            self._policies[config.tenant_id] = PolicyManager(self._stores[config.tenant_id])
            return config

    def list_tenants(self) -> List[TenantConfig]:
        return list(self._tenants.values())

    def store_for(self, tenant_id: str) -> TenantStore:
        if tenant_id not in self._stores:
            raise AccessError(f"unknown tenant: {tenant_id}")
        return self._stores[tenant_id]

    def audit_for(self, tenant_id: str) -> AuditLog:
        return self._audits[tenant_id]

    def policy_manager(self, tenant_id: str) -> PolicyManager:
        self.store_for(tenant_id)
        return self._policies[tenant_id]

    def active_policy(self, tenant_id: str) -> GovernancePolicy:
        manager = self.policy_manager(tenant_id)
        return manager.active() or default_policy()

    # -- users and auth ---------------------------------------------------

    def add_user(self, username: str, password: str, role: Role,
                 tenants: Sequence[str]) -> None:
        salt = secrets.token_hex(8)
        self._users[username] = {
            "salt": salt,
            "hash": _hash_password(password, salt),
            "role": role,
            "tenants": frozenset(tenants),
        }

    def auth(self, username: Optional[str] = None, password: Optional[str] = None,
             token: Optional[str] = None) -> UserProfile:
        """Resolve a session.

        Dev mode treats unauthenticated requests as an Admin with full
        tenant scope; authenticated mode checks the built-in store.
        """
        if token:
            profile = self._sessions.get(token)
            if profile is None:
                raise AuthError("unknown or expired token")
            return profile
        if username is None and self.dev_mode:
            return UserProfile("dev-admin", Role.ADMIN, frozenset({"*"}), token="")
        if username is None:
            raise AuthError("credentials required")
        entry = self._users.get(username)
        if entry is None or _hash_password(password or "", entry["salt"]) != entry["hash"]:
            raise AuthError("invalid credentials")
        session_token = secrets.token_hex(16)
        profile = UserProfile(username, entry["role"], entry["tenants"], session_token)
        self._sessions[session_token] = profile
        return profile

    # -- SSE fan-out --------------------------------------------------------
    # Standard thread-safe queues: publishers run on worker threads while
    # each SSE generator polls from the event loop.

    def subscribe(self) -> "simple_queue.Queue[str]":
        queue: "simple_queue.Queue[str]" = simple_queue.Queue(maxsize=256)
        with self._lock:
            self._subscribers.append(queue)
        return queue

    def unsubscribe(self, queue: "simple_queue.Queue[str]") -> None:
        with self._lock:
            if queue in self._subscribers:
                self._subscribers.remove(queue)

    def publish(self, event: Dict[str, Any]) -> None:
        payload = json.dumps(event, sort_keys=True, default=str)
        with self._lock:
            subscribers = list(self._subscribers)
        for queue in subscribers:
            try:
                queue.put_nowait(payload)
            except simple_queue.Full:  # slow consumer; drop rather than block
                logger.warning("dropping SSE event for a slow subscriber")

    def _workflow_engine(self, tenant_id: str, caller: UserProfile) -> WorkflowEngine:
        def on_change(state: WorkflowState) -> None:
            self.publish({
                "type": "workflow_phase",
                "tenant": tenant_id,
                "workflow_id": state.workflow_id,
                "phase": state.phase.value,
            })

        return WorkflowEngine(
            store=self.store_for(tenant_id),
            guardrail=self.guardrail,
            policy=self.active_policy(tenant_id),
            detector=self.detector,
            classifier=self.classifier,
            log_analyzer=self.log_analyzer,
            rule_generator=self.rule_generator,
            tenant=tenant_id,
            caller=caller.username,
            role=caller.role,
            sid_counter=self.sid_counter,
            on_phase_change=on_change,
        )

    # -- the audited bridge ---------------------------------------------

    def invoke_tool(self, caller: UserProfile, tenant_id: str, tool_name: str,
                    args: Dict[str, Any]) -> Dict[str, Any]:
        """Uniform audited wrapper around every tool.

        Order: tenant scope, tool lookup, guardrail on serialized input
        (RBAC inside), dispatch with timing, guardrail on textual output,
        exactly one audit row whatever the outcome. Cross-tenant denials
        are recorded in the deployment-level audit DB so the target
        tenant's store is untouched.
        """
        timestamp = format_timestamp(utc_now())
        if not caller.can_access(tenant_id):
            self.service_audit.write(AuditRecord(
                tool_name=tool_name, caller=caller.username, status="blocked",
                duration_ms=0.0, detail=f"tenant {tenant_id} out of scope",
                blocked=1, timestamp=timestamp,
            ))
            raise AccessError(f"tenant {tenant_id} not accessible to {caller.username}")

        audit = self.audit_for(tenant_id)
        spec = _TOOLS_BY_NAME.get(tool_name)
        if spec is None:
            audit.write(AuditRecord(
                tool_name=tool_name, caller=caller.username, status="error",
                duration_ms=0.0, detail="unknown tool", blocked=0, timestamp=timestamp,
            ))
            raise ToolError(f"unknown tool: {tool_name}")

        policy = self.active_policy(tenant_id)
        serialized = json.dumps(args, sort_keys=True, default=str)
        verdict = self.guardrail.evaluate(
            serialized, "in", caller.role, tool_name, policy,
            semantic=self.semantic_classifier, caller=caller.username,
            tenant=tenant_id, audit=False,
        )
        if not verdict.passed:
            detail = "; ".join(a.description for a in verdict.alerts
                               if a.severity is AlertSeverity.BLOCK)
            audit.write(AuditRecord(
                tool_name=tool_name, caller=caller.username, status="blocked",
                duration_ms=0.0, detail=detail or "guardrail blocked",
                blocked=1, timestamp=timestamp,
            ))
            raise AccessError(f"{tool_name} blocked: {detail}")

        started = time.perf_counter()
        try:
            result = self._dispatch(caller, tenant_id, tool_name, args)
        except (NotFoundError, WorkflowStateError, ToolError, ValueError, KeyError) as exc:
            duration = (time.perf_counter() - started) * 1000.0
            audit.write(AuditRecord(
                tool_name=tool_name, caller=caller.username, status="error",
                duration_ms=duration, detail=f"{type(exc).__name__}: {exc}",
                blocked=0, timestamp=timestamp,
            ))
            raise ToolError(f"{tool_name} failed: {exc}") from exc
        duration = (time.perf_counter() - started) * 1000.0

        out_alerts: List[str] = []
        out_text = self._textual_output(result)
        if out_text:
            out_verdict = self.guardrail.evaluate(
                out_text, "out", caller.role, tool_name, policy,
                caller=caller.username, tenant=tenant_id, audit=False,
            )
            out_alerts = [a.description for a in out_verdict.alerts]
            if not out_verdict.passed:
                audit.write(AuditRecord(
                    tool_name=tool_name, caller=caller.username, status="blocked",
                    duration_ms=duration,
                    detail="output blocked: " + "; ".join(out_alerts),
                    blocked=1, timestamp=timestamp,
                ))
                raise AccessError(f"{tool_name} output blocked")

        audit.write(AuditRecord(
            tool_name=tool_name, caller=caller.username, status="ok",
            duration_ms=duration,
            detail="ok" + (f"; warnings: {'; '.join(out_alerts)}" if out_alerts else ""),
            blocked=0, timestamp=timestamp,
        ))
        if out_alerts:
            result = {**result, "guardrail_warnings": out_alerts}
        return result

    @staticmethod
    def _textual_output(result: Dict[str, Any]) -> str:
        parts: List[str] = []
        for key in ("narrative", "summary", "text", "message"):
            value = result.get(key)
            if isinstance(value, str):
                parts.append(value)
        analysis = result.get("analysis")
        if isinstance(analysis, dict):
            parts.append(json.dumps(analysis, sort_keys=True))
        analyses = result.get("analyses")
        if isinstance(analyses, list):
            parts.append(json.dumps(analyses, sort_keys=True))
        rule = result.get("rule")
        if isinstance(rule, dict) and isinstance(rule.get("text"), str):
            parts.append(rule["text"])
        return "\n".join(parts)

    # -- tool backends ----------------------------------------------------

    def _dispatch(self, caller: UserProfile, tenant_id: str, tool_name: str,
                  args: Dict[str, Any]) -> Dict[str, Any]:
        store = self.store_for(tenant_id)
        if tool_name == "detect_anomaly":
            detection = self.detector.detect(dict(args["features"]))
            label = normalize_threat_label(detection.label)
            label = apply_confidence_gates(
                label, detection.confidence, min(max(detection.entropy_norm, 0.0), 1.0)
            )
            return {"label": label.value, "raw_label": detection.label,
                    "confidence": detection.confidence,
                    "anomaly_score": detection.anomaly_score}

        if tool_name == "analyze_traffic":
            csv_text = args.get("csv")
            if csv_text is None and args.get("path"):
                csv_text = Path(args["path"]).read_text()
            if not csv_text:
                raise ToolError("analyze_traffic needs 'csv' content or a 'path'")
            events = parse_flow_csv(csv_text)
            protocols: Dict[str, int] = {}
            talkers: Dict[str, int] = {}
            for event in events:
                if event.protocol:
                    protocols[event.protocol] = protocols.get(event.protocol, 0) + 1
                if event.src_ip:
                    talkers[event.src_ip] = talkers.get(event.src_ip, 0) + 1
            top = sorted(talkers.items(), key=lambda kv: (-kv[1], kv[0]))[:10]
            return {"flows": len(events), "protocols": protocols,
                    "top_talkers": [{"ip": ip, "flows": n} for ip, n in top]}

        if tool_name == "analyze_log":
            from .workflow import build_analysis_prompt

            prompt = build_analysis_prompt(dict(args["entry"]),
                                           args.get("detail_level", "medium"))
            raw = self.log_analyzer.analyze(prompt)
            analysis = parse_analysis_output(raw)
            if analysis is None:
                retry = self.log_analyzer.analyze(
                    f"Reformat the following as valid JSON:\n{raw}"
                )
                analysis = parse_analysis_output(retry)
            if analysis is None:
                from .workflow import EMPTY_ANALYSIS

                analysis = dict(EMPTY_ANALYSIS)
            return {"analysis": analysis}

        if tool_name == "batch_analyze_logs":
            analyses = []
            for entry in args["entries"]:
                analyses.append(
                    self._dispatch(caller, tenant_id, "analyze_log",
                                   {"entry": entry})["analysis"]
                )
            return {"analyses": analyses, "count": len(analyses)}

        if tool_name == "query_ioc":
            from .correlation import enrich_ioc
            from .uicr import IoC, IoCType

            ioc = IoC(IoCType(args["ioc_type"]), args["value"], source_tool="query")
            enriched, warning = enrich_ioc(ioc, self.enrichment)
            return {"ioc": enriched.to_dict(), "warning": warning}

        if tool_name == "correlate_events":
            records = [UICR.from_dict(r) for r in args["records"]]
            incidents = correlate_batch(records, CorrelationConfig(
                time_window_seconds=args.get("window_seconds", 300.0)
            ))
            for incident in incidents:
                store.put_incident(
                    incident.incident_id,
                    format_timestamp(incident.created_at),
                    format_timestamp(incident.updated_at),
                    incident.to_dict(),
                )
            return {
                "incidents": [i.to_dict() for i in incidents],
                "summaries": [summarize(i) for i in incidents],
                "count": len(incidents),
            }

        if tool_name == "generate_rule":
            fmt = args.get("format", "suricata")
            raw = self.rule_generator.generate(args["context"], fmt)
            rule = postprocess(raw, fmt, sid_counter=self.sid_counter)
            report = validate(rule)
            rule_id = f"rule-{uuid.uuid4().hex[:10]}"
            if report.valid:
                store.put_rule(rule_id, rule.format.value,
                               {"rule_id": rule_id, **rule.to_dict(),
                                "origin": "generate_rule"})
            return {"rule_id": rule_id if report.valid else None,
                    "rule": rule.to_dict(), "report": report.to_dict()}

        if tool_name == "validate_rule":
            fmt = RuleFormat(args["format"])
            try:
                if fmt is RuleFormat.YARA:
                    rule = parse_yara_rule(args["text"])
                else:
                    rule = parse_ids_rule(args["text"], fmt)
            except ExtractionError as exc:
                return {"report": {"valid": False, "findings": [
                    {"code": "parse.failed", "severity": "error",
                     "message": str(exc), "span": ""}]}}
            return {"rule": rule.to_dict(), "report": validate(rule).to_dict()}

        if tool_name == "start_agent_pipeline":
            engine = self._workflow_engine(tenant_id, caller)
            state = engine.start(dict(args["features"]), args.get("logs"))
            return {"workflow": state.to_dict()}

        if tool_name == "get_workflow_status":
            state = self.store_for(tenant_id).get_workflow(args["workflow_id"])
            return {"workflow": state}

        raise ToolError(f"unhandled tool: {tool_name}")

    # -- workflow decisions (service surface for the review UI) ----------

    def decide_workflow(self, caller: UserProfile, tenant_id: str, workflow_id: str,
                        checkpoint: int, decision: str,
                        payload: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """Checkpoint decisions are write actions: they require pipeline
        access and produce their own audit row."""
        timestamp = format_timestamp(utc_now())
        if not caller.can_access(tenant_id):
            self.service_audit.write(AuditRecord(
                tool_name="workflow_decide", caller=caller.username, status="blocked",
                duration_ms=0.0, detail=f"tenant {tenant_id} out of scope",
                blocked=1, timestamp=timestamp,
            ))
            raise AccessError(f"tenant {tenant_id} not accessible")
        policy = self.active_policy(tenant_id)
        verdict = eval_access(caller.role, "mcp_tool", "start_agent_pipeline", policy)
        audit = self.audit_for(tenant_id)
        if not verdict.allowed:
            audit.write(AuditRecord(
                tool_name="workflow_decide", caller=caller.username, status="blocked",
                duration_ms=0.0, detail=verdict.reason, blocked=1, timestamp=timestamp,
            ))
            raise AccessError(f"decision denied: {verdict.reason}")
        started = time.perf_counter()
        engine = self._workflow_engine(tenant_id, caller)
        try:
            state = engine.decide(workflow_id, checkpoint, decision, payload,
                                  editor=caller.username)
        except (WorkflowStateError, NotFoundError) as exc:
            audit.write(AuditRecord(
                tool_name="workflow_decide", caller=caller.username, status="error",
                duration_ms=(time.perf_counter() - started) * 1000.0,
                detail=str(exc), blocked=0, timestamp=timestamp,
            ))
            raise
        audit.write(AuditRecord(
            tool_name="workflow_decide", caller=caller.username, status="ok",
            duration_ms=(time.perf_counter() - started) * 1000.0,
            detail=f"checkpoint {checkpoint}: {decision} -> {state.phase.value}",
            blocked=0, timestamp=timestamp,
        ))
        return {"workflow": state.to_dict()}

    # -- resources --------------------------------------------------------

    def read_resource(self, caller: UserProfile, tenant_id: str, uri: str) -> Dict[str, Any]:
        if not caller.can_access(tenant_id):
            raise AccessError(f"tenant {tenant_id} not accessible")
        store = self.store_for(tenant_id)
        if uri == "soc://models":
            return {
                "models": [
                    {"name": type(self.detector).__name__, "role": "detector", "status": "ready"},
                    {"name": type(self.classifier).__name__, "role": "classifier", "status": "ready"},
                    {"name": type(self.log_analyzer).__name__, "role": "log_analyzer", "status": "ready"},
                    {"name": type(self.rule_generator).__name__, "role": "rule_generator", "status": "ready"},
                ]
            }
        if uri == "soc://rules":
            return {"rules": list(store.iter_rules())}
        if uri == "soc://incidents":
            return {"incidents": list(store.iter_incidents())}
        if uri == "soc://guardrail-stats":
            return {
                "engine": self.guardrail.stats(),
                "audit": self.audit_for(tenant_id).stats(),
            }
        raise ToolError(f"unknown resource: {uri}")

    # -- JSON-RPC ---------------------------------------------------------

    def rpc(self, caller: UserProfile, tenant_id: str, request: Dict[str, Any]) -> Dict[str, Any]:
        """JSON-RPC 2.0 dispatch for tools/list, tools/call, resources/read."""
        request_id = request.get("id")

        def error(code: int, message: str) -> Dict[str, Any]:
            return {"jsonrpc": "2.0", "id": request_id,
                    "error": {"code": code, "message": message}}

        if not isinstance(request, dict) or request.get("jsonrpc") != "2.0" or "method" not in request:
            return error(-32600, "invalid JSON-RPC 2.0 request")
        method = request["method"]
        params = request.get("params") or {}
        try:
            if method == "tools/list":
                result: Dict[str, Any] = {
                    "tools": [
                        {"name": t.name, "category": t.category,
                         "description": t.description, "read_only": t.read_only,
                         "input_schema": t.input_schema}
                        for t in TOOL_REGISTRY
                    ]
                }
            elif method == "tools/call":
                name = params.get("name")
                if not name:
                    return error(-32602, "missing tool name")
                result = self.invoke_tool(caller, tenant_id, name,
                                          params.get("arguments") or {})
            elif method == "resources/read":
                uri = params.get("uri")
                if not uri:
                    return error(-32602, "missing resource uri")
                result = self.read_resource(caller, tenant_id, uri)
            elif method == "resources/list":
                result = {"resources": list(RESOURCE_URIS)}
            else:
                return error(-32601, f"method not found: {method}")
        except AccessError as exc:
            return error(-32001, str(exc))
        except (ToolError, NotFoundError) as exc:
            return error(-32000, str(exc))
        return {"jsonrpc": "2.0", "id": request_id, "result": result}


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------

def create_app(service: SocService):
    """FastAPI application over the service core.

    Exposes POST /api/v1/rpc (JSON-RPC 2.0), REST convenience routes for
    the review UI, and the SSE stream at /api/v1/events.
    """
    app = FastAPI(title="socengine", version="0.1.0")
    # the review UI is typically served from another origin; auth stays in
    # the bearer header, so wildcard origins without credentials are safe
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def current_user(authorization: Optional[str] = Header(default=None)) -> UserProfile:
        token = None
        if authorization and authorization.lower().startswith("bearer "):
            token = authorization.split(" ", 1)[1].strip()
        try:
            return service.auth(token=token) if token else service.auth()
        except AuthError as exc:
            raise HTTPException(status_code=401, detail=str(exc))

    def check_scope(user: UserProfile, tenant: str) -> None:
        if not user.can_access(tenant):
            raise HTTPException(status_code=403, detail=f"tenant {tenant} not accessible")

    @app.post("/api/v1/auth/login")
    def login(body: Dict[str, Any]):
        try:
            profile = service.auth(username=body.get("username"),
                                   password=body.get("password"))
        except AuthError as exc:
            raise HTTPException(status_code=401, detail=str(exc))
        return profile.to_dict()

    @app.get("/api/v1/tenants")
    def tenants(user: UserProfile = Depends(current_user)):
        return {"tenants": [t.to_dict() for t in service.list_tenants()
                            if user.can_access(t.tenant_id)]}

    @app.post("/api/v1/rpc")
    async def rpc_endpoint(request: Request,
                           tenant: str = Query(default="default"),
                           user: UserProfile = Depends(current_user)):
        try:
            body = json.loads(await request.body())
        except json.JSONDecodeError:
            return JSONResponse(
                {"jsonrpc": "2.0", "id": None,
                 "error": {"code": -32700, "message": "parse error"}}
            )
        return JSONResponse(service.rpc(user, tenant, body))

    @app.get("/api/v1/incidents")
    def incidents(tenant: str = Query(default="default"),
                  severity: Optional[str] = None,
                  sort: str = "triage_score",
                  user: UserProfile = Depends(current_user)):
        check_scope(user, tenant)
        rows = list(service.store_for(tenant).iter_incidents())
        if severity:
            rows = [r for r in rows if r.get("severity") == severity]
        reverse = sort in ("triage_score", "updated_at")
        rows.sort(key=lambda r: r.get(sort) or 0, reverse=reverse)
        return {"incidents": rows}

    @app.get("/api/v1/incidents/pivot")
    def incident_pivot(key: str, tenant: str = Query(default="default"),
                       user: UserProfile = Depends(current_user)):
        check_scope(user, tenant)
        return {"incident_ids": pivot(service.store_for(tenant), key)}

    @app.get("/api/v1/incidents/{incident_id}")
    def incident_detail(incident_id: str, tenant: str = Query(default="default"),
                        user: UserProfile = Depends(current_user)):
        check_scope(user, tenant)
        try:
            body = service.store_for(tenant).get_incident(incident_id)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        record = UICR.from_dict(body)
        return {
            "incident": body,
            "timeline": [
                {"timestamp": format_timestamp(e.timestamp), "kind": e.kind,
                 "summary": e.summary}
                for e in build_timeline(record)
            ],
            "summary": summarize(record),
        }

    @app.get("/api/v1/workflows")
    def workflows(tenant: str = Query(default="default"),
                  user: UserProfile = Depends(current_user)):
        check_scope(user, tenant)
        return {"workflows": list(service.store_for(tenant).iter_workflows())}

    @app.post("/api/v1/workflows")
    def start_workflow(body: Dict[str, Any], tenant: str = Query(default="default"),
                       user: UserProfile = Depends(current_user)):
        try:
            return service.invoke_tool(user, tenant, "start_agent_pipeline", body)
        except AccessError as exc:
            raise HTTPException(status_code=403, detail=str(exc))
        except ToolError as exc:
            raise HTTPException(status_code=400, detail=str(exc))

    @app.get("/api/v1/workflows/{workflow_id}")
    def workflow_status(workflow_id: str, tenant: str = Query(default="default"),
                        user: UserProfile = Depends(current_user)):
        check_scope(user, tenant)
        try:
            return {"workflow": service.store_for(tenant).get_workflow(workflow_id)}
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.post("/api/v1/workflows/{workflow_id}/decide")
    def decide(workflow_id: str, body: Dict[str, Any],
               tenant: str = Query(default="default"),
               user: UserProfile = Depends(current_user)):
        try:
            return service.decide_workflow(
                user, tenant, workflow_id,
                checkpoint=int(body["checkpoint"]),
                decision=body["decision"],
                payload=body.get("payload"),
            )
        except AccessError as exc:
            raise HTTPException(status_code=403, detail=str(exc))
        except WorkflowStateError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.post("/api/v1/workflows/{workflow_id}/reconstruct")
    def workflow_reconstruct(workflow_id: str, tenant: str = Query(default="default"),
                             user: UserProfile = Depends(current_user)):
        check_scope(user, tenant)
        engine = service._workflow_engine(tenant, user)
        try:
            manifest = engine.handoff_to_reconstructor(workflow_id)
        except WorkflowStateError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        sources = [(s["format"], s["content"]) for s in manifest["sources"]]
        result = reconstruct(
            sources,
            provider=service.hypothesis_provider,
            scenario_store=ScenarioStore(service.store_for(tenant)),
        )
        return {"summary": result.summary(),
                "scenario_ids": [s.scenario_id for s in result.scenarios]}

    @app.get("/api/v1/scenarios")
    def scenarios(tenant: str = Query(default="default"),
                  user: UserProfile = Depends(current_user)):
        check_scope(user, tenant)
        return {"scenarios": list(service.store_for(tenant).iter_scenarios())}

    @app.get("/api/v1/scenarios/{scenario_id}")
    def scenario_detail(scenario_id: str, tenant: str = Query(default="default"),
                        user: UserProfile = Depends(current_user)):
        check_scope(user, tenant)
        try:
            return {"scenario": service.store_for(tenant).get_scenario(scenario_id)}
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.post("/api/v1/scenarios/{scenario_id}/validation")
    def scenario_validation(scenario_id: str, body: Dict[str, Any],
                            tenant: str = Query(default="default"),
                            user: UserProfile = Depends(current_user)):
        check_scope(user, tenant)
        if user.role is Role.VIEWER:
            raise HTTPException(status_code=403, detail="viewers cannot validate scenarios")
        store = ScenarioStore(service.store_for(tenant))
        try:
            updated = store.set_validation(
                scenario_id, ValidationStatus(body["status"]), body.get("notes", "")
            )
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return {"scenario": updated.to_dict(), "history": store.history(scenario_id)}

    @app.get("/api/v1/scenarios/{scenario_id}/graph")
    def scenario_graph(scenario_id: str, tenant: str = Query(default="default"),
                       user: UserProfile = Depends(current_user)):
        check_scope(user, tenant)
        store = ScenarioStore(service.store_for(tenant))
        try:
            document = store.graph_document(scenario_id)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        if document is None:
            # no stored render; fall back to the chain-only document
            from .scenario import CorrelationGraph

            document = render_graph(store.get(scenario_id), CorrelationGraph()).to_dict()
        return {"graph": document}

    @app.get("/api/v1/scenarios/{scenario_id}/stix")
    def scenario_stix(scenario_id: str, tenant: str = Query(default="default"),
                      user: UserProfile = Depends(current_user)):
        check_scope(user, tenant)
        store = ScenarioStore(service.store_for(tenant))
        try:
            return export_stix(store.get(scenario_id))
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.get("/api/v1/scenarios/{a}/compare/{b}")
    def scenario_compare(a: str, b: str, tenant: str = Query(default="default"),
                         user: UserProfile = Depends(current_user)):
        check_scope(user, tenant)
        store = ScenarioStore(service.store_for(tenant))
        try:
            return compare(store.get(a), store.get(b)).to_dict()
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.get("/api/v1/policies")
    def policies(tenant: str = Query(default="default"),
                 user: UserProfile = Depends(current_user)):
        check_scope(user, tenant)
        return {"policies": service.policy_manager(tenant).list_versions()}

    @app.post("/api/v1/policies")
    def save_policy(body: Dict[str, Any], tenant: str = Query(default="default"),
                    user: UserProfile = Depends(current_user)):
        check_scope(user, tenant)
        if user.role is not Role.ADMIN:
            raise HTTPException(status_code=403, detail="only admins manage policies")
        draft = service.policy_manager(tenant).save_draft(GovernancePolicy.from_dict(body))
        return {"policy": draft.to_dict()}

    @app.post("/api/v1/policies/{policy_id}/activate")
    def activate_policy(policy_id: str, tenant: str = Query(default="default"),
                        user: UserProfile = Depends(current_user)):
        check_scope(user, tenant)
        if user.role is not Role.ADMIN:
            raise HTTPException(status_code=403, detail="only admins manage policies")
        from .governance import PolicyLifecycleError

        try:
            active = service.policy_manager(tenant).activate(policy_id)
        except PolicyLifecycleError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {"policy": active.to_dict()}

    @app.get("/api/v1/audit")
    def audit_query(tenant: str = Query(default="default"),
                    tool_name: Optional[str] = None,
                    caller: Optional[str] = None,
                    status: Optional[str] = None,
                    blocked: Optional[int] = None,
                    since: Optional[str] = None,
                    until: Optional[str] = None,
                    user: UserProfile = Depends(current_user)):
        check_scope(user, tenant)
        records = service.audit_for(tenant).query(
            tool_name=tool_name, caller=caller, status=status,
            blocked=blocked, since=since, until=until,
        )
        return {"records": [r.to_dict() for r in records]}

    @app.get("/api/v1/guardrail/stats")
    def guardrail_stats(tenant: str = Query(default="default"),
                        user: UserProfile = Depends(current_user)):
        check_scope(user, tenant)
        return service.read_resource(user, tenant, "soc://guardrail-stats")

    @app.get("/api/v1/events")
    async def sse_events(user: UserProfile = Depends(current_user)):
        queue = service.subscribe()

        async def stream():
            idle = 0.0
            try:
                yield "event: hello\ndata: {}\n\n"
                while True:
                    try:
                        payload = queue.get_nowait()
                    except simple_queue.Empty:
                        await asyncio.sleep(0.05)
                        idle += 0.05
                        if idle >= 15.0:
                            yield ": keepalive\n\n"
                            idle = 0.0
                        continue
                    idle = 0.0
                    yield f"data: {payload}\n\n"
            finally:
                service.unsubscribe(queue)

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.get("/api/v1/health")
    def health():
        return {"status": "ok", "time": format_timestamp(utc_now())}

    return app
