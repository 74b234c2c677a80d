"""Five-node SOC pipeline with two human checkpoints and a 12-phase state
machine.

Node 1 detects on packet features, node 2 classifies, human review 1
approves/rejects/modifies the classification (benign approvals terminate
the pipeline), node 3 analyzes logs, node 4 proposes detection rules,
human review 2 gates deployment, node 5 persists validated rules. Every
provider call is wrapped by a guardrail evaluation on its input and its
output; a Block halts the workflow in the Error phase, Warns surface at
the next checkpoint. State persists after every transition so any
workflow can be recovered from its last checkpoint.
"""

from __future__ import annotations

import json
import logging
import re
import time
import uuid
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .governance import AlertSeverity, GovernancePolicy, GuardrailEngine, Role
from .providers import (
    Classifier,
    ClassificationResult,
    DetectionResult,
    Detector,
    LogAnalyzer,
    RuleGenerator,
)
from .rules import DetectionRule, RuleFormat, ExtractionError, SidCounter, postprocess, validate
from .store import NotFoundError, TenantStore
from .uicr import (
    CanonicalThreatLabel,
    apply_confidence_gates,
    format_timestamp,
    normalize_threat_label,
    parse_timestamp,
    utc_now,
)

logger = logging.getLogger(__name__)

__all__ = [
    "Phase",
    "WorkflowState",
    "WorkflowError",
    "WorkflowStateError",
    "WorkflowEngine",
    "LEGAL_TRANSITIONS",
    "repair_json_stage1",
    "parse_analysis_output",
    "build_analysis_prompt",
    "EMPTY_ANALYSIS",
]


class Phase(str, Enum):
    PENDING = "Pending"
    INGESTING = "Ingesting"
    CLASSIFYING = "Classifying"
    AWAITING_CLASSIFICATION_REVIEW = "Awaiting_Classification_Review"
    ANALYZING = "Analyzing"
    PROPOSING_RULES = "Proposing_Rules"
    AWAITING_RULE_REVIEW = "Awaiting_Rule_Review"
    DEPLOYING = "Deploying"
    COMPLETED = "Completed"
    COMPLETED_BENIGN = "Completed_Benign"
    ABORTED = "Aborted"
    ERROR = "Error"


TERMINAL_PHASES = frozenset(
    {Phase.COMPLETED, Phase.COMPLETED_BENIGN, Phase.ABORTED, Phase.ERROR}
)

#: The exact legal transition edges; everything else raises.
LEGAL_TRANSITIONS: Dict[Phase, frozenset] = {
    Phase.PENDING: frozenset({Phase.INGESTING}),
    Phase.INGESTING: frozenset({Phase.CLASSIFYING, Phase.ERROR}),
    Phase.CLASSIFYING: frozenset({Phase.AWAITING_CLASSIFICATION_REVIEW, Phase.ERROR}),
    Phase.AWAITING_CLASSIFICATION_REVIEW: frozenset(
        {Phase.ANALYZING, Phase.COMPLETED_BENIGN, Phase.ABORTED}
    ),
    Phase.ANALYZING: frozenset({Phase.PROPOSING_RULES, Phase.ERROR}),
    Phase.PROPOSING_RULES: frozenset({Phase.AWAITING_RULE_REVIEW, Phase.ERROR}),
    Phase.AWAITING_RULE_REVIEW: frozenset({Phase.DEPLOYING, Phase.ABORTED}),
    Phase.DEPLOYING: frozenset({Phase.COMPLETED, Phase.ERROR}),
    Phase.COMPLETED: frozenset(),
    Phase.COMPLETED_BENIGN: frozenset(),
    Phase.ABORTED: frozenset(),
    Phase.ERROR: frozenset(),
}


class WorkflowError(RuntimeError):
    """Workflow-level operational failure."""


class WorkflowStateError(WorkflowError):
    """Illegal phase transition or decision in the wrong phase."""


@dataclass
class WorkflowState:
    """Complete, persistable record of one pipeline execution."""

    workflow_id: str = field(default_factory=lambda: f"wf-{uuid.uuid4().hex[:12]}")
    tenant: str = "default"
    phase: Phase = Phase.PENDING
    created_at: str = field(default_factory=lambda: format_timestamp(utc_now()))
    updated_at: str = field(default_factory=lambda: format_timestamp(utc_now()))
    features: Dict[str, Any] = field(default_factory=dict)
    log_entries: List[Dict[str, Any]] = field(default_factory=list)
    detection: Optional[Dict[str, Any]] = None
    classification: Optional[Dict[str, Any]] = None
    log_analysis: Optional[Dict[str, Any]] = None
    proposed_rules: List[Dict[str, Any]] = field(default_factory=list)
    deployed_rule_ids: List[str] = field(default_factory=list)
    event_log: List[Dict[str, Any]] = field(default_factory=list)
    human_decisions: List[Dict[str, Any]] = field(default_factory=list)
    phase_timings: Dict[str, float] = field(default_factory=dict)

    def transition(self, new_phase: Phase) -> None:
        if new_phase not in LEGAL_TRANSITIONS[self.phase]:
            raise WorkflowStateError(
                f"illegal transition {self.phase.value} -> {new_phase.value}"
            )
        self.phase = new_phase
        self.updated_at = format_timestamp(utc_now())

    def log_event(self, kind: str, message: str) -> None:
        self.event_log.append(
            {"timestamp": format_timestamp(utc_now()), "kind": kind, "message": message}
        )

    def timing_auto_ms(self) -> float:
        return sum(self.phase_timings.get(k, 0.0) for k in ("T1", "T2", "T3", "T4"))

    def timing_machine_ms(self) -> float:
        return self.timing_auto_ms() + self.phase_timings.get("T5", 0.0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "workflow_id": self.workflow_id,
            "tenant": self.tenant,
            "phase": self.phase.value,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "features": dict(self.features),
            "log_entries": list(self.log_entries),
            "detection": self.detection,
            "classification": self.classification,
            "log_analysis": self.log_analysis,
            "proposed_rules": list(self.proposed_rules),
            "deployed_rule_ids": list(self.deployed_rule_ids),
            "event_log": list(self.event_log),
            "human_decisions": list(self.human_decisions),
            "phase_timings": dict(self.phase_timings),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "WorkflowState":
        return cls(
            workflow_id=data["workflow_id"],
            tenant=data.get("tenant", "default"),
            phase=Phase(data["phase"]),
            created_at=data["created_at"],
            updated_at=data["updated_at"],
            features=dict(data.get("features", {})),
            log_entries=list(data.get("log_entries", ())),
            detection=data.get("detection"),
            classification=data.get("classification"),
            log_analysis=data.get("log_analysis"),
            proposed_rules=list(data.get("proposed_rules", ())),
            deployed_rule_ids=list(data.get("deployed_rule_ids", ())),
            event_log=list(data.get("event_log", ())),
            human_decisions=list(data.get("human_decisions", ())),
            phase_timings=dict(data.get("phase_timings", {})),
        )


# ---------------------------------------------------------------------------
# Two-stage JSON repair
# ---------------------------------------------------------------------------

_TRAILING_COMMA_RE = re.compile(r",\s*(?=[}\]])")
_MULTI_COMMA_RE = re.compile(r",\s*,+")


def repair_json_stage1(text: str) -> str:
    """Mechanical cleanup: fences, successive/trailing commas, missing
    closing braces and brackets (append-only)."""
    cleaned = re.sub(r"^```(?:json)?|```$", "", text.strip(), flags=re.MULTILINE).strip()
    start = cleaned.find("{")
    if start > 0:
        cleaned = cleaned[start:]
    cleaned = _MULTI_COMMA_RE.sub(",", cleaned)
    cleaned = _TRAILING_COMMA_RE.sub("", cleaned)
    opens, closes = [], 0
    in_string = False
    escaped = False
    for ch in cleaned:
        if escaped:
            escaped = False
            continue
        if ch == "\\":
            escaped = True
            continue
        if ch == '"':
            in_string = not in_string
            continue
        if in_string:
            continue
        if ch in "{[":
            opens.append(ch)
        elif ch in "}]" and opens:
            opens.pop()
    for open_ch in reversed(opens):
        cleaned += "}" if open_ch == "{" else "]"
    return cleaned


ANALYSIS_KEYS = ("summary", "root_causes", "recommended_actions", "risk_level",
                 "iocs", "evidence")

EMPTY_ANALYSIS: Dict[str, Any] = {
    "summary": "",
    "root_causes": [],
    "recommended_actions": [],
    "risk_level": "",
    "iocs": [],
    "evidence": [],
    "unparseable": True,
}

_DETAIL_HINTS = {
    "low": "Keep each section to 1-2 sentences.",
    "medium": "Use 2-4 sentences per section.",
    "high": "Use 4-6 sentences per section.",
    "forensic": "Use 6-10 sentences per section with full evidentiary detail.",
}


def parse_analysis_output(raw: str) -> Optional[Dict[str, Any]]:
    """Parse analyzer output, applying stage-1 repair when direct parsing
    fails. Returns None when the text is beyond mechanical repair."""
    for candidate in (raw, repair_json_stage1(raw)):
        try:
            data = json.loads(candidate)
        except (json.JSONDecodeError, ValueError):
            continue
        if isinstance(data, dict):
            return {key: data.get(key, EMPTY_ANALYSIS[key]) for key in ANALYSIS_KEYS}
    return None


def build_analysis_prompt(entry: Dict[str, Any], detail_level: str = "medium") -> str:
    hint = _DETAIL_HINTS.get(detail_level, _DETAIL_HINTS["medium"])
    return (
        "Analyze the following SIEM log entry and provide:\n"
        "1. A detailed summary of what happened\n"
        "2. Potential root causes (ranked, with reasoning)\n"
        "3. Recommended actions (immediate + preventive)\n"
        "4. Risk level (Low/Medium/High/Critical) with justification\n"
        "5. Indicators of compromise (if any)\n"
        "6. Key fields that support your conclusion\n\n"
        f"Detail level: {detail_level}. {hint}\n\n"
        f"Log Entry:\n{json.dumps(entry, sort_keys=True)}\n\n"
        "Return ONLY valid JSON. Keys: summary, root_causes, "
        "recommended_actions, risk_level, iocs, evidence"
    )


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------

class WorkflowEngine:
    """Drives workflows for one tenant.

    A single workflow is single-writer: callers serialize decisions per
    workflow id (the service layer does). Distinct workflows may run
    concurrently against the same engine.
    """

    def __init__(
        self,
        store: TenantStore,
        guardrail: GuardrailEngine,
        policy: GovernancePolicy,
        detector: Detector,
        classifier: Classifier,
        log_analyzer: LogAnalyzer,
        rule_generator: RuleGenerator,
        tenant: str = "default",
        caller: str = "pipeline",
        role: Role = Role.OPERATOR,
        rule_format: str = "suricata",
        sid_counter: Optional[SidCounter] = None,
        on_phase_change=None,
    ):
        self.store = store
        self.guardrail = guardrail
        self.policy = policy
        self.detector = detector
        self.classifier = classifier
        self.log_analyzer = log_analyzer
        self.rule_generator = rule_generator
        self.tenant = tenant
        self.caller = caller
        self.role = role
        self.rule_format = rule_format
        self.sid_counter = sid_counter or SidCounter()
        self.on_phase_change = on_phase_change

    # -- plumbing -----------------------------------------------------------

    def _persist(self, state: WorkflowState) -> None:
        self.store.put_workflow(state.workflow_id, state.phase.value, state.to_dict())
        if self.on_phase_change is not None:
            self.on_phase_change(state)

    def _evaluate(self, state: WorkflowState, text: str, direction: str, tool: str) -> bool:
        """Guardrail wrap around one provider direction. Returns False and
        pushes the workflow to Error when blocked.

        Access was already checked when the pipeline was invoked, so these
        sanitization-layer evaluations skip RBAC; rate limiting is keyed
        per workflow session.
        """
        result = self.guardrail.evaluate(
            text, direction, self.role, tool, self.policy,
            caller=f"{self.caller}:{state.workflow_id}", tenant=self.tenant,
            audit=False, check_access=False,
        )
        for alert in result.alerts:
            if alert.severity is AlertSeverity.WARN:
                state.log_event("guardrail_warn", f"{tool}[{direction}]: {alert.description}")
        if not result.passed:
            blocked = "; ".join(a.description for a in result.alerts
                                if a.severity is AlertSeverity.BLOCK)
            state.log_event("guardrail_block", f"{tool}[{direction}]: {blocked}")
            state.transition(Phase.ERROR)
            self._persist(state)
            return False
        return True

    def get(self, workflow_id: str) -> WorkflowState:
        return WorkflowState.from_dict(self.store.get_workflow(workflow_id))

    def recover(self, workflow_id: str) -> WorkflowState:
        """Reload persisted state exactly; unknown ids raise NotFoundError."""
        return self.get(workflow_id)

    # -- node 1 + 2 ---------------------------------------------------------

    def start(self, features: Dict[str, Any],
              log_entries: Optional[Sequence[Dict[str, Any]]] = None) -> WorkflowState:
        """Run ingest/detect and classify, landing at the first checkpoint.

        Records T1-T4 for the detection path and T5 for the classification
        enrichment; a guardrail Block at any point halts in Error.
        """
        state = WorkflowState(tenant=self.tenant, features=dict(features),
                              log_entries=list(log_entries or ()))
        state.transition(Phase.INGESTING)
        state.log_event("phase", "ingest and detect")

        t_start = time.perf_counter()
        serialized = json.dumps(features, sort_keys=True, default=str)
        state.phase_timings["T1"] = (time.perf_counter() - t_start) * 1000.0

        if not self._evaluate(state, serialized, "in", "detect_anomaly"):
            return state

        t_pre = time.perf_counter()
        detector_request = {"features": features}
        state.phase_timings["T2"] = (time.perf_counter() - t_pre) * 1000.0

        t_inf = time.perf_counter()
        try:
            detection = self.detector.detect(detector_request["features"])
        except Exception as exc:
            state.log_event("error", f"detector failure: {exc}")
            state.transition(Phase.ERROR)
            self._persist(state)
            return state
        state.phase_timings["T3"] = (time.perf_counter() - t_inf) * 1000.0

        t_route = time.perf_counter()
        label = normalize_threat_label(detection.label)
        label = apply_confidence_gates(label, detection.confidence,
                                       min(max(detection.entropy_norm, 0.0), 1.0))
        state.detection = {
            "label": label.value,
            "raw_label": detection.label,
            "confidence": detection.confidence,
            "anomaly_score": detection.anomaly_score,
            "entropy_norm": detection.entropy_norm,
        }
        if not self._evaluate(state, json.dumps(state.detection, sort_keys=True),
                              "out", "detect_anomaly"):
            return state
        state.phase_timings["T4"] = (time.perf_counter() - t_route) * 1000.0

        state.transition(Phase.CLASSIFYING)
        state.log_event("phase", "classify threat")
        t_enrich = time.perf_counter()
        detection_for_classifier = DetectionResult(
            label=label.value,
            confidence=detection.confidence,
            anomaly_score=detection.anomaly_score,
            entropy_norm=detection.entropy_norm,
        )
        if not self._evaluate(state, json.dumps(state.detection, sort_keys=True),
                              "in", "classify_threat"):
            return state
        try:
            classification = self.classifier.classify(detection_for_classifier,
                                                      {"features": features})
        except Exception as exc:
            state.log_event("error", f"classifier failure: {exc}")
            state.transition(Phase.ERROR)
            self._persist(state)
            return state
        if not self._evaluate(state, classification.narrative, "out", "classify_threat"):
            return state
        state.classification = classification.to_dict()
        state.phase_timings["T5"] = (time.perf_counter() - t_enrich) * 1000.0

        state.transition(Phase.AWAITING_CLASSIFICATION_REVIEW)
        state.phase_timings["checkpoint1_entered"] = time.perf_counter() * 1000.0
        state.log_event("checkpoint", "awaiting classification review")
        self._persist(state)
        return state

    # -- node 3 -------------------------------------------------------------

    def run_log_analysis(self, state: WorkflowState,
                         detail_level: str = "medium") -> WorkflowState:
        """Node 3: structured log analysis with two-stage JSON repair.

        Stage 1 is mechanical cleanup; stage 2 re-asks the provider for a
        reformat. A persistent failure records an empty analysis and a
        Warn event, and the pipeline continues.
        """
        if state.phase is not Phase.ANALYZING:
            raise WorkflowStateError(
                f"log analysis requires the Analyzing phase, not {state.phase.value}"
            )
        entry = state.log_entries[0] if state.log_entries else {"message": "no logs supplied"}
        prompt = build_analysis_prompt(entry, detail_level)
        if not self._evaluate(state, json.dumps(entry, sort_keys=True, default=str),
                              "in", "analyze_log"):
            return state
        analysis: Optional[Dict[str, Any]] = None
        try:
            raw = self.log_analyzer.analyze(prompt)
        except Exception as exc:
            state.log_event("warn", f"log analyzer failure: {exc}")
            raw = ""
        if raw:
            if not self._evaluate(state, raw, "out", "analyze_log"):
                return state
            analysis = self._parse_analysis(raw)
            if analysis is None:
                state.log_event("warn", "analysis unparseable; invoking reformat pass")
                try:
                    retry = self.log_analyzer.analyze(
                        "Reformat the following as valid JSON with keys "
                        f"{', '.join(ANALYSIS_KEYS)}:\n{raw}"
                    )
                    analysis = self._parse_analysis(retry)
                except Exception as exc:
                    state.log_event("warn", f"reformat pass failed: {exc}")
        if analysis is None:
            state.log_event("warn", "analysis remained unparseable; continuing with empty schema")
            analysis = dict(EMPTY_ANALYSIS)
        state.log_analysis = analysis
        state.log_event("phase", "log analysis complete")
        return state

    @staticmethod
    def _parse_analysis(raw: str) -> Optional[Dict[str, Any]]:
        return parse_analysis_output(raw)

    # -- node 4 -------------------------------------------------------------

    def propose_rules(self, state: WorkflowState) -> WorkflowState:
        """Node 4: assemble context, generate, post-process, validate."""
        if state.phase is not Phase.PROPOSING_RULES:
            raise WorkflowStateError(
                f"rule proposal requires the Proposing_Rules phase, not {state.phase.value}"
            )
        context = json.dumps(
            {
                "narrative": (state.classification or {}).get("narrative", ""),
                "iocs": (state.log_analysis or {}).get("iocs", []),
                "risk_level": (state.log_analysis or {}).get("risk_level", ""),
                "features": state.features,
            },
            sort_keys=True,
            default=str,
        )
        if not self._evaluate(state, context, "in", "generate_rule"):
            return state
        proposals: List[Dict[str, Any]] = []
        try:
            raw = self.rule_generator.generate(context, self.rule_format)
        except Exception as exc:
            state.log_event("warn", f"rule generator failure: {exc}")
            raw = ""
        if raw:
            if not self._evaluate(state, raw, "out", "generate_rule"):
                return state
            try:
                rule = postprocess(raw, self.rule_format, sid_counter=self.sid_counter)
            except ExtractionError as exc:
                state.log_event("warn", f"no rule-shaped output: {exc}")
            else:
                report = validate(rule)
                entry = {"rule": rule.to_dict(), "report": report.to_dict()}
                if report.valid:
                    proposals.append(entry)
                else:
                    state.log_event(
                        "warn",
                        "generated rule failed validation: "
                        + "; ".join(f.message for f in report.errors()),
                    )
        if not proposals:
            state.log_event("warn", "no valid rule proposals")
        state.proposed_rules = proposals
        state.log_event("phase", f"proposed {len(proposals)} rule(s)")
        return state

    # -- human checkpoints --------------------------------------------------

    def decide(self, workflow_id: str, checkpoint: int, decision: str,
               payload: Optional[Dict[str, Any]] = None,
               editor: str = "analyst") -> WorkflowState:
        """Apply a human decision at checkpoint 1 or 2.

        Checkpoint 1: approve routes benign classifications to
        Completed_Benign and malicious ones through log analysis and rule
        proposal to the second checkpoint; modify replaces the
        classification wholesale first. Checkpoint 2: approve deploys the
        validated rules; modify re-validates edited rules and stays in
        review when any edit is invalid; reject aborts at either gate.
        """
        state = self.get(workflow_id)
        if state.phase in TERMINAL_PHASES:
            raise WorkflowStateError(
                f"workflow {workflow_id} is terminal ({state.phase.value}); read-only"
            )
        if decision not in ("approve", "reject", "modify"):
            raise WorkflowError(f"unknown decision: {decision}")
        expected = (
            Phase.AWAITING_CLASSIFICATION_REVIEW if checkpoint == 1
            else Phase.AWAITING_RULE_REVIEW
        )
        if checkpoint not in (1, 2) or state.phase is not expected:
            raise WorkflowStateError(
                f"checkpoint {checkpoint} decision invalid in phase {state.phase.value}"
            )
        state.human_decisions.append(
            {
                "checkpoint": checkpoint,
                "decision": decision,
                "editor": editor,
                "payload": payload or {},
                "timestamp": format_timestamp(utc_now()),
            }
        )
        self._record_t6(state, checkpoint)

        if decision == "reject":
            state.transition(Phase.ABORTED)
            state.log_event("decision", f"checkpoint {checkpoint}: rejected by {editor}")
            self._persist(state)
            return state

        if checkpoint == 1:
            if decision == "modify":
                state.classification = dict(payload or {})
                state.log_event("decision", f"classification modified by {editor}")
            label_value = (payload or {}).get("label") if decision == "modify" else None
            if label_value is None:
                label_value = (state.detection or {}).get("label", "Unknown")
            if label_value == CanonicalThreatLabel.BENIGN.value:
                state.transition(Phase.COMPLETED_BENIGN)
                state.log_event("decision", "approved as benign; pipeline terminated")
                self._persist(state)
                return state
            state.transition(Phase.ANALYZING)
            self._persist(state)
            state = self.run_log_analysis(state)
            if state.phase is Phase.ERROR:
                return state
            state.transition(Phase.PROPOSING_RULES)
            self._persist(state)
            state = self.propose_rules(state)
            if state.phase is Phase.ERROR:
                return state
            state.transition(Phase.AWAITING_RULE_REVIEW)
            state.phase_timings["checkpoint2_entered"] = time.perf_counter() * 1000.0
            state.log_event("checkpoint", "awaiting rule review")
            self._persist(state)
            return state

        # checkpoint 2
        if decision == "modify":
            edited = (payload or {}).get("rules", [])
            revalidated = []
            invalid = []
            for item in edited:
                try:
                    rule = postprocess(item["text"], item.get("format", self.rule_format),
                                       sid_counter=self.sid_counter)
                except (ExtractionError, KeyError) as exc:
                    invalid.append(str(exc))
                    continue
                report = validate(rule)
                if not report.valid:
                    invalid.append("; ".join(f.message for f in report.errors()))
                    continue
                revalidated.append({"rule": rule.to_dict(), "report": report.to_dict()})
            if invalid or not revalidated:
                state.log_event(
                    "validation_failed",
                    f"edited rules rejected: {invalid or ['no rules supplied']}",
                )
                self._persist(state)
                return state  # stays in Awaiting_Rule_Review
            state.proposed_rules = revalidated
            state.log_event("decision", f"rules modified by {editor}")

        state.transition(Phase.DEPLOYING)
        self._persist(state)
        deployed = []
        for entry in state.proposed_rules:
            report_valid = entry.get("report", {}).get("valid", False)
            if not report_valid:
                continue
            rule_id = f"rule-{uuid.uuid4().hex[:10]}"
            self.store.put_rule(rule_id, entry["rule"]["format"],
                                {"rule_id": rule_id, **entry["rule"]},
                                workflow_id=state.workflow_id)
            deployed.append(rule_id)
        state.deployed_rule_ids = deployed
        state.log_event("deploy", f"persisted {len(deployed)} rule(s)")
        state.transition(Phase.COMPLETED)
        self._persist(state)
        return state

    @staticmethod
    def _record_t6(state: WorkflowState, checkpoint: int) -> None:
        # analyst dwell time; reported only, never asserted
        key = f"checkpoint{checkpoint}_entered"
        entered = state.phase_timings.pop(key, None)
        if entered is not None:
            state.phase_timings[f"T6_checkpoint{checkpoint}"] = max(
                time.perf_counter() * 1000.0 - entered, 0.0
            )

    # -- reconstruction handoff ---------------------------------------------

    def handoff_to_reconstructor(self, workflow_id: str) -> Dict[str, Any]:
        """Serialize a Completed workflow into a scan manifest.

        Only Completed qualifies: benign terminations carry no attack to
        reconstruct. The manifest feeds the scanner without re-entry.
        """
        state = self.get(workflow_id)
        if state.phase is not Phase.COMPLETED:
            raise WorkflowStateError(
                f"reconstruction handoff requires Completed, not {state.phase.value}"
            )
        events: List[Dict[str, Any]] = []
        base_time = state.created_at
        detection = state.detection or {}
        events.append(
            {
                "timestamp": base_time,
                "source_type": "workflow",
                "message": (state.classification or {}).get(
                    "narrative", f"detection {detection.get('label', 'Unknown')}"
                ),
                "alert_name": detection.get("label"),
                "severity": 4 if detection.get("label") not in (None, "Benign") else 1,
                "iocs": [i.get("value", "") if isinstance(i, dict) else str(i)
                         for i in (state.log_analysis or {}).get("iocs", [])],
                "confidence": detection.get("confidence", 0.5),
            }
        )
        for entry in state.log_entries:
            events.append(
                {
                    "timestamp": entry.get("timestamp", base_time),
                    "source_type": "workflow",
                    "message": str(entry.get("message", json.dumps(entry, default=str))),
                    "src_ip": (entry.get("metadata") or {}).get("src_ip"),
                    "dst_ip": (entry.get("metadata") or {}).get("dst_ip"),
                    "confidence": 0.5,
                }
            )
        for rule_id in state.deployed_rule_ids:
            rule = self.store.get_rule(rule_id)
            events.append(
                {
                    "timestamp": state.updated_at,
                    "source_type": "workflow",
                    "message": f"deployed rule {rule_id}: {rule.get('text', '')[:160]}",
                    "alert_name": rule_id,
                    "confidence": 0.9,
                }
            )
        return {
            "workflow_id": workflow_id,
            "sources": [
                {"format": "workflow_json", "content": json.dumps({"events": events})}
            ],
        }
