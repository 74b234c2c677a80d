"""Detection-rule post-processing, static validation, and cross-dialect
adaptation for Snort 2/3, Suricata, and Yara.

Post-processing repairs the artefacts LLM generators typically leave
behind (markdown fences, prose preambles, unbalanced parentheses, missing
sid/rev options); validation checks header structure, option syntax, and
keyword membership against a shipped 130-entry whitelist; the adapters
rewrite rules for older engine dialects. Rule generation itself lives
behind the workflow provider interface, not here.
"""

from __future__ import annotations

import json
import logging
import os
import re
import shutil
import subprocess
import tempfile
import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

logger = logging.getLogger(__name__)

__all__ = [
    "RuleFormat",
    "IDSHeader",
    "DetectionRule",
    "Finding",
    "ValidationReport",
    "ExtractionError",
    "HarnessError",
    "HarnessResult",
    "SidCounter",
    "postprocess",
    "parse_ids_rule",
    "parse_yara_rule",
    "split_options",
    "validate",
    "adapt_snort2",
    "adapt_suricata6",
    "adapt_yara",
    "test_harness",
    "KEYWORD_WHITELIST",
]


class RuleFormat(str, Enum):
    SNORT2 = "snort2"
    SNORT3 = "snort3"
    SURICATA = "suricata"
    YARA = "yara"


class ExtractionError(ValueError):
    """No rule-shaped content could be extracted from the raw input."""


class HarnessError(RuntimeError):
    """The external engine crashed (distinct from rejecting the rule)."""


IDS_ACTIONS = ("alert", "drop", "pass", "reject", "log", "activate", "dynamic", "sdrop")
IDS_DIRECTIONS = ("->", "<>")

_ACTION_RE = re.compile(r"^\s*(?:" + "|".join(IDS_ACTIONS) + r")\b")
_YARA_START_RE = re.compile(r"^\s*(?:private\s+|global\s+)*rule\s+\w", re.IGNORECASE)
_FENCE_RE = re.compile(r"^\s*```")


def _load_keywords() -> frozenset:
    text = resources.files("socengine.data").joinpath("rule_keywords.json").read_text()
    return frozenset(json.loads(text)["keywords"])


KEYWORD_WHITELIST = _load_keywords()


@dataclass(frozen=True)
class IDSHeader:
    action: str
    protocol: str
    src: str
    src_port: str
    direction: str
    dst: str
    dst_port: str


@dataclass(frozen=True)
class Finding:
    code: str
    severity: str  # "error" | "warning" | "info"
    message: str
    span: str = ""

    def to_dict(self) -> Dict[str, str]:
        return {"code": self.code, "severity": self.severity,
                "message": self.message, "span": self.span}


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    findings: Tuple[Finding, ...] = ()

    def __post_init__(self) -> None:
        has_error = any(f.severity == "error" for f in self.findings)
        object.__setattr__(self, "valid", not has_error)

    def errors(self) -> List[Finding]:
        return [f for f in self.findings if f.severity == "error"]

    def to_dict(self) -> Dict[str, object]:
        return {"valid": self.valid, "findings": [f.to_dict() for f in self.findings]}


@dataclass(frozen=True)
class DetectionRule:
    """A rule in normalized text form plus its parsed view.

    For IDS formats ``header``/``options`` hold the parse; for Yara the
    ``yara_*`` fields do. ``render()`` regenerates text that parses back to
    the same structure.
    """

    format: RuleFormat
    text: str
    header: Optional[IDSHeader] = None
    options: Tuple[Tuple[str, Optional[str]], ...] = ()
    yara_name: Optional[str] = None
    yara_sections: Tuple[str, ...] = ()

    def option(self, key: str) -> Optional[str]:
        for name, value in self.options:
            if name == key:
                return value
        return None

    def has_option(self, key: str) -> bool:
        return any(name == key for name, _ in self.options)

    def render(self) -> str:
        if self.format is RuleFormat.YARA or self.header is None:
            return self.text
        opts = " ".join(
            f"{k}:{v};" if v is not None else f"{k};" for k, v in self.options
        )
        h = self.header
        return (
            f"{h.action} {h.protocol} {h.src} {h.src_port} {h.direction} "
            f"{h.dst} {h.dst_port} ({opts})"
        )

    def to_dict(self) -> Dict[str, object]:
        data: Dict[str, object] = {"format": self.format.value, "text": self.text}
        if self.header is not None:
            data["header"] = vars(self.header)
            data["options"] = [[k, v] for k, v in self.options]
        if self.yara_name is not None:
            data["yara_name"] = self.yara_name
            data["yara_sections"] = list(self.yara_sections)
        return data


# ---------------------------------------------------------------------------
# Option and header parsing
# ---------------------------------------------------------------------------

def split_options(blob: str) -> List[Tuple[str, Optional[str]]]:
    """Split a rule option body on semicolons outside quoted strings."""
    options: List[Tuple[str, Optional[str]]] = []
    current: List[str] = []
    in_quotes = False
    escaped = False
    for ch in blob:
        if escaped:
            current.append(ch)
            escaped = False
            continue
        if ch == "\\":
            current.append(ch)
            escaped = True
            continue
        if ch == '"':
            in_quotes = not in_quotes
            current.append(ch)
            continue
        if ch == ";" and not in_quotes:
            token = "".join(current).strip()
            if token:
                options.append(_split_option(token))
            current = []
            continue
        current.append(ch)
    tail = "".join(current).strip()
    if tail:
        options.append(_split_option(tail))
    return options


def _split_option(token: str) -> Tuple[str, Optional[str]]:
    in_quotes = False
    for idx, ch in enumerate(token):
        if ch == '"':
            in_quotes = not in_quotes
        elif ch == ":" and not in_quotes:
            return token[:idx].strip(), token[idx + 1:].strip()
    return token.strip(), None


_HEADER_RE = re.compile(
    r"^(?P<action>\S+)\s+(?P<protocol>\S+)\s+(?P<src>\S+)\s+(?P<src_port>\S+)\s+"
    r"(?P<direction>->|<>|<-)\s+(?P<dst>\S+)\s+(?P<dst_port>\S+)\s*"
    r"(?:\((?P<options>.*)\))?\s*$",
    re.DOTALL,
)


def parse_ids_rule(text: str, fmt: RuleFormat) -> DetectionRule:
    flat = " ".join(text.split())
    match = _HEADER_RE.match(flat)
    if not match:
        raise ExtractionError(f"no IDS rule header found in: {flat[:120]!r}")
    header = IDSHeader(
        action=match["action"],
        protocol=match["protocol"],
        src=match["src"],
        src_port=match["src_port"],
        direction=match["direction"],
        dst=match["dst"],
        dst_port=match["dst_port"],
    )
    options = tuple(split_options(match["options"])) if match["options"] else ()
    rule = DetectionRule(format=fmt, text=flat, header=header, options=options)
    return replace(rule, text=rule.render())


_YARA_SECTION_RE = re.compile(r"^\s*(meta|strings|condition)\s*:", re.MULTILINE)


def parse_yara_rule(text: str) -> DetectionRule:
    match = re.search(r"\brule\s+(\w+)", text)
    if not match:
        raise ExtractionError("no yara rule declaration found")
    sections = tuple(m.group(1) for m in _YARA_SECTION_RE.finditer(text))
    return DetectionRule(
        format=RuleFormat.YARA,
        text=text.strip(),
        yara_name=match.group(1),
        yara_sections=sections,
    )


# ---------------------------------------------------------------------------
# Post-processing
# ---------------------------------------------------------------------------

class SidCounter:
    """Monotone sid source starting above 1,000,000.

    With a ``path`` the next value persists across processes so re-runs
    never hand out colliding sids.
    """

    START = 1_000_001

    def __init__(self, path: "str | Path | None" = None):
        self._path = Path(path) if path else None
        self._lock = threading.Lock()
        self._next = self.START
        if self._path and self._path.exists():
            try:
                self._next = max(json.loads(self._path.read_text())["next"], self.START)
            except (ValueError, KeyError):
                logger.warning("sid counter state unreadable; restarting at %d", self.START)

    def take(self) -> int:
        with self._lock:
            value = self._next
            self._next += 1
            if self._path:
                self._path.parent.mkdir(parents=True, exist_ok=True)
                self._path.write_text(json.dumps({"next": self._next}))
            return value


_DEFAULT_SID_COUNTER = SidCounter()


def _strip_fences_and_preamble(raw: str, fmt: RuleFormat) -> str:
    lines = [line for line in raw.replace("\r\n", "\n").split("\n") if not _FENCE_RE.match(line)]
    start_re = _YARA_START_RE if fmt is RuleFormat.YARA else _ACTION_RE
    for idx, line in enumerate(lines):
        if start_re.match(line):
            return "\n".join(lines[idx:])
    raise ExtractionError(f"no rule-shaped content found for format {fmt.value}")


def _balance(text: str, open_ch: str, close_ch: str) -> Tuple[str, int]:
    depth = 0
    in_quotes = False
    escaped = False
    for ch in text:
        if escaped:
            escaped = False
            continue
        if ch == "\\":
            escaped = True
            continue
        if ch == '"':
            in_quotes = not in_quotes
            continue
        if in_quotes:
            continue
        if ch == open_ch:
            depth += 1
        elif ch == close_ch:
            depth -= 1
    if depth > 0:
        # repair only ever appends closers, never deletes content
        return text + close_ch * depth, depth
    return text, 0


def _extract_ids_span(text: str) -> str:
    """First rule-shaped span: from the action token to the balanced
    closing paren (or end of line for header-only rules)."""
    depth = 0
    in_quotes = False
    escaped = False
    end = None
    saw_paren = False
    for idx, ch in enumerate(text):
        if escaped:
            escaped = False
            continue
        if ch == "\\":
            escaped = True
            continue
        if ch == '"':
            in_quotes = not in_quotes
            continue
        if in_quotes:
            continue
        if ch == "(":
            depth += 1
            saw_paren = True
        elif ch == ")":
            depth -= 1
            if depth == 0 and saw_paren:
                end = idx + 1
                break
    if end is not None:
        return text[:end]
    if saw_paren:
        return text  # unbalanced; caller repairs
    return text.split("\n", 1)[0]


def postprocess(
    raw_llm_output: str,
    fmt: "RuleFormat | str",
    sid_counter: Optional[SidCounter] = None,
) -> DetectionRule:
    """Normalize raw generator output into a parsed DetectionRule.

    Strips markdown fences and preamble prose, extracts the first
    rule-shaped span, balances parentheses (append-only), and injects
    missing sid (monotone counter above 1,000,000) and rev:1 options.
    Idempotent: running the output through again changes nothing.
    """
    fmt = RuleFormat(fmt)
    counter = sid_counter or _DEFAULT_SID_COUNTER
    body = _strip_fences_and_preamble(raw_llm_output, fmt)

    if fmt is RuleFormat.YARA:
        balanced, _ = _balance(body, "{", "}")
        return parse_yara_rule(balanced)

    span = _extract_ids_span(" ".join(body.split()))
    balanced, _ = _balance(span, "(", ")")
    rule = parse_ids_rule(balanced, fmt)
    if rule.options:
        options = list(rule.options)
        if not rule.has_option("sid"):
            options.append(("sid", str(counter.take())))
        if not rule.has_option("rev"):
            options.append(("rev", "1"))
        rule = replace(rule, options=tuple(options))
        rule = replace(rule, text=rule.render())
    return rule


# ---------------------------------------------------------------------------
# Static validation
# ---------------------------------------------------------------------------

_PORT_RE = re.compile(r"^!?(?:any|\$\w+|\[[^\]]*\]|\d{1,5}(?::\d{0,5})?|:\d{1,5})$")


def _validate_ids(rule: DetectionRule) -> List[Finding]:
    findings: List[Finding] = []
    header = rule.header
    if header is None:
        findings.append(Finding("header.missing", "error", "rule has no parseable header"))
        return findings
    if header.action not in IDS_ACTIONS:
        findings.append(
            Finding("header.action", "error", f"unknown action: {header.action}", header.action)
        )
    if header.direction not in IDS_DIRECTIONS:
        findings.append(
            Finding("header.direction", "error",
                    f"invalid direction operator: {header.direction}", header.direction)
        )
    for label, port in (("src_port", header.src_port), ("dst_port", header.dst_port)):
        if not _PORT_RE.match(port):
            findings.append(
                Finding("header.port", "error", f"invalid {label}: {port}", port)
            )
        else:
            plain = port.lstrip("!")
            if plain.isdigit() and not 0 <= int(plain) <= 65535:
                findings.append(
                    Finding("header.port", "error", f"{label} out of range: {port}", port)
                )
    balanced_text, deficit = _balance(rule.text, "(", ")")
    if deficit:
        findings.append(
            Finding("options.parens", "error", f"{deficit} unclosed parenthesis(es)")
        )
    if not rule.options:
        findings.append(Finding("options.empty", "warning", "rule has no option body"))
        return findings
    if not rule.has_option("sid"):
        findings.append(Finding("options.sid", "error", "missing required option: sid"))
    else:
        sid_value = rule.option("sid")
        if not (sid_value or "").isdigit():
            findings.append(
                Finding("options.sid", "error", f"sid is not numeric: {sid_value}")
            )
    if not rule.has_option("rev"):
        findings.append(Finding("options.rev", "warning", "missing rev option"))
    unknown_severity = "error" if rule.format is RuleFormat.SNORT2 else "warning"
    for key, _value in rule.options:
        if key not in KEYWORD_WHITELIST:
            findings.append(
                Finding(
                    "options.keyword",
                    unknown_severity,
                    f"option keyword not in whitelist: {key}",
                    key,
                )
            )
    if rule.format is RuleFormat.SNORT2:
        for key, _value in rule.options:
            if "." in key:
                findings.append(
                    Finding("snort2.sticky", "error",
                            f"sticky buffer unsupported by this dialect: {key}", key)
                )
    if rule.format is RuleFormat.SNORT3 and rule.has_option("uricontent"):
        findings.append(
            Finding("snort3.deprecated", "warning", "uricontent is deprecated; use http_uri")
        )
    return findings


def _validate_yara(rule: DetectionRule) -> List[Finding]:
    findings: List[Finding] = []
    if not rule.yara_name:
        findings.append(Finding("yara.name", "error", "missing rule declaration"))
    sections = set(rule.yara_sections)
    if "condition" not in sections:
        findings.append(Finding("yara.condition", "error", "missing condition section"))
    for optional in ("meta", "strings"):
        if optional not in sections:
            findings.append(
                Finding(f"yara.{optional}", "warning", f"missing {optional} section")
            )
    _, deficit = _balance(rule.text, "{", "}")
    if deficit:
        findings.append(Finding("yara.braces", "error", f"{deficit} unclosed brace(s)"))
    return findings


def validate(rule: DetectionRule) -> ValidationReport:
    """Static syntax validation; findings carry everything, never raises."""
    try:
        if rule.format is RuleFormat.YARA:
            findings = _validate_yara(rule)
        else:
            findings = _validate_ids(rule)
    except Exception as exc:  # arbitrary byte strings must not crash the validator
        logger.exception("validator fault")
        findings = [Finding("validator.fault", "error", f"validator fault: {exc}")]
    return ValidationReport(valid=True, findings=tuple(findings))


# ---------------------------------------------------------------------------
# Cross-dialect adaptation
# ---------------------------------------------------------------------------

PROTOCOL_DOWNGRADES = {
    "dns": "udp",
    "http": "tcp",
    "tls": "tcp",
    "smb": "tcp",
    "ssh": "tcp",
}

#: Suricata sticky buffers with a documented Snort 2 content-modifier form.
STICKY_TO_SNORT2_MODIFIER = {
    "http.uri": "http_uri",
    "http.uri.raw": "http_raw_uri",
    "http.header": "http_header",
    "http.header.raw": "http_raw_header",
    "http.cookie": "http_cookie",
    "http.method": "http_method",
    "http.stat_code": "http_stat_code",
    "http.stat_msg": "http_stat_msg",
}

#: Snort 3 sticky-buffer tokens that become post-content modifiers in Snort 2.
SNORT3_STICKY_TOKENS = {
    "http_uri", "http_raw_uri", "http_header", "http_raw_header",
    "http_cookie", "http_raw_cookie", "http_method", "http_stat_code",
    "http_stat_msg", "http_client_body",
}


def adapt_snort2(rule: DetectionRule) -> Tuple[DetectionRule, List[Finding]]:
    """Downgrade a Suricata or Snort 3 rule for a Snort 2 engine.

    App-layer protocols map to their transport equivalents; sticky buffers
    with a documented modifier form are converted, the rest are stripped
    with a warning finding.
    """
    if rule.format not in (RuleFormat.SURICATA, RuleFormat.SNORT3):
        raise ValueError("adapt_snort2 expects a suricata or snort3 rule")
    if rule.header is None:
        raise ValueError("cannot adapt a rule without a parsed header")
    findings: List[Finding] = []
    header = rule.header
    proto = header.protocol.lower()
    if proto in PROTOCOL_DOWNGRADES:
        header = replace(header, protocol=PROTOCOL_DOWNGRADES[proto])
        findings.append(
            Finding("adapt.protocol", "info",
                    f"protocol {proto} mapped to {header.protocol}")
        )

    options: List[Tuple[str, Optional[str]]] = []
    pending_modifier: Optional[str] = None
    for key, value in rule.options:
        is_sticky = key in STICKY_TO_SNORT2_MODIFIER or (
            rule.format is RuleFormat.SNORT3 and value is None and key in SNORT3_STICKY_TOKENS
        )
        if is_sticky:
            modifier = STICKY_TO_SNORT2_MODIFIER.get(key, key)
            if pending_modifier is not None:
                findings.append(
                    Finding("adapt.sticky", "warning",
                            f"dropped stacked sticky buffer: {pending_modifier}")
                )
            pending_modifier = modifier
            continue
        if "." in key:
            findings.append(
                Finding("adapt.sticky", "warning",
                        f"stripped keyword without a snort2 analogue: {key}", key)
            )
            continue
        options.append((key, value))
        if key == "content" and pending_modifier is not None:
            options.append((pending_modifier, None))
            findings.append(
                Finding("adapt.sticky", "info",
                        f"converted sticky buffer to modifier: {pending_modifier}")
            )
            pending_modifier = None
    if pending_modifier is not None:
        findings.append(
            Finding("adapt.sticky", "warning",
                    f"dropped trailing sticky buffer: {pending_modifier}")
        )
    adapted = DetectionRule(
        format=RuleFormat.SNORT2, text="", header=header, options=tuple(options)
    )
    adapted = replace(adapted, text=adapted.render())
    return adapted, findings


#: Transform keywords absent from 6.0.x engines; stripped by the
#: compatibility layer, extensible via configuration.
SURICATA_7X_TRANSFORMS = frozenset(
    {
        "to_lowercase",
        "to_uppercase",
        "dotprefix",
        "header_lowercase",
        "strip_pseudo_headers",
        "from_base64",
        "xor",
    }
)


def adapt_suricata6(rule: DetectionRule) -> Tuple[DetectionRule, List[Finding]]:
    """Remove 7.x-only transform keywords for a 6.0.x Suricata engine."""
    if rule.format is not RuleFormat.SURICATA:
        raise ValueError("adapt_suricata6 expects a suricata rule")
    findings: List[Finding] = []
    options = []
    for key, value in rule.options:
        if key in SURICATA_7X_TRANSFORMS:
            findings.append(
                Finding("adapt.transform", "warning",
                        f"removed 7.x transform keyword: {key}", key)
            )
            continue
        options.append((key, value))
    adapted = replace(rule, options=tuple(options))
    adapted = replace(adapted, text=adapted.render())
    return adapted, findings


_YARA_MODULE_RE = re.compile(r"\b(pe|elf|math)\.")
_YARA_IMPORT_RE = re.compile(r'^\s*import\s+"(\w+)"', re.MULTILINE)


def adapt_yara(rule: DetectionRule) -> Tuple[DetectionRule, List[Finding]]:
    """Prepend import directives for modules the rule body references."""
    if rule.format is not RuleFormat.YARA:
        raise ValueError("adapt_yara expects a yara rule")
    findings: List[Finding] = []
    referenced = sorted(set(_YARA_MODULE_RE.findall(rule.text)))
    imported = set(_YARA_IMPORT_RE.findall(rule.text))
    missing = [m for m in referenced if m not in imported]
    if not missing:
        return rule, findings
    imports = "\n".join(f'import "{m}"' for m in missing)
    adapted = replace(rule, text=f"{imports}\n{rule.text}")
    for module in missing:
        findings.append(
            Finding("adapt.import", "info", f'prepended import "{module}"', module)
        )
    return adapted, findings


# ---------------------------------------------------------------------------
# Engine test harness (optional shell-out)
# ---------------------------------------------------------------------------

ENGINE_ENV_VARS = {
    RuleFormat.SNORT2: "SOCENGINE_SNORT_BIN",
    RuleFormat.SNORT3: "SOCENGINE_SNORT3_BIN",
    RuleFormat.SURICATA: "SOCENGINE_SURICATA_BIN",
    RuleFormat.YARA: "SOCENGINE_YARA_BIN",
}


@dataclass(frozen=True)
class HarnessResult:
    status: str  # "pass" | "fail" | "skipped"
    stderr: str = ""


def test_harness(rule: DetectionRule, engine_path: Optional[str] = None,
                 timeout: float = 30.0) -> HarnessResult:
    """Run the rule through the native engine in configuration-check mode.

    Returns skipped when no engine is configured. An engine crash (missing
    binary mid-run, signal) raises HarnessError; a nonzero verdict is a
    plain fail with the captured stderr.
    """
    binary = engine_path or os.environ.get(ENGINE_ENV_VARS[rule.format], "")
    if not binary:
        return HarnessResult(status="skipped", stderr="no engine configured")
    if not shutil.which(binary) and not Path(binary).exists():
        return HarnessResult(status="skipped", stderr=f"engine not found: {binary}")
    with tempfile.TemporaryDirectory(prefix="socengine-harness-") as tmp:
        rule_path = Path(tmp) / "candidate.rules"
        rule_path.write_text(rule.text + "\n")
        if rule.format is RuleFormat.YARA:
            cmd = [binary, str(rule_path), os.devnull]
        elif rule.format is RuleFormat.SURICATA:
            cmd = [binary, "-T", "-S", str(rule_path), "-l", tmp]
        else:
            cmd = [binary, "-T", "-c", str(rule_path)]
        try:
            proc = subprocess.run(
                cmd, capture_output=True, text=True, timeout=timeout, check=False
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise HarnessError(f"engine invocation failed: {exc}") from exc
    if proc.returncode < 0:
        raise HarnessError(f"engine crashed with signal {-proc.returncode}")
    if proc.returncode == 0:
        return HarnessResult(status="pass", stderr=proc.stderr)
    return HarnessResult(status="fail", stderr=proc.stderr)
