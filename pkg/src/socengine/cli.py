"""Operator command line.

Thin client over the library modules and the service core: ingest and
correlate events, run reconstructions, post-process/validate/adapt rules,
manage policies, query the audit trail, drive workflows, and serve the
HTTP API. ``--json`` switches every command to machine-readable output.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import click

from .correlation import CorrelationConfig, correlate_batch, summarize
from .export import ScenarioStore
from .governance import GovernancePolicy, PolicyLifecycleError
from .reconstruct import reconstruct
from .rules import (
    DetectionRule,
    ExtractionError,
    RuleFormat,
    SidCounter,
    adapt_snort2,
    adapt_suricata6,
    adapt_yara,
    parse_ids_rule,
    parse_yara_rule,
    postprocess,
    test_harness,
    validate,
)
from .scanner import ScanConfig, load_manifest
from .service import SocService, TenantConfig
from .store import NotFoundError
from .uicr import UICR, format_timestamp

_service_cache: Dict[str, SocService] = {}


def _service(ctx: click.Context) -> SocService:
    root = ctx.obj["store_root"]
    key = str(root)
    if key not in _service_cache:
        service = SocService(store_root=root, dev_mode=True)
        _service_cache[key] = service
    service = _service_cache[key]
    tenant = ctx.obj["tenant"]
    service.add_tenant(TenantConfig(tenant_id=tenant, display_name=tenant))
    return service


def _emit(ctx: click.Context, data: Any, human: Optional[str] = None) -> None:
    if ctx.obj["json"] or human is None:
        click.echo(json.dumps(data, indent=2, sort_keys=True, default=str))
    else:
        click.echo(human)


def _load_config(path: Optional[Path]) -> Dict[str, Any]:
    """Config file defaults; flags and env vars take precedence."""
    candidates = [path] if path else [Path("socengine.json"),
                                      Path.home() / ".socengine" / "config.json"]
    for candidate in candidates:
        if candidate and candidate.exists():
            return json.loads(candidate.read_text())
    return {}


@click.group()
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None,
              envvar="SOCENGINE_CONFIG", help="JSON config file with defaults.")
@click.option("--store-root", type=click.Path(path_type=Path), default=None,
              envvar="SOCENGINE_STORE_ROOT", help="Directory holding tenant stores.")
@click.option("--tenant", default=None, envvar="SOCENGINE_TENANT")
@click.option("--json", "json_out", is_flag=True, help="Machine-readable output.")
@click.pass_context
def main(ctx: click.Context, config_path: Optional[Path], store_root: Optional[Path],
         tenant: Optional[str], json_out: bool) -> None:
    """Governance-aware SOC engine."""
    config = _load_config(config_path)
    for key, value in config.get("engine_paths", {}).items():
        import os

        os.environ.setdefault(f"SOCENGINE_{key.upper()}_BIN", str(value))
    ctx.ensure_object(dict)
    ctx.obj.update({
        "store_root": store_root or Path(config.get("store_root",
                                                    Path.home() / ".socengine")),
        "tenant": tenant or config.get("tenant", "default"),
        "json": json_out,
        "dev_mode": bool(config.get("dev_mode", True)),
    })


# -- correlation ------------------------------------------------------------

@main.command()
@click.option("--in", "input_path", type=click.Path(exists=True, path_type=Path),
              required=True, help="JSON-lines file of partial incident records.")
@click.option("--window", type=float, default=300.0, show_default=True)
@click.pass_context
def correlate(ctx: click.Context, input_path: Path, window: float) -> None:
    """Correlate a batch of partial records into grouped incidents."""
    partials = [
        UICR.from_json(line)
        for line in input_path.read_text().splitlines()
        if line.strip()
    ]
    incidents = correlate_batch(partials, CorrelationConfig(time_window_seconds=window))
    service = _service(ctx)
    store = service.store_for(ctx.obj["tenant"])
    for incident in incidents:
        store.put_incident(incident.incident_id, format_timestamp(incident.created_at),
                           format_timestamp(incident.updated_at), incident.to_dict())
    _emit(ctx, [i.to_dict() for i in incidents],
          "\n".join(summarize(i) for i in incidents))


@main.command()
@click.option("--in", "input_path", type=click.Path(exists=True, path_type=Path),
              required=True, help="Manifest of {path, format} sources.")
@click.pass_context
def ingest(ctx: click.Context, input_path: Path) -> None:
    """Scan a source manifest into normalized security events."""
    from .scanner import scan

    sources = load_manifest(input_path)
    result = scan(sources, ScanConfig())
    _emit(ctx, {"events": [e.to_dict() for e in result.events],
                "errors": [str(e) for e in result.errors]},
          f"{len(result.events)} events ({len(result.errors)} parse errors)")


@main.command("reconstruct")
@click.option("--manifest", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--top-n", type=int, default=100, show_default=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None,
              help="Directory for HTML/STIX/JSON exports.")
@click.option("--category", default="Unknown", show_default=True)
@click.option("--correlator", "correlator_path",
              type=click.Path(exists=True, path_type=Path), default=None,
              help="JSON file overriding any correlator constant "
                   "(tau_seconds, w_min, decay, louvain_resolution, bayes.*).")
@click.pass_context
def reconstruct_cmd(ctx: click.Context, manifest: Path, top_n: int,
                    out_dir: Optional[Path], category: str,
                    correlator_path: Optional[Path]) -> None:
    """Run the full three-phase reconstruction over a source manifest."""
    from .scenario import BayesParams, CorrelatorConfig

    service = _service(ctx)
    sources = load_manifest(manifest)
    store = ScenarioStore(service.store_for(ctx.obj["tenant"]))
    correlator_config = None
    if correlator_path is not None:
        raw = json.loads(correlator_path.read_text())
        bayes = BayesParams(**raw.pop("bayes", {}))
        correlator_config = CorrelatorConfig(bayes=bayes, **raw)
    result = reconstruct(
        sources,
        scan_config=ScanConfig(top_n=top_n),
        correlator_config=correlator_config,
        provider=service.hypothesis_provider,
        category=category,
        scenario_store=store,
        out_dir=out_dir,
    )
    _emit(ctx, result.summary(),
          f"{len(result.scenarios)} scenario(s) from {len(result.events)} events; "
          f"best score "
          f"{result.scenarios[0].bayesian_score:.3f}" if result.scenarios else
          "no scenarios")


@main.command()
@click.option("--scenario", "scenario_id", required=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.pass_context
def export(ctx: click.Context, scenario_id: str, out_dir: Path) -> None:
    """Export one stored scenario as HTML, STIX 2.1, and JSON files."""
    from .export import export_json, export_stix

    service = _service(ctx)
    store = ScenarioStore(service.store_for(ctx.obj["tenant"]))
    try:
        scenario = store.get(scenario_id)
    except NotFoundError as exc:
        raise click.ClickException(str(exc))
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{scenario_id}.stix.json").write_text(
        json.dumps(export_stix(scenario), indent=2, sort_keys=True))
    (out_dir / f"{scenario_id}.json").write_text(export_json(scenario))
    _emit(ctx, {"exported": scenario_id, "dir": str(out_dir)},
          f"exported {scenario_id} to {out_dir}")


# -- rules -------------------------------------------------------------------

@main.group()
def rule() -> None:
    """Post-process, validate, and adapt detection rules."""


def _read_rule_text(file: Optional[Path]) -> str:
    if file is not None:
        return Path(file).read_text()
    return sys.stdin.read()


@rule.command("postprocess")
@click.option("--format", "fmt", type=click.Choice([f.value for f in RuleFormat]),
              required=True)
@click.option("--file", type=click.Path(exists=True, path_type=Path), default=None)
@click.pass_context
def rule_postprocess(ctx: click.Context, fmt: str, file: Optional[Path]) -> None:
    """Clean raw generator output into a normalized rule."""
    counter = SidCounter(ctx.obj["store_root"] / "sid-counter.json")
    try:
        result = postprocess(_read_rule_text(file), fmt, sid_counter=counter)
    except ExtractionError as exc:
        raise click.ClickException(str(exc))
    _emit(ctx, result.to_dict(), result.text)


@rule.command("validate")
@click.option("--format", "fmt", type=click.Choice([f.value for f in RuleFormat]),
              required=True)
@click.option("--file", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--engine", default=None,
              help="Optional engine binary for configuration-check mode.")
@click.pass_context
def rule_validate(ctx: click.Context, fmt: str, file: Optional[Path],
                  engine: Optional[str]) -> None:
    """Statically validate a rule; exit 0 only when valid."""
    text = _read_rule_text(file)
    fmt_enum = RuleFormat(fmt)
    try:
        parsed = parse_yara_rule(text) if fmt_enum is RuleFormat.YARA else parse_ids_rule(text, fmt_enum)
    except ExtractionError as exc:
        _emit(ctx, {"valid": False, "findings": [{"severity": "error", "message": str(exc)}]},
              f"invalid: {exc}")
        sys.exit(1)
    report = validate(parsed)
    payload: Dict[str, Any] = {"report": report.to_dict()}
    if engine:
        harness = test_harness(parsed, engine_path=engine)
        payload["engine"] = {"status": harness.status, "stderr": harness.stderr[-500:]}
    _emit(ctx, payload,
          ("valid" if report.valid else "invalid") +
          "".join(f"\n  [{f.severity}] {f.message}" for f in report.findings))
    sys.exit(0 if report.valid else 1)


@rule.command("adapt")
@click.option("--format", "fmt", type=click.Choice([f.value for f in RuleFormat]),
              required=True, help="Format of the input rule.")
@click.option("--target", type=click.Choice(["snort2", "suricata6", "yara"]),
              required=True)
@click.option("--file", type=click.Path(exists=True, path_type=Path), default=None)
@click.pass_context
def rule_adapt(ctx: click.Context, fmt: str, target: str, file: Optional[Path]) -> None:
    """Adapt a rule for an older or different engine dialect."""
    text = _read_rule_text(file)
    fmt_enum = RuleFormat(fmt)
    try:
        parsed = parse_yara_rule(text) if fmt_enum is RuleFormat.YARA else parse_ids_rule(text, fmt_enum)
    except ExtractionError as exc:
        raise click.ClickException(str(exc))
    if target == "snort2":
        adapted, findings = adapt_snort2(parsed)
    elif target == "suricata6":
        adapted, findings = adapt_suricata6(parsed)
    else:
        adapted, findings = adapt_yara(parsed)
    _emit(ctx, {"rule": adapted.to_dict(), "findings": [f.to_dict() for f in findings]},
          adapted.text + "".join(f"\n  [{f.severity}] {f.message}" for f in findings))


# -- policies ----------------------------------------------------------------

@main.group()
def policy() -> None:
    """Manage governance policies."""


@policy.command("save")
@click.option("--file", type=click.Path(exists=True, path_type=Path), required=True)
@click.pass_context
def policy_save(ctx: click.Context, file: Path) -> None:
    """Save a policy document as a new draft version."""
    service = _service(ctx)
    manager = service.policy_manager(ctx.obj["tenant"])
    draft = manager.save_draft(GovernancePolicy.from_dict(json.loads(file.read_text())))
    _emit(ctx, draft.to_dict(),
          f"saved draft {draft.policy_id} v{draft.version}")


@policy.command("activate")
@click.argument("policy_id")
@click.pass_context
def policy_activate(ctx: click.Context, policy_id: str) -> None:
    """Activate a draft policy (archives the previous active one)."""
    service = _service(ctx)
    try:
        active = service.policy_manager(ctx.obj["tenant"]).activate(policy_id)
    except PolicyLifecycleError as exc:
        raise click.ClickException(str(exc))
    _emit(ctx, active.to_dict(), f"activated {active.policy_id} v{active.version}")


@policy.command("list")
@click.pass_context
def policy_list(ctx: click.Context) -> None:
    """List all policy versions for the tenant."""
    service = _service(ctx)
    versions = service.policy_manager(ctx.obj["tenant"]).list_versions()
    _emit(ctx, versions,
          "\n".join(f"{v['policy_id']} v{v['version']}: {v['status']}" for v in versions)
          or "no policies")


# -- audit -------------------------------------------------------------------

@main.group()
def audit() -> None:
    """Query the audit trail."""


@audit.command("query")
@click.option("--tool", "tool_name", default=None)
@click.option("--caller", default=None)
@click.option("--status", default=None)
@click.option("--blocked", type=int, default=None)
@click.option("--since", default=None)
@click.option("--until", default=None)
@click.option("--csv", "as_csv", is_flag=True, help="Full export as CSV.")
@click.pass_context
def audit_query(ctx: click.Context, tool_name: Optional[str], caller: Optional[str],
                status: Optional[str], blocked: Optional[int],
                since: Optional[str], until: Optional[str], as_csv: bool) -> None:
    """Filterable audit log query for the tenant."""
    service = _service(ctx)
    log = service.audit_for(ctx.obj["tenant"])
    if as_csv:
        click.echo(log.export_csv(), nl=False)
        return
    records = log.query(
        tool_name=tool_name, caller=caller, status=status, blocked=blocked,
        since=since, until=until,
    )
    _emit(ctx, [r.to_dict() for r in records],
          "\n".join(
              f"{r.id:>5} {r.timestamp} {r.tool_name:<22} {r.caller:<12} "
              f"{r.status:<8} {r.duration_ms:8.2f}ms"
              for r in records
          ) or "no records")


# -- workflows -----------------------------------------------------------------

@main.group()
def workflow() -> None:
    """Drive the agentic pipeline."""


@workflow.command("start")
@click.option("--features", "features_json", required=True,
              help="JSON object of packet features.")
@click.option("--logs", "logs_json", default=None, help="JSON array of log entries.")
@click.pass_context
def workflow_start(ctx: click.Context, features_json: str, logs_json: Optional[str]) -> None:
    """Start a pipeline run; lands at the first human checkpoint."""
    service = _service(ctx)
    user = service.auth()
    result = service.invoke_tool(user, ctx.obj["tenant"], "start_agent_pipeline", {
        "features": json.loads(features_json),
        "logs": json.loads(logs_json) if logs_json else [],
    })
    wf = result["workflow"]
    _emit(ctx, wf, f"workflow {wf['workflow_id']} in phase {wf['phase']}")


@workflow.command("status")
@click.argument("workflow_id")
@click.pass_context
def workflow_status(ctx: click.Context, workflow_id: str) -> None:
    """Show a workflow's current phase and record."""
    service = _service(ctx)
    user = service.auth()
    try:
        result = service.invoke_tool(user, ctx.obj["tenant"], "get_workflow_status",
                                     {"workflow_id": workflow_id})
    except Exception as exc:
        raise click.ClickException(str(exc))
    wf = result["workflow"]
    _emit(ctx, wf, f"workflow {workflow_id}: {wf['phase']}")


@workflow.command("decide")
@click.argument("workflow_id")
@click.option("--checkpoint", type=click.Choice(["1", "2"]), required=True)
@click.option("--decision", type=click.Choice(["approve", "reject", "modify"]),
              required=True)
@click.option("--payload", "payload_json", default=None)
@click.pass_context
def workflow_decide(ctx: click.Context, workflow_id: str, checkpoint: str,
                    decision: str, payload_json: Optional[str]) -> None:
    """Apply a human checkpoint decision."""
    service = _service(ctx)
    user = service.auth()
    try:
        result = service.decide_workflow(
            user, ctx.obj["tenant"], workflow_id, int(checkpoint), decision,
            json.loads(payload_json) if payload_json else None,
        )
    except Exception as exc:
        raise click.ClickException(str(exc))
    wf = result["workflow"]
    _emit(ctx, wf, f"workflow {workflow_id} now in phase {wf['phase']}")


# -- server --------------------------------------------------------------------

@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8787, show_default=True)
@click.option("--no-dev-mode", is_flag=True,
              help="Require authentication instead of treating requests as admin.")
@click.pass_context
def serve(ctx: click.Context, host: str, port: int, no_dev_mode: bool) -> None:
    """Run the HTTP service (JSON-RPC, REST, SSE)."""
    import uvicorn

    from .service import create_app

    dev_mode = ctx.obj["dev_mode"] and not no_dev_mode
    service = SocService(store_root=ctx.obj["store_root"], dev_mode=dev_mode)
    service.add_tenant(TenantConfig(tenant_id=ctx.obj["tenant"],
                                    display_name=ctx.obj["tenant"]))
    uvicorn.run(create_app(service), host=host, port=port, log_level="info")


@main.command("rpc-stdio")
@click.pass_context
def rpc_stdio(ctx: click.Context) -> None:
    """Secondary transport: JSON-RPC 2.0 over stdin/stdout, one message
    per line, for local pipe-based clients."""
    service = _service(ctx)
    user = service.auth()
    tenant = ctx.obj["tenant"]
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError:
            click.echo(json.dumps({"jsonrpc": "2.0", "id": None,
                                   "error": {"code": -32700, "message": "parse error"}}))
            continue
        click.echo(json.dumps(service.rpc(user, tenant, request), sort_keys=True))


if __name__ == "__main__":
    main()
