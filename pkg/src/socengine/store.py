"""Per-tenant embedded persistence.

Each tenant owns exactly one SQLite file; every table in it is scoped to
that tenant, which is what physically isolates one client's incidents,
scenarios, rules, workflows, and policies from another's. The audit trail
has its own store class because the service keeps a deployment-level audit
database in addition to the per-tenant ones.
"""

from __future__ import annotations

import hashlib
import json
import sqlite3
import threading
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Tuple

__all__ = ["TenantStore", "StoreError", "NotFoundError"]


class StoreError(RuntimeError):
    """Raised on invalid store operations."""


class NotFoundError(StoreError):
    """Requested record does not exist."""


_SCHEMA = """
CREATE TABLE IF NOT EXISTS incidents (
    incident_id TEXT PRIMARY KEY,
    updated_at  TEXT NOT NULL,
    created_at  TEXT NOT NULL,
    body        TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS scenarios (
    scenario_id TEXT PRIMARY KEY,
    validation  TEXT NOT NULL,
    body        TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS scenario_history (
    id          INTEGER PRIMARY KEY AUTOINCREMENT,
    scenario_id TEXT NOT NULL,
    status      TEXT NOT NULL,
    notes       TEXT NOT NULL,
    timestamp   TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS workflows (
    workflow_id TEXT PRIMARY KEY,
    phase       TEXT NOT NULL,
    body        TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS rules (
    rule_id     TEXT PRIMARY KEY,
    format      TEXT NOT NULL,
    workflow_id TEXT,
    body        TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS policies (
    policy_id   TEXT NOT NULL,
    version     INTEGER NOT NULL,
    status      TEXT NOT NULL,
    body        TEXT NOT NULL,
    PRIMARY KEY (policy_id, version)
);
"""


class TenantStore:
    """One embedded single-file database for one tenant.

    Writes are serialized through an internal lock; SQLite handles
    cross-process safety. Pass ``path=None`` for an in-memory store
    (tests, ephemeral sessions).
    """

    def __init__(self, path: "Path | str | None" = None):
        self.path = str(path) if path is not None else ":memory:"
        if path is not None:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
        self._conn = sqlite3.connect(self.path, check_same_thread=False)
        if path is not None:
            self._conn.execute("PRAGMA journal_mode=WAL")
        self._lock = threading.RLock()
        with self._lock, self._conn:
            self._conn.executescript(_SCHEMA)

    def close(self) -> None:
        self._conn.close()

    # -- generic helpers ----------------------------------------------------

    def _execute(self, sql: str, params: Tuple = ()) -> sqlite3.Cursor:
        with self._lock, self._conn:
            return self._conn.execute(sql, params)

    def _query(self, sql: str, params: Tuple = ()) -> List[sqlite3.Row]:
        with self._lock:
            cur = self._conn.execute(sql, params)
            cur.row_factory = sqlite3.Row
            return cur.fetchall()

    def content_hash(self) -> str:
        """Hash of all domain rows; used by isolation and read-only tests."""
        digest = hashlib.sha256()
        for table in ("incidents", "scenarios", "scenario_history", "workflows", "rules", "policies"):
            with self._lock:
                rows = self._conn.execute(f"SELECT * FROM {table} ORDER BY 1").fetchall()
            digest.update(json.dumps(rows, sort_keys=True, default=str).encode())
        return digest.hexdigest()

    # -- incidents ----------------------------------------------------------

    def put_incident(self, incident_id: str, created_at: str, updated_at: str, body: Dict[str, Any]) -> None:
        self._execute(
            "INSERT OR REPLACE INTO incidents (incident_id, created_at, updated_at, body) VALUES (?,?,?,?)",
            (incident_id, created_at, updated_at, json.dumps(body, sort_keys=True)),
        )

    def get_incident(self, incident_id: str) -> Dict[str, Any]:
        rows = self._query("SELECT body FROM incidents WHERE incident_id=?", (incident_id,))
        if not rows:
            raise NotFoundError(f"incident not found: {incident_id}")
        return json.loads(rows[0]["body"])

    def delete_incident(self, incident_id: str) -> None:
        self._execute("DELETE FROM incidents WHERE incident_id=?", (incident_id,))

    def iter_incidents(self, newest_first: bool = True) -> Iterator[Dict[str, Any]]:
        order = "DESC" if newest_first else "ASC"
        for row in self._query(
            f"SELECT body FROM incidents ORDER BY updated_at {order}, incident_id {order}"
        ):
            yield json.loads(row["body"])

    # -- scenarios ----------------------------------------------------------

    def put_scenario(self, scenario_id: str, validation: str, body: Dict[str, Any]) -> None:
        self._execute(
            "INSERT OR REPLACE INTO scenarios (scenario_id, validation, body) VALUES (?,?,?)",
            (scenario_id, validation, json.dumps(body, sort_keys=True)),
        )

    def get_scenario(self, scenario_id: str) -> Dict[str, Any]:
        rows = self._query("SELECT body FROM scenarios WHERE scenario_id=?", (scenario_id,))
        if not rows:
            raise NotFoundError(f"scenario not found: {scenario_id}")
        return json.loads(rows[0]["body"])

    def iter_scenarios(self) -> Iterator[Dict[str, Any]]:
        for row in self._query("SELECT body FROM scenarios ORDER BY scenario_id"):
            yield json.loads(row["body"])

    def append_scenario_history(self, scenario_id: str, status: str, notes: str, timestamp: str) -> None:
        self._execute(
            "INSERT INTO scenario_history (scenario_id, status, notes, timestamp) VALUES (?,?,?,?)",
            (scenario_id, status, notes, timestamp),
        )

    def scenario_history(self, scenario_id: str) -> List[Dict[str, Any]]:
        return [
            dict(row)
            for row in self._query(
                "SELECT id, scenario_id, status, notes, timestamp FROM scenario_history "
                "WHERE scenario_id=? ORDER BY id",
                (scenario_id,),
            )
        ]

    # -- workflows ----------------------------------------------------------

    def put_workflow(self, workflow_id: str, phase: str, body: Dict[str, Any]) -> None:
        self._execute(
            "INSERT OR REPLACE INTO workflows (workflow_id, phase, body) VALUES (?,?,?)",
            (workflow_id, phase, json.dumps(body, sort_keys=True)),
        )

    def get_workflow(self, workflow_id: str) -> Dict[str, Any]:
        rows = self._query("SELECT body FROM workflows WHERE workflow_id=?", (workflow_id,))
        if not rows:
            raise NotFoundError(f"workflow not found: {workflow_id}")
        return json.loads(rows[0]["body"])

    def iter_workflows(self) -> Iterator[Dict[str, Any]]:
        for row in self._query("SELECT body FROM workflows ORDER BY workflow_id"):
            yield json.loads(row["body"])

    # -- rules --------------------------------------------------------------

    def put_rule(self, rule_id: str, fmt: str, body: Dict[str, Any], workflow_id: Optional[str] = None) -> None:
        self._execute(
            "INSERT OR REPLACE INTO rules (rule_id, format, workflow_id, body) VALUES (?,?,?,?)",
            (rule_id, fmt, workflow_id, json.dumps(body, sort_keys=True)),
        )

    def get_rule(self, rule_id: str) -> Dict[str, Any]:
        rows = self._query("SELECT body FROM rules WHERE rule_id=?", (rule_id,))
        if not rows:
            raise NotFoundError(f"rule not found: {rule_id}")
        return json.loads(rows[0]["body"])

    def iter_rules(self) -> Iterator[Dict[str, Any]]:
        for row in self._query("SELECT body FROM rules ORDER BY rule_id"):
            yield json.loads(row["body"])

    # -- policies -----------------------------------------------------------

    def put_policy(self, policy_id: str, version: int, status: str, body: Dict[str, Any]) -> None:
        self._execute(
            "INSERT OR REPLACE INTO policies (policy_id, version, status, body) VALUES (?,?,?,?)",
            (policy_id, version, status, json.dumps(body, sort_keys=True)),
        )

    def policy_versions(self) -> List[Dict[str, Any]]:
        return [
            {"policy_id": r["policy_id"], "version": r["version"], "status": r["status"],
             "body": json.loads(r["body"])}
            for r in self._query(
                "SELECT policy_id, version, status, body FROM policies ORDER BY version"
            )
        ]

    def set_policy_status(self, policy_id: str, version: int, status: str) -> None:
        self._execute(
            "UPDATE policies SET status=? WHERE policy_id=? AND version=?",
            (status, policy_id, version),
        )

    def find_policy(self, policy_id: str) -> Optional[Dict[str, Any]]:
        rows = self._query(
            "SELECT policy_id, version, status, body FROM policies WHERE policy_id=? "
            "ORDER BY version DESC LIMIT 1",
            (policy_id,),
        )
        if not rows:
            return None
        r = rows[0]
        return {"policy_id": r["policy_id"], "version": r["version"], "status": r["status"],
                "body": json.loads(r["body"])}

    def active_policy(self) -> Optional[Dict[str, Any]]:
        rows = self._query(
            "SELECT policy_id, version, status, body FROM policies WHERE status='active' LIMIT 1"
        )
        if not rows:
            return None
        r = rows[0]
        return {"policy_id": r["policy_id"], "version": r["version"], "status": r["status"],
                "body": json.loads(r["body"])}
