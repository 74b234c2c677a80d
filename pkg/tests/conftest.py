from __future__ import annotations

import random
from datetime import datetime, timedelta, timezone

import pytest

from socengine.scanner import SecurityEvent, SemanticTags, SourceType
from socengine.uicr import (
    AlertCorrelation,
    CanonicalThreatLabel,
    IoA,
    IoC,
    IoCType,
    KillChainPhase,
    LogEntry,
    LogLevel,
    NetworkFlowMeta,
    ThreatFeature,
    UICR,
)

T0 = datetime(2026, 2, 23, 5, 0, 0, tzinfo=timezone.utc)


def make_event(i: int, ts: datetime = T0, **kw) -> SecurityEvent:
    kw.setdefault("source_type", SourceType.SYSLOG)
    kw.setdefault("message", f"event {i}")
    return SecurityEvent(event_id=f"e{i:04d}", timestamp=ts, **kw)


def random_uicr(rng: random.Random, base: datetime = T0) -> UICR:
    """Randomized but structurally valid incident record."""
    n_iocs = rng.randint(0, 6)
    iocs = []
    seen = set()
    for _ in range(n_iocs):
        value = f"{rng.randint(1, 254)}.{rng.randint(0, 254)}.{rng.randint(0, 254)}.{rng.randint(1, 254)}"
        if value in seen:
            continue
        seen.add(value)
        iocs.append(IoC(IoCType.IP, value, rng.random(), f"tool{rng.randint(1, 3)}"))
    tactics = ["reconnaissance", "initial access", "execution", "persistence",
               "command and control", "exfiltration", ""]
    ioas = tuple(
        IoA(f"T{rng.randint(1000, 1599)}", tactic=rng.choice(tactics),
            confidence=rng.random())
        for _ in range(rng.randint(0, 4))
    )
    alerts = tuple(
        AlertCorrelation(f"a{rng.randint(0, 10**6)}", f"rule{rng.randint(1, 9)}",
                         rng.randint(1, 5))
        for _ in range(rng.randint(0, 5))
    )
    logs = tuple(
        LogEntry(base + timedelta(seconds=rng.randint(0, 3600)), "gen", f"host{rng.randint(1, 4)}",
                 LogLevel.INFO, f"log line {rng.randint(0, 999)}")
        for _ in range(rng.randint(0, 4))
    )
    flows = tuple(
        NetworkFlowMeta(
            src_ip=f"10.0.0.{rng.randint(1, 254)}",
            dst_ip=f"192.0.2.{rng.randint(1, 254)}",
            src_port=rng.randint(1, 65535),
            dst_port=rng.choice([22, 53, 80, 443]),
            protocol=rng.choice(["tcp", "udp"]),
            bytes_sent=rng.randint(0, 10**6),
            bytes_recv=rng.randint(0, 10**6),
            timestamp=base + timedelta(seconds=rng.randint(0, 3600)),
        )
        for _ in range(rng.randint(0, 3))
    )
    features = tuple(
        ThreatFeature(f"model{rng.randint(1, 2)}",
                      rng.choice(list(CanonicalThreatLabel)), rng.random())
        for _ in range(rng.randint(0, 3))
    )
    return UICR(
        created_at=base,
        updated_at=base + timedelta(seconds=1),
        correlation_keys=frozenset(
            f"key{rng.randint(0, 40)}" for _ in range(rng.randint(0, 2))
        ),
        iocs=tuple(iocs),
        ioas=ioas,
        alerts=alerts,
        logs=logs,
        flows=flows,
        features=features,
    )


@pytest.fixture
def rng() -> random.Random:
    return random.Random(20260223)
