"""Alert events and delivery sinks (stdout, append-only file, HTTP webhook)."""
from __future__ import annotations

import json
import logging
import os
import sys
import threading
import time
import urllib.error
import urllib.request
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import IO, Sequence

from .policy import ThresholdTable

log = logging.getLogger(__name__)

WEBHOOK_ENV = "PREDMON_WEBHOOK_URL"


@dataclass(frozen=True)
class AlertEvent:
    timestamp: float
    channel: str
    value: float
    action: int
    team: str
    severity: int
    episode: int = 0
    step: int = 0

    @classmethod
    def from_action(cls, table: ThresholdTable, value: float, action: int, timestamp: float,
                    episode: int = 0, step: int = 0) -> "AlertEvent":
        band = table.band_for_action(action)
        return cls(timestamp, table.channel, float(value), int(action), band.team, band.severity, episode, step)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class DeliveryResult:
    sink: str
    ok: bool
    attempts: int = 1
    error: str | None = None


class StdoutSink:
    name = "stdout"

    def __init__(self, stream: IO[str] | None = None):
        self.stream = stream
        self._lock = threading.Lock()

    def deliver(self, event: AlertEvent) -> None:
        with self._lock:
            out = self.stream or sys.stdout
            out.write(event.to_json() + "\n")
            out.flush()


class FileSink:
    """Appends one JSON line per event; writes are serialized across threads."""

    name = "file"

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def deliver(self, event: AlertEvent) -> None:
        line = event.to_json() + "\n"
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line)


class WebhookSink:
    """POSTs the event JSON; retried ``retries`` times before giving up."""

    name = "webhook"

    def __init__(self, url: str, retries: int = 2, timeout: float = 5.0, backoff: float = 0.0):
        self.url = url
        self.retries = retries
        self.timeout = timeout
        self.backoff = backoff
        self.last_attempts = 0

    def _post(self, body: bytes) -> None:
        req = urllib.request.Request(self.url, data=body, method="POST",
                                     headers={"Content-Type": "application/json"})
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            if resp.status >= 300:
                raise urllib.error.HTTPError(self.url, resp.status, resp.reason, resp.headers, None)

    def deliver(self, event: AlertEvent) -> None:
        body = event.to_json().encode("utf-8")
        err: Exception | None = None
        for attempt in range(1, self.retries + 2):
            self.last_attempts = attempt
            try:
                self._post(body)
                return
            except (urllib.error.URLError, OSError, ValueError) as e:
                err = e
                log.debug("webhook attempt %d to %s failed: %s", attempt, self.url, e)
                if self.backoff and attempt <= self.retries:
                    time.sleep(self.backoff * attempt)
        raise ConnectionError(f"webhook {self.url} failed after {self.last_attempts} attempts: {err}")


def dispatch_alert(event: AlertEvent, sinks: Sequence, suppress_normal: bool = True) -> list[DeliveryResult]:
    """Deliver to every sink; failures are recorded, never raised."""
    if suppress_normal and event.severity == 0:
        return []
    results = []
    for sink in sinks:
        try:
            sink.deliver(event)
            results.append(DeliveryResult(sink.name, True, getattr(sink, "last_attempts", 1) or 1))
        except Exception as e:  # a broken sink must not stop monitoring
            log.warning("alert delivery via %s failed: %s", sink.name, e)
            results.append(DeliveryResult(sink.name, False, getattr(sink, "last_attempts", 1) or 1, str(e)))
    return results


def build_sinks(specs: Sequence[dict], base_dir: Path | None = None) -> list:
    sinks = []
    for spec in specs:
        kind = spec.get("type")
        if kind == "stdout":
            sinks.append(StdoutSink())
        elif kind == "file":
            p = Path(spec["path"])
            if base_dir is not None and not p.is_absolute():
                p = base_dir / p
            sinks.append(FileSink(p))
        elif kind == "webhook":
            url = os.environ.get(WEBHOOK_ENV) or spec.get("url")
            if not url:
                raise ValueError("webhook sink needs a url (config or $%s)" % WEBHOOK_ENV)
            sinks.append(WebhookSink(url, int(spec.get("retries", 2)), float(spec.get("timeout", 5.0)),
                                     float(spec.get("backoff", 0.0))))
        else:
            raise ValueError(f"unknown sink type {kind!r}")
    return sinks
