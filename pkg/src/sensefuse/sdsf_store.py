"""Sensing data storage function (SDSF).

A stid/time/context-indexed store for sensing records with three duties:

* availability queries: report whether stored records jointly cover a
  requested context (area, time window, target type), and name the covered
  and missing portions when coverage is partial;
* freshness-filtered retrieval for fusion;
* an aging policy that expires records, plus change subscriptions.

Time is the simulator's integer step clock; the store never consults wall
clock time.  Persistence is a single append-only JSON-lines log with a header
line, replayed into the in-memory index on load.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Union

from .geometry import Rect, StaticMap, WorldPoint, subtract_rects
from .measurement import Cov2, WorldDetection
from .metrics import MetricResult

log = logging.getLogger(__name__)

LOG_MAGIC = "sensefuse-sdsf-log"
LOG_FORMAT_VERSION = 1

TARGET_TYPES = ("pedestrian", "vehicle", "lorry", "cyclist", "motorcyclist", "unknown")
RECORD_KINDS = ("raw", "processed", "high-level")

Payload = Union[StaticMap, list[WorldDetection], MetricResult]


@dataclass(frozen=True)
class SensingContext:
    """What a piece of sensing data is about: where, when, and of what."""

    area: Rect
    time_window: tuple[int, int]
    target_type: str = "unknown"
    conditions: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        start, end = self.time_window
        if start > end:
            raise ValueError(f"time_window start must be <= end, got {self.time_window}")
        if self.target_type not in TARGET_TYPES:
            raise ValueError(
                f"target_type must be one of {TARGET_TYPES}, got {self.target_type!r}"
            )
        object.__setattr__(self, "conditions", tuple(sorted(self.conditions)))

    def key(self) -> tuple:
        return (self.area.as_tuple(), self.time_window, self.target_type, self.conditions)


@dataclass(frozen=True)
class SensingRecord:
    """One stored unit of sensing data."""

    record_id: str
    stid: str
    kind: str  # raw | processed | high-level
    context: SensingContext
    payload: Payload
    created_at: int
    aging_policy: int  # steps the record stays valid after creation
    metadata: tuple[tuple[str, str], ...] = ()

    def age(self, now: int) -> int:
        return now - self.created_at

    def expired(self, now: int) -> bool:
        return self.age(now) > self.aging_policy


@dataclass(frozen=True)
class Availability:
    """Coverage verdict for an availability query."""

    status: str  # exists | partial | missing
    available_portions: tuple[SensingContext, ...] = ()
    missing_portions: tuple[SensingContext, ...] = ()

    def __post_init__(self) -> None:
        if self.status not in ("exists", "partial", "missing"):
            raise ValueError(f"invalid availability status {self.status!r}")
        if self.status == "exists" and self.missing_portions:
            raise ValueError("status 'exists' cannot carry missing portions")
        if self.status == "missing" and self.available_portions:
            raise ValueError("status 'missing' cannot carry available portions")


def _type_matches(stored: str, requested: str) -> bool:
    # Stored "unknown" data is type-agnostic and satisfies any request.
    return stored == requested or stored == "unknown"


def _windows_overlap(a: tuple[int, int], b: tuple[int, int]) -> bool:
    return max(a[0], b[0]) <= min(a[1], b[1])


def _subtract_window(
    base: tuple[int, int], cuts: list[tuple[int, int]]
) -> list[tuple[int, int]]:
    """Closed-interval subtraction on the integer step axis."""
    remaining = [base]
    for c0, c1 in sorted(cuts):
        nxt: list[tuple[int, int]] = []
        for r0, r1 in remaining:
            if c1 < r0 or c0 > r1:
                nxt.append((r0, r1))
                continue
            if r0 < c0:
                nxt.append((r0, c0 - 1))
            if c1 < r1:
                nxt.append((c1 + 1, r1))
        remaining = nxt
        if not remaining:
            break
    return remaining


class SdsfStore:
    """Append-log backed sensing data store.

    ``path=None`` keeps the store purely in memory; with a path, every stored
    record is appended to the log and the index is rebuilt from the log on
    construction.  The clock starts at the newest persisted created_at.
    """

    def __init__(self, path: str | Path | None = None):
        self._path = Path(path) if path is not None else None
        self._records: dict[str, SensingRecord] = {}
        self._dedup: dict[tuple, str] = {}
        self._next_id = 1
        self._now = 0
        self._subscriptions: list[tuple[int, SensingContext, Callable[[SensingRecord], None]]] = []
        self._delivered: set[tuple[int, str]] = set()
        self._next_sub_id = 1
        if self._path is not None and self._path.exists():
            self._load()

    # -- clock ---------------------------------------------------------------

    @property
    def now(self) -> int:
        return self._now

    def __len__(self) -> int:
        """Number of indexed records, expired ones included until aged out."""
        return len(self._records)

    def set_now(self, now: int) -> None:
        """Advance the store clock; moving backwards is a protocol bug."""
        if now < self._now:
            raise ValueError(f"store clock cannot move backwards: {now} < {self._now}")
        self._now = now

    # -- write path ----------------------------------------------------------

    def store(
        self,
        stid: str,
        kind: str,
        context: SensingContext,
        payload: Payload,
        created_at: int,
        aging_policy: int,
        metadata: dict[str, str] | None = None,
    ) -> str:
        """Persist one record and return its id.

        Idempotent on (stid, kind, context, created_at): re-storing the same
        logical record returns the existing id without appending a duplicate.
        """
        problems = []
        if not stid:
            problems.append("stid: must be non-empty")
        if kind not in RECORD_KINDS:
            problems.append(f"kind: must be one of {RECORD_KINDS}, got {kind!r}")
        if created_at > self._now:
            problems.append(f"created_at: {created_at} is in the future (now={self._now})")
        if created_at < 0:
            problems.append(f"created_at: must be >= 0, got {created_at}")
        if aging_policy < 0:
            problems.append(f"aging_policy: must be >= 0, got {aging_policy}")
        expected_kind = _payload_kind(payload)
        if expected_kind is None:
            problems.append(f"payload: unsupported payload type {type(payload).__name__}")
        elif kind in RECORD_KINDS and kind != expected_kind:
            problems.append(
                f"kind: {kind!r} does not match payload type {type(payload).__name__} "
                f"(expected {expected_kind!r})"
            )
        if problems:
            raise ValueError("record rejected: " + "; ".join(problems))

        dedup_key = (stid, kind, context.key(), created_at)
        existing = self._dedup.get(dedup_key)
        if existing is not None:
            return existing

        record_id = f"rec-{self._next_id:06d}"
        self._next_id += 1
        record = SensingRecord(
            record_id=record_id,
            stid=stid,
            kind=kind,
            context=context,
            payload=payload,
            created_at=created_at,
            aging_policy=aging_policy,
            metadata=tuple(sorted((metadata or {}).items())),
        )
        self._records[record_id] = record
        self._dedup[dedup_key] = record_id
        if self._path is not None:
            self._append_to_log(record)
        self._notify(record)
        return record_id

    # -- read path -----------------------------------------------------------

    def query_availability(self, ctx: SensingContext, stid: str = "") -> Availability:
        """Coverage of ``ctx`` by the live (non-expired) records.

        The stid identifies the asking task for logging and symmetry with the
        data exchange; matching is purely by context, so one task can reuse
        data archived by another.  Spatial and temporal coverage are computed
        separately and intersected: full availability requires both.
        """
        relevant = [
            r
            for r in self._live_records()
            if _type_matches(r.context.target_type, ctx.target_type)
            and _windows_overlap(r.context.time_window, ctx.time_window)
            and r.context.area.intersects(ctx.area)
        ]
        if not relevant:
            return Availability(status="missing", missing_portions=(ctx,))

        overlaps = []
        for r in relevant:
            inter_area = r.context.area.intersection(ctx.area)
            assert inter_area is not None
            w0 = max(r.context.time_window[0], ctx.time_window[0])
            w1 = min(r.context.time_window[1], ctx.time_window[1])
            overlaps.append(
                SensingContext(
                    area=inter_area,
                    time_window=(w0, w1),
                    target_type=ctx.target_type,
                    conditions=ctx.conditions,
                )
            )

        uncovered_rects = subtract_rects(ctx.area, [o.area for o in overlaps])
        uncovered_windows = _subtract_window(
            ctx.time_window, [o.time_window for o in overlaps]
        )
        if not uncovered_rects and not uncovered_windows:
            return Availability(status="exists", available_portions=tuple(overlaps))
        missing = [
            SensingContext(rect, ctx.time_window, ctx.target_type, ctx.conditions)
            for rect in uncovered_rects
        ] + [
            SensingContext(ctx.area, win, ctx.target_type, ctx.conditions)
            for win in uncovered_windows
        ]
        return Availability(
            status="partial",
            available_portions=tuple(overlaps),
            missing_portions=tuple(missing),
        )

    def fetch(
        self, ctx: SensingContext, stid: str = "", max_age: float = math.inf
    ) -> list[SensingRecord]:
        """Records overlapping ``ctx`` whose age at the store clock is <= max_age.

        The age bound is inclusive.  Self-expired records (those past their
        own aging policy) are never returned, so a later aging pass cannot
        remove anything fetch would still have served.  Results are ordered
        newest first, then by record id for stability.
        """
        hits = [
            r
            for r in self._live_records()
            if _type_matches(r.context.target_type, ctx.target_type)
            and _windows_overlap(r.context.time_window, ctx.time_window)
            and r.context.area.intersects(ctx.area)
            and r.age(self._now) <= max_age
        ]
        return sorted(hits, key=lambda r: (-r.created_at, r.record_id))

    def get(self, record_id: str) -> SensingRecord | None:
        record = self._records.get(record_id)
        if record is not None and record.expired(self._now):
            return None
        return record

    def _live_records(self) -> list[SensingRecord]:
        return [r for r in self._records.values() if not r.expired(self._now)]

    # -- aging ---------------------------------------------------------------

    def apply_aging(self, now: int) -> int:
        """Advance the clock and drop expired records from the index.

        Returns the number of records removed.  Idempotent: a second pass at
        the same clock removes nothing.
        """
        self.set_now(now)
        expired = [rid for rid, r in self._records.items() if r.expired(now)]
        for rid in expired:
            record = self._records.pop(rid)
            self._dedup.pop(
                (record.stid, record.kind, record.context.key(), record.created_at), None
            )
        if expired:
            log.info("aged out %d record(s) at step %d", len(expired), now)
        return len(expired)

    # -- subscriptions ---------------------------------------------------------

    def subscribe(
        self, ctx: SensingContext, callback: Callable[[SensingRecord], None]
    ) -> int:
        """Invoke ``callback`` for every future stored record overlapping ``ctx``.

        Delivery is at most once per (subscription, record) within this
        process; subscriptions are not persisted.
        """
        sub_id = self._next_sub_id
        self._next_sub_id += 1
        self._subscriptions.append((sub_id, ctx, callback))
        return sub_id

    def unsubscribe(self, sub_id: int) -> None:
        self._subscriptions = [s for s in self._subscriptions if s[0] != sub_id]

    def _notify(self, record: SensingRecord) -> None:
        for sub_id, ctx, callback in self._subscriptions:
            key = (sub_id, record.record_id)
            if key in self._delivered:
                continue
            if (
                _type_matches(record.context.target_type, ctx.target_type)
                and _windows_overlap(record.context.time_window, ctx.time_window)
                and record.context.area.intersects(ctx.area)
            ):
                self._delivered.add(key)
                callback(record)

    # -- persistence -----------------------------------------------------------

    def _append_to_log(self, record: SensingRecord) -> None:
        assert self._path is not None
        new_file = not self._path.exists()
        with self._path.open("a", encoding="utf-8") as fh:
            if new_file:
                fh.write(
                    json.dumps({"magic": LOG_MAGIC, "version": LOG_FORMAT_VERSION}) + "\n"
                )
            fh.write(json.dumps(_record_to_json(record), sort_keys=True) + "\n")

    def _load(self) -> None:
        assert self._path is not None
        with self._path.open("r", encoding="utf-8") as fh:
            header_line = fh.readline()
            if not header_line.strip():
                return  # empty file behaves like a fresh store
            header = json.loads(header_line)
            if header.get("magic") != LOG_MAGIC:
                raise ValueError(f"{self._path}: not a sensing store log (bad magic)")
            if header.get("version") != LOG_FORMAT_VERSION:
                raise ValueError(
                    f"{self._path}: unsupported log version {header.get('version')!r}"
                )
            records = [_record_from_json(json.loads(line)) for line in fh if line.strip()]
        for record in records:
            self._records[record.record_id] = record
            self._dedup[
                (record.stid, record.kind, record.context.key(), record.created_at)
            ] = record.record_id
            self._now = max(self._now, record.created_at)
            num = int(record.record_id.split("-")[-1])
            self._next_id = max(self._next_id, num + 1)
        # Records already past their policy relative to the recovered clock
        # stay out of the index, matching what apply_aging would have done.
        self.apply_aging(self._now)


def _payload_kind(payload: Payload) -> str | None:
    if isinstance(payload, StaticMap):
        return "processed"
    if isinstance(payload, MetricResult):
        return "high-level"
    if isinstance(payload, list) and all(isinstance(d, WorldDetection) for d in payload):
        return "raw"
    return None


# -- JSON codecs -------------------------------------------------------------


def _context_to_json(ctx: SensingContext) -> dict:
    return {
        "area": list(ctx.area.as_tuple()),
        "time_window": list(ctx.time_window),
        "target_type": ctx.target_type,
        "conditions": [list(c) for c in ctx.conditions],
    }


def _context_from_json(d: dict) -> SensingContext:
    return SensingContext(
        area=Rect(*d["area"]),
        time_window=tuple(d["time_window"]),
        target_type=d["target_type"],
        conditions=tuple(tuple(c) for c in d["conditions"]),
    )


def _payload_to_json(payload: Payload) -> dict:
    if isinstance(payload, StaticMap):
        return {
            "type": "static_map",
            "bounds": list(payload.bounds.as_tuple()),
            "rects": [list(r.as_tuple()) for r in payload.rects],
        }
    if isinstance(payload, MetricResult):
        return {
            "type": "metrics",
            "pd_per_target": {str(k): v for k, v in payload.pd_per_target.items()},
            "pd_avg": payload.pd_avg,
            "fa_avg": payload.fa_avg,
            "excluded_targets": list(payload.excluded_targets),
        }
    return {
        "type": "detections",
        "items": [
            {
                "x": d.point.x,
                "y": d.point.y,
                "cov": [d.cov.xx, d.cov.xy, d.cov.yy],
                "source_se": d.source_se,
                "clutter": d.is_clutter_truth,
            }
            for d in payload
        ],
    }


def _payload_from_json(d: dict) -> Payload:
    if d["type"] == "static_map":
        bounds = Rect(*d["bounds"])
        return StaticMap(tuple(Rect(*r) for r in d["rects"]), bounds)
    if d["type"] == "metrics":
        return MetricResult(
            pd_per_target={int(k): v for k, v in d["pd_per_target"].items()},
            pd_avg=d["pd_avg"],
            fa_avg=d["fa_avg"],
            excluded_targets=tuple(d["excluded_targets"]),
        )
    if d["type"] == "detections":
        return [
            WorldDetection(
                point=WorldPoint(item["x"], item["y"]),
                cov=Cov2(*item["cov"]),
                source_se=item["source_se"],
                is_clutter_truth=item["clutter"],
            )
            for item in d["items"]
        ]
    raise ValueError(f"unknown payload type {d.get('type')!r}")


def _record_to_json(record: SensingRecord) -> dict:
    return {
        "record_id": record.record_id,
        "stid": record.stid,
        "kind": record.kind,
        "context": _context_to_json(record.context),
        "payload": _payload_to_json(record.payload),
        "created_at": record.created_at,
        "aging_policy": record.aging_policy,
        "metadata": [list(m) for m in record.metadata],
    }


def _record_from_json(d: dict) -> SensingRecord:
    return SensingRecord(
        record_id=d["record_id"],
        stid=d["stid"],
        kind=d["kind"],
        context=_context_from_json(d["context"]),
        payload=_payload_from_json(d["payload"]),
        created_at=d["created_at"],
        aging_policy=d["aging_policy"],
        metadata=tuple(tuple(m) for m in d["metadata"]),
    )
