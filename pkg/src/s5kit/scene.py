"""Scene specifications: the complete JSON parameterization of one mixture.

A scene spec pins every free choice of the synthesizer — events with their
assets, directions, onsets and SNRs, plus the noise window and gain — so a
mixture can be re-rendered bit-exactly from the JSON file alone (given the
same asset catalog). Events carry their RIR direction redundantly with the
catalog so constraint checks work on a bare scene.json; rendering
cross-checks the embedded direction against the catalog.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .catalog import AssetCatalog, CatalogError

SCENE_SCHEMA_VERSION = 1

DEFAULT_DURATION_S = 10.0
DEFAULT_SAMPLE_RATE = 32000

MAX_TARGETS = 3
MAX_INTERFERENCE = 2
MAX_OVERLAP = 3
MIN_SAME_CLASS_SEPARATION_DEG = 60.0
TARGET_SNR_RANGE_DB = (5.0, 20.0)
INTERFERENCE_SNR_RANGE_DB = (0.0, 15.0)

# Identifier of the level rule used for SNR scaling: full-segment RMS of the
# convolved event at the reference channel against full-clip RMS of the
# scaled noise at the reference channel.
LEVEL_CONVENTION = "full_rms_ref_channel_v1"

TARGET_EVENT = "target"
INTERFERENCE_EVENT = "interference"


class SceneValidationError(ValueError):
    """A scene spec violates its schema or one of the scene constraints."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def _unit_vector(azimuth_deg: float, elevation_deg: float) -> np.ndarray:
    az = math.radians(azimuth_deg)
    el = math.radians(elevation_deg)
    return np.array(
        [math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)]
    )


def angular_separation(direction_a, direction_b) -> float:
    """Great-circle angle in degrees between two (azimuth, elevation) directions."""
    dot = float(np.dot(_unit_vector(*direction_a), _unit_vector(*direction_b)))
    return math.degrees(math.acos(min(1.0, max(-1.0, dot))))


@dataclass(frozen=True)
class EventSpec:
    """One sound event placed in the scene."""

    kind: str  # "target" or "interference"
    label: str
    asset_id: str
    rir_id: str
    room: str
    placement: str
    azimuth_deg: float
    elevation_deg: float
    onset_s: float
    snr_db: float

    @property
    def direction(self) -> tuple[float, float]:
        return (self.azimuth_deg, self.elevation_deg)


@dataclass(frozen=True)
class NoiseSpec:
    """The background-noise window anchoring the scene's level scale."""

    asset_id: str
    start_offset_s: float
    gain: float


@dataclass(frozen=True)
class SceneSpec:
    """Full parameterization of one mixture; serializes to scene.json."""

    id: str
    seed: int
    duration_s: float
    sample_rate: int
    events: tuple[EventSpec, ...]
    noise: NoiseSpec
    level_convention: str = LEVEL_CONVENTION

    @property
    def targets(self) -> tuple[EventSpec, ...]:
        return tuple(e for e in self.events if e.kind == TARGET_EVENT)

    @property
    def interferences(self) -> tuple[EventSpec, ...]:
        return tuple(e for e in self.events if e.kind == INTERFERENCE_EVENT)

    @property
    def num_samples(self) -> int:
        return round(self.duration_s * self.sample_rate)

    def target_labels(self) -> list[str]:
        return [e.label for e in self.targets]

    def to_json_dict(self) -> dict:
        return {
            "schema_version": SCENE_SCHEMA_VERSION,
            "id": self.id,
            "seed": self.seed,
            "duration_s": self.duration_s,
            "sample_rate": self.sample_rate,
            "level_convention": self.level_convention,
            "events": [
                {
                    "kind": e.kind,
                    "label": e.label,
                    "asset_id": e.asset_id,
                    "rir_id": e.rir_id,
                    "room": e.room,
                    "placement": e.placement,
                    "azimuth_deg": e.azimuth_deg,
                    "elevation_deg": e.elevation_deg,
                    "onset_s": e.onset_s,
                    "snr_db": e.snr_db,
                }
                for e in self.events
            ],
            "noise": {
                "asset_id": self.noise.asset_id,
                "start_offset_s": self.noise.start_offset_s,
                "gain": self.noise.gain,
            },
        }

    @classmethod
    def from_json_dict(cls, payload: dict) -> "SceneSpec":
        version = payload.get("schema_version")
        if version != SCENE_SCHEMA_VERSION:
            raise SceneValidationError(
                [f"unsupported scene schema_version {version!r}"]
            )
        try:
            events = tuple(
                EventSpec(
                    kind=e["kind"],
                    label=e["label"],
                    asset_id=e["asset_id"],
                    rir_id=e["rir_id"],
                    room=e["room"],
                    placement=e["placement"],
                    azimuth_deg=float(e["azimuth_deg"]),
                    elevation_deg=float(e["elevation_deg"]),
                    onset_s=float(e["onset_s"]),
                    snr_db=float(e["snr_db"]),
                )
                for e in payload["events"]
            )
            noise = NoiseSpec(
                asset_id=payload["noise"]["asset_id"],
                start_offset_s=float(payload["noise"]["start_offset_s"]),
                gain=float(payload["noise"]["gain"]),
            )
            return cls(
                id=payload["id"],
                seed=int(payload["seed"]),
                duration_s=float(payload["duration_s"]),
                sample_rate=int(payload["sample_rate"]),
                events=events,
                noise=noise,
                level_convention=payload["level_convention"],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SceneValidationError([f"malformed scene spec: {exc!r}"]) from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "SceneSpec":
        path = Path(path)
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise SceneValidationError([f"{path}: cannot parse scene spec ({exc})"]) from exc
        return cls.from_json_dict(payload)


def event_interval(event: EventSpec, duration_s: float, asset_duration_s: float):
    """Half-open [onset, end) interval an event occupies on the clip grid.

    Durations follow the dry asset (RIR tails are decay, not event activity),
    truncated at the clip end.
    """
    end = min(event.onset_s + asset_duration_s, duration_s)
    return event.onset_s, end


def max_concurrent_events(intervals) -> int:
    """Sweep-line maximum over half-open [start, end) intervals."""
    points = []
    for start, end in intervals:
        if end > start:
            points.append((start, 1))
            points.append((end, -1))
    # ends sort before starts at equal times: touching intervals don't overlap
    points.sort(key=lambda p: (p[0], p[1]))
    current = peak = 0
    for _, delta in points:
        current += delta
        peak = max(peak, current)
    return peak


def check_overlap(spec: SceneSpec, catalog: AssetCatalog) -> int:
    """Maximum number of simultaneously active events in the scene."""
    intervals = [
        event_interval(e, spec.duration_s, catalog.source_entry(e.asset_id).duration_s)
        for e in spec.events
    ]
    return max_concurrent_events(intervals)


def validate_scene_spec(
    spec: SceneSpec,
    catalog: AssetCatalog | None = None,
    class_list=None,
) -> list[str]:
    """Collect constraint violations; empty list means the spec is valid.

    Structural checks and the same-class separation rule use the spec alone;
    asset existence, direction consistency and the overlap limit additionally
    need the catalog.
    """
    violations = []
    targets = spec.targets
    interferences = spec.interferences

    if spec.duration_s <= 0:
        violations.append(f"duration_s must be positive, got {spec.duration_s}")
    if spec.sample_rate <= 0:
        violations.append(f"sample_rate must be positive, got {spec.sample_rate}")
    if len(targets) > MAX_TARGETS:
        violations.append(f"{len(targets)} target events exceed the maximum of {MAX_TARGETS}")
    if len(interferences) > MAX_INTERFERENCE:
        violations.append(
            f"{len(interferences)} interference events exceed the maximum of {MAX_INTERFERENCE}"
        )
    if len(targets) + len(interferences) != len(spec.events):
        bad = sorted({e.kind for e in spec.events} - {TARGET_EVENT, INTERFERENCE_EVENT})
        violations.append(f"unknown event kind(s): {bad}")
    if spec.noise.gain <= 0:
        violations.append(f"noise gain must be positive, got {spec.noise.gain}")
    if spec.noise.start_offset_s < 0:
        violations.append(f"noise start offset must be >= 0, got {spec.noise.start_offset_s}")
    if spec.level_convention != LEVEL_CONVENTION:
        violations.append(f"unknown level convention {spec.level_convention!r}")

    for index, event in enumerate(spec.events):
        where = f"event {index} ({event.label})"
        if not (0 <= event.onset_s < spec.duration_s):
            violations.append(
                f"{where}: onset {event.onset_s} outside [0, {spec.duration_s})"
            )
        low, high = (
            TARGET_SNR_RANGE_DB if event.kind == TARGET_EVENT else INTERFERENCE_SNR_RANGE_DB
        )
        if event.kind in (TARGET_EVENT, INTERFERENCE_EVENT) and not (
            low <= event.snr_db <= high
        ):
            violations.append(
                f"{where}: SNR {event.snr_db} dB outside [{low}, {high}] for {event.kind}s"
            )
        if class_list is not None and event.kind == TARGET_EVENT and event.label not in class_list:
            violations.append(f"{where}: unknown class label {event.label!r}")

    rooms = {(e.room, e.placement) for e in spec.events}
    if len(rooms) > 1:
        violations.append(f"events span multiple room placements: {sorted(rooms)}")

    # same-class target pairs must be separated by at least 60 degrees
    for i in range(len(targets)):
        for j in range(i + 1, len(targets)):
            if targets[i].label != targets[j].label:
                continue
            separation = angular_separation(targets[i].direction, targets[j].direction)
            if separation < MIN_SAME_CLASS_SEPARATION_DEG:
                violations.append(
                    f"same-class pair {targets[i].label!r}: directions "
                    f"{targets[i].direction} and {targets[j].direction} are "
                    f"{separation:.1f} deg apart, below the "
                    f"{MIN_SAME_CLASS_SEPARATION_DEG:.0f} deg minimum"
                )

    if catalog is not None:
        for index, event in enumerate(spec.events):
            where = f"event {index} ({event.label})"
            try:
                source = catalog.source_entry(event.asset_id)
            except CatalogError:
                violations.append(f"{where}: missing asset {event.asset_id!r}")
                source = None
            try:
                rir = catalog.rir_entry(event.rir_id)
            except CatalogError:
                violations.append(f"{where}: missing RIR {event.rir_id!r}")
                rir = None
            if source is not None and source.kind != event.kind:
                violations.append(
                    f"{where}: asset {event.asset_id!r} is a {source.kind} recording, "
                    f"event kind is {event.kind}"
                )
            if rir is not None and (
                rir.room != event.room
                or rir.placement != event.placement
                or rir.azimuth_deg != event.azimuth_deg
                or rir.elevation_deg != event.elevation_deg
            ):
                violations.append(
                    f"{where}: embedded direction/room does not match catalog entry "
                    f"{event.rir_id!r}"
                )
        try:
            catalog.noise_entry(spec.noise.asset_id)
        except CatalogError:
            violations.append(f"noise: missing asset {spec.noise.asset_id!r}")
        try:
            if check_overlap(spec, catalog) > MAX_OVERLAP:
                violations.append(
                    f"more than {MAX_OVERLAP} events overlap "
                    f"(found {check_overlap(spec, catalog)})"
                )
        except CatalogError:
            pass  # already reported as a missing asset

    return violations


def ensure_valid(spec: SceneSpec, catalog: AssetCatalog | None = None, class_list=None) -> None:
    violations = validate_scene_spec(spec, catalog, class_list)
    if violations:
        raise SceneValidationError(violations)
