"""Asset catalog: dry sources, FOA room impulse responses and noise beds.

The catalog is a JSON manifest mapping asset ids to files, each pinned by a
SHA-256 content hash so scene reconstruction can detect swapped assets. Paths
are stored relative to the manifest file. Audio is loaded lazily, verified
against its hash once, and cached.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

from .audio import FOA_CHANNELS, MultichannelAudio, load_wav

CATALOG_SCHEMA_VERSION = 1

TARGET_KIND = "target"
INTERFERENCE_KIND = "interference"


class CatalogError(ValueError):
    """Manifest or asset problem: missing id, bad schema, hash mismatch."""


@dataclass(frozen=True)
class SourceEntry:
    """A dry mono recording of one isolated sound event."""

    id: str
    path: str
    sha256: str
    label: str
    kind: str  # "target" or "interference"
    duration_s: float


@dataclass(frozen=True)
class RirEntry:
    """A measured 4-channel FOA impulse response for one source direction."""

    id: str
    path: str
    sha256: str
    room: str
    placement: str  # "center" or "side"
    azimuth_deg: float
    elevation_deg: float
    distance_cm: float

    @property
    def direction(self) -> tuple[float, float]:
        return (self.azimuth_deg, self.elevation_deg)


@dataclass(frozen=True)
class NoiseEntry:
    """A 4-channel FOA background-noise recording."""

    id: str
    path: str
    sha256: str
    duration_s: float


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise CatalogError(f"{context}: missing field {key!r}")
    return mapping[key]


class AssetCatalog:
    """Lazy, hash-verifying view over the assets named by a manifest."""

    def __init__(self, sources, rirs, noises, root: str | Path = "."):
        sources, rirs, noises = list(sources), list(rirs), list(noises)
        self.root = Path(root)
        self.sources: dict[str, SourceEntry] = {e.id: e for e in sources}
        self.rirs: dict[str, RirEntry] = {e.id: e for e in rirs}
        self.noises: dict[str, NoiseEntry] = {e.id: e for e in noises}
        if (
            len(self.sources) != len(sources)
            or len(self.rirs) != len(rirs)
            or len(self.noises) != len(noises)
        ):
            raise CatalogError("duplicate asset ids in catalog")
        self._cache: dict[tuple[str, str], MultichannelAudio] = {}

    @classmethod
    def load(cls, manifest_path: str | Path) -> "AssetCatalog":
        manifest_path = Path(manifest_path)
        try:
            payload = json.loads(manifest_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CatalogError(f"{manifest_path}: cannot read manifest ({exc})") from exc
        version = payload.get("schema_version")
        if version != CATALOG_SCHEMA_VERSION:
            raise CatalogError(
                f"{manifest_path}: unsupported catalog schema_version {version!r}"
            )
        sources = [
            SourceEntry(
                id=_require(e, "id", "source entry"),
                path=_require(e, "path", "source entry"),
                sha256=_require(e, "sha256", "source entry"),
                label=_require(e, "label", "source entry"),
                kind=_require(e, "kind", "source entry"),
                duration_s=float(_require(e, "duration_s", "source entry")),
            )
            for e in payload.get("sources", [])
        ]
        rirs = [
            RirEntry(
                id=_require(e, "id", "rir entry"),
                path=_require(e, "path", "rir entry"),
                sha256=_require(e, "sha256", "rir entry"),
                room=_require(e, "room", "rir entry"),
                placement=_require(e, "placement", "rir entry"),
                azimuth_deg=float(_require(e, "azimuth_deg", "rir entry")),
                elevation_deg=float(_require(e, "elevation_deg", "rir entry")),
                distance_cm=float(_require(e, "distance_cm", "rir entry")),
            )
            for e in payload.get("rirs", [])
        ]
        noises = [
            NoiseEntry(
                id=_require(e, "id", "noise entry"),
                path=_require(e, "path", "noise entry"),
                sha256=_require(e, "sha256", "noise entry"),
                duration_s=float(_require(e, "duration_s", "noise entry")),
            )
            for e in payload.get("noises", [])
        ]
        return cls(sources, rirs, noises, root=manifest_path.parent)

    def save(self, manifest_path: str | Path) -> None:
        payload = {
            "schema_version": CATALOG_SCHEMA_VERSION,
            "sources": [asdict(e) for e in sorted(self.sources.values(), key=lambda e: e.id)],
            "rirs": [asdict(e) for e in sorted(self.rirs.values(), key=lambda e: e.id)],
            "noises": [asdict(e) for e in sorted(self.noises.values(), key=lambda e: e.id)],
        }
        Path(manifest_path).write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    # -- lookup helpers -----------------------------------------------------

    def target_labels(self) -> list[str]:
        return sorted(
            {e.label for e in self.sources.values() if e.kind == TARGET_KIND}
        )

    def target_ids_for_label(self, label: str) -> list[str]:
        return sorted(
            e.id
            for e in self.sources.values()
            if e.kind == TARGET_KIND and e.label == label
        )

    def interference_ids(self) -> list[str]:
        return sorted(e.id for e in self.sources.values() if e.kind == INTERFERENCE_KIND)

    def noise_ids(self) -> list[str]:
        return sorted(self.noises)

    def rooms(self) -> list[tuple[str, str]]:
        return sorted({(e.room, e.placement) for e in self.rirs.values()})

    def rir_ids_for_room(self, room: str, placement: str) -> list[str]:
        return sorted(
            e.id
            for e in self.rirs.values()
            if e.room == room and e.placement == placement
        )

    def source_entry(self, asset_id: str) -> SourceEntry:
        try:
            return self.sources[asset_id]
        except KeyError:
            raise CatalogError(f"unknown source asset {asset_id!r}") from None

    def rir_entry(self, rir_id: str) -> RirEntry:
        try:
            return self.rirs[rir_id]
        except KeyError:
            raise CatalogError(f"unknown RIR asset {rir_id!r}") from None

    def noise_entry(self, noise_id: str) -> NoiseEntry:
        try:
            return self.noises[noise_id]
        except KeyError:
            raise CatalogError(f"unknown noise asset {noise_id!r}") from None

    # -- audio loading ------------------------------------------------------

    def _load_verified(self, kind: str, asset_id: str, entry) -> MultichannelAudio:
        key = (kind, asset_id)
        if key not in self._cache:
            path = self.root / entry.path
            if not path.exists():
                raise CatalogError(f"{kind} asset {asset_id!r}: file missing at {path}")
            actual = sha256_file(path)
            if actual != entry.sha256:
                raise CatalogError(
                    f"{kind} asset {asset_id!r}: hash mismatch at {path} "
                    f"(expected {entry.sha256}, found {actual})"
                )
            self._cache[key] = load_wav(path)
        return self._cache[key]

    def _check_duration(self, kind: str, asset_id: str, entry, audio: MultichannelAudio):
        declared = round(entry.duration_s * audio.sample_rate)
        if abs(declared - audio.num_samples) > 1:
            raise CatalogError(
                f"{kind} asset {asset_id!r}: manifest declares {entry.duration_s} s "
                f"({declared} samples), file has {audio.num_samples}"
            )

    def load_source(self, asset_id: str) -> MultichannelAudio:
        entry = self.source_entry(asset_id)
        audio = self._load_verified("source", asset_id, entry)
        if audio.channels != 1:
            raise CatalogError(f"source asset {asset_id!r} must be mono, has {audio.channels} channels")
        self._check_duration("source", asset_id, entry, audio)
        return audio

    def load_rir(self, rir_id: str) -> MultichannelAudio:
        audio = self._load_verified("rir", rir_id, self.rir_entry(rir_id))
        if audio.channels != FOA_CHANNELS:
            raise CatalogError(f"RIR asset {rir_id!r} must have 4 FOA channels, has {audio.channels}")
        return audio

    def load_noise(self, noise_id: str) -> MultichannelAudio:
        entry = self.noise_entry(noise_id)
        audio = self._load_verified("noise", noise_id, entry)
        if audio.channels != FOA_CHANNELS:
            raise CatalogError(f"noise asset {noise_id!r} must have 4 FOA channels, has {audio.channels}")
        self._check_duration("noise", noise_id, entry, audio)
        return audio
