"""Deterministic soundscape synthesis: sampling, rendering, split generation.

Every free choice is drawn from a seeded generator and written into the scene
spec, so (bucket, catalog, seed) fully determines the spec and the spec fully
determines every rendered sample. Rendering follows a fixed summation order
(targets by index, then interference, then noise) so re-rendering is
bit-exact.
"""

from __future__ import annotations

import json
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .audio import FOA_CHANNELS, MultichannelAudio, rms_level, save_wav
from .catalog import AssetCatalog, CatalogError
from .scene import (
    DEFAULT_DURATION_S,
    DEFAULT_SAMPLE_RATE,
    INTERFERENCE_EVENT,
    INTERFERENCE_SNR_RANGE_DB,
    LEVEL_CONVENTION,
    MAX_INTERFERENCE,
    MAX_OVERLAP,
    MIN_SAME_CLASS_SEPARATION_DEG,
    TARGET_EVENT,
    TARGET_SNR_RANGE_DB,
    EventSpec,
    NoiseSpec,
    SceneSpec,
    angular_separation,
    ensure_valid,
    max_concurrent_events,
    validate_scene_spec,
)

SPLIT_SCHEMA_VERSION = 1

# Resampling budget per constraint before giving up on a scene.
MAX_CONSTRAINT_RETRIES = 100

DEFAULT_PROPORTIONS = (1 / 6, 1 / 6, 1 / 3, 1 / 3)
DEFAULT_SAME_CLASS_FRACTION = 0.5


class SceneConstraintError(RuntimeError):
    """Scene sampling could not satisfy a constraint within the retry budget."""


class RenderError(RuntimeError):
    """A scene spec cannot be rendered against the given catalog."""


@dataclass(frozen=True)
class SceneBucket:
    """Prescription for one scene: how many targets, duplicated classes or not."""

    n_targets: int
    same_class: bool = False


@dataclass(frozen=True)
class SplitConfig:
    """Parameters of one dataset split."""

    n_mixtures: int
    proportions: tuple[float, ...] = DEFAULT_PROPORTIONS
    same_class_fraction: float = DEFAULT_SAME_CLASS_FRACTION
    duration_s: float = DEFAULT_DURATION_S
    sample_rate: int = DEFAULT_SAMPLE_RATE
    noise_ref_rms: float | None = None
    name: str = "split"

    def validate(self) -> None:
        if len(self.proportions) != 4:
            raise ValueError("proportions must cover target counts 0..3")
        if any(p < 0 for p in self.proportions):
            raise ValueError("proportions must be non-negative")
        if abs(sum(self.proportions) - 1.0) > 1e-9:
            raise ValueError(f"proportions sum to {sum(self.proportions)}, expected 1")
        if not 0.0 <= self.same_class_fraction <= 1.0:
            raise ValueError("same_class_fraction must be within [0, 1]")
        if self.duration_s <= 0 or self.sample_rate <= 0:
            raise ValueError("duration_s and sample_rate must be positive")


@dataclass
class RenderedScene:
    """One rendered mixture with its per-target dry references."""

    mixture: MultichannelAudio
    target_references: list[tuple[str, np.ndarray]]
    labels: Counter


@dataclass
class SceneStems:
    """Per-event scene pieces; summing them in order reproduces the mixture."""

    targets: list[np.ndarray]
    interferences: list[np.ndarray]
    noise: np.ndarray
    supports: list[tuple[int, int]]  # sample extent of each event, scene order


def scale_to_snr(event_rendered, noise_ref, snr_db: float) -> float:
    """Linear gain bringing the event to ``snr_db`` relative to the noise.

    Levels are full-segment RMS of the rendered event and full-clip RMS of the
    noise, both at the reference channel (the recorded level convention).
    """
    event_rms = rms_level(event_rendered)
    noise_rms = rms_level(noise_ref)
    if event_rms == 0.0:
        raise ValueError("silent event: SNR gain is undefined")
    if noise_rms == 0.0:
        raise ValueError("silent noise: SNR reference is undefined")
    return 10.0 ** (snr_db / 20.0) * noise_rms / event_rms


# ---------------------------------------------------------------------------
# scene sampling
# ---------------------------------------------------------------------------


def _pick(rng: np.random.Generator, items: list):
    return items[int(rng.integers(len(items)))]


def _sample_target_labels(bucket: SceneBucket, catalog: AssetCatalog, rng) -> list[str]:
    k = bucket.n_targets
    if k == 0:
        return []
    classes = catalog.target_labels()
    if not classes:
        raise CatalogError("catalog has no target source recordings")
    if bucket.same_class:
        if k < 2:
            raise ValueError("a same-class bucket needs at least 2 targets")
        duplicated = _pick(rng, classes)
        group_size = int(rng.integers(2, k + 1))
        others_pool = [c for c in classes if c != duplicated]
        n_others = k - group_size
        if n_others > len(others_pool):
            raise CatalogError(
                f"catalog has too few target classes for a {k}-target same-class scene"
            )
        labels = [duplicated] * group_size
        if n_others:
            picked = rng.choice(len(others_pool), size=n_others, replace=False)
            labels += [others_pool[int(i)] for i in picked]
    else:
        if k > len(classes):
            raise CatalogError(
                f"need {k} distinct target classes, catalog has {len(classes)}"
            )
        picked = rng.choice(len(classes), size=k, replace=False)
        labels = [classes[int(i)] for i in picked]
    order = rng.permutation(len(labels))
    return [labels[int(i)] for i in order]


def _sample_target_rirs(labels, room_rirs, catalog: AssetCatalog, rng) -> list[str]:
    k = len(labels)
    if k == 0:
        return []
    if len(room_rirs) < k:
        raise CatalogError(
            f"room has {len(room_rirs)} RIR directions, need {k} distinct ones"
        )
    for _ in range(MAX_CONSTRAINT_RETRIES):
        picked = rng.choice(len(room_rirs), size=k, replace=False)
        chosen = [room_rirs[int(i)] for i in picked]
        separated = all(
            angular_separation(
                catalog.rir_entry(chosen[i]).direction,
                catalog.rir_entry(chosen[j]).direction,
            )
            >= MIN_SAME_CLASS_SEPARATION_DEG
            for i in range(k)
            for j in range(i + 1, k)
            if labels[i] == labels[j]
        )
        if separated:
            return chosen
    raise SceneConstraintError(
        f"no same-class direction set {MIN_SAME_CLASS_SEPARATION_DEG:.0f} deg apart "
        f"after {MAX_CONSTRAINT_RETRIES} attempts"
    )


def _sample_onsets(durations, duration_s: float, rng) -> list[float]:
    for _ in range(MAX_CONSTRAINT_RETRIES):
        onsets = [
            float(rng.uniform(0.0, max(0.0, duration_s - min(d, 1.0))))
            for d in durations
        ]
        intervals = [
            (onset, min(onset + d, duration_s)) for onset, d in zip(onsets, durations)
        ]
        if max_concurrent_events(intervals) <= MAX_OVERLAP:
            return onsets
    raise SceneConstraintError(
        f"more than {MAX_OVERLAP} events keep overlapping after "
        f"{MAX_CONSTRAINT_RETRIES} onset draws"
    )


def sample_scene(
    bucket: SceneBucket,
    catalog: AssetCatalog,
    seed: int,
    *,
    scene_id: str = "scene",
    duration_s: float = DEFAULT_DURATION_S,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    noise_ref_rms: float | None = None,
) -> SceneSpec:
    """Draw one scene spec; identical (bucket, catalog, seed) give identical specs."""
    rng = np.random.default_rng(seed)

    rooms = catalog.rooms()
    if not rooms:
        raise CatalogError("catalog has no RIRs")
    room, placement = _pick(rng, rooms)
    room_rirs = catalog.rir_ids_for_room(room, placement)

    labels = _sample_target_labels(bucket, catalog, rng)
    target_rirs = _sample_target_rirs(labels, room_rirs, catalog, rng)
    target_assets = [
        _pick(rng, catalog.target_ids_for_label(label)) for label in labels
    ]
    target_snrs = [float(rng.uniform(*TARGET_SNR_RANGE_DB)) for _ in labels]

    interference_pool = catalog.interference_ids()
    n_interference = int(rng.integers(0, MAX_INTERFERENCE + 1)) if interference_pool else 0
    interference_assets = [_pick(rng, interference_pool) for _ in range(n_interference)]
    interference_rirs = [_pick(rng, room_rirs) for _ in range(n_interference)]
    interference_snrs = [
        float(rng.uniform(*INTERFERENCE_SNR_RANGE_DB)) for _ in range(n_interference)
    ]

    asset_ids = target_assets + interference_assets
    durations = [catalog.source_entry(a).duration_s for a in asset_ids]
    for asset_id, asset_duration in zip(asset_ids, durations):
        if asset_duration <= 0:
            raise CatalogError(f"source asset {asset_id!r} has non-positive duration")
    onsets = _sample_onsets(durations, duration_s, rng)

    noise_ids = [
        nid
        for nid in catalog.noise_ids()
        if catalog.noise_entry(nid).duration_s >= duration_s - 1e-9
    ]
    if not noise_ids:
        raise CatalogError(f"no noise recording covers {duration_s} s")
    noise_id = _pick(rng, noise_ids)
    clip_samples = round(duration_s * sample_rate)
    noise_samples = round(catalog.noise_entry(noise_id).duration_s * sample_rate)
    start_idx = int(rng.integers(0, noise_samples - clip_samples + 1))
    start_offset_s = start_idx / sample_rate

    gain = 1.0
    if noise_ref_rms is not None:
        noise_audio = catalog.load_noise(noise_id)
        segment = noise_audio.data[0, start_idx : start_idx + clip_samples]
        segment_rms = rms_level(segment)
        if segment_rms == 0.0:
            raise CatalogError(f"noise asset {noise_id!r} is silent in the chosen window")
        gain = float(noise_ref_rms / segment_rms)

    events = []
    for label, rir_id, asset_id, snr, onset in zip(
        labels, target_rirs, target_assets, target_snrs, onsets[: len(labels)]
    ):
        entry = catalog.rir_entry(rir_id)
        events.append(
            EventSpec(
                kind=TARGET_EVENT,
                label=label,
                asset_id=asset_id,
                rir_id=rir_id,
                room=entry.room,
                placement=entry.placement,
                azimuth_deg=entry.azimuth_deg,
                elevation_deg=entry.elevation_deg,
                onset_s=onset,
                snr_db=snr,
            )
        )
    for asset_id, rir_id, snr, onset in zip(
        interference_assets, interference_rirs, interference_snrs, onsets[len(labels):]
    ):
        entry = catalog.rir_entry(rir_id)
        events.append(
            EventSpec(
                kind=INTERFERENCE_EVENT,
                label=catalog.source_entry(asset_id).label,
                asset_id=asset_id,
                rir_id=rir_id,
                room=entry.room,
                placement=entry.placement,
                azimuth_deg=entry.azimuth_deg,
                elevation_deg=entry.elevation_deg,
                onset_s=onset,
                snr_db=snr,
            )
        )

    spec = SceneSpec(
        id=scene_id,
        seed=int(seed),
        duration_s=duration_s,
        sample_rate=sample_rate,
        events=tuple(events),
        noise=NoiseSpec(asset_id=noise_id, start_offset_s=start_offset_s, gain=gain),
        level_convention=LEVEL_CONVENTION,
    )
    ensure_valid(spec, catalog)
    return spec


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------


def _load_for_render(spec: SceneSpec, catalog: AssetCatalog, event: EventSpec):
    dry = catalog.load_source(event.asset_id)
    rir = catalog.load_rir(event.rir_id)
    if dry.sample_rate != spec.sample_rate:
        raise RenderError(
            f"source {event.asset_id!r} is {dry.sample_rate} Hz, scene wants "
            f"{spec.sample_rate} Hz"
        )
    if rir.sample_rate != spec.sample_rate:
        raise RenderError(
            f"RIR {event.rir_id!r} is {rir.sample_rate} Hz, scene wants "
            f"{spec.sample_rate} Hz"
        )
    return dry, rir


def render_stems(spec: SceneSpec, catalog: AssetCatalog) -> SceneStems:
    """Render each event and the noise bed separately, full scene length."""
    ensure_valid(spec, catalog)
    sr = spec.sample_rate
    n = spec.num_samples

    noise_audio = catalog.load_noise(spec.noise.asset_id)
    if noise_audio.sample_rate != sr:
        raise RenderError(
            f"noise {spec.noise.asset_id!r} is {noise_audio.sample_rate} Hz, scene wants {sr} Hz"
        )
    start = round(spec.noise.start_offset_s * sr)
    if start < 0 or start + n > noise_audio.num_samples:
        raise RenderError(
            f"noise window [{start}, {start + n}) exceeds recording of "
            f"{noise_audio.num_samples} samples"
        )
    noise = noise_audio.data[:, start : start + n] * spec.noise.gain
    noise_ref = noise[0]

    targets: list[np.ndarray] = []
    interferences: list[np.ndarray] = []
    supports: list[tuple[int, int]] = []
    # fixed event order: targets by index, then interference by index
    for event in spec.targets + spec.interferences:
        dry, rir = _load_for_render(spec, catalog, event)
        onset_idx = round(event.onset_s * sr)
        if onset_idx >= n:
            raise RenderError(f"event onset {event.onset_s} s is past the clip end")
        available = n - onset_idx
        placed = np.stack(
            [fftconvolve(dry.data[0], rir.data[c])[:available] for c in range(FOA_CHANNELS)]
        )
        gain = scale_to_snr(placed[0], noise_ref, event.snr_db)
        stem = np.zeros((FOA_CHANNELS, n))
        stem[:, onset_idx : onset_idx + placed.shape[1]] = gain * placed
        supports.append((onset_idx, onset_idx + placed.shape[1]))
        if event.kind == TARGET_EVENT:
            targets.append(stem)
        else:
            interferences.append(stem)

    return SceneStems(targets=targets, interferences=interferences, noise=noise, supports=supports)


def render_scene(spec: SceneSpec, catalog: AssetCatalog) -> RenderedScene:
    """Render the mixture and the per-target references at the W channel.

    The ground-truth reference for each target is its reverberant image at the
    reference channel (gain * (rir_W (*) dry)), placed on the clip grid.
    """
    stems = render_stems(spec, catalog)
    n = spec.num_samples
    mixture = np.zeros((FOA_CHANNELS, n))
    for stem in stems.targets:
        mixture += stem
    for stem in stems.interferences:
        mixture += stem
    mixture += stems.noise

    target_references = [
        (event.label, stem[0].copy())
        for event, stem in zip(spec.targets, stems.targets)
    ]
    return RenderedScene(
        mixture=MultichannelAudio(mixture, spec.sample_rate),
        target_references=target_references,
        labels=Counter(spec.target_labels()),
    )


def remeasure_event_snrs(spec: SceneSpec, catalog: AssetCatalog) -> list[float]:
    """Re-measure each event's SNR from its rendered stem (level convention)."""
    stems = render_stems(spec, catalog)
    noise_rms = rms_level(stems.noise[0])
    measured = []
    for stem, (start, stop) in zip(stems.targets + stems.interferences, stems.supports):
        event_rms = rms_level(stem[0, start:stop])
        measured.append(20.0 * float(np.log10(event_rms / noise_rms)))
    return measured


def reconstruct_from_json(spec_path, catalog: AssetCatalog) -> RenderedScene:
    """Validate a scene.json and re-render it; bit-identical to the original."""
    spec = SceneSpec.load(spec_path)
    ensure_valid(spec, catalog)
    return render_scene(spec, catalog)


# ---------------------------------------------------------------------------
# split generation
# ---------------------------------------------------------------------------


def allocate_counts(n: int, proportions, eps: float = 1e-9) -> list[int]:
    """Largest-remainder allocation of n items over the proportions.

    Quotas within ``eps`` of an integer count as that integer, so exact
    fractions like 1/6 survive float evaluation; remainder ties break toward
    the lower bucket index.
    """
    quotas = [n * p for p in proportions]
    base = [int(np.floor(q + eps)) for q in quotas]
    remainder = n - sum(base)
    if remainder < 0:
        raise ValueError("proportions sum to more than 1")
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - base[i]), i))
    for i in order[:remainder]:
        base[i] += 1
    return base


def _half_up(value: float) -> int:
    return int(np.floor(value + 0.5))


def plan_split(config: SplitConfig, master_seed: int) -> list[SceneBucket]:
    """Bucket prescription for every scene of the split, in generation order."""
    config.validate()
    counts = allocate_counts(config.n_mixtures, config.proportions)
    prescriptions = []
    for n_targets, count in enumerate(counts):
        n_same = _half_up(count * config.same_class_fraction) if n_targets >= 2 else 0
        for i in range(count):
            prescriptions.append(SceneBucket(n_targets, same_class=i < n_same))
    order_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=master_seed, spawn_key=(1,))
    )
    order = order_rng.permutation(len(prescriptions))
    return [prescriptions[int(i)] for i in order]


def scene_seed(master_seed: int, index: int) -> int:
    """Per-scene 64-bit seed derived from the split master seed."""
    sequence = np.random.SeedSequence(entropy=master_seed, spawn_key=(0, index))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def _preload_assets(catalog: AssetCatalog) -> None:
    for asset_id in catalog.sources:
        catalog.load_source(asset_id)
    for rir_id in catalog.rirs:
        catalog.load_rir(rir_id)
    for noise_id in catalog.noises:
        catalog.load_noise(noise_id)


def _write_scene(out_dir: Path, spec: SceneSpec, catalog: AssetCatalog) -> None:
    scene_dir = out_dir / spec.id
    ref_dir = scene_dir / "ref"
    ref_dir.mkdir(parents=True, exist_ok=True)
    rendered = render_scene(spec, catalog)
    save_wav(rendered.mixture, scene_dir / "mixture.wav")
    ordinals: Counter = Counter()
    for label, waveform in rendered.target_references:
        ordinals[label] += 1
        save_wav(
            MultichannelAudio(waveform, spec.sample_rate),
            ref_dir / f"{label}_{ordinals[label]}.wav",
        )
    spec.save(scene_dir / "scene.json")


def audit_split(specs, catalog: AssetCatalog) -> dict:
    """Constraint audit over sampled specs: separation, overlap, schema."""
    n_checked = 0
    violations = []
    for spec in specs:
        n_checked += 1
        for violation in validate_scene_spec(spec, catalog):
            violations.append(f"{spec.id}: {violation}")
    return {
        "n_scenes": n_checked,
        "n_scenes_with_violations": len({v.split(":", 1)[0] for v in violations}),
        "violations": violations,
    }


def generate_split(
    config: SplitConfig,
    catalog: AssetCatalog,
    master_seed: int,
    out_dir,
    jobs: int = 1,
) -> dict:
    """Sample, render and write a full split; returns the manifest dict.

    Layout: ``<out_dir>/<scene_id>/{mixture.wav, scene.json, ref/<Label>_<k>.wav}``
    plus a split-level ``manifest.json``. Identical (config, catalog,
    master_seed) produce identical bytes regardless of ``jobs``.
    """
    if config.n_mixtures <= 0:
        raise ValueError("empty split requested")
    config.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _preload_assets(catalog)

    buckets = plan_split(config, master_seed)
    id_width = max(5, len(str(config.n_mixtures - 1)))
    specs = []
    for index, bucket in enumerate(buckets):
        spec = sample_scene(
            bucket,
            catalog,
            scene_seed(master_seed, index),
            scene_id=f"{config.name}_{index:0{id_width}d}",
            duration_s=config.duration_s,
            sample_rate=config.sample_rate,
            noise_ref_rms=config.noise_ref_rms,
        )
        specs.append(spec)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(lambda spec: _write_scene(out_dir, spec, catalog), specs))
    else:
        for spec in specs:
            _write_scene(out_dir, spec, catalog)

    counts = allocate_counts(config.n_mixtures, config.proportions)
    manifest = {
        "schema_version": SPLIT_SCHEMA_VERSION,
        "name": config.name,
        "master_seed": int(master_seed),
        "n_mixtures": config.n_mixtures,
        "duration_s": config.duration_s,
        "sample_rate": config.sample_rate,
        "proportions": list(config.proportions),
        "same_class_fraction": config.same_class_fraction,
        "level_convention": LEVEL_CONVENTION,
        "bucket_counts": {str(k): counts[k] for k in range(4)},
        "same_class_counts": {
            str(k): sum(
                1 for b in buckets if b.n_targets == k and b.same_class
            )
            for k in (2, 3)
        },
        "scenes": [
            {
                "id": spec.id,
                "seed": spec.seed,
                "n_targets": len(spec.targets),
                "same_class": len(set(spec.target_labels())) < len(spec.target_labels()),
                "labels": sorted(spec.target_labels()),
                "path": f"{spec.id}/scene.json",
            }
            for spec in specs
        ],
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest
