"""Shared test fixtures: a tiny but fully functional asset catalog.

Assets are synthetic (tone bursts, impulse-plus-tail RIRs, white-noise beds)
but carry the real catalog structure: hashes, directions, durations. Sized
for desk-scale scenes (default 0.5 s clips).
"""

import math

import numpy as np

from s5kit.audio import MultichannelAudio, save_wav
from s5kit.catalog import AssetCatalog, NoiseEntry, RirEntry, SourceEntry, sha256_file

SR = 32000

TARGET_CLASSES = ("Speech", "Buzzer", "Pour", "Dishes", "Cough", "AlarmClock")
INTERFERENCE_NAMES = ("office_hum", "street")


def _foa_gains(azimuth_deg, elevation_deg):
    az, el = math.radians(azimuth_deg), math.radians(elevation_deg)
    return np.array(
        [1.0, math.sin(az) * math.cos(el), math.sin(el), math.cos(az) * math.cos(el)]
    )


def _tone_burst(rng, n, sr):
    t = np.arange(n) / sr
    freq = float(rng.uniform(200, 2000))
    envelope = np.hanning(n)
    return 0.4 * envelope * np.sin(2 * np.pi * freq * t + float(rng.uniform(0, 2 * np.pi)))


def _rir_wave(rng, azimuth_deg, elevation_deg, distance_cm, sr, n=400):
    delay = int(round(distance_cm / 100 / 343.0 * sr))
    gains = _foa_gains(azimuth_deg, elevation_deg)
    rir = np.zeros((4, n))
    rir[:, delay] = 0.5 * gains
    tail = rng.normal(scale=0.02, size=(4, n - delay - 1))
    tail *= np.exp(-np.arange(n - delay - 1) / (0.1 * n))
    rir[:, delay + 1 :] += tail
    return rir


def build_catalog(
    root,
    sample_rate=SR,
    clip_s=0.5,
    classes=TARGET_CLASSES,
    assets_per_class=2,
    seed=1234,
):
    """Write a tiny asset tree under ``root`` and return (catalog, manifest path).

    Event assets last 0.3-0.7 of a clip; noise beds last 4 clips. RIR grids
    cover two rooms with azimuths spread widely enough to satisfy the
    same-class separation rule.
    """
    root = root if hasattr(root, "mkdir") else __import__("pathlib").Path(root)
    rng = np.random.default_rng(seed)
    for sub in ("sources", "rirs", "noise"):
        (root / sub).mkdir(parents=True, exist_ok=True)

    sources = []
    for label in classes:
        for k in range(assets_per_class):
            # short relative to the clip so overlap constraints stay satisfiable
            n = int(round(float(rng.uniform(0.12, 0.3)) * clip_s * sample_rate))
            wave = _tone_burst(rng, n, sample_rate)
            path = root / "sources" / f"{label}_{k}.wav"
            save_wav(MultichannelAudio(wave, sample_rate), path)
            sources.append(
                SourceEntry(
                    id=f"src_{label}_{k}",
                    path=str(path.relative_to(root)),
                    sha256=sha256_file(path),
                    label=label,
                    kind="target",
                    duration_s=n / sample_rate,
                )
            )
    for name in INTERFERENCE_NAMES:
        n = int(round(0.25 * clip_s * sample_rate))
        wave = 0.3 * rng.uniform(-1.0, 1.0, size=n) * np.hanning(n)
        path = root / "sources" / f"intf_{name}.wav"
        save_wav(MultichannelAudio(wave, sample_rate), path)
        sources.append(
            SourceEntry(
                id=f"intf_{name}",
                path=str(path.relative_to(root)),
                sha256=sha256_file(path),
                label=name,
                kind="interference",
                duration_s=n / sample_rate,
            )
        )

    rirs = []
    grids = {
        ("roomA", "center"): [(az, el) for az in range(0, 360, 45) for el in (0.0, 20.0)],
        ("roomB", "side"): [(az, el) for az in range(0, 360, 60) for el in (0.0, -20.0)],
    }
    for (room, placement), directions in grids.items():
        for az, el in directions:
            distance = 75.0 if el == 0.0 else 120.0
            wave = _rir_wave(rng, az, el, distance, sample_rate)
            rir_id = f"{room}_{placement}_az{int(az):03d}_el{int(el):+03d}"
            path = root / "rirs" / f"{rir_id}.wav"
            save_wav(MultichannelAudio(wave, sample_rate), path)
            rirs.append(
                RirEntry(
                    id=rir_id,
                    path=str(path.relative_to(root)),
                    sha256=sha256_file(path),
                    room=room,
                    placement=placement,
                    azimuth_deg=float(az),
                    elevation_deg=float(el),
                    distance_cm=distance,
                )
            )

    noises = []
    for k in range(2):
        n = int(round(4 * clip_s * sample_rate))
        wave = 0.05 * rng.uniform(-1.0, 1.0, size=(4, n))
        path = root / "noise" / f"bed_{k}.wav"
        save_wav(MultichannelAudio(wave, sample_rate), path)
        noises.append(
            NoiseEntry(
                id=f"noise_{k}",
                path=str(path.relative_to(root)),
                sha256=sha256_file(path),
                duration_s=n / sample_rate,
            )
        )

    catalog = AssetCatalog(sources, rirs, noises, root=root)
    manifest_path = root / "catalog.json"
    catalog.save(manifest_path)
    return catalog, manifest_path


def scene_dirs(dataset_dir):
    return sorted(p for p in dataset_dir.iterdir() if (p / "mixture.wav").is_file())


def make_oracle_submission(dataset_dir, submission_dir):
    """Submit the reference stems themselves (upper-bound submission)."""
    for scene_dir in scene_dirs(dataset_dir):
        out = submission_dir / scene_dir.name
        out.mkdir(parents=True, exist_ok=True)
        for ref in sorted((scene_dir / "ref").glob("*.wav")):
            (out / ref.name).write_bytes(ref.read_bytes())


def make_identity_submission(dataset_dir, submission_dir):
    """Submit the mixture's reference channel for every reference source."""
    from s5kit.audio import MultichannelAudio, load_wav, save_wav

    for scene_dir in scene_dirs(dataset_dir):
        out = submission_dir / scene_dir.name
        out.mkdir(parents=True, exist_ok=True)
        mixture = load_wav(scene_dir / "mixture.wav")
        channel = MultichannelAudio(mixture.data[0], mixture.sample_rate)
        for ref in sorted((scene_dir / "ref").glob("*.wav")):
            save_wav(channel, out / ref.name)


def make_empty_submission(dataset_dir, submission_dir):
    for scene_dir in scene_dirs(dataset_dir):
        (submission_dir / scene_dir.name).mkdir(parents=True, exist_ok=True)
