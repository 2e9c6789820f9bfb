import json

import numpy as np
import pytest

from helpers import build_catalog

from s5kit.audio import MultichannelAudio, load_wav, rms_level, save_wav, sdri
from s5kit.catalog import AssetCatalog, CatalogError, NoiseEntry, RirEntry, SourceEntry, sha256_file
from s5kit.scene import EventSpec, NoiseSpec, SceneSpec, SceneValidationError
from s5kit.synth import (
    SceneBucket,
    SceneConstraintError,
    SplitConfig,
    allocate_counts,
    generate_split,
    plan_split,
    reconstruct_from_json,
    remeasure_event_snrs,
    render_scene,
    render_stems,
    sample_scene,
    scale_to_snr,
    scene_seed,
)

CLIP = 0.5
SR = 32000


class TestScaleToSnr:
    def test_equal_rms_zero_db(self):
        rng = np.random.default_rng(0)
        event = rng.uniform(-1, 1, 4000)
        noise = rng.permutation(event)
        assert scale_to_snr(event, noise, 0.0) == pytest.approx(1.0, abs=1e-12)

    def test_twenty_db_is_gain_ten(self):
        rng = np.random.default_rng(1)
        event = rng.uniform(-1, 1, 4000)
        noise = rng.permutation(event)
        assert scale_to_snr(event, noise, 20.0) == pytest.approx(10.0, abs=1e-9)

    def test_remeasured_snr_matches_request(self):
        rng = np.random.default_rng(2)
        event = rng.uniform(-1, 1, 3000)
        noise = 0.1 * rng.uniform(-1, 1, 3000)
        gain = scale_to_snr(event, noise, 7.3)
        measured = 20 * np.log10(rms_level(gain * event) / rms_level(noise))
        assert measured == pytest.approx(7.3, abs=1e-6)

    def test_silent_inputs_rejected(self):
        with pytest.raises(ValueError, match="silent event"):
            scale_to_snr(np.zeros(10), np.ones(10), 5.0)
        with pytest.raises(ValueError, match="silent noise"):
            scale_to_snr(np.ones(10), np.zeros(10), 5.0)


class TestSampleScene:
    def test_zero_target_bucket(self, catalog):
        spec = sample_scene(SceneBucket(0), catalog, seed=11, duration_s=CLIP)
        assert spec.targets == ()
        assert spec.noise.asset_id in catalog.noises

    def test_deterministic_for_same_seed(self, catalog):
        a = sample_scene(SceneBucket(2, same_class=True), catalog, seed=42, duration_s=CLIP)
        b = sample_scene(SceneBucket(2, same_class=True), catalog, seed=42, duration_s=CLIP)
        assert a == b
        assert json.dumps(a.to_json_dict(), sort_keys=True) == json.dumps(
            b.to_json_dict(), sort_keys=True
        )

    def test_different_seeds_differ(self, catalog):
        a = sample_scene(SceneBucket(2), catalog, seed=1, duration_s=CLIP)
        b = sample_scene(SceneBucket(2), catalog, seed=2, duration_s=CLIP)
        assert a != b

    def test_same_class_bucket_duplicates_labels(self, catalog):
        spec = sample_scene(SceneBucket(2, same_class=True), catalog, seed=5, duration_s=CLIP)
        labels = spec.target_labels()
        assert len(labels) == 2
        assert len(set(labels)) == 1

    def test_distinct_bucket_has_distinct_labels(self, catalog):
        for seed in range(10):
            spec = sample_scene(SceneBucket(3), catalog, seed=seed, duration_s=CLIP)
            labels = spec.target_labels()
            assert len(set(labels)) == 3

    def test_constraints_hold_over_many_draws(self, catalog):
        from s5kit.scene import validate_scene_spec

        for seed in range(60):
            bucket = SceneBucket(3, same_class=seed % 2 == 0)
            spec = sample_scene(bucket, catalog, seed=seed, duration_s=CLIP)
            assert validate_scene_spec(spec, catalog) == []

    def test_snr_ranges_respected(self, catalog):
        for seed in range(30):
            spec = sample_scene(SceneBucket(2, same_class=True), catalog, seed=seed,
                                duration_s=CLIP)
            for event in spec.targets:
                assert 5.0 <= event.snr_db <= 20.0
            for event in spec.interferences:
                assert 0.0 <= event.snr_db <= 15.0

    def test_single_room_per_scene(self, catalog):
        for seed in range(20):
            spec = sample_scene(SceneBucket(3), catalog, seed=seed, duration_s=CLIP)
            assert len({(e.room, e.placement) for e in spec.events}) <= 1

    def test_separation_failure_reported(self, tmp_path):
        # one room with only two directions 45 deg apart: same-class pair impossible
        catalog, _ = build_catalog(tmp_path / "assets", seed=9)
        narrow = AssetCatalog(
            list(catalog.sources.values()),
            [e for e in catalog.rirs.values()
             if e.room == "roomA" and e.azimuth_deg in (0.0, 45.0) and e.elevation_deg == 0.0],
            list(catalog.noises.values()),
            root=catalog.root,
        )
        with pytest.raises(SceneConstraintError, match="deg apart"):
            sample_scene(SceneBucket(2, same_class=True), narrow, seed=0, duration_s=CLIP)

    def test_noise_normalization_recorded(self, catalog):
        spec = sample_scene(SceneBucket(1), catalog, seed=77, duration_s=CLIP,
                            noise_ref_rms=0.02)
        noise = catalog.load_noise(spec.noise.asset_id)
        start = round(spec.noise.start_offset_s * SR)
        segment = noise.data[0, start : start + round(CLIP * SR)]
        assert rms_level(segment * spec.noise.gain) == pytest.approx(0.02, abs=1e-12)


class TestRenderScene:
    def test_no_events_mixture_is_noise_window(self, catalog):
        noise_id = sorted(catalog.noises)[0]
        spec = SceneSpec(
            id="silence",
            seed=0,
            duration_s=CLIP,
            sample_rate=SR,
            events=(),
            noise=NoiseSpec(asset_id=noise_id, start_offset_s=0.125, gain=1.0),
        )
        rendered = render_scene(spec, catalog)
        start = round(0.125 * SR)
        n = round(CLIP * SR)
        noise = catalog.load_noise(noise_id)
        assert np.array_equal(rendered.mixture.data, noise.data[:, start : start + n])
        assert rendered.target_references == []
        assert rendered.mixture.channels == 4
        assert rendered.mixture.num_samples == n

    def test_identity_rir_places_scaled_dry_source(self, tmp_path, catalog):
        # identity RIR: unit impulse on W, zeros elsewhere
        rir_path = tmp_path / "identity.wav"
        impulse = np.zeros((4, 8))
        impulse[0, 0] = 0.999969482421875  # 32767/32768, exact in 16-bit
        save_wav(MultichannelAudio(impulse, SR), rir_path)
        identity = RirEntry(
            id="identity",
            path=str(rir_path.name),
            sha256=sha256_file(rir_path),
            room="roomX",
            placement="center",
            azimuth_deg=0.0,
            elevation_deg=0.0,
            distance_cm=75.0,
        )
        custom = AssetCatalog(
            list(catalog.sources.values()),
            [identity],
            list(catalog.noises.values()),
            root=tmp_path,
        )
        # reuse audio files from the shared catalog via absolute-ish relative paths
        for entry in list(custom.sources.values()):
            custom.sources[entry.id] = SourceEntry(
                id=entry.id,
                path=str((catalog.root / entry.path).resolve()),
                sha256=entry.sha256,
                label=entry.label,
                kind=entry.kind,
                duration_s=entry.duration_s,
            )
        for entry in list(custom.noises.values()):
            custom.noises[entry.id] = NoiseEntry(
                id=entry.id,
                path=str((catalog.root / entry.path).resolve()),
                sha256=entry.sha256,
                duration_s=entry.duration_s,
            )
        asset_id = sorted(custom.sources)[-1]
        label = custom.sources[asset_id].label
        spec = SceneSpec(
            id="identity_scene",
            seed=0,
            duration_s=CLIP,
            sample_rate=SR,
            events=(
                EventSpec(
                    kind="target",
                    label=label,
                    asset_id=asset_id,
                    rir_id="identity",
                    room="roomX",
                    placement="center",
                    azimuth_deg=0.0,
                    elevation_deg=0.0,
                    onset_s=0.1,
                    snr_db=12.0,
                ),
            ),
            noise=NoiseSpec(asset_id=sorted(custom.noises)[0], start_offset_s=0.0, gain=1.0),
        )
        stems = render_stems(spec, custom)
        dry = custom.load_source(asset_id).data[0]
        onset_idx = round(0.1 * SR)
        rendered = stems.targets[0][0]
        support = rendered[onset_idx : onset_idx + len(dry)]
        # W channel carries the dry source scaled by the impulse and SNR gains
        scale = support[np.argmax(np.abs(dry))] / dry[np.argmax(np.abs(dry))]
        assert np.allclose(support, scale * dry, atol=1e-9)
        assert np.allclose(rendered[:onset_idx], 0.0)
        # Y/Z/X stems are zero: the impulse lives on W only
        assert np.allclose(stems.targets[0][1:], 0.0, atol=1e-12)
        # and the mixture is exactly stem + noise
        rendered_scene = render_scene(spec, custom)
        assert np.array_equal(
            rendered_scene.mixture.data, stems.targets[0] + stems.noise
        )

    def test_double_render_bit_identical(self, catalog, tmp_path):
        spec = sample_scene(SceneBucket(3, same_class=True), catalog, seed=1234,
                            duration_s=CLIP)
        first = render_scene(spec, catalog)
        second = render_scene(spec, catalog)
        assert np.array_equal(first.mixture.data, second.mixture.data)
        for (_, a), (_, b) in zip(first.target_references, second.target_references):
            assert np.array_equal(a, b)
        p1, p2 = tmp_path / "a.wav", tmp_path / "b.wav"
        save_wav(first.mixture, p1)
        save_wav(second.mixture, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_mixture_equals_sum_of_stems_exactly(self, catalog):
        spec = sample_scene(SceneBucket(2, same_class=True), catalog, seed=321,
                            duration_s=CLIP)
        rendered = render_scene(spec, catalog)
        stems = render_stems(spec, catalog)
        total = np.zeros_like(rendered.mixture.data)
        for stem in stems.targets:
            total += stem
        for stem in stems.interferences:
            total += stem
        total += stems.noise
        assert np.array_equal(rendered.mixture.data, total)

    def test_reference_count_and_length(self, catalog):
        spec = sample_scene(SceneBucket(3, same_class=True), catalog, seed=55,
                            duration_s=CLIP)
        rendered = render_scene(spec, catalog)
        assert len(rendered.target_references) == 3
        for _, wave in rendered.target_references:
            assert wave.shape == (round(CLIP * SR),)
        assert rendered.labels == __import__("collections").Counter(spec.target_labels())

    def test_snr_fidelity(self, catalog):
        for seed in (3, 14, 15):
            spec = sample_scene(SceneBucket(3, same_class=True), catalog, seed=seed,
                                duration_s=CLIP)
            measured = remeasure_event_snrs(spec, catalog)
            requested = [e.snr_db for e in spec.targets + spec.interferences]
            assert measured == pytest.approx(requested, abs=1e-6)

    def test_references_score_zero_against_identity_submission(self, catalog):
        spec = sample_scene(SceneBucket(2, same_class=True), catalog, seed=88,
                            duration_s=CLIP)
        rendered = render_scene(spec, catalog)
        mix_ref = rendered.mixture.data[0]
        for _, wave in rendered.target_references:
            assert sdri(mix_ref, wave, mix_ref) == 0.0


class TestReconstruct:
    def test_round_trip_bit_exact(self, catalog, tmp_path):
        spec = sample_scene(SceneBucket(2, same_class=True), catalog, seed=2024,
                            duration_s=CLIP)
        direct = render_scene(spec, catalog)
        path = tmp_path / "scene.json"
        spec.save(path)
        rebuilt = reconstruct_from_json(path, catalog)
        assert np.array_equal(direct.mixture.data, rebuilt.mixture.data)
        for (la, a), (lb, b) in zip(direct.target_references, rebuilt.target_references):
            assert la == lb
            assert np.array_equal(a, b)

    def test_missing_asset_names_the_id(self, catalog, tmp_path):
        spec = sample_scene(SceneBucket(1), catalog, seed=6, duration_s=CLIP)
        payload = spec.to_json_dict()
        payload["events"][0]["asset_id"] = "src_vanished"
        path = tmp_path / "broken.json"
        path.write_text(json.dumps(payload))
        with pytest.raises(SceneValidationError, match="src_vanished"):
            reconstruct_from_json(path, catalog)

    def test_separation_violation_rejected_before_rendering(self, catalog, tmp_path):
        # two same-class targets on catalog directions only 45 degrees apart
        label = "Speech"
        events = []
        for az in (0.0, 45.0):
            rir_id = f"roomA_center_az{int(az):03d}_el+00"
            entry = catalog.rir_entry(rir_id)
            events.append(
                EventSpec(
                    kind="target",
                    label=label,
                    asset_id="src_Speech_0",
                    rir_id=rir_id,
                    room=entry.room,
                    placement=entry.placement,
                    azimuth_deg=entry.azimuth_deg,
                    elevation_deg=entry.elevation_deg,
                    onset_s=0.05 + az / 1000,
                    snr_db=10.0,
                )
            )
        spec = SceneSpec(
            id="too_close",
            seed=0,
            duration_s=CLIP,
            sample_rate=SR,
            events=tuple(events),
            noise=NoiseSpec(asset_id=sorted(catalog.noises)[0], start_offset_s=0.0, gain=1.0),
        )
        path = tmp_path / "close.json"
        spec.save(path)
        with pytest.raises(SceneValidationError, match="60 deg minimum"):
            reconstruct_from_json(path, catalog)


class TestAllocateCounts:
    def test_validation_split_arithmetic(self):
        assert allocate_counts(1800, (1 / 6, 1 / 6, 1 / 3, 1 / 3)) == [300, 300, 600, 600]

    def test_test_split_arithmetic(self):
        assert allocate_counts(1512, (1 / 6, 1 / 6, 1 / 3, 1 / 3)) == [252, 252, 504, 504]

    def test_exact_small_fractions(self):
        assert allocate_counts(6, (1 / 6, 1 / 6, 1 / 3, 1 / 3)) == [1, 1, 2, 2]

    def test_largest_remainder_with_ties(self):
        assert allocate_counts(10, (0.25, 0.25, 0.25, 0.25)) == [3, 3, 2, 2]

    def test_counts_sum_to_n(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            raw = rng.uniform(0.05, 1.0, size=4)
            proportions = tuple(raw / raw.sum())
            n = int(rng.integers(1, 500))
            counts = allocate_counts(n, proportions)
            assert sum(counts) == n
            assert all(c >= 0 for c in counts)


class TestPlanSplit:
    def test_bucket_and_same_class_counts(self):
        config = SplitConfig(n_mixtures=12)
        buckets = plan_split(config, master_seed=0)
        by_targets = {k: [b for b in buckets if b.n_targets == k] for k in range(4)}
        assert [len(by_targets[k]) for k in range(4)] == [2, 2, 4, 4]
        assert sum(b.same_class for b in by_targets[2]) == 2
        assert sum(b.same_class for b in by_targets[3]) == 2
        assert not any(b.same_class for b in by_targets[0] + by_targets[1])

    def test_deterministic_order(self):
        config = SplitConfig(n_mixtures=30)
        assert plan_split(config, 7) == plan_split(config, 7)
        assert plan_split(config, 7) != plan_split(config, 8)


@pytest.fixture(scope="module")
def small_split(tmp_path_factory):
    root = tmp_path_factory.mktemp("split_assets")
    catalog, _ = build_catalog(root)
    out = tmp_path_factory.mktemp("split_out")
    config = SplitConfig(n_mixtures=12, duration_s=CLIP, name="dev")
    manifest = generate_split(config, catalog, master_seed=2026, out_dir=out)
    return catalog, out, manifest


class TestGenerateSplit:
    def test_layout(self, small_split):
        _, out, manifest = small_split
        assert (out / "manifest.json").exists()
        for entry in manifest["scenes"]:
            scene_dir = out / entry["id"]
            assert (scene_dir / "mixture.wav").exists()
            assert (scene_dir / "scene.json").exists()
            refs = sorted(p.name for p in (scene_dir / "ref").glob("*.wav"))
            assert len(refs) == entry["n_targets"]

    def test_manifest_consistency(self, small_split):
        _, out, manifest = small_split
        assert manifest["bucket_counts"] == {"0": 2, "1": 2, "2": 4, "3": 4}
        on_disk = json.loads((out / "manifest.json").read_text())
        assert on_disk == json.loads(json.dumps(manifest))

    def test_mixture_format(self, small_split):
        _, out, manifest = small_split
        entry = manifest["scenes"][0]
        audio = load_wav(out / entry["id"] / "mixture.wav")
        assert audio.channels == 4
        assert audio.sample_rate == SR
        assert audio.num_samples == round(CLIP * SR)

    def test_reconstruction_matches_files(self, small_split):
        catalog, out, manifest = small_split
        entry = next(e for e in manifest["scenes"] if e["n_targets"] >= 2)
        scene_dir = out / entry["id"]
        rebuilt = reconstruct_from_json(scene_dir / "scene.json", catalog)
        tmp = scene_dir / "rebuilt.wav"
        save_wav(rebuilt.mixture, tmp)
        assert tmp.read_bytes() == (scene_dir / "mixture.wav").read_bytes()
        tmp.unlink()

    def test_empty_split_rejected(self, catalog, tmp_path):
        with pytest.raises(ValueError, match="empty split requested"):
            generate_split(SplitConfig(n_mixtures=0), catalog, 0, tmp_path)

    def test_determinism_across_runs_and_jobs(self, tmp_path):
        catalog1, _ = build_catalog(tmp_path / "a_assets", seed=77)
        catalog2, _ = build_catalog(tmp_path / "b_assets", seed=77)
        config = SplitConfig(n_mixtures=6, duration_s=CLIP, name="rep")
        m1 = generate_split(config, catalog1, 99, tmp_path / "a_out", jobs=1)
        m2 = generate_split(config, catalog2, 99, tmp_path / "b_out", jobs=4)
        assert (tmp_path / "a_out" / "manifest.json").read_bytes() == (
            tmp_path / "b_out" / "manifest.json"
        ).read_bytes()
        for entry in m1["scenes"]:
            for name in ("mixture.wav", "scene.json"):
                assert (tmp_path / "a_out" / entry["id"] / name).read_bytes() == (
                    tmp_path / "b_out" / entry["id"] / name
                ).read_bytes()
        assert m1 == m2


def test_scene_seed_is_stable_and_distinct():
    seeds = [scene_seed(123, i) for i in range(100)]
    assert seeds == [scene_seed(123, i) for i in range(100)]
    assert len(set(seeds)) == 100
    assert all(0 <= s < 2**64 for s in seeds)
