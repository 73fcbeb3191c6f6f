"""Synthetic moire generation and dataset ingestion."""

import json
import math
from pathlib import Path

import numpy as np
import pytest
import torch

from demoire.data import (
    DatasetSpec,
    MoireParams,
    TripletDataset,
    beat_period,
    load_dataset,
    make_synthetic_benchmark,
    moire_pattern,
    save_png,
    synthesize_moire,
)
from demoire.errors import ConfigurationError, IngestionError, ShapeError
from demoire.metrics import psnr


@pytest.fixture(scope="module")
def benchmark_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("bench")
    make_synthetic_benchmark(root, n_sequences=4, frames_per_seq=5, size=64, seed=0)
    return root


class TestMoirePattern:
    def test_range_and_shape(self):
        p = MoireParams()
        m = moire_pattern(p, 32, 48)
        assert m.shape == (32, 48)
        assert m.dtype == torch.float64
        assert m.min().item() >= 0.0
        assert m.max().item() <= 1.0

    def test_deterministic_given_seed(self):
        p = MoireParams(seed=5)
        a = moire_pattern(p, 16, 16)
        b = moire_pattern(p, 16, 16)
        assert (a - b).abs().max().item() == 0.0

    def test_seed_changes_pattern(self):
        a = moire_pattern(MoireParams(seed=1), 32, 32)
        b = moire_pattern(MoireParams(seed=2), 32, 32)
        assert (a - b).abs().max().item() > 0.01

    def test_drift_shifts_pattern_between_frames(self):
        # Integer drift: frame k equals frame 0 sampled at coords - k*drift,
        # so the overlapping interior matches a plain shift.
        p = MoireParams(drift=(1.0, 2.0), seed=3)
        m0 = moire_pattern(p, 32, 32, frame=0)
        m1 = moire_pattern(p, 32, 32, frame=1)
        assert (m1[1:, 2:] - m0[:-1, :-2]).abs().max().item() < 1e-9

    def test_zero_drift_is_static(self):
        p = MoireParams(drift=(0.0, 0.0), seed=4)
        m0 = moire_pattern(p, 16, 16, frame=0)
        m5 = moire_pattern(p, 16, 16, frame=5)
        assert (m0 - m5).abs().max().item() == 0.0

    def test_rejects_out_of_band_frequency(self):
        with pytest.raises(ConfigurationError):
            moire_pattern(MoireParams(f1=0.7), 8, 8)

    def test_beat_period_closed_form(self):
        f, theta = 0.2, 0.3
        expected = 1.0 / (2.0 * f * math.sin(theta / 2.0))
        assert abs(beat_period(f, theta) - expected) < 1e-12
        # Small angles beat over longer distances.
        assert beat_period(0.2, 0.1) > beat_period(0.2, 0.4)


class TestSynthesizeMoire:
    def _clip(self, t=3, size=32, seed=0):
        torch.manual_seed(seed)
        return torch.rand(t, 3, size, size)

    def test_output_shapes_and_range(self):
        clip = self._clip()
        moire, clean = synthesize_moire(clip, MoireParams(seed=1))
        assert moire.shape == clip.shape
        assert (clean - clip).abs().max().item() == 0.0
        assert moire.min().item() >= 0.0
        assert moire.max().item() <= 1.0

    def test_zero_gains_identity(self):
        clip = self._clip(seed=1)
        moire, _ = synthesize_moire(clip, MoireParams(gains=(0.0, 0.0, 0.0), seed=2))
        assert (moire - clip).abs().max().item() < 1e-6

    def test_contamination_psnr_in_sanity_band(self):
        # Default parameters must land in the 15-30 dB corruption band.
        rng = np.random.default_rng(0)
        vals = []
        for seed in range(8):
            clip = self._clip(t=2, size=64, seed=seed)
            moire, clean = synthesize_moire(clip, MoireParams(seed=seed))
            vals.append(psnr(moire[0], clean[0]))
        mean = float(np.mean(vals))
        assert 15.0 < mean < 30.0

    def test_deterministic(self):
        clip = self._clip(seed=2)
        a, _ = synthesize_moire(clip, MoireParams(seed=7))
        b, _ = synthesize_moire(clip, MoireParams(seed=7))
        assert (a - b).abs().max().item() == 0.0

    def test_rejects_bad_shape(self):
        with pytest.raises(ShapeError):
            synthesize_moire(torch.rand(3, 1, 8, 8), MoireParams())

    def test_rejects_out_of_range_values(self):
        with pytest.raises(ConfigurationError):
            synthesize_moire(torch.rand(2, 3, 8, 8) + 1.0, MoireParams())


class TestBenchmarkLayout:
    def test_directory_structure(self, benchmark_root):
        for i in range(4):
            seq = benchmark_root / "train" / f"seq_{i:03d}"
            assert sorted(p.name for p in (seq / "moire").glob("*.png")) == [
                f"{t:05d}.png" for t in range(5)
            ]
            assert sorted(p.name for p in (seq / "gt").glob("*.png")) == [
                f"{t:05d}.png" for t in range(5)
            ]

    def test_manifest_contents(self, benchmark_root):
        with open(benchmark_root / "manifest.json") as fh:
            manifest = json.load(fh)
        assert manifest["seed"] == 0
        assert len(manifest["sequences"]) == 4
        contents = [s["content"] for s in manifest["sequences"]]
        assert contents == ["text", "gradient", "checkerboard", "text"]
        for s in manifest["sequences"]:
            assert 0.0 < s["params"]["f1"] < 0.5

    def test_regeneration_is_identical(self, tmp_path, benchmark_root):
        other = tmp_path / "again"
        make_synthetic_benchmark(other, n_sequences=1, frames_per_seq=2, size=64, seed=0)
        a = (other / "train" / "seq_000" / "moire" / "00000.png").read_bytes()
        b = (benchmark_root / "train" / "seq_000" / "moire" / "00000.png").read_bytes()
        assert a == b

    def test_save_png_round_trip(self, tmp_path):
        from PIL import Image

        torch.manual_seed(5)
        img = torch.rand(3, 8, 8)
        path = tmp_path / "x.png"
        save_png(path, img)
        back = np.asarray(Image.open(path), dtype=np.float32) / 255.0
        err = np.abs(back.transpose(2, 0, 1) - img.numpy()).max()
        assert err <= 0.5 / 255.0 + 1e-6


class TestDatasetSpec:
    def test_rejects_unknown_mode(self):
        with pytest.raises(ConfigurationError):
            DatasetSpec(root="x", mode="pair").validate()

    def test_rejects_unknown_edge_policy(self):
        with pytest.raises(ConfigurationError):
            DatasetSpec(root="x", edge_policy="wrap").validate()

    def test_rejects_bad_sizes(self):
        with pytest.raises(ConfigurationError):
            DatasetSpec(root="x", crop=-1).validate()
        with pytest.raises(ConfigurationError):
            DatasetSpec(root="x", batch=0).validate()


class TestTripletDataset:
    def test_interior_centers_skip_edges(self, benchmark_root):
        ds = TripletDataset(DatasetSpec(root=benchmark_root, crop=0))
        # 4 sequences x (5 - 2) interior centers.
        assert len(ds) == 12
        assert all(1 <= t <= 3 for _, t in ds.centers)

    def test_replicate_policy_uses_all_centers(self, benchmark_root):
        ds = TripletDataset(
            DatasetSpec(root=benchmark_root, crop=0, edge_policy="replicate")
        )
        assert len(ds) == 20
        first = ds.load_triplet(0)
        # At the clip start the previous frame replicates the first frame.
        assert (first.frames[0] - first.frames[1]).abs().max().item() == 0.0

    def test_triplet_shapes(self, benchmark_root):
        ds = TripletDataset(DatasetSpec(root=benchmark_root, crop=0))
        t = ds.load_triplet(0)
        assert t.frames.shape == (3, 3, 64, 64)
        assert t.target.shape == (3, 64, 64)
        assert t.frames.min().item() >= 0.0
        assert t.frames.max().item() <= 1.0

    def test_single_mode_repeats_center(self, benchmark_root):
        ds = TripletDataset(DatasetSpec(root=benchmark_root, crop=0, mode="single"))
        t = ds.load_triplet(0)
        assert (t.frames[0] - t.frames[1]).abs().max().item() == 0.0
        assert (t.frames[2] - t.frames[1]).abs().max().item() == 0.0

    def test_crop_windows_match_between_input_and_target(self, benchmark_root):
        spec = DatasetSpec(root=benchmark_root, crop=32, seed=3)
        ds_full = TripletDataset(DatasetSpec(root=benchmark_root, crop=0))
        ds_crop = TripletDataset(spec)
        full = ds_full.load_triplet(0)
        cropped = ds_crop.load_triplet(0, crop_origin=(10, 20))
        assert cropped.frames.shape[-2:] == (32, 32)
        sub_f = full.frames[..., 10:42, 20:52]
        sub_t = full.target[..., 10:42, 20:52]
        assert (cropped.frames - sub_f).abs().max().item() == 0.0
        assert (cropped.target - sub_t).abs().max().item() == 0.0

    def test_oversized_crop_rejected(self, benchmark_root):
        ds = TripletDataset(DatasetSpec(root=benchmark_root, crop=128))
        with pytest.raises(ConfigurationError):
            ds.load_triplet(0)

    def test_missing_split_rejected(self, benchmark_root):
        with pytest.raises(IngestionError):
            TripletDataset(DatasetSpec(root=benchmark_root, split="val"))

    def test_unpaired_frames_name_sequence_and_files(self, tmp_path):
        make_synthetic_benchmark(tmp_path, n_sequences=1, frames_per_seq=3, size=64, seed=1)
        (tmp_path / "train" / "seq_000" / "moire" / "00002.png").unlink()
        with pytest.raises(IngestionError) as exc:
            TripletDataset(DatasetSpec(root=tmp_path))
        assert "seq_000" in str(exc.value)
        assert "00002.png" in str(exc.value)

    def test_corrupt_png_names_sequence(self, tmp_path):
        make_synthetic_benchmark(tmp_path, n_sequences=1, frames_per_seq=3, size=64, seed=2)
        bad = tmp_path / "train" / "seq_000" / "moire" / "00001.png"
        bad.write_bytes(b"not a png")
        ds = TripletDataset(DatasetSpec(root=tmp_path, crop=0))
        with pytest.raises(IngestionError) as exc:
            ds.load_triplet(0)
        assert "seq_000" in str(exc.value)


class TestLoadDataset:
    def test_batch_shapes(self, benchmark_root):
        spec = DatasetSpec(root=benchmark_root, crop=32, batch=4, seed=0)
        frames, targets, metas = next(load_dataset(spec))
        assert frames.shape == (4, 3, 3, 32, 32)
        assert targets.shape == (4, 3, 32, 32)
        assert len(metas) == 4

    def test_finite_pass_covers_every_center_once(self, benchmark_root):
        spec = DatasetSpec(root=benchmark_root, crop=0, batch=5, seed=1)
        seen = []
        for frames, targets, metas in load_dataset(spec):
            seen.extend(metas)
        assert len(seen) == 12
        assert len(set(seen)) == 12

    def test_final_short_batch_included(self, benchmark_root):
        spec = DatasetSpec(root=benchmark_root, crop=0, batch=5, seed=1)
        sizes = [f.shape[0] for f, _, _ in load_dataset(spec)]
        assert sizes == [5, 5, 2]

    def test_same_seed_same_stream(self, benchmark_root):
        spec = DatasetSpec(root=benchmark_root, crop=32, batch=3, seed=9)
        a = next(load_dataset(spec))
        b = next(load_dataset(spec))
        assert a[2] == b[2]
        assert (a[0] - b[0]).abs().max().item() == 0.0

    def test_different_seed_different_stream(self, benchmark_root):
        fa, _, ma = next(load_dataset(DatasetSpec(root=benchmark_root, crop=32, batch=8, seed=0)))
        fb, _, mb = next(load_dataset(DatasetSpec(root=benchmark_root, crop=32, batch=8, seed=1)))
        assert ma != mb or (fa - fb).abs().max().item() > 0.0

    def test_infinite_iterator_loops(self, benchmark_root):
        spec = DatasetSpec(root=benchmark_root, crop=0, batch=8, seed=0)
        it = load_dataset(spec, infinite=True)
        for _ in range(4):
            frames, _, _ = next(it)
        assert frames.shape[0] in (4, 8)

    def test_unshuffled_order_is_stable(self, benchmark_root):
        spec = DatasetSpec(root=benchmark_root, crop=0, batch=12, seed=0)
        _, _, metas = next(load_dataset(spec, shuffle=False))
        assert metas == sorted(metas)
