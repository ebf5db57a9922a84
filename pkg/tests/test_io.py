"""Tests for containers, checkpoints, and provenance-stamped CSV files."""

import json
import struct

import numpy as np
import pytest

import qhbm
from qhbm import ebm
from qhbm.embed import PixelImage, PixelProbabilities
from qhbm.errors import DataError
from qhbm.io import (
    CKPT_MAGIC,
    IMAGE_MAGIC,
    config_hash,
    load_checkpoint,
    read_csv_skip_provenance,
    read_image_container,
    read_images_csv,
    save_checkpoint,
    write_csv_with_provenance,
    write_image_container,
    write_images_csv,
)
from qhbm.train import TrainConfig, fit, init_train_state, train_step


def sample_images():
    rng = np.random.default_rng(3)
    # Quarter-steps survive the f32 storage format bit-exactly.
    grids = np.round(rng.uniform(0, 8, size=(3, 4, 5)) * 4) / 4.0
    labels = ["signal", "background", "unlabelled"]
    weights = [1.0, 0.5, 2.0]
    return [PixelImage(g, lab, w) for g, lab, w in zip(grids, labels, weights)]


def trained_state():
    cfg = TrainConfig(
        n_qubits=2,
        n_layers=1,
        n_mc_samples=30,
        n_embed_samples=20,
        batch_size=2,
        max_epochs=2,
        seed=13,
    )
    rng = np.random.default_rng(5)
    events = [PixelProbabilities(rng.uniform(0.2, 0.8, size=2)) for _ in range(4)]
    best, history = fit(cfg, events[:3], events[3:])
    return best, cfg, history


class TestConfigHash:
    def test_stable_and_order_independent(self):
        a = config_hash({"x": 1, "y": [2, 3]})
        b = config_hash({"y": [2, 3], "x": 1})
        assert a == b
        assert len(a) == 16
        assert all(c in "0123456789abcdef" for c in a)

    def test_differs_across_configs(self):
        assert config_hash({"x": 1}) != config_hash({"x": 2})


class TestCsvProvenance:
    def test_provenance_line_format(self, tmp_path):
        path = tmp_path / "out.csv"
        cfg = {"seed": 1}
        write_csv_with_provenance(path, ["a", "b"], [[1, 2], [3, 4]], cfg)
        first = path.read_text().splitlines()[0]
        assert first == f"# qhbm {qhbm.__version__} config={config_hash(cfg)}"

    def test_round_trip(self, tmp_path):
        path = tmp_path / "out.csv"
        write_csv_with_provenance(path, ["x", "y"], [[1, "p"], [2, "q"]], {})
        header, rows = read_csv_skip_provenance(path)
        assert header == ["x", "y"]
        assert rows == [["1", "p"], ["2", "q"]]

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("# only a comment\n")
        with pytest.raises(DataError):
            read_csv_skip_provenance(path)


class TestImageContainer:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "events.qhbimg"
        images = sample_images()
        write_image_container(path, images, {"note": "round trip"})
        loaded, meta = read_image_container(path)
        assert meta == {"note": "round trip"}
        assert len(loaded) == 3
        for orig, back in zip(images, loaded):
            assert np.array_equal(orig.intensities, back.intensities)
            assert back.label == orig.label
            assert back.weight == orig.weight

    def test_magic_and_sidecar(self, tmp_path):
        path = tmp_path / "events.qhbimg"
        write_image_container(path, sample_images())
        assert path.read_bytes()[: len(IMAGE_MAGIC)] == IMAGE_MAGIC
        sidecar = json.loads((tmp_path / "events.qhbimg.json").read_text())
        assert sidecar["labels"] == ["signal", "background", "unlabelled"]
        assert sidecar["weights"] == [1.0, 0.5, 2.0]
        assert sidecar["width"] == 5 and sidecar["height"] == 4

    def test_empty_container(self, tmp_path):
        path = tmp_path / "none.qhbimg"
        write_image_container(path, [], {"kind": "raw"})
        loaded, meta = read_image_container(path)
        assert loaded == []
        assert meta == {"kind": "raw"}

    def test_rejects_mixed_shapes(self, tmp_path):
        images = [PixelImage(np.ones((2, 2))), PixelImage(np.ones((3, 3)))]
        with pytest.raises(DataError):
            write_image_container(tmp_path / "bad.qhbimg", images)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            read_image_container(tmp_path / "absent.qhbimg")

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.qhbimg"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 32)
        with pytest.raises(DataError):
            read_image_container(path)

    def test_truncation(self, tmp_path):
        path = tmp_path / "events.qhbimg"
        write_image_container(path, sample_images())
        raw = path.read_bytes()
        path.write_bytes(raw[:-7])
        with pytest.raises(DataError):
            read_image_container(path)

    def test_sidecar_count_mismatch(self, tmp_path):
        path = tmp_path / "events.qhbimg"
        write_image_container(path, sample_images())
        sidecar_path = tmp_path / "events.qhbimg.json"
        sidecar = json.loads(sidecar_path.read_text())
        sidecar["labels"] = sidecar["labels"][:-1]
        sidecar_path.write_text(json.dumps(sidecar))
        with pytest.raises(DataError):
            read_image_container(path)

    def test_missing_sidecar_uses_defaults(self, tmp_path):
        path = tmp_path / "events.qhbimg"
        write_image_container(path, sample_images())
        (tmp_path / "events.qhbimg.json").unlink()
        loaded, meta = read_image_container(path)
        assert [im.label for im in loaded] == ["unlabelled"] * 3
        assert [im.weight for im in loaded] == [1.0] * 3
        assert meta == {}


class TestImagesCsv:
    def test_round_trip_exact(self, tmp_path):
        path = tmp_path / "events.csv"
        rng = np.random.default_rng(8)
        images = [
            PixelImage(rng.uniform(0, 5, size=(3, 3)), "signal", 0.75),
            PixelImage(rng.uniform(0, 5, size=(3, 3)), "background", 1.25),
        ]
        write_images_csv(path, images, {"seed": 8})
        loaded = read_images_csv(path)
        for orig, back in zip(images, loaded):
            assert np.array_equal(orig.intensities, back.intensities)
            assert back.label == orig.label
            assert back.weight == orig.weight
        assert path.read_text().startswith("# qhbm ")

    def test_rejects_empty(self, tmp_path):
        with pytest.raises(DataError):
            write_images_csv(tmp_path / "none.csv", [])

    def test_rejects_malformed_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(DataError):
            read_images_csv(path)

    def test_rejects_short_row(self, tmp_path):
        path = tmp_path / "events.csv"
        write_images_csv(path, [PixelImage(np.ones((2, 2)))])
        lines = path.read_text().splitlines()
        lines[-1] = lines[-1].rsplit(",", 1)[0]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DataError):
            read_images_csv(path)


class TestCheckpoint:
    def test_full_round_trip(self, tmp_path):
        state, cfg, history = trained_state()
        path = tmp_path / "model.qhbm"
        save_checkpoint(path, state, cfg, history)
        loaded, loaded_cfg, loaded_history = load_checkpoint(path)

        assert loaded_cfg == cfg
        assert loaded_history == history
        assert np.array_equal(loaded.energy_model.weights, state.energy_model.weights)
        assert np.array_equal(
            loaded.energy_model.visible_bias, state.energy_model.visible_bias
        )
        assert np.array_equal(
            loaded.energy_model.hidden_bias, state.energy_model.hidden_bias
        )
        assert np.array_equal(loaded.ansatz.angles, state.ansatz.angles)
        assert np.array_equal(
            loaded.hamiltonian.basis_indices, state.hamiltonian.basis_indices
        )
        assert np.array_equal(loaded.hamiltonian.energies, state.hamiltonian.energies)
        assert loaded.hamiltonian.log_partition == state.hamiltonian.log_partition
        assert loaded.chain.current == state.chain.current
        assert loaded.chain.current_energy == state.chain.current_energy
        assert loaded.epoch == state.epoch
        assert loaded.best_validation_loss == state.best_validation_loss
        assert loaded.lr_current == state.lr_current
        for tag in ("adam_theta", "adam_phi"):
            orig, back = getattr(state, tag), getattr(loaded, tag)
            assert back.t == orig.t
            assert sorted(back.m) == sorted(orig.m)
            for key in orig.m:
                assert np.array_equal(back.m[key], orig.m[key])
                assert np.array_equal(back.v[key], orig.v[key])

    def test_chain_rng_resumes_identically(self, tmp_path):
        state, cfg, history = trained_state()
        path = tmp_path / "model.qhbm"
        save_checkpoint(path, state, cfg, history)
        loaded, _, _ = load_checkpoint(path)
        a, _ = ebm.metropolis_sample(state.energy_model, state.chain, 0, 50)
        b, _ = ebm.metropolis_sample(loaded.energy_model, loaded.chain, 0, 50)
        assert [c.index for c in a] == [c.index for c in b]

    def test_identical_saves_are_bit_identical(self, tmp_path):
        state, cfg, history = trained_state()
        p1, p2 = tmp_path / "a.qhbm", tmp_path / "b.qhbm"
        save_checkpoint(p1, state, cfg, history)
        save_checkpoint(p2, state, cfg, history)
        assert p1.read_bytes() == p2.read_bytes()

    def test_works_after_plain_train_steps(self, tmp_path):
        cfg = TrainConfig(
            n_qubits=2, n_layers=1, n_mc_samples=20, batch_size=1, seed=3
        )
        state = init_train_state(cfg)
        for _ in range(2):
            state = train_step(state, [np.array([0, 1, 3])], cfg)
        path = tmp_path / "steps.qhbm"
        save_checkpoint(path, state, cfg, [])
        loaded, _, history = load_checkpoint(path)
        assert history == []
        assert np.array_equal(loaded.ansatz.angles, state.ansatz.angles)

    def test_rejects_missing_and_bad_magic(self, tmp_path):
        with pytest.raises(DataError):
            load_checkpoint(tmp_path / "absent.qhbm")
        bad = tmp_path / "bad.qhbm"
        bad.write_bytes(b"WRONGMAG" + b"\x00" * 16)
        with pytest.raises(DataError):
            load_checkpoint(bad)

    def test_rejects_unknown_version(self, tmp_path):
        state, cfg, history = trained_state()
        path = tmp_path / "model.qhbm"
        save_checkpoint(path, state, cfg, history)
        raw = bytearray(path.read_bytes())
        head = len(CKPT_MAGIC)
        raw[head : head + 4] = struct.pack("<I", 99)
        path.write_bytes(bytes(raw))
        with pytest.raises(DataError, match="version"):
            load_checkpoint(path)

    def test_rejects_truncated_payload(self, tmp_path):
        state, cfg, history = trained_state()
        path = tmp_path / "model.qhbm"
        save_checkpoint(path, state, cfg, history)
        raw = path.read_bytes()
        path.write_bytes(raw[:-16])
        with pytest.raises(DataError):
            load_checkpoint(path)

    def test_rejects_trailing_bytes(self, tmp_path):
        state, cfg, history = trained_state()
        path = tmp_path / "model.qhbm"
        save_checkpoint(path, state, cfg, history)
        path.write_bytes(path.read_bytes() + b"\x00" * 8)
        with pytest.raises(DataError):
            load_checkpoint(path)

    def test_rejects_corrupt_metadata(self, tmp_path):
        state, cfg, history = trained_state()
        path = tmp_path / "model.qhbm"
        save_checkpoint(path, state, cfg, history)
        raw = bytearray(path.read_bytes())
        meta_start = len(CKPT_MAGIC) + 12
        raw[meta_start : meta_start + 4] = b"\xff\xfe\x00\x01"
        path.write_bytes(bytes(raw))
        with pytest.raises(DataError):
            load_checkpoint(path)
