"""On-disk formats: image containers, checkpoints, provenance-stamped CSV.

Image container layout (all integers little-endian):

    magic  b"QHBIMG1"
    u32    image count
    u32    width
    u32    height
    f32    width * height pixels per image, row-major, count times

Labels, weights and pipeline metadata live in a JSON sidecar next to the
container (same path + ".json").  A CSV alternative stores one flattened
image per row with label and weight as the last two columns.

Checkpoint layout:

    magic  b"QHBMCKPT"
    u32    format version (currently 1)
    u64    metadata length in bytes
    JSON   metadata: config, epoch, chain state, history, payload manifest
    f64    payload arrays, little-endian, in manifest order
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__, ebm, qsim, train
from .embed import LABELS, PixelImage
from .errors import DataError
from .rng import generator_state, restore_generator

IMAGE_MAGIC = b"QHBIMG1"
CKPT_MAGIC = b"QHBMCKPT"
CKPT_VERSION = 1


def config_hash(config: dict) -> str:
    """Stable short digest of a configuration mapping."""
    blob = json.dumps(config, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def write_csv_with_provenance(
    path: str | Path,
    header: Sequence[str],
    rows: Iterable[Sequence],
    config: dict,
) -> None:
    """CSV with a leading provenance comment (tool version, config hash)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# qhbm {__version__} config={config_hash(config)}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def read_csv_skip_provenance(path: str | Path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    with path.open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    rows = list(reader)
    if not rows:
        raise DataError(f"{path} has no CSV content")
    return rows[0], rows[1:]


def _sidecar_path(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def write_image_container(
    path: str | Path,
    images: Sequence[PixelImage],
    meta: dict | None = None,
) -> None:
    """Write the binary container plus its JSON sidecar.

    All images must share one shape; an empty dataset stores its shape
    as 0 x 0.
    """
    path = Path(path)
    if images:
        height, width = images[0].intensities.shape
        if any(im.intensities.shape != (height, width) for im in images):
            raise DataError("all images in a container must share one shape")
    else:
        height = width = 0
    with path.open("wb") as fh:
        fh.write(IMAGE_MAGIC)
        fh.write(struct.pack("<III", len(images), width, height))
        for im in images:
            fh.write(im.intensities.astype("<f4").tobytes())
    sidecar = {
        "width": width,
        "height": height,
        "labels": [im.label for im in images],
        "weights": [float(im.weight) for im in images],
        "meta": meta or {},
    }
    with _sidecar_path(path).open("w") as fh:
        json.dump(sidecar, fh, sort_keys=True, indent=1)
        fh.write("\n")


def read_image_container(path: str | Path) -> tuple[list[PixelImage], dict]:
    """Read a container; returns the images and the sidecar metadata."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"container not found: {path}")
    raw = path.read_bytes()
    if len(raw) < len(IMAGE_MAGIC) + 12 or raw[: len(IMAGE_MAGIC)] != IMAGE_MAGIC:
        raise DataError(f"{path} is not an image container (bad magic)")
    count, width, height = struct.unpack_from("<III", raw, len(IMAGE_MAGIC))
    offset = len(IMAGE_MAGIC) + 12
    expected = offset + count * width * height * 4
    if len(raw) != expected:
        raise DataError(
            f"{path} truncated: expected {expected} bytes, found {len(raw)}"
        )
    sidecar_file = _sidecar_path(path)
    if sidecar_file.exists():
        sidecar = json.loads(sidecar_file.read_text())
    else:
        sidecar = {"labels": ["unlabelled"] * count, "weights": [1.0] * count, "meta": {}}
    labels = sidecar.get("labels", ["unlabelled"] * count)
    weights = sidecar.get("weights", [1.0] * count)
    if len(labels) != count or len(weights) != count:
        raise DataError(f"{sidecar_file} does not match the container image count")
    images = []
    for i in range(count):
        pixels = np.frombuffer(
            raw, dtype="<f4", count=width * height, offset=offset + i * width * height * 4
        )
        images.append(
            PixelImage(
                pixels.reshape(height, width).astype(np.float64),
                labels[i],
                float(weights[i]),
            )
        )
    return images, sidecar.get("meta", {})


def write_images_csv(path: str | Path, images: Sequence[PixelImage], config: dict | None = None) -> None:
    """CSV alternative: flattened pixels, then label and weight columns."""
    if not images:
        raise DataError("CSV container needs at least one image to fix the shape")
    height, width = images[0].intensities.shape
    if any(im.intensities.shape != (height, width) for im in images):
        raise DataError("all images in a container must share one shape")
    header = [f"r{r}c{c}" for r in range(height) for c in range(width)] + ["label", "weight"]
    rows = (
        [repr(float(x)) for x in im.intensities.reshape(-1)] + [im.label, repr(float(im.weight))]
        for im in images
    )
    write_csv_with_provenance(path, header, rows, config or {})


def read_images_csv(path: str | Path) -> list[PixelImage]:
    header, rows = read_csv_skip_provenance(path)
    if len(header) < 3 or header[-2:] != ["label", "weight"]:
        raise DataError(f"{path}: expected pixel columns plus label,weight")
    last_pixel = header[-3]
    try:
        r, c = last_pixel[1:].split("c")
        height, width = int(r) + 1, int(c) + 1
    except ValueError as exc:
        raise DataError(f"{path}: cannot parse pixel column {last_pixel!r}") from exc
    if height * width != len(header) - 2:
        raise DataError(f"{path}: header names a {height}x{width} grid but has {len(header) - 2} pixel columns")
    images = []
    for row in rows:
        if len(row) != len(header):
            raise DataError(f"{path}: row length {len(row)} does not match header")
        pixels = np.array([float(x) for x in row[:-2]]).reshape(height, width)
        images.append(PixelImage(pixels, row[-2], float(row[-1])))
    return images


def _payload_manifest(arrays: dict[str, np.ndarray]) -> list[dict]:
    return [{"name": k, "shape": list(v.shape)} for k, v in arrays.items()]


def save_checkpoint(
    path: str | Path,
    state: train.TrainState,
    config: train.TrainConfig,
    history: Sequence[dict],
) -> None:
    """Serialise a training state; bit-identical for identical runs."""
    path = Path(path)
    payloads: dict[str, np.ndarray] = {
        "weights": state.energy_model.weights,
        "visible_bias": state.energy_model.visible_bias,
        "hidden_bias": state.energy_model.hidden_bias,
        "angles": state.ansatz.angles,
        "support_indices": state.hamiltonian.basis_indices.astype(np.float64),
        "support_energies": state.hamiltonian.energies,
        "log_partition": np.array([state.hamiltonian.log_partition]),
    }
    for tag, adam in (("theta", state.adam_theta), ("phi", state.adam_phi)):
        for key in sorted(adam.m):
            payloads[f"adam_{tag}_m_{key}"] = adam.m[key]
            payloads[f"adam_{tag}_v_{key}"] = adam.v[key]
    metadata = {
        "config": config.as_dict(),
        "epoch": state.epoch,
        "best_validation_loss": state.best_validation_loss,
        "lr_current": state.lr_current,
        "adam_t": {"theta": state.adam_theta.t, "phi": state.adam_phi.t},
        "chain": {
            "current_index": state.chain.current.index,
            "current_energy": state.chain.current_energy,
            "rng_state": generator_state(state.chain.rng),
        },
        "history": list(history),
        "payloads": _payload_manifest(payloads),
    }
    blob = json.dumps(metadata, sort_keys=True).encode("utf-8")
    with path.open("wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", CKPT_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for arr in payloads.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[train.TrainState, train.TrainConfig, list[dict]]:
    """Rebuild a training state; rejects unknown format versions."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    head = len(CKPT_MAGIC)
    if len(raw) < head + 12 or raw[:head] != CKPT_MAGIC:
        raise DataError(f"{path} is not a checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", raw, head)
    if version != CKPT_VERSION:
        raise DataError(
            f"{path} has format version {version}, this build reads {CKPT_VERSION}"
        )
    (meta_len,) = struct.unpack_from("<Q", raw, head + 4)
    offset = head + 12
    try:
        metadata = json.loads(raw[offset : offset + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: corrupt metadata block") from exc
    offset += meta_len

    arrays: dict[str, np.ndarray] = {}
    for entry in metadata["payloads"]:
        shape = tuple(entry["shape"])
        n_items = int(np.prod(shape)) if shape else 1
        end = offset + 8 * n_items
        if end > len(raw):
            raise DataError(f"{path}: payload {entry['name']} truncated")
        arrays[entry["name"]] = np.frombuffer(raw, dtype="<f8", count=n_items, offset=offset).reshape(shape).copy()
        offset = end
    if offset != len(raw):
        raise DataError(f"{path}: {len(raw) - offset} trailing bytes")

    config = train.TrainConfig(**metadata["config"]).validate()
    model = ebm.EnergyModel(
        arrays["weights"], arrays["visible_bias"], arrays["hidden_bias"]
    )
    ansatz = qsim.CircuitAnsatz(config.n_qubits, config.n_layers, arrays["angles"])
    support = tuple(
        qsim.SpinConfig.from_index(int(i), config.n_qubits)
        for i in arrays["support_indices"]
    )
    ham = ebm.ModularHamiltonian(
        config.n_qubits, support, arrays["support_energies"], float(arrays["log_partition"][0])
    )
    chain = ebm.MarkovChainState(
        qsim.SpinConfig.from_index(int(metadata["chain"]["current_index"]), config.n_qubits),
        float(metadata["chain"]["current_energy"]),
        restore_generator(metadata["chain"]["rng_state"]),
    )
    adam_states = {}
    for tag in ("theta", "phi"):
        m = {}
        v = {}
        prefix_m, prefix_v = f"adam_{tag}_m_", f"adam_{tag}_v_"
        for name, arr in arrays.items():
            if name.startswith(prefix_m):
                m[name[len(prefix_m):]] = arr
            elif name.startswith(prefix_v):
                v[name[len(prefix_v):]] = arr
        adam_states[tag] = train.AdamState(m, v, int(metadata["adam_t"][tag]))
    state = train.TrainState(
        energy_model=model,
        ansatz=ansatz,
        hamiltonian=ham,
        chain=chain,
        adam_theta=adam_states["theta"],
        adam_phi=adam_states["phi"],
        epoch=int(metadata["epoch"]),
        best_validation_loss=float(metadata["best_validation_loss"]),
        lr_current=float(metadata["lr_current"]),
    )
    return state, config, list(metadata["history"])
