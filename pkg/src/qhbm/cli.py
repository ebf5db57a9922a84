"""Command-line front end.

Subcommands cover the full pipeline: synth -> preprocess -> train ->
evaluate / generate / anomaly / site-entropy.  Training reads a JSON
config file whose keys mirror TrainConfig plus dataset paths; flags
override file values and ``--print-config`` echoes the resolved result.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, anomaly, ebm, embed, io, metrics, train
from .errors import ConfigError, DataError, NumericError
from .rng import substream

TRAIN_KEYS = {f.name for f in dataclasses.fields(train.TrainConfig)}
EXTRA_KEYS = {"train_data", "valid_data", "outdir", "scenario", "pixel_layout"}


def _load_config_file(path: str) -> dict:
    file = Path(path)
    if not file.exists():
        raise ConfigError(f"config file not found: {file}")
    try:
        data = json.loads(file.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {file} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {file} must hold a JSON object")
    unknown = set(data) - TRAIN_KEYS - EXTRA_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return data


def _resolve_train_config(args: argparse.Namespace) -> dict:
    """defaults < scenario preset < config file < command-line flags."""
    file_data = _load_config_file(args.config) if args.config else {}
    scenario = args.scenario or file_data.get("scenario")
    resolved: dict = {}
    if scenario:
        if scenario not in anomaly.SCENARIOS:
            raise ConfigError(
                f"unknown scenario {scenario!r}, choose from {sorted(anomaly.SCENARIOS)}"
            )
        resolved.update(anomaly.SCENARIOS[scenario])
    resolved.update({k: v for k, v in file_data.items() if k != "scenario"})
    for key in sorted(TRAIN_KEYS | {"train_data", "valid_data", "outdir"}):
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    if scenario:
        resolved["scenario"] = scenario
    return resolved


def _train_config_from(resolved: dict) -> train.TrainConfig:
    kwargs = {k: v for k, v in resolved.items() if k in TRAIN_KEYS}
    try:
        return train.TrainConfig(**kwargs).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _load_probability_events(path: str | Path) -> list[embed.PixelProbabilities]:
    """Read a preprocessed container of per-event probability rows."""
    images, meta = io.read_image_container(path)
    if not images:
        raise DataError(f"{path} holds no events")
    if meta.get("kind") != "probabilities" and images[0].height != 1:
        raise DataError(
            f"{path} is not a preprocessed probability container; run the "
            "preprocess command first"
        )
    events = []
    for im in images:
        events.append(
            embed.PixelProbabilities(im.intensities.reshape(-1), im.label, im.weight)
        )
    return events


def _check_event_width(events, n_qubits: int, path) -> None:
    if events[0].n_qubits != n_qubits:
        raise DataError(
            f"{path} holds {events[0].n_qubits}-qubit events but the model "
            f"expects {n_qubits}"
        )


def cmd_synth(args: argparse.Namespace) -> int:
    rng = substream(args.seed, "synthesis", args.kind)
    images = embed.synth_toy_jets(args.n_events, args.kind, args.grid, rng)
    meta = {"kind": "raw", "generator": "toy_jets", "grid": args.grid, "seed": args.seed}
    if args.format == "csv":
        io.write_images_csv(args.out, images, meta)
    else:
        io.write_image_container(args.out, images, meta)
    print(f"wrote {len(images)} {args.kind} events to {args.out}")
    return 0


def cmd_preprocess(args: argparse.Namespace) -> int:
    if args.input.endswith(".csv"):
        images = io.read_images_csv(args.input)
    else:
        images, _ = io.read_image_container(args.input)
    if not images:
        raise DataError(f"{args.input} holds no images")
    pooled = [
        embed.crop_and_pool(im, args.crop, args.pool, trim_remainder=not args.strict)
        for im in images
    ]
    scale_max = args.scale_max if args.scale_max is not None else embed.fit_scale_max(pooled)
    standardised = [embed.standardise(im, scale_max) for im in pooled]
    side = standardised[0].height
    if side != standardised[0].width:
        raise DataError(
            f"pooled images are {standardised[0].height}x{standardised[0].width}; "
            "pixel layouts need a square grid"
        )
    if args.layout:
        layout = [int(x) for x in args.layout.split(",")]
    else:
        layout = embed.pixel_layout(side, args.n_qubits)
    events = [embed.select_pixels(im, layout) for im in standardised]
    rows = [
        embed.PixelImage(e.probs.reshape(1, -1), e.label, e.weight) for e in events
    ]
    meta = {
        "kind": "probabilities",
        "scale_max": scale_max,
        "crop": args.crop,
        "pool": args.pool,
        "pooled_side": side,
        "layout": layout,
    }
    io.write_image_container(args.out, rows, meta)
    print(
        f"preprocessed {len(rows)} events to {args.out} "
        f"(scale_max={scale_max:.6g}, layout={layout})"
    )
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    resolved = _resolve_train_config(args)
    if args.print_config:
        print(json.dumps(resolved, indent=2, sort_keys=True))
        return 0
    for key in ("train_data", "valid_data", "outdir"):
        if not resolved.get(key):
            raise ConfigError(f"missing required setting {key!r}")
    for key in ("train_data", "valid_data"):
        if not Path(resolved[key]).exists():
            raise DataError(f"dataset not found: {resolved[key]}")

    initial = None
    history: list[dict] = []
    if args.resume:
        initial, config, history = io.load_checkpoint(args.resume)
        if args.max_epochs is not None:
            config = dataclasses.replace(config, max_epochs=args.max_epochs)
    else:
        config = _train_config_from(resolved)

    train_events = _load_probability_events(resolved["train_data"])
    valid_events = _load_probability_events(resolved["valid_data"])
    _check_event_width(train_events, config.n_qubits, resolved["train_data"])
    _check_event_width(valid_events, config.n_qubits, resolved["valid_data"])

    best, history = train.fit(config, train_events, valid_events, initial, history)

    outdir = Path(resolved["outdir"])
    outdir.mkdir(parents=True, exist_ok=True)
    io.save_checkpoint(outdir / "checkpoint.qhbm", best, config, history)
    io.write_csv_with_provenance(
        outdir / "history.csv",
        ["epoch", "train_loss", "validation_loss", "learning_rate"],
        (
            [h["epoch"], repr(h["train_loss"]), repr(h["validation_loss"]), repr(h["learning_rate"])]
            for h in history
        ),
        config.as_dict(),
    )
    snapshot = _metric_snapshot(best, config, valid_events)
    (outdir / "metrics.json").write_text(json.dumps(snapshot, indent=2, sort_keys=True) + "\n")
    print(
        f"trained {len(history)} epochs, best validation loss "
        f"{best.best_validation_loss:.6f}; wrote {outdir / 'checkpoint.qhbm'}"
    )
    return 0


def _metric_snapshot(
    state: train.TrainState,
    config: train.TrainConfig,
    events: list[embed.PixelProbabilities],
) -> dict:
    """Model-vs-data measures on one event set (exact data mixed state)."""
    sigma = embed.exact_mixed_state(events)
    rho = train.model_density_matrix(state, config.latent_mode)
    mean_probs = np.mean([e.probs for e in events], axis=0)
    generated, _ = train.generate(
        state, 2000, substream(config.seed, "generation"), config.latent_mode
    )
    emitted = np.array([c.bits for c in generated], dtype=np.float64)
    return {
        "fidelity": metrics.fidelity(sigma, rho),
        "trace_distance": metrics.trace_distance(sigma, rho),
        "quantum_relative_entropy": metrics.quantum_relative_entropy(sigma, rho),
        "pixel_kl": metrics.bernoulli_marginal_kl(mean_probs, emitted.mean(axis=0)),
        "data_entropy": metrics.von_neumann_entropy(sigma),
        "model_entropy": metrics.von_neumann_entropy(rho),
        "n_events": len(events),
    }


def cmd_evaluate(args: argparse.Namespace) -> int:
    state, config, _ = io.load_checkpoint(args.checkpoint)
    events = _load_probability_events(args.test)
    _check_event_width(events, config.n_qubits, args.test)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    rho = train.model_density_matrix(state, config.latent_mode)
    gen_rng = substream(args.seed, "generation")
    rows = []
    per_metric: dict[str, list[float]] = {}
    for start in range(0, len(events), args.batch_size):
        batch = events[start : start + args.batch_size]
        sigma = embed.exact_mixed_state(batch)
        generated, _ = train.generate(state, args.generation_samples, gen_rng, config.latent_mode)
        emitted = np.array([c.bits for c in generated], dtype=np.float64)
        mean_probs = np.mean([e.probs for e in batch], axis=0)
        values = {
            "fidelity": metrics.fidelity(sigma, rho),
            "trace_distance": metrics.trace_distance(sigma, rho),
            "quantum_relative_entropy": metrics.quantum_relative_entropy(sigma, rho),
            "pixel_kl": metrics.bernoulli_marginal_kl(mean_probs, emitted.mean(axis=0)),
            "data_entropy": metrics.von_neumann_entropy(sigma),
        }
        rows.append([start // args.batch_size] + [repr(values[k]) for k in sorted(values)])
        for k, v in values.items():
            per_metric.setdefault(k, []).append(v)

    label_entropy = {}
    for label in sorted({e.label for e in events}):
        subset = [e for e in events if e.label == label]
        label_entropy[label] = metrics.von_neumann_entropy(embed.exact_mixed_state(subset))

    io.write_csv_with_provenance(
        outdir / "batch_metrics.csv",
        ["batch"] + sorted(per_metric),
        rows,
        config.as_dict(),
    )
    summary = {
        "model_entropy": metrics.von_neumann_entropy(rho),
        "label_entropy": label_entropy,
        "n_events": len(events),
        "batch_size": args.batch_size,
    }
    for k, vals in per_metric.items():
        summary[k] = {"mean": float(np.mean(vals)), "std": float(np.std(vals))}
    (outdir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"evaluated {len(events)} events in batches of {args.batch_size}; wrote {outdir}")
    return 0


def cmd_generate(args: argparse.Namespace) -> int:
    state, config, _ = io.load_checkpoint(args.checkpoint)
    rng = substream(args.seed, "generation")
    configs, _ = train.generate(state, args.n_events, rng, config.latent_mode)
    rows = (
        [i, "".join(str(b) for b in c.bits), c.index]
        for i, c in enumerate(configs)
    )
    io.write_csv_with_provenance(
        args.out, ["event", "bits", "basis_index"], rows, config.as_dict()
    )
    print(f"wrote {args.n_events} generated events to {args.out}")
    return 0


def cmd_anomaly(args: argparse.Namespace) -> int:
    state, config, _ = io.load_checkpoint(args.checkpoint)
    signal = _load_probability_events(args.signal)
    background = _load_probability_events(args.background)
    _check_event_width(signal, config.n_qubits, args.signal)
    _check_event_width(background, config.n_qubits, args.background)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    run_meta = config.as_dict() | {
        "total_time": args.total_time,
        "dt": args.dt,
        "n_draws": args.n_draws,
        "f_min": args.f_min,
    }

    summary: dict = {"n_signal": len(signal), "n_background": len(background)}
    for mode in ("t_zero", "spectral"):
        rng = substream(args.seed, "embedding", "anomaly", mode)
        kwargs = dict(
            f_min=args.f_min if mode == "spectral" else None,
            total_time=args.total_time,
            dt=args.dt,
            n_draws=args.n_draws,
        )
        sig_scores = anomaly.score_events(state, signal, mode, rng, **kwargs)
        bkg_scores = anomaly.score_events(state, background, mode, rng, **kwargs)
        roc = metrics.roc_from_scores(sig_scores, bkg_scores, args.n_thresholds)
        io.write_csv_with_provenance(
            outdir / f"scores_{mode}.csv",
            ["event", "label", "score"],
            (
                [i, lab, repr(float(s))]
                for i, (lab, s) in enumerate(
                    [("signal", s) for s in sig_scores]
                    + [("background", s) for s in bkg_scores]
                )
            ),
            run_meta,
        )
        io.write_csv_with_provenance(
            outdir / f"roc_{mode}.csv",
            ["threshold", "tpr", "fpr"],
            (
                [repr(float(t)), repr(float(tp)), repr(float(fp))]
                for t, tp, fp in zip(roc.thresholds, roc.tpr, roc.fpr)
            ),
            run_meta,
        )
        summary[f"auc_{mode}"] = roc.auc
        summary[f"direction_{mode}"] = roc.direction

    for label, events in (("signal", signal), ("background", background)):
        rng = substream(args.seed, "embedding", "anomaly", "series", label)
        series_stack = []
        spectra = []
        for event in events:
            series = anomaly.time_evolution_series(
                state, event, args.total_time, args.dt, rng, args.n_draws
            )
            series_stack.append(series.values)
            spectra.append(anomaly.series_spectrum(series).power)
        series_stack = np.array(series_stack)
        spectra = np.array(spectra)
        times = args.dt * np.arange(series_stack.shape[1])
        freqs = np.fft.rfftfreq(series_stack.shape[1], d=args.dt)
        io.write_csv_with_provenance(
            outdir / f"series_{label}.csv",
            ["time", "mean_fidelity", "std_fidelity"],
            (
                [repr(float(t)), repr(float(m)), repr(float(s))]
                for t, m, s in zip(times, series_stack.mean(axis=0), series_stack.std(axis=0))
            ),
            run_meta,
        )
        io.write_csv_with_provenance(
            outdir / f"spectrum_{label}.csv",
            ["frequency", "mean_power"],
            (
                [repr(float(f)), repr(float(p))]
                for f, p in zip(freqs, spectra.mean(axis=0))
            ),
            run_meta,
        )

    (outdir / "auc_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n"
    )
    print(
        f"anomaly report written to {outdir}: "
        f"AUC(t_zero)={summary['auc_t_zero']:.4f}, "
        f"AUC(spectral)={summary['auc_spectral']:.4f}"
    )
    return 0


def cmd_site_entropy(args: argparse.Namespace) -> int:
    state, config, _ = io.load_checkpoint(args.checkpoint)
    profile = anomaly.site_entropy_profile(
        state.hamiltonian,
        config.n_qubits,
        state.ansatz if args.mode != "diagonal" else None,
        mode=args.mode,
    )
    io.write_csv_with_provenance(
        args.out,
        ["pair", "entropy"],
        ([f"{i}-{i + 1}", repr(float(s))] for i, s in enumerate(profile)),
        config.as_dict() | {"mode": args.mode},
    )
    print(f"wrote {profile.size} pair entropies to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qhbm",
        description="Quantum Hamiltonian-based model training and anomaly detection",
    )
    parser.add_argument("--version", action="version", version=f"qhbm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic toy jet images")
    p.add_argument("--kind", choices=("signal", "background"), required=True)
    p.add_argument("--n-events", type=int, required=True)
    p.add_argument("--grid", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("bin", "csv"), default="bin")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="crop, pool, standardise and select pixels")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--crop", type=int, default=2)
    p.add_argument("--pool", type=int, default=2)
    p.add_argument("--n-qubits", type=int, default=6)
    p.add_argument("--layout", help="comma-separated flat pixel indices")
    p.add_argument("--scale-max", type=float, help="reuse a fitted standardisation maximum")
    p.add_argument("--strict", action="store_true", help="reject non-divisible crop sizes")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="fit the model on preprocessed events")
    p.add_argument("--config", help="JSON config file; flags override its keys")
    p.add_argument("--print-config", action="store_true")
    p.add_argument("--scenario", choices=tuple(anomaly.SCENARIOS))
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--train-data", dest="train_data")
    p.add_argument("--valid-data", dest="valid_data")
    p.add_argument("--outdir")
    for key, kind in (
        ("n_qubits", int), ("n_layers", int), ("n_hidden", int),
        ("n_mc_samples", int), ("n_embed_samples", int), ("batch_size", int),
        ("learning_rate", float), ("max_epochs", int), ("mc_burn_in", int),
        ("lr_halve_patience", int), ("early_stop_patience", int), ("seed", int),
    ):
        p.add_argument(f"--{key.replace('_', '-')}", dest=key, type=kind)
    p.add_argument("--embed-mode", dest="embed_mode", choices=("presampled", "per_epoch"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="batch metrics of a checkpoint on a test set")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--batch-size", type=int, default=25)
    p.add_argument("--generation-samples", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("generate", help="sample events from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--n-events", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("anomaly", help="score signal vs background events")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--signal", required=True)
    p.add_argument("--background", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--total-time", type=float, default=500.0)
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--n-draws", type=int, default=10)
    p.add_argument("--f-min", type=float, default=0.2)
    p.add_argument("--n-thresholds", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_anomaly)

    p = sub.add_parser("site-entropy", help="adjacent-pair ground-state entropies")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--mode", choices=("dressed", "diagonal"), default="dressed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_site_entropy)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"invalid parameter: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
