"""Command-line interface.

Subcommands: gen-data, train, eval, compare, inspect.  A JSON config file
supplies defaults for every knob; flags override it.  One root seed drives
all randomness and is recorded in a comment header of every CSV artifact.
Exit codes: 0 success, 1 usage/input error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .data import DataError, DatasetSpec, build_dataset, export_dataset, load_image_dir
from .evaluate import (EvaluationError, comparison_to_csv, compare, evaluate,
                       plot_data_csv, table_to_csv)
from .models import ArchId, encoder_state, latent_means, load_encoder
from .resampler import (compute_weights, estimate_histograms, extremes_to_csv,
                        histograms_to_csv, inspect)
from .training import (DebiasConfig, TrainConfig, TrainingDiverged, history_to_csv,
                       train)

DEFAULT_CONFIG = {
    "seed": 0,
    "data": {
        "face_counts": {"light_A": 90, "light_B": 10, "dark_A": 90, "dark_B": 10},
        "nonfaces": 100,
        "channels": 1,
    },
    "train": {
        "arch": "arch2",
        "latent_dim": 32,
        "channel_multiplier": 16,
        "epochs": 10,
        "batch_size": 32,
        "lr": 5e-4,
        "w_kl": 0.005,
        "w_recon": 1.0,
        "debias_bins": 10,
        "debias_smoothing": 0.01,
    },
    "eval": {"threshold": 0.5},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; 2 is reserved for runtime failures here
    def error(self, message):
        raise UsageError(message)


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _load_config(path: str | None, seed: int | None) -> dict:
    config = DEFAULT_CONFIG
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise UsageError(f"config file {p} does not exist")
        try:
            config = _merge(config, json.loads(p.read_text()))
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {p} is not valid JSON: {exc}")
    if seed is not None:
        config = _merge(config, {"seed": seed})
    return config


def _train_config(config: dict, mode: str) -> TrainConfig:
    t = config["train"]
    debias = DebiasConfig(enabled=(mode == "dbvae"), bins=int(t["debias_bins"]),
                          smoothing=float(t["debias_smoothing"]))
    return TrainConfig(
        arch=ArchId(t["arch"]), latent_dim=int(t["latent_dim"]),
        channels=int(config["data"]["channels"]),
        channel_multiplier=int(t["channel_multiplier"]), epochs=int(t["epochs"]),
        batch_size=int(t["batch_size"]), lr=float(t["lr"]),
        w_kl=float(t["w_kl"]) if mode == "dbvae" else 0.0,
        w_recon=float(t["w_recon"]) if mode == "dbvae" else 0.0,
        debias=debias, seed=int(config["seed"]))


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    print(f"wrote {path}")


def _save_resolved_config(config: dict, out: Path) -> None:
    _write(out / "config.json", json.dumps(config, indent=2, sort_keys=True) + "\n")


def _load_model(path: str):
    meta, state = load_checkpoint(path)
    enc_state = {k[len("encoder/"):]: v for k, v in state.items()
                 if k.startswith("encoder/")}
    return meta, load_encoder(meta["model"], enc_state)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    config = _load_config(args.config, args.seed)
    d = config["data"]
    spec = DatasetSpec(face_counts={k: int(v) for k, v in d["face_counts"].items()},
                       nonfaces=int(d["nonfaces"]), channels=int(d["channels"]),
                       seed=int(config["seed"]))
    spec.validate()
    dataset = build_dataset(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = export_dataset(dataset, out)
    _save_resolved_config(config, out)
    counts = dataset.group_counts()
    print(f"wrote {manifest}")
    print(f"{len(dataset)} examples: " +
          ", ".join(f"{k}={v}" for k, v in sorted(counts.items())))
    return 0


def cmd_train(args) -> int:
    config = _load_config(args.config, args.seed)
    dataset = load_image_dir(args.data_dir, channels=int(config["data"]["channels"]))
    tconf = _train_config(config, args.mode)
    out = Path(args.out)

    def checkpoint_name(tag: str) -> Path:
        return out / f"checkpoint_{args.mode}{tag}.bin"

    def save_model(encoder, decoder, tag: str = "") -> Path:
        tensors = {f"encoder/{k}": v for k, v in encoder_state(encoder).items()}
        if decoder is not None:
            tensors.update({f"decoder/{k}": v.data for k, v in decoder.named_parameters()})
        meta = {"model": encoder.config(), "mode": args.mode, "seed": tconf.seed,
                "debias_bins": tconf.debias.bins,
                "debias_smoothing": tconf.debias.smoothing}
        path = checkpoint_name(tag)
        path.parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(path, tensors, meta)
        return path

    hook = None
    if args.checkpoint_every > 0:
        def hook(epoch, encoder, decoder):
            if (epoch + 1) % args.checkpoint_every == 0:
                print(f"wrote {save_model(encoder, decoder, f'_epoch{epoch}')}")

    result = train(tconf, dataset, epoch_hook=hook)
    path = save_model(result.encoder, result.decoder)
    print(f"wrote {path}")
    _write(out / f"history_{args.mode}.csv", history_to_csv(result.history, tconf.seed))
    _save_resolved_config(config, out)
    last = result.history[-1]
    print(f"final epoch: total={last.total:.6f} classification={last.classification:.6f} "
          f"kl={last.kl:.6f} reconstruction={last.reconstruction:.6f} "
          f"train_accuracy={last.train_accuracy:.4f}")
    return 0


def cmd_eval(args) -> int:
    config = _load_config(args.config, args.seed)
    meta, encoder = _load_model(args.checkpoint)
    dataset = load_image_dir(args.data_dir, channels=encoder.channels)
    table = evaluate(encoder, meta.get("mode", "model"), dataset,
                     threshold=float(config["eval"]["threshold"]))
    _write(Path(args.out) / "group_accuracy.csv", table_to_csv(table, meta.get("seed")))
    for label, row in table.groups.items():
        print(f"{label}: accuracy={row.accuracy:.4f} (n={row.n})")
    print(f"nonface: accuracy={table.negatives.accuracy:.4f} (n={table.negatives.n})")
    print(f"overall: {table.overall_accuracy:.4f}")
    return 0


def cmd_compare(args) -> int:
    config = _load_config(args.config, args.seed)
    meta_s, enc_s = _load_model(args.checkpoint_standard)
    meta_d, enc_d = _load_model(args.checkpoint_debiased)
    if enc_s.config() != enc_d.config():
        raise UsageError(
            f"checkpoints are architecturally incompatible: "
            f"{enc_s.config()} vs {enc_d.config()}")
    dataset = load_image_dir(args.data_dir, channels=enc_s.channels)
    threshold = float(config["eval"]["threshold"])
    report = compare(evaluate(enc_s, "standard", dataset, threshold),
                     evaluate(enc_d, "dbvae", dataset, threshold))
    out = Path(args.out)
    _write(out / "comparison.csv", comparison_to_csv(report, meta_s.get("seed")))
    _write(out / "comparison_plot.csv", plot_data_csv(report, meta_s.get("seed")))
    print(f"standard gap={report.standard_bias.gap:.4f} "
          f"debiased gap={report.debiased_bias.gap:.4f}")
    return 0


def cmd_inspect(args) -> int:
    config = _load_config(args.config, args.seed)
    meta, encoder = _load_model(args.checkpoint)
    dataset = load_image_dir(args.data_dir, channels=encoder.channels)
    faces = dataset.faces()
    bins = int(meta.get("debias_bins", config["train"]["debias_bins"]))
    alpha = float(meta.get("debias_smoothing", config["train"]["debias_smoothing"]))
    hist = estimate_histograms(encoder, faces, bins)
    face_images = np.stack([ex.image for ex in faces])
    weights = compute_weights(hist, latent_means(encoder, face_images), alpha)
    report = inspect(hist, weights, faces)
    out = Path(args.out)
    _write(out / "histograms.csv", histograms_to_csv(hist))
    _write(out / "weight_extremes.csv", extremes_to_csv(report))
    print(f"{hist.latent_dim} latent dimensions, {hist.bins} bins; "
          f"weight range [{weights.probs.min():.3e}, {weights.probs.max():.3e}]")
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="dbvae", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--seed", type=int, help="root seed override")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("gen-data", help="generate a synthetic grouped dataset")
    common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a detector on an image directory")
    p.add_argument("data_dir", help="dataset directory (faces/<group>/, nonfaces/)")
    p.add_argument("--mode", choices=("standard", "dbvae"), default="standard",
                   help="standard = classification only; dbvae = VAE + resampling")
    p.add_argument("--checkpoint-every", type=int, default=0,
                   help="also checkpoint every N epochs (0 = final only)")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="grouped accuracy of a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("data_dir")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="standard vs debiased side-by-side")
    p.add_argument("checkpoint_standard")
    p.add_argument("checkpoint_debiased")
    p.add_argument("data_dir")
    common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("inspect", help="latent histograms and extreme weights")
    p.add_argument("checkpoint")
    p.add_argument("data_dir")
    common(p)
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (UsageError, DataError, EvaluationError, CheckpointError, ValueError,
            KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TrainingDiverged as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
