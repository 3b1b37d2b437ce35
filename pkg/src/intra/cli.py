"""Command-line interface: train, reconstruct, evaluate, gradcheck, synth,
select-size.

Configuration precedence: built-in defaults, then an optional config file
(`key = value` lines, `#` comments), then command-line flags. The full
effective configuration is echoed into checkpoints and reports. Every
command honors `--seed`; `--deterministic` forces a single worker.
"""

import argparse
import os
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from .config import RunConfig, format_value, parse_config_text

EXIT_OK = 0
EXIT_FAILURE = 1
GRADCHECK_TOLERANCE = 1e-4


def _add_config_flags(parser):
    parser.add_argument("--config", type=Path, default=None,
                        help="config file of key = value lines")
    for f in fields(RunConfig):
        default = getattr(RunConfig(), f.name)
        flag = "--" + f.name.replace("_", "-")
        if f.type == "bool" or f.type is bool:
            parser.add_argument(flag, type=_parse_bool, default=None,
                                metavar="BOOL",
                                help=f"override {f.name} (default {format_value(default)})")
        else:
            kind = float if f.type in ("float", float) else int
            parser.add_argument(flag, type=kind, default=None,
                                help=f"override {f.name} (default {format_value(default)})")


def _parse_bool(text):
    lowered = text.lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got '{text}'")


def _resolve_run_config(args):
    if args.config is not None:
        run, _ = parse_config_text(Path(args.config).read_text())
    else:
        run = RunConfig()
    overrides = {}
    for f in fields(RunConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            overrides[f.name] = value
    if "workers" not in overrides and os.environ.get("INTRA_WORKERS"):
        overrides["workers"] = int(os.environ["INTRA_WORKERS"])
    run = replace(run, **overrides)
    if run.deterministic:
        run = replace(run, workers=1)
    return run


def build_parser():
    parser = argparse.ArgumentParser(
        prog="intra",
        description="Patch-inpainting transformer for visual anomaly detection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train on a category's normal images")
    p_train.add_argument("--data", type=Path, required=True, help="dataset root")
    p_train.add_argument("--category", required=True, help="category directory name")
    p_train.add_argument("--out", type=Path, required=True, help="checkpoint path")
    p_train.add_argument("--history", type=Path, default=None,
                         help="write per-epoch history CSV here (default <out>.history.csv)")
    _add_config_flags(p_train)

    p_rec = sub.add_parser("reconstruct",
                           help="inpaint one image and emit a triptych")
    p_rec.add_argument("--ckpt", type=Path, required=True)
    p_rec.add_argument("--image", type=Path, required=True)
    p_rec.add_argument("--out-dir", type=Path, required=True)

    p_eval = sub.add_parser("evaluate", help="detection/segmentation metrics")
    p_eval.add_argument("--ckpt", type=Path, required=True)
    p_eval.add_argument("--data", type=Path, required=True)
    p_eval.add_argument("--category", required=True)
    p_eval.add_argument("--report", type=Path, required=True)
    p_eval.add_argument("--scores", type=Path, default=None,
                        help="optional per-image score CSV")
    p_eval.add_argument("--workers", type=int, default=None)
    p_eval.add_argument("--deterministic", type=_parse_bool, default=None,
                        metavar="BOOL")

    p_grad = sub.add_parser("gradcheck",
                            help="finite-difference check of the full loss gradient")
    p_grad.add_argument("--seed", type=int, default=0)

    p_synth = sub.add_parser("synth", help="materialize a synthetic dataset")
    p_synth.add_argument("--out", type=Path, required=True)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--count-train", type=int, default=20)
    p_synth.add_argument("--count-test-normal", type=int, default=10)
    p_synth.add_argument("--count-test-defect", type=int, default=10)
    p_synth.add_argument("--size", type=int, default=64)

    p_size = sub.add_parser("select-size",
                            help="pick the working resolution by validation loss")
    p_size.add_argument("--data", type=Path, required=True)
    p_size.add_argument("--category", required=True)
    p_size.add_argument("--sizes", default="256,320,512",
                        help="comma-separated ascending candidate sizes")
    p_size.add_argument("--epochs", type=int, default=200)
    _add_config_flags(p_size)
    return parser


def _load_model(ckpt_path):
    from .checkpointing import parts_from_checkpoint
    from .data import load_checkpoint

    return parts_from_checkpoint(load_checkpoint(ckpt_path))


def _cmd_train(args):
    from .checkpointing import checkpoint_from_parts
    from .data import load_category, save_checkpoint
    from .model import InpaintingTransformer
    from .scoring import build_reference
    from .training import train

    run = _resolve_run_config(args)
    dataset = load_category(args.data, args.category, run.image_size)
    model = InpaintingTransformer.initialize(
        run.to_model_config(), np.random.default_rng(run.seed)
    )
    print("epoch,train_loss,val_loss,best_val,patience_left")
    result = train(model, dataset, run.to_train_config(), progress=print)
    reference = build_reference(model, dataset.train_images, run.batch_size)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(
        args.out,
        checkpoint_from_parts(run, model, reference, category=args.category),
    )
    history_path = args.history or args.out.with_suffix(args.out.suffix + ".history.csv")
    with open(history_path, "w") as fh:
        fh.write("epoch,train_loss,val_loss,best_val,patience_left\n")
        for rec in result.history:
            fh.write(
                f"{rec.epoch},{rec.train_loss!r},{rec.val_loss!r},"
                f"{rec.best_val!r},{rec.patience_left}\n"
            )
    print(f"checkpoint: {args.out}")
    print(f"history: {history_path}")
    return EXIT_OK


def _require_reference(reference):
    if reference is None:
        raise ValueError(
            "checkpoint is missing its training reference "
            "(section 'reference/mean_diff'); re-train or rebuild the reference"
        )
    return reference


def _cmd_reconstruct(args):
    from .data import load_image, save_image
    from .scoring import anomaly_map, reconstruct_image, render_triptych

    run, model, reference = _load_model(args.ckpt)
    _require_reference(reference)
    image, _ = load_image(args.image, run.image_size)
    recon = reconstruct_image(model, image, run.batch_size)
    amap = anomaly_map(image, model, reference, run.batch_size)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    stem = args.image.stem
    save_image(args.out_dir / f"{stem}_reconstruction.png", recon)
    from .imgutils import heatmap_rgb

    save_image(args.out_dir / f"{stem}_anomaly.png", heatmap_rgb(amap.scores))
    render_triptych(image, recon, amap, args.out_dir / f"{stem}_triptych.png")
    print(f"image_score = {amap.image_score!r}")
    print(f"outputs: {args.out_dir}")
    return EXIT_OK


def _cmd_evaluate(args):
    from .data import load_category
    from .evaluation import evaluate_category

    run, model, reference = _load_model(args.ckpt)
    _require_reference(reference)
    workers = args.workers
    if workers is None:
        workers = int(os.environ.get("INTRA_WORKERS", run.workers))
    if args.deterministic or run.deterministic:
        workers = 1
    dataset = load_category(args.data, args.category, run.image_size)
    report = evaluate_category(
        model,
        reference,
        dataset,
        workers=workers,
        batch_size=run.batch_size,
        config={
            f.name: format_value(getattr(run, f.name)) for f in fields(RunConfig)
        },
    )
    args.report.parent.mkdir(parents=True, exist_ok=True)
    args.report.write_text(report.to_text())
    if args.scores is not None:
        args.scores.write_text(report.scores_csv())
    fmt = lambda v: "undefined" if v is None else f"{v:.4f}"
    print(f"image_auc = {fmt(report.image_auc)}")
    print(f"pixel_auc = {fmt(report.pixel_auc)}")
    print(f"report: {args.report}")
    return EXIT_OK


def _cmd_gradcheck(args):
    from . import engine as E
    from .metrics import inpaint_loss_tensor
    from .model import InpaintingTransformer, ModelConfig

    toy = ModelConfig(
        image_size=12, patch_size=4, window_side=3, latent_dim=16,
        num_blocks=2, num_heads=2, channels=1,
    )
    with E.precision("float64"):
        rng = np.random.default_rng(args.seed)
        model = InpaintingTransformer.initialize(toy, rng)
        batch = 2
        windows = rng.random((batch, toy.seq_len, toy.patch_dim))
        positions = np.tile(np.arange(toy.seq_len), (batch, 1))
        slots = np.array([2, 7])
        targets = windows[np.arange(batch), slots].reshape(
            batch, toy.patch_size, toy.patch_size, 1
        )

        def loss_from(values):
            model.load_values(values)
            recon = model.inpaint_batch(windows, positions, slots)
            recon = E.reshape(recon, (batch, toy.patch_size, toy.patch_size, 1))
            return inpaint_loss_tensor(targets, recon)

        values = model.parameter_values()
        grads = E.backward(loss_from(values), list(model.params.values()))
        analytic = {name: grads[p] for name, p in model.params.items()}
        numeric = E.finite_diff_gradient(
            lambda v: loss_from(v).item(), values, step=1e-3
        )
        err = E.max_relative_error(analytic, numeric)
    print(f"max_relative_error = {err:.3e} (tolerance {GRADCHECK_TOLERANCE:.0e})")
    return EXIT_OK if err < GRADCHECK_TOLERANCE else EXIT_FAILURE


def _cmd_synth(args):
    from .data import generate_synthetic, write_dataset

    dataset = generate_synthetic(
        args.seed,
        count_train=args.count_train,
        count_test_normal=args.count_test_normal,
        count_test_defect=args.count_test_defect,
        size=args.size,
    )
    base = write_dataset(dataset, args.out)
    print(f"dataset: {base}")
    return EXIT_OK


def _cmd_select_size(args):
    from .data import load_category
    from .training import select_image_size

    run = _resolve_run_config(args)
    sizes = tuple(int(s) for s in args.sizes.split(","))
    selection = select_image_size(
        lambda size: load_category(args.data, args.category, size),
        run.to_model_config(),
        run.to_train_config(),
        sizes=sizes,
        epochs=args.epochs,
    )
    for size, smoothed in zip(selection.sizes, selection.smoothed_losses):
        print(f"size {size}: smoothed_best_val = {smoothed!r}")
    print(f"chosen_size = {selection.chosen}")
    return EXIT_OK


_COMMANDS = {
    "train": _cmd_train,
    "reconstruct": _cmd_reconstruct,
    "evaluate": _cmd_evaluate,
    "gradcheck": _cmd_gradcheck,
    "synth": _cmd_synth,
    "select-size": _cmd_select_size,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except Exception as err:  # noqa: BLE001 - single boundary to exit codes
        print(f"intra: error: {err}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
