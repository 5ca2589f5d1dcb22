"""Command-line surface: curation, training, evaluation, prediction,
scaling inspection, gradient checking, and feature-map export.

Exit codes: 0 success, 1 check/assertion failure, 2 usage or input error.
Configuration is a flat ``key=value`` text file with dotted section
prefixes (``train.lr=2e-3``); command-line flags override file values.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import blocks, gz2, imaging, metrics, scaling, tensor, training
from .checkpoint import CheckpointError, load_checkpoint
from .imaging import AugmentationConfig
from .synthetic import make_synthetic_set

USAGE_ERROR = 2
CHECK_FAILED = 1

KNOWN_CONFIG_KEYS = {
    "seed",
    "train.epochs",
    "train.batch_size",
    "train.lr",
    "train.val_fraction",
    "train.use_plateau",
    "train.use_early_stop",
    "data.target",
    "data.central_crop",
    "augment.enabled",
    "augment.rotation_min",
    "augment.rotation_max",
    "augment.shift_fraction",
    "augment.horizontal_flip",
    "augment.vertical_flip",
    "augment.brightness_min",
    "augment.brightness_max",
}


class CliError(Exception):
    """Input or usage problem; maps to exit code 2."""


def parse_config(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            key = key.strip()
            if key not in KNOWN_CONFIG_KEYS:
                raise CliError(
                    f"{path}:{lineno}: unknown config key {key!r}; known keys: "
                    + ", ".join(sorted(KNOWN_CONFIG_KEYS))
                )
            values[key] = value.strip()
    return values


def _as_bool(raw: str, key: str) -> bool:
    lowered = raw.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise CliError(f"config {key}={raw!r} is not a boolean")


def _augment_config(cfg: dict[str, str]) -> Optional[AugmentationConfig]:
    if not _as_bool(cfg.get("augment.enabled", "false"), "augment.enabled"):
        return None
    return AugmentationConfig(
        rotation_range_deg=(
            float(cfg.get("augment.rotation_min", "0")),
            float(cfg.get("augment.rotation_max", "90")),
        ),
        shift_fraction=float(cfg.get("augment.shift_fraction", "0.1")),
        horizontal_flip=_as_bool(cfg.get("augment.horizontal_flip", "true"), "augment.horizontal_flip"),
        vertical_flip=_as_bool(cfg.get("augment.vertical_flip", "true"), "augment.vertical_flip"),
        brightness_range=(
            float(cfg.get("augment.brightness_min", "0.9")),
            float(cfg.get("augment.brightness_max", "1.2")),
        ),
    )


def _preprocess(img: np.ndarray, target: int, crop_mode: str) -> np.ndarray:
    h, w = img.shape[0], img.shape[1]
    crop = crop_mode == "on" or (
        crop_mode == "auto" and min(h, w) > target and h % 2 == 0 and w % 2 == 0
    )
    if crop:
        img = imaging.central_crop(img)
    return imaging.rescale_and_resize(img, target, allow_any_target=True)


def _load_split(
    manifest: gz2.DatasetManifest,
    image_dir: str,
    split: str,
    target: int,
    crop_mode: str,
) -> training.ArrayDataSource:
    entries = manifest.split_entries(split)
    if not entries:
        raise CliError(f"manifest has no {split!r} entries")
    paths = [os.path.join(image_dir, e.path) for e in entries]
    missing = [p for p in paths if not os.path.exists(p)]
    if missing:
        shown = ", ".join(missing[:5])
        raise CliError(f"{len(missing)} image file(s) missing, first: {shown}")
    images = imaging.map_ordered(
        lambda p: _preprocess(imaging.load_image(p), target, crop_mode), paths
    )
    labels = np.array([e.label for e in entries], dtype=np.int64)
    return training.ArrayDataSource(
        np.stack(images), labels, ids=[e.galaxy_id for e in entries]
    )


def _regression_targets(catalog_path: str, ids: Sequence[str]) -> np.ndarray:
    rows, _ = gz2.parse_catalog(catalog_path)
    by_id = {r.galaxy_id: r.fractions for r in rows}
    missing = [gid for gid in ids if gid not in by_id]
    if missing:
        raise CliError(
            f"{len(missing)} manifest id(s) missing from catalog, first: {missing[0]}"
        )
    return np.stack([by_id[gid] for gid in ids]).astype(np.float32)


def _rebuild_from_checkpoint(path: str, seed: int = 0) -> tuple[scaling.Network, object]:
    ckpt = load_checkpoint(path)
    net = scaling.network_from_descriptor(ckpt.descriptor, np.random.default_rng(seed))
    try:
        net.set_weights(ckpt.params)
    except (KeyError, ValueError) as exc:
        raise CliError(f"checkpoint does not match its own architecture: {exc}")
    return net, ckpt


# -- commands --


def cmd_curate(args) -> int:
    print(f"root seed: {args.seed}")
    rules = gz2.DEFAULT_RULES if args.rules is None else parse_rules_file(args.rules)
    rows, parse_report = gz2.parse_catalog(args.catalog)
    if not rows:
        raise CliError(f"catalog {args.catalog} has no usable rows")
    samples, curation = gz2.select_clean(rows, rules, or_mode_class6=args.or_mode_class6)
    if not samples:
        raise CliError("no rows satisfied any curation rule")
    manifest = gz2.split_dataset(samples, seed=args.seed)
    gz2.write_manifest(manifest, args.out_manifest)

    counts = manifest.counts()
    name_of = {r.class_id: r.name for r in rules}
    print(f"{'class':>5}  {'name':<20} {'clean':>7} {'train':>7} {'test':>6}")
    for class_id, n in enumerate(curation.class_counts):
        print(
            f"{class_id:>5}  {name_of.get(class_id, '?'):<20} {n:>7} "
            f"{counts['train'].get(class_id, 0):>7} {counts['test'].get(class_id, 0):>6}"
        )
    total_train = sum(counts["train"].values())
    total_test = sum(counts["test"].values())
    print(
        f"total {curation.total_labeled} labeled of {parse_report.total_rows} rows "
        f"({curation.unmatched} unmatched, {len(curation.ambiguous)} ambiguous, "
        f"{len(parse_report.rejected)} rejected); split {total_train}/{total_test}"
    )
    print(f"manifest written to {args.out_manifest}")
    return 0


def parse_rules_file(path: str) -> tuple[gz2.CurationRule, ...]:
    """One rule per line: ``<class_id> <name> <col[+col...]>=<thr> ...``."""
    rules = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) < 3:
                raise CliError(f"{path}:{lineno}: need class id, name, and clauses")
            try:
                class_id = int(parts[0])
                clauses = []
                for clause in parts[2:]:
                    cols, thr = clause.split(">=")
                    clauses.append((tuple(cols.split("+")), float(thr)))
                rules.append(gz2.CurationRule(class_id, parts[1], tuple(clauses)))
            except (ValueError, IndexError) as exc:
                raise CliError(f"{path}:{lineno}: bad rule: {exc}")
    if not rules:
        raise CliError(f"{path}: no rules defined")
    return tuple(rules)


def cmd_train(args) -> int:
    cfg_file = parse_config(args.config) if args.config else {}
    seed = args.seed if args.seed is not None else int(cfg_file.get("seed", "0"))
    print(f"root seed: {seed}")

    manifest = gz2.read_manifest(args.manifest)
    arch, head = scaling.build_preset(args.variant, mode=args.mode)
    target = int(cfg_file.get("data.target", arch.resolution))
    crop_mode = cfg_file.get("data.central_crop", "auto")
    if crop_mode not in ("auto", "on", "off"):
        raise CliError(f"data.central_crop must be auto, on, or off, got {crop_mode!r}")

    data = _load_split(manifest, args.image_dir, "train", target, crop_mode)
    if args.mode == "regress":
        if not args.catalog:
            raise CliError("regression training needs --catalog for the 37 target fractions")
        data = training.ArrayDataSource(
            data.images, _regression_targets(args.catalog, data.ids), ids=data.ids
        )

    seed_root = np.random.SeedSequence(seed)
    init_ss, fit_ss = seed_root.spawn(2)
    network = scaling.build_network(arch, head, np.random.default_rng(init_ss))

    train_cfg = training.TrainConfig(
        epochs=args.epochs if args.epochs is not None else int(cfg_file.get("train.epochs", "50")),
        batch_size=(
            args.batch_size
            if args.batch_size is not None
            else int(cfg_file.get("train.batch_size", training.default_batch_size(args.variant)))
        ),
        lr=args.lr if args.lr is not None else float(cfg_file.get("train.lr", "1.5e-4")),
        seed=int(np.random.default_rng(fit_ss).integers(0, 2**31 - 1)),
        variant=args.variant,
        val_fraction=float(cfg_file.get("train.val_fraction", "0.1")),
        use_plateau=_as_bool(cfg_file.get("train.use_plateau", "true"), "train.use_plateau"),
        use_early_stop=_as_bool(cfg_file.get("train.use_early_stop", "true"), "train.use_early_stop"),
    )
    acfg = _augment_config(cfg_file)
    augment_fn = None
    if acfg is not None:
        augment_fn = lambda batch, rng: np.stack([imaging.augment(im, acfg, rng) for im in batch])

    os.makedirs(args.checkpoint_dir, exist_ok=True)
    stem = f"{args.variant}-{args.mode}"
    ckpt_path = os.path.join(args.checkpoint_dir, f"{stem}.mnet")
    loss_kind = "cross_entropy" if args.mode == "classify" else "rmse"

    def progress(record, _net):
        print(
            f"epoch {record.epoch:3d}  lr {record.lr:.3e}  "
            f"train {record.train_loss:.4f}  val {record.val_loss:.4f}  "
            f"metric {record.val_metric:.4f}"
        )
        return False

    result = training.fit(
        network, data, train_cfg, loss_kind,
        checkpoint_path=ckpt_path, augment_fn=augment_fn, on_epoch_end=progress,
    )
    history_path = os.path.join(args.checkpoint_dir, f"{stem}.history.txt")
    with open(history_path, "w", encoding="utf-8") as fh:
        fh.write(training.history_to_text(result.history))

    if result.aborted:
        print(f"training aborted: {result.aborted}", file=sys.stderr)
        return CHECK_FAILED
    if result.best is not None:
        print(
            f"done: {len(result.history)} epoch(s), best val loss "
            f"{result.best.best_val_loss!r} at epoch {result.best_epoch}"
        )
    else:
        print(f"done: {len(result.history)} epoch(s)")
    print(f"checkpoint written to {ckpt_path}")
    print(f"history written to {history_path}")
    return 0


def cmd_eval(args) -> int:
    net, ckpt = _rebuild_from_checkpoint(args.checkpoint)
    manifest = gz2.read_manifest(args.manifest)
    target = net.arch.resolution
    data = _load_split(manifest, args.image_dir, args.split, target, args.crop)
    probs = training.predict_probs(net, data.images)
    if net.head.mode == "classify":
        cm = metrics.confusion(np.argmax(probs, axis=1), data.targets, k=net.head.outputs)
        rep = metrics.report(cm)
        print(metrics.format_report(rep))
        print("confusion matrix (rows true, cols predicted):")
        for row in cm:
            print("  " + " ".join(f"{v:5d}" for v in row))
    else:
        if not args.catalog:
            raise CliError("regression eval needs --catalog for the 37 target fractions")
        targets = _regression_targets(args.catalog, data.ids)
        rep = metrics.rmse(probs, targets)
        print(f"rmse {rep.rmse!r} over {len(data.images)} images")
    return 0


def cmd_predict(args) -> int:
    net, _ = _rebuild_from_checkpoint(args.checkpoint)
    if net.head.mode != "regress":
        raise CliError("submission output needs a regression (37-output) checkpoint")
    names = sorted(
        f for f in os.listdir(args.image_dir)
        if f.lower().endswith((".png", ".jpg", ".jpeg"))
    )
    if not names:
        raise CliError(f"no images found in {args.image_dir}")
    target = net.arch.resolution
    images = imaging.map_ordered(
        lambda n: _preprocess(imaging.load_image(os.path.join(args.image_dir, n)), target, args.crop),
        names,
    )
    probs = training.predict_probs(net, np.stack(images))
    ids = [os.path.splitext(n)[0] for n in names]
    text = metrics.write_submission(ids, probs)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(text)
    print(f"wrote {len(ids)} prediction(s) to {args.out}")
    return 0


def cmd_scale_info(args) -> int:
    try:
        coeffs = scaling.ScalingCoefficients(args.alpha, args.beta, args.gamma, args.phi)
    except ValueError as exc:
        raise CliError(str(exc))
    baseline = scaling.baseline_arch()
    arch = scaling.scale_arch(baseline, coeffs)
    print(f"coefficients: alpha={args.alpha} beta={args.beta} gamma={args.gamma} phi={args.phi}")
    print(f"constraint deviation (alpha*beta^2*gamma^2 - 2): {scaling.check_constraint(coeffs)!r}")
    print(f"input resolution: {arch.resolution} ({arch.in_channels} channels)")
    print(f"{'stage':>5}  {'kind':<7} {'kernel':>6} {'stride':>6} {'channels':>8} {'layers':>6} {'expand':>6}")
    for i, stage in enumerate(arch.stages):
        exp = stage.expansion if stage.kind == "mbconv" else "-"
        print(
            f"{i:>5}  {stage.kind:<7} {stage.kernel:>6} {stage.stride:>6} "
            f"{stage.channels:>8} {stage.layers:>6} {exp:>6}"
        )
    flops = scaling.estimate_flops(arch, head=blocks.HeadConfig())
    base_flops = scaling.estimate_flops(baseline, head=blocks.HeadConfig())
    print(f"estimated flops: {flops:,} ({flops / base_flops:.3f}x baseline)")
    return 0


GRADCHECK_CASES = [
    ("add", lambda a, b: a + b, [(3, 4), (3, 4)]),
    ("mul", lambda a, b: a * b, [(3, 4), (3, 4)]),
    ("matmul", lambda a, b: tensor.matmul(a, b), [(3, 4), (4, 2)]),
    ("reshape", lambda a: a.reshape(6, 2), [(3, 4)]),
    ("sum", lambda a: a.sum(), [(5, 5)]),
    ("mean", lambda a: a.mean(), [(5, 5)]),
    ("sqrt", lambda a: tensor.sqrt(a * a + 1.0), [(3, 3)]),
    ("relu", lambda a: tensor.relu(a), [(4, 4)]),
    ("sigmoid", lambda a: tensor.sigmoid(a), [(4, 4)]),
    ("softmax", lambda a: tensor.softmax(a), [(3, 5)]),
    ("dropout", lambda x: tensor.dropout(x, 0.4, training=True, rng=np.random.default_rng(11)), [(4, 4)]),
    ("dense", lambda x, w, b: tensor.dense(x, w, b), [(3, 4), (4, 2), (2,)]),
    ("conv2d_same", lambda x, k: tensor.conv2d(x, k, padding="same"), [(2, 5, 5, 2), (3, 3, 2, 3)]),
    ("conv2d_valid", lambda x, k: tensor.conv2d(x, k, padding="valid"), [(2, 5, 5, 2), (3, 3, 2, 3)]),
    ("conv2d_stride2", lambda x, k: tensor.conv2d(x, k, stride=2, padding="same"), [(1, 6, 6, 2), (3, 3, 2, 2)]),
    ("depthwise", lambda x, k: tensor.depthwise_conv2d(x, k, padding="same"), [(2, 5, 5, 3), (3, 3, 3)]),
    ("pointwise", lambda x, k: tensor.pointwise_conv(x, k), [(2, 4, 4, 3), (3, 2)]),
    ("global_avg_pool", lambda x: tensor.global_avg_pool(x), [(2, 4, 4, 3)]),
    ("max_pool", lambda x: tensor.max_pool(x, 2, 2), [(1, 4, 4, 2)]),
    ("cross_entropy", lambda p: tensor.cross_entropy(tensor.softmax(p), np.eye(4, dtype=np.float64)[[0, 2]]), [(2, 4)]),
]


def _weighted_scalar(builder, case_seed: int):
    """Reduce an op's output with fixed random weights, so every output
    element contributes a distinct gradient (a plain mean would let
    sum-preserving indexing bugs cancel out)."""

    def wrapped(*inputs):
        out = builder(*inputs)
        w = np.random.default_rng(case_seed ^ 0xA5A5).uniform(0.5, 1.5, size=out.shape)
        return (out * tensor.Tensor(w)).mean()

    return wrapped


def _two_block_case():
    """A stem conv plus two residual inverted-bottleneck blocks, end to end."""
    arch = scaling.ScaledArch(8, 3, (
        scaling.StageSpec("conv", 3, 2, 4, 1),
        scaling.StageSpec("mbconv", 3, 1, 4, 2, expansion=2),
    ))
    head = blocks.HeadConfig(mode="classify", hidden_units=6, dropout_rate=0.5)
    probe = scaling.build_network(arch, head, np.random.default_rng(0))
    names = sorted(probe.params)
    shapes = [(1, 8, 8, 3)] + [probe.params[k].data.shape for k in names]

    def builder(x, *params):
        net = scaling.build_network(arch, head, np.random.default_rng(0))
        for pname, p in zip(names, params):
            net.params[pname] = p
        probs = net.forward(x)
        return tensor.cross_entropy(probs, np.eye(7, dtype=np.float64)[[0]])

    return builder, shapes


def run_gradient_suite(seeds: int = 3, eps: Optional[float] = None, tol: float = 1e-6, verbose: bool = True):
    """Finite-difference-check every differentiable op plus a two-block network.

    Runs in float64. Returns (results, failures) where results is a list of
    (name, max relative error over all seeds) and failures the subset at or
    above ``tol``.
    """
    net_builder, net_shapes = _two_block_case()
    cases = GRADCHECK_CASES + [("two_block_net", net_builder, net_shapes)]
    results = []
    failures = []
    with tensor.precision(np.float64):
        for name, builder, shapes in cases:
            low, high = (-0.5, 0.5) if name == "two_block_net" else (-1.0, 1.0)
            worst = 0.0
            for seed in range(seeds):
                wrapped = _weighted_scalar(builder, seed)
                worst = max(
                    worst,
                    tensor.grad_check(wrapped, shapes, eps=eps, seed=seed, low=low, high=high),
                )
            results.append((name, worst))
            if worst >= tol:
                failures.append((name, worst))
            if verbose:
                status = "ok  " if worst < tol else "FAIL"
                print(f"  {name:<16} {status} max rel err {worst:.3e}")
    return results, failures


def cmd_gradcheck(args) -> int:
    print(f"gradient suite: {args.seeds} seed(s) per op")
    results, failures = run_gradient_suite(seeds=args.seeds, eps=args.eps)
    print(f"{len(results)} op(s) passed, {len(failures)} failed")
    return CHECK_FAILED if failures else 0


def cmd_featmap(args) -> int:
    print(f"root seed: {args.seed}")
    net, _ = _rebuild_from_checkpoint(args.checkpoint)
    img = imaging.load_image(args.image)
    prepped = _preprocess(img, net.arch.resolution, args.crop)
    layers = args.layers.split(",") if args.layers else net.layer_names()[:-1][:4]
    try:
        grids = metrics.feature_map_export(
            net, prepped, layers, channels=args.channels, cols=args.cols, seed=args.seed
        )
    except ValueError as exc:
        raise CliError(str(exc))
    os.makedirs(args.out_dir, exist_ok=True)
    for name, grid in grids.items():
        path = os.path.join(args.out_dir, f"featmap-{name}.png")
        imaging.save_image(path, grid)
        print(f"wrote {path}")
    return 0


def cmd_synth(args) -> int:
    print(f"root seed: {args.seed}")
    images, labels, ids = make_synthetic_set(args.n, args.size, seed=args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    samples = []
    for img, label, gid in zip(images, labels, ids):
        imaging.save_image(os.path.join(args.out_dir, f"{gid}.png"), img)
        samples.append(gz2.LabeledSample(gid, int(label)))
    manifest = gz2.split_dataset(samples, seed=args.seed, path_for=lambda g: f"{g}.png")
    manifest_path = os.path.join(args.out_dir, "manifest.csv")
    gz2.write_manifest(manifest, manifest_path)
    print(f"wrote {len(ids)} images and {manifest_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="morphnet",
        description="Galaxy morphology networks: data curation, training, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curate", help="select clean samples from a vote-fraction catalog")
    p.add_argument("--catalog", required=True)
    p.add_argument("--out-manifest", required=True)
    p.add_argument("--rules", default=None, help="custom rules file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--or-mode-class6", action="store_true",
                   help="class 6 oddity clause passes on any single strong answer")
    p.set_defaults(fn=cmd_curate)

    p = sub.add_parser("train", help="fit a preset on a curated manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--image-dir", required=True)
    p.add_argument("--variant", required=True, choices=scaling.PRESET_NAMES)
    p.add_argument("--mode", default="classify", choices=("classify", "regress"))
    p.add_argument("--config", default=None)
    p.add_argument("--catalog", default=None, help="vote fractions (regression targets)")
    p.add_argument("--checkpoint-dir", default=".")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint against a manifest split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--image-dir", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--catalog", default=None)
    p.add_argument("--crop", default="auto", choices=("auto", "on", "off"))
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("predict", help="write a 37-column submission for an image directory")
    p.add_argument("--image-dir", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--crop", default="auto", choices=("auto", "on", "off"))
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("scale-info", help="show a scaled architecture and its flops")
    p.add_argument("--alpha", type=float, default=1.2)
    p.add_argument("--beta", type=float, default=1.1)
    p.add_argument("--gamma", type=float, default=1.15)
    p.add_argument("--phi", type=int, default=0)
    p.set_defaults(fn=cmd_scale_info)

    p = sub.add_parser("gradcheck", help="finite-difference check of every op")
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--seeds", type=int, default=3)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("featmap", help="export activation grids for chosen layers")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--layers", default=None, help="comma-separated layer names")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--channels", type=int, default=8)
    p.add_argument("--cols", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--crop", default="auto", choices=("auto", "on", "off"))
    p.set_defaults(fn=cmd_featmap)

    p = sub.add_parser("synth", help="generate the procedural 7-class set")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_synth)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (gz2.CatalogSchemaError, CheckpointError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
