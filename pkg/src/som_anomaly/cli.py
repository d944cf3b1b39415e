"""Command line entry point: train, score, evaluate, sweep.

Directory contract:
    features/train/<image-id>_layer<j>.smdt   training feature tensors
    features/test/<image-id>_layer<j>.smdt    test feature tensors
    gt/<image-id>_mask.smdt                   binary masks (defective images)
    gt/labels.csv                             image_id,label rows

Exit codes: 0 success, 1 usage/config error, 2 data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import re
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .detector import SomAnomalyDetector
from .embedding import LayerFeatureMap, assemble_embeddings, build_gallery
from .errors import ConfigError, DataError, SomAnomalyError, TensorFormatError
from .metrics import CategoryResult, EvalReport, GroundTruth, evaluate
from .scoring import score_image
from .tensorio import TensorFile, load_model, read_tensor, save_model, write_tensor

_LAYER_RE = re.compile(r"^(?P<image>.+)_layer(?P<index>\d+)\.smdt$")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def discover_images(feature_dir: Path) -> dict[str, list[int]]:
    """Map image id -> sorted layer indices found under feature_dir."""
    if not feature_dir.is_dir():
        raise DataError(f"feature directory not found: {feature_dir}")
    found: dict[str, list[int]] = {}
    for path in feature_dir.iterdir():
        m = _LAYER_RE.match(path.name)
        if m:
            found.setdefault(m.group("image"), []).append(int(m.group("index")))
    if not found:
        raise DataError(f"no *_layer<j>.smdt files under {feature_dir}")
    return {image: sorted(idx) for image, idx in sorted(found.items())}


def load_image_grid(feature_dir: Path, image_id: str, layer_indices: list[int],
                    interpolation: str):
    """Read one image's layer tensors and assemble its patch grid."""
    layers = []
    for j in layer_indices:
        path = feature_dir / f"{image_id}_layer{j}.smdt"
        if not path.is_file():
            raise DataError(f"{image_id}: missing layer file {path}")
        tensor = read_tensor(path)
        if len(tensor.shape) != 3:
            raise DataError(f"{path}: layer tensor must be (C, H, W), got shape {tensor.shape}")
        layers.append(LayerFeatureMap(j, tensor.data))
    return assemble_embeddings(layers, interpolation=interpolation)


def load_split(feature_dir: Path, interpolation: str):
    """All image grids of one split, keyed and ordered by image id."""
    images = discover_images(feature_dir)
    indices = sorted(set().union(*(set(v) for v in images.values())))
    for image_id, present in images.items():
        missing = sorted(set(indices) - set(present))
        if missing:
            names = ", ".join(f"{image_id}_layer{j}.smdt" for j in missing)
            raise DataError(f"{image_id}: missing layer file(s) {names} under {feature_dir}")
    if indices != list(range(1, len(indices) + 1)):
        raise DataError(f"layer indices must be contiguous from 1, found {indices}")
    grids = {}
    for image_id in images:
        grids[image_id] = load_image_grid(feature_dir, image_id, indices, interpolation)
    return grids


def _config_from_args(args) -> RunConfig:
    overrides = {
        "map_size": args.map_size,
        "top_k": args.k,
        "epsilon": args.epsilon,
        "sigma": args.sigma,
        "seed": args.seed,
        "input_size": args.input_size,
        "epochs": args.epochs,
        "lr_start": args.lr_start,
        "lr_end": args.lr_end,
        "radius_start": args.radius_start,
        "radius_end": args.radius_end,
        "interpolation": args.interpolation,
        "covariance_center": args.covariance_center,
    }
    return load_config(args.config, overrides)


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, default=None, help="flat key=value config file")
    p.add_argument("--k", type=int, default=None, help="top-k nearest nodes at scoring")
    p.add_argument("--map-size", dest="map_size", type=int, default=None, help="SOM lattice side")
    p.add_argument("--epsilon", type=float, default=None, help="covariance regularization")
    p.add_argument("--sigma", type=float, default=None, help="anomaly map smoothing sigma")
    p.add_argument("--seed", type=int, default=None, help="PRNG seed")
    p.add_argument("--input-size", dest="input_size", type=int, default=None,
                   help="pixel resolution of emitted anomaly maps")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr-start", dest="lr_start", type=float, default=None)
    p.add_argument("--lr-end", dest="lr_end", type=float, default=None)
    p.add_argument("--radius-start", dest="radius_start", type=float, default=None)
    p.add_argument("--radius-end", dest="radius_end", type=float, default=None)
    p.add_argument("--interpolation", choices=("nearest", "bilinear"), default=None,
                   help="feature upsampling mode")
    p.add_argument("--covariance-center", dest="covariance_center",
                   choices=("centroid", "mean"), default=None)


def _detector(cfg: RunConfig) -> SomAnomalyDetector:
    return SomAnomalyDetector(
        map_size=cfg.map_size,
        top_k=cfg.top_k,
        epsilon=cfg.epsilon,
        sigma=cfg.sigma,
        output_size=cfg.input_size,
        epochs=cfg.epochs,
        lr_start=cfg.lr_start,
        lr_end=cfg.lr_end,
        radius_start=cfg.radius_start,
        radius_end=cfg.radius_end,
        seed=cfg.seed,
        covariance_center=cfg.covariance_center,
    )


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    grids = load_split(Path(args.features) / "train", cfg.interpolation)
    gallery = build_gallery(list(grids.values()))
    det = _detector(cfg).fit(gallery)
    save_model(det.grid_, det.stats_, args.model, top_k=cfg.top_k,
               config_digest=cfg.digest_bytes())
    print(f"trained on {gallery.n_images} images "
          f"({gallery.height}x{gallery.width} patches, dim {gallery.dim})")
    print(f"quantization error before={det.quantization_error_before_:.6g} "
          f"after={det.quantization_error_after_:.6g}")
    print(f"model written to {args.model}")
    return EXIT_OK


def _score_split(cfg: RunConfig, model_path, feature_dir: Path, out_dir: Path):
    grid, stats, meta = load_model(model_path)
    grids = load_split(feature_dir, cfg.interpolation)
    first = next(iter(grids.values()))
    if first.dim != meta.D:
        raise DataError(f"model dim {meta.D} != test embedding dim {first.dim}")
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for image_id, patch_grid in grids.items():
        amap = score_image(grid, stats, patch_grid, k=cfg.top_k, sigma=cfg.sigma,
                           out_size=cfg.input_size)
        pixels = amap.pixel_scores.astype(np.float32)
        write_tensor(TensorFile(pixels.shape, pixels), out_dir / f"{image_id}_amap.smdt")
        rows.append((image_id, float(pixels.max())))
    with open(out_dir / "scores.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "score"])
        for image_id, score in rows:
            writer.writerow([image_id, repr(score)])
    return rows


def cmd_score(args) -> int:
    cfg = _config_from_args(args)
    rows = _score_split(cfg, args.model, Path(args.features) / "test", Path(args.out))
    print(f"scored {len(rows)} images -> {args.out}")
    return EXIT_OK


def _read_scores_csv(path: Path) -> dict[str, float]:
    if not path.is_file():
        raise DataError(f"score table not found: {path}")
    scores = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["image_id", "score"]:
            raise DataError(f"{path}: expected header image_id,score")
        for row in reader:
            if len(row) != 2:
                raise DataError(f"{path}: malformed row {row!r}")
            scores[row[0]] = float(row[1])
    return scores


def _read_labels_csv(path: Path) -> dict[str, int]:
    if not path.is_file():
        raise DataError(f"label table not found: {path}")
    labels = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["image_id", "label"]:
            raise DataError(f"{path}: expected header image_id,label")
        for row in reader:
            if len(row) != 2:
                raise DataError(f"{path}: malformed row {row!r}")
            labels[row[0]] = int(row[1])
    return labels


def load_ground_truth(gt_dir: Path, map_shape) -> GroundTruth:
    """Masks + labels under gt/; good images may omit their (all-zero) mask file."""
    labels = _read_labels_csv(gt_dir / "labels.csv")
    masks = {}
    for image_id, label in labels.items():
        mask_path = gt_dir / f"{image_id}_mask.smdt"
        if mask_path.is_file():
            tensor = read_tensor(mask_path)
            mask = tensor.data
            if mask.shape != tuple(map_shape):
                raise DataError(
                    f"{mask_path}: mask shape {mask.shape} != score map shape {tuple(map_shape)}"
                )
            masks[image_id] = mask.astype(np.uint8)
        elif label == 0:
            masks[image_id] = np.zeros(map_shape, dtype=np.uint8)
        else:
            raise DataError(f"{image_id}: defective image without mask file {mask_path}")
    return GroundTruth(pixel_masks=masks, image_labels=labels)


def _evaluate_dir(maps_dir: Path, gt_dir: Path) -> CategoryResult:
    image_scores = _read_scores_csv(maps_dir / "scores.csv")
    pixel_maps = {}
    for image_id in image_scores:
        path = maps_dir / f"{image_id}_amap.smdt"
        if not path.is_file():
            raise DataError(f"missing anomaly map {path}")
        tensor = read_tensor(path)
        if len(tensor.shape) != 2:
            raise DataError(f"{path}: anomaly map must be 2-d, got shape {tensor.shape}")
        pixel_maps[image_id] = tensor.data.astype(np.float64)
    if not pixel_maps:
        raise DataError(f"no anomaly maps under {maps_dir}")
    shape = next(iter(pixel_maps.values())).shape
    gt = load_ground_truth(gt_dir, shape)
    extra = set(gt.image_ids) - set(pixel_maps)
    if extra:
        raise DataError(f"missing score outputs for: {', '.join(sorted(extra))}")
    return evaluate(pixel_maps, image_scores, gt)


def _write_report(report: EvalReport, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    (out_dir / "report.txt").write_text(report.format_table() + "\n", encoding="utf-8")


def cmd_evaluate(args) -> int:
    cfg = _config_from_args(args)
    result = _evaluate_dir(Path(args.maps), Path(args.gt))
    report = EvalReport({args.category: result}, config_digest=cfg.digest())
    _write_report(report, Path(args.out))
    print(report.format_table())
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config_from_args(args)
    k_values = [int(v) for v in args.k_values.split(",")] if args.k_values else [cfg.top_k]
    map_sizes = [int(v) for v in args.map_sizes.split(",")] if args.map_sizes else [cfg.map_size]
    out_root = Path(args.out)
    features = Path(args.features)
    settings = []
    for K in map_sizes:
        train_cfg = RunConfig(**{**_cfg_dict(cfg), "map_size": K})
        model_path = out_root / f"model_K{K}.smdm"
        grids = load_split(features / "train", train_cfg.interpolation)
        gallery = build_gallery(list(grids.values()))
        det = _detector(train_cfg).fit(gallery)
        out_root.mkdir(parents=True, exist_ok=True)
        save_model(det.grid_, det.stats_, model_path, top_k=train_cfg.top_k,
                   config_digest=train_cfg.digest_bytes())
        for k in k_values:
            run_cfg = RunConfig(**{**_cfg_dict(train_cfg), "top_k": k})
            maps_dir = out_root / f"K{K}_k{k}"
            _score_split(run_cfg, model_path, features / "test", maps_dir)
            result = _evaluate_dir(maps_dir, Path(args.gt))
            settings.append({"map_size": K, "top_k": k, "metrics": result.as_dict()})
    payload = {"config_digest": cfg.digest(), "settings": settings}
    out_root.mkdir(parents=True, exist_ok=True)
    (out_root / "sweep.json").write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    table = _sweep_table(settings)
    (out_root / "sweep.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    return EXIT_OK


def _cfg_dict(cfg: RunConfig) -> dict:
    from dataclasses import asdict

    return asdict(cfg)


def _sweep_table(settings: list[dict]) -> str:
    header = f"{'map_size':>8}  {'k':>3}  {'pixel AUROC':>11}  {'image AUROC':>11}  {'PRO':>6}"
    lines = [header, "-" * len(header)]
    for s in settings:
        m = s["metrics"]
        lines.append(
            f"{s['map_size']:>8}  {s['top_k']:>3}  {100 * m['pixel_auroc']:>11.1f}  "
            f"{100 * m['image_auroc']:>11.1f}  {100 * m['pro_score']:>6.1f}"
        )
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="som-anomaly",
                     description="SOM-memory anomaly detection over patch embeddings")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="fit a model on features/train")
    p_train.add_argument("--features", required=True, help="dataset features directory")
    p_train.add_argument("--model", required=True, help="output model file (.smdm)")
    _add_config_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_score = sub.add_parser("score", help="score features/test against a model")
    p_score.add_argument("--features", required=True, help="dataset features directory")
    p_score.add_argument("--model", required=True, help="trained model file")
    p_score.add_argument("--out", required=True, help="output directory for maps + scores.csv")
    _add_config_flags(p_score)
    p_score.set_defaults(func=cmd_score)

    p_eval = sub.add_parser("evaluate", help="compute metrics for scored maps")
    p_eval.add_argument("--maps", required=True, help="directory produced by score")
    p_eval.add_argument("--gt", required=True, help="ground truth directory")
    p_eval.add_argument("--out", required=True, help="output directory for report files")
    p_eval.add_argument("--category", default="dataset", help="category name for the report")
    _add_config_flags(p_eval)
    p_eval.set_defaults(func=cmd_evaluate)

    p_sweep = sub.add_parser("sweep", help="train/score/evaluate over k and map-size grids")
    p_sweep.add_argument("--features", required=True)
    p_sweep.add_argument("--gt", required=True)
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--k-values", dest="k_values", default=None,
                         help="comma-separated k settings, e.g. 1,2,3,4,5")
    p_sweep.add_argument("--map-sizes", dest="map_sizes", default=None,
                         help="comma-separated lattice sides, e.g. 14,28,56")
    _add_config_flags(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"som-anomaly: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TensorFormatError, DataError) as exc:
        print(f"som-anomaly: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SomAnomalyError as exc:
        print(f"som-anomaly: error: {exc}", file=sys.stderr)
        return EXIT_DATA


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
