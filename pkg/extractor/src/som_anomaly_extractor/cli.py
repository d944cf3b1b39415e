"""Extraction CLI: images in, per-layer tensor files out, plus an audit mode.

Exit codes: 0 success, 1 usage error, 2 extraction/data error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import torch

from .backbone import FeatureExtractor
from .errors import ExtractError
from .preprocess import PreprocessSpec, load_image, preprocess
from .smdt import write_sidecar, write_tensor
from .verify import verify_dir

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def discover_images(image_dir: Path) -> list[Path]:
    if not image_dir.is_dir():
        raise ExtractError(f"image directory not found: {image_dir}")
    paths = sorted(p for p in image_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not paths:
        raise ExtractError(f"no images under {image_dir}")
    return paths


def extract_features(image_dir, out_dir, extractor: FeatureExtractor,
                     spec: PreprocessSpec = PreprocessSpec(), batch_size: int = 4,
                     progress=None) -> int:
    """Write <stem>_layer{1,2,3}.smdt (+ .meta sidecars) per image; returns count."""
    paths = discover_images(Path(image_dir))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sidecar = spec.sidecar_line()
    for start in range(0, len(paths), batch_size):
        chunk = paths[start : start + batch_size]
        batch = torch.stack([preprocess(load_image(p), spec) for p in chunk])
        for path, layers in zip(chunk, extractor.layer_features(batch)):
            for index, values in enumerate(layers, start=1):
                target = out_dir / f"{path.stem}_layer{index}.smdt"
                write_tensor(values, target)
                write_sidecar(target, sidecar)
            if progress:
                progress(path)
    return len(paths)


def cmd_extract(args) -> int:
    spec = PreprocessSpec(resize_to=args.resize, crop_to=args.crop)
    extractor = FeatureExtractor(
        weights_path=args.weights,
        weights_sha256=args.weights_sha256,
        random_init_seed=args.seed if args.random_init else None,
        device=args.device,
    )
    count = extract_features(args.images, args.out, extractor, spec,
                             batch_size=args.batch_size)
    print(f"extracted {count} images -> {args.out}")
    return 0


def cmd_verify(args) -> int:
    findings = verify_dir(args.dir)
    if not findings:
        print(f"{args.dir}: all tensor files healthy")
        return 0
    for f in findings:
        print(f"{f.path}: {f.reason}", file=sys.stderr)
    return 2


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="som-extract",
                     description="backbone feature extraction to tensor files")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ex = sub.add_parser("extract", help="dump per-layer features for an image directory")
    p_ex.add_argument("--images", required=True, help="input image directory")
    p_ex.add_argument("--out", required=True, help="output tensor directory")
    p_ex.add_argument("--device", default="cpu")
    p_ex.add_argument("--weights", default=None,
                      help="local backbone checkpoint (state dict)")
    p_ex.add_argument("--weights-sha256", dest="weights_sha256", default=None,
                      help="pinned checksum for --weights")
    p_ex.add_argument("--random-init", dest="random_init", action="store_true",
                      help="use an untrained, seeded backbone (no checkpoint needed)")
    p_ex.add_argument("--seed", type=int, default=0, help="seed for --random-init")
    p_ex.add_argument("--batch-size", dest="batch_size", type=int, default=4)
    p_ex.add_argument("--resize", type=int, default=256)
    p_ex.add_argument("--crop", type=int, default=224)
    p_ex.set_defaults(func=cmd_extract)

    p_vf = sub.add_parser("verify", help="re-parse every tensor file and report findings")
    p_vf.add_argument("--dir", required=True)
    p_vf.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ExtractError as exc:
        print(f"som-extract: error: {exc}", file=sys.stderr)
        return 2


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
