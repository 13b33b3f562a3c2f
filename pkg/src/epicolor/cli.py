"""Command-line interface: train a model, colorize an image, self-check."""

from __future__ import annotations

import argparse
import sys

from PIL import UnidentifiedImageError

from .colorize import colorize
from .epitome import train
from .imagekit import Semantics, grayscale_as_luminance, load_image, save_image
from .model import TrainConfig
from .modelfile import ModelFormatError, load_model, save_model
from .selftest import run_selftest

EXIT_OK = 0
EXIT_INVALID_INPUT = 1
EXIT_IO_FAILURE = 2
EXIT_CORRUPT_MODEL = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epicolor",
        description="Train a color appearance model from a reference image "
        "and transfer its chroma onto grayscale images.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train_p = sub.add_parser("train", help="fit a model to a color reference PNG")
    train_p.add_argument("--ref", required=True, help="reference color PNG")
    train_p.add_argument("--out", required=True, help="output model file")
    train_p.add_argument("--patch-size", type=int, default=12)
    train_p.add_argument("--lambda", dest="lam", type=float, default=0.5,
                         help="appearance weight versus descriptors, in [0, 1]")
    train_p.add_argument("--iters", type=int, default=20)
    train_p.add_argument("--omega", type=float, default=0.5,
                         help="patch-grid gap as a fraction of the patch size")
    train_p.add_argument("--sift-grid", type=int, default=3)
    train_p.add_argument("--epitome-scale", type=float, default=0.5)
    train_p.add_argument("--seed", type=int, default=0)
    train_p.set_defaults(func=_cmd_train)

    color_p = sub.add_parser("colorize", help="colorize a grayscale PNG with a model")
    color_p.add_argument("--model", required=True, help="trained model file")
    color_p.add_argument("--target", required=True, help="grayscale PNG to colorize")
    color_p.add_argument("--out", required=True, help="output color PNG")
    color_p.add_argument("--omega", type=float, default=0.25)
    color_p.add_argument("--luma-remap", action="store_true",
                         help="match target luminance statistics to the model before matching")
    color_p.set_defaults(func=_cmd_colorize)

    self_p = sub.add_parser("selftest", help="run the built-in oracle suite")
    self_p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    self_p.set_defaults(func=_cmd_selftest)
    return parser


def _cmd_train(args) -> int:
    reference = load_image(args.ref)
    if reference.semantics is not Semantics.RGB:
        raise ValueError("the reference must be a color image")
    config = TrainConfig(
        patch_size=args.patch_size,
        omega=args.omega,
        iterations=args.iters,
        lam=args.lam,
        sift_grid=args.sift_grid,
        epitome_scale=args.epitome_scale,
        seed=args.seed,
    )
    result = train(
        reference,
        config,
        progress=lambda i, objective: print(f"iter {i + 1} loglik {objective:.6f}"),
    )
    save_model(result.model, args.out)
    return EXIT_OK


def _cmd_colorize(args) -> int:
    model = load_model(args.model)
    target = load_image(args.target)
    if target.semantics is not Semantics.Y:
        target = grayscale_as_luminance(target)
    result = colorize(target, model, omega_infer=args.omega, luma_remap=args.luma_remap)
    save_image(result, args.out)
    return EXIT_OK


def _cmd_selftest(args) -> int:
    return EXIT_OK if run_selftest(inject_fault=args.inject_fault) else 1


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ModelFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CORRUPT_MODEL
    except (ValueError, UnidentifiedImageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO_FAILURE


if __name__ == "__main__":
    sys.exit(main())
