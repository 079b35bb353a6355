"""shearguard command line: keys, payload encode/decode, training simulation, probe.

Exit status: 0 on success, 1 on usage or parameter errors, 2 on integrity
or key-mismatch errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .codec import relative_error, shdec, shrec
from .errors import (
    EncodingError,
    IntegrityError,
    KeyMismatchError,
    ShearguardError,
    WireError,
)
from .fedsim import SimConfig, generate_shapes_dataset, run_simulation
from .model import save_checkpoint
from .probe import run_probe
from .rasters import read_image, write_imgf
from .shearlet_core import build_system, derive_key, read_key_file, write_key_file
from .wire import decode_payload, encode_payload

EXIT_USAGE = 1
EXIT_INTEGRITY = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _shears(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="shearguard", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("keygen", help="derive a key and write it to a key file")
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--scales", type=int, default=2)
    p.add_argument("--shears", type=_shears, default=[3, 5])
    p.add_argument("--mode", choices=["symmetric", "truncated"], default="truncated")
    p.add_argument("--no-mask", action="store_true", help="disable the keyed phase mask")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("encode", help="shearlet-encode one image into an SHC1 payload")
    p.add_argument("--key", type=Path, required=True)
    p.add_argument("--in", dest="input", type=Path, required=True, help="IDX or IMGF image file")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--label", type=int, required=True)
    p.add_argument("--owner", type=int, default=0)
    p.add_argument("--sequence", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("decode", help="reconstruct an image from an SHC1 payload")
    p.add_argument("--key", type=Path, required=True)
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="IMGF output raster")
    p.add_argument("--force", action="store_true", help="decode even if the key fingerprint differs")
    p.add_argument("--ref", type=Path, help="reference image (IDX or IMGF) for an error report")
    p.add_argument("--ref-index", type=int, default=0)

    p = sub.add_parser("train", help="run the federated simulation on synthetic shapes")
    p.add_argument("--owners", type=int, default=4)
    p.add_argument("--samples", type=int, default=250, help="samples per owner")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--key", type=Path, help="key file; derived from --seed when omitted")
    p.add_argument("--idx-images", type=Path)
    p.add_argument("--idx-labels", type=Path)
    p.add_argument("--report", type=Path)
    p.add_argument("--checkpoint", type=Path, help="write the trained model as SHMD")

    p = sub.add_parser("probe", help="measure decision-boundary leakage of mixup training")
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--report", type=Path)
    p.add_argument("--csv", type=Path, help="per-sample gaps at the mixed points")

    p = sub.add_parser("inspect", help="print the header of an SHC1 payload")
    p.add_argument("path", type=Path)
    return parser


def _emit(text: str, path: Path | None) -> None:
    sys.stdout.write(text)
    if path is not None:
        path.write_text(text, encoding="utf-8")


def _check_positive(**values) -> None:
    for name, v in values.items():
        if v <= 0:
            raise UsageError(f"--{name} must be positive")


def cmd_keygen(args) -> None:
    spec = derive_key(args.seed, args.scales, args.shears, args.mode, not args.no_mask)
    write_key_file(spec, args.out)
    print(f"fingerprint={spec.fingerprint:016x}")


def cmd_encode(args) -> None:
    spec = read_key_file(args.key)
    image = read_image(args.input, args.index)
    system = build_system(spec, *image.shape)
    data = encode_payload(shdec(image, system), args.label, args.owner, args.sequence)
    args.out.write_bytes(data)
    print(f"bytes={len(data)} fingerprint={system.fingerprint:016x}")


def cmd_decode(args) -> None:
    spec = read_key_file(args.key)
    payload = decode_payload(args.input.read_bytes())
    reference = read_image(args.ref, args.ref_index) if args.ref else None
    system = build_system(spec, payload.height, payload.width)
    image = shrec(payload.to_coefficient_set(), system, force=args.force)
    write_imgf(args.out, image)
    line = f"label={payload.label} owner={payload.owner_id} sequence={payload.sequence}"
    if reference is not None:
        line += f" relerr={relative_error(image, reference):.3e}"
    print(line)


def cmd_train(args) -> None:
    _check_positive(owners=args.owners, samples=args.samples, epochs=args.epochs, batch=args.batch,
                    lr=args.lr, size=args.size)
    key = read_key_file(args.key) if args.key else None
    use_idx = args.idx_images is not None or args.idx_labels is not None
    cfg = SimConfig(
        num_owners=args.owners,
        samples_per_owner=args.samples,
        epochs=args.epochs,
        batch_size=args.batch,
        learning_rate=args.lr,
        master_seed=args.seed,
        dataset="idx" if use_idx else "shapes",
        image_size=args.size,
        key=key,
        idx_images=str(args.idx_images) if args.idx_images else None,
        idx_labels=str(args.idx_labels) if args.idx_labels else None,
    )
    report = run_simulation(cfg)
    _emit(report.to_text(), args.report)
    if args.checkpoint is not None:
        save_checkpoint(report.model, args.checkpoint)


def cmd_probe(args) -> None:
    _check_positive(samples=args.samples)
    if args.epochs < 0:
        raise UsageError("--epochs must be non-negative")
    if not 0.0 <= args.lam <= 1.0:
        raise UsageError("--lambda must lie in [0, 1]")
    images, labels = generate_shapes_dataset(args.samples, args.size, args.size, args.seed)
    report = run_probe(images, labels, lam=args.lam, epochs=args.epochs, seed=args.seed)
    _emit(report.to_text(), args.report)
    if args.csv is not None:
        report.write_csv(args.csv)


def cmd_inspect(args) -> None:
    payload = decode_payload(args.path.read_bytes())
    for name, value in payload.header_fields().items():
        print(f"{name}={value}")
    energy = np.sum(np.abs(payload.coefficients.astype(complex)) ** 2, axis=(1, 2))
    print("band_energy=" + ",".join(f"{e:.6g}" for e in energy))


COMMANDS = {
    "keygen": cmd_keygen,
    "encode": cmd_encode,
    "decode": cmd_decode,
    "train": cmd_train,
    "probe": cmd_probe,
    "inspect": cmd_inspect,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except EncodingError as exc:
        # encoder-side range problems come from bad arguments, not bad input bytes
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KeyMismatchError, IntegrityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except WireError as exc:
        print(f"error: malformed payload: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except (UsageError, ShearguardError, IndexError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
