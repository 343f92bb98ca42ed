"""CLI for slice-feature extraction: `vxtk-extract volume|mask`."""

from __future__ import annotations

import argparse
import sys

from vxtk_extractor.encoders import ENCODERS, build_encoder
from vxtk_extractor.extract import ExtractorConfig, export_mask, extract_volume


def _parse_layers(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.replace(",", " ").split())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vxtk-extract")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("volume", help="extract per-axis per-layer slice features")
    p.add_argument("--volume", required=True, nargs="+", help="volume file(s): .npy/.npz/.vxtk")
    p.add_argument("--mask", nargs="*", default=None, help="matching mask file(s)")
    p.add_argument("--out", required=True)
    p.add_argument("--encoder", choices=sorted(ENCODERS), default="dinov2-large")
    p.add_argument("--layers", default="6,12,18,24")
    p.add_argument("--edge", type=int, default=224)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--device", default="cpu")
    p.add_argument("--random-init", action="store_true",
                   help="build the architecture with seeded random weights (offline)")
    p.add_argument("--init-seed", type=int, default=0)
    p.set_defaults(func=cmd_volume)

    p = sub.add_parser("mask", help="export a binary brain mask container")
    p.add_argument("--mask", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--volume-id", default=None)
    p.set_defaults(func=cmd_mask)
    return parser


def cmd_volume(args) -> int:
    config = ExtractorConfig(
        encoder=args.encoder,
        layers=_parse_layers(args.layers),
        H=args.edge,
        batch_size=args.batch_size,
        device=args.device,
        pretrained=not args.random_init,
        init_seed=args.init_seed,
    )
    masks = args.mask if args.mask else [None] * len(args.volume)
    if len(masks) != len(args.volume):
        raise SystemExit("--mask count must match --volume count")
    shared = build_encoder(
        config.encoder,
        config.H,
        pretrained=config.pretrained,
        init_seed=config.init_seed,
        device=config.device,
    )
    for vol, mask in zip(args.volume, masks):
        result = extract_volume(vol, mask, config, args.out, encoder_and_spec=shared)
        print(f"extracted {result.volume_id}: {len(result.files)} files -> {args.out}")
    return 0


def cmd_mask(args) -> int:
    path = export_mask(args.mask, args.out, volume_id=args.volume_id)
    print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args) or 0
    except (ValueError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
