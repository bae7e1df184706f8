"""Command-line interface.

Subcommands:
    synth      write synthetic GAPR/GAPL pairs plus a manifest
    featurize  write per-image GAPF feature caches
    repset     build the representative set from the train split
    predict    segment one patch with an existing representative set
    eval       score the test split, writing a JSON report
    viz        render a label file as a PPM color map

Exit code 0 on success; errors print a message to stderr and exit 1.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .active import load_repset, save_repset
from .features import extract_features, save_feature_cache
from .pipeline import (
    build_repset,
    evaluate_split,
    load_config,
    predict_image,
    render_colormap,
    run_synth,
    save_report,
    synth_config_from_dict,
)
from .raster_io import load_labels, load_manifest, load_pair, load_patch, save_labels


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gapseg",
        description="Graph active-learning pixel segmentation pipeline.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--config", help="synth config JSON (optional)")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("featurize", help="write GAPF feature caches")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", help="pipeline config JSON (optional)")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("repset", help="build the representative set")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", help="pipeline config JSON (optional)")
    p.add_argument("--out", required=True, help="output .gaps path")
    p.add_argument("--trace", help="optional JSON loop-trace output")

    p = sub.add_parser("predict", help="segment a single patch")
    p.add_argument("--repset", required=True)
    p.add_argument("--patch", required=True)
    p.add_argument("--config", help="pipeline config JSON (optional)")
    p.add_argument("--out", required=True, help="output .gapl path")
    p.add_argument("--ppm", help="optional PPM color map output")

    p = sub.add_parser("eval", help="evaluate on the test split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--repset", required=True)
    p.add_argument("--config", help="pipeline config JSON (optional)")
    p.add_argument("--out", required=True, help="output report JSON path")
    p.add_argument(
        "--collapse-sediment",
        action="store_true",
        help="fold sediment into land on predictions and truth",
    )

    p = sub.add_parser("viz", help="render labels as a PPM color map")
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    return parser


def _cmd_synth(args) -> None:
    raw = {}
    if args.config:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise ValueError(f"{args.config}: synth config must be a JSON object")
    manifest_path = run_synth(synth_config_from_dict(raw), args.out)
    print(f"wrote {manifest_path}")


def _cmd_featurize(args) -> None:
    config = load_config(args.config)
    manifest = load_manifest(args.manifest)
    base = Path(args.manifest).parent
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for img_id, entry in enumerate(manifest.entries):
        patch, _ = load_pair(entry, base)
        feats = extract_features(patch, config.feature, image_id=img_id)
        cache = out / (Path(entry.patch).stem + ".gapf")
        save_feature_cache(feats, cache)
        print(f"wrote {cache}")


def _cmd_repset(args) -> None:
    config = load_config(args.config)
    manifest = load_manifest(args.manifest)
    repset, traces = build_repset(manifest, config, Path(args.manifest).parent)
    save_repset(repset, args.out)
    print(f"wrote {args.out} ({repset.size} records, dim {repset.dim})")
    if args.trace:
        payload = {"images": [t.to_json() for t in traces]}
        Path(args.trace).write_text(
            json.dumps(payload, indent=2) + "\n", encoding="utf-8"
        )
        print(f"wrote {args.trace}")


def _cmd_predict(args) -> None:
    config = load_config(args.config)
    repset = load_repset(args.repset)
    patch = load_patch(args.patch)
    pred = predict_image(repset, patch, config)
    save_labels(pred.to_mask(), args.out)
    print(f"wrote {args.out}")
    if args.ppm:
        Path(args.ppm).write_bytes(render_colormap(pred))
        print(f"wrote {args.ppm}")


def _cmd_eval(args) -> None:
    config = load_config(args.config)
    if args.collapse_sediment:
        config.collapse_sediment = True
    manifest = load_manifest(args.manifest)
    repset = load_repset(args.repset)
    report = evaluate_split(manifest, repset, config, Path(args.manifest).parent)
    save_report(report, args.out)
    agg = report["aggregate"]
    print(f"wrote {args.out} (aggregate OA {agg['oa']})")


def _cmd_viz(args) -> None:
    mask = load_labels(args.labels)
    Path(args.out).write_bytes(render_colormap(mask))
    print(f"wrote {args.out}")


_COMMANDS = {
    "synth": _cmd_synth,
    "featurize": _cmd_featurize,
    "repset": _cmd_repset,
    "predict": _cmd_predict,
    "eval": _cmd_eval,
    "viz": _cmd_viz,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        _COMMANDS[args.command](args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
