"""Command-line front end: convert, stats, weights, split, evaluate."""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import List, Optional

from .balance import class_histogram, image_weights
from .errors import Dsm2YoloError
from .evaluation import evaluate, read_sizes_file
from .heightclass import CLASS_LABELS
from .ingest import load_dataset, validate_alignment
from .labels import SplitSpec, atomic_write_text, convert_dataset

log = logging.getLogger("dsm2yolo")

CONFIG_SECTION = "run"


@dataclass
class RunConfig:
    annotations: str = ""
    dsm_dir: str = ""
    out_dir: str = ""
    split_seed: int = 0
    val_fraction: float = 0.20
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0

    @property
    def class_edges(self):
        return dict(CLASS_LABELS)

    def check(self, *required: str) -> None:
        for name in required:
            if not getattr(self, name):
                raise Dsm2YoloError(f"config field {name!r} is empty")
        if not 0.0 < self.val_fraction < 1.0:
            raise Dsm2YoloError(f"val_fraction must be in (0, 1), got {self.val_fraction}")

    def to_text(self) -> str:
        lines = [f"{f.name} = {getattr(self, f.name)}" for f in fields(self)]
        lines.append("class_edges = " + ", ".join(f"{k}:{v}" for k, v in self.class_edges.items()))
        return "\n".join(lines) + "\n"


def read_config(path) -> dict:
    """Flat ``key = value`` file; a ``[run]`` header is optional."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser()
    if not any(line.strip().startswith("[") for line in text.splitlines()):
        text = f"[{CONFIG_SECTION}]\n" + text
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise Dsm2YoloError(f"{path}: {exc}") from exc
    known = {f.name: f for f in fields(RunConfig)}
    out = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if key == "class_edges":
                continue  # fixed; echoed only
            if key not in known:
                raise Dsm2YoloError(f"{path}: unknown config key {key!r}")
            try:
                out[key] = type(known[key].default)(raw)
            except ValueError:
                raise Dsm2YoloError(f"{path}: bad value for {key}: {raw!r}") from None
    return out


def build_config(args) -> RunConfig:
    values = read_config(args.config) if getattr(args, "config", None) else {}
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    return RunConfig(**values)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_config_flags(p, names):
    p.add_argument("--config", help="key = value config file; flags override its entries")
    helps = {
        "annotations": "COCO-style annotation file",
        "dsm_dir": "directory of height rasters named <image stem>.asc|.hgr",
        "out_dir": "output directory; labels go to <out_dir>/labels/{train,val}",
        "split_seed": "seed mixed into the split hash (default 0)",
        "val_fraction": "share of images sent to validation (default 0.20)",
        "focal_alpha": "focal loss alpha, echoed in the run summary (default 0.25)",
        "focal_gamma": "focal loss gamma, echoed in the run summary (default 2.0)",
    }
    types = {f.name: type(f.default) for f in fields(RunConfig)}
    for name in names:
        p.add_argument(f"--{name}", f"--{name.replace('_', '-')}", dest=name,
                       type=types[name], default=None, help=helps[name])


def cmd_convert(args) -> int:
    cfg = build_config(args)
    cfg.check("annotations", "dsm_dir", "out_dir")
    if not Path(cfg.dsm_dir).is_dir():
        raise Dsm2YoloError(f"DSM directory not found: {cfg.dsm_dir}")
    index = load_dataset(cfg.annotations)
    alignment = validate_alignment(index, cfg.dsm_dir)
    log.debug("alignment:\n%s", alignment.to_text())
    if not alignment.ok:
        first = alignment.problems()[0]
        raise Dsm2YoloError(f"{len(alignment.problems())} image(s) not aligned with rasters in "
                            f"{cfg.dsm_dir}, first: {first.stem} ({first.status})")
    report = convert_dataset(index, cfg.dsm_dir, cfg.out_dir,
                             SplitSpec(cfg.split_seed, cfg.val_fraction))
    text = cfg.to_text() + "\n" + report.to_text()
    sys.stdout.write(text)
    if args.report:
        atomic_write_text(args.report, text)
    return 0


def cmd_stats(args) -> int:
    if not Path(args.label_dir).is_dir():
        raise Dsm2YoloError(f"label directory not found: {args.label_dir}")
    sys.stdout.write(class_histogram(args.label_dir).to_text())
    return 0


def cmd_weights(args) -> int:
    if not Path(args.label_dir).is_dir():
        raise Dsm2YoloError(f"label directory not found: {args.label_dir}")
    weights = image_weights(args.label_dir)
    atomic_write_text(args.out_file, weights.to_text())
    print(f"wrote {len(weights.weights)} weights to {args.out_file}")
    return 0


def cmd_split(args) -> int:
    cfg = build_config(args)
    cfg.check()
    if args.stems:
        stems = [s.strip() for s in Path(args.stems).read_text().splitlines() if s.strip()]
    elif cfg.annotations:
        stems = [im.stem for im in load_dataset(cfg.annotations).images]
    else:
        raise Dsm2YoloError("split needs --stems or an annotations file")
    train, val = SplitSpec(cfg.split_seed, cfg.val_fraction).partition(stems)
    print(f"# train {len(train)}")
    print("\n".join(train) if train else "", end="\n" if train else "")
    print(f"# val {len(val)}")
    print("\n".join(val) if val else "", end="\n" if val else "")
    return 0


def cmd_evaluate(args) -> int:
    if not Path(args.gt_dir).is_dir():
        raise Dsm2YoloError(f"directory not found: {args.gt_dir}")
    report = evaluate(args.gt_dir, args.pred_dir, read_sizes_file(args.sizes_file))
    sys.stdout.write(report.to_text())
    if args.json:
        atomic_write_text(args.json, report.to_json() + "\n")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dsm2yolo", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("convert", help="DSM + COCO polygons -> YOLO height-class labels")
    _add_config_flags(p, [f.name for f in fields(RunConfig)])
    p.add_argument("--report", help="also write the conversion report to this file")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("stats", help="per-class instance counts and percentages")
    p.add_argument("label_dir", help="directory of ground-truth label files (searched recursively)")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("weights", help="inverse-frequency sampling weight per image")
    p.add_argument("label_dir", help="directory of ground-truth label files (searched recursively)")
    p.add_argument("out_file", help="output file, one '<stem> <weight>' line per image")
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("split", help="print the deterministic train/val partition")
    _add_config_flags(p, ["annotations", "split_seed", "val_fraction"])
    p.add_argument("--stems", help="file with one image stem per line (instead of annotations)")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("evaluate", help="box/mask precision, recall and mAP per height class")
    p.add_argument("gt_dir", help="ground-truth label directory")
    p.add_argument("pred_dir", help="prediction label directory (confidence as last token)")
    p.add_argument("sizes_file", help="lines of '<stem> <W> <H>'")
    p.add_argument("--json", help="also write the report as JSON to this file")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (Dsm2YoloError, OSError) as exc:
        print(f"dsm2yolo {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
