"""Command-line entry point.

Exit codes: 0 success, 1 bad input data, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from supportseg import io
from supportseg.cluster import ClusterConfig, instance_scores, panoptic_from_scene, run_pipeline
from supportseg.corrupt import NoiseConfig, corrupt
from supportseg.losses import LossWeights, bundle_losses
from supportseg.metrics import average_precision, panoptic_quality, scored_segments
from supportseg.scene import SceneGenConfig, generate_scene
from supportseg.targets import downsample_scene, make_targets


class UsageError(Exception):
    pass


def _add_gen(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("scene generation")
    g.add_argument("--height", type=int, default=64)
    g.add_argument("--width", type=int, default=64)
    g.add_argument("--n-min", type=int, default=1, help="minimum number of instances drawn")
    g.add_argument("--n-max", type=int, default=8, help="maximum number of instances drawn")
    g.add_argument("--shapes", default="rectangle,ellipse")
    g.add_argument("--size-min", type=int, default=6)
    g.add_argument("--size-max", type=int, default=32)
    g.add_argument("--no-occlusion", action="store_true")
    g.add_argument("--stuff-layout", choices=("bands", "fill"), default="bands")
    g.add_argument("--max-same-class-iou", type=float, default=0.5)


def _add_targets(p: argparse.ArgumentParser) -> None:
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--center-fraction", type=float, default=0.2)


def _add_noise(p: argparse.ArgumentParser, alias: bool = False) -> None:
    g = p.add_argument_group("noise")
    g.add_argument("--label-flip-rate", type=float, default=0.0)
    names = ["--distance-sigma"] + (["--noise"] if alias else [])
    g.add_argument(*names, dest="distance_sigma", type=float, default=0.0,
                   help="Gaussian sigma added to the distance maps")
    g.add_argument("--center-dropout", type=float, default=0.0)
    g.add_argument("--center-false-rate", type=float, default=0.0)


def _add_cluster(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("clustering")
    g.add_argument("--seed-threshold", type=float, default=0.5)
    g.add_argument("--nms-iou", type=float, default=0.5)
    g.add_argument("--tiebreak-margin", type=float, default=0.05)
    g.add_argument("--min-instance-pixels", type=int, default=1)
    g.add_argument("--seed-label-gate", action="store_true")
    g.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="supportseg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic scene")
    _add_gen(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("targets", help="encode a scene into an ideal prediction bundle")
    p.add_argument("--scene", required=True)
    _add_targets(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("corrupt", help="degrade a bundle with seeded noise")
    p.add_argument("--bundle", required=True)
    _add_noise(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("cluster", help="turn a bundle into a panoptic map")
    p.add_argument("--bundle", required=True)
    _add_cluster(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("loss", help="score a bundle against targets")
    p.add_argument("--bundle", required=True)
    p.add_argument("--targets", required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)

    p = sub.add_parser("eval", help="PQ and AP of a panoptic map against a scene")
    p.add_argument("--pred", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--out")

    p = sub.add_parser("pipeline", help="gen, targets, corrupt, cluster and eval in one run")
    _add_gen(p)
    _add_targets(p)
    _add_noise(p, alias=True)
    _add_cluster(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="directory for every intermediate artifact")

    p = sub.add_parser("render", help="render a panoptic map to PPM")
    p.add_argument("--panoptic", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scale", type=int, default=1)
    return parser


def _gen_config(a) -> SceneGenConfig:
    cfg = SceneGenConfig(
        height=a.height, width=a.width, n_instances=(a.n_min, a.n_max),
        shapes=tuple(s.strip() for s in a.shapes.split(",") if s.strip()),
        size_range=(a.size_min, a.size_max), occlusion=not a.no_occlusion,
        stuff_layout=a.stuff_layout, rng_seed=a.seed, max_same_class_iou=a.max_same_class_iou,
    )
    cfg.validate()
    return cfg


def _noise_config(a) -> NoiseConfig:
    return NoiseConfig(a.label_flip_rate, a.distance_sigma, a.center_dropout, a.center_false_rate, a.seed)


def _cluster_config(a) -> ClusterConfig:
    if a.workers < 1:
        raise ValueError("--workers must be >= 1")
    return ClusterConfig(a.seed_threshold, a.nms_iou, a.tiebreak_margin, a.min_instance_pixels, a.seed_label_gate)


def _configs(a) -> dict:
    try:
        out = {}
        if a.command in ("gen", "pipeline"):
            out["gen"] = _gen_config(a)
        if a.command in ("corrupt", "pipeline"):
            out["noise"] = _noise_config(a)
        if a.command in ("cluster", "pipeline"):
            out["cluster"] = _cluster_config(a)
        if a.command in ("targets", "pipeline") and (a.stride < 1 or not 0 < a.center_fraction <= 1):
            raise ValueError("--stride must be >= 1 and --center-fraction in (0, 1]")
        if a.command == "loss":
            out["weights"] = LossWeights(a.alpha, a.beta, a.gamma)
        if a.command == "render" and a.scale < 1:
            raise ValueError("--scale must be >= 1")
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return out


def _evaluate(pred, seeds, scene, out_dir: Path | None):
    gt = downsample_scene(scene, pred.stride)
    if pred.shape != gt.semantic_map.shape:
        raise io.DataError(f"prediction is {pred.shape[0]}x{pred.shape[1]}, "
                           f"ground truth at stride {pred.stride} is {gt.height}x{gt.width}")
    pq = panoptic_quality(pred, panoptic_from_scene(gt, pred.stride), scene.class_table)
    scores = instance_scores(seeds) if seeds is not None else {}
    ap = average_precision(scored_segments(pred, scores), gt)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "pq.txt").write_text(pq.table(), encoding="utf-8")
        (out_dir / "pq.kv").write_text("\n".join(pq.kv_lines()) + "\n", encoding="utf-8")
        (out_dir / "ap.kv").write_text("\n".join(ap.kv_lines(scene.class_table)) + "\n", encoding="utf-8")
    return pq, ap


def _fmt(v: float) -> str:
    return "nan" if math.isnan(v) else f"{v:.4f}"


def _summary(pq, ap) -> str:
    return f"PQ={_fmt(pq.pq)} mAP={_fmt(ap.map)}"


def _run(a, cfg: dict) -> None:
    cmd = a.command
    if cmd == "gen":
        scene = generate_scene(cfg["gen"])
        io.write_scene(scene, a.out, rng_seed=a.seed)
        print(f"scene {scene.height}x{scene.width} instances={len(scene.instances)} -> {a.out}")
    elif cmd == "targets":
        scene = io.read_scene(a.scene)
        io.write_bundle(make_targets(scene, a.stride, a.center_fraction), a.out)
    elif cmd == "corrupt":
        io.write_bundle(corrupt(io.read_bundle(a.bundle), cfg["noise"]), a.out)
    elif cmd == "cluster":
        bundle = io.read_bundle(a.bundle)
        result = run_pipeline(bundle, cfg["cluster"], workers=a.workers)
        io.write_cluster_result(result, bundle.class_table, a.out)
        d = result.diagnostics
        print(f"seeds={d['seeds']} pruned={d['pruned']} instances={d['instances']}")
    elif cmd == "loss":
        pred, target = io.read_bundle(a.bundle), io.read_bundle(a.targets)
        if pred.shape != target.shape:
            raise io.DataError(f"bundle is {pred.shape[0]}x{pred.shape[1]}, targets are {target.shape[0]}x{target.shape[1]}")
        print("\n".join(bundle_losses(pred, target, cfg["weights"]).lines()))
    elif cmd == "eval":
        pred, _, seeds = io.read_panoptic(a.pred)
        pq, ap = _evaluate(pred, seeds, io.read_scene(a.scene), Path(a.out) if a.out else None)
        print(_summary(pq, ap))
    elif cmd == "pipeline":
        scene = generate_scene(cfg["gen"])
        ideal = make_targets(scene, a.stride, a.center_fraction)
        bundle = corrupt(ideal, cfg["noise"])
        result = run_pipeline(bundle, cfg["cluster"], workers=a.workers)
        out = Path(a.out) if a.out else None
        if out is not None:
            io.write_scene(scene, out / "scene", rng_seed=a.seed)
            io.write_bundle(ideal, out / "targets")
            io.write_bundle(bundle, out / "bundle")
            io.write_cluster_result(result, scene.class_table, out / "cluster")
            io.render_panoptic(result.panoptic, scene.class_table, out / "panoptic.ppm")
        pq, ap = _evaluate(result.panoptic, result.seeds, scene, out / "eval" if out else None)
        print(_summary(pq, ap))
    elif cmd == "render":
        pan, table, _ = io.read_panoptic(a.panoptic)
        io.render_panoptic(pan, table, a.out, scale=a.scale)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _configs(args)
    except UsageError as exc:
        print(f"supportseg {args.command}: usage error: {exc}", file=sys.stderr)
        return 2
    try:
        _run(args, cfg)
    except (io.DataError, ValueError) as exc:
        print(f"supportseg {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"supportseg {args.command}: error: {exc.strerror or exc}: {exc.filename or ''}".rstrip(": "),
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
