"""Command-line front end: corrupt -> render -> eval -> report, plus selftest.

Config precedence: explicit flags > config file (key=value lines, --config) >
environment (SPLATBENCH_ prefix) > built-in defaults.  Exit codes: 0 ok,
1 fatal, 2 partial (skips).  All outputs are byte-identical for identical
flags and seed, regardless of --threads.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import corrupt as corrupt_mod
from . import dataio, metrics, splat
from .core import CorruptionKind, SeverityLevel
from .rng import derive_stream, format_uniform

ENV_PREFIX = "SPLATBENCH_"

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_PARTIAL = 2


def _load_config_file(path: str | None) -> dict[str, str]:
    if not path:
        return {}
    cfg = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            cfg[key.strip()] = value.strip()
    return cfg


def _resolve(name: str, flag_value, cfg: dict[str, str], default, cast=str):
    if flag_value is not None:
        return flag_value
    if name in cfg:
        return cast(cfg[name])
    env = os.environ.get(ENV_PREFIX + name.upper())
    if env is not None:
        return cast(env)
    return default


def _parse_kinds(text: str) -> list[CorruptionKind]:
    if text == "all":
        return list(CorruptionKind)
    return [CorruptionKind.from_name(k) for k in text.split(",") if k]


def _parse_severities(text: str) -> list[SeverityLevel]:
    if text == "all":
        return [SeverityLevel(s) for s in (1, 2, 3, 4, 5)]
    return [SeverityLevel(int(s)) for s in text.split(",") if s]


def _emit(summary: dict, as_json: bool) -> None:
    if as_json:
        print(json.dumps(summary, sort_keys=True))
    else:
        for key, value in summary.items():
            if not isinstance(value, (dict, list)):
                print(f"{key}: {value}")


def cmd_corrupt(args, cfg) -> int:
    try:
        manifests = dataio.load_manifest(args.input)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL
    kinds = _parse_kinds(_resolve("kinds", args.kinds, cfg, "all"))
    sevs = _parse_severities(_resolve("severities", args.severities, cfg, "all"))
    seed = int(_resolve("seed", args.seed, cfg, 0, int))
    threads = int(_resolve("threads", args.threads, cfg, 1, int))
    base = os.path.dirname(os.path.abspath(args.input))

    def loader(rel_path: str):
        path = rel_path if os.path.isabs(rel_path) else os.path.join(base, rel_path)
        return dataio.read_cloud(path)

    if args.dry_run:
        summary = corrupt_mod.plan_benchmark(manifests, kinds, sevs)
        _emit(summary, args.json)
        return EXIT_OK
    summary = corrupt_mod.build_benchmark(manifests, seed, args.out, kinds, sevs,
                                          loader=loader, threads=threads)
    _emit(summary, args.json)
    if not args.json:
        print(f"{summary['variants_written']} variants written")
    return EXIT_PARTIAL if summary["skipped"] else EXIT_OK


def cmd_render(args, cfg) -> int:
    try:
        manifests = dataio.load_manifest(args.input)
        views = int(_resolve("views", args.views, cfg, splat.DEFAULT_VIEWS, int))
        res = int(_resolve("res", args.res, cfg, splat.DEFAULT_RESOLUTION, int))
        iso = float(_resolve("iso_scale", args.iso_scale, cfg,
                             splat.DEFAULT_ISO_SCALE, float))
        opacity = float(_resolve("opacity", args.opacity, cfg,
                                 splat.DEFAULT_OPACITY, float))
        threads = int(_resolve("threads", args.threads, cfg, 1, int))
        mode = args.mode
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL
    os.makedirs(args.out, exist_ok=True)
    base = os.path.dirname(os.path.abspath(args.input))
    skipped = []
    n_images = 0
    for m in sorted(manifests, key=lambda m: m.sample_id):
        path = m.cloud_path if os.path.isabs(m.cloud_path) else \
            os.path.join(base, m.cloud_path)
        try:
            cloud = dataio.read_cloud(path)
            center = cloud.points.mean(axis=0)
            radius = float(np.linalg.norm(cloud.points - center, axis=1).max())
            rig = splat.make_views(views, center=center,
                                   bound_radius=max(radius, 1e-6),
                                   resolution=res)
            gaussians = splat.init_gaussians(
                cloud, iso, opacity,
                color_mode="affordance" if mode == "affordance" else "depth")
            rendered = splat.rasterize(gaussians, rig, threads=threads)
            if mode == "feature":
                feats = splat.splat_features(cloud, cloud.labels[:, None], rig,
                                             iso, opacity, threads=threads)
            for v in range(views):
                stem = os.path.join(args.out, f"{m.sample_id:08d}_v{v:02d}")
                if mode == "affordance":
                    plane = rendered.color[v]
                    dataio.write_image_dump(stem + "_mask.f32", plane, v)
                    dataio.write_png(stem + "_mask.png",
                                     np.clip(plane[0], 0.0, 1.0))
                elif mode == "depth":
                    dataio.write_image_dump(stem + "_depth.f32",
                                            rendered.depth[v], v)
                    colored, _ = splat.colormap_depth(
                        rendered.depth[v:v + 1], rendered.alpha[v:v + 1],
                        mode="turbo")
                    dataio.write_png(stem + "_depth.png", colored[0])
                else:
                    dataio.write_image_dump(stem + "_feat.f32", feats[v], v)
                dataio.write_image_dump(stem + "_alpha.f32",
                                        rendered.alpha[v], v)
                n_images += 1
        except Exception as exc:
            skipped.append({"sample_id": m.sample_id, "error": str(exc)})
    summary = {"images_written": n_images, "views": views, "resolution": res,
               "mode": mode, "skipped": skipped}
    _emit(summary, args.json)
    if skipped:
        return EXIT_PARTIAL if n_images else EXIT_FATAL
    return EXIT_OK


def cmd_eval(args, cfg) -> int:
    try:
        manifests = dataio.load_manifest(args.gt)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL
    wanted = tuple(args.metrics.split(","))
    base = os.path.dirname(os.path.abspath(args.gt))
    results = []
    skipped = []
    for m in sorted(manifests, key=lambda m: m.sample_id):
        cloud_path = m.cloud_path if os.path.isabs(m.cloud_path) else \
            os.path.join(base, m.cloud_path)
        pred_path = os.path.join(args.pred, f"{m.sample_id:08d}.pred")
        if m.prediction_path:
            pred_path = m.prediction_path if os.path.isabs(m.prediction_path) \
                else os.path.join(base, m.prediction_path)
        try:
            cloud = dataio.read_cloud(cloud_path)
            scores, _ = dataio.read_prediction(pred_path)
            if scores.size != cloud.n_points:
                raise dataio.Truncated(
                    f"{scores.size} scores for {cloud.n_points} points")
            pair = metrics.EvalPair(scores, cloud.labels,
                                    category=m.object_category,
                                    affordance=m.affordance_type)
            report = metrics.evaluate_pair(pair, wanted)
            results.append(metrics.SampleResult(
                m.sample_id, report, m.object_category, m.affordance_type))
        except FileNotFoundError:
            skipped.append({"sample_id": m.sample_id, "error": "prediction missing"})
        except (dataio.Truncated, metrics.DimensionMismatch) as exc:
            print(f"error: sample {m.sample_id}: {exc}", file=sys.stderr)
            return EXIT_FATAL

    rows = []
    for res in results:
        for metric in wanted:
            value = res.report.value(metric)
            flag = ";".join(f for f in res.report.flags if f.startswith(metric))
            rows.append({"sample_id": res.sample_id, "category": res.category,
                         "affordance": res.affordance, "corruption": res.corruption,
                         "severity": res.severity, "metric": metric,
                         "value": "" if value is None else f"{value:.6f}",
                         "flag": flag})
    dataio.emit_csv_report(args.out, rows,
                           ["sample_id", "category", "affordance", "corruption",
                            "severity", "metric", "value", "flag"])
    degenerate = sum(1 for r in results if r.report.flags)
    group_by = tuple(g for g in (args.group_by or "").split(",") if g)
    summary = {"samples_evaluated": len(results), "degenerate": degenerate,
               "per_sample_csv": args.out,
               "skipped": skipped}
    if group_by:
        summary["groups"] = metrics.aggregate(results, group_by, wanted)
    _emit(summary, args.json)
    if skipped:
        for s in skipped:
            print(f"skipped sample {s['sample_id']}: {s['error']}")
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_report(args, cfg) -> int:
    import csv as _csv

    try:
        with open(args.eval) as f:
            rows = list(_csv.DictReader(f))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL
    group_field = args.group_by or "corruption"
    metric_names = sorted({r["metric"] for r in rows})
    grouped: dict[str, dict[str, list[float]]] = {}
    for r in rows:
        if r["value"] == "":
            continue
        grouped.setdefault(r[group_field], {}).setdefault(
            r["metric"], []).append(float(r["value"]))
    out_rows = []
    for key in sorted(grouped):
        row = {group_field: key}
        for metric in metric_names:
            vals = grouped[key].get(metric, [])
            row[metric] = sum(vals) / len(vals) if vals else None
        out_rows.append(row)
    columns = [group_field] + metric_names
    if args.format == "md":
        sys.stdout.write(dataio.emit_markdown_report(out_rows, columns))
    else:
        writer = _csv.DictWriter(sys.stdout, fieldnames=columns)
        writer.writeheader()
        for row in out_rows:
            writer.writerow({k: ("" if v is None else v) for k, v in row.items()})
    return EXIT_OK


def cmd_selftest(args, cfg) -> int:
    from importlib import resources

    failures = []

    # RNG golden vectors
    for name in sorted((resources.files("splatbench") / "data" / "golden").iterdir(),
                       key=lambda p: p.name):
        if not name.name.endswith(".txt"):
            continue
        parts = name.name[:-4].split("_")
        lineage = tuple(int(p) for p in parts[1:])
        expected = [line for line in name.read_text().splitlines() if line]
        stream = derive_stream(*lineage)
        got = [format_uniform(stream.uniform()) for _ in expected]
        if got != expected:
            failures.append(f"golden vector {name.name}: mismatch")
    print(f"rng golden vectors: {'FAIL' if failures else 'ok'}")

    # renderer oracle equivalence on a small random scene
    stream = derive_stream(99, 0, 0)
    n = 200
    pts = stream.uniforms(3 * n).reshape(n, 3) * 2.0 - 1.0
    labels = stream.uniforms(n)
    from .core import LabeledCloud
    cloud = LabeledCloud(pts, labels)
    rig = splat.make_views(4, resolution=64)
    gaussians = splat.init_gaussians(cloud, 0.05, 0.8)
    tiled = splat.rasterize(gaussians, rig)
    ref = splat.reference_rasterize(gaussians, rig)
    err = max(np.abs(tiled.color - ref.color).max(),
              np.abs(tiled.depth - ref.depth).max(),
              np.abs(tiled.alpha - ref.alpha).max())
    print(f"renderer oracle equivalence: max abs diff {err:.2e}")
    if err > 1e-5:
        failures.append(f"renderer mismatch {err}")

    # metric oracles on one random pair
    pred = stream.uniforms(128)
    gt = (stream.uniforms(128) > 0.5) * stream.uniforms(128)
    pair = metrics.EvalPair(pred, gt)
    pos, neg = pred[gt > 0], pred[gt == 0]
    brute = (np.sum(pos[:, None] > neg[None, :])
             + 0.5 * np.sum(pos[:, None] == neg[None, :])) / (pos.size * neg.size)
    if abs(metrics.auc(pair) - brute) > 1e-9:
        failures.append("auc oracle mismatch")
    if abs(metrics.mae(pair) - np.mean(np.abs(pred - gt))) > 1e-12:
        failures.append("mae oracle mismatch")
    print(f"metric oracles: {'FAIL' if failures else 'ok'}")

    if failures:
        for f in failures:
            print(f"FAIL: {f}", file=sys.stderr)
        return EXIT_FATAL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splatbench",
        description="Corruption benchmarks, Gaussian-splat rendering, and "
                    "affordance evaluation for labeled point clouds")
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--json", action="store_true",
                        help="machine-readable summary on stdout")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("corrupt", help="generate corrupted benchmark variants")
    p.add_argument("--input", required=True, help="JSON-lines sample manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--kinds", help="comma list or 'all'")
    p.add_argument("--severities", help="comma list or 'all'")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--dry-run", action="store_true",
                   help="count variants without writing clouds")
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("render", help="render clouds to images")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--views", type=int)
    p.add_argument("--res", type=int)
    p.add_argument("--iso-scale", type=float, dest="iso_scale")
    p.add_argument("--opacity", type=float)
    p.add_argument("--mode", choices=["depth", "affordance", "feature"],
                   default="depth")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("eval", help="score prediction files against labels")
    p.add_argument("--pred", required=True, help="directory of prediction files")
    p.add_argument("--gt", required=True, help="ground-truth manifest")
    p.add_argument("--metrics", default="auc,aiou,sim,mae")
    p.add_argument("--group-by", dest="group_by")
    p.add_argument("--out", default="eval.csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="aggregate an eval CSV into a table")
    p.add_argument("--eval", required=True)
    p.add_argument("--format", choices=["md", "csv"], default="md")
    p.add_argument("--group-by", dest="group_by")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("selftest", help="run built-in consistency checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = _load_config_file(args.config)
    return args.func(args, cfg)


if __name__ == "__main__":
    sys.exit(main())
