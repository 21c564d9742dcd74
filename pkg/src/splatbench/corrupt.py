"""The seven atomic point-cloud corruptions at five severity levels.

Each corruption is a pure function of (cloud, CorruptionSpec); the spec's
RngStream lineage fully determines the output, so batch jobs may run on any
number of
workers in any order and still produce bit-identical files.

Severity parameter lists (index 0 = level 1, mildest):
  jitter    sigma  0.01 .. 0.05   per-axis Gaussian noise std
  scale     S      1.6 .. 2.0     per-axis factor ~ U(1/S, S), then unit-sphere renorm
  rotate    theta  pi/30 .. pi/6  Euler angles ~ U(-theta, theta)
  drop global rho  0.25 .. 0.75   fraction removed after shuffle
  drop local  K    100 .. 500     points removed in 1..8 clusters
  add global  K    10 .. 50       uniform unit-ball points appended, label 0
  add local   K    100 .. 500     clustered Gaussian points appended, label 0
"""

from __future__ import annotations

import concurrent.futures
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .core import (CorruptionKind, LabeledCloud, SampleManifest, SeverityLevel,
                   validate_cloud)
from .rng import RngStream, derive_stream

JITTER_SIGMA = (0.01, 0.02, 0.03, 0.04, 0.05)
SCALE_S = (1.6, 1.7, 1.8, 1.9, 2.0)
ROTATE_THETA = (math.pi / 30, math.pi / 15, math.pi / 10, math.pi / 7.5, math.pi / 6)
DROP_GLOBAL_RHO = (0.25, 0.375, 0.5, 0.675, 0.75)
DROP_LOCAL_K = (100, 200, 300, 400, 500)
ADD_GLOBAL_K = (10, 20, 30, 40, 50)
ADD_LOCAL_K = (100, 200, 300, 400, 500)

MAX_CLUSTERS = 8
ADD_LOCAL_SIGMA_RANGE = (0.075, 0.125)

SEVERITY_TABLE = {
    CorruptionKind.JITTER: JITTER_SIGMA,
    CorruptionKind.SCALE: SCALE_S,
    CorruptionKind.ROTATE: ROTATE_THETA,
    CorruptionKind.DROP_GLOBAL: DROP_GLOBAL_RHO,
    CorruptionKind.DROP_LOCAL: DROP_LOCAL_K,
    CorruptionKind.ADD_GLOBAL: ADD_GLOBAL_K,
    CorruptionKind.ADD_LOCAL: ADD_LOCAL_K,
}

_KIND_ORDER = list(CorruptionKind)


class DegenerateCloud(ValueError):
    pass


class EmptyResult(ValueError):
    pass


class CloudTooSmall(ValueError):
    pass


def round_half_away(x: float) -> int:
    """Round half away from zero; pinned so counts agree across platforms."""
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


def corruption_tag(kind: CorruptionKind, severity: SeverityLevel) -> int:
    """Stable lineage tag: one slot per (kind, severity) cell."""
    return _KIND_ORDER.index(kind) * 8 + severity.level


@dataclass
class CorruptionSpec:
    kind: CorruptionKind
    severity: SeverityLevel
    stream: RngStream

    def param(self):
        return SEVERITY_TABLE[self.kind][self.severity.index]


def _require_kind(spec: CorruptionSpec, kind: CorruptionKind) -> None:
    if spec.kind is not kind:
        raise ValueError(f"spec kind {spec.kind} does not match {kind}")


def jitter(cloud: LabeledCloud, spec: CorruptionSpec,
           _sigma_override: float | None = None) -> LabeledCloud:
    """Add N(0, sigma^2) noise independently to every coordinate.

    Draw order: 3 normals per point (x, y, z), in point order.
    """
    _require_kind(spec, CorruptionKind.JITTER)
    sigma = spec.param() if _sigma_override is None else _sigma_override
    noise = spec.stream.normals(3 * cloud.n_points).reshape(-1, 3)
    return cloud.replaced(points=cloud.points + sigma * noise)


def unit_sphere_normalize(points: np.ndarray) -> np.ndarray:
    """Center at the centroid and scale so the farthest point has norm 1."""
    centered = points - points.mean(axis=0)
    max_norm = float(np.linalg.norm(centered, axis=1).max(initial=0.0))
    if max_norm <= 0.0:
        raise DegenerateCloud("all points coincide; cannot normalize")
    return centered / max_norm


def scale(cloud: LabeledCloud, spec: CorruptionSpec,
          _factors: tuple[float, float, float] | None = None) -> LabeledCloud:
    """Scale each axis by an independent factor ~ U(1/S, S), then renormalize
    to the unit sphere.  Draw order: 3 uniforms (x, y, z factors)."""
    _require_kind(spec, CorruptionKind.SCALE)
    if cloud.n_points == 0:
        raise DegenerateCloud("empty cloud")
    s = spec.param()
    if _factors is None:
        factors = np.array([spec.stream.uniform_in(1.0 / s, s) for _ in range(3)])
    else:
        factors = np.asarray(_factors, dtype=np.float64)
    return cloud.replaced(points=unit_sphere_normalize(cloud.points * factors))


def _rotation_matrix(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """Extrinsic X-Y-Z Euler rotation: R = Rz(gamma) @ Ry(beta) @ Rx(alpha)."""
    ca, sa = math.cos(alpha), math.sin(alpha)
    cb, sb = math.cos(beta), math.sin(beta)
    cg, sg = math.cos(gamma), math.sin(gamma)
    rx = np.array([[1, 0, 0], [0, ca, -sa], [0, sa, ca]])
    ry = np.array([[cb, 0, sb], [0, 1, 0], [-sb, 0, cb]])
    rz = np.array([[cg, -sg, 0], [sg, cg, 0], [0, 0, 1]])
    return rz @ ry @ rx


def rotate(cloud: LabeledCloud, spec: CorruptionSpec,
           _angles: tuple[float, float, float] | None = None) -> LabeledCloud:
    """Rotate by Euler angles drawn ~ U(-theta, theta).

    Draw order: 3 uniforms (alpha, beta, gamma).  Not uniform over SO(3);
    that matches the sampling scheme this benchmark standardizes on.
    """
    _require_kind(spec, CorruptionKind.ROTATE)
    theta = spec.param()
    if _angles is None:
        angles = tuple(spec.stream.uniform_in(-theta, theta) for _ in range(3))
    else:
        angles = _angles
    r = _rotation_matrix(*angles)
    return cloud.replaced(points=cloud.points @ r.T)


def drop_global(cloud: LabeledCloud, spec: CorruptionSpec) -> LabeledCloud:
    """Fisher-Yates shuffle the (point, label) pairs, drop the last
    round(N * rho)."""
    _require_kind(spec, CorruptionKind.DROP_GLOBAL)
    n = cloud.n_points
    n_drop = round_half_away(n * spec.param())
    if n_drop >= n:
        raise EmptyResult(f"dropping {n_drop} of {n} points leaves nothing")
    perm = spec.stream.shuffle_indices(n)
    keep = perm[: n - n_drop]
    return LabeledCloud(cloud.points[keep], cloud.labels[keep])


def _partition_cluster_sizes(total: int, n_clusters: int, stream: RngStream) -> list[int]:
    """Split `total` into n_clusters sizes >= 1 summing exactly to total.

    Draw order: n_clusters uniforms -> normalized weights; sizes are
    max(1, round(total * w_i)) with the residue folded into the last cluster,
    then a deterministic fixup keeps every size >= 1.
    """
    w = stream.uniforms(n_clusters)
    w = w / w.sum()
    sizes = [max(1, round_half_away(total * wi)) for wi in w]
    sizes[-1] += total - sum(sizes)
    while sizes[-1] < 1:
        donor = max(range(n_clusters - 1), key=lambda i: (sizes[i], -i))
        take = min(sizes[donor] - 1, 1 - sizes[-1])
        sizes[donor] -= take
        sizes[-1] += take
    return sizes


def drop_local(cloud: LabeledCloud, spec: CorruptionSpec,
               _clusters: int | None = None) -> LabeledCloud:
    """Remove K points in 1..8 clusters of nearest neighbors.

    Sequential on the shrinking remainder: pick a surviving point as center
    (1 uniform), remove the N_i nearest to it (the center is its own nearest
    neighbor), then recompute for the next cluster.  Distance ties break by
    lower index.
    """
    _require_kind(spec, CorruptionKind.DROP_LOCAL)
    k = spec.param()
    n = cloud.n_points
    if n <= k + MAX_CLUSTERS:
        raise CloudTooSmall(f"need more than {k + MAX_CLUSTERS} points, have {n}")
    c = spec.stream.randint_inclusive(1, MAX_CLUSTERS) if _clusters is None else _clusters
    sizes = _partition_cluster_sizes(k, c, spec.stream)
    alive = np.arange(n)
    pts = cloud.points
    for size in sizes:
        center = spec.stream.randint(alive.shape[0])
        d2 = np.sum((pts[alive] - pts[alive[center]]) ** 2, axis=1)
        order = np.argsort(d2, kind="stable")
        alive = np.delete(alive, order[:size])
    return LabeledCloud(cloud.points[alive], cloud.labels[alive])


def add_global(cloud: LabeledCloud, spec: CorruptionSpec) -> LabeledCloud:
    """Append K points uniform in the unit ball, each labeled exactly 0.

    Per point: 3 normals give the direction, 1 uniform u gives radius u^(1/3).
    """
    _require_kind(spec, CorruptionKind.ADD_GLOBAL)
    k = spec.param()
    added = np.empty((k, 3))
    for i in range(k):
        v = spec.stream.normals(3)
        norm = np.linalg.norm(v)
        while norm == 0.0:  # probability-zero guard
            v = spec.stream.normals(3)
            norm = np.linalg.norm(v)
        r = spec.stream.uniform() ** (1.0 / 3.0)
        added[i] = v / norm * r
    return LabeledCloud(np.vstack([cloud.points, added]),
                        np.concatenate([cloud.labels, np.zeros(k)]))


def add_local(cloud: LabeledCloud, spec: CorruptionSpec,
              _clusters: int | None = None) -> LabeledCloud:
    """Append K points in 1..8 Gaussian clusters around existing points.

    Draw order: cluster count, weight uniforms, then per cluster: 1 uniform
    for the center index, 1 uniform for sigma ~ U(0.075, 0.125), then
    3 * N_i normals.  Appended labels are exactly 0.
    """
    _require_kind(spec, CorruptionKind.ADD_LOCAL)
    if cloud.n_points == 0:
        raise DegenerateCloud("empty cloud")
    k = spec.param()
    c = spec.stream.randint_inclusive(1, MAX_CLUSTERS) if _clusters is None else _clusters
    sizes = _partition_cluster_sizes(k, c, spec.stream)
    chunks = []
    for size in sizes:
        center = cloud.points[spec.stream.randint(cloud.n_points)]
        sigma = spec.stream.uniform_in(*ADD_LOCAL_SIGMA_RANGE)
        offsets = spec.stream.normals(3 * size).reshape(-1, 3)
        chunks.append(center + sigma * offsets)
    added = np.vstack(chunks)
    return LabeledCloud(np.vstack([cloud.points, added]),
                        np.concatenate([cloud.labels, np.zeros(k)]))


_DISPATCH = {
    CorruptionKind.JITTER: jitter,
    CorruptionKind.SCALE: scale,
    CorruptionKind.ROTATE: rotate,
    CorruptionKind.DROP_GLOBAL: drop_global,
    CorruptionKind.DROP_LOCAL: drop_local,
    CorruptionKind.ADD_GLOBAL: add_global,
    CorruptionKind.ADD_LOCAL: add_local,
}


def apply_corruption(cloud: LabeledCloud, spec: CorruptionSpec) -> LabeledCloud:
    return _DISPATCH[spec.kind](cloud, spec)


def corrupt_sample(cloud: LabeledCloud, kind: CorruptionKind,
                   severity: SeverityLevel, master_seed: int,
                   sample_id: int) -> LabeledCloud:
    """Corrupt one sample with the canonical lineage for its grid cell."""
    stream = derive_stream(master_seed, sample_id, corruption_tag(kind, severity))
    return apply_corruption(cloud, CorruptionSpec(kind, severity, stream))


def plan_benchmark(manifests: list[SampleManifest],
                   kinds: list[CorruptionKind] | None = None,
                   severities: list[SeverityLevel] | None = None) -> dict:
    """Counting pass over the corruption grid: no clouds are touched."""
    kinds = list(CorruptionKind) if kinds is None else kinds
    severities = ([SeverityLevel(s) for s in (1, 2, 3, 4, 5)]
                  if severities is None else severities)
    by_category: dict[str, int] = {}
    for m in manifests:
        by_category[m.object_category] = by_category.get(m.object_category, 0) + 1
    return {
        "base_pairings": len(manifests),
        "pairings_by_category": dict(sorted(by_category.items())),
        "kinds": [k.value for k in kinds],
        "severities": [s.level for s in severities],
        "variant_count": len(manifests) * len(kinds) * len(severities),
    }


def _one_variant(manifest: SampleManifest, cloud: LabeledCloud,
                 kind: CorruptionKind, severity: SeverityLevel,
                 master_seed: int, out_dir: str) -> dict:
    from . import dataio

    tag = corruption_tag(kind, severity)
    corrupted = corrupt_sample(cloud, kind, severity, master_seed,
                               manifest.sample_id)
    rel = f"{manifest.sample_id:08d}_{kind.value}_s{severity.level}.pcaf"
    dataio.write_cloud(os.path.join(out_dir, rel), corrupted)
    return {
        "sample_id": manifest.sample_id,
        "object_category": manifest.object_category,
        "affordance_type": manifest.affordance_type,
        "kind": kind.value,
        "severity": severity.level,
        "cloud_path": rel,
        "lineage": [master_seed, manifest.sample_id, tag],
    }


def build_benchmark(manifests: list[SampleManifest], master_seed: int,
                    out_dir: str,
                    kinds: list[CorruptionKind] | None = None,
                    severities: list[SeverityLevel] | None = None,
                    loader=None, threads: int = 1) -> dict:
    """Generate |manifests| x kinds x severities corrupted clouds plus a
    JSON-lines index.  Per-sample failures land in a skip list; the batch
    never aborts.  Output bytes are independent of worker count and of
    manifest order (lineage is keyed by sample_id)."""
    from . import dataio

    if loader is None:
        loader = dataio.read_cloud
    kinds = list(CorruptionKind) if kinds is None else kinds
    severities = ([SeverityLevel(s) for s in (1, 2, 3, 4, 5)]
                  if severities is None else severities)
    os.makedirs(out_dir, exist_ok=True)

    jobs = []
    skips = []
    clouds: dict[int, LabeledCloud] = {}
    for m in manifests:
        try:
            cloud = loader(m.cloud_path)
            report = validate_cloud(cloud)
            if not report.ok:
                raise ValueError("; ".join(report.violations))
            clouds[m.sample_id] = cloud
        except Exception as exc:
            skips.append({"sample_id": m.sample_id, "error": str(exc)})
            continue
        for kind in kinds:
            for sev in severities:
                jobs.append((m, kind, sev))

    records = []

    def run(job):
        m, kind, sev = job
        try:
            return _one_variant(m, clouds[m.sample_id], kind, sev,
                                master_seed, out_dir)
        except Exception as exc:
            return {"sample_id": m.sample_id, "kind": kind.value,
                    "severity": sev.level, "error": str(exc)}

    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]
    for res in results:
        if "error" in res:
            skips.append(res)
        else:
            records.append(res)

    records.sort(key=lambda r: (r["sample_id"],
                                _KIND_ORDER.index(CorruptionKind(r["kind"])),
                                r["severity"]))
    index_path = os.path.join(out_dir, "index.jsonl")
    with open(index_path, "w") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")

    summary = plan_benchmark(manifests, kinds, severities)
    summary.update({
        "master_seed": master_seed,
        "index_path": index_path,
        "variants_written": len(records),
        "skipped": sorted(skips, key=lambda s: (s["sample_id"], s.get("kind", ""),
                                                s.get("severity", 0))),
    })
    return summary
