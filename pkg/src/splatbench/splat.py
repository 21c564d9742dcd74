"""Point-based Gaussian-splat rendering from sparse labeled clouds.

One isotropic 3D Gaussian per point, projected through the local-affine
(Jacobian) approximation of the pinhole camera and composited front-to-back:

    out(v) = sum_i value_i * a_i * prod_{j<i} (1 - a_j),   a_i = o_i * G2D_i(v)

with the same formula for color, depth (view-space z of the mean), and
per-point feature vectors.  Gaussians are sorted by view-space depth
ascending, ties broken by input index; footprints are truncated at 3 sigma.

Two renderers share all of the projection and alpha math:
  * rasterize          16x16-tile scheduler with per-tile culling and
                       transmittance early exit
  * reference_rasterize  straight front-to-back loop, no tiling, no early exit
"""

from __future__ import annotations

import concurrent.futures
import csv
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .core import LabeledCloud, validate_cloud

TILE = 16
FOOTPRINT_CUTOFF_SQ = 9.0  # 3 sigma
# Residual after early exit is bounded by the remaining transmittance times
# the largest blended value; 1e-7 keeps it far below the 1e-5 oracle tolerance.
EARLY_EXIT_TRANSMITTANCE = 1e-7
MIN_VIEW_DEPTH = 1e-6

DEFAULT_ISO_SCALE = 0.02
DEFAULT_OPACITY = 0.9
DEFAULT_VIEWS = 12
DEFAULT_RESOLUTION = 112


class InvalidConfig(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class GaussianSet:
    """Per-point render primitives: mean, shared isotropic scale/opacity,
    scalar or RGB color, optional feature vector."""

    means: np.ndarray        # (N, 3)
    iso_scale: float
    opacity: float
    colors: np.ndarray       # (N,) or (N, C)
    features: np.ndarray | None = None  # (N, D)

    def __post_init__(self) -> None:
        means = np.asarray(self.means, dtype=np.float64).reshape(-1, 3)
        colors = np.asarray(self.colors, dtype=np.float64)
        if colors.ndim == 1:
            colors = colors[:, None]
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "colors", colors)
        if self.features is not None:
            feats = np.asarray(self.features, dtype=np.float64)
            if feats.shape[0] != means.shape[0]:
                raise DimensionMismatch(
                    f"{feats.shape[0]} feature rows for {means.shape[0]} Gaussians")
            object.__setattr__(self, "features", feats)
        if colors.shape[0] != means.shape[0]:
            raise DimensionMismatch(
                f"{colors.shape[0]} colors for {means.shape[0]} Gaussians")
        if not (0.0 < self.opacity <= 1.0):
            raise InvalidConfig(f"opacity must be in (0, 1], got {self.opacity}")
        if not self.iso_scale > 0.0:
            raise InvalidConfig(f"iso_scale must be positive, got {self.iso_scale}")

    @property
    def n(self) -> int:
        return self.means.shape[0]


@dataclass(frozen=True)
class CameraRig:
    """V world-to-view rigid transforms with shared pinhole intrinsics.

    View space is x-right, y-down, z-forward; a pose maps world points as
    ``R @ x + t`` and pixel centers sit at (col + 0.5, row + 0.5).
    """

    rotations: np.ndarray     # (V, 3, 3)
    translations: np.ndarray  # (V, 3)
    focal: float
    principal: tuple[float, float]
    height: int
    width: int

    @property
    def n_views(self) -> int:
        return self.rotations.shape[0]


@dataclass
class RenderedViews:
    color: np.ndarray    # (V, C, H, W)
    depth: np.ndarray    # (V, H, W)
    alpha: np.ndarray    # (V, H, W)
    feature: np.ndarray | None = None  # (V, D, H, W)


def _look_at(eye: np.ndarray, center: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    forward = center - eye
    forward = forward / np.linalg.norm(forward)
    up = np.array([0.0, 0.0, 1.0])
    if abs(float(forward @ up)) > 0.999:
        up = np.array([1.0, 0.0, 0.0])
    right = np.cross(forward, up)
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    r = np.stack([right, down, forward])
    return r, -r @ eye


def make_views(v_count: int = DEFAULT_VIEWS,
               radius_factor: float = 2.5,
               elevations: tuple[float, ...] = (math.radians(30), math.radians(-30)),
               center: np.ndarray | None = None,
               bound_radius: float = 1.0,
               resolution: int = DEFAULT_RESOLUTION) -> CameraRig:
    """Deterministic orbit rig: azimuth-equispaced cameras on one ring per
    elevation, all at distance radius_factor * bound_radius, looking at
    `center`.  v_count is split evenly across the rings."""
    if v_count < 1:
        raise InvalidConfig("v_count must be >= 1")
    if radius_factor <= 1.0:
        raise InvalidConfig("radius_factor must exceed 1 (camera outside the cloud)")
    center = np.zeros(3) if center is None else np.asarray(center, dtype=np.float64)
    dist = radius_factor * bound_radius
    n_rings = len(elevations)
    base, extra = divmod(v_count, n_rings)
    rotations, translations = [], []
    for ring, elev in enumerate(elevations):
        n_ring = base + (1 if ring < extra else 0)
        for k in range(n_ring):
            az = 2.0 * math.pi * k / n_ring
            eye = center + dist * np.array([
                math.cos(elev) * math.cos(az),
                math.cos(elev) * math.sin(az),
                math.sin(elev),
            ])
            r, t = _look_at(eye, center)
            rotations.append(r)
            translations.append(t)
    # focal chosen so the bounding sphere fits with ~10% margin
    half_extent = 1.1 * bound_radius / dist
    focal = 0.5 * resolution / half_extent
    return CameraRig(np.stack(rotations), np.stack(translations),
                     focal=focal, principal=(resolution / 2.0, resolution / 2.0),
                     height=resolution, width=resolution)


def init_gaussians(cloud: LabeledCloud,
                   iso_scale: float = DEFAULT_ISO_SCALE,
                   opacity: float = DEFAULT_OPACITY,
                   color_mode: str = "affordance") -> GaussianSet:
    """One Gaussian per point, means = point coordinates.

    color_mode: "affordance" (grayscale color = label), "constant" (all 1.0),
    or "depth" (colors zeroed; consumers colormap the rendered depth channel).
    """
    report = validate_cloud(cloud)
    if not report.ok:
        raise ValueError("; ".join(report.violations))
    if color_mode == "affordance":
        colors = cloud.labels.copy()
    elif color_mode == "constant":
        colors = np.ones(cloud.n_points)
    elif color_mode == "depth":
        colors = np.zeros(cloud.n_points)
    else:
        raise InvalidConfig(f"unknown color_mode {color_mode!r}")
    return GaussianSet(cloud.points, iso_scale, opacity, colors)


@dataclass
class _ProjectedView:
    order: np.ndarray      # surviving Gaussian indices, depth-ascending
    mean2d: np.ndarray     # (M, 2) pixel coordinates
    inv_cov: np.ndarray    # (M, 3): [ixx, ixy, iyy]
    radius: np.ndarray     # (M,) 3-sigma footprint in pixels
    depth: np.ndarray      # (M,) view-space z


def _project(gaussians: GaussianSet, rig: CameraRig, view: int) -> _ProjectedView:
    r = rig.rotations[view]
    t = rig.translations[view]
    xv = gaussians.means @ r.T + t
    z = xv[:, 2]
    keep = np.where(z > MIN_VIEW_DEPTH)[0]
    # stable sort on depth: ties break by input index
    keep = keep[np.argsort(z[keep], kind="stable")]
    x, y, zz = xv[keep, 0], xv[keep, 1], xv[keep, 2]
    f = rig.focal
    u = f * x / zz + rig.principal[0]
    v = f * y / zz + rig.principal[1]
    # local-affine projection of the isotropic covariance s^2 I:
    # J = [[f/z, 0, -f x/z^2], [0, f/z, -f y/z^2]],  cov2d = s^2 J J^T
    s2 = gaussians.iso_scale ** 2
    a = f / zz
    jxz = -f * x / zz ** 2
    jyz = -f * y / zz ** 2
    cxx = s2 * (a ** 2 + jxz ** 2)
    cyy = s2 * (a ** 2 + jyz ** 2)
    cxy = s2 * (jxz * jyz)
    det = cxx * cyy - cxy ** 2
    ixx = cyy / det
    iyy = cxx / det
    ixy = -cxy / det
    half_trace = 0.5 * (cxx + cyy)
    eig_max = half_trace + np.sqrt(np.maximum(
        (0.5 * (cxx - cyy)) ** 2 + cxy ** 2, 0.0))
    radius = 3.0 * np.sqrt(eig_max)
    return _ProjectedView(order=keep, mean2d=np.stack([u, v], axis=1),
                          inv_cov=np.stack([ixx, ixy, iyy], axis=1),
                          radius=radius, depth=zz)


def _alpha_patch(opacity: float, mean2d: np.ndarray, inv_cov: np.ndarray,
                 xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Opacity-scaled 2D Gaussian over pixel centers, zero beyond 3 sigma."""
    dx = xs - mean2d[0]
    dy = ys - mean2d[1]
    q = inv_cov[0] * dx * dx + 2.0 * inv_cov[1] * dx * dy + inv_cov[2] * dy * dy
    alpha = opacity * np.exp(-0.5 * q)
    alpha[q > FOOTPRINT_CUTOFF_SQ] = 0.0
    return alpha


def _values_matrix(gaussians: GaussianSet) -> np.ndarray:
    """(N, C + 1 [+ D]) blend values: colors, depth placeholder, features."""
    parts = [gaussians.colors]
    if gaussians.features is not None:
        parts.append(gaussians.features)
    return np.concatenate(parts, axis=1)


def _split_channels(gaussians: GaussianSet, accum: np.ndarray):
    c = gaussians.colors.shape[1]
    color = accum[:c]
    depth = accum[c]
    feature = accum[c + 1:] if gaussians.features is not None else None
    return color, depth, feature


def _render_view_reference(gaussians: GaussianSet, rig: CameraRig,
                           view: int) -> tuple[np.ndarray, np.ndarray]:
    pv = _project(gaussians, rig, view)
    h, w = rig.height, rig.width
    c = gaussians.colors.shape[1]
    d = 0 if gaussians.features is None else gaussians.features.shape[1]
    accum = np.zeros((c + 1 + d, h, w))
    transmittance = np.ones((h, w))
    values = _values_matrix(gaussians)
    xs = np.arange(w) + 0.5
    ys = np.arange(h) + 0.5
    for i in range(pv.order.shape[0]):
        gi = pv.order[i]
        r = pv.radius[i]
        x0 = max(0, int(math.floor(pv.mean2d[i, 0] - r - 0.5)))
        x1 = min(w, int(math.ceil(pv.mean2d[i, 0] + r + 0.5)))
        y0 = max(0, int(math.floor(pv.mean2d[i, 1] - r - 0.5)))
        y1 = min(h, int(math.ceil(pv.mean2d[i, 1] + r + 0.5)))
        if x0 >= x1 or y0 >= y1:
            continue
        alpha = _alpha_patch(gaussians.opacity, pv.mean2d[i], pv.inv_cov[i],
                             xs[None, x0:x1], ys[y0:y1, None])
        weight = alpha * transmittance[y0:y1, x0:x1]
        vals_full = np.empty(c + 1 + d)
        vals_full[:c] = values[gi][:c]
        vals_full[c] = pv.depth[i]
        if d:
            vals_full[c + 1:] = values[gi][c:]
        accum[:, y0:y1, x0:x1] += vals_full[:, None, None] * weight[None]
        transmittance[y0:y1, x0:x1] *= 1.0 - alpha
    return accum, 1.0 - transmittance


def _render_view_tiled(gaussians: GaussianSet, rig: CameraRig,
                       view: int) -> tuple[np.ndarray, np.ndarray]:
    pv = _project(gaussians, rig, view)
    h, w = rig.height, rig.width
    c = gaussians.colors.shape[1]
    d = 0 if gaussians.features is None else gaussians.features.shape[1]
    accum = np.zeros((c + 1 + d, h, w))
    alpha_out = np.zeros((h, w))
    values = _values_matrix(gaussians)

    n_ty = (h + TILE - 1) // TILE
    n_tx = (w + TILE - 1) // TILE
    bins: dict[tuple[int, int], list[int]] = {}
    for i in range(pv.order.shape[0]):
        r = pv.radius[i]
        tx0 = max(0, int((pv.mean2d[i, 0] - r) // TILE))
        tx1 = min(n_tx - 1, int((pv.mean2d[i, 0] + r) // TILE))
        ty0 = max(0, int((pv.mean2d[i, 1] - r) // TILE))
        ty1 = min(n_ty - 1, int((pv.mean2d[i, 1] + r) // TILE))
        for ty in range(ty0, ty1 + 1):
            for tx in range(tx0, tx1 + 1):
                bins.setdefault((ty, tx), []).append(i)

    for (ty, tx), members in bins.items():
        y0, y1 = ty * TILE, min(h, (ty + 1) * TILE)
        x0, x1 = tx * TILE, min(w, (tx + 1) * TILE)
        xs = (np.arange(x0, x1) + 0.5)[None, :]
        ys = (np.arange(y0, y1) + 0.5)[:, None]
        transmittance = np.ones((y1 - y0, x1 - x0))
        tile_accum = np.zeros((c + 1 + d, y1 - y0, x1 - x0))
        for i in members:  # bins preserve depth order
            if transmittance.max() < EARLY_EXIT_TRANSMITTANCE:
                break
            alpha = _alpha_patch(gaussians.opacity, pv.mean2d[i],
                                 pv.inv_cov[i], xs, ys)
            weight = alpha * transmittance
            gi = pv.order[i]
            vals_full = np.empty(c + 1 + d)
            vals_full[:c] = values[gi][:c]
            vals_full[c] = pv.depth[i]
            if d:
                vals_full[c + 1:] = values[gi][c:]
            tile_accum += vals_full[:, None, None] * weight[None]
            transmittance *= 1.0 - alpha
        accum[:, y0:y1, x0:x1] = tile_accum
        alpha_out[y0:y1, x0:x1] = 1.0 - transmittance
    return accum, alpha_out


def _rasterize_with(render_view, gaussians: GaussianSet, rig: CameraRig,
                    threads: int = 1) -> RenderedViews:
    def one(view):
        return render_view(gaussians, rig, view)

    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(rig.n_views)))
    else:
        results = [one(v) for v in range(rig.n_views)]

    color = np.stack([_split_channels(gaussians, acc)[0] for acc, _ in results])
    depth = np.stack([_split_channels(gaussians, acc)[1] for acc, _ in results])
    alpha = np.stack([a for _, a in results])
    feature = None
    if gaussians.features is not None:
        feature = np.stack([_split_channels(gaussians, acc)[2]
                            for acc, _ in results])
    return RenderedViews(color=color, depth=depth, alpha=alpha, feature=feature)


def rasterize(gaussians: GaussianSet, rig: CameraRig,
              threads: int = 1) -> RenderedViews:
    """Tile-scheduled front-to-back compositor (16x16 tiles, per-tile culling,
    transmittance early exit)."""
    return _rasterize_with(_render_view_tiled, gaussians, rig, threads)


def reference_rasterize(gaussians: GaussianSet, rig: CameraRig,
                        threads: int = 1) -> RenderedViews:
    """Brute-force oracle: identical math, no tiling, no early exit."""
    return _rasterize_with(_render_view_reference, gaussians, rig, threads)


def render_affordance_masks(cloud: LabeledCloud, rig: CameraRig,
                            iso_scale: float = DEFAULT_ISO_SCALE,
                            opacity: float = DEFAULT_OPACITY,
                            threads: int = 1) -> np.ndarray:
    """Splat per-point affordance scores as grayscale color -> (V, H, W)."""
    gaussians = init_gaussians(cloud, iso_scale, opacity, color_mode="affordance")
    return rasterize(gaussians, rig, threads=threads).color[:, 0]


def splat_features(cloud: LabeledCloud, per_point_features: np.ndarray,
                   rig: CameraRig,
                   iso_scale: float = DEFAULT_ISO_SCALE,
                   opacity: float = DEFAULT_OPACITY,
                   threads: int = 1) -> np.ndarray:
    """Render per-point feature vectors into (V, D, H, W) feature maps."""
    feats = np.asarray(per_point_features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] != cloud.n_points:
        raise DimensionMismatch(
            f"features must be (N, D) with N={cloud.n_points}, got {feats.shape}")
    gaussians = GaussianSet(cloud.points, iso_scale, opacity,
                            colors=np.zeros(cloud.n_points), features=feats)
    return rasterize(gaussians, rig, threads=threads).feature


def _turbo_lut() -> np.ndarray:
    text = (resources.files("splatbench") / "data").joinpath("turbo_lut.csv").read_text()
    rows = list(csv.DictReader(text.splitlines()))
    return np.array([[float(r["r"]), float(r["g"]), float(r["b"])] for r in rows])


_TURBO = None

VALID_ALPHA_THRESHOLD = 1e-3


def colormap_depth(depth: np.ndarray, alpha: np.ndarray,
                   mode: str = "gray") -> tuple[np.ndarray, list[bool]]:
    """Map rendered depth to (V, 3, H, W) color images.

    Valid pixels (alpha above threshold) are min/max normalized per view;
    invalid pixels go black.  Modes: "gray" (far = bright), "gray_inv"
    (near = bright), "turbo" (shipped 256-entry LUT).  Returns the images and
    a per-view all-invalid flag (flagged views are left black, not fatal).
    """
    global _TURBO
    if mode not in ("gray", "gray_inv", "turbo"):
        raise InvalidConfig(f"unknown colormap mode {mode!r}")
    if not np.all(np.isfinite(depth)):
        raise InvalidConfig("depth must be finite")
    v, h, w = depth.shape
    out = np.zeros((v, 3, h, w))
    all_invalid = []
    for i in range(v):
        valid = alpha[i] > VALID_ALPHA_THRESHOLD
        if not valid.any():
            all_invalid.append(True)
            continue
        all_invalid.append(False)
        dmin = depth[i][valid].min()
        dmax = depth[i][valid].max()
        if dmax > dmin:
            t = (depth[i] - dmin) / (dmax - dmin)
        else:
            t = np.full((h, w), 0.5)
        t = np.clip(t, 0.0, 1.0)
        if mode == "gray":
            img = np.repeat(t[None], 3, axis=0)
        elif mode == "gray_inv":
            img = np.repeat((1.0 - t)[None], 3, axis=0)
        else:
            if _TURBO is None:
                _TURBO = _turbo_lut()
            idx = np.minimum((t * 255).astype(int), 255)
            img = _TURBO[idx].transpose(2, 0, 1)
        out[i] = img * valid[None]
    return out, all_invalid
