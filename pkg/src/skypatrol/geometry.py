"""Homography estimation and the geometric substrate for auto-labeling.

Correspondences are synthesized from known pose pairs instead of detected
keypoints, so estimator accuracy can be measured against the analytic
inter-frame transform.  All estimation is deterministic under a seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .camera import (CameraConfig, Observation, pixel_to_world, pixel_transform,
                     world_to_pixel)
from .drone import DronePose


class GeometryError(Exception):
    pass


class EstimationError(GeometryError):
    pass


class TrackingLostError(GeometryError):
    pass


@dataclass(frozen=True)
class Homography:
    """3x3 projective map, canonically scaled so the bottom-right entry is 1."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, float)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise GeometryError("homography must be a finite 3x3 matrix")
        if abs(np.linalg.det(m)) <= 1e-12:
            raise GeometryError("homography is singular")
        if abs(m[2, 2]) > 1e-12:
            m = m / m[2, 2]
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))

    def __matmul__(self, other: "Homography") -> "Homography":
        return Homography(self.matrix @ other.matrix)


def transform_point(h, p) -> np.ndarray:
    """Apply a homography to one point or an (N, 2) array of points."""
    m = h.matrix if isinstance(h, Homography) else np.asarray(h, float)
    pts = np.atleast_2d(np.asarray(p, float))
    q = pts @ m[:2, :2].T + m[:2, 2]
    w = pts @ m[2, :2] + m[2, 2]
    if np.any(np.abs(w) <= 1e-12):
        raise GeometryError("point maps to infinity")
    out = q / w[:, None]
    return out if np.asarray(p).ndim == 2 else out[0]


@dataclass
class MatchSet:
    """Pixel correspondences between frame i (src) and frame i+1 (dst)."""

    src: np.ndarray
    dst: np.ndarray
    inliers: np.ndarray | None = None
    true_outliers: np.ndarray | None = None

    def __post_init__(self):
        self.src = np.asarray(self.src, float).reshape(-1, 2)
        self.dst = np.asarray(self.dst, float).reshape(-1, 2)
        if self.src.shape != self.dst.shape:
            raise GeometryError("src and dst must pair up one to one")
        if not (np.all(np.isfinite(self.src)) and np.all(np.isfinite(self.dst))):
            raise GeometryError("correspondences must be finite")

    def __len__(self) -> int:
        return self.src.shape[0]

    @property
    def inlier_count(self) -> int:
        return int(self.inliers.sum()) if self.inliers is not None else len(self)

    def subset(self, mask: np.ndarray) -> "MatchSet":
        keep = lambda a: None if a is None else a[mask]
        return MatchSet(self.src[mask], self.dst[mask],
                        keep(self.inliers), keep(self.true_outliers))


def synthesize_matches(pose_i: DronePose, pose_j: DronePose, camera: CameraConfig,
                       noise_px: float = 0.0, outlier_frac: float = 0.0,
                       count: int = 100, seed: int | np.random.Generator = 0) -> MatchSet:
    """Sample ground points visible from both poses and project them.

    Gaussian pixel noise lands on the second frame (measurement side);
    floor(outlier_frac * count) second-frame points are replaced by uniform
    random pixels and flagged in true_outliers.
    """
    if count < 8:
        raise GeometryError("need at least 8 correspondences")
    if not 0.0 <= outlier_frac < 0.5:
        raise GeometryError("outlier_frac must be in [0, 0.5)")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    margin = max(1.0, 4.0 * noise_px)
    lo = np.array([margin, margin])
    hi = np.array([camera.width - 1 - margin, camera.height - 1 - margin])
    src_rows, dst_rows = [], []
    have = 0
    for _ in range(64):
        cand = rng.uniform(lo, hi, size=(4 * count, 2))
        ground = pixel_to_world(pose_i, camera, cand)
        proj = world_to_pixel(pose_j, camera, ground)
        ok = np.all((proj >= lo) & (proj <= hi), axis=1)
        src_rows.append(cand[ok])
        dst_rows.append(proj[ok])
        have += int(ok.sum())
        if have >= count:
            break
    if have < count:
        raise GeometryError("camera footprints overlap too little to sample matches")
    src = np.concatenate(src_rows)[:count]
    dst = np.concatenate(dst_rows)[:count]

    if noise_px > 0:
        dst = dst + rng.normal(0.0, noise_px, size=dst.shape)
    n_out = int(np.floor(outlier_frac * count))
    flags = np.zeros(count, bool)
    if n_out:
        rows = rng.permutation(count)[:n_out]
        dst[rows] = rng.uniform(lo, hi, size=(n_out, 2))
        flags[rows] = True
    bound = np.array([camera.width - 1, camera.height - 1])
    dst = np.clip(dst, 0.0, bound)
    return MatchSet(src, dst, true_outliers=flags)


# -- DLT -------------------------------------------------------------------

def _normalize_points(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hartley conditioning: centroid to origin, mean distance sqrt(2)."""
    centroid = pts.mean(axis=0)
    dist = np.linalg.norm(pts - centroid, axis=1).mean()
    if dist <= 1e-12:
        raise EstimationError("degenerate point set (coincident points)")
    s = np.sqrt(2.0) / dist
    t = np.array([[s, 0.0, -s * centroid[0]],
                  [0.0, s, -s * centroid[1]],
                  [0.0, 0.0, 1.0]])
    return (pts - centroid) * s, t


def estimate_dlt(src: np.ndarray, dst: np.ndarray) -> Homography:
    """Normalized direct linear transform over >= 4 correspondences."""
    src = np.asarray(src, float)
    dst = np.asarray(dst, float)
    if len(src) < 4:
        raise EstimationError("DLT needs at least 4 correspondences")
    ns, ts = _normalize_points(src)
    nd, td = _normalize_points(dst)
    n = len(src)
    a = np.zeros((2 * n, 9))
    x, y = ns[:, 0], ns[:, 1]
    u, v = nd[:, 0], nd[:, 1]
    a[0::2, 0], a[0::2, 1], a[0::2, 2] = -x, -y, -1.0
    a[0::2, 6], a[0::2, 7], a[0::2, 8] = x * u, y * u, u
    a[1::2, 3], a[1::2, 4], a[1::2, 5] = -x, -y, -1.0
    a[1::2, 6], a[1::2, 7], a[1::2, 8] = x * v, y * v, v
    _, _, vh = np.linalg.svd(a)
    hn = vh[-1].reshape(3, 3)
    try:
        return Homography(np.linalg.inv(td) @ hn @ ts)
    except GeometryError as exc:
        raise EstimationError(str(exc)) from exc


def _minimal_models(src: np.ndarray, dst: np.ndarray, samples: np.ndarray) -> np.ndarray:
    """Solve the 4-point DLT for every sample row at once.

    Returns (B, 3, 3); rows that fail to produce an invertible model are
    marked by a NaN matrix.
    """
    s = src[samples]
    d = dst[samples]
    b = len(samples)

    def condition(p):
        c = p.mean(axis=1, keepdims=True)
        scale = np.linalg.norm(p - c, axis=2).mean(axis=1)
        scale = np.where(scale > 1e-12, scale, np.nan)
        s_ = np.sqrt(2.0) / scale
        t = np.zeros((b, 3, 3))
        t[:, 0, 0] = t[:, 1, 1] = s_
        t[:, 0, 2] = -s_ * c[:, 0, 0]
        t[:, 1, 2] = -s_ * c[:, 0, 1]
        t[:, 2, 2] = 1.0
        return (p - c) * s_[:, None, None], t

    ns, ts = condition(s)
    nd, td = condition(d)
    a = np.zeros((b, 8, 9))
    x, y = ns[..., 0], ns[..., 1]
    u, v = nd[..., 0], nd[..., 1]
    a[:, 0::2, 0], a[:, 0::2, 1], a[:, 0::2, 2] = -x, -y, -1.0
    a[:, 0::2, 6], a[:, 0::2, 7], a[:, 0::2, 8] = x * u, y * u, u
    a[:, 1::2, 3], a[:, 1::2, 4], a[:, 1::2, 5] = -x, -y, -1.0
    a[:, 1::2, 6], a[:, 1::2, 7], a[:, 1::2, 8] = x * v, y * v, v
    bad = ~np.all(np.isfinite(a), axis=(1, 2))
    a[bad] = np.eye(8, 9)
    _, _, vh = np.linalg.svd(a)
    hn = vh[:, -1, :].reshape(b, 3, 3)

    # denormalize: inv(td) @ hn @ ts, with inv(td) formed in closed form
    inv_td = np.zeros_like(td)
    sd = td[:, 0, 0]
    inv_td[:, 0, 0] = inv_td[:, 1, 1] = 1.0 / sd
    inv_td[:, 0, 2] = -td[:, 0, 2] / sd
    inv_td[:, 1, 2] = -td[:, 1, 2] / sd
    inv_td[:, 2, 2] = 1.0
    h = inv_td @ hn @ ts
    h[~np.isfinite(h)] = 0.0
    det = np.linalg.det(h)
    bad |= ~np.isfinite(det) | (np.abs(det) <= 1e-12)
    h[bad] = np.nan
    return h


def _symmetric_errors(h: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Symmetric transfer error per model per correspondence, (B, N).

    Mean of the forward and backward transfer distances, in pixels.
    """
    ok = np.all(np.isfinite(h), axis=(1, 2))
    hs = np.where(ok[:, None, None], h, np.eye(3))
    hinv = np.linalg.inv(hs)

    def dist(m, p, q):
        ph = np.concatenate([p, np.ones((len(p), 1))], axis=1)
        t = m @ ph.T
        w = t[:, 2, :]
        w = np.where(np.abs(w) > 1e-12, w, np.nan)
        d = t[:, :2, :] / w[:, None, :] - q.T[None]
        return np.sqrt(np.sum(d * d, axis=1))

    err = 0.5 * (dist(hs, src, dst) + dist(hinv, dst, src))
    err[~ok] = np.inf
    return np.where(np.isfinite(err), err, np.inf)


def _fit_similarity(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Least-squares scaled rotation + translation, as a 3x3 matrix."""
    ms, md = src.mean(axis=0), dst.mean(axis=0)
    a, b = src - ms, dst - md
    cov = b.T @ a / len(src)
    u, d, vt = np.linalg.svd(cov)
    fix = np.eye(2)
    if np.linalg.det(u @ vt) < 0:
        fix[1, 1] = -1.0
    rot = u @ fix @ vt
    var = float((a * a).sum()) / len(src)
    if var <= 1e-12:
        raise EstimationError("degenerate point set (coincident points)")
    scale = float(np.trace(np.diag(d) @ fix)) / var
    h = np.eye(3)
    h[:2, :2] = scale * rot
    h[:2, 2] = md - scale * rot @ ms
    return h


def _iterate_fit(fit, src: np.ndarray, dst: np.ndarray, mask: np.ndarray,
                 threshold_px: float) -> np.ndarray:
    """Alternate fitting and inlier re-selection until the set stabilizes."""
    cur = mask
    h = fit(src[cur], dst[cur])
    for _ in range(10):
        err = _symmetric_errors(h[None], src, dst)[0]
        new = err < threshold_px
        if new.sum() < 4 or np.array_equal(new, cur):
            break
        cur = new
        h = fit(src[cur], dst[cur])
    return h


def _msac_score(h: np.ndarray, src: np.ndarray, dst: np.ndarray,
                threshold_px: float) -> float:
    err = _symmetric_errors(h[None], src, dst)[0]
    return float(np.sum(np.minimum(err, threshold_px) ** 2))


def _refit(src: np.ndarray, dst: np.ndarray, mask: np.ndarray,
           threshold_px: float) -> tuple[Homography, np.ndarray]:
    """Refit on the consensus set with model selection.

    Both a full projective DLT and a similarity are iterated to their own
    fit/re-select fixpoints and scored with a truncated quadratic over all
    matches.  For this lab's planar orthographic frames the true
    inter-frame map is a similarity, and the 4 extra projective parameters
    only amplify noise at the frame corners, so the projective model is
    kept only when it at least halves the robust score (clear evidence of
    real projective structure).
    """
    h = _iterate_fit(lambda s, d: estimate_dlt(s, d).matrix, src, dst, mask, threshold_px)
    try:
        h_sim = _iterate_fit(_fit_similarity, src, dst, mask, threshold_px)
    except EstimationError:
        h_sim = None
    if h_sim is not None:
        if _msac_score(h, src, dst, threshold_px) >= 0.5 * _msac_score(h_sim, src, dst, threshold_px):
            h = h_sim
    final = _symmetric_errors(h[None], src, dst)[0] < threshold_px
    if final.sum() < 4:
        final = mask
    return Homography(h), final


def _sample_rows(rng: np.random.Generator, n: int, iters: int) -> np.ndarray:
    keys = rng.random((iters, n))
    return np.argpartition(keys, 4, axis=1)[:, :4]


def _collinear(pts: np.ndarray) -> np.ndarray:
    """True for sample rows whose 4 points contain a near-collinear triple."""
    combos = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]
    spread = np.linalg.norm(pts - pts.mean(axis=1, keepdims=True), axis=2).max(axis=1)
    spread = np.maximum(spread, 1e-9)
    worst = np.full(len(pts), np.inf)
    for i, j, k in combos:
        u = pts[:, j] - pts[:, i]
        v = pts[:, k] - pts[:, i]
        area = np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])
        worst = np.minimum(worst, area / (spread ** 2))
    return worst < 1e-4


def estimate_homography(matches: MatchSet, threshold_px: float = 2.0,
                        iterations: int = 1000,
                        seed: int | np.random.Generator = 0) -> tuple[Homography, MatchSet]:
    """RANSAC over 4-point minimal DLT samples, then refit on the consensus.

    Returns the refit homography and the match set with inlier flags
    populated.  Deterministic under the seed; the full iteration budget is
    always evaluated (batched), so early consensus cannot change results.
    """
    n = len(matches)
    if n < 4:
        raise EstimationError("need at least 4 correspondences")
    if threshold_px <= 0 or iterations < 1:
        raise EstimationError("threshold and iterations must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    src, dst = matches.src, matches.dst

    samples = _sample_rows(rng, n, iterations)
    # degenerate minimal samples are redrawn so the budget is spent on
    # usable models
    for _ in range(32):
        bad = _collinear(src[samples]) | _collinear(dst[samples])
        if not bad.any():
            break
        samples[bad] = _sample_rows(rng, n, int(bad.sum()))

    models = _minimal_models(src, dst, samples)
    errors = _symmetric_errors(models, src, dst)
    counts = (errors < threshold_px).sum(axis=1)
    best = int(np.argmax(counts))
    if counts[best] < 4:
        raise EstimationError("no consensus: best model explains fewer than 4 matches")

    mask = errors[best] < threshold_px
    h, final_mask = _refit(src, dst, mask, threshold_px)
    return h, replace(matches, inliers=final_mask)


# -- bounding-box tracking -------------------------------------------------

@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel box given by center and size."""

    cx: float
    cy: float
    width: float
    height: float

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise GeometryError("box size must be positive")
        if not all(np.isfinite([self.cx, self.cy, self.width, self.height])):
            raise GeometryError("box must be finite")

    @property
    def center(self) -> np.ndarray:
        return np.array([self.cx, self.cy])

    def shifted(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.cx + dx, self.cy + dy, self.width, self.height)

    def intersects_frame(self, width: int, height: int) -> bool:
        return (self.cx + self.width / 2 > 0 and self.cx - self.width / 2 < width - 1
                and self.cy + self.height / 2 > 0 and self.cy - self.height / 2 < height - 1)


def _crop(raster: np.ndarray, box: BoundingBox) -> tuple[np.ndarray, int, int]:
    h, w = raster.shape
    x0 = int(np.clip(round(box.cx - box.width / 2), 0, w - 1))
    x1 = int(np.clip(round(box.cx + box.width / 2), x0 + 1, w))
    y0 = int(np.clip(round(box.cy - box.height / 2), 0, h - 1))
    y1 = int(np.clip(round(box.cy + box.height / 2), y0 + 1, h))
    return raster[y0:y1, x0:x1], x0, y0


def _ncc_track(prev: np.ndarray, cur: np.ndarray, box: BoundingBox,
               search_px: int, floor: float) -> BoundingBox:
    template, tx0, ty0 = _crop(prev, box)
    th, tw = template.shape
    h, w = cur.shape
    rx0 = max(0, tx0 - search_px)
    ry0 = max(0, ty0 - search_px)
    rx1 = min(w, tx0 + tw + search_px)
    ry1 = min(h, ty0 + th + search_px)
    region = cur[ry0:ry1, rx0:rx1]
    if region.shape[0] < th or region.shape[1] < tw:
        raise TrackingLostError("search window fell off the frame")

    windows = np.lib.stride_tricks.sliding_window_view(region.astype(float), (th, tw))
    t = template.astype(float) - template.mean()
    tn = np.sqrt(np.sum(t * t))
    wm = windows - windows.mean(axis=(2, 3), keepdims=True)
    wn = np.sqrt(np.sum(wm * wm, axis=(2, 3)))
    denom = tn * wn
    scores = np.where(denom > 1e-9, np.einsum("abij,ij->ab", wm, t) / np.where(denom > 1e-9, denom, 1.0), 0.0)
    peak = float(scores.max())
    if peak < floor:
        raise TrackingLostError(f"correlation peak {peak:.2f} below floor {floor:.2f}")
    iy, ix = np.unravel_index(int(np.argmax(scores)), scores.shape)
    return box.shifted(float(rx0 + ix - tx0), float(ry0 + iy - ty0))


def track_box(frames: tuple[Observation, Observation], box: BoundingBox,
              mode: str = "oracle", jitter_px: float = 1.0,
              seed: int | np.random.Generator = 0,
              search_px: int = 25, floor: float = 0.35) -> BoundingBox:
    """Locate the navigator box in the second frame.

    Oracle mode reads the simulator's projected navigator center (plus
    seeded jitter) and isolates label geometry from tracking errors;
    template mode runs a normalized cross-correlation search and is the
    honest stand-in for a video tracker.
    """
    prev, cur = frames
    if not box.intersects_frame(prev.width, prev.height):
        raise GeometryError("box lies outside the first frame")
    if mode == "oracle":
        if cur.truth is None:
            raise GeometryError("oracle tracking needs simulator truth on the frame")
        cx, cy = cur.truth.nav_pixel
        if jitter_px > 0:
            rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
            jx, jy = rng.normal(0.0, jitter_px, size=2)
            cx, cy = cx + jx, cy + jy
        return BoundingBox(float(cx), float(cy), box.width, box.height)
    if mode == "template":
        return _ncc_track(prev.raster, cur.raster, box, search_px, floor)
    raise GeometryError(f"unknown tracking mode: {mode!r}")
