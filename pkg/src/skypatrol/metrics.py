"""Evaluation: dataset metrics, labeling-error histograms, patrol scoring."""

import dataclasses
import math

import numpy as np

from .camera import CameraConfig
from .controller import extract_candidates
from .dataset import LabeledDataset
from .drone import wrap_angle
from .net import GmmParams, Prediction
from .seeding import rng_for

HALF_PI = math.pi / 2


class EvalError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class MetricReport:
    rmse_d: float
    rmse_t: float
    acc_d: float
    acc_t: float
    sd_err_d: float
    sd_err_t: float
    n: int
    dir_threshold_rad: float
    t_tolerance: float
    mode: str

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclasses.dataclass(frozen=True)
class PatrolScore:
    direction_score: float
    translation_score: float
    series: tuple
    lost_frames: int

    def to_dict(self):
        return {"direction_score": self.direction_score,
                "translation_score": self.translation_score,
                "lost_frames": self.lost_frames,
                "series": list(self.series)}


def mixture_argmax(gmm: GmmParams, grid_n: int = 2048) -> float:
    """Continuous densest direction: grid seed plus Newton refinement."""

    from .net import gmm_pdf

    xs = -1.0 + (2.0 * np.arange(grid_n) + 1.0) / grid_n
    seeds = [float(xs[int(np.argmax(gmm_pdf(gmm, xs)))])]
    seeds += [float(m) for m in gmm.mu]
    best_x, best_f = seeds[0], -1.0
    s2 = gmm.sigma * gmm.sigma
    for x0 in seeds:
        x = x0
        for _ in range(40):
            z = (x - gmm.mu) / gmm.sigma
            comp = np.exp(-0.5 * z * z) * gmm.phi
            d1 = float((comp * -(x - gmm.mu) / s2).sum())
            d2 = float((comp * ((x - gmm.mu) ** 2 / s2 - 1.0) / s2).sum())
            if d2 >= 0 or not math.isfinite(d2):
                break  # not in a concave neighborhood; keep the seed
            step = d1 / d2
            nxt = min(1.0, max(-1.0, x - step))
            if abs(nxt - x) < 1e-14:
                x = nxt
                break
            x = nxt
        f = gmm_pdf(gmm, x)
        if f > best_f:
            best_x, best_f = x, f
    return best_x


def _predicted_direction(pred: Prediction, label_d: float, mode: str,
                         threshold: float, grid_n: int) -> float:
    gmm = pred.gmm
    if mode == "nearest":
        cands = extract_candidates(gmm, threshold, grid_n)
        if cands:
            return min(cands, key=lambda c: abs(c.direction - label_d)).direction
        mode = "argmax"  # no section cleared the threshold
    if mode == "argmax":
        return mixture_argmax(gmm)
    raise EvalError(f"unknown direction mode {mode!r}")


def evaluate(predictions, labels, mode: str = "nearest",
             dir_threshold_rad: float = math.pi / 12, t_tolerance: float = 0.2,
             threshold: float = 0.5, grid_n: int = 256) -> MetricReport:
    """Score predictions against labeled samples.

    ``mode`` picks how a multi-modal direction prediction is graded:
    "nearest" credits the candidate closest to the label, "argmax" grades
    the mixture's single densest direction.
    """

    if mode not in ("nearest", "argmax"):
        raise EvalError(f"unknown direction mode {mode!r}")
    if len(predictions) != len(labels):
        raise EvalError("prediction and label counts differ")
    if len(labels) == 0:
        raise EvalError("nothing to evaluate")
    err_d = np.array([
        _predicted_direction(p, s.d, mode, threshold, grid_n) - s.d
        for p, s in zip(predictions, labels)])
    err_t = np.array([p.t_hat - s.t for p, s in zip(predictions, labels)])
    acc_d = float((np.abs(err_d) * HALF_PI < dir_threshold_rad).mean())
    acc_t = float((np.abs(err_t) < t_tolerance).mean())
    return MetricReport(
        rmse_d=float(np.sqrt((err_d ** 2).mean())),
        rmse_t=float(np.sqrt((err_t ** 2).mean())),
        acc_d=acc_d, acc_t=acc_t,
        sd_err_d=float(err_d.std()), sd_err_t=float(err_t.std()),
        n=len(labels), dir_threshold_rad=dir_threshold_rad,
        t_tolerance=t_tolerance, mode=mode)


def random_baseline(labels, seed: int = 0, sigma: float = 0.1,
                    **kwargs) -> MetricReport:
    """Uniform random predictions over the label ranges, same metrics."""

    rng = rng_for(seed, "baseline")
    preds = []
    for _ in range(len(labels)):
        mu = rng.uniform(-0.999, 0.999)
        preds.append(Prediction(
            gmm=GmmParams(phi=np.array([1.0, 0.0, 0.0]),
                          mu=np.array([mu, 0.0, 0.0]), sigma=sigma),
            t_hat=float(rng.uniform(-0.999, 0.999))))
    return evaluate(preds, labels, **kwargs)


def labeling_error_histogram(dataset: LabeledDataset, bin_deg: float = 1.0,
                             max_deg: float = 45.0):
    """Degree-binned |label - ground truth| direction errors.

    Returns {"edges_deg", "counts", "cumulative_pct", "n"}; the last bin
    collects everything at or past ``max_deg``.
    """

    errs = []
    for s in dataset.samples:
        if s.gt_d is None:
            raise EvalError("dataset sample lacks ground truth")
        errs.append(abs(s.d - s.gt_d) * 90.0)
    if not errs:
        raise EvalError("dataset has no samples")
    errs = np.array(errs)
    edges = np.arange(0.0, max_deg + bin_deg, bin_deg)
    counts = np.histogram(np.minimum(errs, max_deg - 1e-12), bins=edges)[0]
    cumulative = 100.0 * np.cumsum(counts) / len(errs)
    return {"edges_deg": edges.tolist(), "counts": counts.tolist(),
            "cumulative_pct": cumulative.tolist(), "n": int(len(errs))}


def _heading_error(yaw: float, tangent: float) -> float:
    # tangent is undirected: fold the difference into [0, pi/2]
    delta = abs(wrap_angle(yaw - tangent))
    return math.pi - delta if delta > HALF_PI else delta


def score_patrol(poses, world, camera: CameraConfig = CameraConfig(),
                 lost_threshold_m: float = 30.0) -> PatrolScore:
    """Per-pose road alignment and centering scores, averaged over the run.

    A pose farther than ``lost_threshold_m`` from every road scores zero on
    both axes and is flagged lost.
    """

    if len(poses) == 0:
        raise EvalError("empty trace")
    series = []
    for pose in poses:
        offset, tangent, _ = world.nearest_road(pose.position)
        half_w = 0.5 * camera.width * camera.meters_per_pixel(pose.altitude)
        if offset > lost_threshold_m:
            series.append({"dir": 0.0, "trans": 0.0, "lost": True})
            continue
        derr = _heading_error(pose.yaw, tangent)
        series.append({
            "dir": max(0.0, 1.0 - derr / HALF_PI),
            "trans": max(0.0, 1.0 - offset / half_w),
            "lost": False,
        })
    return PatrolScore(
        direction_score=float(np.mean([f["dir"] for f in series])),
        translation_score=float(np.mean([f["trans"] for f in series])),
        series=tuple(series),
        lost_frames=sum(f["lost"] for f in series))
