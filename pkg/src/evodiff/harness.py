"""Paired guided/unguided studies and their reporting.

One run = one trajectory seed shared by every arm (identical x_T and step
noise), so per-run objective differences isolate the effect of guidance.
Results stream to disk incrementally; summaries and SVG histograms are
computed from the result rows alone.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .denoisers import (
    GaussianMixturePrior,
    GmmDenoiser,
    MlpDenoiser,
    MlpDenoiserSampler,
    kernel_prior_from_dataset,
)
from .errors import ConfigError
from .fitness import FitnessFunction, gmm_target_fitness
from .flow import DesignGrid, flow_fitness_function, grid_flow_delta_p
from .guidance import GuidanceConfig
from .metasurface import (
    LayeredStack,
    default_freqs,
    metasurface_fitness_function,
    parabola_target,
    tmm_transmission,
)
from .rng import RngStream, mix_seed
from .sampler import Trajectory, run_denoising
from .schedule import build_schedule

TASKS = ("flow", "metasurface", "gmm_toy")


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of a paired study; JSON-serializable."""

    task: str
    n_runs: int
    base_seed: int
    T: int = 100
    beta_min: float = 1e-4
    beta_max: float = 0.02
    denoiser: dict = field(default_factory=dict)
    arms: tuple = ()            # dicts: {"name", "alpha"?, "window"?, ...}; no alpha = unguided
    task_params: dict = field(default_factory=dict)
    record_curves: bool = False
    curve_stride: int = 5
    curve_window: Optional[tuple] = None
    threads: int = 1

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        if self.n_runs < 1:
            raise ConfigError("n_runs must be >= 1")
        names = [arm["name"] for arm in self.arms]
        if len(names) != len(set(names)):
            raise ConfigError("arm names must be unique")

    def to_dict(self) -> dict:
        return {
            "task": self.task, "n_runs": self.n_runs, "base_seed": self.base_seed,
            "T": self.T, "beta_min": self.beta_min, "beta_max": self.beta_max,
            "denoiser": self.denoiser, "arms": list(self.arms),
            "task_params": self.task_params, "record_curves": self.record_curves,
            "curve_stride": self.curve_stride,
            "curve_window": list(self.curve_window) if self.curve_window else None,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @staticmethod
    def from_dict(doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        doc["arms"] = tuple(doc.get("arms", ()))
        if doc.get("curve_window") is not None:
            doc["curve_window"] = tuple(doc["curve_window"])
        known = {f.name for f in ExperimentConfig.__dataclass_fields__.values()}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return ExperimentConfig(**doc)


@dataclass
class PairedRunResult:
    run_seed: int
    arms: dict          # name -> {"design": ndarray, "objective": float,
                        #          "n_fitness_evals": int, "curve": list|None}
    failed: bool = False
    error: Optional[str] = None


class _EvalCounter:
    """Thread-safe call counter shared with a wrapped fitness."""

    def __init__(self):
        self._lock = threading.Lock()
        self.count = 0

    def bump(self):
        with self._lock:
            self.count += 1


def counting_fitness(inner: FitnessFunction):
    """(wrapped fitness, counter): counts every evaluate() call."""
    counter = _EvalCounter()

    def counted(x):
        counter.bump()
        return inner.evaluate(x)

    wrapped = FitnessFunction(name=inner.name, dim=inner.dim, evaluate=counted,
                              concurrent_safe=inner.concurrent_safe,
                              gradient=inner.gradient, batch=None)
    return wrapped, counter


def build_denoiser(spec: dict, schedule):
    """Construct a denoiser from its declarative spec.

    Kinds: gmm (inline or path), standard_normal, kernel_dataset
    (synthesized topology corpus), mlp (model file).
    """
    kind = spec.get("kind")
    if kind == "gmm":
        if "path" in spec:
            with open(spec["path"]) as fh:
                prior = GaussianMixturePrior.from_json(fh.read())
        else:
            prior = GaussianMixturePrior(np.array(spec["weights"]),
                                         np.array(spec["means"]),
                                         np.array(spec["variances"]))
        return GmmDenoiser(prior, schedule)
    if kind == "standard_normal":
        dim = int(spec["dim"])
        prior = GaussianMixturePrior(np.ones(1), np.zeros((1, dim)), np.ones((1, dim)))
        return GmmDenoiser(prior, schedule)
    if kind == "kernel_dataset":
        synth = spec["synth"]
        data = synth_topology_dataset(int(synth["n"]), int(synth["W"]), int(synth["H"]),
                                      RngStream(int(spec.get("seed", 0)), "dataset"))
        prior = kernel_prior_from_dataset(np.array(data),
                                          bandwidth=float(spec.get("bandwidth", 0.05)),
                                          max_components=int(spec.get("max_components", 64)))
        return GmmDenoiser(prior, schedule)
    if kind == "mlp":
        with open(spec["path"]) as fh:
            model = MlpDenoiser.from_json(fh.read())
        return MlpDenoiserSampler(model, schedule)
    raise ConfigError(f"unknown denoiser kind {kind!r}")


def build_task(task: str, params: dict):
    """(guidance fitness, raw objective fn over x0). Objectives are minimized."""
    if task == "flow":
        w = int(params.get("W", 16))
        h = int(params.get("H", 16))
        fit = flow_fitness_function(width=w, height=h)

        def objective(x0):
            return grid_flow_delta_p(DesignGrid(w, h, x0))
    elif task == "metasurface":
        n_layers = int(params.get("n_layers", 32))
        n_freq = int(params.get("n_freq", 64))
        quantize = params.get("quantize")
        fit = metasurface_fitness_function(n_layers=n_layers, n_freq=n_freq,
                                           quantize=quantize)
        target = parabola_target(n_freq)
        freqs = default_freqs(n_freq)

        def objective(x0):
            t = tmm_transmission(LayeredStack(x0, quantize=quantize), freqs)
            return float(np.mean(np.abs(np.abs(t) - target.values)))
    elif task == "gmm_toy":
        target_vec = np.asarray(params.get("target", (1.5, -1.5)), dtype=float)
        fit = gmm_target_fitness(target_vec)

        def objective(x0):
            return float(np.sum((np.asarray(x0) - target_vec) ** 2))
    else:
        raise ConfigError(f"unknown task {task!r}")
    return fit, objective


def _arm_guidance(arm: dict, cfg: ExperimentConfig) -> Optional[GuidanceConfig]:
    if "alpha" not in arm:
        return None
    window = tuple(arm.get("window", (cfg.T // 2, 1)))
    return GuidanceConfig(
        alpha=float(arm["alpha"]),
        n_samples=int(arm.get("n_samples", 30)),
        window=window,
        shaping=arm.get("shaping", "rank_zero_sum"),
        eval_mode=arm.get("eval_mode", "x0_predicted"),
        parallel_eval=cfg.threads > 1,
        max_workers=cfg.threads,
    )


def run_paired_experiment(cfg: ExperimentConfig, out_dir: Optional[str] = None,
                          progress: Optional[Callable[[int], None]] = None):
    """Execute all runs x arms; returns (results, failure_count).

    With out_dir set, results.csv is appended after every run (prefix of the
    full file at any point) and timings.csv records wall clock separately so
    the results file is byte-stable across reruns.
    """
    schedule = build_schedule(cfg.T, cfg.beta_min, cfg.beta_max)
    denoiser = build_denoiser(cfg.denoiser, schedule)
    base_fit, objective = build_task(cfg.task, cfg.task_params)

    results = []
    failures = 0
    csv_fh = timing_fh = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        csv_fh = open(os.path.join(out_dir, "results.csv"), "w")
        csv_fh.write("run_seed,arm,objective,n_fitness_evals\n")
        timing_fh = open(os.path.join(out_dir, "timings.csv"), "w")
        timing_fh.write("run_seed,arm,wall_ms\n")

    try:
        for k in range(cfg.n_runs):
            run_seed = mix_seed(cfg.base_seed, k)
            traj_rng = RngStream(run_seed, "trajectory")
            arm_out = {}
            failed = False
            error = None
            for ai, arm in enumerate(cfg.arms):
                guidance = _arm_guidance(arm, cfg)
                fit, counter = counting_fitness(base_fit)
                pop_rng = RngStream(mix_seed(cfg.base_seed, k, ai + 1), "population")
                t0 = time.perf_counter()
                try:
                    traj = run_denoising(denoiser, schedule, traj_rng,
                                         guidance_config=guidance, fitness=fit,
                                         population_rng=pop_rng,
                                         record_states=cfg.record_curves)
                    obj = objective(traj.x0)
                except Exception as exc:  # any arm failure fails the run
                    failed = True
                    error = f"{arm['name']}: {exc}"
                    break
                wall_ms = (time.perf_counter() - t0) * 1e3
                curve = None
                if cfg.record_curves:
                    window = cfg.curve_window or (guidance.window if guidance else None)
                    decode = getattr(denoiser, "map_x0",
                                     getattr(denoiser, "predict_x0", None))
                    curve = objective_curve(traj, objective, cfg.curve_stride,
                                            window=window, decode=decode)
                arm_out[arm["name"]] = {
                    "design": traj.x0, "objective": obj,
                    "n_fitness_evals": counter.count, "curve": curve,
                    "wall_ms": wall_ms,
                }
            result = PairedRunResult(run_seed=run_seed, arms=arm_out,
                                     failed=failed, error=error)
            results.append(result)
            if failed:
                failures += 1
            elif csv_fh is not None:
                for name, rec in arm_out.items():
                    csv_fh.write(f"{run_seed},{name},{rec['objective']:.12g},"
                                 f"{rec['n_fitness_evals']}\n")
                    timing_fh.write(f"{run_seed},{name},{rec['wall_ms']:.3f}\n")
                csv_fh.flush()
                timing_fh.flush()
            if progress is not None:
                progress(k)
    finally:
        if csv_fh is not None:
            csv_fh.close()
            timing_fh.close()
    return results, failures


def objective_curve(trajectory: Trajectory, objective: Callable[[np.ndarray], float],
                    stride: int = 1, window: Optional[tuple] = None,
                    decode: Optional[Callable[[np.ndarray, int], np.ndarray]] = None):
    """Objective evaluated on recorded states every `stride` steps.

    With a (t_high, t_low) window, only steps inside it are scored; the last
    state of the range is always included. `decode(x_t, t)` maps an
    intermediate state to the design actually scored; pass the denoiser's
    x0 prediction to score the implied final design rather than the raw
    noisy state (raw states carry a systematic noise-driven objective trend).
    """
    if len(trajectory.states) < 2:
        raise ConfigError("trajectory has no recorded states")
    pts = []
    steps = [(t, x) for t, x in trajectory.states
             if window is None or window[1] - 1 <= t <= window[0]]
    for j, (t, x) in enumerate(steps):
        if j % stride == 0 or j == len(steps) - 1:
            design = x if (decode is None or t < 1) else decode(x, t)
            pts.append((t, float(objective(design))))
    return pts


@dataclass
class HistogramSummary:
    arms: tuple
    bin_edges: np.ndarray
    counts: np.ndarray
    median: float
    mean: float
    medians: dict
    means: dict
    fraction_improved: float
    n: int

    def to_dict(self) -> dict:
        return {
            "arms": list(self.arms),
            "medians": self.medians,
            "means": self.means,
            "median_difference": self.median,
            "mean_difference": self.mean,
            "fraction_improved": self.fraction_improved,
            "n": self.n,
            "bins": {"edges": self.bin_edges.tolist(), "counts": self.counts.tolist()},
        }


def summarize(results, arm_a: str, arm_b: str, bins: int = 20) -> HistogramSummary:
    """Histogram of per-run objective(arm_a) - objective(arm_b).

    fraction_improved counts runs where the difference is negative
    (objectives are minimized).
    """
    diffs, va, vb = [], [], []
    for res in results:
        if res.failed:
            continue
        if arm_a not in res.arms or arm_b not in res.arms:
            raise ConfigError(f"arms {arm_a!r}/{arm_b!r} missing from run {res.run_seed}")
        a = res.arms[arm_a]["objective"]
        b = res.arms[arm_b]["objective"]
        diffs.append(a - b)
        va.append(a)
        vb.append(b)
    if not diffs:
        raise ConfigError("no successful runs to summarize")
    diffs = np.array(diffs)
    counts, edges = np.histogram(diffs, bins=bins)
    return HistogramSummary(
        arms=(arm_a, arm_b),
        bin_edges=edges, counts=counts,
        median=float(np.median(diffs)), mean=float(np.mean(diffs)),
        medians={arm_a: float(np.median(va)), arm_b: float(np.median(vb))},
        means={arm_a: float(np.mean(va)), arm_b: float(np.mean(vb))},
        fraction_improved=float(np.mean(diffs < 0)),
        n=diffs.size,
    )


def synth_topology_dataset(n: int, W: int, H: int, rng: RngStream):
    """Procedural channel-like designs with a guaranteed inlet-outlet path.

    Each sample is a low background plus smoothed random blobs plus one
    4-connected random-walk channel from the left to the right edge, all in
    [0, 1].
    """
    if n < 1:
        raise ConfigError("need n >= 1")
    out = []
    for k in range(n):
        vals = 0.15 + 0.1 * np.abs(rng.normal(k, 0, W * H)).reshape(H, W)
        # smoothed blobs
        n_blobs = 2 + int(rng.integers(k, 1, 1, 3)[0])
        blob_pos = rng.integers(k, 2, 2 * n_blobs, max(W, H)).reshape(n_blobs, 2)
        blob_amp = 0.5 + 0.3 * np.abs(rng.normal(k, 1, n_blobs))
        yy, xx = np.mgrid[0:H, 0:W]
        for bi in range(n_blobs):
            cy, cx = blob_pos[bi, 0] % H, blob_pos[bi, 1] % W
            # periodic distances keep blob coverage uniform; otherwise edge
            # columns would be systematically emptier than the bulk
            dy = np.minimum(np.abs(yy - cy), H - np.abs(yy - cy))
            dx = np.minimum(np.abs(xx - cx), W - np.abs(xx - cx))
            r2 = dy ** 2 + dx ** 2
            vals += blob_amp[bi] * np.exp(-r2 / (2.0 * (max(W, H) / 8.0) ** 2))
        # 4-connected channel, 2 rows thick
        row = int(rng.integers(k, 3, 1, H - 1)[0])
        moves = rng.integers(k, 4, W, 3) - 1
        for col in range(W):
            nxt = int(np.clip(row + moves[col], 0, H - 2))
            lo, hi = min(row, nxt), max(row, nxt)
            vals[lo:hi + 2, col] = 1.0
            row = nxt
        # binarize at the per-design median: near-binary designs as in
        # topology optimization (borderline cells would make the pressure
        # drop hypersensitive to tiny perturbations), with a balanced
        # fluid/solid split so random perturbations are trendless on average
        vals = np.where(vals > np.median(vals), 0.9, 0.1)
        out.append(vals.ravel())
    return out


def has_left_right_path(mask: np.ndarray) -> bool:
    """True if some fluid component touches both the left and right edges."""
    from scipy.ndimage import label

    labels, count = label(mask)
    if count == 0:
        return False
    left = set(labels[:, 0][labels[:, 0] > 0])
    right = set(labels[:, -1][labels[:, -1] > 0])
    return bool(left & right)


# --- emitters ---------------------------------------------------------------

def emit_csv(results, path: str):
    """results.csv (deterministic columns only; timings live elsewhere)."""
    with open(path, "w") as fh:
        fh.write("run_seed,arm,objective,n_fitness_evals\n")
        for res in results:
            if res.failed:
                continue
            for name, rec in res.arms.items():
                fh.write(f"{res.run_seed},{name},{rec['objective']:.12g},"
                         f"{rec['n_fitness_evals']}\n")


def emit_json(summary: HistogramSummary, path: str):
    with open(path, "w") as fh:
        json.dump(summary.to_dict(), fh, indent=2)


def load_summary(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def emit_svg_histogram(summary, path: str, width: int = 640, height: int = 400):
    """Self-contained SVG bar chart of the difference histogram.

    Accepts a HistogramSummary or a loaded summary dict. Each bar is a
    <rect> carrying data-count, so tests can parse counts back out.
    """
    doc = summary.to_dict() if isinstance(summary, HistogramSummary) else summary
    edges = np.asarray(doc["bins"]["edges"], dtype=float)
    counts = np.asarray(doc["bins"]["counts"], dtype=float)
    arm_a, arm_b = doc["arms"]
    margin = 50
    plot_w, plot_h = width - 2 * margin, height - 2 * margin
    cmax = counts.max() if counts.size and counts.max() > 0 else 1.0
    span = edges[-1] - edges[0] or 1.0

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="20" text-anchor="middle" font-size="14">'
        f"objective difference: {arm_a} - {arm_b}</text>",
    ]
    for i, c in enumerate(counts):
        x0 = margin + (edges[i] - edges[0]) / span * plot_w
        x1 = margin + (edges[i + 1] - edges[0]) / span * plot_w
        bar_h = c / cmax * plot_h
        parts.append(
            f'<rect class="bar" data-count="{int(c)}" x="{x0:.2f}" '
            f'y="{margin + plot_h - bar_h:.2f}" width="{max(x1 - x0 - 1, 1):.2f}" '
            f'height="{bar_h:.2f}" fill="#4878a8"/>'
        )
    axis_y = margin + plot_h
    parts.append(f'<line x1="{margin}" y1="{axis_y}" x2="{margin + plot_w}" '
                 f'y2="{axis_y}" stroke="black"/>')
    parts.append(f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{axis_y}" '
                 f'stroke="black"/>')
    for frac in (0.0, 0.5, 1.0):
        xv = edges[0] + frac * span
        xp = margin + frac * plot_w
        parts.append(f'<text x="{xp:.0f}" y="{axis_y + 18}" text-anchor="middle" '
                     f'font-size="11">{xv:.3g}</text>')
    parts.append(f'<text x="{margin - 8}" y="{margin}" text-anchor="end" '
                 f'font-size="11">{cmax:.0f}</text>')
    parts.append(f'<text x="{margin - 8}" y="{axis_y}" text-anchor="end" '
                 f'font-size="11">0</text>')
    parts.append(f'<text x="{width / 2:.0f}" y="{height - 8}" text-anchor="middle" '
                 f'font-size="12">difference (negative = {arm_a} improved)</text>')
    parts.append(f'<text x="{margin - 34}" y="{(margin + axis_y) / 2:.0f}" '
                 f'font-size="12" transform="rotate(-90 {margin - 34} '
                 f'{(margin + axis_y) / 2:.0f})" text-anchor="middle">runs</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))
