"""Command-line surface.

Subcommands: train, sample, experiment, eval, plot. All outputs are files
or machine-readable stdout; logs go to stderr. Every command is
deterministic given its flags, input files, and seed, and stamps a manifest
with a hash of the effective configuration.

Exit codes: 0 ok, 2 configuration, 3 numeric failure, 4 fitness
evaluation failure, 5 I/O.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .denoisers import (
    GaussianMixturePrior,
    GmmDenoiser,
    MlpDenoiser,
    MlpDenoiserSampler,
    mlp_train,
)
from .errors import ConfigError, FitnessEvalError, SolverError, TrainingError
from .fitness import get_fitness, load_design, registered_names, save_design
from .guidance import GuidanceConfig
from .harness import (
    ExperimentConfig,
    emit_json,
    emit_svg_histogram,
    load_summary,
    run_paired_experiment,
    summarize,
    synth_topology_dataset,
)
from .rng import RngStream
from .sampler import run_denoising
from .schedule import build_schedule


def _log(msg):
    print(msg, file=sys.stderr)


def _config_hash(doc) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def _write_manifest(out_dir, command, cfg_doc, seed, outputs):
    manifest = {
        "command": command,
        "config_hash": _config_hash(cfg_doc),
        "seed": seed,
        "versions": {"evodiff": __version__, "numpy": np.__version__},
        "outputs": sorted(outputs),
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return path


def _parse_schedule(text):
    """'T,beta_min,beta_max' inline or a JSON file with those keys."""
    if text is None:
        return build_schedule(100, 1e-4, 0.02)
    if os.path.exists(text):
        with open(text) as fh:
            doc = json.load(fh)
        unknown = set(doc) - {"T", "beta_min", "beta_max", "kind"}
        if unknown:
            raise ConfigError(f"unknown schedule keys {sorted(unknown)}")
        return build_schedule(int(doc["T"]), float(doc.get("beta_min", 1e-4)),
                              float(doc.get("beta_max", 0.02)),
                              doc.get("kind", "linear"))
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError("inline schedule must be 'T,beta_min,beta_max'")
    return build_schedule(int(parts[0]), float(parts[1]), float(parts[2]))


def _load_denoiser(path, schedule):
    with open(path) as fh:
        doc = json.load(fh)
    if "layer_sizes" in doc:
        return MlpDenoiserSampler(MlpDenoiser.from_json(json.dumps(doc)), schedule)
    return GmmDenoiser(GaussianMixturePrior.from_json(json.dumps(doc)), schedule)


def _fitness_from_args(args):
    kwargs = json.loads(args.fitness_args) if getattr(args, "fitness_args", None) else {}
    return get_fitness(args.fitness, **kwargs)


# --- subcommands -------------------------------------------------------------

def cmd_train(args):
    schedule = _parse_schedule(args.schedule)
    if args.synth:
        w, h, n = (int(v) for v in args.synth.split(","))
        data = synth_topology_dataset(n, w, h, RngStream(args.seed, "dataset"))
        data = np.array(data)
    elif args.data:
        with open(args.data) as fh:
            data = np.array(json.load(fh), dtype=float)
    else:
        raise ConfigError("provide --data or --synth W,H,n")
    rng = RngStream(args.seed, "training")
    model, losses = mlp_train(data, schedule, epochs=args.epochs, batch=args.batch,
                              learning_rate=args.lr, rng=rng)
    model.schedule_hash = _config_hash(schedule.config_dict())
    with open(args.out, "w") as fh:
        fh.write(model.to_json())
    out_dir = os.path.dirname(os.path.abspath(args.out))
    cfg_doc = {"schedule": schedule.config_dict(), "epochs": args.epochs,
               "batch": args.batch, "lr": args.lr, "seed": args.seed,
               "data": args.data, "synth": args.synth}
    _write_manifest(out_dir, "train", cfg_doc, args.seed, [os.path.abspath(args.out)])
    final = losses[-1] if losses else float("nan")
    print(json.dumps({"final_loss": final, "first_epoch_loss": losses[0] if losses else None,
                      "epochs": len(losses)}))
    return 0


def cmd_sample(args):
    schedule = _parse_schedule(args.schedule)
    denoiser = _load_denoiser(args.denoiser, schedule)
    guidance = None
    fitness = None
    if args.guidance and args.guidance != "none":
        with open(args.guidance) as fh:
            doc = json.load(fh)
        unknown = set(doc) - {"alpha", "n_samples", "window", "shaping",
                              "eval_mode", "parallel_eval"}
        if unknown:
            raise ConfigError(f"unknown guidance keys {sorted(unknown)}")
        guidance = GuidanceConfig(alpha=float(doc["alpha"]),
                                  n_samples=int(doc.get("n_samples", 30)),
                                  window=tuple(doc.get("window", (schedule.T // 2, 1))),
                                  shaping=doc.get("shaping", "rank_zero_sum"),
                                  eval_mode=doc.get("eval_mode", "direct"),
                                  parallel_eval=args.threads > 1,
                                  max_workers=args.threads)
        if not args.fitness:
            raise ConfigError("--guidance requires --fitness")
    if args.fitness:
        fitness = _fitness_from_args(args)

    os.makedirs(args.out, exist_ok=True)
    kind = {"flow": "grid", "metasurface": "stack"}.get(args.fitness or "", "vector")
    outputs = []
    records = []
    for k in range(args.n):
        traj_rng = RngStream(args.seed, "trajectory").derive(k)
        pop_rng = RngStream(args.seed, "population").derive(k)
        traj = run_denoising(denoiser, schedule, traj_rng, guidance_config=guidance,
                             fitness=fitness, population_rng=pop_rng,
                             record_states=False)
        path = os.path.join(args.out, f"design_{k:04d}.json")
        save_design(path, kind, (traj.x0.size,), traj.x0)
        outputs.append(os.path.abspath(path))
        rec = {"index": k, "path": os.path.basename(path)}
        if fitness is not None:
            rec["objective"] = fitness.evaluate(traj.x0)
        records.append(rec)

    cfg_doc = {"schedule": schedule.config_dict(), "denoiser": args.denoiser,
               "guidance": guidance.to_dict() if guidance else None,
               "fitness": args.fitness, "n": args.n, "seed": args.seed}
    manifest_path = _write_manifest(args.out, "sample", cfg_doc, args.seed, outputs)
    samples_path = os.path.join(args.out, "samples.json")
    with open(samples_path, "w") as fh:
        json.dump(records, fh, indent=2)
    print(json.dumps({"n": args.n, "out": args.out,
                      "manifest": os.path.basename(manifest_path)}))
    return 0


def cmd_experiment(args):
    with open(args.config) as fh:
        doc = json.load(fh)
    cfg = ExperimentConfig.from_dict({**doc, "threads": args.threads})
    results, failures = run_paired_experiment(cfg, out_dir=args.out)
    outputs = [os.path.abspath(os.path.join(args.out, "results.csv"))]
    arm_names = [a["name"] for a in cfg.arms]
    summary_docs = {}
    if len(arm_names) >= 2 and failures < cfg.n_runs:
        base = arm_names[0]
        for other in arm_names[1:]:
            summary = summarize(results, other, base, bins=args.bins)
            stem = f"summary_{other}_vs_{base}"
            jpath = os.path.join(args.out, stem + ".json")
            spath = os.path.join(args.out, stem + ".svg")
            emit_json(summary, jpath)
            emit_svg_histogram(summary, spath)
            outputs += [os.path.abspath(jpath), os.path.abspath(spath)]
            summary_docs[f"{other}_vs_{base}"] = {
                "fraction_improved": summary.fraction_improved,
                "medians": summary.medians,
            }
    _write_manifest(args.out, "experiment", cfg.to_dict(), cfg.base_seed, outputs)
    print(json.dumps({"n_runs": cfg.n_runs, "failures": failures,
                      "summaries": summary_docs}))
    if failures >= cfg.n_runs:
        _log(f"all {cfg.n_runs} runs failed")
        return 3
    return 0


def cmd_eval(args):
    fitness = _fitness_from_args(args)
    paths = []
    if os.path.isdir(args.designs):
        paths = sorted(os.path.join(args.designs, p) for p in os.listdir(args.designs)
                       if p.endswith(".json") and p.startswith("design"))
    elif os.path.exists(args.designs):
        paths = [args.designs]
    print("design,objective")
    for path in paths:
        doc = load_design(path)
        print(f"{os.path.basename(path)},{fitness.evaluate(doc['values']):.12g}")
    return 0


def cmd_plot(args):
    emit_svg_histogram(load_summary(args.summary), args.out,
                       width=args.width, height=args.height)
    print(json.dumps({"out": args.out}))
    return 0


# --- argument parsing ---------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evodiff",
        description="Population-guided diffusion sampling with black-box objectives.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the MLP noise predictor")
    p.add_argument("--data", help="JSON array of design vectors")
    p.add_argument("--synth", metavar="W,H,n", help="generate a synthetic topology dataset")
    p.add_argument("--schedule", help="'T,beta_min,beta_max' or JSON file")
    p.add_argument("--out", required=True, help="output model JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="draw designs from a denoiser, optionally guided")
    p.add_argument("--denoiser", required=True, help="GMM prior or MLP model JSON")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--guidance", default="none", help="guidance config JSON or 'none'")
    p.add_argument("--fitness", help="registered fitness name: " + ", ".join(registered_names()))
    p.add_argument("--fitness-args", help="JSON kwargs for the fitness factory")
    p.add_argument("--schedule", help="'T,beta_min,beta_max' or JSON file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("experiment", help="run a paired guided/unguided study")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("eval", help="batch-evaluate designs under a fitness")
    p.add_argument("--fitness", required=True)
    p.add_argument("--fitness-args", help="JSON kwargs for the fitness factory")
    p.add_argument("--designs", required=True, help="design JSON file or directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="re-plot a summary JSON as an SVG histogram")
    p.add_argument("--summary", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=400)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _log(f"config error: {exc}")
        return 2
    except (TrainingError, SolverError) as exc:
        _log(f"numeric failure: {exc}")
        return 3
    except FitnessEvalError as exc:
        _log(f"fitness evaluation failed: {exc}")
        return 4
    except OSError as exc:
        _log(f"i/o error: {exc}")
        return 5


if __name__ == "__main__":
    sys.exit(main())
