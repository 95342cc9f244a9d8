"""Command-line interface: pack, simulate, train, evolve, search, verify.

Every run verb reads one manifest (a packaged preset or an INI path),
builds the packing, and writes its artifacts into an output directory:
the resolved manifest, loss histories as CSV, stiffness designs as packing
snapshots, and a report.json with headline numbers.
"""

import argparse
import csv
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .adjoint import grad_check
from .engine import ProbeRecord, run_sim, export_trajectory_csv
from .errors import (
    ConfigError,
    ConvergenceError,
    GradientError,
    GranwaveError,
    SimulationError,
)
from .losses import make_dataset, output_intensities, sample_losses
from .manifest import RunManifest, load_preset, preset_names, read_manifest, \
    write_manifest
from .optimize import (
    afpo_evolve,
    experiment_loss_fn,
    init_stiffness,
    random_search,
    train_gd,
)
from .packing import compression_protocol, hexagonal_lattice, save_packing
from .verify import run_checks


def _load_manifest(args) -> RunManifest:
    if getattr(args, "preset", None):
        manifest = load_preset(args.preset)
    elif getattr(args, "config", None):
        manifest = read_manifest(args.config)
    else:
        raise ConfigError("pass --preset NAME or --config PATH")
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        overrides["trials"] = args.trials
    if overrides:
        manifest = replace(manifest, **overrides)
    return manifest


def _out_dir(args, manifest) -> Path:
    out = Path(args.out) if args.out else Path("runs") / manifest.name
    out.mkdir(parents=True, exist_ok=True)
    return out


def build_packing(manifest: RunManifest):
    """Lattice plus compression to the manifest's packing fraction."""
    spec = manifest.lattice_spec()
    geometry, positions = hexagonal_lattice(spec)
    params = manifest.material_params(np.ones(spec.nx * spec.ny))
    packed, packed_params, info = compression_protocol(
        positions, params, geometry, manifest.phi,
        fire_config=manifest.fire_config(), sigma_step=manifest.sigma_step)
    return packed, packed_params, info


def _write_report(out: Path, payload: dict):
    with open(out / "report.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_history_csv(path, rows, columns):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow(["" if row.get(c) is None else row.get(c)
                             for c in columns])


def _history_columns(history):
    columns = ["epoch", "total"]
    labels = sorted({c for row in history for c in row
                     if c.startswith("loss_")})
    return columns + labels + ["grad_norm", "lr"]


def cmd_pack(args):
    manifest = _load_manifest(args)
    out = _out_dir(args, manifest)
    packed, params, info = build_packing(manifest)
    save_packing(out / "packing.txt", packed, params)
    write_manifest(manifest, out / "manifest.ini")
    _write_report(out, {"name": manifest.name, "particles": params.n,
                        **{k: v for k, v in info.items()}})
    print(f"packed {params.n} particles at phi={info['phi']:.6g} "
          f"({info['contacts']} contacts, {info['wall_contacts']} wall, "
          f"residual {info['residual']:.3e}) -> {out}")
    return 0


def _flush_partial_csv(out, label, exc, spec, sim):
    """Write whatever rows a failed run managed to record."""
    partial = getattr(exc, "partial_series", None)
    if partial is None or not partial.size:
        return
    records = [ProbeRecord(particle=p, axis=a, series=partial[:, idx].copy(),
                           dt=sim.dt, stride=sim.record_stride)
               for idx, (p, a) in enumerate(spec.probes)]
    export_trajectory_csv(out / f"trajectory_{label}.csv", records, sim)


def cmd_simulate(args):
    manifest = _load_manifest(args)
    out = _out_dir(args, manifest)
    packed, params, _ = build_packing(manifest)
    spec = manifest.experiment_spec()
    sim = manifest.sim_config()
    theta = init_stiffness(manifest.train_config(), params.n)
    params = replace(params, stiffness=theta)
    samples = make_dataset(spec, sim.n_steps, sim.dt, sim.record_stride)
    series_list = []
    for sample in samples:
        try:
            records = run_sim(sim, params, packed, drives=sample.drives,
                              probes=spec.probes)
        except SimulationError as exc:
            _flush_partial_csv(out, sample.label, exc, spec, sim)
            raise
        export_trajectory_csv(out / f"trajectory_{sample.label}.csv",
                              records, sim)
        series_list.append(np.column_stack([r.series for r in records]))
    report, _ = sample_losses(spec, samples, series_list, sim.n_steps,
                              sim.dt, sim.record_stride)
    summary = {"name": manifest.name, "loss": report.total,
               "partials": report.partials}
    if spec.kind == "waveguide":
        summary["outputs"] = {}
        for sample, series in zip(samples, series_list):
            raw = output_intensities(spec, series)
            total = float(raw.sum())
            shares = raw / total if total > 0 else np.zeros_like(raw)
            summary["outputs"][sample.label] = {
                "intensities": [float(v) for v in raw],
                "shares": [float(v) for v in shares],
            }
    write_manifest(manifest, out / "manifest.ini")
    _write_report(out, summary)
    print(f"loss {report.total:.6g} "
          f"({', '.join(f'{k}={v:.4g}' for k, v in report.partials.items())})"
          f" -> {out}")
    return 0


def cmd_train(args):
    manifest = _load_manifest(args)
    out = _out_dir(args, manifest)
    packed, params, _ = build_packing(manifest)
    spec = manifest.experiment_spec()
    sim = manifest.sim_config()
    train_config = manifest.train_config()
    started = time.time()
    result = train_gd(spec, params, packed, sim, train_config)
    elapsed = time.time() - started
    write_manifest(manifest, out / "manifest.ini")
    _write_history_csv(out / "loss_history.csv", result.history,
                       _history_columns(result.history))
    save_packing(out / "design.txt", packed,
                 replace(params, stiffness=result.theta))
    for epoch, theta in sorted(result.snapshots.items()):
        save_packing(out / f"design_epoch_{epoch}.txt", packed,
                     replace(params, stiffness=theta))
    _write_report(out, {
        "name": manifest.name, "seed": manifest.seed,
        "initial_loss": result.initial_loss,
        "final_loss": result.final_loss,
        "epochs": train_config.epochs, "wall_time_s": elapsed,
    })
    print(f"trained {train_config.epochs} epochs: loss "
          f"{result.initial_loss:.6g} -> {result.final_loss:.6g} "
          f"({elapsed:.1f}s) -> {out}")
    return 0


def cmd_evolve(args):
    manifest = _load_manifest(args)
    out = _out_dir(args, manifest)
    packed, params, _ = build_packing(manifest)
    loss_fn = experiment_loss_fn(manifest.experiment_spec(), params, packed,
                                 manifest.sim_config())
    config = manifest.evo_config()
    started = time.time()
    result = afpo_evolve(loss_fn, params.n, config)
    elapsed = time.time() - started
    write_manifest(manifest, out / "manifest.ini")
    _write_history_csv(out / "loss_history.csv", result.history,
                       ["generation", "best", "front_size", "evaluations"])
    save_packing(out / "design.txt", packed,
                 replace(params, stiffness=result.theta))
    _write_report(out, {
        "name": manifest.name, "seed": manifest.seed,
        "best_loss": result.loss, "generations": config.generations,
        "evaluations": result.evaluations, "wall_time_s": elapsed,
    })
    print(f"evolved {config.generations} generations "
          f"({result.evaluations} evaluations): best loss {result.loss:.6g} "
          f"({elapsed:.1f}s) -> {out}")
    return 0


def cmd_random_search(args):
    manifest = _load_manifest(args)
    out = _out_dir(args, manifest)
    packed, params, _ = build_packing(manifest)
    loss_fn = experiment_loss_fn(manifest.experiment_spec(), params, packed,
                                 manifest.sim_config())
    started = time.time()
    theta, best, losses = random_search(loss_fn, params.n, manifest.trials,
                                        seed=manifest.seed)
    elapsed = time.time() - started
    write_manifest(manifest, out / "manifest.ini")
    _write_history_csv(out / "loss_history.csv",
                       [{"trial": i, "loss": v}
                        for i, v in enumerate(losses)],
                       ["trial", "loss"])
    save_packing(out / "design.txt", packed, replace(params, stiffness=theta))
    _write_report(out, {
        "name": manifest.name, "seed": manifest.seed, "best_loss": best,
        "median_loss": float(np.median(losses)), "trials": manifest.trials,
        "wall_time_s": elapsed,
    })
    print(f"searched {manifest.trials} designs: best {best:.6g}, median "
          f"{float(np.median(losses)):.6g} ({elapsed:.1f}s) -> {out}")
    return 0


def cmd_grad_check(args):
    manifest = _load_manifest(args)
    packed, params, _ = build_packing(manifest)
    theta = init_stiffness(manifest.train_config(), params.n)
    components = None
    if args.components is not None:
        components = [int(tok) for tok in args.components.split(",")]
    result = grad_check(manifest.experiment_spec(),
                        replace(params, stiffness=theta), packed,
                        manifest.sim_config(), components=components)
    for idx, adj, fd, rel in result["rows"]:
        print(f"k[{idx}] adjoint={adj:+.8e} fd={fd:+.8e} rel={rel:.3e}")
    print(f"max rel error {result['max_rel_error']:.3e}")
    return 0


def cmd_verify(args):
    names = args.checks if args.checks else None
    try:
        results = run_checks(names)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    failed = 0
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
        failed += 0 if r.passed else 1
    if failed:
        print(f"{failed} of {len(results)} checks failed")
        return 1
    print(f"all {len(results)} checks passed")
    return 0


def cmd_presets(args):
    for name in preset_names():
        print(name)
    return 0


def _add_common(sub, with_seed=True):
    sub.add_argument("--preset", help="packaged preset name")
    sub.add_argument("--config", help="path to a manifest INI")
    sub.add_argument("--out", help="output directory (default runs/<name>)")
    if with_seed:
        sub.add_argument("--seed", type=int, help="override the manifest seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="granwave",
        description="Differentiable granular-crystal design toolkit")
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("pack", help="build and relax a packing")
    _add_common(sub, with_seed=False)
    sub.set_defaults(func=cmd_pack)

    sub = subs.add_parser("simulate", help="run the experiment's drive cases")
    _add_common(sub)
    sub.set_defaults(func=cmd_simulate)

    sub = subs.add_parser("train", help="gradient-based stiffness training")
    _add_common(sub)
    sub.set_defaults(func=cmd_train)

    sub = subs.add_parser("evolve", help="age-fitness Pareto optimization")
    _add_common(sub)
    sub.set_defaults(func=cmd_evolve)

    sub = subs.add_parser("random-search", help="uniform random baseline")
    _add_common(sub)
    sub.add_argument("--trials", type=int, help="override the trial count")
    sub.set_defaults(func=cmd_random_search)

    sub = subs.add_parser("grad-check",
                          help="adjoint vs finite-difference gradients")
    _add_common(sub)
    sub.add_argument("--components",
                     help="comma-separated stiffness indices (default all)")
    sub.set_defaults(func=cmd_grad_check)

    sub = subs.add_parser("verify", help="run built-in correctness checks")
    sub.add_argument("checks", nargs="*",
                     help="check names (default: all)")
    sub.set_defaults(func=cmd_verify)

    sub = subs.add_parser("presets", help="list packaged presets")
    sub.set_defaults(func=cmd_presets)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return 4
    except (SimulationError, GradientError) as exc:
        print(f"simulation failure: {exc}", file=sys.stderr)
        return 3
    except GranwaveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        # validation errors from dataclass constructors (bad ports, shapes)
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
