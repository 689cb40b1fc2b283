"""Command-line driver: parse a sectioned config and run, sweep, refine or verify.

Config schema (INI; every key optional unless marked)::

    [grid]
    cells = 256              ; required, one integer per axis
    lengths = 1.0
    gamma_faces = x-, x+

    [model]
    gamma, delta, p, alpha, beta, eta_tilde, epsilon, lame_mu,
    lame_lambda, eigenstrain_slope = <float>
    phi_kind = quadratic     ; or linear

    [minimizer]
    el_tolerance, max_outer, max_inner, armijo_c, armijo_shrink,
    accept_unconverged

    [run]
    horizon = 1.0            ; required
    steps = 16
    c0 = constant 0          ; constant v | cosine amp mode | random amp mean | file path
    z0 = constant 1          ; same presets plus: dip depth width
    load = none              ; none | stretch
    load_times = 0, 1
    load_amplitudes = 0, 0
    load_axis = 0
    snapshot_stride = 0

    [sweep]
    eps = 1, 0.5, 0.25, 0.125, 0.0625
    m_list = 8, 16, 32, 64

Exit codes: 0 success, 2 invalid input, 3 step failure, 4 failed check.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import os
import shutil
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import grid as g
from .errors import ParseError, StepFailed, ValidationError
from .evolution import (
    APRIORI_EPS,
    APRIORI_M,
    RunConfig,
    constant_load,
    diagnostics_from_trajectory,
    energy_inequality_summary,
    load_trajectory,
    refinement_study,
    run,
    save_trajectory,
    stretch_load,
    viscosity_sweep,
)
from .material import ModelParams, validate_params
from .minimizer import MinimizerConfig
from .verification import weak_solution_report

EXIT_OK, EXIT_INVALID, EXIT_STEP, EXIT_CHECK = 0, 2, 3, 4

_SECTIONS = {
    "grid": {"cells", "lengths", "gamma_faces"},
    "model": {f.name for f in fields(ModelParams)},
    "minimizer": {f.name for f in fields(MinimizerConfig)},
    "run": {
        "horizon", "steps", "c0", "z0", "load", "load_times", "load_amplitudes",
        "load_axis", "snapshot_stride",
    },
    "sweep": {"eps", "m_list"},
}


@dataclass
class RunManifest:
    config_path: str
    out_dir: str
    command: str
    seed: int = 0
    threads: int = 1


@dataclass
class ParsedConfig:
    run: RunConfig
    minimizer: MinimizerConfig
    params: ModelParams
    eps: list
    m_list: list
    snapshot_stride: int
    text: str


def _key_lines(text):
    """Map ``(section, key)`` to the 1-based line where it is set."""
    out, section = {}, None
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
        elif section and s and s[0] not in "#;" and ("=" in s or ":" in s):
            key = s.split("=", 1)[0].split(":", 1)[0].strip().lower()
            out[(section, key)] = lineno
    return out


def _floats(value):
    return [float(v) for v in value.replace(",", " ").split()]


def _field_preset(spec, grid, seed, base_dir, name):
    words = spec.split()
    kind, args = words[0].lower(), words[1:]
    x = grid.cell_centers()[0]
    length = grid.lengths[0]
    if kind == "constant":
        return np.full(grid.shape, float(args[0]))
    if kind == "cosine":
        amp = float(args[0])
        mode = float(args[1]) if len(args) > 1 else 1.0
        return amp * np.cos(2 * np.pi * mode * x / length)
    if kind == "random":
        amp = float(args[0])
        mean = float(args[1]) if len(args) > 1 else 0.0
        rng = np.random.default_rng(seed)
        return mean + amp * rng.uniform(-1.0, 1.0, grid.shape)
    if kind == "dip":
        depth, width = float(args[0]), float(args[1])
        return 1.0 - depth * np.exp(-(((x - 0.5 * length) / width) ** 2))
    if kind == "file":
        path = os.path.join(base_dir, " ".join(args))
        values, header = g.read_snapshot(path)
        if tuple(header["cells"]) != grid.shape or values.shape != grid.shape:
            raise ValidationError(f"{name} file does not match the grid")
        return values
    raise ValueError(f"unknown field preset {kind!r}")


def parse_config(text, seed=0, base_dir="."):
    """Parse and validate a config document; returns :class:`ParsedConfig`."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError("key outside any section", exc.lineno) from exc
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ParseError("malformed line", lineno) from exc
    except configparser.DuplicateOptionError as exc:
        raise ParseError(f"duplicate key {exc.option!r}", exc.lineno) from exc
    except configparser.DuplicateSectionError as exc:
        raise ParseError(f"duplicate section {exc.section!r}", exc.lineno) from exc
    lines = _key_lines(text)

    for section in cp.sections():
        if section not in _SECTIONS:
            lineno = next(
                (i for i, l in enumerate(text.splitlines(), 1) if l.strip() == f"[{section}]"), None
            )
            raise ParseError(f"unknown section [{section}]", lineno)
        for key in cp[section]:
            if key not in _SECTIONS[section]:
                raise ParseError(f"unknown key {key!r} in [{section}]", lines.get((section, key)))

    def get(section, key, conv, default):
        if not cp.has_option(section, key):
            return default
        raw = cp.get(section, key)
        try:
            return conv(raw)
        except (ValueError, TypeError, IndexError) as exc:
            raise ParseError(
                f"bad value {raw!r} for [{section}] {key}: {exc}", lines.get((section, key))
            ) from exc

    def require(section, key):
        if not cp.has_option(section, key):
            raise ParseError(f"missing required key [{section}] {key}")

    require("grid", "cells")
    require("run", "horizon")

    cells = get("grid", "cells", lambda v: tuple(int(c) for c in _floats(v)), None)
    lengths = get("grid", "lengths", _floats, [1.0])
    faces = get(
        "grid", "gamma_faces",
        lambda v: tuple(f.strip() for f in v.replace(",", " ").split()), ("x-",),
    )
    try:
        grid = g.GridSpec.uniform(cells, lengths if len(lengths) > 1 else lengths[0], faces)
    except ValueError as exc:
        raise ValidationError(f"invalid grid: {exc}") from exc

    model = {}
    for f in fields(ModelParams):
        conv = str if f.name == "phi_kind" else float
        val = get("model", f.name, conv, None)
        if val is not None:
            model[f.name] = val.strip() if isinstance(val, str) else val
    params = ModelParams(**model)
    validate_params(params, grid.dim)

    mcfg = {}
    for f in fields(MinimizerConfig):
        if f.name == "accept_unconverged":
            conv = lambda v: v.strip().lower() in ("1", "true", "yes", "on")  # noqa: E731
        elif f.name.startswith("max_"):
            conv = int
        else:
            conv = float
        val = get("minimizer", f.name, conv, None)
        if val is not None:
            mcfg[f.name] = val
    try:
        min_cfg = MinimizerConfig(**mcfg)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc

    horizon = get("run", "horizon", float, None)
    steps = get("run", "steps", int, 16)
    if not horizon > 0:
        raise ValidationError("horizon T > 0 violated")
    if steps < 1:
        raise ValidationError("steps M >= 1 violated")

    def preset(key, default):
        spec = cp.get("run", key) if cp.has_option("run", key) else default
        try:
            return _field_preset(spec, grid, seed, base_dir, key)
        except (ValueError, IndexError, OSError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ParseError(f"bad field preset {spec!r}: {exc}", lines.get(("run", key))) from exc

    c0 = preset("c0", "constant 0")
    z0 = preset("z0", "constant 1")
    if np.any(z0 < 0) or np.any(z0 > 1):
        raise ValidationError(
            f"initial damage must satisfy 0 <= z0 <= 1; found range [{z0.min():g}, {z0.max():g}]"
        )

    kind = get("run", "load", lambda v: v.strip().lower(), "none")
    if kind == "none":
        load = constant_load(grid)
    elif kind == "stretch":
        times = get("run", "load_times", _floats, [0.0, horizon])
        amps = get("run", "load_amplitudes", _floats, [0.0] * len(times))
        axis = get("run", "load_axis", int, 0)
        if len(times) != len(amps):
            raise ParseError("load_times and load_amplitudes differ in length",
                             lines.get(("run", "load_amplitudes")))
        try:
            load = stretch_load(grid, times, amps, axis)
        except (ValueError, IndexError) as exc:
            raise ValidationError(f"invalid load: {exc}") from exc
    else:
        raise ParseError(f"unknown load {kind!r}", lines.get(("run", "load")))

    stride = get("run", "snapshot_stride", int, 0)
    eps = get("sweep", "eps", _floats, [1.0, 0.5, 0.25, 0.125, 0.0625])
    m_list = get("sweep", "m_list", lambda v: [int(m) for m in _floats(v)], [8, 16, 32, 64])

    run_cfg = RunConfig(horizon, steps, grid, params, c0, z0, load)
    return ParsedConfig(run_cfg, min_cfg, params, eps, m_list, stride, text)


# --------------------------------------------------------------------------
# subcommands


def _write_snapshots(traj, out_dir, stride):
    if stride <= 0:
        return
    snap = os.path.join(out_dir, "snapshots")
    os.makedirs(snap, exist_ok=True)
    for m, res in enumerate(traj.nodes):
        if m % stride and m != len(traj.nodes) - 1:
            continue
        q = res.state
        g.write_snapshot(os.path.join(snap, f"c_{m:05d}.txt"), q.c, traj.grid, "c")
        g.write_snapshot(os.path.join(snap, f"z_{m:05d}.txt"), q.z, traj.grid, "z")
        g.write_snapshot(os.path.join(snap, f"mu_{m:05d}.txt"), res.mu, traj.grid, "mu")
        g.write_snapshot(os.path.join(snap, f"u_{m:05d}.txt"), q.u, traj.grid, "u", "node")


def cmd_run(parsed, manifest, stride):
    out = manifest.out_dir
    with open(os.path.join(out, "config.ini"), "w") as fh:
        fh.write(parsed.text)
    try:
        traj, diag = run(parsed.run, parsed.minimizer)
        code = EXIT_OK
    except StepFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.partial is None:
            return EXIT_STEP
        traj, diag = exc.partial
        code = EXIT_STEP
    diag.to_csv(os.path.join(out, "diagnostics.csv"))
    save_trajectory(traj, os.path.join(out, "trajectory.npz"))
    _write_snapshots(traj, out, stride)
    if code == EXIT_OK:
        s = energy_inequality_summary(traj, diag)
        print(f"steps={traj.n_steps} energy={diag.rows[-1]['total']:.10g} "
              f"slack_min={s.coarse_min:.3e} precise_min={s.precise_min:.3e}")
    return code


def _table_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([v if isinstance(v, str) else f"{v:.17g}" for v in r])
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def cmd_sweep(parsed, manifest, eps):
    try:
        rep = viscosity_sweep(parsed.run, eps, parsed.minimizer, manifest.threads, keep=True)
    except StepFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STEP
    names = list(APRIORI_EPS) + ["eps_grad_u4"]
    _table_csv(
        os.path.join(manifest.out_dir, "sweep.csv"),
        ["eps"] + names,
        [[e] + [rep.quantities[e][k] for k in names] for e in rep.eps],
    )
    for e, (traj, diag) in rep.runs.items():
        diag.to_csv(os.path.join(manifest.out_dir, f"diagnostics_eps_{e:.6g}.csv"))
    for k, ok in rep.bounded.items():
        print(f"bounded {k}: {str(ok).lower()}")
    print(f"reg_decreasing: {str(rep.reg_decreasing).lower()}")
    return EXIT_OK if rep.all_bounded and rep.reg_decreasing else EXIT_CHECK


def cmd_refine(parsed, manifest, m_list):
    try:
        rep = refinement_study(parsed.run, m_list, parsed.minimizer, manifest.threads)
    except StepFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STEP
    rows = []
    for m, kappa in zip(rep.steps, rep.kappa_margins):
        s = rep.inequality[m]
        rows.append([m] + [rep.ratios[m][k] for k in APRIORI_M] + [s.coarse_min, s.precise_min, kappa])
    _table_csv(
        os.path.join(manifest.out_dir, "refine.csv"),
        ["steps"] + list(APRIORI_M) + ["slack_min", "precise_min", "kappa_margin"],
        rows,
    )
    for k, v in rep.band.items():
        print(f"band {k}: {v:.6g}")
    ok = rep.within_band and all(rep.inequality[m].passed() for m in rep.steps)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_verify(parsed, manifest):
    out = manifest.out_dir
    path = os.path.join(out, "trajectory.npz")
    if not os.path.exists(path):
        print(f"error: no trajectory in {out}", file=sys.stderr)
        return EXIT_INVALID
    cfg = parsed.run
    traj = load_trajectory(path, cfg.grid, cfg.params, cfg.load)
    diag = diagnostics_from_trajectory(traj)
    report = weak_solution_report(traj, diag, parsed.minimizer.el_tolerance, seed=manifest.seed)
    report.to_text(os.path.join(out, "report.txt"))
    report.to_csv(os.path.join(out, "report.csv"))
    print(report.to_text(), end="")
    return EXIT_OK if report.passed else EXIT_CHECK


def build_parser():
    ap = argparse.ArgumentParser(
        prog="cldamage",
        description="Viscous Cahn-Larche system with unidirectional damage.",
    )
    ap.add_argument("command", choices=["run", "sweep", "refine", "verify"])
    ap.add_argument("--config", help="INI config (verify defaults to OUT/config.ini)")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--eps", help="comma-separated viscosities for sweep")
    ap.add_argument("--m-list", help="comma-separated step counts for refine")
    ap.add_argument("--snapshot-stride", type=int, default=None)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    config_path = args.config
    if config_path is None:
        if args.command != "verify":
            print("error: --config is required", file=sys.stderr)
            return EXIT_INVALID
        config_path = os.path.join(args.out, "config.ini")
    manifest = RunManifest(config_path, args.out, args.command, args.seed, max(1, args.threads))
    try:
        with open(config_path) as fh:
            text = fh.read()
        parsed = parse_config(text, seed=args.seed, base_dir=os.path.dirname(config_path) or ".")
        eps = _floats(args.eps) if args.eps else parsed.eps
        m_list = [int(m) for m in _floats(args.m_list)] if args.m_list else parsed.m_list
    except (ParseError, ValidationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    os.makedirs(args.out, exist_ok=True)
    if args.command == "run":
        stride = parsed.snapshot_stride if args.snapshot_stride is None else args.snapshot_stride
        return cmd_run(parsed, manifest, stride)
    if args.command == "sweep":
        try:
            return cmd_sweep(parsed, manifest, eps)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INVALID
    if args.command == "refine":
        return cmd_refine(parsed, manifest, m_list)
    if args.config is not None:
        dst = os.path.join(args.out, "config.ini")
        if not os.path.exists(dst):
            shutil.copyfile(args.config, dst)
    return cmd_verify(parsed, manifest)


if __name__ == "__main__":
    sys.exit(main())
