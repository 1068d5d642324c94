"""Unified command-line entry point.

Exit codes: 0 success (checks passed or report-only output), 1 usage,
2 validation (bad config or parameters), 3 runtime fault, 4 check failed.
Environment variables LAYERKAC_<SECTION>__<KEY> override config file values.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .coarse import CoarseScales, FrameError, compute_fields, contour_stats, \
    extract_contours, extract_stripes
from .config import (ENV_PREFIX, ResolvedRun, parse_config, read_manifest,
                     resolved_from_manifest, write_manifest)
from .meanfield import solve_mbeta
from .model import (Lattice, ModelParams, SpinConfig, ValidationError,
                    build_kernel)
from .oracle import (BlockEnv, ConstraintSpec, OracleFault, check_deviation_bound,
                     check_fkg_sandwich, check_holley, check_interpolation,
                     check_window_identity, compile_volume, contour_weight,
                     enumerate_z, transfer_matrix_logz)
from . import bounds as bounds_mod
from . import experiments, functional, mc, spinio

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3
EXIT_CHECK_FAILED = 4

MEASUREMENT_SCHEMA = "lk-measurements-v1"
FIELDS_SCHEMA = "lk-fields-v1"


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (frozenset, set, tuple)):
        return sorted(obj) if isinstance(obj, (frozenset, set)) else list(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _print_json(payload: dict) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True, default=_json_default))


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def _run_dir(resolved: ResolvedRun, override) -> Path:
    if override:
        out = Path(override)
    else:
        stamp = time.strftime("%Y%m%d-%H%M%S")
        out = Path(resolved.out_dir) / f"{stamp}-{resolved.config_hash}"
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommand handlers


def cmd_meanfield(args) -> int:
    if args.beta <= 0:
        raise ValidationError(f"--beta {args.beta}: must be positive")
    sol = solve_mbeta(args.beta)
    print(f"m_beta = {sol.m:.15g}")
    print(f"residual = {sol.residual:.3g}")
    return EXIT_OK


def _simulate_into(resolved: ResolvedRun, out: Path) -> None:
    t0 = time.monotonic()
    csv_path = out / "measurements.csv"
    outputs = [csv_path]
    with open(csv_path, "w", newline="") as fh:
        fh.write(f"# schema={MEASUREMENT_SCHEMA}\n")
        w = csv.writer(fh)
        w.writerow(["replica", "sweep", "channel", "key", "value"])
        for replica in range(resolved.replicas):
            result = mc.run(resolved.run_spec(replica))
            for rec in result.records:
                w.writerow([replica, rec.sweep, rec.channel, rec.key,
                            f"{rec.value:.12g}"])
            snap = out / f"final_r{replica}.bin"
            spinio.write_spins(snap, result.final, resolved.params)
            outputs.append(snap)
    write_manifest(resolved, out / "manifest.json", outputs=outputs,
                   wallclock_s=time.monotonic() - t0)


def cmd_simulate(args) -> int:
    resolved = parse_config(args.config)
    out = _run_dir(resolved, args.out)
    _simulate_into(resolved, out)
    print(out)
    return EXIT_OK


def cmd_coarse_grain(args) -> int:
    resolved = parse_config(args.config)
    params = resolved.params
    cfg = spinio.read_spins(args.input, params)
    scales = CoarseScales.from_params(params)
    m_beta = solve_mbeta(params.beta).m
    fields = compute_fields(cfg, scales, m_beta)
    out = _run_dir(resolved, args.out)

    fcsv = out / "fields.csv"
    with open(fcsv, "w", newline="") as fh:
        fh.write(f"# schema={FIELDS_SCHEMA}\n")
        w = csv.writer(fh)
        w.writerow(["x", "layer", "block_avg", "eta", "theta", "big_theta",
                    "phase"])
        H, L = cfg.spins.shape
        for i in range(H):
            for x in range(L):
                w.writerow([x, i, f"{fields.sigma_block[i, x]:.10g}",
                            fields.eta[i, x], fields.theta[i, x],
                            fields.big_theta[i, x], fields.phase[i, x]])
    outputs = [fcsv]

    census: dict = {"schema": experiments.CENSUS_SCHEMA, "input": str(args.input),
                    "contours": []}
    status = EXIT_OK
    if args.fields_only:
        census["status"] = "fields-only"
    else:
        try:
            contours = extract_contours(fields)
        except FrameError as exc:
            census["status"] = "frame-violation"
            census["diagnostic"] = str(exc)
            status = EXIT_VALIDATION
            print(f"frame violation: {exc}", file=sys.stderr)
        else:
            census["status"] = "ok"
            for c in contours:
                stats = contour_stats(c, fields)
                census["contours"].append({
                    "anchor": list(c.anchor),
                    "sign": c.sign,
                    "support_rle": _rle_support(c.support),
                    "support_size": stats.support_size,
                    "n0": stats.n0,
                    "stripe_sites": stats.stripe_site_total,
                    "stripes": [{"layer_lower": s.layer_lower,
                                 "k_start": s.k_start, "k_end": s.k_end,
                                 "orientation": s.orientation, "size": s.size}
                                for s in extract_stripes(c, fields)],
                    "interiors": [{"sign": it.sign, "blocks": len(it.region)}
                                  for it in c.interiors],
                })
    cjson = out / "census.json"
    cjson.write_text(json.dumps(census, indent=2, sort_keys=True,
                                default=_json_default) + "\n")
    outputs.append(cjson)
    write_manifest(resolved, out / "manifest.json", outputs=outputs,
                   status="completed" if status == EXIT_OK else "aborted")
    print(out)
    return status


def _rle_support(support) -> list:
    """Per-layer run-length encoding [layer, k_start, k_len] of block columns."""
    by_layer: dict = {}
    for (K, i) in support:
        by_layer.setdefault(i, []).append(K)
    runs = []
    for i in sorted(by_layer):
        ks = sorted(by_layer[i])
        start = prev = ks[0]
        for k in ks[1:]:
            if k == prev + 1:
                prev = k
                continue
            runs.append([i, start, prev - start + 1])
            start = prev = k
        runs.append([i, start, prev - start + 1])
    return runs


def _boundary_from(desc: dict, lattice: Lattice) -> SpinConfig:
    kind = desc.get("boundary", "plus")
    if kind == "random":
        rng = np.random.default_rng(int(desc.get("boundary_seed", 0)))
        cfg = SpinConfig.random(lattice, rng)
    elif kind in ("plus", "minus"):
        cfg = SpinConfig.constant(lattice, 1 if kind == "plus" else -1)
    else:
        raise ValidationError(f"boundary={kind!r}: expected plus, minus, "
                              "or random")
    for (x, i) in desc.get("flip_sites", ()):
        cfg.spins[int(i), int(x)] *= -1
    return cfg


def _scales_from(desc: dict, params: ModelParams) -> CoarseScales:
    if "scales" in desc:
        s = desc["scales"]
        return CoarseScales(ell_minus=int(s["ell_minus"]),
                            ell_plus=int(s["ell_plus"]),
                            zeta=float(s["zeta"]))
    return CoarseScales.from_params(params)


def _params_from(desc: dict) -> ModelParams:
    kwargs = {"beta": float(desc["beta"]), "gamma": float(desc["gamma"])}
    for key in ("A", "alpha", "a", "epsilon_override"):
        if key in desc and desc[key] is not None:
            kwargs[key] = float(desc[key])
    return ModelParams(**kwargs)


def _lattice_from(desc: dict) -> Lattice:
    return Lattice(int(desc["L"]), int(desc["H"]),
                   desc.get("horizontal_bc", "periodic"),
                   desc.get("vertical_bc", "periodic"))


def cmd_oracle(args) -> int:
    desc = _load_json(args.config)
    params = _params_from(desc)
    lattice = _lattice_from(desc)
    kernel = build_kernel(params)
    name = args.check

    if name == "equivalence":
        n = lattice.L * lattice.H
        if n > 24:
            raise ValidationError(f"{n} spins exceed the 24-spin "
                                  "equivalence fixture cap")
        boundary = SpinConfig.constant(lattice, 1)
        free = [(x, i) for i in range(lattice.H) for x in range(lattice.L)]
        enum = enumerate_z(compile_volume(params, lattice, kernel, boundary,
                                          free))
        tm = transfer_matrix_logz(params, lattice, kernel)
        rel = abs(enum.log_z - tm) / max(1.0, abs(tm))
        report = {"check": name,
                  "status": "pass" if rel < 1e-10 else "fail",
                  "computed": {"enum_log_z": enum.log_z, "tm_log_z": tm,
                               "rel_diff": rel},
                  "bounds": {"tolerance": 1e-10}}
        _print_json(report)
        return EXIT_OK if report["status"] == "pass" else EXIT_CHECK_FAILED

    m_beta = solve_mbeta(params.beta).m
    scales = _scales_from(desc, params)
    boundary = _boundary_from(desc, lattice)

    if name == "window-identity":
        x, i = desc["site"]
        report = check_window_identity(params, lattice, kernel, boundary,
                                       (int(x), int(i)), scales, m_beta,
                                       eta_sign=int(desc.get("eta_sign", 1)))
    elif name in ("holley", "fkg"):
        env = BlockEnv(params=params, lattice=lattice, boundary=boundary,
                       layer=int(desc["layer"]), k_block=int(desc["k_block"]),
                       scales=scales, m_beta=m_beta)
        M = float(desc.get("M", 3.0))
        kappa = desc.get("kappa")
        kappa = None if kappa is None else float(kappa)
        if name == "holley":
            report = check_holley(env, M, kappa=kappa)
        else:
            report = check_fkg_sandwich(env, M, kappa=kappa)
    elif name == "deviation":
        env = BlockEnv(params=params, lattice=lattice, boundary=boundary,
                       layer=int(desc["layer"]), k_block=int(desc["k_block"]),
                       scales=scales, m_beta=m_beta)
        report = check_deviation_bound(env, [float(b) for b in desc["b_values"]])
    elif name == "interpolation":
        start, length = desc["interval"]
        interval = list(range(int(start), int(start) + int(length)))
        report = check_interpolation(params, lattice, kernel, boundary,
                                     interval, int(desc["layer_lower"]),
                                     scales, m_beta,
                                     constrain=bool(desc.get("constrain", True)))
    elif name == "contour-weight":
        layer = int(desc.get("layer", 1))
        free = [(x, layer) for x in range(lattice.L)]
        lm = scales.ell_minus
        den_targets = {(k, layer): 1 for k in range(lattice.L // lm)}
        num_targets = dict(den_targets)
        for k, target in desc["defects"]:
            num_targets[(int(k), layer)] = int(target)
        cw = contour_weight(params, lattice, kernel, boundary, free,
                            ConstraintSpec(eta_targets=num_targets),
                            ConstraintSpec(eta_targets=den_targets),
                            scales, m_beta)
        report = {"check": name, "status": "pass" if cw.log_w <= 0 else "fail",
                  "computed": {"log_w": cw.log_w, "w": cw.w,
                               "num_log_z": cw.numerator.log_z,
                               "den_log_z": cw.denominator.log_z,
                               "num_count": cw.numerator.count,
                               "den_count": cw.denominator.count}}
        _print_json(report)
        return EXIT_OK if report["status"] == "pass" else EXIT_CHECK_FAILED
    else:
        raise ValidationError(f"unknown oracle check {name!r}")

    _print_json(asdict(report))
    return EXIT_CHECK_FAILED if report.status == "fail" else EXIT_OK


def _conditioning_from(desc) -> object:
    if desc is None:
        return None
    if isinstance(desc, (int, float)):
        return float(desc)
    kind = desc.get("type")
    if kind == "constant":
        return functional.constant_conditioning(float(desc["value"]))
    if kind == "step":
        return functional.step_conditioning(float(desc["left"]),
                                            float(desc["right"]),
                                            int(desc["split"]))
    raise ValidationError(f"conditioning type {kind!r}: expected constant "
                          "or step")


def cmd_functional(args) -> int:
    desc = _load_json(args.config)
    beta = float(desc["beta"])
    gamma = float(desc["gamma"])
    grid = functional.FunctionalGrid.build(gamma, desc.get("spacing"))
    m_beta = solve_mbeta(beta).m

    if args.mode == "minimize":
        domain = functional.Domain(
            intervals=tuple((int(s), int(n)) for s, n in desc["intervals"]))
        windows = None
        if desc.get("eta") is not None:
            windows = functional.WindowSet.from_eta(
                desc["eta"], float(desc["ell_minus"]), grid, m_beta,
                float(desc["zeta"]))
        problem = functional.build_problem(
            grid, domain, beta, _conditioning_from(desc.get("conditioning")),
            windows, periodic=bool(desc.get("periodic", False)))
        res = functional.minimize(problem, m_beta,
                                  rng_seed=int(desc.get("rng_seed", 0)))
        payload = {"mode": "minimize", "value": res.value,
                   "converged": res.converged, "iterations": res.iterations,
                   "pg_norm": res.pg_norm, "seed_values": res.seed_values,
                   "error_scale": res.error_scale,
                   "excess": functional.excess_energy(problem, res.values,
                                                      m_beta),
                   "m_beta": m_beta}
        values = res.values
        positions = domain.positions
    elif args.mode == "decay":
        rep = functional.check_decay(
            grid, beta, m_beta, float(desc["zeta"]), float(desc["ell_minus"]),
            int(desc["n_windows"]), float(desc["cond_left"]),
            float(desc["cond_right"]))
        payload = {"mode": "decay", "mid_deviation": rep.mid_deviation,
                   "edge_deviation": rep.edge_deviation,
                   "omega_fitted": rep.omega_fitted, "m_beta": m_beta}
        values = rep.values
        positions = np.arange(values.size)
    else:
        rep = functional.excess_bound_check(
            grid, beta, m_beta, float(desc["zeta"]), float(desc["ell_minus"]),
            desc["eta"], float(desc["cond_left"]), float(desc["cond_right"]),
            c_grid=tuple(desc.get("c_grid", (0.01, 0.05, 0.1, 0.5, 1.0))))
        payload = {"mode": "excess", "excess": rep.excess,
                   "n_sign_changes": rep.n_sign_changes,
                   "n_zero_windows": rep.n_zero_windows,
                   "rate_unit": rep.rate_unit, "largest_c": rep.largest_c,
                   "margins": {str(k): v for k, v in rep.margins.items()},
                   "m_beta": m_beta}
        values = rep.values
        positions = np.arange(values.size)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            fh.write("# schema=lk-profile-v1\n")
            w = csv.writer(fh)
            w.writerow(["cell", "position", "value"])
            for idx, (p, v) in enumerate(zip(positions, values)):
                w.writerow([idx, int(p), f"{v:.12g}"])
    _print_json(payload)
    return EXIT_OK


def cmd_bounds(args) -> int:
    constants = bounds_mod.BoundConstants(c=args.c, ctilde=args.ctilde,
                                          alpha=args.alpha, a=args.a,
                                          big_a=args.A)
    if args.mode == "check":
        if args.gamma is None:
            raise ValidationError("bounds check requires --gamma")
        rep = bounds_mod.peierls_sum_check(args.gamma, constants)
        _print_json(asdict(rep))
        return EXIT_OK if rep.passed else EXIT_CHECK_FAILED
    rep = bounds_mod.find_gamma0(constants, lo=args.lo, hi=args.hi,
                                 n_grid=args.n_grid)
    payload = asdict(rep)
    payload["scan"] = [[g, s] for (g, s) in rep.scan]
    _print_json(payload)
    return EXIT_OK if rep.status == "ok" else EXIT_CHECK_FAILED


def _sweep_lists(path) -> dict:
    import configparser

    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read_string(Path(path).read_text(), source=str(path))
    if not cp.has_section("sweep"):
        return {}
    out = {}
    for key, raw in cp["sweep"].items():
        out[key] = [s.strip() for s in raw.split(",") if s.strip()]
    return out


def cmd_sweep(args) -> int:
    resolved = parse_config(args.config, extra_sections=("sweep",))
    lists = _sweep_lists(args.config)
    out = _run_dir(resolved, args.out)
    t0 = time.monotonic()
    p = resolved.params
    if args.scenario == "magnetization":
        gammas = [float(g) for g in lists.get("gammas", [p.gamma])]
        betas = [float(b) for b in lists.get("betas", [p.beta])]
        bcs = lists.get("bcs", ["plus", "minus"])
        cells = [experiments.MagCell(
            beta=b, gamma=g, bc=bc, L=resolved.lattice.L,
            H=resolved.lattice.H, sweeps=resolved.sweeps,
            burn_in=resolved.burn_in, replicas=resolved.replicas,
            seed=resolved.seed, A=p.A, alpha=p.alpha, a=p.a)
            for b in betas for g in gammas for bc in bcs]
        csv_path = out / "magnetization.csv"
        experiments.scenario_magnetization(
            cells, out_csv=csv_path, budget_updates=args.budget,
            workers=args.workers)
    else:
        spec = experiments.SymmetrySpec(
            beta=p.beta, gamma=p.gamma, L=resolved.lattice.L,
            H=resolved.lattice.H, sweeps=resolved.sweeps,
            burn_in=resolved.burn_in, replicas=resolved.replicas,
            seed=resolved.seed, A=p.A, alpha=p.alpha, a=p.a)
        csv_path = out / "symmetry.csv"
        rep = experiments.scenario_periodic_symmetry(
            spec, out_csv=csv_path, workers=args.workers)
        _print_json({"mean": rep.mean, "se": rep.se, "skewness": rep.skewness,
                     "dip": rep.dip})
    write_manifest(resolved, out / "manifest.json", outputs=[csv_path],
                   wallclock_s=time.monotonic() - t0,
                   extra={"scenario": args.scenario})
    print(out)
    return EXIT_OK


def cmd_census(args) -> int:
    resolved = parse_config(args.config)
    p = resolved.params
    out = _run_dir(resolved, args.out)
    t0 = time.monotonic()
    spec = experiments.CensusSpec(
        beta=p.beta, gamma=p.gamma, L=resolved.lattice.L,
        H=resolved.lattice.H, sweeps=resolved.sweeps,
        burn_in=resolved.burn_in, measure_every=resolved.measure_every,
        seed=resolved.seed, A=p.A, alpha=p.alpha, a=p.a)
    jpath = out / "census.json"
    rep = experiments.scenario_contour_census(spec, out_json=jpath)
    write_manifest(resolved, out / "manifest.json", outputs=[jpath],
                   wallclock_s=time.monotonic() - t0,
                   extra={"scenario": "census"})
    _print_json({"n_snapshots": rep.n_snapshots, "n_contours": rep.n_contours,
                 "frame_violations": rep.frame_violations,
                 "contour_density": rep.contour_density,
                 "probe_frequency": rep.probe_frequency})
    print(out)
    return EXIT_OK


def cmd_replay(args) -> int:
    resolved = resolved_from_manifest(read_manifest(args.manifest))
    out = _run_dir(resolved, args.out)
    _simulate_into(resolved, out)
    print(out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="layerkac",
        description="Layered long-range Ising simulator and verification "
                    "toolkit",
        epilog=f"Config values can be overridden via environment variables "
               f"{ENV_PREFIX}<SECTION>__<KEY>, e.g. {ENV_PREFIX}RUN__SWEEPS=100.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("meanfield", help="solve the scalar fixed point")
    p.add_argument("--beta", type=float, required=True)
    p.set_defaults(func=cmd_meanfield)

    p = sub.add_parser("simulate", help="run the sampler from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (default: runs/<stamp>-<hash>)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("coarse-grain",
                       help="block labels and defect census for a snapshot")
    p.add_argument("--config", required=True)
    p.add_argument("--input", required=True, help="spin snapshot (.bin)")
    p.add_argument("--out")
    p.add_argument("--fields-only", action="store_true",
                   help="skip contour extraction")
    p.set_defaults(func=cmd_coarse_grain)

    p = sub.add_parser("oracle", help="exact small-volume checks")
    p.add_argument("check", choices=["equivalence", "window-identity",
                                     "holley", "fkg", "deviation",
                                     "interpolation", "contour-weight"])
    p.add_argument("--config", required=True, help="JSON instance descriptor")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("functional", help="constrained profile minimization")
    p.add_argument("mode", choices=["minimize", "decay", "excess"])
    p.add_argument("--config", required=True, help="JSON instance descriptor")
    p.add_argument("--csv", help="write the profile to this CSV path")
    p.set_defaults(func=cmd_functional)

    p = sub.add_parser("bounds", help="summability margins and gamma0 scan")
    p.add_argument("mode", choices=["check", "gamma0"])
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--ctilde", type=float, required=True)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--a", type=float, default=0.01)
    p.add_argument("--A", type=float, default=2.0)
    p.add_argument("--gamma", type=float)
    p.add_argument("--lo", type=float, default=1e-6)
    p.add_argument("--hi", type=float, default=1.0)
    p.add_argument("--n-grid", type=int, default=40)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("sweep", help="parameter-grid scenario runs")
    p.add_argument("--config", required=True)
    p.add_argument("--scenario", choices=["magnetization", "symmetry"],
                   default="magnetization")
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--budget", type=int,
                   help="skip cells above this many site updates")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("census", help="contour census on sampled states")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_census)

    p = sub.add_parser("replay", help="re-run a finished run from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out")
    p.set_defaults(func=cmd_replay)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if not getattr(args, "func", None):
        parser.print_help()
        return EXIT_USAGE
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OracleFault as exc:
        print(f"oracle fault: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except KeyError as exc:
        print(f"validation error: missing descriptor key {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:     # pragma: no cover - last-resort fault path
        print(f"runtime fault: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
