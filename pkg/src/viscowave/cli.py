"""Command-line front end: run, analyze-kernel, fit, reproduce.

Every run writes a self-describing output directory: the manifest, the
fully resolved config, the CSV trace and the JSON reports, all with a
schema version, so a directory is reproducible from its own contents.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__, decay, energy
from .errors import (
    ConfigError,
    InsufficientDataError,
    KernelError,
    TraceFormatError,
)
from .kernels import (
    KernelSpec,
    analyze_kernel,
    canonical_convexity,
    check_domination,
    validate_kernel,
)
from .presets import build_preset, stretched_integral_bound
from .solver import cfl_check, config_from_json, run, validate_config
from .trace import EnergyTrace

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_BLOWUP = 2


def _atomic_write(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_json(path, obj):
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _ensure_outdir(out):
    os.makedirs(out, exist_ok=True)
    return out


def _load_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: line {exc.lineno}: {exc.msg}")


def _apply_overrides(obj, args):
    if getattr(args, "q", None) is not None:
        obj["q"] = args.q
    if getattr(args, "p", None) is not None:
        obj["p"] = args.p
    if getattr(args, "dt", None) is not None:
        obj["dt"] = args.dt
    if getattr(args, "cells", None) is not None:
        obj["n_cells"] = args.cells
    if getattr(args, "t_end", None) is not None:
        obj["t_end"] = args.t_end
    if getattr(args, "strategy", None) is not None:
        obj["conv_strategy"] = args.strategy
    return obj


def _write_manifest(out, args, preset=None, config_path=None):
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "config_path": config_path,
        "output_dir": os.path.abspath(out),
        "preset": preset,
        "record_stride": getattr(args, "record_stride", 1),
        "deterministic": True,
    }
    _write_json(os.path.join(out, "manifest.json"), manifest)
    return manifest


def _run_single(config, out, args, preset_name=None, config_path=None):
    out = _ensure_outdir(out)
    _write_manifest(out, args, preset=preset_name, config_path=config_path)
    _write_json(os.path.join(out, "resolved_config.json"), config.to_json())
    trace = run(
        config,
        record_stride=args.record_stride,
        skip_validation=getattr(args, "force", False),
    )
    trace.write_csv(os.path.join(out, "trace.csv"))
    _write_json(os.path.join(out, "gate.json"), trace.gate.to_json())
    if config.kernel is not None:
        analysis = analyze_kernel(
            config.kernel, a_sup=config.a_sup, lambda0=config.lam_min
        )
        payload = analysis.to_json()
        payload["schema_version"] = SCHEMA_VERSION
        if config.conv_strategy == "prony" and config.prony_modes is not None:
            payload["runtime_kernel"] = config.prony_modes.to_json()
        _write_json(os.path.join(out, "kernel_analysis.json"), payload)
    return trace


def cmd_run(args):
    exit_codes = []
    configs = args.config
    for path in configs:
        try:
            obj = _apply_overrides(_load_json(path), args)
            config = config_from_json(obj)
        except (ConfigError, KernelError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            exit_codes.append(EXIT_ERROR)
            continue
        cfl = cfl_check(config)
        if not cfl.ok:
            print(f"error: {cfl.message()}", file=sys.stderr)
            exit_codes.append(EXIT_ERROR)
            continue
        problems = validate_config(config)
        if problems and not args.force:
            for msg in problems:
                print(f"assumption violated: {msg}", file=sys.stderr)
            print("use --force to run anyway", file=sys.stderr)
            exit_codes.append(EXIT_ERROR)
            continue
        stem = os.path.splitext(os.path.basename(path))[0]
        out = args.out if len(configs) == 1 else os.path.join(args.out, stem)

        def job(config=config, out=out, path=path):
            try:
                trace = _run_single(config, out, args, config_path=path)
            except ConfigError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return EXIT_ERROR
            if trace.metadata.get("blown_up"):
                print(
                    f"blow-up detected at step {trace.metadata['blowup_step']}; "
                    "trace truncated",
                    file=sys.stderr,
                )
                return EXIT_BLOWUP
            print(f"run complete: {out}")
            return EXIT_OK

        if args.sweep > 1 and len(configs) > 1:
            exit_codes.append(job)
        else:
            exit_codes.append(job())
    if args.sweep > 1 and any(callable(c) for c in exit_codes):
        jobs = [c for c in exit_codes if callable(c)]
        fixed = [c for c in exit_codes if not callable(c)]
        with ThreadPoolExecutor(max_workers=args.sweep) as pool:
            fixed.extend(pool.map(lambda j: j(), jobs))
        exit_codes = fixed
    return max(exit_codes) if exit_codes else EXIT_ERROR


def cmd_analyze_kernel(args):
    try:
        kernel = KernelSpec.from_json(_load_json(args.config))
    except (ConfigError, KernelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    shape = validate_kernel(kernel)
    if not shape.passed:
        for msg in shape.messages:
            print(f"kernel check failed: {msg}", file=sys.stderr)
        return EXIT_ERROR
    try:
        analysis = analyze_kernel(kernel, a_sup=args.a_sup, lambda0=args.lambda0)
    except KernelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"f(0)      = {analysis.f0:.10g}")
    print(f"mass      = {analysis.total_mass:.10g}")
    print(
        f"ell       = {analysis.ell:.10g}   "
        f"(lambda0={args.lambda0:g}, sup a={args.a_sup:g})"
    )
    print("delta      M(delta)       delta*M(delta)")
    for d, m in sorted(analysis.M_table.items(), reverse=True):
        print(f"{d:<10g} {m:<14.8g} {d * m:.8g}")
    domination = None
    if kernel.family != "tabulated":
        cx = canonical_convexity(kernel)
        grid = np.geomspace(1e-3, 50.0, 400)
        domination = check_domination(kernel, cx, grid)
        state = "pass" if domination.passed else "FAIL"
        print(
            f"kernel shape checks: nonincreasing pass, "
            f"convexity domination {state} "
            f"(max violation {domination.max_violation:.3e})"
        )
    else:
        print("kernel shape checks: nonincreasing pass, domination not checked")
    if args.out:
        out = _ensure_outdir(args.out)
        payload = analysis.to_json()
        payload["schema_version"] = SCHEMA_VERSION
        payload["family"] = kernel.family
        payload["kernel"] = kernel.to_json()
        payload["shape_passed"] = shape.passed
        if domination is not None:
            payload["domination_passed"] = domination.passed
            payload["domination_max_violation"] = domination.max_violation
        _write_json(os.path.join(out, "kernel_analysis.json"), payload)
    if domination is not None and not domination.passed:
        return EXIT_ERROR
    return EXIT_OK


def cmd_fit(args):
    try:
        trace = EnergyTrace.read_csv(args.trace)
    except FileNotFoundError:
        print(f"error: file not found: {args.trace}", file=sys.stderr)
        return EXIT_ERROR
    except TraceFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    q = args.q
    if q is None:
        sibling = os.path.join(os.path.dirname(args.trace), "resolved_config.json")
        if os.path.exists(sibling):
            q = float(json.load(open(sibling)).get("q", 1.0))
        else:
            q = 1.0
    try:
        report = decay.analyze_trace(
            trace["t"],
            trace["E"],
            q=q,
            tail_fraction=args.tail_fraction,
            envelopes=("exponential", "polynomial"),
        )
    except InsufficientDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    for line in report.summary_lines():
        print(line)
    if args.out:
        out = _ensure_outdir(args.out)
        _write_json(os.path.join(out, "decay_report.json"), report.to_json())
    return EXIT_OK


def cmd_reproduce(args):
    try:
        preset = build_preset(
            args.example,
            q=args.q,
            n_cells=args.cells or 400,
            t_end=args.t_end or 150.0,
            dt=args.dt,
            strategy=args.strategy,
            record_stride=args.record_stride,
        )
    except (ConfigError, KernelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out = _ensure_outdir(args.out)
    print(f"preset {preset.name}: amplitude scale {preset.amplitude:g}")
    args.record_stride = preset.record_stride
    trace = _run_single(config=preset.config, out=out, args=args, preset_name=preset.name)
    if trace.metadata.get("blown_up"):
        print("blow-up detected; no decay fit", file=sys.stderr)
        return EXIT_BLOWUP
    report = decay.analyze_trace(
        trace["t"],
        trace["E"],
        q=preset.q,
        stretched_beta=preset.stretched_beta,
        envelopes=preset.envelope_models,
        metadata={"preset": preset.name, "amplitude": preset.amplitude},
    )
    _write_json(os.path.join(out, "decay_report.json"), report.to_json())
    mono = energy.energy_monotonicity_report(trace)
    well = energy.potential_well_report(trace, trace.gate)
    print()
    print(f"{'check':<34}{'result':<10}detail")
    rows = [
        ("admission gate", trace.gate.verdict, f"E0={trace.gate.energy0:.4g}"),
        ("energy monotonicity", mono.passed, f"max increase {mono.max_increase:.3e}"),
        ("potential-well bounds", well.passed, f"lambda2 {well.lambda2:.4g}"),
        ("model selection", True, report.selected_model),
    ]
    if preset.example_id == 2:
        ok, worst = stretched_integral_bound(preset.kernel)
        rows.append(("integral-map bound", ok, f"worst margin {worst:.3e}"))
    for v in report.envelope_verdicts:
        rows.append((f"envelope [{v.name}]", v.passed, f"sup ratio {v.sup_ratio:.4f}"))
    for name, ok, detail in rows:
        print(f"{name:<34}{'pass' if ok else 'FAIL':<10}{detail}")
    all_envelopes_ok = all(v.passed for v in report.envelope_verdicts)
    return EXIT_OK if all_envelopes_ok else EXIT_ERROR


def build_parser():
    parser = argparse.ArgumentParser(
        prog="viscowave",
        description="1-D viscoelastic wave laboratory: runs, kernel analysis, decay fits",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a configured problem")
    p_run.add_argument("--config", required=True, nargs="+", help="config JSON path(s)")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--q", type=float, default=None)
    p_run.add_argument("--p", type=float, default=None)
    p_run.add_argument("--dt", type=float, default=None)
    p_run.add_argument("--cells", type=int, default=None)
    p_run.add_argument("--t-end", dest="t_end", type=float, default=None)
    p_run.add_argument("--strategy", choices=("direct", "prony"), default=None)
    p_run.add_argument("--record-stride", dest="record_stride", type=int, default=1)
    p_run.add_argument("--force", action="store_true",
                       help="run even if assumption validators fail")
    p_run.add_argument("--sweep", type=int, default=1,
                       help="fan independent configs across this many workers")
    p_run.set_defaults(func=cmd_run)

    p_ak = sub.add_parser("analyze-kernel", help="validate and tabulate a kernel")
    p_ak.add_argument("--config", required=True, help="kernel JSON path")
    p_ak.add_argument("--lambda0", type=float, default=1.0)
    p_ak.add_argument("--a-sup", dest="a_sup", type=float, default=1.0)
    p_ak.add_argument("--out", default=None)
    p_ak.set_defaults(func=cmd_analyze_kernel)

    p_fit = sub.add_parser("fit", help="fit decay models to a trace.csv")
    p_fit.add_argument("--trace", required=True)
    p_fit.add_argument("--q", type=float, default=None)
    p_fit.add_argument("--tail-fraction", dest="tail_fraction", type=float, default=0.5)
    p_fit.add_argument("--out", default=None)
    p_fit.set_defaults(func=cmd_fit)

    p_rep = sub.add_parser("reproduce", help="run one of the benchmark presets")
    p_rep.add_argument("example", type=int, choices=(1, 2, 3))
    p_rep.add_argument("--out", required=True)
    p_rep.add_argument("--q", type=float, default=None)
    p_rep.add_argument("--dt", type=float, default=None)
    p_rep.add_argument("--cells", type=int, default=None)
    p_rep.add_argument("--t-end", dest="t_end", type=float, default=None)
    p_rep.add_argument("--strategy", choices=("direct", "prony"), default=None)
    p_rep.add_argument("--record-stride", dest="record_stride", type=int, default=100)
    p_rep.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
