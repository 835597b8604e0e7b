"""Command-line surface tying the modules together.

Subcommands: fit, sweep, seminorm, eigen, gridsearch, zoo.  Every run reads
one structured-text config, writes an effective-config echo plus its
artifacts under the output directory, and returns a family-coded exit
status: 0 ok, 2 invalid input, 3 tuning, 4 solver, 5 io.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from fracreg import config as cfg
from fracreg import experiments as xp
from fracreg import sobolev
from fracreg.errors import ConfigError, InvalidInputError, SolverError, TuningError
from fracreg.estimator import TuningRule, choose_epsilon, choose_K, fit, grid_search
from fracreg.graph import KernelSpec, SampleSet, build_graph
from fracreg.spectral import eigensolve, laplacian

OUT_ENV_VAR = "FRACREG_OUT"

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_TUNING = 3
EXIT_SOLVER = 4
EXIT_IO = 5


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracreg",
        description="Eigenmap regression, fractional-Sobolev tools, and rate experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_config in (
        ("fit", True), ("sweep", True), ("seminorm", True),
        ("eigen", True), ("gridsearch", True), ("zoo", False),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=needs_config, help="path to the config file")
        p.add_argument("--out", default=None,
                       help="output directory (default: $%s)" % OUT_ENV_VAR)
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                       help="worker pool size (default: machine parallelism)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
    return parser


def _load_entries(args) -> dict:
    if args.config is None:
        return {}
    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as exc:
        raise OSError("cannot read config %s: %s" % (args.config, exc)) from exc
    entries = cfg.parse_text(text, source=args.config)
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append("seed = %d" % args.seed)
    return cfg.apply_overrides(entries, overrides)


def _write_echo(out_dir, echo: dict):
    with open(os.path.join(out_dir, "config_echo.txt"), "w") as fh:
        fh.write(cfg.serialize(echo))


def _kernel_from_view(view: cfg.ConfigView):
    family = view.get_str("kernel.family", default="truncated_gaussian")
    h = view.get_float("kernel.h", default=0.4, gt=0.0)
    kernel = KernelSpec(family, h)
    echo = {"kernel.family": family, "kernel.h": h}
    return kernel, echo


def _tuning_from_view(view: cfg.ConfigView, dim: int):
    if not view.has("tuning.s"):
        return None, {}
    s = view.get_unit_open("tuning.s", required=True)
    M = view.get_float("tuning.M", required=True, gt=0.0)
    c0 = view.get_float("tuning.c0", default=1.0, gt=0.0)
    C0 = view.get_float("tuning.C0", default=1.0, gt=0.0)
    rule = TuningRule(s=s, M=M, dim=dim, c0=c0, C0=C0)
    echo = {"tuning.s": s, "tuning.M": M, "tuning.c0": c0, "tuning.C0": C0}
    return rule, echo


# Sweep defaults (documented in the README): the standard study is the blocks
# truth on [0, 5] with unit noise, five sample sizes, and grid-searched tuning.
DEFAULT_N_GRID = [500, 625, 750, 875, 1000]
DEFAULT_REPETITIONS = 200
DEFAULT_K_GRID = [1, 2, 3, 4, 6, 8, 11, 16, 23, 32, 45, 64]
DEFAULT_EPS_GRID = [0.12, 0.25, 0.5]


def _experiment_config_from_view(view: cfg.ConfigView, single_n: bool = False):
    truth = view.get_str("truth", required=True)
    if single_n:
        n_grid = [view.get_int("n", required=True, minimum=2)]
        reps = 1
    else:
        n_grid = view.get_list("n_grid", default=DEFAULT_N_GRID, kind=int)
        reps = view.get_int("repetitions", default=DEFAULT_REPETITIONS, minimum=1)
    seed = view.get_int("seed", default=0, minimum=0)
    noise_sd = view.get_float("noise_sd", default=1.0, ge=0.0)
    low = view.get_float("design.low", default=0.0)
    high = view.get_float("design.high", default=5.0)
    dim = view.get_int("design.dim", default=1, minimum=1)
    kernel, kernel_echo = _kernel_from_view(view)
    tuning, tuning_echo = _tuning_from_view(view, dim)
    k_grid = view.get_list("grids.k", kind=int)
    eps_grid = view.get_list("grids.eps", kind=float)
    if tuning is None and k_grid is None and eps_grid is None:
        k_grid, eps_grid = list(DEFAULT_K_GRID), list(DEFAULT_EPS_GRID)
    theory_s = view.get_unit_open("theory_s") if view.has("theory_s") else None

    config = xp.ExperimentConfig(
        truth=truth,
        n_grid=tuple(n_grid),
        repetitions=reps,
        seed=seed,
        noise_sd=noise_sd,
        design_low=low,
        design_high=high,
        dim=dim,
        kernel=kernel,
        tuning=tuning,
        k_grid=tuple(k_grid) if k_grid is not None else None,
        eps_grid=tuple(eps_grid) if eps_grid is not None else None,
        theory_s=theory_s,
    )
    echo = {"truth": truth}
    if single_n:
        echo["n"] = n_grid[0]
    else:
        echo["n_grid"] = list(n_grid)
        echo["repetitions"] = reps
    echo.update({
        "seed": seed, "noise_sd": noise_sd,
        "design.low": low, "design.high": high, "design.dim": dim,
    })
    echo.update(kernel_echo)
    echo.update(tuning_echo)
    if k_grid is not None:
        echo["grids.k"] = list(k_grid)
    if eps_grid is not None:
        echo["grids.eps"] = list(eps_grid)
    if theory_s is not None:
        echo["theory_s"] = theory_s
    return config, echo


_FUNCTION_LIST_KEYS = ("breakpoints", "values", "centers", "heights", "widths")


def function_to_mapping(fn: sobolev.TestFunction) -> dict:
    """Serialize a test function as function.* keys in the config format."""
    out = {"function.family": fn.family, "function.domain": [fn.domain[0], fn.domain[1]]}
    if fn.family == "power":
        out["function.alpha"] = fn.alpha
    elif fn.family == "piecewise_constant":
        out["function.breakpoints"] = list(fn.breakpoints)
        out["function.values"] = list(fn.values)
    elif fn.family == "piecewise_polynomial":
        out["function.breakpoints"] = list(fn.breakpoints)
        for i, piece in enumerate(fn.coefficients):
            out["function.coeff_%d" % i] = list(piece)
    else:
        out["function.centers"] = list(fn.centers)
        out["function.heights"] = list(fn.heights)
        out["function.widths"] = list(fn.widths)
    return out


def function_from_view(view: cfg.ConfigView) -> sobolev.TestFunction:
    family = view.get_str("function.family", required=True)
    domain = view.get_list("function.domain", kind=float)
    if family == "power":
        alpha = view.get_unit_open("function.alpha", required=True)
        return sobolev.power_function(alpha, tuple(domain) if domain else (-1.0, 1.0))
    if family == "piecewise_constant":
        bp = view.get_list("function.breakpoints", required=True, kind=float)
        values = view.get_list("function.values", required=True, kind=float)
        return sobolev.piecewise_constant(bp, values)
    if family == "piecewise_polynomial":
        bp = view.get_list("function.breakpoints", required=True, kind=float)
        pieces = []
        i = 0
        while view.has("function.coeff_%d" % i):
            pieces.append(view.get_list("function.coeff_%d" % i, kind=float))
            i += 1
        return sobolev.piecewise_polynomial(bp, pieces)
    if family == "bumps":
        centers = view.get_list("function.centers", required=True, kind=float)
        heights = view.get_list("function.heights", required=True, kind=float)
        widths = view.get_list("function.widths", required=True, kind=float)
        return sobolev.bumps(centers, heights, widths,
                             tuple(domain) if domain else (0.0, 5.0))
    raise ConfigError("unknown function.family %r" % family, key="function.family")


# ---------------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------------

def _cmd_sweep(args, out_dir, entries):
    view = cfg.ConfigView(entries, source=args.config or "<config>")
    config, echo = _experiment_config_from_view(view)
    curve_points = view.get_int("curve.points", minimum=2)
    curve_n = view.get_int("curve.n", minimum=2)
    if curve_points is not None:
        echo["curve.points"] = curve_points
        if curve_n is not None:
            echo["curve.n"] = curve_n
    view.reject_unknown()
    _write_echo(out_dir, echo)

    report = xp.run_sweep(config, threads=args.threads)
    report.write_records_csv(os.path.join(out_dir, "records.csv"))
    report.write_summary_csv(os.path.join(out_dir, "summary.csv"))
    if report.failures:
        report.write_failures_csv(os.path.join(out_dir, "failures.csv"))
    if curve_points is not None:
        n = curve_n if curve_n is not None else max(config.n_grid)
        grid = np.linspace(config.design_low, config.design_high, curve_points + 2)[1:-1]
        curve = xp.mean_fit_curve(config, n, grid)
        curve.write_csv(os.path.join(out_dir, "curve.csv"))
    print("sweep: %d records, %d failures, slope %.6g (theory %.6g)"
          % (len(report.records), len(report.failures),
             report.fitted_slope, report.theoretical_slope))


def _cmd_gridsearch(args, out_dir, entries):
    view = cfg.ConfigView(entries, source=args.config or "<config>")
    config, echo = _experiment_config_from_view(view, single_n=True)
    if config.k_grid is None:
        raise ConfigError("gridsearch requires grids.k and grids.eps", key="grids.k")
    view.reject_unknown()
    _write_echo(out_dir, echo)

    n = config.n_grid[0]
    samples = xp.generate(config, n, 0)
    truth_values = config.truth_function()(samples.points[:, 0])
    result = grid_search(samples, list(config.k_grid), list(config.eps_grid),
                         config.kernel, truth_values)
    result.save_csv(os.path.join(out_dir, "surface.csv"))
    with open(os.path.join(out_dir, "best.txt"), "w") as fh:
        fh.write(cfg.serialize({
            "best_K": result.best_K,
            "best_epsilon": result.best_epsilon,
            "best_mse": result.best_mse,
        }))
    print("gridsearch: best K=%d epsilon=%.6g mse=%.6g"
          % (result.best_K, result.best_epsilon, result.best_mse))


def _cmd_fit(args, out_dir, entries):
    view = cfg.ConfigView(entries, source=args.config or "<config>")
    data_path = view.get_str("data", required=True)
    K = view.get_int("K", required=True, minimum=0)
    epsilon = view.get_float("epsilon", required=True, gt=0.0)
    kernel, kernel_echo = _kernel_from_view(view)
    meta_s = view.get_unit_open("meta.s") if view.has("meta.s") else None
    meta_M = view.get_float("meta.M", gt=0.0) if view.has("meta.M") else None
    view.reject_unknown()

    echo = {"data": data_path, "K": K, "epsilon": epsilon}
    echo.update(kernel_echo)
    if meta_s is not None:
        echo["meta.s"] = meta_s
    if meta_M is not None:
        echo["meta.M"] = meta_M
    _write_echo(out_dir, echo)

    samples = SampleSet.load_csv(data_path)
    if samples.responses is None:
        raise InvalidInputError("%s: fit needs a response column" % data_path)
    result = fit(samples, K, epsilon, kernel)
    metadata = {"kernel": kernel.family, "kernel_h": kernel.h}
    if meta_s is not None:
        metadata["s"] = meta_s
    if meta_M is not None:
        metadata["M"] = meta_M
    result.save_csv(os.path.join(out_dir, "fit.csv"), samples, metadata)
    print("fit: n=%d K=%d epsilon=%.6g connected=%s"
          % (samples.n, K, epsilon, result.connected))


def _cmd_seminorm(args, out_dir, entries):
    view = cfg.ConfigView(entries, source=args.config or "<config>")
    if view.has("truth"):
        fn = sobolev.zoo_function(view.get_str("truth", required=True))
        fn_echo = {"truth": view.raw("truth")}
    else:
        fn = function_from_view(view)
        fn_echo = function_to_mapping(fn)
    raw_s = view.require("s")
    s_values = [float(v) for v in raw_s] if isinstance(raw_s, list) else [float(raw_s)]
    for s in s_values:
        if not 0.0 < s < 1.0:
            raise ConfigError("s must lie in (0,1)", key="s")
    level = view.get_int("level", default=12, minimum=7)
    view.reject_unknown()

    echo = dict(fn_echo)
    echo["s"] = s_values if len(s_values) > 1 else s_values[0]
    echo["level"] = level
    _write_echo(out_dir, echo)

    results = [sobolev.continuum_seminorm(fn, s, refinement=level) for s in s_values]
    path = os.path.join(out_dir, "seminorm.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        n_levels = len(results[0].refinements)
        writer.writerow(
            ["s", "value", "diverged", "quadrature_cells", "estimated_error"]
            + ["refinement_%d" % (4 + i) for i in range(n_levels)]
        )
        for res in results:
            writer.writerow(
                [format(res.s, ".17g"), format(res.value, ".17g"),
                 "true" if res.diverged else "false",
                 str(res.quadrature_cells), format(res.estimated_error, ".17g")]
                + [format(v, ".17g") for v in res.refinements]
            )
    for res in results:
        status = "divergent" if res.diverged else "value %.12g" % res.value
        print("seminorm: s=%g %s" % (res.s, status))


def _cmd_eigen(args, out_dir, entries):
    view = cfg.ConfigView(entries, source=args.config or "<config>")
    kernel, kernel_echo = _kernel_from_view(view)
    data_path = view.get_str("data") if view.has("data") else None
    echo = {}
    if data_path is not None:
        samples = SampleSet.load_csv(data_path)
        echo["data"] = data_path
    else:
        n = view.get_int("n", required=True, minimum=2)
        seed = view.get_int("seed", required=True, minimum=0)
        low = view.get_float("design.low", default=0.0)
        high = view.get_float("design.high", default=5.0)
        x = xp.draw_design(seed, n, 0, low, high)
        samples = SampleSet(points=x[:, None])
        echo.update({"n": n, "seed": seed, "design.low": low, "design.high": high})
    dim = samples.dim
    tuning, tuning_echo = _tuning_from_view(view, dim)
    explicit_eps = None
    if tuning is None:
        explicit_eps = view.get_float("epsilon", required=True, gt=0.0)
    m = view.get_int("m", default=min(32, samples.n), minimum=1)
    view.reject_unknown()

    echo.update(kernel_echo)
    echo.update(tuning_echo)
    if explicit_eps is not None:
        echo["epsilon"] = explicit_eps
    echo["m"] = m
    _write_echo(out_dir, echo)

    if tuning is not None:
        K = choose_K(tuning, samples.n)
        epsilon = choose_epsilon(tuning, samples.n, K)
    else:
        epsilon = explicit_eps

    graph = build_graph(samples, epsilon, kernel)
    eig = eigensolve(laplacian(graph, dim), m)
    eig.save_csv(os.path.join(out_dir, "eigen.csv"))
    print("eigen: n=%d m=%d epsilon=%.6g lambda1=%.3e"
          % (samples.n, m, epsilon, eig.values[0]))


def _cmd_zoo(args, out_dir, entries):
    view = cfg.ConfigView(entries, source=args.config or "<config>")
    view.reject_unknown()
    for name, fn in sorted(sobolev.zoo().items()):
        with open(os.path.join(out_dir, "%s.txt" % name), "w") as fh:
            fh.write(cfg.serialize(function_to_mapping(fn)))
    print("zoo: wrote %d function definitions" % len(sobolev.zoo()))


_HANDLERS = {
    "fit": _cmd_fit,
    "sweep": _cmd_sweep,
    "seminorm": _cmd_seminorm,
    "eigen": _cmd_eigen,
    "gridsearch": _cmd_gridsearch,
    "zoo": _cmd_zoo,
}


def _error_record(out_dir, code, kind, message):
    try:
        with open(os.path.join(out_dir, "error.txt"), "w") as fh:
            fh.write(cfg.serialize({
                "code": code, "kind": kind,
                "message": str(message).replace('"', "'"),
            }))
    except OSError:
        pass


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    out_dir = args.out or os.environ.get(OUT_ENV_VAR)
    if not out_dir:
        print("fracreg: no output directory (--out or $%s)" % OUT_ENV_VAR, file=sys.stderr)
        return EXIT_INPUT
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        print("fracreg: cannot create %s: %s" % (out_dir, exc), file=sys.stderr)
        return EXIT_IO

    try:
        entries = _load_entries(args)
        _HANDLERS[args.command](args, out_dir, entries)
        return EXIT_OK
    except TuningError as exc:
        code, kind, err = EXIT_TUNING, "tuning", exc
    except SolverError as exc:
        code, kind, err = EXIT_SOLVER, "solver", exc
    except (ConfigError, InvalidInputError) as exc:
        code, kind, err = EXIT_INPUT, "input", exc
    except OSError as exc:
        code, kind, err = EXIT_IO, "io", exc
    _error_record(out_dir, code, kind, err)
    print("fracreg: %s error: %s" % (kind, err), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
