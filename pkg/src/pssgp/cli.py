"""Command line interface: ``pssgp {simulate,fit,predict,bench}``."""
import argparse
import csv
import json
import logging
import math
import sys
import time

import numpy as np

from .gpr import NAIVE_MAX_N, Dataset, log_marginal_likelihood, optimize_hyperparameters, predict
from .kernels import parse_kernel
from .optim import OptimizerConfig
from .scan import ScanStats

logger = logging.getLogger("pssgp")

EXIT_INPUT = 2
EXIT_NUMERICAL = 3


class InputError(ValueError):
    pass


def sinusoid(t):
    """Test function ``sin(pi t) + sin(2 pi t) + sin(3 pi t)``."""
    t = np.asarray(t, dtype=float)
    return np.sin(np.pi * t) + np.sin(2 * np.pi * t) + np.sin(3 * np.pi * t)


def simulation_times(n):
    """``n`` equally spaced points strictly inside (0, 4)."""
    return 4.0 * np.arange(1, n + 1) / (n + 1)


def simulate_data(n, noise, seed):
    t = simulation_times(n)
    f = sinusoid(t)
    y = f + noise * np.random.default_rng(seed).standard_normal(n) if noise > 0 else f.copy()
    return t, y, f


def _fmt(x):
    return repr(float(x))


def write_csv(path, header, columns, comments=()):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def read_csv(path, required=("t", "y"), optional=("r",)):
    """Read named float columns from a headered CSV; extra columns are ignored."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        rows = [(i, row) for i, row in enumerate(csv.reader(fh), start=1)
                if row and not row[0].lstrip().startswith("#")]
    if not rows:
        raise InputError(f"{path}: missing header row")
    header = [h.strip() for h in rows[0][1]]
    for name in required:
        if name not in header:
            raise InputError(f"{path}: missing column {name!r} (header: {','.join(header)})")
    wanted = list(required) + [n for n in optional if n in header]
    idx = {name: header.index(name) for name in wanted}
    out = {name: [] for name in wanted}
    for lineno, row in rows[1:]:
        if len(row) != len(header):
            raise InputError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        for name in wanted:
            try:
                val = float(row[idx[name]])
            except ValueError:
                raise InputError(f"{path}:{lineno}: {name}={row[idx[name]]!r} is not a number") from None
            if not math.isfinite(val):
                raise InputError(f"{path}:{lineno}: {name} is not finite")
            out[name].append(val)
    return {k: np.asarray(v, dtype=float) for k, v in out.items()}


def _kernel(args):
    try:
        return parse_kernel(args.kernel, default_order=args.order)
    except (ValueError, TypeError) as exc:
        raise InputError(f"--kernel: {exc}") from None


def _dataset(args, noise_variance):
    cols = read_csv(args.data)
    r = cols.get("r", noise_variance)
    try:
        return Dataset(cols["t"], cols["y"], r), "r" in cols
    except ValueError as exc:
        raise InputError(f"{args.data}: {exc}") from None


def _test_grid(spec):
    if spec is None:
        return np.zeros(0)
    parts = spec.split(":")
    if len(parts) == 3:
        try:
            start, stop, num = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            raise InputError(f"--test-grid: cannot parse {spec!r} as start:stop:num") from None
        if num < 0:
            raise InputError("--test-grid: num must be >= 0")
        return np.linspace(start, stop, num)
    return read_csv(spec, required=("t",), optional=())["t"]


def cmd_simulate(args):
    if args.n < 1:
        raise InputError("--n must be >= 1")
    if args.noise < 0:
        raise InputError("--noise must be >= 0")
    t, y, f = simulate_data(args.n, args.noise, args.seed)
    write_csv(args.out, ["t", "y", "f"], [t, y, f])
    return 0


def _load_params(path):
    try:
        with open(path, encoding="utf-8") as fh:
            params = json.load(fh)
        return params["kernel"], params.get("noise_variance")
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(f"--params: cannot use {path}: {exc}") from None


def cmd_fit(args):
    kernel = _kernel(args)
    data, has_r = _dataset(args, args.noise ** 2)
    fit_noise = not (args.fix_noise or has_r)
    cfg = OptimizerConfig(max_iter=args.max_iter, workers=args.threads)
    method = "parallel" if args.method == "naive" and data.n > NAIVE_MAX_N else args.method
    try:
        log_marginal_likelihood(kernel, data, method=method, raise_errors=True)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    t0 = time.perf_counter()
    res = optimize_hyperparameters(kernel, data, cfg, fit_noise=fit_noise, method=method)
    elapsed = time.perf_counter() - t0
    report = {
        "kernel": res.kernel.to_spec(),
        "hyperparameters": res.kernel.hyperparameters,
        "noise_variance": res.noise_variance if fit_noise else (None if has_r else args.noise ** 2),
        "loglik": res.loglik,
        "iterations": res.trace,
        "converged": res.converged,
        "message": res.message,
        "method": method,
        "N": int(data.n),
        "evaluations": res.n_evals,
        "seconds_per_evaluation": elapsed / max(res.n_evals, 1),
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    logger.info("loglik %.6f after %d iterations (%s); %.4g s per evaluation",
                res.loglik, len(res.trace) - 1, res.message, report["seconds_per_evaluation"])
    return 0


def cmd_predict(args):
    noise_variance = args.noise ** 2
    if args.params:
        spec, fitted_noise = _load_params(args.params)
        args.kernel = spec
        if fitted_noise is not None:
            noise_variance = fitted_noise
    kernel = _kernel(args)
    data, _ = _dataset(args, noise_variance)
    t_test = _test_grid(args.test_grid)
    if args.method == "naive" and data.n > NAIVE_MAX_N:
        raise InputError(f"naive method is limited to N <= {NAIVE_MAX_N}")
    pred = predict(kernel, data.with_test(t_test), method=args.method, workers=args.threads)
    write_csv(args.out, ["t", "mean", "var"], [t_test, pred.mean, pred.var])
    return 0


def _parse_ints(text, flag, minimum=1):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"{flag}: expected comma separated integers") from None
    if not vals or min(vals) < minimum:
        raise InputError(f"{flag}: sizes must be >= {minimum}")
    return vals


def run_bench(sizes, test_sizes, kernels, methods, reps=5, warmup=2, threads=1, seed=0, noise=0.1):
    """Time ``predict`` on the sinusoid data for every combination.

    Returns ``(rows, predictions)``; ``predictions`` maps
    ``(N, M, kernel, method)`` to the predicted means and variances of the
    first timed run.
    """
    rows, preds = [], {}
    for n in sizes:
        t, y, _ = simulate_data(n, noise, seed)
        for m in test_sizes:
            t_test = simulation_times(m)
            for spec in kernels:
                kernel = parse_kernel(spec) if isinstance(spec, str) else spec
                data = Dataset(t, y, noise ** 2, t_test)
                for method in methods:
                    if method == "naive" and n > NAIVE_MAX_N:
                        logger.warning("skipping naive method at N = %d", n)
                        continue
                    for _ in range(warmup):
                        predict(kernel, data, method=method, workers=threads)
                    times = []
                    for rep in range(reps):
                        stats = ScanStats()
                        t0 = time.perf_counter()
                        out = predict(kernel, data, method=method, workers=threads, stats=stats)
                        times.append(time.perf_counter() - t0)
                        if rep == 0:
                            preds[(n, m, kernel.to_spec(), method)] = out
                            first = stats
                    k = len(np.union1d(t, t_test))
                    if method == "parallel":
                        # filter and smoother scans have the same shape
                        combines, depth = first.combines // 2, first.depth
                    elif method == "sequential":
                        combines = depth = k - 1
                    else:
                        combines = depth = ""
                    rows.append([n, m, kernel.to_spec(), method, float(np.median(times)),
                                 float(np.min(times)), combines, depth])
            for spec in kernels:
                kname = parse_kernel(spec).to_spec() if isinstance(spec, str) else spec.to_spec()
                ref = preds.get((n, m, kname, "parallel"))
                other = preds.get((n, m, kname, "sequential"))
                if ref is not None and other is not None:
                    logger.info("N=%d M=%d %s: max |parallel - sequential| mean %.3g var %.3g", n, m, kname,
                                np.abs(ref.mean - other.mean).max(initial=0.0),
                                np.abs(ref.var - other.var).max(initial=0.0))
    return rows, preds


def cmd_bench(args):
    sizes = _parse_ints(args.sizes, "--sizes")
    test_sizes = _parse_ints(args.test_sizes, "--test-sizes", minimum=0) if args.test_sizes else sizes
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in ("naive", "sequential", "parallel"):
            raise InputError(f"--methods: unknown method {m!r}")
    kernels = [_kernel(argparse.Namespace(kernel=k, order=args.order)) for k in args.kernel]
    if args.reps < 1:
        raise InputError("--reps must be >= 1")
    rows, _ = run_bench(sizes, test_sizes, kernels, methods, reps=args.reps, warmup=args.warmup,
                        threads=args.threads, seed=args.seed, noise=args.noise)
    comments = [f"kernel {k.to_spec()}" for k in kernels] + [
        f"data: sinusoid on (0, 4), noise sd {args.noise}, seed {args.seed}; "
        f"threads {args.threads}; warmup {args.warmup}; reps {args.reps}",
        "combines/depth: one prefix scan over the merged grid",
    ]
    write_csv(args.out, ["N", "M", "kernel", "method", "median_s", "min_s", "combines", "depth"],
              list(zip(*rows)) if rows else [[]] * 8, comments)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="pssgp", description="Temporal GP regression with state-space models.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True):
        if data:
            sp.add_argument("--kernel", default="matern32()", help="kernel spec, e.g. 'matern52(lengthscale=0.5)'")
        else:
            sp.add_argument("--kernel", action="append", help="kernel spec (repeatable)")
        sp.add_argument("--order", type=int, default=None, help="default order for rbf/periodic terms")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--noise", type=float, default=0.1, help="observation noise standard deviation")
        sp.add_argument("--out", required=True)
        if data:
            sp.add_argument("--data", required=True, help="CSV with columns t,y[,r]")

    sp = sub.add_parser("simulate", help="write the noisy sinusoid dataset")
    sp.add_argument("--n", type=int, default=1024)
    sp.add_argument("--noise", type=float, default=0.1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("fit", help="learn hyperparameters by maximum likelihood")
    common(sp)
    sp.add_argument("--method", choices=("naive", "sequential", "parallel"), default="parallel")
    sp.add_argument("--fix-noise", action="store_true", help="keep the noise variance at --noise**2")
    sp.add_argument("--max-iter", type=int, default=200)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("predict", help="posterior mean and variance on a test grid")
    common(sp)
    sp.add_argument("--params", help="JSON written by 'fit'; overrides --kernel and --noise")
    sp.add_argument("--test-grid", help="CSV with a 't' column, or start:stop:num")
    sp.add_argument("--method", choices=("naive", "sequential", "parallel"), default="parallel")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("bench", help="time naive, sequential and parallel prediction")
    common(sp, data=False)
    sp.add_argument("--sizes", default="1024,2048,4096", help="training sizes N")
    sp.add_argument("--test-sizes", default=None, help="test sizes M (default: same as N)")
    sp.add_argument("--methods", default="naive,sequential,parallel")
    sp.add_argument("--reps", type=int, default=5)
    sp.add_argument("--warmup", type=int, default=2)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "bench" and not args.kernel:
        args.kernel = ["matern32()"]
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
