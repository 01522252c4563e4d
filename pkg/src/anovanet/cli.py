"""``anovanet`` command line: data, training, decomposition, evaluation, sweeps.

Every command writes machine-readable files (CSV/JSON) into the output
directory and prints an aligned table. Output directory resolution:
``--output-dir`` flag, then ``ANOVANET_OUTPUT_DIR``, then the current
directory. Training options resolve as flag > config file > default.
"""

import argparse
import configparser
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from anovanet import checks
from anovanet.anova import decompose, label, masks_by_order, mask_of, popcount, variables
from anovanet.data import TestFunctionSpec, generate, ingest_csv, load_dataset, save_dataset
from anovanet.data.constants import CSV_SCHEMAS, DEFAULT_SAMPLES
from anovanet.data.testfn import ALIASES, FUNCTIONS
from anovanet.errors import AnovaNetError, DegenerateVariance
from anovanet.network import NetworkSpec, load_checkpoint, mixed_partial, save_checkpoint
from anovanet.training import TrainConfig, fit, rmse

log = logging.getLogger("anovanet")

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED, EXIT_DEGENERATE, EXIT_VERIFY = 0, 2, 3, 4, 5
CONFIG_SCHEMA_VERSION = 1
CONFIG_SECTION = "anovanet"

# option -> (parser, default); shared by flags and config files
_TC = TrainConfig()
TRAIN_OPTIONS = {
    "hidden": (lambda s: tuple(int(v) for v in str(s).split(",") if v.strip()), None),
    "width": (int, 32),
    "layers": (int, 3),
    "activation": (str, "sigmoid"),
    "rep_degree": (int, None),
    "optimizer": (str, "adam"),
    "learning_rate": (float, _TC.learning_rate),
    "batch_size": (int, _TC.batch_size),
    "max_epochs": (int, _TC.max_epochs),
    "patience": (int, _TC.patience),
    "l2_weight": (float, 0.0),
    "noise_sigma": (float, 0.0),
    "loss": (str, "squared"),
    "lbfgs_history": (int, 10),
    "lbfgs_epochs": (int, 0),
    "seed": (int, 0),
}


class UsageError(AnovaNetError):
    pass


def output_dir(args):
    d = getattr(args, "output_dir", None) or os.environ.get("ANOVANET_OUTPUT_DIR") or "."
    os.makedirs(d, exist_ok=True)
    return d


def read_config(path):
    """Flat ``key = value`` options from the ``[anovanet]`` section."""
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise UsageError(f"cannot read config file {path}")
    if CONFIG_SECTION not in cp:
        raise UsageError(f"{path}: missing [{CONFIG_SECTION}] section")
    sec = dict(cp[CONFIG_SECTION])
    version = sec.pop("schema_version", None)
    if version is None or int(version) != CONFIG_SCHEMA_VERSION:
        raise UsageError(f"{path}: schema_version must be {CONFIG_SCHEMA_VERSION}")
    unknown = set(sec) - set(TRAIN_OPTIONS)
    if unknown:
        raise UsageError(f"{path}: unknown keys {sorted(unknown)}")
    return {k: TRAIN_OPTIONS[k][0](v) for k, v in sec.items()}


def write_config(path, options):
    cp = configparser.ConfigParser()
    cp[CONFIG_SECTION] = {"schema_version": str(CONFIG_SCHEMA_VERSION)}
    for k in sorted(options):
        v = options[k]
        if v is None:
            continue
        cp[CONFIG_SECTION][k] = ",".join(map(str, v)) if isinstance(v, tuple) else repr(v) if isinstance(v, float) else str(v)
    with open(path, "w") as fh:
        cp.write(fh)


def resolve_options(args):
    """Merge flags over config file over defaults."""
    conf = read_config(args.config) if getattr(args, "config", None) else {}
    out = {}
    for key, (_, default) in TRAIN_OPTIONS.items():
        flag = getattr(args, key, None)
        out[key] = flag if flag is not None else conf.get(key, default)
    return out


def build_spec_config(opts, K):
    hidden = opts["hidden"] or (opts["width"],) * opts["layers"]
    spec = NetworkSpec(K, tuple(hidden), opts["activation"], opts["rep_degree"], opts["l2_weight"])
    batch = opts["batch_size"] if opts["batch_size"] and opts["batch_size"] > 0 else None
    cfg = TrainConfig(optimizer=opts["optimizer"], learning_rate=opts["learning_rate"],
                      batch_size=batch, max_epochs=opts["max_epochs"],
                      patience=min(opts["patience"], opts["max_epochs"]),
                      l2_weight=opts["l2_weight"], noise_sigma=opts["noise_sigma"],
                      seed=opts["seed"], loss=opts["loss"], lbfgs_history=opts["lbfgs_history"],
                      lbfgs_epochs=opts["lbfgs_epochs"])
    return spec, cfg


def print_table(header, rows, file=None):
    file = file or sys.stdout
    cells = [[str(h) for h in header]] + [[_fmt(v) for v in r] for r in rows]
    widths = [max(len(r[j]) for r in cells) for j in range(len(header))]
    for r in cells:
        print("  ".join(c.rjust(w) for c, w in zip(r, widths)), file=file)


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _stem(path):
    base = os.path.basename(path)
    for ext in (".ckpt.json", ".json", ".csv"):
        if base.endswith(ext):
            return base[: -len(ext)]
    return os.path.splitext(base)[0]


def _relu_warning(spec):
    if spec.activation == "relu" and spec.input_dim >= 2:
        log.warning("relu network with K=%d: mixed partials of order >= 2 vanish almost "
                    "everywhere, so the fitted function is constant zero", spec.input_dim)


# --- commands -------------------------------------------------------------


def cmd_generate(args):
    if args.n < 10:
        raise UsageError("--n must be at least 10")
    spec = TestFunctionSpec(args.fn, args.n, sampling=args.sampling,
                            **({"a": args.a} if args.a is not None else {}),
                            **({"b": args.b} if args.b is not None else {}))
    ds = generate(spec, args.seed)
    name = args.name or f"{spec.kind}_n{args.n}_s{args.seed}"
    path = os.path.join(output_dir(args), name + ".csv")
    save_dataset(ds, path)
    print(f"wrote {path}  N={ds.n} K={ds.K} split={'/'.join(map(str, ds.split_sizes()))}")
    return EXIT_OK


def cmd_ingest(args):
    ds = ingest_csv(args.path, args.schema, args.seed, args.name)
    path = os.path.join(output_dir(args), ds.name + ".csv")
    save_dataset(ds, path)
    print(f"wrote {path}  N={ds.n} K={ds.K} split={'/'.join(map(str, ds.split_sizes()))}")
    return EXIT_OK


def cmd_train(args):
    ds = load_dataset(args.data)
    opts = resolve_options(args)
    spec, cfg = build_spec_config(opts, ds.K)
    _relu_warning(spec)
    out = output_dir(args)
    name = args.name or _stem(args.data)

    def progress(epoch, train_loss, val):
        if args.verbose and (epoch % 10 == 0 or epoch == 1):
            print(f"epoch {epoch:5d}  loss {train_loss:.4e}  val {val:.4e}", file=sys.stderr)

    params, report = fit(ds, spec, cfg, callback=progress)
    ckpt = os.path.join(out, name + ".ckpt.json")
    save_checkpoint(ckpt, spec, params, ds.normalization(), cfg.seed,
                    extra={"data": os.path.abspath(args.data), "config": cfg.to_dict(),
                           "dataset": ds.name})
    write_json(os.path.join(out, name + ".report.json"), report.to_dict())
    write_csv(os.path.join(out, name + ".history.csv"), ["epoch", "train_loss", "val_rmse"],
              [(i + 1, a, b) for i, (a, b) in enumerate(zip(report.train_loss, report.val_rmse))])
    write_config(os.path.join(out, name + ".ini"), opts)
    print_table(["split", "rmse"], [("train", report.train_rmse), ("val", report.best_val_rmse),
                                     ("test", report.test_rmse)])
    print(f"best epoch {report.best_epoch} of {report.epochs}  wall {report.wall_time:.1f}s")
    print(f"wrote {ckpt}")
    if report.diverged:
        log.error("training diverged; report flagged")
        return EXIT_DIVERGED
    return EXIT_OK


def _parse_subset(text, K):
    try:
        vs = [int(v) for v in text.replace("{", "").replace("}", "").split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad subset {text!r}; use e.g. 1,3") from None
    if not vs or any(not 1 <= v <= K for v in vs):
        raise UsageError(f"subset {text!r} must list variables in 1..{K}")
    return mask_of(vs)


def cmd_decompose(args):
    spec, params, record = load_checkpoint(args.checkpoint)
    if args.nodes < 1 or args.nodes & (args.nodes - 1):
        raise UsageError("--nodes must be a power of two")
    out = output_dir(args)
    name = args.name or _stem(args.checkpoint)
    dec = decompose(params, spec, args.nodes, record.get("normalization"))
    degenerate = False
    try:
        idx = dec.sobol_indices()
    except DegenerateVariance as exc:
        log.warning("%s; all indices reported as 0", exc)
        idx = {m: 0.0 for m in dec.variances}
        degenerate = True
    doc = dec.to_dict()
    for row in doc["subsets"]:
        row["sobol_index"] = idx[row["mask"]]
    doc["degenerate"] = degenerate
    doc["checkpoint"] = os.path.basename(args.checkpoint)
    write_json(os.path.join(out, name + ".decomp.json"), doc)
    rows = [(label(m), m, popcount(m), dec.variances[m], idx[m])
            for m in masks_by_order(spec.input_dim) if m]
    write_csv(os.path.join(out, name + ".sobol.csv"),
              ["subset", "mask", "order", "variance", "sobol_index"], rows)
    rows.sort(key=lambda r: (-r[4], r[1]))
    print_table(["subset", "mask", "order", "variance", "index"], rows)
    print(f"mean {dec.mean:.6g}  total variance {dec.total_variance:.6g}")
    if args.grid:
        if args.grid < 2:
            raise UsageError("--grid needs at least 2 points per axis")
        masks = [_parse_subset(s, spec.input_dim) for s in args.subset] if args.subset else \
            [m for m in masks_by_order(spec.input_dim, 2) if m]
        for m in masks:
            axes, vals = dec.tabulate(m, args.grid)
            cols = [f"x{i + 1}" for i in variables(m)]
            mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
            tag = "-".join(str(i + 1) for i in variables(m))
            write_csv(os.path.join(out, f"{name}.trace_{tag}.csv"), cols + ["value"],
                      [tuple(float(v) for v in p) + (float(y),) for p, y in zip(mesh, vals.ravel())])
    return EXIT_DEGENERATE if degenerate else EXIT_OK


def _dataset_for(args, record):
    path = args.data or record.get("extra", {}).get("data")
    if not path or not os.path.exists(path):
        raise UsageError("no dataset: pass --data")
    return load_dataset(path)


def _parse_orders(text, K):
    if text == "all":
        return list(range(0, K + 1))
    try:
        orders = [int(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"bad --order {text!r}") from None
    if any(not 0 <= d <= K for d in orders):
        raise UsageError(f"--order must be within 0..{K}")
    return orders


def cmd_eval(args):
    spec, params, record = load_checkpoint(args.checkpoint)
    orders = _parse_orders(args.order, spec.input_dim)
    ds = _dataset_for(args, record)
    X, y = ds.part("test")
    dec = decompose(params, spec, args.nodes, record.get("normalization"))
    full = rmse(mixed_partial(params, spec, X), y)
    preds = dec.truncation_curve(X, orders)
    rows = [(d, rmse(preds[d], y)) for d in orders]
    rows.append(("full", full))
    name = args.name or _stem(args.checkpoint)
    write_csv(os.path.join(output_dir(args), name + ".eval.csv"), ["order", "test_rmse"], rows)
    print_table(["order", "test_rmse"], rows)
    return EXIT_OK


def _csv_list(text, kind):
    vals = [kind(v) for v in str(text).split(",") if v.strip()]
    if not vals:
        raise UsageError("empty sweep grid")
    return vals


def _ablate_cell(job):
    data, opts, width, activation, noise, seed = job
    ds = load_dataset(data)
    o = dict(opts, hidden=None, width=width, activation=activation, noise_sigma=noise, seed=seed)
    spec, cfg = build_spec_config(o, ds.K)
    try:
        _, rep = fit(ds, spec, cfg)
        return (width, activation, noise, seed, rep.train_rmse, rep.best_val_rmse,
                rep.test_rmse, rep.best_epoch, int(rep.diverged))
    except (AnovaNetError, FloatingPointError, ValueError) as exc:
        log.warning("cell width=%s activation=%s noise=%s seed=%s failed: %s",
                    width, activation, noise, seed, exc)
        nan = float("nan")
        return (width, activation, noise, seed, nan, nan, nan, 0, 1)


def cmd_ablate(args):
    widths = _csv_list(args.widths, int)
    acts = _csv_list(args.activations, str)
    noises = _csv_list(args.noise_levels, float)
    seeds = _csv_list(args.seeds, int)
    opts = resolve_options(args)
    jobs = [(args.data, opts, w, a, s_n, sd) for w in widths for a in acts for s_n in noises for sd in seeds]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            rows = list(pool.map(_ablate_cell, jobs))
    else:
        rows = [_ablate_cell(j) for j in jobs]
    header = ["width", "activation", "noise", "seed", "train_rmse", "val_rmse", "test_rmse",
              "best_epoch", "diverged"]
    name = args.name or _stem(args.data)
    write_csv(os.path.join(output_dir(args), name + ".ablate.csv"), header, rows)
    summary = summarize_sweep(rows)
    write_csv(os.path.join(output_dir(args), name + ".ablate_summary.csv"), SUMMARY_HEADER, summary)
    print_table(SUMMARY_HEADER, summary)
    return EXIT_OK


SUMMARY_HEADER = ["width", "activation", "noise", "runs", "diverged", "mean_test_rmse",
                  "std_test_rmse", "sem_test_rmse"]


def summarize_sweep(rows):
    """Per-cell seed statistics; diverged runs are counted but excluded.

    Reports both the spread over seeds (sample std) and the standard error
    of the mean, ``std / sqrt(runs)``.
    """
    cells = {}
    for width, act, noise, _seed, _tr, _va, test, _ep, div in rows:
        cells.setdefault((width, act, noise), []).append((test, div))
    out = []
    for key, runs in cells.items():
        ok = np.array([t for t, d in runs if not d and np.isfinite(t)])
        n_div = len(runs) - len(ok)
        mean = float(ok.mean()) if len(ok) else float("nan")
        std = float(ok.std(ddof=1)) if len(ok) > 1 else float("nan")
        sem = std / np.sqrt(len(ok)) if len(ok) > 1 else float("nan")
        out.append((*key, len(ok), n_div, mean, std, float(sem)))
    return out


def cmd_verify(args):
    if args.subsets < 1:
        raise UsageError("--subsets must be positive")
    spec, params, record = load_checkpoint(args.checkpoint)
    dec = decompose(params, spec, args.nodes)
    rng = np.random.default_rng(args.seed)
    Xg = rng.uniform(size=(32, spec.input_dim))
    yg = rng.uniform(size=32)
    results = [
        checks.Check("corner_sum_vs_qmc", checks.corner_vs_quadrature(
            params, spec, args.subsets, args.seed, args.nodes), 1e-3),
        checks.Check("orthogonality", checks.orthogonality(dec, args.subsets, args.seed), 1e-3),
        checks.Check("zero_mean", checks.marginal_means(dec, args.subsets, seed=args.seed), 1e-3),
        checks.Check("variance_identity", checks.variance_identity(dec), 1e-3),
        checks.Check("gradient_fd", checks.gradient_fd(params, spec, Xg, yg, seed=args.seed), 1e-4),
    ]
    data = args.data or record.get("extra", {}).get("data")
    if data and os.path.exists(data):
        ds = load_dataset(data)
        X, y = ds.part("test")
        results.append(checks.Check("test_rmse", rmse(mixed_partial(params, spec, X), y),
                                    args.rmse_tol))
    for c in results:
        print(c.line())
    name = args.name or _stem(args.checkpoint)
    write_csv(os.path.join(output_dir(args), name + ".verify.csv"),
              ["check", "error", "tol", "passed"],
              [(c.name, c.error, c.tol, int(c.passed)) for c in results])
    return EXIT_OK if all(c.passed for c in results) else EXIT_VERIFY


# --- parser ---------------------------------------------------------------


def _add_train_flags(p):
    p.add_argument("--config", help="INI file with an [anovanet] section")
    p.add_argument("--hidden", type=TRAIN_OPTIONS["hidden"][0], help="widths, e.g. 32,32,32")
    p.add_argument("--width", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--activation", choices=("sigmoid", "relu", "swish", "rep", "identity"))
    p.add_argument("--rep-degree", dest="rep_degree", type=int)
    p.add_argument("--optimizer", choices=("adam", "lbfgs"))
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int, help="0 for full batch")
    p.add_argument("--epochs", dest="max_epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--l2", dest="l2_weight", type=float)
    p.add_argument("--noise", dest="noise_sigma", type=float)
    p.add_argument("--loss", choices=("squared", "absolute"))
    p.add_argument("--lbfgs-history", dest="lbfgs_history", type=int)
    p.add_argument("--lbfgs-epochs", dest="lbfgs_epochs", type=int)
    p.add_argument("--seed", type=int)


def build_parser():
    top = argparse.ArgumentParser(prog="anovanet", description=__doc__.splitlines()[0])
    top.add_argument("-v", "--verbose", action="store_true")
    sub = top.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output-dir", dest="output_dir")
    common.add_argument("--name", help="basename for output files")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    p = sub.add_parser("generate", parents=[common], help="sample a test function")
    p.add_argument("--fn", required=True, choices=sorted(set(FUNCTIONS) | set(ALIASES)))
    p.add_argument("--n", type=int, default=DEFAULT_SAMPLES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--sampling", choices=("random", "grid"), default="random")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("ingest", parents=[common], help="normalise and split a CSV table")
    p.add_argument("--path", required=True)
    p.add_argument("--schema", choices=(*CSV_SCHEMAS, "generic"), default="generic")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", parents=[common], help="fit the mixed partial to a dataset")
    p.add_argument("--data", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("decompose", parents=[common], help="ANOVA variances and Sobol indices")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--nodes", type=int, default=1 << 14)
    p.add_argument("--grid", type=int, default=0, help="trace resolution per axis")
    p.add_argument("--subset", action="append", help="subset to trace, e.g. 1,3 (repeatable)")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("eval", parents=[common], help="RMSE of truncated predictors")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data")
    p.add_argument("--order", required=True, help="d, a list d1,d2 or 'all'")
    p.add_argument("--nodes", type=int, default=1 << 10)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", parents=[common], help="width/activation/noise sweep")
    p.add_argument("--data", required=True)
    p.add_argument("--widths", default="8,16,32,48")
    p.add_argument("--activations", default="sigmoid,relu,swish,rep")
    p.add_argument("--noise-levels", dest="noise_levels", default="0,1e-4,1e-3,1e-2,1e-1")
    p.add_argument("--seeds", default="0")
    p.add_argument("--jobs", type=int, default=1)
    _add_train_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("verify", parents=[common], help="oracle checks on a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data")
    p.add_argument("--subsets", type=int, default=10)
    p.add_argument("--nodes", type=int, default=1 << 14)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rmse-tol", dest="rmse_tol", type=float, default=1e-2)
    p.set_defaults(func=cmd_verify)
    return top


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"anovanet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AnovaNetError, ValueError, OSError) as exc:
        print(f"anovanet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
