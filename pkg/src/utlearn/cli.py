"""``utlearn`` command line.

Subcommands::

    utlearn gen        --n 50 --N 10000 --s 5 --seed 0 --out model/
    utlearn learn      --model model/ --init eps --out run/
    utlearn analyze    --model model/
    utlearn experiment convergence|inits|qsweep|lemma [flags]

Every flag can also be given in a flat YAML file passed with ``--config``;
flags given on the command line win. Exit status is 0 when every in-run
check passes, 1 when a check fails (the failing names go to stderr) and 2
on invalid input.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from .errors import MatrixFormatError, NumericalError
from .experiments import (
    ExperimentConfig,
    objective_chain_ok,
    provenance_table,
    parse_seeds,
    run_analyze,
    run_experiment,
)
from .fileio import CsvTable, load_model, save_model, write_matrix
from .genmodel import (
    EpsilonBall,
    epsilon_for_support_recovery,
    generate_model,
    init_label,
    make_init,
    parse_init,
)
from .learner import learn

log = logging.getLogger("utlearn")

# flag dest -> ExperimentConfig field
_FLAG_KEYS = {
    "n": "n",
    "N": "bigN",
    "N_list": "bigN_list",
    "s": "s",
    "s_over_n": "s_over_n",
    "dist": "dists",
    "seed": "seeds",
    "seeds": "seeds",
    "max_iter": "max_iter",
    "obj_tol": "obj_tol",
    "noise_sigma": "noise_sigma",
    "normalize": "normalize",
    "init": "inits",
    "eps_fraction": "eps_fraction",
    "eps_list": "eps_list",
    "model": "model_dir",
    "out": "output_dir",
    "jobs": "jobs",
}


def _seeds_arg(text):
    try:
        return parse_seeds(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _common(p):
    S = argparse.SUPPRESS
    p.add_argument("--config", metavar="PATH", help="flat YAML mapping of defaults")
    p.add_argument("--n", type=int, default=S, help="signal dimension")
    p.add_argument("--N", type=int, default=S, help="number of training signals")
    p.add_argument("--N-list", dest="N_list", default=S, help="comma list of N for the q sweep")
    p.add_argument("--s", default=S, help="sparsity level(s), comma separated")
    p.add_argument("--s-over-n", dest="s_over_n", default=S, help="comma list of s/n for the q sweep")
    p.add_argument("--dist", default=S, help="gaussian | signs | uniform[:b[:c]] | texp[:K], comma list allowed")
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--seeds", type=_seeds_arg, default=S, help="e.g. 0-4 or 0,3,9")
    p.add_argument("--max-iter", dest="max_iter", type=int, default=S)
    p.add_argument("--obj-tol", dest="obj_tol", type=float, default=S)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=S)
    p.add_argument("--normalize", action=argparse.BooleanOptionalAction, default=S)
    p.add_argument("--init", default=S, help="eps[:r], rand, id, dct, unif, zero, file:PATH (comma list)")
    p.add_argument("--eps-fraction", dest="eps_fraction", type=float, default=S)
    p.add_argument("--eps-list", dest="eps_list", default=S, help="comma list of init radii (lemma)")
    p.add_argument("--model", default=S, metavar="DIR", help="model directory written by 'gen'")
    p.add_argument("--jobs", type=int, default=S, help="worker processes for independent cells")
    p.add_argument("--out", default=S, metavar="PATH", help="output directory or .csv file")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="utlearn", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("gen", help="generate a model and write its matrices"))
    _common(sub.add_parser("learn", help="run the alternating scheme on one model"))
    _common(sub.add_parser("analyze", help="spectral and radius report for a model"))
    exp = sub.add_parser("experiment", help="run a seeded experiment")
    exp.add_argument("name", choices=["convergence", "inits", "qsweep", "lemma"])
    _common(exp)
    return parser


def load_config(path):
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a mapping")
    for k, v in data.items():
        if isinstance(v, dict):
            raise ValueError(f"{path}: nested value under {k!r}; config must be flat")
    return data


def make_config(args, experiment):
    """Config file values overlaid by explicit flags."""
    mapping = {}
    if getattr(args, "config", None):
        mapping.update(load_config(args.config))
    for dest, key in _FLAG_KEYS.items():
        if hasattr(args, dest):
            mapping[key] = getattr(args, dest)
    mapping["experiment"] = experiment
    return ExperimentConfig.from_mapping(mapping)


def _emit(table, out, default_name):
    if out is None:
        sys.stdout.write(table.to_csv())
        return
    path = Path(out)
    if path.suffix.lower() != ".csv":
        path.mkdir(parents=True, exist_ok=True)
        path = path / default_name
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
    table.write(path)
    log.info("wrote %s", path)


def _single_model(cfg):
    if cfg.model_dir:
        return load_model(cfg.model_dir)
    return generate_model(cfg.n, cfg.bigN, cfg.s[0], cfg.dists[0], cfg.seeds[0],
                          noise_sigma=cfg.noise_sigma, normalize=cfg.normalize)


def cmd_gen(cfg):
    if not cfg.output_dir:
        raise ValueError("gen needs --out DIR")
    model = _single_model(cfg)
    save_model(model, cfg.output_dir)
    print(f"model n={model.n} N={model.bigN} s={model.s} seed={model.seed} -> {cfg.output_dir}")
    return CsvTable(header=["n"])


def cmd_learn(cfg):
    model = _single_model(cfg)
    spec = parse_init(cfg.inits[0])
    if spec == "eps":
        spec = EpsilonBall(epsilon_for_support_recovery(model, cfg.eps_fraction))
    w0 = make_init(spec, model, cfg.seeds[0])
    res = learn(model.p, model.s, w0, cfg.max_iter, cfg.obj_tol, ground_truth=model)
    t = provenance_table(cfg, ["iteration", "objective", "objective_coding", "werr", "zerr",
                     "support_recovery", "werr_raw", "zerr_raw"])
    t.comments.append(f"init {init_label(spec)} stop {res.stop_reason.value}")
    for r in res.trace:
        t.add(r.t, r.objective, r.objective_coding, r.werr, r.zerr, r.support_recovery,
              r.werr_raw, r.zerr_raw)
    t.check("objective_nonincreasing", objective_chain_ok(res.trace))
    if cfg.output_dir and Path(cfg.output_dir).suffix.lower() != ".csv":
        Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
        write_matrix(Path(cfg.output_dir) / "w_final.utlm", res.w_final)
    _emit(t, cfg.output_dir, "trace.csv")
    return t


def cmd_analyze(cfg):
    t = run_analyze(cfg, load_model(cfg.model_dir) if cfg.model_dir else None)
    _emit(t, cfg.output_dir, "analyze.csv")
    return t


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "experiment":
            cfg = make_config(args, args.name)
            table = run_experiment(cfg)
            _emit(table, cfg.output_dir, f"{args.name}.csv")
        else:
            cfg = make_config(args, "analyze" if args.command == "analyze" else "convergence")
            table = {"gen": cmd_gen, "learn": cmd_learn, "analyze": cmd_analyze}[args.command](cfg)
    except (ValueError, MatrixFormatError, NumericalError, OSError) as exc:
        print(f"utlearn: error: {exc}", file=sys.stderr)
        return 2
    failed = table.failed_checks
    for name in failed:
        print(f"utlearn: check failed: {name}", file=sys.stderr)
    return 1 if failed else 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
