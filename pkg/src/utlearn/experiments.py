"""Seeded experiment drivers that emit :class:`~utlearn.fileio.CsvTable` reports.

Every driver loops over ``dists x s x seeds`` (plus the extra axes of the
particular experiment), evaluates the independent cells, and emits rows in
a fixed order so identical configs give identical tables. Each table opens
with ``#`` lines echoing the full config and the package version.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import Optional, Tuple

import numpy as np

from . import __version__, _kernels
from ._tol import FLOOR_SLACK, MONOTONE_SLACK, OBJ_TOL
from .analysis import (
    convergence_radius,
    corollary_s2_check,
    empirical_rate,
    spectral_report,
)
from .fileio import CsvTable
from .genmodel import (
    EpsilonBall,
    epsilon_for_support_recovery,
    generate_model,
    init_label,
    make_init,
    parse_distribution,
    parse_init,
)
from .learner import learn, sparse_code_step

__all__ = [
    "EXPERIMENTS",
    "parse_seeds",
    "ExperimentConfig",
    "run_convergence",
    "run_initializations",
    "run_qsweep",
    "run_lemma_bound",
    "run_analyze",
    "run_experiment",
    "provenance_table",
    "objective_chain_ok",
    "analyze_row",
]

EXPERIMENTS = ("convergence", "inits", "qsweep", "lemma", "analyze")

_ALIASES = {"N": "bigN", "N_list": "bigN_list", "seed": "seeds", "dist": "dists", "init": "inits"}
def _seed(v):
    return int(v)


_LIST_FIELDS = {"s": int, "s_over_n": float, "bigN_list": int, "dists": str, "inits": str,
                "seeds": _seed, "eps_list": float}


def parse_seeds(text):
    """``"0,1,2"``, ``"0-4"`` or a mix such as ``"0-2,7"``."""
    seeds = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        if sep and lo:
            a, b = int(lo), int(hi)
            if b < a:
                raise ValueError(f"empty seed range {part!r}")
            seeds.extend(range(a, b + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ValueError("no seeds given")
    return seeds


def _as_tuple(value, cast):
    if cast is _seed and isinstance(value, str):
        value = parse_seeds(value)
    if isinstance(value, str):
        value = [v for v in value.replace(";", ",").split(",") if v.strip()]
    elif not isinstance(value, (list, tuple)):
        value = [value]
    return tuple(cast(v.strip()) if isinstance(v, str) and cast is not str else cast(v) for v in value)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "convergence"
    n: int = 50
    bigN: int = 10000
    s: Tuple[int, ...] = (5, 10)
    #: sparsity levels of the q sweep as fractions of n
    s_over_n: Tuple[float, ...] = (0.06, 0.1, 0.2)
    bigN_list: Tuple[int, ...] = (2000, 5000, 10000, 20000, 50000, 100000)
    dists: Tuple[str, ...] = ("gaussian",)
    inits: Tuple[str, ...] = ("eps", "rand", "id", "dct", "unif", "zero")
    max_iter: int = 200
    obj_tol: float = OBJ_TOL
    seeds: Tuple[int, ...] = (0,)
    noise_sigma: float = 0.0
    normalize: bool = False
    #: radius of the eps init as a fraction of min_j beta(z_j / ||z_j||)
    eps_fraction: float = 0.49
    eps_list: Tuple[float, ...] = (1e-3, 0.1, 0.5, 1.0, 5.0)
    model_dir: Optional[str] = None
    output_dir: Optional[str] = None
    jobs: int = 1

    def __post_init__(self):
        for name, cast in _LIST_FIELDS.items():
            object.__setattr__(self, name, _as_tuple(getattr(self, name), cast))
        for name in ("n", "bigN", "max_iter", "jobs"):
            object.__setattr__(self, name, int(getattr(self, name)))
        for name in ("obj_tol", "noise_sigma", "eps_fraction"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "normalize", _as_bool(self.normalize))
        self.validate()

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if self.n < 1 or self.bigN < 1:
            raise ValueError(f"n and N must be positive, got n={self.n}, N={self.bigN}")
        if not self.s:
            raise ValueError("need at least one sparsity level")
        for s in self.s:
            if not 1 <= s <= self.n:
                raise ValueError(f"need 1 <= s <= n={self.n}, got s={s}")
        for r in self.s_over_n:
            if not 0 < r <= 1 or (self.experiment == "qsweep" and round(r * self.n) < 1):
                raise ValueError(f"s/n={r} gives no valid sparsity for n={self.n}")
        if not self.bigN_list or min(self.bigN_list) < 1:
            raise ValueError(f"N sweep must be nonempty and positive, got {self.bigN_list}")
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        if min(self.seeds) < 0:
            raise ValueError(f"seeds must be >= 0, got {self.seeds}")
        if not self.dists:
            raise ValueError("need at least one distribution")
        for d in self.dists:
            parse_distribution(d)
        for i in self.inits:
            parse_init(i)
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.obj_tol < 0 or self.noise_sigma < 0:
            raise ValueError("obj_tol and noise_sigma must be >= 0")
        if not 0 < self.eps_fraction <= 0.5:
            raise ValueError(f"eps_fraction must lie in (0, 0.5], got {self.eps_fraction}")
        if any(not (e >= 0 and math.isfinite(e)) for e in self.eps_list):
            raise ValueError(f"eps list entries must be finite and >= 0, got {self.eps_list}")
        if self.experiment == "lemma" and self.noise_sigma > 0:
            raise ValueError("the lemma experiment compares against noiseless codes; set noise_sigma=0")
        if self.jobs < 1:
            raise ValueError(f"jobs must be >= 1, got {self.jobs}")

    @property
    def qsweep_s(self):
        return tuple(sorted({max(1, round(r * self.n)) for r in self.s_over_n}))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_mapping(cls, mapping):
        """Build from a flat mapping (config file or parsed flags); hyphens and ``N`` aliases accepted."""
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in mapping.items():
            key = key.replace("-", "_")
            key = _ALIASES.get(key, key)
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
            if value is not None:
                kwargs[key] = value
        return cls(**kwargs)


def _as_bool(v):
    if isinstance(v, str):
        low = v.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off", ""):
            return False
        raise ValueError(f"not a boolean: {v!r}")
    return bool(v)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _init_seed(seed, label):
    """Stream for an init, independent of the model streams of the same seed."""
    key = [ord(c) for c in label]
    return int(np.random.SeedSequence([seed, 7919, *key]).generate_state(1, np.uint64)[0])


def _dist_tag(d):
    return parse_distribution(d).tag if isinstance(d, str) else d.tag


def provenance_table(cfg, header):
    t = CsvTable(header=header)
    t.comments.append(f"utlearn {__version__}")
    t.comments.append("config " + json.dumps(cfg.to_dict(), sort_keys=True))
    t.comments.append(f"normalized {cfg.normalize or cfg.experiment == 'lemma'}")
    t.comments.append("kernels " + ("numba" if _kernels.USE_NUMBA else "numpy"))
    return t


def _map(fn, tasks, jobs):
    # results come back in task order whatever the completion order
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def _model(cfg, dist, s, seed, bigN=None, normalize=None):
    return generate_model(
        cfg.n,
        cfg.bigN if bigN is None else bigN,
        s,
        dist,
        seed,
        noise_sigma=cfg.noise_sigma,
        normalize=cfg.normalize if normalize is None else normalize,
    )


def objective_chain_ok(trace, slack=MONOTONE_SLACK):
    """``f_coding(t+1) <= f(t) <= f_coding(t)`` (up to ``slack``) along a trace.

    The comparison inside the first record is skipped: ``W0`` need not be
    unitary, so the transform update may raise the objective there.
    """
    prev = math.inf
    for r in trace:
        if r.objective_coding > prev + slack:
            return False
        if r.t > 1 and r.objective > r.objective_coding + slack:
            return False
        prev = r.objective
    return True


def _nonincreasing(values, slack):
    return all(b <= a + slack for a, b in zip(values, values[1:]))


def _first(trace, pred):
    for r in trace:
        if pred(r):
            return r.t
    return None


def _safe_rate(values):
    try:
        return empirical_rate(values)
    except ValueError:
        return math.nan


# ---------------------------------------------------------------------------
# linear convergence from an eps-ball init
# ---------------------------------------------------------------------------

def _convergence_cell(args):
    cfg, dist, s, seed = args
    model = _model(cfg, dist, s, seed)
    rep = spectral_report(model)
    eps = epsilon_for_support_recovery(model, cfg.eps_fraction)
    w0 = make_init(EpsilonBall(eps), model, _init_seed(seed, "eps"))
    res = learn(model.p, s, w0, cfg.max_iter, cfg.obj_tol, ground_truth=model)
    return rep, eps, res


def run_convergence(cfg):
    t = provenance_table(cfg, ["dist", "s", "seed", "iteration", "werr", "zerr", "objective",
                     "support_recovery", "werr_raw", "zerr_raw"])
    tasks = [(cfg, d, s, seed) for d in cfg.dists for s in cfg.s for seed in cfg.seeds]
    for (_, d, s, seed), (rep, eps, res) in zip(tasks, _map(_convergence_cell, tasks, cfg.jobs)):
        tag = _dist_tag(d)
        werr = [r.werr for r in res.trace]
        t.comments.append(
            f"run dist={tag} s={s} seed={seed}: q_thm1={rep.q_thm1!r} q_n={rep.q_n!r} "
            f"q_limit={rep.q_limit!r} eps={eps!r} rate={_safe_rate(res.trace)!r} "
            f"stop={res.stop_reason.value}"
        )
        for r in res.trace:
            t.add(tag, s, seed, r.t, r.werr, r.zerr, r.objective, r.support_recovery,
                  r.werr_raw, r.zerr_raw)
        t.check("objective_nonincreasing", objective_chain_ok(res.trace))
        if cfg.noise_sigma == 0:
            t.check("werr_nonincreasing", _nonincreasing(werr, FLOOR_SLACK))
    return t


# ---------------------------------------------------------------------------
# six initializations
# ---------------------------------------------------------------------------

def _resolve_init(spec, model, cfg):
    spec = parse_init(spec)
    if spec == "eps":
        spec = EpsilonBall(epsilon_for_support_recovery(model, cfg.eps_fraction))
    return spec


def _inits_cell(args):
    cfg, dist, s, seed = args
    model = _model(cfg, dist, s, seed)
    out = []
    for text in cfg.inits:
        spec = _resolve_init(text, model, cfg)
        label = init_label(spec)
        w0 = make_init(spec, model, _init_seed(seed, label))
        out.append((label, learn(model.p, s, w0, cfg.max_iter, cfg.obj_tol, ground_truth=model)))
    return out


def run_initializations(cfg):
    t = provenance_table(cfg, ["dist", "s", "seed", "init_label", "iteration", "objective",
                     "support_recovery", "aligned_werr"])
    tasks = [(cfg, d, s, seed) for d in cfg.dists for s in cfg.s for seed in cfg.seeds]
    for (_, d, s, seed), runs in zip(tasks, _map(_inits_cell, tasks, cfg.jobs)):
        tag = _dist_tag(d)
        rates = {}
        for label, res in runs:
            rec_t = _first(res.trace, lambda r: r.support_recovery == 1.0)
            low_t = _first(res.trace, lambda r: r.objective < 1e-12)
            rates[label] = _safe_rate(res.trace)
            t.comments.append(
                f"run dist={tag} s={s} seed={seed} init={label}: recovered_at={rec_t} "
                f"rate={rates[label]!r} stop={res.stop_reason.value}"
            )
            for r in res.trace:
                t.add(tag, s, seed, label, r.t, r.objective, r.support_recovery, r.werr)
            t.check("objective_nonincreasing", objective_chain_ok(res.trace))
            t.check("support_recovered", rec_t is not None)
            t.check("support_before_objective_1e-12", low_t is None or (rec_t is not None and rec_t <= low_t))
            if label == "eps":
                t.check("eps_recovers_at_iteration_1", rec_t == 1)
        ref = rates.get("eps")
        if ref is not None and math.isfinite(ref) and ref > 0:
            for label, rate in rates.items():
                ok = math.isfinite(rate) and ref / 1.5 <= rate <= 1.5 * ref
                t.check("rates_within_1.5x_of_eps", ok)
    return t


# ---------------------------------------------------------------------------
# contraction factor sweep over N
# ---------------------------------------------------------------------------

def _qsweep_cell(args):
    cfg, dist, s, bigN, seed = args
    rep = spectral_report(_model(cfg, dist, s, seed, bigN=bigN))
    return rep.kappa, rep.max_dk_norm, rep.q_n, rep.q_limit


def run_qsweep(cfg):
    t = provenance_table(cfg, ["dist", "s", "N", "seed", "kappa", "max_dk_norm", "q_n", "q_limit"])
    ns = sorted(cfg.bigN_list)
    tasks = [(cfg, d, s, bigN, seed) for d in cfg.dists for s in cfg.qsweep_s
             for bigN in ns for seed in cfg.seeds]
    results = dict(zip([task[1:] for task in tasks], _map(_qsweep_cell, tasks, cfg.jobs)))
    for d in cfg.dists:
        tag = _dist_tag(d)
        for s in cfg.qsweep_s:
            mean_kappa = []
            last_qn = None
            for bigN in ns:
                vals = [results[(d, s, bigN, seed)] for seed in cfg.seeds]
                for seed, v in zip(cfg.seeds, vals):
                    t.add(tag, s, bigN, seed, *v)
                mean = np.mean(np.array(vals, dtype=float), axis=0)
                t.add(tag, s, bigN, "mean", *mean)
                mean_kappa.append(mean[0])
                last_qn = mean[2]
            t.check("q_n_below_1_at_largest_N", last_qn < 1)
            t.check("kappa_decreasing_in_N", all(b < a for a, b in zip(mean_kappa, mean_kappa[1:])))
    return t


# ---------------------------------------------------------------------------
# one-step code error bound
# ---------------------------------------------------------------------------

def _lemma_cell(args):
    cfg, dist, s, seed = args
    model = _model(cfg, dist, s, seed, normalize=True)
    eps1 = epsilon_for_support_recovery(model, 0.5)
    rows = []
    for i, eps in enumerate(cfg.eps_list):
        if eps == 0:
            w0 = np.array(model.wstar)
        else:
            w0 = make_init(EpsilonBall(eps), model, _init_seed(seed, f"eps{i}"))
        e0 = float(np.linalg.norm(w0 - model.wstar))
        z1 = sparse_code_step(w0, model.p, s)
        zerr = float(np.linalg.norm(z1 - model.zstar))
        # an exact init gives 0/0; report the ratio as 0
        ratio = zerr / e0 if e0 > 0 else 0.0
        rows.append((eps, eps1, e0, zerr, ratio))
    return rows


def run_lemma_bound(cfg):
    t = provenance_table(cfg, ["dist", "s", "seed", "eps", "eps1", "e0_norm", "z_err", "ratio"])
    tasks = [(cfg, d, s, seed) for d in cfg.dists for s in cfg.s for seed in cfg.seeds]
    for (_, d, s, seed), rows in zip(tasks, _map(_lemma_cell, tasks, cfg.jobs)):
        for eps, eps1, e0, zerr, ratio in rows:
            t.add(_dist_tag(d), s, seed, eps, eps1, e0, zerr, ratio)
            t.check("ratio_le_2", ratio <= 2 + 1e-9)
            if e0 < eps1:
                t.check("ratio_le_1_below_eps1", ratio <= 1 + 1e-9)
    return t


# ---------------------------------------------------------------------------
# full report for one model
# ---------------------------------------------------------------------------

ANALYZE_HEADER = [
    "dist", "s", "seed", "n", "N", "normalized",
    "kappa", "max_dk_norm", "q_thm1", "q_thm2", "q_n", "q_limit", "a3_holds", "a4_residual",
    "p_norm", "radius_q", "eps1", "eps2", "eps0_star", "c_at_eps0", "eps",
    "kappa_capped", "kappa_flag", "s2_holds", "s2_q",
]


def analyze_row(model, dist_tag="", seed=""):
    rep = spectral_report(model)
    q = rep.q_thm2
    if math.isfinite(q) and 0 <= q < 1:
        rad = convergence_radius(model, q)
        radius = [rad.eps1, rad.eps2, rad.eps0_star, rad.c_at_eps0, rad.eps,
                  rad.kappa_capped, rad.kappa_flag]
    else:
        # no contraction: the radius is undefined
        radius = [math.nan] * 5 + [False, math.isinf(rep.kappa) or rep.kappa > 1.05]
    s2 = ["", ""]
    if model.s == 2:
        holds, q2 = corollary_s2_check(model.zstar)
        s2 = [holds, q2]
    return [dist_tag, model.s, seed, model.n, model.bigN, model.normalized,
            rep.kappa, rep.max_dk_norm, rep.q_thm1, q, rep.q_n, rep.q_limit, rep.a3_holds,
            rep.a4_residual, rep.p_norm, q, *radius, *s2]


def run_analyze(cfg, model=None):
    t = provenance_table(cfg, list(ANALYZE_HEADER))
    if model is not None:
        tag = model.dist.tag if model.dist is not None else "file"
        t.add(*analyze_row(model, tag, "" if model.seed is None else model.seed))
        return t
    for d in cfg.dists:
        for s in cfg.s:
            for seed in cfg.seeds:
                t.add(*analyze_row(_model(cfg, d, s, seed), _dist_tag(d), seed))
    return t


_RUNNERS = {
    "convergence": run_convergence,
    "inits": run_initializations,
    "qsweep": run_qsweep,
    "lemma": run_lemma_bound,
    "analyze": run_analyze,
}


def run_experiment(cfg):
    return _RUNNERS[cfg.experiment](cfg)
