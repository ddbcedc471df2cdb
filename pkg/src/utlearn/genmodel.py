"""Seeded synthesis of ground-truth sparsifying models ``W* P = Z* (+ H)``.

A model couples a random orthogonal transform ``W*`` with an ``n x N``
code matrix ``Z*`` whose columns each have exactly ``s`` nonzeros on a
uniformly random support. Nonzeros are i.i.d. with zero mean and variance
``n / (s N)``, drawn from one of four distributions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from . import _kernels
from ._tol import UNITARY_TOL
from .linops import as_matrix, spectral_norm

__all__ = [
    "Gaussian",
    "ScaledSigns",
    "UniformAnnulus",
    "TruncatedExponential",
    "NonzeroDistribution",
    "parse_distribution",
    "GenerativeModel",
    "EpsilonBall",
    "RandGaussian",
    "Identity",
    "Dct",
    "Uniform01",
    "Zero",
    "FromFile",
    "InitSpec",
    "parse_init",
    "init_label",
    "gen_unitary",
    "gen_sparse_codes",
    "synthesize",
    "generate_model",
    "normalize_model",
    "make_init",
    "dct_matrix",
    "epsilon_for_support_recovery",
]


# ---------------------------------------------------------------------------
# nonzero distributions
# ---------------------------------------------------------------------------

def _random_signs(rng, size):
    return np.where(rng.random(size) < 0.5, -1.0, 1.0)


@dataclass(frozen=True)
class Gaussian:
    tag = "gaussian"

    def sample(self, rng, size, variance):
        return rng.standard_normal(size) * math.sqrt(variance)


@dataclass(frozen=True)
class ScaledSigns:
    tag = "signs"

    def sample(self, rng, size, variance):
        return _random_signs(rng, size) * math.sqrt(variance)


@dataclass(frozen=True)
class UniformAnnulus:
    """Uniform on ``[-b, -c] U [c, b]``.

    ``b`` and ``c`` are absolute bounds. Leaving both unset gives
    ``c = sqrt(3v/7)``, ``b = sqrt(12v/7)`` for the target variance ``v``;
    giving only ``b`` solves the variance equation for ``c``.
    """

    b: Optional[float] = None
    c: Optional[float] = None
    tag = "uniform"

    def bounds(self, variance):
        if self.b is None and self.c is None:
            return math.sqrt(12 * variance / 7), math.sqrt(3 * variance / 7)
        if self.b is None:
            raise ValueError("UniformAnnulus: c given without b")
        b = float(self.b)
        if self.c is None:
            disc = 12 * variance - 3 * b * b
            if disc <= b * b:
                raise ValueError(f"UniformAnnulus: b={b} too large for variance {variance}")
            c = 0.5 * (-b + math.sqrt(disc))
        else:
            c = float(self.c)
        if not 0 < c < b:
            raise ValueError(f"UniformAnnulus needs 0 < c < b, got c={c}, b={b}")
        var = (b * b + c * c + b * c) / 3
        if abs(var - variance) > 1e-9 * variance:
            raise ValueError(
                f"UniformAnnulus(b={b}, c={c}) has variance {var}, expected {variance}"
            )
        return b, c

    def sample(self, rng, size, variance):
        b, c = self.bounds(variance)
        return _random_signs(rng, size) * rng.uniform(c, b, size)


@dataclass(frozen=True)
class TruncatedExponential:
    """Density proportional to ``exp(-a|z|)`` on ``c <= |z| <= b``, set by ``K = b/c``."""

    K: float = 2.0
    tag = "texp"

    def params(self, variance):
        K = float(self.K)
        if not K > 1:
            raise ValueError(f"TruncatedExponential needs K > 1, got {K}")
        beta = math.log(K) / (K - 1)
        slack = 2 - K * beta * beta
        if slack <= 0:
            raise ValueError(f"TruncatedExponential: 2 - K beta^2 = {slack} <= 0 for K={K}")
        a = math.sqrt(slack / variance)
        c = beta / a
        return a, c, K * c

    def sample(self, rng, size, variance):
        a, c, b = self.params(variance)
        u = rng.random(size)
        # inverse CDF of the exponential restricted to [c, b]
        mag = c - np.log1p(-u * (-math.expm1(-a * (b - c)))) / a
        return _random_signs(rng, size) * np.clip(mag, c, b)


NonzeroDistribution = Union[Gaussian, ScaledSigns, UniformAnnulus, TruncatedExponential]

_DIST_TAGS = {
    "gaussian": Gaussian,
    "signs": ScaledSigns,
    "uniform": UniformAnnulus,
    "texp": TruncatedExponential,
}


def parse_distribution(text):
    """``gaussian``, ``signs``, ``uniform[:b[:c]]`` or ``texp[:K]``."""
    if not isinstance(text, str):
        return text
    name, *args = text.strip().lower().split(":")
    try:
        cls = _DIST_TAGS[name]
    except KeyError:
        raise ValueError(f"unknown distribution {text!r}; expected one of {sorted(_DIST_TAGS)}")
    return cls(*(float(x) for x in args))


# ---------------------------------------------------------------------------
# the model
# ---------------------------------------------------------------------------

def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GenerativeModel:
    n: int
    bigN: int
    s: int
    wstar: np.ndarray
    zstar: np.ndarray
    p: np.ndarray
    noise_h: Optional[np.ndarray] = None
    dist: Optional[NonzeroDistribution] = None
    seed: Optional[int] = None
    normalized: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def noise_norm(self):
        return 0.0 if self.noise_h is None else float(np.linalg.norm(self.noise_h))


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def _child_seeds(seed, k):
    return [int(x.generate_state(1, np.uint64)[0]) for x in np.random.SeedSequence(seed).spawn(k)]


def gen_unitary(n, seed):
    """Random orthogonal ``n x n`` matrix from the QR factors of a Gaussian matrix."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    for attempt in range(3):
        rng = np.random.default_rng(seed + attempt)
        g = rng.standard_normal((n, n))
        q, r = np.linalg.qr(g)
        d = np.diag(r)
        if np.min(np.abs(d)) > n * 1e-12 * np.max(np.abs(d)):
            # fix column signs so the result is Haar distributed
            return q * np.where(d < 0, -1.0, 1.0)
    raise ValueError(f"rank-deficient Gaussian draw for n={n} after 3 attempts")


def gen_sparse_codes(n, bigN, s, dist, seed):
    """``n x bigN`` matrix with exactly ``s`` nonzeros per column."""
    if not 1 <= s <= n:
        raise ValueError(f"need 1 <= s <= n, got s={s}, n={n}")
    if bigN < 1:
        raise ValueError(f"bigN must be >= 1, got {bigN}")
    dist = parse_distribution(dist)
    rng = np.random.default_rng(seed)
    supports = _kernels.fisher_yates(rng.random((bigN, s)), n)
    values = dist.sample(rng, (bigN, s), n / (s * bigN))
    # a draw of exactly 0.0 would shrink the support; redraw those entries
    while np.any(values == 0.0):
        bad = values == 0.0
        values[bad] = dist.sample(rng, int(bad.sum()), n / (s * bigN))
    z = np.zeros((n, bigN))
    z[supports.T, np.arange(bigN)] = values.T
    return z


def _column_sparsity(zstar):
    counts = np.count_nonzero(zstar, axis=0)
    return int(counts.min()), int(counts.max())


def synthesize(wstar, zstar, noise_sigma=0.0, seed=0, *, s=None, dist=None):
    """Build ``P = W*^T (Z* + H)`` with ``H`` i.i.d. N(0, noise_sigma^2)."""
    wstar = as_matrix(wstar, "wstar")
    zstar = as_matrix(zstar, "zstar")
    n = wstar.shape[0]
    if wstar.shape != (n, n):
        raise ValueError(f"wstar must be square, got {wstar.shape}")
    if zstar.shape[0] != n:
        raise ValueError(f"zstar has {zstar.shape[0]} rows, wstar is {n} x {n}")
    resid = np.linalg.norm(wstar.T @ wstar - np.eye(n))
    if resid > UNITARY_TOL * n:
        raise ValueError(f"wstar is not unitary: ||W^T W - I||_F = {resid:.3e}")
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be >= 0, got {noise_sigma}")
    lo, hi = _column_sparsity(zstar)
    if s is None:
        s = hi
    if lo != s or hi != s:
        raise ValueError(f"every column of zstar must have exactly s={s} nonzeros (found {lo}..{hi})")

    noise_h = None
    data = zstar
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        noise_h = noise_sigma * rng.standard_normal(zstar.shape)
        data = zstar + noise_h
    p = wstar.T @ data
    return GenerativeModel(
        n=n,
        bigN=zstar.shape[1],
        s=int(s),
        wstar=_frozen(wstar),
        zstar=_frozen(zstar),
        p=_frozen(p),
        noise_h=None if noise_h is None else _frozen(noise_h),
        dist=dist,
        seed=seed,
    )


def normalize_model(m):
    """Rescale ``Z*``, ``P`` and ``H`` so that ``||P||_2 = 1``."""
    scale = spectral_norm(m.p)
    if scale == 0.0:
        raise ValueError("cannot normalize a model with zero data")
    return replace(
        m,
        zstar=_frozen(m.zstar / scale),
        p=_frozen(m.p / scale),
        noise_h=None if m.noise_h is None else _frozen(m.noise_h / scale),
        normalized=True,
        meta={**m.meta, "scale": scale * m.meta.get("scale", 1.0)},
    )


def generate_model(n, bigN, s, dist="gaussian", seed=0, *, noise_sigma=0.0, normalize=False):
    """One-call model generation with independent sub-streams per component."""
    dist = parse_distribution(dist)
    w_seed, z_seed, h_seed = _child_seeds(seed, 3)
    model = synthesize(
        gen_unitary(n, w_seed),
        gen_sparse_codes(n, bigN, s, dist, z_seed),
        noise_sigma,
        h_seed,
        s=s,
        dist=dist,
    )
    model = replace(model, seed=seed)
    return normalize_model(model) if normalize else model


# ---------------------------------------------------------------------------
# initializations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EpsilonBall:
    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"EpsilonBall radius must be > 0, got {self.eps}")


@dataclass(frozen=True)
class RandGaussian:
    pass


@dataclass(frozen=True)
class Identity:
    pass


@dataclass(frozen=True)
class Dct:
    pass


@dataclass(frozen=True)
class Uniform01:
    pass


@dataclass(frozen=True)
class Zero:
    pass


@dataclass(frozen=True)
class FromFile:
    path: str


InitSpec = Union[EpsilonBall, RandGaussian, Identity, Dct, Uniform01, Zero, FromFile]

_INIT_LABELS = {
    RandGaussian: "rand",
    Identity: "id",
    Dct: "dct",
    Uniform01: "unif",
    Zero: "zero",
}


def init_label(spec):
    if isinstance(spec, EpsilonBall):
        return "eps"
    if isinstance(spec, FromFile):
        return "file"
    return _INIT_LABELS[type(spec)]


def parse_init(text):
    """Parse ``eps:<radius>``, ``rand``, ``id``, ``dct``, ``unif``, ``zero`` or ``file:<path>``.

    A bare ``eps`` is returned as the string ``"eps"``; callers resolve its
    radius from the model (see :func:`epsilon_for_support_recovery`).
    """
    if not isinstance(text, str):
        return text
    name, _, arg = text.strip().partition(":")
    name = name.lower()
    if name == "eps":
        return EpsilonBall(float(arg)) if arg else "eps"
    if name == "file":
        if not arg:
            raise ValueError("file init needs a path: file:<path>")
        return FromFile(arg)
    for cls, label in _INIT_LABELS.items():
        if name == label:
            return cls()
    raise ValueError(f"unknown init {text!r}")


def dct_matrix(n):
    """Orthonormal DCT-II matrix, row k is the k-th cosine atom."""
    k = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    d = np.cos(np.pi * (2 * j + 1) * k / (2 * n)) * math.sqrt(2.0 / n)
    d[0] = math.sqrt(1.0 / n)
    return d


def make_init(spec, model, seed=0):
    """Initial transform ``W0`` for ``model`` according to ``spec``."""
    n = model.n
    rng = np.random.default_rng(seed)
    if isinstance(spec, EpsilonBall):
        g = rng.standard_normal((n, n))
        return model.wstar + spec.eps * g / np.linalg.norm(g)
    if isinstance(spec, RandGaussian):
        return rng.standard_normal((n, n))
    if isinstance(spec, Identity):
        return np.eye(n)
    if isinstance(spec, Dct):
        return dct_matrix(n)
    if isinstance(spec, Uniform01):
        return rng.random((n, n))
    if isinstance(spec, Zero):
        return np.zeros((n, n))
    if isinstance(spec, FromFile):
        from .fileio import read_matrix

        w0 = read_matrix(spec.path)
        if w0.shape != (n, n):
            raise ValueError(f"{spec.path}: expected a {n} x {n} matrix, got {w0.shape}")
        return w0
    raise TypeError(f"not an init spec: {spec!r}")


def epsilon_for_support_recovery(model, fraction=0.5):
    """``fraction * min_j beta(z_j / ||z_j||)``, beta being the smallest nonzero magnitude.

    With ``fraction = 0.5`` this is the support-recovery radius of the
    sparse coding step.
    """
    if not 0 < fraction <= 0.5:
        raise ValueError(f"fraction must lie in (0, 0.5], got {fraction}")
    z = model.zstar if isinstance(model, GenerativeModel) else as_matrix(model, "zstar")
    norms = np.linalg.norm(z, axis=0)
    if np.any(norms == 0):
        raise ValueError("zstar has an all-zero column")
    mags = np.abs(z) / norms
    smallest = np.min(np.where(mags > 0, mags, np.inf), axis=0)
    return float(fraction * smallest.min())
