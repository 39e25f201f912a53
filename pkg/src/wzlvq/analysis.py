"""Rate and distortion estimates, the alpha/beta split, and closed-form references.

Rates are in nats per sample throughout; ``RateEstimate`` also reports bits.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from . import codec as _codec
from .codec import MatchedFineCodebook, WzLvq
from .lattice import Lattice
from .sources import GaussianPairSpec, sample_pair
from .sublattice import shells, shortest_norm

TWO_PI_E = 2.0 * math.pi * math.e
G_A2 = 5.0 / (36.0 * math.sqrt(3.0))


# -- closed forms ------------------------------------------------------------


def wyner_bound(sigma_x: float, rho: float, R: float) -> float:
    """sigma_x^2 (1 - rho^2) e^{-2R}, R in nats per sample."""
    if R < 0:
        raise ValueError("rate must be non-negative")
    if not abs(rho) < 1:
        raise ValueError("|rho| must be < 1")
    return sigma_x**2 * (1.0 - rho**2) * math.exp(-2.0 * R)


def figure_of_merit(d_bar: float, sigma_x: float, rho: float, R: float) -> float:
    """Achieved distortion over the Wyner bound at the same rate."""
    d = wyner_bound(sigma_x, rho, R)
    if not d > 0:
        raise ValueError("Wyner bound underflowed to zero")
    return d_bar / d


def high_rate_approx(N: int, n: int) -> float:
    return math.log(N) / n


def gn_bounds(n: int) -> tuple[float, float]:
    """Sphere lower bound and random-coding upper bound on the optimal G_n."""
    if n < 1:
        raise ValueError("n must be positive")
    g = math.exp((2.0 / n) * gammaln(n / 2.0 + 1.0))
    return g / ((n + 2) * math.pi), g * math.exp(gammaln(1.0 + 2.0 / n)) / (n * math.pi)


def sphere_surface_const(n: int) -> float:
    """c_n: surface area of the unit sphere in R^n (c_1 = 2 counts the two endpoints)."""
    return 2.0 * math.pi ** (n / 2.0) / math.exp(gammaln(n / 2.0))


def ball_volume_const(k: int) -> float:
    """Volume of the unit ball in R^k (1 for k = 0)."""
    return math.pi ** (k / 2.0) / math.exp(gammaln(k / 2.0 + 1.0))


def shell_constant(n: int, N: int) -> float:
    """e_n = c_n / (d_n (N/2)^(n-1)), d_n the (n-1)-ball volume constant."""
    return sphere_surface_const(n) / (ball_volume_const(n - 1) * (N / 2.0) ** (n - 1))


def gaussian_norm(n: int, v: float) -> float:
    """||f||_{n/(n+2)} = [int f^{n/(n+2)}]^{(n+2)/n} for iid N(0, v) in R^n.

    Closed form 2 pi v ((n+2)/n)^{(n+2)/2}; tends to 2 pi e v as n grows.
    """
    if n < 1 or not v > 0:
        raise ValueError("need n >= 1 and v > 0")
    return 2.0 * math.pi * v * math.exp(0.5 * (n + 2) * math.log((n + 2) / n))


def gaussian_norm_quad(n: int, v: float) -> float:
    """Same quantity from a 1-D quadrature; the integrand factorizes over components."""
    p = n / (n + 2.0)
    f = lambda t: math.exp(p * (-0.5 * t * t / v - 0.5 * math.log(2 * math.pi * v)))
    one, _ = integrate.quad(f, -np.inf, np.inf, epsabs=0, epsrel=1e-13, limit=200)
    return math.exp(n * math.log(one) / p)


def predicted_alpha(n: int, N: int, sigma_x: float, rho: float, variant: str = "matched", *,
                    s: float | None = None, G: float | None = None) -> float:
    """High-rate estimate of the correct-decoding distortion alpha.

    ``lattice``: G(Lambda) s^2 e^{-2R}, where s is the linear size of the
    coarse cell (its volume is s^n for a unit-volume Lambda); a codec whose
    fine lattice is s_f*Lambda has s = s_f N^(1/n).  Defaults to the scale
    schedule.  ``matched``: G_n ||f_{X|Y}||_{n/(n+2)} e^{-2R}.  G defaults to
    1/12 for n = 1, the hexagonal constant for n = 2 and the sphere lower
    bound otherwise.  R = ln(N)/n.
    """
    if G is None:
        G = {1: 1.0 / 12.0, 2: G_A2}.get(n, gn_bounds(n)[0])
    R = math.log(N) / n
    if variant == "lattice":
        if s is None:
            s = _codec.scale_schedule(rho, sigma_x)
        return G * s * s * math.exp(-2.0 * R)
    if variant == "matched":
        return G * gaussian_norm(n, sigma_x**2 * (1.0 - rho**2)) * math.exp(-2.0 * R)
    raise ValueError(f"unknown variant {variant!r}")


# -- beta bounds -------------------------------------------------------------


@dataclass(frozen=True)
class BetaBoundParams:
    n: int
    N: int
    s: float
    sigma_x: float
    rho: float
    nu_coarse: float

    def __post_init__(self):
        if self.n < 1 or self.N < 1 or not (self.s > 0 and self.sigma_x > 0 and self.nu_coarse > 0):
            raise ValueError("beta bound parameters must be positive")
        if not self.rho**2 < 1:
            raise ValueError("need rho^2 < 1")

    @property
    def e_n(self) -> float:
        return shell_constant(self.n, self.N)

    @property
    def cond_var(self) -> float:
        return self.sigma_x**2 * (1.0 - self.rho**2)

    def prefactor(self) -> float:
        """(1/n) 2 nu(s kappa Lambda) s^2 / (2 pi sigma_x^2 (1 - rho^2))^(n/2)."""
        v = self.cond_var
        return 2.0 * self.nu_coarse * self.s**2 / (2.0 * math.pi * v) ** (self.n / 2.0) / self.n


def beta_params(q: WzLvq, sigma_x: float, rho: float) -> BetaBoundParams:
    return BetaBoundParams(q.dim, q.N, q.s, sigma_x, rho, q.coarse.volume)


def beta_upper_bound(p: BetaBoundParams) -> float:
    """Prefactor * e_n * r/(1-r) with r = exp(-s^2 / (2 sigma_x^2 (1-rho^2))); inf if r -> 1."""
    a = p.s**2 / (2.0 * p.cond_var)
    if not a > 0:
        return math.inf
    denom = -math.expm1(-a)
    if denom <= 0:
        return math.inf
    return p.prefactor() * p.e_n * math.exp(-a) / denom


class BetaSeries(NamedTuple):
    value: float
    tail_bound: float
    r2_max: float
    terms: int


def _count_tail(a, r2_max, packing, n, weighted):
    """Upper bound on sum over |lambda|^2 > r2_max of w exp(-a |lambda|^2).

    Disjoint balls of the packing radius rp give #{|lambda| <= r} <= (r/rp + 1)^n;
    integrating by parts against that count gives the bound.
    """
    r0 = math.sqrt(r2_max)

    def dens(r):
        w = r * r if weighted else 1.0
        dw = 2.0 * r if weighted else 0.0
        # -(d/dr)[w e^{-a r^2}] = (2 a r w - dw) e^{-a r^2}
        return max(2.0 * a * r * w - dw, 0.0) * math.exp(-a * r * r) * (r / packing + 1.0) ** n

    val, err = integrate.quad(dens, r0, np.inf, epsabs=0, epsrel=1e-10, limit=400)
    return val + abs(err)


def exact_beta_series(p: BetaBoundParams, coarse: Lattice, r2_max: float, *,
                      weighted: bool = False, rtol: float = 1e-6) -> BetaSeries:
    """Prefactor * sum over shells m of kappa(Lambda) of N_m exp(-s^2 n m / (2 sigma_x^2 (1-rho^2))).

    ``coarse`` is kappa(Lambda) at unit scale; m runs over its actual squared
    norms up to ``r2_max`` and the remainder is bounded by a packing count.
    ``weighted`` multiplies each term by m, the norm factor carried by the
    summand before shells are grouped.  Raises if the tail is not below
    ``rtol`` times the value.
    """
    a = p.s**2 * p.n / (2.0 * p.cond_var)
    sh = shells(coarse, r2_max)
    total = math.fsum(c * (m if weighted else 1.0) * math.exp(-a * m) for m, c in sh)
    packing = 0.5 * math.sqrt(shortest_norm(coarse))
    tail = _count_tail(a, r2_max, packing, p.n, weighted)
    if not tail <= rtol * total + 1e-300:
        raise ValueError(f"series tail {tail:.3g} not below {rtol:g} x value {total:.3g}; raise r2_max")
    pre = p.prefactor()
    return BetaSeries(pre * total, pre * tail, r2_max, len(sh))


# -- Monte Carlo -------------------------------------------------------------


@dataclass(frozen=True)
class DistortionReport:
    """Per-sample MSE split by the decoding-error event.

    ``alpha`` and ``beta`` are partial expectations E[mse 1{correct}] and
    E[mse 1{error}], so d_bar = alpha + beta; ``mse_correct`` and
    ``mse_error`` are the conditional means.
    """

    d_bar: float
    alpha: float
    beta: float
    p_err: float
    d_bar_stderr: float
    alpha_stderr: float
    beta_stderr: float
    p_err_stderr: float
    mse_correct: float
    mse_error: float
    n_errors: int
    trials: int
    seed: int
    mode: str

    def recombined(self) -> float:
        return (1.0 - self.p_err) * self.mse_correct + self.p_err * self.mse_error

    def to_dict(self) -> dict:
        return asdict(self)


def _batch_distortion(q, cb, spec, mode, size, ss):
    rng = np.random.default_rng(ss)
    if mode == "joint":
        x, y = sample_pair(spec, rng, size)
    else:
        x = math.sqrt(spec.conditional_var) * rng.standard_normal((size, q.dim))
        y = np.zeros_like(x)
    if cb is None:
        idx = _codec.encode(q, x)
        got = _codec.decode_coords(q, idx, y)
        err = np.any(got != q.fine.nearest_coords(x), axis=1)
        xhat = q.fine.embed(got)
    else:
        idx, chosen = _codec.select_matched(q, cb, x)
        got = _codec.decode_matched_coords(q, cb, idx, y)
        err = np.any(got != chosen, axis=1)
        xhat = cb.points[idx] + q.coarse.embed(got)
    diff = x - xhat
    mse = np.einsum("ij,ij->i", diff, diff) / q.dim
    ok = mse[~err]
    bad = mse[err]
    return (size, int(err.sum()), math.fsum(ok), math.fsum(ok * ok), math.fsum(bad), math.fsum(bad * bad))


def _run_batches(fn, trials, seed, batch, threads):
    sizes = [min(batch, trials - lo) for lo in range(0, trials, batch)]
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = list(zip(sizes, seeds))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(lambda j: fn(*j), jobs))
    return [fn(*j) for j in jobs]


def _mean_se(total, total_sq, count):
    if count == 0:
        return 0.0, 0.0
    mean = total / count
    var = max(total_sq / count - mean * mean, 0.0)
    return mean, math.sqrt(var / count)


def mc_distortion(q: WzLvq, sigma_x: float, sigma_y: float, rho: float, trials: int, seed: int, *,
                  codebook: MatchedFineCodebook | None = None, mode: str = "joint",
                  threads: int = 1, batch: int = 1 << 16) -> DistortionReport:
    """Monte Carlo distortion of the lattice codec, or the matched one if ``codebook`` is given.

    ``joint`` draws (x, y) from the joint Gaussian.  ``pinned`` fixes y = 0 and
    draws x from f(X | Y=0), the density the alpha/beta split is written for.
    A decoding error is a reconstruction different from the point the
    encoder selected.  Batches use independent seed substreams, so results
    do not depend on ``threads``.
    """
    if trials < 10_000:
        raise ValueError("mc_distortion needs at least 1e4 trials")
    if mode not in ("joint", "pinned"):
        raise ValueError(f"mode must be 'joint' or 'pinned', got {mode!r}")
    spec = GaussianPairSpec(sigma_x, sigma_y, rho, q.dim)
    parts = _run_batches(lambda m, ss: _batch_distortion(q, codebook, spec, mode, m, ss),
                         trials, seed, batch, threads)
    cols = list(zip(*parts))
    T = sum(cols[0])
    n_err = sum(cols[1])
    s_ok, s2_ok, s_bad, s2_bad = (math.fsum(c) for c in cols[2:])
    alpha, alpha_se = _mean_se(s_ok, s2_ok, T)
    beta, beta_se = _mean_se(s_bad, s2_bad, T)
    d_bar, d_se = _mean_se(s_ok + s_bad, s2_ok + s2_bad, T)
    p = n_err / T
    return DistortionReport(
        d_bar=d_bar, alpha=alpha, beta=beta, p_err=p,
        d_bar_stderr=d_se, alpha_stderr=alpha_se, beta_stderr=beta_se,
        p_err_stderr=math.sqrt(p * (1 - p) / T),
        mse_correct=s_ok / (T - n_err) if T > n_err else 0.0,
        mse_error=s_bad / n_err if n_err else 0.0,
        n_errors=n_err, trials=T, seed=seed, mode=mode)


@dataclass(frozen=True)
class RateEstimate:
    empirical_entropy_rate: float
    high_rate_approx: float
    per_index_freq: np.ndarray
    trials: int

    @property
    def entropy_bits(self) -> float:
        return self.empirical_entropy_rate / math.log(2.0)

    @property
    def high_rate_bits(self) -> float:
        return self.high_rate_approx / math.log(2.0)

    def to_dict(self) -> dict:
        return {"empirical_entropy_rate_nats": self.empirical_entropy_rate,
                "empirical_entropy_rate_bits": self.entropy_bits,
                "high_rate_approx_nats": self.high_rate_approx,
                "high_rate_approx_bits": self.high_rate_bits,
                "per_index_freq": self.per_index_freq.tolist(),
                "trials": self.trials}


def empirical_rate(q: WzLvq, sigma_x: float, trials: int, seed: int, *,
                   codebook: MatchedFineCodebook | None = None, threads: int = 1,
                   batch: int = 1 << 16) -> RateEstimate:
    """Plug-in entropy of coset indices for x ~ N(0, sigma_x^2 I), per sample."""
    if trials < 10_000:
        raise ValueError("empirical_rate needs at least 1e4 trials")

    def one(m, ss):
        x = sigma_x * np.random.default_rng(ss).standard_normal((m, q.dim))
        idx = _codec.encode(q, x) if codebook is None else _codec.encode_matched(q, codebook, x)
        return np.bincount(idx, minlength=q.N)

    counts = np.sum(_run_batches(one, trials, seed, batch, threads), axis=0)
    freq = counts / trials
    nz = freq[freq > 0]
    h = -math.fsum(nz * np.log(nz))
    return RateEstimate(h / q.dim, high_rate_approx(q.N, q.dim), freq, trials)
