"""Random-variable machinery for the relay model.

Incomplete gamma evaluation, moment matching of independent gamma sums,
hypoexponential interference densities, the first-hop decoding outage and
seeded samplers for every channel quantity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np
from scipy import integrate, linalg

if TYPE_CHECKING:
    from .channel import SystemConfig

_EPS = 1e-16
_MAX_ITER = 10_000
_FPMIN = 1e-300

# relative gap below which two hypoexponential stage means count as equal
RATE_TOL = 1e-9


class DegenerateRates(ValueError):
    """Two hypoexponential stages share (numerically) the same mean."""


# ---------------------------------------------------------------------------
# incomplete gamma
# ---------------------------------------------------------------------------

def _check_gamma_args(shape, x):
    if not (math.isfinite(shape) and math.isfinite(x)):
        raise ValueError(f"non-finite argument: shape={shape}, x={x}")
    if shape <= 0:
        raise ValueError(f"shape must be positive, got {shape}")
    if x < 0:
        raise ValueError(f"x must be nonnegative, got {x}")


def _gamma_series(a, x):
    # P(a, x) by the power series, valid for x < a + 1
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    else:
        raise ArithmeticError(f"series did not converge for a={a}, x={x}")
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_continued_fraction(a, x):
    # Q(a, x) by modified Lentz, valid for x >= a + 1
    b = x + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    else:
        raise ArithmeticError(f"continued fraction did not converge for a={a}, x={x}")
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def regularized_lower_gamma(shape: float, x: float) -> float:
    """Regularized lower incomplete gamma ``P(shape, x) = gamma(shape, x) / Gamma(shape)``.

    Series expansion below ``x = shape + 1``, Lentz continued fraction above.
    """
    shape = float(shape)
    x = float(x)
    _check_gamma_args(shape, x)
    if x == 0.0:
        return 0.0
    if x < shape + 1.0:
        return min(_gamma_series(shape, x), 1.0)
    return max(1.0 - _gamma_continued_fraction(shape, x), 0.0)


def regularized_upper_gamma(shape: float, x: float) -> float:
    """Complement ``Q(shape, x) = 1 - P(shape, x)``, accurate in the far tail."""
    shape = float(shape)
    x = float(x)
    _check_gamma_args(shape, x)
    if x == 0.0:
        return 1.0
    if x < shape + 1.0:
        return max(1.0 - _gamma_series(shape, x), 0.0)
    return min(_gamma_continued_fraction(shape, x), 1.0)


# ---------------------------------------------------------------------------
# gamma family
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GammaParams:
    """Gamma law parameterised by shape and mean (scale = mean / shape)."""

    shape: float
    mean: float

    def __post_init__(self):
        if not (math.isfinite(self.shape) and self.shape > 0):
            raise ValueError(f"gamma shape must be positive and finite, got {self.shape}")
        if not (math.isfinite(self.mean) and self.mean > 0):
            raise ValueError(f"gamma mean must be positive and finite, got {self.mean}")

    @property
    def scale(self) -> float:
        return self.mean / self.shape

    @property
    def variance(self) -> float:
        return self.mean ** 2 / self.shape

    def raw_moment(self, n: int) -> float:
        """``E[X^n] = Gamma(shape + n) / Gamma(shape) * (mean / shape)^n``."""
        return math.exp(math.lgamma(self.shape + n) - math.lgamma(self.shape)
                        + n * math.log(self.scale))

    def cdf(self, x):
        return gamma_cdf(x, self)


@dataclass(frozen=True)
class ZeroDistribution:
    """Point mass at zero; stands in for a harvested energy that is identically 0."""

    shape = math.inf
    mean = 0.0
    variance = 0.0

    def cdf(self, x):
        return np.where(np.asarray(x, dtype=float) > 0, 1.0, 0.0) if np.ndim(x) else float(x > 0)


def gamma_cdf(x, p: GammaParams):
    """CDF of ``p`` at ``x``; scalar in, scalar out, arrays elementwise."""
    if np.ndim(x) == 0:
        return regularized_lower_gamma(p.shape, p.shape * float(x) / p.mean)
    arr = np.asarray(x, dtype=float)
    out = np.fromiter((regularized_lower_gamma(p.shape, p.shape * v / p.mean) for v in arr.ravel()),
                      dtype=float, count=arr.size)
    return out.reshape(arr.shape)


def moment_match_gamma_sum(summands: Sequence[GammaParams]) -> GammaParams:
    """Single gamma with the same mean and variance as a sum of independent gammas.

    The mean is the sum of the summand means; the shape follows from
    ``mean**2 / (E[S**2] - mean**2)`` where, for independent summands, the
    variance is the sum of ``a_j**2 / m_j``.
    """
    summands = list(summands)
    if not summands:
        raise ValueError("need at least one summand")
    if len(summands) == 1:
        return summands[0]
    mean = math.fsum(s.mean for s in summands)
    var = math.fsum(s.variance for s in summands)
    return GammaParams(shape=mean ** 2 / var, mean=mean)


def sum_raw_moment(summands: Sequence[GammaParams], n: int) -> float:
    """``E[(sum_j X_j)^n]`` by multinomial expansion over independent summands.

    Folds one summand at a time with the binomial theorem, which is the
    nested-sum form of the multinomial expansion.
    """
    acc = [1.0] + [0.0] * n     # moments of the empty sum
    for s in summands:
        own = [s.raw_moment(k) for k in range(n + 1)]
        acc = [math.fsum(math.comb(r, k) * acc[r - k] * own[k] for k in range(r + 1))
               for r in range(n + 1)]
    return acc[n]


# ---------------------------------------------------------------------------
# hypoexponential interference
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HypoExpParams:
    """Sum of independent exponentials, one mean per stage."""

    means: tuple

    def __init__(self, means):
        means = tuple(float(m) for m in means)
        if not means:
            raise ValueError("hypoexponential needs at least one stage")
        if any(not (math.isfinite(m) and m > 0) for m in means):
            raise ValueError(f"stage means must be positive, got {means}")
        object.__setattr__(self, "means", means)

    @property
    def mean(self) -> float:
        return math.fsum(self.means)

    def distinct(self, rtol: float = RATE_TOL) -> bool:
        ms = sorted(self.means)
        return all((b - a) > rtol * b for a, b in zip(ms, ms[1:]))

    def weights(self) -> np.ndarray:
        """Partial-fraction weights ``prod_{k != l} theta_l / (theta_l - theta_k)``."""
        if not self.distinct():
            raise DegenerateRates(f"stage means are not pairwise distinct: {self.means}")
        th = np.asarray(self.means)
        w = np.empty_like(th)
        for l, t in enumerate(th):
            others = np.delete(th, l)
            w[l] = np.prod(t / (t - others))
        return w


def hypoexp_pdf(y, p: HypoExpParams):
    """Partial-fraction density ``sum_l w_l exp(-y / theta_l) / theta_l``."""
    w = p.weights()
    th = np.asarray(p.means)
    yy = np.asarray(y, dtype=float)
    if np.any(yy < 0):
        raise ValueError("density argument must be nonnegative")
    val = np.sum(w / th * np.exp(-yy[..., None] / th), axis=-1)
    val = np.maximum(val, 0.0)
    return float(val) if np.ndim(y) == 0 else val


def hypoexp_cdf(y, p: HypoExpParams):
    w = p.weights()
    th = np.asarray(p.means)
    yy = np.asarray(y, dtype=float)
    val = np.clip(np.sum(w * -np.expm1(-yy[..., None] / th), axis=-1), 0.0, 1.0)
    return float(val) if np.ndim(y) == 0 else val


def phase_type_pdf(y: float, p: HypoExpParams) -> float:
    """Hypoexponential density through the matrix exponential of its sub-generator.

    Valid for repeated stage means, unlike :func:`hypoexp_pdf`.
    """
    rates = 1.0 / np.asarray(p.means)
    k = rates.size
    sub = np.diag(-rates) + np.diag(rates[:-1], 1)
    return float(linalg.expm(sub * y)[0, k - 1] * rates[-1])


# ---------------------------------------------------------------------------
# first-hop outage
# ---------------------------------------------------------------------------

def _interference(cfg: "SystemConfig") -> HypoExpParams | None:
    means = [p * g for p, g in zip(cfg.interferer_powers, cfg.interferer_gains) if p > 0]
    return HypoExpParams(means) if means else None


def _outage_closed(k: int, b: float, s: float, y: HypoExpParams) -> float:
    # Pr{X >= b'(Y+s)}: integrate the Erlang survival sum against each
    # exponential term of f_Y; every inner integral is a finite gamma integral.
    w = y.weights()
    log_bs = math.log(b * s)
    success = 0.0
    for wl, theta in zip(w, y.means):
        r = 1.0 / theta
        ratio = b / (b + r)
        inner = 0.0
        for kk in range(k):
            for j in range(kk + 1):
                d = kk - j
                inner += math.exp(-b * s + d * log_bs - math.lgamma(d + 1)
                                  + j * math.log(ratio))
        success += wl * r / (b + r) * inner
    return min(max(1.0 - success, 0.0), 1.0)


def _outage_quadrature(k: int, b: float, s: float, y: HypoExpParams) -> float:
    def integrand(v):
        return regularized_upper_gamma(k, b * (v + s)) * phase_type_pdf(v, y)

    upper = y.mean + 60.0 * max(y.means)
    pieces = np.linspace(0.0, upper, 9)
    success = 0.0
    for lo, hi in zip(pieces[:-1], pieces[1:]):
        val, _ = integrate.quad(integrand, lo, hi, epsabs=1e-13, epsrel=1e-11, limit=200)
        success += val
    return min(max(1.0 - success, 0.0), 1.0)


def _outage_montecarlo(cfg: "SystemConfig", n_samples: int, stream: RngStream) -> float:
    k = cfg.nakagami_m * cfg.antennas
    chunk = 1 << 20
    hits = 0
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        x = cfg.source_power * sample_gamma(stream, k, cfg.antennas * cfg.source_gain, n)
        y = np.zeros(n)
        for p, g in zip(cfg.interferer_powers, cfg.interferer_gains):
            y += p * sample_exponential(stream, g, n)
        hits += int(np.count_nonzero(x < cfg.threshold * (y + cfg.noise_relay)))
        done += n
    return hits / n_samples


def first_hop_outage_prob(cfg: "SystemConfig", method: str = "closed", *,
                          n_samples: int = 10**7, stream: RngStream | None = None) -> float:
    """Probability that the relay fails to decode, ``Pr{P0 |h0|^2 / (Y + sigma_R^2) < mu}``.

    ``method`` is one of ``closed`` (partial fractions, distinct interferer
    means only), ``quadrature``, ``montecarlo`` or ``auto`` (closed when the
    interferer means are distinct, quadrature otherwise).
    """
    if cfg.source_power <= 0:
        return 1.0
    mu = cfg.threshold
    k = cfg.nakagami_m * cfg.antennas
    b = cfg.nakagami_m * mu / (cfg.source_power * cfg.source_gain)
    s = cfg.noise_relay
    y = _interference(cfg)

    if method == "montecarlo":
        return _outage_montecarlo(cfg, n_samples, stream or RngStream(0))
    if y is None:
        return regularized_lower_gamma(k, b * s)
    if method == "auto":
        method = "closed" if y.distinct() and _well_conditioned(y) else "quadrature"
    if method == "closed":
        return _outage_closed(k, b, s, y)
    if method == "quadrature":
        return _outage_quadrature(k, b, s, y)
    raise ValueError(f"unknown method {method!r}")


def _well_conditioned(y: HypoExpParams, limit: float = 1e6) -> bool:
    return float(np.max(np.abs(y.weights()))) < limit


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

@dataclass
class RngStream:
    """Reproducible random stream keyed by ``(seed, stream)``.

    Streams with different ids are spawned from the same seed sequence and
    are statistically independent. A stream is single-owner.
    """

    seed: int
    stream: int = 0
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        seq = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream),))
        self.generator = np.random.default_rng(seq)


def sample_gamma(stream: RngStream, shape: float, mean: float, size=None):
    if not (shape > 0 and mean > 0):
        raise ValueError(f"invalid gamma parameters shape={shape}, mean={mean}")
    return stream.generator.gamma(shape, mean / shape, size)


def sample_exponential(stream: RngStream, mean: float, size=None):
    if not mean > 0:
        raise ValueError(f"invalid exponential mean {mean}")
    return stream.generator.exponential(mean, size)


def sample_complex_gaussian_vector(stream: RngStream, variance: float, n: int, size=None):
    """Circularly symmetric complex Gaussian entries, shape ``(*size, n)``."""
    if not variance > 0:
        raise ValueError(f"invalid variance {variance}")
    shape = (*np.atleast_1d(size).astype(int), n) if size is not None else (n,)
    g = stream.generator.standard_normal((*shape, 2))
    return math.sqrt(variance / 2.0) * (g[..., 0] + 1j * g[..., 1])


def sample_nakagami_vector(stream: RngStream, m: int, omega: float, n: int, size=None):
    """Nakagami-m magnitudes (average power ``omega``) with uniform phase."""
    if not (m > 0 and omega > 0):
        raise ValueError(f"invalid Nakagami parameters m={m}, omega={omega}")
    shape = (*np.atleast_1d(size).astype(int), n) if size is not None else (n,)
    power = stream.generator.gamma(m, omega / m, shape)
    phase = stream.generator.uniform(0.0, 2.0 * math.pi, shape)
    return np.sqrt(power) * np.exp(1j * phase)
