"""Physical layer of the two-hop energy-harvesting relay.

All quantities are linear (Watts, Joules) over a normalised block of unit
length, so powers and per-slot energies differ only by the slot fraction.
Every per-block formula accepts batched draws: arrays carry any number of
leading batch axes in front of the antenna axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special

from .distributions import (
    GammaParams,
    RngStream,
    ZeroDistribution,
    moment_match_gamma_sum,
    sample_complex_gaussian_vector,
    sample_nakagami_vector,
)


class DegenerateChannel(ValueError):
    """A channel vector with zero norm where the formula divides by it."""


class GeometryError(ValueError):
    pass


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0) if np.ndim(dbm) else \
        10.0 ** ((float(dbm) - 30.0) / 10.0)


def watts_to_dbm(watts):
    return 10.0 * np.log10(watts) + 30.0 if np.ndim(watts) else 10.0 * math.log10(watts) + 30.0


@dataclass(frozen=True)
class SystemConfig:
    """Physical-layer parameters of one scenario.

    ``threshold`` is the decoding SINR threshold ``2**(2 * rate) - 1``.
    Powers may be zero (a silent node); gains and noise powers must be
    strictly positive.
    """

    source_power: float
    interferer_powers: tuple = ()
    efficiency: float = 0.5
    nakagami_m: int = 2
    antennas: int = 4
    source_gain: float = 1.0
    interferer_gains: tuple = ()
    destination_gain: float = 1.0
    noise_relay: float = 1e-11
    noise_dest: float = 1e-11
    rate: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "interferer_powers", tuple(float(p) for p in self.interferer_powers))
        object.__setattr__(self, "interferer_gains", tuple(float(g) for g in self.interferer_gains))
        if len(self.interferer_powers) != len(self.interferer_gains):
            raise ValueError("interferer_powers and interferer_gains differ in length")
        if self.source_power < 0 or any(p < 0 for p in self.interferer_powers):
            raise ValueError("transmit powers must be nonnegative")
        if not 0 < self.efficiency <= 1:
            raise ValueError(f"efficiency must lie in (0, 1], got {self.efficiency}")
        if int(self.nakagami_m) != self.nakagami_m or self.nakagami_m < 1:
            raise ValueError(f"Nakagami shape must be a positive integer, got {self.nakagami_m}")
        if int(self.antennas) != self.antennas or self.antennas < 1:
            raise ValueError(f"antenna count must be a positive integer, got {self.antennas}")
        gains = (self.source_gain, self.destination_gain, *self.interferer_gains)
        if any(not g > 0 for g in gains):
            raise ValueError("average channel gains must be positive")
        if not (self.noise_relay > 0 and self.noise_dest > 0):
            raise ValueError("noise powers must be positive")
        if not self.rate >= 0:
            raise ValueError(f"rate must be nonnegative, got {self.rate}")
        object.__setattr__(self, "nakagami_m", int(self.nakagami_m))
        object.__setattr__(self, "antennas", int(self.antennas))

    @property
    def num_interferers(self) -> int:
        return len(self.interferer_powers)

    @property
    def threshold(self) -> float:
        return 2.0 ** (2.0 * self.rate) - 1.0


@dataclass(frozen=True)
class LinkBudget:
    """Everything in :class:`SystemConfig` except the average channel gains."""

    source_power: float
    interferer_powers: tuple = ()
    efficiency: float = 0.5
    nakagami_m: int = 2
    antennas: int = 4
    noise_relay: float = 1e-11
    noise_dest: float = 1e-11
    rate: float = 1.0


@dataclass(frozen=True)
class Topology:
    """Linear source-relay-destination layout with interferers around the relay."""

    d_sd: float = 20.0
    d_sr: float = 6.0
    d_ir: tuple = (12.0, 13.0, 14.0)
    pathloss_exponent: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "d_ir", tuple(float(d) for d in self.d_ir))
        if self.d_sr <= 0 or any(d <= 0 for d in self.d_ir):
            raise GeometryError("distances must be positive")
        if self.d_sd <= self.d_sr:
            raise GeometryError(f"relay at {self.d_sr} m is not between source and "
                                f"destination {self.d_sd} m apart")
        if not 2 <= self.pathloss_exponent <= 5:
            raise GeometryError(f"path-loss exponent {self.pathloss_exponent} outside [2, 5]")

    @property
    def d_rd(self) -> float:
        return self.d_sd - self.d_sr


def path_loss_gain(d: float, alpha: float) -> float:
    """Average power gain ``1 / (1 + d**alpha)``."""
    if d < 0:
        raise GeometryError(f"negative distance {d}")
    return 1.0 / (1.0 + d ** alpha)


def config_from_topology(base: LinkBudget, topo: Topology) -> SystemConfig:
    if len(base.interferer_powers) != len(topo.d_ir):
        raise GeometryError(f"{len(base.interferer_powers)} interferer powers but "
                            f"{len(topo.d_ir)} interferer distances")
    a = topo.pathloss_exponent
    return SystemConfig(
        source_power=base.source_power,
        interferer_powers=tuple(base.interferer_powers),
        efficiency=base.efficiency,
        nakagami_m=base.nakagami_m,
        antennas=base.antennas,
        source_gain=path_loss_gain(topo.d_sr, a),
        interferer_gains=tuple(path_loss_gain(d, a) for d in topo.d_ir),
        destination_gain=path_loss_gain(topo.d_rd, a),
        noise_relay=base.noise_relay,
        noise_dest=base.noise_dest,
        rate=base.rate,
    )


def with_interferer_power(cfg: SystemConfig, power: float) -> SystemConfig:
    """Copy of ``cfg`` with every interferer transmitting at ``power``."""
    return replace(cfg, interferer_powers=(power,) * cfg.num_interferers)


# ---------------------------------------------------------------------------
# per-block formulas
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelDraw:
    """One block of channel vectors (or a batch, with leading axes).

    ``h0``: source to relay, ``(..., N)``; ``g0``: relay to destination,
    ``(..., N)``; ``h_int``: interferers to relay, ``(..., L, N)``.
    """

    h0: np.ndarray
    g0: np.ndarray
    h_int: np.ndarray = field(default_factory=lambda: np.zeros((0, 1), complex))


def _power(v):
    return np.sum(v.real ** 2 + v.imag ** 2, axis=-1)


def draw_channel(stream: RngStream, cfg: SystemConfig, size=None) -> ChannelDraw:
    n = cfg.antennas
    batch = () if size is None else tuple(np.atleast_1d(size).astype(int))
    h0 = sample_nakagami_vector(stream, cfg.nakagami_m, cfg.source_gain, n, size)
    g0 = sample_complex_gaussian_vector(stream, cfg.destination_gain, n, size)
    h_int = np.empty((*batch, cfg.num_interferers, n), dtype=complex)
    for l, gain in enumerate(cfg.interferer_gains):
        h_int[..., l, :] = sample_complex_gaussian_vector(stream, gain, n, size)
    return ChannelDraw(h0=h0, g0=g0, h_int=h_int)


def _interference_energy(draw: ChannelDraw, cfg: SystemConfig):
    if cfg.num_interferers == 0:
        return np.zeros(np.shape(draw.h0)[:-1]) if np.ndim(draw.h0) > 1 else 0.0
    p = np.asarray(cfg.interferer_powers)
    return np.sum(p * _power(draw.h_int), axis=-1)


def harvested_energy_eh(draw: ChannelDraw, cfg: SystemConfig):
    """Energy harvested over a whole block in EH mode.

    Source plus interference during the first half, interference alone
    during the second half; noise is not harvested.
    """
    eta = cfg.efficiency
    return 0.5 * eta * cfg.source_power * _power(draw.h0) + eta * _interference_energy(draw, cfg)


def harvested_energy_cci_only(draw: ChannelDraw, cfg: SystemConfig):
    """Energy harvested in the second half after a failed decode (interference only)."""
    return 0.5 * cfg.efficiency * _interference_energy(draw, cfg)


def mrc_sinr(draw: ChannelDraw, cfg: SystemConfig):
    """SINR after combining with ``w = h0^H / |h0|``.

    The interference terms are the actual projections ``h0^H h_l / |h0|``
    of each interferer vector on the desired channel.
    """
    gain = _power(draw.h0)
    if np.any(gain <= 0):
        raise DegenerateChannel("source-relay channel has zero norm")
    interference = cfg.noise_relay
    if cfg.num_interferers:
        proj = np.einsum("...n,...ln->...l", np.conj(draw.h0), draw.h_int)
        v2 = (proj.real ** 2 + proj.imag ** 2) / gain[..., None]
        interference = interference + np.sum(np.asarray(cfg.interferer_powers) * v2, axis=-1)
    return cfg.source_power * gain / interference


def required_relay_power(draw: ChannelDraw, cfg: SystemConfig):
    """Smallest MRT transmit power that makes the destination SNR equal the threshold."""
    gain = _power(draw.g0)
    if np.any(gain <= 0):
        raise DegenerateChannel("relay-destination channel has zero norm")
    return cfg.threshold * cfg.noise_dest / gain


def destination_snr(draw: ChannelDraw, cfg: SystemConfig, relay_power):
    return relay_power * _power(draw.g0) / cfg.noise_dest


def cdf_required_power(x, cfg: SystemConfig):
    """CDF of the outage-free relay power.

    ``|g0|^2`` is gamma with shape ``N`` and mean ``N * Lambda0``, hence
    ``F(x) = sum_{i<N} t**i / i! * exp(-t)`` with ``t = mu sigma_D^2 / (Lambda0 x)``,
    the regularized upper incomplete gamma ``Q(N, t)``.
    """
    xx = np.asarray(x, dtype=float)
    out = np.zeros_like(xx)
    pos = xx > 0
    mu_n = cfg.threshold * cfg.noise_dest
    if mu_n == 0:
        out[pos] = 1.0
    elif np.any(pos):
        out[pos] = special.gammaincc(cfg.antennas, mu_n / (cfg.destination_gain * xx[pos]))
    return float(out) if np.ndim(x) == 0 else out


def eh_energy_summands(cfg: SystemConfig) -> list:
    n = cfg.antennas
    eta = cfg.efficiency
    terms = []
    if cfg.source_power > 0:
        terms.append(GammaParams(cfg.nakagami_m * n, 0.5 * eta * cfg.source_power * n * cfg.source_gain))
    terms += [GammaParams(n, eta * p * n * g)
              for p, g in zip(cfg.interferer_powers, cfg.interferer_gains) if p > 0]
    return terms


def cci_energy_summands(cfg: SystemConfig) -> list:
    n = cfg.antennas
    return [GammaParams(n, 0.5 * cfg.efficiency * p * n * g)
            for p, g in zip(cfg.interferer_powers, cfg.interferer_gains) if p > 0]


def eh_energy_gamma_params(cfg: SystemConfig):
    """Gamma fit ``(m_I, Omega_I)`` of the EH-mode harvested energy."""
    terms = eh_energy_summands(cfg)
    return moment_match_gamma_sum(terms) if terms else ZeroDistribution()


def cci_energy_gamma_params(cfg: SystemConfig):
    """Gamma fit ``(m_J, Omega_J)`` of the interference-only harvested energy.

    Without active interferers the energy is identically zero and a
    :class:`ZeroDistribution` is returned.
    """
    terms = cci_energy_summands(cfg)
    return moment_match_gamma_sum(terms) if terms else ZeroDistribution()
