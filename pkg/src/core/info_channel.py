"""
SwiptMDP - Information Channel
Mutual information of the amplitude channel under uniform phase, its gradient,
expected MI over EH states, and pathloss/fading channel gains.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional, Tuple, Union

import numpy as np
from numpy.typing import NDArray
from scipy import special, stats

from debug import log_debug, log_info
from core.error_handler import CoverageError, DomainError, NumericalError

SPEED_OF_LIGHT = 299_792_458.0
LN2 = math.log(2.0)

# Probability vectors over constellation amplitudes.
AmplitudePdf = NDArray[np.float64]


class FadingModel(str, Enum):
    NONE = "none"
    RAYLEIGH = "rayleigh"
    RICIAN = "rician"


class PhaseLaw(str, Enum):
    """Transmit phase law; the optimized schemes always use UNIFORM."""
    UNIFORM = "uniform"
    HALF_CIRCLE = "half_circle"


@dataclass(frozen=True)
class LinkSpec:
    """Large-scale link geometry plus small-scale fading law."""
    exponent: float
    distance_m: float
    reference_distance_m: float = 1.0
    carrier_frequency_hz: float = 2.45e9
    fading: FadingModel = FadingModel.NONE
    k_factor: float = 1.0


@dataclass(frozen=True)
class Constellation:
    """Uniformly spaced amplitudes 0 = r_0 < ... < r_{S-1} = r_max (sqrt-watts)."""
    size: int
    r_max: float

    def __post_init__(self) -> None:
        if self.size < 1:
            raise DomainError(f"constellation size must be >= 1, got {self.size}")
        if self.r_max <= 0:
            raise DomainError(f"r_max must be positive, got {self.r_max}")

    @property
    def amplitudes(self) -> NDArray[np.float64]:
        if self.size == 1:
            return np.zeros(1)
        return np.linspace(0.0, self.r_max, self.size)

    @classmethod
    def from_peak_power_dbm(cls, size: int, peak_power_dbm: float) -> "Constellation":
        return cls(size=size, r_max=dbm_to_amplitude(peak_power_dbm))


@dataclass(frozen=True)
class ChannelSpec:
    """IR/EH amplitude gains and per-dimension noise variance (watts)."""
    ir_gain: float
    eh_gain: float
    noise_variance: float
    ir_link: Optional[LinkSpec] = None
    eh_link: Optional[LinkSpec] = None
    metadata: Dict[str, float] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if self.noise_variance <= 0:
            raise DomainError(f"noise variance must be positive, got {self.noise_variance}")
        if self.ir_gain <= 0 or self.eh_gain <= 0:
            raise DomainError("channel gains must be positive")

    @classmethod
    def from_links(cls, ir_link: LinkSpec, eh_link: LinkSpec, noise_variance: float,
                   seed: Optional[int] = None) -> "ChannelSpec":
        rng = np.random.default_rng(seed)
        ir_power = pathloss_gain(ir_link, rng)
        eh_power = pathloss_gain(eh_link, rng)
        return cls(
            ir_gain=math.sqrt(ir_power),
            eh_gain=math.sqrt(eh_power),
            noise_variance=noise_variance,
            ir_link=ir_link,
            eh_link=eh_link,
            metadata={"ir_gain_db": 10 * math.log10(ir_power),
                      "eh_gain_db": 10 * math.log10(eh_power)},
        )


def dbm_to_watts(value_dbm: float) -> float:
    return 10.0 ** ((value_dbm - 30.0) / 10.0)


def dbm_to_amplitude(value_dbm: float) -> float:
    """Amplitude in sqrt-watts whose square is the given power."""
    return math.sqrt(dbm_to_watts(value_dbm))


def check_pdf(p: NDArray[np.float64], size: Optional[int] = None,
              tol: float = 1e-6) -> NDArray[np.float64]:
    """Validate a probability vector and return it as float64."""
    arr = np.asarray(p, dtype=np.float64)
    if arr.ndim != 1:
        raise DomainError("amplitude pdf must be one-dimensional")
    if size is not None and arr.size != size:
        raise DomainError(f"amplitude pdf has {arr.size} entries, expected {size}")
    if not np.all(np.isfinite(arr)) or np.any(arr < -tol):
        raise DomainError("amplitude pdf has negative or non-finite entries")
    if abs(arr.sum() - 1.0) > tol:
        raise DomainError(f"amplitude pdf sums to {arr.sum():.9g}, expected 1")
    return arr


def pathloss_gain(link: LinkSpec,
                  rng: Union[np.random.Generator, int, None] = None) -> float:
    """Power gain |h|^2 = |h~|^2 (c / (4 pi f_c d0))^2 (d0 / d)^alpha."""
    d0 = link.reference_distance_m
    if d0 <= 0 or link.distance_m < d0:
        raise DomainError(
            f"link distance {link.distance_m} m must be >= reference distance {d0} m > 0")
    if link.carrier_frequency_hz <= 0:
        raise DomainError("carrier frequency must be positive")

    free_space = (SPEED_OF_LIGHT / (4.0 * math.pi * link.carrier_frequency_hz * d0)) ** 2
    large_scale = free_space * (d0 / link.distance_m) ** link.exponent

    if link.fading == FadingModel.NONE:
        return large_scale

    generator = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    scatter = (generator.standard_normal() + 1j * generator.standard_normal()) / math.sqrt(2.0)
    if link.fading == FadingModel.RAYLEIGH:
        small_scale = abs(scatter) ** 2
    else:
        k = link.k_factor
        if k < 0:
            raise DomainError(f"Rician K-factor must be >= 0, got {k}")
        small_scale = abs(math.sqrt(k / (k + 1.0)) + math.sqrt(1.0 / (k + 1.0)) * scatter) ** 2
    return large_scale * small_scale


def log_bessel_i0(x: NDArray[np.float64]) -> NDArray[np.float64]:
    """log I0(x) without overflow: i0e(x) = exp(-|x|) I0(x)."""
    x = np.abs(x)
    return np.log(special.i0e(x)) + x


def noise_entropy_bits(noise_variance: float) -> float:
    """Differential entropy of CN(0, 2 sigma^2) in bits."""
    return math.log2(2.0 * math.pi * math.e * noise_variance)


def _simpson_weights(n_intervals: int, step: float) -> NDArray[np.float64]:
    weights = np.ones(n_intervals + 1)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    return weights * step / 3.0


def _rician_log_kernels(r_grid: NDArray[np.float64], received: NDArray[np.float64],
                        sigma2: float) -> NDArray[np.float64]:
    """log of c_k(r)/r for every received amplitude a_k = |h_I| r_k (rows) and grid point."""
    r = r_grid[None, :]
    a = received[:, None]
    return (-math.log(sigma2) - (r ** 2 + a ** 2) / (2.0 * sigma2)
            + log_bessel_i0(r * a / sigma2))


def output_amplitude_pdf(p: AmplitudePdf, channel: ChannelSpec,
                         constellation: Constellation,
                         r_y_grid: NDArray[np.float64]) -> NDArray[np.float64]:
    """Rician-mixture density of the received amplitude on the given grid."""
    p = check_pdf(p, constellation.size)
    r_y_grid = np.asarray(r_y_grid, dtype=np.float64)
    sigma = math.sqrt(channel.noise_variance)
    received = channel.ir_gain * constellation.amplitudes

    r_cap = float(r_y_grid.max())
    if r_cap < channel.ir_gain * constellation.r_max + 8.0 * sigma:
        raise CoverageError(
            f"grid ends at {r_cap:.3e}, needs |h_I| r_max + 8 sigma = "
            f"{channel.ir_gain * constellation.r_max + 8 * sigma:.3e}")
    tail = float(np.dot(p, stats.rice.sf(r_cap, b=received / sigma, scale=sigma)))
    if tail > 1e-6:
        raise CoverageError(f"tail mass {tail:.2e} beyond grid end", {"tail_mass": tail})

    log_kernels = _rician_log_kernels(r_y_grid, received, channel.noise_variance)
    with np.errstate(divide="ignore"):
        log_q = special.logsumexp(log_kernels, axis=0, b=p[:, None])
    return np.asarray(r_y_grid * np.exp(log_q))


class AmplitudeChannel:
    """Quadrature engine for I(p), its gradient and the expected MI over states.

    The grid covers [0, |h_I| r_max + 10 sigma] and is refined at construction
    (doubling the interval count) until the MI of the uniform pdf moves < refine_tol
    bits; it then stays fixed so values and gradients share one discretization.
    """

    def __init__(self, channel: ChannelSpec, constellation: Constellation,
                 grid_intervals: int = 4096, refine_tol: float = 1e-4,
                 max_refinements: int = 4):
        self.channel = channel
        self.constellation = constellation
        self.sigma2 = channel.noise_variance
        self.received = channel.ir_gain * constellation.amplitudes
        self.r_cap = float(self.received.max() + 10.0 * math.sqrt(self.sigma2))
        self.offset = math.log2(2.0 * math.pi) - noise_entropy_bits(self.sigma2)

        uniform = np.full(constellation.size, 1.0 / constellation.size)
        intervals = grid_intervals + (grid_intervals % 2)
        self._build_grid(intervals)
        previous = self.mutual_information(uniform)
        for _ in range(max_refinements):
            self._build_grid(2 * intervals)
            current = self.mutual_information(uniform)
            if abs(current - previous) < refine_tol:
                self._build_grid(intervals)
                break
            intervals *= 2
            previous = current
        log_debug(f"MI grid: {intervals} intervals on [0, {self.r_cap:.3e}]", "CHANNEL")

    def _build_grid(self, intervals: int) -> None:
        self.grid = np.linspace(0.0, self.r_cap, intervals + 1)
        self.weights = _simpson_weights(intervals, self.r_cap / intervals)
        self._log_kernels = _rician_log_kernels(self.grid, self.received, self.sigma2)
        self._kernels_over_r = np.exp(self._log_kernels)
        self._weighted_kernels = self._kernels_over_r * (self.grid * self.weights)[None, :]

    @property
    def size(self) -> int:
        return self.constellation.size

    def _log_q(self, pdfs: NDArray[np.float64]) -> NDArray[np.float64]:
        """log(p_y(r)/r) for each row of pdfs; tails that underflow fall back to logsumexp."""
        q = pdfs @ self._kernels_over_r
        with np.errstate(divide="ignore"):
            log_q = np.log(q)
        bad_rows, bad_cols = np.nonzero(q < 1e-280)
        for row in np.unique(bad_rows):
            cols = bad_cols[bad_rows == row]
            log_q[row, cols] = special.logsumexp(
                self._log_kernels[:, cols], axis=0, b=pdfs[row][:, None])
        if not np.all(np.isfinite(log_q)):
            raise NumericalError("output density vanished on the quadrature grid")
        return np.asarray(log_q)

    def _raw_mi(self, pdfs: NDArray[np.float64]) -> NDArray[np.float64]:
        log2_q = self._log_q(pdfs) / LN2
        p_y = (pdfs @ self._kernels_over_r) * self.grid[None, :]
        return np.asarray(-(p_y * log2_q) @ self.weights + self.offset)

    def mutual_information(self, p: AmplitudePdf) -> float:
        """I(p) in bits/symbol, clamped below at zero."""
        p = check_pdf(p, self.size, tol=1e-3)
        value = float(self._raw_mi(p[None, :])[0])
        if not math.isfinite(value):
            raise NumericalError("mutual information quadrature produced a non-finite value")
        return max(value, 0.0)

    def information_density(self, p: AmplitudePdf) -> NDArray[np.float64]:
        """d_k = -int c_k log2(p_y/r) dr + log2(2 pi) - H_n, so that I(p) = sum p_k d_k.

        It is also the gradient of the perspective gamma * I(pi / gamma) in pi.
        """
        pdfs = np.atleast_2d(np.asarray(p, dtype=np.float64))
        log2_q = self._log_q(pdfs) / LN2
        return np.asarray(-(log2_q @ self._weighted_kernels.T) + self.offset).reshape(
            np.shape(p))

    def mi_gradient(self, p: AmplitudePdf) -> NDArray[np.float64]:
        """dI/dp_k = int c_k(r) [-log2(p_y/r) - 1/ln 2] dr."""
        p = check_pdf(p, self.size, tol=1e-3)
        mass = self._weighted_kernels.sum(axis=1)
        return self.information_density(p) - self.offset - mass / LN2

    def expected_mutual_information(self, pi: NDArray[np.float64]) -> float:
        """sum_i gamma_i I(pi_i / gamma_i); states with gamma_i < 1e-12 contribute 0."""
        pi = np.asarray(pi, dtype=np.float64)
        gamma = pi.sum(axis=1)
        active = gamma >= 1e-12
        if not np.any(active):
            return 0.0
        per_state = self._raw_mi(pi[active] / gamma[active, None])
        return float(np.dot(gamma[active], np.maximum(per_state, 0.0)))

    def per_state_information_density(self, pi: NDArray[np.float64]) -> NDArray[np.float64]:
        """Gradient of the expected MI with respect to the joint distribution."""
        pi = np.asarray(pi, dtype=np.float64)
        gamma = pi.sum(axis=1, keepdims=True)
        uniform = np.full(pi.shape[1], 1.0 / pi.shape[1])
        # Empty states take the limit direction of a vanishing uniform pdf.
        pdfs = (pi + 1e-12 * uniform) / (gamma + 1e-12)
        return self.information_density(pdfs)

    def maximum_bitrate(self, mi_bits: float, symbol_duration: float) -> float:
        return mi_bits / symbol_duration


def mutual_information(p: AmplitudePdf, channel: ChannelSpec,
                       constellation: Constellation) -> float:
    return AmplitudeChannel(channel, constellation).mutual_information(p)


def mi_gradient(p: AmplitudePdf, channel: ChannelSpec,
                constellation: Constellation) -> NDArray[np.float64]:
    return AmplitudeChannel(channel, constellation).mi_gradient(p)


def expected_mutual_information(pi: NDArray[np.float64], channel: ChannelSpec,
                                constellation: Constellation) -> float:
    return AmplitudeChannel(channel, constellation).expected_mutual_information(pi)


def monte_carlo_mutual_information(p: AmplitudePdf, channel: ChannelSpec,
                                   constellation: Constellation, n_samples: int,
                                   seed: int, phase_law: PhaseLaw = PhaseLaw.UNIFORM,
                                   phase_points: int = 256,
                                   chunk: int = 2000) -> Tuple[float, float]:
    """Sample-average estimate of I(X;Y) for y = h_I x + n; returns (bits, standard error)."""
    p = check_pdf(p, constellation.size)
    rng = np.random.default_rng(seed)
    sigma2 = channel.noise_variance
    received = channel.ir_gain * constellation.amplitudes

    index = rng.choice(constellation.size, size=n_samples, p=p / p.sum())
    if phase_law == PhaseLaw.UNIFORM:
        phase = rng.uniform(-math.pi, math.pi, size=n_samples)
    else:
        phase = rng.uniform(0.0, math.pi, size=n_samples)
    noise = rng.normal(0.0, math.sqrt(sigma2), size=(n_samples, 2))
    clean = received[index] * np.exp(1j * phase)
    y = clean + noise[:, 0] + 1j * noise[:, 1]

    log_norm = -math.log(2.0 * math.pi * sigma2)
    log_conditional = log_norm - np.abs(y - clean) ** 2 / (2.0 * sigma2)

    log_marginal = np.empty(n_samples)
    support = p > 0
    log_weights = np.log(p[support])
    amps = received[support]
    if phase_law == PhaseLaw.UNIFORM:
        mag = np.abs(y)
        log_terms = (log_norm - (mag[:, None] ** 2 + amps[None, :] ** 2) / (2.0 * sigma2)
                     + log_bessel_i0(mag[:, None] * amps[None, :] / sigma2))
        log_marginal = special.logsumexp(log_terms + log_weights[None, :], axis=1)
    else:
        grid = (np.arange(phase_points) + 0.5) * math.pi / phase_points
        points = amps[:, None] * np.exp(1j * grid)[None, :]
        for start in range(0, n_samples, chunk):
            block = y[start:start + chunk]
            dist2 = np.abs(block[:, None, None] - points[None, :, :]) ** 2
            log_terms = log_norm - dist2 / (2.0 * sigma2) - math.log(phase_points)
            per_amp = special.logsumexp(log_terms, axis=2)
            log_marginal[start:start + chunk] = special.logsumexp(
                per_amp + log_weights[None, :], axis=1)

    density = (log_conditional - log_marginal) / LN2
    estimate = float(density.mean())
    stderr = float(density.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else math.inf
    log_info(f"Monte-Carlo MI ({phase_law.value}): {estimate:.4f} +/- {stderr:.4f} bits",
             "CHANNEL")
    return estimate, stderr
