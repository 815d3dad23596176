"""Binary surface observations from tile ground truth.

Two modes are available. ``statistical`` draws the RMS energy directly from
calibrated shifted Gamma distributions. ``signal_pipeline`` synthesises an
acceleration-magnitude trace, high-pass filters it and takes its RMS.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

STATISTICAL = "statistical"
SIGNAL_PIPELINE = "signal_pipeline"

# high-energy distribution -> vibrating tile, low-energy -> non-vibrating
ASSIGN_BY_ENERGY = "by_energy"
ASSIGN_INVERTED = "inverted"

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SensorConfig:
    theta_e: float = 1.55
    alpha1: float = 0.20
    alpha2: float = 0.60
    alpha3: float = -0.60
    sample_rate: float = 350.0
    t_s: float = 500.0
    stabilize_ms: float = 500.0
    mode: str = STATISTICAL
    # (shape, scale, shift) of the two fitted RMS distributions
    gamma_low: tuple[float, float, float] = (2.52, 0.29, 0.14)
    gamma_high: tuple[float, float, float] = (5.33, 0.51, -0.20)
    assignment: str = ASSIGN_BY_ENERGY
    # signal_pipeline stand-in for the IMU trace
    signal_amplitude: float = 3.0
    signal_noise: float = 0.5
    signal_freq: float = 120.0
    signal_baseline: float = 9.81

    def __post_init__(self):
        if self.theta_e <= 0:
            raise ValueError("theta_e must be positive")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.t_s <= 0 or self.stabilize_ms < 0:
            raise ValueError("sensing window must be positive")
        if self.mode not in (STATISTICAL, SIGNAL_PIPELINE):
            raise ValueError(f"unknown sensing mode {self.mode!r}")
        if self.assignment not in (ASSIGN_BY_ENERGY, ASSIGN_INVERTED):
            raise ValueError(f"unknown distribution assignment {self.assignment!r}")
        for name in ("gamma_low", "gamma_high"):
            shape, scale, _ = getattr(self, name)
            if shape <= 0 or scale < 0:
                raise ValueError(f"{name}: shape must be > 0 and scale >= 0")
        object.__setattr__(self, "gamma_low", tuple(float(v) for v in self.gamma_low))
        object.__setattr__(self, "gamma_high", tuple(float(v) for v in self.gamma_high))

    @property
    def gamma_vib(self) -> tuple[float, float, float]:
        return self.gamma_high if self.assignment == ASSIGN_BY_ENERGY else self.gamma_low

    @property
    def gamma_nonvib(self) -> tuple[float, float, float]:
        return self.gamma_low if self.assignment == ASSIGN_BY_ENERGY else self.gamma_high

    @property
    def duration_ms(self) -> float:
        return self.stabilize_ms + self.t_s

    @property
    def n_samples(self) -> int:
        return max(1, int(round(self.t_s * self.sample_rate / 1000.0)))


def high_pass(raw, alpha1: float = 0.20, alpha2: float = 0.60, alpha3: float = -0.60) -> list[float]:
    """First-order high-pass recurrence; the previous raw sample starts at ``raw[0]``."""
    if len(raw) == 0:
        raise ValueError("cannot filter an empty series")
    out = []
    prev_out = 0.0
    prev_in = raw[0]
    for a in raw:
        prev_out = alpha1 * prev_out + alpha2 * a + alpha3 * prev_in
        prev_in = a
        out.append(prev_out)
    return out


def rms(series) -> float:
    if len(series) == 0:
        raise ValueError("RMS of an empty series")
    acc = 0.0
    for v in series:
        acc += v * v
    return math.sqrt(acc / len(series))


def classify(energy: float, theta_e: float = 1.55) -> int:
    return 1 if energy > theta_e else 0


def draw_rms(tile_bit: int, config: SensorConfig, rng) -> float:
    shape, scale, shift = config.gamma_vib if tile_bit else config.gamma_nonvib
    e = shift + scale * rng.standard_gamma(shape)
    return e if e > 0.0 else 0.0


def synthesize_signal(tile_bit: int, config: SensorConfig, rng) -> list[float]:
    """Acceleration magnitude trace: sinusoid plus Gaussian noise on vibrating tiles."""
    n = config.n_samples
    rate = config.sample_rate
    amp = config.signal_amplitude if tile_bit else 0.0
    phase = TWO_PI * rng.random() if tile_bit else 0.0
    out = []
    for i in range(n):
        s = config.signal_baseline + amp * math.sin(TWO_PI * config.signal_freq * i / rate + phase)
        out.append(s + config.signal_noise * rng.standard_normal())
    return out


def measure(tile_bit: int, config: SensorConfig, rng) -> tuple[float, int]:
    """Return ``(rms_energy, observation_bit)`` for one observation."""
    if config.mode == STATISTICAL:
        e = draw_rms(tile_bit, config, rng)
    else:
        raw = synthesize_signal(tile_bit, config, rng)
        e = rms(high_pass(raw, config.alpha1, config.alpha2, config.alpha3))
    return e, classify(e, config.theta_e)


def get_observation(tile_bit: int, config: SensorConfig, rng) -> tuple[int, float]:
    _, obs = measure(tile_bit, config, rng)
    return obs, config.duration_ms
