import logging
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.integrate import solve_ivp
from scipy.signal import get_window

from levitrap.core.errors import IntegrationDiverged, LevitrapError, SidebandTooLarge
from levitrap.packages.trap.mathieu import MathieuParams, SecularFrequency, secular_frequency

log = logging.getLogger("levitrap.packages.trap.displacement")

SIDEBAND_WARN = 0.2
SIDEBAND_ERROR = 0.5
# below this q_f the fast tone is dropped from the oracle integration
NEGLIGIBLE_FAST_TONE = 1e-3
DIVERGENCE_AMPLITUDE = 1e6


@dataclass(frozen=True, slots=True)
class DisplacementFunction:
    """
    Classical displacement R(t) = e^{iΩt}(1 + c_f cos ω_f t + c_s cos ω_s t) / (1 + c_f + c_s).

    Attributes
    ----------
    frequency: float
        Secular frequency Ω in rad/s.
    fast_sideband: float
        c_f = q_f/2.
    slow_sideband: float
        c_s = q_s l²/(2(l² − β²)).
    normalization: float
        1/(1 + c_f + c_s), fixes R(0) = 1.
    slow_frequency: float
    fast_frequency: float
    """

    frequency: float
    fast_sideband: float
    slow_sideband: float
    normalization: float
    slow_frequency: float
    fast_frequency: float

    def __call__(self, t: float | np.ndarray) -> complex | np.ndarray:
        envelope = (
            1
            + self.fast_sideband * np.cos(self.fast_frequency * t)
            + self.slow_sideband * np.cos(self.slow_frequency * t)
        )
        return self.normalization * np.exp(1j * self.frequency * t) * envelope

    def tones(self) -> dict[float, complex]:
        """
        Fourier decomposition: angular frequency -> complex amplitude.
        """
        n = self.normalization
        spectrum = {self.frequency: complex(n)}
        for drive, coefficient in (
            (self.fast_frequency, self.fast_sideband),
            (self.slow_frequency, self.slow_sideband),
        ):
            for sign in (1, -1):
                tone = self.frequency + sign * drive
                spectrum[tone] = spectrum.get(tone, 0) + n * coefficient / 2
        return spectrum


def displacement_function(
    params: MathieuParams, spectrum: SecularFrequency
) -> DisplacementFunction:
    """
    Build R(t) for one axis. Call the returned object with times in seconds.

    Raises
    ------
    SidebandTooLarge
        The slow sideband amplitude exceeds 0.5 (warning above 0.2).
    """
    l2 = params.l**2
    beta2 = spectrum.beta**2
    slow = params.slow_strength / (2 * (l2 - beta2)) if params.slow_strength else 0.0
    if abs(slow) > SIDEBAND_ERROR:
        raise SidebandTooLarge(
            f"Slow sideband amplitude {slow:.3g} on {params.axis.name} exceeds {SIDEBAND_ERROR}"
        )
    if abs(slow) > SIDEBAND_WARN:
        log.warning(
            f"Slow sideband amplitude {slow:.3g} on {params.axis.name} is not small, "
            "the displacement function is only qualitative"
        )
    fast = params.q_f / 2
    return DisplacementFunction(
        frequency=spectrum.frequency,
        fast_sideband=fast,
        slow_sideband=slow,
        normalization=1 / (1 + fast + slow),
        slow_frequency=params.slow_frequency,
        fast_frequency=params.fast_frequency,
    )


def integrate_mathieu(
    params: MathieuParams,
    duration: float,
    samples: int,
    initial: tuple[complex, complex] = (1.0, 0.0),
    *,
    drop_fast_tone: bool = False,
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Integrate ẍ = −W(t)x from ``initial`` = (x(0), ẋ(0)) and sample it on a uniform grid.

    Complex initial conditions are integrated as two real trajectories.

    Raises
    ------
    IntegrationDiverged
    """
    scale = params.time_scale
    wf, ws = params.fast_frequency, params.slow_frequency
    q_f = 0.0 if drop_fast_tone else params.q_f
    q_sl = params.slow_strength

    def rhs(t, state):
        w = scale * (params.a + 2 * q_f * math.cos(wf * t) + 2 * q_sl * math.cos(ws * t))
        return np.array([state[1], -w * state[0], state[3], -w * state[2]])

    x0, v0 = complex(initial[0]), complex(initial[1])
    times = np.linspace(0.0, duration, samples)
    result = solve_ivp(
        rhs,
        (0.0, duration),
        [x0.real, v0.real, x0.imag, v0.imag],
        method="DOP853",
        t_eval=times,
        rtol=rtol,
        atol=atol,
    )
    if not result.success:
        raise IntegrationDiverged(f"Mathieu integration failed: {result.message}")
    trajectory = result.y[0] + 1j * result.y[2]
    if not np.all(np.isfinite(trajectory)) or np.max(np.abs(trajectory)) > DIVERGENCE_AMPLITUDE:
        raise IntegrationDiverged(f"Motion along {params.axis.name} is not bounded")
    return times, trajectory


def _estimate_crossings(times: np.ndarray, signal: np.ndarray) -> float:
    sign = np.signbit(signal)
    idx = np.nonzero(sign[1:] != sign[:-1])[0]
    if idx.size < 4:
        raise IntegrationDiverged("Too few oscillations to estimate a frequency")
    # linear interpolation of each zero crossing
    t0, t1 = times[idx], times[idx + 1]
    s0, s1 = signal[idx], signal[idx + 1]
    crossings = t0 - s0 * (t1 - t0) / (s1 - s0)
    slope = np.polyfit(crossings, np.arange(crossings.size), 1)[0]
    return math.pi * slope


def _estimate_periodogram(times: np.ndarray, signal: np.ndarray, limit: float) -> float:
    window = get_window("hann", signal.size)
    power = np.abs(np.fft.rfft((signal - signal.mean()) * window)) ** 2
    freqs = 2 * math.pi * np.fft.rfftfreq(signal.size, times[1] - times[0])
    band = (freqs > 0) & (freqs < limit)
    if not band.any():
        raise IntegrationDiverged("Periodogram band is empty")
    k = int(np.argmax(np.where(band, power, 0.0)))
    if 0 < k < power.size - 1:
        # parabolic interpolation on the log power
        left, centre, right = np.log(power[k - 1 : k + 2])
        denominator = left - 2 * centre + right
        offset = 0.5 * (left - right) / denominator if denominator else 0.0
    else:
        offset = 0.0
    return freqs[k] + offset * (freqs[1] - freqs[0])


def classical_frequency_oracle(
    params: MathieuParams,
    *,
    periods: int = 50,
    samples_per_period: int = 200,
    method: Literal["crossings", "periodogram"] = "crossings",
) -> float:
    """
    Measure the secular frequency by integrating the Mathieu equation directly.

    The integration covers an integer number of slow periods and at least ``periods``
    secular periods, sampled ``samples_per_period`` times per period of the fastest retained
    tone. ``crossings`` fits the zero-crossing rate, which is unaffected by the deep
    frequency modulation the slow tone imposes on light particles; ``periodogram`` takes
    the Hann-windowed spectral peak below the drive tones.

    Raises
    ------
    IntegrationDiverged
        The motion is unstable.
    """
    drop_fast = abs(params.q_f) < NEGLIGIBLE_FAST_TONE
    try:
        estimate = secular_frequency(params).frequency
    except LevitrapError:
        estimate = params.fast_frequency / 2 * math.sqrt(abs(params.a) + params.q_f**2 / 2)
    if estimate == 0:
        raise IntegrationDiverged("No restoring force, nothing to measure")

    duration = periods * 2 * math.pi / estimate
    fastest = estimate
    if params.slow_strength:
        slow_period = 2 * math.pi / params.slow_frequency
        duration = math.ceil(duration / slow_period) * slow_period
        fastest = max(fastest, params.slow_frequency)
    if not drop_fast:
        fastest = max(fastest, params.fast_frequency)
    samples = int(math.ceil(duration * fastest / (2 * math.pi) * samples_per_period)) + 1

    times, trajectory = integrate_mathieu(params, duration, samples, drop_fast_tone=drop_fast)
    signal = trajectory.real
    if method == "crossings":
        return _estimate_crossings(times, signal)
    limit = params.slow_frequency if params.slow_strength else params.fast_frequency / 2
    return _estimate_periodogram(times, signal, limit)
