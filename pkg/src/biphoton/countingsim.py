"""Monte Carlo model of pulsed pair generation, gated detection and time tagging.

Each pump pulse k arrives at ``t_k = k / R_p``. The number of pairs per
pulse is Poisson(mu); each pair gives a signal click with probability
``eta_s`` and an idler click with probability ``eta_i``, jittered by the
detector's Gaussian timing noise. Fluorescence (idler only) and dark counts
are uniform inside the detection gate of each pulse. Events outside the
gate are discarded, then each channel's dead time is applied.

Generation is event-driven: the pulse train is cut into fixed blocks and
only pulses that emit something are materialised, so 1e10 pulses at low mu
cost no more than the events they produce. Every block draws from its own
``SeedSequence(seed, spawn_key=(block,))`` so results do not depend on how
blocks are distributed across workers.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import UndefinedStatisticError

BLOCK_PULSES = 2**27
SIGNAL, IDLER = 0, 1


@dataclass(frozen=True)
class SourceStats:
    mean_pairs_per_pulse: float
    fluorescence_rate_idler: float = 0.0  # counts/s, continuous time
    dark_rate_signal: float = 0.0  # counts/s
    dark_rate_idler: float = 0.0  # counts/s
    # "poisson", or "deterministic" for exactly mu pairs per pulse (mu integer)
    pair_statistics: str = "poisson"

    def __post_init__(self):
        if self.mean_pairs_per_pulse < 0:
            raise ValueError("mean pairs per pulse must be non-negative")
        if min(self.fluorescence_rate_idler, self.dark_rate_signal, self.dark_rate_idler) < 0:
            raise ValueError("background rates must be non-negative")
        if self.pair_statistics not in ("poisson", "deterministic"):
            raise ValueError(f"unknown pair statistics {self.pair_statistics!r}")
        if self.pair_statistics == "deterministic" and self.mean_pairs_per_pulse != int(self.mean_pairs_per_pulse):
            raise ValueError("deterministic pair statistics need an integer mu")


@dataclass(frozen=True)
class SourceCalibration:
    """Power scaling of the source: mu = c P^2, fluorescence linear in P."""

    pair_coefficient: float  # 1/mW^2
    fluorescence_coefficient: float = 0.0  # counts/s per mW
    dark_rate_signal: float = 0.0
    dark_rate_idler: float = 0.0

    def at_power(self, power):
        """Source statistics at average pump power ``power`` (mW)."""
        return SourceStats(
            mean_pairs_per_pulse=self.pair_coefficient * power**2,
            fluorescence_rate_idler=self.fluorescence_coefficient * power,
            dark_rate_signal=self.dark_rate_signal,
            dark_rate_idler=self.dark_rate_idler,
        )


@dataclass(frozen=True)
class DetectorModel:
    efficiency: float = 1.0
    jitter_sigma: float = 0.0  # ps
    gate_window: float = 400.0  # ps, full width centred on the pulse
    dead_time: float = 0.0  # ns

    def __post_init__(self):
        if not 0 <= self.efficiency <= 1:
            raise ValueError("efficiency must lie in [0, 1]")
        if self.gate_window <= 0:
            raise ValueError("gate window must be positive")
        if self.jitter_sigma < 0 or self.dead_time < 0:
            raise ValueError("jitter and dead time must be non-negative")


@dataclass(eq=False)
class TimeTagStream:
    channel: int
    times: np.ndarray  # int64 ps, strictly increasing
    duration: float  # s
    n_pulses: int

    def __len__(self):
        return len(self.times)

    @property
    def rate(self):
        return len(self.times) / self.duration


@dataclass(eq=False)
class CoincidenceHistogram:
    bin_width: float  # ps
    centers: np.ndarray  # ps
    counts: np.ndarray
    total_pulses: int


def pulse_times(pump, index):
    """Integer-ps arrival times of pulses ``index`` (whole and fractional period kept apart)."""
    rate_hz = pump.repetition_rate * 1e6
    whole, frac = divmod(1e12 / rate_hz, 1.0)
    index = np.asarray(index, dtype=np.int64)
    return index * np.int64(whole) + np.floor(index * frac).astype(np.int64)


def _block_seed(seed, block):
    return np.random.SeedSequence(seed, spawn_key=(block,))


def gate_acceptance(det):
    """Probability that a jittered photon falls inside the gate."""
    if det.jitter_sigma == 0:
        return 1.0
    half = (det.gate_window / 2 + 0.5) / det.jitter_sigma  # offsets are rounded to whole ps
    return math.erf(half / math.sqrt(2))


def expected_singles_rate(stats, det, pump, channel):
    """Mean recorded rate (Hz) of one channel before dead time.

    Background rates are continuous-time rates, so only the fraction
    ``gate_window * R_p`` of them is recorded.
    """
    rate_hz = pump.repetition_rate * 1e6
    pairs = stats.mean_pairs_per_pulse * det.efficiency * gate_acceptance(det) * rate_hz
    if channel == SIGNAL:
        bg = stats.dark_rate_signal
    else:
        bg = stats.fluorescence_rate_idler + stats.dark_rate_idler
    return pairs + bg * det.gate_window * 1e-12 * rate_hz


def _channel_events(rng, pair_pulse, efficiency, jitter, gate, background_rate, start, count):
    """(pulse index, offset ps) of the gated clicks of one channel in one block."""
    keep = rng.random(pair_pulse.size) < efficiency
    pulse = pair_pulse[keep]
    offset = np.rint(rng.normal(0.0, jitter, pulse.size)) if jitter > 0 else np.zeros(pulse.size)
    inside = np.abs(offset) <= gate / 2
    pulse, offset = pulse[inside], offset[inside]
    n_bg = rng.poisson(background_rate * gate * 1e-12 * count) if background_rate > 0 else 0
    if n_bg:
        bg_pulse = rng.integers(start, start + count, n_bg)
        bg_offset = np.rint(rng.uniform(-gate / 2, gate / 2, n_bg))
        pulse = np.concatenate([pulse, bg_pulse])
        offset = np.concatenate([offset, bg_offset])
    return pulse, offset.astype(np.int64)


def _simulate_block(args):
    stats, det_s, det_i, pump, seed, block, start, count = args
    rng = np.random.default_rng(_block_seed(seed, block))
    mu = stats.mean_pairs_per_pulse
    if stats.pair_statistics == "deterministic":
        pairs = np.repeat(np.arange(start, start + count, dtype=np.int64), int(mu))
    else:
        n_pairs = rng.poisson(mu * count) if mu > 0 else 0
        pairs = np.sort(rng.integers(start, start + count, n_pairs)) if n_pairs else np.empty(0, np.int64)
    out = []
    for det, bg in (
        (det_s, stats.dark_rate_signal),
        (det_i, stats.fluorescence_rate_idler + stats.dark_rate_idler),
    ):
        pulse, offset = _channel_events(
            rng, pairs, det.efficiency, det.jitter_sigma, det.gate_window, bg, start, count
        )
        out.append(np.sort(pulse_times(pump, pulse) + offset, kind="stable"))
    return out


def apply_dead_time(times, dead_time_ps):
    """Drop events that arrive within ``dead_time_ps`` of the last kept event.

    Coincident timestamps are always merged, so the result is strictly increasing.
    """
    times = np.asarray(times, dtype=np.int64)
    if times.size < 2:
        return times
    dead = max(float(dead_time_ps), 1.0)
    close = np.diff(times) < dead
    if not close.any():
        return times
    keep = np.ones(times.size, bool)
    # clusters of close events are independent; each one starts with a kept event
    last, prev = 0, -2
    for i in (np.flatnonzero(close) + 1).tolist():
        if i - 1 != prev:
            last = times[i - 1]
        if times[i] - last < dead:
            keep[i] = False
        else:
            last = times[i]
        prev = i
    return times[keep]


def simulate_time_tags(stats, det_s, det_i, pump, n_pulses, seed, max_workers=1):
    """Simulate ``n_pulses`` pump pulses; returns ``(signal, idler)`` time-tag streams."""
    n_pulses = int(n_pulses)
    if n_pulses < 1:
        raise ValueError("n_pulses must be >= 1")
    blocks = [
        (stats, det_s, det_i, pump, seed, b, start, min(BLOCK_PULSES, n_pulses - start))
        for b, start in enumerate(range(0, n_pulses, BLOCK_PULSES))
    ]
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers) as pool:
            results = list(pool.map(_simulate_block, blocks))
    else:
        results = [_simulate_block(b) for b in blocks]
    duration = n_pulses / (pump.repetition_rate * 1e6)
    streams = []
    for ch, det in ((SIGNAL, det_s), (IDLER, det_i)):
        times = np.concatenate([r[ch] for r in results]) if results else np.empty(0, np.int64)
        times = apply_dead_time(np.sort(times, kind="stable"), det.dead_time * 1e3)
        streams.append(TimeTagStream(ch, times, duration, n_pulses))
    return streams[0], streams[1]


def _delay_pairs(signal, idler, tau_min, tau_max, chunk=1 << 22):
    """Yield arrays of delays t_s - t_i with tau_min <= tau < tau_max."""
    s = np.asarray(signal, np.int64)
    i = np.asarray(idler, np.int64)
    # window of idler indices for every signal event (monotone in s: a two-pointer sweep)
    lo = np.searchsorted(i, s - tau_max, side="right")
    hi = np.searchsorted(i, s - tau_min, side="right")
    n = hi - lo
    csum = np.cumsum(n)
    start = 0
    while start < s.size:
        base = csum[start - 1] if start else 0
        stop = int(np.searchsorted(csum, base + chunk, side="right"))
        stop = max(stop, start + 1)
        counts = n[start:stop]
        if counts.sum():
            owner = np.repeat(np.arange(start, stop), counts)
            first = np.repeat(lo[start:stop] - np.concatenate([[0], np.cumsum(counts)[:-1]]), counts)
            idx = first + np.arange(counts.sum())
            yield s[owner] - i[idx]
        start = stop


def correlation_histogram(signal, idler, bin_width, span, total_pulses=None):
    """Histogram of all pairwise delays ``tau = t_s - t_i`` with bins centred on multiples of ``bin_width``.

    Bins run from ``-K`` to ``K`` with ``K = floor(span / bin_width)``; a
    delay lands in bin ``floor(tau / bin_width + 1/2)``.
    """
    if bin_width <= 0 or span < 0:
        raise ValueError("bin width must be positive and span non-negative")
    s = signal.times if isinstance(signal, TimeTagStream) else signal
    i = idler.times if isinstance(idler, TimeTagStream) else idler
    k = int(span // bin_width)
    edge = (k + 0.5) * bin_width
    counts = np.zeros(2 * k + 1, dtype=np.int64)
    for tau in _delay_pairs(s, i, -edge, edge):
        b = np.floor(tau / bin_width + 0.5).astype(np.int64) + k
        b = b[(b >= 0) & (b <= 2 * k)]
        counts += np.bincount(b, minlength=2 * k + 1)
    if total_pulses is None and isinstance(signal, TimeTagStream):
        total_pulses = signal.n_pulses
    centers = np.arange(-k, k + 1) * float(bin_width)
    return CoincidenceHistogram(float(bin_width), centers, counts, total_pulses)


def coincidence_count(signal, idler, gate_window, delay=0.0):
    """Number of signal-idler pairs with ``|tau - delay| <= gate_window / 2``."""
    s = signal.times if isinstance(signal, TimeTagStream) else np.asarray(signal)
    i = idler.times if isinstance(idler, TimeTagStream) else np.asarray(idler)
    half = gate_window / 2
    # tau in [delay - half, delay + half]  <=>  t_i in [t_s - delay - half, t_s - delay + half]
    lo = np.searchsorted(i, s - delay - half, side="left")
    hi = np.searchsorted(i, s - delay + half, side="right")
    return int((hi - lo).sum())


def subtract_fluorescence(idler_rate_measured, idler_rate_offband):
    """Idler rate with the off-band (fluorescence) level removed."""
    return idler_rate_measured - idler_rate_offband


def g2_zero(signal, idler, pump, gate_window, idler_background_rate=None):
    """Normalised cross-correlation at zero delay, ``N_si R_p / (N_s N_i)``.

    Rates are per second over the stream duration. When an idler background
    rate is given it is subtracted from the idler singles first.
    """
    duration = signal.duration
    n_si = coincidence_count(signal, idler, gate_window) / duration
    n_s = len(signal) / duration
    n_i = len(idler) / idler.duration
    if idler_background_rate is not None:
        n_i = subtract_fluorescence(n_i, idler_background_rate)
    if n_s <= 0 or n_i <= 0:
        raise UndefinedStatisticError(
            f"g2 undefined: signal rate {n_s:.4g}/s, idler rate {n_i:.4g}/s"
        )
    return n_si * pump.repetition_rate * 1e6 / (n_s * n_i)


def car(g2_value):
    """Coincidence-to-accidentals ratio."""
    return g2_value - 1.0


@dataclass(frozen=True)
class PeakStatistics:
    central: int
    side: tuple  # counts at -1 and +1 pulse period
    background: float  # mean counts per gate-wide window between pulses
    background_sigma: float
    central_significance: float
    side_significance: tuple


def peak_statistics(hist, period, gate_window):
    """Counts in gate-wide windows at tau = 0 and tau = +-period against the between-pulse level.

    The background is sampled at half-period offsets, where no pulse-correlated
    events can fall; its Poisson sigma is floored at one count.
    """
    c, w = hist.centers, hist.counts

    def window(t0):
        return int(w[np.abs(c - t0) <= gate_window / 2].sum())

    k_max = int((c[-1] - gate_window / 2) // period)
    offsets = [(k + 0.5) * period for k in range(-k_max - 1, k_max + 1)]
    offsets = [o for o in offsets if abs(o) + gate_window / 2 <= c[-1]]
    if not offsets or k_max < 1:
        raise UndefinedStatisticError("histogram span must cover at least one pulse period either side")
    bg = float(np.mean([window(o) for o in offsets]))
    sigma = float(np.sqrt(max(bg, 1.0)))
    central = window(0.0)
    side = (window(-period), window(period))
    return PeakStatistics(
        central=central,
        side=side,
        background=bg,
        background_sigma=sigma,
        central_significance=(central - bg) / sigma,
        side_significance=tuple((s - bg) / sigma for s in side),
    )


def _sub_seed(seed, *key):
    return int(np.random.SeedSequence([seed, *key]).generate_state(1)[0])


@dataclass(eq=False)
class PowerSweep:
    powers: np.ndarray  # mW
    coincidence_rate: np.ndarray  # Hz
    car: np.ndarray
    n_pulses: np.ndarray
    coincidence_exponent: float
    car_exponent: float


def loglog_exponent(x, y):
    """Least-squares slope of log y against log x."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if len(np.unique(x)) < 2:
        raise UndefinedStatisticError("exponent needs at least two distinct powers")
    if np.any(x <= 0) or np.any(y <= 0):
        raise UndefinedStatisticError("log-log fit needs positive values")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def power_sweep(calibration, det_s, det_i, pump, powers, seed, n_pulses=None, target_coincidences=2000):
    """Full pipeline per pump power, with fluorescence subtracted via a mu = 0 rerun.

    Without ``n_pulses`` each point runs long enough to expect
    ``target_coincidences`` true coincidences.
    """
    powers = np.asarray(powers, float)
    if len(np.unique(powers)) < 2:
        raise UndefinedStatisticError("a power sweep needs at least two distinct powers")
    gate = min(det_s.gate_window, det_i.gate_window)
    rates, cars, pulses = [], [], []
    for k, p in enumerate(powers):
        stats = calibration.at_power(p)
        if n_pulses is None:
            mu_eff = stats.mean_pairs_per_pulse * det_s.efficiency * det_i.efficiency
            n = int(np.ceil(target_coincidences / mu_eff)) if mu_eff > 0 else 10**6
        else:
            n = int(n_pulses)
        p_pump = replace(pump, average_power=float(p))
        sig, idl = simulate_time_tags(stats, det_s, det_i, p_pump, n, _sub_seed(seed, k, 0))
        _, offband = simulate_time_tags(
            replace(stats, mean_pairs_per_pulse=0.0), det_s, det_i, p_pump, n, _sub_seed(seed, k, 1)
        )
        g2 = g2_zero(sig, idl, p_pump, gate, idler_background_rate=offband.rate)
        rates.append(coincidence_count(sig, idl, gate) / sig.duration)
        cars.append(car(g2))
        pulses.append(n)
    rates, cars = np.array(rates), np.array(cars)
    return PowerSweep(
        powers=powers,
        coincidence_rate=rates,
        car=cars,
        n_pulses=np.array(pulses),
        coincidence_exponent=loglog_exponent(powers, rates),
        car_exponent=loglog_exponent(powers, cars),
    )
