"""
Attack detectors running on the observer innovation.

The bound-intersection detector keeps, per output channel, an interval [e2_lower, e2_upper]
that must contain the true output error e2 in healthy operation. The interval is rebuilt
from each measurement and transported between measurements with the healthy rate
envelopes; an empty interval is an alarm. The EOI detector compares the filtered
injection against its healthy band.
"""
from dataclasses import dataclass, field

import numpy as np

from app.config import logger

DETECTORS = ("novel", "eoi")


@dataclass
class NovelDetectorState:
    e2_upper: np.ndarray
    e2_lower: np.ndarray
    last_e_y: np.ndarray
    last_sign: np.ndarray
    last_measurement_time: float = float("nan")

    @classmethod
    def initial(cls, n_channels: int) -> "NovelDetectorState":
        return cls(
            e2_upper=np.full(n_channels, np.inf),
            e2_lower=np.full(n_channels, -np.inf),
            last_e_y=np.zeros(n_channels),
            last_sign=np.zeros(n_channels),
        )

    @property
    def width(self) -> np.ndarray:
        return self.e2_upper - self.e2_lower


def reset_bounds_at_measurement(
    state: NovelDetectorState,
    e_y,
    zeta_bar,
    t: float | None = None,
    e2_tilde=None,
) -> NovelDetectorState:
    """
    Rebuild the bounds from a new innovation: e2 lies within e_y +- zeta_bar and within
    the confinement band +-e2_tilde. Channels whose sign history is established also
    keep the transported bounds, so the interval only ever shrinks at a measurement.
    """
    e_y = np.asarray(e_y, dtype=float)
    zeta_bar = np.asarray(zeta_bar, dtype=float)
    clamp = zeta_bar if e2_tilde is None else np.asarray(e2_tilde, dtype=float)
    upper = np.minimum(e_y + zeta_bar, clamp)
    lower = np.maximum(e_y - zeta_bar, -clamp)
    carried = state.last_sign != 0
    upper[carried] = np.minimum(upper[carried], state.e2_upper[carried])
    lower[carried] = np.maximum(lower[carried], state.e2_lower[carried])

    state.e2_upper = upper
    state.e2_lower = lower
    state.last_e_y = e_y.copy()
    nonzero = e_y != 0
    state.last_sign = np.where(nonzero, np.sign(e_y), state.last_sign)
    if t is not None:
        state.last_measurement_time = float(t)
    return state


def propagate_bounds(state: NovelDetectorState, rates, dt: float, rates_next=None, sign=None) -> NovelDetectorState:
    """
    Transport the bounds over dt with the rate envelopes (upper0, lower0) of |e2'|.

    A negative innovation drives e2 upwards, a positive one downwards. Channels without an
    established sign are held. With rates_next the increments use the trapezoid rule.
    """
    upper0, lower0 = (np.asarray(r, dtype=float) for r in rates)
    if rates_next is not None:
        upper1, lower1 = (np.asarray(r, dtype=float) for r in rates_next)
        inc_up = 0.5 * dt * (upper0 + upper1)
        inc_lo = 0.5 * dt * (lower0 + lower1)
    else:
        inc_up = dt * upper0
        inc_lo = dt * lower0
    sign = state.last_sign if sign is None else np.asarray(sign)

    rising = sign < 0
    falling = sign > 0
    state.e2_upper = np.where(rising, state.e2_upper + inc_up, np.where(falling, state.e2_upper - inc_lo, state.e2_upper))
    state.e2_lower = np.where(rising, state.e2_lower + inc_lo, np.where(falling, state.e2_lower - inc_up, state.e2_lower))
    return state


def check_novel_detection(state: NovelDetectorState) -> np.ndarray:
    return state.e2_lower > state.e2_upper


@dataclass(frozen=True)
class EoiDetectorState:
    nu_fil_upper: np.ndarray

    @property
    def nu_fil_lower(self) -> np.ndarray:
        return -self.nu_fil_upper


def eoi_threshold_check(nu_fil, thresholds: EoiDetectorState) -> np.ndarray:
    nu_fil = np.asarray(nu_fil, dtype=float)
    return (nu_fil > thresholds.nu_fil_upper) | (nu_fil < thresholds.nu_fil_lower)


@dataclass(frozen=True)
class AlarmEvent:
    detector: str
    channel: int
    time: float
    persisted: bool
    last_seen: float

    def to_dict(self) -> dict:
        return {
            "detector": self.detector,
            "channel": self.channel,
            "time": self.time,
            "persisted": self.persisted,
            "last_seen": self.last_seen,
        }


@dataclass
class AlarmTracker:
    """
    Groups consecutive alarmed evaluations per channel into events. An event is persisted
    when its last alarmed evaluation is at least `dwell` after its onset.
    """

    detector: str
    n_channels: int
    dwell: float = 0.05
    events: list = field(default_factory=list)
    _onset: list = field(default_factory=list, repr=False)
    _last: list = field(default_factory=list, repr=False)
    _logged_raw: bool = field(default=False, repr=False)
    _logged_persistent: bool = field(default=False, repr=False)

    def __post_init__(self):
        self._onset = [None] * self.n_channels
        self._last = [None] * self.n_channels

    def _persisted(self, onset: float, last: float) -> bool:
        return last - onset >= self.dwell - 1e-9

    def _close(self, channel: int):
        onset, last = self._onset[channel], self._last[channel]
        self.events.append(AlarmEvent(self.detector, channel, onset, self._persisted(onset, last), last))
        self._onset[channel] = None
        self._last[channel] = None

    def update(self, t: float, flags) -> None:
        t = float(t)
        for channel, flag in enumerate(np.asarray(flags, dtype=bool)):
            if flag:
                if self._onset[channel] is None:
                    self._onset[channel] = t
                    if not self._logged_raw:
                        logger.info(f"First {self.detector} alarm at t={t:.3f}s on channel {channel}")
                        self._logged_raw = True
                self._last[channel] = t
                if not self._logged_persistent and self._persisted(self._onset[channel], t):
                    logger.info(
                        f"Persistent {self.detector} alarm since t={self._onset[channel]:.3f}s on channel {channel}"
                    )
                    self._logged_persistent = True
            elif self._onset[channel] is not None:
                self._close(channel)

    def finish(self) -> list:
        for channel in range(self.n_channels):
            if self._onset[channel] is not None:
                self._close(channel)
        self.events.sort(key=lambda e: (e.time, e.channel))
        return self.events

    @property
    def first_alarm_time(self) -> float | None:
        return min((e.time for e in self.events), default=None)

    @property
    def first_persistent_time(self) -> float | None:
        return min((e.time for e in self.events if e.persisted), default=None)

    def first_persistent_channel(self) -> int | None:
        persisted = [e for e in self.events if e.persisted]
        if not persisted:
            return None
        return min(persisted, key=lambda e: e.time).channel
