"""Fading channel states for a two-way relay network.

Two sources exchange data through a relay; there is no direct link. A
channel state holds the four link power gains of one block-fading
realization. Noise power is normalized to 1 everywhere, so received SNR
is transmit power times gain.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

RAYLEIGH = "rayleigh"
DETERMINISTIC = "deterministic"

CSV_FIELDS = ("g1r", "g2r", "gr1", "gr2")


@dataclass(frozen=True)
class ChannelState:
    """One fading realization: four positive link power gains (linear scale).

    g1r, g2r are the source-to-relay (uplink) gains; gr1, gr2 the
    relay-to-source (downlink) gains.
    """

    g1r: float
    g2r: float
    gr1: float
    gr2: float

    def __post_init__(self):
        for name in CSV_FIELDS:
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"channel gain {name} must be positive and finite, got {v!r}")

    @property
    def g_mr(self) -> float:
        """Weaker uplink gain, min(g1r, g2r)."""
        return min(self.g1r, self.g2r)

    @property
    def g_Mr(self) -> float:
        """Stronger uplink gain, max(g1r, g2r)."""
        return max(self.g1r, self.g2r)

    @property
    def g_rm(self) -> float:
        """Weakest downlink gain, min(gr1, gr2); it limits the broadcast rate."""
        return min(self.gr1, self.gr2)


@dataclass(frozen=True)
class FadingModel:
    """Sampling recipe for channel states.

    kind="rayleigh" draws i.i.d. unit-mean Rayleigh block fading, so the
    power gains are i.i.d. exponential with mean 1. kind="deterministic"
    replays the fixed state list in `states`. With reciprocal=True each
    downlink gain is forced equal to the matching uplink gain after
    sampling (gr1 := g1r, gr2 := g2r).
    """

    kind: str = RAYLEIGH
    reciprocal: bool = True
    states: tuple[ChannelState, ...] = ()

    def __post_init__(self):
        if self.kind not in (RAYLEIGH, DETERMINISTIC):
            raise ValueError(f"unknown fading kind {self.kind!r}")
        object.__setattr__(self, "states", tuple(self.states))
        if self.kind == DETERMINISTIC and not self.states:
            raise ValueError("deterministic fading model needs a non-empty state list")


def sample_states(n: int, seed: int, model: FadingModel = FadingModel()) -> list[ChannelState]:
    """Draw `n` channel states, bit-reproducible for fixed (n, seed, model).

    RNG discipline: numpy's default generator (PCG64) seeded with `seed`
    produces one exponential(mean 1) block of shape (n, 4) in row-major
    order, columns ordered (g1r, g2r, gr1, gr2). Reciprocity then
    overwrites the downlink columns. A deterministic model ignores the
    seed and returns its state list unchanged; `n` must match its length.
    """
    if n < 1:
        raise ValueError(f"need n >= 1 states, got {n}")
    if model.kind == DETERMINISTIC:
        if n != len(model.states):
            raise ValueError(
                f"deterministic model has {len(model.states)} states but {n} were requested"
            )
        return list(model.states)
    rng = np.random.default_rng(seed)
    gains = rng.exponential(1.0, size=(n, 4))
    if model.reciprocal:
        gains[:, 2] = gains[:, 0]
        gains[:, 3] = gains[:, 1]
    return [ChannelState(*(float(v) for v in row)) for row in gains]


def save_states(states: list[ChannelState], path) -> None:
    """Write states as CSV with header g1r,g2r,gr1,gr2.

    Gains are printed with 17 significant digits so a reload reproduces
    the float64 values exactly.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        for s in states:
            writer.writerow([f"{v:.17g}" for v in (s.g1r, s.g2r, s.gr1, s.gr2)])


def load_states(path) -> list[ChannelState]:
    """Read channel states from a CSV file written by `save_states`.

    Raises ValueError with the offending row number on malformed or
    nonpositive entries, and on an empty data section.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_FIELDS:
            raise ValueError(f"{path}: expected header {','.join(CSV_FIELDS)}")
        out = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise ValueError(f"{path}: row {lineno}: expected 4 fields, got {len(row)}")
            try:
                gains = [float(c) for c in row]
            except ValueError:
                raise ValueError(f"{path}: row {lineno}: non-numeric gain in {row!r}") from None
            try:
                out.append(ChannelState(*gains))
            except ValueError as err:
                raise ValueError(f"{path}: row {lineno}: {err}") from None
    if not out:
        raise ValueError(f"{path}: no data rows")
    return out
