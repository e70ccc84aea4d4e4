"""Single-cell channel model: distance-based path loss over Rayleigh fading.

Users are dropped uniformly by area on an annulus around the transmitter.
Path loss in dB at distance v kilometres is `intercept + slope*log10(v)`; the
loss is applied to the fading vector as an amplitude factor
`10**(-PL/exponent)`.  The exponent is configurable: the default amplitude
convention `10**(-PL/10)` lets the quoted dB figure act on power twice over,
while `20` gives the conventional dB-to-amplitude mapping.  Scheme trends are
identical either way, only absolute power levels shift.

Randomness is counter-based: each (master_seed, trial_index) pair seeds an
independent Philox stream, so trials are reproducible individually and paired
comparisons can reuse one stream per trial.  For a fixed stream the draw
order is: K distances, then the K*N_t fading matrix (row-major by user, real
parts then imaginary parts interleaved per user).
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .coded import SystemConfig


@dataclass(frozen=True)
class CellModel:
    """Cell geometry and large-scale propagation parameters (distances in km)."""

    radius_km: float = 0.5
    min_distance_km: float = 0.01
    pathloss_intercept_db: float = 148.1
    pathloss_slope_db: float = 37.6
    noise_power_dbw: float = -134.0
    pathloss_amplitude_exponent: float = 10.0

    def __post_init__(self):
        if not 0 < self.min_distance_km < self.radius_km:
            raise ValueError(
                f"need 0 < min_distance_km < radius_km, got "
                f"{self.min_distance_km} and {self.radius_km}"
            )
        if self.pathloss_amplitude_exponent <= 0:
            raise ValueError("pathloss_amplitude_exponent must be positive")

    @property
    def noise_power_w(self) -> float:
        return 10.0 ** (self.noise_power_dbw / 10.0)


def path_loss_db(distance_km, model: CellModel):
    """Path loss in dB at the given distance(s) in kilometres."""
    v = np.asarray(distance_km, dtype=float)
    if np.any(v <= 0):
        raise ValueError("distances must be positive")
    return model.pathloss_intercept_db + model.pathloss_slope_db * np.log10(v)


def amplitude_gain(distance_km, model: CellModel):
    """Amplitude factor 10**(-PL/exponent) applied to the fading vector."""
    return 10.0 ** (-path_loss_db(distance_km, model) / model.pathloss_amplitude_exponent)


@dataclass(frozen=True)
class ChannelRealization:
    """One channel draw: per-user distances, amplitude gains, and h (K x N_t)."""

    distances_km: np.ndarray
    gains: np.ndarray
    h: np.ndarray

    @property
    def num_users(self) -> int:
        return self.h.shape[0]

    @property
    def num_antennas(self) -> int:
        return self.h.shape[1]

    def fading(self) -> np.ndarray:
        """The unit-power Rayleigh part, h with the amplitude gains divided out."""
        return self.h / self.gains[:, None]


def trial_rng(master_seed: int, trial_index: int) -> np.random.Generator:
    """Independent, reproducible stream for one Monte Carlo trial."""
    seq = np.random.SeedSequence(entropy=(int(master_seed), int(trial_index)))
    return np.random.Generator(np.random.Philox(seq))


def sample_channel(cfg: SystemConfig, model: CellModel,
                   rng: np.random.Generator | int) -> ChannelRealization:
    """Draw distances and Rayleigh fading for all users.

    `rng` is either a Generator (consumed in the documented draw order) or an
    integer seed.  Distances are uniform in area between min_distance_km and
    radius_km.
    """
    if not isinstance(rng, np.random.Generator):
        rng = trial_rng(int(rng), 0)
    K, Nt = cfg.num_users, cfg.num_antennas
    u = rng.random(K)
    r2 = model.min_distance_km ** 2 + u * (model.radius_km ** 2 - model.min_distance_km ** 2)
    distances = np.sqrt(r2)
    normals = rng.standard_normal((K, 2 * Nt))
    fading = (normals[:, 0::2] + 1j * normals[:, 1::2]) / np.sqrt(2.0)
    gains = amplitude_gain(distances, model)
    return ChannelRealization(distances_km=distances, gains=gains, h=gains[:, None] * fading)


def dump_channel(chan: ChannelRealization, stream) -> None:
    """Write a channel realization as text; `stream` is a path or a file object.

    Format: a header line `K N_t`, one line of distances, then one line per
    user with N_t complex entries `re+imj`.  Floats use repr precision so a
    round-trip through text is exact.
    """
    own = isinstance(stream, (str, bytes))
    fh = open(stream, "w") if own else stream
    try:
        K, Nt = chan.h.shape
        fh.write(f"{K} {Nt}\n")
        fh.write(" ".join(repr(float(v)) for v in chan.distances_km) + "\n")
        for k in range(K):
            fh.write(" ".join(
                f"({float(v.real)!r}{'+' if v.imag >= 0 else ''}{float(v.imag)!r}j)"
                for v in chan.h[k]
            ) + "\n")
    finally:
        if own:
            fh.close()


def load_channel(stream, model: CellModel | None = None) -> ChannelRealization:
    """Read a channel realization written by `dump_channel`.

    Gains are recomputed from the stored distances under `model` (defaults to
    `CellModel()`); the fading can then be recovered via `fading()`.
    """
    own = isinstance(stream, (str, bytes))
    fh = open(stream, "r") if own else stream
    try:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError("malformed channel file: expected header 'K N_t'")
        K, Nt = int(header[0]), int(header[1])
        distances = np.array([float(v) for v in fh.readline().split()], dtype=float)
        if distances.shape != (K,):
            raise ValueError("malformed channel file: distance count mismatch")
        rows = []
        for k in range(K):
            tokens = fh.readline().split()
            if len(tokens) != Nt:
                raise ValueError(f"malformed channel file: row {k + 1} has {len(tokens)} entries, expected {Nt}")
            rows.append([complex(tok) for tok in tokens])
        h = np.array(rows, dtype=complex)
    finally:
        if own:
            fh.close()
    gains = amplitude_gain(distances, model or CellModel())
    return ChannelRealization(distances_km=distances, gains=gains, h=h)


def dumps_channel(chan: ChannelRealization) -> str:
    """`dump_channel` to a string."""
    buf = io.StringIO()
    dump_channel(chan, buf)
    return buf.getvalue()


def loads_channel(text: str, model: CellModel | None = None) -> ChannelRealization:
    """`load_channel` from a string."""
    return load_channel(io.StringIO(text), model)
