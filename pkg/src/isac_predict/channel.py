"""Geometric shared-scatterer channel synthesis and dataset generation.

A scenario is a set of propagation paths split into shared, comm-only and
sensing-only scatterers. Shared paths use one set of angles and one Doppler
shift for both channels, which is exactly the correlation the predictor is
meant to exploit. Within a prediction window all parameters are frozen
except the per-slot Doppler phasor, so slot-to-slot variation comes purely
from constructive/destructive recombination of the paths.

The frequency response at subcarrier k uses f_k = k * delta_f (baseband
offset), so a path at delay tau appears as a pure phase ramp across
subcarriers and lands at tap tau * K * delta_f after the unitary IDFT.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .errors import ConfigError
from .fourier import idft

C_LIGHT = 299_792_458.0

DATASET_MAGIC = b"ISAC1"

KIND_SHARED = "shared"
KIND_COMM = "comm-only"
KIND_SENSE = "sense-only"


@dataclass
class OfdmGrid:
    """OFDM numerology: subcarrier count/spacing and carrier frequency."""
    k: int = 48
    delta_f: float = 60e3
    f_c: float = 28e9

    def __post_init__(self):
        if self.k < 2:
            raise ConfigError(f"need at least 2 subcarriers, got {self.k}")
        if self.delta_f <= 0:
            raise ConfigError("subcarrier spacing must be positive")

    @property
    def wavelength(self) -> float:
        return C_LIGHT / self.f_c

    def subcarrier_offsets(self) -> np.ndarray:
        """Baseband frequency offset of each subcarrier."""
        return np.arange(self.k) * self.delta_f


@dataclass
class ArrayGeometry:
    """Uniform planar array: N = n_v * n_h elements, default half-wavelength."""
    n_v: int = 4
    n_h: int = 4
    d_v: float = 0.0          # 0 means lambda/2 at construction sites
    d_h: float = 0.0
    wavelength: float = C_LIGHT / 28e9

    def __post_init__(self):
        if self.n_v < 1 or self.n_h < 1:
            raise ConfigError("antenna counts must be >= 1")
        if self.d_v == 0.0:
            self.d_v = self.wavelength / 2.0
        if self.d_h == 0.0:
            self.d_h = self.wavelength / 2.0
        if self.d_v <= 0 or self.d_h <= 0:
            raise ConfigError("antenna spacings must be positive")

    @property
    def n(self) -> int:
        return self.n_v * self.n_h


@dataclass
class PathParams:
    """One propagation path; which fields are live depends on `kind`."""
    kind: str
    theta: float                      # elevation AoD, radians
    phi: float                        # azimuth AoD, radians
    f_d: float                        # Doppler shift, Hz
    alpha: complex = 0j               # comm coefficient (shared / comm-only)
    beta: complex = 0j                # sensing coefficient (shared / sense-only)
    tau: float = 0.0                  # one-way comm delay, seconds
    tau_rt: float = 0.0               # round-trip sensing delay, seconds

    @property
    def in_comm(self) -> bool:
        return self.kind in (KIND_SHARED, KIND_COMM)

    @property
    def in_sense(self) -> bool:
        return self.kind in (KIND_SHARED, KIND_SENSE)


@dataclass
class ScenarioConfig:
    """Knobs for the parametric scenario generator."""
    n_v: int = 4
    n_h: int = 4
    n_shared: int = 14                # overlapping scatterers
    n_comm: int = 2                   # comm-only scatterers
    n_sense: int = 12                 # sensing-only scatterers
    include_los: bool = False         # LoS modeled as an extra shared path
    corr_rho: float = 0.7             # |beta| vs |alpha| correlation for shared paths
    speed_range_kmh: Tuple[float, float] = (10.0, 100.0)
    scatterer_speed_max: float = 5.0  # m/s, additive per-scatterer motion
    n_taps_max: Optional[int] = None  # delay support in taps; default K // 4
    slot_duration: float = 5e-4       # seconds; the paper leaves this open
    comm_power: float = 1.0           # sum of |alpha|^2 per scenario
    sense_power: float = 1.0          # sum of |beta|^2 per scenario

    def __post_init__(self):
        if self.n_shared + self.n_comm + self.n_sense + int(self.include_los) < 1:
            raise ConfigError("scenario needs at least one path")
        lo, hi = self.speed_range_kmh
        if lo > hi or lo < 0:
            raise ConfigError(f"bad speed range {self.speed_range_kmh}")
        if not 0.0 <= self.corr_rho <= 1.0:
            raise ConfigError("corr_rho must lie in [0, 1]")


@dataclass
class Scenario:
    """A sampled path set, constant over one P+Q window."""
    geometry: ArrayGeometry
    paths: List[PathParams]
    slot_duration: float
    n_shared: int
    n_comm: int
    n_sense: int
    mu_speed: float                   # m/s, recorded for speed-binned evaluation


def steering_vector(theta: float, phi: float, geometry: ArrayGeometry) -> np.ndarray:
    """UPA steering vector: Kronecker of vertical and horizontal responses.

    Each factor carries a 1/n prefactor, so every entry has magnitude
    1 / (n_v * n_h).
    """
    g = geometry
    mv = np.arange(g.n_v)
    mh = np.arange(g.n_h)
    a_v = np.exp(2j * np.pi * g.d_v / g.wavelength * mv * np.sin(theta)) / g.n_v
    a_h = np.exp(2j * np.pi * g.d_h / g.wavelength * mh
                 * np.cos(theta) * np.sin(phi)) / g.n_h
    return np.kron(a_v, a_h)


def max_delay(grid: OfdmGrid, cfg: ScenarioConfig) -> float:
    """Largest one-way delay the generator draws; well inside 1/delta_f."""
    n_taps = cfg.n_taps_max if cfg.n_taps_max is not None else max(grid.k // 4, 1)
    return 0.8 * n_taps / (grid.k * grid.delta_f)


def _draw_magnitudes(rng: np.random.Generator, taus: np.ndarray,
                     tau_rms: float, total_power: float) -> np.ndarray:
    """Rayleigh magnitudes weighted by an exponential power-delay profile,
    rescaled so the path powers sum exactly to `total_power`."""
    weights = np.exp(-taus / tau_rms) * rng.rayleigh(scale=1.0, size=taus.shape) ** 2
    weights = np.maximum(weights, 1e-12)
    return np.sqrt(total_power * weights / weights.sum())


def sample_scenario(cfg: ScenarioConfig, grid: OfdmGrid, seed) -> Scenario:
    """Draw a random scenario; bit-identical for a repeated seed."""
    rng = np.random.default_rng(seed)
    geom = ArrayGeometry(n_v=cfg.n_v, n_h=cfg.n_h, wavelength=grid.wavelength)

    n_sha = cfg.n_shared + int(cfg.include_los)
    kinds = ([KIND_SHARED] * n_sha + [KIND_COMM] * cfg.n_comm
             + [KIND_SENSE] * cfg.n_sense)
    n_paths = len(kinds)

    mu_speed = rng.uniform(*cfg.speed_range_kmh) / 3.6

    theta = rng.uniform(-np.pi / 3, np.pi / 3, size=n_paths)
    phi = rng.uniform(-np.pi / 2, np.pi / 2, size=n_paths)

    d_max = max_delay(grid, cfg)
    tau_rms = d_max / 3.0
    tau = rng.uniform(0.0, d_max, size=n_paths)
    # Round-trip delays: independent draw on the doubled (round-trip) span,
    # capped inside the unambiguous delay range of the grid.
    tau_rt = rng.uniform(0.0, min(2.0 * d_max, 0.8 / grid.delta_f), size=n_paths)

    v_eff = mu_speed + rng.uniform(0.0, cfg.scatterer_speed_max, size=n_paths)
    psi = rng.uniform(0.0, 2 * np.pi, size=n_paths)
    f_d = v_eff / grid.wavelength * np.cos(psi)

    in_comm = np.array([k != KIND_SENSE for k in kinds])
    in_sense = np.array([k != KIND_COMM for k in kinds])

    mag_a = np.zeros(n_paths)
    mag_a[in_comm] = _draw_magnitudes(rng, tau[in_comm], tau_rms, cfg.comm_power)
    # Shared sensing magnitudes correlate with |alpha|; sense-only draw fresh.
    mag_ind = _draw_magnitudes(rng, tau_rt[in_sense], 2.0 * tau_rms, cfg.sense_power)
    mag_b = np.zeros(n_paths)
    idx_sense = np.flatnonzero(in_sense)
    for j, i in enumerate(idx_sense):
        if kinds[i] == KIND_SHARED:
            mag_b[i] = cfg.corr_rho * mag_a[i] + (1.0 - cfg.corr_rho) * mag_ind[j]
        else:
            mag_b[i] = mag_ind[j]
    # Re-normalize sensing power after the correlation mix.
    b_pow = (mag_b ** 2).sum()
    if b_pow > 0:
        mag_b *= np.sqrt(cfg.sense_power / b_pow)

    phase_a = rng.uniform(0.0, 2 * np.pi, size=n_paths)
    phase_b = rng.uniform(0.0, 2 * np.pi, size=n_paths)
    alpha = mag_a * np.exp(1j * phase_a)
    beta = mag_b * np.exp(1j * phase_b)

    paths = []
    for i, kind in enumerate(kinds):
        paths.append(PathParams(
            kind=kind,
            theta=float(theta[i]), phi=float(phi[i]), f_d=float(f_d[i]),
            alpha=complex(alpha[i]) if in_comm[i] else 0j,
            beta=complex(beta[i]) if in_sense[i] else 0j,
            tau=float(tau[i]) if in_comm[i] else 0.0,
            tau_rt=float(tau_rt[i]) if in_sense[i] else 0.0,
        ))
    return Scenario(geometry=geom, paths=paths, slot_duration=cfg.slot_duration,
                    n_shared=n_sha, n_comm=cfg.n_comm, n_sense=cfg.n_sense,
                    mu_speed=mu_speed)


def _path_arrays(scenario: Scenario, sense: bool):
    """Stack the live paths of one channel into flat arrays."""
    paths = [p for p in scenario.paths if (p.in_sense if sense else p.in_comm)]
    coef = np.array([p.beta if sense else p.alpha for p in paths])
    tau = np.array([p.tau_rt if sense else p.tau for p in paths])
    f_d = np.array([p.f_d for p in paths])
    steer = np.stack([steering_vector(p.theta, p.phi, scenario.geometry)
                      for p in paths])
    return coef, tau, f_d, steer


def comm_channel_freq(scenario: Scenario, t: int, grid: OfdmGrid) -> np.ndarray:
    """Frequency-domain communication channel at slot t: [K x N] complex."""
    if t < 0:
        raise ConfigError("slot index must be non-negative")
    coef, tau, f_d, steer = _path_arrays(scenario, sense=False)
    c_t = coef * np.exp(2j * np.pi * f_d * t * scenario.slot_duration)
    ramp = np.exp(-2j * np.pi * np.outer(grid.subcarrier_offsets(), tau))
    return (ramp * c_t[None, :]) @ steer


def sense_channel_freq(scenario: Scenario, t: int, grid: OfdmGrid) -> np.ndarray:
    """Frequency-domain sensing channel at slot t: [K x N x N] complex."""
    if t < 0:
        raise ConfigError("slot index must be non-negative")
    coef, tau, f_d, steer = _path_arrays(scenario, sense=True)
    c_t = coef * np.exp(2j * np.pi * f_d * t * scenario.slot_duration)
    ramp = np.exp(-2j * np.pi * np.outer(grid.subcarrier_offsets(), tau))
    return np.einsum("kp,pn,pm->knm", ramp * c_t[None, :], steer, steer,
                     optimize=True)


def comm_channel_delay(scenario: Scenario, t: int, grid: OfdmGrid) -> np.ndarray:
    """Delay-domain view: unitary K-point IDFT of the frequency response."""
    return idft(comm_channel_freq(scenario, t, grid), axis=0)


# -- prediction windows and the dataset file --------------------------------


@dataclass
class CsiSample:
    """One training window in the frequency domain.

    comm: [P+Q, K, N] (history then targets); sensing: [P, K, N, N];
    speed in m/s.
    """
    comm: np.ndarray
    sensing: np.ndarray
    speed: float


@dataclass
class DatasetHeader:
    p: int
    q: int
    k: int
    n: int
    delta_f: float
    f_c: float
    slot_duration: float
    count: int
    speeds: List[float] = field(default_factory=list)


def synthesize_window(scenario: Scenario, grid: OfdmGrid, p: int, q: int) -> CsiSample:
    """Comm CSI for slots 0..P+Q-1 and sensing CSI for slots 0..P-1."""
    comm = np.stack([comm_channel_freq(scenario, t, grid) for t in range(p + q)])
    sensing = np.stack([sense_channel_freq(scenario, t, grid) for t in range(p)])
    return CsiSample(comm=comm.astype(np.complex64),
                     sensing=sensing.astype(np.complex64),
                     speed=scenario.mu_speed)


def _c64_bytes(x: np.ndarray) -> bytes:
    inter = np.empty(x.shape + (2,), dtype="<f4")
    inter[..., 0] = x.real
    inter[..., 1] = x.imag
    return inter.tobytes()


def _c64_from(buf: bytes, shape: tuple) -> np.ndarray:
    flat = np.frombuffer(buf, dtype="<f4").reshape(shape + (2,))
    return (flat[..., 0] + 1j * flat[..., 1]).astype(np.complex64)


def generate_dataset(path, cfg: ScenarioConfig, grid: OfdmGrid,
                     p: int, q: int, count: int, seed) -> DatasetHeader:
    """Write `count` windows, each from a fresh scenario, to an ISAC1 file."""
    if count < 1 or p < 1 or q < 1:
        raise ConfigError("count, P and Q must all be >= 1")
    child_seeds = np.random.SeedSequence(seed).spawn(count)
    samples = []
    speeds = []
    for i in range(count):
        scen = sample_scenario(cfg, grid, child_seeds[i])
        s = synthesize_window(scen, grid, p, q)
        samples.append(s)
        speeds.append(round(float(s.speed), 9))
    n = ArrayGeometry(n_v=cfg.n_v, n_h=cfg.n_h, wavelength=grid.wavelength).n
    header = DatasetHeader(p=p, q=q, k=grid.k, n=n, delta_f=grid.delta_f,
                           f_c=grid.f_c, slot_duration=cfg.slot_duration,
                           count=count, speeds=speeds)
    hjson = json.dumps({
        "P": header.p, "Q": header.q, "K": header.k, "N": header.n,
        "delta_f": header.delta_f, "f_c": header.f_c,
        "slot_duration": header.slot_duration, "count": header.count,
        "speeds": header.speeds,
    }, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(DATASET_MAGIC)
        f.write(struct.pack("<Q", len(hjson)))
        f.write(hjson)
        for s in samples:
            f.write(_c64_bytes(s.comm))
            f.write(_c64_bytes(s.sensing))
    return header


def load_dataset(path) -> Tuple[DatasetHeader, List[CsiSample]]:
    """Read an ISAC1 dataset file back into memory."""
    with open(path, "rb") as f:
        magic = f.read(len(DATASET_MAGIC))
        if magic != DATASET_MAGIC:
            raise ConfigError(f"{path}: not an ISAC1 dataset (magic {magic!r})")
        (hlen,) = struct.unpack("<Q", f.read(8))
        raw = json.loads(f.read(hlen).decode("utf-8"))
        header = DatasetHeader(p=raw["P"], q=raw["Q"], k=raw["K"], n=raw["N"],
                               delta_f=raw["delta_f"], f_c=raw["f_c"],
                               slot_duration=raw["slot_duration"],
                               count=raw["count"], speeds=raw["speeds"])
        p, q, k, n = header.p, header.q, header.k, header.n
        comm_bytes = (p + q) * k * n * 8
        sens_bytes = p * k * n * n * 8
        samples = []
        for i in range(header.count):
            comm = _c64_from(f.read(comm_bytes), (p + q, k, n))
            sensing = _c64_from(f.read(sens_bytes), (p, k, n, n))
            samples.append(CsiSample(comm=comm, sensing=sensing,
                                     speed=header.speeds[i]))
    return header, samples
