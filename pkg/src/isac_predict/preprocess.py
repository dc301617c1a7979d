"""Per-antenna CSI preprocessing: slicing, delay views, normalization, noise.

Each antenna n yields four real tensors [2 x K x P]: the comm stream (the
n-th element of every frequency-domain channel vector) and the sensing
stream (the n-th diagonal element of every sensing matrix), each in both
frequency and delay domain. Off-diagonal sensing entries are discarded by
design. Normalization is a per-sample scalar z-score per stream, computed
on the frequency view of the historical window only, so statistics can
never leak target slots.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .channel import CsiSample
from .errors import DegenerateSampleError, UsageError
from .fourier import complex_to_real, idft

SIGMA_FLOOR = 1e-12

NO_NOISE = float("inf")   # snr_db sentinel: leave the sample untouched


@dataclass
class NormStats:
    """Scalar z-score statistics of one antenna slice (comm and sensing)."""
    mu_c: float
    sigma_c: float
    mu_s: float
    sigma_s: float


@dataclass
class AntennaSlice:
    """Network input for one antenna: four real views plus their stats."""
    x_c_freq: np.ndarray    # [2, K, P]
    x_c_delay: np.ndarray
    x_s_freq: np.ndarray
    x_s_delay: np.ndarray
    stats: NormStats


def normalize(x: np.ndarray) -> Tuple[np.ndarray, float, float]:
    """Scalar z-score over all entries; returns (normalized, mu, sigma)."""
    mu = float(x.mean())
    sigma = float(x.std())
    if sigma < SIGMA_FLOOR:
        raise DegenerateSampleError("window has (near-)zero variance")
    return (x - mu) / sigma, mu, sigma


def de_normalize(x: np.ndarray, mu: float, sigma: float) -> np.ndarray:
    return x * sigma + mu


def slice_antenna(sample: CsiSample, n: int, p: Optional[int] = None,
                  dtype=np.float32) -> AntennaSlice:
    """Build the four normalized [2 x K x P] input views for antenna n."""
    n_ant = sample.comm.shape[2]
    if not 0 <= n < n_ant:
        raise UsageError(f"antenna index {n} out of range [0, {n_ant})")
    if p is None:
        p = sample.sensing.shape[0]
    comm = sample.comm[:p, :, n].T                  # [K, P]
    sens = sample.sensing[:, :, n, n].T             # [K, P]
    comm_d = idft(comm, axis=0)
    sens_d = idft(sens, axis=0)

    c_freq = complex_to_real(comm, dtype)
    c_delay = complex_to_real(comm_d, dtype)
    s_freq = complex_to_real(sens, dtype)
    s_delay = complex_to_real(sens_d, dtype)

    c_freq_n, mu_c, sig_c = normalize(c_freq)
    s_freq_n, mu_s, sig_s = normalize(s_freq)
    stats = NormStats(mu_c=mu_c, sigma_c=sig_c, mu_s=mu_s, sigma_s=sig_s)
    return AntennaSlice(
        x_c_freq=c_freq_n.astype(dtype),
        x_c_delay=((c_delay - mu_c) / sig_c).astype(dtype),
        x_s_freq=s_freq_n.astype(dtype),
        x_s_delay=((s_delay - mu_s) / sig_s).astype(dtype),
        stats=stats,
    )


def add_csi_noise(sample: CsiSample, snr_db: float, seed) -> CsiSample:
    """Add circular complex Gaussian noise to the historical slots only.

    SNR is per stream: noise variance = (mean |x|^2 of the stream) / SNR.
    The Q target slots are returned bit-identical.
    """
    if snr_db == NO_NOISE:
        return sample
    p = sample.sensing.shape[0]
    rng = np.random.default_rng(seed)
    snr = 10.0 ** (snr_db / 10.0)

    def _noisy(x: np.ndarray) -> np.ndarray:
        power = float(np.mean(np.abs(x) ** 2))
        sigma = np.sqrt(power / snr / 2.0)
        noise = sigma * (rng.standard_normal(x.shape)
                         + 1j * rng.standard_normal(x.shape))
        return (x + noise).astype(x.dtype)

    comm = sample.comm.copy()
    comm[:p] = _noisy(sample.comm[:p])
    sensing = _noisy(sample.sensing)
    return CsiSample(comm=comm, sensing=sensing, speed=sample.speed)


# -- batched fast path for training ------------------------------------------


def batch_views(samples, snr_db: float = NO_NOISE, seed=None,
                dtype=np.float32) -> Dict[str, np.ndarray]:
    """Preprocess a list of samples into batched model inputs.

    Rows are (sample, antenna) pairs in index order, B = len(samples) * N.
    Returns the four views as [B, 2, K, P], the de-normalization stats as
    [B, 1, 1, 1], and the target comm CSI as [B, 2, K, Q].
    """
    if snr_db != NO_NOISE:
        child = np.random.SeedSequence(seed).spawn(len(samples))
        samples = [add_csi_noise(s, snr_db, child[i])
                   for i, s in enumerate(samples)]
    p = samples[0].sensing.shape[0]
    q = samples[0].comm.shape[0] - p
    views = {k: [] for k in ("x_c_freq", "x_c_delay", "x_s_freq", "x_s_delay")}
    mu_c, sig_c = [], []
    targets = []
    for s in samples:
        n_ant = s.comm.shape[2]
        for n in range(n_ant):
            sl = slice_antenna(s, n, p=p, dtype=dtype)
            views["x_c_freq"].append(sl.x_c_freq)
            views["x_c_delay"].append(sl.x_c_delay)
            views["x_s_freq"].append(sl.x_s_freq)
            views["x_s_delay"].append(sl.x_s_delay)
            mu_c.append(sl.stats.mu_c)
            sig_c.append(sl.stats.sigma_c)
            targets.append(complex_to_real(s.comm[p:, :, n].T, dtype))
    out = {k: np.stack(v) for k, v in views.items()}
    out["mu_c"] = np.asarray(mu_c, dtype=dtype).reshape(-1, 1, 1, 1)
    out["sigma_c"] = np.asarray(sig_c, dtype=dtype).reshape(-1, 1, 1, 1)
    out["target"] = np.stack(targets)
    return out
