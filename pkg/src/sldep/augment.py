"""Waveform augmentation for spoof-detector training.

Three stateless, rng-driven distortion families:

* convolutive: random multi-band FIR coloring applied to the signal and,
  at reduced gain, to its integer powers (mild nonlinearity);
* impulsive: signal-dependent perturbation of a fixed fraction of samples;
* additive: stationary colored noise at a sampled SNR.

Every operation takes an explicit ``numpy.random.Generator`` and is fully
determined by (input, config, generator state).  Outputs keep the input
length and are renormalized whenever the peak exceeds 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import signal

import yaml

from .audio import Waveform

MODES = ("lnl", "isd", "ssi", "series_lnl_isd", "series_all")
PRESET_VERSION = 1


@dataclass(frozen=True)
class ConvolutiveNoiseConfig:
    """Random FIR bank parameters.

    A filter is a sum of ``n_bands`` bandpass sections with per-band gains
    drawn from ``band_gain_db``; the composite is normalized to unit peak
    response.  Branch ``i`` of the convolutive distortion filters the signal
    raised to the ``i+1``-th power; branches past the first are attenuated by
    a bias drawn from ``nonlinear_attenuation_db``.
    """

    n_bands: int = 5
    center_freq_hz: tuple[float, float] = (20.0, 7600.0)
    bandwidth_hz: tuple[float, float] = (400.0, 4000.0)
    taps: tuple[int, int] = (11, 101)
    band_gain_db: tuple[float, float] = (-10.0, 10.0)
    n_branches: tuple[int, int] = (5, 5)
    nonlinear_attenuation_db: tuple[float, float] = (5.0, 20.0)

    def __post_init__(self):
        _check_range("center_freq_hz", self.center_freq_hz, low=1.0)
        _check_range("bandwidth_hz", self.bandwidth_hz, low=1.0)
        _check_range("taps", self.taps, low=3)
        _check_range("band_gain_db", self.band_gain_db)
        _check_range("n_branches", self.n_branches, low=1)
        _check_range("nonlinear_attenuation_db", self.nonlinear_attenuation_db)
        if self.n_bands < 1:
            raise ValueError(f"n_bands must be >= 1, got {self.n_bands}")


@dataclass(frozen=True)
class ImpulsiveNoiseConfig:
    """Signal-dependent impulsive perturbation parameters."""

    proportion: float = 0.1
    gain_db: tuple[float, float] = (6.0, 6.0)

    def __post_init__(self):
        if not 0.0 <= self.proportion <= 1.0:
            raise ValueError(f"proportion must be in [0, 1], got {self.proportion}")
        _check_range("gain_db", self.gain_db)


@dataclass(frozen=True)
class AdditiveNoiseConfig:
    """Stationary colored-noise parameters."""

    snr_db: tuple[float, float] = (10.0, 40.0)
    coloration: ConvolutiveNoiseConfig = field(
        default_factory=lambda: ConvolutiveNoiseConfig(n_branches=(1, 1)))

    def __post_init__(self):
        _check_range("snr_db", self.snr_db)


@dataclass(frozen=True)
class RawBoostConfig:
    """Bundle of the three distortion configs plus the application mode."""

    mode: str = "series_lnl_isd"
    convolutive: ConvolutiveNoiseConfig = field(default_factory=ConvolutiveNoiseConfig)
    impulsive: ImpulsiveNoiseConfig = field(default_factory=ImpulsiveNoiseConfig)
    additive: AdditiveNoiseConfig = field(default_factory=AdditiveNoiseConfig)
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")


def _check_range(name: str, rng: tuple, low: float | None = None) -> None:
    if len(rng) != 2 or rng[0] > rng[1]:
        raise ValueError(f"{name} must be (lo, hi) with lo <= hi, got {rng!r}")
    if low is not None and rng[0] < low:
        raise ValueError(f"{name} lower bound must be >= {low}, got {rng!r}")


def _limit_peak(x: np.ndarray) -> np.ndarray:
    peak = np.max(np.abs(x)) if x.size else 0.0
    if peak > 1.0:
        return x / peak
    return x


def _same_convolve(x: np.ndarray, h: np.ndarray) -> np.ndarray:
    # linear-phase group delay compensated 'same' convolution
    full = signal.fftconvolve(x, h, mode="full")
    start = (h.size - 1) // 2
    return full[start:start + x.size]


def sample_fir_bank(cfg: ConvolutiveNoiseConfig, rng: np.random.Generator,
                    fs: int = 16000) -> np.ndarray:
    """Draw one random FIR: sum of gained bandpass sections, unit peak response.

    Consumes, per band: center freq, bandwidth, tap count, band gain.
    """
    ntaps_hi = cfg.taps[1] | 1
    h = np.zeros(ntaps_hi)
    mid = ntaps_hi // 2
    for _ in range(cfg.n_bands):
        fc = rng.uniform(*cfg.center_freq_hz)
        bw = rng.uniform(*cfg.bandwidth_hz)
        ntaps = int(rng.integers(cfg.taps[0], cfg.taps[1] + 1)) | 1  # odd length
        gain = 10.0 ** (rng.uniform(*cfg.band_gain_db) / 20.0)
        lo = min(max(fc - bw / 2.0, 1.0), fs / 2.0 - 3.0)
        hi = min(max(fc + bw / 2.0, lo + 1.0), fs / 2.0 - 1.0)
        band = signal.firwin(ntaps, [lo, hi], pass_zero=False, window="hamming", fs=fs)
        off = mid - ntaps // 2
        h[off:off + ntaps] += gain * band
    _, resp = signal.freqz(h, 1, worN=2048)
    h = h / np.max(np.abs(resp))
    return h


def sample_convolutive_branches(cfg: ConvolutiveNoiseConfig, rng: np.random.Generator,
                                fs: int = 16000) -> list[tuple[int, np.ndarray]]:
    """Draw the branch filters for one convolutive application.

    Returns ``[(power, fir), ...]`` where branch filters for power >= 2 are
    already attenuated.  Consumes, in order: branch count, attenuation bias,
    then one FIR bank per branch.
    """
    n_branches = int(rng.integers(cfg.n_branches[0], cfg.n_branches[1] + 1))
    bias_db = rng.uniform(*cfg.nonlinear_attenuation_db)
    branches = []
    for i in range(n_branches):
        h = sample_fir_bank(cfg, rng, fs)
        if i >= 1:
            h = h * 10.0 ** (-bias_db / 20.0)
        branches.append((i + 1, h))
    return branches


def rawboost_lnl(wave: Waveform, cfg: RawBoostConfig, rng: np.random.Generator) -> Waveform:
    """Linear-and-nonlinear convolutive distortion.

    Output is ``sum_i fir_i * x**(i+1)`` with the mean removed, same length
    as the input, renormalized if the peak exceeds 1.  All-zero input stays
    all-zero.
    """
    x = wave.samples
    y = np.zeros_like(x)
    for power, h in sample_convolutive_branches(cfg.convolutive, rng, wave.sample_rate):
        y += _same_convolve(x ** power, h)
    y = y - y.mean()
    return Waveform(_limit_peak(y), wave.sample_rate)


def rawboost_isd(wave: Waveform, cfg: RawBoostConfig, rng: np.random.Generator) -> Waveform:
    """Impulsive signal-dependent perturbation.

    Exactly ``floor(proportion * len)`` sample positions are chosen without
    replacement; each gets ``gain * x[pos] * (2u-1)(2u'-1)`` added with
    u, u' uniform on [0, 1].  Proportion 0 is the identity.
    """
    x = wave.samples.copy()
    n = int(np.floor(cfg.impulsive.proportion * x.size))
    pos = rng.permutation(x.size)[:n]
    gain = 10.0 ** (rng.uniform(*cfg.impulsive.gain_db) / 20.0)
    flip = 2.0 * rng.uniform(0.0, 1.0, size=n) - 1.0
    depth = 2.0 * rng.uniform(0.0, 1.0, size=n) - 1.0
    x[pos] += gain * x[pos] * flip * depth
    return Waveform(_limit_peak(x), wave.sample_rate)


def rawboost_ssi(wave: Waveform, cfg: RawBoostConfig, rng: np.random.Generator) -> Waveform:
    """Stationary signal-independent colored additive noise.

    The realized SNR equals the sampled target exactly before the final peak
    renormalization; renormalization rescales signal and noise jointly so the
    ratio is preserved.  Silent input has no defined SNR and is rejected.
    """
    x = wave.samples
    sig_power = float(np.mean(x * x))
    if sig_power == 0.0:
        raise ValueError("SNR is undefined for an all-zero waveform")
    snr_db = rng.uniform(*cfg.additive.snr_db)
    noise = rng.standard_normal(x.size)
    h = sample_fir_bank(cfg.additive.coloration, rng, wave.sample_rate)
    noise = _same_convolve(noise, h)
    noise_power = float(np.mean(noise * noise))
    scale = np.sqrt(sig_power / (noise_power * 10.0 ** (snr_db / 10.0)))
    y = x + scale * noise
    return Waveform(_limit_peak(y), wave.sample_rate)


def apply_rawboost(wave: Waveform, cfg: RawBoostConfig, rng: np.random.Generator) -> Waveform:
    """Apply the configured mode; series modes chain ops on one rng stream."""
    if cfg.mode == "lnl":
        return rawboost_lnl(wave, cfg, rng)
    if cfg.mode == "isd":
        return rawboost_isd(wave, cfg, rng)
    if cfg.mode == "ssi":
        return rawboost_ssi(wave, cfg, rng)
    if cfg.mode == "series_lnl_isd":
        return rawboost_isd(rawboost_lnl(wave, cfg, rng), cfg, rng)
    if cfg.mode == "series_all":
        return rawboost_ssi(rawboost_isd(rawboost_lnl(wave, cfg, rng), cfg, rng), cfg, rng)
    raise ValueError(f"unknown mode {cfg.mode!r}")


def augment_batch(waves: Sequence[Waveform], cfg: RawBoostConfig,
                  rng: np.random.Generator) -> list[Waveform]:
    """Double a batch: originals untouched, then one augmented copy of each.

    Item ``i`` uses the ``i``-th child generator spawned from ``rng``, so per
    item streams are independent and reproducible.
    """
    if not waves:
        raise ValueError("cannot augment an empty batch")
    children = rng.spawn(len(waves))
    out = list(waves)
    out.extend(apply_rawboost(w, cfg, child) for w, child in zip(waves, children))
    return out


def _tuples_to_lists(obj):
    if isinstance(obj, tuple):
        return [_tuples_to_lists(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _tuples_to_lists(v) for k, v in obj.items()}
    return obj


def rawboost_to_dict(cfg: RawBoostConfig) -> dict:
    from dataclasses import asdict

    d = _tuples_to_lists(asdict(cfg))
    d["version"] = PRESET_VERSION
    return d


def rawboost_from_dict(data: dict) -> RawBoostConfig:
    data = dict(data)
    version = data.pop("version", PRESET_VERSION)
    if version != PRESET_VERSION:
        raise ValueError(f"unsupported rawboost preset version {version!r}")
    return _build(RawBoostConfig, data, "rawboost")


def _build(cls, data: dict, where: str):
    import dataclasses

    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ValueError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        ftype = fields[name].type
        if isinstance(value, dict):
            sub = {"convolutive": ConvolutiveNoiseConfig, "impulsive": ImpulsiveNoiseConfig,
                   "additive": AdditiveNoiseConfig, "coloration": ConvolutiveNoiseConfig}[name]
            kwargs[name] = _build(sub, value, f"{where}.{name}")
        elif isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
        del ftype
    return cls(**kwargs)


def load_rawboost_preset(path_or_name: str) -> RawBoostConfig:
    """Load a preset YAML file, or the built-in ``default`` preset."""
    if path_or_name == "default":
        return RawBoostConfig()
    with open(path_or_name, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path_or_name}: preset must be a mapping")
    return rawboost_from_dict(data)


def save_rawboost_preset(cfg: RawBoostConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(rawboost_to_dict(cfg), fh, sort_keys=True)
