"""Waveform loading, normalization, silence removal, and batch assembly.

All downstream code runs at 16 kHz mono float64 with peak amplitude
normalized to 1 (silent inputs stay all-zero).  Training batches are
zero-padded to the longest member; inference paths score utterances one by
one at full length and never pad.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import signal
from scipy.io import wavfile

from .corpus import SampleRecord

TARGET_SR = 16000


@dataclass(frozen=True)
class Waveform:
    """Mono audio buffer; samples are float64 in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int = TARGET_SR

    def __post_init__(self):
        if self.samples.ndim != 1:
            raise ValueError(f"waveform must be 1-D, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise ValueError(f"bad sample rate {self.sample_rate}")

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class SilenceConfig:
    """Energy-threshold silence removal parameters.

    A frame is voiced when its RMS exceeds the loudest frame's RMS minus
    ``threshold_db``.  Frames are ``frame_ms`` long every ``hop_ms``.
    """

    frame_ms: float = 25.0
    hop_ms: float = 10.0
    threshold_db: float = 40.0

    def __post_init__(self):
        if self.hop_ms <= 0 or self.frame_ms < self.hop_ms:
            raise ValueError(f"need frame_ms >= hop_ms > 0, got {self.frame_ms}/{self.hop_ms}")
        if self.threshold_db <= 0:
            raise ValueError(f"threshold_db must be positive, got {self.threshold_db}")


@dataclass(frozen=True)
class PaddedBatch:
    """Zero-padded stack of waveforms plus the true per-item lengths."""

    data: np.ndarray  # (batch, t_max) float64
    lengths: np.ndarray  # (batch,) int64, true sample counts
    record_ids: tuple[str, ...]

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ValueError(f"batch data must be 2-D, got {self.data.shape}")
        if len(self.record_ids) != self.data.shape[0] or self.lengths.shape != (self.data.shape[0],):
            raise ValueError("batch fields disagree on batch size")


def load_and_normalize(raw: np.ndarray, src_rate: int) -> Waveform:
    """Convert raw PCM to the 16 kHz mono peak-normalized house format.

    Args:
        raw: 1-D samples or 2-D (frames, channels); channels are averaged.
        src_rate: source sampling rate in Hz.

    Returns:
        Waveform at 16 kHz, float64, peak 1 (all-zero input stays zero).

    Raises:
        ValueError: empty input, non-finite samples, or bad rate.
    """
    x = np.asarray(raw, dtype=np.float64)
    if x.ndim == 2:
        x = x.mean(axis=1)
    if x.ndim != 1:
        raise ValueError(f"expected 1-D or 2-D audio, got shape {x.shape}")
    if x.size == 0:
        raise ValueError("empty audio buffer")
    if not np.all(np.isfinite(x)):
        raise ValueError("audio contains non-finite samples")
    rate = int(src_rate)
    if rate != src_rate or rate <= 0:
        raise ValueError(f"bad source rate {src_rate!r}")
    if rate != TARGET_SR:
        g = math.gcd(rate, TARGET_SR)
        x = signal.resample_poly(x, TARGET_SR // g, rate // g)
    peak = np.max(np.abs(x))
    if peak > 0:
        x = x / peak
    return Waveform(np.ascontiguousarray(x), TARGET_SR)


def read_audio_file(path: str) -> tuple[np.ndarray, int]:
    """Read WAV via scipy; FLAC needs the optional soundfile package."""
    ext = os.path.splitext(path)[1].lower()
    if ext == ".flac":
        try:
            import soundfile  # type: ignore
        except ImportError:
            raise RuntimeError(
                f"{path}: FLAC decoding requires the optional 'soundfile' package"
            ) from None
        data, rate = soundfile.read(path, always_2d=False)
        return np.asarray(data), int(rate)
    rate, data = wavfile.read(path)
    return np.asarray(data), int(rate)


def load_audio(path: str) -> Waveform:
    data, rate = read_audio_file(path)
    try:
        return load_and_normalize(data, rate)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


def write_wav(path: str, wave: Waveform) -> None:
    wavfile.write(path, wave.sample_rate, wave.samples.astype(np.float32))


def truncate(wave: Waveform, max_seconds: float = 10.0) -> Waveform:
    """Keep at most the first ``max_seconds`` of audio."""
    if max_seconds <= 0:
        raise ValueError(f"max_seconds must be positive, got {max_seconds}")
    n = int(round(max_seconds * wave.sample_rate))
    if len(wave) <= n:
        return wave
    return Waveform(wave.samples[:n].copy(), wave.sample_rate)


def _frame_rms(x: np.ndarray, frame: int, hop: int) -> np.ndarray:
    # tail frames are shorter; RMS uses the true window length
    n = x.size
    n_frames = int(math.ceil(n / hop))
    csum = np.concatenate([[0.0], np.cumsum(x * x)])
    starts = np.arange(n_frames) * hop
    ends = np.minimum(starts + frame, n)
    energy = csum[ends] - csum[starts]
    return np.sqrt(energy / np.maximum(ends - starts, 1))


def remove_silence(wave: Waveform, cfg: SilenceConfig = SilenceConfig()) -> Waveform:
    """Drop unvoiced stretches by frame energy.

    Each frame's keep/drop decision is applied to its hop slot, so slots tile
    the signal and voiced regions survive verbatim.  If every frame is below
    threshold (all-silent input) the single highest-energy frame is returned
    so downstream code never sees an empty waveform.
    """
    x = wave.samples
    sr = wave.sample_rate
    frame = max(1, int(round(cfg.frame_ms * sr / 1000.0)))
    hop = max(1, int(round(cfg.hop_ms * sr / 1000.0)))
    n = x.size
    if n == 0:
        raise ValueError("empty waveform")
    rms = _frame_rms(x, frame, hop)
    peak = rms.max()
    thr = peak * 10.0 ** (-cfg.threshold_db / 20.0)
    voiced = rms > thr
    if peak == 0 or not voiced.any():
        best = int(np.argmax(rms))
        lo = best * hop
        return Waveform(x[lo:min(lo + frame, n)].copy(), sr)
    keep = np.zeros(n, dtype=bool)
    for i in np.flatnonzero(voiced):
        keep[i * hop:min((i + 1) * hop, n)] = True
    return Waveform(x[keep].copy(), sr)


def make_batches(records: Sequence[SampleRecord], batch_size: int,
                 length_sorted: bool = True, seed: int = 0) -> list[list[SampleRecord]]:
    """Group records into batches, optionally sorted by duration.

    Length-sorted batching keeps similar durations together (less padding)
    and shuffles only the batch order; the unsorted path shuffles records
    directly.  The trailing partial batch is kept.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if not records:
        return []
    rng = np.random.default_rng(seed)
    if length_sorted:
        ordered = sorted(records, key=lambda r: (r.duration_s if r.duration_s is not None else 0.0, r.utt_id))
        batches = [list(ordered[i:i + batch_size]) for i in range(0, len(ordered), batch_size)]
        order = rng.permutation(len(batches))
        return [batches[i] for i in order]
    perm = rng.permutation(len(records))
    shuffled = [records[i] for i in perm]
    return [list(shuffled[i:i + batch_size]) for i in range(0, len(shuffled), batch_size)]


def pad_batch(waves: Sequence[Waveform], record_ids: Sequence[str] | None = None) -> PaddedBatch:
    """Zero-pad waveforms to the longest member."""
    if not waves:
        raise ValueError("cannot pad an empty batch")
    rates = {w.sample_rate for w in waves}
    if len(rates) != 1:
        raise ValueError(f"mixed sample rates in batch: {sorted(rates)}")
    if record_ids is None:
        record_ids = tuple(str(i) for i in range(len(waves)))
    elif len(record_ids) != len(waves):
        raise ValueError("record_ids length does not match batch")
    lengths = np.array([len(w) for w in waves], dtype=np.int64)
    data = np.zeros((len(waves), int(lengths.max())), dtype=np.float64)
    for i, w in enumerate(waves):
        data[i, :len(w)] = w.samples
    return PaddedBatch(data=data, lengths=lengths, record_ids=tuple(record_ids))


def unpad_batch(batch: PaddedBatch, sample_rate: int = TARGET_SR) -> list[Waveform]:
    """Invert :func:`pad_batch`; exact round trip."""
    return [Waveform(batch.data[i, :batch.lengths[i]].copy(), sample_rate)
            for i in range(batch.data.shape[0])]


def padding_overhead(durations: Sequence[float], batch_size: int,
                     length_sorted: bool, seed: int = 0) -> int:
    """Total padded samples a batching policy would add for given durations."""
    recs = [SampleRecord(utt_id=f"u{i:06d}", audio_path=f"u{i:06d}", duration_s=d)
            for i, d in enumerate(durations)]
    total = 0
    for batch in make_batches(recs, batch_size, length_sorted=length_sorted, seed=seed):
        lens = [int(round((r.duration_s or 0.0) * TARGET_SR)) for r in batch]
        total += sum(max(lens) - n for n in lens)
    return total


def load_training_waveform(record: SampleRecord, *, audio_root: str | None = None,
                           silence: SilenceConfig | None = None,
                           max_audio_s: float | None = None,
                           load_fn: Callable[[str], Waveform] | None = None) -> Waveform:
    """Shared load path: resolve, decode, normalize, trim silence, truncate.

    ``max_audio_s=None`` keeps full length (the inference setting).
    ``load_fn`` swaps in a synthetic source for tests.
    """
    from .corpus import resolve_audio_path

    if load_fn is not None:
        wave = load_fn(record.audio_path)
    else:
        wave = load_audio(resolve_audio_path(record, audio_root))
    if silence is not None:
        wave = remove_silence(wave, silence)
    if max_audio_s is not None:
        wave = truncate(wave, max_audio_s)
    return wave
