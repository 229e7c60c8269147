"""Shared synthetic corpus builders.

The toy world plants dependencies between waveform attributes.  Every clip
is a sum of three amplitude-modulated sines, one per carrier band; carrier
frequencies drive the spectrum (late encoder layers) and modulation rates
drive the envelope statistics (early layers).  Bonafide clips couple each
band's rate to its carrier through a fixed nonmonotonic curve; spoof clips
draw the rates uniformly, independent of the carriers, so no single
attribute separates the classes but their joint consistency does.
"""

from __future__ import annotations

import numpy as np

from sldep.audio import TARGET_SR, Waveform, load_and_normalize, write_wav
from sldep.corpus import SampleRecord, save_manifest

# verdict lines from the acceptance tests; echoed after the run because
# pytest's fd-level capture would otherwise swallow them on success
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

# (carrier_lo, carrier_hi, rate_lo, rate_hi) per band; rate ranges sit in
# different smoothing-filter passbands so the envelope features resolve them
BANDS = (
    (400.0, 1200.0, 3.0, 6.0),
    (1400.0, 2400.0, 8.0, 13.0),
    (2600.0, 3400.0, 16.0, 22.0),
)
def coupled_rate(band: int, carrier_hz: float) -> float:
    """Bonafide modulation rate for a carrier; nonmonotonic on purpose."""
    c_lo, c_hi, r_lo, r_hi = BANDS[band]
    u = (carrier_hz - c_lo) / (c_hi - c_lo)
    return r_lo + (r_hi - r_lo) * float(np.sin(np.pi * u) ** 2)


def decoupled_rate(rng: np.random.Generator, band: int) -> float:
    """Rate drawn uniformly over the band's range, independent of carriers.

    Rejection sampling away from the coupled value is deliberately avoided:
    conditioning the draw on the carrier would itself plant a spurious
    rate-carrier dependency in the spoof class.
    """
    _, _, r_lo, r_hi = BANDS[band]
    return float(rng.uniform(r_lo, r_hi))


def synth_clip(rng: np.random.Generator, carriers, rates, dur_s: float,
               depth: float = 0.8) -> Waveform:
    """Sum of unit-power per-band AM sines, peak-normalized.

    Each component is scaled to exact unit RMS so band energies carry no
    information; only carrier positions and modulation rates vary.
    """
    n = int(round(dur_s * TARGET_SR))
    t = np.arange(n) / TARGET_SR
    x = np.zeros(n)
    for carrier_hz, rate_hz in zip(carriers, rates):
        tone = np.sin(2.0 * np.pi * carrier_hz * t + rng.uniform(0, 2 * np.pi))
        env = 1.0 + depth * np.sin(2.0 * np.pi * rate_hz * t + rng.uniform(0, 2 * np.pi))
        comp = env * tone
        x = x + comp / np.sqrt(np.mean(comp * comp))
    return load_and_normalize(x, TARGET_SR)


def make_toy_corpus(seed: int, n_bonafide: int, n_spoof: int, *,
                    attack_id: str = "A01",
                    codec_cycle: tuple[str | None, ...] = (None,),
                    prefix: str = "u", dur_range: tuple[float, float] = (0.9, 1.3)):
    """Build records plus an in-memory loader for the planted toy world.

    Returns (records, load_fn); ``load_fn`` regenerates each clip from its
    own child seed, so loading is deterministic and order-independent.
    """
    rng = np.random.default_rng(seed)
    specs: dict[str, tuple[int, tuple, tuple, float]] = {}
    records = []
    order = ["bonafide"] * n_bonafide + ["spoof"] * n_spoof
    for i, label in enumerate(order):
        utt = f"{prefix}{i:04d}"
        path = f"{utt}.wav"
        carriers = tuple(float(rng.uniform(c_lo, c_hi)) for c_lo, c_hi, _, _ in BANDS)
        if label == "bonafide":
            rates = tuple(coupled_rate(b, c) for b, c in enumerate(carriers))
        else:
            rates = tuple(decoupled_rate(rng, b) for b in range(len(BANDS)))
        dur = float(rng.uniform(*dur_range))
        clip_seed = int(rng.integers(0, 2 ** 31))
        specs[path] = (clip_seed, carriers, rates, dur)
        records.append(SampleRecord(
            utt_id=utt,
            audio_path=path,
            label=label,
            attack_id=attack_id if label == "spoof" else None,
            codec_id=codec_cycle[i % len(codec_cycle)],
            speaker_id=f"spk{i % 7}",
            duration_s=round(dur, 3),
        ))

    def load_fn(path: str) -> Waveform:
        clip_seed, carriers, rates, dur = specs[path]
        return synth_clip(np.random.default_rng(clip_seed), carriers, rates, dur)

    return records, load_fn


def merge_loaders(*loaders):
    """Dispatch to the first loader that knows the path."""
    def load_fn(path: str) -> Waveform:
        last_err = None
        for fn in loaders:
            try:
                return fn(path)
            except KeyError as exc:
                last_err = exc
        raise KeyError(f"no loader for {path!r}") from last_err

    return load_fn


def write_corpus(records, load_fn, audio_dir, manifest_path) -> None:
    """Materialize an in-memory corpus as WAV files plus a manifest."""
    audio_dir.mkdir(parents=True, exist_ok=True)
    for rec in records:
        write_wav(str(audio_dir / rec.audio_path), load_fn(rec.audio_path))
    save_manifest(records, str(manifest_path))
