"""Dataset manifests: parsing, validation, serialization, partition statistics.

Two on-disk formats are supported:

* ``protocol``: whitespace-separated challenge-protocol lines
  ``speaker utt_id codec attack label [extra ...]`` where ``-`` marks an
  absent field.  The audio path defaults to the utterance id and is resolved
  against an audio root at load time.
* ``csv``: headered CSV with canonical columns ``utt_id, audio_path, label,
  attack_id, codec_id, speaker_id, duration_s`` (a few aliases accepted);
  unknown columns are preserved in ``extras``.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

BONAFIDE = "bonafide"
SPOOF = "spoof"
UNKNOWN = "unknown"
LABELS = (BONAFIDE, SPOOF, UNKNOWN)

MISSING = "-"

PROTOCOL_FORMAT = "protocol"
CSV_FORMAT = "csv"
FORMATS = (PROTOCOL_FORMAT, CSV_FORMAT)

_CSV_ALIASES = {
    "utt_id": "utt_id",
    "utt": "utt_id",
    "id": "utt_id",
    "audio_path": "audio_path",
    "path": "audio_path",
    "label": "label",
    "attack_id": "attack_id",
    "attack": "attack_id",
    "codec_id": "codec_id",
    "codec": "codec_id",
    "speaker_id": "speaker_id",
    "speaker": "speaker_id",
    "duration_s": "duration_s",
    "duration": "duration_s",
}
_CSV_CANONICAL = ("utt_id", "audio_path", "label", "attack_id", "codec_id", "speaker_id", "duration_s")


class ManifestError(ValueError):
    """Malformed or inconsistent manifest content."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class SampleRecord:
    """One utterance with its label and optional metadata."""

    utt_id: str
    audio_path: str
    label: str = UNKNOWN
    attack_id: str | None = None
    codec_id: str | None = None
    speaker_id: str | None = None
    duration_s: float | None = None
    extras: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.utt_id:
            raise ManifestError("empty utt_id")
        if not self.audio_path:
            raise ManifestError(f"{self.utt_id}: empty audio_path")
        if self.label not in LABELS:
            raise ManifestError(f"{self.utt_id}: unknown label {self.label!r}")
        if self.label == BONAFIDE and self.attack_id is not None:
            raise ManifestError(f"{self.utt_id}: bonafide record carries attack_id {self.attack_id!r}")
        if self.duration_s is not None and not self.duration_s >= 0:
            raise ManifestError(f"{self.utt_id}: negative duration {self.duration_s}")

    def is_bonafide(self) -> bool:
        return self.label == BONAFIDE


@dataclass(frozen=True)
class PartitionSummary:
    """Per-partition counts used for sanity checks and reports."""

    n_bonafide: int
    n_spoof: int
    n_attacks: int
    mean_duration_s: float | None


def _check_unique(records: Sequence[SampleRecord], lines: Sequence[int] | None = None) -> None:
    seen: dict[str, int] = {}
    for i, rec in enumerate(records):
        if rec.utt_id in seen:
            line = lines[i] if lines is not None else None
            raise ManifestError(f"duplicate utt_id {rec.utt_id!r}", line=line)
        seen[rec.utt_id] = i


def _parse_protocol(text: str) -> list[SampleRecord]:
    records: list[SampleRecord] = []
    lines: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if len(tokens) < 5:
            raise ManifestError(f"expected at least 5 fields, got {len(tokens)}", line=lineno)
        speaker, utt_id, codec, attack, label_tok = tokens[:5]
        if label_tok == MISSING:
            label = UNKNOWN
        elif label_tok in (BONAFIDE, SPOOF):
            label = label_tok
        else:
            raise ManifestError(f"unknown label token {label_tok!r}", line=lineno)
        extras = {f"col{6 + i}": tok for i, tok in enumerate(tokens[5:])}
        try:
            rec = SampleRecord(
                utt_id=utt_id,
                audio_path=utt_id,
                label=label,
                attack_id=None if attack == MISSING else attack,
                codec_id=None if codec == MISSING else codec,
                speaker_id=None if speaker == MISSING else speaker,
                extras=extras,
            )
        except ManifestError as exc:
            raise ManifestError(str(exc), line=lineno) from None
        records.append(rec)
        lines.append(lineno)
    _check_unique(records, lines)
    return records


def _parse_csv(text: str) -> list[SampleRecord]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        return []
    columns = []
    for name in header:
        key = name.strip()
        columns.append(_CSV_ALIASES.get(key.lower(), key))
    if "utt_id" not in columns:
        raise ManifestError("csv manifest is missing an utt_id column", line=1)
    records: list[SampleRecord] = []
    lines: list[int] = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(columns):
            raise ManifestError(f"expected {len(columns)} cells, got {len(row)}", line=lineno)
        fields: dict[str, str] = {}
        extras: dict[str, str] = {}
        for col, cell in zip(columns, row):
            cell = cell.strip()
            if col in _CSV_CANONICAL:
                fields[col] = cell
            elif cell:
                extras[col] = cell
        utt_id = fields.get("utt_id", "")
        label = fields.get("label", "") or UNKNOWN
        if label not in LABELS:
            raise ManifestError(f"unknown label {label!r}", line=lineno)
        duration: float | None = None
        if fields.get("duration_s"):
            try:
                duration = float(fields["duration_s"])
            except ValueError:
                raise ManifestError(f"bad duration {fields['duration_s']!r}", line=lineno) from None
        try:
            rec = SampleRecord(
                utt_id=utt_id,
                audio_path=fields.get("audio_path") or utt_id,
                label=label,
                attack_id=fields.get("attack_id") or None,
                codec_id=fields.get("codec_id") or None,
                speaker_id=fields.get("speaker_id") or None,
                duration_s=duration,
                extras=extras,
            )
        except ManifestError as exc:
            raise ManifestError(str(exc), line=lineno) from None
        records.append(rec)
        lines.append(lineno)
    _check_unique(records, lines)
    return records


def parse_manifest(text: str, fmt: str = PROTOCOL_FORMAT) -> list[SampleRecord]:
    """Parse manifest text into records.

    Args:
        text: manifest file content.
        fmt: ``protocol`` or ``csv``.

    Returns:
        List of validated :class:`SampleRecord`, in file order.

    Raises:
        ManifestError: malformed line, duplicate utt_id, or invalid field
            combination; the message carries the offending line number.
    """
    if fmt == PROTOCOL_FORMAT:
        return _parse_protocol(text)
    if fmt == CSV_FORMAT:
        return _parse_csv(text)
    raise ValueError(f"unknown manifest format {fmt!r}; expected one of {FORMATS}")


def serialize_manifest(records: Sequence[SampleRecord], fmt: str = PROTOCOL_FORMAT) -> str:
    """Render records back to manifest text; inverse of :func:`parse_manifest`."""
    if fmt == PROTOCOL_FORMAT:
        out = []
        for rec in records:
            tokens = [
                rec.speaker_id or MISSING,
                rec.utt_id,
                rec.codec_id or MISSING,
                rec.attack_id or MISSING,
                MISSING if rec.label == UNKNOWN else rec.label,
            ]
            tokens.extend(rec.extras[k] for k in sorted(rec.extras, key=_extra_order))
            out.append(" ".join(tokens))
        return "\n".join(out) + ("\n" if out else "")
    if fmt == CSV_FORMAT:
        extra_cols = sorted({k for rec in records for k in rec.extras})
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(list(_CSV_CANONICAL) + extra_cols)
        for rec in records:
            row = [
                rec.utt_id,
                rec.audio_path,
                rec.label,
                rec.attack_id or "",
                rec.codec_id or "",
                rec.speaker_id or "",
                "" if rec.duration_s is None else repr(float(rec.duration_s)),
            ]
            row.extend(rec.extras.get(k, "") for k in extra_cols)
            writer.writerow(row)
        return buf.getvalue()
    raise ValueError(f"unknown manifest format {fmt!r}; expected one of {FORMATS}")


def _extra_order(key: str):
    # protocol extras are keyed col6, col7, ...; sort positionally when so
    if key.startswith("col") and key[3:].isdigit():
        return (0, int(key[3:]), key)
    return (1, 0, key)


def infer_format(path: str) -> str:
    return CSV_FORMAT if str(path).lower().endswith(".csv") else PROTOCOL_FORMAT


def load_manifest(path: str, fmt: str | None = None) -> list[SampleRecord]:
    """Read and parse a manifest file; format inferred from the suffix unless given."""
    if fmt is None:
        fmt = infer_format(path)
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_manifest(text, fmt)


def save_manifest(records: Sequence[SampleRecord], path: str, fmt: str | None = None) -> None:
    if fmt is None:
        fmt = infer_format(path)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_manifest(records, fmt))


def resolve_audio_path(record: SampleRecord, audio_root: str | None = None,
                       extensions: Sequence[str] = (".wav", ".flac")) -> str:
    """Resolve a record's audio path against a root directory.

    Absolute or directly existing paths win; otherwise the root-joined path is
    probed as-is and with each extension appended.
    """
    candidates = []
    p = record.audio_path
    if os.path.isabs(p) or audio_root is None:
        base = p
    else:
        base = os.path.join(audio_root, p)
    candidates.append(base)
    if not os.path.splitext(base)[1]:
        candidates.extend(base + ext for ext in extensions)
    for cand in candidates:
        if os.path.exists(cand):
            return cand
    raise FileNotFoundError(f"{record.utt_id}: no audio found; tried {candidates}")


def with_audio_root(records: Sequence[SampleRecord], audio_root: str) -> list[SampleRecord]:
    """Return records with audio paths resolved against ``audio_root``."""
    return [replace(rec, audio_path=resolve_audio_path(rec, audio_root)) for rec in records]


def summarize_partition(records: Iterable[SampleRecord]) -> PartitionSummary:
    """Count classes and attacks; utterances with unknown labels are rejected.

    Mean duration is computed over records whose duration is known and is
    ``None`` when no record carries one.
    """
    n_bona = 0
    n_spoof = 0
    attacks: set[str] = set()
    durations: list[float] = []
    for rec in records:
        if rec.label == UNKNOWN:
            raise ValueError(f"{rec.utt_id}: cannot summarize a partition with unknown labels")
        if rec.label == BONAFIDE:
            n_bona += 1
        else:
            n_spoof += 1
            if rec.attack_id is not None:
                attacks.add(rec.attack_id)
        if rec.duration_s is not None:
            durations.append(rec.duration_s)
    mean_dur = sum(durations) / len(durations) if durations else None
    return PartitionSummary(n_bonafide=n_bona, n_spoof=n_spoof, n_attacks=len(attacks),
                            mean_duration_s=mean_dur)
