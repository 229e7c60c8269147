"""Score files, label attachment, and attack/codec breakdown tables.

Score files are TSV with ``# key=value`` header comments (at minimum the
score polarity).  Rows are ``utt_id  score  label  attack  codec`` with
``-`` for absent fields.  Floats are written with shortest round-trip repr
so identical runs produce byte-identical files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import BONAFIDE, LABELS, SPOOF, UNKNOWN, SampleRecord
from .metrics import DcfParams, compute_eer, compute_min_dcf

MISSING = "-"
NO_CODEC = "none"
UNKNOWN_ATTACK = "unknown"


@dataclass(frozen=True)
class ScoreRow:
    """One scored trial; metadata fields are optional."""

    utt_id: str
    score: float
    label: str | None = None
    attack_id: str | None = None
    codec_id: str | None = None

    def __post_init__(self):
        if not self.utt_id:
            raise ValueError("empty utt_id")
        if not math.isfinite(self.score):
            raise ValueError(f"{self.utt_id}: non-finite score {self.score}")
        if self.label is not None and self.label not in LABELS:
            raise ValueError(f"{self.utt_id}: unknown label {self.label!r}")


@dataclass(frozen=True)
class ScoreFile:
    """A set of scored trials plus the score polarity."""

    rows: tuple[ScoreRow, ...]
    polarity: str = "higher_is_bonafide"
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for row in self.rows:
            if row.utt_id in seen:
                raise ValueError(f"duplicate utt_id {row.utt_id!r} in score file")
            seen.add(row.utt_id)
        if self.polarity not in ("higher_is_bonafide", "higher_is_spoof"):
            raise ValueError(f"unknown polarity {self.polarity!r}")

    def scores(self) -> np.ndarray:
        return np.array([r.score for r in self.rows], dtype=np.float64)

    def labels01(self) -> np.ndarray:
        out = []
        for r in self.rows:
            if r.label not in (BONAFIDE, SPOOF):
                raise ValueError(f"{r.utt_id}: row has no usable label")
            out.append(1 if r.label == BONAFIDE else 0)
        return np.array(out, dtype=np.int64)


def _fmt(value: str | None) -> str:
    return MISSING if value is None else value


def write_score_file(score_file: ScoreFile, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# polarity={score_file.polarity}\n")
        for key in sorted(score_file.meta):
            fh.write(f"# {key}={score_file.meta[key]}\n")
        for row in score_file.rows:
            fh.write(f"{row.utt_id}\t{row.score!r}\t{_fmt(row.label)}"
                     f"\t{_fmt(row.attack_id)}\t{_fmt(row.codec_id)}\n")


def read_score_file(path: str) -> ScoreFile:
    rows: list[ScoreRow] = []
    polarity = "higher_is_bonafide"
    meta: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                key, sep, value = body.partition("=")
                if sep:
                    if key.strip() == "polarity":
                        polarity = value.strip()
                    else:
                        meta[key.strip()] = value.strip()
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise ValueError(f"{path}:{lineno}: expected at least utt_id and score")
            parts = parts + [MISSING] * (5 - len(parts))
            utt_id, score_tok, label_tok, attack_tok, codec_tok = parts[:5]
            try:
                score = float(score_tok)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad score {score_tok!r}") from None
            rows.append(ScoreRow(
                utt_id=utt_id,
                score=score,
                label=None if label_tok == MISSING else label_tok,
                attack_id=None if attack_tok == MISSING else attack_tok,
                codec_id=None if codec_tok == MISSING else codec_tok,
            ))
    return ScoreFile(rows=tuple(rows), polarity=polarity, meta=meta)


def attach_labels(score_file: ScoreFile, records: Iterable[SampleRecord]) -> ScoreFile:
    """Fill row metadata from manifest records; manifest values win.

    Every scored utt_id must appear in the manifest.
    """
    by_id = {rec.utt_id: rec for rec in records}
    missing = [row.utt_id for row in score_file.rows if row.utt_id not in by_id]
    if missing:
        shown = ", ".join(missing[:20])
        more = "" if len(missing) <= 20 else f" (+{len(missing) - 20} more)"
        raise ValueError(f"{len(missing)} scored utterances missing from manifest: {shown}{more}")
    rows = []
    for row in score_file.rows:
        rec = by_id[row.utt_id]
        rows.append(replace(row,
                            label=rec.label if rec.label != UNKNOWN else row.label,
                            attack_id=rec.attack_id if rec.attack_id is not None else row.attack_id,
                            codec_id=rec.codec_id if rec.codec_id is not None else row.codec_id))
    return ScoreFile(rows=tuple(rows), polarity=score_file.polarity, meta=dict(score_file.meta))


@dataclass(frozen=True)
class BreakdownEntry:
    """One row of the breakdown table; metrics are None when undefined."""

    kind: str  # cell | attack_pool | codec_pool | overall | attack_average
    attack_id: str | None
    codec_id: str | None
    n_bonafide: int
    n_spoof: int
    eer: float | None
    min_dcf: float | None


@dataclass(frozen=True)
class BreakdownTable:
    entries: tuple[BreakdownEntry, ...]
    dcf: DcfParams
    polarity: str

    def lookup(self, kind: str, attack_id: str | None = None,
               codec_id: str | None = None) -> BreakdownEntry:
        for e in self.entries:
            if e.kind == kind and e.attack_id == attack_id and e.codec_id == codec_id:
                return e
        raise KeyError(f"no entry kind={kind!r} attack={attack_id!r} codec={codec_id!r}")


def _cell_metrics(tar: list[float], non: list[float], dcf: DcfParams
                  ) -> tuple[float | None, float | None]:
    if not tar or not non:
        return None, None
    scores = np.array(tar + non)
    labels = np.array([1] * len(tar) + [0] * len(non))
    eer, _ = compute_eer(scores, labels)
    mdcf, _ = compute_min_dcf(scores, labels, dcf)
    return eer, mdcf


def breakdown_report(score_file: ScoreFile, records: Iterable[SampleRecord] | None = None,
                     dcf: DcfParams = DcfParams()) -> BreakdownTable:
    """Attack-by-codec metric table with pooled margins.

    Cell (a, c) pools bonafide trials under codec c against spoof trials of
    attack a under codec c.  Margins pool across the other axis; ``overall``
    pools everything and ``attack_average`` is the unweighted mean over
    defined attack pools.  Single-class groups get NA metrics.  Rows missing
    attack or codec metadata fall into the ``unknown`` attack and ``none``
    codec buckets; scores are canonicalized to higher-is-bonafide first.
    """
    sf = attach_labels(score_file, records) if records is not None else score_file
    flip = -1.0 if sf.polarity == "higher_is_spoof" else 1.0
    tar_by_codec: dict[str, list[float]] = {}
    non_by_cell: dict[tuple[str, str], list[float]] = {}
    all_tar: list[float] = []
    all_non: list[float] = []
    for row in sf.rows:
        if row.label not in (BONAFIDE, SPOOF):
            raise ValueError(f"{row.utt_id}: breakdown needs labeled rows")
        codec = row.codec_id or NO_CODEC
        score = flip * row.score
        if row.label == BONAFIDE:
            tar_by_codec.setdefault(codec, []).append(score)
            all_tar.append(score)
        else:
            attack = row.attack_id or UNKNOWN_ATTACK
            non_by_cell.setdefault((attack, codec), []).append(score)
            all_non.append(score)
    if not all_tar and not all_non:
        raise ValueError("empty score file")
    attacks = sorted({a for a, _ in non_by_cell})
    codecs = sorted(set(tar_by_codec) | {c for _, c in non_by_cell})
    entries: list[BreakdownEntry] = []
    for attack in attacks:
        for codec in codecs:
            tar = tar_by_codec.get(codec, [])
            non = non_by_cell.get((attack, codec), [])
            eer, mdcf = _cell_metrics(tar, non, dcf)
            entries.append(BreakdownEntry("cell", attack, codec, len(tar), len(non), eer, mdcf))
    pool_metrics: list[tuple[float, float]] = []
    for attack in attacks:
        non = [s for (a, _), ss in non_by_cell.items() if a == attack for s in ss]
        eer, mdcf = _cell_metrics(all_tar, non, dcf)
        if eer is not None:
            pool_metrics.append((eer, mdcf))
        entries.append(BreakdownEntry("attack_pool", attack, None, len(all_tar), len(non), eer, mdcf))
    for codec in codecs:
        tar = tar_by_codec.get(codec, [])
        non = [s for (_, c), ss in non_by_cell.items() if c == codec for s in ss]
        eer, mdcf = _cell_metrics(tar, non, dcf)
        entries.append(BreakdownEntry("codec_pool", None, codec, len(tar), len(non), eer, mdcf))
    eer, mdcf = _cell_metrics(all_tar, all_non, dcf)
    entries.append(BreakdownEntry("overall", None, None, len(all_tar), len(all_non), eer, mdcf))
    if pool_metrics:
        avg_eer = float(np.mean([m[0] for m in pool_metrics]))
        avg_dcf = float(np.mean([m[1] for m in pool_metrics]))
    else:
        avg_eer = None
        avg_dcf = None
    entries.append(BreakdownEntry("attack_average", None, None, 0, 0, avg_eer, avg_dcf))
    return BreakdownTable(entries=tuple(entries), dcf=dcf, polarity=sf.polarity)


_NA = "NA"


def _cell_str(value: float | None) -> str:
    return _NA if value is None else repr(value)


def breakdown_to_csv(table: BreakdownTable) -> str:
    lines = [
        f"# polarity={table.polarity}",
        f"# dcf=cost_miss:{table.dcf.cost_miss!r},cost_fa:{table.dcf.cost_fa!r},"
        f"prior_target:{table.dcf.prior_target!r}",
        "kind,attack_id,codec_id,n_bonafide,n_spoof,eer,min_dcf",
    ]
    for e in table.entries:
        lines.append(",".join([
            e.kind, _fmt(e.attack_id), _fmt(e.codec_id), str(e.n_bonafide), str(e.n_spoof),
            _cell_str(e.eer), _cell_str(e.min_dcf),
        ]))
    return "\n".join(lines) + "\n"


def breakdown_from_csv(text: str) -> BreakdownTable:
    polarity = "higher_is_bonafide"
    dcf = DcfParams()
    entries: list[BreakdownEntry] = []
    header_seen = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            key, sep, value = body.partition("=")
            if sep and key.strip() == "polarity":
                polarity = value.strip()
            elif sep and key.strip() == "dcf":
                parts = dict(p.split(":") for p in value.split(","))
                dcf = DcfParams(cost_miss=float(parts["cost_miss"]),
                                cost_fa=float(parts["cost_fa"]),
                                prior_target=float(parts["prior_target"]))
            continue
        if not header_seen:
            header_seen = True
            continue
        cells = line.split(",")
        if len(cells) != 7:
            raise ValueError(f"line {lineno}: expected 7 cells, got {len(cells)}")
        kind, attack, codec, n_bona, n_spoof, eer_tok, dcf_tok = cells
        entries.append(BreakdownEntry(
            kind=kind,
            attack_id=None if attack == MISSING else attack,
            codec_id=None if codec == MISSING else codec,
            n_bonafide=int(n_bona),
            n_spoof=int(n_spoof),
            eer=None if eer_tok == _NA else float(eer_tok),
            min_dcf=None if dcf_tok == _NA else float(dcf_tok),
        ))
    return BreakdownTable(entries=tuple(entries), dcf=dcf, polarity=polarity)


def breakdown_to_text(table: BreakdownTable) -> str:
    """Human-readable aligned table; NA marks undefined cells."""
    headers = ("kind", "attack", "codec", "n_bona", "n_spoof", "eer", "min_dcf")
    rows = [headers]
    for e in table.entries:
        rows.append((e.kind, _fmt(e.attack_id), _fmt(e.codec_id), str(e.n_bonafide),
                     str(e.n_spoof),
                     _NA if e.eer is None else f"{e.eer:.4f}",
                     _NA if e.min_dcf is None else f"{e.min_dcf:.4f}"))
    widths = [max(len(r[i]) for r in rows) for i in range(len(headers))]
    out = []
    for r in rows:
        out.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
    return "\n".join(out) + "\n"
