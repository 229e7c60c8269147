"""Manifest parsing, serialization, and partition statistics."""

import pytest

from sldep.corpus import (
    BONAFIDE,
    CSV_FORMAT,
    PROTOCOL_FORMAT,
    SPOOF,
    UNKNOWN,
    ManifestError,
    SampleRecord,
    load_manifest,
    parse_manifest,
    save_manifest,
    serialize_manifest,
    summarize_partition,
)

PROTOCOL = """\
SPK001 utt_0001 C01 A01 spoof
SPK002 utt_0002 - - bonafide
SPK003 utt_0003 C02 A03 spoof extra1 extra2
- utt_0004 - - -
"""

CSV = """\
utt_id,path,label,attack,codec,speaker,duration,notes
utt_a,audio/a.wav,bonafide,,C01,SPK1,3.25,clean
utt_b,audio/b.wav,spoof,A07,C01,SPK2,4.0,
utt_c,audio/c.wav,spoof,A01,,SPK1,,noisy
"""


def test_protocol_parse_fields():
    recs = parse_manifest(PROTOCOL, PROTOCOL_FORMAT)
    assert [r.utt_id for r in recs] == ["utt_0001", "utt_0002", "utt_0003", "utt_0004"]
    assert recs[0].label == SPOOF and recs[0].attack_id == "A01" and recs[0].codec_id == "C01"
    assert recs[1].label == BONAFIDE and recs[1].attack_id is None and recs[1].speaker_id == "SPK002"
    assert recs[2].extras == {"col6": "extra1", "col7": "extra2"}
    assert recs[3].label == UNKNOWN and recs[3].speaker_id is None
    # audio path defaults to the utterance id
    assert recs[0].audio_path == "utt_0001"


def test_csv_parse_fields():
    recs = parse_manifest(CSV, CSV_FORMAT)
    assert recs[0].audio_path == "audio/a.wav"
    assert recs[0].duration_s == pytest.approx(3.25)
    assert recs[0].extras == {"notes": "clean"}
    assert recs[1].attack_id == "A07"
    assert recs[2].duration_s is None and recs[2].codec_id is None


@pytest.mark.parametrize("fmt,text", [(PROTOCOL_FORMAT, PROTOCOL), (CSV_FORMAT, CSV)])
def test_parse_serialize_round_trip(fmt, text):
    recs = parse_manifest(text, fmt)
    out = serialize_manifest(recs, fmt)
    again = parse_manifest(out, fmt)
    assert again == recs
    # serialization is idempotent
    assert serialize_manifest(again, fmt) == out


def test_malformed_line_reports_line_number():
    bad = "SPK1 utt1 C01 A01 spoof\nSPK2 utt2 C01\n"
    with pytest.raises(ManifestError, match="line 2"):
        parse_manifest(bad, PROTOCOL_FORMAT)


def test_unknown_label_token_rejected():
    with pytest.raises(ManifestError, match="label"):
        parse_manifest("SPK1 utt1 C01 A01 genuine\n", PROTOCOL_FORMAT)


def test_duplicate_utt_id_rejected():
    dup = "SPK1 utt1 - - bonafide\nSPK2 utt1 - A1 spoof\n"
    with pytest.raises(ManifestError, match="duplicate"):
        parse_manifest(dup, PROTOCOL_FORMAT)


def test_bonafide_with_attack_rejected():
    with pytest.raises(ManifestError, match="attack"):
        parse_manifest("SPK1 utt1 C01 A01 bonafide\n", PROTOCOL_FORMAT)
    with pytest.raises(ManifestError):
        SampleRecord(utt_id="u", audio_path="u", label=BONAFIDE, attack_id="A01")


def test_csv_requires_utt_id_column():
    with pytest.raises(ManifestError, match="utt_id"):
        parse_manifest("path,label\nx.wav,spoof\n", CSV_FORMAT)


def test_summary_counts_single_bonafide():
    recs = [SampleRecord(utt_id="u1", audio_path="u1", label=BONAFIDE, duration_s=4.0)]
    s = summarize_partition(recs)
    assert (s.n_bonafide, s.n_spoof, s.n_attacks, s.mean_duration_s) == (1, 0, 0, 4.0)


def test_summary_rejects_unknown_labels():
    recs = [SampleRecord(utt_id="u1", audio_path="u1", label=UNKNOWN)]
    with pytest.raises(ValueError, match="unknown"):
        summarize_partition(recs)


def test_summary_mean_duration_none_when_unknown():
    recs = [SampleRecord(utt_id="u1", audio_path="u1", label=BONAFIDE)]
    assert summarize_partition(recs).mean_duration_s is None


def test_summary_permutation_invariant_and_additive():
    recs = []
    for i in range(40):
        label = BONAFIDE if i % 3 == 0 else SPOOF
        recs.append(SampleRecord(
            utt_id=f"u{i}", audio_path=f"u{i}", label=label,
            attack_id=None if label == BONAFIDE else f"A{i % 5}",
            duration_s=1.0 + i * 0.1))
    fwd = summarize_partition(recs)
    rev = summarize_partition(list(reversed(recs)))
    assert fwd == rev
    half = summarize_partition(recs[:20])
    rest = summarize_partition(recs[20:])
    assert half.n_bonafide + rest.n_bonafide == fwd.n_bonafide
    assert half.n_spoof + rest.n_spoof == fwd.n_spoof


def test_reference_training_partition_counts():
    # synthesized manifest mirroring the reference training partition:
    # 18797 bonafide, 163560 spoof trials across 8 attacks
    lines = []
    for i in range(18797):
        lines.append(f"SPK{i % 400:04d} bona_{i:06d} - - bonafide")
    for i in range(163560):
        lines.append(f"SPK{i % 400:04d} spoof_{i:06d} C{i % 3:02d} A{i % 8 + 1:02d} spoof")
    recs = parse_manifest("\n".join(lines), PROTOCOL_FORMAT)
    s = summarize_partition(recs)
    assert s.n_bonafide == 18797
    assert s.n_spoof == 163560
    assert s.n_attacks == 8


def test_load_save_manifest_files(tmp_path):
    recs = parse_manifest(CSV, CSV_FORMAT)
    path = tmp_path / "part.csv"
    save_manifest(recs, str(path))
    assert load_manifest(str(path)) == recs
    # format inferred from suffix: protocol for non-csv
    ppath = tmp_path / "part.txt"
    precs = parse_manifest(PROTOCOL, PROTOCOL_FORMAT)
    save_manifest(precs, str(ppath))
    assert load_manifest(str(ppath)) == precs
