"""Two-stage audio anti-spoofing toolkit.

Stage 1 pretrains projectors that tie the style and linguistics layer views
of a frozen speech encoder together on bonafide speech only.  Stage 2 trains
a spoof/bonafide classifier on the fused dependency and raw-view features.
The package also ships the scoring stack: EER, minimum detection cost,
LLR calibration, and attack/codec breakdown tables.
"""

__version__ = "0.1.0"

from .audio import Waveform, load_and_normalize, remove_silence
from .corpus import SampleRecord, load_manifest, parse_manifest, summarize_partition
from .losses import LossBreakdown, focal_loss, ssc_loss, weighted_bce
from .metrics import (
    CalibrationMap,
    DcfParams,
    apply_llr,
    calibrate_llr,
    compute_eer,
    compute_min_dcf,
)
from .reporting import ScoreFile, ScoreRow, breakdown_report, read_score_file, write_score_file

__all__ = [
    "Waveform",
    "load_and_normalize",
    "remove_silence",
    "SampleRecord",
    "load_manifest",
    "parse_manifest",
    "summarize_partition",
    "LossBreakdown",
    "ssc_loss",
    "weighted_bce",
    "focal_loss",
    "DcfParams",
    "CalibrationMap",
    "compute_eer",
    "compute_min_dcf",
    "calibrate_llr",
    "apply_llr",
    "ScoreFile",
    "ScoreRow",
    "write_score_file",
    "read_score_file",
    "breakdown_report",
]
