"""Frame-wise energy extraction and prosody contour CSV export."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .melspec import MelSpectrogram
from .pitch import PitchContour


@dataclass
class EnergyContour:
    energy: np.ndarray  # per-frame mean of log-mel values
    frame_rate: float

    def __len__(self):
        return len(self.energy)


def extract_energy(mel: MelSpectrogram) -> EnergyContour:
    """Energy = arithmetic mean across mel bands of each log-mel frame."""
    return EnergyContour(mel.frames.mean(axis=1), mel.frame_rate)


CSV_COLUMNS = ["frame_index", "f0", "voiced", "normalized", "energy",
               "predicted"]


def write_contours_csv(path, pitch: PitchContour, energy: EnergyContour,
                       predicted: bool = False) -> None:
    if len(pitch) != len(energy):
        raise ValueError(
            f"pitch length {len(pitch)} != energy length {len(energy)}"
        )
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for i in range(len(pitch)):
            writer.writerow([
                i,
                repr(float(pitch.f0[i])),
                int(pitch.voiced[i]),
                repr(float(pitch.normalized[i])),
                repr(float(energy.energy[i])),
                int(predicted),
            ])


def read_contours_csv(path):
    rows = list(csv.DictReader(Path(path).open()))
    f0 = np.array([float(r["f0"]) for r in rows])
    voiced = np.array([bool(int(r["voiced"])) for r in rows])
    normalized = np.array([float(r["normalized"]) for r in rows])
    energy = np.array([float(r["energy"]) for r in rows])
    return f0, voiced, normalized, energy
