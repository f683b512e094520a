"""Subjective-study data pipeline: rating ingestion, participant screening,
and mean opinion scores.

Screening formalizes "significant deviation from the interquartile range" as
the 1.5*IQR Tukey fence per stimulus, and "consistent scoring bias" as
near-zero rating variance or >= 95% of ratings at a scale extreme. Quartiles
use linear interpolation between order statistics so screening is
implementation-portable. All transformations are deterministic and
idempotent.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .distort import DatasetManifest, ManifestEntry
from .errors import DataError, DomainError

SCALE_MIN, SCALE_MAX = 1, 5


@dataclass
class RatingTable:
    participants: list[str]
    stimuli: list[str]
    scores: dict[tuple[str, str], int]
    timestamps: dict[tuple[str, str], str] = field(default_factory=dict)
    flags: set[tuple[str, str]] = field(default_factory=set)
    excluded: set[str] = field(default_factory=set)

    def add(self, participant: str, stimulus: str, score: int, timestamp: str = "") -> None:
        key = (participant, stimulus)
        if key in self.scores:
            raise DataError(f"participant {participant!r} already rated stimulus {stimulus!r}")
        if not (SCALE_MIN <= score <= SCALE_MAX):
            raise DataError(f"score {score} outside [{SCALE_MIN}, {SCALE_MAX}]")
        if participant not in self.participants:
            self.participants.append(participant)
        if stimulus not in self.stimuli:
            self.stimuli.append(stimulus)
        self.scores[key] = int(score)
        if timestamp:
            self.timestamps[key] = timestamp

    @classmethod
    def empty(cls) -> "RatingTable":
        return cls(participants=[], stimuli=[], scores={})


@dataclass
class MosTable:
    mos: dict[str, float]
    n_raters: dict[str, int]


def screen_participants(
    table: RatingTable,
    fence_factor: float = 1.5,
    outlier_fraction: float = 0.05,
    variance_floor: float = 1e-6,
    extreme_fraction: float = 0.95,
) -> RatingTable:
    """Fill outlier flags and participant exclusions; the input is untouched.

    Pass 1 flags any score outside [Q1 - f*IQR, Q3 + f*IQR] of its stimulus.
    Pass 2 excludes a participant whose flagged fraction exceeds
    ``outlier_fraction``, whose rating variance is below ``variance_floor``,
    or who rated at a scale extreme in at least ``extreme_fraction`` of
    their ratings.
    """
    by_stimulus: dict[str, list[tuple[str, int]]] = {s: [] for s in table.stimuli}
    for (p, s), score in table.scores.items():
        by_stimulus[s].append((p, score))
    thin = [s for s, rows in by_stimulus.items() if len(rows) < 3]
    if thin:
        raise DataError(f"stimuli with fewer than 3 raters: {', '.join(sorted(thin))}")

    flags: set[tuple[str, str]] = set()
    for s, rows in by_stimulus.items():
        values = np.array([score for _, score in rows], dtype=np.float64)
        q1 = np.percentile(values, 25, method="linear")
        q3 = np.percentile(values, 75, method="linear")
        iqr = q3 - q1
        low, high = q1 - fence_factor * iqr, q3 + fence_factor * iqr
        for p, score in rows:
            if score < low or score > high:
                flags.add((p, s))

    excluded: set[str] = set()
    for p in table.participants:
        rated = [(s, score) for (pp, s), score in table.scores.items() if pp == p]
        if not rated:
            continue
        values = np.array([score for _, score in rated], dtype=np.float64)
        flagged = sum(1 for s, _ in rated if (p, s) in flags)
        if flagged / len(rated) > outlier_fraction:
            excluded.add(p)
        elif float(np.var(values)) < variance_floor:
            excluded.add(p)
        else:
            at_extreme = np.count_nonzero((values == SCALE_MIN) | (values == SCALE_MAX))
            if at_extreme / len(rated) >= extreme_fraction:
                excluded.add(p)

    return RatingTable(
        participants=list(table.participants),
        stimuli=list(table.stimuli),
        scores=dict(table.scores),
        timestamps=dict(table.timestamps),
        flags=flags,
        excluded=excluded,
    )


def compute_mos(table: RatingTable) -> MosTable:
    """Arithmetic mean of valid scores per stimulus.

    Valid = rated by a non-excluded participant and not outlier-flagged.
    A stimulus left with zero valid scores is a data error.
    """
    mos: dict[str, float] = {}
    counts: dict[str, int] = {}
    for s in table.stimuli:
        valid = [
            score for (p, ss), score in table.scores.items()
            if ss == s and p not in table.excluded and (p, ss) not in table.flags
        ]
        if not valid:
            raise DataError(f"stimulus {s!r} has no valid scores after screening")
        mos[s] = float(np.mean(valid))
        counts[s] = len(valid)
    return MosTable(mos=mos, n_raters=counts)


def export_manifest_mos(mos: MosTable, manifest: DatasetManifest) -> DatasetManifest:
    """Attach MOS values to manifest entries by stimulus ID.

    IDs in the MOS table that match no manifest entry are a data error; an
    empty table is a warning and leaves the manifest unchanged.
    """
    known = {e.entry_id for e in manifest.entries}
    if not mos.mos:
        warnings.warn("MOS table is empty; manifest left unchanged", stacklevel=2)
    unmatched = sorted(set(mos.mos) - known)
    if unmatched:
        raise DataError(f"MOS stimuli not present in manifest: {', '.join(unmatched)}")

    out = DatasetManifest(
        seed=manifest.seed, generator=manifest.generator,
        base_models=list(manifest.base_models), notes=list(manifest.notes),
    )
    for e in manifest.entries:
        out.entries.append(ManifestEntry(
            entry_id=e.entry_id, base=e.base, spec=e.spec, stream=e.stream,
            output=e.output, recipe=e.recipe,
            mos=mos.mos.get(e.entry_id, e.mos),
        ))
    return out


RATINGS_HEADER = ["participant_id", "stimulus_id", "score", "timestamp_iso8601"]


def load_ratings_csv(path: str) -> RatingTable:
    """Read a ratings CSV; extra columns are tolerated and rows marked
    is_training are skipped (they never feed MOS)."""
    table = RatingTable.empty()
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty ratings file")
        missing = [c for c in RATINGS_HEADER if c not in reader.fieldnames]
        if missing:
            raise DataError(f"{path}: missing columns: {', '.join(missing)}")
        for row in reader:
            if row.get("is_training", "").strip().lower() in ("1", "true", "yes"):
                continue
            try:
                score = int(row["score"])
            except ValueError:
                raise DataError(f"{path}: non-integer score {row['score']!r}") from None
            table.add(row["participant_id"], row["stimulus_id"], score,
                      row.get("timestamp_iso8601", ""))
    return table


def save_mos_csv(mos: MosTable, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["stimulus_id", "mos", "n_raters"])
        for s in mos.mos:
            writer.writerow([s, repr(mos.mos[s]), mos.n_raters[s]])


def load_mos_csv(path: str) -> MosTable:
    mos: dict[str, float] = {}
    counts: dict[str, int] = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        for row in reader:
            sid = row["stimulus_id"]
            if sid in mos:
                raise DataError(f"{path}: duplicate stimulus {sid!r}")
            value = float(row["mos"])
            if not (SCALE_MIN <= value <= SCALE_MAX):
                raise DomainError(f"{path}: MOS {value} outside [{SCALE_MIN}, {SCALE_MAX}]")
            mos[sid] = value
            counts[sid] = int(row.get("n_raters", 0))
    return MosTable(mos=mos, n_raters=counts)
