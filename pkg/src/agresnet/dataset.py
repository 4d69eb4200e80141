"""Trial windowing, per-time-point samples, and split/fold plans.

A trial is a 64-channel, 640-point window (4 s at 160 Hz) cut at an
annotation onset; every time point of a trial becomes one sample whose
features are the 64 channel values at that instant. Splits shuffle the
samples into ten shards: nine train and one test for holdout, or ten
rotations for cross-validation.
"""

import re
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .edf import EdfFile, parse_edf

SAMPLES_MAGIC = b"SMP1"

LABELS = ("L", "R", "B", "F")
LABEL_INDEX = {name: i for i, name in enumerate(LABELS)}

N_CHANNELS = 64
TRIAL_POINTS = 640

# PhysioNet motor-imagery runs: 4/8/12 imagine one fist (T1=left, T2=right),
# 6/10/14 imagine both fists (T1) or both feet (T2).
DEFAULT_EVENT_LABELS = {
    4: {"T1": "L", "T2": "R"},
    8: {"T1": "L", "T2": "R"},
    12: {"T1": "L", "T2": "R"},
    6: {"T1": "B", "T2": "F"},
    10: {"T1": "B", "T2": "F"},
    14: {"T1": "B", "T2": "F"},
}


@dataclass
class TrialRecord:
    subject_id: str
    run_id: int
    label: str
    signals: np.ndarray  # channels x time, physical units

    def __post_init__(self):
        self.signals = np.asarray(self.signals, dtype=np.float64)
        if self.label not in LABEL_INDEX:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")
        if self.signals.shape != (N_CHANNELS, TRIAL_POINTS):
            raise ValueError(
                f"trial must be {N_CHANNELS}x{TRIAL_POINTS}, got {self.signals.shape}"
            )


@dataclass
class SampleSet:
    """Per-time-point samples: one row per instant across all electrodes."""

    features: np.ndarray  # M x channels
    labels: np.ndarray  # M class indices
    trial_index: np.ndarray = None  # provenance: source trial per row

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"{self.features.shape[0]} feature rows vs {self.labels.shape[0]} labels"
            )
        if self.trial_index is None:
            self.trial_index = np.zeros(self.labels.shape[0], dtype=np.int64)
        else:
            self.trial_index = np.asarray(self.trial_index, dtype=np.int64)

    def __len__(self):
        return self.features.shape[0]


def trials_from_edf(edf: EdfFile, subject_id: str, run_id: int,
                    event_labels: dict = None) -> list:
    """Cut labeled trials out of one recording.

    Events whose code is absent from the run's mapping (e.g. the T0 rest
    baseline) are skipped; windows running past the end of the recording
    are skipped with a warning.
    """
    mapping = (event_labels or DEFAULT_EVENT_LABELS).get(run_id)
    if mapping is None:
        return []
    signals = edf.channel_signals()
    if signals.shape[0] != N_CHANNELS:
        raise ValueError(
            f"{subject_id} run {run_id}: expected {N_CHANNELS} channels, "
            f"got {signals.shape[0]}"
        )
    fs = edf.sampling_rate()
    trials = []
    for onset, _duration, code in edf.annotations:
        label = mapping.get(code)
        if label is None:
            continue
        start = int(round(onset * fs))
        stop = start + TRIAL_POINTS
        if stop > signals.shape[1]:
            warnings.warn(
                f"{subject_id} run {run_id}: trial at {onset:.2f}s runs past "
                "the recording end; skipped",
                stacklevel=2,
            )
            continue
        trials.append(TrialRecord(subject_id=subject_id, run_id=run_id,
                                  label=label, signals=signals[:, start:stop]))
    return trials


_RUN_FILE = re.compile(r"^(?P<subject>.+)R(?P<run>\d+)\.edf$", re.IGNORECASE)


def load_corpus(dataset_dir, subjects=None, event_labels=None) -> list:
    """Collect trials from a PhysioNet-style tree (e.g. S001/S001R04.edf).

    Only files whose run number appears in the event-label table are
    read. ``subjects`` optionally restricts to the given subject ids.
    """
    mapping = event_labels or DEFAULT_EVENT_LABELS
    trials = []
    paths = sorted(Path(dataset_dir).rglob("*.edf"))
    if not paths:
        raise FileNotFoundError(f"no .edf files under {dataset_dir}")
    for path in paths:
        match = _RUN_FILE.match(path.name)
        if not match:
            continue
        subject = match.group("subject")
        run = int(match.group("run"))
        if run not in mapping:
            continue
        if subjects is not None and subject not in subjects:
            continue
        trials.extend(trials_from_edf(parse_edf(path), subject, run, mapping))
    return trials


def extract_samples(trials: list) -> SampleSet:
    """Every time point of every trial becomes one sample row."""
    if not trials:
        return SampleSet(features=np.zeros((0, N_CHANNELS)), labels=np.zeros(0, dtype=int))
    features = np.concatenate([t.signals.T for t in trials], axis=0)
    labels = np.repeat([LABEL_INDEX[t.label] for t in trials], TRIAL_POINTS)
    trial_index = np.repeat(np.arange(len(trials)), TRIAL_POINTS)
    return SampleSet(features=features, labels=labels, trial_index=trial_index)


@dataclass
class SplitPlan:
    """Ten shards partitioning the sample indices, plus their role."""

    shards: list
    mode: str  # 'holdout' or 'kfold'
    granularity: str = "sample"

    def __post_init__(self):
        if self.mode not in ("holdout", "kfold"):
            raise ValueError(f"mode must be holdout or kfold, got {self.mode!r}")

    @property
    def train_indices(self) -> np.ndarray:
        return np.concatenate(self.shards[:-1])

    @property
    def test_indices(self) -> np.ndarray:
        return self.shards[-1]

    def folds(self):
        """(train, test) index pairs, one rotation per shard."""
        out = []
        for k in range(len(self.shards)):
            train = np.concatenate([s for i, s in enumerate(self.shards) if i != k])
            out.append((train, self.shards[k]))
        return out


def make_split(sample_count: int, seed: int, mode: str = "holdout",
               n_shards: int = 10, granularity: str = "sample",
               trial_index: np.ndarray = None) -> SplitPlan:
    """Seeded shuffle into ``n_shards`` equal (within one) shards.

    ``granularity='trial'`` shuffles whole trials instead of samples, so
    no trial contributes to both train and test; the default per-sample
    split matches the evaluation protocol this pipeline reproduces.
    """
    if sample_count < n_shards:
        raise ValueError(f"need at least {n_shards} samples, got {sample_count}")
    rng = np.random.default_rng(seed)
    if granularity == "sample":
        shards = np.array_split(rng.permutation(sample_count), n_shards)
    elif granularity == "trial":
        if trial_index is None:
            raise ValueError("granularity='trial' requires the trial_index array")
        trial_index = np.asarray(trial_index)
        if trial_index.shape[0] != sample_count:
            raise ValueError("trial_index length does not match sample_count")
        trials = np.unique(trial_index)
        trial_shards = np.array_split(rng.permutation(trials), n_shards)
        shards = [np.flatnonzero(np.isin(trial_index, ts)) for ts in trial_shards]
    else:
        raise ValueError(f"granularity must be sample or trial, got {granularity!r}")
    return SplitPlan(shards=[np.asarray(s) for s in shards], mode=mode,
                     granularity=granularity)


def save_samples(path, samples: SampleSet):
    """Cache blob: magic 'SMP1', u32 LE row and channel counts, float32 LE
    features row-major, one label byte per row."""
    m, n = samples.features.shape
    with open(path, "wb") as fh:
        fh.write(SAMPLES_MAGIC)
        fh.write(struct.pack("<II", m, n))
        fh.write(np.ascontiguousarray(samples.features, dtype="<f4").tobytes())
        fh.write(samples.labels.astype(np.uint8).tobytes())


def load_samples(path) -> SampleSet:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != SAMPLES_MAGIC:
            raise ValueError(f"bad sample-cache magic {magic!r}, expected {SAMPLES_MAGIC!r}")
        m, n = struct.unpack("<II", fh.read(8))
        payload = fh.read(4 * m * n)
        if len(payload) != 4 * m * n:
            raise ValueError(f"truncated sample cache: expected {m}x{n} features")
        features = np.frombuffer(payload, dtype="<f4").reshape(m, n).astype(np.float64)
        labels = np.frombuffer(fh.read(m), dtype=np.uint8).astype(np.int64)
        if labels.shape[0] != m:
            raise ValueError("truncated sample cache: label block incomplete")
    return SampleSet(features=features, labels=labels)


def zscore_channels(samples: SampleSet) -> SampleSet:
    """Optional per-channel standardization (off by default; signals are
    otherwise used raw)."""
    mu = samples.features.mean(axis=0)
    sd = samples.features.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return SampleSet(features=(samples.features - mu) / sd, labels=samples.labels,
                     trial_index=samples.trial_index)
