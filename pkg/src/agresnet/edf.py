"""European Data Format reader.

EDF files carry a 256-byte ASCII fixed header, 256 bytes of ASCII
headers per signal (field-major), then data records of 16-bit
little-endian two's-complement samples. Digital values map linearly to
physical units via the per-signal (physical_min, physical_max,
digital_min, digital_max) calibration. Annotation channels ("EDF
Annotations") hold text event lists instead of samples.
"""

from dataclasses import dataclass

import numpy as np

ANNOTATION_LABEL = "EDF Annotations"

FIXED_HEADER_BYTES = 256
PER_SIGNAL_HEADER_BYTES = 256


class EdfError(ValueError):
    """Malformed EDF content; messages carry the offending byte offset."""


@dataclass
class EdfSignalHeader:
    label: str
    transducer: str
    physical_dim: str
    physical_min: float
    physical_max: float
    digital_min: int
    digital_max: int
    prefiltering: str
    samples_per_record: int
    reserved: str = ""

    @property
    def is_annotation(self) -> bool:
        return self.label == ANNOTATION_LABEL

    @property
    def scale(self) -> float:
        return (self.physical_max - self.physical_min) / (self.digital_max - self.digital_min)

    @property
    def offset(self) -> float:
        return self.physical_max - self.scale * self.digital_max


@dataclass
class EdfFile:
    version: str
    patient_id: str
    recording_id: str
    start_date: str
    start_time: str
    reserved: str
    n_records: int
    record_duration: float
    signal_headers: list
    signals: list  # physical-unit float arrays; None for annotation channels
    annotations: list  # (onset seconds, duration seconds, code)

    def channel_signals(self) -> np.ndarray:
        """Ordinary channels stacked channels x time."""
        rows = [s for s in self.signals if s is not None]
        return np.vstack(rows) if rows else np.zeros((0, 0))

    def channel_labels(self) -> list:
        return [h.label for h in self.signal_headers if not h.is_annotation]

    def sampling_rate(self) -> float:
        rates = {
            h.samples_per_record for h in self.signal_headers if not h.is_annotation
        }
        if len(rates) != 1:
            raise EdfError(f"channels disagree on samples per record: {sorted(rates)}")
        return rates.pop() / self.record_duration


def _ascii(data: bytes, start: int, length: int) -> str:
    return data[start: start + length].decode("latin-1")


def _parse_int(data: bytes, start: int, length: int, what: str) -> int:
    text = _ascii(data, start, length).strip()
    try:
        return int(text)
    except ValueError:
        raise EdfError(
            f"non-numeric {what} {text!r} at byte offset {start}"
        ) from None


def _parse_float(data: bytes, start: int, length: int, what: str) -> float:
    text = _ascii(data, start, length).strip()
    try:
        return float(text)
    except ValueError:
        raise EdfError(
            f"non-numeric {what} {text!r} at byte offset {start}"
        ) from None


def _parse_annotation_block(raw: bytes, events: list):
    # Records hold TALs: +onset[\x15duration]\x14text\x14 ... \x00
    for tal in raw.split(b"\x00"):
        if not tal:
            continue
        parts = tal.split(b"\x14")
        stamp = parts[0]
        texts = [p for p in parts[1:] if p]
        if b"\x15" in stamp:
            onset_b, duration_b = stamp.split(b"\x15", 1)
        else:
            onset_b, duration_b = stamp, b"0"
        try:
            onset = float(onset_b.decode("latin-1"))
            duration = float(duration_b.decode("latin-1") or "0")
        except ValueError:
            continue  # tolerate stray bytes after the last TAL
        for text in texts:
            events.append((onset, duration, text.decode("latin-1")))


def parse_edf(data) -> EdfFile:
    """Decode EDF bytes (or a file path) into headers, physical-unit
    signals, and annotation events."""
    if not isinstance(data, (bytes, bytearray)):
        with open(data, "rb") as fh:
            data = fh.read()
    data = bytes(data)
    if len(data) < FIXED_HEADER_BYTES:
        raise EdfError(
            f"file is {len(data)} bytes; the fixed header needs {FIXED_HEADER_BYTES}"
        )

    version = _ascii(data, 0, 8).strip()
    patient_id = _ascii(data, 8, 80).strip()
    recording_id = _ascii(data, 88, 80).strip()
    start_date = _ascii(data, 168, 8).strip()
    start_time = _ascii(data, 176, 8).strip()
    header_bytes = _parse_int(data, 184, 8, "header byte count")
    reserved = _ascii(data, 192, 44).strip()
    n_records = _parse_int(data, 236, 8, "record count")
    record_duration = _parse_float(data, 244, 8, "record duration")
    ns = _parse_int(data, 252, 4, "signal count")

    expected_header = FIXED_HEADER_BYTES + ns * PER_SIGNAL_HEADER_BYTES
    if header_bytes != expected_header:
        raise EdfError(
            f"header byte count {header_bytes} at offset 184 does not match "
            f"{expected_header} implied by {ns} signals"
        )
    if len(data) < expected_header:
        raise EdfError(
            f"file truncated inside signal headers: {len(data)} < {expected_header} bytes"
        )

    base = FIXED_HEADER_BYTES

    def field_start(field_index, widths=(16, 80, 8, 8, 8, 8, 8, 80, 8, 32)):
        return base + ns * sum(widths[:field_index])

    headers = []
    for i in range(ns):
        label = _ascii(data, field_start(0) + 16 * i, 16).strip()
        transducer = _ascii(data, field_start(1) + 80 * i, 80).strip()
        physical_dim = _ascii(data, field_start(2) + 8 * i, 8).strip()
        physical_min = _parse_float(data, field_start(3) + 8 * i, 8, "physical minimum")
        physical_max = _parse_float(data, field_start(4) + 8 * i, 8, "physical maximum")
        digital_min = _parse_int(data, field_start(5) + 8 * i, 8, "digital minimum")
        digital_max = _parse_int(data, field_start(6) + 8 * i, 8, "digital maximum")
        prefiltering = _ascii(data, field_start(7) + 80 * i, 80).strip()
        samples_per_record = _parse_int(data, field_start(8) + 8 * i, 8,
                                        "samples per record")
        reserved_s = _ascii(data, field_start(9) + 32 * i, 32).strip()
        if digital_min == digital_max:
            raise EdfError(
                f"signal {i} ({label!r}) has digital_min == digital_max "
                f"({digital_min}) at byte offset {field_start(5) + 8 * i}"
            )
        headers.append(EdfSignalHeader(
            label=label, transducer=transducer, physical_dim=physical_dim,
            physical_min=physical_min, physical_max=physical_max,
            digital_min=digital_min, digital_max=digital_max,
            prefiltering=prefiltering, samples_per_record=samples_per_record,
            reserved=reserved_s,
        ))

    record_words = sum(h.samples_per_record for h in headers)
    record_bytes = 2 * record_words
    body = len(data) - expected_header
    if n_records < 0:  # unknown count: derive from the payload size
        if record_bytes and body % record_bytes:
            raise EdfError(
                f"payload of {body} bytes at offset {expected_header} is not a "
                f"multiple of the {record_bytes}-byte record size"
            )
        n_records = body // record_bytes if record_bytes else 0
    if body < n_records * record_bytes:
        raise EdfError(
            f"data truncated at byte offset {expected_header + body}: "
            f"{n_records} records of {record_bytes} bytes declared"
        )

    raw = np.frombuffer(data, dtype="<i2", offset=expected_header,
                        count=n_records * record_words)
    raw = raw.reshape(n_records, record_words) if n_records else raw.reshape(0, record_words)

    signals = []
    annotations = []
    col = 0
    for i, h in enumerate(headers):
        block = raw[:, col: col + h.samples_per_record]
        if h.is_annotation:
            events = []
            for rec in range(n_records):
                _parse_annotation_block(block[rec].tobytes(), events)
            annotations.extend(events)
            signals.append(None)
        else:
            digital = block.reshape(-1).astype(np.float64)
            signals.append(digital * h.scale + h.offset)
        col += h.samples_per_record

    return EdfFile(
        version=version, patient_id=patient_id, recording_id=recording_id,
        start_date=start_date, start_time=start_time, reserved=reserved,
        n_records=n_records, record_duration=record_duration,
        signal_headers=headers, signals=signals, annotations=annotations,
    )
