"""Time-tag streams: container, binary/CSV serialization, transforms.

Binary layout ("PTTG" format):

    offset 0   magic b"PTTG"
    offset 4   version, u16 little-endian
    offset 6   metadata byte length L, u32 little-endian
    offset 10  metadata, UTF-8 "key=value" lines
    offset 10+L  records, 9 bytes each: channel u8 (0=A, 1=B),
                 timestamp u64 little-endian, picoseconds, nondecreasing

CSV alternative: header "channel,timestamp_ps", channel letters A/B.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"PTTG"
VERSION = 1
HEADER = struct.Struct("<HI")  # version, metadata length
CHANNEL_A = 0
CHANNEL_B = 1

_RECORD_DTYPE = np.dtype([("ch", "u1"), ("ts", "<u8")])
assert _RECORD_DTYPE.itemsize == 9

CSV_HEADER = "channel,timestamp_ps"
_CSV_LETTER = {CHANNEL_A: "A", CHANNEL_B: "B"}
_CSV_CODE = {"A": CHANNEL_A, "B": CHANNEL_B}


class FormatError(ValueError):
    """Malformed time-tag file. ``offset`` is the offending byte position."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


@dataclass
class TimeTagStream:
    """Detector click records: channel codes plus picosecond timestamps.

    Timestamps are int64 picoseconds and must be nondecreasing; channels
    are 0 (detector A) or 1 (detector B). Metadata is a flat str->str
    mapping carried through serialization.
    """

    channels: np.ndarray
    timestamps: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        ch = np.asarray(self.channels, dtype=np.uint8)
        ts = np.asarray(self.timestamps, dtype=np.int64)
        if ch.shape != ts.shape or ch.ndim != 1:
            raise ValueError("channels and timestamps must be matching 1-d arrays")
        if ts.size and np.any(np.diff(ts) < 0):
            bad = int(np.argmax(np.diff(ts) < 0)) + 1
            raise ValueError(f"timestamps must be nondecreasing (record {bad})")
        if ts.size and ts.min() < 0:
            raise ValueError("timestamps must be nonnegative")
        if ch.size and ch.max() > 1:
            raise ValueError("channel codes must be 0 or 1")
        self.channels = ch
        self.timestamps = ts
        self.metadata = {str(k): str(v) for (k, v) in self.metadata.items()}

    def __len__(self):
        return self.timestamps.size

    @property
    def duration_ps(self) -> int:
        """Acquisition span in ps, from metadata or the last timestamp."""
        if "duration_ps" in self.metadata:
            return int(self.metadata["duration_ps"])
        return int(self.timestamps[-1]) + 1 if len(self) else 0

    def channel_times(self, code: int) -> np.ndarray:
        return self.timestamps[self.channels == code]


def merge(a: TimeTagStream, b: TimeTagStream, metadata=None) -> TimeTagStream:
    """Interleave two streams by timestamp (stable for ties)."""
    ts = np.concatenate([a.timestamps, b.timestamps])
    ch = np.concatenate([a.channels, b.channels])
    order = np.argsort(ts, kind="stable")
    meta = dict(a.metadata) if metadata is None else dict(metadata)
    return TimeTagStream(ch[order], ts[order], meta)


def split(stream: TimeTagStream):
    """Separate a merged stream into its (A, B) channel streams."""
    a_mask = stream.channels == CHANNEL_A
    meta = dict(stream.metadata)
    a = TimeTagStream(stream.channels[a_mask], stream.timestamps[a_mask], meta)
    b = TimeTagStream(stream.channels[~a_mask], stream.timestamps[~a_mask], dict(meta))
    return a, b


def write_stream(stream: TimeTagStream, path) -> None:
    """Serialize to the binary PTTG layout. Byte-stable for equal content."""
    meta_blob = "".join(
        f"{k}={v}\n" for k, v in sorted(stream.metadata.items())
    ).encode("utf-8")
    records = np.empty(len(stream), dtype=_RECORD_DTYPE)
    records["ch"] = stream.channels
    records["ts"] = stream.timestamps.astype(np.uint64)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(HEADER.pack(VERSION, len(meta_blob)))
        f.write(meta_blob)
        f.write(records.tobytes())


def read_stream(path) -> TimeTagStream:
    """Parse a binary PTTG file; malformed input raises FormatError with
    the offending byte offset."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}", offset=0)
    if len(blob) < 10:
        raise FormatError("truncated header", offset=len(blob))
    version, meta_len = HEADER.unpack_from(blob, 4)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    body = 10 + meta_len
    if len(blob) < body:
        raise FormatError("metadata extends past end of file", offset=len(blob))
    try:
        meta_text = blob[10:body].decode("utf-8")
    except UnicodeDecodeError as e:
        raise FormatError("metadata is not valid UTF-8", offset=10 + e.start) from None
    metadata = {}
    for line in meta_text.splitlines():
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"metadata line {line!r} lacks '='", offset=10)
        metadata[key] = value
    payload = len(blob) - body
    if payload % _RECORD_DTYPE.itemsize:
        raise FormatError(
            f"record section is {payload} bytes, not a multiple of 9",
            offset=body + payload - payload % _RECORD_DTYPE.itemsize,
        )
    records = np.frombuffer(blob, dtype=_RECORD_DTYPE, offset=body)
    ch = records["ch"]
    ts = records["ts"].astype(np.int64)
    if ch.size and ch.max() > 1:
        bad = int(np.argmax(ch > 1))
        raise FormatError(f"channel code {ch[bad]} invalid", offset=body + 9 * bad)
    if ts.size and np.any(np.diff(ts) < 0):
        bad = int(np.argmax(np.diff(ts) < 0)) + 1
        raise FormatError("timestamps decrease", offset=body + 9 * bad)
    return TimeTagStream(ch, ts, metadata)


def write_stream_csv(stream: TimeTagStream, path) -> None:
    """Serialize as CSV with '# key=value' metadata comment lines."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for k, v in sorted(stream.metadata.items()):
            f.write(f"# {k}={v}\n")
        f.write(CSV_HEADER + "\n")
        for ch, ts in zip(stream.channels, stream.timestamps):
            f.write(f"{_CSV_LETTER[int(ch)]},{int(ts)}\n")


def read_stream_csv(path) -> TimeTagStream:
    """Parse the CSV layout; errors name the 1-based line number."""
    metadata = {}
    channels = []
    timestamps = []
    saw_header = False
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, sep, value = line[1:].strip().partition("=")
                if sep:
                    metadata[key] = value
                continue
            if not saw_header:
                if line != CSV_HEADER:
                    raise FormatError(
                        f"line {lineno}: expected header {CSV_HEADER!r}, got {line!r}"
                    )
                saw_header = True
                continue
            ch_txt, sep, ts_txt = line.partition(",")
            if not sep or ch_txt not in _CSV_CODE:
                raise FormatError(f"line {lineno}: malformed record {line!r}")
            try:
                ts = int(ts_txt)
            except ValueError:
                raise FormatError(
                    f"line {lineno}: bad timestamp {ts_txt!r}"
                ) from None
            channels.append(_CSV_CODE[ch_txt])
            timestamps.append(ts)
    if not saw_header:
        raise FormatError("missing CSV header line")
    try:
        return TimeTagStream(
            np.asarray(channels, dtype=np.uint8),
            np.asarray(timestamps, dtype=np.int64),
            metadata,
        )
    except ValueError as e:
        raise FormatError(str(e)) from None


def thin(stream: TimeTagStream, q: float, seed: int) -> TimeTagStream:
    """Keep each record independently with probability q (Bernoulli loss).

    q = 1 returns the identical record sequence; q = 0 drops everything.
    Metadata is carried through unchanged.
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    keep = rng.random(len(stream)) < q
    return TimeTagStream(
        stream.channels[keep], stream.timestamps[keep], dict(stream.metadata)
    )


def inject_poisson(
    stream: TimeTagStream, rate: float, duration: float, seed: int
) -> TimeTagStream:
    """Overlay independent Poisson background on both channels.

    ``rate`` is per channel in counts/s; tags fall uniformly over
    [0, duration). The result stays timestamp-sorted.
    """
    if rate < 0:
        raise ValueError("rate must be nonnegative")
    if duration <= 0:
        raise ValueError("duration must be positive")
    rng = np.random.default_rng(seed)
    dur_ps = int(round(duration * 1e12))
    extra_ts = []
    extra_ch = []
    for code in (CHANNEL_A, CHANNEL_B):
        n = rng.poisson(rate * duration)
        extra_ts.append(rng.integers(0, dur_ps, n, dtype=np.int64))
        extra_ch.append(np.full(n, code, dtype=np.uint8))
    ts = np.concatenate([stream.timestamps, *extra_ts])
    ch = np.concatenate([stream.channels, *extra_ch])
    order = np.argsort(ts, kind="stable")
    return TimeTagStream(ch[order], ts[order], dict(stream.metadata))


def segment(stream: TimeTagStream, k: int, align_ps: int = 1):
    """Cut the acquisition into k near-equal contiguous intervals.

    Returns a list of k streams with timestamps rebased to each segment
    start; a record exactly on a boundary belongs to the later segment.
    Each piece carries metadata with its own duration_ps. k larger than
    the duration in nanoseconds is rejected.

    ``align_ps`` snaps the cut points to multiples of that many ps so a
    downstream binning at the same width sees the same grid in every
    segment (a misaligned cut would make rebased bins straddle two
    original bins). The final segment absorbs the leftover tail.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if align_ps < 1:
        raise ValueError("align_ps must be at least 1")
    dur = stream.duration_ps
    if dur <= 0:
        raise ValueError("stream duration is unknown or zero")
    if k > dur // 1000:
        raise ValueError(
            f"k={k} exceeds duration/1ns = {dur // 1000}; segments would be sub-ns"
        )
    if k > dur // align_ps:
        raise ValueError(f"k={k} exceeds duration/alignment = {dur // align_ps}")
    # integer boundaries, exact: segment j covers [bounds[j], bounds[j+1])
    units = dur // align_ps
    bounds = ((np.arange(k + 1, dtype=np.int64) * units) // k) * align_ps
    bounds[k] = dur
    idx = np.searchsorted(bounds, stream.timestamps, side="right") - 1
    idx = np.clip(idx, 0, k - 1)
    out = []
    for j in range(k):
        mask = idx == j
        meta = dict(stream.metadata)
        meta["duration_ps"] = str(int(bounds[j + 1] - bounds[j]))
        meta["segment_index"] = str(j)
        out.append(
            TimeTagStream(
                stream.channels[mask], stream.timestamps[mask] - bounds[j], meta
            )
        )
    return out
