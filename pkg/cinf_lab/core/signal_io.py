#!/usr/bin/env python3
"""
Signal I/O - CSV and binary sample files
Part of the CINF Lab outlier-noise mitigation infrastructure

CSV files start with a "# sample_rate=<hz>" comment line and hold one sample
per row. Binary files carry a 16-byte header (magic CINF, version, reserved,
rate) followed by little-endian float64 samples.
"""

import logging
import re
import struct
from pathlib import Path
from typing import Union

import numpy as np

from cinf_lab.core.signal_core import Signal

logger = logging.getLogger(__name__)

MAGIC = b"CINF"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sHHd")  # magic, version, reserved, sample rate
RATE_LINE = re.compile(r"^#\s*sample_rate\s*=\s*(\S+)\s*$")

PathLike = Union[str, Path]


def write_csv(s: Signal, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# sample_rate={s.sample_rate!r}\n")
        for value in s.samples:
            f.write(f"{value:.17g}\n")
    return path


def read_csv(path: PathLike) -> Signal:
    path = Path(path)
    sample_rate = None
    values = []
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                match = RATE_LINE.match(line)
                if match and sample_rate is None:
                    sample_rate = float(match.group(1))
                continue
            try:
                values.append(float(line))
            except ValueError:
                raise ValueError(f"{path}:{line_number}: not a sample value: {line!r}") from None

    if sample_rate is None:
        raise ValueError(f"{path}: missing '# sample_rate=<hz>' header")
    return Signal(np.array(values, dtype=np.float64), sample_rate, label=path.stem)


def write_binary(s: Signal, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(HEADER.pack(MAGIC, FORMAT_VERSION, 0, s.sample_rate))
        f.write(s.samples.astype("<f8").tobytes())
    return path


def read_binary(path: PathLike) -> Signal:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < HEADER.size:
        raise ValueError(f"{path}: file shorter than the {HEADER.size}-byte header")

    magic, version, _reserved, sample_rate = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")

    body = raw[HEADER.size:]
    if len(body) % 8:
        logger.warning("%s: trailing %d bytes ignored", path, len(body) % 8)
        body = body[:len(body) - len(body) % 8]
    samples = np.frombuffer(body, dtype="<f8").astype(np.float64)
    return Signal(samples, sample_rate, label=path.stem)


def write_signal(s: Signal, path: PathLike) -> Path:
    """Pick the format from the suffix: .csv for text, anything else binary."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return write_csv(s, path)
    return write_binary(s, path)


def read_signal(path: PathLike) -> Signal:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return read_csv(path)
    return read_binary(path)
