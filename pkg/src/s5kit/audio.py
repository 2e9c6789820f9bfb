"""Multichannel audio buffers, WAV I/O, convolution and the SDR family.

Everything downstream (scoring, rendering) builds on this module. Audio is
kept as float64 internally; files on disk are 16-bit PCM (write) or 16-bit
PCM / 32-bit IEEE float (read). 4-channel buffers follow the ambisonic
B-format channel order W, Y, Z, X, with channel 0 (W, omnidirectional)
acting as the reference channel.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

FOA_CHANNELS = 4
FOA_CHANNEL_ORDER = ("W", "Y", "Z", "X")

# SDR values are clamped here so perfect estimates stay finite in averages.
SDR_CLAMP_DB = 100.0

_PCM16_SCALE = 32768.0
_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_IEEE_FLOAT = 0x0003


class WavFormatError(ValueError):
    """A WAV file could not be parsed or uses an unsupported encoding."""


class ClippingWarning(UserWarning):
    """Samples outside [-1, 1] were hard-clipped while writing 16-bit PCM."""


@dataclass(frozen=True)
class MultichannelAudio:
    """Sample-rate-stamped block of audio, stored channel-major.

    ``data`` has shape (channels, samples), float64, nominal range [-1, 1].
    Treat instances as immutable values; operations return new buffers.
    """

    data: np.ndarray
    sample_rate: int

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 1:
            data = data[np.newaxis, :]
        if data.ndim != 2:
            raise ValueError(f"audio data must be 1-D or 2-D, got shape {data.shape}")
        if data.shape[0] < 1:
            raise ValueError("audio must have at least one channel")
        rate = int(self.sample_rate)
        if rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "sample_rate", rate)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def num_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration(self) -> float:
        return self.num_samples / self.sample_rate

    @property
    def is_foa(self) -> bool:
        return self.channels == FOA_CHANNELS

    @property
    def channel_order(self) -> tuple[str, ...]:
        """Channel names; 4-channel buffers are FOA B-format WYZX by convention."""
        if self.channels == FOA_CHANNELS:
            return FOA_CHANNEL_ORDER
        return tuple(f"ch{i}" for i in range(self.channels))

    def channel(self, index: int) -> np.ndarray:
        return self.data[index]


@dataclass(frozen=True)
class WavInfo:
    """Header-level facts about a WAV file, without decoding the samples."""

    channels: int
    sample_rate: int
    bits_per_sample: int
    format_tag: int
    num_samples: int


def _parse_riff(path: Path) -> tuple[tuple[int, int, int, int, int, int], bytes]:
    """Return the fmt fields and the raw data chunk of a RIFF/WAVE file."""
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise WavFormatError(f"{path}: unreadable file ({exc})") from exc
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    offset = 12
    while offset + 8 <= len(raw):
        chunk_id = raw[offset : offset + 4]
        (chunk_size,) = struct.unpack_from("<I", raw, offset + 4)
        body = raw[offset + 8 : offset + 8 + chunk_size]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise WavFormatError(f"{path}: truncated fmt chunk ({len(body)} bytes)")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            if len(body) < chunk_size:
                raise WavFormatError(
                    f"{path}: truncated data chunk "
                    f"(header declares {chunk_size} bytes, {len(body)} present)"
                )
            data = body
        # chunks are word-aligned; odd sizes carry a pad byte
        offset += 8 + chunk_size + (chunk_size & 1)

    if fmt is None:
        raise WavFormatError(f"{path}: missing fmt chunk")
    if data is None:
        raise WavFormatError(f"{path}: missing data chunk")
    return fmt, data


def wav_info(path: str | Path) -> WavInfo:
    """Inspect a WAV file's format without converting the samples."""
    path = Path(path)
    fmt, data = _parse_riff(path)
    format_tag, channels, sample_rate, _, _, bits = fmt
    if channels < 1:
        raise WavFormatError(f"{path}: channel count {channels} in fmt chunk")
    bytes_per_frame = max(1, channels * (bits // 8))
    return WavInfo(
        channels=channels,
        sample_rate=sample_rate,
        bits_per_sample=bits,
        format_tag=format_tag,
        num_samples=len(data) // bytes_per_frame,
    )


def load_wav(path: str | Path) -> MultichannelAudio:
    """Load a 16-bit PCM or 32-bit IEEE float WAV file.

    16-bit samples are scaled to [-1, 1) by division by 32768. Any other
    encoding is rejected with a message naming the offending property.
    """
    path = Path(path)
    fmt, data = _parse_riff(path)
    format_tag, channels, sample_rate, _, _, bits = fmt
    if channels < 1:
        raise WavFormatError(f"{path}: channel count {channels} in fmt chunk")
    if sample_rate <= 0:
        raise WavFormatError(f"{path}: sample rate {sample_rate} in fmt chunk")

    if format_tag == _WAVE_FORMAT_PCM:
        if bits != 16:
            raise WavFormatError(
                f"{path}: unsupported sample format: {bits}-bit PCM "
                "(only 16-bit PCM and 32-bit float are supported)"
            )
        frame_bytes = 2 * channels
        if len(data) % frame_bytes:
            raise WavFormatError(
                f"{path}: data chunk size {len(data)} is not a whole number of "
                f"{channels}-channel frames"
            )
        samples = np.frombuffer(data, dtype="<i2").astype(np.float64) / _PCM16_SCALE
    elif format_tag == _WAVE_FORMAT_IEEE_FLOAT:
        if bits != 32:
            raise WavFormatError(
                f"{path}: unsupported sample format: {bits}-bit float "
                "(only 16-bit PCM and 32-bit float are supported)"
            )
        frame_bytes = 4 * channels
        if len(data) % frame_bytes:
            raise WavFormatError(
                f"{path}: data chunk size {len(data)} is not a whole number of "
                f"{channels}-channel frames"
            )
        samples = np.frombuffer(data, dtype="<f4").astype(np.float64)
    else:
        raise WavFormatError(f"{path}: unsupported codec (format tag {format_tag})")

    frames = samples.reshape(-1, channels)
    return MultichannelAudio(frames.T.copy(), sample_rate)


def save_wav(audio: MultichannelAudio, path: str | Path, bit_depth: int = 16) -> int:
    """Write ``audio`` as interleaved 16-bit PCM. Returns the clipped-sample count.

    Amplitudes outside [-1, 1] are hard-clipped and reported once per file via
    a :class:`ClippingWarning`. Writing the same buffer twice yields
    byte-identical files.
    """
    path = Path(path)
    if bit_depth != 16:
        raise ValueError(f"only 16-bit PCM output is supported, got {bit_depth}")
    if not np.all(np.isfinite(audio.data)):
        raise ValueError(f"{path}: audio contains non-finite amplitudes")

    scaled = np.rint(audio.data * _PCM16_SCALE)
    n_clipped = int(np.count_nonzero((scaled > 32767.0) | (scaled < -32768.0)))
    if n_clipped:
        warnings.warn(
            f"{path}: hard-clipped {n_clipped} samples outside [-1, 1]",
            ClippingWarning,
            stacklevel=2,
        )
    ints = np.clip(scaled, -32768.0, 32767.0).astype("<i2")
    payload = ints.T.reshape(-1).tobytes()

    channels = audio.channels
    byte_rate = audio.sample_rate * channels * 2
    header = b"".join(
        [
            b"RIFF",
            struct.pack("<I", 36 + len(payload)),
            b"WAVE",
            b"fmt ",
            struct.pack(
                "<IHHIIHH",
                16,
                _WAVE_FORMAT_PCM,
                channels,
                audio.sample_rate,
                byte_rate,
                channels * 2,
                16,
            ),
            b"data",
            struct.pack("<I", len(payload)),
        ]
    )
    path.write_bytes(header + payload)
    return n_clipped


def _as_mono(signal, name: str) -> np.ndarray:
    if isinstance(signal, MultichannelAudio):
        if signal.channels != 1:
            raise ValueError(f"{name} must be mono, got {signal.channels} channels")
        return signal.data[0]
    arr = np.asarray(signal, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-D waveform, got shape {arr.shape}")
    return arr


def convolve(
    signal: MultichannelAudio,
    rir: MultichannelAudio,
    length: int | str | None = None,
) -> MultichannelAudio:
    """Linear convolution of a mono signal with a mono or multichannel impulse.

    ``length`` selects the output support: ``None`` truncates to the signal
    length (the rendering-grid policy), ``"full"`` keeps all
    ``N + K - 1`` samples, and an integer truncates or zero-pads to exactly
    that many samples.
    """
    if signal.sample_rate != rir.sample_rate:
        raise ValueError(
            f"sample-rate mismatch: signal {signal.sample_rate} Hz vs rir {rir.sample_rate} Hz"
        )
    if signal.channels != 1:
        raise ValueError(f"signal must be mono, got {signal.channels} channels")
    if signal.num_samples == 0 or rir.num_samples == 0:
        raise ValueError("convolve requires non-empty signal and rir")

    full = np.stack(
        [fftconvolve(signal.data[0], rir.data[c]) for c in range(rir.channels)]
    )
    if length is None:
        out_len = signal.num_samples
    elif length == "full":
        out_len = full.shape[1]
    else:
        out_len = int(length)
        if out_len < 0:
            raise ValueError(f"length must be non-negative, got {length}")

    if out_len <= full.shape[1]:
        out = full[:, :out_len]
    else:
        out = np.zeros((rir.channels, out_len))
        out[:, : full.shape[1]] = full
    return MultichannelAudio(out, signal.sample_rate)


def sdr(estimate, reference) -> float:
    """Signal-to-distortion ratio 10*log10(||s||^2 / ||s - s_hat||^2), in dB.

    Plain (non-scale-invariant) SDR, clamped to [-100, +100] dB. The reference
    must carry nonzero energy; callers never pass silent references.
    """
    est = _as_mono(estimate, "estimate")
    ref = _as_mono(reference, "reference")
    if est.shape != ref.shape:
        raise ValueError(f"length mismatch: estimate {est.shape[0]} vs reference {ref.shape[0]}")
    ref_energy = float(np.dot(ref, ref))
    if ref_energy == 0.0:
        raise ValueError("undefined SDR: reference has zero energy")
    err = ref - est
    err_energy = float(np.dot(err, err))
    if err_energy == 0.0:
        return SDR_CLAMP_DB
    value = 10.0 * math.log10(ref_energy / err_energy)
    return float(min(max(value, -SDR_CLAMP_DB), SDR_CLAMP_DB))


def sdri(estimate, reference, mixture_ref) -> float:
    """SDR improvement of the estimate over the unprocessed mixture channel."""
    return sdr(estimate, reference) - sdr(mixture_ref, reference)


def rms_level(signal, active_threshold_db: float | None = None) -> float:
    """Root-mean-square level over the full signal, as linear amplitude.

    ``active_threshold_db`` is reserved for a gated estimator and must be
    ``None`` for now; the recorded level convention measures the full segment.
    """
    if active_threshold_db is not None:
        raise NotImplementedError("active-segment gating is reserved; pass None")
    x = _as_mono(signal, "signal")
    if x.size == 0:
        raise ValueError("rms_level requires a non-empty signal")
    return float(np.sqrt(np.mean(np.square(x))))
