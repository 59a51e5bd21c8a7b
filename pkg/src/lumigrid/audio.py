"""Audio loading, audio/video frame alignment, MFCC features, RMS amplitude.

The alignment rule ties audio analysis frames one-to-one to video frames:
with n_a samples and n_vf video frames, the hop is n_ah = n_a // (n_vf - 1)
and the window length is n_af = 2 * n_ah.  Window k starts at k * n_ah and
is zero-padded past the end of the signal, so exactly n_vf windows come out.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.fft import dct


class AudioError(ValueError):
    """Base class for audio input problems."""


class UnsupportedCodecError(AudioError):
    """The file is not PCM WAV in a supported sample format."""


class TruncatedFileError(AudioError):
    """The file ends before the declared chunk data."""


class EmptyAudioError(AudioError):
    """The file decodes to zero samples."""


class AlignmentError(AudioError):
    """Audio cannot be aligned to the requested frame count."""


@dataclass
class AudioClip:
    """Mono samples in [-1, 1] at a fixed sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise EmptyAudioError("clip must hold a non-empty 1-D sample array")
        if self.sample_rate <= 0:
            raise AudioError(f"sample rate must be positive, got {self.sample_rate}")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class AlignmentParams:
    """Hop and window lengths aligning audio windows to video frames."""

    n_a: int
    n_vf: int
    n_ah: int
    n_af: int


@dataclass(frozen=True)
class MfccConfig:
    """Mel filterbank / cepstrum settings.

    128 triangular mel filters (HTK scale, 0 Hz to Nyquist, peak 1) feed a
    natural log with ``log_floor`` guarding silence, then an orthonormal
    DCT-II keeps the first ``n_mfcc`` coefficients.  The FFT size is the
    smallest power of two >= the window length.
    """

    n_mels: int = 128
    n_mfcc: int = 128
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.n_mfcc > self.n_mels:
            raise AudioError(f"n_mfcc={self.n_mfcc} exceeds n_mels={self.n_mels}")
        if self.log_floor <= 0:
            raise AudioError("log_floor must be positive")


@dataclass
class MfccMatrix:
    """One MFCC row per video frame: shape (n_vf, n_mfcc)."""

    rows: np.ndarray

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2:
            raise AudioError("MFCC matrix must be 2-D")

    @property
    def n_frames(self) -> int:
        return self.rows.shape[0]


# --- WAV decoding -----------------------------------------------------------

_WAVE_FORMAT_PCM = 1
_WAVE_FORMAT_IEEE_FLOAT = 3
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


def load_audio(path) -> AudioClip:
    """Decode a PCM WAV file (8/16/24-bit integer or 32-bit float).

    Stereo (or any multi-channel) input is downmixed by channel averaging;
    integer samples are scaled to [-1, 1] (e.g. 16-bit -32768 -> -1.0).
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise UnsupportedCodecError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise TruncatedFileError(
                f"{path}: chunk {cid!r} declares {size} bytes, file has {len(body)}"
            )
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            payload = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned

    if fmt is None or payload is None:
        raise TruncatedFileError(f"{path}: missing fmt/data chunk")
    if len(fmt) < 16:
        raise TruncatedFileError(f"{path}: fmt chunk too short ({len(fmt)} bytes)")

    code, n_channels, sample_rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if code == _WAVE_FORMAT_EXTENSIBLE and len(fmt) >= 40:
        (code,) = struct.unpack_from("<H", fmt, 24)  # subformat GUID leads with the code
    if n_channels < 1:
        raise UnsupportedCodecError(f"{path}: channel count {n_channels}")

    if code == _WAVE_FORMAT_PCM and bits == 8:
        raw = np.frombuffer(payload, dtype=np.uint8)
        samples = (raw.astype(np.float64) - 128.0) / 128.0
    elif code == _WAVE_FORMAT_PCM and bits == 16:
        raw = np.frombuffer(payload[: len(payload) - len(payload) % 2], dtype="<i2")
        samples = raw.astype(np.float64) / 32768.0
    elif code == _WAVE_FORMAT_PCM and bits == 24:
        usable = len(payload) - len(payload) % 3
        b = np.frombuffer(payload[:usable], dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        val = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        val = np.where(val >= 1 << 23, val - (1 << 24), val)
        samples = val.astype(np.float64) / float(1 << 23)
    elif code == _WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        raw = np.frombuffer(payload[: len(payload) - len(payload) % 4], dtype="<f4")
        samples = np.clip(raw.astype(np.float64), -1.0, 1.0)
    else:
        raise UnsupportedCodecError(
            f"{path}: unsupported format (code={code}, bits={bits}); "
            "expected 8/16/24-bit PCM or 32-bit float"
        )

    if samples.size == 0:
        raise EmptyAudioError(f"{path}: zero-length audio")
    if samples.size % n_channels:
        raise TruncatedFileError(f"{path}: data does not divide into {n_channels} channels")
    if n_channels > 1:
        samples = samples.reshape(-1, n_channels).mean(axis=1)
    return AudioClip(samples, sample_rate)


def save_wav(path, samples: np.ndarray, sample_rate: int) -> None:
    """Write mono 16-bit PCM WAV (utility for fixtures and round-trips)."""
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = np.round(x * 32767.0).astype("<i2")
    body = pcm.tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(body)) + b"WAVE"
    fmt = b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, sample_rate, sample_rate * 2, 2, 16)
    with open(path, "wb") as fh:
        fh.write(header + fmt + b"data" + struct.pack("<I", len(body)) + body)


# --- alignment and framing --------------------------------------------------

def compute_alignment(n_a: int, n_vf: int) -> AlignmentParams:
    """Hop n_ah = n_a // (n_vf - 1), window n_af = 2 * n_ah (floor division)."""
    if n_vf < 2:
        raise AlignmentError(f"need at least 2 video frames, got {n_vf}")
    n_ah = n_a // (n_vf - 1)
    if n_ah < 1:
        raise AlignmentError(
            f"audio too short: {n_a} samples cannot cover {n_vf} frames (hop would be 0)"
        )
    return AlignmentParams(n_a=n_a, n_vf=n_vf, n_ah=n_ah, n_af=2 * n_ah)


def frame_signal(clip: AudioClip, params: AlignmentParams) -> np.ndarray:
    """Slice the clip into n_vf windows of length n_af, zero-padded at the end.

    Window k covers samples [k * n_ah, k * n_ah + n_af).
    """
    if params.n_a != clip.samples.size:
        raise AlignmentError(
            f"alignment computed for {params.n_a} samples, clip has {clip.samples.size}"
        )
    needed = (params.n_vf - 1) * params.n_ah + params.n_af
    padded = np.zeros(needed, dtype=np.float64)
    padded[: clip.samples.size] = clip.samples
    stride = padded.strides[0]
    windows = np.lib.stride_tricks.as_strided(
        padded,
        shape=(params.n_vf, params.n_af),
        strides=(params.n_ah * stride, stride),
    )
    return windows.copy()


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, fft_size: int, sample_rate: int) -> np.ndarray:
    """(n_mels, fft_size // 2 + 1) triangular filters, HTK mel scale, peak 1.

    Centers are uniform in mel between 0 Hz and Nyquist; each filter rises
    from the previous center and falls to the next, so at any frequency the
    filters sum to at most 1.
    """
    n_bins = fft_size // 2 + 1
    freqs = np.arange(n_bins) * (sample_rate / fft_size)
    points = _mel_to_hz(np.linspace(_hz_to_mel(0.0), _hz_to_mel(sample_rate / 2.0), n_mels + 2))
    lo, center, hi = points[:-2, None], points[1:-1, None], points[2:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        up = (freqs[None, :] - lo) / (center - lo)
        down = (hi - freqs[None, :]) / (hi - center)
    fb = np.clip(np.minimum(up, down), 0.0, 1.0)
    return np.nan_to_num(fb, nan=0.0, posinf=0.0, neginf=0.0)


def _next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


def mfcc(windows: np.ndarray, config: MfccConfig, sample_rate: int) -> MfccMatrix:
    """MFCC rows for pre-framed windows: one row per window.

    Per window: Hann window, zero-pad to the FFT size, power spectrum, mel
    filterbank energies, natural log floored at ``log_floor``, orthonormal
    DCT-II truncated to ``n_mfcc`` coefficients.
    """
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim != 2 or windows.shape[0] == 0:
        raise AudioError("windows must be a non-empty 2-D array")
    n_af = windows.shape[1]
    fft_size = _next_pow2(n_af)
    hann = np.hanning(n_af)
    spectrum = np.fft.rfft(windows * hann, n=fft_size, axis=1)
    power = np.abs(spectrum) ** 2
    fb = mel_filterbank(config.n_mels, fft_size, sample_rate)
    energies = power @ fb.T
    log_mel = np.log(np.maximum(energies, config.log_floor))
    coeffs = dct(log_mel, type=2, axis=1, norm="ortho")[:, : config.n_mfcc]
    return MfccMatrix(coeffs)


def amplitude_per_frame(clip: AudioClip, params: AlignmentParams) -> np.ndarray:
    """RMS of each aligned window (zero padding included in the mean)."""
    windows = frame_signal(clip, params)
    return np.sqrt(np.mean(windows ** 2, axis=1))


# --- persistence ------------------------------------------------------------

def save_mfcc(path, matrix: MfccMatrix) -> None:
    """Delimited text, row-major: header "n_vf n_mfcc", one row per line."""
    rows = matrix.rows
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{rows.shape[0]} {rows.shape[1]}\n")
        for row in rows:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def load_mfcc(path) -> MfccMatrix:
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().split()
        if len(first) != 2:
            raise AudioError(f"{path}: bad MFCC header")
        n_vf, n_mfcc = int(first[0]), int(first[1])
        rows = np.loadtxt(fh, dtype=np.float64, ndmin=2)
    if rows.shape != (n_vf, n_mfcc):
        raise AudioError(f"{path}: header says {(n_vf, n_mfcc)}, data is {rows.shape}")
    return MfccMatrix(rows)
