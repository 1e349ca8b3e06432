"""Classical acoustic indices: ACI, ADI, and NDSI.

ACI sums the normalized frame-to-frame magnitude fluctuation per frequency
bin and temporal chunk. ADI is the Shannon entropy of per-band spectrogram
occupancy above a dBFS threshold. NDSI is the normalized band-power
difference (bio - anthro) / (bio + anthro) from a Welch PSD.
"""

from dataclasses import dataclass

import numpy as np
from scipy.signal import welch

from .audio_io import AudioClip
from .features import SCALE_LINEAR, Spectrogram

#: Band powers below this fraction of the total PSD power count as zero, so a
#: signal with no real energy in either NDSI band yields "undefined" instead
#: of a leakage-driven ratio. Hann-window leakage from a strong out-of-band
#: tone measures around 5e-10 of total power, hence the 1e-9 floor.
NDSI_POWER_FLOOR = 1e-9

DEFAULT_ANTHRO_BAND_HZ = (1000.0, 2000.0)
DEFAULT_BIO_BAND_HZ = (2000.0, 8000.0)

DEFAULT_ADI_BAND_WIDTH_HZ = 1000.0
DEFAULT_ADI_MAX_FREQ_HZ = 10000.0
DEFAULT_ADI_DB_THRESHOLD = -50.0


@dataclass
class IndexResult:
    """Per-recording index values; ndsi is None when both bands are empty."""

    recording_id: str
    aci: float
    adi: float
    ndsi: float | None


def aci(spec: Spectrogram, chunk_s: float | None = None) -> float:
    """Acoustic Complexity Index over non-overlapping temporal chunks.

    Per bin and chunk: sum(|a[t+1] - a[t]|) / sum(a[t]); the result is the
    sum over all bins and chunks. chunk_s=None treats the whole clip as one
    chunk. A trailing partial chunk is kept if it spans >= 2 frames.
    """
    if spec.scale != SCALE_LINEAR:
        raise ValueError(f"aci expects a {SCALE_LINEAR} spectrogram, got {spec.scale}")
    n_frames = spec.n_frames
    if n_frames < 2:
        raise ValueError(f"aci needs >= 2 frames, got {n_frames}")

    if chunk_s is None:
        chunk_len = n_frames
    else:
        chunk_len = int(round(chunk_s / spec.frame_hop_s))
        if chunk_len < 2:
            raise ValueError(f"chunk of {chunk_s} s spans fewer than 2 frames")

    total = 0.0
    for start in range(0, n_frames, chunk_len):
        chunk = spec.values[start : start + chunk_len]
        if chunk.shape[0] < 2:
            break
        num = np.abs(np.diff(chunk, axis=0)).sum(axis=0)
        den = chunk.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            terms = np.where(den > 0, num / den, 0.0)
        total += float(terms.sum())
    return total


def adi(
    spec: Spectrogram,
    band_width_hz: float = DEFAULT_ADI_BAND_WIDTH_HZ,
    max_freq_hz: float = DEFAULT_ADI_MAX_FREQ_HZ,
    db_threshold: float = DEFAULT_ADI_DB_THRESHOLD,
) -> float:
    """Acoustic Diversity Index: Shannon entropy of per-band occupancy.

    Magnitudes are referenced to the peak-bin magnitude of a full-scale
    sine under the analysis window (window_len / 4, i.e. (bins - 1) / 2),
    giving dBFS. Band i covers frequencies in (i*w, (i+1)*w]. Occupancy is
    the fraction of cells above db_threshold; occupancies are normalized to
    a distribution whose entropy is returned (0 if nothing is occupied).
    """
    if spec.scale != SCALE_LINEAR:
        raise ValueError(f"adi expects a {SCALE_LINEAR} spectrogram, got {spec.scale}")
    if max_freq_hz > spec.nyquist_hz * (1 + 1e-9):
        raise ValueError(f"max_freq {max_freq_hz} Hz exceeds Nyquist {spec.nyquist_hz} Hz")
    n_bands = round(max_freq_hz / band_width_hz)
    if n_bands < 2 or abs(n_bands * band_width_hz - max_freq_hz) > 1e-6 * max_freq_hz:
        raise ValueError(f"band width {band_width_hz} must split (0, {max_freq_hz}] into >= 2 bands")

    full_scale = (spec.n_bins - 1) / 2.0
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(spec.values / full_scale)

    occupancy = np.zeros(n_bands)
    for i in range(n_bands):
        lo, hi = i * band_width_hz, (i + 1) * band_width_hz
        mask = (spec.bin_freqs_hz > lo) & (spec.bin_freqs_hz <= hi)
        if mask.any():
            occupancy[i] = float((db[:, mask] > db_threshold).mean())

    total = occupancy.sum()
    if total == 0:
        return 0.0
    p = occupancy / total
    p = p[p > 0]
    return float(-(p * np.log(p)).sum()) + 0.0


def band_power(freqs: np.ndarray, psd: np.ndarray, band_hz) -> float:
    """Integrate a one-sided PSD over [lo, hi) with the rectangle rule."""
    lo, hi = band_hz
    df = freqs[1] - freqs[0]
    mask = (freqs >= lo) & (freqs < hi)
    return float(psd[mask].sum() * df)


def ndsi_from_powers(anthro_power: float, bio_power: float) -> float | None:
    """(bio - anthro) / (bio + anthro); None when both powers are zero."""
    total = anthro_power + bio_power
    if total <= 0:
        return None
    return (bio_power - anthro_power) / total


def ndsi(
    clip: AudioClip,
    anthro_band_hz=DEFAULT_ANTHRO_BAND_HZ,
    bio_band_hz=DEFAULT_BIO_BAND_HZ,
) -> float | None:
    """Normalized Difference Soundscape Index from a Welch PSD.

    PSD: Hann window, 1024-sample segments, 50% overlap. Band powers below
    NDSI_POWER_FLOOR of the total power are treated as zero; if both bands
    are empty the index is undefined and None is returned.
    """
    nyquist = clip.sample_rate_hz / 2.0
    for name, (lo, hi) in (("anthro", anthro_band_hz), ("bio", bio_band_hz)):
        if not 0 <= lo < hi <= nyquist:
            raise ValueError(f"{name} band [{lo}, {hi}) invalid for Nyquist {nyquist} Hz")
    a_lo, a_hi = anthro_band_hz
    b_lo, b_hi = bio_band_hz
    if max(a_lo, b_lo) < min(a_hi, b_hi):
        raise ValueError(f"bands {anthro_band_hz} and {bio_band_hz} overlap")

    freqs, psd = welch(
        clip.samples,
        fs=clip.sample_rate_hz,
        window="hann",
        nperseg=min(1024, len(clip.samples)),
        noverlap=None,  # scipy default: 50%
        detrend=False,
    )
    total = float(psd.sum() * (freqs[1] - freqs[0]))
    floor = NDSI_POWER_FLOOR * total
    a = band_power(freqs, psd, anthro_band_hz)
    b = band_power(freqs, psd, bio_band_hz)
    a = a if a >= floor else 0.0
    b = b if b >= floor else 0.0
    return ndsi_from_powers(a, b)
