"""Run configuration: one JSON file drives every command.

Every embedded policy is validated on load, so schema mistakes surface
before any audio is touched. ``RunConfig()`` gives the documented defaults.
"""

import json
from dataclasses import dataclass, field

from .decision import PdaPolicy, ThresholdPolicy
from .errors import ConfigError
from .indices import (
    DEFAULT_ADI_BAND_WIDTH_HZ,
    DEFAULT_ADI_DB_THRESHOLD,
    DEFAULT_ADI_MAX_FREQ_HZ,
    DEFAULT_ANTHRO_BAND_HZ,
    DEFAULT_BIO_BAND_HZ,
)
from .evaluation import DEFAULT_BOOTSTRAP_RESAMPLES, DEFAULT_CONFIDENCE
from .labels import CLASSES
from .scores import WindowSpec
from .synthmix import DEFAULT_COUNT_PMFS, TARGET_RATE_HZ


@dataclass
class IndexParams:
    stft_window: int = 1024
    stft_hop: int = 320
    target_rate_hz: int = TARGET_RATE_HZ
    aci_chunk_s: float | None = None
    adi_band_width_hz: float = DEFAULT_ADI_BAND_WIDTH_HZ
    adi_max_freq_hz: float = DEFAULT_ADI_MAX_FREQ_HZ
    adi_db_threshold: float = DEFAULT_ADI_DB_THRESHOLD
    ndsi_anthro_hz: tuple = DEFAULT_ANTHRO_BAND_HZ
    ndsi_bio_hz: tuple = DEFAULT_BIO_BAND_HZ

    def to_dict(self) -> dict:
        return {
            "stft_window": self.stft_window,
            "stft_hop": self.stft_hop,
            "target_rate_hz": self.target_rate_hz,
            "aci_chunk_s": self.aci_chunk_s,
            "adi_band_width_hz": self.adi_band_width_hz,
            "adi_max_freq_hz": self.adi_max_freq_hz,
            "adi_db_threshold": self.adi_db_threshold,
            "ndsi_anthro_hz": list(self.ndsi_anthro_hz),
            "ndsi_bio_hz": list(self.ndsi_bio_hz),
        }


@dataclass
class RunConfig:
    seed: int = 0
    recording_duration_s: float = 60.0
    window: WindowSpec = field(default_factory=lambda: WindowSpec(10.0, 10.0))
    threshold_mode: str = "global"
    thresholds: ThresholdPolicy = field(default_factory=lambda: ThresholdPolicy.global_threshold(0.5))
    pda: PdaPolicy = field(default_factory=PdaPolicy)
    indices: IndexParams = field(default_factory=IndexParams)
    mixer_count_pmfs: dict = field(default_factory=lambda: {k: dict(v) for k, v in DEFAULT_COUNT_PMFS.items()})
    mixer_normalization: str = "peak"
    bootstrap_resamples: int = DEFAULT_BOOTSTRAP_RESAMPLES
    bootstrap_confidence: float = DEFAULT_CONFIDENCE

    def to_dict(self) -> dict:
        thresholds: dict = {"mode": self.threshold_mode}
        if self.threshold_mode == "global":
            thresholds["global"] = self.thresholds.thresholds[CLASSES[0]]
        else:
            thresholds["per_class"] = dict(self.thresholds.thresholds)
        if self.thresholds.counts is not None:
            thresholds["counts"] = dict(self.thresholds.counts)
        return {
            "seed": self.seed,
            "recording_duration_s": self.recording_duration_s,
            "window": {"window_len_s": self.window.window_len_s, "step_s": self.window.step_s},
            "thresholds": thresholds,
            "pda": {c: self.pda.fractions.get(c) for c in CLASSES},
            "pda_measure": self.pda.measure,
            "indices": self.indices.to_dict(),
            "mixer": {
                "count_pmfs": {str(k): {str(n): p for n, p in v.items()} for k, v in self.mixer_count_pmfs.items()},
                "normalization": self.mixer_normalization,
            },
            "bootstrap": {"resamples": self.bootstrap_resamples, "confidence": self.bootstrap_confidence},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        try:
            cfg = cls()
            if "seed" in data:
                cfg.seed = int(data["seed"])
            if "recording_duration_s" in data:
                cfg.recording_duration_s = float(data["recording_duration_s"])
                if cfg.recording_duration_s <= 0:
                    raise ValueError("recording_duration_s must be positive")
            if "window" in data:
                cfg.window = WindowSpec(
                    window_len_s=float(data["window"]["window_len_s"]),
                    step_s=float(data["window"]["step_s"]),
                )
            if "thresholds" in data:
                cfg.threshold_mode, cfg.thresholds = parse_threshold_policy(data["thresholds"])
            if "pda" in data or "pda_measure" in data:
                fractions = {
                    c: (None if v is None else float(v)) for c, v in data.get("pda", {}).items()
                }
                cfg.pda = PdaPolicy(fractions=fractions, measure=data.get("pda_measure", "sum"))
            if "indices" in data:
                idx = data["indices"]
                params = IndexParams()
                for name in (
                    "stft_window",
                    "stft_hop",
                    "target_rate_hz",
                    "aci_chunk_s",
                    "adi_band_width_hz",
                    "adi_max_freq_hz",
                    "adi_db_threshold",
                ):
                    if name in idx:
                        setattr(params, name, idx[name])
                if "ndsi_anthro_hz" in idx:
                    params.ndsi_anthro_hz = tuple(idx["ndsi_anthro_hz"])
                if "ndsi_bio_hz" in idx:
                    params.ndsi_bio_hz = tuple(idx["ndsi_bio_hz"])
                cfg.indices = params
            if "mixer" in data:
                if "count_pmfs" in data["mixer"]:
                    cfg.mixer_count_pmfs = {
                        int(k): {int(n): float(p) for n, p in v.items()}
                        for k, v in data["mixer"]["count_pmfs"].items()
                    }
                cfg.mixer_normalization = data["mixer"].get("normalization", cfg.mixer_normalization)
                if cfg.mixer_normalization not in ("peak", "rms"):
                    raise ValueError(f"unknown mixer normalization {cfg.mixer_normalization!r}")
            if "bootstrap" in data:
                cfg.bootstrap_resamples = int(data["bootstrap"].get("resamples", cfg.bootstrap_resamples))
                cfg.bootstrap_confidence = float(data["bootstrap"].get("confidence", cfg.bootstrap_confidence))
            return cfg
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(data)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def parse_threshold_policy(data: dict):
    """Parse the thresholds section (also emitted standalone by the tune command)."""
    try:
        mode = data["mode"]
        counts = data.get("counts")
        if counts is not None:
            counts = {c: int(v) for c, v in counts.items()}
        if mode == "global":
            policy = ThresholdPolicy.global_threshold(float(data["global"]), counts=counts)
        elif mode == "per-class":
            policy = ThresholdPolicy(
                thresholds={c: float(v) for c, v in data["per_class"].items()}, counts=counts
            )
        else:
            raise ValueError(f"unknown threshold mode {mode!r}")
        return mode, policy
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid threshold policy: {exc}") from exc


def load_threshold_fragment(path):
    """Read a thresholds-only JSON fragment, as written by the tune command."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if "thresholds" not in data:
        raise ConfigError(f"{path}: missing 'thresholds' section")
    return parse_threshold_policy(data["thresholds"])


def dump_threshold_fragment(mode: str, policy: ThresholdPolicy, path) -> None:
    fragment: dict = {"mode": mode}
    if mode == "global":
        fragment["global"] = policy.thresholds[CLASSES[0]]
    else:
        fragment["per_class"] = dict(policy.thresholds)
    if policy.counts is not None:
        fragment["counts"] = dict(policy.counts)
    with open(path, "w") as fh:
        json.dump({"thresholds": fragment}, fh, indent=2, sort_keys=True)
        fh.write("\n")
