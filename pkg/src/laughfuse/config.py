"""Run configuration: one JSON document covering every pipeline stage."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .audio import MfccConfig
from .fusion import FusionConfig
from .laughnet import ModelConfig, TrainConfig
from .vision.cascade import toy_cascade_path
from .vision.detect import DetectionParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    mfcc: MfccConfig = field(default_factory=MfccConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    detection: DetectionParams = field(default_factory=DetectionParams)
    cascade_path: str | None = None  # None: bundled toy cascade
    roi: tuple | None = None
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    threshold: float = 0.5

    def resolved_cascade_path(self):
        return Path(self.cascade_path) if self.cascade_path else toy_cascade_path()

    def to_dict(self):
        det = self.detection.to_dict()
        det["cascade_path"] = self.cascade_path
        det["roi"] = list(self.roi) if self.roi else None
        return {
            "mfcc": self.mfcc.to_dict(),
            "fusion": self.fusion.to_dict(),
            "detection": det,
            "model": self.model.to_dict(),
            "train": self.train.to_dict(),
            "threshold": self.threshold,
        }

    @classmethod
    def from_dict(cls, d, base_dir="."):
        known = {"mfcc", "fusion", "detection", "model", "train", "threshold"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
        try:
            det = dict(d.get("detection", {}))
            cascade = det.pop("cascade_path", None)
            roi = det.pop("roi", None)
            if cascade and not Path(cascade).is_absolute():
                cascade = str(Path(base_dir) / cascade)
            return cls(
                mfcc=MfccConfig.from_dict(d.get("mfcc", {})),
                fusion=FusionConfig.from_dict(d.get("fusion", {})),
                detection=DetectionParams.from_dict(det),
                cascade_path=cascade,
                roi=tuple(roi) if roi else None,
                model=ModelConfig.from_dict(d.get("model", {})),
                train=TrainConfig.from_dict(d.get("train", {})),
                threshold=float(d.get("threshold", 0.5)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from None


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return RunConfig.from_dict(doc, path.parent)


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
