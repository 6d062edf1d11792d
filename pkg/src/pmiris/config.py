"""Experiment configuration and its fingerprint."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .boundary import HoughConfig
from .encoding import FilterBankConfig
from .segmentation import Segmenter

N_POLICIES = ("mean_impostor_per_subset",)

# capture-hour bounds: cumulative verification subsets (at most) and
# identification probe subsets (at least)
ROC_HORIZONS = (10.0, 24.0, 48.0, 60.0, 110.0, 160.0, 210.0, 370.0)
CMC_HORIZONS = (24.0, 48.0, 60.0, 110.0, 160.0, 210.0)


@dataclass(frozen=True)
class PipelineConfig:
    segmenter: Segmenter = field(default_factory=Segmenter)
    hough: HoughConfig = field(default_factory=HoughConfig)
    bank: FilterBankConfig = field(default_factory=FilterBankConfig)
    max_shift: int = 8
    score_norm: bool = True
    n_policy: str = "mean_impostor_per_subset"
    roc_horizons: tuple[float, ...] = ROC_HORIZONS
    cmc_horizons: tuple[float, ...] = CMC_HORIZONS
    fnmr_horizons: tuple[float, ...] = ROC_HORIZONS
    fmr_max: float = 0.01
    max_rank: int = 10
    roc_resolution: int | None = None
    output_dir: str | None = None

    def __post_init__(self):
        if self.max_shift < 0:
            raise ValueError("max_shift must be >= 0")
        if self.n_policy not in N_POLICIES:
            raise ValueError(f"unknown N policy {self.n_policy!r}")
        for name in ("roc_horizons", "cmc_horizons", "fnmr_horizons"):
            h = tuple(float(x) for x in getattr(self, name))
            if any(x < 0 for x in h) or list(h) != sorted(h):
                raise ValueError(f"{name} must be ascending and non-negative")
            object.__setattr__(self, name, h)
        if not 0 < self.fmr_max <= 1:
            raise ValueError("fmr_max must be in (0, 1]")
        if self.max_rank < 1:
            raise ValueError("max_rank must be >= 1")

    @property
    def polar_shape(self) -> tuple[int, int]:
        return self.bank.polar_height, self.bank.polar_width

    def to_dict(self) -> dict:
        d = {
            "segmenter": asdict(self.segmenter),
            "hough": self.hough.to_dict(),
            "bank": self.bank.to_dict(),
        }
        for k in ("max_shift", "score_norm", "n_policy", "fmr_max", "max_rank", "roc_resolution", "output_dir"):
            d[k] = getattr(self, k)
        for k in ("roc_horizons", "cmc_horizons", "fnmr_horizons"):
            d[k] = list(getattr(self, k))
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "segmenter" in d:
            d["segmenter"] = Segmenter.from_dict(d["segmenter"])
        if "hough" in d:
            d["hough"] = HoughConfig.from_dict(d["hough"])
        if "bank" in d:
            d["bank"] = FilterBankConfig.from_dict(d["bank"])
        return cls(**d)

    def fingerprint(self) -> str:
        """Hex digest over every field that can change a score or a report number."""
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_overrides(self, **kw) -> "PipelineConfig":
        return replace(self, **kw)


def load_config(path) -> PipelineConfig:
    with open(path, encoding="utf-8") as fh:
        return PipelineConfig.from_dict(json.load(fh))


def save_config(config: PipelineConfig, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
