"""Pipeline configuration: one JSON file, overridable by CLI flags."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ConfigError


@dataclass
class ExtractionSettings:
    strategy: str = "rules"
    cache_path: str = "extraction_cache.jsonl"
    base_url: str | None = None
    model: str | None = None
    api_key_env: str = "EXTRACTION_API_KEY"
    timeout: float = 60.0
    max_concurrent: int = 4
    prompt_path: str | None = None


@dataclass
class VocabularySettings:
    min_count: int = 150
    synonym_map_path: str | None = None
    allowlist_path: str | None = None


@dataclass
class CropSettings:
    score_threshold: float = 0.5
    ratios: tuple[float, float, float] = (0.70, 0.15, 0.15)
    seed: int = 0
    oversample_factor: int = 10


@dataclass
class LossSettings:
    alpha: float = 0.5
    epsilon: float = 1e-8
    clamp: float = 1e-7


@dataclass
class ServiceSettings:
    host: str = "127.0.0.1"
    port: int = 8100
    cors_origin: str = "*"
    raters: list[dict] = field(default_factory=list)


@dataclass
class PipelineConfig:
    extraction: ExtractionSettings = field(default_factory=ExtractionSettings)
    vocabulary: VocabularySettings = field(default_factory=VocabularySettings)
    crops: CropSettings = field(default_factory=CropSettings)
    loss: LossSettings = field(default_factory=LossSettings)
    service: ServiceSettings = field(default_factory=ServiceSettings)

    def validate(self) -> None:
        if self.extraction.strategy not in ("rules", "remote", "remote-then-rules"):
            raise ConfigError(f"unknown extraction strategy {self.extraction.strategy!r}")
        if not 0.0 <= self.crops.score_threshold <= 1.0:
            raise ConfigError("score_threshold must be in [0, 1]")
        if not 0.0 <= self.loss.alpha <= 1.0:
            raise ConfigError("loss alpha must be in [0, 1]")
        if self.loss.epsilon <= 0:
            raise ConfigError("loss epsilon must be positive")
        if self.crops.oversample_factor < 1:
            raise ConfigError("oversample factor must be >= 1")
        for path_value in (
            self.vocabulary.synonym_map_path,
            self.vocabulary.allowlist_path,
            self.extraction.prompt_path,
        ):
            if path_value is not None and not Path(path_value).exists():
                raise ConfigError(f"configured path does not exist: {path_value}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {
            "extraction": ExtractionSettings,
            "vocabulary": VocabularySettings,
            "crops": CropSettings,
            "loss": LossSettings,
            "service": ServiceSettings,
        }
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        kwargs = {}
        for section, section_cls in known.items():
            if section in data:
                try:
                    value = section_cls(**data[section])
                except TypeError as exc:
                    raise ConfigError(f"bad {section} section: {exc}") from exc
                if section == "crops" and "ratios" in data[section]:
                    value.ratios = tuple(data[section]["ratios"])
                kwargs[section] = value
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        config = cls.from_dict(data)
        config.validate()
        return config
