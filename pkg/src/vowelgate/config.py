"""Pipeline configuration: one JSON document governs every stage.

Defaults follow the published analysis conditions (8 kHz, 0.98 pre-emphasis,
200/100-sample framing), fusion weights 0.3/0.5/0.2 and 80/170 mixtures for
the vowel/non-vowel models. ``gmm.mixture_scale`` shrinks the mixture counts
for small corpora; ``configs/synthetic.json`` uses 0.1 (8/17).
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

from .corpus import CorpusConfig
from .dsp import DspConfig
from .fusion import DetectorConfig, FusionWeights


class ConfigError(ValueError):
    pass


@dataclass
class GmmSection:
    vowel_components: int = 80
    nonvowel_components: int = 170
    mixture_scale: float = 1.0
    soft_context: int = 1
    max_iter: int = 200
    tol: float = 1e-6
    var_floor: float = 1e-4
    kmeans_iter: int = 10

    def scaled(self, count: int) -> int:
        return max(1, int(round(count * self.mixture_scale)))


@dataclass
class SvmSection:
    C_grid: list = field(default_factory=lambda: [0.1, 1.0, 10.0, 100.0])
    sigma_grid: list = field(default_factory=lambda: [0.5, 1.0, 2.0, 4.0])
    folds: int = 5
    tol: float = 1e-3
    pool_size: int = 3000
    compare_ungated: bool = True


@dataclass
class GatingSection:
    target_ambiguous_fraction: float = 0.25
    epsilon: float | None = None
    prior_vowel: float | None = None


@dataclass
class RecognizerSection:
    components: int = 4
    min_segments: int = 10
    soft_context: int = 1
    pairwise_refinement: bool = False


@dataclass
class PipelineConfig:
    dsp: DspConfig = field(default_factory=DspConfig)
    gmm: GmmSection = field(default_factory=GmmSection)
    svm: SvmSection = field(default_factory=SvmSection)
    gating: GatingSection = field(default_factory=GatingSection)
    fusion: FusionWeights = field(default_factory=FusionWeights)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    recognizer: RecognizerSection = field(default_factory=RecognizerSection)
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    seed: int = 0
    train_fraction: float = 0.8

    def validate(self) -> "PipelineConfig":
        self.dsp.validate()
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if not 0 < self.gating.target_ambiguous_fraction <= 1:
            raise ConfigError("gating.target_ambiguous_fraction must lie in (0, 1]")
        if self.gating.epsilon is not None and self.gating.epsilon < 0:
            raise ConfigError("gating.epsilon must be >= 0")
        if self.gating.prior_vowel is not None and not 0 < self.gating.prior_vowel < 1:
            raise ConfigError("gating.prior_vowel must lie in (0, 1)")
        if self.gmm.mixture_scale <= 0 or self.gmm.soft_context < 0:
            raise ConfigError("gmm.mixture_scale must be > 0 and soft_context >= 0")
        if not self.svm.C_grid or not self.svm.sigma_grid:
            raise ConfigError("svm grids must be non-empty")
        if any(c <= 0 for c in self.svm.C_grid) or any(s <= 0 for s in self.svm.sigma_grid):
            raise ConfigError("svm grid values must be positive")
        if self.svm.folds < 2:
            raise ConfigError("svm.folds must be >= 2")
        return self

    def to_dict(self) -> dict:
        out = asdict(self)
        out["corpus"] = self.corpus.to_dict()
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        sections = {
            "dsp": DspConfig, "gmm": GmmSection, "svm": SvmSection, "gating": GatingSection,
            "fusion": FusionWeights, "detector": DetectorConfig, "recognizer": RecognizerSection,
        }
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        try:
            for name, value in doc.items():
                if name in sections:
                    allowed = {f.name for f in fields(sections[name])}
                    bad = set(value) - allowed
                    if bad:
                        raise ConfigError(f"unknown keys in [{name}]: {sorted(bad)}")
                    kwargs[name] = sections[name](**value)
                elif name == "corpus":
                    kwargs[name] = CorpusConfig.from_dict(value)
                else:
                    kwargs[name] = value
            return cls(**kwargs).validate()
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid config: {exc}") from exc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps() + "\n")

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(doc)

    def dsp_hash(self) -> str:
        blob = json.dumps(asdict(self.dsp), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def config_hash(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()[:16]
