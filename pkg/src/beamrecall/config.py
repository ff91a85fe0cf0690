"""Service configuration: TOML file plus environment overrides for secrets."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .errors import BadConfig
from .recall import RecallConfig

ENV_PREFIX = "BEAMRECALL"


@dataclass
class AsrSettings:
    kind: str = "fixture"  # fixture | remote
    fixture_path: str = ""
    endpoint: str = ""
    token: str = ""
    timeout_s: float = 60.0


@dataclass
class EmbeddingSettings:
    provider: str = "hash"  # hash | remote
    dim: int = 384
    endpoint: str = ""
    model: str = ""
    token: str = ""
    timeout_s: float = 30.0


@dataclass
class LlmSettings:
    kind: str = "stub"  # stub | remote
    endpoint: str = ""
    model: str = ""
    token: str = ""
    timeout_s: float = 60.0


@dataclass
class DspSettings:
    window_size: int = 512
    hop_size: int = 256
    loading_factor: float = 1e-3
    speed_of_sound: float = 343.0
    geometry: str = "uma8"
    grid_resolution_deg: float = 1.0
    min_separation_deg: float = 20.0


@dataclass
class ServiceConfig:
    listen_host: str = "127.0.0.1"
    listen_port: int = 8765
    sessions_root: str = "sessions"
    static_dir: str = ""
    api_token: str = ""
    asr: AsrSettings = field(default_factory=AsrSettings)
    embeddings: EmbeddingSettings = field(default_factory=EmbeddingSettings)
    llm: LlmSettings = field(default_factory=LlmSettings)
    dsp: DspSettings = field(default_factory=DspSettings)
    recall: RecallConfig = field(default_factory=RecallConfig)

    def validate(self):
        if self.asr.kind not in ("fixture", "remote"):
            raise BadConfig(f"asr.kind must be fixture or remote, got {self.asr.kind!r}")
        if self.asr.kind == "remote" and not self.asr.endpoint:
            raise BadConfig("asr.kind=remote requires asr.endpoint")
        if self.embeddings.provider not in ("hash", "remote"):
            raise BadConfig(
                f"embeddings.provider must be hash or remote, got {self.embeddings.provider!r}"
            )
        if self.embeddings.provider == "remote" and not self.embeddings.endpoint:
            raise BadConfig("embeddings.provider=remote requires embeddings.endpoint")
        if self.llm.kind not in ("stub", "remote"):
            raise BadConfig(f"llm.kind must be stub or remote, got {self.llm.kind!r}")
        if self.llm.kind == "remote" and not self.llm.endpoint:
            raise BadConfig("llm.kind=remote requires llm.endpoint")
        return self

    def snapshot(self) -> dict:
        """Ingest-relevant settings, hashed into the session id."""
        return {
            "asr": {"kind": self.asr.kind, "fixture_path": self.asr.fixture_path,
                    "endpoint": self.asr.endpoint},
            "embeddings": {"provider": self.embeddings.provider,
                           "dim": self.embeddings.dim,
                           "endpoint": self.embeddings.endpoint,
                           "model": self.embeddings.model},
            "dsp": {"window_size": self.dsp.window_size,
                    "hop_size": self.dsp.hop_size,
                    "loading_factor": self.dsp.loading_factor,
                    "speed_of_sound": self.dsp.speed_of_sound,
                    "geometry": self.dsp.geometry},
        }


def _apply_section(target, data: dict, section: str):
    for key, value in data.items():
        if not hasattr(target, key):
            raise BadConfig(f"unknown key {section}.{key}")
        setattr(target, key, type(getattr(target, key))(value)
                if not isinstance(getattr(target, key), str) else str(value))


def load_config(path=None) -> ServiceConfig:
    """Defaults <- TOML file <- environment (secrets only)."""
    config = ServiceConfig()
    if path is not None:
        try:
            data = tomllib.loads(Path(path).read_text())
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise BadConfig(f"cannot load config {path}: {exc}") from exc
        for key in ("listen_host", "listen_port", "sessions_root", "static_dir",
                    "api_token"):
            if key in data:
                setattr(config, key, type(getattr(config, key))(data[key]))
        if "asr" in data:
            _apply_section(config.asr, data["asr"], "asr")
        if "embeddings" in data:
            _apply_section(config.embeddings, data["embeddings"], "embeddings")
        if "llm" in data:
            _apply_section(config.llm, data["llm"], "llm")
        if "dsp" in data:
            _apply_section(config.dsp, data["dsp"], "dsp")
        if "recall" in data:
            config.recall = config.recall.with_overrides(data["recall"])

    for env_key, apply in (
        (f"{ENV_PREFIX}_ASR_TOKEN", lambda v: setattr(config.asr, "token", v)),
        (f"{ENV_PREFIX}_EMBED_TOKEN", lambda v: setattr(config.embeddings, "token", v)),
        (f"{ENV_PREFIX}_LLM_TOKEN", lambda v: setattr(config.llm, "token", v)),
        (f"{ENV_PREFIX}_API_TOKEN", lambda v: setattr(config, "api_token", v)),
    ):
        value = os.environ.get(env_key)
        if value:
            apply(value)
    return config.validate()


def build_asr_backend(config: ServiceConfig):
    from .transcribe import FixtureAsrBackend, RemoteAsrBackend

    if config.asr.kind == "fixture":
        return FixtureAsrBackend(config.asr.fixture_path)
    return RemoteAsrBackend(config.asr.endpoint, token=config.asr.token,
                            timeout_s=config.asr.timeout_s)


def build_embedding_provider(config: ServiceConfig):
    from .embeddings import HashEmbeddingProvider, RemoteEmbeddingProvider

    if config.embeddings.provider == "hash":
        return HashEmbeddingProvider(config.embeddings.dim)
    return RemoteEmbeddingProvider(
        config.embeddings.endpoint, dim=config.embeddings.dim,
        token=config.embeddings.token, model=config.embeddings.model,
        timeout_s=config.embeddings.timeout_s,
    )


def build_llm_backend(config: ServiceConfig):
    from .llm import RemoteLlmBackend, StubLlmBackend

    if config.llm.kind == "stub":
        return StubLlmBackend()
    return RemoteLlmBackend(config.llm.endpoint, model=config.llm.model,
                            token=config.llm.token, timeout_s=config.llm.timeout_s)
