"""Experiment configuration: pydantic models, YAML loading, stable hashing.

All physical quantities carry their unit in the key name; dB-valued inputs
are converted to linear scale only when the domain objects are built, so the
file format stays human-readable.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .channel import FadingParams, LinkBudget, db_to_linear, dbm_per_hz_to_w_per_hz
from .scene import WEATHER_KINDS, ObjectSpec, SceneConfig, default_objects
from . import toytask


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ObjectSection(_Section):
    row: float
    col: float
    vel_row: float = 0.0
    vel_col: float = 0.0
    height: int = Field(default=8, ge=1)
    width: int = Field(default=8, ge=1)


class SceneSection(_Section):
    width: int = Field(default=128, ge=1)
    height: int = Field(default=96, ge=1)
    num_objects: int = Field(default=3, ge=0)
    objects: list[ObjectSection] | None = None
    weather: str = "clear"
    seed: int = Field(default=7, ge=0)
    duration: int = Field(default=500, ge=0)

    @field_validator("weather")
    @classmethod
    def _known_weather(cls, value: str) -> str:
        if value not in WEATHER_KINDS:
            raise ValueError(f"weather must be one of {WEATHER_KINDS}")
        return value


class SamplerSection(_Section):
    voi_threshold: float = Field(default=0.2, ge=0.0)
    tau_aoi: float = Field(default=0.0, ge=0.0)
    tau_change: float = Field(default=1.0, ge=0.0)
    resize_factor: int = Field(default=1, ge=1)
    # "tabulated" bills each transmitted map at the measured compressed size
    # (scaled by pixel count); "encoded" bills the actual run-length payload.
    map_payload: str = "tabulated"

    @field_validator("map_payload")
    @classmethod
    def _known_mode(cls, value: str) -> str:
        if value not in ("tabulated", "encoded"):
            raise ValueError("map_payload must be 'tabulated' or 'encoded'")
        return value


class ChannelSection(_Section):
    m: float = Field(default=6.0, gt=1.0)
    m_s: float = Field(default=6.0, gt=1.0)
    bandwidth_hz: float = Field(default=1e6, gt=0.0)
    snr_threshold_db: float = 15.0
    noise_psd_dbm_per_hz: float = -90.0
    distance_m: float = Field(default=100.0, gt=0.0)


class DiffusionSection(_Section):
    n_steps: int = Field(default=toytask.TOY_SCHEDULE_STEPS, ge=1)
    beta_min: float = Field(default=toytask.TOY_BETA_MIN, gt=0.0, lt=1.0)
    beta_max: float = Field(default=toytask.TOY_BETA_MAX, gt=0.0, lt=1.0)
    guidance_scale: float = Field(default=1.0, ge=0.0)
    hidden: int = Field(default=toytask.TOY_HIDDEN, ge=1)
    epochs: int = Field(default=toytask.TOY_EPOCHS, ge=1)
    learning_rate: float = Field(default=toytask.TOY_LEARNING_RATE, gt=0.0)
    dataset_size: int = Field(default=toytask.TOY_DATASET_SIZE, ge=2)
    batch_size: int = Field(default=toytask.TOY_BATCH_SIZE, ge=1)
    null_prob: float = Field(default=toytask.TOY_NULL_PROB, ge=0.0, lt=1.0)
    # Receiver-side regeneration draws per transmitted map during runs;
    # 0 keeps energy studies free of any training cost.
    regen_samples: int = Field(default=0, ge=0)


class SweepSection(_Section):
    thresholds: list[float] = Field(default_factory=lambda: [0.0, 0.1, 0.2, 0.4, 0.8])

    @field_validator("thresholds")
    @classmethod
    def _sorted_nonempty(cls, value: list[float]) -> list[float]:
        if not value:
            raise ValueError("sweep thresholds must be non-empty")
        if any(t < 0 for t in value):
            raise ValueError("sweep thresholds must be >= 0")
        if sorted(value) != value:
            raise ValueError("sweep thresholds must be sorted ascending")
        return value


class ExperimentConfig(_Section):
    scene: SceneSection = Field(default_factory=SceneSection)
    sampler: SamplerSection = Field(default_factory=SamplerSection)
    channel: ChannelSection = Field(default_factory=ChannelSection)
    diffusion: DiffusionSection = Field(default_factory=DiffusionSection)
    sweep: SweepSection = Field(default_factory=SweepSection)
    seed: int = Field(default=12345, ge=0)
    output_dir: str = "out"


def load_config(path) -> ExperimentConfig:
    """Parse a YAML config file; missing sections take defaults."""
    text = Path(path).read_text()
    data = yaml.safe_load(text)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ValueError(f"config root must be a mapping, got {type(data).__name__}")
    return ExperimentConfig.model_validate(data)


def config_hash(cfg: ExperimentConfig) -> str:
    """Stable short digest of the experiment, stamped into every output row.

    The output directory is excluded: where results land does not change
    what was run.
    """
    payload = cfg.model_dump_json(exclude={"output_dir"})
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def build_scene(cfg: ExperimentConfig) -> SceneConfig:
    """Materialize the scene, deriving object kinematics from the seed if none given."""
    scene = cfg.scene
    if scene.objects is not None:
        objects = tuple(
            ObjectSpec(
                row=o.row, col=o.col, vel_row=o.vel_row, vel_col=o.vel_col,
                height=o.height, width=o.width,
            )
            for o in scene.objects
        )
    else:
        objects = default_objects(scene.num_objects, scene.width, scene.height, scene.seed)
    return SceneConfig(
        width=scene.width,
        height=scene.height,
        objects=objects,
        weather=scene.weather,
        seed=scene.seed,
        duration=scene.duration,
    )


def build_fading(cfg: ExperimentConfig) -> FadingParams:
    """Fading shapes with the mean gain implied by the link distance."""
    return FadingParams(
        m=cfg.channel.m,
        m_s=cfg.channel.m_s,
        avg_gain=build_link_budget(cfg).avg_gain,
    )


def build_link_budget(cfg: ExperimentConfig) -> LinkBudget:
    """Link constants with dB inputs converted to linear scale."""
    ch = cfg.channel
    return LinkBudget(
        bandwidth_hz=ch.bandwidth_hz,
        snr_threshold=db_to_linear(ch.snr_threshold_db),
        noise_psd_w_per_hz=dbm_per_hz_to_w_per_hz(ch.noise_psd_dbm_per_hz),
        distance_m=ch.distance_m,
    )
