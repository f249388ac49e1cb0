"""Pipeline configuration read from an INI-style ``key = value`` file."""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError
from .icp_refine import IcpConfig
from .mcl import MclConfig
from .representation import HistogramConfig
from .scan_model import Pose2, SensorModel
from .siamese_net import NetworkConfig, SgdOptions


@dataclass(frozen=True)
class SensorSection:
    rings: int = 16
    top_deg: float = 15.0
    bottom_deg: float = -15.0
    azimuth_step_deg: float = 0.5
    min_range: float = 1.0
    max_range: float = 80.0
    mount_height: float = 1.8

    def model(self) -> SensorModel:
        return SensorModel.uniform(self.rings, self.top_deg, self.bottom_deg,
                                   azimuth_step=math.radians(self.azimuth_step_deg),
                                   min_range=self.min_range, max_range=self.max_range,
                                   mount_height=self.mount_height)


@dataclass(frozen=True)
class SimulateSection:
    step: float = 5.0
    odom_sigma_trans: float = 0.05
    odom_sigma_rot: float = 0.01


@dataclass(frozen=True)
class TrainingSection:
    learning_rate: float = 3e-3
    momentum: float = 0.9
    epochs: int = 20
    batch_size: int = 32
    p_pos: float = 3.0
    p_neg: float = 4.0
    negative_ratio: float = 2.0


@dataclass(frozen=True)
class EvaluateSection:
    p: float = 3.0
    exclusion: int = 2
    loc_step: float = 1.0
    p_values: tuple = (2.0, 3.0, 5.0, 10.0)


@dataclass(frozen=True)
class MapSection:
    voxel: float = 0.2


@dataclass(frozen=True)
class IcpSection:
    enabled: bool = True
    source_voxel: float = 0.5


@dataclass(frozen=True)
class PipelineConfig:
    sensor: SensorSection = field(default_factory=SensorSection)
    histogram: HistogramConfig = field(default_factory=HistogramConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    simulate: SimulateSection = field(default_factory=SimulateSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    evaluate: EvaluateSection = field(default_factory=EvaluateSection)
    map: MapSection = field(default_factory=MapSection)
    mcl: MclConfig = field(default_factory=MclConfig)
    icp: IcpConfig = field(default_factory=IcpConfig)
    icp_stage: IcpSection = field(default_factory=IcpSection)
    tau: float = math.inf
    seed: int = 0

    def sgd(self) -> SgdOptions:
        t = self.training
        return SgdOptions(t.learning_rate, t.momentum, t.epochs, t.batch_size, self.seed)

    def with_seed(self, seed) -> "PipelineConfig":
        """Same configuration with every stochastic stage driven by ``seed``."""
        return replace(self, seed=int(seed), network=replace(self.network, seed=int(seed)),
                       mcl=replace(self.mcl, seed=int(seed)))


def _parse_list(text, conv):
    text = text.strip()
    return tuple(conv(v) for v in text.replace(",", " ").split()) if text else ()


def _parse_conv(text):
    layers = []
    for part in text.split(";"):
        if part.strip():
            vals = _parse_list(part, int)
            if len(vals) != 4:
                raise ConfigError(f"conv layer needs 'kh, kw, channels, pool', got {part.strip()!r}")
            layers.append(vals)
    return tuple(layers)


def _convert(name, raw, default):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "yes", "no", "on", "off", "1", "0"):
                raise ValueError(raw)
            return low in ("true", "yes", "on", "1")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None
    return raw


# Keys whose text needs more than a scalar conversion.
_SPECIAL = {
    ("network", "conv_layers"): _parse_conv,
    ("network", "hidden"): lambda s: _parse_list(s, int),
    ("icp", "refine_distances"): lambda s: _parse_list(s, float),
    ("evaluate", "p_values"): lambda s: _parse_list(s, float),
}


def _section(cp, name, cls, base, skip=()):
    if not cp.has_section(name):
        return base
    known = {f.name: getattr(base, f.name) for f in fields(cls) if f.name not in skip}
    values = {}
    for key, raw in cp.items(name):
        if key not in known:
            raise ConfigError(f"unknown key [{name}] {key}")
        special = _SPECIAL.get((name, key))
        try:
            values[key] = special(raw) if special else _convert(f"[{name}] {key}", raw, known[key])
        except ValueError as exc:
            raise ConfigError(f"bad value for [{name}] {key}: {exc}") from None
    try:
        return replace(base, **values)
    except (ConfigError, ValueError, TypeError) as exc:
        raise ConfigError(f"[{name}]: {exc}") from None


def parse_config(text: str) -> PipelineConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    known = {"pipeline", "sensor", "histogram", "network", "simulate", "training", "evaluate",
             "map", "mcl", "icp"}
    extra = set(cp.sections()) - known
    if extra:
        raise ConfigError(f"unknown config sections: {sorted(extra)}")
    base = PipelineConfig()
    sensor = _section(cp, "sensor", SensorSection, base.sensor)
    hist = _section(cp, "histogram", HistogramConfig, base.histogram)
    network = _section(cp, "network", NetworkConfig, base.network, skip=("input_shape", "seed"))
    icp_extra = {}
    if cp.has_section("icp"):
        for key in ("enabled", "source_voxel"):
            if cp.has_option("icp", key):
                icp_extra[key] = cp.get("icp", key)
                cp.remove_option("icp", key)
    icp = _section(cp, "icp", IcpConfig, base.icp)
    icp_stage = base.icp_stage
    if icp_extra:
        icp_stage = replace(icp_stage, **{k: _convert(f"[icp] {k}", v, getattr(icp_stage, k))
                                          for k, v in icp_extra.items()})
    pipeline = {}
    if cp.has_section("pipeline"):
        for key, raw in cp.items("pipeline"):
            if key == "tau":
                pipeline["tau"] = _convert("[pipeline] tau", raw, 0.0)
            elif key == "seed":
                pipeline["seed"] = _convert("[pipeline] seed", raw, 0)
            else:
                raise ConfigError(f"unknown key [pipeline] {key}")
    # The network input always follows the sensor rings and histogram buckets.
    try:
        network = replace(network, input_shape=(sensor.rings, hist.bucket_count))
    except ConfigError as exc:
        raise ConfigError(f"[network]: {exc}") from None
    cfg = PipelineConfig(
        sensor=sensor, histogram=hist, network=network,
        simulate=_section(cp, "simulate", SimulateSection, base.simulate),
        training=_section(cp, "training", TrainingSection, base.training),
        evaluate=_section(cp, "evaluate", EvaluateSection, base.evaluate),
        map=_section(cp, "map", MapSection, base.map),
        mcl=_section(cp, "mcl", MclConfig, base.mcl, skip=("seed",)),
        icp=icp, icp_stage=icp_stage, **pipeline)
    _validate(cfg)
    return cfg.with_seed(cfg.seed)


def _validate(cfg: PipelineConfig):
    s, t, e = cfg.sensor, cfg.training, cfg.evaluate
    if s.rings < 1 or not s.azimuth_step_deg > 0 or not 0 <= s.min_range < s.max_range:
        raise ConfigError("[sensor] needs rings >= 1, azimuth_step_deg > 0 and 0 <= min_range < max_range")
    if not cfg.simulate.step > 0:
        raise ConfigError("[simulate] step must be positive")
    if t.epochs < 0 or t.batch_size < 1 or not t.learning_rate > 0:
        raise ConfigError("[training] needs epochs >= 0, batch_size >= 1, learning_rate > 0")
    if not 0 < t.p_pos < t.p_neg:
        raise ConfigError("[training] needs 0 < p_pos < p_neg")
    if not e.p > 0 or e.exclusion < 0 or not e.loc_step > 0:
        raise ConfigError("[evaluate] needs p > 0, exclusion >= 0, loc_step > 0")
    if any(not v > 0 for v in e.p_values):
        raise ConfigError("[evaluate] p_values must be positive")
    if not cfg.tau > 0:
        raise ConfigError("[pipeline] tau must be positive")


def load_config(path=None) -> PipelineConfig:
    if path is None:
        return PipelineConfig().with_seed(0)
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config(p.read_text())


@dataclass(frozen=True)
class ManifestRow:
    scan_path: Path
    pose: Pose2
    odom: Pose2 | None = None


def read_manifest(path) -> list:
    """Rows ``scan_path x y yaw [dx dy dyaw]``; relative scan paths resolve against the manifest."""
    from .errors import DataError

    p = Path(path)
    if not p.is_file():
        raise DataError(f"manifest not found: {p}")
    rows = []
    for lineno, line in enumerate(p.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (4, 7):
            raise DataError(f"{p}:{lineno}: expected 4 or 7 fields, got {len(parts)}")
        try:
            nums = [float(v) for v in parts[1:]]
        except ValueError:
            raise DataError(f"{p}:{lineno}: non-numeric pose field") from None
        scan = Path(parts[0])
        if not scan.is_absolute():
            scan = p.parent / scan
        odom = Pose2(*nums[3:6]) if len(nums) == 6 else None
        rows.append(ManifestRow(scan, Pose2(*nums[:3]), odom))
    if not rows:
        raise DataError(f"manifest {p} lists no frames")
    return rows


def manifest_text(rows, base=None) -> str:
    out = ["# scan_path x y yaw dx dy dyaw"]
    for r in rows:
        path = Path(r.scan_path)
        if base is not None:
            try:
                path = path.relative_to(base)
            except ValueError:
                pass
        line = f"{path.as_posix()} {r.pose.x!r} {r.pose.y!r} {r.pose.yaw!r}"
        if r.odom is not None:
            line += f" {r.odom.x!r} {r.odom.y!r} {r.odom.yaw!r}"
        out.append(line)
    return "\n".join(out) + "\n"
