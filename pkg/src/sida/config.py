"""Experiment configuration files.

A config is plain ``key = value`` lines under ``[data]``, ``[train]``,
``[surrogate]`` and ``[run]`` headers. Every key is optional; missing keys
take the defaults from :data:`SCHEMA`. Unknown sections or keys are errors.
"""

import configparser
import dataclasses
from dataclasses import dataclass, field
from typing import Callable

from .data import SyntheticSpec
from .surrogate import SurrogateConfig
from .trainer import TrainConfig

PUBLISHED = "published setting"
CHOSEN = "chosen here"


class ConfigError(ValueError):
    """Malformed or unknown configuration entry."""


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text):
    return tuple(int(t) for t in text.split(",") if t.strip())


def _floats(text):
    vals = [float(t) for t in text.split(",") if t.strip()]
    return vals[0] if len(vals) == 1 else vals


def _optional_float(text):
    return None if text.strip().lower() in ("", "none") else float(text)


def _optional_str(text):
    text = text.strip()
    return None if text.lower() in ("", "none") else text


def _show(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    return "none" if value is None else str(value)


@dataclass(frozen=True)
class Key:
    section: str
    name: str
    parse: Callable
    default: object
    provenance: str
    help: str


_T = TrainConfig()
_S = SurrogateConfig()
_D = SyntheticSpec()

SCHEMA = [
    Key("data", "family", str, _D.family, CHOSEN, "two-moons | gaussian-blobs | files"),
    Key("data", "n", int, _D.n, CHOSEN, "samples per domain"),
    Key("data", "shift", _floats, _D.shift, CHOSEN, "rotation in degrees (moons) or translation (blobs)"),
    Key("data", "noise", float, _D.noise, CHOSEN, "noise standard deviation"),
    Key("data", "n_classes", int, _D.n_classes, CHOSEN, "classes (blobs only)"),
    Key("data", "separation", float, _D.separation, CHOSEN, "blob mean spacing in units of noise"),
    Key("data", "source", _optional_str, None, CHOSEN, "source feature CSV (family = files)"),
    Key("data", "target", _optional_str, None, CHOSEN, "target feature CSV (family = files)"),
    Key("train", "alpha1", float, _T.alpha1, CHOSEN, "weight of the MI loss"),
    Key("train", "alpha2", float, _T.alpha2, PUBLISHED, "weight of the auxiliary loss"),
    Key("train", "epochs", int, _T.epochs, CHOSEN, "training epochs"),
    Key("train", "batch_size", int, _T.batch_size, CHOSEN, "source samples per step"),
    Key("train", "lr_encoder", float, _T.lr_encoder, CHOSEN, "initial encoder learning rate"),
    Key("train", "lr_classifier", float, _T.lr_classifier, CHOSEN, "initial classifier learning rate (10x encoder)"),
    Key("train", "lr_a", float, _T.lr_a, PUBLISHED, "schedule eta0 / (1 + a p)^b: a"),
    Key("train", "lr_b", float, _T.lr_b, PUBLISHED, "schedule eta0 / (1 + a p)^b: b"),
    Key("train", "momentum", float, _T.momentum, PUBLISHED, "SGD momentum"),
    Key("train", "weight_decay", float, _T.weight_decay, PUBLISHED, "SGD weight decay"),
    Key("train", "widths", _ints, _T.widths, CHOSEN, "encoder layer widths; the last is the feature size"),
    Key("train", "activation", str, _T.activation, CHOSEN, "tanh | relu | linear"),
    Key("train", "m1", float, _T.m1, CHOSEN, "lower clamp of the pair distance (when m1_factor = 0)"),
    Key("train", "m1_factor", float, _T.m1_factor, CHOSEN, "lower clamp relative to the median distance; 0 = use m1"),
    Key("train", "m2", _optional_float, _T.m2, CHOSEN, "upper clamp; none = m2_factor * median distance"),
    Key("train", "m2_factor", float, _T.m2_factor, CHOSEN, "upper clamp relative to the median distance"),
    Key("train", "score_sign", int, _T.score_sign, CHOSEN, "-1 scores near pairs high, +1 far pairs"),
    Key("train", "eps_norm", float, _T.eps_norm, CHOSEN, "distance smoothing"),
    Key("train", "mi_enabled", _bool, _T.mi_enabled, CHOSEN, "use the MI term"),
    Key("train", "sd_enabled", _bool, _T.sd_enabled, CHOSEN, "use the refined surrogate and auxiliary loss"),
    Key("train", "exact_target_limit", int, _T.exact_target_limit, CHOSEN, "use every target row per step up to this size"),
    Key("train", "target_batch", int, _T.target_batch, CHOSEN, "target draws per class per step otherwise"),
    Key("train", "check_invariants", _bool, _T.check_invariants, CHOSEN, "assert surrogate invariants at runtime"),
    Key("surrogate", "K", int, _S.K, PUBLISHED, "neighbours in the k-NN graph"),
    Key("surrogate", "T", int, _S.T, PUBLISHED, "projected update steps per epoch"),
    Key("surrogate", "eta1", float, _S.eta1, PUBLISHED, "Laplacian step size"),
    Key("surrogate", "eta2", float, _S.eta2, PUBLISHED, "MI step size"),
    Key("surrogate", "theta_percentile", float, _S.theta_percentile, CHOSEN, "distance filter percentile; 100 = off"),
    Key("surrogate", "kmeans_iters", int, _S.kmeans_iters, CHOSEN, "K-means iterations from the source centroids"),
    Key("surrogate", "adjacency", str, _S.adjacency, CHOSEN, "binary | gaussian"),
    Key("run", "seeds", _ints, (0, 1, 2, 3, 4), CHOSEN, "comma-separated seeds"),
    Key("run", "task", str, "two-moons", CHOSEN, "label written to the summary"),
]

SECTIONS = ("data", "train", "surrogate", "run")
_BY_NAME = {(k.section, k.name): k for k in SCHEMA}


@dataclass
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    data: SyntheticSpec = field(default_factory=SyntheticSpec)
    source_path: str = None
    target_path: str = None
    seeds: tuple = (0, 1, 2, 3, 4)
    task: str = "two-moons"

    @property
    def from_files(self):
        return self.source_path is not None


def parse_config(text, origin="<config>"):
    """Parse config text into a :class:`RunConfig`."""
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text, source=origin)
    except configparser.Error as e:
        raise ConfigError(f"{origin}: {e}".replace("\n", " ")) from None
    values = {}
    for section in cp.sections():
        if section not in SECTIONS:
            raise ConfigError(f"{origin}: unknown section [{section}]")
        for name, raw in cp.items(section):
            key = _BY_NAME.get((section, name))
            if key is None:
                raise ConfigError(f"{origin}: unknown key {name!r} in [{section}]")
            try:
                values[(section, name)] = key.parse(raw)
            except ValueError as e:
                raise ConfigError(f"{origin}: [{section}] {name}: {e}") from None
    return build(values)


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    return parse_config(text, str(path))


def build(values):
    """RunConfig from ``{(section, key): value}``; absent keys use defaults."""
    def get(section, name):
        return values.get((section, name), _BY_NAME[(section, name)].default)

    def section_kwargs(section):
        return {k.name: get(section, k.name) for k in SCHEMA if k.section == section}

    d = section_kwargs("data")
    family = d.pop("family")
    source, target = d.pop("source"), d.pop("target")
    if family == "files":
        if not source or not target:
            raise ConfigError("family = files needs both source and target paths")
        family = SyntheticSpec.family
    elif source or target:
        raise ConfigError("source/target paths need family = files")
    seeds = get("run", "seeds")
    if not seeds:
        raise ConfigError("at least one seed is required")
    try:
        sc = SurrogateConfig(**section_kwargs("surrogate"))
        tc = TrainConfig(surrogate_config=sc, seed=seeds[0], **section_kwargs("train"))
        spec = SyntheticSpec(family=family, seed=seeds[0], **d)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None
    return RunConfig(tc, spec, source, target, tuple(seeds), get("run", "task"))


def with_seed(cfg, seed):
    """Copy of ``cfg`` whose data and model seeds are ``seed``."""
    return dataclasses.replace(
        cfg,
        train=cfg.train.replace(seed=seed),
        data=dataclasses.replace(cfg.data, seed=seed),
    )


def describe_schema():
    """One line per key: ``[section] key = default  (provenance) help``."""
    lines = []
    for k in SCHEMA:
        lines.append(f"  [{k.section}] {k.name} = {_show(k.default)}  ({k.provenance}) {k.help}")
    return "\n".join(lines)


def render_defaults():
    """A complete config file with every key at its default."""
    out = []
    for section in SECTIONS:
        out.append(f"[{section}]")
        for k in SCHEMA:
            if k.section == section:
                out.append(f"# {k.help} ({k.provenance})")
                out.append(f"{k.name} = {_show(k.default)}")
        out.append("")
    return "\n".join(out)
