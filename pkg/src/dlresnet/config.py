"""Flat ``section.key = value`` experiment configuration.

One key per line, ``#`` starts a comment, blank lines are ignored::

    data.n = 1000
    data.noise = 0.1
    transform.variant = gaussian
    model.L = 10
    train.eta = auto

Unknown keys are rejected so typos fail loudly.  ``dumps`` writes every key
in a fixed order, which makes the echo of a config enough to rerun it.
"""

from dataclasses import dataclass, replace

__all__ = ["ExperimentConfig", "loads", "dumps", "load", "parse_value"]


def _bool(s):
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _int_list(s):
    s = str(s).strip()
    if s in ("", "none", "default"):
        return None
    return tuple(int(v) for v in s.split(","))


def _auto_float(s):
    s = str(s).strip().lower()
    return "auto" if s == "auto" else float(s)


def _auto_int(s):
    s = str(s).strip().lower()
    return "auto" if s == "auto" else int(s)


def _u64(s):
    v = int(str(s).strip(), 0)
    if not 0 <= v < 2**64:
        raise ValueError(f"seed {v} is not an unsigned 64-bit integer")
    return v


def _str(s):
    return str(s).strip()


# key -> (attribute, parser)
_KEYS = {
    "data.d": ("data_d", int),
    "data.k": ("data_k", int),
    "data.n": ("data_n", int),
    "data.noise": ("data_noise", float),
    "data.map": ("data_map", _str),
    "data.whiten": ("data_whiten", _bool),
    "data.seed": ("seed_data", _u64),
    "transform.variant": ("transform_variant", _str),
    "transform.alpha": ("transform_alpha", _auto_float),
    "transform.beta": ("transform_beta", float),
    "transform.S1": ("transform_S1", _int_list),
    "transform.S2": ("transform_S2", _int_list),
    "transform.seed": ("seed_transform", _u64),
    "model.m": ("model_m", int),
    "model.L": ("model_L", int),
    "train.algorithm": ("train_algorithm", _str),
    "train.eta": ("train_eta", _auto_float),
    "train.T": ("train_T", _auto_int),
    "train.batch": ("train_batch", int),
    "train.epsilon_rel": ("train_epsilon_rel", float),
    "train.delta": ("train_delta", float),
    "train.interpolation": ("train_interpolation", _bool),
    "train.early_stop": ("train_early_stop", _bool),
    "train.record_every": ("train_record_every", int),
    "train.init_scale": ("train_init_scale", float),
    "train.backend": ("train_backend", _str),
    "train.seed": ("seed_train", _u64),
    "checks.condition": ("check_condition", _bool),
    "checks.require_condition": ("check_require_condition", _bool),
    "checks.trajectory": ("check_trajectory", int),
    "out.prefix": ("out_prefix", _str),
    "out.format": ("out_format", _str),
}


def parse_value(key, raw):
    if key not in _KEYS:
        raise KeyError(f"unknown config key {key!r}")
    return _KEYS[key][1](raw)


@dataclass(frozen=True)
class ExperimentConfig:
    """All knobs of one run.  Defaults give the 10-dimensional noisy task."""

    data_d: int = 10
    data_k: int = 10
    data_n: int = 1000
    data_noise: float = 0.1
    data_map: str = "neg_identity"
    data_whiten: bool = False
    seed_data: int = 0
    transform_variant: str = "gaussian"
    transform_alpha: object = 1.0
    transform_beta: float = 1.0
    transform_S1: tuple = None
    transform_S2: tuple = None
    seed_transform: int = 0
    model_m: int = 200
    model_L: int = 10
    train_algorithm: str = "GD"
    train_eta: object = "auto"
    train_T: object = 500
    train_batch: int = 0
    train_epsilon_rel: float = 1e-3
    train_delta: float = 1.0 / 6.0
    train_interpolation: bool = False
    train_early_stop: bool = False
    train_record_every: int = 1
    train_init_scale: float = 1.0
    train_backend: str = "auto"
    seed_train: int = 0
    check_condition: bool = True
    check_require_condition: bool = False
    check_trajectory: int = 0
    out_prefix: str = "run"
    out_format: str = "csv"

    def __post_init__(self):
        if self.out_format not in ("csv", "json"):
            raise ValueError(f"out.format must be csv or json, got {self.out_format!r}")
        if self.train_epsilon_rel <= 0:
            raise ValueError("train.epsilon_rel must be positive")
        if self.train_record_every < 1:
            raise ValueError("train.record_every must be >= 1")
        if self.check_trajectory < 0:
            raise ValueError("checks.trajectory must be >= 0")

    def with_values(self, **kw):
        return replace(self, **kw)

    def with_keys(self, mapping):
        """Copy with dotted keys (``"model.L": 20``) replaced."""
        kw = {}
        for key, raw in mapping.items():
            attr = _KEYS[key][0] if key in _KEYS else None
            if attr is None:
                raise KeyError(f"unknown config key {key!r}")
            kw[attr] = parse_value(key, raw) if isinstance(raw, str) else raw
        return replace(self, **kw)

    def items(self):
        for key, (attr, _) in _KEYS.items():
            yield key, getattr(self, attr)


def _fmt(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(str(i) for i in v)
    return str(v)


def dumps(cfg):
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in cfg.items())


def loads(text, base=None):
    cfg = ExperimentConfig() if base is None else base
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        try:
            values[_KEYS[key][0]] = parse_value(key, raw)
        except KeyError:
            raise ValueError(f"line {lineno}: unknown key {key!r}") from None
        except ValueError as exc:
            raise ValueError(f"line {lineno}: bad value for {key}: {exc}") from None
    return replace(cfg, **values)


def load(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())

