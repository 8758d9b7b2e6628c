import configparser
import os
from dataclasses import dataclass
from pathlib import Path

from dotenv import load_dotenv

from bench import lambda_sweep_methods, parse_method
from classifier import DEFAULT_C_GRID, DEFAULT_FOLDS
from console import log
from coral import DEFAULT_LAMBDA
from data import FORMATS, ProtocolSpec, generate_shift, load_labeled, make_shift_spec
from errors import ConfigError, CoralError

# Load environment variables from .env file
load_dotenv()


REQUIRED_SECTIONS = ("protocol", "methods")
DOMAIN_PREFIX = "domain:"
SYNTH_PREFIX = "synth:"


def env_int(name, default):
    raw = os.getenv(name)
    if not raw:
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {raw!r}") from None


def default_seed():
    return env_int("CORAL_SEED", 0)


def default_jobs():
    return env_int("CORAL_JOBS", 1)


def _read(path):
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        if not parser.read(path, encoding="utf-8"):
            raise ConfigError(f"{path}: cannot read config file")
    except configparser.Error as ex:
        raise ConfigError(f"{path}: {ex}") from ex
    return parser


def _get(section, key, convert, default=None):
    raw = section.get(key)
    if raw is None or raw.strip() == "":
        if default is None:
            raise ConfigError(f"[{section.name}] {key}: missing")
        return default
    try:
        return convert(raw.strip())
    except ValueError:
        raise ConfigError(f"[{section.name}] {key}: cannot read {raw!r}") from None


def _float_list(raw):
    return tuple(float(part) for part in raw.split(",") if part.strip())


def get_missing_config_keys(parser):
    missing = [name for name in REQUIRED_SECTIONS if not parser.has_section(name)]
    if parser.has_section("methods") and not (
        parser.has_option("methods", "list") or parser.has_option("methods", "lambda_sweep")
    ):
        missing.append("methods.list")
    return missing


def shift_spec_from_section(section, seed=None):
    try:
        return make_shift_spec(
            dim=_get(section, "dim", int, 10),
            n_classes=_get(section, "classes", int, 4),
            per_class=_get(section, "per_class", int, 500),
            separation=_get(section, "separation", float, 4.0),
            noise=_get(section, "noise", float, 0.1),
            seed=seed if seed is not None else _get(section, "seed", int, default_seed()),
            map_kind=_get(section, "map", str, "random"),
            map_scale=_get(section, "map_scale", float, 1.0),
            stretch=_get(section, "stretch", float, 40.0),
            max_angle=_get(section, "max_angle", float, 0.05),
        )
    except ConfigError:
        raise
    except CoralError as ex:
        raise ConfigError(f"[{section.name}] {ex}") from ex


def load_shift_spec(path, seed=None):
    parser = _read(path)
    if not parser.has_section("shift"):
        raise ConfigError(f"{path}: missing [shift] section")
    return shift_spec_from_section(parser["shift"], seed)


@dataclass(frozen=True)
class DomainSource:
    name: str
    features: str = None
    labels: str = None
    fmt: str = None
    synth: str = None
    side: str = None


@dataclass(frozen=True)
class BenchConfig:
    domains: dict
    synth_specs: dict
    methods: tuple
    protocol: ProtocolSpec
    shifts: tuple
    output_path: str
    output_format: str

    def resolve_domains(self):
        """Load or synthesize every domain, in config order."""
        resolved, generated = {}, {}
        for name, source in self.domains.items():
            if source.synth is not None:
                if source.synth not in self.synth_specs:
                    raise ConfigError(f"domain {name}: unknown synth spec {source.synth!r}")
                if source.synth not in generated:
                    generated[source.synth] = generate_shift(self.synth_specs[source.synth])
                resolved[name] = generated[source.synth][0 if source.side == "source" else 1]
            else:
                try:
                    resolved[name] = load_labeled(source.features, source.labels, source.fmt)
                except CoralError as ex:
                    raise ConfigError(f"domain {name}: {ex}") from ex
        return resolved


def _domain_source(section, name, base):
    synth = section.get("synth")
    if synth:
        side = section.get("side", "source").strip()
        if side not in ("source", "target"):
            raise ConfigError(f"[{section.name}] side: expected 'source' or 'target', got {side!r}")
        return DomainSource(name=name, synth=synth.strip(), side=side)

    for key in ("features", "labels"):
        if not section.get(key):
            raise ConfigError(f"[{section.name}] {key}: missing (or give synth = NAME)")
    fmt = section.get("format")
    if fmt is not None and fmt not in FORMATS:
        raise ConfigError(f"[{section.name}] format: expected one of {FORMATS}, got {fmt!r}")
    return DomainSource(
        name=name,
        features=str(base / section["features"].strip()),
        labels=str(base / section["labels"].strip()),
        fmt=fmt,
    )


def _parse_shifts(raw):
    pairs = []
    for item in raw.split(","):
        if not item.strip():
            continue
        parts = [p.strip() for p in item.split("->")]
        if len(parts) != 2 or not all(parts):
            raise ConfigError(f"[shifts] list: cannot read shift {item.strip()!r}, expected SOURCE->TARGET")
        pairs.append(tuple(parts))
    return tuple(pairs)


def build_bench_config(path, seed=None):
    parser = _read(path)
    missing = get_missing_config_keys(parser)
    if missing:
        raise ConfigError(f"Missing required config keys: {', '.join(missing)}")
    base = Path(path).resolve().parent

    domains, synth_specs, per_domain = {}, {}, {}
    for section_name in parser.sections():
        section = parser[section_name]
        if section_name.startswith(DOMAIN_PREFIX):
            name = section_name[len(DOMAIN_PREFIX):].strip()
            domains[name] = _domain_source(section, name, base)
            if section.get("per_class"):
                per_domain[name] = _get(section, "per_class", int)
        elif section_name.startswith(SYNTH_PREFIX):
            synth_specs[section_name[len(SYNTH_PREFIX):].strip()] = shift_spec_from_section(section)

    proto = parser["protocol"]
    # --seed beats the config file, which beats CORAL_SEED
    if seed is None:
        seed = _get(proto, "seed", int, default_seed())
    try:
        protocol = ProtocolSpec(
            mode=_get(proto, "mode", str, "subsampled"),
            per_class=_get(proto, "per_class", int, 20),
            trials=_get(proto, "trials", int, 20),
            seed=seed,
            lam=_get(proto, "lambda", float, DEFAULT_LAMBDA),
            c_grid=_get(proto, "c_grid", _float_list, DEFAULT_C_GRID),
            folds=_get(proto, "folds", int, DEFAULT_FOLDS),
            per_domain=per_domain,
        )
    except ConfigError:
        raise
    except CoralError as ex:
        raise ConfigError(f"[protocol] {ex}") from ex

    methods_section = parser["methods"]
    methods = [parse_method(m) for m in methods_section.get("list", "").split(",") if m.strip()]
    methods += lambda_sweep_methods(_get(methods_section, "lambda_sweep", _float_list, ()))
    if not methods:
        raise ConfigError("[methods] list: no methods given")
    # de-duplicate while keeping config order
    methods = tuple(dict.fromkeys(methods))

    shifts = None
    if parser.has_option("shifts", "list"):
        shifts = _parse_shifts(parser.get("shifts", "list"))

    output_path = parser.get("output", "path", fallback="").strip()
    fmt = parser.get("output", "format", fallback="csv").strip()
    if fmt not in ("csv", "markdown"):
        raise ConfigError(f"[output] format: expected 'csv' or 'markdown', got {fmt!r}")
    log(f"[config] {len(domains)} domains, {len(methods)} methods, {protocol.trials} trials, "
        f"seed {protocol.seed}")
    return BenchConfig(
        domains=domains,
        synth_specs=synth_specs,
        methods=methods,
        protocol=protocol,
        shifts=shifts,
        output_path=str(base / output_path) if output_path else None,
        output_format=fmt,
    )
