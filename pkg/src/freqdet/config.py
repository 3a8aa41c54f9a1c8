"""Flat ``section.key = value`` configuration files.

Blank lines and ``#`` comments are ignored. Every key must name a field of
the section's dataclass; unknown sections or keys are errors.
"""
from __future__ import annotations

import dataclasses
from pathlib import Path

from .errors import ConfigError

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _scalar(text: str, like, where: str):
    try:
        if isinstance(like, bool):
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if isinstance(like, int):
            return int(text)
        if isinstance(like, float):
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    return text


def parse_value(text: str, like, where: str = "value"):
    """Coerce ``text`` to the type of the default ``like``; tuples are comma separated."""
    text = text.strip()
    if isinstance(like, tuple):
        body = text.strip("[]()")
        items = [t.strip() for t in body.split(",") if t.strip()]
        elem = like[0] if like else ""
        return tuple(_scalar(t, elem, where) for t in items)
    return _scalar(text, like, where)


def parse_text(text: str, source: str = "<config>") -> dict[str, dict[str, str]]:
    out: dict[str, dict[str, str]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key.count(".") != 1:
            raise ConfigError(f"{source}:{lineno}: key {key!r} must look like section.key")
        section, name = key.split(".")
        if name in out.setdefault(section, {}):
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[section][name] = value
    return out


def build_section(cls, values: dict[str, str], section: str):
    """Instantiate dataclass ``cls`` from string values; defaults fill the rest."""
    defaults = cls()
    known = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in section '{section}': {', '.join(section + '.' + k for k in unknown)}")
    kwargs = {k: parse_value(v, getattr(defaults, k), f"{section}.{k}") for k, v in values.items()}
    return cls(**kwargs)


def load_config(path, sections: dict[str, type]) -> dict[str, object]:
    """Read ``path`` and build one dataclass per entry of ``sections``."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(text, sections, str(path))


def parse_config(text: str, sections: dict[str, type], source: str = "<config>") -> dict[str, object]:
    raw = parse_text(text, source)
    unknown = sorted(set(raw) - set(sections))
    if unknown:
        raise ConfigError(f"{source}: unknown section(s) {unknown}")
    return {name: build_section(cls, raw.get(name, {}), name) for name, cls in sections.items()}


def dump_config(objs: dict[str, object]) -> str:
    lines = []
    for section, obj in objs.items():
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            if isinstance(v, tuple):
                v = ", ".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{section}.{f.name} = {v}")
    return "\n".join(lines) + "\n"
