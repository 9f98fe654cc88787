"""Plain-text ``key = value`` configs mapped onto dataclasses."""
from __future__ import annotations

import dataclasses
import typing
from pathlib import Path


def parse_kv(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        out[key] = val
    return out


def format_kv(items: dict[str, object]) -> str:
    return "".join(f"{k} = {fmt_value(v)}\n" for k, v in items.items())


def fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ",".join(fmt_value(x) for x in v)
    return "" if v is None else str(v)


def _coerce(raw: str, tp, key: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union or str(origin) == "types.UnionType":
        inner = [a for a in args if a is not type(None)]
        if raw == "" or raw.lower() == "none":
            return None
        return _coerce(raw, inner[0], key)
    if origin is tuple:
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(p, args[0], key) for p in parts)
        if len(parts) != len(args):
            raise ValueError(f"{key}: expected {len(args)} comma-separated values, got {raw!r}")
        return tuple(_coerce(p, a, key) for p, a in zip(parts, args))
    try:
        if tp is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if tp is int:
            return int(raw, 0)
        if tp is float:
            return float(raw)
        if tp is str:
            return raw
    except ValueError:
        raise ValueError(f"{key}: cannot parse {raw!r} as {tp.__name__}") from None
    raise TypeError(f"{key}: unsupported field type {tp!r}")


def from_mapping(cls, mapping: dict[str, str], strict: bool = True):
    """Build dataclass ``cls`` from string values, converting by annotation."""
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(mapping) - names)
    if strict and unknown:
        raise ValueError(f"unknown config keys for {cls.__name__}: {', '.join(unknown)}")
    kwargs = {k: _coerce(v, hints[k], k) for k, v in mapping.items() if k in names}
    return cls(**kwargs)


def to_mapping(obj) -> dict[str, object]:
    return {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)}


def load(cls, path, strict: bool = True):
    return from_mapping(cls, parse_kv(Path(path).read_text()), strict)


def dump(obj, path) -> None:
    Path(path).write_text(format_kv(to_mapping(obj)))
