"""Experiment configuration files.

YAML is read with the base loader, so every scalar arrives as a string and
rationals such as ``1/3`` or long decimals survive untouched.  Semantic
errors point at the line and column of the offending node.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

import yaml

KINDS = (
    "inverted-orbit", "recurrence", "sws-return", "tau-probe", "drift", "schreier", "complexity",
    "colored-line-decay", "oracle-crosscheck", "spectral-probe",
)
ACTION_TYPES = ("lattice", "iet", "free-product", "colored-line")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None, path: str = ""):
        self.message, self.line, self.column, self.path = message, line, column, path
        where = f"{path}:" if path else ""
        if line is not None:
            where += f"{line}:{column}: "
        elif where:
            where += " "
        super().__init__(where + message)


class Node:
    """A parsed value together with where it came from."""

    __slots__ = ("value", "line", "column")

    def __init__(self, value, line, column):
        self.value, self.line, self.column = value, line, column

    def error(self, message: str) -> ConfigError:
        return ConfigError(message, self.line, self.column)


def _convert(node: yaml.Node) -> Node:
    mark = node.start_mark
    pos = (mark.line + 1, mark.column + 1)
    if isinstance(node, yaml.ScalarNode):
        return Node(node.value, *pos)
    if isinstance(node, yaml.SequenceNode):
        return Node([_convert(n) for n in node.value], *pos)
    out: dict[str, Node] = {}
    for k, v in node.value:
        key = _convert(k)
        if not isinstance(key.value, str):
            raise key.error("mapping keys must be scalars")
        if key.value in out:
            raise key.error(f"duplicate key {key.value!r}")
        out[key.value] = _convert(v)
    return Node(out, *pos)


def plain(node: Node) -> Any:
    v = node.value
    if isinstance(v, list):
        return [plain(x) for x in v]
    if isinstance(v, dict):
        return {k: plain(x) for k, x in v.items()}
    return v


@dataclass
class ExperimentConfig:
    id: str
    kind: str
    action: Node | None
    walk: Node | None
    params: Node | None
    seed: int | None
    source: bytes
    path: str = ""
    raw: dict = field(default_factory=dict)

    # -- accessors with located errors --------------------------------------
    def section(self, name: str) -> Node:
        node = getattr(self, name)
        if node is None:
            raise ConfigError(f"experiment kind {self.kind!r} needs a '{name}' section", path=self.path)
        return node

    @property
    def canonical(self) -> dict:
        d = dict(self.raw)
        if self.seed is not None:
            d.setdefault("walk", {})
            d["walk"] = dict(d["walk"], seed=str(self.seed))
        return d

    @property
    def config_hash(self) -> str:
        text = json.dumps(self.canonical, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    @property
    def input_hash(self) -> str:
        """Git blob hash of the configuration file bytes."""
        return hashlib.sha1(b"blob %d\0" % len(self.source) + self.source).hexdigest()


def get(node: Node, key: str, required: bool = True, default=None) -> Node | None:
    if not isinstance(node.value, dict):
        raise node.error("expected a mapping")
    if key in node.value:
        return node.value[key]
    if required:
        raise node.error(f"missing key {key!r}")
    return default


def as_int(node: Node, lo: int | None = None) -> int:
    try:
        v = int(str(node.value).strip())
    except (TypeError, ValueError):
        raise node.error(f"expected an integer, got {node.value!r}") from None
    if lo is not None and v < lo:
        raise node.error(f"expected an integer >= {lo}")
    return v


def as_fraction(node: Node) -> Fraction:
    try:
        return Fraction(str(node.value).strip())
    except (TypeError, ValueError, ZeroDivisionError):
        raise node.error(f"expected a rational like 1/3, got {node.value!r}") from None


def as_float(node: Node) -> float:
    try:
        return float(str(node.value).strip())
    except (TypeError, ValueError):
        raise node.error(f"expected a number, got {node.value!r}") from None


def as_str(node: Node) -> str:
    if not isinstance(node.value, str):
        raise node.error("expected a scalar")
    return node.value


def as_list(node: Node) -> list[Node]:
    if not isinstance(node.value, list):
        raise node.error("expected a list")
    return node.value


def as_map(node: Node) -> dict[str, Node]:
    if not isinstance(node.value, dict):
        raise node.error("expected a mapping")
    return node.value


def load_config(path: str, seed: int | None = None) -> ExperimentConfig:
    with open(path, "rb") as fh:
        data = fh.read()
    return parse_config(data, path, seed)


def parse_config(data: bytes | str, path: str = "<config>", seed: int | None = None) -> ExperimentConfig:
    if isinstance(data, str):
        data = data.encode()
    try:
        root = yaml.compose(data.decode("utf-8"), Loader=yaml.BaseLoader)
    except yaml.MarkedYAMLError as e:
        m = e.problem_mark or e.context_mark
        raise ConfigError(str(e.problem or e.context), m.line + 1 if m else None,
                          m.column + 1 if m else None, path) from None
    except (yaml.YAMLError, UnicodeDecodeError) as e:
        raise ConfigError(str(e), path=path) from None
    if root is None:
        raise ConfigError("empty configuration", path=path)
    try:
        top = _convert(root)
        if not isinstance(top.value, dict):
            raise top.error("top level must be a mapping")
        allowed = {"id", "kind", "action", "walk", "params"}
        for k, v in top.value.items():
            if k not in allowed:
                raise v.error(f"unknown section {k!r}")
        kind = as_str(get(top, "kind"))
        if kind not in KINDS:
            raise get(top, "kind").error(f"unknown experiment kind {kind!r}; expected one of {', '.join(KINDS)}")
        exp_id = as_str(get(top, "id"))
        walk = get(top, "walk", required=False)
        cfg_seed = None
        if walk is not None:
            s = get(walk, "seed", required=False)
            if s is not None:
                cfg_seed = as_int(s, 0)
        cfg = ExperimentConfig(exp_id, kind, get(top, "action", required=False), walk,
                               get(top, "params", required=False), seed if seed is not None else cfg_seed,
                               data, path, plain(top))
        if cfg.action is not None:
            t = as_str(get(cfg.action, "type"))
            if t not in ACTION_TYPES:
                raise get(cfg.action, "type").error(f"unknown action type {t!r}")
        return cfg
    except ConfigError as e:
        raise ConfigError(e.message, e.line, e.column, path) from None
