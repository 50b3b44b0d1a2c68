"""Bundled files: a scenario with its compiled circuit, optionally with parameters.

A bundle is plain text split into ``[scenario]``, ``[circuit]`` and
``[psdd]`` sections, each holding the corresponding module's own format.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from . import psdd as P
from . import sdd as S
from .errors import ParseError
from .logic import Scenario, parse_scenario, scenario_to_text

SECTIONS = ("scenario", "circuit", "psdd")


@dataclass
class Bundle:
    scenario: Scenario
    sdd: S.Sdd
    psdd: P.Psdd | None = None


def dumps_bundle(b: Bundle) -> str:
    parts = ["[scenario]", scenario_to_text(b.scenario).rstrip("\n"),
             "[circuit]", S.dumps(b.sdd).rstrip("\n")]
    if b.psdd is not None:
        parts += ["[psdd]", P.dumps(b.psdd).rstrip("\n")]
    return "\n".join(parts) + "\n"


def _split(text: str) -> dict:
    out: dict = {}
    cur = None
    for ln in text.splitlines():
        s = ln.strip()
        if s.startswith("[") and s.endswith("]") and s[1:-1] in SECTIONS:
            cur = s[1:-1]
            if cur in out:
                raise ParseError(f"section [{cur}] appears twice")
            out[cur] = []
        elif cur is None:
            if s and not s.startswith("#"):
                raise ParseError("bundle text must start with a [scenario] section")
        else:
            out[cur].append(ln)
    return {k: "\n".join(v) + "\n" for k, v in out.items()}


def loads_bundle(text: str, need_psdd: bool = False) -> Bundle:
    sec = _split(text)
    for k in ("scenario", "circuit"):
        if k not in sec:
            raise ParseError(f"bundle has no [{k}] section")
    scenario = parse_scenario(sec["scenario"])
    sdd = S.loads(sec["circuit"])
    if set(sdd.variables) != set(scenario.variables):
        raise ParseError("circuit variables do not match the scenario")
    p = P.loads(sec["psdd"], sdd) if "psdd" in sec else None
    if need_psdd and p is None:
        raise ParseError("file holds a circuit without parameters; run 'fit' first")
    return Bundle(scenario, sdd, p)


def save_bundle(b: Bundle, path) -> None:
    Path(path).write_text(dumps_bundle(b))


def load_bundle(path, need_psdd: bool = False) -> Bundle:
    return loads_bundle(Path(path).read_text(), need_psdd)
