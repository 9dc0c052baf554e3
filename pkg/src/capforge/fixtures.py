"""Access to the data files shipped with the package."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from .errors import ParseError


def data_path(*parts: str) -> Path:
    return Path(str(resources.files("capforge").joinpath("data", *parts)))


def load_json(*parts: str) -> object:
    path = data_path(*parts)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ParseError("no such shipped fixture", path="/".join(parts)) from None


def default_catalogue():
    from .catalogue import load_catalogue

    return load_catalogue(data_path("catalogue.json"))


def mlp_document(name: str) -> dict:
    """A shipped MLP by bare name (``iptables_example``) or a path to a JSON file."""
    candidate = Path(name)
    if candidate.suffix == ".json" and candidate.exists():
        try:
            return json.loads(candidate.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, path=str(candidate), line=exc.lineno, column=exc.colno) from None
    return load_json("mlp", f"{name}.json")
