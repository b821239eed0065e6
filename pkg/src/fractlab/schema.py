"""Loader and validator for the shipped JSON report schema."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

import jsonschema

from .errors import InputError


@lru_cache(maxsize=1)
def report_schema() -> dict:
    text = resources.files("fractlab").joinpath("schemas/report.schema.json").read_text("utf-8")
    return json.loads(text)


def validate_report(doc: dict) -> None:
    """Raise :class:`InputError` if ``doc`` does not match the report schema."""
    try:
        jsonschema.validate(doc, report_schema(), cls=jsonschema.Draft202012Validator)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise InputError(f"report does not match schema at '{path}': {exc.message}") from exc
