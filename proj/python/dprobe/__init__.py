"""Python access to the dprobe C++ core."""

import json

from ._core import (
    Backend,
    DprobeError,
    ParameterError,
    compare as _compare,
    exact_match,
    gen_corpus,
    grid_json,
    last_digit_rule,
    leading_digit_estimate,
    load_model,
    mock_backend,
    oracle_digits,
    probe_json,
    render_prompt,
    train,
    verify_claims,
)


def probe(backend, a, b, **kwargs):
    """Runs a K-pass probe and returns the result document as a dict."""
    return json.loads(probe_json(backend, str(a), str(b), **kwargs))


def grid(backend, **kwargs):
    return json.loads(grid_json(backend, **kwargs))


def compare(grids, baselines):
    """`grids` is a dict from grid() or the JSON text written by the CLI."""
    text = grids if isinstance(grids, str) else json.dumps(grids)
    out = _compare(text, str(baselines))
    return {"csv": out["csv"], "comparison": json.loads(out["json"])}


__all__ = [
    "Backend",
    "DprobeError",
    "ParameterError",
    "compare",
    "exact_match",
    "gen_corpus",
    "grid",
    "last_digit_rule",
    "leading_digit_estimate",
    "load_model",
    "mock_backend",
    "oracle_digits",
    "probe",
    "render_prompt",
    "train",
    "verify_claims",
]
