"""JSON serialization for fitted mixture parameters.

The wire shape is::

    {"weights": [...],
     "components": [{"mean": [...], "covariance": [[...], ...]}, ...]}

with covariances dense row-major. Values are emitted with shortest
round-trip ``repr``, which carries at least 17 significant digits, so the
stored numbers survive a parse bit-for-bit.
"""

from __future__ import annotations

import json
from pathlib import Path

from .affinity import MixtureParams
from .errors import ContractError
from .gaussmath import GaussianComponent, SpdMatrix

__all__ = [
    "params_to_dict",
    "params_from_dict",
    "dumps_params",
    "loads_params",
    "save_params",
    "load_params",
]


def params_to_dict(params: MixtureParams) -> dict:
    return {
        "weights": [float(w) for w in params.weights],
        "components": [
            {
                "mean": [float(v) for v in c.mean],
                "covariance": [[float(v) for v in row] for row in c.cov.dense()],
            }
            for c in params.components
        ],
    }


def params_from_dict(payload: dict) -> MixtureParams:
    try:
        weights = payload["weights"]
        raw_components = payload["components"]
    except (KeyError, TypeError) as exc:
        raise ContractError(f"malformed model payload: missing {exc}") from exc
    comps = tuple(
        GaussianComponent(entry["mean"],
                          SpdMatrix.from_dense(entry["covariance"]))
        for entry in raw_components
    )
    return MixtureParams(weights=weights, components=comps)


def dumps_params(params: MixtureParams) -> str:
    return json.dumps(params_to_dict(params), indent=2, sort_keys=True)


def loads_params(text: str) -> MixtureParams:
    return params_from_dict(json.loads(text))


def save_params(params: MixtureParams, path: str | Path) -> None:
    Path(path).write_text(dumps_params(params) + "\n")


def load_params(path: str | Path) -> MixtureParams:
    return loads_params(Path(path).read_text())
