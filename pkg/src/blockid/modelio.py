"""Model-file persistence (JSON schema, version 1)."""

from __future__ import annotations

import json

import numpy as np

from .errors import ParseError, SchemaError
from .estimators import ArxModel
from .laguerre import build_network
from .models import BlockModel, LinearBlock
from .nonlin import PwlFunction
from .plantlab import _atomic_write

MODEL_SCHEMA = 1


def _pwl_to_dict(f: PwlFunction | None):
    if f is None:
        return None
    return {"breakpoints": f.breakpoints.tolist(), "values": f.values.tolist()}


def _pwl_from_dict(d):
    if d is None:
        return None
    try:
        return PwlFunction(np.array(d["breakpoints"]), np.array(d["values"]))
    except (KeyError, TypeError, ValueError) as err:
        raise SchemaError(f"bad piecewise-linear record: {err}") from err


def model_to_dict(model: BlockModel, config: dict | None = None) -> dict:
    lin = model.linear
    if lin.kind == "laguerre":
        linear = {
            "kind": "laguerre",
            "p": lin.laguerre.p,
            "psi": lin.laguerre.psi,
            "c": np.asarray(lin.laguerre.c, dtype=float).tolist(),
        }
    else:
        linear = {
            "kind": "arx",
            "na": lin.arx.na,
            "nb": lin.arx.nb,
            "delay": lin.arx.delay,
            "a": lin.arx.a.tolist(),
            "b": lin.arx.b.tolist(),
        }
    return {
        "schema": MODEL_SCHEMA,
        "structure": model.structure,
        "linear": linear,
        "input_nl": _pwl_to_dict(model.input_nl),
        "output_nl": _pwl_to_dict(model.output_nl),
        "normalized": model.normalized,
        "warnings": list(model.warnings),
        "fit_mse": model.fit_mse,
        "iterations": model.iterations,
        "config": config or {},
    }


def write_model(model: BlockModel, path, config: dict | None = None) -> None:
    _atomic_write(path, json.dumps(model_to_dict(model, config), indent=2, sort_keys=True) + "\n")


def read_model(path) -> BlockModel:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as err:
            raise ParseError(f"cannot parse model file {path}: {err}", line=err.lineno) from err
    if not isinstance(doc, dict) or doc.get("schema") != MODEL_SCHEMA:
        raise SchemaError(f"{path}: unsupported or missing model schema")
    try:
        lin = doc["linear"]
        if lin["kind"] == "laguerre":
            net = build_network(int(lin["p"]), float(lin["psi"]))
            c = np.asarray(lin["c"], dtype=float)
            if c.shape != (net.p,):
                raise SchemaError("coefficient vector length does not match order")
            net.c = c
            block = LinearBlock("laguerre", laguerre=net)
        elif lin["kind"] == "arx":
            block = LinearBlock(
                "arx",
                arx=ArxModel(
                    na=int(lin["na"]),
                    nb=int(lin["nb"]),
                    delay=int(lin["delay"]),
                    a=np.asarray(lin["a"], dtype=float),
                    b=np.asarray(lin["b"], dtype=float),
                ),
            )
        else:
            raise SchemaError(f"unknown linear kind {lin['kind']!r}")
        model = BlockModel(
            input_nl=_pwl_from_dict(doc.get("input_nl")),
            linear=block,
            output_nl=_pwl_from_dict(doc.get("output_nl")),
            structure=doc["structure"],
            normalized=bool(doc.get("normalized", False)),
            warnings=list(doc.get("warnings", [])),
            fit_mse=doc.get("fit_mse"),
            iterations=doc.get("iterations"),
        )
    except SchemaError:
        raise
    except (KeyError, TypeError, ValueError) as err:
        raise SchemaError(f"{path}: malformed model file: {err}") from err
    return model
