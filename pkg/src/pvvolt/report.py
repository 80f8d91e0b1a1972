"""Table emitters for fitted models: slopes, subset weights and gamma parameters."""

from __future__ import annotations

import math

from .voltage_model import MINUS, PLUS, VoltageModel


def component_label(k: int, sign: str) -> str:
    return f"{k}{sign}"


def beta_table(models: dict) -> dict:
    """``{consumer: beta}`` in the order given."""
    return {cid: m.beta for cid, m in models.items()}


def weight_table(models: dict) -> dict:
    """``{consumer: {"1+": pi, "1-": pi, ...}}``."""
    return {cid: {component_label(c.k, c.sign): c.weight for c in m.components} for cid, m in models.items()}


def gamma_table(models: dict) -> dict:
    """``{consumer: {"1+": [shape, scale] or None, ...}}``."""
    out = {}
    for cid, m in models.items():
        out[cid] = {
            component_label(c.k, c.sign): None if c.params is None else [c.params.shape, c.params.scale]
            for c in m.components
        }
    return out


def column_sums(table: dict, decimals: int | None = None) -> dict:
    """Sum of the weights per consumer, optionally after rounding each entry.

    Rounding mimics a printed table; the sums then agree with 1 only to
    within the accumulated rounding.
    """
    out = {}
    for cid, row in table.items():
        values = row.values() if decimals is None else (round(v, decimals) for v in row.values())
        out[cid] = math.fsum(values)
    return out


def shape_sign_ordering(model: VoltageModel) -> dict:
    """Per cluster, whether ``shape+ >= shape-`` and ``scale+ <= scale-``.

    Clusters where either sign has no fit are left out.
    """
    out = {}
    ks = sorted({c.k for c in model.components})
    for k in ks:
        plus, minus = model.component(k, PLUS), model.component(k, MINUS)
        if plus.params is None or minus.params is None:
            continue
        out[str(k)] = {
            "shape_plus_ge_minus": plus.params.shape >= minus.params.shape,
            "scale_plus_le_minus": plus.params.scale <= minus.params.scale,
        }
    return out
