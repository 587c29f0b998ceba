"""Bundled full-scale reference BLER curves for overlay plotting.

The package ships ``data/reference_bler.csv`` with measured curves from
the full-size receiver campaign (CDL channels, 64-QAM, 128-channel
model) across three mobility tiers.  These are comparison references
only; desk-scale sweeps are not expected to match them in absolute
terms.
"""

from __future__ import annotations

from importlib import resources

from .sweep import BlerCurve, BlerPoint

__all__ = ["load_reference_curves", "parse_reference_csv", "serialize_reference_csv"]

REFERENCE_RESOURCE = "reference_bler.csv"


def parse_reference_csv(text: str) -> list:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    header = lines[0].split(",")
    if header != ["mobility", "variant", "ebno_db", "bler"]:
        raise ValueError(f"unexpected reference CSV header: {header}")
    curves: dict = {}
    for ln in lines[1:]:
        mob, var, x, y = ln.split(",")
        curves.setdefault((mob, var), []).append(BlerPoint(float(x), float(y)))
    return [
        BlerCurve(variant=var, mobility=mob, points=pts)
        for (mob, var), pts in curves.items()
    ]


def serialize_reference_csv(curves: list) -> str:
    out = ["mobility,variant,ebno_db,bler"]
    for c in curves:
        for p in c.points:
            out.append(f"{c.mobility},{c.variant},{p.ebno_db!r},{p.bler!r}")
    return "\n".join(out) + "\n"


def load_reference_curves() -> list:
    text = (
        resources.files("quantrx.data")
        .joinpath(REFERENCE_RESOURCE)
        .read_text(encoding="utf-8")
    )
    return parse_reference_csv(text)
