"""Command-line front end.

Subcommands: ``train``, ``quantize``, ``sweep``, ``stats``, ``sizes``,
``reference``.  Structured YAML config files drive the long-running
commands, with common knobs exposed as flag overrides.  Every report
command writes a CSV and renders the matching figure next to it.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from .channel import MOBILITY_TIERS
from .link import GridSpec, LinkSimulator
from .ldpc import LdpcCode
from .modulation import get_constellation
from .quantization import QuantConfig, model_to_float16, quantize_model, weight_stats
from .receiver import ReceiverConfig, build, model_size_bytes
from .reference import load_reference_curves, serialize_reference_csv
from .report import (
    plot_bler,
    plot_loss,
    plot_sizes,
    plot_weight_histograms,
    write_bler_csv,
    write_loss_csv,
    write_sizes_csv,
    write_stats_csv,
)
from .sweep import ALL_VARIANTS, SweepConfig, run_sweep
from .training import TrainConfig, train
from .weights_io import load_model, save_model, save_quantized

__all__ = ["main"]


def _load_yaml(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a mapping at the top level")
    return data


def _grid_from_cfg(cfg: dict) -> GridSpec:
    cfg = dict(cfg or {})
    if "pilot_symbol_indices" in cfg:
        cfg["pilot_symbol_indices"] = tuple(cfg["pilot_symbol_indices"])
    return GridSpec(**cfg)


def _train_config(phase: dict, seed: int) -> TrainConfig:
    phase = dict(phase)
    if "rms_delay_spread_ns" in phase:
        lo, hi = phase.pop("rms_delay_spread_ns")
        phase["rms_delay_spread_range"] = (lo * 1e-9, hi * 1e-9)
    for key in ("snr_range_db", "velocity_tiers", "channel_taps_choices", "rms_delay_spread_range"):
        if key in phase:
            phase[key] = tuple(phase[key])
    phase.setdefault("seed", seed)
    return TrainConfig(**phase)


def _cmd_train(args) -> int:
    cfg = _load_yaml(args.config)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    rx_cfg = ReceiverConfig.from_dict(cfg.get("receiver", {}))
    grid = _grid_from_cfg(cfg.get("grid", {}))
    if grid.num_rx_antennas != rx_cfg.num_rx_antennas:
        raise ValueError("grid and receiver disagree on the antenna count")
    constellation = get_constellation(cfg.get("constellation", "qpsk"))
    if constellation.bits_per_symbol != rx_cfg.bits_per_symbol:
        raise ValueError("receiver bits_per_symbol does not match the constellation")
    link = LinkSimulator(spec=grid, constellation=constellation, code=LdpcCode.default())

    model = build(rx_cfg, seed=seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trace = []
    phases = cfg.get("phases") or [{}]
    for idx, phase in enumerate(phases):
        tcfg = _train_config(phase, seed=seed + 1000 * idx)
        if args.iterations is not None:
            tcfg = replace(tcfg, iterations=args.iterations)
        print(f"phase {idx + 1}/{len(phases)}: {tcfg.iterations} iterations", flush=True)
        part = train(model, link, tcfg, log_every=args.log_every)
        offset = trace[-1][0] + 1 if trace else 0
        trace += [(offset + it, loss, l2) for it, loss, l2 in part]

    model_path = out_dir / "model.qrxw"
    save_model(model, model_path)
    write_loss_csv(trace, out_dir / "loss.csv")
    plot_loss(trace, out_dir / "loss.png")
    print(f"saved {model_path} ({model.param_count()} parameters)")
    return 0


def _cmd_quantize(args) -> int:
    model = load_model(args.model)
    config = QuantConfig(
        bit_width=args.bits,
        signed=not args.unsigned,
        granularity=args.granularity.replace("-", "_"),
        scale_mode=args.scale_mode,
    )
    qmodel = quantize_model(model, config)
    save_quantized(qmodel, args.out)
    if qmodel.degenerate_layers:
        print(f"degenerate scales flagged in: {', '.join(qmodel.degenerate_layers)}")
    report = model_size_bytes(qmodel)
    print(
        f"wrote {args.out}: {report.label}, "
        f"{report.total_payload_bytes} payload bytes ({report.reduction:.2f}x reduction)"
    )
    return 0


def _sweep_config(cfg: dict, args) -> list:
    """One SweepConfig per requested mobility tier."""
    chan = dict(cfg.get("channel", {}))
    kwargs = {}
    if "num_taps_choices" in chan:
        kwargs["num_taps_choices"] = tuple(chan["num_taps_choices"])
    if "rms_delay_spread_ns" in chan:
        lo, hi = chan["rms_delay_spread_ns"]
        kwargs["rms_delay_spread_range"] = (lo * 1e-9, hi * 1e-9)
    for src, dst in (("carrier_freq_hz", "carrier_freq"), ("subcarrier_spacing_hz", "subcarrier_spacing")):
        if src in chan:
            kwargs[dst] = float(chan[src])
    ebno = cfg["ebno_db"]
    if isinstance(ebno, dict):
        grid_vals = np.arange(ebno["start"], ebno["stop"] + 1e-9, ebno["step"])
        ebno = [round(float(v), 6) for v in grid_vals]
    kwargs["ebno_db"] = tuple(float(v) for v in ebno)
    for key in ("min_blocks", "target_errors", "max_blocks", "batch_unit", "sub_batch", "scale_mode", "constellation"):
        if key in cfg:
            kwargs[key] = cfg[key]
    if "variants" in cfg:
        kwargs["variants"] = tuple(cfg["variants"])
    kwargs["grid"] = _grid_from_cfg(cfg.get("grid", {}))
    kwargs["seed"] = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    if args.workers is not None:
        kwargs["workers"] = args.workers
    mobilities = args.mobility or cfg.get("mobility", "low")
    if isinstance(mobilities, str):
        mobilities = [mobilities]
    return [SweepConfig(mobility=m, **kwargs) for m in mobilities]


def _cmd_sweep(args) -> int:
    cfg = _load_yaml(args.config)
    configs = _sweep_config(cfg, args)
    needs_model = any(v not in ("baseline-perfect-csi", "baseline-ls-estimation")
                      for c in configs for v in c.variants)
    model = load_model(args.model) if needs_model else None
    if needs_model and args.model is None:
        raise ValueError("sweep config includes neural variants; pass --model")

    curves = []
    for sweep_cfg in configs:
        print(
            f"sweep: {sweep_cfg.mobility} mobility, {len(sweep_cfg.variants)} variants, "
            f"{len(sweep_cfg.ebno_db)} points",
            flush=True,
        )
        curves += run_sweep(sweep_cfg, model)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_bler_csv(curves, out.with_suffix(".csv"))
    reference = load_reference_curves() if args.overlay_reference else None
    plot_bler(curves, out.with_suffix(".png"), reference=reference, title="desk-scale sweep")
    print(f"wrote {out.with_suffix('.csv')} and {out.with_suffix('.png')}")
    return 0


def _cmd_stats(args) -> int:
    model = load_model(args.model)
    stats = weight_stats(model, bins=args.bins)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_stats_csv(stats, out.parent / (out.name + "_summary.csv"), out.parent / (out.name + "_hist.csv"))
    plot_weight_histograms(stats, out.with_suffix(".png"))
    print(f"wrote {out.name}_summary.csv, {out.name}_hist.csv and {out.name}.png in {out.parent}")
    return 0


def _cmd_sizes(args) -> int:
    model = load_model(args.model)
    reports = [model_size_bytes(model)]
    reports.append(model_size_bytes(model_to_float16(model)))
    for gran in ("per_channel", "per_tensor"):
        for bits in (8, 4):
            qc = QuantConfig(bit_width=bits, granularity=gran, scale_mode=args.scale_mode)
            reports.append(model_size_bytes(quantize_model(model, qc)))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_sizes_csv(reports, out.with_suffix(".csv"))
    plot_sizes(reports, out.with_suffix(".png"))
    for r in reports:
        print(f"{r.label:>16}: {r.total_payload_bytes:>10} bytes  {r.reduction:6.2f}x")
    return 0


def _cmd_reference(args) -> int:
    curves = load_reference_curves()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out.with_suffix(".csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_reference_csv(curves))
    plot_bler(curves, out.with_suffix(".png"), title="full-scale reference")
    print(f"wrote {out.with_suffix('.csv')} and {out.with_suffix('.png')}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qrx",
        description="Neural OFDM receiver: training, weight quantization and BLER sweeps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a receiver from a YAML config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--iterations", type=int, default=None, help="override per-phase iteration count")
    p.add_argument("--log-every", type=int, default=100)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("quantize", help="post-training quantize a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--bits", type=int, choices=(4, 8, 16), default=8)
    p.add_argument("--granularity", choices=("per-tensor", "per-channel"), default="per-channel")
    p.add_argument("--scale-mode", choices=("absrange", "maxabs"), default="absrange")
    p.add_argument("--unsigned", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_quantize)

    p = sub.add_parser("sweep", help="run BLER sweeps over receiver variants")
    p.add_argument("--config", required=True)
    p.add_argument("--model", default=None)
    p.add_argument("--out", required=True, help="output prefix for .csv/.png")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--mobility", action="append", choices=sorted(MOBILITY_TIERS), default=None)
    p.add_argument("--overlay-reference", action="store_true")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("stats", help="per-layer weight statistics and histograms")
    p.add_argument("--model", required=True)
    p.add_argument("--bins", type=int, default=80)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("sizes", help="serialized-size table across quantization variants")
    p.add_argument("--model", required=True)
    p.add_argument("--scale-mode", choices=("absrange", "maxabs"), default="absrange")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sizes)

    p = sub.add_parser("reference", help="emit the bundled full-scale reference curves")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_reference)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surface a clean diagnostic, nonzero exit
        print(f"qrx {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
