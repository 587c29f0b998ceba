"""Block-error-rate sweeps over receiver variants and mobility tiers.

Every simulated block draws its randomness from a counter-keyed stream
seeded by (seed, variant id, Eb/N0 index, block index), so results are
reproducible and independent of both the worker count and the order the
variants appear in the config.  Blocks are simulated in fixed sub-batches
(absolute block-index aligned) that workers pick up whole; the stopping
rule is evaluated only at chunk boundaries, per point:

    stop once blocks >= min_blocks and
              (errors >= target_errors or blocks >= max_blocks)

A point that never produced an error reports BLER exactly 0; any display
floor is applied at plot time only.
"""

from __future__ import annotations

import os
import zlib
from dataclasses import dataclass, field
from multiprocessing import get_context

import numpy as np

from .channel import MOBILITY_TIERS, ChannelConfig, ebno_to_noise_var
from .classical import receive_classical
from .ldpc import LdpcCode, decode_batch
from .link import GridSpec, LinkSimulator, extract_data_llrs, pilot_values
from .modulation import get_constellation
from .quantization import QuantConfig, quantize_model
from .receiver import NeuralReceiver, featurize, forward, model_from_quantized

__all__ = [
    "SweepConfig",
    "BlerPoint",
    "BlerCurve",
    "NEURAL_VARIANTS",
    "CLASSICAL_VARIANTS",
    "ALL_VARIANTS",
    "run_sweep",
    "crossing_ebno",
    "default_workers",
]

VARIANT_FLOAT32 = "neural-receiver"

# label -> (bit_width, granularity); scale mode comes from the sweep config
PTQ_VARIANTS = {
    "neural-receiver-ptq-perChannel-int8": (8, "per_channel"),
    "neural-receiver-ptq-perChannel-int4": (4, "per_channel"),
    "neural-receiver-ptq-perTensor-int8": (8, "per_tensor"),
    "neural-receiver-ptq-perTensor-int4": (4, "per_tensor"),
}
NEURAL_VARIANTS = (VARIANT_FLOAT32,) + tuple(PTQ_VARIANTS)

CLASSICAL_VARIANTS = {
    "baseline-perfect-csi": "perfect_csi",
    "baseline-ls-estimation": "ls",
}
ALL_VARIANTS = NEURAL_VARIANTS + tuple(CLASSICAL_VARIANTS)


def variant_stream_id(label: str) -> int:
    """Stable 32-bit id used in the per-block RNG key."""
    return zlib.crc32(label.encode("utf-8"))


def default_workers() -> int:
    env = os.environ.get("QRX_WORKERS", "")
    if env.strip():
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


@dataclass(frozen=True)
class SweepConfig:
    ebno_db: tuple
    mobility: str = "low"
    variants: tuple = ALL_VARIANTS
    min_blocks: int = 256
    target_errors: int = 50
    max_blocks: int = 1024
    batch_unit: int = 128
    sub_batch: int = 32
    seed: int = 0
    workers: int = 0  # 0 -> QRX_WORKERS env var, else cpu count
    scale_mode: str = "maxabs"
    grid: GridSpec = field(default_factory=GridSpec)
    constellation: str = "qpsk"
    num_taps_choices: tuple = (2, 3)
    rms_delay_spread_range: tuple = (0.0, 50e-9)
    carrier_freq: float = 3.5e9
    subcarrier_spacing: float = 30e3
    max_decoder_iters: int = 25

    def __post_init__(self):
        if not self.ebno_db:
            raise ValueError("ebno_db grid must be nonempty")
        if list(self.ebno_db) != sorted(self.ebno_db):
            raise ValueError("ebno_db grid must be ascending")
        if self.min_blocks < 1:
            raise ValueError("min_blocks must be >= 1")
        if self.min_blocks > self.max_blocks:
            raise ValueError("min_blocks must be <= max_blocks")
        if self.mobility not in MOBILITY_TIERS:
            raise ValueError(f"unknown mobility tier {self.mobility!r}")
        for v in self.variants:
            if v not in ALL_VARIANTS:
                raise ValueError(f"unknown receiver variant {v!r}")


@dataclass(frozen=True)
class BlerPoint:
    ebno_db: float
    bler: float
    blocks: int = None
    errors: int = None


@dataclass
class BlerCurve:
    variant: str
    mobility: str
    points: list


# ---------------------------------------------------------------------------
# per-process simulation context

_CTX = None


class _SweepContext:
    def __init__(self, config: SweepConfig, engines: dict):
        self.config = config
        self.engines = engines
        self.link = LinkSimulator(
            spec=config.grid,
            constellation=get_constellation(config.constellation),
            code=LdpcCode.default(),
        )
        self.pilots = pilot_values(config.grid)
        bps = self.link.constellation.bits_per_symbol
        self.noise_vars = [
            ebno_to_noise_var(e, bps, self.link.code.rate) for e in config.ebno_db
        ]
        self.velocity_range = MOBILITY_TIERS[config.mobility]
        # warm the cached encoder/edge structures before fork
        self.link.code.encode_matrix()
        self.link.code.edge_structure()


def _init_worker(ctx: _SweepContext) -> None:
    global _CTX
    _CTX = ctx


def _block_rng(seed: int, variant_id: int, ebno_idx: int, block_idx: int):
    key = np.random.SeedSequence((seed, variant_id, ebno_idx, block_idx))
    return np.random.Generator(np.random.Philox(key))


def _run_task(task: tuple) -> int:
    """Simulate blocks [start, start+count) for one (variant, point); return errors."""
    label, ebno_idx, start, count = task
    ctx = _CTX
    cfg = ctx.config
    engine_kind, engine = ctx.engines[label]
    vid = variant_stream_id(label)
    noise_var = ctx.noise_vars[ebno_idx]
    link = ctx.link
    vlo, vhi = ctx.velocity_range
    taps_choices = cfg.num_taps_choices

    messages = []
    grids = []
    for b in range(start, start + count):
        rng = _block_rng(cfg.seed, vid, ebno_idx, b)
        chan = ChannelConfig(
            num_taps=int(taps_choices[rng.integers(len(taps_choices))]),
            rms_delay_spread=float(rng.uniform(*cfg.rms_delay_spread_range)),
            ue_velocity=float(rng.uniform(vlo, vhi)),
            carrier_freq=cfg.carrier_freq,
            subcarrier_spacing=cfg.subcarrier_spacing,
        )
        tx, grid = link.sample_block(rng, chan, noise_var)
        messages.append(tx.message)
        grids.append(grid)

    n_coded = link.code.n
    if engine_kind == "neural":
        feats = np.stack([featurize(g.y, ctx.pilots) for g in grids])
        llr_grids = forward(engine, feats).data
        llrs = np.stack(
            [extract_data_llrs(llr_grids[i], cfg.grid, n_coded) for i in range(count)]
        )
    else:
        llrs = np.stack(
            [
                extract_data_llrs(
                    receive_classical(g, engine, noise_var, link.constellation),
                    cfg.grid,
                    n_coded,
                )
                for g in grids
            ]
        )
    decoded, _, _ = decode_batch(llrs, link.code, cfg.max_decoder_iters)
    msgs = np.stack(messages)
    return int((decoded != msgs).any(axis=1).sum())


def _build_engines(config: SweepConfig, model: NeuralReceiver) -> dict:
    engines = {}
    for label in config.variants:
        if label in CLASSICAL_VARIANTS:
            engines[label] = ("classical", CLASSICAL_VARIANTS[label])
            continue
        if model is None:
            raise ValueError(f"variant {label!r} needs a trained model")
        if label == VARIANT_FLOAT32:
            engines[label] = ("neural", model)
        else:
            bits, gran = PTQ_VARIANTS[label]
            qc = QuantConfig(
                bit_width=bits, granularity=gran, scale_mode=config.scale_mode
            )
            engines[label] = ("neural", model_from_quantized(quantize_model(model, qc)))
    return engines


def _point_tasks(label: str, ebno_idx: int, start: int, count: int, sub: int) -> list:
    """Sub-batch tasks aligned to absolute block indices."""
    tasks = []
    b = start
    while b < start + count:
        step = min(sub - (b % sub), start + count - b)
        tasks.append((label, ebno_idx, b, step))
        b += step
    return tasks


def run_sweep(config: SweepConfig, model: NeuralReceiver = None) -> list:
    """Simulate every (variant, Eb/N0) point; returns one curve per variant."""
    engines = _build_engines(config, model)
    ctx = _SweepContext(config, engines)
    workers = config.workers if config.workers > 0 else default_workers()

    pool = None
    if workers > 1:
        pool = get_context("fork").Pool(workers, initializer=_init_worker, initargs=(ctx,))
    else:
        _init_worker(ctx)

    def run_tasks(tasks):
        if pool is None:
            return [_run_task(t) for t in tasks]
        return pool.map(_run_task, tasks)

    try:
        curves = []
        for label in config.variants:
            points = []
            for ei, ebno in enumerate(config.ebno_db):
                blocks = 0
                errors = 0
                while True:
                    chunk = min(config.batch_unit, config.max_blocks - blocks)
                    if chunk <= 0:
                        break
                    tasks = _point_tasks(label, ei, blocks, chunk, config.sub_batch)
                    errors += sum(run_tasks(tasks))
                    blocks += chunk
                    if blocks >= config.min_blocks and (
                        errors >= config.target_errors or blocks >= config.max_blocks
                    ):
                        break
                points.append(
                    BlerPoint(
                        ebno_db=float(ebno),
                        bler=errors / blocks,
                        blocks=blocks,
                        errors=errors,
                    )
                )
            curves.append(BlerCurve(variant=label, mobility=config.mobility, points=points))
    finally:
        if pool is not None:
            pool.close()
            pool.join()
    return curves


def crossing_ebno(curve: BlerCurve, level: float = 0.1, floor: float = 1e-6):
    """Eb/N0 where the curve crosses ``level``, by log-linear interpolation.

    Returns None if the curve never reaches the level within the sweep.
    """
    pts = sorted(curve.points, key=lambda p: p.ebno_db)
    for a, b in zip(pts, pts[1:]):
        pa = max(a.bler, floor)
        pb = max(b.bler, floor)
        if pa >= level >= pb:
            if pa == pb:
                return a.ebno_db
            t = (np.log(pa) - np.log(level)) / (np.log(pa) - np.log(pb))
            return a.ebno_db + t * (b.ebno_db - a.ebno_db)
    if pts and max(p.bler for p in pts) < level:
        return pts[0].ebno_db  # already below the level at the first point
    return None
