"""Experiment runner: scene stream through the VoI gate onto the fading link.

Produces per-tick ledgers and threshold-sweep aggregates analogous to the
energy studies the system is designed around: a full-frame-every-tick
baseline versus gated semantic-map transmission, with optional receiver-side
regeneration statistics from the toy diffusion model. All outputs are
deterministic for a fixed config and seed.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, diffusion, toytask
from .channel import transmission_energy
from .config import (
    ExperimentConfig,
    build_fading,
    build_link_budget,
    build_scene,
    config_hash,
)
from .sampling import SemanticMap, VoISampler, resize_map
from .scene import (
    MAP_BYTES_TABULATED,
    REFERENCE_PIXELS,
    Frame,
    encode_frame,
    encode_mask,
    generate_stream,
    render_background,
)

TICK_CSV_COLUMNS = (
    "tick", "gamma_aoi", "gamma_change", "voi", "decision", "payload_bytes", "energy_j",
)
SWEEP_CSV_COLUMNS = (
    "config_hash", "kind", "gamma_th", "transmits", "total_bytes",
    "total_energy_j", "reference_energy_j",
)


@dataclass(frozen=True)
class TickRecord:
    tick: int
    gamma_aoi: float
    gamma_change: float
    voi: float
    decision: str  # prime | transmit | discard
    payload_bytes: int
    energy_j: float


@dataclass(frozen=True)
class RegenRecord:
    tick: int
    component: int
    sample_count: int
    mean_x: float
    mean_y: float


@dataclass
class RunLedger:
    """Everything one run produced, with totals fixed at construction.

    Totals are accumulated in tick order; tests recompute them the same way
    and demand bit-exact agreement. The one-time reference transmission is
    kept out of the totals and reported on its own.
    """

    kind: str
    gamma_th: float | None
    config_hash: str
    seed: int
    code_version: str
    reference_energy_j: float
    records: list[TickRecord] = field(default_factory=list)
    regen: list[RegenRecord] = field(default_factory=list)
    total_energy_j: float = 0.0
    transmit_count: int = 0
    total_bytes: int = 0

    def finalize(self) -> "RunLedger":
        total = 0.0
        count = 0
        total_bytes = 0
        for rec in self.records:
            total += rec.energy_j
            total_bytes += rec.payload_bytes
            if rec.decision != "discard":
                count += 1
        self.total_energy_j = total
        self.transmit_count = count
        self.total_bytes = total_bytes
        return self


def map_payload_bytes(m: SemanticMap, mode: str) -> int:
    """Bytes billed for one transmitted map under the configured payload mode."""
    if mode == "tabulated":
        return round(MAP_BYTES_TABULATED * m.mask.size / REFERENCE_PIXELS)
    if mode == "encoded":
        return len(encode_mask(m))
    raise ValueError(f"unknown map payload mode {mode!r}")


def reference_energy(cfg: ExperimentConfig) -> float:
    """One-time cost of shipping the static reference frame."""
    scene = build_scene(cfg)
    frame = Frame(pixels=render_background(scene), timestamp=0)
    payload = encode_frame(frame, scene.weather)
    return transmission_energy(payload * 8, build_fading(cfg), build_link_budget(cfg))


def run_baseline(cfg: ExperimentConfig) -> RunLedger:
    """Transmit the full frame every tick (conventional monitoring)."""
    scene = build_scene(cfg)
    fading = build_fading(cfg)
    budget = build_link_budget(cfg)
    ledger = RunLedger(
        kind="baseline",
        gamma_th=None,
        config_hash=config_hash(cfg),
        seed=cfg.seed,
        code_version=__version__,
        reference_energy_j=reference_energy(cfg),
    )
    for frame, _mask in generate_stream(scene):
        payload = encode_frame(frame, scene.weather)
        energy = transmission_energy(payload * 8, fading, budget)
        ledger.records.append(
            TickRecord(
                tick=frame.timestamp, gamma_aoi=0.0, gamma_change=0.0, voi=0.0,
                decision="transmit", payload_bytes=payload, energy_j=energy,
            )
        )
    return ledger.finalize()


def _mask_component(m: SemanticMap) -> int:
    """Map a mask to a toy-task component by its occupied centroid column."""
    cols = np.flatnonzero(m.mask.any(axis=0))
    if cols.size == 0:
        return 0
    centroid = m.mask.sum(axis=0)[cols] @ cols / m.pixel_count
    return int(centroid >= m.width / 2)


def run_gated(cfg: ExperimentConfig, gamma_th: float | None = None) -> RunLedger:
    """Gated semantic transmission at a threshold (config value by default).

    The first map always transmits: the gate needs a cached map before the
    change degree is computable, so the stream is primed unconditionally.
    """
    threshold = cfg.sampler.voi_threshold if gamma_th is None else gamma_th
    if threshold < 0:
        raise ValueError(f"gamma_th must be >= 0, got {threshold}")
    scene = build_scene(cfg)
    fading = build_fading(cfg)
    budget = build_link_budget(cfg)
    factor = cfg.sampler.resize_factor
    mode = cfg.sampler.map_payload
    ledger = RunLedger(
        kind="gated",
        gamma_th=threshold,
        config_hash=config_hash(cfg),
        seed=cfg.seed,
        code_version=__version__,
        reference_energy_j=reference_energy(cfg),
    )
    regen = _RegenSampler.build(cfg) if cfg.diffusion.regen_samples > 0 else None
    sampler: VoISampler | None = None
    for _frame, mask in generate_stream(scene):
        candidate = resize_map(mask, factor)
        if sampler is None:
            sampler = VoISampler(
                cached_map=candidate, threshold=threshold,
                tau_aoi=cfg.sampler.tau_aoi, tau_change=cfg.sampler.tau_change,
            )
            decision, gamma_aoi, gamma_change, score = "prime", 0.0, 0.0, 0.0
            transmitted = True
        else:
            outcome = sampler.offer(candidate)
            transmitted = outcome.transmitted
            decision = "transmit" if transmitted else "discard"
            gamma_aoi, gamma_change, score = (
                outcome.gamma_aoi, outcome.gamma_change, outcome.voi,
            )
        if transmitted:
            payload = map_payload_bytes(candidate, mode)
            energy = transmission_energy(payload * 8, fading, budget)
            if regen is not None:
                ledger.regen.append(regen.draw(candidate, cfg))
        else:
            payload, energy = 0, 0.0
        ledger.records.append(
            TickRecord(
                tick=mask.timestamp, gamma_aoi=gamma_aoi, gamma_change=gamma_change,
                voi=score, decision=decision, payload_bytes=payload, energy_j=energy,
            )
        )
    return ledger.finalize()


class _RegenSampler:
    """Receiver-side regeneration statistics (opt-in, off for energy studies)."""

    def __init__(self, denoiser: diffusion.Denoiser, sched: diffusion.VarianceSchedule):
        self.denoiser = denoiser
        self.sched = sched

    @classmethod
    def build(cls, cfg: ExperimentConfig) -> "_RegenSampler":
        d = cfg.diffusion
        sched = diffusion.linear_schedule(d.n_steps, d.beta_min, d.beta_max)
        rng = np.random.default_rng((cfg.seed, 0xD1F))
        denoiser = toytask.make_denoiser(rng, hidden=d.hidden)
        x0, ref, sem, _labels = toytask.make_dataset(d.dataset_size, rng)
        diffusion.train(
            x0, ref, sem, denoiser, sched, rng,
            epochs=d.epochs, lr=d.learning_rate, batch_size=d.batch_size,
            null_prob=d.null_prob,
        )
        return cls(denoiser, sched)

    def draw(self, m: SemanticMap, cfg: ExperimentConfig) -> RegenRecord:
        component = _mask_component(m)
        rng = np.random.default_rng((cfg.seed, m.timestamp))
        samples = diffusion.sample(
            self.denoiser, toytask.condition_for(component),
            cfg.diffusion.guidance_scale, self.sched, rng,
            count=cfg.diffusion.regen_samples,
        )
        mean = samples.mean(axis=0)
        return RegenRecord(
            tick=m.timestamp, component=component,
            sample_count=cfg.diffusion.regen_samples,
            mean_x=float(mean[0]), mean_y=float(mean[1]),
        )


def _fmt(value) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def tick_csv(ledger: RunLedger) -> str:
    """Per-tick ledger as CSV text (floats via repr, so byte-stable)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TICK_CSV_COLUMNS)
    for rec in ledger.records:
        writer.writerow([
            rec.tick, _fmt(rec.gamma_aoi), _fmt(rec.gamma_change), _fmt(rec.voi),
            rec.decision, rec.payload_bytes, _fmt(rec.energy_j),
        ])
    return buf.getvalue()


def sweep_rows(cfg: ExperimentConfig) -> tuple[list[dict], list[RunLedger]]:
    """Baseline plus one gated run per sweep threshold, as CSV-ready dicts."""
    ledgers = [run_baseline(cfg)]
    ledgers += [run_gated(cfg, g) for g in cfg.sweep.thresholds]
    rows = []
    for ledger in ledgers:
        rows.append({
            "config_hash": ledger.config_hash,
            "kind": ledger.kind,
            "gamma_th": "" if ledger.gamma_th is None else _fmt(ledger.gamma_th),
            "transmits": ledger.transmit_count,
            "total_bytes": ledger.total_bytes,
            "total_energy_j": _fmt(ledger.total_energy_j),
            "reference_energy_j": _fmt(ledger.reference_energy_j),
        })
    return rows, ledgers


def sweep_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, SWEEP_CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def sweep_svg(rows: list[dict]) -> str:
    """Self-contained line chart of total energy versus threshold."""
    gated = [(float(r["gamma_th"]), float(r["total_energy_j"]))
             for r in rows if r["kind"] == "gated"]
    baseline = next(
        (float(r["total_energy_j"]) for r in rows if r["kind"] == "baseline"), None,
    )
    width, height, margin = 640, 400, 60
    values = [e for _, e in gated] + ([baseline] if baseline is not None else [])
    gmax = max((g for g, _ in gated), default=1.0) or 1.0
    emax = max(values, default=1.0) or 1.0
    def sx(g: float) -> float:
        return margin + g / gmax * (width - 2 * margin)
    def sy(e: float) -> float:
        return height - margin - e / emax * (height - 2 * margin)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" '
        f'stroke="black"/>',
        f'<text x="{width // 2}" y="{height - 16}" text-anchor="middle" '
        f'font-size="14">VoI threshold</text>',
        f'<text x="18" y="{height // 2}" text-anchor="middle" font-size="14" '
        f'transform="rotate(-90 18 {height // 2})">total energy (J)</text>',
    ]
    if baseline is not None:
        y = sy(baseline)
        parts.append(
            f'<line x1="{margin}" y1="{y:.2f}" x2="{width - margin}" y2="{y:.2f}" '
            f'stroke="firebrick" stroke-dasharray="6 4"/>'
        )
        parts.append(
            f'<text x="{width - margin}" y="{y - 6:.2f}" text-anchor="end" '
            f'font-size="12" fill="firebrick">full-frame baseline</text>'
        )
    if gated:
        points = " ".join(f"{sx(g):.2f},{sy(e):.2f}" for g, e in gated)
        parts.append(
            f'<polyline points="{points}" fill="none" stroke="steelblue" stroke-width="2"/>'
        )
        for g, e in gated:
            parts.append(
                f'<circle cx="{sx(g):.2f}" cy="{sy(e):.2f}" r="4" fill="steelblue"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _gamma_label(gamma: float) -> str:
    return repr(float(gamma))


def write_sweep(cfg: ExperimentConfig, out_dir) -> list[Path]:
    """Run the sweep and write its CSV, chart, and per-point tick ledgers."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not out.is_dir():
        raise IOError(f"output path {out} is not a directory")
    rows, ledgers = sweep_rows(cfg)
    paths = []
    csv_path = out / "energy_vs_threshold.csv"
    csv_path.write_text(sweep_csv(rows))
    paths.append(csv_path)
    svg_path = out / "energy_vs_threshold.svg"
    svg_path.write_text(sweep_svg(rows))
    paths.append(svg_path)
    for ledger in ledgers:
        name = (
            "ticks_baseline.csv" if ledger.kind == "baseline"
            else f"ticks_gamma_{_gamma_label(ledger.gamma_th)}.csv"
        )
        tick_path = out / name
        tick_path.write_text(tick_csv(ledger))
        paths.append(tick_path)
    return paths


def write_run(ledger: RunLedger, out_dir, name: str = "ticks.csv") -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(tick_csv(ledger))
    return path


def ledger_summary(ledger: RunLedger) -> dict:
    """Aggregate view used by the CLI and the service."""
    return {
        "kind": ledger.kind,
        "gamma_th": ledger.gamma_th,
        "config_hash": ledger.config_hash,
        "seed": ledger.seed,
        "code_version": ledger.code_version,
        "ticks": len(ledger.records),
        "transmits": ledger.transmit_count,
        "total_bytes": ledger.total_bytes,
        "total_energy_j": ledger.total_energy_j,
        "reference_energy_j": ledger.reference_energy_j,
    }
