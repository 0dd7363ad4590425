"""The R0 + per-biopsy fusion protocol: session files, orchestration, reports.

A session JSON file looks like::

    {
      "reference": "r0.bvol",
      "bbox": [x0, x1, y0, y1, z0, z1],
      "registration": {"metric": "ncc", "bins": 32, "levels": 3},
      "biopsies": [
        {"index": 1, "volume": "biopsy_01.bvol", "left_lobe": false,
         "trajectory": {"entry": [..], "tip": [..], "core_length": 18.0,
                        "planned_target": "R-BL"},
         "fiducials": [{"id": "c0", "fixed": [..], "moving": [..]}]}
      ]
    }

Relative paths resolve against the session file's directory. Trajectories
and fiducial ``moving`` points are in the biopsy volume's own frame;
fiducial ``fixed`` points are in R0.
"""
from __future__ import annotations

import csv
import io as _io
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .biopsy_map import (
    ALL_LABELS,
    Box,
    MetricsReport,
    NeedleTrajectory,
    build_target_grid,
    evaluate_session,
    map_trajectory,
)
from .exceptions import BiopsyFusionError, ConfigError, MissingTransform
from .geometry import LEFT_LOBE_TURN, compose, invert
from .io import read_json, read_volume, result_from_dict, result_to_dict, transform_to_list, write_json, write_volume
from .phantom import PhantomConfig, generate, perturb, random_rigid
from .registration import RegistrationConfig, RegistrationResult, register_iconic
from .similarity import SimilarityKind
from .validation import FiducialPair, fiducial_error

logger = logging.getLogger(__name__)

__all__ = [
    "BiopsyRecord",
    "FusionSession",
    "SessionOutcome",
    "registration_config_from_dict",
    "load_session",
    "run_session",
    "emit_report",
    "report_csv",
    "save_results",
    "load_results",
    "simulate_session",
]

CSV_HEADER = ("target", "n_toward", "n_inside", "pct_inside", "mean_len_inside_mm", "pct_len_inside")


@dataclass
class BiopsyRecord:
    index: int
    volume: str
    trajectory: NeedleTrajectory
    left_lobe: bool = False
    fiducials: list = field(default_factory=list)
    result: RegistrationResult | None = None
    error: str | None = None

    def reference_trajectory(self) -> NeedleTrajectory:
        """The trajectory carried into R0 by the inverse of the fused transform."""
        if self.result is None or not self.result.succeeded:
            raise MissingTransform(f"biopsy {self.index} has no successful registration")
        return map_trajectory(self.trajectory, invert(self.result.transform))


@dataclass
class FusionSession:
    reference: str
    records: list
    bbox: Box
    config: RegistrationConfig = field(default_factory=RegistrationConfig)
    base_dir: str = "."

    def __post_init__(self):
        indices = [r.index for r in self.records]
        if len(set(indices)) != len(indices):
            raise ConfigError("biopsy indices must be unique")
        ref = self._resolve(self.reference)
        if any(self._resolve(r.volume) == ref for r in self.records):
            raise ConfigError("the reference volume cannot also be a biopsy volume")

    def _resolve(self, p: str) -> Path:
        return (Path(self.base_dir) / p).resolve()

    def path(self, p: str) -> str:
        return str(self._resolve(p))


@dataclass
class SessionOutcome:
    session: FusionSession
    report: MetricsReport

    @property
    def n_succeeded(self) -> int:
        return sum(1 for r in self.session.records if r.result is not None and r.result.succeeded)

    @property
    def success_rate(self) -> float:
        n = len(self.session.records)
        return self.n_succeeded / n if n else 0.0

    @property
    def mean_registration_time(self) -> float:
        times = [r.result.elapsed for r in self.session.records if r.result is not None]
        return float(np.mean(times)) if times else math.nan

    def fiducial_errors(self) -> list[float]:
        out = []
        for r in self.session.records:
            if r.fiducials and r.result is not None and r.result.succeeded:
                out.extend(fiducial_error(r.fiducials, r.result.transform).per_pair)
        return out

    @property
    def exit_status(self) -> int:
        return 0 if self.n_succeeded >= 1 else 1


_CONFIG_KEYS = {
    "levels": "pyramid_levels",
    "pyramid_levels": "pyramid_levels",
    "max_iterations": "max_iterations",
    "tolerance": "tolerance",
    "initial_step": "initial_step",
    "success_threshold": "success_threshold",
    "min_overlap": "min_overlap",
    "max_samples": "max_samples",
    "smoothing": "smoothing",
}


def registration_config_from_dict(d: dict | None) -> RegistrationConfig:
    d = dict(d or {})
    kwargs = {_CONFIG_KEYS[k]: v for k, v in d.items() if k in _CONFIG_KEYS}
    unknown = set(d) - set(_CONFIG_KEYS) - {"metric", "bins"}
    if unknown:
        raise ConfigError(f"unknown registration settings: {sorted(unknown)}")
    kwargs["metric"] = SimilarityKind(d.get("metric", "ncc"), int(d.get("bins", 32)))
    return RegistrationConfig(**kwargs)


def registration_config_to_dict(cfg: RegistrationConfig) -> dict:
    return {
        "metric": cfg.metric.name,
        "bins": cfg.metric.bins,
        "levels": cfg.pyramid_levels,
        "max_iterations": cfg.max_iterations,
        "tolerance": cfg.tolerance,
        "initial_step": cfg.initial_step,
        "success_threshold": cfg.success_threshold,
        "min_overlap": cfg.min_overlap,
        "max_samples": cfg.max_samples,
        "smoothing": cfg.smoothing,
    }


def _fiducials_from(entries) -> list[FiducialPair]:
    return [FiducialPair(e["fixed"], e["moving"], str(e.get("id", i))) for i, e in enumerate(entries or [])]


def load_session(path, overrides: dict | None = None) -> FusionSession:
    path = Path(path)
    d = read_json(path)
    reg = dict(d.get("registration") or {})
    reg.update(overrides or {})
    records = []
    for b in d["biopsies"]:
        traj = NeedleTrajectory.from_dict(b["trajectory"])
        if not traj.volume_id:
            traj = replace(traj, volume_id=str(b["index"]))
        records.append(BiopsyRecord(
            index=int(b["index"]),
            volume=b["volume"],
            trajectory=traj,
            left_lobe=bool(b.get("left_lobe", False)),
            fiducials=_fiducials_from(b.get("fiducials")),
        ))
    return FusionSession(
        reference=d["reference"],
        records=records,
        bbox=Box.from_extents(d["bbox"]),
        config=registration_config_from_dict(reg),
        base_dir=str(path.parent),
    )


_REFERENCE_CACHE: dict = {}


def _register_file(task):
    """Worker entry point: ``(reference_path, volume_path, config)`` -> (result, error)."""
    ref_path, vol_path, cfg = task
    try:
        fixed = _REFERENCE_CACHE.get(ref_path)
        if fixed is None:
            _REFERENCE_CACHE.clear()
            fixed = _REFERENCE_CACHE[ref_path] = read_volume(ref_path)
        moving = read_volume(vol_path)
        return register_iconic(fixed, moving, cfg), None
    except (BiopsyFusionError, OSError, ValueError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def run_session(session: FusionSession, jobs: int | None = None) -> SessionOutcome:
    """Fuse every biopsy volume into R0, map its trajectory and score the session.

    Registrations are independent and may run in a process pool; results
    are gathered in record order so the outcome does not depend on ``jobs``.
    File and registration errors are recorded on the biopsy, never raised.
    """
    jobs = jobs or os.cpu_count() or 1
    ref = session.path(session.reference)
    read_volume(ref)  # fail early on an unusable reference
    tasks = [
        (ref, session.path(r.volume), replace(session.config, left_lobe_mode=r.left_lobe))
        for r in session.records
    ]
    if jobs == 1 or len(tasks) <= 1:
        outputs = [_register_file(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(_register_file, tasks))
    for record, (result, error) in zip(session.records, outputs):
        record.result, record.error = result, error
        if error:
            logger.warning("biopsy %d excluded: %s", record.index, error)
        elif not result.succeeded:
            logger.warning("biopsy %d: fusion failed (ncc=%.3f)", record.index, result.final_ncc)
    report = evaluate_session(session, build_target_grid(session.bbox))
    return SessionOutcome(session, report)


def report_csv(report: MetricsReport) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    if report.n_included:
        w.writerows(report.table())
    return buf.getvalue()


def summary_text(report: MetricsReport, outcome: SessionOutcome | None = None) -> str:
    lines = [
        f"biopsies included: {report.n_included}, excluded: {report.excluded}",
        f"targets hit: {report.total.n_inside}/{report.total.n_toward}"
        f" ({report.total.pct_inside:.1f}%)",
    ]
    if outcome is not None:
        n = len(outcome.session.records)
        lines.append(f"fusion success: {outcome.n_succeeded}/{n} ({100 * outcome.success_rate:.1f}%)")
        lines.append(f"mean registration time: {outcome.mean_registration_time:.2f} s")
        fre = outcome.fiducial_errors()
        if fre:
            lines.append(f"fiducial error: mean {np.mean(fre):.2f} mm, max {np.max(fre):.2f} mm"
                         f" ({len(fre)} pairs)")
        for r in outcome.session.records:
            if r.error:
                lines.append(f"excluded biopsy {r.index}: {r.error}")
            elif r.result is not None and not r.result.succeeded:
                lines.append(f"excluded biopsy {r.index}: fusion failed (ncc {r.result.final_ncc:.3f})")
    return "\n".join(lines) + "\n"


def emit_report(report: MetricsReport, path, outcome: SessionOutcome | None = None,
                summary_path=None) -> str:
    """Write the CSV report and return (optionally also write) the text summary."""
    Path(path).write_text(report_csv(report))
    text = summary_text(report, outcome)
    if summary_path is not None:
        Path(summary_path).write_text(text)
    return text


def save_results(outcome: SessionOutcome, path) -> None:
    s = outcome.session
    records = []
    for r in s.records:
        mapped = None
        if r.result is not None and r.result.succeeded:
            mapped = r.reference_trajectory().to_dict()
        records.append({
            "index": r.index,
            "volume": s.path(r.volume),
            "left_lobe": r.left_lobe,
            "trajectory": r.trajectory.to_dict(),
            "fiducials": [
                {"id": f.id, "fixed": f.point_in_fixed.tolist(), "moving": f.point_in_moving.tolist()}
                for f in r.fiducials
            ],
            "result": None if r.result is None else result_to_dict(r.result),
            "error": r.error,
            "reference_trajectory": mapped,
        })
    write_json({
        "reference": s.path(s.reference),
        "bbox": s.bbox.extents(),
        "registration": registration_config_to_dict(s.config),
        "biopsies": records,
    }, path)


def load_results(path) -> SessionOutcome:
    """Rebuild a session outcome from :func:`save_results` output without re-registering."""
    d = read_json(path)
    records = []
    for b in d["biopsies"]:
        records.append(BiopsyRecord(
            index=int(b["index"]),
            volume=b["volume"],
            trajectory=NeedleTrajectory.from_dict(b["trajectory"]),
            left_lobe=bool(b.get("left_lobe", False)),
            fiducials=_fiducials_from(b.get("fiducials")),
            result=None if b.get("result") is None else result_from_dict(b["result"]),
            error=b.get("error"),
        ))
    session = FusionSession(
        reference=d["reference"],
        records=records,
        bbox=Box.from_extents(d["bbox"]),
        config=registration_config_from_dict(d.get("registration")),
    )
    return SessionOutcome(session, evaluate_session(session, build_target_grid(session.bbox)))


# Probe tip sits posterior to and below the gland; needles fan out from it.
_PROBE_OFFSET = np.array([0.0, -8.0, 8.0])


def plan_needle(bbox: Box, label, rng: np.random.Generator, core_length: float = 18.0,
                aim_error_mm: float = 3.0):
    """Needle ``(entry, tip)`` in R0 aimed at the centre of ``label``'s cell with Gaussian aim error."""
    grid = build_target_grid(bbox)
    target = grid.cell(label).center + rng.normal(0.0, aim_error_mm, 3)
    entry = np.array([bbox.center[0], bbox.lo[1], bbox.lo[2]]) + _PROBE_OFFSET
    d = target - entry
    d /= np.linalg.norm(d)
    tip = target + d * core_length / 2.0
    return entry, tip


def simulate_session(out_dir, n_biopsies: int = 12, seed: int = 0, max_rotation: float = 10.0,
                     max_translation: float = 8.0, phantom: PhantomConfig | None = None,
                     core_length: float = 18.0, aim_error_mm: float = 3.0) -> Path:
    """Write an R0 phantom, ``n_biopsies`` re-acquisitions with needles in place,
    ``session.json`` and ``truth.json`` into ``out_dir``.

    Biopsies cycle through the 12 targets; left-lobe biopsies carry the
    180 degree probe turn in their ground-truth motion.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = replace(phantom or PhantomConfig(), seed=seed, needle=None)
    r0, truth = generate(base)
    write_volume(r0, out / "r0.bvol")
    bbox = Box(*truth.bbox)
    rng = np.random.default_rng([seed, 1])
    biopsies = []
    truths = []
    for i in range(n_biopsies):
        label = ALL_LABELS[i % len(ALL_LABELS)]
        left = label.side.value == "L"
        entry, tip = plan_needle(bbox, label, rng, core_length, aim_error_mm)
        cfg = replace(base, needle=(entry, tip))
        while True:
            t = random_rigid(rng, max_rotation, max_translation)
            if left:
                t = compose(t, LEFT_LOBE_TURN)
            try:
                vol, tr = perturb(cfg, truth, t, new_seed=seed * 1000 + i + 1)
                break
            except ConfigError:
                continue
        name = f"biopsy_{i + 1:02d}.bvol"
        write_volume(vol, out / name)
        m_entry, m_tip = tr.needle
        biopsies.append({
            "index": i + 1,
            "volume": name,
            "left_lobe": left,
            "trajectory": NeedleTrajectory(m_entry, m_tip, core_length, str(i + 1), label).to_dict(),
            "fiducials": [
                {"id": f"calc{k}", "fixed": f.tolist(), "moving": m.tolist()}
                for k, (f, m) in enumerate(zip(truth.reference_calcifications, tr.calcifications))
            ],
        })
        truths.append({"index": i + 1, "transform": transform_to_list(t), "truth": tr.to_dict()})
    write_json({
        "reference": "r0.bvol",
        "bbox": bbox.extents(),
        "registration": {"metric": "ncc", "bins": 32, "levels": 3},
        "biopsies": biopsies,
    }, out / "session.json")
    phantom_dict = asdict(base)
    write_json({"phantom": phantom_dict, "reference": truth.to_dict(), "biopsies": truths}, out / "truth.json")
    return out / "session.json"
