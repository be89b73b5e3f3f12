"""NMSE-vs-SNR sweep harness.

A sweep walks a grid of (scenario, SNR) cells. Each cell draws
samples_per_cell fresh channels and noise vectors from seeds derived off
the sweep seed, every estimator consumes the same draws (paired
comparison), and the aggregate NMSE per estimator lands in one report
row. Reports export to CSV and JSON with a config fingerprint so plots
can be traced back to the exact run.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .channel import ArrayConfig, ScenarioSpec, sample_channel, sample_channels
from .classical import MmseFilter, fit_mmse
from .model import TrainedModel, images_to_vecs, model_forward, vecs_to_images
from .observation import snr_to_noise_var
from .seeding import make_rng, mix_seed


def nmse(h_true: np.ndarray, h_est: np.ndarray) -> float:
    """Aggregate NMSE over a set of channel vectors.

    Ratio of sums, sum_i ||h_i - h_hat_i||^2 / sum_i ||h_i||^2, so samples
    with more energy weigh more and the value is stable when ||h_i||
    varies. Real and imaginary parts both contribute through the moduli.
    """
    h_true = np.atleast_2d(np.asarray(h_true))
    h_est = np.atleast_2d(np.asarray(h_est))
    if h_true.shape != h_est.shape:
        raise ValueError(f"shape mismatch: {h_true.shape} vs {h_est.shape}")
    denom = float(np.sum(np.abs(h_true) ** 2))
    if denom == 0.0:
        raise ValueError("all-zero reference channels; NMSE is undefined")
    num = float(np.sum(np.abs(h_est - h_true) ** 2))
    return num / denom


class Estimator:
    """Common estimator interface for the sweep.

    Subclasses implement estimate_batch on an (N, M) block of noisy
    channels. prepare_scenario runs once per sweep scenario before any of
    its cells and is where calibration (e.g. covariance fitting) belongs.
    The clean argument exists only for harness-validation estimators that
    set needs_clean; honest estimators never see it.
    """

    name: str = "estimator"
    needs_clean: bool = False

    def prepare_scenario(
        self, array_cfg: ArrayConfig, scenario: ScenarioSpec, seed: int
    ) -> None:
        pass

    def estimate_batch(
        self, x: np.ndarray, noise_var: float, clean: np.ndarray | None = None
    ) -> np.ndarray:
        raise NotImplementedError

    def estimate(self, obs) -> np.ndarray:
        """Single-observation convenience wrapper."""
        return self.estimate_batch(obs.x_noisy[None, :], obs.noise_var)[0]


class LsEstimator(Estimator):
    """Least squares under a unit pilot: the observation itself."""

    name = "ls"

    def estimate_batch(self, x, noise_var, clean=None):
        return x.copy()


class MmseEstimator(Estimator):
    """Linear MMSE with a covariance calibrated per scenario.

    The filter is refit in prepare_scenario from calibration_samples
    fresh channel draws of that scenario, so the covariance is matched to
    the distribution under test without reusing any evaluation draw.
    """

    name = "mmse"

    def __init__(self, calibration_samples: int = 10_000):
        if calibration_samples < 2:
            raise ValueError("calibration_samples must be >= 2")
        self.calibration_samples = calibration_samples
        self.filter: MmseFilter | None = None

    def prepare_scenario(self, array_cfg, scenario, seed):
        chans = sample_channels(array_cfg, scenario, seed, self.calibration_samples)
        self.filter = fit_mmse(chans)

    def estimate_batch(self, x, noise_var, clean=None):
        if self.filter is None:
            raise RuntimeError("MMSE estimator used before prepare_scenario()")
        return self.filter.estimate_batch(x, noise_var)


class ModelEstimator(Estimator):
    """Trained denoiser wrapped as an estimator; inference is chunked."""

    def __init__(self, model: TrainedModel, name: str | None = None,
                 batch_size: int = 512):
        self.model = model
        self.name = name if name is not None else model.config.variant
        self.batch_size = batch_size

    def estimate_batch(self, x, noise_var, clean=None):
        cfg = self.model.config
        if x.shape[1] != cfg.num_antennas:
            raise ValueError(
                f"channel length {x.shape[1]} does not match model "
                f"antennas {cfg.num_antennas}"
            )
        was_eval = self.model.is_eval
        self.model.eval_mode()
        try:
            parts = []
            for start in range(0, x.shape[0], self.batch_size):
                imgs = vecs_to_images(
                    x[start : start + self.batch_size],
                    cfg.image_height, cfg.image_width, dtype=self.model.dtype,
                )
                noise_hat, _ = model_forward(self.model, imgs)
                parts.append(images_to_vecs(imgs - noise_hat))
        finally:
            if not was_eval:
                self.model.train_mode()
        return np.concatenate(parts, axis=0)


class OracleEstimator(Estimator):
    """Returns the true channel; validates the harness, never competes."""

    name = "oracle"
    needs_clean = True

    def estimate_batch(self, x, noise_var, clean=None):
        if clean is None:
            raise ValueError("oracle estimator needs the clean channels")
        return clean.copy()


@dataclass(frozen=True)
class SweepScenario:
    """One labeled channel distribution in a sweep grid."""

    label: str
    spec: ScenarioSpec
    lf_label: str
    ln_label: str


def parse_count(token: str):
    """Path-count token: '3' fixed, 'u0-10' uniform inclusive range."""
    token = token.strip()
    if token.startswith("u"):
        lo, sep, hi = token[1:].partition("-")
        if not sep or not lo.isdigit() or not hi.isdigit():
            raise ValueError(f"bad count range {token!r}, expected like 'u0-10'")
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise ValueError(f"bad count range {token!r}: {hi} < {lo}")
        return (lo, hi)
    if not token.isdigit():
        raise ValueError(f"bad path count {token!r}, expected digits or 'uLO-HI'")
    return int(token)


def _count_label(count) -> str:
    return str(count) if isinstance(count, int) else f"u{count[0]}-{count[1]}"


def _make_scenario(family: str, far, near, **spec_kwargs) -> SweepScenario:
    spec = ScenarioSpec(far_paths=far, near_paths=near, **spec_kwargs)
    lf, ln = _count_label(far), _count_label(near)
    if family == "far":
        label = f"far:{lf}"
    elif family == "near":
        label = f"near:{ln}"
    else:
        label = f"hybrid:{lf}+{ln}"
    return SweepScenario(label=label, spec=spec, lf_label=lf, ln_label=ln)


def parse_scenario_grid(text: str, **spec_kwargs) -> list[SweepScenario]:
    """Scenario grid grammar, ';'-separated families:

        far:3,5,7          far-field only, one scenario per count
        near:3,5,7         near-field only
        hybrid:6+3         fixed split
        hybrid:u0-10+u0-10 uniform counts, resampled if both draw zero

    spec_kwargs pass through to every ScenarioSpec (angle/distance ranges,
    gain variance).
    """
    scenarios = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            raise ValueError("empty scenario entry in grid")
        family, sep, rest = chunk.partition(":")
        family = family.strip()
        if not sep or family not in ("far", "near", "hybrid"):
            raise ValueError(
                f"bad scenario {chunk!r}, expected far:.., near:.. or hybrid:.."
            )
        for token in rest.split(","):
            token = token.strip()
            if family == "hybrid":
                lf_tok, sep2, ln_tok = token.partition("+")
                if not sep2:
                    raise ValueError(
                        f"bad hybrid entry {token!r}, expected like '6+3'"
                    )
                far, near = parse_count(lf_tok), parse_count(ln_tok)
            elif family == "far":
                far, near = parse_count(token), 0
            else:
                far, near = 0, parse_count(token)
            scenarios.append(_make_scenario(family, far, near, **spec_kwargs))
    labels = [s.label for s in scenarios]
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate scenarios in grid: {labels}")
    return scenarios


def parse_snr_grid(text: str) -> list[float]:
    """SNR grammar: 'start:step:stop' (inclusive) or a comma list in dB."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"bad snr range {text!r}, expected start:step:stop")
        start, step, stop = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise ValueError(f"bad snr range {text!r}: need step > 0, stop >= start")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [start + i * step for i in range(count)]
    values = [float(p) for p in text.split(",") if p.strip()]
    if not values:
        raise ValueError("empty snr grid")
    return values


@dataclass(frozen=True)
class CellResult:
    """One (scenario, snr, estimator) outcome; error is None on success."""

    scenario: str
    lf_label: str
    ln_label: str
    snr_db: float
    estimator: str
    nmse: float
    n_samples: int
    error: str | None = None


@dataclass
class NmseReport:
    """Sweep results plus the hashed config that produced them."""

    cells: list[CellResult]
    config: dict
    fingerprint: str

    def cell(self, scenario: str, snr_db: float, estimator: str) -> CellResult:
        for c in self.cells:
            if (c.scenario == scenario and c.snr_db == snr_db
                    and c.estimator == estimator):
                return c
        raise KeyError(f"no cell ({scenario!r}, {snr_db}, {estimator!r})")

    def column(self, scenario: str, estimator: str) -> list[float]:
        """NMSE values for one estimator on one scenario, in snr order."""
        vals = [c.nmse for c in self.cells
                if c.scenario == scenario and c.estimator == estimator]
        if not vals:
            raise KeyError(f"no cells for ({scenario!r}, {estimator!r})")
        return vals

    def to_csv(self, path=None) -> str:
        lines = ["scenario,L_f,L_n,snr_db,estimator,nmse,n_samples"]
        for c in self.cells:
            lines.append(
                f"{c.scenario},{c.lf_label},{c.ln_label},{c.snr_db:g},"
                f"{c.estimator},{c.nmse!r},{c.n_samples}"
            )
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    def to_json(self, path=None) -> str:
        payload = {
            "fingerprint": self.fingerprint,
            "config": self.config,
            "cells": [
                {
                    "scenario": c.scenario,
                    "L_f": c.lf_label,
                    "L_n": c.ln_label,
                    "snr_db": c.snr_db,
                    "estimator": c.estimator,
                    "nmse": None if not np.isfinite(c.nmse) else c.nmse,
                    "n_samples": c.n_samples,
                    "error": c.error,
                }
                for c in self.cells
            ],
        }
        text = json.dumps(payload, indent=2)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text


def _config_fingerprint(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def run_sweep(
    estimators: list[Estimator],
    array_cfg: ArrayConfig,
    scenarios: list[SweepScenario],
    snrs_db: list[float],
    samples_per_cell: int,
    seed: int,
) -> NmseReport:
    """Fill every (scenario, snr, estimator) cell with an aggregate NMSE.

    Within a cell all estimators see identical channel and noise draws
    (channel seed mix(cell_seed, 2i), noise seed mix(cell_seed, 2i+1)).
    An estimator that raises is recorded as a failed cell (nmse NaN,
    error string kept) and the sweep continues. Deterministic given seed.
    """
    if samples_per_cell < 1:
        raise ValueError("samples_per_cell must be >= 1")
    names = [e.name for e in estimators]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate estimator names: {names}")
    if not estimators or not scenarios or not snrs_db:
        raise ValueError("estimators, scenarios and snrs_db must be non-empty")

    config = {
        "num_antennas": array_cfg.num_antennas,
        "wavelength": array_cfg.wavelength,
        "spacing": array_cfg.spacing,
        "scenarios": [s.label for s in scenarios],
        "snrs_db": [float(s) for s in snrs_db],
        "samples_per_cell": int(samples_per_cell),
        "seed": int(seed),
        "estimators": names,
    }
    cells: list[CellResult] = []

    for s_idx, scen in enumerate(scenarios):
        prep_seed = mix_seed(seed, 10_000_000 + s_idx)
        prep_errors: dict[str, str] = {}
        for est in estimators:
            try:
                est.prepare_scenario(array_cfg, scen.spec, prep_seed)
            except Exception as exc:
                prep_errors[est.name] = f"prepare_scenario: {exc!r}"

        for j, snr_db in enumerate(snrs_db):
            cell_seed = mix_seed(seed, s_idx * len(snrs_db) + j)
            clean = np.stack([
                sample_channel(array_cfg, scen.spec, mix_seed(cell_seed, 2 * i)).h
                for i in range(samples_per_cell)
            ])
            noise_var = snr_to_noise_var(snr_db)
            x = clean.copy()
            if noise_var > 0.0:
                scale = np.sqrt(noise_var / 2.0)
                for i in range(samples_per_cell):
                    rng = make_rng(mix_seed(cell_seed, 2 * i + 1))
                    n = clean.shape[1]
                    x[i] += scale * (rng.standard_normal(n)
                                     + 1j * rng.standard_normal(n))

            for est in estimators:
                base = dict(
                    scenario=scen.label, lf_label=scen.lf_label,
                    ln_label=scen.ln_label, snr_db=float(snr_db),
                    estimator=est.name, n_samples=samples_per_cell,
                )
                if est.name in prep_errors:
                    cells.append(CellResult(
                        nmse=float("nan"), error=prep_errors[est.name], **base))
                    continue
                try:
                    h_est = est.estimate_batch(
                        x, noise_var, clean=clean if est.needs_clean else None)
                    value = nmse(clean, h_est)
                except Exception as exc:
                    cells.append(CellResult(
                        nmse=float("nan"), error=repr(exc), **base))
                else:
                    cells.append(CellResult(nmse=value, error=None, **base))

    return NmseReport(
        cells=cells, config=config, fingerprint=_config_fingerprint(config)
    )
