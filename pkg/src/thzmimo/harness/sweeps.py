"""
Seeded Monte Carlo sweeps over SNR producing fixed-schema result tables.

Every trial owns a generator seeded from ``(seed, trial_index)``; the
trial's channel and unit-variance noise are drawn once and rescaled for
each SNR, so curves at different SNRs share random numbers. Results are
merged in trial order, which makes the emitted CSV independent of the
worker count.
"""

from __future__ import annotations

import csv
import functools
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Tuple

import numpy as np

from .. import __version__
from ..absorption import MediumConditions, load_line_catalog, load_sample_materials
from ..beamspace import (
    beamspace_to_channel,
    build_dictionary,
    channel_to_beamspace,
    design_sounding,
    make_grid,
    quantize_phases,
    sensing_operator,
    sounding_noise,
    unvec,
    vec,
)
from ..channel import ChannelConfig, generate_channel
from ..errors import ConfigError, ThzError
from ..estimators import (
    BlConfig,
    OmpConfig,
    bcrlb,
    estimate_bl,
    estimate_ls,
    estimate_mbl,
    estimate_mmse,
    estimate_omp,
    nmse,
    oracle_gamma,
)
from ..transceiver import ase, ber_qpsk, design_from_beamspace, digital_design
from .config import INF_BITS

__all__ = [
    "CSV_COLUMNS",
    "ResultRow",
    "ResultTable",
    "Setup",
    "build_setup",
    "trial_seed",
    "quantize_uniform",
    "calibrate_adc_step",
    "run_nmse_sweep",
    "run_ase_sweep",
    "run_ber_sweep",
    "run_adc_ablation",
]

CSV_COLUMNS = ("experiment", "estimator", "snr_db", "metric", "mean", "stderr",
               "trials", "failures", "seed", "version")
ASE_DESIGNS = ("digital_perfect", "hybrid_perfect", "hybrid_bl", "hybrid_omp")
BER_DESIGNS = ("hybrid_perfect", "hybrid_bl", "hybrid_omp")
_TRIAL_ERRORS = (ThzError, np.linalg.LinAlgError, FloatingPointError)


# ---------------------------------------------------------------------------
# quantizer


def quantize_uniform(y, bits, step):
    """Uniform mid-point quantizer applied to real and imaginary parts.

    Thresholds are u_i = (-N_q/2 + i) step for N_q = 2^bits and the output
    levels are the cell midpoints; inputs beyond the outer thresholds map
    to the extreme levels. ``bits = inf`` returns the input unchanged.
    """
    if bits == INF_BITS or bits is None:
        return y
    if not step > 0:
        raise ConfigError("quantizer step must be positive")
    if bits < 1:
        raise ConfigError("quantizer needs at least one bit")
    nq = 2 ** int(bits)

    def q(x):
        cell = np.clip(np.floor(x / step), -nq // 2, nq // 2 - 1)
        return (cell + 0.5) * step

    y = np.asarray(y)
    if np.iscomplexobj(y):
        return q(y.real) + 1j * q(y.imag)
    return q(y)


# ---------------------------------------------------------------------------
# result table


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    estimator: str
    snr_db: float
    metric: str
    mean: float
    stderr: float
    trials: int
    failures: int
    seed: int
    version: str

    def as_strings(self):
        return [self.experiment, self.estimator, repr(float(self.snr_db)), self.metric,
                repr(float(self.mean)), repr(float(self.stderr)), str(self.trials),
                str(self.failures), str(self.seed), self.version]


@dataclass
class ResultTable:
    """Aggregated rows plus per-trial samples and run metadata.

    ``samples[(estimator, snr_db, metric)]`` lists the per-trial values in
    trial order, with ``None`` for failed trials. Only ``rows`` reach the
    CSV.
    """

    rows: List[ResultRow]
    samples: Dict[Tuple[str, float, str], list] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow(r.as_strings())
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def metadata_json(self):
        return json.dumps(self.metadata, sort_keys=True, indent=2)

    def get(self, estimator, snr_db, metric):
        for r in self.rows:
            if r.estimator == estimator and r.snr_db == snr_db and r.metric == metric:
                return r
        raise KeyError((estimator, snr_db, metric))

    def mean(self, estimator, snr_db, metric):
        return self.get(estimator, snr_db, metric).mean

    def values(self, estimator, snr_db, metric):
        return self.samples[(estimator, float(snr_db), metric)]


def _aggregate(cfg, trial_results, metadata):
    order: List[Tuple[str, float, str]] = []
    samples: Dict[Tuple[str, float, str], list] = {}
    for res in trial_results:
        for key, val in res:
            if key not in samples:
                samples[key] = []
                order.append(key)
            samples[key].append(val)
    rows = []
    for key in order:
        vals = [v for v in samples[key] if v is not None]
        n = len(vals)
        fails = len(samples[key]) - n
        if n:
            arr = np.asarray(vals, dtype=float)
            mean = float(np.mean(arr))
            stderr = float(np.std(arr, ddof=1) / math.sqrt(n)) if n > 1 else math.nan
        else:
            mean = stderr = math.nan
        rows.append(ResultRow(cfg.name, key[0], key[1], key[2], mean, stderr, n, fails,
                              cfg.seed, __version__))
    return ResultTable(rows, samples, metadata)


# ---------------------------------------------------------------------------
# shared per-run state


@dataclass(frozen=True)
class Setup:
    channel: ChannelConfig
    k_abs: float
    A_T: np.ndarray
    A_R: np.ndarray
    design: object
    Phi_tilde: np.ndarray
    Psi: np.ndarray
    Phi: np.ndarray
    R_v_unit: np.ndarray


def _channel_config(cfg):
    ch = cfg.channel
    materials = load_sample_materials()
    try:
        surfaces = tuple(materials[name] for name in ch.surfaces)
    except KeyError as exc:
        raise ConfigError(f"unknown surface {exc.args[0]!r}; known: {sorted(materials)}") from None
    catalog = load_line_catalog(ch.catalog) if ch.catalog else None
    return ChannelConfig(
        f_hz=ch.f_hz, d_m=ch.d_m, n_tx=cfg.system.n_tx, n_rx=cfg.system.n_rx,
        n_nlos=ch.n_nlos, n_ray=ch.n_ray, reflection_orders=ch.reflection_orders,
        gains_db=ch.gains_db, gain_convention=ch.gain_convention, surfaces=surfaces,
        k_abs=ch.k_abs, catalog=catalog,
        medium=MediumConditions(pressure=ch.pressure_atm, temperature=ch.temperature_k),
    )


@functools.lru_cache(maxsize=8)
def build_setup(cfg):
    """Geometry, dictionaries, sounding design and sensing operator of a run."""
    s = cfg.system
    chan = _channel_config(cfg)
    k_abs = chan.absorption()
    tx, rx = chan.geometries()
    A_T = build_dictionary(make_grid(s.g_tx), tx)
    A_R = build_dictionary(make_grid(s.g_rx), rx)
    design = design_sounding(s.n_tx, s.n_rx, s.n_rf, s.m_tx, s.m_rx, mixing=cfg.sounding_mixing)
    if cfg.aps_bits is not None:
        design = replace(design, F_RF=quantize_phases(design.F_RF, cfg.aps_bits),
                         W_RF=quantize_phases(design.W_RF, cfg.aps_bits))
    op = sensing_operator(design, A_T, A_R, 1.0)
    return Setup(chan, k_abs, A_T, A_R, design, op.Phi_tilde, op.Psi, op.Phi, op.R_v)


def trial_seed(seed, trial_index):
    """Per-trial seed sequence derived from (seed, trial_index)."""
    return np.random.SeedSequence(seed, spawn_key=(0, int(trial_index)))


def _calibration_seed(seed):
    return np.random.SeedSequence(seed, spawn_key=(1,))


def _snr_to_var(snr_db):
    return 10.0 ** (-snr_db / 10.0)


def _draw(cfg, setup, rng, n_blocks):
    H = generate_channel(setup.channel, rng, k_abs=setup.k_abs).H
    noise = sounding_noise(setup.design, rng, n_blocks)
    d = setup.design
    clean = vec(d.combiner.conj().T @ H @ d.precoder)
    return H, clean, noise


def _omp_config(cfg, s2):
    return OmpConfig(epsilon_t=s2, max_iters=cfg.omp_iteration_cap, normalize=cfg.omp_normalize)


def _bl_config(cfg):
    return BlConfig(epsilon=cfg.bl_epsilon, k_max=cfg.bl_k_max, gamma_floor=cfg.bl_gamma_floor)


def _guard(fn):
    try:
        return fn()
    except _TRIAL_ERRORS:
        return None


# ---------------------------------------------------------------------------
# trial bodies


def _estimation_rows(cfg, setup, H, hb_true, Y, s2, snr, suffix, out):
    """Run the configured estimators on one SNR point; append (key, value)."""
    y = Y[:, 0]
    R_v = s2 * setup.R_v_unit
    h_norm2 = float(np.linalg.norm(H) ** 2)
    nr, nt = H.shape

    def to_H(hb):
        return beamspace_to_channel(hb, setup.A_R, setup.A_T)

    for est in cfg.estimators:
        label = est + suffix
        if est == "ls":
            v = _guard(lambda: nmse(unvec(estimate_ls(y, setup.Phi), nr, nt), H))
            out.append(((label, snr, "nmse"), v))
        elif est == "mmse":
            R_h = (h_norm2 / (nr * nt)) * np.eye(nr * nt)
            v = _guard(lambda: nmse(unvec(estimate_mmse(y, setup.Phi, R_h, R_v), nr, nt), H))
            out.append(((label, snr, "nmse"), v))
        elif est == "omp":
            hb = _guard(lambda: estimate_omp(y, setup.Phi_tilde, _omp_config(cfg, s2)).h_b)
            out.append(((label, snr, "nmse"), None if hb is None else nmse(to_H(hb), H)))
            out.append(((label, snr, "mse_beamspace"),
                        None if hb is None else float(np.sum(np.abs(hb - hb_true) ** 2))))
        elif est == "bl":
            res = _guard(lambda: estimate_bl(y, setup.Phi_tilde, R_v, _bl_config(cfg)))
            hb = None if res is None else res[0]
            out.append(((label, snr, "nmse"), None if hb is None else nmse(to_H(hb), H)))
            out.append(((label, snr, "mse_beamspace"),
                        None if hb is None else float(np.sum(np.abs(hb - hb_true) ** 2))))
        elif est == "mbl":
            res = _guard(lambda: estimate_mbl(Y, setup.Phi_tilde, R_v, _bl_config(cfg)))
            if res is None:
                n_v = mse_v = None
            else:
                Hb = res[0]
                n_v = float(np.mean([nmse(to_H(Hb[:, m]), H) for m in range(Hb.shape[1])]))
                mse_v = float(np.mean(np.sum(np.abs(Hb - hb_true[:, None]) ** 2, axis=0)))
            out.append(((label, snr, "nmse"), n_v))
            out.append(((label, snr, "mse_beamspace"), mse_v))


def _nmse_trial(cfg, quantizers, with_bcrlb, t):
    setup = build_setup(cfg)
    rng = np.random.default_rng(trial_seed(cfg.seed, t))
    n_blocks = cfg.mbl_M if "mbl" in cfg.estimators else 1
    H, clean, noise = _draw(cfg, setup, rng, n_blocks)
    hb_true = channel_to_beamspace(H, setup.A_R, setup.A_T)
    out = []
    for snr in cfg.snr_grid:
        s2 = _snr_to_var(snr)
        Y = clean[:, None] + math.sqrt(s2) * noise
        for suffix, quantize in quantizers(snr):
            _estimation_rows(cfg, setup, H, hb_true, quantize(Y), s2, snr, suffix, out)
        if with_bcrlb:
            res = _guard(lambda: bcrlb(setup.Phi_tilde, s2 * setup.R_v_unit,
                                       oracle_gamma(hb_true, cfg.bl_gamma_floor), setup.Psi))
            h_norm2 = float(np.linalg.norm(H) ** 2)
            out.append((("bcrlb", snr, "nmse"),
                        None if res is None else res.mse_bound_channel / h_norm2))
            out.append((("bcrlb", snr, "mse_beamspace"),
                        None if res is None else res.mse_bound_beamspace))
    return out


def _designs(cfg, setup, H, hb_true, y, s2, names):
    """Transceiver designs keyed by row label (None where the design failed)."""
    ns, nrf = cfg.n_streams, cfg.system.n_rf
    # "true": the receiver's combiner sees the true channel; F_opt stays estimate-driven
    H_comb = H if cfg.design_csi == "true" else None
    designs = {}
    if "digital_perfect" in names:
        designs["digital_perfect"] = _guard(lambda: digital_design(H, ns, s2, cfg.p_t))
    designs["hybrid_perfect"] = _guard(lambda: design_from_beamspace(
        hb_true, setup.A_T, setup.A_R, nrf, ns, s2, cfg.p_t, H_design=H))
    hb_bl = _guard(lambda: estimate_bl(y, setup.Phi_tilde, s2 * setup.R_v_unit, _bl_config(cfg))[0])
    hb_omp = _guard(lambda: estimate_omp(y, setup.Phi_tilde, _omp_config(cfg, s2)).h_b)
    for label, hb in (("hybrid_bl", hb_bl), ("hybrid_omp", hb_omp)):
        designs[label] = None if hb is None else _guard(lambda: design_from_beamspace(
            hb, setup.A_T, setup.A_R, nrf, ns, s2, cfg.p_t, H_combiner=H_comb))
    return {k: designs[k] for k in names}


def _ase_trial(cfg, t):
    setup = build_setup(cfg)
    rng = np.random.default_rng(trial_seed(cfg.seed, t))
    H, clean, noise = _draw(cfg, setup, rng, 1)
    hb_true = channel_to_beamspace(H, setup.A_R, setup.A_T)
    out = []
    for snr in cfg.snr_grid:
        s2 = _snr_to_var(snr)
        y = clean + math.sqrt(s2) * noise[:, 0]
        for label, d in _designs(cfg, setup, H, hb_true, y, s2, ASE_DESIGNS).items():
            out.append(((label, snr, "ase"), None if d is None else _guard(lambda: ase(H, d, s2))))
    return out


def _ber_trial(cfg, t):
    setup = build_setup(cfg)
    seq = trial_seed(cfg.seed, t)
    rng = np.random.default_rng(seq)
    H, clean, noise = _draw(cfg, setup, rng, 1)
    hb_true = channel_to_beamspace(H, setup.A_R, setup.A_T)
    data_seed = seq.spawn(1)[0]
    out = []
    for snr in cfg.snr_grid:
        s2 = _snr_to_var(snr)
        y = clean + math.sqrt(s2) * noise[:, 0]
        for label, d in _designs(cfg, setup, H, hb_true, y, s2, BER_DESIGNS).items():
            # same symbols and unit noise for every design and SNR
            v = None if d is None else _guard(lambda: ber_qpsk(
                H, d, s2, cfg.ber_symbols, np.random.default_rng(data_seed)))
            out.append(((label, snr, "ber"), v))
    return out


def _no_quantizer(snr):
    return [("", lambda Y: Y)]


# ---------------------------------------------------------------------------
# drivers


def _run(cfg, fn):
    trials = range(cfg.first_trial, cfg.first_trial + cfg.n_trials)
    if cfg.workers > 1 and cfg.n_trials > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(fn, trials, chunksize=max(1, cfg.n_trials // (4 * cfg.workers))))
    return [fn(t) for t in trials]


def _metadata(cfg, kind, **extra):
    setup = build_setup(cfg)
    meta = {"kind": kind, "config": cfg.to_dict(), "k_abs_per_m": setup.k_abs,
            "version": __version__}
    meta.update(extra)
    return meta


def run_nmse_sweep(cfg):
    """NMSE (and beamspace MSE) per estimator and SNR, plus BCRLB rows."""
    cfg.validate()
    fn = functools.partial(_nmse_trial, cfg, _no_quantizer, cfg.include_bcrlb)
    return _aggregate(cfg, _run(cfg, fn), _metadata(cfg, "nmse"))


def run_ase_sweep(cfg):
    """ASE of the fully-digital and hybrid designs under perfect, BL and OMP CSI."""
    cfg.validate()
    return _aggregate(cfg, _run(cfg, functools.partial(_ase_trial, cfg)), _metadata(cfg, "ase"))


def run_ber_sweep(cfg):
    """Uncoded QPSK BER of the hybrid designs."""
    cfg.validate()
    return _aggregate(cfg, _run(cfg, functools.partial(_ber_trial, cfg)), _metadata(cfg, "ber"))


def calibrate_adc_step(cfg, bits, n_draws=100):
    """Quantizer step 2 r / 2^bits from a noiseless calibration batch.

    ``r`` is the mean, over ``n_draws`` channel draws, of the largest
    real or imaginary magnitude in the noiseless pilot vector. The draws
    use a stream separate from every trial.
    """
    if bits == INF_BITS:
        return None
    setup = build_setup(cfg)
    rng = np.random.default_rng(_calibration_seed(cfg.seed))
    d = setup.design
    peaks = []
    for _ in range(n_draws):
        H = generate_channel(setup.channel, rng, k_abs=setup.k_abs).H
        y = vec(d.combiner.conj().T @ H @ d.precoder)
        peaks.append(max(np.abs(y.real).max(), np.abs(y.imag).max()))
    return 2.0 * float(np.mean(peaks)) / 2 ** int(bits)


def _bits_label(bits):
    return "" if bits == INF_BITS else f"@{int(bits)}bit"


class _AdcQuantizers:
    # picklable for the process pool
    def __init__(self, plan):
        self.plan = plan

    def __call__(self, snr):
        return [(_bits_label(b), functools.partial(quantize_uniform, bits=b, step=s))
                for b, s in self.plan]


def run_adc_ablation(cfg):
    """NMSE sweep with the pilot vector quantized by b-bit ADCs.

    Rows for finite ``b`` carry the estimator label ``<name>@<b>bit``;
    the ``inf`` rows use the plain estimator names and equal the
    unquantized sweep.
    """
    cfg.validate()
    if cfg.adc_full_scale is not None:
        plan = [(b, None if b == INF_BITS else 2.0 * cfg.adc_full_scale / 2 ** int(b))
                for b in cfg.adc_bits]
        rule = "fixed-full-scale"
    else:
        plan = [(b, calibrate_adc_step(cfg, b)) for b in cfg.adc_bits]
        rule = "noiseless-calibration"
    steps = {("inf" if b == INF_BITS else str(int(b))): s for b, s in plan}
    fn = functools.partial(_nmse_trial, cfg, _AdcQuantizers(plan), False)
    meta = _metadata(cfg, "adc", adc_steps=steps, adc_step_rule=rule)
    return _aggregate(cfg, _run(cfg, fn), meta)
